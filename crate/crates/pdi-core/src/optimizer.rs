//! Difference-of-convex solver for the interval ERM: initialization from
//! indirect rules by internal division, a subgradient method for the convex
//! subproblems, and the outer DC loop for the joint and constant-width
//! parameterizations.

use crate::data::{Dataset, HyperParams, IntervalRule, SolverControls};
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::linalg::{solve_jittered_once, SymMatrix};
use crate::loss::{LossContext, Parameterization, PreparedObjective};

/// Per-fit diagnostics: the accepted objective values (non-increasing), the
/// convergence flag, and subproblem iteration counts.
#[derive(Debug, Clone, Default)]
pub struct DcTrace {
    pub objectives: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub subproblem_iters: Vec<usize>,
}

/// Initial coefficients for the joint parameterization.
#[derive(Debug, Clone)]
pub struct InitCoefficients {
    pub beta_l0: f64,
    pub beta_l: Vec<f64>,
    pub beta_u0: f64,
    pub beta_u: Vec<f64>,
}

/// Internal-division initialization: pulls each indirect bound toward the
/// grand mean by ratio `p`, then solves the two kernel interpolation
/// systems `target = beta_0 + K beta` with a 1e-8 diagonal jitter; the
/// intercept absorbs the target mean and `K beta` fits the centered part.
pub fn init_internal_division(
    indirect_bounds: &[(f64, f64)],
    p: f64,
    k: &GramMatrix,
) -> Result<InitCoefficients> {
    init_internal_division_stabilized(indirect_bounds, p, k, 1e-8)
}

/// As [`init_internal_division`], with the diagonal stabilizer chosen by
/// the caller. Fits pass their own ridge weight here: solving
/// `(K + lambda I) beta = target` is the warm start consistent with the
/// objective's own penalty, and it degrades to exact interpolation as
/// `lambda` vanishes.
pub fn init_internal_division_stabilized(
    indirect_bounds: &[(f64, f64)],
    p: f64,
    k: &GramMatrix,
    stabilizer: f64,
) -> Result<InitCoefficients> {
    let n = indirect_bounds.len();
    if n != k.n() {
        return Err(Error::LengthMismatch {
            expected: k.n(),
            got: n,
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidHyperParam("p must be in [0,1]".into()));
    }
    if indirect_bounds
        .iter()
        .any(|(l, u)| !l.is_finite() || !u.is_finite())
    {
        return Err(Error::NonFinite {
            index: 0,
            field: "indirect bounds",
        });
    }
    let mean_l = indirect_bounds.iter().map(|b| b.0).sum::<f64>() / n as f64;
    let mean_u = indirect_bounds.iter().map(|b| b.1).sum::<f64>() / n as f64;
    let target_l: Vec<f64> = indirect_bounds
        .iter()
        .map(|b| p * b.0 + (1.0 - p) * mean_l)
        .collect();
    let target_u: Vec<f64> = indirect_bounds
        .iter()
        .map(|b| p * b.1 + (1.0 - p) * mean_u)
        .collect();

    let solve_block = |targets: &[f64], mean: f64| -> Result<Vec<f64>> {
        let centered: Vec<f64> = targets.iter().map(|t| t - mean).collect();
        if centered.iter().all(|c| c.abs() < 1e-14) {
            return Ok(vec![0.0; n]);
        }
        let mut km = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                km.data[i * n + j] = k.get(i, j);
            }
        }
        // Near-duplicate anchor rows make K numerically singular and an
        // exact interpolation blows the coefficient norm up; escalate the
        // jitter until the solution has a sane magnitude.
        let refine = if stabilizer <= 1e-6 { 2 } else { 0 };
        let ladder = [
            (stabilizer, refine),
            (stabilizer * 1e2, 0usize),
            (stabilizer * 1e4, 0),
            (stabilizer * 1e6, 0),
        ];
        let mut fallback: Option<Vec<f64>> = None;
        for (jitter, refine) in ladder {
            if let Ok(x) = solve_jittered_once(&km, &centered, jitter, refine) {
                let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if norm <= 1e3 {
                    return Ok(x);
                }
                fallback = Some(x);
            }
        }
        fallback.ok_or(Error::SolveFailure)
    };
    Ok(InitCoefficients {
        beta_l0: mean_l,
        beta_l: solve_block(&target_l, mean_l)?,
        beta_u0: mean_u,
        beta_u: solve_block(&target_u, mean_u)?,
    })
}

/// Outcome of one convex subproblem solve.
#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when no improving step was found; the start point is returned.
    pub descended: bool,
}

/// Coefficient vector together with the cached kernel products `K beta`,
/// so bound evaluations and ridge terms cost O(n) instead of a matvec.
struct IterState {
    theta: Vec<f64>,
    v_l: Vec<f64>,
    v_u: Vec<f64>,
}

impl IterState {
    fn new(prep: &PreparedObjective, theta: Vec<f64>) -> Self {
        let n = prep.n();
        let (v_l, v_u) = match prep.parameterization {
            Parameterization::Joint => {
                prep.k.matvec2(&theta[1..n + 1], &theta[n + 2..2 * n + 2])
            }
            Parameterization::ConstantWidth => {
                let v = prep.k.matvec(&theta[1..n + 1]);
                (v.clone(), v)
            }
        };
        Self { theta, v_l, v_u }
    }

    #[inline]
    fn bounds_at(&self, prep: &PreparedObjective, i: usize) -> (f64, f64) {
        let n = prep.n();
        match prep.parameterization {
            Parameterization::Joint => (
                self.theta[0] + self.v_l[i],
                self.theta[n + 1] + self.v_u[i],
            ),
            Parameterization::ConstantWidth => {
                let ell = self.theta[0] + self.v_l[i];
                (ell, ell + self.theta[n + 1])
            }
        }
    }

    /// `Q_plus(theta) - lin . theta`, all from cached products.
    fn f_value(&self, prep: &PreparedObjective, lin: &[f64]) -> f64 {
        let n = prep.n();
        let mut loss = 0.0;
        for (i, row) in prep.rows.iter().enumerate() {
            let (ell, u) = self.bounds_at(prep, i);
            loss += row.surrogate_parts(ell, u).0;
        }
        loss /= n as f64;
        let ridge = match prep.parameterization {
            Parameterization::Joint => {
                let rl: f64 = self.theta[1..n + 1]
                    .iter()
                    .zip(&self.v_l)
                    .map(|(a, b)| a * b)
                    .sum();
                let ru: f64 = self.theta[n + 2..2 * n + 2]
                    .iter()
                    .zip(&self.v_u)
                    .map(|(a, b)| a * b)
                    .sum();
                prep.lambda * (rl + ru)
            }
            Parameterization::ConstantWidth => {
                let r: f64 = self.theta[1..n + 1]
                    .iter()
                    .zip(&self.v_l)
                    .map(|(a, b)| a * b)
                    .sum();
                prep.lambda * r
            }
        };
        let kappa = if prep.kappa == 0.0 {
            0.0
        } else {
            match prep.parameterization {
                Parameterization::Joint => {
                    prep.kappa
                        * (0..n)
                            .map(|i| (self.theta[1 + i] - self.theta[n + 2 + i]).max(0.0))
                            .sum::<f64>()
                }
                Parameterization::ConstantWidth => 0.0,
            }
        };
        let linear: f64 = lin.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
        loss + ridge + kappa - linear
    }

    /// Full subgradient of `Q_plus - lin . theta` plus the kernel products
    /// of its coefficient blocks (for cheap state updates along the step).
    fn f_subgrad(&self, prep: &PreparedObjective, lin: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = prep.n();
        let nf = n as f64;
        let mut g_l = vec![0.0; n];
        let mut g_u = vec![0.0; n];
        for (i, row) in prep.rows.iter().enumerate() {
            let (ell, u) = self.bounds_at(prep, i);
            let ((dpl, dpu), _) = row.parts_subgrad(ell, u);
            g_l[i] = dpl;
            g_u[i] = dpu;
        }
        match prep.parameterization {
            Parameterization::Joint => {
                let (kg_l, kg_u) = prep.k.matvec2(&g_l, &g_u);
                let mut grad = vec![0.0; 2 * n + 2];
                grad[0] = g_l.iter().sum::<f64>() / nf - lin[0];
                grad[n + 1] = g_u.iter().sum::<f64>() / nf - lin[n + 1];
                for i in 0..n {
                    grad[1 + i] = kg_l[i] / nf + 2.0 * prep.lambda * self.v_l[i] - lin[1 + i];
                    grad[n + 2 + i] =
                        kg_u[i] / nf + 2.0 * prep.lambda * self.v_u[i] - lin[n + 2 + i];
                }
                if prep.kappa != 0.0 {
                    for i in 0..n {
                        if self.theta[1 + i] - self.theta[n + 2 + i] >= 0.0 {
                            grad[1 + i] += prep.kappa;
                            grad[n + 2 + i] -= prep.kappa;
                        }
                    }
                }
                let (w_l, w_u) =
                    prep.k.matvec2(&grad[1..n + 1], &grad[n + 2..2 * n + 2]);
                (grad, w_l, w_u)
            }
            Parameterization::ConstantWidth => {
                let total: Vec<f64> = g_l.iter().zip(&g_u).map(|(a, b)| a + b).collect();
                let kg = prep.k.matvec(&total);
                let mut grad = vec![0.0; n + 2];
                grad[0] = total.iter().sum::<f64>() / nf - lin[0];
                grad[n + 1] = g_u.iter().sum::<f64>() / nf - lin[n + 1];
                for i in 0..n {
                    grad[1 + i] = kg[i] / nf + 2.0 * prep.lambda * self.v_l[i] - lin[1 + i];
                }
                let w = prep.k.matvec(&grad[1..n + 1]);
                (grad, w.clone(), w)
            }
        }
    }

    /// The state after a step of size `eta` along `-grad`, reusing the
    /// kernel products of the gradient blocks.
    fn stepped(
        &self,
        prep: &PreparedObjective,
        grad: &[f64],
        w_l: &[f64],
        w_u: &[f64],
        eta: f64,
    ) -> IterState {
        let n = prep.n();
        let mut theta: Vec<f64> = self
            .theta
            .iter()
            .zip(grad)
            .map(|(x, g)| x - eta * g)
            .collect();
        if prep.parameterization == Parameterization::ConstantWidth && theta[n + 1] < 0.0 {
            theta[n + 1] = 0.0;
        }
        let v_l: Vec<f64> = self.v_l.iter().zip(w_l).map(|(v, w)| v - eta * w).collect();
        let v_u: Vec<f64> = match prep.parameterization {
            Parameterization::Joint => {
                self.v_u.iter().zip(w_u).map(|(v, w)| v - eta * w).collect()
            }
            Parameterization::ConstantWidth => v_l.clone(),
        };
        IterState { theta, v_l, v_u }
    }
}

/// Minimizes `Q_plus(theta) - linearization^T theta` by projected
/// subgradient descent with a decaying step schedule, persistent step-scale
/// adaptation, and best-iterate tracking. The returned point never has a
/// higher objective than the start.
pub fn convex_subproblem(
    prep: &PreparedObjective,
    linearization: &[f64],
    start: &[f64],
    controls: &SolverControls,
) -> Result<SubproblemResult> {
    let dim = prep.param_len();
    if linearization.len() != dim || start.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: linearization.len(),
        });
    }
    let mut state = IterState::new(prep, start.to_vec());
    if prep.parameterization == Parameterization::ConstantWidth && state.theta[dim - 1] < 0.0 {
        state.theta[dim - 1] = 0.0;
    }
    let mut f_cur = state.f_value(prep, linearization);
    let mut best = state.theta.clone();
    let mut f_best = f_cur;

    let mut scale = f64::NAN; // set from the first gradient
    let t0 = 100.0;
    let mut descended = false;
    let mut window_anchor = f_best;
    let mut window = 0usize;
    let mut iterations = 0usize;

    for t in 0..controls.subproblem_iterations {
        iterations = t + 1;
        let (grad, w_l, w_u) = state.f_subgrad(prep, linearization);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        if scale.is_nan() {
            scale = 1.0 / (1.0 + gnorm);
        }
        let schedule = 1.0 / (1.0 + t as f64 / t0);
        let mut accepted = false;
        for _ in 0..60 {
            let eta = scale * schedule;
            let cand = state.stepped(prep, &grad, &w_l, &w_u, eta);
            let f_cand = cand.f_value(prep, linearization);
            if f_cand <= f_cur {
                state = cand;
                f_cur = f_cand;
                if f_cur < f_best {
                    f_best = f_cur;
                    best = state.theta.clone();
                    descended = true;
                }
                scale = (scale * 1.25).min(1e8);
                accepted = true;
                break;
            }
            scale *= 0.5;
            if scale < 1e-18 {
                break;
            }
        }
        if !accepted {
            break;
        }
        window += 1;
        if window >= 20 {
            if window_anchor - f_best < controls.subproblem_window_tol {
                break;
            }
            window_anchor = f_best;
            window = 0;
        }
    }
    Ok(SubproblemResult {
        theta: best,
        objective: f_best,
        iterations,
        descended,
    })
}

fn rebind_eps(
    rows: std::sync::Arc<Vec<crate::loss::RowLoss>>,
    eps: f64,
) -> std::sync::Arc<Vec<crate::loss::RowLoss>> {
    if rows.iter().all(|r| r.eps == eps) {
        rows
    } else {
        std::sync::Arc::new(crate::loss::rows_with_eps(&rows, eps))
    }
}

fn flatten_init(init: &InitCoefficients) -> Vec<f64> {
    let mut theta = Vec::with_capacity(2 * init.beta_l.len() + 2);
    theta.push(init.beta_l0);
    theta.extend_from_slice(&init.beta_l);
    theta.push(init.beta_u0);
    theta.extend_from_slice(&init.beta_u);
    theta
}

fn dc_iterate(
    prep: &PreparedObjective,
    start: Vec<f64>,
    controls: &SolverControls,
) -> (Vec<f64>, DcTrace) {
    let mut theta = start;
    let mut q = prep.q(&theta);
    let mut trace = DcTrace {
        objectives: vec![q],
        ..DcTrace::default()
    };
    for _ in 0..controls.max_dc_iterations {
        let lin = prep.subgrad_q_minus(&theta);
        let sub = match convex_subproblem(prep, &lin, &theta, controls) {
            Ok(s) => s,
            Err(_) => break,
        };
        trace.subproblem_iters.push(sub.iterations);
        trace.iterations += 1;
        let q_new = prep.q(&sub.theta);
        if q_new <= q {
            theta = sub.theta;
        }
        let accepted = q_new.min(q);
        trace.objectives.push(accepted);
        if (q - q_new).abs() < controls.tolerance * (1.0 + q.abs()) || q_new > q {
            trace.converged = true;
            break;
        }
        q = accepted;
    }
    (theta, trace)
}

/// Fits the joint interval rule by the DC algorithm: each outer iteration
/// linearizes `Q_minus` at the current point and solves the convex
/// subproblem warm-started there, which keeps the objective non-increasing.
pub fn dc_fit(
    ds: &Dataset,
    k: &GramMatrix,
    ctx: &LossContext,
    hyper: &HyperParams,
    init: &InitCoefficients,
) -> Result<(IntervalRule, DcTrace)> {
    let rows = std::sync::Arc::new(ds.iter().map(|o| ctx.row(o)).collect::<Result<Vec<_>>>()?);
    dc_fit_from_rows(rows, ds.covariates(), k, hyper, init)
}

/// As [`dc_fit`], with per-row loss caches prepared by the caller (shared
/// across hyperparameter candidates during cross-validation). The caches
/// are rebound to the candidate's surrogate bandwidth when they differ.
pub fn dc_fit_from_rows(
    rows: std::sync::Arc<Vec<crate::loss::RowLoss>>,
    anchors: Vec<Vec<f64>>,
    k: &GramMatrix,
    hyper: &HyperParams,
    init: &InitCoefficients,
) -> Result<(IntervalRule, DcTrace)> {
    hyper.validate()?;
    let rows = rebind_eps(rows, hyper.epsilon);
    let prep =
        PreparedObjective::from_rows(rows, k, hyper.lambda, hyper.kappa, Parameterization::Joint)?;
    let (theta, trace) = dc_iterate(&prep, flatten_init(init), &hyper.solver);
    let n = k.n();
    let rule = IntervalRule {
        beta_l0: theta[0],
        beta_l: theta[1..n + 1].to_vec(),
        beta_u0: theta[n + 1],
        beta_u: theta[n + 2..2 * n + 2].to_vec(),
        anchors,
        gamma: k.gamma(),
        width: None,
    };
    Ok((rule, trace))
}

/// Constant-width variant: shared coefficients plus a nonnegative width,
/// projected to `[0, inf)` after every step.
pub fn dc_fit_constant_width(
    ds: &Dataset,
    k: &GramMatrix,
    ctx: &LossContext,
    hyper: &HyperParams,
    beta_0: f64,
    beta: &[f64],
    width: f64,
) -> Result<(IntervalRule, DcTrace)> {
    let rows = std::sync::Arc::new(ds.iter().map(|o| ctx.row(o)).collect::<Result<Vec<_>>>()?);
    dc_fit_constant_width_from_rows(rows, ds.covariates(), k, hyper, beta_0, beta, width)
}

/// As [`dc_fit_constant_width`], with caller-prepared row caches.
pub fn dc_fit_constant_width_from_rows(
    rows: std::sync::Arc<Vec<crate::loss::RowLoss>>,
    anchors: Vec<Vec<f64>>,
    k: &GramMatrix,
    hyper: &HyperParams,
    beta_0: f64,
    beta: &[f64],
    width: f64,
) -> Result<(IntervalRule, DcTrace)> {
    hyper.validate()?;
    let rows = rebind_eps(rows, hyper.epsilon);
    let prep = PreparedObjective::from_rows(
        rows,
        k,
        hyper.lambda,
        hyper.kappa,
        Parameterization::ConstantWidth,
    )?;
    if beta.len() != k.n() {
        return Err(Error::LengthMismatch {
            expected: k.n(),
            got: beta.len(),
        });
    }
    let mut start = Vec::with_capacity(beta.len() + 2);
    start.push(beta_0);
    start.extend_from_slice(beta);
    start.push(width.max(0.0));
    let (theta, trace) = dc_iterate(&prep, start, &hyper.solver);
    let n = k.n();
    let w = theta[n + 1];
    let rule = IntervalRule {
        beta_l0: theta[0],
        beta_l: theta[1..n + 1].to_vec(),
        beta_u0: theta[0] + w,
        beta_u: theta[1..n + 1].to_vec(),
        anchors,
        gamma: k.gamma(),
        width: Some(w),
    };
    Ok((rule, trace))
}
