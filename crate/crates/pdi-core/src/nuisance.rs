//! Nuisance models: the generalized propensity density `e(a|x)` from a
//! Gaussian linear regression, and the dose-probability curve `mu(a, x)`
//! from a logistic regression on `(a, a^2, x)`, plus the quadrature and
//! monotone-split utilities the loss functions build on.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{ols, SymMatrix};
use crate::stats::normal_pdf;

/// Anything that exposes a dose-probability curve. Lets the indirect search
/// and test oracles run on stub curves as well as fitted models.
pub trait DoseCurve {
    fn mu(&self, a: f64, x: &[f64]) -> f64;
}

/// Gaussian linear model of the (log-)dose given covariates; evaluating its
/// density at the observed dose gives the generalized propensity score.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    /// Intercept followed by one slope per covariate.
    pub coef: Vec<f64>,
    /// Residual variance (maximum-likelihood divisor `N`).
    pub sigma2: f64,
    /// Model the density on `log(a)` with the change-of-variables Jacobian.
    pub log_dose: bool,
}

impl PropensityModel {
    /// Fitted conditional mean of the (log-)dose at `x`.
    pub fn mean(&self, x: &[f64]) -> f64 {
        let mut eta = self.coef[0];
        for (c, v) in self.coef[1..].iter().zip(x) {
            eta += c * v;
        }
        eta
    }
}

/// OLS fit of the (log-)dose on covariates with intercept.
pub fn fit_propensity(ds: &Dataset, log_dose: bool) -> Result<PropensityModel> {
    let n = ds.len();
    if n <= ds.d() + 1 {
        return Err(Error::TooFewRows(format!(
            "propensity fit needs more than d+1 = {} rows, got {n}",
            ds.d() + 1
        )));
    }
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for o in ds.iter() {
        let t = if log_dose {
            if o.a <= 0.0 {
                return Err(Error::NonpositiveDose(o.a));
            }
            o.a.ln()
        } else {
            o.a
        };
        let mut row = Vec::with_capacity(ds.d() + 1);
        row.push(1.0);
        row.extend_from_slice(&o.x);
        rows.push(row);
        targets.push(t);
    }
    let (coef, rss) = ols(&rows, &targets)?;
    let sigma2 = rss / n as f64;
    if sigma2 < 1e-12 {
        return Err(Error::DegenerateVariance);
    }
    Ok(PropensityModel {
        coef,
        sigma2,
        log_dose,
    })
}

/// Density of the fitted dose model at `(a, x)`; strictly positive. With
/// `log_dose` the Gaussian lives on `log a` and the `1/a` Jacobian applies.
pub fn propensity_density(m: &PropensityModel, a: f64, x: &[f64]) -> Result<f64> {
    let sd = m.sigma2.sqrt();
    if m.log_dose {
        if a <= 0.0 {
            return Err(Error::NonpositiveDose(a));
        }
        let z = (a.ln() - m.mean(x)) / sd;
        Ok(normal_pdf(z) / sd / a)
    } else {
        let z = (a - m.mean(x)) / sd;
        Ok(normal_pdf(z) / sd)
    }
}

/// Logistic model of the range indicator on `(a, a^2, x)` with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseProbModel {
    pub theta0: f64,
    pub theta_a: f64,
    pub theta_a2: f64,
    pub theta_x: Vec<f64>,
    /// Set when the Newton fit diverged and a small ridge was applied.
    pub stabilized: bool,
}

impl DoseProbModel {
    fn linear_predictor(&self, a: f64, x: &[f64]) -> f64 {
        let mut eta = self.theta0 + self.theta_a * a + self.theta_a2 * a * a;
        for (c, v) in self.theta_x.iter().zip(x) {
            eta += c * v;
        }
        eta
    }

    /// Analytic dose derivative of the curve at `(a, x)`.
    pub fn dmu_da(&self, a: f64, x: &[f64]) -> f64 {
        let p = logistic(self.linear_predictor(a, x));
        p * (1.0 - p) * (self.theta_a + 2.0 * self.theta_a2 * a)
    }
}

impl DoseCurve for DoseProbModel {
    fn mu(&self, a: f64, x: &[f64]) -> f64 {
        logistic(self.linear_predictor(a, x))
    }
}

#[inline]
fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Dose-probability curve value `mu(a, x)` in (0,1).
pub fn mu_eval(m: &DoseProbModel, a: f64, x: &[f64]) -> Result<f64> {
    if x.len() != m.theta_x.len() {
        return Err(Error::DimensionMismatch {
            expected: m.theta_x.len(),
            got: x.len(),
        });
    }
    Ok(m.mu(a, x))
}

/// Maximum-likelihood logistic fit by Newton iterations with step-halving.
/// Divergent coefficient norms (> 1e3) trigger a ridge-stabilized refit
/// (penalty 1e-6 ||theta||^2) reported via the `stabilized` flag.
pub fn fit_dose_probability(ds: &Dataset) -> Result<DoseProbModel> {
    let n = ds.len();
    let d = ds.d();
    let p = d + 3;
    if n <= p {
        return Err(Error::TooFewRows(format!(
            "logistic fit needs more than d+3 = {p} rows, got {n}"
        )));
    }
    let any_pos = ds.iter().any(|o| o.r);
    let any_neg = ds.iter().any(|o| !o.r);
    if !any_pos || !any_neg {
        return Err(Error::SingleClass);
    }
    let rows: Vec<Vec<f64>> = ds
        .iter()
        .map(|o| {
            let mut row = Vec::with_capacity(p);
            row.push(1.0);
            row.push(o.a);
            row.push(o.a * o.a);
            row.extend_from_slice(&o.x);
            row
        })
        .collect();
    let targets: Vec<f64> = ds.iter().map(|o| if o.r { 1.0 } else { 0.0 }).collect();

    match newton_logistic(&rows, &targets, 0.0) {
        Ok(theta) => {
            let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
            if norm <= 1e3 {
                return Ok(unpack_theta(theta, d, false));
            }
        }
        Err(Error::SingularDesign) | Err(Error::SolveFailure) => {}
        Err(e) => return Err(e),
    }
    // separation or a singular Hessian: refit with a small ridge
    let theta = newton_logistic(&rows, &targets, 1e-6)?;
    Ok(unpack_theta(theta, d, true))
}

fn unpack_theta(theta: Vec<f64>, d: usize, stabilized: bool) -> DoseProbModel {
    DoseProbModel {
        theta0: theta[0],
        theta_a: theta[1],
        theta_a2: theta[2],
        theta_x: theta[3..3 + d].to_vec(),
        stabilized,
    }
}

fn log_likelihood(rows: &[Vec<f64>], targets: &[f64], theta: &[f64], ridge: f64) -> f64 {
    let mut ll = 0.0;
    for (row, &t) in rows.iter().zip(targets) {
        let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        // log sigma(eta) if t = 1, log(1 - sigma(eta)) otherwise
        let log1pe = if eta > 30.0 { eta } else { (1.0 + eta.exp()).ln() };
        ll += t * eta - log1pe;
    }
    ll - ridge * theta.iter().map(|t| t * t).sum::<f64>()
}

fn newton_logistic(rows: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let p = rows[0].len();
    let mut theta = vec![0.0; p];
    let mut ll = log_likelihood(rows, targets, &theta, ridge);
    for _ in 0..100 {
        let mut grad = vec![0.0; p];
        let mut hess = SymMatrix::zeros(p);
        for (row, &t) in rows.iter().zip(targets) {
            let eta: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let mu = logistic(eta);
            let w = (mu * (1.0 - mu)).max(1e-12);
            for i in 0..p {
                grad[i] += row[i] * (t - mu);
                for j in 0..p {
                    hess.data[i * p + j] += w * row[i] * row[j];
                }
            }
        }
        for i in 0..p {
            grad[i] -= 2.0 * ridge * theta[i];
            hess.data[i * p + i] += 2.0 * ridge;
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < 1e-8 {
            return Ok(theta);
        }
        let step = crate::linalg::solve_spd(&hess, &grad)?;
        // step-halving keeps the log-likelihood non-decreasing
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&step)
                .map(|(t, s)| t + scale * s)
                .collect();
            let cand_ll = log_likelihood(rows, targets, &cand, ridge);
            if cand_ll >= ll {
                theta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Ok(theta);
        }
    }
    Ok(theta)
}

/// Composite Simpson approximation of `int_ell^u (alpha - mu(a, x)) da`
/// over an odd number of nodes.
pub fn integral_alpha_minus_mu(
    m: &DoseProbModel,
    x: &[f64],
    ell: f64,
    u: f64,
    alpha: f64,
    nodes: usize,
) -> Result<f64> {
    if ell > u {
        return Err(Error::InvalidInterval { ell, u });
    }
    if ell == u {
        return Ok(0.0);
    }
    let nodes = if nodes % 2 == 0 { nodes + 1 } else { nodes.max(3) };
    let h = (u - ell) / (nodes - 1) as f64;
    let f = |a: f64| alpha - m.mu(a, x);
    let mut acc = f(ell) + f(u);
    for k in 1..nodes - 1 {
        let a = ell + h * k as f64;
        acc += if k % 2 == 1 { 4.0 * f(a) } else { 2.0 * f(a) };
    }
    Ok(acc * h / 3.0)
}

/// Monotone split of the dose-probability curve at a fixed covariate value:
/// node values of the non-decreasing parts `mu_plus`, `mu_minus` with
/// `mu_plus - mu_minus = mu`, plus their cumulative-integral tables.
///
/// The logistic-quadratic curve is monotone or unimodal in the dose, so the
/// node values come from the exact running max/min structure of the curve;
/// the cumulative tables accumulate those values by the trapezoid rule.
#[derive(Debug, Clone)]
pub struct MuSplit {
    pub grid: Vec<f64>,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub mu_plus_cum: Vec<f64>,
    pub mu_minus_cum: Vec<f64>,
}

impl MuSplit {
    fn h(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Piecewise-linear interpolation of a cumulative table, extended
    /// linearly beyond [0,1] with the boundary slopes. Keeping the slopes
    /// non-decreasing keeps the interpolant convex.
    fn cum_at(&self, cum: &[f64], values: &[f64], t: f64) -> f64 {
        let h = self.h();
        let last = self.grid.len() - 1;
        if t <= 0.0 {
            return cum[0] + values[0] * t;
        }
        if t >= self.grid[last] {
            return cum[last] + values[last] * (t - self.grid[last]);
        }
        let idx = ((t / h).floor() as usize).min(last - 1);
        let frac = t - self.grid[idx];
        // integrate the linear value interpolant exactly within the cell;
        // non-decreasing values keep the result convex in t
        let v0 = values[idx];
        let vt = v0 + (values[idx + 1] - v0) * frac / h;
        cum[idx] + 0.5 * (v0 + vt) * frac
    }

    /// Cumulative integral of `mu_plus` from 0 to `t`.
    pub fn c_plus(&self, t: f64) -> f64 {
        self.cum_at(&self.mu_plus_cum, &self.mu_plus, t)
    }

    /// Cumulative integral of `mu_minus` from 0 to `t`.
    pub fn c_minus(&self, t: f64) -> f64 {
        self.cum_at(&self.mu_minus_cum, &self.mu_minus, t)
    }

    /// Cumulative integral of `mu` itself from 0 to `t`.
    pub fn c_mu(&self, t: f64) -> f64 {
        self.c_plus(t) - self.c_minus(t)
    }

    /// Right-continuous derivative of the `c_plus` interpolant at `t`.
    pub fn c_plus_slope(&self, t: f64) -> f64 {
        self.value_at(&self.mu_plus, t)
    }

    /// Right-continuous derivative of the `c_minus` interpolant at `t`.
    pub fn c_minus_slope(&self, t: f64) -> f64 {
        self.value_at(&self.mu_minus, t)
    }

    fn value_at(&self, values: &[f64], t: f64) -> f64 {
        let last = self.grid.len() - 1;
        if t <= 0.0 {
            return values[0];
        }
        if t >= self.grid[last] {
            return values[last];
        }
        let h = self.h();
        let idx = ((t / h).floor() as usize).min(last - 1);
        let frac = (t - self.grid[idx]) / h;
        values[idx] + (values[idx + 1] - values[idx]) * frac
    }
}

/// Builds the monotone split of `mu(., x)` on a uniform dose grid.
pub fn mu_split(m: &DoseProbModel, x: &[f64], nodes: usize) -> MuSplit {
    let nodes = nodes.max(3);
    let grid: Vec<f64> = (0..nodes)
        .map(|k| k as f64 / (nodes - 1) as f64)
        .collect();
    let mu: Vec<f64> = grid.iter().map(|&a| m.mu(a, x)).collect();

    // The dose derivative is mu (1 - mu) (theta_a + 2 theta_a2 a), so its
    // sign flips at most once, at a_turn. Accumulating signed increments per
    // cell (splitting the cell containing the turn) gives the positive and
    // negative variations exactly at the grid nodes.
    let turn = if m.theta_a2 != 0.0 {
        let t = -m.theta_a / (2.0 * m.theta_a2);
        (t > 0.0 && t < 1.0).then_some(t)
    } else {
        None
    };
    let mut mu_plus = Vec::with_capacity(nodes);
    let mut mu_minus = Vec::with_capacity(nodes);
    let mut pos = 0.0;
    let mut neg = 0.0;
    mu_plus.push(mu[0]);
    mu_minus.push(0.0);
    for k in 1..nodes {
        let mut add = |delta: f64| {
            if delta >= 0.0 {
                pos += delta;
            } else {
                neg -= delta;
            }
        };
        match turn {
            Some(t) if t > grid[k - 1] && t < grid[k] => {
                let mid = m.mu(t, x);
                add(mid - mu[k - 1]);
                add(mu[k] - mid);
            }
            _ => add(mu[k] - mu[k - 1]),
        }
        mu_plus.push(mu[0] + pos);
        mu_minus.push(neg);
    }
    debug_assert!(mu_plus
        .iter()
        .zip(&mu_minus)
        .zip(&mu)
        .all(|((p, m_), v)| (p - m_ - v).abs() < 1e-9));

    let h = grid[1] - grid[0];
    let mut mu_plus_cum = Vec::with_capacity(nodes);
    let mut mu_minus_cum = Vec::with_capacity(nodes);
    let mut cp = 0.0;
    let mut cm = 0.0;
    mu_plus_cum.push(0.0);
    mu_minus_cum.push(0.0);
    for k in 1..nodes {
        cp += 0.5 * (mu_plus[k - 1] + mu_plus[k]) * h;
        cm += 0.5 * (mu_minus[k - 1] + mu_minus[k]) * h;
        mu_plus_cum.push(cp);
        mu_minus_cum.push(cm);
    }
    MuSplit {
        grid,
        mu_plus,
        mu_minus,
        mu_plus_cum,
        mu_minus_cum,
    }
}

/// The pair `(G_plus, G_minus)` with
/// `G_plus = int_0^ell mu_plus + int_0^u mu_minus + alpha u` and
/// `G_minus = int_0^u mu_plus + int_0^ell mu_minus + alpha ell`, so that
/// `G_plus - G_minus = int_ell^u (alpha - mu)`.
pub fn g_plus_minus(split: &MuSplit, ell: f64, u: f64, alpha: f64) -> (f64, f64) {
    let g_plus = split.c_plus(ell) + split.c_minus(u) + alpha * u;
    let g_minus = split.c_plus(u) + split.c_minus(ell) + alpha * ell;
    (g_plus, g_minus)
}

/// Fitted pair of nuisance models used throughout estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceModels {
    pub propensity: PropensityModel,
    pub dose_prob: DoseProbModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn tiny_dataset(doses: &[f64]) -> Dataset {
        let obs: Vec<Observation> = doses
            .iter()
            .enumerate()
            .map(|(i, &a)| Observation::new(if i % 2 == 0 { 1.0 } else { 0.0 }, a, vec![], 0.5, f64::INFINITY))
            .collect();
        Dataset::new(obs).unwrap()
    }

    #[test]
    fn propensity_intercept_only() {
        let ds = tiny_dataset(&[0.2, 0.4]);
        let m = fit_propensity(&ds, false).unwrap();
        assert!((m.coef[0] - 0.3).abs() < 1e-12);
        assert!((m.sigma2 - 0.01).abs() < 1e-12);
    }

    #[test]
    fn propensity_degenerate_variance() {
        // doses exactly affine in x: zero residuals
        let obs: Vec<Observation> = (0..6)
            .map(|i| {
                let x = i as f64 / 10.0;
                Observation::new(0.0, 0.1 + 0.5 * x, vec![x], -1.0, 1.0)
            })
            .collect();
        let ds = Dataset::new(obs).unwrap();
        assert!(matches!(
            fit_propensity(&ds, false),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn density_values() {
        let m = PropensityModel {
            coef: vec![0.3],
            sigma2: 0.01,
            log_dose: false,
        };
        let at_mean = propensity_density(&m, 0.3, &[]).unwrap();
        assert!((at_mean - 3.989_422_804_014_327).abs() < 1e-9);
        let one_sd = propensity_density(&m, 0.4, &[]).unwrap();
        assert!((one_sd - at_mean * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn density_log_dose_change_of_variables() {
        let eta = -1.2f64;
        let m = PropensityModel {
            coef: vec![eta],
            sigma2: 1.0,
            log_dose: true,
        };
        let a = eta.exp();
        let got = propensity_density(&m, a, &[]).unwrap();
        let want = normal_pdf(0.0) / a;
        assert!((got - want).abs() < 1e-12);
        assert!(matches!(
            propensity_density(&m, 0.0, &[]),
            Err(Error::NonpositiveDose(_))
        ));
    }

    #[test]
    fn logistic_intercept_only() {
        // mean r = 0.75 with a tiny dose spread so the design is full rank
        let obs: Vec<Observation> = (0..40)
            .map(|i| {
                let r1 = i % 4 != 3;
                let y = if r1 { 1.0 } else { 0.0 };
                let a = 0.5 + 1e-9 * ((i % 7) as f64 - 3.0);
                Observation::new(y, a, vec![], 0.5, f64::INFINITY)
            })
            .collect();
        let ds = Dataset::new(obs).unwrap();
        let m = fit_dose_probability(&ds).unwrap();
        let mu = m.mu(0.5, &[]);
        assert!((mu - 0.75).abs() < 1e-6, "mu = {mu}");
    }

    #[test]
    fn logistic_single_class() {
        let obs: Vec<Observation> = (0..10)
            .map(|i| Observation::new(1.0, i as f64 / 10.0, vec![], 0.5, f64::INFINITY))
            .collect();
        let ds = Dataset::new(obs).unwrap();
        assert!(matches!(fit_dose_probability(&ds), Err(Error::SingleClass)));
    }

    #[test]
    fn mu_eval_known_values() {
        let m = DoseProbModel {
            theta0: 0.0,
            theta_a: 0.0,
            theta_a2: 0.0,
            theta_x: vec![],
            stabilized: false,
        };
        assert_eq!(mu_eval(&m, 0.3, &[]).unwrap(), 0.5);
        let m2 = DoseProbModel {
            theta0: 3f64.ln(),
            ..m.clone()
        };
        assert!((mu_eval(&m2, 0.3, &[]).unwrap() - 0.75).abs() < 1e-12);
        // monotone in the predictor
        let m3 = DoseProbModel {
            theta0: 0.0,
            theta_a: 5.0,
            theta_a2: 0.0,
            theta_x: vec![],
            stabilized: false,
        };
        assert!(mu_eval(&m3, 0.9, &[]).unwrap() > mu_eval(&m3, 0.1, &[]).unwrap());
    }

    #[test]
    fn simpson_integral_cases() {
        let flat = DoseProbModel {
            theta0: 0.0,
            theta_a: 0.0,
            theta_a2: 0.0,
            theta_x: vec![],
            stabilized: false,
        };
        assert_eq!(
            integral_alpha_minus_mu(&flat, &[], 0.4, 0.4, 0.7, 101).unwrap(),
            0.0
        );
        let v = integral_alpha_minus_mu(&flat, &[], 0.2, 0.6, 0.7, 101).unwrap();
        assert!((v - 0.08).abs() < 1e-12);

        // mu(a) = logistic(a): analytic antiderivative log(1 + e^a)
        let lin = DoseProbModel {
            theta0: 0.0,
            theta_a: 1.0,
            theta_a2: 0.0,
            theta_x: vec![],
            stabilized: false,
        };
        let v = integral_alpha_minus_mu(&lin, &[], 0.0, 1.0, 0.5, 101).unwrap();
        let exact = 0.5 - ((1.0 + 1f64.exp()).ln() - 2f64.ln());
        assert!((v - exact).abs() < 1e-9);
        assert!((v + 0.12011).abs() < 1e-4);

        assert!(integral_alpha_minus_mu(&flat, &[], 0.6, 0.4, 0.7, 101).is_err());
    }

    fn model(theta0: f64, theta_a: f64, theta_a2: f64) -> DoseProbModel {
        DoseProbModel {
            theta0,
            theta_a,
            theta_a2,
            theta_x: vec![],
            stabilized: false,
        }
    }

    #[test]
    fn mu_split_monotone_cases() {
        // non-decreasing curve: mu_minus identically zero
        let inc = model(-1.0, 4.0, 0.0);
        let s = mu_split(&inc, &[], 201);
        assert!(s.mu_minus.iter().all(|&v| v.abs() < 1e-12));
        for (k, &g) in s.grid.iter().enumerate() {
            assert!((s.mu_plus[k] - inc.mu(g, &[])).abs() < 1e-12);
        }

        // non-increasing: mu_plus frozen at mu(0)
        let dec = model(1.0, -4.0, 0.0);
        let s = mu_split(&dec, &[], 201);
        let mu0 = dec.mu(0.0, &[]);
        assert!(s.mu_plus.iter().all(|&v| (v - mu0).abs() < 1e-12));
        for (k, &g) in s.grid.iter().enumerate() {
            assert!((s.mu_minus[k] - (mu0 - dec.mu(g, &[]))).abs() < 1e-12);
        }
    }

    #[test]
    fn mu_split_hormetic_case() {
        // peak inside (0,1): derivative sign flips at a* = -theta_a / (2 theta_a2)
        let m = model(-2.0, 8.0, -8.0); // peak at 0.5
        let s = mu_split(&m, &[], 201);
        let peak = m.mu(0.5, &[]);
        let last = s.grid.len() - 1;
        assert!((s.mu_plus[last] - peak).abs() < 1e-9);
        // mu_minus zero before the peak, growing after
        let idx_quarter = last / 4;
        assert!(s.mu_minus[idx_quarter].abs() < 1e-12);
        assert!(s.mu_minus[last] > 0.1);
        // reconstruction at every node
        for k in 0..=last {
            assert!((s.mu_plus[k] - s.mu_minus[k] - m.mu(s.grid[k], &[])).abs() < 1e-6);
        }
        // monotone tables
        for k in 1..=last {
            assert!(s.mu_plus[k] >= s.mu_plus[k - 1] - 1e-12);
            assert!(s.mu_minus[k] >= s.mu_minus[k - 1] - 1e-12);
        }
    }

    #[test]
    fn g_plus_minus_matches_simpson() {
        let m = model(-2.0, 9.0, -7.0);
        let s = mu_split(&m, &[], 201);
        // degenerate interval
        let (gp, gm) = g_plus_minus(&s, 0.37, 0.37, 0.7);
        assert!((gp - gm).abs() < 1e-12);
        // constant case
        let flat = model(0.0, 0.0, 0.0);
        let sf = mu_split(&flat, &[], 201);
        let (gp, gm) = g_plus_minus(&sf, 0.0, 1.0, 0.7);
        assert!((gp - gm - 0.2).abs() < 1e-10);
        // identity against the Simpson route on a grid of intervals
        for &(ell, u) in &[(0.0, 1.0), (0.1, 0.35), (0.5, 0.92), (0.25, 0.26)] {
            let (gp, gm) = g_plus_minus(&s, ell, u, 0.7);
            let direct = integral_alpha_minus_mu(&m, &[], ell, u, 0.7, 101).unwrap();
            assert!(
                (gp - gm - direct).abs() < 1e-4,
                "interval ({ell},{u}): {} vs {direct}",
                gp - gm
            );
        }
    }

    #[test]
    fn propensity_recovers_generator_slopes() {
        use crate::simulation::{generate_dataset, DgpParams};
        let ds = generate_dataset(&DgpParams::new(100_000, 31)).unwrap();
        let m = fit_propensity(&ds, false).unwrap();
        let n = ds.len() as f64;
        // dose = sum(x)/15 + 0.2 + noise; every slope is 1/15
        for j in 0..10 {
            let var_j = match j {
                0..=3 => 1.0 / 12.0,
                4..=6 => 1.0,
                _ => 0.25,
            };
            let se = 0.1 / (n * var_j).sqrt();
            let err = (m.coef[1 + j] - 1.0 / 15.0).abs();
            assert!(err < 3.5 * se + 2e-4, "slope {j}: err {err:.2e} vs se {se:.2e}");
        }
        assert!((m.coef[0] - 0.2).abs() < 5e-3);
    }

    #[test]
    fn logistic_recovers_known_coefficients() {
        use rand::Rng;
        use rand::SeedableRng;
        let truth = DoseProbModel {
            theta0: -1.0,
            theta_a: 6.0,
            theta_a2: -6.0,
            theta_x: vec![0.8, -0.5],
            stabilized: false,
        };
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        let obs: Vec<Observation> = (0..100_000)
            .map(|_| {
                let x = vec![rng.gen::<f64>(), rng.gen::<f64>()];
                let a: f64 = rng.gen();
                let r: f64 = rng.gen();
                let y = if r < truth.mu(a, &x) { 1.0 } else { 0.0 };
                Observation::new(y, a, x, 0.5, f64::INFINITY)
            })
            .collect();
        let ds = Dataset::new(obs).unwrap();
        let m = fit_dose_probability(&ds).unwrap();
        // the (a, a^2) pair is nearly collinear on [0,1] (corr ~ 0.97), so
        // its coefficients carry sampling errors ~0.09 at this sample size;
        // the fitted curve itself is tight
        assert!((m.theta0 - truth.theta0).abs() < 0.05, "theta0 {}", m.theta0);
        assert!((m.theta_a - truth.theta_a).abs() < 0.35, "theta_a {}", m.theta_a);
        assert!((m.theta_a2 - truth.theta_a2).abs() < 0.35, "theta_a2 {}", m.theta_a2);
        for (got, want) in m.theta_x.iter().zip(&truth.theta_x) {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
        let mut sup = 0.0f64;
        for i in 0..=20 {
            for j in 0..=20 {
                let a = i as f64 / 20.0;
                let x = vec![j as f64 / 20.0, 1.0 - j as f64 / 20.0];
                sup = sup.max((m.mu(a, &x) - truth.mu(a, &x)).abs());
            }
        }
        assert!(sup < 0.05, "curve sup-error {sup}");
    }

    #[test]
    fn propensity_density_mass_check() {
        let m = PropensityModel {
            coef: vec![0.45],
            sigma2: 0.01,
            log_dose: false,
        };
        let nodes = 2001;
        let h = 1.0 / (nodes - 1) as f64;
        let mut mass = 0.0;
        for k in 0..nodes {
            let a = k as f64 * h;
            let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
            mass += w * propensity_density(&m, a, &[]).unwrap() * h;
        }
        assert!(mass > 0.9 && mass < 1.0001, "mass = {mass}");
    }
}
