//! End-to-end estimation flows: the indirect baseline, hyperparameter
//! cross-validation, cross-fitting with rule aggregation, post-processing,
//! and the packaged direct estimators.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::data::{Dataset, HyperParams, IntervalRule};
use crate::error::{Error, Result};
use crate::kernel::{eval_rule, gram, GramMatrix};
use crate::loss::{compute_c_loss, LossContext};
use crate::nuisance::{
    fit_dose_probability, fit_propensity, DoseCurve, NuisanceModels,
};
use crate::optimizer::{
    dc_fit_constant_width_from_rows, dc_fit_from_rows, init_internal_division_stabilized, DcTrace,
};

/// Indirect search result: the super-level interval of a fitted curve, or
/// the curve's argmax as a degenerate fallback when the level set is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndirectPdi {
    pub ell: f64,
    pub u: f64,
    /// False when the fallback argmax point was returned.
    pub valid: bool,
    /// True when the super-level set was non-contiguous and the longest run
    /// was taken.
    pub fragmented: bool,
}

/// Grid search of `{a : mu(a, x) >= alpha}` over the unit interval.
pub fn indirect_pdi(curve: &impl DoseCurve, x: &[f64], alpha: f64, grid_step: f64) -> IndirectPdi {
    debug_assert!(grid_step > 0.0 && grid_step <= 0.1);
    let steps = (1.0 / grid_step).round().max(1.0) as usize;
    let mut best_a = 0.0;
    let mut best_mu = f64::NEG_INFINITY;
    // runs of consecutive grid points in the super-level set
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut run_start: Option<usize> = None;
    for k in 0..=steps {
        let a = k as f64 / steps as f64;
        let mu = curve.mu(a, x);
        if mu > best_mu {
            best_mu = mu;
            best_a = a;
        }
        if mu >= alpha {
            if run_start.is_none() {
                run_start = Some(k);
            }
        } else if let Some(s) = run_start.take() {
            runs.push((s, k - 1));
        }
    }
    if let Some(s) = run_start {
        runs.push((s, steps));
    }
    match runs.len() {
        0 => IndirectPdi {
            ell: best_a,
            u: best_a,
            valid: false,
            fragmented: false,
        },
        n => {
            let longest = runs
                .iter()
                .max_by_key(|(s, e)| e - s)
                .copied()
                .unwrap();
            IndirectPdi {
                ell: longest.0 as f64 / steps as f64,
                u: longest.1 as f64 / steps as f64,
                valid: true,
                fragmented: n > 1,
            }
        }
    }
}

/// Winsorizes both bounds to [0,1]; an inverted pair collapses to the
/// clipped average of the two bounds with the fallback flag set.
pub fn postprocess(ell: f64, u: f64) -> (f64, f64, bool) {
    let ell_c = ell.clamp(0.0, 1.0);
    let u_c = u.clamp(0.0, 1.0);
    if ell_c > u_c {
        let mid = (0.5 * (ell + u)).clamp(0.0, 1.0);
        (mid, mid, true)
    } else {
        (ell_c, u_c, false)
    }
}

/// One cross-validation cell result.
#[derive(Debug, Clone)]
pub struct CvRecord {
    pub candidate: usize,
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
}

/// Seeded near-equal partition of `0..n` into `folds` index sets.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::TooFewRows("need at least 2 folds".into()));
    }
    if n < folds {
        return Err(Error::TooFewRows(format!(
            "cannot split {n} rows into {folds} folds"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(indices[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(out)
}

/// Which direct estimator a fit routine should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectVariant {
    Joint,
    ConstantWidth,
}

fn fit_variant(
    variant: DirectVariant,
    rows: Arc<Vec<crate::loss::RowLoss>>,
    anchors: Vec<Vec<f64>>,
    k: &GramMatrix,
    hyper: &HyperParams,
    bounds: &[(f64, f64)],
) -> Result<(IntervalRule, DcTrace)> {
    let init =
        init_internal_division_stabilized(bounds, hyper.p_init, k, hyper.lambda.max(1e-8))?;
    match variant {
        DirectVariant::Joint => dc_fit_from_rows(rows, anchors, k, hyper, &init),
        DirectVariant::ConstantWidth => {
            let width = bounds
                .iter()
                .map(|(l, u)| (u - l).max(0.0))
                .sum::<f64>()
                / bounds.len() as f64;
            dc_fit_constant_width_from_rows(
                rows,
                anchors,
                k,
                hyper,
                init.beta_l0,
                &init.beta_l,
                width,
            )
        }
    }
}

/// Held-out empirical surrogate loss of a fitted rule.
fn heldout_loss(rule: &IntervalRule, ds: &Dataset, indices: &[usize], ctx: &LossContext) -> Result<f64> {
    let mut acc = 0.0;
    for &i in indices {
        let o = &ds.observations()[i];
        let (ell, u) = eval_rule(rule, &o.x)?;
        acc += ctx.row(o)?.surrogate(ell, u);
    }
    Ok(acc / indices.len() as f64)
}

/// K-fold cross-validation over a hyperparameter grid: for every candidate
/// and fold, fits on the fold complement and scores the empirical surrogate
/// loss on the held-out fold; returns the candidate with the smallest
/// fold-averaged loss (ties broken by grid order) and the full table.
pub fn cross_validate(
    ds: &Dataset,
    ctx: &LossContext,
    indirect_bounds: &[(f64, f64)],
    hyper_grid: &[HyperParams],
    folds: usize,
    seed: u64,
    variant: DirectVariant,
) -> Result<(HyperParams, Vec<CvRecord>)> {
    if hyper_grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = ds.len();
    let fold_sets = make_folds(n, folds, seed)?;
    if fold_sets.iter().any(|f| f.is_empty() || f.len() == n) {
        return Err(Error::TooFewRows("a fold would be empty".into()));
    }

    // per-fold training data, shared row caches, and per-gamma Gram matrices
    struct FoldCtx {
        train: Dataset,
        train_idx: Vec<usize>,
        test_idx: Vec<usize>,
        bounds: Vec<(f64, f64)>,
        rows: Arc<Vec<crate::loss::RowLoss>>,
        grams: Vec<(f64, GramMatrix)>,
    }
    let mut gammas: Vec<f64> = hyper_grid.iter().map(|h| h.gamma).collect();
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gammas.dedup();

    let fold_ctx: Vec<FoldCtx> = fold_sets
        .iter()
        .map(|test_idx| -> Result<FoldCtx> {
            let train_idx: Vec<usize> = (0..n).filter(|i| !test_idx.contains(i)).collect();
            debug_assert!(train_idx.iter().all(|i| !test_idx.contains(i)));
            let train = ds.subset(&train_idx)?;
            let bounds: Vec<(f64, f64)> =
                train_idx.iter().map(|&i| indirect_bounds[i]).collect();
            let rows = Arc::new(
                train
                    .iter()
                    .map(|o| ctx.row(o))
                    .collect::<Result<Vec<_>>>()?,
            );
            let grams = gammas
                .iter()
                .map(|&g| Ok((g, gram(&train.covariates(), g)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldCtx {
                train,
                train_idx,
                test_idx: test_idx.clone(),
                bounds,
                rows,
                grams,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // candidate x fold cells evaluated independently, reduced in index order
    let cells: Vec<(usize, usize)> = (0..hyper_grid.len())
        .flat_map(|c| (0..fold_ctx.len()).map(move |f| (c, f)))
        .collect();
    let losses: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(c, f)| {
            let hyper = &hyper_grid[c];
            let fc = &fold_ctx[f];
            let k = &fc
                .grams
                .iter()
                .find(|(g, _)| *g == hyper.gamma)
                .expect("gamma cached")
                .1;
            let (rule, _) = fit_variant(
                variant,
                Arc::clone(&fc.rows),
                fc.train.covariates(),
                k,
                hyper,
                &fc.bounds,
            )?;
            debug_assert!(fc.train_idx.iter().all(|i| !fc.test_idx.contains(i)));
            heldout_loss(&rule, ds, &fc.test_idx, ctx)
        })
        .collect();

    let mut records = Vec::with_capacity(hyper_grid.len());
    for c in 0..hyper_grid.len() {
        let mut fold_losses = Vec::with_capacity(fold_ctx.len());
        for f in 0..fold_ctx.len() {
            fold_losses.push(losses[c * fold_ctx.len() + f].clone()?);
        }
        let mean_loss = fold_losses.iter().sum::<f64>() / fold_losses.len() as f64;
        records.push(CvRecord {
            candidate: c,
            fold_losses,
            mean_loss,
        });
    }
    let best = records
        .iter()
        .fold((0usize, f64::INFINITY), |acc, r| {
            if r.mean_loss < acc.1 {
                (r.candidate, r.mean_loss)
            } else {
                acc
            }
        })
        .0;
    Ok((hyper_grid[best].clone(), records))
}

/// A fully fitted direct estimator with its diagnostics.
#[derive(Debug, Clone)]
pub struct FittedEstimator {
    pub rule: IntervalRule,
    pub nuisance: NuisanceModels,
    pub hyper: HyperParams,
    pub trace: DcTrace,
    pub cv_table: Vec<CvRecord>,
    pub c_loss: f64,
    /// How often the propensity floor bound during fitting.
    pub floor_hits: u64,
}

impl FittedEstimator {
    /// Raw bound evaluation (no clipping).
    pub fn predict_raw(&self, x: &[f64]) -> Result<(f64, f64)> {
        eval_rule(&self.rule, x)
    }

    /// Winsorized prediction with the inverted-pair fallback flag.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64, bool)> {
        let (ell, u) = self.predict_raw(x)?;
        Ok(postprocess(ell, u))
    }
}

/// Fit configuration for the direct estimators.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub alpha: f64,
    pub folds: usize,
    pub seed: u64,
    pub grid: Vec<HyperParams>,
    pub grid_step: f64,
    pub log_dose: bool,
    /// Solver budget for the final refit; when set, it replaces the chosen
    /// candidate's controls (grids typically carry a cheaper budget for the
    /// many cross-validation fits).
    pub final_solver: Option<crate::data::SolverControls>,
}

/// Fits nuisances, freezes the loss ceiling, cross-validates the grid, and
/// refits on the full data with the selected hyperparameters.
pub fn fit_direct(train: &Dataset, cfg: &FitConfig, variant: DirectVariant) -> Result<FittedEstimator> {
    let propensity = fit_propensity(train, cfg.log_dose)?;
    let dose_prob = fit_dose_probability(train)?;
    let nuisance = NuisanceModels {
        propensity,
        dose_prob,
    };
    let c_loss = compute_c_loss(train, &nuisance, cfg.alpha, 101)?;
    let base_eps = cfg
        .grid
        .first()
        .map(|h| h.epsilon)
        .unwrap_or(1e-3);
    let ctx = LossContext::new(nuisance.clone(), cfg.alpha, base_eps, c_loss, 1e4 * c_loss);

    let bounds: Vec<(f64, f64)> = train
        .iter()
        .map(|o| {
            let ind = indirect_pdi(&nuisance.dose_prob, &o.x, cfg.alpha, cfg.grid_step);
            (ind.ell, ind.u)
        })
        .collect();

    let grid: Vec<HyperParams> = cfg
        .grid
        .iter()
        .map(|h| {
            let mut h = h.with_c_loss(c_loss);
            h.alpha = cfg.alpha;
            h
        })
        .collect();
    let (mut best, cv_table) = if grid.len() == 1 {
        (grid[0].clone(), Vec::new())
    } else {
        cross_validate(train, &ctx, &bounds, &grid, cfg.folds, cfg.seed, variant)?
    };
    if let Some(solver) = &cfg.final_solver {
        best.solver = solver.clone();
    }

    let k = gram(&train.covariates(), best.gamma)?;
    let rows = Arc::new(
        train
            .iter()
            .map(|o| ctx.row(o))
            .collect::<Result<Vec<_>>>()?,
    );
    let (rule, trace) = fit_variant(variant, rows, train.covariates(), &k, &best, &bounds)?;
    Ok(FittedEstimator {
        rule,
        nuisance,
        hyper: best,
        trace,
        cv_table,
        c_loss,
        floor_hits: ctx.floor_hits(),
    })
}

/// Cross-fitting output: per-fold rules whose evaluations are averaged.
#[derive(Debug, Clone)]
pub struct CrossFitEstimator {
    pub fold_rules: Vec<IntervalRule>,
    pub fold_nuisances: Vec<NuisanceModels>,
    /// Row indices each fold's rule was trained on (the ERM side).
    pub fold_indices: Vec<Vec<usize>>,
}

impl CrossFitEstimator {
    /// Mean of per-fold bound evaluations at `x` (no clipping).
    pub fn predict_raw(&self, x: &[f64]) -> Result<(f64, f64)> {
        let s = self.fold_rules.len() as f64;
        let mut acc = (0.0, 0.0);
        for rule in &self.fold_rules {
            let (l, u) = eval_rule(rule, x)?;
            acc.0 += l;
            acc.1 += u;
        }
        Ok((acc.0 / s, acc.1 / s))
    }

    /// Aggregated prediction, winsorized once after averaging.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64, bool)> {
        let (ell, u) = self.predict_raw(x)?;
        Ok(postprocess(ell, u))
    }
}

/// Cross-fitting: nuisances for fold `s` are fit on the complement, then
/// cross-validation and the ERM run inside fold `s` with those nuisances;
/// the final rule averages the per-fold bound functions.
pub fn cross_fit(
    ds: &Dataset,
    s_folds: usize,
    cfg: &FitConfig,
    variant: DirectVariant,
) -> Result<CrossFitEstimator> {
    if s_folds < 2 {
        return Err(Error::TooFewRows("cross-fitting needs at least 2 folds".into()));
    }
    let fold_sets = make_folds(ds.len(), s_folds, cfg.seed)?;
    // folds are independent; run them concurrently and collect in fold order
    let per_fold: Vec<Result<(IntervalRule, NuisanceModels)>> = fold_sets
        .par_iter()
        .enumerate()
        .map(|(s, own_idx)| {
            let comp_idx: Vec<usize> = (0..ds.len()).filter(|i| !own_idx.contains(i)).collect();
            let complement = ds.subset(&comp_idx)?;
            let own = ds.subset(own_idx)?;
            debug_assert!(own_idx.iter().all(|i| !comp_idx.contains(i)));

            let propensity = fit_propensity(&complement, cfg.log_dose)?;
            let dose_prob = fit_dose_probability(&complement)?;
            let nuisance = NuisanceModels {
                propensity,
                dose_prob,
            };
            let c_loss = compute_c_loss(&own, &nuisance, cfg.alpha, 101)?;
            let base_eps = cfg.grid.first().map(|h| h.epsilon).unwrap_or(1e-3);
            let ctx =
                LossContext::new(nuisance.clone(), cfg.alpha, base_eps, c_loss, 1e4 * c_loss);
            let bounds: Vec<(f64, f64)> = own
                .iter()
                .map(|o| {
                    let ind = indirect_pdi(&nuisance.dose_prob, &o.x, cfg.alpha, cfg.grid_step);
                    (ind.ell, ind.u)
                })
                .collect();
            let grid: Vec<HyperParams> = cfg
                .grid
                .iter()
                .map(|h| {
                    let mut h = h.with_c_loss(c_loss);
                    h.alpha = cfg.alpha;
                    h
                })
                .collect();
            let (best, _) = if grid.len() == 1 {
                (grid[0].clone(), Vec::new())
            } else {
                cross_validate(
                    &own,
                    &ctx,
                    &bounds,
                    &grid,
                    cfg.folds,
                    crate::stats::derive_seed(cfg.seed, s as u64),
                    variant,
                )?
            };
            let k = gram(&own.covariates(), best.gamma)?;
            let rows = Arc::new(own.iter().map(|o| ctx.row(o)).collect::<Result<Vec<_>>>()?);
            let (rule, _) = fit_variant(variant, rows, own.covariates(), &k, &best, &bounds)?;
            Ok((rule, nuisance))
        })
        .collect();

    let mut fold_rules = Vec::with_capacity(s_folds);
    let mut fold_nuisances = Vec::with_capacity(s_folds);
    for item in per_fold {
        let (rule, nuisance) = item?;
        fold_rules.push(rule);
        fold_nuisances.push(nuisance);
    }
    Ok(CrossFitEstimator {
        fold_rules,
        fold_nuisances,
        fold_indices: fold_sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::simulation::{generate_dataset, DgpParams};

    struct QuadCurve;
    impl DoseCurve for QuadCurve {
        fn mu(&self, a: f64, _x: &[f64]) -> f64 {
            0.9 - (a - 0.5) * (a - 0.5)
        }
    }

    struct FlatCurve(f64);
    impl DoseCurve for FlatCurve {
        fn mu(&self, _a: f64, _x: &[f64]) -> f64 {
            self.0
        }
    }

    /// Two bumps above alpha, to exercise the non-contiguous branch.
    struct TwoBumps;
    impl DoseCurve for TwoBumps {
        fn mu(&self, a: f64, _x: &[f64]) -> f64 {
            let b1 = 0.9 - 80.0 * (a - 0.2) * (a - 0.2);
            let b2 = 0.85 - 20.0 * (a - 0.7) * (a - 0.7);
            b1.max(b2).max(0.01)
        }
    }

    #[test]
    fn indirect_quadratic_level_set() {
        let got = indirect_pdi(&QuadCurve, &[], 0.7, 0.005);
        let root = 0.2f64.sqrt();
        assert!(got.valid);
        assert!((got.ell - (0.5 - root)).abs() <= 0.005 + 1e-12);
        assert!((got.u - (0.5 + root)).abs() <= 0.005 + 1e-12);
    }

    #[test]
    fn indirect_flat_curves() {
        let above = indirect_pdi(&FlatCurve(0.8), &[], 0.7, 0.01);
        assert_eq!((above.ell, above.u, above.valid), (0.0, 1.0, true));
        let below = indirect_pdi(&FlatCurve(0.6), &[], 0.7, 0.01);
        assert!(!below.valid);
        assert_eq!(below.ell, below.u);
    }

    #[test]
    fn indirect_fragmented_takes_longest_run() {
        let got = indirect_pdi(&TwoBumps, &[], 0.7, 0.005);
        assert!(got.valid);
        assert!(got.fragmented);
        // second bump is wider: half-width sqrt(0.15/20) ~ 0.0866
        assert!((got.ell - 0.61).abs() < 0.02, "ell = {}", got.ell);
        assert!((got.u - 0.79).abs() < 0.02, "u = {}", got.u);
    }

    #[test]
    fn indirect_interval_shrinks_in_alpha() {
        let mut prev = indirect_pdi(&QuadCurve, &[], 0.55, 0.005);
        for alpha in [0.6, 0.65, 0.7, 0.75, 0.8, 0.85] {
            let cur = indirect_pdi(&QuadCurve, &[], alpha, 0.005);
            if cur.valid && prev.valid {
                assert!(cur.ell >= prev.ell - 1e-12);
                assert!(cur.u <= prev.u + 1e-12);
            }
            prev = cur;
        }
    }

    #[test]
    fn postprocess_cases() {
        assert_eq!(postprocess(-0.1, 0.5), (0.0, 0.5, false));
        let (l, u, fell_back) = postprocess(0.7, 0.4);
        assert!((l - 0.55).abs() < 1e-12 && (u - 0.55).abs() < 1e-12 && fell_back);
        assert_eq!(postprocess(0.2, 0.6), (0.2, 0.6, false));
        // output always ordered and inside the unit interval
        for &(a, b) in &[(-3.0, 7.0), (1.4, 1.2), (-0.5, -0.7), (0.9, 0.1)] {
            let (l, u, _) = postprocess(a, b);
            assert!(0.0 <= l && l <= u && u <= 1.0);
        }
    }

    #[test]
    fn folds_are_near_equal_and_disjoint() {
        let folds = make_folds(103, 10, 7).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        let min = *sizes.iter().min().unwrap();
        let max = *sizes.iter().max().unwrap();
        assert!(max - min <= 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(make_folds(5, 1, 0).is_err());
    }

    fn small_cfg(seed: u64, grid: Vec<crate::data::HyperParams>) -> FitConfig {
        FitConfig {
            alpha: 0.7,
            folds: 3,
            seed,
            grid,
            grid_step: 0.01,
            log_dose: false,
            final_solver: None,
        }
    }

    fn quick_hyper(gamma: f64, lambda: f64) -> crate::data::HyperParams {
        let mut h = crate::data::HyperParams::default();
        h.gamma = gamma;
        h.lambda = lambda;
        h.kappa = 1024.0;
        h.p_init = 0.5;
        h.solver.subproblem_iterations = 150;
        h.solver.max_dc_iterations = 10;
        h
    }

    #[test]
    fn cv_single_candidate_returns_it() {
        let ds = generate_dataset(&DgpParams::new(45, 3)).unwrap();
        let cfg = small_cfg(11, vec![quick_hyper(0.5, 1.0)]);
        let fitted = fit_direct(&ds, &cfg, DirectVariant::Joint).unwrap();
        assert_eq!(fitted.hyper.gamma, 0.5);
        assert!(fitted.cv_table.is_empty());
        assert_eq!(fitted.rule.anchors.len(), 45);
    }

    /// A one-covariate cohort, generated from the logistic-quadratic model
    /// itself, whose favorable-dose window widens strongly with x, so a
    /// covariate-blind rule loses on every fold.
    fn strong_signal_dataset(n: usize, seed: u64) -> crate::data::Dataset {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let obs: Vec<Observation> = (0..n)
            .map(|_| {
                let x1: f64 = rng.gen();
                let x2: f64 = rng.gen();
                let a: f64 = rng.gen();
                let eta = -1.6 + 2.6 * x1 + 1.8 * x2 + 16.0 * a - 20.0 * a * a;
                let mu = 1.0 / (1.0 + (-eta as f64).exp());
                let r: f64 = rng.gen();
                let y = if r < mu { 1.0 } else { 0.0 };
                Observation::new(y, a, vec![x1, x2], 0.5, f64::INFINITY)
            })
            .collect();
        crate::data::Dataset::new(obs).unwrap()
    }

    #[test]
    fn cv_planted_dominance_selects_winner() {
        // an absurd ridge forces a covariate-blind rule that is strictly
        // worse held-out when the favorable window tracks x
        let ds = strong_signal_dataset(400, 9);
        let mut good = quick_hyper(0.5, 0.1);
        good.solver.subproblem_iterations = 300;
        let mut bad = quick_hyper(0.5, 0.1);
        bad.lambda = 2f64.powi(24);
        bad.p_init = 0.0;
        // bad first, so a tie would pick it
        let grid = [bad.clone(), good.clone()];
        let propensity = crate::nuisance::fit_propensity(&ds, false).unwrap();
        let dose_prob = crate::nuisance::fit_dose_probability(&ds).unwrap();
        let nuisance = crate::nuisance::NuisanceModels {
            propensity,
            dose_prob,
        };
        let c = crate::loss::compute_c_loss(&ds, &nuisance, 0.7, 51).unwrap();
        let ctx = LossContext::new(nuisance.clone(), 0.7, 1e-3, c, 1e4 * c);
        let bounds: Vec<(f64, f64)> = ds
            .iter()
            .map(|o| {
                let ind = indirect_pdi(&nuisance.dose_prob, &o.x, 0.7, 0.01);
                (ind.ell, ind.u)
            })
            .collect();
        let grid: Vec<_> = grid.iter().map(|h| h.with_c_loss(c)).collect();
        let (best, records) =
            cross_validate(&ds, &ctx, &bounds, &grid, 3, 8, DirectVariant::Joint).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(best.lambda, 0.1, "cv table: {records:?}");
        // every fold should prefer the personalized candidate here
        let dominated = records[1]
            .fold_losses
            .iter()
            .zip(&records[0].fold_losses)
            .filter(|(g, b)| g < b)
            .count();
        assert_eq!(dominated, 3, "dominance broke: {records:?}");
    }

    #[test]
    fn cross_fit_aggregate_is_mean_of_folds() {
        let ds = generate_dataset(&DgpParams::new(60, 21)).unwrap();
        let cfg = small_cfg(13, vec![quick_hyper(0.5, 1.0)]);
        let est = cross_fit(&ds, 2, &cfg, DirectVariant::Joint).unwrap();
        assert_eq!(est.fold_rules.len(), 2);
        // provenance: each fold's anchors come from its own rows only
        for (rule, idx) in est.fold_rules.iter().zip(&est.fold_indices) {
            assert_eq!(rule.anchors.len(), idx.len());
            for (anchor, &i) in rule.anchors.iter().zip(idx.iter()) {
                assert_eq!(anchor, &ds.observations()[i].x);
            }
        }
        let x = &ds.observations()[0].x;
        let (al, au) = est.predict_raw(x).unwrap();
        let mut ml = 0.0;
        let mut mu_ = 0.0;
        for rule in &est.fold_rules {
            let (l, u) = eval_rule(rule, x).unwrap();
            ml += l;
            mu_ += u;
        }
        assert!((al - ml / 2.0).abs() < 1e-12);
        assert!((au - mu_ / 2.0).abs() < 1e-12);

        assert!(matches!(
            cross_fit(&ds, 1, &cfg, DirectVariant::Joint),
            Err(Error::TooFewRows(_))
        ));
    }

    #[test]
    fn cross_fit_identical_rules_aggregate_to_same() {
        let anchors = vec![vec![0.0; 10], vec![1.0; 10]];
        let rule = IntervalRule {
            beta_l0: 0.2,
            beta_l: vec![0.1, -0.1],
            beta_u0: 0.6,
            beta_u: vec![0.0, 0.05],
            anchors,
            gamma: 1.0,
            width: None,
        };
        let est = CrossFitEstimator {
            fold_rules: vec![rule.clone(), rule.clone(), rule.clone()],
            fold_nuisances: vec![],
            fold_indices: vec![],
        };
        let x = vec![0.3; 10];
        let (al, au) = est.predict_raw(&x).unwrap();
        let (rl, ru) = eval_rule(&rule, &x).unwrap();
        assert!((al - rl).abs() < 1e-12);
        assert!((au - ru).abs() < 1e-12);
    }

    #[test]
    fn fitted_estimator_prediction_is_postprocessed() {
        let ds = generate_dataset(&DgpParams::new(45, 17)).unwrap();
        let cfg = small_cfg(19, vec![quick_hyper(0.5, 1.0)]);
        let fitted = fit_direct(&ds, &cfg, DirectVariant::Joint).unwrap();
        for o in ds.iter().take(20) {
            let (l, u, _) = fitted.predict(&o.x).unwrap();
            assert!(0.0 <= l && l <= u && u <= 1.0);
        }
    }

    #[test]
    fn constant_width_fit_keeps_width() {
        let ds = generate_dataset(&DgpParams::new(45, 23)).unwrap();
        let cfg = small_cfg(29, vec![quick_hyper(0.5, 1.0)]);
        let fitted = fit_direct(&ds, &cfg, DirectVariant::ConstantWidth).unwrap();
        let w = fitted.rule.width.expect("constant-width rule");
        assert!(w >= 0.0);
        for o in ds.iter().take(10) {
            let (l, u) = fitted.predict_raw(&o.x).unwrap();
            assert!((u - l - w).abs() < 1e-10);
        }
    }

    #[test]
    fn indirect_output_is_winsorized_input_for_fallback() {
        // fallback average stays within [0,1] even for wild inputs
        let o = Observation::new(1.0, 0.5, vec![0.0], 0.0, 2.0);
        let _ = o;
        let (l, u, used) = postprocess(1.6, -0.2);
        assert!(used && l == u && (0.0..=1.0).contains(&l));
    }
}
