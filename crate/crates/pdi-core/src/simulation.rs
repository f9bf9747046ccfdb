//! Simulation study: the hormetic data-generating process, its closed-form
//! oracle interval, and the experiment runner that reproduces the benchmark
//! table at configurable scale.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::{Dataset, HyperParams, Observation, SolverControls};
use crate::error::{Error, Result};
use crate::metrics::{
    classification_metrics, contingency, interval_errors, invalid_proportion, MetricsReport,
    RawInterval,
};
use crate::pipeline::{fit_direct, indirect_pdi, postprocess, DirectVariant, FitConfig};
use crate::nuisance::{fit_dose_probability, DoseCurve};
use crate::stats::{derive_seed, normal_quantile};

/// Outcome threshold of the generator's desired range `[0.75, inf)`.
pub const OUTCOME_THRESHOLD: f64 = 0.75;

/// Generator parameters: sample size, seed, and the dose/outcome noise
/// scales (standard deviations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpParams {
    pub n: usize,
    pub seed: u64,
    pub sd_a: f64,
    pub sd_y: f64,
    pub threshold: f64,
}

impl DgpParams {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            sd_a: 0.1,
            sd_y: 0.25,
            threshold: OUTCOME_THRESHOLD,
        }
    }
}

/// Tent-shaped mean outcome: a plateau of height 1.1 over `[m1, m2]` with
/// covariate-dependent arms.
pub fn nu_mean(a: f64, x: &[f64]) -> f64 {
    let m1 = 0.2 + 0.02 * (x[0] + x[1] + x[2] + x[4] + x[5]);
    let m2 = m1 + 0.1 * x[3] + 0.1 * x[7];
    let c_l = 2.5 + 10.0 * x[0];
    let c_u = 0.5 + x[6] + 2.0 * x[9];
    1.1 - c_l * (m1 - a).max(0.0) - c_u * (a - m2).max(0.0)
}

/// True dose-probability curve of the generator.
pub struct TrueCurve {
    pub sd_y: f64,
    pub threshold: f64,
}

impl DoseCurve for TrueCurve {
    fn mu(&self, a: f64, x: &[f64]) -> f64 {
        crate::stats::normal_cdf((nu_mean(a, x) - self.threshold) / self.sd_y)
    }
}

/// Draw statistics of one generated dataset.
#[derive(Debug, Clone, Copy, Default)]
pub struct DgpStats {
    /// Dose draws clipped into [0,1].
    pub clipped_doses: usize,
}

/// Generates one dataset: four uniform, three standard normal, and three
/// Bernoulli covariates; a Gaussian dose centered at `sum(x)/15 + 0.2`
/// clipped to the unit interval; and a Gaussian outcome around the tent
/// mean. Deterministic per seed.
pub fn generate_dataset(params: &DgpParams) -> Result<Dataset> {
    generate_with_stats(params).map(|(ds, _)| ds)
}

/// As [`generate_dataset`], also reporting clipping counts.
pub fn generate_with_stats(params: &DgpParams) -> Result<(Dataset, DgpStats)> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(params.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut stats = DgpStats::default();
    let mut obs = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let mut x = Vec::with_capacity(10);
        for _ in 0..4 {
            x.push(rng.gen::<f64>());
        }
        for _ in 0..3 {
            x.push(std_normal.sample(&mut rng));
        }
        for _ in 0..3 {
            x.push(if rng.gen::<bool>() { 1.0 } else { 0.0 });
        }
        let mean_a = x.iter().sum::<f64>() / 15.0 + 0.2;
        let raw_a = mean_a + params.sd_a * std_normal.sample(&mut rng);
        let a = if (0.0..=1.0).contains(&raw_a) {
            raw_a
        } else {
            stats.clipped_doses += 1;
            raw_a.clamp(0.0, 1.0)
        };
        let y = nu_mean(a, &x) + params.sd_y * std_normal.sample(&mut rng);
        obs.push(Observation::new(y, a, x, params.threshold, f64::INFINITY));
    }
    Ok((Dataset::new(obs)?, stats))
}

/// Closed-form oracle interval: the level set of the tent mean at
/// `tau = threshold + sd_y * z(alpha)`, clipped to [0,1]. `NoInterval` when
/// the level exceeds the plateau height.
pub fn oracle_pdi(x: &[f64], alpha: f64, sd_y: f64) -> Result<(f64, f64)> {
    let tau = OUTCOME_THRESHOLD + sd_y * normal_quantile(alpha);
    if tau > 1.1 {
        return Err(Error::NoInterval);
    }
    let m1 = 0.2 + 0.02 * (x[0] + x[1] + x[2] + x[4] + x[5]);
    let m2 = m1 + 0.1 * x[3] + 0.1 * x[7];
    let c_l = 2.5 + 10.0 * x[0];
    let c_u = 0.5 + x[6] + 2.0 * x[9];
    let slack = 1.1 - tau;
    let ell = m1 - slack / c_l;
    let u = if c_u > 0.0 { m2 + slack / c_u } else { 1.0 };
    Ok((ell.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
}

/// Estimators the experiment runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    DJoint,
    DCw,
    IndPara,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::DJoint => "D-Joint",
            EstimatorKind::DCw => "D-CW",
            EstimatorKind::IndPara => "Ind-Para",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d-joint" | "djoint" => Some(Self::DJoint),
            "d-cw" | "dcw" => Some(Self::DCw),
            "ind-para" | "indpara" => Some(Self::IndPara),
            _ => None,
        }
    }
}

/// Experiment configuration mirroring the benchmark protocol.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub alphas: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub replicates: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub sd_a: f64,
    pub sd_y: f64,
    pub cv_folds: usize,
    pub grid_step: f64,
    pub solver: SolverControls,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.7],
            estimators: vec![
                EstimatorKind::DJoint,
                EstimatorKind::DCw,
                EstimatorKind::IndPara,
            ],
            replicates: 20,
            train_size: 500,
            test_size: 500,
            seed: 20240531,
            sd_a: 0.1,
            sd_y: 0.25,
            cv_folds: 10,
            grid_step: 0.005,
            solver: SolverControls::default(),
        }
    }
}

/// The benchmark hyperparameter grid: inverse kernel scales in
/// {2^-3, 2^-1.5, 2^0} (bandwidths 1/sqrt of those), lambda in {2^0, 2^5},
/// p in {0, 0.1, 0.5, 1}, kappa in {0, 2^10}, epsilon fixed at 1e-3. The
/// constant-width variant drops the kappa axis because its penalty
/// vanishes under shared coefficients.
///
/// The grid values are stated as inverse squared scales `sigma` in
/// `exp(-sigma ||dx||^2)`; with this crate's `exp(-||dx||^2 / gamma^2)`
/// convention that is `gamma = 1/sqrt(sigma)`. Read literally as `gamma`,
/// those values would leave the kernel numerically diagonal on
/// 10-dimensional covariates and every rule would collapse to a constant.
pub fn benchmark_grid(variant: DirectVariant, solver: &SolverControls) -> Vec<HyperParams> {
    let gammas = [2f64.powf(1.5), 2f64.powf(0.75), 1.0];
    let lambdas = [1.0, 32.0];
    let ps = [0.0, 0.1, 0.5, 1.0];
    let kappas: &[f64] = match variant {
        DirectVariant::Joint => &[0.0, 1024.0],
        DirectVariant::ConstantWidth => &[0.0],
    };
    let mut grid = Vec::new();
    for &gamma in &gammas {
        for &lambda in &lambdas {
            for &p in &ps {
                for &kappa in kappas {
                    grid.push(HyperParams {
                        gamma,
                        lambda,
                        epsilon: 1e-3,
                        kappa,
                        p_init: p,
                        alpha: 0.7,
                        c_loss: 1.0,
                        c_cvx: 1e4,
                        solver: solver.clone(),
                    });
                }
            }
        }
    }
    grid
}

/// Averaged evaluation of one `(alpha, estimator)` cell.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub alpha: f64,
    pub estimator: EstimatorKind,
    pub invalid_pdi: f64,
    pub mae: f64,
    pub mse: f64,
    pub metrics: MetricsReport,
}

/// Full experiment output.
#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub rows: Vec<TableRow>,
    pub replicates: usize,
}

const CSV_HEADER: &str =
    "alpha,Estimator,Invalid PDI,MAE,MSE,Accuracy,F1 Score,MCC,Recall,Precision,Cohen's kappa";

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".to_string(),
    }
}

impl ExperimentTable {
    /// CSV with the benchmark table's column names, three decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:.2},{},{:.3},{:.3},{:.3},{},{},{},{},{},{}\n",
                r.alpha,
                r.estimator.label(),
                r.invalid_pdi,
                r.mae,
                r.mse,
                fmt_metric(r.metrics.accuracy),
                fmt_metric(r.metrics.f1),
                fmt_metric(r.metrics.mcc),
                fmt_metric(r.metrics.recall),
                fmt_metric(r.metrics.precision),
                fmt_metric(r.metrics.kappa),
            ));
        }
        out
    }

    /// Fixed-width text rendering of the same table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>5} {:>9} {:>11} {:>7} {:>7} {:>9} {:>9} {:>7} {:>7} {:>10} {:>13}\n",
            "alpha",
            "Estimator",
            "Invalid PDI",
            "MAE",
            "MSE",
            "Accuracy",
            "F1 Score",
            "MCC",
            "Recall",
            "Precision",
            "Cohen's kappa"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>5.2} {:>9} {:>11.3} {:>7.3} {:>7.3} {:>9} {:>9} {:>7} {:>7} {:>10} {:>13}\n",
                r.alpha,
                r.estimator.label(),
                r.invalid_pdi,
                r.mae,
                r.mse,
                fmt_metric(r.metrics.accuracy),
                fmt_metric(r.metrics.f1),
                fmt_metric(r.metrics.mcc),
                fmt_metric(r.metrics.recall),
                fmt_metric(r.metrics.precision),
                fmt_metric(r.metrics.kappa),
            ));
        }
        out
    }
}

/// Per-replicate evaluation of one estimator at one alpha.
#[derive(Debug, Clone)]
struct ReplicateEval {
    invalid: f64,
    mae: f64,
    mse: f64,
    metrics: MetricsReport,
}

fn evaluate_predictions(
    raw: &[RawInterval],
    test: &Dataset,
    alpha: f64,
    sd_y: f64,
) -> Result<ReplicateEval> {
    let invalid = invalid_proportion(raw)?;
    let processed: Vec<(f64, f64)> = raw
        .iter()
        .map(|r| {
            let (l, u, _) = postprocess(r.ell, r.u);
            (l, u)
        })
        .collect();
    let oracle: Vec<(f64, f64)> = test
        .iter()
        .enumerate()
        .map(|(i, o)| oracle_pdi(&o.x, alpha, sd_y).map_err(|_| Error::OracleUndefined { index: i }))
        .collect::<Result<Vec<_>>>()?;
    let (mae, mse) = interval_errors(&processed, &oracle)?;
    let table = contingency(&processed, test)?;
    let metrics = classification_metrics(&table)?;
    Ok(ReplicateEval {
        invalid,
        mae,
        mse,
        metrics,
    })
}

/// Solver budget used for the many cross-validation ranking fits; the final
/// refit gets the experiment's own (fuller) controls.
pub fn cv_budget(solver: &SolverControls) -> SolverControls {
    SolverControls {
        max_dc_iterations: solver.max_dc_iterations.min(8),
        subproblem_iterations: solver.subproblem_iterations.min(200),
        subproblem_window_tol: solver.subproblem_window_tol.max(1e-5),
        ..solver.clone()
    }
}

fn run_one_replicate(
    config: &ExperimentConfig,
    alpha: f64,
    rep: u64,
) -> Result<Vec<(EstimatorKind, ReplicateEval)>> {
    let train_seed = derive_seed(config.seed, rep * 2);
    let test_seed = derive_seed(config.seed, rep * 2 + 1);
    let train = generate_dataset(&DgpParams {
        n: config.train_size,
        seed: train_seed,
        sd_a: config.sd_a,
        sd_y: config.sd_y,
        threshold: OUTCOME_THRESHOLD,
    })?;
    let test = generate_dataset(&DgpParams {
        n: config.test_size,
        seed: test_seed,
        sd_a: config.sd_a,
        sd_y: config.sd_y,
        threshold: OUTCOME_THRESHOLD,
    })?;

    let mut out = Vec::with_capacity(config.estimators.len());
    for &kind in &config.estimators {
        let raw: Vec<RawInterval> = match kind {
            EstimatorKind::DJoint | EstimatorKind::DCw => {
                let variant = if kind == EstimatorKind::DJoint {
                    DirectVariant::Joint
                } else {
                    DirectVariant::ConstantWidth
                };
                let cfg = FitConfig {
                    alpha,
                    folds: config.cv_folds,
                    seed: derive_seed(config.seed, rep * 11 + 5),
                    grid: benchmark_grid(variant, &cv_budget(&config.solver)),
                    grid_step: config.grid_step,
                    log_dose: false,
                    final_solver: Some(config.solver.clone()),
                };
                let fitted = fit_direct(&train, &cfg, variant)?;
                test.iter()
                    .map(|o| {
                        let (ell, u) = fitted.predict_raw(&o.x)?;
                        Ok(RawInterval {
                            ell,
                            u,
                            flagged_invalid: false,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            EstimatorKind::IndPara => {
                let mu = fit_dose_probability(&train)?;
                test.iter()
                    .map(|o| {
                        let ind = indirect_pdi(&mu, &o.x, alpha, config.grid_step);
                        RawInterval {
                            ell: ind.ell,
                            u: ind.u,
                            flagged_invalid: !ind.valid,
                        }
                    })
                    .collect()
            }
        };
        out.push((kind, evaluate_predictions(&raw, &test, alpha, config.sd_y)?));
    }
    Ok(out)
}

fn average(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Runs the full experiment: per replicate, generates train/test pairs,
/// fits every estimator, and evaluates against the oracle; rows are
/// averaged over replicates in fixed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable> {
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        let evals: Vec<Result<Vec<(EstimatorKind, ReplicateEval)>>> = (0..config.replicates)
            .into_par_iter()
            .map(|rep| run_one_replicate(config, alpha, rep as u64))
            .collect();
        let evals = evals.into_iter().collect::<Result<Vec<_>>>()?;
        for (ei, &kind) in config.estimators.iter().enumerate() {
            let per_rep: Vec<&ReplicateEval> = evals.iter().map(|r| &r[ei].1).collect();
            if per_rep.is_empty() {
                continue;
            }
            let mean =
                |f: &dyn Fn(&ReplicateEval) -> f64| -> f64 {
                    per_rep.iter().map(|r| f(r)).sum::<f64>() / per_rep.len() as f64
                };
            let metrics = MetricsReport {
                accuracy: average(&per_rep.iter().map(|r| r.metrics.accuracy).collect::<Vec<_>>()),
                f1: average(&per_rep.iter().map(|r| r.metrics.f1).collect::<Vec<_>>()),
                mcc: average(&per_rep.iter().map(|r| r.metrics.mcc).collect::<Vec<_>>()),
                recall: average(&per_rep.iter().map(|r| r.metrics.recall).collect::<Vec<_>>()),
                precision: average(
                    &per_rep.iter().map(|r| r.metrics.precision).collect::<Vec<_>>(),
                ),
                kappa: average(&per_rep.iter().map(|r| r.metrics.kappa).collect::<Vec<_>>()),
            };
            rows.push(TableRow {
                alpha,
                estimator: kind,
                invalid_pdi: mean(&|r| r.invalid),
                mae: mean(&|r| r.mae),
                mse: mean(&|r| r.mse),
                metrics,
            });
        }
    }
    Ok(ExperimentTable {
        rows,
        replicates: config.replicates,
    })
}
