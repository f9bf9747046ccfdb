//! Command-line interface: simulation experiments, fitting, prediction,
//! evaluation, and oracle emission for personalized dose intervals.

mod config;
mod csvio;
mod modelfile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;
use csvio::{fmt_f64, read_covariates, read_dataset, write_file};
use modelfile::ModelFile;
use pdi_core::data::SolverControls;
use pdi_core::metrics::RawInterval;
use pdi_core::pipeline::{fit_direct, postprocess, DirectVariant, FitConfig};
use pdi_core::simulation::{benchmark_grid, cv_budget, EstimatorKind, ExperimentConfig};
use pdi_core::{
    classification_metrics, contingency, eval_rule, invalid_proportion, oracle_pdi,
    run_experiment, Dataset, Observation,
};

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Schema(String),
    Version(String),
    Core(pdi_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Version(m) => write!(f, "version error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<pdi_core::Error> for CliError {
    fn from(e: pdi_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "pdi", about = "Personalized two-sided dose intervals", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the simulation study and emit the results table.
    Simulate(SimulateArgs),
    /// Fit a direct estimator on a labeled CSV and save the model.
    Fit(FitArgs),
    /// Evaluate a saved model on covariates, emitting winsorized intervals.
    Predict(PredictArgs),
    /// Score a saved model against a labeled test CSV.
    Evaluate(EvaluateArgs),
    /// Emit closed-form oracle intervals for simulation covariates.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Configuration file ([simulate] section).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Probability levels, comma separated.
    #[arg(long)]
    alpha: Option<String>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Simulation replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Dose noise scale (standard deviation).
    #[arg(long = "sd-a")]
    sd_a: Option<f64>,
    /// Outcome noise scale (standard deviation).
    #[arg(long = "sd-y")]
    sd_y: Option<f64>,
    /// Indirect search grid step.
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
    /// Estimators to run, comma separated (d-joint, d-cw, ind-para).
    #[arg(long)]
    estimators: Option<String>,
    /// Training set size per replicate.
    #[arg(long = "train-size")]
    train_size: Option<usize>,
    /// Test set size per replicate.
    #[arg(long = "test-size")]
    test_size: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Configuration file ([fit] section).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Labeled training CSV (y, a, t_lo, t_hi, x1..xd).
    #[arg(long)]
    data: PathBuf,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    /// Estimator kind: d-joint or d-cw.
    #[arg(long)]
    estimator: Option<String>,
    /// Probability level.
    #[arg(long)]
    alpha: Option<String>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Indirect search grid step (initialization targets).
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
    /// Model the propensity density on log doses.
    #[arg(long = "log-dose")]
    log_dose: bool,
    /// Min-max normalize doses into [0,1] before fitting; the transform is
    /// stored in the model.
    #[arg(long = "normalize-dose")]
    normalize_dose: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Saved model path.
    #[arg(long)]
    model: PathBuf,
    /// Covariate CSV (x1..xd).
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Saved model path.
    #[arg(long)]
    model: PathBuf,
    /// Labeled test CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output metrics CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Covariate CSV with x1..x10 (simulation generator covariates).
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Probability level.
    #[arg(long)]
    alpha: Option<String>,
    /// Outcome noise scale.
    #[arg(long = "sd-y")]
    sd_y: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn parse_alpha_list(raw: &Option<String>) -> Result<Option<Vec<f64>>, CliError> {
    match raw {
        None => Ok(None),
        Some(s) => config::parse_f64_list(s).map(Some).map_err(CliError::Schema),
    }
}

fn parse_estimators(raw: &str) -> Result<Vec<EstimatorKind>, CliError> {
    raw.split(',')
        .map(|tok| {
            EstimatorKind::parse(tok.trim())
                .ok_or_else(|| CliError::Schema(format!("unknown estimator `{tok}`")))
        })
        .collect()
}

fn solver_from_config(cfg: &Config, section: &str) -> Result<SolverControls, CliError> {
    let mut solver = SolverControls::default();
    if let Some(v) = cfg.get_usize(section, "max_dc_iterations")? {
        solver.max_dc_iterations = v;
    }
    if let Some(v) = cfg.get_usize(section, "subproblem_iterations")? {
        solver.subproblem_iterations = v;
    }
    if let Some(v) = cfg.get_f64(section, "dc_tolerance")? {
        solver.tolerance = v;
    }
    Ok(solver)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let sect = "simulate";
    let mut config = ExperimentConfig::default();
    if let Some(v) = cfg.get_f64_list(sect, "alphas")? {
        config.alphas = v;
    }
    if let Some(v) = parse_alpha_list(&args.alpha)? {
        config.alphas = v;
    }
    if let Some(raw) = cfg.get(sect, "estimators") {
        config.estimators = parse_estimators(raw)?;
    }
    if let Some(raw) = &args.estimators {
        config.estimators = parse_estimators(raw)?;
    }
    let pick_usize = |flag: Option<usize>, key: &str| -> Result<Option<usize>, CliError> {
        Ok(flag.or(cfg.get_usize(sect, key)?))
    };
    if let Some(v) = pick_usize(args.replicates, "replicates")? {
        config.replicates = v;
    }
    if let Some(v) = pick_usize(args.folds, "folds")? {
        config.cv_folds = v;
    }
    if let Some(v) = pick_usize(args.train_size, "train_size")? {
        config.train_size = v;
    }
    if let Some(v) = pick_usize(args.test_size, "test_size")? {
        config.test_size = v;
    }
    if let Some(v) = args.seed.or(cfg.get_u64(sect, "seed")?) {
        config.seed = v;
    }
    if let Some(v) = args.sd_a.or(cfg.get_f64(sect, "sd_a")?) {
        config.sd_a = v;
    }
    if let Some(v) = args.sd_y.or(cfg.get_f64(sect, "sd_y")?) {
        config.sd_y = v;
    }
    if let Some(v) = args.grid_step.or(cfg.get_f64(sect, "grid_step")?) {
        config.grid_step = v;
    }
    config.solver = solver_from_config(&cfg, sect)?;

    let table = run_experiment(&config).map_err(CliError::Core)?;
    write_file(&args.out, &table.to_csv())?;
    print!("{}", table.to_text());
    println!(
        "wrote {} ({} replicates per row)",
        args.out.display(),
        table.replicates
    );
    Ok(())
}

struct DoseNorm {
    lo: f64,
    hi: f64,
}

impl DoseNorm {
    fn apply(&self, a: f64) -> f64 {
        ((a - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

fn normalize_doses(ds: &Dataset) -> Result<(Dataset, DoseNorm), CliError> {
    let lo = ds.iter().map(|o| o.a).fold(f64::INFINITY, f64::min);
    let hi = ds.iter().map(|o| o.a).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(CliError::Schema(
            "cannot normalize doses: degenerate dose range".into(),
        ));
    }
    let norm = DoseNorm { lo, hi };
    let obs: Vec<Observation> = ds
        .iter()
        .map(|o| Observation::new(o.y, norm.apply(o.a), o.x.clone(), o.t_lo, o.t_hi))
        .collect();
    Ok((Dataset::new(obs)?, norm))
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let sect = "fit";
    let raw = read_dataset(&args.data)?;
    let (data, dose_norm) = if args.normalize_dose
        || cfg.get_bool(sect, "normalize_dose")?.unwrap_or(false)
    {
        let (ds, norm) = normalize_doses(&raw)?;
        (ds, Some((norm.lo, norm.hi)))
    } else {
        (raw, None)
    };

    let estimator = args
        .estimator
        .as_deref()
        .or(cfg.get(sect, "estimator"))
        .unwrap_or("d-joint")
        .to_ascii_lowercase();
    let variant = match estimator.as_str() {
        "d-joint" => DirectVariant::Joint,
        "d-cw" => DirectVariant::ConstantWidth,
        other => {
            return Err(CliError::Schema(format!(
                "unknown estimator `{other}` (expected d-joint or d-cw)"
            )))
        }
    };
    let alpha = parse_alpha_list(&args.alpha)?
        .and_then(|v| v.first().copied())
        .or(cfg.get_f64(sect, "alpha")?)
        .unwrap_or(0.7);
    let solver = solver_from_config(&cfg, sect)?;

    let mut grid = benchmark_grid(variant, &cv_budget(&solver));
    // config may override each grid axis
    let override_axis = |key: &str| cfg.get_f64_list(sect, key);
    let gammas = override_axis("gammas")?;
    let lambdas = override_axis("lambdas")?;
    let ps = override_axis("ps")?;
    let kappas = override_axis("kappas")?;
    let epsilon = cfg.get_f64(sect, "epsilon")?;
    if gammas.is_some() || lambdas.is_some() || ps.is_some() || kappas.is_some() || epsilon.is_some()
    {
        let base = grid[0].clone();
        let gammas = gammas.unwrap_or_else(|| vec![2f64.powf(1.5), 2f64.powf(0.75), 1.0]);
        let lambdas = lambdas.unwrap_or_else(|| vec![1.0, 32.0]);
        let ps = ps.unwrap_or_else(|| vec![0.0, 0.1, 0.5, 1.0]);
        let kappas = match variant {
            DirectVariant::Joint => kappas.unwrap_or_else(|| vec![0.0, 1024.0]),
            DirectVariant::ConstantWidth => vec![0.0],
        };
        grid = Vec::new();
        for &gamma in &gammas {
            for &lambda in &lambdas {
                for &p in &ps {
                    for &kappa in &kappas {
                        let mut h = base.clone();
                        h.gamma = gamma;
                        h.lambda = lambda;
                        h.p_init = p;
                        h.kappa = kappa;
                        if let Some(e) = epsilon {
                            h.epsilon = e;
                        }
                        grid.push(h);
                    }
                }
            }
        }
    }

    let fit_cfg = FitConfig {
        alpha,
        folds: args.folds.or(cfg.get_usize(sect, "folds")?).unwrap_or(10),
        seed: args.seed.or(cfg.get_u64(sect, "seed")?).unwrap_or(1),
        grid,
        grid_step: args
            .grid_step
            .or(cfg.get_f64(sect, "grid_step")?)
            .unwrap_or(0.005),
        log_dose: args.log_dose || cfg.get_bool(sect, "log_dose")?.unwrap_or(false),
        final_solver: Some(solver),
    };
    let fitted = fit_direct(&data, &fit_cfg, variant).map_err(CliError::Core)?;
    let model = ModelFile {
        kind: estimator,
        alpha,
        rule: fitted.rule.clone(),
        nuisance: fitted.nuisance.clone(),
        dose_norm,
        c_loss: fitted.c_loss,
    };
    modelfile::save(&args.out, &model)?;
    println!(
        "fitted {} on {} rows (d = {}); selected gamma={} lambda={} p={} kappa={}; wrote {}",
        model.kind,
        data.len(),
        data.d(),
        fitted.hyper.gamma,
        fitted.hyper.lambda,
        fitted.hyper.p_init,
        fitted.hyper.kappa,
        args.out.display()
    );
    Ok(())
}

fn check_dim(model: &ModelFile, d: usize) -> Result<(), CliError> {
    let want = model.rule.anchors.first().map(|a| a.len()).unwrap_or(0);
    if d != want {
        return Err(CliError::Schema(format!(
            "covariate count mismatch: model expects {want}, data has {d}"
        )));
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let model = modelfile::load(&args.model)?;
    let rows = read_covariates(&args.data)?;
    check_dim(&model, rows[0].len())?;
    let mut out = String::from("ell,u,fallback\n");
    for x in &rows {
        let (ell, u) = eval_rule(&model.rule, x).map_err(CliError::Core)?;
        let (ell, u, fallback) = postprocess(ell, u);
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(ell),
            fmt_f64(u),
            u8::from(fallback)
        ));
    }
    write_file(&args.out, &out)?;
    println!("wrote {} predictions to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let model = modelfile::load(&args.model)?;
    let raw_ds = read_dataset(&args.data)?;
    check_dim(&model, raw_ds.d())?;
    let ds = match model.dose_norm {
        Some((lo, hi)) => {
            let norm = DoseNorm { lo, hi };
            let obs: Vec<Observation> = raw_ds
                .iter()
                .map(|o| Observation::new(o.y, norm.apply(o.a), o.x.clone(), o.t_lo, o.t_hi))
                .collect();
            Dataset::new(obs).map_err(CliError::Core)?
        }
        None => raw_ds,
    };
    let mut raw = Vec::with_capacity(ds.len());
    let mut processed = Vec::with_capacity(ds.len());
    for o in ds.iter() {
        let (ell, u) = eval_rule(&model.rule, &o.x).map_err(CliError::Core)?;
        raw.push(RawInterval {
            ell,
            u,
            flagged_invalid: false,
        });
        let (l, uu, _) = postprocess(ell, u);
        processed.push((l, uu));
    }
    let invalid = invalid_proportion(&raw).map_err(CliError::Core)?;
    let table = contingency(&processed, &ds).map_err(CliError::Core)?;
    let metrics = classification_metrics(&table).map_err(CliError::Core)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    let mut out = String::from(
        "tp,tn,fp,fn,accuracy,f1_score,mcc,recall,precision,cohens_kappa,invalid_proportion\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{:.6}\n",
        table.true_pos,
        table.true_neg,
        table.false_pos,
        table.false_neg,
        fmt(metrics.accuracy),
        fmt(metrics.f1),
        fmt(metrics.mcc),
        fmt(metrics.recall),
        fmt(metrics.precision),
        fmt(metrics.kappa),
        invalid
    ));
    write_file(&args.out, &out)?;
    println!(
        "evaluated {} rows: accuracy {}, invalid proportion {:.4}; wrote {}",
        ds.len(),
        fmt(metrics.accuracy),
        invalid,
        args.out.display()
    );
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let rows = read_covariates(&args.data)?;
    if rows[0].len() != 10 {
        return Err(CliError::Schema(format!(
            "the simulation oracle needs x1..x10, got {} covariates",
            rows[0].len()
        )));
    }
    let alpha = parse_alpha_list(&args.alpha)?
        .and_then(|v| v.first().copied())
        .unwrap_or(0.7);
    let sd_y = args.sd_y.unwrap_or(0.25);
    let mut out = String::from("ell,u,defined\n");
    let mut undefined = 0usize;
    for x in &rows {
        match oracle_pdi(x, alpha, sd_y) {
            Ok((ell, u)) => out.push_str(&format!("{},{},1\n", fmt_f64(ell), fmt_f64(u))),
            Err(pdi_core::Error::NoInterval) => {
                undefined += 1;
                out.push_str("-,-,0\n");
            }
            Err(e) => return Err(CliError::Core(e)),
        }
    }
    write_file(&args.out, &out)?;
    println!(
        "wrote {} oracle intervals ({} undefined) to {}",
        rows.len(),
        undefined,
        args.out.display()
    );
    Ok(())
}
