//! Minimal end-to-end session: simulate a cohort, fit the joint estimator
//! with one hyperparameter setting, and print intervals for a few patients.

use pdi_core::pipeline::{fit_direct, DirectVariant, FitConfig};
use pdi_core::simulation::{generate_dataset, oracle_pdi, DgpParams};
use pdi_core::{HyperParams, SolverControls};

fn main() -> pdi_core::Result<()> {
    let train = generate_dataset(&DgpParams::new(200, 42))?;
    let solver = SolverControls {
        subproblem_iterations: 300,
        max_dc_iterations: 12,
        ..Default::default()
    };
    let hyper = HyperParams {
        gamma: 2f64.powf(1.5),
        lambda: 1.0,
        kappa: 1024.0,
        p_init: 0.5,
        alpha: 0.7,
        solver: solver.clone(),
        ..Default::default()
    };
    let cfg = FitConfig {
        alpha: 0.7,
        folds: 5,
        seed: 7,
        grid: vec![hyper],
        grid_step: 0.005,
        log_dose: false,
        final_solver: Some(solver),
    };
    let fitted = fit_direct(&train, &cfg, DirectVariant::Joint)?;
    println!("fitted on {} rows; C_L = {:.3}", train.len(), fitted.c_loss);
    println!("{:>28} {:>16} {:>16}", "patient", "fitted", "oracle");
    for o in train.observations().iter().take(8) {
        let (lo, hi, _) = fitted.predict(&o.x)?;
        let oracle = oracle_pdi(&o.x, 0.7, 0.25)?;
        println!(
            "x1={:.2} x7={:+.2} x10={:.0}      [{lo:.3}, {hi:.3}]  [{:.3}, {:.3}]",
            o.x[0], o.x[6], o.x[9], oracle.0, oracle.1
        );
    }
    Ok(())
}
