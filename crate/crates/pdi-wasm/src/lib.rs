//! Browser demo bindings: interactive exploration of dose-probability
//! curves, oracle intervals, surrogate-loss shapes, and a small in-browser
//! fit comparing the direct and indirect estimators.
//!
//! Build with `wasm-pack build --target web crates/pdi-wasm` (or cargo with
//! the `wasm32-unknown-unknown` target plus `wasm-bindgen`); the static
//! page in `www/` loads the generated module.

use wasm_bindgen::prelude::*;

use pdi_core::data::{HyperParams, SolverControls};
use pdi_core::loss::{phi_eps, phi_parts, psi_eps, psi_parts};
use pdi_core::nuisance::{fit_dose_probability, fit_propensity, DoseCurve, NuisanceModels};
use pdi_core::pipeline::{fit_direct, indirect_pdi, DirectVariant, FitConfig};
use pdi_core::simulation::{generate_dataset, nu_mean, oracle_pdi, DgpParams, TrueCurve};

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Covariates for the demo patient: four sliders map onto the generator's
/// most influential coordinates (x1 left-arm slope, x4 plateau width,
/// x7 right-arm slope, x10 right-arm slope jump), the rest stay at zero.
fn patient(x1: f64, x4: f64, x7: f64, x10: f64) -> Vec<f64> {
    let mut x = vec![0.0; 10];
    x[0] = x1;
    x[3] = x4;
    x[6] = x7;
    x[9] = x10;
    x
}

/// Dose grid, true outcome mean, and true dose-probability curve for one
/// patient, flattened as [a..., nu..., mu...].
#[wasm_bindgen]
pub fn dose_probability_curve(
    x1: f64,
    x4: f64,
    x7: f64,
    x10: f64,
    sd_y: f64,
    n: usize,
) -> Vec<f64> {
    let x = patient(x1, x4, x7, x10);
    let curve = TrueCurve {
        sd_y,
        threshold: 0.75,
    };
    let doses = grid(n.max(2));
    let mut out = Vec::with_capacity(3 * doses.len());
    out.extend_from_slice(&doses);
    for &a in &doses {
        out.push(nu_mean(a, &x));
    }
    for &a in &doses {
        out.push(curve.mu(a, &x));
    }
    out
}

/// Closed-form oracle interval for the demo patient: [ell, u, defined].
#[wasm_bindgen]
pub fn oracle_interval(x1: f64, x4: f64, x7: f64, x10: f64, alpha: f64, sd_y: f64) -> Vec<f64> {
    match oracle_pdi(&patient(x1, x4, x7, x10), alpha, sd_y) {
        Ok((ell, u)) => vec![ell, u, 1.0],
        Err(_) => vec![0.0, 0.0, 0.0],
    }
}

/// Shapes of the truncated hinge at the given bandwidth for the interval
/// [0.3, 0.7], flattened as [t..., psi..., psi_plus..., psi_minus...].
#[wasm_bindgen]
pub fn hinge_shapes(eps: f64, n: usize) -> Vec<f64> {
    let (ell, u) = (0.3, 0.7);
    let n = n.max(2);
    let ts: Vec<f64> = (0..n)
        .map(|k| -0.2 + 1.4 * k as f64 / (n - 1) as f64)
        .collect();
    let mut out = Vec::with_capacity(4 * ts.len());
    out.extend_from_slice(&ts);
    for &t in &ts {
        out.push(psi_eps(ell, t, u, eps).unwrap_or(0.0));
    }
    for &t in &ts {
        out.push(psi_parts(ell, t, u, eps).map(|p| p.0).unwrap_or(0.0));
    }
    for &t in &ts {
        out.push(psi_parts(ell, t, u, eps).map(|p| p.1).unwrap_or(0.0));
    }
    out
}

/// Monotonicity hinge over the bound gap: [gap..., phi..., plus..., minus...].
#[wasm_bindgen]
pub fn monotonicity_hinge(eps: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let gaps: Vec<f64> = (0..n)
        .map(|k| -3.0 * eps + 5.0 * eps * k as f64 / (n - 1) as f64)
        .collect();
    let mut out = Vec::with_capacity(4 * gaps.len());
    out.extend_from_slice(&gaps);
    for &g in &gaps {
        // gap = u - ell, evaluated at ell = 0.5
        out.push(phi_eps(0.5, 0.5 + g, eps).unwrap_or(0.0));
    }
    for &g in &gaps {
        out.push(phi_parts(0.5, 0.5 + g, eps).map(|p| p.0).unwrap_or(0.0));
    }
    for &g in &gaps {
        out.push(phi_parts(0.5, 0.5 + g, eps).map(|p| p.1).unwrap_or(0.0));
    }
    out
}

/// Fits the direct and indirect estimators on a small simulated cohort and
/// evaluates both along a slice where x1 sweeps over [0,1] (other demo
/// coordinates fixed at x4 = 0.5). Returns
/// [x1..., ind_l..., ind_u..., fit_l..., fit_u..., oracle_l..., oracle_u...]
/// over `m` slice points.
#[wasm_bindgen]
pub fn fit_demo_cohort(n: usize, seed: u64, alpha: f64, m: usize) -> Result<Vec<f64>, JsValue> {
    let n = n.clamp(30, 200);
    let m = m.clamp(2, 200);
    let train = generate_dataset(&DgpParams::new(n, seed)).map_err(err_to_js)?;
    let solver = SolverControls {
        subproblem_iterations: 200,
        max_dc_iterations: 10,
        ..Default::default()
    };
    let mut hyper = HyperParams {
        gamma: 2f64.powf(1.5),
        lambda: 1.0,
        kappa: 1024.0,
        p_init: 0.5,
        alpha,
        ..Default::default()
    };
    hyper.solver = solver.clone();
    let cfg = FitConfig {
        alpha,
        folds: 3,
        seed,
        grid: vec![hyper],
        grid_step: 0.01,
        log_dose: false,
        final_solver: Some(solver),
    };
    let fitted = fit_direct(&train, &cfg, DirectVariant::Joint).map_err(err_to_js)?;
    let nuisance = NuisanceModels {
        propensity: fit_propensity(&train, false).map_err(err_to_js)?,
        dose_prob: fit_dose_probability(&train).map_err(err_to_js)?,
    };

    let xs: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    let mut ind_l = Vec::with_capacity(m);
    let mut ind_u = Vec::with_capacity(m);
    let mut fit_l = Vec::with_capacity(m);
    let mut fit_u = Vec::with_capacity(m);
    let mut or_l = Vec::with_capacity(m);
    let mut or_u = Vec::with_capacity(m);
    for &x1 in &xs {
        let x = patient(x1, 0.5, 0.0, 0.0);
        let ind = indirect_pdi(&nuisance.dose_prob, &x, alpha, 0.005);
        ind_l.push(ind.ell);
        ind_u.push(ind.u);
        let (l, u, _) = fitted.predict(&x).map_err(err_to_js)?;
        fit_l.push(l);
        fit_u.push(u);
        match oracle_pdi(&x, alpha, 0.25) {
            Ok((l, u)) => {
                or_l.push(l);
                or_u.push(u);
            }
            Err(_) => {
                or_l.push(f64::NAN);
                or_u.push(f64::NAN);
            }
        }
    }
    let mut out = Vec::with_capacity(7 * m);
    out.extend_from_slice(&xs);
    out.extend_from_slice(&ind_l);
    out.extend_from_slice(&ind_u);
    out.extend_from_slice(&fit_l);
    out.extend_from_slice(&fit_u);
    out.extend_from_slice(&or_l);
    out.extend_from_slice(&or_u);
    Ok(out)
}

fn err_to_js(e: pdi_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}
