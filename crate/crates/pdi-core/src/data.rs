//! Domain types: observations, datasets, hyperparameters, and fitted
//! interval rules.
//!
//! All types are immutable after construction and safe to share across
//! threads.

use crate::error::{Error, Result};

/// One study unit: outcome `y`, dose `a` in [0,1], covariates `x`, the
/// per-unit desired outcome range `[t_lo, t_hi]` (infinities allowed), and
/// the range indicator `r = 1(y in [t_lo, t_hi])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub a: f64,
    pub x: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub r: bool,
}

impl Observation {
    /// Builds an observation, deriving the range indicator from the outcome
    /// and the desired range (closed on both ends).
    pub fn new(y: f64, a: f64, x: Vec<f64>, t_lo: f64, t_hi: f64) -> Self {
        let r = y >= t_lo && y <= t_hi;
        Self {
            y,
            a,
            x,
            t_lo,
            t_hi,
            r,
        }
    }
}

/// A validated collection of observations sharing covariate dimension `d`.
#[derive(Debug, Clone)]
pub struct Dataset {
    observations: Vec<Observation>,
    d: usize,
}

impl Dataset {
    /// Validates and wraps the observations; see [`validate_dataset`].
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations.first().ok_or(Error::EmptyDataset)?;
        let d = first.x.len();
        let ds = Self { observations, d };
        validate_dataset(ds)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Covariate vectors of every row, in order.
    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|o| o.x.clone()).collect()
    }

    /// New dataset restricted to `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let obs: Vec<Observation> = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        Dataset::new(obs)
    }
}

/// Checks every observation invariant: doses in [0,1], consistent covariate
/// dimension, ordered desired ranges, finite fields, and that the stored
/// indicator equals the recomputed `1(y in [t_lo, t_hi])`. Idempotent.
pub fn validate_dataset(ds: Dataset) -> Result<Dataset> {
    if ds.observations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = ds.d;
    for (i, o) in ds.observations.iter().enumerate() {
        if o.x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: o.x.len(),
            });
        }
        if !o.y.is_finite() {
            return Err(Error::NonFinite { index: i, field: "y" });
        }
        if !o.a.is_finite() {
            return Err(Error::NonFinite { index: i, field: "a" });
        }
        if o.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, field: "x" });
        }
        if o.t_lo.is_nan() || o.t_hi.is_nan() {
            return Err(Error::NonFinite {
                index: i,
                field: "t",
            });
        }
        if !(0.0..=1.0).contains(&o.a) {
            return Err(Error::DoseOutOfRange { index: i, value: o.a });
        }
        if o.t_lo > o.t_hi {
            return Err(Error::InvalidThresholds { index: i });
        }
        let recomputed = o.y >= o.t_lo && o.y <= o.t_hi;
        if recomputed != o.r {
            return Err(Error::IndicatorMismatch { index: i });
        }
    }
    Ok(ds)
}

/// Iteration controls for the DC solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverControls {
    /// Outer DC iteration cap.
    pub max_dc_iterations: usize,
    /// Inner convex-subproblem iteration cap.
    pub subproblem_iterations: usize,
    /// Relative tolerance on the DC objective.
    pub tolerance: f64,
    /// Subproblem stop: best objective must improve by at least this much
    /// over a 20-step window.
    pub subproblem_window_tol: f64,
    /// Node count for Simpson quadrature (odd).
    pub quadrature_nodes: usize,
    /// Node count for the monotone-split dose grid.
    pub mu_split_nodes: usize,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            max_dc_iterations: 50,
            subproblem_iterations: 2000,
            tolerance: 1e-6,
            subproblem_window_tol: 1e-7,
            quadrature_nodes: 101,
            mu_split_nodes: 201,
        }
    }
}

/// Hyperparameters for the ERM: kernel bandwidth `gamma`, ridge weight
/// `lambda`, surrogate bandwidth `epsilon`, monotonicity-penalty weight
/// `kappa`, internal-division ratio `p_init`, probability level `alpha`,
/// loss ceiling `c_loss`, convexification constant `c_cvx`, and solver
/// controls.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub p_init: f64,
    pub alpha: f64,
    pub c_loss: f64,
    pub c_cvx: f64,
    pub solver: SolverControls,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: 1.0,
            epsilon: 1e-3,
            kappa: 0.0,
            p_init: 0.5,
            alpha: 0.7,
            c_loss: 1.0,
            c_cvx: 1e4,
            solver: SolverControls::default(),
        }
    }
}

impl HyperParams {
    /// Checks positivity constraints and `c_cvx >= c_loss`.
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidHyperParam(m.to_string()));
        if !(self.gamma > 0.0) {
            return err("gamma must be > 0");
        }
        if !(self.lambda >= 0.0) {
            return err("lambda must be >= 0");
        }
        if !(self.epsilon > 0.0) {
            return err("epsilon must be > 0");
        }
        if !(self.kappa >= 0.0) {
            return err("kappa must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.p_init) {
            return err("p_init must be in [0,1]");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err("alpha must be in (0,1)");
        }
        if !(self.c_loss > 0.0) {
            return err("c_loss must be > 0");
        }
        if !(self.c_cvx >= self.c_loss) {
            return err("c_cvx must be >= c_loss");
        }
        Ok(())
    }

    /// Copy with the loss ceiling replaced by a data-driven value and the
    /// convexification constant rescaled to the recommended 1e4 multiple.
    pub fn with_c_loss(&self, c_loss: f64) -> Self {
        let mut h = self.clone();
        h.c_loss = c_loss;
        h.c_cvx = 1e4 * c_loss;
        h
    }
}

/// Probability level and task framing for a PDI problem; the desired ranges
/// themselves live on each observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub alpha: f64,
}

impl TaskSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidHyperParam("alpha must be in (0,1)".into()))
        }
    }
}

/// Fitted interval rule in representer form: each bound is an intercept plus
/// a kernel expansion over the training anchors. For the constant-width
/// variant `width` is set, the coefficient vectors coincide, and
/// `beta_u0 = beta_l0 + width`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRule {
    pub beta_l0: f64,
    pub beta_l: Vec<f64>,
    pub beta_u0: f64,
    pub beta_u: Vec<f64>,
    pub anchors: Vec<Vec<f64>>,
    pub gamma: f64,
    pub width: Option<f64>,
}

impl IntervalRule {
    /// Checks coefficient/anchor agreement and nonnegative width.
    pub fn validate(&self) -> Result<()> {
        let n = self.anchors.len();
        if self.beta_l.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.beta_l.len(),
            });
        }
        if self.beta_u.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.beta_u.len(),
            });
        }
        if let Some(w) = self.width {
            if !(w >= 0.0) {
                return Err(Error::InvalidHyperParam("width must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(y: f64, a: f64, t_lo: f64, t_hi: f64) -> Observation {
        Observation::new(y, a, vec![0.0, 0.0], t_lo, t_hi)
    }

    #[test]
    fn accepts_valid_row_and_sets_indicator() {
        let ds = Dataset::new(vec![obs(0.8, 0.5, 0.75, f64::INFINITY)]).unwrap();
        assert!(ds.observations()[0].r);
    }

    #[test]
    fn rejects_dose_out_of_range() {
        let e = Dataset::new(vec![obs(0.8, 1.2, 0.75, f64::INFINITY)]).unwrap_err();
        assert!(matches!(e, Error::DoseOutOfRange { .. }));
    }

    #[test]
    fn rejects_indicator_mismatch() {
        let mut o = obs(0.7, 0.5, 0.75, f64::INFINITY);
        o.r = true; // 0.7 < 0.75, so this lies
        let ds = Dataset {
            observations: vec![o],
            d: 2,
        };
        let e = validate_dataset(ds).unwrap_err();
        assert!(matches!(e, Error::IndicatorMismatch { index: 0 }));
    }

    #[test]
    fn rejects_empty_and_dimension_mismatch() {
        assert!(matches!(Dataset::new(vec![]), Err(Error::EmptyDataset)));
        let rows = vec![
            Observation::new(0.8, 0.5, vec![0.0], 0.0, 1.0),
            Observation::new(0.8, 0.5, vec![0.0, 1.0], 0.0, 1.0),
        ];
        assert!(matches!(
            Dataset::new(rows),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let ds = Dataset::new(vec![obs(0.8, 0.5, 0.75, f64::INFINITY)]).unwrap();
        let once = validate_dataset(ds).unwrap();
        let twice = validate_dataset(once.clone()).unwrap();
        assert_eq!(once.observations(), twice.observations());
    }

    #[test]
    fn boundary_outcome_is_inside_closed_range() {
        let ds = Dataset::new(vec![obs(0.75, 0.5, 0.75, f64::INFINITY)]).unwrap();
        assert!(ds.observations()[0].r);
    }

    #[test]
    fn hyperparams_validation() {
        let mut h = HyperParams::default();
        assert!(h.validate().is_ok());
        h.c_cvx = 0.5 * h.c_loss;
        assert!(h.validate().is_err());
        h = HyperParams::default();
        h.epsilon = 0.0;
        assert!(h.validate().is_err());
    }
}
