//! Loss functions for interval learning: the indicator loss with its
//! nonmonotone ceiling, the IPW/AIPW references, the truncated-hinge
//! surrogate with its convex decomposition, and the empirical objective
//! `Q = Q_plus - Q_minus` with ridge and monotonicity penalties.
//!
//! All dose integrals inside the losses go through one shared engine (the
//! cumulative tables of the monotone split), so algebraic identities
//! between the losses hold to floating-point precision rather than
//! quadrature tolerance.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::nuisance::{mu_split, propensity_density, DoseCurve, MuSplit, NuisanceModels};

/// Truncated hinge `Psi_eps(ell, t, u)`: 1 on `[ell, u]`, linear ramps of
/// width `eps` on both sides, 0 outside. Defined for monotone `ell <= u`.
pub fn psi_eps(ell: f64, t: f64, u: f64, eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::NonpositiveEpsilon);
    }
    let left = (t - ell + eps) / eps;
    let right = (u + eps - t) / eps;
    Ok(left.min(right).min(1.0).max(0.0))
}

/// Convex decomposition of `psi_eps` as max-of-affine closed forms:
/// `Psi_plus = max{(ell-t)/eps, 1, (t-u)/eps}` and
/// `Psi_minus = ((ell-t)/eps)_+ + ((t-u)/eps)_+`, so that
/// `Psi_plus - Psi_minus = Psi_eps` whenever `ell <= u`.
pub fn psi_parts(ell: f64, t: f64, u: f64, eps: f64) -> Result<(f64, f64)> {
    if eps <= 0.0 {
        return Err(Error::NonpositiveEpsilon);
    }
    let a = (ell - t) / eps;
    let b = (t - u) / eps;
    let plus = a.max(1.0).max(b);
    let minus = a.max(0.0) + b.max(0.0);
    Ok((plus, minus))
}

/// Monotonicity hinge `Phi_eps(ell, u)`: 1 for `u >= ell`, a linear ramp on
/// `u - ell in [-eps, 0]`, 0 below.
pub fn phi_eps(ell: f64, u: f64, eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::NonpositiveEpsilon);
    }
    Ok(((u - ell + eps) / eps).min(1.0).max(0.0))
}

/// Convex decomposition `Phi_plus = max{(ell-u)/eps, 1}`,
/// `Phi_minus = ((ell-u)/eps)_+` with `Phi_plus - Phi_minus = Phi_eps`.
pub fn phi_parts(ell: f64, u: f64, eps: f64) -> Result<(f64, f64)> {
    if eps <= 0.0 {
        return Err(Error::NonpositiveEpsilon);
    }
    let z = (ell - u) / eps;
    Ok((z.max(1.0), z.max(0.0)))
}

/// Evaluation context shared by the loss functions: fitted nuisances, the
/// probability level, surrogate bandwidth, loss ceiling, convexification
/// constant, quadrature controls, and the propensity floor.
#[derive(Debug)]
pub struct LossContext {
    pub nuisance: NuisanceModels,
    pub alpha: f64,
    pub epsilon: f64,
    pub c_loss: f64,
    pub c_cvx: f64,
    pub mu_split_nodes: usize,
    /// Evaluated propensity densities are floored at this value; regularity
    /// assumes a lower bound but fitted Gaussians do not provide one.
    pub e_floor: f64,
    floor_hits: AtomicU64,
}

impl Clone for LossContext {
    fn clone(&self) -> Self {
        Self {
            nuisance: self.nuisance.clone(),
            alpha: self.alpha,
            epsilon: self.epsilon,
            c_loss: self.c_loss,
            c_cvx: self.c_cvx,
            mu_split_nodes: self.mu_split_nodes,
            e_floor: self.e_floor,
            floor_hits: AtomicU64::new(self.floor_hits.load(Ordering::Relaxed)),
        }
    }
}

impl LossContext {
    pub fn new(nuisance: NuisanceModels, alpha: f64, epsilon: f64, c_loss: f64, c_cvx: f64) -> Self {
        Self {
            nuisance,
            alpha,
            epsilon,
            c_loss,
            c_cvx,
            mu_split_nodes: 201,
            e_floor: 1e-3,
            floor_hits: AtomicU64::new(0),
        }
    }

    /// How often the propensity floor has bound so far.
    pub fn floor_hits(&self) -> u64 {
        self.floor_hits.load(Ordering::Relaxed)
    }

    /// Per-row cached loss pieces for one observation.
    pub fn row(&self, o: &Observation) -> Result<RowLoss> {
        if o.x.len() != self.nuisance.dose_prob.theta_x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nuisance.dose_prob.theta_x.len(),
                got: o.x.len(),
            });
        }
        let mu_a = self.nuisance.dose_prob.mu(o.a, &o.x);
        let raw_e = propensity_density(&self.nuisance.propensity, o.a.max(1e-12), &o.x)?;
        let e = if raw_e < self.e_floor {
            self.floor_hits.fetch_add(1, Ordering::Relaxed);
            self.e_floor
        } else {
            raw_e
        };
        let diff = mu_a - (o.r as u8 as f64);
        let split = mu_split(&self.nuisance.dose_prob, &o.x, self.mu_split_nodes);
        Ok(RowLoss {
            a: o.a,
            r: o.r,
            p: diff.max(0.0),
            m: (-diff).max(0.0),
            e,
            alpha: self.alpha,
            eps: self.epsilon,
            c_loss: self.c_loss,
            split,
        })
    }
}

/// Cached per-observation pieces: the dose, the signed weight split
/// `(mu - r) = p - m`, the floored propensity, and the monotone-split
/// tables of the dose-probability curve at this row's covariates.
#[derive(Debug, Clone)]
pub struct RowLoss {
    pub a: f64,
    pub r: bool,
    pub p: f64,
    pub m: f64,
    pub e: f64,
    pub alpha: f64,
    pub eps: f64,
    pub c_loss: f64,
    pub split: MuSplit,
}

/// Rebinds a set of row caches to a different surrogate bandwidth (the
/// tables do not depend on it).
pub fn rows_with_eps(rows: &[RowLoss], eps: f64) -> Vec<RowLoss> {
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            r.eps = eps;
            r
        })
        .collect()
}

// Coefficients of the shared convex term added to both halves of the
// decomposition. In seam coordinates x = (ell - a)/eps, y = (u - a)/eps the
// surrogate's bridge pieces are bilinear with unit-scale curvature, so
// data-independent constants suffice: kinks on the axes need weight >= 1,
// the seam kink needs >= 1/2, and the cell curvature needs >= (1+sqrt(2))/2.
const V_ABS: f64 = 1.25;
const V_SEAM: f64 = 0.75;
const V_QUAD: f64 = 1.25;
// Huber width: curvature is only required where the bridge lives (|x| <= 2),
// linear growth beyond keeps magnitudes tame far from the dose.
const V_HUBER_WIDTH: f64 = 2.0;

#[inline]
fn huber(s: f64) -> f64 {
    let w = V_HUBER_WIDTH;
    if s.abs() <= w {
        0.5 * s * s
    } else {
        w * s.abs() - 0.5 * w * w
    }
}

#[inline]
fn huber_deriv(s: f64) -> f64 {
    s.clamp(-V_HUBER_WIDTH, V_HUBER_WIDTH)
}

#[inline]
fn sign_right(s: f64) -> f64 {
    if s >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl RowLoss {
    /// The glued hinge factor: `Psi_eps(ell, a, u)` on the monotone branch,
    /// the degenerate-interval blend on the bridge, 0 past it.
    fn t_tilde(&self, ell: f64, u: f64) -> f64 {
        let eps = self.eps;
        if ell <= u {
            let s1 = (self.a - ell + eps) / eps;
            let s2 = (u - self.a + eps) / eps;
            s1.min(s2).min(1.0).max(0.0)
        } else if ell < u + eps {
            let z = (ell - u) / eps;
            (1.0 - z) * 0.5 * (self.psi_deg(ell) + self.psi_deg(u))
        } else {
            0.0
        }
    }

    /// `Psi_eps(s, a, s)`: the tent of halfwidth eps at the observed dose.
    #[inline]
    fn psi_deg(&self, s: f64) -> f64 {
        (1.0 - (s - self.a).abs() / self.eps).max(0.0)
    }

    /// Shared convex add-on that turns the branchwise decomposition into a
    /// globally convex one. Appears identically in both halves.
    fn v_conv(&self, ell: f64, u: f64) -> f64 {
        let x = (ell - self.a) / self.eps;
        let y = (u - self.a) / self.eps;
        let z = x - y;
        V_ABS * (x.abs() + y.abs()) + V_SEAM * z.max(0.0) + V_QUAD * (huber(x) + huber(y))
    }

    /// Convex split of the exact-indicator integral term:
    /// `I_plus - I_minus = int_ell^u (alpha - mu) da` for monotone pairs and
    /// 0 otherwise, each half convex on the whole plane.
    fn integral_parts(&self, ell: f64, u: f64) -> (f64, f64) {
        let cpl = self.split.c_plus(ell);
        let cpu = self.split.c_plus(u);
        let cml = self.split.c_minus(ell);
        let cmu = self.split.c_minus(u);
        let i_plus = self.alpha * (u - ell).max(0.0) + cmu.max(cml) + cpl;
        let i_minus = cpu.max(cpl) + cml;
        (i_plus, i_minus)
    }

    /// `int_ell^u (alpha - mu) da` through the shared table engine.
    fn integral_term(&self, ell: f64, u: f64) -> f64 {
        self.alpha * (u - ell) - (self.split.c_mu(u) - self.split.c_mu(ell))
    }

    /// The surrogate loss, evaluated branchwise.
    pub fn surrogate(&self, ell: f64, u: f64) -> f64 {
        let w = (self.p - self.m) / self.e;
        if ell <= u {
            w * self.t_tilde(ell, u) + self.integral_term(ell, u)
        } else if ell < u + self.eps {
            let z = (ell - u) / self.eps;
            w * self.t_tilde(ell, u) + self.c_loss * z
        } else {
            self.c_loss
        }
    }

    /// Convex halves with `plus - minus = surrogate` exactly.
    pub fn surrogate_parts(&self, ell: f64, u: f64) -> (f64, f64) {
        let t = self.t_tilde(ell, u);
        let v = self.v_conv(ell, u);
        let (phi_p, phi_m) = {
            let z = (ell - u) / self.eps;
            (z.max(1.0), z.max(0.0))
        };
        let (i_plus, i_minus) = self.integral_parts(ell, u);
        let plus = (self.p * (t + v) + self.m * v) / self.e + self.c_loss * (1.0 + phi_m) + i_plus;
        let minus = (self.p * v + self.m * (t + v)) / self.e + self.c_loss * phi_p + i_minus;
        (plus, minus)
    }

    /// The nonsmooth target: `L^(1)` on monotone pairs, the ceiling above.
    pub fn indicator_loss(&self, ell: f64, u: f64) -> f64 {
        if ell > u {
            return self.c_loss;
        }
        let inside = self.a >= ell && self.a <= u;
        let w = (self.p - self.m) / self.e;
        (if inside { w } else { 0.0 }) + self.integral_term(ell, u)
    }

    /// Subgradients of the convex halves, using right-derivative hinge
    /// resolution throughout. Returns `(d plus, d minus)` each as
    /// `(d/d ell, d/d u)`.
    pub fn parts_subgrad(&self, ell: f64, u: f64) -> ((f64, f64), (f64, f64)) {
        let eps = self.eps;
        let a = self.a;
        // d t_tilde
        let (dt_l, dt_u) = if ell <= u {
            let s1 = (a - ell + eps) / eps;
            let s2 = (u - a + eps) / eps;
            let mn = s1.min(s2);
            if mn >= 1.0 || mn <= 0.0 {
                (0.0, 0.0)
            } else if s1 <= s2 {
                (-1.0 / eps, 0.0)
            } else {
                (0.0, 1.0 / eps)
            }
        } else if ell < u + eps {
            let z = (ell - u) / eps;
            let s = 0.5 * (self.psi_deg(ell) + self.psi_deg(u));
            let dpsi = |t: f64| {
                if (t - a).abs() < eps {
                    -sign_right(t - a) / eps
                } else {
                    0.0
                }
            };
            (
                -s / eps + (1.0 - z) * 0.5 * dpsi(ell),
                s / eps + (1.0 - z) * 0.5 * dpsi(u),
            )
        } else {
            (0.0, 0.0)
        };
        // d v_conv
        let x = (ell - a) / eps;
        let y = (u - a) / eps;
        let z_ind = if x - y >= 0.0 { 1.0 } else { 0.0 };
        let dv_l = (V_ABS * sign_right(x) + V_SEAM * z_ind + V_QUAD * huber_deriv(x)) / eps;
        let dv_u = (V_ABS * sign_right(y) - V_SEAM * z_ind + V_QUAD * huber_deriv(y)) / eps;
        // d phi parts
        let zq = (ell - u) / eps;
        let dphi_p = if zq >= 1.0 { 1.0 / eps } else { 0.0 };
        let dphi_m = if zq >= 0.0 { 1.0 / eps } else { 0.0 };
        // d integral parts
        let mono = if u - ell >= 0.0 { 1.0 } else { 0.0 };
        let cm_u_ge = self.split.c_minus(u) >= self.split.c_minus(ell);
        let cp_u_ge = self.split.c_plus(u) >= self.split.c_plus(ell);
        let di_plus_l = -self.alpha * mono
            + if cm_u_ge { 0.0 } else { self.split.c_minus_slope(ell) }
            + self.split.c_plus_slope(ell);
        let di_plus_u =
            self.alpha * mono + if cm_u_ge { self.split.c_minus_slope(u) } else { 0.0 };
        let di_minus_l = if cp_u_ge { 0.0 } else { self.split.c_plus_slope(ell) }
            + self.split.c_minus_slope(ell);
        let di_minus_u = if cp_u_ge { self.split.c_plus_slope(u) } else { 0.0 };

        let dplus_l =
            (self.p * (dt_l + dv_l) + self.m * dv_l) / self.e + self.c_loss * dphi_m + di_plus_l;
        let dplus_u =
            (self.p * (dt_u + dv_u) + self.m * dv_u) / self.e - self.c_loss * dphi_m + di_plus_u;
        let dminus_l =
            (self.p * dv_l + self.m * (dt_l + dv_l)) / self.e + self.c_loss * dphi_p + di_minus_l;
        let dminus_u =
            (self.p * dv_u + self.m * (dt_u + dv_u)) / self.e - self.c_loss * dphi_p + di_minus_u;
        ((dplus_l, dplus_u), (dminus_l, dminus_u))
    }
}

/// Doubly-robust indicator loss: `L^(1)` for monotone pairs, the ceiling
/// `C_L` for inverted ones.
pub fn loss_indicator(o: &Observation, ell: f64, u: f64, ctx: &LossContext) -> Result<f64> {
    Ok(ctx.row(o)?.indicator_loss(ell, u))
}

/// Inverse probability-weighted reference loss (monotone pairs only).
pub fn loss_ipw(o: &Observation, ell: f64, u: f64, ctx: &LossContext) -> Result<f64> {
    if ell > u {
        return Err(Error::MonotonicityViolated);
    }
    let row = ctx.row(o)?;
    let inside = o.a >= ell && o.a <= u;
    let r = o.r as u8 as f64;
    Ok((ctx.alpha * (1.0 - r) * (inside as u8 as f64)
        + (1.0 - ctx.alpha) * r * (!inside as u8 as f64))
        / row.e)
}

/// Augmented IPW reference loss (monotone pairs only); differs from the
/// indicator loss by a term that does not depend on the interval.
pub fn loss_aipw(o: &Observation, ell: f64, u: f64, ctx: &LossContext) -> Result<f64> {
    if ell > u {
        return Err(Error::MonotonicityViolated);
    }
    let row = ctx.row(o)?;
    let alpha = ctx.alpha;
    let inside = o.a >= ell && o.a <= u;
    let r = o.r as u8 as f64;
    let mu_a = ctx.nuisance.dose_prob.mu(o.a, &o.x);
    let delta_c = row.split.c_mu(u) - row.split.c_mu(ell);
    let total_c = row.split.c_mu(1.0);
    let fp = (mu_a - r) * (inside as u8 as f64) / row.e + ((u - ell) - delta_c);
    let fneg = (r - mu_a) * (!inside as u8 as f64) / row.e + (total_c - delta_c);
    Ok(alpha * fp + (1.0 - alpha) * fneg)
}

/// Smooth surrogate loss of the three-branch form.
pub fn loss_surrogate(o: &Observation, ell: f64, u: f64, ctx: &LossContext) -> Result<f64> {
    Ok(ctx.row(o)?.surrogate(ell, u))
}

/// Convex decomposition of the surrogate loss; both halves are convex in
/// `(ell, u)` on the whole plane and differ by exactly the surrogate.
pub fn loss_surrogate_parts(
    o: &Observation,
    ell: f64,
    u: f64,
    ctx: &LossContext,
) -> Result<(f64, f64)> {
    Ok(ctx.row(o)?.surrogate_parts(ell, u))
}

/// Loss ceiling `C_L = 2 sup |L^(1)|`, scanned over the training rows and a
/// dose-pair grid, computed once per fit and then frozen.
pub fn compute_c_loss(ds: &Dataset, ctx_nuisance: &NuisanceModels, alpha: f64, grid: usize) -> Result<f64> {
    let probe = LossContext::new(ctx_nuisance.clone(), alpha, 1e-3, 1.0, 1e4);
    let mut sup = 0.0f64;
    let step = 1.0 / (grid - 1) as f64;
    for o in ds.iter() {
        let row = probe.row(o)?;
        let w = (row.p - row.m) / row.e;
        for i in 0..grid {
            let ell = i as f64 * step;
            for j in i..grid {
                let u = j as f64 * step;
                let inside = o.a >= ell && o.a <= u;
                let val = (if inside { w } else { 0.0 }) + row.integral_term(ell, u);
                sup = sup.max(val.abs());
            }
        }
    }
    Ok(2.0 * sup)
}

/// Coefficient block layout for the joint rule: intercept + N kernel weights
/// per bound, lower block first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// `[beta_l0, beta_l.., beta_u0, beta_u..]`, length `2n + 2`.
    Joint,
    /// `[beta_0, beta.., w]`, length `n + 2`; the upper bound is the lower
    /// plus a nonnegative width.
    ConstantWidth,
}

/// Dataset-level objective machinery shared by `objective_q` and the DC
/// solver: per-row cached losses plus the Gram matrix and penalties.
pub struct PreparedObjective<'a> {
    pub rows: std::sync::Arc<Vec<RowLoss>>,
    pub k: &'a GramMatrix,
    pub lambda: f64,
    pub kappa: f64,
    pub parameterization: Parameterization,
}

impl<'a> PreparedObjective<'a> {
    pub fn new(
        ds: &Dataset,
        k: &'a GramMatrix,
        ctx: &LossContext,
        lambda: f64,
        kappa: f64,
        parameterization: Parameterization,
    ) -> Result<Self> {
        let rows = std::sync::Arc::new(
            ds.iter().map(|o| ctx.row(o)).collect::<Result<Vec<_>>>()?,
        );
        Self::from_rows(rows, k, lambda, kappa, parameterization)
    }

    /// Builds the objective from row caches prepared elsewhere; the caches
    /// do not depend on `(gamma, lambda, kappa, p)` and can be shared
    /// across hyperparameter candidates.
    pub fn from_rows(
        rows: std::sync::Arc<Vec<RowLoss>>,
        k: &'a GramMatrix,
        lambda: f64,
        kappa: f64,
        parameterization: Parameterization,
    ) -> Result<Self> {
        if rows.len() != k.n() {
            return Err(Error::LengthMismatch {
                expected: k.n(),
                got: rows.len(),
            });
        }
        Ok(Self {
            rows,
            k,
            lambda,
            kappa,
            parameterization,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn param_len(&self) -> usize {
        match self.parameterization {
            Parameterization::Joint => 2 * self.n() + 2,
            Parameterization::ConstantWidth => self.n() + 2,
        }
    }

    /// Fitted bounds at every anchor for the given coefficient vector.
    /// Returns `(ell, u, k_beta_l, k_beta_u)`.
    pub fn bounds(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n();
        match self.parameterization {
            Parameterization::Joint => {
                let (bl0, bl) = (theta[0], &theta[1..n + 1]);
                let (bu0, bu) = (theta[n + 1], &theta[n + 2..2 * n + 2]);
                let kl = self.k.matvec(bl);
                let ku = self.k.matvec(bu);
                let ell: Vec<f64> = kl.iter().map(|v| bl0 + v).collect();
                let u: Vec<f64> = ku.iter().map(|v| bu0 + v).collect();
                (ell, u, kl, ku)
            }
            Parameterization::ConstantWidth => {
                let (b0, b, w) = (theta[0], &theta[1..n + 1], theta[n + 1]);
                let kb = self.k.matvec(b);
                let ell: Vec<f64> = kb.iter().map(|v| b0 + v).collect();
                let u: Vec<f64> = ell.iter().map(|v| v + w).collect();
                (ell, u, kb.clone(), kb)
            }
        }
    }

    fn ridge(&self, theta: &[f64], kl: &[f64], ku: &[f64]) -> f64 {
        let n = self.n();
        match self.parameterization {
            Parameterization::Joint => {
                let bl = &theta[1..n + 1];
                let bu = &theta[n + 2..2 * n + 2];
                let rl: f64 = bl.iter().zip(kl).map(|(a, b)| a * b).sum();
                let ru: f64 = bu.iter().zip(ku).map(|(a, b)| a * b).sum();
                self.lambda * (rl + ru)
            }
            Parameterization::ConstantWidth => {
                let b = &theta[1..n + 1];
                let r: f64 = b.iter().zip(kl).map(|(a, b)| a * b).sum();
                self.lambda * r
            }
        }
    }

    fn kappa_penalty(&self, theta: &[f64]) -> f64 {
        if self.kappa == 0.0 {
            return 0.0;
        }
        let n = self.n();
        match self.parameterization {
            Parameterization::Joint => {
                let bl = &theta[1..n + 1];
                let bu = &theta[n + 2..2 * n + 2];
                self.kappa
                    * bl.iter()
                        .zip(bu)
                        .map(|(l, u)| (l - u).max(0.0))
                        .sum::<f64>()
            }
            // shared coefficients: the penalty vanishes identically
            Parameterization::ConstantWidth => 0.0,
        }
    }

    /// Full objective `Q`.
    pub fn q(&self, theta: &[f64]) -> f64 {
        let (ell, u, kl, ku) = self.bounds(theta);
        let n = self.n() as f64;
        let mut loss = 0.0;
        for (row, (l, uu)) in self.rows.iter().zip(ell.iter().zip(&u)) {
            loss += row.surrogate(*l, *uu);
        }
        loss / n + self.ridge(theta, &kl, &ku) + self.kappa_penalty(theta)
    }

    /// Convex halves `(Q_plus, Q_minus)`; the ridge and the kappa penalty
    /// ride on `Q_plus`.
    pub fn q_parts(&self, theta: &[f64]) -> (f64, f64) {
        let (ell, u, kl, ku) = self.bounds(theta);
        let n = self.n() as f64;
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (row, (l, uu)) in self.rows.iter().zip(ell.iter().zip(&u)) {
            let (p, m) = row.surrogate_parts(*l, *uu);
            plus += p;
            minus += m;
        }
        (
            plus / n + self.ridge(theta, &kl, &ku) + self.kappa_penalty(theta),
            minus / n,
        )
    }

    /// Chains per-row bound subgradients back to coefficient space:
    /// for the joint layout, `d beta_l0 = sum g_l / n`, `d beta_l = K g_l / n`.
    fn chain(&self, g_l: &[f64], g_u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let nf = n as f64;
        match self.parameterization {
            Parameterization::Joint => {
                let mut out = vec![0.0; 2 * n + 2];
                out[0] = g_l.iter().sum::<f64>() / nf;
                out[n + 1] = g_u.iter().sum::<f64>() / nf;
                let kg_l = self.k.matvec(g_l);
                let kg_u = self.k.matvec(g_u);
                for i in 0..n {
                    out[1 + i] = kg_l[i] / nf;
                    out[n + 2 + i] = kg_u[i] / nf;
                }
                out
            }
            Parameterization::ConstantWidth => {
                let mut out = vec![0.0; n + 2];
                let total: Vec<f64> = g_l.iter().zip(g_u).map(|(a, b)| a + b).collect();
                out[0] = total.iter().sum::<f64>() / nf;
                out[n + 1] = g_u.iter().sum::<f64>() / nf;
                let kg = self.k.matvec(&total);
                for i in 0..n {
                    out[1 + i] = kg[i] / nf;
                }
                out
            }
        }
    }

    fn add_ridge_grad(&self, kl: &[f64], ku: &[f64], out: &mut [f64]) {
        let n = self.n();
        match self.parameterization {
            Parameterization::Joint => {
                for i in 0..n {
                    out[1 + i] += 2.0 * self.lambda * kl[i];
                    out[n + 2 + i] += 2.0 * self.lambda * ku[i];
                }
            }
            Parameterization::ConstantWidth => {
                for i in 0..n {
                    out[1 + i] += 2.0 * self.lambda * kl[i];
                }
            }
        }
    }

    fn add_kappa_grad(&self, theta: &[f64], out: &mut [f64]) {
        if self.kappa == 0.0 {
            return;
        }
        if let Parameterization::Joint = self.parameterization {
            let n = self.n();
            for i in 0..n {
                if theta[1 + i] - theta[n + 2 + i] >= 0.0 {
                    out[1 + i] += self.kappa;
                    out[n + 2 + i] -= self.kappa;
                }
            }
        }
    }

    /// Subgradient of `Q_plus`.
    pub fn subgrad_q_plus(&self, theta: &[f64]) -> Vec<f64> {
        let (ell, u, kl, ku) = self.bounds(theta);
        let n = self.n();
        let mut g_l = vec![0.0; n];
        let mut g_u = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            let ((dpl, dpu), _) = row.parts_subgrad(ell[i], u[i]);
            g_l[i] = dpl;
            g_u[i] = dpu;
        }
        let mut out = self.chain(&g_l, &g_u);
        self.add_ridge_grad(&kl, &ku, &mut out);
        self.add_kappa_grad(theta, &mut out);
        out
    }

    /// Subgradient of `Q_minus` (the linearized half in DC iterations).
    pub fn subgrad_q_minus(&self, theta: &[f64]) -> Vec<f64> {
        let (ell, u, _, _) = self.bounds(theta);
        let n = self.n();
        let mut g_l = vec![0.0; n];
        let mut g_u = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            let (_, (dml, dmu)) = row.parts_subgrad(ell[i], u[i]);
            g_l[i] = dml;
            g_u[i] = dmu;
        }
        self.chain(&g_l, &g_u)
    }
}

/// Empirical objective `Q` for explicit coefficient blocks (the
/// `eq`-style entry point used by tests and diagnostics).
pub fn objective_q(
    ds: &Dataset,
    k: &GramMatrix,
    beta_l0: f64,
    beta_l: &[f64],
    beta_u0: f64,
    beta_u: &[f64],
    ctx: &LossContext,
    lambda: f64,
    kappa: f64,
) -> Result<f64> {
    let prep = PreparedObjective::new(ds, k, ctx, lambda, kappa, Parameterization::Joint)?;
    if beta_l.len() != k.n() || beta_u.len() != k.n() {
        return Err(Error::DimensionMismatch {
            expected: k.n(),
            got: beta_l.len(),
        });
    }
    let mut theta = Vec::with_capacity(2 * k.n() + 2);
    theta.push(beta_l0);
    theta.extend_from_slice(beta_l);
    theta.push(beta_u0);
    theta.extend_from_slice(beta_u);
    Ok(prep.q(&theta))
}

/// Convex halves of the empirical objective; `q_plus - q_minus = Q`.
pub fn objective_q_parts(
    ds: &Dataset,
    k: &GramMatrix,
    beta_l0: f64,
    beta_l: &[f64],
    beta_u0: f64,
    beta_u: &[f64],
    ctx: &LossContext,
    lambda: f64,
    kappa: f64,
) -> Result<(f64, f64)> {
    let prep = PreparedObjective::new(ds, k, ctx, lambda, kappa, Parameterization::Joint)?;
    if beta_l.len() != k.n() || beta_u.len() != k.n() {
        return Err(Error::DimensionMismatch {
            expected: k.n(),
            got: beta_l.len(),
        });
    }
    let mut theta = Vec::with_capacity(2 * k.n() + 2);
    theta.push(beta_l0);
    theta.extend_from_slice(beta_l);
    theta.push(beta_u0);
    theta.extend_from_slice(beta_u);
    Ok(prep.q_parts(&theta))
}
