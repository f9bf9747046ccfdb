//! Gaussian kernel evaluation, Gram matrices, RKHS penalties, and interval
//! rule evaluation at new covariates.

use crate::data::IntervalRule;
use crate::error::{Error, Result};

/// Radial basis kernel `exp(-||x - x2||^2 / gamma^2)`.
pub fn gaussian_kernel(x: &[f64], x2: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x2.len(),
        });
    }
    debug_assert!(gamma > 0.0);
    let d2: f64 = x
        .iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((-d2 / (gamma * gamma)).exp())
}

/// Symmetric kernel matrix over a point set, entries in (0,1] with unit
/// diagonal. Computed once per fit and shared.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: Vec<f64>,
    n: usize,
    gamma: f64,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Row `i` of the matrix (equals column `i` by symmetry).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `K v` into `out`.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut acc = 0.0;
            for (k, vk) in row.iter().zip(v) {
                acc += k * vk;
            }
            out[i] = acc;
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(v, &mut out);
        out
    }

    /// Fused `K v1`, `K v2` in one pass over the matrix (the solver's inner
    /// loop is bandwidth-bound).
    pub fn matvec2(&self, v1: &[f64], v2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(v1.len(), self.n);
        debug_assert_eq!(v2.len(), self.n);
        let mut o1 = vec![0.0; self.n];
        let mut o2 = vec![0.0; self.n];
        for i in 0..self.n {
            let row = self.row(i);
            let mut a1 = 0.0;
            let mut a2 = 0.0;
            for ((k, x1), x2) in row.iter().zip(v1).zip(v2) {
                a1 += k * x1;
                a2 += k * x2;
            }
            o1[i] = a1;
            o2[i] = a2;
        }
        (o1, o2)
    }
}

/// Builds the Gram matrix `K[i][j] = k(x_i, x_j)` for bandwidth `gamma`.
pub fn gram(points: &[Vec<f64>], gamma: f64) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = points.len();
    let d = points[0].len();
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
        for j in 0..i {
            let k = gaussian_kernel(&points[i], &points[j], gamma)?;
            entries[i * n + j] = k;
            entries[j * n + i] = k;
        }
    }
    Ok(GramMatrix { entries, n, gamma })
}

/// Evaluates both bound functions of `rule` at `x` via the representer
/// expansion. No clipping; post-processing winsorizes separately.
pub fn eval_rule(rule: &IntervalRule, x: &[f64]) -> Result<(f64, f64)> {
    let mut ell = rule.beta_l0;
    let mut u = rule.beta_u0;
    for (anchor, (bl, bu)) in rule
        .anchors
        .iter()
        .zip(rule.beta_l.iter().zip(rule.beta_u.iter()))
    {
        let k = gaussian_kernel(x, anchor, rule.gamma)?;
        ell += bl * k;
        u += bu * k;
    }
    Ok((ell, u))
}

/// RKHS seminorm `beta^T K beta` (nonnegative up to PSD tolerance).
pub fn rkhs_penalty(beta: &[f64], k: &GramMatrix) -> Result<f64> {
    if beta.len() != k.n() {
        return Err(Error::LengthMismatch {
            expected: k.n(),
            got: beta.len(),
        });
    }
    let kv = k.matvec(beta);
    Ok(beta.iter().zip(&kv).map(|(a, b)| a * b).sum())
}
