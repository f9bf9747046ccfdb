//! Small dense linear algebra: symmetric positive-definite solves via
//! Cholesky. Systems here are tiny (covariate dimension) or moderate
//! (kernel anchor count), so a direct factorization is enough.

use crate::error::{Error, Result};

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// In-place lower Cholesky factor of `a`; fails when a pivot drops below
/// `1e-14 * max_diag`.
fn cholesky(a: &SymMatrix) -> Result<Vec<f64>> {
    let n = a.n;
    let mut l = a.data.clone();
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0f64, f64::max);
    let tol = 1e-14 * max_diag.max(1e-300);
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= tol {
            return Err(Error::SingularDesign);
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let l = cholesky(a)?;
    // forward substitution L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    // back substitution L^T x = y
    let mut x = y;
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    Ok(x)
}

/// Solves `(a + jitter I) x = b` with the given number of iterative
/// refinement sweeps against the unjittered matrix.
pub fn solve_jittered_once(
    a: &SymMatrix,
    b: &[f64],
    jitter: f64,
    refine: usize,
) -> Result<Vec<f64>> {
    let n = a.n;
    let mut m = a.clone();
    for i in 0..n {
        let v = m.get(i, i) + jitter;
        m.set(i, i, v);
    }
    let mut x = solve_spd(&m, b)?;
    for _ in 0..refine {
        let mut residual = b.to_vec();
        for i in 0..n {
            let mut ax = 0.0;
            for k in 0..n {
                ax += a.get(i, k) * x[k];
            }
            residual[i] -= ax;
        }
        match solve_spd(&m, &residual) {
            Ok(dx) => {
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
            }
            Err(_) => break,
        }
    }
    Ok(x)
}

/// Solves the ridge-jittered system `(a + jitter I) x = b`, escalating the
/// jitter by powers of ten when the factorization fails. Two iterative
/// refinement sweeps remove most of the bias the jitter introduces.
pub fn solve_jittered(a: &SymMatrix, b: &[f64], jitter: f64) -> Result<Vec<f64>> {
    let mut j = jitter;
    for _ in 0..7 {
        if let Ok(x) = solve_jittered_once(a, b, j, 2) {
            return Ok(x);
        }
        j *= 10.0;
    }
    Err(Error::SolveFailure)
}

/// Ordinary least squares of `targets` on a design matrix given row-wise,
/// via normal equations. Returns coefficients and residual sum of squares.
pub fn ols(rows: &[Vec<f64>], targets: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let p = rows[0].len();
    let mut xtx = SymMatrix::zeros(p);
    let mut xty = vec![0.0; p];
    for (row, &t) in rows.iter().zip(targets) {
        for i in 0..p {
            xty[i] += row[i] * t;
            for j in 0..p {
                xtx.data[i * p + j] += row[i] * row[j];
            }
        }
    }
    let coef = solve_spd(&xtx, &xty)?;
    let mut rss = 0.0;
    for (row, &t) in rows.iter().zip(targets) {
        let fit: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        rss += (t - fit) * (t - fit);
    }
    Ok((coef, rss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let mut a = SymMatrix::zeros(2);
        a.set(0, 0, 4.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 3.0);
        let x = solve_spd(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let mut a = SymMatrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        assert!(solve_spd(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn ols_recovers_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let targets: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
        let (coef, rss) = ols(&rows, &targets).unwrap();
        assert!((coef[0] - 2.0).abs() < 1e-10);
        assert!((coef[1] - 3.0).abs() < 1e-10);
        assert!(rss < 1e-18);
    }
}
