//! Banded Cholesky factorization and restarted GMRES.

use crate::error::{Error, Result};

/// Cholesky factor `L` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i] at offsets 0..=bw
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the matrix whose lower band is supplied row by row: `lower[i*(bw+1) + (j + bw - i)] = A[i][j]`.
    pub fn factor(n: usize, bw: usize, mut lower: Vec<f64>) -> Result<Self> {
        let w = bw + 1;
        assert_eq!(lower.len(), n * w);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = lower[i * w + j + bw - i];
                for k in k0..j {
                    sum -= lower[i * w + k + bw - i] * lower[j * w + k + bw - j];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::NumericFailure {
                            message: format!("matrix is not positive definite at pivot {i}"),
                            residual: sum,
                        });
                    }
                    lower[i * w + bw] = sum.sqrt();
                } else {
                    lower[i * w + j + bw - i] = sum / lower[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l: lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + k + bw - i] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + i + bw - k] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from `x`.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresReport> {
    let n = b.len();
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut total = 0;
    loop {
        let ax = apply(x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta <= tol * bnorm {
            return Ok(GmresReport { iterations: total, relative_residual: beta / bnorm });
        }
        if total >= max_iter {
            return Err(Error::NonConvergence { message: "GMRES iteration limit".into(), residual: beta / bnorm });
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let zk = precond(&v[k]);
            let mut wv = apply(&zk)?;
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&wv, vi);
                h[i][k] = hik;
                for (wj, vj) in wv.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm2(&wv);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= tol * bnorm || hn == 0.0 {
                break;
            }
            v.push(wv.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yj, zj) in y.iter().zip(&z) {
            for i in 0..n {
                x[i] += yj * zj[i];
            }
        }
    }
}
