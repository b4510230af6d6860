//! Clamped biharmonic operator, the von Karman bracket and the Airy stress function.
//!
//! The operator is the 13-point discrete biharmonic on interior nodes with
//! clamped ghosts (`u = 0` on the edge, `u(-h) = u(h)` outside). It equals the
//! discrete Laplacian applied twice with the same ghost rule, is symmetric
//! positive definite and is factored once per grid.

use crate::error::{Error, Result};
use crate::fields::{l2_inner, PlateGrid, ScalarField, SecondDerivatives};
use crate::linalg::{norm2, BandedCholesky};

#[derive(Debug, Clone)]
pub struct AirySolution {
    pub v: ScalarField,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ClampedBiharmonic {
    grid: PlateGrid,
    mx: usize,
    my: usize,
    bw: usize,
    rows: Vec<Vec<(usize, f64)>>,
    band: Vec<f64>,
    chol: BandedCholesky,
    /// Relative residual above which a solve is reported as failed.
    pub tol: f64,
}

impl ClampedBiharmonic {
    pub fn new(grid: PlateGrid) -> Result<Self> {
        let (mx, my) = (grid.nx - 2, grid.ny - 2);
        let n = mx * my;
        let bw = 2 * mx;
        let (a, b, c) = (1.0 / grid.hx.powi(4), 1.0 / grid.hy.powi(4), 1.0 / (grid.hx * grid.hx * grid.hy * grid.hy));
        let stencil: [(isize, isize, f64); 13] = [
            (0, 0, 6.0 * a + 6.0 * b + 8.0 * c),
            (1, 0, -4.0 * a - 4.0 * c),
            (-1, 0, -4.0 * a - 4.0 * c),
            (0, 1, -4.0 * b - 4.0 * c),
            (0, -1, -4.0 * b - 4.0 * c),
            (2, 0, a),
            (-2, 0, a),
            (0, 2, b),
            (0, -2, b),
            (1, 1, 2.0 * c),
            (1, -1, 2.0 * c),
            (-1, 1, 2.0 * c),
            (-1, -1, 2.0 * c),
        ];
        // node index on the full grid -> interior index, with ghost reflection
        let map = |k: isize, nk: usize| -> Option<usize> {
            let nk = nk as isize;
            let k = if k == -1 { 1 } else if k == nk { nk - 2 } else { k };
            if k <= 0 || k >= nk - 1 {
                None
            } else {
                Some((k - 1) as usize)
            }
        };
        let mut rows = Vec::with_capacity(n);
        let mut band = vec![0.0; n * (bw + 1)];
        for j in 1..grid.ny - 1 {
            for i in 1..grid.nx - 1 {
                let p = (j - 1) * mx + (i - 1);
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(13);
                for &(di, dj, w) in &stencil {
                    if let (Some(ii), Some(jj)) = (map(i as isize + di, grid.nx), map(j as isize + dj, grid.ny)) {
                        let q = jj * mx + ii;
                        match row.iter_mut().find(|e| e.0 == q) {
                            Some(e) => e.1 += w,
                            None => row.push((q, w)),
                        }
                    }
                }
                for &(q, w) in &row {
                    if q <= p {
                        band[p * (bw + 1) + q + bw - p] = w;
                    }
                }
                rows.push(row);
            }
        }
        let chol = BandedCholesky::factor(n, bw, band.clone())?;
        Ok(Self { grid, mx, my, bw, rows, band, chol, tol: 1e-9 })
    }

    pub fn grid(&self) -> PlateGrid {
        self.grid
    }

    pub fn n_interior(&self) -> usize {
        self.mx * self.my
    }

    /// Interior values as a vector.
    pub fn gather(&self, f: &ScalarField) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_interior());
        for j in 1..self.grid.ny - 1 {
            for i in 1..self.grid.nx - 1 {
                out.push(f.get(i, j));
            }
        }
        out
    }

    /// Field with the given interior values and zero boundary.
    pub fn scatter(&self, v: &[f64]) -> ScalarField {
        let mut f = ScalarField::zeros(self.grid);
        for j in 1..self.grid.ny - 1 {
            for i in 1..self.grid.nx - 1 {
                f.set(i, j, v[(j - 1) * self.mx + (i - 1)]);
            }
        }
        f
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(q, w)| w * v[q]).sum()).collect()
    }

    /// `A u` on interior nodes, zero on the boundary. Boundary values of `u` are ignored.
    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        self.scatter(&self.apply_vec(&self.gather(u)))
    }

    /// Discrete `<A u, u>`, the squared `L2` norm of the clamped Laplacian.
    pub fn energy(&self, u: &ScalarField) -> f64 {
        let v = self.gather(u);
        let av = self.apply_vec(&v);
        self.grid.hx * self.grid.hy * v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.chol.solve_in_place(&mut x);
        x
    }

    /// Solves `A v = rhs` with clamped `v`.
    pub fn solve(&self, rhs: &ScalarField) -> Result<AirySolution> {
        let b = self.gather(rhs);
        let x = self.solve_vec(&b);
        let r: Vec<f64> = self.apply_vec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let scale = norm2(&b);
        let residual = if scale > 0.0 { norm2(&r) / scale } else { norm2(&r) };
        if !residual.is_finite() || residual > self.tol {
            return Err(Error::NumericFailure { message: "clamped biharmonic solve".into(), residual });
        }
        Ok(AirySolution { v: self.scatter(&x), residual })
    }

    /// Factor of `alpha I + beta A`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Result<ShiftedSolver> {
        let w = self.bw + 1;
        let mut band = self.band.iter().map(|a| beta * a).collect::<Vec<_>>();
        for p in 0..self.n_interior() {
            band[p * w + self.bw] += alpha;
        }
        Ok(ShiftedSolver { chol: BandedCholesky::factor(self.n_interior(), self.bw, band)? })
    }

    /// Smallest eigenpair of `A`, eigenvector normalized to unit `L2` norm and positive at the center.
    pub fn fundamental_mode(&self) -> (f64, ScalarField) {
        let n = self.n_interior();
        let mut v = vec![1.0; n];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut w = self.solve_vec(&v);
            let nw = norm2(&w);
            w.iter_mut().for_each(|x| *x /= nw);
            let aw = self.apply_vec(&w);
            let new_lambda: f64 = w.iter().zip(&aw).map(|(a, b)| a * b).sum();
            let done = (new_lambda - lambda).abs() <= 1e-15 * new_lambda;
            lambda = new_lambda;
            v = w;
            if done {
                break;
            }
        }
        let mut f = self.scatter(&v);
        let nrm = f.norm();
        let (ci, cj) = (self.grid.nx / 2, self.grid.ny / 2);
        let sign = if f.get(ci, cj) < 0.0 { -1.0 } else { 1.0 };
        f = f.scaled(sign / nrm);
        (lambda, f)
    }
}

#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    chol: BandedCholesky,
}

impl ShiftedSolver {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.chol.solve_in_place(b)
    }
}

/// `[u, w] = u_xx w_yy + u_yy w_xx - 2 u_xy w_xy` from precomputed derivatives.
pub fn bracket_from(du: &SecondDerivatives, dw: &SecondDerivatives) -> ScalarField {
    let n = du.xx.values.len();
    let mut out = ScalarField::zeros(du.xx.grid);
    for k in 0..n {
        out.values[k] = du.xx.values[k] * dw.yy.values[k] + du.yy.values[k] * dw.xx.values[k]
            - 2.0 * du.xy.values[k] * dw.xy.values[k];
    }
    out
}

pub fn bracket(u: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    if u.grid != w.grid {
        return Err(crate::error::invalid("bracket arguments live on different grids"));
    }
    Ok(bracket_from(&u.second_derivatives(), &w.second_derivatives()))
}

/// Airy stress function: `A v = -[u, u]`, clamped.
pub fn airy(op: &ClampedBiharmonic, u: &ScalarField) -> Result<AirySolution> {
    let d = u.second_derivatives();
    op.solve(&bracket_from(&d, &d).scaled(-1.0))
}

/// Solution of `A v = -[u, w]`, the bilinear Airy response.
pub fn airy_mixed(op: &ClampedBiharmonic, u: &ScalarField, w: &ScalarField) -> Result<AirySolution> {
    op.solve(&bracket(u, w)?.scaled(-1.0))
}

/// Von Karman force `f_V(u) = -[u, v(u) + F0]`.
pub fn f_v(op: &ClampedBiharmonic, u: &ScalarField, f0: &ScalarField) -> Result<ScalarField> {
    let v = airy(op, u)?.v;
    Ok(bracket(u, &(&v + f0))?.scaled(-1.0))
}

/// Airy energy `1/4 <A v, v>` and the in-plane load energy `-1/2 <F0, [u, u]>`.
pub fn nonlinear_energies(op: &ClampedBiharmonic, u: &ScalarField, f0: &ScalarField) -> Result<(f64, f64)> {
    let v = airy(op, u)?.v;
    let e_airy = 0.25 * op.energy(&v);
    let e_f0 = -0.5 * l2_inner(f0, &bracket(u, u)?)?;
    Ok((e_airy, e_f0))
}
