//! Delayed aerodynamic memory term of the reduced plate equation.
//!
//! `q(x, t) = (1/2pi) int_0^{t*} ds int_0^{2pi} dtheta [M_theta^2 u]_ext(x1 - (U + sin theta) s, x2 - s cos theta, t - s)`
//! with `M_theta = sin theta d/dx + cos theta d/dy` and the extension by zero
//! outside the plate. For every node and angle the foot point moves on a
//! straight ray, so the `s`-integral is taken with Gauss-Legendre nodes on the
//! exact stretch of the ray that lies inside the plate.

use crate::error::{invalid, Error, Result};
use crate::fields::{PlateGrid, ScalarField, SecondDerivatives};
use crate::history::{HistoryBuffer, SpinUp};
use crate::quadrature::{GaussLegendre, PeriodicTrapezoid};

/// `t* = diam(Omega) / (1 - |U|)`: past this delay every foot point has left the plate.
pub fn escape_time(grid: &PlateGrid, u_flow: f64) -> Result<f64> {
    check_subsonic(u_flow)?;
    Ok(grid.diameter() / (1.0 - u_flow.abs()))
}

pub(crate) fn check_subsonic(u_flow: f64) -> Result<()> {
    if !(u_flow.abs() < 1.0) {
        return Err(Error::Domain(format!("flow speed must satisfy |U| < 1, got {u_flow}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MemoryQuadrature {
    pub ns: usize,
    pub ntheta: usize,
    gl: GaussLegendre,
    trig: PeriodicTrapezoid,
}

impl MemoryQuadrature {
    /// `ns` Gauss-Legendre nodes per smooth stretch of each ray, `ntheta` angles.
    pub fn new(ns: usize, ntheta: usize) -> Result<Self> {
        if ns < 8 || ntheta < 8 {
            return Err(invalid(format!("memory quadrature needs ns >= 8 and ntheta >= 8, got {ns}, {ntheta}")));
        }
        Ok(Self { ns, ntheta, gl: GaussLegendre::new(ns), trig: PeriodicTrapezoid::new(ntheta) })
    }
}

/// `M_theta^2 u = sin^2 u_xx + 2 sin cos u_xy + cos^2 u_yy`.
pub fn m_theta_sq(d2: &SecondDerivatives, theta: f64) -> ScalarField {
    let (s, c) = theta.sin_cos();
    let mut out = d2.xx.scaled(s * s);
    out.axpy(2.0 * s * c, &d2.xy);
    out.axpy(c * c, &d2.yy);
    out
}

/// Largest `s` with `(x - a s, y - b s)` still in the closed plate, for `(x, y)` inside.
#[inline]
pub(crate) fn ray_exit(grid: &PlateGrid, x: f64, y: f64, a: f64, b: f64) -> f64 {
    let mut s = f64::INFINITY;
    if a > 0.0 {
        s = s.min(x / a);
    } else if a < 0.0 {
        s = s.min((x - grid.lx) / a);
    }
    if b > 0.0 {
        s = s.min(y / b);
    } else if b < 0.0 {
        s = s.min((y - grid.ly) / b);
    }
    s.max(0.0)
}

/// Evaluates `q` at every node at time `t` from the stored history.
pub fn q_memory(hist: &HistoryBuffer, t: f64, u_flow: f64, quad: &MemoryQuadrature) -> Result<ScalarField> {
    let grid = hist.grid();
    let t_star = escape_time(&grid, u_flow)?;
    let latest = hist.latest().ok_or_else(|| Error::State("memory term needs a non-empty history".into()))?;
    if t > latest.t + 1e-9 * latest.t.abs().max(1.0) {
        return Err(Error::State(format!("time {t} lies after the latest snapshot {}", latest.t)));
    }
    if !hist.covers(t - t_star) {
        return Err(Error::State(format!("history does not reach back to t - t* = {}", t - t_star)));
    }
    let series = hist.d2_series();
    let start = hist.start_time().expect("non-empty");
    // with zero spin-up the integrand vanishes before the first pushed state
    let s_hist = t - start;
    let zero_prefix = hist.spin_up() == SpinUp::Zero;
    let mut out = ScalarField::zeros(grid);
    let nth = quad.ntheta as f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = (grid.x(i), grid.y(j));
            let mut acc = 0.0;
            for (&st, &ct) in quad.trig.sin.iter().zip(&quad.trig.cos) {
                let (a, b) = (u_flow + st, ct);
                let mut s_end = ray_exit(&grid, x, y, a, b).min(t_star);
                if zero_prefix {
                    s_end = s_end.min(s_hist);
                }
                if s_end <= 0.0 {
                    continue;
                }
                let (cxx, cxy, cyy) = (st * st, 2.0 * st * ct, ct * ct);
                for (s, w) in quad.gl.on(0.0, s_end) {
                    let d = series.sample(t - s, x - a * s, y - b * s);
                    acc += w * (cxx * d[0] + cxy * d[1] + cyy * d[2]);
                }
            }
            out.set(i, j, acc / nth);
        }
    }
    Ok(out)
}

/// Memory term of a configuration held fixed for all past times.
pub fn q_static(u: &ScalarField, u_flow: f64, quad: &MemoryQuadrature) -> Result<ScalarField> {
    let mut hist = HistoryBuffer::new(u.grid, f64::INFINITY, SpinUp::Constant)?;
    hist.push(crate::history::Snapshot { t: 0.0, u: u.clone(), u_t: ScalarField::zeros(u.grid) })?;
    q_memory(&hist, 0.0, u_flow, quad)
}
