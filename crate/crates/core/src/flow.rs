//! Reconstruction of the flow potential above the plate from the stored plate history.
//!
//! With Neumann data `h = u_t + U u_x` (zero off the plate) and
//! `h†(s, theta) = h(x1 - U s - r sin theta, x2 - r cos theta, t - s)`, `r = sqrt(s^2 - z^2)`:
//!
//! ```text
//! phi     = -(1/2pi) int int h† ds dtheta
//! phi_t   = -h(x1 - U z, x2, t - z) + (1/2pi) int int [U h_x† + (s/r) (M_theta h)†] ds dtheta
//! phi_xi  = -(1/2pi) int int (d_i h)† ds dtheta                         (i = 1, 2)
//! phi_z   =  h(x1 - U z, x2, t - z) - (1/2pi) int int (z/r) (M_theta h)† ds dtheta
//! ```
//!
//! Integrals run over `s > z`. In the variable `r` the weights become
//! `ds = (r/s) dr`, `(s/r) ds = dr` and `(z/r) ds = (z/s) dr`, all bounded, so
//! each angle is integrated with Gauss-Legendre nodes on the exact stretches of
//! `r` where the foot point lies on the plate.

use crate::dynamics::{plate_energy, PlateParams, PlateState};
use crate::error::{invalid, Error, Result};
use crate::fields::{l2_inner, PlateGrid, ScalarField};
use crate::history::{HistoryBuffer, SpinUp, TripletSeries};
use crate::memory::{check_subsonic, escape_time, q_memory, MemoryQuadrature};
use crate::quadrature::{GaussLegendre, PeriodicTrapezoid};
use crate::vonkarman::ClampedBiharmonic;

#[derive(Debug, Clone)]
pub struct KirchhoffQuadrature {
    pub nr: usize,
    pub ntheta: usize,
    gl: GaussLegendre,
    trig: PeriodicTrapezoid,
}

impl KirchhoffQuadrature {
    /// `nr` Gauss-Legendre nodes per stretch of each ray, `ntheta` angles.
    pub fn new(nr: usize, ntheta: usize) -> Result<Self> {
        if nr < 8 || ntheta < 8 {
            return Err(invalid(format!("flow quadrature needs nr >= 8 and ntheta >= 8, got {nr}, {ntheta}")));
        }
        Ok(Self { nr, ntheta, gl: GaussLegendre::new(nr), trig: PeriodicTrapezoid::new(ntheta) })
    }
}

/// Potential, its time derivative and gradient at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowSample {
    pub phi: f64,
    pub phi_t: f64,
    pub grad: [f64; 3],
}

/// Neumann data `(h, h_x, h_y)` over the stored history.
#[derive(Debug, Clone)]
pub struct FlowSource {
    grid: PlateGrid,
    u_flow: f64,
    series: TripletSeries,
    start: f64,
    zero_prefix: bool,
    earliest: f64,
}

impl FlowSource {
    /// Source for the flow generated by the stored plate motion.
    pub fn new(hist: &HistoryBuffer, u_flow: f64) -> Result<Self> {
        Self::build(hist, u_flow, None)
    }

    /// Source for the difference between the actual flow and the steady flow of `equilibrium`.
    pub fn relative_to(hist: &HistoryBuffer, u_flow: f64, equilibrium: &ScalarField) -> Result<Self> {
        Self::build(hist, u_flow, Some(equilibrium))
    }

    fn build(hist: &HistoryBuffer, u_flow: f64, eq: Option<&ScalarField>) -> Result<Self> {
        check_subsonic(u_flow)?;
        let grid = hist.grid();
        let first = hist.oldest().ok_or_else(|| Error::State("flow reconstruction needs a non-empty history".into()))?;
        if let Some(e) = eq {
            if e.grid != grid {
                return Err(invalid("equilibrium and history live on different grids"));
            }
        }
        let triplet = |u: &ScalarField, ut: &ScalarField| -> Vec<[f64; 3]> {
            let d = match eq {
                Some(e) => u - e,
                None => u.clone(),
            };
            let (dx, d2) = (d.dx(), d.second_derivatives());
            let (utx, uty) = (ut.dx(), ut.dy());
            (0..grid.len())
                .map(|k| {
                    [
                        ut.values[k] + u_flow * dx.values[k],
                        utx.values[k] + u_flow * d2.xx.values[k],
                        uty.values[k] + u_flow * d2.xy.values[k],
                    ]
                })
                .collect()
        };
        let zero = ScalarField::zeros(grid);
        let start = hist.start_time().expect("non-empty");
        let prefix_u = match hist.spin_up() {
            SpinUp::Zero => None,
            SpinUp::Constant => Some(first.u.clone()),
        };
        let prefix = match (&prefix_u, eq) {
            (None, None) => None,
            (Some(u), _) => Some(triplet(u, &zero)),
            (None, Some(_)) => Some(triplet(&zero, &zero)),
        };
        let zero_prefix = prefix.as_ref().is_none_or(|p| p.iter().all(|v| *v == [0.0; 3]));
        let mut series = TripletSeries::new(grid, if zero_prefix { None } else { prefix });
        for s in hist.snapshots() {
            series.push(s.t, triplet(&s.u, &s.u_t));
        }
        let earliest = if hist.covers(f64::NEG_INFINITY) { f64::NEG_INFINITY } else { first.t };
        Ok(Self { grid, u_flow, series, start, zero_prefix, earliest })
    }

    pub fn grid(&self) -> PlateGrid {
        self.grid
    }

    pub fn u_flow(&self) -> f64 {
        self.u_flow
    }

    /// Candidate `r` where the foot point crosses an edge line of the plate.
    fn crossings(&self, x1: f64, x2: f64, z: f64, st: f64, ct: f64, out: &mut Vec<f64>) {
        let u = self.u_flow;
        for wall in [0.0, self.grid.lx] {
            let c = x1 - wall;
            if u == 0.0 {
                if st != 0.0 {
                    out.push(c / st);
                }
                continue;
            }
            let (a, b, cc) = (u * u - st * st, 2.0 * c * st, u * u * z * z - c * c);
            if a.abs() < 1e-14 {
                if b != 0.0 {
                    out.push(-cc / b);
                }
            } else {
                let mut disc = b * b - 4.0 * a * cc;
                // tangential crossings are double roots; keep them despite roundoff
                if disc < 0.0 && disc > -1e-12 * (b * b + (4.0 * a * cc).abs()) {
                    disc = 0.0;
                }
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    out.push((-b + sq) / (2.0 * a));
                    out.push((-b - sq) / (2.0 * a));
                }
            }
        }
        if ct != 0.0 {
            out.push(x2 / ct);
            out.push((x2 - self.grid.ly) / ct);
        }
    }

    /// Evaluates the potential, its time derivative and gradient at `x = (x1, x2, z)`, `z >= 0`.
    pub fn sample(&self, x: [f64; 3], t: f64, quad: &KirchhoffQuadrature) -> Result<FlowSample> {
        let [x1, x2, z] = x;
        if z < 0.0 {
            return Err(invalid(format!("flow point must satisfy x3 >= 0, got {z}")));
        }
        let u = self.u_flow;
        let t_hist = t - self.start;
        let mut s_hi = (self.grid.max_distance(x1, x2) + z) / (1.0 - u.abs());
        let mut split = None;
        if self.zero_prefix {
            s_hi = s_hi.min(t_hist);
        } else if t_hist > z && t_hist < s_hi {
            split = Some((t_hist * t_hist - z * z).sqrt());
        }
        if s_hi <= z {
            return Ok(FlowSample::default());
        }
        if t - s_hi < self.earliest - 1e-12 {
            return Err(Error::State(format!("history does not reach back to {}", t - s_hi)));
        }
        // the foot point is at distance at least dist(x, plate) / (1 + |U|) in s
        let s_lo = (self.grid.distance(x1, x2) / (1.0 + u.abs())).max(z);
        if s_lo >= s_hi {
            let h0 = self.series.sample(t - z, x1 - u * z, x2)[0];
            return Ok(FlowSample { phi: 0.0, phi_t: -h0, grad: [0.0, 0.0, h0] });
        }
        let r_lo = (s_lo * s_lo - z * z).max(0.0).sqrt();
        let r_hi = (s_hi * s_hi - z * z).sqrt();
        let (mut a_phi, mut a_t, mut a_x, mut a_y, mut a_z) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut cuts: Vec<f64> = Vec::with_capacity(10);
        for (&st, &ct) in quad.trig.sin.iter().zip(&quad.trig.cos) {
            cuts.clear();
            cuts.push(r_lo);
            cuts.push(r_hi);
            if let Some(r) = split {
                cuts.push(r);
            }
            self.crossings(x1, x2, z, st, ct, &mut cuts);
            cuts.retain(|r| r.is_finite() && *r >= r_lo && *r <= r_hi);
            cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            for w in cuts.windows(2) {
                let (ra, rb) = (w[0], w[1]);
                if rb - ra <= 1e-13 * r_hi.max(1.0) {
                    continue;
                }
                let rm = 0.5 * (ra + rb);
                let sm = (rm * rm + z * z).sqrt();
                if !self.grid.contains(x1 - u * sm - rm * st, x2 - rm * ct) {
                    continue;
                }
                for (r, wr) in quad.gl.on(ra, rb) {
                    let s = (r * r + z * z).sqrt();
                    let d = self.series.sample(t - s, x1 - u * s - r * st, x2 - r * ct);
                    let (ros, zos) = (r / s, z / s);
                    let mh = st * d[1] + ct * d[2];
                    a_phi += wr * ros * d[0];
                    a_t += wr * (u * ros * d[1] + mh);
                    a_x += wr * ros * d[1];
                    a_y += wr * ros * d[2];
                    a_z += wr * zos * mh;
                }
            }
        }
        let scale = 1.0 / quad.ntheta as f64;
        let h0 = self.series.sample(t - z, x1 - u * z, x2)[0];
        Ok(FlowSample {
            phi: -scale * a_phi,
            phi_t: -h0 + scale * a_t,
            grad: [-scale * a_x, -scale * a_y, h0 - scale * a_z],
        })
    }

    /// `phi(., z = 0)` at every plate node.
    pub fn trace(&self, t: f64, quad: &KirchhoffQuadrature) -> Result<ScalarField> {
        let g = self.grid;
        let mut out = ScalarField::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.set(i, j, self.sample([g.x(i), g.y(j), 0.0], t, quad)?.phi);
            }
        }
        Ok(out)
    }

    /// `(phi_t + U phi_x)(., z = 0)` at every plate node, straight from the reconstruction.
    pub fn material_trace(&self, t: f64, quad: &KirchhoffQuadrature) -> Result<ScalarField> {
        let g = self.grid;
        let mut out = ScalarField::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let f = self.sample([g.x(i), g.y(j), 0.0], t, quad)?;
                out.set(i, j, f.phi_t + self.u_flow * f.grad[0]);
            }
        }
        Ok(out)
    }
}

pub fn phi_value(hist: &HistoryBuffer, x: [f64; 3], t: f64, u_flow: f64, quad: &KirchhoffQuadrature) -> Result<f64> {
    Ok(FlowSource::new(hist, u_flow)?.sample(x, t, quad)?.phi)
}

pub fn phi_t_value(hist: &HistoryBuffer, x: [f64; 3], t: f64, u_flow: f64, quad: &KirchhoffQuadrature) -> Result<f64> {
    Ok(FlowSource::new(hist, u_flow)?.sample(x, t, quad)?.phi_t)
}

pub fn phi_gradient(
    hist: &HistoryBuffer,
    x: [f64; 3],
    t: f64,
    u_flow: f64,
    quad: &KirchhoffQuadrature,
) -> Result<[f64; 3]> {
    Ok(FlowSource::new(hist, u_flow)?.sample(x, t, quad)?.grad)
}

/// Trace of the material derivative predicted by the reduced equation: `-(u_t + U u_x) - q`.
pub fn nd_trace(hist: &HistoryBuffer, t: f64, u_flow: f64, quad: &MemoryQuadrature) -> Result<ScalarField> {
    let grid = hist.grid();
    let t_star = escape_time(&grid, u_flow)?;
    let start = hist.start_time().ok_or_else(|| Error::State("empty history".into()))?;
    if hist.spin_up() == SpinUp::Zero && t < start + t_star {
        return Err(Error::State(format!("spin-up incomplete: t = {t} < start + t* = {}", start + t_star)));
    }
    let (u, ut) = hist.state_at(t)?;
    let mut out = ut.scaled(-1.0);
    out.axpy(-u_flow, &u.dx());
    out.axpy(-1.0, &q_memory(hist, t, u_flow, quad)?);
    Ok(out)
}

/// Midpoint rule on a half ball `|x - c| < rho`, `x3 > 0`, in spherical coordinates.
#[derive(Debug, Clone)]
pub struct HalfBallGrid {
    pub center: [f64; 2],
    pub rho: f64,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl HalfBallGrid {
    pub fn new(center: [f64; 2], rho: f64, nr: usize, npolar: usize, nazimuth: usize) -> Result<Self> {
        if !(rho > 0.0) || nr == 0 || npolar == 0 || nazimuth == 0 {
            return Err(invalid("half ball needs rho > 0 and positive resolutions"));
        }
        let (dr, da, db) = (rho / nr as f64, 0.5 * std::f64::consts::PI / npolar as f64, 2.0 * std::f64::consts::PI / nazimuth as f64);
        let mut points = Vec::with_capacity(nr * npolar * nazimuth);
        let mut weights = Vec::with_capacity(points.capacity());
        for ir in 0..nr {
            let r = (ir as f64 + 0.5) * dr;
            for ia in 0..npolar {
                let a = (ia as f64 + 0.5) * da;
                for ib in 0..nazimuth {
                    let b = (ib as f64 + 0.5) * db;
                    points.push([center[0] + r * a.sin() * b.cos(), center[1] + r * a.sin() * b.sin(), r * a.cos()]);
                    weights.push(r * r * a.sin() * dr * da * db);
                }
            }
        }
        Ok(Self { center, rho, points, weights })
    }

    /// Half ball centred on the plate.
    pub fn centered(grid: &PlateGrid, rho: f64, nr: usize, npolar: usize, nazimuth: usize) -> Result<Self> {
        let (cx, cy) = grid.center();
        Self::new([cx, cy], rho, nr, npolar, nazimuth)
    }

    /// Radius of the smallest ball about the centre containing the plate.
    pub fn support_radius(&self, grid: &PlateGrid) -> f64 {
        grid.max_distance(self.center[0], self.center[1])
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Squared norms of the flow over a half ball.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalFlowEnergy {
    /// `int |grad phi|^2`
    pub grad_sq: f64,
    /// `int phi_t^2`
    pub phi_t_sq: f64,
    /// `int phi_x^2`
    pub phi_x_sq: f64,
}

impl LocalFlowEnergy {
    /// `1/2 [ |phi_t|^2 + |grad phi|^2 - U^2 |phi_x|^2 ]`
    pub fn flow_energy(&self, u_flow: f64) -> f64 {
        0.5 * (self.phi_t_sq + self.grad_sq - u_flow * u_flow * self.phi_x_sq)
    }
}

pub fn local_flow_energy(source: &FlowSource, ball: &HalfBallGrid, t: f64, quad: &KirchhoffQuadrature) -> Result<LocalFlowEnergy> {
    let mut e = LocalFlowEnergy::default();
    for (p, w) in ball.points.iter().zip(&ball.weights) {
        let f = source.sample(*p, t, quad)?;
        e.grad_sq += w * (f.grad[0] * f.grad[0] + f.grad[1] * f.grad[1] + f.grad[2] * f.grad[2]);
        e.phi_t_sq += w * f.phi_t * f.phi_t;
        e.phi_x_sq += w * f.grad[0] * f.grad[0];
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullEnergyReport {
    pub t: f64,
    pub e_pl: f64,
    pub e_fl: f64,
    pub e_int: f64,
    pub e_total: f64,
    /// `1/2 [ |u_t|^2 + |Lap u|^2 + 1/2 |Lap v|^2 + |phi_t|^2 + |grad phi|^2 ]`
    pub e_star: f64,
    /// Whether the ball is large enough that no disturbance has left it since the start.
    pub rho_exact: bool,
}

/// Plate, flow and interaction energies `E_pl + E_fl + U <phi, u_x>` at the state's time.
pub fn full_energy(
    state: &PlateState,
    hist: &HistoryBuffer,
    ball: &HalfBallGrid,
    params: &PlateParams,
    quad: &KirchhoffQuadrature,
) -> Result<FullEnergyReport> {
    let grid = hist.grid();
    let op = ClampedBiharmonic::new(grid)?;
    let parts = plate_energy(&op, params, state)?;
    let source = FlowSource::new(hist, params.u_flow)?;
    let local = local_flow_energy(&source, ball, state.t, quad)?;
    let e_fl = local.flow_energy(params.u_flow);
    let e_int = if params.u_flow != 0.0 {
        params.u_flow * l2_inner(&source.trace(state.t, quad)?, &state.u.dx())?
    } else {
        0.0
    };
    let start = hist.start_time().expect("non-empty");
    let rho_exact = ball.rho >= ball.support_radius(&grid) + (state.t - start) * (1.0 + params.u_flow.abs());
    let e_star = parts.kinetic + parts.bending + parts.airy + 0.5 * (local.phi_t_sq + local.grad_sq);
    Ok(FullEnergyReport {
        t: state.t,
        e_pl: parts.total(),
        e_fl,
        e_int,
        e_total: parts.total() + e_fl + e_int,
        e_star,
        rho_exact,
    })
}

/// `int_{t_n - a}^{t_n + a} ( |psi_t|^2 + |grad psi|^2 )_{K_rho} dt` for the flow difference `psi = phi - phi_hat`.
pub fn window_difference_energy(
    hist: &HistoryBuffer,
    equilibrium: &ScalarField,
    u_flow: f64,
    ball: &HalfBallGrid,
    t_n: f64,
    a: f64,
    quad: &KirchhoffQuadrature,
) -> Result<f64> {
    if !(a > 0.0) {
        return Err(invalid(format!("window half-width must be positive, got {a}")));
    }
    let source = FlowSource::relative_to(hist, u_flow, equilibrium)?;
    let mut acc = 0.0;
    for (t, w) in GaussLegendre::new(4).on(t_n - a, t_n + a) {
        let e = local_flow_energy(&source, ball, t, quad)?;
        acc += w * (e.phi_t_sq + e.grad_sq);
    }
    Ok(acc)
}

/// `|Lap (u - u_hat)|^2 + |u_t|^2 + |grad psi|^2 + |psi_t|^2` at the state's time.
pub fn distance_to_equilibrium(
    state: &PlateState,
    hist: &HistoryBuffer,
    equilibrium: &ScalarField,
    u_flow: f64,
    ball: &HalfBallGrid,
    quad: &KirchhoffQuadrature,
) -> Result<f64> {
    let op = ClampedBiharmonic::new(hist.grid())?;
    let d = &state.u - equilibrium;
    let plate = op.energy(&d) + l2_inner(&state.u_t, &state.u_t)?;
    let source = FlowSource::relative_to(hist, u_flow, equilibrium)?;
    let e = local_flow_energy(&source, ball, state.t, quad)?;
    Ok(plate + e.grad_sq + e.phi_t_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Snapshot;

    fn bump(l: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| (x * (l - x) * y * (l - y)).powi(2)
    }

    /// History whose Neumann data is `h = g(t) * w(x)` with `u_t = h`, `U = 0`.
    fn separable_history(grid: PlateGrid, dt: f64, t_end: f64, g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64) -> HistoryBuffer {
        let w = ScalarField::from_fn(grid, bump(grid.lx));
        let mut h = HistoryBuffer::new(grid, f64::INFINITY, SpinUp::Zero).unwrap();
        let n = (t_end / dt).round() as usize;
        for k in 0..=n {
            let t = k as f64 * dt;
            h.push(Snapshot { t, u: w.scaled(g(t)), u_t: w.scaled(dg(t)) }).unwrap();
        }
        h
    }

    #[test]
    fn half_ball_volume() {
        let b = HalfBallGrid::new([0.0, 0.0], 2.0, 40, 30, 16).unwrap();
        let exact = 2.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((b.volume() - exact).abs() < 1e-3 * exact);
        assert!(b.points.iter().all(|p| p[2] > 0.0));
    }

    #[test]
    fn quiescent_before_the_signal_arrives() {
        let g = PlateGrid::square(1.0, 11).unwrap();
        let hist = separable_history(g, 0.01, 0.5, |t| t * t, |t| 2.0 * t);
        let quad = KirchhoffQuadrature::new(8, 16).unwrap();
        let f = FlowSource::new(&hist, 0.0).unwrap().sample([0.5, 0.5, 0.7], 0.5, &quad).unwrap();
        assert_eq!(f, FlowSample::default());
    }

    #[test]
    fn gradient_and_time_derivative_match_finite_differences() {
        // u_t = h = sin(3t) * bump, u chosen so the history is smooth; U = 0.3 adds transport
        let g = PlateGrid::square(1.0, 41).unwrap();
        let w = ScalarField::from_fn(g, bump(1.0));
        let mut hist = HistoryBuffer::new(g, f64::INFINITY, SpinUp::Zero).unwrap();
        let dt = 1e-3;
        for k in 0..=2200 {
            let t = k as f64 * dt;
            let a = (1.0 - (3.0 * t).cos()) / 3.0;
            hist.push(Snapshot { t, u: w.scaled(a * t), u_t: w.scaled((3.0 * t).sin() * t + a) }).unwrap();
        }
        let quad = KirchhoffQuadrature::new(24, 64).unwrap();
        let src = FlowSource::new(&hist, 0.3).unwrap();
        let t = 2.0;
        for x in [[0.4, 0.55, 0.3], [1.2, 0.5, 0.2], [0.5, 0.5, 0.05]] {
            let f = src.sample(x, t, &quad).unwrap();
            let e = 1e-3;
            let phi = |y: [f64; 3], s: f64| src.sample(y, s, &quad).unwrap().phi;
            let fd_t = (phi(x, t + 0.01) - phi(x, t - 0.01)) / 0.02;
            let scale = f.grad.iter().fold(f.phi_t.abs(), |m, v| m.max(v.abs()));
            assert!((fd_t - f.phi_t).abs() < 2e-2 * scale, "phi_t {} vs {}", f.phi_t, fd_t);
            for i in 0..3 {
                let (mut a, mut b) = (x, x);
                a[i] += e;
                b[i] -= e;
                let fd = (phi(a, t) - phi(b, t)) / (2.0 * e);
                assert!((fd - f.grad[i]).abs() < 2e-2 * scale, "x={x:?} d{i}: {} vs {}", f.grad[i], fd);
            }
        }
    }

    #[test]
    fn normal_derivative_recovers_neumann_data() {
        let g = PlateGrid::square(1.0, 41).unwrap();
        let hist = separable_history(g, 1e-3, 1.0, |t| t.sin(), |t| t.cos());
        let quad = KirchhoffQuadrature::new(24, 64).unwrap();
        let src = FlowSource::new(&hist, 0.0).unwrap();
        let (x, y) = (0.4, 0.6);
        let h = 1.0f64.cos() * bump(1.0)(x, y);
        let f = src.sample([x, y, 1e-4], 1.0, &quad).unwrap();
        assert!((f.grad[2] - h).abs() < 1e-2 * h.abs(), "{} vs {}", f.grad[2], h);
    }

    #[test]
    fn rejects_points_below_the_plate() {
        let g = PlateGrid::square(1.0, 9).unwrap();
        let hist = separable_history(g, 0.1, 0.5, |t| t, |_| 1.0);
        let quad = KirchhoffQuadrature::new(8, 8).unwrap();
        assert!(FlowSource::new(&hist, 0.0).unwrap().sample([0.5, 0.5, -0.1], 0.5, &quad).is_err());
    }

    #[test]
    fn nd_trace_requires_spin_up() {
        let g = PlateGrid::square(1.0, 9).unwrap();
        let hist = separable_history(g, 0.1, 0.5, |t| t, |_| 1.0);
        let quad = MemoryQuadrature::new(8, 8).unwrap();
        assert!(matches!(nd_trace(&hist, 0.5, 0.2, &quad), Err(Error::State(_))));
    }
}
