//! Stationary states of the reduced plate equation:
//! `A u + f_V(u) + U u_x + q_stat(u) = p0`, solved by damped Newton with a
//! matrix-free Jacobian and GMRES preconditioned by the biharmonic solve.

use crate::dynamics::PlateParams;
use crate::error::{invalid, Error, Result};
use crate::fields::{l2_inner, ScalarField};
use crate::flow::{FlowSource, KirchhoffQuadrature};
use crate::history::{HistoryBuffer, Snapshot, SpinUp};
use crate::linalg::gmres;
use crate::memory::{q_static, MemoryQuadrature};
use crate::vonkarman::{airy, bracket, bracket_from, nonlinear_energies, ClampedBiharmonic};

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Convergence when `|R| <= tol * |p0|` (or `tol` when the load vanishes).
    pub tol: f64,
    pub max_iter: usize,
    /// Number of load steps `p0 * k / n`, `k = 1..=n`.
    pub continuation: usize,
    /// Multiplies `p0` (and `F0` when `scale_f0` is set).
    pub load_scale: f64,
    pub scale_f0: bool,
    pub gmres_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30, continuation: 1, load_scale: 1.0, scale_f0: false, gmres_tol: 1e-11 }
    }
}

#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub u_hat: ScalarField,
    /// `|R(u_hat)|`, discrete L2.
    pub residual: f64,
    pub newton_iters: usize,
    /// Residual before each Newton step of the last load level, then the final one.
    pub residual_history: Vec<f64>,
    /// Potential and velocity gradient of the steady flow at requested points.
    pub flow_hat_probe: Option<Vec<[f64; 4]>>,
}

/// Residual evaluator sharing the biharmonic factorization.
pub struct StationaryProblem<'a> {
    params: &'a PlateParams,
    op: ClampedBiharmonic,
    quad: MemoryQuadrature,
}

impl<'a> StationaryProblem<'a> {
    pub fn new(params: &'a PlateParams, quad: MemoryQuadrature) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, op: ClampedBiharmonic::new(params.p0.grid)?, quad })
    }

    pub fn operator(&self) -> &ClampedBiharmonic {
        &self.op
    }

    /// `A u + f_V(u) + U u_x + q_stat(u) - p0` on interior nodes, zero on the edge.
    pub fn residual(&self, u: &ScalarField, p0: &ScalarField, f0: &ScalarField) -> Result<ScalarField> {
        let p = self.params;
        let mut r = self.op.apply(u);
        if p.nonlinear {
            let v = airy(&self.op, u)?.v;
            r.axpy(-1.0, &bracket(u, &(&v + f0))?);
        }
        if p.u_flow != 0.0 {
            r.axpy(p.u_flow, &u.dx());
        }
        if p.memory {
            r = &r + &q_static(u, p.u_flow, &self.quad)?;
        }
        r.axpy(-1.0, p0);
        r.clamp_boundary();
        Ok(r)
    }

    /// Frechet derivative at `u` applied to `w`:
    /// `A w - [w, v(u) + F0] - 2 [u, v(u, w)] + U w_x + q_stat(w)`.
    fn jacobian(&self, u: &ScalarField, v_plus_f0: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
        let p = self.params;
        let mut r = self.op.apply(w);
        if p.nonlinear {
            let (du, dw) = (u.second_derivatives(), w.second_derivatives());
            r.axpy(-1.0, &bracket_from(&dw, &v_plus_f0.second_derivatives()));
            let vm = self.op.solve(&bracket_from(&du, &dw).scaled(-1.0))?.v;
            r.axpy(-2.0, &bracket_from(&du, &vm.second_derivatives()));
        }
        if p.u_flow != 0.0 {
            r.axpy(p.u_flow, &w.dx());
        }
        if p.memory {
            r = &r + &q_static(w, p.u_flow, &self.quad)?;
        }
        r.clamp_boundary();
        Ok(r)
    }

    /// Damped Newton from `guess` at the loads `(p0, F0)`.
    fn newton(
        &self,
        guess: &ScalarField,
        p0: &ScalarField,
        f0: &ScalarField,
        opts: &NewtonOptions,
    ) -> Result<(ScalarField, Vec<f64>, usize)> {
        let scale = if p0.norm() > 0.0 { p0.norm() } else { 1.0 };
        let mut u = guess.clone();
        u.clamp_boundary();
        let mut r = self.residual(&u, p0, f0)?;
        let mut history = vec![r.norm()];
        for it in 0..opts.max_iter {
            let rn = r.norm();
            if rn <= opts.tol * scale {
                return Ok((u, history, it));
            }
            let v_plus_f0 = if self.params.nonlinear { &airy(&self.op, &u)?.v + f0 } else { f0.clone() };
            let b: Vec<f64> = self.op.gather(&r).iter().map(|x| -x).collect();
            let mut delta = vec![0.0; b.len()];
            let mut apply = |x: &[f64]| -> Result<Vec<f64>> {
                Ok(self.op.gather(&self.jacobian(&u, &v_plus_f0, &self.op.scatter(x))?))
            };
            let precond = |x: &[f64]| self.op.solve_vec(x);
            match gmres(&mut apply, &precond, &b, &mut delta, opts.gmres_tol, 60, 600) {
                // near roundoff the inner solve may stall; an inexact step is still a descent step
                Err(Error::NonConvergence { residual, .. }) if residual < 1e-6 => {}
                other => {
                    other?;
                }
            }
            let step = self.op.scatter(&delta);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=5 {
                let mut trial = u.clone();
                trial.axpy(alpha, &step);
                let rt = self.residual(&trial, p0, f0)?;
                if rt.norm() < (1.0 - 1e-4 * alpha) * rn {
                    u = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    message: format!("Newton stagnated at iteration {it}: no decrease over 5 damped steps"),
                    residual: rn,
                });
            }
            history.push(r.norm());
        }
        let rn = r.norm();
        if rn <= opts.tol * scale {
            return Ok((u, history, opts.max_iter));
        }
        Err(Error::NonConvergence { message: format!("Newton did not converge in {} iterations", opts.max_iter), residual: rn })
    }

    /// Continuation in the load amplitude from `guess`.
    pub fn solve(&self, guess: &ScalarField, opts: &NewtonOptions) -> Result<StationaryResult> {
        if opts.continuation == 0 {
            return Err(invalid("continuation needs at least one load step"));
        }
        let p = self.params;
        let mut u = guess.clone();
        let mut last = (Vec::new(), 0);
        for k in 1..=opts.continuation {
            let lam = opts.load_scale * k as f64 / opts.continuation as f64;
            let p0 = p.p0.scaled(lam);
            let f0 = if opts.scale_f0 { p.f0.scaled(lam) } else { p.f0.clone() };
            let (next, hist, iters) = self.newton(&u, &p0, &f0, opts)?;
            u = next;
            last = (hist, iters);
        }
        let (residual_history, newton_iters) = last;
        let residual = *residual_history.last().expect("non-empty");
        Ok(StationaryResult { u_hat: u, residual, newton_iters, residual_history, flow_hat_probe: None })
    }
}

pub fn stationary_residual(u: &ScalarField, params: &PlateParams, quad: &MemoryQuadrature) -> Result<ScalarField> {
    StationaryProblem::new(params, quad.clone())?.residual(u, &params.p0, &params.f0)
}

pub fn solve_stationary(
    params: &PlateParams,
    guess: &ScalarField,
    quad: &MemoryQuadrature,
    opts: &NewtonOptions,
) -> Result<StationaryResult> {
    StationaryProblem::new(params, quad.clone())?.solve(guess, opts)
}

/// Plate part of the potential energy:
/// `1/2 <A u, u> + 1/4 <A v, v> - 1/2 <F0, [u, u]> - <p0, u>` (the last three as configured).
pub fn potential_energy(op: &ClampedBiharmonic, u: &ScalarField, params: &PlateParams) -> Result<f64> {
    let mut e = 0.5 * op.energy(u) - l2_inner(&params.p0, u)?;
    if params.nonlinear {
        let (airy_e, in_plane) = nonlinear_energies(op, u, &params.f0)?;
        e += airy_e + in_plane;
    }
    Ok(e)
}

/// History holding `u` at rest for all past times.
pub fn frozen_history(u: &ScalarField) -> Result<HistoryBuffer> {
    let mut h = HistoryBuffer::new(u.grid, f64::INFINITY, SpinUp::Constant)?;
    h.push(Snapshot { t: 0.0, u: u.clone(), u_t: ScalarField::zeros(u.grid) })?;
    Ok(h)
}

/// Potential and gradient `[phi, phi_x1, phi_x2, phi_x3]` of the steady flow over `u_hat`.
pub fn steady_flow_probe(
    u_hat: &ScalarField,
    u_flow: f64,
    points: &[[f64; 3]],
    quad: &KirchhoffQuadrature,
) -> Result<Vec<[f64; 4]>> {
    let src = FlowSource::new(&frozen_history(u_hat)?, u_flow)?;
    points
        .iter()
        .map(|p| {
            let f = src.sample(*p, 0.0, quad)?;
            Ok([f.phi, f.grad[0], f.grad[1], f.grad[2]])
        })
        .collect()
}

/// Weak form of the stationary flow-plate problem tested against `w`:
/// `<A u, w> - <[u, v + F0], w> + U <phi_hat, w_x> - <p0, w>`, with `phi_hat`
/// the reconstructed steady flow trace. Returned relative to `|<p0, w>| + |<A u, w>|`.
pub fn weak_form_residual(
    u_hat: &ScalarField,
    params: &PlateParams,
    tests: &[ScalarField],
    quad: &KirchhoffQuadrature,
) -> Result<Vec<f64>> {
    let op = ClampedBiharmonic::new(u_hat.grid)?;
    let mut lhs = op.apply(u_hat);
    if params.nonlinear {
        let v = airy(&op, u_hat)?.v;
        lhs.axpy(-1.0, &bracket(u_hat, &(&v + &params.f0))?);
    }
    let trace = if params.u_flow != 0.0 {
        Some(FlowSource::new(&frozen_history(u_hat)?, params.u_flow)?.trace(0.0, quad)?)
    } else {
        None
    };
    tests
        .iter()
        .map(|w| {
            let aw = l2_inner(&lhs, w)?;
            let pw = l2_inner(&params.p0, w)?;
            let fw = match &trace {
                Some(phi) => params.u_flow * l2_inner(phi, &w.dx())?,
                None => 0.0,
            };
            Ok((aw + fw - pw).abs() / (pw.abs() + aw.abs()).max(f64::MIN_POSITIVE))
        })
        .collect()
}
