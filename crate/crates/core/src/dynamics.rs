//! Time integration of the delayed reduced plate equation
//!
//! `u_tt + A u + (k0 + 1) u_t + f_V(u) = p0 - U u_x - q(u^t)`
//!
//! The von Karman force, the transport term and the memory term form an
//! explicit forcing `F`, extrapolated linearly in time from the last two
//! levels. The linear damped part `u_tt + A u + (k0 + 1) u_t = F` is then
//! advanced either exactly in the eigenbasis of `A` (the default) or by
//! Crank-Nicolson with one factored system. Crank-Nicolson barely damps modes
//! with `omega dt >> 1`, so the modal propagator is preferred whenever the
//! dense eigendecomposition is affordable.

use crate::error::{invalid, Error, Result};
use crate::fields::{l2_inner, PlateGrid, ScalarField};
use crate::history::{HistoryBuffer, Snapshot, SpinUp};
use crate::memory::{check_subsonic, escape_time, q_memory, MemoryQuadrature};
use crate::vonkarman::{f_v, nonlinear_energies, ClampedBiharmonic, ShiftedSolver};

/// Integrator for the linear damped part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    /// Exact damped-oscillator propagation of every eigenmode of `A`.
    Modal,
    CrankNicolson,
}

impl std::str::FromStr for TimeScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modal" => Ok(TimeScheme::Modal),
            "crank-nicolson" => Ok(TimeScheme::CrankNicolson),
            other => Err(invalid(format!("unknown time scheme `{other}` (modal | crank-nicolson)"))),
        }
    }
}

/// Eigenbasis of `A` with the one-step propagators of `a'' + c a' + lambda a = f0 + f1 t`.
#[derive(Debug, Clone)]
struct ModalPropagator {
    basis: nalgebra::DMatrix<f64>,
    lambda: Vec<f64>,
    prop: Vec<[f64; 4]>,
    // Gauss points inside the step: (offset, weight, propagators)
    sub: Vec<(f64, f64, Vec<[f64; 4]>)>,
    c: f64,
}

/// Gauss points used for time integrals inside one step.
const IN_STEP_POINTS: usize = 6;

impl ModalPropagator {
    fn new(op: &ClampedBiharmonic, c: f64, dt: f64) -> Result<Self> {
        let n = op.n_interior();
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            for (i, v) in op.apply_vec(&e).into_iter().enumerate() {
                a[(i, k)] = v;
            }
            e[k] = 0.0;
        }
        let a = 0.5 * (&a + a.transpose());
        let eig = nalgebra::SymmetricEigen::new(a);
        let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::NumericFailure { message: "biharmonic eigenvalue is not positive".into(), residual: *bad });
        }
        let prop = lambda.iter().map(|&l| oscillator_propagator(l, c, dt)).collect();
        let sub = crate::quadrature::GaussLegendre::new(IN_STEP_POINTS)
            .on(0.0, dt)
            .map(|(tau, w)| (tau, w, lambda.iter().map(|&l| oscillator_propagator(l, c, tau)).collect()))
            .collect();
        Ok(Self { basis: eig.eigenvectors, lambda, prop, sub, c })
    }

    fn to_modal(&self, v: &[f64]) -> Vec<f64> {
        self.basis.tr_mul(&nalgebra::DVector::from_column_slice(v)).iter().copied().collect()
    }

    fn modal_to_nodal(&self, a: &[f64]) -> Vec<f64> {
        (&self.basis * nalgebra::DVector::from_column_slice(a)).iter().copied().collect()
    }

    /// Modal displacement and velocity after `tau` under forcing `f0 + f1 t`, using propagators `prop` for that `tau`.
    fn evolve(&self, prop: &[[f64; 4]], tau: f64, a: &[f64], b: &[f64], f0: &[f64], f1: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = a.len();
        let (mut a1, mut b1) = (vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            let l = self.lambda[k];
            let beta = f1[k] / l;
            let alpha = (f0[k] - self.c * beta) / l;
            let (e, de) = (a[k] - alpha, b[k] - beta);
            let p = &prop[k];
            a1[k] = p[0] * e + p[1] * de + alpha + beta * tau;
            b1[k] = p[2] * e + p[3] * de + beta;
        }
        (a1, b1)
    }
}

/// Matrix mapping `(e, e')` at time 0 to time `dt` for `e'' + c e' + lambda e = 0`.
fn oscillator_propagator(lambda: f64, c: f64, dt: f64) -> [f64; 4] {
    let g = 0.5 * c;
    let w2 = lambda - g * g;
    let decay = (-g * dt).exp();
    // s = sin(w dt)/w, co = cos(w dt), continued through w = 0 to the overdamped side
    let (co, s) = if w2 > 1e-12 * lambda {
        let w = w2.sqrt();
        ((w * dt).cos(), (w * dt).sin() / w)
    } else if w2 < -1e-12 * lambda {
        let k = (-w2).sqrt();
        ((k * dt).cosh(), (k * dt).sinh() / k)
    } else {
        (1.0, dt)
    };
    [decay * (co + g * s), decay * s, -decay * lambda * s, decay * (co - g * s)]
}

#[derive(Debug, Clone)]
pub struct PlateParams {
    pub u_flow: f64,
    pub k0: f64,
    pub p0: ScalarField,
    pub f0: ScalarField,
    pub nonlinear: bool,
    pub memory: bool,
}

impl PlateParams {
    pub fn linear(grid: PlateGrid, u_flow: f64, k0: f64) -> Self {
        Self {
            u_flow,
            k0,
            p0: ScalarField::zeros(grid),
            f0: ScalarField::zeros(grid),
            nonlinear: false,
            memory: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_subsonic(self.u_flow)?;
        if !(self.k0 >= 0.0) {
            return Err(invalid(format!("damping k0 must be non-negative, got {}", self.k0)));
        }
        if self.p0.grid != self.f0.grid {
            return Err(invalid("p0 and F0 live on different grids"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlateState {
    pub t: f64,
    pub u: ScalarField,
    pub u_t: ScalarField,
}

impl PlateState {
    pub fn at_rest(grid: PlateGrid) -> Self {
        Self { t: 0.0, u: ScalarField::zeros(grid), u_t: ScalarField::zeros(grid) }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { t: self.t, u: self.u.clone(), u_t: self.u_t.clone() }
    }
}

/// Plate energy of `state` under `params`.
pub fn plate_energy(op: &ClampedBiharmonic, params: &PlateParams, state: &PlateState) -> Result<EnergyParts> {
    let kinetic = 0.5 * l2_inner(&state.u_t, &state.u_t)?;
    let bending = 0.5 * op.energy(&state.u);
    let (airy, in_plane) =
        if params.nonlinear { nonlinear_energies(op, &state.u, &params.f0)? } else { (0.0, 0.0) };
    let load = -l2_inner(&params.p0, &state.u)?;
    Ok(EnergyParts { kinetic, bending, airy, in_plane, load })
}

/// Parts of the plate energy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyParts {
    /// `1/2 |u_t|^2`
    pub kinetic: f64,
    /// `1/2 <A u, u>`
    pub bending: f64,
    /// `1/4 |Laplacian v(u)|^2`
    pub airy: f64,
    /// `-1/2 <F0, [u, u]>`
    pub in_plane: f64,
    /// `-<p0, u>`
    pub load: f64,
}

impl EnergyParts {
    /// Everything except the load potential.
    pub fn mechanical(&self) -> f64 {
        self.kinetic + self.bending + self.airy + self.in_plane
    }

    pub fn total(&self) -> f64 {
        self.mechanical() + self.load
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub t: f64,
    pub e_pl: f64,
    pub e_kin: f64,
    pub e_bend: f64,
    pub e_airy: f64,
    pub norm_ut: f64,
    pub diss_integral: f64,
    pub balance_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    pub entries: Vec<LedgerEntry>,
}

impl EnergyLedger {
    pub const CSV_HEADER: &'static str = "t,E_pl,E_kin,E_bend,E_airy,norm_ut,diss_integral,balance_residual";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.entries.iter().map(|e| {
            format!(
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                e.t, e.e_pl, e.e_kin, e.e_bend, e.e_airy, e.norm_ut, e.diss_integral, e.balance_residual
            )
        })
    }

    /// Increments `D(t) - D(t - window)` of the dissipation integral at every entry with a full window behind it.
    pub fn trailing_dissipation(&self, window: f64) -> Vec<(f64, f64)> {
        let e = &self.entries;
        let mut out = Vec::new();
        let mut k = 0;
        for cur in e {
            if cur.t - e[0].t < window - 1e-12 {
                continue;
            }
            while k + 1 < e.len() && e[k + 1].t <= cur.t - window + 1e-12 {
                k += 1;
            }
            out.push((cur.t, cur.diss_integral - e[k].diss_integral));
        }
        out
    }
}

/// Running `int_0^t |u_t|^2 ds` by the trapezoid rule over the ledger entries
/// (coarser than the in-step quadrature recorded by [`simulate`]).
pub fn dissipation_integral(ledger: &EnergyLedger) -> Vec<f64> {
    let mut out = Vec::with_capacity(ledger.entries.len());
    let mut acc = 0.0;
    for (k, e) in ledger.entries.iter().enumerate() {
        if k > 0 {
            let p = &ledger.entries[k - 1];
            acc += 0.5 * (e.t - p.t) * (p.norm_ut.powi(2) + e.norm_ut.powi(2));
        }
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone)]
enum Propagator {
    Modal(Box<ModalPropagator>),
    CrankNicolson(ShiftedSolver),
}

/// One-step integrator with linearly extrapolated explicit forcing.
#[derive(Debug, Clone)]
pub struct PlateIntegrator {
    params: PlateParams,
    dt: f64,
    quad: MemoryQuadrature,
    op: ClampedBiharmonic,
    scheme: Propagator,
    prev_forcing: Option<(f64, Vec<f64>)>,
    q_cache: Vec<(f64, ScalarField)>,
    in_step: Option<InStep>,
}

/// States at Gauss points inside the last step, for time integrals over it.
#[derive(Debug, Clone)]
struct InStep {
    t0: f64,
    points: Vec<(f64, f64, ScalarField, ScalarField)>,
}

impl PlateIntegrator {
    pub fn new(params: PlateParams, dt: f64, quad: MemoryQuadrature) -> Result<Self> {
        Self::with_scheme(params, dt, quad, TimeScheme::Modal)
    }

    pub fn with_scheme(params: PlateParams, dt: f64, quad: MemoryQuadrature, scheme: TimeScheme) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let op = ClampedBiharmonic::new(params.p0.grid)?;
        let c = params.k0 + 1.0;
        let scheme = match scheme {
            TimeScheme::Modal => Propagator::Modal(Box::new(ModalPropagator::new(&op, c, dt)?)),
            TimeScheme::CrankNicolson => Propagator::CrankNicolson(op.shifted(1.0 + 0.5 * c * dt, 0.25 * dt * dt)?),
        };
        Ok(Self { params, dt, quad, op, scheme, prev_forcing: None, q_cache: Vec::new(), in_step: None })
    }

    pub fn params(&self) -> &PlateParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn operator(&self) -> &ClampedBiharmonic {
        &self.op
    }

    pub fn quadrature(&self) -> &MemoryQuadrature {
        &self.quad
    }

    /// Memory term at `t`, reusing the value from the previous step when available.
    pub fn q_at(&mut self, hist: &HistoryBuffer, t: f64) -> Result<ScalarField> {
        let grid = self.params.p0.grid;
        if !self.params.memory {
            return Ok(ScalarField::zeros(grid));
        }
        if let Some((_, q)) = self.q_cache.iter().find(|(tq, _)| (tq - t).abs() <= 1e-12 * t.abs().max(1.0)) {
            return Ok(q.clone());
        }
        let q = q_memory(hist, t, self.params.u_flow, &self.quad)?;
        self.q_cache.push((t, q.clone()));
        if self.q_cache.len() > 3 {
            self.q_cache.remove(0);
        }
        Ok(q)
    }

    /// Explicit forcing `p0 - f_V(u) - U u_x - q` at the state's time.
    pub fn forcing(&mut self, state: &PlateState, hist: &HistoryBuffer) -> Result<ScalarField> {
        let p = &self.params;
        let mut f = p.p0.clone();
        if p.nonlinear {
            f.axpy(-1.0, &f_v(&self.op, &state.u, &p.f0)?);
        }
        if p.u_flow != 0.0 {
            f.axpy(-p.u_flow, &state.u.dx());
        }
        let q = self.q_at(hist, state.t)?;
        f.axpy(-1.0, &q);
        Ok(f)
    }

    /// Advances one step. `hist` must end with `state`; the new state is appended to it.
    pub fn step(&mut self, state: &PlateState, hist: &mut HistoryBuffer) -> Result<PlateState> {
        let latest = hist.latest().ok_or_else(|| Error::State("history is empty".into()))?;
        if (latest.t - state.t).abs() > 1e-9 * state.t.abs().max(1.0) {
            return Err(Error::State(format!("history ends at {} but the state is at {}", latest.t, state.t)));
        }
        let dt = self.dt;
        let c = self.params.k0 + 1.0;
        let forcing = self.forcing(state, hist)?;
        let u = self.op.gather(&state.u);
        let v = self.op.gather(&state.u_t);
        let (u_new, v_new, fn_) = match &self.scheme {
            Propagator::Modal(m) => {
                let f0 = m.to_modal(&self.op.gather(&forcing));
                let f1: Vec<f64> = match &self.prev_forcing {
                    Some((tp, fp)) if (state.t - tp - dt).abs() <= 1e-9 * dt => {
                        f0.iter().zip(fp).map(|(a, b)| (a - b) / dt).collect()
                    }
                    _ => vec![0.0; f0.len()],
                };
                let (a, b) = (m.to_modal(&u), m.to_modal(&v));
                let mut points = Vec::with_capacity(m.sub.len());
                for (tau, w, prop) in &m.sub {
                    let (ai, bi) = m.evolve(prop, *tau, &a, &b, &f0, &f1);
                    points.push((*tau, *w, self.op.scatter(&m.modal_to_nodal(&ai)), self.op.scatter(&m.modal_to_nodal(&bi))));
                }
                self.in_step = Some(InStep { t0: state.t, points });
                let (a1, b1) = m.evolve(&m.prop, dt, &a, &b, &f0, &f1);
                (m.modal_to_nodal(&a1), m.modal_to_nodal(&b1), f0)
            }
            Propagator::CrankNicolson(cn) => {
                let fn_ = self.op.gather(&forcing);
                let f_ext: Vec<f64> = match &self.prev_forcing {
                    Some((tp, fp)) if (state.t - tp - dt).abs() <= 1e-9 * dt => {
                        fn_.iter().zip(fp).map(|(a, b)| 1.5 * a - 0.5 * b).collect()
                    }
                    _ => fn_.clone(),
                };
                let au = self.op.apply_vec(&u);
                let av = self.op.apply_vec(&v);
                let mut rhs: Vec<f64> = (0..u.len())
                    .map(|k| (1.0 - 0.5 * c * dt) * v[k] - 0.25 * dt * dt * av[k] - dt * au[k] + dt * f_ext[k])
                    .collect();
                cn.solve_in_place(&mut rhs);
                let v_new = rhs;
                let u_new: Vec<f64> = (0..u.len()).map(|k| u[k] + 0.5 * dt * (v[k] + v_new[k])).collect();
                (u_new, v_new, fn_)
            }
        };
        let next = PlateState { t: state.t + dt, u: self.op.scatter(&u_new), u_t: self.op.scatter(&v_new) };
        if !next.u.is_finite() || !next.u_t.is_finite() {
            return Err(Error::NumericFailure { message: format!("non-finite state at t = {}", next.t), residual: f64::NAN });
        }
        self.prev_forcing = Some((state.t, fn_));
        hist.push(next.snapshot())?;
        Ok(next)
    }

    pub fn energy(&self, state: &PlateState) -> Result<EnergyParts> {
        plate_energy(&self.op, &self.params, state)
    }

    /// Sample states `(weight, u, u_t)` of a quadrature over the step from `prev` to `next`:
    /// Gauss points of the exact modal solution, or the midpoint for Crank-Nicolson.
    fn step_samples(&self, prev: &PlateState, next: &PlateState) -> Vec<(f64, f64, ScalarField, ScalarField)> {
        if let Some(s) = &self.in_step {
            if (s.t0 - prev.t).abs() <= 1e-12 * prev.t.abs().max(1.0) && (next.t - prev.t - self.dt).abs() <= 1e-9 * self.dt {
                return s.points.clone();
            }
        }
        let dt = next.t - prev.t;
        let mut w = prev.u_t.scaled(0.5);
        w.axpy(0.5, &next.u_t);
        let mut um = prev.u.scaled(0.5);
        um.axpy(0.5, &next.u);
        vec![(0.5 * dt, dt, um, w)]
    }

    /// `int |u_t|^2 dt` over the step from `prev` to `next`.
    pub fn step_dissipation(&self, prev: &PlateState, next: &PlateState) -> Result<f64> {
        let mut acc = 0.0;
        for (_, w, _, ut) in self.step_samples(prev, next) {
            acc += w * l2_inner(&ut, &ut)?;
        }
        Ok(acc)
    }

    /// Energy balance over one step:
    /// `dE_mech + int [ (k0+1)|u_t|^2 + U <u_x, u_t> + <q, u_t> - <p0, u_t> ] dt`,
    /// with `q` interpolated linearly between the step ends.
    pub fn balance_residual(&mut self, prev: &PlateState, next: &PlateState, hist: &HistoryBuffer) -> Result<f64> {
        let dt = next.t - prev.t;
        let p = self.params.clone();
        let e0 = self.energy(prev)?.mechanical();
        let e1 = self.energy(next)?.mechanical();
        let (q0, q1) = (self.q_at(hist, prev.t)?, self.q_at(hist, next.t)?);
        let mut work = 0.0;
        for (tau, w, u, ut) in self.step_samples(prev, next) {
            let a = tau / dt;
            let mut q = q0.scaled(1.0 - a);
            q.axpy(a, &q1);
            work += w
                * ((p.k0 + 1.0) * l2_inner(&ut, &ut)? + p.u_flow * l2_inner(&u.dx(), &ut)? + l2_inner(&q, &ut)?
                    - l2_inner(&p.p0, &ut)?);
        }
        Ok(e1 - e0 + work)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub params: PlateParams,
    pub dt: f64,
    pub t_end: f64,
    pub quad: MemoryQuadrature,
    pub spin_up: SpinUp,
    pub scheme: TimeScheme,
    pub initial: PlateState,
    /// Keep the whole history (needed for flow reconstruction afterwards).
    pub keep_history: bool,
    /// Store every `store_every`-th state in the trajectory; 0 stores none.
    pub store_every: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub ledger: EnergyLedger,
    pub states: Vec<PlateState>,
    pub final_state: PlateState,
    pub history: HistoryBuffer,
}

impl Trajectory {
    /// `|u_t|` sampled at every step.
    pub fn velocity_norms(&self) -> Vec<(f64, f64)> {
        self.ledger.entries.iter().map(|e| (e.t, e.norm_ut)).collect()
    }
}

pub fn simulate(setup: &SimulationSetup) -> Result<Trajectory> {
    let grid = setup.params.p0.grid;
    if setup.initial.u.grid != grid || setup.initial.u_t.grid != grid {
        return Err(invalid("initial data and parameters live on different grids"));
    }
    if !(setup.t_end >= 0.0) {
        return Err(invalid(format!("final time must be non-negative, got {}", setup.t_end)));
    }
    let t_star = escape_time(&grid, setup.params.u_flow)?;
    let window = if setup.keep_history { f64::INFINITY } else { t_star + 2.0 * setup.dt };
    let mut hist = HistoryBuffer::new(grid, window, setup.spin_up)?;
    let mut state = setup.initial.clone();
    state.u.clamp_boundary();
    state.u_t.clamp_boundary();
    hist.push(state.snapshot())?;
    let mut integ = PlateIntegrator::with_scheme(setup.params.clone(), setup.dt, setup.quad.clone(), setup.scheme)?;
    let n_steps = (setup.t_end / setup.dt).round() as usize;
    let mut ledger = EnergyLedger::default();
    let mut states = Vec::new();
    let record = |s: &PlateState, integ: &PlateIntegrator, diss: f64, res: f64| -> Result<LedgerEntry> {
        let e = integ.energy(s)?;
        Ok(LedgerEntry {
            t: s.t,
            e_pl: e.total(),
            e_kin: e.kinetic,
            e_bend: e.bending,
            e_airy: e.airy,
            norm_ut: l2_inner(&s.u_t, &s.u_t)?.sqrt(),
            diss_integral: diss,
            balance_residual: res,
        })
    };
    ledger.entries.push(record(&state, &integ, 0.0, 0.0)?);
    if setup.store_every > 0 {
        states.push(state.clone());
    }
    let mut diss = 0.0;
    for n in 0..n_steps {
        let next = integ.step(&state, &mut hist)?;
        let res = integ.balance_residual(&state, &next, &hist)?;
        diss += integ.step_dissipation(&state, &next)?;
        let entry = record(&next, &integ, diss, res)?;
        ledger.entries.push(entry);
        state = next;
        if setup.store_every > 0 && (n + 1) % setup.store_every == 0 {
            states.push(state.clone());
        }
    }
    Ok(Trajectory { ledger, states, final_state: state, history: hist })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modal_setup(n: usize, dt: f64, t_end: f64) -> (SimulationSetup, f64) {
        let g = PlateGrid::square(1.0, n).unwrap();
        let op = ClampedBiharmonic::new(g).unwrap();
        let (lam, mode) = op.fundamental_mode();
        let mut params = PlateParams::linear(g, 0.0, 0.3);
        params.memory = false;
        let setup = SimulationSetup {
            params,
            dt,
            t_end,
            quad: MemoryQuadrature::new(8, 8).unwrap(),
            spin_up: SpinUp::Zero,
            scheme: TimeScheme::Modal,
            initial: PlateState { t: 0.0, u: mode.scaled(0.01), u_t: ScalarField::zeros(g) },
            keep_history: false,
            store_every: 1,
        };
        (setup, lam)
    }

    /// Damped oscillator `a'' + c a' + lam a = 0`, `a(0) = a0`, `a'(0) = 0`.
    fn oscillator(a0: f64, c: f64, lam: f64, t: f64) -> (f64, f64) {
        let (al, om) = (0.5 * c, (lam - 0.25 * c * c).sqrt());
        let e = (-al * t).exp();
        let a = a0 * e * ((om * t).cos() + al / om * (om * t).sin());
        let da = -a0 * e * (al * al + om * om) / om * (om * t).sin();
        (a, da)
    }

    #[test]
    fn single_mode_follows_damped_oscillator() {
        let (setup, lam) = modal_setup(12, 2e-4, 0.05);
        let traj = simulate(&setup).unwrap();
        let c = setup.params.k0 + 1.0;
        let mode = setup.initial.u.scaled(100.0);
        for s in traj.states.iter().step_by(25) {
            let (a, da) = oscillator(0.01, c, lam, s.t);
            let ua = l2_inner(&s.u, &mode).unwrap();
            let va = l2_inner(&s.u_t, &mode).unwrap();
            assert!((ua - a).abs() < 1e-4 * 0.01, "t={} {} vs {}", s.t, ua, a);
            assert!((va - da).abs() < 1e-4 * 0.01 * lam.sqrt());
        }
    }

    #[test]
    fn dissipation_matches_modal_integral() {
        let (setup, lam) = modal_setup(10, 2e-4, 0.08);
        let traj = simulate(&setup).unwrap();
        let c = setup.params.k0 + 1.0;
        let n = 20000;
        let h = 0.08 / n as f64;
        let exact: f64 = (0..n).map(|k| oscillator(0.01, c, lam, (k as f64 + 0.5) * h).1.powi(2) * h).sum();
        let got = traj.ledger.entries.last().unwrap().diss_integral;
        assert!((got - exact).abs() < 1e-3 * exact, "{got} vs {exact}");
        let d = dissipation_integral(&traj.ledger);
        assert!((d.last().unwrap() - got).abs() < 1e-4 * got);
    }

    #[test]
    fn both_schemes_agree_on_a_single_mode() {
        let (mut setup, lam) = modal_setup(12, 0.01, 0.5);
        let a = simulate(&setup).unwrap().final_state;
        setup.scheme = TimeScheme::CrankNicolson;
        setup.dt = 2.5e-4;
        let b = simulate(&setup).unwrap().final_state;
        let (ex, _) = oscillator(0.01, 1.3, lam, 0.5);
        let mode = setup.initial.u.scaled(100.0);
        assert!((l2_inner(&a.u, &mode).unwrap() - ex).abs() < 1e-12);
        assert!((l2_inner(&b.u, &mode).unwrap() - ex).abs() < 1e-3 * 0.01);
    }

    #[test]
    fn linear_crank_nicolson_balance_is_exact() {
        let (mut setup, _) = modal_setup(10, 1e-3, 0.02);
        setup.scheme = TimeScheme::CrankNicolson;
        setup.params.p0 = ScalarField::from_fn(setup.params.p0.grid, |x, y| x * y);
        let traj = simulate(&setup).unwrap();
        for e in &traj.ledger.entries {
            assert!(e.balance_residual.abs() < 1e-11 * traj.ledger.entries[0].e_pl.abs().max(1e-12));
        }
    }

    #[test]
    fn modal_balance_is_exact_for_constant_forcing() {
        let (mut setup, _) = modal_setup(10, 1e-2, 0.2);
        setup.params.p0 = ScalarField::from_fn(setup.params.p0.grid, |x, y| x * y);
        let traj = simulate(&setup).unwrap();
        let scale = traj.ledger.entries[0].e_pl.abs();
        assert!(traj.ledger.entries.iter().all(|e| e.balance_residual.abs() < 1e-10 * scale));
    }

    #[test]
    fn modal_balance_residual_is_third_order() {
        let worst = |dt: f64| {
            let (mut setup, _) = modal_setup(10, dt, 0.02);
            setup.params.u_flow = 0.5;
            let traj = simulate(&setup).unwrap();
            traj.ledger.entries.iter().map(|e| e.balance_residual.abs()).fold(0.0, f64::max)
        };
        let (r1, r2) = (worst(1e-3), worst(5e-4));
        assert!((r1 / r2).log2() > 2.8, "order {}", (r1 / r2).log2());
    }

    #[test]
    fn step_error_is_third_order_locally() {
        let g = PlateGrid::square(1.0, 10).unwrap();
        let op = ClampedBiharmonic::new(g).unwrap();
        let (_, mode) = op.fundamental_mode();
        let params = PlateParams { p0: mode.scaled(3.0), ..PlateParams::linear(g, 0.0, 0.2) };
        let s0 = PlateState { t: 0.0, u: mode.scaled(0.01), u_t: mode.scaled(0.05) };
        let params = PlateParams { u_flow: 0.5, ..params };
        let quad = MemoryQuadrature::new(8, 8).unwrap();
        let run = |dt: f64, steps: usize| {
            let mut hist = HistoryBuffer::new(g, 10.0, SpinUp::Zero).unwrap();
            hist.push(s0.snapshot()).unwrap();
            let mut p = params.clone();
            p.memory = false;
            let mut integ = PlateIntegrator::new(p, dt, quad.clone()).unwrap();
            let mut s = s0.clone();
            for _ in 0..steps {
                s = integ.step(&s, &mut hist).unwrap();
            }
            s
        };
        let diff = |dt: f64| (&run(dt, 1).u - &run(dt / 2.0, 2).u).norm();
        let (d1, d2) = (diff(4e-4), diff(2e-4));
        assert!((d1 / d2).log2() > 2.8, "order {}", (d1 / d2).log2());
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = PlateGrid::square(1.0, 8).unwrap();
        let quad = MemoryQuadrature::new(8, 8).unwrap();
        assert!(matches!(PlateIntegrator::new(PlateParams::linear(g, 1.0, 0.1), 0.01, quad.clone()), Err(Error::Domain(_))));
        assert!(PlateIntegrator::new(PlateParams::linear(g, 0.5, -0.1), 0.01, quad.clone()).is_err());
        assert!(PlateIntegrator::new(PlateParams::linear(g, 0.5, 0.1), 0.0, quad).is_err());
    }

    #[test]
    fn trailing_increments() {
        let ledger = EnergyLedger {
            entries: (0..11)
                .map(|k| LedgerEntry {
                    t: k as f64 * 0.1,
                    e_pl: 0.0,
                    e_kin: 0.0,
                    e_bend: 0.0,
                    e_airy: 0.0,
                    norm_ut: 0.0,
                    diss_integral: k as f64,
                    balance_residual: 0.0,
                })
                .collect(),
        };
        let inc = ledger.trailing_dissipation(0.3);
        assert_eq!(inc.len(), 8);
        assert!(inc.iter().all(|(_, d)| (d - 3.0).abs() < 1e-12));
    }
}
