//! Experiment pipelines behind the command line, plus the decay diagnostics
//! shared with the acceptance runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, XiChoice};
use crate::dynamics::{simulate, PlateParams, PlateState, SimulationSetup, Trajectory};
use crate::error::Result;
use crate::fields::{PlateGrid, ScalarField};
use crate::flow::{distance_to_equilibrium, window_difference_energy, FlowSource, HalfBallGrid, KirchhoffQuadrature};
use crate::memory::{escape_time, MemoryQuadrature};
use crate::microlocal::{
    check_branch, check_m_bounds, check_sqrt_bounds, log_uniform_sweep, sweep_csv_row, SWEEP_CSV_HEADER,
};
use crate::stationary::{solve_stationary, steady_flow_probe, NewtonOptions, StationaryResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Clamped bump `(x (Lx - x) y (Ly - y))^2`, scaled to a unit maximum.
pub fn unit_bump(grid: PlateGrid) -> ScalarField {
    let (lx, ly) = (grid.lx, grid.ly);
    let scale = 256.0 / (lx.powi(4) * ly.powi(4));
    ScalarField::from_fn(grid, move |x, y| scale * (x * (lx - x) * y * (ly - y)).powi(2))
}

pub fn plate_params(cfg: &ExperimentConfig) -> Result<PlateParams> {
    let grid = PlateGrid::new(cfg.lx, cfg.ly, cfg.nx, cfg.ny)?;
    let b = unit_bump(grid);
    let params = PlateParams {
        u_flow: cfg.u_flow,
        k0: cfg.k0,
        p0: b.scaled(cfg.p0),
        f0: b.scaled(cfg.f0),
        nonlinear: cfg.nonlinear,
        memory: cfg.memory,
    };
    params.validate()?;
    Ok(params)
}

pub fn simulation_setup(cfg: &ExperimentConfig, keep_history: bool) -> Result<SimulationSetup> {
    let params = plate_params(cfg)?;
    let grid = params.p0.grid;
    let mut initial = PlateState::at_rest(grid);
    initial.u_t = unit_bump(grid).scaled(cfg.initial_velocity);
    Ok(SimulationSetup {
        params,
        dt: cfg.dt,
        t_end: cfg.t_end,
        quad: MemoryQuadrature::new(cfg.ns, cfg.ntheta)?,
        spin_up: cfg.spin_up,
        scheme: cfg.scheme,
        initial,
        keep_history,
        store_every: cfg.snapshot_every,
    })
}

/// Long-time behaviour of one run, measured after the escape time.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub t_star: f64,
    /// `(t, |u_t|)` for every step.
    pub velocity: Vec<(f64, f64)>,
    pub post_spinup_max: f64,
    pub final_velocity: f64,
    /// `(t, distance to the equilibrium)` at evenly spaced times in `[t*, T]`.
    pub distance: Vec<(f64, f64)>,
    /// `(t_n, window energy of the flow difference)` on windows tiling `[t*, T]`.
    pub window_energy: Vec<(f64, f64)>,
    /// `(t, int_{t-w}^t |u_t|^2)` for a trailing window `w`.
    pub trailing_dissipation: Vec<(f64, f64)>,
    /// Mean `|u_t|` over the second half of the run.
    pub final_half_mean: f64,
    /// Mean `|u_t|` over the last tenth of the run.
    pub final_tail_mean: f64,
    pub equilibrium: StationaryResult,
}

impl DecayReport {
    pub fn velocity_ratio(&self) -> f64 {
        self.final_velocity / self.post_spinup_max
    }

    pub fn distance_ratio(&self) -> f64 {
        self.distance.last().map_or(f64::NAN, |d| d.1) / self.distance[0].1
    }

    pub fn window_energy_decreasing(&self) -> bool {
        self.window_energy.windows(2).all(|w| w[1].1 < w[0].1)
    }

    /// `|u_t|` at the end of the run against the mean over the second half.
    pub fn persistence_ratio(&self) -> f64 {
        self.final_tail_mean / self.final_half_mean
    }

    pub fn stabilized(&self) -> bool {
        self.velocity_ratio() < 1e-3 && self.distance_ratio() < 1e-3
    }
}

fn mean_over(series: &[(f64, f64)], from: f64) -> f64 {
    let sel: Vec<f64> = series.iter().filter(|p| p.0 >= from - 1e-12).map(|p| p.1).collect();
    sel.iter().sum::<f64>() / sel.len().max(1) as f64
}

/// Runs `setup`, solves for the equilibrium of the same parameters and
/// measures the approach to it. The run must extend past the escape time.
pub fn decay_study(setup: &SimulationSetup, kquad: &KirchhoffQuadrature, samples: usize) -> Result<(DecayReport, Trajectory)> {
    let grid = setup.params.p0.grid;
    let t_star = escape_time(&grid, setup.params.u_flow)?;
    if !(setup.t_end > t_star) || samples < 2 {
        return Err(crate::error::invalid(format!(
            "decay study needs T > t* = {t_star:.3} and at least two samples"
        )));
    }
    let mut run = setup.clone();
    run.keep_history = true;
    let traj = simulate(&run)?;
    let eq = solve_stationary(&setup.params, &ScalarField::zeros(grid), &setup.quad, &NewtonOptions::default())?;

    let velocity = traj.velocity_norms();
    let post_spinup_max = velocity.iter().filter(|v| v.0 >= t_star).map(|v| v.1).fold(0.0, f64::max);
    let final_velocity = velocity.last().map_or(0.0, |v| v.1);
    let t_end = velocity.last().map_or(0.0, |v| v.0);

    let (cx, cy) = grid.center();
    let ball = HalfBallGrid::new([cx, cy], 0.5 * grid.diameter() + 1.0, 16, 8, 16)?;
    let u_flow = setup.params.u_flow;
    let hist = &traj.history;
    let mut distance = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = t_star + (t_end - t_star) * k as f64 / (samples - 1) as f64;
        let (u, u_t) = hist.state_at(t)?;
        let state = PlateState { t, u, u_t };
        distance.push((t, distance_to_equilibrium(&state, hist, &eq.u_hat, u_flow, &ball, kquad)?));
    }
    let a = 0.5 * (t_end - t_star) / samples as f64;
    let mut window_energy = Vec::with_capacity(samples);
    for n in 0..samples {
        let t_n = t_star + a * (2 * n + 1) as f64;
        window_energy.push((t_n, window_difference_energy(hist, &eq.u_hat, u_flow, &ball, t_n, a, kquad)?));
    }
    let report = DecayReport {
        t_star,
        post_spinup_max,
        final_velocity,
        distance,
        window_energy,
        trailing_dissipation: traj.ledger.trailing_dissipation(2.0),
        final_half_mean: mean_over(&velocity, 0.5 * t_end),
        final_tail_mean: mean_over(&velocity, 0.9 * t_end),
        velocity,
        equilibrium: eq,
    };
    Ok((report, traj))
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub line: String,
    pub files: Vec<PathBuf>,
}

struct Output<'a> {
    dir: &'a Path,
    header: String,
    files: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(cfg: &ExperimentConfig, dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let header = format!("# aeroplate {VERSION} {} config {}\n", cfg.kind.name(), cfg.hash());
        Ok(Self { dir, header, files: Vec::new() })
    }

    fn csv(&mut self, name: &str, columns: &str, rows: impl IntoIterator<Item = String>, trailer: Option<&str>) -> Result<()> {
        let mut s = self.header.clone();
        s.push_str(columns);
        s.push('\n');
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        if let Some(t) = trailer {
            let _ = writeln!(s, "# {t}");
        }
        self.write(name, &s)
    }

    fn fld(&mut self, name: &str, f: &ScalarField, t: f64) -> Result<()> {
        let s = format!("{}{}", self.header, f.to_fld_string(t));
        self.write(name, &s)
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)?;
        self.files.push(path);
        Ok(())
    }
}

fn e(v: f64) -> String {
    format!("{v:.12e}")
}

/// Runs the configured experiment, writing into `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut out = Output::new(cfg, &cfg.out_dir)?;
    let line = match cfg.kind {
        ExperimentKind::Simulate => run_simulate(cfg, &mut out)?,
        ExperimentKind::Stationary => run_stationary(cfg, &mut out)?,
        ExperimentKind::VerifyMicrolocal => run_microlocal(cfg, &mut out)?,
        ExperimentKind::ReconstructFlow => run_reconstruct(cfg, &mut out)?,
        ExperimentKind::DecayStudy | ExperimentKind::UndampedContrast => run_decay(cfg, &mut out)?,
    };
    Ok(RunSummary { line, files: out.files })
}

fn run_simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<String> {
    let setup = simulation_setup(cfg, false)?;
    let traj = simulate(&setup)?;
    out.csv("ledger.csv", crate::dynamics::EnergyLedger::CSV_HEADER, traj.ledger.csv_rows(), None)?;
    let stride = cfg.snapshot_every;
    if stride > 0 {
        for (k, s) in traj.states.iter().enumerate() {
            out.fld(&format!("u_{:06}.fld", k * stride), &s.u, s.t)?;
        }
    } else {
        out.fld("u_000000.fld", &setup.initial.u, setup.initial.t)?;
    }
    let steps = traj.ledger.entries.len() - 1;
    if steps > 0 && (stride == 0 || steps % stride != 0) {
        out.fld(&format!("u_{steps:06}.fld"), &traj.final_state.u, traj.final_state.t)?;
    }
    let last = traj.ledger.entries.last().expect("initial entry");
    Ok(format!(
        "simulate: steps {steps}, t {:.4}, |u_t| {:.6e}, E_pl {:.6e}, max balance residual {:.3e}",
        last.t,
        last.norm_ut,
        last.e_pl,
        traj.ledger.entries.iter().map(|e| e.balance_residual.abs()).fold(0.0, f64::max)
    ))
}

fn probe_points(grid: &PlateGrid, n: usize, height: f64) -> Vec<[f64; 3]> {
    let (cx, cy) = grid.center();
    (1..=n).map(|k| [cx, cy, height * k as f64 / n as f64]).collect()
}

fn run_stationary(cfg: &ExperimentConfig, out: &mut Output) -> Result<String> {
    let params = plate_params(cfg)?;
    let quad = MemoryQuadrature::new(cfg.ns, cfg.ntheta)?;
    let opts = NewtonOptions {
        tol: cfg.newton_tol,
        continuation: cfg.continuation,
        load_scale: cfg.load_scale,
        ..NewtonOptions::default()
    };
    let grid = params.p0.grid;
    let mut res = solve_stationary(&params, &ScalarField::zeros(grid), &quad, &opts)?;
    let points = probe_points(&grid, cfg.probes, cfg.probe_height);
    let kquad = KirchhoffQuadrature::new(cfg.flow_nr, cfg.flow_ntheta)?;
    let probe = steady_flow_probe(&res.u_hat, cfg.u_flow, &points, &kquad)?;
    out.fld("u_hat.fld", &res.u_hat, 0.0)?;
    out.csv(
        "newton.csv",
        "iteration,residual",
        res.residual_history.iter().enumerate().map(|(k, r)| format!("{k},{}", e(*r))),
        None,
    )?;
    out.csv(
        "steady_flow.csv",
        "x1,x2,x3,phi,phi_x1,phi_x2,phi_x3",
        points.iter().zip(&probe).map(|(x, p)| format!("{},{},{},{},{},{},{}", e(x[0]), e(x[1]), e(x[2]), e(p[0]), e(p[1]), e(p[2]), e(p[3]))),
        None,
    )?;
    let line = format!(
        "stationary: newton iterations {}, residual {:.3e}, max |u_hat| {:.6e}",
        res.newton_iters,
        res.residual,
        res.u_hat.max_abs()
    );
    res.flow_hat_probe = Some(probe);
    Ok(line)
}

fn run_microlocal(cfg: &ExperimentConfig, out: &mut Output) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = log_uniform_sweep(cfg.points, &mut rng);
    if let XiChoice::Fixed(xi) = cfg.xi {
        for p in &mut points {
            p.xi = xi;
        }
    }
    let sq = check_sqrt_bounds(&points)?;
    let m = check_m_bounds(&points)?;
    let br = check_branch(&points)?;
    let summary = format!(
        "verify-microlocal: points {}, sqrt-bound violations {}, m-bound violations {}, Re sqrt(s) <= 0 at {}, \
         sqrt2 Re sqrt(s) >= sqrt|s| fails at {}, sqrt|s| >= xi/2 fails at {}, worst m margin {:.3e}",
        points.len(),
        sq.violations,
        m.violations,
        br.nonpositive_real_part,
        br.chain_upper.violations,
        br.chain_lower.violations,
        m.worst_margin
    );
    let rows = points.iter().map(sweep_csv_row).collect::<Result<Vec<_>>>()?;
    out.csv("sweep.csv", SWEEP_CSV_HEADER, rows, Some(&summary))?;
    Ok(summary)
}

fn run_reconstruct(cfg: &ExperimentConfig, out: &mut Output) -> Result<String> {
    let setup = simulation_setup(cfg, true)?;
    let traj = simulate(&setup)?;
    let source = FlowSource::new(&traj.history, cfg.u_flow)?;
    let kquad = KirchhoffQuadrature::new(cfg.flow_nr, cfg.flow_ntheta)?;
    let t = traj.final_state.t;
    let mut rows = Vec::new();
    let mut peak = 0.0f64;
    for x in probe_points(&source.grid(), cfg.probes, cfg.probe_height) {
        let s = source.sample(x, t, &kquad)?;
        peak = peak.max(s.phi.abs());
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            e(x[0]),
            e(x[1]),
            e(x[2]),
            e(t),
            e(s.phi),
            e(s.phi_t),
            e(s.grad[0]),
            e(s.grad[1]),
            e(s.grad[2])
        ));
    }
    out.csv("flow.csv", "x1,x2,x3,t,phi,phi_t,phi_x1,phi_x2,phi_x3", rows, None)?;
    Ok(format!("reconstruct-flow: probes {}, t {:.4}, max |phi| {:.6e}", cfg.probes, t, peak))
}

fn run_decay(cfg: &ExperimentConfig, out: &mut Output) -> Result<String> {
    let mut setup = simulation_setup(cfg, true)?;
    let undamped = cfg.kind == ExperimentKind::UndampedContrast;
    if undamped {
        setup.params.k0 = 0.0;
    }
    let kquad = KirchhoffQuadrature::new(cfg.flow_nr, cfg.flow_ntheta)?;
    let (rep, traj) = decay_study(&setup, &kquad, cfg.samples)?;
    out.csv(
        "decay.csv",
        "t,norm_ut,diss_integral",
        traj.ledger.entries.iter().map(|l| format!("{},{},{}", e(l.t), e(l.norm_ut), e(l.diss_integral))),
        None,
    )?;
    out.csv("distance.csv", "t,distance", rep.distance.iter().map(|(t, d)| format!("{},{}", e(*t), e(*d))), None)?;
    out.csv(
        "window_energy.csv",
        "t,window_energy",
        rep.window_energy.iter().map(|(t, d)| format!("{},{}", e(*t), e(*d))),
        None,
    )?;
    out.fld("u_hat.fld", &rep.equilibrium.u_hat, 0.0)?;
    if undamped {
        Ok(format!(
            "undamped-contrast: persistent: {}, tail/half-mean |u_t| {:.3e}, final |u_t| / post-spin-up max {:.3e}",
            rep.persistence_ratio() >= 0.5,
            rep.persistence_ratio(),
            rep.velocity_ratio()
        ))
    } else {
        Ok(format!(
            "decay-study: stabilized: {}, final |u_t| / post-spin-up max {:.3e}, distance ratio {:.3e}, window energy decreasing: {}",
            rep.stabilized(),
            rep.velocity_ratio(),
            rep.distance_ratio(),
            rep.window_energy_decreasing()
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("aeroplate-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn zero_horizon_writes_the_initial_snapshot_only() {
        let dir = tmp("t0");
        let cfg = ExperimentConfig::parse(&format!("grid.nx = 8\ngrid.ny = 8\ntime.T = 0\noutput.dir = {}", dir.display())).unwrap();
        let s = run(&cfg).unwrap();
        let flds: Vec<_> = s.files.iter().filter(|p| p.extension().is_some_and(|e| e == "fld")).collect();
        assert_eq!(flds.len(), 1);
        let (u, t) = ScalarField::read_fld(flds[0]).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(u.max_abs(), 0.0);
        let ledger = std::fs::read_to_string(dir.join("ledger.csv")).unwrap();
        assert!(ledger.starts_with(&format!("# aeroplate {VERSION} simulate config {}", cfg.hash())));
        assert_eq!(ledger.lines().count(), 3);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn microlocal_run_is_deterministic() {
        let dir = tmp("ml");
        let cfg = ExperimentConfig::parse(&format!(
            "experiment.kind = verify-microlocal\nmicrolocal.points = 500\nseed = 4\noutput.dir = {}",
            dir.display()
        ))
        .unwrap();
        let a = run(&cfg).unwrap();
        let first = std::fs::read(dir.join("sweep.csv")).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(first, std::fs::read(dir.join("sweep.csv")).unwrap());
        assert_eq!(a.line, b.line);
        assert!(a.line.contains("sqrt-bound violations 0, m-bound violations 0"));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
