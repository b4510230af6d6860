//! Experiment configuration: `key = value` lines with dotted keys, `#` comments.
//!
//! Unset keys take the defaults listed in [`KEYS`]; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dynamics::TimeScheme;
use crate::error::{Error, Result};
use crate::history::SpinUp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Simulate,
    Stationary,
    VerifyMicrolocal,
    ReconstructFlow,
    DecayStudy,
    UndampedContrast,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::VerifyMicrolocal => "verify-microlocal",
            ExperimentKind::ReconstructFlow => "reconstruct-flow",
            ExperimentKind::DecayStudy => "decay-study",
            ExperimentKind::UndampedContrast => "undamped-contrast",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "simulate" => ExperimentKind::Simulate,
            "stationary" => ExperimentKind::Stationary,
            "verify-microlocal" => ExperimentKind::VerifyMicrolocal,
            "reconstruct-flow" => ExperimentKind::ReconstructFlow,
            "decay-study" => ExperimentKind::DecayStudy,
            "undamped-contrast" => ExperimentKind::UndampedContrast,
            other => return Err(format!("unknown experiment `{other}`")),
        })
    }
}

/// Laplace abscissa for the microlocal sweep: fixed, or drawn per point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiChoice {
    Fixed(f64),
    Sweep,
}

impl FromStr for XiChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "sweep" {
            return Ok(XiChoice::Sweep);
        }
        s.parse::<f64>().map(XiChoice::Fixed).map_err(|e| format!("expected a number or `sweep`: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub u_flow: f64,
    pub k0: f64,
    pub nonlinear: bool,
    pub memory: bool,
    /// Amplitude of the clamped bump load `p0`.
    pub p0: f64,
    /// Amplitude of the in-plane force `F0` (same bump shape).
    pub f0: f64,
    /// Amplitude of the initial velocity bump.
    pub initial_velocity: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: TimeScheme,
    pub ns: usize,
    pub ntheta: usize,
    pub spin_up: SpinUp,
    pub flow_nr: usize,
    pub flow_ntheta: usize,
    pub kind: ExperimentKind,
    pub out_dir: PathBuf,
    /// Snapshot stride in steps; 0 writes only the first and last state.
    pub snapshot_every: usize,
    pub seed: u64,
    pub load_scale: f64,
    pub continuation: usize,
    pub newton_tol: f64,
    pub points: usize,
    pub xi: XiChoice,
    pub probes: usize,
    pub probe_height: f64,
    pub samples: usize,
}

/// Every accepted key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("grid.nx", "24", "nodes in x (>= 8)"),
    ("grid.ny", "24", "nodes in y (>= 8)"),
    ("grid.Lx", "2", "plate length"),
    ("grid.Ly", "2", "plate width"),
    ("flow.U", "0.5", "flow speed, |U| < 1"),
    ("damping.k0", "0.1", "structural damping, >= 0"),
    ("plate.nonlinear", "true", "von Karman terms"),
    ("plate.memory", "true", "delayed flow term q"),
    ("load.p0", "50", "amplitude of the transverse bump load"),
    ("load.F0", "0", "amplitude of the in-plane force"),
    ("initial.velocity", "0", "amplitude of the initial velocity bump"),
    ("time.dt", "0.04", "time step"),
    ("time.T", "20", "final time"),
    ("time.scheme", "modal", "modal | crank-nicolson"),
    ("memory.Ns", "16", "Gauss nodes per ray stretch (>= 8)"),
    ("memory.Ntheta", "32", "angular nodes (>= 8)"),
    ("memory.spinup", "zero", "history before t = 0: zero | constant"),
    ("flow.Nr", "16", "Kirchhoff radial nodes (>= 8)"),
    ("flow.Ntheta", "32", "Kirchhoff angular nodes (>= 8)"),
    ("experiment.kind", "simulate", "simulate | stationary | verify-microlocal | reconstruct-flow | decay-study | undamped-contrast"),
    ("output.dir", "out", "output directory"),
    ("output.every", "0", "snapshot stride in steps"),
    ("seed", "0", "random seed"),
    ("stationary.load_scale", "1", "multiplies p0"),
    ("stationary.continuation", "1", "load steps"),
    ("stationary.tol", "1e-10", "relative Newton tolerance"),
    ("microlocal.points", "100000", "dual points in the sweep"),
    ("microlocal.xi", "sweep", "Laplace abscissa, a number or `sweep`"),
    ("reconstruct.probes", "16", "probe points above the plate centre"),
    ("reconstruct.height", "2", "height of the highest probe"),
    ("decay.samples", "8", "times at which flow distances are evaluated"),
];

fn default_text() -> String {
    KEYS.iter().map(|(k, v, _)| format!("{k} = {v}\n")).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::parse(&default_text()).expect("defaults are valid")
    }
}

fn key_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses the text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<(&str, String)> = KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            let k = k.trim();
            let slot = values.iter_mut().find(|(key, _)| *key == k).ok_or_else(|| key_err(k, "unknown key"))?;
            slot.1 = v.trim().to_string();
        }
        let get = |key: &str| values.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str()).expect("known key");
        fn typed<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| key_err(key, format!("cannot parse `{v}`: {e}")))
        }
        let num = |key: &str| typed::<f64>(key, get(key));
        let count = |key: &str| typed::<usize>(key, get(key));
        let flag = |key: &str| typed::<bool>(key, get(key));
        let cfg = Self {
            nx: count("grid.nx")?,
            ny: count("grid.ny")?,
            lx: num("grid.Lx")?,
            ly: num("grid.Ly")?,
            u_flow: num("flow.U")?,
            k0: num("damping.k0")?,
            nonlinear: flag("plate.nonlinear")?,
            memory: flag("plate.memory")?,
            p0: num("load.p0")?,
            f0: num("load.F0")?,
            initial_velocity: num("initial.velocity")?,
            dt: num("time.dt")?,
            t_end: num("time.T")?,
            scheme: get("time.scheme").parse().map_err(|e: Error| key_err("time.scheme", e.to_string()))?,
            ns: count("memory.Ns")?,
            ntheta: count("memory.Ntheta")?,
            spin_up: get("memory.spinup").parse().map_err(|e: Error| key_err("memory.spinup", e.to_string()))?,
            flow_nr: count("flow.Nr")?,
            flow_ntheta: count("flow.Ntheta")?,
            kind: typed("experiment.kind", get("experiment.kind"))?,
            out_dir: PathBuf::from(get("output.dir")),
            snapshot_every: count("output.every")?,
            seed: typed("seed", get("seed"))?,
            load_scale: num("stationary.load_scale")?,
            continuation: count("stationary.continuation")?,
            newton_tol: num("stationary.tol")?,
            points: count("microlocal.points")?,
            xi: typed("microlocal.xi", get("microlocal.xi"))?,
            probes: count("reconstruct.probes")?,
            probe_height: num("reconstruct.height")?,
            samples: count("decay.samples")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(key_err(key, msg)) };
        check(self.nx >= 8, "grid.nx", "needs at least 8 nodes")?;
        check(self.ny >= 8, "grid.ny", "needs at least 8 nodes")?;
        check(self.lx > 0.0 && self.lx.is_finite(), "grid.Lx", "must be positive")?;
        check(self.ly > 0.0 && self.ly.is_finite(), "grid.Ly", "must be positive")?;
        check(self.u_flow.abs() < 1.0, "flow.U", "flow must be subsonic, |U| < 1")?;
        check(self.k0 >= 0.0 && self.k0.is_finite(), "damping.k0", "must be non-negative")?;
        check(self.p0.is_finite(), "load.p0", "must be finite")?;
        check(self.f0.is_finite(), "load.F0", "must be finite")?;
        check(self.initial_velocity.is_finite(), "initial.velocity", "must be finite")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "time.dt", "must be positive")?;
        check(self.t_end >= 0.0 && self.t_end.is_finite(), "time.T", "must be non-negative")?;
        check(self.ns >= 8, "memory.Ns", "needs at least 8 nodes")?;
        check(self.ntheta >= 8, "memory.Ntheta", "needs at least 8 nodes")?;
        check(self.flow_nr >= 8, "flow.Nr", "needs at least 8 nodes")?;
        check(self.flow_ntheta >= 8, "flow.Ntheta", "needs at least 8 nodes")?;
        check(self.load_scale.is_finite(), "stationary.load_scale", "must be finite")?;
        check(self.continuation >= 1, "stationary.continuation", "needs at least one load step")?;
        check(self.newton_tol > 0.0, "stationary.tol", "must be positive")?;
        check(self.points >= 1, "microlocal.points", "needs at least one point")?;
        if let XiChoice::Fixed(xi) = self.xi {
            check(xi > 0.0 && xi.is_finite(), "microlocal.xi", "must be positive")?;
        }
        check(self.probes >= 1, "reconstruct.probes", "needs at least one probe")?;
        check(self.probe_height > 0.0, "reconstruct.height", "must be positive")?;
        check(self.samples >= 2, "decay.samples", "needs at least two samples")?;
        Ok(())
    }

    /// Resolved configuration, one `key = value` per line in the order of [`KEYS`].
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let xi = match self.xi {
            XiChoice::Fixed(v) => format!("{v:?}"),
            XiChoice::Sweep => "sweep".to_string(),
        };
        let scheme = match self.scheme {
            TimeScheme::Modal => "modal",
            TimeScheme::CrankNicolson => "crank-nicolson",
        };
        let spin = match self.spin_up {
            SpinUp::Zero => "zero",
            SpinUp::Constant => "constant",
        };
        let vals: Vec<String> = vec![
            self.nx.to_string(),
            self.ny.to_string(),
            format!("{:?}", self.lx),
            format!("{:?}", self.ly),
            format!("{:?}", self.u_flow),
            format!("{:?}", self.k0),
            self.nonlinear.to_string(),
            self.memory.to_string(),
            format!("{:?}", self.p0),
            format!("{:?}", self.f0),
            format!("{:?}", self.initial_velocity),
            format!("{:?}", self.dt),
            format!("{:?}", self.t_end),
            scheme.to_string(),
            self.ns.to_string(),
            self.ntheta.to_string(),
            spin.to_string(),
            self.flow_nr.to_string(),
            self.flow_ntheta.to_string(),
            self.kind.name().to_string(),
            self.out_dir.display().to_string(),
            self.snapshot_every.to_string(),
            self.seed.to_string(),
            format!("{:?}", self.load_scale),
            self.continuation.to_string(),
            format!("{:?}", self.newton_tol),
            self.points.to_string(),
            xi,
            self.probes.to_string(),
            format!("{:?}", self.probe_height),
            self.samples.to_string(),
        ];
        for ((k, _, _), v) in KEYS.iter().zip(vals) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Key reference for `--help`.
pub fn keys_help() -> String {
    KEYS.iter().map(|(k, v, d)| format!("  {k:<24} {d} [default: {v}]\n")).collect()
}
