//! Fourier-Laplace symbols of the half-space Neumann problem for the wave
//! equation, the sector split of the dual variables, the anisotropic norm of
//! boundary data and the trace and interior norms of the Neumann lift.
//!
//! Dual variables: `t -> tau = xi + i sigma`, `(x, y) -> i mu`. Then
//! `s = |mu|^2 + tau^2`, the lift is `eta(z) = -h e^{-z sqrt(s)} / sqrt(s)` and the
//! trace multiplier is `m = tau / sqrt(s)`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPoint {
    pub xi: f64,
    pub sigma: f64,
    pub mu: [f64; 2],
}

impl DualPoint {
    pub fn new(xi: f64, sigma: f64, mu: [f64; 2]) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::Domain(format!("Laplace abscissa must be positive, got {xi}")));
        }
        Ok(Self { xi, sigma, mu })
    }

    pub fn mu_norm(&self) -> f64 {
        self.mu[0].hypot(self.mu[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sector {
    Hyperbolic,
    Elliptic,
    Characteristic,
}

impl Sector {
    pub fn tag(&self) -> &'static str {
        match self {
            Sector::Hyperbolic => "h",
            Sector::Elliptic => "e",
            Sector::Characteristic => "c",
        }
    }
}

/// Ties go to the non-characteristic sectors.
pub fn classify_sector(sigma: f64, mu_norm: f64) -> Sector {
    let (s, m) = (sigma.abs(), mu_norm.abs());
    if m <= s / SQRT_2 {
        Sector::Hyperbolic
    } else if m >= SQRT_2 * s {
        Sector::Elliptic
    } else {
        Sector::Characteristic
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolValues {
    pub s: Complex64,
    pub sqrt_s: Complex64,
    pub m: Complex64,
    pub sector: Sector,
}

pub fn symbol(p: &DualPoint) -> Result<SymbolValues> {
    if !(p.xi > 0.0) {
        return Err(Error::Domain(format!("Laplace abscissa must be positive, got {}", p.xi)));
    }
    let mu2 = p.mu[0] * p.mu[0] + p.mu[1] * p.mu[1];
    let tau = Complex64::new(p.xi, p.sigma);
    let s = Complex64::new(mu2 - p.sigma * p.sigma + p.xi * p.xi, 2.0 * p.xi * p.sigma);
    let sqrt_s = principal_sqrt(s);
    Ok(SymbolValues { s, sqrt_s, m: tau / sqrt_s, sector: classify_sector(p.sigma, mu2.sqrt()) })
}

/// Principal root without cancellation: the smaller part is recovered from `Im s = 2 Re Im`.
/// `s` never lies on the closed negative axis when `xi > 0`.
fn principal_sqrt(s: Complex64) -> Complex64 {
    let r = s.re.hypot(s.im);
    if s.re >= 0.0 {
        let a = (0.5 * (r + s.re)).sqrt();
        Complex64::new(a, 0.5 * s.im / a)
    } else {
        let b = (0.5 * (r - s.re)).sqrt().copysign(s.im);
        Complex64::new(0.5 * s.im / b, b)
    }
}

/// `xi` log-uniform on `[1e-2, 1e3]`; `sigma` and `|mu|` log-uniform on `[1e-3, 1e3]`
/// with random sign and direction, one point in twenty put exactly on an axis.
pub fn log_uniform_sweep(n: usize, rng: &mut impl Rng) -> Vec<DualPoint> {
    let log = |lo: f64, hi: f64, r: &mut dyn rand::RngCore| 10f64.powf(r.gen_range(lo..hi));
    (0..n)
        .map(|_| {
            let xi = log(-2.0, 3.0, rng);
            let mut sigma = log(-3.0, 3.0, rng) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut mn = log(-3.0, 3.0, rng);
            match rng.gen_range(0..40) {
                0 => sigma = 0.0,
                1 => mn = 0.0,
                _ => {}
            }
            let a = rng.gen_range(0.0..2.0 * PI);
            DualPoint { xi, sigma, mu: [mn * a.cos(), mn * a.sin()] }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationReport {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `lhs / rhs - 1` (for lower bounds) or `rhs / lhs - 1` (for upper bounds).
    pub worst_margin: f64,
    pub worst_point: Option<DualPoint>,
}

impl ViolationReport {
    fn new() -> Self {
        Self { checked: 0, violations: 0, worst_margin: f64::INFINITY, worst_point: None }
    }

    fn record(&mut self, p: &DualPoint, margin: f64) {
        self.checked += 1;
        // a relative slack of a few ulps separates roundoff from a genuine violation
        if margin < -1e-12 {
            self.violations += 1;
        }
        if margin < self.worst_margin {
            self.worst_margin = margin;
            self.worst_point = Some(*p);
        }
    }
}

/// Lower bound on `sqrt|s|`: `xi/2 (1 + |mu|^2/xi^2)^{1/2}` in (e), (h) and `xi (1 + |mu|^2/xi^2)^{1/4}` in (c).
pub fn sqrt_bound(p: &DualPoint, sector: Sector) -> f64 {
    let r = 1.0 + (p.mu_norm() / p.xi).powi(2);
    match sector {
        Sector::Characteristic => p.xi * r.powf(0.25),
        _ => 0.5 * p.xi * r.sqrt(),
    }
}

/// Upper bound on `|m|`: 2 in (e), (h) and `2 (1 + |mu|^2/xi^2)^{1/4}` in (c).
pub fn m_bound(p: &DualPoint, sector: Sector) -> f64 {
    match sector {
        Sector::Characteristic => 2.0 * (1.0 + (p.mu_norm() / p.xi).powi(2)).powf(0.25),
        _ => 2.0,
    }
}

pub fn check_sqrt_bounds(points: &[DualPoint]) -> Result<ViolationReport> {
    let mut rep = ViolationReport::new();
    for p in points {
        let sv = symbol(p)?;
        rep.record(p, sv.s.norm().sqrt() / sqrt_bound(p, sv.sector) - 1.0);
    }
    Ok(rep)
}

pub fn check_m_bounds(points: &[DualPoint]) -> Result<ViolationReport> {
    let mut rep = ViolationReport::new();
    for p in points {
        let sv = symbol(p)?;
        rep.record(p, m_bound(p, sv.sector) / sv.m.norm() - 1.0);
    }
    Ok(rep)
}

/// Branch checks: `Re sqrt(s) > 0`, `sqrt(s)^2 = s`, and the chain
/// `sqrt2 Re sqrt(s) >= sqrt|s| >= xi/2`, with the sharper `Re sqrt(s) >= xi` alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchReport {
    pub checked: usize,
    pub nonpositive_real_part: usize,
    pub max_square_error: f64,
    /// Failures of `sqrt2 Re sqrt(s) >= sqrt|s|`.
    pub chain_upper: ViolationReport,
    /// Failures of `sqrt|s| >= xi/2`.
    pub chain_lower: ViolationReport,
    /// Failures of `Re sqrt(s) >= xi`.
    pub real_part_floor: ViolationReport,
}

pub fn check_branch(points: &[DualPoint]) -> Result<BranchReport> {
    let mut rep = BranchReport {
        checked: 0,
        nonpositive_real_part: 0,
        max_square_error: 0.0,
        chain_upper: ViolationReport::new(),
        chain_lower: ViolationReport::new(),
        real_part_floor: ViolationReport::new(),
    };
    for p in points {
        let sv = symbol(p)?;
        rep.checked += 1;
        if !(sv.sqrt_s.re > 0.0) {
            rep.nonpositive_real_part += 1;
        }
        rep.max_square_error = rep.max_square_error.max((sv.sqrt_s * sv.sqrt_s - sv.s).norm() / sv.s.norm());
        let root_abs = sv.s.norm().sqrt();
        rep.chain_upper.record(p, SQRT_2 * sv.sqrt_s.re / root_abs - 1.0);
        rep.chain_lower.record(p, root_abs / (0.5 * p.xi) - 1.0);
        rep.real_part_floor.record(p, sv.sqrt_s.re / p.xi - 1.0);
    }
    Ok(rep)
}

/// Row of the sweep table.
pub fn sweep_csv_row(p: &DualPoint) -> Result<String> {
    let sv = symbol(p)?;
    let bound = m_bound(p, sv.sector);
    let abs_m = sv.m.norm();
    Ok(format!(
        "{:.9e},{:.9e},{:.9e},{:.9e},{},{:.9e},{:.9e},{:.9e}",
        p.xi,
        p.sigma,
        p.mu[0],
        p.mu[1],
        sv.sector.tag(),
        abs_m,
        bound,
        bound / abs_m - 1.0
    ))
}

pub const SWEEP_CSV_HEADER: &str = "xi,sigma,mu1,mu2,sector,abs_m,bound,margin";

/// Real samples `h(t_k, x_i, y_j)` on a uniform box, `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
    /// Index `(k * ny + j) * nx + i`.
    pub values: Vec<f64>,
}

impl BoundaryData {
    pub fn from_fn(nt: usize, nx: usize, ny: usize, extent: [f64; 3], f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let (dt, dx, dy) = (extent[0] / nt as f64, extent[1] / nx as f64, extent[2] / ny as f64);
        let mut values = Vec::with_capacity(nt * nx * ny);
        for k in 0..nt {
            for j in 0..ny {
                for i in 0..nx {
                    values.push(f(k as f64 * dt, i as f64 * dx, j as f64 * dy));
                }
            }
        }
        Self { nt, nx, ny, dt, dx, dy, values }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[(k * self.ny + j) * self.nx + i]
    }

    /// `int e^{-2 xi t} h^2` by the rectangle rule.
    pub fn damped_l2_sq(&self, xi: f64) -> f64 {
        let cell = self.dt * self.dx * self.dy;
        let per = self.nx * self.ny;
        self.values
            .chunks(per)
            .enumerate()
            .map(|(k, slab)| (-2.0 * xi * k as f64 * self.dt).exp() * slab.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            * cell
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.nt * self.nx * self.ny || self.nt == 0 || self.nx == 0 || self.ny == 0 {
            return Err(invalid("boundary data length does not match its dimensions"));
        }
        Ok(())
    }
}

/// Discrete Fourier-Laplace transform: `|h^|^2` per mode, scaled so the unweighted sum is
/// the damped L2 norm, with the dual point of each mode.
pub struct Spectrum {
    pub xi: f64,
    pub modes: Vec<(DualPoint, f64)>,
}

/// `pad` multiplies the time window with zeros.
pub fn spectrum(h: &BoundaryData, xi: f64, pad: usize) -> Result<Spectrum> {
    h.validate()?;
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("Laplace abscissa must be positive, got {xi}")));
    }
    let pad = pad.max(1);
    let (nt, nx, ny) = (h.nt * pad, h.nx, h.ny);
    let mut buf = vec![Complex64::new(0.0, 0.0); nt * nx * ny];
    for k in 0..h.nt {
        let damp = (-xi * k as f64 * h.dt).exp();
        for j in 0..ny {
            for i in 0..nx {
                buf[(k * ny + j) * nx + i] = Complex64::new(damp * h.get(k, i, j), 0.0);
            }
        }
    }
    fft3(&mut buf, nt, ny, nx);
    let n = (nt * nx * ny) as f64;
    let cell = h.dt * h.dx * h.dy;
    let freq = |k: usize, n: usize, d: f64| {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        2.0 * PI * kk / (n as f64 * d)
    };
    let mut modes = Vec::with_capacity(buf.len());
    for k in 0..nt {
        let sigma = freq(k, nt, h.dt);
        for j in 0..ny {
            let m2 = freq(j, ny, h.dy);
            for i in 0..nx {
                let m1 = freq(i, nx, h.dx);
                let c = buf[(k * ny + j) * nx + i];
                modes.push((DualPoint { xi, sigma, mu: [m1, m2] }, c.norm_sqr() * cell / n));
            }
        }
    }
    Ok(Spectrum { xi, modes })
}

fn fft3(buf: &mut [Complex64], n0: usize, n1: usize, n2: usize) {
    let mut planner = FftPlanner::new();
    // innermost axis: contiguous rows
    let f2 = planner.plan_fft_forward(n2);
    for row in buf.chunks_mut(n2) {
        f2.process(row);
    }
    let mut line = vec![Complex64::new(0.0, 0.0); n1.max(n0)];
    let f1 = planner.plan_fft_forward(n1);
    for a in 0..n0 {
        for c in 0..n2 {
            for b in 0..n1 {
                line[b] = buf[(a * n1 + b) * n2 + c];
            }
            f1.process(&mut line[..n1]);
            for b in 0..n1 {
                buf[(a * n1 + b) * n2 + c] = line[b];
            }
        }
    }
    let f0 = planner.plan_fft_forward(n0);
    for b in 0..n1 {
        for c in 0..n2 {
            for a in 0..n0 {
                line[a] = buf[(a * n1 + b) * n2 + c];
            }
            f0.process(&mut line[..n0]);
            for a in 0..n0 {
                buf[(a * n1 + b) * n2 + c] = line[a];
            }
        }
    }
}

/// Norm in the anisotropic space: plain L2 in (e) and (h), `(1 + |mu|^2)^{1/2}` weight in (c).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicNorm {
    pub l2_part: f64,
    pub char_part: f64,
    pub total: f64,
}

impl Spectrum {
    pub fn x_norm(&self) -> AnisotropicNorm {
        let (mut l2, mut ch) = (0.0, 0.0);
        for (p, e) in &self.modes {
            match classify_sector(p.sigma, p.mu_norm()) {
                Sector::Characteristic => ch += (1.0 + p.mu_norm().powi(2)).sqrt() * e,
                _ => l2 += e,
            }
        }
        AnisotropicNorm { l2_part: l2.sqrt(), char_part: ch.sqrt(), total: (l2 + ch).sqrt() }
    }

    /// Unweighted sum over all modes.
    pub fn plain_sum(&self) -> f64 {
        self.modes.iter().map(|(_, e)| e).sum()
    }
}

/// Anisotropic norm of `h` with a doubled time window.
pub fn x_norm(h: &BoundaryData, xi: f64) -> Result<AnisotropicNorm> {
    Ok(spectrum(h, xi, 2)?.x_norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceSolution {
    pub eta: Vec<Complex64>,
    pub trace: Complex64,
    pub trace_t: Complex64,
}

/// Decaying solution of `eta_zz = s eta`, `eta_z(0) = h`.
pub fn halfspace_solve(h: Complex64, p: &DualPoint, z: &[f64]) -> Result<HalfspaceSolution> {
    let sv = symbol(p)?;
    let trace = -h / sv.sqrt_s;
    let eta = z.iter().map(|&zz| trace * (-zz * sv.sqrt_s).exp()).collect();
    Ok(HalfspaceSolution { eta, trace, trace_t: Complex64::new(p.xi, p.sigma) * trace })
}

/// Damped norms of the lift against `|h|^2_X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRatios {
    /// `int |m|^2 |h^|^2`: time derivative of the trace.
    pub trace_t: f64,
    /// `int (1 + |mu|^2)/|s| |h^|^2`: trace in H^1.
    pub trace_h1: f64,
    /// Interior counterparts, weighted by `int_0^inf e^{-2 z Re sqrt(s)} dz`.
    pub interior_t: f64,
    pub interior_h1: f64,
    pub x_norm_sq: f64,
    pub ratio: f64,
}

pub fn estimate_ratios(sp: &Spectrum) -> Result<Option<EstimateRatios>> {
    let xn = sp.x_norm().total.powi(2);
    if !(xn > 0.0) {
        return Ok(None);
    }
    let (mut tt, mut th, mut it, mut ih) = (0.0, 0.0, 0.0, 0.0);
    for (p, e) in &sp.modes {
        if *e == 0.0 {
            continue;
        }
        let sv = symbol(p)?;
        let a = sv.m.norm_sqr() * e;
        let b = (1.0 + p.mu_norm().powi(2)) / sv.s.norm() * e;
        let depth = 0.5 / sv.sqrt_s.re;
        tt += a;
        th += b;
        it += a * depth;
        ih += b * depth;
    }
    Ok(Some(EstimateRatios {
        trace_t: tt,
        trace_h1: th,
        interior_t: it,
        interior_h1: ih,
        x_norm_sq: xn,
        ratio: (tt + th + it + ih) / xn,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub entries: Vec<Option<EstimateRatios>>,
    pub skipped: usize,
    pub max_ratio: f64,
}

/// Ratios for a battery of boundary data; zero data are skipped.
pub fn certify_estimates(data: &[BoundaryData], xi: f64) -> Result<CertificationReport> {
    let mut entries = Vec::with_capacity(data.len());
    let (mut skipped, mut max_ratio) = (0, 0.0f64);
    for h in data {
        let r = estimate_ratios(&spectrum(h, xi, 2)?)?;
        match &r {
            Some(e) => {
                if !e.ratio.is_finite() {
                    return Err(Error::NumericFailure { message: "non-finite estimate ratio".into(), residual: e.ratio });
                }
                max_ratio = max_ratio.max(e.ratio);
            }
            None => skipped += 1,
        }
        entries.push(r);
    }
    Ok(CertificationReport { entries, skipped, max_ratio })
}

/// Smooth random data supported inside the box `[0, T] x [0, L]^2`:
/// a `sin^2` window times a few random plane waves.
pub fn random_boundary_data(rng: &mut impl Rng, n: usize, extent: [f64; 3], waves: usize) -> BoundaryData {
    let params: Vec<[f64; 5]> = (0..waves)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let frac: Vec<[f64; 2]> = (0..3).map(|_| [rng.gen_range(0.05..0.3), rng.gen_range(0.6..0.95)]).collect();
    let window = |v: f64, len: f64, f: [f64; 2]| {
        let (a, b) = (f[0] * len, f[1] * len);
        if v <= a || v >= b {
            0.0
        } else {
            (PI * (v - a) / (b - a)).sin().powi(2)
        }
    };
    BoundaryData::from_fn(n, n, n, extent, |t, x, y| {
        let w = window(t, extent[0], frac[0]) * window(x, extent[1], frac[1]) * window(y, extent[2], frac[2]);
        if w == 0.0 {
            return 0.0;
        }
        w * params.iter().map(|p| p[0] * (p[1] * t + p[2] * x + p[3] * y + p[4]).cos()).sum::<f64>()
    })
}

/// `h*(x, y, t) = h(x + U t, y, t)` by linear interpolation in `x`, zero outside the box.
pub fn galilean_shift(h: &BoundaryData, u_flow: f64) -> Result<BoundaryData> {
    h.validate()?;
    if !(u_flow.abs() < 1.0) {
        return Err(Error::Domain(format!("flow speed must satisfy |U| < 1, got {u_flow}")));
    }
    let mut out = h.clone();
    for k in 0..h.nt {
        let shift = u_flow * k as f64 * h.dt / h.dx;
        for j in 0..h.ny {
            for i in 0..h.nx {
                let fx = i as f64 + shift;
                let i0 = fx.floor();
                let a = fx - i0;
                let at = |ii: f64| {
                    if ii < 0.0 || ii >= h.nx as f64 {
                        0.0
                    } else {
                        h.get(k, ii as usize, j)
                    }
                };
                out.values[(k * h.ny + j) * h.nx + i] = (1.0 - a) * at(i0) + a * at(i0 + 1.0);
            }
        }
    }
    Ok(out)
}
