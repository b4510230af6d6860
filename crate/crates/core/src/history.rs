//! Sliding window of past plate states.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::fields::{PlateGrid, ScalarField};

/// How the history is continued before the first stored snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinUp {
    /// The plate was at rest in the flat position.
    Zero,
    /// The plate sat at rest in its first stored configuration.
    Constant,
}

impl std::str::FromStr for SpinUp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(SpinUp::Zero),
            "constant" => Ok(SpinUp::Constant),
            other => Err(invalid(format!("unknown spin-up `{other}` (zero | constant)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: ScalarField,
    pub u_t: ScalarField,
}

/// Three nodal fields per time level, linearly interpolated in time and
/// bilinearly in space, extended by zero outside the plate.
#[derive(Debug, Clone)]
pub(crate) struct TripletSeries {
    grid: PlateGrid,
    times: VecDeque<f64>,
    data: VecDeque<Vec<[f64; 3]>>,
    prefix: Option<Vec<[f64; 3]>>,
}

impl TripletSeries {
    pub(crate) fn new(grid: PlateGrid, prefix: Option<Vec<[f64; 3]>>) -> Self {
        Self { grid, times: VecDeque::new(), data: VecDeque::new(), prefix }
    }

    pub(crate) fn push(&mut self, t: f64, d: Vec<[f64; 3]>) {
        self.times.push_back(t);
        self.data.push_back(d);
    }

    pub(crate) fn pop_front(&mut self) {
        self.times.pop_front();
        self.data.pop_front();
    }

    pub(crate) fn interleave(a: &ScalarField, b: &ScalarField, c: &ScalarField) -> Vec<[f64; 3]> {
        a.values.iter().zip(&b.values).zip(&c.values).map(|((a, b), c)| [*a, *b, *c]).collect()
    }

    /// Time slot of `tau`: `None` means before the first snapshot.
    #[inline]
    fn locate(&self, tau: f64) -> Option<(usize, f64)> {
        let n = self.times.len();
        let t0 = *self.times.front()?;
        if tau < t0 {
            return None;
        }
        let tl = self.times[n - 1];
        if n == 1 || tau >= tl {
            return Some((n - 1, 0.0));
        }
        let dt = (tl - t0) / (n - 1) as f64;
        let mut k = (((tau - t0) / dt) as usize).min(n - 2);
        while k + 1 < n - 1 && self.times[k + 1] <= tau {
            k += 1;
        }
        while k > 0 && self.times[k] > tau {
            k -= 1;
        }
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        Some((k, (tau - ta) / (tb - ta)))
    }

    #[inline]
    pub(crate) fn sample(&self, tau: f64, x: f64, y: f64) -> [f64; 3] {
        let g = &self.grid;
        if !(x >= 0.0 && x <= g.lx && y >= 0.0 && y <= g.ly) {
            return [0.0; 3];
        }
        let (fx, fy) = (x / g.hx, y / g.hy);
        let i = (fx as usize).min(g.nx - 2);
        let j = (fy as usize).min(g.ny - 2);
        let (ax, ay) = (fx - i as f64, fy - j as f64);
        let k = j * g.nx + i;
        let (w00, w10, w01, w11) = ((1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay);
        let bil = |d: &[[f64; 3]]| -> [f64; 3] {
            let (a, b, c, e) = (&d[k], &d[k + 1], &d[k + g.nx], &d[k + g.nx + 1]);
            [
                w00 * a[0] + w10 * b[0] + w01 * c[0] + w11 * e[0],
                w00 * a[1] + w10 * b[1] + w01 * c[1] + w11 * e[1],
                w00 * a[2] + w10 * b[2] + w01 * c[2] + w11 * e[2],
            ]
        };
        match self.locate(tau) {
            None => match &self.prefix {
                Some(p) => bil(p),
                None => [0.0; 3],
            },
            Some((k0, a)) => {
                let v0 = bil(&self.data[k0]);
                if a == 0.0 {
                    return v0;
                }
                let v1 = bil(&self.data[k0 + 1]);
                [v0[0] + a * (v1[0] - v0[0]), v0[1] + a * (v1[1] - v0[1]), v0[2] + a * (v1[2] - v0[2])]
            }
        }
    }
}

/// Past states `(u, u_t)` over a trailing window, with the second
/// derivatives of `u` cached for the memory quadrature.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    grid: PlateGrid,
    window: f64,
    spin_up: SpinUp,
    snaps: VecDeque<Snapshot>,
    d2: TripletSeries,
    start: Option<f64>,
    dropped: bool,
}

impl HistoryBuffer {
    /// `window` is the span kept behind the latest snapshot; use `f64::INFINITY` to keep everything.
    pub fn new(grid: PlateGrid, window: f64, spin_up: SpinUp) -> Result<Self> {
        if !(window > 0.0) {
            return Err(invalid(format!("history window must be positive, got {window}")));
        }
        Ok(Self {
            grid,
            window,
            spin_up,
            snaps: VecDeque::new(),
            d2: TripletSeries::new(grid, None),
            start: None,
            dropped: false,
        })
    }

    pub fn grid(&self) -> PlateGrid {
        self.grid
    }

    pub fn spin_up(&self) -> SpinUp {
        self.spin_up
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    /// Time of the first snapshot ever pushed.
    pub fn start_time(&self) -> Option<f64> {
        self.start
    }

    pub fn latest(&self) -> Option<&Snapshot> {
        self.snaps.back()
    }

    pub fn oldest(&self) -> Option<&Snapshot> {
        self.snaps.front()
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.snaps.iter()
    }

    /// Whether the stored data (plus the spin-up rule) determine the state at every time after `t`.
    pub fn covers(&self, t: f64) -> bool {
        match self.snaps.front() {
            None => false,
            Some(s) => !self.dropped || s.t <= t + 1e-12 * t.abs().max(1.0),
        }
    }

    pub fn push(&mut self, snap: Snapshot) -> Result<()> {
        if snap.u.grid != self.grid || snap.u_t.grid != self.grid {
            return Err(invalid("snapshot grid differs from the history grid"));
        }
        if let Some(last) = self.snaps.back() {
            if !(snap.t > last.t) {
                return Err(Error::State(format!("snapshot time {} does not advance past {}", snap.t, last.t)));
            }
        }
        let d = snap.u.second_derivatives();
        let tri = TripletSeries::interleave(&d.xx, &d.xy, &d.yy);
        if self.snaps.is_empty() {
            self.start = Some(snap.t);
            if self.spin_up == SpinUp::Constant {
                self.d2.prefix = Some(tri.clone());
            }
        }
        self.d2.push(snap.t, tri);
        self.snaps.push_back(snap);
        let latest = self.snaps.back().map(|s| s.t).unwrap_or(0.0);
        while self.snaps.len() > 2 && self.snaps[1].t <= latest - self.window {
            self.snaps.pop_front();
            self.d2.pop_front();
            self.dropped = true;
        }
        Ok(())
    }

    /// Removes the most recent snapshot.
    pub fn pop_latest(&mut self) -> Option<Snapshot> {
        let s = self.snaps.pop_back()?;
        self.d2.times.pop_back();
        self.d2.data.pop_back();
        if self.snaps.is_empty() {
            self.start = None;
            self.d2.prefix = None;
        }
        Some(s)
    }

    /// `(u, u_t)` at time `t`, interpolated linearly between snapshots and continued by the spin-up rule.
    pub fn state_at(&self, t: f64) -> Result<(ScalarField, ScalarField)> {
        let first = self.snaps.front().ok_or_else(|| Error::State("empty history".into()))?;
        let last = self.snaps.back().expect("non-empty");
        if t > last.t + 1e-9 * last.t.abs().max(1.0) {
            return Err(Error::State(format!("time {t} lies after the latest snapshot {}", last.t)));
        }
        if t < first.t {
            if self.dropped {
                return Err(Error::State(format!("time {t} precedes the retained window")));
            }
            return Ok(match self.spin_up {
                SpinUp::Zero => (ScalarField::zeros(self.grid), ScalarField::zeros(self.grid)),
                SpinUp::Constant => (first.u.clone(), ScalarField::zeros(self.grid)),
            });
        }
        let k = self.snaps.partition_point(|s| s.t <= t).saturating_sub(1);
        if k + 1 >= self.snaps.len() {
            return Ok((last.u.clone(), last.u_t.clone()));
        }
        let (a, b) = (&self.snaps[k], &self.snaps[k + 1]);
        let w = (t - a.t) / (b.t - a.t);
        let mix = |p: &ScalarField, q: &ScalarField| {
            let mut r = p.scaled(1.0 - w);
            r.axpy(w, q);
            r
        };
        Ok((mix(&a.u, &b.u), mix(&a.u_t, &b.u_t)))
    }

    pub(crate) fn d2_series(&self) -> &TripletSeries {
        &self.d2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(g: PlateGrid, t: f64) -> Snapshot {
        Snapshot { t, u: ScalarField::from_fn(g, |x, y| t * x * y), u_t: ScalarField::from_fn(g, |x, y| x * y) }
    }

    #[test]
    fn window_drops_old_snapshots() {
        let g = PlateGrid::square(1.0, 8).unwrap();
        let mut h = HistoryBuffer::new(g, 1.0, SpinUp::Zero).unwrap();
        for k in 0..30 {
            h.push(snap(g, 0.1 * k as f64)).unwrap();
        }
        let oldest = h.oldest().unwrap().t;
        assert!(oldest <= 2.9 - 1.0 + 1e-12 && oldest > 2.9 - 1.2);
        assert!(h.covers(1.9));
        assert!(!h.covers(1.5));
        assert!(h.state_at(1.0).is_err());
    }

    #[test]
    fn rejects_non_increasing_times() {
        let g = PlateGrid::square(1.0, 8).unwrap();
        let mut h = HistoryBuffer::new(g, 1.0, SpinUp::Zero).unwrap();
        h.push(snap(g, 0.5)).unwrap();
        assert!(h.push(snap(g, 0.5)).is_err());
    }

    #[test]
    fn interpolates_and_applies_spin_up() {
        let g = PlateGrid::square(1.0, 8).unwrap();
        let mut h = HistoryBuffer::new(g, 10.0, SpinUp::Constant).unwrap();
        h.push(snap(g, 1.0)).unwrap();
        h.push(snap(g, 2.0)).unwrap();
        let (u, _) = h.state_at(1.25).unwrap();
        assert!((u.get(7, 7) - 1.25).abs() < 1e-14);
        let (u, ut) = h.state_at(0.0).unwrap();
        assert!((u.get(7, 7) - 1.0).abs() < 1e-14);
        assert_eq!(ut.max_abs(), 0.0);
        let s = h.d2_series();
        // u = t x y has u_xy = t
        assert!((s.sample(1.5, 0.5, 0.5)[1] - 1.5).abs() < 1e-12);
        assert!((s.sample(-3.0, 0.5, 0.5)[1] - 1.0).abs() < 1e-12);
        assert_eq!(s.sample(1.5, 1.2, 0.5), [0.0; 3]);
    }
}
