//! Uniform rectangular plate grids and nodal scalar fields.
//!
//! Nodes include the boundary. Values are stored row-major with rows along
//! `y`: node `(i, j)` lives at `j * nx + i`. Difference stencils that reach
//! one node past the boundary use the even reflection `f(-1) = f(1)`, which
//! is the ghost rule of a clamped edge.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGrid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl PlateGrid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(invalid(format!("plate sides must be positive, got {lx} x {ly}")));
        }
        if nx < 8 || ny < 8 {
            return Err(invalid(format!("grid needs at least 8 nodes per side, got {nx} x {ny}")));
        }
        Ok(Self { lx, ly, nx, ny, hx: lx / (nx - 1) as f64, hy: ly / (ny - 1) as f64 })
    }

    pub fn square(l: f64, n: usize) -> Result<Self> {
        Self::new(l, l, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.lx).contains(&x) && (0.0..=self.ly).contains(&y)
    }

    pub fn diameter(&self) -> f64 {
        self.lx.hypot(self.ly)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * self.lx, 0.5 * self.ly)
    }

    /// Largest distance from `(x, y)` to a point of the plate.
    pub fn max_distance(&self, x: f64, y: f64) -> f64 {
        let dx = x.abs().max((x - self.lx).abs());
        let dy = y.abs().max((y - self.ly).abs());
        dx.hypot(dy)
    }

    /// Distance from `(x, y)` to the closed plate (zero inside).
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (-x).max(x - self.lx).max(0.0);
        let dy = (-y).max(y - self.ly).max(0.0);
        dx.hypot(dy)
    }

    /// Trapezoid weight of node `(i, j)`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.hx * self.hy
    }

    /// Same grid with every spacing halved.
    pub fn refined(&self) -> Self {
        Self::new(self.lx, self.ly, 2 * self.nx - 1, 2 * self.ny - 1).expect("refinement of a valid grid")
    }

    fn ensure_same(&self, other: &PlateGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(invalid(format!(
                "grid mismatch: {}x{} on {}x{} vs {}x{} on {}x{}",
                self.nx, self.ny, self.lx, self.ly, other.nx, other.ny, other.lx, other.ly
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: PlateGrid,
    pub values: Vec<f64>,
}

/// Second partial derivatives of a field on its grid.
#[derive(Debug, Clone)]
pub struct SecondDerivatives {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

impl ScalarField {
    pub fn zeros(grid: PlateGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: PlateGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: PlateGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    /// Value with even reflection one node past each edge.
    #[inline]
    fn ghost(&self, i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        let i = if i < 0 { -i } else if i >= nx { 2 * (nx - 1) - i } else { i };
        let j = if j < 0 { -j } else if j >= ny { 2 * (ny - 1) - j } else { j };
        self.values[(j * nx + i) as usize]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sets the boundary values to zero.
    pub fn clamp_boundary(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.is_boundary(i, j) {
                    self.set(i, j, 0.0);
                }
            }
        }
    }

    pub fn dx(&self) -> ScalarField {
        let g = self.grid;
        let mut out = ScalarField::zeros(g);
        let c = 0.5 / g.hx;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (ii, jj) = (i as isize, j as isize);
                out.set(i, j, c * (self.ghost(ii + 1, jj) - self.ghost(ii - 1, jj)));
            }
        }
        out
    }

    pub fn dy(&self) -> ScalarField {
        let g = self.grid;
        let mut out = ScalarField::zeros(g);
        let c = 0.5 / g.hy;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (ii, jj) = (i as isize, j as isize);
                out.set(i, j, c * (self.ghost(ii, jj + 1) - self.ghost(ii, jj - 1)));
            }
        }
        out
    }

    pub fn second_derivatives(&self) -> SecondDerivatives {
        let g = self.grid;
        let (mut xx, mut xy, mut yy) = (ScalarField::zeros(g), ScalarField::zeros(g), ScalarField::zeros(g));
        let (cx, cy, cxy) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy), 0.25 / (g.hx * g.hy));
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (a, b) = (i as isize, j as isize);
                let c = self.ghost(a, b);
                xx.set(i, j, cx * (self.ghost(a + 1, b) - 2.0 * c + self.ghost(a - 1, b)));
                yy.set(i, j, cy * (self.ghost(a, b + 1) - 2.0 * c + self.ghost(a, b - 1)));
                xy.set(
                    i,
                    j,
                    cxy * (self.ghost(a + 1, b + 1) - self.ghost(a + 1, b - 1) - self.ghost(a - 1, b + 1)
                        + self.ghost(a - 1, b - 1)),
                );
            }
        }
        SecondDerivatives { xx, xy, yy }
    }

    pub fn laplacian(&self) -> ScalarField {
        let d = self.second_derivatives();
        &d.xx + &d.yy
    }

    /// Bilinear interpolation inside the closed plate, zero outside.
    pub fn extend_interpolate(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        if !g.contains(x, y) {
            return 0.0;
        }
        let (fx, fy) = (x / g.hx, y / g.hy);
        let i = (fx.floor() as usize).min(g.nx - 2);
        let j = (fy.floor() as usize).min(g.ny - 2);
        let (ax, ay) = (fx - i as f64, fy - j as f64);
        let k = g.idx(i, j);
        let v = &self.values;
        (1.0 - ay) * ((1.0 - ax) * v[k] + ax * v[k + 1]) + ay * ((1.0 - ax) * v[k + g.nx] + ax * v[k + g.nx + 1])
    }

    /// Samples the field at every node of `target` by interpolation.
    pub fn resample(&self, target: PlateGrid) -> ScalarField {
        ScalarField::from_fn(target, |x, y| self.extend_interpolate(x, y))
    }

    pub fn norm(&self) -> f64 {
        l2_inner(self, self).expect("same grid").sqrt()
    }

    pub fn write_fld(&self, path: &Path, t: f64) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(self.to_fld_string(t).as_bytes())?;
        Ok(())
    }

    pub fn to_fld_string(&self, t: f64) -> String {
        let g = &self.grid;
        let mut s = format!("{} {} {:.17e} {:.17e} {:.17e}\n", g.nx, g.ny, g.lx, g.ly, t);
        for j in 0..g.ny {
            let row: Vec<String> = (0..g.nx).map(|i| format!("{:.17e}", self.get(i, j))).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    /// Reads a `.fld` file, returning the field and its time stamp.
    pub fn read_fld(path: &Path) -> Result<(ScalarField, f64)> {
        Self::parse_fld(std::fs::File::open(path)?)
    }

    pub fn parse_fld(reader: impl Read) -> Result<(ScalarField, f64)> {
        // leading `#` lines carry provenance and are skipped
        let mut lines = BufReader::new(reader).lines().peekable();
        while let Some(Ok(l)) = lines.peek() {
            if !l.starts_with('#') {
                break;
            }
            lines.next();
        }
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(Error::Parse(format!("field header needs `nx ny Lx Ly t`, got `{header}`")));
        }
        let pu = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let pf = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let grid = PlateGrid::new(pf(h[2])?, pf(h[3])?, pu(h[0])?, pu(h[1])?)?;
        let t = pf(h[4])?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            for tok in line?.split_whitespace() {
                values.push(pf(tok)?);
            }
        }
        if values.len() != grid.len() {
            return Err(Error::Parse(format!("expected {} values, found {}", grid.len(), values.len())));
        }
        Ok((ScalarField { grid, values }, t))
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect();
        ScalarField { grid: self.grid, values }
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect();
        ScalarField { grid: self.grid, values }
    }
}

impl Mul<&ScalarField> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a * b).collect();
        ScalarField { grid: self.grid, values }
    }
}

/// Trapezoid-rule `L2(Omega)` inner product.
pub fn l2_inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    let grid = f.grid;
    let mut s = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            s += grid.weight(i, j) * f.values[k] * g.values[k];
        }
    }
    Ok(s)
}
