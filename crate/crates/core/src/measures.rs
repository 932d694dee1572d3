//! Probability measures on the line: cell-averaged grid densities, empirical
//! atom sets, quantile functions, and exact 1-D Wasserstein distances.
//!
//! In one dimension the optimal coupling is monotone, so
//! `W_p(a, b)^p = ∫₀¹ |Q_a(q) − Q_b(q)|^p dq` and every distance here goes
//! through [`QuantileFunction`] samples on the midpoint probability grid
//! `q_j = (j + 1/2)/m`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate16, integrate_sqrt_endpoint};

/// Default number of quantile nodes.
pub const DEFAULT_QUANTILE_NODES: usize = 4096;

/// Tolerance on `h·Σρ − 1` accepted for a stored density.
pub const MASS_TOL: f64 = 1e-12;

/// Uniform cell-centred grid on `[left, right]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub left: f64,
    pub right: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(left: f64, right: f64, n: usize) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || right <= left {
            return Err(invalid(format!("grid needs right > left, got [{left}, {right}]")));
        }
        if n < 8 {
            return Err(invalid(format!("grid needs at least 8 cells, got {n}")));
        }
        Ok(Grid { left, right, n })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Grid::new(-half_width, half_width, n)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.right - self.left) / self.n as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.left + (i as f64 + 0.5) * self.h()
    }

    #[inline]
    pub fn edge(&self, k: usize) -> f64 {
        self.left + k as f64 * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    /// Same grid up to floating-point noise in the edges.
    pub fn matches(&self, other: &Grid) -> bool {
        let tol = 1e-12 * (self.right - self.left);
        self.n == other.n
            && (self.left - other.left).abs() <= tol
            && (self.right - other.right).abs() <= tol
    }

    pub fn ensure_matches(&self, other: &Grid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Exact cell averages of `f` restricted to the union of `support`
/// intervals, each piece by a 16-point rule; pieces that end on a support
/// endpoint use the square-root substitution. Values are not normalized.
pub fn cell_averages_on_support(grid: &Grid, f: impl Fn(f64) -> f64, support: &[(f64, f64)]) -> Vec<f64> {
    let h = grid.h();
    (0..grid.n)
        .map(|i| {
            let (e0, e1) = (grid.edge(i), grid.edge(i + 1));
            let mut cell = 0.0;
            for &(l, r) in support {
                let a = l.max(e0);
                let b = r.min(e1);
                if b <= a {
                    continue;
                }
                cell += match (a == l, b == r) {
                    (true, true) => {
                        let m = 0.5 * (a + b);
                        integrate_sqrt_endpoint(&f, a, m, true) + integrate_sqrt_endpoint(&f, m, b, false)
                    }
                    (true, false) => integrate_sqrt_endpoint(&f, a, b, true),
                    (false, true) => integrate_sqrt_endpoint(&f, a, b, false),
                    (false, false) => integrate16(&f, a, b),
                };
            }
            cell / h
        })
        .collect()
}

/// Nonnegative cell-averaged density with unit mass on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Cell values taken as given, then renormalized to unit mass.
    pub fn from_cell_values(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(invalid(format!(
                "{} cell values for a grid of {} cells",
                values.len(),
                grid.n
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("density value {bad} is negative or not finite")));
        }
        let mass = grid.h() * values.iter().sum::<f64>();
        if !(mass > 0.0) {
            return Err(Error::ZeroMass { left: grid.left, right: grid.right });
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(GridDensity { grid, values })
    }

    /// Midpoint evaluation of a pointwise density, renormalized.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n).map(|i| f(grid.center(i))).collect();
        GridDensity::from_cell_values(grid, values)
    }

    /// Histogram of samples. Samples outside the grid are an error.
    pub fn from_samples(grid: Grid, samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let h = grid.h();
        let mut counts = vec![0.0; grid.n];
        for &x in samples {
            if !(x >= grid.left && x <= grid.right) {
                return Err(Error::OutOfDomain { value: x, left: grid.left, right: grid.right });
            }
            let k = (((x - grid.left) / h) as usize).min(grid.n - 1);
            counts[k] += 1.0;
        }
        GridDensity::from_cell_values(grid, counts)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn mass(&self) -> f64 {
        self.h() * self.values.iter().sum::<f64>()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// `h Σ f(x_i) ρ_i`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.h();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &r)| f(self.grid.center(i)) * r)
            .sum::<f64>()
            * h
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|x| x * x)
    }

    /// Mass carried by the outermost `fraction` of cells on each side.
    pub fn edge_mass(&self, fraction: f64) -> f64 {
        let k = ((self.grid.n as f64 * fraction).ceil() as usize).max(1);
        let h = self.h();
        let lo: f64 = self.values[..k].iter().sum();
        let hi: f64 = self.values[self.grid.n - k..].iter().sum();
        (lo + hi) * h
    }

    /// Cell reflection `x → -x` (exact on a symmetric grid).
    pub fn reflected(&self) -> GridDensity {
        let grid = Grid { left: -self.grid.right, right: -self.grid.left, n: self.grid.n };
        GridDensity { grid, values: self.values.iter().rev().cloned().collect() }
    }

    /// Rebuild from a quantile function, read as the piecewise-linear
    /// interpolant through `(q_j, Q(q_j))` extended linearly to `q = 0, 1`
    /// and clamped to the grid.
    pub fn from_quantiles(grid: Grid, q: &QuantileFunction) -> Result<Self> {
        let x = q.values();
        let m = x.len();
        for &v in x {
            if v < grid.left || v > grid.right {
                return Err(Error::OutOfDomain { value: v, left: grid.left, right: grid.right });
            }
        }
        let h = grid.h();
        let mut mass = vec![0.0; grid.n];
        let cell_of = |v: f64| (((v - grid.left) / h) as usize).min(grid.n - 1);
        let mut spread = |lo: f64, hi: f64, w: f64| {
            let (lo, hi) = (lo.max(grid.left), hi.min(grid.right));
            if hi <= lo {
                mass[cell_of(lo.min(grid.right))] += w;
                return;
            }
            let density = w / (hi - lo);
            for (k, cell) in mass.iter_mut().enumerate().take(cell_of(hi) + 1).skip(cell_of(lo)) {
                let a = lo.max(grid.edge(k));
                let b = hi.min(grid.edge(k + 1));
                if b > a {
                    *cell += density * (b - a);
                }
            }
        };
        let w = 1.0 / m as f64;
        spread(x[0] - 0.5 * (x[1] - x[0]), x[0], 0.5 * w);
        for j in 0..m - 1 {
            spread(x[j], x[j + 1], w);
        }
        spread(x[m - 1], x[m - 1] + 0.5 * (x[m - 1] - x[m - 2]), 0.5 * w);
        GridDensity::from_cell_values(grid, mass.into_iter().map(|v| v / h).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * self.grid.n);
        out.push_str("x,rho\n");
        for (i, r) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_f64(self.grid.center(i)), fmt_f64(*r));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_csv(text, &["x", "rho"])?;
        if rows.len() < 8 {
            return Err(invalid("density CSV needs at least 8 rows"));
        }
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        let grid = Grid::new(xs[0] - 0.5 * h, xs[xs.len() - 1] + 0.5 * h, xs.len())?;
        GridDensity::from_cell_values(grid, rows.iter().map(|r| r[1]).collect())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        GridDensity::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Uniform atomic measure `(1/N) Σ δ_{x_i}` with sorted atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySamples);
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(invalid("empirical measure with a non-finite atom"));
        }
        atoms.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure { atoms })
    }

    /// Pool several measures with equal total weight per member.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a EmpiricalMeasure>) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut len = None;
        for p in parts {
            match len {
                None => len = Some(p.len()),
                Some(l) if l != p.len() => {
                    return Err(invalid("pooling measures with different atom counts"))
                }
                _ => {}
            }
            atoms.extend_from_slice(&p.atoms);
        }
        EmpiricalMeasure::new(atoms)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&x| f(x)).sum::<f64>() / self.atoms.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(26 * self.atoms.len() + 8);
        out.push_str("lambda\n");
        for x in &self.atoms {
            out.push_str(&fmt_f64(*x));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_csv(text, &["lambda"])?;
        EmpiricalMeasure::new(rows.into_iter().map(|r| r[0]).collect())
    }
}

/// Quantile samples at the nodes `q_j = (j + 1/2)/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileFunction {
    values: Vec<f64>,
}

impl QuantileFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("quantile function needs at least 2 nodes"));
        }
        if values.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(invalid("quantile values must be nondecreasing"));
        }
        Ok(QuantileFunction { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.values.len() as f64
    }
}

/// Anything with a quantile function.
pub trait Measure {
    fn quantile_function(&self, m: usize) -> Result<QuantileFunction>;
}

impl Measure for GridDensity {
    /// Inverts the piecewise-linear CDF through the cumulative cell masses;
    /// a level shared by several cells resolves to the leftmost one.
    fn quantile_function(&self, m: usize) -> Result<QuantileFunction> {
        if m < 2 {
            return Err(invalid("quantile function needs m >= 2"));
        }
        let h = self.h();
        let n = self.grid.n;
        let mut out = Vec::with_capacity(m);
        let mut k = 0usize;
        let mut below = 0.0; // CDF at the left edge of cell k
        for j in 0..m {
            let q = (j as f64 + 0.5) / m as f64;
            while k + 1 < n && below + self.values[k] * h < q {
                below += self.values[k] * h;
                k += 1;
            }
            let cell_mass = self.values[k] * h;
            let frac = if cell_mass > 0.0 { ((q - below) / cell_mass).clamp(0.0, 1.0) } else { 1.0 };
            out.push(self.grid.edge(k) + frac * h);
        }
        // guard against rounding producing a tiny decrease across cells
        for j in 1..m {
            if out[j] < out[j - 1] {
                out[j] = out[j - 1];
            }
        }
        QuantileFunction::new(out)
    }
}

impl Measure for EmpiricalMeasure {
    fn quantile_function(&self, m: usize) -> Result<QuantileFunction> {
        if m < 2 {
            return Err(invalid("quantile function needs m >= 2"));
        }
        let n = self.atoms.len();
        let values = (0..m)
            .map(|j| {
                let q = (j as f64 + 0.5) / m as f64;
                let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
                self.atoms[idx]
            })
            .collect();
        QuantileFunction::new(values)
    }
}

/// A measure of either kind, as read back from a run directory.
#[derive(Clone, Debug)]
pub enum AnyMeasure {
    Grid(GridDensity),
    Empirical(EmpiricalMeasure),
}

impl Measure for AnyMeasure {
    fn quantile_function(&self, m: usize) -> Result<QuantileFunction> {
        match self {
            AnyMeasure::Grid(d) => d.quantile_function(m),
            AnyMeasure::Empirical(e) => e.quantile_function(m),
        }
    }
}

impl AnyMeasure {
    /// Dispatch on the CSV header.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match text.lines().next().map(str::trim) {
            Some("x,rho") => Ok(AnyMeasure::Grid(GridDensity::from_csv(&text)?)),
            Some("lambda") => Ok(AnyMeasure::Empirical(EmpiricalMeasure::from_csv(&text)?)),
            other => Err(Error::Config(format!(
                "{}: unrecognized measure header {:?}",
                path.display(),
                other
            ))),
        }
    }
}

/// `(1/m Σ_j |Q_a(q_j) − Q_b(q_j)|^p)^{1/p}` for `p ∈ [1, 2]`.
pub fn wasserstein_quantiles(p: f64, a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(invalid(format!("Wasserstein order p = {p} outside [1, 2]")));
    }
    if a.m() != b.m() {
        return Err(invalid("quantile functions with different node counts"));
    }
    let m = a.m() as f64;
    let acc: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| {
            let d = (x - y).abs();
            if p == 1.0 {
                d
            } else if p == 2.0 {
                d * d
            } else {
                d.powf(p)
            }
        })
        .sum();
    Ok((acc / m).powf(1.0 / p))
}

pub fn wasserstein<A: Measure + ?Sized, B: Measure + ?Sized>(
    p: f64,
    a: &A,
    b: &B,
    m: usize,
) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(invalid(format!("Wasserstein order p = {p} outside [1, 2]")));
    }
    wasserstein_quantiles(p, &a.quantile_function(m)?, &b.quantile_function(m)?)
}

/// `W_2` with the default node count.
pub fn w2<A: Measure + ?Sized, B: Measure + ?Sized>(a: &A, b: &B) -> Result<f64> {
    wasserstein(2.0, a, b, DEFAULT_QUANTILE_NODES)
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_csv(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    if cols != header {
        return Err(Error::Config(format!("expected CSV header {header:?}, got {cols:?}")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Config(format!("CSV line {}: {e}", ln + 2)))?;
        if row.len() != header.len() {
            return Err(Error::Config(format!("CSV line {}: wrong column count", ln + 2)));
        }
        rows.push(row);
    }
    Ok(rows)
}
