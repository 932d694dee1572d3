//! Conservative upwind finite-volume solver for
//! `∂_t ρ = ∂_x(ρ(V′/2 − Hρ))` on a bounded grid with zero-flux walls.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::freecalc::{fisher_terms_with, free_entropy, hilbert_transform, GridField};
use crate::measures::{cell_averages_on_support, w2, Grid, GridDensity};
use crate::potentials::{equilibrium_closed_form, Potential, PotentialSpec};

pub const DEFAULT_CFL: f64 = 0.4;
/// Fraction of cells at each wall watched by the boundary-mass monitor.
pub const BOUNDARY_FRACTION: f64 = 0.05;
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;
/// Relative tail cut for gaussian initial data.
pub const GAUSSIAN_TAIL_CUT: f64 = 1e-16;
/// Slack allowed when comparing step times with snapshot times.
pub(crate) const TIME_EPS: f64 = 1e-12;

/// Initial density of a PDE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitSpec {
    Gaussian { mean: f64, std: f64 },
    Uniform { a: f64, b: f64 },
    Semicircle { radius: f64, center: f64 },
    Equilibrium,
    File { path: PathBuf },
}

impl InitSpec {
    /// Cell-averaged initial density on `grid`, renormalized on the domain.
    pub fn density(&self, grid: &Grid, potential: &Potential) -> Result<GridDensity> {
        match *self {
            InitSpec::Gaussian { mean, std } => {
                if !(std > 0.0) {
                    return Err(invalid("gaussian std must be positive"));
                }
                GridDensity::from_fn(*grid, |x| {
                    let g = (-(x - mean).powi(2) / (2.0 * std * std)).exp();
                    if g < GAUSSIAN_TAIL_CUT {
                        0.0
                    } else {
                        g
                    }
                })
            }
            InitSpec::Uniform { a, b } => {
                if !(b > a) {
                    return Err(invalid("uniform needs a < b"));
                }
                let values = cell_averages_on_support(grid, |_| 1.0, &[(a, b)]);
                GridDensity::from_cell_values(*grid, values)
            }
            InitSpec::Semicircle { radius, center } => {
                if !(radius > 0.0) {
                    return Err(invalid("semicircle radius must be positive"));
                }
                let f = |x: f64| (radius * radius - (x - center).powi(2)).max(0.0).sqrt();
                let values = cell_averages_on_support(grid, f, &[(center - radius, center + radius)]);
                GridDensity::from_cell_values(*grid, values)
            }
            InitSpec::Equilibrium => equilibrium_closed_form(potential, grid),
            InitSpec::File { ref path } => {
                let d = GridDensity::read_csv(path)?;
                d.grid().ensure_matches(grid)?;
                Ok(d)
            }
        }
    }

    /// Parses the flag grammar `kind:key=val,...`, e.g. `gaussian:mean=0,std=0.5`,
    /// `uniform:a=-2,b=2`, `semicircle:radius=2,center=0`, `equilibrium` or
    /// `file:<path>`.
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        if kind == "file" {
            return Ok(InitSpec::File { path: PathBuf::from(rest) });
        }
        let spec = PotentialSpec::parse(text)?;
        let get = |k: &str, default: Option<f64>| {
            spec.params
                .get(k)
                .copied()
                .or(default)
                .ok_or_else(|| Error::Config(format!("initial density {kind:?} needs {k}")))
        };
        let init = match kind {
            "gaussian" => InitSpec::Gaussian { mean: get("mean", Some(0.0))?, std: get("std", None)? },
            "uniform" => InitSpec::Uniform { a: get("a", None)?, b: get("b", None)? },
            "semicircle" => InitSpec::Semicircle { radius: get("radius", None)?, center: get("center", Some(0.0))? },
            "equilibrium" => InitSpec::Equilibrium,
            _ => return Err(Error::Config(format!("unknown initial density {kind:?}"))),
        };
        let known: &[&str] = match init {
            InitSpec::Gaussian { .. } => &["mean", "std"],
            InitSpec::Uniform { .. } => &["a", "b"],
            InitSpec::Semicircle { .. } => &["radius", "center"],
            _ => &[],
        };
        if let Some(k) = spec.params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter {k:?} for {kind}")));
        }
        Ok(init)
    }

    /// Radius of a centred interval holding all but about 1e-8 of the mass,
    /// when it can be read off the spec.
    fn mass_radius(&self) -> Option<f64> {
        match *self {
            // P(|Z| > 5.73) ≈ 1e-8
            InitSpec::Gaussian { mean, std } => Some(mean.abs() + 5.73 * std),
            InitSpec::Uniform { a, b } => Some(a.abs().max(b.abs())),
            InitSpec::Semicircle { radius, center } => Some(center.abs() + radius),
            InitSpec::Equilibrium | InitSpec::File { .. } => None,
        }
    }
}

/// Default half-width `L` of the domain `[−L, L]`: 1.5 times the closed-form
/// support radius when it is known, widened to the initial mass radius plus
/// 2 when the start reaches beyond it.
pub fn default_half_width(potential: &Potential, init: &InitSpec) -> Option<f64> {
    let init_r = init.mass_radius();
    match (potential.closed_form_radius(), init_r) {
        (Some(r), Some(ri)) if ri <= 1.5 * r => Some(1.5 * r),
        (Some(r), None) => Some(1.5 * r),
        (_, Some(ri)) => Some(ri + 2.0),
        (None, None) => None,
    }
}

/// Settings of one PDE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub grid: Grid,
    /// Fixed step; `None` selects the stable step from `cfl` every step.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub cfl: f64,
    pub snapshot_times: Vec<f64>,
    pub init: InitSpec,
}

impl PdeConfig {
    pub fn new(grid: Grid, t_end: f64, snapshot_times: Vec<f64>, init: InitSpec) -> Self {
        PdeConfig { grid, dt: None, t_end, cfl: DEFAULT_CFL, snapshot_times, init }
    }

    /// Snapshots every `every` time units from 0 through `t_end`.
    pub fn uniform_snapshots(t_end: f64, every: f64) -> Vec<f64> {
        let k = (t_end / every).round() as usize;
        (0..=k).map(|i| i as f64 * every).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n < 64 {
            return Err(invalid("PDE grid needs n >= 64"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(invalid("cfl must lie in (0, 0.9]"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end must be positive"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("dt must be positive"));
            }
        }
        if self.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("snapshot times must be strictly increasing"));
        }
        if self.snapshot_times.iter().any(|&t| t < 0.0 || t > self.t_end + TIME_EPS) {
            return Err(invalid("snapshot times must lie in [0, t_end]"));
        }
        Ok(())
    }
}

/// Per-snapshot functionals of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub sigma_v: f64,
    pub rel_sigma: Option<f64>,
    pub fisher: f64,
    pub grad_sq: f64,
    pub m1: f64,
    pub m2: f64,
    pub w2_to_ref: Option<f64>,
}

impl DiagnosticsRow {
    pub fn compute(t: f64, density: &GridDensity, potential: &Potential, reference: Option<(&GridDensity, f64)>) -> Result<Self> {
        let hilbert = hilbert_transform(density);
        let terms = fisher_terms_with(density, potential, &hilbert);
        let sigma_v = free_entropy(density, potential)?;
        let (rel_sigma, w2_to_ref) = match reference {
            Some((r, sigma_ref)) => {
                r.grid().ensure_matches(density.grid())?;
                (Some(sigma_v - sigma_ref), Some(w2(density, r)?))
            }
            None => (None, None),
        };
        Ok(DiagnosticsRow {
            t,
            sigma_v,
            rel_sigma,
            fisher: terms.fisher,
            grad_sq: terms.grad_sq,
            m1: density.mean(),
            m2: density.second_moment(),
            w2_to_ref,
        })
    }
}

/// Run-level bookkeeping gathered every step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    /// Largest `|h Σρ_out − h Σρ_in|` before renormalization.
    pub max_mass_drift: f64,
    pub min_density: f64,
    pub max_boundary_mass: f64,
}

/// Snapshots of one run with their diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub densities: Vec<GridDensity>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.densities[0].grid()
    }

    /// Largest increase of `Σ_V` between consecutive snapshots (≤ 0 when
    /// the entropy is monotone).
    pub fn max_entropy_increase(&self) -> f64 {
        self.diagnostics
            .windows(2)
            .map(|w| w[1].sigma_v - w[0].sigma_v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Density at the snapshot closest to `t`.
    pub fn at(&self, t: f64) -> Option<&GridDensity> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9)
            .map(|k| &self.densities[k])
    }
}

/// Transport velocity `v = Hρ − V′/2` at the cell centres.
pub fn velocity(density: &GridDensity, potential: &Potential) -> GridField {
    let hilbert = hilbert_transform(density);
    velocity_from_hilbert(density.grid(), potential, hilbert.values())
}

fn velocity_from_hilbert(grid: &Grid, potential: &Potential, hilbert: &[f64]) -> GridField {
    let values = hilbert
        .iter()
        .enumerate()
        .map(|(i, hr)| hr - 0.5 * potential.dv(grid.center(i)))
        .collect();
    GridField::new(*grid, values).expect("velocity has one value per cell")
}

fn interface_velocities(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Largest step keeping every cell's outflow below `cfl` of its content:
/// `cfl·h / max_i (v⁺_{i+1/2} + v⁻_{i−1/2})`.
fn stable_dt(h: f64, iface: &[f64], cfl: f64) -> f64 {
    let n = iface.len() + 1;
    let mut worst = 0.0f64;
    for i in 0..n {
        let right = if i + 1 < n { iface[i].max(0.0) } else { 0.0 };
        let left = if i > 0 { (-iface[i - 1]).max(0.0) } else { 0.0 };
        worst = worst.max(right + left);
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        cfl * h / worst
    }
}

/// Unnormalized upwind update; returns the new values.
fn upwind(rho: &[f64], iface: &[f64], h: f64, dt: f64) -> Vec<f64> {
    let flux: Vec<f64> = iface
        .iter()
        .enumerate()
        .map(|(i, &v)| if v >= 0.0 { v * rho[i] } else { v * rho[i + 1] })
        .collect();
    let r = dt / h;
    (0..rho.len())
        .map(|i| {
            let out = if i < flux.len() { flux[i] } else { 0.0 };
            let inn = if i > 0 { flux[i - 1] } else { 0.0 };
            rho[i] - r * (out - inn)
        })
        .collect()
}

struct StepOutcome {
    density: GridDensity,
    mass_drift: f64,
    min_density: f64,
}

fn advance(density: &GridDensity, iface: &[f64], dt: f64) -> Result<StepOutcome> {
    let h = density.h();
    let values = upwind(density.values(), iface, h, dt);
    let min_density = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_density < 0.0 {
        return Err(Error::NegativeDensity(min_density));
    }
    let mass_drift = (h * values.iter().sum::<f64>() - density.mass()).abs();
    let density = GridDensity::from_cell_values(*density.grid(), values)?;
    Ok(StepOutcome { density, mass_drift, min_density })
}

/// One explicit step of length `dt`. Fails when `dt` exceeds the positivity
/// bound of the upwind scheme.
pub fn step(density: &GridDensity, potential: &Potential, dt: f64) -> Result<GridDensity> {
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let v = velocity(density, potential);
    let iface = interface_velocities(v.values());
    let bound = stable_dt(density.h(), &iface, 1.0);
    if dt > bound {
        return Err(Error::Cfl { dt, bound });
    }
    Ok(advance(density, &iface, dt)?.density)
}

fn check_boundary(density: &GridDensity, t: f64) -> Result<f64> {
    let mass = density.edge_mass(BOUNDARY_FRACTION);
    if mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::BoundaryMass { mass, t });
    }
    Ok(mass)
}

/// Evolves the configured initial density to `t_end`, recording the density
/// and its diagnostics at each snapshot time. `reference` (usually the
/// equilibrium) feeds `rel_sigma` and `w2_to_ref`.
pub fn evolve(config: &PdeConfig, potential: &Potential, reference: Option<&GridDensity>) -> Result<Trajectory> {
    let initial = config.init.density(&config.grid, potential)?;
    evolve_from(config, potential, initial, reference)
}

/// As [`evolve`], from an explicit initial density on `config.grid`.
pub fn evolve_from(
    config: &PdeConfig,
    potential: &Potential,
    initial: GridDensity,
    reference: Option<&GridDensity>,
) -> Result<Trajectory> {
    config.validate()?;
    potential.check_grid(&config.grid)?;
    initial.grid().ensure_matches(&config.grid)?;
    let reference = match reference {
        Some(r) => Some((r, free_entropy(r, potential)?)),
        None => None,
    };

    let mut targets = config.snapshot_times.clone();
    if targets.is_empty() {
        targets = vec![0.0, config.t_end];
    }
    let h = config.grid.h();
    let mut stats = StepStats { min_density: initial.values().iter().copied().fold(f64::INFINITY, f64::min), ..Default::default() };
    stats.max_boundary_mass = check_boundary(&initial, 0.0)?;

    let mut traj = Trajectory { times: Vec::new(), densities: Vec::new(), diagnostics: Vec::new(), stats: StepStats::default() };
    let record = |t: f64, d: &GridDensity, traj: &mut Trajectory| -> Result<()> {
        traj.diagnostics.push(DiagnosticsRow::compute(t, d, potential, reference)?);
        traj.times.push(t);
        traj.densities.push(d.clone());
        Ok(())
    };

    let mut rho = initial;
    let mut t = 0.0;
    for &target in &targets {
        while target - t > TIME_EPS {
            let hilbert = hilbert_transform(&rho);
            let v = velocity_from_hilbert(&config.grid, potential, hilbert.values());
            let iface = interface_velocities(v.values());
            let bound = stable_dt(h, &iface, config.cfl);
            let dt = match config.dt {
                Some(dt) if dt > bound => return Err(Error::Cfl { dt, bound }),
                Some(dt) => dt,
                None => bound,
            };
            let dt = dt.min(target - t);
            let out = advance(&rho, &iface, dt)?;
            t = if target - (t + dt) <= TIME_EPS { target } else { t + dt };
            stats.steps += 1;
            stats.max_mass_drift = stats.max_mass_drift.max(out.mass_drift);
            stats.min_density = stats.min_density.min(out.min_density);
            rho = out.density;
            stats.max_boundary_mass = stats.max_boundary_mass.max(check_boundary(&rho, t)?);
        }
        record(target, &rho, &mut traj)?;
    }
    traj.stats = stats;
    Ok(traj)
}

/// `(t, m2, residual)` where the residual compares a finite-difference
/// `dm2/dt` with `1 − ∫x V′ ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentResidual {
    pub t: f64,
    pub m2: f64,
    pub residual: f64,
}

/// Second-order finite differences of `y` at every node of the nonuniform
/// mesh `t`: centred inside, three-point one-sided at the ends.
pub(crate) fn derivative_series(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    // derivative at t[k] of the quadratic through nodes (a, b, c)
    let lagrange = |a: usize, b: usize, c: usize, k: usize| {
        let x = t[k];
        let da = ((x - t[b]) + (x - t[c])) / ((t[a] - t[b]) * (t[a] - t[c]));
        let db = ((x - t[a]) + (x - t[c])) / ((t[b] - t[a]) * (t[b] - t[c]));
        let dc = ((x - t[a]) + (x - t[b])) / ((t[c] - t[a]) * (t[c] - t[b]));
        da * y[a] + db * y[b] + dc * y[c]
    };
    (0..n)
        .map(|k| match k {
            0 => lagrange(0, 1, 2, 0),
            k if k == n - 1 => lagrange(n - 3, n - 2, n - 1, k),
            k => lagrange(k - 1, k, k + 1, k),
        })
        .collect()
}

pub fn second_moment_series(traj: &Trajectory, potential: &Potential) -> Result<Vec<MomentResidual>> {
    if traj.times.len() < 3 {
        return Err(invalid("second_moment_series needs at least 3 snapshots"));
    }
    let m2: Vec<f64> = traj.densities.iter().map(GridDensity::second_moment).collect();
    let dm2 = derivative_series(&traj.times, &m2);
    Ok(traj
        .densities
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let rhs = 1.0 - d.integrate(|x| x * potential.dv(x));
            MomentResidual { t: traj.times[k], m2: m2[k], residual: dm2[k] - rhs }
        })
        .collect())
}
