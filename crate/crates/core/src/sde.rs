//! Euler-Maruyama integration of the particle system
//! `dλⁱ = √(2/(βN)) dWⁱ + [(1/N) Σ_{j≠i} φ_R(λⁱ − λʲ) − V′(λⁱ)/2] dt`
//! with the truncated interaction `φ_R` and Brownian-bridge step halving.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{EmpiricalMeasure, Grid, Measure};
use crate::pde::{default_half_width, InitSpec};
use crate::potentials::{make_potential, Potential, PotentialSpec};

pub const DEFAULT_MIN_GAP: f64 = 1e-12;
pub const DEFAULT_MAX_HALVINGS: u32 = 48;
/// Cells of the density grid used to place quantile initial positions.
pub const QUANTILE_INIT_CELLS: usize = 4096;
const TIME_EPS: f64 = 1e-12;

/// Ordered particle configuration at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    pub beta: f64,
    lambdas: Vec<f64>,
}

fn is_chamber(l: &[f64], min_gap: f64) -> bool {
    l.iter().all(|x| x.is_finite()) && l.windows(2).all(|w| w[1] - w[0] >= min_gap && w[1] > w[0])
}

/// State at `t = 0` from strictly increasing positions.
pub fn init_state(positions: Vec<f64>, beta: f64) -> Result<ParticleState> {
    if !(beta >= 1.0) {
        return Err(invalid(format!("beta must be >= 1, got {beta}")));
    }
    if positions.is_empty() {
        return Err(invalid("at least one particle is required"));
    }
    if positions.iter().any(|x| !x.is_finite()) {
        return Err(invalid("positions must be finite"));
    }
    if !is_chamber(&positions, 0.0) {
        return Err(Error::Collision("initial positions are not strictly increasing".into()));
    }
    Ok(ParticleState { t: 0.0, beta, lambdas: positions })
}

impl ParticleState {
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// `(1/N) Σ λ²`.
    pub fn m2(&self) -> f64 {
        self.lambdas.iter().map(|x| x * x).sum::<f64>() / self.n() as f64
    }

    /// Smallest adjacent gap, `+∞` for a single particle.
    pub fn min_gap(&self) -> f64 {
        self.lambdas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn empirical(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.lambdas.clone()).expect("state is nonempty and finite")
    }
}

/// `φ_R(x) = 1/x` for `|x| ≥ 1/R`, `R²x` otherwise.
pub fn phi(x: f64, r: f64) -> f64 {
    if x.abs() >= 1.0 / r {
        1.0 / x
    } else {
        r * r * x
    }
}

/// `(1/N) Σ_{j≠i} φ_R(λⁱ − λʲ)` for every `i`, and the number of pairs that
/// took the truncated branch.
pub fn interaction(lambdas: &[f64], r: f64) -> (Vec<f64>, u64) {
    let n = lambdas.len();
    let mut s = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let threshold = 1.0 / r;
    let sorted_gap = lambdas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mut truncated = 0u64;
    for i in 0..n.saturating_sub(1) {
        let li = lambdas[i];
        let rest = &lambdas[i + 1..];
        let terms = &mut buf[..rest.len()];
        if sorted_gap >= threshold {
            for (t, lj) in terms.iter_mut().zip(rest) {
                *t = 1.0 / (li - lj);
            }
        } else {
            for (t, lj) in terms.iter_mut().zip(rest) {
                let d = li - lj;
                if d.abs() < threshold {
                    truncated += 1;
                }
                *t = phi(d, r);
            }
        }
        for (sj, t) in s[i + 1..].iter_mut().zip(terms.iter()) {
            *sj -= t;
        }
        s[i] += lane_sum(terms);
    }
    let inv = 1.0 / n as f64;
    s.iter_mut().for_each(|v| *v *= inv);
    (s, truncated)
}

fn lane_sum(x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = x.chunks_exact(8);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Integrator settings shared by all steps of a path.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub potential: Potential,
    pub truncation_radius: f64,
    pub min_gap: f64,
    pub max_halvings: u32,
}

/// Counters accumulated over steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepCounters {
    pub truncations: u64,
    pub halvings: u64,
}

impl Integrator {
    fn drift_terms(&self, state: &ParticleState, counters: &mut StepCounters) -> Vec<f64> {
        let (inter, truncated) = interaction(&state.lambdas, self.truncation_radius);
        counters.truncations += truncated;
        inter
    }

    /// Plain Euler-Maruyama proposal from precomputed interaction terms;
    /// `None` when it leaves the chamber.
    fn propose(&self, state: &ParticleState, inter: &[f64], dt: f64, dw: &[f64]) -> Option<Vec<f64>> {
        let sigma = (2.0 / (state.beta * state.n() as f64)).sqrt();
        let next: Vec<f64> = state
            .lambdas
            .iter()
            .zip(inter)
            .zip(dw)
            .map(|((l, f), w)| l + sigma * w + dt * (f - 0.5 * self.potential.dv(*l)))
            .collect();
        is_chamber(&next, self.min_gap).then_some(next)
    }

    /// One step of length `dt` with Brownian increments `dw ~ N(0, dt)`.
    /// Rejected proposals are retried as two half-steps whose increments
    /// split `dw` along the Brownian bridge, drawing fresh normals from `rng`.
    pub fn step<R: Rng>(
        &self,
        state: &ParticleState,
        dt: f64,
        dw: &[f64],
        rng: &mut R,
        counters: &mut StepCounters,
    ) -> Result<ParticleState> {
        if dw.len() != state.n() {
            return Err(invalid("increment length differs from particle count"));
        }
        if !(dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        let inter = self.drift_terms(state, counters);
        self.step_depth(state, &inter, dt, dw, rng, counters, 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn step_depth<R: Rng>(
        &self,
        state: &ParticleState,
        inter: &[f64],
        dt: f64,
        dw: &[f64],
        rng: &mut R,
        counters: &mut StepCounters,
        depth: u32,
    ) -> Result<ParticleState> {
        if let Some(next) = self.propose(state, inter, dt, dw) {
            return Ok(ParticleState { t: state.t + dt, beta: state.beta, lambdas: next });
        }
        if depth >= self.max_halvings {
            return Err(Error::HalvingsExhausted { halvings: depth, t: state.t });
        }
        counters.halvings += 1;
        let spread = 0.5 * dt.sqrt();
        let (first, second): (Vec<f64>, Vec<f64>) = dw
            .iter()
            .map(|w| {
                let z: f64 = rng.sample(StandardNormal);
                (0.5 * w + spread * z, 0.5 * w - spread * z)
            })
            .unzip();
        let mid = self.step_depth(state, inter, 0.5 * dt, &first, rng, counters, depth + 1)?;
        let mid_inter = self.drift_terms(&mid, counters);
        let mut end = self.step_depth(&mid, &mid_inter, 0.5 * dt, &second, rng, counters, depth + 1)?;
        end.t = state.t + dt;
        Ok(end)
    }
}

/// Initial positions of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SdeInit {
    /// Explicit strictly increasing positions.
    Positions { positions: Vec<f64> },
    /// `λⁱ = Q((i + 1/2)/N)` for the quantile function `Q` of a density.
    Quantiles { density: InitSpec },
}

/// Settings of a particle simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub n_particles: usize,
    pub beta: f64,
    pub potential: PotentialSpec,
    /// `None` selects `1e-3 · min(1, 1/max(K, 1))`.
    pub dt: Option<f64>,
    pub t_end: f64,
    /// `None` selects `1/min_gap`, so that `φ_R = 1/x` on every state the
    /// integrator accepts and the activation counter stays at zero.
    pub truncation_radius: Option<f64>,
    pub min_gap: f64,
    pub max_halvings: u32,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    /// Reference domain `[left, right]`; `None` derives one from the
    /// potential and the initial data.
    pub domain: Option<(f64, f64)>,
    pub init: SdeInit,
}

impl SdeConfig {
    pub fn new(n_particles: usize, beta: f64, potential: PotentialSpec, t_end: f64, init: SdeInit) -> Self {
        SdeConfig {
            n_particles,
            beta,
            potential,
            dt: None,
            t_end,
            truncation_radius: None,
            min_gap: DEFAULT_MIN_GAP,
            max_halvings: DEFAULT_MAX_HALVINGS,
            snapshot_times: vec![0.0, t_end],
            seed: 0,
            domain: None,
            init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("n_particles must be positive"));
        }
        if !(self.beta >= 1.0) {
            return Err(invalid(format!("beta must be >= 1, got {}", self.beta)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end must be positive"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt <= self.t_end) {
                return Err(invalid("dt must lie in (0, t_end]"));
            }
        }
        if let Some(r) = self.truncation_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("truncation radius must be positive"));
            }
        }
        if !(self.min_gap > 0.0) {
            return Err(invalid("min_gap must be positive"));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("snapshot times must be strictly increasing"));
        }
        if self.snapshot_times.iter().any(|&t| t < 0.0 || t > self.t_end + TIME_EPS) {
            return Err(invalid("snapshot times must lie in [0, t_end]"));
        }
        if let Some((l, r)) = self.domain {
            if !(r > l) {
                return Err(invalid("domain needs left < right"));
            }
        }
        Ok(())
    }

    /// Resolves defaults and the initial state.
    pub fn resolve(&self) -> Result<ResolvedSde> {
        self.validate()?;
        let potential = make_potential(&self.potential)?;
        let domain = match (self.domain, &self.init) {
            (Some(d), _) => d,
            (None, SdeInit::Quantiles { density }) => {
                let l = default_half_width(&potential, density)
                    .ok_or_else(|| invalid("cannot derive a domain for this initial density; set one"))?;
                (-l, l)
            }
            (None, SdeInit::Positions { positions }) => {
                let spread = positions.iter().fold(0.0f64, |a, x| a.max(x.abs())) + 2.0;
                let l = potential.closed_form_radius().map_or(spread, |r| spread.max(1.5 * r));
                (-l, l)
            }
        };
        let positions = match &self.init {
            SdeInit::Positions { positions } => positions.clone(),
            SdeInit::Quantiles { density } => {
                let grid = Grid::new(domain.0, domain.1, QUANTILE_INIT_CELLS)?;
                density.density(&grid, &potential)?.quantile_function(self.n_particles)?.values().to_vec()
            }
        };
        if positions.len() != self.n_particles {
            return Err(invalid(format!("{} initial positions for {} particles", positions.len(), self.n_particles)));
        }
        let initial = init_state(positions, self.beta)?;
        let dt = self.dt.unwrap_or_else(|| default_dt(&potential));
        let truncation_radius = self.truncation_radius.unwrap_or(1.0 / self.min_gap);
        let mut snapshot_times = self.snapshot_times.clone();
        if snapshot_times.is_empty() {
            snapshot_times = vec![0.0, self.t_end];
        }
        Ok(ResolvedSde {
            integrator: Integrator { potential, truncation_radius, min_gap: self.min_gap, max_halvings: self.max_halvings },
            initial,
            dt,
            t_end: self.t_end,
            snapshot_times,
            seed: self.seed,
            domain,
        })
    }
}

/// `1e-3 · min(1, 1/max(K, 1))`, with `K = 1` when no convexity bound is known.
pub fn default_dt(potential: &Potential) -> f64 {
    let k = potential.convexity_bound().unwrap_or(1.0).max(1.0);
    1e-3 * (1.0 / k).min(1.0)
}

/// `20 N² / (right − left)`: a truncation radius whose threshold sits an
/// order of magnitude below the typical particle spacing on the domain.
pub fn spacing_truncation_radius(n_particles: usize, domain: (f64, f64)) -> f64 {
    let n = n_particles as f64;
    20.0 * n * n / (domain.1 - domain.0)
}

/// A configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedSde {
    pub integrator: Integrator,
    pub initial: ParticleState,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub domain: (f64, f64),
}

/// Per-step record of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub m2: f64,
    pub min_gap: f64,
    pub truncations: u64,
    pub halvings: u64,
    /// Left-point integral of `1 + (2/β − 1)/N − ⟨L_N, xV′⟩` up to `t`.
    pub m2_drift_integral: f64,
}

/// Output of one path.
#[derive(Debug, Clone)]
pub struct PathOutput {
    pub path_index: u64,
    pub snapshots: Vec<EmpiricalMeasure>,
    pub series: Vec<StepRecord>,
}

/// Stream namespace of particle paths; other simulations use disjoint ones.
pub const PARTICLE_STREAM: u64 = 0;

/// The RNG of path `path_index` in stream namespace `namespace`: a ChaCha8
/// keyed by the master seed with the stream selected by the pair.
pub fn path_rng(seed: u64, namespace: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((namespace << 48) ^ path_index);
    rng
}

fn record(state: &ParticleState, counters: StepCounters, drift_integral: f64) -> StepRecord {
    StepRecord {
        t: state.t,
        m2: state.m2(),
        min_gap: state.min_gap(),
        truncations: counters.truncations,
        halvings: counters.halvings,
        m2_drift_integral: drift_integral,
    }
}

impl ResolvedSde {
    fn m2_drift(&self, state: &ParticleState) -> f64 {
        let n = state.n() as f64;
        let pot = &self.integrator.potential;
        let xdv = state.lambdas.iter().map(|x| x * pot.dv(*x)).sum::<f64>() / n;
        1.0 + (2.0 / state.beta - 1.0) / n - xdv
    }

    /// Runs path `path_index`; a pure function of the seed and the index.
    pub fn run_path(&self, path_index: u64) -> Result<PathOutput> {
        let mut rng = path_rng(self.seed, PARTICLE_STREAM, path_index);
        let n = self.initial.n();
        let mut state = self.initial.clone();
        let mut drift_integral = 0.0;
        let mut series = vec![record(&state, StepCounters::default(), drift_integral)];
        let mut snapshots = Vec::with_capacity(self.snapshot_times.len());
        let mut dw = vec![0.0; n];
        for &target in &self.snapshot_times {
            while target - state.t > TIME_EPS {
                let h = self.dt.min(target - state.t);
                let sd = h.sqrt();
                for w in dw.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = sd * z;
                }
                let mut counters = StepCounters::default();
                drift_integral += h * self.m2_drift(&state);
                let mut next = self.integrator.step(&state, h, &dw, &mut rng, &mut counters)?;
                if target - next.t <= TIME_EPS {
                    next.t = target;
                }
                state = next;
                series.push(record(&state, counters, drift_integral));
            }
            snapshots.push(state.empirical());
        }
        Ok(PathOutput { path_index, snapshots, series })
    }
}

/// Single path of `config`.
pub fn simulate_path(config: &SdeConfig, path_index: u64) -> Result<PathOutput> {
    config.resolve()?.run_path(path_index)
}

/// Cross-path statistics at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub m2_mean: f64,
    pub m2_var: f64,
    pub m2_stderr: f64,
    pub min_gap_min: f64,
    pub truncation_count: u64,
    pub halving_count: u64,
}

/// Output of [`simulate_ensemble`].
#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub n_particles: usize,
    pub beta: f64,
    pub potential: PotentialSpec,
    pub snapshot_times: Vec<f64>,
    /// Pooled atoms of all paths per snapshot: the mean measure `E[L_N(t)]`.
    pub pooled: Vec<EmpiricalMeasure>,
    pub moments: Vec<MomentRow>,
    pub paths: Vec<PathOutput>,
}

impl EnsembleOutput {
    /// `⟨L_N(t_k), f⟩` for every path at snapshot `k`, in path order.
    pub fn linear_statistic(&self, k: usize, f: impl Fn(f64) -> f64 + Copy) -> Vec<f64> {
        self.paths.iter().map(|p| p.snapshots[k].integrate(f)).collect()
    }

    /// Index of the snapshot at time `t`.
    pub fn snapshot_index(&self, t: f64) -> Option<usize> {
        self.snapshot_times.iter().position(|&s| (s - t).abs() <= 1e-9)
    }
}

/// Runs `n_paths` independent paths (in parallel) and reduces them in path
/// order, so the result does not depend on scheduling.
pub fn simulate_ensemble(config: &SdeConfig, n_paths: usize) -> Result<EnsembleOutput> {
    if n_paths == 0 {
        return Err(invalid("n_paths must be positive"));
    }
    let resolved = config.resolve()?;
    let paths: Vec<PathOutput> =
        (0..n_paths as u64).into_par_iter().map(|p| resolved.run_path(p)).collect::<Result<_>>()?;
    let pooled = (0..resolved.snapshot_times.len())
        .map(|k| EmpiricalMeasure::pooled(paths.iter().map(|p| &p.snapshots[k])))
        .collect::<Result<Vec<_>>>()?;
    let steps = paths[0].series.len();
    let np = n_paths as f64;
    let moments = (0..steps)
        .map(|s| {
            let m2: Vec<f64> = paths.iter().map(|p| p.series[s].m2).collect();
            let mean = m2.iter().sum::<f64>() / np;
            let var = if n_paths > 1 { m2.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (np - 1.0) } else { 0.0 };
            MomentRow {
                t: paths[0].series[s].t,
                m2_mean: mean,
                m2_var: var,
                m2_stderr: (var / np).sqrt(),
                min_gap_min: paths.iter().map(|p| p.series[s].min_gap).fold(f64::INFINITY, f64::min),
                truncation_count: paths.iter().map(|p| p.series[s].truncations).sum(),
                halving_count: paths.iter().map(|p| p.series[s].halvings).sum(),
            }
        })
        .collect();
    Ok(EnsembleOutput {
        n_particles: config.n_particles,
        beta: config.beta,
        potential: config.potential.clone(),
        snapshot_times: resolved.snapshot_times.clone(),
        pooled,
        moments,
        paths,
    })
}
