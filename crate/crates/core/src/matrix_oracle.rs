//! Hermitian matrix diffusion `dX = N^{-1/2} dB − ½V′(X) dt`, whose
//! eigenvalues follow the particle system at `β = 2`, and a permutation test
//! comparing the two samplers.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{wasserstein, EmpiricalMeasure};
use crate::pde::TIME_EPS;
use crate::potentials::{make_potential, Family, Potential, PotentialSpec};
use crate::sde::{default_dt, path_rng, EnsembleOutput, SdeConfig, SdeInit};

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 50;
/// Stream namespace of matrix paths, disjoint from the particle paths.
pub const MATRIX_STREAM: u64 = 1;
pub const PERMUTATIONS: usize = 500;
pub const PERMUTATION_SEED: u64 = 0x0dd_5eed;
/// p-values below this reject equality of the two samplers.
pub const ORACLE_ALPHA: f64 = 0.01;

/// A Hermitian matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianState {
    n: usize,
    entries: Vec<Complex64>,
}

impl HermitianState {
    pub fn zeros(n: usize) -> Self {
        HermitianState { n, entries: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut s = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            s.entries[i * d.len() + i] = Complex64::new(x, 0.0);
        }
        s
    }

    /// Builds a state from row-major entries, checking Hermiticity to 1e-12.
    pub fn from_entries(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return Err(invalid(format!("{} entries for a {n}×{n} matrix", entries.len())));
        }
        let s = HermitianState { n, entries };
        if s.hermiticity_defect() > 1e-12 {
            return Err(invalid("matrix is not Hermitian"));
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    /// `tr(X²)/n`, the second moment of the eigenvalue measure.
    pub fn m2(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.n as f64
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |x_ij − conj(x_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Replaces the matrix by `(X + X*)/2`.
    fn hermitize(&mut self) {
        let n = self.n;
        for i in 0..n {
            let d = &mut self.entries[i * n + i];
            *d = Complex64::new(d.re, 0.0);
            for j in i + 1..n {
                let avg = 0.5 * (self.entries[i * n + j] + self.entries[j * n + i].conj());
                self.entries[i * n + j] = avg;
                self.entries[j * n + i] = avg.conj();
            }
        }
    }
}

/// Eigenvalues (ascending) and the unitary of eigenvectors (row-major,
/// eigenvectors in columns).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Complex64>,
}

fn off_diagonal_norm(a: &[Complex64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic complex Jacobi: each rotation first removes the phase of `a_pq`
/// then zeroes it with a real rotation.
pub fn hermitian_eigen(state: &HermitianState) -> Result<Eigen> {
    let n = state.n;
    let mut a = state.entries.clone();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut q = vec![zero; n * n];
    for i in 0..n {
        q[i * n + i] = one;
    }
    let target = JACOBI_TOL * state.frobenius().max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    while off_diagonal_norm(&a, n) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for r in p + 1..n {
                let apq = a[p * n + r];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[p * n + p].re;
                let aqq = a[r * n + r].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 { 1.0 / (tau + (1.0 + tau * tau).sqrt()) } else { -1.0 / (-tau + (1.0 + tau * tau).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = [[c, s], [−s·e^{−iφ}, c·e^{−iφ}]] on rows/columns (p, r)
                let gqp = -s * phase.conj();
                let gqq = c * phase.conj();
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + r];
                    a[k * n + p] = akp * c + akq * gqp;
                    a[k * n + r] = akp * s + akq * gqq;
                    let qkp = q[k * n + p];
                    let qkq = q[k * n + r];
                    q[k * n + p] = qkp * c + qkq * gqp;
                    q[k * n + r] = qkp * s + qkq * gqq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[r * n + k];
                    a[p * n + k] = apk * c + aqk * gqp.conj();
                    a[r * n + k] = apk * s + aqk * gqq.conj();
                }
                a[p * n + r] = zero;
                a[r * n + p] = zero;
                a[p * n + p] = Complex64::new(a[p * n + p].re, 0.0);
                a[r * n + r] = Complex64::new(a[r * n + r].re, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let mut vectors = vec![zero; n * n];
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + col] = q[k * n + i];
        }
    }
    Ok(Eigen { values, vectors })
}

pub fn hermitian_eigenvalues(state: &HermitianState) -> Result<Vec<f64>> {
    Ok(hermitian_eigen(state)?.values)
}

/// `Q·diag(f(λ))·Q*`.
fn spectral_apply(eigen: &Eigen, n: usize, f: impl Fn(f64) -> f64) -> Vec<Complex64> {
    let fl: Vec<f64> = eigen.values.iter().map(|&l| f(l)).collect();
    let q = &eigen.vectors;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += q[i * n + k] * fl[k] * q[j * n + k].conj();
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc.conj();
        }
    }
    out
}

/// `‖X − QΛQ*‖_F / ‖X‖_F`.
pub fn reconstruction_error(state: &HermitianState, eigen: &Eigen) -> f64 {
    let back = spectral_apply(eigen, state.n, |l| l);
    let diff: f64 = back.iter().zip(&state.entries).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    diff / state.frobenius().max(f64::MIN_POSITIVE)
}

/// `V′(X)`: linear for quadratic potentials, spectral otherwise.
fn drift(state: &HermitianState, potential: &Potential) -> Result<Vec<Complex64>> {
    match potential.family() {
        Family::Zero => Ok(vec![Complex64::new(0.0, 0.0); state.n * state.n]),
        Family::Quadratic { theta } => Ok(state.entries.iter().map(|z| z * (2.0 * theta)).collect()),
        Family::Quartic { .. } | Family::Polynomial { .. } => {
            let eigen = hermitian_eigen(state)?;
            Ok(spectral_apply(&eigen, state.n, |l| potential.dv(l)))
        }
        Family::KontsevichPenner { .. } => {
            Err(Error::UnsupportedPotential("matrix diffusion needs a polynomial potential".into()))
        }
    }
}

/// Draws a Hermitian Brownian increment over `dt`: `N(0, dt)` on the
/// diagonal and `N(0, dt/2)` real and imaginary parts above it, in row-major
/// order.
pub fn brownian_increment<R: Rng>(n: usize, dt: f64, rng: &mut R) -> HermitianState {
    let mut inc = HermitianState::zeros(n);
    let sd = dt.sqrt();
    let sd_half = (0.5 * dt).sqrt();
    for i in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        inc.entries[i * n + i] = Complex64::new(sd * z, 0.0);
    }
    for i in 0..n {
        for j in i + 1..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(sd_half * re, sd_half * im);
            inc.entries[i * n + j] = z;
            inc.entries[j * n + i] = z.conj();
        }
    }
    inc
}

/// `X + N^{-1/2}·ΔB − (dt/2)·V′(X)`, re-hermitized.
pub fn apply_step(state: &HermitianState, potential: &Potential, dt: f64, increment: &HermitianState) -> Result<HermitianState> {
    if increment.n != state.n {
        return Err(invalid("increment has the wrong dimension"));
    }
    let d = drift(state, potential)?;
    let scale = 1.0 / (state.n as f64).sqrt();
    let mut next = state.clone();
    for ((x, b), v) in next.entries.iter_mut().zip(&increment.entries).zip(&d) {
        *x += b * scale - v * (0.5 * dt);
    }
    next.hermitize();
    Ok(next)
}

pub fn step_matrix<R: Rng>(state: &HermitianState, potential: &Potential, dt: f64, rng: &mut R) -> Result<HermitianState> {
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let inc = brownian_increment(state.n, dt, rng);
    apply_step(state, potential, dt, &inc)
}

/// Settings of a matrix run; `X₀ = diag(λ₀)` with `λ₀` resolved exactly as
/// for a particle run with the same `init`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub n: usize,
    pub potential: PotentialSpec,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub init: SdeInit,
}

impl MatrixConfig {
    pub fn new(n: usize, potential: PotentialSpec, t_end: f64, init: SdeInit) -> Self {
        MatrixConfig { n, potential, dt: None, t_end, snapshot_times: vec![0.0, t_end], seed: 0, init }
    }

    /// The particle configuration at `β = 2` with the same potential,
    /// initial data, step, times and seed.
    pub fn particle_config(&self) -> SdeConfig {
        let mut c = SdeConfig::new(self.n, 2.0, self.potential.clone(), self.t_end, self.init.clone());
        c.dt = self.dt;
        c.snapshot_times = self.snapshot_times.clone();
        c.seed = self.seed;
        c
    }
}

/// Eigenvalue snapshots of every matrix path.
#[derive(Debug, Clone)]
pub struct MatrixEnsemble {
    pub n: usize,
    pub potential: PotentialSpec,
    pub snapshot_times: Vec<f64>,
    /// `paths[p][k]`: eigenvalues of path `p` at snapshot `k`.
    pub paths: Vec<Vec<EmpiricalMeasure>>,
    pub pooled: Vec<EmpiricalMeasure>,
}

impl MatrixEnsemble {
    /// Mean of `tr(X²)/N` at snapshot `k` with its standard error.
    pub fn m2(&self, k: usize) -> (f64, f64) {
        let v: Vec<f64> = self.paths.iter().map(|p| p[k].integrate(|x| x * x)).collect();
        mean_stderr(&v)
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_matrix_path(
    initial: &HermitianState,
    potential: &Potential,
    dt: f64,
    times: &[f64],
    seed: u64,
    path_index: u64,
) -> Result<Vec<EmpiricalMeasure>> {
    let mut rng = path_rng(seed, MATRIX_STREAM, path_index);
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while target - t > TIME_EPS {
            let h = dt.min(target - t);
            state = step_matrix(&state, potential, h, &mut rng)?;
            t = if target - (t + h) <= TIME_EPS { target } else { t + h };
        }
        out.push(EmpiricalMeasure::new(hermitian_eigenvalues(&state)?)?);
    }
    Ok(out)
}

/// Runs `n_paths` matrix paths in parallel, reduced in path order.
pub fn simulate_matrix_ensemble(config: &MatrixConfig, n_paths: usize) -> Result<MatrixEnsemble> {
    if n_paths == 0 {
        return Err(invalid("n_paths must be positive"));
    }
    let resolved = config.particle_config().resolve()?;
    let potential = make_potential(&config.potential)?;
    let dt = config.dt.unwrap_or_else(|| default_dt(&potential));
    let initial = HermitianState::from_diagonal(resolved.initial.lambdas());
    let times = resolved.snapshot_times.clone();
    let paths: Vec<Vec<EmpiricalMeasure>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| run_matrix_path(&initial, &potential, dt, &times, config.seed, p))
        .collect::<Result<_>>()?;
    let pooled = (0..times.len())
        .map(|k| EmpiricalMeasure::pooled(paths.iter().map(|p| &p[k])))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixEnsemble { n: config.n, potential: config.potential.clone(), snapshot_times: times, paths, pooled })
}

/// Per-path snapshots of either sampler, in the form the comparison needs.
#[derive(Debug, Clone)]
pub struct SnapshotSample {
    pub n: usize,
    pub beta: f64,
    pub potential: PotentialSpec,
    pub snapshot_times: Vec<f64>,
    pub paths: Vec<Vec<EmpiricalMeasure>>,
}

impl From<&EnsembleOutput> for SnapshotSample {
    fn from(e: &EnsembleOutput) -> Self {
        SnapshotSample {
            n: e.n_particles,
            beta: e.beta,
            potential: e.potential.clone(),
            snapshot_times: e.snapshot_times.clone(),
            paths: e.paths.iter().map(|p| p.snapshots.clone()).collect(),
        }
    }
}

impl From<&MatrixEnsemble> for SnapshotSample {
    fn from(e: &MatrixEnsemble) -> Self {
        SnapshotSample {
            n: e.n,
            beta: 2.0,
            potential: e.potential.clone(),
            snapshot_times: e.snapshot_times.clone(),
            paths: e.paths.clone(),
        }
    }
}

impl SnapshotSample {
    /// First and second half of the paths.
    pub fn split_halves(&self) -> (SnapshotSample, SnapshotSample) {
        let mid = self.paths.len() / 2;
        let mut a = self.clone();
        let mut b = self.clone();
        a.paths.truncate(mid);
        b.paths.drain(..mid);
        (a, b)
    }

    pub fn snapshot_index(&self, t: f64) -> Option<usize> {
        self.snapshot_times.iter().position(|&s| (s - t).abs() <= 1e-9)
    }
}

fn pooled_w1(parts: &[&EmpiricalMeasure], split: usize) -> Result<f64> {
    let a = EmpiricalMeasure::pooled(parts[..split].iter().copied())?;
    let b = EmpiricalMeasure::pooled(parts[split..].iter().copied())?;
    wasserstein(1.0, &a, &b, a.len().max(b.len()))
}

/// W1 between the pooled measures of `a` and `b` and the fraction of
/// path-level relabellings whose W1 is at least as large.
pub fn permutation_test(a: &[&EmpiricalMeasure], b: &[&EmpiricalMeasure], permutations: usize, seed: u64) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() || permutations == 0 {
        return Err(invalid("permutation test needs paths on both sides and at least one permutation"));
    }
    let mut all: Vec<&EmpiricalMeasure> = a.iter().chain(b).copied().collect();
    let observed = pooled_w1(&all, a.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        all.shuffle(&mut rng);
        if pooled_w1(&all, a.len())? >= observed {
            hits += 1;
        }
    }
    Ok((observed, hits as f64 / permutations as f64))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleRow {
    pub t: f64,
    pub w1: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub paths_a: usize,
    pub paths_b: usize,
    pub permutations: usize,
    pub rows: Vec<OracleRow>,
    /// No snapshot rejects equality at level [`ORACLE_ALPHA`].
    pub verdict: bool,
}

/// Permutation test at every snapshot of two samples, without checking that
/// they target the same law.
pub fn compare_samples(a: &SnapshotSample, b: &SnapshotSample) -> Result<OracleReport> {
    if a.n != b.n {
        return Err(invalid(format!("dimension mismatch: {} vs {}", a.n, b.n)));
    }
    if a.snapshot_times.len() != b.snapshot_times.len()
        || a.snapshot_times.iter().zip(&b.snapshot_times).any(|(x, y)| (x - y).abs() > 1e-9)
    {
        return Err(invalid("snapshot times differ"));
    }
    let rows = a
        .snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let pa: Vec<&EmpiricalMeasure> = a.paths.iter().map(|p| &p[k]).collect();
            let pb: Vec<&EmpiricalMeasure> = b.paths.iter().map(|p| &p[k]).collect();
            let (w1, p_value) = permutation_test(&pa, &pb, PERMUTATIONS, PERMUTATION_SEED ^ k as u64)?;
            Ok(OracleRow { t, w1, p_value })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = rows.iter().all(|r| r.p_value >= ORACLE_ALPHA);
    Ok(OracleReport { n: a.n, paths_a: a.paths.len(), paths_b: b.paths.len(), permutations: PERMUTATIONS, rows, verdict })
}

/// Compares eigenvalue snapshots with a `β = 2` particle ensemble of the
/// same dimension, potential and snapshot times.
pub fn oracle_compare(matrix: &SnapshotSample, gdbm: &SnapshotSample) -> Result<OracleReport> {
    if matrix.beta != 2.0 || gdbm.beta != 2.0 {
        return Err(invalid("the matrix realization holds at beta = 2 only"));
    }
    if matrix.potential != gdbm.potential {
        return Err(invalid("the two runs use different potentials"));
    }
    compare_samples(matrix, gdbm)
}
