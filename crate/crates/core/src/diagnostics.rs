//! Checks of the gradient-flow structure on computed trajectories and
//! Monte Carlo statistics of particle ensembles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::freecalc::{grad_norm_sq, relative_free_entropy};
use crate::measures::{w2, wasserstein, EmpiricalMeasure, GridDensity, DEFAULT_QUANTILE_NODES};
use crate::pde::Trajectory;
use crate::potentials::{euler_lagrange_residual, Potential};
use crate::sde::EnsembleOutput;

/// Relative slack of the contraction bound.
pub const CONTRACTION_TOL: f64 = 0.05;
/// Tolerance on monotonicity of entropy and distance series.
pub const MONOTONE_TOL: f64 = 1e-6;
/// Snapshots with `grad_sq` at or below this are left out of relative errors.
pub const GRAD_FLOOR: f64 = 1e-6;
/// Largest snapshot spacing accepted by [`dissipation_check`].
pub const MAX_DISSIPATION_SPACING: f64 = 0.05;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;
/// Largest Euler-Lagrange residual of an equilibrium accepted by the checks.
pub const EQUILIBRIUM_RESIDUAL_MAX: f64 = 1e-2;

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Exponential decay rate fitted to the positive values of `v` above `floor`.
fn fitted_decay_rate(t: &[f64], v: &[f64], floor: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = t.iter().zip(v).filter(|(_, &b)| b > floor).map(|(a, b)| (*a, b.ln())).unzip();
    slope(&x, &y).map(|s| -s)
}

fn nonincreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Entropy dissipation along a trajectory: `dΣ_V/dt` against `−c*·grad_sq`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissipationReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub grad_sq: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `None` when the trajectory is stationary (every `grad_sq ≤ 1e-6`).
    pub fitted_constant: Option<f64>,
    pub max_rel_err: Option<f64>,
    /// Alternative constants quoted for this identity, reported unchecked.
    pub nominal_constants: [f64; 2],
    pub monotone: bool,
    pub verdict: bool,
}

/// Centred differences of `Σ_V` at interior snapshots, with `c*` fitted by
/// least squares through the origin.
pub fn dissipation_check(traj: &Trajectory) -> Result<DissipationReport> {
    let t = &traj.times;
    if t.len() < 5 {
        return Err(invalid("dissipation_check needs at least 5 snapshots"));
    }
    let dt = t[1] - t[0];
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9) {
        return Err(invalid("dissipation_check needs uniform snapshot spacing"));
    }
    if dt > MAX_DISSIPATION_SPACING + 1e-12 {
        return Err(invalid(format!("snapshot spacing {dt} exceeds {MAX_DISSIPATION_SPACING}")));
    }
    let rows = &traj.diagnostics;
    let k = 1..t.len() - 1;
    let times: Vec<f64> = k.clone().map(|i| t[i]).collect();
    let lhs: Vec<f64> = k.clone().map(|i| (rows[i + 1].sigma_v - rows[i - 1].sigma_v) / (2.0 * dt)).collect();
    let grad_sq: Vec<f64> = k.map(|i| rows[i].grad_sq).collect();
    let active = grad_sq.iter().any(|&g| g > GRAD_FLOOR);
    let fitted_constant = active.then(|| {
        let num: f64 = lhs.iter().zip(&grad_sq).map(|(l, g)| -l * g).sum();
        let den: f64 = grad_sq.iter().map(|g| g * g).sum();
        num / den
    });
    let c = fitted_constant.unwrap_or(0.0);
    let rhs: Vec<f64> = grad_sq.iter().map(|g| -c * g).collect();
    let max_rel_err = active.then(|| {
        lhs.iter()
            .zip(&rhs)
            .zip(&grad_sq)
            .filter(|(_, &g)| g > GRAD_FLOOR)
            .map(|((l, r), _)| ((l - r) / r).abs())
            .fold(0.0, f64::max)
    });
    let monotone = lhs.iter().all(|&l| l <= MONOTONE_TOL);
    Ok(DissipationReport {
        times,
        lhs,
        grad_sq,
        rhs,
        fitted_constant,
        max_rel_err,
        nominal_constants: [2.0, 0.5],
        monotone,
        verdict: monotone,
    })
}

/// `W2` between two trajectories against the contraction bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub w2: Vec<f64>,
    pub fitted_rate: Option<f64>,
    /// `K/2`, the rate of the exact translate solution of this flow.
    pub bound_rate: f64,
    /// `K`, the stronger nominal rate, reported unchecked.
    pub nominal_rate: f64,
    pub verdict: bool,
}

pub fn contraction_check(a: &Trajectory, b: &Trajectory, k: f64) -> Result<ContractionReport> {
    a.grid().ensure_matches(b.grid())?;
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12) {
        return Err(invalid("trajectories have different snapshot times"));
    }
    let w: Vec<f64> = a.densities.iter().zip(&b.densities).map(|(x, y)| w2(x, y)).collect::<Result<_>>()?;
    let bound_rate = 0.5 * k;
    let w0 = w[0];
    let verdict = a
        .times
        .iter()
        .zip(&w)
        .all(|(t, d)| *d <= w0 * (-bound_rate * t).exp() * (1.0 + CONTRACTION_TOL));
    Ok(ContractionReport {
        fitted_rate: fitted_decay_rate(&a.times, &w, 0.0),
        times: a.times.clone(),
        w2: w,
        bound_rate,
        nominal_rate: k,
        verdict,
    })
}

fn ensure_equilibrium(equilibrium: &GridDensity, potential: &Potential) -> Result<()> {
    let r = euler_lagrange_residual(equilibrium, potential)?;
    if r > EQUILIBRIUM_RESIDUAL_MAX {
        return Err(invalid(format!("equilibrium has Euler-Lagrange residual {r} > {EQUILIBRIUM_RESIDUAL_MAX}")));
    }
    Ok(())
}

/// `W2(μ, μ_V)·√grad_sq(μ) − (K/2)·W2² − Σ_V(μ|μ_V)`; nonnegative when the
/// HWI inequality holds.
pub fn hwi_check(density: &GridDensity, potential: &Potential, equilibrium: &GridDensity, k: f64) -> Result<f64> {
    density.grid().ensure_matches(equilibrium.grid())?;
    ensure_equilibrium(equilibrium, potential)?;
    let w = w2(density, equilibrium)?;
    let g = grad_norm_sq(density, potential);
    let rel = relative_free_entropy(density, potential, equilibrium)?;
    Ok(w * g.sqrt() - 0.5 * k * w * w - rel)
}

/// Distance and relative entropy to the equilibrium along a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub w2: Vec<f64>,
    pub rel_sigma: Vec<f64>,
    pub w2_monotone: bool,
    pub sigma_monotone: bool,
    pub fitted_w2_rate: Option<f64>,
    pub fitted_sigma_rate: Option<f64>,
    /// `K/2` and `K`: the rates expected under this flow's time scale.
    pub expected_w2_rate: Option<f64>,
    pub expected_sigma_rate: Option<f64>,
    /// `K` and `2K`: the stronger nominal rates, reported unchecked.
    pub nominal_w2_rate: Option<f64>,
    pub nominal_sigma_rate: Option<f64>,
    pub verdict: bool,
}

/// Fits use values above these floors, where discretization noise does not
/// dominate.
const W2_FIT_FLOOR: f64 = 1e-4;
const SIGMA_FIT_FLOOR: f64 = 1e-7;

pub fn convergence_report(
    traj: &Trajectory,
    potential: &Potential,
    equilibrium: &GridDensity,
    k: Option<f64>,
) -> Result<ConvergenceReport> {
    traj.grid().ensure_matches(equilibrium.grid())?;
    ensure_equilibrium(equilibrium, potential)?;
    let w: Vec<f64> = traj.densities.iter().map(|d| w2(d, equilibrium)).collect::<Result<_>>()?;
    let rel: Vec<f64> = traj
        .densities
        .iter()
        .map(|d| relative_free_entropy(d, potential, equilibrium))
        .collect::<Result<_>>()?;
    let w2_monotone = nonincreasing(&w, MONOTONE_TOL);
    let sigma_monotone = nonincreasing(&rel, MONOTONE_TOL);
    let k = k.filter(|k| *k > 0.0);
    Ok(ConvergenceReport {
        fitted_w2_rate: k.and(fitted_decay_rate(&traj.times, &w, W2_FIT_FLOOR)),
        fitted_sigma_rate: k.and(fitted_decay_rate(&traj.times, &rel, SIGMA_FIT_FLOOR)),
        expected_w2_rate: k.map(|k| 0.5 * k),
        expected_sigma_rate: k,
        nominal_w2_rate: k,
        nominal_sigma_rate: k.map(|k| 2.0 * k),
        times: traj.times.clone(),
        w2: w,
        rel_sigma: rel,
        w2_monotone,
        sigma_monotone,
        verdict: w2_monotone && sigma_monotone,
    })
}

/// Largest constants for which `Σ ≤ (2/c)·I` and `C·W2² ≤ Σ` hold on the
/// given snapshots (relative quantities); reported, never asserted.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InequalityConstants {
    pub log_sobolev_c: Option<f64>,
    pub talagrand_c: Option<f64>,
}

pub fn fitted_inequality_constants(traj: &Trajectory, potential: &Potential, equilibrium: &GridDensity) -> Result<InequalityConstants> {
    let mut lsi: Option<f64> = None;
    let mut tal: Option<f64> = None;
    for (d, row) in traj.densities.iter().zip(&traj.diagnostics) {
        let rel = relative_free_entropy(d, potential, equilibrium)?;
        if rel <= SIGMA_FIT_FLOOR {
            continue;
        }
        let c = 2.0 * row.fisher / rel;
        lsi = Some(lsi.map_or(c, |v| v.min(c)));
        let w = w2(d, equilibrium)?;
        if w > 0.0 {
            let cc = rel / (w * w);
            tal = Some(tal.map_or(cc, |v| v.min(cc)));
        }
    }
    Ok(InequalityConstants { log_sobolev_c: lsi, talagrand_c: tal })
}

/// Bootstrap resamples (indices with replacement) from a fixed seed.
fn bootstrap_indices(n: usize, resamples: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..resamples).map(|_| (0..n).map(|_| rng.random_range(0..n)).collect()).collect()
}

/// Bootstrap replicates of `stat` over resamples of `values`.
pub fn bootstrap<T>(values: &[T], stat: impl Fn(&[&T]) -> f64) -> Vec<f64> {
    bootstrap_indices(values.len(), BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED)
        .iter()
        .map(|idx| {
            let sample: Vec<&T> = idx.iter().map(|&i| &values[i]).collect();
            stat(&sample)
        })
        .collect()
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean of `values` with its bootstrap standard error.
pub fn bootstrap_mean(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let reps = bootstrap(values, |s| s.iter().copied().sum::<f64>() / s.len() as f64);
    (mean, sample_sd(&reps))
}

/// Sample variance with a 95% percentile bootstrap interval.
pub fn bootstrap_variance(values: &[f64]) -> (f64, f64, f64) {
    let var = |s: &[&f64]| {
        let n = s.len() as f64;
        let m = s.iter().copied().sum::<f64>() / n;
        s.iter().map(|v| (*v - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let refs: Vec<&f64> = values.iter().collect();
    let mut reps = bootstrap(values, var);
    reps.sort_by(f64::total_cmp);
    (var(&refs), percentile(&reps, 0.025), percentile(&reps, 0.975))
}

/// One row of the law-of-large-numbers table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LlnRow {
    pub n: usize,
    pub t: f64,
    pub distance: f64,
    /// Bootstrap standard error over paths.
    pub mc_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlnReport {
    pub p: f64,
    pub rows: Vec<LlnRow>,
    /// Distances strictly decreasing in `N` at every time.
    pub verdict: bool,
}

/// `W_p(pooled E[L_N(t)], μ_t)` for every ensemble and every `t`.
pub fn lln_report(ensembles: &[EnsembleOutput], pde: &Trajectory, p: f64, times: &[f64]) -> Result<LlnReport> {
    if !(1.0..2.0).contains(&p) {
        return Err(invalid("p must lie in [1, 2)"));
    }
    let mut rows = Vec::new();
    for e in ensembles {
        for &t in times {
            let k = e.snapshot_index(t).ok_or_else(|| invalid(format!("ensemble N={} has no snapshot at t={t}", e.n_particles)))?;
            let mu = pde.at(t).ok_or_else(|| invalid(format!("PDE trajectory has no snapshot at t={t}")))?;
            let distance = wasserstein(p, &e.pooled[k], mu, DEFAULT_QUANTILE_NODES)?;
            let snaps: Vec<&EmpiricalMeasure> = e.paths.iter().map(|path| &path.snapshots[k]).collect();
            let reps = bootstrap(&snaps, |s| {
                let pooled = EmpiricalMeasure::pooled(s.iter().map(|m| **m)).expect("nonempty");
                wasserstein(p, &pooled, mu, DEFAULT_QUANTILE_NODES).expect("valid measures")
            });
            rows.push(LlnRow { n: e.n_particles, t, distance, mc_error: sample_sd(&reps) });
        }
    }
    rows.sort_by(|a, b| a.n.cmp(&b.n).then(a.t.total_cmp(&b.t)));
    let verdict = times.iter().all(|&t| {
        let col: Vec<f64> = rows.iter().filter(|r| r.t == t).map(|r| r.distance).collect();
        col.windows(2).all(|w| w[1] < w[0])
    });
    Ok(LlnReport { p, rows, verdict })
}

/// Test functions for linear statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    X2,
    X4,
    /// `exp(−1/(1 − x²))` on `|x| < 1`.
    Bump,
}

impl TestFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFunction::X2 => x * x,
            TestFunction::X4 => x.powi(4),
            TestFunction::Bump => {
                if x.abs() < 1.0 {
                    (-1.0 / (1.0 - x * x)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x2" => Ok(TestFunction::X2),
            "x4" => Ok(TestFunction::X4),
            "bump" => Ok(TestFunction::Bump),
            _ => Err(invalid(format!("unknown test function {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChaosRow {
    pub n: usize,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaosReport {
    pub f: TestFunction,
    pub t: f64,
    pub rows: Vec<ChaosRow>,
    /// Each variance lies below the previous one with disjoint intervals.
    pub verdict: bool,
}

pub const CHAOS_MIN_PATHS: usize = 100;

/// `Var⟨L_N(t), f⟩` over paths for every ensemble, sorted by `N`.
pub fn chaos_statistics(ensembles: &[EnsembleOutput], f: TestFunction, t: f64) -> Result<ChaosReport> {
    let mut rows = Vec::new();
    for e in ensembles {
        if e.paths.len() < CHAOS_MIN_PATHS {
            return Err(invalid(format!("chaos statistics need at least {CHAOS_MIN_PATHS} paths, got {}", e.paths.len())));
        }
        let k = e.snapshot_index(t).ok_or_else(|| invalid(format!("no snapshot at t={t}")))?;
        let stats = e.linear_statistic(k, |x| f.eval(x));
        let (variance, ci_low, ci_high) = bootstrap_variance(&stats);
        rows.push(ChaosRow { n: e.n_particles, variance, ci_low, ci_high });
    }
    rows.sort_by_key(|r| r.n);
    let verdict = rows.windows(2).all(|w| w[1].variance < w[0].variance && w[1].ci_high < w[0].ci_low);
    Ok(ChaosReport { f, t, rows, verdict })
}

/// `E m2(t)` for `V = θx²` from the moment ODE
/// `dm2/dt = 1 + (2/β − 1)/N − 2θ m2`.
pub fn quadratic_moment_ode(theta: f64, beta: f64, n: usize, m2_0: f64, t: f64) -> f64 {
    let plateau = (1.0 + (2.0 / beta - 1.0) / n as f64) / (2.0 * theta);
    plateau + (m2_0 - plateau) * (-2.0 * theta * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Grid;
    use crate::pde::{evolve, evolve_from, InitSpec, PdeConfig};
    use crate::potentials::equilibrium_closed_form;
    use crate::potentials::PotentialSpec;
    use crate::sde::{simulate_ensemble, SdeConfig, SdeInit};

    fn half() -> Potential {
        Potential::quadratic(0.5).unwrap()
    }

    fn translate(d: &GridDensity, a: f64) -> GridDensity {
        // cell shift by an integer number of cells
        let k = (a / d.h()).round() as isize;
        let n = d.values().len() as isize;
        let values = (0..n)
            .map(|i| {
                let j = i - k;
                if (0..n).contains(&j) {
                    d.values()[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        GridDensity::from_cell_values(*d.grid(), values).unwrap()
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        assert!((slope(&x, &y).unwrap() + 0.5).abs() < 1e-15);
        let v: Vec<f64> = x.iter().map(|t: &f64| 3.0 * (-0.7 * t).exp()).collect();
        assert!((fitted_decay_rate(&x, &v, 0.0).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn stationary_dissipation_is_undefined() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 1024).unwrap();
        let config = PdeConfig::new(grid, 0.2, PdeConfig::uniform_snapshots(0.2, 0.05), InitSpec::Equilibrium);
        let traj = evolve(&config, &pot, None).unwrap();
        let r = dissipation_check(&traj).unwrap();
        assert!(r.fitted_constant.is_none());
        assert!(r.lhs.iter().all(|l| l.abs() < 1e-4));
        assert!(r.rhs.iter().all(|l| l.abs() < 1e-4));
    }

    #[test]
    fn dissipation_rejects_coarse_or_short_runs() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 128).unwrap();
        let config = PdeConfig::new(grid, 0.4, PdeConfig::uniform_snapshots(0.4, 0.1), InitSpec::Equilibrium);
        assert!(dissipation_check(&evolve(&config, &pot, None).unwrap()).is_err());
        let config = PdeConfig::new(grid, 0.1, PdeConfig::uniform_snapshots(0.1, 0.05), InitSpec::Equilibrium);
        assert!(dissipation_check(&evolve(&config, &pot, None).unwrap()).is_err());
    }

    #[test]
    fn zero_potential_dissipates_strictly() {
        let pot = Potential::zero();
        let grid = Grid::symmetric(4.5, 256).unwrap();
        let init = InitSpec::Semicircle { radius: 2.0, center: 0.0 };
        let traj = evolve(&PdeConfig::new(grid, 0.3, PdeConfig::uniform_snapshots(0.3, 0.05), init), &pot, None).unwrap();
        let r = dissipation_check(&traj).unwrap();
        assert!(r.lhs.iter().all(|&l| l < 0.0));
        assert!((r.fitted_constant.unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn identical_trajectories_do_not_separate() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 128).unwrap();
        let init = InitSpec::Gaussian { mean: 0.0, std: 0.5 };
        let traj = evolve(&PdeConfig::new(grid, 0.5, vec![0.0, 0.25, 0.5], init), &pot, None).unwrap();
        let r = contraction_check(&traj, &traj, 1.0).unwrap();
        assert!(r.w2.iter().all(|&w| w == 0.0));
        assert!(r.verdict);
        assert_eq!(r.bound_rate, 0.5);
    }

    #[test]
    fn contraction_needs_aligned_trajectories() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 128).unwrap();
        let init = InitSpec::Gaussian { mean: 0.0, std: 0.5 };
        let a = evolve(&PdeConfig::new(grid, 0.5, vec![0.0, 0.5], init.clone()), &pot, None).unwrap();
        let b = evolve(&PdeConfig::new(grid, 0.5, vec![0.0, 0.25], init), &pot, None).unwrap();
        assert!(contraction_check(&a, &b, 1.0).is_err());
    }

    #[test]
    fn translate_contracts_at_half_rate() {
        let pot = half();
        let grid = Grid::symmetric(4.0, 256).unwrap();
        let a = InitSpec::Gaussian { mean: 0.0, std: 0.5 }.density(&grid, &pot).unwrap();
        let b = translate(&a, 0.5);
        let config = PdeConfig::new(grid, 1.0, vec![0.0, 0.5, 1.0], InitSpec::Equilibrium);
        let ta = evolve_from(&config, &pot, a, None).unwrap();
        let tb = evolve_from(&config, &pot, b, None).unwrap();
        let r = contraction_check(&ta, &tb, 1.0).unwrap();
        for (t, w) in r.times.iter().zip(&r.w2) {
            let exact = 0.5 * (-t / 2.0f64).exp();
            assert!((w / exact - 1.0).abs() < 0.02, "t {t}: {w} vs {exact}");
        }
        assert!((r.fitted_rate.unwrap() - 0.5).abs() < 0.02);
        assert!(r.verdict);
    }

    #[test]
    fn hwi_equality_for_translates() {
        let pot = half();
        let grid = Grid::symmetric(4.0, 1024).unwrap();
        let eq = equilibrium_closed_form(&pot, &grid).unwrap();
        let mu = translate(&eq, 0.5);
        let slack = hwi_check(&mu, &pot, &eq, 1.0).unwrap();
        assert!(slack.abs() < 5e-3, "slack {slack}");
        let at_eq = hwi_check(&eq, &pot, &eq, 1.0).unwrap();
        assert!(at_eq.abs() < 1e-3, "{at_eq}");
    }

    #[test]
    fn hwi_holds_for_a_gaussian() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 512).unwrap();
        let eq = equilibrium_closed_form(&pot, &grid).unwrap();
        let mu = InitSpec::Gaussian { mean: 0.0, std: 0.3 }.density(&grid, &pot).unwrap();
        assert!(hwi_check(&mu, &pot, &eq, 1.0).unwrap() >= -1e-3);
    }

    #[test]
    fn hwi_rejects_bad_equilibrium() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 256).unwrap();
        let not_eq = InitSpec::Uniform { a: -2.0, b: 2.0 }.density(&grid, &pot).unwrap();
        assert!(hwi_check(&not_eq, &pot, &not_eq, 1.0).is_err());
    }

    #[test]
    fn convergence_from_equilibrium_stays_put() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 1024).unwrap();
        let eq = equilibrium_closed_form(&pot, &grid).unwrap();
        let traj = evolve(&PdeConfig::new(grid, 1.0, vec![0.0, 0.5, 1.0], InitSpec::Equilibrium), &pot, None).unwrap();
        let r = convergence_report(&traj, &pot, &eq, Some(1.0)).unwrap();
        assert!(r.w2.iter().all(|w| *w <= 1e-4), "{:?}", r.w2);
        assert!(r.rel_sigma.iter().all(|s| s.abs() <= 1e-4));
    }

    #[test]
    fn moment_ode_limits() {
        assert_eq!(quadratic_moment_ode(0.5, 2.0, 64, 0.25, 0.0), 0.25);
        assert!((quadratic_moment_ode(0.5, 1.0, 16, 0.25, 200.0) - 17.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_of_mean_matches_standard_error() {
        let x: Vec<f64> = (0..400).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let (m, se) = bootstrap_mean(&x);
        let analytic = sample_sd(&x) / (x.len() as f64).sqrt();
        assert!((m - x.iter().sum::<f64>() / 400.0).abs() < 1e-15);
        assert!((se / analytic - 1.0).abs() < 0.2, "{se} vs {analytic}");
        assert_eq!(bootstrap_mean(&x), bootstrap_mean(&x));
    }

    #[test]
    fn deterministic_start_has_zero_variance() {
        let mut c = SdeConfig::new(
            8,
            2.0,
            PotentialSpec::quadratic(0.5),
            0.05,
            SdeInit::Quantiles { density: InitSpec::Semicircle { radius: 2.0, center: 0.0 } },
        );
        c.seed = 3;
        let e = simulate_ensemble(&c, 100).unwrap();
        let r = chaos_statistics(&[e], TestFunction::X2, 0.0).unwrap();
        assert!(r.rows[0].variance < 1e-25);
    }

    #[test]
    fn chaos_needs_enough_paths() {
        let c = SdeConfig::new(4, 2.0, PotentialSpec::quadratic(0.5), 0.05, SdeInit::Positions { positions: vec![-1.0, -0.3, 0.3, 1.0] });
        let e = simulate_ensemble(&c, 10).unwrap();
        assert!(chaos_statistics(&[e], TestFunction::X2, 0.05).is_err());
    }

    #[test]
    fn single_particle_variance_matches_ou() {
        // N = 1: λ(1)² with λ OU from 0 is σ_t²·χ²₁, variance 2σ_t⁴
        let mut c = SdeConfig::new(1, 2.0, PotentialSpec::quadratic(0.5), 1.0, SdeInit::Positions { positions: vec![0.0] });
        c.seed = 21;
        c.dt = Some(1e-2);
        c.snapshot_times = vec![0.0, 1.0];
        let e = simulate_ensemble(&c, 2000).unwrap();
        let r = chaos_statistics(&[e], TestFunction::X2, 1.0).unwrap();
        let s2 = 1.0 - (-1.0f64).exp();
        let exact = 2.0 * s2 * s2;
        let row = r.rows[0];
        assert!(row.ci_low <= exact && exact <= row.ci_high, "{row:?} vs {exact}");
    }

    #[test]
    fn lln_at_time_zero_is_quantile_error() {
        let pot = half();
        let grid = Grid::symmetric(3.0, 512).unwrap();
        let init = InitSpec::Semicircle { radius: 2.0, center: 0.0 };
        let traj = evolve(&PdeConfig::new(grid, 0.1, vec![0.0, 0.1], init), &pot, None).unwrap();
        let positions = {
            use crate::measures::Measure;
            traj.densities[0].quantile_function(64).unwrap().values().to_vec()
        };
        let mut c = SdeConfig::new(64, 2.0, PotentialSpec::quadratic(0.5), 0.1, SdeInit::Positions { positions });
        c.snapshot_times = vec![0.0, 0.1];
        let e = simulate_ensemble(&c, 4).unwrap();
        let r = lln_report(&[e], &traj, 1.0, &[0.0]).unwrap();
        assert!(r.rows[0].distance <= 2.0 / 64.0 + 2.0 * grid.h(), "{:?}", r.rows[0]);
        assert!(lln_report(&[], &traj, 2.0, &[0.0]).is_err());
    }

    #[test]
    fn bump_vanishes_outside() {
        assert_eq!(TestFunction::Bump.eval(1.0), 0.0);
        assert!((TestFunction::Bump.eval(0.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(TestFunction::parse("x4").unwrap(), TestFunction::X4);
        assert!(TestFunction::parse("x3").is_err());
    }
}
