//! Verification suites: each criterion runs at a fixed resolution with its
//! tolerance pinned below and reports one pass/fail line.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::diagnostics::{
    bootstrap_mean, chaos_statistics, contraction_check, dissipation_check, hwi_check, lln_report, quadratic_moment_ode,
    TestFunction, MONOTONE_TOL,
};
use crate::error::{Error, Result};
use crate::freecalc::{burgers_residual, burgers_residual_quadratic, hilbert_transform, relative_free_entropy};
use crate::matrix_oracle::{compare_samples, oracle_compare, simulate_matrix_ensemble, MatrixConfig, SnapshotSample};
use crate::measures::{w2, Grid, GridDensity};
use crate::pde::{default_half_width, evolve, InitSpec, PdeConfig, Trajectory};
use crate::potentials::{equilibrium_closed_form, euler_lagrange_residual, Potential, PotentialSpec};
use crate::run::{diagnostics_csv, moments_csv};
use crate::sde::{simulate_ensemble, EnsembleOutput, SdeConfig, SdeInit};

pub const C1_SLOPE: f64 = 1e-3;
pub const C1_OFFSET: f64 = 1e-4;
pub const C2_SUP_ERR: f64 = 5e-3;
pub const C2_MIN_RATIO: f64 = 1.5;
pub const C3_RESIDUAL: f64 = 1e-2;
pub const C4_MOMENT_ERR: f64 = 1e-3;
pub const C5_TARGET: f64 = 0.5;
pub const C5_TOL: f64 = 0.02;
pub const C6_TRANSLATE_REL: f64 = 0.02;
pub const C6_CONTRACTION_FACTOR: f64 = 1.05;
pub const C7_W2: f64 = 1e-2;
pub const C7_REL_SIGMA: f64 = 1e-3;
pub const C7_W2_QUARTIC: f64 = 2e-2;
pub const C8_EQUALITY: f64 = 5e-3;
pub const C8_SLACK: f64 = -1e-3;
pub const C9_SE_MULT: f64 = 3.0;
pub const C10_FINAL_W1: f64 = 0.05;
pub const C12_MIN_P: f64 = 0.01;
pub const C12_MISMATCH_P: f64 = 0.001;
pub const C13_STATIONARY: f64 = 1e-3;
pub const C13_AGREE: f64 = 1e-8;
pub const C13_DYNAMIC: f64 = 5e-2;
pub const C14_MASS_DRIFT: f64 = 1e-12;
pub const C14_GRAD_FISHER_REL: f64 = 1e-10;

const PATHS: usize = 200;
const LLN_SEED: u64 = 1;
const MOMENT_SEED: u64 = 2;
const ORACLE_SEED: u64 = 3;
const DETERMINISM_SEED: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Core,
    GradientFlow,
    Lln,
    Oracle,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "core" => Ok(Suite::Core),
            "gradientflow" => Ok(Suite::GradientFlow),
            "lln" => Ok(Suite::Lln),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            _ => Err(Error::Config(format!("unknown suite {s:?}"))),
        }
    }
}

impl Suite {
    /// Criteria in this suite, in the order they run.
    pub fn criteria(self) -> Vec<u32> {
        match self {
            Suite::Core => vec![1, 2, 3, 4, 13, 14],
            Suite::GradientFlow => vec![5, 6, 7, 8],
            Suite::Lln => vec![9, 10, 11],
            Suite::Oracle => vec![12],
            Suite::All => (1..=14).collect(),
        }
    }
}

/// Outcome of one criterion.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {}: {} [{:.1} s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

fn title(id: u32) -> &'static str {
    match id {
        1 => "equilibrium fixed point",
        2 => "Hilbert transform accuracy",
        3 => "Euler-Lagrange residuals",
        4 => "moment ODE",
        5 => "dissipation constant",
        6 => "W2 contraction",
        7 => "long-time convergence",
        8 => "HWI inequality",
        9 => "SDE moment law",
        10 => "law of large numbers",
        11 => "propagation of chaos",
        12 => "matrix oracle",
        13 => "Burgers residual",
        14 => "determinism and structure",
        _ => "unknown",
    }
}

/// Bookkeeping shared by every run of a suite, audited by criterion 14.
#[derive(Debug, Default)]
struct Structural {
    pde_runs: usize,
    pde_steps: usize,
    max_mass_drift: f64,
    min_density: f64,
    grad_fisher_rows: usize,
    max_grad_fisher_rel: f64,
    sde_paths: usize,
    sde_steps: usize,
    min_gap: f64,
}

impl Structural {
    fn new() -> Self {
        Structural { min_gap: f64::INFINITY, ..Default::default() }
    }

    fn pde(&mut self, traj: &Trajectory) {
        self.pde_runs += 1;
        self.pde_steps += traj.stats.steps;
        self.max_mass_drift = self.max_mass_drift.max(traj.stats.max_mass_drift);
        self.min_density = self.min_density.min(traj.stats.min_density);
        for r in &traj.diagnostics {
            self.grad_fisher_rows += 1;
            let rel = (r.grad_sq - 4.0 * r.fisher).abs() / r.grad_sq.abs().max(f64::MIN_POSITIVE);
            self.max_grad_fisher_rel = self.max_grad_fisher_rel.max(rel);
        }
    }

    fn sde(&mut self, e: &EnsembleOutput) {
        self.sde_paths += e.paths.len();
        for p in &e.paths {
            self.sde_steps += p.series.len() - 1;
            for r in &p.series {
                self.min_gap = self.min_gap.min(r.min_gap);
            }
        }
    }
}

struct Context {
    structural: Structural,
    /// `β = 2` ensembles of the law-of-large-numbers runs, keyed by `N`.
    lln: BTreeMap<usize, EnsembleOutput>,
}

fn quad() -> Potential {
    Potential::quadratic(0.5).expect("valid")
}

fn symmetric_grid(potential: &Potential, init: &InitSpec, n: usize) -> Result<Grid> {
    let l = default_half_width(potential, init).ok_or_else(|| Error::Config("no default domain".into()))?;
    Grid::symmetric(l, n)
}

fn run_pde(ctx: &mut Context, potential: &Potential, config: &PdeConfig, reference: Option<&GridDensity>) -> Result<Trajectory> {
    let traj = evolve(config, potential, reference)?;
    ctx.structural.pde(&traj);
    Ok(traj)
}

fn run_sde(ctx: &mut Context, config: &SdeConfig, paths: usize) -> Result<EnsembleOutput> {
    let e = simulate_ensemble(config, paths)?;
    ctx.structural.sde(&e);
    Ok(e)
}

type Outcome = Result<(bool, String)>;

fn c1(ctx: &mut Context) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for spec in [PotentialSpec::quadratic(0.5), PotentialSpec::quartic(-3.0), PotentialSpec::quartic(-2.0), PotentialSpec::quartic(1.0)] {
        let pot = crate::potentials::make_potential(&spec)?;
        let grid = symmetric_grid(&pot, &InitSpec::Equilibrium, 1024)?;
        let config = PdeConfig::new(grid, 1.0, PdeConfig::uniform_snapshots(1.0, 0.25), InitSpec::Equilibrium);
        let traj = run_pde(ctx, &pot, &config, None)?;
        let mut worst = 0.0f64;
        let mut max_w = 0.0f64;
        for (t, d) in traj.times.iter().zip(&traj.densities) {
            let w = w2(d, &traj.densities[0])?;
            worst = worst.max(w / (C1_SLOPE * t + C1_OFFSET));
            max_w = max_w.max(w);
        }
        ok &= worst <= 1.0;
        parts.push(format!("{spec} max W2 {max_w:.2e}"));
    }
    Ok((ok, format!("{} (bound 1e-3 t + 1e-4)", parts.join(", "))))
}

fn semicircle_hilbert_error(n: usize) -> Result<f64> {
    let grid = Grid::symmetric(2.5, n)?;
    let d = equilibrium_closed_form(&quad(), &grid)?;
    let hr = hilbert_transform(&d);
    Ok((0..n)
        .filter(|&i| grid.center(i).abs() <= 1.8)
        .map(|i| (hr.values()[i] - 0.5 * grid.center(i)).abs())
        .fold(0.0, f64::max))
}

fn c2(_: &mut Context) -> Outcome {
    let e1024 = semicircle_hilbert_error(1024)?;
    let e512 = semicircle_hilbert_error(512)?;
    let ratio = e512 / e1024;
    Ok((e1024 <= C2_SUP_ERR && ratio >= C2_MIN_RATIO, format!("sup err {e1024:.2e} (≤ {C2_SUP_ERR:e}), ratio 512/1024 {ratio:.2} (≥ {C2_MIN_RATIO})")))
}

fn c3(_: &mut Context) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [-3.0, -2.0, 1.0] {
        let pot = Potential::quartic(c)?;
        let grid = symmetric_grid(&pot, &InitSpec::Equilibrium, 1024)?;
        let r = euler_lagrange_residual(&equilibrium_closed_form(&pot, &grid)?, &pot)?;
        ok &= r <= C3_RESIDUAL;
        parts.push(format!("c={c}: {r:.2e}"));
    }
    Ok((ok, format!("{} (≤ {C3_RESIDUAL:e})", parts.join(", "))))
}

fn c4(ctx: &mut Context) -> Outcome {
    let pot = quad();
    let config = PdeConfig::new(Grid::symmetric(3.0, 2048)?, 2.0, vec![0.0, 0.5, 1.0, 2.0], InitSpec::Gaussian { mean: 0.0, std: 0.5 });
    let traj = run_pde(ctx, &pot, &config, None)?;
    let m0 = traj.diagnostics[0].m2;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for r in &traj.diagnostics[1..] {
        let exact = 1.0 + (m0 - 1.0) * (-r.t).exp();
        let err = (r.m2 - exact).abs();
        worst = worst.max(err);
        parts.push(format!("t={}: {err:.2e}", r.t));
    }
    Ok((worst <= C4_MOMENT_ERR, format!("n=2048 |m2 − ODE| {} (≤ {C4_MOMENT_ERR:e})", parts.join(", "))))
}

fn c5(ctx: &mut Context) -> Outcome {
    let pot = quad();
    let config = PdeConfig::new(
        Grid::symmetric(3.0, 1024)?,
        4.0,
        PdeConfig::uniform_snapshots(4.0, 0.05),
        InitSpec::Gaussian { mean: 0.0, std: 0.5 },
    );
    let traj = run_pde(ctx, &pot, &config, None)?;
    let report = dissipation_check(&traj)?;
    let c = report.fitted_constant.unwrap_or(f64::NAN);
    let mut monotone = report.monotone && traj.max_entropy_increase() <= MONOTONE_TOL;
    let battery: [(PotentialSpec, InitSpec, f64, usize); 4] = [
        (PotentialSpec::quartic(-2.0), InitSpec::Semicircle { radius: 1.0, center: 0.2 }, 2.0, 512),
        (PotentialSpec::quartic(-3.0), InitSpec::Uniform { a: -0.5, b: 1.5 }, 2.0, 512),
        (PotentialSpec::quartic(1.0), InitSpec::Gaussian { mean: 0.0, std: 0.3 }, 2.0, 512),
        (PotentialSpec::new("zero", &[]), InitSpec::Semicircle { radius: 2.0, center: 0.0 }, 0.5, 512),
    ];
    let mut worst_increase = traj.max_entropy_increase();
    for (spec, init, t_end, n) in battery {
        let p = crate::potentials::make_potential(&spec)?;
        let grid = symmetric_grid(&p, &init, n)?;
        let t = run_pde(ctx, &p, &PdeConfig::new(grid, t_end, PdeConfig::uniform_snapshots(t_end, 0.05), init), None)?;
        worst_increase = worst_increase.max(t.max_entropy_increase());
        monotone &= t.max_entropy_increase() <= MONOTONE_TOL;
    }
    let ok = (c - C5_TARGET).abs() <= C5_TOL && monotone;
    Ok((
        ok,
        format!(
            "c* = {c:.4} (0.5 ± {C5_TOL}), max rel err {:.3}, largest Σ increase over 5 runs {worst_increase:.1e} (≤ {MONOTONE_TOL:e})",
            report.max_rel_err.unwrap_or(f64::NAN)
        ),
    ))
}

fn c6(ctx: &mut Context) -> Outcome {
    let pot = quad();
    let grid = Grid::symmetric(4.0, 1024)?;
    let times = vec![0.0, 0.5, 1.0, 2.0];
    let a = run_pde(ctx, &pot, &PdeConfig::new(grid, 2.0, times.clone(), InitSpec::Gaussian { mean: 0.0, std: 0.5 }), None)?;
    let b = run_pde(ctx, &pot, &PdeConfig::new(grid, 2.0, times, InitSpec::Gaussian { mean: 0.5, std: 0.5 }), None)?;
    let report = contraction_check(&a, &b, 1.0)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (t, w) in report.times.iter().zip(&report.w2).skip(1) {
        let rel = w / (0.5 * (-t / 2.0).exp()) - 1.0;
        ok &= rel.abs() <= C6_TRANSLATE_REL;
        parts.push(format!("{:+.2}%", 100.0 * rel));
    }
    let mut worst = 0.0f64;
    for spec in [PotentialSpec::quadratic(0.5), PotentialSpec::quartic(0.0), PotentialSpec::quartic(1.0)] {
        let p = crate::potentials::make_potential(&spec)?;
        let k = p.convexity_bound().expect("convex family");
        let s1 = InitSpec::Semicircle { radius: 1.0, center: 0.3 };
        let s2 = InitSpec::Uniform { a: -1.2, b: 0.6 };
        let l = default_half_width(&p, &s1).unwrap_or(3.0).max(default_half_width(&p, &s2).unwrap_or(3.0));
        let grid = Grid::symmetric(l, 512)?;
        let snaps = PdeConfig::uniform_snapshots(2.0, 0.25);
        let ta = run_pde(ctx, &p, &PdeConfig::new(grid, 2.0, snaps.clone(), s1), None)?;
        let tb = run_pde(ctx, &p, &PdeConfig::new(grid, 2.0, snaps, s2), None)?;
        let r = contraction_check(&ta, &tb, k)?;
        for (t, w) in r.times.iter().zip(&r.w2) {
            worst = worst.max(w / (r.w2[0] * (-0.5 * k * t).exp()));
        }
    }
    ok &= worst <= C6_CONTRACTION_FACTOR;
    Ok((
        ok,
        format!(
            "translate rel err {} (±2%), convex battery max W2(t)/(W2(0)e^(-Kt/2)) {worst:.4} (≤ {C6_CONTRACTION_FACTOR})",
            parts.join(" ")
        ),
    ))
}

fn c7(ctx: &mut Context) -> Outcome {
    let pot = quad();
    let grid = Grid::symmetric(3.0, 1024)?;
    let eq = equilibrium_closed_form(&pot, &grid)?;
    let traj = run_pde(ctx, &pot, &PdeConfig::new(grid, 10.0, PdeConfig::uniform_snapshots(10.0, 1.0), InitSpec::Gaussian { mean: 0.0, std: 0.5 }), Some(&eq))?;
    let last = traj.densities.last().expect("snapshots");
    let w = w2(last, &eq)?;
    let rel = relative_free_entropy(last, &pot, &eq)?;
    let q = Potential::quartic(1.0)?;
    let init = InitSpec::Gaussian { mean: 0.0, std: 0.3 };
    let qgrid = symmetric_grid(&q, &init, 512)?;
    let qeq = equilibrium_closed_form(&q, &qgrid)?;
    let qtraj = run_pde(ctx, &q, &PdeConfig::new(qgrid, 10.0, PdeConfig::uniform_snapshots(10.0, 1.0), init), Some(&qeq))?;
    let wq = w2(qtraj.densities.last().expect("snapshots"), &qeq)?;
    let ok = w <= C7_W2 && rel <= C7_REL_SIGMA && wq <= C7_W2_QUARTIC;
    Ok((ok, format!("quadratic W2 {w:.2e} (≤ 1e-2), Σ(μ|μ_V) {rel:.2e} (≤ 1e-3); quartic c=1 W2 {wq:.2e} (≤ 2e-2)")))
}

fn shift(d: &GridDensity, cells: isize) -> Result<GridDensity> {
    let n = d.values().len() as isize;
    let values = (0..n)
        .map(|i| {
            let j = i - cells;
            if (0..n).contains(&j) {
                d.values()[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    GridDensity::from_cell_values(*d.grid(), values)
}

fn mix(a: &GridDensity, b: &GridDensity, w: f64) -> Result<GridDensity> {
    GridDensity::from_cell_values(*a.grid(), a.values().iter().zip(b.values()).map(|(x, y)| w * x + (1.0 - w) * y).collect())
}

/// Twenty test densities on `grid` around the equilibrium `eq`.
fn hwi_battery(grid: &Grid, pot: &Potential, eq: &GridDensity) -> Result<Vec<GridDensity>> {
    let h = grid.h();
    let mut out = Vec::new();
    let specs = [
        InitSpec::Gaussian { mean: 0.0, std: 0.3 },
        InitSpec::Gaussian { mean: 0.0, std: 0.6 },
        InitSpec::Gaussian { mean: 0.4, std: 0.5 },
        InitSpec::Gaussian { mean: -0.7, std: 0.4 },
        InitSpec::Gaussian { mean: 0.2, std: 0.55 },
        InitSpec::Uniform { a: -1.0, b: 1.0 },
        InitSpec::Uniform { a: -0.5, b: 1.5 },
        InitSpec::Uniform { a: -1.5, b: 0.2 },
        InitSpec::Uniform { a: -2.0, b: 2.0 },
        InitSpec::Semicircle { radius: 1.0, center: 0.0 },
        InitSpec::Semicircle { radius: 1.5, center: 0.3 },
        InitSpec::Semicircle { radius: 2.5, center: 0.0 },
        InitSpec::Semicircle { radius: 0.8, center: -0.6 },
    ];
    for s in &specs {
        out.push(s.density(grid, pot)?);
    }
    for a in [0.125, 0.25, -0.375] {
        out.push(shift(eq, (a / h).round() as isize)?);
    }
    let g = InitSpec::Gaussian { mean: 0.5, std: 0.3 }.density(grid, pot)?;
    let u = InitSpec::Uniform { a: -1.0, b: 0.0 }.density(grid, pot)?;
    let g1 = InitSpec::Gaussian { mean: -1.0, std: 0.3 }.density(grid, pot)?;
    let g2 = InitSpec::Gaussian { mean: 1.0, std: 0.3 }.density(grid, pot)?;
    let narrow = InitSpec::Semicircle { radius: 0.5, center: 0.0 }.density(grid, pot)?;
    out.push(mix(eq, &g, 0.5)?);
    out.push(mix(eq, &u, 0.5)?);
    out.push(mix(&g1, &g2, 0.5)?);
    out.push(mix(eq, &narrow, 0.7)?);
    debug_assert_eq!(out.len(), 20);
    Ok(out)
}

fn c8(_: &mut Context) -> Outcome {
    let pot = quad();
    let grid = Grid::symmetric(4.0, 1024)?;
    let eq = equilibrium_closed_form(&pot, &grid)?;
    let translate = shift(&eq, (0.5 / grid.h()).round() as isize)?;
    let equality = hwi_check(&translate, &pot, &eq, 1.0)?;
    let mut ok = equality.abs() <= C8_EQUALITY;
    let mut parts = Vec::new();
    for spec in [PotentialSpec::quadratic(0.5), PotentialSpec::quartic(0.0), PotentialSpec::quartic(1.0)] {
        let p = crate::potentials::make_potential(&spec)?;
        let k = p.convexity_bound().expect("convex family");
        let peq = equilibrium_closed_form(&p, &grid)?;
        let battery = hwi_battery(&grid, &p, &peq)?;
        let mut min_slack = f64::INFINITY;
        for d in &battery {
            min_slack = min_slack.min(hwi_check(d, &p, &peq, k)?);
        }
        ok &= min_slack >= C8_SLACK && battery.len() == 20;
        parts.push(format!("{spec} min slack {min_slack:.3e}"));
    }
    Ok((ok, format!("translate slack {equality:.2e} (|·| ≤ 5e-3); {} (≥ −1e-3)", parts.join(", "))))
}

fn path_m2(e: &EnsembleOutput, k: usize) -> Vec<f64> {
    e.linear_statistic(k, |x| x * x)
}

fn c9(ctx: &mut Context) -> Outcome {
    let mut c = SdeConfig::new(64, 2.0, PotentialSpec::quadratic(0.5), 1.0, SdeInit::Quantiles { density: InitSpec::Gaussian { mean: 0.0, std: 0.5 } });
    c.snapshot_times = vec![0.0, 0.5, 1.0];
    c.seed = MOMENT_SEED;
    let e = run_sde(ctx, &c, PATHS)?;
    let m0 = path_m2(&e, 0)[0];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, t) in [(1, 0.5), (2, 1.0)] {
        let (mean, se) = bootstrap_mean(&path_m2(&e, k));
        let ode = quadratic_moment_ode(0.5, 2.0, 64, m0, t);
        let z = (mean - ode) / se;
        ok &= z.abs() <= C9_SE_MULT;
        parts.push(format!("t={t}: {mean:.5} vs {ode:.5} ({z:+.2} SE)"));
    }
    let mut c1 = SdeConfig::new(16, 1.0, PotentialSpec::quadratic(0.5), 10.0, SdeInit::Quantiles { density: InitSpec::Semicircle { radius: 2.0, center: 0.0 } });
    c1.seed = MOMENT_SEED;
    let e1 = run_sde(ctx, &c1, PATHS)?;
    let m0 = path_m2(&e1, 0)[0];
    let averages: Vec<f64> = e1
        .paths
        .iter()
        .map(|p| {
            let tail: Vec<f64> = p.series.iter().filter(|r| r.t >= 5.0).map(|r| r.m2).collect();
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect();
    let plateau = 1.0 + 1.0 / 16.0;
    // mean of the ODE solution over [5, 10]
    let expected = plateau + (m0 - plateau) * ((-5.0f64).exp() - (-10.0f64).exp()) / 5.0;
    let (mean, se) = bootstrap_mean(&averages);
    let z = (mean - expected) / se;
    ok &= z.abs() <= C9_SE_MULT;
    parts.push(format!("β=1 N=16 plateau {mean:.4} vs {plateau:.4} ({z:+.2} SE)"));
    Ok((ok, format!("{} (≤ 3 SE)", parts.join(", "))))
}

fn lln_config(n: usize) -> SdeConfig {
    let mut c = SdeConfig::new(n, 2.0, PotentialSpec::quadratic(0.5), 1.0, SdeInit::Quantiles { density: InitSpec::Uniform { a: -2.0, b: 2.0 } });
    c.seed = LLN_SEED;
    c
}

fn lln_ensemble(ctx: &mut Context, n: usize) -> Result<()> {
    if !ctx.lln.contains_key(&n) {
        let e = run_sde(ctx, &lln_config(n), PATHS)?;
        ctx.lln.insert(n, e);
    }
    Ok(())
}

fn c10(ctx: &mut Context) -> Outcome {
    for n in [64, 256, 1024] {
        lln_ensemble(ctx, n)?;
    }
    let pot = quad();
    let config = PdeConfig::new(Grid::symmetric(3.0, 1024)?, 1.0, vec![0.0, 1.0], InitSpec::Uniform { a: -2.0, b: 2.0 });
    let traj = run_pde(ctx, &pot, &config, None)?;
    let ens: Vec<EnsembleOutput> = [64, 256, 1024].iter().map(|n| ctx.lln[n].clone()).collect();
    let report = lln_report(&ens, &traj, 1.0, &[1.0])?;
    let last = report.rows.last().expect("rows").distance;
    let parts: Vec<String> = report.rows.iter().map(|r| format!("N={}: {:.4} ± {:.4}", r.n, r.distance, r.mc_error)).collect();
    Ok((report.verdict && last <= C10_FINAL_W1, format!("W1 {} (strictly decreasing, final ≤ {C10_FINAL_W1})", parts.join(", "))))
}

fn c11(ctx: &mut Context) -> Outcome {
    for n in [16, 64, 256] {
        lln_ensemble(ctx, n)?;
    }
    let ens: Vec<EnsembleOutput> = [16, 64, 256].iter().map(|n| ctx.lln[n].clone()).collect();
    let report = chaos_statistics(&ens, TestFunction::X2, 1.0)?;
    let parts: Vec<String> =
        report.rows.iter().map(|r| format!("N={}: {:.3e} [{:.3e}, {:.3e}]", r.n, r.variance, r.ci_low, r.ci_high)).collect();
    Ok((report.verdict, format!("Var⟨L_N(1), x²⟩ {} (disjoint decreasing CIs)", parts.join(", "))))
}

fn c12(ctx: &mut Context) -> Outcome {
    let init = SdeInit::Quantiles { density: InitSpec::Uniform { a: -1.0, b: 1.0 } };
    let mut mc = MatrixConfig::new(32, PotentialSpec::quadratic(0.5), 1.0, init);
    mc.seed = ORACLE_SEED;
    let matrix = simulate_matrix_ensemble(&mc, PATHS)?;
    let gdbm = run_sde(ctx, &mc.particle_config(), PATHS)?;
    let report = oracle_compare(&(&matrix).into(), &(&gdbm).into())?;
    let mut wrong = mc.particle_config();
    wrong.potential = PotentialSpec::quadratic(1.0);
    let mismatch = run_sde(ctx, &wrong, PATHS)?;
    let control = compare_samples(&(&matrix).into(), &(&mismatch).into())?;
    let (a, b) = SnapshotSample::from(&matrix).split_halves();
    let halves = compare_samples(&a, &b)?;
    let at1 = |r: &crate::matrix_oracle::OracleReport| *r.rows.last().expect("rows");
    let (eq, mm, hv) = (at1(&report), at1(&control), at1(&halves));
    let ok = eq.p_value >= C12_MIN_P && mm.p_value <= C12_MISMATCH_P;
    Ok((
        ok,
        format!(
            "matrix vs GDBM W1 {:.4} p {:.3} (≥ 0.01); mismatch W1 {:.4} p {:.3} (≤ 0.001); split halves p {:.3}",
            eq.w1, eq.p_value, mm.w1, mm.p_value, hv.p_value
        ),
    ))
}

fn c13(ctx: &mut Context) -> Outcome {
    let pot = quad();
    let sc = equilibrium_closed_form(&pot, &Grid::symmetric(2.5, 1024)?)?;
    let z = Complex64::new(1.0, 1.0);
    let stat = burgers_residual(&sc, &sc, 1e-3, &pot, z)?;
    let stat_q = burgers_residual_quadratic(&sc, &sc, 1e-3, &pot, z)?;
    let agree = (stat - stat_q).norm();
    let config = PdeConfig::new(
        Grid::symmetric(3.0, 1024)?,
        1.01,
        vec![0.0, 0.01, 0.5, 0.51, 1.0, 1.01],
        InitSpec::Gaussian { mean: 0.0, std: 0.5 },
    );
    let traj = run_pde(ctx, &pot, &config, None)?;
    let z2 = Complex64::new(0.0, 2.0);
    let mut dynamic = 0.0f64;
    let mut agree_dyn = 0.0f64;
    for k in (0..traj.times.len()).step_by(2) {
        let dt = traj.times[k + 1] - traj.times[k];
        let r = burgers_residual(&traj.densities[k], &traj.densities[k + 1], dt, &pot, z2)?;
        let rq = burgers_residual_quadratic(&traj.densities[k], &traj.densities[k + 1], dt, &pot, z2)?;
        dynamic = dynamic.max(r.norm());
        agree_dyn = agree_dyn.max((r - rq).norm());
    }
    let agree = agree.max(agree_dyn);
    let ok = stat.norm() <= C13_STATIONARY && agree <= C13_AGREE && dynamic <= C13_DYNAMIC;
    Ok((
        ok,
        format!(
            "stationary {:.2e} (≤ 1e-3), general vs quadratic {agree:.1e} (≤ 1e-8), dynamic at 2i {dynamic:.2e} (≤ 5e-2)",
            stat.norm()
        ),
    ))
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn c14(ctx: &mut Context) -> Outcome {
    let mut c = SdeConfig::new(16, 2.0, PotentialSpec::quartic(-2.0), 0.2, SdeInit::Quantiles { density: InitSpec::Semicircle { radius: 2.0, center: 0.0 } });
    c.snapshot_times = vec![0.0, 0.1, 0.2];
    c.seed = DETERMINISM_SEED;
    let bytes = |e: &EnsembleOutput| {
        let mut s = moments_csv(e);
        for m in &e.pooled {
            s.push_str(&m.to_csv());
        }
        s
    };
    let one = with_threads(1, || simulate_ensemble(&c, 12))??;
    let four = with_threads(4, || simulate_ensemble(&c, 12))??;
    let again = with_threads(3, || simulate_ensemble(&c, 12))??;
    ctx.structural.sde(&one);
    let sde_same = bytes(&one) == bytes(&four) && bytes(&one) == bytes(&again);
    let mut mc = MatrixConfig::new(8, PotentialSpec::quartic(-1.0), 0.1, SdeInit::Quantiles { density: InitSpec::Semicircle { radius: 2.0, center: 0.0 } });
    mc.seed = DETERMINISM_SEED;
    let m1 = with_threads(1, || simulate_matrix_ensemble(&mc, 6))??;
    let m4 = with_threads(4, || simulate_matrix_ensemble(&mc, 6))??;
    let matrix_same = m1.pooled == m4.pooled;
    let pot = Potential::quartic(-2.0)?;
    let init = InitSpec::Gaussian { mean: 0.2, std: 0.4 };
    let config = PdeConfig::new(symmetric_grid(&pot, &InitSpec::Semicircle { radius: 1.0, center: 0.0 }, 512)?, 0.2, vec![0.0, 0.1, 0.2], init);
    let p1 = with_threads(1, || evolve(&config, &pot, None))??;
    let p4 = with_threads(4, || evolve(&config, &pot, None))??;
    ctx.structural.pde(&p1);
    let pde_same = diagnostics_csv(&p1) == diagnostics_csv(&p4) && p1.densities == p4.densities;
    let s = &ctx.structural;
    let ordered = s.min_gap > 0.0;
    let mass = s.max_mass_drift <= C14_MASS_DRIFT && s.min_density >= 0.0;
    let gf = s.max_grad_fisher_rel <= C14_GRAD_FISHER_REL;
    let ok = sde_same && matrix_same && pde_same && ordered && mass && gf;
    Ok((
        ok,
        format!(
            "byte-identical across 1/3/4 threads: sde {sde_same}, matrix {matrix_same}, pde {pde_same}; \
             {} particle paths / {} steps with min gap {:.2e}; {} PDE runs / {} steps with max mass drift {:.1e} (≤ 1e-12); \
             grad_sq vs 4·fisher max rel {:.1e} over {} rows (≤ 1e-10)",
            s.sde_paths, s.sde_steps, s.min_gap, s.pde_runs, s.pde_steps, s.max_mass_drift, s.max_grad_fisher_rel, s.grad_fisher_rows
        ),
    ))
}

fn run_criterion(ctx: &mut Context, id: u32) -> Outcome {
    match id {
        1 => c1(ctx),
        2 => c2(ctx),
        3 => c3(ctx),
        4 => c4(ctx),
        5 => c5(ctx),
        6 => c6(ctx),
        7 => c7(ctx),
        8 => c8(ctx),
        9 => c9(ctx),
        10 => c10(ctx),
        11 => c11(ctx),
        12 => c12(ctx),
        13 => c13(ctx),
        14 => c14(ctx),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    }
}

/// Runs `ids` in order; `report` sees each result as soon as it is known.
/// Errors inside a criterion count as a failure of that criterion.
pub fn run_criteria(ids: &[u32], mut report: impl FnMut(&Check)) -> Vec<Check> {
    let mut ctx = Context { structural: Structural::new(), lln: BTreeMap::new() };
    let mut out = Vec::new();
    for &id in ids {
        let start = Instant::now();
        let (passed, detail) = match run_criterion(&mut ctx, id) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let check = Check { id, title: title(id), passed, detail, seconds: start.elapsed().as_secs_f64() };
        report(&check);
        out.push(check);
    }
    out
}

pub fn run_suite(suite: Suite, report: impl FnMut(&Check)) -> Vec<Check> {
    run_criteria(&suite.criteria(), report)
}
