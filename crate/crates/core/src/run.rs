//! Run configurations, run directories and their on-disk artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix_oracle::{oracle_compare, simulate_matrix_ensemble, MatrixConfig, MatrixEnsemble, OracleReport};
use crate::measures::{fmt_f64, wasserstein, EmpiricalMeasure, Grid, GridDensity, DEFAULT_QUANTILE_NODES};
use crate::freecalc::free_entropy;
use crate::pde::{evolve, PdeConfig, StepStats, Trajectory};
use crate::potentials::{equilibrium_closed_form, euler_lagrange_residual, make_potential, Potential, PotentialSpec};
use crate::sde::{simulate_ensemble, EnsembleOutput, SdeConfig, SdeInit, DEFAULT_MAX_HALVINGS, DEFAULT_MIN_GAP};

pub const TOOL_NAME: &str = "coulombflow";
pub const CONFIG_FILE: &str = "config.toml";
pub const RECORD_FILE: &str = "record.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Equilibrium,
    Pde,
    Sde,
    Matrix,
}

impl RunKind {
    fn as_str(self) -> &'static str {
        match self {
            RunKind::Equilibrium => "equilibrium",
            RunKind::Pde => "pde",
            RunKind::Sde => "sde",
            RunKind::Matrix => "matrix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSection {
    pub grid: Grid,
}

fn default_min_gap() -> f64 {
    DEFAULT_MIN_GAP
}

fn default_max_halvings() -> u32 {
    DEFAULT_MAX_HALVINGS
}

fn default_true() -> bool {
    true
}

/// Particle-run parameters; potential and seed live at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSection {
    pub n_particles: usize,
    pub beta: f64,
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
    pub init: SdeInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSection {
    pub n: usize,
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    pub init: SdeInit,
    /// Also run the `β = 2` particle system and write the comparison report.
    #[serde(default = "default_true")]
    pub compare: bool,
}

/// A complete, replayable description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kind: RunKind,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSection>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(config_err)?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Canonical serialization: field order fixed by the type, parameter
    /// maps sorted, floats in shortest round-trip form.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        let present = [
            (RunKind::Equilibrium, self.equilibrium.is_some()),
            (RunKind::Pde, self.pde.is_some()),
            (RunKind::Sde, self.sde.is_some()),
            (RunKind::Matrix, self.matrix.is_some()),
        ];
        for (kind, has) in present {
            if has != (kind == self.kind) {
                return Err(Error::Config(if has {
                    format!("[{}] section given for a {} run", kind.as_str(), self.kind.as_str())
                } else {
                    format!("{} run needs a [{}] section", kind.as_str(), kind.as_str())
                }));
            }
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(Error::Config(format!("run name {name:?} is not a plain directory name")));
            }
        }
        make_potential(&self.potential)?;
        if let Some(p) = &self.pde {
            p.validate()?;
        }
        if let Some(s) = &self.sde {
            if s.n_paths == 0 {
                return Err(Error::Config("n_paths must be positive".into()));
            }
            self.sde_config()?.validate()?;
        }
        if let Some(m) = &self.matrix {
            if m.n_paths == 0 {
                return Err(Error::Config("n_paths must be positive".into()));
            }
            self.matrix_config()?.particle_config().validate()?;
        }
        Ok(())
    }

    pub fn sde_config(&self) -> Result<SdeConfig> {
        let s = self.sde.as_ref().ok_or_else(|| Error::Config("no [sde] section".into()))?;
        let mut c = SdeConfig::new(s.n_particles, s.beta, self.potential.clone(), s.t_end, s.init.clone());
        c.dt = s.dt;
        c.truncation_radius = s.truncation_radius;
        c.min_gap = s.min_gap;
        c.max_halvings = s.max_halvings;
        if !s.snapshot_times.is_empty() {
            c.snapshot_times = s.snapshot_times.clone();
        }
        c.seed = self.seed;
        c.domain = s.domain;
        Ok(c)
    }

    pub fn matrix_config(&self) -> Result<MatrixConfig> {
        let m = self.matrix.as_ref().ok_or_else(|| Error::Config("no [matrix] section".into()))?;
        let mut c = MatrixConfig::new(m.n, self.potential.clone(), m.t_end, m.init.clone());
        c.dt = m.dt;
        if !m.snapshot_times.is_empty() {
            c.snapshot_times = m.snapshot_times.clone();
        }
        c.seed = self.seed;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub tool: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub files: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A fresh run directory that records every file written into it.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    /// Creates `<output_dir>/<name>`, or a timestamped directory when no
    /// name is given; an existing directory is an error.
    pub fn create(config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.output_dir)?;
        let name = match &config.name {
            Some(n) => n.clone(),
            None => format!("{}-{}", config.kind.as_str(), chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ")),
        };
        let root = config.output_dir.join(name);
        match fs::create_dir(&root) {
            Ok(()) => Ok(RunDir { root, files: Vec::new() }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                Err(Error::Config(format!("run directory {} already exists", root.display())))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.files.push(FileEntry { path: rel.to_string(), bytes: contents.len() as u64, sha256: sha256_hex(contents) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn finish(self, config: &RunConfig, started: String) -> Result<PathBuf> {
        let record = RunRecord {
            config: config.clone(),
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: chrono::Utc::now().to_rfc3339(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        fs::write(self.root.join(RECORD_FILE), text)?;
        Ok(self.root)
    }
}

/// Files whose digest no longer matches the run record; empty when intact.
pub fn verify_integrity(dir: &Path) -> Result<Vec<String>> {
    let record: RunRecord = serde_json::from_str(&fs::read_to_string(dir.join(RECORD_FILE))?)?;
    let mut bad = Vec::new();
    for f in &record.files {
        match fs::read(dir.join(&f.path)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 && bytes.len() as u64 == f.bytes => {}
            Ok(_) => bad.push(format!("{}: digest mismatch", f.path)),
            Err(e) => bad.push(format!("{}: {e}", f.path)),
        }
    }
    Ok(bad)
}

/// `snapshots/t_<time>.csv`, with the shortest round-trip rendering of `t`.
pub fn snapshot_path(t: f64) -> String {
    format!("snapshots/t_{t}.csv")
}

pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::from("t,sigma_v,rel_sigma,fisher,grad_sq,m1,m2,w2_to_ref\n");
    for r in &traj.diagnostics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.sigma_v),
            opt(r.rel_sigma),
            fmt_f64(r.fisher),
            fmt_f64(r.grad_sq),
            fmt_f64(r.m1),
            fmt_f64(r.m2),
            opt(r.w2_to_ref)
        );
    }
    out
}

pub fn moments_csv(e: &EnsembleOutput) -> String {
    let mut out = String::from("t,m2_mean,m2_stderr,min_gap_min,truncation_count,halving_count\n");
    for r in &e.moments {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.m2_mean),
            fmt_f64(r.m2_stderr),
            fmt_f64(r.min_gap_min),
            r.truncation_count,
            r.halving_count
        );
    }
    out
}

pub fn matrix_moments_csv(e: &MatrixEnsemble) -> String {
    let mut out = String::from("t,m2_mean,m2_stderr\n");
    for (k, t) in e.snapshot_times.iter().enumerate() {
        let (m, se) = e.m2(k);
        let _ = writeln!(out, "{},{},{}", fmt_f64(*t), fmt_f64(m), fmt_f64(se));
    }
    out
}

#[derive(Serialize)]
struct EquilibriumMeta<'a> {
    potential: &'a PotentialSpec,
    grid: Grid,
    el_residual: f64,
    sigma_v: f64,
    support: Option<Vec<(f64, f64)>>,
}

#[derive(Serialize)]
struct PdeMeta<'a> {
    config: &'a PdeConfig,
    potential: &'a PotentialSpec,
    grid: Grid,
    reference: Option<&'static str>,
    stats: StepStats,
    max_entropy_increase: f64,
}

#[derive(Serialize)]
struct SdeMeta<'a> {
    config: &'a SdeConfig,
    n_paths: usize,
    dt: f64,
    truncation_radius: f64,
    domain: (f64, f64),
    min_gap: f64,
    truncations: u64,
    halvings: u64,
}

#[derive(Serialize)]
struct MatrixMeta<'a> {
    config: &'a MatrixConfig,
    n_paths: usize,
}

/// Closed-form equilibrium on the PDE grid, when the family has one.
pub fn reference_equilibrium(potential: &Potential, grid: &Grid) -> Option<GridDensity> {
    potential.closed_form_support()?;
    equilibrium_closed_form(potential, grid).ok()
}

/// Executes `config` and returns the run directory.
pub fn execute(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let started = chrono::Utc::now().to_rfc3339();
    let potential = make_potential(&config.potential)?;
    let mut dir = RunDir::create(config)?;
    dir.write(CONFIG_FILE, config.to_toml()?.as_bytes())?;
    match config.kind {
        RunKind::Equilibrium => {
            let grid = config.equilibrium.as_ref().expect("validated").grid;
            let density = equilibrium_closed_form(&potential, &grid)?;
            let meta = EquilibriumMeta {
                potential: &config.potential,
                grid,
                el_residual: euler_lagrange_residual(&density, &potential)?,
                sigma_v: free_entropy(&density, &potential)?,
                support: potential.closed_form_support(),
            };
            dir.write("density.csv", density.to_csv().as_bytes())?;
            dir.write_json("meta.json", &meta)?;
        }
        RunKind::Pde => {
            let pde = config.pde.as_ref().expect("validated");
            let reference = reference_equilibrium(&potential, &pde.grid);
            let traj = evolve(pde, &potential, reference.as_ref())?;
            dir.write("diagnostics.csv", diagnostics_csv(&traj).as_bytes())?;
            for (t, d) in traj.times.iter().zip(&traj.densities) {
                dir.write(&snapshot_path(*t), d.to_csv().as_bytes())?;
            }
            let meta = PdeMeta {
                config: pde,
                potential: &config.potential,
                grid: pde.grid,
                reference: reference.as_ref().map(|_| "closed-form equilibrium"),
                stats: traj.stats.clone(),
                max_entropy_increase: traj.max_entropy_increase(),
            };
            dir.write_json("meta.json", &meta)?;
        }
        RunKind::Sde => {
            let sde = config.sde_config()?;
            let n_paths = config.sde.as_ref().expect("validated").n_paths;
            let resolved = sde.resolve()?;
            let e = simulate_ensemble(&sde, n_paths)?;
            dir.write("moments.csv", moments_csv(&e).as_bytes())?;
            for (t, m) in e.snapshot_times.iter().zip(&e.pooled) {
                dir.write(&snapshot_path(*t), m.to_csv().as_bytes())?;
            }
            let meta = SdeMeta {
                config: &sde,
                n_paths,
                dt: resolved.dt,
                truncation_radius: resolved.integrator.truncation_radius,
                domain: resolved.domain,
                min_gap: e.moments.iter().map(|r| r.min_gap_min).fold(f64::INFINITY, f64::min),
                truncations: e.moments.iter().map(|r| r.truncation_count).sum(),
                halvings: e.moments.iter().map(|r| r.halving_count).sum(),
            };
            dir.write_json("meta.json", &meta)?;
        }
        RunKind::Matrix => {
            let section = config.matrix.as_ref().expect("validated");
            let mc = config.matrix_config()?;
            let e = simulate_matrix_ensemble(&mc, section.n_paths)?;
            dir.write("moments.csv", matrix_moments_csv(&e).as_bytes())?;
            for (t, m) in e.snapshot_times.iter().zip(&e.pooled) {
                dir.write(&snapshot_path(*t), m.to_csv().as_bytes())?;
            }
            if section.compare {
                let g = simulate_ensemble(&mc.particle_config(), section.n_paths)?;
                let report: OracleReport = oracle_compare(&(&e).into(), &(&g).into())?;
                dir.write_json("oracle.json", &report)?;
            }
            dir.write_json("meta.json", &MatrixMeta { config: &mc, n_paths: section.n_paths })?;
        }
    }
    dir.finish(config, started)
}

/// A snapshot file of either kind.
#[derive(Debug, Clone)]
pub enum Snapshot {
    Density(GridDensity),
    Atoms(EmpiricalMeasure),
}

impl Snapshot {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        match text.lines().next().map(str::trim) {
            Some("x,rho") => Ok(Snapshot::Density(GridDensity::from_csv(&text)?)),
            Some("lambda") => Ok(Snapshot::Atoms(EmpiricalMeasure::from_csv(&text)?)),
            _ => Err(Error::Config(format!("{} is not a snapshot CSV", path.display()))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub metric: String,
    pub t: f64,
    pub distance: f64,
}

/// `W_p` between the snapshots at time `t` of two run directories.
pub fn compare_runs(a: &Path, b: &Path, p: f64, t: f64) -> Result<CompareReport> {
    let read = |dir: &Path| Snapshot::read(&dir.join(snapshot_path(t)));
    let (sa, sb) = (read(a)?, read(b)?);
    let nodes = DEFAULT_QUANTILE_NODES;
    let distance = match (&sa, &sb) {
        (Snapshot::Density(x), Snapshot::Density(y)) => wasserstein(p, x, y, nodes)?,
        (Snapshot::Density(x), Snapshot::Atoms(y)) => wasserstein(p, x, y, nodes)?,
        (Snapshot::Atoms(x), Snapshot::Density(y)) => wasserstein(p, x, y, nodes)?,
        (Snapshot::Atoms(x), Snapshot::Atoms(y)) => wasserstein(p, x, y, nodes.max(x.len()).max(y.len()))?,
    };
    Ok(CompareReport { metric: format!("w{p}"), t, distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::InitSpec;

    fn pde_config(dir: &Path) -> RunConfig {
        RunConfig {
            kind: RunKind::Pde,
            output_dir: dir.to_path_buf(),
            name: Some("a".into()),
            seed: 0,
            potential: PotentialSpec::quadratic(0.5),
            equilibrium: None,
            pde: Some(PdeConfig::new(
                Grid::symmetric(4.0, 128).unwrap(),
                0.1,
                vec![0.0, 0.05, 0.1],
                InitSpec::Gaussian { mean: 0.0, std: 0.5 },
            )),
            sde: None,
            matrix: None,
        }
    }

    fn sde_config(dir: &Path) -> RunConfig {
        RunConfig {
            kind: RunKind::Sde,
            output_dir: dir.to_path_buf(),
            name: None,
            seed: 9,
            potential: PotentialSpec::quartic(-1.0),
            equilibrium: None,
            pde: None,
            sde: Some(SdeSection {
                n_particles: 8,
                beta: 2.0,
                n_paths: 3,
                dt: Some(1e-3),
                t_end: 0.02,
                truncation_radius: None,
                min_gap: DEFAULT_MIN_GAP,
                max_halvings: DEFAULT_MAX_HALVINGS,
                snapshot_times: vec![0.0, 0.01, 0.02],
                domain: None,
                init: SdeInit::Quantiles { density: InitSpec::Semicircle { radius: 2.0, center: 0.0 } },
            }),
            matrix: None,
        }
    }

    #[test]
    fn config_round_trips_byte_identically() {
        let tmp = tempfile::tempdir().unwrap();
        for c in [pde_config(tmp.path()), sde_config(tmp.path())] {
            let text = c.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn hand_written_config_parses() {
        let text = r#"
kind = "equilibrium"
output_dir = "runs"

[potential]
family = "kontsevich-penner"
params = { a = 12, b = 0, cc = 1 }

[equilibrium]
grid = { left = -3, right = 3, n = 1024 }
"#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.potential.params["a"], 12.0);
        assert_eq!(c.equilibrium.unwrap().grid.n, 1024);
    }

    #[test]
    fn sections_must_match_kind() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = pde_config(tmp.path());
        c.kind = RunKind::Sde;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = pde_config(tmp.path());
        c.name = Some("../x".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn pde_run_writes_manifest_and_refuses_collisions() {
        let tmp = tempfile::tempdir().unwrap();
        let c = pde_config(tmp.path());
        let dir = execute(&c).unwrap();
        for f in ["config.toml", "record.json", "meta.json", "diagnostics.csv", "snapshots/t_0.05.csv"] {
            assert!(dir.join(f).exists(), "{f}");
        }
        assert!(verify_integrity(&dir).unwrap().is_empty());
        let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
        assert!(diag.starts_with("t,sigma_v,rel_sigma,fisher,grad_sq,m1,m2,w2_to_ref\n"));
        assert_eq!(diag.lines().count(), 4);
        assert!(matches!(execute(&c), Err(Error::Config(_))));
        fs::write(dir.join("diagnostics.csv"), "tampered").unwrap();
        assert_eq!(verify_integrity(&dir).unwrap(), vec!["diagnostics.csv: digest mismatch".to_string()]);
    }

    #[test]
    fn replay_from_record_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let c = sde_config(tmp.path());
        let dir = execute(&c).unwrap();
        let record: RunRecord = serde_json::from_str(&fs::read_to_string(dir.join(RECORD_FILE)).unwrap()).unwrap();
        let mut replay = record.config.clone();
        replay.name = Some("replay".into());
        let dir2 = execute(&replay).unwrap();
        for f in ["moments.csv", "snapshots/t_0.02.csv", "snapshots/t_0.csv"] {
            assert_eq!(fs::read(dir.join(f)).unwrap(), fs::read(dir2.join(f)).unwrap(), "{f}");
        }
        let moments = fs::read_to_string(dir.join("moments.csv")).unwrap();
        assert!(moments.starts_with("t,m2_mean,m2_stderr,min_gap_min,truncation_count,halving_count\n"));
    }

    #[test]
    fn compare_is_symmetric() {
        let tmp = tempfile::tempdir().unwrap();
        let a = execute(&pde_config(tmp.path())).unwrap();
        let mut cb = pde_config(tmp.path());
        cb.name = Some("b".into());
        cb.pde.as_mut().unwrap().init = InitSpec::Gaussian { mean: 0.3, std: 0.5 };
        let b = execute(&cb).unwrap();
        let mut cs = sde_config(tmp.path());
        cs.potential = PotentialSpec::quadratic(0.5);
        cs.sde.as_mut().unwrap().snapshot_times = vec![0.0, 0.05, 0.1];
        cs.sde.as_mut().unwrap().t_end = 0.1;
        let s = execute(&cs).unwrap();
        for p in [1.0, 2.0] {
            for (x, y) in [(&a, &b), (&a, &s), (&b, &s)] {
                let d1 = compare_runs(x, y, p, 0.1).unwrap().distance;
                let d2 = compare_runs(y, x, p, 0.1).unwrap().distance;
                assert_eq!(d1, d2);
            }
        }
        let ab = compare_runs(&a, &b, 1.0, 0.0).unwrap().distance;
        assert!((ab - 0.3).abs() < 0.01, "{ab}");
        assert!(compare_runs(&a, &b, 1.0, 0.07).is_err());
    }

    #[test]
    fn equilibrium_run_reports_residual() {
        let tmp = tempfile::tempdir().unwrap();
        let c = RunConfig {
            kind: RunKind::Equilibrium,
            output_dir: tmp.path().to_path_buf(),
            name: Some("eq".into()),
            seed: 0,
            potential: PotentialSpec::quartic(-2.0),
            equilibrium: Some(EquilibriumSection { grid: Grid::new(-3.0, 3.0, 1024).unwrap() }),
            pde: None,
            sde: None,
            matrix: None,
        };
        let dir = execute(&c).unwrap();
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap();
        assert!(meta["el_residual"].as_f64().unwrap() <= 1e-2);
        let d = GridDensity::read_csv(&dir.join("density.csv")).unwrap();
        assert_eq!(d.grid().n, 1024);
    }
}
