use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coulombflow::measures::Grid;
use coulombflow::pde::{default_half_width, InitSpec, PdeConfig};
use coulombflow::potentials::{make_potential, PotentialSpec};
use coulombflow::run::{compare_runs, execute, verify_integrity, EquilibriumSection, MatrixSection, RunConfig, RunKind, SdeSection};
use coulombflow::sde::{SdeInit, DEFAULT_MAX_HALVINGS, DEFAULT_MIN_GAP};
use coulombflow::verify::{run_suite, Suite};
use coulombflow::{Error, Result};

#[derive(Parser)]
#[command(name = "coulombflow", version, about = "Generalized Dyson Brownian motion and its mean-field flow")]
struct Cli {
    /// Worker threads; defaults to COULOMBFLOW_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Parent directory of the run directory.
    #[arg(long, default_value = "runs")]
    output_dir: PathBuf,
    /// Run directory name; defaults to a timestamp.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form equilibrium density and its Euler-Lagrange residual.
    Equilibrium {
        #[arg(long)]
        potential: String,
        /// `left,right,n`
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[command(flatten)]
        output: Output,
    },
    /// Finite-volume solution of the mean-field equation.
    Pde {
        #[arg(long, conflicts_with_all = ["potential", "init"])]
        config: Option<PathBuf>,
        #[arg(long)]
        potential: Option<String>,
        /// e.g. `gaussian:mean=0,std=0.5`, `uniform:a=-2,b=2`, `equilibrium`
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        /// Fixed time step; the stable step is chosen when omitted.
        #[arg(long)]
        dt: Option<f64>,
        /// `left,right,n`; derived from the potential and start when omitted.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1024)]
        cells: usize,
        /// Comma-separated times or `every=<interval>`.
        #[arg(long)]
        snapshots: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Particle ensemble.
    Sde {
        #[arg(long, conflicts_with_all = ["potential", "init"])]
        config: Option<PathBuf>,
        #[arg(long)]
        potential: Option<String>,
        /// Density whose quantiles place the particles.
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        snapshots: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Hermitian matrix diffusion, compared with the particle system at beta = 2.
    Matrix {
        #[arg(long, conflicts_with_all = ["potential", "init"])]
        config: Option<PathBuf>,
        #[arg(long)]
        potential: Option<String>,
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        snapshots: Option<String>,
        /// Skip the particle run and the comparison report.
        #[arg(long)]
        no_compare: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Wasserstein distance between snapshots of two runs.
    Compare {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::W2)]
        metric: Metric,
        #[arg(long)]
        at: f64,
    },
    /// Acceptance batteries, or the digest check of a run directory.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::Core, conflicts_with = "integrity")]
        suite: SuiteArg,
        #[arg(long)]
        integrity: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    W1,
    W2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Core,
    Gradientflow,
    Lln,
    Oracle,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Core => Suite::Core,
            SuiteArg::Gradientflow => Suite::GradientFlow,
            SuiteArg::Lln => Suite::Lln,
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::All => Suite::All,
        }
    }
}

fn parse_grid(text: &str) -> Result<Grid> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::Config(format!("--grid expects left,right,n, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let left: f64 = parts[0].parse().map_err(|_| bad())?;
    let right: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    Grid::new(left, right, n)
}

fn parse_snapshots(text: Option<&str>, t_end: f64) -> Result<Vec<f64>> {
    let Some(text) = text else {
        return Ok(vec![0.0, t_end]);
    };
    if let Some(every) = text.strip_prefix("every=") {
        let every: f64 = every.parse().map_err(|_| Error::Config(format!("bad snapshot interval {every:?}")))?;
        if every.is_nan() || every <= 0.0 {
            return Err(Error::Config("snapshot interval must be positive".into()));
        }
        return Ok(PdeConfig::uniform_snapshots(t_end, every));
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad snapshot time {s:?}"))))
        .collect()
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str> {
    v.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required without --config")))
}

fn base(kind: RunKind, potential: PotentialSpec, seed: u64, output: Output) -> RunConfig {
    RunConfig {
        kind,
        output_dir: output.output_dir,
        name: output.name,
        seed,
        potential,
        equilibrium: None,
        pde: None,
        sde: None,
        matrix: None,
    }
}

/// A config file, with `--output-dir`/`--name` overriding it when given.
fn from_file(path: &Path, kind: RunKind, output: Output) -> Result<RunConfig> {
    let mut c = RunConfig::read(path)?;
    if c.kind != kind {
        return Err(Error::Config(format!("{} holds a {:?} run", path.display(), c.kind)));
    }
    if output.name.is_some() {
        c.name = output.name;
    }
    if output.output_dir != *"runs" {
        c.output_dir = output.output_dir;
    }
    Ok(c)
}

fn report_run(config: &RunConfig) -> Result<()> {
    let dir = execute(config)?;
    println!("{}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Equilibrium { potential, grid, output } => {
            let mut c = base(RunKind::Equilibrium, PotentialSpec::parse(&potential)?, 0, output);
            c.equilibrium = Some(EquilibriumSection { grid: parse_grid(&grid)? });
            report_run(&c)?;
        }
        Command::Pde { config, potential, init, t_end, dt, grid, cells, snapshots, output } => {
            let c = match config {
                Some(path) => from_file(&path, RunKind::Pde, output)?,
                None => {
                    let spec = PotentialSpec::parse(required(&potential, "potential")?)?;
                    let init = InitSpec::parse(required(&init, "init")?)?;
                    let grid = match grid {
                        Some(g) => parse_grid(&g)?,
                        None => {
                            let l = default_half_width(&make_potential(&spec)?, &init)
                                .ok_or_else(|| Error::Config("cannot derive a domain; pass --grid".into()))?;
                            Grid::symmetric(l, cells)?
                        }
                    };
                    let mut pde = PdeConfig::new(grid, t_end, parse_snapshots(snapshots.as_deref(), t_end)?, init);
                    pde.dt = dt;
                    let mut c = base(RunKind::Pde, spec, 0, output);
                    c.pde = Some(pde);
                    c
                }
            };
            report_run(&c)?;
        }
        Command::Sde { config, potential, init, n, beta, paths, t_end, dt, seed, snapshots, output } => {
            let c = match config {
                Some(path) => from_file(&path, RunKind::Sde, output)?,
                None => {
                    let spec = PotentialSpec::parse(potential.as_deref().unwrap_or("quadratic:theta=0.5"))?;
                    let density = InitSpec::parse(init.as_deref().unwrap_or("semicircle:radius=2"))?;
                    let mut c = base(RunKind::Sde, spec, seed, output);
                    c.sde = Some(SdeSection {
                        n_particles: n,
                        beta,
                        n_paths: paths,
                        dt,
                        t_end,
                        truncation_radius: None,
                        min_gap: DEFAULT_MIN_GAP,
                        max_halvings: DEFAULT_MAX_HALVINGS,
                        snapshot_times: parse_snapshots(snapshots.as_deref(), t_end)?,
                        domain: None,
                        init: SdeInit::Quantiles { density },
                    });
                    c
                }
            };
            report_run(&c)?;
        }
        Command::Matrix { config, potential, init, n, paths, t_end, dt, seed, snapshots, no_compare, output } => {
            let c = match config {
                Some(path) => from_file(&path, RunKind::Matrix, output)?,
                None => {
                    let spec = PotentialSpec::parse(potential.as_deref().unwrap_or("quadratic:theta=0.5"))?;
                    let density = InitSpec::parse(init.as_deref().unwrap_or("semicircle:radius=2"))?;
                    let mut c = base(RunKind::Matrix, spec, seed, output);
                    c.matrix = Some(MatrixSection {
                        n,
                        n_paths: paths,
                        dt,
                        t_end,
                        snapshot_times: parse_snapshots(snapshots.as_deref(), t_end)?,
                        init: SdeInit::Quantiles { density },
                        compare: !no_compare,
                    });
                    c
                }
            };
            report_run(&c)?;
        }
        Command::Compare { run_a, run_b, metric, at } => {
            let p = match metric {
                Metric::W1 => 1.0,
                Metric::W2 => 2.0,
            };
            let report = compare_runs(&run_a, &run_b, p, at)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Verify { suite, integrity } => {
            if let Some(dir) = integrity {
                let bad = verify_integrity(&dir)?;
                for b in &bad {
                    println!("{b}");
                }
                if !bad.is_empty() {
                    return Err(Error::Verification(format!("{} file(s) do not match the run record", bad.len())));
                }
                println!("{}: all digests match", dir.display());
                return Ok(());
            }
            let checks = run_suite(suite.into(), |c| println!("{c}"));
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{}/{} criteria passed", checks.len() - failed, checks.len());
            if failed > 0 {
                return Err(Error::Verification(format!("{failed} criteria failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| std::env::var("COULOMBFLOW_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
