//! Experiment harness behind the `sqa` binary.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SqaError};
use crate::evolve::{
    boltzmann_from_actions, correspondence_series, imaginary_start, integrate_imaginary, integrate_master, uniform,
    EvolveOptions, Tolerance,
};
use crate::generator::{spectral_sweep, write_spectrum_csv, Generator};
use crate::lattice::{ProblemFile, SpinConfiguration, TrotterSystem};
use crate::mcmc::{estimate_tv, run_annealed, InitialState, RunSummary, SampleOptions, TvEstimate};
use crate::numeric::TimeGrid;
use crate::schedule::{check_proposition1, Proposition1Options, ScheduleSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sqa", version, about = "Simulated quantum annealing: exact checks and Monte Carlo runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gap, generator-derivative norm and adiabatic ratio over a time grid.
    Spectrum(CommonArgs),
    /// Exact master-equation and imaginary-time evolution.
    Evolve(CommonArgs),
    /// Monte Carlo sampling of the Trotter lattice.
    Sample(CommonArgs),
    /// Checks the schedule conditions for convergence.
    ScheduleCheck(CommonArgs),
    /// Final distances for several schedules on one instance.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Parent directory for the run directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "SQA_THREADS")]
    pub threads: Option<usize>,
    /// Time grid such as "log:1e-2,1e4,64"; overrides the config.
    #[arg(long)]
    pub grid: Option<TimeGrid>,
}

/// Where the problem comes from: a path (relative to the config file) or
/// the problem itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Path(PathBuf),
    Inline(ProblemFile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    #[default]
    Uniform,
    Equilibrium,
    AllUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Spectrum,
    Evolve,
    Sample,
    ScheduleCheck,
    Compare,
}

impl Mode {
    fn of(cmd: &Command) -> Self {
        match cmd {
            Command::Spectrum(_) => Mode::Spectrum,
            Command::Evolve(_) => Mode::Evolve,
            Command::Sample(_) => Mode::Sample,
            Command::ScheduleCheck(_) => Mode::ScheduleCheck,
            Command::Compare(_) => Mode::Compare,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Several horizons for `sample`; overrides `horizon`.
    #[serde(default)]
    pub horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<TimeGrid>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_one")]
    pub samples_per_replica: usize,
    #[serde(default = "default_spacing")]
    pub sample_spacing: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub start: Start,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_points")]
    pub observation_points: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Extra schedules for `compare`.
    #[serde(default)]
    pub compare: Vec<ScheduleSpec>,
    #[serde(default)]
    pub proposition: Option<Proposition1Options>,
    #[serde(default)]
    pub progress_every: Option<usize>,
}

fn default_horizon() -> f64 {
    1e4
}
fn default_replicas() -> usize {
    1000
}
fn default_one() -> usize {
    1
}
fn default_spacing() -> f64 {
    1.0
}
fn default_output() -> PathBuf {
    PathBuf::from("runs")
}
fn default_k_max() -> usize {
    3
}
fn default_points() -> usize {
    256
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-12
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SqaError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| SqaError::input(format!("config {}: {e}", path.display())))?;
        if let ProblemSource::Path(p) = &cfg.problem {
            let full = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p.clone() };
            let problem = ProblemFile::load(&full)
                .map_err(|e| SqaError::input(format!("problem file {}: {e}", full.display())))?;
            cfg.problem = ProblemSource::Inline(problem);
        }
        Ok(cfg)
    }

    pub fn problem(&self) -> Result<&ProblemFile> {
        match &self.problem {
            ProblemSource::Inline(p) => Ok(p),
            ProblemSource::Path(p) => Err(SqaError::State(format!("problem {} was not resolved", p.display()))),
        }
    }

    /// Hex SHA-256 of the canonical JSON form, leaving out where results go
    /// and how progress is reported.
    pub fn hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("progress_every");
        }
        let text = serde_json::to_string(&value)?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn grid(&self) -> Result<Vec<f64>> {
        let grid = self.grid.clone().unwrap_or(TimeGrid::Log { t0: 1e-2, t1: self.horizon, n: 64 });
        grid.validate()?;
        Ok(grid.points())
    }

    fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            tolerance: Tolerance { rtol: self.rtol, atol: self.atol },
            observation_points: self.observation_points,
            times: None,
            track_spectrum: true,
            k_max: self.k_max,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(SqaError::input("horizon must be positive"));
        }
        if let Some(h) = &self.horizons {
            if h.is_empty() || h.iter().any(|&x| !(x >= 0.0)) {
                return Err(SqaError::input("horizons must be a non-empty list of non-negative times"));
            }
        }
        Ok(())
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("output: {}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &SqaError) -> i32 {
    match e {
        SqaError::ResourceCap { .. } => EXIT_RESOURCE,
        SqaError::Input(_) | SqaError::Domain(_) | SqaError::Json(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn common(cmd: &Command) -> &CommonArgs {
    match cmd {
        Command::Spectrum(a) | Command::Evolve(a) | Command::Sample(a) | Command::ScheduleCheck(a) | Command::Compare(a) => a,
    }
}

/// Resolves the configuration, creates the run directory and dispatches.
/// Returns the run directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let args = common(&cli.command);
    let mode = Mode::of(&cli.command);
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(g) = &args.grid {
        cfg.grid = Some(g.clone());
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.mode = Some(mode);
    cfg.validate()?;
    if let Some(n) = args.threads {
        // a pool that already exists (e.g. in tests) is left alone
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let hash = cfg.hash()?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let dir = cfg.output_dir.join(format!("{stamp}-{}", &hash[..12]));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    match mode {
        Mode::Spectrum => cmd_spectrum(&cfg, &dir)?,
        Mode::Evolve => cmd_evolve(&cfg, &dir, &hash)?,
        Mode::Sample => cmd_sample(&cfg, &dir, &hash)?,
        Mode::ScheduleCheck => cmd_schedule_check(&cfg, &dir)?,
        Mode::Compare => cmd_compare(&cfg, &dir, &hash)?,
    }
    Ok(dir)
}

fn create(path: PathBuf) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let sys = cfg.problem()?.system()?;
    let schedule = cfg.schedule.bind(&sys)?;
    let reports = spectral_sweep(&sys, &schedule, &cfg.grid()?)?;
    write_spectrum_csv(&reports, create(dir.join("spectrum.csv"))?)?;
    let worst = reports.iter().min_by(|a, b| a.bound_margin.total_cmp(&b.bound_margin));
    if let Some(w) = worst {
        println!("b = {} (coordination number)", w.b);
        println!("worst bound margin {:.6e} at t = {:.6e}", w.bound_margin, w.t);
    }
    let violations: Vec<_> = reports.iter().filter(|r| r.bound_margin < 0.0).collect();
    if let Some(b) = violations.iter().filter_map(|r| r.restoring_b).max() {
        println!("norm bound violated at {} points; smallest restoring b = {b}", violations.len());
    }
    let q_min = reports.iter().map(|r| r.q).fold(f64::INFINITY, f64::min);
    println!("min q = {q_min:.6}");
    Ok(())
}

fn initial_distribution(cfg: &ExperimentConfig, gen: &Generator, gamma0: f64, n: usize, m: usize) -> Vec<f64> {
    match cfg.start {
        Start::Uniform => uniform(gen.dim()),
        Start::Equilibrium => boltzmann_from_actions(&gen.table().actions(gamma0)),
        Start::AllUp => {
            let mut p = vec![0.0; gen.dim()];
            p[SpinConfiguration::all_up(n, m).to_index()] = 1.0;
            p
        }
    }
}

#[derive(Serialize)]
struct EvolveMeta<'a> {
    config_hash: &'a str,
    schedule: String,
    horizon: f64,
    final_tv_inst: f64,
    final_tv_final: f64,
    max_correspondence_deviation: f64,
    master: crate::evolve::IntegrationStats,
    imaginary: crate::evolve::IntegrationStats,
}

pub fn cmd_evolve(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<()> {
    let sys = cfg.problem()?.system()?;
    let schedule = cfg.schedule.bind(&sys)?;
    let gen = Generator::new(&sys)?;
    let opts = cfg.evolve_options();
    let p0 = initial_distribution(cfg, &gen, schedule.eval(0.0)?.gamma, sys.n_sites(), sys.trotter_slices());
    let master = integrate_master(&gen, &schedule, &p0, cfg.horizon, &opts)?;
    let phi0 = imaginary_start(&gen, &schedule, &p0)?;
    let imaginary = integrate_imaginary(&gen, &schedule, &phi0, cfg.horizon, &opts)?;
    let dev = correspondence_series(&gen, &master, &imaginary)?;
    master.write_csv(create(dir.join("trace_master.csv"))?)?;
    imaginary.write_csv(create(dir.join("trace_imaginary.csv"))?)?;
    {
        use std::io::Write;
        let mut out = create(dir.join("correspondence.csv"))?;
        writeln!(out, "# schema: sqa.correspondence/1")?;
        writeln!(out, "t,deviation")?;
        for (t, d) in master.times.iter().zip(&dev) {
            writeln!(out, "{t:e},{d:e}")?;
        }
    }
    let max_dev = dev.iter().copied().fold(0.0, f64::max);
    let meta = EvolveMeta {
        config_hash: hash,
        schedule: cfg.schedule.label(),
        horizon: cfg.horizon,
        final_tv_inst: master.final_tv_inst(),
        final_tv_final: master.tv_final.last().copied().unwrap_or(f64::NAN),
        max_correspondence_deviation: max_dev,
        master: master.stats,
        imaginary: imaginary.stats,
    };
    fs::write(dir.join("evolve.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("final tv to instantaneous equilibrium {:.6e}", meta.final_tv_inst);
    println!("max correspondence deviation {max_dev:.3e}");
    Ok(())
}

#[derive(Serialize)]
struct SampleOutput<'a> {
    config_hash: &'a str,
    seed: u64,
    schedule: String,
    runs: Vec<SampleRun>,
}

#[derive(Serialize)]
struct SampleRun {
    #[serde(flatten)]
    summary: RunSummary,
    /// TV to the equilibrium distribution at the horizon, when exact data exists.
    tv_to_equilibrium: Option<TvEstimate>,
}

pub fn cmd_sample(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<()> {
    let problem = cfg.problem()?;
    let sys = problem.sampling_system()?;
    let schedule = cfg.schedule.bind(&sys)?;
    let initial = match cfg.start {
        Start::Uniform => InitialState::Uniform,
        Start::AllUp => InitialState::AllUp,
        Start::Equilibrium => return Err(SqaError::input("the sampler supports start = uniform or all_up")),
    };
    let horizons = cfg.horizons.clone().unwrap_or_else(|| vec![cfg.horizon]);
    let exact_sys: Option<TrotterSystem> = problem.system().ok();
    let gen = exact_sys.as_ref().map(Generator::new).transpose()?;
    let mut runs = Vec::new();
    for &h in &horizons {
        let opts = SampleOptions {
            horizon: h,
            replicas: cfg.replicas,
            seed: cfg.seed,
            samples_per_replica: cfg.samples_per_replica,
            sample_spacing: cfg.sample_spacing,
            initial,
            progress_every: cfg.progress_every,
        };
        let summary = run_annealed(&sys, &schedule, &opts)?;
        let tv = match &gen {
            Some(g) if summary.empirical_distribution.is_some() => {
                let exact = boltzmann_from_actions(&g.table().actions(schedule.eval(h)?.gamma));
                Some(estimate_tv(&summary, &exact)?)
            }
            _ => None,
        };
        runs.push(SampleRun { summary, tv_to_equilibrium: tv });
    }
    if let Some(last) = runs.last() {
        if last.summary.empirical_distribution.is_some() {
            last.summary.write_histogram_csv(create(dir.join("histogram.csv"))?)?;
        }
    }
    {
        use std::io::Write;
        let mut out = create(dir.join("hit_rates.csv"))?;
        writeln!(out, "# schema: sqa.hit_rates/1")?;
        writeln!(out, "horizon,ground_hit_rate,tv_to_equilibrium")?;
        for r in &runs {
            let hit = r.summary.ground_hit_rate.map_or("nan".into(), |x| format!("{x:e}"));
            let tv = r.tv_to_equilibrium.map_or("nan".into(), |x| format!("{:e}", x.tv));
            writeln!(out, "{:e},{hit},{tv}", r.summary.horizon)?;
        }
    }
    for r in &runs {
        println!(
            "horizon {:e}: ground hit rate {}, tv {}",
            r.summary.horizon,
            r.summary.ground_hit_rate.map_or("n/a".into(), |x| format!("{x:.4}")),
            r.tv_to_equilibrium.map_or("n/a".into(), |x| format!("{:.4} ± {:.4}", x.tv, x.standard_error))
        );
    }
    let out = SampleOutput { config_hash: hash, seed: cfg.seed, schedule: cfg.schedule.label(), runs };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

pub fn cmd_schedule_check(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let sys = cfg.problem()?.sampling_system()?;
    let schedule = cfg.schedule.bind(&sys)?;
    let mut opts = cfg.proposition.clone().unwrap_or_default();
    if opts.grid.is_none() {
        if let Some(g) = &cfg.grid {
            opts.grid = Some(g.points());
        }
    }
    let report = check_proposition1(&schedule, &sys, &opts)?;
    fs::write(dir.join("proposition.json"), serde_json::to_string_pretty(&report)?)?;
    for (name, c) in [("condition 1", &report.condition1), ("condition 2", &report.condition2), ("condition 3", &report.condition3)] {
        println!("{name}: {} (worst margin {:.3e} at t = {:.3e})", if c.ok { "ok" } else { "FAILS" }, c.worst_margin, c.worst_time);
    }
    Ok(())
}

pub fn cmd_compare(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<()> {
    use std::io::Write;
    let sys = cfg.problem()?.system()?;
    let gen = Generator::new(&sys)?;
    let opts = EvolveOptions { track_spectrum: false, ..cfg.evolve_options() };
    let mut specs = vec![cfg.schedule.clone()];
    specs.extend(cfg.compare.iter().cloned());
    let mut out = create(dir.join("compare.csv"))?;
    writeln!(out, "# schema: sqa.compare/1")?;
    writeln!(out, "# config_hash: {hash}")?;
    writeln!(out, "index,schedule,final_tv_inst,final_tv_final,ratio_to_first")?;
    let mut first = None;
    for (i, spec) in specs.iter().enumerate() {
        let schedule = spec.bind(&sys)?;
        let p0 = initial_distribution(cfg, &gen, schedule.eval(0.0)?.gamma, sys.n_sites(), sys.trotter_slices());
        let tr = integrate_master(&gen, &schedule, &p0, cfg.horizon, &opts)?;
        tr.write_csv(create(dir.join(format!("trace_{i}.csv")))?)?;
        let tv = tr.final_tv_inst();
        let base = *first.get_or_insert(tv);
        writeln!(out, "{i},\"{}\",{tv:e},{:e},{:e}", spec.label(), tr.tv_final.last().copied().unwrap_or(f64::NAN), tv / base)?;
        println!("{}: final tv {tv:.6e}", spec.label());
    }
    Ok(())
}
