//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::environment::{self, overlap, Environment, CONTAINMENT_TOL};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::plot::{render_svg, PlotTrace};
use crate::simulator::{self, safety_margin, Integrator, SimConfig, TrajectoryLog};
use crate::synthesis::{
    synthesize, synthesize_decomposed, AgentSystem, CellGain, GainLibrary, RateMode,
    SynthesisConfig,
};

const FIGURE8: &str = include_str!("../assets/figure8_10cells.json");

/// Output slack allowed for reported safety and switch checks.
const REPORT_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "polytrack", version, about = "Per-cell tracking controllers with barrier certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an environment file and print every finding.
    Validate { env: PathBuf },
    /// Synthesize one gain per cell and write a gain library.
    Synthesize(SynthesizeArgs),
    /// Simulate the switched closed loop and write one CSV per run.
    Simulate(SimulateArgs),
    /// Draw an environment and simulated runs as SVG.
    Plot {
        env: PathBuf,
        logs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the whole pipeline on the bundled figure-8 environment.
    Demo {
        #[arg(short, long, default_value = "demo-out")]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Paper,
    Exponential,
}

impl From<ModeArg> for RateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => RateMode::Paper,
            ModeArg::Exponential => RateMode::Exponential,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Rk4,
    Euler,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    pub env: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 50.0)]
    pub kmax: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Exponential)]
    pub mode: ModeArg,
    /// Solve one scalar problem per axis and compose the gains.
    #[arg(long)]
    pub per_axis: bool,
    /// Seconds per unit of spline parameter.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub env: PathBuf,
    pub gains: PathBuf,
    #[arg(short, long, default_value = "runs")]
    pub output: PathBuf,
    /// Number of random initial states, assigned to cells round-robin.
    #[arg(long, default_value_t = 1)]
    pub inits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_var: f64,
    /// Explicit initial state, comma separated; overrides --inits.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Rk4)]
    pub integrator: IntegratorArg,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Schema { .. } => 2,
        _ => 1,
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Validate { env } => cmd_validate(env),
        Command::Synthesize(args) => cmd_synthesize(args),
        Command::Simulate(args) => cmd_simulate(args).map(|s| if s.ok { 0 } else { 1 }),
        Command::Plot { env, logs, output } => cmd_plot(env, logs, output).map(|_| 0),
        Command::Demo { output, seed } => cmd_demo(output, *seed).map(|_| 0),
    }
}

pub fn cmd_validate(path: &Path) -> Result<i32> {
    let env = environment::load(path)?;
    let report = env.validate();
    if report.is_empty() {
        println!("{}: {} cells, no findings", path.display(), env.cells().len());
        Ok(0)
    } else {
        print!("{report}");
        Ok(1)
    }
}

fn synthesis_config(args: &SynthesizeArgs) -> SynthesisConfig {
    SynthesisConfig {
        alpha: args.alpha,
        delta: args.delta,
        k_max: args.kmax,
        mode: args.mode.into(),
        time_scale: args.time_scale,
        ..SynthesisConfig::default()
    }
}

/// Gains for every cell of `env` with a single integrator per axis.
pub fn synthesize_library(env: &Environment, config: &SynthesisConfig, per_axis: bool) -> Result<GainLibrary> {
    let agent = AgentSystem::single_integrator(env.dimension());
    let mut library = GainLibrary::new(agent.clone());
    for cell in env.cells() {
        let (gain, cert) = if per_axis {
            let d = synthesize_decomposed(cell, &agent, config)?;
            (d.gain, d.certificate)
        } else {
            synthesize(cell, &agent, config)?
        };
        library.insert(CellGain::new(gain, &cert, config));
    }
    Ok(library)
}

pub fn cmd_synthesize(args: &SynthesizeArgs) -> Result<i32> {
    let env = environment::load(&args.env)?;
    let report = env.validate();
    if !report.is_empty() {
        print!("{report}");
        return Ok(1);
    }
    let config = synthesis_config(args);
    let library = synthesize_library(&env, &config, args.per_axis)?;
    for c in &library.cells {
        println!(
            "{}: mu = {:.6} ({}), max |K| = {:.3}, certificate {}",
            c.cell,
            c.mu,
            c.mode,
            c.gain.max_abs(),
            if c.certificate.passed { "passed" } else { "FAILED" }
        );
    }
    library.save(&args.output)?;
    Ok(if library.cells.iter().all(|c| c.certificate.passed) { 0 } else { 1 })
}

#[derive(Debug, Clone, Serialize)]
pub struct SwitchSummary {
    pub t: f64,
    pub from: String,
    pub to: String,
    pub x: Vec<f64>,
    pub in_overlap: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub csv: String,
    pub x0: Vec<f64>,
    pub initial_cell: String,
    pub final_error: f64,
    pub min_h: f64,
    pub min_h_per_cell: Vec<(String, f64)>,
    pub duration: f64,
    pub steps: usize,
    pub switches: Vec<SwitchSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub noise_variance: f64,
    pub seed: u64,
    pub runs: Vec<RunSummary>,
    pub min_h: f64,
    pub max_final_error: f64,
    pub all_switches_in_overlap: bool,
    /// Noise-free runs must stay inside their cells; noisy runs only report.
    pub ok: bool,
}

/// Uniform sample from the interior of cell `index` by rejection, limited to
/// points where that cell is the one a run starts in.
pub fn sample_initial_state(env: &Environment, index: usize, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let poly = &env.cells()[index].polytope;
    let (lo, hi) = poly.bounding_box()?;
    for _ in 0..100_000 {
        let x = DVector::from_fn(lo.len(), |k, _| rng.random_range(lo[k]..=hi[k]));
        if poly.slacks(&x).min() > 1e-6 && env.locate(&x, CONTAINMENT_TOL)? == Some(index) {
            return Ok(x);
        }
    }
    Err(Error::Domain(format!(
        "could not sample the interior of cell {}",
        env.cells()[index].id
    )))
}

fn run_seed(seed: u64, run: usize) -> u64 {
    seed ^ (run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Simulate from each initial state, write CSVs into `out_dir`, and summarize.
pub fn simulate_runs(
    env: &Environment,
    library: &GainLibrary,
    initial: &[DVector<f64>],
    base: &SimConfig,
    out_dir: &Path,
) -> Result<(SimulationSummary, Vec<TrajectoryLog>)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut runs = Vec::with_capacity(initial.len());
    let mut logs = Vec::with_capacity(initial.len());
    for (i, x0) in initial.iter().enumerate() {
        let config = SimConfig {
            seed: run_seed(base.seed, i),
            ..*base
        };
        let log = simulator::run(env, library, x0, &config)?;
        let name = format!("run_{i:03}.csv");
        log.write_csv(out_dir.join(&name))?;
        let switches = log
            .switches
            .iter()
            .map(|s| {
                let ov = overlap(&env.cells()[s.from], &env.cells()[s.to])?;
                Ok(SwitchSummary {
                    t: s.t,
                    from: env.cells()[s.from].id.clone(),
                    to: env.cells()[s.to].id.clone(),
                    x: s.x.iter().copied().collect(),
                    in_overlap: ov.contains(&s.x, REPORT_TOL)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        runs.push(RunSummary {
            csv: name,
            x0: x0.iter().copied().collect(),
            initial_cell: env.cells()[log.initial_cell()].id.clone(),
            final_error: log.final_error(&library.agent.c),
            min_h: log.min_h(),
            min_h_per_cell: safety_margin(&log, env),
            duration: log.last().t,
            steps: log.records.len() - 1,
            switches,
        });
        logs.push(log);
    }
    let min_h = runs.iter().map(|r| r.min_h).fold(f64::INFINITY, f64::min);
    let max_final_error = runs.iter().map(|r| r.final_error).fold(0.0, f64::max);
    let all_switches_in_overlap = runs.iter().all(|r| r.switches.iter().all(|s| s.in_overlap));
    let ok = base.noise_variance > 0.0 || (min_h >= -REPORT_TOL && all_switches_in_overlap);
    let summary = SimulationSummary {
        noise_variance: base.noise_variance,
        seed: base.seed,
        runs,
        min_h,
        max_final_error,
        all_switches_in_overlap,
        ok,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_atomic(&out_dir.join("summary.json"), text.as_bytes())?;
    Ok((summary, logs))
}

/// `count` initial states, cell `i % n` in chain order for run `i`.
pub fn random_initial_states(env: &Environment, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let order = env.chain_order()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| sample_initial_state(env, order[i % order.len()], &mut rng))
        .collect()
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulationSummary> {
    let env = environment::load(&args.env)?;
    let library = GainLibrary::load(&args.gains)?;
    let time_scale = library.cells.first().map_or(1.0, |c| c.time_scale);
    let config = SimConfig {
        dt: args.dt,
        time_scale,
        noise_variance: args.noise_var,
        seed: args.seed,
        integrator: match args.integrator {
            IntegratorArg::Rk4 => Integrator::Rk4,
            IntegratorArg::Euler => Integrator::Euler,
        },
        ..SimConfig::default()
    };
    let initial = match &args.x0 {
        Some(v) => vec![DVector::from_vec(v.clone())],
        None => random_initial_states(&env, args.inits, args.seed)?,
    };
    let (summary, _) = simulate_runs(&env, &library, &initial, &config, &args.output)?;
    println!(
        "{} runs: min h = {:.6}, max final error = {:.3e}, switches in overlap: {}",
        summary.runs.len(),
        summary.min_h,
        summary.max_final_error,
        summary.all_switches_in_overlap
    );
    Ok(summary)
}

pub fn cmd_plot(env_path: &Path, logs: &[PathBuf], output: &Path) -> Result<()> {
    let env = environment::load(env_path)?;
    let traces = logs
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            PlotTrace::from_csv(&text)
        })
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(&env, &traces)?;
    write_atomic(output, svg.as_bytes())
}

/// The bundled figure-8 environment.
pub fn figure8_environment() -> Environment {
    environment::from_json_str(FIGURE8).expect("bundled asset parses")
}

pub fn cmd_demo(out: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let env = figure8_environment();
    let report = env.validate();
    if !report.is_empty() {
        return Err(Error::Domain(format!("bundled environment is invalid:\n{report}")));
    }
    environment::save(&env, out.join("environment.json"))?;

    let config = SynthesisConfig::default();
    let library = synthesize_library(&env, &config, false)?;
    if let Some(bad) = library.cells.iter().find(|c| !c.certificate.passed) {
        return Err(Error::Infeasible {
            cell: bad.cell.clone(),
            diagnosis: "certificate failed".into(),
        });
    }
    library.save(out.join("gains.json"))?;

    let initial = random_initial_states(&env, env.cells().len(), seed)?;
    let mut manifest = Vec::new();
    for (name, variance) in [("clean", 0.0), ("noisy", 0.25)] {
        let sim = SimConfig {
            noise_variance: variance,
            seed,
            ..SimConfig::default()
        };
        let dir = out.join(name);
        let (summary, logs) = simulate_runs(&env, &library, &initial, &sim, &dir)?;
        let traces = logs.iter().map(PlotTrace::from_log).collect::<Result<Vec<_>>>()?;
        let svg_name = format!("{name}.svg");
        write_atomic(&out.join(&svg_name), render_svg(&env, &traces)?.as_bytes())?;
        println!(
            "{name}: {} runs, min h = {:.6}, max final error = {:.3e}",
            summary.runs.len(),
            summary.min_h,
            summary.max_final_error
        );
        manifest.push(json!({
            "name": name,
            "noise_variance": variance,
            "plot": svg_name,
            "runs": summary.runs.iter().map(|r| format!("{name}/{}", r.csv)).collect::<Vec<_>>(),
            "summary": format!("{name}/summary.json"),
            "min_h": summary.min_h,
            "max_final_error": summary.max_final_error,
        }));
    }
    let manifest = json!({
        "environment": "environment.json",
        "gains": "gains.json",
        "seed": seed,
        "synthesis": {
            "alpha": config.alpha,
            "delta": config.delta,
            "k_max": config.k_max,
            "mode": config.mode,
            "time_scale": config.time_scale,
        },
        "simulations": manifest,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&out.join("manifest.json"), text.as_bytes())
}
