use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use anysched::control::ControlMode;
use anysched::estimator::{read_observations, train, write_observations, EstimationMode, Method};
use anysched::metrics::{
    estimation_report, pending_series, summarize, write_ape_table, write_completions, write_metrics, write_pending,
};
use anysched::rng::{substream, Stream};
use anysched::sim::{read_records, run, write_events, write_records, write_runtime, RunConfig};
use anysched::workload::{generate_resources, generate_scenario, generate_training, Scenario};
use anysched::Error;

#[derive(Parser)]
#[command(name = "anysched", version, about = "Online scheduling of anytime tasks with quality control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file (and optionally offline training data) from a config.
    GenWorkload {
        #[arg(long)]
        config: PathBuf,
        /// Scenario JSON to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_out: Option<PathBuf>,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Run one simulation and write records, events, metrics and runtimes.
    Simulate(SimulateArgs),
    /// Train on one observation file and report APE quantiles on another.
    EstimateEval {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "knn:7", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value = "measured")]
        mode: EstimationMode,
        #[arg(long, default_value_t = 1.0)]
        floor_ms: f64,
        /// CSV to write; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a records file into metrics and plot-ready series.
    Report {
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    /// TOML with control and estimation keys; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    control: Option<ControlMode>,
    #[arg(long)]
    estimation: Option<EstimationMode>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Seed of the scheduler's random stream; defaults to the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_quality: Option<f64>,
    #[arg(long)]
    max_iters: Option<u32>,
    /// Redraw this many resource speeds from the scenario seed.
    #[arg(long)]
    resources: Option<usize>,
    #[arg(long)]
    online_retrain: bool,
    /// Offline training observations; generated from the scenario config when omitted.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))
}

fn gen_workload(config: &Path, out: &Path, train_out: Option<&Path>, test_out: Option<&Path>) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let scenario = generate_scenario(&config.workload)?;
    scenario.write_json(create(out)?)?;
    println!("{} tasks on {} resources -> {}", scenario.tasks.len(), scenario.resources.len(), out.display());
    if train_out.is_some() || test_out.is_some() {
        let (train, test) = generate_training(&config.workload);
        for (path, obs) in [(train_out, &train), (test_out, &test)] {
            if let Some(path) = path {
                write_observations(create(path)?, obs)?;
                println!("{} observations -> {}", obs.len(), path.display());
            }
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut scenario = Scenario::read_json(open(&args.scenario)?)?;
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig { workload: scenario.config.clone(), ..Default::default() },
    };
    config.workload = scenario.config.clone();
    if let Some(c) = args.control {
        config.control.mode = c;
    }
    if let Some(e) = args.estimation {
        config.estimation = e;
    }
    if let Some(m) = args.method {
        config.method = m;
    }
    if let Some(q) = args.min_quality {
        config.control.min_quality = q;
    }
    if let Some(i) = args.max_iters {
        config.control.max_iters = i;
    }
    config.online_retrain |= args.online_retrain;
    if let Some(n) = args.resources {
        config.workload.num_resources = n;
    }
    config.validate().map_err(Error::InvalidConfig)?;
    if args.resources.is_some() {
        scenario.resources = generate_resources(&config.workload, &mut substream(config.workload.seed, Stream::Speeds));
        scenario.config.num_resources = config.workload.num_resources;
    }

    let offline = match &args.train {
        Some(path) => read_observations(open(path)?)?,
        None => generate_training(&scenario.config).0,
    };
    let mut sim = config.sim_config();
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    let output = run(&scenario, &sim, &offline)?;
    let metrics = summarize(&output.records)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_records(create(&args.out.join("records.csv"))?, &output.records)?;
    write_events(create(&args.out.join("events.csv"))?, &output.events)?;
    write_metrics(create(&args.out.join("metrics.csv"))?, &metrics)?;
    write_runtime(create(&args.out.join("runtime.csv"))?, &output.runtime)?;
    println!(
        "{} tasks, control {}, estimation {}: avg quality {:.3}, avg normalized lateness {:+.3}, max {:.3}",
        metrics.tasks,
        sim.control.mode,
        sim.estimation,
        metrics.avg_solution_quality,
        metrics.avg_normalized_lateness,
        metrics.max_normalized_lateness
    );
    Ok(())
}

fn estimate_eval(
    train_path: &Path,
    test_path: &Path,
    method: Method,
    mode: EstimationMode,
    floor_ms: f64,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let train_obs = read_observations(open(train_path)?)?;
    let test_obs = read_observations(open(test_path)?)?;
    let model = train(&train_obs, method)?;
    let table = estimation_report(&model, &test_obs, mode, floor_ms)?;
    match out {
        Some(path) => write_ape_table(create(path)?, &table)?,
        None => write_ape_table(std::io::stdout().lock(), &table)?,
    }
    Ok(())
}

fn report(records: &Path, out: &Path) -> anyhow::Result<()> {
    let records = read_records(open(records)?)?;
    if records.is_empty() {
        bail!("records file has no rows");
    }
    let metrics = summarize(&records)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_metrics(create(&out.join("metrics.csv"))?, &metrics)?;
    write_pending(create(&out.join("pending.csv"))?, &pending_series(&records))?;
    write_completions(create(&out.join("completions.csv"))?, &records)?;
    let mut stdout = std::io::stdout().lock();
    for (name, value) in metrics.rows() {
        writeln!(stdout, "{name:<32} {value}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenWorkload { config, out, train_out, test_out } => {
            gen_workload(&config, &out, train_out.as_deref(), test_out.as_deref())
        }
        Command::Simulate(args) => simulate(args),
        Command::EstimateEval { train, test, method, mode, floor_ms, out } => {
            estimate_eval(&train, &test, method, mode, floor_ms, out.as_deref())
        }
        Command::Report { records, out } => report(&records, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
