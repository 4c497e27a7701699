use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tsnorm::data::{write_synthetic_corpus, SyntheticSpec};
use tsnorm::harness::{
    render_csv, render_markdown, run_plan, ExperimentPlan, RunOptions, RunReport, VariantRecord,
};
use tsnorm::Dataset;

/// Environment variable that overrides the plan seed (a `--seed` flag wins).
const SEED_ENV: &str = "TSNORM_SEED";

#[derive(Parser)]
#[command(name = "tsnorm", version, about = "Normalization benchmark for multi-scale time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-scale corpus as CSV files plus manifest.json.
    Synth {
        /// JSON generator settings; defaults apply to omitted fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write into a non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Train and evaluate every variant of an experiment plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Validate the plan and list the variants without training.
        #[arg(long)]
        dry_run: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Discard results of an earlier run in the same directory.
        #[arg(long)]
        force: bool,
    },
    /// Render a report.json as a table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] tsnorm::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use tsnorm::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                E::Io { .. } | E::Csv { .. } => 4,
                E::Diverged { .. } | E::SourceExhausted { .. } => 3,
                _ => 2,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = io(path, fs::read_to_string(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(tsnorm::Error::from)?;
    io(path, fs::write(path, text))
}

fn is_empty_dir(dir: &Path) -> Result<bool> {
    if !dir.exists() {
        return Ok(true);
    }
    Ok(io(dir, fs::read_dir(dir))?.next().is_none())
}

fn synth(spec: Option<&Path>, out: &Path, seed: Option<u64>, force: bool) -> Result<()> {
    let mut spec: SyntheticSpec = match spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if !force && !is_empty_dir(out)? {
        return Err(CliError::Usage(format!(
            "{} is not empty; pass --force to overwrite",
            out.display()
        )));
    }
    io(out, fs::create_dir_all(out))?;
    let m = write_synthetic_corpus(&spec, out)?;
    println!("wrote {} datasets to {}", m.datasets.len(), out.display());
    Ok(())
}

/// Index of a run directory, rewritten after every completed variant.
#[derive(Serialize, Deserialize, PartialEq)]
struct RunManifest {
    version: String,
    plan: ExperimentPlan,
    variants: Vec<String>,
    completed: Vec<String>,
}

struct RunArgs<'a> {
    plan: &'a Path,
    out: &'a Path,
    dry_run: bool,
    jobs: usize,
    steps: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    force: bool,
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn run(args: RunArgs<'_>) -> Result<()> {
    let mut plan: ExperimentPlan = read_json(args.plan)?;
    if let Some(s) = args.steps {
        plan.train.steps = s;
    }
    if let Some(lr) = args.lr {
        plan.train.lr = lr;
    }
    if let Some(seed) = resolve_seed(args.seed)? {
        plan.seed = seed;
    }
    let base = args.plan.parent().unwrap_or(Path::new("."));
    let loaded: Vec<Dataset<f64>> = plan.data.load(plan.seed, base)?;
    let corpus = plan.select(&loaded)?;
    plan.validate(&corpus)?;
    let variants = plan.variants();

    if args.dry_run {
        println!(
            "plan is valid: {} datasets, {} variants",
            corpus.len(),
            variants.len()
        );
        for v in &variants {
            println!("  {}", v.id());
        }
        return Ok(());
    }

    let out = args.out;
    let ledger = out.join("variants");
    let manifest_path = out.join("manifest.json");
    if args.force && out.exists() {
        for sub in ["variants", "checkpoints", "traces"] {
            let p = out.join(sub);
            if p.exists() {
                io(&p, fs::remove_dir_all(&p))?;
            }
        }
        for file in ["manifest.json", "report.json", "report.md"] {
            let p = out.join(file);
            if p.exists() {
                io(&p, fs::remove_file(&p))?;
            }
        }
    }
    let mut completed = BTreeSet::new();
    if manifest_path.exists() {
        let prev: RunManifest = read_json(&manifest_path)?;
        if prev.plan != plan {
            return Err(CliError::Usage(format!(
                "{} holds a run of a different plan; pass --force to start over",
                out.display()
            )));
        }
    }
    for dir in ["variants", "checkpoints", "traces"] {
        io(out, fs::create_dir_all(out.join(dir)))?;
    }
    let mut records = Vec::new();
    for v in &variants {
        let path = ledger.join(format!("{}.json", v.id()));
        if path.exists() {
            let rec: VariantRecord = read_json(&path)?;
            completed.insert(v.id());
            records.push(rec);
        }
    }
    if !completed.is_empty() {
        log::info!("resuming: {} of {} variants already done", completed.len(), variants.len());
    }

    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        plan: plan.clone(),
        variants: variants.iter().map(|v| v.id()).collect(),
        completed: completed.iter().cloned().collect(),
    };
    write_json(&manifest_path, &manifest)?;

    let opts = RunOptions {
        jobs: args.jobs,
        skip: completed,
    };
    let total = variants.len();
    let outcome = run_plan(&plan, &corpus, &opts, |o| {
        let id = o.record.variant.id();
        write_json(&out.join("checkpoints").join(format!("{id}.json")), &o.model)
            .map_err(into_core)?;
        let trace_path = out.join("traces").join(format!("{id}.csv"));
        let file = fs::File::create(&trace_path).map_err(|e| tsnorm::Error::Io {
            path: trace_path.clone(),
            source: e,
        })?;
        o.trace.write_csv(file).map_err(|source| tsnorm::Error::Csv {
            path: trace_path.clone(),
            source,
        })?;
        write_json(&ledger.join(format!("{id}.json")), &o.record).map_err(into_core)?;
        manifest.completed.push(id.clone());
        manifest.completed.sort();
        write_json(&manifest_path, &manifest).map_err(into_core)?;
        log::info!("[{}/{}] {id}", manifest.completed.len(), total);
        records.push(o.record);
        Ok(())
    });
    outcome?;

    let report = RunReport::build(&plan, records)?;
    report.write(&out.join("report.json"))?;
    let md = render_markdown(&report.eval_report());
    let md_path = out.join("report.md");
    io(&md_path, fs::write(&md_path, &md))?;
    print!("{md}");
    Ok(())
}

/// The run sink reports through the library error type.
fn into_core(e: CliError) -> tsnorm::Error {
    match e {
        CliError::Core(e) => e,
        CliError::Io { path, source } => tsnorm::Error::Io { path, source },
        CliError::Usage(m) => tsnorm::Error::BadSpec(m),
    }
}

fn report(input: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let r = RunReport::read(input)?.eval_report();
    let text = match format {
        Format::Md => render_markdown(&r),
        Format::Csv => render_csv(&r)?,
    };
    match out {
        Some(p) => io(p, fs::write(p, text)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Synth { spec, out, seed, force } => synth(spec.as_deref(), out, *seed, *force),
        Command::Run {
            plan,
            out,
            dry_run,
            jobs,
            steps,
            lr,
            seed,
            force,
        } => run(RunArgs {
            plan,
            out,
            dry_run: *dry_run,
            jobs: *jobs,
            steps: *steps,
            lr: *lr,
            seed: *seed,
            force: *force,
        }),
        Command::Report { input, format, out } => report(input, *format, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
