use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use streambench::bench::{
    parse_grid, run_bench, tune_grid, write_summary, write_synthetic, BenchConfig, ClassifierParams, DatasetSpec,
    DriftSetting, FeaturePipeline, Outputs,
};
use streambench::features::WINDOW_SIZE;
use streambench::{par, Error, Execution};

#[derive(Parser)]
#[command(name = "streambench", version, about = "Prequential benchmarks for memory-constrained stream classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repetitions of one classifier on one dataset.
    Run(RunArgs),
    /// Grid-search classifier parameters by mean final macro-F1.
    Tune {
        #[command(flatten)]
        run: RunArgs,
        /// Grid as `key=v1,v2;key2=v3,...`.
        #[arg(long)]
        grid: String,
        /// CSV with one row per grid point.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as a feature CSV.
    Gen {
        /// Synthetic id such as `synth:randomtree,seed=1,n=200000`.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `synth:<hyperplane|randomrbf|randomtree>[,seed=N,n=N,...]` or a CSV path.
    #[arg(long)]
    dataset: String,
    /// nb, ht, mf, mcnn-origin, mcnn-orpaillecc, fnn, empty or knn-offline.
    #[arg(long)]
    classifier: String,
    /// Classifier parameters as `key=value,...`.
    #[arg(long, default_value = "")]
    params: String,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Repetition r uses seed `seed + r`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Shuffle the stream order per repetition.
    #[arg(long)]
    shuffle: bool,
    /// Label-shift drift: `midpoint`, `<position>` or `<position>:<shift>`.
    #[arg(long)]
    drift: Option<String>,
    /// Windowing for raw sample files: none, meanstd or histogram.
    #[arg(long, default_value = "none")]
    features: String,
    #[arg(long, default_value_t = WINDOW_SIZE)]
    window: usize,
    /// Record wall-clock runtimes (makes outputs run-dependent).
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value_t = 50)]
    report_every: usize,
    /// Run repetitions one after another.
    #[arg(long)]
    sequential: bool,
    /// Worker cap; overrides STREAMBENCH_THREADS.
    #[arg(long, env = "STREAMBENCH_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    timeline_out: Option<PathBuf>,
    /// Summary CSV; printed to stdout when absent.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Per-checkpoint means across repetitions.
    #[arg(long)]
    mean_out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> streambench::Result<BenchConfig> {
        let dataset = DatasetSpec::parse(&self.dataset)?;
        let classifier = ClassifierParams::parse(&self.classifier, &self.params)?;
        let mut cfg = BenchConfig::new(dataset, classifier);
        cfg.reps = self.reps;
        cfg.base_seed = self.seed;
        cfg.shuffle = self.shuffle;
        cfg.drift = self.drift.as_deref().map(DriftSetting::parse).transpose()?;
        cfg.pipeline = FeaturePipeline::parse(&self.features)?;
        cfg.window = self.window;
        cfg.timing = self.timing;
        cfg.report_every = self.report_every;
        cfg.execution = if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        };
        cfg.outputs = Outputs {
            timeline: self.timeline_out.clone(),
            summary: self.summary_out.clone(),
            mean_timeline: self.mean_out.clone(),
        };
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let outcome = par::with_threads(args.threads, || run_bench(&cfg))?;
            if args.summary_out.is_none() {
                write_summary(std::io::stdout().lock(), std::slice::from_ref(&outcome.summary))?;
            }
        }
        Command::Tune { run, grid, grid_out } => {
            let cfg = run.config()?;
            let axes = parse_grid(&grid)?;
            let outcome = par::with_threads(run.threads, || tune_grid(&cfg, &axes, grid_out.as_deref()))?;
            let (point, mean, _) = &outcome.results[outcome.best_index];
            let assignments: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mut out = std::io::stdout().lock();
            writeln!(out, "best {} final_f1_mean={mean}", assignments.join(","))?;
        }
        Command::Gen { dataset, out } => {
            let DatasetSpec::Synthetic(spec) = DatasetSpec::parse(&dataset)? else {
                return Err(Error::Usage(format!("`{dataset}` is not a synthetic dataset id")).into());
            };
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_synthetic(std::io::BufWriter::new(file), &spec)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Usage(_) | Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
