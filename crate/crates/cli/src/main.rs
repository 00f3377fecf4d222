use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use takeaway_core::inference::SolverChoice;
use takeaway_core::model::{deserialize_graph, serialize_graph, GraphFormat};
use takeaway_core::pipeline::{
    cmd_analyze, cmd_eval, cmd_run, cmd_stage, topic_table, write_atomic, Pipeline,
    PipelineConfig, PipelineError, StageInputs, StageName,
};

#[derive(Parser)]
#[command(name = "takeaway", version, about = "Takeaway extraction, argument graphs and trust verdicts for health-video transcripts")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigFlags {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override any config value, e.g. `--set potentials.beta=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Inference solver: auto, exact or ad3.
    #[arg(long)]
    solver: Option<SolverChoice>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Transcripts processed in parallel.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Disable the on-disk LLM response cache.
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl ConfigFlags {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut config = match &self.config {
            Some(p) => PipelineConfig::load(p, &self.overrides)?,
            None => {
                let mut c = PipelineConfig::from_toml_str("", &self.overrides)?;
                c.resolve_paths(Path::new("."));
                c
            }
        };
        if let Some(s) = self.solver {
            config.solver.choice = s;
        }
        if let Some(b) = self.beta {
            config.potentials.beta = b;
        }
        if let Some(g) = self.gamma {
            config.potentials.gamma = g;
        }
        if let Some(n) = self.concurrency {
            config.concurrency_limit = n;
        }
        if self.no_cache {
            config.cache_enabled = false;
        }
        if let Some(d) = &self.cache_dir {
            config.cache_dir = d.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a JSON-lines transcript file.
    Run {
        #[arg(long, short = 'i')]
        input: PathBuf,
        #[arg(long, short = 'o')]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Run one stage on files produced by earlier stages.
    Stage {
        /// takeaway, segment, roles, claims, graph, evidence, infer or verdict.
        name: StageName,
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        takeaway: Option<PathBuf>,
        #[arg(long)]
        statements: Option<PathBuf>,
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        trust: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Macro-F1 report for one or two prediction files against gold labels.
    ///
    /// With two systems, also reports a one-sided paired bootstrap p-value:
    /// the share of resamples in which A's macro-F1 is not above B's.
    Eval {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: Option<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        /// Directory for report.json and report.txt.
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
    },
    /// Correlate trust with engagement and rhetorical-role proportions.
    Analyze {
        /// A run's summary.json, or JSON lines with transcript_id and trust.
        #[arg(long)]
        summaries: PathBuf,
        /// JSON lines with transcript_id, followers, plays, topics, statement_roles.
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// Convert a graph JSON file to Graphviz DOT.
    ExportDot {
        graph: PathBuf,
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map(PipelineError::exit_code)
                .unwrap_or(2);
            ExitCode::from(code as u8)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run { input, out, cfg } => {
            let pipeline = Pipeline::from_config(cfg.load()?)?;
            let summary = cmd_run(&pipeline, &input, &out)?;
            println!(
                "{} transcripts: {} ok, {} skipped, {} failed -> {}",
                summary.total,
                summary.ok,
                summary.skipped,
                summary.failed,
                out.join("summary.json").display()
            );
            Ok(summary.exit_code() as u8)
        }
        Command::Stage {
            name,
            transcript,
            takeaway,
            statements,
            claims,
            graph,
            trust,
            out,
            cfg,
        } => {
            let inputs = StageInputs {
                transcript,
                takeaway,
                statements,
                claims,
                graph,
                trust,
                solver: cfg.solver,
            };
            let value = cmd_stage(name, &inputs, &cfg.load()?)?;
            let mut text = serde_json::to_string_pretty(&value)?;
            text.push('\n');
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Eval {
            pred_a,
            pred_b,
            gold,
            seed,
            iterations,
            out,
        } => {
            let report = cmd_eval(&pred_a, pred_b.as_deref(), &gold, seed, iterations)?;
            print!("{}", report.table);
            if let Some(dir) = out {
                let mut json = serde_json::to_string_pretty(&report)?;
                json.push('\n');
                write_atomic(&dir.join("report.json"), json.as_bytes())?;
                write_atomic(&dir.join("report.txt"), report.table.as_bytes())?;
            }
            Ok(0)
        }
        Command::Analyze {
            summaries,
            metadata,
            out,
        } => {
            let report = cmd_analyze(&summaries, &metadata, &out)?;
            print!("{}", report.matrix.to_csv());
            println!();
            print!("{}", topic_table(&report.topics));
            Ok(0)
        }
        Command::ExportDot { graph, out } => {
            let bytes = std::fs::read(&graph).with_context(|| graph.display().to_string())?;
            let g = deserialize_graph(&bytes).with_context(|| graph.display().to_string())?;
            let dot = serialize_graph(&g, GraphFormat::Dot)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&dot))?;
            Ok(0)
        }
    }
}
