//! `structprompt`: structured prompting experiments and corpus scans.
//!
//! Exit codes: 0 success, 2 configuration error, 3 backend or I/O error.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structprompt::labelspace::{LabelVariant, Task};
use structprompt::pilescan::ScanConfig;

use commands::{ScanArgs, ServeArgs};
use error::CliError;
use manifest::{BackendDescriptor, ExperimentManifest};

#[derive(Parser)]
#[command(name = "structprompt", version, about = "Structured prompting for sequence tagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tag the eval subset for every demonstration draw.
    Tag {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        variant: Option<LabelVariant>,
        /// Also write per-sentence decode traces.
        #[arg(long)]
        traces: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a prediction directory into report files.
    Eval {
        /// Directory written by `tag`.
        #[arg(long)]
        predictions: PathBuf,
        /// Defaults to the prediction directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare label variants on identical eval subsets and demonstrations.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of original,shuffled,proxy,words.
        #[arg(long, default_value = "original,shuffled,proxy,words")]
        variants: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count label patterns in a pretraining corpus and look for test leakage.
    Scan {
        /// Shard file or directory.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        task: Task,
        /// Labels to search for; defaults to the task's canonical classes.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
        /// Dataset manifest whose test split is checked for leakage.
        #[arg(long)]
        test: Option<PathBuf>,
        /// `name=dataset-manifest`, repeatable; enables treebank attribution.
        #[arg(long = "treebank", value_parser = parse_treebank)]
        treebanks: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        sample_cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the lexicon mock over HTTP.
    ServeMock {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Tab-separated `word<TAB>class` lexicon.
        #[arg(long)]
        mock_lexicon: Option<PathBuf>,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        variant: Option<LabelVariant>,
        /// `lexicon` or `random:<seed>`.
        #[arg(long, default_value = "lexicon")]
        mode: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Overall-majority and per-word-majority baselines.
    Baselines {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        n_eval: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Overrides applied on top of an experiment manifest.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Use an HTTP scoring backend instead of the manifest's.
    #[arg(long, env = "STRUCTPROMPT_BACKEND_URL")]
    backend_url: Option<String>,
    /// Use the mock backend with this lexicon.
    #[arg(long, conflicts_with = "backend_url")]
    mock_lexicon: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
    /// Eval-subset seed; demonstration seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    label_seed: Option<u64>,
    #[arg(long)]
    no_bio_constraints: bool,
    #[arg(long)]
    unconstrained: bool,
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn apply(&self) -> Result<ExperimentManifest, CliError> {
        let mut m = ExperimentManifest::load(&self.manifest)?;
        if let Some(url) = &self.backend_url {
            m.backend = BackendDescriptor::Http { url: url.clone() };
        }
        if let Some(path) = &self.mock_lexicon {
            let lexicon = Some(std::path::absolute(path).unwrap_or_else(|_| path.clone()));
            m.backend = match m.backend {
                BackendDescriptor::Mock { mode, .. } => BackendDescriptor::Mock { lexicon, mode },
                BackendDescriptor::Http { .. } => BackendDescriptor::Mock {
                    lexicon,
                    mode: "lexicon".into(),
                },
            };
        }
        if let Some(k) = self.k {
            m.k = k;
        }
        if let Some(runs) = self.m {
            m.m = runs;
            m.demo_seeds = None;
        }
        if let Some(n) = self.n_eval {
            m.n_eval = n;
        }
        if let Some(seed) = self.seed {
            m.eval_seed = seed;
            m.demo_seeds = None;
        }
        if let Some(seed) = self.label_seed {
            m.label_seed = seed;
        }
        if self.no_bio_constraints {
            m.enforce_bio = Some(false);
        }
        if self.unconstrained {
            m.constrained = false;
        }
        if let Some(w) = self.workers {
            m.workers = w;
        }
        Ok(m)
    }
}

fn parse_treebank(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), path.into())),
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Tag {
            run,
            variant,
            traces,
            out,
        } => {
            let mut m = run.apply()?;
            if let Some(v) = variant {
                m.variant = v;
            }
            let runs = commands::cmd_tag(m, &out, traces)?;
            let failed = runs.iter().filter(|r| !r.succeeded()).count();
            for r in &runs {
                match (&r.metrics, &r.failure) {
                    (Some(metrics), _) => println!(
                        "run {}: {:.4}",
                        r.manifest.run_index,
                        metrics.primary_score()
                    ),
                    (None, Some(f)) => println!("run {}: failed: {f}", r.manifest.run_index),
                    (None, None) => {}
                }
            }
            if failed > 0 {
                return Err(CliError::Backend(format!("{failed} of {} runs failed", runs.len())));
            }
            Ok(())
        }
        Command::Eval { predictions, out } => {
            let out = out.unwrap_or_else(|| predictions.clone());
            let report = commands::cmd_eval(&predictions, &out)?;
            match report.score.standard_error {
                Some(se) => println!("{} {}: {:.4} ± {se:.4} over {} runs", report.task, report.metric, report.score.mean, report.n_runs),
                None => println!("{} {}: {:.4} over {} runs", report.task, report.metric, report.score.mean, report.n_runs),
            }
            Ok(())
        }
        Command::Ablate { run, variants, out } => {
            let m = run.apply()?;
            let variants = commands::parse_variants(&variants)?;
            commands::cmd_ablate(&m, &variants, &out)
        }
        Command::Scan {
            corpus,
            task,
            labels,
            test,
            treebanks,
            workers,
            seed,
            window,
            sample_cap,
            out,
        } => commands::cmd_scan(ScanArgs {
            corpus,
            task,
            labels,
            test,
            treebanks,
            config: ScanConfig {
                window,
                sample_cap,
                seed,
                workers,
                ..ScanConfig::default()
            },
            out,
        }),
        Command::ServeMock {
            manifest,
            mock_lexicon,
            task,
            variant,
            mode,
            addr,
            workers,
        } => {
            let manifest = manifest
                .map(|p| {
                    ExperimentManifest::load(&p).map(|mut m| {
                        if let Some(v) = variant {
                            m.variant = v;
                        }
                        m
                    })
                })
                .transpose()?;
            commands::cmd_serve_mock(ServeArgs {
                manifest,
                lexicon: mock_lexicon,
                task,
                mode,
                addr,
                workers,
            })
        }
        Command::Baselines {
            manifest,
            n_eval,
            seed,
            out,
        } => {
            let mut m = ExperimentManifest::load(&manifest)?;
            if let Some(n) = n_eval {
                m.n_eval = n;
            }
            if let Some(s) = seed {
                m.eval_seed = s;
            }
            let report = commands::cmd_baselines(m)?;
            let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::io(&p, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
