use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use structprompt::backend::server::serve;
use structprompt::backend::MockLm;
use structprompt::corpus::{sample_eval_subset, DatasetManifest, TaskDataset};
use structprompt::decoder::run_experiment;
use structprompt::labelspace::{canonical_classes, original_labels_for, LabelVariant, Task};
use structprompt::metrics::{
    label_set_comparison, majority_baselines, read_predictions, write_predictions, AggregateReport, Baselines,
    CellSelection, RunManifest, RunMetrics, RunResult,
};
use structprompt::pilescan::{
    leakage_check, list_shards, patterns_for_task, scan, treebank_attribution, LeakageConfig, ScanConfig, ScanPattern,
};

use crate::error::CliError;
use crate::manifest::{parse_mock_mode, read_lexicon, ExperimentManifest};

pub const EXPERIMENT_FILE: &str = "experiment.json";

/// Sidecar for one run's prediction file.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub manifest: RunManifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Runs the experiment and writes `experiment.json`, `run-NN.tsv` and
/// `run-NN.json` (plus `run-NN.traces.json` when asked) under `out`.
pub fn cmd_tag(mut manifest: ExperimentManifest, out: &Path, traces: bool) -> Result<Vec<RunResult>, CliError> {
    let ds = manifest.load_dataset()?;
    manifest.resolve(&ds);
    let labels = manifest.labels(&ds)?;
    let model = manifest.backend(&ds, &labels)?;
    let mut spec = manifest.spec();
    spec.keep_traces = traces;
    let config = manifest.decode_config(labels);
    log::info!(
        "{} {} k={} m={} n_eval={} backend={}",
        manifest.task,
        manifest.variant,
        spec.k,
        spec.effective_runs(),
        spec.n_eval,
        model.identity()
    );
    let runs = run_experiment(model.as_ref(), &ds, &spec, &config)?;

    create_dir(out)?;
    write(&out.join(EXPERIMENT_FILE), manifest.to_json())?;
    for r in &runs {
        let stem = format!("run-{:02}", r.manifest.run_index);
        write(&out.join(format!("{stem}.tsv")), write_predictions(&r.predictions))?;
        let record = RunRecord {
            manifest: r.manifest.clone(),
            failure: r.failure.clone(),
        };
        write(&out.join(format!("{stem}.json")), json(&record))?;
        if let Some(t) = &r.traces {
            write(&out.join(format!("{stem}.traces.json")), json(t))?;
        }
    }
    Ok(runs)
}

/// Reads back the runs a `tag` invocation wrote to `dir`.
pub fn load_runs(dir: &Path) -> Result<Vec<RunResult>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut records: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run-") && n.ends_with(".json") && !n.ends_with(".traces.json"))
        })
        .collect();
    records.sort();
    if records.is_empty() {
        return Err(CliError::config(format!("{}: no run-NN.json files", dir.display())));
    }
    let mut runs = Vec::with_capacity(records.len());
    for path in records {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let tsv = path.with_extension("tsv");
        let text = fs::read_to_string(&tsv).map_err(|e| CliError::io(&tsv, e))?;
        let predictions =
            read_predictions(&text).map_err(|e| CliError::config(format!("{}: {e}", tsv.display())))?;
        let metrics = match &record.failure {
            Some(_) => None,
            None => Some(RunMetrics::compute(
                record.manifest.task,
                record.manifest.labels.classes(),
                &predictions,
            )?),
        };
        runs.push(RunResult {
            manifest: record.manifest,
            predictions,
            metrics,
            failure: record.failure,
            traces: None,
        });
    }
    Ok(runs)
}

/// Majority baselines on the experiment's eval subset, when its dataset is
/// still readable.
fn baselines_for(dir: &Path) -> Option<Baselines> {
    let path = dir.join(EXPERIMENT_FILE);
    let manifest = ExperimentManifest::load(&path).ok()?;
    let ds = match manifest.load_dataset() {
        Ok(ds) => ds,
        Err(e) => {
            log::warn!("skipping baselines: {e}");
            return None;
        }
    };
    let eval = sample_eval_subset(&ds, manifest.n_eval.min(ds.test.len()), manifest.eval_seed).ok()?;
    majority_baselines(&ds, &eval).ok()
}

/// Aggregates the runs in `dir` and writes `report.json`, `runs.csv`,
/// `per_class.csv` and `confusion.csv` to `out`.
pub fn cmd_eval(dir: &Path, out: &Path) -> Result<AggregateReport, CliError> {
    let runs = load_runs(dir)?;
    let mut report = AggregateReport::from_runs(&runs, CellSelection::OffDiagonal)?;
    report.baselines = baselines_for(dir);
    create_dir(out)?;
    write(&out.join("report.json"), json(&report))?;
    write(&out.join("runs.csv"), report.runs_csv())?;
    write(&out.join("per_class.csv"), report.per_class_csv())?;
    write(&out.join("confusion.csv"), report.confusion_counts.to_csv(true))?;
    Ok(report)
}

pub fn parse_variants(list: &str) -> Result<Vec<LabelVariant>, CliError> {
    let mut out: Vec<LabelVariant> = Vec::new();
    for v in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: LabelVariant = v.parse().map_err(CliError::Config)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("variants: empty list"));
    }
    Ok(out)
}

/// Runs every variant against the same eval subset and demonstration
/// sentences, then compares them.
pub fn cmd_ablate(base: &ExperimentManifest, variants: &[LabelVariant], out: &Path) -> Result<(), CliError> {
    let mut reports = Vec::new();
    let mut failed = 0;
    for &v in variants {
        let mut m = base.clone();
        m.variant = v;
        let dir = out.join(v.as_str());
        let runs = cmd_tag(m, &dir, false)?;
        failed += runs.iter().filter(|r| !r.succeeded()).count();
        let report = cmd_eval(&dir, &dir)?;
        reports.push((v.as_str().to_string(), report));
    }
    let cmp = label_set_comparison(&reports)?;
    write(&out.join("comparison.csv"), cmp.to_csv())?;
    write(&out.join("comparison.json"), json(&cmp))?;
    let summary: BTreeMap<&str, f64> = reports.iter().map(|(v, r)| (v.as_str(), r.score.mean)).collect();
    write(&out.join("summary.json"), json(&summary))?;
    if failed > 0 {
        return Err(CliError::Backend(format!("{failed} runs failed; see the run-NN.json files")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct BaselineReport {
    pub eval_subset: Baselines,
    pub full_test: Baselines,
}

pub fn cmd_baselines(mut manifest: ExperimentManifest) -> Result<BaselineReport, CliError> {
    let ds = manifest.load_dataset()?;
    manifest.resolve(&ds);
    let eval = sample_eval_subset(&ds, manifest.n_eval, manifest.eval_seed)?;
    Ok(BaselineReport {
        eval_subset: majority_baselines(&ds, &eval)?,
        full_test: majority_baselines(&ds, &ds.test)?,
    })
}

pub struct ScanArgs {
    pub corpus: PathBuf,
    pub task: Task,
    pub labels: Option<Vec<String>>,
    /// Dataset manifest whose test split is checked for leakage.
    pub test: Option<PathBuf>,
    /// `(name, dataset manifest)` pairs for treebank attribution.
    pub treebanks: Vec<(String, PathBuf)>,
    pub config: ScanConfig,
    pub out: PathBuf,
}

fn load_dataset_manifest(path: &Path) -> Result<TaskDataset, CliError> {
    Ok(DatasetManifest::load(path)?.load_dataset()?)
}

/// Writes `scan_report.json`, `counts.csv`, `review.txt` and, when requested,
/// `attribution.json`.
pub fn cmd_scan(args: ScanArgs) -> Result<(), CliError> {
    if !args.corpus.exists() {
        return Err(CliError::config(format!("corpus: {} does not exist", args.corpus.display())));
    }
    let shards = list_shards(&args.corpus).map_err(|e| CliError::io(&args.corpus, e))?;
    let classes = args.labels.clone().unwrap_or_else(|| canonical_classes(args.task));
    let patterns: Vec<ScanPattern> = patterns_for_task(args.task, &classes);
    for p in &patterns {
        p.validate()?;
    }
    let test = args.test.as_deref().map(load_dataset_manifest).transpose()?;
    let mut treebanks = Vec::new();
    for (name, path) in &args.treebanks {
        treebanks.push((name.clone(), load_dataset_manifest(path)?));
    }
    let mut cfg = args.config.clone();
    cfg.collect_ud_sentences = !treebanks.is_empty();
    log::info!("scanning {} shards for {} labels", shards.len(), patterns.len());
    let mut report = scan(&shards, &patterns, &cfg)?;
    if let Some(ds) = &test {
        let lc = LeakageConfig {
            workers: cfg.workers,
            chunk_bytes: cfg.chunk_bytes,
            ..LeakageConfig::default()
        };
        let leaks = leakage_check(&shards, &ds.test, &lc)?;
        report.shard_errors.extend(leaks.shard_errors);
        report.shard_errors.sort_by(|a, b| a.shard.cmp(&b.shard));
        report.shard_errors.dedup();
        report.leakage = leaks.matches;
    }
    create_dir(&args.out)?;
    if !treebanks.is_empty() {
        let attribution = treebank_attribution(&report.ud_sentences, &treebanks);
        write(&args.out.join("attribution.json"), json(&attribution))?;
    }
    write(&args.out.join("scan_report.json"), json(&report))?;
    write(&args.out.join("counts.csv"), report.to_csv())?;
    write(&args.out.join("review.txt"), report.review_text())?;
    for e in &report.shard_errors {
        log::warn!("{}: {}", e.shard, e.message);
    }
    Ok(())
}

pub struct ServeArgs {
    pub manifest: Option<ExperimentManifest>,
    pub lexicon: Option<PathBuf>,
    pub task: Option<Task>,
    pub mode: String,
    pub addr: String,
    pub workers: usize,
}

/// Serves a mock over HTTP until the process is killed.
pub fn cmd_serve_mock(args: ServeArgs) -> Result<(), CliError> {
    let mode = parse_mock_mode(&args.mode)?;
    let mock = match (&args.manifest, &args.lexicon) {
        (Some(m), lexicon) => {
            let ds = m.load_dataset()?;
            let labels = m.labels(&ds)?;
            match lexicon {
                Some(p) => MockLm::new(read_lexicon(p)?, labels),
                None => MockLm::from_training(&ds.train, labels),
            }
            .with_prompt_config(m.prompt.clone())
        }
        (None, Some(p)) => {
            let task = args.task.ok_or_else(|| CliError::config("--task is required with --mock-lexicon alone"))?;
            MockLm::new(read_lexicon(p)?, original_labels_for(task, &canonical_classes(task))?)
        }
        (None, None) => return Err(CliError::config("serve-mock needs --manifest or --mock-lexicon")),
    };
    let handle = serve(Arc::new(mock.with_mode(mode)), &args.addr, args.workers)?;
    println!("listening on {}", handle.base_url());
    handle.join();
    Ok(())
}
