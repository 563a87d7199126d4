mod common;

use std::sync::Arc;

use common::{dataset, lexicon_mock};
use structprompt::backend::server::serve;
use structprompt::backend::{open_session, HttpBackend, HttpConfig, LanguageModel, MockLm, MockMode};
use structprompt::decoder::{run_experiment, DecodeConfig, ExperimentSpec};
use structprompt::labelspace::{original_labels, proxy_labels, shuffle_labels, words_labels, LabelSet, Task};
use structprompt::metrics::{label_set_comparison, AggregateReport, CellSelection};
use structprompt::rng::SeededRng;
use structprompt::synthetic::{synthetic_dataset, SyntheticConfig};

fn spec(m: usize) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(21).with_runs(m, 21);
    s.k = 3;
    s.n_eval = 40;
    s.workers = 2;
    s
}

fn report_for(mock: &MockLm, ds: &structprompt::TaskDataset, labels: LabelSet, m: usize) -> AggregateReport {
    let runs = run_experiment(mock, ds, &spec(m), &DecodeConfig::new(labels)).unwrap();
    AggregateReport::from_runs(&runs, CellSelection::OffDiagonal).unwrap()
}

#[test]
fn variants_share_eval_and_demonstrations() {
    let ds = dataset(Task::Pos, 200, 100, 4);
    let base = original_labels(Task::Pos);
    let mock = lexicon_mock(&ds);
    let variants = [
        base.clone(),
        proxy_labels(&base, 11).unwrap(),
        shuffle_labels(&base, 2).unwrap(),
        words_labels(&base).unwrap(),
    ];
    let mut all_runs = Vec::new();
    for labels in &variants {
        let m = mock.clone().with_labels(labels.clone());
        all_runs.push(run_experiment(&m, &ds, &spec(3), &DecodeConfig::new(labels.clone())).unwrap());
    }
    for runs in &all_runs[1..] {
        for (a, b) in runs.iter().zip(&all_runs[0]) {
            assert_eq!(a.manifest.eval_fingerprint, b.manifest.eval_fingerprint);
            assert_eq!(a.manifest.demonstration_ids, b.manifest.demonstration_ids);
            // The mock keys on classes, so predictions do not move.
            assert_eq!(a.predictions, b.predictions);
        }
    }
    let reports: Vec<(String, AggregateReport)> = variants
        .iter()
        .zip(&all_runs)
        .map(|(l, r)| (l.variant().to_string(), AggregateReport::from_runs(r, CellSelection::OffDiagonal).unwrap()))
        .collect();
    let cmp = label_set_comparison(&reports).unwrap();
    for v in ["original", "proxy", "shuffled", "words"] {
        let e = cmp.entry(v, v).unwrap();
        assert_eq!(e.delta, 0.0);
        assert_eq!(e.spearman.rho, Some(1.0));
    }
    assert_eq!(cmp.entry("original", "proxy").unwrap().delta, 0.0);
    // A shuffled report carries the true-label analysis.
    assert!(reports[2].1.true_label_errors.is_some());
}

#[test]
fn aggregate_matches_hand_computation() {
    let ds = dataset(Task::Pos, 200, 100, 6);
    let mock = lexicon_mock(&ds).with_mode(MockMode::Random { seed: 5 });
    let runs = run_experiment(&mock, &ds, &spec(3), &DecodeConfig::new(original_labels(Task::Pos))).unwrap();
    let report = AggregateReport::from_runs(&runs, CellSelection::OffDiagonal).unwrap();
    let v: Vec<f64> = runs.iter().map(|r| r.metrics.as_ref().unwrap().token_accuracy).collect();
    let mean = (v[0] + v[1] + v[2]) / 3.0;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0;
    let se = (var / 3.0).sqrt();
    assert!((report.score.mean - mean).abs() < 1e-12);
    assert!((report.score.standard_error.unwrap() - se).abs() < 1e-12);
    assert_eq!(report.spearman.len(), 3);
}

/// A model that ignores the demonstrated verbalizer and writes each word's
/// true class name. Under a derangement every prediction is wrong, and every
/// error is a true-label error.
#[test]
fn demonstration_blind_model_makes_only_true_label_errors() {
    let mut cfg = SyntheticConfig::new(300, 60, 13);
    cfg.ambiguity = 0.0;
    let ds = synthetic_dataset(Task::Pos, &cfg);
    let original = original_labels(Task::Pos);
    let shuffled = shuffle_labels(&original, 9).unwrap();
    let blind = lexicon_mock(&ds);
    let report = report_for(&blind, &ds, shuffled, 2);
    let errors = report.true_label_errors.unwrap();
    assert!(errors.overall.errors > 0);
    assert_eq!(errors.overall.fraction, Some(1.0));
    assert_eq!(report.score.mean, 0.0);
}

#[test]
fn http_backend_is_stateless_equivalent() {
    let ds = dataset(Task::Pos, 30, 5, 2);
    let mock = lexicon_mock(&ds).with_mode(MockMode::Random { seed: 77 });
    let server = serve(Arc::new(mock.clone()), "127.0.0.1:0", 2).unwrap();
    let http = HttpBackend::connect(HttpConfig::new(server.base_url())).unwrap();
    let candidates: Vec<String> = mock.labels().surfaces().to_vec();
    let mut rng = SeededRng::new(3);
    for _ in 0..100 {
        let len = 1 + rng.below(120) as usize;
        let prefix: String = (0..len).map(|_| (b' ' + rng.below(95) as u8) as char).collect();
        let cut = rng.below(len as u64 + 1) as usize;
        let mut session = open_session(&http, &prefix[..cut]).unwrap();
        session.append(&prefix[cut..]);
        let remote = session.score_candidates(&candidates).unwrap();
        let local = mock.score(&prefix, &candidates).unwrap();
        for (r, l) in remote.iter().zip(&local) {
            assert_eq!(r.tokens, l.tokens);
            for (a, b) in r.token_logprobs.iter().zip(&l.token_logprobs) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
