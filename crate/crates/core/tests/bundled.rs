//! Checks against the bundled corpus (`data/corpus.jsonl`) and the bank
//! trained from it (`data/bank`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcsat::bank::{Classification, ClassifierBank};
use pcsat::cache::SolutionCache;
use pcsat::dataset::{self, load_jsonl, DatasetRecord};
use pcsat::dnn::{init_network, kfold_validate, layer_dims, train, TrainConfig};
use pcsat::{canonize, format_pc, parse_pc, vectorize, PathCondition, PcMatrix, Solver};
use serde::Deserialize;

const T_MAX: usize = 6;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus() -> Vec<DatasetRecord> {
    load_jsonl(&root().join("data/corpus.jsonl")).unwrap()
}

fn bank() -> ClassifierBank {
    ClassifierBank::load(&root().join("data/bank")).unwrap()
}

/// The `configs/train.json` settings.
fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 1000,
        batch_size: 16,
        learning_rate: 1e-3,
        seed,
        patience: 80,
        ..TrainConfig::default()
    }
}

fn groups(records: &[DatasetRecord]) -> BTreeMap<usize, Vec<(PcMatrix, bool)>> {
    let mut by_d: BTreeMap<usize, Vec<(PcMatrix, bool)>> = BTreeMap::new();
    for r in records {
        let pc = r.path_condition();
        by_d.entry(pc.len()).or_default().push((vectorize(&pc, T_MAX).unwrap(), r.sat));
    }
    by_d
}

#[test]
fn records_are_canonical_and_labels_match_the_solver() {
    let solver = Solver::default();
    for r in corpus() {
        let pc = parse_pc(&r.pc).unwrap();
        assert_eq!(format_pc(&canonize(&pc)), r.pc, "not canonical");
        assert_eq!(solver.solve(&pc).unwrap().is_sat(), r.sat, "{}", r.pc);
    }
}

#[test]
fn dedup_leaves_the_corpus_unchanged_and_finds_no_conflicts() {
    let records = corpus();
    let (kept, report) = dataset::dedup(&records, T_MAX);
    assert_eq!(kept, records);
    assert_eq!((report.removed, report.conflicts, report.unvectorized), (0, 0, 0));
}

#[test]
fn every_group_has_both_labels() {
    let (_, _, stats) = dataset::split_and_stats(&corpus(), 1, 0.8).unwrap();
    assert!(stats.single_label_groups.is_empty());
    assert_eq!(stats.per_d.keys().copied().collect::<Vec<_>>(), (2..=10).collect::<Vec<_>>());
    assert_eq!(stats.per_d.values().map(|g| g.total).sum::<usize>(), stats.total);
}

#[test]
fn cache_verdicts_match_the_corpus() {
    let solver = Solver::default();
    let mut cache = SolutionCache::new();
    for r in corpus() {
        let (sat, _) = cache.check(&r.path_condition(), &solver).unwrap();
        assert_eq!(sat, r.sat, "{}", r.pc);
    }
}

#[test]
fn cache_hit_rate_grows_with_repetition() {
    let solver = Solver::default();
    let sample: Vec<PathCondition> = corpus().iter().step_by(25).map(DatasetRecord::path_condition).collect();
    let mut cache = SolutionCache::new();
    let mut last = 0.0;
    for _ in 0..4 {
        for pc in &sample {
            cache.check(pc, &solver).unwrap();
        }
        assert!(cache.hit_rate() >= last);
        last = cache.hit_rate();
    }
    assert!(last >= 0.75);
}

#[test]
fn training_loss_falls() {
    let by_d = groups(&corpus());
    let data = &by_d[&6];
    let cfg = TrainConfig {
        epochs: 30,
        patience: 0,
        ..train_config(3)
    };
    let (_, report) = train(&init_network(&layer_dims(6 * (T_MAX + 2), 5, 5), 3).unwrap(), data, &cfg).unwrap();
    let first = report.epochs.first().unwrap().train_loss;
    let last = report.epochs.last().unwrap().train_loss;
    assert!(last < first, "loss {first} -> {last}");
}

#[test]
fn five_fold_spread_is_within_ten_points() {
    for (d, data) in groups(&corpus()) {
        let cfg = TrainConfig { k: 5, ..train_config(1 + d as u64) };
        let r = kfold_validate(&data, &layer_dims(d * (T_MAX + 2), 5, 5), &cfg).unwrap();
        assert!(r.spread() <= 0.10, "d = {d}: fold accuracies {:?}", r.accuracy);
    }
}

#[derive(Deserialize)]
struct Fixture {
    pc: String,
    sat: bool,
}

#[test]
fn bank_matches_recorded_fixture() {
    let bank = bank();
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bank_regression.jsonl")).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let f: Fixture = serde_json::from_str(line).unwrap();
        assert_eq!(bank.check(&parse_pc(&f.pc).unwrap()), Classification::Classified(f.sat), "{}", f.pc);
        n += 1;
    }
    assert_eq!(n, 200);
}

#[test]
fn bank_covers_the_corpus_range_only() {
    let bank = bank();
    let stats = bank.stats();
    assert_eq!(stats.supported_range, Some((2, 10)));
    assert_eq!(stats.t_max, T_MAX);
    assert_eq!(stats.groups.len(), 9);
    let d12 = (0..12).map(|i| format!("x - {i} >= y")).collect::<Vec<_>>().join(" && ");
    assert!(matches!(bank.check(&parse_pc(&d12).unwrap()), Classification::Unsupported(_)));
    let wide = "a + b + c + d + e + f + g >= 0 && a >= 1";
    assert!(matches!(bank.check(&parse_pc(wide).unwrap()), Classification::Unsupported(_)));
}

#[test]
fn classification_ignores_canonization_and_renaming() {
    let bank = bank();
    for r in corpus().iter().step_by(97) {
        let pc = r.path_condition();
        let expected = bank.check(&pc);
        assert_eq!(bank.check(&canonize(&pc)), expected);
        let n = pc.vars().len();
        let renamed = PathCondition::new(
            pc.constraints().iter().rev().map(|c| c.rename(|v| 2 * (n - 1 - v) + 5)).collect(),
        );
        assert_eq!(bank.check(&renamed), expected, "{}", r.pc);
    }
}
