//! Per-PC check latency of the classifier bank, the exact solver and the
//! reuse cache over a labeled corpus.

use std::time::{Duration, Instant};

use pcsat::bank::{Classification, ClassifierBank};
use pcsat::cache::SolutionCache;
use pcsat::dataset::DatasetRecord;
use pcsat::{PathCondition, Solver};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct BackendRow {
    pub backend: &'static str,
    pub checks: usize,
    pub mean_us: f64,
    pub p95_us: f64,
    pub total_ms: f64,
    /// Classifier: agreement with the solver's verdict. Solver and cache:
    /// agreement with the stored labels.
    pub accuracy: Option<f64>,
    pub hit_rate: Option<f64>,
    pub unsupported: usize,
}

#[derive(Debug, Serialize)]
pub struct BenchTable {
    pub records: usize,
    pub warmup: usize,
    /// Solver verdicts that disagree with the stored labels.
    pub label_mismatches: usize,
    pub unknown: usize,
    pub rows: Vec<BackendRow>,
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

fn summarize(times: &mut [f64]) -> (f64, f64, f64) {
    if times.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let total: f64 = times.iter().sum();
    times.sort_by(f64::total_cmp);
    let idx = ((times.len() as f64 * 0.95).ceil() as usize).clamp(1, times.len()) - 1;
    (total / times.len() as f64, times[idx], total / 1e3)
}

pub fn run(bank: &ClassifierBank, records: &[DatasetRecord], solver: &Solver, warmup: usize) -> BenchTable {
    let pcs: Vec<PathCondition> = records.iter().map(DatasetRecord::path_condition).collect();
    let warm = warmup.min(pcs.len());
    for pc in &pcs[..warm] {
        let _ = bank.check(pc);
        let _ = solver.solve(pc);
        let _ = SolutionCache::new().check(pc, solver);
    }

    let mut verdicts = Vec::with_capacity(pcs.len());
    let mut solver_times = Vec::with_capacity(pcs.len());
    let mut unknown = 0;
    let mut label_mismatches = 0;
    for (pc, rec) in pcs.iter().zip(records) {
        let t = Instant::now();
        let v = solver.solve(pc);
        solver_times.push(micros(t.elapsed()));
        let v = v.ok().map(|v| v.is_sat());
        match v {
            Some(sat) => label_mismatches += (sat != rec.sat) as usize,
            None => unknown += 1,
        }
        verdicts.push(v);
    }

    let mut class_times = Vec::with_capacity(pcs.len());
    let (mut decided, mut correct, mut unsupported) = (0, 0, 0);
    for (pc, truth) in pcs.iter().zip(&verdicts) {
        let t = Instant::now();
        let c = bank.check(pc);
        class_times.push(micros(t.elapsed()));
        match (c, truth) {
            (Classification::Classified(label), Some(sat)) => {
                decided += 1;
                correct += (label == *sat) as usize;
            }
            (Classification::Classified(_), None) => {}
            (Classification::Unsupported(_), _) => unsupported += 1,
        }
    }

    let mut cache = SolutionCache::new();
    let mut cache_times = Vec::with_capacity(pcs.len());
    let (mut cache_decided, mut cache_correct) = (0, 0);
    for (pc, rec) in pcs.iter().zip(records) {
        let t = Instant::now();
        let r = cache.check(pc, solver);
        cache_times.push(micros(t.elapsed()));
        if let Ok((sat, _)) = r {
            cache_decided += 1;
            cache_correct += (sat == rec.sat) as usize;
        }
    }

    let (s_mean, s_p95, s_total) = summarize(&mut solver_times);
    let (c_mean, c_p95, c_total) = summarize(&mut class_times);
    let (h_mean, h_p95, h_total) = summarize(&mut cache_times);
    let n = pcs.len();
    BenchTable {
        records: n,
        warmup: warm,
        label_mismatches,
        unknown,
        rows: vec![
            BackendRow {
                backend: "classifier",
                checks: n,
                mean_us: c_mean,
                p95_us: c_p95,
                total_ms: c_total,
                accuracy: (decided > 0).then(|| correct as f64 / decided as f64),
                hit_rate: None,
                unsupported,
            },
            BackendRow {
                backend: "solver",
                checks: n,
                mean_us: s_mean,
                p95_us: s_p95,
                total_ms: s_total,
                accuracy: (n > unknown).then(|| (n - unknown - label_mismatches) as f64 / (n - unknown) as f64),
                hit_rate: None,
                unsupported: 0,
            },
            BackendRow {
                backend: "cache",
                checks: n,
                mean_us: h_mean,
                p95_us: h_p95,
                total_ms: h_total,
                accuracy: (cache_decided > 0).then(|| cache_correct as f64 / cache_decided as f64),
                hit_rate: Some(cache.hit_rate()),
                unsupported: 0,
            },
        ],
    }
}

impl BenchTable {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} records ({} warm-up), {} label mismatches, {} unknown\n{:<11} {:>8} {:>11} {:>11} {:>11} {:>9} {:>9} {:>11}\n",
            self.records,
            self.warmup,
            self.label_mismatches,
            self.unknown,
            "backend",
            "checks",
            "mean us",
            "p95 us",
            "total ms",
            "accuracy",
            "hit rate",
            "unsupported"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<11} {:>8} {:>11.2} {:>11.2} {:>11.2} {:>9} {:>9} {:>11}\n",
                r.backend,
                r.checks,
                r.mean_us,
                r.p95_us,
                r.total_ms,
                opt(r.accuracy),
                opt(r.hit_rate),
                r.unsupported
            ));
        }
        s
    }
}
