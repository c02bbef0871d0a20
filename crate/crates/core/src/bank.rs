//! One network per constraint count, sharing a variable capacity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnn::{self, layer_dims, DnnError, Network, TrainConfig, TrainReport};
use crate::pc::{canonize, PathCondition};
use crate::vectorize::{vectorize, PcMatrix};

pub const MANIFEST_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "bank.json";

/// Seed offset between restarts of one group.
const RESTART_STRIDE: u64 = 1_000_003;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("network for d = {d} takes {got} inputs, expected {expected}")]
    InputMismatch { d: usize, expected: usize, got: usize },
    #[error("model {file} was built for t_max = {found}, bank uses {expected}")]
    MixedTMax { file: String, expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed bank manifest: {0}")]
    Format(String),
    #[error("unsupported bank manifest version {0:?}")]
    UnsupportedVersion(String),
    #[error(transparent)]
    Model(#[from] DnnError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    /// Network verdict; `true` means satisfiable.
    Classified(bool),
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ClassifierBank {
    t_max: usize,
    groups: BTreeMap<usize, Network>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: String,
    t_max: usize,
    models: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupStats {
    pub d: usize,
    pub dims: Vec<usize>,
    pub train_meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BankStats {
    pub t_max: usize,
    pub supported_range: Option<(usize, usize)>,
    pub groups: Vec<GroupStats>,
}

fn group_file(d: usize) -> String {
    format!("group-{d:02}.json")
}

impl ClassifierBank {
    pub fn new(t_max: usize) -> Self {
        ClassifierBank {
            t_max,
            groups: BTreeMap::new(),
        }
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn groups(&self) -> &BTreeMap<usize, Network> {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Adds the network for constraint count `d`; it must take
    /// `d * (t_max + 2)` inputs.
    pub fn insert(&mut self, d: usize, net: Network) -> Result<(), BankError> {
        let expected = d * (self.t_max + 2);
        if net.inputs() != expected {
            return Err(BankError::InputMismatch {
                d,
                expected,
                got: net.inputs(),
            });
        }
        self.groups.insert(d, net);
        Ok(())
    }

    pub fn supported_range(&self) -> Option<(usize, usize)> {
        let lo = *self.groups.keys().next()?;
        let hi = *self.groups.keys().next_back()?;
        Some((lo, hi))
    }

    /// Canonizes, vectorizes and routes `pc` by its constraint count. Never
    /// calls a solver.
    pub fn check(&self, pc: &PathCondition) -> Classification {
        self.check_canonical(&canonize(pc))
    }

    /// [`Self::check`] for a PC already in canonical form.
    pub fn check_canonical(&self, pc: &PathCondition) -> Classification {
        let d = pc.len();
        let Some(net) = self.groups.get(&d) else {
            return Classification::Unsupported(match self.supported_range() {
                Some((lo, hi)) if (lo..=hi).contains(&d) => format!("no network for d = {d}"),
                Some((lo, hi)) => format!("d = {d} outside [{lo}, {hi}]"),
                None => "empty bank".into(),
            });
        };
        match vectorize(pc, self.t_max) {
            Ok(m) => self.classify_matrix(net, &m),
            Err(e) => Classification::Unsupported(e.to_string()),
        }
    }

    fn classify_matrix(&self, net: &Network, m: &PcMatrix) -> Classification {
        match net.predict(m) {
            Ok((_, label)) => Classification::Classified(label),
            Err(e) => Classification::Unsupported(e.to_string()),
        }
    }

    pub fn stats(&self) -> BankStats {
        BankStats {
            t_max: self.t_max,
            supported_range: self.supported_range(),
            groups: self
                .groups
                .iter()
                .map(|(&d, net)| GroupStats {
                    d,
                    dims: net.dims().to_vec(),
                    train_meta: net.train_meta().clone(),
                })
                .collect(),
        }
    }

    /// Writes one model file per group plus the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), BankError> {
        std::fs::create_dir_all(dir)?;
        let mut models = BTreeMap::new();
        for (&d, net) in &self.groups {
            let file = group_file(d);
            dnn::save_network(net, &dir.join(&file))?;
            models.insert(d.to_string(), file);
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION.into(),
            t_max: self.t_max,
            models,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ClassifierBank, BankError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BankError::Format(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(MANIFEST_VERSION) => {}
            Some(v) => return Err(BankError::UnsupportedVersion(v.to_string())),
            None => return Err(BankError::Format("missing version".into())),
        }
        let manifest: Manifest =
            serde_json::from_value(value).map_err(|e| BankError::Format(e.to_string()))?;
        let mut bank = ClassifierBank::new(manifest.t_max);
        for (key, file) in &manifest.models {
            let d: usize = key
                .parse()
                .map_err(|_| BankError::Format(format!("group key {key:?} is not a count")))?;
            let net = dnn::load_network(&dir.join(file))?;
            if let Some(g) = net.group() {
                let found = g.cols.saturating_sub(2);
                if found != bank.t_max {
                    return Err(BankError::MixedTMax {
                        file: file.clone(),
                        expected: bank.t_max,
                        found,
                    });
                }
            }
            bank.insert(d, net)?;
        }
        Ok(bank)
    }
}

/// [`ClassifierBank::check`] as a free function.
pub fn check(pc: &PathCondition, bank: &ClassifierBank) -> Classification {
    bank.check(pc)
}

pub fn bank_stats(bank: &ClassifierBank) -> BankStats {
    bank.stats()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupTraining {
    pub d: usize,
    pub records: usize,
    pub sat: usize,
    /// `None` when the group was skipped for holding a single class.
    pub report: Option<TrainReport>,
}

/// Trains one `hidden x width` network per constraint count found in
/// `records` (canonical PCs with labels). Records that do not vectorize at
/// `t_max` are ignored; groups with a single class are skipped with a warning.
pub fn train_bank(
    records: &[(PathCondition, bool)],
    t_max: usize,
    hidden: usize,
    width: usize,
    cfg: &TrainConfig,
) -> Result<(ClassifierBank, Vec<GroupTraining>), BankError> {
    let mut by_d: BTreeMap<usize, Vec<(PcMatrix, bool)>> = BTreeMap::new();
    for (pc, sat) in records {
        if let Ok(m) = vectorize(pc, t_max) {
            by_d.entry(pc.len()).or_default().push((m, *sat));
        }
    }
    let mut bank = ClassifierBank::new(t_max);
    let mut summary = Vec::new();
    for (d, data) in by_d {
        let sat = data.iter().filter(|(_, y)| *y).count();
        let mut entry = GroupTraining {
            d,
            records: data.len(),
            sat,
            report: None,
        };
        if sat == 0 || sat == data.len() || data.len() < 2 {
            log::warn!("group d = {d} skipped: {} records, {sat} satisfiable", data.len());
            summary.push(entry);
            continue;
        }
        let dims = layer_dims(d * (t_max + 2), hidden, width);
        let mut best: Option<(f64, Network, TrainReport)> = None;
        for r in 0..cfg.restarts.max(1) {
            let cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(d as u64).wrapping_add(RESTART_STRIDE * r as u64),
                ..cfg.clone()
            };
            let init = dnn::init_network(&dims, cfg.seed)?;
            let (mut net, report) = dnn::train(&init, &data, &cfg)?;
            let loss = report.epochs[report.best_epoch - 1].val_loss;
            if best.as_ref().is_none_or(|b| loss < b.0) {
                net.train_meta.insert("restart".into(), serde_json::json!(r));
                best = Some((loss, net, report));
            }
        }
        let (_, net, report) = best.expect("at least one restart");
        bank.insert(d, net)?;
        entry.report = Some(report);
        summary.push(entry);
    }
    Ok((bank, summary))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub total: usize,
    pub correct: usize,
}

impl GroupAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Evaluation {
    pub groups: BTreeMap<usize, GroupAccuracy>,
    pub unsupported: usize,
}

impl Evaluation {
    /// Accuracy over every classified record.
    pub fn aggregate(&self) -> f64 {
        let total: usize = self.groups.values().map(|g| g.total).sum();
        let correct: usize = self.groups.values().map(|g| g.correct).sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

/// Compares bank labels with the given ground truth.
pub fn evaluate(bank: &ClassifierBank, records: &[(PathCondition, bool)]) -> Evaluation {
    let mut ev = Evaluation::default();
    for (pc, sat) in records {
        match bank.check(pc) {
            Classification::Classified(label) => {
                let g = ev.groups.entry(canonize(pc).len()).or_default();
                g.total += 1;
                g.correct += (label == *sat) as usize;
            }
            Classification::Unsupported(_) => ev.unsupported += 1,
        }
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnn::init_network;
    use crate::pc::parse_pc;

    fn bank_with(ds: &[usize], t_max: usize) -> ClassifierBank {
        let mut bank = ClassifierBank::new(t_max);
        for &d in ds {
            let net = init_network(&layer_dims(d * (t_max + 2), 2, 3), d as u64).unwrap();
            bank.insert(d, net).unwrap();
        }
        bank
    }

    #[test]
    fn routes_by_constraint_count() {
        let bank = bank_with(&[11, 12], 20);
        assert_eq!(bank.supported_range(), Some((11, 12)));
        let pc = parse_pc("x > 0 && y > 0 && x + y < 9 && x != 3 && y != 4").unwrap();
        assert!(matches!(bank.check(&pc), Classification::Unsupported(_)));
        let big: Vec<String> = (0..12).map(|i| format!("x{i} > {i}")).collect();
        let pc = parse_pc(&big.join(" && ")).unwrap();
        assert!(matches!(bank.check(&pc), Classification::Classified(_)));
    }

    #[test]
    fn too_many_variables() {
        let bank = bank_with(&[1], 2);
        let pc = parse_pc("a + b + c <= 0").unwrap();
        assert!(matches!(bank.check(&pc), Classification::Unsupported(_)));
        let pc = parse_pc("a + b <= 0").unwrap();
        assert!(matches!(bank.check(&pc), Classification::Classified(_)));
    }

    #[test]
    fn overflow_is_unsupported() {
        let bank = bank_with(&[1], 2);
        let pc = parse_pc("x - 99999999999 <= 0").unwrap();
        assert!(matches!(bank.check(&pc), Classification::Unsupported(_)));
    }

    #[test]
    fn invariant_under_renaming_and_canonization() {
        let bank = bank_with(&[2, 3], 4);
        let a = parse_pc("p - 2*q + 3 <= 0 && q > 1 && p != 4").unwrap();
        let b = parse_pc("u - 2*w + 3 <= 0 && w > 1 && u != 4").unwrap();
        let c = parse_pc("w > 1 && u != 4 && u - 2*w + 3 <= 0").unwrap();
        assert_eq!(bank.check(&a), bank.check(&b));
        assert_eq!(bank.check(&a), bank.check(&c));
        assert_eq!(bank.check(&a), bank.check(&canonize(&a)));
    }

    #[test]
    fn insert_checks_input_width() {
        let mut bank = ClassifierBank::new(3);
        let net = init_network(&[11, 2, 1], 1).unwrap();
        assert!(matches!(bank.insert(2, net), Err(BankError::InputMismatch { .. })));
    }

    #[test]
    fn empty_stats() {
        let s = ClassifierBank::new(6).stats();
        assert!(s.groups.is_empty());
        assert_eq!(s.supported_range, None);
    }

    #[test]
    fn manifest_round_trip_and_mixed_capacity() {
        // Trained networks carry their matrix shape, which load cross-checks.
        let data: Vec<(PathCondition, bool)> = (0..40)
            .map(|i| {
                let pc = canonize(&parse_pc(&format!("x - {i} <= 0 && x + {} >= 0", i % 7)).unwrap());
                (pc, i % 2 == 0)
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (bank, summary) = train_bank(&data, 3, 2, 3, &cfg).unwrap();
        assert!(!bank.is_empty());
        assert!(summary.iter().any(|g| g.report.is_some()));
        let dir = tempfile::tempdir().unwrap();
        bank.save(dir.path()).unwrap();
        let back = ClassifierBank::load(dir.path()).unwrap();
        assert_eq!(back, bank);

        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        std::fs::write(
            dir.path().join(MANIFEST_FILE),
            text.replace("\"t_max\": 3", "\"t_max\": 4"),
        )
        .unwrap();
        assert!(matches!(
            ClassifierBank::load(dir.path()),
            Err(BankError::MixedTMax { .. }) | Err(BankError::InputMismatch { .. })
        ));
    }
}
