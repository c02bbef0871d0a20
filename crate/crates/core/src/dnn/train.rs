use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{flatten, init_network, DnnError, GroupShape, Layer, Network};
use crate::vectorize::PcMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fraction of the records held out for validation and early stopping.
    pub validation_split: f64,
    /// Fold count for [`kfold_validate`]; 0 disables it.
    pub k: usize,
    /// Epochs without a validation-loss improvement before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Weight each class by `n / (2 * n_class)` in the loss.
    pub class_weights: bool,
    /// Independent initializations tried per bank group; the one with the
    /// lowest validation loss is kept.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            validation_split: 0.2,
            k: 0,
            patience: 5,
            class_weights: false,
            restarts: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DnnError> {
        if self.epochs == 0 {
            return Err(DnnError::BadConfig("epochs must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(DnnError::BadConfig("restarts must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(DnnError::BadConfig("batch size must be at least 1".into()));
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(DnnError::BadConfig("validation split must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DnnError::BadConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_size: usize,
    pub val_size: usize,
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(layers: &[Layer], lr: f64) -> Adam {
        let zeros: Vec<Layer> = layers
            .iter()
            .map(|l| Layer::zeros(l.inputs(), l.outputs()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
        }
    }

    fn update(&mut self, layers: &mut [Layer], grads: &[Layer]) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        for (l, layer) in layers.iter_mut().enumerate() {
            let (g, m, v) = (&grads[l], &mut self.m[l], &mut self.v[l]);
            for o in 0..layer.outputs() {
                for i in 0..layer.inputs() {
                    apply(&mut layer.w[o][i], g.w[o][i], &mut m.w[o][i], &mut v.w[o][i]);
                }
                apply(&mut layer.b[o], g.b[o], &mut m.b[o], &mut v.b[o]);
            }
        }
    }
}

fn accuracy(net: &Network, data: &[(Vec<f64>, bool)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let right = data
        .iter()
        .filter(|(x, y)| (net.score(x).unwrap() >= net.threshold) == *y)
        .count();
    right as f64 / data.len() as f64
}

fn check_data(net: &Network, data: &[(PcMatrix, bool)]) -> Result<GroupShape, DnnError> {
    if data.len() < 2 {
        return Err(DnnError::TooFewRecords {
            need: 2,
            got: data.len(),
        });
    }
    let first = &data[0].0;
    let shape = GroupShape {
        rows: first.rows(),
        cols: first.cols(),
    };
    for (m, _) in data {
        if m.rows() != shape.rows || m.cols() != shape.cols {
            return Err(DnnError::ShapeMismatch {
                expected: format!("{}x{}", shape.rows, shape.cols),
                got: format!("{}x{}", m.rows(), m.cols()),
            });
        }
    }
    if shape.rows * shape.cols != net.inputs() {
        return Err(DnnError::ShapeMismatch {
            expected: format!("{} inputs", net.inputs()),
            got: format!("{}x{}", shape.rows, shape.cols),
        });
    }
    if data.iter().all(|(_, y)| *y) || data.iter().all(|(_, y)| !*y) {
        return Err(DnnError::SingleClassData);
    }
    Ok(shape)
}

/// Trains a copy of `net` on `data` with mini-batch Adam. A seeded shuffle
/// holds out `validation_split` of the records; the weights with the lowest
/// validation loss are returned. Input scaling is fitted on the training part
/// only.
pub fn train(
    net: &Network,
    data: &[(PcMatrix, bool)],
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport), DnnError> {
    cfg.validate()?;
    let shape = check_data(net, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * cfg.validation_split).round() as usize).clamp(1, data.len() - 1);
    let flat = |i: &usize| (flatten(&data[*i].0), data[*i].1);
    let val: Vec<(Vec<f64>, bool)> = order[..n_val].iter().map(flat).collect();
    let mut train_set: Vec<(Vec<f64>, bool)> = order[n_val..].iter().map(flat).collect();

    let mut net = net.clone();
    net.group = Some(shape);
    net.col_scale = vec![1.0; net.inputs()];
    for (x, _) in &train_set {
        for (s, v) in net.col_scale.iter_mut().zip(x) {
            *s = s.max(v.abs());
        }
    }

    let weights = if cfg.class_weights {
        let pos = train_set.iter().filter(|(_, y)| *y).count().max(1) as f64;
        let neg = train_set.iter().filter(|(_, y)| !*y).count().max(1) as f64;
        let n = train_set.len() as f64;
        [n / (2.0 * neg), n / (2.0 * pos)]
    } else {
        [1.0, 1.0]
    };

    let mut adam = Adam::new(&net.layers, cfg.learning_rate);
    let mut stats = Vec::new();
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut stall = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        train_set.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_set.chunks(cfg.batch_size) {
            let (loss, grads) = net.loss_and_gradients(batch, weights);
            loss_sum += loss * batch.len() as f64;
            adam.update(&mut net.layers, &grads);
        }
        let val_loss = net.loss(&val, [1.0, 1.0]);
        stats.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy: accuracy(&net, &val),
        });
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch);
            stall = 0;
        } else {
            stall += 1;
            if cfg.patience > 0 && stall >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, mut net, best_epoch) = best;
    let best_stats = &stats[best_epoch - 1];
    let meta = [
        ("epochs_run", serde_json::json!(stats.len())),
        ("best_epoch", serde_json::json!(best_epoch)),
        ("best_val_loss", serde_json::json!(best_stats.val_loss)),
        ("best_val_accuracy", serde_json::json!(best_stats.val_accuracy)),
        ("train_size", serde_json::json!(train_set.len())),
        ("val_size", serde_json::json!(val.len())),
        ("config", serde_json::to_value(cfg).unwrap()),
    ];
    net.train_meta = meta.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let report = TrainReport {
        epochs: stats,
        best_epoch,
        stopped_early,
        train_size: train_set.len(),
        val_size: val.len(),
    };
    Ok((net, report))
}

/// Seeded split of `0..n` into `k` disjoint folds whose sizes differ by at
/// most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (j, i) in order.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    folds
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub folds: Vec<Vec<usize>>,
    pub accuracy: Vec<f64>,
    pub mean: f64,
}

impl KFoldReport {
    /// Largest minus smallest fold accuracy.
    pub fn spread(&self) -> f64 {
        let max = self.accuracy.iter().copied().fold(f64::MIN, f64::max);
        let min = self.accuracy.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }
}

/// Trains a fresh network on every fold's complement and scores it on the
/// fold.
pub fn kfold_validate(
    data: &[(PcMatrix, bool)],
    dims: &[usize],
    cfg: &TrainConfig,
) -> Result<KFoldReport, DnnError> {
    if cfg.k < 2 {
        return Err(DnnError::BadConfig("k-fold needs k >= 2".into()));
    }
    if cfg.k > data.len() {
        return Err(DnnError::TooFewRecords {
            need: cfg.k,
            got: data.len(),
        });
    }
    let folds = kfold_partition(data.len(), cfg.k, cfg.seed);
    let mut acc = Vec::with_capacity(cfg.k);
    for fold in &folds {
        let mut held = vec![false; data.len()];
        fold.iter().for_each(|&i| held[i] = true);
        let rest: Vec<(PcMatrix, bool)> = (0..data.len())
            .filter(|&i| !held[i])
            .map(|i| data[i].clone())
            .collect();
        let (net, _) = train(&init_network(dims, cfg.seed)?, &rest, cfg)?;
        let test: Vec<(Vec<f64>, bool)> = fold.iter().map(|&i| (flatten(&data[i].0), data[i].1)).collect();
        acc.push(accuracy(&net, &test));
    }
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    Ok(KFoldReport {
        folds,
        accuracy: acc,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Label is the sign of cell (0, 0); the other cells are noise.
    fn separable(n: usize, seed: u64) -> Vec<(PcMatrix, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut cells: Vec<i64> = (0..8).map(|_| rng.random_range(-9..=9)).collect();
                if cells[0] == 0 {
                    cells[0] = 1;
                }
                let y = cells[0] > 0;
                (PcMatrix::from_cells(2, 2, cells), y)
            })
            .collect()
    }

    #[test]
    fn learns_a_separable_rule() {
        let data = separable(600, 1);
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e-2,
            batch_size: 16,
            patience: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let net = init_network(&[8, 5, 5, 1], 2).unwrap();
        let (net, report) = train(&net, &data, &cfg).unwrap();
        let last = report.epochs.last().unwrap();
        assert!(last.val_accuracy >= 0.99, "{report:?}");
        assert!(last.train_loss < report.epochs[0].train_loss);
        assert_eq!(net.group(), Some(GroupShape { rows: 2, cols: 4 }));
        assert!(net.col_scale().iter().all(|&s| s >= 1.0));
        assert_eq!(net.col_scale()[0], 9.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = separable(200, 2);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let net = init_network(&[8, 5, 1], 3).unwrap();
        let a = train(&net, &data, &cfg).unwrap();
        let b = train(&net, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stopping_restores_best() {
        let data = separable(100, 3);
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.05,
            patience: 3,
            ..TrainConfig::default()
        };
        let (_, report) = train(&init_network(&[8, 5, 1], 1).unwrap(), &data, &cfg).unwrap();
        let best = report.epochs[report.best_epoch - 1].val_loss;
        assert!(report.epochs.iter().all(|e| e.val_loss >= best));
        if report.stopped_early {
            assert_eq!(report.epochs.len(), report.best_epoch + 3);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let net = init_network(&[8, 5, 1], 1).unwrap();
        let cfg = TrainConfig::default();
        let one_class: Vec<_> = separable(50, 1).into_iter().map(|(m, _)| (m, true)).collect();
        assert!(matches!(train(&net, &one_class, &cfg), Err(DnnError::SingleClassData)));
        let mut mixed = separable(10, 1);
        mixed.push((PcMatrix::from_cells(1, 2, vec![0; 4]), true));
        assert!(matches!(train(&net, &mixed, &cfg), Err(DnnError::ShapeMismatch { .. })));
        assert!(matches!(
            train(&net, &separable(1, 1), &cfg),
            Err(DnnError::TooFewRecords { .. })
        ));
        let bad = TrainConfig {
            validation_split: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&net, &separable(10, 1), &bad), Err(DnnError::BadConfig(_))));
    }

    #[test]
    fn partition_properties() {
        let folds = kfold_partition(10, 10, 5);
        assert!(folds.iter().all(|f| f.len() == 1));
        for (n, k) in [(10, 3), (101, 5), (7, 7)] {
            let folds = kfold_partition(n, k, 9);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn kfold_runs() {
        let data = separable(300, 8);
        let cfg = TrainConfig {
            k: 3,
            epochs: 20,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let r = kfold_validate(&data, &[8, 5, 1], &cfg).unwrap();
        assert_eq!(r.accuracy.len(), 3);
        assert!(r.mean > 0.8, "{r:?}");
    }
}
