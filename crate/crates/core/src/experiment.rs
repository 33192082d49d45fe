//! Two-network ellipse experiment: label an LHS sample by an ellipse, train
//! two 2 -> 32 -> 1 ReLU/sigmoid networks from different seeds with unit-norm
//! hidden rows, then compare their hidden layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{compare_layers_with, LayerComparisonReport};
use crate::model::{Activation, Layer, Network};
use crate::rng::SplitMix64;
use crate::sampling::{generate_lhs, SampleSet};
use crate::sketching::{build_hash_family, DEFAULT_MASTER_SEED};

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.batch_size == 0 {
            return Err(Error::Domain("hidden_width and batch_size must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Domain(format!("train_fraction {} not in (0, 1)", self.train_fraction)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// 1 strictly inside `x1^2/9 + x2^2/16 = 1`, else 0.
pub fn ellipse_label(x1: f64, x2: f64) -> u8 {
    u8::from(x1 * x1 / 9.0 + x2 * x2 / 16.0 - 1.0 < 0.0)
}

pub fn generate_ellipse_labels(points: &SampleSet<f64>) -> Result<Vec<u8>> {
    if points.dim() != 2 {
        return Err(Error::Shape(format!("ellipse labels need 2-D points, got {}", points.dim())));
    }
    Ok(points.points.iter().map(|p| ellipse_label(p[0], p[1])).collect())
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network<f64>,
    pub test_accuracy: f64,
    /// Training-split BCE before the first epoch and after each epoch.
    pub loss_history: Vec<f64>,
}

/// Parameters of the 1-hidden-layer classifier in flat form.
struct Mlp {
    d: usize,
    h: usize,
    w1: Vec<f64>, // h x d, row-major
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl Mlp {
    fn init(d: usize, h: usize, rng: &mut SplitMix64) -> Self {
        let mut uniform = |limit: f64| (2.0 * rng.next_f64() - 1.0) * limit;
        let lim1 = (6.0 / (d + h) as f64).sqrt();
        let w1 = (0..h * d).map(|_| uniform(lim1)).collect();
        let lim2 = (6.0 / (h + 1) as f64).sqrt();
        let w2 = (0..h).map(|_| uniform(lim2)).collect();
        let mut mlp = Self {
            d,
            h,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: 0.0,
        };
        mlp.project_unit_rows();
        mlp
    }

    fn project_unit_rows(&mut self) {
        for row in self.w1.chunks_mut(self.d) {
            let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|w| *w /= norm);
            }
        }
    }

    fn predict(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let mut z2 = self.b2;
        for j in 0..self.h {
            let row = &self.w1[j * self.d..(j + 1) * self.d];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            hidden[j] = z.max(0.0);
            z2 += self.w2[j] * hidden[j];
        }
        1.0 / (1.0 + (-z2).exp())
    }

    fn bce(&self, points: &[Vec<f64>], labels: &[u8], idx: &[usize]) -> f64 {
        let mut hidden = vec![0.0; self.h];
        let total: f64 = idx
            .iter()
            .map(|&i| {
                let p = self.predict(&points[i], &mut hidden).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                if labels[i] == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum();
        total / idx.len() as f64
    }

    fn accuracy(&self, points: &[Vec<f64>], labels: &[u8], idx: &[usize]) -> f64 {
        let mut hidden = vec![0.0; self.h];
        let hits = idx
            .iter()
            .filter(|&&i| u8::from(self.predict(&points[i], &mut hidden) > 0.5) == labels[i])
            .count();
        hits as f64 / idx.len() as f64
    }

    /// Mean BCE gradient over `batch`.
    fn gradients(&self, points: &[Vec<f64>], labels: &[u8], batch: &[usize], g: &mut Grads) {
        g.w1.iter_mut().for_each(|v| *v = 0.0);
        g.b1.iter_mut().for_each(|v| *v = 0.0);
        g.w2.iter_mut().for_each(|v| *v = 0.0);
        g.b2 = 0.0;
        let mut hidden = vec![0.0; self.h];
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let x = &points[i];
            let p = self.predict(x, &mut hidden);
            let dz2 = (p - f64::from(labels[i])) * scale;
            g.b2 += dz2;
            for j in 0..self.h {
                g.w2[j] += dz2 * hidden[j];
                if hidden[j] > 0.0 {
                    let dz1 = dz2 * self.w2[j];
                    g.b1[j] += dz1;
                    for (gw, v) in g.w1[j * self.d..(j + 1) * self.d].iter_mut().zip(x) {
                        *gw += dz1 * v;
                    }
                }
            }
        }
    }

    fn into_network(self) -> Result<Network<f64>> {
        let hidden = Layer::new(
            self.w1.chunks(self.d).map(<[f64]>::to_vec).collect(),
            self.b1,
            Activation::Relu,
        )?;
        let output = Layer::new(vec![self.w2], vec![self.b2], Activation::Sigmoid)?;
        Network::new(vec![hidden, output])
    }
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(config: &TrainConfig, n_params: usize) -> Self {
        Self {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            lr: config.learning_rate,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    fn update(&mut self, mlp: &mut Mlp, g: &Grads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let params = mlp
            .w1
            .iter_mut()
            .chain(mlp.b1.iter_mut())
            .chain(mlp.w2.iter_mut())
            .chain(std::iter::once(&mut mlp.b2));
        let grads = g.w1.iter().chain(&g.b1).chain(&g.w2).chain(std::iter::once(&g.b2));
        for (((p, &gr), m), v) in params.zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gr;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gr * gr;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Trains a `d -> hidden_width (relu) -> 1 (sigmoid)` classifier with Adam on
/// binary cross-entropy, re-projecting every hidden weight row onto the unit
/// sphere after each step.
pub fn train_mlp(points: &[Vec<f64>], labels: &[u8], config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if points.len() != labels.len() {
        return Err(Error::Shape(format!("{} points but {} labels", points.len(), labels.len())));
    }
    if points.len() < 2 {
        return Err(Error::DegenerateData("need at least two points".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points must share a positive dimension".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateData("labels contain a single class".into()));
    }

    let mut init_rng = SplitMix64::with_stream(config.seed, 0);
    let mut split_rng = SplitMix64::with_stream(config.seed, 1);
    let mut shuffle_rng = SplitMix64::with_stream(config.seed, 2);

    let n = points.len();
    let order = split_rng.permutation(n);
    let n_train = ((n as f64 * config.train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();

    let mut mlp = Mlp::init(d, config.hidden_width, &mut init_rng);
    let h = config.hidden_width;
    let mut adam = Adam::new(config, h * d + h + h + 1);
    let mut grads = Grads {
        w1: vec![0.0; h * d],
        b1: vec![0.0; h],
        w2: vec![0.0; h],
        b2: 0.0,
    };

    let mut loss_history = Vec::with_capacity(config.epochs + 1);
    loss_history.push(mlp.bce(points, labels, &train_idx));
    for _ in 0..config.epochs {
        shuffle_rng.shuffle(&mut train_idx);
        for batch in train_idx.chunks(config.batch_size) {
            mlp.gradients(points, labels, batch, &mut grads);
            adam.update(&mut mlp, &grads);
            mlp.project_unit_rows();
        }
        loss_history.push(mlp.bce(points, labels, &train_idx));
    }

    let test_accuracy = mlp.accuracy(points, labels, test_idx);
    Ok(TrainedModel {
        network: mlp.into_network()?,
        test_accuracy,
        loss_history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub seed_a: u64,
    pub seed_b: u64,
    pub n_samples: usize,
    pub k: usize,
    pub sample_seed: u64,
    pub hash_seed: u64,
    pub bounds: Vec<(f64, f64)>,
    pub train: TrainConfig,
}

impl ReplicationConfig {
    pub fn new(seed_a: u64, seed_b: u64) -> Self {
        Self {
            seed_a,
            seed_b,
            n_samples: 16_000,
            k: 512,
            sample_seed: 42,
            hash_seed: DEFAULT_MASTER_SEED,
            bounds: vec![(-10.0, 10.0), (-10.0, 10.0)],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seed: u64,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    #[serde(flatten)]
    pub comparison: LayerComparisonReport,
    pub training_a: TrainingSummary,
    pub training_b: TrainingSummary,
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub report: ReplicationReport,
    pub model_a: TrainedModel,
    pub model_b: TrainedModel,
    pub samples: SampleSet<f64>,
}

/// LHS sample, ellipse labels, two trained networks, hidden-layer comparison
/// with exact validation.
pub fn run_replication(config: &ReplicationConfig) -> Result<Replication> {
    let samples = generate_lhs(config.n_samples, &config.bounds, config.sample_seed)?;
    let labels = generate_ellipse_labels(&samples)?;
    let cfg_a = TrainConfig {
        seed: config.seed_a,
        ..config.train.clone()
    };
    let cfg_b = TrainConfig {
        seed: config.seed_b,
        ..config.train.clone()
    };
    let (model_a, model_b) = rayon::join(
        || train_mlp(&samples.points, &labels, &cfg_a),
        || train_mlp(&samples.points, &labels, &cfg_b),
    );
    let (model_a, model_b) = (model_a?, model_b?);

    let family = build_hash_family(config.k, config.hash_seed)?;
    let comparison = compare_layers_with(&model_a.network, &model_b.network, 0, &samples, &family, true)?;
    let summary = |m: &TrainedModel, seed| TrainingSummary {
        seed,
        test_accuracy: m.test_accuracy,
        final_train_loss: *m.loss_history.last().unwrap_or(&f64::NAN),
    };
    let report = ReplicationReport {
        training_a: summary(&model_a, config.seed_a),
        training_b: summary(&model_b, config.seed_b),
        comparison,
    };
    Ok(Replication {
        report,
        model_a,
        model_b,
        samples,
    })
}
