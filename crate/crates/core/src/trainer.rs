//! Loss, optimizers, the fusion training loop, and two reference baselines
//! (majority class, per-modality linear probe).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embrace::{ForwardMode, FusionModel};
use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// Feature slots of one record, aligned with a model's input list.
pub type FusionInputs = Vec<Option<Vec<f64>>>;

/// One training example for the fusion model.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: FusionInputs,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    None,
    InverseFrequency,
}

/// Training hyperparameters. Updates are per-record (batch size one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            class_weighting: ClassWeighting::None,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Adam accumulator constants.
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// First-order optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Self {
        let state = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Optimizer {
            kind,
            learning_rate,
            m: vec![0.0; state],
            v: vec![0.0; state],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
}

/// Weighted negative log likelihood and its gradient at the logits.
///
/// `loss = -weight * ln(max(p[label], 1e-12))`;
/// `grad_logits = weight * (p - onehot(label))`.
pub fn cross_entropy(probs: [f64; 2], label: u8, class_weight: f64) -> (f64, [f64; 2]) {
    let p = probs[label as usize].max(1e-12);
    let loss = -class_weight * p.ln();
    let mut grad = [probs[0], probs[1]];
    grad[label as usize] -= 1.0;
    (loss, [class_weight * grad[0], class_weight * grad[1]])
}

/// Per-class weights for a label list under the configured scheme.
pub fn class_weights(labels: impl Iterator<Item = u8>, weighting: ClassWeighting) -> [f64; 2] {
    match weighting {
        ClassWeighting::None => [1.0, 1.0],
        ClassWeighting::InverseFrequency => {
            let mut counts = [0usize; 2];
            let mut total = 0usize;
            for l in labels {
                counts[l as usize] += 1;
                total += 1;
            }
            let weight = |c: usize| {
                if counts[c] == 0 {
                    1.0
                } else {
                    total as f64 / (2.0 * counts[c] as f64)
                }
            };
            [weight(0), weight(1)]
        }
    }
}

/// Per-epoch losses plus a fingerprint of the final parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    pub params_sha256: String,
    /// Set when the training split held only one class.
    pub single_class_warning: bool,
}

pub fn params_fingerprint(params: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Train a fusion model in place with per-record updates.
///
/// Deterministic given `cfg.seed`: shuffling and mask sampling use fixed
/// derived streams.
pub fn train(
    model: &mut FusionModel,
    examples: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let single_class_warning = {
        let first = examples[0].label;
        examples.iter().all(|e| e.label == first)
    };
    let weights = class_weights(examples.iter().map(|e| e.label), cfg.class_weighting);

    let mut shuffle_rng = seed::rng(seed::derive(cfg.seed, tag::SHUFFLE));
    let mut mask_rng = seed::rng(seed::derive(cfg.seed, tag::MASK));
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.params().len());

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut total_loss = 0.0;
        for &idx in &order {
            let example = &examples[idx];
            let (probs, cache) =
                model.forward(&example.features, ForwardMode::Train(&mut mask_rng))?;
            let (loss, grad_logits) =
                cross_entropy(probs, example.label, weights[example.label as usize]);
            let grads = model.backward(&cache, grad_logits);
            optimizer.step(model.params_mut(), &grads);
            total_loss += loss;
        }
        let mean_loss = total_loss / examples.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at epoch {epoch}: mean loss {mean_loss}"
            )));
        }
        epoch_loss.push(mean_loss);
    }

    Ok(TrainHistory {
        epoch_loss,
        params_sha256: params_fingerprint(model.params()),
        single_class_warning,
    })
}

/// Predicts the more frequent class of its training split; ties go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MajorityBaseline {
    pub class: u8,
}

pub fn majority_baseline(labels: &[u8]) -> Result<MajorityBaseline> {
    if labels.is_empty() {
        return Err(Error::Data("majority baseline needs a non-empty split".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    Ok(MajorityBaseline {
        class: if pos > neg { 1 } else { 0 },
    })
}

impl MajorityBaseline {
    pub fn predict(&self) -> u8 {
        self.class
    }

    pub fn accuracy_on(&self, labels: &[u8]) -> f64 {
        let hits = labels.iter().filter(|&&l| l == self.class).count();
        hits as f64 / labels.len() as f64
    }
}

/// Logistic model over one modality's standardized fused vector.
///
/// Layout mirrors the fusion head: weights (2 x dim, row-major), bias (2).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearProbe {
    pub dim: usize,
    pub params: Vec<f64>,
}

impl LinearProbe {
    fn logits(&self, x: &[f64]) -> [f64; 2] {
        let d = self.dim;
        let mut logits = [0.0; 2];
        for (t, logit) in logits.iter_mut().enumerate() {
            *logit = self.params[t * d..(t + 1) * d]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + self.params[2 * d + t];
        }
        logits
    }

    pub fn probabilities(&self, x: &[f64]) -> [f64; 2] {
        let logits = self.logits(x);
        let max = logits[0].max(logits[1]);
        let exp = [(logits[0] - max).exp(), (logits[1] - max).exp()];
        let total = exp[0] + exp[1];
        [exp[0] / total, exp[1] / total]
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let p = self.probabilities(x);
        if p[1] > p[0] {
            1
        } else {
            0
        }
    }
}

/// Fit a linear probe on (vector, label) pairs with the shared optimizer loop.
pub fn linear_probe(examples: &[(Vec<f64>, u8)], cfg: &TrainConfig) -> Result<LinearProbe> {
    cfg.validate()?;
    let Some((first, _)) = examples.first() else {
        return Err(Error::Data("probe training split is empty".into()));
    };
    let dim = first.len();
    let mut probe = LinearProbe {
        dim,
        params: vec![0.0; 2 * dim + 2],
    };
    let weights = class_weights(examples.iter().map(|(_, l)| *l), cfg.class_weighting);

    let mut shuffle_rng = seed::rng(seed::derive(cfg.seed, tag::SHUFFLE));
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, probe.params.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut total_loss = 0.0;
        for &idx in &order {
            let (x, label) = &examples[idx];
            if x.len() != dim {
                return Err(Error::Data(format!(
                    "probe input of length {} among length-{dim} inputs",
                    x.len()
                )));
            }
            let probs = probe.probabilities(x);
            let (loss, grad_logits) = cross_entropy(probs, *label, weights[*label as usize]);
            let mut grads = vec![0.0; probe.params.len()];
            for t in 0..2 {
                for (j, v) in x.iter().enumerate() {
                    grads[t * dim + j] = grad_logits[t] * v;
                }
                grads[2 * dim + t] = grad_logits[t];
            }
            optimizer.step(&mut probe.params, &grads);
            total_loss += loss;
        }
        if !total_loss.is_finite() {
            return Err(Error::Numeric(format!("probe diverged at epoch {epoch}")));
        }
    }
    Ok(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ModalityId;
    use crate::embrace::InputSpec;
    use rand::Rng;

    #[test]
    fn cross_entropy_hand_cases() {
        let (loss, _) = cross_entropy([0.5, 0.5], 0, 1.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);

        let (floored, _) = cross_entropy([1.0, 0.0], 0, 1.0);
        assert!(floored.abs() < 1e-12);

        let (weighted, grad) = cross_entropy([0.25, 0.75], 1, 2.0);
        assert!((weighted - 2.0 * (1.0f64 / 0.75).ln()).abs() < 1e-12);
        assert!((grad[0] - 2.0 * 0.25).abs() < 1e-15);
        assert!((grad[1] - 2.0 * (0.75 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let softmax = |logits: [f64; 2]| {
            let max = logits[0].max(logits[1]);
            let e = [(logits[0] - max).exp(), (logits[1] - max).exp()];
            let t = e[0] + e[1];
            [e[0] / t, e[1] / t]
        };
        let loss_at = |logits: [f64; 2], label: u8, w: f64| {
            cross_entropy(softmax(logits), label, w).0
        };
        let mut rng = crate::seed::rng(0x44);
        for _ in 0..50 {
            let logits = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let label = rng.gen_range(0..2u8);
            let w = rng.gen_range(0.5..2.0);
            let (_, grad) = cross_entropy(softmax(logits), label, w);
            let h = 1e-6;
            for t in 0..2 {
                let mut plus = logits;
                plus[t] += h;
                let mut minus = logits;
                minus[t] -= h;
                let numeric = (loss_at(plus, label, w) - loss_at(minus, label, w)) / (2.0 * h);
                let denom = grad[t].abs().max(numeric.abs()).max(1e-8);
                assert!((grad[t] - numeric).abs() / denom < 1e-6);
            }
        }
    }

    #[test]
    fn adam_and_sgd_single_step_hand_check() {
        // Quadratic toy: gradient at the start equals the parameter value.
        let mut params = vec![1.0];
        let grads = vec![1.0];
        let mut sgd = Optimizer::new(OptimizerKind::Sgd, 0.1, 1);
        sgd.step(&mut params, &grads);
        assert!((params[0] - 0.9).abs() < 1e-15);

        let mut params = vec![1.0];
        let mut adam = Optimizer::new(OptimizerKind::Adam, 0.1, 1);
        adam.step(&mut params, &grads);
        // m_hat = v_hat = 1 after bias correction, so the step is lr/(1+eps).
        let want = 1.0 - 0.1 / (1.0 + ADAM_EPSILON);
        assert!((params[0] - want).abs() < 1e-12);
    }

    #[test]
    fn class_weighting_none_is_all_ones() {
        let labels = [0u8, 0, 0, 1];
        assert_eq!(class_weights(labels.iter().copied(), ClassWeighting::None), [1.0, 1.0]);
        let inv = class_weights(labels.iter().copied(), ClassWeighting::InverseFrequency);
        assert!((inv[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((inv[1] - 2.0).abs() < 1e-15);
    }

    fn separable_examples(n: usize, gap: f64, seed: u64) -> Vec<TrainExample> {
        let mut rng = crate::seed::rng(seed);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let base = if label == 1 { gap } else { -gap };
                TrainExample {
                    features: vec![Some(vec![
                        base + rng.gen_range(-0.5..0.5),
                        base + rng.gen_range(-0.5..0.5),
                    ])],
                    label,
                }
            })
            .collect()
    }

    fn tiny_model(seed: u64) -> FusionModel {
        FusionModel::new(
            vec![InputSpec { modality: ModalityId::Physio, dim: 2 }],
            4,
            None,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let examples = separable_examples(40, 1.0, 5);
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };

        let mut a = tiny_model(9);
        let ha = train(&mut a, &examples, &cfg).unwrap();
        let mut b = tiny_model(9);
        let hb = train(&mut b, &examples, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ha, hb);
        assert_eq!(ha.params_sha256, params_fingerprint(a.params()));
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let examples = separable_examples(60, 2.0, 6);
        let cfg = TrainConfig { epochs: 6, learning_rate: 1e-2, ..TrainConfig::default() };
        let mut model = tiny_model(4);
        let history = train(&mut model, &examples, &cfg).unwrap();
        assert!(history.epoch_loss[5] < history.epoch_loss[0]);
        assert!(history.epoch_loss.iter().all(|l| l.is_finite()));
        assert!(!history.single_class_warning);
    }

    #[test]
    fn single_class_split_is_flagged() {
        let examples: Vec<TrainExample> = separable_examples(10, 1.0, 2)
            .into_iter()
            .map(|mut e| {
                e.label = 0;
                e
            })
            .collect();
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let mut model = tiny_model(1);
        let history = train(&mut model, &examples, &cfg).unwrap();
        assert!(history.single_class_warning);
    }

    #[test]
    fn majority_baseline_accuracy() {
        let mut labels = vec![0u8; 804];
        labels.extend(vec![1u8; 164]);
        let baseline = majority_baseline(&labels).unwrap();
        assert_eq!(baseline.predict(), 0);
        let acc = baseline.accuracy_on(&labels);
        assert!((acc - 804.0 / 968.0).abs() < 1e-12);
        // 804/968 = 83.06%.
        assert!((acc - 0.8306).abs() < 1e-4);
    }

    #[test]
    fn probe_learns_separable_data_and_flails_on_noise() {
        let mut rng = crate::seed::rng(0x71);
        let make = |signal: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<(Vec<f64>, u8)> {
            (0..200)
                .map(|i| {
                    let label = (i % 4 == 0) as u8; // 1:3 imbalance
                    let base = if label == 1 { signal } else { 0.0 };
                    let x = vec![base + rng.gen_range(-1.0..1.0), base + rng.gen_range(-1.0..1.0)];
                    (x, label)
                })
                .collect()
        };
        let cfg = TrainConfig { epochs: 20, learning_rate: 1e-2, ..TrainConfig::default() };

        let strong = make(3.0, &mut rng);
        let probe = linear_probe(&strong, &cfg).unwrap();
        let acc = strong
            .iter()
            .filter(|(x, l)| probe.predict(x) == *l)
            .count() as f64
            / strong.len() as f64;
        assert!(acc > 0.9, "separable probe accuracy {acc}");

        let noise = make(0.0, &mut rng);
        let noise_probe = linear_probe(&noise, &cfg).unwrap();
        let noise_acc = noise
            .iter()
            .filter(|(x, l)| noise_probe.predict(x) == *l)
            .count() as f64
            / noise.len() as f64;
        // Majority rate is 0.75 here; a no-signal probe should sit near it.
        assert!((noise_acc - 0.75).abs() <= 0.08, "noise probe accuracy {noise_acc}");
    }
}
