//! Stochastic multimodal fusion network.
//!
//! Per-modality docking layers project each input into a common embracement
//! space of dimension `c`. A multinomial mask picks exactly one modality per
//! coordinate during training; inference uses the expectation over the mask
//! instead. Unavailable modalities get probability zero and the remaining
//! probabilities are renormalized. A single affine head maps the fused vector
//! to two class logits. Gradients are hand-derived for this fixed topology,
//! treating a sampled mask as constant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ModalityId;
use crate::error::{Error, Result};
use crate::seed;

/// One fusion input: which modality and its vector length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub modality: ModalityId,
    pub dim: usize,
}

/// What to do when every probability of an available modality is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMassPolicy {
    UniformOverAvailable,
    Error,
}

impl Default for ZeroMassPolicy {
    fn default() -> Self {
        ZeroMassPolicy::UniformOverAvailable
    }
}

/// Zero out unavailable modalities and rescale the rest to sum one.
pub fn renormalize_p(p: &[f64], availability: &[bool], policy: ZeroMassPolicy) -> Result<Vec<f64>> {
    if p.len() != availability.len() {
        return Err(Error::Data(format!(
            "renormalize_p: {} probabilities vs {} availability flags",
            p.len(),
            availability.len()
        )));
    }
    let n_avail = availability.iter().filter(|a| **a).count();
    if n_avail == 0 {
        return Err(Error::Data("no available modality to renormalize over".into()));
    }
    let mut masked: Vec<f64> = p
        .iter()
        .zip(availability)
        .map(|(v, a)| if *a { *v } else { 0.0 })
        .collect();
    let total: f64 = masked.iter().sum();
    if total > 0.0 {
        for v in &mut masked {
            *v /= total;
        }
        Ok(masked)
    } else {
        match policy {
            ZeroMassPolicy::UniformOverAvailable => Ok(availability
                .iter()
                .map(|a| if *a { 1.0 / n_avail as f64 } else { 0.0 })
                .collect()),
            ZeroMassPolicy::Error => Err(Error::Data(
                "probability mass lies entirely on unavailable modalities".into(),
            )),
        }
    }
}

/// Per-coordinate modality selection; coordinate `i` takes its value from
/// modality `selection[i]`, so exactly one modality contributes per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbraceMask {
    pub selection: Vec<usize>,
}

/// Draw an embracement mask: `c` independent categorical draws from `p`.
pub fn sample_mask(p: &[f64], c: usize, rng: &mut ChaCha8Rng) -> Result<EmbraceMask> {
    let total: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|v| *v < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!(
            "sample_mask requires probabilities on the simplex (sum {total})"
        )));
    }
    let last_positive = p
        .iter()
        .rposition(|v| *v > 0.0)
        .ok_or_else(|| Error::Data("sample_mask requires positive mass somewhere".into()))?;
    let selection = (0..c)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            for (k, v) in p.iter().enumerate() {
                acc += v;
                if u < acc && *v > 0.0 {
                    return k;
                }
            }
            last_positive
        })
        .collect();
    Ok(EmbraceMask { selection })
}

/// Coordinate-wise selection of the masked modality.
pub fn embrace(docked: &[Vec<f64>], mask: &EmbraceMask) -> Vec<f64> {
    mask.selection
        .iter()
        .enumerate()
        .map(|(i, &k)| docked[k][i])
        .collect()
}

/// Expectation of the sampled embracement: a probability-weighted mixture.
pub fn embrace_expected(docked: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    let c = docked.first().map(|d| d.len()).unwrap_or(0);
    (0..c)
        .map(|i| docked.iter().zip(p).map(|(d, w)| w * d[i]).sum())
        .collect()
}

/// Evaluation mode for [`FusionModel::forward`].
pub enum ForwardMode<'r> {
    /// Sample a fresh mask from the renormalized probabilities.
    Train(&'r mut ChaCha8Rng),
    /// Deterministic expectation over masks.
    Infer,
}

/// Intermediate state of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pub x: Vec<Option<Vec<f64>>>,
    /// Pre-activation docking outputs.
    pub z: Vec<Option<Vec<f64>>>,
    pub docked: Vec<Option<Vec<f64>>>,
    pub p_eff: Vec<f64>,
    pub mask: Option<EmbraceMask>,
    pub fused: Vec<f64>,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

/// The fusion model: docking parameters per modality, mask probabilities,
/// and the classifier head, stored as one flat parameter vector.
///
/// Layout: for each input `k`, `W^k` (c x dim_k, row-major) then `b^k` (c);
/// then the head weights (2 x c, row-major) and head bias (2).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    inputs: Vec<InputSpec>,
    embrace_dim: usize,
    probs: Vec<f64>,
    zero_mass: ZeroMassPolicy,
    params: Vec<f64>,
    dock_offsets: Vec<usize>,
    head_offset: usize,
}

impl FusionModel {
    /// Build a model with symmetric uniform initialization, seeded.
    pub fn new(
        inputs: Vec<InputSpec>,
        embrace_dim: usize,
        probs: Option<Vec<f64>>,
        init_seed: u64,
    ) -> Result<Self> {
        let m = inputs.len();
        if m == 0 {
            return Err(Error::Config("fusion model needs at least one input".into()));
        }
        if embrace_dim == 0 {
            return Err(Error::Config("embracement size must be positive".into()));
        }
        let probs = probs.unwrap_or_else(|| vec![1.0 / m as f64; m]);
        if probs.len() != m {
            return Err(Error::Config(format!(
                "{} probabilities for {m} inputs",
                probs.len()
            )));
        }
        if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("modality probabilities must lie on the simplex".into()));
        }

        let mut model = Self::zeroed(inputs, embrace_dim, probs);
        let mut rng = seed::rng(init_seed);
        let c = model.embrace_dim;
        for k in 0..m {
            let dim = model.inputs[k].dim;
            let bound = (6.0 / (dim + c) as f64).sqrt();
            let off = model.dock_offsets[k];
            for v in &mut model.params[off..off + c * dim + c] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        let bound = (6.0 / (c + 2) as f64).sqrt();
        let off = model.head_offset;
        for v in &mut model.params[off..] {
            *v = rng.gen_range(-bound..bound);
        }
        Ok(model)
    }

    fn zeroed(inputs: Vec<InputSpec>, embrace_dim: usize, probs: Vec<f64>) -> Self {
        let c = embrace_dim;
        let mut dock_offsets = Vec::with_capacity(inputs.len());
        let mut offset = 0;
        for spec in &inputs {
            dock_offsets.push(offset);
            offset += c * spec.dim + c;
        }
        let head_offset = offset;
        let total = head_offset + 2 * c + 2;
        FusionModel {
            inputs,
            embrace_dim,
            probs,
            zero_mass: ZeroMassPolicy::default(),
            params: vec![0.0; total],
            dock_offsets,
            head_offset,
        }
    }

    /// Rebuild a model from explicit parts (checkpoint loading, tests).
    pub fn from_parts(
        inputs: Vec<InputSpec>,
        embrace_dim: usize,
        probs: Vec<f64>,
        zero_mass: ZeroMassPolicy,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeroed(inputs, embrace_dim, probs);
        if params.len() != model.params.len() {
            return Err(Error::Data(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                model.params.len()
            )));
        }
        model.params = params;
        model.zero_mass = zero_mass;
        Ok(model)
    }

    pub fn inputs(&self) -> &[InputSpec] {
        &self.inputs
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn embrace_dim(&self) -> usize {
        self.embrace_dim
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of modality `k`'s parameter block (weights, then bias).
    pub fn dock_offset(&self, k: usize) -> usize {
        self.dock_offsets[k]
    }

    /// Length of modality `k`'s parameter block.
    pub fn dock_len(&self, k: usize) -> usize {
        self.embrace_dim * self.inputs[k].dim + self.embrace_dim
    }

    /// Offset of the classifier head block.
    pub fn head_offset(&self) -> usize {
        self.head_offset
    }

    pub fn set_zero_mass_policy(&mut self, policy: ZeroMassPolicy) {
        self.zero_mass = policy;
    }

    fn dock_weights(&self, k: usize) -> &[f64] {
        let off = self.dock_offsets[k];
        &self.params[off..off + self.embrace_dim * self.inputs[k].dim]
    }

    fn dock_bias(&self, k: usize) -> &[f64] {
        let off = self.dock_offsets[k] + self.embrace_dim * self.inputs[k].dim;
        &self.params[off..off + self.embrace_dim]
    }

    /// Docked representation of `x` through modality `k`: `relu(W x + b)`.
    pub fn dock(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        Ok(self.dock_parts(x, k)?.1)
    }

    fn dock_parts(&self, x: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let dim = self.inputs[k].dim;
        if x.len() != dim {
            return Err(Error::Data(format!(
                "modality {}: input length {} does not match docking dim {dim}",
                self.inputs[k].modality,
                x.len()
            )));
        }
        let w = self.dock_weights(k);
        let b = self.dock_bias(k);
        let mut z = Vec::with_capacity(self.embrace_dim);
        for i in 0..self.embrace_dim {
            let row = &w[i * dim..(i + 1) * dim];
            let dot: f64 = row.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
            z.push(dot + b[i]);
        }
        let d = z.iter().map(|v| v.max(0.0)).collect();
        Ok((z, d))
    }

    fn availability(features: &[Option<Vec<f64>>]) -> Vec<bool> {
        features.iter().map(|f| f.is_some()).collect()
    }

    /// Full forward pass producing class probabilities.
    pub fn forward(
        &self,
        features: &[Option<Vec<f64>>],
        mode: ForwardMode,
    ) -> Result<([f64; 2], Cache)> {
        let p_eff = renormalize_p(&self.probs, &Self::availability(features), self.zero_mass)?;
        match mode {
            ForwardMode::Train(rng) => {
                let mask = sample_mask(&p_eff, self.embrace_dim, rng)?;
                self.forward_inner(features, p_eff, Some(mask))
            }
            ForwardMode::Infer => self.forward_inner(features, p_eff, None),
        }
    }

    /// Forward pass with an externally fixed mask (gradient checks, replay).
    pub fn forward_with_mask(
        &self,
        features: &[Option<Vec<f64>>],
        mask: EmbraceMask,
    ) -> Result<([f64; 2], Cache)> {
        let p_eff = renormalize_p(&self.probs, &Self::availability(features), self.zero_mass)?;
        self.forward_inner(features, p_eff, Some(mask))
    }

    fn forward_inner(
        &self,
        features: &[Option<Vec<f64>>],
        p_eff: Vec<f64>,
        mask: Option<EmbraceMask>,
    ) -> Result<([f64; 2], Cache)> {
        let m = self.inputs.len();
        if features.len() != m {
            return Err(Error::Data(format!(
                "{} feature slots for a model with {m} inputs",
                features.len()
            )));
        }
        let c = self.embrace_dim;

        let mut z_all: Vec<Option<Vec<f64>>> = vec![None; m];
        let mut docked_all: Vec<Option<Vec<f64>>> = vec![None; m];
        for k in 0..m {
            if let Some(x) = &features[k] {
                let (z, d) = self.dock_parts(x, k)?;
                z_all[k] = Some(z);
                docked_all[k] = Some(d);
            }
        }

        let fused: Vec<f64> = match &mask {
            Some(mask) => {
                if mask.selection.len() != c {
                    return Err(Error::Data(format!(
                        "mask has {} coordinates, expected {c}",
                        mask.selection.len()
                    )));
                }
                mask.selection
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| match &docked_all[k] {
                        Some(d) => Ok(d[i]),
                        None => Err(Error::Data(format!(
                            "mask selects unavailable modality {}",
                            self.inputs[k].modality
                        ))),
                    })
                    .collect::<Result<_>>()?
            }
            None => (0..c)
                .map(|i| {
                    docked_all
                        .iter()
                        .zip(&p_eff)
                        .filter_map(|(d, w)| d.as_ref().map(|d| w * d[i]))
                        .sum()
                })
                .collect(),
        };

        let hw = &self.params[self.head_offset..self.head_offset + 2 * c];
        let hb = &self.params[self.head_offset + 2 * c..];
        let mut logits = [0.0f64; 2];
        for (t, logit) in logits.iter_mut().enumerate() {
            *logit = hw[t * c..(t + 1) * c]
                .iter()
                .zip(&fused)
                .map(|(w, e)| w * e)
                .sum::<f64>()
                + hb[t];
        }
        let max = logits[0].max(logits[1]);
        let exp = [(logits[0] - max).exp(), (logits[1] - max).exp()];
        let total = exp[0] + exp[1];
        let probs = [exp[0] / total, exp[1] / total];

        let cache = Cache {
            x: features.to_vec(),
            z: z_all,
            docked: docked_all,
            p_eff,
            mask,
            fused,
            logits,
            probs,
        };
        Ok((probs, cache))
    }

    /// Exact gradients w.r.t. every parameter, given the loss gradient at the
    /// logits. A sampled mask is treated as a constant; the ReLU subgradient
    /// at zero is zero. Returns a vector aligned with [`Self::params`].
    pub fn backward(&self, cache: &Cache, grad_logits: [f64; 2]) -> Vec<f64> {
        let c = self.embrace_dim;
        let mut grads = vec![0.0; self.params.len()];

        let hw = &self.params[self.head_offset..self.head_offset + 2 * c];
        for t in 0..2 {
            let g = grad_logits[t];
            let row = self.head_offset + t * c;
            for i in 0..c {
                grads[row + i] = g * cache.fused[i];
            }
            grads[self.head_offset + 2 * c + t] = g;
        }

        let grad_fused: Vec<f64> = (0..c)
            .map(|i| grad_logits[0] * hw[i] + grad_logits[1] * hw[c + i])
            .collect();

        for k in 0..self.inputs.len() {
            let (Some(z), Some(x)) = (&cache.z[k], &cache.x[k]) else {
                continue; // unavailable modality: gradients stay zero
            };
            let dim = self.inputs[k].dim;
            let off = self.dock_offsets[k];
            for i in 0..c {
                let route = match &cache.mask {
                    Some(mask) => {
                        if mask.selection[i] == k {
                            grad_fused[i]
                        } else {
                            0.0
                        }
                    }
                    None => cache.p_eff[k] * grad_fused[i],
                };
                if route == 0.0 || z[i] <= 0.0 {
                    continue;
                }
                let row = off + i * dim;
                for j in 0..dim {
                    grads[row + j] += route * x[j];
                }
                grads[off + c * dim + i] += route;
            }
        }
        grads
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = self.embrace_dim;
        let docks = (0..self.inputs.len())
            .map(|k| {
                let dim = self.inputs[k].dim;
                let w = self.dock_weights(k);
                DockCheckpoint {
                    modality: self.inputs[k].modality,
                    shape: [c, dim],
                    weights: (0..c).map(|i| w[i * dim..(i + 1) * dim].to_vec()).collect(),
                    bias: self.dock_bias(k).to_vec(),
                }
            })
            .collect();
        let hw = &self.params[self.head_offset..self.head_offset + 2 * c];
        let hb = &self.params[self.head_offset + 2 * c..];
        Checkpoint {
            embrace_dim: c,
            zero_mass: self.zero_mass,
            inputs: self.inputs.clone(),
            probs: self.probs.clone(),
            docks,
            head: HeadCheckpoint {
                shape: [2, c],
                weights: vec![hw[..c].to_vec(), hw[c..].to_vec()],
                bias: hb.to_vec(),
            },
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let c = ckpt.embrace_dim;
        let mut params = Vec::new();
        if ckpt.docks.len() != ckpt.inputs.len() {
            return Err(Error::Data("checkpoint dock count differs from input count".into()));
        }
        for (dock, spec) in ckpt.docks.iter().zip(&ckpt.inputs) {
            if dock.shape != [c, spec.dim]
                || dock.weights.len() != c
                || dock.weights.iter().any(|r| r.len() != spec.dim)
                || dock.bias.len() != c
            {
                return Err(Error::Data(format!(
                    "checkpoint dock for {} has inconsistent shapes",
                    dock.modality
                )));
            }
            for row in &dock.weights {
                params.extend(row);
            }
            params.extend(&dock.bias);
        }
        if ckpt.head.shape != [2, c]
            || ckpt.head.weights.len() != 2
            || ckpt.head.weights.iter().any(|r| r.len() != c)
            || ckpt.head.bias.len() != 2
        {
            return Err(Error::Data("checkpoint head has inconsistent shapes".into()));
        }
        for row in &ckpt.head.weights {
            params.extend(row);
        }
        params.extend(&ckpt.head.bias);
        Self::from_parts(ckpt.inputs, c, ckpt.probs, ckpt.zero_mass, params)
    }

    /// Serialize to JSON. Doubles survive the round trip exactly.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Data(format!("malformed checkpoint: {e}")))?;
        Self::from_checkpoint(ckpt)
    }
}

/// Shape-annotated serialized form of a [`FusionModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub embrace_dim: usize,
    pub zero_mass: ZeroMassPolicy,
    pub inputs: Vec<InputSpec>,
    pub probs: Vec<f64>,
    pub docks: Vec<DockCheckpoint>,
    pub head: HeadCheckpoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DockCheckpoint {
    pub modality: ModalityId,
    pub shape: [usize; 2],
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadCheckpoint {
    pub shape: [usize; 2],
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_inputs(dims: &[usize]) -> Vec<InputSpec> {
        dims.iter()
            .zip(ModalityId::ALL)
            .map(|(dim, modality)| InputSpec { modality, dim: *dim })
            .collect()
    }

    fn some(v: Vec<f64>) -> Option<Vec<f64>> {
        Some(v)
    }

    #[test]
    fn dock_hand_cases() {
        // One modality, scalar in, scalar out: w=[[2]], b=[1].
        let model = FusionModel::from_parts(
            tiny_inputs(&[1]),
            1,
            vec![1.0],
            ZeroMassPolicy::default(),
            vec![2.0, 1.0, 0.0, 0.0, 0.0, 0.0], // w, b, head w (2x1), head b (2)
        )
        .unwrap();
        assert_eq!(model.dock(&[3.0], 0).unwrap(), vec![7.0]);

        // ReLU clips negatives: w=1, b=0, x=-3.
        let clip = FusionModel::from_parts(
            tiny_inputs(&[1]),
            1,
            vec![1.0],
            ZeroMassPolicy::default(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(clip.dock(&[-3.0], 0).unwrap(), vec![0.0]);

        // Zero weights and bias give the zero vector.
        let zero = FusionModel::from_parts(
            tiny_inputs(&[4]),
            3,
            vec![1.0],
            ZeroMassPolicy::default(),
            vec![0.0; 3 * 4 + 3 + 2 * 3 + 2],
        )
        .unwrap();
        assert_eq!(zero.dock(&[1.0, -2.0, 3.0, 4.0], 0).unwrap(), vec![0.0; 3]);

        // Dimension mismatch names the modality.
        let err = zero.dock(&[1.0], 0).unwrap_err();
        assert!(err.to_string().contains("expression"));
    }

    #[test]
    fn mask_one_hot_and_determinism() {
        let mut p = vec![0.0; 10];
        p[3] = 1.0;
        let mask = sample_mask(&p, 32, &mut crate::seed::rng(1)).unwrap();
        assert!(mask.selection.iter().all(|&k| k == 3));

        let uniform = vec![0.1; 10];
        let a = sample_mask(&uniform, 32, &mut crate::seed::rng(5)).unwrap();
        let b = sample_mask(&uniform, 32, &mut crate::seed::rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_frequencies_match_probabilities() {
        let p = vec![0.1; 10];
        let c = 32;
        let mut rng = crate::seed::rng(9);
        let trials = 100_000;
        let mut counts = vec![0usize; 10];
        for _ in 0..trials {
            let mask = sample_mask(&p, c, &mut rng).unwrap();
            for &k in &mask.selection {
                counts[k] += 1;
            }
        }
        let total = (trials * c) as f64;
        for (k, &n) in counts.iter().enumerate() {
            let freq = n as f64 / total;
            assert!((freq - 0.1).abs() < 0.01, "modality {k}: frequency {freq}");
        }
    }

    #[test]
    fn embrace_selects_per_coordinate() {
        let docked = vec![vec![1.0; 4], vec![3.0; 4]];
        let all_zero = EmbraceMask { selection: vec![0; 4] };
        assert_eq!(embrace(&docked, &all_zero), vec![1.0; 4]);

        let alternating = EmbraceMask { selection: vec![0, 1, 0, 1] };
        assert_eq!(embrace(&docked, &alternating), vec![1.0, 3.0, 1.0, 3.0]);

        let mask = sample_mask(&[0.5, 0.5], 4, &mut crate::seed::rng(2)).unwrap();
        for v in embrace(&docked, &mask) {
            assert!(v == 1.0 || v == 3.0);
        }
    }

    #[test]
    fn embrace_expected_cases() {
        let docked = vec![vec![1.0; 4], vec![3.0; 4]];
        assert_eq!(embrace_expected(&docked, &[0.5, 0.5]), vec![2.0; 4]);
        assert_eq!(
            embrace_expected(&docked, &[0.0, 1.0]),
            embrace(&docked, &EmbraceMask { selection: vec![1; 4] })
        );
    }

    #[test]
    fn sampled_embrace_converges_to_expectation() {
        let docked = vec![vec![1.0, -0.5, 2.0], vec![0.0, 4.0, 1.0], vec![2.0, 2.0, 2.0]];
        let p = [0.2, 0.5, 0.3];
        let expected = embrace_expected(&docked, &p);
        let mut rng = crate::seed::rng(13);
        let trials = 100_000;
        let mut mean = vec![0.0; 3];
        for _ in 0..trials {
            let mask = sample_mask(&p, 3, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(embrace(&docked, &mask)) {
                *m += v;
            }
        }
        for (m, e) in mean.iter().zip(&expected) {
            assert!((m / trials as f64 - e).abs() < 1e-2);
        }
    }

    #[test]
    fn renormalize_cases() {
        let uniform = vec![0.1; 10];
        let mut avail = vec![true; 10];
        avail[4] = false;
        let p = renormalize_p(&uniform, &avail, ZeroMassPolicy::default()).unwrap();
        assert_eq!(p[4], 0.0);
        for (k, v) in p.iter().enumerate() {
            if k != 4 {
                assert!((v - 1.0 / 9.0).abs() < 1e-15);
            }
        }

        let mut one_hot = vec![0.0; 10];
        one_hot[2] = 1.0;
        let same = renormalize_p(&one_hot, &vec![true; 10], ZeroMassPolicy::default()).unwrap();
        assert_eq!(same, one_hot);

        // One-hot on a missing modality: default spreads uniformly over the rest.
        let mut missing = vec![true; 10];
        missing[2] = false;
        let spread =
            renormalize_p(&one_hot, &missing, ZeroMassPolicy::UniformOverAvailable).unwrap();
        assert_eq!(spread[2], 0.0);
        assert!((spread.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(renormalize_p(&one_hot, &missing, ZeroMassPolicy::Error).is_err());

        assert!(renormalize_p(&uniform, &vec![false; 10], ZeroMassPolicy::default()).is_err());
    }

    #[test]
    fn forward_probabilities_sum_to_one() {
        let model = FusionModel::new(tiny_inputs(&[3, 2]), 4, None, 21).unwrap();
        let features = vec![some(vec![0.4, -1.0, 2.0]), some(vec![1.0, 1.0])];
        let (probs, _) = model.forward(&features, ForwardMode::Infer).unwrap();
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);

        let (again, _) = model.forward(&features, ForwardMode::Infer).unwrap();
        assert_eq!(probs, again);
    }

    #[test]
    fn zeroed_head_gives_even_probabilities() {
        let mut model = FusionModel::new(tiny_inputs(&[3]), 4, None, 3).unwrap();
        let head = model.head_offset();
        for v in &mut model.params_mut()[head..] {
            *v = 0.0;
        }
        let (probs, _) = model
            .forward(&[some(vec![1.0, 2.0, 3.0])], ForwardMode::Infer)
            .unwrap();
        assert_eq!(probs, [0.5, 0.5]);
    }

    /// Loss linear in the logits makes the expected gradient exact.
    fn linear_loss(model: &FusionModel, features: &[Option<Vec<f64>>], mask: &EmbraceMask) -> f64 {
        let (_, cache) = model.forward_with_mask(features, mask.clone()).unwrap();
        0.7 * cache.logits[0] - 1.3 * cache.logits[1]
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng;
        for trial in 0..5u64 {
            let init = 100 + trial;
            let model = FusionModel::new(tiny_inputs(&[3, 2, 4]), 4, None, init).unwrap();
            let mut rng = crate::seed::rng(init ^ 0xabc);
            let features: Vec<Option<Vec<f64>>> = model
                .inputs()
                .iter()
                .map(|s| some((0..s.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            let mask = sample_mask(model.probs(), 4, &mut rng).unwrap();

            let (_, cache) = model.forward_with_mask(&features, mask.clone()).unwrap();
            let grads = model.backward(&cache, [0.7, -1.3]);

            let h = 1e-5;
            for idx in 0..model.params().len() {
                let mut plus = model.clone();
                plus.params_mut()[idx] += h;
                let mut minus = model.clone();
                minus.params_mut()[idx] -= h;
                let numeric = (linear_loss(&plus, &features, &mask)
                    - linear_loss(&minus, &features, &mask))
                    / (2.0 * h);
                let denom = grads[idx].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (grads[idx] - numeric).abs() / denom < 1e-4,
                    "param {idx}: analytic {} vs numeric {numeric}",
                    grads[idx]
                );
            }
        }
    }

    #[test]
    fn unavailable_modality_has_zero_gradients_and_no_mask_slot() {
        let model = FusionModel::new(tiny_inputs(&[3, 2]), 4, None, 8).unwrap();
        let features = vec![some(vec![0.5, -0.5, 1.0]), None];
        let mut rng = crate::seed::rng(3);
        let (_, cache) = model.forward(&features, ForwardMode::Train(&mut rng)).unwrap();
        assert!(cache.mask.as_ref().unwrap().selection.iter().all(|&k| k == 0));
        let grads = model.backward(&cache, [1.0, -1.0]);
        let off = model.dock_offset(1);
        let len = model.dock_len(1);
        assert!(grads[off..off + len].iter().all(|&g| g == 0.0));

        let zero = model.backward(&cache, [0.0, 0.0]);
        assert!(zero.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn infer_output_is_invariant_under_relabeling() {
        let model = FusionModel::new(tiny_inputs(&[3, 2]), 4, None, 77).unwrap();
        let features = vec![some(vec![0.4, -1.0, 2.0]), some(vec![1.0, -2.0])];
        let (probs, _) = model.forward(&features, ForwardMode::Infer).unwrap();

        // Swap the two modalities together with their parameters and probabilities.
        let c = model.embrace_dim();
        let p = model.params();
        let block0 = &p[model.dock_offset(0)..model.dock_offset(0) + model.dock_len(0)];
        let block1 = &p[model.dock_offset(1)..model.dock_offset(1) + model.dock_len(1)];
        let head = &p[model.head_offset()..];
        let mut swapped_params = Vec::new();
        swapped_params.extend(block1);
        swapped_params.extend(block0);
        swapped_params.extend(head);
        let swapped = FusionModel::from_parts(
            vec![model.inputs()[1], model.inputs()[0]],
            c,
            vec![model.probs()[1], model.probs()[0]],
            ZeroMassPolicy::default(),
            swapped_params,
        )
        .unwrap();
        let swapped_features = vec![features[1].clone(), features[0].clone()];
        let (probs2, _) = swapped.forward(&swapped_features, ForwardMode::Infer).unwrap();
        assert!((probs[0] - probs2[0]).abs() < 1e-12);
        assert!((probs[1] - probs2[1]).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let model = FusionModel::new(tiny_inputs(&[5, 3, 2]), 8, None, 1234).unwrap();
        let json = model.to_json();
        let restored = FusionModel::from_json(&json).unwrap();
        assert_eq!(model, restored);
        assert_eq!(json, restored.to_json());
    }
}
