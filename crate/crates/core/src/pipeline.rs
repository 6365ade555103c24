//! The per-fold evaluation pipeline shared by cross-validation and the
//! analysis procedures.
//!
//! For each fold: fit Z-score statistics on the training split only,
//! standardize both splits, derive the two cross-modal features from the
//! standardized single-modal vectors (re-standardized with train-fit stats),
//! train a fusion model, and predict the held-out records. Every stochastic
//! step draws from a seed derived from the master seed and the fold index,
//! so grid analyses reproduce standalone runs exactly.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crossmodal::{attention_feature, relation_graph, SoftmaxSign};
use crate::dataset::{Dataset, ModalityId, TaskId, TaskLabels};
use crate::embrace::{ForwardMode, FusionModel, InputSpec};
use crate::error::{Error, Result};
use crate::eval::{
    stratified_folds, CmOrder, ConfusionMatrix, FoldAssignment, MetricsReport,
};
use crate::features::{task_fuse, zscore_apply, zscore_fit};
use crate::seed::{self, tag};
use crate::trainer::{self, majority_baseline, TrainConfig, TrainExample};

/// Everything a cross-validated run needs besides the dataset and task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub k: usize,
    pub seed: u64,
    pub embrace_dim: usize,
    pub softmax_sign: SoftmaxSign,
    pub cm_order: CmOrder,
    /// Fusion inputs in play; ablation removes entries.
    pub active_inputs: Vec<ModalityId>,
    /// Concurrent fold workers; 1 runs sequentially.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            k: 10,
            seed: 0,
            embrace_dim: 32,
            softmax_sign: SoftmaxSign::default(),
            cm_order: CmOrder::default(),
            active_inputs: ModalityId::ALL.to_vec(),
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        if self.embrace_dim == 0 {
            return Err(Error::Config("embracement size must be positive".into()));
        }
        if self.active_inputs.is_empty() {
            return Err(Error::Config("at least one fusion input must stay active".into()));
        }
        let unique: BTreeSet<_> = self.active_inputs.iter().collect();
        if unique.len() != self.active_inputs.len() {
            return Err(Error::Config("active_inputs contains duplicates".into()));
        }
        Ok(())
    }

    /// A copy with one fusion input removed (ablation arm).
    pub fn without_input(&self, removed: ModalityId) -> PipelineConfig {
        let mut cfg = self.clone();
        cfg.active_inputs.retain(|m| *m != removed);
        cfg
    }
}

/// Task-level fused single-modal vectors of one record.
#[derive(Debug, Clone)]
pub struct FusedRecord {
    pub id: String,
    pub labels: TaskLabels,
    pub fused: BTreeMap<ModalityId, Vec<f64>>,
}

/// Dataset after task-level fusion; fold-independent, computed once.
#[derive(Debug, Clone)]
pub struct FusedDataset {
    pub records: Vec<FusedRecord>,
}

impl FusedDataset {
    pub fn labels_for(&self, task: TaskId) -> Vec<u8> {
        self.records.iter().map(|r| r.labels.get(task)).collect()
    }
}

/// Collapse every feature sequence to its column means.
pub fn fuse_dataset(dataset: &Dataset) -> FusedDataset {
    let records = dataset
        .records
        .iter()
        .map(|rec| FusedRecord {
            id: rec.id.clone(),
            labels: rec.labels,
            fused: rec
                .features
                .iter()
                .map(|(m, seq)| (*m, task_fuse(seq)))
                .collect(),
        })
        .collect();
    FusedDataset { records }
}

/// Standardized fusion inputs for every record, for one fold.
pub struct PreparedFold {
    pub input_specs: Vec<InputSpec>,
    /// Per record, aligned with `input_specs`; `None` marks unavailable.
    pub inputs: Vec<Vec<Option<Vec<f64>>>>,
    /// Ids of the records whose vectors entered any Z-score fit.
    pub zscore_fit_ids: Vec<String>,
}

/// Fit standardization on the training split and build fusion inputs for
/// every record.
///
/// A record missing any active single modality gets no cross-modal features
/// (they are never fabricated from partial graphs). A modality absent from
/// the whole training split is dropped for the fold.
pub fn prepare_fold(
    fused: &FusedDataset,
    train_idx: &[usize],
    cfg: &PipelineConfig,
) -> Result<PreparedFold> {
    let active_single: Vec<ModalityId> = ModalityId::SINGLE
        .into_iter()
        .filter(|m| cfg.active_inputs.contains(m))
        .collect();
    let want_graph = cfg.active_inputs.contains(&ModalityId::RelationGraph);
    let want_attention = cfg.active_inputs.contains(&ModalityId::Attention);

    let mut fit_ids: BTreeSet<String> = BTreeSet::new();

    // Stage one: per-modality standardization, fit on train only.
    let mut stats = BTreeMap::new();
    let mut usable_single = Vec::new();
    for m in &active_single {
        let sample: Vec<Vec<f64>> = train_idx
            .iter()
            .filter_map(|&i| fused.records[i].fused.get(m).cloned())
            .collect();
        if sample.is_empty() {
            continue; // absent from the entire training split
        }
        for &i in train_idx {
            if fused.records[i].fused.contains_key(m) {
                fit_ids.insert(fused.records[i].id.clone());
            }
        }
        stats.insert(*m, zscore_fit(&sample)?);
        usable_single.push(*m);
    }
    if usable_single.is_empty() && (want_graph || want_attention) {
        return Err(Error::Data(
            "cross-modal features requested but no single modality is usable".into(),
        ));
    }

    let standardized: Vec<BTreeMap<ModalityId, Vec<f64>>> = fused
        .records
        .iter()
        .map(|rec| {
            let mut out = BTreeMap::new();
            for m in &usable_single {
                if let Some(v) = rec.fused.get(m) {
                    out.insert(*m, zscore_apply(v, &stats[m])?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    // Cross-modal features per record, from the standardized vectors.
    let mut graphs: Vec<Option<Vec<f64>>> = vec![None; fused.records.len()];
    let mut attentions: Vec<Option<Vec<f64>>> = vec![None; fused.records.len()];
    if want_graph || want_attention {
        for (i, vectors) in standardized.iter().enumerate() {
            if usable_single.iter().any(|m| !vectors.contains_key(m)) {
                continue;
            }
            let ordered: Vec<Vec<f64>> =
                usable_single.iter().map(|m| vectors[m].clone()).collect();
            if want_graph {
                graphs[i] = Some(relation_graph(&ordered)?.flatten());
            }
            if want_attention {
                attentions[i] = Some(attention_feature(&ordered, cfg.softmax_sign)?.vector);
            }
        }
    }

    // Stage two: standardize the derived features with train-fit stats.
    let mut standardize_derived = |values: &mut Vec<Option<Vec<f64>>>| -> Result<bool> {
        let sample: Vec<Vec<f64>> = train_idx
            .iter()
            .filter_map(|&i| values[i].clone())
            .collect();
        if sample.is_empty() {
            values.iter_mut().for_each(|v| *v = None);
            return Ok(false);
        }
        for &i in train_idx {
            if values[i].is_some() {
                fit_ids.insert(fused.records[i].id.clone());
            }
        }
        let stats = zscore_fit(&sample)?;
        for v in values.iter_mut() {
            if let Some(raw) = v {
                *v = Some(zscore_apply(raw, &stats)?);
            }
        }
        Ok(true)
    };
    let graph_usable = want_graph && standardize_derived(&mut graphs)?;
    let attention_usable = want_attention && standardize_derived(&mut attentions)?;

    // Assemble input specs in canonical order.
    let mut input_specs = Vec::new();
    for m in &usable_single {
        let dim = standardized
            .iter()
            .find_map(|r| r.get(m).map(|v| v.len()))
            .expect("usable modality appears somewhere");
        input_specs.push(InputSpec { modality: *m, dim });
    }
    if graph_usable {
        let dim = graphs.iter().flatten().next().expect("graph present").len();
        input_specs.push(InputSpec { modality: ModalityId::RelationGraph, dim });
    }
    if attention_usable {
        let dim = attentions.iter().flatten().next().expect("attention present").len();
        input_specs.push(InputSpec { modality: ModalityId::Attention, dim });
    }

    let inputs = (0..fused.records.len())
        .map(|i| {
            input_specs
                .iter()
                .map(|spec| match spec.modality {
                    ModalityId::RelationGraph => graphs[i].clone(),
                    ModalityId::Attention => attentions[i].clone(),
                    single => standardized[i].get(&single).cloned(),
                })
                .collect()
        })
        .collect();

    Ok(PreparedFold {
        input_specs,
        inputs,
        zscore_fit_ids: fit_ids.into_iter().collect(),
    })
}

/// Outcome of one fold: the trained model and its held-out predictions.
pub struct FoldRun {
    pub fold_index: usize,
    pub test_indices: Vec<usize>,
    /// Aligned with `test_indices`.
    pub predictions: Vec<u8>,
    pub model: FusionModel,
    pub history: trainer::TrainHistory,
    pub input_specs: Vec<InputSpec>,
    pub zscore_fit_ids: Vec<String>,
    /// Standardized fusion inputs of the held-out records.
    pub val_inputs: Vec<Vec<Option<Vec<f64>>>>,
}

/// A full cross-validated run for one task.
pub struct CvRun {
    pub task: TaskId,
    pub assignment: FoldAssignment,
    pub folds: Vec<FoldRun>,
}

impl CvRun {
    /// Per-fold confusion matrices of the held-out predictions against an
    /// arbitrary label assignment.
    pub fn confusions_against(&self, labels: &[u8]) -> Result<Vec<ConfusionMatrix>> {
        self.folds
            .iter()
            .map(|fold| {
                let truths: Vec<u8> = fold.test_indices.iter().map(|&i| labels[i]).collect();
                ConfusionMatrix::from_pairs(&truths, &fold.predictions)
            })
            .collect()
    }

    /// Mean held-out accuracy against an arbitrary label assignment.
    pub fn mean_accuracy_against(&self, labels: &[u8]) -> Result<f64> {
        let folds = self.confusions_against(labels)?;
        let sum: f64 = folds
            .iter()
            .map(|cm| (cm.counts[0][0] + cm.counts[1][1]) as f64 / cm.total() as f64)
            .sum();
        Ok(sum / folds.len() as f64)
    }
}

fn run_fold(
    fused: &FusedDataset,
    task: TaskId,
    assignment: &FoldAssignment,
    fold_index: usize,
    cfg: &PipelineConfig,
) -> Result<FoldRun> {
    let train_idx = assignment.train_indices(fold_index);
    let test_idx = assignment.folds[fold_index].clone();
    let prepared = prepare_fold(fused, &train_idx, cfg)?;
    let fold_seed = seed::fold_seed(cfg.seed, fold_index);

    let mut examples = Vec::with_capacity(train_idx.len());
    for &i in &train_idx {
        let features = prepared.inputs[i].clone();
        if features.iter().all(|f| f.is_none()) {
            continue; // nothing to dock; the record cannot train
        }
        examples.push(TrainExample {
            features,
            label: fused.records[i].labels.get(task),
        });
    }
    if examples.is_empty() {
        return Err(Error::Data(format!(
            "fold {fold_index}: no trainable record in the split"
        )));
    }

    let mut model = FusionModel::new(
        prepared.input_specs.clone(),
        cfg.embrace_dim,
        None,
        seed::derive(fold_seed, tag::MODEL_INIT),
    )?;
    let train_cfg = TrainConfig { seed: fold_seed, ..cfg.train };
    let history = trainer::train(&mut model, &examples, &train_cfg)?;

    // Records with no available input fall back to the train majority class.
    let train_labels: Vec<u8> = train_idx
        .iter()
        .map(|&i| fused.records[i].labels.get(task))
        .collect();
    let fallback = majority_baseline(&train_labels)?.predict();

    let mut predictions = Vec::with_capacity(test_idx.len());
    let mut val_inputs = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        let features = prepared.inputs[i].clone();
        let prediction = if features.iter().all(|f| f.is_none()) {
            fallback
        } else {
            let (probs, _) = model.forward(&features, ForwardMode::Infer)?;
            u8::from(probs[1] > probs[0])
        };
        predictions.push(prediction);
        val_inputs.push(features);
    }

    Ok(FoldRun {
        fold_index,
        test_indices: test_idx,
        predictions,
        model,
        history,
        input_specs: prepared.input_specs,
        zscore_fit_ids: prepared.zscore_fit_ids,
        val_inputs,
    })
}

/// Run the full k-fold pipeline for one task.
pub fn run_cv(fused: &FusedDataset, task: TaskId, cfg: &PipelineConfig) -> Result<CvRun> {
    cfg.validate()?;
    let labels = fused.labels_for(task);
    let assignment = stratified_folds(&labels, cfg.k, cfg.seed)?;

    let folds: Vec<FoldRun> = if cfg.workers <= 1 {
        (0..cfg.k)
            .map(|f| run_fold(fused, task, &assignment, f, cfg))
            .collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Numeric(format!("worker pool: {e}")))?;
        pool.install(|| {
            (0..cfg.k)
                .into_par_iter()
                .map(|f| run_fold(fused, task, &assignment, f, cfg))
                .collect::<Result<_>>()
        })?
    };

    Ok(CvRun { task, assignment, folds })
}

/// Cross-validated metrics for one task.
pub struct CvOutcome {
    pub report: MetricsReport,
    pub run: CvRun,
}

pub fn cross_validate(dataset: &Dataset, task: TaskId, cfg: &PipelineConfig) -> Result<CvOutcome> {
    let fused = fuse_dataset(dataset);
    cross_validate_fused(&fused, task, cfg)
}

pub fn cross_validate_fused(
    fused: &FusedDataset,
    task: TaskId,
    cfg: &PipelineConfig,
) -> Result<CvOutcome> {
    let run = run_cv(fused, task, cfg)?;
    let confusions = run.confusions_against(&fused.labels_for(task))?;
    let report = MetricsReport::from_confusions(&confusions, cfg.cm_order)?;
    Ok(CvOutcome { report, run })
}

/// Mean held-out accuracy of the majority baseline over the same folds.
pub fn majority_cv_accuracy(
    fused: &FusedDataset,
    task: TaskId,
    assignment: &FoldAssignment,
) -> Result<f64> {
    let labels = fused.labels_for(task);
    let mut sum = 0.0;
    for fold in 0..assignment.folds.len() {
        let train: Vec<u8> = assignment
            .train_indices(fold)
            .iter()
            .map(|&i| labels[i])
            .collect();
        let test: Vec<u8> = assignment.folds[fold].iter().map(|&i| labels[i]).collect();
        sum += majority_baseline(&train)?.accuracy_on(&test);
    }
    Ok(sum / assignment.folds.len() as f64)
}

/// Holdout accuracy of a logistic probe on one modality's standardized
/// fused vector.
pub fn probe_holdout_accuracy(
    fused: &FusedDataset,
    task: TaskId,
    modality: ModalityId,
    train_idx: &[usize],
    test_idx: &[usize],
    train_cfg: &TrainConfig,
) -> Result<f64> {
    let sample: Vec<Vec<f64>> = train_idx
        .iter()
        .filter_map(|&i| fused.records[i].fused.get(&modality).cloned())
        .collect();
    if sample.is_empty() {
        return Err(Error::Data(format!(
            "probe: modality {modality} absent from the training split"
        )));
    }
    let stats = zscore_fit(&sample)?;
    let examples: Vec<(Vec<f64>, u8)> = train_idx
        .iter()
        .filter_map(|&i| {
            fused.records[i].fused.get(&modality).map(|v| {
                (
                    zscore_apply(v, &stats).expect("dims match"),
                    fused.records[i].labels.get(task),
                )
            })
        })
        .collect();
    let probe = trainer::linear_probe(&examples, train_cfg)?;

    let train_labels: Vec<u8> = train_idx
        .iter()
        .map(|&i| fused.records[i].labels.get(task))
        .collect();
    let fallback = majority_baseline(&train_labels)?.predict();

    let mut hits = 0usize;
    for &i in test_idx {
        let want = fused.records[i].labels.get(task);
        let got = match fused.records[i].fused.get(&modality) {
            Some(v) => probe.predict(&zscore_apply(v, &stats)?),
            None => fallback,
        };
        if got == want {
            hits += 1;
        }
    }
    Ok(hits as f64 / test_idx.len() as f64)
}
