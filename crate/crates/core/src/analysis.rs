//! Result analyses: label comorbidity, model cross-prediction, modality
//! ablation, and per-input contribution ratios from trained parameters.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModalityId, TaskId};
use crate::embrace::{renormalize_p, FusionModel, ZeroMassPolicy};
use crate::error::{Error, Result};
use crate::pipeline::{cross_validate_fused, CvRun, FusedDataset, PipelineConfig};

/// How pairwise label co-occurrence is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComorbidityMode {
    /// `M[i][j]`: share of j-positives that are also i-positive (asymmetric).
    Conditional,
    /// Intersection over union (symmetric).
    Jaccard,
}

impl Default for ComorbidityMode {
    fn default() -> Self {
        ComorbidityMode::Conditional
    }
}

/// Pairwise co-occurrence over the eleven disorder tasks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComorbidityMatrix {
    pub tasks: Vec<TaskId>,
    pub mode: ComorbidityMode,
    /// `None` marks an undefined entry (empty conditioning class).
    pub entries: Vec<Vec<Option<f64>>>,
}

/// Co-occurrence statistics over the disorder labels (overall excluded).
pub fn comorbidity(dataset: &Dataset, mode: ComorbidityMode) -> ComorbidityMatrix {
    let tasks: Vec<TaskId> = TaskId::disorders().collect();
    let positives: Vec<Vec<bool>> = tasks
        .iter()
        .map(|t| dataset.records.iter().map(|r| r.labels.get(*t) == 1).collect())
        .collect();

    let count = |v: &[bool]| v.iter().filter(|x| **x).count();
    let entries = (0..tasks.len())
        .map(|i| {
            (0..tasks.len())
                .map(|j| {
                    let both = positives[i]
                        .iter()
                        .zip(&positives[j])
                        .filter(|(a, b)| **a && **b)
                        .count();
                    match mode {
                        ComorbidityMode::Conditional => {
                            let denom = count(&positives[j]);
                            (denom > 0).then(|| both as f64 / denom as f64)
                        }
                        ComorbidityMode::Jaccard => {
                            let union = positives[i]
                                .iter()
                                .zip(&positives[j])
                                .filter(|(a, b)| **a || **b)
                                .count();
                            (union > 0).then(|| both as f64 / union as f64)
                        }
                    }
                })
                .collect()
        })
        .collect();

    ComorbidityMatrix { tasks, mode, entries }
}

impl ComorbidityMatrix {
    /// CSV with task-name headers; undefined entries are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task");
        for t in &self.tasks {
            out.push(',');
            out.push_str(t.name());
        }
        out.push('\n');
        for (i, row) in self.entries.iter().enumerate() {
            out.push_str(self.tasks[i].name());
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Held-out accuracy of task-i-trained models scored against task-j labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossPredictionMatrix {
    pub tasks: Vec<TaskId>,
    /// `accuracies[i][j]`: trained on task i, evaluated against task j.
    pub accuracies: Vec<Vec<f64>>,
}

impl CrossPredictionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_task");
        for t in &self.tasks {
            out.push(',');
            out.push_str(t.name());
        }
        out.push('\n');
        for (i, row) in self.accuracies.iter().enumerate() {
            out.push_str(self.tasks[i].name());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// For every train task, run the CV pipeline once and score its held-out
/// predictions against every task's labels. Folds and seeds match the
/// standalone run, so the diagonal reproduces `cross_validate` exactly.
pub fn cross_prediction(
    fused: &FusedDataset,
    cfg: &PipelineConfig,
    tasks: &[TaskId],
) -> Result<CrossPredictionMatrix> {
    let all_labels: Vec<Vec<u8>> = tasks.iter().map(|t| fused.labels_for(*t)).collect();
    let mut accuracies = Vec::with_capacity(tasks.len());
    for &train_task in tasks {
        let run = crate::pipeline::run_cv(fused, train_task, cfg)?;
        let row = all_labels
            .iter()
            .map(|labels| run.mean_accuracy_against(labels))
            .collect::<Result<Vec<f64>>>()?;
        accuracies.push(row);
    }
    Ok(CrossPredictionMatrix { tasks: tasks.to_vec(), accuracies })
}

/// One ablation arm: the pipeline rerun with one fusion input removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationArm {
    pub removed: ModalityId,
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// Negative values mean the removal hurt.
    pub delta_accuracy: f64,
    pub delta_f1: f64,
}

/// Paired ablation results for one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub task: TaskId,
    pub full_accuracy: f64,
    pub full_weighted_f1: f64,
    pub arms: Vec<AblationArm>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("removed,accuracy,weighted_f1,delta_accuracy,delta_f1\n");
        out.push_str(&format!(
            "none,{},{},0,0\n",
            self.full_accuracy, self.full_weighted_f1
        ));
        for arm in &self.arms {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                arm.removed, arm.accuracy, arm.weighted_f1, arm.delta_accuracy, arm.delta_f1
            ));
        }
        out
    }
}

/// Remove each active fusion input in turn and rerun the CV pipeline with
/// identical folds and seeds. Removing a single modality also rebuilds the
/// cross-modal features over the remaining ones.
pub fn ablation(
    fused: &FusedDataset,
    task: TaskId,
    cfg: &PipelineConfig,
) -> Result<AblationReport> {
    if cfg.active_inputs.len() < 2 {
        return Err(Error::Config("ablation needs at least two active inputs".into()));
    }
    let full = cross_validate_fused(fused, task, cfg)?;
    let full_accuracy = full.report.accuracy.mean;
    let full_weighted_f1 = full.report.weighted_f1.mean;

    let mut arms = Vec::with_capacity(cfg.active_inputs.len());
    for &removed in &cfg.active_inputs {
        let arm_cfg = cfg.without_input(removed);
        let outcome = cross_validate_fused(fused, task, &arm_cfg)?;
        arms.push(AblationArm {
            removed,
            accuracy: outcome.report.accuracy.mean,
            weighted_f1: outcome.report.weighted_f1.mean,
            delta_accuracy: outcome.report.accuracy.mean - full_accuracy,
            delta_f1: outcome.report.weighted_f1.mean - full_weighted_f1,
        });
    }
    Ok(AblationReport { task, full_accuracy, full_weighted_f1, arms })
}

/// Normalized per-input influence for one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionReport {
    pub task: TaskId,
    pub inputs: Vec<ModalityId>,
    /// Aggregate ratios over all folds; non-negative, sum one.
    pub ratios: Vec<f64>,
    pub per_fold: Vec<Vec<f64>>,
}

impl ContributionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("input,ratio");
        for f in 0..self.per_fold.len() {
            out.push_str(&format!(",fold{f}"));
        }
        out.push('\n');
        for (k, input) in self.inputs.iter().enumerate() {
            out.push_str(&format!("{input},{}", self.ratios[k]));
            for fold in &self.per_fold {
                out.push_str(&format!(",{}", fold[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Unnormalized contribution mass per model input over a record set:
/// the renormalized probability times the L1 norm of the docking output.
pub fn contribution_mass(
    model: &FusionModel,
    records: &[Vec<Option<Vec<f64>>>],
) -> Result<Vec<f64>> {
    let m = model.n_inputs();
    let mut sums = vec![0.0; m];
    for features in records {
        let availability: Vec<bool> = features.iter().map(|f| f.is_some()).collect();
        if availability.iter().all(|a| !a) {
            continue;
        }
        let p_eff = renormalize_p(model.probs(), &availability, ZeroMassPolicy::default())?;
        for (k, feature) in features.iter().enumerate() {
            if let Some(x) = feature {
                let docked = model.dock(x, k)?;
                let l1: f64 = docked.iter().map(|v| v.abs()).sum();
                sums[k] += p_eff[k] * l1;
            }
        }
    }
    Ok(sums)
}

fn normalize_simplex(sums: &[f64]) -> Vec<f64> {
    let total: f64 = sums.iter().sum();
    if total > 0.0 {
        sums.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / sums.len() as f64; sums.len()]
    }
}

/// Contribution ratios from the trained per-fold models, scored on each
/// fold's held-out records.
pub fn contribution(run: &CvRun) -> Result<ContributionReport> {
    // Inputs may differ across folds when a modality drops out of a split;
    // align everything on the union in canonical order.
    let inputs: Vec<ModalityId> = ModalityId::ALL
        .into_iter()
        .filter(|m| {
            run.folds
                .iter()
                .any(|f| f.input_specs.iter().any(|s| s.modality == *m))
        })
        .collect();
    let index_of = |m: ModalityId| inputs.iter().position(|x| *x == m).unwrap();

    let mut aggregate = vec![0.0; inputs.len()];
    let mut per_fold = Vec::with_capacity(run.folds.len());
    for fold in &run.folds {
        let mass = contribution_mass(&fold.model, &fold.val_inputs)?;
        let mut aligned = vec![0.0; inputs.len()];
        for (k, spec) in fold.input_specs.iter().enumerate() {
            aligned[index_of(spec.modality)] = mass[k];
        }
        for (a, v) in aggregate.iter_mut().zip(&aligned) {
            *a += v;
        }
        per_fold.push(normalize_simplex(&aligned));
    }

    Ok(ContributionReport {
        task: run.task,
        inputs,
        ratios: normalize_simplex(&aggregate),
        per_fold,
    })
}
