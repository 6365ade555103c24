//! Data model for multimodal participant records and labels.
//!
//! A record holds per-modality feature sequences (time × dim matrices) for up
//! to eight single-modal channels plus twelve binary screening labels. The
//! two cross-modal channels are derived later and never stored here.

mod generate;
mod manifest;

pub use generate::{generate_synthetic, GeneratorConfig, ShapeSpec};
pub use manifest::{load_manifest, write_dataset};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One input channel of the fusion model.
///
/// The first eight are single-modal features carried by records; the last two
/// are computed from them per evaluation fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityId {
    Expression,
    ExpressionNuance,
    EyeMovement,
    Physio,
    Mfcc,
    Wav2vec,
    Pert,
    Roberta,
    RelationGraph,
    Attention,
}

impl ModalityId {
    /// All ten fusion inputs in canonical order.
    pub const ALL: [ModalityId; 10] = [
        ModalityId::Expression,
        ModalityId::ExpressionNuance,
        ModalityId::EyeMovement,
        ModalityId::Physio,
        ModalityId::Mfcc,
        ModalityId::Wav2vec,
        ModalityId::Pert,
        ModalityId::Roberta,
        ModalityId::RelationGraph,
        ModalityId::Attention,
    ];

    /// The eight single-modal channels, canonical order.
    pub const SINGLE: [ModalityId; 8] = [
        ModalityId::Expression,
        ModalityId::ExpressionNuance,
        ModalityId::EyeMovement,
        ModalityId::Physio,
        ModalityId::Mfcc,
        ModalityId::Wav2vec,
        ModalityId::Pert,
        ModalityId::Roberta,
    ];

    /// The two derived cross-modal channels.
    pub const CROSS: [ModalityId; 2] = [ModalityId::RelationGraph, ModalityId::Attention];

    pub fn name(self) -> &'static str {
        match self {
            ModalityId::Expression => "expression",
            ModalityId::ExpressionNuance => "expression_nuance",
            ModalityId::EyeMovement => "eye_movement",
            ModalityId::Physio => "physio",
            ModalityId::Mfcc => "mfcc",
            ModalityId::Wav2vec => "wav2vec",
            ModalityId::Pert => "pert",
            ModalityId::Roberta => "roberta",
            ModalityId::RelationGraph => "relation_graph",
            ModalityId::Attention => "attention",
        }
    }

    pub fn is_single(self) -> bool {
        !matches!(self, ModalityId::RelationGraph | ModalityId::Attention)
    }

    pub fn parse(name: &str) -> Result<ModalityId> {
        ModalityId::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Schema(format!("unknown modality `{name}`")))
    }
}

impl fmt::Display for ModalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the twelve screened conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Depression,
    InterpersonalSensitivity,
    Anxiety,
    ObsessiveCompulsiveTendencies,
    ParanoidIdeation,
    Hostility,
    AcademicStress,
    Maladaptation,
    EmotionalDisturbance,
    PsychologicalImbalance,
    SuicidalTendency,
    Overall,
}

impl TaskId {
    /// All twelve tasks in canonical order; `Overall` is last.
    pub const ALL: [TaskId; 12] = [
        TaskId::Depression,
        TaskId::InterpersonalSensitivity,
        TaskId::Anxiety,
        TaskId::ObsessiveCompulsiveTendencies,
        TaskId::ParanoidIdeation,
        TaskId::Hostility,
        TaskId::AcademicStress,
        TaskId::Maladaptation,
        TaskId::EmotionalDisturbance,
        TaskId::PsychologicalImbalance,
        TaskId::SuicidalTendency,
        TaskId::Overall,
    ];

    /// The eleven disorder tasks (everything except `Overall`).
    pub fn disorders() -> impl Iterator<Item = TaskId> {
        TaskId::ALL.into_iter().filter(|t| *t != TaskId::Overall)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Depression => "depression",
            TaskId::InterpersonalSensitivity => "interpersonal_sensitivity",
            TaskId::Anxiety => "anxiety",
            TaskId::ObsessiveCompulsiveTendencies => "obsessive_compulsive_tendencies",
            TaskId::ParanoidIdeation => "paranoid_ideation",
            TaskId::Hostility => "hostility",
            TaskId::AcademicStress => "academic_stress",
            TaskId::Maladaptation => "maladaptation",
            TaskId::EmotionalDisturbance => "emotional_disturbance",
            TaskId::PsychologicalImbalance => "psychological_imbalance",
            TaskId::SuicidalTendency => "suicidal_tendency",
            TaskId::Overall => "overall",
        }
    }

    pub fn index(self) -> usize {
        TaskId::ALL.iter().position(|t| *t == self).unwrap()
    }

    pub fn parse(name: &str) -> Result<TaskId> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::Schema(format!("unknown task `{name}`")))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A (time × dim) real matrix for one modality of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub modality: ModalityId,
    /// Row-per-time-step values; every row has the same length.
    pub values: Vec<Vec<f64>>,
}

impl FeatureSequence {
    pub fn new(modality: ModalityId, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || values[0].is_empty() {
            return Err(Error::Data(format!(
                "feature sequence for {modality} must have at least one row and one column"
            )));
        }
        let dim = values[0].len();
        for (t, row) in values.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "feature sequence for {modality}: row {t} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            for (d, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "feature sequence for {modality}: non-finite value at row {t}, column {d}"
                    )));
                }
            }
        }
        Ok(FeatureSequence { modality, values })
    }

    /// Number of time steps.
    pub fn len_t(&self) -> usize {
        self.values.len()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
}

/// Binary labels for all twelve tasks, indexed in canonical task order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLabels(pub [u8; 12]);

impl TaskLabels {
    pub fn get(&self, task: TaskId) -> u8 {
        self.0[task.index()]
    }

    pub fn set(&mut self, task: TaskId, value: u8) {
        self.0[task.index()] = value;
    }
}

/// One subject: per-modality feature sequences plus twelve binary labels.
///
/// Missing modalities are represented by the availability flag, never by
/// zero-filled matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub features: BTreeMap<ModalityId, FeatureSequence>,
    pub labels: TaskLabels,
    pub availability: BTreeMap<ModalityId, bool>,
}

impl ParticipantRecord {
    pub fn is_available(&self, modality: ModalityId) -> bool {
        *self.availability.get(&modality).unwrap_or(&false)
    }

    fn check(&self) -> Result<()> {
        for m in ModalityId::SINGLE {
            let avail = self.is_available(m);
            let present = self.features.contains_key(&m);
            if avail != present {
                return Err(Error::Data(format!(
                    "record {}: availability for {m} is {avail} but feature entry present={present}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Ingested,
    Synthetic { seed: u64, config_hash: String },
}

/// An immutable collection of participant records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ParticipantRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(records: Vec<ParticipantRecord>, provenance: Provenance) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("dataset must contain at least one record".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &records {
            r.check()?;
            if !seen.insert(r.id.clone()) {
                return Err(Error::Data(format!("duplicate record id `{}`", r.id)));
            }
        }
        // Per modality, every record that carries it must agree on the dim.
        for m in ModalityId::SINGLE {
            let mut dim: Option<(usize, &str)> = None;
            for r in &records {
                if let Some(seq) = r.features.get(&m) {
                    match dim {
                        None => dim = Some((seq.dim(), &r.id)),
                        Some((d, first)) if seq.dim() != d => {
                            return Err(Error::Data(format!(
                                "modality {m}: record {} has dim {} but record {first} has dim {d}",
                                r.id,
                                seq.dim()
                            )));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(Dataset { records, provenance })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Labels of every record for one task, in record order.
    pub fn labels_for(&self, task: TaskId) -> Vec<u8> {
        self.records.iter().map(|r| r.labels.get(task)).collect()
    }

    /// Records equal field-by-field (matrix equality per modality); ignores provenance.
    pub fn records_equal(&self, other: &Dataset) -> bool {
        self.records == other.records
    }
}

/// Majority:minority class ratio for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImbalanceRatio {
    pub ratio: f64,
    /// Set when one class is absent; `ratio` is then infinite.
    pub one_class_absent: bool,
}

/// Ratio of majority to minority class counts for `task`.
pub fn imbalance_ratio(dataset: &Dataset, task: TaskId) -> ImbalanceRatio {
    let labels = dataset.labels_for(task);
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    let (maj, min) = (pos.max(neg), pos.min(neg));
    if min == 0 {
        ImbalanceRatio {
            ratio: f64::INFINITY,
            one_class_absent: true,
        }
    } else {
        ImbalanceRatio {
            ratio: maj as f64 / min as f64,
            one_class_absent: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with_labels(id: &str, labels: [u8; 12]) -> ParticipantRecord {
        ParticipantRecord {
            id: id.to_string(),
            features: BTreeMap::new(),
            labels: TaskLabels(labels),
            availability: BTreeMap::new(),
        }
    }

    fn tiny_dataset(labels: Vec<[u8; 12]>) -> Dataset {
        let records = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| record_with_labels(&format!("r{i}"), l))
            .collect();
        Dataset::new(records, Provenance::Ingested).unwrap()
    }

    #[test]
    fn modality_counts() {
        assert_eq!(ModalityId::SINGLE.len(), 8);
        assert_eq!(ModalityId::ALL.len(), 10);
        assert_eq!(TaskId::ALL.len(), 12);
        assert_eq!(TaskId::disorders().count(), 11);
    }

    #[test]
    fn modality_names_round_trip() {
        for m in ModalityId::ALL {
            assert_eq!(ModalityId::parse(m.name()).unwrap(), m);
        }
        for t in TaskId::ALL {
            assert_eq!(TaskId::parse(t.name()).unwrap(), t);
        }
        assert!(ModalityId::parse("bogus").is_err());
    }

    #[test]
    fn feature_sequence_rejects_bad_shapes() {
        assert!(FeatureSequence::new(ModalityId::Physio, vec![]).is_err());
        assert!(FeatureSequence::new(ModalityId::Physio, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(FeatureSequence::new(ModalityId::Physio, vec![vec![f64::NAN]]).is_err());
        assert!(FeatureSequence::new(ModalityId::Physio, vec![vec![1.0, 2.0]]).is_ok());
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let records = vec![
            record_with_labels("a", [0; 12]),
            record_with_labels("a", [0; 12]),
        ];
        assert!(Dataset::new(records, Provenance::Ingested).is_err());
    }

    #[test]
    fn imbalance_even_split_is_one() {
        let ds = tiny_dataset(vec![[1; 12], [0; 12]]);
        let r = imbalance_ratio(&ds, TaskId::Overall);
        assert_eq!(r.ratio, 1.0);
        assert!(!r.one_class_absent);
    }

    #[test]
    fn imbalance_no_positives_is_flagged_infinite() {
        let ds = tiny_dataset(vec![[0; 12], [0; 12]]);
        let r = imbalance_ratio(&ds, TaskId::Depression);
        assert!(r.ratio.is_infinite());
        assert!(r.one_class_absent);
    }
}
