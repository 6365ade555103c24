//! Dataset ingestion and serialization.
//!
//! A dataset on disk is a manifest JSON next to a label CSV and one feature
//! CSV per (record, modality). Paths inside the manifest are relative to the
//! manifest's directory. A modality listed with a nonexistent file, or not
//! listed at all, is recorded as unavailable.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    Dataset, FeatureSequence, ModalityId, ParticipantRecord, Provenance, TaskId, TaskLabels,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    records: Vec<ManifestRecord>,
    label_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    id: String,
    /// 0-based data-row index into the label CSV (header excluded).
    labels_csv_row: usize,
    /// Modality name -> feature CSV path, relative to the manifest.
    features: BTreeMap<String, String>,
}

/// Load a dataset from a manifest file.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let manifest: ManifestFile = serde_json::from_str(&text).map_err(|e| {
        Error::parse(
            path.display().to_string(),
            format!("malformed JSON at line {}: {}", e.line(), e),
        )
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let label_rows = read_label_csv(&base.join(&manifest.label_file))?;

    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let (row_id, labels) = label_rows.get(entry.labels_csv_row).ok_or_else(|| {
            Error::Schema(format!(
                "record {}: labels_csv_row {} out of range ({} label rows)",
                entry.id,
                entry.labels_csv_row,
                label_rows.len()
            ))
        })?;
        if row_id != &entry.id {
            return Err(Error::Data(format!(
                "record {}: label row {} belongs to id `{row_id}`",
                entry.id, entry.labels_csv_row
            )));
        }

        let mut features = BTreeMap::new();
        let mut availability = BTreeMap::new();
        for m in ModalityId::SINGLE {
            availability.insert(m, false);
        }
        for (name, rel_path) in &entry.features {
            let modality = ModalityId::parse(name)?;
            if !modality.is_single() {
                return Err(Error::Schema(format!(
                    "record {}: manifest lists derived modality {modality}",
                    entry.id
                )));
            }
            let file = base.join(rel_path);
            if !file.exists() {
                // Declared but absent on disk: treated as a missing modality.
                continue;
            }
            let seq = read_feature_csv(&file, &entry.id, modality)?;
            features.insert(modality, seq);
            availability.insert(modality, true);
        }

        records.push(ParticipantRecord {
            id: entry.id.clone(),
            features,
            labels: *labels,
            availability,
        });
    }

    Dataset::new(records, Provenance::Ingested)
}

/// Write a dataset as a manifest directory; returns the manifest path.
///
/// Round-trips exactly: floats are written in shortest form that parses back
/// to the same value.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("features"))?;

    let mut labels = String::new();
    labels.push_str("id");
    for task in TaskId::ALL {
        labels.push(',');
        labels.push_str(task.name());
    }
    labels.push('\n');
    for rec in &dataset.records {
        labels.push_str(&rec.id);
        for task in TaskId::ALL {
            labels.push(',');
            labels.push_str(if rec.labels.get(task) == 1 { "1" } else { "0" });
        }
        labels.push('\n');
    }
    write_atomic(&dir.join("labels.csv"), labels.as_bytes())?;

    let mut entries = Vec::with_capacity(dataset.records.len());
    for (row, rec) in dataset.records.iter().enumerate() {
        let mut features = BTreeMap::new();
        for (modality, seq) in &rec.features {
            let rel = format!("features/{}__{}.csv", rec.id, modality.name());
            write_atomic(&dir.join(&rel), feature_csv(seq).as_bytes())?;
            features.insert(modality.name().to_string(), rel);
        }
        entries.push(ManifestRecord {
            id: rec.id.clone(),
            labels_csv_row: row,
            features,
        });
    }

    let manifest = ManifestFile {
        records: entries,
        label_file: "labels.csv".to_string(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, json.as_bytes())?;
    Ok(path)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn feature_csv(seq: &FeatureSequence) -> String {
    let mut out = String::from("t");
    for d in 0..seq.dim() {
        out.push_str(&format!(",f{d}"));
    }
    out.push('\n');
    for (t, row) in seq.values.iter().enumerate() {
        out.push_str(&t.to_string());
        for v in row {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

fn read_label_csv(path: &Path) -> Result<Vec<(String, TaskLabels)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
        .clone();

    let mut col_of_task: BTreeMap<TaskId, usize> = BTreeMap::new();
    let mut id_col = None;
    for (i, name) in header.iter().enumerate() {
        if name == "id" {
            id_col = Some(i);
        } else {
            let task = TaskId::parse(name)
                .map_err(|_| Error::Schema(format!("label file has unknown column `{name}`")))?;
            col_of_task.insert(task, i);
        }
    }
    let id_col =
        id_col.ok_or_else(|| Error::Schema("label file is missing the `id` column".into()))?;
    let missing: Vec<&str> = TaskId::ALL
        .into_iter()
        .filter(|t| !col_of_task.contains_key(t))
        .map(|t| t.name())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "label file is missing task column(s): {}",
            missing.join(", ")
        )));
    }

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let id = record
            .get(id_col)
            .ok_or_else(|| Error::Schema(format!("label row {line} is missing the id cell")))?
            .to_string();
        let mut labels = TaskLabels([0; 12]);
        for task in TaskId::ALL {
            let cell = record.get(col_of_task[&task]).unwrap_or("");
            let value = match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Data(format!(
                        "label row for `{id}`, column {task}: expected 0 or 1, got `{other}`"
                    )))
                }
            };
            labels.set(task, value);
        }
        rows.push((id, labels));
    }
    Ok(rows)
}

fn read_feature_csv(path: &Path, record_id: &str, modality: ModalityId) -> Result<FeatureSequence> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    // Canonical header is `t,f0,...`; a bare `f0,...` header is also accepted.
    let has_t = cols.first() == Some(&"t");
    let feature_cols = if has_t { &cols[1..] } else { &cols[..] };
    if feature_cols.is_empty() {
        return Err(Error::Schema(format!(
            "feature file {} has no feature columns",
            path.display()
        )));
    }
    for (d, name) in feature_cols.iter().enumerate() {
        if *name != format!("f{d}") {
            return Err(Error::Schema(format!(
                "feature file {}: column {} named `{name}`, expected `f{d}`",
                path.display(),
                d + has_t as usize
            )));
        }
    }
    let dim = feature_cols.len();

    let mut values = Vec::new();
    for (t, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let cells: Vec<&str> = record.iter().collect();
        let data = if has_t { &cells[1..] } else { &cells[..] };
        if data.len() != dim {
            return Err(Error::Schema(format!(
                "feature file {}: row {t} has {} values, expected {dim}",
                path.display(),
                data.len()
            )));
        }
        let mut row = Vec::with_capacity(dim);
        for (d, cell) in data.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(
                    path.display().to_string(),
                    format!("row {t}, column f{d}: `{cell}` is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "record {record_id}, modality {modality}: non-finite value at row {t}, column f{d}"
                )));
            }
            row.push(v);
        }
        values.push(row);
    }
    FeatureSequence::new(modality, values)
        .map_err(|e| Error::Data(format!("record {record_id}: {e}")))
}
