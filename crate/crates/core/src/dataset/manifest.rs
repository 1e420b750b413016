//! Manifest-driven dataset loading.
//!
//! The manifest is a CSV with header `file,subject_id,cohort,abnormality,activity`
//! (case-insensitive, any order; `abnormality` may be omitted or empty).
//! `file` paths are relative to the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    load_recording_with_meta, write_recording, Abnormality, Activity, Cohort, ColumnMap, Dataset,
    DatasetError, LabelMap, SubjectMeta, FULL_COHORT_SUBJECTS,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// 1-based line in the manifest.
    pub line: u64,
    pub file: String,
    pub meta: SubjectMeta,
    pub activity: Activity,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Require the full cohort: 22 subjects, each with all three activities.
    pub strict: bool,
    pub column_map: ColumnMap,
    pub label_map: LabelMap,
}

/// Parses and cross-checks manifest rows without touching the listed files.
pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<ManifestEntry>, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|_| DatasetError::NotUtf8)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| DatasetError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| col(name).ok_or_else(|| DatasetError::MissingColumn(name.to_string()));
    let file_col = required("file")?;
    let subject_col = required("subject_id")?;
    let cohort_col = required("cohort")?;
    let activity_col = required("activity")?;
    let abnormality_col = col("abnormality");

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    let mut cohorts: BTreeMap<String, SubjectMeta> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(DatasetError::RowWidth {
                line,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let activity: Activity = record[activity_col].parse().map_err(|_| {
            DatasetError::UnknownActivity {
                line,
                value: record[activity_col].to_string(),
            }
        })?;
        let cohort: Cohort = record[cohort_col].parse().map_err(|_| DatasetError::UnknownCohort {
            line,
            value: record[cohort_col].to_string(),
        })?;
        let abnormality = match abnormality_col {
            Some(c) => record[c].parse::<Abnormality>().map_err(|_| {
                DatasetError::UnknownAbnormality {
                    line,
                    value: record[c].to_string(),
                }
            })?,
            None => Abnormality::None,
        };
        let meta = SubjectMeta::new(&record[subject_col], cohort, abnormality)?;
        if let Some(prev) = cohorts.get(&meta.subject_id) {
            if *prev != meta {
                return Err(DatasetError::CohortConflict {
                    line,
                    subject: meta.subject_id,
                });
            }
        } else {
            cohorts.insert(meta.subject_id.clone(), meta.clone());
        }
        if !seen.insert((meta.subject_id.clone(), activity)) {
            return Err(DatasetError::Duplicate {
                line,
                subject: meta.subject_id,
                activity,
            });
        }
        entries.push(ManifestEntry {
            line,
            file: record[file_col].to_string(),
            meta,
            activity,
        });
    }
    Ok(entries)
}

/// Full-cohort check: 22 subjects, each with every activity.
pub(crate) fn check_complete(entries: &[ManifestEntry]) -> Result<(), DatasetError> {
    let mut per_subject: BTreeMap<&str, HashSet<Activity>> = BTreeMap::new();
    for e in entries {
        per_subject.entry(&e.meta.subject_id).or_default().insert(e.activity);
    }
    if per_subject.len() != FULL_COHORT_SUBJECTS {
        return Err(DatasetError::Incomplete(format!(
            "{} subjects listed, expected {FULL_COHORT_SUBJECTS}",
            per_subject.len()
        )));
    }
    for (subject, acts) in &per_subject {
        for a in Activity::ALL {
            if !acts.contains(&a) {
                return Err(DatasetError::Incomplete(format!("subject {subject} has no {a} recording")));
            }
        }
    }
    Ok(())
}

pub fn load_dataset(manifest_path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset, DatasetError> {
    let manifest_path = manifest_path.as_ref();
    let bytes = fs::read(manifest_path).map_err(|source| DatasetError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let entries = parse_manifest(&bytes).map_err(|e| e.in_file(manifest_path))?;
    if options.strict {
        check_complete(&entries).map_err(|e| e.in_file(manifest_path))?;
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let recordings = entries
        .into_iter()
        .map(|e| load_recording_with_meta(base.join(&e.file), &options.column_map, e.meta, e.activity))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        recordings,
        label_map: options.label_map.clone(),
    })
}

fn cohort_token(meta: &SubjectMeta) -> &'static str {
    match (meta.cohort, meta.abnormality) {
        (Cohort::Abnormal, a) if a != Abnormality::None => a.as_str(),
        (c, _) => c.as_str(),
    }
}

/// Writes every recording as canonical CSV into `dir` plus a `manifest.csv`
/// listing them; returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf, DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = String::from("file,subject_id,cohort,abnormality,activity\n");
    for r in &dataset.recordings {
        let file = format!("{}_{}_{}.csv", r.meta.subject_id, cohort_token(&r.meta), r.activity);
        write_recording(r, dir.join(&file))?;
        manifest.push_str(&format!(
            "{file},{},{},{},{}\n",
            r.meta.subject_id,
            r.meta.cohort,
            r.meta.abnormality.as_str(),
            r.activity
        ));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
