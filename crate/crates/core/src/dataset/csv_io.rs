//! Canonical recording CSV.
//!
//! ```text
//! # sample_rate=1000          optional directive lines before the header
//! time,vm,st,bf,rf,angle      header; time and angle optional, any order,
//! 0.000,0.12,-0.03,0.4,0.0,12.5   names case-insensitive
//! ```
//!
//! One sample per row. Vendor exports with other column names or delimiters
//! go through [`convert_csv`] with a [`ColumnMap`] describing them.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{
    Abnormality, Activity, Cohort, DatasetError, Recording, SubjectMeta, CHANNEL_NAMES,
    N_CHANNELS, SAMPLE_RATE_HZ,
};
use crate::tensor::Tensor;

/// Which header names hold which channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    /// Header names for `[VM, ST, BF, RF]`.
    pub semg: [String; N_CHANNELS],
    /// Knee-angle header; read when present in the file.
    pub angle: Option<String>,
    /// Time header; validated as numeric when present, otherwise unused.
    pub time: Option<String>,
    pub delimiter: u8,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            semg: CHANNEL_NAMES.map(String::from),
            angle: Some("angle".into()),
            time: Some("time".into()),
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingSamples {
    pub semg: Tensor,
    pub knee_angle: Option<Vec<f64>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_directive(line_no: u64, line: &str) -> Result<(), DatasetError> {
    let body = line.trim_start_matches('#').trim();
    if let Some((key, value)) = body.split_once('=') {
        if key.trim().eq_ignore_ascii_case("sample_rate") {
            let value = value.trim();
            let ok = value.parse::<f64>().is_ok_and(|hz| hz == f64::from(SAMPLE_RATE_HZ));
            if !ok {
                return Err(DatasetError::SampleRate {
                    line: line_no,
                    found: value.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Parses a recording CSV into a `4×N` sEMG tensor (rows `[VM, ST, BF, RF]`,
/// whatever the file's column order) plus the optional knee angle.
pub fn parse_recording_csv(bytes: &[u8], map: &ColumnMap) -> Result<RecordingSamples, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|_| DatasetError::NotUtf8)?;

    // Leading blank and '#' lines: directives and comments.
    let mut skipped = 0u64;
    let mut rest = text;
    loop {
        let (line, tail) = match rest.split_once('\n') {
            Some((l, t)) => (l, t),
            None => (rest, ""),
        };
        let trimmed = line.trim();
        if !(trimmed.is_empty() || trimmed.starts_with('#')) || rest.is_empty() {
            break;
        }
        skipped += 1;
        check_directive(skipped, trimmed)?;
        rest = tail;
    }

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(map.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(rest.as_bytes());
    let csv_err = |e: csv::Error| DatasetError::Csv {
        line: e.position().map_or(0, |p| p.line()) + skipped,
        message: e.to_string(),
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    let find = |name: &str| headers.iter().position(|h| *h == name.to_ascii_lowercase());

    let mut semg_cols = [0usize; N_CHANNELS];
    for (c, name) in map.semg.iter().enumerate() {
        semg_cols[c] = find(name).ok_or_else(|| DatasetError::MissingColumn(format!(
            "{name} ({})",
            CHANNEL_NAMES[c].to_ascii_uppercase()
        )))?;
    }
    let angle_col = map.angle.as_deref().and_then(find);
    let time_col = map.time.as_deref().and_then(find);

    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); N_CHANNELS];
    let mut angle = angle_col.map(|_| Vec::new());
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_err(e)),
        }
        let line = record.position().map_or(0, |p| p.line()) + skipped;
        if record.len() != headers.len() {
            return Err(DatasetError::RowWidth {
                line,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let value = |col: usize| -> Result<f64, DatasetError> {
            let raw = &record[col];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::NonNumeric {
                    line,
                    column: headers[col].clone(),
                    value: raw.to_string(),
                })
        };
        for (c, &col) in semg_cols.iter().enumerate() {
            channels[c].push(value(col)?);
        }
        if let (Some(col), Some(a)) = (angle_col, angle.as_mut()) {
            a.push(value(col)?);
        }
        if let Some(col) = time_col {
            value(col)?;
        }
    }
    let n = channels[0].len();
    if n == 0 {
        return Err(DatasetError::EmptyRecording);
    }
    let semg = Tensor::new(vec![N_CHANNELS, n], channels.concat()).expect("4 equal rows");
    Ok(RecordingSamples {
        semg,
        knee_angle: angle,
    })
}

/// Metadata from the `<subject>_<cohort>_<activity>.csv` naming convention.
///
/// The cohort token is `healthy`, `abnormal`, or one of the abnormality
/// names (`acl`, `meniscus`, `sciatic`), which imply the abnormal cohort.
pub fn meta_from_file_name(path: &Path) -> Result<(SubjectMeta, Activity), DatasetError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let bad = || DatasetError::FileName(stem.to_string());
    let (subject, rest) = stem.split_once('_').ok_or_else(bad)?;
    let (cohort_token, activity) = rest.split_once('_').ok_or_else(bad)?;
    let activity: Activity = activity.parse().map_err(|_| bad())?;
    let (cohort, abnormality) = match cohort_token.parse::<Cohort>() {
        Ok(c) => (c, Abnormality::None),
        Err(_) => match cohort_token.parse::<Abnormality>() {
            Ok(a) if a != Abnormality::None => (Cohort::Abnormal, a),
            _ => return Err(bad()),
        },
    };
    Ok((SubjectMeta::new(subject, cohort, abnormality)?, activity))
}

pub fn load_recording(path: impl AsRef<Path>, map: &ColumnMap) -> Result<Recording, DatasetError> {
    let path = path.as_ref();
    let (meta, activity) = meta_from_file_name(path)?;
    load_recording_with_meta(path, map, meta, activity)
}

pub fn load_recording_with_meta(
    path: impl AsRef<Path>,
    map: &ColumnMap,
    meta: SubjectMeta,
    activity: Activity,
) -> Result<Recording, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let samples = parse_recording_csv(&bytes, map).map_err(|e| e.in_file(path))?;
    Recording::new(meta, activity, samples.semg, samples.knee_angle)
}

fn write_canonical(out: &mut impl Write, semg: &Tensor, angle: Option<&[f64]>) -> std::io::Result<()> {
    writeln!(out, "# sample_rate={SAMPLE_RATE_HZ}")?;
    write!(out, "{}", CHANNEL_NAMES.join(","))?;
    if angle.is_some() {
        write!(out, ",angle")?;
    }
    writeln!(out)?;
    for t in 0..semg.dim(1) {
        // `{}` on f64 prints the shortest representation that parses back exactly
        let row: Vec<String> = (0..N_CHANNELS).map(|c| format!("{}", semg.row(c)[t])).collect();
        write!(out, "{}", row.join(","))?;
        if let Some(a) = angle {
            write!(out, ",{}", a[t])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes `recording` in canonical form.
pub fn write_recording(recording: &Recording, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_canonical(&mut out, &recording.semg, recording.knee_angle.as_deref())
        .and_then(|_| fs::write(path, out))
        .map_err(io_err(path))
}

/// Reads a vendor export described by `map` and writes it as canonical CSV.
/// Returns the number of samples written.
pub fn convert_csv(
    input: impl AsRef<Path>,
    map: &ColumnMap,
    output: impl AsRef<Path>,
) -> Result<usize, DatasetError> {
    let (input, output) = (input.as_ref(), output.as_ref());
    let bytes = fs::read(input).map_err(io_err(input))?;
    let samples = parse_recording_csv(&bytes, map).map_err(|e| e.in_file(input))?;
    let mut out = Vec::new();
    write_canonical(&mut out, &samples.semg, samples.knee_angle.as_deref())
        .and_then(|_| fs::write(output, out))
        .map_err(io_err(output))?;
    Ok(samples.semg.dim(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RecordingSamples, DatasetError> {
        parse_recording_csv(text.as_bytes(), &ColumnMap::default())
    }

    #[test]
    fn minimal_file() {
        let s = parse("vm,st,bf,rf\n1,2,3,4\n5,6,7,8\n9,10,11,12\n").unwrap();
        assert_eq!(s.semg.shape(), &[4, 3]);
        assert_eq!(s.semg.row(0), &[1.0, 5.0, 9.0]);
        assert_eq!(s.semg.row(3), &[4.0, 8.0, 12.0]);
        assert!(s.knee_angle.is_none());
    }

    #[test]
    fn column_order_and_case_do_not_matter() {
        let s = parse("# sample_rate=1000\nRF,Time,BF,ANGLE,St,vm\n4,0,3,30,2,1\n").unwrap();
        assert_eq!(s.semg.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.knee_angle, Some(vec![30.0]));
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse("vm,st,bf\n1,2,3\n").unwrap_err();
        match err {
            DatasetError::MissingColumn(name) => assert!(name.contains("RF"), "{name}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_numeric_reports_line() {
        let err = parse("vm,st,bf,rf\n1,2,3,4\n1,x,3,4\n").unwrap_err();
        assert!(
            matches!(err, DatasetError::NonNumeric { line: 3, ref column, .. } if column == "st"),
            "{err}"
        );
        assert!(matches!(parse("vm,st,bf,rf\n1,2,3,NaN\n"), Err(DatasetError::NonNumeric { .. })));
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse("# sample_rate=1000\nvm,st,bf,rf\n1,2,3,4\n1,2,3\n").unwrap_err();
        assert!(
            matches!(err, DatasetError::RowWidth { line: 4, expected: 4, found: 3 }),
            "{err}"
        );
    }

    #[test]
    fn wrong_sample_rate() {
        let err = parse("# sample_rate=2000\nvm,st,bf,rf\n1,2,3,4\n").unwrap_err();
        assert!(matches!(err, DatasetError::SampleRate { line: 1, .. }), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(parse("vm,st,bf,rf\n"), Err(DatasetError::EmptyRecording)));
        assert!(parse("").is_err());
    }

    #[test]
    fn vendor_map_with_semicolons() {
        let map = ColumnMap {
            semg: ["EMG1", "EMG2", "EMG3", "EMG4"].map(String::from),
            angle: Some("Gonio".into()),
            time: None,
            delimiter: b';',
        };
        let s = parse_recording_csv(b"EMG4;EMG3;EMG2;EMG1;Gonio\n4;3;2;1;9\n", &map).unwrap();
        assert_eq!(s.semg.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.knee_angle, Some(vec![9.0]));
    }

    #[test]
    fn file_name_convention() {
        let (meta, activity) = meta_from_file_name(Path::new("d/S07_acl_gait.csv")).unwrap();
        assert_eq!(meta.subject_id, "S07");
        assert_eq!(meta.cohort, Cohort::Abnormal);
        assert_eq!(meta.abnormality, Abnormality::Acl);
        assert_eq!(activity, Activity::Gait);
        let (meta, activity) =
            meta_from_file_name(Path::new("S01_healthy_sitting_knee_extension.csv")).unwrap();
        assert_eq!(meta.cohort, Cohort::Healthy);
        assert_eq!(activity, Activity::SittingKneeExtension);
        assert!(meta_from_file_name(Path::new("S01_gait.csv")).is_err());
        assert!(meta_from_file_name(Path::new("S01_none_gait.csv")).is_err());
    }
}
