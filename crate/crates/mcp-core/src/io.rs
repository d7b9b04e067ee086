//! File formats: JSONL instance records, the persisted quantile table, and
//! fitted calibrator models.
//!
//! Instances travel as one JSON object per line, UTF-8, unknown fields
//! preserved on round trip. The quantile table is a single JSON document
//! with a format_version field and the detector profile embedded, so a
//! table is self-contained for detection. Thresholds serialize at full
//! precision (shortest round-trippable decimal), including the 1.0
//! sentinels.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::baselines::{CalibratorKind, CalibratorModel};
use crate::calibration::{BinRecord, QuantileTable};
use crate::error::{Error, Result};
use crate::types::{DetectorProfile, Label, ScoredInstance};

pub const FORMAT_VERSION: u32 = 1;

/// One instance line as stored on disk. `length` may be omitted when `text`
/// is present; it is then computed by whitespace tokenization at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl InstanceRecord {
    pub fn from_instance(inst: &ScoredInstance) -> Self {
        Self {
            id: inst.id.clone(),
            length: Some(inst.length),
            raw_score: Some(inst.raw_score),
            label: inst.label,
            text: inst.text.clone(),
            extra: Map::new(),
        }
    }

    /// Resolve the record into a scored instance.
    ///
    /// `require_score` is set by contexts that will feed the score through
    /// the nonconformity transform (calibrate, detect); the attack pipeline
    /// does not need one.
    pub fn to_instance(&self, require_score: bool) -> Result<ScoredInstance> {
        let length = match (self.length, &self.text) {
            (Some(l), _) => l,
            (None, Some(text)) => crate::attack::tokenize_ws(text).len() as u32,
            (None, None) => {
                return Err(Error::InvalidFile(format!(
                    "record {}: needs length or text",
                    self.id
                )))
            }
        };
        let raw_score = match self.raw_score {
            Some(s) => s,
            None if require_score => {
                return Err(Error::InvalidFile(format!(
                    "record {}: missing raw_score",
                    self.id
                )))
            }
            None => 0.0,
        };
        Ok(ScoredInstance {
            id: self.id.clone(),
            length,
            raw_score,
            label: self.label,
            text: self.text.clone(),
        })
    }
}

/// Read instance records, reporting the first rejected line by number
/// (1-based).
pub fn read_instance_records<R: BufRead>(reader: R) -> Result<Vec<InstanceRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| Error::ParseLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_instance_records<W: Write>(mut writer: W, records: &[InstanceRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)
            .map_err(|e| Error::InvalidFile(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Persisted quantile table: self-contained calibration artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTableFile {
    pub format_version: u32,
    pub detector: DetectorProfile,
    pub alpha: f64,
    pub w: u32,
    pub bins: Vec<BinRecord>,
}

impl QuantileTableFile {
    pub fn new(detector: &DetectorProfile, table: &QuantileTable) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            detector: detector.clone(),
            alpha: table.alpha,
            w: table.w,
            bins: table.bins.clone(),
        }
    }

    /// Validate and split into the profile and the in-memory table.
    pub fn into_parts(self) -> Result<(DetectorProfile, QuantileTable)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidFile(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        let l_max = self.detector.l_max;
        if self.w < 1 || self.w > l_max {
            return Err(Error::InvalidWidth { w: self.w, l_max });
        }
        let expect_k = (l_max / self.w) as usize;
        if self.bins.len() != expect_k {
            return Err(Error::InvalidFile(format!(
                "expected {expect_k} bins for l_max {l_max} and w {}, found {}",
                self.w,
                self.bins.len()
            )));
        }
        for (i, bin) in self.bins.iter().enumerate() {
            let lo = i as u32 * self.w;
            let hi = if i + 1 == expect_k {
                l_max
            } else {
                (i as u32 + 1) * self.w
            };
            if bin.lo != lo || bin.hi != hi {
                return Err(Error::InvalidFile(format!(
                    "bin {i} bounds [{}, {}) do not match width {} (expected [{lo}, {hi}))",
                    bin.lo, bin.hi, self.w
                )));
            }
            if !(bin.q > 0.0 && bin.q <= 1.0) {
                return Err(Error::InvalidFile(format!(
                    "bin {i} threshold {} outside (0, 1]",
                    bin.q
                )));
            }
        }
        let table = QuantileTable {
            alpha: self.alpha,
            w: self.w,
            l_max,
            bins: self.bins,
        };
        Ok((self.detector, table))
    }
}

pub fn write_table<W: Write>(
    mut writer: W,
    detector: &DetectorProfile,
    table: &QuantileTable,
) -> Result<()> {
    let file = QuantileTableFile::new(detector, table);
    serde_json::to_writer_pretty(&mut writer, &file)
        .map_err(|e| Error::InvalidFile(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_table<R: BufRead>(reader: R) -> Result<(DetectorProfile, QuantileTable)> {
    let file: QuantileTableFile =
        serde_json::from_reader(reader).map_err(|e| Error::InvalidFile(e.to_string()))?;
    file.into_parts()
}

pub fn read_profile<R: BufRead>(reader: R) -> Result<DetectorProfile> {
    let profile: DetectorProfile =
        serde_json::from_reader(reader).map_err(|e| Error::InvalidFile(e.to_string()))?;
    if profile.l_max < 1 {
        return Err(Error::InvalidFile("profile l_max must be >= 1".into()));
    }
    if !profile.tau.is_finite() {
        return Err(Error::InvalidFile("profile tau must be finite".into()));
    }
    Ok(profile)
}

/// Persisted calibrator model. The max-F1 threshold may be infinite, which
/// JSON numbers cannot carry, so it is encoded as "inf"/"-inf" strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorModelFile {
    pub format_version: u32,
    pub kind: CalibratorKind,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "maybe_inf")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<(f64, f64)>>,
}

mod maybe_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_finite() => s.serialize_f64(*x),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(_) => s.serialize_str("-inf"),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Null => Ok(None),
            serde_json::Value::Number(n) => Ok(n.as_f64()),
            serde_json::Value::String(s) => match s.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(D::Error::custom(format!("bad threshold string {other:?}"))),
            },
            other => Err(D::Error::custom(format!("bad threshold value {other}"))),
        }
    }
}

impl CalibratorModelFile {
    pub fn from_model(model: &CalibratorModel) -> Self {
        let mut file = Self {
            format_version: FORMAT_VERSION,
            kind: model.kind(),
            threshold: None,
            f1: None,
            a: None,
            b: None,
            steps: None,
        };
        match model {
            CalibratorModel::MaxF1 { threshold, f1 } => {
                file.threshold = Some(*threshold);
                file.f1 = Some(*f1);
            }
            CalibratorModel::Platt { a, b } => {
                file.a = Some(*a);
                file.b = Some(*b);
            }
            CalibratorModel::Isotonic { steps } => file.steps = Some(steps.clone()),
        }
        file
    }

    pub fn into_model(self) -> Result<CalibratorModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidFile(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        match self.kind {
            CalibratorKind::MaxF1 => match (self.threshold, self.f1) {
                (Some(threshold), Some(f1)) => Ok(CalibratorModel::MaxF1 { threshold, f1 }),
                _ => Err(Error::ModelIncomplete { kind: "max_f1" }),
            },
            CalibratorKind::Platt => match (self.a, self.b) {
                (Some(a), Some(b)) => Ok(CalibratorModel::Platt { a, b }),
                _ => Err(Error::ModelIncomplete { kind: "platt" }),
            },
            CalibratorKind::Isotonic => match self.steps {
                Some(steps) if !steps.is_empty() => Ok(CalibratorModel::Isotonic { steps }),
                _ => Err(Error::ModelIncomplete { kind: "isotonic" }),
            },
        }
    }
}

pub fn write_model<W: Write>(mut writer: W, model: &CalibratorModel) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, &CalibratorModelFile::from_model(model))
        .map_err(|e| Error::InvalidFile(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_model<R: BufRead>(reader: R) -> Result<CalibratorModel> {
    let file: CalibratorModelFile =
        serde_json::from_reader(reader).map_err(|e| Error::InvalidFile(e.to_string()))?;
    file.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate_mcp, CalEntry, CalibrationSet};
    use crate::types::{NonconformityScore, Polarity};
    use proptest::prelude::*;

    fn profile() -> DetectorProfile {
        DetectorProfile::new("fast-detect", Polarity::Negative, 0.9, 1024).unwrap()
    }

    #[test]
    fn instance_jsonl_roundtrip_preserves_unknown_fields() {
        let line = r#"{"id":"a1","length":42,"raw_score":-0.3,"label":"human","source":"news","rank":7}"#;
        let records = read_instance_records(line.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].extra.get("source").unwrap(), "news");
        assert_eq!(records[0].extra.get("rank").unwrap(), 7);

        let mut out = Vec::new();
        write_instance_records(&mut out, &records).unwrap();
        let reread = read_instance_records(out.as_slice()).unwrap();
        assert_eq!(reread, records);
        let original: Value = serde_json::from_str(line).unwrap();
        let rewritten: Value =
            serde_json::from_str(std::str::from_utf8(&out).unwrap().trim()).unwrap();
        assert_eq!(original, rewritten);
    }

    #[test]
    fn rejected_lines_carry_line_numbers() {
        let data = "{\"id\":\"ok\",\"length\":1,\"raw_score\":0.5}\nnot json\n";
        match read_instance_records(data.as_bytes()) {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn blank_lines_are_skipped() {
        let data = "\n{\"id\":\"a\",\"length\":1,\"raw_score\":0.5}\n\n";
        assert_eq!(read_instance_records(data.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn length_computed_from_text_when_absent() {
        let line = r#"{"id":"t1","raw_score":0.1,"text":"three short words"}"#;
        let records = read_instance_records(line.as_bytes()).unwrap();
        let inst = records[0].to_instance(true).unwrap();
        assert_eq!(inst.length, 3);

        let bad = r#"{"id":"t2","raw_score":0.1}"#;
        let records = read_instance_records(bad.as_bytes()).unwrap();
        assert!(records[0].to_instance(true).is_err());
    }

    #[test]
    fn missing_raw_score_only_fails_when_required() {
        let line = r#"{"id":"t1","text":"some words here"}"#;
        let records = read_instance_records(line.as_bytes()).unwrap();
        assert!(records[0].to_instance(true).is_err());
        assert!(records[0].to_instance(false).is_ok());
    }

    #[test]
    fn table_roundtrip_including_sentinels() {
        let entries: Vec<CalEntry> = (0..100)
            .map(|i| CalEntry {
                length: 10 + (i % 80),
                score: NonconformityScore::new(0.001 + 0.009 * (i % 100) as f64).unwrap(),
            })
            .collect();
        let cal = CalibrationSet::new(profile(), entries);
        let table = calibrate_mcp(&cal, 0.05, 100).unwrap();
        assert!(table.sentinel_count() > 0);

        let mut buf = Vec::new();
        write_table(&mut buf, &profile(), &table).unwrap();
        let (detector, loaded) = read_table(buf.as_slice()).unwrap();
        assert_eq!(detector, profile());
        assert_eq!(loaded, table);
    }

    #[test]
    fn table_validation_rejects_corrupt_files() {
        let cal = CalibrationSet::new(
            profile(),
            vec![
                CalEntry {
                    length: 10,
                    score: NonconformityScore::new(0.5).unwrap(),
                };
                30
            ],
        );
        let table = calibrate_mcp(&cal, 0.2, 100).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &profile(), &table).unwrap();
        let text = String::from_utf8(buf).unwrap();

        for (needle, replacement) in [
            ("\"format_version\": 1", "\"format_version\": 9"),
            ("\"alpha\": 0.2", "\"alpha\": 1.5"),
            ("\"q\": 1.0", "\"q\": 1.25"),
        ] {
            let corrupt = text.replace(needle, replacement);
            assert_ne!(corrupt, text, "replacement {needle} did not apply");
            assert!(read_table(corrupt.as_bytes()).is_err(), "{needle}");
        }
    }

    #[test]
    fn model_files_roundtrip_all_kinds() {
        let models = [
            CalibratorModel::MaxF1 {
                threshold: 0.4375,
                f1: 0.9,
            },
            CalibratorModel::MaxF1 {
                threshold: f64::NEG_INFINITY,
                f1: 2.0 / 3.0,
            },
            CalibratorModel::Platt { a: 13.25, b: -6.5 },
            CalibratorModel::Isotonic {
                steps: vec![(0.1, 0.0), (0.5, 0.25), (0.9, 1.0)],
            },
        ];
        for model in &models {
            let mut buf = Vec::new();
            write_model(&mut buf, model).unwrap();
            let loaded = read_model(buf.as_slice()).unwrap();
            assert_eq!(&loaded, model);
        }
    }

    #[test]
    fn model_file_missing_fields_rejected() {
        let json = r#"{"format_version":1,"kind":"platt","a":1.0}"#;
        assert!(read_model(json.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn table_file_roundtrip_is_value_identical(
            raw in prop::collection::vec((0u32..1200, 0.001f64..0.999), 1..120),
            alpha in 0.01f64..0.5,
        ) {
            let entries: Vec<CalEntry> = raw
                .iter()
                .map(|&(length, s)| CalEntry {
                    length,
                    score: NonconformityScore::new(s).unwrap(),
                })
                .collect();
            let cal = CalibrationSet::new(profile(), entries);
            let table = calibrate_mcp(&cal, alpha, 100).unwrap();
            let mut buf = Vec::new();
            write_table(&mut buf, &profile(), &table).unwrap();
            let (_, loaded) = read_table(buf.as_slice()).unwrap();
            // Full-precision thresholds: bit-for-bit equality.
            prop_assert_eq!(loaded, table);
        }
    }
}
