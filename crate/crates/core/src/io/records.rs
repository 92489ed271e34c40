//! Line-delimited JSON records.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! that every value survives a write/read cycle bit for bit and identical
//! runs produce identical bytes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use thiserror::Error;

use crate::format::parse_response;
use crate::types::{Generation, RewardBreakdown, SampleGroup, ScoreVector, TaskKind};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// JSON formatter that prints every float as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreciseFloats;

impl Formatter for PreciseFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes one value as a single JSON line (without the newline).
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String, RecordError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFloats);
    value.serialize(&mut ser).map_err(|e| RecordError::Serialize(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, records: &[T]) -> Result<(), RecordError> {
    for r in records {
        writeln!(out, "{}", to_json_line(r)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_jsonl_file<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), RecordError> {
    write_jsonl(BufWriter::new(File::create(path)?), records)
}

/// Reads one record per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>, RecordError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_text = line?;
        if line_text.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line_text)
            .map_err(|e| RecordError::Malformed { line: idx + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, RecordError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

/// One model response to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub sample_id: String,
    pub mos: f64,
    pub prompt_id: usize,
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub sample_id: String,
    pub mos: f64,
}

/// Reward of one scored response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub generation: usize,
    pub prompt_id: usize,
    pub format_valid: bool,
    #[serde(flatten)]
    pub reward: RewardBreakdown,
}

/// Groups response records by `sample_id` in order of first appearance.
///
/// Responses that fail to parse become malformed generations; duplicates
/// are kept as separate generations. All records of one sample must agree
/// on its MOS.
pub fn group_responses(records: &[(usize, ResponseRecord)], task: TaskKind) -> Result<Vec<SampleGroup>, RecordError> {
    let mut order: Vec<(String, f64, usize, Vec<Generation>)> = Vec::new();
    for (line, rec) in records {
        let malformed = |reason: String| RecordError::Malformed { line: *line, reason };
        let gen = match parse_response(&rec.response_text, task) {
            Ok(parsed) => {
                let scores = ScoreVector::for_task(&parsed.answer_scores, task).map_err(|e| malformed(e.to_string()))?;
                Generation::valid(scores, 0.0, rec.prompt_id, Some(rec.response_text.clone()))
                    .map_err(|e| malformed(e.to_string()))?
            }
            Err(_) => Generation::malformed(Some(rec.response_text.clone()), rec.prompt_id),
        };
        match order.iter_mut().find(|(id, ..)| *id == rec.sample_id) {
            Some((_, mos, _, gens)) => {
                if mos.to_bits() != rec.mos.to_bits() {
                    return Err(malformed(format!("MOS of `{}` differs from its first record", rec.sample_id)));
                }
                gens.push(gen);
            }
            None => order.push((rec.sample_id.clone(), rec.mos, *line, vec![gen])),
        }
    }
    order
        .into_iter()
        .map(|(id, mos, line, gens)| {
            SampleGroup::new(id, mos, None, gens).map_err(|e| RecordError::Malformed { line, reason: e.to_string() })
        })
        .collect()
}

/// Reads a response file and groups it into samples.
pub fn ingest_responses(path: impl AsRef<Path>, task: TaskKind) -> Result<Vec<SampleGroup>, RecordError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: ResponseRecord = serde_json::from_str(&text)
            .map_err(|e| RecordError::Malformed { line: idx + 1, reason: e.to_string() })?;
        records.push((idx + 1, rec));
    }
    group_responses(&records, task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn floats_use_seventeen_digits() {
        assert_eq!(to_json_line(&0.1).unwrap(), "1.0000000000000001e-1");
        assert_eq!(to_json_line(&vec![3.0, -0.25]).unwrap(), "[3.0000000000000000e0,-2.5000000000000000e-1]");
        assert_eq!(to_json_line(&f64::NAN).unwrap(), "null");
    }

    proptest! {
        #[test]
        fn floats_round_trip_bitwise(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = serde_json::from_str(&to_json_line(&x).unwrap()).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn jsonl_round_trip_and_line_numbers() {
        let recs = vec![
            TruthRecord { sample_id: "a".into(), mos: 1.25 },
            TruthRecord { sample_id: "b".into(), mos: 4.0 / 3.0 },
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let back: Vec<TruthRecord> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, recs);

        let bad = "{\"sample_id\":\"a\",\"mos\":1}\n\n{\"sample_id\":\"b\"\n";
        let err = read_jsonl::<TruthRecord, _>(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, RecordError::Malformed { line: 3, .. }));
    }

    fn rec(id: &str, mos: f64, text: &str) -> (usize, ResponseRecord) {
        (1, ResponseRecord { sample_id: id.into(), mos, prompt_id: 1, response_text: text.into() })
    }

    #[test]
    fn grouping_keeps_order_duplicates_and_malformed() {
        let ok = "<think>x</think><answer>3; 3; 3; 3; 3</answer>";
        let groups = group_responses(
            &[rec("b", 2.0, ok), rec("a", 3.0, ok), rec("b", 2.0, "garbage"), rec("b", 2.0, ok)],
            TaskKind::Iqa,
        )
        .unwrap();
        assert_eq!(groups.iter().map(|g| g.sample_id()).collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(groups[0].k(), 3);
        assert_eq!(groups[0].valid_indices(), vec![0, 2]);
        assert_eq!(groups[0].generations()[1].raw_text(), Some("garbage"));
    }

    #[test]
    fn grouping_rejects_inconsistent_or_bad_mos() {
        let ok = "<think>x</think><answer>3; 3; 3; 3; 3</answer>";
        assert!(group_responses(&[rec("a", 3.0, ok), rec("a", 3.5, ok)], TaskKind::Iqa).is_err());
        assert!(group_responses(&[rec("a", 7.0, ok)], TaskKind::Iqa).is_err());
    }

    #[test]
    fn score_record_flattens_breakdown() {
        let r = ScoreRecord {
            sample_id: "a".into(),
            generation: 0,
            prompt_id: 1,
            format_valid: true,
            reward: RewardBreakdown { r_total: 1.5, ..Default::default() },
        };
        let line = to_json_line(&r).unwrap();
        assert!(line.contains("\"r_total\":1.5000000000000000e0"));
        let back: ScoreRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
