//! File formats: configuration, JSON-lines records and training reports.

pub mod config;
pub mod records;
pub mod report;

pub use config::{load_config, parse_config, render_config, ConfigLoadError};
pub use records::{
    ingest_responses, read_jsonl, read_jsonl_file, to_json_line, write_jsonl, write_jsonl_file, PredictionRecord,
    RecordError, ResponseRecord, ScoreRecord, TruthRecord,
};
pub use report::{diagnostics_csv, parse_report, read_report, render_report, write_report};
