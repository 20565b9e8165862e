//! CSV traces and `key: value` summaries.
//!
//! Floats are written in Rust's shortest round-trip form, so every file read
//! back through these readers reproduces the written values bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{EnergyReport, LinearityReport, LinearitySummary, SweepRow};
use crate::tracking::{TrackingRecord, TrackingTrace};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("summary is missing `{0}`")]
    Missing(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub ideal: f64,
    pub measured: f64,
    pub error: f64,
}

pub fn write_linearity_csv<W: Write>(out: W, rep: &LinearityReport) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for (step, ((&ideal, &measured), &error)) in rep
        .ideal
        .iter()
        .zip(&rep.measured)
        .zip(&rep.errors)
        .enumerate()
    {
        w.serialize(TraceRow {
            step,
            ideal,
            measured,
            error,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_linearity_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, ReportError> {
    read_rows(input)
}

pub fn write_tracking_csv<W: Write>(out: W, trace: &TrackingTrace) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for r in &trace.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracking_csv<R: Read>(input: R) -> Result<TrackingTrace, ReportError> {
    Ok(TrackingTrace {
        records: read_rows::<_, TrackingRecord>(input)?,
    })
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, ReportError> {
    read_rows(input)
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>, ReportError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// Ordered `key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(':').ok_or_else(|| ReportError::Parse {
                line: i + 1,
                reason: "expected `key: value`".into(),
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Summary { entries })
    }

    pub fn to_map(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }

    fn number<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, ReportError> {
        let raw = self.get(key).ok_or(ReportError::Missing(key))?;
        raw.parse().map_err(|_| ReportError::Parse {
            line: 0,
            reason: format!("`{key}` has non-numeric value `{raw}`"),
        })
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

impl LinearitySummary {
    pub fn to_summary(&self) -> Summary {
        let mut s = Summary::new();
        s.push("length", self.length)
            .push("effective_bits", self.effective_bits)
            .push("max_abs_error", self.max_abs_error)
            .push("rms_error", self.rms_error)
            .push("full_scale", self.full_scale);
        s
    }

    pub fn from_summary(s: &Summary) -> Result<Self, ReportError> {
        Ok(LinearitySummary {
            length: s.number("length")?,
            effective_bits: s.number("effective_bits")?,
            max_abs_error: s.number("max_abs_error")?,
            rms_error: s.number("rms_error")?,
            full_scale: s.number("full_scale")?,
        })
    }
}

impl EnergyReport {
    pub fn to_summary(&self) -> Summary {
        let mut s = Summary::new();
        s.push("ops_count", self.ops_count)
            .push(
                "e_per_op_time_domain",
                format!("{:e}", self.e_per_op_time_domain),
            )
            .push("e_per_op_digital", format!("{:e}", self.e_per_op_digital))
            .push("total_time_domain", format!("{:e}", self.total_time_domain))
            .push("total_digital", format!("{:e}", self.total_digital))
            .push("ratio", self.ratio)
            .push("note", crate::metrics::ENERGY_NOTE);
        s
    }

    pub fn from_summary(s: &Summary) -> Result<Self, ReportError> {
        Ok(EnergyReport {
            ops_count: s.number("ops_count")?,
            e_per_op_time_domain: s.number("e_per_op_time_domain")?,
            e_per_op_digital: s.number("e_per_op_digital")?,
            total_time_domain: s.number("total_time_domain")?,
            total_digital: s.number("total_digital")?,
            ratio: s.number("ratio")?,
        })
    }
}
