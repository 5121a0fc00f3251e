use std::fmt;

use crate::error::{Error, Result};
use crate::eval::SubjectMetrics;

pub const METRIC_KEYS: [&str; 5] = [
    "snr_artifact_db",
    "snr_clean_db",
    "mrcp_peak_uv",
    "mrcp_peak_latency_s",
    "outlier_fraction",
];

/// One `subject=… algorithm=… metric=… value=…` line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub subject: String,
    pub algorithm: String,
    pub metric: String,
    pub value: f64,
}

/// Decimal rendering with `+inf`, `-inf` and `nan` for the special values.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_value(s: &str) -> Option<f64> {
    match s {
        "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

impl fmt::Display for MetricRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "subject={} algorithm={} metric={} value={}",
            self.subject,
            self.algorithm,
            self.metric,
            format_value(self.value)
        )
    }
}

pub fn parse_metric_line(line: &str) -> Result<MetricRecord> {
    let bad = |message: String| Error::Parse { line: 1, message };
    let mut fields = std::collections::HashMap::new();
    for token in line.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("`{token}` is not key=value")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(|v| v.to_string())
            .ok_or_else(|| bad(format!("missing `{k}`")))
    };
    let raw = get("value")?;
    Ok(MetricRecord {
        subject: get("subject")?,
        algorithm: get("algorithm")?,
        metric: get("metric")?,
        value: parse_value(&raw).ok_or_else(|| bad(format!("bad value `{raw}`")))?,
    })
}

/// Records for every available metric of one (subject, algorithm) pair.
pub fn metric_records(subject: &str, algorithm: &str, m: &SubjectMetrics) -> Vec<MetricRecord> {
    let values = [
        m.snr_artifact_db,
        Some(m.snr_clean_db),
        Some(m.mrcp_peak_uv),
        Some(m.mrcp_peak_latency_s),
        Some(m.outlier_fraction),
    ];
    METRIC_KEYS
        .iter()
        .zip(values)
        .filter_map(|(k, v)| {
            v.map(|value| MetricRecord {
                subject: subject.to_string(),
                algorithm: algorithm.to_string(),
                metric: k.to_string(),
                value,
            })
        })
        .collect()
}
