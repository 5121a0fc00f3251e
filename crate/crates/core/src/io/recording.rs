use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORDING_MAGIC: &[u8; 8] = b"HEARREC\n";
pub const RECORDING_VERSION: u32 = 1;
const UNITS: &str = "microvolt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpan {
    pub start_sample: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub format_version: u32,
    pub f_s: f64,
    pub labels: Vec<String>,
    pub units: String,
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<TrialSpan>>,
}

impl RecordingHeader {
    pub fn new(f_s: f64, labels: Vec<String>, sample_count: usize) -> Self {
        Self {
            format_version: RECORDING_VERSION,
            f_s,
            labels,
            units: UNITS.to_string(),
            sample_count,
            trials: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != RECORDING_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: RECORDING_VERSION,
            });
        }
        if self.units != UNITS {
            return Err(Error::Inconsistency(format!("unsupported units `{}`", self.units)));
        }
        if !(self.f_s > 0.0 && self.f_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("sampling rate {} is not positive", self.f_s)));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        for span in self.trials.iter().flatten() {
            if span.start_sample + span.length > self.sample_count {
                return Err(Error::Inconsistency(format!(
                    "trial [{}, +{}) exceeds {} samples",
                    span.start_sample, span.length, self.sample_count
                )));
            }
        }
        Ok(())
    }
}

/// A header plus channels × samples data in µV.
///
/// Samples are stored as 32-bit floats, so round-trips are bit-exact for
/// data that is already `f32`-representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub header: RecordingHeader,
    pub data: Array2<f64>,
}

impl Recording {
    pub fn new(f_s: f64, labels: Vec<String>, data: Array2<f64>) -> Result<Self> {
        let header = RecordingHeader::new(f_s, labels, data.ncols());
        Self::from_parts(header, data)
    }

    pub fn from_parts(header: RecordingHeader, data: Array2<f64>) -> Result<Self> {
        header.validate()?;
        if data.nrows() != header.channels() || data.ncols() != header.sample_count {
            return Err(Error::ShapeMismatch(
                vec![header.channels(), header.sample_count],
                data.shape().to_vec(),
            ));
        }
        Ok(Self { header, data })
    }

    /// Concatenate equal-length trials (trials × channels × samples) in time,
    /// recording their boundaries.
    pub fn from_trials(f_s: f64, labels: Vec<String>, trials: ArrayView3<f64>) -> Result<Self> {
        let (n, channels, len) = trials.dim();
        let mut data = Array2::zeros((channels, n * len));
        for (t, trial) in trials.outer_iter().enumerate() {
            data.slice_mut(s![.., t * len..(t + 1) * len]).assign(&trial);
        }
        let mut header = RecordingHeader::new(f_s, labels, n * len);
        header.trials = Some(
            (0..n)
                .map(|t| TrialSpan {
                    start_sample: t * len,
                    length: len,
                })
                .collect(),
        );
        Self::from_parts(header, data)
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// Trial boundaries, or the whole recording as a single trial.
    pub fn spans(&self) -> Vec<TrialSpan> {
        self.header.trials.clone().unwrap_or_else(|| {
            vec![TrialSpan {
                start_sample: 0,
                length: self.header.sample_count,
            }]
        })
    }

    pub fn trial(&self, span: TrialSpan) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., span.start_sample..span.start_sample + span.length])
    }

    /// Stack trials into trials × channels × samples; they must share one length.
    pub fn trials(&self) -> Result<Array3<f64>> {
        let spans = self.spans();
        let len = spans.first().map_or(0, |s| s.length);
        if let Some(bad) = spans.iter().find(|s| s.length != len) {
            return Err(Error::Inconsistency(format!(
                "trials of unequal length ({len} and {})",
                bad.length
            )));
        }
        let mut out = Array3::zeros((spans.len(), self.channels(), len));
        for (mut dst, span) in out.outer_iter_mut().zip(&spans) {
            dst.assign(&self.trial(*span));
        }
        Ok(out)
    }

    /// Replace the data with trials of the same layout.
    pub fn with_trials(&self, trials: ArrayView3<f64>) -> Result<Self> {
        let spans = self.spans();
        if trials.len_of(Axis(0)) != spans.len() || trials.len_of(Axis(1)) != self.channels() {
            return Err(Error::ShapeMismatch(
                vec![spans.len(), self.channels()],
                trials.shape()[..2].to_vec(),
            ));
        }
        let mut data = self.data.clone();
        for (trial, span) in trials.outer_iter().zip(&spans) {
            if trial.ncols() != span.length {
                return Err(Error::ShapeMismatch(vec![span.length], vec![trial.ncols()]));
            }
            data.slice_mut(s![.., span.start_sample..span.start_sample + span.length])
                .assign(&trial);
        }
        Self::from_parts(self.header.clone(), data)
    }
}

pub fn write_recording_to<W: Write>(mut out: W, recording: &Recording) -> Result<()> {
    recording.header.validate()?;
    out.write_all(RECORDING_MAGIC)?;
    serde_json::to_writer(&mut out, &recording.header)?;
    out.write_all(b"\n")?;
    let mut frame = Vec::with_capacity(4 * recording.channels());
    for column in recording.data.columns() {
        frame.clear();
        for v in column {
            frame.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.write_all(&frame)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_recording_from<R: BufRead>(mut input: R) -> Result<Recording> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| Error::Parse {
        line: 1,
        message: "missing recording magic".into(),
    })?;
    if &magic != RECORDING_MAGIC {
        return Err(Error::Parse {
            line: 1,
            message: "not a recording file".into(),
        });
    }
    let mut line = Vec::new();
    input.read_until(b'\n', &mut line)?;
    let header: RecordingHeader = serde_json::from_slice(&line)?;
    header.validate()?;

    let channels = header.channels();
    let expected = header.sample_count * channels * 4;
    let mut payload = Vec::with_capacity(expected);
    input.read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Inconsistency(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut data = Array2::zeros((channels, header.sample_count));
    for (n, frame) in payload.chunks_exact(4 * channels.max(1)).enumerate() {
        for (c, b) in frame.chunks_exact(4).enumerate() {
            data[[c, n]] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    Recording::from_parts(header, data)
}

pub fn write_recording(path: impl AsRef<Path>, recording: &Recording) -> Result<()> {
    write_recording_to(BufWriter::new(File::create(path)?), recording)
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<Recording> {
    read_recording_from(BufReader::new(File::open(path)?))
}
