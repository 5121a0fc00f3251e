//! On-disk formats and the framed streaming protocol.
//!
//! * recordings: magic line, one JSON header line, then little-endian `f32`
//!   samples, frame-major (all channels of a sample are contiguous);
//! * calibration models: JSON;
//! * ground-truth events: one JSON object per line;
//! * metrics: one `key=value` record per line.

mod events;
mod metrics;
mod model;
mod recording;
mod stream;

pub use events::{read_events, write_events};
pub use metrics::{format_value, metric_records, parse_metric_line, MetricRecord, METRIC_KEYS};
pub use model::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use recording::{
    read_recording, read_recording_from, write_recording, write_recording_to, Recording, RecordingHeader,
    TrialSpan, RECORDING_MAGIC, RECORDING_VERSION,
};
pub use stream::{
    read_frame, read_handshake, run_stream, write_frame, write_handshake, StreamSummary, STREAM_MAGIC,
    STREAM_VERSION,
};
