//! Deterministic source waveforms: electrode pops and the movement-related
//! cortical potential (MRCP).

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Step of `amplitude` µV at `onset` followed by `exp(−decay_rate·(t − onset))`.
/// Zero before onset.
pub fn pop_waveform(amplitude: f64, decay_rate: f64, onset: f64, length: usize, f_s: f64) -> Result<Vec<f64>> {
    let duration = length as f64 / f_s;
    if !(onset >= 0.0 && onset < duration) {
        return Err(Error::OnsetOutsideTrial {
            onset,
            length: duration,
        });
    }
    Ok((0..length)
        .map(|i| {
            let t = i as f64 / f_s;
            if t >= onset {
                amplitude * (-decay_rate * (t - onset)).exp()
            } else {
                0.0
            }
        })
        .collect())
}

/// Gaussian kernels (center s, width s, weight) of the MRCP template: a slow
/// negative shift, an abrupt intensification and the peak.
const MRCP_KERNELS: [(f64, f64, f64); 3] = [(7.45, 0.25, 0.22), (7.85, 0.10, 0.45), (8.0, 0.06, 0.6)];

/// Nominal peak time of the unjittered MRCP (s from trial start).
pub const MRCP_PEAK_TIME: f64 = 8.0;

fn kernel_sum(t: f64) -> f64 {
    MRCP_KERNELS
        .iter()
        .map(|&(c, w, a)| a * (-0.5 * ((t - c) / w).powi(2)).exp())
        .sum()
}

/// Shift that places the kernel-sum maximum at [`MRCP_PEAK_TIME`], and the
/// maximum value, found once by golden-section search.
fn template_alignment() -> (f64, f64) {
    static ALIGN: OnceLock<(f64, f64)> = OnceLock::new();
    *ALIGN.get_or_init(|| {
        let (mut a, mut b) = (MRCP_PEAK_TIME - 0.3, MRCP_PEAK_TIME + 0.3);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-13 {
            let c = b - ratio * (b - a);
            let d = a + ratio * (b - a);
            if kernel_sum(c) > kernel_sum(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let t_max = 0.5 * (a + b);
        (MRCP_PEAK_TIME - t_max, kernel_sum(t_max))
    })
}

/// MRCP value (µV) at time `t` for a trial whose MRCP is delayed by
/// `latency_shift` seconds and peaks at `peak_uv` (negative).
pub fn mrcp_value(t: f64, latency_shift: f64, peak_uv: f64) -> f64 {
    let (offset, max) = template_alignment();
    peak_uv * kernel_sum(t - offset - latency_shift) / max
}

/// Sampled MRCP over `length` samples.
pub fn mrcp_waveform(length: usize, f_s: f64, latency_shift: f64, peak_uv: f64) -> Vec<f64> {
    (0..length)
        .map(|i| mrcp_value(i as f64 / f_s, latency_shift, peak_uv))
        .collect()
}
