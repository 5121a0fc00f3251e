//! Spectrally shaped noise: white, pink (1/f), brown (1/f²) and the
//! band-limited transient used for electrode drifts.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseColor {
    White,
    Pink,
    Brown,
}

impl NoiseColor {
    /// Exponent α of the power spectrum `1/f^α`.
    pub fn exponent(self) -> f64 {
        match self {
            NoiseColor::White => 0.0,
            NoiseColor::Pink => 1.0,
            NoiseColor::Brown => 2.0,
        }
    }
}

/// FFT plans for one signal length, reused across realizations.
#[derive(Clone)]
pub struct Synth {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Synth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Synth").field("len", &self.len).finish()
    }
}

fn scale_to_rms(x: &mut [f64], rms: f64) {
    let current = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if current > 0.0 {
        let g = rms / current;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

impl Synth {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Inverse transform of a spectrum given on bins `0..=len/2`; the negative
    /// frequencies are filled in by Hermitian symmetry so the result is real.
    fn real_from_half_spectrum(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.len;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(half[0].re, 0.0);
        for k in 1..half.len() {
            if 2 * k == n {
                buf[k] = Complex64::new(half[k].re, 0.0);
            } else if k < n {
                buf[k] = half[k];
                buf[n - k] = half[k].conj();
            }
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Noise with power spectrum `∝ 1/f^α`, zero mean, RMS exactly `rms`.
    pub fn colored<R: Rng + ?Sized>(&self, color: NoiseColor, rms: f64, rng: &mut R) -> Vec<f64> {
        let n = self.len;
        if n == 0 {
            return Vec::new();
        }
        let mut x = match color {
            NoiseColor::White => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            _ => {
                let half_exp = color.exponent() / 2.0;
                let mut half = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
                for (k, h) in half.iter_mut().enumerate().skip(1) {
                    *h = complex_gaussian(rng) * (k as f64).powf(-half_exp);
                }
                self.real_from_half_spectrum(&half)
            }
        };
        scale_to_rms(&mut x, rms);
        x
    }

    /// Zero every bin outside `[low_bin, high_bin]` (and its mirror image).
    fn band_project(&self, x: &[f64], low_bin: usize, high_bin: usize) -> Vec<f64> {
        let n = self.len;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let fold = k.min(n - k);
            if fold < low_bin || fold > high_bin {
                *b = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Tukey (tapered cosine) window of `alpha` taper fraction evaluated over
/// `len` points; endpoints are zero for `alpha > 0`.
pub fn tukey_window(len: usize, alpha: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let alpha = alpha.clamp(0.0, 1.0);
    (0..len)
        .map(|i| {
            let u = i as f64 / (len - 1) as f64;
            let edge = u.min(1.0 - u);
            if alpha == 0.0 || edge >= alpha / 2.0 {
                1.0
            } else {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * edge / alpha).cos())
            }
        })
        .collect()
}

/// Shape of an electrode drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftShape {
    /// Pass band in Hz.
    pub band: [f64; 2],
    /// Support of the taper in seconds from trial start.
    pub window: [f64; 2],
    /// RMS of the band-limited noise before tapering (µV).
    pub rms: f64,
    pub tukey_alpha: f64,
    /// Alternating band/time projections that concentrate the energy in band.
    pub refinements: usize,
}

impl Default for DriftShape {
    fn default() -> Self {
        Self {
            band: [0.1, 0.3],
            window: [3.0, 12.0],
            rms: 50.0,
            tukey_alpha: 0.25,
            refinements: 32,
        }
    }
}

impl DriftShape {
    pub(crate) fn validate(&self, len: usize, f_s: f64) -> Result<(usize, usize, usize, usize)> {
        let [low, high] = self.band;
        let invalid = || Error::InvalidBand { low, high, f_s };
        if !(low > 0.0 && high > low && high < f_s / 2.0) {
            return Err(invalid());
        }
        let df = f_s / len as f64;
        let low_bin = (low / df - 1e-9).ceil() as usize;
        let high_bin = (high / df + 1e-9).floor() as usize;
        if low_bin > high_bin {
            return Err(invalid());
        }
        let duration = len as f64 / f_s;
        let [w0, w1] = self.window;
        if !(w0 >= 0.0 && w1 > w0 && w1 <= duration) {
            return Err(Error::OnsetOutsideTrial {
                onset: w0,
                length: duration,
            });
        }
        let start = (w0 * f_s).round() as usize;
        let end = ((w1 * f_s).round() as usize).min(len - 1);
        Ok((low_bin, high_bin, start, end))
    }

    /// Pink noise confined to the band, tapered by a Tukey window supported
    /// on `window`. The taper-then-band-limit step is repeated
    /// `refinements` times so the tapered result keeps its energy in band;
    /// samples outside the window are exactly zero.
    pub fn generate<R: Rng + ?Sized>(&self, synth: &Synth, f_s: f64, rng: &mut R) -> Result<Vec<f64>> {
        let n = synth.len();
        let (low_bin, high_bin, start, end) = self.validate(n, f_s)?;
        let mut half = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
        for (k, h) in half.iter_mut().enumerate().take(high_bin + 1).skip(low_bin) {
            *h = complex_gaussian(rng) * (k as f64).powf(-0.5);
        }
        let mut x = synth.real_from_half_spectrum(&half);

        let mut window = vec![0.0; n];
        window[start..=end].copy_from_slice(&tukey_window(end - start + 1, self.tukey_alpha));
        for _ in 0..self.refinements {
            let tapered: Vec<f64> = x.iter().zip(&window).map(|(a, w)| a * w).collect();
            x = synth.band_project(&tapered, low_bin, high_bin);
        }
        scale_to_rms(&mut x, self.rms);
        Ok(x.iter().zip(&window).map(|(a, w)| a * w).collect())
    }
}
