//! Scoring a corrector against simulated ground truth: masked SNR, trial
//! averages and MRCP peaks, and automatic outlier-trial detection.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::sim::{ArtifactEvent, Synth};

/// Interval (s from trial start) over which corrections are scored.
pub const EVALUATION_WINDOW: [f64; 2] = [5.0, 10.0];

/// Default amplitude (µV) above which an injected waveform counts as contamination.
pub const DEFAULT_MASK_EPSILON: f64 = 1.0;

/// Ground-truth contamination of a trials × channels × samples dataset,
/// restricted to the evaluation window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationMask {
    contaminated: Array3<bool>,
    /// Inclusive sample range of the evaluation window.
    window: (usize, usize),
}

impl ContaminationMask {
    pub fn contaminated(&self) -> ArrayView3<'_, bool> {
        self.contaminated.view()
    }

    /// Elements of the evaluation window that no artifact touches.
    pub fn artifact_free(&self) -> Array3<bool> {
        let (lo, hi) = self.window;
        let mut free = Array3::from_elem(self.contaminated.dim(), false);
        ndarray::Zip::indexed(&mut free)
            .and(&self.contaminated)
            .for_each(|(_, _, s), f, &c| *f = !c && s >= lo && s <= hi);
        free
    }

    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub fn count(&self) -> usize {
        self.contaminated.iter().filter(|&&b| b).count()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.contaminated.dim()
    }
}

fn window_samples(samples: usize, f_s: f64) -> (usize, usize) {
    let lo = (EVALUATION_WINDOW[0] * f_s).ceil() as usize;
    let hi = ((EVALUATION_WINDOW[1] * f_s).floor() as usize).min(samples.saturating_sub(1));
    (lo, hi)
}

/// Mark every (trial, channel, sample) inside the evaluation window where
/// some event's injected waveform exceeds `epsilon` in magnitude.
pub fn build_contamination_mask(
    events: &[ArtifactEvent],
    shape: (usize, usize, usize),
    f_s: f64,
    epsilon: f64,
) -> Result<ContaminationMask> {
    let (trials, channels, samples) = shape;
    let window = window_samples(samples, f_s);
    let mut contaminated = Array3::from_elem(shape, false);
    if events.is_empty() {
        return Ok(ContaminationMask { contaminated, window });
    }
    let synth = Synth::new(samples);
    for ev in events {
        if ev.channel >= channels {
            return Err(Error::ChannelOutOfRange {
                index: ev.channel,
                channels,
            });
        }
        if ev.trial >= trials {
            return Err(Error::Inconsistency(format!(
                "event on trial {} but the dataset has {trials} trials",
                ev.trial
            )));
        }
        let w = ev.waveform(&synth, f_s)?;
        let mut row = contaminated.slice_mut(ndarray::s![ev.trial, ev.channel, ..]);
        for s in window.0..=window.1 {
            if w[s].abs() > epsilon {
                row[s] = true;
            }
        }
    }
    Ok(ContaminationMask { contaminated, window })
}

fn check_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(a.to_vec(), b.to_vec()));
    }
    Ok(())
}

/// Masked signal-to-noise ratio in dB: `20·log10(‖clean‖ / ‖clean − corrected‖)`
/// over the selected elements. Returns `f64::INFINITY` when the error is zero.
pub fn snr(clean: ArrayView3<f64>, corrected: ArrayView3<f64>, mask: ArrayView3<bool>) -> Result<f64> {
    check_shape(clean.shape(), corrected.shape())?;
    check_shape(clean.shape(), mask.shape())?;
    let mut signal = 0.0;
    let mut error = 0.0;
    let mut selected = 0usize;
    ndarray::Zip::from(&clean)
        .and(&corrected)
        .and(&mask)
        .for_each(|&c, &x, &m| {
            if m {
                signal += c * c;
                error += (c - x) * (c - x);
                selected += 1;
            }
        });
    if selected == 0 {
        return Err(Error::EmptyMask);
    }
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// Mean over the trial axis.
pub fn average_trials(trials: ArrayView3<f64>) -> Result<Array2<f64>> {
    trials.mean_axis(Axis(0)).ok_or(Error::EmptyInput("no trials to average"))
}

/// Zero-phase smoothing with a unit-area triangular kernel spanning
/// `window_s` seconds. Edges are mirrored about the first and last sample.
pub fn smooth_triangular(signal: ArrayView2<f64>, window_s: f64, f_s: f64) -> Result<Array2<f64>> {
    let samples = signal.ncols();
    let half = (window_s * f_s / 2.0).round() as usize;
    let width = 2 * half + 1;
    if width > samples {
        return Err(Error::WindowTooLong { window: width, samples });
    }
    let kernel: Vec<f64> = (0..width).map(|j| (half + 1 - j.abs_diff(half)) as f64).collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();

    let mirror = |i: isize| -> usize {
        let last = samples as isize - 1;
        let m = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        m as usize
    };
    let mut out = Array2::zeros(signal.raw_dim());
    for (src, mut dst) in signal.outer_iter().zip(out.outer_iter_mut()) {
        for (n, y) in dst.iter_mut().enumerate() {
            *y = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * src[mirror(n as isize + j as isize - half as isize)])
                .sum();
        }
    }
    Ok(out)
}

/// Most negative point of a channels × samples average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrcpPeak {
    pub channel: usize,
    pub sample: usize,
    pub latency_s: f64,
    pub value_uv: f64,
}

fn argmin(row: ArrayView1<f64>, lo: usize, hi: usize) -> (usize, f64) {
    (lo..=hi).fold((lo, f64::INFINITY), |best, s| if row[s] < best.1 { (s, row[s]) } else { best })
}

fn sample_range(samples: usize, f_s: f64, window: [f64; 2]) -> Result<(usize, usize)> {
    if samples == 0 {
        return Err(Error::EmptyInput("empty average"));
    }
    let lo = (window[0] * f_s).ceil().max(0.0) as usize;
    let hi = ((window[1] * f_s).floor().max(0.0) as usize).min(samples - 1);
    if lo > hi {
        return Err(Error::InvalidConfig(format!("peak search window {window:?} is empty")));
    }
    Ok((lo, hi))
}

/// Most negative value over all channels within `window` (s).
pub fn mrcp_peak(average: ArrayView2<f64>, f_s: f64, window: [f64; 2]) -> Result<MrcpPeak> {
    let (lo, hi) = sample_range(average.ncols(), f_s, window)?;
    let mut best: Option<MrcpPeak> = None;
    for (channel, row) in average.outer_iter().enumerate() {
        let (sample, value) = argmin(row, lo, hi);
        if best.is_none_or(|b| value < b.value_uv) {
            best = Some(MrcpPeak {
                channel,
                sample,
                latency_s: sample as f64 / f_s,
                value_uv: value,
            });
        }
    }
    best.ok_or(Error::EmptyInput("average has no channels"))
}

/// Most negative value of one channel within `window` (s).
pub fn mrcp_peak_on(average: ArrayView2<f64>, channel: usize, f_s: f64, window: [f64; 2]) -> Result<MrcpPeak> {
    if channel >= average.nrows() {
        return Err(Error::ChannelOutOfRange {
            index: channel,
            channels: average.nrows(),
        });
    }
    let (lo, hi) = sample_range(average.ncols(), f_s, window)?;
    let (sample, value) = argmin(average.row(channel), lo, hi);
    Ok(MrcpPeak {
        channel,
        sample,
        latency_s: sample as f64 / f_s,
        value_uv: value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierCriteria {
    /// Absolute amplitude limit (µV).
    pub amplitude_threshold: f64,
    /// z-score limit of the per-trial Gaussian negative log-likelihood.
    pub probability_z: f64,
    /// z-score limit of the per-trial log-variance.
    pub variance_z: f64,
    /// z-score limit of the per-trial excess kurtosis.
    pub kurtosis_z: f64,
    /// Fewest trials for which the z-score criteria are applied.
    pub min_trials_for_z: usize,
}

impl Default for OutlierCriteria {
    fn default() -> Self {
        Self {
            amplitude_threshold: 200.0,
            probability_z: 6.0,
            variance_z: 4.0,
            kurtosis_z: 6.0,
            min_trials_for_z: 8,
        }
    }
}

impl OutlierCriteria {
    pub fn validate(&self) -> Result<()> {
        let limits = [
            self.amplitude_threshold,
            self.probability_z,
            self.variance_z,
            self.kurtosis_z,
        ];
        if limits.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("outlier thresholds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierCriterion {
    Amplitude,
    Probability,
    Variance,
    Kurtosis,
}

/// A statistic whose spread across trials was zero on some channel, so its
/// z-score could not be formed there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedStatistic {
    pub criterion: OutlierCriterion,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutlierReport {
    pub amplitude: Vec<bool>,
    pub probability: Vec<bool>,
    pub variance: Vec<bool>,
    pub kurtosis: Vec<bool>,
    /// Whether the z-score criteria were evaluated at all.
    pub z_applied: bool,
    pub skipped: Vec<SkippedStatistic>,
}

impl OutlierReport {
    pub fn n_trials(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_flagged(&self, trial: usize) -> bool {
        self.amplitude[trial] || self.probability[trial] || self.variance[trial] || self.kurtosis[trial]
    }

    /// Flagged trial indices in ascending order.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.n_trials()).filter(|&t| self.is_flagged(t)).collect()
    }

    pub fn fraction(&self) -> f64 {
        if self.n_trials() == 0 {
            return 0.0;
        }
        self.flagged().len() as f64 / self.n_trials() as f64
    }

    pub fn criteria_for(&self, trial: usize) -> Vec<OutlierCriterion> {
        let flags = [
            (OutlierCriterion::Amplitude, &self.amplitude),
            (OutlierCriterion::Probability, &self.probability),
            (OutlierCriterion::Variance, &self.variance),
            (OutlierCriterion::Kurtosis, &self.kurtosis),
        ];
        flags.iter().filter(|(_, f)| f[trial]).map(|(c, _)| *c).collect()
    }
}

/// Per-trial, per-channel moments.
struct TrialStats {
    max_abs: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
    excess_kurtosis: Vec<f64>,
}

fn trial_stats(trial: ArrayView2<f64>) -> TrialStats {
    let n = trial.ncols() as f64;
    let mut stats = TrialStats {
        max_abs: 0.0,
        mean: Vec::with_capacity(trial.nrows()),
        var: Vec::with_capacity(trial.nrows()),
        excess_kurtosis: Vec::with_capacity(trial.nrows()),
    };
    for row in trial.outer_iter() {
        let mean = row.sum() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for &v in row.iter() {
            stats.max_abs = stats.max_abs.max(v.abs());
            let d = (v - mean) * (v - mean);
            m2 += d;
            m4 += d * d;
        }
        m2 /= n;
        m4 /= n;
        stats.mean.push(mean);
        stats.var.push(m2);
        // a flat trial-channel has no tails
        stats.excess_kurtosis.push(if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 });
    }
    stats
}

/// z-scores of `values` with sample standard deviation, or `None` when the
/// spread is zero up to rounding or not finite.
fn zscores(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 1e-12 * mean.abs() && sd > 0.0 && sd.is_finite()) {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Flag trials by absolute amplitude and, with enough trials, by abnormal
/// log-variance, Gaussian negative log-likelihood or excess kurtosis on any
/// channel relative to the other trials.
pub fn detect_outlier_trials(trials: ArrayView3<f64>, criteria: &OutlierCriteria) -> Result<OutlierReport> {
    detect_outlier_trials_with(trials, criteria, Exec::default())
}

pub fn detect_outlier_trials_with(
    trials: ArrayView3<f64>,
    criteria: &OutlierCriteria,
    exec: Exec,
) -> Result<OutlierReport> {
    criteria.validate()?;
    let (n_trials, channels, samples) = trials.dim();
    if n_trials == 0 || samples == 0 {
        return Err(Error::EmptyInput("no trials to screen"));
    }
    let stats = exec.map_indexed(n_trials, |t| trial_stats(trials.index_axis(Axis(0), t)));
    let mut report = OutlierReport {
        amplitude: stats.iter().map(|s| s.max_abs > criteria.amplitude_threshold).collect(),
        probability: vec![false; n_trials],
        variance: vec![false; n_trials],
        kurtosis: vec![false; n_trials],
        z_applied: n_trials >= criteria.min_trials_for_z.max(2),
        skipped: Vec::new(),
    };
    if !report.z_applied {
        return Ok(report);
    }

    for c in 0..channels {
        // channel-wise Gaussian fitted on all trials (equal trial lengths)
        let mu = stats.iter().map(|s| s.mean[c]).sum::<f64>() / n_trials as f64;
        let sigma2 = stats
            .iter()
            .map(|s| s.var[c] + (s.mean[c] - mu) * (s.mean[c] - mu))
            .sum::<f64>()
            / n_trials as f64;

        let log_var: Vec<f64> = stats.iter().map(|s| s.var[c].max(f64::MIN_POSITIVE).ln()).collect();
        let nll: Vec<f64> = if sigma2 > 0.0 {
            stats
                .iter()
                .map(|s| {
                    let msd = s.var[c] + (s.mean[c] - mu) * (s.mean[c] - mu);
                    0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() + msd / (2.0 * sigma2)
                })
                .collect()
        } else {
            vec![0.0; n_trials]
        };
        let kurt: Vec<f64> = stats.iter().map(|s| s.excess_kurtosis[c]).collect();

        let checks = [
            (OutlierCriterion::Variance, log_var, criteria.variance_z),
            (OutlierCriterion::Probability, nll, criteria.probability_z),
            (OutlierCriterion::Kurtosis, kurt, criteria.kurtosis_z),
        ];
        for (criterion, values, limit) in checks {
            let flags = match criterion {
                OutlierCriterion::Variance => &mut report.variance,
                OutlierCriterion::Probability => &mut report.probability,
                _ => &mut report.kurtosis,
            };
            match zscores(&values) {
                Some(z) => {
                    for (flag, z) in flags.iter_mut().zip(z) {
                        *flag |= z > limit;
                    }
                }
                None => report.skipped.push(SkippedStatistic { criterion, channel: c }),
            }
        }
    }
    if !report.skipped.is_empty() {
        log::warn!(
            "{} channel statistics have zero spread across trials and were skipped",
            report.skipped.len()
        );
    }
    Ok(report)
}

/// Options of [`evaluate_subject`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationOptions {
    pub smoothing_window_s: f64,
    /// Interval searched for the MRCP peak (s).
    pub peak_window: [f64; 2],
    pub outliers: OutlierCriteria,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            smoothing_window_s: 0.1,
            peak_window: EVALUATION_WINDOW,
            outliers: OutlierCriteria::default(),
        }
    }
}

/// Scores of one corrected dataset against its clean reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    /// SNR over contaminated elements (dB), `None` when nothing is contaminated.
    pub snr_artifact_db: Option<f64>,
    /// SNR over the artifact-free part of the evaluation window (dB).
    pub snr_clean_db: f64,
    /// Smoothed trial-average peak of the corrected data at the clean peak channel.
    pub mrcp_peak_uv: f64,
    pub mrcp_peak_latency_s: f64,
    pub mrcp_channel: usize,
    pub outlier_fraction: f64,
}

/// Compute every metric for `corrected` (trials × channels × samples).
pub fn evaluate_subject(
    clean: ArrayView3<f64>,
    corrected: ArrayView3<f64>,
    mask: &ContaminationMask,
    f_s: f64,
    options: &EvaluationOptions,
    exec: Exec,
) -> Result<SubjectMetrics> {
    let snr_artifact_db = match snr(clean, corrected, mask.contaminated()) {
        Ok(v) => Some(v),
        Err(Error::EmptyMask) => None,
        Err(e) => return Err(e),
    };
    let snr_clean_db = snr(clean, corrected, mask.artifact_free().view())?;
    let clean_avg = smooth_triangular(average_trials(clean)?.view(), options.smoothing_window_s, f_s)?;
    let corr_avg = smooth_triangular(average_trials(corrected)?.view(), options.smoothing_window_s, f_s)?;
    let reference = mrcp_peak(clean_avg.view(), f_s, options.peak_window)?;
    let peak = mrcp_peak_on(corr_avg.view(), reference.channel, f_s, options.peak_window)?;
    let outliers = detect_outlier_trials_with(corrected, &options.outliers, exec)?;
    Ok(SubjectMetrics {
        snr_artifact_db,
        snr_clean_db,
        mrcp_peak_uv: peak.value_uv,
        mrcp_peak_latency_s: peak.latency_s,
        mrcp_channel: reference.channel,
        outlier_fraction: outliers.fraction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ArtifactKind;
    use approx::assert_abs_diff_eq;
    use ndarray::{s, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn(shape, || StandardNormal.sample(&mut rng))
    }

    fn pop(trial: usize, channel: usize, onset: f64) -> ArtifactEvent {
        ArtifactEvent {
            trial,
            channel,
            onset,
            kind: ArtifactKind::Pop {
                amplitude: 100.0,
                decay_rate: 0.25,
            },
        }
    }

    #[test]
    fn snr_examples() {
        let clean = noise((2, 3, 50), 1);
        let mask = Array3::from_elem(clean.dim(), true);
        assert_eq!(snr(clean.view(), clean.view(), mask.view()).unwrap(), f64::INFINITY);

        let e = noise((2, 3, 50), 2);
        let scale = (clean.mapv(|v| v * v).sum() / e.mapv(|v| v * v).sum()).sqrt();
        let unit = &clean + &(&e * scale);
        assert_abs_diff_eq!(snr(clean.view(), unit.view(), mask.view()).unwrap(), 0.0, epsilon = 1e-9);
        let tenth = &clean + &(&e * (scale / 10.0));
        assert_abs_diff_eq!(snr(clean.view(), tenth.view(), mask.view()).unwrap(), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn snr_errors() {
        let clean = noise((1, 2, 10), 1);
        let none = Array3::from_elem(clean.dim(), false);
        assert_eq!(snr(clean.view(), clean.view(), none.view()).unwrap_err().name(), "EmptyMask");
        let other = noise((1, 2, 11), 1);
        let mask = Array3::from_elem(clean.dim(), true);
        assert_eq!(snr(clean.view(), other.view(), mask.view()).unwrap_err().name(), "ShapeMismatch");
    }

    #[test]
    fn mask_examples() {
        let shape = (2, 3, 3000);
        let empty = build_contamination_mask(&[], shape, 200.0, 1.0).unwrap();
        assert_eq!(empty.count(), 0);
        assert_eq!(empty.window(), (1000, 2000));

        let m = build_contamination_mask(&[pop(1, 2, 6.0)], shape, 200.0, 1.0).unwrap();
        let row = m.contaminated().slice(s![1, 2, ..]).to_owned();
        let on: Vec<usize> = (0..3000).filter(|&i| row[i]).collect();
        assert_eq!(on.first(), Some(&1200));
        assert_eq!(on.last(), Some(&2000));
        assert_eq!(on.len(), 801);
        assert_eq!(m.count(), 801);

        assert!(build_contamination_mask(&[pop(0, 3, 6.0)], shape, 200.0, 1.0).is_err());
    }

    #[test]
    fn mask_partitions_window() {
        let shape = (2, 3, 3000);
        let m = build_contamination_mask(&[pop(0, 1, 7.3), pop(1, 0, 5.0)], shape, 200.0, 1.0).unwrap();
        let free = m.artifact_free();
        let (lo, hi) = m.window();
        ndarray::Zip::indexed(m.contaminated()).and(&free).for_each(|(_, _, s), &c, &f| {
            let inside = s >= lo && s <= hi;
            assert_eq!(c || f, inside);
            assert!(!(c && f));
        });
    }

    #[test]
    fn averaging() {
        let x = noise((1, 2, 5), 3);
        assert_eq!(average_trials(x.view()).unwrap(), x.index_axis(Axis(0), 0));
        let mut pair = Array3::zeros((2, 2, 5));
        pair.index_axis_mut(Axis(0), 0).assign(&x.index_axis(Axis(0), 0));
        pair.index_axis_mut(Axis(0), 1).assign(&(-&x.index_axis(Axis(0), 0)));
        assert!(average_trials(pair.view()).unwrap().iter().all(|v| *v == 0.0));
        assert!(average_trials(Array3::<f64>::zeros((0, 2, 5)).view()).is_err());
    }

    #[test]
    fn average_of_noise_concentrates() {
        let avg = average_trials(noise((60, 4, 500), 9).view()).unwrap();
        let bound = 5.0 / 60f64.sqrt();
        assert!(avg.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn triangular_smoothing() {
        let constant = Array2::from_elem((2, 100), 3.5);
        let y = smooth_triangular(constant.view(), 0.1, 200.0).unwrap();
        assert!(y.iter().all(|v| (v - 3.5).abs() < 1e-12));

        let mut impulse = Array2::zeros((1, 101));
        impulse[[0, 50]] = 1.0;
        let y = smooth_triangular(impulse.view(), 0.1, 200.0).unwrap();
        // half-width 10 samples: weights (11 − |j|)/121
        for j in -12i32..=12 {
            let expect = (11 - j.abs()).max(0) as f64 / 121.0;
            assert_abs_diff_eq!(y[[0, (50 + j) as usize]], expect, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(y.sum(), 1.0, epsilon = 1e-12);

        assert_eq!(
            smooth_triangular(Array2::zeros((1, 15)).view(), 0.1, 200.0).unwrap_err().name(),
            "WindowTooLong"
        );
    }

    #[test]
    fn triangular_smoothing_is_zero_phase() {
        let f_s = 200.0;
        let x = Array1::from_shape_fn(2000, |i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / f_s).sin());
        let y = smooth_triangular(x.view().insert_axis(Axis(0)), 0.1, f_s).unwrap();
        let y = y.row(0);
        let inner = 200..1800;
        let xcorr = |lag: isize| -> f64 {
            inner
                .clone()
                .map(|i| x[i] * y[(i as isize + lag) as usize])
                .sum()
        };
        let best = (-10..=10).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
        assert_eq!(best, 0);
        let amp = y.slice(s![200..1800]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp < 1.0 && amp > 0.0);
    }

    #[test]
    fn amplitude_outlier() {
        let mut x = noise((3, 2, 100), 4);
        x[[1, 0, 40]] = 250.0;
        let r = detect_outlier_trials(x.view(), &OutlierCriteria::default()).unwrap();
        assert_eq!(r.flagged(), vec![1]);
        assert!(!r.z_applied);
        assert_eq!(r.criteria_for(1), vec![OutlierCriterion::Amplitude]);
    }

    #[test]
    fn variance_outlier() {
        let mut x = noise((100, 3, 200), 5);
        x.slice_mut(s![37, 1, ..]).mapv_inplace(|v| v * 10.0);
        let r = detect_outlier_trials(x.view(), &OutlierCriteria::default()).unwrap();
        assert!(r.variance[37]);
        assert_eq!(r.variance.iter().filter(|&&f| f).count(), 1);
        assert!(r.is_flagged(37));
    }

    #[test]
    fn identical_trials_are_skipped() {
        let one = noise((1, 2, 100), 6);
        let x = Array3::from_shape_fn((10, 2, 100), |(_, c, s)| one[[0, c, s]]);
        let r = detect_outlier_trials(x.view(), &OutlierCriteria::default()).unwrap();
        assert!(r.flagged().is_empty());
        assert_eq!(r.skipped.len(), 6);
    }

    #[test]
    fn mrcp_peak_search() {
        let mut avg = Array2::zeros((3, 400));
        avg[[2, 300]] = -5.0;
        avg[[1, 100]] = -9.0;
        let p = mrcp_peak(avg.view(), 100.0, [2.0, 3.5]).unwrap();
        assert_eq!((p.channel, p.sample), (2, 300));
        assert_abs_diff_eq!(p.latency_s, 3.0);
        let q = mrcp_peak_on(avg.view(), 1, 100.0, [0.0, 4.0]).unwrap();
        assert_eq!(q.value_uv, -9.0);
    }

    #[test]
    fn perfect_correction_metrics() {
        let clean = noise((10, 3, 3000), 8);
        let mask = build_contamination_mask(&[pop(2, 1, 6.0)], clean.dim(), 200.0, 1.0).unwrap();
        let m = evaluate_subject(
            clean.view(),
            clean.view(),
            &mask,
            200.0,
            &EvaluationOptions::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(m.snr_artifact_db, Some(f64::INFINITY));
        assert_eq!(m.snr_clean_db, f64::INFINITY);
    }
}
