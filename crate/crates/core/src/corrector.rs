//! Calibration, per-sample artifact probability and interpolation-weighted
//! correction, in the causal (online) and bidirectional (offline) variants.
//!
//! For every sample the corrector
//!
//! 1. updates the smoothed variance `s²` of each channel from the raw sample,
//! 2. turns `s = √s²` into an artifact probability
//!    `p = Φ((s − φ·μ_s) / (ξ·μ_s))`, with `μ_s²` the calibration reference,
//! 3. blends each channel with its k-nearest-neighbor estimate:
//!    `x_c = x + p·(D·x − x)`.
//!
//! The corrected output never feeds back into the variance estimate.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montage::{ElectrodeMontage, InterpolationMatrix};
use crate::par::Exec;
use crate::variance::{
    smooth_variance_bidirectional, smooth_variance_bidirectional_auto, SmoothingSpec, VarianceState,
    DEFAULT_P_WEIGHT,
};

/// Hyper-parameters of the corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HearConfig {
    /// Variance estimation window (s).
    pub t_est: f64,
    /// Multiple of the reference deviation at which the artifact probability is 50 %.
    pub phi: f64,
    /// Spread of the artifact distribution, in units of the reference deviation.
    pub xi: f64,
    pub p_weight: f64,
    pub k_neighbors: usize,
    /// Sampling rate (Hz).
    pub f_s: f64,
}

impl Default for HearConfig {
    fn default() -> Self {
        Self {
            t_est: 0.25,
            phi: 3.0,
            xi: 1.0,
            p_weight: DEFAULT_P_WEIGHT,
            k_neighbors: 4,
            f_s: 200.0,
        }
    }
}

impl HearConfig {
    pub fn with_f_s(f_s: f64) -> Self {
        Self {
            f_s,
            ..Self::default()
        }
    }

    pub fn smoothing(&self) -> SmoothingSpec {
        SmoothingSpec {
            t_est: self.t_est,
            f_s: self.f_s,
            p_weight: self.p_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidConfig(format!("phi must be positive, got {}", self.phi)));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidConfig(format!("xi must be positive, got {}", self.xi)));
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be at least 1".into()));
        }
        self.smoothing().validate()
    }

    pub fn lambda(&self) -> f64 {
        self.smoothing().smoothing_factor()
    }
}

/// Variance smoothing variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Causal smoothing (oHEAR).
    Online,
    /// Bidirectional smoothing over the whole recording (HEAR).
    Offline,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Mode::Online),
            "offline" => Ok(Mode::Offline),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// Reference variances learned from calibration data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    /// Per-channel reference variance (µV²), all positive.
    pub mu_s2: Vec<f64>,
    /// Digest of the montage (labels, positions, order) the model belongs to.
    pub montage_fingerprint: String,
    pub labels: Vec<String>,
    pub config: HearConfig,
}

impl CalibrationModel {
    pub fn channels(&self) -> usize {
        self.mu_s2.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.montage_fingerprint.is_empty() {
            return Err(Error::MissingFingerprint);
        }
        if self.mu_s2.is_empty() {
            return Err(Error::EmptyInput("model has no channels"));
        }
        if let Some(i) = self.mu_s2.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveReference(i));
        }
        if self.labels.len() != self.mu_s2.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu_s2.len(),
                actual: self.labels.len(),
            });
        }
        self.config.validate()
    }

    /// Refuse a montage other than the one the model was calibrated on.
    pub fn check_montage(&self, montage: &ElectrodeMontage) -> Result<()> {
        let fp = montage.fingerprint();
        if fp != self.montage_fingerprint {
            return Err(Error::FingerprintMismatch {
                model: self.montage_fingerprint.clone(),
                montage: fp,
            });
        }
        Ok(())
    }
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// `Φ((s − φ·μ_s) / (ξ·μ_s))`: probability that a deviation `s` (µV) stems
/// from an artifact given the reference deviation `mu_s`.
#[inline]
pub fn artifact_probability(s: f64, mu_s: f64, phi: f64, xi: f64) -> f64 {
    std_normal_cdf((s - phi * mu_s) / (xi * mu_s))
}

/// Estimate per-channel reference variances from calibration trials
/// (trials × channels × samples, µV).
///
/// Each trial is mean-removed per channel, smoothed bidirectionally, and the
/// smoothed variance is averaged over all samples of all trials.
pub fn calibrate(
    trials: ArrayView3<f64>,
    config: &HearConfig,
    montage: &ElectrodeMontage,
) -> Result<CalibrationModel> {
    calibrate_with(trials, config, montage, Exec::default())
}

pub fn calibrate_with(
    trials: ArrayView3<f64>,
    config: &HearConfig,
    montage: &ElectrodeMontage,
    exec: Exec,
) -> Result<CalibrationModel> {
    config.validate()?;
    let (n_trials, channels, samples) = trials.dim();
    if n_trials == 0 {
        return Err(Error::EmptyInput("calibration needs at least one trial"));
    }
    if channels != montage.len() {
        return Err(Error::DimensionMismatch {
            expected: montage.len(),
            actual: channels,
        });
    }
    let window = config.smoothing().window_samples();
    if samples < window || samples == 0 {
        return Err(Error::TrialTooShort { samples, window });
    }
    let lambda = config.lambda();

    let per_trial = exec.try_map_indexed(n_trials, |t| -> Result<Vec<f64>> {
        let trial = trials.index_axis(Axis(0), t);
        let mean = trial.mean_axis(Axis(1)).expect("non-empty");
        let centered = &trial - &mean.insert_axis(Axis(1));
        for (c, row) in centered.outer_iter().enumerate() {
            if row.iter().all(|v| *v == 0.0) {
                return Err(Error::DeadChannel(c));
            }
        }
        let smoothed = smooth_variance_bidirectional_auto(centered.view(), lambda)?;
        Ok(smoothed.mean_axis(Axis(1)).expect("non-empty").to_vec())
    })?;

    let mut mu_s2 = vec![0.0; channels];
    for trial in &per_trial {
        for (acc, v) in mu_s2.iter_mut().zip(trial) {
            *acc += v;
        }
    }
    for (c, v) in mu_s2.iter_mut().enumerate() {
        *v /= n_trials as f64;
        if v.is_nan() || *v <= 0.0 {
            return Err(Error::DeadChannel(c));
        }
    }
    Ok(CalibrationModel {
        mu_s2,
        montage_fingerprint: montage.fingerprint(),
        labels: montage.labels(),
        config: *config,
    })
}

/// One corrected sample and the per-channel artifact probabilities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedSample {
    pub corrected: Vec<f64>,
    pub p_art: Vec<f64>,
}

/// Per-stream correction state. Single writer; the model and interpolation
/// matrix are shared read-only and may back any number of correctors.
#[derive(Debug, Clone)]
pub struct Corrector {
    variance: VarianceState,
    model: Arc<CalibrationModel>,
    d_matrix: Arc<InterpolationMatrix>,
    mu_s: Vec<f64>,
    phi: f64,
    xi: f64,
}

impl Corrector {
    /// Corrector using the model's own configuration and an interpolation
    /// matrix built from `montage`, which must match the model fingerprint.
    pub fn from_model(model: CalibrationModel, montage: &ElectrodeMontage) -> Result<Self> {
        model.check_montage(montage)?;
        let d = InterpolationMatrix::build(montage, model.config.k_neighbors)?;
        let config = model.config;
        Self::new(Arc::new(model), Arc::new(d), &config)
    }

    /// Corrector with explicit runtime configuration (`phi`, `xi`, `t_est`,
    /// `p_weight` and `f_s` are taken from `config`).
    pub fn new(
        model: Arc<CalibrationModel>,
        d_matrix: Arc<InterpolationMatrix>,
        config: &HearConfig,
    ) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if d_matrix.channels() != model.channels() {
            return Err(Error::DimensionMismatch {
                expected: model.channels(),
                actual: d_matrix.channels(),
            });
        }
        let variance = VarianceState::new(model.mu_s2.clone(), config.lambda())?;
        let mu_s = model.mu_s2.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            variance,
            model,
            d_matrix,
            mu_s,
            phi: config.phi,
            xi: config.xi,
        })
    }

    pub fn channels(&self) -> usize {
        self.mu_s.len()
    }

    pub fn model(&self) -> &CalibrationModel {
        &self.model
    }

    pub fn d_matrix(&self) -> &InterpolationMatrix {
        &self.d_matrix
    }

    pub fn variance(&self) -> &VarianceState {
        &self.variance
    }

    pub fn lambda(&self) -> f64 {
        self.variance.lambda()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Variance back to the calibration reference, counter to zero.
    pub fn reset(&mut self) {
        self.variance.reset_to(&self.model.mu_s2);
    }

    /// Artifact probabilities for an externally supplied variance vector.
    pub fn probabilities_for(&self, s2: &[f64], p_out: &mut [f64]) {
        for ((p, &v), &mu) in p_out.iter_mut().zip(s2).zip(&self.mu_s) {
            *p = artifact_probability(v.sqrt(), mu, self.phi, self.xi);
        }
    }

    /// Correct one sample, writing the result to `out` and optionally the
    /// artifact probabilities to `p_out`. Allocation-free.
    pub fn correct_sample_into(&mut self, x: &[f64], out: &mut [f64], p_out: Option<&mut [f64]>) -> Result<()> {
        let n = self.channels();
        if x.len() != n || out.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if x.len() != n { x.len() } else { out.len() },
            });
        }
        if let Some(p) = &p_out {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: p.len(),
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        self.variance.update_unchecked(x);
        let s2 = self.variance.variance();
        let d = &*self.d_matrix;
        match p_out {
            Some(p_out) => {
                for i in 0..n {
                    let p = artifact_probability(s2[i].sqrt(), self.mu_s[i], self.phi, self.xi);
                    p_out[i] = p;
                    out[i] = blend(x[i], d.interpolate(i, x), p);
                }
            }
            None => {
                for i in 0..n {
                    let p = artifact_probability(s2[i].sqrt(), self.mu_s[i], self.phi, self.xi);
                    out[i] = blend(x[i], d.interpolate(i, x), p);
                }
            }
        }
        Ok(())
    }

    pub fn correct_sample(&mut self, x: &[f64]) -> Result<CorrectedSample> {
        let n = self.channels();
        let mut corrected = vec![0.0; n];
        let mut p_art = vec![0.0; n];
        self.correct_sample_into(x, &mut corrected, Some(&mut p_art))?;
        Ok(CorrectedSample { corrected, p_art })
    }

    fn check_recording(&self, recording: &ArrayView2<f64>) -> Result<()> {
        let (channels, samples) = recording.dim();
        if channels != self.channels() {
            return Err(Error::DimensionMismatch {
                expected: self.channels(),
                actual: channels,
            });
        }
        if samples == 0 {
            return Err(Error::EmptyInput("recording has no samples"));
        }
        Ok(())
    }

    /// Causal correction of a channels×samples recording, continuing from the
    /// current state. Returns corrected data and artifact probabilities.
    pub fn correct_online(&mut self, recording: ArrayView2<f64>) -> Result<Correction> {
        self.check_recording(&recording)?;
        let (channels, samples) = recording.dim();
        let mut corrected = Array2::zeros((channels, samples));
        let mut p_art = Array2::zeros((channels, samples));
        let mut x = vec![0.0; channels];
        let mut out = vec![0.0; channels];
        let mut p = vec![0.0; channels];
        for n in 0..samples {
            for (dst, v) in x.iter_mut().zip(recording.column(n)) {
                *dst = *v;
            }
            self.correct_sample_into(&x, &mut out, Some(&mut p))?;
            for c in 0..channels {
                corrected[[c, n]] = out[c];
                p_art[[c, n]] = p[c];
            }
        }
        Ok(Correction { corrected, p_art })
    }

    /// Bidirectional correction of a whole recording. The variance trajectory
    /// is smoothed forward and backward, both passes seeded with the
    /// calibration reference; the corrector state is left untouched.
    pub fn correct_offline(&self, recording: ArrayView2<f64>) -> Result<Correction> {
        self.check_recording(&recording)?;
        let (channels, samples) = recording.dim();
        let s2 = smooth_variance_bidirectional(recording, self.lambda(), &self.model.mu_s2)?;
        let mut corrected = Array2::zeros((channels, samples));
        let mut p_art = Array2::zeros((channels, samples));
        let mut x = vec![0.0; channels];
        for n in 0..samples {
            for (dst, v) in x.iter_mut().zip(recording.column(n)) {
                *dst = *v;
            }
            for c in 0..channels {
                let p = artifact_probability(s2[[c, n]].sqrt(), self.mu_s[c], self.phi, self.xi);
                p_art[[c, n]] = p;
                corrected[[c, n]] = blend(x[c], self.d_matrix.interpolate(c, &x), p);
            }
        }
        Ok(Correction { corrected, p_art })
    }

    /// Correct a recording from a freshly reset state in the given mode.
    pub fn correct(&mut self, recording: ArrayView2<f64>, mode: Mode) -> Result<Correction> {
        self.reset();
        match mode {
            Mode::Online => self.correct_online(recording),
            Mode::Offline => self.correct_offline(recording),
        }
    }

    /// Correct independent trials (trials × channels × samples); each trial
    /// starts from the calibration reference.
    pub fn correct_trials(&self, trials: ArrayView3<f64>, mode: Mode, exec: Exec) -> Result<Array3<f64>> {
        let (n_trials, channels, samples) = trials.dim();
        let corrected = exec.try_map_indexed(n_trials, |t| {
            let mut c = self.clone();
            c.correct(trials.index_axis(Axis(0), t), mode).map(|r| r.corrected)
        })?;
        let mut out = Array3::zeros((n_trials, channels, samples));
        for (mut dst, src) in out.outer_iter_mut().zip(corrected) {
            dst.assign(&src);
        }
        Ok(out)
    }
}

#[inline]
fn blend(raw: f64, interpolated: f64, p: f64) -> f64 {
    p * interpolated + (1.0 - p) * raw
}

/// Output of a batch correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub corrected: Array2<f64>,
    pub p_art: Array2<f64>,
}

/// `D·p_art`: probability that each channel's neighbor estimate is itself
/// contaminated.
pub fn uncorrectable_probability(p_art: &[f64], d_matrix: &InterpolationMatrix) -> Result<Vec<f64>> {
    let mut out = vec![0.0; p_art.len()];
    d_matrix.apply(p_art, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn swap2() -> Arc<InterpolationMatrix> {
        Arc::new(InterpolationMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap())
    }

    fn model(mu_s2: Vec<f64>) -> Arc<CalibrationModel> {
        let labels = (0..mu_s2.len()).map(|i| format!("C{i}")).collect();
        Arc::new(CalibrationModel {
            mu_s2,
            montage_fingerprint: "test".into(),
            labels,
            config: HearConfig::default(),
        })
    }

    fn white(trials: usize, channels: usize, samples: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn((trials, channels, samples), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn probability_examples() {
        assert_eq!(artifact_probability(3.0, 1.0, 3.0, 1.0), 0.5);
        assert_abs_diff_eq!(artifact_probability(4.0, 1.0, 3.0, 1.0), 0.841_345, epsilon = 1e-6);
        assert_abs_diff_eq!(artifact_probability(0.0, 1.0, 3.0, 1.0), 0.001_350, epsilon = 1e-6);
    }

    #[test]
    fn hand_evaluated_blend() {
        // p = (0.5, 0) on x = (10, 2) with swapped neighbors -> (6, 2)
        let x = [10.0, 2.0];
        let p = [0.5, 0.0];
        let d = swap2();
        let out: Vec<f64> = (0..2).map(|i| blend(x[i], d.interpolate(i, &x), p[i])).collect();
        assert_eq!(out, [6.0, 2.0]);
    }

    #[test]
    fn extremes_of_probability() {
        let config = HearConfig {
            t_est: 0.05,
            phi: 50.0,
            ..HearConfig::default()
        };
        // deviation far below phi·mu_s: p underflows to 0, output = input
        let mut c = Corrector::new(model(vec![100.0, 100.0]), swap2(), &config).unwrap();
        let r = c.correct_sample(&[10.0, 2.0]).unwrap();
        assert_eq!(r.corrected, [10.0, 2.0]);
        // tiny reference with a large sample: p = 1 exactly, output = D·x
        let mut c = Corrector::new(model(vec![1e-12, 1e-12]), swap2(), &config).unwrap();
        let r = c.correct_sample(&[10.0, 2.0]).unwrap();
        assert_eq!(r.p_art, [1.0, 1.0]);
        assert_eq!(r.corrected, [2.0, 10.0]);
    }

    #[test]
    fn uncorrectable_examples() {
        let d = swap2();
        assert_eq!(uncorrectable_probability(&[1.0, 0.0], &d).unwrap(), [0.0, 1.0]);
        assert_eq!(uncorrectable_probability(&[0.0, 0.0], &d).unwrap(), [0.0, 0.0]);
        assert_eq!(uncorrectable_probability(&[1.0, 1.0], &d).unwrap(), [1.0, 1.0]);
        assert!(uncorrectable_probability(&[1.0], &d).is_err());
    }

    #[test]
    fn calibration_on_white_noise() {
        let montage = ElectrodeMontage::fibonacci_hemisphere(4, 100.0).unwrap();
        let data = white(1, 4, 3000, 11);
        let m = calibrate(data.view(), &HearConfig::default(), &montage).unwrap();
        for (c, mu) in m.mu_s2.iter().enumerate() {
            let row = data.slice(ndarray::s![0, c, ..]);
            let mean = row.mean().unwrap();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!((mu - 1.0).abs() < 0.1, "{mu}");
            assert!((mu - var).abs() < 0.05 * var, "{mu} vs sample variance {var}");
        }
    }

    #[test]
    fn calibration_errors() {
        let montage = ElectrodeMontage::fibonacci_hemisphere(3, 100.0).unwrap();
        let mut data = white(2, 3, 400, 1);
        data.slice_mut(ndarray::s![1, 2, ..]).fill(0.0);
        let err = calibrate(data.view(), &HearConfig::default(), &montage).unwrap_err();
        assert!(matches!(err, Error::DeadChannel(2)));
        let short = white(1, 3, 10, 1);
        assert_eq!(
            calibrate(short.view(), &HearConfig::default(), &montage).unwrap_err().name(),
            "TrialTooShort"
        );
        let empty = Array3::<f64>::zeros((0, 3, 100));
        assert_eq!(
            calibrate(empty.view(), &HearConfig::default(), &montage).unwrap_err().name(),
            "EmptyInput"
        );
    }

    #[test]
    fn duplicated_trials_give_same_model() {
        let montage = ElectrodeMontage::fibonacci_hemisphere(3, 100.0).unwrap();
        let one = white(1, 3, 600, 5);
        let two = ndarray::concatenate(Axis(0), &[one.view(), one.view()]).unwrap();
        let a = calibrate(one.view(), &HearConfig::default(), &montage).unwrap();
        let b = calibrate(two.view(), &HearConfig::default(), &montage).unwrap();
        for (x, y) in a.mu_s2.iter().zip(&b.mu_s2) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12 * x);
        }
    }

    #[test]
    fn reset_semantics() {
        let m = model(vec![4.0, 9.0]);
        let mut fresh = Corrector::new(m.clone(), swap2(), &HearConfig::default()).unwrap();
        let mut used = fresh.clone();
        for i in 0..50 {
            used.correct_sample(&[i as f64, -3.0]).unwrap();
        }
        used.reset();
        let once = used.variance().clone();
        used.reset();
        assert_eq!(&once, used.variance());
        assert_eq!(used.variance().samples_seen(), 0);
        // zero input right after reset: s² = λ·μ_s², p from that deviation
        let r = used.correct_sample(&[0.0, 0.0]).unwrap();
        let lambda = used.lambda();
        let expected: Vec<f64> = [4.0f64, 9.0]
            .iter()
            .map(|mu2| artifact_probability((lambda * mu2).sqrt(), mu2.sqrt(), 3.0, 1.0))
            .collect();
        assert_eq!(r.p_art, expected);
        // replay equivalence with a fresh corrector
        used.reset();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            let x = [x[0] * 20.0, x[1]];
            assert_eq!(used.correct_sample(&x).unwrap(), fresh.correct_sample(&x).unwrap());
        }
    }

    #[test]
    fn sub_threshold_recording_is_unchanged_offline() {
        let m = model(vec![1.0, 1.0]);
        let config = HearConfig {
            phi: 10.0,
            ..HearConfig::default()
        };
        let c = Corrector::new(m, swap2(), &config).unwrap();
        let data = white(1, 2, 500, 9).index_axis_move(Axis(0), 0);
        let out = c.correct_offline(data.view()).unwrap();
        for (a, b) in out.corrected.iter().zip(data.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fingerprint_is_enforced() {
        let montage = ElectrodeMontage::fibonacci_hemisphere(5, 100.0).unwrap();
        let data = white(1, 5, 400, 2);
        let m = calibrate(data.view(), &HearConfig::default(), &montage).unwrap();
        let other = montage.permuted(&[1, 0, 2, 3, 4]).unwrap();
        assert_eq!(Corrector::from_model(m.clone(), &other).unwrap_err().name(), "FingerprintMismatch");
        assert!(Corrector::from_model(m, &montage).is_ok());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("online".parse::<Mode>().unwrap(), Mode::Online);
        assert_eq!("offline".parse::<Mode>().unwrap(), Mode::Offline);
        assert!("both".parse::<Mode>().is_err());
    }
}
