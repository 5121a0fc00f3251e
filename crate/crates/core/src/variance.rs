//! Exponentially smoothed instantaneous variance, causal and bidirectional.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Fraction of the smoother's weight that falls inside the estimation window.
pub const DEFAULT_P_WEIGHT: f64 = 0.9;

/// Parameters that fix the smoothing factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingSpec {
    /// Estimation window in seconds.
    pub t_est: f64,
    /// Sampling rate in Hz.
    pub f_s: f64,
    pub p_weight: f64,
}

impl SmoothingSpec {
    pub fn new(t_est: f64, f_s: f64, p_weight: f64) -> Result<Self> {
        let spec = Self { t_est, f_s, p_weight };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.t_est > 0.0 && self.t_est.is_finite()) {
            return bad(format!("t_est must be positive, got {}", self.t_est));
        }
        if !(self.f_s > 0.0 && self.f_s.is_finite()) {
            return bad(format!("f_s must be positive, got {}", self.f_s));
        }
        if !(self.p_weight > 0.0 && self.p_weight < 1.0) {
            return bad(format!("p_weight must lie in (0, 1), got {}", self.p_weight));
        }
        if self.t_est * self.f_s < 1.0 {
            return bad(format!(
                "window t_est*f_s = {} must cover at least one sample",
                self.t_est * self.f_s
            ));
        }
        Ok(())
    }

    /// Number of samples spanned by the estimation window (rounded up).
    pub fn window_samples(&self) -> usize {
        (self.t_est * self.f_s - 1e-9).ceil().max(1.0) as usize
    }

    /// `λ = (1 − p)^(1 / (t_est·f_s))`
    pub fn smoothing_factor(&self) -> f64 {
        (1.0 - self.p_weight).powf(1.0 / (self.t_est * self.f_s))
    }
}

/// Smoothing factor such that the last `t_est` seconds receive `p_weight` of
/// the total weight.
pub fn smoothing_factor(spec: &SmoothingSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.smoothing_factor())
}

/// Low-frequency group delay of the causal smoother, in samples.
pub fn dc_group_delay_samples(lambda: f64) -> f64 {
    lambda / (1.0 - lambda)
}

/// Running per-channel variance of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceState {
    s2: Vec<f64>,
    lambda: f64,
    samples_seen: u64,
}

impl VarianceState {
    /// Start from an explicit per-channel estimate (µV²).
    pub fn new(initial: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidConfig(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        if initial.is_empty() {
            return Err(Error::EmptyInput("variance state needs at least one channel"));
        }
        if initial.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("initial variances must be finite and non-negative".into()));
        }
        Ok(Self {
            s2: initial,
            lambda,
            samples_seen: 0,
        })
    }

    /// Start from the square of a first sample.
    pub fn from_first_sample(x: &[f64], lambda: f64) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Self::new(x.iter().map(|v| v * v).collect(), lambda)
    }

    pub fn channels(&self) -> usize {
        self.s2.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn variance(&self) -> &[f64] {
        &self.s2
    }

    /// Overwrite the estimate and zero the sample counter.
    pub fn reset_to(&mut self, s2: &[f64]) {
        self.s2.copy_from_slice(s2);
        self.samples_seen = 0;
    }

    /// `s²[n] = λ·s²[n−1] + (1−λ)·x²[n]`, element-wise. Returns the new estimate.
    pub fn update(&mut self, x: &[f64]) -> Result<&[f64]> {
        if x.len() != self.s2.len() {
            return Err(Error::DimensionMismatch {
                expected: self.s2.len(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        self.update_unchecked(x);
        Ok(&self.s2)
    }

    /// [`VarianceState::update`] without validation, for hot loops whose
    /// input has already been checked.
    #[inline]
    pub(crate) fn update_unchecked(&mut self, x: &[f64]) {
        let lambda = self.lambda;
        let gain = 1.0 - lambda;
        for (s, &v) in self.s2.iter_mut().zip(x) {
            *s = lambda * *s + gain * v * v;
        }
        self.samples_seen += 1;
    }
}

fn check_finite(x: &ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

/// Causal smoothed variance of a channels×samples signal, seeded with `init`.
pub fn smooth_variance_forward(x: ArrayView2<f64>, lambda: f64, init: &[f64]) -> Result<Array2<f64>> {
    let (channels, samples) = x.dim();
    if samples == 0 || channels == 0 {
        return Err(Error::EmptyInput("variance smoothing needs at least one sample"));
    }
    if init.len() != channels {
        return Err(Error::DimensionMismatch {
            expected: channels,
            actual: init.len(),
        });
    }
    check_finite(&x)?;
    let mut out = Array2::zeros((channels, samples));
    let gain = 1.0 - lambda;
    for (c, (row, mut orow)) in x.outer_iter().zip(out.outer_iter_mut()).enumerate() {
        let mut s = init[c];
        for (v, o) in row.iter().zip(orow.iter_mut()) {
            s = lambda * s + gain * v * v;
            *o = s;
        }
    }
    Ok(out)
}

/// Zero-phase variance: the causal smoother over `x²`, then the same
/// recursion run backward over the forward output.
///
/// Both passes are seeded with `init`, so a signal whose square equals
/// `init` everywhere is a fixed point.
pub fn smooth_variance_bidirectional(x: ArrayView2<f64>, lambda: f64, init: &[f64]) -> Result<Array2<f64>> {
    let mut out = smooth_variance_forward(x, lambda, init)?;
    let gain = 1.0 - lambda;
    for (c, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.len();
        let mut s = init[c];
        for i in (0..n).rev() {
            s = lambda * s + gain * row[i];
            row[i] = s;
        }
    }
    Ok(out)
}

/// [`smooth_variance_bidirectional`] seeded with the first sample squared.
pub fn smooth_variance_bidirectional_auto(x: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::EmptyInput("variance smoothing needs at least one sample"));
    }
    let init: Vec<f64> = x.column(0).iter().map(|v| v * v).collect();
    smooth_variance_bidirectional(x, lambda, &init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn smoothing_factor_values() {
        let l = SmoothingSpec::new(0.25, 200.0, 0.9).unwrap().smoothing_factor();
        assert_relative_eq!(l, 0.954_993, epsilon = 1e-6);
        let l = SmoothingSpec::new(0.25, 512.0, 0.9).unwrap().smoothing_factor();
        assert_relative_eq!(l, 0.1f64.powf(1.0 / 128.0), max_relative = 1e-14);
        assert_relative_eq!(l, 0.982_171_9, epsilon = 1e-7);
        let l = SmoothingSpec::new(0.01, 100.0, 0.9).unwrap().smoothing_factor();
        assert_relative_eq!(l, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(SmoothingSpec::new(0.0, 200.0, 0.9).is_err());
        assert!(SmoothingSpec::new(0.25, -1.0, 0.9).is_err());
        assert!(SmoothingSpec::new(0.25, 200.0, 1.0).is_err());
        assert!(SmoothingSpec::new(0.001, 200.0, 0.9).is_err());
        assert_eq!(SmoothingSpec::new(0.25, 200.0, 0.9).unwrap().window_samples(), 50);
    }

    #[test]
    fn update_examples() {
        let mut st = VarianceState::new(vec![4.0], 0.5).unwrap();
        assert_eq!(st.update(&[2.0]).unwrap(), &[4.0]);
        let mut st = VarianceState::new(vec![0.0], 0.5).unwrap();
        assert_eq!(st.update(&[2.0]).unwrap(), &[2.0]);
        assert_eq!(st.samples_seen(), 1);
        assert_eq!(st.update(&[1.0, 2.0]).unwrap_err().name(), "DimensionMismatch");
        assert_eq!(st.update(&[f64::NAN]).unwrap_err().name(), "NonFiniteInput");
    }

    #[test]
    fn constant_input_converges_monotonically() {
        let lambda = 0.954_993_f64;
        let c: f64 = 3.0;
        let steps = (1e-6f64.ln() / lambda.ln()).ceil() as usize;
        // the step count bounds the gap relative to the starting gap, which is
        // at most c² for starts in [0, 2c²]
        for start in [0.0, 0.5 * c * c, 2.0 * c * c] {
            let mut st = VarianceState::new(vec![start], lambda).unwrap();
            let mut prev_gap = (start - c * c).abs();
            for _ in 0..steps {
                let gap = (st.update(&[c]).unwrap()[0] - c * c).abs();
                assert!(gap <= prev_gap);
                prev_gap = gap;
            }
            assert!(prev_gap <= 1e-6 * c * c, "{prev_gap}");
        }
    }

    #[test]
    fn bidirectional_fixed_point() {
        let x = Array2::from_elem((2, 100), 3.0);
        let y = smooth_variance_bidirectional(x.view(), 0.9, &[9.0, 9.0]).unwrap();
        assert!(y.iter().all(|v| (v - 9.0).abs() < 1e-9));
    }

    #[test]
    fn bidirectional_single_sample() {
        let (l, init, x) = (0.8, 5.0, 3.0);
        let y = smooth_variance_bidirectional(array![[x]].view(), l, &[init]).unwrap();
        let f = l * init + (1.0 - l) * x * x;
        let b = l * init + (1.0 - l) * f;
        assert_relative_eq!(y[[0, 0]], b, epsilon = 1e-15);
        assert!(smooth_variance_bidirectional(Array2::<f64>::zeros((1, 0)).view(), l, &[0.0]).is_err());
    }
}
