//! Simplified volume-conduction model: gain `c/(d² + ε)` from a point source
//! to each electrode, normalized per source so the strongest electrode gain
//! is one, then scaled by a global scalp attenuation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::montage::ElectrodeMontage;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    electrodes: Vec<[f64; 3]>,
    /// Regularizer ε in cm².
    epsilon_cm2: f64,
    attenuation: f64,
}

impl ForwardModel {
    pub fn new(montage: &ElectrodeMontage, epsilon_cm2: f64, attenuation: f64) -> Self {
        Self {
            electrodes: montage.channels().iter().map(|e| e.position).collect(),
            epsilon_cm2,
            attenuation,
        }
    }

    /// Electrode gains for a source at `source` (mm).
    pub fn gains(&self, source: [f64; 3]) -> Vec<f64> {
        let raw: Vec<f64> = self
            .electrodes
            .iter()
            .map(|e| {
                let d2_mm: f64 = e.iter().zip(&source).map(|(a, b)| (a - b) * (a - b)).sum();
                1.0 / (d2_mm / 100.0 + self.epsilon_cm2)
            })
            .collect();
        let peak = raw.iter().cloned().fold(0.0, f64::max);
        raw.iter().map(|g| self.attenuation * g / peak).collect()
    }
}

/// Uniform point on the upper hemisphere (z ≥ 0) of radius `radius_mm`.
pub fn sample_upper_hemisphere<R: Rng + ?Sized>(rng: &mut R, radius_mm: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            return [
                radius_mm * v[0] / norm,
                radius_mm * v[1] / norm,
                radius_mm * (v[2] / norm).abs(),
            ];
        }
    }
}

/// Uniform point in a ball of `radius_mm` around `center`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, center: [f64; 3], radius_mm: f64) -> [f64; 3] {
    let dir = sample_upper_hemisphere(rng, 1.0);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let r = radius_mm * rng.random::<f64>().cbrt();
    [
        center[0] + r * dir[0],
        center[1] + r * dir[1],
        center[2] + sign * r * dir[2],
    ]
}
