//! Synthetic EEG: colored-noise cortical sources and an MRCP mixed onto a
//! 64-electrode layout, stationary electrode noise, and transient electrode
//! pops and drifts with full ground truth.
//!
//! A dataset is a pure function of `(SimulationSpec, subject seed)`. Every
//! trial draws from its own ChaCha stream, so trials can be generated in any
//! order (or in parallel) with identical results.

mod forward;
mod noise;
mod waveforms;

pub use forward::{sample_ball, sample_upper_hemisphere, ForwardModel};
pub use noise::{tukey_window, DriftShape, NoiseColor, Synth};
pub use waveforms::{mrcp_value, mrcp_waveform, pop_waveform, MRCP_PEAK_TIME};

use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montage::ElectrodeMontage;
use crate::par::Exec;

/// How the pop decay numbers are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopDecay {
    /// Values are rates r in `exp(−r·t)` (1/s).
    Rate,
    /// Values are time constants τ in `exp(−t/τ)` (s).
    TimeConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub seed: u64,
    pub n_subjects: usize,
    pub n_rest_trials: usize,
    pub n_reach_trials: usize,
    /// Trial length in seconds.
    pub trial_length: f64,
    pub f_s: f64,
    pub n_electrodes: usize,

    pub electrode_radius_mm: f64,
    pub source_radius_mm: f64,
    pub forward_epsilon_cm2: f64,
    /// Scalp attenuation applied to every brain source after peak normalization.
    pub brain_gain: f64,

    pub n_pink_sources: usize,
    pub n_brown_sources: usize,
    /// RMS of each pink source (µV).
    pub pink_rms: f64,
    /// RMS of each brown source (µV).
    pub brown_rms: f64,

    pub mrcp_center_mm: [f64; 3],
    pub mrcp_location_jitter_mm: f64,
    pub mrcp_latency_jitter_s: f64,
    pub mrcp_peak_uv: f64,
    pub mrcp_peak_jitter_uv: f64,

    /// Per-electrode white-noise RMS range (µV).
    pub electrode_noise_range: [f64; 2],

    pub n_pop_sources: usize,
    pub n_drift_sources: usize,
    /// Per-trial activation probability of every artifact source.
    pub activation_probability: f64,
    pub pop_amplitude_range: [f64; 2],
    pub pop_decay_range: [f64; 2],
    pub pop_decay: PopDecay,
    pub pop_onset_range: [f64; 2],
    pub drift: DriftShape,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_subjects: 15,
            n_rest_trials: 12,
            n_reach_trials: 60,
            trial_length: 15.0,
            f_s: 200.0,
            n_electrodes: 64,
            electrode_radius_mm: 120.0,
            source_radius_mm: 100.0,
            forward_epsilon_cm2: 4.0,
            brain_gain: 0.05,
            n_pink_sources: 40,
            n_brown_sources: 40,
            pink_rms: 37.5,
            brown_rms: 75.0,
            mrcp_center_mm: [-25.0, 0.0, 80.0],
            mrcp_location_jitter_mm: 10.0,
            mrcp_latency_jitter_s: 0.2,
            mrcp_peak_uv: -120.0,
            mrcp_peak_jitter_uv: 20.0,
            electrode_noise_range: [0.5, 1.5],
            n_pop_sources: 10,
            n_drift_sources: 10,
            activation_probability: 0.02,
            pop_amplitude_range: [90.0, 110.0],
            pop_decay_range: [0.17, 0.33],
            pop_decay: PopDecay::Rate,
            pop_onset_range: [5.0, 10.0],
            drift: DriftShape::default(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::InvalidConfig(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

impl SimulationSpec {
    pub fn samples_per_trial(&self) -> usize {
        (self.trial_length * self.f_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_subjects", self.n_subjects),
            ("n_rest_trials", self.n_rest_trials),
            ("n_reach_trials", self.n_reach_trials),
            ("n_electrodes", self.n_electrodes),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.n_electrodes < 2 {
            return Err(Error::TooFewChannels(self.n_electrodes));
        }
        if !(self.f_s > 0.0 && self.trial_length > 0.0) {
            return Err(Error::InvalidConfig("f_s and trial_length must be positive".into()));
        }
        let n = self.trial_length * self.f_s;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "trial_length * f_s = {n} is not an integer sample count"
            )));
        }
        if !(0.0..=1.0).contains(&self.activation_probability) {
            return Err(Error::InvalidConfig("activation_probability must lie in [0, 1]".into()));
        }
        check_range("electrode noise", self.electrode_noise_range)?;
        check_range("pop amplitude", self.pop_amplitude_range)?;
        check_range("pop decay", self.pop_decay_range)?;
        check_range("pop onset", self.pop_onset_range)?;
        if self.pop_decay_range[0] <= 0.0 {
            return Err(Error::InvalidConfig("pop decay values must be positive".into()));
        }
        if self.pop_onset_range[0] < 0.0 || self.pop_onset_range[1] >= self.trial_length {
            return Err(Error::OnsetOutsideTrial {
                onset: self.pop_onset_range[1],
                length: self.trial_length,
            });
        }
        Ok(())
    }

    /// Electrode layout used by the simulation.
    pub fn montage(&self) -> Result<ElectrodeMontage> {
        if self.n_electrodes == 64 {
            Ok(ElectrodeMontage::standard_64(self.electrode_radius_mm))
        } else {
            ElectrodeMontage::fibonacci_hemisphere(self.n_electrodes, self.electrode_radius_mm)
        }
    }

    /// Seed of subject `index` (0-based), derived from the master seed.
    pub fn subject_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(index as u64 + 1))
    }

    fn decay_rate(&self, drawn: f64) -> f64 {
        match self.pop_decay {
            PopDecay::Rate => drawn,
            PopDecay::TimeConstant => 1.0 / drawn,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArtifactKind {
    Pop {
        /// Step amplitude (µV).
        amplitude: f64,
        /// Decay rate (1/s).
        decay_rate: f64,
    },
    Drift {
        #[serde(flatten)]
        shape: DriftShape,
        /// Seed of the drift realization.
        seed: u64,
    },
}

/// Ground truth for one injected artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEvent {
    pub trial: usize,
    pub channel: usize,
    /// Onset in seconds from trial start (drifts: start of their window).
    pub onset: f64,
    #[serde(flatten)]
    pub kind: ArtifactKind,
}

impl ArtifactEvent {
    pub fn is_pop(&self) -> bool {
        matches!(self.kind, ArtifactKind::Pop { .. })
    }

    /// Regenerate the injected waveform (µV) over a trial of `synth.len()` samples.
    pub fn waveform(&self, synth: &Synth, f_s: f64) -> Result<Vec<f64>> {
        match &self.kind {
            ArtifactKind::Pop { amplitude, decay_rate } => {
                pop_waveform(*amplitude, *decay_rate, self.onset, synth.len(), f_s)
            }
            ArtifactKind::Drift { shape, seed } => {
                shape.generate(synth, f_s, &mut ChaCha8Rng::seed_from_u64(*seed))
            }
        }
    }
}

/// One simulated subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub montage: ElectrodeMontage,
    pub f_s: f64,
    /// Resting trials (trials × channels × samples, µV): brain sources and electrode noise.
    pub rest: Array3<f64>,
    /// Reaching trials with all sources.
    pub reach: Array3<f64>,
    /// Reaching trials without electrode noise, pops and drifts.
    pub reach_clean: Array3<f64>,
    /// Electrode white noise that was added to `reach`.
    pub reach_noise: Array3<f64>,
    pub events: Vec<ArtifactEvent>,
    /// Per-electrode noise RMS (µV).
    pub electrode_noise_rms: Vec<f64>,
    pub mrcp_location_mm: [f64; 3],
    /// Electrode gains of the MRCP source.
    pub mrcp_gains: Vec<f64>,
}

impl SimulatedDataset {
    pub fn samples_per_trial(&self) -> usize {
        self.reach.len_of(Axis(2))
    }
}

struct Subject {
    gains: Array2<f64>,
    mrcp_gains: Array1<f64>,
    noise_rms: Vec<f64>,
    seed: u64,
}

struct ReachTrial {
    clean: Array2<f64>,
    noise: Array2<f64>,
    artifacts: Array2<f64>,
    events: Vec<ArtifactEvent>,
}

const REST_STREAM: u64 = 1 << 32;
const REACH_STREAM: u64 = 2 << 32;

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl SimulationSpec {
    fn brain(&self, subject: &Subject, synth: &Synth, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let n = synth.len();
        let n_sources = self.n_pink_sources + self.n_brown_sources;
        let mut sources = Array2::zeros((n_sources, n));
        for (j, mut row) in sources.outer_iter_mut().enumerate() {
            let (color, rms) = if j < self.n_pink_sources {
                (NoiseColor::Pink, self.pink_rms)
            } else {
                (NoiseColor::Brown, self.brown_rms)
            };
            row.assign(&Array1::from(synth.colored(color, rms, rng)));
        }
        subject.gains.dot(&sources)
    }

    fn electrode_noise(&self, subject: &Subject, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let channels = subject.noise_rms.len();
        let mut out = Array2::zeros((channels, n));
        for (mut row, &rms) in out.outer_iter_mut().zip(&subject.noise_rms) {
            row.iter_mut().for_each(|v| *v = rms * rng.sample::<f64, _>(StandardNormal));
        }
        out
    }

    fn rest_trial(&self, subject: &Subject, synth: &Synth, trial: usize) -> Array2<f64> {
        let mut rng = trial_rng(subject.seed, REST_STREAM + trial as u64);
        let brain = self.brain(subject, synth, &mut rng);
        brain + self.electrode_noise(subject, synth.len(), &mut rng)
    }

    fn reach_trial(&self, subject: &Subject, synth: &Synth, trial: usize) -> Result<ReachTrial> {
        let n = synth.len();
        let channels = subject.noise_rms.len();
        let mut rng = trial_rng(subject.seed, REACH_STREAM + trial as u64);
        let mut clean = self.brain(subject, synth, &mut rng);

        let latency = uniform(&mut rng, [-self.mrcp_latency_jitter_s, self.mrcp_latency_jitter_s]);
        let peak = self.mrcp_peak_uv + uniform(&mut rng, [-self.mrcp_peak_jitter_uv, self.mrcp_peak_jitter_uv]);
        let mrcp = Array1::from(mrcp_waveform(n, self.f_s, latency, peak));
        clean += &(subject
            .mrcp_gains
            .view()
            .insert_axis(Axis(1))
            .dot(&mrcp.view().insert_axis(Axis(0))));

        let noise = self.electrode_noise(subject, n, &mut rng);

        let mut events = Vec::new();
        for _ in 0..self.n_pop_sources {
            if rng.random_bool(self.activation_probability) {
                let channel = rng.random_range(0..channels);
                let onset = uniform(&mut rng, self.pop_onset_range);
                let amplitude = uniform(&mut rng, self.pop_amplitude_range);
                let decay_rate = self.decay_rate(uniform(&mut rng, self.pop_decay_range));
                events.push(ArtifactEvent {
                    trial,
                    channel,
                    onset,
                    kind: ArtifactKind::Pop { amplitude, decay_rate },
                });
            }
        }
        for _ in 0..self.n_drift_sources {
            if rng.random_bool(self.activation_probability) {
                let channel = rng.random_range(0..channels);
                events.push(ArtifactEvent {
                    trial,
                    channel,
                    onset: self.drift.window[0],
                    kind: ArtifactKind::Drift {
                        shape: self.drift,
                        seed: rng.random(),
                    },
                });
            }
        }
        let mut artifacts = Array2::zeros((channels, n));
        for ev in &events {
            let w = ev.waveform(synth, self.f_s)?;
            let mut row = artifacts.row_mut(ev.channel);
            for (dst, v) in row.iter_mut().zip(&w) {
                *dst += v;
            }
        }
        Ok(ReachTrial {
            clean,
            noise,
            artifacts,
            events,
        })
    }
}

/// Simulate subject `index` (0-based) of `spec`.
pub fn simulate_subject(spec: &SimulationSpec, index: usize) -> Result<SimulatedDataset> {
    simulate_subject_seeded(spec, spec.subject_seed(index), Exec::default())
}

/// Simulate one subject from an explicit seed.
pub fn simulate_subject_seeded(spec: &SimulationSpec, subject_seed: u64, exec: Exec) -> Result<SimulatedDataset> {
    spec.validate()?;
    let montage = spec.montage()?;
    let channels = montage.len();
    let n = spec.samples_per_trial();
    let synth = Synth::new(n);
    if spec.n_drift_sources > 0 {
        spec.drift.validate(n, spec.f_s)?;
    }

    let mut rng = trial_rng(subject_seed, 0);
    let forward = ForwardModel::new(&montage, spec.forward_epsilon_cm2, spec.brain_gain);
    let n_sources = spec.n_pink_sources + spec.n_brown_sources;
    let mut gains = Array2::zeros((channels, n_sources));
    for j in 0..n_sources {
        let pos = sample_upper_hemisphere(&mut rng, spec.source_radius_mm);
        gains.column_mut(j).assign(&Array1::from(forward.gains(pos)));
    }
    let mrcp_location_mm = sample_ball(&mut rng, spec.mrcp_center_mm, spec.mrcp_location_jitter_mm);
    let mrcp_gains = forward.gains(mrcp_location_mm);
    let electrode_noise_rms: Vec<f64> = (0..channels)
        .map(|_| uniform(&mut rng, spec.electrode_noise_range))
        .collect();
    let subject = Subject {
        gains,
        mrcp_gains: Array1::from(mrcp_gains.clone()),
        noise_rms: electrode_noise_rms.clone(),
        seed: subject_seed,
    };

    let rest_trials = exec.map_indexed(spec.n_rest_trials, |t| spec.rest_trial(&subject, &synth, t));
    let mut rest = Array3::zeros((spec.n_rest_trials, channels, n));
    for (mut dst, src) in rest.outer_iter_mut().zip(rest_trials) {
        dst.assign(&src);
    }

    let reach_trials = exec.try_map_indexed(spec.n_reach_trials, |t| spec.reach_trial(&subject, &synth, t))?;
    let shape = (spec.n_reach_trials, channels, n);
    let mut reach = Array3::zeros(shape);
    let mut reach_clean = Array3::zeros(shape);
    let mut reach_noise = Array3::zeros(shape);
    let mut events = Vec::new();
    for (t, trial) in reach_trials.into_iter().enumerate() {
        let mut mixed = trial.clean.clone();
        mixed += &trial.noise;
        mixed += &trial.artifacts;
        reach.index_axis_mut(Axis(0), t).assign(&mixed);
        reach_clean.index_axis_mut(Axis(0), t).assign(&trial.clean);
        reach_noise.index_axis_mut(Axis(0), t).assign(&trial.noise);
        events.extend(trial.events);
    }

    Ok(SimulatedDataset {
        montage,
        f_s: spec.f_s,
        rest,
        reach,
        reach_clean,
        reach_noise,
        events,
        electrode_noise_rms,
        mrcp_location_mm,
        mrcp_gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SimulationSpec {
        SimulationSpec {
            n_rest_trials: 2,
            n_reach_trials: 4,
            trial_length: 15.0,
            activation_probability: 0.5,
            ..SimulationSpec::default()
        }
    }

    #[test]
    fn validation() {
        assert!(SimulationSpec::default().validate().is_ok());
        let bad = SimulationSpec {
            n_reach_trials: 0,
            ..SimulationSpec::default()
        };
        assert!(bad.validate().is_err());
        let frac = SimulationSpec {
            trial_length: 15.0025,
            ..SimulationSpec::default()
        };
        assert!(frac.validate().is_err());
    }

    #[test]
    fn shapes_and_determinism() {
        let spec = small_spec();
        let a = simulate_subject(&spec, 0).unwrap();
        assert_eq!(a.rest.dim(), (2, 64, 3000));
        assert_eq!(a.reach.dim(), (4, 64, 3000));
        let b = simulate_subject_seeded(&spec, spec.subject_seed(0), Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let c = simulate_subject(&spec, 1).unwrap();
        assert_ne!(a.reach, c.reach);
    }

    #[test]
    fn ground_truth_bookkeeping() {
        let spec = small_spec();
        let d = simulate_subject(&spec, 3).unwrap();
        assert!(!d.events.is_empty());
        let synth = Synth::new(d.samples_per_trial());
        let mut injected = Array3::<f64>::zeros(d.reach.dim());
        for ev in &d.events {
            let w = ev.waveform(&synth, d.f_s).unwrap();
            let mut row = injected.slice_mut(ndarray::s![ev.trial, ev.channel, ..]);
            row.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
        }
        let residual = &d.reach - &d.reach_clean - &d.reach_noise;
        for (r, i) in residual.iter().zip(injected.iter()) {
            assert!((r - i).abs() <= 1e-9 * (1.0 + i.abs()), "{r} vs {i}");
        }
    }

    #[test]
    fn time_constant_interpretation() {
        let spec = SimulationSpec {
            pop_decay: PopDecay::TimeConstant,
            ..small_spec()
        };
        assert!((spec.decay_rate(0.25) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn events_serialize_as_flat_records() {
        let ev = ArtifactEvent {
            trial: 1,
            channel: 2,
            onset: 6.5,
            kind: ArtifactKind::Pop {
                amplitude: 100.0,
                decay_rate: 0.25,
            },
        };
        let s = serde_json::to_string(&ev).unwrap();
        assert!(s.contains("\"kind\":\"pop\""), "{s}");
        assert_eq!(serde_json::from_str::<ArtifactEvent>(&s).unwrap(), ev);
    }
}
