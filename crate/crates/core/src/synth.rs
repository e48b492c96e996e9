//! Synthetic flutter-test records with a known modal table.
//!
//! Each maneuver is an impulsive excitation: from its onset every channel
//! carries a sum of damped cosines with per-(channel, maneuver, mode)
//! random phase, per-(mode, maneuver) amplitude jitter and per-(mode,
//! channel) spatial weights. Responses of earlier maneuvers keep decaying
//! underneath later ones. A trailing maneuver is cut short by the end of
//! the record, mirroring the incomplete last excitation of real tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ModalError, Result};
use crate::ingest::{ChannelRecord, TestPointDataset};
use crate::report::{ModeEntry, ModeReport, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub scaled_freq: f64,
    pub damping_ratio: f64,
    /// One weight per channel; drawn from a standard normal when absent.
    #[serde(default)]
    pub spatial_weights: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl ModeSpec {
    pub fn new(scaled_freq: f64, damping_ratio: f64) -> Self {
        Self {
            scaled_freq,
            damping_ratio,
            spatial_weights: None,
            amplitude: 1.0,
        }
    }

    /// Damped angular frequency per sample.
    pub fn omega_d(&self, dt: f64) -> f64 {
        PI * self.scaled_freq / dt
    }

    /// Exponential decay rate `ζω_n` per unit time.
    pub fn decay(&self, dt: f64) -> f64 {
        let wd = self.omega_d(dt);
        let wn = wd / (1.0 - self.damping_ratio * self.damping_ratio).sqrt();
        self.damping_ratio * wn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub modes: Vec<ModeSpec>,
    pub n_channels: usize,
    pub n_maneuvers: usize,
    pub samples_per_maneuver: usize,
    /// `None` means noiseless.
    pub noise_snr_db: Option<f64>,
    pub outlier_fraction: f64,
    pub outlier_scale: f64,
    pub seed: u64,
    pub dt: f64,
    /// Quiet samples before the first onset.
    pub lead_in: usize,
    /// Samples between the end of one maneuver window and the next onset.
    pub gap: usize,
    /// Length of the extra maneuver cut off by the end of the record
    /// (0 for none).
    pub trailing_samples: usize,
    /// Relative amplitude jitter per (mode, maneuver).
    pub amplitude_jitter: f64,
    /// Extra channels carrying non-finite readings.
    pub defective_channels: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            modes: standard_modes(),
            n_channels: 87,
            n_maneuvers: 5,
            samples_per_maneuver: 2200,
            noise_snr_db: Some(10.0),
            outlier_fraction: 0.005,
            outlier_scale: 10.0,
            seed: 0,
            dt: 1.0,
            lead_in: 500,
            gap: 300,
            trailing_samples: 1100,
            amplitude_jitter: 0.2,
            defective_channels: 0,
        }
    }
}

/// Ten modes at the scaled frequencies and damping ratios of a published
/// flight-test modal table.
pub fn standard_modes() -> Vec<ModeSpec> {
    [
        (0.0075, 0.09),
        (0.0095, 0.06),
        (0.0116, 0.03),
        (0.0164, 0.04),
        (0.0172, 0.04),
        (0.0183, 0.03),
        (0.0197, 0.02),
        (0.0249, 0.03),
        (0.0258, 0.02),
        (0.0270, 0.02),
    ]
    .into_iter()
    .map(|(f, z)| ModeSpec::new(f, z))
    .collect()
}

/// 10 modes, 87 channels, 5 maneuvers of 2200 samples, 10 dB SNR and 0.5%
/// outliers at ten times the channel RMS.
pub fn standard_benchmark(seed: u64) -> BenchmarkSpec {
    BenchmarkSpec {
        seed,
        ..BenchmarkSpec::default()
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModalError::InvalidInput(m.to_string()));
        if self.modes.is_empty() {
            return bad("benchmark needs at least one mode");
        }
        if self.n_channels == 0 || self.n_maneuvers == 0 || self.samples_per_maneuver == 0 {
            return bad("channel, maneuver and sample counts must be positive");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1)");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        for m in &self.modes {
            if !(m.scaled_freq >= 0.0 && (0.0..1.0).contains(&m.damping_ratio)) {
                return Err(ModalError::InvalidInput(format!("mode {m:?} out of range")));
            }
            if let Some(w) = &m.spatial_weights {
                if w.len() != self.n_channels || w.iter().all(|&x| x == 0.0) {
                    return bad("spatial weights need one nonzero entry set per channel");
                }
            }
        }
        Ok(())
    }

    pub fn onsets(&self) -> Vec<usize> {
        (0..self.n_maneuvers + usize::from(self.trailing_samples > 0))
            .map(|j| self.lead_in + j * (self.samples_per_maneuver + self.gap))
            .collect()
    }

    pub fn record_len(&self) -> usize {
        let last = self.lead_in + (self.n_maneuvers - 1) * (self.samples_per_maneuver + self.gap);
        if self.trailing_samples > 0 {
            last + self.samples_per_maneuver + self.gap + self.trailing_samples
        } else {
            last + self.samples_per_maneuver + self.gap
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: TestPointDataset,
    /// Noise- and outlier-free signal of each non-defective channel.
    pub clean: Vec<Vec<f64>>,
    pub truth: ModeReport,
    /// Excitation sample of every maneuver, including a trailing one.
    pub onsets: Vec<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_WEIGHTS: u64 = 1;
const STREAM_AMPLITUDE: u64 = 2;
const STREAM_DEFECTS: u64 = 3;
const STREAM_CHANNEL: u64 = 1 << 32;

pub fn generate(spec: &BenchmarkSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let n_ch = spec.n_channels;
    let len = spec.record_len();
    let onsets = spec.onsets();
    let dt = spec.dt;

    let mut weight_rng = stream(spec.seed, STREAM_WEIGHTS);
    let weights: Vec<Vec<f64>> = spec
        .modes
        .iter()
        .map(|m| match &m.spatial_weights {
            Some(w) => w.clone(),
            None => (0..n_ch).map(|_| weight_rng.sample(StandardNormal)).collect(),
        })
        .collect();
    let mut amp_rng = stream(spec.seed, STREAM_AMPLITUDE);
    let amplitude: Vec<Vec<f64>> = spec
        .modes
        .iter()
        .map(|m| {
            onsets
                .iter()
                .map(|_| m.amplitude * (1.0 + spec.amplitude_jitter * amp_rng.random_range(-1.0..=1.0)))
                .collect()
        })
        .collect();

    let wd: Vec<f64> = spec.modes.iter().map(|m| m.omega_d(dt)).collect();
    let decay: Vec<f64> = spec.modes.iter().map(|m| m.decay(dt)).collect();

    let mut clean = Vec::with_capacity(n_ch);
    let mut channels = Vec::with_capacity(n_ch + spec.defective_channels);
    for c in 0..n_ch {
        let mut rng = stream(spec.seed, STREAM_CHANNEL + c as u64);
        let mut x = vec![0.0; len];
        for (j, &onset) in onsets.iter().enumerate() {
            for k in 0..spec.modes.len() {
                let phase = rng.random_range(0.0..2.0 * PI);
                let a = weights[k][c] * amplitude[k][j];
                for (tau, v) in x[onset..].iter_mut().enumerate() {
                    let t = tau as f64 * dt;
                    *v += a * (-decay[k] * t).exp() * (wd[k] * t + phase).cos();
                }
            }
        }
        let mut noisy = x.clone();
        let active = &x[spec.lead_in.min(len)..];
        let power = active.iter().map(|v| v * v).sum::<f64>() / active.len().max(1) as f64;
        if let Some(snr) = spec.noise_snr_db {
            if power == 0.0 {
                return Err(ModalError::InvalidInput(format!(
                    "channel {} carries no signal, SNR {snr} dB is undefined",
                    c + 1
                )));
            }
            let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
            for v in noisy.iter_mut() {
                *v += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if spec.outlier_fraction > 0.0 {
            let count = (spec.outlier_fraction * len as f64).round() as usize;
            let level = spec.outlier_scale * power.sqrt();
            for idx in rand::seq::index::sample(&mut rng, len, count) {
                noisy[idx] = if rng.random_bool(0.5) { level } else { -level };
            }
        }
        clean.push(x);
        channels.push(ChannelRecord::new((c + 1).to_string(), noisy));
    }

    if spec.defective_channels > 0 {
        let mut rng = stream(spec.seed, STREAM_DEFECTS);
        for d in 0..spec.defective_channels {
            let mut samples: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            for idx in rand::seq::index::sample(&mut rng, len, 3.min(len)) {
                samples[idx] = f64::NAN;
            }
            let at = rng.random_range(0..=channels.len());
            channels.insert(at, ChannelRecord::new(format!("bad{}", d + 1), samples));
        }
    }

    let dataset = TestPointDataset::new(format!("synth-{}", spec.seed), channels, dt)?;
    let modes = spec
        .modes
        .iter()
        .zip(&decay)
        .map(|(m, &sigma)| ModeEntry {
            scaled_freq: m.scaled_freq,
            damping_ratio: m.damping_ratio,
            growth_rate: -sigma,
            amplitude: m.amplitude,
            is_static: m.scaled_freq < crate::dmd::STATIC_FREQ,
            flags: vec![],
        })
        .collect();
    let truth = ModeReport::new(
        dataset.test_point_id.clone(),
        modes,
        Provenance {
            seed: Some(spec.seed),
            ..Provenance::default()
        },
    );
    Ok(SynthOutput {
        dataset,
        clean,
        truth,
        onsets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub scaled_freq: f64,
    pub damping_ratio: f64,
    pub amplitude: f64,
}

/// The `truth.json` payload.
pub fn truth_table(truth: &ModeReport) -> Vec<TruthEntry> {
    truth
        .modes
        .iter()
        .map(|m| TruthEntry {
            scaled_freq: m.scaled_freq,
            damping_ratio: m.damping_ratio,
            amplitude: m.amplitude,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> BenchmarkSpec {
        BenchmarkSpec {
            modes: vec![ModeSpec::new(0.02, 0.03), ModeSpec::new(0.011, 0.05)],
            n_channels: 4,
            n_maneuvers: 2,
            samples_per_maneuver: 400,
            lead_in: 100,
            gap: 50,
            trailing_samples: 200,
            ..BenchmarkSpec::default()
        }
    }

    #[test]
    fn layout_and_counts() {
        let spec = small_spec();
        let out = generate(&spec).unwrap();
        assert_eq!(out.onsets, vec![100, 550, 1000]);
        assert_eq!(out.dataset.record_len(), 1000 + 200);
        assert_eq!(out.dataset.channels.len(), 4);
        assert_eq!(out.truth.modes.len(), 2);
        assert!(out.truth.modes[0].scaled_freq < out.truth.modes[1].scaled_freq);
    }

    #[test]
    fn clean_signal_matches_closed_form() {
        let spec = BenchmarkSpec {
            noise_snr_db: None,
            outlier_fraction: 0.0,
            amplitude_jitter: 0.0,
            modes: vec![ModeSpec {
                spatial_weights: Some(vec![1.0, 2.0, -1.0, 0.5]),
                ..ModeSpec::new(0.02, 0.03)
            }],
            ..small_spec()
        };
        let out = generate(&spec).unwrap();
        // before the first onset the record is silent
        assert!(out.clean[1][..100].iter().all(|&v| v == 0.0));
        // a single damped cosine obeys x[t+1] = 2e^{-s}cos(w) x[t] - e^{-2s} x[t-1]
        let m = &spec.modes[0];
        let (s, w) = (m.decay(1.0), m.omega_d(1.0));
        let (a1, a2) = (2.0 * (-s).exp() * w.cos(), -(-2.0 * s).exp());
        for c in 0..4 {
            let x = &out.clean[c];
            for t in 101..549 {
                assert!((x[t + 1] - a1 * x[t] - a2 * x[t - 1]).abs() < 1e-12);
            }
        }
        for (ch, x) in out.dataset.channels.iter().zip(&out.clean) {
            assert_eq!(&ch.samples, x);
        }
    }

    #[test]
    fn rejects_zero_signal_with_noise() {
        let spec = BenchmarkSpec {
            modes: vec![ModeSpec {
                spatial_weights: Some(vec![0.0, 0.0, 0.0, 1.0]),
                ..ModeSpec::new(0.02, 0.03)
            }],
            ..small_spec()
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn defective_channels_are_flagged() {
        let spec = BenchmarkSpec {
            defective_channels: 2,
            ..small_spec()
        };
        let out = generate(&spec).unwrap();
        assert_eq!(out.dataset.channels.len(), 6);
        assert_eq!(out.dataset.valid_count(), 4);
    }
}
