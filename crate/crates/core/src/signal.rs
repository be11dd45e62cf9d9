//! Pitch tracks, sample-level pitch interpolation and additive sine excitation.
//!
//! The excitation is a sum of unit sinusoids at every harmonic of the
//! instantaneous fundamental that fits below Nyquist, scaled by a global
//! amplitude. Unvoiced samples (f0 = 0) are exactly zero.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_HOP_SECONDS: f64 = 0.010;

/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same signal multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Frame-level pitch in Hz, 0 marking unvoiced frames. Frame `m` is centred
/// on time `m * hop_seconds`.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    values: Vec<f64>,
    hop_seconds: f64,
}

impl F0Track {
    pub fn new(values: Vec<f64>, hop_seconds: f64) -> Result<Self> {
        if !(hop_seconds.is_finite() && hop_seconds > 0.0) {
            return Err(Error::Config(format!("hop must be positive, got {hop_seconds}")));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!("f0 frame {i} = {v} is not a finite value >= 0")));
        }
        Ok(Self {
            values,
            hop_seconds,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_voiced(&self, frame: usize) -> bool {
        self.values[frame] > 0.0
    }

    /// Number of samples the track covers at `sample_rate`.
    pub fn sample_len(&self, sample_rate: u32) -> usize {
        (self.values.len() as f64 * self.hop_seconds * sample_rate as f64).ceil() as usize
    }

    /// Parse the plain-text format: one decimal Hz value per line.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, hop_seconds: f64) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Domain(format!("line {}: cannot parse {line:?} as Hz", lineno + 1))
            })?;
            values.push(v);
        }
        Self::new(values, hop_seconds)
    }

    pub fn read(path: impl AsRef<Path>, hop_seconds: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, hop_seconds).map_err(|e| match e {
            Error::Domain(reason) => Error::format(path, reason),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 8);
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Pitch in Hz, one value per audio sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleF0 {
    values: Vec<f64>,
    sample_rate: u32,
}

impl SampleF0 {
    pub fn new(values: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!("f0 sample {i} = {v} is not a finite value >= 0")));
        }
        Ok(Self {
            values,
            sample_rate,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInit {
    Zero,
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationConfig {
    /// Global scale applied to the harmonic sum.
    pub amplitude: f64,
    pub phase_init: PhaseInit,
    /// Upper bound on the number of summed harmonics.
    pub k_max_cap: Option<usize>,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            phase_init: PhaseInit::Zero,
            k_max_cap: None,
        }
    }
}

impl ExcitationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Config(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if self.k_max_cap == Some(0) {
            return Err(Error::Config("k_max_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Linearly interpolate a frame-level track to `n_samples` samples.
///
/// Sample `n` belongs to the frame whose centre is nearest. Samples of
/// unvoiced frames are 0. Between two voiced frame centres the value is
/// linear; next to an unvoiced neighbour the voiced value is held.
pub fn interpolate_f0(track: &F0Track, sample_rate: u32, n_samples: usize) -> Result<SampleF0> {
    if sample_rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    let hop = track.hop_seconds * sample_rate as f64;
    let expected = track.sample_len(sample_rate);
    let slack = hop.ceil() as usize;
    if n_samples > expected + slack || n_samples + slack < expected {
        return Err(Error::LengthMismatch(format!(
            "{n_samples} samples requested for a {}-frame track covering {expected} samples",
            track.len()
        )));
    }
    if track.is_empty() {
        return SampleF0::new(vec![0.0; n_samples], sample_rate);
    }

    let f0 = &track.values;
    let last = f0.len() - 1;
    let values = (0..n_samples)
        .map(|n| {
            let pos = n as f64 / hop;
            let nearest = (pos.round() as usize).min(last);
            if f0[nearest] <= 0.0 {
                return 0.0;
            }
            let left = (pos.floor() as usize).min(last);
            let right = (left + 1).min(last);
            if left == right || f0[left] <= 0.0 || f0[right] <= 0.0 {
                return f0[nearest];
            }
            let w = pos - left as f64;
            f0[left] + w * (f0[right] - f0[left])
        })
        .collect();
    SampleF0::new(values, sample_rate)
}

/// Number of harmonics `k * f0` that fit at or below Nyquist.
pub fn harmonic_count(f0: f64, sample_rate: u32) -> Result<usize> {
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::Domain(format!("harmonic count needs f0 > 0, got {f0}")));
    }
    Ok((sample_rate as f64 / (2.0 * f0)).floor() as usize)
}

/// Harmonics summed at each sample (0 where unvoiced), after the cap.
pub fn harmonics_per_sample(f0: &SampleF0, cap: Option<usize>) -> Result<Vec<usize>> {
    f0.values
        .iter()
        .map(|&f| {
            if f > 0.0 {
                let k = harmonic_count(f, f0.sample_rate)?;
                Ok(cap.map_or(k, |c| k.min(c)))
            } else {
                Ok(0)
            }
        })
        .collect()
}

/// Additive sine excitation driven by a sample-level pitch sequence.
///
/// A single base phase accumulator advances by `2π f0[n] / fs` per sample
/// and is wrapped into `[0, 2π)`; harmonic `k` uses `(k · base) mod 2π`.
/// The accumulator restarts at every unvoiced→voiced onset.
pub fn sine_excitation(f0: &SampleF0, cfg: &ExcitationConfig) -> Result<AudioSignal> {
    cfg.validate()?;
    let fs = f0.sample_rate as f64;
    let nyquist = fs / 2.0;
    if let Some((i, f)) = f0.values.iter().enumerate().find(|(_, f)| **f >= nyquist) {
        return Err(Error::Aliasing(format!(
            "f0 sample {i} = {f} Hz is at or above Nyquist ({nyquist} Hz)"
        )));
    }

    let mut rng = match cfg.phase_init {
        PhaseInit::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        PhaseInit::Zero => None,
    };
    let mut out = Vec::with_capacity(f0.len());
    let mut base = 0.0f64;
    let mut voiced = false;
    for &f in &f0.values {
        if f <= 0.0 {
            voiced = false;
            out.push(0.0);
            continue;
        }
        if !voiced {
            base = match rng.as_mut() {
                Some(rng) => rng.random_range(0.0..TAU),
                None => 0.0,
            };
            voiced = true;
        }
        base = (base + TAU * f / fs).rem_euclid(TAU);
        let k_max = harmonic_count(f, f0.sample_rate)?;
        let k_max = cfg.k_max_cap.map_or(k_max, |c| k_max.min(c));
        let sum: f64 = (1..=k_max)
            .map(|k| ((k as f64 * base) % TAU).sin())
            .sum();
        out.push(cfg.amplitude * sum);
    }
    Ok(AudioSignal {
        samples: out,
        sample_rate: f0.sample_rate,
    })
}

/// I.i.d. standard normal samples from a seeded ChaCha8 stream.
pub fn gaussian_noise(n_samples: usize, sample_rate: u32, seed: u64) -> AudioSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n_samples).map(|_| rng.sample(StandardNormal)).collect();
    AudioSignal {
        samples,
        sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(values: &[f64]) -> F0Track {
        F0Track::new(values.to_vec(), DEFAULT_HOP_SECONDS).unwrap()
    }

    #[test]
    fn constant_track_interpolates_to_constant() {
        let f0 = interpolate_f0(&track(&[100.0, 100.0, 100.0]), 16_000, 480).unwrap();
        assert!(f0.values().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn midpoint_between_frame_centres() {
        let f0 = interpolate_f0(&track(&[100.0, 200.0]), 16_000, 320).unwrap();
        assert_eq!(f0.values()[0], 100.0);
        assert_eq!(f0.values()[80], 150.0);
        assert_eq!(f0.values()[160], 200.0);
        // past the last centre the value is held
        assert_eq!(f0.values()[319], 200.0);
    }

    #[test]
    fn unvoiced_track_interpolates_to_zero() {
        let f0 = interpolate_f0(&track(&[0.0, 0.0]), 16_000, 320).unwrap();
        assert!(f0.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn voicing_boundary_holds_voiced_value() {
        let f0 = interpolate_f0(&track(&[0.0, 200.0, 300.0, 0.0]), 16_000, 640).unwrap();
        let v = f0.values();
        // nearest frame 0 is unvoiced
        assert!(v[..80].iter().all(|&x| x == 0.0));
        // between centre 0 (unvoiced) and centre 1: held at 200
        assert!(v[80..160].iter().all(|&x| x == 200.0));
        assert_eq!(v[240], 250.0);
        // between centre 2 and unvoiced centre 3: held at 300
        assert!(v[320..400].iter().all(|&x| x == 300.0));
        assert!(v[400..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interpolation_length_checks() {
        let t = track(&[100.0; 10]);
        assert!(interpolate_f0(&t, 16_000, 1600 + 160).is_ok());
        assert!(interpolate_f0(&t, 16_000, 1600 - 160).is_ok());
        let err = interpolate_f0(&t, 16_000, 1600 + 161).unwrap_err();
        assert_eq!(err.category(), "length-mismatch");
        assert!(interpolate_f0(&t, 16_000, 1000).is_err());
    }

    #[test]
    fn harmonic_count_examples() {
        assert_eq!(harmonic_count(100.0, 16_000).unwrap(), 80);
        assert_eq!(harmonic_count(4000.0, 16_000).unwrap(), 2);
        assert_eq!(harmonic_count(9000.0, 16_000).unwrap(), 0);
        assert_eq!(harmonic_count(0.0, 16_000).unwrap_err().category(), "domain");
        assert!(harmonic_count(-5.0, 16_000).is_err());
    }

    #[test]
    fn zero_f0_gives_silence() {
        let f0 = SampleF0::new(vec![0.0; 1000], 16_000).unwrap();
        let x = sine_excitation(&f0, &ExcitationConfig::default()).unwrap();
        assert!(x.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn two_harmonic_closed_form() {
        let f0 = SampleF0::new(vec![4000.0; 64], 16_000).unwrap();
        let x = sine_excitation(&f0, &ExcitationConfig::default()).unwrap();
        for (n, &s) in x.samples().iter().enumerate() {
            let phi = (n + 1) as f64 * std::f64::consts::FRAC_PI_2;
            let expected = 0.1 * (phi.sin() + (2.0 * phi).sin());
            assert!((s - expected).abs() < 1e-12, "n={n}: {s} vs {expected}");
        }
    }

    #[test]
    fn aliasing_f0_is_rejected() {
        let f0 = SampleF0::new(vec![100.0, 8000.0], 16_000).unwrap();
        let err = sine_excitation(&f0, &ExcitationConfig::default()).unwrap_err();
        assert_eq!(err.category(), "aliasing");
    }

    #[test]
    fn cap_limits_harmonics() {
        let f0 = SampleF0::new(vec![100.0; 10], 16_000).unwrap();
        let k = harmonics_per_sample(&f0, Some(5)).unwrap();
        assert!(k.iter().all(|&k| k == 5));
        let cfg = ExcitationConfig {
            k_max_cap: Some(1),
            ..Default::default()
        };
        let x = sine_excitation(&f0, &cfg).unwrap();
        for (n, &s) in x.samples().iter().enumerate() {
            let phi = TAU * 100.0 * (n + 1) as f64 / 16_000.0;
            assert!((s - 0.1 * phi.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        let bad_amp = ExcitationConfig {
            amplitude: 0.0,
            ..Default::default()
        };
        assert!(bad_amp.validate().is_err());
        let bad_cap = ExcitationConfig {
            k_max_cap: Some(0),
            ..Default::default()
        };
        assert!(bad_cap.validate().is_err());
        assert!(F0Track::new(vec![100.0, -1.0], 0.01).is_err());
        assert!(F0Track::new(vec![f64::NAN], 0.01).is_err());
        assert!(F0Track::new(vec![100.0], 0.0).is_err());
    }

    #[test]
    fn seeded_phase_changes_onset_but_is_reproducible() {
        let f0 = SampleF0::new(vec![220.0; 400], 16_000).unwrap();
        let cfg = ExcitationConfig {
            phase_init: PhaseInit::SeededRandom(3),
            ..Default::default()
        };
        let a = sine_excitation(&f0, &cfg).unwrap();
        let b = sine_excitation(&f0, &cfg).unwrap();
        let zero = sine_excitation(&f0, &ExcitationConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, zero);
    }

    #[test]
    fn noise_is_deterministic_and_empty_for_zero_len() {
        assert!(gaussian_noise(0, 16_000, 7).is_empty());
        let a = gaussian_noise(16_000, 16_000, 7);
        let b = gaussian_noise(16_000, 16_000, 7);
        assert_eq!(a.samples(), b.samples());
        assert_ne!(a.samples(), gaussian_noise(16_000, 16_000, 8).samples());
    }

    #[test]
    fn f0_text_round_trip() {
        let t = track(&[0.0, 110.5, 220.25, 0.0]);
        let parsed = F0Track::parse(&t.to_text(), DEFAULT_HOP_SECONDS).unwrap();
        assert_eq!(parsed, t);
        assert!(F0Track::parse("100\nabc\n", 0.01).is_err());
        let with_comments = F0Track::parse("# header\n100\n\n0\n", 0.01).unwrap();
        assert_eq!(with_comments.values(), &[100.0, 0.0]);
    }
}
