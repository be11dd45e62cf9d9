//! Training-loss arithmetic and harmonic-quality measurements.
//!
//! The adversarial term of the vocoder objective is never computed here; it
//! enters [`combined_loss`] as a number supplied by the caller.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{AudioSignal, F0Track};
use crate::spectral::{block_rms, centred_block, MelSpectrogram, Stft, StftConfig, Window};

/// Magnitudes are floored here before taking logs in the magnitude term.
pub const LOG_MAG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct MrStftConfig {
    pub resolutions: Vec<StftConfig>,
}

impl Default for MrStftConfig {
    fn default() -> Self {
        let res = |fft_size, win_size, hop_size| StftConfig {
            fft_size,
            win_size,
            hop_size,
            window: Window::Hann,
        };
        Self {
            resolutions: vec![res(512, 240, 50), res(1024, 600, 120), res(2048, 1200, 240)],
        }
    }
}

impl MrStftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::Config("MR-STFT needs at least one resolution".into()));
        }
        self.resolutions.iter().try_for_each(StftConfig::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrStftLoss {
    /// Spectral convergence, averaged over resolutions.
    pub sc: f64,
    /// Mean absolute log-magnitude difference, averaged over resolutions.
    pub mag: f64,
    pub total: f64,
}

/// Multi-resolution STFT loss of `x` against the reference `y`.
///
/// Per resolution: `sc = ‖|Y| - |X|‖_F / ‖|Y|‖_F` and
/// `mag = mean |ln|Y| - ln|X||` with magnitudes floored at [`LOG_MAG_FLOOR`].
pub fn mr_stft_loss(x: &AudioSignal, y: &AudioSignal, cfg: &MrStftConfig) -> Result<MrStftLoss> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "signal has {} samples, reference {}",
            x.len(),
            y.len()
        )));
    }
    if x.sample_rate() != y.sample_rate() {
        return Err(Error::Config(format!(
            "signal at {} Hz, reference at {} Hz",
            x.sample_rate(),
            y.sample_rate()
        )));
    }
    if y.samples().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateReference("reference signal is all zeros".into()));
    }

    let (mut sc, mut mag) = (0.0, 0.0);
    for res in &cfg.resolutions {
        let stft = Stft::new(*res)?;
        let mx = stft.magnitude(x.samples())?;
        let my = stft.magnitude(y.samples())?;
        let (mut diff2, mut ref2, mut logdiff) = (0.0, 0.0, 0.0);
        for (a, b) in mx.iter().zip(my.iter()) {
            diff2 += (b - a) * (b - a);
            ref2 += b * b;
            logdiff += (b.max(LOG_MAG_FLOOR).ln() - a.max(LOG_MAG_FLOOR).ln()).abs();
        }
        if ref2 == 0.0 {
            return Err(Error::DegenerateReference(format!(
                "reference has no energy at fft size {}",
                res.fft_size
            )));
        }
        sc += diff2.sqrt() / ref2.sqrt();
        mag += logdiff / my.len() as f64;
    }
    let r = cfg.resolutions.len() as f64;
    let (sc, mag) = (sc / r, mag / r);
    Ok(MrStftLoss {
        sc,
        mag,
        total: sc + mag,
    })
}

/// Mean absolute difference between two log-mel spectrograms.
pub fn mel_mae(x_mel: &MelSpectrogram, y_mel: &MelSpectrogram) -> Result<f64> {
    if x_mel.frames().dim() != y_mel.frames().dim() {
        return Err(Error::Config(format!(
            "mel shapes differ: {:?} vs {:?}",
            x_mel.frames().dim(),
            y_mel.frames().dim()
        )));
    }
    if x_mel.config() != y_mel.config()
        || x_mel.sample_rate() != y_mel.sample_rate()
        || x_mel.mel_range() != y_mel.mel_range()
    {
        return Err(Error::Config("mel spectrograms were extracted with different settings".into()));
    }
    let n = x_mel.frames().len();
    if n == 0 {
        return Err(Error::Config("empty mel spectrogram".into()));
    }
    let sum: f64 = x_mel
        .frames()
        .iter()
        .zip(y_mel.frames().iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 200.0,
            beta: 4.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0 && self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be finite and >= 0, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// `alpha * l_dec + beta * l_adv + l_stft`.
pub fn combined_loss(l_dec: f64, l_adv: f64, l_stft: f64, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    if !(l_dec.is_finite() && l_adv.is_finite() && l_stft.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite loss term (dec={l_dec}, adv={l_adv}, stft={l_stft})"
        )));
    }
    Ok(w.alpha * l_dec + w.beta * l_adv + l_stft)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterConfig {
    /// Half-width of the pitch search around the reference, in cents.
    pub search_cents: f64,
    /// Minimum normalised autocorrelation for a frame to count as refined.
    pub min_correlation: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            search_cents: 200.0,
            min_correlation: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterReport {
    /// Mean |Δcents| over pairs of adjacent refined frames.
    pub mean_cents: f64,
    pub n_pairs: usize,
    pub n_voiced: usize,
    /// Voiced frames where refinement failed (skipped).
    pub n_failed: usize,
    /// Refined pitch per frame; `None` when unvoiced or failed.
    pub refined_hz: Vec<Option<f64>>,
}

fn frame_hop_samples(track: &F0Track, sample_rate: u32) -> Result<usize> {
    let hop = track.hop_seconds() * sample_rate as f64;
    let rounded = hop.round();
    if rounded < 1.0 || (hop - rounded).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "track hop of {hop} samples is not a whole number of samples"
        )));
    }
    Ok(rounded as usize)
}

/// Autocorrelation pitch refinement on a Hann-windowed segment.
///
/// The windowed autocorrelation is evaluated as a trigonometric polynomial
/// from the segment's power spectrum, so it can be sampled at fractional
/// lags, and divided by the window's own autocorrelation.
struct PitchRefiner {
    power: Vec<f64>,
    window_power: Vec<f64>,
    n_fft: usize,
}

impl PitchRefiner {
    fn new(segment: &[f64], planner: &mut FftPlanner<f64>) -> Option<Self> {
        let len = segment.len();
        let mean = segment.iter().sum::<f64>() / len as f64;
        let window: Vec<f64> = (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * (n as f64 + 0.5) / len as f64).cos())
            .collect();
        let n_fft = (2 * len).next_power_of_two();
        let fft = planner.plan_fft_forward(n_fft);
        let spectrum_power = |vals: &mut dyn Iterator<Item = f64>| {
            let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
            for (b, v) in buf.iter_mut().zip(vals) {
                *b = Complex::new(v, 0.0);
            }
            fft.process(&mut buf);
            buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect::<Vec<f64>>()
        };
        let power = spectrum_power(&mut segment.iter().zip(&window).map(|(s, w)| (s - mean) * w));
        if power.iter().all(|&p| p == 0.0) {
            return None;
        }
        let window_power = spectrum_power(&mut window.iter().copied());
        Some(Self {
            power,
            window_power,
            n_fft,
        })
    }

    fn autocorr(power: &[f64], n_fft: usize, lag: f64) -> f64 {
        let half = n_fft / 2;
        let step = 2.0 * PI * lag / n_fft as f64;
        let mut acc = power[0] + power[half] * (PI * lag).cos();
        for (k, p) in power.iter().enumerate().take(half).skip(1) {
            acc += 2.0 * p * (step * k as f64).cos();
        }
        acc
    }

    /// Normalised autocorrelation at a fractional lag.
    fn r(&self, lag: f64) -> f64 {
        let rx = Self::autocorr(&self.power, self.n_fft, lag) / Self::autocorr(&self.power, self.n_fft, 0.0);
        let rw = Self::autocorr(&self.window_power, self.n_fft, lag)
            / Self::autocorr(&self.window_power, self.n_fft, 0.0);
        rx / rw
    }

    /// Best lag in `[lo, hi]`; `None` if the maximum sits on the range edge.
    fn best_lag(&self, lo: usize, hi: usize, min_corr: f64) -> Option<f64> {
        let (best, best_r) = (lo..=hi)
            .map(|l| (l, self.r(l as f64)))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if best == lo || best == hi || best_r < min_corr {
            return None;
        }
        // golden-section refinement between the neighbouring integer lags
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (best as f64 - 1.0, best as f64 + 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut rc, mut rd) = (self.r(c), self.r(d));
        while b - a > 1e-7 {
            if rc > rd {
                b = d;
                d = c;
                rd = rc;
                c = b - g * (b - a);
                rc = self.r(c);
            } else {
                a = c;
                c = d;
                rc = rd;
                d = a + g * (b - a);
                rd = self.r(d);
            }
        }
        Some(0.5 * (a + b))
    }
}

/// Frame-to-frame pitch instability of `x` in cents.
///
/// Every voiced frame of `ref_f0` is refined by an autocorrelation search
/// within `±search_cents` of the reference pitch, using a window centred on
/// the frame that spans one hop or three periods of the lowest searched
/// pitch, whichever is longer. Frames whose window leaves the signal, or
/// whose correlation peak is weak or on the search edge, are skipped and
/// counted in `n_failed`.
pub fn pitch_jitter(x: &AudioSignal, ref_f0: &F0Track, cfg: &JitterConfig) -> Result<JitterReport> {
    if !(cfg.search_cents.is_finite() && cfg.search_cents > 0.0) {
        return Err(Error::Config("search_cents must be positive".into()));
    }
    let n_voiced = ref_f0.values().iter().filter(|&&v| v > 0.0).count();
    if n_voiced == 0 {
        return Err(Error::UndefinedMetric("reference track has no voiced frames".into()));
    }
    let fs = x.sample_rate() as f64;
    let hop = frame_hop_samples(ref_f0, x.sample_rate())?;
    let s = x.samples();
    let ratio = 2f64.powf(cfg.search_cents / 1200.0);
    let mut planner = FftPlanner::new();

    let refined_hz: Vec<Option<f64>> = ref_f0
        .values()
        .iter()
        .enumerate()
        .map(|(f, &f_ref)| {
            if f_ref <= 0.0 {
                return None;
            }
            let lag_lo = (fs / (f_ref * ratio)).floor().max(2.0) as usize - 1;
            let lag_hi = (fs / (f_ref / ratio)).ceil() as usize + 1;
            let len = hop.max(3 * lag_hi);
            let centre = f * hop;
            let start = centre.checked_sub(len / 2)?;
            let segment = s.get(start..start + len)?;
            let refiner = PitchRefiner::new(segment, &mut planner)?;
            refiner
                .best_lag(lag_lo.max(1), lag_hi, cfg.min_correlation)
                .map(|lag| fs / lag)
        })
        .collect();

    let n_failed = ref_f0
        .values()
        .iter()
        .zip(&refined_hz)
        .filter(|(v, r)| **v > 0.0 && r.is_none())
        .count();
    let deltas: Vec<f64> = refined_hz
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some((1200.0 * (b / a).log2()).abs()),
            _ => None,
        })
        .collect();
    if deltas.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "no pair of adjacent refined frames ({n_failed} of {n_voiced} voiced frames failed)"
        )));
    }
    Ok(JitterReport {
        mean_cents: deltas.iter().sum::<f64>() / deltas.len() as f64,
        n_pairs: deltas.len(),
        n_voiced,
        n_failed,
        refined_hz,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvConfig {
    /// Frames quieter than this, relative to the loudest frame, are unvoiced.
    pub energy_threshold_db: f64,
}

impl Default for UvConfig {
    fn default() -> Self {
        Self {
            energy_threshold_db: -40.0,
        }
    }
}

/// Energy-based voicing decision per frame of the track grid.
pub fn voicing_decisions(x: &AudioSignal, hop: usize, n_frames: usize, threshold_db: f64) -> Vec<bool> {
    let s = x.samples();
    let rms: Vec<f64> = (0..n_frames)
        .map(|f| {
            if f * hop >= s.len() + hop / 2 {
                0.0
            } else {
                block_rms(&s[centred_block(f, hop, s.len())])
            }
        })
        .collect();
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    rms.iter()
        .map(|&r| r > 0.0 && peak > 0.0 && 20.0 * (r / peak).log10() > threshold_db)
        .collect()
}

/// Fraction of frames whose energy-based voicing disagrees with `ref_f0 > 0`.
pub fn uv_error_rate(x: &AudioSignal, ref_f0: &F0Track, cfg: &UvConfig) -> Result<f64> {
    if ref_f0.is_empty() {
        return Err(Error::Domain("empty reference track".into()));
    }
    if !cfg.energy_threshold_db.is_finite() {
        return Err(Error::Config("energy threshold must be finite".into()));
    }
    let hop = frame_hop_samples(ref_f0, x.sample_rate())?;
    let decisions = voicing_decisions(x, hop, ref_f0.len(), cfg.energy_threshold_db);
    let errors = decisions
        .iter()
        .enumerate()
        .filter(|(f, &d)| d != ref_f0.is_voiced(*f))
        .count();
    Ok(errors as f64 / ref_f0.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{gaussian_noise, interpolate_f0, sine_excitation, ExcitationConfig, SampleF0};
    use crate::spectral::{mel_spectrogram, MelConfig};
    use proptest::prelude::*;

    fn noise(n: usize, seed: u64) -> AudioSignal {
        gaussian_noise(n, 16_000, seed).scaled(0.1)
    }

    #[test]
    fn identical_signals_have_zero_loss() {
        let y = noise(8000, 1);
        let l = mr_stft_loss(&y, &y, &MrStftConfig::default()).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn zero_hypothesis_has_unit_convergence() {
        let y = noise(8000, 2);
        let l = mr_stft_loss(&AudioSignal::zeros(8000, 16_000), &y, &MrStftConfig::default()).unwrap();
        assert_eq!(l.sc, 1.0);
    }

    #[test]
    fn doubled_signal() {
        let y = noise(8000, 3);
        let l = mr_stft_loss(&y.scaled(2.0), &y, &MrStftConfig::default()).unwrap();
        assert!((l.sc - 1.0).abs() < 1e-9);
        assert!((l.mag - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_errors() {
        let y = noise(8000, 3);
        let err = mr_stft_loss(&noise(7999, 1), &y, &MrStftConfig::default()).unwrap_err();
        assert_eq!(err.category(), "length-mismatch");
        let err = mr_stft_loss(&y, &AudioSignal::zeros(8000, 16_000), &MrStftConfig::default()).unwrap_err();
        assert_eq!(err.category(), "degenerate-reference");
        let empty = MrStftConfig { resolutions: vec![] };
        assert!(mr_stft_loss(&y, &y, &empty).is_err());
    }

    #[test]
    fn mel_mae_examples() {
        let cfg = MelConfig::default();
        let a = mel_spectrogram(&noise(4000, 1), &cfg).unwrap();
        let b = mel_spectrogram(&noise(4000, 2), &cfg).unwrap();
        assert_eq!(mel_mae(&a, &a).unwrap(), 0.0);
        let shifted = MelSpectrogram::new(
            a.frames().mapv(|v| v + 1.0),
            *a.config(),
            a.sample_rate(),
            a.mel_range(),
            a.floor(),
        )
        .unwrap();
        assert!((mel_mae(&shifted, &a).unwrap() - 1.0).abs() < 1e-12);
        // brute force over explicit indices
        let (rows, cols) = a.frames().dim();
        let mut sum = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                sum += (a.frames()[[i, j]] - b.frames()[[i, j]]).abs();
            }
        }
        assert!((mel_mae(&a, &b).unwrap() - sum / (rows * cols) as f64).abs() < 1e-12);
        let short = mel_spectrogram(&noise(3000, 1), &cfg).unwrap();
        assert_eq!(mel_mae(&a, &short).unwrap_err().category(), "config");
    }

    proptest! {
        #[test]
        fn mel_mae_is_a_metric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
            let cfg = MelConfig::default();
            let m = |s| mel_spectrogram(&noise(1600, s), &cfg).unwrap();
            let (a, b, c) = (m(s1), m(s2), m(s3));
            let ab = mel_mae(&a, &b).unwrap();
            prop_assert!((ab - mel_mae(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(mel_mae(&a, &c).unwrap() <= ab + mel_mae(&b, &c).unwrap() + 1e-12);
        }

        #[test]
        fn combined_loss_superposes(
            d1 in -10.0f64..10.0, a1 in -10.0f64..10.0, s1 in -10.0f64..10.0,
            d2 in -10.0f64..10.0, a2 in -10.0f64..10.0, s2 in -10.0f64..10.0,
        ) {
            let w = LossWeights::default();
            let sum = combined_loss(d1 + d2, a1 + a2, s1 + s2, &w).unwrap();
            let parts = combined_loss(d1, a1, s1, &w).unwrap() + combined_loss(d2, a2, s2, &w).unwrap();
            prop_assert!((sum - parts).abs() < 1e-9);
        }
    }

    #[test]
    fn combined_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(combined_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert!((combined_loss(0.01, 0.1, 0.5, &w).unwrap() - 2.9).abs() < 1e-12);
        assert_eq!(combined_loss(1.0, 0.0, 0.0, &w).unwrap(), 200.0);
        assert_eq!(combined_loss(f64::NAN, 0.0, 0.0, &w).unwrap_err().category(), "domain");
        let bad = LossWeights { alpha: -1.0, beta: 4.0 };
        assert!(combined_loss(0.0, 0.0, 0.0, &bad).is_err());
    }

    fn constant_track(f0: f64, frames: usize) -> F0Track {
        F0Track::new(vec![f0; frames], 0.01).unwrap()
    }

    #[test]
    fn jitter_of_clean_excitation_is_tiny() {
        for f0 in [200.0, 220.0, 310.0] {
            let track = constant_track(f0, 50);
            let sf0 = interpolate_f0(&track, 16_000, 8000).unwrap();
            let x = sine_excitation(&sf0, &ExcitationConfig::default()).unwrap();
            let r = pitch_jitter(&x, &track, &JitterConfig::default()).unwrap();
            assert!(r.mean_cents < 1.0, "{f0} Hz: {} cents", r.mean_cents);
            assert!(r.n_pairs >= 40);
        }
    }

    #[test]
    fn alternating_detune_gives_about_100_cents() {
        let base = 400.0;
        let frames = 60;
        let values: Vec<f64> = (0..frames * 160)
            .map(|n| {
                let f = (n as f64 / 160.0).round() as usize;
                let cents = if f.is_multiple_of(2) { 50.0 } else { -50.0 };
                base * 2f64.powf(cents / 1200.0)
            })
            .collect();
        let x = sine_excitation(&SampleF0::new(values, 16_000).unwrap(), &ExcitationConfig::default()).unwrap();
        let r = pitch_jitter(&x, &constant_track(base, frames), &JitterConfig::default()).unwrap();
        assert!((r.mean_cents - 100.0).abs() < 10.0, "{}", r.mean_cents);
    }

    #[test]
    fn jitter_needs_voiced_frames() {
        let err = pitch_jitter(&noise(1600, 1), &constant_track(0.0, 10), &JitterConfig::default()).unwrap_err();
        assert_eq!(err.category(), "undefined-metric");
    }

    #[test]
    fn uv_examples() {
        let mut vals = vec![0.0; 10];
        vals.extend(vec![180.0; 20]);
        vals.extend(vec![0.0; 10]);
        let track = F0Track::new(vals, 0.01).unwrap();
        let sf0 = interpolate_f0(&track, 16_000, 6400).unwrap();
        let x = sine_excitation(&sf0, &ExcitationConfig::default()).unwrap();
        assert_eq!(uv_error_rate(&x, &track, &UvConfig::default()).unwrap(), 0.0);

        let half = F0Track::new([vec![150.0; 20], vec![0.0; 20]].concat(), 0.01).unwrap();
        assert_eq!(uv_error_rate(&noise(6400, 9), &half, &UvConfig::default()).unwrap(), 0.5);

        let voiced = constant_track(150.0, 40);
        assert_eq!(
            uv_error_rate(&AudioSignal::zeros(6400, 16_000), &voiced, &UvConfig::default()).unwrap(),
            1.0
        );
        let empty = F0Track::new(vec![], 0.01).unwrap();
        assert_eq!(uv_error_rate(&x, &empty, &UvConfig::default()).unwrap_err().category(), "domain");
    }
}
