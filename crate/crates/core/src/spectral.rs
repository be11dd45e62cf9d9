//! STFT magnitudes, triangular mel filterbank and log-RMS loudness.
//!
//! All extractors share one frame grid: frame `t` is centred on sample
//! `t * hop` and a signal of `n` samples yields `ceil(n / hop)` frames.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

pub const DEFAULT_N_MELS: usize = 80;
pub const DEFAULT_MEL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
}

impl Window {
    /// Periodic window of `len` samples.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub win_size: usize,
    pub hop_size: usize,
    pub window: Window,
}

impl Default for StftConfig {
    /// 1024-point FFT, 40 ms window, 10 ms hop at 16 kHz.
    fn default() -> Self {
        Self {
            fft_size: 1024,
            win_size: 640,
            hop_size: 160,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, win_size: usize, hop_size: usize) -> Result<Self> {
        let cfg = Self {
            fft_size,
            win_size,
            hop_size,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_size == 0 || self.hop_size > self.win_size || self.win_size > self.fft_size {
            return Err(Error::Config(format!(
                "need 0 < hop ({}) <= win ({}) <= fft ({})",
                self.hop_size, self.win_size, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop_size)
    }
}

/// Index into `0..len` with whole-sample symmetric reflection (no edge repeat).
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reusable STFT plan.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            window: cfg.window.coefficients(cfg.win_size),
            fft,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Magnitude spectrogram, `n_frames × (fft_size / 2 + 1)`.
    pub fn magnitude(&self, x: &[f64]) -> Result<Array2<f64>> {
        if x.is_empty() {
            return Err(Error::Domain("STFT of an empty signal".into()));
        }
        let n_frames = self.cfg.n_frames(x.len());
        let n_bins = self.cfg.n_bins();
        let mut out = Array2::zeros((n_frames, n_bins));
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        // window occupies the middle of the fft frame, which is centred on t * hop
        let win_start = (self.cfg.fft_size - self.cfg.win_size) / 2;
        let half = (self.cfg.fft_size / 2) as isize;
        for t in 0..n_frames {
            buf.fill(Complex::new(0.0, 0.0));
            let origin = (t * self.cfg.hop_size) as isize - half + win_start as isize;
            for (j, w) in self.window.iter().enumerate() {
                let s = x[reflect_index(origin + j as isize, x.len())];
                buf[win_start + j] = Complex::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, c) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
                *o = c.norm();
            }
        }
        Ok(out)
    }
}

pub fn stft_magnitude(x: &AudioSignal, cfg: &StftConfig) -> Result<Array2<f64>> {
    Stft::new(*cfg)?.magnitude(x.samples())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, each with peak weight 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    centers_hz: Vec<f64>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(
        sample_rate: u32,
        fft_size: usize,
        n_mels: usize,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 || fft_size < 2 {
            return Err(Error::Config("filterbank needs n_mels >= 1 and fft_size >= 2".into()));
        }
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(Error::Config(format!(
                "invalid mel band edges [{f_min}, {f_max}] Hz at Nyquist {nyquist} Hz"
            )));
        }
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (lo, c, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
                if w > 0.0 {
                    weights[[m, k]] = w;
                }
            }
            if weights.row(m).iter().all(|&w| w == 0.0) {
                return Err(Error::Config(format!(
                    "mel band {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; use a larger fft_size or fewer bands"
                )));
            }
        }
        Ok(Self {
            weights,
            centers_hz: edges_hz[1..=n_mels].to_vec(),
            edges_hz,
        })
    }

    /// `n_mels × n_bins` weight matrix.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn center_hz(&self, band: usize) -> f64 {
        self.centers_hz[band]
    }

    /// Lower and upper edge (zero points) of a band's triangle.
    pub fn band_support_hz(&self, band: usize) -> (f64, f64) {
        (self.edges_hz[band], self.edges_hz[band + 2])
    }
}

/// Log-mel energies (natural log, floored).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: Array2<f64>,
    config: StftConfig,
    sample_rate: u32,
    mel_range: (f64, f64),
    floor: f64,
}

impl MelSpectrogram {
    pub fn new(
        frames: Array2<f64>,
        config: StftConfig,
        sample_rate: u32,
        mel_range: (f64, f64),
        floor: f64,
    ) -> Result<Self> {
        config.validate()?;
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::Config(format!("mel floor must be positive, got {floor}")));
        }
        let log_floor = floor.ln();
        if let Some(v) = frames.iter().find(|v| !v.is_finite() || **v < log_floor) {
            return Err(Error::Domain(format!(
                "mel value {v} is not finite or below log(floor) = {log_floor}"
            )));
        }
        Ok(Self {
            frames,
            config,
            sample_rate,
            mel_range,
            floor,
        })
    }

    /// `n_frames × n_mels`.
    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn mel_range(&self) -> (f64, f64) {
        self.mel_range
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.ncols()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.config.hop_size as f64 / self.sample_rate as f64
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        MelFilterbank::new(
            self.sample_rate,
            self.config.fft_size,
            self.n_mels(),
            self.mel_range.0,
            self.mel_range.1,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            n_mels: DEFAULT_N_MELS,
            f_min: 0.0,
            f_max: 8000.0,
            floor: DEFAULT_MEL_FLOOR,
        }
    }
}

/// Triangular mel filterbank on the power spectrum, then `ln(max(·, floor))`.
pub fn mel_spectrogram(x: &AudioSignal, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if !(cfg.floor.is_finite() && cfg.floor > 0.0) {
        return Err(Error::Config(format!("mel floor must be positive, got {}", cfg.floor)));
    }
    let fb = MelFilterbank::new(x.sample_rate(), cfg.stft.fft_size, cfg.n_mels, cfg.f_min, cfg.f_max)?;
    let mag = stft_magnitude(x, &cfg.stft)?;
    let power = mag.mapv(|m| m * m);
    let frames = power
        .dot(&fb.weights().t())
        .mapv(|e| e.max(cfg.floor).ln());
    MelSpectrogram::new(frames, cfg.stft, x.sample_rate(), (cfg.f_min, cfg.f_max), cfg.floor)
}

/// Per-frame log-RMS.
#[derive(Debug, Clone, PartialEq)]
pub struct LoudnessTrack {
    pub values: Vec<f64>,
    pub hop_seconds: f64,
}

/// Sample range of the `hop`-long analysis block centred on frame `t`,
/// clipped to the signal.
pub(crate) fn centred_block(t: usize, hop: usize, len: usize) -> std::ops::Range<usize> {
    let centre = t * hop;
    let start = centre.saturating_sub(hop / 2);
    let end = (centre + hop - hop / 2).min(len);
    start.min(end)..end
}

pub(crate) fn block_rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64).sqrt()
}

/// `ln(max(RMS, floor))` over `hop`-sample blocks centred on the frame grid.
pub fn loudness(x: &AudioSignal, hop: usize, floor: f64) -> Result<LoudnessTrack> {
    if hop == 0 {
        return Err(Error::Config("loudness hop must be positive".into()));
    }
    if !(floor.is_finite() && floor > 0.0) {
        return Err(Error::Config(format!("loudness floor must be positive, got {floor}")));
    }
    let s = x.samples();
    let values = (0..s.len().div_ceil(hop))
        .map(|t| block_rms(&s[centred_block(t, hop, s.len())]).max(floor).ln())
        .collect();
    Ok(LoudnessTrack {
        values,
        hop_seconds: hop as f64 / x.sample_rate() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::gaussian_noise;

    fn sine(freq: f64, amp: f64, n: usize, fs: u32) -> AudioSignal {
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / fs as f64).sin())
            .collect();
        AudioSignal::new(s, fs).unwrap()
    }

    #[test]
    fn reflect_index_mirrors_without_repeating_edges() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn invalid_stft_configs() {
        assert!(StftConfig::new(512, 1024, 128).is_err());
        assert!(StftConfig::new(1024, 512, 0).is_err());
        assert!(StftConfig::new(1024, 256, 512).is_err());
        assert!(StftConfig::new(1024, 1024, 1024).is_ok());
    }

    #[test]
    fn zeros_give_zero_magnitude() {
        let m = stft_magnitude(&AudioSignal::zeros(1000, 16_000), &StftConfig::default()).unwrap();
        assert_eq!(m.dim(), (7, 513));
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_signal_is_domain_error() {
        let err = stft_magnitude(&AudioSignal::zeros(0, 16_000), &StftConfig::default()).unwrap_err();
        assert_eq!(err.category(), "domain");
    }

    #[test]
    fn bin_centred_sine_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let k = 37;
        let f = k as f64 * 16_000.0 / cfg.fft_size as f64;
        let m = stft_magnitude(&sine(f, 0.5, 8000, 16_000), &cfg).unwrap();
        for t in 4..m.nrows() - 4 {
            let row = m.row(t);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, k, "frame {t}");
        }
    }

    #[test]
    fn parseval_with_cola_hann() {
        let cfg = StftConfig::new(512, 512, 128).unwrap();
        let x = gaussian_noise(16_000, 16_000, 11);
        let m = stft_magnitude(&x, &cfg).unwrap();
        let n_fft = cfg.fft_size;
        // two-sided spectral energy from the one-sided magnitudes
        let spec_energy: f64 = m
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(k, v)| if k == 0 || k == n_fft / 2 { v * v } else { 2.0 * v * v })
                    .sum::<f64>()
            })
            .sum();
        let w2: f64 = cfg.window.coefficients(cfg.win_size).iter().map(|w| w * w).sum();
        let sig_energy: f64 = x.samples().iter().map(|s| s * s).sum();
        let expected = n_fft as f64 * w2 / cfg.hop_size as f64 * sig_energy;
        let rel = (spec_energy - expected).abs() / expected;
        assert!(rel < 0.01, "relative error {rel}");
    }

    #[test]
    fn filterbank_rows_peak_at_one_and_cover_range() {
        let fb = MelFilterbank::new(16_000, 1024, 80, 0.0, 8000.0).unwrap();
        for m in 0..80 {
            let peak = fb.weights().row(m).iter().cloned().fold(0.0, f64::max);
            assert!(peak > 0.5 && peak <= 1.0, "band {m} peak {peak}");
        }
        // every bin strictly inside (f_min, f_max) is covered
        for k in 1..512 {
            let col_sum: f64 = fb.weights().column(k).sum();
            assert!(col_sum > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn filterbank_rejects_bad_edges_and_empty_bands() {
        assert!(MelFilterbank::new(16_000, 1024, 80, 0.0, 9000.0).is_err());
        assert!(MelFilterbank::new(16_000, 1024, 80, 500.0, 400.0).is_err());
        assert!(MelFilterbank::new(16_000, 1024, 0, 0.0, 8000.0).is_err());
        let err = MelFilterbank::new(16_000, 64, 80, 0.0, 8000.0).unwrap_err();
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn mel_of_silence_is_floor() {
        let mel = mel_spectrogram(&AudioSignal::zeros(16_000, 16_000), &MelConfig::default()).unwrap();
        assert_eq!(mel.frames().dim(), (100, 80));
        let floor = 1e-5f64.ln();
        assert!(mel.frames().iter().all(|&v| v == floor));
    }

    #[test]
    fn mel_of_noise_is_above_floor_everywhere() {
        let x = gaussian_noise(16_000, 16_000, 5).scaled(0.1);
        let mel = mel_spectrogram(&x, &MelConfig::default()).unwrap();
        let floor = 1e-5f64.ln();
        assert!(mel.frames().iter().all(|&v| v > floor));
    }

    #[test]
    fn mel_scaling_adds_two_log_c() {
        let x = gaussian_noise(8000, 16_000, 2).scaled(0.05);
        let c = 3.0;
        let a = mel_spectrogram(&x, &MelConfig::default()).unwrap();
        let b = mel_spectrogram(&x.scaled(c), &MelConfig::default()).unwrap();
        let floor = 1e-5f64.ln();
        for (va, vb) in a.frames().iter().zip(b.frames()) {
            assert!(vb >= va);
            if *va > floor {
                assert!((vb - va - 2.0 * c.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loudness_examples() {
        let silent = loudness(&AudioSignal::zeros(1600, 16_000), 160, 1e-5).unwrap();
        assert_eq!(silent.values.len(), 10);
        assert!(silent.values.iter().all(|&v| v == 1e-5f64.ln()));

        let a = 0.3;
        let x = sine(1000.0, a, 16_000, 16_000);
        let l = loudness(&x, 160, 1e-5).unwrap();
        assert_eq!(l.values.len(), 100);
        for v in &l.values[1..99] {
            assert!((v - (a / 2f64.sqrt()).ln()).abs() < 1e-3);
        }
        let l2 = loudness(&x.scaled(2.0), 160, 1e-5).unwrap();
        for (v1, v2) in l.values[1..99].iter().zip(&l2.values[1..99]) {
            assert!((v2 - v1 - 2f64.ln()).abs() < 1e-12);
        }
        assert!(loudness(&x, 0, 1e-5).is_err());
    }

    #[test]
    fn frame_counts_agree_across_extractors() {
        for n in [1usize, 159, 160, 161, 4321] {
            let x = gaussian_noise(n, 16_000, 1);
            let cfg = MelConfig::default();
            let m = stft_magnitude(&x, &cfg.stft).unwrap();
            let mel = mel_spectrogram(&x, &cfg).unwrap();
            let l = loudness(&x, 160, 1e-5).unwrap();
            let expected = n.div_ceil(160);
            assert_eq!(m.nrows(), expected);
            assert_eq!(mel.n_frames(), expected);
            assert_eq!(l.values.len(), expected);
        }
    }
}
