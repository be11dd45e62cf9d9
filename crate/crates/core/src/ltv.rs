//! Linear time-varying FIR filtering.
//!
//! A filter is a tap vector per frame, frame `f` centred on sample
//! `f * hop`. Between two frame centres the taps are linearly interpolated,
//! after the last centre the last frame is held, and each output sample is
//! the causal convolution with that sample's taps.
//!
//! Coefficients come from two sources: [`estimate_coeffs_from_mel`], a
//! closed-form minimum-phase envelope filter, and
//! [`fit_coeffs_least_squares`], a ridge least-squares fit against a target.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::banded::{BandCholesky, SymBandMatrix};
use crate::error::{Error, Result};
use crate::minphase::minimum_phase_from_power;
use crate::signal::AudioSignal;
use crate::spectral::MelSpectrogram;

pub const COEFF_MAGIC: &[u8; 4] = b"LTVF";
pub const COEFF_VERSION: u32 = 1;
const COEFF_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

/// Pivot threshold for the least-squares solve, relative to the diagonal.
const PIVOT_REL_TOL: f64 = 1e-11;

/// Per-frame FIR taps, `n_frames × n_taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvFirCoeffs {
    taps: Array2<f64>,
    hop_seconds: f64,
    sample_rate: u32,
}

impl LtvFirCoeffs {
    pub fn new(taps: Array2<f64>, hop_seconds: f64, sample_rate: u32) -> Result<Self> {
        if taps.ncols() == 0 {
            return Err(Error::Config("an LTV filter needs at least one tap".into()));
        }
        if !(hop_seconds.is_finite() && hop_seconds > 0.0) || sample_rate == 0 {
            return Err(Error::Config(format!(
                "invalid hop {hop_seconds} s / sample rate {sample_rate} Hz"
            )));
        }
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite filter coefficient".into()));
        }
        Ok(Self {
            taps,
            hop_seconds,
            sample_rate,
        })
    }

    /// The same tap vector on every frame.
    pub fn constant(taps: &[f64], n_frames: usize, hop_seconds: f64, sample_rate: u32) -> Result<Self> {
        let m = Array2::from_shape_fn((n_frames, taps.len()), |(_, t)| taps[t]);
        Self::new(m, hop_seconds, sample_rate)
    }

    pub fn taps(&self) -> &Array2<f64> {
        &self.taps
    }

    pub fn frame(&self, f: usize) -> ArrayView1<'_, f64> {
        self.taps.row(f)
    }

    pub fn n_frames(&self) -> usize {
        self.taps.nrows()
    }

    pub fn n_taps(&self) -> usize {
        self.taps.ncols()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Hop in (possibly fractional) samples.
    pub fn hop_samples(&self) -> f64 {
        self.hop_seconds * self.sample_rate as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(COEFF_HEADER_LEN + 4 * self.taps.len());
        out.extend_from_slice(COEFF_MAGIC);
        out.extend_from_slice(&COEFF_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_taps() as u32).to_le_bytes());
        out.extend_from_slice(&self.hop_seconds.to_le_bytes());
        out.extend_from_slice(&(self.sample_rate as f64).to_le_bytes());
        for v in self.taps.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < COEFF_HEADER_LEN {
            return Err(Error::format(path, "truncated header"));
        }
        if &bytes[..4] != COEFF_MAGIC {
            return Err(Error::format(path, "bad magic, expected LTVF"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != COEFF_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n_frames = u32_at(8) as usize;
        let n_taps = u32_at(12) as usize;
        let hop_seconds = f64_at(16);
        let sample_rate = f64_at(24);
        if !(sample_rate > 0.0 && sample_rate.fract() == 0.0 && sample_rate <= u32::MAX as f64) {
            return Err(Error::format(path, format!("unsupported sample rate {sample_rate}")));
        }
        let payload = &bytes[COEFF_HEADER_LEN..];
        if payload.len() != 4 * n_frames * n_taps {
            return Err(Error::format(
                path,
                format!(
                    "payload is {} bytes, header promises {n_frames}x{n_taps} f32",
                    payload.len()
                ),
            ));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let taps = Array2::from_shape_vec((n_frames, n_taps), values)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Self::new(taps, hop_seconds, sample_rate as u32).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Frame to the left of sample `n` and the interpolation weight of the
/// frame to its right. The weight is 0 at and after the last centre.
#[inline]
pub(crate) fn frame_position(n: usize, hop: f64, n_frames: usize) -> (usize, f64) {
    let pos = n as f64 / hop;
    let f = pos.floor() as usize;
    if f + 1 >= n_frames {
        (n_frames - 1, 0.0)
    } else {
        (f, pos - f as f64)
    }
}

fn frames_for(n_samples: usize, hop: f64) -> usize {
    (n_samples as f64 / hop).ceil() as usize
}

/// Filters `x` with the time-varying taps `h`. Output length equals input length.
pub fn apply_ltv(x: &AudioSignal, h: &LtvFirCoeffs) -> Result<AudioSignal> {
    if x.sample_rate() != h.sample_rate {
        return Err(Error::Config(format!(
            "signal at {} Hz, filter at {} Hz",
            x.sample_rate(),
            h.sample_rate
        )));
    }
    if x.is_empty() {
        return Err(Error::Domain("cannot filter an empty signal".into()));
    }
    let hop = h.hop_samples();
    let expected = frames_for(x.len(), hop);
    if h.n_frames() + 1 < expected || h.n_frames() > expected + 1 {
        return Err(Error::LengthMismatch(format!(
            "{} filter frames for {} samples (expected {expected} at hop {hop})",
            h.n_frames(),
            x.len()
        )));
    }

    let xs = x.samples();
    let n_taps = h.n_taps();
    let taps = h.taps.as_slice().expect("standard layout");
    let mut cur = vec![0.0; n_taps];
    let out = (0..xs.len())
        .map(|n| {
            let (f, w) = frame_position(n, hop, h.n_frames());
            let a = &taps[f * n_taps..(f + 1) * n_taps];
            let h_n: &[f64] = if w == 0.0 {
                a
            } else {
                let b = &taps[(f + 1) * n_taps..(f + 2) * n_taps];
                for ((c, &ai), &bi) in cur.iter_mut().zip(a).zip(b) {
                    *c = ai + w * (bi - ai);
                }
                &cur
            };
            h_n.iter()
                .take(n + 1)
                .enumerate()
                .map(|(t, &c)| c * xs[n - t])
                .sum()
        })
        .collect();
    AudioSignal::new(out, x.sample_rate())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub n_taps: usize,
    pub ridge_lambda: f64,
    pub frame_hop_seconds: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_taps: 64,
            ridge_lambda: 1e-6,
            frame_hop_seconds: 0.010,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_taps == 0 {
            return Err(Error::Config("n_taps must be at least 1".into()));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "ridge_lambda must be finite and >= 0, got {}",
                self.ridge_lambda
            )));
        }
        if !(self.frame_hop_seconds.is_finite() && self.frame_hop_seconds > 0.0) {
            return Err(Error::Config(format!(
                "frame hop must be positive, got {}",
                self.frame_hop_seconds
            )));
        }
        Ok(())
    }
}

/// Normal-equation pieces contributed by the samples around one frame centre.
struct FrameGram {
    /// Lower triangle of the frame's own block, row-major `n_taps²`.
    diag: Vec<f64>,
    /// Block coupling this frame with the next one (symmetric).
    next: Vec<f64>,
    rhs: Vec<f64>,
}

/// Ridge least-squares fit of LTV taps mapping `excitation` onto `target`.
///
/// The unknowns are the tap vectors at the frame centres and the model is
/// exactly the one [`apply_ltv`] evaluates, so the fit minimises
/// `Σ_n (target[n] - apply_ltv(excitation)[n])² + λ Σ_f ‖h_f‖²` jointly over
/// all frames. Neighbouring frames couple only through the samples between
/// their centres, which makes the normal equations block-tridiagonal; they
/// are solved with a banded Cholesky factorisation. Taps whose regressors
/// carry no independent energy (for example frames of silent excitation when
/// `λ = 0`) are set to zero.
pub fn fit_coeffs_least_squares(
    excitation: &AudioSignal,
    target: &AudioSignal,
    cfg: &FitConfig,
) -> Result<LtvFirCoeffs> {
    cfg.validate()?;
    if excitation.sample_rate() != target.sample_rate() {
        return Err(Error::Config(format!(
            "excitation at {} Hz, target at {} Hz",
            excitation.sample_rate(),
            target.sample_rate()
        )));
    }
    if excitation.len() != target.len() {
        return Err(Error::Config(format!(
            "excitation has {} samples, target {}",
            excitation.len(),
            target.len()
        )));
    }
    if excitation.is_empty() {
        return Err(Error::Domain("cannot fit an empty signal".into()));
    }
    let (x, y) = (excitation.samples(), target.samples());
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite sample in fit input".into()));
    }

    let fs = excitation.sample_rate();
    let hop = cfg.frame_hop_seconds * fs as f64;
    let n_frames = frames_for(x.len(), hop);
    let t = cfg.n_taps;

    // first sample whose left frame is f, for f in 0..=n_frames
    let mut starts = vec![x.len(); n_frames + 1];
    for n in (0..x.len()).rev() {
        starts[frame_position(n, hop, n_frames).0] = n;
    }
    for f in (0..n_frames).rev() {
        starts[f] = starts[f].min(starts[f + 1]);
    }

    let lag = |n: usize, a: usize| if n >= a { x[n - a] } else { 0.0 };
    let grams: Vec<FrameGram> = (0..n_frames)
        .into_par_iter()
        .map(|f| {
            let mut g = FrameGram {
                diag: vec![0.0; t * t],
                next: vec![0.0; t * t],
                rhs: vec![0.0; t],
            };
            let mut xv = vec![0.0; t];
            let mut accumulate = |n: usize, w_self: f64, w_next: f64, g: &mut FrameGram| {
                for (a, v) in xv.iter_mut().enumerate() {
                    *v = lag(n, a);
                }
                let (d, c) = (w_self * w_self, w_self * w_next);
                for a in 0..t {
                    let xa = xv[a];
                    if xa == 0.0 {
                        continue;
                    }
                    g.rhs[a] += w_self * y[n] * xa;
                    let row = &mut g.diag[a * t..a * t + a + 1];
                    for (r, &xc) in row.iter_mut().zip(&xv[..=a]) {
                        *r += d * xa * xc;
                    }
                    if c != 0.0 {
                        let row = &mut g.next[a * t..a * t + a + 1];
                        for (r, &xc) in row.iter_mut().zip(&xv[..=a]) {
                            *r += c * xa * xc;
                        }
                    }
                }
            };
            // samples left of this centre, where this frame is the right neighbour
            if f > 0 {
                for n in starts[f - 1]..starts[f] {
                    let (_, w) = frame_position(n, hop, n_frames);
                    if w > 0.0 {
                        accumulate(n, w, 0.0, &mut g);
                    }
                }
            }
            for n in starts[f]..starts[f + 1] {
                let (_, w) = frame_position(n, hop, n_frames);
                accumulate(n, 1.0 - w, w, &mut g);
            }
            g
        })
        .collect();

    let dim = n_frames * t;
    let mut normal = SymBandMatrix::zeros(dim, 2 * t - 1);
    let mut rhs = vec![0.0; dim];
    for (f, g) in grams.iter().enumerate() {
        let base = f * t;
        rhs[base..base + t].copy_from_slice(&g.rhs);
        for a in 0..t {
            for c in 0..=a {
                normal.set(base + a, base + c, g.diag[a * t + c]);
            }
        }
        if f + 1 < n_frames {
            let nb = base + t;
            for a in 0..t {
                for c in 0..=a {
                    let v = g.next[a * t + c];
                    normal.set(nb + a, base + c, v);
                    normal.set(nb + c, base + a, v);
                }
            }
        }
    }
    normal.add_diagonal(cfg.ridge_lambda);
    let solution = BandCholesky::factor(&normal, PIVOT_REL_TOL).solve(&rhs);
    let taps = Array2::from_shape_vec((n_frames, t), solution).expect("shape");
    LtvFirCoeffs::new(taps, cfg.frame_hop_seconds, fs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub n_taps: usize,
    /// Lower bound on the per-bin gain before factorisation, in dB.
    pub floor_db: f64,
}

impl Default for EstimatorConfig {
    /// 64 taps; floor at the default mel floor (`10·log10(1e-5)` = -50 dB).
    fn default() -> Self {
        Self {
            n_taps: 64,
            floor_db: -50.0,
        }
    }
}

/// Deterministic stand-in for a learned coefficient predictor: turns each
/// log-mel frame into a minimum-phase FIR whose power response follows the
/// frame's envelope.
///
/// Per frame the log-mel energies are spread back onto linear-frequency bins
/// with the column-normalised filterbank (bins outside the mel range take
/// the nearest covered bin), converted to dB and floored at `floor_db`. The
/// resulting power response is factorised into `n_taps` minimum-phase taps.
pub fn estimate_coeffs_from_mel(mel: &MelSpectrogram, cfg: &EstimatorConfig) -> Result<LtvFirCoeffs> {
    if cfg.n_taps == 0 {
        return Err(Error::Config("n_taps must be at least 1".into()));
    }
    if !cfg.floor_db.is_finite() {
        return Err(Error::Config("floor_db must be finite".into()));
    }
    let fft_size = mel.config().fft_size;
    if cfg.n_taps > 2 * fft_size {
        return Err(Error::Config(format!(
            "{} taps exceed twice the mel FFT size ({fft_size})",
            cfg.n_taps
        )));
    }
    let fb = mel.filterbank()?;
    let weights = fb.weights();
    let n_bins = weights.ncols();
    let col_sums: Vec<f64> = (0..n_bins).map(|k| weights.column(k).sum()).collect();
    let covered: Vec<usize> = (0..n_bins).filter(|&k| col_sums[k] > 0.0).collect();
    if covered.is_empty() {
        return Err(Error::Config("mel filterbank covers no FFT bin".into()));
    }
    // bin -> nearest covered bin
    let source: Vec<usize> = (0..n_bins)
        .map(|k| {
            *covered
                .iter()
                .min_by_key(|&&c| c.abs_diff(k))
                .expect("nonempty")
        })
        .collect();

    // grid fine enough for the autocorrelation to reach n_taps lags
    let grid = fft_size.max((2 * cfg.n_taps).next_power_of_two());
    let fine_bins = grid / 2 + 1;
    let db_per_neper = 10.0 / std::f64::consts::LN_10;

    let rows: Vec<Vec<f64>> = mel
        .frames()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|log_mel| {
            let log_power: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let s = source[k];
                    let num: f64 = weights
                        .column(s)
                        .iter()
                        .zip(&log_mel)
                        .map(|(w, v)| w * v)
                        .sum();
                    (num / col_sums[s] * db_per_neper).max(cfg.floor_db)
                })
                .collect();
            let power: Vec<f64> = (0..fine_bins)
                .map(|j| {
                    let pos = j as f64 * (n_bins - 1) as f64 / (fine_bins - 1) as f64;
                    let k = (pos.floor() as usize).min(n_bins - 2);
                    let w = pos - k as f64;
                    let db = log_power[k] + w * (log_power[k + 1] - log_power[k]);
                    10f64.powf(db / 10.0)
                })
                .collect();
            minimum_phase_from_power(&power, cfg.n_taps)
        })
        .collect();

    let n_frames = rows.len();
    let taps = Array2::from_shape_fn((n_frames, cfg.n_taps), |(f, t)| rows[f][t]);
    LtvFirCoeffs::new(taps, mel.hop_seconds(), mel.sample_rate())
}

pub const RESPONSE_FLOOR_DB: f64 = -120.0;

/// Magnitude response of one frame's taps in dB over `n_fft / 2 + 1` bins.
pub fn frequency_response(h: &LtvFirCoeffs, frame: usize, n_fft: usize) -> Result<Vec<f64>> {
    if frame >= h.n_frames() {
        return Err(Error::Index {
            index: frame,
            len: h.n_frames(),
        });
    }
    if n_fft < h.n_taps() || n_fft == 0 {
        return Err(Error::Config(format!(
            "n_fft {n_fft} is smaller than the {} taps",
            h.n_taps()
        )));
    }
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for (b, &v) in buf.iter_mut().zip(h.frame(frame).iter()) {
        *b = Complex::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Ok(buf[..n_fft / 2 + 1]
        .iter()
        .map(|c| {
            let m = c.norm();
            if m > 0.0 {
                (20.0 * m.log10()).max(RESPONSE_FLOOR_DB)
            } else {
                RESPONSE_FLOOR_DB
            }
        })
        .collect())
}
