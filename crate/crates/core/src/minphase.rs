//! Minimum-phase FIR design from a sampled power response.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Cepstrum length used for spectral factorisation. Long enough that the
/// factor of a strictly positive response with ~100 dB of range has decayed
/// well before the fold point.
const CEPSTRUM_LEN: usize = 8192;

/// Designs a minimum-phase FIR of `n_taps` coefficients whose squared
/// magnitude approximates `power` (one-sided, `power.len() = grid / 2 + 1`
/// uniformly spaced bins from DC to Nyquist, strictly positive).
///
/// The autocorrelation of `power` is truncated to `n_taps - 1` lags with a
/// window whose transform is non-negative (a self-convolved Hann), which makes
/// the truncated response a strictly positive trigonometric polynomial. Its
/// spectral factor is extracted with the folded real cepstrum, so every zero
/// of the resulting filter lies inside the unit circle.
pub fn minimum_phase_from_power(power: &[f64], n_taps: usize) -> Vec<f64> {
    assert!(n_taps >= 1 && power.len() >= 2);
    let grid = 2 * (power.len() - 1);
    let mut planner = FftPlanner::<f64>::new();

    // autocorrelation of the target response
    let mut spec: Vec<Complex<f64>> = (0..grid)
        .map(|k| {
            let k = if k <= grid / 2 { k } else { grid - k };
            Complex::new(power[k], 0.0)
        })
        .collect();
    planner.plan_fft_inverse(grid).process(&mut spec);
    let max_lag = (n_taps - 1).min(grid / 2);
    let lag_window = self_convolved_hann(max_lag + 1);
    let r: Vec<f64> = (0..=max_lag)
        .map(|l| spec[l].re / grid as f64 * lag_window[l])
        .collect();

    // strictly positive smoothed power on the cepstrum grid
    let len = CEPSTRUM_LEN.max((4 * n_taps).next_power_of_two());
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    buf[0] = Complex::new(r[0], 0.0);
    for (l, &v) in r.iter().enumerate().skip(1) {
        buf[l] = Complex::new(v, 0.0);
        buf[len - l] = Complex::new(v, 0.0);
    }
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut buf);
    let floor = r[0].max(f64::MIN_POSITIVE) * 1e-30;
    for c in buf.iter_mut() {
        // log |H| = log(S) / 2
        *c = Complex::new(0.5 * c.re.max(floor).ln(), 0.0);
    }
    inv.process(&mut buf);
    let scale = 1.0 / len as f64;
    // fold the real cepstrum onto positive quefrencies
    let half = len / 2;
    for (q, c) in buf.iter_mut().enumerate() {
        let v = c.re * scale;
        *c = match q {
            0 => Complex::new(v, 0.0),
            q if q < half => Complex::new(2.0 * v, 0.0),
            q if q == half => Complex::new(v, 0.0),
            _ => Complex::new(0.0, 0.0),
        };
    }
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = c.exp();
    }
    inv.process(&mut buf);
    buf[..n_taps].iter().map(|c| c.re * scale).collect()
}

/// Autocorrelation of a Hann window of `len` points (non-zero end points),
/// normalised to 1 at lag 0. Its transform is `|W|^2 >= 0`.
fn self_convolved_hann(len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len)
        .map(|n| (PI * (n + 1) as f64 / (len + 1) as f64).sin().powi(2))
        .collect();
    let c0: f64 = w.iter().map(|v| v * v).sum();
    (0..len)
        .map(|l| w[..len - l].iter().zip(&w[l..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect()
}
