use harmex_core::ltv::{apply_ltv, fit_coeffs_least_squares, FitConfig, LtvFirCoeffs};
use harmex_core::signal::{
    gaussian_noise, interpolate_f0, sine_excitation, AudioSignal, ExcitationConfig, F0Track,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: u32 = 16_000;
const HOP: f64 = 160.0;

/// Excitation from a gliding, vibrato-modulated pitch track.
fn gliding_excitation(n_frames: usize, lo: f64, hi: f64) -> AudioSignal {
    let values = (0..n_frames)
        .map(|f| {
            let t = f as f64 / n_frames as f64;
            lo + (hi - lo) * t + 6.0 * (2.0 * std::f64::consts::PI * 5.0 * f as f64 * 0.01).sin()
        })
        .collect();
    let track = F0Track::new(values, 0.01).unwrap();
    let f0 = interpolate_f0(&track, FS, n_frames * 160).unwrap();
    sine_excitation(&f0, &ExcitationConfig::default()).unwrap()
}

fn random_taps(n_frames: usize, n_taps: usize, seed: u64) -> LtvFirCoeffs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = Array2::from_shape_fn((n_frames, n_taps), |_| rng.random_range(-1.0..1.0));
    LtvFirCoeffs::new(taps, 0.01, FS).unwrap()
}

/// Hat-function weight of frame `f` at sample `n`; the last frame is held.
fn frame_weight(f: usize, n: usize, n_frames: usize) -> f64 {
    let pos = n as f64 / HOP;
    if f == n_frames - 1 && pos >= f as f64 {
        return 1.0;
    }
    (1.0 - (pos - f as f64).abs()).max(0.0)
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

fn frame_range(f: usize, len: usize) -> std::ops::Range<usize> {
    let start = (f as f64 * HOP - HOP / 2.0).max(0.0) as usize;
    let end = ((f as f64 * HOP + HOP / 2.0) as usize).min(len);
    start..end
}

#[test]
fn construct_then_recover_on_sine_excitation() {
    let n_frames = 60;
    let x = gliding_excitation(n_frames, 110.0, 180.0);
    let h_known = random_taps(n_frames, 64, 42);
    let target = apply_ltv(&x, &h_known).unwrap();
    let cfg = FitConfig {
        ridge_lambda: 0.0,
        ..Default::default()
    };
    let fitted = fit_coeffs_least_squares(&x, &target, &cfg).unwrap();
    assert_eq!(fitted.n_frames(), n_frames);
    let refiltered = apply_ltv(&x, &fitted).unwrap();
    let (t, r) = (target.samples(), refiltered.samples());
    let mut worst = 0.0f64;
    for f in 1..n_frames - 1 {
        let range = frame_range(f, t.len());
        let err = rms(range.clone().map(|n| t[n] - r[n]));
        let rel = err / rms(range.map(|n| t[n]));
        worst = worst.max(rel);
    }
    assert!(worst < 1e-6, "worst interior relative RMSE {worst:e}");
}

#[test]
fn residual_is_orthogonal_to_every_regressor() {
    let n_frames = 30;
    let n_taps = 16;
    let x = gaussian_noise(n_frames * 160, FS, 1);
    // a target the model cannot represent exactly
    let target = gaussian_noise(n_frames * 160, FS, 2);
    let cfg = FitConfig {
        n_taps,
        ridge_lambda: 0.0,
        ..Default::default()
    };
    let fitted = fit_coeffs_least_squares(&x, &target, &cfg).unwrap();
    let refiltered = apply_ltv(&x, &fitted).unwrap();
    let (xs, ys) = (x.samples(), target.samples());
    let resid: Vec<f64> = ys.iter().zip(refiltered.samples()).map(|(a, b)| a - b).collect();
    let y_norm = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for f in 0..n_frames {
        for t in 0..n_taps {
            let (mut dot, mut norm2) = (0.0, 0.0);
            for n in t..xs.len() {
                let phi = frame_weight(f, n, n_frames) * xs[n - t];
                dot += resid[n] * phi;
                norm2 += phi * phi;
            }
            if norm2 > 0.0 {
                worst = worst.max(dot.abs() / (norm2.sqrt() * y_norm));
            }
        }
    }
    assert!(worst < 1e-8, "max normalised inner product {worst:e}");
}

#[test]
fn fitting_excitation_to_itself_gives_delta_taps() {
    let n_frames = 40;
    let x = gliding_excitation(n_frames, 95.0, 120.0);
    let fitted = fit_coeffs_least_squares(&x, &x, &FitConfig::default()).unwrap();
    for f in 0..n_frames {
        let row = fitted.frame(f);
        assert!((row[0] - 1.0).abs() < 1e-3, "frame {f}: h[0] = {}", row[0]);
        let rest: f64 = row.iter().skip(1).map(|v| v * v).sum();
        assert!(rest < 1e-6, "frame {f}: tail energy {rest:e}");
    }
}

#[test]
fn total_error_never_exceeds_the_raw_excitation() {
    let n_frames = 40;
    let x = gliding_excitation(n_frames, 150.0, 210.0);
    let noisy_target: Vec<f64> = apply_ltv(&x, &random_taps(n_frames, 8, 5))
        .unwrap()
        .samples()
        .iter()
        .zip(gaussian_noise(x.len(), FS, 3).samples())
        .map(|(a, b)| a + 0.05 * b)
        .collect();
    let target = AudioSignal::new(noisy_target, FS).unwrap();
    let cfg = FitConfig {
        n_taps: 32,
        ridge_lambda: 0.0,
        ..Default::default()
    };
    let fitted = fit_coeffs_least_squares(&x, &target, &cfg).unwrap();
    let refiltered = apply_ltv(&x, &fitted).unwrap();
    let (t, r, xs) = (target.samples(), refiltered.samples(), x.samples());
    let fit_err = rms((0..t.len()).map(|n| t[n] - r[n]));
    let raw_err = rms((0..t.len()).map(|n| t[n] - xs[n]));
    assert!(fit_err <= raw_err + 1e-9);
}

#[test]
fn per_frame_error_never_exceeds_the_raw_excitation_on_model_targets() {
    let n_frames = 40;
    let x = gliding_excitation(n_frames, 120.0, 160.0);
    let target = apply_ltv(&x, &random_taps(n_frames, 64, 9)).unwrap();
    let cfg = FitConfig {
        ridge_lambda: 0.0,
        ..Default::default()
    };
    let fitted = fit_coeffs_least_squares(&x, &target, &cfg).unwrap();
    let refiltered = apply_ltv(&x, &fitted).unwrap();
    let (t, r, xs) = (target.samples(), refiltered.samples(), x.samples());
    for f in 0..n_frames {
        let range = frame_range(f, t.len());
        let fit_err = rms(range.clone().map(|n| t[n] - r[n]));
        let raw_err = rms(range.map(|n| t[n] - xs[n]));
        assert!(fit_err <= raw_err + 1e-9, "frame {f}: {fit_err} > {raw_err}");
    }
}

#[test]
fn fit_is_deterministic() {
    let x = gliding_excitation(20, 150.0, 170.0);
    let y = gaussian_noise(x.len(), FS, 4);
    let a = fit_coeffs_least_squares(&x, &y, &FitConfig::default()).unwrap();
    let b = fit_coeffs_least_squares(&x, &y, &FitConfig::default()).unwrap();
    assert_eq!(a, b);
}
