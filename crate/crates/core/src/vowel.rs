//! Formant shaping for synthetic vowel targets.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

const fn f(freq_hz: f64, bandwidth_hz: f64) -> Formant {
    Formant {
        freq_hz,
        bandwidth_hz,
    }
}

/// Rough adult formant sets (F1..F4).
pub const VOWELS: [(&str, [Formant; 4]); 5] = [
    ("a", [f(730.0, 90.0), f(1090.0, 110.0), f(2440.0, 160.0), f(3400.0, 250.0)]),
    ("e", [f(530.0, 70.0), f(1840.0, 100.0), f(2480.0, 160.0), f(3500.0, 250.0)]),
    ("i", [f(270.0, 60.0), f(2290.0, 100.0), f(3010.0, 170.0), f(3700.0, 250.0)]),
    ("o", [f(570.0, 80.0), f(840.0, 90.0), f(2410.0, 160.0), f(3400.0, 250.0)]),
    ("u", [f(300.0, 60.0), f(870.0, 90.0), f(2240.0, 150.0), f(3300.0, 250.0)]),
];

pub fn vowel(name: &str) -> Option<[Formant; 4]> {
    VOWELS.iter().find(|(n, _)| *n == name).map(|(_, f)| *f)
}

/// Cascade of two-pole resonators (unity gain at DC) whose formants glide
/// linearly from `start` to `end` over the signal.
pub fn formant_filter(x: &AudioSignal, start: &[Formant], end: &[Formant]) -> Result<AudioSignal> {
    if start.len() != end.len() {
        return Err(Error::Config("start and end formant lists differ in length".into()));
    }
    let fs = x.sample_rate() as f64;
    let nyquist = fs / 2.0;
    for fm in start.iter().chain(end) {
        if !(fm.freq_hz > 0.0 && fm.freq_hz < nyquist && fm.bandwidth_hz > 0.0) {
            return Err(Error::Domain(format!("invalid formant {fm:?} at {fs} Hz")));
        }
    }
    let n = x.len();
    let mut y = x.samples().to_vec();
    for (a, b) in start.iter().zip(end) {
        let (mut y1, mut y2) = (0.0, 0.0);
        for (i, v) in y.iter_mut().enumerate() {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let freq = a.freq_hz + t * (b.freq_hz - a.freq_hz);
            let bw = a.bandwidth_hz + t * (b.bandwidth_hz - a.bandwidth_hz);
            let r = (-PI * bw / fs).exp();
            let c1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
            let c2 = -r * r;
            let g = 1.0 - c1 - c2;
            let out = g * *v + c1 * y1 + c2 * y2;
            y2 = y1;
            y1 = out;
            *v = out;
        }
    }
    AudioSignal::new(y, x.sample_rate())
}
