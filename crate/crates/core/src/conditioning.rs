//! Generator conditioning: channel stacking and multi-scale decimation.
//!
//! Channels always appear in the order noise, raw excitation, filtered
//! excitation (absent ones omitted). That order is part of the exported
//! file contract.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::signal::AudioSignal;
use crate::spectral::reflect_index;
use crate::tensor::FeatureTensor;

pub const DEFAULT_FACTORS: [usize; 3] = [8, 6, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Noise,
    RawExcitation,
    FilteredExcitation,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Noise, Channel::RawExcitation, Channel::FilteredExcitation];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Noise => "noise",
            Channel::RawExcitation => "raw",
            Channel::FilteredExcitation => "filtered",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown channel {name:?} (expected noise, raw or filtered)")))
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optional inputs to [`stack_channels`].
#[derive(Debug, Clone, Default)]
pub struct ConditioningParts {
    pub noise: Option<AudioSignal>,
    pub raw_excitation: Option<AudioSignal>,
    pub filtered_excitation: Option<AudioSignal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    channels: Vec<(Channel, Vec<f64>)>,
    sample_rate: u32,
}

impl ConditioningBundle {
    pub fn channels(&self) -> &[(Channel, Vec<f64>)] {
        &self.channels
    }

    pub fn channel(&self, c: Channel) -> Option<&[f64]> {
        self.channels.iter().find(|(k, _)| *k == c).map(|(_, v)| v.as_slice())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// `len × n_channels` tensor at the full sample rate.
    pub fn to_tensor(&self) -> FeatureTensor {
        channels_to_tensor(&self.channels, 1.0 / self.sample_rate as f64)
    }
}

fn channels_to_tensor(channels: &[(Channel, Vec<f64>)], hop_seconds: f64) -> FeatureTensor {
    let len = channels.first().map_or(0, |(_, v)| v.len());
    let data = Array2::from_shape_fn((len, channels.len()), |(i, c)| channels[c].1[i]);
    FeatureTensor::from_f64(&data, hop_seconds)
}

/// Stacks the given parts in canonical channel order.
pub fn stack_channels(parts: ConditioningParts) -> Result<ConditioningBundle> {
    let given: Vec<(Channel, AudioSignal)> = [
        (Channel::Noise, parts.noise),
        (Channel::RawExcitation, parts.raw_excitation),
        (Channel::FilteredExcitation, parts.filtered_excitation),
    ]
    .into_iter()
    .filter_map(|(c, s)| s.map(|s| (c, s)))
    .collect();
    let Some((first_channel, first)) = given.first() else {
        return Err(Error::Domain("no conditioning channel given".into()));
    };
    let (len, sample_rate) = (first.len(), first.sample_rate());
    for (c, s) in &given[1..] {
        if s.len() != len {
            return Err(Error::Config(format!(
                "channel {c} has {} samples, {first_channel} has {len}",
                s.len()
            )));
        }
        if s.sample_rate() != sample_rate {
            return Err(Error::Config(format!(
                "channel {c} at {} Hz, {first_channel} at {sample_rate} Hz",
                s.sample_rate()
            )));
        }
    }
    Ok(ConditioningBundle {
        channels: given.into_iter().map(|(c, s)| (c, s.into_samples())).collect(),
        sample_rate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    /// Decimation applied to the previous level.
    pub factor: usize,
    /// Decimation relative to the bundle.
    pub cumulative_factor: usize,
    pub channels: Vec<(Channel, Vec<f64>)>,
}

impl PyramidLevel {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: Channel) -> Option<&[f64]> {
        self.channels.iter().find(|(k, _)| *k == c).map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePyramid {
    pub levels: Vec<PyramidLevel>,
    pub base_length: usize,
    pub sample_rate: u32,
}

/// Anti-alias low-pass for decimation by `factor`: Hann-windowed sinc with
/// `8 * factor + 1` taps, cutoff `0.45 / factor` cycles per sample, taps
/// summing to one.
pub fn decimation_filter(factor: usize) -> Vec<f64> {
    let n = 8 * factor + 1;
    let mid = (n / 2) as f64;
    let fc = 0.45 / factor as f64;
    // evaluated on one half and mirrored so the taps are exactly symmetric
    let mut h: Vec<f64> = (0..n)
        .map(|j| {
            let j = j.min(n - 1 - j);
            let t = j as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Zero-phase low-pass then keep every `factor`-th sample, starting at 0.
/// Edges are mirrored. Output length is `floor(len / factor)`.
pub fn decimate(x: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::Config("decimation factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(x.to_vec());
    }
    let h = decimation_filter(factor);
    let half = (h.len() / 2) as isize;
    Ok((0..x.len() / factor)
        .map(|m| {
            let centre = (m * factor) as isize;
            h.iter()
                .enumerate()
                .map(|(j, c)| c * x[reflect_index(centre + j as isize - half, x.len())])
                .sum()
        })
        .collect())
}

/// Successive decimation of every channel by each factor in order.
pub fn downsample_multiscale(bundle: &ConditioningBundle, factors: &[usize]) -> Result<ScalePyramid> {
    if let Some(i) = factors.iter().position(|&f| f == 0) {
        return Err(Error::Config(format!("decimation factor {i} is zero")));
    }
    let mut levels: Vec<PyramidLevel> = Vec::with_capacity(factors.len());
    let mut cumulative = 1;
    for &factor in factors {
        cumulative *= factor;
        let prev = levels.last().map_or(&bundle.channels, |l| &l.channels);
        let channels = prev
            .iter()
            .map(|(c, v)| Ok((*c, decimate(v, factor)?)))
            .collect::<Result<Vec<_>>>()?;
        levels.push(PyramidLevel {
            factor,
            cumulative_factor: cumulative,
            channels,
        });
    }
    Ok(ScalePyramid {
        levels,
        base_length: bundle.len(),
        sample_rate: bundle.sample_rate,
    })
}

/// `{prefix}_x{cumulative_factor}.hmx`
pub fn level_path(prefix: &Path, cumulative_factor: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_x{cumulative_factor}.hmx"));
    PathBuf::from(name)
}

/// Writes the bundle as one tensor file with suffix `_x1`.
pub fn export_bundle(bundle: &ConditioningBundle, prefix: &Path) -> Result<PathBuf> {
    let path = level_path(prefix, 1);
    bundle.to_tensor().write(&path)?;
    Ok(path)
}

/// Writes one tensor file per pyramid level; channels are the tensor dims.
pub fn export_pyramid(pyramid: &ScalePyramid, prefix: &Path) -> Result<Vec<PathBuf>> {
    pyramid
        .levels
        .iter()
        .map(|level| {
            let path = level_path(prefix, level.cumulative_factor);
            let hop = level.cumulative_factor as f64 / pyramid.sample_rate as f64;
            channels_to_tensor(&level.channels, hop).write(&path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::gaussian_noise;
    use proptest::prelude::*;

    fn sig(v: Vec<f64>) -> AudioSignal {
        AudioSignal::new(v, 16_000).unwrap()
    }

    #[test]
    fn stacking_order_and_shape() {
        let n = gaussian_noise(100, 16_000, 1);
        let r = gaussian_noise(100, 16_000, 2);
        let b = stack_channels(ConditioningParts {
            raw_excitation: Some(r.clone()),
            noise: Some(n.clone()),
            filtered_excitation: None,
        })
        .unwrap();
        assert_eq!(b.n_channels(), 2);
        assert_eq!(b.channels()[0].0, Channel::Noise);
        assert_eq!(b.channels()[1].0, Channel::RawExcitation);
        assert_eq!(b.channel(Channel::RawExcitation).unwrap(), r.samples());
        assert_eq!(b.len(), 100);

        let single = stack_channels(ConditioningParts {
            filtered_excitation: Some(r),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(single.n_channels(), 1);
        assert_eq!(single.to_tensor().data.dim(), (100, 1));
    }

    #[test]
    fn stacking_errors() {
        let err = stack_channels(ConditioningParts {
            noise: Some(gaussian_noise(100, 16_000, 1)),
            raw_excitation: Some(gaussian_noise(99, 16_000, 1)),
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(err.category(), "config");
        assert_eq!(stack_channels(ConditioningParts::default()).unwrap_err().category(), "domain");
    }

    #[test]
    fn filter_shape() {
        for f in [2, 5, 6, 8] {
            let h = decimation_filter(f);
            assert_eq!(h.len(), 8 * f + 1);
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for j in 0..h.len() {
                assert_eq!(h[j], h[h.len() - 1 - j]);
            }
        }
    }

    #[test]
    fn floor_chain_lengths() {
        let b = stack_channels(ConditioningParts {
            noise: Some(gaussian_noise(4800, 16_000, 1)),
            ..Default::default()
        })
        .unwrap();
        let p = downsample_multiscale(&b, &DEFAULT_FACTORS).unwrap();
        let lens: Vec<usize> = p.levels.iter().map(|l| l.len()).collect();
        assert_eq!(lens, vec![600, 100, 20]);
        let cum: Vec<usize> = p.levels.iter().map(|l| l.cumulative_factor).collect();
        assert_eq!(cum, vec![8, 48, 240]);
        assert_eq!(
            downsample_multiscale(&b, &[8, 0]).unwrap_err().category(),
            "config"
        );
    }

    proptest! {
        #[test]
        fn pyramid_lengths_follow_floor_chain(
            len in 0usize..3000,
            factors in proptest::collection::vec(1usize..7, 0..4),
        ) {
            let b = stack_channels(ConditioningParts {
                raw_excitation: Some(AudioSignal::zeros(len, 16_000)),
                ..Default::default()
            }).unwrap();
            let p = downsample_multiscale(&b, &factors).unwrap();
            let mut expected = len;
            let mut cum = 1;
            for (level, f) in p.levels.iter().zip(&factors) {
                expected /= f;
                cum *= f;
                prop_assert_eq!(level.len(), expected);
                prop_assert_eq!(level.len(), len / cum);
            }
        }
    }

    #[test]
    fn constant_survives_every_level() {
        let b = stack_channels(ConditioningParts {
            raw_excitation: Some(sig(vec![0.37; 4800])),
            ..Default::default()
        })
        .unwrap();
        let p = downsample_multiscale(&b, &DEFAULT_FACTORS).unwrap();
        for level in &p.levels {
            for v in level.channel(Channel::RawExcitation).unwrap() {
                assert!((v - 0.37).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decimation_is_linear_and_lattice_shift_covariant() {
        let tone = |f: f64, phase: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| (2.0 * PI * f * i as f64 / 16_000.0 + phase).sin())
                .collect()
        };
        let a = tone(50.0, 0.3, 4000);
        let b = tone(170.0, 1.1, 4000);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 2.0 * u - 0.5 * v).collect();
        let (da, db, dm) = (decimate(&a, 8).unwrap(), decimate(&b, 8).unwrap(), decimate(&mix, 8).unwrap());
        for i in 0..dm.len() {
            assert!((dm[i] - (2.0 * da[i] - 0.5 * db[i])).abs() < 1e-12);
        }
        // shifting the input by one factor shifts the output by one sample
        let shifted = &mix[8..];
        let ds = decimate(shifted, 8).unwrap();
        for i in 10..ds.len() - 10 {
            assert!((ds[i] - dm[i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn export_names_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let b = stack_channels(ConditioningParts {
            noise: Some(gaussian_noise(160, 16_000, 3)),
            raw_excitation: Some(gaussian_noise(160, 16_000, 4)),
            ..Default::default()
        })
        .unwrap();
        let prefix = dir.path().join("cond");
        let path = export_bundle(&b, &prefix).unwrap();
        assert!(path.ends_with("cond_x1.hmx"));
        let t = FeatureTensor::read(&path).unwrap();
        assert_eq!((t.n_frames(), t.n_dims()), (160, 2));
        assert_eq!(t.data[[5, 1]], b.channel(Channel::RawExcitation).unwrap()[5] as f32);

        let p = downsample_multiscale(&b, &[2, 2, 2]).unwrap();
        let paths = export_pyramid(&p, &prefix).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["cond_x2.hmx", "cond_x4.hmx", "cond_x8.hmx"]);
        let last = FeatureTensor::read(&paths[2]).unwrap();
        assert_eq!(last.n_frames(), 20);
        assert_eq!(last.hop_seconds, 8.0 / 16_000.0);
    }

    #[test]
    fn channel_names_round_trip() {
        for c in Channel::ALL {
            assert_eq!(Channel::from_name(c.name()).unwrap(), c);
        }
        assert!(Channel::from_name("pitch").is_err());
    }
}
