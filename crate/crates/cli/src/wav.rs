//! Mono WAV I/O (16-bit PCM and 32-bit float).

use std::path::Path;

use harmex_core::{AudioSignal, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavSpec {
    pub sample_rate: u32,
    pub encoding: WavEncoding,
}

/// What a write had to do to fit the samples into the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteReport {
    /// Samples saturated to the PCM16 range.
    pub clipped: usize,
}

fn hound_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// PCM16 code for a sample: symmetric scaling by 32767 with saturation.
pub fn pcm16_code(v: f64) -> (i16, bool) {
    let scaled = (v * 32767.0).round();
    if scaled > 32767.0 {
        (32767, true)
    } else if scaled < -32767.0 {
        (-32767, true)
    } else {
        (scaled as i16, false)
    }
}

pub fn write_wav(path: impl AsRef<Path>, x: &AudioSignal, spec: WavSpec) -> Result<WriteReport> {
    let path = path.as_ref();
    if spec.sample_rate != x.sample_rate() {
        return Err(Error::Config(format!(
            "WAV spec at {} Hz for a {} Hz signal",
            spec.sample_rate,
            x.sample_rate()
        )));
    }
    let (bits, format) = match spec.encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let hspec = hound::WavSpec {
        channels: 1,
        sample_rate: spec.sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, hspec).map_err(|e| hound_error(path, e))?;
    let mut report = WriteReport::default();
    for &v in x.samples() {
        match spec.encoding {
            WavEncoding::Pcm16 => {
                let (code, clipped) = pcm16_code(v);
                report.clipped += clipped as usize;
                writer.write_sample(code)
            }
            WavEncoding::Float32 => writer.write_sample(v as f32),
        }
        .map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))?;
    Ok(report)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<(AudioSignal, WavSpec)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let hspec = reader.spec();
    if hspec.channels != 1 {
        return Err(Error::format(path, format!("{} channels; only mono is supported", hspec.channels)));
    }
    let (samples, encoding) = match (hspec.sample_format, hspec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => (
            reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32767.0))
                .collect::<std::result::Result<Vec<_>, _>>(),
            WavEncoding::Pcm16,
        ),
        (hound::SampleFormat::Float, 32) => (
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<Vec<_>, _>>(),
            WavEncoding::Float32,
        ),
        (fmt, bits) => {
            return Err(Error::format(
                path,
                format!("unsupported encoding: {bits}-bit {fmt:?}"),
            ))
        }
    };
    let samples = samples.map_err(|e| hound_error(path, e))?;
    let x = AudioSignal::new(samples, hspec.sample_rate).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((
        x,
        WavSpec {
            sample_rate: hspec.sample_rate,
            encoding,
        },
    ))
}
