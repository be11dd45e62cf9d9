//! Subcommand implementations over a fully resolved [`RunConfig`].

use std::path::{Path, PathBuf};

use harmex_core::conditioning::{
    downsample_multiscale, export_bundle, export_pyramid, stack_channels, Channel, ConditioningParts,
};
use harmex_core::ltv::{apply_ltv, estimate_coeffs_from_mel, fit_coeffs_least_squares, LtvFirCoeffs};
use harmex_core::metrics::{mel_mae, mr_stft_loss, pitch_jitter, uv_error_rate};
use harmex_core::signal::{gaussian_noise, interpolate_f0, sine_excitation, AudioSignal, F0Track};
use harmex_core::spectral::{loudness, mel_spectrogram, MelSpectrogram};
use harmex_core::tensor::FeatureTensor;
use harmex_core::vowel::{formant_filter, vowel};
use harmex_core::{Error, Result};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::wav::{read_wav, write_wav};

pub const COMMANDS: [&str; 9] = [
    "excite", "filter", "estimate", "fit", "mel", "loudness", "metrics", "condition", "demo",
];

/// Everything a command produced besides its files.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Printed on stdout (one JSON line for `metrics`).
    pub stdout: Option<String>,
    /// One JSON object per warning, printed on stderr.
    pub warnings: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    fn wrote(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("missing required path `{name}`")))
}

fn load_wav(cfg: &RunConfig, path: &Path) -> Result<AudioSignal> {
    let (x, spec) = read_wav(path)?;
    if spec.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "{}: sample rate {} Hz, configured {} Hz (no resampling)",
            path.display(),
            spec.sample_rate,
            cfg.sample_rate
        )));
    }
    Ok(x)
}

fn save_wav(cfg: &RunConfig, path: &Path, x: &AudioSignal, out: &mut Outcome) -> Result<()> {
    let report = write_wav(path, x, cfg.wav_spec())?;
    if report.clipped > 0 {
        out.warnings.push(
            json!({"warning": "clipped", "path": path.display().to_string(), "count": report.clipped})
                .to_string(),
        );
    }
    out.wrote(path);
    Ok(())
}

/// Adds `suffix` to the full file name: `a/b.wav` → `a/b.wav.run.toml`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Where the resolved config of a run is written by default.
pub fn provenance_path(cfg: &RunConfig) -> Option<PathBuf> {
    let out = cfg.paths.output.as_deref()?;
    Some(match cfg.command.as_deref() {
        Some("demo") => out.join("run.toml"),
        _ => sibling(out, ".run.toml"),
    })
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let command = cfg
        .command
        .as_deref()
        .ok_or_else(|| Error::Config("no command given".into()))?;
    match command {
        "excite" => excite(cfg),
        "filter" => filter(cfg),
        "estimate" => estimate(cfg),
        "fit" => fit(cfg),
        "mel" => mel(cfg),
        "loudness" => loudness_cmd(cfg),
        "metrics" => metrics(cfg),
        "condition" => condition(cfg),
        "demo" => demo(cfg),
        other => Err(Error::Config(format!(
            "unknown command `{other}` (expected one of {})",
            COMMANDS.join(", ")
        ))),
    }
}

fn synthesize(cfg: &RunConfig, track: &F0Track) -> Result<AudioSignal> {
    let f0 = interpolate_f0(track, cfg.sample_rate, track.sample_len(cfg.sample_rate))?;
    sine_excitation(&f0, &cfg.excitation_config())
}

fn excite(cfg: &RunConfig) -> Result<Outcome> {
    let track = F0Track::read(required(&cfg.paths.f0, "f0")?, cfg.hop_seconds)?;
    let x = synthesize(cfg, &track)?;
    let mut out = Outcome::default();
    save_wav(cfg, required(&cfg.paths.output, "output")?, &x, &mut out)?;
    Ok(out)
}

fn filter(cfg: &RunConfig) -> Result<Outcome> {
    let x = load_wav(cfg, required(&cfg.paths.input, "input")?)?;
    let h = LtvFirCoeffs::read(required(&cfg.paths.coeffs, "coeffs")?)?;
    let y = apply_ltv(&x, &h)?;
    let mut out = Outcome::default();
    save_wav(cfg, required(&cfg.paths.output, "output")?, &y, &mut out)?;
    Ok(out)
}

/// Reads a log-mel tensor written by `mel`, checked against the mel settings.
fn read_mel(cfg: &RunConfig, path: &Path) -> Result<MelSpectrogram> {
    let t = FeatureTensor::read(path)?;
    let mc = cfg.mel_config();
    if t.n_dims() != mc.n_mels {
        return Err(Error::Config(format!(
            "{}: {} mel bands, configured {}",
            path.display(),
            t.n_dims(),
            mc.n_mels
        )));
    }
    let hop = mc.stft.hop_size as f64 / cfg.sample_rate as f64;
    if (t.hop_seconds - hop).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{}: hop of {} s, configured {hop} s",
            path.display(),
            t.hop_seconds
        )));
    }
    // single-precision storage may round a floored value just below log(floor)
    let log_floor = mc.floor.ln();
    let frames = t.to_f64().mapv(|v| v.max(log_floor));
    MelSpectrogram::new(frames, mc.stft, cfg.sample_rate, (mc.f_min, mc.f_max), mc.floor)
}

fn estimate(cfg: &RunConfig) -> Result<Outcome> {
    let mel = read_mel(cfg, required(&cfg.paths.mel, "mel")?)?;
    let h = estimate_coeffs_from_mel(&mel, &cfg.estimator_config())?;
    let path = required(&cfg.paths.output, "output")?;
    h.write(path)?;
    let mut out = Outcome::default();
    out.wrote(path);
    Ok(out)
}

fn fit(cfg: &RunConfig) -> Result<Outcome> {
    let x = load_wav(cfg, required(&cfg.paths.input, "input")?)?;
    let y = load_wav(cfg, required(&cfg.paths.target, "target")?)?;
    let h = fit_coeffs_least_squares(&x, &y, &cfg.fit_config())?;
    let path = required(&cfg.paths.output, "output")?;
    h.write(path)?;
    let mut out = Outcome::default();
    out.wrote(path);
    Ok(out)
}

fn mel(cfg: &RunConfig) -> Result<Outcome> {
    let x = load_wav(cfg, required(&cfg.paths.input, "input")?)?;
    let m = mel_spectrogram(&x, &cfg.mel_config())?;
    let path = required(&cfg.paths.output, "output")?;
    FeatureTensor::from_f64(m.frames(), m.hop_seconds()).write(path)?;
    let mut out = Outcome::default();
    out.wrote(path);
    Ok(out)
}

fn hop_samples(cfg: &RunConfig) -> Result<usize> {
    let hop = cfg.hop_seconds * cfg.sample_rate as f64;
    if (hop - hop.round()).abs() > 1e-6 || hop.round() < 1.0 {
        return Err(Error::Config(format!("hop of {hop} samples is not a whole number")));
    }
    Ok(hop.round() as usize)
}

fn loudness_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let x = load_wav(cfg, required(&cfg.paths.input, "input")?)?;
    let l = loudness(&x, hop_samples(cfg)?, cfg.mel.floor)?;
    let path = required(&cfg.paths.output, "output")?;
    FeatureTensor::from_column(&l.values, l.hop_seconds).write(path)?;
    let mut out = Outcome::default();
    out.wrote(path);
    Ok(out)
}

/// Metric values for `x` against the reference `y`, as a JSON object.
pub fn metric_values(
    cfg: &RunConfig,
    x: &AudioSignal,
    y: &AudioSignal,
    f0: Option<&F0Track>,
) -> Result<Map<String, Value>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "hypothesis has {} samples, reference {}",
            x.len(),
            y.len()
        )));
    }
    let mut requested = cfg.metrics.requested.clone();
    if requested.is_empty() {
        requested = vec!["mr_stft".into(), "mel_mae".into()];
        if f0.is_some() {
            requested.extend(["pitch_jitter".into(), "uv_error_rate".into()]);
        }
    }
    let mut obj = Map::new();
    for name in &requested {
        match name.as_str() {
            "mr_stft" => {
                let l = mr_stft_loss(x, y, &cfg.mr_stft_config())?;
                obj.insert("mr_stft_sc".into(), json!(l.sc));
                obj.insert("mr_stft_mag".into(), json!(l.mag));
                obj.insert("mr_stft_total".into(), json!(l.total));
            }
            "mel_mae" => {
                let mc = cfg.mel_config();
                let v = mel_mae(&mel_spectrogram(x, &mc)?, &mel_spectrogram(y, &mc)?)?;
                obj.insert("mel_mae".into(), json!(v));
            }
            "pitch_jitter" | "uv_error_rate" => {
                let track = f0.ok_or_else(|| Error::Config(format!("metric `{name}` needs an f0 track")))?;
                let v = if name == "pitch_jitter" {
                    pitch_jitter(x, track, &cfg.jitter_config())?.mean_cents
                } else {
                    uv_error_rate(x, track, &cfg.uv_config())?
                };
                let key = if name == "pitch_jitter" { "pitch_jitter_cents" } else { "uv_error_rate" };
                obj.insert(key.into(), json!(v));
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown metric `{other}` (expected mr_stft, mel_mae, pitch_jitter, uv_error_rate)"
                )))
            }
        }
    }
    Ok(obj)
}

fn metrics(cfg: &RunConfig) -> Result<Outcome> {
    let x = load_wav(cfg, required(&cfg.paths.input, "input")?)?;
    let y = load_wav(cfg, required(&cfg.paths.reference, "reference")?)?;
    let track = cfg
        .paths
        .f0
        .as_deref()
        .map(|p| F0Track::read(p, cfg.hop_seconds))
        .transpose()?;
    let line = Value::Object(metric_values(cfg, &x, &y, track.as_ref())?).to_string();
    let mut out = Outcome::default();
    if let Some(path) = cfg.paths.output.as_deref() {
        std::fs::write(path, format!("{line}\n")).map_err(|e| Error::io(path, e))?;
        out.wrote(path);
    }
    out.stdout = Some(line);
    Ok(out)
}

fn export_conditioning(cfg: &RunConfig, parts: ConditioningParts, prefix: &Path, out: &mut Outcome) -> Result<()> {
    let bundle = stack_channels(parts)?;
    out.wrote(export_bundle(&bundle, prefix)?);
    let pyramid = downsample_multiscale(&bundle, &cfg.condition.factors)?;
    out.outputs.extend(export_pyramid(&pyramid, prefix)?);
    Ok(())
}

fn condition(cfg: &RunConfig) -> Result<Outcome> {
    let channels = cfg
        .condition
        .channels
        .iter()
        .map(|c| Channel::from_name(c))
        .collect::<Result<Vec<_>>>()?;
    let wants = |c: Channel| channels.contains(&c);
    let load = |p: &Option<PathBuf>, name: &str| -> Result<AudioSignal> { load_wav(cfg, required(p, name)?) };
    let raw = wants(Channel::RawExcitation).then(|| load(&cfg.paths.raw, "raw")).transpose()?;
    let filtered = wants(Channel::FilteredExcitation)
        .then(|| load(&cfg.paths.filtered, "filtered"))
        .transpose()?;
    let noise = if !wants(Channel::Noise) {
        None
    } else if cfg.paths.noise.is_some() {
        Some(load(&cfg.paths.noise, "noise")?)
    } else {
        let len = raw.as_ref().or(filtered.as_ref()).map(|s| s.len()).ok_or_else(|| {
            Error::Config("generated noise needs a raw or filtered channel to set its length".into())
        })?;
        Some(gaussian_noise(len, cfg.sample_rate, cfg.seed))
    };
    let mut out = Outcome::default();
    let parts = ConditioningParts {
        noise,
        raw_excitation: raw,
        filtered_excitation: filtered,
    };
    export_conditioning(cfg, parts, required(&cfg.paths.output, "output")?, &mut out)?;
    Ok(out)
}

/// Linear pitch glide framed by unvoiced frames.
pub fn demo_track(cfg: &RunConfig) -> Result<F0Track> {
    let d = &cfg.demo;
    let total = (d.duration_seconds / cfg.hop_seconds).round() as usize;
    if total <= 2 * d.unvoiced_frames + 1 {
        return Err(Error::Config(format!(
            "demo of {} s leaves no voiced frames",
            d.duration_seconds
        )));
    }
    let voiced = total - 2 * d.unvoiced_frames;
    let values = (0..total)
        .map(|i| {
            if i < d.unvoiced_frames || i >= d.unvoiced_frames + voiced {
                0.0
            } else {
                let t = (i - d.unvoiced_frames) as f64 / (voiced - 1) as f64;
                d.f0_start + t * (d.f0_end - d.f0_start)
            }
        })
        .collect();
    F0Track::new(values, cfg.hop_seconds)
}

fn demo(cfg: &RunConfig) -> Result<Outcome> {
    let dir = required(&cfg.paths.output, "output")?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Outcome::default();
    let d = &cfg.demo;
    let start = vowel(&d.vowel_start).ok_or_else(|| Error::Config(format!("unknown vowel `{}`", d.vowel_start)))?;
    let end = vowel(&d.vowel_end).ok_or_else(|| Error::Config(format!("unknown vowel `{}`", d.vowel_end)))?;

    let track = demo_track(cfg)?;
    track.write(dir.join("f0.txt"))?;
    out.wrote(dir.join("f0.txt"));
    let excitation = synthesize(cfg, &track)?;
    save_wav(cfg, &dir.join("excitation.wav"), &excitation, &mut out)?;
    let target = formant_filter(&excitation, &start, &end)?;
    save_wav(cfg, &dir.join("target.wav"), &target, &mut out)?;

    let mel = mel_spectrogram(&target, &cfg.mel_config())?;
    FeatureTensor::from_f64(mel.frames(), mel.hop_seconds()).write(dir.join("target_mel.hmx"))?;
    out.wrote(dir.join("target_mel.hmx"));
    let loud = loudness(&target, hop_samples(cfg)?, cfg.mel.floor)?;
    FeatureTensor::from_column(&loud.values, loud.hop_seconds).write(dir.join("target_loudness.hmx"))?;
    out.wrote(dir.join("target_loudness.hmx"));

    let estimated = estimate_coeffs_from_mel(&mel, &cfg.estimator_config())?;
    estimated.write(dir.join("estimated.ltvf"))?;
    out.wrote(dir.join("estimated.ltvf"));
    let filtered_est = apply_ltv(&excitation, &estimated)?;
    save_wav(cfg, &dir.join("filtered_estimated.wav"), &filtered_est, &mut out)?;

    let fitted = fit_coeffs_least_squares(&excitation, &target, &cfg.fit_config())?;
    fitted.write(dir.join("fitted.ltvf"))?;
    out.wrote(dir.join("fitted.ltvf"));
    let filtered_fit = apply_ltv(&excitation, &fitted)?;
    save_wav(cfg, &dir.join("filtered_fitted.wav"), &filtered_fit, &mut out)?;

    let mut lines = String::new();
    for (name, x) in [
        ("excitation", &excitation),
        ("filtered_estimated", &filtered_est),
        ("filtered_fitted", &filtered_fit),
    ] {
        let mut obj = Map::new();
        obj.insert("signal".into(), json!(name));
        obj.extend(metric_values(cfg, x, &target, Some(&track))?);
        lines.push_str(&Value::Object(obj).to_string());
        lines.push('\n');
    }
    let metrics_path = dir.join("metrics.jsonl");
    std::fs::write(&metrics_path, &lines).map_err(|e| Error::io(&metrics_path, e))?;
    out.wrote(&metrics_path);

    let parts = ConditioningParts {
        noise: Some(gaussian_noise(excitation.len(), cfg.sample_rate, cfg.seed)),
        raw_excitation: Some(excitation),
        filtered_excitation: Some(filtered_fit),
    };
    export_conditioning(cfg, parts, &dir.join("cond"), &mut out)?;
    out.stdout = Some(lines.trim_end().to_string());
    Ok(out)
}
