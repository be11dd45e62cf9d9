//! Command-line flags and their merge onto a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use harmex_core::{Error, Result};

use crate::commands::{self, provenance_path, Outcome};
use crate::config::{PhaseMode, RunConfig};
use crate::wav::WavEncoding;

#[derive(Debug, Parser)]
#[command(name = "harmex", version, about = "Harmonic excitation synthesis, LTV filtering and conditioning export")]
pub struct Cli {
    /// TOML config applied before flags (default: $HARMEX_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the resolved config (default: next to the output).
    #[arg(long, global = true)]
    pub save_config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub sample_rate: Option<u32>,
    #[arg(long, global = true)]
    pub hop_seconds: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub encoding: Option<EncodingArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum EncodingArg {
    Pcm16,
    Float32,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PhaseArg {
    Zero,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// f0 text file -> excitation WAV
    Excite(ExciteArgs),
    /// WAV + coefficient file -> filtered WAV
    Filter(FilterArgs),
    /// log-mel tensor -> coefficient file
    Estimate(EstimateArgs),
    /// excitation WAV + target WAV -> coefficient file
    Fit(FitArgs),
    /// WAV -> log-mel tensor
    Mel(MelArgs),
    /// WAV -> log-RMS tensor
    Loudness(IoArgs),
    /// hypothesis + reference WAVs [+ f0] -> one JSON line
    Metrics(MetricsArgs),
    /// WAVs -> conditioning tensors at every scale
    Condition(ConditionArgs),
    /// synthetic vowel walkthrough writing every artifact into a directory
    Demo(DemoArgs),
    /// re-run a saved resolved config
    Replay {
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ExciteArgs {
    #[arg(long)]
    pub f0: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, value_enum)]
    pub phase: Option<PhaseArg>,
    #[arg(long)]
    pub k_max_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub mel: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_taps: Option<usize>,
    #[arg(long)]
    pub floor_db: Option<f64>,
    #[command(flatten)]
    pub mel_opts: MelOpts,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Excitation WAV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_taps: Option<usize>,
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MelOpts {
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long)]
    pub fft_size: Option<usize>,
    #[arg(long)]
    pub win_size: Option<usize>,
    #[arg(long)]
    pub hop_size: Option<usize>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub mel_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MelArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub mel_opts: MelOpts,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Hypothesis WAV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference WAV.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub f0: Option<PathBuf>,
    /// Also write the JSON line to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated: mr_stft, mel_mae, pitch_jitter, uv_error_rate.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[arg(long)]
    pub filtered: Option<PathBuf>,
    /// Comma-separated decimation factors, applied in order.
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<usize>>,
    /// Comma-separated channels: noise, raw, filtered.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub duration_seconds: Option<f64>,
    #[arg(long)]
    pub f0_start: Option<f64>,
    #[arg(long)]
    pub f0_end: Option<f64>,
    #[arg(long)]
    pub vowel_start: Option<String>,
    #[arg(long)]
    pub vowel_end: Option<String>,
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

fn set_path(dst: &mut Option<PathBuf>, src: &Option<PathBuf>) {
    if src.is_some() {
        dst.clone_from(src);
    }
}

impl MelOpts {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.mel;
        set(&mut m.n_mels, &self.n_mels);
        set(&mut m.fft_size, &self.fft_size);
        set(&mut m.win_size, &self.win_size);
        set(&mut m.hop_size, &self.hop_size);
        set(&mut m.f_min, &self.f_min);
        set(&mut m.f_max, &self.f_max);
        set(&mut m.floor, &self.mel_floor);
    }
}

impl Cli {
    /// Config file (or `$HARMEX_CONFIG`) first, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        if let Command::Replay { path } = &self.command {
            let cfg = RunConfig::load(path)?;
            if cfg.command.is_none() {
                return Err(Error::Config(format!("{}: no command recorded", path.display())));
            }
            return Ok(cfg);
        }
        let mut cfg = RunConfig::base(self.config.as_deref())?;
        set(&mut cfg.sample_rate, &self.sample_rate);
        set(&mut cfg.hop_seconds, &self.hop_seconds);
        set(&mut cfg.seed, &self.seed);
        if let Some(e) = self.encoding {
            cfg.encoding = match e {
                EncodingArg::Pcm16 => WavEncoding::Pcm16,
                EncodingArg::Float32 => WavEncoding::Float32,
            };
        }
        let p = &mut cfg.paths;
        let name = match &self.command {
            Command::Excite(a) => {
                set_path(&mut p.f0, &a.f0);
                set_path(&mut p.output, &a.out);
                set(&mut cfg.excitation.amplitude, &a.amplitude);
                if let Some(ph) = a.phase {
                    cfg.excitation.phase = match ph {
                        PhaseArg::Zero => PhaseMode::Zero,
                        PhaseArg::Random => PhaseMode::Random,
                    };
                }
                if a.k_max_cap.is_some() {
                    cfg.excitation.k_max_cap = a.k_max_cap;
                }
                "excite"
            }
            Command::Filter(a) => {
                set_path(&mut p.input, &a.input);
                set_path(&mut p.coeffs, &a.coeffs);
                set_path(&mut p.output, &a.out);
                "filter"
            }
            Command::Estimate(a) => {
                set_path(&mut p.mel, &a.mel);
                set_path(&mut p.output, &a.out);
                set(&mut cfg.estimator.n_taps, &a.n_taps);
                set(&mut cfg.estimator.floor_db, &a.floor_db);
                a.mel_opts.apply(&mut cfg);
                "estimate"
            }
            Command::Fit(a) => {
                set_path(&mut p.input, &a.input);
                set_path(&mut p.target, &a.target);
                set_path(&mut p.output, &a.out);
                set(&mut cfg.fit.n_taps, &a.n_taps);
                set(&mut cfg.fit.ridge_lambda, &a.ridge_lambda);
                "fit"
            }
            Command::Mel(a) => {
                set_path(&mut p.input, &a.io.input);
                set_path(&mut p.output, &a.io.out);
                a.mel_opts.apply(&mut cfg);
                "mel"
            }
            Command::Loudness(a) => {
                set_path(&mut p.input, &a.input);
                set_path(&mut p.output, &a.out);
                "loudness"
            }
            Command::Metrics(a) => {
                set_path(&mut p.input, &a.input);
                set_path(&mut p.reference, &a.reference);
                set_path(&mut p.f0, &a.f0);
                set_path(&mut p.output, &a.out);
                set(&mut cfg.metrics.requested, &a.metrics);
                "metrics"
            }
            Command::Condition(a) => {
                set_path(&mut p.noise, &a.noise);
                set_path(&mut p.raw, &a.raw);
                set_path(&mut p.filtered, &a.filtered);
                set_path(&mut p.output, &a.out_prefix);
                set(&mut cfg.condition.factors, &a.factors);
                set(&mut cfg.condition.channels, &a.channels);
                "condition"
            }
            Command::Demo(a) => {
                set_path(&mut p.output, &a.out_dir);
                let d = &mut cfg.demo;
                set(&mut d.duration_seconds, &a.duration_seconds);
                set(&mut d.f0_start, &a.f0_start);
                set(&mut d.f0_end, &a.f0_end);
                set(&mut d.vowel_start, &a.vowel_start);
                set(&mut d.vowel_end, &a.vowel_end);
                "demo"
            }
            Command::Replay { .. } => unreachable!("handled above"),
        };
        cfg.command = Some(name.to_string());
        Ok(cfg)
    }

    /// Resolves, runs, and records the resolved config for provenance.
    pub fn execute(&self) -> Result<Outcome> {
        let cfg = self.resolve()?;
        let outcome = commands::run(&cfg)?;
        let target = self.save_config.clone().or_else(|| provenance_path(&cfg));
        if let Some(path) = target {
            cfg.save(&path)?;
        }
        Ok(outcome)
    }
}

/// `{"error":{"category":…,"message":…}}`
pub fn error_json(e: &Error) -> String {
    serde_json::json!({"error": {"category": e.category(), "message": e.to_string()}}).to_string()
}
