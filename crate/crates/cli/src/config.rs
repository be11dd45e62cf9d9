//! Run configuration: TOML file first, command-line flags on top.

use std::path::{Path, PathBuf};

use harmex_core::conditioning::DEFAULT_FACTORS;
use harmex_core::metrics::{JitterConfig, MrStftConfig, UvConfig};
use harmex_core::signal::{ExcitationConfig, PhaseInit};
use harmex_core::spectral::{MelConfig, StftConfig, Window};
use harmex_core::{Error, EstimatorConfig, FitConfig, Result};
use serde::{Deserialize, Serialize};

use crate::wav::{WavEncoding, WavSpec};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "HARMEX_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    #[default]
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationSection {
    pub amplitude: f64,
    pub phase: PhaseMode,
    pub k_max_cap: Option<usize>,
}

impl Default for ExcitationSection {
    fn default() -> Self {
        Self {
            amplitude: ExcitationConfig::default().amplitude,
            phase: PhaseMode::Zero,
            k_max_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelSection {
    pub fft_size: usize,
    pub win_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub floor: f64,
}

impl Default for MelSection {
    fn default() -> Self {
        let m = MelConfig::default();
        Self {
            fft_size: m.stft.fft_size,
            win_size: m.stft.win_size,
            hop_size: m.stft.hop_size,
            n_mels: m.n_mels,
            f_min: m.f_min,
            f_max: m.f_max,
            floor: m.floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub n_taps: usize,
    pub floor_db: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            n_taps: e.n_taps,
            floor_db: e.floor_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub n_taps: usize,
    pub ridge_lambda: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            n_taps: f.n_taps,
            ridge_lambda: f.ridge_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Any of `mr_stft`, `mel_mae`, `pitch_jitter`, `uv_error_rate`.
    pub requested: Vec<String>,
    pub search_cents: f64,
    pub min_correlation: f64,
    pub energy_threshold_db: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let j = JitterConfig::default();
        Self {
            requested: Vec::new(),
            search_cents: j.search_cents,
            min_correlation: j.min_correlation,
            energy_threshold_db: UvConfig::default().energy_threshold_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionSection {
    pub factors: Vec<usize>,
    /// Channels to export, in file order: `noise`, `raw`, `filtered`.
    pub channels: Vec<String>,
}

impl Default for ConditionSection {
    fn default() -> Self {
        Self {
            factors: DEFAULT_FACTORS.to_vec(),
            channels: vec!["noise".into(), "raw".into(), "filtered".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub duration_seconds: f64,
    pub f0_start: f64,
    pub f0_end: f64,
    /// Unvoiced frames before and after the voiced run.
    pub unvoiced_frames: usize,
    pub vowel_start: String,
    pub vowel_end: String,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self {
            duration_seconds: 1.0,
            f0_start: 120.0,
            f0_end: 160.0,
            unvoiced_frames: 5,
            vowel_start: "a".into(),
            vowel_end: "i".into(),
        }
    }
}

/// Input and output paths. Which ones matter depends on the command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub f0: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub coeffs: Option<PathBuf>,
    pub mel: Option<PathBuf>,
    pub noise: Option<PathBuf>,
    pub raw: Option<PathBuf>,
    pub filtered: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub sample_rate: u32,
    pub hop_seconds: f64,
    pub seed: u64,
    pub encoding: WavEncoding,
    pub paths: Paths,
    pub excitation: ExcitationSection,
    pub mel: MelSection,
    pub estimator: EstimatorSection,
    pub fit: FitSection,
    pub metrics: MetricsSection,
    pub condition: ConditionSection,
    pub demo: DemoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            sample_rate: 16_000,
            hop_seconds: 0.01,
            seed: 0,
            encoding: WavEncoding::Float32,
            paths: Paths::default(),
            excitation: ExcitationSection::default(),
            mel: MelSection::default(),
            estimator: EstimatorSection::default(),
            fit: FitSection::default(),
            metrics: MetricsSection::default(),
            condition: ConditionSection::default(),
            demo: DemoSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// The explicit file if given, else `$HARMEX_CONFIG`, else defaults.
    pub fn base(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(PathBuf::from(p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn wav_spec(&self) -> WavSpec {
        WavSpec {
            sample_rate: self.sample_rate,
            encoding: self.encoding,
        }
    }

    pub fn excitation_config(&self) -> ExcitationConfig {
        ExcitationConfig {
            amplitude: self.excitation.amplitude,
            phase_init: match self.excitation.phase {
                PhaseMode::Zero => PhaseInit::Zero,
                PhaseMode::Random => PhaseInit::SeededRandom(self.seed),
            },
            k_max_cap: self.excitation.k_max_cap,
        }
    }

    pub fn mel_config(&self) -> MelConfig {
        let m = &self.mel;
        MelConfig {
            stft: StftConfig {
                fft_size: m.fft_size,
                win_size: m.win_size,
                hop_size: m.hop_size,
                window: Window::Hann,
            },
            n_mels: m.n_mels,
            f_min: m.f_min,
            f_max: m.f_max,
            floor: m.floor,
        }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            n_taps: self.estimator.n_taps,
            floor_db: self.estimator.floor_db,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            n_taps: self.fit.n_taps,
            ridge_lambda: self.fit.ridge_lambda,
            frame_hop_seconds: self.hop_seconds,
        }
    }

    pub fn jitter_config(&self) -> JitterConfig {
        JitterConfig {
            search_cents: self.metrics.search_cents,
            min_correlation: self.metrics.min_correlation,
        }
    }

    pub fn uv_config(&self) -> UvConfig {
        UvConfig {
            energy_threshold_db: self.metrics.energy_threshold_db,
        }
    }

    pub fn mr_stft_config(&self) -> MrStftConfig {
        MrStftConfig::default()
    }

    /// Checks that every section is usable before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.hop_seconds.is_finite() && self.hop_seconds > 0.0) {
            return Err(Error::Config("hop_seconds must be positive".into()));
        }
        self.excitation_config().validate()?;
        self.mel_config().stft.validate()?;
        self.fit_config().validate()?;
        if self.estimator.n_taps == 0 {
            return Err(Error::Config("estimator.n_taps must be at least 1".into()));
        }
        if self.condition.factors.contains(&0) {
            return Err(Error::Config("condition.factors must all be at least 1".into()));
        }
        Ok(())
    }
}
