//! Layered configuration: built-in defaults, then the JSON config file,
//! then flags given on the command line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wincel_core::dataset::Split;
use wincel_core::losses::PadMode;
use wincel_core::simmap::RasterFormat;
use wincel_core::synth::SynthConfig;
use wincel_core::train::{ProbeConfig, TrainConfig};
use wincel_datapipe::PipelineConfig;

use crate::failure::{CmdResult, Failure};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub provider: String,
    pub text_dim: usize,
    pub pseudo_seed: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            provider: "pseudo".into(),
            text_dim: 64,
            pseudo_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub template: String,
    pub split: Split,
    pub probe: ProbeConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            template: String::new(),
            split: Split::Test,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    pub batches: usize,
    pub n: usize,
    pub k: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub step: f64,
    pub tolerance: f64,
    pub pad_mode: PadMode,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            batches: 10,
            n: 6,
            k: 4,
            d_in: 6,
            d_out: 8,
            step: 1e-5,
            tolerance: 1e-6,
            pad_mode: PadMode::Masked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimmapSettings {
    pub format: RasterFormat,
}

impl Default for SimmapSettings {
    fn default() -> Self {
        SimmapSettings {
            format: RasterFormat::Pgm,
        }
    }
}

/// Contents of the `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub provider: Option<String>,
    pub text_dim: Option<usize>,
    pub pseudo_seed: Option<u64>,
    pub build_dataset: PipelineConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub gradcheck: GradcheckSettings,
    pub simmap: SimmapSettings,
}

impl FileConfig {
    pub fn provider_settings(&self) -> ProviderSettings {
        let mut p = ProviderSettings::default();
        set(&mut p.provider, self.provider.clone());
        set(&mut p.text_dim, self.text_dim);
        set(&mut p.pseudo_seed, self.pseudo_seed);
        p
    }
}

pub fn load(path: Option<&Path>) -> CmdResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("invalid config {}: {e}", path.display())))
}

/// Overwrites `slot` with `value` when the flag was given.
pub fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Serialize)]
struct Effective<'a, S: Serialize, I: Serialize> {
    command: &'a str,
    inputs: I,
    settings: S,
}

/// Records the settings a command actually ran with.
pub fn write_effective<S: Serialize, I: Serialize>(out: &Path, command: &str, inputs: I, settings: S) -> CmdResult {
    let json = serde_json::to_string_pretty(&Effective { command, inputs, settings }).map_err(anyhow::Error::from)?;
    let path = out.join(EFFECTIVE_CONFIG);
    fs::write(&path, json + "\n").map_err(|e| Failure::Runtime(anyhow::anyhow!("{}: {e}", path.display())))
}

pub fn output_dir(out: Option<&PathBuf>) -> CmdResult<PathBuf> {
    let dir = out.ok_or_else(|| Failure::validation("--out is required"))?;
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(anyhow::anyhow!("{}: {e}", dir.display())))?;
    Ok(dir.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_are_optional_and_strict() {
        let c: FileConfig = serde_json::from_str(r#"{"seed":3,"provider":"file:x.eemb","train":{"lr":0.5}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.provider_settings().provider, "file:x.eemb");
        assert_eq!(c.provider_settings().text_dim, 64);
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.train.epochs, TrainConfig::default().epochs);
        assert!(serde_json::from_str::<FileConfig>(r#"{"train":{"learning_rate":1}}"#).is_err());
    }

    #[test]
    fn flags_override() {
        let mut v = 1;
        set(&mut v, None);
        assert_eq!(v, 1);
        set(&mut v, Some(5));
        assert_eq!(v, 5);
    }
}
