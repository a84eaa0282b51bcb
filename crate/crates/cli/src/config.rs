//! Pipeline configuration: a TOML file, then `--set key=value` overrides and
//! dedicated flags, checked against the schema in one pass.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use insomnia_eeg::edf_io::Channel;
use insomnia_eeg::features::FeatureConfig;
use insomnia_eeg::model::TrainConfig;
use insomnia_eeg::preprocess::PreprocessConfig;
use insomnia_eeg::select::SelectionConfig;
use insomnia_eeg::synth::CohortConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Which electrode(s) feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSel {
    Fp2,
    C4,
    Both,
}

impl ChannelSel {
    pub fn channels(self) -> Vec<Channel> {
        match self {
            ChannelSel::Fp2 => vec![Channel::Fp2],
            ChannelSel::C4 => vec![Channel::C4],
            ChannelSel::Both => vec![Channel::Fp2, Channel::C4],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ChannelSel::Fp2 => "Fp2",
            ChannelSel::C4 => "C4",
            ChannelSel::Both => "both",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            ChannelSel::Fp2 => 3e-4,
            ChannelSel::C4 | ChannelSel::Both => 2e-4,
        }
    }
}

impl fmt::Display for ChannelSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ChannelSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fp2" => Ok(ChannelSel::Fp2),
            "c4" => Ok(ChannelSel::C4),
            "both" | "fp2+c4" | "c4+fp2" => Ok(ChannelSel::Both),
            other => Err(format!("unknown channel {other:?} (expected fp2, c4 or both)")),
        }
    }
}

/// The `[train]` table. The learning rate falls back to the channel default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub split: f64,
    pub epoch_split: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: None,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            early_stop_patience: d.early_stop_patience,
            split: d.split,
            epoch_split: d.epoch_split,
        }
    }
}

/// The `[synth]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_healthy: usize,
    pub n_insomnia: usize,
    pub duration: f64,
    pub fs: f64,
    /// Profile table to use instead of the bundled one.
    pub profiles: Option<PathBuf>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = CohortConfig::default();
        SynthSection {
            n_healthy: d.n_healthy,
            n_insomnia: d.n_insomnia,
            duration: d.duration,
            fs: d.fs,
            profiles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads for per-subject stages; does not affect results.
    pub jobs: usize,
    pub channel: ChannelSel,
    pub out: PathBuf,
    /// Subject manifest; defaults to the synthetic cohort under `out`.
    pub manifest: Option<PathBuf>,
    pub synth: SynthSection,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    pub train: TrainSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            jobs: 1,
            channel: ChannelSel::Fp2,
            out: PathBuf::from("out"),
            manifest: None,
            synth: SynthSection::default(),
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            selection: SelectionConfig::default(),
            train: TrainSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Builds the configuration from an optional file and `key=value`
    /// overrides (dotted keys address nested tables).
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            set_path(&mut table, key, parse_value(value))?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: insomnia_eeg::Error| CliError::Config(e.to_string());
        self.preprocess.filter.validate(self.preprocess.target_fs).map_err(bad)?;
        self.features.bands.validate().map_err(bad)?;
        self.selection.validate().map_err(bad)?;
        self.train_config().validate().map_err(bad)?;
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if !(self.preprocess.clip_uv > 0.0) {
            return Err(CliError::Config("preprocess.clip_uv must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(self.channel.default_learning_rate()),
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            early_stop_patience: t.early_stop_patience,
            split: t.split,
            seed: self.seed,
            epoch_split: t.epoch_split,
        }
    }

    pub fn cohort_config(&self) -> CohortConfig {
        CohortConfig {
            n_healthy: self.synth.n_healthy,
            n_insomnia: self.synth.n_insomnia,
            duration: self.synth.duration,
            fs: self.synth.fs,
            seed: self.seed,
        }
    }

    /// Hash of every setting that can change an output. Paths and the
    /// thread count are left out, so the same analysis in another directory
    /// or on more cores hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.manifest = None;
        c.jobs = 1;
        let mut value = serde_json::to_value(&c).expect("config serializes");
        if let Some(p) = &self.synth.profiles {
            // the profile file's content matters, not where it lives
            let text = std::fs::read(p).unwrap_or_default();
            value["synth"]["profiles"] = serde_json::Value::String(hex(&Sha256::digest(text)));
        }
        hex(&Sha256::digest(value.to_string().as_bytes()))[..16].to_string()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Interprets an override as a TOML value, or as a bare string if it does
/// not parse as one.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_validate() {
        let c = PipelineConfig::load(None, &[]).unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.train_config().learning_rate, 3e-4);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = PipelineConfig::load(
            None,
            &set(&[
                ("preprocess.filter.order", "4"),
                ("channel", "c4"),
                ("train.max_epochs", "3"),
                ("out", "/tmp/x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.preprocess.filter.order, 4);
        assert_eq!(c.channel, ChannelSel::C4);
        assert_eq!(c.train_config().learning_rate, 2e-4);
        assert_eq!(c.train.max_epochs, 3);
        assert_eq!(c.out, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn schema_violations_are_config_errors() {
        for bad in [("no_such_key", "1"), ("train.max_epochs", "\"ten\""), ("preprocess.filter.lp_cutoff", "90.0"), ("channel", "oz")] {
            let err = PipelineConfig::load(None, &set(&[bad])).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{bad:?} gave {err:?}");
        }
    }

    #[test]
    fn hash_ignores_paths_and_jobs() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        b.jobs = 4;
        b.manifest = Some(PathBuf::from("m.csv"));
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn reads_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 3\n[selection]\nuse_fixed_set = false\n").unwrap();
        let c = PipelineConfig::load(Some(&path), &set(&[("seed", "4")])).unwrap();
        assert_eq!(c.seed, 4);
        assert!(!c.selection.use_fixed_set);
    }
}
