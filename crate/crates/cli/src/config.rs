//! Run configuration: a TOML file with one table per concern. Every table
//! and key is optional and falls back to the library defaults; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use ampf_core::data::{load_csv, make_gaussian_openset};
use ampf_core::nets::LrSchedule;
use ampf_core::training::AdamSettings;
use ampf_core::{GaussianSpec, HyperParams, LabeledSet, OpenSplit, SeededRng, Strategy, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable overriding the output directory of every command.
pub const OUT_DIR_ENV: &str = "AMPF_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub strategy: String,
    pub data: DataSource,
    pub train: TrainSection,
    pub hyper: HyperSection,
    pub schedule: ScheduleSection,
    pub adam: AdamSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            strategy: Strategy::AmpfPlusPlus.to_string(),
            data: DataSource::default(),
            train: TrainSection::default(),
            hyper: HyperSection::default(),
            schedule: ScheduleSection::default(),
            adam: AdamSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSection),
    Csv(CsvSection),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSection::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub known: usize,
    pub unknown: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub std: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let g = GaussianSpec::default();
        SyntheticSection {
            known: g.known,
            unknown: g.unknown,
            dim: g.dim,
            per_class: g.per_class,
            separation: g.separation,
            std: g.std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSection {
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub max_epoch: usize,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches_per_epoch: Option<usize>,
    pub momentum: f64,
    pub feature_dim: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    pub proto_std: f64,
    pub g2_phase: bool,
    pub standardize: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            max_epoch: t.max_epoch,
            batch_size: t.batch_size,
            batches_per_epoch: t.batches_per_epoch,
            momentum: t.momentum,
            feature_dim: t.feature_dim,
            hidden: t.hidden,
            latent_dim: t.latent_dim,
            proto_std: t.proto_std,
            g2_phase: t.g2_phase,
            standardize: t.standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSection {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for HyperSection {
    fn default() -> Self {
        let h = HyperParams::default();
        HyperSection {
            lambda: h.lambda,
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub initial: f64,
    pub factor: f64,
    pub period: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = LrSchedule::default();
        ScheduleSection {
            initial: s.initial,
            factor: s.factor,
            period: s.period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamSettings::default();
        AdamSection {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Score the test split after training.
    pub evaluate: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs"),
            evaluate: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Relative CSV paths are taken from the config file's directory.
        if let DataSource::Csv(c) = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new(""));
            c.train = base.join(&c.train);
            c.test = c.test.as_ref().map(|t| base.join(t));
        }
        Ok(cfg)
    }

    pub fn strategy(&self) -> Result<Strategy, CliError> {
        self.strategy.parse().map_err(CliError::Config)
    }

    /// The library configuration, validated in full.
    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let cfg = TrainConfig {
            strategy: self.strategy()?,
            max_epoch: t.max_epoch,
            batch_size: t.batch_size,
            batches_per_epoch: t.batches_per_epoch,
            hyper: HyperParams {
                lambda: self.hyper.lambda,
                alpha: self.hyper.alpha,
                beta: self.hyper.beta,
                gamma: self.hyper.gamma,
            },
            schedule: LrSchedule {
                initial: self.schedule.initial,
                factor: self.schedule.factor,
                period: self.schedule.period,
            },
            momentum: t.momentum,
            adam: AdamSettings {
                lr: self.adam.lr,
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
            },
            feature_dim: t.feature_dim,
            hidden: t.hidden,
            latent_dim: t.latent_dim,
            proto_std: t.proto_std,
            seed: self.seed,
            g2_phase: t.g2_phase,
            standardize: t.standardize,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.hyper
            .validate()
            .map_err(|e| CliError::Config(format!("hyper: {e}")))?;
        self.validate_data()?;
        Ok(cfg)
    }

    fn validate_data(&self) -> Result<(), CliError> {
        match &self.data {
            DataSource::Synthetic(s) => {
                if s.known < 2 || s.unknown < 1 || s.dim < 1 || s.per_class < 5 {
                    return Err(CliError::Config(
                        "data: synthetic needs known ≥ 2, unknown ≥ 1, dim ≥ 1 and per_class ≥ 5".into(),
                    ));
                }
                if !(s.separation > 0.0 && s.separation.is_finite() && s.std > 0.0 && s.std.is_finite()) {
                    return Err(CliError::Config("data: separation and std must be positive".into()));
                }
            }
            DataSource::Csv(c) => {
                if c.classes < 2 {
                    return Err(CliError::Config("data: csv needs classes ≥ 2".into()));
                }
            }
        }
        Ok(())
    }

    /// Training rows plus the test rows, when the source has any.
    pub fn load_data(&self) -> Result<(LabeledSet, Option<LabeledSet>), CliError> {
        match &self.data {
            DataSource::Synthetic(_) => {
                let split = self.synthetic_split()?;
                Ok((split.train.clone(), Some(split.test())))
            }
            DataSource::Csv(c) => {
                let train = load_csv(&c.train, c.classes).map_err(|e| CliError::Runtime(e.to_string()))?;
                let test = match &c.test {
                    Some(p) => Some(load_csv(p, c.classes).map_err(|e| CliError::Runtime(e.to_string()))?),
                    None => None,
                };
                Ok((train, test))
            }
        }
    }

    fn synthetic_split(&self) -> Result<OpenSplit, CliError> {
        let DataSource::Synthetic(s) = &self.data else {
            unreachable!("called for synthetic sources only")
        };
        let spec = GaussianSpec {
            known: s.known,
            unknown: s.unknown,
            dim: s.dim,
            per_class: s.per_class,
            separation: s.separation,
            std: s.std,
        };
        make_gaussian_openset(&mut SeededRng::new(self.seed), &spec).map_err(|e| CliError::Config(format!("data: {e}")))
    }
}

/// `--out`, then the environment, then the config (or `fallback`).
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&RunConfig>, fallback: &Path) -> PathBuf {
    if let Some(f) = flag {
        return f.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    config.map_or_else(|| fallback.to_path_buf(), |c| c.output.dir.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(cfg.train_config().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[hyper]\nlamda = 0.1").is_err());
        assert!(toml::from_str::<RunConfig>("[data]\nsource = \"synthetic\"\nknwn = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[data]\nsource = \"parquet\"").is_err());
    }

    #[test]
    fn csv_source_parses() {
        let cfg: RunConfig = toml::from_str("[data]\nsource = \"csv\"\ntrain = \"a.csv\"\nclasses = 3").unwrap();
        assert!(matches!(cfg.data, DataSource::Csv(ref c) if c.classes == 3 && c.test.is_none()));
    }

    #[test]
    fn margin_weight_outside_unit_interval_is_rejected() {
        let cfg: RunConfig = toml::from_str("[hyper]\nlambda = 1.5").unwrap();
        assert!(matches!(cfg.train_config(), Err(CliError::Config(_))));
    }

    #[test]
    fn strategy_names() {
        for (s, want) in [
            ("mpf", Strategy::Mpf),
            ("ampf", Strategy::Ampf),
            ("ampfpp", Strategy::AmpfPlusPlus),
        ] {
            let cfg = RunConfig {
                strategy: s.into(),
                ..RunConfig::default()
            };
            assert_eq!(cfg.strategy().unwrap(), want);
        }
        let bad = RunConfig {
            strategy: "gan".into(),
            ..RunConfig::default()
        };
        assert!(bad.train_config().is_err());
    }

    #[test]
    fn flag_beats_config() {
        let cfg = RunConfig::default();
        let out = resolve_out_dir(Some(Path::new("x")), Some(&cfg), Path::new("y"));
        assert_eq!(out, PathBuf::from("x"));
    }
}
