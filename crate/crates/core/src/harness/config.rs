use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sweep::SweepSpec;
use crate::error::{Result, TcsError};
use crate::ndgrad::AdamConfig;
use crate::simgen::ScenarioConfig;
use crate::tcsnet::{PropensityConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Laptop scale: N = 500, 5 replicates, 5 members, small networks.
    Desk,
    /// Full scale: N = 1500, 50 replicates, 20 members.
    Paper,
}

impl FromStr for Preset {
    type Err = TcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(TcsError::Usage(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }
}

/// A model family requested on the command line. The network families
/// report raw, IPW and TMLE rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Tcs,
    Snn,
    Binary,
    Km,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Tcs, Estimator::Snn, Estimator::Binary, Estimator::Km];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Tcs => "tcs",
            Estimator::Snn => "snn",
            Estimator::Binary => "binary",
            Estimator::Km => "km",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = TcsError;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| TcsError::Usage(format!("unknown estimator {s:?} (expected tcs, snn, binary or km)")))
    }
}

/// Parse a comma-separated estimator list, dropping duplicates.
pub fn parse_estimators(list: &str) -> Result<Vec<Estimator>> {
    let mut out: Vec<Estimator> = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let e: Estimator = part.parse()?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    if out.is_empty() {
        return Err(TcsError::Usage("empty estimator list".into()));
    }
    Ok(out)
}

/// Everything needed to replay a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub estimators: Vec<Estimator>,
    pub sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Desk)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (scenario, train) = match preset {
            Preset::Desk => {
                let fast = AdamConfig {
                    lr: 5e-3,
                    ..AdamConfig::default()
                };
                (
                    ScenarioConfig {
                        n: 500,
                        replicates: 5,
                        ..ScenarioConfig::default()
                    },
                    TrainConfig {
                        members: 5,
                        epochs: 40,
                        batch_size: 32,
                        hidden: 16,
                        head_hidden: 8,
                        adam: fast,
                        propensity: PropensityConfig {
                            hidden: 8,
                            epochs: 15,
                            batch_size: 32,
                            adam: fast,
                        },
                        ..TrainConfig::default()
                    },
                )
            }
            Preset::Paper => (
                ScenarioConfig::default(),
                TrainConfig {
                    members: 20,
                    epochs: 100,
                    ..TrainConfig::default()
                },
            ),
        };
        RunConfig {
            name: "default".to_string(),
            preset,
            scenario,
            train,
            estimators: vec![Estimator::Tcs, Estimator::Snn, Estimator::Binary, Estimator::Km],
            sweep: SweepSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '\n', '"']) {
            return Err(TcsError::Config(format!("invalid scenario name {:?}", self.name)));
        }
        if self.estimators.is_empty() {
            return Err(TcsError::Config("no estimators selected".into()));
        }
        self.scenario.validate()?;
        self.train.validate()?;
        self.sweep.expand(&self.name, &self.scenario).map(|_| ())
    }

    /// Read a run configuration, accepting either a bare configuration or a
    /// `config.json` written by a previous run.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Record { run: Box<RunConfig> },
            Bare(Box<RunConfig>),
        }
        let file = File::open(path).map_err(|e| TcsError::io(path, e))?;
        let parsed: Either = serde_json::from_reader(file).map_err(|e| TcsError::format(path, e))?;
        let cfg = match parsed {
            Either::Record { run } | Either::Bare(run) => *run,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::preset(Preset::Desk).validate().unwrap();
        RunConfig::preset(Preset::Paper).validate().unwrap();
        assert_eq!(RunConfig::preset(Preset::Desk).scenario.n, 500);
        assert_eq!(RunConfig::preset(Preset::Paper).train.members, 20);
    }

    #[test]
    fn estimator_lists() {
        assert_eq!(
            parse_estimators("tcs, km,tcs").unwrap(),
            vec![Estimator::Tcs, Estimator::Km]
        );
        assert!(parse_estimators("tcs,cox").is_err());
        assert!(parse_estimators(" ").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"name": "x", "bogus": 1}"#);
        assert!(err.is_err());
    }
}
