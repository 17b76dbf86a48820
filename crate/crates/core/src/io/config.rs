//! Versioned JSON run configuration shared by the command-line subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::EMConfig;
use crate::error::{Error, Result};
use crate::eval::systems::{three_node, ReferenceSystem, SweepNetwork};
use crate::eval::{child_seed, estimate_fractional_orders, ComparisonConfig, Method, SweepSpec, DATA_STREAM};
use crate::model::TimeSeriesMatrix;

use super::dataset::load_csv;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub data: DataSpec,
    /// Channels fed to the models; defaults to every channel not hidden.
    #[serde(default)]
    pub observed: Option<Vec<usize>>,
    /// Recorded channels withheld from the models and treated as latent.
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Observed/hidden splits for `compare`; defaults to the single split
    /// above.
    #[serde(default)]
    pub rows: Vec<Split>,
    /// Orders of every recorded channel. Required for CSV data; built-in
    /// systems default to their own orders.
    #[serde(default)]
    pub alpha: Option<AlphaSpec>,
    /// Orders of additional latent nodes with no recorded channel.
    #[serde(default)]
    pub latent_alpha: Vec<f64>,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub em: EMConfig,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_horizon() -> usize {
    5
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_seeds() -> usize {
    1
}
fn default_methods() -> Vec<Method> {
    vec![Method::WithoutLatent, Method::WithLatent]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// A recorded dataset; every seed sees the same record.
    Csv { path: PathBuf },
    /// The three-node reference network, simulated afresh for every seed.
    ThreeNode {
        noise_var: f64,
        initial: [f64; 3],
        len: usize,
    },
    /// The synthetic reveal-sweep network.
    SweepNetwork {
        #[serde(default)]
        network: SweepNetwork,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    #[serde(default)]
    pub observed: Option<Vec<usize>>,
    pub hidden: Vec<usize>,
}

/// Per-channel orders or a request to estimate them from the data.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Values(Vec<f64>),
    Estimate,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Values(Vec<f64>),
    Keyword(String),
}

impl Serialize for AlphaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaSpec::Values(v) => AlphaRepr::Values(v.clone()),
            AlphaSpec::Estimate => AlphaRepr::Keyword("estimate".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AlphaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match AlphaRepr::deserialize(d)? {
            AlphaRepr::Values(v) => Ok(AlphaSpec::Values(v)),
            AlphaRepr::Keyword(k) if k == "estimate" => Ok(AlphaSpec::Estimate),
            AlphaRepr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "alpha must be a list of orders or \"estimate\", got {k:?}"
            ))),
        }
    }
}

/// Data resolved from a [`DataSpec`].
#[derive(Debug, Clone)]
pub enum Dataset {
    Recorded(TimeSeriesMatrix<f64>),
    Simulated { system: ReferenceSystem<f64>, len: usize },
}

impl Dataset {
    pub fn channels(&self) -> usize {
        match self {
            Dataset::Recorded(r) => r.channels(),
            Dataset::Simulated { system, .. } => system.channels(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Dataset::Recorded(r) => (0..r.channels()).map(|c| r.label(c)).collect(),
            Dataset::Simulated { system, .. } => (1..=system.channels()).map(|i| i.to_string()).collect(),
        }
    }

    /// The record generated from `seed` (recorded data ignores it).
    pub fn record(&self, seed: u64) -> Result<TimeSeriesMatrix<f64>> {
        match self {
            Dataset::Recorded(r) => Ok(r.clone()),
            Dataset::Simulated { system, len } => system.simulate(*len, seed),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Format(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.comparison().validate()?;
        match &self.data {
            DataSpec::ThreeNode { noise_var, len, .. } if !(*noise_var >= 0.0) || *len < 2 => {
                Err(Error::InvalidArgument("three_node needs noise_var ≥ 0 and len ≥ 2".into()))
            }
            DataSpec::SweepNetwork { network, len } if network.fixed == 0 || *len < 2 => {
                Err(Error::InvalidArgument("sweep_network needs fixed ≥ 1 and len ≥ 2".into()))
            }
            DataSpec::Csv { .. } if self.alpha.is_none() => {
                Err(Error::InvalidArgument("CSV data needs `alpha` (a list or \"estimate\")".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn comparison(&self) -> ComparisonConfig {
        ComparisonConfig {
            em: self.em.clone(),
            p: self.p,
            horizon: self.horizon,
            train_fraction: self.train_fraction,
            n_seeds: self.seeds,
            seed: self.seed,
            methods: self.methods.clone(),
            baseline_rounds: ComparisonConfig::default().baseline_rounds,
        }
    }

    /// Resolve the data source. Relative paths are taken from `base`.
    pub fn dataset(&self, base: &Path) -> Result<Dataset> {
        Ok(match &self.data {
            DataSpec::Csv { path } => Dataset::Recorded(load_csv(base.join(path))?),
            DataSpec::ThreeNode { noise_var, initial, len } => Dataset::Simulated {
                system: three_node(*noise_var, *initial),
                len: *len,
            },
            DataSpec::SweepNetwork { network, len } => Dataset::Simulated {
                system: network.build(),
                len: *len,
            },
        })
    }

    /// Orders of every recorded channel.
    pub fn channel_orders(&self, data: &Dataset) -> Result<Vec<f64>> {
        let orders = match (&self.alpha, data) {
            (Some(AlphaSpec::Values(v)), _) => v.clone(),
            (None, Dataset::Simulated { system, .. }) => system.alpha.clone(),
            (None, Dataset::Recorded(_)) => {
                return Err(Error::InvalidArgument("recorded data needs `alpha`".into()))
            }
            (Some(AlphaSpec::Estimate), _) => {
                let record = data.record(child_seed(self.seed, 0, DATA_STREAM))?;
                estimate_fractional_orders(&record)?.iter().map(|e| e.order).collect()
            }
        };
        if orders.len() != data.channels() {
            return Err(Error::dims("alpha", data.channels(), orders.len()));
        }
        Ok(orders)
    }

    /// The configured splits, each resolved and checked against
    /// `channels`.
    pub fn splits(&self, channels: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let rows = if self.rows.is_empty() {
            vec![Split {
                observed: self.observed.clone(),
                hidden: self.hidden.clone(),
            }]
        } else {
            self.rows.clone()
        };
        rows.iter().map(|s| resolve_split(s, channels)).collect()
    }
}

fn resolve_split(split: &Split, channels: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let observed = split
        .observed
        .clone()
        .unwrap_or_else(|| (0..channels).filter(|c| !split.hidden.contains(c)).collect());
    let mut seen = vec![false; channels];
    for &c in observed.iter().chain(&split.hidden) {
        if c >= channels {
            return Err(Error::InvalidArgument(format!(
                "channel {c} does not exist (the data has {channels})"
            )));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::InvalidArgument(format!("channel {c} is listed twice")));
        }
    }
    if observed.is_empty() {
        return Err(Error::InvalidArgument("no observed channels".into()));
    }
    Ok((observed, split.hidden.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_and_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"version": 1, "data": {"kind": "three_node", "noise_var": 0.001, "initial": [1, 2, 0], "len": 50},
                "hidden": [2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.horizon, 5);
        let data = cfg.dataset(Path::new(".")).unwrap();
        assert_eq!(cfg.splits(data.channels()).unwrap(), vec![(vec![0, 1], vec![2])]);
        assert_eq!(cfg.channel_orders(&data).unwrap(), vec![0.7, 1.1, 0.8]);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let base = r#""data": {"kind": "three_node", "noise_var": 0.001, "initial": [1, 2, 0], "len": 50}"#;
        assert!(RunConfig::from_json(&format!(r#"{{"version": 1, {base}, "hiden": [2]}}"#)).is_err());
        assert!(RunConfig::from_json(&format!(r#"{{"version": 2, {base}}}"#)).is_err());
        assert!(RunConfig::from_json(&format!(r#"{{"version": 1, {base}, "em": {{"max_iters": 3}}}}"#)).is_err());
    }

    #[test]
    fn alpha_spec_forms() {
        let v: AlphaSpec = serde_json::from_str("[0.5, 1.0]").unwrap();
        assert_eq!(v, AlphaSpec::Values(vec![0.5, 1.0]));
        let e: AlphaSpec = serde_json::from_str("\"estimate\"").unwrap();
        assert_eq!(e, AlphaSpec::Estimate);
        assert!(serde_json::from_str::<AlphaSpec>("\"guess\"").is_err());
    }

    #[test]
    fn split_errors() {
        let s = Split {
            observed: Some(vec![0, 1]),
            hidden: vec![1],
        };
        assert!(resolve_split(&s, 3).is_err());
        let s = Split {
            observed: None,
            hidden: vec![5],
        };
        assert!(resolve_split(&s, 3).is_err());
    }
}
