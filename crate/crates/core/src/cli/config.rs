//! Run configuration: one TOML file, optionally overridden by `key=value`
//! pairs from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DataConfig, StateSpec};
use crate::engine::LeafParams;
use crate::error::{Error, Result};
use crate::evaluation::LossKind;
use crate::forest::{BootstrapPlan, Resample};
use crate::score::Family;
use crate::tree::GrowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gas,
    Tree,
    /// Tree that may only split on the lagged dependent variable(s).
    SmallTree,
    Forest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowSettings {
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_min_improvement")]
    pub min_improvement: f64,
}

fn default_min_leaf() -> usize {
    100
}
fn default_min_improvement() -> f64 {
    1e-6
}

impl Default for GrowSettings {
    fn default() -> Self {
        Self {
            min_leaf: default_min_leaf(),
            min_improvement: default_min_improvement(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSettings {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_block")]
    pub block_length: usize,
    #[serde(default = "default_fraction")]
    pub feature_fraction: f64,
    #[serde(default = "default_resample")]
    pub resample: Resample,
}

fn default_trees() -> usize {
    200
}
fn default_block() -> usize {
    100
}
fn default_fraction() -> f64 {
    1.0 / 3.0
}
fn default_resample() -> Resample {
    Resample::CircularBlock
}

impl Default for ForestSettings {
    fn default() -> Self {
        Self {
            n_trees: default_trees(),
            block_length: default_block(),
            feature_fraction: default_fraction(),
            resample: default_resample(),
        }
    }
}

/// Parameters of `simulate`. One leaf gives a plain GAS path; two leaves
/// switch on `split_variable <= threshold` (leaf 0) versus above (leaf 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_phi")]
    pub phi: f64,
    /// (ω, β, α) per leaf.
    pub leaves: Vec<[f64; 3]>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub split_variable: Option<String>,
    #[serde(default)]
    pub threshold: f64,
}

fn default_k() -> usize {
    3
}
fn default_phi() -> f64 {
    0.5
}

impl SimulateConfig {
    pub fn leaf_params(&self) -> Vec<LeafParams> {
        self.leaves.iter().map(|l| LeafParams::new(l[0], l[1], l[2])).collect()
    }
}

fn default_m_grid() -> Vec<usize> {
    (0..=6).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Defaults to QLIKE when a proxy column is configured for a scale
    /// family, and to the negative log likelihood otherwise.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    /// Skips depth tuning when set.
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub grow: GrowSettings,
    #[serde(default)]
    pub forest: ForestSettings,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

fn default_variant() -> Variant {
    Variant::Gas
}

impl RunConfig {
    /// Reads `path` and applies `overrides` (dotted keys, TOML values; bare
    /// words are taken as strings). A relative data path is resolved against
    /// the directory of the config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let Some(d) = cfg.data.as_mut() {
            let p = PathBuf::from(&d.path);
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                d.path = base.join(p).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.m_grid.iter().any(|&m| m > 6) {
            return Err(Error::Config("m_grid entries must lie in 0..=6".into()));
        }
        if let Some(m) = self.max_depth {
            if m > 6 {
                return Err(Error::Config(format!("max_depth {m} outside 0..=6")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.plan().validate()
    }

    pub fn data(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [data] section".into()))
    }

    pub fn loss(&self) -> LossKind {
        self.loss.unwrap_or_else(|| {
            let scale = matches!(self.family, Family::NormalScale | Family::StudentTScale);
            if scale && self.data.as_ref().is_some_and(|d| d.proxy.is_some()) {
                LossKind::Qlike
            } else {
                LossKind::Nll
            }
        })
    }

    pub fn plan(&self) -> BootstrapPlan {
        BootstrapPlan {
            block_length: self.forest.block_length,
            n_trees: self.forest.n_trees,
            feature_fraction: self.forest.feature_fraction,
            master_seed: self.seed,
            resample: self.forest.resample,
        }
    }

    pub fn grow_config(&self, max_depth: usize) -> GrowConfig {
        GrowConfig {
            max_depth,
            min_leaf: self.grow.min_leaf,
            min_improvement: self.grow.min_improvement,
            ..GrowConfig::default()
        }
    }

    /// Data configuration with one lagged copy of every dependent column
    /// appended (named `lag_<col>`), so all variants share one dataset.
    pub fn dataset_config(&self) -> Result<DataConfig> {
        let mut d = self.data()?.clone();
        for col in self.data()?.y.iter() {
            let name = lag_name(col);
            if !d.state.iter().any(|s| s.name == name) {
                d.state.push(StateSpec {
                    name,
                    source: Some(col.clone()),
                    transforms: Vec::new(),
                });
            }
        }
        Ok(d)
    }

    /// State variables a variant may split on.
    pub fn state_names(&self) -> Result<Vec<String>> {
        let d = self.data()?;
        Ok(match self.variant {
            Variant::Gas => Vec::new(),
            Variant::SmallTree => d.y.iter().map(|c| lag_name(c)).collect(),
            Variant::Tree | Variant::Forest => d.state.iter().map(|s| s.name.clone()).collect(),
        })
    }
}

/// Name of the automatically added one-period lag of a dependent column.
pub fn lag_name(col: &str) -> String {
    format!("lag_{col}")
}

fn apply_override(table: &mut toml::Table, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    toml::from_str::<toml::Table>(&doc)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
family = "normal_scale"
variant = "tree"
seed = 7

[data]
path = "d.csv"
y = ["r"]
proxy = "rv"

[[data.state]]
name = "Z1"
source = "z1"
"#;

    #[test]
    fn parse_and_override() {
        let c = RunConfig::parse(BASE, &[]).unwrap();
        assert_eq!(c.variant, Variant::Tree);
        assert_eq!(c.loss(), LossKind::Qlike);
        assert_eq!(c.m_grid, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(c.plan().n_trees, 200);
        let c = RunConfig::parse(
            BASE,
            &["forest.n_trees=4".into(), "variant=forest".into(), "loss=nll".into()],
        )
        .unwrap();
        assert_eq!(c.plan().n_trees, 4);
        assert_eq!(c.variant, Variant::Forest);
        assert_eq!(c.loss(), LossKind::Nll);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse(BASE, &["nonsense".into()]).is_err());
        assert!(RunConfig::parse(BASE, &["m_grid=[1, 7]".into()]).is_err());
        assert!(RunConfig::parse(&format!("{BASE}\nunknown_key = 1\n"), &[]).is_err());
    }

    #[test]
    fn small_tree_uses_lagged_dependent() {
        let c = RunConfig::parse(BASE, &["variant=small_tree".into()]).unwrap();
        assert_eq!(c.state_names().unwrap(), vec!["lag_r".to_string()]);
        let d = c.dataset_config().unwrap();
        assert_eq!(d.state.len(), 2);
        assert_eq!(d.state[1].source.as_deref(), Some("r"));
    }
}
