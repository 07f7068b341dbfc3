use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pcc::estimate::FitConfig;
use pcc::family::CopulaFamily;
use pcc::risk::DistressConfig;
use pcc::taildep::Tail;

use crate::error::{config_err, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Subset of data columns, by header name.
    pub columns: Option<Vec<String>>,
    /// Treat the input of `filter` as price levels and difference their logs.
    pub prices: bool,
    pub family: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub fit: FitConfig,
    pub risk: DistressConfig,
    pub cpjqe: CpjqeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            columns: None,
            prices: false,
            family: "skew-t1-td-1".into(),
            seed: 42,
            out_dir: PathBuf::from("."),
            fit: FitConfig::default(),
            risk: DistressConfig::default(),
            cpjqe: CpjqeConfig::default(),
        }
    }
}

/// Quantile grid and simulation size for pairwise joint-exceedance curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CpjqeConfig {
    pub q_grid: Vec<f64>,
    pub tail: Tail,
    pub n_sim: usize,
}

impl Default for CpjqeConfig {
    fn default() -> Self {
        Self { q_grid: (1..=20).map(|i| i as f64 * 0.025).collect(), tail: Tail::Lower, n_sim: 200_000 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: RunConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn family(&self) -> CliResult<CopulaFamily> {
        self.family.parse().map_err(|_| {
            config_err(format!(
                "unknown copula family '{}' (expected gauss, t, skew-t, hb-n, skew-t1-t1, skew-t1-td-1 or hb-hb-n)",
                self.family
            ))
        })
    }
}
