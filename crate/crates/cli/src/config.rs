//! Run configuration: defaults, overlaid by a JSON config file, overlaid
//! by `SCENE2ACT_*` environment variables, overlaid by flags (last wins).

use scene2act::models::Coupling;
use scene2act::neuralcore::{DecodeConfig, ModelConfig};
use scene2act::training::TrainConfig;
use scene2act::worldsim::View;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Environment variable prefix honored by every subcommand (flags take
/// precedence): `SCENE2ACT_CONFIG`, `SCENE2ACT_SEED`, `SCENE2ACT_THREADS`,
/// `SCENE2ACT_DATA`, `SCENE2ACT_OUT`.
pub const ENV_PREFIX: &str = "SCENE2ACT_";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Decode settings used by `rollout` and evaluation decoding.
    pub decode: DecodeConfig,
    /// View the captioner trains on and renders during rollouts.
    pub view: View,
    pub layouts: Vec<u8>,
    pub episodes_per_layout: u32,
    /// Views emitted by `gen-data`.
    pub views: Vec<View>,
    pub split_fractions: [f64; 3],
    pub max_id: u32,
    pub use_task_tokens: bool,
    pub coupling: Coupling,
    pub seed: u64,
    pub threads: usize,
    /// Rollout episode length cap.
    pub max_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            view: View::Auto,
            layouts: (1..=7).collect(),
            episodes_per_layout: 20,
            views: vec![View::Auto, View::FirstPerson, View::FrontPerson],
            split_fractions: [0.8, 0.1, 0.1],
            max_id: 8,
            use_task_tokens: true,
            coupling: Coupling::Text,
            seed: 7,
            threads: 1,
            max_steps: 12,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {} did not parse: {e}", path.display()))?;
        Ok(cfg)
    }

    /// Applies `SCENE2ACT_SEED` / `SCENE2ACT_THREADS` when set.
    pub fn apply_env(&mut self) {
        if let Some(seed) = env_parse::<u64>("SEED") {
            self.seed = seed;
            self.train.seed = seed;
        }
        if let Some(threads) = env_parse::<usize>("THREADS") {
            self.threads = threads;
        }
    }

    /// Writes the fully resolved configuration into the run directory so
    /// the run can be reproduced bit-for-bit.
    pub fn echo_into(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("resolved-config.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn env_var(name: &str) -> Option<String> {
    std::env::var(format!("{ENV_PREFIX}{name}")).ok().filter(|v| !v.is_empty())
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Option<T> {
    env_var(name).and_then(|v| v.parse().ok())
}

/// Parses layout selections like `1-7`, `1,3,5`, or `2`.
pub fn parse_layouts(text: &str) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (u8, u8) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                anyhow::bail!("empty layout range `{part}`");
            }
            out.extend(a..=b);
        } else if !part.is_empty() {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        anyhow::bail!("no layouts in `{text}`");
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Parses a comma-separated view list.
pub fn parse_views(text: &str) -> anyhow::Result<Vec<View>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if !part.is_empty() {
            out.push(part.parse().map_err(|e: String| anyhow::anyhow!(e))?);
        }
    }
    if out.is_empty() {
        anyhow::bail!("no views in `{text}`");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_ranges() {
        assert_eq!(parse_layouts("1-7").unwrap(), vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(parse_layouts("3,1,3").unwrap(), vec![1, 3]);
        assert!(parse_layouts("5-2").is_err());
        assert!(parse_layouts("").is_err());
    }

    #[test]
    fn views_parse() {
        assert_eq!(
            parse_views("auto,first_person").unwrap(),
            vec![View::Auto, View::FirstPerson]
        );
        assert!(parse_views("sideways").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.layouts, cfg.layouts);
    }
}
