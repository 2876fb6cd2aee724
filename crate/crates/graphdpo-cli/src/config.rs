//! Optional defaults file: a flat TOML document whose keys mirror the CLI
//! flags (dashes become underscores). Precedence is strict: an explicit
//! flag beats the file, the file beats the built-in default.
//!
//! The file's location comes from the `GRAPHDPO_CONFIG` environment
//! variable; when it is unset nothing is read. Unknown keys are rejected
//! rather than ignored so a typo cannot silently fall back to a default.

use std::env;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::report::OutputFormat;

/// Environment variable naming the defaults file.
pub const CONFIG_ENV: &str = "GRAPHDPO_CONFIG";

/// Every overridable setting, all optional; commands read the keys they
/// understand and ignore the rest.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // scoring
    pub beta: Option<f64>,
    pub tie_tolerance: Option<f64>,
    // loss weighting
    pub lambda_gt: Option<f64>,
    pub lambda_kl: Option<f64>,
    pub step: Option<u64>,
    pub total_steps: Option<u64>,
    // gradient checking
    pub h: Option<f64>,
    // ingestion and output
    pub skip_invalid: Option<bool>,
    pub format: Option<OutputFormat>,
    // synthetic task shape
    pub prompts: Option<usize>,
    pub responses: Option<usize>,
    pub levels: Option<usize>,
    pub noise: Option<f64>,
    // training
    pub objective: Option<String>,
    pub rollouts: Option<usize>,
    pub temperature: Option<f64>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub peak_lr: Option<f64>,
    pub gt_init: Option<f64>,
    pub gt_final: Option<f64>,
    pub kl_peak: Option<f64>,
    pub eval_every: Option<usize>,
    pub seed: Option<u64>,
    // benchmarking and sweeps
    pub k_max: Option<usize>,
    pub grid: Option<Vec<f64>>,
}

/// Parses the document; split out from [`load_from_env`] so tests can feed
/// literals without touching process state.
pub fn parse(text: &str) -> Result<FileConfig> {
    Ok(toml::from_str(text)?)
}

/// Reads the file named by [`CONFIG_ENV`], or returns empty defaults when
/// the variable is unset.
pub fn load_from_env() -> Result<FileConfig> {
    let Some(raw) = env::var_os(CONFIG_ENV) else {
        return Ok(FileConfig::default());
    };
    let path = PathBuf::from(raw);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("cannot read config file {} ({CONFIG_ENV})", path.display()))?;
    let config =
        parse(&text).with_context(|| format!("config file {}", path.display()))?;
    log::debug!("defaults loaded from {}", path.display());
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn an_empty_document_leaves_every_key_unset() {
        let config = parse("").unwrap();
        assert!(config.beta.is_none());
        assert!(config.grid.is_none());
        assert!(config.format.is_none());
    }

    #[test]
    fn keys_mirror_the_flags() {
        let config = parse(
            "beta = 2.0\n\
             tie_tolerance = 0.25\n\
             lambda_gt = 1.5\n\
             format = \"csv\"\n\
             skip_invalid = true\n\
             objective = \"graphdpo+gt\"\n\
             grid = [0.0, 2.5, 8.0]\n\
             seed = 7\n",
        )
        .unwrap();
        assert_eq!(config.beta, Some(2.0));
        assert_eq!(config.tie_tolerance, Some(0.25));
        assert_eq!(config.lambda_gt, Some(1.5));
        assert_eq!(config.format, Some(OutputFormat::Csv));
        assert_eq!(config.skip_invalid, Some(true));
        assert_eq!(config.objective.as_deref(), Some("graphdpo+gt"));
        assert_eq!(config.grid, Some(vec![0.0, 2.5, 8.0]));
        assert_eq!(config.seed, Some(7));
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = parse("betta = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("betta"), "error was: {err}");
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(parse("beta = \"high\"\n").is_err());
        assert!(parse("format = \"xml\"\n").is_err());
    }
}
