//! Pipeline configuration: a JSON document whose every field can be
//! overridden by a long-form flag of the same name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tailcal::{FileFormat, Strategy};

use crate::CliFailure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub zeta: u64,
    pub alpha: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub strategy: Strategy,
    pub bins: usize,
    pub ranges: usize,
    pub tmin: f64,
    pub tmax: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: FileFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: None,
            val: None,
            test: None,
            zeta: 100,
            alpha: 0.998,
            eta1: 0.3,
            eta2: 5.0,
            strategy: Strategy::Attention,
            bins: 15,
            ranges: 15,
            tmin: 0.05,
            tmax: 20.0,
            seed: 0,
            out: PathBuf::from("out"),
            format: FileFormat::Binary,
        }
    }
}

/// Long-form overrides shared by every subcommand; names match the config
/// fields one for one.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonOpts {
    /// Path to a JSON pipeline config; flags below override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Training-split manifest.
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    /// Validation-split manifest.
    #[arg(long, global = true)]
    pub val: Option<PathBuf>,
    /// Test-split manifest.
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Head/tail count threshold.
    #[arg(long, global = true)]
    pub zeta: Option<u64>,
    /// Statistics-merging coefficient in [0, 1].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Lower importance-weight clip.
    #[arg(long, global = true)]
    pub eta1: Option<f64>,
    /// Upper importance-weight clip.
    #[arg(long, global = true)]
    pub eta2: Option<f64>,
    /// Transfer strategy: attention, uniform, or onehot.
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    /// Metric bin count.
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Adaptive-metric range count.
    #[arg(long, global = true)]
    pub ranges: Option<usize>,
    /// Lower temperature search bound.
    #[arg(long, global = true)]
    pub tmin: Option<f64>,
    /// Upper temperature search bound.
    #[arg(long, global = true)]
    pub tmax: Option<f64>,
    /// Seed for anything stochastic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset payload encoding: binary or csv.
    #[arg(long, global = true)]
    pub format: Option<FileFormat>,
}

impl PipelineConfig {
    /// Load (optional) config file, then apply flag overrides, then
    /// validate numeric domains.
    pub fn resolve(opts: &CommonOpts) -> std::result::Result<Self, CliFailure> {
        let mut cfg = match &opts.config {
            Some(path) => {
                if !path.exists() {
                    return Err(CliFailure::missing(path.clone()));
                }
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliFailure::validation(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliFailure::validation(format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = &opts.train {
            cfg.train = Some(v.clone());
        }
        if let Some(v) = &opts.val {
            cfg.val = Some(v.clone());
        }
        if let Some(v) = &opts.test {
            cfg.test = Some(v.clone());
        }
        if let Some(v) = opts.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = opts.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = opts.eta1 {
            cfg.eta1 = v;
        }
        if let Some(v) = opts.eta2 {
            cfg.eta2 = v;
        }
        if let Some(v) = opts.strategy {
            cfg.strategy = v;
        }
        if let Some(v) = opts.bins {
            cfg.bins = v;
        }
        if let Some(v) = opts.ranges {
            cfg.ranges = v;
        }
        if let Some(v) = opts.tmin {
            cfg.tmin = v;
        }
        if let Some(v) = opts.tmax {
            cfg.tmax = v;
        }
        if let Some(v) = opts.seed {
            cfg.seed = v;
        }
        if let Some(v) = &opts.out {
            cfg.out = v.clone();
        }
        if let Some(v) = opts.format {
            cfg.format = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> std::result::Result<(), CliFailure> {
        if self.zeta == 0 {
            return Err(CliFailure::validation("zeta must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CliFailure::validation(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.eta1 > 0.0 && self.eta2 >= self.eta1) {
            return Err(CliFailure::validation(format!(
                "clip range must satisfy 0 < eta1 <= eta2, got [{}, {}]",
                self.eta1, self.eta2
            )));
        }
        if self.bins == 0 || self.ranges == 0 {
            return Err(CliFailure::validation("bins and ranges must be >= 1"));
        }
        if !(self.tmin > 0.0 && self.tmin < self.tmax && self.tmax.is_finite()) {
            return Err(CliFailure::validation(format!(
                "temperature bounds must satisfy 0 < tmin < tmax, got [{}, {}]",
                self.tmin, self.tmax
            )));
        }
        Ok(())
    }

    pub fn require_manifest(&self, which: &str) -> std::result::Result<&Path, CliFailure> {
        let path = match which {
            "train" => &self.train,
            "val" => &self.val,
            "test" => &self.test,
            _ => unreachable!("unknown split {which}"),
        };
        path.as_deref().ok_or_else(|| {
            CliFailure::validation(format!("no {which} manifest given (flag --{which})"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_roundtrip_is_lossless() {
        let cfg = PipelineConfig {
            train: Some("a/b.json".into()),
            alpha: 0.9975,
            seed: 42,
            ..Default::default()
        };
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<PipelineConfig>("{\"bogus\": 1}");
        assert!(err.is_err());
    }
}
