use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mono_ctr::backbones::ModelSpec;
use mono_ctr::dataio::SyntheticSpec;
use mono_ctr::importance::ShapleyConfig;
use mono_ctr::trainer::{TrainConfig, Variant};

/// File locations. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub importance: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitOptions {
    pub train_fraction: f64,
    pub seed: u64,
    /// Split-column cutoff; rows sorting before it train. Overrides the
    /// random split when the schema has a split column.
    pub cutoff: Option<String>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub top_k: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { top_k: 3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    /// Flag preset applied by `train`; when absent the `[train]` flags are
    /// used as written.
    pub variant: Option<Variant>,
    pub seeds: Vec<u64>,
    pub alphas: Vec<f64>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            variant: None,
            seeds: (1..=5).collect(),
            alphas: vec![0.0, 0.25, 1.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub shapley: ShapleyConfig,
    #[serde(default)]
    pub split: SplitOptions,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub experiment: ExperimentOptions,
    pub synthetic: Option<SyntheticSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.schema,
            &mut cfg.paths.data,
            &mut cfg.paths.importance,
            &mut cfg.paths.checkpoint,
            &mut cfg.paths.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.train.validate()?;
        if !(cfg.split.train_fraction > 0.0 && cfg.split.train_fraction < 1.0) {
            bail!("split.train_fraction must lie in (0, 1)");
        }
        if cfg.metrics.top_k == 0 {
            bail!("metrics.top_k must be >= 1");
        }
        if cfg.experiment.seeds.is_empty() {
            bail!("experiment.seeds must not be empty");
        }
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// A configured path, or `default_name` inside the output directory.
    pub fn path_or_output(&self, path: &Option<PathBuf>, default_name: &str) -> PathBuf {
        path.clone().unwrap_or_else(|| self.output_dir().join(default_name))
    }
}

/// Fails with a usage error naming the missing key.
pub fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, String> {
    path.as_deref()
        .ok_or_else(|| format!("this command needs `paths.{key}` in the config"))
}
