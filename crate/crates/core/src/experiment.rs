//! Multi-seed experiment driver: baseline, importance, CCSS variants and the
//! alpha sweep, with results cached per `(variant, alpha, seed)`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbones::{Model, ModelSpec};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::featurespace::{EncodedSample, FeatureEncoder};
use crate::importance::{ImportanceProfile, Reference, ShapleyConfig};
use crate::metrics::{evaluate, MetricsReport};
use crate::trainer::{train, TrainConfig, TrainReport, Variant};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "MONO_CTR_THREADS";

/// Encoded train and test splits sharing one fitted encoder.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub encoder: FeatureEncoder,
    pub train: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
    pub test_groups: Vec<usize>,
    pub reference: Reference,
}

impl PreparedData {
    /// Fits the encoder on `train` only.
    pub fn new(train: &Dataset, test: &Dataset) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let encoder = FeatureEncoder::fit(&train.schema, &train.rows)?;
        Ok(Self {
            train: encoder.encode_all(&train.rows)?,
            test: encoder.encode_all(&test.rows)?,
            test_groups: test.group_indices(),
            reference: Reference::training_mean(&encoder, &train.rows)?,
            encoder,
        })
    }

    pub fn split_random(data: &Dataset, train_fraction: f64, seed: u64) -> Result<Self> {
        let (train, test) = data.split_random(train_fraction, seed);
        Self::new(&train, &test)
    }
}

/// One trained model with its evaluation.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: Variant,
    pub alpha: f64,
    pub seed: u64,
    pub model: Model,
    pub train: TrainReport,
    /// Mono_rate covers every eligible numerical field, in schema order.
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RunKey {
    variant: Variant,
    alpha_bits: u64,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub shapley: ShapleyConfig,
    pub seeds: Vec<u64>,
    pub top_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::new(crate::backbones::ModelKind::Dnn),
            train: TrainConfig::default(),
            shapley: ShapleyConfig::default(),
            seeds: (1..=5).collect(),
            top_k: 3,
        }
    }
}

/// Means over seeds for one row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub label: String,
    pub variant: Variant,
    pub alpha: f64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub auc: f64,
    pub gauc: Option<f64>,
    /// Mean over the top-k fields.
    pub mono_rate: f64,
}

pub struct Experiment {
    pub data: PreparedData,
    pub config: ExperimentConfig,
    runs: Mutex<HashMap<RunKey, Arc<RunResult>>>,
    importance: Mutex<HashMap<u64, Arc<ImportanceProfile>>>,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

impl Experiment {
    pub fn new(data: PreparedData, config: ExperimentConfig) -> Result<Self> {
        config.train.validate()?;
        config.model.validate()?;
        if config.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if !data.encoder.eligibility().iter().any(|&e| e) {
            return Err(Error::NoEligibleFields);
        }
        Ok(Self {
            data,
            config,
            runs: Mutex::new(HashMap::new()),
            importance: Mutex::new(HashMap::new()),
        })
    }

    fn eligible_fields(&self) -> Vec<usize> {
        self.data
            .encoder
            .eligibility()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| i)
            .collect()
    }

    fn key(variant: Variant, alpha: f64, seed: u64) -> RunKey {
        // Alpha is irrelevant when no pairwise term can fire.
        let alpha = match variant {
            Variant::Baseline | Variant::OnlyFactualPointwise => 0.0,
            _ => alpha,
        };
        RunKey {
            variant,
            alpha_bits: alpha.to_bits(),
            seed,
        }
    }

    pub fn baseline(&self, seed: u64) -> Result<Arc<RunResult>> {
        self.run(Variant::Baseline, self.config.train.alpha, seed)
    }

    /// Importance estimated on this seed's baseline model.
    pub fn importance(&self, seed: u64) -> Result<Arc<ImportanceProfile>> {
        if let Some(p) = self.importance.lock().expect("importance cache").get(&seed) {
            return Ok(Arc::clone(p));
        }
        let base = self.baseline(seed)?;
        let shapley = ShapleyConfig {
            seed,
            ..self.config.shapley.clone()
        };
        let profile = Arc::new(ImportanceProfile::estimate(
            &base.model,
            &self.data.encoder,
            &self.data.train,
            &self.data.reference,
            &shapley,
        )?);
        self.importance
            .lock()
            .expect("importance cache")
            .insert(seed, Arc::clone(&profile));
        Ok(profile)
    }

    /// Trains and evaluates one configuration, reusing a cached result.
    /// Full CCSS at `alpha = 0` is the factual-pointwise-only variant.
    pub fn run(&self, variant: Variant, alpha: f64, seed: u64) -> Result<Arc<RunResult>> {
        let variant = if variant == Variant::Ccss && alpha == 0.0 {
            Variant::OnlyFactualPointwise
        } else {
            variant
        };
        let key = Self::key(variant, alpha, seed);
        if let Some(r) = self.runs.lock().expect("run cache").get(&key) {
            return Ok(Arc::clone(r));
        }
        let cfg = TrainConfig {
            alpha,
            seed,
            ..self.config.train.clone()
        }
        .variant(variant);
        let profile = if cfg.terms().any() && !cfg.uniform_disturb {
            Some(self.importance(seed)?)
        } else {
            None
        };
        let (model, report) = train(
            &cfg,
            &self.config.model,
            &self.data.encoder,
            &self.data.train,
            profile.as_deref(),
        )?;
        let metrics = evaluate(
            &model,
            &self.data.encoder,
            &self.data.test,
            &self.data.test_groups,
            &self.eligible_fields(),
        )?;
        let result = Arc::new(RunResult {
            variant,
            alpha,
            seed,
            model,
            train: report,
            metrics,
        });
        self.runs
            .lock()
            .expect("run cache")
            .insert(key, Arc::clone(&result));
        Ok(result)
    }

    /// One run per seed, in parallel, returned in seed order.
    pub fn run_seeds(&self, variant: Variant, alpha: f64) -> Result<Vec<Arc<RunResult>>> {
        let pool = thread_pool()?;
        pool.install(|| {
            self.config
                .seeds
                .par_iter()
                .map(|&s| self.run(variant, alpha, s))
                .collect()
        })
    }

    /// Top-k eligible fields ranked by importance averaged over seeds.
    pub fn top_fields(&self) -> Result<Vec<usize>> {
        let pool = thread_pool()?;
        let profiles: Vec<Arc<ImportanceProfile>> =
            pool.install(|| self.config.seeds.par_iter().map(|&s| self.importance(s)).collect::<Result<_>>())?;
        let n = self.data.encoder.n_numerical();
        let q: Vec<f64> = (0..n).map(|j| mean(profiles.iter().map(|p| p.q()[j]))).collect();
        let names: Vec<String> = self.data.encoder.numerical.iter().map(|f| f.name.clone()).collect();
        let combined = ImportanceProfile::from_scores(&names, &q, &self.data.encoder.eligibility())?;
        Ok(combined.top_k(self.config.top_k))
    }

    /// Seed-mean metrics with Mono_rate restricted to `fields`, in that order.
    pub fn mean_metrics(&self, runs: &[Arc<RunResult>], fields: &[usize]) -> MetricsReport {
        let gauc = if runs.iter().all(|r| r.metrics.gauc.is_some()) {
            Some(mean(runs.iter().filter_map(|r| r.metrics.gauc)))
        } else {
            None
        };
        let mono_rate: IndexMap<String, f64> = fields
            .iter()
            .map(|&j| {
                let name = &self.data.encoder.numerical[j].name;
                (name.clone(), mean(runs.iter().map(|r| r.metrics.mono_rate[name])))
            })
            .collect();
        MetricsReport {
            auc: mean(runs.iter().map(|r| r.metrics.auc)),
            gauc,
            mono_rate,
            rela_impr: None,
        }
    }

    fn mean_row(&self, variant: Variant, alpha: f64, fields: &[usize]) -> Result<MeanRow> {
        let runs = self.run_seeds(variant, alpha)?;
        Ok(MeanRow {
            label: variant.label().to_string(),
            variant,
            alpha,
            metrics: self.mean_metrics(&runs, fields),
        })
    }

    /// Baseline and full CCSS seed means, with CCSS relative to the baseline.
    pub fn comparison(&self) -> Result<Vec<MeanRow>> {
        let fields = self.top_fields()?;
        let alpha = self.config.train.alpha;
        let base = self.mean_row(Variant::Baseline, alpha, &fields)?;
        let mut ccss = self.mean_row(Variant::Ccss, alpha, &fields)?;
        ccss.metrics = ccss.metrics.with_base(base.label.clone(), &base.metrics)?;
        Ok(vec![base, ccss])
    }

    /// Full CCSS and its four ablations, seed means.
    pub fn ablation(&self) -> Result<Vec<MeanRow>> {
        let fields = self.top_fields()?;
        let alpha = self.config.train.alpha;
        Variant::ABLATION
            .iter()
            .map(|&v| self.mean_row(v, alpha, &fields))
            .collect()
    }

    /// Full CCSS over an alpha grid; 0 and 1 are always included and the
    /// grid is returned sorted.
    pub fn sweep_alpha(&self, alphas: &[f64]) -> Result<Vec<SweepPoint>> {
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidConfig(format!("alpha {a} must be finite and >= 0")));
        }
        let mut grid: Vec<f64> = alphas.iter().copied().chain([0.0, 1.0]).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let fields = self.top_fields()?;
        grid.iter()
            .map(|&a| {
                let row = self.mean_row(Variant::Ccss, a, &fields)?;
                Ok(SweepPoint {
                    alpha: a,
                    auc: row.metrics.auc,
                    gauc: row.metrics.gauc,
                    mono_rate: row.metrics.mean_mono_rate(),
                })
            })
            .collect()
    }
}

/// `alpha,auc,gauc,mono_rate` with one row per grid point.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["alpha", "auc", "gauc", "mono_rate"])?;
    for p in points {
        w.write_record([
            p.alpha.to_string(),
            p.auc.to_string(),
            p.gauc.map_or_else(String::new, |g| g.to_string()),
            p.mono_rate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::ModelKind;
    use crate::dataio::{generate_synthetic, SyntheticSpec};

    fn tiny() -> Experiment {
        let (data, _) = generate_synthetic(&SyntheticSpec::desk_default(600), 3).unwrap();
        let prepared = PreparedData::split_random(&data, 0.8, 3).unwrap();
        let config = ExperimentConfig {
            model: ModelSpec::new(ModelKind::Dnn).with_dims(4, &[8]),
            train: TrainConfig {
                epochs: 1,
                batch_size: 128,
                ..TrainConfig::default()
            },
            shapley: ShapleyConfig {
                permutations: 4,
                probe_samples: 16,
                seed: 0,
            },
            seeds: vec![1, 2],
            top_k: 3,
        };
        Experiment::new(prepared, config).unwrap()
    }

    #[test]
    fn cache_reuses_runs_and_alpha_zero() {
        let exp = tiny();
        let a = exp.run(Variant::Ccss, 0.0, 1).unwrap();
        let b = exp.run(Variant::OnlyFactualPointwise, 0.7, 1).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = exp.baseline(1).unwrap();
        assert!(Arc::ptr_eq(&c, &exp.run(Variant::Baseline, 5.0, 1).unwrap()));
    }

    #[test]
    fn sweep_includes_required_points() {
        let exp = tiny();
        let pts = exp.sweep_alpha(&[0.25]).unwrap();
        let alphas: Vec<f64> = pts.iter().map(|p| p.alpha).collect();
        assert_eq!(alphas, vec![0.0, 0.25, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &pts).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("alpha,auc,gauc,mono_rate\n"));
        assert_eq!(text.lines().count(), 4);
        assert!(exp.sweep_alpha(&[-1.0]).is_err());
    }

    #[test]
    fn ablation_rows_follow_table_labels() {
        let exp = tiny();
        let rows = exp.ablation().unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "DNN+CCSS",
                "DNN(Only Factual Pairwise loss)",
                "DNN(Only Counterfactual Pairwise loss)",
                "DNN(Equal Probability Random Disturb)",
                "DNN(Only Factual Pointwise loss)",
            ]
        );
        assert!(rows.iter().all(|r| r.metrics.mono_rate.len() == 3));
    }
}
