//! Per-field importance from sampled Shapley values, and the disturbance
//! distribution derived from it.
//!
//! Players are the numerical fields. A coalition keeps its members at the
//! sample's true bucket id and dense value and moves everyone else to a
//! reference point; categorical fields always keep their true ids. The value
//! function is the model logit.

use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurespace::{EncodedSample, FeatureEncoder, Features, RawRecord};
use crate::numcore::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapleyConfig {
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_permutations() -> usize {
    64
}

fn default_probe_samples() -> usize {
    256
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            permutations: default_permutations(),
            probe_samples: default_probe_samples(),
            seed: 0,
        }
    }
}

/// Out-of-coalition values for every numerical field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub bucket_ids: Vec<u32>,
    pub dense: Vec<f64>,
}

impl Reference {
    /// Per-field training mean: its bucket for the embedding path, its
    /// transform for the dense path.
    pub fn training_mean(encoder: &FeatureEncoder, rows: &[RawRecord]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = rows.len() as f64;
        let mut bucket_ids = Vec::with_capacity(encoder.n_numerical());
        let mut dense = Vec::with_capacity(encoder.n_numerical());
        for (j, field) in encoder.numerical.iter().enumerate() {
            let mean = rows.iter().map(|r| r.numerical[j]).sum::<f64>() / n;
            bucket_ids.push(field.discretizer.bucketize(mean) as u32);
            dense.push(field.transform.apply(mean)?);
        }
        Ok(Self { bucket_ids, dense })
    }
}

/// Sampled Shapley statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyEstimate {
    /// Mean absolute marginal contribution per field.
    pub q: Vec<f64>,
    /// Mean signed marginal contribution per field, per probe sample.
    pub per_sample: Vec<Vec<f64>>,
}

fn coalition_row(sample: &Features, reference: &Reference, members: &[bool]) -> Features {
    let mut f = sample.clone();
    for (j, &inside) in members.iter().enumerate() {
        if !inside {
            f.bucket_ids[j] = reference.bucket_ids[j];
            f.dense[j] = reference.dense[j];
        }
    }
    f
}

/// Signed and absolute mean marginal contributions for one sample over
/// `permutations` random orderings.
fn sample_contributions<F>(
    score: &F,
    sample: &Features,
    reference: &Reference,
    permutations: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[&Features]) -> Result<Vec<f64>>,
{
    let n = sample.dense.len();
    let mut signed = vec![0.0; n];
    let mut absolute = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        rng.shuffle(&mut order);
        let mut members = vec![false; n];
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(coalition_row(sample, reference, &members));
        for &j in &order {
            members[j] = true;
            rows.push(coalition_row(sample, reference, &members));
        }
        let refs: Vec<&Features> = rows.iter().collect();
        let v = score(&refs)?;
        for (k, &j) in order.iter().enumerate() {
            let delta = v[k + 1] - v[k];
            signed[j] += delta;
            absolute[j] += delta.abs();
        }
    }
    let scale = 1.0 / permutations as f64;
    signed.iter_mut().for_each(|v| *v *= scale);
    absolute.iter_mut().for_each(|v| *v *= scale);
    Ok((signed, absolute))
}

/// Permutation-sampling Shapley estimate under an arbitrary scorer
/// (normally the model logit). Each probe sample gets its own random stream,
/// so results do not depend on how work is scheduled.
pub fn estimate_shapley_with<F>(
    score: F,
    probes: &[EncodedSample],
    reference: &Reference,
    config: &ShapleyConfig,
) -> Result<ShapleyEstimate>
where
    F: Fn(&[&Features]) -> Result<Vec<f64>> + Sync,
{
    if probes.is_empty() || config.probe_samples == 0 {
        return Err(Error::EmptyProbeSet);
    }
    if config.permutations == 0 {
        return Err(Error::InvalidConfig("permutations must be >= 1".into()));
    }
    let root = Rng::new(config.seed);
    let mut picked: Vec<usize> = (0..probes.len()).collect();
    if probes.len() > config.probe_samples {
        root.derive(0).shuffle(&mut picked);
        picked.truncate(config.probe_samples);
        picked.sort_unstable();
    }
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = picked
        .par_iter()
        .map(|&i| {
            let mut rng = root.derive(i as u64 + 1);
            sample_contributions(&score, &probes[i].features, reference, config.permutations, &mut rng)
        })
        .collect();
    let n = reference.dense.len();
    let mut q = vec![0.0; n];
    let mut per_sample = Vec::with_capacity(results.len());
    for r in results {
        let (signed, absolute) = r?;
        for (acc, a) in q.iter_mut().zip(&absolute) {
            *acc += a;
        }
        per_sample.push(signed);
    }
    let m = per_sample.len() as f64;
    q.iter_mut().for_each(|v| *v /= m);
    Ok(ShapleyEstimate { q, per_sample })
}

pub fn estimate_shapley(
    model: &crate::backbones::Model,
    probes: &[EncodedSample],
    reference: &Reference,
    config: &ShapleyConfig,
) -> Result<ShapleyEstimate> {
    estimate_shapley_with(|rows| model.logits(rows), probes, reference, config)
}

/// `p_i = q_i / sum_j q_j` over eligible fields, zero elsewhere; uniform over
/// eligible fields when their importances are all zero.
pub fn disturb_distribution(q: &[f64], eligible: &[bool]) -> Result<Vec<f64>> {
    if q.len() != eligible.len() {
        return Err(Error::ShapeMismatch("importance and eligibility lengths differ".into()));
    }
    if let Some(v) = q.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidConfig(format!("importance {v} must be finite and >= 0")));
    }
    let n_eligible = eligible.iter().filter(|&&e| e).count();
    if n_eligible == 0 {
        return Err(Error::NoEligibleFields);
    }
    let total: f64 = q.iter().zip(eligible).filter(|(_, &e)| e).map(|(v, _)| v).sum();
    Ok(q.iter()
        .zip(eligible)
        .map(|(&v, &e)| match (e, total > 0.0) {
            (false, _) => 0.0,
            (true, true) => v / total,
            (true, false) => 1.0 / n_eligible as f64,
        })
        .collect())
}

/// Equal probability over eligible fields.
pub fn uniform_distribution(eligible: &[bool]) -> Result<Vec<f64>> {
    disturb_distribution(&vec![0.0; eligible.len()], eligible)
}

/// Inverse-CDF draw from `p`; only indices with positive mass are returned.
pub fn sample_disturb_field(p: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi <= 0.0 {
            continue;
        }
        acc += pi;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldImportance {
    pub q: f64,
    pub p: f64,
    pub eligible: bool,
}

/// Importance and disturb probability per numerical field, keyed by name in
/// schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImportanceProfile {
    pub fields: IndexMap<String, FieldImportance>,
}

impl ImportanceProfile {
    pub fn from_scores(names: &[String], q: &[f64], eligible: &[bool]) -> Result<Self> {
        if names.len() != q.len() {
            return Err(Error::ShapeMismatch("names and importances differ in length".into()));
        }
        let p = disturb_distribution(q, eligible)?;
        let fields = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                (
                    n.clone(),
                    FieldImportance {
                        q: q[i],
                        p: p[i],
                        eligible: eligible[i],
                    },
                )
            })
            .collect();
        Ok(Self { fields })
    }

    /// Estimates q on `model` and builds the profile for `encoder`'s fields.
    pub fn estimate(
        model: &crate::backbones::Model,
        encoder: &FeatureEncoder,
        probes: &[EncodedSample],
        reference: &Reference,
        config: &ShapleyConfig,
    ) -> Result<Self> {
        let est = estimate_shapley(model, probes, reference, config)?;
        let names: Vec<String> = encoder.numerical.iter().map(|f| f.name.clone()).collect();
        Self::from_scores(&names, &est.q, &encoder.eligibility())
    }

    pub fn q(&self) -> Vec<f64> {
        self.fields.values().map(|f| f.q).collect()
    }

    pub fn p(&self) -> Vec<f64> {
        self.fields.values().map(|f| f.p).collect()
    }

    pub fn eligibility(&self) -> Vec<bool> {
        self.fields.values().map(|f| f.eligible).collect()
    }

    /// Indices of the `k` most important eligible fields, highest first;
    /// ties go to the earlier field.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .fields
            .values()
            .enumerate()
            .filter(|(_, f)| f.eligible)
            .map(|(i, _)| i)
            .collect();
        let q = self.q();
        idx.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    /// Checks that names line up with the encoder's numerical fields.
    pub fn check_against(&self, encoder: &FeatureEncoder) -> Result<()> {
        let ours: Vec<&str> = self.fields.keys().map(String::as_str).collect();
        let theirs: Vec<&str> = encoder.numerical.iter().map(|f| f.name.as_str()).collect();
        if ours != theirs {
            return Err(Error::InvalidConfig(format!(
                "importance fields {ours:?} do not match numerical fields {theirs:?}"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
