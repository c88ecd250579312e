use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::backbones::sigmoid;
use crate::error::{Error, Result};
use crate::featurespace::{
    Direction, FeatureEncoder, FeatureSchema, Features, FieldSpec, RawRecord,
};
use crate::numcore::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCategorical {
    pub name: String,
    /// Number of distinct values drawn.
    pub cardinality: usize,
    /// Standard deviation of the per-value logit effects.
    pub effect_scale: f64,
}

/// A lognormal feature whose logit contribution is
/// `sign * weight * pl(u)`, with `u = (ln(1 + x) - log_mean) / log_std` and
/// `pl` piecewise linear with strictly positive segment slopes and
/// `pl(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthNumerical {
    pub name: String,
    pub direction: Direction,
    pub weight: f64,
    /// Segment slopes; knots are evenly spaced on `[-1.5, 1.5]`.
    pub slopes: Vec<f64>,
    #[serde(default = "default_log_mean")]
    pub log_mean: f64,
    #[serde(default = "default_log_std")]
    pub log_std: f64,
}

fn default_log_mean() -> f64 {
    2.0
}

fn default_log_std() -> f64 {
    1.0
}

fn default_buckets() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    /// Standard deviation of Gaussian logit noise.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub bias: f64,
    /// Buckets declared for every numerical field of the derived schema.
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    #[serde(default)]
    pub seed: u64,
    pub categorical: Vec<SynthCategorical>,
    pub numerical: Vec<SynthNumerical>,
}

impl SyntheticSpec {
    /// Four categorical fields (the first one is the user) and eight
    /// numerical fields with decaying weights, six increasing and two
    /// decreasing.
    pub fn desk_default(n_samples: usize) -> Self {
        let cat = |name: &str, cardinality, effect_scale| SynthCategorical {
            name: name.into(),
            cardinality,
            effect_scale,
        };
        let shapes: [&[f64]; 4] = [
            &[0.4, 1.0, 1.6, 0.6],
            &[1.6, 1.0, 0.5, 0.2],
            &[1.0],
            &[0.3, 1.5, 0.3],
        ];
        let weights = [0.3, 0.255, 0.21, 0.165, 0.135, 0.105, 0.075, 0.045];
        let numerical = weights
            .iter()
            .enumerate()
            .map(|(j, &w)| SynthNumerical {
                name: format!("num_{j}"),
                direction: if j == 1 || j == 5 {
                    Direction::Decreasing
                } else {
                    Direction::Increasing
                },
                weight: w,
                slopes: shapes[j % shapes.len()].to_vec(),
                log_mean: 1.5 + 0.25 * j as f64,
                log_std: 0.8 + 0.1 * (j % 3) as f64,
            })
            .collect();
        Self {
            n_samples,
            noise: 0.5,
            bias: -0.3,
            buckets: 10,
            seed: 0,
            categorical: vec![
                cat("user_id", 500, 0.6),
                cat("item_id", 800, 0.6),
                cat("region", 12, 0.3),
                cat("device", 4, 0.2),
            ],
            numerical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig("noise must be >= 0".into()));
        }
        for c in &self.categorical {
            if c.cardinality == 0 || !(c.effect_scale >= 0.0) {
                return Err(Error::InvalidConfig(format!("bad categorical field `{}`", c.name)));
            }
        }
        for n in &self.numerical {
            if !n.direction.is_monotone() {
                return Err(Error::InvalidConfig(format!(
                    "synthetic field `{}` needs a monotone direction",
                    n.name
                )));
            }
            if n.slopes.is_empty() || n.slopes.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "synthetic field `{}` needs strictly positive slopes",
                    n.name
                )));
            }
            if !(n.weight > 0.0) || !(n.log_std > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "synthetic field `{}` needs positive weight and log_std",
                    n.name
                )));
            }
        }
        Ok(())
    }

    /// Schema of the generated data: label `label`, grouped by the first
    /// categorical field.
    pub fn schema(&self) -> Result<FeatureSchema> {
        let fields = self
            .categorical
            .iter()
            .map(|c| FieldSpec::categorical(&c.name, c.cardinality + 1))
            .chain(
                self.numerical
                    .iter()
                    .map(|n| FieldSpec::numerical(&n.name, self.buckets, n.direction)),
            )
            .collect();
        let schema = FeatureSchema::new("label", fields)?;
        Ok(match self.categorical.first() {
            Some(c) => schema.with_group(&c.name),
            None => schema,
        })
    }
}

impl SynthNumerical {
    fn standardized(&self, x: f64) -> f64 {
        (x.ln_1p() - self.log_mean) / self.log_std
    }

    /// Piecewise-linear shape, zero at `u = 0`.
    fn shape(&self, u: f64) -> f64 {
        self.uncentered(u) - self.uncentered(0.0)
    }

    fn uncentered(&self, u: f64) -> f64 {
        let k = self.slopes.len();
        let mut value = self.slopes[0] * u;
        for i in 1..k {
            let knot = if k == 2 {
                0.0
            } else {
                -1.5 + 3.0 * (i - 1) as f64 / (k - 2) as f64
            };
            value += (self.slopes[i] - self.slopes[i - 1]) * (u - knot).max(0.0);
        }
        value
    }

    /// Noise-free logit contribution of raw value `x`.
    pub fn contribution(&self, x: f64) -> f64 {
        let sign = match self.direction {
            Direction::Decreasing => -1.0,
            _ => 1.0,
        };
        sign * self.weight * self.shape(self.standardized(x))
    }
}

/// The generator's true logit, for oracle scoring.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    /// Per categorical field, the effect of each drawn value.
    pub effects: Vec<Vec<f64>>,
}

impl GroundTruth {
    fn category_effect(&self, field: usize, token: &str) -> f64 {
        token
            .parse::<usize>()
            .ok()
            .and_then(|k| self.effects[field].get(k))
            .copied()
            .unwrap_or(0.0)
    }

    /// Noise-free logit of a raw record.
    pub fn logit(&self, row: &RawRecord) -> f64 {
        let mut z = self.spec.bias;
        for (i, token) in row.categorical.iter().enumerate() {
            z += self.category_effect(i, token);
        }
        for (n, &x) in self.spec.numerical.iter().zip(&row.numerical) {
            z += n.contribution(x);
        }
        z
    }

    /// Noise-free logit of encoded features: categorical ids go back through
    /// the vocabulary (OOV contributes nothing) and dense values through the
    /// inverse transform.
    pub fn logit_encoded(&self, encoder: &FeatureEncoder, f: &Features) -> f64 {
        let mut z = self.spec.bias;
        for (i, &id) in f.cat_ids.iter().enumerate() {
            if let Some(token) = encoder.vocabularies[i].token(id) {
                z += self.category_effect(i, token);
            }
        }
        for ((n, field), &d) in self.spec.numerical.iter().zip(&encoder.numerical).zip(&f.dense) {
            z += n.contribution(field.transform.invert(d));
        }
        z
    }
}

/// Draws a dataset: lognormal numerical values, uniform categorical values,
/// `y ~ Bernoulli(sigmoid(bias + effects + sum_j s_j(x_j) + eps))` with
/// `eps ~ N(0, noise^2)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let schema = spec.schema()?;
    let root = Rng::new(seed);
    let mut effect_rng = root.derive(1);
    let effects: Vec<Vec<f64>> = spec
        .categorical
        .iter()
        .map(|c| (0..c.cardinality).map(|_| c.effect_scale * effect_rng.normal()).collect())
        .collect();
    let truth = GroundTruth {
        spec: spec.clone(),
        effects,
    };

    let mut rng = root.derive(2);
    let mut rows = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let categorical: Vec<String> = spec
            .categorical
            .iter()
            .map(|c| rng.below(c.cardinality).to_string())
            .collect();
        let numerical: Vec<f64> = spec
            .numerical
            .iter()
            .map(|n| (n.log_mean + n.log_std * rng.normal()).exp())
            .collect();
        let group = categorical.first().cloned();
        let mut row = RawRecord {
            categorical,
            numerical,
            label: 0,
            group,
            split: None,
        };
        let z = truth.logit(&row) + spec.noise * rng.normal();
        row.label = rng.bernoulli(sigmoid(z)) as u8;
        rows.push(row);
    }
    Ok((Dataset::new(schema, rows), truth))
}
