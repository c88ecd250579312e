use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::discretizer::{fit_discretizer, Discretizer};
use super::schema::{DenseMode, Direction, FeatureSchema, FieldKind};
use crate::error::{Error, Result};

/// One schema-conformant row before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub categorical: Vec<String>,
    pub numerical: Vec<f64>,
    pub label: u8,
    pub group: Option<String>,
    pub split: Option<String>,
}

impl RawRecord {
    /// Builds a record from a column lookup. `row` only decorates errors.
    pub fn parse<'a, F>(schema: &FeatureSchema, lookup: F, row: Option<usize>) -> Result<Self>
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        let cell = |column: &str| -> Result<&'a str> {
            match lookup(column).map(str::trim) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::MissingValue {
                    column: column.to_string(),
                    row,
                }),
            }
        };
        let mut categorical = Vec::with_capacity(schema.n_categorical());
        let mut numerical = Vec::with_capacity(schema.n_numerical());
        for f in &schema.fields {
            let raw = cell(&f.name)?;
            match f.kind {
                FieldKind::Categorical => categorical.push(raw.to_string()),
                FieldKind::Numerical => {
                    let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(
                        || Error::Parse {
                            column: f.name.clone(),
                            value: raw.to_string(),
                            row,
                        },
                    )?;
                    numerical.push(v);
                }
            }
        }
        let raw_label = cell(&schema.label)?;
        let label = parse_label(raw_label).ok_or_else(|| Error::Parse {
            column: schema.label.clone(),
            value: raw_label.to_string(),
            row,
        })?;
        let group = match &schema.group {
            Some(c) => Some(cell(c)?.to_string()),
            None => None,
        };
        let split = match &schema.split {
            Some(c) => Some(cell(c)?.to_string()),
            None => None,
        };
        Ok(Self {
            categorical,
            numerical,
            label,
            group,
            split,
        })
    }
}

fn parse_label(raw: &str) -> Option<u8> {
    match raw {
        "1" | "true" | "True" => Some(1),
        "0" | "false" | "False" => Some(0),
        other => match other.parse::<f64>() {
            Ok(v) if v == 1.0 => Some(1),
            Ok(v) if v == 0.0 => Some(0),
            _ => None,
        },
    }
}

/// Model inputs for one row: categorical ids, bucket ids, dense values.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub cat_ids: Vec<u32>,
    pub bucket_ids: Vec<u32>,
    pub dense: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub features: Features,
    pub label: u8,
}

/// Frequency-ranked vocabulary; id 0 is reserved for unseen values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Keeps the `vocab_size - 1` most frequent values (ties broken by value).
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a str>, vocab_size: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for v in values {
            *counts.entry(v).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(vocab_size.saturating_sub(1));
        Self::from(ranked.into_iter().map(|(t, _)| t.to_string()).collect::<Vec<_>>())
    }

    pub fn id(&self, value: &str) -> u32 {
        self.index.get(value).copied().unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.tokens.get(i as usize))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Dense-path transform of one numerical field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseTransform {
    pub mode: DenseMode,
    pub mu: f64,
    pub sigma: f64,
}

impl DenseTransform {
    pub fn identity() -> Self {
        Self {
            mode: DenseMode::Raw,
            mu: 0.0,
            sigma: 1.0,
        }
    }

    pub fn fit(values: &[f64], mode: DenseMode) -> Result<Self> {
        if mode == DenseMode::Raw {
            return Ok(Self::identity());
        }
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let logs = values
            .iter()
            .map(|&x| log_domain(x))
            .collect::<Result<Vec<_>>>()?;
        let n = logs.len() as f64;
        let mu = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if !(sigma > 0.0) {
            return Err(Error::ZeroVariance(None));
        }
        Ok(Self { mode, mu, sigma })
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        match self.mode {
            DenseMode::Raw => Ok(x),
            DenseMode::Log1pZscore => Ok((log_domain(x)? - self.mu) / self.sigma),
        }
    }

    /// Inverse of [`apply`](Self::apply), up to rounding.
    pub fn invert(&self, z: f64) -> f64 {
        match self.mode {
            DenseMode::Raw => z,
            DenseMode::Log1pZscore => (z * self.sigma + self.mu).exp_m1(),
        }
    }
}

fn log_domain(x: f64) -> Result<f64> {
    if x.is_finite() && x >= 0.0 {
        Ok(x.ln_1p())
    } else {
        Err(Error::TransformDomain { value: x })
    }
}

pub fn dense_transform(transform: &DenseTransform, x: f64) -> Result<f64> {
    transform.apply(x)
}

/// Fitted state of one numerical field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalField {
    pub name: String,
    pub direction: Direction,
    pub discretizer: Discretizer,
    pub transform: DenseTransform,
}

impl NumericalField {
    /// Monotone prior declared and at least two buckets to move between.
    pub fn eligible(&self) -> bool {
        self.direction.is_monotone() && self.discretizer.n_buckets() >= 2
    }

    /// Bucket id and dense value a disturbed sample takes in bucket `i`.
    pub fn at_bucket(&self, i: usize) -> Result<(u32, f64)> {
        let center = self.discretizer.center(i)?;
        Ok((i as u32, self.transform.apply(center)?))
    }

    pub fn n_buckets(&self) -> usize {
        self.discretizer.n_buckets()
    }
}

/// Schema plus everything fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub schema: FeatureSchema,
    pub vocabularies: Vec<Vocabulary>,
    pub numerical: Vec<NumericalField>,
}

impl FeatureEncoder {
    pub fn fit(schema: &FeatureSchema, rows: &[RawRecord]) -> Result<Self> {
        schema.validate()?;
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let vocabularies = schema
            .categorical()
            .enumerate()
            .map(|(i, f)| {
                Vocabulary::fit(
                    rows.iter().map(|r| r.categorical[i].as_str()),
                    f.vocab_size.expect("validated categorical"),
                )
            })
            .collect();
        let mut numerical = Vec::with_capacity(schema.n_numerical());
        for (j, f) in schema.numerical().enumerate() {
            let values: Vec<f64> = rows.iter().map(|r| r.numerical[j]).collect();
            let with_name = |e: Error| match e {
                Error::DegenerateFeature(None) => Error::DegenerateFeature(Some(f.name.clone())),
                Error::ZeroVariance(None) => Error::ZeroVariance(Some(f.name.clone())),
                other => other,
            };
            let discretizer = if f.buckets == 1 {
                Discretizer::single(&values)
            } else {
                fit_discretizer(&values, f.buckets)
            }
            .map_err(with_name)?;
            let transform =
                DenseTransform::fit(&values, schema.dense_transform).map_err(with_name)?;
            numerical.push(NumericalField {
                name: f.name.clone(),
                direction: f.direction,
                discretizer,
                transform,
            });
        }
        Ok(Self {
            schema: schema.clone(),
            vocabularies,
            numerical,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Embedding-table sizes: categorical vocabularies then numerical buckets.
    pub fn table_sizes(&self) -> Vec<usize> {
        self.schema
            .categorical()
            .map(|f| f.vocab_size.expect("validated categorical"))
            .chain(self.numerical.iter().map(|n| n.n_buckets()))
            .collect()
    }

    pub fn n_categorical(&self) -> usize {
        self.vocabularies.len()
    }

    pub fn n_numerical(&self) -> usize {
        self.numerical.len()
    }

    pub fn eligibility(&self) -> Vec<bool> {
        self.numerical.iter().map(NumericalField::eligible).collect()
    }

    pub fn encode(&self, record: &RawRecord) -> Result<EncodedSample> {
        encode_sample(self, record)
    }

    pub fn encode_all(&self, records: &[RawRecord]) -> Result<Vec<EncodedSample>> {
        records.iter().map(|r| self.encode(r)).collect()
    }
}

pub fn encode_sample(encoder: &FeatureEncoder, record: &RawRecord) -> Result<EncodedSample> {
    if record.categorical.len() != encoder.n_categorical()
        || record.numerical.len() != encoder.n_numerical()
    {
        return Err(Error::ShapeMismatch(format!(
            "record has {}+{} fields, schema expects {}+{}",
            record.categorical.len(),
            record.numerical.len(),
            encoder.n_categorical(),
            encoder.n_numerical()
        )));
    }
    let cat_ids = encoder
        .vocabularies
        .iter()
        .zip(&record.categorical)
        .map(|(v, c)| v.id(c))
        .collect();
    let mut bucket_ids = Vec::with_capacity(encoder.n_numerical());
    let mut dense = Vec::with_capacity(encoder.n_numerical());
    for (field, &x) in encoder.numerical.iter().zip(&record.numerical) {
        bucket_ids.push(field.discretizer.bucketize(x) as u32);
        dense.push(field.transform.apply(x)?);
    }
    Ok(EncodedSample {
        features: Features {
            cat_ids,
            bucket_ids,
            dense,
        },
        label: record.label,
    })
}
