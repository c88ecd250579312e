//! Factual and counterfactual neighbor-bucket samples.
//!
//! A sample is disturbed in exactly one numerical field: its bucket id moves
//! by one and its dense value becomes the transform of the target bucket's
//! center. Which neighbor is "factual" depends on the field's direction and
//! the sample's label:
//!
//! | direction  | label    | counterfactual | factual |
//! |------------|----------|----------------|---------|
//! | increasing | positive | k - 1          | k + 1   |
//! | increasing | negative | k + 1          | k - 1   |
//! | decreasing | positive | k + 1          | k - 1   |
//! | decreasing | negative | k - 1          | k + 1   |
//!
//! A move that would leave `[0, w)` is dropped, so edge-bucket samples yield
//! a single disturbed sample.

use crate::error::{Error, Result};
use crate::featurespace::{Direction, EncodedSample, Features, NumericalField};

/// Original sample plus its disturbed neighbors in one numerical field.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTriple {
    pub original: EncodedSample,
    /// Carries the original's label.
    pub factual: Option<EncodedSample>,
    /// Unlabelled.
    pub counterfactual: Option<Features>,
    /// Index within the numerical block.
    pub field: usize,
    pub direction: Direction,
    /// Bucket offset of the factual move, `+1` or `-1`.
    pub factual_offset: i32,
    /// Always `-factual_offset`.
    pub counterfactual_offset: i32,
}

impl SynthTriple {
    /// Ordered pairs this triple contributes to a monotonicity count.
    pub fn comparable_pairs(&self) -> usize {
        usize::from(self.factual.is_some()) + usize::from(self.counterfactual.is_some())
    }
}

/// Bucket offset toward which the label is implied unchanged.
pub fn factual_offset(direction: Direction, label: u8) -> Option<i32> {
    match (direction, label != 0) {
        (Direction::Increasing, true) | (Direction::Decreasing, false) => Some(1),
        (Direction::Increasing, false) | (Direction::Decreasing, true) => Some(-1),
        (Direction::None, _) => None,
    }
}

fn moved(base: &Features, field_idx: usize, field: &NumericalField, target: i64) -> Result<Option<Features>> {
    if target < 0 || target >= field.n_buckets() as i64 {
        return Ok(None);
    }
    let (bucket, dense) = field.at_bucket(target as usize)?;
    let mut f = base.clone();
    f.bucket_ids[field_idx] = bucket;
    f.dense[field_idx] = dense;
    Ok(Some(f))
}

pub fn synthesize_triple(
    original: &EncodedSample,
    field_idx: usize,
    field: &NumericalField,
) -> Result<SynthTriple> {
    let offset = factual_offset(field.direction, original.label)
        .ok_or_else(|| Error::IneligibleField(field.name.clone()))?;
    let w = field.n_buckets();
    if w < 2 {
        return Err(Error::DegenerateFeature(Some(field.name.clone())));
    }
    let k = *original
        .features
        .bucket_ids
        .get(field_idx)
        .ok_or_else(|| Error::ShapeMismatch(format!("no numerical field {field_idx}")))?
        as usize;
    if k >= w {
        return Err(Error::IndexOutOfRange { index: k, buckets: w });
    }
    let k = k as i64;
    let factual = moved(&original.features, field_idx, field, k + i64::from(offset))?.map(|features| {
        EncodedSample {
            features,
            label: original.label,
        }
    });
    let counterfactual = moved(&original.features, field_idx, field, k - i64::from(offset))?;
    Ok(SynthTriple {
        original: original.clone(),
        factual,
        counterfactual,
        field: field_idx,
        direction: field.direction,
        factual_offset: offset,
        counterfactual_offset: -offset,
    })
}

/// One triple per sample, all disturbing the same field.
pub fn synthesize_eval_pairs(
    samples: &[EncodedSample],
    field_idx: usize,
    field: &NumericalField,
) -> Result<Vec<SynthTriple>> {
    if !field.eligible() {
        return Err(Error::IneligibleField(field.name.clone()));
    }
    samples
        .iter()
        .map(|s| synthesize_triple(s, field_idx, field))
        .collect()
}
