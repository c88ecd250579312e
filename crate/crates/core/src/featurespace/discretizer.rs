use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-frequency bucketization of one numerical field.
///
/// `cuts` has `w - 1` strictly increasing entries; bucket `i` is the half-open
/// interval `[cuts[i-1], cuts[i])` with unbounded outer edges. `centers[i]`
/// is the median of the training values that fell into bucket `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    cuts: Vec<f64>,
    centers: Vec<f64>,
}

impl Discretizer {
    pub fn from_parts(cuts: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        let ok = centers.len() == cuts.len() + 1
            && cuts.windows(2).all(|w| w[0] < w[1])
            && centers.windows(2).all(|w| w[0] < w[1])
            && cuts.iter().chain(&centers).all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidConfig(
                "discretizer cuts/centers must be finite and strictly increasing".into(),
            ));
        }
        let disc = Self { cuts, centers };
        if (0..disc.n_buckets()).any(|i| disc.bucketize(disc.centers[i]) != i) {
            return Err(Error::InvalidConfig(
                "discretizer center lies outside its bucket".into(),
            ));
        }
        Ok(disc)
    }

    /// One bucket covering the whole line, for non-monotone fields declared
    /// with a single bucket.
    pub fn single(values: &[f64]) -> Result<Self> {
        let sorted = checked_sorted(values)?;
        Ok(Self {
            cuts: Vec::new(),
            centers: vec![median(&sorted)],
        })
    }

    pub fn n_buckets(&self) -> usize {
        self.centers.len()
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bucketize(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c <= x)
    }

    pub fn center(&self, i: usize) -> Result<f64> {
        self.centers.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            buckets: self.n_buckets(),
        })
    }
}

/// Quantile cuts snapped to the nearest boundary between distinct values, so
/// repeated values never straddle a cut; duplicate cuts collapse.
pub fn fit_discretizer(values: &[f64], n_buckets: usize) -> Result<Discretizer> {
    if n_buckets < 2 {
        return Err(Error::InvalidBucketCount(n_buckets));
    }
    let sorted = checked_sorted(values)?;
    let n = sorted.len();
    // Positions j where sorted[j - 1] < sorted[j].
    let boundaries: Vec<usize> = (1..n).filter(|&j| sorted[j - 1] < sorted[j]).collect();
    if boundaries.is_empty() {
        return Err(Error::DegenerateFeature(None));
    }

    let mut chosen = BTreeSet::new();
    for k in 1..n_buckets {
        let target = (k * n + n_buckets / 2) / n_buckets;
        let after = boundaries.partition_point(|&j| j < target);
        let candidates = [after.checked_sub(1), Some(after)];
        let best = candidates
            .into_iter()
            .flatten()
            .filter_map(|i| boundaries.get(i).copied())
            .min_by_key(|&j| (j.abs_diff(target), j))
            .expect("boundaries non-empty");
        chosen.insert(best);
    }

    let mut cuts = Vec::with_capacity(chosen.len());
    let mut centers = Vec::with_capacity(chosen.len() + 1);
    let mut start = 0;
    for &j in &chosen {
        let (lo, hi) = (sorted[j - 1], sorted[j]);
        let mut mid = lo + (hi - lo) / 2.0;
        if mid <= lo {
            mid = hi;
        }
        cuts.push(mid);
        centers.push(median(&sorted[start..j]));
        start = j;
    }
    centers.push(median(&sorted[start..]));
    if centers.len() < 2 {
        return Err(Error::DegenerateFeature(None));
    }
    Ok(Discretizer { cuts, centers })
}

pub fn bucketize(disc: &Discretizer, x: f64) -> usize {
    disc.bucketize(x)
}

pub fn bucket_center(disc: &Discretizer, i: usize) -> Result<f64> {
    disc.center(i)
}

fn checked_sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        a + (b - a) / 2.0
    }
}
