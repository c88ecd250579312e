//! AUC, GAUC, relative improvement, and Mono_rate.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::backbones::Model;
use crate::error::{Error, Result};
use crate::featurespace::{EncodedSample, FeatureEncoder, Features, NumericalField};
use crate::synthesizer::{synthesize_eval_pairs, SynthTriple};

/// Mann-Whitney AUC; tied positive/negative pairs earn half credit.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut pos, mut neg) = (0usize, 0usize);
    let mut credit = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] != 0 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        credit += gp as f64 * neg as f64 + 0.5 * gp as f64 * gn as f64;
        pos += gp;
        neg += gn;
        i = j;
    }
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(credit / (pos as f64 * neg as f64))
}

/// Impression-weighted mean of per-user AUC over users with both classes.
pub fn gauc<S, L>(users: &[(S, L)]) -> Result<f64>
where
    S: AsRef<[f64]>,
    L: AsRef<[u8]>,
{
    let (mut num, mut den) = (0.0, 0.0);
    for (scores, labels) in users {
        match auc(scores.as_ref(), labels.as_ref()) {
            Ok(a) => {
                let n = scores.as_ref().len() as f64;
                num += n * a;
                den += n;
            }
            Err(Error::SingleClass) => {}
            Err(e) => return Err(e),
        }
    }
    if den == 0.0 {
        return Err(Error::NoComparableUsers);
    }
    Ok(num / den)
}

/// [`gauc`] over flat arrays with a dense group index per row.
pub fn gauc_grouped(scores: &[f64], labels: &[u8], groups: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() || scores.len() != groups.len() {
        return Err(Error::ShapeMismatch("scores, labels and groups differ in length".into()));
    }
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let mut users: Vec<(Vec<f64>, Vec<u8>)> = vec![(Vec::new(), Vec::new()); n_groups];
    for ((&s, &l), &g) in scores.iter().zip(labels).zip(groups) {
        users[g].0.push(s);
        users[g].1.push(l);
    }
    gauc(&users)
}

/// Relative improvement in percent over a base model, measured against the
/// 0.5 random-guess floor.
pub fn rela_impr(measured: f64, base: f64) -> Result<f64> {
    if base == 0.5 {
        return Err(Error::RandomBase);
    }
    Ok(((measured - 0.5) / (base - 0.5) - 1.0) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MonoCount {
    pub monotone: usize,
    pub comparable: usize,
}

impl MonoCount {
    pub fn rate(&self) -> f64 {
        if self.comparable == 0 {
            0.0
        } else {
            self.monotone as f64 / self.comparable as f64
        }
    }

    fn add(&mut self, other: MonoCount) {
        self.monotone += other.monotone;
        self.comparable += other.comparable;
    }
}

/// Counts pairs ordered as the monotone prior expects. Positive originals
/// need `F > O` and `C < O`, negative ones `F < O` and `C > O`; ties are
/// violations.
pub fn count_monotone_pairs<F>(triples: &[SynthTriple], mut score: F) -> Result<MonoCount>
where
    F: FnMut(&[&Features]) -> Result<Vec<f64>>,
{
    let mut rows: Vec<&Features> = Vec::with_capacity(triples.len() * 3);
    let mut slots = Vec::with_capacity(triples.len());
    for t in triples {
        let o = rows.len();
        rows.push(&t.original.features);
        let f = t.factual.as_ref().map(|s| {
            rows.push(&s.features);
            rows.len() - 1
        });
        let c = t.counterfactual.as_ref().map(|s| {
            rows.push(s);
            rows.len() - 1
        });
        slots.push((o, f, c));
    }
    if rows.is_empty() {
        return Ok(MonoCount::default());
    }
    let scores = score(&rows)?;
    let mut count = MonoCount::default();
    for (t, (o, f, c)) in triples.iter().zip(slots) {
        let positive = t.original.label != 0;
        let so = scores[o];
        if let Some(f) = f {
            count.comparable += 1;
            let ok = if positive { scores[f] > so } else { scores[f] < so };
            count.monotone += usize::from(ok);
        }
        if let Some(c) = c {
            count.comparable += 1;
            let ok = if positive { scores[c] < so } else { scores[c] > so };
            count.monotone += usize::from(ok);
        }
    }
    Ok(count)
}

const MONO_CHUNK: usize = 2048;

/// Mono_rate of one field under an arbitrary scorer.
pub fn mono_count_with<F>(
    samples: &[EncodedSample],
    field_idx: usize,
    field: &NumericalField,
    mut score: F,
) -> Result<MonoCount>
where
    F: FnMut(&[&Features]) -> Result<Vec<f64>>,
{
    if !field.eligible() {
        return Err(Error::IneligibleField(field.name.clone()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = MonoCount::default();
    for chunk in samples.chunks(MONO_CHUNK) {
        let triples = synthesize_eval_pairs(chunk, field_idx, field)?;
        total.add(count_monotone_pairs(&triples, &mut score)?);
    }
    Ok(total)
}

/// Fraction of neighbor-bucket pairs whose predicted probabilities follow
/// the field's declared direction.
pub fn mono_rate(
    model: &Model,
    samples: &[EncodedSample],
    field_idx: usize,
    field: &NumericalField,
) -> Result<f64> {
    Ok(mono_count_with(samples, field_idx, field, |rows| model.probabilities(rows))?.rate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaImpr {
    pub base: String,
    pub auc: f64,
    pub gauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    /// `None` when no user has both labels.
    pub gauc: Option<f64>,
    /// Field name to Mono_rate, in importance order.
    pub mono_rate: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rela_impr: Option<RelaImpr>,
}

impl MetricsReport {
    pub fn with_base(mut self, name: impl Into<String>, base: &MetricsReport) -> Result<Self> {
        let gauc = match (self.gauc, base.gauc) {
            (Some(m), Some(b)) => Some(rela_impr(m, b)?),
            _ => None,
        };
        self.rela_impr = Some(RelaImpr {
            base: name.into(),
            auc: rela_impr(self.auc, base.auc)?,
            gauc,
        });
        Ok(self)
    }

    pub fn mean_mono_rate(&self) -> f64 {
        if self.mono_rate.is_empty() {
            return 0.0;
        }
        self.mono_rate.values().sum::<f64>() / self.mono_rate.len() as f64
    }
}

/// AUC, GAUC and Mono_rate for the numerical fields listed in `mono_fields`
/// (indices into the numerical block, typically in importance order).
pub fn evaluate(
    model: &Model,
    encoder: &FeatureEncoder,
    samples: &[EncodedSample],
    groups: &[usize],
    mono_fields: &[usize],
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut scores = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(MONO_CHUNK) {
        scores.extend(model.predict(chunk)?);
    }
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let auc = auc(&scores, &labels)?;
    let gauc = match gauc_grouped(&scores, &labels, groups) {
        Ok(v) => Some(v),
        Err(Error::NoComparableUsers) => None,
        Err(e) => return Err(e),
    };
    let mut mono = IndexMap::new();
    for &j in mono_fields {
        let field = encoder
            .numerical
            .get(j)
            .ok_or(Error::IndexOutOfRange { index: j, buckets: encoder.n_numerical() })?;
        mono.insert(field.name.clone(), mono_rate(model, samples, j, field)?);
    }
    Ok(MetricsReport {
        auc,
        gauc,
        mono_rate: mono,
        rela_impr: None,
    })
}

fn ordinal(k: usize) -> String {
    let suffix = match (k % 10, k % 100) {
        (1, 11) | (2, 12) | (3, 13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{k}{suffix}")
}

/// Text table with AUC, RelaImpr, GAUC, RelaImpr and one Mono_rate column per
/// importance rank. RelaImpr is relative to the first row.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let k = rows.iter().map(|(_, r)| r.mono_rate.len()).max().unwrap_or(0);
    let mut header = vec![
        "Models".to_string(),
        "AUC".into(),
        "RelaImpr".into(),
        "GAUC".into(),
        "RelaImpr".into(),
    ];
    header.extend((1..=k).map(|i| format!("{}_fea", ordinal(i))));
    let base = rows.first().map(|(_, r)| r.clone());
    let mut table: Vec<Vec<String>> = vec![header];
    for (i, (name, r)) in rows.iter().enumerate() {
        let impr = |m: Option<f64>, b: Option<f64>| match (i, m, b) {
            (0, _, _) => "-".to_string(),
            (_, Some(m), Some(b)) => rela_impr(m, b)
                .map(|v| format!("{v:+.1}%"))
                .unwrap_or_else(|_| "n/a".into()),
            _ => "n/a".into(),
        };
        let base_auc = base.as_ref().map(|b| b.auc);
        let base_gauc = base.as_ref().and_then(|b| b.gauc);
        let mut line = vec![
            name.clone(),
            format!("{:.4}", r.auc),
            impr(Some(r.auc), base_auc),
            r.gauc.map_or("n/a".into(), |g| format!("{g:.4}")),
            impr(r.gauc, base_gauc),
        ];
        let monos: Vec<String> = r.mono_rate.values().map(|m| format!("{m:.4}")).collect();
        line.extend((0..k).map(|j| monos.get(j).cloned().unwrap_or_else(|| "-".into())));
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-|-"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurespace::{DenseMode, DenseTransform, Direction, Discretizer};
    use crate::numcore::Rng;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        credit += 1.0;
                    } else if scores[i] == scores[j] {
                        credit += 0.5;
                    }
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        let s = [0.9, 0.8, 0.3, 0.2];
        let l = [1, 0, 1, 0];
        assert_eq!(brute_auc(&s, &l), 0.75);
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_matches_brute_force_with_ties() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let n = 2 + rng.below(120);
            let scores: Vec<f64> = (0..n).map(|_| (rng.below(7) as f64) / 7.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let a = auc(&scores, &labels).unwrap();
            assert!((a - brute_auc(&scores, &labels)).abs() <= 1e-12);
        }
    }

    #[test]
    fn gauc_examples() {
        let one = [(vec![0.9, 0.8, 0.3, 0.2], vec![1u8, 0, 1, 0])];
        assert_eq!(gauc(&one).unwrap(), 0.75);

        let two = [
            (vec![0.9, 0.1], vec![1u8, 0]),
            (vec![0.5, 0.5], vec![1u8, 0]),
        ];
        assert_eq!(gauc(&two).unwrap(), 0.75);

        let with_single_class = [
            (vec![0.9, 0.1], vec![1u8, 0]),
            (vec![0.5, 0.5], vec![1u8, 0]),
            (vec![0.3, 0.2, 0.7], vec![1u8, 1, 1]),
        ];
        assert_eq!(gauc(&with_single_class).unwrap(), 0.75);

        let none = [(vec![0.3], vec![1u8])];
        assert!(matches!(gauc(&none), Err(Error::NoComparableUsers)));
    }

    #[test]
    fn gauc_weights_by_impressions() {
        // Three impressions at AUC 1.0, two at AUC 0.0: (3 * 1 + 2 * 0) / 5.
        let users = [
            (vec![0.9, 0.8, 0.1], vec![1u8, 1, 0]),
            (vec![0.1, 0.9], vec![1u8, 0]),
        ];
        assert!((gauc(&users).unwrap() - 0.6).abs() < 1e-15);
        let g = gauc_grouped(&[0.9, 0.1, 0.8, 0.9, 0.1], &[1, 1, 1, 0, 0], &[0, 1, 0, 1, 0]).unwrap();
        assert!((g - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rela_impr_examples() {
        assert!((rela_impr(0.7860, 0.7200).unwrap() - 30.0).abs() < 0.05);
        assert!((rela_impr(0.7320, 0.6560).unwrap() - 48.7).abs() < 0.05);
        assert_eq!(rela_impr(0.7, 0.7).unwrap(), 0.0);
        assert!(matches!(rela_impr(0.7, 0.5), Err(Error::RandomBase)));
        assert!(rela_impr(0.69, 0.7).unwrap() < 0.0);
    }

    fn field() -> NumericalField {
        NumericalField {
            name: "x".into(),
            direction: Direction::Increasing,
            discretizer: Discretizer::from_parts(vec![1.0, 2.0, 3.0], vec![0.5, 1.5, 2.5, 3.5])
                .unwrap(),
            transform: DenseTransform { mode: DenseMode::Raw, mu: 0.0, sigma: 1.0 },
        }
    }

    fn samples(n: usize, seed: u64) -> Vec<EncodedSample> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| {
                let b = rng.below(4);
                EncodedSample {
                    features: Features {
                        cat_ids: vec![],
                        bucket_ids: vec![b as u32],
                        dense: vec![b as f64 + 0.2 + 0.6 * rng.uniform()],
                    },
                    label: rng.bernoulli(0.5) as u8,
                }
            })
            .collect()
    }

    #[test]
    fn constant_scorer_has_zero_mono_rate() {
        let s = samples(50, 1);
        let c = mono_count_with(&s, 0, &field(), |rows| Ok(vec![0.3; rows.len()])).unwrap();
        assert_eq!(c.monotone, 0);
        assert!(c.comparable > 0);
    }

    #[test]
    fn increasing_scorer_has_full_mono_rate() {
        let s = samples(50, 2);
        let c = mono_count_with(&s, 0, &field(), |rows| {
            Ok(rows.iter().map(|f| 2.0 * f.dense[0] - 1.0).collect())
        })
        .unwrap();
        assert_eq!(c.rate(), 1.0);
        let d = mono_count_with(&s, 0, &field(), |rows| {
            Ok(rows.iter().map(|f| (2.0 * f.dense[0]).exp()).collect())
        })
        .unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn mono_rate_errors() {
        let mut f = field();
        assert!(matches!(
            mono_count_with(&[], 0, &f, |r| Ok(vec![0.0; r.len()])),
            Err(Error::EmptyDataset)
        ));
        f.direction = Direction::None;
        assert!(matches!(
            mono_count_with(&samples(3, 0), 0, &f, |r| Ok(vec![0.0; r.len()])),
            Err(Error::IneligibleField(_))
        ));
    }

    #[test]
    fn table_has_expected_columns() {
        let mut mono = IndexMap::new();
        mono.insert("a".to_string(), 0.5);
        mono.insert("b".to_string(), 0.6);
        let base = MetricsReport { auc: 0.72, gauc: Some(0.656), mono_rate: mono.clone(), rela_impr: None };
        let better = MetricsReport { auc: 0.786, gauc: Some(0.732), mono_rate: mono, rela_impr: None };
        let text = format_table(&[("DNN".into(), base), ("DNN+CCSS".into(), better)]);
        assert!(text.contains("1st_fea"));
        assert!(text.contains("2nd_fea"));
        assert!(text.contains("+30.0%"));
        assert!(text.contains("+48.7%"));
        assert_eq!(ordinal(11), "11th");
        assert_eq!(ordinal(3), "3rd");
    }
}
