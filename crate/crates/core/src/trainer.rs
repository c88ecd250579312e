//! Composite CCSS objective and the mini-batch training loop.
//!
//! Per sample the loss is
//!
//! ```text
//! positive: bce(o, 1) + bce(f, 1) + alpha * (h(f, o) + h(o, c))
//! negative: bce(o, 0) + bce(f, 0) + alpha * (h(o, f) + h(c, o))
//! ```
//!
//! with `h(hi, lo) = max(0, m - (hi - lo))` on probabilities. The
//! counterfactual sample has no label and only enters through its hinge.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbones::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::featurespace::{EncodedSample, FeatureEncoder, Features};
use crate::importance::{sample_disturb_field, uniform_distribution, ImportanceProfile};
use crate::metrics::auc;
use crate::numcore::{adam_step, AdamConfig, Gradients, Rng};
use crate::synthesizer::synthesize_triple;

const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub margin: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Master switch; when off the other flags are ignored.
    pub ccss_enabled: bool,
    pub factual_pairwise: bool,
    pub counterfactual_pairwise: bool,
    pub factual_pointwise: bool,
    pub uniform_disturb: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            alpha: 1.0,
            margin: 0.05,
            lr: adam.lr,
            lr_decay: 0.9,
            batch_size: 1024,
            epochs: 3,
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            ccss_enabled: false,
            factual_pairwise: true,
            counterfactual_pairwise: true,
            factual_pointwise: true,
            uniform_disturb: false,
        }
    }
}

/// Loss terms actually in force after the master switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveTerms {
    pub factual_pointwise: bool,
    pub factual_pairwise: bool,
    pub counterfactual_pairwise: bool,
}

impl ActiveTerms {
    pub fn any(self) -> bool {
        self.factual_pointwise || self.factual_pairwise || self.counterfactual_pairwise
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.margin) {
            return bad("margin must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad("lr_decay must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    pub fn terms(&self) -> ActiveTerms {
        ActiveTerms {
            factual_pointwise: self.ccss_enabled && self.factual_pointwise,
            factual_pairwise: self.ccss_enabled && self.factual_pairwise,
            counterfactual_pairwise: self.ccss_enabled && self.counterfactual_pairwise,
        }
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        variant.apply(&mut self);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Named flag settings: the baseline, full CCSS and its four ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Ccss,
    OnlyFactualPairwise,
    OnlyCounterfactualPairwise,
    EqualProbabilityDisturb,
    OnlyFactualPointwise,
}

impl Variant {
    /// Full CCSS followed by its four ablations.
    pub const ABLATION: [Variant; 5] = [
        Variant::Ccss,
        Variant::OnlyFactualPairwise,
        Variant::OnlyCounterfactualPairwise,
        Variant::EqualProbabilityDisturb,
        Variant::OnlyFactualPointwise,
    ];

    pub fn apply(self, cfg: &mut TrainConfig) {
        let (on, fpw, cfpw, fpt, uni) = match self {
            Variant::Baseline => (false, false, false, false, false),
            Variant::Ccss => (true, true, true, true, false),
            Variant::OnlyFactualPairwise => (true, true, false, false, false),
            Variant::OnlyCounterfactualPairwise => (true, false, true, false, false),
            Variant::EqualProbabilityDisturb => (true, true, true, true, true),
            Variant::OnlyFactualPointwise => (true, false, false, true, false),
        };
        cfg.ccss_enabled = on;
        cfg.factual_pairwise = fpw;
        cfg.counterfactual_pairwise = cfpw;
        cfg.factual_pointwise = fpt;
        cfg.uniform_disturb = uni;
    }

    /// Report label for a DNN backbone.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "DNN",
            Variant::Ccss => "DNN+CCSS",
            Variant::OnlyFactualPairwise => "DNN(Only Factual Pairwise loss)",
            Variant::OnlyCounterfactualPairwise => "DNN(Only Counterfactual Pairwise loss)",
            Variant::EqualProbabilityDisturb => "DNN(Equal Probability Random Disturb)",
            Variant::OnlyFactualPointwise => "DNN(Only Factual Pointwise loss)",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Ccss => "ccss",
            Variant::OnlyFactualPairwise => "only_factual_pairwise",
            Variant::OnlyCounterfactualPairwise => "only_counterfactual_pairwise",
            Variant::EqualProbabilityDisturb => "equal_probability_disturb",
            Variant::OnlyFactualPointwise => "only_factual_pointwise",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Variant::Baseline]
            .into_iter()
            .chain(Variant::ABLATION)
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

/// Negative log-likelihood with the prediction clamped to `[1e-7, 1 - 1e-7]`.
pub fn pointwise_loss(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label != 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn pairwise_hinge(hi: f64, lo: f64, margin: f64) -> f64 {
    (margin - (hi - lo)).max(0.0)
}

/// Per-sample loss terms; pairwise terms already carry the `alpha` factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub original: f64,
    pub factual: f64,
    pub factual_pair: f64,
    pub counterfactual_pair: f64,
}

impl LossBreakdown {
    pub fn pointwise(&self) -> f64 {
        self.original + self.factual
    }

    pub fn pairwise(&self) -> f64 {
        self.factual_pair + self.counterfactual_pair
    }

    pub fn total(&self) -> f64 {
        self.pointwise() + self.pairwise()
    }

    fn add(&mut self, o: &LossBreakdown) {
        self.original += o.original;
        self.factual += o.factual;
        self.factual_pair += o.factual_pair;
        self.counterfactual_pair += o.counterfactual_pair;
    }

    fn scale(&mut self, s: f64) {
        self.original *= s;
        self.factual *= s;
        self.factual_pair *= s;
        self.counterfactual_pair *= s;
    }
}

/// Probabilities for one triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriplePreds {
    pub original: f64,
    pub factual: Option<f64>,
    pub counterfactual: Option<f64>,
}

/// Logit gradients for one triple.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TripleGrads {
    pub original: f64,
    pub factual: f64,
    pub counterfactual: f64,
}

/// Adds the gradient of `alpha * h(hi, lo)` with respect to both logits.
fn hinge_into(hi: f64, lo: f64, cfg: &TrainConfig, g_hi: &mut f64, g_lo: &mut f64) -> f64 {
    let h = pairwise_hinge(hi, lo, cfg.margin);
    if h > 0.0 {
        *g_hi -= cfg.alpha * hi * (1.0 - hi);
        *g_lo += cfg.alpha * lo * (1.0 - lo);
    }
    cfg.alpha * h
}

/// Composite loss of one triple and its gradient with respect to each logit.
/// The pointwise logit gradient is `p - y` even where the clamp binds.
pub fn composite_loss(preds: TriplePreds, label: u8, cfg: &TrainConfig) -> (LossBreakdown, TripleGrads) {
    let terms = cfg.terms();
    let y = f64::from(label != 0);
    let mut loss = LossBreakdown {
        original: pointwise_loss(preds.original, label),
        ..LossBreakdown::default()
    };
    let mut g = TripleGrads {
        original: preds.original - y,
        ..TripleGrads::default()
    };
    let o = preds.original;
    if let Some(f) = preds.factual {
        if terms.factual_pointwise {
            loss.factual = pointwise_loss(f, label);
            g.factual += f - y;
        }
        if terms.factual_pairwise {
            loss.factual_pair = if label != 0 {
                hinge_into(f, o, cfg, &mut g.factual, &mut g.original)
            } else {
                hinge_into(o, f, cfg, &mut g.original, &mut g.factual)
            };
        }
    }
    if let Some(c) = preds.counterfactual {
        if terms.counterfactual_pairwise {
            loss.counterfactual_pair = if label != 0 {
                hinge_into(o, c, cfg, &mut g.original, &mut g.counterfactual)
            } else {
                hinge_into(c, o, cfg, &mut g.counterfactual, &mut g.original)
            };
        }
    }
    (loss, g)
}

/// Mean composite loss over a batch and its parameter gradients.
/// `disturb[i]` names the numerical field disturbed for `batch[i]`; it is
/// ignored when no CCSS term is active.
pub fn batch_objective(
    model: &Model,
    encoder: &FeatureEncoder,
    batch: &[&EncodedSample],
    disturb: &[usize],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let terms = cfg.terms();
    let mut rows: Vec<Features> = Vec::new();
    // Row index of each sample's original, factual and counterfactual.
    let mut slots: Vec<(usize, Option<usize>, Option<usize>)> = Vec::with_capacity(batch.len());
    if terms.any() {
        if disturb.len() != batch.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} disturb fields for {} samples",
                disturb.len(),
                batch.len()
            )));
        }
        let mut extra = Vec::new();
        for (i, (s, &j)) in batch.iter().zip(disturb).enumerate() {
            let field = encoder
                .numerical
                .get(j)
                .ok_or_else(|| Error::ShapeMismatch(format!("no numerical field {j}")))?;
            let t = synthesize_triple(s, j, field)?;
            let f = match t.factual {
                Some(f) if terms.factual_pointwise || terms.factual_pairwise => {
                    extra.push(f.features);
                    Some(batch.len() + extra.len() - 1)
                }
                _ => None,
            };
            let c = match t.counterfactual {
                Some(c) if terms.counterfactual_pairwise => {
                    extra.push(c);
                    Some(batch.len() + extra.len() - 1)
                }
                _ => None,
            };
            slots.push((i, f, c));
        }
        rows = extra;
    } else {
        slots.extend((0..batch.len()).map(|i| (i, None, None)));
    }
    let mut refs: Vec<&Features> = batch.iter().map(|s| &s.features).collect();
    refs.extend(rows.iter());
    let pass = model.forward(&refs)?;
    let probs = pass.probabilities();
    let scale = 1.0 / batch.len() as f64;
    let mut dlogits = vec![0.0; refs.len()];
    let mut total = LossBreakdown::default();
    for (s, &(o, f, c)) in batch.iter().zip(&slots) {
        let preds = TriplePreds {
            original: probs[o],
            factual: f.map(|r| probs[r]),
            counterfactual: c.map(|r| probs[r]),
        };
        let (loss, g) = composite_loss(preds, s.label, cfg);
        total.add(&loss);
        dlogits[o] += g.original * scale;
        if let Some(r) = f {
            dlogits[r] += g.factual * scale;
        }
        if let Some(r) = c {
            dlogits[r] += g.counterfactual * scale;
        }
    }
    total.scale(scale);
    let grads = model.backward(&pass, &dlogits)?;
    Ok((total, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub pointwise_loss: f64,
    pub pairwise_loss: f64,
    pub total_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Training-set AUC after the last epoch; absent for single-class data.
    pub train_auc: Option<f64>,
}

impl TrainReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Disturb-field distribution implied by the config, if any term needs one.
pub fn disturb_probabilities(
    cfg: &TrainConfig,
    encoder: &FeatureEncoder,
    importance: Option<&ImportanceProfile>,
) -> Result<Option<Vec<f64>>> {
    if !cfg.terms().any() {
        return Ok(None);
    }
    if cfg.uniform_disturb {
        return uniform_distribution(&encoder.eligibility()).map(Some);
    }
    let profile = importance.ok_or_else(|| {
        Error::InvalidConfig("an importance profile is required unless uniform_disturb is set".into())
    })?;
    profile.check_against(encoder)?;
    let p = profile.p();
    if !p.iter().zip(encoder.eligibility()).any(|(&v, e)| e && v > 0.0) {
        return Err(Error::NoEligibleFields);
    }
    // An ineligible field can never be disturbed even if the file says otherwise.
    Ok(Some(
        p.iter()
            .zip(encoder.eligibility())
            .map(|(&v, e)| if e { v } else { 0.0 })
            .collect(),
    ))
}

/// Trains a fresh model. Initialization uses `cfg.seed`; shuffling and
/// disturb-field draws use a separate stream of the same seed.
pub fn train(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    encoder: &FeatureEncoder,
    samples: &[EncodedSample],
    importance: Option<&ImportanceProfile>,
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = disturb_probabilities(cfg, encoder, importance)?;
    let mut model = Model::build(spec, encoder, cfg.seed)?;
    let mut rng = Rng::new(cfg.seed).derive(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut lr = cfg.lr;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let disturb: Vec<usize> = match &p {
            Some(p) => order.iter().map(|_| sample_disturb_field(p, &mut rng)).collect(),
            None => Vec::new(),
        };
        let adam = cfg.adam(lr);
        let mut sum = LossBreakdown::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&EncodedSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let start = b * cfg.batch_size;
            let fields = if disturb.is_empty() {
                &[][..]
            } else {
                &disturb[start..start + chunk.len()]
            };
            let (mut loss, grads) = batch_objective(&model, encoder, &batch, fields, cfg)?;
            if !loss.total().is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("{loss:?}"),
                });
            }
            adam_step(model.params_mut(), &grads, &adam).map_err(|e| Error::NonFiniteLoss {
                epoch,
                batch: b,
                detail: e.to_string(),
            })?;
            loss.scale(chunk.len() as f64);
            sum.add(&loss);
        }
        sum.scale(1.0 / samples.len() as f64);
        epochs.push(EpochStats {
            epoch,
            lr,
            pointwise_loss: sum.pointwise(),
            pairwise_loss: sum.pairwise(),
            total_loss: sum.total(),
        });
        lr *= cfg.lr_decay;
    }
    let scores = model.predict(samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let train_auc = auc(&scores, &labels).ok();
    Ok((model, TrainReport { epochs, train_auc }))
}
