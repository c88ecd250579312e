//! Scoring networks: DNN, Wide&Deep and DCN over the shared
//! embeddings-plus-dense input.
//!
//! Every backbone starts from the same `x0` row:
//!
//! ```text
//! x0 = [E_1[c_1], ..., E_M[c_M], E'_1[b_1], ..., E'_N[b_N], dense_1, ..., dense_N]
//! ```
//!
//! with `M` categorical tables, `N` bucket tables (one per numerical field)
//! and the `N` transformed dense values, so `|x0| = (M + N) * d + N`.
//! Gradients are derived per layer; [`Model::backward`] returns them for the
//! mean loss whose per-row logit derivatives are supplied by the caller.

mod layers;
mod model;

pub use model::{ForwardPass, Model, ModelKind, ModelSpec};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
