use super::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Denominator floor for relative errors; keeps round-off in near-zero
/// gradients from dominating the ratio.
const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the analytic gradient returned by `eval` against central
/// differences of its loss, perturbing every scalar parameter by `±eps`.
pub fn finite_diff_check<F>(store: &ParamStore, eps: f64, eval: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (loss, analytic) = eval(store)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (idx, (name, _)) in store.iter().enumerate() {
        let id = super::ParamId(idx);
        let analytic_t = analytic
            .by_name(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&probe)?.0;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&probe)?.0;
            probe.get_mut(id).data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("loss near `{name}`[{i}]")));
            }
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(analytic_t.data()[i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
