//! Central finite-difference checking of analytic gradients.

use crate::autodiff::{GradStore, Graph, ParamSet, Var};
use crate::error::Result;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitude below which gradient differences are measured absolutely.
///
/// Central differences on an `f64` loss of magnitude `L` carry roughly
/// `1e-16 * L / step` of rounding noise, so relative error is only
/// meaningful for gradients comfortably above that level.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)`.
    pub max_rel_error: f64,
    /// Parameter name and element index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the analytic gradient of `build`'s scalar loss with central
/// differences for every element of every parameter in `params`.
///
/// `params` is perturbed in place and restored before returning.
pub fn grad_check<F>(params: &mut ParamSet, build: F, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic: GradStore = {
        let mut grads = params.zero_grads();
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        g.backward(loss, &mut grads)?;
        grads
    };
    let eval = |params: &ParamSet| -> Result<f64> {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        g.value(loss).item()
    };

    let mut max_rel_error = 0.0f64;
    let mut worst = None;
    let mut checked = 0;
    for id in 0..params.len() {
        for j in 0..params.value(id).numel() {
            let original = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = original + step;
            let plus = eval(params)?;
            params.value_mut(id).data_mut()[j] = original - step;
            let minus = eval(params)?;
            params.value_mut(id).data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let exact = analytic.get(id).data()[j];
            let denom = exact.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let rel = (exact - numeric).abs() / denom;
            if rel > max_rel_error || rel.is_nan() {
                max_rel_error = rel;
                worst = Some((params.get(id).name.clone(), j));
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst,
        checked,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}
