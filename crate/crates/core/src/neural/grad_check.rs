//! Central finite-difference verification of the analytic gradient.

use super::{AttentionClassifier, NeuralError, Objective, Result};
use crate::corpus::Instance;
use crate::num::Real;

/// Gradients smaller than this in magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(tensor name, flat index)` of the worst parameter.
    pub worst: (&'static str, usize),
    pub checked: usize,
}

/// Compares the analytic gradient of `objective` on `instance` with central
/// differences `(L(θ+h) - L(θ-h)) / 2h` over every parameter.
///
/// The error for one parameter is `|g - g_fd| / max(|g|, |g_fd|, GRAD_FLOOR)`.
pub fn grad_check<T: Real>(
    model: &AttentionClassifier<T>,
    instance: &Instance,
    objective: &Objective<T>,
    step: T,
) -> Result<GradCheckReport> {
    if !(step > T::zero() && step <= T::lit(1e-2)) {
        return Err(NeuralError::Config(format!(
            "step {step} outside (0, 1e-2]"
        )));
    }
    let ids = model.encode(&instance.tokens);
    let mask = &instance.rationale_mask;
    let (_, analytic) = model.loss_and_grad(&ids, instance.label, mask, objective)?;

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: ("", 0),
        checked: 0,
    };
    let two = T::one() + T::one();
    for (k, name) in super::ParamTensors::<T>::NAMES.iter().enumerate() {
        let len = analytic.tensors()[k].len();
        for i in 0..len {
            let original = probe.params.tensors_mut()[k][i];
            probe.params.tensors_mut()[k][i] = original + step;
            let up = objective.loss(&probe.forward_ids(&ids)?, instance.label, mask)?;
            probe.params.tensors_mut()[k][i] = original - step;
            let down = objective.loss(&probe.forward_ids(&ids)?, instance.label, mask)?;
            probe.params.tensors_mut()[k][i] = original;

            let numeric = ((up - down) / (two * step)).as_f64();
            let exact = analytic.tensors()[k][i].as_f64();
            let denom = exact.abs().max(numeric.abs()).max(GRAD_FLOOR);
            let err = (exact - numeric).abs() / denom;
            if err > report.max_relative_error || !err.is_finite() {
                report.max_relative_error = err;
                report.worst = (name, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
