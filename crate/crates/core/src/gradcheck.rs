//! Finite-difference verification of analytic gradients.
//!
//! [`grad_check`] re-evaluates a scalar objective with each trainable
//! parameter coordinate nudged by +/-eps and compares the centered
//! difference against the backward pass. Errors are normalized as
//! |a - n| / (1 + |a| + |n|), which behaves like absolute error for small
//! gradients and relative error for large ones. Frozen rows are skipped:
//! the loss is defined with them held constant.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Evaluated, ParameterStore};

/// Step size used by the acceptance checks.
pub const DEFAULT_EPS: f64 = 1e-4;
/// Error tolerance used by the acceptance checks.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Worst offending coordinate of one check.
#[derive(Debug, Clone)]
pub struct WorstCoord {
    pub param: String,
    pub flat_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    /// Highest normalized error per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
    pub worst: WorstCoord,
    pub max_error: f64,
    pub tol: f64,
    pub passed: bool,
    /// Coordinates actually compared (frozen rows excluded).
    pub coords_checked: usize,
}

/// Check the gradients of `build` at the current parameters.
///
/// `build` must be a pure function of the store: it is called once for the
/// analytic gradient and twice per coordinate for the finite differences.
pub fn grad_check<F>(
    mut build: F,
    params: &mut ParameterStore,
    eps: f64,
    tol: f64,
) -> Result<GradReport>
where
    F: FnMut(&ParameterStore) -> Result<Evaluated>,
{
    if !(eps > 0.0) || !(tol > 0.0) {
        return Err(Error::invalid("grad_check: eps and tol must be positive"));
    }
    if params.is_empty() {
        return Err(Error::invalid("grad_check: empty parameter store"));
    }

    let center = build(params)?;
    if !center.value().is_finite() {
        return Err(Error::non_finite("grad_check: objective at center"));
    }
    let analytic = center.gradients(params)?;

    let mut per_param = Vec::with_capacity(params.len());
    let mut worst: Option<WorstCoord> = None;
    let mut coords_checked = 0;

    for i in 0..params.len() {
        let name = String::from(params.param(i).name());
        let skip = params.param(i).frozen_scalars();
        let len = params.param(i).tensor().len();
        let mut param_max = 0.0f64;

        for k in skip..len {
            let original = params.param(i).tensor().data()[k];

            params.tensor_mut(i).data_mut()[k] = original + eps;
            let up = build(params)?.value();
            params.tensor_mut(i).data_mut()[k] = original - eps;
            let down = build(params)?.value();
            params.tensor_mut(i).data_mut()[k] = original;

            if !up.is_finite() || !down.is_finite() {
                return Err(Error::non_finite(
                    "grad_check: objective at perturbed point",
                ));
            }

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(i).data()[k];
            let err = (a - numeric).abs() / (1.0 + a.abs() + numeric.abs());
            coords_checked += 1;

            if err > param_max {
                param_max = err;
            }
            if worst.as_ref().map_or(true, |w| err > w.error) {
                worst = Some(WorstCoord {
                    param: name.clone(),
                    flat_index: k,
                    analytic: a,
                    numeric,
                    error: err,
                });
            }
        }
        per_param.push((name, param_max));
    }

    let worst = worst.ok_or_else(|| Error::invalid("grad_check: no trainable coordinates"))?;
    let max_error = worst.error;
    Ok(GradReport {
        per_param,
        max_error,
        tol,
        passed: max_error <= tol,
        worst,
        coords_checked,
    })
}
