//! Central finite-difference verification of tape gradients (64-bit).

use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Denominator floor for relative error, so gradients that are zero up to
/// round-off are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Parameter name, flat index, analytic and numeric value at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<L>(loss_fn: &L, params: &ParamSet<f64>) -> Result<f64>
where
    L: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    let mut tape = Tape::new(false, 0);
    let loss = loss_fn(&mut tape, params)?;
    Ok(tape.value(loss).data()[0])
}

/// Compares tape gradients of `loss_fn` with central differences on every
/// trainable parameter, sampling at most `max_coords` evenly spaced entries
/// per tensor.
pub fn finite_difference_check<L>(
    params: &mut ParamSet<f64>,
    loss_fn: L,
    eps: f64,
    max_coords: usize,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    let mut tape = Tape::new(false, 0);
    let loss = loss_fn(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    let analytic = tape.param_grads(&grads, params);
    drop(tape);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates: 0,
        worst: None,
    };
    let ids: Vec<_> = params.ids().collect();
    for (id, grad) in ids.into_iter().zip(analytic) {
        if !params.get(id).trainable {
            continue;
        }
        let len = grad.len();
        let coords: Vec<usize> = if len <= max_coords {
            (0..len).collect()
        } else {
            (0..max_coords).map(|k| k * len / max_coords).collect()
        };
        for j in coords {
            let original = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = original + eps;
            let plus = evaluate(&loss_fn, params)?;
            params.value_mut(id).data_mut()[j] = original - eps;
            let minus = evaluate(&loss_fn, params)?;
            params.value_mut(id).data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grad.data()[j], numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((params.get(id).name.clone(), j, grad.data()[j], numeric));
            }
        }
    }
    Ok(report)
}
