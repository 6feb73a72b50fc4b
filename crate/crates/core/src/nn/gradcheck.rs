//! Central finite-difference gradient checks against `candle` backprop.

use candle_core::{Tensor, Var};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Gradients smaller than this are compared absolutely; it sits above the
/// round-off of central differences on O(1) losses.
pub const ABSOLUTE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst_relative_error: f64,
    pub worst_entry: String,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backprop gradients of `loss` w.r.t. each variable with central
/// differences of step `h`, probing at most `max_entries` coordinates per
/// variable (all of them when the variable is small enough).
pub fn check_gradients<F>(
    vars: &[(String, Var)],
    loss: F,
    h: f64,
    max_entries: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor>,
{
    let l = loss()?;
    let grads = l.backward()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        checked: 0,
        worst_relative_error: 0.0,
        worst_entry: String::new(),
    };
    for (name, var) in vars {
        let original = var.as_tensor().detach().copy()?;
        let shape = original.shape().clone();
        let flat = original.flatten_all()?.to_vec1::<f64>()?;
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
            None => vec![0.0; flat.len()],
        };
        let idx: Vec<usize> = if flat.len() <= max_entries {
            (0..flat.len()).collect()
        } else {
            sample(&mut rng, flat.len(), max_entries).into_vec()
        };
        for i in idx {
            let mut probe = flat.clone();
            probe[i] = flat[i] + h;
            var.set(&Tensor::from_vec(probe.clone(), &shape, original.device())?)?;
            let plus = loss()?.to_scalar::<f64>()?;
            probe[i] = flat[i] - h;
            var.set(&Tensor::from_vec(probe, &shape, original.device())?)?;
            let minus = loss()?.to_scalar::<f64>()?;
            var.set(&original)?;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(analytic[i], numeric, ABSOLUTE_FLOOR);
            report.checked += 1;
            if rel > report.worst_relative_error {
                report.worst_relative_error = rel;
                report.worst_entry = format!(
                    "{name}[{i}]: analytic {:.6e} numeric {numeric:.6e}",
                    analytic[i]
                );
            }
        }
    }
    Ok(report)
}
