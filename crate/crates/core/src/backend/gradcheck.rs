use super::Param;
use crate::Result;

/// Gradients smaller than this in magnitude are treated as zero.
pub const ZERO_GRADIENT: f64 = 1e-9;

/// A scalar function of a parameter set that can also report its gradient.
pub trait Objective {
    fn params_mut(&mut self) -> Vec<&mut Param<f64>>;

    /// Evaluates the function. With `with_grad` set, gradients are accumulated
    /// into the parameters; otherwise no observable state may change.
    fn evaluate(&mut self, with_grad: bool) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares analytic gradients against central differences with step `h`.
///
/// The error per coordinate is `|g_a - g_fd| / (|g_a| + |g_fd|)`. Coordinates
/// where both magnitudes are below [`ZERO_GRADIENT`] count as exact agreement
/// (for example a bias feeding batch norm, whose gradient is identically zero
/// and whose difference quotient is pure rounding noise).
pub fn grad_check<O: Objective + ?Sized>(obj: &mut O, h: f64) -> Result<GradCheckReport> {
    for p in obj.params_mut() {
        p.zero_grad();
    }
    obj.evaluate(true)?;
    let analytic: Vec<Vec<f64>> = obj
        .params_mut()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &ga) in grads.iter().enumerate() {
            let orig = obj.params_mut()[pi].value.data()[i];
            obj.params_mut()[pi].value.data_mut()[i] = orig + h;
            let plus = obj.evaluate(false)?;
            obj.params_mut()[pi].value.data_mut()[i] = orig - h;
            let minus = obj.evaluate(false)?;
            obj.params_mut()[pi].value.data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let err = if ga.abs().max(fd.abs()) < ZERO_GRADIENT {
                0.0
            } else {
                (ga - fd).abs() / (ga.abs() + fd.abs())
            };
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((obj.params_mut()[pi].name.clone(), i));
            }
        }
    }
    Ok(report)
}
