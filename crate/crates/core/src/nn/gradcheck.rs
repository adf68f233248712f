//! Central finite-difference gradient checks.

/// Default stencil step.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Default denominator floor for relative errors.
pub const DEFAULT_FLOOR: f64 = 1e-7;

use super::{flatten, Params};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Largest per-element relative error.
    pub max_relative_error: f64,
    /// Name of the tensor holding the worst element.
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Five-point central-difference gradient of `loss` with respect to every
/// scalar in `params`:
/// `(−L(θ+2h) + 8L(θ+h) − 8L(θ−h) + L(θ−2h)) / 12h`.
pub fn numeric_gradient<P, F>(params: &P, step: f64, mut loss: F) -> Vec<f64>
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
{
    let n = flatten(params).len();
    let mut work = params.clone();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let original = nudge(&mut work, i, None);
        let mut at = |offset: f64| {
            nudge(&mut work, i, Some(original + offset));
            loss(&work)
        };
        let (p2, p1, m1, m2) = (at(2.0 * step), at(step), at(-step), at(-2.0 * step));
        nudge(&mut work, i, Some(original));
        out.push((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step));
    }
    out
}

/// Sets element `index` (in visiting order) to `value`, returning the
/// previous value.
fn nudge<P: Params>(p: &mut P, index: usize, value: Option<f64>) -> f64 {
    let mut offset = 0;
    let mut previous = f64::NAN;
    p.for_each_mut(&mut |_, data| {
        if (offset..offset + data.len()).contains(&index) {
            previous = data[index - offset];
            if let Some(v) = value {
                data[index - offset] = v;
            }
        }
        offset += data.len();
    });
    previous
}

/// Compares `analytic` (same layout as `params`) against central
/// differences of `loss`.
pub fn check<P, F>(params: &P, analytic: &P, step: f64, floor: f64, loss: F) -> GradCheck
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
{
    let numeric = numeric_gradient(params, step, loss);
    let analytic_flat = flatten(analytic);
    assert_eq!(numeric.len(), analytic_flat.len(), "gradient layout mismatch");

    let mut names = Vec::with_capacity(numeric.len());
    params.for_each(&mut |name, _, data| names.extend(std::iter::repeat_n(name.to_string(), data.len())));

    let mut result = GradCheck {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: numeric.len(),
    };
    for (i, (&a, &n)) in analytic_flat.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n, floor);
        if err > result.max_relative_error || !err.is_finite() {
            result.max_relative_error = err;
            result.worst_param = names[i].clone();
            result.worst_analytic = a;
            result.worst_numeric = n;
        }
    }
    result
}
