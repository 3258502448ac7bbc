//! Central finite-difference gradient checking.

use crate::error::{Error, Result};

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of [`relative_error`]: below this magnitude both
/// gradients count as zero and the error is effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest [`relative_error`] over the checked coordinates.
    pub max_rel_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / REL_FLOOR.max(a.abs()).max(b.abs())
}

/// Checks every coordinate of `analytic` against central differences of `f`
/// around `point`.
///
/// ```
/// use znet::tensor::grad_check;
///
/// // f(x) = Σ relu(x)
/// let f = |x: &[f64]| x.iter().map(|v| v.max(0.0)).sum::<f64>();
/// let report = grad_check(f, &[-1.0, 2.0], &[0.0, 1.0]).unwrap();
/// assert!(report.max_rel_error < 1e-8);
/// ```
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64]) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, analytic, &coords)
}

/// Like [`grad_check`] but only probes the listed coordinates.
pub fn grad_check_coords<F>(
    f: F,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    grad_check_step(f, point, analytic, coords, FD_STEP)
}

/// Like [`grad_check_coords`] with perturbation `step`. Piecewise-linear
/// networks need a small step so that few probes straddle a ReLU or
/// max-pool switch.
pub fn grad_check_step<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if point.len() != analytic.len() {
        return Err(Error::shape(format!(
            "grad_check: point has {} coordinates but gradient has {}",
            point.len(),
            analytic.len()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = point.to_vec();
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::contract(format!(
                "grad_check: function is not finite around coordinate {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}
