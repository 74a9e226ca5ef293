//! Central finite-difference verification of hand-derived gradients.

use super::matrix::Real;
use super::params::ParamSet;

/// Floor on the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-8;
/// Default acceptance tolerance on the relative error.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Rounding error, in units of machine epsilon times the loss magnitude,
/// assumed for each loss evaluation.
pub const LOSS_ROUNDING_ULPS: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry within the tensor.
    pub worst_index: usize,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_pair: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// `(tensor, index)` of the first perturbation that produced a
    /// non-finite loss.
    pub non_finite: Option<(usize, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Relative error after discounting `resolution`, the smallest derivative
/// difference the central difference can distinguish from rounding noise.
pub fn resolved_relative_error(analytic: f64, numeric: f64, resolution: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    ((analytic - numeric).abs() - resolution).max(0.0) / denom
}

/// Checks `analytic` against `(f(θ+ε) − f(θ−ε)) / 2ε` for every scalar
/// parameter, using [`DEFAULT_TOLERANCE`]. Differences within the rounding
/// resolution of the loss, `LOSS_ROUNDING_ULPS · eps_mach · |f| / 2ε`, are
/// not counted.
pub fn grad_check<T, P, F>(params: &P, analytic: &P, eps: T, loss_fn: F) -> GradCheckReport
where
    T: Real,
    P: ParamSet<T> + Clone,
    F: FnMut(&P) -> T,
{
    grad_check_with_tolerance(params, analytic, eps, DEFAULT_TOLERANCE, loss_fn)
}

pub fn grad_check_with_tolerance<T, P, F>(
    params: &P,
    analytic: &P,
    eps: T,
    tolerance: f64,
    mut loss_fn: F,
) -> GradCheckReport
where
    T: Real,
    P: ParamSet<T> + Clone,
    F: FnMut(&P) -> T,
{
    let names = params.tensor_names();
    let analytic_tensors = analytic.tensors();
    assert_eq!(
        params.tensor_shapes(),
        analytic.tensor_shapes(),
        "analytic gradient layout differs from parameters"
    );
    let mut probe = params.clone();
    let two_eps = 2.0 * eps.as_f64();
    let mut tensors = Vec::with_capacity(names.len());
    let mut non_finite = None;

    for (t, name) in names.into_iter().enumerate() {
        let len = analytic_tensors[t].len();
        let mut check = TensorCheck {
            name,
            max_rel_error: 0.0,
            worst_index: 0,
            worst_pair: (0.0, 0.0),
        };
        for i in 0..len {
            let original = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = original + eps;
            let plus = loss_fn(&probe).as_f64();
            probe.tensors_mut()[t][i] = original - eps;
            let minus = loss_fn(&probe).as_f64();
            probe.tensors_mut()[t][i] = original;

            if !plus.is_finite() || !minus.is_finite() {
                non_finite.get_or_insert((t, i));
                check.max_rel_error = f64::INFINITY;
                check.worst_index = i;
                continue;
            }
            let numeric = (plus - minus) / two_eps;
            let resolution =
                LOSS_ROUNDING_ULPS * T::epsilon().as_f64() * plus.abs().max(minus.abs()) / two_eps;
            let analytic = analytic_tensors[t][i].as_f64();
            let err = resolved_relative_error(analytic, numeric, resolution);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = i;
                check.worst_pair = (analytic, numeric);
            }
        }
        tensors.push(check);
    }

    let max_rel_error = tensors
        .iter()
        .map(|c| c.max_rel_error)
        .fold(0.0, f64::max);
    GradCheckReport {
        pass: non_finite.is_none() && max_rel_error < tolerance,
        tensors,
        max_rel_error,
        tolerance,
        non_finite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct W(Vec<f64>);

    impl ParamSet<f64> for W {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn square_function() {
        let report = grad_check(&W(vec![3.0]), &W(vec![6.0]), 1e-4, |w: &W| w.0[0] * w.0[0]);
        assert!(report.pass);
        assert!(report.max_rel_error < 1e-6);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let report = grad_check(&W(vec![1.0, -2.0]), &W(vec![0.0, 0.0]), 1e-4, |_: &W| 5.0);
        assert!(report.pass);
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn wrong_gradient_fails() {
        let report = grad_check(&W(vec![3.0]), &W(vec![5.0]), 1e-4, |w: &W| w.0[0] * w.0[0]);
        assert!(!report.pass);
        assert_eq!(report.tensors[0].worst_index, 0);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let report = grad_check(&W(vec![0.0, 1.0]), &W(vec![0.0, 0.0]), 1e-4, |w: &W| {
            if w.0[1] > 1.0 {
                f64::NAN
            } else {
                0.0
            }
        });
        assert!(!report.pass);
        assert_eq!(report.non_finite, Some((0, 1)));
    }

    #[test]
    fn rounding_noise_on_tiny_gradients_is_discounted() {
        // loss of order 1 with a 1e-12 slope: the difference quotient at
        // eps 1e-6 is pure rounding noise
        let report = grad_check(&W(vec![0.3]), &W(vec![1e-12]), 1e-6, |w: &W| 1.0 + 1e-12 * w.0[0]);
        assert!(report.pass, "{}", report.max_rel_error);
        let e = resolved_relative_error(1.0, 1.1, 0.05);
        assert!((e - 0.05 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1e-9, 0.0), 1e-9 / REL_ERROR_FLOOR);
    }
}
