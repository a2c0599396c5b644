use super::Tensor;

/// Worst elementwise disagreement between an analytic gradient and central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Relative error with a `1e-8` floor on the denominator.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic_grad` against `(f(x+eps·e_i) − f(x−eps·e_i)) / 2eps` for every `i`.
///
/// `analytic_grad` must have the same number of elements as `x`.
pub fn grad_check(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    analytic_grad: &Tensor,
    eps: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic_grad.len(), "gradient/input length mismatch");
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic_grad.data()[0],
        numeric: f64::NAN,
    };
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let analytic = analytic_grad.data()[i];
        let err = rel_error(analytic, numeric);
        if i == 0 || err > report.max_rel_error || err.is_nan() {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                analytic,
                numeric,
            };
        }
    }
    report
}
