//! Central finite-difference oracle for parameter gradients (64-bit).

use super::params::ParamStore;

/// Magnitude below which entries are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error among entries with magnitude ≥ [`ABS_FLOOR`].
    pub max_rel_err: f64,
    /// Largest absolute error among the remaining tiny entries.
    pub max_abs_err_small: f64,
    /// Name and flat index of the worst relative entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol && self.max_abs_err_small < tol
    }
}

/// Central differences `(f(p + h) − f(p − h)) / 2h` for every parameter entry.
pub fn numeric_gradient(
    params: &ParamStore<f64>,
    h: f64,
    mut f: impl FnMut(&ParamStore<f64>) -> f64,
) -> ParamStore<f64> {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for id in params.ids().collect::<Vec<_>>() {
        let n = params.get(id).len();
        for k in 0..n {
            let orig = params.get(id).as_slice().unwrap()[k];
            probe.get_mut(id).as_slice_mut().unwrap()[k] = orig + h;
            let up = f(&probe);
            probe.get_mut(id).as_slice_mut().unwrap()[k] = orig - h;
            let down = f(&probe);
            probe.get_mut(id).as_slice_mut().unwrap()[k] = orig;
            out.get_mut(id).as_slice_mut().unwrap()[k] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// Fourth-order central differences:
/// `(8[f(p + h/2) − f(p − h/2)] − [f(p + h) − f(p − h)]) / 6h`, the
/// Richardson extrapolation of two central differences. Its truncation error
/// is O(h⁴), which allows a larger `h` and so less rounding noise on entries
/// that are small relative to `f`.
pub fn numeric_gradient_richardson(
    params: &ParamStore<f64>,
    h: f64,
    mut f: impl FnMut(&ParamStore<f64>) -> f64,
) -> ParamStore<f64> {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for id in params.ids().collect::<Vec<_>>() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).as_slice().unwrap()[k];
            let mut at = |offset: f64| {
                probe.get_mut(id).as_slice_mut().unwrap()[k] = orig + offset;
                f(&probe)
            };
            let wide = at(h) - at(-h);
            let narrow = at(h / 2.0) - at(-h / 2.0);
            probe.get_mut(id).as_slice_mut().unwrap()[k] = orig;
            out.get_mut(id).as_slice_mut().unwrap()[k] = (8.0 * narrow - wide) / (6.0 * h);
        }
    }
    out
}

pub fn compare(analytic: &ParamStore<f64>, numeric: &ParamStore<f64>) -> GradCheckReport {
    assert!(analytic.same_layout(numeric), "gradient layouts differ");
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        worst: None,
        checked: 0,
    };
    for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        for (k, (&x, &y)) in a.iter().zip(n.iter()).enumerate() {
            report.checked += 1;
            let scale = x.abs().max(y.abs());
            let diff = (x - y).abs();
            if scale < ABS_FLOOR {
                report.max_abs_err_small = report.max_abs_err_small.max(diff);
            } else if diff / scale > report.max_rel_err || diff.is_nan() {
                report.max_rel_err = if diff.is_nan() { f64::INFINITY } else { diff / scale };
                report.worst = Some((name.to_owned(), k));
            }
        }
    }
    report
}

/// Runs [`numeric_gradient`] with step `h` and compares with `analytic`.
pub fn check(
    params: &ParamStore<f64>,
    analytic: &ParamStore<f64>,
    h: f64,
    f: impl FnMut(&ParamStore<f64>) -> f64,
) -> GradCheckReport {
    compare(analytic, &numeric_gradient(params, h, f))
}

/// [`check`] with [`numeric_gradient_richardson`].
pub fn check_richardson(
    params: &ParamStore<f64>,
    analytic: &ParamStore<f64>,
    h: f64,
    f: impl FnMut(&ParamStore<f64>) -> f64,
) -> GradCheckReport {
    compare(analytic, &numeric_gradient_richardson(params, h, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn richardson_is_exact_for_quartics() {
        let mut p = ParamStore::new();
        p.insert("w", array![[0.7, -1.3, 2.0]]).unwrap();
        let f = |s: &ParamStore<f64>| s.by_name("w").unwrap().iter().map(|v| v.powi(4)).sum::<f64>();
        let exact = p.by_name("w").unwrap().mapv(|v: f64| 4.0 * v.powi(3));
        let h = 1e-2;
        let err = |g: ParamStore<f64>| (g.by_name("w").unwrap() - &exact).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err(numeric_gradient_richardson(&p, h, f)) < 1e-10);
        // Second-order stencil: error h²·f'''/6 = 4h²·w.
        assert!(err(numeric_gradient(&p, h, f)) > 1e-4);
    }
}
