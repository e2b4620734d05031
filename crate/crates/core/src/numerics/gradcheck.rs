use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tensor::Param;

/// Exposes every trainable tensor of a model by name, in a fixed order.
pub trait Parameterized {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value.data().len());
        n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryFailure {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// Richardson extrapolation of the steps `h` and `h/2` (error `O(h⁴)`),
    /// used to tell truncation error apart from a wrong gradient.
    pub extrapolated: f64,
    pub extrapolated_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tol: f64,
    pub max_rel_err: f64,
    pub per_param: Vec<ParamError>,
    pub failing: Vec<EntryFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }

    /// Failing entries that the extrapolated difference does not explain.
    pub fn unexplained(&self) -> impl Iterator<Item = &EntryFailure> {
        self.failing.iter().filter(|f| !(f.extrapolated_rel_err < self.tol))
    }

    pub fn entries_checked(&self) -> usize {
        self.per_param.iter().map(|p| p.entries).sum()
    }
}

/// Relative error `|a − n| / max(|a|, |n|, 1e−8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradients currently stored in `model`'s params against
/// central differences of `loss`. Values are restored afterwards; gradients
/// are left as they were.
pub fn grad_check<M, F>(model: &mut M, loss: F, step: f64, tol: f64) -> GradCheckReport
where
    M: Parameterized + ?Sized,
    F: Fn(&M) -> f64,
{
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |name, p| analytic.push((name.to_string(), p.grad.data().to_vec())));

    let mut report = GradCheckReport {
        step,
        tol,
        max_rel_err: 0.0,
        per_param: Vec::with_capacity(analytic.len()),
        failing: Vec::new(),
    };

    for (k, (name, grads)) in analytic.iter().enumerate() {
        let mut stats = ParamError {
            name: name.clone(),
            entries: grads.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for (j, &a) in grads.iter().enumerate() {
            let numeric = central_difference(model, &loss, k, j, step);
            let rel = relative_error(a, numeric);
            stats.max_rel_err = stats.max_rel_err.max(rel);
            stats.max_abs_err = stats.max_abs_err.max((a - numeric).abs());
            if !(rel < tol) {
                let half = central_difference(model, &loss, k, j, step / 2.0);
                let extrapolated = (4.0 * half - numeric) / 3.0;
                report.failing.push(EntryFailure {
                    name: name.clone(),
                    index: j,
                    analytic: a,
                    numeric,
                    rel_err: rel,
                    extrapolated,
                    extrapolated_rel_err: relative_error(a, extrapolated),
                });
            }
        }
        report.max_rel_err = report.max_rel_err.max(stats.max_rel_err);
        report.per_param.push(stats);
    }
    report
}

fn central_difference<M, F>(model: &mut M, loss: &F, param: usize, entry: usize, step: f64) -> f64
where
    M: Parameterized + ?Sized,
    F: Fn(&M) -> f64,
{
    let orig = nudge(model, param, entry, |v| *v);
    nudge(model, param, entry, |v| *v = orig + step);
    let plus = loss(model);
    nudge(model, param, entry, |v| *v = orig - step);
    let minus = loss(model);
    nudge(model, param, entry, |v| *v = orig);
    (plus - minus) / (2.0 * step)
}

fn nudge<M, R>(model: &mut M, param: usize, entry: usize, f: impl FnOnce(&mut f64) -> R) -> R
where
    M: Parameterized + ?Sized,
{
    let mut f = Some(f);
    let mut out = None;
    let mut k = 0;
    model.visit_params_mut(&mut |_, p| {
        if k == param {
            if let Some(f) = f.take() {
                out = Some(f(&mut p.value.data_mut()[entry]));
            }
        }
        k += 1;
    });
    out.expect("parameter index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use alloc::vec;

    struct Linear {
        w: Param,
        x: Vec<f64>,
    }

    impl Parameterized for Linear {
        fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
            f("w", &self.w);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
            f("w", &mut self.w);
        }
    }

    fn linear_loss(m: &Linear) -> f64 {
        m.w.value.data().iter().zip(&m.x).map(|(w, x)| w * x).sum()
    }

    #[test]
    fn linear_loss_is_exact() {
        let x = vec![0.3, -1.7, 2.5, 0.01];
        let mut m = Linear {
            w: Param::new(Matrix::from_vec(1, 4, vec![1.0, 2.0, -0.5, 4.0]).unwrap()),
            x: x.clone(),
        };
        m.w.grad.data_mut().copy_from_slice(&x);
        let before = m.w.value.clone();
        let r = grad_check(&mut m, linear_loss, 1e-3, 1e-10);
        assert!(r.passed());
        assert!(r.max_rel_err < 1e-10);
        assert_eq!(m.w.value, before);
        assert_eq!(r.entries_checked(), 4);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let mut m = Linear {
            w: Param::zeros(1, 3),
            x: vec![1.0, 2.0, 3.0],
        };
        m.w.grad.data_mut().copy_from_slice(&[1.0, 2.5, 3.0]);
        let r = grad_check(&mut m, linear_loss, 1e-3, 1e-4);
        assert!(!r.passed());
        assert_eq!(r.failing.len(), 1);
        assert_eq!(r.failing[0].index, 1);
        assert_eq!(r.per_param[0].name, "w");
    }
}
