use super::tensor::Param;

/// Default AdaGrad denominator guard.
pub const ADAGRAD_EPS: f64 = 1e-8;

/// `accum += grad²; value −= lr·grad/(√accum + eps); grad = 0`.
pub fn adagrad_update(p: &mut Param, lr: f64, eps: f64) {
    step_slice(
        p.value.data_mut(),
        p.grad.data_mut(),
        p.accum.data_mut(),
        lr,
        eps,
    );
}

/// AdaGrad restricted to the given rows, for sparsely touched embedding
/// tables. Rows outside `rows` keep their (zero) gradient untouched.
pub fn adagrad_update_rows(p: &mut Param, rows: impl IntoIterator<Item = usize>, lr: f64, eps: f64) {
    for r in rows {
        step_slice(
            p.value.row_mut(r),
            p.grad.row_mut(r),
            p.accum.row_mut(r),
            lr,
            eps,
        );
    }
}

fn step_slice(value: &mut [f64], grad: &mut [f64], accum: &mut [f64], lr: f64, eps: f64) {
    for ((v, g), a) in value.iter_mut().zip(grad.iter_mut()).zip(accum.iter_mut()) {
        if *g != 0.0 {
            *a += *g * *g;
            *v -= lr * *g / (libm::sqrt(*a) + eps);
        }
        *g = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use alloc::vec;

    fn scalar(value: f64, grad: f64) -> Param {
        let mut p = Param::new(Matrix::from_vec(1, 1, vec![value]).unwrap());
        p.grad.data_mut()[0] = grad;
        p
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar(1.0, 2.0);
        adagrad_update(&mut p, 0.1, 0.0);
        assert_eq!(p.accum.data()[0], 4.0);
        assert!((p.value.data()[0] - 0.9).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(3.0, 0.0);
        adagrad_update(&mut p, 0.1, 1e-8);
        assert_eq!(p.value.data()[0], 3.0);
        assert_eq!(p.accum.data()[0], 0.0);
    }

    #[test]
    fn two_unit_steps() {
        let mut p = scalar(0.0, 1.0);
        adagrad_update(&mut p, 1.0, 0.0);
        assert_eq!(p.value.data()[0], -1.0);
        p.grad.data_mut()[0] = 1.0;
        adagrad_update(&mut p, 1.0, 0.0);
        let delta = p.value.data()[0] + 1.0;
        assert!((delta + 1.0 / libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn accumulator_is_monotone_and_step_bounded() {
        let mut p = Param::zeros(2, 3);
        let grads = [0.5, -3.0, 1e-3, 7.0, -0.2, 2.0];
        for round in 0..4 {
            let before = p.value.clone();
            let acc_before = p.accum.clone();
            for (g, s) in p.grad.data_mut().iter_mut().zip(grads) {
                *g = s * (round as f64 + 1.0);
            }
            adagrad_update(&mut p, 0.3, 0.0);
            for k in 0..6 {
                assert!(p.accum.data()[k] >= acc_before.data()[k]);
                assert!((p.value.data()[k] - before.data()[k]).abs() <= 0.3 + 1e-15);
            }
        }
    }

    #[test]
    fn row_update_only_touches_listed_rows() {
        let mut p = Param::zeros(3, 2);
        p.grad.fill(1.0);
        adagrad_update_rows(&mut p, [1], 0.5, 0.0);
        assert_eq!(p.value.row(0), &[0.0, 0.0]);
        assert_eq!(p.value.row(1), &[-0.5, -0.5]);
        assert_eq!(p.grad.row(1), &[0.0, 0.0]);
        assert_eq!(p.grad.row(2), &[1.0, 1.0]);
    }
}
