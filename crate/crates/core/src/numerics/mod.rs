//! Dense primitives, recurrent cells with hand-derived backward passes,
//! similarities, hinge loss, AdaGrad, finite-difference checking and rank
//! correlation.

mod egru;
mod gradcheck;
mod gru;
mod loss;
mod optim;
mod stats;
mod tensor;

pub use egru::{egru_step, EGruCache, EGruGrads, EGruParams};
pub use gradcheck::{grad_check, EntryFailure, GradCheckReport, ParamError, Parameterized};
pub use gru::{gru_step, GruCache, GruParams};
pub use loss::{cosine, cosine_backward, dot, margin_loss, Similarity};
pub(crate) use loss::hinge_active;
pub use optim::{adagrad_update, adagrad_update_rows, ADAGRAD_EPS};
pub use stats::{average_ranks, spearman};
pub use tensor::{Matrix, Param};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// `acc += x`
pub(crate) fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
