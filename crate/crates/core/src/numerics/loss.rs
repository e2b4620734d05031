use super::norm;
use crate::error::{check_dim, Result};

const NORM_FLOOR: f64 = 1e-12;

/// Cosine similarity; 0 when either vector has (near-)zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("cosine operands", a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return Ok(0.0);
    }
    Ok(dot_unchecked(a, b) / (na * nb))
}

/// Adds `scale · ∂cos(a,b)/∂a` into `da` and likewise for `db`.
pub fn cosine_backward(a: &[f64], b: &[f64], scale: f64, da: &mut [f64], db: &mut [f64]) {
    let (na, nb) = (norm(a), norm(b));
    if na < NORM_FLOOR || nb < NORM_FLOOR || scale == 0.0 {
        return;
    }
    let inv = 1.0 / (na * nb);
    let s = dot_unchecked(a, b) * inv;
    let (ka, kb) = (s / (na * na), s / (nb * nb));
    for k in 0..a.len() {
        da[k] += scale * (b[k] * inv - ka * a[k]);
        db[k] += scale * (a[k] * inv - kb * b[k]);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("dot operands", a.len(), b.len())?;
    Ok(dot_unchecked(a, b))
}

fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hinge `max(0, margin + neg − pos)`. At the hinge point the subgradient is
/// taken as zero, see [`hinge_active`].
pub fn margin_loss(pos_sim: f64, neg_sim: f64, margin: f64) -> f64 {
    let v = margin + neg_sim - pos_sim;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub(crate) fn hinge_active(pos_sim: f64, neg_sim: f64, margin: f64) -> bool {
    margin + neg_sim - pos_sim > 0.0
}

/// Similarity used for ranking and for the margin losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl Similarity {
    pub fn eval(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Similarity::Cosine => cosine(a, b),
            Similarity::Dot => dot(a, b),
        }
    }

    pub fn backward(self, a: &[f64], b: &[f64], scale: f64, da: &mut [f64], db: &mut [f64]) {
        match self {
            Similarity::Cosine => cosine_backward(a, b, scale, da, db),
            Similarity::Dot => {
                for k in 0..a.len() {
                    da[k] += scale * b[k];
                    db[k] += scale * a[k];
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Similarity::Cosine => "cosine",
            Similarity::Dot => "dot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(Similarity::Cosine),
            "dot" => Some(Similarity::Dot),
            _ => None,
        }
    }
}
