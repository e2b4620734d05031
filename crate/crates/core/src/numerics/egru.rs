use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{Matrix, Param};
use super::{sigmoid, tanh};
use crate::error::{check_dim, Result};
use crate::Rng;

/// Extended GRU composing a hidden state with two entity states: the head
/// entity (`*h` parameters) and the previous prediction (`*p` parameters).
///
/// `U*` matrices read the hidden state (`d_h × d_e`), `W*` matrices read an
/// entity state (`d_e × d_e`).
#[derive(Clone, Debug, PartialEq)]
pub struct EGruParams {
    pub u_zh: Param,
    pub w_zh: Param,
    pub u_rh: Param,
    pub w_rh: Param,
    pub u_zp: Param,
    pub w_zp: Param,
    pub u_rp: Param,
    pub w_rp: Param,
    pub u_q: Param,
    pub w_qh: Param,
    pub w_qp: Param,
}

#[derive(Clone, Debug)]
pub struct EGruCache {
    pub hidden: Vec<f64>,
    pub head: Vec<f64>,
    pub prior: Vec<f64>,
    pub g_zh: Vec<f64>,
    pub g_rh: Vec<f64>,
    pub g_zp: Vec<f64>,
    pub g_rp: Vec<f64>,
    pub candidate: Vec<f64>,
    pub out: Vec<f64>,
}

/// Input gradients of one eGRU step.
#[derive(Clone, Debug, PartialEq)]
pub struct EGruGrads {
    pub hidden: Vec<f64>,
    pub head: Vec<f64>,
    pub prior: Vec<f64>,
}

const NAMES: [&str; 11] = [
    "u_zh", "w_zh", "u_rh", "w_rh", "u_zp", "w_zp", "u_rp", "w_rp", "u_q", "w_qh", "w_qp",
];

impl EGruParams {
    fn build(d_h: usize, d_e: usize, mut make: impl FnMut(usize, usize) -> Param) -> Self {
        EGruParams {
            u_zh: make(d_h, d_e),
            w_zh: make(d_e, d_e),
            u_rh: make(d_h, d_e),
            w_rh: make(d_e, d_e),
            u_zp: make(d_h, d_e),
            w_zp: make(d_e, d_e),
            u_rp: make(d_h, d_e),
            w_rp: make(d_e, d_e),
            u_q: make(d_h, d_e),
            w_qh: make(d_e, d_e),
            w_qp: make(d_e, d_e),
        }
    }

    pub fn zeros(d_h: usize, d_e: usize) -> Self {
        Self::build(d_h, d_e, Param::zeros)
    }

    pub fn uniform(d_h: usize, d_e: usize, scale: f64, rng: &mut Rng) -> Self {
        Self::build(d_h, d_e, |r, c| Param::new(Matrix::uniform(r, c, scale, rng)))
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_q.value.rows()
    }

    pub fn entity_dim(&self) -> usize {
        self.u_q.value.cols()
    }

    pub fn params(&self) -> [(&'static str, &Param); 11] {
        let p = [
            &self.u_zh, &self.w_zh, &self.u_rh, &self.w_rh, &self.u_zp, &self.w_zp, &self.u_rp,
            &self.w_rp, &self.u_q, &self.w_qh, &self.w_qp,
        ];
        core::array::from_fn(|i| (NAMES[i], p[i]))
    }

    pub fn params_mut(&mut self) -> [(&'static str, &mut Param); 11] {
        let [a, b, c, d, e, f, g, h, i, j, k] = [
            &mut self.u_zh,
            &mut self.w_zh,
            &mut self.u_rh,
            &mut self.w_rh,
            &mut self.u_zp,
            &mut self.w_zp,
            &mut self.u_rp,
            &mut self.w_rp,
            &mut self.u_q,
            &mut self.w_qh,
            &mut self.w_qp,
        ];
        let [na, nb, nc, nd, ne, nf, ng, nh, ni, nj, nk] = NAMES;
        [
            (na, a),
            (nb, b),
            (nc, c),
            (nd, d),
            (ne, e),
            (nf, f),
            (ng, g),
            (nh, h),
            (ni, i),
            (nj, j),
            (nk, k),
        ]
    }

    fn check_shapes(&self) -> Result<()> {
        let (d_h, d_e) = (self.hidden_dim(), self.entity_dim());
        for (name, p) in self.params() {
            let rows = if name.starts_with('u') { d_h } else { d_e };
            p.check_rows("egru parameter rows", rows)?;
            p.check_cols("egru parameter cols", d_e)?;
        }
        Ok(())
    }

    pub fn forward(&self, head: &[f64], prior: &[f64], hidden: &[f64]) -> Result<EGruCache> {
        self.check_shapes()?;
        let d_e = self.entity_dim();
        check_dim("egru hidden state", self.hidden_dim(), hidden.len())?;
        check_dim("egru head entity", d_e, head.len())?;
        check_dim("egru prior entity", d_e, prior.len())?;

        let gate = |u: &Param, w: &Param, e: &[f64]| -> Vec<f64> {
            let mut a = u.value.vec_mul(hidden);
            w.value.vec_mul_acc(e, &mut a);
            a.into_iter().map(sigmoid).collect()
        };
        let g_zh = gate(&self.u_zh, &self.w_zh, head);
        let g_rh = gate(&self.u_rh, &self.w_rh, head);
        let g_zp = gate(&self.u_zp, &self.w_zp, prior);
        let g_rp = gate(&self.u_rp, &self.w_rp, prior);

        let head_gated: Vec<f64> = head.iter().zip(&g_rh).map(|(e, g)| e * g).collect();
        let prior_gated: Vec<f64> = prior.iter().zip(&g_rp).map(|(e, g)| e * g).collect();
        let mut a_q = self.u_q.value.vec_mul(hidden);
        self.w_qh.value.vec_mul_acc(&head_gated, &mut a_q);
        self.w_qp.value.vec_mul_acc(&prior_gated, &mut a_q);
        let candidate: Vec<f64> = a_q.into_iter().map(tanh).collect();

        // The candidate weight 1 - g_zh - g_zp may be negative.
        let out = (0..d_e)
            .map(|k| {
                (1.0 - g_zh[k] - g_zp[k]) * candidate[k] + g_zh[k] * head[k] + g_zp[k] * prior[k]
            })
            .collect();
        Ok(EGruCache {
            hidden: hidden.to_vec(),
            head: head.to_vec(),
            prior: prior.to_vec(),
            g_zh,
            g_rh,
            g_zp,
            g_rp,
            candidate,
            out,
        })
    }

    /// Accumulates parameter gradients for `dout` and returns input gradients.
    pub fn backward(&mut self, c: &EGruCache, dout: &[f64]) -> EGruGrads {
        let d_e = dout.len();
        let mut g = EGruGrads {
            hidden: vec![0.0; c.hidden.len()],
            head: vec![0.0; d_e],
            prior: vec![0.0; d_e],
        };
        let mut da_q = vec![0.0; d_e];
        let mut da_zh = vec![0.0; d_e];
        let mut da_zp = vec![0.0; d_e];
        for k in 0..d_e {
            let (zh, zp, q) = (c.g_zh[k], c.g_zp[k], c.candidate[k]);
            da_q[k] = dout[k] * (1.0 - zh - zp) * (1.0 - q * q);
            da_zh[k] = dout[k] * (c.head[k] - q) * zh * (1.0 - zh);
            da_zp[k] = dout[k] * (c.prior[k] - q) * zp * (1.0 - zp);
            g.head[k] += dout[k] * zh;
            g.prior[k] += dout[k] * zp;
        }

        let head_gated: Vec<f64> = c.head.iter().zip(&c.g_rh).map(|(e, r)| e * r).collect();
        let prior_gated: Vec<f64> = c.prior.iter().zip(&c.g_rp).map(|(e, r)| e * r).collect();
        self.u_q.grad.outer_acc(&c.hidden, &da_q);
        self.w_qh.grad.outer_acc(&head_gated, &da_q);
        self.w_qp.grad.outer_acc(&prior_gated, &da_q);
        self.u_q.value.vec_mul_t_acc(&da_q, &mut g.hidden);
        let mut d_head_gated = vec![0.0; d_e];
        let mut d_prior_gated = vec![0.0; d_e];
        self.w_qh.value.vec_mul_t_acc(&da_q, &mut d_head_gated);
        self.w_qp.value.vec_mul_t_acc(&da_q, &mut d_prior_gated);

        let mut da_rh = vec![0.0; d_e];
        let mut da_rp = vec![0.0; d_e];
        for k in 0..d_e {
            let (rh, rp) = (c.g_rh[k], c.g_rp[k]);
            g.head[k] += d_head_gated[k] * rh;
            g.prior[k] += d_prior_gated[k] * rp;
            da_rh[k] = d_head_gated[k] * c.head[k] * rh * (1.0 - rh);
            da_rp[k] = d_prior_gated[k] * c.prior[k] * rp * (1.0 - rp);
        }

        let gates: [(&mut Param, &mut Param, &[f64], &[f64], bool); 4] = [
            (&mut self.u_zh, &mut self.w_zh, &c.head, &da_zh, true),
            (&mut self.u_rh, &mut self.w_rh, &c.head, &da_rh, true),
            (&mut self.u_zp, &mut self.w_zp, &c.prior, &da_zp, false),
            (&mut self.u_rp, &mut self.w_rp, &c.prior, &da_rp, false),
        ];
        for (u, w, e, da, is_head) in gates {
            u.grad.outer_acc(&c.hidden, da);
            w.grad.outer_acc(e, da);
            u.value.vec_mul_t_acc(da, &mut g.hidden);
            let target = if is_head { &mut g.head } else { &mut g.prior };
            w.value.vec_mul_t_acc(da, target);
        }
        g
    }
}

/// One eGRU step `ê_i = eGRU(e_h, ê_{i-1}, h_i)`.
pub fn egru_step(p: &EGruParams, head: &[f64], prior: &[f64], hidden: &[f64]) -> Result<Vec<f64>> {
    Ok(p.forward(head, prior, hidden)?.out)
}
