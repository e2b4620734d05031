use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{Matrix, Param};
use super::{sigmoid, tanh};
use crate::error::{check_dim, Result};
use crate::Rng;

/// Bias-free GRU cell: `U*` map the input (`d_in × d_h`), `W*` the previous
/// state (`d_h × d_h`).
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub u_z: Param,
    pub u_r: Param,
    pub u_q: Param,
    pub w_z: Param,
    pub w_r: Param,
    pub w_q: Param,
}

/// Activations of one GRU step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub g_z: Vec<f64>,
    pub g_r: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruParams {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        GruParams {
            u_z: Param::zeros(d_in, d_h),
            u_r: Param::zeros(d_in, d_h),
            u_q: Param::zeros(d_in, d_h),
            w_z: Param::zeros(d_h, d_h),
            w_r: Param::zeros(d_h, d_h),
            w_q: Param::zeros(d_h, d_h),
        }
    }

    pub fn uniform(d_in: usize, d_h: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut m = |r, c| Param::new(Matrix::uniform(r, c, scale, rng));
        GruParams {
            u_z: m(d_in, d_h),
            u_r: m(d_in, d_h),
            u_q: m(d_in, d_h),
            w_z: m(d_h, d_h),
            w_r: m(d_h, d_h),
            w_q: m(d_h, d_h),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u_z.value.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.value.rows()
    }

    pub fn params(&self) -> [(&'static str, &Param); 6] {
        [
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_q", &self.u_q),
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_q", &self.w_q),
        ]
    }

    pub fn params_mut(&mut self) -> [(&'static str, &mut Param); 6] {
        [
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_q", &mut self.u_q),
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_q", &mut self.w_q),
        ]
    }

    fn check_shapes(&self) -> Result<()> {
        let (d_in, d_h) = (self.input_dim(), self.hidden_dim());
        for (name, p) in self.params() {
            let rows = if name.starts_with('u') { d_in } else { d_h };
            p.check_rows("gru parameter rows", rows)?;
            p.check_cols("gru parameter cols", d_h)?;
        }
        Ok(())
    }

    pub fn forward(&self, h_prev: &[f64], x: &[f64]) -> Result<GruCache> {
        self.check_shapes()?;
        let d_h = self.hidden_dim();
        check_dim("gru input", self.input_dim(), x.len())?;
        check_dim("gru hidden state", d_h, h_prev.len())?;

        let mut a_z = self.u_z.value.vec_mul(x);
        self.w_z.value.vec_mul_acc(h_prev, &mut a_z);
        let mut a_r = self.u_r.value.vec_mul(x);
        self.w_r.value.vec_mul_acc(h_prev, &mut a_r);
        let g_z: Vec<f64> = a_z.into_iter().map(sigmoid).collect();
        let g_r: Vec<f64> = a_r.into_iter().map(sigmoid).collect();

        let gated: Vec<f64> = h_prev.iter().zip(&g_r).map(|(h, g)| h * g).collect();
        let mut a_q = self.u_q.value.vec_mul(x);
        self.w_q.value.vec_mul_acc(&gated, &mut a_q);
        let candidate: Vec<f64> = a_q.into_iter().map(tanh).collect();

        let h = (0..d_h)
            .map(|k| (1.0 - g_z[k]) * candidate[k] + g_z[k] * h_prev[k])
            .collect();
        Ok(GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            g_z,
            g_r,
            candidate,
            h,
        })
    }

    /// Accumulates parameter gradients for `dh = ∂L/∂h` and adds the input
    /// gradients into `dh_prev` and `dx`.
    pub fn backward(&mut self, cache: &GruCache, dh: &[f64], dh_prev: &mut [f64], dx: &mut [f64]) {
        let d_h = dh.len();
        let mut da_z = vec![0.0; d_h];
        let mut da_q = vec![0.0; d_h];
        for k in 0..d_h {
            let gz = cache.g_z[k];
            let q = cache.candidate[k];
            dh_prev[k] += dh[k] * gz;
            da_z[k] = dh[k] * (cache.h_prev[k] - q) * gz * (1.0 - gz);
            da_q[k] = dh[k] * (1.0 - gz) * (1.0 - q * q);
        }

        let gated: Vec<f64> = cache
            .h_prev
            .iter()
            .zip(&cache.g_r)
            .map(|(h, g)| h * g)
            .collect();
        self.u_q.grad.outer_acc(&cache.x, &da_q);
        self.w_q.grad.outer_acc(&gated, &da_q);
        self.u_q.value.vec_mul_t_acc(&da_q, dx);
        let mut d_gated = vec![0.0; d_h];
        self.w_q.value.vec_mul_t_acc(&da_q, &mut d_gated);

        let mut da_r = vec![0.0; d_h];
        for k in 0..d_h {
            let gr = cache.g_r[k];
            dh_prev[k] += d_gated[k] * gr;
            da_r[k] = d_gated[k] * cache.h_prev[k] * gr * (1.0 - gr);
        }

        self.u_r.grad.outer_acc(&cache.x, &da_r);
        self.w_r.grad.outer_acc(&cache.h_prev, &da_r);
        self.u_r.value.vec_mul_t_acc(&da_r, dx);
        self.w_r.value.vec_mul_t_acc(&da_r, dh_prev);

        self.u_z.grad.outer_acc(&cache.x, &da_z);
        self.w_z.grad.outer_acc(&cache.h_prev, &da_z);
        self.u_z.value.vec_mul_t_acc(&da_z, dx);
        self.w_z.value.vec_mul_t_acc(&da_z, dh_prev);
    }
}

/// One GRU step `h_i = GRU(h_{i-1}, x_i)`.
pub fn gru_step(p: &GruParams, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Ok(p.forward(h_prev, x)?.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cosine, cosine_backward, grad_check, Parameterized};
    use crate::rng_from_seed;
    use alloc::string::String;
    use rand::Rng as _;

    /// Plain nested-loop evaluation of the GRU equations, written without the
    /// matrix helpers.
    fn oracle(p: &GruParams, h: &[f64], x: &[f64]) -> Vec<f64> {
        let d_h = h.len();
        let lin = |u: &Param, w: &Param, hv: &[f64], j: usize| {
            let mut s = 0.0;
            for i in 0..x.len() {
                s += x[i] * u.value.get(i, j);
            }
            for i in 0..d_h {
                s += hv[i] * w.value.get(i, j);
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + libm::exp(-v));
        let gz: Vec<f64> = (0..d_h).map(|j| sig(lin(&p.u_z, &p.w_z, h, j))).collect();
        let gr: Vec<f64> = (0..d_h).map(|j| sig(lin(&p.u_r, &p.w_r, h, j))).collect();
        let hr: Vec<f64> = (0..d_h).map(|j| h[j] * gr[j]).collect();
        (0..d_h)
            .map(|j| {
                let q = libm::tanh(lin(&p.u_q, &p.w_q, &hr, j));
                (1.0 - gz[j]) * q + gz[j] * h[j]
            })
            .collect()
    }

    fn random_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let p = GruParams::zeros(3, 4);
        let v = [1.0, -2.0, 0.5, 4.0];
        let out = gru_step(&p, &v, &[7.0, 8.0, 9.0]).unwrap();
        assert_eq!(out, vec![0.5, -1.0, 0.25, 2.0]);
        assert_eq!(gru_step(&p, &[0.0; 4], &[1.0; 3]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let mut rng = rng_from_seed(7);
        for _ in 0..20 {
            let p = GruParams::uniform(5, 5, 0.8, &mut rng);
            let h = random_vec(5, &mut rng);
            let x = random_vec(5, &mut rng);
            let got = gru_step(&p, &h, &x).unwrap();
            let want = oracle(&p, &h, &x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-14, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gates_stay_in_open_unit_interval() {
        let mut rng = rng_from_seed(3);
        let p = GruParams::uniform(4, 3, 2.0, &mut rng);
        let c = p.forward(&random_vec(3, &mut rng), &random_vec(4, &mut rng)).unwrap();
        assert!(c.g_z.iter().chain(&c.g_r).all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = GruParams::zeros(3, 4);
        assert!(gru_step(&p, &[0.0; 3], &[0.0; 3]).is_err());
        assert!(gru_step(&p, &[0.0; 4], &[0.0; 4]).is_err());
    }

    /// GRU step followed by cosine against a fixed target, with inputs as
    /// extra parameters so their gradients are checked too.
    struct Probe {
        cell: GruParams,
        h: Param,
        x: Param,
        target: Vec<f64>,
    }

    impl Parameterized for Probe {
        fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
            for (n, p) in self.cell.params() {
                f(n, p);
            }
            f("h", &self.h);
            f("x", &self.x);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
            for (n, p) in self.cell.params_mut() {
                f(n, p);
            }
            f("h", &mut self.h);
            f("x", &mut self.x);
        }
    }

    fn probe_loss(m: &Probe) -> f64 {
        let out = gru_step(&m.cell, m.h.value.data(), m.x.value.data()).unwrap();
        cosine(&out, &m.target).unwrap()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_from_seed(11);
        for _ in 0..5 {
            let d = 5;
            let mut m = Probe {
                cell: GruParams::uniform(d, d, 0.8, &mut rng),
                h: Param::new(Matrix::from_vec(1, d, random_vec(d, &mut rng)).unwrap()),
                x: Param::new(Matrix::from_vec(1, d, random_vec(d, &mut rng)).unwrap()),
                target: random_vec(d, &mut rng),
            };
            let cache = m.cell.forward(m.h.value.data(), m.x.value.data()).unwrap();
            let mut dout = vec![0.0; d];
            let mut dt = vec![0.0; d];
            cosine_backward(&cache.h, &m.target, 1.0, &mut dout, &mut dt);
            let (mut dh, mut dx) = (vec![0.0; d], vec![0.0; d]);
            m.cell.backward(&cache, &dout, &mut dh, &mut dx);
            m.h.grad.data_mut().copy_from_slice(&dh);
            m.x.grad.data_mut().copy_from_slice(&dx);
            let report = grad_check(&mut m, probe_loss, 1e-3, 1e-4);
            assert!(report.passed(), "{:?}", report.failing);
            assert!(report.max_rel_err < 1e-4);
            let names: Vec<String> = report.per_param.iter().map(|p| p.name.clone()).collect();
            assert_eq!(names.len(), 8);
        }
    }
}
