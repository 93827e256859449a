//! Gated recurrent layer. Gate blocks inside the `3H` rows are ordered
//! reset, update, candidate:
//!
//! ```text
//! r = σ(W_r x + b_r + U_r h + c_r)
//! z = σ(W_z x + b_z + U_z h + c_z)
//! n = tanh(W_n x + b_n + r ⊙ (U_n h + c_n))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use super::math::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Real};
use super::params::{Gradients, Tensor};

#[derive(Debug, Clone, Copy)]
pub(crate) struct GruLayer {
    pub w_x: usize,
    pub w_h: usize,
    pub b_x: usize,
    pub b_h: usize,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct GruCache<F> {
    r: Vec<F>,
    z: Vec<F>,
    n: Vec<F>,
    /// `U_n h + c_n` before the reset gate is applied.
    hn: Vec<F>,
}

impl GruLayer {
    /// One step: `h` is updated in place. Returns gate activations.
    fn cell<F: Real>(&self, params: &[Tensor<F>], x: &[F], h: &mut [F]) -> ([Vec<F>; 3], Vec<F>) {
        let hid = self.hidden;
        let mut gx = params[self.b_x].data.clone();
        matvec_acc(&mut gx, &params[self.w_x].data, x);
        let mut gh = params[self.b_h].data.clone();
        matvec_acc(&mut gh, &params[self.w_h].data, h);
        let mut r = vec![F::zero(); hid];
        let mut z = vec![F::zero(); hid];
        let mut n = vec![F::zero(); hid];
        let hn = gh[2 * hid..].to_vec();
        for i in 0..hid {
            r[i] = sigmoid(gx[i] + gh[i]);
            z[i] = sigmoid(gx[hid + i] + gh[hid + i]);
            n[i] = (gx[2 * hid + i] + r[i] * hn[i]).tanh();
            h[i] = (F::one() - z[i]) * n[i] + z[i] * h[i];
        }
        ([r, z, n], hn)
    }

    pub fn forward<F: Real>(&self, params: &[Tensor<F>], x: &[F], len: usize) -> (Vec<F>, GruCache<F>) {
        let hid = self.hidden;
        let mut out = vec![F::zero(); len * hid];
        let mut cache = GruCache {
            r: Vec::with_capacity(len * hid),
            z: Vec::with_capacity(len * hid),
            n: Vec::with_capacity(len * hid),
            hn: Vec::with_capacity(len * hid),
        };
        let mut h = vec![F::zero(); hid];
        for t in 0..len {
            let ([r, z, n], hn) = self.cell(params, &x[t * self.input..(t + 1) * self.input], &mut h);
            out[t * hid..(t + 1) * hid].copy_from_slice(&h);
            cache.r.extend_from_slice(&r);
            cache.z.extend_from_slice(&z);
            cache.n.extend_from_slice(&n);
            cache.hn.extend_from_slice(&hn);
        }
        (out, cache)
    }

    pub fn step<F: Real>(&self, params: &[Tensor<F>], x: &[F], h: &mut [F]) {
        self.cell(params, x, h);
    }

    /// Backpropagation through time. `out` is the forward output, `d_out` the
    /// upstream gradient per position; returns the gradient w.r.t. `x`.
    pub fn backward<F: Real>(
        &self,
        params: &[Tensor<F>],
        cache: &GruCache<F>,
        x: &[F],
        out: &[F],
        d_out: &[F],
        grads: &mut Gradients<F>,
    ) -> Vec<F> {
        let hid = self.hidden;
        let din = self.input;
        let len = d_out.len() / hid;
        let mut dx = vec![F::zero(); len * din];
        let mut carry = vec![F::zero(); hid];
        let zeros = vec![F::zero(); hid];
        let mut dgx = vec![F::zero(); 3 * hid];
        let mut dgh = vec![F::zero(); 3 * hid];
        let w_x = &params[self.w_x].data;
        let w_h = &params[self.w_h].data;

        for t in (0..len).rev() {
            let span = t * hid..(t + 1) * hid;
            let (r, z, n, hn) = (&cache.r[span.clone()], &cache.z[span.clone()], &cache.n[span.clone()], &cache.hn[span.clone()]);
            let h_prev = if t == 0 { &zeros[..] } else { &out[(t - 1) * hid..t * hid] };
            let mut dh_prev = vec![F::zero(); hid];
            for i in 0..hid {
                let dh = d_out[t * hid + i] + carry[i];
                let dn = dh * (F::one() - z[i]);
                let dz = dh * (h_prev[i] - n[i]);
                dh_prev[i] = dh * z[i];
                let dn_pre = dn * (F::one() - n[i] * n[i]);
                let dr = dn_pre * hn[i];
                let dr_pre = dr * r[i] * (F::one() - r[i]);
                let dz_pre = dz * z[i] * (F::one() - z[i]);
                dgx[i] = dr_pre;
                dgx[hid + i] = dz_pre;
                dgx[2 * hid + i] = dn_pre;
                dgh[i] = dr_pre;
                dgh[hid + i] = dz_pre;
                dgh[2 * hid + i] = dn_pre * r[i];
            }
            let xt = &x[t * din..(t + 1) * din];
            outer_acc(&mut grads.bufs[self.w_x], &dgx, xt);
            outer_acc(&mut grads.bufs[self.w_h], &dgh, h_prev);
            for (g, d) in grads.bufs[self.b_x].iter_mut().zip(&dgx) {
                *g += *d;
            }
            for (g, d) in grads.bufs[self.b_h].iter_mut().zip(&dgh) {
                *g += *d;
            }
            matvec_t_acc(&mut dx[t * din..(t + 1) * din], w_x, &dgx);
            matvec_t_acc(&mut dh_prev, w_h, &dgh);
            carry = dh_prev;
        }
        dx
    }
}
