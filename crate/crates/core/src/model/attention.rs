//! Single-head causal self-attention block with a ReLU feed-forward, both
//! residual:
//!
//! ```text
//! y1 = x + W_o · Σ_{j≤t} softmax_j(q_t·k_j / √D) v_j
//! y  = y1 + W_2 · relu(W_1 y1 + b_1) + b_2
//! ```

use super::math::{axpy, dot, matvec_acc, matvec_t_acc, outer_acc, Real};
use super::params::{Gradients, Tensor};

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttentionLayer {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub width: usize,
    pub ff: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache<F> {
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// Row t holds t+1 weights, rows concatenated.
    att: Vec<F>,
    o: Vec<F>,
    y1: Vec<F>,
    m: Vec<F>,
}

#[derive(Debug, Clone)]
pub(crate) struct KvCache<F> {
    keys: Vec<F>,
    values: Vec<F>,
}

impl<F> Default for KvCache<F> {
    fn default() -> Self {
        KvCache { keys: Vec::new(), values: Vec::new() }
    }
}

fn row<F>(v: &[F], t: usize, d: usize) -> &[F] {
    &v[t * d..(t + 1) * d]
}

impl AttentionLayer {
    fn scale<F: Real>(&self) -> F {
        F::one() / F::of(self.width as f64).sqrt()
    }

    fn project<F: Real>(&self, params: &[Tensor<F>], w: usize, x: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.width];
        matvec_acc(&mut out, &params[w].data, x);
        out
    }

    fn attend<F: Real>(&self, q: &[F], keys: &[F], values: &[F], count: usize) -> (Vec<F>, Vec<F>) {
        let d = self.width;
        let scale = self.scale::<F>();
        let scores: Vec<F> = (0..count).map(|j| dot(q, row(keys, j, d)) * scale).collect();
        let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
        let mut a: Vec<F> = scores.iter().map(|s| (*s - max).exp()).collect();
        let sum: F = a.iter().copied().sum();
        a.iter_mut().for_each(|w| *w = *w / sum);
        let mut o = vec![F::zero(); d];
        for (j, w) in a.iter().enumerate() {
            axpy(&mut o, *w, row(values, j, d));
        }
        (a, o)
    }

    /// Residual output projection and feed-forward for one position.
    fn finish<F: Real>(&self, params: &[Tensor<F>], x: &[F], o: &[F]) -> (Vec<F>, Vec<F>, Vec<F>) {
        let mut y1 = x.to_vec();
        matvec_acc(&mut y1, &params[self.wo].data, o);
        let mut m = params[self.b1].data.clone();
        matvec_acc(&mut m, &params[self.w1].data, &y1);
        m.iter_mut().for_each(|v| *v = v.max(F::zero()));
        let mut y = y1.clone();
        for (yi, bi) in y.iter_mut().zip(&params[self.b2].data) {
            *yi += *bi;
        }
        matvec_acc(&mut y, &params[self.w2].data, &m);
        (y1, m, y)
    }

    pub fn forward<F: Real>(&self, params: &[Tensor<F>], x: &[F], len: usize) -> (Vec<F>, AttentionCache<F>) {
        let d = self.width;
        let mut cache = AttentionCache {
            q: Vec::with_capacity(len * d),
            k: Vec::with_capacity(len * d),
            v: Vec::with_capacity(len * d),
            att: Vec::with_capacity(len * (len + 1) / 2),
            o: Vec::with_capacity(len * d),
            y1: Vec::with_capacity(len * d),
            m: Vec::with_capacity(len * self.ff),
        };
        for t in 0..len {
            let xt = row(x, t, d);
            cache.q.extend(self.project(params, self.wq, xt));
            cache.k.extend(self.project(params, self.wk, xt));
            cache.v.extend(self.project(params, self.wv, xt));
        }
        let mut out = Vec::with_capacity(len * d);
        for t in 0..len {
            let (a, o) = self.attend(row(&cache.q, t, d), &cache.k, &cache.v, t + 1);
            let (y1, m, y) = self.finish(params, row(x, t, d), &o);
            cache.att.extend(a);
            cache.o.extend(o);
            cache.y1.extend(y1);
            cache.m.extend(m);
            out.extend(y);
        }
        (out, cache)
    }

    pub fn step<F: Real>(&self, params: &[Tensor<F>], x: &[F], kv: &mut KvCache<F>) -> Vec<F> {
        let q = self.project(params, self.wq, x);
        kv.keys.extend(self.project(params, self.wk, x));
        kv.values.extend(self.project(params, self.wv, x));
        let count = kv.keys.len() / self.width;
        let (_, o) = self.attend(&q, &kv.keys, &kv.values, count);
        self.finish(params, x, &o).2
    }

    pub fn backward<F: Real>(
        &self,
        params: &[Tensor<F>],
        cache: &AttentionCache<F>,
        x: &[F],
        d_out: &[F],
        grads: &mut Gradients<F>,
    ) -> Vec<F> {
        let d = self.width;
        let len = d_out.len() / d;
        let scale = self.scale::<F>();
        let mut dx = vec![F::zero(); len * d];
        let mut dq = vec![F::zero(); len * d];
        let mut dk = vec![F::zero(); len * d];
        let mut dv = vec![F::zero(); len * d];
        let mut att_off = 0;

        for t in 0..len {
            let dy = row(d_out, t, d);
            let m = &cache.m[t * self.ff..(t + 1) * self.ff];
            let y1 = row(&cache.y1, t, d);
            outer_acc(&mut grads.bufs[self.w2], dy, m);
            for (g, v) in grads.bufs[self.b2].iter_mut().zip(dy) {
                *g += *v;
            }
            let mut dpre = vec![F::zero(); self.ff];
            matvec_t_acc(&mut dpre, &params[self.w2].data, dy);
            for (dp, mv) in dpre.iter_mut().zip(m) {
                if *mv <= F::zero() {
                    *dp = F::zero();
                }
            }
            outer_acc(&mut grads.bufs[self.w1], &dpre, y1);
            for (g, v) in grads.bufs[self.b1].iter_mut().zip(&dpre) {
                *g += *v;
            }
            let mut dy1 = dy.to_vec();
            matvec_t_acc(&mut dy1, &params[self.w1].data, &dpre);

            for (a, b) in dx[t * d..(t + 1) * d].iter_mut().zip(&dy1) {
                *a += *b;
            }
            outer_acc(&mut grads.bufs[self.wo], &dy1, row(&cache.o, t, d));
            let mut d_o = vec![F::zero(); d];
            matvec_t_acc(&mut d_o, &params[self.wo].data, &dy1);

            let a = &cache.att[att_off..att_off + t + 1];
            att_off += t + 1;
            let da: Vec<F> = (0..=t).map(|j| dot(&d_o, row(&cache.v, j, d))).collect();
            let mean: F = a.iter().zip(&da).map(|(w, g)| *w * *g).sum();
            let qt = row(&cache.q, t, d).to_vec();
            for j in 0..=t {
                axpy(&mut dv[j * d..(j + 1) * d], a[j], &d_o);
                let ds = a[j] * (da[j] - mean) * scale;
                if ds != F::zero() {
                    axpy(&mut dq[t * d..(t + 1) * d], ds, row(&cache.k, j, d));
                    axpy(&mut dk[j * d..(j + 1) * d], ds, &qt);
                }
            }
        }

        for t in 0..len {
            let xt = row(x, t, d);
            for (w, dproj) in [(self.wq, &dq), (self.wk, &dk), (self.wv, &dv)] {
                let g = row(dproj, t, d);
                outer_acc(&mut grads.bufs[w], g, xt);
                matvec_t_acc(&mut dx[t * d..(t + 1) * d], &params[w].data, g);
            }
        }
        dx
    }
}
