//! Stacked gated-recurrent-unit classifier with hand-written BPTT.
//!
//! Gating follows the cited recurrent update: `z = sigmoid(x Wz + h Uz + bz)`,
//! `r = sigmoid(x Wr + h Ur + br)`, `c = tanh(x Wh + (r . h) Uh + bh)`,
//! `h' = (1 - z) . h + z . c`. The classification head reads the final
//! time-step hidden state of the top layer.

use crate::numerics::{fast_tanh, matmul, matmul_a_bt, matmul_at_b_accum, Real, Rng, Tensor};

#[derive(Debug, Clone)]
pub struct GruLayer<T> {
    pub wz: Tensor<T>,
    pub uz: Tensor<T>,
    pub bz: Tensor<T>,
    pub wr: Tensor<T>,
    pub ur: Tensor<T>,
    pub br: Tensor<T>,
    pub wh: Tensor<T>,
    pub uh: Tensor<T>,
    pub bh: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct GruStack<T> {
    pub layers: Vec<GruLayer<T>>,
    /// `[hidden, classes]`
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl<T: Real> GruStack<T> {
    pub fn init(
        input_dim: usize,
        hidden: usize,
        n_layers: usize,
        classes: usize,
        rng: &mut Rng,
    ) -> Self {
        let std = 0.08;
        let layers = (0..n_layers)
            .map(|l| {
                let din = if l == 0 { input_dim } else { hidden };
                GruLayer {
                    wz: Tensor::randn(&[din, hidden], std, rng),
                    uz: Tensor::randn(&[hidden, hidden], std, rng),
                    bz: Tensor::zeros(&[hidden]),
                    wr: Tensor::randn(&[din, hidden], std, rng),
                    ur: Tensor::randn(&[hidden, hidden], std, rng),
                    br: Tensor::zeros(&[hidden]),
                    wh: Tensor::randn(&[din, hidden], std, rng),
                    uh: Tensor::randn(&[hidden, hidden], std, rng),
                    bh: Tensor::zeros(&[hidden]),
                }
            })
            .collect();
        GruStack {
            layers,
            head_w: Tensor::randn(&[hidden, classes], std, rng),
            head_b: Tensor::zeros(&[classes]),
            input_dim,
            hidden,
            classes,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| GruLayer {
                wz: Tensor::zeros(l.wz.shape()),
                uz: Tensor::zeros(l.uz.shape()),
                bz: Tensor::zeros(l.bz.shape()),
                wr: Tensor::zeros(l.wr.shape()),
                ur: Tensor::zeros(l.ur.shape()),
                br: Tensor::zeros(l.br.shape()),
                wh: Tensor::zeros(l.wh.shape()),
                uh: Tensor::zeros(l.uh.shape()),
                bh: Tensor::zeros(l.bh.shape()),
            })
            .collect();
        GruStack {
            layers,
            head_w: Tensor::zeros(self.head_w.shape()),
            head_b: Tensor::zeros(self.head_b.shape()),
            input_dim: self.input_dim,
            hidden: self.hidden,
            classes: self.classes,
        }
    }

    pub fn param_names(n_layers: usize) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..n_layers {
            for f in ["wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh"] {
                names.push(format!("gru{l}.{f}"));
            }
        }
        names.push("head_w".to_string());
        names.push("head_b".to_string());
        names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([&l.wz, &l.uz, &l.bz, &l.wr, &l.ur, &l.br, &l.wh, &l.uh, &l.bh]);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for l in &mut self.layers {
            out.extend([
                &mut l.wz, &mut l.uz, &mut l.bz, &mut l.wr, &mut l.ur, &mut l.br, &mut l.wh,
                &mut l.uh, &mut l.bh,
            ]);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn flatten(&self) -> Vec<T> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten_from(&mut self, flat: &[T]) {
        let mut off = 0;
        for t in self.params_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }

    pub fn cast<U: Real>(&self) -> GruStack<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| GruLayer {
                wz: l.wz.cast(),
                uz: l.uz.cast(),
                bz: l.bz.cast(),
                wr: l.wr.cast(),
                ur: l.ur.cast(),
                br: l.br.cast(),
                wh: l.wh.cast(),
                uh: l.uh.cast(),
                bh: l.bh.cast(),
            })
            .collect();
        GruStack {
            layers,
            head_w: self.head_w.cast(),
            head_b: self.head_b.cast(),
            input_dim: self.input_dim,
            hidden: self.hidden,
            classes: self.classes,
        }
    }
}

struct LayerSteps<T> {
    /// This layer's input, `[n, b, din]` flattened time-major.
    input: Vec<T>,
    din: usize,
    /// Per time step, `[b, hidden]` each.
    z: Vec<Vec<T>>,
    r: Vec<Vec<T>>,
    c: Vec<Vec<T>>,
    rh: Vec<Vec<T>>,
    /// Hidden states h_0 (zeros) .. h_n, n+1 entries.
    h: Vec<Vec<T>>,
}

pub struct GruCache<T> {
    batch: usize,
    steps: usize,
    layers: Vec<LayerSteps<T>>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

impl<T: Real> GruStack<T> {
    /// Forward over `[b, n, input_dim]` features (batch-major); returns
    /// logits `[b, classes]` and the cache for backward.
    pub fn forward(&self, x: &[T], b: usize, n: usize) -> (Vec<T>, GruCache<T>) {
        assert_eq!(x.len(), b * n * self.input_dim);
        let hid = self.hidden;

        // convert to time-major [n][b, din]
        let mut input: Vec<T> = vec![T::ZERO; b * n * self.input_dim];
        for t in 0..n {
            for row in 0..b {
                let src = &x[(row * n + t) * self.input_dim..][..self.input_dim];
                input[(t * b + row) * self.input_dim..][..self.input_dim].copy_from_slice(src);
            }
        }

        let mut caches = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let din = if li == 0 { self.input_dim } else { hid };
            let mut steps = LayerSteps {
                input,
                din,
                z: Vec::with_capacity(n),
                r: Vec::with_capacity(n),
                c: Vec::with_capacity(n),
                rh: Vec::with_capacity(n),
                h: vec![vec![T::ZERO; b * hid]],
            };
            let mut out = vec![T::ZERO; b * n * hid];
            for t in 0..n {
                let x_t = &steps.input[t * b * din..(t + 1) * b * din];
                let h_prev = steps.h.last().unwrap().clone();

                let mut z = matmul(x_t, layer.wz.data(), b, din, hid);
                let mut r = matmul(x_t, layer.wr.data(), b, din, hid);
                add_in(&mut z, &matmul(&h_prev, layer.uz.data(), b, hid, hid));
                add_in(&mut r, &matmul(&h_prev, layer.ur.data(), b, hid, hid));
                add_bias(&mut z, layer.bz.data(), b, hid);
                add_bias(&mut r, layer.br.data(), b, hid);
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
                r.iter_mut().for_each(|v| *v = sigmoid(*v));

                let rh: Vec<T> = r.iter().zip(&h_prev).map(|(a, b)| *a * *b).collect();
                let mut c = matmul(x_t, layer.wh.data(), b, din, hid);
                add_in(&mut c, &matmul(&rh, layer.uh.data(), b, hid, hid));
                add_bias(&mut c, layer.bh.data(), b, hid);
                c.iter_mut().for_each(|v| *v = fast_tanh(*v));

                let mut h = vec![T::ZERO; b * hid];
                for i in 0..b * hid {
                    h[i] = (T::ONE - z[i]) * h_prev[i] + z[i] * c[i];
                }
                out[t * b * hid..(t + 1) * b * hid].copy_from_slice(&h);
                steps.z.push(z);
                steps.r.push(r);
                steps.c.push(c);
                steps.rh.push(rh);
                steps.h.push(h);
            }
            caches.push(steps);
            input = out;
        }

        // head on final hidden state of the top layer
        let h_last = caches.last().unwrap().h.last().unwrap();
        let mut logits = matmul(h_last, self.head_w.data(), b, hid, self.classes);
        add_bias(&mut logits, self.head_b.data(), b, self.classes);

        (
            logits,
            GruCache {
                batch: b,
                steps: n,
                layers: caches,
            },
        )
    }

    /// BPTT from `d_logits`; returns parameter gradients and the gradient
    /// with respect to the input features `[b, n, input_dim]` (batch-major),
    /// which trainable embedding tables consume.
    pub fn backward(&self, cache: &GruCache<T>, d_logits: &[T]) -> (GruStack<T>, Vec<T>) {
        let b = cache.batch;
        let n = cache.steps;
        let hid = self.hidden;
        let mut grads = self.zeros_like();

        // head
        let h_last = cache.layers.last().unwrap().h.last().unwrap();
        matmul_at_b_accum(
            grads.head_w.data_mut(),
            h_last,
            d_logits,
            b,
            hid,
            self.classes,
        );
        for row in 0..b {
            for cc in 0..self.classes {
                grads.head_b.data_mut()[cc] += d_logits[row * self.classes + cc];
            }
        }
        // d wrt layer outputs, time-major [n][b, hid]; top layer only sees a
        // gradient at the last step (through the head).
        let mut d_out = vec![vec![T::ZERO; b * hid]; n];
        d_out[n - 1] = matmul_a_bt(d_logits, self.head_w.data(), b, self.classes, hid);

        let mut d_input_final = Vec::new();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let gw = &mut grads.layers[li];
            let steps = &cache.layers[li];
            let din = steps.din;
            let mut d_x_stream = vec![T::ZERO; b * n * din];
            let mut d_h_next = vec![T::ZERO; b * hid]; // recurrent carry

            for t in (0..n).rev() {
                let mut dh = d_out[t].clone();
                add_in(&mut dh, &d_h_next);

                let z = &steps.z[t];
                let r = &steps.r[t];
                let c = &steps.c[t];
                let rh = &steps.rh[t];
                let h_prev = &steps.h[t];
                let x_t = &steps.input[t * b * din..(t + 1) * b * din];

                let mut dz_pre = vec![T::ZERO; b * hid];
                let mut dc_pre = vec![T::ZERO; b * hid];
                let mut d_h_prev = vec![T::ZERO; b * hid];
                for i in 0..b * hid {
                    let dzi = dh[i] * (c[i] - h_prev[i]);
                    let dci = dh[i] * z[i];
                    dz_pre[i] = dzi * z[i] * (T::ONE - z[i]);
                    dc_pre[i] = dci * (T::ONE - c[i] * c[i]);
                    d_h_prev[i] = dh[i] * (T::ONE - z[i]);
                }
                let d_rh = matmul_a_bt(&dc_pre, layer.uh.data(), b, hid, hid);
                let mut dr_pre = vec![T::ZERO; b * hid];
                for i in 0..b * hid {
                    let dri = d_rh[i] * h_prev[i];
                    dr_pre[i] = dri * r[i] * (T::ONE - r[i]);
                    d_h_prev[i] += d_rh[i] * r[i];
                }
                add_in(&mut d_h_prev, &matmul_a_bt(&dz_pre, layer.uz.data(), b, hid, hid));
                add_in(&mut d_h_prev, &matmul_a_bt(&dr_pre, layer.ur.data(), b, hid, hid));

                // weight grads
                matmul_at_b_accum(gw.wz.data_mut(), x_t, &dz_pre, b, din, hid);
                matmul_at_b_accum(gw.uz.data_mut(), h_prev, &dz_pre, b, hid, hid);
                matmul_at_b_accum(gw.wr.data_mut(), x_t, &dr_pre, b, din, hid);
                matmul_at_b_accum(gw.ur.data_mut(), h_prev, &dr_pre, b, hid, hid);
                matmul_at_b_accum(gw.wh.data_mut(), x_t, &dc_pre, b, din, hid);
                matmul_at_b_accum(gw.uh.data_mut(), rh, &dc_pre, b, hid, hid);
                for row in 0..b {
                    for i in 0..hid {
                        gw.bz.data_mut()[i] += dz_pre[row * hid + i];
                        gw.br.data_mut()[i] += dr_pre[row * hid + i];
                        gw.bh.data_mut()[i] += dc_pre[row * hid + i];
                    }
                }

                // input grads
                let dx = &mut d_x_stream[t * b * din..(t + 1) * b * din];
                add_in(dx, &matmul_a_bt(&dz_pre, layer.wz.data(), b, hid, din));
                add_in(dx, &matmul_a_bt(&dr_pre, layer.wr.data(), b, hid, din));
                add_in(dx, &matmul_a_bt(&dc_pre, layer.wh.data(), b, hid, din));

                d_h_next = d_h_prev;
            }

            if li == 0 {
                d_input_final = d_x_stream;
            } else {
                // this layer's input gradient is the lower layer's output grad
                for t in 0..n {
                    d_out[t].copy_from_slice(&d_x_stream[t * b * hid..(t + 1) * b * hid]);
                }
            }
        }

        // back to batch-major
        let din = self.input_dim;
        let mut d_x = vec![T::ZERO; b * n * din];
        for t in 0..n {
            for row in 0..b {
                let src = &d_input_final[(t * b + row) * din..][..din];
                d_x[(row * n + t) * din..][..din].copy_from_slice(src);
            }
        }
        (grads, d_x)
    }
}

#[inline]
fn add_in<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += *v;
    }
}

#[inline]
fn add_bias<T: Real>(x: &mut [T], bias: &[T], rows: usize, cols: usize) {
    for r in 0..rows {
        for i in 0..cols {
            x[r * cols + i] += bias[i];
        }
    }
}
