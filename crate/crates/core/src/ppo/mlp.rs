//! Dense tanh networks over a flat parameter slice.
//!
//! A layer `in -> out` stores its weight row-major as `in x out` followed by
//! `out` biases, so a batch forward pass is one GEMM per layer.

use rand::Rng;
use rand::distr::{Distribution, Uniform};

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: callers pass slices whose lengths cover the strided m x k, k x n
    // and m x n (row-major, dense) extents; checked by the debug asserts.
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    /// `[input, hidden.., output]`
    pub sizes: Vec<usize>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub batch: usize,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block; biases follow the weights.
    fn layer_offset(&self, l: usize) -> usize {
        self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(name suffix, shape)` of every tensor in parameter order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for l in 0..self.n_layers() {
            out.push((format!("l{l}.weight"), vec![self.sizes[l], self.sizes[l + 1]]));
            out.push((format!("l{l}.bias"), vec![self.sizes[l + 1]]));
        }
        out
    }

    /// Uniform fan-in initialisation; the last layer is scaled by `out_gain`.
    pub fn init<R: Rng>(&self, params: &mut [f64], out_gain: f64, rng: &mut R) {
        for l in 0..self.n_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let gain = if l + 1 == self.n_layers() { out_gain } else { 1.0 };
            let bound = gain * (6.0 / (i + o) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for w in &mut params[off..off + i * o] {
                *w = dist.sample(rng);
            }
            params[off + i * o..off + i * o + o].fill(0.0);
        }
    }

    /// Forward pass over a row-major `batch x input` matrix.
    pub fn forward(&self, params: &[f64], input: &[f64], batch: usize) -> MlpCache {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(input.len(), batch * self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for l in 0..self.n_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let w = &params[off..off + i * o];
            let b = &params[off + i * o..off + i * o + o];
            let mut z = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            let x = acts.last().unwrap();
            gemm(batch, i, o, (x, i as isize, 1), (w, o as isize, 1), 1.0, &mut z);
            if l + 1 < self.n_layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        MlpCache { acts, batch }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        let batch = cache.batch;
        let mut delta = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let x = &cache.acts[l];
            // dW += X^T delta
            gemm(
                i,
                batch,
                o,
                (x, 1, i as isize),
                (&delta, o as isize, 1),
                1.0,
                &mut grad[off..off + i * o],
            );
            let gb = &mut grad[off + i * o..off + i * o + o];
            for row in delta.chunks_exact(o) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta W^T) * (1 - h^2)
            let w = &params[off..off + i * o];
            let mut prev = vec![0.0; batch * i];
            gemm(batch, o, i, (&delta, o as isize, 1), (w, 1, o as isize), 0.0, &mut prev);
            for (p, h) in prev.iter_mut().zip(x) {
                *p *= 1.0 - h * h;
            }
            delta = prev;
        }
    }
}
