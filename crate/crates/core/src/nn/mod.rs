//! Fixed actor-critic network over the 8×8 movement state.
//!
//! ```text
//! input 8×8 ─ enc (8→128, shared by all 8 rows) ─ ReLU ─ 8×128
//!           ─ mix (1024→256) ─ ReLU ─ fc1 (256→128) ─ ReLU ─ fc2 (128→64) ─ ReLU
//!           ├ pi1 (64→32) ─ ReLU ─ pi2 (32→n_actions)   logits
//!           └ v1  (64→32) ─ ReLU ─ v2  (32→1)           value
//! ```
//!
//! The shared row encoder is the 1×8 convolution with 128 filters; `mix` is
//! the 8×1 convolution with 256 filters, flattened position-major
//! (`p * 128 + c`). All parameters live in one flat buffer so the optimizer,
//! gradient clipping and checkpointing can treat them uniformly.

mod adam;
mod checkpoint;
mod scalar;

pub use adam::{clip_grad_norm, global_norm, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use scalar::{matmul_nn, matmul_nt, matmul_tn, Scalar};

use crate::features::FEATURE_COUNT;
use crate::topology::MOVEMENT_COUNT;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const STATE_LEN: usize = MOVEMENT_COUNT * FEATURE_COUNT;
pub const ENC_WIDTH: usize = 128;
pub const MIX_WIDTH: usize = 256;
pub const FC1_WIDTH: usize = 128;
pub const FC2_WIDTH: usize = 64;
pub const HEAD_WIDTH: usize = 32;
/// Scale applied to the initial weights of the two output layers.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

pub const ENC: usize = 0;
pub const MIX: usize = 1;
pub const FC1: usize = 2;
pub const FC2: usize = 3;
pub const PI1: usize = 4;
pub const PI2: usize = 5;
pub const V1: usize = 6;
pub const V2: usize = 7;
pub const LAYER_COUNT: usize = 8;
pub const LAYER_NAMES: [&str; LAYER_COUNT] = ["enc", "mix", "fc1", "fc2", "pi1", "pi2", "v1", "v2"];
/// Layer feeding each layer; `None` is the state input.
pub const LAYER_INPUT: [Option<usize>; LAYER_COUNT] =
    [None, Some(ENC), Some(MIX), Some(FC1), Some(FC2), Some(PI1), Some(FC2), Some(V1)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("non-finite value in network input")]
    NonFiniteInput,
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape { what: String, expected: usize, got: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub out: usize,
    pub inp: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.out * self.inp
    }

    pub fn len(&self) -> usize {
        self.out * self.inp + self.out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn layer_shapes(n_actions: usize) -> [LayerShape; LAYER_COUNT] {
    let s = |out, inp| LayerShape { out, inp };
    [
        s(ENC_WIDTH, FEATURE_COUNT),
        s(MIX_WIDTH, ENC_WIDTH * MOVEMENT_COUNT),
        s(FC1_WIDTH, MIX_WIDTH),
        s(FC2_WIDTH, FC1_WIDTH),
        s(HEAD_WIDTH, FC2_WIDTH),
        s(n_actions, HEAD_WIDTH),
        s(HEAD_WIDTH, FC2_WIDTH),
        s(1, HEAD_WIDTH),
    ]
}

/// Network parameters; the same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    n_actions: usize,
    shapes: [LayerShape; LAYER_COUNT],
    offsets: [usize; LAYER_COUNT],
    data: Vec<T>,
}

pub type NetworkParams = Network<f32>;
pub type Gradients<T> = Network<T>;

impl<T: Scalar> Network<T> {
    pub fn zeros(n_actions: usize) -> Self {
        assert!(n_actions > 0);
        let shapes = layer_shapes(n_actions);
        let mut offsets = [0; LAYER_COUNT];
        let mut total = 0;
        for (l, s) in shapes.iter().enumerate() {
            offsets[l] = total;
            total += s.len();
        }
        Self { n_actions, shapes, offsets, data: vec![T::zero(); total] }
    }

    /// He-normal hidden weights, zero biases, output layers scaled down.
    pub fn init<R: Rng + ?Sized>(n_actions: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(n_actions);
        for l in 0..LAYER_COUNT {
            let shape = net.shapes[l];
            let mut std = (2.0 / shape.inp as f64).sqrt();
            if l == PI2 || l == V2 {
                std *= OUTPUT_INIT_SCALE;
            }
            for w in net.weight_mut(l) {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::of(z * std);
            }
        }
        net
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self, layer: usize) -> LayerShape {
        self.shapes[layer]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Row-major `out × inp` weight matrix.
    pub fn weight(&self, layer: usize) -> &[T] {
        let o = self.offsets[layer];
        &self.data[o..o + self.shapes[layer].weight_len()]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [T] {
        let o = self.offsets[layer];
        let n = self.shapes[layer].weight_len();
        &mut self.data[o..o + n]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let s = self.shapes[layer];
        let o = self.offsets[layer] + s.weight_len();
        &self.data[o..o + s.out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [T] {
        let s = self.shapes[layer];
        let o = self.offsets[layer] + s.weight_len();
        &mut self.data[o..o + s.out]
    }

    /// Index of `weight(layer)[0]` in the flat buffer.
    pub fn offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    /// Named tensors in storage order: `enc.w`, `enc.b`, `mix.w`, ...
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::with_capacity(2 * LAYER_COUNT);
        for l in 0..LAYER_COUNT {
            let s = self.shapes[l];
            out.push((format!("{}.w", LAYER_NAMES[l]), vec![s.out, s.inp], self.weight(l)));
            out.push((format!("{}.b", LAYER_NAMES[l]), vec![s.out], self.bias(l)));
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            n_actions: self.n_actions,
            shapes: self.shapes,
            offsets: self.offsets,
            data: self.data.iter().map(|x| U::from(*x).expect("finite cast")).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// First non-finite tensor, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, _, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(name, _, _)| name)
    }

    /// Forward pass over `batch` states stored back to back (64 values each).
    pub fn forward(&self, states: &[T], batch: usize) -> Result<Cache<T>, NnError> {
        if states.len() != batch * STATE_LEN {
            return Err(NnError::Shape { what: "state batch".into(), expected: batch * STATE_LEN, got: states.len() });
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        let mut acts: [Vec<T>; LAYER_COUNT] = Default::default();
        for l in 0..LAYER_COUNT {
            let rows = self.rows(l, batch);
            let input = match LAYER_INPUT[l] {
                None => states,
                Some(p) => &acts[p][..],
            };
            let out = self.affine(l, input, rows, l != PI2 && l != V2);
            acts[l] = out;
        }
        Ok(Cache { batch, input: states.to_vec(), acts })
    }

    /// Rows a layer processes for a batch: the encoder sees every movement row.
    pub fn rows(&self, layer: usize, batch: usize) -> usize {
        if layer == ENC {
            batch * MOVEMENT_COUNT
        } else {
            batch
        }
    }

    /// `relu?(input · Wᵀ + b)` for `rows` input rows.
    pub fn affine(&self, layer: usize, input: &[T], rows: usize, relu: bool) -> Vec<T> {
        let s = self.shapes[layer];
        let bias = self.bias(layer);
        let mut out = Vec::with_capacity(rows * s.out);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        matmul_nt(input, self.weight(layer), &mut out, rows, s.inp, s.out, T::one());
        if relu {
            for x in out.iter_mut() {
                if *x <= T::zero() {
                    *x = T::zero();
                }
            }
        }
        out
    }

    /// Gradients of `Σ dlogits·logits + Σ dvalue·value` with respect to every parameter.
    pub fn backward(&self, cache: &Cache<T>, dlogits: &[T], dvalue: &[T]) -> Result<Gradients<T>, NnError> {
        let b = cache.batch;
        if dlogits.len() != b * self.n_actions {
            return Err(NnError::Shape { what: "dlogits".into(), expected: b * self.n_actions, got: dlogits.len() });
        }
        if dvalue.len() != b {
            return Err(NnError::Shape { what: "dvalue".into(), expected: b, got: dvalue.len() });
        }
        if cache.acts[PI2].len() != b * self.n_actions {
            return Err(NnError::Shape { what: "cache".into(), expected: b * self.n_actions, got: cache.acts[PI2].len() });
        }
        let mut grads = Self::zeros(self.n_actions);

        let mut d_pi1 = self.layer_backward(PI2, cache, dlogits, &mut grads);
        relu_mask(&mut d_pi1, &cache.acts[PI1]);
        let mut d_fc2 = self.layer_backward(PI1, cache, &d_pi1, &mut grads);

        let mut d_v1 = self.layer_backward(V2, cache, dvalue, &mut grads);
        relu_mask(&mut d_v1, &cache.acts[V1]);
        let d_fc2_v = self.layer_backward(V1, cache, &d_v1, &mut grads);
        for (a, v) in d_fc2.iter_mut().zip(d_fc2_v) {
            *a = *a + v;
        }
        relu_mask(&mut d_fc2, &cache.acts[FC2]);

        let mut d_fc1 = self.layer_backward(FC2, cache, &d_fc2, &mut grads);
        relu_mask(&mut d_fc1, &cache.acts[FC1]);
        let mut d_mix = self.layer_backward(FC1, cache, &d_fc1, &mut grads);
        relu_mask(&mut d_mix, &cache.acts[MIX]);
        let mut d_enc = self.layer_backward(MIX, cache, &d_mix, &mut grads);
        relu_mask(&mut d_enc, &cache.acts[ENC]);
        self.param_backward(ENC, cache, &d_enc, &mut grads);
        Ok(grads)
    }

    fn layer_input<'a>(&self, layer: usize, cache: &'a Cache<T>) -> &'a [T] {
        match LAYER_INPUT[layer] {
            None => &cache.input,
            Some(p) => &cache.acts[p],
        }
    }

    fn param_backward(&self, layer: usize, cache: &Cache<T>, d_out: &[T], grads: &mut Gradients<T>) {
        let s = self.shapes[layer];
        let rows = self.rows(layer, cache.batch);
        let input = self.layer_input(layer, cache);
        // dW (out×inp) = d_outᵀ · input
        matmul_tn(d_out, input, grads.weight_mut(layer), s.out, rows, s.inp, T::one());
        let db = grads.bias_mut(layer);
        for r in 0..rows {
            for (g, d) in db.iter_mut().zip(&d_out[r * s.out..(r + 1) * s.out]) {
                *g = *g + *d;
            }
        }
    }

    /// Accumulates the layer's parameter gradients and returns d(input).
    fn layer_backward(&self, layer: usize, cache: &Cache<T>, d_out: &[T], grads: &mut Gradients<T>) -> Vec<T> {
        self.param_backward(layer, cache, d_out, grads);
        let s = self.shapes[layer];
        let rows = self.rows(layer, cache.batch);
        let mut d_in = vec![T::zero(); rows * s.inp];
        matmul_nn(d_out, self.weight(layer), &mut d_in, rows, s.out, s.inp, T::zero());
        d_in
    }
}

fn relu_mask<T: Scalar>(grad: &mut [T], post: &[T]) {
    for (g, a) in grad.iter_mut().zip(post) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Activations retained from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    batch: usize,
    input: Vec<T>,
    /// Post-activation output of every layer (ReLU except `pi2` and `v2`).
    acts: [Vec<T>; LAYER_COUNT],
}

impl<T: Scalar> Cache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn activation(&self, layer: usize) -> &[T] {
        &self.acts[layer]
    }

    pub fn logits(&self, b: usize) -> &[T] {
        let n = self.acts[PI2].len() / self.batch;
        &self.acts[PI2][b * n..(b + 1) * n]
    }

    pub fn value(&self, b: usize) -> T {
        self.acts[V2][b]
    }
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).fold(T::zero(), |a, b| a + b).ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    log_softmax(logits).into_iter().map(|x| x.exp()).collect()
}

pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
