//! Central finite differences over every network parameter.
//!
//! The loss is a random linear probe `L = c · logits + c_v · value`. Each
//! perturbed evaluation re-runs the forward pass from the perturbed layer
//! down; upstream activations are unchanged by construction and are reused.
//! The first downstream pre-activation is updated with the changed columns
//! only, the rest is recomputed in full. Before checking, biases are nudged
//! so every hidden pre-activation sits at least `KINK_MARGIN` away from the
//! ReLU kink, and every perturbed evaluation is audited for mask flips.

use adlight::nn::{
    Network, ENC, FC1, FC2, LAYER_COUNT, LAYER_INPUT, LAYER_NAMES, MIX, PI1, PI2, STATE_LEN, V1, V2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const KINK_MARGIN: f64 = 0.05;
/// Denominator floor for relative error; gradients below it are compared absolutely.
pub const REL_FLOOR: f64 = 1e-8;
const CHUNK: usize = 2048;

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub params_checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
    pub mask_flips: usize,
}

fn consumers(l: usize) -> Vec<usize> {
    (0..LAYER_COUNT).filter(|&k| LAYER_INPUT[k] == Some(l)).collect()
}

fn is_output(l: usize) -> bool {
    l == PI2 || l == V2
}

fn rows(l: usize) -> usize {
    if l == ENC {
        8
    } else {
        1
    }
}

struct Probe {
    net: Network<f64>,
    state: Vec<f64>,
    c_logits: Vec<f64>,
    c_value: f64,
    /// Pre-activations of every layer for the base point.
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Probe {
    fn input_of(&self, l: usize) -> &[f64] {
        match LAYER_INPUT[l] {
            None => &self.state,
            Some(p) => &self.post[p],
        }
    }

    fn refresh(&mut self) {
        for l in 0..LAYER_COUNT {
            let input = self.input_of(l).to_vec();
            let z = self.net.affine(l, &input, rows(l), false);
            let a = if is_output(l) { z.clone() } else { z.iter().map(|&x| x.max(0.0)).collect() };
            self.pre[l] = z;
            self.post[l] = a;
        }
    }

    /// Pushes hidden pre-activations away from zero, layer by layer.
    fn clear_kinks(&mut self, rng: &mut ChaCha8Rng) {
        for l in [ENC, MIX, FC1, FC2, PI1, V1] {
            self.refresh();
            let out = self.net.shape(l).out;
            for o in 0..out {
                let zs: Vec<f64> = (0..rows(l)).map(|r| self.pre[l][r * out + o]).collect();
                let ok = |d: f64| zs.iter().all(|z| (z + d).abs() >= KINK_MARGIN);
                let mut shift = 0.0;
                let mut k = 1.0;
                while !ok(shift) {
                    shift = rng.random_range(-1.0..1.0) * KINK_MARGIN * k;
                    k += 0.5;
                }
                self.net.bias_mut(l)[o] += shift;
            }
        }
        self.refresh();
    }

    /// Losses for `n` pre-activation vectors of layer `l`, plus ReLU mask flips.
    fn from_pre(&self, l: usize, z: Vec<f64>, n: usize) -> (Vec<f64>, usize) {
        match l {
            PI2 => (z.chunks(self.c_logits.len()).map(|r| dot(r, &self.c_logits)).collect(), 0),
            V2 => (z.iter().map(|v| v * self.c_value).collect(), 0),
            _ => {
                let width = self.pre[l].len();
                let mut flips = 0;
                let post: Vec<f64> = z
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        if (x > 0.0) != (self.pre[l][i % width] > 0.0) {
                            flips += 1;
                        }
                        x.max(0.0)
                    })
                    .collect();
                let (losses, f) = self.from_post(l, &post, n);
                (losses, flips + f)
            }
        }
    }

    fn from_post(&self, l: usize, post: &[f64], n: usize) -> (Vec<f64>, usize) {
        let mut total = vec![0.0; n];
        let mut flips = 0;
        for k in consumers(l) {
            let z = self.net.affine(k, post, n, false);
            let (losses, f) = self.from_pre(k, z, n);
            flips += f;
            for (t, x) in total.iter_mut().zip(losses) {
                *t += x;
            }
        }
        (total, flips)
    }

    /// Loss of the branches not reachable from layer `l`.
    fn constant_part(&self, l: usize) -> f64 {
        match l {
            PI1 | PI2 => self.post[V2][0] * self.c_value,
            V1 | V2 => dot(&self.post[PI2], &self.c_logits),
            _ => 0.0,
        }
    }

    /// Evaluates the loss for a batch of sparse changes to layer `l`'s
    /// pre-activations: each entry lists (flat index, delta).
    fn losses(&self, l: usize, changes: &[Vec<(usize, f64)>]) -> (Vec<f64>, usize) {
        let n = changes.len();
        let base_pre = &self.pre[l];
        let mut flips = 0;
        // changed post-activations per perturbation
        let deltas: Vec<Vec<(usize, f64)>> = changes
            .iter()
            .map(|ch| {
                ch.iter()
                    .map(|&(j, d)| {
                        let z = base_pre[j] + d;
                        if is_output(l) {
                            (j, d)
                        } else {
                            if (z > 0.0) != (base_pre[j] > 0.0) {
                                flips += 1;
                            }
                            (j, z.max(0.0) - base_pre[j].max(0.0))
                        }
                    })
                    .collect()
            })
            .collect();
        let constant = self.constant_part(l);
        if is_output(l) {
            let c: Vec<f64> = if l == PI2 { self.c_logits.clone() } else { vec![self.c_value] };
            let base = dot(&self.post[l], &c);
            let losses = deltas
                .iter()
                .map(|d| constant + base + d.iter().map(|&(j, x)| c[j] * x).sum::<f64>())
                .collect();
            return (losses, flips);
        }
        let mut total = vec![constant; n];
        for k in consumers(l) {
            let shape = self.net.shape(k);
            let w = self.net.weight(k);
            let mut z = Vec::with_capacity(n * shape.out);
            for d in &deltas {
                let mut zk = self.pre[k].clone();
                for &(j, x) in d {
                    if x != 0.0 {
                        for (r, zr) in zk.iter_mut().enumerate() {
                            *zr += w[r * shape.inp + j] * x;
                        }
                    }
                }
                z.extend(zk);
            }
            let (losses, f) = self.from_pre(k, z, n);
            flips += f;
            for (t, x) in total.iter_mut().zip(losses) {
                *t += x;
            }
        }
        (total, flips)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One parameter's perturbation as sparse pre-activation changes (per unit step).
fn param_effect(probe: &Probe, l: usize, index: usize) -> Vec<(usize, f64)> {
    let shape = probe.net.shape(l);
    let input = probe.input_of(l);
    let (o, i) = if index < shape.weight_len() {
        (index / shape.inp, Some(index % shape.inp))
    } else {
        (index - shape.weight_len(), None)
    };
    (0..rows(l))
        .map(|r| {
            let x = match i {
                Some(i) => input[r * shape.inp + i],
                None => 1.0,
            };
            (r * shape.out + o, x)
        })
        .filter(|&(_, x)| x != 0.0)
        .collect()
}

pub fn check_seed(seed: u64, h: f64) -> GradCheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::init(12, &mut rng);
    let bias = Normal::new(0.0, 0.1).unwrap();
    for l in 0..LAYER_COUNT {
        for b in net.bias_mut(l) {
            *b = bias.sample(&mut rng);
        }
    }
    let state: Vec<f64> = (0..STATE_LEN).map(|_| rng.random_range(0.0..1.4)).collect();
    let c_logits: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c_value = rng.random_range(-1.0..1.0);
    let mut probe = Probe { net, state, c_logits, c_value, pre: vec![vec![]; LAYER_COUNT], post: vec![vec![]; LAYER_COUNT] };
    probe.clear_kinks(&mut rng);

    let cache = probe.net.forward(&probe.state, 1).unwrap();
    let grads = probe.net.backward(&cache, &probe.c_logits, &[probe.c_value]).unwrap();

    let mut outcome = GradCheckOutcome { params_checked: 0, max_rel_err: 0.0, worst: String::new(), mask_flips: 0 };
    for l in 0..LAYER_COUNT {
        let shape = probe.net.shape(l);
        let analytic = &grads.as_slice()[grads.offset(l)..grads.offset(l) + shape.len()];
        let effects: Vec<Vec<(usize, f64)>> = (0..shape.len()).map(|i| param_effect(&probe, l, i)).collect();
        let live: Vec<usize> = (0..shape.len()).filter(|&i| !effects[i].is_empty()).collect();
        let mut numeric = vec![0.0; shape.len()];
        for chunk in live.chunks(CHUNK) {
            let mut changes = Vec::with_capacity(2 * chunk.len());
            for &i in chunk {
                changes.push(effects[i].iter().map(|&(j, x)| (j, h * x)).collect());
                changes.push(effects[i].iter().map(|&(j, x)| (j, -h * x)).collect());
            }
            let (losses, flips) = probe.losses(l, &changes);
            outcome.mask_flips += flips;
            for (k, &i) in chunk.iter().enumerate() {
                numeric[i] = (losses[2 * k] - losses[2 * k + 1]) / (2.0 * h);
            }
        }
        for i in 0..shape.len() {
            let (a, n) = (analytic[i], numeric[i]);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
            if rel > outcome.max_rel_err {
                outcome.max_rel_err = rel;
                let kind = if i < shape.weight_len() { "w" } else { "b" };
                outcome.worst = format!("{}.{kind}[{i}] analytic {a:e} numeric {n:e}", LAYER_NAMES[l]);
            }
        }
        outcome.params_checked += shape.len();
    }
    outcome
}
