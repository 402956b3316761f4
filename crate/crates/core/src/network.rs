//! Two-layer perceptron `q(t | l) = softmax(W2 tanh(W1 x + b1) + b2)` with
//! hand-written backpropagation.
//!
//! All matrices are row-major `(out_dim, in_dim)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Network input: either a dense vector or the positions of the ones in a
/// binary vector (the shape every one-hot encoded instance has).
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    OneHot(&'a [usize]),
}

#[derive(Debug, Clone, PartialEq)]
enum TraceInput {
    Dense(Vec<f64>),
    OneHot(Vec<usize>),
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    input: TraceInput,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub q: Vec<f64>,
    /// `log q`, taken from the logits so it stays finite if `q` underflows.
    pub log_q: Vec<f64>,
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Gradient w.r.t. the input; only filled by [`NetworkParams::backward`].
    pub input: Option<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(params: &NetworkParams) -> Self {
        Self {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
            input: None,
        }
    }

    pub fn fill_zero(&mut self) {
        for g in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        self.input = None;
    }

    /// `[w1, b1, w2, b2]`.
    pub fn groups(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

impl NetworkParams {
    /// Weights uniform on `(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init(input_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig("network dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let r = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            (0..fan_in * fan_out).map(|_| rng.random_range(-r..r)).collect()
        };
        let w1 = uniform(input_dim, hidden_dim);
        let w2 = uniform(hidden_dim, num_classes);
        Ok(Self { input_dim, hidden_dim, num_classes, w1, b1: vec![0.0; hidden_dim], w2, b2: vec![0.0; num_classes] })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            num_classes,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim * num_classes],
            b2: vec![0.0; num_classes],
        }
    }

    /// Checks tensor lengths against the declared dimensions.
    pub fn check_shapes(&self) -> Result<()> {
        let expect = [
            (self.w1.len(), self.input_dim * self.hidden_dim, "w1"),
            (self.b1.len(), self.hidden_dim, "b1"),
            (self.w2.len(), self.hidden_dim * self.num_classes, "w2"),
            (self.b2.len(), self.num_classes, "b2"),
        ];
        for (found, expected, what) in expect {
            if found != expected {
                return Err(Error::ShapeError { expected, found, what });
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn num_params(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    pub fn forward(&self, input: Input<'_>) -> Result<ForwardTrace> {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        let mut pre = self.b1.clone();
        let stored = match input {
            Input::Dense(x) => {
                if x.len() != d {
                    return Err(Error::ShapeError { expected: d, found: x.len(), what: "input" });
                }
                for (j, p) in pre.iter_mut().enumerate() {
                    let row = &self.w1[j * d..(j + 1) * d];
                    *p += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                }
                TraceInput::Dense(x.to_vec())
            }
            Input::OneHot(active) => {
                if let Some(&bad) = active.iter().find(|&&a| a >= d) {
                    return Err(Error::ShapeError { expected: d, found: bad + 1, what: "input index" });
                }
                for (j, p) in pre.iter_mut().enumerate() {
                    let row = &self.w1[j * d..(j + 1) * d];
                    *p += active.iter().map(|&a| row[a]).sum::<f64>();
                }
                TraceInput::OneHot(active.to_vec())
            }
        };
        let hidden: Vec<f64> = pre.iter().map(|&z| libm::tanh(z)).collect();
        let mut logits = self.b2.clone();
        for (k, l) in logits.iter_mut().enumerate() {
            let row = &self.w2[k * h..(k + 1) * h];
            *l += row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>();
        }
        let mut q = vec![0.0; c];
        let mut log_q = vec![0.0; c];
        math::softmax_into(&logits, &mut q);
        math::log_softmax_into(&logits, &mut log_q);
        Ok(ForwardTrace { input: stored, pre_activation: pre, hidden, logits, q, log_q })
    }

    /// Gradients of a scalar loss given `dL/dq`, including `dL/dx`.
    pub fn backward(&self, trace: &ForwardTrace, dl_dq: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros(self);
        let dh1 = self.backward_into(trace, dl_dq, &mut grads);
        let d = self.input_dim;
        let mut dx = vec![0.0; d];
        for (j, &g) in dh1.iter().enumerate() {
            for (dxi, w) in dx.iter_mut().zip(&self.w1[j * d..(j + 1) * d]) {
                *dxi += w * g;
            }
        }
        grads.input = Some(dx);
        grads
    }

    /// Adds this trace's parameter gradients into `grads` and returns
    /// `dL/d(pre-activation)`.
    pub fn backward_into(&self, trace: &ForwardTrace, dl_dq: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        debug_assert_eq!(dl_dq.len(), self.num_classes);
        // softmax Jacobian: dL/dz_j = q_j (g_j - sum_c q_c g_c)
        let mean: f64 = trace.q.iter().zip(dl_dq).map(|(q, g)| q * g).sum();
        let dz: Vec<f64> = trace.q.iter().zip(dl_dq).map(|(q, g)| q * (g - mean)).collect();

        let mut da = vec![0.0; h];
        for (k, &g) in dz.iter().enumerate() {
            grads.b2[k] += g;
            let w_row = &self.w2[k * h..(k + 1) * h];
            let g_row = &mut grads.w2[k * h..(k + 1) * h];
            for j in 0..h {
                g_row[j] += g * trace.hidden[j];
                da[j] += g * w_row[j];
            }
        }
        let dh1: Vec<f64> = da.iter().zip(&trace.hidden).map(|(g, a)| g * (1.0 - a * a)).collect();
        for (j, &g) in dh1.iter().enumerate() {
            grads.b1[j] += g;
            let g_row = &mut grads.w1[j * d..(j + 1) * d];
            match &trace.input {
                TraceInput::Dense(x) => g_row.iter_mut().zip(x).for_each(|(gw, v)| *gw += g * v),
                TraceInput::OneHot(active) => active.iter().for_each(|&a| g_row[a] += g),
            }
        }
        dh1
    }
}
