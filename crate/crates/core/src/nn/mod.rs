//! Feedforward Q-network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is linear with one unit per
//! action. Parameters live in one flat buffer so that target syncs, Adam
//! moments and checkpoints all operate on the same layout:
//!
//! ```text
//! layer 0: W0 (inputs x outputs, input-major) | b0 (outputs)
//! layer 1: W1 ...                             | b1
//! ```
//!
//! The network is generic over the scalar type. Training runs on `f32`; the
//! gradient checks instantiate `f64` so that finite differences are not
//! drowned by rounding.

mod checkpoint;

use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Floating point type the network can be instantiated with.
pub trait Scalar: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture {0:?}: need at least an input and an output layer, all widths > 0")]
    InvalidArchitecture(Vec<usize>),
    #[error("input has {got} features, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("action {action} out of range for a network with {actions} outputs")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("architecture mismatch: {source_dims:?} vs {dest_dims:?}")]
    ArchitectureMismatch {
        source_dims: Vec<usize>,
        dest_dims: Vec<usize>,
    },
    #[error("batch entry {entry}: target {value} is not finite")]
    NonFiniteTarget { entry: usize, value: f64 },
    #[error("batch entry {entry}: sample weight {value} is negative or not finite")]
    InvalidWeight { entry: usize, value: f64 },
    #[error(
        "non-finite gradient {value} at parameter {index} (layer {layer}) on update {step}; \
         batch loss {loss}"
    )]
    NonFiniteGradient {
        index: usize,
        layer: usize,
        step: u64,
        value: f64,
        loss: f64,
    },
    #[error("argmax of an empty Q vector")]
    EmptyQ,
    #[error("Q vector has NaN at index {0}")]
    NanQ(usize),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

/// Update rule applied by [`QNetwork::weighted_td_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    /// Plain gradient descent, used by tests to observe raw gradients
    /// through parameter deltas.
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One squared-error term `weight * (Q(state, action) - target)^2`.
#[derive(Clone, Copy, Debug)]
pub struct TdEntry<'a, T> {
    pub state: &'a [T],
    pub action: usize,
    pub target: T,
    pub weight: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerSpan {
    inputs: usize,
    outputs: usize,
    weights: usize,
    biases: usize,
}

/// Q-network parameters together with their Adam state.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T: Scalar = f32> {
    dims: Vec<usize>,
    layers: Vec<LayerSpan>,
    params: Vec<T>,
    adam_m: Vec<T>,
    adam_v: Vec<T>,
    step_count: u64,
}

/// Reusable per-layer activation buffers for forward passes.
#[derive(Clone, Debug, Default)]
pub struct Activations<T> {
    layers: Vec<Vec<T>>,
}

impl<T: Scalar> Activations<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn spans(dims: &[usize]) -> Result<Vec<LayerSpan>> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(NnError::InvalidArchitecture(dims.to_vec()));
    }
    let mut offset = 0;
    Ok(dims
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                inputs: w[0],
                outputs: w[1],
                weights: offset,
                biases: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            span
        })
        .collect())
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..a.len() {
        tail = tail + a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

impl<T: Scalar> QNetwork<T> {
    /// Random network with weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for span in net.layers.clone() {
            let bound = 1.0 / (span.inputs as f64).sqrt();
            let end = span.biases + span.outputs;
            for p in &mut net.params[span.weights..end] {
                *p = T::from(rng.random_range(-bound..bound)).unwrap();
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let layers = spans(dims)?;
        let n = layers
            .last()
            .map(|s| s.biases + s.outputs)
            .unwrap_or_default();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            params: vec![T::zero(); n],
            adam_m: vec![T::zero(); n],
            adam_v: vec![T::zero(); n],
            step_count: 0,
        })
    }

    /// Overwrite one layer. `weights` is given in the conventional
    /// `outputs x inputs` row-major order (`weights[j * inputs + i]` connects
    /// input `i` to output `j`).
    pub fn set_layer(&mut self, layer: usize, weights: &[T], biases: &[T]) -> Result<()> {
        let span = *self
            .layers
            .get(layer)
            .ok_or_else(|| NnError::InvalidArchitecture(self.dims.clone()))?;
        if weights.len() != span.inputs * span.outputs || biases.len() != span.outputs {
            return Err(NnError::InvalidArchitecture(self.dims.clone()));
        }
        for j in 0..span.outputs {
            for i in 0..span.inputs {
                self.params[span.weights + i * span.outputs + j] = weights[j * span.inputs + i];
            }
        }
        self.params[span.biases..span.biases + span.outputs].copy_from_slice(biases);
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_actions(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn adam_moments(&self) -> (&[T], &[T]) {
        (&self.adam_m, &self.adam_v)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Index of the layer a flat parameter index belongs to.
    pub fn layer_of(&self, index: usize) -> usize {
        self.layers
            .iter()
            .position(|s| index < s.biases + s.outputs)
            .unwrap_or(self.layers.len())
    }

    pub fn forward(&self, state: &[T]) -> Result<Vec<T>> {
        let mut acts = Activations::default();
        self.forward_with(state, &mut acts)?;
        Ok(acts.layers.pop().unwrap_or_default())
    }

    /// Forward pass keeping every layer's activations in `acts`.
    pub fn forward_with<'a>(&self, state: &[T], acts: &'a mut Activations<T>) -> Result<&'a [T]> {
        if state.len() != self.input_dim() {
            return Err(NnError::InputDim {
                expected: self.input_dim(),
                got: state.len(),
            });
        }
        acts.layers.resize_with(self.dims.len(), Vec::new);
        acts.layers[0].clear();
        acts.layers[0].extend_from_slice(state);
        let last = self.layers.len() - 1;
        for (l, span) in self.layers.iter().enumerate() {
            let (prev, rest) = acts.layers.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            out.extend_from_slice(&self.params[span.biases..span.biases + span.outputs]);
            for (i, &x) in input.iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                let row = &self.params
                    [span.weights + i * span.outputs..span.weights + (i + 1) * span.outputs];
                axpy(x, row, out);
            }
            if l != last {
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
        Ok(acts.output())
    }

    fn check_entries(&self, entries: &[TdEntry<'_, T>]) -> Result<()> {
        for (k, e) in entries.iter().enumerate() {
            if e.state.len() != self.input_dim() {
                return Err(NnError::InputDim {
                    expected: self.input_dim(),
                    got: e.state.len(),
                });
            }
            if e.action >= self.num_actions() {
                return Err(NnError::ActionOutOfRange {
                    action: e.action,
                    actions: self.num_actions(),
                });
            }
            if !e.target.is_finite() {
                return Err(NnError::NonFiniteTarget {
                    entry: k,
                    value: e.target.to_f64().unwrap_or(f64::NAN),
                });
            }
            if !(e.weight >= T::zero()) || !e.weight.is_finite() {
                return Err(NnError::InvalidWeight {
                    entry: k,
                    value: e.weight.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// Loss `sum_i w_i (Q(s_i, a_i) - y_i)^2 / divisor` and its gradient with
    /// respect to every parameter. Entries with zero weight contribute nothing.
    pub fn loss_and_gradient(&self, entries: &[TdEntry<'_, T>], divisor: usize) -> Result<(T, Vec<T>)> {
        let mut grad = vec![T::zero(); self.params.len()];
        let loss = self.accumulate_gradient(entries, divisor, &mut grad)?;
        Ok((loss, grad))
    }

    fn accumulate_gradient(
        &self,
        entries: &[TdEntry<'_, T>],
        divisor: usize,
        grad: &mut [T],
    ) -> Result<T> {
        self.check_entries(entries)?;
        let scale = T::one() / T::from(divisor.max(1)).unwrap();
        let two = T::one() + T::one();
        let mut acts = Activations::default();
        let mut delta: Vec<T> = Vec::new();
        let mut delta_prev: Vec<T> = Vec::new();
        let mut loss = T::zero();
        for e in entries {
            if e.weight == T::zero() {
                continue;
            }
            let q = self.forward_with(e.state, &mut acts)?[e.action];
            let err = q - e.target;
            loss = loss + e.weight * err * err * scale;

            delta.clear();
            delta.resize(self.num_actions(), T::zero());
            delta[e.action] = two * e.weight * err * scale;
            for l in (0..self.layers.len()).rev() {
                let span = self.layers[l];
                let input = &acts.layers[l];
                for (i, &x) in input.iter().enumerate() {
                    if x == T::zero() {
                        continue;
                    }
                    let start = span.weights + i * span.outputs;
                    axpy(x, &delta, &mut grad[start..start + span.outputs]);
                }
                axpy(
                    T::one(),
                    &delta,
                    &mut grad[span.biases..span.biases + span.outputs],
                );
                if l > 0 {
                    delta_prev.clear();
                    delta_prev.extend(input.iter().enumerate().map(|(i, &x)| {
                        if x > T::zero() {
                            let start = span.weights + i * span.outputs;
                            dot(&self.params[start..start + span.outputs], &delta)
                        } else {
                            T::zero()
                        }
                    }));
                    std::mem::swap(&mut delta, &mut delta_prev);
                }
            }
        }
        Ok(loss)
    }

    /// One optimizer step on the weighted squared TD loss. Returns the loss
    /// measured before the update.
    pub fn weighted_td_step(
        &mut self,
        entries: &[TdEntry<'_, T>],
        divisor: usize,
        optimizer: Optimizer,
    ) -> Result<T> {
        let mut grad = vec![T::zero(); self.params.len()];
        let loss = self.accumulate_gradient(entries, divisor, &mut grad)?;
        self.step_count += 1;
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient {
                index,
                layer: self.layer_of(index),
                step: self.step_count,
                value: grad[index].to_f64().unwrap_or(f64::NAN),
                loss: loss.to_f64().unwrap_or(f64::NAN),
            });
        }
        match optimizer {
            Optimizer::Sgd { lr } => {
                let lr = T::from(lr).unwrap();
                for (p, g) in self.params.iter_mut().zip(&grad) {
                    *p = *p - lr * *g;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (b1, b2) = (T::from(beta1).unwrap(), T::from(beta2).unwrap());
                let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
                let step = T::from(lr / c1).unwrap();
                let inv_c2 = T::from(1.0 / c2).unwrap();
                let eps = T::from(eps).unwrap();
                for (((p, g), m), v) in self
                    .params
                    .iter_mut()
                    .zip(&grad)
                    .zip(self.adam_m.iter_mut())
                    .zip(self.adam_v.iter_mut())
                {
                    *m = b1 * *m + one_b1 * *g;
                    *v = b2 * *v + one_b2 * *g * *g;
                    *p = *p - step * *m / ((*v * inv_c2).sqrt() + eps);
                }
            }
        }
        Ok(loss)
    }

    /// Copy parameters from `source`; Adam state of `self` is left alone.
    pub fn sync_from(&mut self, source: &QNetwork<T>) -> Result<()> {
        if self.dims != source.dims {
            return Err(NnError::ArchitectureMismatch {
                source_dims: source.dims.clone(),
                dest_dims: self.dims.clone(),
            });
        }
        self.params.copy_from_slice(&source.params);
        Ok(())
    }
}

/// `dest <- source` for the target network.
pub fn sync_target<T: Scalar>(source: &QNetwork<T>, dest: &mut QNetwork<T>) -> Result<()> {
    dest.sync_from(source)
}

/// Greedy action; ties go to the lowest index.
pub fn argmax_action<T: Scalar>(q: &[T]) -> Result<usize> {
    if q.is_empty() {
        return Err(NnError::EmptyQ);
    }
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if v.is_nan() {
            return Err(NnError::NanQ(i));
        }
        if *v > q[best] {
            best = i;
        }
    }
    Ok(best)
}
