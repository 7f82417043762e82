//! The classifier network: topology description, parameters, forward pass,
//! hand-derived backpropagation and the Adam optimizer.

pub mod adam;
pub mod layers;

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor4};
use crate::Error;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    bce_logit_grad, bce_loss, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    maxpool2, maxpool2_backward, output_shape, predict_label, relu, relu_backward, sigmoid,
};

/// One convolutional layer: `filters` 3x3 kernels, stride 1, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: (usize, usize),
}

impl ConvLayerSpec {
    pub fn new(filters: usize) -> Self {
        Self {
            filters,
            kernel: (3, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayerSpec {
    pub units: usize,
}

/// Declarative description of one network: conv stack, optional pooling,
/// ReLU dense stack, single sigmoid output unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTopology {
    pub conv_layers: Vec<ConvLayerSpec>,
    pub pool_after_each_conv: bool,
    pub dense_layers: Vec<DenseLayerSpec>,
    pub input: (usize, usize, usize),
}

impl ModelTopology {
    /// Standard 3-channel 32x32 input topology with 3x3 kernels and 2x2
    /// pooling after every conv layer.
    pub fn new(conv_filters: &[usize], dense_units: &[usize]) -> Result<Self, Error> {
        let t = Self {
            conv_layers: conv_filters.iter().map(|&f| ConvLayerSpec::new(f)).collect(),
            pool_after_each_conv: true,
            dense_layers: dense_units.iter().map(|&u| DenseLayerSpec { units: u }).collect(),
            input: (3, 32, 32),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_input(mut self, input: (usize, usize, usize)) -> Result<Self, Error> {
        self.input = input;
        self.validate()?;
        Ok(self)
    }

    /// Checks that spatial dimensions stay >= 1 through the whole stack and
    /// that layer sizes are positive. Returns the flattened feature length.
    pub fn validate(&self) -> Result<usize, Error> {
        let (c, mut h, mut w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidTopology("empty input shape".into()));
        }
        let mut channels = c;
        for (i, conv) in self.conv_layers.iter().enumerate() {
            if conv.filters == 0 {
                return Err(Error::InvalidTopology(format!("conv layer {i} has 0 filters")));
            }
            let (oh, ow) = output_shape(h, w, conv.kernel).map_err(|_| {
                Error::InvalidTopology(format!(
                    "conv layer {i}: kernel {:?} does not fit {h}x{w}",
                    conv.kernel
                ))
            })?;
            h = oh;
            w = ow;
            channels = conv.filters;
            if self.pool_after_each_conv {
                h /= 2;
                w /= 2;
                if h == 0 || w == 0 {
                    return Err(Error::InvalidTopology(format!(
                        "conv layer {i}: pooling collapses spatial dims to zero"
                    )));
                }
            }
        }
        for (i, d) in self.dense_layers.iter().enumerate() {
            if d.units == 0 {
                return Err(Error::InvalidTopology(format!("dense layer {i} has 0 units")));
            }
        }
        Ok(channels * h * w)
    }

    pub fn flattened_len(&self) -> usize {
        self.validate().expect("topology validated at construction")
    }

    /// Total learnable parameter count (used for grid-search tie-breaking).
    pub fn parameter_count(&self) -> usize {
        let mut count = 0;
        let mut in_ch = self.input.0;
        for conv in &self.conv_layers {
            count += conv.filters * in_ch * conv.kernel.0 * conv.kernel.1 + conv.filters;
            in_ch = conv.filters;
        }
        let mut in_len = self.flattened_len();
        for d in &self.dense_layers {
            count += d.units * in_len + d.units;
            in_len = d.units;
        }
        count + in_len + 1 // output unit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<F> {
    /// `(filters, in_ch, kh, kw)`
    pub kernels: Tensor4<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<F> {
    /// Row-major `(units, in_len)`.
    pub weights: Vec<F>,
    pub bias: Vec<F>,
    pub units: usize,
    pub in_len: usize,
}

/// All learnable tensors of one model, in topology order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<F> {
    pub conv: Vec<ConvParams<F>>,
    pub dense: Vec<DenseParams<F>>,
    /// Single sigmoid output unit.
    pub output: DenseParams<F>,
}

impl<F: Scalar> Parameters<F> {
    /// Flat views over every parameter tensor, in a fixed documented order:
    /// conv kernels+bias per layer, dense weights+bias per layer, output
    /// weights+bias.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for c in &self.conv {
            out.push(c.kernels.data());
            out.push(c.bias.as_slice());
        }
        for d in &self.dense {
            out.push(d.weights.as_slice());
            out.push(d.bias.as_slice());
        }
        out.push(self.output.weights.as_slice());
        out.push(self.output.bias.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for c in &mut self.conv {
            out.push(c.kernels.data_mut());
            out.push(c.bias.as_mut_slice());
        }
        for d in &mut self.dense {
            out.push(d.weights.as_mut_slice());
            out.push(d.bias.as_mut_slice());
        }
        out.push(self.output.weights.as_mut_slice());
        out.push(self.output.bias.as_mut_slice());
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            for v in t.iter_mut() {
                *v = F::zero();
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Scalar>(&self) -> Parameters<G> {
        let conv = self
            .conv
            .iter()
            .map(|c| ConvParams {
                kernels: c.kernels.cast(),
                bias: c.bias.iter().map(|&b| G::from_f64(b.as_f64())).collect(),
            })
            .collect();
        let cast_dense = |d: &DenseParams<F>| DenseParams {
            weights: d.weights.iter().map(|&w| G::from_f64(w.as_f64())).collect(),
            bias: d.bias.iter().map(|&b| G::from_f64(b.as_f64())).collect(),
            units: d.units,
            in_len: d.in_len,
        };
        Parameters {
            conv,
            dense: self.dense.iter().map(cast_dense).collect(),
            output: cast_dense(&self.output),
        }
    }
}

/// He-uniform initialization (bound `sqrt(6 / fan_in)`), zero biases.
pub fn init_parameters<F: Scalar>(
    topology: &ModelTopology,
    rng: &mut SeededRng,
) -> Result<Parameters<F>, Error> {
    topology.validate()?;
    let mut conv = Vec::new();
    let mut in_ch = topology.input.0;
    for spec in &topology.conv_layers {
        let (kh, kw) = spec.kernel;
        let fan_in = in_ch * kh * kw;
        let bound = (6.0 / fan_in as f64).sqrt();
        let shape = (spec.filters, in_ch, kh, kw);
        let len = spec.filters * in_ch * kh * kw;
        let data = (0..len)
            .map(|_| F::from_f64(rng.uniform_range(-bound, bound)))
            .collect();
        conv.push(ConvParams {
            kernels: Tensor4::from_values(shape, data)?,
            bias: vec![F::zero(); spec.filters],
        });
        in_ch = spec.filters;
    }
    let mut dense = Vec::new();
    let mut in_len = topology.flattened_len();
    for spec in &topology.dense_layers {
        let bound = (6.0 / in_len as f64).sqrt();
        let weights = (0..spec.units * in_len)
            .map(|_| F::from_f64(rng.uniform_range(-bound, bound)))
            .collect();
        dense.push(DenseParams {
            weights,
            bias: vec![F::zero(); spec.units],
            units: spec.units,
            in_len,
        });
        in_len = spec.units;
    }
    let bound = (6.0 / in_len as f64).sqrt();
    let output = DenseParams {
        weights: (0..in_len)
            .map(|_| F::from_f64(rng.uniform_range(-bound, bound)))
            .collect(),
        bias: vec![F::zero(); 1],
        units: 1,
        in_len,
    };
    Ok(Parameters { conv, dense, output })
}

/// Topology plus parameters plus training provenance.
#[derive(Debug, Clone)]
pub struct Model<F = f32> {
    pub topology: ModelTopology,
    pub params: Parameters<F>,
    pub seed: u64,
    pub epochs_trained: usize,
}

/// Everything the backward pass (and Grad-CAM) needs from one forward pass.
pub struct ForwardCache<F> {
    pub input: Tensor4<F>,
    /// Per conv layer: pre-activation z, post-ReLU activation, pool argmax
    /// (empty when pooling is off), post-pool shape.
    pub conv_pre: Vec<Tensor4<F>>,
    pub conv_act: Vec<Tensor4<F>>,
    pub pool_argmax: Vec<Vec<usize>>,
    pub pool_out: Vec<Tensor4<F>>,
    /// Per dense layer: input vector (per batch item), pre-activation.
    pub dense_in: Vec<Vec<Vec<F>>>,
    pub dense_pre: Vec<Vec<Vec<F>>>,
    /// Flattened feature vector per batch item (input to the dense stack).
    pub flat: Vec<Vec<F>>,
    pub output_in: Vec<Vec<F>>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
}

impl<F: Scalar> Model<F> {
    pub fn new(topology: ModelTopology, seed: u64) -> Result<Self, Error> {
        let mut rng = SeededRng::new(seed);
        let params = init_parameters(&topology, &mut rng)?;
        Ok(Self {
            topology,
            params,
            seed,
            epochs_trained: 0,
        })
    }

    /// Full forward pass. Returns per-item probabilities and the cache for
    /// backpropagation and Grad-CAM.
    pub fn forward(&self, batch: &Tensor4<F>) -> Result<(Vec<F>, ForwardCache<F>), Error> {
        let (n, c, h, w) = batch.shape();
        let (tc, th, tw) = self.topology.input;
        if (c, h, w) != (tc, th, tw) {
            return Err(Error::ShapeMismatch(format!(
                "expected input ({tc},{th},{tw}), got ({c},{h},{w})"
            )));
        }

        let mut cur = batch.clone();
        let mut conv_pre = Vec::new();
        let mut conv_act = Vec::new();
        let mut pool_argmax = Vec::new();
        let mut pool_out = Vec::new();
        for (spec, p) in self.topology.conv_layers.iter().zip(&self.params.conv) {
            let _ = spec;
            let z = conv2d_forward(&cur, &p.kernels, &p.bias)?;
            let a = relu(&z);
            conv_pre.push(z);
            if self.topology.pool_after_each_conv {
                let (pooled, argmax) = maxpool2(&a);
                conv_act.push(a);
                pool_argmax.push(argmax);
                cur = pooled.clone();
                pool_out.push(pooled);
            } else {
                conv_act.push(a.clone());
                pool_argmax.push(Vec::new());
                cur = a.clone();
                pool_out.push(a);
            }
        }

        let flat: Vec<Vec<F>> = (0..n).map(|b| cur.item(b).to_vec()).collect();

        let mut dense_in = vec![Vec::with_capacity(n); self.params.dense.len()];
        let mut dense_pre = vec![Vec::with_capacity(n); self.params.dense.len()];
        let mut output_in = Vec::with_capacity(n);
        let mut logits = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for b in 0..n {
            let mut v = flat[b].clone();
            for (li, d) in self.params.dense.iter().enumerate() {
                dense_in[li].push(v.clone());
                let pre = dense_forward(&v, &d.weights, &d.bias, d.units)?;
                dense_pre[li].push(pre.clone());
                v = pre.into_iter().map(|z| z.max(F::zero())).collect();
            }
            output_in.push(v.clone());
            let z = dense_forward(&v, &self.params.output.weights, &self.params.output.bias, 1)?[0];
            logits.push(z);
            probs.push(sigmoid(z));
        }

        let cache = ForwardCache {
            input: batch.clone(),
            conv_pre,
            conv_act,
            pool_argmax,
            pool_out,
            dense_in,
            dense_pre,
            flat,
            output_in,
            logits,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Analytic gradients of the mean BCE over the batch.
    pub fn backward(&self, cache: &ForwardCache<F>, labels: &[F]) -> Result<Parameters<F>, Error> {
        let n = cache.probs.len();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        let inv_n = F::from_f64(1.0 / n as f64);
        // Fused sigmoid+BCE gradient at the logit: (p - y) / n.
        let logit_grads: Vec<F> = cache
            .probs
            .iter()
            .zip(labels)
            .map(|(&p, &y)| bce_logit_grad(p, y) * inv_n)
            .collect();
        self.backward_from_logits(cache, &logit_grads)
    }

    /// Backpropagate arbitrary per-item logit gradients (also used by
    /// Grad-CAM's gradient capture).
    pub fn backward_from_logits(
        &self,
        cache: &ForwardCache<F>,
        logit_grads: &[F],
    ) -> Result<Parameters<F>, Error> {
        let n = cache.probs.len();
        let mut grads = self.params.zeros_like();

        // Dense stack, per batch item.
        let mut flat_grads: Vec<Vec<F>> = Vec::with_capacity(n);
        for b in 0..n {
            let up = vec![logit_grads[b]];
            let out = &self.params.output;
            let (dw, db, mut dv) = dense_backward(&cache.output_in[b], &out.weights, 1, &up);
            for (g, d) in grads.output.weights.iter_mut().zip(&dw) {
                *g = *g + *d;
            }
            grads.output.bias[0] = grads.output.bias[0] + db[0];

            for li in (0..self.params.dense.len()).rev() {
                let d = &self.params.dense[li];
                // ReLU between pre-activation and next layer's input.
                let up: Vec<F> = cache.dense_pre[li][b]
                    .iter()
                    .zip(&dv)
                    .map(|(&z, &g)| if z > F::zero() { g } else { F::zero() })
                    .collect();
                let (dw, db, dx) = dense_backward(&cache.dense_in[li][b], &d.weights, d.units, &up);
                for (g, v) in grads.dense[li].weights.iter_mut().zip(&dw) {
                    *g = *g + *v;
                }
                for (g, v) in grads.dense[li].bias.iter_mut().zip(&db) {
                    *g = *g + *v;
                }
                dv = dx;
            }
            flat_grads.push(dv);
        }

        // Un-flatten into the conv stack's output shape.
        let last_shape = if let Some(t) = cache.pool_out.last() {
            t.shape()
        } else {
            cache.input.shape()
        };
        let mut upstream = Tensor4::zeros(last_shape);
        {
            let stride = last_shape.1 * last_shape.2 * last_shape.3;
            let data = upstream.data_mut();
            for b in 0..n {
                data[b * stride..(b + 1) * stride].copy_from_slice(&flat_grads[b]);
            }
        }

        // Conv stack, reversed.
        for li in (0..self.params.conv.len()).rev() {
            let act_shape = cache.conv_act[li].shape();
            let d_act = if self.topology.pool_after_each_conv {
                maxpool2_backward(act_shape, &cache.pool_argmax[li], &upstream)
            } else {
                upstream
            };
            let d_pre = relu_backward(&cache.conv_pre[li], &d_act);
            let layer_input = if li == 0 {
                &cache.input
            } else {
                &cache.pool_out[li - 1]
            };
            let (dx, dk, db) = conv2d_backward(layer_input, &self.params.conv[li].kernels, &d_pre);
            for (g, v) in grads.conv[li].kernels.data_mut().iter_mut().zip(dk.data()) {
                *g = *g + *v;
            }
            for (g, v) in grads.conv[li].bias.iter_mut().zip(&db) {
                *g = *g + *v;
            }
            upstream = dx;
        }
        Ok(grads)
    }

    /// Gradient of the summed per-item logit gradients w.r.t. one conv
    /// layer's post-ReLU activations (Grad-CAM's gradient capture).
    pub fn activation_gradient(
        &self,
        cache: &ForwardCache<F>,
        logit_grads: &[F],
        layer_index: usize,
    ) -> Result<Tensor4<F>, Error> {
        if layer_index >= self.params.conv.len() {
            return Err(Error::InvalidArgument(format!(
                "layer index {layer_index} out of range (valid: 0..{})",
                self.params.conv.len()
            )));
        }
        let n = cache.probs.len();
        // Dense stack backward, per item, down to the flattened features.
        let mut flat_grads: Vec<Vec<F>> = Vec::with_capacity(n);
        for b in 0..n {
            let up = vec![logit_grads[b]];
            let out = &self.params.output;
            let (_, _, mut dv) = dense_backward(&cache.output_in[b], &out.weights, 1, &up);
            for li in (0..self.params.dense.len()).rev() {
                let d = &self.params.dense[li];
                let up: Vec<F> = cache.dense_pre[li][b]
                    .iter()
                    .zip(&dv)
                    .map(|(&z, &g)| if z > F::zero() { g } else { F::zero() })
                    .collect();
                let (_, _, dx) = dense_backward(&cache.dense_in[li][b], &d.weights, d.units, &up);
                dv = dx;
            }
            flat_grads.push(dv);
        }
        let last_shape = cache.pool_out.last().map(|t| t.shape()).unwrap_or(cache.input.shape());
        let mut upstream = Tensor4::zeros(last_shape);
        {
            let stride = last_shape.1 * last_shape.2 * last_shape.3;
            let data = upstream.data_mut();
            for b in 0..n {
                data[b * stride..(b + 1) * stride].copy_from_slice(&flat_grads[b]);
            }
        }
        for li in (0..self.params.conv.len()).rev() {
            let act_shape = cache.conv_act[li].shape();
            let d_act = if self.topology.pool_after_each_conv {
                maxpool2_backward(act_shape, &cache.pool_argmax[li], &upstream)
            } else {
                upstream
            };
            if li == layer_index {
                return Ok(d_act);
            }
            let d_pre = relu_backward(&cache.conv_pre[li], &d_act);
            let layer_input = if li == 0 {
                &cache.input
            } else {
                &cache.pool_out[li - 1]
            };
            let (dx, _, _) = conv2d_backward(layer_input, &self.params.conv[li].kernels, &d_pre);
            upstream = dx;
        }
        unreachable!("layer_index validated above")
    }

    /// Forward from conv layer `layer_index`'s post-ReLU activation to the
    /// output logits (one per batch item). Used to check the captured
    /// gradients against finite differences.
    pub fn logits_from_activation(
        &self,
        layer_index: usize,
        activation: &Tensor4<F>,
    ) -> Result<Vec<F>, Error> {
        if layer_index >= self.params.conv.len() {
            return Err(Error::InvalidArgument(format!(
                "layer index {layer_index} out of range"
            )));
        }
        let mut cur = if self.topology.pool_after_each_conv {
            maxpool2(activation).0
        } else {
            activation.clone()
        };
        for li in layer_index + 1..self.params.conv.len() {
            let p = &self.params.conv[li];
            let a = relu(&conv2d_forward(&cur, &p.kernels, &p.bias)?);
            cur = if self.topology.pool_after_each_conv {
                maxpool2(&a).0
            } else {
                a
            };
        }
        let n = cur.shape().0;
        let mut logits = Vec::with_capacity(n);
        for b in 0..n {
            let mut v = cur.item(b).to_vec();
            for d in &self.params.dense {
                let pre = dense_forward(&v, &d.weights, &d.bias, d.units)?;
                v = pre.into_iter().map(|z| z.max(F::zero())).collect();
            }
            logits.push(
                dense_forward(&v, &self.params.output.weights, &self.params.output.bias, 1)?[0],
            );
        }
        Ok(logits)
    }

    /// Mean BCE of this model on a labelled batch.
    pub fn batch_loss(&self, probs: &[F], labels: &[F]) -> F {
        let n = F::from_f64(probs.len() as f64);
        probs
            .iter()
            .zip(labels)
            .fold(F::zero(), |acc, (&p, &y)| acc + bce_loss(p, y))
            / n
    }
}
