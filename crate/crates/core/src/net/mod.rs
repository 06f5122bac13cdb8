//! The refiner network.
//!
//! A plain stack of "same"-padded convolutions with ReLU, downsampling by
//! strided layers to a composite stride of 8, followed by a linear head
//! producing `n` heatmap logits and `2n` offset channels. Offsets are
//! predicted in stride units. Parameters live in one flat vector laid out
//! layer by layer (weights `cout x cin x k x k`, then biases).

mod checkpoint;
mod conv;
mod loss;
mod scalar;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use conv::Conv;
pub use loss::{bce_with_logit, loss_and_output_grad, sigmoid, LossBreakdown, LossWeights, TargetView, LOGIT_CLIP};
pub use scalar::{gemm, MatRef, Scalar};
pub use train::{
    prepare_sample, train, Segment, TrainConfig, TrainReport, TrainSchedule, TrainingData, TrainingFrame,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::Tensor3;

/// Output stride of every valid architecture.
pub const NET_STRIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_kernel() -> usize {
    3
}

fn default_stride() -> usize {
    1
}

/// Declarative architecture. The head (a 1x1 convolution to `3 * joints`
/// channels) is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub joints: usize,
    pub layers: Vec<LayerSpec>,
    /// Initial bias of the heatmap logits.
    #[serde(default)]
    pub heat_bias_init: f64,
}

impl ArchConfig {
    /// Six 3x3 layers, 16/32/64 channels, three stride-2 stages.
    pub fn default_for(joints: usize) -> Self {
        let l = |channels, stride| LayerSpec {
            channels,
            kernel: 3,
            stride,
        };
        Self {
            joints,
            layers: vec![l(16, 2), l(16, 1), l(32, 2), l(32, 1), l(64, 2), l(64, 1)],
            heat_bias_init: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 {
            return Err(Error::Config("architecture needs at least one joint".into()));
        }
        let mut total = 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels == 0 || l.kernel == 0 || l.kernel % 2 == 0 || l.stride == 0 {
                return Err(Error::Config(format!(
                    "layer {i}: channels and stride must be positive and the kernel odd"
                )));
            }
            total *= l.stride;
        }
        if total != NET_STRIDE {
            return Err(Error::Config(format!(
                "composite stride is {total}, expected {NET_STRIDE}"
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("architecture serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let a: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        a.validate()?;
        Ok(a)
    }
}

/// Raw network output for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub heat_logits: Tensor3<T>,
    /// `(dx, dy)` per joint in stride units.
    pub offsets: Tensor3<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            heat_logits: Tensor3::zeros(
                self.heat_logits.channels,
                self.heat_logits.height,
                self.heat_logits.width,
            ),
            offsets: Tensor3::zeros(self.offsets.channels, self.offsets.height, self.offsets.width),
        }
    }

    pub fn heat_probs(&self) -> Tensor3<T> {
        self.heat_logits.map(|z| T::of(sigmoid(z.as_f64())))
    }

    /// Offsets in input pixels.
    pub fn offsets_px(&self) -> Tensor3<T> {
        let s = T::of(NET_STRIDE as f64);
        self.offsets.map(|v| v * s)
    }
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache<T> {
    cols: Vec<Vec<T>>,
    outputs: Vec<Tensor3<T>>,
    in_dims: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerNet<T> {
    arch: ArchConfig,
    input_channels: usize,
    layers: Vec<Conv>,
    params: Vec<T>,
}

impl<T: Scalar> RefinerNet<T> {
    /// Network with all parameters zero.
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        Self::zeros_with_input(arch, 3 + arch.joints)
    }

    /// Same hidden layers and head, but a custom number of input channels
    /// (3 for an image-only network).
    pub fn zeros_with_input(arch: &ArchConfig, input_channels: usize) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::with_capacity(arch.layers.len() + 1);
        let mut cin = input_channels;
        let mut offset = 0;
        for l in &arch.layers {
            let c = Conv {
                cin,
                cout: l.channels,
                kernel: l.kernel,
                stride: l.stride,
                pad: l.kernel / 2,
                relu: true,
                offset,
            };
            offset += c.param_len();
            cin = l.channels;
            layers.push(c);
        }
        let head = Conv {
            cin,
            cout: 3 * arch.joints,
            kernel: 1,
            stride: 1,
            pad: 0,
            relu: false,
            offset,
        };
        offset += head.param_len();
        layers.push(head);
        Ok(Self {
            arch: arch.clone(),
            input_channels,
            layers,
            params: vec![T::zero(); offset],
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn joints(&self) -> usize {
        self.arch.joints
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn layers(&self) -> &[Conv] {
        &self.layers
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> RefinerNet<U> {
        RefinerNet {
            arch: self.arch.clone(),
            input_channels: self.input_channels,
            layers: self.layers.clone(),
            params: self.params.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    fn check_input(&self, input: &Tensor3<T>) -> Result<()> {
        if input.channels != self.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, network expects {}",
                input.channels, self.input_channels
            )));
        }
        if input.height == 0 || input.width == 0 {
            return Err(Error::ShapeMismatch("empty input".into()));
        }
        Ok(())
    }

    fn split(&self, out: Tensor3<T>) -> Prediction<T> {
        let n = self.arch.joints;
        Prediction {
            heat_logits: out.slice_channels(0, n),
            offsets: out.slice_channels(n, 3 * n),
        }
    }

    /// Runs the network. Inputs whose sides are not multiples of 8 are
    /// zero-padded on the bottom/right.
    pub fn forward(&self, input: &Tensor3<T>) -> Result<Prediction<T>> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Tensor3<T>) -> Result<(Prediction<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let padded = input.padded_to_multiple(NET_STRIDE);
        let mut cache = ForwardCache {
            cols: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
            in_dims: Vec::with_capacity(self.layers.len()),
        };
        let mut x = padded;
        for layer in &self.layers {
            let mut cols = Vec::new();
            let y = conv::forward(layer, &self.params, &x, &mut cols);
            cache.in_dims.push((x.height, x.width));
            cache.cols.push(cols);
            cache.outputs.push(y.clone());
            x = y;
        }
        Ok((self.split(x), cache))
    }

    /// Backpropagates output gradients, accumulating into `grads`.
    pub fn backward(&self, cache: &ForwardCache<T>, dpred: &Prediction<T>, grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());
        let n = self.arch.joints;
        let (_, gh, gw) = dpred.heat_logits.shape();
        let mut d = Tensor3::zeros(3 * n, gh, gw);
        let plane = gh * gw;
        d.data[..n * plane].copy_from_slice(&dpred.heat_logits.data);
        d.data[n * plane..].copy_from_slice(&dpred.offsets.data);
        for li in (0..self.layers.len()).rev() {
            let need_input = li > 0;
            let next = conv::backward(
                &self.layers[li],
                &self.params,
                &cache.cols[li],
                &cache.outputs[li],
                &mut d,
                cache.in_dims[li],
                grads,
                need_input,
            );
            if let Some(dn) = next {
                d = dn;
            }
        }
    }

    /// Loss of one sample and its parameter gradient, accumulated into `grads`.
    pub fn loss_and_grad(
        &self,
        input: &Tensor3<T>,
        targets: &TargetView<T>,
        weights: LossWeights,
        grads: &mut [T],
    ) -> Result<LossBreakdown> {
        let (pred, cache) = self.forward_cached(input)?;
        let mut dpred = pred.zeros_like();
        let loss = loss_and_output_grad(&pred, targets, weights, NET_STRIDE, Some(&mut dpred))?;
        self.backward(&cache, &dpred, grads);
        Ok(loss)
    }

    pub fn loss(&self, input: &Tensor3<T>, targets: &TargetView<T>, weights: LossWeights) -> Result<LossBreakdown> {
        let pred = self.forward(input)?;
        loss_and_output_grad(&pred, targets, weights, NET_STRIDE, None)
    }

    /// Gradient of the summed loss over a batch.
    pub fn batch_gradient(
        &self,
        batch: &[(&Tensor3<T>, TargetView<T>)],
        weights: LossWeights,
    ) -> Result<(f64, Vec<T>)> {
        let mut grads = vec![T::zero(); self.params.len()];
        let mut total = 0.0;
        for (input, targets) in batch {
            total += self.loss_and_grad(input, targets, weights, &mut grads)?.total;
        }
        Ok((total, grads))
    }
}

/// He-initialized network. With `rgb_pretrained` (a network of the same
/// architecture but 3 input channels) all parameters are copied from it and
/// the first-layer filters of the pose channels repeat the RGB filter
/// slices cyclically.
pub fn init_weights<T: Scalar>(arch: &ArchConfig, rgb_pretrained: Option<&RefinerNet<T>>, seed: u64) -> Result<RefinerNet<T>> {
    let mut net = RefinerNet::<T>::zeros(arch)?;
    match rgb_pretrained {
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1417));
            let layers = net.layers.clone();
            let head = layers.len() - 1;
            for (li, layer) in layers.iter().enumerate() {
                let fan_in = layer.patch_len() as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                let start = layer.offset;
                for v in &mut net.params[start..start + layer.weight_len()] {
                    *v = T::of(normal.sample(&mut rng));
                }
                if li == head {
                    let b = start + layer.weight_len();
                    for v in &mut net.params[b..b + arch.joints] {
                        *v = T::of(arch.heat_bias_init);
                    }
                }
            }
        }
        Some(pre) => {
            if pre.input_channels != 3 || pre.arch.layers != arch.layers || pre.arch.joints != arch.joints {
                return Err(Error::ShapeMismatch(
                    "pretrained network must share the architecture and take 3 input channels".into(),
                ));
            }
            let first = net.layers[0];
            let pre_first = pre.layers[0];
            let kk = first.kernel * first.kernel;
            for co in 0..first.cout {
                for ci in 0..first.cin {
                    let src = pre_first.offset + (co * 3 + ci % 3) * kk;
                    let dst = first.offset + (co * first.cin + ci) * kk;
                    net.params[dst..dst + kk].copy_from_slice(&pre.params[src..src + kk]);
                }
            }
            let pb = pre_first.offset + pre_first.weight_len();
            let nb = first.offset + first.weight_len();
            net.params[nb..nb + first.cout].copy_from_slice(&pre.params[pb..pb + first.cout]);
            let rest = first.param_len();
            let pre_rest = pre_first.param_len();
            net.params[rest..].copy_from_slice(&pre.params[pre_rest..]);
        }
    }
    Ok(net)
}
