use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    adaptive_avg_pool, adaptive_avg_pool_backward, relu, relu_backward, BatchNorm2d, BnCache, BnMode, Conv2d, ConvCache, Linear,
};
use super::tensor::{cast_slice, Real, Tensor};
use super::{NnError, Result};

/// Architecture of the classifier: Conv–BN–ReLU blocks with stride-2
/// downsampling, global average pooling, and a linear head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub n_classes: usize,
}

impl ModelSpec {
    /// Three blocks of 16, 32 and 64 channels, 3×3 kernels, stride 2.
    pub fn compact(n_classes: usize) -> Self {
        Self { in_channels: 1, widths: vec![16, 32, 64], kernel: 3, stride: 2, padding: 1, n_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(NnError::InvalidSpec(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        if self.in_channels == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(NnError::InvalidSpec(format!("bad channel chain {} -> {:?}", self.in_channels, self.widths)));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(NnError::InvalidSpec("kernel and stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn<T> {
    spec: ModelSpec,
    pub blocks: Vec<ConvBlock<T>>,
    pub head: Linear<T>,
}

struct BlockCache<T> {
    conv: ConvCache<T>,
    bn: BnCache<T>,
    activation: Tensor<T>,
}

/// Intermediate values of a training-mode forward pass.
pub struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    pooled: Tensor<T>,
    last_shape: Vec<usize>,
}

/// Gradients of the trainable parameters, in [`Cnn::trainable_params_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub groups: Vec<Vec<T>>,
    /// Gradient with respect to the network input.
    pub input: Tensor<T>,
}

impl<T: Real> Cnn<T> {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = spec.in_channels;
        let mut blocks = Vec::with_capacity(spec.widths.len());
        for &w in &spec.widths {
            blocks.push(ConvBlock {
                conv: Conv2d::new(c_in, w, spec.kernel, spec.stride, spec.padding, &mut rng),
                bn: BatchNorm2d::new(w),
            });
            c_in = w;
        }
        let head = Linear::new(c_in, spec.n_classes, &mut rng);
        Ok(Self { spec, blocks, head })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.spec.in_channels {
            return Err(NnError::ShapeMismatch(format!("model expects {} input channels, got {c}", self.spec.in_channels)));
        }
        Ok(())
    }

    /// Training-mode forward: batch statistics, running stats updated.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &mut self.blocks {
            let (z, conv) = block.conv.forward(&h)?;
            let (y, bn) = block.bn.forward(&z, BnMode::Train)?;
            h = relu(&y);
            caches.push(BlockCache { conv, bn, activation: h.clone() });
        }
        let last_shape = h.shape().to_vec();
        let pooled = adaptive_avg_pool(&h)?;
        let pooled = pooled.clone().reshape(&pooled.dims2().map(|(n, c)| [n, c])?)?;
        let logits = self.head.forward(&pooled)?;
        Ok((logits, ForwardCache { blocks: caches, pooled, last_shape }))
    }

    /// Eval-mode forward; never mutates the model.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            h = relu(&block.bn.infer(&block.conv.infer(&h)?)?);
        }
        let pooled = adaptive_avg_pool(&h)?;
        let (n, c) = pooled.dims2()?;
        self.head.forward(&pooled.reshape(&[n, c])?)
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        let head = self.head.backward(grad_logits, &cache.pooled)?;
        let (n, c) = cache.pooled.dims2()?;
        let mut g = adaptive_avg_pool_backward(&head.input.reshape(&[n, c, 1, 1])?, &cache.last_shape)?;
        let mut block_groups = Vec::with_capacity(self.blocks.len());
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let g_bn = relu_backward(&g, &bc.activation)?;
            let bn = block.bn.backward(&g_bn, &bc.bn)?;
            let conv = block.conv.backward(&bn.input, &bc.conv)?;
            g = conv.input;
            block_groups.push([conv.weight.into_data(), conv.bias, bn.gamma, bn.beta]);
        }
        let mut groups: Vec<Vec<T>> = block_groups.into_iter().rev().flatten().collect();
        groups.push(head.weight.into_data());
        groups.push(head.bias);
        Ok(Gradients { groups, input: g })
    }

    /// Trainable parameters: per block conv weight, conv bias, BN gamma,
    /// BN beta; then head weight and bias.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in &mut self.blocks {
            out.push(b.conv.weight.data_mut());
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(self.head.weight.data_mut());
        out.push(&mut self.head.bias);
        out
    }

    pub fn trainable_lens(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([b.conv.weight.numel(), b.conv.bias.len(), b.bn.gamma.len(), b.bn.beta.len()]);
        }
        out.extend([self.head.weight.numel(), self.head.bias.len()]);
        out
    }

    /// Every tensor needed to reproduce the model, with stable names and
    /// shapes, in serialization order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.bn.channels();
            out.push((format!("block{i}.conv.weight"), b.conv.weight.shape().to_vec(), b.conv.weight.data()));
            out.push((format!("block{i}.conv.bias"), vec![b.conv.bias.len()], &b.conv.bias));
            out.push((format!("block{i}.bn.gamma"), vec![c], &b.bn.gamma));
            out.push((format!("block{i}.bn.beta"), vec![c], &b.bn.beta));
            out.push((format!("block{i}.bn.running_mean"), vec![c], &b.bn.running_mean));
            out.push((format!("block{i}.bn.running_var"), vec![c], &b.bn.running_var));
        }
        out.push(("head.weight".into(), self.head.weight.shape().to_vec(), self.head.weight.data()));
        out.push(("head.bias".into(), vec![self.head.bias.len()], &self.head.bias));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out: Vec<(String, &mut [T])> = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.conv.weight"), b.conv.weight.data_mut()));
            out.push((format!("block{i}.conv.bias"), &mut b.conv.bias));
            out.push((format!("block{i}.bn.gamma"), &mut b.bn.gamma));
            out.push((format!("block{i}.bn.beta"), &mut b.bn.beta));
            out.push((format!("block{i}.bn.running_mean"), &mut b.bn.running_mean));
            out.push((format!("block{i}.bn.running_var"), &mut b.bn.running_var));
        }
        out.push(("head.weight".into(), self.head.weight.data_mut()));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    /// Rebuilds a model of `spec` from named tensors, in any order.
    pub fn from_named(spec: ModelSpec, tensors: &[(String, Vec<T>)]) -> Result<Self> {
        let mut model = Self::new(spec, 0)?;
        let slots = model.named_tensors_mut();
        if slots.len() != tensors.len() {
            return Err(NnError::ShapeMismatch(format!("expected {} tensors, got {}", slots.len(), tensors.len())));
        }
        for (name, slot) in slots {
            let (_, data) = tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| NnError::ShapeMismatch(format!("missing tensor {name}")))?;
            if data.len() != slot.len() {
                return Err(NnError::ShapeMismatch(format!("tensor {name}: expected {} values, got {}", slot.len(), data.len())));
            }
            slot.copy_from_slice(data);
        }
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> Cnn<U> {
        let named: Vec<(String, Vec<U>)> = self.named_tensors().into_iter().map(|(n, _, d)| (n, cast_slice(d))).collect();
        let mut out = Cnn::<U>::from_named(self.spec.clone(), &named).expect("same topology");
        for (dst, src) in out.blocks.iter_mut().zip(&self.blocks) {
            dst.bn.eps = U::from_f64(src.bn.eps.to_f64().unwrap()).unwrap();
            dst.bn.momentum = U::from_f64(src.bn.momentum.to_f64().unwrap()).unwrap();
        }
        out
    }
}
