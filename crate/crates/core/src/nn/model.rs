//! MiniDense: a small densely-connected CNN.
//!
//! Stem conv (3x3, stride 2) -> dense blocks whose layers each consume the
//! channel-concatenation of everything produced so far in the block ->
//! 1x1-conv + 2x2-average-pool transitions between blocks -> global average
//! pool -> fully connected head. The head is zero-initialized so an untrained
//! model emits exactly uniform class probabilities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ops::{
    avg_pool2d, avg_pool2d_backward, concat_channels, concat_channels_backward, conv2d,
    conv2d_backward, global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu,
    relu_backward, Padding,
};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NnError;
use crate::seeds;

/// How raw pixels become model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputNorm {
    /// Divide by 255 into `[0, 1]`.
    Div255,
    /// Divide by 255, then per-image zero mean and unit variance.
    Standardize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub input_norm: InputNorm,
    pub stem_channels: usize,
    pub num_blocks: usize,
    pub layers_per_block: usize,
    pub growth: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 1,
            input_height: 128,
            input_width: 256,
            input_norm: InputNorm::Div255,
            stem_channels: 16,
            num_blocks: 2,
            layers_per_block: 3,
            growth: 12,
            num_classes: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_channels == 0
            || self.stem_channels == 0
            || self.num_blocks == 0
            || self.layers_per_block == 0
            || self.growth == 0
        {
            return Err(NnError::ShapeMismatch(
                "model dimensions must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(NnError::ShapeMismatch("need at least 2 classes".into()));
        }
        // stem halves, each transition pools by 2
        let reductions = self.num_blocks; // stem + (num_blocks - 1) transitions
        let factor = 1usize << reductions;
        if self.input_height < factor || self.input_width < factor {
            return Err(NnError::ShapeMismatch(format!(
                "input {}x{} too small for {} spatial reductions",
                self.input_height, self.input_width, reductions
            )));
        }
        Ok(())
    }

    /// Channels entering dense block `i`.
    fn block_in_channels(&self, block: usize) -> usize {
        let mut c = self.stem_channels;
        for _ in 0..block {
            c = (c + self.growth * self.layers_per_block) / 2;
        }
        c
    }

    /// Channels leaving the final block (the head's feature width).
    pub fn feature_channels(&self) -> usize {
        self.block_in_channels(self.num_blocks - 1) + self.growth * self.layers_per_block
    }
}

/// One named parameter tensor.
struct Param<S: Scalar> {
    name: String,
    tensor: Tensor<S>,
}

/// The model: a flat list of named parameters plus the wiring logic.
pub struct MiniDense<S: Scalar = f32> {
    cfg: ModelConfig,
    params: Vec<Param<S>>,
}

/// Activations saved by [`MiniDense::forward_cached`] for the backward pass.
pub struct ForwardCache<S: Scalar> {
    input: Tensor<S>,
    stem_pre: Tensor<S>,
    blocks: Vec<BlockCache<S>>,
    transitions: Vec<TransitionCache<S>>,
    gap_input_shape: Vec<usize>,
    features: Tensor<S>,
}

impl<S: Scalar> ForwardCache<S> {
    /// Hash of every ReLU's on/off pattern. Finite-difference probes are only
    /// meaningful when this is identical at both evaluation points; a changed
    /// pattern means the probe straddled a kink where the loss is not
    /// differentiable.
    pub fn relu_state_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |t: &Tensor<S>| {
            for v in t.data() {
                hash ^= u64::from(*v > S::ZERO);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(&self.stem_pre);
        for block in &self.blocks {
            for pre in &block.layer_pre {
                feed(pre);
            }
        }
        for t in &self.transitions {
            feed(&t.pre);
        }
        hash
    }
}

struct BlockCache<S: Scalar> {
    layer_inputs: Vec<Tensor<S>>,
    layer_pre: Vec<Tensor<S>>,
    part_channels: Vec<usize>,
}

struct TransitionCache<S: Scalar> {
    input: Tensor<S>,
    pre: Tensor<S>,
    act: Tensor<S>,
}

impl<S: Scalar> MiniDense<S> {
    /// Builds the parameter set: He-initialized conv weights, zero biases,
    /// and a zero head.
    pub fn new(cfg: &ModelConfig, init_seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(init_seed, seeds::STREAM_INIT));
        let mut params = Vec::new();
        let mut he_conv = |name: String, c_out: usize, c_in: usize, k: usize| {
            let fan_in = (c_in * k * k) as f64;
            let std = (2.0 / fan_in).sqrt();
            let data = (0..c_out * c_in * k * k)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    S::from_f64(g * std)
                })
                .collect();
            params.push(Param {
                name: name.clone(),
                tensor: Tensor::new(&[c_out, c_in, k, k], data).expect("init shape"),
            });
            params.push(Param {
                name: name.replace(".weight", ".bias"),
                tensor: Tensor::zeros(&[c_out]),
            });
        };

        he_conv("stem.weight".into(), cfg.stem_channels, cfg.input_channels, 3);
        for block in 0..cfg.num_blocks {
            let base = cfg.block_in_channels(block);
            for layer in 0..cfg.layers_per_block {
                let c_in = base + cfg.growth * layer;
                he_conv(
                    format!("block{block}.conv{layer}.weight"),
                    cfg.growth,
                    c_in,
                    3,
                );
            }
            if block + 1 < cfg.num_blocks {
                let c_in = base + cfg.growth * cfg.layers_per_block;
                he_conv(format!("transition{block}.weight"), c_in / 2, c_in, 1);
            }
        }
        let feat = cfg.feature_channels();
        params.push(Param {
            name: "head.weight".into(),
            tensor: Tensor::zeros(&[cfg.num_classes, feat]),
        });
        params.push(Param {
            name: "head.bias".into(),
            tensor: Tensor::zeros(&[cfg.num_classes]),
        });

        Ok(MiniDense {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn parameter_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn parameters(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.tensor))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.params
            .iter_mut()
            .map(|p| (p.name.as_str(), &mut p.tensor))
    }

    pub fn parameter(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.tensor)
    }

    fn get(&self, name: &str) -> &Tensor<S> {
        self.parameter(name).expect("parameter exists by construction")
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.iter_mut() {
            p.tensor.ensure_grad();
            p.tensor.zero_grad();
        }
    }

    /// Converts parameters to another element type (e.g. f32 -> f64 for
    /// gradient checking).
    pub fn cast<T: Scalar>(&self) -> MiniDense<T> {
        MiniDense {
            cfg: self.cfg.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
        }
    }

    fn check_batch(&self, batch: &Tensor<S>) -> Result<(), NnError> {
        let (_, c, h, w) = batch.dims4()?;
        if (c, h, w)
            != (
                self.cfg.input_channels,
                self.cfg.input_height,
                self.cfg.input_width,
            )
        {
            return Err(NnError::ShapeMismatch(format!(
                "batch shape {:?} vs configured input ({}, {}, {})",
                batch.shape(),
                self.cfg.input_channels,
                self.cfg.input_height,
                self.cfg.input_width
            )));
        }
        Ok(())
    }

    /// Forward pass that records every activation the backward pass needs.
    /// The wiring order is fixed, so results are deterministic.
    pub fn forward_cached(&self, batch: &Tensor<S>) -> Result<(Tensor<S>, ForwardCache<S>), NnError> {
        self.check_batch(batch)?;
        let stem_pre = conv2d(
            batch,
            self.get("stem.weight"),
            self.get("stem.bias"),
            2,
            Padding::Same,
        )?;
        let mut act = relu(&stem_pre);

        let mut blocks = Vec::with_capacity(self.cfg.num_blocks);
        let mut transitions = Vec::new();
        for block in 0..self.cfg.num_blocks {
            let mut parts: Vec<Tensor<S>> = vec![act];
            let mut part_channels = vec![parts[0].shape()[1]];
            let mut layer_inputs = Vec::with_capacity(self.cfg.layers_per_block);
            let mut layer_pre = Vec::with_capacity(self.cfg.layers_per_block);
            for layer in 0..self.cfg.layers_per_block {
                let refs: Vec<&Tensor<S>> = parts.iter().collect();
                let cat = concat_channels(&refs)?;
                let pre = conv2d(
                    &cat,
                    self.get(&format!("block{block}.conv{layer}.weight")),
                    self.get(&format!("block{block}.conv{layer}.bias")),
                    1,
                    Padding::Same,
                )?;
                let out = relu(&pre);
                layer_inputs.push(cat);
                layer_pre.push(pre);
                part_channels.push(out.shape()[1]);
                parts.push(out);
            }
            let refs: Vec<&Tensor<S>> = parts.iter().collect();
            let block_out = concat_channels(&refs)?;
            blocks.push(BlockCache {
                layer_inputs,
                layer_pre,
                part_channels,
            });
            if block + 1 < self.cfg.num_blocks {
                let pre = conv2d(
                    &block_out,
                    self.get(&format!("transition{block}.weight")),
                    self.get(&format!("transition{block}.bias")),
                    1,
                    Padding::Valid,
                )?;
                let t_act = relu(&pre);
                act = avg_pool2d(&t_act, 2)?;
                transitions.push(TransitionCache {
                    input: block_out,
                    pre,
                    act: t_act,
                });
            } else {
                act = block_out;
            }
        }

        let gap_input_shape = act.shape().to_vec();
        let features = global_avg_pool(&act)?;
        let logits = linear(&features, self.get("head.weight"), self.get("head.bias"))?;
        Ok((
            logits,
            ForwardCache {
                input: batch.clone(),
                stem_pre,
                blocks,
                transitions,
                gap_input_shape,
                features,
            },
        ))
    }

    /// Inference-only forward pass.
    pub fn forward(&self, batch: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        Ok(self.forward_cached(batch)?.0)
    }

    /// Accumulates parameter gradients for `d loss / d logits`; activations
    /// come from the matching [`ForwardCache`]. Call [`Self::zero_grads`]
    /// before each step.
    pub fn backward(&mut self, cache: &ForwardCache<S>, grad_logits: &Tensor<S>) -> Result<(), NnError> {
        let (grad_feat, gw_head, gb_head) = linear_backward(
            &cache.features,
            self.get("head.weight"),
            grad_logits,
        )?;
        self.accumulate("head.weight", &gw_head)?;
        self.accumulate("head.bias", &gb_head)?;

        let mut grad_act = global_avg_pool_backward(&cache.gap_input_shape, &grad_feat)?;

        for block in (0..self.cfg.num_blocks).rev() {
            let grad_block_out = if block + 1 < self.cfg.num_blocks {
                let t = &cache.transitions[block];
                let g_t_act = avg_pool2d_backward(t.act.shape(), 2, &grad_act)?;
                let g_t_pre = relu_backward(&t.pre, &g_t_act)?;
                let (g_in, gw, gb) = conv2d_backward(
                    &t.input,
                    self.get(&format!("transition{block}.weight")),
                    1,
                    Padding::Valid,
                    &g_t_pre,
                )?;
                self.accumulate(&format!("transition{block}.weight"), &gw)?;
                self.accumulate(&format!("transition{block}.bias"), &gb)?;
                g_in
            } else {
                grad_act
            };

            let bc = &cache.blocks[block];
            let mut grad_parts = concat_channels_backward(&bc.part_channels, &grad_block_out)?;
            for layer in (0..self.cfg.layers_per_block).rev() {
                let g_pre = relu_backward(&bc.layer_pre[layer], &grad_parts[layer + 1])?;
                let (g_cat, gw, gb) = conv2d_backward(
                    &bc.layer_inputs[layer],
                    self.get(&format!("block{block}.conv{layer}.weight")),
                    1,
                    Padding::Same,
                    &g_pre,
                )?;
                self.accumulate(&format!("block{block}.conv{layer}.weight"), &gw)?;
                self.accumulate(&format!("block{block}.conv{layer}.bias"), &gb)?;
                let sub = concat_channels_backward(&bc.part_channels[..=layer], &g_cat)?;
                for (idx, extra) in sub.into_iter().enumerate() {
                    add_into(&mut grad_parts[idx], &extra)?;
                }
            }
            grad_act = grad_parts.swap_remove(0);
        }

        let g_stem_pre = relu_backward(&cache.stem_pre, &grad_act)?;
        let (_, gw_stem, gb_stem) = conv2d_backward(
            &cache.input,
            self.get("stem.weight"),
            2,
            Padding::Same,
            &g_stem_pre,
        )?;
        self.accumulate("stem.weight", &gw_stem)?;
        self.accumulate("stem.bias", &gb_stem)?;
        Ok(())
    }

    fn accumulate(&mut self, name: &str, grad: &Tensor<S>) -> Result<(), NnError> {
        let param = self
            .parameter_mut(name)
            .ok_or_else(|| NnError::MissingGrad(name.to_string()))?;
        param.accumulate_grad(grad.data())
    }
}

fn add_into<S: Scalar>(dst: &mut Tensor<S>, src: &Tensor<S>) -> Result<(), NnError> {
    if dst.shape() != src.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "add {:?} vs {:?}",
            dst.shape(),
            src.shape()
        )));
    }
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += *s;
    }
    Ok(())
}
