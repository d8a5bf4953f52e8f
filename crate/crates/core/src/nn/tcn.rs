use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, Params, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// One dilation per parallel branch.
    pub dilations: Vec<usize>,
    /// Output width of the block; split as evenly as possible across branches.
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub input_dim: usize,
    pub kernel_size: usize,
    pub blocks: Vec<BlockConfig>,
    pub output_classes: usize,
}

impl TcnConfig {
    /// Blocks with three branches each, dilated by `d`, `⌈d/2⌉` and `1`.
    pub fn multi_scale(
        input_dim: usize,
        kernel_size: usize,
        max_dilations: &[usize],
        channels: usize,
        output_classes: usize,
    ) -> Self {
        let blocks = max_dilations
            .iter()
            .map(|&d| BlockConfig {
                dilations: vec![d, d.div_ceil(2).max(1), 1],
                channels,
            })
            .collect();
        TcnConfig {
            input_dim,
            kernel_size,
            blocks,
            output_classes,
        }
    }

    /// Six blocks, receptive field 35.
    pub fn fingerspelling(input_dim: usize, output_classes: usize, channels: usize) -> Self {
        Self::multi_scale(input_dim, 3, &[1, 2, 4, 8, 1, 1], channels, output_classes)
    }

    /// Six blocks, receptive field 23.
    pub fn isr(input_dim: usize, output_classes: usize, channels: usize) -> Self {
        Self::multi_scale(input_dim, 3, &[1, 2, 4, 2, 1, 1], channels, output_classes)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.kernel_size == 0 || self.input_dim == 0 || self.output_classes == 0 {
            return bad("kernel size, input width and class count must be positive".into());
        }
        for (b, block) in self.blocks.iter().enumerate() {
            if block.dilations.is_empty() {
                return bad(format!("block {b} has no branches"));
            }
            if block.dilations.contains(&0) {
                return bad(format!("block {b} has a zero dilation"));
            }
            if block.channels < block.dilations.len() {
                return bad(format!("block {b} is narrower than its branch count"));
            }
        }
        Ok(())
    }

    fn branch_widths(block: &BlockConfig) -> Vec<usize> {
        let n = block.dilations.len();
        (0..n)
            .map(|r| block.channels / n + usize::from(r < block.channels % n))
            .collect()
    }
}

/// Frames seen by one output frame: `1 + (k−1)·Σ_b max(dilations_b)`.
pub fn receptive_field(config: &TcnConfig) -> usize {
    let span: usize = config
        .blocks
        .iter()
        .map(|b| b.dilations.iter().copied().max().unwrap_or(1))
        .sum();
    1 + (config.kernel_size.saturating_sub(1)) * span
}

/// A TCN whose parameters live under `prefix` in a [`Params`] set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcn {
    config: TcnConfig,
    prefix: String,
}

impl Tcn {
    pub fn new(config: TcnConfig, prefix: &str) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Tcn {
            config,
            prefix: prefix.to_string(),
        })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    fn name(&self, local: &str) -> String {
        format!("{}{}", self.prefix, local)
    }

    /// Parameter names and shapes, zero-filled.
    pub fn layout(&self, params: &mut Params) {
        let k = self.config.kernel_size;
        let mut width = self.config.input_dim;
        for (b, block) in self.config.blocks.iter().enumerate() {
            for (r, w) in TcnConfig::branch_widths(block).into_iter().enumerate() {
                params.push(self.name(&format!("block{b}.branch{r}.weight")), Tensor::zeros(w, k * width));
                params.push(self.name(&format!("block{b}.branch{r}.bias")), Tensor::zeros(1, w));
            }
            if block.channels != width {
                params.push(self.name(&format!("block{b}.proj.weight")), Tensor::zeros(block.channels, width));
            }
            width = block.channels;
        }
        params.push(self.name("head.weight"), Tensor::zeros(self.config.output_classes, width));
        params.push(self.name("head.bias"), Tensor::zeros(1, self.config.output_classes));
    }

    /// Adds freshly initialised parameters: fan-in scaled normal weights,
    /// zero biases.
    pub fn init(&self, params: &mut Params, rng: &mut impl Rng) {
        let mut layout = Params::new();
        self.layout(&mut layout);
        for (name, t) in layout.iter() {
            let mut t = t.clone();
            if name.ends_with(".weight") {
                let fan_in = t.cols() as f64;
                let std = if name.ends_with("head.weight") {
                    0.5 / fan_in.sqrt()
                } else {
                    1.0 / fan_in.sqrt()
                };
                let normal = Normal::new(0.0, std).expect("positive std");
                for v in t.data_mut() {
                    *v = normal.sample(rng);
                }
            }
            params.push(name, t);
        }
    }

    /// Records the forward pass; returns logits of shape `(T, output_classes)`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, NnError> {
        let (_, width_in) = tape.value(x).shape();
        if width_in != self.config.input_dim {
            return Err(NnError::Shape(format!(
                "features have width {width_in}, model expects {}",
                self.config.input_dim
            )));
        }
        let k = self.config.kernel_size;
        let mut h = x;
        let mut width = width_in;
        for (b, block) in self.config.blocks.iter().enumerate() {
            let mut branches = Vec::with_capacity(block.dilations.len());
            for (r, &d) in block.dilations.iter().enumerate() {
                let w = tape.param(&self.name(&format!("block{b}.branch{r}.weight")))?;
                let bias = tape.param(&self.name(&format!("block{b}.branch{r}.bias")))?;
                let y = tape.conv1d(h, w, Some(bias), k, d)?;
                branches.push(tape.gelu(y));
            }
            let merged = tape.concat(&branches)?;
            let skip = if block.channels != width {
                let p = tape.param(&self.name(&format!("block{b}.proj.weight")))?;
                tape.linear(h, p, None)?
            } else {
                h
            };
            h = tape.add(merged, skip)?;
            width = block.channels;
        }
        let w = tape.param(&self.name("head.weight"))?;
        let bias = tape.param(&self.name("head.bias"))?;
        tape.linear(h, w, Some(bias))
    }

    /// Inference-only forward pass.
    pub fn logits(&self, params: &Params, x: &Tensor) -> Result<Tensor, NnError> {
        let mut tape = Tape::new(params);
        let xv = tape.input(x.clone());
        let y = self.forward(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }
}
