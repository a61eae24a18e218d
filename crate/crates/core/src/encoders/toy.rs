//! Seeded random convnet used as a desk-scale encoder.
//!
//! Four blocks of 3×3 convolution (stride 2, padding 1) and ReLU with
//! 3 → 8 → 16 → 32 → 64 channels. Inputs are normalized as `(x - 0.5) / 0.5`.
//! The embedding is the unit-normalized global average of block 4; style
//! taps are the outputs of blocks 1–3.
//!
//! Weights come from [`Rng32::from_seed`]. For each block in order, all
//! weights are drawn row-major over (out, in, kh, kw) uniformly in
//! `±sqrt(6 / fan_in)`, then the biases uniformly in `±1 / sqrt(fan_in)`,
//! with `fan_in = in · 9`.

use std::sync::Arc;

use stylestroke_tensor::{Conv2dParams, Tensor, Var};

use super::{normalize_rows, ImageEncoder, StyleFeatureExtractor};
use crate::error::{Error, Result};
use crate::rng::Rng32;

pub const DEFAULT_SEED: u64 = 0;
pub const CHANNELS: [usize; 5] = [3, 8, 16, 32, 64];
pub const STYLE_TAPS: [&str; 3] = ["block1", "block2", "block3"];

struct Block {
    weight: Arc<Tensor>,
    bias: Arc<Tensor>,
}

pub struct ToyEncoder {
    input_size: usize,
    blocks: Vec<Block>,
}

impl ToyEncoder {
    pub fn new(seed: u64, input_size: usize) -> Result<Self> {
        if input_size < 16 {
            return Err(Error::config(format!(
                "toy encoder input must be at least 16 pixels, got {input_size}"
            )));
        }
        let mut rng = Rng32::from_seed(seed);
        let blocks = CHANNELS
            .windows(2)
            .map(|io| {
                let (cin, cout) = (io[0], io[1]);
                let fan_in = (cin * 9) as f32;
                let wb = (6.0 / fan_in).sqrt();
                let bb = 1.0 / fan_in.sqrt();
                let w: Vec<f32> = (0..cout * cin * 9).map(|_| rng.uniform(-wb, wb)).collect();
                let b: Vec<f32> = (0..cout).map(|_| rng.uniform(-bb, bb)).collect();
                Block {
                    weight: Arc::new(Tensor::from_vec(vec![cout, cin, 3, 3], w).expect("weight shape")),
                    bias: Arc::new(Tensor::vector(b)),
                }
            })
            .collect();
        Ok(ToyEncoder { input_size, blocks })
    }

    pub fn weights(&self) -> Vec<(&Tensor, &Tensor)> {
        self.blocks.iter().map(|b| (&*b.weight, &*b.bias)).collect()
    }

    /// Post-ReLU outputs of the first `depth` blocks.
    fn run<'t>(&self, images: Var<'t>, depth: usize) -> Result<Vec<Var<'t>>> {
        let shape = images.shape();
        match shape[..] {
            [_, 3, h, w] if h == self.input_size && w == self.input_size => {}
            _ => {
                return Err(Error::Tensor(stylestroke_tensor::TensorError::InvalidShape(format!(
                    "toy encoder expects (N, 3, {s}, {s}), got {shape:?}",
                    s = self.input_size
                ))))
            }
        }
        let tape = images.tape();
        let mut x = images.add_scalar(-0.5).mul_scalar(2.0);
        let mut outs = Vec::with_capacity(depth);
        for b in &self.blocks[..depth] {
            let w = tape.constant_arc(b.weight.clone());
            let bias = tape.constant_arc(b.bias.clone());
            x = x.conv2d(w, Some(bias), Conv2dParams::new(2, 1))?.relu();
            outs.push(x);
        }
        Ok(outs)
    }
}

impl ImageEncoder for ToyEncoder {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn embed_dim(&self) -> usize {
        CHANNELS[4]
    }

    fn embed<'t>(&self, images: Var<'t>) -> Result<Var<'t>> {
        let last = *self.run(images, 4)?.last().expect("four blocks");
        normalize_rows(last.reduce_mean(&[2, 3], false)?)
    }
}

impl StyleFeatureExtractor for ToyEncoder {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn layer_names(&self) -> Vec<String> {
        STYLE_TAPS.iter().map(|s| s.to_string()).collect()
    }

    fn feature_maps<'t>(&self, image: Var<'t>) -> Result<Vec<Var<'t>>> {
        self.run(image, 3)
    }
}
