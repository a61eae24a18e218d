//! Synthetic inputs for runs without real encoder weights.
//!
//! With the toy encoder there is no text branch, so the "text" target is
//! the embedding of a fixed content picture: a dark ring with a red bar on
//! white. The style image is a field of warm diagonal stripes.

use stylestroke_tensor::{Tape, Tensor};

use crate::encoders::{Embedding, ImageEncoder};
use crate::error::Result;
use crate::io::square_resize;

/// `(3, size, size)` content picture.
pub fn content_image(size: usize) -> Tensor {
    let s = size as f32;
    let mut data = vec![1.0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f32 + 0.5) / s - 0.5, (y as f32 + 0.5) / s - 0.5);
            let r = (u * u + v * v).sqrt();
            let rgb = if (0.22..0.32).contains(&r) {
                Some([0.1, 0.15, 0.45])
            } else if u.abs() < 0.16 && v.abs() < 0.05 {
                Some([0.85, 0.1, 0.1])
            } else {
                None
            };
            if let Some(rgb) = rgb {
                for (ch, c) in rgb.iter().enumerate() {
                    data[(ch * size + y) * size + x] = *c;
                }
            }
        }
    }
    Tensor::from_vec(vec![3, size, size], data).expect("content image shape")
}

/// `(3, size, size)` diagonal stripes in orange, yellow, and purple.
pub fn style_image(size: usize) -> Tensor {
    const PALETTE: [[f32; 3]; 3] = [[0.95, 0.55, 0.1], [0.98, 0.9, 0.3], [0.45, 0.15, 0.55]];
    let period = (size / 8).max(3);
    let mut data = vec![0.0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let band = ((x + y) / period) % PALETTE.len();
            for ch in 0..3 {
                data[(ch * size + y) * size + x] = PALETTE[band][ch];
            }
        }
    }
    Tensor::from_vec(vec![3, size, size], data).expect("style image shape")
}

/// Embedding of [`content_image`] under `encoder`, used as the text target.
pub fn text_embedding(encoder: &dyn ImageEncoder) -> Result<Embedding> {
    let s = encoder.input_size();
    let img = square_resize(&content_image(s), s)?;
    let tape = Tape::new();
    let x = tape.constant(img.reshaped(vec![1, 3, s, s])?);
    Embedding::new(encoder.embed(x)?.value().data().to_vec())
}
