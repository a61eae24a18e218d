use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use stylestroke_tensor::{Tape, Tensor};

use crate::error::{Error, Result};

/// Decode an 8-bit PNG into a (3, H, W) tensor in [0, 1]. Alpha is
/// composited over white.
pub fn decode_png_bytes(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| Error::Decode(e.to_string()))?;
    let rgba = match img {
        DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_)
        | DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_) => img.to_rgba8(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "only 8-bit PNGs are supported, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let mut data = vec![0.0f32; 3 * w * h];
    for (i, px) in rgba.pixels().enumerate() {
        let a = px[3] as f32 / 255.0;
        for ch in 0..3 {
            data[ch * w * h + i] = a * (px[ch] as f32 / 255.0) + (1.0 - a);
        }
    }
    Ok(Tensor::from_vec(vec![3, h, w], data)?)
}

pub fn decode_png(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png_bytes(&bytes)
}

fn check_rgb(img: &Tensor) -> Result<(usize, usize)> {
    match *img.shape() {
        [3, h, w] if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(Error::Tensor(stylestroke_tensor::TensorError::InvalidShape(format!(
            "expected a (3, H, W) image, got {:?}",
            img.shape()
        )))),
    }
}

/// 8-bit RGB PNG; values are clipped to [0, 1] and rounded.
pub fn encode_png_bytes(img: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = check_rgb(img)?;
    let mut raw = vec![0u8; 3 * w * h];
    for i in 0..w * h {
        for ch in 0..3 {
            let v = img.data()[ch * w * h + i];
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            raw[i * 3 + ch] = (v * 255.0).round() as u8;
        }
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&raw, w as u32, h as u32, ExtendedColorType::Rgb8)
        .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out)
}

pub fn encode_png(img: &Tensor, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode_png_bytes(img)?)
}

/// Center-crop to a square and resize bilinearly to `size × size`.
pub fn square_resize(img: &Tensor, size: usize) -> Result<Tensor> {
    let (h, w) = check_rgb(img)?;
    if size == 0 {
        return Err(Error::config("resize target must be positive"));
    }
    let side = h.min(w);
    let (ox, oy) = ((w - side) / 2, (h - side) / 2);
    let scale = side as f32 / size as f32;
    let mut grid = Vec::with_capacity(size * size * 2);
    for j in 0..size {
        let py = (j as f32 + 0.5) * scale - 0.5 + oy as f32;
        for i in 0..size {
            let px = (i as f32 + 0.5) * scale - 0.5 + ox as f32;
            grid.push((2.0 * px + 1.0) / w as f32 - 1.0);
            grid.push((2.0 * py + 1.0) / h as f32 - 1.0);
        }
    }
    let tape = Tape::new();
    let x = tape.constant(img.reshaped(vec![1, 3, h, w])?);
    let g = tape.constant(Tensor::from_vec(vec![1, size, size, 2], grid)?);
    let y = x.grid_sample_bilinear(g)?.value();
    Ok(y.reshaped(vec![3, size, size])?)
}

/// Decode a style image and bring it to the encoder's input size.
pub fn load_style_image(path: &Path, size: usize) -> Result<Tensor> {
    square_resize(&decode_png(path)?, size)
}
