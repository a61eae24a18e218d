use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Bilinear footprint of one sample point.
#[derive(Clone, Copy)]
struct Tap {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    wx: f32,
    wy: f32,
    /// d pixel / d normalized coordinate; zero where border clamping is active.
    sx: f32,
    sy: f32,
}

/// Normalized coordinate in [-1, 1] to continuous pixel index, using pixel
/// centers (`-1` is the left edge of pixel 0, `+1` the right edge of the
/// last pixel). Returns the clamped index and its derivative.
fn unnormalize(g: f32, len: usize) -> (f32, f32) {
    let p = ((g + 1.0) * len as f32 - 1.0) * 0.5;
    let hi = (len - 1) as f32;
    if p < 0.0 {
        (0.0, 0.0)
    } else if p > hi {
        (hi, 0.0)
    } else {
        (p, len as f32 * 0.5)
    }
}

fn tap(gx: f32, gy: f32, h: usize, w: usize) -> Tap {
    let (px, sx) = unnormalize(gx, w);
    let (py, sy) = unnormalize(gy, h);
    let x0 = (px.floor() as usize).min(w - 1);
    let y0 = (py.floor() as usize).min(h - 1);
    Tap {
        x0,
        x1: (x0 + 1).min(w - 1),
        y0,
        y1: (y0 + 1).min(h - 1),
        wx: px - x0 as f32,
        wy: py - y0 as f32,
        sx,
        sy,
    }
}

/// Pixel-center sampling grid of shape (1, out_h, out_w, 2) that reproduces
/// an image of the same size exactly and resizes otherwise.
pub fn identity_grid(out_h: usize, out_w: usize) -> Tensor {
    let mut data = Vec::with_capacity(out_h * out_w * 2);
    for y in 0..out_h {
        let gy = (2 * y + 1) as f32 / out_h as f32 - 1.0;
        for x in 0..out_w {
            data.push((2 * x + 1) as f32 / out_w as f32 - 1.0);
            data.push(gy);
        }
    }
    Tensor::from_vec(vec![1, out_h, out_w, 2], data).expect("grid shape")
}

impl<'t> Var<'t> {
    /// Bilinear resampling of an (N, C, H, W) image at the normalized
    /// (x, y) positions of an (N, Ho, Wo, 2) grid, with border clamping.
    /// Differentiable with respect to both the image and the grid.
    pub fn grid_sample_bilinear(self, grid: Var<'t>) -> Result<Var<'t>> {
        let img = self.value();
        let gv = grid.value();
        let [n, c, h, w] = match *img.shape() {
            [n, c, h, w] => [n, c, h, w],
            _ => {
                return Err(TensorError::shape(format!(
                    "grid_sample image must be NCHW, got {:?}",
                    img.shape()
                )))
            }
        };
        let [gn, oh, ow, two] = match *gv.shape() {
            [a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(TensorError::shape(format!(
                    "grid must be (N, Ho, Wo, 2), got {:?}",
                    gv.shape()
                )))
            }
        };
        if two != 2 {
            return Err(TensorError::shape(format!(
                "grid last dimension must be 2, got {}",
                two
            )));
        }
        if gn != n {
            return Err(TensorError::shape(format!("grid batch {} vs image batch {}", gn, n)));
        }
        if h == 0 || w == 0 {
            return Err(TensorError::shape("grid_sample of an empty image"));
        }
        let plane = oh * ow;
        let taps: Arc<Vec<Tap>> = Arc::new(gv.data().chunks(2).map(|p| tap(p[0], p[1], h, w)).collect());
        let mut out = vec![0.0; n * c * plane];
        out.par_chunks_mut(plane).enumerate().for_each(|(pl, dst)| {
            let b = pl / c;
            let src = &img.data()[pl * h * w..(pl + 1) * h * w];
            for (d, t) in dst.iter_mut().zip(&taps[b * plane..(b + 1) * plane]) {
                *d = sample(src, w, t);
            }
        });
        let out = Tensor::from_vec(vec![n, c, oh, ow], out)?;
        let (need_img, need_grid) = (self.requires_grad(), grid.requires_grad());
        Ok(self
            .tape()
            .record("grid_sample", &[self, grid], Arc::new(out), move |g| {
                let gimg = need_img.then(|| {
                    let mut gi = vec![0.0; img.numel()];
                    gi.par_chunks_mut(h * w).enumerate().for_each(|(pl, dst)| {
                        let b = pl / c;
                        let gsrc = &g.data()[pl * plane..(pl + 1) * plane];
                        for (&gv, t) in gsrc.iter().zip(&taps[b * plane..(b + 1) * plane]) {
                            dst[t.y0 * w + t.x0] += gv * (1.0 - t.wx) * (1.0 - t.wy);
                            dst[t.y0 * w + t.x1] += gv * t.wx * (1.0 - t.wy);
                            dst[t.y1 * w + t.x0] += gv * (1.0 - t.wx) * t.wy;
                            dst[t.y1 * w + t.x1] += gv * t.wx * t.wy;
                        }
                    });
                    Tensor::from_vec(img.shape().to_vec(), gi).expect("grid_sample grad")
                });
                let ggrid = need_grid.then(|| {
                    let mut gg = vec![0.0; gv.numel()];
                    for b in 0..n {
                        for k in 0..plane {
                            let t = &taps[b * plane + k];
                            let (mut dx, mut dy) = (0.0f32, 0.0f32);
                            for ch in 0..c {
                                let pl = b * c + ch;
                                let src = &img.data()[pl * h * w..(pl + 1) * h * w];
                                let gk = g.data()[pl * plane + k];
                                let v00 = src[t.y0 * w + t.x0];
                                let v01 = src[t.y0 * w + t.x1];
                                let v10 = src[t.y1 * w + t.x0];
                                let v11 = src[t.y1 * w + t.x1];
                                dx += gk * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
                                dy += gk * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
                            }
                            gg[(b * plane + k) * 2] = dx * t.sx;
                            gg[(b * plane + k) * 2 + 1] = dy * t.sy;
                        }
                    }
                    Tensor::from_vec(gv.shape().to_vec(), gg).expect("grid grad")
                });
                vec![gimg, ggrid]
            }))
    }
}

fn sample(src: &[f32], w: usize, t: &Tap) -> f32 {
    let v00 = src[t.y0 * w + t.x0];
    let v01 = src[t.y0 * w + t.x1];
    let v10 = src[t.y1 * w + t.x0];
    let v11 = src[t.y1 * w + t.x1];
    (1.0 - t.wy) * ((1.0 - t.wx) * v00 + t.wx * v01) + t.wy * ((1.0 - t.wx) * v10 + t.wx * v11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;

    fn pattern(h: usize, w: usize) -> Tensor {
        let data = (0..h * w).map(|i| ((i * 37) % 11) as f32 / 10.0).collect();
        Tensor::from_vec(vec![1, 1, h, w], data).unwrap()
    }

    #[test]
    fn identity_grid_reproduces_input() {
        let tape = Tape::new();
        let img = pattern(5, 7);
        let x = tape.constant(img.clone());
        let g = tape.constant(identity_grid(5, 7));
        let y = x.grid_sample_bilinear(g).unwrap().value();
        assert!(y.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn exact_pixel_centers_give_pixel_values() {
        let tape = Tape::new();
        let img = pattern(4, 4);
        let x = tape.constant(img.clone());
        // centers of pixel (1, 2) and (3, 0)
        let grid = Tensor::from_vec(vec![1, 1, 2, 2], vec![-0.25, 0.25, 0.75, -0.75]).unwrap();
        let y = x.grid_sample_bilinear(tape.constant(grid)).unwrap().value();
        assert!((y.data()[0] - img.at(&[0, 0, 2, 1])).abs() < 1e-6);
        assert!((y.data()[1] - img.at(&[0, 0, 0, 3])).abs() < 1e-6);
    }

    #[test]
    fn grid_gradient_on_linear_ramp_matches_slope() {
        // I(x, y) = 2x + 3y in pixel units; d/dgx = 2 * W / 2, d/dgy = 3 * H / 2
        let (h, w) = (6, 8);
        let data = (0..h * w)
            .map(|i| 2.0 * (i % w) as f32 + 3.0 * (i / w) as f32)
            .collect();
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![1, 1, h, w], data).unwrap());
        let grid = tape.leaf(Tensor::from_vec(vec![1, 1, 2, 2], vec![0.1, -0.2, -0.33, 0.41]).unwrap());
        let y = x.grid_sample_bilinear(grid).unwrap();
        let gr = tape.backward(y.sum_all()).unwrap();
        let gg = gr.wrt(grid).data().to_vec();
        for k in 0..2 {
            assert!((gg[2 * k] - 2.0 * w as f32 / 2.0).abs() < 1e-4);
            assert!((gg[2 * k + 1] - 3.0 * h as f32 / 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn out_of_range_samples_clamp_to_border() {
        let tape = Tape::new();
        let img = pattern(3, 3);
        let x = tape.constant(img.clone());
        let grid = Tensor::from_vec(vec![1, 1, 1, 2], vec![-3.0, 5.0]).unwrap();
        let y = x.grid_sample_bilinear(tape.constant(grid)).unwrap().value();
        assert_eq!(y.data()[0], img.at(&[0, 0, 2, 0]));
    }

    #[test]
    fn bad_grid_last_dimension() {
        let tape = Tape::new();
        let x = tape.constant(pattern(3, 3));
        let grid = tape.constant(Tensor::zeros(vec![1, 2, 2, 3]));
        assert!(matches!(
            x.grid_sample_bilinear(grid),
            Err(TensorError::InvalidShape(_))
        ));
    }
}
