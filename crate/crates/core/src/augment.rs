//! Random crops and perspective warps, applied differentiably.
//!
//! A view is described by a crop box inside the unit square and four corner
//! displacements. Output pixel `(u, v)` in unit coordinates is first mapped
//! through the square-to-quad homography of the displaced corners, then into
//! the crop box; the composite 3×3 matrix drives a bilinear resampling grid.

use stylestroke_tensor::{Tensor, Var};

use crate::error::{Error, Result};
use crate::rng::Rng32;

pub type Homography = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub scale_min: f32,
    pub scale_max: f32,
    /// Full width of the corner displacement range; each corner moves by up
    /// to half of it per axis.
    pub distortion: f32,
    /// Views per content-loss evaluation.
    pub n_views: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale_min: 0.7,
            scale_max: 0.9,
            distortion: 0.5,
            n_views: 4,
        }
    }
}

impl AugmentConfig {
    /// Every view reproduces the input.
    pub fn identity(n_views: usize) -> Self {
        AugmentConfig {
            scale_min: 1.0,
            scale_max: 1.0,
            distortion: 0.0,
            n_views,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.scale_min && self.scale_min <= self.scale_max && self.scale_max <= 1.0) {
            return Err(Error::config(format!(
                "crop scale range must satisfy 0 < min <= max <= 1, got [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        if !(0.0..1.0).contains(&self.distortion) {
            return Err(Error::config(format!(
                "distortion must be in [0, 1), got {}",
                self.distortion
            )));
        }
        if self.n_views == 0 {
            return Err(Error::config("at least one augmented view is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Crop side length as a fraction of the image.
    pub scale: f32,
    /// Crop center in unit coordinates.
    pub center: [f32; 2],
    /// Displacements of the TL, TR, BR, BL corners in unit coordinates.
    pub corners: [[f32; 2]; 4],
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        scale: 1.0,
        center: [0.5, 0.5],
        corners: [[0.0; 2]; 4],
    };

    /// Draw order: scale, center x, center y, then x and y of each corner in
    /// TL, TR, BR, BL order.
    pub fn sample(rng: &mut Rng32, cfg: &AugmentConfig) -> Self {
        let scale = rng.uniform(cfg.scale_min, cfg.scale_max);
        let half = scale / 2.0;
        let center = [rng.uniform(half, 1.0 - half), rng.uniform(half, 1.0 - half)];
        let r = cfg.distortion / 2.0;
        let mut corners = [[0.0; 2]; 4];
        for c in &mut corners {
            *c = [rng.uniform(-r, r), rng.uniform(-r, r)];
        }
        AugmentParams { scale, center, corners }
    }

    /// Output unit square to source unit square.
    pub fn homography(&self) -> Result<Homography> {
        const UNIT: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut quad = [[0.0f64; 2]; 4];
        for k in 0..4 {
            quad[k] = [
                UNIT[k][0] + self.corners[k][0] as f64,
                UNIT[k][1] + self.corners[k][1] as f64,
            ];
        }
        check_convex(&quad)?;
        let persp = square_to_quad(&quad)?;
        let s = self.scale as f64;
        let crop = [
            [s, 0.0, self.center[0] as f64 - 0.5 * s],
            [0.0, s, self.center[1] as f64 - 0.5 * s],
            [0.0, 0.0, 1.0],
        ];
        let h = matmul3(&crop, &persp);
        for q in UNIT {
            let w = h[2][0] * q[0] + h[2][1] * q[1] + h[2][2];
            if w <= 1e-9 {
                return Err(Error::ResampleDegenerate("homography maps a corner to infinity".into()));
            }
        }
        Ok(h)
    }
}

fn check_convex(q: &[[f64; 2]; 4]) -> Result<()> {
    let mut sign = 0.0f64;
    for k in 0..4 {
        let a = q[k];
        let b = q[(k + 1) % 4];
        let c = q[(k + 2) % 4];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross.abs() < 1e-9 || (sign != 0.0 && cross.signum() != sign) {
            return Err(Error::ResampleDegenerate(format!(
                "corner layout {q:?} is not a convex quad"
            )));
        }
        sign = cross.signum();
    }
    Ok(())
}

/// Projective map taking (0,0), (1,0), (1,1), (0,1) to the quad corners.
fn square_to_quad(q: &[[f64; 2]; 4]) -> Result<Homography> {
    let [[x0, y0], [x1, y1], [x2, y2], [x3, y3]] = *q;
    let sx = x0 - x1 + x2 - x3;
    let sy = y0 - y1 + y2 - y3;
    if sx.abs() < 1e-12 && sy.abs() < 1e-12 {
        return Ok([[x1 - x0, x3 - x0, x0], [y1 - y0, y3 - y0, y0], [0.0, 0.0, 1.0]]);
    }
    let (dx1, dx2, dy1, dy2) = (x1 - x2, x3 - x2, y1 - y2, y3 - y2);
    let den = dx1 * dy2 - dx2 * dy1;
    if den.abs() < 1e-12 {
        return Err(Error::ResampleDegenerate("singular corner layout".into()));
    }
    let g = (sx * dy2 - dx2 * sy) / den;
    let h = (dx1 * sy - sx * dy1) / den;
    Ok([
        [x1 - x0 + g * x1, x3 - x0 + h * x3, x0],
        [y1 - y0 + g * y1, y3 - y0 + h * y3, y0],
        [g, h, 1.0],
    ])
}

fn matmul3(a: &Homography, b: &Homography) -> Homography {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Normalized sampling coordinates for an `out_h × out_w` view.
fn grid_points(h: &Homography, out_h: usize, out_w: usize, dst: &mut Vec<f32>) {
    for j in 0..out_h {
        let v = (j as f64 + 0.5) / out_h as f64;
        for i in 0..out_w {
            let u = (i as f64 + 0.5) / out_w as f64;
            let w = h[2][0] * u + h[2][1] * v + h[2][2];
            let x = (h[0][0] * u + h[0][1] * v + h[0][2]) / w;
            let y = (h[1][0] * u + h[1][1] * v + h[1][2]) / w;
            dst.push((2.0 * x - 1.0) as f32);
            dst.push((2.0 * y - 1.0) as f32);
        }
    }
}

fn as_chw(img: Var<'_>) -> Result<(usize, usize)> {
    match img.shape()[..] {
        [3, h, w] => Ok((h, w)),
        _ => Err(Error::Tensor(stylestroke_tensor::TensorError::InvalidShape(format!(
            "expected a (3, H, W) image, got {:?}",
            img.shape()
        )))),
    }
}

/// Resample a (3, H, W) image into one view per parameter set, returning
/// (n, 3, out, out). Views are stacked into one sampling grid so the image
/// is read once.
pub fn apply_many<'t>(img: Var<'t>, params: &[AugmentParams], out_size: usize) -> Result<Var<'t>> {
    let (h, w) = as_chw(img)?;
    if params.is_empty() || out_size == 0 {
        return Err(Error::config("need at least one view of positive size"));
    }
    let n = params.len();
    let mut grid = Vec::with_capacity(n * out_size * out_size * 2);
    for p in params {
        grid_points(&p.homography()?, out_size, out_size, &mut grid);
    }
    let tape = img.tape();
    let grid = tape.constant(Tensor::from_vec(vec![1, n * out_size, out_size, 2], grid)?);
    let views = img
        .reshape(&[1, 3, h, w])?
        .grid_sample_bilinear(grid)?
        .reshape(&[3, n, out_size, out_size])?
        .transpose(&[1, 0, 2, 3])?;
    Ok(views)
}

/// One augmented (3, out, out) view.
pub fn apply<'t>(img: Var<'t>, p: &AugmentParams, out_size: usize) -> Result<Var<'t>> {
    apply_many(img, std::slice::from_ref(p), out_size)?
        .reshape(&[3, out_size, out_size])
        .map_err(Error::from)
}

/// `cfg.n_views` views with parameters drawn in sequence from `rng`.
pub fn augment_batch<'t>(img: Var<'t>, cfg: &AugmentConfig, rng: &mut Rng32, out_size: usize) -> Result<Var<'t>> {
    cfg.validate()?;
    let params: Vec<AugmentParams> = (0..cfg.n_views).map(|_| AugmentParams::sample(rng, cfg)).collect();
    apply_many(img, &params, out_size)
}

/// Bilinear resize of a (3, H, W) image to (1, 3, size, size); identity when
/// the size already matches.
pub fn resize<'t>(img: Var<'t>, size: usize) -> Result<Var<'t>> {
    let (h, w) = as_chw(img)?;
    let x = img.reshape(&[1, 3, h, w])?;
    if h == size && w == size {
        return Ok(x);
    }
    let grid = img.tape().constant(stylestroke_tensor::ops::identity_grid(size, size));
    Ok(x.grid_sample_bilinear(grid)?)
}
