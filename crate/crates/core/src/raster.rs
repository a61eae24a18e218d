//! Soft signed-distance rasterizer for brush strokes.
//!
//! Each stroke is flattened to a K-segment polyline; a pixel center at
//! distance `d` from the polyline is covered by `sigmoid((r - d) / σ)`.
//! Strokes are composited back to front with the over operator. Coverage is
//! cut to exactly zero beyond `r + CULL_SIGMAS·σ`, which lets every stroke
//! touch only its bounding box.
//!
//! The whole render is a single tape op with a hand-written backward pass:
//! pixels are recomputed row by row, the compositing chain is unwound per
//! pixel, and distance gradients are pushed onto the nearest segment's
//! endpoints (`∂d/∂A = (1-t)·u`, `∂d/∂B = t·u`, `u = (q - p)/d`), then onto
//! the control points through the Bernstein weights of each sample.

use std::sync::Arc;

use rayon::prelude::*;
use stylestroke_tensor::ops::sigmoid;
use stylestroke_tensor::{Tensor, Var};

use crate::error::{Error, Result};
use crate::scene::{Drawing, GroupVars, ParamGroups, Point2, Stroke};

pub const DEFAULT_SIGMA: f32 = 1.0;
pub const DEFAULT_SEGMENTS: usize = 32;
pub const CULL_SIGMAS: f32 = 12.0;

/// Rows handled by one work item; fixed so reductions do not depend on the
/// thread count.
const ROWS_PER_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    /// Edge softness in pixels.
    pub sigma: f32,
    /// Polyline segments per stroke.
    pub segments: usize,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            sigma: DEFAULT_SIGMA,
            segments: DEFAULT_SEGMENTS,
        }
    }
}

impl RasterOptions {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.segments == 0 {
            return Err(Error::config("at least one flattening segment is required"));
        }
        Ok(())
    }
}

fn bernstein(t: f32) -> [f32; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

pub fn bezier_point(p: &[Point2; 4], t: f32) -> Point2 {
    let w = bernstein(t);
    Point2::new(
        w[0] * p[0].x + w[1] * p[1].x + w[2] * p[2].x + w[3] * p[3].x,
        w[0] * p[0].y + w[1] * p[1].y + w[2] * p[2].y + w[3] * p[3].y,
    )
}

/// `segments + 1` points at `t_i = i / segments`.
pub fn flatten_bezier(s: &Stroke, segments: usize) -> Result<Vec<Point2>> {
    if segments == 0 {
        return Err(Error::config("at least one flattening segment is required"));
    }
    Ok((0..=segments)
        .map(|i| bezier_point(&s.points, i as f32 / segments as f32))
        .collect())
}

/// Nearest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub distance: f32,
    /// Segment index; ties go to the lower index.
    pub segment: usize,
    /// Position along the segment in [0, 1].
    pub t: f32,
}

struct Segment {
    a: [f32; 2],
    ab: [f32; 2],
    inv_len2: f32,
}

fn segments_of(poly: &[[f32; 2]]) -> Vec<Segment> {
    poly.windows(2)
        .map(|w| {
            let ab = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            Segment {
                a: w[0],
                ab,
                inv_len2: if len2 > 0.0 { 1.0 / len2 } else { 0.0 },
            }
        })
        .collect()
}

fn nearest_on(segs: &[Segment], px: f32, py: f32) -> Nearest {
    let mut best = (f32::INFINITY, 0usize, 0.0f32);
    for (k, s) in segs.iter().enumerate() {
        let (ax, ay) = (px - s.a[0], py - s.a[1]);
        let t = ((ax * s.ab[0] + ay * s.ab[1]) * s.inv_len2).clamp(0.0, 1.0);
        let (dx, dy) = (ax - t * s.ab[0], ay - t * s.ab[1]);
        let d2 = dx * dx + dy * dy;
        if d2 < best.0 {
            best = (d2, k, t);
        }
    }
    Nearest {
        distance: best.0.sqrt(),
        segment: best.1,
        t: best.2,
    }
}

pub fn nearest_on_polyline(p: Point2, poly: &[Point2]) -> Nearest {
    let pts: Vec<[f32; 2]> = poly.iter().map(|q| [q.x, q.y]).collect();
    if pts.len() == 1 {
        let (dx, dy) = (p.x - pts[0][0], p.y - pts[0][1]);
        return Nearest {
            distance: (dx * dx + dy * dy).sqrt(),
            segment: 0,
            t: 0.0,
        };
    }
    nearest_on(&segments_of(&pts), p.x, p.y)
}

fn soft_coverage(radius: f32, d: f32, sigma: f32) -> f32 {
    if d > radius + CULL_SIGMAS * sigma {
        0.0
    } else {
        sigmoid((radius - d) / sigma)
    }
}

/// Coverage of one pixel center by a stroke, flattened with the default
/// segment count.
pub fn coverage(pixel_center: Point2, s: &Stroke, sigma: f32) -> Result<f32> {
    RasterOptions {
        sigma,
        segments: DEFAULT_SEGMENTS,
    }
    .validate()?;
    let poly = flatten_bezier(s, DEFAULT_SEGMENTS)?;
    let d = nearest_on_polyline(pixel_center, &poly).distance;
    Ok(soft_coverage(s.radius, d, sigma))
}

/// Stroke data in the form the pixel loops want.
struct Prepared {
    segs: Vec<Segment>,
    radius: f32,
    color: [f32; 4],
    /// Inclusive pixel bounds; `x0 > x1` or `y0 > y1` means off canvas.
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    visible: bool,
}

struct Scene {
    width: usize,
    height: usize,
    background: [f32; 3],
    sigma: f32,
    segments: usize,
    strokes: Vec<Prepared>,
    weights: Vec<[f32; 4]>,
}

impl Scene {
    fn new(
        groups: (&Tensor, &Tensor, &Tensor),
        width: u32,
        height: u32,
        background: [f32; 3],
        opts: RasterOptions,
    ) -> Result<Self> {
        opts.validate()?;
        let (traj, radii, colors) = groups;
        let n = radii.numel();
        if traj.shape() != [n, 4, 2] || colors.shape() != [n, 4] || radii.shape() != [n] {
            return Err(Error::Tensor(stylestroke_tensor::TensorError::InvalidShape(format!(
                "stroke groups must be (n,4,2), (n), (n,4); got {:?}, {:?}, {:?}",
                traj.shape(),
                radii.shape(),
                colors.shape()
            ))));
        }
        let k = opts.segments;
        let weights: Vec<[f32; 4]> = (0..=k).map(|i| bernstein(i as f32 / k as f32)).collect();
        let (w, h) = (width as usize, height as usize);
        let strokes = (0..n)
            .map(|i| {
                let p = &traj.data()[i * 8..i * 8 + 8];
                let poly: Vec<[f32; 2]> = weights
                    .iter()
                    .map(|b| {
                        [
                            b[0] * p[0] + b[1] * p[2] + b[2] * p[4] + b[3] * p[6],
                            b[0] * p[1] + b[1] * p[3] + b[2] * p[5] + b[3] * p[7],
                        ]
                    })
                    .collect();
                let radius = radii.data()[i];
                let reach = radius + CULL_SIGMAS * opts.sigma;
                let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) =
                    (f32::INFINITY, f32::NEG_INFINITY, f32::INFINITY, f32::NEG_INFINITY);
                for q in &poly {
                    lo_x = lo_x.min(q[0]);
                    hi_x = hi_x.max(q[0]);
                    lo_y = lo_y.min(q[1]);
                    hi_y = hi_y.max(q[1]);
                }
                // pixel centers sit at i + 0.5
                let first = |v: f32| (v - reach - 0.5).ceil().max(0.0);
                let last = |v: f32, len: usize| (v + reach - 0.5).floor().min(len as f32 - 1.0);
                let (fx0, fx1) = (first(lo_x), last(hi_x, w));
                let (fy0, fy1) = (first(lo_y), last(hi_y, h));
                let visible = fx0 <= fx1 && fy0 <= fy1 && reach.is_finite() && reach >= 0.0;
                let mut color = [0.0; 4];
                color.copy_from_slice(&colors.data()[i * 4..i * 4 + 4]);
                Prepared {
                    segs: segments_of(&poly),
                    radius,
                    color,
                    x0: if visible { fx0 as usize } else { 1 },
                    x1: if visible { fx1 as usize } else { 0 },
                    y0: if visible { fy0 as usize } else { 1 },
                    y1: if visible { fy1 as usize } else { 0 },
                    visible,
                }
            })
            .collect();
        Ok(Scene {
            width: w,
            height: h,
            background,
            sigma: opts.sigma,
            segments: k,
            strokes,
            weights,
        })
    }

    fn rows_active(&self, y: usize) -> Vec<usize> {
        self.strokes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.visible && s.y0 <= y && y <= s.y1)
            .map(|(i, _)| i)
            .collect()
    }

    /// Interleaved RGB, row-major.
    fn forward(&self) -> Vec<f32> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0f32; w * h * 3];
        out.par_chunks_mut(w * 3 * ROWS_PER_CHUNK)
            .enumerate()
            .for_each(|(c, dst)| {
                let y_start = c * ROWS_PER_CHUNK;
                for (r, row) in dst.chunks_mut(w * 3).enumerate() {
                    let y = y_start + r;
                    let active = self.rows_active(y);
                    let py = y as f32 + 0.5;
                    for x in 0..w {
                        let px = x as f32 + 0.5;
                        let mut o = self.background;
                        for &i in &active {
                            let s = &self.strokes[i];
                            if x < s.x0 || x > s.x1 {
                                continue;
                            }
                            let d = nearest_on(&s.segs, px, py).distance;
                            let a = s.color[3] * soft_coverage(s.radius, d, self.sigma);
                            if a == 0.0 {
                                continue;
                            }
                            for ch in 0..3 {
                                o[ch] = (1.0 - a) * o[ch] + a * s.color[ch];
                            }
                        }
                        row[x * 3..x * 3 + 3].copy_from_slice(&o);
                    }
                }
            });
        let _ = h;
        out
    }

    /// Gradients of `Σ g ⊙ image` for (trajectories, radii, colors), with `g`
    /// in (3, H, W) layout.
    fn backward(&self, g: &[f32]) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let (w, h) = (self.width, self.height);
        let n = self.strokes.len();
        let np = self.segments + 1;
        // per stroke: polyline point grads (2·np), radius, rgba
        let stride = 2 * np + 5;
        let chunks = h.div_ceil(ROWS_PER_CHUNK);
        let partial: Vec<Vec<f32>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0f32; n * stride];
                // (stroke, a, c, under rgb, nearest)
                let mut chain: Vec<(usize, f32, f32, [f32; 3], Nearest)> = Vec::new();
                for y in c * ROWS_PER_CHUNK..((c + 1) * ROWS_PER_CHUNK).min(h) {
                    let active = self.rows_active(y);
                    if active.is_empty() {
                        continue;
                    }
                    let py = y as f32 + 0.5;
                    for x in 0..w {
                        let px = x as f32 + 0.5;
                        chain.clear();
                        let mut o = self.background;
                        for &i in &active {
                            let s = &self.strokes[i];
                            if x < s.x0 || x > s.x1 {
                                continue;
                            }
                            let near = nearest_on(&s.segs, px, py);
                            let cov = soft_coverage(s.radius, near.distance, self.sigma);
                            if cov == 0.0 {
                                continue;
                            }
                            let a = s.color[3] * cov;
                            chain.push((i, a, cov, o, near));
                            for ch in 0..3 {
                                o[ch] = (1.0 - a) * o[ch] + a * s.color[ch];
                            }
                        }
                        if chain.is_empty() {
                            continue;
                        }
                        let pix = y * w + x;
                        let mut gout = [g[pix], g[w * h + pix], g[2 * w * h + pix]];
                        for &(i, a, cov, under, near) in chain.iter().rev() {
                            let s = &self.strokes[i];
                            let base = i * stride;
                            let mut ga = 0.0;
                            for ch in 0..3 {
                                ga += gout[ch] * (s.color[ch] - under[ch]);
                                acc[base + 2 * np + 1 + ch] += a * gout[ch];
                                gout[ch] *= 1.0 - a;
                            }
                            acc[base + 2 * np + 4] += ga * cov;
                            let gz = ga * s.color[3] * cov * (1.0 - cov) / self.sigma;
                            acc[base + 2 * np] += gz;
                            let d = near.distance;
                            if d > 0.0 {
                                // ∂c/∂d = -∂c/∂r
                                let gd = -gz;
                                let seg = &s.segs[near.segment];
                                let qx = seg.a[0] + near.t * seg.ab[0];
                                let qy = seg.a[1] + near.t * seg.ab[1];
                                let ux = gd * (qx - px) / d;
                                let uy = gd * (qy - py) / d;
                                let ka = base + 2 * near.segment;
                                acc[ka] += (1.0 - near.t) * ux;
                                acc[ka + 1] += (1.0 - near.t) * uy;
                                acc[ka + 2] += near.t * ux;
                                acc[ka + 3] += near.t * uy;
                            }
                        }
                    }
                }
                acc
            })
            .collect();

        let mut total = vec![0.0f32; n * stride];
        for p in &partial {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        let mut gtraj = vec![0.0f32; n * 8];
        let mut grad = vec![0.0f32; n];
        let mut gcol = vec![0.0f32; n * 4];
        for i in 0..n {
            let base = i * stride;
            for (k, wk) in self.weights.iter().enumerate() {
                let (gx, gy) = (total[base + 2 * k], total[base + 2 * k + 1]);
                for j in 0..4 {
                    gtraj[i * 8 + 2 * j] += wk[j] * gx;
                    gtraj[i * 8 + 2 * j + 1] += wk[j] * gy;
                }
            }
            grad[i] = total[base + 2 * np];
            gcol[i * 4..i * 4 + 4].copy_from_slice(&total[base + 2 * np + 1..base + 2 * np + 5]);
        }
        (gtraj, grad, gcol)
    }
}

fn planar(interleaved: &[f32], w: usize, h: usize) -> Tensor {
    let mut data = vec![0.0f32; 3 * w * h];
    for (p, rgb) in interleaved.chunks(3).enumerate() {
        for ch in 0..3 {
            data[ch * w * h + p] = rgb[ch];
        }
    }
    Tensor::from_vec(vec![3, h, w], data).expect("raster shape")
}

/// Render a drawing to a (3, H, W) tensor without recording gradients.
pub fn render(d: &Drawing, opts: RasterOptions) -> Result<Tensor> {
    let g = ParamGroups::from_drawing(d);
    let scene = Scene::new(
        (&g.trajectories, &g.radii, &g.colors),
        d.width,
        d.height,
        d.background,
        opts,
    )?;
    Ok(planar(&scene.forward(), d.width as usize, d.height as usize))
}

/// Differentiable render of the stroke groups to a (3, H, W) tensor.
pub fn rasterize<'t>(
    vars: &GroupVars<'t>,
    width: u32,
    height: u32,
    background: [f32; 3],
    opts: RasterOptions,
) -> Result<Var<'t>> {
    let traj = vars.trajectories.value();
    let radii = vars.radii.value();
    let colors = vars.colors.value();
    let scene = Scene::new((&traj, &radii, &colors), width, height, background, opts)?;
    let image = planar(&scene.forward(), width as usize, height as usize);
    let needs = [
        vars.trajectories.requires_grad(),
        vars.radii.requires_grad(),
        vars.colors.requires_grad(),
    ];
    let tape = vars.trajectories.tape();
    Ok(tape.record(
        "rasterize",
        &[vars.trajectories, vars.radii, vars.colors],
        Arc::new(image),
        move |g| {
            let (gt, gr, gc) = scene.backward(g.data());
            let n = gr.len();
            vec![
                needs[0].then(|| Tensor::from_vec(vec![n, 4, 2], gt).expect("traj grad")),
                needs[1].then(|| Tensor::from_vec(vec![n], gr).expect("radius grad")),
                needs[2].then(|| Tensor::from_vec(vec![n, 4], gc).expect("color grad")),
            ]
        },
    ))
}
