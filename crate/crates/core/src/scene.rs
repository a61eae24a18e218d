//! Brush-stroke drawings: the optimization variables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stylestroke_tensor::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::rng::Rng32;

pub const RADIUS_MIN: f32 = 0.5;
pub const RADIUS_MAX: f32 = 8.0;
pub const DEFAULT_STROKES: usize = 256;
pub const DEFAULT_CANVAS: u32 = 224;

/// Control-point offsets at init are drawn within this fraction of the
/// canvas extent, and points are kept within the same margin around it.
pub const INIT_SPREAD: f32 = 0.05;

/// A point in canvas pixel coordinates. Points may lie outside the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f32; 2]", into = "[f32; 2]")]
pub struct Point2 {
    pub x: f32,
    pub y: f32,
}

impl Point2 {
    pub const fn new(x: f32, y: f32) -> Self {
        Point2 { x, y }
    }
}

impl From<[f32; 2]> for Point2 {
    fn from([x, y]: [f32; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f32; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// One cubic Bézier brush stroke.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: [Point2; 4],
    /// Brush radius in pixels.
    pub radius: f32,
    /// RGBA, each channel in [0, 1].
    pub color: [f32; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusRange {
    pub min: f32,
    pub max: f32,
}

impl Default for RadiusRange {
    fn default() -> Self {
        RadiusRange {
            min: RADIUS_MIN,
            max: RADIUS_MAX,
        }
    }
}

/// Ordered strokes (painted back to front) on a fixed canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DrawingFile", into = "DrawingFile")]
pub struct Drawing {
    pub width: u32,
    pub height: u32,
    pub background: [f32; 3],
    pub strokes: Vec<Stroke>,
}

/// On-disk layout of a [`Drawing`].
#[derive(Serialize, Deserialize)]
struct DrawingFile {
    canvas: [u32; 2],
    background: [f32; 3],
    strokes: Vec<Stroke>,
}

impl TryFrom<DrawingFile> for Drawing {
    type Error = String;

    fn try_from(f: DrawingFile) -> std::result::Result<Self, String> {
        if f.canvas[0] == 0 || f.canvas[1] == 0 {
            return Err(format!("canvas must be non-empty, got {:?}", f.canvas));
        }
        Ok(Drawing {
            width: f.canvas[0],
            height: f.canvas[1],
            background: f.background,
            strokes: f.strokes,
        })
    }
}

impl From<Drawing> for DrawingFile {
    fn from(d: Drawing) -> Self {
        DrawingFile {
            canvas: [d.width, d.height],
            background: d.background,
            strokes: d.strokes,
        }
    }
}

impl Drawing {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config(format!("canvas must be non-empty, got {width}x{height}")));
        }
        Ok(Drawing {
            width,
            height,
            background: [1.0; 3],
            strokes: Vec::new(),
        })
    }

    /// Random strokes, a pure function of its arguments.
    ///
    /// Draw order per stroke: `P0.x, P0.y`, then `dx, dy` for each of
    /// `P1..P3`, then radius, then `r, g, b, alpha`.
    pub fn init_random(num_strokes: usize, width: u32, height: u32, seed: u64) -> Result<Self> {
        Self::init_random_with(num_strokes, width, height, seed, RadiusRange::default())
    }

    pub fn init_random_with(
        num_strokes: usize,
        width: u32,
        height: u32,
        seed: u64,
        radius: RadiusRange,
    ) -> Result<Self> {
        if num_strokes == 0 {
            return Err(Error::config("at least one stroke is required"));
        }
        let mut drawing = Drawing::new(width, height)?;
        let (w, h) = (width as f32, height as f32);
        let (mx, my) = (INIT_SPREAD * w, INIT_SPREAD * h);
        let mut rng = Rng32::from_seed(seed);
        drawing.strokes = (0..num_strokes)
            .map(|_| {
                let mut points = [Point2::new(rng.uniform(0.0, w), rng.uniform(0.0, h)); 4];
                for k in 1..4 {
                    let dx = rng.uniform(-mx, mx);
                    let dy = rng.uniform(-my, my);
                    points[k] = Point2::new(
                        (points[k - 1].x + dx).clamp(-mx, w + mx),
                        (points[k - 1].y + dy).clamp(-my, h + my),
                    );
                }
                let r = rng.uniform(radius.min, radius.max);
                let rgb = [rng.next_f32(), rng.next_f32(), rng.next_f32()];
                let alpha = rng.uniform(0.5, 1.0);
                Stroke {
                    points,
                    radius: r,
                    color: [rgb[0], rgb[1], rgb[2], alpha],
                }
            })
            .collect();
        Ok(drawing)
    }

    /// Colors clipped to [0, 1] and radii to `range`; control points are
    /// left alone.
    pub fn clamp(&mut self, range: RadiusRange) {
        for s in &mut self.strokes {
            s.radius = s.radius.clamp(range.min, range.max);
            if s.radius.is_nan() {
                s.radius = range.min;
            }
            for c in &mut s.color {
                *c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
            }
        }
    }

    pub fn clamped(&self, range: RadiusRange) -> Drawing {
        let mut d = self.clone();
        d.clamp(range);
        d
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// The three separately optimized parameter groups of a drawing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroups {
    /// (n, 4, 2) control points.
    pub trajectories: Tensor,
    /// (n) radii.
    pub radii: Tensor,
    /// (n, 4) RGBA.
    pub colors: Tensor,
}

/// Param groups recorded as gradient-requiring leaves on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GroupVars<'t> {
    pub trajectories: Var<'t>,
    pub radii: Var<'t>,
    pub colors: Var<'t>,
}

impl ParamGroups {
    pub fn from_drawing(d: &Drawing) -> Self {
        let n = d.strokes.len();
        let mut traj = Vec::with_capacity(n * 8);
        let mut radii = Vec::with_capacity(n);
        let mut colors = Vec::with_capacity(n * 4);
        for s in &d.strokes {
            for p in &s.points {
                traj.extend([p.x, p.y]);
            }
            radii.push(s.radius);
            colors.extend(s.color);
        }
        ParamGroups {
            trajectories: Tensor::from_vec(vec![n, 4, 2], traj).expect("trajectory shape"),
            radii: Tensor::from_vec(vec![n], radii).expect("radius shape"),
            colors: Tensor::from_vec(vec![n, 4], colors).expect("color shape"),
        }
    }

    pub fn num_strokes(&self) -> usize {
        self.radii.numel()
    }

    /// Write the group values back into the strokes of `d`.
    pub fn write_into(&self, d: &mut Drawing) -> Result<()> {
        let n = self.num_strokes();
        if d.strokes.len() != n || self.trajectories.shape() != [n, 4, 2] || self.colors.shape() != [n, 4] {
            return Err(Error::config(format!(
                "parameter groups for {} strokes do not fit a drawing with {}",
                n,
                d.strokes.len()
            )));
        }
        let t = self.trajectories.data();
        let c = self.colors.data();
        for (i, s) in d.strokes.iter_mut().enumerate() {
            for k in 0..4 {
                s.points[k] = Point2::new(t[i * 8 + 2 * k], t[i * 8 + 2 * k + 1]);
            }
            s.radius = self.radii.data()[i];
            s.color.copy_from_slice(&c[i * 4..i * 4 + 4]);
        }
        Ok(())
    }

    pub fn to_drawing(&self, template: &Drawing) -> Result<Drawing> {
        let mut d = template.clone();
        self.write_into(&mut d)?;
        Ok(d)
    }

    pub fn leaves<'t>(&self, tape: &'t Tape) -> GroupVars<'t> {
        GroupVars {
            trajectories: tape.leaf(self.trajectories.clone()),
            radii: tape.leaf(self.radii.clone()),
            colors: tape.leaf(self.colors.clone()),
        }
    }
}
