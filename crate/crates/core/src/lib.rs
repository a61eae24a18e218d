//! Text-and-style guided brush-stroke drawing.
//!
//! A [`Drawing`] of Bézier brush strokes is rendered by a differentiable
//! rasterizer, encoded by an image encoder, and optimized with RMSProp
//! against a content loss (cosine similarity to a text embedding under
//! random crops and perspective warps) and a style loss (relaxed earth
//! mover's distance between early-layer features of the drawing and a
//! style image).

pub mod augment;
pub mod demo;
pub mod encoders;
pub mod error;
pub mod io;
pub mod losses;
pub mod optimize;
pub mod raster;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
pub use raster::{rasterize, render, RasterOptions};
pub use rng::Rng32;
pub use scene::{Drawing, GroupVars, ParamGroups, Point2, RadiusRange, Stroke};
pub use stylestroke_tensor as tensor;
