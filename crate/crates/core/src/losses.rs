//! Content loss, relaxed earth mover's distance style loss, and their
//! weighted combination.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stylestroke_tensor::ops::matmul_into;
use stylestroke_tensor::{pairwise_sum, Tape, Tensor, TensorError, Var};

use crate::augment::{self, AugmentConfig};
use crate::encoders::{gather_features, sample_coords, Embedding, Encoders, ImageEncoder, StyleFeatureExtractor};
use crate::error::{Error, Result};
use crate::raster::{rasterize, RasterOptions};
use crate::rng::Rng32;
use crate::scene::GroupVars;

/// Loss values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub content: f32,
    pub style: f32,
    pub combined: f32,
}

impl LossReport {
    /// `combined` is always recomputed as `λ₁·content + λ₂·style`.
    pub fn new(content: f32, style: f32, weights: LossWeights) -> Self {
        LossReport {
            content,
            style,
            combined: weights.content * content + weights.style * style,
        }
    }
}

/// λ₁ (content) and λ₂ (style).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub content: f32,
    pub style: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            content: 1.0,
            style: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.content >= 0.0 && self.style >= 0.0) || !self.content.is_finite() || !self.style.is_finite() {
            return Err(Error::config(format!(
                "loss weights must be finite and non-negative, got {} and {}",
                self.content, self.style
            )));
        }
        if self.content == 0.0 && self.style == 0.0 {
            return Err(Error::config("content and style weights cannot both be zero"));
        }
        Ok(())
    }
}

/// `a·b / (‖a‖‖b‖)`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::config(format!(
            "cosine of vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0) as f32)
}

/// `-mean_k cos(Enc(view_k), text)` over augmented views of a (3, H, W)
/// raster.
pub fn content_loss<'t>(
    raster: Var<'t>,
    text: &Embedding,
    encoder: &dyn ImageEncoder,
    aug: &AugmentConfig,
    rng: &mut Rng32,
) -> Result<Var<'t>> {
    text.check_dim(encoder.embed_dim())?;
    let views = augment::augment_batch(raster, aug, rng, encoder.input_size())?;
    let emb = encoder.embed(views)?;
    let t = raster.tape().constant(text.to_tensor().reshaped(vec![text.dim(), 1])?);
    Ok(emb.matmul(t)?.mean_all().neg())
}

/// Cosine between the embedding of the unaugmented raster (resized to the
/// encoder input) and the text embedding.
pub fn raster_cosine(raster: &Tensor, text: &Embedding, encoder: &dyn ImageEncoder) -> Result<f32> {
    text.check_dim(encoder.embed_dim())?;
    let tape = Tape::new();
    let x = augment::resize(tape.constant(raster.clone()), encoder.input_size())?;
    let e = encoder.embed(x)?.value();
    cosine_similarity(e.data(), text.as_slice())
}

fn unit_rows(x: &Tensor) -> (Vec<f32>, Vec<f32>) {
    let c = x.shape()[1];
    let mut out = x.data().to_vec();
    let mut norms = Vec::with_capacity(x.shape()[0]);
    for row in out.chunks_mut(c) {
        let n = row.iter().map(|v| v * v).sum::<f32>().sqrt();
        norms.push(n);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    (out, norms)
}

/// Relaxed earth mover's distance between feature sets A (M, C) and B (N, C):
/// `max(mean_i min_j C_ij, mean_j min_i C_ij)` with `C_ij = 1 - cos(a_i, b_j)`.
///
/// A zero vector has cosine 0 with every non-zero vector; two zero vectors
/// cost 0. Minimum ties go to the lowest index; when both directed means are
/// equal the A-to-B side is used.
pub fn remd<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let av = a.value();
    let bv = b.value();
    let (m, c, n) = match (av.shape(), bv.shape()) {
        ([m, c], [n, c2]) if c == c2 && *m > 0 && *n > 0 => (*m, *c, *n),
        (sa, sb) => {
            return Err(Error::Tensor(TensorError::InvalidShape(format!(
                "remd expects (M, C) and (N, C) with M, N >= 1, got {sa:?} and {sb:?}"
            ))))
        }
    };
    let (ah, an) = unit_rows(&av);
    let (bh, bn) = unit_rows(&bv);
    let bt = stylestroke_tensor::ops::transpose2d(&bh, n, c);
    let mut dot = vec![0.0f32; m * n];
    matmul_into(&ah, &bt, &mut dot, m, c, n);
    let cost = |i: usize, j: usize| -> f32 {
        if an[i] == 0.0 && bn[j] == 0.0 {
            0.0
        } else {
            1.0 - dot[i * n + j]
        }
    };
    let mut row_arg = vec![0usize; m];
    let mut row_min = vec![f32::INFINITY; m];
    let mut col_arg = vec![0usize; n];
    let mut col_min = vec![f32::INFINITY; n];
    for i in 0..m {
        for j in 0..n {
            let v = cost(i, j);
            if v < row_min[i] {
                row_min[i] = v;
                row_arg[i] = j;
            }
            if v < col_min[j] {
                col_min[j] = v;
                col_arg[j] = i;
            }
        }
    }
    let r = pairwise_sum(&row_min) / m as f32;
    let s = pairwise_sum(&col_min) / n as f32;
    let use_rows = r >= s;
    let value = Arc::new(Tensor::scalar(if use_rows { r } else { s }));
    let (need_a, need_b) = (a.requires_grad(), b.requires_grad());
    Ok(a.tape().record("remd", &[a, b], value, move |g| {
        let g = g.data()[0];
        // dL/dâ_i = -Σ_j w_ij b̂_j and dL/db̂_j = -Σ_i w_ij â_i
        let mut ga_hat = vec![0.0f32; m * c];
        let mut gb_hat = vec![0.0f32; n * c];
        let mut touch = |i: usize, j: usize, w: f32| {
            if an[i] == 0.0 || bn[j] == 0.0 {
                return;
            }
            for k in 0..c {
                ga_hat[i * c + k] -= w * bh[j * c + k];
                gb_hat[j * c + k] -= w * ah[i * c + k];
            }
        };
        if use_rows {
            for i in 0..m {
                touch(i, row_arg[i], g / m as f32);
            }
        } else {
            for j in 0..n {
                touch(col_arg[j], j, g / n as f32);
            }
        }
        let project = |hat: &[f32], norms: &[f32], gh: &mut [f32]| {
            for ((row, gr), &nrm) in hat.chunks(c).zip(gh.chunks_mut(c)).zip(norms) {
                if nrm == 0.0 {
                    gr.iter_mut().for_each(|v| *v = 0.0);
                    continue;
                }
                let d: f32 = row.iter().zip(gr.iter()).map(|(x, y)| x * y).sum();
                for (gv, &x) in gr.iter_mut().zip(row) {
                    *gv = (*gv - x * d) / nrm;
                }
            }
        };
        project(&ah, &an, &mut ga_hat);
        project(&bh, &bn, &mut gb_hat);
        vec![
            need_a.then(|| Tensor::from_vec(vec![m, c], ga_hat).expect("remd grad")),
            need_b.then(|| Tensor::from_vec(vec![n, c], gb_hat).expect("remd grad")),
        ]
    }))
}

/// Style-image feature maps, computed once per run.
pub struct StyleTarget {
    pub names: Vec<String>,
    pub maps: Vec<Arc<Tensor>>,
    pub input_size: usize,
}

impl StyleTarget {
    /// `image` is (3, S, S) at the extractor's input size (see
    /// [`crate::io::square_resize`]).
    pub fn new(image: &Tensor, extractor: &dyn StyleFeatureExtractor) -> Result<Self> {
        let s = extractor.input_size();
        if image.shape() != [3, s, s] {
            return Err(Error::Tensor(TensorError::InvalidShape(format!(
                "style image must be (3, {s}, {s}), got {:?}",
                image.shape()
            ))));
        }
        let tape = Tape::new();
        let maps = extractor
            .feature_maps(tape.constant(image.reshaped(vec![1, 3, s, s])?))?
            .into_iter()
            .map(|m| m.value())
            .collect();
        Ok(StyleTarget {
            names: extractor.layer_names(),
            maps,
            input_size: s,
        })
    }
}

/// Sum over tapped layers of REMD between the (unaugmented, resized) raster
/// and the style image, at `max_features` shared sampled locations per layer.
pub fn style_loss<'t>(
    raster: Var<'t>,
    target: &StyleTarget,
    extractor: &dyn StyleFeatureExtractor,
    max_features: usize,
    rng: &mut Rng32,
) -> Result<Var<'t>> {
    let x = augment::resize(raster, target.input_size)?;
    let maps = extractor.feature_maps(x)?;
    if maps.len() != target.maps.len() {
        return Err(Error::config("style target and extractor disagree on tapped layers"));
    }
    let tape = raster.tape();
    let mut total: Option<Var<'t>> = None;
    for (map, style) in maps.into_iter().zip(&target.maps) {
        let shape = map.shape();
        if shape != style.shape() {
            return Err(Error::Tensor(TensorError::InvalidShape(format!(
                "drawing features {shape:?} vs style features {:?}",
                style.shape()
            ))));
        }
        let coords = sample_coords(shape[2] * shape[3], max_features, rng)?;
        let fa = gather_features(map, &coords)?;
        let fb = gather_features(tape.constant_arc(style.clone()), &coords)?;
        let layer = remd(fa, fb)?;
        total = Some(match total {
            None => layer,
            Some(t) => t.add(layer)?,
        });
    }
    total.ok_or_else(|| Error::config("no style layers tapped"))
}

/// Everything needed to score a drawing.
pub struct Objective<'a> {
    pub encoders: &'a Encoders,
    pub text: &'a Embedding,
    pub style: &'a StyleTarget,
    pub augment: AugmentConfig,
    pub max_features: usize,
    pub raster: RasterOptions,
    pub width: u32,
    pub height: u32,
    pub background: [f32; 3],
}

impl Objective<'_> {
    /// Render the groups and evaluate the weighted loss on one tape. Terms
    /// whose weight is zero are skipped and reported as 0.
    pub fn evaluate<'t>(
        &self,
        vars: &GroupVars<'t>,
        weights: LossWeights,
        aug_rng: &mut Rng32,
        feature_rng: &mut Rng32,
    ) -> Result<(Var<'t>, LossReport)> {
        let raster = rasterize(vars, self.width, self.height, self.background, self.raster)?;
        let mut total: Option<Var<'t>> = None;
        let (mut content, mut style) = (0.0f32, 0.0f32);
        if weights.content != 0.0 {
            let l = content_loss(raster, self.text, &*self.encoders.image, &self.augment, aug_rng)?;
            content = l.item()?;
            total = Some(l.mul_scalar(weights.content));
        }
        if weights.style != 0.0 {
            let l = style_loss(
                raster,
                self.style,
                &*self.encoders.style,
                self.max_features,
                feature_rng,
            )?;
            style = l.item()?;
            let weighted = l.mul_scalar(weights.style);
            total = Some(match total {
                None => weighted,
                Some(t) => t.add(weighted)?,
            });
        }
        let total = total.ok_or_else(|| Error::config("content and style weights cannot both be zero"))?;
        Ok((total, LossReport::new(content, style, weights)))
    }
}
