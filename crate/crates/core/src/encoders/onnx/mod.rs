//! ONNX subset loader and executor.
//!
//! Models are read with a hand-declared protobuf schema (see [`proto`]) and
//! executed node by node on the gradient tape, so gradients flow back to
//! the image input through every supported op.

mod exec;
mod graph;
pub mod proto;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stylestroke_tensor::{Tape, Tensor, TensorError, Var};

use super::{normalize_rows, ImageEncoder, StyleFeatureExtractor};
use crate::error::{Error, Result};

pub use graph::{Constant, Graph, GraphInput, Node, Op};

/// Sidecar next to a model (same path, `.json` extension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMetadata {
    pub input_size: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    /// Values tapped for the style loss.
    #[serde(default)]
    pub taps: Vec<String>,
    /// Value used as the embedding; the first graph output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl EncoderMetadata {
    pub fn sidecar_path(model: &Path) -> PathBuf {
        model.with_extension("json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: EncoderMetadata = serde_json::from_str(&text)?;
        if meta.input_size == 0 || meta.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config(format!(
                "{}: input_size must be positive and std entries > 0",
                path.display()
            )));
        }
        Ok(meta)
    }
}

/// An ONNX graph used as image encoder and style feature extractor.
pub struct OnnxEncoder {
    graph: Arc<Graph>,
    meta: EncoderMetadata,
    input: String,
    output: String,
    embed_dim: usize,
    /// Whether the graph accepts a batch of views in one pass.
    batched: bool,
}

impl OnnxEncoder {
    /// Load `model` and its `.json` sidecar.
    pub fn load(model: &Path) -> Result<Self> {
        let graph = Graph::load(model)?;
        let meta = EncoderMetadata::load(&EncoderMetadata::sidecar_path(model))?;
        Self::new(Arc::new(graph), meta)
    }

    pub fn new(graph: Arc<Graph>, meta: EncoderMetadata) -> Result<Self> {
        let input = graph.inputs[0].name.clone();
        let output = match &meta.output {
            Some(o) => o.clone(),
            None => graph
                .outputs
                .first()
                .cloned()
                .ok_or_else(|| Error::config("graph declares no outputs"))?,
        };
        let batched = graph.inputs[0].dims.first().is_some_and(|d| d.is_none());
        let mut enc = OnnxEncoder {
            graph,
            meta,
            input,
            output,
            embed_dim: 0,
            batched,
        };
        // one dry run fixes the embedding width and validates the taps
        let s = enc.meta.input_size;
        let tape = Tape::new();
        let probe = tape.constant(Tensor::full(vec![1, 3, s, s], 0.5));
        enc.embed_dim = enc.raw_embed(probe)?.shape()[1];
        if !enc.meta.taps.is_empty() {
            enc.feature_maps(probe)?;
        }
        Ok(enc)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn metadata(&self) -> &EncoderMetadata {
        &self.meta
    }

    fn normalize<'t>(&self, images: Var<'t>) -> Result<Var<'t>> {
        let shape = images.shape();
        let s = self.meta.input_size;
        match shape[..] {
            [_, 3, h, w] if h == s && w == s => {}
            _ => {
                return Err(Error::Tensor(TensorError::InvalidShape(format!(
                    "encoder expects (N, 3, {s}, {s}), got {shape:?}"
                ))))
            }
        }
        let tape = images.tape();
        let mean = tape.constant(Tensor::from_vec(vec![1, 3, 1, 1], self.meta.mean.to_vec())?);
        let inv_std = tape.constant(Tensor::from_vec(
            vec![1, 3, 1, 1],
            self.meta.std.iter().map(|v| 1.0 / v).collect(),
        )?);
        Ok(images.sub(mean)?.mul(inv_std)?)
    }

    /// Unnormalized (N, D) output.
    fn raw_embed<'t>(&self, images: Var<'t>) -> Result<Var<'t>> {
        let x = self.normalize(images)?;
        let n = x.shape()[0];
        let tape = x.tape();
        let flat = |v: Var<'t>, rows: usize| -> Result<Var<'t>> {
            let d = v.numel() / rows.max(1);
            Ok(v.reshape(&[rows, d])?)
        };
        if self.batched || n == 1 {
            let y = self
                .graph
                .run(tape, &[(self.input.as_str(), x)], &[self.output.as_str()])?[0];
            return flat(y, n);
        }
        let rows = (0..n)
            .map(|k| {
                let xk = x.slice(0, k, k + 1, 1)?;
                let y = self
                    .graph
                    .run(tape, &[(self.input.as_str(), xk)], &[self.output.as_str()])?[0];
                flat(y, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Var::concat(&rows, 0)?)
    }
}

impl ImageEncoder for OnnxEncoder {
    fn input_size(&self) -> usize {
        self.meta.input_size
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn embed<'t>(&self, images: Var<'t>) -> Result<Var<'t>> {
        normalize_rows(self.raw_embed(images)?)
    }
}

impl StyleFeatureExtractor for OnnxEncoder {
    fn input_size(&self) -> usize {
        self.meta.input_size
    }

    fn layer_names(&self) -> Vec<String> {
        self.meta.taps.clone()
    }

    fn feature_maps<'t>(&self, image: Var<'t>) -> Result<Vec<Var<'t>>> {
        if self.meta.taps.is_empty() {
            return Err(Error::config("encoder metadata lists no style taps"));
        }
        let x = self.normalize(image)?;
        let taps: Vec<&str> = self.meta.taps.iter().map(String::as_str).collect();
        let maps = self.graph.run(x.tape(), &[(self.input.as_str(), x)], &taps)?;
        for (m, name) in maps.iter().zip(&taps) {
            let shape = m.shape();
            if shape.len() != 4 || shape[0] != 1 {
                return Err(Error::Tensor(TensorError::InvalidShape(format!(
                    "style tap `{name}` must be (1, C, H, W), got {shape:?}"
                ))));
            }
        }
        Ok(maps)
    }
}
