//! Image encoders, style feature extractors, and text embeddings.

pub mod features;
pub mod onnx;
pub mod toy;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stylestroke_tensor::{Tensor, Var};

use crate::error::{Error, Result};

pub use features::{gather_features, sample_coords, FeatureSet, DEFAULT_MAX_FEATURES};
pub use onnx::{EncoderMetadata, OnnxEncoder};
pub use toy::ToyEncoder;

/// Maps images to embedding vectors on the tape.
pub trait ImageEncoder: Send + Sync {
    /// Expected square input side in pixels.
    fn input_size(&self) -> usize;

    fn embed_dim(&self) -> usize;

    /// (N, 3, S, S) images in [0, 1] to (N, D) unit-norm rows.
    fn embed<'t>(&self, images: Var<'t>) -> Result<Var<'t>>;
}

/// Produces the feature maps the style loss compares.
pub trait StyleFeatureExtractor: Send + Sync {
    fn input_size(&self) -> usize;

    fn layer_names(&self) -> Vec<String>;

    /// (1, 3, S, S) image in [0, 1] to one (1, C, H, W) map per tapped layer.
    fn feature_maps<'t>(&self, image: Var<'t>) -> Result<Vec<Var<'t>>>;
}

/// Which encoder a run uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EncoderChoice {
    /// Seeded random convnet. Input size `None` means "match the canvas".
    Toy { seed: u64, input_size: Option<usize> },
    /// ONNX model with its `.json` metadata sidecar.
    Onnx { path: String },
}

impl Default for EncoderChoice {
    fn default() -> Self {
        EncoderChoice::Toy {
            seed: toy::DEFAULT_SEED,
            input_size: None,
        }
    }
}

impl std::str::FromStr for EncoderChoice {
    type Err = Error;

    /// `toy`, `toy:SEED`, or `onnx:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "toy" {
            return Ok(EncoderChoice::default());
        }
        if let Some(seed) = s.strip_prefix("toy:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::config(format!("bad toy encoder seed `{seed}`")))?;
            return Ok(EncoderChoice::Toy { seed, input_size: None });
        }
        if let Some(path) = s.strip_prefix("onnx:") {
            if path.is_empty() {
                return Err(Error::config("onnx encoder needs a model path"));
            }
            return Ok(EncoderChoice::Onnx { path: path.to_string() });
        }
        Err(Error::config(format!(
            "unknown encoder `{s}` (expected toy, toy:SEED or onnx:PATH)"
        )))
    }
}

impl std::fmt::Display for EncoderChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EncoderChoice::Toy { seed, .. } => write!(f, "toy:{seed}"),
            EncoderChoice::Onnx { path } => write!(f, "onnx:{path}"),
        }
    }
}

/// The encoder pair one run works with.
#[derive(Clone)]
pub struct Encoders {
    pub image: Arc<dyn ImageEncoder>,
    pub style: Arc<dyn StyleFeatureExtractor>,
}

impl Encoders {
    /// Build the encoders for `choice`; `canvas` fills in the toy input size.
    pub fn load(choice: &EncoderChoice, canvas: usize) -> Result<Self> {
        match choice {
            EncoderChoice::Toy { seed, input_size } => {
                let enc = Arc::new(ToyEncoder::new(*seed, input_size.unwrap_or(canvas))?);
                Ok(Encoders {
                    image: enc.clone(),
                    style: enc,
                })
            }
            EncoderChoice::Onnx { path } => {
                let enc = Arc::new(OnnxEncoder::load(Path::new(path))?);
                Ok(Encoders {
                    image: enc.clone(),
                    style: enc,
                })
            }
        }
    }
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `v`; a zero or non-finite vector is rejected.
    pub fn new(v: Vec<f32>) -> Result<Self> {
        let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        if v.is_empty() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateInput("embedding has zero or non-finite norm".into()));
        }
        Ok(Embedding(v.into_iter().map(|x| (x as f64 / norm) as f32).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.0.clone())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::config(format!(
                "text embedding has dimension {} but the image encoder produces {}",
                self.dim(),
                expected
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TextEmbeddingFile = serde_json::from_str(text)?;
        if f.dim != f.embedding.len() {
            return Err(Error::Parse(format!(
                "`dim` is {} but `embedding` has {} entries",
                f.dim,
                f.embedding.len()
            )));
        }
        Embedding::new(f.embedding)
    }

    pub fn to_json(&self, model: &str) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TextEmbeddingFile {
            model: Some(model.to_string()),
            dim: self.dim(),
            embedding: self.0.clone(),
        })?)
    }
}

/// `{"model": "...", "dim": D, "embedding": [...]}`
#[derive(Serialize, Deserialize)]
struct TextEmbeddingFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    dim: usize,
    embedding: Vec<f32>,
}

pub fn load_text_embedding(path: &Path) -> Result<Embedding> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Embedding::from_json(&text)
}

/// Scale each row of an (N, D) matrix to unit length.
pub fn normalize_rows(x: Var<'_>) -> Result<Var<'_>> {
    let norm = x.mul(x)?.reduce_sum(&[1], true)?.add_scalar(1e-12).sqrt()?;
    Ok(x.div(norm)?)
}
