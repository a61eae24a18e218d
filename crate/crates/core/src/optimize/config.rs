use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rmsprop::LearningRates;
use crate::augment::AugmentConfig;
use crate::encoders::{EncoderChoice, DEFAULT_MAX_FEATURES};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::raster::{RasterOptions, DEFAULT_SIGMA};
use crate::rng::derive_seed;
use crate::scene::{DEFAULT_CANVAS, DEFAULT_STROKES};

pub const DEFAULT_ITERATIONS: usize = 250;
pub const DEFAULT_BLOCK: usize = 50;
pub const DEFAULT_CANDIDATES: usize = 4;

/// How the two loss terms share the iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Schedule {
    /// Weighted sum every iteration.
    Concerted,
    /// `content` content-only iterations, then `style` style-only ones,
    /// repeating.
    Alternated { content: usize, style: usize },
    /// All content iterations first, then all style iterations.
    Sequential { content: usize, style: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Joint,
    Content,
    Style,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Joint => "joint",
            Phase::Content => "content",
            Phase::Style => "style",
        }
    }

    /// The weights in effect during this phase.
    pub fn weights(self, w: LossWeights) -> LossWeights {
        match self {
            Phase::Joint => w,
            Phase::Content => LossWeights {
                content: w.content,
                style: 0.0,
            },
            Phase::Style => LossWeights {
                content: 0.0,
                style: w.style,
            },
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Schedule {
    pub fn phase_at(&self, iteration: usize) -> Phase {
        match *self {
            Schedule::Concerted => Phase::Joint,
            Schedule::Alternated { content, style } => {
                if iteration % (content + style) < content {
                    Phase::Content
                } else {
                    Phase::Style
                }
            }
            Schedule::Sequential { content, .. } => {
                if iteration < content {
                    Phase::Content
                } else {
                    Phase::Style
                }
            }
        }
    }

    /// Iteration count implied by the schedule, if any.
    pub fn implied_iterations(&self) -> Option<usize> {
        match *self {
            Schedule::Sequential { content, style } => Some(content + style),
            _ => None,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Concerted => write!(f, "concerted"),
            Schedule::Alternated { content, style } => write!(f, "alternated:{content}:{style}"),
            Schedule::Sequential { content, style } => write!(f, "sequential:{content}:{style}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// `concerted`, `alternated[:C:S]`, `sequential[:C:S]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let blocks = |default: usize| -> Result<(usize, usize)> {
            match parts.len() {
                1 => Ok((default, default)),
                3 => {
                    let p = |t: &str| {
                        t.parse::<usize>()
                            .map_err(|_| Error::config(format!("bad block size `{t}` in schedule `{s}`")))
                    };
                    Ok((p(parts[1])?, p(parts[2])?))
                }
                _ => Err(Error::config(format!("schedule `{s}` must look like KIND or KIND:C:S"))),
            }
        };
        match parts[0] {
            "concerted" if parts.len() == 1 => Ok(Schedule::Concerted),
            "alternated" => {
                let (content, style) = blocks(DEFAULT_BLOCK)?;
                Ok(Schedule::Alternated { content, style })
            }
            "sequential" => {
                let (content, style) = blocks(DEFAULT_ITERATIONS)?;
                Ok(Schedule::Sequential { content, style })
            }
            _ => Err(Error::config(format!(
                "unknown schedule `{s}` (expected concerted, alternated:C:S or sequential:C:S)"
            ))),
        }
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Schedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Seeds of the three random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub augment: u64,
    pub features: u64,
}

impl Seeds {
    pub fn from_master(seed: u64) -> Self {
        Seeds {
            init: derive_seed(seed, 0),
            augment: derive_seed(seed, 1),
            features: derive_seed(seed, 2),
        }
    }

    /// Seeds of best-of-N candidate `k`; candidate 0 uses these seeds as is.
    pub fn candidate(&self, k: usize) -> Self {
        if k == 0 {
            return *self;
        }
        let k = k as u64;
        Seeds {
            init: derive_seed(self.init, k),
            augment: derive_seed(self.augment, k),
            features: derive_seed(self.features, k),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_master(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub weights: LossWeights,
    pub num_strokes: usize,
    pub iterations: usize,
    pub schedule: Schedule,
    pub seeds: Seeds,
    pub encoder: EncoderChoice,
    pub n_aug: usize,
    pub max_features: usize,
    pub sigma: f32,
    pub candidates: usize,
    pub width: u32,
    pub height: u32,
    pub learning_rates: LearningRates,
    /// Keep a snapshot every this many iterations (0 keeps none).
    pub save_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            weights: LossWeights::default(),
            num_strokes: DEFAULT_STROKES,
            iterations: DEFAULT_ITERATIONS,
            schedule: Schedule::Concerted,
            seeds: Seeds::default(),
            encoder: EncoderChoice::default(),
            n_aug: AugmentConfig::default().n_views,
            max_features: DEFAULT_MAX_FEATURES,
            sigma: DEFAULT_SIGMA,
            candidates: DEFAULT_CANDIDATES,
            width: DEFAULT_CANVAS,
            height: DEFAULT_CANVAS,
            learning_rates: LearningRates::default(),
            save_every: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if self.num_strokes == 0 {
            return Err(Error::config("at least one stroke is required"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("canvas must be non-empty"));
        }
        if self.n_aug == 0 || self.max_features == 0 || self.candidates == 0 {
            return Err(Error::config("n_aug, max_features and candidates must be at least 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be positive, got {}", self.sigma)));
        }
        let lr = self.learning_rates;
        if [lr.trajectories, lr.radii, lr.colors]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::config("learning rates must be finite and non-negative"));
        }
        match self.schedule {
            Schedule::Concerted => {}
            Schedule::Alternated { content, style } | Schedule::Sequential { content, style } => {
                if content == 0 || style == 0 {
                    return Err(Error::config("schedule block sizes must be at least 1"));
                }
                if self.weights.content == 0.0 || self.weights.style == 0.0 {
                    return Err(Error::config(format!(
                        "the {} schedule needs both loss weights positive",
                        self.schedule
                    )));
                }
                if let Some(n) = self.schedule.implied_iterations() {
                    if n != self.iterations {
                        return Err(Error::config(format!(
                            "schedule {} needs exactly {n} iterations, got {}",
                            self.schedule, self.iterations
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            n_views: self.n_aug,
            ..AugmentConfig::default()
        }
    }

    pub fn raster(&self) -> RasterOptions {
        RasterOptions {
            sigma: self.sigma,
            ..RasterOptions::default()
        }
    }
}
