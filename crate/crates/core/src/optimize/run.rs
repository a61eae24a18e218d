use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stylestroke_tensor::{Tape, Tensor};

use super::config::{Phase, RunConfig, Seeds};
use super::rmsprop::Rmsprop;
use crate::encoders::{Embedding, Encoders};
use crate::error::Result;
use crate::io::square_resize;
use crate::losses::{raster_cosine, LossReport, LossWeights, Objective, StyleTarget};
use crate::raster::render;
use crate::rng::{derive_seed, Rng32};
use crate::scene::{Drawing, ParamGroups, RadiusRange};

/// Sub-stream index used for the fixed evaluation before and after a run.
const EVAL_STREAM: u64 = u64::MAX;

/// The fixed inputs of an optimization: encoders, text target, style target.
pub struct Problem {
    pub encoders: Encoders,
    pub text: Embedding,
    pub style: StyleTarget,
}

impl Problem {
    /// `style_image` is any (3, H, W) image; it is center-cropped and resized
    /// to the style extractor's input size.
    pub fn new(encoders: Encoders, text: Embedding, style_image: &Tensor) -> Result<Self> {
        text.check_dim(encoders.image.embed_dim())?;
        let resized = square_resize(style_image, encoders.style.input_size())?;
        let style = StyleTarget::new(&resized, &*encoders.style)?;
        Ok(Problem { encoders, text, style })
    }

    /// Load the encoders named by `config` (toy input size follows the canvas).
    pub fn for_config(config: &RunConfig, text: Embedding, style_image: &Tensor) -> Result<Self> {
        let canvas = config.width.max(config.height) as usize;
        Self::new(Encoders::load(&config.encoder, canvas)?, text, style_image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub phase: Phase,
    pub report: LossReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Seconds spent in iterations of each phase.
    pub phases: BTreeMap<String, f64>,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub drawing: Drawing,
    /// One entry per iteration: the losses evaluated before that
    /// iteration's step. Terms not evaluated in a phase are recorded as 0.
    pub history: Vec<HistoryEntry>,
    pub timings: Timings,
    /// Both terms at initialization, with a fixed evaluation stream.
    pub initial: LossReport,
    /// Both terms for the final drawing, with the same evaluation stream.
    pub last: LossReport,
    /// Cosine between the embedding of the final unaugmented raster and the
    /// text embedding.
    pub final_cosine: f32,
    /// `(iterations done, drawing)` every `save_every` iterations.
    pub snapshots: Vec<(usize, Drawing)>,
    pub seeds: Seeds,
}

fn objective<'a>(config: &RunConfig, problem: &'a Problem, template: &Drawing) -> Objective<'a> {
    Objective {
        encoders: &problem.encoders,
        text: &problem.text,
        style: &problem.style,
        augment: config.augment(),
        max_features: config.max_features,
        raster: config.raster(),
        width: template.width,
        height: template.height,
        background: template.background,
    }
}

/// Both loss terms with evaluation streams derived from `seeds`.
fn full_report(obj: &Objective, groups: &ParamGroups, weights: LossWeights, seeds: &Seeds) -> Result<LossReport> {
    let tape = Tape::new();
    let vars = groups.leaves(&tape);
    let mut aug = Rng32::from_seed(derive_seed(seeds.augment, EVAL_STREAM));
    let mut feat = Rng32::from_seed(derive_seed(seeds.features, EVAL_STREAM));
    let both = LossWeights {
        content: 1.0,
        style: 1.0,
    };
    let (_, r) = obj.evaluate(&vars, both, &mut aug, &mut feat)?;
    Ok(LossReport::new(r.content, r.style, weights))
}

fn clamp_groups(groups: &mut ParamGroups, range: RadiusRange) {
    for r in groups.radii.data_mut() {
        *r = if r.is_nan() {
            range.min
        } else {
            r.clamp(range.min, range.max)
        };
    }
    for c in groups.colors.data_mut() {
        *c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
    }
}

/// One optimization from random initialization.
pub fn run(config: &RunConfig, problem: &Problem) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let seeds = config.seeds;
    let template = Drawing::init_random(config.num_strokes, config.width, config.height, seeds.init)?;
    let obj = objective(config, problem, &template);
    let mut groups = ParamGroups::from_drawing(&template);
    let initial = full_report(&obj, &groups, config.weights, &seeds)?;

    let lr = config.learning_rates;
    let mut opt_traj = Rmsprop::new(groups.trajectories.shape(), lr.trajectories);
    let mut opt_rad = Rmsprop::new(groups.radii.shape(), lr.radii);
    let mut opt_col = Rmsprop::new(groups.colors.shape(), lr.colors);
    let mut aug_rng = Rng32::from_seed(seeds.augment);
    let mut feat_rng = Rng32::from_seed(seeds.features);

    let mut history = Vec::with_capacity(config.iterations);
    let mut timings = Timings::default();
    let mut snapshots = Vec::new();
    for i in 0..config.iterations {
        let t0 = Instant::now();
        let phase = config.schedule.phase_at(i);
        let tape = Tape::new();
        let vars = groups.leaves(&tape);
        let (loss, report) = obj.evaluate(&vars, phase.weights(config.weights), &mut aug_rng, &mut feat_rng)?;
        let grads = tape.backward(loss)?;
        opt_traj.step(&mut groups.trajectories, grads.wrt(vars.trajectories))?;
        opt_rad.step(&mut groups.radii, grads.wrt(vars.radii))?;
        opt_col.step(&mut groups.colors, grads.wrt(vars.colors))?;
        drop(grads);
        drop(tape);
        clamp_groups(&mut groups, RadiusRange::default());
        history.push(HistoryEntry {
            iteration: i,
            phase,
            report: LossReport::new(report.content, report.style, config.weights),
        });
        if config.save_every > 0 && (i + 1) % config.save_every == 0 {
            snapshots.push((i + 1, groups.to_drawing(&template)?));
        }
        *timings.phases.entry(phase.as_str().to_string()).or_default() += t0.elapsed().as_secs_f64();
    }

    let drawing = groups.to_drawing(&template)?;
    let last = full_report(&obj, &groups, config.weights, &seeds)?;
    let final_cosine = raster_cosine(
        &render(&drawing, config.raster())?,
        &problem.text,
        &*problem.encoders.image,
    )?;
    timings.total = start.elapsed().as_secs_f64();
    Ok(RunResult {
        drawing,
        history,
        timings,
        initial,
        last,
        final_cosine,
        snapshots,
        seeds,
    })
}

/// Outcome of best-of-N selection.
#[derive(Debug, Clone)]
pub struct Selection {
    pub best: RunResult,
    pub index: usize,
    /// Final cosine of every candidate, by index.
    pub cosines: Vec<f32>,
}

/// `config.candidates` independent runs (candidate `k` uses
/// `config.seeds.candidate(k)`); keeps the one whose final raster embedding
/// is most similar to the text, the lowest index on ties.
pub fn best_of_n(config: &RunConfig, problem: &Problem) -> Result<Selection> {
    config.validate()?;
    let results: Vec<RunResult> = (0..config.candidates)
        .into_par_iter()
        .map(|k| {
            let cfg = RunConfig {
                seeds: config.seeds.candidate(k),
                ..config.clone()
            };
            run(&cfg, problem)
        })
        .collect::<Result<_>>()?;
    let cosines: Vec<f32> = results.iter().map(|r| r.final_cosine).collect();
    let mut index = 0;
    for (k, &c) in cosines.iter().enumerate() {
        if c > cosines[index] {
            index = k;
        }
    }
    let best = results.into_iter().nth(index).expect("at least one candidate");
    Ok(Selection { best, index, cosines })
}
