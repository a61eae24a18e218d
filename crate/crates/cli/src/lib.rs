//! Command-line driver: flag parsing, config merging, and run artifacts.
//!
//! Settings come from three layers, highest first: command-line flags, the
//! JSON file given with `--config`, built-in defaults. The merged settings
//! are written back as `config.json`, which `--config` accepts as is.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};
use stylestroke::encoders::{load_text_embedding, EncoderChoice, EncoderMetadata};
use stylestroke::io::{decode_png, encode_png, export_svg, write_atomic};
use stylestroke::losses::{LossReport, LossWeights};
use stylestroke::optimize::{best_of_n, Problem, RunConfig, RunResult, Schedule, Seeds};
use stylestroke::render;

#[derive(Parser, Debug, Clone, Default)]
#[command(
    name = "stylestroke",
    version,
    about = "Paint a drawing of brush strokes toward a text embedding and a style image"
)]
pub struct Cli {
    /// Style image (8-bit PNG).
    #[arg(long, value_name = "PATH")]
    pub style: Option<PathBuf>,
    /// Text embedding JSON: {"model": ..., "dim": D, "embedding": [...]}.
    #[arg(long, value_name = "PATH")]
    pub text_embedding: Option<PathBuf>,
    /// `toy`, `toy:SEED`, or `onnx:PATH` (metadata sidecar next to the model).
    #[arg(long, value_name = "ENCODER")]
    pub encoder: Option<EncoderChoice>,
    /// Output directory, created if needed.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "F")]
    pub lambda_content: Option<f32>,
    #[arg(long, value_name = "F")]
    pub lambda_style: Option<f32>,
    /// Number of strokes.
    #[arg(long, value_name = "N")]
    pub strokes: Option<usize>,
    /// Iterations per candidate.
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    /// `concerted`, `alternated:C:S`, or `sequential:C:S`. A bare
    /// `sequential` splits the iteration budget in half.
    #[arg(long, value_name = "SCHEDULE")]
    pub schedule: Option<String>,
    /// Independent runs; the one closest to the text is kept.
    #[arg(long, value_name = "N")]
    pub candidates: Option<usize>,
    /// Master seed for initialization, augmentation and feature sampling.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Augmented views per content-loss evaluation.
    #[arg(long, value_name = "N")]
    pub n_aug: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    pub canvas: Option<Vec<u32>>,
    /// Write frames/frame_NNNNN.png every K iterations (0 disables).
    #[arg(long, value_name = "K")]
    pub save_every: Option<usize>,
    /// JSON settings file; flags take precedence over it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

/// Everything a run needs, as stored in `config.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub style: Option<PathBuf>,
    pub text_embedding: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{what} not found: {}", path.display())]
    MissingFile { what: &'static str, path: PathBuf },
    #[error(transparent)]
    Run(#[from] stylestroke::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// What a finished invocation produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub out: PathBuf,
    pub selected: usize,
    pub cosines: Vec<f32>,
    pub initial: LossReport,
    pub last: LossReport,
}

/// Parse `argv` (program name first), run, and return the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(o) => {
            eprintln!(
                "candidate {} of {} kept (cosine {:.4}); combined loss {:.4} -> {:.4}; wrote {}",
                o.selected,
                o.cosines.len(),
                o.cosines[o.selected],
                o.initial.combined,
                o.last.combined,
                o.out.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn require_file(what: &'static str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile {
            what,
            path: path.to_path_buf(),
        })
    }
}

/// Merge defaults, the config file, and flags.
pub fn resolve(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            require_file("config file", path)?;
            let text = std::fs::read_to_string(path).map_err(|e| stylestroke::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str::<CliConfig>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => CliConfig::default(),
    };
    let run = &mut cfg.run;
    if let Some(p) = &cli.style {
        cfg.style = Some(p.clone());
    }
    if let Some(p) = &cli.text_embedding {
        cfg.text_embedding = Some(p.clone());
    }
    if let Some(p) = &cli.out {
        cfg.out = Some(p.clone());
    }
    if let Some(e) = &cli.encoder {
        run.encoder = e.clone();
    }
    if let Some(v) = cli.lambda_content {
        run.weights.content = v;
    }
    if let Some(v) = cli.lambda_style {
        run.weights.style = v;
    }
    if let Some(v) = cli.strokes {
        run.num_strokes = v;
    }
    if let Some(v) = cli.iters {
        run.iterations = v;
    }
    if let Some(v) = cli.candidates {
        run.candidates = v;
    }
    if let Some(v) = cli.seed {
        run.seeds = Seeds::from_master(v);
    }
    if let Some(v) = cli.n_aug {
        run.n_aug = v;
    }
    if let Some(v) = &cli.canvas {
        run.width = v[0];
        run.height = v[1];
    }
    if let Some(v) = cli.save_every {
        run.save_every = v;
    }
    if let Some(s) = &cli.schedule {
        run.schedule = if s == "sequential" {
            let content = run.iterations / 2;
            Schedule::Sequential {
                content,
                style: run.iterations - content,
            }
        } else {
            s.parse()
                .map_err(|e: stylestroke::Error| CliError::Usage(e.to_string()))?
        };
        if let (Schedule::Sequential { content, style }, None) = (run.schedule, cli.iters) {
            run.iterations = content + style;
        }
    }
    run.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn losses_csv(history: &RunResult, weights: LossWeights) -> String {
    let mut s = String::from("iter,content,style,combined,phase\n");
    for h in &history.history {
        debug_assert_eq!(h.report, LossReport::new(h.report.content, h.report.style, weights));
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            h.iteration, h.report.content, h.report.style, h.report.combined, h.phase
        );
    }
    s
}

#[derive(Serialize)]
struct TimingFile<'a> {
    phases: &'a std::collections::BTreeMap<String, f64>,
    selected_run_seconds: f64,
    wall_clock_seconds: f64,
    candidates: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    selected: usize,
    cosines: &'a [f32],
    seeds: Seeds,
    initial: LossReport,
    last: LossReport,
    final_cosine: f32,
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(stylestroke::Error::from)?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Run best-of-N for the merged settings and write every artifact.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = resolve(cli)?;
    let missing = |flag: &str| CliError::Usage(format!("--{flag} is required (on the command line or in --config)"));
    let style_path = cfg.style.clone().ok_or_else(|| missing("style"))?;
    let text_path = cfg.text_embedding.clone().ok_or_else(|| missing("text-embedding"))?;
    let out = cfg.out.clone().ok_or_else(|| missing("out"))?;
    require_file("style image", &style_path)?;
    require_file("text embedding", &text_path)?;
    if let EncoderChoice::Onnx { path } = &cfg.run.encoder {
        let model = Path::new(path);
        require_file("encoder model", model)?;
        require_file("encoder metadata", &EncoderMetadata::sidecar_path(model))?;
    }

    let start = Instant::now();
    let style = decode_png(&style_path)?;
    let text = load_text_embedding(&text_path)?;
    let problem = Problem::for_config(&cfg.run, text, &style)?;
    let selection = best_of_n(&cfg.run, &problem)?;
    let best = &selection.best;
    let wall = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&out).map_err(|e| stylestroke::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    encode_png(&render(&best.drawing, cfg.run.raster())?, &out.join("final.png"))?;
    export_svg(&best.drawing, &out.join("final.svg"))?;
    best.drawing.save(&out.join("drawing.json"))?;
    write_atomic(&out.join("losses.csv"), losses_csv(best, cfg.run.weights).as_bytes())?;
    write_atomic(
        &out.join("timing.json"),
        &json(&TimingFile {
            phases: &best.timings.phases,
            selected_run_seconds: best.timings.total,
            wall_clock_seconds: wall,
            candidates: cfg.run.candidates,
        })?,
    )?;
    write_atomic(
        &out.join("summary.json"),
        &json(&Summary {
            selected: selection.index,
            cosines: &selection.cosines,
            seeds: best.seeds,
            initial: best.initial,
            last: best.last,
            final_cosine: best.final_cosine,
        })?,
    )?;
    write_atomic(&out.join("config.json"), &json(&cfg)?)?;
    if !best.snapshots.is_empty() {
        let frames = out.join("frames");
        std::fs::create_dir_all(&frames).map_err(|e| stylestroke::Error::Io {
            path: frames.clone(),
            source: e,
        })?;
        for (i, d) in &best.snapshots {
            encode_png(&render(d, cfg.run.raster())?, &frames.join(format!("frame_{i:05}.png")))?;
        }
    }
    Ok(Outcome {
        out,
        selected: selection.index,
        cosines: selection.cosines.clone(),
        initial: best.initial,
        last: best.last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("stylestroke").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_when_flags_are_omitted() {
        let cfg = resolve(&parse(&[])).unwrap();
        assert_eq!(cfg.run, RunConfig::default());
        assert_eq!(
            cfg.run.weights,
            LossWeights {
                content: 1.0,
                style: 1.0
            }
        );
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&[
            "--lambda-content",
            "2",
            "--lambda-style",
            "0.5",
            "--strokes",
            "9",
            "--iters",
            "12",
            "--schedule",
            "alternated:3:4",
            "--candidates",
            "2",
            "--seed",
            "5",
            "--n-aug",
            "3",
            "--canvas",
            "64",
            "48",
            "--save-every",
            "4",
            "--encoder",
            "toy:3",
        ]);
        let r = resolve(&cli).unwrap().run;
        assert_eq!(
            r.weights,
            LossWeights {
                content: 2.0,
                style: 0.5
            }
        );
        assert_eq!((r.num_strokes, r.iterations, r.candidates, r.n_aug), (9, 12, 2, 3));
        assert_eq!(r.schedule, Schedule::Alternated { content: 3, style: 4 });
        assert_eq!(r.seeds, Seeds::from_master(5));
        assert_eq!((r.width, r.height, r.save_every), (64, 48, 4));
        assert_eq!(
            r.encoder,
            EncoderChoice::Toy {
                seed: 3,
                input_size: None
            }
        );
    }

    #[test]
    fn sequential_schedules_fit_the_budget() {
        let r = resolve(&parse(&["--schedule", "sequential", "--iters", "9"]))
            .unwrap()
            .run;
        assert_eq!(r.schedule, Schedule::Sequential { content: 4, style: 5 });
        let r = resolve(&parse(&["--schedule", "sequential:6:2"])).unwrap().run;
        assert_eq!(r.iterations, 8);
        let e = resolve(&parse(&["--schedule", "sequential:6:2", "--iters", "3"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn config_file_sits_between_defaults_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"num_strokes": 17, "iterations": 30, "style": "s.png"}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve(&parse(&["--config", p, "--iters", "5"])).unwrap();
        assert_eq!(cfg.run.num_strokes, 17);
        assert_eq!(cfg.run.iterations, 5);
        assert_eq!(cfg.style, Some(PathBuf::from("s.png")));
        assert_eq!(cfg.run.candidates, RunConfig::default().candidates);
    }

    #[test]
    fn written_config_round_trips() {
        let cli = parse(&[
            "--strokes",
            "9",
            "--schedule",
            "alternated:2:2",
            "--out",
            "x",
            "--seed",
            "3",
        ]);
        let cfg = resolve(&cli).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, json(&cfg).unwrap()).unwrap();
        let again = resolve(&parse(&["--config", path.to_str().unwrap()])).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert!(Cli::try_parse_from(["stylestroke", "--strokes", "many"]).is_err());
        assert!(Cli::try_parse_from(["stylestroke", "--canvas", "64"]).is_err());
        assert!(Cli::try_parse_from(["stylestroke", "--encoder", "vgg"]).is_err());
        assert_eq!(
            resolve(&parse(&["--schedule", "sometimes"])).unwrap_err().exit_code(),
            2
        );
        assert_eq!(resolve(&parse(&["--iters", "0"])).unwrap_err().exit_code(), 2);
    }
}
