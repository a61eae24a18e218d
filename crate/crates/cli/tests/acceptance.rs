//! Acceptance criteria for the whole pipeline, one PASS/FAIL line each.
//!
//! Lines are written straight to stdout so they appear in the test log even
//! when libtest captures output. Every criterion runs even if an earlier one
//! fails; the test fails at the end if any did.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Deserialize;
use stylestroke::augment::AugmentConfig;
use stylestroke::demo;
use stylestroke::encoders::onnx::Graph;
use stylestroke::encoders::{EncoderChoice, Encoders};
use stylestroke::io::encode_png;
use stylestroke::losses::{remd, LossReport, LossWeights, Objective, StyleTarget};
use stylestroke::optimize::{run, LearningRates, Problem, RunConfig, Seeds};
use stylestroke::raster::{bezier_point, coverage, render, RasterOptions};
use stylestroke::tensor::gradcheck::{central_differences, normwise_relative_error};
use stylestroke::tensor::ops::identity_grid;
use stylestroke::tensor::{Conv2dParams, Pool2dParams, Tape, Tensor, Var};
use stylestroke::{Drawing, ParamGroups, Point2, Rng32, Stroke};
use stylestroke_cli::{resolve, run_command, Cli};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let mut out = std::io::stdout();
    let _ = writeln!(
        out,
        "[{}] criterion {n}: {name} ({}) [{:.1}s]",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        start.elapsed().as_secs_f64()
    );
    let _ = out.flush();
    v.pass
}

// ---------------------------------------------------------------- 1

fn seeded(shape: &[usize], rng: &mut Rng32, lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Worst norm-wise error of d/d(input k) Σ w ⊙ op(inputs) over all inputs.
fn op_error(inputs: &[Tensor], op: &dyn for<'t> Fn(&[Var<'t>]) -> Var<'t>) -> f64 {
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = op(&vars);
    let weights = seeded(&out.shape(), &mut Rng32::from_seed(5), -1.0, 1.0);
    let grads = tape
        .backward(out.mul(tape.constant(weights.clone())).unwrap().sum_all())
        .unwrap();
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = grads.wrt(vars[k]).data().iter().map(|&v| v as f64).collect();
        let idx: Vec<usize> = (0..input.numel()).collect();
        let numeric = central_differences(
            |probe| {
                let tape = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let t = if j == k {
                            Tensor::from_vec(t.shape().to_vec(), probe.to_vec()).unwrap()
                        } else {
                            t.clone()
                        };
                        tape.constant(t)
                    })
                    .collect();
                let y = op(&vs).value();
                y.data()
                    .iter()
                    .zip(weights.data())
                    .map(|(a, b)| *a as f64 * *b as f64)
                    .sum()
            },
            input.data(),
            1e-3,
            &idx,
        );
        worst = worst.max(normwise_relative_error(&analytic, &numeric));
    }
    worst
}

fn per_op_checks() -> Vec<(&'static str, f64)> {
    let mut rng = Rng32::from_seed(17);
    let mut out = Vec::new();
    let (a, b) = (
        seeded(&[3, 4], &mut rng, -1.0, 1.0),
        seeded(&[4, 2], &mut rng, -1.0, 1.0),
    );
    out.push(("matmul", op_error(&[a, b], &|v| v[0].matmul(v[1]).unwrap())));
    let (x, w) = (
        seeded(&[1, 2, 5, 5], &mut rng, -1.0, 1.0),
        seeded(&[3, 2, 3, 3], &mut rng, -1.0, 1.0),
    );
    let bias = seeded(&[3], &mut rng, -1.0, 1.0);
    out.push((
        "conv2d",
        op_error(&[x.clone(), w, bias], &|v| {
            v[0].conv2d(v[1], Some(v[2]), Conv2dParams::new(1, 1)).unwrap()
        }),
    ));
    out.push((
        "avg_pool2d",
        op_error(std::slice::from_ref(&x), &|v| {
            v[0].avg_pool2d(Pool2dParams::new(2, 1), true).unwrap()
        }),
    ));
    let s = seeded(&[2, 5], &mut rng, -2.0, 2.0);
    out.push((
        "softmax",
        op_error(std::slice::from_ref(&s), &|v| v[0].softmax(1).unwrap()),
    ));
    out.push(("layer_norm", op_error(&[s], &|v| v[0].layer_norm(1, 1e-5).unwrap())));
    let mut grid = identity_grid(4, 4);
    for g in grid.data_mut() {
        *g = *g * 0.8 + rng.uniform(-0.05, 0.05);
    }
    out.push((
        "grid_sample",
        op_error(&[x, grid], &|v| v[0].grid_sample_bilinear(v[1]).unwrap()),
    ));
    out
}

fn gradient_integrity() -> Verdict {
    let ops = per_op_checks();
    let worst_op = ops
        .iter()
        .cloned()
        .fold(("", 0.0), |m, o| if o.1 > m.1 { o } else { m });

    // strokes -> rasterize -> augment -> toy encoder -> combined loss
    let size = 32u32;
    let encoders = Encoders::load(&EncoderChoice::default(), size as usize).unwrap();
    let text = demo::text_embedding(&*encoders.image).unwrap();
    let style = StyleTarget::new(&demo::style_image(size as usize), &*encoders.style).unwrap();
    let d = Drawing::init_random(8, size, size, 3).unwrap();
    let obj = Objective {
        encoders: &encoders,
        text: &text,
        style: &style,
        augment: AugmentConfig {
            n_views: 2,
            ..AugmentConfig::default()
        },
        max_features: 256,
        raster: RasterOptions::default(),
        width: size,
        height: size,
        background: d.background,
    };
    let groups = ParamGroups::from_drawing(&d);
    let (nt, nr) = (groups.trajectories.numel(), groups.radii.numel());
    let flat: Vec<f32> = [groups.trajectories.data(), groups.radii.data(), groups.colors.data()].concat();
    let unflatten = |v: &[f32]| ParamGroups {
        trajectories: Tensor::from_vec(groups.trajectories.shape().to_vec(), v[..nt].to_vec()).unwrap(),
        radii: Tensor::from_vec(vec![nr], v[nt..nt + nr].to_vec()).unwrap(),
        colors: Tensor::from_vec(groups.colors.shape().to_vec(), v[nt + nr..].to_vec()).unwrap(),
    };
    let weights = LossWeights::default();
    let loss = |g: &ParamGroups| {
        let tape = Tape::new();
        let vars = g.leaves(&tape);
        let (l, _) = obj
            .evaluate(&vars, weights, &mut Rng32::from_seed(8), &mut Rng32::from_seed(9))
            .unwrap();
        l.item().unwrap() as f64
    };

    let tape = Tape::new();
    let vars = groups.leaves(&tape);
    let (l, _) = obj
        .evaluate(&vars, weights, &mut Rng32::from_seed(8), &mut Rng32::from_seed(9))
        .unwrap();
    let grads = tape.backward(l).unwrap();
    let all: Vec<f64> = [
        grads.wrt(vars.trajectories),
        grads.wrt(vars.radii),
        grads.wrt(vars.colors),
    ]
    .iter()
    .flat_map(|t| t.data().iter().map(|&v| v as f64).collect::<Vec<_>>())
    .collect();

    let mut rng = Rng32::from_seed(23);
    let mut picks: Vec<usize> = (0..flat.len()).collect();
    for i in 0..24 {
        let j = i + rng.below(flat.len() - i);
        picks.swap(i, j);
    }
    picks.truncate(24);
    // pixel-unit geometry takes a 1e-2 step, colors in [0, 1] a 1e-3 step
    let numeric: Vec<f64> = picks
        .iter()
        .map(|&i| {
            let h = if i < nt + nr { 1e-2 } else { 1e-3 };
            central_differences(|p| loss(&unflatten(p)), &flat, h, &[i])[0]
        })
        .collect();
    let analytic: Vec<f64> = picks.iter().map(|&i| all[i]).collect();
    let pipe = normwise_relative_error(&analytic, &numeric);
    verdict(
        pipe < 1e-2 && worst_op.1 < 1e-3,
        format!(
            "pipeline rel err {pipe:.2e} over {} params (< 1e-2); worst per-op {} {:.2e} (< 1e-3)",
            picks.len(),
            worst_op.0,
            worst_op.1
        ),
    )
}

// ---------------------------------------------------------------- 2

fn remd_of(a: &[Vec<f32>], b: &[Vec<f32>]) -> f32 {
    let tape = Tape::new();
    let t = |r: &[Vec<f32>]| tape.constant(Tensor::from_vec(vec![r.len(), r[0].len()], r.concat()).unwrap());
    remd(t(a), t(b)).unwrap().item().unwrap()
}

fn remd_suite() -> Verdict {
    let mut rng = Rng32::from_seed(41);
    let mut worst = 0.0f32;
    let mut fails = Vec::new();
    for trial in 0..50 {
        let rows = |n: usize, rng: &mut Rng32| -> Vec<Vec<f32>> {
            (0..n)
                .map(|_| (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect()
        };
        let a = rows(3 + trial % 7, &mut rng);
        let b = rows(2 + trial % 5, &mut rng);
        let mut pa = a.clone();
        pa.reverse();
        pa.rotate_left(1);
        let self_dist = remd_of(&a, &a).abs();
        let asym = (remd_of(&a, &b) - remd_of(&b, &a)).abs();
        let neg = (-remd_of(&a, &b)).max(0.0);
        let perm = (remd_of(&a, &b) - remd_of(&pa, &b)).abs();
        for (name, e) in [
            ("self", self_dist),
            ("symmetry", asym),
            ("sign", neg),
            ("permutation", perm),
        ] {
            worst = worst.max(e);
            if e > 1e-6 {
                fails.push(format!("{name}@{trial}"));
            }
        }
    }
    let h1 = (remd_of(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]) - 1.0).abs();
    let h2 = (remd_of(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0]]) - 0.5).abs();
    worst = worst.max(h1).max(h2);
    if h1 > 1e-6 || h2 > 1e-6 {
        fails.push("hand cases".into());
    }
    verdict(
        fails.is_empty(),
        format!(
            "50 random pairs + 2 hand cases, worst deviation {worst:.1e} (<= 1e-6) {}",
            fails.join(" ")
        ),
    )
}

// ---------------------------------------------------------------- 3

fn raster_suite() -> Verdict {
    let mut d = Drawing::new(20, 14).unwrap();
    d.background = [0.2, 0.6, 0.9];
    let img = render(&d, RasterOptions::default()).unwrap();
    let empty_exact = (0..3).all(|ch| {
        img.data()[ch * 280..(ch + 1) * 280]
            .iter()
            .all(|&v| v == d.background[ch])
    });

    let line = Stroke {
        points: [
            Point2::new(0.0, 10.0),
            Point2::new(10.0, 10.0),
            Point2::new(20.0, 10.0),
            Point2::new(30.0, 10.0),
        ],
        radius: 3.0,
        color: [0.0, 0.0, 0.0, 1.0],
    };
    let edge = (coverage(Point2::new(15.0, 13.0), &line, 1.0).unwrap() - 0.5).abs();

    let p = [
        Point2::new(0.0, 0.0),
        Point2::new(0.0, 1.0),
        Point2::new(1.0, 1.0),
        Point2::new(1.0, 0.0),
    ];
    let m = bezier_point(&p, 0.5);
    let mid = (m.x - 0.5).abs().max((m.y - 0.75).abs());

    let mut rng = Rng32::from_seed(12);
    let mut a = Drawing::new(64, 64).unwrap();
    for _ in 0..4 {
        let mut points = [Point2::new(0.0, 0.0); 4];
        for q in &mut points {
            *q = Point2::new(rng.uniform(16.0, 40.0), rng.uniform(16.0, 40.0));
        }
        a.strokes.push(Stroke {
            points,
            radius: rng.uniform(1.0, 4.0),
            color: [rng.next_f32(), rng.next_f32(), rng.next_f32(), rng.uniform(0.5, 1.0)],
        });
    }
    let (dx, dy) = (9usize, 5usize);
    let mut b = a.clone();
    for s in &mut b.strokes {
        for q in &mut s.points {
            q.x += dx as f32;
            q.y += dy as f32;
        }
    }
    let (ia, ib) = (
        render(&a, RasterOptions::default()).unwrap(),
        render(&b, RasterOptions::default()).unwrap(),
    );
    let mut shift = 0.0f32;
    for ch in 0..3 {
        for y in 0..64 - dy {
            for x in 0..64 - dx {
                shift = shift.max((ia.at(&[ch, y, x]) - ib.at(&[ch, y + dy, x + dx])).abs());
            }
        }
    }
    verdict(
        empty_exact && edge < 1e-6 && mid < 1e-6 && shift < 1e-5,
        format!(
            "empty exact: {empty_exact}; |coverage(d=r) - 0.5| {edge:.1e}; midpoint err {mid:.1e}; translation err {shift:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 4, 5

const SWEEP: [(f32, f32); 5] = [(0.0, 1.0), (1.0, 4.0), (1.0, 1.0), (4.0, 1.0), (1.0, 0.0)];
const SEEDS: u64 = 5;

fn desk_config() -> RunConfig {
    RunConfig {
        num_strokes: 64,
        width: 128,
        height: 128,
        iterations: 100,
        candidates: 1,
        encoder: EncoderChoice::default(),
        ..RunConfig::default()
    }
}

fn desk_problem(cfg: &RunConfig) -> Problem {
    let enc = Encoders::load(&cfg.encoder, cfg.width.max(cfg.height) as usize).unwrap();
    let text = demo::text_embedding(&*enc.image).unwrap();
    Problem::new(enc, text, &demo::style_image(256)).unwrap()
}

/// Final (content, style) of every sweep setting and seed, by setting.
fn sweep() -> Vec<Vec<LossReport>> {
    let base = desk_config();
    let problem = desk_problem(&base);
    let jobs: Vec<(usize, u64)> = (0..SWEEP.len()).flat_map(|k| (0..SEEDS).map(move |s| (k, s))).collect();
    let results = Mutex::new(vec![vec![None; SEEDS as usize]; SWEEP.len()]);
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(k, seed)) = jobs.get(i) else { break };
                let (c, s) = SWEEP[k];
                let cfg = RunConfig {
                    weights: LossWeights { content: c, style: s },
                    seeds: Seeds::from_master(seed),
                    ..base.clone()
                };
                let r = run(&cfg, &problem).unwrap();
                results.lock().unwrap()[k][seed as usize] = Some(r.last);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.into_iter().map(Option::unwrap).collect())
        .collect()
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn medians(runs: &[Vec<LossReport>]) -> (Vec<f32>, Vec<f32>) {
    let c = runs
        .iter()
        .map(|r| median(r.iter().map(|x| x.content).collect()))
        .collect();
    let s = runs
        .iter()
        .map(|r| median(r.iter().map(|x| x.style).collect()))
        .collect();
    (c, s)
}

fn loss_ordering(runs: &[Vec<LossReport>]) -> Verdict {
    let (c, s) = medians(runs);
    // indices into SWEEP: style-only 0, joint 2, content-only 4
    let (style_only, joint, content_only) = (0, 2, 4);
    let content_ok = c[content_only] <= c[joint] && c[joint] <= c[style_only];
    let style_ok = s[joint] <= s[content_only];
    verdict(
        content_ok && style_ok,
        format!(
            "median content: content-only {:.4} <= joint {:.4} <= style-only {:.4}; median style: joint {:.4} <= content-only {:.4}",
            c[content_only], c[joint], c[style_only], s[joint], s[content_only]
        ),
    )
}

fn lambda_sweep(runs: &[Vec<LossReport>]) -> Verdict {
    let (c, s) = medians(runs);
    let c_inv = c.windows(2).filter(|w| w[1] > w[0]).count();
    let s_inv = s.windows(2).filter(|w| w[1] < w[0]).count();
    let fmt = |v: &[f32]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    verdict(
        c_inv <= 1 && s_inv <= 1,
        format!(
            "λ 0:1,1:4,1:1,4:1,1:0 -> content [{}] ({c_inv} inversions), style [{}] ({s_inv} inversions)",
            fmt(&c),
            fmt(&s)
        ),
    )
}

// ---------------------------------------------------------------- 6

fn defaults() -> Verdict {
    let d = RunConfig::default();
    let cli = resolve(&Cli::default()).unwrap().run;
    let ok = d.weights
        == LossWeights {
            content: 1.0,
            style: 1.0,
        }
        && d.learning_rates
            == LearningRates {
                trajectories: 0.3,
                radii: 0.3,
                colors: 0.03,
            }
        && d.candidates == 4
        && cli == d;
    verdict(
        ok,
        format!(
            "λ = {}/{}, lr = {}/{}/{}, candidates = {}, CLI defaults identical: {}",
            d.weights.content,
            d.weights.style,
            d.learning_rates.trajectories,
            d.learning_rates.radii,
            d.learning_rates.colors,
            d.candidates,
            cli == d
        ),
    )
}

// ---------------------------------------------------------------- 7

#[derive(Deserialize)]
struct Output {
    name: String,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct Record {
    input_name: String,
    input_shape: Vec<usize>,
    input: Vec<f32>,
    outputs: Vec<Output>,
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/onnx")
}

fn onnx_equivalence() -> Verdict {
    let mut worst_abs = 0.0f64;
    let mut worst_grad = 0.0f64;
    let models = ["conv_relu", "maxpool", "gemm_softmax", "layernorm", "misc"];
    for name in models {
        let g = Graph::load(&fixtures().join(format!("{name}.onnx"))).unwrap();
        let text = std::fs::read_to_string(fixtures().join(format!("{name}.io.json"))).unwrap();
        let rec: Record = serde_json::from_str(&text).unwrap();
        let wanted: Vec<&str> = rec.outputs.iter().map(|o| o.name.as_str()).collect();
        let eval = |input: &[f32], tape: &Tape| -> Vec<std::sync::Arc<Tensor>> {
            let x = tape.constant(Tensor::from_vec(rec.input_shape.clone(), input.to_vec()).unwrap());
            g.run(tape, &[(rec.input_name.as_str(), x)], &wanted)
                .unwrap()
                .iter()
                .map(|v| v.value())
                .collect()
        };
        for (y, o) in eval(&rec.input, &Tape::new()).iter().zip(&rec.outputs) {
            for (a, b) in y.data().iter().zip(&o.data) {
                worst_abs = worst_abs.max((*a as f64 - b).abs());
            }
        }

        let mut rng = Rng32::from_seed(7);
        let weights: Vec<Vec<f32>> = rec
            .outputs
            .iter()
            .map(|o| o.data.iter().map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(rec.input_shape.clone(), rec.input.clone()).unwrap());
        let ys = g.run(&tape, &[(rec.input_name.as_str(), x)], &wanted).unwrap();
        let mut total: Option<Var> = None;
        for (y, w) in ys.iter().zip(&weights) {
            let t = y
                .mul(tape.constant(Tensor::from_vec(y.shape(), w.clone()).unwrap()))
                .unwrap()
                .sum_all();
            total = Some(match total {
                None => t,
                Some(acc) => acc.add(t).unwrap(),
            });
        }
        let grads = tape.backward(total.unwrap()).unwrap();
        let analytic: Vec<f64> = grads.wrt(x).data().iter().map(|&v| v as f64).collect();
        let idx: Vec<usize> = (0..rec.input.len()).collect();
        let probe_loss = |p: &[f32]| -> f64 {
            eval(p, &Tape::new())
                .iter()
                .zip(&weights)
                .map(|(y, w)| y.data().iter().zip(w).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>())
                .sum()
        };
        let numeric = central_differences(probe_loss, &rec.input, 1e-3, &idx);
        let e = normwise_relative_error(&analytic, &numeric);
        worst_grad = worst_grad.max(e);
    }
    verdict(
        worst_abs <= 1e-4 && worst_grad < 1e-3,
        format!(
            "{} fixtures vs onnxruntime: max abs diff {worst_abs:.1e} (<= 1e-4); input-gradient rel err {worst_grad:.1e} (< 1e-3)",
            models.len()
        ),
    )
}

// ---------------------------------------------------------------- 8, 9

fn inputs(dir: &Path, canvas: usize) -> (PathBuf, PathBuf) {
    let style = dir.join("style.png");
    let text = dir.join("text.json");
    encode_png(&demo::style_image(256), &style).unwrap();
    let enc = Encoders::load(&EncoderChoice::default(), canvas).unwrap();
    let e = demo::text_embedding(&*enc.image).unwrap();
    std::fs::write(&text, e.to_json("toy").unwrap()).unwrap();
    (style, text)
}

fn argv(style: &Path, text: &Path, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "stylestroke".to_string(),
        "--style".into(),
        style.display().to_string(),
        "--text-embedding".into(),
        text.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (style, text) = inputs(dir.path(), 64);
    let flags = [
        "--encoder",
        "toy",
        "--seed",
        "7",
        "--iters",
        "20",
        "--strokes",
        "24",
        "--canvas",
        "64",
        "64",
        "--candidates",
        "2",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let codes = (
        run_command(argv(&style, &text, &a, &flags)),
        run_command(argv(&style, &text, &b, &flags)),
    );
    let same = |f: &str| {
        std::fs::read(a.join(f))
            .ok()
            .is_some_and(|x| Some(x) == std::fs::read(b.join(f)).ok())
    };
    let (dj, lc) = (same("drawing.json"), same("losses.csv"));
    verdict(
        codes == (0, 0) && dj && lc,
        format!("exit codes {codes:?}; drawing.json identical: {dj}; losses.csv identical: {lc}"),
    )
}

#[derive(Deserialize)]
struct Summary {
    initial: LossReport,
    last: LossReport,
}

fn smoke() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (style, text) = inputs(dir.path(), 128);
    let out = dir.path().join("smoke");
    let start = Instant::now();
    let flags = [
        "--encoder",
        "toy",
        "--seed",
        "1",
        "--iters",
        "100",
        "--strokes",
        "64",
        "--canvas",
        "128",
        "128",
        "--candidates",
        "1",
    ];
    let code = run_command(argv(&style, &text, &out, &flags));
    let secs = start.elapsed().as_secs_f64();
    if code != 0 {
        return verdict(false, format!("exit code {code}"));
    }
    let s: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let rows = std::fs::read_to_string(out.join("losses.csv")).unwrap().lines().count() - 1;
    verdict(
        secs < 300.0 && s.last.combined < s.initial.combined && rows == 100,
        format!(
            "100 iterations, 64 strokes, 128x128 in {secs:.1}s (< 300s); combined loss {:.4} -> {:.4}",
            s.initial.combined, s.last.combined
        ),
    )
}

#[test]
fn acceptance() {
    let mut ok = Vec::new();
    ok.push(report(1, "gradient integrity", gradient_integrity));
    ok.push(report(2, "REMD metric suite", remd_suite));
    ok.push(report(3, "rasterizer analytic suite", raster_suite));
    let runs = catch_unwind(sweep).ok();
    match &runs {
        Some(r) => {
            ok.push(report(4, "loss ordering at desk scale", || loss_ordering(r)));
            ok.push(report(5, "λ sweep monotonicity", || lambda_sweep(r)));
        }
        None => {
            ok.push(report(4, "loss ordering at desk scale", || {
                verdict(false, "sweep failed")
            }));
            ok.push(report(5, "λ sweep monotonicity", || verdict(false, "sweep failed")));
        }
    }
    ok.push(report(6, "shipped defaults", defaults));
    ok.push(report(7, "ONNX executor equivalence", onnx_equivalence));
    ok.push(report(8, "determinism", determinism));
    ok.push(report(9, "end-to-end smoke run", smoke));
    let failed: Vec<usize> = ok
        .iter()
        .enumerate()
        .filter(|(_, p)| !**p)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
