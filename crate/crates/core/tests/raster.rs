mod common;

use stylestroke::raster::{rasterize, render, RasterOptions};
use stylestroke::tensor::{Tape, Tensor};
use stylestroke::{Drawing, ParamGroups, Point2, Rng32, Stroke};

use common::rel_err;

fn random_drawing(rng: &mut Rng32, n: usize, size: u32) -> Drawing {
    let mut d = Drawing::new(size, size).unwrap();
    d.background = [rng.next_f32(), rng.next_f32(), rng.next_f32()];
    let s = size as f32;
    d.strokes = (0..n)
        .map(|_| {
            let mut points = [Point2::new(0.0, 0.0); 4];
            for p in &mut points {
                *p = Point2::new(rng.uniform(0.15 * s, 0.85 * s), rng.uniform(0.15 * s, 0.85 * s));
            }
            Stroke {
                points,
                radius: rng.uniform(1.5, 5.0),
                color: [rng.next_f32(), rng.next_f32(), rng.next_f32(), rng.uniform(0.4, 1.0)],
            }
        })
        .collect();
    d
}

fn field(p: &mut ParamGroups, group: usize) -> &mut [f32] {
    match group {
        0 => p.trajectories.data_mut(),
        1 => p.radii.data_mut(),
        _ => p.colors.data_mut(),
    }
}

/// Σ weights · render, accumulated in f64.
fn probe(groups: &ParamGroups, template: &Drawing, weights: &[f32], opts: RasterOptions) -> f64 {
    let img = render(&groups.to_drawing(template).unwrap(), opts).unwrap();
    img.data().iter().zip(weights).map(|(a, b)| *a as f64 * *b as f64).sum()
}

#[test]
fn gradients_match_finite_differences() {
    let opts = RasterOptions::default();
    let mut rng = Rng32::from_seed(2024);
    let h = 1e-2f32;
    for config in 0..24 {
        let size = 24 + 4 * (config % 3) as u32;
        let d = random_drawing(&mut rng, 1 + config % 4, size);
        let groups = ParamGroups::from_drawing(&d);
        let weights: Vec<f32> = (0..3 * (size * size) as usize)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();

        let tape = Tape::new();
        let vars = groups.leaves(&tape);
        let img = rasterize(&vars, size, size, d.background, opts).unwrap();
        let w = tape.constant(Tensor::from_vec(img.shape().to_vec(), weights.clone()).unwrap());
        let grads = tape.backward(img.mul(w).unwrap().sum_all()).unwrap();

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for group in 0..3 {
            let n = [groups.trajectories.numel(), groups.radii.numel(), groups.colors.numel()][group];
            let g = [vars.trajectories, vars.radii, vars.colors][group];
            for i in 0..n {
                let mut plus = groups.clone();
                let mut minus = groups.clone();
                field(&mut plus, group)[i] += h;
                field(&mut minus, group)[i] -= h;
                let fd = (probe(&plus, &d, &weights, opts) - probe(&minus, &d, &weights, opts)) / (2.0 * h as f64);
                analytic.push(grads.wrt(g).data()[i] as f64);
                numeric.push(fd);
            }
        }
        let err = rel_err(&analytic, &numeric, 1e-3);
        assert!(err < 1e-2, "config {config}: relative error {err:e}");
    }
}

#[test]
fn integer_translation_shifts_the_image() {
    let opts = RasterOptions::default();
    let mut rng = Rng32::from_seed(5);
    let mut d = random_drawing(&mut rng, 3, 32);
    // keep every stroke and its cull box well inside a 64 px canvas
    d.width = 64;
    d.height = 64;
    for s in &mut d.strokes {
        for p in &mut s.points {
            p.x += 8.0;
            p.y += 8.0;
        }
    }
    let (dx, dy) = (7usize, 11usize);
    let mut shifted = d.clone();
    for s in &mut shifted.strokes {
        for p in &mut s.points {
            p.x += dx as f32;
            p.y += dy as f32;
        }
    }
    let a = render(&d, opts).unwrap();
    let b = render(&shifted, opts).unwrap();
    let mut worst = 0.0f32;
    for ch in 0..3 {
        for y in 0..64 - dy {
            for x in 0..64 - dx {
                worst = worst.max((a.at(&[ch, y, x]) - b.at(&[ch, y + dy, x + dx])).abs());
            }
        }
    }
    assert!(worst < 1e-5, "max difference {worst:e}");
}

#[test]
fn later_strokes_paint_over_earlier_ones() {
    let bar = |y: f32, color: [f32; 4]| Stroke {
        points: [
            Point2::new(4.0, y),
            Point2::new(10.0, y),
            Point2::new(22.0, y),
            Point2::new(28.0, y),
        ],
        radius: 8.0,
        color,
    };
    let red = bar(16.0, [1.0, 0.0, 0.0, 1.0]);
    let blue = bar(18.0, [0.0, 0.0, 1.0, 1.0]);
    let mut d = Drawing::new(32, 32).unwrap();
    d.strokes = vec![red, blue];
    let blue_on_top = render(&d, RasterOptions::default()).unwrap();
    d.strokes = vec![blue, red];
    let red_on_top = render(&d, RasterOptions::default()).unwrap();
    assert!(blue_on_top.at(&[2, 17, 16]) > 0.99 && blue_on_top.at(&[0, 17, 16]) < 0.01);
    assert!(red_on_top.at(&[0, 17, 16]) > 0.99 && red_on_top.at(&[2, 17, 16]) < 0.01);
}

#[test]
fn transparent_stroke_leaves_background() {
    let mut rng = Rng32::from_seed(1);
    let mut d = random_drawing(&mut rng, 2, 20);
    for s in &mut d.strokes {
        s.color[3] = 0.0;
    }
    let img = render(&d, RasterOptions::default()).unwrap();
    for ch in 0..3 {
        for v in &img.data()[ch * 400..(ch + 1) * 400] {
            assert!((v - d.background[ch]).abs() < 1e-6);
        }
    }
}

#[test]
fn render_is_deterministic() {
    let mut rng = Rng32::from_seed(77);
    let d = random_drawing(&mut rng, 40, 96);
    let a = render(&d, RasterOptions::default()).unwrap();
    let b = render(&d, RasterOptions::default()).unwrap();
    assert_eq!(a.data(), b.data());
}
