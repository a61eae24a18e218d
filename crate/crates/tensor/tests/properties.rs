use proptest::prelude::*;
use stylestroke_tensor::ops::identity_grid;
use stylestroke_tensor::{Conv2dParams, Tape, Tensor, Var};

fn values(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-2.0f32..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// grad(αf + βg) = α·grad(f) + β·grad(g) for scalar f, g sharing leaves.
    #[test]
    fn backward_is_linear(x in values(6), alpha in -3.0f32..3.0, beta in -3.0f32..3.0) {
        let leaf = Tensor::from_vec(vec![2, 3], x).unwrap();
        fn f<'t>(tape: &'t Tape, leaf: &Tensor) -> (Var<'t>, Var<'t>, Var<'t>) {
            let v = tape.leaf(leaf.clone());
            let f = v.mul(v).unwrap().sum_all();
            let g = v.sigmoid().reduce_sum(&[1], false).unwrap().powf(2.0).sum_all();
            (v, f, g)
        }

        let tape = Tape::new();
        let (v, fv, _) = f(&tape, &leaf);
        let gf = tape.backward(fv).unwrap().wrt(v).clone();
        let tape = Tape::new();
        let (v, _, gv) = f(&tape, &leaf);
        let gg = tape.backward(gv).unwrap().wrt(v).clone();
        let tape = Tape::new();
        let (v, fv, gv) = f(&tape, &leaf);
        let combo = fv.mul_scalar(alpha).add(gv.mul_scalar(beta)).unwrap();
        let gc = tape.backward(combo).unwrap().wrt(v).clone();

        for k in 0..6 {
            let expect = alpha * gf.data()[k] + beta * gg.data()[k];
            prop_assert!((gc.data()[k] - expect).abs() <= 1e-4 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn broadcast_add_commutes(a in values(6), b in values(3)) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![2, 3], a).unwrap());
        let y = tape.constant(Tensor::vector(b));
        prop_assert_eq!(x.add(y).unwrap().value(), y.add(x).unwrap().value());
    }
}

fn workload() -> Vec<f32> {
    let tape = Tape::new();
    let n = 3 * 64 * 64;
    let img = Tensor::from_vec(
        vec![1, 3, 64, 64],
        (0..n).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect(),
    )
    .unwrap();
    let w = Tensor::from_vec(
        vec![16, 3, 3, 3],
        (0..16 * 27).map(|i| ((i * 31) % 17) as f32 / 17.0 - 0.5).collect(),
    )
    .unwrap();
    let x = tape.leaf(img);
    let w = tape.leaf(w);
    let grid = tape.constant(identity_grid(48, 48));
    let y = x
        .grid_sample_bilinear(grid)
        .unwrap()
        .conv2d(w, None, Conv2dParams::new(2, 1))
        .unwrap()
        .relu();
    let y2 = y.reshape(&[16, 24 * 24]).unwrap();
    let gram = y2.matmul(y2.transpose(&[1, 0]).unwrap()).unwrap();
    let loss = gram.mean_all();
    let grads = tape.backward(loss).unwrap();
    let mut out = loss.value().data().to_vec();
    out.extend_from_slice(grads.wrt(x).data());
    out.extend_from_slice(grads.wrt(w).data());
    out
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(workload);
    let b = four.install(workload);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
