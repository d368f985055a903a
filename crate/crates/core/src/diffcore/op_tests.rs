use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Reduces any node to a scalar with fixed random weights so every output
/// element contributes a distinct cotangent.
fn weighted_sum(t: &mut Tape, v: Var, seed: u64) -> Result<Var, DiffError> {
    let shape = t.value(v).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(rand_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = t.mul(v, w)?;
    t.sum(p)
}

fn check<F>(f: F, params: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let res = finite_diff_check(
        |t: &mut Tape, p: &[Var]| {
            let out = f(t, p)?;
            weighted_sum(t, out, 99)
        },
        params,
        DEFAULT_FD_STEP,
    )
    .unwrap();
    res.max_rel_error
}

const TOL: f64 = 1e-6;

#[test]
fn every_forward_op_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let a = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let m = rand_tensor(&mut rng, &[4, 2], -2.0, 2.0);
        let row = rand_tensor(&mut rng, &[4], -2.0, 2.0);
        let pos = rand_tensor(&mut rng, &[3, 4], 0.5, 2.0);
        let s = rand_tensor(&mut rng, &[1], 0.5, 2.0);
        let col = rand_tensor(&mut rng, &[3, 1], -2.0, 2.0);

        let cases: Vec<(&str, f64)> = vec![
            ("matmul", check(|t, p| t.matmul(p[0], p[1]), &[a.clone(), m.clone()])),
            ("add", check(|t, p| t.add(p[0], p[1]), &[a.clone(), b.clone()])),
            ("add_row", check(|t, p| t.add(p[0], p[1]), &[a.clone(), row.clone()])),
            ("sub", check(|t, p| t.sub(p[0], p[1]), &[a.clone(), b.clone()])),
            (
                "sub_scalar_lhs",
                check(|t, p| t.sub(p[1], p[0]), &[a.clone(), s.clone()]),
            ),
            ("mul", check(|t, p| t.mul(p[0], p[1]), &[a.clone(), b.clone()])),
            (
                "mul_scalar_bcast",
                check(|t, p| t.mul(p[0], p[1]), &[a.clone(), s.clone()]),
            ),
            ("div", check(|t, p| t.div(p[0], p[1]), &[a.clone(), pos.clone()])),
            ("div_row", check(|t, p| t.div(p[1], p[0]), &[s.clone(), pos.clone()])),
            ("tanh", check(|t, p| t.tanh(p[0]), std::slice::from_ref(&a))),
            ("sigmoid", check(|t, p| t.sigmoid(p[0]), std::slice::from_ref(&a))),
            ("exp", check(|t, p| t.exp(p[0]), std::slice::from_ref(&a))),
            ("ln", check(|t, p| t.ln(p[0]), std::slice::from_ref(&pos))),
            ("sqrt", check(|t, p| t.sqrt(p[0]), std::slice::from_ref(&pos))),
            ("abs", check(|t, p| t.abs(p[0]), std::slice::from_ref(&a))),
            ("softmax", check(|t, p| t.softmax(p[0]), std::slice::from_ref(&a))),
            (
                "concat",
                check(|t, p| t.concat_cols(&[p[0], p[1], p[0]]), &[a.clone(), col.clone()]),
            ),
            (
                "slice_cols",
                check(|t, p| t.slice_cols(p[0], 1, 3), std::slice::from_ref(&a)),
            ),
            (
                "slice_rows",
                check(|t, p| t.slice_rows(p[0], 1, 3), std::slice::from_ref(&a)),
            ),
            ("mean", check(|t, p| t.mean(p[0]), std::slice::from_ref(&a))),
            ("sum", check(|t, p| t.sum(p[0]), std::slice::from_ref(&a))),
            ("std", check(|t, p| t.std(p[0]), std::slice::from_ref(&a))),
            (
                "scale_rows",
                check(|t, p| t.scale_rows(p[0], p[1]), &[a.clone(), col.clone()]),
            ),
            (
                "add_scalar",
                check(|t, p| t.add_scalar(p[0], 0.7), std::slice::from_ref(&a)),
            ),
            (
                "mul_scalar",
                check(|t, p| t.mul_scalar(p[0], -1.3), std::slice::from_ref(&a)),
            ),
            (
                "max_scalar",
                check(|t, p| t.max_scalar(p[0], 0.05), std::slice::from_ref(&a)),
            ),
            (
                "min_scalar",
                check(|t, p| t.min_scalar(p[0], 0.05), std::slice::from_ref(&a)),
            ),
        ];
        for (name, err) in cases {
            assert!(err < TOL, "{name}: relative error {err}");
        }
    }
}

#[test]
fn lstm_cell_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, input, h) = (3, 4, 2);
    let x = rand_tensor(&mut rng, &[n, input], -2.0, 2.0);
    let state = rand_tensor(&mut rng, &[n, 2 * h], -1.0, 1.0);
    let w_ih = rand_tensor(&mut rng, &[input, 4 * h], -1.0, 1.0);
    let w_hh = rand_tensor(&mut rng, &[h, 4 * h], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[4 * h], -1.0, 1.0);
    // two chained steps so the recurrent path is exercised
    let err = check(
        |t, p| {
            let s1 = t.lstm_cell(p[0], p[1], p[2], p[3], p[4])?;
            t.lstm_cell(p[0], s1, p[2], p[3], p[4])
        },
        &[x, state, w_ih, w_hh, b],
    );
    assert!(err < TOL, "lstm relative error {err}");
}

#[test]
fn lstm_cell_matches_unfused_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, input, h) = (2, 3, 2);
    let x = rand_tensor(&mut rng, &[n, input], -2.0, 2.0);
    let st = rand_tensor(&mut rng, &[n, 2 * h], -1.0, 1.0);
    let w_ih = rand_tensor(&mut rng, &[input, 4 * h], -1.0, 1.0);
    let w_hh = rand_tensor(&mut rng, &[h, 4 * h], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[4 * h], -1.0, 1.0);

    let mut t = Tape::new();
    let (vx, vs, vi, vh, vb) = (
        t.constant(x),
        t.constant(st),
        t.constant(w_ih),
        t.constant(w_hh),
        t.constant(b),
    );
    let fused = t.lstm_cell(vx, vs, vi, vh, vb).unwrap();

    let hp = t.slice_cols(vs, 0, h).unwrap();
    let cp = t.slice_cols(vs, h, 2 * h).unwrap();
    let a1 = t.matmul(vx, vi).unwrap();
    let a2 = t.matmul(hp, vh).unwrap();
    let a = t.add(a1, a2).unwrap();
    let a = t.add(a, vb).unwrap();
    let gi = t.slice_cols(a, 0, h).unwrap();
    let gf = t.slice_cols(a, h, 2 * h).unwrap();
    let gg = t.slice_cols(a, 2 * h, 3 * h).unwrap();
    let go = t.slice_cols(a, 3 * h, 4 * h).unwrap();
    let (i, f, g, o) = (
        t.sigmoid(gi).unwrap(),
        t.sigmoid(gf).unwrap(),
        t.tanh(gg).unwrap(),
        t.sigmoid(go).unwrap(),
    );
    let fc = t.mul(f, cp).unwrap();
    let ig = t.mul(i, g).unwrap();
    let c = t.add(fc, ig).unwrap();
    let tc = t.tanh(c).unwrap();
    let hn = t.mul(o, tc).unwrap();
    let unfused = t.concat_cols(&[hn, c]).unwrap();
    for (a, b) in t.value(fused).data().iter().zip(t.value(unfused).data()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn forward_examples() {
    let mut t = Tape::new();
    let z = t.scalar(0.0);
    let th = t.tanh(z).unwrap();
    assert_eq!(t.item(th), Some(0.0));

    let zeros = t.constant(Tensor::zeros(&[1, 3]));
    let sm = t.softmax(zeros).unwrap();
    for &v in t.value(sm).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    let eye = t.constant(Tensor::eye(2));
    let m = t.constant(Tensor::matrix(2, 2, vec![1.5, -2.0, 3.25, 4.0]).unwrap());
    let prod = t.matmul(eye, m).unwrap();
    assert_eq!(t.value(prod).data(), &[1.5, -2.0, 3.25, 4.0]);
    assert_eq!(t.value(prod).shape(), &[2, 2]);
}

#[test]
fn forward_errors() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    match t.matmul(a, b) {
        Err(DiffError::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("{other:?}"),
    }
    let c = t.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(t.add(a, c), Err(DiffError::ShapeMismatch { .. })));
    let neg = t.scalar(-1.0);
    assert!(matches!(t.ln(neg), Err(DiffError::Domain { op: "ln", .. })));
    assert!(matches!(t.sqrt(neg), Err(DiffError::Domain { op: "sqrt", .. })));
    let zero = t.scalar(0.0);
    let one = t.scalar(1.0);
    assert_eq!(t.div(one, zero), Err(DiffError::DivisionByZero));
}

#[test]
fn backward_examples() {
    let mut t = Tape::new();
    let x = t.param(Tensor::scalar(3.0));
    let y = t.mul(x, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), Some(6.0));

    let mut t = Tape::new();
    let x = t.param(Tensor::scalar(0.0));
    let y = t.tanh(x).unwrap();
    assert_eq!(t.backward(y).unwrap().get(x).unwrap().item(), Some(1.0));

    let mut t = Tape::new();
    let x = t.param(Tensor::vector(vec![2.0, -7.0]));
    let y = t.mean(x).unwrap();
    assert_eq!(t.backward(y).unwrap().get(x).unwrap().data(), &[0.5, 0.5]);
}

#[test]
fn backward_errors_and_unused_params() {
    let t = Tape::new();
    assert!(matches!(
        t.backward(Var::default_for_tests()),
        Err(DiffError::EmptyTape)
    ));

    let mut t = Tape::new();
    let x = t.param(Tensor::vector(vec![1.0, 2.0]));
    let unused = t.param(Tensor::zeros(&[2, 2]));
    let sq = t.mul(x, x).unwrap();
    assert!(matches!(t.backward(sq), Err(DiffError::NonScalarLoss { .. })));
    let loss = t.sum(sq).unwrap();
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(unused).unwrap(), &Tensor::zeros(&[2, 2]));
}

#[test]
fn softmax_rows_are_positive_and_normalised() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = Tape::new();
    let a = t.constant(rand_tensor(&mut rng, &[50, 7], -30.0, 30.0));
    let s = t.softmax(a).unwrap();
    for row in t.value(s).data().chunks(7) {
        assert!(row.iter().all(|&v| v > 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn composite_gradient_equals_manual_chain_rule() {
    // f(x) = sum(tanh(x * w)), df/dx_i = w_i * (1 - tanh(x_i w_i)^2)
    let x = [0.3, -1.2, 0.9];
    let w = [1.5, 0.5, -2.0];
    let mut t = Tape::new();
    let vx = t.param(Tensor::vector(x.to_vec()));
    let vw = t.constant(Tensor::vector(w.to_vec()));
    let p = t.mul(vx, vw).unwrap();
    let th = t.tanh(p).unwrap();
    let s = t.sum(th).unwrap();
    let g = t.backward(s).unwrap();
    for i in 0..3 {
        let th = (x[i] * w[i]).tanh();
        let manual = w[i] * (1.0 - th * th);
        assert!((g.get(vx).unwrap().data()[i] - manual).abs() < 1e-15);
    }
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut t = Tape::new();
        let a = t.param(rand_tensor(&mut rng, &[5, 3], -2.0, 2.0));
        let b = t.param(rand_tensor(&mut rng, &[3, 4], -2.0, 2.0));
        let m = t.matmul(a, b).unwrap();
        let s = t.softmax(m).unwrap();
        let l = t.std(s).unwrap();
        let g = t.backward(l).unwrap();
        (
            t.item(l).unwrap().to_bits(),
            g.get(a).unwrap().clone(),
            g.get(b).unwrap().clone(),
        )
    };
    assert_eq!(run(), run());
}
