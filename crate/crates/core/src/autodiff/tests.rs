use num_complex::Complex;
use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::gradcheck::{check_store, FD_STEP};
use crate::rng;
use crate::tensor::Matrix;

fn batch() -> Matrix<f64> {
    Matrix::from_rows(&[vec![0.3, -1.2, 0.5], vec![1.1, 0.4, -0.7]]).unwrap()
}

#[test]
fn zero_net_outputs_zero() {
    let mlp = Mlp::new("f", MlpSpec::relu(3, &[4], 2, Head::Linear)).unwrap();
    let mut store = ParamStore::<f64>::new();
    mlp.init(&mut store, &mut rng::stream(0, 0));
    for name in store.names().map(str::to_string).collect::<Vec<_>>() {
        store.value_mut(&name).unwrap().fill(0.0);
    }
    let (out, _, _) = mlp_forward(&store, &mlp, &batch()).unwrap();
    assert!(out.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_layer_copies_input() {
    let mlp = Mlp::new("id", MlpSpec::relu(3, &[], 3, Head::Linear)).unwrap();
    let mut store = ParamStore::<f64>::new();
    store.insert("id.0.w", Matrix::identity(3));
    store.insert("id.0.b", Matrix::zeros(1, 3));
    let (out, _, _) = mlp_forward(&store, &mlp, &batch()).unwrap();
    assert_eq!(out, batch());
}

#[test]
fn forward_is_deterministic() {
    let mlp = Mlp::new("f", MlpSpec::relu(3, &[8, 8], 2, Head::Logits)).unwrap();
    let run = || {
        let mut store = ParamStore::<f64>::new();
        mlp.init(&mut store, &mut rng::stream(7, 1));
        mlp_forward(&store, &mlp, &batch()).unwrap().0
    };
    let (a, b) = (run(), run());
    let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn rejects_wrong_input_width() {
    let mlp = Mlp::new("f", MlpSpec::relu(4, &[], 2, Head::Linear)).unwrap();
    let mut store = ParamStore::<f64>::new();
    mlp.init(&mut store, &mut rng::stream(0, 0));
    assert!(matches!(mlp_forward(&store, &mlp, &batch()), Err(Error::Shape(_))));
    assert!(Mlp::new("g", MlpSpec { widths: vec![3], activations: vec![], head: Head::Linear }).is_err());
}

#[test]
fn linear_sum_gradient() {
    let mlp = Mlp::new("l", MlpSpec::relu(3, &[], 2, Head::Linear)).unwrap();
    let mut store = ParamStore::<f64>::new();
    mlp.init(&mut store, &mut rng::stream(3, 0));
    let (_, mut tape, out) = mlp_forward(&store, &mlp, &batch()).unwrap();
    let loss = tape.sum_all(out);
    tape.backward(loss, 1.0, &mut store).unwrap();
    let x = batch();
    let gw = store.grad("l.0.w").unwrap();
    for i in 0..3 {
        let col_sum = x[(0, i)] + x[(1, i)];
        for o in 0..2 {
            assert!((gw[(i, o)] - col_sum).abs() < 1e-15);
        }
    }
    assert_eq!(store.grad("l.0.b").unwrap().as_slice(), &[2.0, 2.0]);

    // accumulation: a second sweep doubles the buffers exactly
    let first = store.grad("l.0.w").unwrap().clone();
    tape.backward(loss, 1.0, &mut store).unwrap();
    let second = store.grad("l.0.w").unwrap();
    for (a, b) in first.as_slice().iter().zip(second.as_slice()) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn backward_requires_scalar_output() {
    let mut store = ParamStore::<f64>::new();
    let tape = Tape::<f64>::new();
    let mut other = Tape::<f64>::new();
    let v = other.constant(Matrix::zeros(2, 2));
    assert!(matches!(tape.backward(v, 1.0, &mut store), Err(Error::NoForward)));
    assert!(matches!(other.backward(v, 1.0, &mut store), Err(Error::NoForward)));
}

/// Small graph touching every differentiable op.
fn composite(store: &ParamStore<f64>, per_batch: bool) -> crate::error::Result<(Tape<f64>, Var)> {
    let mut t = Tape::new();
    let x = t.constant(batch());
    let w = t.param(store, "w")?;
    let b = t.param(store, "b")?;
    let h = t.matmul(x, w)?;
    let h = t.add_bias(h, b)?;
    let h = t.relu(h);
    // 8 logits = 2 positions x 2 groups x 2 categories
    let v = t.param(store, "v")?;
    let logits = t.matmul(h, v)?;
    let p = t.softmax_groups(logits, 2)?;
    let p = t.affine(p, 1.0 - 2e-12, 1e-12);
    let lp = t.log(p);
    let noise = Matrix::from_vec(2, 8, (0..16).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect())?;
    let lp = t.add_const(lp, &noise)?;
    let lp = t.scale(lp, 1.0 / 1.5);
    let soft = t.softmax_groups(lp, 2)?;
    let z = t.group_dot(soft, &[-1.0, 1.0], 2, 2)?;
    let z = t.power_normalize(z, 2, 1.0, per_batch)?;
    let q = t.distance_softmax(z, &[Complex::new(-0.7, -0.7), Complex::new(0.7, 0.7), Complex::new(0.7, -0.7)], 0.8)?;
    let zz = t.concat_cols(z, q)?;
    let u = t.param(store, "u")?;
    let o = t.matmul(zz, u)?;
    let ls = t.log_softmax_groups(o, 3)?;
    let picked = t.pick_cols(ls, &[0, 2])?;
    let ce = t.mean_all(picked);
    let target = t.constant(Matrix::filled(2, 3, 0.2));
    let diff = t.sub(o, target)?;
    let sq = t.mul(diff, diff)?;
    let mse = t.sum_all(sq);
    let loss = t.add(ce, mse)?;
    Ok((t, loss))
}

fn composite_store() -> ParamStore<f64> {
    let mut s = ParamStore::new();
    let mut r = rng::stream(99, 0);
    s.insert_glorot("w", 3, 5, &mut r);
    s.insert("b", Matrix::filled(1, 5, 0.1));
    s.insert_glorot("v", 5, 8, &mut r);
    s.insert_glorot("u", 8, 3, &mut r);
    s
}

#[test]
fn composite_matches_finite_differences() {
    for per_batch in [false, true] {
        let report = check_store(&composite_store(), FD_STEP, |s| composite(s, per_batch)).unwrap();
        let worst = report.worst().unwrap();
        assert!(report.max_rel_err() < 1e-4, "per_batch={per_batch}: {worst:?}");
    }
}

#[test]
fn f32_tape_runs() {
    let mlp = Mlp::new("f", MlpSpec::relu(3, &[4], 2, Head::Logits)).unwrap();
    let mut store = ParamStore::<f32>::new();
    mlp.init(&mut store, &mut rng::stream(1, 0));
    let (_, mut tape, out) = mlp_forward(&store, &mlp, &batch().cast()).unwrap();
    let ls = tape.log_softmax_groups(out, 2).unwrap();
    let loss = tape.sum_all(ls);
    tape.backward(loss, 1.0, &mut store).unwrap();
    store.adam_step(1e-3, &AdamConfig::default()).unwrap();
    assert_eq!(store.step(), 1);
}

proptest! {
    #[test]
    fn softmax_shift_invariant(row in prop::collection::vec(-30.0f64..30.0, 6), shift in -100.0f64..100.0) {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Matrix::from_vec(1, 6, row.clone()).unwrap());
        let b = t.constant(Matrix::from_vec(1, 6, row.iter().map(|v| v + shift).collect()).unwrap());
        let sa = t.softmax_groups(a, 3).unwrap();
        let sb = t.softmax_groups(b, 3).unwrap();
        for (x, y) in t.value(sa).as_slice().iter().zip(t.value(sb).as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
