use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Checks backward against central differences for every input of `build`,
/// using a random linear functional of the output as the loss.
fn check(shapes: &[&[usize]], build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(shapes.len() as u64 + 11);
    let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| random(s, &mut rng)).collect();
    let run = |inputs: &[Tensor<f64>], weights: Option<&Tensor<f64>>| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out, weights.cloned())
    };
    let (probe, _, out, _) = run(&inputs, None);
    let weights = random(probe.shape(out), &mut rng);
    let loss_of = |inputs: &[Tensor<f64>]| {
        let (mut tape, _, out, _) = run(inputs, None);
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w).unwrap();
        let l = tape.sum(prod);
        (tape, l)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).unwrap();

    for (i, x) in inputs.iter().enumerate() {
        let numeric = finite_diff(x, 1e-5, |probe| {
            let mut ins = inputs.clone();
            ins[i] = probe.clone();
            let (tape, l) = loss_of(&ins);
            tape.value(l).data()[0]
        });
        let analytic = grads.wrt(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "input {i}: relative error {err:e}");
    }
}

#[test]
fn grad_matmul() {
    check(&[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1]).unwrap());
    check(&[&[2, 3, 4], &[4, 5]], |t, v| t.matmul(v[0], v[1]).unwrap());
}

#[test]
fn grad_bmm() {
    check(&[&[2, 3, 4], &[2, 4, 5]], |t, v| t.bmm(v[0], v[1], false).unwrap());
    check(&[&[2, 3, 4], &[2, 5, 4]], |t, v| t.bmm(v[0], v[1], true).unwrap());
}

#[test]
fn grad_elementwise() {
    check(&[&[2, 3], &[2, 3]], |t, v| {
        let a = t.add(v[0], v[1]).unwrap();
        let s = t.sub(a, v[1]).unwrap();
        let m = t.mul(s, v[1]).unwrap();
        t.mul(m, m).unwrap()
    });
    check(&[&[2, 3], &[3]], |t, v| t.add_bias(v[0], v[1]).unwrap());
    check(&[&[1, 3], &[4, 3]], |t, v| {
        let b = t.broadcast_to(v[0], &[4, 3]).unwrap();
        t.mul(b, v[1]).unwrap()
    });
    check(&[&[2, 3]], |t, v| t.scale(v[0], -2.5));
}

#[test]
fn grad_shape_ops() {
    check(&[&[2, 3, 4]], |t, v| {
        let p = t.permute(v[0], &[1, 2, 0]).unwrap();
        t.reshape(p, &[12, 2]).unwrap()
    });
}

#[test]
fn grad_softmax_layer_norm_gelu() {
    check(&[&[3, 5]], |t, v| t.softmax(v[0]));
    check(&[&[3, 4], &[4], &[4]], |t, v| t.layer_norm(v[0], v[1], v[2]).unwrap());
    check(&[&[3, 4]], |t, v| t.gelu(v[0]));
}

#[test]
fn grad_spectral() {
    for len in [2usize, 3, 8, 9] {
        check(&[&[2, len]], |t, v| t.rdft(v[0]).unwrap());
        check(&[&[2, len]], |t, v| {
            let s = t.rdft(v[0]).unwrap();
            let keep = bins_for(len).div_ceil(2);
            let f = t.low_pass(s, keep).unwrap();
            t.irdft(f, len).unwrap()
        });
    }
    // irdft on an arbitrary spectrum (imaginary DC/Nyquist are ignored)
    check(&[&[2, 5, 2]], |t, v| t.irdft(v[0], 8).unwrap());
    check(&[&[2, 5, 2]], |t, v| t.irdft(v[0], 9).unwrap());
}

#[test]
fn grad_reductions() {
    check(&[&[2, 3]], |t, v| t.mean(v[0]));
    check(&[&[2, 3], &[2, 3]], |t, v| t.mse(v[0], v[1]).unwrap());
}

#[test]
fn grad_composite_linear_gelu_layer_norm() {
    check(&[&[3, 4], &[4, 5], &[5], &[5], &[5]], |t, v| {
        let h = t.matmul(v[0], v[1]).unwrap();
        let h = t.add_bias(h, v[2]).unwrap();
        let h = t.gelu(h);
        let h = t.layer_norm(h, v[3], v[4]).unwrap();
        t.sum(h)
    });
}

#[test]
fn sum_of_squares_gradient_is_twice_x() {
    let mut store = ParamStore::<f64>::new();
    let x = Tensor::from_vec([3], vec![1.0, -2.0, 0.5]);
    let id = store.insert("x", x.clone());
    let mut tape = Tape::new();
    let v = tape.param(store.get(id));
    let sq = tape.mul(v, v).unwrap();
    let loss = tape.sum(sq);
    let grads = tape.backward(loss).unwrap();
    store.accumulate(&grads, 1.0);
    assert_eq!(store.get(id).grad().data(), &[2.0, -4.0, 1.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::zeros([2]));
    assert!(matches!(tape.backward(x), Err(crate::Error::NonScalarLoss(_))));
}

#[test]
fn repeated_backward_with_zero_grad_is_idempotent() {
    let mut store = ParamStore::<f64>::new();
    let w = store.insert("w", Tensor::from_vec([2, 2], vec![0.3, -0.7, 1.1, 0.2]));
    let run = |store: &ParamStore<f64>| {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec([1, 2], vec![0.5, -1.5]));
        let wv = tape.param(store.get(w));
        let h = tape.matmul(x, wv).unwrap();
        let h = tape.gelu(h);
        let l = tape.sum(h);
        tape.backward(l).unwrap()
    };
    let g1 = run(&store);
    store.accumulate(&g1, 1.0);
    let first = store.get(w).grad().clone();
    store.zero_grad();
    assert!(store.get(w).grad().data().iter().all(|&g| g == 0.0));
    let g2 = run(&store);
    store.accumulate(&g2, 1.0);
    assert_eq!(store.get(w).grad(), &first);
}

#[test]
fn shared_parameter_loads_accumulate_once() {
    let mut store = ParamStore::<f64>::new();
    let w = store.insert("w", Tensor::from_vec([1], vec![3.0]));
    let mut tape = Tape::new();
    let a = tape.param(store.get(w));
    let b = tape.param(store.get(w));
    assert_eq!(a, b);
    let p = tape.mul(a, b).unwrap();
    let l = tape.sum(p);
    let grads = tape.backward(l).unwrap();
    assert_eq!(grads.params().count(), 1);
    store.accumulate(&grads, 1.0);
    assert_eq!(store.get(w).grad().data(), &[6.0]);
}

#[test]
fn finite_diff_examples() {
    let g = finite_diff(&Tensor::<f64>::scalar(3.0), 1e-5, |x| x.data()[0] * x.data()[0]);
    assert!((g.data()[0] - 6.0).abs() < 1e-6);
    let g = finite_diff(&Tensor::<f64>::zeros([4]), 1e-5, |_| 7.0);
    assert!(g.data().iter().all(|&v| v == 0.0));
}

#[test]
fn dropout_only_on_training_tapes() {
    let x = Tensor::<f64>::full([1000], 1.0);
    let mut eval = Tape::new();
    let v = eval.input(x.clone());
    assert_eq!(eval.dropout(v, 0.5), v);
    let mut train = Tape::training(3);
    let v = train.input(x.clone());
    let d = train.dropout(v, 0.5);
    let vals = train.value(d).data();
    assert!(vals.iter().all(|&x| x == 0.0 || x == 2.0));
    let kept = vals.iter().filter(|&&x| x > 0.0).count();
    assert!((400..600).contains(&kept));
}

#[test]
fn forward_is_deterministic() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&[4, 6], &mut rng);
        let b = random(&[6, 3], &mut rng);
        let mut t = Tape::<f32>::new();
        let (a, b) = (t.constant(a.cast()), t.constant(b.cast()));
        let m = t.matmul(a, b).unwrap();
        let s = t.softmax(m);
        t.value(s).clone()
    };
    assert_eq!(build().data(), build().data());
}

mod props {
    use proptest::prelude::*;

    use super::super::*;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let n = v.len();
            let s = softmax(&Tensor::<f64>::from_vec([n], v));
            prop_assert!((s.sum() - 1.0).abs() < 1e-9);
            prop_assert!(s.data().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn rdft_roundtrip(v in proptest::collection::vec(-10.0f64..10.0, 2..130)) {
            let n = v.len();
            let x = Tensor::<f64>::from_vec([n], v);
            let back = irdft(&rdft(&x).unwrap(), n).unwrap();
            prop_assert!(back.max_abs_diff(&x) < 1e-11);
        }
    }
}
