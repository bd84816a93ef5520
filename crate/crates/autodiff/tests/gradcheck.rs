mod common;

use common::{max_rel_error, Input};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seastate_autodiff::{Mode, PoolKind, RunningStats, Tape, Tensor};

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn check(name: &str, inputs: &[Input], build: &dyn Fn(&mut Tape<f64>, &[Tensor]) -> Tensor) {
    let err = max_rel_error::<f64>(inputs, H, build);
    assert!(err < TOL, "{name}: max relative gradient error {err:e}");
}

/// Values bounded away from zero so ReLU kinks are not straddled.
fn away_from_zero(shape: &[usize], seed: u64) -> Input {
    let mut i = Input::random(shape, seed);
    for v in &mut i.values {
        *v = v.signum() * (0.1 + v.abs());
    }
    i
}

#[test]
fn elementwise_ops() {
    let a = Input::random(&[3, 4], 1);
    let b = Input::random(&[3, 4], 2);
    let row = Input::random(&[4], 3);
    check("add", &[a.clone(), b.clone()], &|t, x| t.add(x[0], x[1]).unwrap());
    check("sub", &[a.clone(), b.clone()], &|t, x| t.sub(x[0], x[1]).unwrap());
    check("mul", &[a.clone(), b.clone()], &|t, x| t.mul(x[0], x[1]).unwrap());
    check("add broadcast", &[a.clone(), row.clone()], &|t, x| t.add(x[0], x[1]).unwrap());
    check("mul broadcast", &[a.clone(), row.clone()], &|t, x| t.mul(x[0], x[1]).unwrap());
    check("scale", std::slice::from_ref(&a), &|t, x| t.scale(x[0], -2.5));
    check("tanh", std::slice::from_ref(&a), &|t, x| t.tanh(x[0]));
    check("relu", &[away_from_zero(&[3, 4], 4)], &|t, x| t.relu(x[0]));
}

#[test]
fn matmul_shared_and_batched() {
    check("matmul 4x5·5x3", &[Input::random(&[4, 5], 10), Input::random(&[5, 3], 11)], &|t, x| {
        t.matmul(x[0], x[1]).unwrap()
    });
    check("matmul shared weight", &[Input::random(&[2, 4, 5], 12), Input::random(&[5, 3], 13)], &|t, x| {
        t.matmul(x[0], x[1]).unwrap()
    });
    check("matmul batched", &[Input::random(&[2, 4, 5], 14), Input::random(&[2, 5, 3], 15)], &|t, x| {
        t.matmul(x[0], x[1]).unwrap()
    });
}

#[test]
fn shape_ops() {
    check("transpose", &[Input::random(&[2, 3, 4], 20)], &|t, x| t.transpose(x[0]).unwrap());
    check("reshape", &[Input::random(&[2, 3, 4], 21)], &|t, x| t.reshape(x[0], &[6, 4]).unwrap());
    check("concat", &[Input::random(&[2, 3], 22), Input::random(&[2, 2], 23)], &|t, x| {
        t.concat_last(&[x[0], x[1]]).unwrap()
    });
    check("sum", &[Input::random(&[5], 24)], &|t, x| t.sum(x[0]));
    check("mean", &[Input::random(&[5], 25)], &|t, x| t.mean(x[0]));
}

#[test]
fn convolution() {
    check(
        "conv2d batched with bias",
        &[Input::random(&[2, 2, 3, 7], 30), Input::random(&[3, 2, 2, 3], 31), Input::random(&[3], 32)],
        &|t, x| t.conv2d_valid(x[0], x[1], Some(x[2])).unwrap(),
    );
    check("conv2d unbatched", &[Input::random(&[3, 1, 9], 33), Input::random(&[2, 3, 1, 4], 34)], &|t, x| {
        t.conv2d_valid(x[0], x[1], None).unwrap()
    });
}

#[test]
fn pooling() {
    // distinct, well separated values so the max never switches under ±h
    let vals: Vec<f64> = [3, 7, 1, 9, 4, 8, 2, 6, 5, 0, 11, 10].iter().map(|&v| v as f64 * 0.1).collect();
    check("max pool", &[Input::new(&[2, 6], vals.clone())], &|t, x| t.pool(x[0], PoolKind::Max, 3).unwrap());
    check("avg pool", &[Input::new(&[2, 6], vals)], &|t, x| t.pool(x[0], PoolKind::Avg, 4).unwrap());
}

#[test]
fn normalisations() {
    check("softmax", &[Input::random(&[3, 5], 40)], &|t, x| t.softmax_lastaxis(x[0]).unwrap());
    check("scaled softmax", &[Input::random(&[3, 5], 48)], &|t, x| t.softmax_scaled(x[0], 0.3).unwrap());
    check("layer norm", &[Input::random(&[3, 5], 41)], &|t, x| t.layer_norm(x[0]).unwrap());
    check(
        "batch norm train",
        &[Input::random(&[4, 3], 42), Input::random(&[3], 43), Input::random(&[3], 44)],
        &|t, x| t.batch_norm_train(x[0], x[1], x[2]).unwrap().0,
    );
    let stats = RunningStats { mean: vec![0.2, -0.1, 0.4], var: vec![1.5, 0.7, 2.0], momentum: 0.9 };
    check(
        "batch norm infer",
        &[Input::random(&[4, 3], 45), Input::random(&[3], 46), Input::random(&[3], 47)],
        &|t, x| t.batch_norm_infer(x[0], x[1], x[2], &stats).unwrap(),
    );
}

#[test]
fn dropout_with_fixed_mask() {
    check("dropout", &[Input::random(&[4, 6], 50)], &|t, x| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        t.dropout(x[0], 0.3, Mode::Train, &mut rng).unwrap()
    });
}

#[test]
fn attention_composite() {
    // softmax(q·kᵀ/√d)·v on one shared input, exercising fan-out through
    // transpose, batched matmul and softmax together.
    check("self attention", &[Input::random(&[1, 4, 3], 60), Input::random(&[3, 3], 61)], &|t, x| {
        let q = t.matmul(x[0], x[1]).unwrap();
        let kt = t.transpose(x[0]).unwrap();
        let s = t.matmul(q, kt).unwrap();
        let s = t.scale(s, 1.0 / 3f64.sqrt());
        let a = t.softmax_lastaxis(s).unwrap();
        let o = t.matmul(a, x[0]).unwrap();
        let r = t.add(o, x[0]).unwrap();
        t.layer_norm(r).unwrap()
    });
}

#[test]
fn fused_attention() {
    let inputs = [Input::random(&[2, 5, 3], 62), Input::random(&[2, 5, 3], 63), Input::random(&[2, 5, 4], 64)];
    check("fused attention", &inputs, &|t, x| t.attention(x[0], x[1], x[2], 0.7).unwrap());
}

#[test]
fn fused_attention_matches_composite() {
    let mut tape = Tape::<f64>::new();
    let q = tape.param(&[2, 4, 3], Input::random(&[2, 4, 3], 65).values).unwrap();
    let k = tape.param(&[2, 4, 3], Input::random(&[2, 4, 3], 66).values).unwrap();
    let v = tape.param(&[2, 4, 2], Input::random(&[2, 4, 2], 67).values).unwrap();
    let fused = tape.attention(q, k, v, 0.4).unwrap();
    let kt = tape.transpose(k).unwrap();
    let s = tape.matmul(q, kt).unwrap();
    let w = tape.softmax_scaled(s, 0.4).unwrap();
    let composite = tape.matmul(w, v).unwrap();
    for (a, b) in tape.value(fused).iter().zip(tape.value(composite)) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(tape.attention(q, v, v, 1.0).is_err());
}

#[test]
fn identity_loss_has_unit_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(&[], vec![4.2]).unwrap();
    tape.backward(x).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0]);
}

#[test]
fn sum_of_squares() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(&[2], vec![1.0, 2.0]).unwrap();
    let sq = tape.mul(x, x).unwrap();
    let l = tape.sum(sq);
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn fan_out_accumulates_both_branches() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(&[3], vec![0.5, -1.0, 2.0]).unwrap();
    let a = tape.scale(x, 3.0);
    let b = tape.tanh(x);
    let s = tape.add(a, b).unwrap();
    let l = tape.sum(s);
    tape.backward(l).unwrap();
    for (g, v) in tape.grad(x).unwrap().iter().zip([0.5f64, -1.0, 2.0]) {
        let want = 3.0 + (1.0 - v.tanh().powi(2));
        assert!((g - want).abs() < 1e-12);
    }
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(&[2], vec![1.0, 2.0]).unwrap();
    assert!(matches!(tape.backward(x), Err(seastate_autodiff::Error::Argument(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(&[2], vec![1.0, 2.0]).unwrap();
    let c = tape.constant(&[2], vec![3.0, 4.0]).unwrap();
    let p = tape.mul(x, c).unwrap();
    let l = tape.sum(p);
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[3.0, 4.0]);
    assert!(tape.grad(c).is_none());
}
