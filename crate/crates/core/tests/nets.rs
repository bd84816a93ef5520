use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seastate_autodiff::Tape;
use seastate_core::nets::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Architecture, AtNnConfig, CnnRegConfig,
    ForwardMode, MhaConfig, Model,
};
use seastate_core::Error;

fn tiny_at_nn() -> Architecture {
    Architecture::AtNn(AtNnConfig {
        signal_len: 101,
        token_size: 25,
        n_embeddings: 8,
        n_blocks: 1,
        mha: MhaConfig::default(),
        head_widths: vec![16, 8, 3],
        dropout_p: 0.1,
    })
}

fn tiny_cnn(kappa: usize) -> Architecture {
    Architecture::CnnReg(CnnRegConfig { signal_len: 101, kappa, pool_window: 3, dropout_p: 0.25 })
}

fn batch(b: usize, l: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..b * 3 * l).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn outputs_are_nonnegative_triples() {
    for arch in [tiny_at_nn(), tiny_cnn(1)] {
        let m = Model::<f32>::build(arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let y = m.predict(batch(4, 101, 2), 4).unwrap();
        assert_eq!(y.len(), 12);
        assert!(y.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn infer_is_deterministic_and_rowwise() {
    for arch in [tiny_at_nn(), tiny_cnn(1)] {
        let m = Model::<f32>::build(arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = batch(3, 101, 4);
        let a = m.predict(x.clone(), 3).unwrap();
        assert_eq!(a, m.predict(x.clone(), 3).unwrap());
        // swap records 0 and 2
        let n = 3 * 101;
        let mut swapped = x[2 * n..].to_vec();
        swapped.extend_from_slice(&x[n..2 * n]);
        swapped.extend_from_slice(&x[..n]);
        let b = m.predict(swapped, 3).unwrap();
        assert_eq!(&a[0..3], &b[6..9]);
        assert_eq!(&a[3..6], &b[3..6]);
        assert_eq!(&a[6..9], &b[0..3]);
    }
}

#[test]
fn wrong_signal_length_is_a_shape_error() {
    let m = Model::<f32>::build(tiny_at_nn(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let err = m.predict(batch(1, 100, 0), 1).unwrap_err();
    assert!(matches!(err, Error::Tensor(seastate_autodiff::Error::Shape(_))), "{err}");
}

#[test]
fn inconsistent_configs_are_rejected() {
    let long_token = Architecture::AtNn(AtNnConfig { signal_len: 101, token_size: 125, ..AtNnConfig::default() });
    assert!(Model::<f32>::build(long_token, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    let short = Architecture::CnnReg(CnnRegConfig { signal_len: 30, pool_window: 5, ..CnnRegConfig::default() });
    let err = Model::<f32>::build(short, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, Error::Tensor(seastate_autodiff::Error::Shape(_))));
}

#[test]
fn cnn_width_follows_kappa() {
    let mut counts = Vec::new();
    for kappa in 1..=3 {
        let m = Model::<f32>::build(tiny_cnn(kappa), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.param("conv1.kernel").unwrap().shape[0], 48 * kappa);
        assert_eq!(m.param("dense.weight").unwrap().shape[1], 30 * kappa);
        counts.push(m.n_params());
    }
    assert!(counts.windows(2).all(|w| w[0] < w[1]));
    let cfg = CnnRegConfig { kappa: 10, ..CnnRegConfig::default() };
    assert_eq!(cfg.filters(), 480);
}

#[test]
fn glorot_bounds_and_zero_biases() {
    let m = Model::<f64>::build(tiny_at_nn(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let w = m.param("dense0.weight").unwrap();
    let lim = (6.0 / (w.shape[0] + w.shape[1]) as f64).sqrt();
    assert!(w.value.iter().all(|v| v.abs() < lim));
    assert!(m.param("out.bias").unwrap().value.iter().all(|&v| v == 0.0));
    assert!(m.param("bn0.gamma").unwrap().value.iter().all(|&v| v == 1.0));
}

#[test]
fn train_mode_updates_running_stats_only_when_applied() {
    let mut m = Model::<f32>::build(tiny_at_nn(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let before = m.running_stats().to_vec();
    let mut tape = Tape::new();
    let bound = m.bind(&mut tape, true).unwrap();
    let x = m.input(&mut tape, batch(4, 101, 9), 4).unwrap();
    let out = m.forward(&mut tape, &bound, x, ForwardMode::Train, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(out.batch_stats.len(), 2);
    assert_eq!(m.running_stats(), &before[..]);
    m.apply_batch_stats(&out.batch_stats);
    assert_ne!(m.running_stats(), &before[..]);
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for arch in [tiny_at_nn(), tiny_cnn(2)] {
        let m = Model::<f32>::build(arch, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let path = dir.path().join(format!("{}.ckpt", m.kind()));
        save_checkpoint(&m, &path).unwrap();
        let back: Model<f32> = load_checkpoint(&path, Some(m.kind())).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.running_stats(), m.running_stats());
        let x = batch(2, 101, 1);
        let a: Vec<u32> = m.predict(x.clone(), 2).unwrap().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.predict(x, 2).unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn checkpoint_corruption_is_detected() {
    let m = Model::<f32>::build(tiny_cnn(1), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let bytes = encode_checkpoint(&m).unwrap();
    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(decode_checkpoint::<f32>(truncated, None), Err(Error::Data(_))));
    let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).to_string();
    let bad = text.replacen("\"offset\":0", "\"offset\":4", 1);
    assert_ne!(bad, text);
    let mut corrupt = bad.into_bytes();
    corrupt.extend_from_slice(&bytes[text.len()..]);
    assert!(matches!(decode_checkpoint::<f32>(&corrupt, None), Err(Error::Data(_))));
    let versioned = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
    let mut v2 = versioned.into_bytes();
    v2.extend_from_slice(&bytes[text.len()..]);
    assert!(matches!(decode_checkpoint::<f32>(&v2, None), Err(Error::Data(_))));
    assert!(matches!(decode_checkpoint::<f32>(&bytes, Some("at_nn")), Err(Error::KindMismatch { .. })));
}

#[test]
fn mc_dropout_mode_uses_running_stats() {
    // with dropout disabled, MC mode must match infer exactly
    let arch = Architecture::AtNn(AtNnConfig { dropout_p: 0.0, ..match tiny_at_nn() {
        Architecture::AtNn(c) => c,
        _ => unreachable!(),
    } });
    let m = Model::<f32>::build(arch, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let x = batch(2, 101, 3);
    let mut tape = Tape::new();
    let bound = m.bind(&mut tape, false).unwrap();
    let xi = m.input(&mut tape, x.clone(), 2).unwrap();
    let out = m.forward(&mut tape, &bound, xi, ForwardMode::McDropout, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(tape.value(out.output), &m.predict(x, 2).unwrap()[..]);
}
