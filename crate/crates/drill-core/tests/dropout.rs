//! Dropout semantics through the label encoder: variational masks locked
//! across label rows, standard masks independent, unit expectation, and
//! eval-phase identity.

use drill_core::output::{sample_mask, DropoutMode, DropoutSpec, OutputConfig, OutputKind, OutputLayer};
use drill_core::tape::{ActKind, ParamStore, Tape};
use drill_core::{Phase, Rng, Tensor};

fn drill_layer(
    store: &mut ParamStore,
    vocab: usize,
    d: usize,
    mode: DropoutMode,
    rate: f64,
    rng: &mut Rng,
) -> OutputLayer {
    let cfg = OutputConfig {
        kind: OutputKind::Drill,
        depth: 1,
        activation: ActKind::Tanh,
        dropout: DropoutSpec::new(mode, rate).unwrap(),
        input_skip: true,
        interlayer_residual: false,
        d_joint: None,
    };
    OutputLayer::build(store, &cfg, vocab, d, d, rng).unwrap()
}

fn encode_values(store: &ParamStore, layer: &OutputLayer, e: usize, phase: Phase, rng: &mut Rng) -> Vec<f64> {
    let mut tape = Tape::new();
    let en = tape.param(store, e);
    let enc = layer.label_encoder().unwrap();
    let out = enc.encode(&mut tape, store, en, phase, rng).unwrap();
    tape.value(store, out).values().to_vec()
}

#[test]
fn variational_mask_locked_within_one_encode_call() {
    // with U = 0, bias = 1, and no skip path, the layer output is the
    // dropout mask applied to a constant row, exposing it row by row
    let mut rng = Rng::seed(10);
    let (vocab, d) = (64, 6);
    let cfg = OutputConfig {
        kind: OutputKind::Drill,
        depth: 1,
        activation: ActKind::Tanh,
        dropout: DropoutSpec::new(DropoutMode::Variational, 0.5).unwrap(),
        input_skip: false,
        interlayer_residual: false,
        d_joint: None,
    };
    let mut store = ParamStore::new();
    let e = store.add("E", Tensor::zeros(vocab, d)).unwrap();
    let layer = OutputLayer::build(&mut store, &cfg, vocab, d, d, &mut rng).unwrap();
    let (u, b_u) = layer.label_encoder().unwrap().layers[0];
    store.value_mut(u).fill(0.0);
    store.value_mut(b_u).fill(1.0);

    let vals = encode_values(&store, &layer, e, Phase::Train, &mut Rng::seed(77));
    let first: Vec<f64> = vals[..d].to_vec();
    assert!(first.iter().any(|&v| v == 0.0), "expected zeroed coordinates at p=0.5");
    for r in 1..vocab {
        assert_eq!(&vals[r * d..(r + 1) * d], &first[..], "row {r} saw a different mask");
    }
}

#[test]
fn standard_masks_vary_across_rows_within_one_call() {
    let mut rng = Rng::seed(11);
    let cfg = OutputConfig {
        kind: OutputKind::Drill,
        depth: 1,
        activation: ActKind::Tanh,
        dropout: DropoutSpec::new(DropoutMode::Standard, 0.5).unwrap(),
        input_skip: false,
        interlayer_residual: false,
        d_joint: None,
    };
    let (vocab, d) = (64, 6);
    let mut store = ParamStore::new();
    let e = store.add("E", Tensor::zeros(vocab, d)).unwrap();
    let layer = OutputLayer::build(&mut store, &cfg, vocab, d, d, &mut rng).unwrap();
    let enc = layer.label_encoder().unwrap();
    let (u, b_u) = enc.layers[0];
    store.value_mut(u).fill(0.0);
    store.value_mut(b_u).fill(1.0);

    let vals = encode_values(&store, &layer, e, Phase::Train, &mut Rng::seed(78));
    let first: Vec<f64> = vals[..d].to_vec();
    assert!((1..vocab).any(|r| vals[r * d..(r + 1) * d] != first[..]));
}

#[test]
fn standard_zero_fraction_within_binomial_six_sigma_over_1e6() {
    let mut rng = Rng::seed(12);
    let p = 0.3;
    let spec = DropoutSpec::new(DropoutMode::Standard, p).unwrap();
    let mask = sample_mask(&spec, 1000, 1000, &mut rng).unwrap();
    let zeros = mask.values().iter().filter(|&&v| v == 0.0).count();
    let n = 1_000_000f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    let bound = 6.0 * sigma / n;
    let frac = zeros as f64 / n;
    assert!((frac - p).abs() < bound, "zero fraction {frac} vs p {p} (6σ {bound})");
}

#[test]
fn train_mean_over_many_draws_matches_eval_output() {
    // single layer: dropout enters linearly (after the nonlinearity), so
    // the expectation over masks equals the eval output exactly and the
    // 1e4-draw mean must land within 2% in norm
    let mut rng = Rng::seed(13);
    let (vocab, d) = (40, 8);
    for mode in [DropoutMode::Standard, DropoutMode::Variational] {
        let mut store = ParamStore::new();
        let e = store.add("E", Tensor::uniform(&mut rng, vocab, d, -1.0, 1.0)).unwrap();
        let layer = drill_layer(&mut store, vocab, d, mode, 0.3, &mut rng);

        let eval_out = encode_values(&store, &layer, e, Phase::Eval, &mut Rng::seed(0));

        let draws = 10_000;
        let mut mean = vec![0.0f64; eval_out.len()];
        let mut draw_rng = Rng::seed(500);
        for _ in 0..draws {
            let v = encode_values(&store, &layer, e, Phase::Train, &mut draw_rng);
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= draws as f64;
        }

        let mut num = 0.0;
        let mut den = 0.0;
        for (m, ev) in mean.iter().zip(eval_out.iter()) {
            num += (m - ev) * (m - ev);
            den += ev * ev;
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.02, "{mode:?}: train-mean deviates {:.3}% from eval", rel * 100.0);
    }
}

#[test]
fn eval_phase_never_consumes_randomness_or_masks() {
    let mut rng = Rng::seed(14);
    let (vocab, d) = (12, 5);
    let mut store = ParamStore::new();
    let e = store.add("E", Tensor::uniform(&mut rng, vocab, d, -1.0, 1.0)).unwrap();
    let layer = drill_layer(&mut store, vocab, d, DropoutMode::Variational, 0.6, &mut rng);

    let mut r1 = Rng::seed(1);
    let a = encode_values(&store, &layer, e, Phase::Eval, &mut r1);
    let b = encode_values(&store, &layer, e, Phase::Eval, &mut Rng::seed(2));
    assert_eq!(a, b, "eval output must not depend on the rng");
    // the rng state is untouched by eval
    assert_eq!(r1.next_u64(), Rng::seed(1).next_u64());
}

#[test]
fn rate_zero_train_equals_eval_for_all_modes() {
    let mut rng = Rng::seed(15);
    let (vocab, d) = (10, 4);
    for mode in [DropoutMode::None, DropoutMode::Standard, DropoutMode::Variational] {
        let mut store = ParamStore::new();
        let e = store.add("E", Tensor::uniform(&mut rng, vocab, d, -1.0, 1.0)).unwrap();
        let layer = drill_layer(&mut store, vocab, d, mode, 0.0, &mut rng);
        let train = encode_values(&store, &layer, e, Phase::Train, &mut Rng::seed(9));
        let eval = encode_values(&store, &layer, e, Phase::Eval, &mut Rng::seed(10));
        assert_eq!(train, eval, "{mode:?} at rate 0 must be the identity");
    }
}
