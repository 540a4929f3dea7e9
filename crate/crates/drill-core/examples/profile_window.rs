use drill_core::data::batchify;
use drill_core::model::{Model, ModelConfig};
use drill_core::output::{DropoutSpec, OutputConfig, OutputKind};
use drill_core::tape::Tape;
use drill_core::{Phase, Rng};
use std::time::Instant;

fn main() {
    drill_core::gemm::set_threads(2);
    let model = Model::build(ModelConfig {
        vocab: 2000, embed_dim: 128, hidden: 128, layers: 1, encoder_dropout: 0.0,
        output: OutputConfig { kind: OutputKind::WeightTying, dropout: DropoutSpec::NONE, ..OutputConfig::default() },
    }, 1).unwrap();
    let mut gen = Rng::seed(2);
    let ids: Vec<usize> = (0..10_000).map(|_| gen.below(2000)).collect();
    let bc = batchify(&ids, 128).unwrap();
    let w = bc.bptt_windows(35).next().unwrap();
    let state = model.zero_state(128);
    let mut rng = Rng::seed(3);
    let store = &model.store;

    // warm
    for _ in 0..2 {
        let _ = model.window_run(&w, &state, Phase::Train, &mut rng).unwrap();
    }

    let reps = 5;
    // phase 1: embed + lstm only
    let t = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let e = model.embedding.embed(&mut tape, store, &w.inputs).unwrap();
        let (tops, _) = model.encoder.encode_sequence(&mut tape, store, e, w.steps, &state, Phase::Eval, &mut rng).unwrap();
        let _h = tape.concat_rows(store, &tops).unwrap();
    }
    println!("embed+lstm+concat fwd: {:.1} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    // phase 2: full forward
    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.window_run(&w, &state, Phase::Eval, &mut rng).unwrap();
    }
    let fwd = t.elapsed().as_secs_f64() * 1e3 / reps as f64;
    println!("full forward: {fwd:.1} ms");

    // phase 3: forward + backward
    let t = Instant::now();
    for _ in 0..reps {
        let mut run = model.window_run(&w, &state, Phase::Eval, &mut rng).unwrap();
        let mut store_mut = model.store.clone();
        run.tape.backward(&mut store_mut, run.loss).unwrap();
    }
    let fb = t.elapsed().as_secs_f64() * 1e3 / reps as f64;
    println!("forward+backward (incl store clone): {fb:.1} ms");
}
