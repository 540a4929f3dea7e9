use drill_core::data::batchify;
use drill_core::model::{Model, ModelConfig};
use drill_core::output::{DropoutSpec, OutputConfig, OutputKind};
use drill_core::{Phase, Rng};
use std::time::Instant;

fn main() {
    let mut model = Model::build(ModelConfig {
        vocab: 2000, embed_dim: 128, hidden: 128, layers: 1, encoder_dropout: 0.0,
        output: OutputConfig { kind: OutputKind::WeightTying, dropout: DropoutSpec::NONE, ..OutputConfig::default() },
    }, 1).unwrap();
    let mut gen = Rng::seed(2);
    let ids: Vec<usize> = (0..50_000).map(|_| gen.below(2000)).collect();
    let bc = batchify(&ids, 128).unwrap();
    let mut rng = Rng::seed(3);

    for threads in [1usize, 2, 4] {
        drill_core::gemm::set_threads(threads);
        let t0 = Instant::now();
        let mut state = model.zero_state(128);
        let mut n = 0;
        for w in bc.bptt_windows(35) {
            let run = model.window_run(&w, &state, Phase::Train, &mut rng).unwrap();
            state = run.state;
            model.store.zero_grads();
            let mut tape = run.tape;
            tape.backward(&mut model.store, run.loss).unwrap();
            n += w.targets.len();
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("threads {threads}: {dt:.2}s for {n} tokens  ({:.0} ktok/s)", n as f64 / dt / 1e3);
    }
}
