//! Per-epoch wall-clock benchmark across output-layer variants: identical
//! data, encoder, and seed; one warm-up epoch, then the mean of timed
//! repetitions, normalized to the weight_tying row.

use std::time::Instant;

use drill_core::data::batchify;
use drill_core::model::Model;
use drill_core::optim::{clip_gradients, Optimizer};
use drill_core::output::OutputKind;
use drill_core::{Phase, Rng};

use crate::config::{RunConfig, Variant};
use crate::corpus::Corpus;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub label: String,
    pub mean_seconds: f64,
    pub ratio_vs_tied: f64,
}

fn one_epoch(model: &mut Model, optimizer: &mut Optimizer, cfg: &RunConfig, corpus: &Corpus, rng: &mut Rng) -> Result<f64, CliError> {
    let tcfg = &cfg.training;
    let bc = batchify(&corpus.train, tcfg.batch_size).map_err(CliError::Core)?;
    let start = Instant::now();
    let mut state = model.zero_state(tcfg.batch_size);
    for window in bc.bptt_windows(tcfg.bptt_len) {
        let run = model
            .window_run(&window, &state, Phase::Train, rng)
            .map_err(CliError::Core)?;
        state = run.state;
        model.store.zero_grads();
        let mut tape = run.tape;
        tape.backward(&mut model.store, run.loss).map_err(CliError::Core)?;
        clip_gradients(&mut model.store, tcfg.clip_norm);
        optimizer.step(&mut model.store, tcfg.lr);
    }
    Ok(start.elapsed().as_secs_f64())
}

pub fn epoch_benchmark(
    cfg: &RunConfig,
    corpus: &Corpus,
    variants: &[Variant],
    repetitions: usize,
) -> Result<Vec<BenchRow>, CliError> {
    if repetitions < 3 {
        return Err(CliError::Config(format!(
            "bench.repetitions must be >= 3, got {repetitions}"
        )));
    }
    if !variants
        .iter()
        .any(|v| v.output.kind == OutputKind::WeightTying)
    {
        return Err(CliError::Config(
            "bench.kinds must include weight_tying (ratios are normalized to it)".into(),
        ));
    }

    let seed = cfg.seeds[0];
    let mut means = Vec::with_capacity(variants.len());
    for variant in variants {
        let mut model_cfg = cfg.model_config(corpus.vocab.len());
        model_cfg.output = variant.output.clone();
        let mut model = Model::build(model_cfg, seed).map_err(CliError::Core)?;
        let mut optimizer = Optimizer::new(cfg.training.optimizer, &model.store);
        let mut rng = Rng::seed(seed ^ 0x6265_6e63);

        // warm-up epoch, untimed
        one_epoch(&mut model, &mut optimizer, cfg, corpus, &mut rng)?;
        let mut total = 0.0;
        for _ in 0..repetitions {
            total += one_epoch(&mut model, &mut optimizer, cfg, corpus, &mut rng)?;
        }
        means.push((variant.label.clone(), total / repetitions as f64));
    }

    let tied_pos = variants
        .iter()
        .position(|v| v.output.kind == OutputKind::WeightTying)
        .unwrap();
    let tied_mean = means[tied_pos].1;
    Ok(means
        .into_iter()
        .map(|(label, mean_seconds)| BenchRow {
            label,
            mean_seconds,
            ratio_vs_tied: mean_seconds / tied_mean,
        })
        .collect())
}
