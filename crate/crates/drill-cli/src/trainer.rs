//! The training loop: BPTT windows with threaded (detached) state,
//! gradient clipping, plateau learning-rate decay, divergence abort, and
//! best-validation checkpointing via callback.

use std::time::Instant;

use drill_core::data::batchify;
use drill_core::eval::perplexity;
use drill_core::model::Model;
use drill_core::optim::{clip_gradients, Optimizer};
use drill_core::{Phase, Rng};

use crate::config::TrainingConfig;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ppl: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub rows: Vec<EpochRow>,
    pub best_val_ppl: f64,
    pub best_epoch: usize,
    pub total_seconds: f64,
}

/// Batch size for in-training validation: the training batch, shrunk when
/// the split is too short for it.
pub fn val_batch(valid_len: usize, train_batch: usize) -> usize {
    train_batch.clamp(1, (valid_len / 2).max(1))
}

/// Train for the configured number of epochs. `on_best` runs after every
/// epoch that improves validation perplexity (checkpointing lives there).
pub fn train_model(
    model: &mut Model,
    optimizer: &mut Optimizer,
    train_ids: &[usize],
    valid_ids: &[usize],
    tcfg: &TrainingConfig,
    seed: u64,
    mut on_best: impl FnMut(&Model, &Optimizer, usize, f64) -> Result<(), CliError>,
) -> Result<TrainResult, CliError> {
    let corpus = batchify(train_ids, tcfg.batch_size).map_err(CliError::Core)?;
    let vbatch = val_batch(valid_ids.len(), tcfg.batch_size);
    let mut rng = Rng::seed(seed ^ 0x7472_6169);
    let mut lr = tcfg.lr;
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_improvement = 0;
    let mut rows = Vec::with_capacity(tcfg.epochs);
    let run_start = Instant::now();

    for epoch in 1..=tcfg.epochs {
        let epoch_start = Instant::now();
        let mut state = model.zero_state(tcfg.batch_size);
        let mut loss_sum = 0.0;
        let mut token_count = 0usize;

        for (wi, window) in corpus.bptt_windows(tcfg.bptt_len).enumerate() {
            let run = model
                .window_run(&window, &state, Phase::Train, &mut rng)
                .map_err(CliError::Core)?;
            if !run.loss_value.is_finite() {
                return Err(CliError::Data(format!(
                    "training diverged: non-finite loss at window {wi} of epoch {epoch}"
                )));
            }
            state = run.state;
            let tokens = window.targets.len();
            loss_sum += run.loss_value * tokens as f64;
            token_count += tokens;

            model.store.zero_grads();
            let mut tape = run.tape;
            tape.backward(&mut model.store, run.loss).map_err(CliError::Core)?;
            clip_gradients(&mut model.store, tcfg.clip_norm);
            optimizer.step(&mut model.store, lr);
        }

        let train_loss = loss_sum / token_count as f64;
        let val_ppl =
            perplexity(model, valid_ids, vbatch, tcfg.bptt_len).map_err(CliError::Core)?;
        if !val_ppl.is_finite() {
            return Err(CliError::Data(format!(
                "training diverged: non-finite validation perplexity after epoch {epoch}"
            )));
        }

        if val_ppl < best {
            best = val_ppl;
            best_epoch = epoch;
            since_improvement = 0;
            on_best(model, optimizer, epoch, val_ppl)?;
        } else {
            since_improvement += 1;
            if since_improvement >= tcfg.patience {
                lr *= tcfg.lr_decay_factor;
                since_improvement = 0;
            }
        }

        rows.push(EpochRow {
            epoch,
            train_loss,
            val_ppl,
            lr,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainResult {
        rows,
        best_val_ppl: best,
        best_epoch,
        total_seconds: run_start.elapsed().as_secs_f64(),
    })
}

/// The plateau schedule in isolation: feed validation values, get the lr
/// trajectory. Used by the lr-decay tests and kept next to the loop so
/// the two cannot drift apart.
pub fn plateau_schedule(lr0: f64, factor: f64, patience: usize, val_ppls: &[f64]) -> Vec<f64> {
    let mut lr = lr0;
    let mut best = f64::INFINITY;
    let mut since = 0;
    let mut out = Vec::with_capacity(val_ppls.len());
    for &v in val_ppls {
        if v < best {
            best = v;
            since = 0;
        } else {
            since += 1;
            if since >= patience {
                lr *= factor;
                since = 0;
            }
        }
        out.push(lr);
    }
    out
}
