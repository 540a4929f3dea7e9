//! The complete language model: shared embedding table, LSTM context
//! encoder, and one output layer, with the per-window loss used by both
//! training and evaluation.

use alloc::format;
use alloc::vec::Vec;

use crate::data::Window;
use crate::error::Error;
use crate::lstm::{EmbeddingTable, LstmStack, LstmState};
use crate::output::{OutputConfig, OutputLayer};
use crate::rng::Rng;
use crate::tape::{NodeId, ParamStore, Tape};
use crate::{Phase, Result};

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub vocab: usize,
    /// Embedding width d.
    pub embed_dim: usize,
    /// Context width d_h (every stacked layer uses this hidden size).
    pub hidden: usize,
    /// Encoder depth (1–3 LSTM layers).
    pub layers: usize,
    /// Standard dropout between stacked encoder layers.
    pub encoder_dropout: f64,
    pub output: OutputConfig,
}

#[derive(Debug)]
pub struct Model {
    pub store: ParamStore,
    pub cfg: ModelConfig,
    pub embedding: EmbeddingTable,
    pub encoder: LstmStack,
    pub output: OutputLayer,
}

/// Result of one forward pass over a window.
pub struct WindowRun {
    pub tape: Tape,
    /// Mean NLL per scored token, 1×1.
    pub loss: NodeId,
    pub loss_value: f64,
    /// Detached state for the next window.
    pub state: LstmState,
}

impl Model {
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<Model> {
        if cfg.layers == 0 || cfg.layers > 3 {
            return Err(Error::Config(format!(
                "encoder layers must be 1..=3, got {}",
                cfg.layers
            )));
        }
        let mut rng = Rng::seed(seed);
        let mut store = ParamStore::new();
        let embedding = EmbeddingTable::build(&mut store, cfg.vocab, cfg.embed_dim, &mut rng)?;
        let encoder = LstmStack::build(
            &mut store,
            cfg.layers,
            cfg.embed_dim,
            cfg.hidden,
            cfg.encoder_dropout,
            &mut rng,
        )?;
        let output =
            OutputLayer::build(&mut store, &cfg.output, cfg.vocab, cfg.embed_dim, cfg.hidden, &mut rng)?;
        Ok(Model { store, cfg, embedding, encoder, output })
    }

    pub fn zero_state(&self, batch: usize) -> LstmState {
        self.encoder.zero_state(batch)
    }

    /// Forward pass over one window: mean NLL per token. The drill label
    /// encoding (and its dropout masks) is computed once per window and
    /// reused across its time steps.
    pub fn window_run(
        &self,
        window: &Window,
        state_in: &LstmState,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<WindowRun> {
        if window.steps == 0 || window.inputs.is_empty() {
            return Err(Error::Usage("window must contain at least one step"));
        }
        let mut tape = Tape::new();
        let (loss, state) =
            self.window_loss_on_tape(&self.store, &mut tape, window, state_in, phase, rng)?;
        let loss_value = tape.value(&self.store, loss).values()[0];
        Ok(WindowRun { tape, loss, loss_value, state })
    }

    /// Record the window loss on an existing tape against an explicit
    /// store (which must share this model's parameter layout). Exposed so
    /// gradient checks can perturb parameters; most callers want
    /// [`Model::window_run`].
    pub fn window_loss_on_tape(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        window: &Window,
        state_in: &LstmState,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<(NodeId, LstmState)> {
        // One gather for the whole window; rows are already time-major.
        let embedded = self.embedding.embed(tape, store, &window.inputs)?;
        let (tops, state_out) = self
            .encoder
            .encode_sequence(tape, store, embedded, window.steps, state_in, phase, rng)?;
        let h_all = tape.concat_rows(store, &tops)?;

        let e_node = tape.param(store, self.embedding.param);
        let prepared = self.output.prepare(tape, store, e_node, phase, rng)?;
        let raw = self.output.logits_rows_raw(tape, store, &prepared, h_all)?;
        let bias = tape.param(store, self.output.bias_index());
        let loss = tape.softmax_cross_entropy_rows_biased(store, raw, bias, &window.targets)?;
        Ok((loss, state_out))
    }

    /// (component, scalar count) rows: embedding / encoder / output.
    pub fn param_groups(&self) -> Vec<(&'static str, usize)> {
        let emb = self.store.value(self.embedding.param).len();
        let enc: usize = self
            .encoder
            .param_indices()
            .iter()
            .map(|&i| self.store.value(i).len())
            .sum();
        let out: usize = self
            .output
            .param_indices()
            .iter()
            .map(|&i| self.store.value(i).len())
            .sum();
        alloc::vec![("embedding", emb), ("encoder", enc), ("output", out)]
    }
}
