//! Token embedding table and a plain stacked LSTM producing the context
//! rows h_t. Deliberately unadorned: optional standard dropout between
//! stacked layers is the only regularization here.
//!
//! Batch convention: one row per lane, so a step input is (B×d_in) and a
//! step output (B×d_out). Hidden/cell state carried across windows is
//! detached (plain tensors, re-entered as constants).

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::output::{sample_mask, DropoutMode, DropoutSpec, INIT_RANGE};
use crate::rng::Rng;
use crate::tape::{NodeId, ParamStore, Tape};
use crate::tensor::Tensor;
use crate::{Phase, Result};

/// The shared label/input embedding matrix E (|V|×d).
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTable {
    pub param: usize,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn build(store: &mut ParamStore, vocab: usize, dim: usize, rng: &mut Rng) -> Result<EmbeddingTable> {
        let (lo, hi) = INIT_RANGE;
        let param = store.add("embedding.E", Tensor::uniform(rng, vocab, dim, lo, hi))?;
        Ok(EmbeddingTable { param, vocab, dim })
    }

    /// Look up token rows: (len×d), one row per token. Gradients
    /// scatter-accumulate into E.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, tokens: &[usize]) -> Result<NodeId> {
        let e = tape.param(store, self.param);
        tape.embed_rows(store, e, tokens)
    }
}

/// One LSTM layer: gate weights fused as four h-row blocks in the order
/// input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w: usize, // (4h × d_in)
    pub u: usize, // (4h × h)
    pub b: usize, // (1 × 4h)
    pub input_size: usize,
    pub hidden_size: usize,
}

#[derive(Debug, Clone)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
    /// Standard dropout rate applied between stacked layers (train only).
    pub dropout: f64,
}

/// Detached per-layer (h, c) state, each (B×h).
#[derive(Debug, Clone)]
pub struct LstmState {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl LstmState {
    pub fn batch(&self) -> usize {
        self.layers.first().map(|(h, _)| h.rows()).unwrap_or(0)
    }
}

impl LstmStack {
    /// Stack of `layers` LSTM cells: the first takes d_in-sized inputs,
    /// the rest feed on the previous layer's hidden size.
    pub fn build(
        store: &mut ParamStore,
        layers: usize,
        d_in: usize,
        hidden: usize,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<LstmStack> {
        if layers == 0 {
            return Err(Error::Config(alloc::string::String::from("encoder needs at least one layer")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("encoder dropout must lie in [0, 1), got {dropout}")));
        }
        let (lo, hi) = INIT_RANGE;
        let mut built = Vec::with_capacity(layers);
        for l in 0..layers {
            let input_size = if l == 0 { d_in } else { hidden };
            let w = store.add(&format!("lstm{l}.w"), Tensor::uniform(rng, 4 * hidden, input_size, lo, hi))?;
            let u = store.add(&format!("lstm{l}.u"), Tensor::uniform(rng, 4 * hidden, hidden, lo, hi))?;
            let b = store.add(&format!("lstm{l}.b"), Tensor::zeros(1, 4 * hidden))?;
            built.push(LstmLayer { w, u, b, input_size, hidden_size: hidden });
        }
        Ok(LstmStack { layers: built, dropout })
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.last().map(|l| l.hidden_size).unwrap_or(0)
    }

    pub fn param_indices(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.w, l.u, l.b]).collect()
    }

    pub fn zero_state(&self, batch: usize) -> LstmState {
        LstmState {
            layers: self
                .layers
                .iter()
                .map(|l| (Tensor::zeros(batch, l.hidden_size), Tensor::zeros(batch, l.hidden_size)))
                .collect(),
        }
    }

    /// Run the stack over a window whose step inputs are stacked
    /// time-major into one (steps·B × d_in) matrix. Returns the per-step
    /// top-layer hidden nodes plus the detached final state for threading
    /// into the next window.
    pub fn encode_sequence(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        window_input: NodeId,
        steps: usize,
        state_in: &LstmState,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<(Vec<NodeId>, LstmState)> {
        let (rows, _) = tape.shape(window_input);
        if steps == 0 || rows == 0 || rows % steps != 0 {
            return Err(Error::Usage("window rows must be a positive multiple of the step count"));
        }
        if state_in.layers.len() != self.layers.len() {
            return Err(Error::Usage("state does not match the layer stack"));
        }
        let batch = rows / steps;
        if state_in.batch() != batch {
            return Err(Error::Shape {
                op: "encode_sequence",
                lhs: (batch, 0),
                rhs: (state_in.batch(), 0),
            });
        }

        // Enter detached state as constants.
        let mut state: Vec<(NodeId, NodeId)> = state_in
            .layers
            .iter()
            .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
            .collect();

        let drop_spec = DropoutSpec { mode: DropoutMode::Standard, rate: self.dropout };
        let mut stacked = window_input;
        let mut tops: Vec<NodeId> = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            // The input-side projection has no recurrent dependency, so
            // it runs once over the whole window as one large product.
            let wn = tape.param(store, layer.w);
            let wx_all = tape.matmul_nt(store, stacked, wn)?;

            let (mut h_prev, mut c_prev) = state[li];
            let mut outs = Vec::with_capacity(steps);
            for t in 0..steps {
                let wx = tape.slice_rows(store, wx_all, t * batch, batch)?;
                let (h, c) = self.cell_step(tape, store, layer, wx, h_prev, c_prev)?;
                h_prev = h;
                c_prev = c;
                outs.push(h);
            }
            state[li] = (h_prev, c_prev);

            let is_last = li + 1 == self.layers.len();
            if !is_last && phase == Phase::Train && self.dropout > 0.0 {
                for out in &mut outs {
                    let mask = sample_mask(&drop_spec, batch, layer.hidden_size, rng)?;
                    let mn = tape.constant(mask);
                    *out = tape.mul(store, *out, mn)?;
                }
            }
            if !is_last {
                stacked = tape.concat_rows(store, &outs)?;
            }
            tops = outs;
        }

        let state_out = LstmState {
            layers: state
                .iter()
                .map(|&(h, c)| (tape.value(store, h).clone(), tape.value(store, c).clone()))
                .collect(),
        };
        Ok((tops, state_out))
    }

    /// One step given the precomputed input projection wx (B×4h).
    fn cell_step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        layer: &LstmLayer,
        wx: NodeId,
        h_prev: NodeId,
        c_prev: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let un = tape.param(store, layer.u);
        let bn = tape.param(store, layer.b);

        let uh = tape.matmul_nt(store, h_prev, un)?;
        let pre = tape.add(store, wx, uh)?;
        let pre = tape.add_row_bias(store, pre, bn)?;

        let c = tape.cell_state(store, pre, c_prev)?;
        let h_out = tape.cell_output(store, pre, c)?;
        Ok((h_out, c))
    }
}
