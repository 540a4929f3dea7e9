//! The five output-layer parameterizations and their shared machinery.
//!
//! Each layer maps label embeddings E (|V|×d) and a batch of context rows
//! H (P×d_h, one row per scored position) to logits (P×|V|):
//!
//! * `full_softmax`  — H·W + b with a dedicated W (d_h×|V|)
//! * `weight_tying`  — H·Eᵀ + b, no dedicated weights beyond b
//! * `bilinear`      — H·W_lᵀ·Eᵀ + b, one shared mapping W_l (d×d_h)
//! * `dual_nonlinear`— σ(H·Vᵀ + b_v)·σ(E·U + b_u)ᵀ + b, joint width d_j
//! * `drill`         — H·g_out(E)ᵀ + b where g_out is a deep residual
//!                     label encoder with dropout between layers
//!
//! The drill label encoder computes E⁽⁰⁾ = E and, per layer i,
//! A = σ(E⁽ⁱ⁻¹⁾U⁽ⁱ⁾ + b_u⁽ⁱ⁾), then applies dropout to A (never to the
//! residual paths), then adds E⁽ⁱ⁻¹⁾ if `interlayer_residual` and E if
//! `input_skip`. All U⁽ⁱ⁾ are square d×d, which residual addition forces.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::rng::Rng;
use crate::tape::{ActKind, NodeId, ParamStore, Tape};
use crate::tensor::Tensor;
use crate::{Phase, Result};

/// Half-open initialization interval for all output-layer weights.
pub const INIT_RANGE: (f64, f64) = (-0.1, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    FullSoftmax,
    WeightTying,
    Bilinear,
    DualNonlinear,
    Drill,
}

impl OutputKind {
    pub fn parse(name: &str) -> Result<OutputKind> {
        match name {
            "full_softmax" => Ok(OutputKind::FullSoftmax),
            "weight_tying" => Ok(OutputKind::WeightTying),
            "bilinear" => Ok(OutputKind::Bilinear),
            "dual_nonlinear" => Ok(OutputKind::DualNonlinear),
            "drill" => Ok(OutputKind::Drill),
            other => Err(Error::Config(format!("unknown output kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputKind::FullSoftmax => "full_softmax",
            OutputKind::WeightTying => "weight_tying",
            OutputKind::Bilinear => "bilinear",
            OutputKind::DualNonlinear => "dual_nonlinear",
            OutputKind::Drill => "drill",
        }
    }

    pub const ALL: [OutputKind; 5] = [
        OutputKind::FullSoftmax,
        OutputKind::WeightTying,
        OutputKind::Bilinear,
        OutputKind::DualNonlinear,
        OutputKind::Drill,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    None,
    Standard,
    Variational,
}

impl DropoutMode {
    pub fn parse(name: &str) -> Result<DropoutMode> {
        match name {
            "none" => Ok(DropoutMode::None),
            "standard" => Ok(DropoutMode::Standard),
            "variational" => Ok(DropoutMode::Variational),
            other => Err(Error::Config(format!("unknown dropout mode `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DropoutMode::None => "none",
            DropoutMode::Standard => "standard",
            DropoutMode::Variational => "variational",
        }
    }
}

/// Dropout configuration. Rate 0 behaves exactly like mode `none`; every
/// mode is the identity at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub mode: DropoutMode,
    pub rate: f64,
}

impl DropoutSpec {
    pub const NONE: DropoutSpec = DropoutSpec { mode: DropoutMode::None, rate: 0.0 };

    pub fn new(mode: DropoutMode, rate: f64) -> Result<DropoutSpec> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(DropoutSpec { mode, rate })
    }

    pub fn is_active(&self) -> bool {
        self.mode != DropoutMode::None && self.rate > 0.0
    }
}

/// Inverted-scaling dropout mask: entries are 0 with probability p and
/// 1/(1−p) otherwise, so the mask has unit expectation and evaluation
/// needs no rescaling. Standard mode samples every entry independently;
/// variational mode samples one 1×cols row and locks it across all rows.
pub fn sample_mask(spec: &DropoutSpec, rows: usize, cols: usize, rng: &mut Rng) -> Result<Tensor> {
    if spec.mode == DropoutMode::None {
        return Err(Error::Config(String::from(
            "sample_mask requires mode standard or variational",
        )));
    }
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {}", spec.rate)));
    }
    let p = spec.rate;
    let keep = 1.0 / (1.0 - p);
    let mut mask = Tensor::zeros(rows, cols);
    match spec.mode {
        DropoutMode::Standard => {
            for v in mask.values_mut() {
                *v = if rng.next_f64() < p { 0.0 } else { keep };
            }
        }
        DropoutMode::Variational => {
            let row: Vec<f64> = (0..cols)
                .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
                .collect();
            for r in 0..rows {
                mask.values_mut()[r * cols..(r + 1) * cols].copy_from_slice(&row);
            }
        }
        DropoutMode::None => unreachable!(),
    }
    Ok(mask)
}

/// The drill label encoder: depth, per-layer square projections, and the
/// residual/dropout policy.
#[derive(Debug, Clone)]
pub struct LabelEncoder {
    pub depth: usize,
    /// Per layer: (U⁽ⁱ⁾ d×d, b_u⁽ⁱ⁾ 1×d) parameter indices.
    pub layers: Vec<(usize, usize)>,
    pub activation: ActKind,
    pub dropout: DropoutSpec,
    pub input_skip: bool,
    pub interlayer_residual: bool,
}

impl LabelEncoder {
    /// E⁽ᵏ⁾ from E. In train phase an active dropout spec multiplies each
    /// layer's activation by a fresh mask before the residual additions;
    /// in eval phase dropout is the identity.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        embedding: NodeId,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let (rows, cols) = tape.shape(embedding);
        let mut prev = embedding;
        for &(u, b_u) in &self.layers {
            let un = tape.param(store, u);
            let bn = tape.param(store, b_u);
            let z = tape.matmul(store, prev, un)?;
            let z = tape.add_row_bias(store, z, bn)?;
            let a = tape.activation(store, z, self.activation)?;
            let mut cur = if phase == Phase::Train && self.dropout.is_active() {
                let mask = sample_mask(&self.dropout, rows, cols, rng)?;
                let mn = tape.constant(mask);
                tape.mul(store, a, mn)?
            } else {
                a
            };
            if self.interlayer_residual {
                cur = tape.add(store, cur, prev)?;
            }
            if self.input_skip {
                cur = tape.add(store, cur, embedding)?;
            }
            prev = cur;
        }
        Ok(prev)
    }
}

#[derive(Debug)]
enum KindParams {
    FullSoftmax { w: usize },
    WeightTying,
    Bilinear { w_l: usize },
    DualNonlinear { u: usize, b_u: usize, v: usize, b_v: usize, activation: ActKind },
    Drill(LabelEncoder),
}

/// One output layer: a kind, its dedicated parameters, and the per-label
/// bias b (1×|V|) every kind carries.
#[derive(Debug)]
pub struct OutputLayer {
    kind_params: KindParams,
    pub bias: usize,
    pub vocab: usize,
    pub d: usize,
    pub d_h: usize,
}

/// Everything needed to build an output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub kind: OutputKind,
    /// Label-encoder depth k (drill only).
    pub depth: usize,
    /// Activation for drill layers and the dual nonlinear projections.
    pub activation: ActKind,
    pub dropout: DropoutSpec,
    pub input_skip: bool,
    pub interlayer_residual: bool,
    /// Joint space width d_j (dual_nonlinear only).
    pub d_joint: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            kind: OutputKind::WeightTying,
            depth: 1,
            activation: ActKind::Sigmoid,
            dropout: DropoutSpec::NONE,
            input_skip: true,
            interlayer_residual: false,
            d_joint: None,
        }
    }
}

impl OutputLayer {
    /// Build a layer with weights uniform in [−0.1, 0.1) from `rng` and
    /// zero biases. Deterministic for a fixed seed.
    pub fn build(
        store: &mut ParamStore,
        cfg: &OutputConfig,
        vocab: usize,
        d: usize,
        d_h: usize,
        rng: &mut Rng,
    ) -> Result<OutputLayer> {
        if vocab == 0 || d == 0 || d_h == 0 {
            return Err(Error::Config(String::from("vocab, d and d_h must be positive")));
        }
        let (lo, hi) = INIT_RANGE;
        let kind_params = match cfg.kind {
            OutputKind::FullSoftmax => {
                let w = store.add("output.W", Tensor::uniform(rng, d_h, vocab, lo, hi))?;
                KindParams::FullSoftmax { w }
            }
            OutputKind::WeightTying => {
                if d != d_h {
                    return Err(Error::Config(format!(
                        "d must equal d_h for weight_tying (got d={d}, d_h={d_h})"
                    )));
                }
                KindParams::WeightTying
            }
            OutputKind::Bilinear => {
                let w_l = store.add("output.W_l", Tensor::uniform(rng, d, d_h, lo, hi))?;
                KindParams::Bilinear { w_l }
            }
            OutputKind::DualNonlinear => {
                let d_j = cfg.d_joint.ok_or_else(|| {
                    Error::Config(String::from("d_joint is required for dual_nonlinear"))
                })?;
                if d_j == 0 {
                    return Err(Error::Config(String::from("d_joint must be positive")));
                }
                let u = store.add("output.U", Tensor::uniform(rng, d, d_j, lo, hi))?;
                let b_u = store.add("output.b_u", Tensor::zeros(1, d_j))?;
                let v = store.add("output.V", Tensor::uniform(rng, d_j, d_h, lo, hi))?;
                let b_v = store.add("output.b_v", Tensor::zeros(1, d_j))?;
                KindParams::DualNonlinear { u, b_u, v, b_v, activation: cfg.activation }
            }
            OutputKind::Drill => {
                if d != d_h {
                    return Err(Error::Config(format!(
                        "d must equal d_h for drill (got d={d}, d_h={d_h})"
                    )));
                }
                if cfg.depth == 0 {
                    return Err(Error::Config(String::from("drill depth k must be >= 1")));
                }
                let mut layers = Vec::with_capacity(cfg.depth);
                for i in 1..=cfg.depth {
                    let u = store.add(&format!("output.enc{i}.U"), Tensor::uniform(rng, d, d, lo, hi))?;
                    let b = store.add(&format!("output.enc{i}.b_u"), Tensor::zeros(1, d))?;
                    layers.push((u, b));
                }
                KindParams::Drill(LabelEncoder {
                    depth: cfg.depth,
                    layers,
                    activation: cfg.activation,
                    dropout: cfg.dropout,
                    input_skip: cfg.input_skip,
                    interlayer_residual: cfg.interlayer_residual,
                })
            }
        };
        let bias = store.add("output.b", Tensor::zeros(1, vocab))?;
        Ok(OutputLayer { kind_params, bias, vocab, d, d_h })
    }

    pub fn kind(&self) -> OutputKind {
        match &self.kind_params {
            KindParams::FullSoftmax { .. } => OutputKind::FullSoftmax,
            KindParams::WeightTying => OutputKind::WeightTying,
            KindParams::Bilinear { .. } => OutputKind::Bilinear,
            KindParams::DualNonlinear { .. } => OutputKind::DualNonlinear,
            KindParams::Drill(_) => OutputKind::Drill,
        }
    }

    pub fn label_encoder(&self) -> Option<&LabelEncoder> {
        match &self.kind_params {
            KindParams::Drill(enc) => Some(enc),
            _ => None,
        }
    }

    /// Store indices of every dedicated parameter (bias included).
    pub fn param_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        match &self.kind_params {
            KindParams::FullSoftmax { w } => out.push(*w),
            KindParams::WeightTying => {}
            KindParams::Bilinear { w_l } => out.push(*w_l),
            KindParams::DualNonlinear { u, b_u, v, b_v, .. } => {
                out.extend_from_slice(&[*u, *b_u, *v, *b_v]);
            }
            KindParams::Drill(enc) => {
                for &(u, b) in &enc.layers {
                    out.push(u);
                    out.push(b);
                }
            }
        }
        out.push(self.bias);
        out
    }

    /// Per-window label-side work: whatever can be computed once and then
    /// reused for every context row in the window. Dropout masks (drill,
    /// train phase) are sampled here, which makes variational masks locked
    /// for the whole window.
    pub fn prepare(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        embedding: NodeId,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<Prepared> {
        let inner = match &self.kind_params {
            KindParams::FullSoftmax { w } => {
                let wn = tape.param(store, *w);
                PreparedInner::Full { w: wn }
            }
            KindParams::WeightTying => PreparedInner::Rows { rows: embedding },
            KindParams::Bilinear { w_l } => {
                let wn = tape.param(store, *w_l);
                PreparedInner::Bilinear { e: embedding, w_l: wn }
            }
            KindParams::DualNonlinear { u, b_u, v, b_v, activation } => {
                let un = tape.param(store, *u);
                let bn = tape.param(store, *b_u);
                let z = tape.matmul(store, embedding, un)?;
                let z = tape.add_row_bias(store, z, bn)?;
                let g_out = tape.activation(store, z, *activation)?;
                PreparedInner::Dual {
                    g_out,
                    v: tape.param(store, *v),
                    b_v: tape.param(store, *b_v),
                    activation: *activation,
                }
            }
            KindParams::Drill(enc) => {
                let encoded = enc.encode(tape, store, embedding, phase, rng)?;
                PreparedInner::Rows { rows: encoded }
            }
        };
        Ok(Prepared { inner, bias: self.bias })
    }

    /// Logits for a batch of context rows H (P×d_h), before the output
    /// bias. The bias is folded into the fused cross-entropy during
    /// training; [`OutputLayer::logits_rows`] adds it explicitly.
    pub fn logits_rows_raw(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        prepared: &Prepared,
        h: NodeId,
    ) -> Result<NodeId> {
        match &prepared.inner {
            PreparedInner::Full { w } => tape.matmul(store, h, *w),
            PreparedInner::Rows { rows } => tape.matmul_nt(store, h, *rows),
            PreparedInner::Bilinear { e, w_l } => {
                let hw = tape.matmul_nt(store, h, *w_l)?;
                tape.matmul_nt(store, hw, *e)
            }
            PreparedInner::Dual { g_out, v, b_v, activation } => {
                let hv = tape.matmul_nt(store, h, *v)?;
                let hv = tape.add_row_bias(store, hv, *b_v)?;
                let g_in = tape.activation(store, hv, *activation)?;
                tape.matmul_nt(store, g_in, *g_out)
            }
        }
    }

    /// Logits for a batch of context rows H (P×d_h) → (P×|V|).
    pub fn logits_rows(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        prepared: &Prepared,
        h: NodeId,
    ) -> Result<NodeId> {
        let raw = self.logits_rows_raw(tape, store, prepared, h)?;
        let bias = tape.param(store, prepared.bias);
        tape.add_row_bias(store, raw, bias)
    }

    /// Store index of the output bias b (1×|V|).
    pub fn bias_index(&self) -> usize {
        self.bias
    }

    /// Logits for a single context row (1×d_h) → (1×|V|). Convenience
    /// wrapper over [`OutputLayer::prepare`] + [`OutputLayer::logits_rows`].
    pub fn logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        embedding: NodeId,
        h: NodeId,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let prepared = self.prepare(tape, store, embedding, phase, rng)?;
        self.logits_rows(tape, store, &prepared, h)
    }
}

/// Label-side state shared by every position of one window.
pub struct Prepared {
    inner: PreparedInner,
    bias: usize,
}

enum PreparedInner {
    Full { w: NodeId },
    /// Tied or drill-encoded label rows (|V|×d): logits are H·rowsᵀ.
    Rows { rows: NodeId },
    Bilinear { e: NodeId, w_l: NodeId },
    Dual { g_out: NodeId, v: NodeId, b_v: NodeId, activation: ActKind },
}

/// Dedicated output-layer parameter count for a kind, biases included and
/// the shared embedding E excluded:
///
/// * full_softmax:   d_h·|V| + |V|
/// * weight_tying:   |V|
/// * bilinear:       d·d_h + |V|
/// * dual_nonlinear: d·d_j + d_j + d_j·d_h + d_j + |V|
/// * drill:          k·(d·d + d) + |V|
///
/// The usual drill capacity estimate k·d² + |V| omits the per-layer bias
/// d; the exact count here includes it.
pub fn param_count(
    kind: OutputKind,
    vocab: usize,
    d: usize,
    d_h: usize,
    d_j: Option<usize>,
    k: Option<usize>,
) -> Result<usize> {
    if vocab == 0 || d == 0 || d_h == 0 {
        return Err(Error::Config(String::from("vocab, d and d_h must be positive")));
    }
    match kind {
        OutputKind::FullSoftmax => Ok(d_h * vocab + vocab),
        OutputKind::WeightTying => {
            if d != d_h {
                return Err(Error::Config(String::from("d must equal d_h for weight_tying")));
            }
            Ok(vocab)
        }
        OutputKind::Bilinear => Ok(d * d_h + vocab),
        OutputKind::DualNonlinear => {
            let d_j = d_j
                .ok_or_else(|| Error::Config(String::from("d_joint required for dual_nonlinear")))?;
            if d_j == 0 {
                return Err(Error::Config(String::from("d_joint must be positive")));
            }
            Ok(d * d_j + d_j + d_j * d_h + d_j + vocab)
        }
        OutputKind::Drill => {
            if d != d_h {
                return Err(Error::Config(String::from("d must equal d_h for drill")));
            }
            let k = k.ok_or_else(|| Error::Config(String::from("depth k required for drill")))?;
            if k == 0 {
                return Err(Error::Config(String::from("drill depth k must be >= 1")));
            }
            Ok(k * (d * d + d) + vocab)
        }
    }
}
