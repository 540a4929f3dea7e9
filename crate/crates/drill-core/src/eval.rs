//! Perplexity, per-token loss extraction, and the frequency-band
//! comparison between two models' losses on the same split.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{batchify, FrequencyBands};
use crate::error::Error;
use crate::mathx;
use crate::model::Model;
use crate::rng::Rng;
use crate::{Phase, Result};

/// Aligned per-token record over an evaluation split: stream position,
/// target id, and that target's NLL.
#[derive(Debug, Clone, Default)]
pub struct PerTokenLoss {
    pub positions: Vec<usize>,
    pub targets: Vec<usize>,
    pub nll: Vec<f64>,
}

impl PerTokenLoss {
    pub fn len(&self) -> usize {
        self.nll.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nll.is_empty()
    }

    pub fn mean_nll(&self) -> f64 {
        if self.nll.is_empty() {
            return f64::NAN;
        }
        self.nll.iter().sum::<f64>() / self.nll.len() as f64
    }
}

fn traverse(
    model: &Model,
    ids: &[usize],
    batch: usize,
    bptt: usize,
    mut sink: impl FnMut(usize, usize, f64),
) -> Result<()> {
    let bc = batchify(ids, batch)?;
    let mut state = model.zero_state(batch);
    // Eval phase draws nothing from the rng.
    let mut rng = Rng::seed(0);
    for window in bc.bptt_windows(bptt) {
        let run = model.window_run(&window, &state, Phase::Eval, &mut rng)?;
        state = run.state;
        let nlls = run
            .tape
            .nll_rows(run.loss)
            .ok_or(Error::Usage("window loss node carries no per-token records"))?;
        for (i, &nll) in nlls.iter().enumerate() {
            sink(window.positions[i], window.targets[i], nll);
        }
    }
    Ok(())
}

/// exp(mean NLL per target token) with full state threading. Batch size 1
/// scores every token of the split exactly once.
pub fn perplexity(model: &Model, ids: &[usize], batch: usize, bptt: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    traverse(model, ids, batch, bptt, |_, _, nll| {
        sum += nll;
        count += 1;
    })?;
    if count == 0 {
        return Err(Error::Data(String::from("no scored tokens in split")));
    }
    Ok(mathx::exp(sum / count as f64))
}

/// Same traversal as [`perplexity`], recording each target's NLL.
pub fn per_token_losses(model: &Model, ids: &[usize], batch: usize, bptt: usize) -> Result<PerTokenLoss> {
    let mut out = PerTokenLoss::default();
    traverse(model, ids, batch, bptt, |pos, target, nll| {
        out.positions.push(pos);
        out.targets.push(target);
        out.nll.push(nll);
    })?;
    if out.is_empty() {
        return Err(Error::Data(String::from("no scored tokens in split")));
    }
    Ok(out)
}

/// How per-band means are computed: over tokens (each scored token counts
/// once) or over types (each type's mean counts once).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandWeighting {
    Token,
    Type,
}

#[derive(Debug, Clone)]
pub struct BandRow {
    /// Training-count interval [lo, hi); hi None for the open top band.
    pub lo: u64,
    pub hi: Option<u64>,
    /// Vocabulary types assigned to this band (training statistics).
    pub types: usize,
    /// Scored tokens of this split falling in the band.
    pub tokens: usize,
    pub mean_ce_baseline: Option<f64>,
    pub mean_ce_ours: Option<f64>,
    /// 100·(baseline − ours)/baseline; positive means `ours` is better.
    pub rel_diff_pct: Option<f64>,
}

impl BandRow {
    /// Absolute CE gap (baseline − ours); antisymmetric under swapping.
    pub fn ce_gap(&self) -> Option<f64> {
        Some(self.mean_ce_baseline? - self.mean_ce_ours?)
    }
}

#[derive(Debug, Clone)]
pub struct BandReport {
    pub rows: Vec<BandRow>,
    pub weighting: BandWeighting,
}

/// Compare two per-token loss records over the identical split, grouping
/// by the TARGET token's frequency band. Tokens whose target id has no
/// band (zero training count) are skipped.
pub fn band_compare(
    baseline: &PerTokenLoss,
    ours: &PerTokenLoss,
    bands: &FrequencyBands,
    weighting: BandWeighting,
) -> Result<BandReport> {
    if baseline.len() != ours.len() {
        return Err(Error::Data(alloc::format!(
            "loss records differ in length: {} vs {}",
            baseline.len(),
            ours.len()
        )));
    }
    if baseline.targets != ours.targets || baseline.positions != ours.positions {
        return Err(Error::Data(String::from(
            "loss records are not aligned: same split and traversal required",
        )));
    }

    let n_bands = bands.band_count();
    let mut rows = Vec::with_capacity(n_bands);
    for band in 0..n_bands {
        let (lo, hi) = bands.interval(band);
        rows.push(BandRow {
            lo,
            hi,
            types: bands.types_in_band(band),
            tokens: 0,
            mean_ce_baseline: None,
            mean_ce_ours: None,
            rel_diff_pct: None,
        });
    }

    match weighting {
        BandWeighting::Token => {
            let mut sums = alloc::vec![(0.0f64, 0.0f64, 0usize); n_bands];
            for i in 0..baseline.len() {
                if let Some(b) = bands.band_of(baseline.targets[i]) {
                    sums[b].0 += baseline.nll[i];
                    sums[b].1 += ours.nll[i];
                    sums[b].2 += 1;
                }
            }
            for (row, (sb, so, n)) in rows.iter_mut().zip(sums) {
                finish_row(row, sb, so, n);
            }
        }
        BandWeighting::Type => {
            // per-type sums keyed by target id
            let mut by_type: alloc::collections::BTreeMap<usize, (f64, f64, usize)> =
                alloc::collections::BTreeMap::new();
            for i in 0..baseline.len() {
                let e = by_type.entry(baseline.targets[i]).or_insert((0.0, 0.0, 0));
                e.0 += baseline.nll[i];
                e.1 += ours.nll[i];
                e.2 += 1;
            }
            let mut sums = alloc::vec![(0.0f64, 0.0f64, 0usize); n_bands];
            let mut token_totals = alloc::vec![0usize; n_bands];
            for (&id, &(sb, so, n)) in &by_type {
                if let Some(b) = bands.band_of(id) {
                    sums[b].0 += sb / n as f64;
                    sums[b].1 += so / n as f64;
                    sums[b].2 += 1;
                    token_totals[b] += n;
                }
            }
            for ((row, (sb, so, n_types)), tokens) in rows.iter_mut().zip(sums).zip(token_totals) {
                finish_row(row, sb, so, n_types);
                row.tokens = tokens;
            }
        }
    }
    Ok(BandReport { rows, weighting })
}

fn finish_row(row: &mut BandRow, sum_base: f64, sum_ours: f64, n: usize) {
    row.tokens = n;
    if n == 0 {
        return;
    }
    let mb = sum_base / n as f64;
    let mo = sum_ours / n as f64;
    row.mean_ce_baseline = Some(mb);
    row.mean_ce_ours = Some(mo);
    if mb != 0.0 {
        row.rel_diff_pct = Some(100.0 * (mb - mo) / mb);
    }
}
