//! Corpus ingestion, contiguous batching with truncated-BPTT windows, and
//! training-set frequency statistics.
//!
//! Corpus format: UTF-8 text, one sentence per line, whitespace tokens.
//! Every line contributes its tokens plus one `<eos>`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// Token ↔ dense-id mapping with training-split counts. `<unk>` is id 0
/// and `<eos>` id 1; remaining ids are ordered by descending training
/// count, ties broken lexicographically.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: BTreeMap<String, usize>,
    id_to_token: Vec<String>,
    train_count: Vec<u64>,
}

impl Vocab {
    pub const UNK_ID: usize = 0;
    pub const EOS_ID: usize = 1;

    /// Build from training text. Types occurring fewer than `min_count`
    /// times map to `<unk>` (their occurrences roll into its count).
    pub fn build(train_text: &str, min_count: u64) -> Result<Vocab> {
        if train_text.is_empty() {
            return Err(Error::Data(String::from("empty corpus")));
        }
        let mut raw: BTreeMap<&str, u64> = BTreeMap::new();
        let mut lines = 0u64;
        for line in train_text.lines() {
            lines += 1;
            for tok in line.split_whitespace() {
                *raw.entry(tok).or_insert(0) += 1;
            }
        }
        if lines == 0 {
            return Err(Error::Data(String::from("empty corpus")));
        }

        // Literal specials in the text (PTB arrives pre-unked) merge with
        // the reserved entries rather than becoming separate types.
        let mut unk_count = raw.remove(UNK).unwrap_or(0);
        let eos_count = raw.remove(EOS).unwrap_or(0) + lines;

        let mut kept: Vec<(&str, u64)> = Vec::new();
        for (tok, count) in raw {
            if count >= min_count {
                kept.push((tok, count));
            } else {
                unk_count += count;
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token = Vec::with_capacity(kept.len() + 2);
        let mut train_count = Vec::with_capacity(kept.len() + 2);
        id_to_token.push(UNK.to_string());
        train_count.push(unk_count);
        id_to_token.push(EOS.to_string());
        train_count.push(eos_count);
        for (tok, count) in kept {
            id_to_token.push(tok.to_string());
            train_count.push(count);
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocab { token_to_id, id_to_token, train_count })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.train_count[id]
    }

    /// Encode text: unknown tokens map to `<unk>`, one `<eos>` per line.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for line in text.lines() {
            for tok in line.split_whitespace() {
                out.push(self.id(tok).unwrap_or(Self::UNK_ID));
            }
            out.push(Self::EOS_ID);
        }
        out
    }

    /// Export as `token<TAB>count` lines in id order.
    pub fn export(&self) -> String {
        let mut s = String::new();
        for (tok, count) in self.id_to_token.iter().zip(self.train_count.iter()) {
            s.push_str(tok);
            s.push('\t');
            s.push_str(&count.to_string());
            s.push('\n');
        }
        s
    }

    /// FNV-1a hash of the export; identifies a vocabulary across runs.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.export().as_bytes() {
            h ^= *byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Token stream split into `batch` contiguous strips of equal length; the
/// remainder after dividing is dropped.
#[derive(Debug, Clone)]
pub struct BatchedCorpus {
    ids: Vec<usize>,
    batch: usize,
    strip_len: usize,
}

pub fn batchify(ids: &[usize], batch: usize) -> Result<BatchedCorpus> {
    if batch == 0 {
        return Err(Error::Config(String::from("batch size must be >= 1")));
    }
    if ids.len() < 2 * batch {
        return Err(Error::Data(format!(
            "stream of {} tokens is too short for batch size {batch}",
            ids.len()
        )));
    }
    let strip_len = ids.len() / batch;
    Ok(BatchedCorpus { ids: ids[..strip_len * batch].to_vec(), batch, strip_len })
}

impl BatchedCorpus {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn strip_len(&self) -> usize {
        self.strip_len
    }

    pub fn strip(&self, lane: usize) -> &[usize] {
        &self.ids[lane * self.strip_len..(lane + 1) * self.strip_len]
    }

    /// Number of scored (target) positions across all strips.
    pub fn target_count(&self) -> usize {
        self.batch * (self.strip_len - 1)
    }

    /// Non-overlapping truncated-BPTT windows along the strip axis.
    /// Targets are inputs shifted by one; the final short window is
    /// emitted.
    pub fn bptt_windows(&self, bptt: usize) -> impl Iterator<Item = Window> + '_ {
        assert!(bptt >= 1, "bptt length must be >= 1");
        let mut offset = 0;
        core::iter::from_fn(move || {
            if offset + 1 >= self.strip_len {
                return None;
            }
            let steps = bptt.min(self.strip_len - 1 - offset);
            let lanes = self.batch;
            let mut inputs = Vec::with_capacity(steps * lanes);
            let mut targets = Vec::with_capacity(steps * lanes);
            let mut positions = Vec::with_capacity(steps * lanes);
            for t in 0..steps {
                for lane in 0..lanes {
                    let strip = self.strip(lane);
                    inputs.push(strip[offset + t]);
                    targets.push(strip[offset + t + 1]);
                    positions.push(lane * self.strip_len + offset + t + 1);
                }
            }
            let w = Window { steps, lanes, inputs, targets, positions };
            offset += steps;
            Some(w)
        })
    }
}

/// One BPTT window in time-major layout: entry (t, lane) sits at index
/// `t * lanes + lane`, matching the row order of stacked step outputs.
#[derive(Debug, Clone)]
pub struct Window {
    pub steps: usize,
    pub lanes: usize,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    /// Stream position of each target within its strip layout.
    pub positions: Vec<usize>,
}

impl Window {
    /// Input ids of step t, one per lane.
    pub fn step_inputs(&self, t: usize) -> &[usize] {
        &self.inputs[t * self.lanes..(t + 1) * self.lanes]
    }
}

/// Default band boundaries: decades up to 10k.
pub const DEFAULT_BAND_BOUNDARIES: [u64; 4] = [10, 100, 1_000, 10_000];

/// Partition of vocabulary ids by training count. Ids with zero training
/// count belong to no band.
#[derive(Debug, Clone)]
pub struct FrequencyBands {
    boundaries: Vec<u64>,
    band_of: Vec<Option<usize>>,
    types_per_band: Vec<usize>,
}

/// Band i covers counts [boundaries[i−1], boundaries[i]), with an implicit
/// leading [1, boundaries[0]) and trailing [boundaries.last(), ∞).
pub fn assign_bands(vocab: &Vocab, boundaries: &[u64]) -> Result<FrequencyBands> {
    if boundaries.is_empty() {
        return Err(Error::Config(String::from("at least one band boundary is required")));
    }
    if boundaries[0] <= 1 {
        return Err(Error::Config(String::from("band boundaries must start above 1")));
    }
    for w in boundaries.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "band boundaries must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    let n_bands = boundaries.len() + 1;
    let mut types_per_band = alloc::vec![0usize; n_bands];
    let mut band_of = Vec::with_capacity(vocab.len());
    for id in 0..vocab.len() {
        let c = vocab.count(id);
        if c == 0 {
            band_of.push(None);
            continue;
        }
        let band = boundaries.iter().position(|&b| c < b).unwrap_or(boundaries.len());
        types_per_band[band] += 1;
        band_of.push(Some(band));
    }
    Ok(FrequencyBands { boundaries: boundaries.to_vec(), band_of, types_per_band })
}

impl FrequencyBands {
    pub fn band_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn band_of(&self, id: usize) -> Option<usize> {
        self.band_of.get(id).copied().flatten()
    }

    /// Unique vocabulary types assigned to a band.
    pub fn types_in_band(&self, band: usize) -> usize {
        self.types_per_band[band]
    }

    /// Count interval [lo, hi) of a band; hi is `None` for the open top.
    pub fn interval(&self, band: usize) -> (u64, Option<u64>) {
        let lo = if band == 0 { 1 } else { self.boundaries[band - 1] };
        let hi = self.boundaries.get(band).copied();
        (lo, hi)
    }
}
