//! Shared helpers for integration tests: a synthetic corpus generator
//! with learnable sequential structure and a Zipfian frequency profile.
//!
//! Generation process: a hidden Markov chain over K states; each state
//! emits from its own cluster of word types. Clusters are assigned
//! round-robin over the global Zipf ranking, so every cluster mixes
//! frequent and rare words — rare words then share contexts with
//! frequent words of the same cluster, giving label-space structure a
//! model can exploit. Sentence breaks are geometric.

use std::path::{Path, PathBuf};

use drill_core::Rng;

pub struct SynthSpec {
    pub vocab: usize,
    pub states: usize,
    pub zipf_exponent: f64,
    /// Mean sentence length (tokens between <eos> marks).
    pub mean_sentence_len: f64,
    /// Probability of emitting from the global distribution instead of
    /// the current state's cluster: irreducible ambiguity that separates
    /// regularized from unregularized models.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab: 2000,
            states: 40,
            zipf_exponent: 1.05,
            mean_sentence_len: 20.0,
            noise: 0.25,
        }
    }
}

pub struct SynthCorpus {
    spec: SynthSpec,
    /// Per state: (cumulative emission weights, member type ids).
    emitters: Vec<(Vec<f64>, Vec<usize>)>,
    /// Global Zipf cumulative weights for the noise component.
    global_cum: Vec<f64>,
    state: usize,
    rng: Rng,
}

impl SynthCorpus {
    pub fn new(spec: SynthSpec, seed: u64) -> SynthCorpus {
        let k = spec.states;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        let mut weights: Vec<Vec<f64>> = vec![Vec::new(); k];
        for rank in 0..spec.vocab {
            let cluster = rank % k;
            let w = 1.0 / ((rank + 1) as f64).powf(spec.zipf_exponent);
            members[cluster].push(rank);
            weights[cluster].push(w);
        }
        let emitters = members
            .into_iter()
            .zip(weights)
            .map(|(ids, ws)| {
                let mut cum = Vec::with_capacity(ws.len());
                let mut acc = 0.0;
                for w in ws {
                    acc += w;
                    cum.push(acc);
                }
                (cum, ids)
            })
            .collect();
        let mut global_cum = Vec::with_capacity(spec.vocab);
        let mut acc = 0.0;
        for rank in 0..spec.vocab {
            acc += 1.0 / ((rank + 1) as f64).powf(spec.zipf_exponent);
            global_cum.push(acc);
        }
        SynthCorpus { spec, emitters, global_cum, state: 0, rng: Rng::seed(seed) }
    }

    fn next_state(&mut self) {
        let k = self.spec.states;
        let r = self.rng.next_f64();
        self.state = if r < 0.5 {
            (self.state * 7 + 1) % k
        } else if r < 0.8 {
            (self.state * 3 + 2) % k
        } else {
            (self.state + 1) % k
        };
    }

    fn emit(&mut self) -> usize {
        if self.spec.noise > 0.0 && self.rng.next_f64() < self.spec.noise {
            let total = *self.global_cum.last().unwrap();
            let r = self.rng.next_f64() * total;
            return self.global_cum.partition_point(|&c| c < r).min(self.spec.vocab - 1);
        }
        let (cum, ids) = &self.emitters[self.state];
        let total = *cum.last().unwrap();
        let r = self.rng.next_f64() * total;
        let idx = cum.partition_point(|&c| c < r).min(ids.len() - 1);
        ids[idx]
    }

    /// Generate about `tokens` word tokens of newline-separated sentences.
    pub fn text(&mut self, tokens: usize) -> String {
        let mut out = String::with_capacity(tokens * 6);
        let mut produced = 0;
        let p_break = 1.0 / self.spec.mean_sentence_len;
        let mut line_len = 0;
        while produced < tokens {
            let w = self.emit();
            self.next_state();
            out.push('w');
            out.push_str(&w.to_string());
            produced += 1;
            line_len += 1;
            if self.rng.next_f64() < p_break && line_len >= 3 {
                out.push('\n');
                line_len = 0;
            } else {
                out.push(' ');
            }
        }
        if !out.ends_with('\n') {
            out.push('\n');
        }
        out
    }
}

/// Write train/valid/test splits drawn from one continuous process.
pub fn write_corpus(
    dir: &Path,
    spec: SynthSpec,
    seed: u64,
    train_tokens: usize,
    valid_tokens: usize,
    test_tokens: usize,
) -> (PathBuf, PathBuf, PathBuf) {
    let mut gen = SynthCorpus::new(spec, seed);
    let train = gen.text(train_tokens);
    let valid = gen.text(valid_tokens);
    let test = gen.text(test_tokens);
    std::fs::create_dir_all(dir).unwrap();
    let train_path = dir.join("train.txt");
    let valid_path = dir.join("valid.txt");
    let test_path = dir.join("test.txt");
    std::fs::write(&train_path, train).unwrap();
    std::fs::write(&valid_path, valid).unwrap();
    std::fs::write(&test_path, test).unwrap();
    (train_path, valid_path, test_path)
}

#[allow(dead_code)] // used by the acceptance suite, not every test binary
/// A corpus whose vocabulary is padded to an exact type count: every type
/// appears at least once (listed lines), then Zipf-sampled filler. Used
/// by throughput benchmarks that pin |V|.
pub fn write_fixed_vocab_corpus(dir: &Path, vocab: usize, filler_tokens: usize, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let mut text = String::new();
    for chunk in (0..vocab).collect::<Vec<_>>().chunks(20) {
        let line: Vec<String> = chunk.iter().map(|w| format!("w{w}")).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    let mut gen = SynthCorpus::new(
        SynthSpec { vocab, states: 40, zipf_exponent: 1.05, mean_sentence_len: 20.0, noise: 0.25 },
        seed,
    );
    text.push_str(&gen.text(filler_tokens));
    std::fs::create_dir_all(dir).unwrap();
    let train_path = dir.join("train.txt");
    let valid_path = dir.join("valid.txt");
    let test_path = dir.join("test.txt");
    std::fs::write(&train_path, &text).unwrap();
    // small held-out splits from the same process
    std::fs::write(&valid_path, gen.text(2_000)).unwrap();
    std::fs::write(&test_path, gen.text(2_000)).unwrap();
    (train_path, valid_path, test_path)
}

/// Unique scratch directory under the target tmp dir.
#[allow(dead_code)]
pub fn scratch_dir(tag: &str) -> PathBuf {
    let base = std::env::temp_dir().join(format!(
        "drill-test-{tag}-{}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&base).unwrap();
    base
}
