//! Corpus loading: files → vocabulary → id streams.

use std::path::Path;

use drill_core::data::Vocab;

use crate::config::RunConfig;
use crate::CliError;

pub struct Corpus {
    pub vocab: Vocab,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn load(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let train_text = read(&cfg.data.train)?;
    let valid_text = read(&cfg.data.valid)?;
    let test_text = read(&cfg.data.test)?;
    let vocab = Vocab::build(&train_text, cfg.data.min_count).map_err(CliError::Core)?;
    let train = vocab.encode(&train_text);
    let valid = vocab.encode(&valid_text);
    let test = vocab.encode(&test_text);
    Ok(Corpus { vocab, train, valid, test })
}

/// Vocab export next to the run artifacts: one `token<TAB>count` per line.
pub fn write_vocab(vocab: &Vocab, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, vocab.export())
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
