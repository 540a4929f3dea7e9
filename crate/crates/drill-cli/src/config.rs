//! Run configuration: a flat sectioned key-value file. Every key is
//! typed and known; unknown sections or keys are hard errors so typos
//! cannot silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drill_core::model::ModelConfig;
use drill_core::optim::OptimizerKind;
use drill_core::output::{DropoutMode, DropoutSpec, OutputConfig, OutputKind};
use drill_core::tape::ActKind;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub min_count: u64,
}

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub patience: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    pub bptt_len: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone)]
pub struct BandsConfig {
    pub boundaries: Vec<u64>,
    pub type_weighted: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub output: OutputConfig,
    pub training: TrainingConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eval_batch: usize,
    pub bands: BandsConfig,
    /// Variant list for the ablate command.
    pub ablate_kinds: Vec<String>,
    /// Variant list and repetition count for the bench command.
    pub bench_kinds: Vec<String>,
    pub bench_repetitions: usize,
    /// Raw text of the parsed file, echoed into every output artifact.
    pub echo: String,
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>, CliError> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {}: malformed section header", lineno + 1)))?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        if current.is_empty() {
            return Err(CliError::Config(format!(
                "line {}: key `{}` appears before any [section]",
                lineno + 1,
                key.trim()
            )));
        }
        let prev = sections
            .get_mut(&current)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
        if prev.is_some() {
            return Err(CliError::Config(format!(
                "line {}: duplicate key `{}.{}`",
                lineno + 1,
                current,
                key.trim()
            )));
        }
    }
    Ok(sections)
}

struct Section {
    name: String,
    entries: BTreeMap<String, String>,
    taken: Vec<String>,
}

impl Section {
    fn get(&mut self, key: &str) -> Option<String> {
        self.taken.push(key.to_string());
        self.entries.get(key).cloned()
    }

    fn finish(self) -> Result<(), CliError> {
        for key in self.entries.keys() {
            if !self.taken.iter().any(|t| t == key) {
                return Err(CliError::Config(format!("unknown key `{}.{}`", self.name, key)));
            }
        }
        Ok(())
    }
}

fn take_section(
    sections: &mut BTreeMap<String, BTreeMap<String, String>>,
    name: &str,
) -> Section {
    Section {
        name: name.to_string(),
        entries: sections.remove(name).unwrap_or_default(),
        taken: Vec::new(),
    }
}

fn parse<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value for {section}.{key}: `{value}`")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!(
            "invalid value for {section}.{key}: `{value}` (expected true/false)"
        ))),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
        let mut sections = parse_sections(text)?;

        let mut data = take_section(&mut sections, "data");
        let path_of = |v: Option<String>, key: &str| -> Result<PathBuf, CliError> {
            let v = v.ok_or_else(|| CliError::Config(format!("missing required key data.{key}")))?;
            let p = PathBuf::from(&v);
            Ok(if p.is_absolute() { p } else { base_dir.join(p) })
        };
        let data_cfg = DataConfig {
            train: path_of(data.get("train"), "train")?,
            valid: path_of(data.get("valid"), "valid")?,
            test: path_of(data.get("test"), "test")?,
            min_count: match data.get("min_count") {
                Some(v) => parse("data", "min_count", &v)?,
                None => 1,
            },
        };
        data.finish()?;

        let mut enc = take_section(&mut sections, "encoder");
        let encoder = EncoderConfig {
            layers: match enc.get("layers") {
                Some(v) => parse("encoder", "layers", &v)?,
                None => 1,
            },
            hidden_size: match enc.get("hidden_size") {
                Some(v) => parse("encoder", "hidden_size", &v)?,
                None => 400,
            },
            embed_size: match enc.get("embed_size") {
                Some(v) => parse("encoder", "embed_size", &v)?,
                None => 400,
            },
            dropout: match enc.get("dropout") {
                Some(v) => parse("encoder", "dropout", &v)?,
                None => 0.0,
            },
        };
        enc.finish()?;

        let mut out = take_section(&mut sections, "output");
        let kind = match out.get("kind") {
            Some(v) => OutputKind::parse(&v).map_err(CliError::Core)?,
            None => OutputKind::Drill,
        };
        let dropout_mode = match out.get("dropout_mode") {
            Some(v) => DropoutMode::parse(&v).map_err(CliError::Core)?,
            None => DropoutMode::Variational,
        };
        let dropout_rate = match out.get("dropout_rate") {
            Some(v) => parse("output", "dropout_rate", &v)?,
            None => 0.6,
        };
        let output = OutputConfig {
            kind,
            depth: match out.get("depth") {
                Some(v) => parse("output", "depth", &v)?,
                None => 4,
            },
            activation: match out.get("activation") {
                Some(v) => ActKind::parse(&v).map_err(CliError::Core)?,
                None => ActKind::Sigmoid,
            },
            dropout: DropoutSpec::new(dropout_mode, dropout_rate).map_err(CliError::Core)?,
            input_skip: match out.get("input_skip") {
                Some(v) => parse_bool("output", "input_skip", &v)?,
                None => true,
            },
            interlayer_residual: match out.get("interlayer_residual") {
                Some(v) => parse_bool("output", "interlayer_residual", &v)?,
                None => false,
            },
            d_joint: match out.get("d_joint") {
                Some(v) => Some(parse("output", "d_joint", &v)?),
                None => None,
            },
        };
        out.finish()?;

        let mut tr = take_section(&mut sections, "training");
        let training = TrainingConfig {
            optimizer: match tr.get("optimizer") {
                Some(v) => OptimizerKind::parse(&v).map_err(CliError::Core)?,
                None => OptimizerKind::Sgd,
            },
            lr: match tr.get("lr") {
                Some(v) => parse("training", "lr", &v)?,
                None => 1.0,
            },
            lr_decay_factor: match tr.get("lr_decay_factor") {
                Some(v) => parse("training", "lr_decay_factor", &v)?,
                None => 0.5,
            },
            patience: match tr.get("patience") {
                Some(v) => parse("training", "patience", &v)?,
                None => 2,
            },
            clip_norm: match tr.get("clip_norm") {
                Some(v) => parse("training", "clip_norm", &v)?,
                None => 0.25,
            },
            epochs: match tr.get("epochs") {
                Some(v) => parse("training", "epochs", &v)?,
                None => 20,
            },
            bptt_len: match tr.get("bptt_len") {
                Some(v) => parse("training", "bptt_len", &v)?,
                None => 35,
            },
            batch_size: match tr.get("batch_size") {
                Some(v) => parse("training", "batch_size", &v)?,
                None => 32,
            },
        };
        if training.lr <= 0.0 {
            return Err(CliError::Config("training.lr must be positive".into()));
        }
        if training.clip_norm <= 0.0 {
            return Err(CliError::Config("training.clip_norm must be positive".into()));
        }
        if training.patience == 0 {
            return Err(CliError::Config("training.patience must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&training.lr_decay_factor) || training.lr_decay_factor == 0.0 {
            return Err(CliError::Config("training.lr_decay_factor must lie in (0, 1)".into()));
        }
        tr.finish()?;

        let mut run = take_section(&mut sections, "run");
        let seeds = match run.get("seeds") {
            Some(v) => parse_list(&v)
                .iter()
                .map(|s| parse::<u64>("run", "seeds", s))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![0],
        };
        if seeds.is_empty() {
            return Err(CliError::Config("run.seeds must not be empty".into()));
        }
        let out_dir = match run.get("out") {
            Some(v) => {
                let p = PathBuf::from(&v);
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            }
            None => base_dir.join("runs"),
        };
        run.finish()?;

        let mut ev = take_section(&mut sections, "eval");
        let eval_batch = match ev.get("batch_size") {
            Some(v) => parse("eval", "batch_size", &v)?,
            None => 1,
        };
        ev.finish()?;

        let mut bd = take_section(&mut sections, "bands");
        let bands = BandsConfig {
            boundaries: match bd.get("boundaries") {
                Some(v) => parse_list(&v)
                    .iter()
                    .map(|s| parse::<u64>("bands", "boundaries", s))
                    .collect::<Result<Vec<_>, _>>()?,
                None => drill_core::data::DEFAULT_BAND_BOUNDARIES.to_vec(),
            },
            type_weighted: match bd.get("type_weighted") {
                Some(v) => parse_bool("bands", "type_weighted", &v)?,
                None => false,
            },
        };
        bd.finish()?;

        let mut ab = take_section(&mut sections, "ablate");
        let ablate_kinds = match ab.get("kinds") {
            Some(v) => parse_list(&v),
            None => Vec::new(),
        };
        ab.finish()?;

        let mut be = take_section(&mut sections, "bench");
        let bench_kinds = match be.get("kinds") {
            Some(v) => parse_list(&v),
            None => Vec::new(),
        };
        let bench_repetitions = match be.get("repetitions") {
            Some(v) => parse("bench", "repetitions", &v)?,
            None => 3,
        };
        be.finish()?;

        if let Some(name) = sections.keys().next() {
            return Err(CliError::Config(format!("unknown section `[{name}]`")));
        }

        Ok(RunConfig {
            data: data_cfg,
            encoder,
            output,
            training,
            seeds,
            out_dir,
            eval_batch,
            bands,
            ablate_kinds,
            bench_kinds,
            bench_repetitions,
            echo: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Check that the data files exist; run before any compute.
    pub fn validate_paths(&self) -> Result<(), CliError> {
        for (name, p) in [
            ("data.train", &self.data.train),
            ("data.valid", &self.data.valid),
            ("data.test", &self.data.test),
        ] {
            if !p.is_file() {
                return Err(CliError::Config(format!("{name} file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn model_config(&self, vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab,
            embed_dim: self.encoder.embed_size,
            hidden: self.encoder.hidden_size,
            layers: self.encoder.layers,
            encoder_dropout: self.encoder.dropout,
            output: self.output.clone(),
        }
    }

    /// Model-defining sections serialized for checkpoint embedding.
    pub fn model_echo(&self) -> String {
        let o = &self.output;
        let mut s = String::new();
        let _ = writeln!(s, "[encoder]");
        let _ = writeln!(s, "layers = {}", self.encoder.layers);
        let _ = writeln!(s, "hidden_size = {}", self.encoder.hidden_size);
        let _ = writeln!(s, "embed_size = {}", self.encoder.embed_size);
        let _ = writeln!(s, "dropout = {}", self.encoder.dropout);
        let _ = writeln!(s, "[output]");
        let _ = writeln!(s, "kind = {}", o.kind.name());
        let _ = writeln!(s, "depth = {}", o.depth);
        let _ = writeln!(s, "activation = {}", o.activation.name());
        let _ = writeln!(s, "dropout_mode = {}", o.dropout.mode.name());
        let _ = writeln!(s, "dropout_rate = {}", o.dropout.rate);
        let _ = writeln!(s, "input_skip = {}", o.input_skip);
        let _ = writeln!(s, "interlayer_residual = {}", o.interlayer_residual);
        if let Some(dj) = o.d_joint {
            let _ = writeln!(s, "d_joint = {dj}");
        }
        s
    }
}

/// An output-layer variant spec for ablation/bench lists: a kind name,
/// optionally `:k=N` for drill depth plus `+res` / `-nodrop` toggles.
/// Examples: `weight_tying`, `drill:k=2`, `drill:k=4+res`, `drill:k=2-nodrop`.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub output: OutputConfig,
}

impl Variant {
    pub fn parse(spec: &str, base: &OutputConfig) -> Result<Variant, CliError> {
        let mut rest = spec.trim();
        let mut cfg = base.clone();

        let mut residual = false;
        if let Some(stripped) = rest.strip_suffix("+res") {
            residual = true;
            rest = stripped;
        }
        let mut nodrop = false;
        if let Some(stripped) = rest.strip_suffix("-nodrop") {
            nodrop = true;
            rest = stripped;
        }
        if !residual {
            if let Some(stripped) = rest.strip_suffix("+res") {
                residual = true;
                rest = stripped;
            }
        }

        let (kind_name, depth) = match rest.split_once(':') {
            Some((k, opt)) => {
                let d = opt
                    .strip_prefix("k=")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| {
                        CliError::Config(format!("malformed variant option `{opt}` in `{spec}`"))
                    })?;
                (k, Some(d))
            }
            None => (rest, None),
        };
        cfg.kind = OutputKind::parse(kind_name).map_err(CliError::Core)?;
        if let Some(d) = depth {
            if cfg.kind != OutputKind::Drill {
                return Err(CliError::Config(format!(
                    "depth option is only valid for drill (got `{spec}`)"
                )));
            }
            cfg.depth = d;
        }
        if residual {
            if cfg.kind != OutputKind::Drill {
                return Err(CliError::Config(format!(
                    "+res toggle is only valid for drill (got `{spec}`)"
                )));
            }
            cfg.interlayer_residual = true;
        }
        if nodrop {
            cfg.dropout = DropoutSpec::NONE;
        }

        let mut label = cfg.kind.name().to_string();
        if cfg.kind == OutputKind::Drill {
            label = format!("drill-k{}", cfg.depth);
            if cfg.interlayer_residual {
                label.push_str("+res");
            }
            if nodrop {
                label.push_str("-nodrop");
            }
        } else if nodrop {
            label.push_str("-nodrop");
        }
        Ok(Variant { label, output: cfg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[data]
train = train.txt
valid = valid.txt
test = test.txt
";

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = RunConfig::parse(MINIMAL, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.output.kind, OutputKind::Drill);
        assert_eq!(cfg.output.depth, 4);
        assert_eq!(cfg.output.dropout.rate, 0.6);
        assert_eq!(cfg.output.dropout.mode, DropoutMode::Variational);
        assert_eq!(cfg.output.activation, ActKind::Sigmoid);
        assert!(cfg.output.input_skip);
        assert!(!cfg.output.interlayer_residual);
        assert_eq!(cfg.encoder.embed_size, 400);
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.eval_batch, 1);
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let text = format!("{MINIMAL}[output]\nkinds = drill\n");
        let err = RunConfig::parse(&text, Path::new("/tmp")).unwrap_err();
        assert!(format!("{err}").contains("output.kinds"), "{err}");

        let text = format!("{MINIMAL}[outputs]\nkind = drill\n");
        let err = RunConfig::parse(&text, Path::new("/tmp")).unwrap_err();
        assert!(format!("{err}").contains("[outputs]"), "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = format!("{MINIMAL}[encoder]\nlayers = 1\nlayers = 2\n");
        assert!(RunConfig::parse(&text, Path::new("/tmp")).is_err());
    }

    #[test]
    fn missing_required_data_key_is_caught() {
        let err = RunConfig::parse("[data]\ntrain = t.txt\nvalid = v.txt\n", Path::new("/tmp"))
            .unwrap_err();
        assert!(format!("{err}").contains("data.test"), "{err}");
    }

    #[test]
    fn variant_specs_parse_and_label() {
        let base = OutputConfig::default();
        let v = Variant::parse("weight_tying", &base).unwrap();
        assert_eq!(v.label, "weight_tying");

        let v = Variant::parse("drill:k=2", &base).unwrap();
        assert_eq!(v.label, "drill-k2");
        assert_eq!(v.output.depth, 2);

        let v = Variant::parse("drill:k=4+res", &base).unwrap();
        assert_eq!(v.label, "drill-k4+res");
        assert!(v.output.interlayer_residual);

        let base_drop = OutputConfig {
            dropout: DropoutSpec::new(DropoutMode::Variational, 0.3).unwrap(),
            ..OutputConfig::default()
        };
        let v = Variant::parse("drill:k=2-nodrop", &base_drop).unwrap();
        assert_eq!(v.label, "drill-k2-nodrop");
        assert!(!v.output.dropout.is_active());

        assert!(Variant::parse("weight_tying:k=2", &base).is_err());
        assert!(Variant::parse("nonsense", &base).is_err());
    }
}
