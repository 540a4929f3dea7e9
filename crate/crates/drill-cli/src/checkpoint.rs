//! Checkpoint format: a text manifest (version, config echo, vocabulary
//! hash, parameter directory, optimizer state directory) followed by a
//! `DATA` line and the raw little-endian IEEE-754 f64 arrays in manifest
//! order. Parameter bytes round-trip exactly, so a reloaded model
//! reproduces eval-phase logits bit for bit.

use std::io::Write;
use std::path::Path;

use drill_core::model::{Model, ModelConfig};
use drill_core::optim::{Optimizer, OptimizerKind};
use drill_core::tensor::Tensor;

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: &str = "drill-checkpoint v1";

#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub vocab_hash: u64,
    pub vocab_size: usize,
    pub epoch: usize,
    pub best_val_ppl: f64,
    pub optimizer: OptimizerKind,
    pub optimizer_steps: u64,
    pub config_echo: String,
}

pub fn save(
    path: &Path,
    model: &Model,
    optimizer: &Optimizer,
    vocab_hash: u64,
    epoch: usize,
    best_val_ppl: f64,
    config_echo: &str,
) -> Result<(), CliError> {
    let mut manifest = String::new();
    manifest.push_str(FORMAT_VERSION);
    manifest.push('\n');
    manifest.push_str(&format!("vocab_hash {vocab_hash:016x}\n"));
    manifest.push_str(&format!("vocab_size {}\n", model.cfg.vocab));
    manifest.push_str(&format!("epoch {epoch}\n"));
    manifest.push_str(&format!("best_val_ppl {:016x}\n", best_val_ppl.to_bits()));
    manifest.push_str(&format!(
        "optimizer {} steps {}\n",
        optimizer.kind.name(),
        optimizer.steps()
    ));
    let echo_lines: Vec<&str> = config_echo.lines().collect();
    manifest.push_str(&format!("config_lines {}\n", echo_lines.len()));
    for line in &echo_lines {
        manifest.push_str(line);
        manifest.push('\n');
    }
    manifest.push_str(&format!("params {}\n", model.store.len()));
    for p in model.store.params() {
        manifest.push_str(&format!("{} {} {}\n", p.name, p.value.rows(), p.value.cols()));
    }
    let opt_state = optimizer.state();
    manifest.push_str(&format!("opt_tensors {}\n", opt_state.len()));
    for (name, t) in &opt_state {
        manifest.push_str(&format!("{} {} {}\n", name, t.rows(), t.cols()));
    }
    manifest.push_str("DATA\n");

    let mut bytes = Vec::with_capacity(manifest.len() + model.store.scalar_count() * 8);
    bytes.extend_from_slice(manifest.as_bytes());
    for p in model.store.params() {
        for v in p.value.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (_, t) in &opt_state {
        for v in t.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(&bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

struct Manifest {
    meta: CheckpointMeta,
    params: Vec<(String, usize, usize)>,
    opt_tensors: Vec<(String, usize, usize)>,
    data_offset: usize,
}

fn bad(path: &Path, what: &str) -> CliError {
    CliError::Data(format!("corrupt checkpoint {}: {what}", path.display()))
}

fn parse_manifest(path: &Path, bytes: &[u8]) -> Result<Manifest, CliError> {
    let marker = b"\nDATA\n";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad(path, "missing DATA marker"))?;
    let head = std::str::from_utf8(&bytes[..pos]).map_err(|_| bad(path, "manifest is not UTF-8"))?;
    let data_offset = pos + marker.len();

    let mut lines = head.lines();
    let version = lines.next().ok_or_else(|| bad(path, "empty manifest"))?;
    if version != FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "unsupported checkpoint version `{version}` in {} (expected `{FORMAT_VERSION}`)",
            path.display()
        )));
    }

    let mut field = |prefix: &str| -> Result<String, CliError> {
        let line = lines.next().ok_or_else(|| bad(path, "manifest ended early"))?;
        line.strip_prefix(prefix)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| bad(path, &format!("expected `{prefix}...`")))
    };

    let vocab_hash = u64::from_str_radix(&field("vocab_hash ")?, 16)
        .map_err(|_| bad(path, "bad vocab_hash"))?;
    let vocab_size: usize = field("vocab_size ")?.parse().map_err(|_| bad(path, "bad vocab_size"))?;
    let epoch: usize = field("epoch ")?.parse().map_err(|_| bad(path, "bad epoch"))?;
    let best_bits =
        u64::from_str_radix(&field("best_val_ppl ")?, 16).map_err(|_| bad(path, "bad best_val_ppl"))?;
    let opt_line = field("optimizer ")?;
    let (opt_name, steps_part) =
        opt_line.split_once(" steps ").ok_or_else(|| bad(path, "bad optimizer line"))?;
    let optimizer = OptimizerKind::parse(opt_name).map_err(CliError::Core)?;
    let optimizer_steps: u64 = steps_part.parse().map_err(|_| bad(path, "bad optimizer steps"))?;

    let n_echo: usize = field("config_lines ")?.parse().map_err(|_| bad(path, "bad config_lines"))?;
    let mut config_echo = String::new();
    for _ in 0..n_echo {
        let line = lines.next().ok_or_else(|| bad(path, "config echo ended early"))?;
        config_echo.push_str(line);
        config_echo.push('\n');
    }

    let mut read_dir = |prefix: &str| -> Result<Vec<(String, usize, usize)>, CliError> {
        let line = lines.next().ok_or_else(|| bad(path, "manifest ended early"))?;
        let n: usize = line
            .strip_prefix(prefix)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(path, &format!("expected `{prefix}N`")))?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad(path, "directory ended early"))?;
            let mut it = line.rsplitn(3, ' ');
            let cols: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(path, "bad tensor shape"))?;
            let rows: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(path, "bad tensor shape"))?;
            let name = it.next().ok_or_else(|| bad(path, "bad tensor line"))?.to_string();
            out.push((name, rows, cols));
        }
        Ok(out)
    };
    let params = read_dir("params ")?;
    let opt_tensors = read_dir("opt_tensors ")?;

    Ok(Manifest {
        meta: CheckpointMeta {
            vocab_hash,
            vocab_size,
            epoch,
            best_val_ppl: f64::from_bits(best_bits),
            optimizer,
            optimizer_steps,
            config_echo,
        },
        params,
        opt_tensors,
        data_offset,
    })
}

fn read_tensors(
    path: &Path,
    blob: &[u8],
    dir: &[(String, usize, usize)],
    offset: &mut usize,
) -> Result<Vec<(String, Tensor)>, CliError> {
    let mut out = Vec::with_capacity(dir.len());
    for (name, rows, cols) in dir {
        let n = rows * cols * 8;
        if *offset + n > blob.len() {
            return Err(bad(path, "truncated data section"));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for chunk in blob[*offset..*offset + n].chunks_exact(8) {
            values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        *offset += n;
        out.push((
            name.clone(),
            Tensor::from_vec(*rows, *cols, values).map_err(CliError::Core)?,
        ));
    }
    Ok(out)
}

/// Load a checkpoint into a model built from the model configuration the
/// checkpoint itself embeds.
pub fn load(path: &Path) -> Result<(Model, Optimizer, CheckpointMeta), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let manifest = parse_manifest(path, &bytes)?;
    let run_cfg = RunConfig::parse(&manifest.meta.config_echo, Path::new("."))?;
    let model_cfg = run_cfg.model_config(manifest.meta.vocab_size);
    load_with_config(path, &bytes, manifest, &model_cfg)
}

/// Load a checkpoint into a model built from an explicit configuration;
/// shape mismatches name the first offending parameter.
pub fn load_into_config(path: &Path, cfg: &ModelConfig) -> Result<(Model, Optimizer, CheckpointMeta), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let manifest = parse_manifest(path, &bytes)?;
    load_with_config(path, &bytes, manifest, cfg)
}

fn load_with_config(
    path: &Path,
    bytes: &[u8],
    manifest: Manifest,
    cfg: &ModelConfig,
) -> Result<(Model, Optimizer, CheckpointMeta), CliError> {
    let expected: usize = manifest
        .params
        .iter()
        .chain(manifest.opt_tensors.iter())
        .map(|(_, r, c)| r * c * 8)
        .sum();
    let blob = &bytes[manifest.data_offset..];
    if blob.len() != expected {
        return Err(bad(
            path,
            &format!("data section holds {} bytes, manifest expects {expected}", blob.len()),
        ));
    }

    let mut model = Model::build(cfg.clone(), 0).map_err(CliError::Core)?;
    if model.store.len() != manifest.params.len() {
        return Err(CliError::Data(format!(
            "checkpoint {} holds {} parameters, model expects {}",
            path.display(),
            manifest.params.len(),
            model.store.len()
        )));
    }

    let mut offset = 0;
    let params = read_tensors(path, blob, &manifest.params, &mut offset)?;
    let opt_values = read_tensors(path, blob, &manifest.opt_tensors, &mut offset)?;

    for (i, (name, tensor)) in params.into_iter().enumerate() {
        let slot = &mut model.store.params_mut()[i];
        if slot.name != name {
            return Err(CliError::Data(format!(
                "parameter {i} is `{}` in the model but `{name}` in {}",
                slot.name,
                path.display()
            )));
        }
        if slot.value.shape() != tensor.shape() {
            return Err(CliError::Data(format!(
                "shape mismatch for parameter `{name}`: model {}x{}, checkpoint {}x{}",
                slot.value.rows(),
                slot.value.cols(),
                tensor.rows(),
                tensor.cols()
            )));
        }
        slot.value = tensor;
    }

    let mut optimizer = Optimizer::new(manifest.meta.optimizer, &model.store);
    if manifest.meta.optimizer == OptimizerKind::Adam {
        if opt_values.len() != 2 * model.store.len() {
            return Err(bad(path, "optimizer state does not match parameter count"));
        }
        let mut moments = Vec::with_capacity(model.store.len());
        for pair in opt_values.chunks_exact(2) {
            moments.push((pair[0].1.clone(), pair[1].1.clone()));
        }
        optimizer
            .restore(moments, manifest.meta.optimizer_steps)
            .map_err(CliError::Core)?;
    } else {
        optimizer.restore(Vec::new(), manifest.meta.optimizer_steps).map_err(CliError::Core)?;
    }

    Ok((model, optimizer, manifest.meta))
}
