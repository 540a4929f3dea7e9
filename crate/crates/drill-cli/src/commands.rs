//! The six subcommands. Each validates its configuration before any
//! compute, writes CSV artifacts (with the config echoed as comments)
//! under the output directory, and prints an aligned summary table.

use std::path::Path;

use drill_core::data::assign_bands;
use drill_core::eval::{band_compare, per_token_losses, perplexity, BandWeighting};
use drill_core::model::Model;
use drill_core::optim::Optimizer;
use drill_core::output::param_count;

use crate::bench::epoch_benchmark;
use crate::checkpoint;
use crate::config::{RunConfig, Variant};
use crate::corpus::{self, Corpus};
use crate::report::{echo_comments, median, text_table, write_csv};
use crate::trainer::{train_model, TrainResult};
use crate::CliError;

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))
}

fn write_log_csv(cfg: &RunConfig, path: &Path, result: &TrainResult) -> Result<(), CliError> {
    let rows: Vec<String> = result
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{:.6},{:.6},{},{:.3}",
                r.epoch, r.train_loss, r.val_ppl, r.lr, r.seconds
            )
        })
        .collect();
    write_csv(path, &cfg.echo, "epoch,train_loss,val_ppl,lr,seconds", &rows)
}

struct SeedRun {
    seed: u64,
    best_val_ppl: f64,
    test_ppl: f64,
}

fn train_one_seed(
    cfg: &RunConfig,
    corpus: &Corpus,
    variant_output: &drill_core::output::OutputConfig,
    seed: u64,
    ckpt_path: &Path,
    log_path: Option<&Path>,
) -> Result<SeedRun, CliError> {
    let mut model_cfg = cfg.model_config(corpus.vocab.len());
    model_cfg.output = variant_output.clone();
    let mut model = Model::build(model_cfg, seed)?;
    let mut optimizer = Optimizer::new(cfg.training.optimizer, &model.store);
    let vocab_hash = corpus.vocab.content_hash();
    let echo = cfg.echo.clone();

    let result = train_model(
        &mut model,
        &mut optimizer,
        &corpus.train,
        &corpus.valid,
        &cfg.training,
        seed,
        |m, opt, epoch, val_ppl| checkpoint::save(ckpt_path, m, opt, vocab_hash, epoch, val_ppl, &echo),
    )?;

    if let Some(log) = log_path {
        write_log_csv(cfg, log, &result)?;
    }

    // test perplexity comes from the best checkpoint, not the final state
    let (best_model, _, _) = checkpoint::load(ckpt_path)?;
    let test_ppl = perplexity(&best_model, &corpus.test, cfg.eval_batch, cfg.training.bptt_len)?;

    Ok(SeedRun { seed, best_val_ppl: result.best_val_ppl, test_ppl })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_paths()?;
    ensure_out_dir(cfg)?;
    let corpus = corpus::load(cfg)?;
    corpus::write_vocab(&corpus.vocab, &cfg.out_dir.join("vocab.tsv"))?;

    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let ckpt = cfg.out_dir.join(format!("best_seed{seed}.ckpt"));
        let log = cfg.out_dir.join(format!("log_seed{seed}.csv"));
        println!("training seed {seed} ...");
        let run = train_one_seed(cfg, &corpus, &cfg.output, seed, &ckpt, Some(&log))?;
        println!(
            "  seed {seed}: best val ppl {:.4}, test ppl {:.4}",
            run.best_val_ppl, run.test_ppl
        );
        runs.push(run);
    }

    let mut rows: Vec<String> = runs
        .iter()
        .map(|r| format!("{},{:.6},{:.6}", r.seed, r.best_val_ppl, r.test_ppl))
        .collect();
    if runs.len() > 1 {
        let mut vals: Vec<f64> = runs.iter().map(|r| r.best_val_ppl).collect();
        let mut tests: Vec<f64> = runs.iter().map(|r| r.test_ppl).collect();
        rows.push(format!("median,{:.6},{:.6}", median(&mut vals), median(&mut tests)));
    }
    write_csv(&cfg.out_dir.join("summary.csv"), &cfg.echo, "seed,best_val_ppl,test_ppl", &rows)?;
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, ckpt: &Path, split: &str) -> Result<(), CliError> {
    cfg.validate_paths()?;
    ensure_out_dir(cfg)?;
    let corpus = corpus::load(cfg)?;
    let (model, _, meta) = checkpoint::load(ckpt)?;
    if meta.vocab_hash != corpus.vocab.content_hash() {
        return Err(CliError::Data(format!(
            "vocabulary hash mismatch: checkpoint {} was trained on a different vocabulary",
            ckpt.display()
        )));
    }
    let ids = match split {
        "train" => &corpus.train,
        "valid" => &corpus.valid,
        "test" => &corpus.test,
        other => {
            return Err(CliError::Config(format!(
                "unknown split `{other}` (expected train, valid, or test)"
            )))
        }
    };
    let losses = per_token_losses(&model, ids, cfg.eval_batch, cfg.training.bptt_len)?;
    let ppl = drill_core::mathx::exp(losses.mean_nll());
    println!("{split} perplexity: {ppl:.6} over {} tokens", losses.len());

    let rows: Vec<String> = (0..losses.len())
        .map(|i| format!("{},{},{:.9}", losses.positions[i], losses.targets[i], losses.nll[i]))
        .collect();
    write_csv(
        &cfg.out_dir.join(format!("eval_{split}.csv")),
        &cfg.echo,
        "position,target_id,nll",
        &rows,
    )?;
    Ok(())
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_paths()?;
    if cfg.ablate_kinds.is_empty() {
        return Err(CliError::Config("ablate.kinds is empty; nothing to ablate".into()));
    }
    let variants = cfg
        .ablate_kinds
        .iter()
        .map(|s| Variant::parse(s, &cfg.output))
        .collect::<Result<Vec<_>, _>>()?;
    ensure_out_dir(cfg)?;
    let corpus = corpus::load(cfg)?;

    let mut table_rows = Vec::new();
    let mut seed_rows = Vec::new();
    for variant in &variants {
        let out = &variant.output;
        let params = param_count(
            out.kind,
            corpus.vocab.len(),
            cfg.encoder.embed_size,
            cfg.encoder.hidden_size,
            out.d_joint,
            Some(out.depth),
        )?;
        let mut vals = Vec::new();
        let mut tests = Vec::new();
        for &seed in &cfg.seeds {
            let ckpt = cfg.out_dir.join(format!("ckpt_{}_seed{seed}.ckpt", variant.label));
            println!("ablate {} seed {seed} ...", variant.label);
            let run = train_one_seed(cfg, &corpus, out, seed, &ckpt, None)?;
            println!(
                "  {} seed {seed}: val {:.4}, test {:.4}",
                variant.label, run.best_val_ppl, run.test_ppl
            );
            seed_rows.push(format!(
                "{},{},{},{:.6},{:.6}",
                variant.label, seed, params, run.best_val_ppl, run.test_ppl
            ));
            vals.push(run.best_val_ppl);
            tests.push(run.test_ppl);
        }
        table_rows.push(format!(
            "{},{},{:.6},{:.6}",
            variant.label,
            params,
            median(&mut vals),
            median(&mut tests)
        ));
    }

    write_csv(
        &cfg.out_dir.join("ablation.csv"),
        &cfg.echo,
        "variant,output_params,val_ppl,test_ppl",
        &table_rows,
    )?;
    write_csv(
        &cfg.out_dir.join("ablation_seeds.csv"),
        &cfg.echo,
        "variant,seed,output_params,val_ppl,test_ppl",
        &seed_rows,
    )?;

    let display: Vec<Vec<String>> = table_rows
        .iter()
        .map(|r| r.split(',').map(str::to_string).collect())
        .collect();
    print!("{}", text_table(&["variant", "output_params", "val_ppl", "test_ppl"], &display));
    Ok(())
}

pub fn cmd_bands(cfg: &RunConfig, baseline_ckpt: &Path, ours_ckpt: &Path) -> Result<(), CliError> {
    cfg.validate_paths()?;
    ensure_out_dir(cfg)?;
    let corpus = corpus::load(cfg)?;
    let (base_model, _, base_meta) = checkpoint::load(baseline_ckpt)?;
    let (our_model, _, our_meta) = checkpoint::load(ours_ckpt)?;
    let here = corpus.vocab.content_hash();
    if base_meta.vocab_hash != our_meta.vocab_hash || base_meta.vocab_hash != here {
        return Err(CliError::Data(format!(
            "vocabulary hash mismatch: baseline {:016x}, comparison {:016x}, corpus {:016x}",
            base_meta.vocab_hash, our_meta.vocab_hash, here
        )));
    }

    let bptt = cfg.training.bptt_len;
    let base = per_token_losses(&base_model, &corpus.test, cfg.eval_batch, bptt)?;
    let ours = per_token_losses(&our_model, &corpus.test, cfg.eval_batch, bptt)?;
    let bands = assign_bands(&corpus.vocab, &cfg.bands.boundaries)?;
    let weighting = if cfg.bands.type_weighted { BandWeighting::Type } else { BandWeighting::Token };
    let report = band_compare(&base, &ours, &bands, weighting)?;

    let mut rows = Vec::new();
    let mut display = Vec::new();
    for r in &report.rows {
        let hi = r.hi.map(|h| h.to_string()).unwrap_or_default();
        let (mb, mo, pct) = match (r.mean_ce_baseline, r.mean_ce_ours, r.rel_diff_pct) {
            (Some(mb), Some(mo), Some(p)) => {
                (format!("{mb:.6}"), format!("{mo:.6}"), format!("{p:.4}"))
            }
            _ => (String::new(), String::new(), String::new()),
        };
        rows.push(format!("{},{},{},{},{},{},{}", r.lo, hi, r.types, r.tokens, mb, mo, pct));
        display.push(vec![
            format!("[{}, {})", r.lo, r.hi.map(|h| h.to_string()).unwrap_or("inf".into())),
            r.types.to_string(),
            r.tokens.to_string(),
            mb,
            mo,
            pct,
        ]);
    }
    write_csv(
        &cfg.out_dir.join("bands.csv"),
        &cfg.echo,
        "band_lo,band_hi,types,tokens,mean_ce_baseline,mean_ce_ours,rel_diff_pct",
        &rows,
    )?;
    print!(
        "{}",
        text_table(
            &["band", "types", "tokens", "mean_ce_baseline", "mean_ce_ours", "rel_diff_pct"],
            &display
        )
    );
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_paths()?;
    if cfg.bench_kinds.is_empty() {
        return Err(CliError::Config("bench.kinds is empty; nothing to benchmark".into()));
    }
    let variants = cfg
        .bench_kinds
        .iter()
        .map(|s| Variant::parse(s, &cfg.output))
        .collect::<Result<Vec<_>, _>>()?;
    ensure_out_dir(cfg)?;
    let corpus = corpus::load(cfg)?;

    let rows = epoch_benchmark(cfg, &corpus, &variants, cfg.bench_repetitions)?;
    let csv: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{:.3},{:.4}", r.label, r.mean_seconds, r.ratio_vs_tied))
        .collect();
    write_csv(&cfg.out_dir.join("bench.csv"), &cfg.echo, "kind,mean_epoch_seconds,ratio_vs_tied", &csv)?;

    let display: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![r.label.clone(), format!("{:.3}", r.mean_seconds), format!("{:.4}", r.ratio_vs_tied)]
        })
        .collect();
    print!("{}", text_table(&["kind", "mean_epoch_seconds", "ratio_vs_tied"], &display));
    Ok(())
}

pub fn cmd_params(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_paths()?;
    ensure_out_dir(cfg)?;
    let corpus = corpus::load(cfg)?;
    let model = Model::build(cfg.model_config(corpus.vocab.len()), cfg.seeds[0])?;

    let groups = model.param_groups();
    let total: usize = groups.iter().map(|(_, n)| n).sum();

    // the enumerated output subtotal must equal the closed form
    let closed = param_count(
        cfg.output.kind,
        corpus.vocab.len(),
        cfg.encoder.embed_size,
        cfg.encoder.hidden_size,
        cfg.output.d_joint,
        Some(cfg.output.depth),
    )?;
    let enumerated = groups.iter().find(|(n, _)| *n == "output").map(|(_, c)| *c).unwrap();
    if closed != enumerated {
        return Err(CliError::Data(format!(
            "internal accounting error: enumerated output parameters {enumerated} != closed form {closed}"
        )));
    }

    let mut rows: Vec<String> = groups.iter().map(|(n, c)| format!("{n},{c}")).collect();
    rows.push(format!("total,{total}"));
    write_csv(&cfg.out_dir.join("params.csv"), &cfg.echo, "component,parameters", &rows)?;

    let display: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.split(',').map(str::to_string).collect())
        .collect();
    print!("{}", text_table(&["component", "parameters"], &display));
    Ok(())
}

/// Everything the echoed-provenance contract needs in one place.
pub fn provenance_header(cfg: &RunConfig) -> String {
    echo_comments(&cfg.echo)
}
