use std::path::PathBuf;
use std::process::ExitCode;

use drill_cli::commands;
use drill_cli::config::RunConfig;
use drill_cli::CliError;

const USAGE: &str = "\
usage: drill <command> --config PATH [options]

commands:
  train    train one model per seed; writes logs, checkpoints, summary.csv
  eval     evaluate a checkpoint on a split    (--ckpt PATH --split NAME)
  ablate   train every [ablate] kinds variant; writes ablation.csv
  bands    frequency-band loss comparison      (--baseline PATH --ours PATH)
  bench    per-epoch wall-clock benchmark over [bench] kinds
  params   parameter-count report for the configured model

options:
  --config PATH    run configuration file (required)
  --out DIR        override the output directory
  --seed N         override the seed list with a single seed
  --threads N      worker tasks for large matrix kernels
  --ckpt PATH      checkpoint to evaluate (eval)
  --split NAME     train | valid | test (eval; default test)
  --baseline PATH  baseline checkpoint (bands)
  --ours PATH      comparison checkpoint (bands)
";

struct Args {
    command: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    ckpt: Option<PathBuf>,
    split: String,
    baseline: Option<PathBuf>,
    ours: Option<PathBuf>,
}

fn parse_args(mut argv: impl Iterator<Item = String>) -> Result<Args, String> {
    let command = argv.next().ok_or_else(|| USAGE.to_string())?;
    let mut args = Args {
        command,
        config: None,
        out: None,
        seed: None,
        threads: None,
        ckpt: None,
        split: "test".to_string(),
        baseline: None,
        ours: None,
    };
    while let Some(flag) = argv.next() {
        let mut value = |name: &str| {
            argv.next().ok_or_else(|| format!("flag {name} requires a value"))
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value("--config")?)),
            "--out" => args.out = Some(PathBuf::from(value("--out")?)),
            "--seed" => {
                args.seed = Some(
                    value("--seed")?
                        .parse()
                        .map_err(|_| "flag --seed requires an integer".to_string())?,
                )
            }
            "--threads" => {
                args.threads = Some(
                    value("--threads")?
                        .parse()
                        .map_err(|_| "flag --threads requires an integer".to_string())?,
                )
            }
            "--ckpt" => args.ckpt = Some(PathBuf::from(value("--ckpt")?)),
            "--split" => args.split = value("--split")?,
            "--baseline" => args.baseline = Some(PathBuf::from(value("--baseline")?)),
            "--ours" => args.ours = Some(PathBuf::from(value("--ours")?)),
            other => return Err(format!("unknown flag `{other}`\n\n{USAGE}")),
        }
    }
    Ok(args)
}

fn run(args: Args) -> Result<(), CliError> {
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        drill_core::gemm::set_threads(t);
    }
    let config_path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }

    match args.command.as_str() {
        "train" => commands::cmd_train(&cfg),
        "eval" => {
            let ckpt = args
                .ckpt
                .ok_or_else(|| CliError::Config("eval requires --ckpt PATH".into()))?;
            commands::cmd_eval(&cfg, &ckpt, &args.split)
        }
        "ablate" => commands::cmd_ablate(&cfg),
        "bands" => {
            let baseline = args
                .baseline
                .ok_or_else(|| CliError::Config("bands requires --baseline PATH".into()))?;
            let ours = args
                .ours
                .ok_or_else(|| CliError::Config("bands requires --ours PATH".into()))?;
            commands::cmd_bands(&cfg, &baseline, &ours)
        }
        "bench" => commands::cmd_bench(&cfg),
        "params" => commands::cmd_params(&cfg),
        other => Err(CliError::Config(format!("unknown command `{other}`\n\n{USAGE}"))),
    }
}

fn main() -> ExitCode {
    let mut argv = std::env::args().skip(1).peekable();
    if argv.peek().is_none() {
        eprint!("{USAGE}");
        return ExitCode::from(2);
    }
    match parse_args(argv) {
        Ok(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
