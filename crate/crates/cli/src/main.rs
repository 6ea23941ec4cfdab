use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use mgkan::commands;
use mgkan::config::{RunConfig, KEYS, OUTPUT_DIR_ENV};
use mgkan::metrics::{comparison_table, ranked_tsv};
use mgkan::Error;

const BOOL_KEYS: &[&str] = &["free_embedding", "no_kan", "no_af", "no_kf", "no_dn", "no_ci", "no_sim", "symmetric"];

fn key_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("flat key = value configuration file; flags override it")];
    for &(key, help) in KEYS {
        let mut arg = Arg::new(key).long(key).help(help).action(ArgAction::Set);
        if BOOL_KEYS.contains(&key) {
            arg = arg
                .value_name("BOOL")
                .num_args(0..=1)
                .require_equals(true)
                .default_missing_value("true");
        } else {
            arg = arg.value_name("VALUE");
        }
        args.push(arg);
    }
    args
}

fn cli() -> Command {
    let sub = |name: &'static str, about: &'static str| Command::new(name).about(about).args(key_args());
    Command::new("mgkan")
        .about("Direction-aware drug interaction prediction with graph KAN encoders")
        .after_help(format!("The default output directory is read from ${OUTPUT_DIR_ENV}."))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("build-views", "build the interaction, co-interaction and similarity views"))
        .subcommand(sub("train", "cross-validated training; writes report, scores and checkpoint"))
        .subcommand(sub("ablate", "full model plus every single-component variant"))
        .subcommand(sub("predict-topk", "rank the top-K unknown ordered pairs with a checkpoint"))
        .subcommand(sub("evaluate", "task 1 metrics from a persisted scores file"))
}

fn resolve_config(m: &ArgMatches) -> mgkan::Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::load(Path::new(path))?,
        None => RunConfig::default(),
    };
    for &(key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require(value: &str, key: &str) -> mgkan::Result<()> {
    if value.is_empty() {
        return Err(Error::Usage(format!("--{key} is required")));
    }
    Ok(())
}

fn run(name: &str, m: &ArgMatches) -> mgkan::Result<()> {
    let cfg = resolve_config(m)?;
    match name {
        "build-views" => {
            require(&cfg.edges, "edges")?;
            let summary = commands::build_views(&cfg)?;
            print!("{}", summary.to_tsv());
        }
        "train" => {
            require(&cfg.edges, "edges")?;
            let run = commands::train(&cfg)?;
            print!("{}", run.report.pretty());
            println!("best fold {}; checkpoint {}", run.best_fold, run.checkpoint.display());
        }
        "ablate" => {
            require(&cfg.edges, "edges")?;
            let reports = commands::ablate(&cfg)?;
            print!("{}", comparison_table(&reports));
        }
        "predict-topk" => {
            require(&cfg.edges, "edges")?;
            let ckpt: PathBuf = cfg.checkpoint_path();
            let ranked = commands::predict_topk(&cfg, &ckpt, cfg.topk)?;
            print!("{}", ranked_tsv(&ranked));
        }
        "evaluate" => {
            require(&cfg.scores, "scores")?;
            let s = commands::evaluate_scores(Path::new(&cfg.scores), cfg.tau)?;
            println!("auroc\t{:.6}\nauprc\t{:.6}\nacc\t{:.6}\nf1\t{:.6}", s.auroc, s.auprc, s.acc, s.f1);
        }
        other => unreachable!("unknown subcommand {other}"),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Io { .. }
        | Error::Config(_)
        | Error::Construction(_)
        | Error::Usage(_)
        | Error::Request(_) => 2,
        Error::Divergence { .. } | Error::UndefinedMetric(_) | Error::Shape { .. } => 1,
        Error::Checkpoint(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
