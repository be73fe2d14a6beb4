//! `lshape` subcommands. Each returns a process exit code:
//! 0 success, 2 config error, 3 data error, 4 numerical failure.
//!
//! Failures print an `error` record on stderr and, when the output directory
//! is known, also write it to `error.txt` there.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{DataSource, RunConfig};
use crate::data::write_csv;
use crate::error::{Error, ErrorClass, Result};
use crate::eval::{compare, EvalReport};
use crate::pipeline::{load_dataset, prepare, resolve_spec, run_grid, run_training, write_run, ErmErrors};
use crate::record::{read_text, write_text, Record};

#[derive(Debug, Parser)]
#[command(name = "lshape", version, about = "Loss-shaping constrained training for multi-step forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write checkpoint, trace, reports and curves.
    Train(RunArgs),
    /// Train one candidate per constraint level and keep the best by validation MSE.
    Grid(RunArgs),
    /// Percent changes of a candidate report against a baseline report.
    Compare(CompareArgs),
    /// Write the configured synthetic series as CSV.
    Synth(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub baseline: PathBuf,
    pub candidate: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

pub fn error_record(e: &Error) -> String {
    let class = match e.class() {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    };
    let mut rec = Record::new("error");
    rec.push("kind", e.kind())
        .push("class", class)
        .push("exit_code", exit_code(e.class()))
        .push("message", e.to_string().replace('\n', " "));
    rec.render(Some("lshape error v1"))
}

pub fn run(cli: Cli) -> i32 {
    let (out, result) = match &cli.command {
        Command::Train(a) => (out_hint(a), cmd_train(a)),
        Command::Grid(a) => (out_hint(a), cmd_grid(a)),
        Command::Synth(a) => (out_hint(a), cmd_synth(a)),
        Command::Compare(a) => (Some(a.out.clone()), cmd_compare(a)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let text = error_record(&e);
            eprint!("{text}");
            if let Some(dir) = out {
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = fs::write(dir.join("error.txt"), &text);
                }
            }
            exit_code(e.class())
        }
    }
}

/// Best-effort output directory for the error record, before the config is validated.
fn out_hint(a: &RunArgs) -> Option<PathBuf> {
    a.out.clone().or_else(|| RunConfig::load(&a.config).ok().map(|c| c.out_dir))
}

fn load_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

pub fn cmd_train(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a)?;
    cfg.validate(false)?;
    let erm = if cfg.constraint.needs_erm_run() { Some(ErmErrors::load(&cfg.erm_run_dir())?) } else { None };
    let ds = load_dataset(&cfg)?;
    let prepared = prepare(&cfg, &ds)?;
    let spec = resolve_spec(&cfg, erm.as_ref())?;
    let out = run_training(&cfg, &prepared, spec)?;
    write_run(&cfg.out_dir, &cfg, &out)
}

pub fn cmd_grid(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a)?;
    cfg.validate(true)?;
    let erm = ErmErrors::load(&cfg.erm_run_dir())?;
    let ds = load_dataset(&cfg)?;
    let prepared = prepare(&cfg, &ds)?;
    let (grid, best) = run_grid(&cfg, &prepared, &erm)?;
    let fingerprint = cfg.fingerprint();
    let mut summary = Record::new("best");
    summary.push("candidates", grid.candidates.len()).push("best", grid.best);
    for (k, c) in grid.candidates.iter().enumerate() {
        let dir = cfg.out_dir.join(format!("candidate_{k}"));
        let mut rc = Record::new("constraint");
        c.spec.write_record(&mut rc, "constraint");
        write_text(&dir.join("constraint.txt"), &rc.render(Some("lshape resolved constraint v1")))?;
        match &c.outcome {
            Ok((trace, val)) => {
                let val = val.clone().with_labels(cfg.train.mode.to_string(), fingerprint.clone());
                write_text(&dir.join("report.txt"), &val.to_record_string())?;
                write_text(&dir.join("trace.txt"), &trace.to_record_string())?;
                summary.push_f64(format!("candidate.{k}.val_mse"), val.mean_mse);
            }
            Err(e) => {
                write_text(&dir.join("error.txt"), &error_record(e))?;
                summary.push(format!("candidate.{k}.val_mse"), "failed");
            }
        }
    }
    let (_, best_val) = grid.best_run();
    summary.push_f64("val_mse", best_val.mean_mse);
    grid.best_spec().write_record(&mut summary, "constraint");
    write_text(&cfg.out_dir.join("best.txt"), &summary.render(Some("lshape grid best v1")))?;
    write_run(&cfg.out_dir, &cfg, &best)
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let read = |p: &Path| EvalReport::parse(&read_text(p)?);
    let cmp = compare(&read(&a.baseline)?, &read(&a.candidate)?)?;
    write_text(&a.out.join("comparison.txt"), &cmp.to_record_string())?;
    write_text(&a.out.join("merged.csv"), &cmp.merged_csv())
}

pub fn cmd_synth(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a)?;
    if !matches!(cfg.data, DataSource::Synth(_)) {
        return Err(Error::config("data.source", "`lshape synth` needs data.source = synth"));
    }
    let ds = load_dataset(&cfg)?;
    write_csv(&ds, &cfg.out_dir.join("series.csv"))
}
