//! End-to-end run: load, split, normalize, window, train, evaluate, write.

use std::path::Path;

use crate::config::{ConstraintSource, DataSource, ErrorSplit, RunConfig};
use crate::constraints::{constant_from_quantile, epsilon_grid, exponential_fit, ConstraintSpec, RelaxationCost};
use crate::data::{chronological_split, extract_windows, load_csv, normalize, NormStats, TimeSeriesDataset, WindowBatch};
use crate::error::{Error, Result};
use crate::eval::{evaluate, grid_search, EvalReport, GridResult};
use crate::predictor::{init_params, Dims, PredictorParams, StepLossVector};
use crate::record::{write_text, Record};
use crate::trainer::{train, TrainData, TrainTrace};

/// Windows of the three chronological segments, normalized with train statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub test: WindowBatch,
    pub norm: NormStats,
    pub dims: Dims,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<TimeSeriesDataset> {
    match &cfg.data {
        DataSource::Synth(s) => s.generate(),
        DataSource::Csv { path, has_timestamps } => load_csv(path, *has_timestamps),
    }
}

/// Windows never straddle segment boundaries.
pub fn prepare(cfg: &RunConfig, ds: &TimeSeriesDataset) -> Result<Prepared> {
    let splits = chronological_split(ds, &cfg.split)?;
    let norm = NormStats::from_dataset(&splits.train)?;
    let win = |seg: &TimeSeriesDataset| extract_windows(&normalize(seg, &norm)?, &cfg.window);
    Ok(Prepared {
        train: win(&splits.train)?,
        val: win(&splits.val)?,
        test: win(&splits.test)?,
        dims: cfg.dims(ds.num_channels()),
        norm,
    })
}

pub fn init_model(cfg: &RunConfig, prepared: &Prepared) -> Result<PredictorParams> {
    init_params(cfg.arch, prepared.dims, cfg.model_seed())
}

/// Per-step ERM errors stored by an earlier ERM run.
#[derive(Debug, Clone)]
pub struct ErmErrors {
    pub train: StepLossVector,
    pub val: StepLossVector,
}

impl ErmErrors {
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<StepLossVector> {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::MissingErmTrace(dir.to_path_buf()));
            }
            Ok(StepLossVector(EvalReport::from_record(&Record::read(&path)?, "")?.per_step_mse))
        };
        Ok(ErmErrors { train: read("train_report.txt")?, val: read("val_report.txt")? })
    }

    fn split(&self, s: ErrorSplit) -> &StepLossVector {
        match s {
            ErrorSplit::Train => &self.train,
            ErrorSplit::Val => &self.val,
        }
    }
}

/// Resolves the single constraint spec of a `train` run. Grids resolve via [`grid_specs`].
pub fn resolve_spec(cfg: &RunConfig, erm: Option<&ErmErrors>) -> Result<Option<ConstraintSpec>> {
    let cost = RelaxationCost::new(cfg.alpha)?;
    let need = || erm.ok_or_else(|| Error::MissingErmTrace(cfg.erm_run_dir()));
    let spec = match &cfg.constraint {
        ConstraintSource::None => return Ok(None),
        ConstraintSource::Explicit(eps) => ConstraintSpec::explicit(eps.clone())?,
        ConstraintSource::Quantile { q, split } => constant_from_quantile(need()?.split(*split), *q)?,
        ConstraintSource::Exponential { split } => exponential_fit(need()?.split(*split))?,
        ConstraintSource::Monotonic => ConstraintSpec::monotonic(),
        ConstraintSource::Grid => return Err(Error::config("constraint.source", "grid needs `lshape grid`")),
    };
    check_levels(&spec, cfg.window.pred_len)?;
    Ok(Some(spec.with_cost(cost)))
}

fn check_levels(spec: &ConstraintSpec, pred_len: usize) -> Result<()> {
    if !spec.epsilon.is_empty() && spec.epsilon.len() != pred_len {
        return Err(Error::ReportMismatch(format!(
            "ERM errors cover {} steps but pred_len is {pred_len}",
            spec.epsilon.len()
        )));
    }
    Ok(())
}

pub fn grid_specs(cfg: &RunConfig, erm: &ErmErrors) -> Result<Vec<ConstraintSpec>> {
    let cost = RelaxationCost::new(cfg.alpha)?;
    let specs = epsilon_grid(&erm.train, &erm.val)?;
    for s in &specs {
        check_levels(s, cfg.window.pred_len)?;
    }
    Ok(specs.into_iter().map(|s| s.with_cost(cost)).collect())
}

/// A finished training run with reports on every segment.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TrainTrace,
    pub spec: Option<ConstraintSpec>,
    pub train_report: EvalReport,
    pub val_report: EvalReport,
    pub test_report: EvalReport,
}

fn report(cfg: &RunConfig, p: &PredictorParams, w: &WindowBatch, spec: Option<&ConstraintSpec>) -> Result<EvalReport> {
    let r = evaluate(p, w)?.with_labels(cfg.train.mode.to_string(), cfg.fingerprint());
    match spec {
        Some(s) => r.with_violation(s),
        None => Ok(r),
    }
}

fn finish(cfg: &RunConfig, prepared: &Prepared, trace: TrainTrace, spec: Option<ConstraintSpec>) -> Result<RunOutput> {
    let p = &trace.final_params;
    Ok(RunOutput {
        train_report: report(cfg, p, &prepared.train, spec.as_ref())?,
        val_report: report(cfg, p, &prepared.val, spec.as_ref())?,
        test_report: report(cfg, p, &prepared.test, spec.as_ref())?,
        trace,
        spec,
    })
}

pub fn run_training(cfg: &RunConfig, prepared: &Prepared, spec: Option<ConstraintSpec>) -> Result<RunOutput> {
    let init = init_model(cfg, prepared)?;
    let data = TrainData { train: &prepared.train, val: Some(&prepared.val) };
    let trace = train(data, init, &cfg.train, spec.as_ref())?;
    finish(cfg, prepared, trace, spec)
}

/// Grid search over the six quantile levels; returns the grid and the
/// winner's full run output.
pub fn run_grid(cfg: &RunConfig, prepared: &Prepared, erm: &ErmErrors) -> Result<(GridResult, RunOutput)> {
    let specs = grid_specs(cfg, erm)?;
    let init = init_model(cfg, prepared)?;
    let grid = grid_search(&prepared.train, &prepared.val, &init, &cfg.train, &specs)?;
    let (trace, _) = grid.best_run();
    let best = finish(cfg, prepared, trace.clone(), Some(grid.best_spec().clone()))?;
    Ok((grid, best))
}

/// Writes every artifact of a run into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    out.trace.final_params.save(&dir.join("checkpoint.txt"))?;
    write_text(&dir.join("trace.txt"), &out.trace.to_record_string())?;
    write_text(&dir.join("report.txt"), &out.test_report.to_record_string())?;
    write_text(&dir.join("val_report.txt"), &out.val_report.to_record_string())?;
    write_text(&dir.join("train_report.txt"), &out.train_report.to_record_string())?;
    write_text(&dir.join("curve.csv"), &out.test_report.curve_csv())?;
    write_text(&dir.join("summary.csv"), &out.test_report.summary_csv(&cfg.dataset_label))?;
    write_text(&dir.join("config.txt"), &cfg.canonical_string())?;
    if let Some(spec) = &out.spec {
        let mut rc = Record::new("constraint");
        spec.write_record(&mut rc, "constraint");
        write_text(&dir.join("constraint.txt"), &rc.render(Some("lshape resolved constraint v1")))?;
    }
    Ok(())
}
