//! Primal-dual training loop for loss-shaping constraints.
//!
//! Each minibatch performs, in order:
//!
//! 1. a primal optimizer step on the time-weighted loss with weights
//!    `lambda_i + 1/T_p` (telescoped weights for monotonic constraints),
//! 2. constraint evaluation on the same batch with the updated parameters,
//! 3. a projected gradient step on the slacks `zeta` (resilient mode only),
//! 4. a projected supergradient step on the multipliers `lambda`.
//!
//! ERM skips 2-4. The dual-regularized variant drops `zeta` and instead
//! ascends `s - lambda/alpha`, the dual of the same resilient problem.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{constraint_slacks, ConstraintMode, ConstraintSpec, RelaxationCost};
use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::optim::{OptimizerKind, PrimalOptimizer};
use crate::predictor::{LossKind, PredictorParams, StepLossVector, StepWeights};
use crate::record::{fmt_f64, fmt_list, parse_list, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Erm,
    Constrained,
    Resilient,
    ResilientDualReg,
    Monotonic,
}

impl TrainMode {
    pub fn is_constrained(self) -> bool {
        self != TrainMode::Erm
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Erm => "erm",
            TrainMode::Constrained => "constrained",
            TrainMode::Resilient => "resilient",
            TrainMode::ResilientDualReg => "resilient_dualreg",
            TrainMode::Monotonic => "monotonic",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "erm" => TrainMode::Erm,
            "constrained" => TrainMode::Constrained,
            "resilient" => TrainMode::Resilient,
            "resilient_dualreg" => TrainMode::ResilientDualReg,
            "monotonic" => TrainMode::Monotonic,
            other => return Err(Error::InvalidArgument(format!("unknown training mode `{other}`"))),
        })
    }
}

/// Where the constraint slacks for the dual update are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualEval {
    /// The minibatch used by the primal step.
    #[default]
    Batch,
    /// The whole training split, once per epoch.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub primal_lr: f64,
    pub dual_lr: f64,
    pub slack_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dual_init: f64,
    pub optimizer: OptimizerKind,
    pub mode: TrainMode,
    /// Only honored in ERM mode.
    pub early_stopping: bool,
    pub patience: usize,
    pub seed: u64,
    pub dual_eval: DualEval,
    /// Keep multipliers and slacks at their initial values.
    pub freeze_duals: bool,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            primal_lr: 1e-3,
            dual_lr: 0.01,
            slack_lr: 0.01,
            epochs: 10,
            batch_size: 32,
            dual_init: 1.0,
            optimizer: OptimizerKind::adam(),
            mode: TrainMode::Erm,
            early_stopping: true,
            patience: 3,
            seed: 0,
            dual_eval: DualEval::Batch,
            freeze_duals: false,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(format!("train.{field}"), reason));
        for (name, v) in [("primal_lr", self.primal_lr), ("dual_lr", self.dual_lr), ("slack_lr", self.slack_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(name, "must be a positive number");
            }
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if !(self.dual_init.is_finite() && self.dual_init >= 0.0) {
            return bad("dual_init", "must be >= 0");
        }
        if self.early_stopping && self.patience == 0 {
            return bad("patience", "must be >= 1 when early stopping is on");
        }
        Ok(())
    }

    /// Checks that `spec` is usable with this mode.
    pub fn check_spec(&self, spec: Option<&ConstraintSpec>) -> Result<()> {
        match (self.mode, spec) {
            (TrainMode::Erm, _) => Ok(()),
            (_, None) => Err(Error::config("constraint", format!("mode {} needs a constraint source", self.mode))),
            (TrainMode::Monotonic, Some(s)) if s.mode != ConstraintMode::Monotonic => {
                Err(Error::config("constraint.source", "monotonic mode needs monotonic constraints"))
            }
            (m, Some(s)) if m != TrainMode::Monotonic && s.mode == ConstraintMode::Monotonic => {
                Err(Error::config("train.mode", "monotonic constraints need train.mode = monotonic"))
            }
            _ => Ok(()),
        }
    }
}

/// Multipliers and slacks, both kept entrywise non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl DualState {
    pub fn new(num_constraints: usize, dual_init: f64) -> Self {
        DualState { lambda: vec![dual_init; num_constraints], zeta: vec![0.0; num_constraints] }
    }
}

/// Weights of the primal time-weighted loss for the current multipliers.
///
/// Level constraints give `lambda_i + 1/T_p`. Monotonic constraints
/// `sum_i lambda_i (l_i - l_{i+1})` telescope to `1/T_p + lambda_i - lambda_{i-1}`
/// with `lambda_0 = lambda_{T_p} = 0`, so these weights may be negative.
pub fn step_weights(mode: TrainMode, lambda: &[f64], pred_len: usize) -> StepWeights {
    let base = 1.0 / pred_len as f64;
    match mode {
        TrainMode::Erm => StepWeights::uniform(pred_len),
        TrainMode::Monotonic => {
            debug_assert_eq!(lambda.len() + 1, pred_len);
            let at = |i: usize| if i < lambda.len() { lambda[i] } else { 0.0 };
            let w: Vec<f64> = (0..pred_len)
                .map(|i| base + at(i) - if i == 0 { 0.0 } else { lambda[i - 1] })
                .collect();
            debug_assert!({
                let total: f64 = w.iter().sum();
                let scale = 1.0 + lambda.iter().sum::<f64>();
                (total - 1.0).abs() <= 1e-12 * scale * pred_len as f64
            });
            StepWeights(w)
        }
        _ => StepWeights(lambda.iter().map(|l| l + base).collect()),
    }
}

/// One optimizer step on the weighted loss. Returns the weighted loss and
/// the per-step losses measured before the update.
pub fn primal_step(
    params: &mut PredictorParams,
    opt: &mut PrimalOptimizer,
    batch: &WindowBatch,
    weights: &StepWeights,
) -> Result<(f64, StepLossVector)> {
    let (value, grad, steps) = params.weighted_loss_grad_with_steps(batch, weights)?;
    opt.step(&mut params.theta, &grad);
    if params.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { location: " (parameters diverged)".into() });
    }
    Ok((value, steps))
}

/// `zeta <- max(0, zeta - eta * (grad h(zeta) - lambda))`.
pub fn slack_step(state: &DualState, cost: &RelaxationCost, slack_lr: f64) -> DualState {
    let grad = cost.grad(&state.zeta);
    let zeta = state
        .zeta
        .iter()
        .zip(grad.iter().zip(&state.lambda))
        .map(|(z, (g, l))| (z - slack_lr * (g - l)).max(0.0))
        .collect();
    DualState { lambda: state.lambda.clone(), zeta }
}

/// `lambda <- max(0, lambda + eta * s)`.
pub fn dual_step(state: &DualState, slacks: &[f64], dual_lr: f64) -> Result<DualState> {
    if slacks.len() != state.lambda.len() {
        return Err(Error::DimMismatch(format!("{} slacks for {} multipliers", slacks.len(), state.lambda.len())));
    }
    let lambda = state.lambda.iter().zip(slacks).map(|(l, s)| (l + dual_lr * s).max(0.0)).collect();
    Ok(DualState { lambda, zeta: state.zeta.clone() })
}

/// Dual step of the conjugate form: `lambda <- max(0, lambda + eta * (s - lambda/alpha))`.
/// The effective slack `lambda/alpha` is stored in `zeta`.
pub fn dual_step_regularized(
    state: &DualState,
    slacks: &[f64],
    dual_lr: f64,
    cost: &RelaxationCost,
) -> Result<DualState> {
    if slacks.len() != state.lambda.len() {
        return Err(Error::DimMismatch(format!("{} slacks for {} multipliers", slacks.len(), state.lambda.len())));
    }
    let lambda: Vec<f64> = state
        .lambda
        .iter()
        .zip(slacks)
        .map(|(l, s)| (l + dual_lr * (s - l / cost.alpha)).max(0.0))
        .collect();
    let zeta = lambda.iter().map(|l| l / cost.alpha).collect();
    Ok(DualState { lambda, zeta })
}

/// Per-epoch snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of `step_losses` (the ERM objective on the full train split).
    pub mean_loss: f64,
    pub step_losses: Vec<f64>,
    pub val_loss: Option<f64>,
    pub lambda: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Largest positive constraint value on the full train split (0 if feasible).
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub mode: TrainMode,
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub final_params: PredictorParams,
    pub final_dual: DualState,
}

impl TrainTrace {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("trace has at least one epoch")
    }

    pub fn to_record_string(&self) -> String {
        let mut rec = Record::new("trace");
        rec.push("mode", self.mode)
            .push("epochs", self.epochs.len())
            .push("stopped_early", self.stopped_early)
            .push_list("final.lambda", &self.final_dual.lambda)
            .push_list("final.zeta", &self.final_dual.zeta);
        for e in &self.epochs {
            let val = e.val_loss.map(fmt_f64).unwrap_or_else(|| "none".into());
            rec.push(
                format!("epoch.{}", e.epoch),
                format!(
                    "loss={} val={} max_violation={} steps={} lambda={} zeta={}",
                    fmt_f64(e.mean_loss),
                    val,
                    fmt_f64(e.max_violation),
                    fmt_list(&e.step_losses),
                    fmt_list(&e.lambda),
                    fmt_list(&e.zeta)
                ),
            );
        }
        rec.render(Some("lshape trace v1"))
    }

    /// Parses a trace file; the parameters come from the matching checkpoint.
    pub fn parse(text: &str, final_params: PredictorParams) -> Result<Self> {
        let rec = Record::parse("trace", text)?;
        let mode: TrainMode = rec.require("mode")?.parse()?;
        let n: usize = rec.parse_key("epochs")?;
        let stopped_early: bool = rec.parse_key("stopped_early")?;
        let final_dual = DualState { lambda: rec.list("final.lambda")?, zeta: rec.list("final.zeta")? };
        let mut epochs = Vec::with_capacity(n);
        for epoch in 1..=n {
            let line = rec.require(&format!("epoch.{epoch}"))?;
            let field = |name: &str| -> Result<&str> {
                line.split_whitespace()
                    .find_map(|tok| tok.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
                    .ok_or_else(|| Error::format("trace", format!("epoch {epoch}: missing `{name}`")))
            };
            let num = |name: &str| -> Result<f64> {
                field(name)?.parse().map_err(|e| Error::format("trace", format!("epoch {epoch} {name}: {e}")))
            };
            let val_loss = match field("val")? {
                "none" => None,
                _ => Some(num("val")?),
            };
            epochs.push(EpochRecord {
                epoch,
                mean_loss: num("loss")?,
                step_losses: parse_list("trace", field("steps")?)?,
                val_loss,
                lambda: parse_list("trace", field("lambda")?)?,
                zeta: parse_list("trace", field("zeta")?)?,
                max_violation: num("max_violation")?,
            });
        }
        Ok(TrainTrace { mode, epochs, stopped_early, final_params, final_dual })
    }
}

/// Windows consumed by [`train`].
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a WindowBatch,
    /// Needed for ERM early stopping; optional otherwise.
    pub val: Option<&'a WindowBatch>,
}

fn max_violation(losses: &StepLossVector, spec: Option<&ConstraintSpec>, zeta: &[f64]) -> Result<f64> {
    let Some(spec) = spec else { return Ok(0.0) };
    let zeros;
    let zeta = if zeta.len() == spec.num_constraints(losses.len()) {
        zeta
    } else {
        zeros = vec![0.0; spec.num_constraints(losses.len())];
        &zeros
    };
    let s = constraint_slacks(losses, spec, zeta)?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

fn located(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFiniteGradient { location } => {
            Error::NonFiniteGradient { location: format!(" at epoch {epoch}, batch {batch}{location}") }
        }
        other => other,
    }
}

/// Runs the configured training loop from `init`.
///
/// Constrained modes never early-stop. ERM with `early_stopping` tracks the
/// validation mean loss, stops after `patience` epochs without improvement
/// and returns the best parameters seen.
pub fn train(
    data: TrainData<'_>,
    init: PredictorParams,
    cfg: &TrainConfig,
    spec: Option<&ConstraintSpec>,
) -> Result<TrainTrace> {
    cfg.validate()?;
    cfg.check_spec(spec)?;
    let pred_len = init.dims.pred_len;
    if data.train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let early_stopping = cfg.early_stopping && cfg.mode == TrainMode::Erm;
    if early_stopping && data.val.is_none() {
        return Err(Error::config("train.early_stopping", "needs validation windows"));
    }
    let active_spec = if cfg.mode.is_constrained() { spec } else { None };
    let m = active_spec.map_or(0, |s| s.num_constraints(pred_len));
    if let Some(s) = active_spec {
        if s.mode != ConstraintMode::Monotonic && s.epsilon.len() != pred_len {
            return Err(Error::DimMismatch(format!("{} levels for {pred_len} prediction steps", s.epsilon.len())));
        }
    }

    let mut params = init;
    let mut opt = PrimalOptimizer::new(cfg.optimizer, cfg.primal_lr, params.len());
    let mut dual = DualState::new(m, if cfg.mode.is_constrained() { cfg.dual_init } else { 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, PredictorParams)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.train.select(chunk);
            let weights = step_weights(cfg.mode, &dual.lambda, pred_len);
            primal_step(&mut params, &mut opt, &batch, &weights).map_err(|e| located(e, epoch, b + 1))?;

            if let (Some(spec), false, DualEval::Batch) = (active_spec, cfg.freeze_duals, cfg.dual_eval) {
                let losses = params.step_losses(&batch, LossKind::SquaredError)?;
                dual = update_duals(cfg, spec, &dual, &losses)?;
            }
        }

        let train_steps = params.step_losses(data.train, LossKind::SquaredError)?;
        if let (Some(spec), false, DualEval::Full) = (active_spec, cfg.freeze_duals, cfg.dual_eval) {
            dual = update_duals(cfg, spec, &dual, &train_steps)?;
        }
        let val_loss = match data.val {
            Some(v) if !v.is_empty() => Some(params.step_losses(v, LossKind::SquaredError)?.mean()),
            _ => None,
        };
        epochs.push(EpochRecord {
            epoch,
            mean_loss: train_steps.mean(),
            max_violation: max_violation(&train_steps, spec, &dual.zeta)?,
            step_losses: train_steps.0,
            val_loss,
            lambda: dual.lambda.clone(),
            zeta: dual.zeta.clone(),
        });

        if early_stopping {
            let v = val_loss.expect("validation loss present");
            match &best {
                Some((b, _)) if v >= *b => {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        stopped_early = epoch < cfg.epochs;
                        break;
                    }
                }
                _ => {
                    best = Some((v, params.clone()));
                    since_best = 0;
                }
            }
        }
    }

    if let Some((_, p)) = best {
        params = p;
    }
    Ok(TrainTrace { mode: cfg.mode, epochs, stopped_early, final_params: params, final_dual: dual })
}

fn update_duals(
    cfg: &TrainConfig,
    spec: &ConstraintSpec,
    dual: &DualState,
    losses: &StepLossVector,
) -> Result<DualState> {
    match cfg.mode {
        TrainMode::Erm => Ok(dual.clone()),
        TrainMode::Constrained | TrainMode::Monotonic => {
            let s = constraint_slacks(losses, spec, &dual.zeta)?;
            dual_step(dual, &s, cfg.dual_lr)
        }
        TrainMode::Resilient => {
            let s = constraint_slacks(losses, spec, &dual.zeta)?;
            let relaxed = slack_step(dual, &spec.cost, cfg.slack_lr);
            dual_step(&relaxed, &s, cfg.dual_lr)
        }
        TrainMode::ResilientDualReg => {
            let zeros = vec![0.0; dual.lambda.len()];
            let s = constraint_slacks(losses, spec, &zeros)?;
            dual_step_regularized(dual, &s, cfg.dual_lr, &spec.cost)
        }
    }
}

/// Resilient training through the dual-regularized formulation.
pub fn train_dualreg(
    data: TrainData<'_>,
    init: PredictorParams,
    cfg: &TrainConfig,
    spec: &ConstraintSpec,
) -> Result<TrainTrace> {
    if cfg.mode != TrainMode::ResilientDualReg {
        return Err(Error::config("train.mode", "train_dualreg needs mode resilient_dualreg"));
    }
    train(data, init, cfg, Some(spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{extract_windows, TimeSeriesDataset, WindowConfig};
    use crate::predictor::{init_params, Arch, Dims};
    use ndarray::Array2;

    fn linear_series(len: usize) -> TimeSeriesDataset {
        // x_t = 0.8 x_{t-1} + 0.3 x_{t-2}-free AR(2)-like, noiseless and non-degenerate
        let mut v = vec![1.0, 0.5];
        for t in 2..len {
            let next = 0.9 * v[t - 1] - 0.2 * v[t - 2] + 0.3 * ((t as f64) * 0.7).sin();
            v.push(next);
        }
        TimeSeriesDataset::from_values(Array2::from_shape_vec((len, 1), v).unwrap()).unwrap()
    }

    #[test]
    fn weight_examples() {
        let w = step_weights(TrainMode::Constrained, &[1.0, 0.0], 2);
        assert_eq!(w.0, vec![1.5, 0.5]);
        let w = step_weights(TrainMode::Monotonic, &[1.0, 2.0], 3);
        let expect = [1.0 / 3.0 + 1.0, 1.0 / 3.0 + 1.0, 1.0 / 3.0 - 2.0];
        for (a, b) in w.0.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(step_weights(TrainMode::Erm, &[], 4).0, vec![0.25; 4]);
    }

    #[test]
    fn slack_step_examples() {
        let h = RelaxationCost::new(1.0).unwrap();
        let origin = DualState { lambda: vec![0.0], zeta: vec![0.0] };
        assert_eq!(slack_step(&origin, &h, 0.1).zeta, vec![0.0]);
        let s = slack_step(&DualState { lambda: vec![0.5], zeta: vec![1.0] }, &h, 0.1);
        assert!((s.zeta[0] - 0.95).abs() < 1e-15);
        let fixed = DualState { lambda: vec![2.0], zeta: vec![2.0] };
        assert_eq!(slack_step(&fixed, &h, 0.1), fixed);
    }

    #[test]
    fn dual_step_examples() {
        let st = DualState { lambda: vec![0.2, 1.0], zeta: vec![0.0, 0.0] };
        assert_eq!(dual_step(&st, &[0.0, 0.0], 0.5).unwrap(), st);
        let d = dual_step(&st, &[-0.5, 0.3], 1.0).unwrap();
        assert_eq!(d.lambda[0], 0.0);
        let d = dual_step(&DualState { lambda: vec![1.0], zeta: vec![0.0] }, &[0.3], 0.01).unwrap();
        assert!((d.lambda[0] - 1.003).abs() < 1e-15);
        assert!(dual_step(&st, &[0.0], 0.1).is_err());

        let h = RelaxationCost::new(1.0).unwrap();
        let r = dual_step_regularized(&DualState { lambda: vec![1.0], zeta: vec![0.0] }, &[0.0], 0.1, &h).unwrap();
        assert!((r.lambda[0] - 0.9).abs() < 1e-15);
        let big = RelaxationCost::new(1e300).unwrap();
        let plain = dual_step(&st, &[0.4, -0.1], 0.1).unwrap();
        let reg = dual_step_regularized(&st, &[0.4, -0.1], 0.1, &big).unwrap();
        assert_eq!(plain.lambda, reg.lambda);
    }

    #[test]
    fn zero_multiplier_step_equals_erm_step() {
        let ds = linear_series(60);
        let w = extract_windows(&ds, &WindowConfig::new(4, 3).unwrap()).unwrap();
        let init = init_params(Arch::Mlp1, Dims::new(4, 3, 1, 5), 3).unwrap();
        let mut a = init.clone();
        let mut b = init;
        let mut oa = PrimalOptimizer::new(OptimizerKind::Sgd, 0.05, a.len());
        let mut ob = PrimalOptimizer::new(OptimizerKind::Sgd, 0.05, b.len());
        primal_step(&mut a, &mut oa, &w, &step_weights(TrainMode::Erm, &[], 3)).unwrap();
        primal_step(&mut b, &mut ob, &w, &step_weights(TrainMode::Constrained, &[0.0; 3], 3)).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn erm_recovers_noiseless_linear_generator() {
        let ds = linear_series(400);
        let cfg_w = WindowConfig::new(6, 2).unwrap();
        let w = extract_windows(&ds, &cfg_w).unwrap();
        let init = init_params(Arch::DirectLinear, Dims::new(6, 2, 1, 0), 0).unwrap();
        let cfg = TrainConfig {
            primal_lr: 0.01,
            epochs: 300,
            batch_size: 64,
            early_stopping: false,
            ..TrainConfig::default()
        };
        let trace = train(TrainData { train: &w, val: None }, init, &cfg, None).unwrap();
        assert!(trace.last().mean_loss <= 1e-6, "final mse {}", trace.last().mean_loss);
    }

    #[test]
    fn constrained_modes_require_compatible_spec() {
        let ds = linear_series(50);
        let w = extract_windows(&ds, &WindowConfig::new(4, 3).unwrap()).unwrap();
        let init = init_params(Arch::DirectLinear, Dims::new(4, 3, 1, 0), 0).unwrap();
        let data = TrainData { train: &w, val: None };
        let cfg = TrainConfig { mode: TrainMode::Constrained, epochs: 1, ..TrainConfig::default() };
        assert!(matches!(train(data, init.clone(), &cfg, None), Err(Error::ConfigInvalid { .. })));
        let mono = ConstraintSpec::monotonic();
        assert!(train(data, init.clone(), &cfg, Some(&mono)).is_err());
        let cfg_m = TrainConfig { mode: TrainMode::Monotonic, ..cfg.clone() };
        let constant = ConstraintSpec::constant(1.0, 3).unwrap();
        assert!(train(data, init.clone(), &cfg_m, Some(&constant)).is_err());
        assert!(train(data, init.clone(), &cfg_m, Some(&mono)).is_ok());
        let erm_es = TrainConfig { early_stopping: true, ..TrainConfig::default() };
        assert!(train(data, init.clone(), &erm_es, None).is_err());
        let reg = TrainConfig { mode: TrainMode::Resilient, ..cfg };
        assert!(train_dualreg(data, init, &reg, &constant).is_err());
    }

    #[test]
    fn duals_stay_nonnegative_and_runs_are_deterministic() {
        let ds = linear_series(120);
        let w = extract_windows(&ds, &WindowConfig::new(5, 3).unwrap()).unwrap();
        let init = init_params(Arch::Mlp1, Dims::new(5, 3, 1, 4), 1).unwrap();
        let spec = ConstraintSpec::constant(0.01, 3).unwrap();
        for mode in [TrainMode::Constrained, TrainMode::Resilient, TrainMode::ResilientDualReg] {
            let cfg = TrainConfig { mode, epochs: 4, batch_size: 8, dual_lr: 0.5, slack_lr: 0.5, seed: 7, ..TrainConfig::default() };
            let a = train(TrainData { train: &w, val: None }, init.clone(), &cfg, Some(&spec)).unwrap();
            let b = train(TrainData { train: &w, val: None }, init.clone(), &cfg, Some(&spec)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.epochs.len(), 4);
            for e in &a.epochs {
                assert!(e.lambda.iter().chain(&e.zeta).all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn erm_early_stopping_restores_best() {
        let ds = linear_series(200);
        let cfg_w = WindowConfig::new(5, 2).unwrap();
        let tr = extract_windows(&ds, &cfg_w).unwrap();
        let init = init_params(Arch::Mlp1, Dims::new(5, 2, 1, 8), 2).unwrap();
        // A large learning rate makes validation loss bounce, triggering early stopping.
        let cfg = TrainConfig { primal_lr: 0.3, epochs: 40, patience: 2, ..TrainConfig::default() };
        let trace = train(TrainData { train: &tr, val: Some(&tr) }, init, &cfg, None).unwrap();
        let best = trace.epochs.iter().filter_map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        let final_val = trace.final_params.step_losses(&tr, LossKind::SquaredError).unwrap().mean();
        assert_eq!(final_val, best);
    }

    #[test]
    fn trace_record_round_trip() {
        let ds = linear_series(80);
        let w = extract_windows(&ds, &WindowConfig::new(4, 3).unwrap()).unwrap();
        let init = init_params(Arch::DirectLinear, Dims::new(4, 3, 1, 0), 0).unwrap();
        let spec = ConstraintSpec::constant(0.05, 3).unwrap();
        let cfg = TrainConfig { mode: TrainMode::Resilient, epochs: 3, ..TrainConfig::default() };
        let t = train(TrainData { train: &w, val: Some(&w) }, init, &cfg, Some(&spec)).unwrap();
        let back = TrainTrace::parse(&t.to_record_string(), t.final_params.clone()).unwrap();
        assert_eq!(back, t);
    }
}
