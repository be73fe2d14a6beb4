//! Per-step constraint specifications and the quadratic relaxation cost.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::predictor::StepLossVector;
use crate::record::Record;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// `l_i <= eps` with one level for every step.
    Constant,
    /// `l_i <= eps_i` with positive, non-decreasing levels.
    Exponential,
    /// `l_i <= l_{i+1}` for adjacent steps; no levels.
    Monotonic,
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintMode::Constant => "constant",
            ConstraintMode::Exponential => "exponential",
            ConstraintMode::Monotonic => "monotonic",
        })
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ConstraintMode::Constant),
            "exponential" => Ok(ConstraintMode::Exponential),
            "monotonic" => Ok(ConstraintMode::Monotonic),
            other => Err(Error::InvalidArgument(format!("unknown constraint mode `{other}`"))),
        }
    }
}

/// `h(zeta) = alpha/2 * |zeta|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationCost {
    pub alpha: f64,
}

impl Default for RelaxationCost {
    fn default() -> Self {
        RelaxationCost { alpha: 1.0 }
    }
}

impl RelaxationCost {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        Ok(RelaxationCost { alpha })
    }

    pub fn value(&self, zeta: &[f64]) -> f64 {
        0.5 * self.alpha * zeta.iter().map(|z| z * z).sum::<f64>()
    }

    pub fn grad(&self, zeta: &[f64]) -> Vec<f64> {
        zeta.iter().map(|z| self.alpha * z).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub mode: ConstraintMode,
    /// One level per prediction step; empty in monotonic mode.
    pub epsilon: Vec<f64>,
    /// Relaxation cost used by the resilient trainers.
    pub cost: RelaxationCost,
}

impl ConstraintSpec {
    pub fn constant(level: f64, pred_len: usize) -> Result<Self> {
        Self::from_parts(ConstraintMode::Constant, vec![level; pred_len], RelaxationCost::default())
    }

    pub fn monotonic() -> Self {
        ConstraintSpec { mode: ConstraintMode::Monotonic, epsilon: Vec::new(), cost: RelaxationCost::default() }
    }

    /// Classifies an explicit level vector: all-equal levels are constant,
    /// positive non-decreasing ones exponential; anything else is rejected.
    pub fn explicit(epsilon: Vec<f64>) -> Result<Self> {
        let mode = match epsilon.first() {
            Some(first) if epsilon.iter().all(|e| e == first) => ConstraintMode::Constant,
            _ => ConstraintMode::Exponential,
        };
        Self::from_parts(mode, epsilon, RelaxationCost::default())
    }

    pub fn with_cost(mut self, cost: RelaxationCost) -> Self {
        self.cost = cost;
        self
    }

    pub fn from_parts(mode: ConstraintMode, epsilon: Vec<f64>, cost: RelaxationCost) -> Result<Self> {
        let spec = ConstraintSpec { mode, epsilon, cost };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        RelaxationCost::new(self.cost.alpha)?;
        let eps = &self.epsilon;
        match self.mode {
            ConstraintMode::Monotonic => {
                if !eps.is_empty() {
                    return Err(Error::InvalidArgument("monotonic constraints take no levels".into()));
                }
            }
            ConstraintMode::Constant | ConstraintMode::Exponential => {
                if eps.is_empty() {
                    return Err(Error::EmptyErrors);
                }
                if eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(Error::InvalidArgument(format!("levels must be finite and >= 0: {eps:?}")));
                }
            }
        }
        match self.mode {
            ConstraintMode::Constant if eps.iter().any(|e| *e != eps[0]) => {
                Err(Error::InvalidArgument("constant levels must all be equal".into()))
            }
            ConstraintMode::Exponential
                if eps.iter().any(|e| *e <= 0.0) || eps.windows(2).any(|w| w[1] < w[0]) =>
            {
                Err(Error::InvalidArgument("exponential levels must be positive and non-decreasing".into()))
            }
            _ => Ok(()),
        }
    }

    /// Number of constraints (and multipliers) for a window of `pred_len` steps.
    pub fn num_constraints(&self, pred_len: usize) -> usize {
        match self.mode {
            ConstraintMode::Monotonic => pred_len.saturating_sub(1),
            _ => pred_len,
        }
    }

    /// Sum of levels, used to order candidates from tight to loose.
    pub fn tightness(&self) -> f64 {
        self.epsilon.iter().sum()
    }

    pub fn write_record(&self, rec: &mut Record, prefix: &str) {
        rec.push(format!("{prefix}.mode"), self.mode)
            .push_f64(format!("{prefix}.alpha"), self.cost.alpha)
            .push_list(format!("{prefix}.epsilon"), &self.epsilon);
    }

    pub fn from_record(rec: &Record, prefix: &str) -> Result<Self> {
        let mode: ConstraintMode = rec.require(&format!("{prefix}.mode"))?.parse()?;
        let alpha: f64 = rec.parse_key(&format!("{prefix}.alpha"))?;
        let epsilon = rec.list(&format!("{prefix}.epsilon"))?;
        Self::from_parts(mode, epsilon, RelaxationCost::new(alpha)?)
    }
}

impl fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            ConstraintMode::Monotonic => write!(f, "monotonic"),
            ConstraintMode::Constant => write!(f, "constant({:.6})", self.epsilon[0]),
            ConstraintMode::Exponential => write!(
                f,
                "exponential({:.6}..{:.6})",
                self.epsilon[0],
                self.epsilon[self.epsilon.len() - 1]
            ),
        }
    }
}

/// Linear-interpolation quantile between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyErrors);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::QOutOfRange(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Constant level at the `q`-quantile of the per-step errors.
pub fn constant_from_quantile(step_errors: &StepLossVector, q: f64) -> Result<ConstraintSpec> {
    let level = quantile(step_errors.as_slice(), q)?;
    ConstraintSpec::constant(level, step_errors.len())
}

pub const GRID_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

/// Six constant candidates: the quartiles of the train errors, then of the
/// validation errors.
pub fn epsilon_grid(train_errors: &StepLossVector, val_errors: &StepLossVector) -> Result<Vec<ConstraintSpec>> {
    let mut out = Vec::with_capacity(6);
    for errors in [train_errors, val_errors] {
        for q in GRID_QUANTILES {
            out.push(constant_from_quantile(errors, q)?);
        }
    }
    Ok(out)
}

/// Log-linear least-squares fit `log e_i = a + b i` (i = 1..T_p), with the
/// slope clamped at zero so the levels never decrease.
pub fn exponential_fit(step_errors: &StepLossVector) -> Result<ConstraintSpec> {
    let e = step_errors.as_slice();
    if e.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: e.len() });
    }
    if e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonPositiveErrors);
    }
    let n = e.len() as f64;
    let logs: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let x_mean = (n + 1.0) / 2.0;
    let y_mean = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in logs.iter().enumerate() {
        let dx = (k + 1) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = (sxy / sxx).max(0.0);
    let intercept = y_mean - slope * x_mean;
    let epsilon = (1..=e.len()).map(|i| (intercept + slope * i as f64).exp()).collect();
    ConstraintSpec::from_parts(ConstraintMode::Exponential, epsilon, RelaxationCost::default())
}

/// Constraint values `s`; positive entries are violations.
///
/// Level modes: `s_i = l_i - (eps_i + zeta_i)`. Monotonic: `s_i = l_i - l_{i+1} - zeta_i`.
pub fn constraint_slacks(losses: &StepLossVector, spec: &ConstraintSpec, zeta: &[f64]) -> Result<Vec<f64>> {
    let l = losses.as_slice();
    let m = spec.num_constraints(l.len());
    if zeta.len() != m {
        return Err(Error::DimMismatch(format!("{} slacks for {m} constraints", zeta.len())));
    }
    match spec.mode {
        ConstraintMode::Monotonic => Ok((0..m).map(|i| l[i] - l[i + 1] - zeta[i]).collect()),
        _ => {
            if spec.epsilon.len() != l.len() {
                return Err(Error::DimMismatch(format!(
                    "{} levels for {} prediction steps",
                    spec.epsilon.len(),
                    l.len()
                )));
            }
            Ok(l.iter().zip(&spec.epsilon).zip(zeta).map(|((li, ei), zi)| li - (ei + zi)).collect())
        }
    }
}
