//! Exact reference solutions for tiny convex loss-shaping problems.
//!
//! With a linear predictor and squared error every step loss is a convex
//! quadratic `l_i(theta) = theta' Q_i theta - 2 r_i' theta + c_i`, built here
//! from the raw windows without going through the predictor module. The
//! oracle maximizes the concave dual, whose inner minimization is an exact
//! weighted least-squares solve: first projected dual ascent with
//! diminishing steps and ergodic averaging, then projected Newton on the
//! dual to polish, then a KKT certificate.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraints::{exponential_fit, ConstraintMode, ConstraintSpec, RelaxationCost};
use crate::data::{extract_windows, SynthParams, WindowBatch, WindowConfig};
use crate::error::{Error, Result};
use crate::predictor::{init_params, Arch, Dims, PredictorParams, StepLossVector, StepWeights};
use crate::record::{fmt_list, read_text, write_text, Record};

pub const MAX_PARAMS: usize = 12;
pub const MAX_PRED_LEN: usize = 4;

/// A fixed dataset, a linear predictor and level constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexInstance {
    pub name: String,
    pub arch: Arch,
    pub context_len: usize,
    pub pred_len: usize,
    pub channels: usize,
    pub windows: WindowBatch,
    pub spec: ConstraintSpec,
    /// When present the instance is the resilient problem with this cost.
    pub cost: Option<RelaxationCost>,
}

/// `l(theta) = theta' Q theta - 2 r' theta + c`.
#[derive(Debug, Clone)]
struct StepQuadratic {
    q: DMatrix<f64>,
    r: DVector<f64>,
    c: f64,
}

impl StepQuadratic {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        (theta.transpose() * &self.q * theta)[0] - 2.0 * self.r.dot(theta) + self.c
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.q * theta - &self.r)
    }
}

impl ConvexInstance {
    pub fn dims(&self) -> Dims {
        Dims::new(self.context_len, self.pred_len, self.channels, 0)
    }

    pub fn num_params(&self) -> usize {
        self.dims().param_count(self.arch)
    }

    pub fn is_resilient(&self) -> bool {
        self.cost.is_some()
    }

    /// The same instance without relaxation.
    pub fn constrained(&self) -> ConvexInstance {
        ConvexInstance { cost: None, ..self.clone() }
    }

    /// Zero parameters in the predictor's layout, for starting a trainer.
    pub fn init_params(&self) -> Result<PredictorParams> {
        init_params(self.arch, self.dims(), 0)
    }

    pub fn check_tractable(&self) -> Result<()> {
        if self.spec.mode == ConstraintMode::Monotonic {
            return Err(Error::NotTractable("monotonic constraints are not convex".into()));
        }
        if !matches!(self.arch, Arch::DirectLinear | Arch::TiedLinear) {
            return Err(Error::NotTractable(format!("{} is not linear in its parameters", self.arch)));
        }
        if self.num_params() > MAX_PARAMS || self.pred_len > MAX_PRED_LEN {
            return Err(Error::NotTractable(format!(
                "{} parameters and {} steps exceed the bound ({MAX_PARAMS}, {MAX_PRED_LEN})",
                self.num_params(),
                self.pred_len
            )));
        }
        if self.spec.epsilon.len() != self.pred_len {
            return Err(Error::DimMismatch(format!("{} levels for {} steps", self.spec.epsilon.len(), self.pred_len)));
        }
        if self.windows.context_len() != self.context_len
            || self.windows.pred_len() != self.pred_len
            || self.windows.input_channels() != self.channels
            || self.windows.output_channels() != self.channels
        {
            return Err(Error::DimMismatch("windows do not match instance dims".into()));
        }
        if self.windows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }

    /// Feature vector `phi` with `prediction[n, i, c] = phi . theta`.
    fn features(&self, n: usize, step: usize, ch: usize) -> DVector<f64> {
        let ctx = self.windows.contexts();
        let d = self.context_len * self.channels;
        let x: Vec<f64> = (0..self.context_len)
            .flat_map(|t| (0..self.channels).map(move |c| (t, c)))
            .map(|(t, c)| ctx[[n, t, c]])
            .collect();
        let mut phi = DVector::zeros(self.num_params());
        match self.arch {
            Arch::TiedLinear => phi.rows_mut(ch * d, d).copy_from_slice(&x),
            _ => {
                let out = step * self.channels + ch;
                phi.rows_mut(out * d, d).copy_from_slice(&x);
                phi[self.pred_len * self.channels * d + out] = 1.0;
            }
        }
        phi
    }

    fn quadratics(&self) -> Vec<StepQuadratic> {
        let p = self.num_params();
        let n = self.windows.len();
        let m = (n * self.channels) as f64;
        let tgt = self.windows.targets();
        (0..self.pred_len)
            .map(|i| {
                let mut q = DMatrix::zeros(p, p);
                let mut r = DVector::zeros(p);
                let mut c = 0.0;
                for s in 0..n {
                    for ch in 0..self.channels {
                        let phi = self.features(s, i, ch);
                        let y = tgt[[s, i, ch]];
                        q += &phi * phi.transpose();
                        r += &phi * y;
                        c += y * y;
                    }
                }
                StepQuadratic { q: q / m, r: r / m, c: c / m }
            })
            .collect()
    }

    /// Per-step mean squared errors at `theta`.
    pub fn step_losses(&self, theta: &[f64]) -> Vec<f64> {
        let th = DVector::from_column_slice(theta);
        self.quadratics().iter().map(|q| q.value(&th)).collect()
    }

    /// Mean of the step losses.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let l = self.step_losses(theta);
        l.iter().sum::<f64>() / l.len() as f64
    }

    /// `l_i(theta) - eps_i`.
    pub fn constraint_values(&self, theta: &[f64]) -> Vec<f64> {
        self.step_losses(theta).iter().zip(&self.spec.epsilon).map(|(l, e)| l - e).collect()
    }

    pub fn to_record_string(&self) -> String {
        let mut rec = Record::new("fixture");
        rec.push("name", &self.name)
            .push("arch", self.arch)
            .push("context_len", self.context_len)
            .push("pred_len", self.pred_len)
            .push("channels", self.channels)
            .push("windows", self.windows.len());
        self.spec.write_record(&mut rec, "constraint");
        match self.cost {
            Some(c) => rec.push("resilient", true).push_f64("resilient.alpha", c.alpha),
            None => rec.push("resilient", false),
        };
        let (ctx, tgt) = (self.windows.contexts(), self.windows.targets());
        for n in 0..self.windows.len() {
            let c: Vec<f64> = ctx.index_axis(ndarray::Axis(0), n).iter().copied().collect();
            let t: Vec<f64> = tgt.index_axis(ndarray::Axis(0), n).iter().copied().collect();
            rec.push(format!("window.{}.context", n + 1), fmt_list(&c));
            rec.push(format!("window.{}.target", n + 1), fmt_list(&t));
        }
        rec.render(Some("lshape oracle fixture v1"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rec = Record::parse("fixture", text)?;
        let context_len: usize = rec.parse_key("context_len")?;
        let pred_len: usize = rec.parse_key("pred_len")?;
        let channels: usize = rec.parse_key("channels")?;
        let n: usize = rec.parse_key("windows")?;
        let mut ctx = Vec::with_capacity(n * context_len * channels);
        let mut tgt = Vec::with_capacity(n * pred_len * channels);
        for k in 1..=n {
            let c = rec.list(&format!("window.{k}.context"))?;
            let t = rec.list(&format!("window.{k}.target"))?;
            if c.len() != context_len * channels || t.len() != pred_len * channels {
                return Err(Error::format("fixture", format!("window {k} has the wrong length")));
            }
            ctx.extend(c);
            tgt.extend(t);
        }
        let shape_err = |e: ndarray::ShapeError| Error::format("fixture", e.to_string());
        let windows = WindowBatch::new(
            Array3::from_shape_vec((n, context_len, channels), ctx).map_err(shape_err)?,
            Array3::from_shape_vec((n, pred_len, channels), tgt).map_err(shape_err)?,
        )?;
        let cost = if rec.parse_key::<bool>("resilient")? {
            Some(RelaxationCost::new(rec.parse_key("resilient.alpha")?)?)
        } else {
            None
        };
        let inst = ConvexInstance {
            name: rec.require("name")?.to_string(),
            arch: rec.require("arch")?.parse()?,
            context_len,
            pred_len,
            channels,
            windows,
            spec: ConstraintSpec::from_record(&rec, "constraint")?,
            cost,
        };
        inst.check_tractable()?;
        Ok(inst)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        write_text(path, &self.to_record_string())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest entry of the Lagrangian gradient in `theta`.
    pub stationarity: f64,
    /// Largest positive constraint value.
    pub feasibility: f64,
    /// Largest negative multiplier magnitude.
    pub dual_feasibility: f64,
    /// Largest `|lambda_i * s_i|`.
    pub complementarity: f64,
    /// Largest `|grad h(zeta) - lambda|` (zero for the plain problem).
    pub slack_stationarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.stationarity, self.feasibility, self.dual_feasibility, self.complementarity, self.slack_stationarity]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub theta_star: Vec<f64>,
    /// Primal optimum: mean step loss, plus `h(zeta)` when resilient.
    pub objective: f64,
    pub step_losses: Vec<f64>,
    /// `l_i - eps_i - zeta_i`.
    pub slacks: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub zeta_star: Vec<f64>,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

/// Dual function machinery over precomputed quadratics.
struct Dual<'a> {
    quads: &'a [StepQuadratic],
    eps: &'a [f64],
    alpha: Option<f64>,
}

struct DualPoint {
    value: f64,
    theta: DVector<f64>,
    /// Gradient of the dual at lambda.
    grad: DVector<f64>,
    /// Step-loss gradients at theta, one column per step.
    loss_grads: DMatrix<f64>,
    hess_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// Minimizer of `sum_i w_i l_i` and the Cholesky factor of its Hessian.
fn solve_weighted(
    quads: &[StepQuadratic],
    w: &[f64],
) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let p = quads[0].r.len();
    let mut h = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for (q, wi) in quads.iter().zip(w) {
        h += &q.q * *wi;
        b += &q.r * *wi;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::NotTractable("weighted normal matrix is singular".into()))?;
    Ok((chol.solve(&b), chol))
}

impl Dual<'_> {
    fn weights(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let base = 1.0 / self.quads.len() as f64;
        lambda.map(|l| l + base)
    }

    fn eval(&self, lambda: &DVector<f64>) -> Result<DualPoint> {
        let w = self.weights(lambda);
        let p = self.quads[0].r.len();
        let (theta, chol) = solve_weighted(self.quads, w.as_slice())?;
        let losses: Vec<f64> = self.quads.iter().map(|q| q.value(&theta)).collect();
        let mut value: f64 = losses.iter().zip(w.iter()).map(|(l, wi)| l * wi).sum::<f64>()
            - lambda.iter().zip(self.eps).map(|(l, e)| l * e).sum::<f64>();
        let mut grad = DVector::from_iterator(losses.len(), losses.iter().zip(self.eps).map(|(l, e)| l - e));
        if let Some(a) = self.alpha {
            value -= lambda.norm_squared() / (2.0 * a);
            grad -= lambda / a;
        }
        let mut loss_grads = DMatrix::zeros(p, losses.len());
        for (k, q) in self.quads.iter().enumerate() {
            loss_grads.set_column(k, &q.grad(&theta));
        }
        Ok(DualPoint { value, theta, grad, loss_grads, hess_chol: chol })
    }

    /// Dual Hessian `-1/2 G' H^-1 G` (minus `I/alpha` when resilient).
    fn hessian(&self, pt: &DualPoint) -> DMatrix<f64> {
        let hinv_g = pt.hess_chol.solve(&pt.loss_grads);
        let mut m = -0.5 * pt.loss_grads.transpose() * hinv_g;
        if let Some(a) = self.alpha {
            for i in 0..m.nrows() {
                m[(i, i)] -= 1.0 / a;
            }
        }
        m
    }
}

fn project(v: DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Solves the instance and certifies every KKT residual is at most `tol`.
///
/// `iters` bounds the projected dual-ascent phase; the Newton polish adds at
/// most 200 further iterations.
pub fn solve_projected(inst: &ConvexInstance, iters: usize, tol: f64) -> Result<OracleSolution> {
    inst.check_tractable()?;
    let quads = inst.quadratics();
    let alpha = inst.cost.map(|c| c.alpha);
    let dual = Dual { quads: &quads, eps: &inst.spec.epsilon, alpha };
    let m = inst.pred_len;

    // Phase 1: projected ascent, step eta0/sqrt(k+1), with running averages.
    let mut lambda = DVector::zeros(m);
    let start = dual.eval(&lambda)?;
    let curvature = dual.hessian(&start).abs().max().max(1e-12);
    let eta0 = 1.0 / curvature;
    let mut avg = lambda.clone();
    for k in 0..iters {
        let pt = dual.eval(&lambda)?;
        lambda = project(&lambda + pt.grad * (eta0 / ((k + 1) as f64).sqrt()));
        avg += (&lambda - &avg) / (k + 2) as f64;
    }
    let mut lambda = if dual.eval(&avg)?.value >= dual.eval(&lambda)?.value { avg } else { lambda };

    // Phase 2: projected Newton on the dual.
    let mut used = iters;
    for _ in 0..200 {
        used += 1;
        let pt = dual.eval(&lambda)?;
        let free: Vec<usize> = (0..m).filter(|&i| lambda[i] > 1e-14 || pt.grad[i] > 0.0).collect();
        if free.iter().all(|&i| pt.grad[i].abs() <= 1e-15) {
            break;
        }
        let hess = dual.hessian(&pt);
        let mut dir = DVector::zeros(m);
        let sub_h = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[(free[a], free[b])]);
        let sub_g = DVector::from_iterator(free.len(), free.iter().map(|&i| pt.grad[i]));
        match sub_h.clone().cholesky() {
            Some(ch) => {
                let d = ch.solve(&sub_g);
                for (a, &i) in free.iter().enumerate() {
                    dir[i] = d[a];
                }
            }
            None => {
                for &i in &free {
                    dir[i] = pt.grad[i] * eta0;
                }
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = project(&lambda + &dir * t);
            let step = &cand - &lambda;
            let next = dual.eval(&cand)?;
            if next.value >= pt.value + 1e-4 * pt.grad.dot(&step) - 1e-15 * pt.value.abs() {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(c) if (&c - &lambda).amax() > 0.0 => lambda = c,
            _ => break,
        }
    }

    let pt = dual.eval(&lambda)?;
    let theta = pt.theta.clone();
    let losses: Vec<f64> = quads.iter().map(|q| q.value(&theta)).collect();
    let zeta: Vec<f64> = match alpha {
        Some(a) => lambda.iter().map(|l| l / a).collect(),
        None => vec![0.0; m],
    };
    let slacks: Vec<f64> = (0..m).map(|i| losses[i] - inst.spec.epsilon[i] - zeta[i]).collect();
    let w = dual.weights(&lambda);
    let stationarity = (&pt.loss_grads * &w).amax();
    let residuals = KktResiduals {
        stationarity,
        feasibility: slacks.iter().copied().fold(0.0, f64::max),
        dual_feasibility: lambda.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max),
        complementarity: slacks.iter().zip(lambda.iter()).map(|(s, l)| (s * l).abs()).fold(0.0, f64::max),
        slack_stationarity: match alpha {
            Some(a) => zeta.iter().zip(lambda.iter()).map(|(z, l)| (a * z - l).abs()).fold(0.0, f64::max),
            None => 0.0,
        },
    };
    if !(residuals.max() <= tol) {
        return Err(Error::NotConverged(format!("{residuals:?}")));
    }
    let mut objective = losses.iter().sum::<f64>() / m as f64;
    if let Some(a) = alpha {
        objective += 0.5 * a * zeta.iter().map(|z| z * z).sum::<f64>();
    }
    Ok(OracleSolution {
        theta_star: theta.iter().copied().collect(),
        objective,
        step_losses: losses,
        slacks,
        lambda_star: lambda.iter().copied().collect(),
        zeta_star: zeta,
        dual_value: pt.value,
        duality_gap: objective - pt.value,
        residuals,
        iterations: used,
    })
}

/// Exact dual function value at `lambda` (entries must be non-negative).
pub fn dual_value(inst: &ConvexInstance, lambda: &[f64]) -> Result<f64> {
    inst.check_tractable()?;
    if lambda.len() != inst.pred_len || lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidArgument("multipliers must be non-negative, one per step".into()));
    }
    let quads = inst.quadratics();
    let dual = Dual { quads: &quads, eps: &inst.spec.epsilon, alpha: inst.cost.map(|c| c.alpha) };
    Ok(dual.eval(&DVector::from_column_slice(lambda))?.value)
}

/// Primal value at `theta`: objective plus the cheapest feasible relaxation
/// cost when resilient, `None` if `theta` is infeasible for the plain problem.
fn primal_value(inst: &ConvexInstance, theta: &[f64], slack_tol: f64) -> Option<f64> {
    let g = inst.constraint_values(theta);
    let f0 = inst.objective(theta);
    match inst.cost {
        Some(c) => {
            let zeta: Vec<f64> = g.iter().map(|v| v.max(0.0)).collect();
            Some(f0 + c.value(&zeta))
        }
        None => g.iter().all(|v| *v <= slack_tol).then_some(f0),
    }
}

/// Gap between the primal value at the trainer's final parameters and the
/// dual value at its final multipliers.
///
/// An infeasible `theta_final` is moved toward the oracle solution along the
/// connecting segment (bisection) to the first feasible point. Non-negative
/// up to rounding by weak duality.
pub fn duality_gap(
    inst: &ConvexInstance,
    theta_final: &[f64],
    lambda_final: &[f64],
    oracle: &OracleSolution,
) -> Result<f64> {
    let d = dual_value(inst, lambda_final)?;
    let tol = oracle.residuals.feasibility + 1e-12;
    if let Some(p) = primal_value(inst, theta_final, tol) {
        return Ok(p - d);
    }
    let star = &oracle.theta_star;
    let Some(p_star) = primal_value(inst, star, tol) else {
        return Err(Error::InfeasibleFinal { fallback_gap: oracle.objective - d });
    };
    let mix = |t: f64| -> Vec<f64> { theta_final.iter().zip(star).map(|(a, b)| (1.0 - t) * a + t * b).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = p_star;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match primal_value(inst, &mix(mid), tol) {
            Some(p) => {
                hi = mid;
                best = p;
            }
            None => lo = mid,
        }
    }
    Ok(best - d)
}

/// Central finite-difference gradient of the weighted loss.
pub fn fd_gradient(p: &PredictorParams, batch: &WindowBatch, w: &StepWeights, h_step: f64) -> Result<Vec<f64>> {
    assert!((1e-7..=1e-3).contains(&h_step), "finite-difference step {h_step} outside [1e-7, 1e-3]");
    let mut probe = p.clone();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let orig = p.theta[k];
        probe.theta[k] = orig + h_step;
        let up = probe.weighted_loss(batch, w)?;
        probe.theta[k] = orig - h_step;
        let down = probe.weighted_loss(batch, w)?;
        probe.theta[k] = orig;
        grad.push((up - down) / (2.0 * h_step));
    }
    Ok(grad)
}

/// `|a - b|_inf / max(|a|_inf, |b|_inf)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn series_windows(seed: u64, context_len: usize, pred_len: usize, channels: usize, n: usize) -> Result<WindowBatch> {
    let length = n + context_len + pred_len - 1;
    let mut params = SynthParams::new(length, channels, 0.0, seed);
    params.period = 12.0;
    let ds = params.generate()?;
    extract_windows(&ds, &WindowConfig::new(context_len, pred_len)?)
}

/// Unconstrained least-squares step losses of an instance.
fn erm_losses(inst: &ConvexInstance) -> Result<Vec<f64>> {
    let quads = inst.quadratics();
    let (theta, _) = solve_weighted(&quads, &vec![1.0; inst.pred_len])?;
    Ok(quads.iter().map(|q| q.value(&theta)).collect())
}

/// Sets a constant level between the mean and the worst ERM step loss, so
/// the hardest steps bind while the problem stays strictly feasible.
fn bind_constant(mut inst: ConvexInstance, blend: f64) -> Result<ConvexInstance> {
    let l = erm_losses(&inst)?;
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    let worst = l.iter().copied().fold(f64::MIN, f64::max);
    inst.spec = ConstraintSpec::constant(worst - blend * (worst - mean), inst.pred_len)?;
    Ok(inst)
}

/// The committed reference instances, generated deterministically.
pub fn standard_fixtures() -> Result<Vec<ConvexInstance>> {
    let mut out = Vec::new();

    // Loose levels: the solution is plain least squares.
    let w = series_windows(11, 2, 2, 1, 16)?;
    out.push(ConvexInstance {
        name: "direct_inactive".into(),
        arch: Arch::DirectLinear,
        context_len: 2,
        pred_len: 2,
        channels: 1,
        windows: w,
        spec: ConstraintSpec::constant(1e3, 2)?,
        cost: None,
    });

    // One parameter: step 1 targets 2x, step 2 targets 2.6x plus noise.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10;
    let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut tgt = Vec::with_capacity(2 * n);
    for x in &xs {
        let noise: f64 = StandardNormal.sample(&mut rng);
        tgt.push(2.0 * x);
        tgt.push(2.6 * x + 0.4 * noise);
    }
    let windows = WindowBatch::new(
        Array3::from_shape_vec((n, 1, 1), xs).expect("shape"),
        Array3::from_shape_vec((n, 2, 1), tgt).expect("shape"),
    )?;
    let scalar = ConvexInstance {
        name: "tied_scalar".into(),
        arch: Arch::TiedLinear,
        context_len: 1,
        pred_len: 2,
        channels: 1,
        windows,
        spec: ConstraintSpec::constant(1.0, 2)?,
        cost: None,
    };
    out.push(bind_constant(scalar, 0.5)?);

    let base = |name: &str, seed: u64, tc: usize, tp: usize, ch: usize, n: usize| -> Result<ConvexInstance> {
        Ok(ConvexInstance {
            name: name.into(),
            arch: Arch::TiedLinear,
            context_len: tc,
            pred_len: tp,
            channels: ch,
            windows: series_windows(seed, tc, tp, ch, n)?,
            spec: ConstraintSpec::constant(1.0, tp)?,
            cost: None,
        })
    };
    out.push(bind_constant(base("tied_three", 21, 3, 3, 1, 40)?, 0.4)?);
    out.push(bind_constant(base("tied_two_channel", 33, 3, 4, 2, 40)?, 0.4)?);

    // Exponential shape fitted to the ERM step losses, scaled halfway
    // between the smallest feasible scale and the one ERM already meets.
    let mut expo = base("tied_exponential", 47, 2, 4, 1, 40)?;
    let erm = erm_losses(&expo)?;
    let fit = exponential_fit(&StepLossVector(erm.clone()))?;
    let scaled = |s: f64| -> Result<ConstraintSpec> {
        ConstraintSpec::from_parts(
            ConstraintMode::Exponential,
            fit.epsilon.iter().map(|e| e * s).collect(),
            RelaxationCost::default(),
        )
    };
    let s_erm = erm.iter().zip(&fit.epsilon).map(|(l, e)| l / e).fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, s_erm);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        expo.spec = scaled(mid)?;
        if solve_projected(&expo, 200, 1e-9).is_ok() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    expo.spec = scaled(0.5 * (hi + s_erm))?;
    out.push(expo);

    for (src, alpha) in [("tied_three", 1.0), ("tied_two_channel", 4.0)] {
        let mut r = out.iter().find(|i| i.name == src).expect("source fixture").clone();
        r.name = format!("{src}_resilient");
        r.cost = Some(RelaxationCost::new(alpha)?);
        r.spec = r.spec.clone().with_cost(RelaxationCost::new(alpha)?);
        out.push(r);
    }
    Ok(out)
}
