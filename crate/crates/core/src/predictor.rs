//! Small multi-step forecasters with analytic gradients.
//!
//! Every architecture maps a flattened context `x` (length `T_c * in_ch`,
//! time-major) to `T_p * out_ch` outputs, step-major. Parameters live in a
//! single flat vector `theta` with the following layouts (all matrices
//! row-major):
//!
//! | arch           | layout                                                    |
//! |----------------|-----------------------------------------------------------|
//! | `DirectLinear` | `W (T_p*out_ch x T_c*in_ch)`, `b (T_p*out_ch)`            |
//! | `Mlp1`         | `W1 (H x T_c*in_ch)`, `b1 (H)`, `W2 (T_p*out_ch x H)`, `b2` |
//! | `TiedLinear`   | `W (out_ch x T_c*in_ch)`, shared by every horizon step     |
//!
//! `TiedLinear` has no bias and couples all horizon steps through one set of
//! weights, which makes the per-step constraints genuinely compete. It is
//! the predictor used by the convex reference instances.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::record::{fmt_f64, read_text, write_text, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    DirectLinear,
    Mlp1,
    TiedLinear,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::DirectLinear => "direct_linear",
            Arch::Mlp1 => "mlp1",
            Arch::TiedLinear => "tied_linear",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct_linear" => Ok(Arch::DirectLinear),
            "mlp1" => Ok(Arch::Mlp1),
            "tied_linear" => Ok(Arch::TiedLinear),
            other => Err(Error::InvalidArgument(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub context_len: usize,
    pub pred_len: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    /// Hidden width; only used by `Mlp1`.
    pub hidden: usize,
}

impl Dims {
    /// Dims for the common case where every channel is also a target.
    pub fn new(context_len: usize, pred_len: usize, channels: usize, hidden: usize) -> Self {
        Dims { context_len, pred_len, input_channels: channels, output_channels: channels, hidden }
    }

    pub fn input_width(&self) -> usize {
        self.context_len * self.input_channels
    }

    pub fn output_width(&self) -> usize {
        self.pred_len * self.output_channels
    }

    pub fn param_count(&self, arch: Arch) -> usize {
        let (i, o, h) = (self.input_width(), self.output_width(), self.hidden);
        match arch {
            Arch::DirectLinear => o * i + o,
            Arch::Mlp1 => h * i + h + o * h + o,
            Arch::TiedLinear => self.output_channels * i,
        }
    }

    fn validate(&self, arch: Arch) -> Result<()> {
        let named = [
            ("context_len", self.context_len),
            ("pred_len", self.pred_len),
            ("input_channels", self.input_channels),
            ("output_channels", self.output_channels),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(Error::BadDims(format!("{name} must be positive")));
        }
        if arch == Arch::Mlp1 && self.hidden == 0 {
            return Err(Error::BadDims("mlp1 needs hidden >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    SquaredError,
}

/// Per-step losses `l_1..l_Tp`, each a mean over samples and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLossVector(pub Vec<f64>);

impl StepLossVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Coefficients of the time-weighted loss `sum_i w_i * l_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWeights(pub Vec<f64>);

impl StepWeights {
    pub fn uniform(pred_len: usize) -> Self {
        StepWeights(vec![1.0 / pred_len as f64; pred_len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub arch: Arch,
    pub dims: Dims,
    pub seed: u64,
    pub theta: Vec<f64>,
}

/// Zeros for the linear architectures; fan-in scaled symmetric uniform
/// for `Mlp1`.
pub fn init_params(arch: Arch, dims: Dims, seed: u64) -> Result<PredictorParams> {
    dims.validate(arch)?;
    let n = dims.param_count(arch);
    let theta = match arch {
        Arch::DirectLinear | Arch::TiedLinear => vec![0.0; n],
        Arch::Mlp1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (i, o, h) = (dims.input_width(), dims.output_width(), dims.hidden);
            let b1 = 1.0 / (i as f64).sqrt();
            let b2 = 1.0 / (h as f64).sqrt();
            let mut theta = Vec::with_capacity(n);
            theta.extend((0..h * i + h).map(|_| rng.random_range(-b1..b1)));
            theta.extend((0..o * h + o).map(|_| rng.random_range(-b2..b2)));
            theta
        }
    };
    Ok(PredictorParams { arch, dims, seed, theta })
}

struct Mlp1Views<'a> {
    w1: ArrayView2<'a, f64>,
    b1: &'a [f64],
    w2: ArrayView2<'a, f64>,
    b2: &'a [f64],
}

impl PredictorParams {
    pub fn new(arch: Arch, dims: Dims, seed: u64, theta: Vec<f64>) -> Result<Self> {
        dims.validate(arch)?;
        let expected = dims.param_count(arch);
        if theta.len() != expected {
            return Err(Error::BadDims(format!("theta has {} entries, {arch} needs {expected}", theta.len())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("theta contains non-finite values".into()));
        }
        Ok(PredictorParams { arch, dims, seed, theta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn mlp_views(&self) -> Mlp1Views<'_> {
        let (i, o, h) = (self.dims.input_width(), self.dims.output_width(), self.dims.hidden);
        let (w1, rest) = self.theta.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        Mlp1Views {
            w1: ArrayView2::from_shape((h, i), w1).expect("layout"),
            b1,
            w2: ArrayView2::from_shape((o, h), w2).expect("layout"),
            b2,
        }
    }

    fn check_contexts(&self, contexts: &ArrayView3<f64>) -> Result<()> {
        let sh = contexts.shape();
        if sh[1] != self.dims.context_len || sh[2] != self.dims.input_channels {
            return Err(Error::DimMismatch(format!(
                "contexts are ({}, {}) per sample, predictor expects ({}, {})",
                sh[1], sh[2], self.dims.context_len, self.dims.input_channels
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &WindowBatch) -> Result<()> {
        self.check_contexts(&batch.contexts())?;
        if batch.pred_len() != self.dims.pred_len || batch.output_channels() != self.dims.output_channels {
            return Err(Error::DimMismatch(format!(
                "targets are ({}, {}) per sample, predictor expects ({}, {})",
                batch.pred_len(),
                batch.output_channels(),
                self.dims.pred_len,
                self.dims.output_channels
            )));
        }
        Ok(())
    }

    fn flat_inputs(&self, contexts: &ArrayView3<f64>) -> Array2<f64> {
        let b = contexts.shape()[0];
        contexts
            .to_shape((b, self.dims.input_width()))
            .expect("contiguous contexts")
            .into_owned()
    }

    /// Forward pass on flattened inputs, returning `(outputs, hidden activations)`.
    fn forward_flat(&self, x: &Array2<f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        let d = &self.dims;
        match self.arch {
            Arch::DirectLinear => {
                let (o, i) = (d.output_width(), d.input_width());
                let w = ArrayView2::from_shape((o, i), &self.theta[..o * i]).expect("layout");
                let mut y = x.dot(&w.t());
                let bias = &self.theta[o * i..];
                for mut row in y.outer_iter_mut() {
                    row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
                }
                (y, None)
            }
            Arch::Mlp1 => {
                let v = self.mlp_views();
                let mut hid = x.dot(&v.w1.t());
                for mut row in hid.outer_iter_mut() {
                    row.iter_mut().zip(v.b1).for_each(|(z, b)| *z = (*z + b).tanh());
                }
                let mut y = hid.dot(&v.w2.t());
                for mut row in y.outer_iter_mut() {
                    row.iter_mut().zip(v.b2).for_each(|(z, b)| *z += b);
                }
                (y, Some(hid))
            }
            Arch::TiedLinear => {
                let (oc, i) = (d.output_channels, d.input_width());
                let w = ArrayView2::from_shape((oc, i), &self.theta[..]).expect("layout");
                let per_channel = x.dot(&w.t());
                let n = x.nrows();
                let y = Array2::from_shape_fn((n, d.output_width()), |(r, k)| per_channel[[r, k % oc]]);
                (y, None)
            }
        }
    }

    /// Predictions shaped `(batch, T_p, out_ch)`.
    pub fn forward(&self, contexts: ArrayView3<f64>) -> Result<Array3<f64>> {
        self.check_contexts(&contexts)?;
        let b = contexts.shape()[0];
        let (y, _) = self.forward_flat(&self.flat_inputs(&contexts));
        Ok(y.into_shape_with_order((b, self.dims.pred_len, self.dims.output_channels))
            .expect("output layout"))
    }

    fn residuals(&self, batch: &WindowBatch) -> Result<(Array2<f64>, Array2<f64>, Option<Array2<f64>>)> {
        self.check_batch(batch)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let x = self.flat_inputs(&batch.contexts());
        let (y, hidden) = self.forward_flat(&x);
        let targets = batch.targets();
        let t = targets
            .to_shape((batch.len(), self.dims.output_width()))
            .expect("contiguous targets");
        Ok((&y - &t, x, hidden))
    }

    fn per_step(&self, resid: &Array2<f64>) -> StepLossVector {
        let oc = self.dims.output_channels;
        let denom = (resid.nrows() * oc) as f64;
        let mut sums = vec![0.0; self.dims.pred_len];
        for row in resid.outer_iter() {
            for (k, r) in row.iter().enumerate() {
                sums[k / oc] += r * r;
            }
        }
        StepLossVector(sums.into_iter().map(|s| s / denom).collect())
    }

    /// Per-step mean loss over samples and channels.
    pub fn step_losses(&self, batch: &WindowBatch, kind: LossKind) -> Result<StepLossVector> {
        let LossKind::SquaredError = kind;
        let (resid, _, _) = self.residuals(batch)?;
        Ok(self.per_step(&resid))
    }

    /// Value and exact gradient of `sum_i w_i * l_i`, together with the
    /// per-step losses it was built from.
    pub fn weighted_loss_grad_with_steps(
        &self,
        batch: &WindowBatch,
        weights: &StepWeights,
    ) -> Result<(f64, Vec<f64>, StepLossVector)> {
        if weights.0.len() != self.dims.pred_len {
            return Err(Error::DimMismatch(format!(
                "{} weights for {} prediction steps",
                weights.0.len(),
                self.dims.pred_len
            )));
        }
        let (resid, x, hidden) = self.residuals(batch)?;
        let steps = self.per_step(&resid);
        let value: f64 = steps.0.iter().zip(&weights.0).map(|(l, w)| l * w).sum();

        let oc = self.dims.output_channels;
        let scale = 2.0 / (resid.nrows() * oc) as f64;
        let mut g_out = resid;
        for mut row in g_out.outer_iter_mut() {
            for (k, r) in row.iter_mut().enumerate() {
                *r *= scale * weights.0[k / oc];
            }
        }

        let grad = match self.arch {
            Arch::DirectLinear => {
                let gw = g_out.t().dot(&x);
                let gb = g_out.sum_axis(Axis(0));
                let mut g = gw.into_raw_vec_and_offset().0;
                g.extend(gb.iter());
                g
            }
            Arch::Mlp1 => {
                let v = self.mlp_views();
                let hid = hidden.expect("mlp hidden activations");
                let gw2 = g_out.t().dot(&hid);
                let gb2 = g_out.sum_axis(Axis(0));
                let mut dz = g_out.dot(&v.w2);
                dz.zip_mut_with(&hid, |d, h| *d *= 1.0 - h * h);
                let gw1 = dz.t().dot(&x);
                let gb1 = dz.sum_axis(Axis(0));
                let mut g = Vec::with_capacity(self.theta.len());
                g.extend(gw1.iter());
                g.extend(gb1.iter());
                g.extend(gw2.iter());
                g.extend(gb2.iter());
                g
            }
            Arch::TiedLinear => {
                let n = g_out.nrows();
                let mut tied = Array2::<f64>::zeros((n, oc));
                for (r, row) in g_out.outer_iter().enumerate() {
                    for (k, gv) in row.iter().enumerate() {
                        tied[[r, k % oc]] += gv;
                    }
                }
                tied.t().dot(&x).iter().cloned().collect()
            }
        };
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { location: String::new() });
        }
        Ok((value, grad, steps))
    }

    pub fn weighted_loss_grad(&self, batch: &WindowBatch, weights: &StepWeights) -> Result<(f64, Vec<f64>)> {
        self.weighted_loss_grad_with_steps(batch, weights).map(|(v, g, _)| (v, g))
    }

    /// Weighted loss value only (no gradient).
    pub fn weighted_loss(&self, batch: &WindowBatch, weights: &StepWeights) -> Result<f64> {
        let steps = self.step_losses(batch, LossKind::SquaredError)?;
        if weights.0.len() != steps.len() {
            return Err(Error::DimMismatch("weights length differs from pred_len".into()));
        }
        Ok(steps.0.iter().zip(&weights.0).map(|(l, w)| l * w).sum())
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut rec = Record::new("checkpoint");
        rec.push("arch", self.arch)
            .push("context_len", self.dims.context_len)
            .push("pred_len", self.dims.pred_len)
            .push("input_channels", self.dims.input_channels)
            .push("output_channels", self.dims.output_channels)
            .push("hidden", self.dims.hidden)
            .push("seed", self.seed)
            .push("theta_len", self.theta.len());
        let mut out = rec.render(Some("lshape checkpoint v1"));
        out.push_str("[theta]\n");
        for v in &self.theta {
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let Some((head, body)) = text.split_once("[theta]\n") else {
            return Err(Error::format("checkpoint", "missing [theta] section"));
        };
        let rec = Record::parse("checkpoint", head)?;
        let arch: Arch = rec.require("arch")?.parse()?;
        let dims = Dims {
            context_len: rec.parse_key("context_len")?,
            pred_len: rec.parse_key("pred_len")?,
            input_channels: rec.parse_key("input_channels")?,
            output_channels: rec.parse_key("output_channels")?,
            hidden: rec.parse_key("hidden")?,
        };
        let seed: u64 = rec.parse_key("seed")?;
        let declared: usize = rec.parse_key("theta_len")?;
        let theta = body
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|e| Error::format("checkpoint", format!("`{l}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if theta.len() != declared {
            return Err(Error::format("checkpoint", format!("declared {declared} values, found {}", theta.len())));
        }
        PredictorParams::new(arch, dims, seed, theta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_checkpoint_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&read_text(path)?)
    }
}
