//! Test-set metrics, run comparison, error-profile correlations and the
//! constraint-level grid search.

use std::fmt::Write as _;

use crate::constraints::{constraint_slacks, ConstraintSpec};
use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::predictor::{LossKind, PredictorParams, StepLossVector};
use crate::record::{fmt_f64, Record};
use crate::trainer::{train, TrainConfig, TrainData, TrainTrace};

/// Population standard deviation.
fn pop_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: String,
    pub fingerprint: String,
    pub num_windows: usize,
    pub per_step_mse: Vec<f64>,
    pub mean_mse: f64,
    pub window_std: f64,
    /// Diagnostics against a constraint spec, when one was attached.
    pub max_violation: Option<f64>,
    pub mean_violation: Option<f64>,
}

impl EvalReport {
    pub fn from_step_mse(per_step_mse: Vec<f64>, num_windows: usize) -> Self {
        let mean_mse = per_step_mse.iter().sum::<f64>() / per_step_mse.len().max(1) as f64;
        let window_std = pop_std(&per_step_mse);
        EvalReport {
            mode: String::new(),
            fingerprint: String::new(),
            num_windows,
            per_step_mse,
            mean_mse,
            window_std,
            max_violation: None,
            mean_violation: None,
        }
    }

    pub fn pred_len(&self) -> usize {
        self.per_step_mse.len()
    }

    pub fn with_labels(mut self, mode: impl Into<String>, fingerprint: impl Into<String>) -> Self {
        self.mode = mode.into();
        self.fingerprint = fingerprint.into();
        self
    }

    /// Attaches max and mean positive constraint violation of the per-step MSE.
    pub fn with_violation(mut self, spec: &ConstraintSpec) -> Result<Self> {
        let losses = StepLossVector(self.per_step_mse.clone());
        let zeta = vec![0.0; spec.num_constraints(losses.len())];
        let s = constraint_slacks(&losses, spec, &zeta)?;
        let pos: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
        self.max_violation = Some(pos.iter().copied().fold(0.0, f64::max));
        self.mean_violation = Some(pos.iter().sum::<f64>() / pos.len().max(1) as f64);
        Ok(self)
    }

    pub fn write_record(&self, rec: &mut Record, prefix: &str) {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        rec.push(key("mode"), &self.mode)
            .push(key("fingerprint"), &self.fingerprint)
            .push(key("num_windows"), self.num_windows)
            .push(key("pred_len"), self.pred_len())
            .push_f64(key("mean_mse"), self.mean_mse)
            .push_f64(key("window_std"), self.window_std);
        if let (Some(max), Some(mean)) = (self.max_violation, self.mean_violation) {
            rec.push_f64(key("max_violation"), max).push_f64(key("mean_violation"), mean);
        }
        rec.push_list(key("per_step_mse"), &self.per_step_mse);
    }

    pub fn from_record(rec: &Record, prefix: &str) -> Result<Self> {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        let per_step_mse = rec.list(&key("per_step_mse"))?;
        let pred_len: usize = rec.parse_key(&key("pred_len"))?;
        if per_step_mse.len() != pred_len {
            return Err(Error::format("report", format!("pred_len {pred_len} but {} step values", per_step_mse.len())));
        }
        let opt = |k: &str| -> Result<Option<f64>> {
            match rec.get(&key(k)) {
                None => Ok(None),
                Some(_) => rec.parse_key(&key(k)).map(Some),
            }
        };
        Ok(EvalReport {
            mode: rec.require(&key("mode"))?.to_string(),
            fingerprint: rec.require(&key("fingerprint"))?.to_string(),
            num_windows: rec.parse_key(&key("num_windows"))?,
            mean_mse: rec.parse_key(&key("mean_mse"))?,
            window_std: rec.parse_key(&key("window_std"))?,
            max_violation: opt("max_violation")?,
            mean_violation: opt("mean_violation")?,
            per_step_mse,
        })
    }

    pub fn to_record_string(&self) -> String {
        let mut rec = Record::new("report");
        self.write_record(&mut rec, "");
        rec.render(Some("lshape report v1"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        EvalReport::from_record(&Record::parse("report", text)?, "")
    }

    /// `step,mse` with 1-based steps.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,mse\n");
        for (i, v) in self.per_step_mse.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, fmt_f64(*v));
        }
        out
    }

    /// `mode,dataset,pred_len,mse,window_std`, header plus one row.
    pub fn summary_csv(&self, dataset: &str) -> String {
        format!(
            "mode,dataset,pred_len,mse,window_std\n{},{},{},{},{}\n",
            self.mode,
            dataset,
            self.pred_len(),
            fmt_f64(self.mean_mse),
            fmt_f64(self.window_std)
        )
    }
}

/// Parses a numeric CSV with the given header, returning its rows.
pub fn parse_numeric_csv(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format("csv", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(Error::format("csv", format!("expected header {header:?}, got {got:?}")));
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format("csv", e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|e| Error::ParseError { row: r + 2, col: c + 1, reason: e.to_string() })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-step test MSE of `params` over `test`.
pub fn evaluate(params: &PredictorParams, test: &WindowBatch) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let steps = params.step_losses(test, LossKind::SquaredError)?;
    Ok(EvalReport::from_step_mse(steps.0, test.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub baseline: EvalReport,
    pub candidate: EvalReport,
    pub mse_pct_change: f64,
    pub std_pct_change: f64,
}

impl ComparisonReport {
    pub fn to_record_string(&self) -> String {
        let mut rec = Record::new("comparison");
        rec.push_f64("mse_pct_change", self.mse_pct_change)
            .push_f64("std_pct_change", self.std_pct_change);
        self.baseline.write_record(&mut rec, "baseline");
        self.candidate.write_record(&mut rec, "candidate");
        rec.render(Some("lshape comparison v1"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rec = Record::parse("comparison", text)?;
        Ok(ComparisonReport {
            mse_pct_change: rec.parse_key("mse_pct_change")?,
            std_pct_change: rec.parse_key("std_pct_change")?,
            baseline: EvalReport::from_record(&rec, "baseline")?,
            candidate: EvalReport::from_record(&rec, "candidate")?,
        })
    }

    /// `step,mse_baseline,mse_candidate`.
    pub fn merged_csv(&self) -> String {
        let mut out = String::from("step,mse_baseline,mse_candidate\n");
        for (i, (b, c)) in self.baseline.per_step_mse.iter().zip(&self.candidate.per_step_mse).enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, fmt_f64(*b), fmt_f64(*c));
        }
        out
    }
}

pub fn compare(baseline: &EvalReport, candidate: &EvalReport) -> Result<ComparisonReport> {
    if baseline.pred_len() != candidate.pred_len() {
        return Err(Error::ReportMismatch(format!(
            "prediction lengths {} and {}",
            baseline.pred_len(),
            candidate.pred_len()
        )));
    }
    if baseline.mean_mse == 0.0 {
        return Err(Error::ZeroBaseline("mean_mse"));
    }
    if baseline.window_std == 0.0 {
        return Err(Error::ZeroBaseline("window_std"));
    }
    let pct = |b: f64, c: f64| 100.0 * (c - b) / b;
    Ok(ComparisonReport {
        mse_pct_change: pct(baseline.mean_mse, candidate.mean_mse),
        std_pct_change: pct(baseline.window_std, candidate.window_std),
        baseline: baseline.clone(),
        candidate: candidate.clone(),
    })
}

/// 1-based ranks, ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation between train and test per-step errors.
pub fn spearman_train_test(train_steps: &StepLossVector, test_steps: &StepLossVector) -> Result<f64> {
    let (a, b) = (train_steps.as_slice(), test_steps.as_slice());
    if a.len() != b.len() {
        return Err(Error::DimMismatch(format!("{} train steps vs {} test steps", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: a.len() });
    }
    pearson(&average_ranks(a), &average_ranks(b)).ok_or(Error::DegenerateRanks)
}

/// Linear interpolation of `v` onto `n` equally spaced points, endpoints aligned.
pub fn resample_linear(v: &[f64], n: usize) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: v.len() });
    }
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let last = (v.len() - 1) as f64;
    Ok((0..n)
        .map(|j| {
            let x = j as f64 * last / (n - 1) as f64;
            let k = (x.floor() as usize).min(v.len() - 2);
            let t = x - k as f64;
            v[k] + t * (v[k + 1] - v[k])
        })
        .collect())
}

/// Pearson correlation of two error profiles, resampling the shorter one.
pub fn pearson_across_lengths(errors_a: &StepLossVector, errors_b: &StepLossVector) -> Result<f64> {
    let (a, b) = (errors_a.as_slice(), errors_b.as_slice());
    for v in [a, b] {
        if v.len() < 2 {
            return Err(Error::TooShort { needed: 2, got: v.len() });
        }
    }
    let n = a.len().max(b.len());
    let ra = if a.len() == n { a.to_vec() } else { resample_linear(a, n)? };
    let rb = if b.len() == n { b.to_vec() } else { resample_linear(b, n)? };
    pearson(&ra, &rb).ok_or(Error::DegenerateVariance)
}

#[derive(Debug)]
pub struct Candidate {
    pub spec: ConstraintSpec,
    pub outcome: Result<(TrainTrace, EvalReport)>,
}

#[derive(Debug)]
pub struct GridResult {
    pub candidates: Vec<Candidate>,
    pub best: usize,
}

impl GridResult {
    pub fn best_spec(&self) -> &ConstraintSpec {
        &self.candidates[self.best].spec
    }

    pub fn best_run(&self) -> (&TrainTrace, &EvalReport) {
        let (t, r) = self.candidates[self.best].outcome.as_ref().expect("best candidate succeeded");
        (t, r)
    }
}

/// Trains one run per spec from the same `init` and seed, scoring each by
/// validation mean MSE. Ties go to the smaller total constraint level, then
/// to the earlier candidate. Failed candidates are kept with their error.
pub fn grid_search(
    train_windows: &WindowBatch,
    val_windows: &WindowBatch,
    init: &PredictorParams,
    cfg: &TrainConfig,
    specs: &[ConstraintSpec],
) -> Result<GridResult> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("grid search needs at least one candidate".into()));
    }
    let data = TrainData { train: train_windows, val: Some(val_windows) };
    let candidates: Vec<Candidate> = specs
        .iter()
        .map(|spec| {
            let outcome = train(data, init.clone(), cfg, Some(spec)).and_then(|trace| {
                let report = evaluate(&trace.final_params, val_windows)?.with_violation(spec)?;
                Ok((trace, report))
            });
            Candidate { spec: spec.clone(), outcome }
        })
        .collect();
    let best = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.outcome.as_ref().ok().map(|(_, r)| (i, r.mean_mse, c.spec.tightness())))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|(i, _, _)| i)
        .ok_or(Error::AllCandidatesFailed)?;
    Ok(GridResult { candidates, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{extract_windows, TimeSeriesDataset, WindowConfig};
    use crate::predictor::{init_params, Arch, Dims};
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> StepLossVector {
        StepLossVector(v.to_vec())
    }

    #[test]
    fn window_std_examples() {
        let r = EvalReport::from_step_mse(vec![0.0, 1.0, 2.0], 1);
        assert_eq!(r.mean_mse, 1.0);
        assert!((r.window_std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.window_std - 0.81650).abs() < 1e-5);
        assert_eq!(EvalReport::from_step_mse(vec![0.3; 5], 1).window_std, 0.0);
        assert_eq!(EvalReport::from_step_mse(vec![0.3], 1).window_std, 0.0);
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let dims = Dims::new(2, 2, 1, 0);
        let p = init_params(Arch::DirectLinear, dims, 0).unwrap();
        let b = WindowBatch::new(Array3::zeros((3, 2, 1)), Array3::zeros((3, 2, 1))).unwrap();
        let r = evaluate(&p, &b).unwrap();
        assert_eq!(r.per_step_mse, vec![0.0, 0.0]);
        assert_eq!(r.window_std, 0.0);
        let empty = b.select(&[]);
        assert!(matches!(evaluate(&p, &empty), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn compare_examples() {
        let a = EvalReport::from_step_mse(vec![1.0, 2.0], 1);
        let c = compare(&a, &a).unwrap();
        assert_eq!((c.mse_pct_change, c.std_pct_change), (0.0, 0.0));
        let mut base = a.clone();
        base.window_std = 0.02;
        let mut cand = a.clone();
        cand.window_std = 0.015;
        assert!((compare(&base, &cand).unwrap().std_pct_change + 25.0).abs() < 1e-9);
        let zero = EvalReport::from_step_mse(vec![0.0, 0.0], 1);
        assert!(matches!(compare(&zero, &a), Err(Error::ZeroBaseline(_))));
        let short = EvalReport::from_step_mse(vec![1.0], 1);
        assert!(matches!(compare(&a, &short), Err(Error::ReportMismatch(_))));
    }

    #[test]
    fn spearman_examples() {
        let inc = sv(&[0.1, 0.4, 0.5, 2.0]);
        assert!((spearman_train_test(&inc, &inc).unwrap() - 1.0).abs() < 1e-12);
        let rev = sv(&[2.0, 0.5, 0.4, 0.1]);
        assert!((spearman_train_test(&inc, &rev).unwrap() + 1.0).abs() < 1e-12);
        // 1 - 6 * sum d^2 / (n (n^2 - 1)) with d = (0, 1, 1, 0)
        let hand = 1.0 - 6.0 * 2.0 / (4.0 * 15.0);
        let r = spearman_train_test(&sv(&[1.0, 2.0, 3.0, 4.0]), &sv(&[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((r - hand).abs() < 1e-12 && (r - 0.8).abs() < 1e-12);
        assert!(matches!(spearman_train_test(&sv(&[1.0]), &sv(&[1.0])), Err(Error::TooShort { .. })));
        assert!(matches!(spearman_train_test(&sv(&[1.0, 1.0]), &sv(&[1.0, 2.0])), Err(Error::DegenerateRanks)));
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(resample_linear(&[0.0, 2.0], 3).unwrap(), vec![0.0, 1.0, 2.0]);
        let a = sv(&[0.2, 0.5, 0.3, 0.9]);
        assert!((pearson_across_lengths(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let lin = sv(&[0.0, 1.0, 2.0]);
        let aff = sv(&(0..7).map(|j| 3.0 * j as f64 / 3.0 + 5.0).collect::<Vec<_>>());
        assert!((pearson_across_lengths(&lin, &aff).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(pearson_across_lengths(&sv(&[1.0]), &lin), Err(Error::TooShort { .. })));
        assert!(matches!(pearson_across_lengths(&sv(&[1.0, 1.0]), &lin), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn report_round_trips() {
        let r = EvalReport::from_step_mse(vec![0.1, 0.25, 1.0 / 3.0], 17).with_labels("erm", "abc123");
        assert_eq!(EvalReport::parse(&r.to_record_string()).unwrap(), r);
        let spec = ConstraintSpec::constant(0.2, 3).unwrap();
        let rv = r.clone().with_violation(&spec).unwrap();
        assert!((rv.max_violation.unwrap() - (1.0 / 3.0 - 0.2)).abs() < 1e-15);
        assert_eq!(EvalReport::parse(&rv.to_record_string()).unwrap(), rv);
        let c = compare(&r, &rv).unwrap();
        assert_eq!(ComparisonReport::parse(&c.to_record_string()).unwrap(), c);
        let rows = parse_numeric_csv(&r.curve_csv(), &["step", "mse"]).unwrap();
        assert_eq!(rows.iter().map(|row| row[1]).collect::<Vec<_>>(), r.per_step_mse);
        let merged = parse_numeric_csv(&c.merged_csv(), &["step", "mse_baseline", "mse_candidate"]).unwrap();
        assert_eq!(merged.len(), 3);
        assert!(parse_numeric_csv(&r.curve_csv(), &["step", "loss"]).is_err());
    }

    fn grid_fixture() -> (WindowBatch, WindowBatch, PredictorParams) {
        let v: Vec<f64> = (0..120).map(|t| (t as f64 * 0.3).sin() + 0.1 * (t as f64 * 1.7).cos()).collect();
        let ds = TimeSeriesDataset::from_values(Array2::from_shape_vec((120, 1), v).unwrap()).unwrap();
        let w = extract_windows(&ds, &WindowConfig::new(4, 2).unwrap()).unwrap();
        let idx: Vec<usize> = (0..w.len()).collect();
        let (tr, va) = idx.split_at(80);
        (w.select(tr), w.select(va), init_params(Arch::TiedLinear, Dims::new(4, 2, 1, 0), 0).unwrap())
    }

    #[test]
    fn grid_search_selection() {
        let (tr, va, init) = grid_fixture();
        let cfg = TrainConfig { mode: crate::trainer::TrainMode::Constrained, epochs: 2, ..TrainConfig::default() };
        let one = [ConstraintSpec::constant(0.5, 2).unwrap()];
        assert_eq!(grid_search(&tr, &va, &init, &cfg, &one).unwrap().best, 0);

        // Huge levels never bind, so the runs are identical and the tie goes to the smaller level.
        let tie = [ConstraintSpec::constant(2e6, 2).unwrap(), ConstraintSpec::constant(1e6, 2).unwrap()];
        let cfg0 = TrainConfig { dual_init: 0.0, ..cfg.clone() };
        let g = grid_search(&tr, &va, &init, &cfg0, &tie).unwrap();
        let (a, b) = (&g.candidates[0].outcome, &g.candidates[1].outcome);
        assert_eq!(a.as_ref().unwrap().1.mean_mse, b.as_ref().unwrap().1.mean_mse);
        assert_eq!(g.best, 1);

        let g2 = grid_search(&tr, &va, &init, &cfg, &tie).unwrap();
        let again = grid_search(&tr, &va, &init, &cfg, &tie).unwrap();
        assert_eq!(g2.best, again.best);
        assert_eq!(g2.best_run().0, again.best_run().0);
        assert!(grid_search(&tr, &va, &init, &cfg, &[]).is_err());
    }

    #[test]
    fn grid_search_all_failed() {
        let (tr, va, init) = grid_fixture();
        let cfg = TrainConfig { mode: crate::trainer::TrainMode::Constrained, epochs: 1, ..TrainConfig::default() };
        let wrong_len = [ConstraintSpec::explicit(vec![1.0, 1.0, 1.0]).unwrap()];
        assert!(matches!(grid_search(&tr, &va, &init, &cfg, &wrong_len), Err(Error::AllCandidatesFailed)));
    }

    proptest! {
        #[test]
        fn std_and_mean_permutation_invariant(v in prop::collection::vec(0.0f64..10.0, 1..12), rot in 0usize..12) {
            let a = EvalReport::from_step_mse(v.clone(), 1);
            let mut w = v.clone();
            let k = rot % w.len();
            w.rotate_left(k);
            w.reverse();
            let b = EvalReport::from_step_mse(w, 1);
            prop_assert!((a.window_std - b.window_std).abs() <= 1e-12);
            prop_assert!((a.mean_mse - b.mean_mse).abs() <= 1e-12);
            prop_assert!(a.window_std >= 0.0);
        }

        #[test]
        fn spearman_monotone_invariant(v in prop::collection::vec(-5.0f64..5.0, 3..10), w in prop::collection::vec(-5.0f64..5.0, 3..10)) {
            let n = v.len().min(w.len());
            let (a, b) = (sv(&v[..n]), sv(&w[..n]));
            if let Ok(r) = spearman_train_test(&a, &b) {
                let ta = sv(&a.0.iter().map(|x| x.exp()).collect::<Vec<_>>());
                let tb = sv(&b.0.iter().map(|x| x * x * x + 2.0 * x).collect::<Vec<_>>());
                prop_assert!((spearman_train_test(&ta, &tb).unwrap() - r).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn pearson_self_resample(v in prop::collection::vec(-5.0f64..5.0, 2..10)) {
            let a = sv(&v);
            if let Ok(r) = pearson_across_lengths(&a, &sv(&resample_linear(&v, v.len()).unwrap())) {
                prop_assert!((r - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn evaluate_concat_is_weighted_average(split in 1usize..20, seed in 0u64..100) {
            let v: Vec<f64> = (0..40).map(|t| ((t as u64 * 7 + seed) % 13) as f64 * 0.1).collect();
            let ds = TimeSeriesDataset::from_values(Array2::from_shape_vec((40, 1), v).unwrap()).unwrap();
            let w = extract_windows(&ds, &WindowConfig::new(3, 2).unwrap()).unwrap();
            let p = init_params(Arch::Mlp1, Dims::new(3, 2, 1, 3), seed).unwrap();
            let idx: Vec<usize> = (0..w.len()).collect();
            let (i1, i2) = idx.split_at(split);
            let (a, b) = (w.select(i1), w.select(i2));
            let ra = evaluate(&p, &a).unwrap();
            let rb = evaluate(&p, &b).unwrap();
            let rc = evaluate(&p, &WindowBatch::concat(&[&a, &b]).unwrap()).unwrap();
            for k in 0..2 {
                let avg = (ra.per_step_mse[k] * a.len() as f64 + rb.per_step_mse[k] * b.len() as f64) / w.len() as f64;
                prop_assert!((rc.per_step_mse[k] - avg).abs() <= 1e-9);
            }
        }
    }
}
