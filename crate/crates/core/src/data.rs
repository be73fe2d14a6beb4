//! Time-series ingestion, chronological splitting, normalization and
//! rolling-window extraction.
//!
//! A [`TimeSeriesDataset`] is a `(time, channel)` matrix of finite values.
//! Windows are always extracted *within* one split, so no train window ever
//! touches a validation or test sample.

use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    values: Array2<f64>,
    channel_names: Vec<String>,
    timestamps: Option<Vec<String>>,
}

impl TimeSeriesDataset {
    /// Builds a dataset, rejecting empty or non-finite input.
    pub fn new(values: Array2<f64>, channel_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        if channel_names.len() != values.ncols() {
            return Err(Error::ChannelMismatch { expected: values.ncols(), got: channel_names.len() });
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row, col });
        }
        Ok(TimeSeriesDataset { values, channel_names, timestamps: None })
    }

    /// Same as [`TimeSeriesDataset::new`] with generated channel names.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|c| format!("ch{c}")).collect();
        Self::new(values, names)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                self.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    /// Contiguous time slice `[start, end)` with metadata carried along.
    fn segment(&self, start: usize, end: usize) -> TimeSeriesDataset {
        TimeSeriesDataset {
            values: self.values.slice(s![start..end, ..]).to_owned(),
            channel_names: self.channel_names.clone(),
            timestamps: self.timestamps.as_ref().map(|ts| ts[start..end].to_vec()),
        }
    }

    fn map_values(&self, values: Array2<f64>) -> TimeSeriesDataset {
        TimeSeriesDataset {
            values,
            channel_names: self.channel_names.clone(),
            timestamps: self.timestamps.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Reads a comma-separated series.
///
/// The first row is treated as a header when any of its value cells fails
/// to parse as a number. With `has_timestamp_column`, the first column is
/// kept verbatim as metadata and excluded from the values.
pub fn load_csv(path: &Path, has_timestamp_column: bool) -> Result<TimeSeriesDataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, has_timestamp_column)
}

pub fn parse_csv(text: &str, has_timestamp_column: bool) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let skip = usize::from(has_timestamp_column);
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::ParseError { row: i + 1, col: 0, reason: e.to_string() })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let looks_numeric = |cell: &str| cell.parse::<f64>().is_ok();
    let has_header = rows[0].iter().skip(skip).any(|c| !looks_numeric(c));
    let width = rows[0].len();
    if width <= skip {
        return Err(Error::ParseError { row: 1, col: width, reason: "no value columns".into() });
    }
    let channels = width - skip;
    let names: Vec<String> = if has_header {
        rows[0].iter().skip(skip).map(str::to_string).collect()
    } else {
        (0..channels).map(|c| format!("ch{c}")).collect()
    };
    let first_data = usize::from(has_header);
    let n = rows.len() - first_data;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut values = Array2::<f64>::zeros((n, channels));
    let mut stamps = Vec::with_capacity(n);
    for (t, rec) in rows[first_data..].iter().enumerate() {
        let line = t + first_data + 1;
        if rec.len() != width {
            return Err(Error::ParseError {
                row: line,
                col: rec.len().min(width) + 1,
                reason: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        if has_timestamp_column {
            stamps.push(rec[0].to_string());
        }
        for c in 0..channels {
            let cell = &rec[c + skip];
            let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                row: line,
                col: c + skip + 1,
                reason: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: line, col: c + skip + 1 });
            }
            values[[t, c]] = v;
        }
    }
    let ds = TimeSeriesDataset::new(values, names)?;
    if has_timestamp_column {
        ds.with_timestamps(stamps)
    } else {
        Ok(ds)
    }
}

/// Serializes with a header row; values use shortest round-trip formatting.
pub fn to_csv_string(ds: &TimeSeriesDataset) -> String {
    let mut out = String::new();
    let mut header: Vec<&str> = Vec::new();
    if ds.timestamps.is_some() {
        header.push("date");
    }
    header.extend(ds.channel_names.iter().map(String::as_str));
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, row) in ds.values.outer_iter().enumerate() {
        let mut cells: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(ts) = &ds.timestamps {
            cells.push(ts[t].clone());
        }
        cells.extend(row.iter().map(|v| format!("{v}")));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    crate::record::write_text(path, &to_csv_string(ds))
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7, val_fraction: 0.1, test_fraction: 0.2 }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = SplitSpec { train_fraction: train, val_fraction: val, test_fraction: test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidArgument(format!("split fractions must be positive: {fr:?}")));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Segment lengths `(train, val, test)` for a series of length `len`.
    pub fn lengths(&self, len: usize) -> (usize, usize, usize) {
        // The small offset keeps products like 0.7 * 10 from flooring to 6.
        let floor = |f: f64| ((f * len as f64) + 1e-9).floor() as usize;
        let train = floor(self.train_fraction).min(len);
        let val = floor(self.val_fraction).min(len - train);
        (train, val, len - train - val)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: TimeSeriesDataset,
    pub val: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
}

pub fn chronological_split(ds: &TimeSeriesDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let len = ds.len();
    let (ntr, nva, nte) = spec.lengths(len);
    for (segment, n) in [("train", ntr), ("val", nva), ("test", nte)] {
        if n == 0 {
            return Err(Error::SegmentTooShort { segment, length: len });
        }
    }
    Ok(Splits {
        train: ds.segment(0, ntr),
        val: ds.segment(ntr, ntr + nva),
        test: ds.segment(ntr + nva, len),
    })
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-channel z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn from_dataset(ds: &TimeSeriesDataset) -> Result<Self> {
        let n = ds.len() as f64;
        let mut mean = Vec::with_capacity(ds.num_channels());
        let mut std = Vec::with_capacity(ds.num_channels());
        for (c, col) in ds.values.axis_iter(Axis(1)).enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            if !(sd > 0.0) || sd <= 1e-12 * m.abs().max(1.0) {
                return Err(Error::DegenerateChannel(c));
            }
            mean.push(m);
            std.push(sd);
        }
        Ok(NormStats { mean, std })
    }

    fn check(&self, ds: &TimeSeriesDataset) -> Result<()> {
        if self.mean.len() != ds.num_channels() || self.std.len() != ds.num_channels() {
            return Err(Error::ChannelMismatch { expected: ds.num_channels(), got: self.mean.len() });
        }
        Ok(())
    }
}

pub fn normalize(ds: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    stats.check(ds)?;
    let mut out = ds.values.clone();
    for mut row in out.outer_iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
    }
    Ok(ds.map_values(out))
}

pub fn denormalize(ds: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    stats.check(ds)?;
    let mut out = ds.values.clone();
    for mut row in out.outer_iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * stats.std[c] + stats.mean[c];
        }
    }
    Ok(ds.map_values(out))
}

// ---------------------------------------------------------------------------
// Windows

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub context_len: usize,
    pub pred_len: usize,
    /// Restrict targets to one channel; contexts always carry every channel.
    pub target_channel: Option<usize>,
}

impl WindowConfig {
    pub fn new(context_len: usize, pred_len: usize) -> Result<Self> {
        let cfg = WindowConfig { context_len, pred_len, target_channel: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.pred_len == 0 {
            return Err(Error::InvalidArgument(format!(
                "context_len and pred_len must be >= 1 (got {}, {})",
                self.context_len, self.pred_len
            )));
        }
        Ok(())
    }

    /// Number of rolling windows in a series of length `len`.
    pub fn window_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.context_len + self.pred_len)
    }
}

/// Stacked `(context, target)` pairs: contexts `(n, T_c, in_ch)`, targets
/// `(n, T_p, out_ch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    contexts: Array3<f64>,
    targets: Array3<f64>,
}

impl WindowBatch {
    pub fn new(contexts: Array3<f64>, targets: Array3<f64>) -> Result<Self> {
        if contexts.shape()[0] != targets.shape()[0] {
            return Err(Error::DimMismatch(format!(
                "{} contexts vs {} targets",
                contexts.shape()[0],
                targets.shape()[0]
            )));
        }
        if contexts.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("window batch contains non-finite values".into()));
        }
        Ok(WindowBatch {
            contexts: contexts.as_standard_layout().into_owned(),
            targets: targets.as_standard_layout().into_owned(),
        })
    }

    pub fn len(&self) -> usize {
        self.contexts.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn context_len(&self) -> usize {
        self.contexts.shape()[1]
    }

    pub fn pred_len(&self) -> usize {
        self.targets.shape()[1]
    }

    pub fn input_channels(&self) -> usize {
        self.contexts.shape()[2]
    }

    pub fn output_channels(&self) -> usize {
        self.targets.shape()[2]
    }

    pub fn contexts(&self) -> ArrayView3<'_, f64> {
        self.contexts.view()
    }

    pub fn targets(&self) -> ArrayView3<'_, f64> {
        self.targets.view()
    }

    /// Gathers the given samples, in the given order.
    pub fn select(&self, indices: &[usize]) -> WindowBatch {
        WindowBatch {
            contexts: self.contexts.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
        }
    }

    /// Concatenates batches along the sample axis.
    pub fn concat(parts: &[&WindowBatch]) -> Result<WindowBatch> {
        if parts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let ctx: Vec<_> = parts.iter().map(|b| b.contexts.view()).collect();
        let tgt: Vec<_> = parts.iter().map(|b| b.targets.view()).collect();
        let contexts = ndarray::concatenate(Axis(0), &ctx)
            .map_err(|e| Error::DimMismatch(format!("cannot concatenate contexts: {e}")))?;
        let targets = ndarray::concatenate(Axis(0), &tgt)
            .map_err(|e| Error::DimMismatch(format!("cannot concatenate targets: {e}")))?;
        Ok(WindowBatch { contexts, targets })
    }
}

/// All stride-1 windows of a series; pair `k` has context `[k, k+T_c)` and
/// target `[k+T_c, k+T_c+T_p)`. The last target ends on the last sample.
pub fn extract_windows(ds: &TimeSeriesDataset, cfg: &WindowConfig) -> Result<WindowBatch> {
    cfg.validate()?;
    let needed = cfg.context_len + cfg.pred_len;
    if ds.len() < needed {
        return Err(Error::SeriesTooShort { length: ds.len(), needed });
    }
    let out_channels: Vec<usize> = match cfg.target_channel {
        Some(c) if c >= ds.num_channels() => {
            return Err(Error::ChannelMismatch { expected: ds.num_channels(), got: c + 1 })
        }
        Some(c) => vec![c],
        None => (0..ds.num_channels()).collect(),
    };
    let n = cfg.window_count(ds.len());
    let ch = ds.num_channels();
    let mut contexts = Array3::<f64>::zeros((n, cfg.context_len, ch));
    let mut targets = Array3::<f64>::zeros((n, cfg.pred_len, out_channels.len()));
    for k in 0..n {
        contexts
            .slice_mut(s![k, .., ..])
            .assign(&ds.values.slice(s![k..k + cfg.context_len, ..]));
        let t0 = k + cfg.context_len;
        for i in 0..cfg.pred_len {
            for (j, &c) in out_channels.iter().enumerate() {
                targets[[k, i, j]] = ds.values[[t0 + i, c]];
            }
        }
    }
    Ok(WindowBatch { contexts, targets })
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Sinusoid plus AR(1) signal with additive Gaussian noise whose standard
/// deviation grows linearly in time: `noise_sigma * (1 + noise_growth * t / length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub length: usize,
    pub channels: usize,
    pub noise_growth: f64,
    pub seed: u64,
    pub period: f64,
    pub amplitude: f64,
    pub ar_coef: f64,
    pub ar_sigma: f64,
    pub noise_sigma: f64,
}

impl SynthParams {
    pub fn new(length: usize, channels: usize, noise_growth: f64, seed: u64) -> Self {
        SynthParams {
            length,
            channels,
            noise_growth,
            seed,
            period: 24.0,
            amplitude: 1.0,
            ar_coef: 0.9,
            ar_sigma: 0.3,
            noise_sigma: 0.3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.length == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument("synthetic length and channels must be >= 1".into()));
        }
        let finite = [self.noise_growth, self.period, self.amplitude, self.ar_coef, self.ar_sigma, self.noise_sigma];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("synthetic parameters must be finite".into()));
        }
        if self.noise_growth < 0.0 || self.ar_sigma < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument("noise parameters must be non-negative".into()));
        }
        if self.ar_coef.abs() >= 1.0 {
            return Err(Error::InvalidArgument("ar_coef must lie in (-1, 1)".into()));
        }
        if self.period <= 0.0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        Ok(())
    }

    /// Noise standard deviation at time `t`.
    pub fn noise_std(&self, t: usize) -> f64 {
        self.noise_sigma * (1.0 + self.noise_growth * t as f64 / self.length as f64)
    }

    /// Returns `(clean signal, observed series)`.
    pub fn generate_components(&self) -> Result<(Array2<f64>, Array2<f64>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut signal = Array2::<f64>::zeros((self.length, self.channels));
        let stationary_sd = self.ar_sigma / (1.0 - self.ar_coef * self.ar_coef).sqrt();
        for c in 0..self.channels {
            let phase = 0.7 * c as f64;
            let z0: f64 = StandardNormal.sample(&mut rng);
            let mut ar = stationary_sd * z0;
            for t in 0..self.length {
                if t > 0 {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    ar = self.ar_coef * ar + self.ar_sigma * e;
                }
                let angle = std::f64::consts::TAU * t as f64 / self.period + phase;
                signal[[t, c]] = self.amplitude * angle.sin() + ar;
            }
        }
        let mut observed = signal.clone();
        for t in 0..self.length {
            let sd = self.noise_std(t);
            for c in 0..self.channels {
                let e: f64 = StandardNormal.sample(&mut rng);
                observed[[t, c]] += sd * e;
            }
        }
        Ok((signal, observed))
    }

    pub fn generate(&self) -> Result<TimeSeriesDataset> {
        let (_, observed) = self.generate_components()?;
        TimeSeriesDataset::from_values(observed)
    }
}

pub fn synth_heteroscedastic(
    length: usize,
    channels: usize,
    noise_growth: f64,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    SynthParams::new(length, channels, noise_growth, seed).generate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array;
    use proptest::prelude::*;

    fn ramp(len: usize, ch: usize) -> TimeSeriesDataset {
        let values = Array::from_shape_fn((len, ch), |(t, c)| (t * 10 + c) as f64);
        TimeSeriesDataset::from_values(values).unwrap()
    }

    #[test]
    fn csv_of_zeros() {
        let ds = parse_csv("0,0\n0,0\n0,0\n", false).unwrap();
        assert_eq!((ds.len(), ds.num_channels()), (3, 2));
        assert!(ds.values().iter().all(|v| *v == 0.0));
        assert_eq!(ds.channel_names(), ["ch0", "ch1"]);
    }

    #[test]
    fn csv_header_and_timestamp() {
        let ds = parse_csv("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n", true).unwrap();
        assert_eq!(ds.channel_names(), ["a", "b"]);
        assert_eq!(ds.num_channels(), 2);
        assert_eq!(ds.timestamps().unwrap(), ["2020-01-01", "2020-01-02"]);
        assert_eq!(ds.values()[[1, 1]], 4.0);
    }

    #[test]
    fn csv_nan_rejected() {
        let err = parse_csv("a,b\n1,NaN\n2,3\n", false).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { row: 2, col: 2 }), "{err:?}");
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv("a,b\n1,x\n", false), Err(Error::ParseError { row: 2, col: 2, .. })));
        assert!(matches!(parse_csv("a,b\n", false), Err(Error::EmptyDataset)));
        assert!(matches!(parse_csv("", false), Err(Error::EmptyDataset)));
        assert!(matches!(parse_csv("1,2\n3\n", false), Err(Error::ParseError { row: 2, .. })));
        let missing = Path::new("/definitely/not/here.csv");
        assert!(matches!(load_csv(missing, false), Err(Error::MissingFile(_))));
    }

    #[test]
    fn split_lengths() {
        assert_eq!(SplitSpec::default().lengths(100), (70, 10, 20));
        assert_eq!(SplitSpec::new(0.5, 0.25, 0.25).unwrap().lengths(10), (5, 2, 3));
        let err = chronological_split(&ramp(2, 1), &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, Error::SegmentTooShort { segment: "train", .. } | Error::SegmentTooShort { segment: "val", .. }));
        assert!(SplitSpec::new(0.5, 0.5, 0.1).is_err());
        assert!(SplitSpec::new(0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn split_is_contiguous_and_exhaustive() {
        let ds = ramp(100, 1);
        let sp = chronological_split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(sp.train.values()[[69, 0]], 690.0);
        assert_eq!(sp.val.values()[[0, 0]], 700.0);
        assert_eq!(sp.test.values()[[0, 0]], 800.0);
        assert_eq!(sp.train.len() + sp.val.len() + sp.test.len(), 100);
    }

    #[test]
    fn normalize_hand_case() {
        let ds = TimeSeriesDataset::from_values(Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap()).unwrap();
        let stats = NormStats { mean: vec![1.0], std: vec![1.0] };
        let out = normalize(&ds, &stats).unwrap();
        assert_eq!(out.values().as_slice().unwrap(), &[-1.0, 1.0]);
        let ident = NormStats { mean: vec![0.0], std: vec![1.0] };
        assert_eq!(normalize(&out, &ident).unwrap(), out);
        let wrong = NormStats { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
        assert!(matches!(normalize(&ds, &wrong), Err(Error::ChannelMismatch { .. })));
    }

    #[test]
    fn constant_channel_rejected() {
        let ds = TimeSeriesDataset::from_values(Array2::from_elem((5, 2), 3.0)).unwrap();
        assert!(matches!(NormStats::from_dataset(&ds), Err(Error::DegenerateChannel(0))));
    }

    #[test]
    fn train_stats_standardize_train() {
        let ds = synth_heteroscedastic(500, 3, 0.5, 11).unwrap();
        let stats = NormStats::from_dataset(&ds).unwrap();
        let z = normalize(&ds, &stats).unwrap();
        let again = NormStats::from_dataset(&z).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(again.mean[c], 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(again.std[c], 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn windows_hand_enumeration() {
        let ds = ramp(10, 1);
        let w = extract_windows(&ds, &WindowConfig::new(4, 3).unwrap()).unwrap();
        assert_eq!(w.len(), 4);
        let last = w.len() - 1;
        let t: Vec<f64> = w.targets().slice(s![last, .., 0]).to_vec();
        assert_eq!(t, vec![70.0, 80.0, 90.0]);
        let c: Vec<f64> = w.contexts().slice(s![0, .., 0]).to_vec();
        assert_eq!(c, vec![0.0, 10.0, 20.0, 30.0]);

        let exact = extract_windows(&ramp(7, 1), &WindowConfig::new(4, 3).unwrap()).unwrap();
        assert_eq!(exact.len(), 1);
        assert!(matches!(
            extract_windows(&ramp(6, 1), &WindowConfig::new(4, 3).unwrap()),
            Err(Error::SeriesTooShort { length: 6, needed: 7 })
        ));
    }

    #[test]
    fn target_channel_restricts_outputs() {
        let ds = ramp(12, 3);
        let cfg = WindowConfig { context_len: 3, pred_len: 2, target_channel: Some(2) };
        let w = extract_windows(&ds, &cfg).unwrap();
        assert_eq!(w.input_channels(), 3);
        assert_eq!(w.output_channels(), 1);
        assert_eq!(w.targets()[[0, 0, 0]], 32.0);
        let bad = WindowConfig { target_channel: Some(3), ..cfg };
        assert!(extract_windows(&ds, &bad).is_err());
    }

    #[test]
    fn windows_never_cross_split_boundaries() {
        let ds = ramp(200, 1);
        let sp = chronological_split(&ds, &SplitSpec::default()).unwrap();
        let cfg = WindowConfig::new(8, 4).unwrap();
        let max_of = |b: &WindowBatch| {
            b.contexts().iter().chain(b.targets().iter()).cloned().fold(f64::MIN, f64::max)
        };
        let min_of = |b: &WindowBatch| {
            b.contexts().iter().chain(b.targets().iter()).cloned().fold(f64::MAX, f64::min)
        };
        let (tr, va, te) = (
            extract_windows(&sp.train, &cfg).unwrap(),
            extract_windows(&sp.val, &cfg).unwrap(),
            extract_windows(&sp.test, &cfg).unwrap(),
        );
        assert!(max_of(&tr) < min_of(&va));
        assert!(max_of(&va) < min_of(&te));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_heteroscedastic(300, 2, 0.5, 42).unwrap();
        let b = synth_heteroscedastic(300, 2, 0.5, 42).unwrap();
        let c = synth_heteroscedastic(300, 2, 0.5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(synth_heteroscedastic(0, 1, 0.5, 1).is_err());
        assert!(synth_heteroscedastic(10, 1, -0.1, 1).is_err());
    }

    #[test]
    fn synth_noise_variance_grows() {
        let p = SynthParams::new(2000, 1, 0.5, 5);
        let (clean, obs) = p.generate_components().unwrap();
        let noise = &obs - &clean;
        let var = |xs: ArrayView2<f64>| {
            let n = xs.len() as f64;
            let m = xs.sum() / n;
            xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        };
        let first = var(noise.slice(s![..1000, ..]));
        let second = var(noise.slice(s![1000.., ..]));
        assert!(second > first, "{second} <= {first}");
    }

    #[test]
    fn synth_flat_oracle_error_without_growth() {
        // Knowing the clean signal exactly, the per-step error is the noise
        // variance, which is stationary when noise_growth = 0.
        let p = SynthParams::new(4000, 1, 0.0, 9);
        let (clean, obs) = p.generate_components().unwrap();
        let cfg = WindowConfig::new(8, 6).unwrap();
        let clean_w = extract_windows(&TimeSeriesDataset::from_values(clean).unwrap(), &cfg).unwrap();
        let obs_w = extract_windows(&TimeSeriesDataset::from_values(obs).unwrap(), &cfg).unwrap();
        let per_step: Vec<f64> = (0..6)
            .map(|i| {
                let d = &obs_w.targets().slice(s![.., i, 0]) - &clean_w.targets().slice(s![.., i, 0]);
                d.mapv(|x| x * x).mean().unwrap()
            })
            .collect();
        let expected = p.noise_sigma * p.noise_sigma;
        for v in per_step {
            assert!((v - expected).abs() < 0.1 * expected, "{v} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(tc in 1usize..=8, tp in 1usize..=8, len in 1usize..=32) {
            let cfg = WindowConfig::new(tc, tp).unwrap();
            let brute = (0..len).filter(|&k| k + tc + tp <= len).count();
            prop_assert_eq!(cfg.window_count(len), brute);
            let ds = ramp(len, 1);
            match extract_windows(&ds, &cfg) {
                Ok(w) => prop_assert_eq!(w.len(), brute),
                Err(_) => prop_assert_eq!(brute, 0),
            }
        }

        #[test]
        fn normalize_round_trips(vals in proptest::collection::vec(-1e3f64..1e3, 4..40)) {
            let n = vals.len();
            let ds = TimeSeriesDataset::from_values(Array2::from_shape_vec((n, 1), vals).unwrap()).unwrap();
            let Ok(stats) = NormStats::from_dataset(&ds) else { return Ok(()); };
            let back = denormalize(&normalize(&ds, &stats).unwrap(), &stats).unwrap();
            for (a, b) in ds.values().iter().zip(back.values().iter()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn csv_round_trips(vals in proptest::collection::vec(-1e6f64..1e6, 2..30)) {
            let n = vals.len() / 2;
            let ds = TimeSeriesDataset::from_values(
                Array2::from_shape_vec((n, 2), vals[..2 * n].to_vec()).unwrap()).unwrap();
            let back = parse_csv(&to_csv_string(&ds), false).unwrap();
            prop_assert_eq!(back.values(), ds.values());
        }
    }
}
