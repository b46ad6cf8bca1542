//! Empirical mechanics on intraday return panels: ingest, winsorize,
//! aggregate to coarser frequencies, rolling-window estimation and scaling
//! to a common holding period.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_all, sample_moments, EstimateReport, EstimatorKind, ReturnsMatrix};
use crate::frontier::{to_merton, FrontierParams, MertonConstants};
use crate::inference::{confidence_intervals, ConfidenceIntervals};
use crate::parallel::{map_indexed, Execution};

/// Time-ordered log returns, one row per timestamp and one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub timestamps: Vec<NaiveDateTime>,
    pub data: DMatrix<f64>,
    pub asset_labels: Vec<String>,
    pub frequency_minutes: u32,
    /// Rows discarded at ingest because of missing cells.
    pub dropped_rows: usize,
}

impl ReturnPanel {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        data: DMatrix<f64>,
        asset_labels: Vec<String>,
        frequency_minutes: u32,
    ) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if data.nrows() != timestamps.len() || data.ncols() != asset_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "panel data is {}x{} for {} timestamps and {} assets",
                data.nrows(),
                data.ncols(),
                timestamps.len(),
                asset_labels.len()
            )));
        }
        if let Some(i) = (1..timestamps.len()).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            // header is line 1
            return Err(Error::NonMonotoneTimestamps { line: i + 2 });
        }
        if frequency_minutes == 0 {
            return Err(Error::InvalidInput("frequency must be positive".into()));
        }
        Ok(ReturnPanel {
            timestamps,
            data,
            asset_labels,
            frequency_minutes,
            dropped_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn p(&self) -> usize {
        self.asset_labels.len()
    }

    /// Row ranges `[start, end)` of consecutive calendar days.
    pub fn day_ranges(&self) -> Vec<(NaiveDate, usize, usize)> {
        let mut out: Vec<(NaiveDate, usize, usize)> = Vec::new();
        for (i, ts) in self.timestamps.iter().enumerate() {
            let d = ts.date();
            match out.last_mut() {
                Some(last) if last.0 == d => last.2 = i + 1,
                _ => out.push((d, i, i + 1)),
            }
        }
        out
    }

    fn select_rows(&self, rows: &[usize]) -> ReturnPanel {
        ReturnPanel {
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            data: self.data.select_rows(rows),
            asset_labels: self.asset_labels.clone(),
            frequency_minutes: self.frequency_minutes,
            dropped_rows: self.dropped_rows,
        }
    }
}

const TIMESTAMP_FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_local()))
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Most common positive gap between consecutive rows of the same day.
fn infer_frequency(timestamps: &[NaiveDateTime]) -> u32 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in timestamps.windows(2) {
        if w[0].date() == w[1].date() {
            let gap = (w[1] - w[0]).num_minutes();
            if gap > 0 {
                *counts.entry(gap).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(gap, count)| (count, std::cmp::Reverse(gap)))
        .map_or(1, |(gap, _)| gap as u32)
}

/// Read `timestamp,ASSET1,ASSET2,...` with ISO-8601 timestamps. Rows with an
/// empty cell are dropped and counted.
pub fn ingest_csv<R: Read>(source: R) -> Result<ReturnPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("timestamp") {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be named 'timestamp'".into(),
        });
    }
    let labels: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no asset columns".into(),
        });
    }
    let p = labels.len();

    let mut timestamps = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut dropped = 0usize;
    let mut prev: Option<NaiveDateTime> = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line() as usize);
        let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("invalid timestamp '{}'", &record[0]),
        })?;
        if prev.is_some_and(|t| ts <= t) {
            return Err(Error::NonMonotoneTimestamps { line });
        }
        prev = Some(ts);
        let cells: Vec<&str> = record.iter().skip(1).map(str::trim).collect();
        if cells.iter().any(|c| c.is_empty()) {
            dropped += 1;
            continue;
        }
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column '{}': '{cell}' is not a number", labels[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column '{}': non-finite value", labels[j]),
                });
            }
            values.push(v);
        }
        timestamps.push(ts);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyPanel);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }
    let data = DMatrix::from_row_slice(timestamps.len(), p, &values);
    let frequency = infer_frequency(&timestamps);
    let mut panel = ReturnPanel::new(timestamps, data, labels, frequency)?;
    panel.dropped_rows = dropped;
    Ok(panel)
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    ingest_csv(std::fs::File::open(path)?)
}

/// Order statistic `x_(ceil(q N))` of sorted data (inverse empirical CDF).
fn ecdf_quantile(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn check_quantiles((low, high): (f64, f64)) -> Result<()> {
    if !(0.0 <= low && low < high && high <= 1.0) {
        return Err(Error::InvalidRange(format!("winsor quantiles ({low}, {high})")));
    }
    Ok(())
}

fn winsorize_columns(data: &mut DMatrix<f64>, (low, high): (f64, f64)) {
    for mut col in data.column_iter_mut() {
        let mut sorted: Vec<f64> = col.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (ecdf_quantile(&sorted, low), ecdf_quantile(&sorted, high));
        for v in col.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Clamp each asset to its empirical `low` and `high` quantiles, computed
/// as order statistics so that the operation is idempotent.
pub fn winsorize(panel: &ReturnPanel, quantiles: (f64, f64)) -> Result<ReturnPanel> {
    check_quantiles(quantiles)?;
    let mut out = panel.clone();
    winsorize_columns(&mut out.data, quantiles);
    Ok(out)
}

/// What to do with a day whose row count is not a multiple of the block size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaggedPolicy {
    /// Drop the trailing partial block with a warning.
    #[default]
    Drop,
    Error,
}

pub fn aggregate_frequency(panel: &ReturnPanel, k: usize) -> Result<ReturnPanel> {
    aggregate_frequency_with(panel, k, RaggedPolicy::Drop)
}

/// Sum consecutive blocks of `k` rows within each day. The aggregated row
/// carries the timestamp of the last row in its block.
pub fn aggregate_frequency_with(panel: &ReturnPanel, k: usize, policy: RaggedPolicy) -> Result<ReturnPanel> {
    if k == 0 {
        return Err(Error::InvalidInput("block size must be at least 1".into()));
    }
    if k == 1 {
        return Ok(panel.clone());
    }
    let p = panel.p();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (day, start, end) in panel.day_ranges() {
        let rows = end - start;
        if rows % k != 0 {
            match policy {
                RaggedPolicy::Error => {
                    return Err(Error::RaggedDay {
                        day: day.to_string(),
                        rows,
                        k,
                    })
                }
                RaggedPolicy::Drop => log::warn!("{day}: {rows} rows, dropping trailing {} for k = {k}", rows % k),
            }
        }
        for b in 0..rows / k {
            let lo = start + b * k;
            let block = panel.data.rows(lo, k);
            for j in 0..p {
                values.push(block.column(j).sum());
            }
            timestamps.push(panel.timestamps[lo + k - 1]);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let data = DMatrix::from_row_slice(timestamps.len(), p, &values);
    let mut out = ReturnPanel::new(timestamps, data, panel.asset_labels.clone(), panel.frequency_minutes * k as u32)?;
    out.dropped_rows = panel.dropped_rows;
    Ok(out)
}

/// Remove the first row of every day, for panels that carry the overnight
/// return there.
pub fn drop_first_of_day(panel: &ReturnPanel) -> Result<ReturnPanel> {
    let rows: Vec<usize> = panel.day_ranges().into_iter().flat_map(|(_, s, e)| s + 1..e).collect();
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok(panel.select_rows(&rows))
}

/// Rescale a report from `from_minutes` to `to_minutes` holding periods.
/// With `f = to/from`, `R` and `V` scale by `f` (i.i.d. additive returns)
/// while the slope is kept as is; the Merton constants are rebuilt from the
/// scaled parameters.
pub fn scale_to_horizon(report: &EstimateReport, from_minutes: u32, to_minutes: u32) -> Result<EstimateReport> {
    if from_minutes == 0 || to_minutes == 0 {
        return Err(Error::InvalidInput("horizons must be positive".into()));
    }
    if from_minutes == to_minutes {
        return Ok(report.clone());
    }
    let f = to_minutes as f64 / from_minutes as f64;
    let fp = report.params;
    let params = FrontierParams {
        r_gmv: f * fp.r_gmv,
        v_gmv: f * fp.v_gmv,
        slope: fp.slope,
    };
    let merton = if fp.slope < 0.0 {
        // unbiased estimates may carry a negative slope
        let v = params.v_gmv;
        MertonConstants {
            a: fp.slope + params.r_gmv * params.r_gmv / v,
            b: params.r_gmv / v,
            c_m: 1.0 / v,
        }
    } else {
        to_merton(params)?
    };
    Ok(EstimateReport {
        params,
        merton,
        ..*report
    })
}

/// Interval scaling matching [`scale_to_horizon`].
fn scale_intervals(ci: ConfidenceIntervals, f: f64) -> ConfidenceIntervals {
    let s = |(lo, hi): (f64, f64)| (f * lo, f * hi);
    ConfidenceIntervals {
        level: ci.level,
        ci_r: s(ci.ci_r),
        ci_v: s(ci.ci_v),
        ci_s: ci.ci_s,
    }
}

fn default_p() -> usize {
    200
}

fn default_n() -> usize {
    375
}

fn default_frequency() -> u32 {
    1
}

fn default_horizon() -> u32 {
    60
}

fn default_winsor() -> Option<(f64, f64)> {
    Some((0.01, 0.99))
}

fn default_kinds() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Sample,
        EstimatorKind::Consistent,
        EstimatorKind::Ebe,
        EstimatorKind::Rte,
    ]
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollingConfig {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Observations per advance; `None` moves the window one trading day.
    #[serde(default)]
    pub step: Option<usize>,
    /// Sampling frequency the panel is aggregated to before estimation.
    #[serde(default = "default_frequency")]
    pub frequency_minutes: u32,
    #[serde(default = "default_horizon")]
    pub target_horizon_minutes: u32,
    /// `None` disables winsorization.
    #[serde(default = "default_winsor")]
    pub winsor_quantiles: Option<(f64, f64)>,
    /// Explicit asset selection; the first `p` columns when absent.
    #[serde(default)]
    pub assets: Option<Vec<String>>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<EstimatorKind>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub drop_first_of_day: bool,
    #[serde(default)]
    pub ragged: RaggedPolicy,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig {
            p: default_p(),
            n: default_n(),
            step: None,
            frequency_minutes: default_frequency(),
            target_horizon_minutes: default_horizon(),
            winsor_quantiles: default_winsor(),
            assets: None,
            kinds: default_kinds(),
            level: default_level(),
            drop_first_of_day: false,
            ragged: RaggedPolicy::Drop,
        }
    }
}

pub const SUPPORTED_FREQUENCIES: [u32; 5] = [1, 5, 10, 30, 60];

impl RollingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidInput("p must be positive".into()));
        }
        if self.n <= self.p {
            return Err(Error::InvalidInput(format!("n = {} must exceed p = {}", self.n, self.p)));
        }
        if !SUPPORTED_FREQUENCIES.contains(&self.frequency_minutes) {
            return Err(Error::InvalidInput(format!(
                "frequency_minutes = {} must be one of {SUPPORTED_FREQUENCIES:?}",
                self.frequency_minutes
            )));
        }
        if self.target_horizon_minutes == 0 {
            return Err(Error::InvalidInput("target_horizon_minutes must be positive".into()));
        }
        if let Some(q) = self.winsor_quantiles {
            check_quantiles(q)?;
        }
        if self.step == Some(0) {
            return Err(Error::InvalidInput("step must be positive".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidInput("no estimator kinds".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidLevel(self.level));
        }
        if let Some(a) = &self.assets {
            if a.len() != self.p {
                return Err(Error::InvalidInput(format!("{} assets listed for p = {}", a.len(), self.p)));
            }
        }
        Ok(())
    }
}

/// One estimator on one window, after scaling to the target horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingRow {
    pub date: NaiveDate,
    pub window: usize,
    pub report: EstimateReport,
    /// Intervals for the consistent estimator only.
    pub ci: Option<ConfidenceIntervals>,
    pub frequency_minutes: u32,
}

fn asset_columns(panel: &ReturnPanel, cfg: &RollingConfig) -> Result<Vec<usize>> {
    match &cfg.assets {
        Some(labels) => labels
            .iter()
            .map(|l| {
                panel
                    .asset_labels
                    .iter()
                    .position(|a| a == l)
                    .ok_or_else(|| Error::InvalidInput(format!("asset '{l}' not in panel")))
            })
            .collect(),
        None if panel.p() >= cfg.p => Ok((0..cfg.p).collect()),
        None => Err(Error::DimensionMismatch(format!(
            "panel has {} assets, configuration needs p = {}",
            panel.p(),
            cfg.p
        ))),
    }
}

/// Window end positions (exclusive): each day end with at least `n` rows
/// before it, or every `step` rows when a step is configured.
fn window_ends(panel: &ReturnPanel, n: usize, step: Option<usize>) -> Vec<usize> {
    match step {
        Some(s) => (n..=panel.len()).step_by(s).collect(),
        None => panel
            .day_ranges()
            .into_iter()
            .map(|(_, _, end)| end)
            .filter(|&end| end >= n)
            .collect(),
    }
}

/// Estimate every configured kind on each rolling window of `panel`, which
/// must already be at the estimation frequency. Windows whose covariance is
/// singular are skipped with a warning.
pub fn rolling_estimate(panel: &ReturnPanel, cfg: &RollingConfig, exec: Execution) -> Result<Vec<RollingRow>> {
    cfg.validate()?;
    if panel.len() < cfg.n {
        return Err(Error::WindowTooShort {
            available: panel.len(),
            required: cfg.n,
        });
    }
    let cols = asset_columns(panel, cfg)?;
    let ends = window_ends(panel, cfg.n, cfg.step);
    let per_window: Vec<Result<Vec<RollingRow>>> = map_indexed(exec, ends.len(), |w| {
        let end = ends[w];
        let start = end - cfg.n;
        let mut slab = DMatrix::from_fn(cfg.n, cols.len(), |t, j| panel.data[(start + t, cols[j])]);
        if let Some(q) = cfg.winsor_quantiles {
            winsorize_columns(&mut slab, q);
        }
        let date = panel.timestamps[end - 1].date();
        let m = sample_moments(&ReturnsMatrix::new(slab.transpose())?)?;
        let f = cfg.target_horizon_minutes as f64 / panel.frequency_minutes as f64;
        let mut rows = Vec::new();
        for res in estimate_all(&m, &cfg.kinds) {
            let report = match res {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("window {w} ({date}): skipped, {e}");
                    continue;
                }
            };
            let ci = if report.kind == EstimatorKind::Consistent {
                Some(scale_intervals(confidence_intervals(&report, cfg.level)?, f))
            } else {
                None
            };
            rows.push(RollingRow {
                date,
                window: w,
                report: scale_to_horizon(&report, panel.frequency_minutes, cfg.target_horizon_minutes)?,
                ci,
                frequency_minutes: panel.frequency_minutes,
            });
        }
        Ok(rows)
    });
    let mut out = Vec::new();
    for rows in per_window {
        out.extend(rows?);
    }
    Ok(out)
}

/// Full pipeline: optional overnight removal, aggregation to the configured
/// frequency, then rolling estimation.
pub fn run_pipeline(panel: &ReturnPanel, cfg: &RollingConfig, exec: Execution) -> Result<Vec<RollingRow>> {
    cfg.validate()?;
    let base = if cfg.drop_first_of_day {
        drop_first_of_day(panel)?
    } else {
        panel.clone()
    };
    if cfg.frequency_minutes % base.frequency_minutes != 0 {
        return Err(Error::InvalidInput(format!(
            "panel frequency {} min does not divide target frequency {} min",
            base.frequency_minutes, cfg.frequency_minutes
        )));
    }
    let k = (cfg.frequency_minutes / base.frequency_minutes) as usize;
    let agg = aggregate_frequency_with(&base, k, cfg.ragged)?;
    rolling_estimate(&agg, cfg, exec)
}

/// `date,estimator,r_gmv,v_gmv,slope,ci_r_lo,ci_r_hi,ci_v_lo,ci_v_hi,ci_s_lo,ci_s_hi,p,n,frequency_minutes`
pub fn write_rolling<W: std::io::Write>(w: W, rows: &[RollingRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "date",
        "estimator",
        "r_gmv",
        "v_gmv",
        "slope",
        "ci_r_lo",
        "ci_r_hi",
        "ci_v_lo",
        "ci_v_hi",
        "ci_s_lo",
        "ci_s_hi",
        "p",
        "n",
        "frequency_minutes",
    ])?;
    for row in rows {
        let fp = row.report.params;
        let ci: [String; 6] = match row.ci {
            Some(ci) => [ci.ci_r.0, ci.ci_r.1, ci.ci_v.0, ci.ci_v.1, ci.ci_s.0, ci.ci_s.1].map(|x| x.to_string()),
            None => Default::default(),
        };
        let mut rec = vec![
            row.date.to_string(),
            row.report.kind.to_string(),
            fp.r_gmv.to_string(),
            fp.v_gmv.to_string(),
            fp.slope.to_string(),
        ];
        rec.extend(ci);
        rec.extend([row.report.p.to_string(), row.report.n.to_string(), row.frequency_minutes.to_string()]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{consistent_frontier, sample_frontier};
    use crate::frontier::{frontier_params, CovarianceMatrix, MeanVector};
    use crate::rng::{stream, Domain};
    use crate::stats;
    use chrono::{Duration, NaiveTime};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// `days` trading days of `per_day` one-minute rows starting 09:46.
    fn synthetic_panel(days: usize, per_day: usize, p: usize, seed: u64, mean: f64, sd: f64) -> ReturnPanel {
        let mut rng = stream(seed, Domain::Panel, 0);
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let mut ts = Vec::new();
        for d in 0..days {
            let day = start + Duration::days(d as i64);
            for i in 0..per_day {
                ts.push(day.and_time(NaiveTime::from_hms_opt(9, 46, 0).unwrap()) + Duration::minutes(i as i64));
            }
        }
        let data = DMatrix::from_fn(ts.len(), p, |_, _| mean + sd * rng.sample::<f64, _>(StandardNormal));
        let labels = (0..p).map(|j| format!("S{j}")).collect();
        ReturnPanel::new(ts, data, labels, 1).unwrap()
    }

    #[test]
    fn ingest_well_formed() {
        let csv = "timestamp,A,B\n2024-01-02T09:46:00,0.1,0.2\n2024-01-02T09:47:00,-0.1,0.0\n2024-01-02T09:48:00,0.3,0.1\n";
        let panel = ingest_csv(csv.as_bytes()).unwrap();
        assert_eq!(panel.len(), 3);
        assert_eq!(panel.asset_labels, vec!["A", "B"]);
        assert_eq!(panel.frequency_minutes, 1);
        assert_eq!(panel.data[(2, 0)], 0.3);
    }

    #[test]
    fn ingest_drops_missing_rows() {
        let csv = "timestamp,A,B\n2024-01-02 09:46:00,0.1,0.2\n2024-01-02 09:47:00,,0.0\n2024-01-02 09:48:00,0.3,0.1\n";
        let panel = ingest_csv(csv.as_bytes()).unwrap();
        assert_eq!(panel.len(), 2);
        assert_eq!(panel.dropped_rows, 1);
    }

    #[test]
    fn ingest_errors() {
        let non_mono = "timestamp,A\n2024-01-02T09:47:00,0.1\n2024-01-02T09:46:00,0.2\n";
        assert_eq!(ingest_csv(non_mono.as_bytes()), Err(Error::NonMonotoneTimestamps { line: 3 }));
        let bad_num = "timestamp,A\n2024-01-02T09:46:00,0.1\n2024-01-02T09:47:00,abc\n";
        assert!(matches!(ingest_csv(bad_num.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let ragged = "timestamp,A,B\n2024-01-02T09:46:00,0.1\n";
        assert!(matches!(ingest_csv(ragged.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert_eq!(ingest_csv("timestamp,A\n".as_bytes()), Err(Error::EmptyPanel));
        assert!(matches!(ingest_csv("time,A\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn winsorize_identity_and_clamp() {
        let panel = synthetic_panel(1, 1000, 2, 1, 0.0, 1.0);
        assert_eq!(winsorize(&panel, (0.0, 1.0)).unwrap(), panel);

        let mut spiked = panel.clone();
        spiked.data[(500, 0)] = 1e6;
        let w = winsorize(&spiked, (0.01, 0.99)).unwrap();
        let mut sorted: Vec<f64> = spiked.data.column(0).iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(w.data[(500, 0)], sorted[989]);
        let col: Vec<f64> = w.data.column(0).iter().copied().collect();
        assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), sorted[989]);
        assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), sorted[9]);
        assert!(winsorize(&panel, (0.6, 0.4)).is_err());
    }

    #[test]
    fn aggregation_examples() {
        let panel = synthetic_panel(2, 375, 3, 2, 0.0, 1.0);
        assert_eq!(aggregate_frequency(&panel, 1).unwrap(), panel);
        let agg = aggregate_frequency(&panel, 5).unwrap();
        assert_eq!(agg.len(), 150);
        assert_eq!(agg.frequency_minutes, 5);
        for ((_, s0, e0), (_, s1, e1)) in panel.day_ranges().into_iter().zip(agg.day_ranges()) {
            for j in 0..3 {
                let raw: f64 = panel.data.view((s0, j), (e0 - s0, 1)).sum();
                let sum: f64 = agg.data.view((s1, j), (e1 - s1, 1)).sum();
                assert!((raw - sum).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ragged_days() {
        let panel = synthetic_panel(2, 12, 2, 3, 0.0, 1.0);
        assert_eq!(
            aggregate_frequency_with(&panel, 5, RaggedPolicy::Error),
            Err(Error::RaggedDay { day: "2024-01-01".into(), rows: 12, k: 5 })
        );
        let dropped = aggregate_frequency(&panel, 5).unwrap();
        assert_eq!(dropped.len(), 4);
    }

    #[test]
    fn overnight_rows_can_be_dropped() {
        let panel = synthetic_panel(3, 10, 2, 3, 0.0, 1.0);
        let d = drop_first_of_day(&panel).unwrap();
        assert_eq!(d.len(), 27);
        assert!(d.timestamps.iter().all(|t| t.time() != NaiveTime::from_hms_opt(9, 46, 0).unwrap()));
    }

    fn some_report() -> EstimateReport {
        let mu = MeanVector::from_slice(&[0.01, 0.03, -0.02]).unwrap();
        let sigma = CovarianceMatrix::diagonal(&[1.0, 2.0, 0.5]).unwrap();
        let m = crate::estimators::population_moments(&mu, &sigma, 30).unwrap();
        sample_frontier(&m).unwrap()
    }

    #[test]
    fn horizon_scaling_examples() {
        let r = some_report();
        assert_eq!(scale_to_horizon(&r, 5, 5).unwrap(), r);
        let s = scale_to_horizon(&r, 5, 60).unwrap();
        assert!((s.params.v_gmv / r.params.v_gmv - 12.0).abs() < 1e-12);
        assert!((s.params.r_gmv / r.params.r_gmv - 12.0).abs() < 1e-12);
        assert_eq!(s.params.slope, r.params.slope);
        let back = scale_to_horizon(&s, 60, 5).unwrap();
        assert!((back.params.r_gmv - r.params.r_gmv).abs() < 1e-15);
        assert!((back.params.v_gmv / r.params.v_gmv - 1.0).abs() < 1e-14);
        assert!(scale_to_horizon(&r, 0, 5).is_err());
    }

    // Oracle: vertex of the aggregated population (f mu, f Sigma).
    #[test]
    fn horizon_scaling_matches_aggregated_vertex() {
        let mu = [0.01, 0.03, -0.02];
        let sig = [1.0, 2.0, 0.5];
        let f = 12.0;
        let base = frontier_params(&MeanVector::from_slice(&mu).unwrap(), &CovarianceMatrix::diagonal(&sig).unwrap()).unwrap();
        let scaled_pop = frontier_params(
            &MeanVector::from_slice(&mu.map(|m| f * m)).unwrap(),
            &CovarianceMatrix::diagonal(&sig.map(|s| f * s)).unwrap(),
        )
        .unwrap();
        let r = some_report();
        assert_eq!(r.params, base);
        let s = scale_to_horizon(&r, 5, 60).unwrap();
        assert!((s.params.r_gmv - scaled_pop.r_gmv).abs() < 1e-14);
        assert!((s.params.v_gmv / scaled_pop.v_gmv - 1.0).abs() < 1e-12);
        let fm = crate::frontier::from_merton(s.merton).unwrap();
        assert!((fm.slope - s.params.slope).abs() < 1e-12);
        assert!((fm.v_gmv / s.params.v_gmv - 1.0).abs() < 1e-12);
        assert!((fm.r_gmv - s.params.r_gmv).abs() < 1e-12);
    }

    fn small_cfg(p: usize, n: usize) -> RollingConfig {
        RollingConfig {
            p,
            n,
            kinds: vec![EstimatorKind::Sample, EstimatorKind::Consistent],
            target_horizon_minutes: 1,
            ..RollingConfig::default()
        }
    }

    #[test]
    fn one_window_per_kind() {
        let panel = synthetic_panel(1, 50, 10, 4, 0.0, 1.0);
        let rows = rolling_estimate(&panel, &small_cfg(5, 50), Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].ci.is_none() && rows[1].ci.is_some());
        let err = rolling_estimate(&panel, &small_cfg(5, 60), Execution::Sequential);
        assert_eq!(err, Err(Error::WindowTooShort { available: 50, required: 60 }));
    }

    #[test]
    fn window_count_by_days() {
        // 30 rows per day, n = 50 needs two days: 10 - 2 + 1 windows
        let panel = synthetic_panel(10, 30, 20, 5, 0.0, 1.0);
        let rows = rolling_estimate(&panel, &small_cfg(20, 50), Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 2 * 9);
    }

    #[test]
    fn sample_variance_below_consistent_everywhere() {
        let panel = synthetic_panel(8, 40, 10, 6, 0.001, 0.01);
        let rows = rolling_estimate(&panel, &small_cfg(10, 40), Execution::Sequential).unwrap();
        for pair in rows.chunks(2) {
            assert!(pair[0].report.params.v_gmv < pair[1].report.params.v_gmv);
        }
    }

    #[test]
    fn winsor_bounds_01_equal_no_winsorization() {
        let panel = synthetic_panel(4, 30, 5, 7, 0.0, 1.0);
        let mut a = small_cfg(5, 40);
        a.winsor_quantiles = Some((0.0, 1.0));
        let mut b = a.clone();
        b.winsor_quantiles = None;
        assert_eq!(
            rolling_estimate(&panel, &a, Execution::Sequential).unwrap(),
            rolling_estimate(&panel, &b, Execution::Sequential).unwrap()
        );
    }

    #[test]
    fn consistent_intervals_cover_truth() {
        // i.i.d. N(0, 1) with identical means: V_GMV = 1/p for one-minute data
        let (p, n) = (10, 60);
        let panel = synthetic_panel(200, 60, p, 8, 0.0, 1.0);
        let mut cfg = small_cfg(p, n);
        cfg.kinds = vec![EstimatorKind::Consistent];
        cfg.winsor_quantiles = None;
        let rows = rolling_estimate(&panel, &cfg, Execution::Parallel).unwrap();
        let covered = rows
            .iter()
            .filter(|r| {
                let ci = r.ci.unwrap();
                ci.ci_v.0 <= 0.1 && 0.1 <= ci.ci_v.1
            })
            .count();
        assert!(covered as f64 >= 0.9 * rows.len() as f64, "{covered} of {}", rows.len());
    }

    #[test]
    fn disjoint_windows_are_uncorrelated() {
        let (p, n) = (5, 20);
        let panel = synthetic_panel(1, 20 * 1000, p, 9, 0.0, 1.0);
        let mut cfg = small_cfg(p, n);
        cfg.kinds = vec![EstimatorKind::Consistent];
        cfg.step = Some(n);
        cfg.winsor_quantiles = None;
        let rows = rolling_estimate(&panel, &cfg, Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 1000);
        let v: Vec<f64> = rows.iter().map(|r| r.report.params.v_gmv).collect();
        let rho = stats::correlation(&v[..v.len() - 1], &v[1..]);
        assert!(rho.abs() < 0.1, "lag-1 autocorrelation {rho}");
        // the same values through the library estimator
        let first = ReturnsMatrix::new(panel.data.rows(0, n).transpose()).unwrap();
        let direct = consistent_frontier(&sample_moments(&first).unwrap()).unwrap();
        assert_eq!(direct.params.v_gmv, v[0]);
    }

    #[test]
    fn pipeline_aggregates_before_rolling() {
        let panel = synthetic_panel(6, 50, 4, 10, 0.0, 1.0);
        let cfg = RollingConfig {
            p: 4,
            n: 20,
            frequency_minutes: 5,
            kinds: vec![EstimatorKind::Consistent],
            ..RollingConfig::default()
        };
        let rows = run_pipeline(&panel, &cfg, Execution::Sequential).unwrap();
        // 10 rows per day at 5 minutes, windows end on days 2..=6
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.frequency_minutes == 5));
        let mut buf = Vec::new();
        write_rolling(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("date,estimator,r_gmv,v_gmv,slope,ci_r_lo"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn config_requires_known_fields() {
        let err = serde_json::from_str::<RollingConfig>(r#"{"p": 5, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let cfg: RollingConfig = serde_json::from_str(r#"{"p": 5, "n": 20, "winsor_quantiles": null}"#).unwrap();
        assert_eq!(cfg.winsor_quantiles, None);
        assert!(RollingConfig { frequency_minutes: 7, ..RollingConfig::default() }.validate().is_err());
    }

    fn panel_strategy() -> impl Strategy<Value = ReturnPanel> {
        (1usize..4, prop::collection::vec(-1.0f64..1.0, 60 * 2)).prop_map(|(days, v)| {
            let per_day = 60 / days / 4 * 4; // divisible by 4 and 2
            let rows = per_day * days;
            let mut p = synthetic_panel(days, per_day, 2, 0, 0.0, 1.0);
            p.data = DMatrix::from_row_slice(rows, 2, &v[..rows * 2]);
            p
        })
    }

    proptest! {
        #[test]
        fn winsorize_is_idempotent(panel in panel_strategy(), lo in 0.0f64..0.3, hi in 0.7f64..1.0) {
            let once = winsorize(&panel, (lo, hi)).unwrap();
            prop_assert_eq!(winsorize(&once, (lo, hi)).unwrap(), once);
        }

        #[test]
        fn aggregation_composes(panel in panel_strategy()) {
            let twice = aggregate_frequency(&aggregate_frequency(&panel, 2).unwrap(), 2).unwrap();
            let once = aggregate_frequency(&panel, 4).unwrap();
            prop_assert_eq!(twice.timestamps, once.timestamps.clone());
            prop_assert!((twice.data - once.data).amax() < 1e-12);
        }

        #[test]
        fn horizon_round_trip(from in 1u32..120, to in 1u32..120) {
            let r = some_report();
            let there = scale_to_horizon(&r, from, to).unwrap();
            prop_assert_eq!(there.params.slope, r.params.slope);
            let back = scale_to_horizon(&there, to, from).unwrap();
            prop_assert!((back.params.v_gmv / r.params.v_gmv - 1.0).abs() < 1e-12);
            prop_assert!((back.params.r_gmv - r.params.r_gmv).abs() < 1e-14);
        }
    }
}
