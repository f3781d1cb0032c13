//! Daily Treasury calibration: CSV ingestion, the warm-started fit chain,
//! basis rotation, smoothness, fit quality, Fisher bands and monthly sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::covariance::conditional_beta_cov;
use crate::error::{NssError, Result};
use crate::nss::{curve_eval, design_matrix, parse_tenor, MaturityGrid, NssParams};
use crate::ortho::{thin_qr_positive, OrthoFactorization, Selection};
use crate::rng::{gaussian_vector, trial_rng};
use crate::varpro::{fit_global, fit_warm, FullFit, LambdaBox, OuterConfig};

/// The fixed 9-tenor grid used for the long daily sample.
pub const REDUCED_9: [&str; 9] = ["3M", "6M", "1Y", "2Y", "3Y", "5Y", "7Y", "10Y", "30Y"];

/// Daily curves on a fixed tenor set. Yields are decimal; `None` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldHistory {
    pub dates: Vec<NaiveDate>,
    pub tenors: Vec<String>,
    pub grid: MaturityGrid,
    pub yields: Vec<Vec<Option<f64>>>,
}

impl YieldHistory {
    pub fn new(dates: Vec<NaiveDate>, tenors: Vec<String>, yields: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let grid = MaturityGrid::from_labels(&tenors)?;
        if dates.len() != yields.len() {
            return Err(NssError::DimensionMismatch {
                expected: dates.len(),
                got: yields.len(),
            });
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NssError::Domain("dates must be strictly increasing".into()));
        }
        for row in &yields {
            if row.len() != tenors.len() {
                return Err(NssError::DimensionMismatch {
                    expected: tenors.len(),
                    got: row.len(),
                });
            }
            if row.iter().flatten().any(|v| !v.is_finite()) {
                return Err(NssError::Domain("non-finite yield".into()));
            }
        }
        Ok(Self {
            dates,
            tenors,
            grid,
            yields,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Keeps dates in `[from, to]` (either end open when `None`).
    pub fn window(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| from.is_none_or(|f| self.dates[i] >= f) && to.is_none_or(|t| self.dates[i] <= t))
            .collect();
        Self {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            tenors: self.tenors.clone(),
            grid: self.grid.clone(),
            yields: keep.iter().map(|&i| self.yields[i].clone()).collect(),
        }
    }

    /// The curve on day `i` when no tenor is missing.
    pub fn complete_row(&self, i: usize) -> Option<DVector<f64>> {
        let row: Option<Vec<f64>> = self.yields[i].iter().copied().collect();
        row.map(DVector::from_vec)
    }

    /// Writes the history back out in percent, missing as `ND`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["date".to_string()];
        head.extend(self.tenors.iter().cloned());
        out.write_record(&head)?;
        for (d, row) in self.dates.iter().zip(&self.yields) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|v| match v {
                Some(v) => format!("{}", v * 100.0),
                None => "ND".to_string(),
            }));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> NssError {
    NssError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads `date,<tenor>,...` with yields in percent and `ND` or empty for
/// missing values. `tenors = None` keeps every tenor column in the file.
/// Selected columns are ordered by maturity.
pub fn load_history(path: &Path, tenors: Option<&[String]>, complete_case: bool) -> Result<YieldHistory> {
    read_history(BufReader::new(File::open(path)?), tenors, complete_case)
}

pub fn read_history<R: BufRead>(reader: R, tenors: Option<&[String]>, complete_case: bool) -> Result<YieldHistory> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let date_col = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("date"))
        .ok_or_else(|| parse_err(1, "missing 'date' column"))?;
    let mut available: Vec<(usize, String, f64)> = Vec::new();
    for (c, h) in header.iter().enumerate() {
        if c != date_col {
            available.push((c, h.to_ascii_uppercase(), parse_tenor(h)?));
        }
    }
    let mut cols = match tenors {
        None => available,
        Some(sel) => sel
            .iter()
            .map(|t| {
                let key = t.trim().to_ascii_uppercase();
                available
                    .iter()
                    .find(|a| a.1 == key)
                    .cloned()
                    .ok_or_else(|| NssError::Config(format!("tenor '{t}' not in input header")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    cols.sort_by(|a, b| a.2.total_cmp(&b.2));
    if cols.windows(2).any(|w| w[0].2 == w[1].2) {
        return Err(NssError::Config("duplicate tenor selection".into()));
    }

    let mut dates = Vec::new();
    let mut yields = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&rec[date_col], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date '{}': {e}", &rec[date_col])))?;
        let mut row = Vec::with_capacity(cols.len());
        for (c, label, _) in &cols {
            let f = &rec[*c];
            if f.is_empty() || f.eq_ignore_ascii_case("ND") {
                row.push(None);
                continue;
            }
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(line, format!("bad value '{f}' in column {label}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column {label}")));
            }
            row.push(Some(v / 100.0));
        }
        if complete_case && row.iter().any(Option::is_none) {
            continue;
        }
        if dates.last().is_some_and(|d| *d >= date) {
            return Err(parse_err(line, format!("date {date} is not after the previous row")));
        }
        dates.push(date);
        yields.push(row);
    }
    YieldHistory::new(dates, cols.into_iter().map(|c| c.1).collect(), yields)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyConfig {
    pub bx: LambdaBox,
    pub outer: OuterConfig,
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub lambda: [f64; 2],
    pub gamma: [f64; 4],
    pub beta: [f64; 4],
    pub p: usize,
    pub r44: f64,
    pub kappa: f64,
    pub rmse: f64,
    pub sigma_hat: f64,
    /// `||Psi(lambda_prev)^T Psi(lambda_t) - I||_F`; `None` on the first day.
    pub basis_rotation: Option<f64>,
    pub fisher_std_beta: [f64; 4],
    pub fisher_std_gamma: [f64; 4],
    pub residuals: Vec<f64>,
    /// Four-column reduced objective at `lambda`.
    pub objective: f64,
    /// Reduced objective at the previous day's `lambda` (warm-started days).
    pub objective_at_prev: Option<f64>,
    pub used_warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFailure {
    pub date: NaiveDate,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRun {
    pub records: Vec<DailyRecord>,
    pub failures: Vec<DayFailure>,
}

/// Fits each day, warm-starting from the last successful day. Failed or
/// incomplete days are recorded and skipped; the rotation is measured against
/// the last successful day.
pub fn run_daily(history: &YieldHistory, cfg: &DailyConfig) -> Result<DailyRun> {
    if history.is_empty() {
        return Err(NssError::Argument("history has no days".into()));
    }
    let grid = &history.grid;
    let m = grid.len();
    if m <= 4 {
        return Err(NssError::Argument(format!("need more than 4 tenors, got {m}")));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut prev: Option<([f64; 2], OrthoFactorization)> = None;
    for (i, &date) in history.dates.iter().enumerate() {
        let Some(y) = history.complete_row(i) else {
            failures.push(DayFailure {
                date,
                message: "missing tenor".into(),
            });
            continue;
        };
        match fit_day(grid, &y, prev.as_ref(), cfg) {
            Ok((fit, fact, objective_at_prev)) => {
                let rec = make_record(
                    date,
                    grid,
                    &y,
                    &fit,
                    &fact,
                    prev.as_ref().map(|p| &p.1),
                    objective_at_prev,
                )?;
                prev = Some((fit.lambda, fact));
                records.push(rec);
            }
            Err(e) => failures.push(DayFailure {
                date,
                message: e.to_string(),
            }),
        }
    }
    Ok(DailyRun { records, failures })
}

fn fit_day(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    prev: Option<&([f64; 2], OrthoFactorization)>,
    cfg: &DailyConfig,
) -> Result<(FullFit, OrthoFactorization, Option<f64>)> {
    let (fit, at_prev) = match prev {
        None => (fit_global(grid, y, &cfg.bx, &cfg.selection, &cfg.outer)?, None),
        Some((l, _)) => (
            fit_warm(grid, y, *l, &cfg.bx, &cfg.selection, &cfg.outer)?,
            Some(crate::varpro::reduced_objective(*l, grid, y)?),
        ),
    };
    let fact = thin_qr_positive(&design_matrix(grid, fit.lambda)?)?;
    Ok((fit, fact, at_prev))
}

fn make_record(
    date: NaiveDate,
    grid: &MaturityGrid,
    y: &DVector<f64>,
    fit: &FullFit,
    fact: &OrthoFactorization,
    prev_fact: Option<&OrthoFactorization>,
    objective_at_prev: Option<f64>,
) -> Result<DailyRecord> {
    let m = grid.len();
    let inner = &fit.inner;
    let residuals: Vec<f64> = y.iter().zip(&inner.fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma_hat = (rss / (m - 4) as f64).sqrt();
    let phi = design_matrix(grid, fit.lambda)?;
    let fisher_std_beta = match conditional_beta_cov(&phi, sigma_hat) {
        Ok(c) => c.std(),
        Err(_) => [f64::INFINITY; 4],
    };
    let basis_rotation = prev_fact.map(|pf| {
        let mut c = pf.psi.tr_mul(&fact.psi);
        for j in 0..4 {
            c[(j, j)] -= 1.0;
        }
        c.norm()
    });
    Ok(DailyRecord {
        date,
        lambda: fit.lambda,
        gamma: inner.gamma,
        beta: inner.beta,
        p: inner.p,
        r44: inner.r44,
        kappa: inner.kappa,
        rmse: (rss / m as f64).sqrt(),
        sigma_hat,
        basis_rotation,
        fisher_std_beta,
        fisher_std_gamma: [sigma_hat; 4],
        residuals,
        objective: fit.objective,
        objective_at_prev,
        used_warm_start: fit.used_warm_start,
    })
}

/// `max_t ||Phi_t beta_t - Psi_t gamma_t|| / ||y_t||` over the records, with
/// `Psi_t gamma_t` restricted to the selected `p` columns.
pub fn reparametrization_gap(history: &YieldHistory, records: &[DailyRecord]) -> Result<f64> {
    let index: HashMap<NaiveDate, usize> = history.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut worst: f64 = 0.0;
    for r in records {
        let i = *index
            .get(&r.date)
            .ok_or_else(|| NssError::Argument(format!("record date {} not in history", r.date)))?;
        let y = history
            .complete_row(i)
            .ok_or_else(|| NssError::Argument(format!("record date {} has missing tenors", r.date)))?;
        let phi_beta = curve_eval(
            &NssParams {
                beta: r.beta,
                lambda: r.lambda,
            },
            &history.grid,
        )?;
        let fact = thin_qr_positive(&design_matrix(&history.grid, r.lambda)?)?;
        let g = DVector::from_column_slice(&r.gamma);
        let psi_gamma = fact.psi.columns(0, r.p) * g.rows(0, r.p);
        worst = worst.max((phi_beta - psi_gamma).norm() / y.norm());
    }
    Ok(worst)
}

/// Linear-interpolation sample quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `rho = std(diff) / std(level)` and `J = q95(|diff|) / IQR(level)`;
/// `None` when the denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub rho: Option<f64>,
    pub j: Option<f64>,
}

pub fn smoothness(series: &[f64]) -> Result<Smoothness> {
    if series.len() < 3 {
        return Err(NssError::Argument(format!(
            "smoothness needs at least 3 points, got {}",
            series.len()
        )));
    }
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let sd = sample_std(series);
    let iqr = quantile(series, 0.75) - quantile(series, 0.25);
    let abs_diff: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
    Ok(Smoothness {
        rho: (sd > 0.0).then(|| sample_std(&diff) / sd),
        j: (iqr > 0.0).then(|| quantile(&abs_diff, 0.95) / iqr),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub beta: [Smoothness; 4],
    pub gamma: [Smoothness; 4],
    /// `rho(beta_j) / rho(gamma_j)`.
    pub rho_ratio: [Option<f64>; 4],
    /// `J(beta_j) / J(gamma_j)`.
    pub j_ratio: [Option<f64>; 4],
}

fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    }
}

pub fn smoothness_report(records: &[DailyRecord]) -> Result<SmoothnessReport> {
    let series = |f: &dyn Fn(&DailyRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let mut beta = [Smoothness { rho: None, j: None }; 4];
    let mut gamma = beta;
    for j in 0..4 {
        beta[j] = smoothness(&series(&|r| r.beta[j]))?;
        gamma[j] = smoothness(&series(&|r| r.gamma[j]))?;
    }
    Ok(SmoothnessReport {
        rho_ratio: std::array::from_fn(|j| ratio(beta[j].rho, gamma[j].rho)),
        j_ratio: std::array::from_fn(|j| ratio(beta[j].j, gamma[j].j)),
        beta,
        gamma,
    })
}

/// RMSE statistics for a subset of days (decimal units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub n: usize,
    pub median_rmse: f64,
    pub p95_rmse: f64,
    pub max_rmse: f64,
    pub median_max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityQuality {
    pub tenor: String,
    pub mean_bias: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub overall: QualityRow,
    /// Days with `R_44` at or below its median.
    pub low_r44: QualityRow,
    pub high_r44: QualityRow,
    pub median_r44: f64,
    pub per_maturity: Vec<MaturityQuality>,
    /// Spearman rank correlation of daily RMSE against `R_44`.
    pub spearman_rmse_r44: f64,
}

fn quality_row(records: &[&DailyRecord]) -> QualityRow {
    let rmse: Vec<f64> = records.iter().map(|r| r.rmse).collect();
    let max_err: Vec<f64> = records
        .iter()
        .map(|r| r.residuals.iter().fold(0.0_f64, |a, e| a.max(e.abs())))
        .collect();
    QualityRow {
        n: records.len(),
        median_rmse: quantile(&rmse, 0.5),
        p95_rmse: quantile(&rmse, 0.95),
        max_rmse: rmse.iter().copied().fold(f64::NAN, f64::max),
        median_max_abs_err: quantile(&max_err, 0.5),
    }
}

/// Average ranks, ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn fit_quality(records: &[DailyRecord], tenors: &[String]) -> Result<FitQuality> {
    if records.is_empty() {
        return Err(NssError::Argument("no records".into()));
    }
    let m = tenors.len();
    if records.iter().any(|r| r.residuals.len() != m) {
        return Err(NssError::DimensionMismatch {
            expected: m,
            got: records
                .iter()
                .find(|r| r.residuals.len() != m)
                .map_or(0, |r| r.residuals.len()),
        });
    }
    let all: Vec<&DailyRecord> = records.iter().collect();
    let r44: Vec<f64> = records.iter().map(|r| r.r44.abs()).collect();
    let median_r44 = quantile(&r44, 0.5);
    let (low, high): (Vec<&DailyRecord>, Vec<&DailyRecord>) = all.iter().partition(|r| r.r44.abs() <= median_r44);
    let n = records.len() as f64;
    let per_maturity = (0..m)
        .map(|i| {
            let bias = records.iter().map(|r| r.residuals[i]).sum::<f64>() / n;
            let ms = records.iter().map(|r| r.residuals[i].powi(2)).sum::<f64>() / n;
            MaturityQuality {
                tenor: tenors[i].clone(),
                mean_bias: bias,
                rmse: ms.sqrt(),
            }
        })
        .collect();
    let rmse: Vec<f64> = records.iter().map(|r| r.rmse).collect();
    Ok(FitQuality {
        overall: quality_row(&all),
        low_r44: quality_row(&low),
        high_r44: quality_row(&high),
        median_r44,
        per_maturity,
        spearman_rmse_r44: spearman(&rmse, &r44),
    })
}

const BP: f64 = 1e4;

impl FitQuality {
    /// Summary in basis points: one row per subset, then one per maturity.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "group",
            "n",
            "median_rmse_bp",
            "p95_rmse_bp",
            "max_rmse_bp",
            "median_max_abs_err_bp",
            "mean_bias_bp",
        ])?;
        for (name, q) in [
            ("all", &self.overall),
            ("r44_low", &self.low_r44),
            ("r44_high", &self.high_r44),
        ] {
            out.write_record([
                name.to_string(),
                q.n.to_string(),
                (q.median_rmse * BP).to_string(),
                (q.p95_rmse * BP).to_string(),
                (q.max_rmse * BP).to_string(),
                (q.median_max_abs_err * BP).to_string(),
                String::new(),
            ])?;
        }
        for t in &self.per_maturity {
            out.write_record([
                t.tenor.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                (t.mean_bias * BP).to_string(),
            ])?;
            out.write_record([
                format!("{}_rmse", t.tenor),
                String::new(),
                (t.rmse * BP).to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        out.write_record([
            "spearman_rmse_r44".to_string(),
            String::new(),
            self.spearman_rmse_r44.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        out.flush()?;
        Ok(())
    }
}

impl SmoothnessReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "component",
            "rho_beta",
            "rho_gamma",
            "rho_ratio",
            "j_beta",
            "j_gamma",
            "j_ratio",
        ])?;
        for j in 0..4 {
            out.write_record([
                (j + 1).to_string(),
                opt(self.beta[j].rho),
                opt(self.gamma[j].rho),
                opt(self.rho_ratio[j]),
                opt(self.beta[j].j),
                opt(self.gamma[j].j),
                opt(self.j_ratio[j]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-day conditional standard errors and their sample-mean ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherBands {
    pub dates: Vec<NaiveDate>,
    pub std_beta: Vec<[f64; 4]>,
    pub std_gamma: Vec<[f64; 4]>,
    /// `mean(std beta_j) / mean(std gamma_j)`.
    pub ratio: [f64; 4],
}

pub fn fisher_bands(records: &[DailyRecord]) -> FisherBands {
    let n = records.len() as f64;
    let ratio = std::array::from_fn(|j| {
        let b = records.iter().map(|r| r.fisher_std_beta[j]).sum::<f64>() / n;
        let g = records.iter().map(|r| r.fisher_std_gamma[j]).sum::<f64>() / n;
        b / g
    });
    FisherBands {
        dates: records.iter().map(|r| r.date).collect(),
        std_beta: records.iter().map(|r| r.fisher_std_beta).collect(),
        std_gamma: records.iter().map(|r| r.fisher_std_gamma).collect(),
        ratio,
    }
}

impl FisherBands {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["date".to_string()];
        head.extend((1..=4).map(|j| format!("std_beta{j}")));
        head.extend((1..=4).map(|j| format!("std_gamma{j}")));
        out.write_record(&head)?;
        for (k, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(self.std_beta[k].iter().map(|v| v.to_string()));
            rec.extend(self.std_gamma[k].iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Last available record of each calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub dates: Vec<NaiveDate>,
    pub beta: Vec<[f64; 4]>,
    pub gamma: Vec<[f64; 4]>,
}

pub fn monthly_downsample(records: &[DailyRecord]) -> MonthlySeries {
    let mut out = MonthlySeries {
        dates: Vec::new(),
        beta: Vec::new(),
        gamma: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        let last_in_month = records
            .get(i + 1)
            .is_none_or(|n| (n.date.year(), n.date.month()) != (r.date.year(), r.date.month()));
        if last_in_month {
            out.dates.push(r.date);
            out.beta.push(r.beta);
            out.gamma.push(r.gamma);
        }
    }
    out
}

/// Writes `date,c1..c4` rows.
pub fn write_matrix_csv<W: Write>(dates: &[NaiveDate], rows: &[[f64; 4]], prefix: &str, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["date".to_string()];
    head.extend((1..=4).map(|j| format!("{prefix}{j}")));
    out.write_record(&head)?;
    for (d, r) in dates.iter().zip(rows) {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(r.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Everything derived from a daily run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreasuryReport {
    pub fit_quality: FitQuality,
    pub smoothness: SmoothnessReport,
    pub bands: FisherBands,
    pub monthly: MonthlySeries,
    pub rotation_p95: f64,
    pub min_r44: f64,
}

pub fn summarize(run: &DailyRun, tenors: &[String]) -> Result<TreasuryReport> {
    let recs = &run.records;
    let rot: Vec<f64> = recs.iter().filter_map(|r| r.basis_rotation).collect();
    Ok(TreasuryReport {
        fit_quality: fit_quality(recs, tenors)?,
        smoothness: smoothness_report(recs)?,
        bands: fisher_bands(recs),
        monthly: monthly_downsample(recs),
        rotation_p95: quantile(&rot, 0.95),
        min_r44: recs.iter().map(|r| r.r44.abs()).fold(f64::INFINITY, f64::min),
    })
}

/// Writes `records.jsonl`, `fit_quality.csv`, `smoothness.csv`, `bands.csv`,
/// `monthly_beta.csv` and `monthly_gamma.csv` into `dir`.
pub fn write_outputs(dir: &Path, run: &DailyRun, report: &TreasuryReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut jl = BufWriter::new(File::create(dir.join("records.jsonl"))?);
    for r in &run.records {
        serde_json::to_writer(&mut jl, r).map_err(|e| NssError::Io(e.to_string()))?;
        jl.write_all(b"\n")?;
    }
    jl.flush()?;
    report
        .fit_quality
        .write_csv(File::create(dir.join("fit_quality.csv"))?)?;
    report.smoothness.write_csv(File::create(dir.join("smoothness.csv"))?)?;
    report.bands.write_csv(File::create(dir.join("bands.csv"))?)?;
    let m = &report.monthly;
    write_matrix_csv(&m.dates, &m.beta, "beta", File::create(dir.join("monthly_beta.csv"))?)?;
    write_matrix_csv(
        &m.dates,
        &m.gamma,
        "gamma",
        File::create(dir.join("monthly_gamma.csv"))?,
    )?;
    Ok(())
}

/// Business days (Mon-Fri) starting at `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Seeded synthetic history: `beta` and `ln lambda` follow mean-reverting
/// walks around the baseline `beta = (0.04, -0.02, 0.015, 0.008)` and
/// `lambda = (0.6, 0.2)`, and each curve gets `N(0, sigma^2)` noise.
pub fn simulate_history(tenors: &[&str], days: usize, sigma: f64, seed: u64) -> Result<YieldHistory> {
    let labels: Vec<String> = tenors.iter().map(|s| s.to_string()).collect();
    let grid = MaturityGrid::from_labels(&labels)?;
    let mut rng = trial_rng(seed, 0);
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let beta_bar = [0.04, -0.02, 0.015, 0.008];
    let mut beta = beta_bar;
    let centre = [0.6_f64.ln(), 0.2_f64.ln()];
    let mut z = centre;
    let mut yields = Vec::with_capacity(days);
    for _ in 0..days {
        let db = gaussian_vector(&mut rng, 4, 2e-4);
        for j in 0..4 {
            beta[j] += 0.05 * (beta_bar[j] - beta[j]) + db[j];
        }
        let dz = gaussian_vector(&mut rng, 2, 0.01);
        for j in 0..2 {
            z[j] += 0.05 * (centre[j] - z[j]) + dz[j];
        }
        let p = NssParams::new(beta, [z[0].exp(), z[1].exp()])?;
        let y = curve_eval(&p, &grid)? + gaussian_vector(&mut rng, grid.len(), sigma);
        yields.push(y.iter().map(|v| Some(*v)).collect());
    }
    YieldHistory::new(business_days(start, days), labels, yields)
}
