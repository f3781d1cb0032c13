//! Exact segmentation of a multivariate series into piecewise-constant means.
//!
//! Segment costs come from prefix sums of the centred data; the dynamic
//! program is the usual `F_k(j) = min_i F_{k-1}(i) + c(i, j)` recursion, so the
//! solution for every `k <= k_max` is globally optimal.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::par::Execution;

/// Optimal segmentations for `k = 0..=k_max` changepoints. A breakpoint `s`
/// starts a new segment at row `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub k_max: usize,
    /// Within-segment SSE at each `k`.
    pub cost_path: Vec<f64>,
    pub breakpoints_by_k: Vec<Vec<usize>>,
}

impl Segmentation {
    pub fn breakpoints(&self, k: usize) -> &[usize] {
        &self.breakpoints_by_k[k]
    }

    pub fn sse(&self, k: usize) -> f64 {
        self.cost_path[k]
    }

    /// `k,sse,log_sse,breakpoints` with breakpoints as `;`-joined labels.
    pub fn write_csv<W: Write>(&self, labels: Option<&[String]>, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "sse", "log_sse", "breakpoints"])?;
        for k in 0..=self.k_max {
            let bps: Vec<String> = self.breakpoints_by_k[k]
                .iter()
                .map(|&b| labels.map_or_else(|| b.to_string(), |l| l[b].clone()))
                .collect();
            out.write_record([
                k.to_string(),
                self.cost_path[k].to_string(),
                self.cost_path[k].ln().to_string(),
                bps.join(";"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `c[i][j - i - 1]`: SSE of rows `i..j` about their mean.
struct CostTable {
    rows: Vec<Vec<f64>>,
}

impl CostTable {
    fn new(x: &DMatrix<f64>, exec: Execution) -> Self {
        let (t, d) = x.shape();
        let mut centred = x.clone();
        for c in 0..d {
            let mean = centred.column(c).mean();
            centred.column_mut(c).add_scalar_mut(-mean);
        }
        // s[i] = sum of rows < i, q[i] = sum of squared norms of rows < i.
        let mut s = vec![vec![0.0; d]; t + 1];
        let mut q = vec![0.0; t + 1];
        for i in 0..t {
            q[i + 1] = q[i];
            for c in 0..d {
                let v = centred[(i, c)];
                s[i + 1][c] = s[i][c] + v;
                q[i + 1] += v * v;
            }
        }
        let rows = exec.map_range(t, |i| {
            (i + 1..=t)
                .map(|j| {
                    if j == i + 1 {
                        return 0.0;
                    }
                    let n = (j - i) as f64;
                    let lin: f64 = (0..d).map(|c| (s[j][c] - s[i][c]).powi(2)).sum();
                    (q[j] - q[i] - lin / n).max(0.0)
                })
                .collect()
        });
        Self { rows }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j - i - 1]
    }
}

fn check_input(x: &DMatrix<f64>, k_max: usize) -> Result<()> {
    let t = x.nrows();
    if t < 2 || x.ncols() == 0 {
        return Err(NssError::Argument(format!(
            "need at least 2 rows and 1 column, got {}x{}",
            t,
            x.ncols()
        )));
    }
    if k_max >= t {
        return Err(NssError::Argument(format!("k_max = {k_max} must be < T = {t}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NssError::Domain("series contains non-finite values".into()));
    }
    Ok(())
}

/// Optimal breakpoints and SSE for every `k <= k_max`. Ties go to the earliest
/// breakpoint.
pub fn dp_segment(x: &DMatrix<f64>, k_max: usize, exec: Execution) -> Result<Segmentation> {
    check_input(x, k_max)?;
    let t = x.nrows();
    let cost = CostTable::new(x, exec);
    // f[k][j]: best cost of rows 0..j with k changepoints; arg[k][j] the start
    // of the last segment.
    let mut f = vec![vec![f64::INFINITY; t + 1]; k_max + 1];
    let mut arg = vec![vec![0usize; t + 1]; k_max + 1];
    for j in 1..=t {
        f[0][j] = cost.get(0, j);
    }
    for k in 1..=k_max {
        for j in k + 1..=t {
            let mut best = f64::INFINITY;
            let mut at = k;
            for i in k..j {
                let v = f[k - 1][i] + cost.get(i, j);
                if v < best {
                    best = v;
                    at = i;
                }
            }
            f[k][j] = best;
            arg[k][j] = at;
        }
    }
    let mut breakpoints_by_k = Vec::with_capacity(k_max + 1);
    let mut cost_path = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut bps = Vec::with_capacity(k);
        let mut j = t;
        for kk in (1..=k).rev() {
            j = arg[kk][j];
            bps.push(j);
        }
        bps.reverse();
        breakpoints_by_k.push(bps);
        cost_path.push(f[k][t]);
    }
    Ok(Segmentation {
        k_max,
        cost_path,
        breakpoints_by_k,
    })
}

/// Optimal SSE with exactly `k` changepoints.
pub fn segment_sse_at_k(x: &DMatrix<f64>, k: usize) -> Result<f64> {
    Ok(dp_segment(x, k, Execution::Sequential)?.sse(k))
}

/// How the elbow of the log-SSE path is located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElbowRule {
    /// Largest `log sse_{k-1} - 2 log sse_k + log sse_{k+1}` over interior `k`.
    #[default]
    MaxSecondDifference,
    /// Largest vertical drop below the chord joining the path's end points.
    MaxChordDistance,
}

/// Elbow of the cost path. A zero entry (perfect fit) truncates the path; if
/// fewer than three positive entries remain, the first zero index is returned.
/// Ties go to the smaller `k`.
pub fn elbow_select(cost_path: &[f64], rule: ElbowRule) -> Result<usize> {
    if cost_path.len() < 3 {
        return Err(NssError::Argument(format!(
            "cost path needs at least 3 entries, got {}",
            cost_path.len()
        )));
    }
    if cost_path.iter().any(|c| !(*c >= 0.0)) {
        return Err(NssError::Domain("cost path entries must be >= 0".into()));
    }
    let end = cost_path.iter().position(|&c| c == 0.0).unwrap_or(cost_path.len());
    if end < 3 {
        return Ok(end.min(cost_path.len() - 1));
    }
    let l: Vec<f64> = cost_path[..end].iter().map(|c| c.ln()).collect();
    let score: Vec<f64> = match rule {
        ElbowRule::MaxSecondDifference => (1..end - 1).map(|k| l[k - 1] - 2.0 * l[k] + l[k + 1]).collect(),
        ElbowRule::MaxChordDistance => {
            let n = (end - 1) as f64;
            (1..end - 1)
                .map(|k| l[0] + (l[end - 1] - l[0]) * k as f64 / n - l[k])
                .collect()
        }
    };
    let best = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-10 * best.abs().max(1.0);
    let pos = score.iter().position(|&s| s >= best - tol).expect("non-empty");
    Ok(pos + 1)
}

/// Centres each column and scales it to unit sample variance. Constant
/// columns are only centred.
pub fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let t = x.nrows();
    for c in 0..x.ncols() {
        let mean = out.column(c).mean();
        out.column_mut(c).add_scalar_mut(-mean);
        if t > 1 {
            let sd = (out.column(c).norm_squared() / (t - 1) as f64).sqrt();
            if sd > 0.0 {
                out.column_mut(c).scale_mut(1.0 / sd);
            }
        }
    }
    out
}

/// A `T x d` series read from CSV. A leading `date` column becomes the row
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub labels: Option<Vec<String>>,
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
}

pub fn read_series_csv<R: BufRead>(reader: R) -> Result<LabeledSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let has_labels = header.first().is_some_and(|h| h.eq_ignore_ascii_case("date"));
    let skip = usize::from(has_labels);
    let d = header.len() - skip;
    if d == 0 {
        return Err(NssError::Parse {
            line: 1,
            message: "no numeric columns".into(),
        });
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| NssError::Parse {
            line,
            message: e.to_string(),
        })?;
        if has_labels {
            labels.push(rec[0].to_string());
        }
        for f in rec.iter().skip(skip) {
            values.push(f.parse::<f64>().map_err(|_| NssError::Parse {
                line,
                message: format!("bad number '{f}'"),
            })?);
        }
    }
    let t = values.len() / d;
    Ok(LabeledSeries {
        labels: has_labels.then_some(labels),
        columns: header[skip..].to_vec(),
        data: DMatrix::from_row_slice(t, d, &values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_cost() {
        let x = DMatrix::from_element(8, 2, 3.5);
        let s = dp_segment(&x, 3, Execution::Sequential).unwrap();
        assert_eq!(s.sse(0), 0.0);
        assert!(s.breakpoints(0).is_empty());
    }

    #[test]
    fn clean_step_is_recovered() {
        let x = DMatrix::from_fn(10, 3, |i, c| if i < 6 { c as f64 } else { 5.0 - c as f64 });
        let s = dp_segment(&x, 2, Execution::Sequential).unwrap();
        assert_eq!(s.breakpoints(1), &[6]);
        assert!(s.sse(1) <= 1e-12 * s.sse(0));
    }

    #[test]
    fn singletons_fit_exactly_and_path_is_monotone() {
        let x = DMatrix::from_fn(7, 1, |i, _| ((i * 7919) % 13) as f64);
        let s = dp_segment(&x, 6, Execution::Sequential).unwrap();
        assert!(s.sse(6).abs() < 1e-12);
        for w in s.cost_path.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(dp_segment(&x, 7, Execution::Sequential).is_err());
    }

    #[test]
    fn elbow_rules() {
        let geometric: Vec<f64> = (0..8).map(|k| 0.5_f64.powi(k)).collect();
        assert_eq!(elbow_select(&geometric, ElbowRule::MaxSecondDifference).unwrap(), 1);
        let path = [100.0, 10.0, 9.0, 8.5, 8.2];
        assert_eq!(elbow_select(&path, ElbowRule::MaxSecondDifference).unwrap(), 1);
        assert_eq!(elbow_select(&path, ElbowRule::MaxChordDistance).unwrap(), 1);
        assert_eq!(elbow_select(&[5.0, 0.0, 0.0], ElbowRule::default()).unwrap(), 1);
        assert!(elbow_select(&[1.0, 0.5], ElbowRule::default()).is_err());
    }

    #[test]
    fn standardize_unit_variance() {
        let x = DMatrix::from_fn(20, 2, |i, c| (i as f64) * (c as f64 + 1.0) + 3.0);
        let z = standardize(&x);
        for c in 0..2 {
            assert!(z.column(c).mean().abs() < 1e-14);
            assert!((z.column(c).norm_squared() / 19.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reads_dated_csv() {
        let s = read_series_csv("date,b1,b2\n2020-01-31,1,2\n2020-02-28,3,4\n".as_bytes()).unwrap();
        assert_eq!(s.labels.unwrap(), ["2020-01-31", "2020-02-28"]);
        assert_eq!(s.data[(1, 0)], 3.0);
    }
}
