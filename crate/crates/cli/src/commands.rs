use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use nalgebra::{DVector, Dim, Matrix, RawStorage};
use serde::Serialize;
use serde_json::json;

use nss_ortho::changepoint::{dp_segment, elbow_select, read_series_csv, standardize, ElbowRule, Segmentation};
use nss_ortho::covariance::{
    beta_cov_delta, conditional_beta_cov, full_covariance, nonlinear_sensitivities, DerivativeMethod,
};
use nss_ortho::gram::{continuous_basis, decaying_gram_infinite, gram_matrix, scaled_discrete_r44};
use nss_ortho::identifiability::{rank_analysis, RANK_TOL};
use nss_ortho::nss::{design_matrix, MaturityGrid};
use nss_ortho::ortho::{thin_qr_positive, ModelChoice, Selection};
use nss_ortho::profiles::{
    conditional_profile_beta, conditional_profile_gamma, confidence_interval, full_profile, landscape_2d,
    profile_width, symmetric_values, Basis, ParamId, ProfileConfig, ProfileCurve,
};
use nss_ortho::synthetic::{
    basis_curves, condition_map, generate, r44_sweep, table1_report, write_correlations_csv, write_regime_curves_csv,
    write_sweep_csv, write_table1_csv, Regime, RegimeName,
};
use nss_ortho::timeseries::{
    load_history, run_daily, simulate_history, summarize, write_outputs, DailyConfig, YieldHistory, REDUCED_9,
};
use nss_ortho::varpro::{fit_global, LambdaBox, OuterConfig};
use nss_ortho::{Execution, NssError};

use crate::{Cli, Command, Common, Failure, Model};

const BP: f64 = 1e4;

fn rows<R: Dim, C: Dim, S: RawStorage<f64, R, C>>(m: &Matrix<f64, R, C, S>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn lambda_box(c: &Common) -> Result<LambdaBox, Failure> {
    let b = &c.lambda_box;
    if b.len() != 4 {
        return Err(Failure::input(format!("--lambda-box needs 4 values, got {}", b.len())));
    }
    Ok(LambdaBox::new([b[0], b[1]], [b[2], b[3]])?)
}

fn selection(c: &Common) -> Result<Selection, Failure> {
    let model = match c.model {
        Model::Ns => ModelChoice::Ns,
        Model::Nss => ModelChoice::Nss,
        Model::Auto => ModelChoice::Auto,
    };
    Ok(Selection::new(c.sigma, c.delta)?.with_model(model))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<File, Failure> {
    Ok(File::create(dir.join(name))?)
}

/// Creates the output directory and records the effective configuration.
/// The wall-clock time goes to a separate metadata file so the remaining
/// outputs are reproducible byte for byte.
fn prepare_output(cli: &Cli) -> Result<(), Failure> {
    let dir = &cli.common.output_dir;
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), cli)?;
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "created_at": chrono::Local::now().to_rfc3339(),
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let c = &cli.common;
    if !(c.sigma > 0.0 && c.sigma.is_finite()) {
        return Err(Failure::input(format!("--sigma must be > 0, got {}", c.sigma)));
    }
    lambda_box(c)?;
    if let Some(p) = &c.input {
        if !p.is_file() {
            return Err(Failure::input(format!("input file {} not found", p.display())));
        }
    }
    prepare_output(cli)?;
    match &cli.command {
        Command::Fit { yields } => cmd_fit(c, yields.as_deref()),
        Command::Table1 => cmd_table1(c),
        Command::Sweeps => cmd_sweeps(c),
        Command::Profiles { full } => cmd_profiles(c, *full),
        Command::Landscape => cmd_landscape(c),
        Command::Gram { lambda } => match lambda[..] {
            [a, b] => cmd_gram(c, [a, b]),
            _ => Err(Failure::input(format!("--lambda needs 2 values, got {}", lambda.len()))),
        },
        Command::Treasury { synthetic_days } => cmd_treasury(c, *synthetic_days),
        Command::Changepoint { no_standardize } => cmd_changepoint(c, !no_standardize),
    }
}

/// A curve from `tenor,yield` CSV rows (percent) or inline flags.
fn read_curve(c: &Common, yields: Option<&[f64]>) -> Result<(MaturityGrid, Vec<String>, DVector<f64>), Failure> {
    let (labels, values): (Vec<String>, Vec<f64>) = match (&c.input, yields) {
        (Some(path), None) => {
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(BufReader::new(File::open(path)?));
            let mut pts = Vec::new();
            for (k, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| Failure::input(format!("line {}: {e}", k + 2)))?;
                if rec.len() != 2 {
                    return Err(Failure::input(format!("line {}: expected tenor,yield", k + 2)));
                }
                let v: f64 = rec[1]
                    .parse()
                    .map_err(|_| Failure::input(format!("line {}: bad yield '{}'", k + 2, &rec[1])))?;
                let tau = nss_ortho::nss::parse_tenor(&rec[0])?;
                pts.push((tau, rec[0].to_string(), v));
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.into_iter().map(|(_, l, v)| (l, v)).unzip()
        }
        (None, Some(ys)) => {
            let labels = c
                .tenors
                .clone()
                .ok_or_else(|| Failure::input("--yields needs --tenors"))?;
            if labels.len() != ys.len() {
                return Err(Failure::input(format!(
                    "{} tenors but {} yields",
                    labels.len(),
                    ys.len()
                )));
            }
            (labels, ys.to_vec())
        }
        (Some(_), Some(_)) => return Err(Failure::input("give either --input or --yields, not both")),
        (None, None) => return Err(Failure::input("fit needs --input or --tenors with --yields")),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::input("non-finite yield"));
    }
    let grid = MaturityGrid::from_labels(&labels)?;
    Ok((
        grid,
        labels,
        DVector::from_iterator(values.len(), values.iter().map(|v| v / 100.0)),
    ))
}

fn cmd_fit(c: &Common, yields: Option<&[f64]>) -> Result<(), Failure> {
    let (grid, labels, y) = read_curve(c, yields)?;
    if grid.len() < 4 {
        return Err(Failure::input(format!("need at least 4 tenors, got {}", grid.len())));
    }
    let sel = selection(c)?;
    let fit = fit_global(&grid, &y, &lambda_box(c)?, &sel, &OuterConfig::default()).map_err(Failure::fit)?;
    let m = grid.len();
    let rss = fit.inner.residual_norm.powi(2);
    let sigma_hat = (m > 4).then(|| (rss / (m - 4) as f64).sqrt());

    let phi = design_matrix(&grid, fit.lambda)?;
    let fact = thin_qr_positive(&phi)?;
    let gamma = nalgebra::Vector4::from(fit.inner.gamma);
    let covariance = nonlinear_sensitivities(fit.lambda, &gamma, &grid, DerivativeMethod::Analytic)
        .and_then(|g| full_covariance(&fact, &g, c.sigma))
        .and_then(|joint| {
            let beta = nalgebra::Vector4::from(fit.inner.beta);
            let bc = beta_cov_delta(&fact, &grid, fit.lambda, &beta, &joint, DerivativeMethod::Analytic)?;
            Ok(json!({
                "cov_gamma": rows(&joint.cov_gamma),
                "cov_lambda": rows(&joint.cov_lambda),
                "cov_gamma_lambda": rows(&joint.cross),
                "cov_beta": rows(&bc.cov_beta),
                "std_beta": bc.std(),
                "std_lambda": [joint.cov_lambda[(0, 0)].sqrt(), joint.cov_lambda[(1, 1)].sqrt()],
                "warning": bc.warning,
            }))
        })
        .unwrap_or_else(|e: NssError| json!({ "error": e.to_string() }));
    let conditional = conditional_beta_cov(&phi, c.sigma)
        .map(|cc| json!({ "std_beta": cc.std(), "max_abs_corr": cc.max_abs_corr, "corr": rows(&cc.corr) }))
        .unwrap_or_else(|e| json!({ "error": e.to_string() }));
    let params = nss_ortho::NssParams {
        beta: fit.inner.beta,
        lambda: fit.lambda,
    };
    let ident = rank_analysis(&params, &grid, RANK_TOL)?;
    let report = json!({
        "tenors": labels,
        "fit": fit,
        "sigma": c.sigma,
        "sigma_hat": sigma_hat,
        "rmse_bp": (rss / m as f64).sqrt() * BP,
        "threshold": sel.threshold(),
        "conditional_covariance": conditional,
        "joint_covariance": covariance,
        "identifiability": ident,
    });
    write_json(&c.output_dir.join("fit.json"), &report)?;
    println!(
        "lambda = ({:.6}, {:.6})  p = {}  |R44| = {:.4e}  H = {:.4e}  kappa = {:.1}",
        fit.lambda[0],
        fit.lambda[1],
        fit.inner.p,
        fit.inner.r44.abs(),
        fit.objective,
        fit.inner.kappa
    );
    println!("beta  = {:?}", fit.inner.beta);
    println!("gamma = {:?}", fit.inner.gamma);
    Ok(())
}

fn cmd_table1(c: &Common) -> Result<(), Failure> {
    let rows = table1_report(c.sigma)?;
    write_table1_csv(&rows, create(&c.output_dir, "table1.csv")?)?;
    write_correlations_csv(&rows, create(&c.output_dir, "correlations.csv")?)?;
    println!(
        "{:<16} {:>6} {:>9} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9}",
        "case", "l2", "kappa", "|R44|", "sd b1", "sd b2", "sd b3", "sd b4", "sd gamma", "max|corr|"
    );
    for r in &rows {
        println!(
            "{:<16} {:>6} {:>9.1} {:>8.4} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>9.4}",
            r.case,
            r.lambda[1],
            r.kappa,
            r.r44,
            r.std_beta[0],
            r.std_beta[1],
            r.std_beta[2],
            r.std_beta[3],
            r.std_gamma[0],
            r.max_abs_corr
        );
    }
    Ok(())
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

fn cmd_sweeps(c: &Common) -> Result<(), Failure> {
    let dir = &c.output_dir;
    let grid = MaturityGrid::us_treasury_12();
    let l2: Vec<f64> = linspace(0.01, 1.5, 150).into_iter().filter(|&l| l != 0.6).collect();
    write_sweep_csv(&r44_sweep(0.6, &l2, &grid)?, create(dir, "r44_sweep.csv")?)?;
    let axis = logspace(0.05, 3.0, 60);
    condition_map(&axis, &axis, &grid, Execution::default())?.write_csv(create(dir, "condition_map.csv")?)?;
    let dense = linspace(0.05, c.horizon, 300);
    basis_curves([0.6, 0.2], &grid, &dense)?.write_csv(create(dir, "basis_curves.csv")?)?;
    write_regime_curves_csv(&Regime::all(), &dense, create(dir, "regime_curves.csv")?)?;
    let mut samples = Vec::new();
    for r in Regime::all() {
        let s = generate(&r, c.sigma, c.seed)?;
        samples.push(json!({ "regime": r.name, "params": r.params, "taus": s.grid.taus(), "y_true": s.y_true, "y_noisy": s.y_noisy }));
    }
    write_json(&dir.join("regime_samples.json"), &samples)?;
    println!("wrote r44_sweep.csv, condition_map.csv, basis_curves.csv, regime_curves.csv, regime_samples.json");
    Ok(())
}

fn profile_summary(curve: &ProfileCurve) -> serde_json::Value {
    let ci = confidence_interval(curve, 0.95).ok();
    json!({
        "parameter": curve.parameter.to_string(),
        "conditional": curve.conditional,
        "mle": curve.mle,
        "profile_std": curve.profile_std,
        "ci95": ci,
        "max_dnll": curve.dnll.iter().copied().filter(|v| !v.is_nan()).fold(0.0, f64::max),
    })
}

fn cmd_profiles(c: &Common, full: bool) -> Result<(), Failure> {
    let dir = &c.output_dir;
    let base = Regime::get(RegimeName::Normal);
    let mut summary = Vec::new();
    for (tag, l2) in [("well_separated", 0.2), ("very_degenerate", 0.59)] {
        let regime = Regime {
            params: nss_ortho::NssParams {
                beta: base.params.beta,
                lambda: [0.6, l2],
            },
            ..base
        };
        let y = generate(&regime, c.sigma, c.seed)?.y();
        let grid = MaturityGrid::us_treasury_12();
        let phi = design_matrix(&grid, regime.params.lambda)?;
        let fact = thin_qr_positive(&phi)?;
        for j in 1..=4 {
            let (_, bhat) = nss_ortho::profiles::constrained_rss(&phi.values, &y, &[]);
            let bv = symmetric_values(bhat[j - 1], 5.0 * c.sigma, 101);
            let bc = conditional_profile_beta(j, &phi, &y, c.sigma, &bv)?;
            bc.save_csv(&dir.join(format!("profile_{tag}_beta{j}.csv")))?;
            let ghat = fact.psi.column(j - 1).dot(&y);
            let gv = symmetric_values(ghat, 5.0 * c.sigma, 101);
            let gc = conditional_profile_gamma(j, &fact, &y, c.sigma, &gv)?;
            gc.save_csv(&dir.join(format!("profile_{tag}_gamma{j}.csv")))?;
            summary.push(json!({ "case": tag, "lambda": regime.params.lambda, "beta": profile_summary(&bc), "gamma": profile_summary(&gc) }));
        }
    }
    if full {
        let regime = Regime::get(RegimeName::NearDegenerate);
        let grid = MaturityGrid::us_treasury_12();
        let y = generate(&regime, c.sigma, c.seed)?.y();
        let bx = lambda_box(c)?;
        let fit = fit_global(
            &grid,
            &y,
            &bx,
            &Selection::new(c.sigma, None)?.with_model(ModelChoice::Nss),
            &OuterConfig::default(),
        )
        .map_err(Failure::fit)?;
        let phi = design_matrix(&grid, fit.lambda)?;
        for (target, name) in [(ParamId::Beta(4), "beta4"), (ParamId::Gamma(4), "gamma4")] {
            let (mle, sd) = match target {
                ParamId::Beta(j) => (
                    fit.inner.beta[j - 1],
                    profile_width(&phi.values, j - 1, c.sigma).profile_std,
                ),
                _ => (fit.inner.gamma[3], c.sigma),
            };
            let half = (40.0 * sd).min(0.05);
            let values = symmetric_values(mle, half, 41);
            let curve = full_profile(target, &grid, &y, c.sigma, &values, &bx, &ProfileConfig::default())?;
            curve.save_csv(&dir.join(format!("full_profile_near_degenerate_{name}.csv")))?;
            summary.push(
                json!({ "case": "near_degenerate_full", "lambda_hat": fit.lambda, "profile": profile_summary(&curve) }),
            );
        }
    }
    write_json(&dir.join("profiles_summary.json"), &summary)?;
    println!("wrote {} profile summaries", summary.len());
    Ok(())
}

fn cmd_landscape(c: &Common) -> Result<(), Failure> {
    let dir = &c.output_dir;
    let base = Regime::get(RegimeName::Normal);
    let regime = Regime {
        params: nss_ortho::NssParams {
            beta: base.params.beta,
            lambda: [0.6, 0.4],
        },
        ..base
    };
    let grid = MaturityGrid::us_treasury_12();
    let y = generate(&regime, c.sigma, c.seed)?.y();
    let phi = design_matrix(&grid, regime.params.lambda)?;
    let fact = thin_qr_positive(&phi)?;
    let cov = conditional_beta_cov(&phi, c.sigma)?;
    let (_, bhat) = nss_ortho::profiles::constrained_rss(&phi.values, &y, &[]);
    let sd = cov.std();
    let xs = symmetric_values(bhat[2], 4.0 * sd[2], 61);
    let ys = symmetric_values(bhat[3], 4.0 * sd[3], 61);
    let lb = landscape_2d(Basis::Beta, (3, 4), &phi, &y, c.sigma, &xs, &ys, Execution::default())?;
    lb.write_csv(create(dir, "landscape_beta34.csv")?)?;
    lb.write_paths_csv(create(dir, "landscape_beta34_paths.csv")?)?;
    let g = fact.psi.tr_mul(&y);
    let xs = symmetric_values(g[2], 4.0 * c.sigma, 61);
    let ys = symmetric_values(g[3], 4.0 * c.sigma, 61);
    let lg = landscape_2d(Basis::Gamma, (3, 4), &phi, &y, c.sigma, &xs, &ys, Execution::default())?;
    lg.write_csv(create(dir, "landscape_gamma34.csv")?)?;
    lg.write_paths_csv(create(dir, "landscape_gamma34_paths.csv")?)?;
    write_json(
        &dir.join("landscape_summary.json"),
        &json!({
            "lambda": regime.params.lambda,
            "mle_beta34": lb.mle,
            "mle_gamma34": lg.mle,
            "joint95_threshold": 0.5 * nss_ortho::profiles::chi2_quantile(2, 0.95)?,
        }),
    )?;
    println!("wrote landscape_beta34.csv, landscape_gamma34.csv and paths");
    Ok(())
}

fn cmd_gram(c: &Common, lambda: [f64; 2]) -> Result<(), Failure> {
    let dir = &c.output_dir;
    let gm = gram_matrix(lambda, c.horizon)?;
    let cb = continuous_basis(lambda, c.horizon)?;
    let infinite = decaying_gram_infinite(lambda).ok().map(|m| rows(&m));
    let discrete = scaled_discrete_r44(lambda, c.horizon, 1000).ok();
    write_json(
        &dir.join("gram.json"),
        &json!({
            "lambda": lambda,
            "horizon": c.horizon,
            "gram": rows(&gm.g),
            "cholesky_l": rows(&cb.l),
            "r_t": rows(&cb.r_t),
            "zero_pivot": cb.zero_pivot,
            "r44_continuous": cb.r44(),
            "r44_discrete_scaled_n1000": discrete,
            "gram_infinite_decaying": infinite,
        }),
    )?;
    if !cb.is_degenerate() {
        let mut out = csv::Writer::from_writer(create(dir, "continuous_basis.csv")?);
        out.write_record(["tau", "psi1", "psi2", "psi3", "psi4"])
            .map_err(Failure::input)?;
        for t in linspace(c.horizon / 300.0, c.horizon, 300) {
            let v = cb.eval(t)?;
            let mut rec = vec![t.to_string()];
            rec.extend(v.iter().map(|x| x.to_string()));
            out.write_record(&rec).map_err(Failure::input)?;
        }
        out.flush()?;
    }
    println!("(R_T)_44 = {:.6e}, zero pivot: {:?}", cb.r44(), cb.zero_pivot);
    Ok(())
}

#[derive(Serialize)]
struct ChangepointSummary {
    k_max: usize,
    k_star: usize,
    standardized: bool,
    breakpoints: Vec<String>,
    sse_at_k_star: f64,
}

fn segment(
    data: &nalgebra::DMatrix<f64>,
    labels: Option<&[String]>,
    k_max: usize,
    std: bool,
) -> Result<(Segmentation, ChangepointSummary), Failure> {
    let x = if std { standardize(data) } else { data.clone() };
    let k_max = k_max.min(x.nrows().saturating_sub(1));
    let seg = dp_segment(&x, k_max, Execution::default())?;
    let k_star = elbow_select(&seg.cost_path, ElbowRule::default())?;
    let breakpoints = seg
        .breakpoints(k_star)
        .iter()
        .map(|&b| labels.map_or_else(|| b.to_string(), |l| l[b].clone()))
        .collect();
    let summary = ChangepointSummary {
        k_max,
        k_star,
        standardized: std,
        breakpoints,
        sse_at_k_star: seg.sse(k_star),
    };
    Ok((seg, summary))
}

fn cmd_changepoint(c: &Common, std: bool) -> Result<(), Failure> {
    let path = c
        .input
        .as_ref()
        .ok_or_else(|| Failure::input("changepoint needs --input"))?;
    let series = read_series_csv(BufReader::new(File::open(path)?))?;
    let labels = series.labels.as_deref();
    let (seg, summary) = segment(&series.data, labels, c.kmax, std)?;
    seg.write_csv(labels, create(&c.output_dir, "changepoint.csv")?)?;
    write_json(&c.output_dir.join("changepoint_summary.json"), &summary)?;
    println!(
        "k* = {}  breakpoints: {}",
        summary.k_star,
        summary.breakpoints.join(", ")
    );
    Ok(())
}

fn cmd_treasury(c: &Common, synthetic_days: Option<usize>) -> Result<(), Failure> {
    let dir = &c.output_dir;
    let tenors: Vec<String> = c
        .tenors
        .clone()
        .unwrap_or_else(|| REDUCED_9.iter().map(|s| s.to_string()).collect());
    let history: YieldHistory = match (&c.input, synthetic_days) {
        (Some(p), None) => load_history(p, Some(&tenors), true)?,
        (None, Some(n)) => {
            let labels: Vec<&str> = tenors.iter().map(String::as_str).collect();
            simulate_history(&labels, n, c.sigma, c.seed)?
        }
        _ => {
            return Err(Failure::input(
                "treasury needs exactly one of --input or --synthetic-days",
            ))
        }
    };
    let history = history.window(c.from, c.to);
    if history.is_empty() {
        return Err(Failure::input("no complete days in the selected window"));
    }
    let cfg = DailyConfig {
        bx: lambda_box(c)?,
        outer: OuterConfig::default(),
        selection: selection(c)?,
    };
    let run = run_daily(&history, &cfg).map_err(Failure::fit)?;
    if run.records.len() < 3 {
        return Err(Failure::fit(format!("only {} days fitted", run.records.len())));
    }
    let report = summarize(&run, &history.tenors)?;
    write_outputs(dir, &run, &report)?;

    let m = &report.monthly;
    let labels: Vec<String> = m.dates.iter().map(|d| d.format("%Y-%m").to_string()).collect();
    let mut changepoints = serde_json::Value::Null;
    if m.dates.len() >= 3 {
        let to_mat = |v: &[[f64; 4]]| nalgebra::DMatrix::from_fn(v.len(), 4, |i, j| v[i][j]);
        let (sb, cb) = segment(&to_mat(&m.beta), Some(&labels), c.kmax, true)?;
        let (sg, cg) = segment(&to_mat(&m.gamma), Some(&labels), c.kmax, true)?;
        sb.write_csv(Some(&labels), create(dir, "changepoint_beta.csv")?)?;
        sg.write_csv(Some(&labels), create(dir, "changepoint_gamma.csv")?)?;
        changepoints = json!({
            "beta": cb,
            "gamma": cg,
            "sse_reduction_gamma_vs_beta": 1.0 - cg.sse_at_k_star / cb.sse_at_k_star,
        });
    }
    let q = &report.fit_quality;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "tenors": history.tenors,
            "days_in_window": history.len(),
            "days_fitted": run.records.len(),
            "failures": run.failures,
            "median_rmse_bp": q.overall.median_rmse * BP,
            "p95_rmse_bp": q.overall.p95_rmse * BP,
            "spearman_rmse_r44": q.spearman_rmse_r44,
            "min_r44": report.min_r44,
            "rotation_p95": report.rotation_p95,
            "rho_ratio": report.smoothness.rho_ratio,
            "j_ratio": report.smoothness.j_ratio,
            "fisher_ratio": report.bands.ratio,
            "months": m.dates.len(),
            "changepoints": changepoints,
        }),
    )?;
    println!(
        "days {} fitted {}  median RMSE {:.2} bp  min |R44| {:.4}  B_t p95 {:.3e}",
        history.len(),
        run.records.len(),
        q.overall.median_rmse * BP,
        report.min_r44,
        report.rotation_p95
    );
    Ok(())
}
