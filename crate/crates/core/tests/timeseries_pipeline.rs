use chrono::NaiveDate;
use nss_ortho::nss::design_matrix;
use nss_ortho::ortho::{thin_qr_positive, Selection};
use nss_ortho::rng::{gaussian_vector, trial_rng};
use nss_ortho::timeseries::{
    business_days, fisher_bands, fit_quality, monthly_downsample, read_history, reparametrization_gap, run_daily,
    simulate_history, smoothness, summarize, write_outputs, DailyConfig, DailyRecord, YieldHistory, REDUCED_9,
};
use nss_ortho::varpro::{reduced_objective, LambdaBox, OuterConfig};
use nss_ortho::{MaturityGrid, NssError};

fn cfg(sigma: f64) -> DailyConfig {
    DailyConfig {
        bx: LambdaBox::default(),
        outer: OuterConfig::default(),
        selection: Selection::new(sigma, None).unwrap(),
    }
}

fn record(date: NaiveDate, beta: [f64; 4], rmse: f64) -> DailyRecord {
    DailyRecord {
        date,
        lambda: [0.6, 0.2],
        gamma: beta,
        beta,
        p: 4,
        r44: 0.1,
        kappa: 40.0,
        rmse,
        sigma_hat: rmse,
        basis_rotation: None,
        fisher_std_beta: [1e-4; 4],
        fisher_std_gamma: [1e-4; 4],
        residuals: vec![rmse; 9],
        objective: 0.0,
        objective_at_prev: None,
        used_warm_start: false,
    }
}

#[test]
fn white_noise_roughness_is_root_two() {
    let x: Vec<f64> = gaussian_vector(&mut trial_rng(21, 0), 100_000, 1.0)
        .iter()
        .copied()
        .collect();
    let s = smoothness(&x).unwrap();
    let rho = s.rho.unwrap();
    assert!((rho / 2f64.sqrt() - 1.0).abs() < 0.02, "rho = {rho}");
    let c = smoothness(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    assert!(c.rho.is_none() && c.j.is_none());
    assert!(smoothness(&[1.0, 2.0]).is_err());
}

#[test]
fn synthetic_history_properties() {
    let h = simulate_history(&REDUCED_9, 120, 5e-5, 3).unwrap();
    let run = run_daily(&h, &cfg(5e-5)).unwrap();
    assert!(run.failures.is_empty());
    assert_eq!(run.records.len(), 120);
    assert!(reparametrization_gap(&h, &run.records).unwrap() <= 1e-10);
    for r in &run.records[1..] {
        assert!(r.basis_rotation.unwrap() >= 0.0);
        if let Some(prev) = r.objective_at_prev {
            assert!(r.objective <= prev, "{}: {} > {}", r.date, r.objective, prev);
        }
    }
    // The recorded objective is H at the recorded lambda.
    let grid = MaturityGrid::from_labels(&REDUCED_9).unwrap();
    for (k, r) in run.records.iter().enumerate().step_by(17) {
        let y = h.complete_row(k).unwrap();
        let hv = reduced_objective(r.lambda, &grid, &y).unwrap();
        assert!((hv - r.objective).abs() <= 1e-12 * hv.max(1e-20));
        let fact = thin_qr_positive(&design_matrix(&grid, r.lambda).unwrap()).unwrap();
        for j in 0..4 {
            assert!((r.fisher_std_gamma[j] - r.sigma_hat).abs() <= 1e-15);
        }
        assert!(r.fisher_std_beta[3] * fact.r44().abs() >= r.sigma_hat * (1.0 - 1e-10));
    }
}

#[test]
fn constant_history_does_not_rotate() {
    let grid = MaturityGrid::from_labels(&REDUCED_9).unwrap();
    let p = nss_ortho::NssParams::new([0.04, -0.02, 0.015, 0.008], [0.6, 0.2]).unwrap();
    let y = nss_ortho::nss::curve_eval(&p, &grid).unwrap();
    let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 10);
    let rows = vec![y.iter().map(|v| Some(*v)).collect(); 10];
    let h = YieldHistory::new(dates, REDUCED_9.iter().map(|s| s.to_string()).collect(), rows).unwrap();
    let run = run_daily(&h, &cfg(5e-5)).unwrap();
    let l0 = run.records[0].lambda;
    for r in &run.records[1..] {
        assert_eq!(r.lambda, l0);
        assert!(r.basis_rotation.unwrap() <= 1e-12);
    }
}

#[test]
fn failed_days_are_recorded_and_skipped() {
    let text = "date,1Y,2Y,5Y,10Y,30Y\n\
                2024-01-02,4.8,4.3,4.0,4.0,4.2\n\
                2024-01-03,4.8,ND,4.0,4.0,4.2\n\
                2024-01-04,4.7,4.3,4.1,4.0,4.3\n";
    let h = read_history(text.as_bytes(), None, false).unwrap();
    let run = run_daily(&h, &cfg(5e-5)).unwrap();
    assert_eq!(run.records.len(), 2);
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].date, NaiveDate::from_ymd_opt(2024, 1, 3).unwrap());
    assert!(run.records[1].basis_rotation.is_some());
}

#[test]
fn history_csv_round_trip() {
    let h = simulate_history(&REDUCED_9, 15, 5e-5, 1).unwrap();
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let back = read_history(buf.as_slice(), None, true).unwrap();
    assert_eq!(back.dates, h.dates);
    assert_eq!(back.tenors, h.tenors);
    for (a, b) in back.yields.iter().zip(&h.yields) {
        for (x, y) in a.iter().zip(b) {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-15);
        }
    }
    let bad = "date,1Y\n2024-01-02,4.6\nnot-a-date,4.7\n";
    assert!(matches!(
        read_history(bad.as_bytes(), None, false),
        Err(NssError::Parse { line: 3, .. })
    ));
}

#[test]
fn monthly_sampling() {
    let mut recs = Vec::new();
    let mut d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2021, 12, 31).unwrap();
    let mut k = 0.0;
    while d <= end {
        recs.push(record(d, [k, 0.0, 0.0, 0.0], 1e-4));
        k += 1.0;
        d += chrono::Duration::days(3);
    }
    let m = monthly_downsample(&recs);
    assert_eq!(m.dates.len(), 24);
    for (i, date) in m.dates.iter().enumerate() {
        let next = recs.iter().position(|r| r.date == *date).unwrap() + 1;
        if let Some(n) = recs.get(next) {
            assert_ne!(
                chrono::Datelike::month(&n.date),
                chrono::Datelike::month(date),
                "row {i}"
            );
        }
    }
    let one = vec![
        record(NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(), [1.0; 4], 1e-4),
        record(NaiveDate::from_ymd_opt(2020, 3, 9).unwrap(), [2.0; 4], 1e-4),
    ];
    let m = monthly_downsample(&one);
    assert_eq!(m.beta, vec![[2.0; 4]]);
}

#[test]
fn single_record_quality_and_unit_bands() {
    let r = record(
        NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        [0.04, -0.02, 0.01, 0.0],
        3e-4,
    );
    let tenors: Vec<String> = REDUCED_9.iter().map(|s| s.to_string()).collect();
    let q = fit_quality(std::slice::from_ref(&r), &tenors).unwrap();
    assert_eq!(q.overall.median_rmse, 3e-4);
    assert_eq!(q.overall.max_rmse, 3e-4);
    let b = fisher_bands(&[r.clone(), r]);
    assert_eq!(b.ratio, [1.0; 4]);
}

#[test]
fn outputs_are_written() {
    let h = simulate_history(&REDUCED_9, 60, 5e-5, 2).unwrap();
    let run = run_daily(&h, &cfg(5e-5)).unwrap();
    let report = summarize(&run, &h.tenors).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &run, &report).unwrap();
    for f in [
        "records.jsonl",
        "fit_quality.csv",
        "smoothness.csv",
        "bands.csv",
        "monthly_beta.csv",
        "monthly_gamma.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let lines = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 60);
}
