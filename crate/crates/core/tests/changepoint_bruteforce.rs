use nalgebra::DMatrix;
use nss_ortho::changepoint::{dp_segment, elbow_select, read_series_csv, segment_sse_at_k, standardize, ElbowRule};
use nss_ortho::rng::{gaussian_vector, trial_rng};
use nss_ortho::Execution;
use proptest::prelude::*;
use rand::Rng;

// SSE of a segmentation computed directly from segment means.
fn sse_of(x: &DMatrix<f64>, bps: &[usize]) -> f64 {
    let mut cuts = vec![0];
    cuts.extend_from_slice(bps);
    cuts.push(x.nrows());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let seg = x.rows(w[0], w[1] - w[0]);
        for c in 0..x.ncols() {
            let col = seg.column(c);
            let m = col.mean();
            total += col.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
    }
    total
}

fn combinations(t: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, t: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for s in start..t {
            cur.push(s);
            rec(s + 1, t, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, t, k, &mut Vec::new(), &mut out);
    out
}

fn random_matrix(t: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let v = gaussian_vector(&mut trial_rng(seed, 1), t * d, 1.0);
    DMatrix::from_column_slice(t, d, v.as_slice())
}

#[test]
fn dp_matches_exhaustive_search() {
    for seed in 0..100u64 {
        let mut rng = trial_rng(seed, 0);
        let t = rng.random_range(5..=12);
        let d = rng.random_range(1..=3);
        let x = random_matrix(t, d, seed);
        let seg = dp_segment(&x, 3, Execution::Sequential).unwrap();
        for k in 0..=3 {
            let (best, arg) = combinations(t, k)
                .into_iter()
                .map(|b| (sse_of(&x, &b), b))
                .fold((f64::INFINITY, Vec::new()), |acc, c| if c.0 < acc.0 { c } else { acc });
            assert!((seg.sse(k) - best).abs() <= 1e-10 * best.max(1.0), "seed {seed} k {k}");
            assert!((sse_of(&x, seg.breakpoints(k)) - best).abs() <= 1e-10 * best.max(1.0));
            if (sse_of(&x, &arg) - sse_of(&x, seg.breakpoints(k))).abs() > 1e-9 {
                panic!("seed {seed} k {k}: {arg:?} vs {:?}", seg.breakpoints(k));
            }
        }
    }
}

#[test]
fn singletons_and_constant_series() {
    let x = random_matrix(8, 2, 5);
    assert_eq!(segment_sse_at_k(&x, 7).unwrap(), 0.0);
    let c = DMatrix::from_element(10, 3, 2.5);
    let seg = dp_segment(&c, 3, Execution::Sequential).unwrap();
    assert_eq!(seg.sse(0), 0.0);
    assert!(seg.breakpoints(0).is_empty());
    assert!(dp_segment(&c, 10, Execution::Sequential).is_err());
}

#[test]
fn step_with_noise_selects_one_break() {
    let t = 120;
    let noise = gaussian_vector(&mut trial_rng(7, 0), t * 2, 0.1);
    let x = DMatrix::from_fn(t, 2, |i, c| if i >= 50 { 1.0 } else { 0.0 } + noise[c * t + i]);
    let seg = dp_segment(&x, 12, Execution::default()).unwrap();
    assert_eq!(seg.breakpoints(1), &[50]);
    assert_eq!(elbow_select(&seg.cost_path, ElbowRule::MaxSecondDifference).unwrap(), 1);
}

#[test]
fn geometric_path_ties_to_one() {
    let path: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k)).collect();
    assert_eq!(elbow_select(&path, ElbowRule::MaxSecondDifference).unwrap(), 1);
}

#[test]
fn parallel_and_sequential_agree() {
    let x = random_matrix(60, 4, 3);
    let a = dp_segment(&x, 8, Execution::Parallel).unwrap();
    let b = dp_segment(&x, 8, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_input_with_dates() {
    let text = "date,a,b\n2020-01-31,1,2\n2020-02-29,1,2\n2020-03-31,5,6\n2020-04-30,5,6\n";
    let s = read_series_csv(text.as_bytes()).unwrap();
    assert_eq!(s.columns, ["a", "b"]);
    assert_eq!(s.labels.as_ref().unwrap().len(), 4);
    let seg = dp_segment(&s.data, 2, Execution::Sequential).unwrap();
    assert_eq!(seg.breakpoints(1), &[2]);
    let z = standardize(&s.data);
    for c in 0..2 {
        assert!(z.column(c).mean().abs() < 1e-15);
        assert!((z.column(c).norm_squared() / 3.0 - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_path_is_non_increasing(seed in 0u64..10_000, t in 4usize..30, d in 1usize..4) {
        let x = random_matrix(t, d, seed);
        let seg = dp_segment(&x, (t - 1).min(6), Execution::Sequential).unwrap();
        for w in seg.cost_path.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0));
        }
        for k in 0..=seg.k_max {
            let b = seg.breakpoints(k);
            prop_assert_eq!(b.len(), k);
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(b.iter().all(|&s| s > 0 && s < t));
        }
    }

    #[test]
    fn invariant_to_column_order_and_shift(seed in 0u64..10_000, t in 4usize..25, shift in -1e3f64..1e3) {
        let x = random_matrix(t, 3, seed);
        let k_max = (t - 1).min(4);
        let base = dp_segment(&x, k_max, Execution::Sequential).unwrap();
        let swapped = DMatrix::from_fn(t, 3, |i, c| x[(i, 2 - c)]);
        let moved = x.add_scalar(shift);
        for other in [swapped, moved] {
            let s = dp_segment(&other, k_max, Execution::Sequential).unwrap();
            for k in 0..=k_max {
                let tol = 1e-9 * base.sse(k).max(1.0);
                prop_assert!((s.sse(k) - base.sse(k)).abs() <= tol);
                // Equal-cost placements may differ only if their costs agree.
                prop_assert!((sse_of(&x, s.breakpoints(k)) - base.sse(k)).abs() <= tol);
            }
        }
    }
}
