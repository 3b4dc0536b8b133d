use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use warpfi_core::analysis::{
    ci95, classify_coords, classify_geometry, diff, fit, svf, ComparePolicy, Criticality, CriticalKind, DueReason,
    FitParams, GeometryClass, Outcome, DEFAULT_SQUARE_DENSITY,
};
use warpfi_core::numerics::Precision;
use warpfi_core::rng::rng_from_seed;
use warpfi_core::simt::Matrix;

/// Brute force over a dense bitmap: scan every row and column, then the
/// bounding box cell by cell.
fn oracle(rows: usize, cols: usize, set: &[(usize, usize)]) -> GeometryClass {
    let mut grid = vec![vec![false; cols]; rows];
    for &(r, c) in set {
        grid[r][c] = true;
    }
    let total: usize = grid.iter().map(|row| row.iter().filter(|&&x| x).count()).sum();
    if total == 1 {
        return GeometryClass::Single;
    }
    for r in 0..rows {
        if grid[r].iter().filter(|&&x| x).count() == total {
            return GeometryClass::Line;
        }
    }
    for c in 0..cols {
        if (0..rows).filter(|&r| grid[r][c]).count() == total {
            return GeometryClass::Line;
        }
    }
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..rows {
        for c in 0..cols {
            if grid[r][c] {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    let mut inside = 0;
    let mut area = 0;
    for row in &grid[r0..=r1] {
        for &cell in &row[c0..=c1] {
            area += 1;
            inside += usize::from(cell);
        }
    }
    if total >= 4 && 2 * inside >= area {
        GeometryClass::Square
    } else {
        GeometryClass::Random
    }
}

fn random_set(rng: &mut impl Rng) -> (usize, usize, Vec<(usize, usize)>) {
    let rows = rng.gen_range(16..=256);
    let cols = rng.gen_range(16..=256);
    // mix of scattered, clustered and collinear draws
    let style = rng.gen_range(0..4);
    let room = match style {
        2 => cols,
        3 => rows,
        _ => 64,
    };
    let size = rng.gen_range(1..=64.min(room));
    let mut set = std::collections::BTreeSet::new();
    let (br, bc) = (rng.gen_range(0..rows - 8), rng.gen_range(0..cols - 8));
    while set.len() < size {
        let p = match style {
            0 => (rng.gen_range(0..rows), rng.gen_range(0..cols)),
            1 => (br + rng.gen_range(0..8), bc + rng.gen_range(0..8)),
            2 => (br, rng.gen_range(0..cols)),
            _ => (rng.gen_range(0..rows), bc),
        };
        set.insert(p);
    }
    (rows, cols, set.into_iter().collect())
}

#[test]
fn geometry_matches_brute_force_oracle() {
    let mut rng = rng_from_seed(42);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..1000 {
        let (rows, cols, set) = random_set(&mut rng);
        let got = classify_coords(set.iter().copied(), DEFAULT_SQUARE_DENSITY).unwrap();
        assert_eq!(got, oracle(rows, cols, &set), "{set:?}");
        seen.insert(got);
    }
    assert_eq!(seen.len(), 4);
}

#[test]
fn diff_examples() {
    let mut rng = rng_from_seed(1);
    let words: Vec<u32> = (0..64).map(|_| rng.gen()).collect();
    let g = Matrix::from_words(8, 8, Precision::Fp32, words).unwrap();
    assert!(diff(&g, &g, ComparePolicy::Exact).unwrap().is_empty());
    let mut o = g.clone();
    o.set(3, 6, o.get(3, 6) ^ 1);
    let d = diff(&g, &o, ComparePolicy::Exact).unwrap();
    assert_eq!(d.coords().collect::<Vec<_>>(), vec![(3, 6)]);
    assert_eq!(classify_geometry(&d).unwrap(), GeometryClass::Single);
    assert!(diff(&g, &Matrix::zeros(8, 7, Precision::Fp32), ComparePolicy::Exact).is_err());
}

#[test]
fn epsilon_absorbs_one_ulp() {
    let mut rng = rng_from_seed(2);
    let vals: Vec<f32> = (0..100).map(|_| rng.gen_range(0.5f32..1000.0)).collect();
    let g = Matrix::from_words(10, 10, Precision::Fp32, vals.iter().map(|v| v.to_bits()).collect()).unwrap();
    let o = Matrix::from_words(10, 10, Precision::Fp32, vals.iter().map(|v| v.to_bits() + 1).collect()).unwrap();
    // one ulp is at most 2^-23 ≈ 1.19e-7 relative
    assert!(diff(&g, &o, ComparePolicy::Epsilon(1e-6)).unwrap().is_empty());
    assert_eq!(diff(&g, &o, ComparePolicy::Exact).unwrap().len(), 100);
}

/// Wilson bounds as the roots of |p̂ - p| = z·sqrt(p(1-p)/n), by bisection.
fn wilson_bisect(k: u64, n: u64) -> (f64, f64) {
    let z = 1.96;
    let ph = k as f64 / n as f64;
    let g = |p: f64| (ph - p).powi(2) - z * z * p * (1.0 - p) / n as f64;
    let root = |mut a: f64, mut b: f64| {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (g(a) > 0.0) == (g(m) > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let lo = if k == 0 { 0.0 } else { root(0.0, ph) };
    let hi = if k == n { 1.0 } else { root(ph, 1.0) };
    (lo, hi)
}

#[test]
fn wilson_matches_bisection() {
    let (lo, hi) = ci95(50, 100).unwrap();
    assert!((lo - 0.40383).abs() < 1e-5 && (hi - 0.59617).abs() < 1e-5, "{lo} {hi}");
    assert!((lo - 0.402).abs() < 2e-3 && (hi - 0.598).abs() < 2e-3);
    let mut rng = rng_from_seed(3);
    for _ in 0..500 {
        let n = rng.gen_range(1..5000);
        let k = rng.gen_range(0..=n);
        let (lo, hi) = ci95(k, n).unwrap();
        let (olo, ohi) = wilson_bisect(k, n);
        assert!((lo - olo).abs() < 1e-9 && (hi - ohi).abs() < 1e-9, "{k}/{n}");
        let p = k as f64 / n as f64;
        assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}

#[test]
fn fit_linearity() {
    let p = FitParams::new(1e10, 13.0).unwrap();
    assert_eq!(fit(100, &p).unwrap(), 130.0);
    let mut rng = rng_from_seed(4);
    for _ in 0..100 {
        let n = rng.gen_range(0..100_000u64);
        let fluence = 10f64.powf(rng.gen_range(5.0..12.0));
        let flux = rng.gen_range(0.1..1000.0);
        let base = fit(n, &FitParams::new(fluence, flux).unwrap()).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        assert!(rel(fit(2 * n, &FitParams::new(fluence, flux).unwrap()).unwrap(), 2.0 * base));
        assert!(rel(fit(n, &FitParams::new(fluence, 3.0 * flux).unwrap()).unwrap(), 3.0 * base));
        assert!(rel(fit(n, &FitParams::new(2.0 * fluence, flux).unwrap()).unwrap(), base / 2.0));
    }
}

fn outcome_strategy() -> impl Strategy<Value = Outcome> {
    prop_oneof![
        Just(Outcome::Masked),
        (0usize..3).prop_map(|i| Outcome::Due(DueReason::ALL[i])),
        (0usize..4, 0usize..6).prop_map(|(g, c)| Outcome::Sdc {
            geometry: GeometryClass::ALL[g],
            criticality: match c {
                0 => None,
                1 => Some(Criticality::Tolerable),
                k => Some(Criticality::Critical(CriticalKind::ALL[k - 2])),
            },
        }),
    ]
}

proptest! {
    #[test]
    fn stats_are_order_invariant(mut outs in prop::collection::vec(outcome_strategy(), 1..200), seed in any::<u64>()) {
        let a = svf(&outs).unwrap();
        outs.shuffle(&mut rng_from_seed(seed));
        let b = svf(&outs).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.masked + a.sdc + a.due_total(), a.n_injections);
        for (_, f) in a.classes().unwrap() {
            prop_assert!(0.0 <= f.ci_lo && f.ci_lo <= f.fraction && f.fraction <= f.ci_hi && f.ci_hi <= 1.0);
        }
    }

    #[test]
    fn geometry_is_total(set in prop::collection::btree_set((0usize..32, 0usize..32), 1..40)) {
        let g = classify_coords(set.iter().copied(), DEFAULT_SQUARE_DENSITY).unwrap();
        prop_assert_eq!(g, oracle(32, 32, &set.into_iter().collect::<Vec<_>>()));
    }
}

#[test]
fn all_masked_has_zero_svf() {
    let stats = svf(&[Outcome::Masked; 30]).unwrap();
    let f = stats.svf().unwrap();
    assert_eq!((f.fraction, f.ci_lo), (0.0, 0.0));
    assert!(f.ci_hi > 0.0);
}
