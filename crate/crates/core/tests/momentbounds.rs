use idsim::momentbounds::*;
use idsim::rng::stream;
use proptest::prelude::*;
use statrs::function::factorial::factorial;

fn poisson_pmf(l: f64, k: u64) -> f64 {
    (-l).exp() * l.powi(k as i32) / factorial(k)
}

#[test]
fn poisson_moment_series_oracle() {
    let s = PosLevySpec::new("poisson(1)", vec![(1.0, 1.0)], vec![]).unwrap();
    let r = check_pos_bound(&s, 1.5, 1_000_000, &mut stream(700, 0)).unwrap();
    let exact: f64 = (1..80).map(|k| (k as f64).powf(1.5) * poisson_pmf(1.0, k)).sum();
    assert!((r.lhs / exact - 1.0).abs() < 0.02, "{} vs {exact}", r.lhs);
    assert_eq!(r.rhs, 2.0);
    assert!((r.ratio - r.lhs / 2.0).abs() < 1e-15);
}

#[test]
fn symmetrized_poisson_double_series_oracle() {
    let s = SymLevySpec::symmetrized("sym-poisson(1)", &[(1.0, 1.0)], vec![]).unwrap();
    assert_eq!(s.total_mass(), 2.0);
    let r = check_sym_bound(&s, 2.5, 1_000_000, &mut stream(701, 0)).unwrap();
    // Y = N - N' with N, N' independent Poisson(1).
    let mut exact = 0.0;
    for i in 0..60u64 {
        for j in 0..60u64 {
            exact += poisson_pmf(1.0, i) * poisson_pmf(1.0, j) * (i as f64 - j as f64).abs().powf(2.5);
        }
    }
    assert!((r.lhs / exact - 1.0).abs() < 0.02, "{} vs {exact}", r.lhs);
    assert_eq!(r.rhs, 2.0 + 2f64.powf(1.25));
}

#[test]
fn zero_measures() {
    let r = check_pos_bound(&PosLevySpec::zero(), 1.5, 100, &mut stream(702, 0)).unwrap();
    assert_eq!((r.lhs, r.rhs, r.ratio), (0.0, 0.0, 0.0));
    let r = check_sym_bound(&SymLevySpec::zero(), 3.0, 100, &mut stream(702, 1)).unwrap();
    assert_eq!((r.lhs, r.rhs, r.ratio), (0.0, 0.0, 0.0));
}

#[test]
fn range_of_p_is_enforced() {
    let s = PosLevySpec::new("a", vec![(1.0, 1.0)], vec![]).unwrap();
    assert!(check_pos_bound(&s, 2.0, 100, &mut stream(703, 0)).is_err());
    let y = SymLevySpec::symmetrized("a", &[(1.0, 1.0)], vec![]).unwrap();
    assert!(check_sym_bound(&y, 1.5, 100, &mut stream(703, 0)).is_err());
    assert!(check_sym_bound(&y, 4.0, 100, &mut stream(703, 0)).is_err());
}

#[test]
fn infinite_moment_holds_trivially() {
    let q = ParetoPiece::new(1.0, 1.3, 1.0, f64::INFINITY).unwrap();
    let s = PosLevySpec::new("heavy", vec![], vec![q]).unwrap();
    let r = check_pos_bound(&s, 1.5, 100, &mut stream(704, 0)).unwrap();
    assert!(r.trivially_holds());
    // No first moment: not a valid positive spec.
    let q = ParetoPiece::new(1.0, 0.9, 1.0, f64::INFINITY).unwrap();
    assert!(PosLevySpec::new("heavier", vec![], vec![q]).is_err());
}

#[test]
fn reflection_leaves_lhs_unchanged() {
    let q = ParetoPiece::new(0.5, 3.0, 1.0, f64::INFINITY).unwrap();
    let s = SymLevySpec::new("mixed", vec![(1.0, 0.4), (-1.0, 0.4), (3.0, 0.1), (-3.0, 0.1)], vec![q]).unwrap();
    let a = check_sym_bound(&s, 2.5, 20_000, &mut stream(705, 0)).unwrap();
    let b = check_sym_bound(&s.reflected(), 2.5, 20_000, &mut stream(705, 0)).unwrap();
    assert_eq!(a.lhs, b.lhs);
    assert_eq!(a.rhs, b.rhs);
}

#[test]
fn scaling_family_has_constant_ratio() {
    let (cal, _) = standard_pos_families();
    for s in &cal[..4] {
        let base = check_pos_bound(s, 1.5, 20_000, &mut stream(706, 0)).unwrap();
        for c in [0.1, 3.0, 50.0] {
            let r = check_pos_bound(&s.scaled(c), 1.5, 20_000, &mut stream(706, 0)).unwrap();
            assert!((r.lhs / (c.powf(1.5) * base.lhs) - 1.0).abs() < 1e-12);
            assert!(r.rhs >= c.min(c.powf(1.5)) * base.rhs * (1.0 - 1e-12));
            assert!(r.rhs <= c.max(c.powf(1.5)) * base.rhs * (1.0 + 1e-12));
            assert!((r.ratio / base.ratio - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn calibration_and_holdout_positive() {
    let (cal, hold) = standard_pos_families();
    let c = calibrate_cp(&cal, 1.5, 200_000, &mut stream(707, 0)).unwrap();
    assert!(c.max_ratio.is_finite() && c.max_ratio > 0.0);
    assert!(c.checks.iter().all(|r| r.ratio <= c.max_ratio));
    let h = check_holdout(&c, &hold, 200_000, &mut stream(707, 1)).unwrap();
    assert!(h.violations.is_empty(), "{:?}", h.excess_z);
    assert!(calibrate_cp(&cal[..9], 1.5, 1000, &mut stream(707, 2)).is_err());
}

#[test]
fn calibration_and_holdout_symmetric() {
    let (cal, hold) = standard_sym_families();
    let c = calibrate_cp(&cal, 2.5, 200_000, &mut stream(708, 0)).unwrap();
    let h = check_holdout(&c, &hold, 200_000, &mut stream(708, 1)).unwrap();
    assert!(h.violations.is_empty(), "{:?}", h.excess_z);
}

#[test]
fn calibration_stable_under_doubling() {
    let (cal, _) = standard_sym_families();
    let a = calibrate_cp(&cal, 3.0, 100_000, &mut stream(709, 0)).unwrap();
    let b = calibrate_cp(&cal, 3.0, 200_000, &mut stream(709, 1)).unwrap();
    let se = (a.max_stderr.powi(2) + b.max_stderr.powi(2)).sqrt();
    assert!((a.max_ratio - b.max_ratio).abs() < 4.0 * se.max(0.01 * a.max_ratio), "{} vs {}", a.max_ratio, b.max_ratio);
}

#[test]
fn holdout_violation_is_reported() {
    let (cal, _) = standard_pos_families();
    let c = calibrate_cp(&cal, 1.5, 20_000, &mut stream(710, 0)).unwrap();
    let fake = Calibration { max_ratio: 0.1 * c.max_ratio, ..c };
    let h = check_holdout(&fake, &cal[..2], 20_000, &mut stream(710, 1)).unwrap();
    assert_eq!(h.violations, vec![0, 1]);
}

#[test]
fn truncations_stabilize() {
    let rows = truncation_study(1.0, 2.0, &[1, 4, 16], 2.5, 200_000, &mut stream(711, 0)).unwrap();
    let l: Vec<f64> = rows.iter().map(|(_, r)| r.lhs).collect();
    let r: Vec<f64> = rows.iter().map(|(_, r)| r.rhs).collect();
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
    assert!((l[2] - l[1]).abs() < (l[1] - l[0]).abs(), "{l:?}");
    assert!(rows.iter().all(|(_, c)| c.ratio.is_finite() && c.ratio > 0.0));
}

#[test]
fn mz_ratio_is_bounded() {
    let (cal, hold) = standard_sym_families();
    let mut rng = stream(712, 0);
    let ratios: Vec<f64> = cal.iter().map(|s| mz_check(s, 2.5, 50_000, &mut rng).unwrap().ratio).collect();
    let top = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(top.is_finite() && top < 3.0, "{ratios:?}");
    for s in &hold {
        let r = mz_check(s, 2.5, 50_000, &mut rng).unwrap();
        assert!(r.ratio < top + 2.0 * r.ratio_stderr + 0.05, "{}: {}", r.spec_id, r.ratio);
    }
}

#[test]
fn ratio_csv() {
    let (cal, _) = standard_pos_families();
    let c = calibrate_cp(&cal, 1.5, 1000, &mut stream(713, 0)).unwrap();
    let mut buf = Vec::new();
    write_ratio_csv(&c.checks, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("spec-id,p,lhs,rhs,ratio,stderr\n"));
    assert_eq!(text.lines().count(), 11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ratios_are_finite(y in 0.01f64..100.0, m in 0.01f64..20.0, seed in any::<u64>()) {
        let s = PosLevySpec::new("a", vec![(y, m)], vec![]).unwrap();
        let r = check_pos_bound(&s, 1.5, 2000, &mut stream(seed, 0)).unwrap();
        prop_assert!(r.ratio.is_finite() && r.ratio >= 0.0);
        let t = SymLevySpec::symmetrized("b", &[(y, m)], vec![]).unwrap();
        let r = check_sym_bound(&t, 3.0, 2000, &mut stream(seed, 1)).unwrap();
        prop_assert!(r.ratio.is_finite() && r.ratio >= 0.0);
    }
}
