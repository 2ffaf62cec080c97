use idsim::rng::stream;
use idsim::stable::*;
use idsim::stats::{cf_discrepancy_exact, ecf, theta_grid};
use proptest::prelude::*;
use rand::Rng as _;

fn sas_sample(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| sample_sas(alpha, 1.0, &mut rng).unwrap()).collect()
}

#[test]
fn sas_characteristic_function() {
    for (i, &a) in [0.7, 1.0, 1.5].iter().enumerate() {
        let xs = sas_sample(a, 100_000, 300 + i as u64);
        for &th in &[0.5f64, 1.0, 2.0] {
            let (re, im) = ecf(&xs, th);
            let exact = (-th.powf(a)).exp();
            assert!(((re - exact).powi(2) + im * im).sqrt() < 0.01, "alpha {a} theta {th}: {re}");
        }
    }
}

#[test]
fn sas_gaussian_endpoint() {
    let xs = sas_sample(2.0, 100_000, 310);
    let d = cf_discrepancy_exact(&xs, |t| ((-t * t).exp(), 0.0), &theta_grid());
    assert!(d < 0.01, "{d}");
}

#[test]
fn sas_sign_balance() {
    let xs = sas_sample(1.2, 100_000, 311);
    let pos = xs.iter().filter(|&&x| x > 0.0).count() as f64 / xs.len() as f64;
    assert!((pos - 0.5).abs() < 0.005, "{pos}");
}

#[test]
fn sas_tail_matches_constant() {
    for (i, &a) in [0.7, 1.0, 1.5].iter().enumerate() {
        let xs = sas_sample(a, 1_000_000, 320 + i as u64);
        for &lam in &[5.0f64, 10.0, 20.0] {
            let p = xs.iter().filter(|x| x.abs() > lam).count() as f64 / xs.len() as f64;
            let ratio = p / (tail_constant(a) * lam.powf(-a));
            assert!((0.8..=1.2).contains(&ratio), "alpha {a} lambda {lam}: {ratio}");
        }
    }
}

#[test]
fn sas_abs_moment_matches_simulation() {
    let xs = sas_sample(1.5, 200_000, 330);
    let p = 0.6;
    let m = xs.iter().map(|x| x.abs().powf(p)).sum::<f64>() / xs.len() as f64;
    assert!((m / sas_abs_moment(1.5, p) - 1.0).abs() < 0.02, "{m}");
}

#[test]
fn tail_constant_at_half() {
    assert!((tail_constant(0.5) - 0.7979).abs() < 1e-4);
}

#[test]
fn tail_inverse_examples() {
    let s = LevyTailSpec::pure_stable(0.5).unwrap();
    assert_eq!(levy_tail_inverse(&s, 16.0), 1.0 / 256.0);
    let p = LevyTailSpec::pareto_cutoff(1.3).unwrap();
    for &y in &[1.0, 1.5, 100.0] {
        assert_eq!(levy_tail_inverse(&p, y), 0.0);
    }
    assert!((levy_tail_inverse(&p, 0.25) - 0.25f64.powf(-1.0 / 1.3)).abs() < 1e-12);
}

#[test]
fn tail_inverse_monotone_scan() {
    let specs = [
        LevyTailSpec::pure_stable(0.8).unwrap(),
        LevyTailSpec::pareto_cutoff(1.4).unwrap(),
        LevyTailSpec::user_defined(1.1, 1.5, |x: f64| (-x).exp() / x.powf(0.5) + x.powf(-1.1).min(1.0)).unwrap(),
    ];
    for s in &specs {
        let mut prev = f64::INFINITY;
        for k in 0..1000 {
            let y = 10f64.powf(-4.0 + 8.0 * k as f64 / 999.0);
            let x = levy_tail_inverse(s, y);
            assert!(x <= prev, "{:?} at y = {y}", s.kind());
            prev = x;
        }
    }
}

#[test]
fn bisection_matches_closed_form() {
    let a = 0.9;
    let u = LevyTailSpec::user_defined(a, 1.5, move |x: f64| x.powf(-a)).unwrap();
    for &y in &[1e-3, 0.3, 2.0, 50.0] {
        let x = levy_tail_inverse(&u, y);
        assert!((x / y.powf(-1.0 / a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn user_defined_validation() {
    assert!(LevyTailSpec::user_defined(1.0, 1.5, |x: f64| x).is_err());
    // x^{p0} x^{-α} blows up at 0 when p0 < α.
    assert!(LevyTailSpec::user_defined(1.5, 1.0, |x: f64| x.powf(-1.5)).is_err());
    assert!(LevyTailSpec::user_defined(1.5, 1.8, |x: f64| x.powf(-1.5)).is_ok());
}

#[test]
fn inverse_regular_variation_constant() {
    let s = LevyTailSpec::pure_stable(1.3).unwrap();
    for &y in &[1e-6, 1e-2, 1.0, 1e3, 1e8] {
        assert!((levy_tail_inverse(&s, y) * y.powf(1.0 / 1.3) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn lepage_null_integrand() {
    let mut rng = stream(340, 0);
    let b = SeriesBudget::new(100).unwrap();
    let v = lepage_sas_integral(|_: &()| 0.0, |_| (), 2.0, 0.8, &b, &mut rng).unwrap();
    assert_eq!(v, 0.0);
    assert!(lepage_sas_integral(|_: &()| 1.0, |_| (), 0.0, 0.8, &b, &mut rng).is_err());
}

#[test]
fn lepage_indicator_cf() {
    let (alpha, m) = (0.8, 1.5);
    let b = SeriesBudget::new(10_000).unwrap();
    let mut rng = stream(341, 0);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| lepage_sas_integral(|_: &()| 1.0, |_| (), m, alpha, &b, &mut rng).unwrap())
        .collect();
    let d = cf_discrepancy_exact(&xs, |t| ((-m * t.abs().powf(alpha)).exp(), 0.0), &theta_grid());
    assert!(d < 0.02, "{d}");
}

fn lepage_run(alpha: f64, j: usize, residual: bool, n: usize) -> f64 {
    let b = SeriesBudget::new(j).unwrap().with_residual(residual);
    let mut rng = stream(342, 0);
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let mut r = stream(rng.random(), 0);
            lepage_sas_integral(|u: &f64| u.sqrt(), |g| g.random::<f64>(), 2.0, alpha, &b, &mut r).unwrap()
        })
        .collect();
    // E|sqrt(U)|^α = 1/(1 + α/2)
    let s = 2.0 / (1.0 + alpha / 2.0);
    cf_discrepancy_exact(&xs, |t| ((-s * t.abs().powf(alpha)).exp(), 0.0), &theta_grid())
}

#[test]
fn lepage_refinement_reduces_discrepancy() {
    let coarse = lepage_run(1.5, 1_000, false, 20_000);
    let fine = lepage_run(1.5, 10_000, false, 20_000);
    assert!(fine < coarse, "{coarse} -> {fine}");
}

#[test]
fn lepage_residual_corrects_truncation() {
    let d = lepage_run(1.5, 1_000, true, 20_000);
    assert!(d < 0.02, "{d}");
}

#[test]
fn lepage_scaling_is_linear() {
    let b = SeriesBudget::new(500).unwrap();
    for seed in 0..20 {
        let mut r1 = stream(343, seed);
        let mut r2 = stream(343, seed);
        let x = lepage_sas_integral(|u: &f64| u * u, |g| g.random::<f64>(), 1.0, 1.2, &b, &mut r1).unwrap();
        let y = lepage_sas_integral(|u: &f64| 3.0 * u * u, |g| g.random::<f64>(), 1.0, 1.2, &b, &mut r2).unwrap();
        assert!((y - 3.0 * x).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn budget_draw_invariants() {
    let mut rng = stream(344, 0);
    let t = SeriesBudget::new(5000).unwrap().draw(&mut rng);
    assert!(t.arrivals[0] > 0.0);
    assert!(t.arrivals.windows(2).all(|w| w[1] > w[0]));
    let pos = t.signs.iter().filter(|&&s| s > 0.0).count();
    assert!((pos as f64 / 5000.0 - 0.5).abs() < 0.03);
    assert!(SeriesBudget::new(0).is_err());
}

proptest! {
    #[test]
    fn inverse_spot_check(alpha in 0.1f64..1.9, y in 1e-6f64..1e6) {
        for s in [LevyTailSpec::pure_stable(alpha).unwrap(), LevyTailSpec::pareto_cutoff(alpha).unwrap()] {
            let x = levy_tail_inverse(&s, y);
            prop_assert!(s.tail(x) <= y * (1.0 + 1e-12) || x == 0.0 && s.tail(0.0) <= y);
        }
    }

    #[test]
    fn tail_constant_positive(alpha in 0.01f64..1.99) {
        prop_assert!(tail_constant(alpha) > 0.0);
    }

    #[test]
    fn sas_finite(alpha in 0.3f64..2.0, seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        prop_assert!(sample_sas(alpha, 1.0, &mut rng).unwrap().is_finite());
    }
}
