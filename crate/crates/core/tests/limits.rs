use idsim::limits::*;
use idsim::mlfrac::sample_positive_stable;
use idsim::rng::{derive, stream};
use idsim::stable::{sample_sas, SeriesBudget};
use idsim::stats::*;
use proptest::prelude::*;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use statrs::function::beta::beta;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

fn y_paths(p: &YParams, grid: &[f64], j: usize, n: u64, seed: u64) -> Vec<Vec<f64>> {
    let b = SeriesBudget::new(j).unwrap().with_residual(true);
    (0..n)
        .into_par_iter()
        .map(|i| sample_y(p, grid, &b, &mut derive(seed, &[i])).unwrap().values)
        .collect()
}

fn column(paths: &[Vec<f64>], k: usize) -> Vec<f64> {
    paths.iter().map(|v| v[k]).collect()
}

#[test]
fn bm_ml_zero_sigma() {
    let mut rng = stream(500, 0);
    let p = sample_bm_ml(0.5, 0.0, &[0.0, 0.3, 1.0, 2.0], &mut rng).unwrap();
    assert!(p.values.iter().all(|&v| v == 0.0));
    assert!(sample_bm_ml(0.5, -1.0, &[0.0, 1.0], &mut rng).is_err());
}

#[test]
fn bm_ml_beta_one_is_brownian() {
    let mut rng = stream(501, 0);
    let (s, t) = (0.7, 2.0);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| sample_bm_ml(1.0, s, &[0.0, t], &mut rng).unwrap().values[1])
        .collect();
    let sd = s * t.sqrt();
    let d = ks_one_sample(&xs, |x| 0.5 * (1.0 + erf(x / (sd * 2f64.sqrt()))));
    assert!(d < 0.01, "{d}");
}

#[test]
fn bm_ml_unit_variance_identity() {
    // E[Γ(β+1) σ² B(M(1))²] = Γ(β+1) σ² E M(1) = σ².
    let mut rng = stream(502, 0);
    let s = 1.3;
    let xs: Vec<f64> = (0..100_000)
        .map(|_| sample_bm_ml(0.4, s, &[0.0, 1.0], &mut rng).unwrap().values[1].powi(2))
        .collect();
    let (m, _) = mean_stderr(&xs);
    assert!((m / (s * s) - 1.0).abs() < 0.03, "{m}");
}

#[test]
fn entrance_time_law() {
    let mut rng = stream(503, 0);
    let (b, l) = (0.5, 2.0);
    let ts: Vec<f64> = (0..100_000).map(|_| sample_entrance_time(b, l, &mut rng)).collect();
    let d = ks_one_sample(&ts, |x| (x / l).clamp(0.0, 1.0).powf(1.0 - b));
    assert!(d < 0.01, "{d}");
    assert!((0..1000).all(|_| sample_entrance_time(1.0, l, &mut rng) == 0.0));
}

#[test]
fn entrance_limit_flat_before_entrance() {
    let mut rng = stream(504, 0);
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    for _ in 0..2000 {
        let (t0, p) = entrance_limit_parts(0.6, 1.0, 2.0, &grid, &mut rng).unwrap();
        for (&t, &v) in grid.iter().zip(&p.values) {
            if t <= t0 {
                assert_eq!(v, 0.0);
            }
        }
    }
    assert!(sample_entrance_limit(0.6, 1.0, 0.0, &grid, &mut rng).is_err());
    let p = sample_entrance_limit(1.0, 1.0, 1.0, &[0.0, 1.0], &mut rng).unwrap();
    assert!(p.values[1] != 0.0);
}

#[test]
fn y_rejects_gamma_not_above_alpha() {
    assert!(YParams::new(1.5, 0.5, 1.5).is_err());
    assert!(YParams::new(1.5, 0.5, 1.4).is_err());
}

#[test]
fn y_beta_one_sub_stable() {
    let (a, g) = (1.2, 1.6);
    let p = YParams::new(a, 1.0, g).unwrap();
    let y: Vec<f64> = column(&y_paths(&p, &[0.0, 1.0], 10, 10_000, 505), 1);
    // W = c^{γ/α} S_{α/γ} with c = E|S_γ(1)|^α, drawn here from the closed form.
    let c = 2f64.powf(a) * gamma((1.0 + a) / 2.0) * gamma(1.0 - a / g) / (gamma(1.0 - a / 2.0) * std::f64::consts::PI.sqrt());
    let mut rng = stream(505, 1);
    let direct: Vec<f64> = (0..100_000)
        .map(|_| {
            let w = c.powf(g / a) * sample_positive_stable(a / g, &mut rng);
            w.powf(1.0 / g) * sample_sas(g, 1.0, &mut rng).unwrap()
        })
        .collect();
    let d = ks_two_sample(&y, &direct);
    assert!(d < 0.02, "{d}");
}

#[test]
fn y_beta_one_gaussian_driver_cf() {
    // γ = 2: CF of Y(1) is exp(-|θ|^α E|N|^α).
    let a = 0.8;
    let p = YParams::new(a, 1.0, 2.0).unwrap();
    let y = column(&y_paths(&p, &[0.0, 1.0], 10, 50_000, 506), 1);
    let e = 2f64.powf(a / 2.0) * gamma((1.0 + a) / 2.0) / std::f64::consts::PI.sqrt();
    let d = cf_discrepancy_exact(&y, |t| ((-e * t.abs().powf(a)).exp(), 0.0), &theta_grid());
    assert!(d < 0.015, "{d}");
}

#[test]
fn y_beta_zero_is_stable_levy_motion() {
    let (a, g) = (0.8, 2.0);
    let p = YParams::new(a, 0.0, g).unwrap();
    let paths = y_paths(&p, &[0.0, 1.0, 2.0, 3.0], 400, 50_000, 507);
    // Scale^α = E|S_γ(1)|^α E[E^{α/γ}] by direct simulation.
    let mut rng = stream(507, 1);
    let m: Vec<f64> = (0..400_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = Exp1.sample(&mut rng);
            z.abs().powf(a) * e.powf(a / g)
        })
        .collect();
    let scale = mean_stderr(&m).0.powf(1.0 / a);
    let reference: Vec<f64> = (0..200_000).map(|_| sample_sas(a, scale, &mut rng).unwrap()).collect();
    let y1 = column(&paths, 1);
    let d = ks_two_sample(&y1, &reference);
    assert!(d < 0.02, "{d}");
    let i2: Vec<f64> = paths.iter().map(|v| v[2] - v[1]).collect();
    let i3: Vec<f64> = paths.iter().map(|v| v[3] - v[2]).collect();
    assert!(ks_two_sample(&y1, &i2) < 0.02);
    assert!(ks_two_sample(&i2, &i3) < 0.02);
    let pairs: Vec<(f64, f64)> = y1.iter().copied().zip(i2.iter().copied()).take(5000).collect();
    let pv = pair_independence_pvalue(&pairs, 499, &mut rng);
    assert!(pv > 0.01, "{pv}");
}

#[test]
fn analytic_cf_single_time_closed_form() {
    for &(a, b, g) in &[(0.8, 0.5, 2.0), (1.2, 0.3, 1.6)] {
        let p = YParams::new(a, b, g).unwrap();
        let mut rng = stream(508, 0);
        let (e, _) = analytic_cf_exponent_y(&p, &[1.0], &[1.0], &CfQuadrature::default(), &mut rng).unwrap();
        // Fubini: E|S(M(1-x))|^α = E|S(1)|^α E M(1-x)^{α/γ}, then a Beta integral in x.
        let r = a / g;
        let exact = driver_abs_moment(g, a) * gamma(1.0 + r) / gamma(1.0 + r * b) * (1.0 - b) * beta(1.0 - b, 1.0 + r * b);
        assert!((e / exact - 1.0).abs() < 0.02, "{e} vs {exact}");
        // |θ|^α scaling in a single coordinate.
        let (e2, _) = analytic_cf_exponent_y(&p, &[1.0], &[2.0], &CfQuadrature::default(), &mut stream(508, 0)).unwrap();
        assert!((e2 / e - 2f64.powf(a)).abs() < 1e-9);
    }
}

#[test]
fn analytic_cf_is_even() {
    let p = YParams::new(1.2, 0.5, 1.6).unwrap();
    let q = CfQuadrature { inner: 500, ..Default::default() };
    let a = analytic_cf_y(&p, &[0.5, 1.0], &[0.7, -1.1], &q, &mut stream(509, 0)).unwrap();
    let b = analytic_cf_y(&p, &[0.5, 1.0], &[-0.7, 1.1], &q, &mut stream(509, 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn analytic_cf_reports_precision() {
    let p = YParams::new(1.2, 0.5, 1.6).unwrap();
    let q = CfQuadrature { inner: 4, rtol: 1e-6, ..Default::default() };
    let r = analytic_cf_y(&p, &[1.0], &[1.0], &q, &mut stream(510, 0));
    assert!(matches!(r, Err(idsim::Error::Precision { .. })));
    assert!(analytic_cf_y(&YParams::new(1.2, 1.0, 1.6).unwrap(), &[1.0], &[1.0], &q, &mut stream(510, 0)).is_err());
}

#[test]
fn sampler_agrees_with_analytic_cf() {
    let p = YParams::new(0.8, 0.5, 2.0).unwrap();
    let grid = [0.0, 0.5, 1.0, 2.0];
    let paths = y_paths(&p, &grid, 300, 40_000, 511);
    let points: [(&[usize], &[f64]); 5] = [
        (&[2], &[1.0]),
        (&[3], &[0.5]),
        (&[1, 2], &[1.0, -1.0]),
        (&[2, 3], &[0.5, 0.5]),
        (&[1, 3], &[-0.8, 0.3]),
    ];
    let q = CfQuadrature { inner: 20_000, ..Default::default() };
    for (k, (idx, th)) in points.iter().enumerate() {
        let lin: Vec<f64> = paths.iter().map(|v| idx.iter().zip(*th).map(|(&i, t)| t * v[i]).sum()).collect();
        let (re, _) = ecf(&lin, 1.0);
        let se = ecf_stderr(&lin, 1.0);
        let times: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        let (e, ese) = analytic_cf_exponent_y(&p, &times, th, &q, &mut stream(511, 1 + k as u64)).unwrap();
        let cf = (-e).exp();
        let tol = 3.0 * (se * se + (cf * ese).powi(2)).sqrt();
        assert!((re - cf).abs() < tol, "point {k}: {re} vs {cf} (tol {tol})");
    }
}

fn sssi_check(a: f64, b: f64, g: f64, seed: u64) {
    let p = YParams::new(a, b, g).unwrap();
    let grid = [0.0, 0.5, 1.0, 1.5, 2.0];
    let paths = y_paths(&p, &grid, 200, 20_000, seed);
    let th = theta_grid();
    let h = p.hurst();
    for (c, lo, hi) in [(2.0f64, 2, 4), (4.0, 1, 4)] {
        let scaled: Vec<f64> = column(&paths, lo).iter().map(|x| c.powf(h) * x).collect();
        let d = cf_discrepancy(&column(&paths, hi), &scaled, &th);
        assert!(d < 0.03, "self-similarity c = {c}: {d}");
    }
    let base = column(&paths, 2);
    for s in [1usize, 2] {
        let inc: Vec<f64> = paths.iter().map(|v| v[s + 2] - v[s]).collect();
        let d = cf_discrepancy(&base, &inc, &th);
        assert!(d < 0.03, "increments shifted by {}: {d}", s as f64 * 0.5);
    }
    let cols: Vec<Vec<f64>> = (1..=4).map(|k| column(&paths, k)).collect();
    let hh = hurst_estimate(&grid[1..], &cols, a / 2.0);
    assert!((hh - h).abs() < 0.05, "H {hh} vs {h}");
}

#[test]
fn sssi_gaussian_driver() {
    sssi_check(0.8, 0.5, 2.0, 512);
}

#[test]
fn sssi_stable_driver() {
    sssi_check(1.2, 0.5, 1.6, 513);
}

#[test]
fn increment_dependence_is_bounded() {
    let p = YParams::new(1.2, 0.5, 1.6).unwrap();
    let grid: Vec<f64> = (0..=9).map(|i| i as f64).collect();
    let b = SeriesBudget::new(100).unwrap().with_residual(true);
    let paths: Vec<_> = (0..4000u64).map(|i| sample_y(&p, &grid, &b, &mut derive(514, &[i])).unwrap()).collect();
    let dep = increment_dependence(&paths, &[1, 2, 4, 8, 20], 1.0);
    assert_eq!(dep.len(), 4);
    assert!(dep.iter().all(|&(_, v)| (0.0..=2.0).contains(&v)));
}

#[test]
fn csv_outputs() {
    let mut rng = stream(515, 0);
    let p = sample_bm_ml(0.5, 1.0, &[0.0, 0.5, 1.0], &mut rng).unwrap();
    let mut buf = Vec::new();
    write_paths_csv(&[p.clone(), p], &mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("t,value,replicate\n"));
    assert_eq!(s.lines().count(), 7);
    let mut buf = Vec::new();
    let row = CfRow { thetas: vec![0.5, -1.0], re: 0.9, im: 0.0, stderr: 0.01 };
    write_cf_csv(&[row], &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("theta_1,theta_2,re,im,stderr\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bm_ml_linear_in_sigma(seed in any::<u64>(), s in 0.1f64..5.0) {
        let grid = [0.0, 0.2, 0.9, 1.7];
        let a = sample_bm_ml(0.3, 1.0, &grid, &mut stream(seed, 0)).unwrap();
        let b = sample_bm_ml(0.3, s, &grid, &mut stream(seed, 0)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((s * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn y_paths_finite(seed in any::<u64>(), a in 0.3f64..1.9, b in 0.0f64..1.0) {
        let g = (a + 0.05).max(a + (2.0 - a) / 2.0);
        let p = YParams::new(a, b, g).unwrap();
        let bud = SeriesBudget::new(30).unwrap().with_residual(true);
        let y = sample_y(&p, &[0.0, 0.4, 1.3], &bud, &mut stream(seed, 0)).unwrap();
        prop_assert_eq!(y.values[0], 0.0);
        prop_assert!(y.values.iter().all(|v| v.is_finite()));
    }
}
