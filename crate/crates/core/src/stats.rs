//! Statistical comparison tools shared by the experiment drivers.

use rand::seq::SliceRandom;
use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::Rng;

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        d.max(lo).max(hi)
    })
}

/// Two-sample Kolmogorov-Smirnov statistic, exact under ties.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let a = sorted(xs);
    let b = sorted(ys);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Empirical CDF of `xs` evaluated at `t`.
pub fn ecdf(xs: &[f64], t: f64) -> f64 {
    xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64
}

/// Empirical characteristic function `(re, im)` at `theta`.
pub fn ecf(xs: &[f64], theta: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let (c, s) = xs.iter().fold((0.0, 0.0), |(c, s), &x| {
        let (si, co) = (theta * x).sin_cos();
        (c + co, s + si)
    });
    (c / n, s / n)
}

/// Standard error of the empirical CF at `theta`, combining the real and
/// imaginary parts.
pub fn ecf_stderr(xs: &[f64], theta: f64) -> f64 {
    let n = xs.len() as f64;
    let (re, im) = ecf(xs, theta);
    let (vc, vs) = xs.iter().fold((0.0, 0.0), |(vc, vs), &x| {
        let (si, co) = (theta * x).sin_cos();
        (vc + (co - re).powi(2), vs + (si - im).powi(2))
    });
    ((vc + vs) / (n - 1.0) / n).sqrt()
}

/// Evenly spaced grid of `m` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect()
}

/// The default comparison grid for characteristic functions: 61 points on [-3, 3].
pub fn theta_grid() -> Vec<f64> {
    linspace(-3.0, 3.0, 61)
}

/// Maximum modulus difference between two empirical characteristic functions.
pub fn cf_discrepancy(xs: &[f64], ys: &[f64], thetas: &[f64]) -> f64 {
    thetas.iter().fold(0.0_f64, |d, &t| {
        let (a, b) = (ecf(xs, t), ecf(ys, t));
        d.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
    })
}

/// Maximum modulus difference between an empirical and an exact CF.
pub fn cf_discrepancy_exact(
    xs: &[f64],
    cf: impl Fn(f64) -> (f64, f64),
    thetas: &[f64],
) -> f64 {
    thetas.iter().fold(0.0_f64, |d, &t| {
        let (a, b) = (ecf(xs, t), cf(t));
        d.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
    })
}

/// Ordinary least squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LineFit {
        intercept,
        slope,
        slope_stderr,
    }
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Logarithmically spaced integers between `lo` and `hi` (inclusive, deduplicated).
pub fn log_spaced(lo: usize, hi: usize, m: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<usize> = (0..m)
        .map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp().round() as usize)
        .collect();
    v.dedup();
    v
}

/// Pearson chi-square goodness-of-fit p-value for observed counts against
/// expected probabilities. Cells with small expectation are pooled from the
/// right until every cell expects at least five observations.
pub fn chi_square_pvalue(counts: &[u64], probs: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum::<u64>() as f64;
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o_acc += c as f64;
        e_acc += p * n;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
            *o += o_acc;
            *e += e_acc;
        } else {
            obs.push(o_acc);
            exp.push(e_acc);
        }
    }
    if obs.len() < 2 {
        return 1.0;
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (obs.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

fn lag1_corr(x: &[f64]) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let v: f64 = x.iter().map(|a| (a - m).powi(2)).sum();
    if v == 0.0 {
        return 0.0;
    }
    let c: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    c / v
}

/// Permutation test of serial independence for a sequence of pairs.
///
/// The statistic is the sum of absolute lag-one autocorrelations of both
/// coordinates plus the absolute lag-one cross-correlation; its null
/// distribution is obtained by jointly permuting the pairs.
pub fn pair_independence_pvalue(pairs: &[(f64, f64)], perms: usize, rng: &mut Rng) -> f64 {
    let stat = |p: &[(f64, f64)]| {
        let a: Vec<f64> = p.iter().map(|q| q.0).collect();
        let b: Vec<f64> = p.iter().map(|q| q.1).collect();
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let sa = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt();
        let sb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>().sqrt();
        let cc = if sa > 0.0 && sb > 0.0 {
            p.windows(2)
                .map(|w| (w[0].0 - ma) * (w[1].1 - mb))
                .sum::<f64>()
                / (sa * sb)
        } else {
            0.0
        };
        lag1_corr(&a).abs() + lag1_corr(&b).abs() + cc.abs()
    };
    let observed = stat(pairs);
    let mut work = pairs.to_vec();
    let mut exceed = 0usize;
    for _ in 0..perms {
        work.shuffle(rng);
        if stat(&work) >= observed {
            exceed += 1;
        }
    }
    (exceed as f64 + 1.0) / (perms as f64 + 1.0)
}

/// Sign-flip symmetry test: compares the sample with its negation through
/// the two-sample KS statistic and a permutation null built by random sign
/// assignments.
pub fn sign_symmetry_pvalue(xs: &[f64], perms: usize, rng: &mut Rng) -> f64 {
    let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
    let observed = ks_two_sample(xs, &neg);
    let mut exceed = 0usize;
    let mut w = xs.to_vec();
    for _ in 0..perms {
        for (wi, &x) in w.iter_mut().zip(xs) {
            *wi = if rng.random::<bool>() { x } else { -x };
        }
        let wn: Vec<f64> = w.iter().map(|x| -x).collect();
        if ks_two_sample(&w, &wn) >= observed {
            exceed += 1;
        }
    }
    (exceed as f64 + 1.0) / (perms as f64 + 1.0)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..m {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]` split into `panels`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(mid + 0.5 * h * xi);
        }
    }
    s * 0.5 * h
}
