//! Limit processes: Brownian motion run on Mittag-Leffler time, its
//! entrance-time variant, and the self-similar class `Y_{α,β,γ}`.
//!
//! Inside `Y` the driving process `S_γ` is a unit-scale symmetric γ-stable
//! Lévy motion (`E e^{iθS(t)} = e^{-t|θ|^γ}`) for `γ < 2` and a standard
//! Brownian motion for `γ = 2`.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::gamma;

use crate::error::{param, Error, Result};
use crate::mlfrac::{ml_at_levels, open01, sample_positive_stable, validate_grid, SamplePath};
use crate::rng::{derive, Rng};
use crate::stable::{sas, sas_abs_moment, tail_constant, tail_power_sum, SeriesBudget};
use crate::stats::{ecf, gauss_legendre, loglog_slope};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl YParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(param("alpha", format!("{alpha} not in (0, 2)")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(param("beta", format!("{beta} not in [0, 1]")));
        }
        if !(gamma > alpha && gamma <= 2.0) {
            return Err(param("gamma", format!("{gamma} not in (alpha, 2] = ({alpha}, 2]")));
        }
        Ok(YParams { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `H = β/γ + (1-β)/α`.
    pub fn hurst(&self) -> f64 {
        self.beta / self.gamma + (1.0 - self.beta) / self.alpha
    }
}

/// `E|S_γ(1)|^p` for the driving process.
pub fn driver_abs_moment(gamma: f64, p: f64) -> f64 {
    if gamma == 2.0 {
        2f64.powf(p / 2.0) * self::gamma((1.0 + p) / 2.0) / PI.sqrt()
    } else {
        sas_abs_moment(gamma, p)
    }
}

/// `k` in `E e^{iθS_γ(t)} = e^{-k t |θ|^γ}`.
fn driver_cf_const(gamma: f64) -> f64 {
    if gamma == 2.0 {
        0.5
    } else {
        1.0
    }
}

fn driver_increment(gamma: f64, dt: f64, rng: &mut Rng) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    if gamma == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        dt.sqrt() * z
    } else {
        sas(gamma, dt.powf(1.0 / gamma), rng)
    }
}

/// The driving process at nondecreasing times, by independent increments.
fn driver_at(gamma: f64, times: &[f64], rng: &mut Rng) -> Vec<f64> {
    let (mut prev, mut s) = (0.0, 0.0);
    times
        .iter()
        .map(|&t| {
            s += driver_increment(gamma, t - prev, rng);
            prev = t;
            s
        })
        .collect()
}

/// Positive strictly `(α/γ)`-stable mixing variable of the `β = 1` case,
/// scaled so that `W^{1/γ} S_γ(t)` has CF `exp(-|θ|^α t^{α/γ} E|S_γ(1)|^α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubGaussianW {
    pub w: f64,
}

impl SubGaussianW {
    pub fn sample(params: &YParams, rng: &mut Rng) -> Self {
        let (a, g) = (params.alpha, params.gamma);
        let c = driver_abs_moment(g, a) / driver_cf_const(g).powf(a / g);
        SubGaussianW {
            w: c.powf(g / a) * sample_positive_stable(a / g, rng),
        }
    }
}

fn check_sigma(sigma_f: f64) -> Result<()> {
    if !(sigma_f >= 0.0 && sigma_f.is_finite()) {
        return Err(param("sigma_f", format!("{sigma_f} must be finite and nonnegative")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(param("beta", format!("{beta} not in [0, 1]")));
    }
    Ok(())
}

/// `√Γ(β+1) σ_f B(M_β(t))` with `B` a standard Brownian motion independent
/// of `M_β`.
pub fn sample_bm_ml(beta: f64, sigma_f: f64, grid: &[f64], rng: &mut Rng) -> Result<SamplePath> {
    check_beta(beta)?;
    check_sigma(sigma_f)?;
    validate_grid(grid)?;
    let c = gamma(beta + 1.0).sqrt() * sigma_f;
    let m = ml_at_levels(beta, grid, rng);
    let values = driver_at(2.0, &m, rng).into_iter().map(|b| c * b).collect();
    Ok(SamplePath::new(grid.to_vec(), values, format!("B(M_{beta})")))
}

/// The entrance time `T_∞^L = L U^{1/(1-β)}`; zero when `β = 1`.
pub fn sample_entrance_time(beta: f64, l: f64, rng: &mut Rng) -> f64 {
    if beta >= 1.0 {
        0.0
    } else {
        l * open01(rng).powf(1.0 / (1.0 - beta))
    }
}

/// `√Γ(β+1) σ_f B(M_β((t-T)_+))` together with the entrance time `T`.
pub fn entrance_limit_parts(
    beta: f64,
    sigma_f: f64,
    l: f64,
    grid: &[f64],
    rng: &mut Rng,
) -> Result<(f64, SamplePath)> {
    check_beta(beta)?;
    check_sigma(sigma_f)?;
    if !(l > 0.0) {
        return Err(param("L", format!("{l} must be positive")));
    }
    validate_grid(grid)?;
    let t0 = sample_entrance_time(beta, l, rng);
    let levels: Vec<f64> = grid.iter().map(|&t| (t - t0).max(0.0)).collect();
    let c = gamma(beta + 1.0).sqrt() * sigma_f;
    let m = ml_at_levels(beta, &levels, rng);
    let values = driver_at(2.0, &m, rng).into_iter().map(|b| c * b).collect();
    Ok((t0, SamplePath::new(grid.to_vec(), values, format!("B(M_{beta}((t-T)+))"))))
}

pub fn sample_entrance_limit(beta: f64, sigma_f: f64, l: f64, grid: &[f64], rng: &mut Rng) -> Result<SamplePath> {
    entrance_limit_parts(beta, sigma_f, l, grid, rng).map(|(_, p)| p)
}

/// One LePage realization of `Y_{α,β,γ}` on `grid` (which fixes the horizon
/// `T` as its last point).
///
/// Term `j` carries a mark `x_j = T U^{1/(1-β)}` and its own copies of
/// `S_γ` and `M_β`, drawn from a generator derived from the term index.
/// With `budget.residual` the discarded terms are replaced by one driving
/// process run at the matched clock `Λ t`.
pub fn sample_y(params: &YParams, grid: &[f64], budget: &SeriesBudget, rng: &mut Rng) -> Result<SamplePath> {
    validate_grid(grid)?;
    let t_max = *grid.last().unwrap();
    if !(t_max > 0.0) {
        return Err(Error::Grid("horizon must be positive".into()));
    }
    let YParams { alpha, beta, gamma: g } = *params;
    let meta = format!("Y_{{{alpha},{beta},{g}}}");
    if beta == 1.0 {
        let w = SubGaussianW::sample(params, rng).w;
        let s = driver_at(g, grid, rng);
        let values = s.into_iter().map(|x| w.powf(1.0 / g) * x).collect();
        return Ok(SamplePath::new(grid.to_vec(), values, meta));
    }
    let m_t = t_max.powf(1.0 - beta);
    let c = (tail_constant(alpha) * m_t).powf(1.0 / alpha);
    let seed: u64 = rng.random();
    let mut values = vec![0.0; grid.len()];
    let mut levels = vec![0.0; grid.len()];
    let mut arrival = 0.0;
    for j in 0..budget.j {
        arrival += -open01(rng).ln();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut r = derive(seed, &[j as u64]);
        let x = t_max * open01(&mut r).powf(1.0 / (1.0 - beta));
        for (l, &t) in levels.iter_mut().zip(grid) {
            *l = (t - x).max(0.0);
        }
        let m = ml_at_levels(beta, &levels, &mut r);
        let s = driver_at(g, &m, &mut r);
        let wgt = sign * c * arrival.powf(-1.0 / alpha);
        for (v, sj) in values.iter_mut().zip(s) {
            *v += wgt * sj;
        }
    }
    if budget.residual {
        // E M_β((t - x)_+) over the normalized mark law is t Γ(2-β) / T^{1-β}.
        let lambda = (tail_constant(alpha) * m_t).powf(g / alpha)
            * tail_power_sum(arrival, g / alpha)
            * gamma(2.0 - beta)
            / m_t;
        let clock: Vec<f64> = grid.iter().map(|&t| lambda * t).collect();
        for (v, s) in values.iter_mut().zip(driver_at(g, &clock, rng)) {
            *v += s;
        }
    }
    Ok(SamplePath::new(grid.to_vec(), values, meta))
}

/// Quadrature and inner Monte Carlo settings for [`analytic_cf_y`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfQuadrature {
    /// Gauss-Legendre panels between consecutive kinks of the integrand.
    pub panels: usize,
    pub order: usize,
    /// Mittag-Leffler draws per node.
    pub inner: usize,
    /// Largest accepted relative standard error of the exponent.
    pub rtol: f64,
}

impl Default for CfQuadrature {
    fn default() -> Self {
        CfQuadrature {
            panels: 4,
            order: 8,
            inner: 4000,
            rtol: 0.01,
        }
    }
}

/// `-log E exp(i Σ θ_j Y(t_j))` and its Monte Carlo standard error,
/// for `0 < β < 1`.
///
/// The exponent is `∫ E'|Σ θ_j S_γ(M_β((t_j - x)_+))|^α (1-β) x^{-β} dx`
/// over `[0, max t_j]`. Given `M_β`, the inner sum is γ-stable, so only
/// `M_β` is simulated.
pub fn analytic_cf_exponent_y(
    params: &YParams,
    times: &[f64],
    thetas: &[f64],
    quad: &CfQuadrature,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let YParams { alpha, beta, gamma: g } = *params;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param("beta", format!("{beta} not in (0, 1)")));
    }
    if times.len() != thetas.len() || times.is_empty() {
        return Err(param("thetas", "need one theta per time"));
    }
    if times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(param("times", "must be finite and nonnegative"));
    }
    if quad.panels == 0 || quad.order == 0 || quad.inner < 2 {
        return Err(param("quadrature", "panels, order and inner sizes must be positive"));
    }
    let mut pairs: Vec<(f64, f64)> = times.iter().copied().zip(thetas.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t_max = pairs.last().unwrap().0;
    if thetas.iter().all(|&t| t == 0.0) || t_max == 0.0 {
        return Ok((0.0, 0.0));
    }
    // Θ_k = Σ_{j ≥ k} θ_j multiplies the k-th increment of the time change.
    let mut tails: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for k in (0..tails.len().saturating_sub(1)).rev() {
        tails[k] += tails[k + 1];
    }
    let tails_g: Vec<f64> = tails.iter().map(|t| t.abs().powf(g)).collect();
    let e_abs = driver_abs_moment(g, alpha);

    // x = t_max s^{1/(1-β)} turns (1-β) x^{-β} dx into t_max^{1-β} ds.
    let mut cuts: Vec<f64> = pairs.iter().map(|p| (p.0 / t_max).powf(1.0 - beta)).collect();
    cuts.insert(0, 0.0);
    cuts.dedup();
    let (xs, ws) = gauss_legendre(quad.order);
    let jac = t_max.powf(1.0 - beta);
    let (mut total, mut var) = (0.0, 0.0);
    let mut levels = vec![0.0; pairs.len()];
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / quad.panels as f64;
        for p in 0..quad.panels {
            let mid = w[0] + (p as f64 + 0.5) * h;
            for (xi, wi) in xs.iter().zip(&ws) {
                let s = mid + 0.5 * h * xi;
                let x = t_max * s.powf(1.0 / (1.0 - beta));
                for (l, pr) in levels.iter_mut().zip(&pairs) {
                    *l = (pr.0 - x).max(0.0);
                }
                let (mut m1, mut m2) = (0.0, 0.0);
                for _ in 0..quad.inner {
                    let m = ml_at_levels(beta, &levels, rng);
                    let mut prev = 0.0;
                    let mut scale = 0.0;
                    for (mk, tg) in m.iter().zip(&tails_g) {
                        scale += tg * (mk - prev);
                        prev = *mk;
                    }
                    let v = e_abs * scale.powf(alpha / g);
                    m1 += v;
                    m2 += v * v;
                }
                let n = quad.inner as f64;
                let mean = m1 / n;
                let vn = (m2 / n - mean * mean).max(0.0) / (n - 1.0);
                let c = 0.5 * h * wi * jac;
                total += c * mean;
                var += c * c * vn;
            }
        }
    }
    Ok((total, var.sqrt()))
}

/// The characteristic function `E exp(i Σ θ_j Y(t_j))` (real by symmetry),
/// evaluated independently of [`sample_y`]. Fails with a precision error
/// when the inner Monte Carlo misses `quad.rtol`.
pub fn analytic_cf_y(
    params: &YParams,
    times: &[f64],
    thetas: &[f64],
    quad: &CfQuadrature,
    rng: &mut Rng,
) -> Result<f64> {
    let (e, se) = analytic_cf_exponent_y(params, times, thetas, quad, rng)?;
    if e > 0.0 && se / e > quad.rtol {
        return Err(Error::Precision {
            achieved: se / e,
            requested: quad.rtol,
        });
    }
    Ok((-e).exp())
}

/// Hurst exponent from the slope of `log E|Y(t)|^q` against `log t`;
/// `samples[i]` holds draws of `Y(times[i])`.
pub fn hurst_estimate(times: &[f64], samples: &[Vec<f64>], q: f64) -> f64 {
    let m: Vec<f64> = samples
        .iter()
        .map(|xs| xs.iter().map(|x| x.abs().powf(q)).sum::<f64>() / xs.len() as f64)
        .collect();
    loglog_slope(times, &m).slope / q
}

/// Dependence between increments `k` grid steps apart:
/// `|φ(ΔY_0 + ΔY_k) - φ(ΔY_0) φ(ΔY_k)|` at `theta`, for each lag.
pub fn increment_dependence(paths: &[SamplePath], lags: &[usize], theta: f64) -> Vec<(usize, f64)> {
    let inc = |p: &SamplePath, i: usize| p.values[i + 1] - p.values[i];
    lags.iter()
        .filter(|&&k| paths.iter().all(|p| k + 1 < p.values.len()))
        .map(|&k| {
            let a: Vec<f64> = paths.iter().map(|p| inc(p, 0)).collect();
            let b: Vec<f64> = paths.iter().map(|p| inc(p, k)).collect();
            let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let (j, fa, fb) = (ecf(&s, theta), ecf(&a, theta), ecf(&b, theta));
            let re = j.0 - (fa.0 * fb.0 - fa.1 * fb.1);
            let im = j.1 - (fa.0 * fb.1 + fa.1 * fb.0);
            (k, (re * re + im * im).sqrt())
        })
        .collect()
}

/// Paths as CSV rows `t,value,replicate`.
pub fn write_paths_csv<W: Write>(paths: &[SamplePath], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "value", "replicate"])?;
    for (r, p) in paths.iter().enumerate() {
        for (t, v) in p.grid.iter().zip(&p.values) {
            out.write_record([t.to_string(), v.to_string(), r.to_string()])?;
        }
    }
    out.flush()
}

/// One row of a characteristic-function table.
#[derive(Debug, Clone, PartialEq)]
pub struct CfRow {
    pub thetas: Vec<f64>,
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

/// CF table as CSV with columns `theta_1, …, theta_k, re, im, stderr`.
pub fn write_cf_csv<W: Write>(rows: &[CfRow], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let k = rows.first().map_or(1, |r| r.thetas.len());
    let mut header: Vec<String> = (1..=k).map(|i| format!("theta_{i}")).collect();
    header.extend(["re", "im", "stderr"].map(String::from));
    out.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.thetas.iter().map(|t| t.to_string()).collect();
        rec.extend([r.re, r.im, r.stderr].map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn params_validation_and_hurst() {
        assert!(YParams::new(1.2, 0.5, 1.2).is_err());
        assert!(YParams::new(1.2, 0.5, 2.1).is_err());
        assert!(YParams::new(0.8, 1.1, 2.0).is_err());
        let p = YParams::new(0.8, 0.5, 2.0).unwrap();
        assert!((p.hurst() - (0.25 + 0.625)).abs() < 1e-15);
    }

    #[test]
    fn y_vanishes_at_zero() {
        let mut rng = stream(7, 0);
        let b = SeriesBudget::new(50).unwrap().with_residual(true);
        for beta in [0.0, 0.4, 1.0] {
            let p = YParams::new(1.1, beta, 1.7).unwrap();
            let y = sample_y(&p, &[0.0, 0.5, 1.0], &b, &mut rng).unwrap();
            assert_eq!(y.values[0], 0.0);
        }
    }

    #[test]
    fn zero_thetas_give_unit_cf() {
        let mut rng = stream(8, 0);
        let p = YParams::new(0.8, 0.5, 2.0).unwrap();
        let cf = analytic_cf_y(&p, &[0.5, 1.0], &[0.0, 0.0], &CfQuadrature::default(), &mut rng).unwrap();
        assert_eq!(cf, 1.0);
    }

    #[test]
    fn driver_moment_gaussian() {
        // E|N|^2 = 1
        assert!((driver_abs_moment(2.0, 2.0) - 1.0).abs() < 1e-12);
    }
}
