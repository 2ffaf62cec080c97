//! Stable subordinators, Mittag-Leffler processes and overshoots.
//!
//! `S_β` denotes the β-stable subordinator with `E exp(-θ S_β(t)) = exp(-t θ^β)`
//! and `M_β(t) = inf{u : S_β(u) > t}` its inverse.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Exp1, Gamma};
use statrs::function::gamma::gamma;

use crate::error::{param, Error, Result};
use crate::rng::Rng;
use crate::stats::gauss_legendre;

/// One realization of a process on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: String,
}

impl SamplePath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, meta: impl Into<String>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        SamplePath {
            grid,
            values,
            meta: meta.into(),
        }
    }

    /// Value at a grid time, if the time is on the grid.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.grid
            .iter()
            .position(|&g| g == t)
            .map(|i| self.values[i])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Checks that a grid starts at 0 and is strictly increasing.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => return Err(Error::Grid("empty grid".into())),
        Some(&g) if g != 0.0 => return Err(Error::Grid(format!("grid starts at {g}, not 0"))),
        _ => {}
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::Grid(format!(
            "grid not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Index of a Mittag-Leffler process; 0 and 1 are the boundary cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams {
    beta: f64,
}

impl MLParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(param("beta", format!("{beta} not in [0, 1]")));
        }
        Ok(MLParams { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub(crate) fn open01(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Zolotarev's function for the positive β-stable law.
fn zolotarev(beta: f64, theta: f64) -> f64 {
    let num = (beta * theta).sin().powf(beta) * ((1.0 - beta) * theta).sin().powf(1.0 - beta);
    (num / theta.sin()).powf(1.0 / (1.0 - beta))
}

fn zolotarev_at_zero(beta: f64) -> f64 {
    beta.powf(beta / (1.0 - beta)) * (1.0 - beta)
}

/// Positive strictly β-stable variate with Laplace transform `exp(-θ^β)`
/// (Kanter's representation).
pub fn sample_positive_stable(beta: f64, rng: &mut Rng) -> f64 {
    let theta = PI * open01(rng);
    let e: f64 = Exp1.sample(rng);
    (zolotarev(beta, theta) / e).powf((1.0 - beta) / beta)
}

/// Samples the subordinator `S_β` on `grid`.
pub fn sample_stable_subordinator(beta: f64, grid: &[f64], rng: &mut Rng) -> Result<SamplePath> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param("beta", format!("{beta} not in (0, 1)")));
    }
    validate_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    let mut s = 0.0;
    for w in grid.windows(2) {
        s += (w[1] - w[0]).powf(1.0 / beta) * sample_positive_stable(beta, rng);
        values.push(s);
    }
    Ok(SamplePath::new(grid.to_vec(), values, format!("S_{beta}")))
}

/// First passage of `S_β` (started at 0) above a level `r > 0`.
#[derive(Debug, Clone, Copy)]
pub struct Passage {
    /// Passage time `M_β(r)`.
    pub time: f64,
    /// Position just before the crossing jump, in `(0, r)`.
    pub undershoot: f64,
    /// Size of the crossing jump.
    pub jump: f64,
}

impl Passage {
    pub fn overshoot(&self, level: f64) -> f64 {
        self.undershoot + self.jump - level
    }
}

/// Samples the time, pre-jump position and crossing jump at the first
/// passage of `S_β` above `r`.
///
/// The pre-jump position is `r` times a Beta(β, 1-β) variable, the jump is
/// Pareto above the remaining distance, and given the pre-jump position `y`
/// the time equals `y^β (E / A(Θ))^{1-β}` with `E ~ Gamma(2-β)` and `Θ`
/// drawn with density proportional to `A(θ)^{β-1}`, `A` being Zolotarev's
/// function.
pub fn first_passage(beta: f64, r: f64, rng: &mut Rng) -> Passage {
    let b = Beta::new(beta, 1.0 - beta).unwrap().sample(rng);
    let y = (r * b).min(r * (1.0 - f64::EPSILON));
    let gap = r - y;
    let jump = gap * open01(rng).powf(-1.0 / beta);
    let a0 = zolotarev_at_zero(beta);
    let a = loop {
        let th = PI * open01(rng);
        let a = zolotarev(beta, th);
        if rng.random::<f64>() < (a0 / a).powf(1.0 - beta) {
            break a;
        }
    };
    let e = Gamma::new(2.0 - beta, 1.0).unwrap().sample(rng);
    Passage {
        time: y.powf(beta) * (e / a).powf(1.0 - beta),
        undershoot: y,
        jump,
    }
}

/// `M_β` at nondecreasing, nonnegative levels. Levels equal to zero map to 0.
pub(crate) fn ml_at_levels(beta: f64, levels: &[f64], rng: &mut Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(levels.len());
    if beta >= 1.0 {
        out.extend_from_slice(levels);
        return out;
    }
    if beta <= 0.0 {
        let mut e: Option<f64> = None;
        for &t in levels {
            if t > 0.0 {
                let v = *e.get_or_insert_with(|| Exp1.sample(rng));
                out.push(v);
            } else {
                out.push(0.0);
            }
        }
        return out;
    }
    out.extend(passages(beta, levels, rng).map(|(u, _, _)| u));
    out
}

/// Walks the subordinator through its first passages above the given
/// nondecreasing levels, yielding `(M(t), S(M(t)-), S(M(t)))` per level.
fn passages<'a>(
    beta: f64,
    levels: &'a [f64],
    rng: &'a mut Rng,
) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    // (u, lo, s): current inverse time and the levels just before and at it.
    let (mut u, mut lo, mut s) = (0.0_f64, 0.0_f64, 0.0_f64);
    levels.iter().map(move |&t| {
        if t > s {
            let p = first_passage(beta, t - s, rng);
            u += p.time;
            lo = s + p.undershoot;
            s = lo + p.jump;
        }
        if t > 0.0 {
            (u, lo, s)
        } else {
            (0.0, 0.0, 0.0)
        }
    })
}

/// Like [`sample_mittag_leffler`] for `0 < β < 1`, also returning for each
/// grid time the subordinator levels `(S(M(t)-), S(M(t)))` that bracket it.
pub fn sample_mittag_leffler_bracketed(
    beta: f64,
    grid: &[f64],
    rng: &mut Rng,
) -> Result<(SamplePath, Vec<(f64, f64)>)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param("beta", format!("{beta} not in (0, 1)")));
    }
    validate_grid(grid)?;
    let (values, brackets): (Vec<f64>, Vec<(f64, f64)>) = passages(beta, grid, rng)
        .map(|(u, lo, s)| (u, (lo, s)))
        .unzip();
    Ok((
        SamplePath::new(grid.to_vec(), values, format!("M_{beta}")),
        brackets,
    ))
}

/// Samples `M_β` on `grid` by inverting the subordinator at its successive
/// passage epochs above the grid levels.
///
/// Each grid level is bracketed exactly: `S_β(M(t)-) < t <= S_β(M(t))`.
/// For `β = 0` the path is `0` at `t = 0` and a single standard exponential
/// value for `t > 0`; for `β = 1` it is the identity.
pub fn sample_mittag_leffler(params: MLParams, grid: &[f64], rng: &mut Rng) -> Result<SamplePath> {
    validate_grid(grid)?;
    let v = ml_at_levels(params.beta, grid, rng);
    Ok(SamplePath::new(
        grid.to_vec(),
        v,
        format!("M_{}", params.beta),
    ))
}

/// Samples `M_β` on `grid` by inverting a subordinator skeleton simulated
/// on the lattice `step * k`; `M(t)` is reported as the first lattice time
/// where the skeleton reaches `t`, so it overestimates by less than `step`.
pub fn sample_mittag_leffler_lattice(
    beta: f64,
    grid: &[f64],
    step: f64,
    rng: &mut Rng,
) -> Result<SamplePath> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param("beta", format!("{beta} not in (0, 1)")));
    }
    if !(step > 0.0) {
        return Err(param("step", "must be positive"));
    }
    validate_grid(grid)?;
    let scale = step.powf(1.0 / beta);
    let mut values = vec![0.0; grid.len()];
    let (mut k, mut s) = (0u64, 0.0_f64);
    for (i, &t) in grid.iter().enumerate().skip(1) {
        while s < t {
            s += scale * sample_positive_stable(beta, rng);
            k += 1;
        }
        values[i] = k as f64 * step;
    }
    Ok(SamplePath::new(grid.to_vec(), values, format!("M_{beta} lattice")))
}

/// `E M_β(t)^q = t^{qβ} Γ(1+q) / Γ(1+qβ)`.
pub fn ml_moment(beta: f64, q: f64, t: f64) -> f64 {
    t.powf(q * beta) * gamma(1.0 + q) / gamma(1.0 + q * beta)
}

const OVERSHOOT_NODES: usize = 4096;
const OVERSHOOT_LO: f64 = 1e-12;
const OVERSHOOT_HI: f64 = 1e12;

/// Inverse-CDF sampler for the overshoot of `S_β` above level 1, whose
/// density is `(sin βπ / π) x^{-β} / (1 + x)`.
///
/// The CDF is tabulated on log-spaced nodes by Gauss-Legendre quadrature
/// in `log x`; below the first node and above the last one the leading
/// power-law terms are inverted analytically.
#[derive(Debug, Clone)]
pub struct OvershootTable {
    beta: f64,
    c: f64,
    log_x: Vec<f64>,
    cdf: Vec<f64>,
}

impl OvershootTable {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(param("beta", format!("{beta} not in (0, 1)")));
        }
        let c = (beta * PI).sin() / PI;
        let (lo, hi) = (OVERSHOOT_LO.ln(), OVERSHOOT_HI.ln());
        let h = (hi - lo) / (OVERSHOOT_NODES - 1) as f64;
        let log_x: Vec<f64> = (0..OVERSHOOT_NODES).map(|i| lo + h * i as f64).collect();
        let (gx, gw) = gauss_legendre(8);
        // Density in u = log x.
        let g = |u: f64| c * ((1.0 - beta) * u).exp() / (1.0 + u.exp());
        let mut cdf = Vec::with_capacity(OVERSHOOT_NODES);
        let a = OVERSHOOT_LO;
        let head = c * (a.powf(1.0 - beta) / (1.0 - beta) - a.powf(2.0 - beta) / (2.0 - beta));
        cdf.push(head);
        for w in log_x.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let inc: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(x, wt)| wt * g(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h;
            let last = *cdf.last().unwrap();
            cdf.push(last + inc);
        }
        Ok(OvershootTable {
            beta,
            c,
            log_x,
            cdf,
        })
    }

    /// Probability mass beyond the last node.
    fn tail_mass(&self) -> f64 {
        let b = OVERSHOOT_HI;
        self.c * (b.powf(-self.beta) / self.beta - b.powf(-self.beta - 1.0) / (self.beta + 1.0))
    }

    /// Total mass of the tabulated density including both analytic ends.
    pub fn total_mass(&self) -> f64 {
        self.cdf[OVERSHOOT_NODES - 1] + self.tail_mass()
    }

    /// Tabulated CDF at `x` (for diagnostics).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let u = x.ln();
        if u <= self.log_x[0] {
            return self.c * x.powf(1.0 - self.beta) / (1.0 - self.beta);
        }
        if u >= self.log_x[OVERSHOOT_NODES - 1] {
            return 1.0 - self.c * x.powf(-self.beta) / self.beta;
        }
        let h = self.log_x[1] - self.log_x[0];
        let i = (((u - self.log_x[0]) / h) as usize).min(OVERSHOOT_NODES - 2);
        let f = (u - self.log_x[i]) / h;
        self.cdf[i] + f * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Overshoot above level `r`, i.e. `r` times a level-1 overshoot.
    pub fn sample(&self, r: f64, rng: &mut Rng) -> f64 {
        let p = open01(rng) * self.total_mass();
        let x = if p <= self.cdf[0] {
            ((1.0 - self.beta) * p / self.c).powf(1.0 / (1.0 - self.beta))
        } else if p >= self.cdf[OVERSHOOT_NODES - 1] {
            let q = (self.total_mass() - p).max(f64::MIN_POSITIVE);
            (self.c / (self.beta * q)).powf(1.0 / self.beta)
        } else {
            let i = self.cdf.partition_point(|&v| v <= p) - 1;
            let f = (p - self.cdf[i]) / (self.cdf[i + 1] - self.cdf[i]);
            (self.log_x[i] + f * (self.log_x[i + 1] - self.log_x[i])).exp()
        };
        r * x
    }
}

thread_local! {
    static TABLES: RefCell<HashMap<u64, Rc<OvershootTable>>> = RefCell::new(HashMap::new());
}

/// Overshoot `δ_r = S_β(M_β(r)) - r`, sampled from the tabulated law.
pub fn sample_overshoot(beta: f64, r: f64, rng: &mut Rng) -> Result<f64> {
    if !(r > 0.0) {
        return Err(param("r", format!("{r} must be positive")));
    }
    let table = TABLES.with(|t| -> Result<Rc<OvershootTable>> {
        let mut map = t.borrow_mut();
        if let Some(tab) = map.get(&beta.to_bits()) {
            return Ok(tab.clone());
        }
        let tab = Rc::new(OvershootTable::new(beta)?);
        map.insert(beta.to_bits(), tab.clone());
        Ok(tab)
    })?;
    Ok(table.sample(r, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[0.0, 1.0, 2.0]).is_ok());
        assert!(validate_grid(&[0.5, 1.0]).is_err());
        assert!(validate_grid(&[0.0, 1.0, 1.0]).is_err());
        assert!(validate_grid(&[]).is_err());
    }

    #[test]
    fn boundary_betas() {
        let mut rng = stream(1, 0);
        let grid = [0.0, 0.5, 1.0, 3.0];
        let p = sample_mittag_leffler(MLParams::new(1.0).unwrap(), &grid, &mut rng).unwrap();
        assert_eq!(p.values, grid.to_vec());
        let p = sample_mittag_leffler(MLParams::new(0.0).unwrap(), &grid, &mut rng).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert!(p.values[1] > 0.0 && p.values[1] == p.values[2] && p.values[2] == p.values[3]);
        assert!(MLParams::new(1.5).is_err());
    }

    #[test]
    fn subordinator_rejects_boundary_beta() {
        let mut rng = stream(1, 0);
        assert!(sample_stable_subordinator(1.0, &[0.0, 1.0], &mut rng).is_err());
        assert!(sample_stable_subordinator(0.0, &[0.0, 1.0], &mut rng).is_err());
    }

    #[test]
    fn moments_closed_forms() {
        assert_relative_eq!(ml_moment(0.5, 1.0, 1.0), 2.0 / PI.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(ml_moment(0.5, 2.0, 1.0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(ml_moment(1.0, 2.7, 3.0), 3.0_f64.powf(2.7), epsilon = 1e-9);
    }

    #[test]
    fn overshoot_density_normalized() {
        for &b in &[0.1, 0.3, 0.5, 0.8, 0.95] {
            let t = OvershootTable::new(b).unwrap();
            assert!((t.total_mass() - 1.0).abs() < 1e-6, "beta {b}: {}", t.total_mass());
        }
    }

    #[test]
    fn overshoot_median_at_half() {
        let t = OvershootTable::new(0.5).unwrap();
        assert_relative_eq!(t.cdf(1.0), 0.5, epsilon = 1e-7);
    }

    #[test]
    fn passage_brackets_level() {
        let mut rng = stream(3, 0);
        for _ in 0..1000 {
            let p = first_passage(0.6, 2.0, &mut rng);
            assert!(p.undershoot < 2.0 && p.undershoot + p.jump >= 2.0 && p.time > 0.0);
        }
    }

    #[test]
    fn zolotarev_half() {
        let th = 1.3;
        assert_relative_eq!(
            zolotarev(0.5, th),
            1.0 / (4.0 * (th / 2.0).cos().powi(2)),
            epsilon = 1e-12
        );
        assert_relative_eq!(zolotarev(0.5, 1e-9), zolotarev_at_zero(0.5), epsilon = 1e-9);
    }
}
