//! Symmetric α-stable variates, Lévy tail models and LePage series.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::gamma::gamma;

use crate::error::{param, Error, Result};
use crate::mlfrac::open01;
use crate::rng::Rng;

/// Symmetric α-stable variate with characteristic function
/// `exp(-scale^α |θ|^α)`; `α = 2` gives `N(0, 2 scale²)`.
pub fn sample_sas(alpha: f64, scale: f64, rng: &mut Rng) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(param("alpha", format!("{alpha} not in (0, 2]")));
    }
    if !(scale >= 0.0) {
        return Err(param("scale", format!("{scale} must be nonnegative")));
    }
    Ok(sas(alpha, scale, rng))
}

/// Unchecked Chambers-Mallows-Stuck draw.
pub(crate) fn sas(alpha: f64, scale: f64, rng: &mut Rng) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    if alpha == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return scale * std::f64::consts::SQRT_2 * z;
    }
    let v = PI * (open01(rng) - 0.5);
    if alpha == 1.0 {
        return scale * v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    scale * x
}

/// The α-stable tail constant `C_α`: a SαS variable with unit scale has
/// `P(|X| > λ) ~ C_α λ^{-α}`.
pub fn tail_constant(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-6 {
        return 2.0 / PI;
    }
    (1.0 - alpha) / (gamma(2.0 - alpha) * (PI * alpha / 2.0).cos())
}

/// Absolute moment `E|X|^p` of a unit-scale SαS variable, `p < α`
/// (any `p > -1` when `α = 2`).
pub fn sas_abs_moment(alpha: f64, p: f64) -> f64 {
    if alpha == 2.0 {
        // X = sqrt(2) N
        return 2f64.powf(p) * gamma((1.0 + p) / 2.0) / PI.sqrt();
    }
    2f64.powf(p) * gamma((1.0 + p) / 2.0) * gamma(1.0 - p / alpha)
        / (gamma(1.0 - p / 2.0) * PI.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    PureStable,
    ParetoCutoff,
    UserDefined,
}

impl TailKind {
    pub fn name(self) -> &'static str {
        match self {
            TailKind::PureStable => "pure_stable",
            TailKind::ParetoCutoff => "pareto_cutoff",
            TailKind::UserDefined => "user_defined",
        }
    }
}

type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One-sided tail `x ↦ ρ(x, ∞)` of a symmetric local Lévy measure.
#[derive(Clone)]
pub struct LevyTailSpec {
    alpha: f64,
    p0: f64,
    kind: TailKind,
    tail: TailFn,
}

impl fmt::Debug for LevyTailSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyTailSpec")
            .field("kind", &self.kind)
            .field("alpha", &self.alpha)
            .field("p0", &self.p0)
            .finish()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(param("alpha", format!("{alpha} not in (0, 2)")));
    }
    Ok(())
}

impl LevyTailSpec {
    /// `ρ(x, ∞) = x^{-α}`, the local Lévy measure `α x^{-α-1} dx`.
    pub fn pure_stable(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(LevyTailSpec {
            alpha,
            p0: 0.5 * (alpha + 2.0),
            kind: TailKind::PureStable,
            tail: Arc::new(move |x: f64| if x > 0.0 { x.powf(-alpha) } else { f64::INFINITY }),
        })
    }

    /// `ρ(x, ∞) = min(1, x^{-α})`: unit mass, Pareto above 1.
    pub fn pareto_cutoff(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(LevyTailSpec {
            alpha,
            p0: 1.0,
            kind: TailKind::ParetoCutoff,
            tail: Arc::new(move |x: f64| if x > 1.0 { x.powf(-alpha) } else { 1.0 }),
        })
    }

    /// Arbitrary tail function, validated numerically on a log grid.
    pub fn user_defined(
        alpha: f64,
        p0: f64,
        tail: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !(p0 > 0.0 && p0 < 2.0) {
            return Err(param("p0", format!("{p0} not in (0, 2)")));
        }
        let spec = LevyTailSpec {
            alpha,
            p0,
            kind: TailKind::UserDefined,
            tail: Arc::new(tail),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn kind(&self) -> TailKind {
        self.kind
    }

    pub fn tail(&self, x: f64) -> f64 {
        (self.tail)(x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        levy_tail_inverse(self, y)
    }

    /// Checks monotonicity, finiteness, the small-x condition and the
    /// inverse on a log grid.
    pub fn validate(&self) -> Result<()> {
        let xs: Vec<f64> = (-60..=60).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let mut prev = f64::INFINITY;
        for &x in &xs {
            let v = self.tail(x);
            if !(v.is_finite() && v >= 0.0) {
                return Err(param("tail", format!("tail({x}) = {v} is not finite and nonnegative")));
            }
            if v > prev {
                return Err(param("tail", format!("tail increases at x = {x}")));
            }
            prev = v;
        }
        let g = |x: f64| x.powf(self.p0) * self.tail(x);
        let (a, b, c) = (g(1e-8), g(1e-6), g(1e-4));
        if !(a <= b * (1.0 + 1e-9) && b <= c * (1.0 + 1e-9) && a < c.max(1e-300) || a == 0.0) {
            return Err(param("p0", format!("x^p0 tail(x) does not decrease to 0: {a:e}, {b:e}, {c:e}")));
        }
        for &y in &[1e-3, 0.1, 1.0, 10.0] {
            let x = self.inverse(y);
            if self.tail(x) > y * (1.0 + 1e-9) && x > 0.0 {
                return Err(param("tail", format!("inverse check failed at y = {y}")));
            }
        }
        Ok(())
    }

    /// Key/value form for the configuration format.
    pub fn to_config(&self) -> Result<BTreeMap<String, String>> {
        if self.kind == TailKind::UserDefined {
            return Err(Error::Unsupported("user-defined tails have no text form".into()));
        }
        let mut m = BTreeMap::new();
        m.insert("kind".to_string(), self.kind.name().to_string());
        m.insert("alpha".to_string(), format!("{}", self.alpha));
        Ok(m)
    }

    pub fn from_config(m: &BTreeMap<String, String>) -> Result<Self> {
        let alpha: f64 = m
            .get("alpha")
            .ok_or_else(|| param("alpha", "missing"))?
            .parse()
            .map_err(|_| param("alpha", "not a number"))?;
        match m.get("kind").map(String::as_str) {
            Some("pure_stable") | None => Self::pure_stable(alpha),
            Some("pareto_cutoff") => Self::pareto_cutoff(alpha),
            Some(k) => Err(param("kind", format!("unknown tail kind `{k}`"))),
        }
    }
}

/// Generalized inverse `ρ^←(y) = inf{x ≥ 0 : ρ(x, ∞) ≤ y}`.
pub fn levy_tail_inverse(spec: &LevyTailSpec, y: f64) -> f64 {
    match spec.kind {
        TailKind::PureStable => y.powf(-1.0 / spec.alpha),
        TailKind::ParetoCutoff => {
            if y >= 1.0 {
                0.0
            } else {
                y.powf(-1.0 / spec.alpha)
            }
        }
        TailKind::UserDefined => bisect_inverse(&*spec.tail, y),
    }
}

fn bisect_inverse(tail: &dyn Fn(f64) -> f64, y: f64) -> f64 {
    let mut hi = 1.0;
    while tail(hi) > y {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = hi / 2.0;
    while tail(lo) <= y {
        lo /= 2.0;
        if lo < 1e-300 {
            return 0.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) <= y {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Truncation settings for LePage series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesBudget {
    /// Number of retained terms.
    pub j: usize,
    /// Replace the discarded terms by a moment-matched residual.
    pub residual: bool,
}

impl Default for SeriesBudget {
    fn default() -> Self {
        SeriesBudget {
            j: 10_000,
            residual: false,
        }
    }
}

impl SeriesBudget {
    pub fn new(j: usize) -> Result<Self> {
        if j == 0 {
            return Err(param("J", "must be at least 1"));
        }
        Ok(SeriesBudget { j, residual: false })
    }

    pub fn with_residual(mut self, on: bool) -> Self {
        self.residual = on;
        self
    }

    /// Draws `Γ_1 < … < Γ_J` and Rademacher signs.
    pub fn draw(&self, rng: &mut Rng) -> SeriesTerms {
        let mut arrivals = Vec::with_capacity(self.j);
        let mut signs = Vec::with_capacity(self.j);
        let mut g = 0.0;
        for _ in 0..self.j {
            let e: f64 = Exp1.sample(rng);
            g += e;
            arrivals.push(g);
            signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
        SeriesTerms { arrivals, signs }
    }
}

/// Poisson arrivals and signs of one series realization.
#[derive(Debug, Clone)]
pub struct SeriesTerms {
    pub arrivals: Vec<f64>,
    pub signs: Vec<f64>,
}

impl SeriesTerms {
    pub fn last_arrival(&self) -> f64 {
        *self.arrivals.last().unwrap_or(&0.0)
    }
}

/// `E[Σ_{j>J} Γ_j^{-p} | Γ_J] ≈ Γ_J^{1-p}/(p-1)` for `p > 1`.
pub fn tail_power_sum(gamma_j: f64, p: f64) -> f64 {
    gamma_j.powf(1.0 - p) / (p - 1.0)
}

/// LePage approximation of `∫ g dM` for a SαS random measure `M` whose
/// control measure has total mass `total_mass` on the support of `g`:
/// `C_α^{1/α} Σ_{j≤J} ε_j (Γ_j/m)^{-1/α} g(V_j)` with `V_j` drawn from the
/// normalized control measure.
///
/// With `budget.residual` the discarded terms are replaced by a centred
/// Gaussian whose variance is their conditional expectation given `Γ_J`,
/// using the empirical mean of `g(V_j)²` over the retained marks.
pub fn lepage_sas_integral<M>(
    integrand: impl Fn(&M) -> f64,
    mut mark_sampler: impl FnMut(&mut Rng) -> M,
    total_mass: f64,
    alpha: f64,
    budget: &SeriesBudget,
    rng: &mut Rng,
) -> Result<f64> {
    if !(total_mass > 0.0) {
        return Err(param("total_mass", format!("{total_mass} must be positive")));
    }
    check_alpha(alpha)?;
    let c = tail_constant(alpha).powf(1.0 / alpha);
    // Arrival, sign and mark are drawn term by term, so a larger budget on
    // the same generator extends the smaller one.
    let (mut sum, mut sq, mut g) = (0.0, 0.0, 0.0);
    for _ in 0..budget.j {
        let e: f64 = Exp1.sample(rng);
        g += e;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let v = integrand(&mark_sampler(rng));
        sum += sign * (g / total_mass).powf(-1.0 / alpha) * v;
        sq += v * v;
    }
    let mut out = c * sum;
    if budget.residual {
        let mean_sq = sq / budget.j as f64;
        let var = c * c
            * total_mass.powf(2.0 / alpha)
            * mean_sq
            * tail_power_sum(g, 2.0 / alpha);
        let z: f64 = StandardNormal.sample(rng);
        out += var.sqrt() * z;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_constant_values() {
        assert_relative_eq!(tail_constant(1.0), 2.0 / PI);
        assert!((tail_constant(1.0 - 1e-5) - 2.0 / PI).abs() < 1e-4);
        assert!((tail_constant(1.0 + 1e-5) - 2.0 / PI).abs() < 1e-4);
        // Γ(1.5) = sqrt(π)/2, cos(π/4) = 1/sqrt(2): C = 0.5 / (sqrt(π)/2 / sqrt(2)) = sqrt(2/π).
        assert_relative_eq!(tail_constant(0.5), (2.0 / PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn zero_scale_gives_zero() {
        let mut rng = crate::rng::stream(1, 0);
        assert_eq!(sample_sas(1.3, 0.0, &mut rng).unwrap(), 0.0);
        assert!(sample_sas(2.5, 1.0, &mut rng).is_err());
        assert!(sample_sas(0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_abs_moment() {
        // E|sqrt(2) N|^2 = 2
        assert_relative_eq!(sas_abs_moment(2.0, 2.0), 2.0, epsilon = 1e-12);
        // E|C| for Cauchy is infinite; p < 1 is finite
        assert!(sas_abs_moment(1.0, 0.5).is_finite());
    }

    #[test]
    fn pure_stable_inverse() {
        let s = LevyTailSpec::pure_stable(0.5).unwrap();
        assert_relative_eq!(s.inverse(16.0), 1.0 / 256.0, epsilon = 1e-15);
        for &y in &[0.01, 0.5, 3.0, 1e4] {
            assert_relative_eq!(s.inverse(y) * y.powf(1.0 / 0.5), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn config_round_trip() {
        let s = LevyTailSpec::pareto_cutoff(1.2).unwrap();
        let back = LevyTailSpec::from_config(&s.to_config().unwrap()).unwrap();
        assert_eq!(back.kind(), TailKind::ParetoCutoff);
        assert_eq!(back.alpha(), 1.2);
    }
}
