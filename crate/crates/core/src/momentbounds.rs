//! Fractional-moment bounds for compound-Poisson infinitely divisible
//! variables: `E X^p` against `∫ y^p dν₊ + (∫ y dν₊)^p` for positive `X`,
//! `p ∈ (1, 2)`, and `E|Y|^p` against `∫ |y|^p dν + (∫ y² dν)^{p/2}` for
//! symmetric `Y`, `p ∈ (2, 4)`.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::rng::{derive, Rng};
use crate::stats::mean_stderr;

/// Mass `mass` spread with density `∝ y^{-1-α}` on `[lo, hi]`; `hi` may be
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoPiece {
    pub mass: f64,
    pub alpha: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ParetoPiece {
    pub fn new(mass: f64, alpha: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(param("mass", format!("{mass} must be positive and finite")));
        }
        if !(alpha > 0.0) {
            return Err(param("alpha", format!("{alpha} must be positive")));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(param("lo", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
        }
        Ok(ParetoPiece { mass, alpha, lo, hi })
    }

    /// The measure `y^{-1-α} dy` restricted to `[lo, hi]`.
    pub fn from_density(alpha: f64, lo: f64, hi: f64) -> Result<Self> {
        let mass = (lo.powf(-alpha) - hi.powf(-alpha)) / alpha;
        Self::new(mass, alpha, lo, hi)
    }

    /// `∫ y^p` against the normalized piece.
    fn unit_moment(&self, p: f64) -> f64 {
        let (a, lo, hi) = (self.alpha, self.lo, self.hi);
        let c = a / (lo.powf(-a) - hi.powf(-a));
        if (p - a).abs() < 1e-12 {
            return c * (hi / lo).ln();
        }
        if hi.is_infinite() && p > a {
            return f64::INFINITY;
        }
        c * (hi.powf(p - a) - lo.powf(p - a)) / (p - a)
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let (a, lo, hi) = (self.alpha, self.lo, self.hi);
        let u: f64 = rng.random();
        (lo.powf(-a) - u * (lo.powf(-a) - hi.powf(-a))).powf(-1.0 / a)
    }

    fn scaled(&self, c: f64) -> Self {
        ParetoPiece { lo: c * self.lo, hi: c * self.hi, ..*self }
    }
}

/// Finite Lévy measure on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosLevySpec {
    pub label: String,
    atoms: Vec<(f64, f64)>,
    pieces: Vec<ParetoPiece>,
}

impl PosLevySpec {
    pub fn new(label: impl Into<String>, atoms: Vec<(f64, f64)>, pieces: Vec<ParetoPiece>) -> Result<Self> {
        if atoms.iter().any(|&(y, m)| !(y > 0.0 && y.is_finite() && m > 0.0 && m.is_finite())) {
            return Err(param("atoms", "locations and masses must be positive and finite"));
        }
        let s = PosLevySpec { label: label.into(), atoms, pieces };
        if !s.p_moment(1.0).is_finite() {
            return Err(param("pieces", "first moment is infinite"));
        }
        Ok(s)
    }

    pub fn zero() -> Self {
        PosLevySpec { label: "zero".into(), atoms: vec![], pieces: vec![] }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.pieces.iter().map(|p| p.mass).sum::<f64>()
    }

    pub fn first_moment(&self) -> f64 {
        self.p_moment(1.0)
    }

    /// `∫ y^p ν₊(dy)`, possibly infinite.
    pub fn p_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|&(y, m)| m * y.powf(p)).sum::<f64>()
            + self.pieces.iter().map(|q| q.mass * q.unit_moment(p)).sum::<f64>()
    }

    /// Pushforward under `y ↦ c y`.
    pub fn scaled(&self, c: f64) -> Self {
        PosLevySpec {
            label: format!("{}*{c}", self.label),
            atoms: self.atoms.iter().map(|&(y, m)| (c * y, m)).collect(),
            pieces: self.pieces.iter().map(|q| q.scaled(c)).collect(),
        }
    }

    /// One jump from the normalized measure.
    fn jump(&self, rng: &mut Rng) -> f64 {
        let mut u = rng.random::<f64>() * self.total_mass();
        for &(y, m) in &self.atoms {
            if u < m {
                return y;
            }
            u -= m;
        }
        for q in &self.pieces {
            if u < q.mass {
                return q.sample(rng);
            }
            u -= q.mass;
        }
        // Rounding at the top of the cumulative masses.
        match (self.pieces.last(), self.atoms.last()) {
            (Some(q), _) => q.sample(rng),
            (None, Some(&(y, _))) => y,
            (None, None) => 0.0,
        }
    }

    fn count(&self, rng: &mut Rng) -> u64 {
        let m = self.total_mass();
        if m == 0.0 {
            0
        } else {
            Poisson::new(m).expect("positive mass").sample(rng) as u64
        }
    }

    /// One draw of `X = Σ_{j ≤ N} W_j`.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        (0..self.count(rng)).map(|_| self.jump(rng)).sum()
    }
}

/// Finite symmetric Lévy measure: signed atoms (checked for symmetry) and
/// Pareto pieces mirrored onto `(-∞, 0)` with half their mass on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct SymLevySpec {
    pub label: String,
    atoms: Vec<(f64, f64)>,
    pieces: Vec<ParetoPiece>,
    /// Orientation of the mirrored pieces, flipped by [`SymLevySpec::reflected`].
    orientation: f64,
}

impl SymLevySpec {
    pub fn new(label: impl Into<String>, atoms: Vec<(f64, f64)>, pieces: Vec<ParetoPiece>) -> Result<Self> {
        if atoms.iter().any(|&(y, m)| !(y != 0.0 && y.is_finite() && m > 0.0 && m.is_finite())) {
            return Err(param("atoms", "locations must be nonzero and masses positive"));
        }
        for &(y, m) in &atoms {
            let mirror: f64 = atoms.iter().filter(|a| a.0 == -y).map(|a| a.1).sum();
            let same: f64 = atoms.iter().filter(|a| a.0 == y).map(|a| a.1).sum();
            if (mirror - same).abs() > 1e-12 * same {
                return Err(param("atoms", format!("mass at {y} ({m}) is not mirrored at {}", -y)));
            }
        }
        let s = SymLevySpec { label: label.into(), atoms, pieces, orientation: 1.0 };
        if !s.p_moment(2.0).is_finite() {
            return Err(param("pieces", "second moment is infinite"));
        }
        Ok(s)
    }

    pub fn zero() -> Self {
        SymLevySpec { label: "zero".into(), atoms: vec![], pieces: vec![], orientation: 1.0 }
    }

    /// `½(δ_y + δ_{-y})` scaled to total mass `2λ` for each `(y, λ)`.
    pub fn symmetrized(label: impl Into<String>, half: &[(f64, f64)], pieces: Vec<ParetoPiece>) -> Result<Self> {
        let atoms = half.iter().flat_map(|&(y, m)| [(y, m), (-y, m)]).collect();
        Self::new(label, atoms, pieces)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.pieces.iter().map(|p| p.mass).sum::<f64>()
    }

    pub fn second_moment(&self) -> f64 {
        self.p_moment(2.0)
    }

    /// `∫ |y|^p ν(dy)`, possibly infinite.
    pub fn p_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|&(y, m)| m * y.abs().powf(p)).sum::<f64>()
            + self.pieces.iter().map(|q| q.mass * q.unit_moment(p)).sum::<f64>()
    }

    /// Image under `y ↦ -y`.
    pub fn reflected(&self) -> Self {
        SymLevySpec {
            label: format!("-{}", self.label),
            atoms: self.atoms.iter().map(|&(y, m)| (-y, m)).collect(),
            pieces: self.pieces.clone(),
            orientation: -self.orientation,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymLevySpec {
            label: format!("{}*{c}", self.label),
            atoms: self.atoms.iter().map(|&(y, m)| (c * y, m)).collect(),
            pieces: self.pieces.iter().map(|q| q.scaled(c)).collect(),
            orientation: self.orientation,
        }
    }

    fn jump(&self, rng: &mut Rng) -> f64 {
        let mut u = rng.random::<f64>() * self.total_mass();
        for &(y, m) in &self.atoms {
            if u < m {
                return y;
            }
            u -= m;
        }
        let q = self
            .pieces
            .iter()
            .find(|q| {
                let hit = u < q.mass;
                u -= q.mass;
                hit
            })
            .or(self.pieces.last());
        match q {
            Some(q) => {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                self.orientation * s * q.sample(rng)
            }
            None => self.atoms.last().map_or(0.0, |a| a.0),
        }
    }

    /// One draw of `(Y, Σ_j W_j²)`.
    pub fn sample_with_square_sum(&self, rng: &mut Rng) -> (f64, f64) {
        let m = self.total_mass();
        let n = if m == 0.0 { 0 } else { Poisson::new(m).expect("positive mass").sample(rng) as u64 };
        let (mut y, mut q) = (0.0, 0.0);
        for _ in 0..n {
            let w = self.jump(rng);
            y += w;
            q += w * w;
        }
        (y, q)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.sample_with_square_sum(rng).0
    }
}

/// One Monte Carlo bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub spec_id: String,
    pub p: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Right side without the constant; infinite when the measure lacks
    /// the `p`-th moment.
    pub rhs: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

impl BoundCheck {
    /// The bound holds trivially: the `p`-th moment of the measure is infinite.
    pub fn trivially_holds(&self) -> bool {
        self.rhs.is_infinite()
    }

    fn build(spec_id: &str, p: f64, samples: &[f64], rhs: f64) -> Self {
        let (lhs, se) = mean_stderr(samples);
        let (ratio, rse) = if rhs > 0.0 { (lhs / rhs, se / rhs) } else { (0.0, 0.0) };
        BoundCheck { spec_id: spec_id.to_string(), p, lhs, lhs_stderr: se, rhs, ratio, ratio_stderr: rse }
    }
}

fn draws<F>(mc_size: usize, rng: &mut Rng, f: F) -> Vec<f64>
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    let seed: u64 = rng.random();
    (0..mc_size as u64).into_par_iter().map(|i| f(&mut derive(seed, &[i]))).collect()
}

fn check_mc(mc_size: usize) -> Result<()> {
    if mc_size < 2 {
        return Err(param("mc_size", "need at least 2"));
    }
    Ok(())
}

pub fn check_pos_bound(spec: &PosLevySpec, p: f64, mc_size: usize, rng: &mut Rng) -> Result<BoundCheck> {
    if !(p > 1.0 && p < 2.0) {
        return Err(param("p", format!("{p} not in (1, 2)")));
    }
    check_mc(mc_size)?;
    let rhs = spec.p_moment(p) + spec.first_moment().powf(p);
    if rhs.is_infinite() {
        return Ok(BoundCheck::build(&spec.label, p, &[f64::INFINITY, f64::INFINITY], rhs));
    }
    let xs = draws(mc_size, rng, |r| spec.sample(r).powf(p));
    Ok(BoundCheck::build(&spec.label, p, &xs, rhs))
}

pub fn check_sym_bound(spec: &SymLevySpec, p: f64, mc_size: usize, rng: &mut Rng) -> Result<BoundCheck> {
    if !(p > 2.0 && p < 4.0) {
        return Err(param("p", format!("{p} not in (2, 4)")));
    }
    check_mc(mc_size)?;
    let rhs = spec.p_moment(p) + spec.second_moment().powf(p / 2.0);
    if rhs.is_infinite() {
        return Ok(BoundCheck::build(&spec.label, p, &[f64::INFINITY, f64::INFINITY], rhs));
    }
    let xs = draws(mc_size, rng, |r| spec.sample(r).abs().powf(p));
    Ok(BoundCheck::build(&spec.label, p, &xs, rhs))
}

/// `E|Y|^p` against `E(Σ_j W_j²)^{p/2}` on the same draws.
pub fn mz_check(spec: &SymLevySpec, p: f64, mc_size: usize, rng: &mut Rng) -> Result<BoundCheck> {
    if !(p > 2.0 && p < 4.0) {
        return Err(param("p", format!("{p} not in (2, 4)")));
    }
    check_mc(mc_size)?;
    let seed: u64 = rng.random();
    let pairs: Vec<(f64, f64)> = (0..mc_size as u64)
        .into_par_iter()
        .map(|i| {
            let (y, q) = spec.sample_with_square_sum(&mut derive(seed, &[i]));
            (y.abs().powf(p), q.powf(p / 2.0))
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let (ma, sa) = mean_stderr(&a);
    let (mb, _) = mean_stderr(&b);
    if mb == 0.0 {
        return Ok(BoundCheck { spec_id: spec.label.clone(), p, lhs: ma, lhs_stderr: sa, rhs: 0.0, ratio: 0.0, ratio_stderr: 0.0 });
    }
    // Delta method for the ratio of means.
    let r = ma / mb;
    let n = pairs.len() as f64;
    let var = pairs.iter().map(|&(x, y)| (x - r * y).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BoundCheck {
        spec_id: spec.label.clone(),
        p,
        lhs: ma,
        lhs_stderr: sa,
        rhs: mb,
        ratio: r,
        ratio_stderr: (var / n).sqrt() / mb,
    })
}

/// A Lévy measure whose bound can be checked at some `p`.
pub trait BoundTarget: Sync {
    fn check(&self, p: f64, mc_size: usize, rng: &mut Rng) -> Result<BoundCheck>;
}

impl BoundTarget for PosLevySpec {
    fn check(&self, p: f64, mc_size: usize, rng: &mut Rng) -> Result<BoundCheck> {
        check_pos_bound(self, p, mc_size, rng)
    }
}

impl BoundTarget for SymLevySpec {
    fn check(&self, p: f64, mc_size: usize, rng: &mut Rng) -> Result<BoundCheck> {
        check_sym_bound(self, p, mc_size, rng)
    }
}

/// Empirical constant: the largest ratio over a calibration family.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub p: f64,
    pub checks: Vec<BoundCheck>,
    pub max_ratio: f64,
    pub max_stderr: f64,
}

/// Holdout ratios against a calibration. Violations are reported, never
/// clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutReport {
    pub checks: Vec<BoundCheck>,
    /// Excess over the calibrated maximum, in combined standard errors.
    pub excess_z: Vec<f64>,
    /// Indices whose excess exceeds 2 standard errors.
    pub violations: Vec<usize>,
}

pub fn calibrate_cp<S: BoundTarget>(family: &[S], p: f64, mc_size: usize, rng: &mut Rng) -> Result<Calibration> {
    if family.len() < 10 {
        return Err(param("family", format!("{} members, need at least 10", family.len())));
    }
    let checks = family.iter().map(|s| s.check(p, mc_size, rng)).collect::<Result<Vec<_>>>()?;
    let best = checks
        .iter()
        .filter(|c| !c.trivially_holds())
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .ok_or_else(|| param("family", "every member has an infinite moment"))?;
    let (max_ratio, max_stderr) = (best.ratio, best.ratio_stderr);
    Ok(Calibration { p, checks, max_ratio, max_stderr })
}

pub fn check_holdout<S: BoundTarget>(cal: &Calibration, holdout: &[S], mc_size: usize, rng: &mut Rng) -> Result<HoldoutReport> {
    let checks = holdout.iter().map(|s| s.check(cal.p, mc_size, rng)).collect::<Result<Vec<_>>>()?;
    let excess_z: Vec<f64> = checks
        .iter()
        .map(|c| {
            let se = (c.ratio_stderr.powi(2) + cal.max_stderr.powi(2)).sqrt();
            if se > 0.0 { (c.ratio - cal.max_ratio) / se } else if c.ratio > cal.max_ratio { f64::INFINITY } else { 0.0 }
        })
        .collect();
    let violations = excess_z.iter().enumerate().filter(|(_, &z)| z > 2.0).map(|(i, _)| i).collect();
    Ok(HoldoutReport { checks, excess_z, violations })
}

/// Symmetric bound checks along the truncations `ν_m = ν|_{|y| > 1/m}` of
/// `|y|^{-1-α} dy` on `0 < |y| ≤ hi`, an infinite measure for every `α > 0`.
pub fn truncation_study(alpha: f64, hi: f64, ms: &[u32], p: f64, mc_size: usize, rng: &mut Rng) -> Result<Vec<(u32, BoundCheck)>> {
    ms.iter()
        .map(|&m| {
            let piece = ParetoPiece::from_density(alpha, 1.0 / m as f64, hi)?;
            // Both half-lines carry the density, so the piece mass doubles.
            let piece = ParetoPiece { mass: 2.0 * piece.mass, ..piece };
            let s = SymLevySpec::new(format!("trunc(alpha={alpha}, m={m})"), vec![], vec![piece])?;
            Ok((m, check_sym_bound(&s, p, mc_size, rng)?))
        })
        .collect()
}

fn pos(label: &str, atoms: &[(f64, f64)], pieces: &[(f64, f64, f64, f64)]) -> PosLevySpec {
    let pieces = pieces.iter().map(|&(m, a, lo, hi)| ParetoPiece::new(m, a, lo, hi).unwrap()).collect();
    PosLevySpec::new(label, atoms.to_vec(), pieces).unwrap()
}

fn sym(label: &str, half: &[(f64, f64)], pieces: &[(f64, f64, f64, f64)]) -> SymLevySpec {
    let pieces = pieces.iter().map(|&(m, a, lo, hi)| ParetoPiece::new(m, a, lo, hi).unwrap()).collect();
    SymLevySpec::symmetrized(label, half, pieces).unwrap()
}

/// Calibration (10 members) and holdout (5 members) families of positive
/// measures, spanning total mass, scale and tail shape.
pub fn standard_pos_families() -> (Vec<PosLevySpec>, Vec<PosLevySpec>) {
    let inf = f64::INFINITY;
    let cal = vec![
        pos("poisson(0.1)", &[(1.0, 0.1)], &[]),
        pos("poisson(1)", &[(1.0, 1.0)], &[]),
        pos("poisson(10)", &[(1.0, 10.0)], &[]),
        pos("two-atoms-a", &[(1.0, 0.5), (5.0, 0.1)], &[]),
        pos("two-atoms-b", &[(0.2, 3.0), (2.0, 0.3)], &[]),
        pos("pareto(1.8)", &[], &[(0.5, 1.8, 1.0, inf)]),
        pos("pareto(1.2,cut)", &[], &[(1.0, 1.2, 1.0, 100.0)]),
        pos("pareto(0.5,cut)", &[], &[(2.0, 0.5, 0.1, 10.0)]),
        pos("atom+pareto(2.5)", &[(1.0, 0.3)], &[(0.3, 2.5, 1.0, inf)]),
        pos("rare-atoms", &[(1.0, 0.03), (10.0, 0.01)], &[]),
    ];
    let hold = vec![
        pos("poisson(0.5)", &[(2.0, 0.5)], &[]),
        pos("poisson(3)", &[(0.3, 3.0)], &[]),
        pos("pareto(1.6)", &[], &[(1.0, 1.6, 0.5, inf)]),
        pos("pareto(1.0,cut)", &[], &[(0.2, 1.0, 1.0, 50.0)]),
        pos("two-atoms-c", &[(0.5, 1.0), (3.0, 0.2)], &[]),
    ];
    (cal, hold)
}

/// Calibration and holdout families of symmetric measures.
pub fn standard_sym_families() -> (Vec<SymLevySpec>, Vec<SymLevySpec>) {
    let inf = f64::INFINITY;
    let cal = vec![
        sym("sym-poisson(0.1)", &[(1.0, 0.1)], &[]),
        sym("sym-poisson(1)", &[(1.0, 1.0)], &[]),
        sym("sym-poisson(10)", &[(1.0, 10.0)], &[]),
        sym("sym-two-atoms-a", &[(1.0, 0.5), (5.0, 0.1)], &[]),
        sym("sym-two-atoms-b", &[(0.2, 3.0), (2.0, 0.3)], &[]),
        sym("sym-pareto(3.5)", &[], &[(0.5, 3.5, 1.0, inf)]),
        sym("sym-pareto(2.2,cut)", &[], &[(1.0, 2.2, 1.0, 100.0)]),
        sym("sym-pareto(0.5,cut)", &[], &[(2.0, 0.5, 0.1, 10.0)]),
        sym("sym-atom+pareto(3)", &[(1.0, 0.3)], &[(0.3, 3.0, 1.0, inf)]),
        sym("sym-rare-atoms", &[(1.0, 0.03), (10.0, 0.01)], &[]),
    ];
    let hold = vec![
        sym("sym-poisson(0.5)", &[(2.0, 0.5)], &[]),
        sym("sym-poisson(3)", &[(0.3, 3.0)], &[]),
        sym("sym-pareto(3.2)", &[], &[(1.0, 3.2, 0.5, inf)]),
        sym("sym-pareto(1.0,cut)", &[], &[(0.2, 1.0, 1.0, 50.0)]),
        sym("sym-two-atoms-c", &[(0.5, 1.0), (3.0, 0.2)], &[]),
    ];
    (cal, hold)
}

/// Ratio table with header `spec-id,p,lhs,rhs,ratio,stderr`.
pub fn write_ratio_csv<W: Write>(rows: &[BoundCheck], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["spec-id", "p", "lhs", "rhs", "ratio", "stderr"])?;
    for r in rows {
        out.write_record([
            r.spec_id.clone(),
            r.p.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.ratio.to_string(),
            r.ratio_stderr.to_string(),
        ])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_moments() {
        let q = ParetoPiece::new(1.0, 1.5, 1.0, f64::INFINITY).unwrap();
        assert!((q.unit_moment(1.0) - 3.0).abs() < 1e-12);
        assert!(q.unit_moment(1.5).is_infinite());
        let d = ParetoPiece::from_density(0.5, 0.25, 4.0).unwrap();
        assert!((d.mass - 2.0 * (2.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn symmetry_is_checked() {
        assert!(SymLevySpec::new("x", vec![(1.0, 1.0), (-1.0, 0.5)], vec![]).is_err());
        assert!(SymLevySpec::new("x", vec![(1.0, 1.0), (-1.0, 1.0)], vec![]).is_ok());
        assert!(PosLevySpec::new("x", vec![(-1.0, 1.0)], vec![]).is_err());
    }
}
