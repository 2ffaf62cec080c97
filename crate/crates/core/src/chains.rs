//! Markov chains with atoms: occupation counts, return times, excursion
//! sums, wandering rates and the lag-covariance variance constant.
//!
//! States are stored as `f64` for every family. A path `Z_0, Z_1, …`
//! starts at `Z_0`; partial sums are `S_m = Σ_{k=1}^m f(Z_k)` and the
//! entrance time is `τ_D = inf{n ≥ 0 : Z_n ∈ D}`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{param, Error, Result};
use crate::mlfrac::{open01, SamplePath};
use crate::rng::{derive, Rng};
use crate::series;

/// Jump law of the countdown renewal chain, given by `P(J > m)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RenewalTail {
    /// `P(J > m) = (1 + m/scale)^{-β}`; `β = 1` is the infinite-mean
    /// harmonic tail.
    Pareto { beta: f64, scale: f64 },
    /// `P(J > m) = log²2 / ((1+m) log²(2+m))`, a finite-mean tail.
    LogSquared,
    /// `P(J > m) = 1 / (1 + log(1+m))`, slowly varying (`β = 0`).
    LogInverse,
}

const J_CAP: f64 = 1e18;

impl RenewalTail {
    pub fn survival(&self, m: f64) -> f64 {
        match *self {
            RenewalTail::Pareto { beta, scale } => (1.0 + m / scale).powf(-beta),
            RenewalTail::LogSquared => {
                let l2 = std::f64::consts::LN_2.powi(2);
                l2 / ((1.0 + m) * (2.0 + m).ln().powi(2))
            }
            RenewalTail::LogInverse => 1.0 / (1.0 + m.ln_1p()),
        }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let u = open01(rng);
        match *self {
            RenewalTail::Pareto { beta, scale } => {
                let v = u.powf(-1.0 / beta);
                (1.0 + (scale * (v - 1.0)).floor()).min(J_CAP)
            }
            RenewalTail::LogInverse => {
                let v = (1.0 / u - 1.0).min(J_CAP.ln()).exp();
                (1.0 + (v - 1.0).floor()).min(J_CAP)
            }
            RenewalTail::LogSquared => {
                // J = min{j ≥ 1 : P(J > j) < u}
                let mut hi = 1.0;
                while self.survival(hi) >= u {
                    hi *= 2.0;
                    if hi >= J_CAP {
                        return J_CAP;
                    }
                }
                let mut lo = (hi / 2.0).floor().max(0.0);
                while hi - lo > 1.0 {
                    let mid = ((lo + hi) / 2.0).floor();
                    if self.survival(mid) >= u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Renewal { tail: RenewalTail, q: usize },
    Ssrw,
    GaussianWalk { cells: usize },
    TwoState { p01: f64, p10: f64 },
    Iid { weights: Vec<f64> },
    Resolvent { base: Box<ChainModel>, p: f64 },
}

/// One atom of `D` with its invariant weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub label: String,
    /// Representative state (left end of the cell for the Gaussian walk).
    pub state: f64,
    pub weight: f64,
}

/// A Harris chain together with a finite union of atoms `D`.
#[derive(Debug, Clone)]
pub struct ChainModel {
    kind: Kind,
    name: String,
    beta: f64,
    atoms: Vec<Atom>,
}

/// Countdown renewal chain on `{0, 1, 2, …}` with `P(J > m) = (1+m/scale)^{-β}`.
///
/// From 0 the chain jumps to `J - 1`, otherwise it decreases by one.
/// `D = {0, …, q-1}` with `q = 2`; `π(m) = P(J > m)`.
pub fn builtin_renewal_chain(beta: f64, tail_scale: f64) -> Result<ChainModel> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param("beta", format!("{beta} not in (0, 1)")));
    }
    if !(tail_scale > 0.0) {
        return Err(param("tail_scale", "must be positive"));
    }
    renewal_chain(RenewalTail::Pareto { beta, scale: tail_scale }, 2)
}

/// Countdown renewal chain with an arbitrary tail and `D = {0, …, q-1}`.
pub fn renewal_chain(tail: RenewalTail, q: usize) -> Result<ChainModel> {
    if q == 0 {
        return Err(param("q", "need at least one atom"));
    }
    let beta = match tail {
        RenewalTail::Pareto { beta, scale } => {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(param("beta", format!("{beta} not in (0, 1]")));
            }
            if !(scale > 0.0) {
                return Err(param("tail_scale", "must be positive"));
            }
            beta
        }
        RenewalTail::LogSquared => 1.0,
        RenewalTail::LogInverse => 0.0,
    };
    let atoms = (0..q)
        .map(|m| Atom {
            label: format!("{m}"),
            state: m as f64,
            weight: tail.survival(m as f64),
        })
        .collect();
    let name = match tail {
        RenewalTail::Pareto { beta, scale } => format!("renewal(beta={beta}, scale={scale}, q={q})"),
        RenewalTail::LogSquared => format!("renewal(log-squared, q={q})"),
        RenewalTail::LogInverse => format!("renewal(log-inverse, q={q})"),
    };
    Ok(ChainModel {
        kind: Kind::Renewal { tail, q },
        name,
        beta,
        atoms,
    })
}

/// Simple symmetric random walk on ℤ with `D = {0} ∪ {1}`.
pub fn builtin_ssrw_chain() -> ChainModel {
    ChainModel {
        kind: Kind::Ssrw,
        name: "ssrw".into(),
        beta: 0.5,
        atoms: vec![
            Atom { label: "0".into(), state: 0.0, weight: 1.0 },
            Atom { label: "1".into(), state: 1.0, weight: 1.0 },
        ],
    }
}

/// Random walk on ℝ with standard Gaussian steps, `D = [0, 1]` split into
/// `cells` equal cells (Lebesgue invariant measure).
pub fn builtin_gaussian_walk(cells: usize) -> Result<ChainModel> {
    if cells == 0 {
        return Err(param("cells", "need at least one cell"));
    }
    let h = 1.0 / cells as f64;
    Ok(ChainModel {
        kind: Kind::GaussianWalk { cells },
        name: format!("gaussian-walk(cells={cells})"),
        beta: 0.5,
        atoms: (0..cells)
            .map(|i| Atom {
                label: format!("[{},{})", i as f64 * h, (i + 1) as f64 * h),
                state: i as f64 * h,
                weight: h,
            })
            .collect(),
    })
}

/// Two-state chain with flip probabilities `p01`, `p10` and `D = {0}`.
pub fn two_state_chain(p01: f64, p10: f64) -> Result<ChainModel> {
    for (name, p) in [("p01", p01), ("p10", p10)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(param(name, format!("{p} not in (0, 1]")));
        }
    }
    let pi0 = p10 / (p01 + p10);
    Ok(ChainModel {
        kind: Kind::TwoState { p01, p10 },
        name: format!("two-state(p01={p01}, p10={p10})"),
        beta: 1.0,
        atoms: vec![Atom { label: "0".into(), state: 0.0, weight: pi0 }],
    })
}

/// Chain on `{0, …, K-1}` whose next state ignores the current one.
pub fn iid_chain(weights: &[f64]) -> Result<ChainModel> {
    if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0)) {
        return Err(param("weights", "need positive weights"));
    }
    let s: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|x| x / s).collect();
    Ok(ChainModel {
        atoms: w
            .iter()
            .enumerate()
            .map(|(i, &p)| Atom { label: format!("{i}"), state: i as f64, weight: p })
            .collect(),
        kind: Kind::Iid { weights: w },
        name: format!("iid(K={})", weights.len()),
        beta: 1.0,
    })
}

/// The chain observed at Bernoulli(1-p) sampling epochs: kernel
/// `P_p = (1-p) Σ_k p^{k-1} P^k`.
pub fn resolvent_chain(model: &ChainModel, p: f64) -> Result<ChainModel> {
    if !(p > 0.0 && p < 1.0) {
        return Err(param("p", format!("{p} not in (0, 1)")));
    }
    Ok(ChainModel {
        name: format!("resolvent({}, p={p})", model.name),
        beta: model.beta,
        atoms: model.atoms.clone(),
        kind: Kind::Resolvent { base: Box::new(model.clone()), p },
    })
}

/// Gap between sampling epochs of the resolvent chain:
/// `P(G = k) = (1-p) p^{k-1}`, `k ≥ 1`.
pub fn sample_resolvent_gap(p: f64, rng: &mut Rng) -> u64 {
    Geometric::new(1.0 - p).unwrap().sample(rng) + 1
}

/// Initial law of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    State(f64),
    Atom(usize),
    /// `ν = π(· ∩ D)/π(D)`.
    Nu,
    /// `μ_n`: the invariant path measure conditioned on `τ_D ≤ n`.
    MuN(u64),
}

impl ChainModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn q(&self) -> usize {
        self.atoms.len()
    }

    /// `π(D)`.
    pub fn pi_d(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn is_renewal(&self) -> bool {
        matches!(self.kind, Kind::Renewal { .. })
    }

    /// Invariant density (counting density on discrete spaces).
    pub fn pi_density(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Renewal { tail, .. } => {
                if x >= 0.0 && x.fract() == 0.0 {
                    tail.survival(x)
                } else {
                    0.0
                }
            }
            Kind::Ssrw => {
                if x.fract() == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::GaussianWalk { .. } => 1.0,
            Kind::TwoState { p01, p10 } => match x as i64 {
                0 => p10 / (p01 + p10),
                1 => p01 / (p01 + p10),
                _ => 0.0,
            },
            Kind::Iid { weights } => weights.get(x as usize).copied().unwrap_or(0.0),
            Kind::Resolvent { base, .. } => base.pi_density(x),
        }
    }

    /// Index of the atom containing `x`, if `x ∈ D`.
    pub fn atom_of(&self, x: f64) -> Option<usize> {
        match &self.kind {
            Kind::Renewal { q, .. } => (x >= 0.0 && x < *q as f64).then_some(x as usize),
            Kind::Ssrw => (x == 0.0 || x == 1.0).then_some(x as usize),
            Kind::GaussianWalk { cells } => {
                if (0.0..=1.0).contains(&x) {
                    Some(((x * *cells as f64) as usize).min(cells - 1))
                } else {
                    None
                }
            }
            Kind::TwoState { .. } => (x == 0.0).then_some(0),
            Kind::Iid { weights } => ((x as usize) < weights.len()).then_some(x as usize),
            Kind::Resolvent { base, .. } => base.atom_of(x),
        }
    }

    /// One transition.
    pub fn step(&self, x: f64, rng: &mut Rng) -> f64 {
        match &self.kind {
            Kind::Renewal { tail, .. } => {
                if x == 0.0 {
                    tail.sample(rng) - 1.0
                } else {
                    x - 1.0
                }
            }
            Kind::Ssrw => {
                if rng.random::<bool>() {
                    x + 1.0
                } else {
                    x - 1.0
                }
            }
            Kind::GaussianWalk { .. } => {
                let z: f64 = StandardNormal.sample(rng);
                x + z
            }
            Kind::TwoState { p01, p10 } => {
                let u: f64 = rng.random();
                if x == 0.0 {
                    if u < *p01 { 1.0 } else { 0.0 }
                } else if u < *p10 {
                    0.0
                } else {
                    1.0
                }
            }
            Kind::Iid { weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return i as f64;
                    }
                }
                (weights.len() - 1) as f64
            }
            Kind::Resolvent { base, p } => {
                let k = sample_resolvent_gap(*p, rng);
                base.advance(x, k, rng)
            }
        }
    }

    /// `k` transitions.
    pub fn advance(&self, mut x: f64, mut k: u64, rng: &mut Rng) -> f64 {
        if let Kind::Renewal { tail, .. } = &self.kind {
            while k > 0 {
                if x == 0.0 {
                    x = tail.sample(rng) - 1.0;
                    k -= 1;
                } else {
                    let d = x.min(k as f64);
                    x -= d;
                    k -= d as u64;
                }
            }
            return x;
        }
        for _ in 0..k {
            x = self.step(x, rng);
        }
        x
    }

    /// Calls `visit(k, atom)` for every `k ∈ [1, n]` with `Z_k ∈ D`.
    pub fn for_each_visit(&self, x0: f64, n: u64, rng: &mut Rng, mut visit: impl FnMut(u64, usize)) {
        if let Kind::Renewal { tail, q } = &self.kind {
            let q = *q as f64;
            let (mut t, mut x) = (0u64, x0);
            loop {
                if x == 0.0 {
                    t += 1;
                    if t > n {
                        return;
                    }
                    x = tail.sample(rng) - 1.0;
                    if x < q {
                        visit(t, x as usize);
                    }
                } else {
                    // Countdown through x-1, …, 0; D-states are the last min(x, q) of them.
                    let top = (x - 1.0).min(q - 1.0);
                    let first = t as f64 + (x - top);
                    if first > n as f64 {
                        return;
                    }
                    let first = first as u64;
                    for s in (0..=top as u64).rev() {
                        let tt = first + (top as u64 - s);
                        if tt > n {
                            return;
                        }
                        visit(tt, s as usize);
                    }
                    t += x as u64;
                    x = 0.0;
                }
            }
        }
        let mut x = x0;
        for k in 1..=n {
            x = self.step(x, rng);
            if let Some(a) = self.atom_of(x) {
                visit(k, a);
            }
        }
    }

    /// A draw from `ν = π(· ∩ D)/π(D)`.
    pub fn sample_nu(&self, rng: &mut Rng) -> f64 {
        let u = rng.random::<f64>() * self.pi_d();
        let mut acc = 0.0;
        let mut idx = self.atoms.len() - 1;
        for (i, a) in self.atoms.iter().enumerate() {
            acc += a.weight;
            if u < acc {
                idx = i;
                break;
            }
        }
        match self.kind {
            Kind::GaussianWalk { cells } => self.atoms[idx].state + rng.random::<f64>() / cells as f64,
            Kind::Resolvent { ref base, .. } if matches!(base.kind, Kind::GaussianWalk { .. }) => {
                base.sample_nu(rng)
            }
            _ => self.atoms[idx].state,
        }
    }

    /// `o_k = π(D)^{-1} P_ν(Z_k ∈ D)` for `k = 0..=len`, when available in
    /// closed form; `a_n = Σ_{k=1}^n o_k`.
    pub fn occupation_sequence(&self, len: usize) -> Option<Vec<f64>> {
        let pd = self.pi_d();
        match &self.kind {
            Kind::Renewal { tail, q } => {
                let h = renewal_hits(tail, *q, len);
                let mut o = vec![0.0; len + 1];
                for (k, ok) in o.iter_mut().enumerate() {
                    let mut s = self.atoms[0].weight * h[k];
                    for m in 1..*q {
                        let v = if k < m { 1.0 } else { h[k - m] };
                        s += self.atoms[m].weight * v;
                    }
                    *ok = s / (pd * pd);
                }
                Some(o)
            }
            Kind::Ssrw => Some(
                (0..=len)
                    .map(|k| {
                        let j = if k % 2 == 0 { 0 } else { 1 };
                        0.5 * binom_pmf_centered(k as u64, j)
                    })
                    .collect(),
            ),
            Kind::GaussianWalk { .. } => Some(
                (0..=len)
                    .map(|k| if k == 0 { 1.0 } else { gauss_unit_interval_return(k as f64) })
                    .collect(),
            ),
            Kind::TwoState { p01, p10 } => {
                let pi0 = p10 / (p01 + p10);
                let lam = 1.0 - p01 - p10;
                Some(
                    (0..=len)
                        .map(|k| (pi0 + (1.0 - pi0) * lam.powi(k as i32)) / pi0)
                        .collect(),
                )
            }
            Kind::Iid { .. } => Some(vec![1.0; len + 1]),
            Kind::Resolvent { .. } => None,
        }
    }

    /// `a_1, …, a_{n_max}` (index 0 holds 0).
    pub fn exact_an_table(&self, n_max: usize) -> Option<Vec<f64>> {
        if let Kind::Resolvent { base, p } = &self.kind {
            return resolvent_an_table(base, *p, n_max);
        }
        let o = self.occupation_sequence(n_max)?;
        let mut a = vec![0.0; n_max + 1];
        for k in 1..=n_max {
            a[k] = a[k - 1] + o[k];
        }
        Some(a)
    }

    pub fn exact_an(&self, n: usize) -> Option<f64> {
        self.exact_an_table(n).map(|a| a[n])
    }

    /// `μ(τ_D ≤ n)` in closed form, when available.
    pub fn exact_wandering(&self, n: u64) -> Option<f64> {
        match &self.kind {
            Kind::Renewal { tail, q } => {
                let top = n + *q as u64 - 1;
                Some(kahan((0..=top).map(|m| tail.survival(m as f64))))
            }
            Kind::Ssrw => {
                // 2 + 2 Σ_{d≥1} P(max_{k≤n} S_k ≥ d) = 2 + 2(E S_n^+ + E (S_n - 1)^+)
                let mut acc = 0.0;
                let nn = n as i64;
                let mut j = nn;
                while j > 0 {
                    let pr = binom_pmf_centered(n, j);
                    acc += pr * (j as f64 + (j - 1) as f64);
                    j -= 2;
                }
                Some(2.0 + 2.0 * acc)
            }
            Kind::Resolvent { .. } => None,
            Kind::TwoState { .. } | Kind::Iid { .. } | Kind::GaussianWalk { .. } => None,
        }
    }

    /// Exact `P^k(𝔞_i, 𝔞_j)` for `k = 1..=k_max`, indexed `[k-1][i][j]`.
    pub fn atom_transitions(&self, k_max: usize) -> Option<Vec<Vec<Vec<f64>>>> {
        let q = self.q();
        match &self.kind {
            Kind::Renewal { tail, .. } => {
                let u = renewal_sequence(tail, k_max);
                // from0[s][k] = P^k(0, s)
                let mut from0 = vec![u.clone()];
                for s in 1..q {
                    let e: Vec<f64> = (0..=k_max)
                        .map(|d| {
                            if d == 0 {
                                0.0
                            } else {
                                tail.survival((s + d - 1) as f64) - tail.survival((s + d) as f64)
                            }
                        })
                        .collect();
                    from0.push(series::mul_trunc(&u, &e, k_max + 1));
                }
                Some(
                    (1..=k_max)
                        .map(|k| {
                            (0..q)
                                .map(|m| {
                                    (0..q)
                                        .map(|s| {
                                            if k < m {
                                                if m - k == s { 1.0 } else { 0.0 }
                                            } else {
                                                from0[s][k - m]
                                            }
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            Kind::Ssrw => Some(
                (1..=k_max)
                    .map(|k| {
                        let k = k as u64;
                        vec![
                            vec![binom_pmf_centered(k, 0), binom_pmf_centered(k, 1)],
                            vec![binom_pmf_centered(k, 1), binom_pmf_centered(k, 0)],
                        ]
                    })
                    .collect(),
            ),
            Kind::TwoState { p01, p10 } => {
                let pi0 = p10 / (p01 + p10);
                let lam = 1.0 - p01 - p10;
                Some(
                    (1..=k_max)
                        .map(|k| vec![vec![pi0 + (1.0 - pi0) * lam.powi(k as i32)]])
                        .collect(),
                )
            }
            Kind::Iid { weights } => Some(vec![vec![weights.clone(); q]; k_max]),
            Kind::GaussianWalk { .. } | Kind::Resolvent { .. } => None,
        }
    }

    /// First `n ≥ 0` with `Z_n ∈ D`, up to `n_max`, with the state there.
    pub fn entrance(&self, x0: f64, n_max: u64, rng: &mut Rng) -> Option<(u64, f64)> {
        if self.atom_of(x0).is_some() {
            return Some((0, x0));
        }
        if let Kind::Renewal { q, .. } = &self.kind {
            let tau = (x0 - (*q as f64 - 1.0)) as u64;
            return (tau <= n_max).then_some((tau, (*q - 1) as f64));
        }
        let mut x = x0;
        for k in 1..=n_max {
            x = self.step(x, rng);
            if self.atom_of(x).is_some() {
                return Some((k, x));
            }
        }
        None
    }

    /// Partial sums `S_t(f)` at the sorted `times`, started from `x0`.
    pub fn partial_sums_at(&self, x0: f64, f: &FSpec, times: &[u64], rng: &mut Rng) -> Vec<f64> {
        let n = times.last().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(times.len());
        let mut idx = 0;
        let mut s = 0.0;
        self.for_each_visit(x0, n, rng, |k, a| {
            while idx < times.len() && times[idx] < k {
                out.push(s);
                idx += 1;
            }
            s += f.values[a];
        });
        while out.len() < times.len() {
            out.push(s);
        }
        out
    }

    /// Initial state under `start`.
    pub fn sample_start(&self, start: Start, rng: &mut Rng) -> Result<f64> {
        match start {
            Start::State(x) => Ok(x),
            Start::Atom(i) => self
                .atoms
                .get(i)
                .map(|a| a.state)
                .ok_or_else(|| param("start", format!("no atom {i}"))),
            Start::Nu => Ok(self.sample_nu(rng)),
            Start::MuN(n) => Ok(MuNSampler::new(self, n)?.sample(rng).start),
        }
    }
}

fn kahan(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for x in it {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// `P(S_k = j)` for the simple symmetric random walk.
fn binom_pmf_centered(k: u64, j: i64) -> f64 {
    let k_i = k as i64;
    if j.abs() > k_i || (k_i + j) % 2 != 0 {
        return 0.0;
    }
    let up = ((k_i + j) / 2) as f64;
    let kf = k as f64;
    (ln_gamma(kf + 1.0) - ln_gamma(up + 1.0) - ln_gamma(kf - up + 1.0) - kf * std::f64::consts::LN_2).exp()
}

/// `P(U + σN ∈ [0,1])` for `U` uniform on `[0,1]`, `σ² = k`.
fn gauss_unit_interval_return(k: f64) -> f64 {
    let s = k.sqrt();
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
    2.0 * ((cdf(1.0 / s) - 0.5) - s * (phi(0.0) - phi(1.0 / s)))
}

/// Renewal sequence `u_k = P_0(Z_k = 0)`, `k = 0..=len`, from the power
/// series identity `U(z) = 1 / (1 - F(z))`.
pub fn renewal_sequence(tail: &RenewalTail, len: usize) -> Vec<f64> {
    let mut g = vec![0.0; len + 1];
    g[0] = 1.0;
    for (j, gj) in g.iter_mut().enumerate().skip(1) {
        *gj = -(tail.survival((j - 1) as f64) - tail.survival(j as f64));
    }
    series::inverse(&g, len + 1)
}

/// `h_k = P_0(Z_k ∈ D)` for `D = {0, …, q-1}`.
fn renewal_hits(tail: &RenewalTail, q: usize, len: usize) -> Vec<f64> {
    let u = renewal_sequence(tail, len);
    if q == 1 {
        return u;
    }
    let g: Vec<f64> = (0..=len)
        .map(|d| {
            if d == 0 {
                1.0
            } else {
                tail.survival(d as f64) - tail.survival((d + q - 1) as f64)
            }
        })
        .collect();
    series::mul_trunc(&u, &g, len + 1)
}

/// `a_n` of the resolvent chain from the base occupation sequence; the
/// sampling epochs `Γ_1 < Γ_2 < …` form a Bernoulli(1-p) process.
fn resolvent_an_table(base: &ChainModel, p: f64, n_max: usize) -> Option<Vec<f64>> {
    let r = 1.0 - p;
    let j_max = ((n_max as f64 + 12.0 * (n_max as f64).sqrt() + 60.0) / r).ceil() as usize;
    let o = base.occupation_sequence(j_max)?;
    let mut a = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        // a_n - a_{n-1} = E o_{Γ_n}, P(Γ_n = j) = C(j-1, n-1) r^n p^{j-n}
        let c = (n - 1) as f64;
        let mut acc = 0.0;
        let mean = n as f64 / r;
        let sd = (n as f64 * p).sqrt() / r;
        let lo = n.max((mean - 12.0 * sd - 10.0).floor().max(0.0) as usize);
        let hi = ((mean + 12.0 * sd + 10.0).ceil() as usize).min(j_max);
        for (j, &oj) in o.iter().enumerate().take(hi + 1).skip(lo) {
            let jm = (j - 1) as f64;
            let lp = ln_gamma(jm + 1.0) - ln_gamma(c + 1.0) - ln_gamma(jm - c + 1.0)
                + n as f64 * r.ln()
                + (j - n) as f64 * p.ln();
            acc += oj * lp.exp();
        }
        a[n] = a[n - 1] + acc;
    }
    Some(a)
}

/// Values of `f` on the atoms of `D` (zero off `D`).
#[derive(Debug, Clone, PartialEq)]
pub struct FSpec {
    pub values: Vec<f64>,
}

impl FSpec {
    /// Requires `Σ_i π(𝔞_i) f(𝔞_i) = 0`.
    pub fn new(model: &ChainModel, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.q() {
            return Err(param("f", format!("expected {} atom values, got {}", model.q(), values.len())));
        }
        let mean: f64 = model.atoms.iter().zip(&values).map(|(a, v)| a.weight * v).sum();
        let scale: f64 = model.atoms.iter().zip(&values).map(|(a, v)| (a.weight * v).abs()).sum();
        if mean.abs() > 1e-12 * scale.max(1e-300) {
            return Err(param("f", format!("π-mean of f is {mean:e}, not 0")));
        }
        Ok(FSpec { values })
    }

    pub fn zero(model: &ChainModel) -> Self {
        FSpec { values: vec![0.0; model.q()] }
    }

    /// Two-atom mean-zero function `(c, -c π(𝔞_0)/π(𝔞_1))`.
    pub fn balanced(model: &ChainModel, c: f64) -> Result<Self> {
        if model.q() != 2 {
            return Err(param("f", "balanced f needs exactly two atoms"));
        }
        let (w0, w1) = (model.atoms[0].weight, model.atoms[1].weight);
        Ok(FSpec { values: vec![c, -c * w0 / w1] })
    }

    pub fn scaled(&self, c: f64) -> Self {
        FSpec { values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn eval(&self, model: &ChainModel, x: f64) -> f64 {
        model.atom_of(x).map_or(0.0, |a| self.values[a])
    }

    /// `∫ f² dπ`.
    pub fn l2(&self, model: &ChainModel) -> f64 {
        model.atoms.iter().zip(&self.values).map(|(a, v)| a.weight * v * v).sum()
    }

    /// `Σ_i π(𝔞_i) |f(𝔞_i)|^α`.
    pub fn abs_moment(&self, model: &ChainModel, alpha: f64) -> f64 {
        model.atoms.iter().zip(&self.values).map(|(a, v)| a.weight * v.abs().powf(alpha)).sum()
    }
}

/// Return times to a set and the excursion sums between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnRecord {
    /// `τ(1) < τ(2) < …` up to the horizon.
    pub tau: Vec<u64>,
    /// `ξ_k = Σ_{τ(k-1) < j ≤ τ(k)} f(Z_j)`.
    pub excursions: Vec<f64>,
    /// Partial sum after the last return, up to the horizon.
    pub tail_sum: f64,
}

impl ReturnRecord {
    /// Builds the record for the set `in_set` from `Z_0..Z_n` and `f(Z_k)`.
    pub fn from_path(states: &[f64], fvals: &[f64], in_set: impl Fn(f64) -> bool) -> Self {
        let mut tau = Vec::new();
        let mut excursions = Vec::new();
        let mut acc = 0.0;
        for k in 1..states.len() {
            acc += fvals[k];
            if in_set(states[k]) {
                tau.push(k as u64);
                excursions.push(acc);
                acc = 0.0;
            }
        }
        ReturnRecord { tau, excursions, tail_sum: acc }
    }

    /// `ℓ(n) = #{k : τ(k) ≤ n}`.
    pub fn local_time(&self, n: u64) -> usize {
        self.tau.partition_point(|&t| t <= n)
    }
}

/// One simulated path with its partial sums.
#[derive(Debug, Clone)]
pub struct ChainRun {
    /// `S_m(f)` on the grid `m = 0..=n`.
    pub path: SamplePath,
    /// `Z_0, …, Z_n`.
    pub states: Vec<f64>,
    /// `f(Z_0), …, f(Z_n)`.
    pub fvals: Vec<f64>,
    /// Returns to `D`.
    pub record: ReturnRecord,
}

impl ChainRun {
    /// CSV with columns `step,state,f,partial_sum`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "state", "f", "partial_sum"])?;
        for (k, ((x, fv), s)) in self.states.iter().zip(&self.fvals).zip(&self.path.values).enumerate() {
            wr.write_record([k.to_string(), format!("{x}"), format!("{fv}"), format!("{s}")])?;
        }
        wr.flush()
    }
}

/// Simulates `Z_0, …, Z_n` step by step and records partial sums of `f`
/// and returns to `D`.
pub fn run_chain(model: &ChainModel, start: Start, n: u64, f: &FSpec, rng: &mut Rng) -> Result<ChainRun> {
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    if f.values.len() != model.q() {
        return Err(param("f", "value count does not match atoms"));
    }
    let mut x = model.sample_start(start, rng)?;
    let mut states = Vec::with_capacity(n as usize + 1);
    let mut fvals = Vec::with_capacity(n as usize + 1);
    let mut sums = Vec::with_capacity(n as usize + 1);
    states.push(x);
    fvals.push(f.eval(model, x));
    sums.push(0.0);
    let mut s = 0.0;
    for _ in 0..n {
        x = model.step(x, rng);
        let v = f.eval(model, x);
        s += v;
        states.push(x);
        fvals.push(v);
        sums.push(s);
    }
    let record = ReturnRecord::from_path(&states, &fvals, |z| model.atom_of(z).is_some());
    let grid = (0..=n).map(|k| k as f64).collect();
    Ok(ChainRun {
        path: SamplePath::new(grid, sums, format!("S_n(f) {}", model.name)),
        states,
        fvals,
        record,
    })
}

/// Monte Carlo estimate of `a_n(ν, D)` with its standard error and the
/// closed form when the model has one.
#[derive(Debug, Clone, Copy)]
pub struct AnEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub exact: Option<f64>,
}

pub fn estimate_an(model: &ChainModel, n: u64, replicates: usize, rng: &mut Rng) -> Result<AnEstimate> {
    if replicates == 0 {
        return Err(param("replicates", "must be at least 1"));
    }
    let seed: u64 = rng.random();
    let pd = model.pi_d();
    let counts: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = derive(seed, &[i]);
            let x0 = model.sample_nu(&mut r);
            let mut c = 0u64;
            model.for_each_visit(x0, n, &mut r, |_, _| c += 1);
            c as f64 / pd
        })
        .collect();
    let (mean, stderr) = crate::stats::mean_stderr(&counts);
    let exact = if n <= 4_000_000 { model.exact_an(n as usize) } else { None };
    Ok(AnEstimate { mean, stderr, exact })
}

/// `μ(τ_D ≤ n)` from the model's closed form.
pub fn wandering_rate(model: &ChainModel, n: u64) -> Result<f64> {
    model.exact_wandering(n).ok_or_else(|| {
        Error::Unsupported(format!(
            "{} has no closed-form wandering rate; supply a proposal for importance sampling",
            model.name
        ))
    })
}

type Sampler = Arc<dyn Fn(&mut Rng) -> f64 + Send + Sync>;
type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A proposal law for start states, with its density relative to the
/// reference measure of the invariant density.
#[derive(Clone)]
pub struct Proposal {
    sample: Sampler,
    density: Density,
}

impl Proposal {
    pub fn new(
        sample: impl Fn(&mut Rng) -> f64 + Send + Sync + 'static,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Proposal { sample: Arc::new(sample), density: Arc::new(density) }
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Self {
        let w = hi - lo;
        Proposal::new(
            move |r| lo + w * r.random::<f64>(),
            move |x| if (lo..=hi).contains(&x) { 1.0 / w } else { 0.0 },
        )
    }

    /// Uniform on the integers `lo..=hi`.
    pub fn uniform_int(lo: i64, hi: i64) -> Self {
        let m = (hi - lo + 1) as f64;
        Proposal::new(
            move |r| r.random_range(lo..=hi) as f64,
            move |x| if x >= lo as f64 && x <= hi as f64 && x.fract() == 0.0 { 1.0 / m } else { 0.0 },
        )
    }
}

/// Importance-sampling estimate `(mean, stderr)` of `μ(τ_D ≤ n)` under a
/// proposal for the start state.
pub fn wandering_rate_is(
    model: &ChainModel,
    n: u64,
    proposal: &Proposal,
    replicates: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if replicates < 2 {
        return Err(param("replicates", "need at least 2"));
    }
    let seed: u64 = rng.random();
    let w: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = derive(seed, &[i]);
            let x = (proposal.sample)(&mut r);
            let q = (proposal.density)(x);
            if q <= 0.0 {
                return 0.0;
            }
            match model.entrance(x, n, &mut r) {
                Some(_) => model.pi_density(x) / q,
                None => 0.0,
            }
        })
        .collect();
    Ok(crate::stats::mean_stderr(&w))
}

/// Result of the lag-covariance series for `σ_f²`.
#[derive(Debug, Clone)]
pub struct SigmaF {
    pub sigma2: f64,
    /// Lag at which the partial sums settled (a power of two).
    pub k_used: usize,
    /// Partial sums `∫f²dπ + 2 Σ_{i≤k} ∫ f P^i f dπ`, `k = 0..=k_used`.
    pub partial_sums: Vec<f64>,
}

const SIGMA_RTOL: f64 = 1e-3;

fn settle(terms: impl Iterator<Item = f64>, l2: f64, k_max: usize) -> Result<SigmaF> {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    let mut sums = vec![l2];
    let mut s = l2;
    for c in terms.take(k_max) {
        s += 2.0 * c;
        sums.push(s);
        let k = sums.len() - 1;
        // Compare the partial sums at lags k/4, k/2, k, and k-1 against k
        // so that period-2 oscillation is not mistaken for convergence.
        if k >= 16 && k.is_power_of_two() {
            let (a, b) = (sums[k / 4], sums[k / 2]);
            if rel(s, b) < SIGMA_RTOL && rel(b, a) < SIGMA_RTOL && rel(s, sums[k - 1]) < SIGMA_RTOL {
                return Ok(SigmaF { sigma2: s, k_used: k, partial_sums: sums });
            }
        }
    }
    let k = sums.len() - 1;
    let last_change = if k >= 2 { rel(sums[k], sums[k / 2]) } else { f64::NAN };
    Err(Error::NotConverged { k_max, last_change })
}

/// `σ_f² = ∫f²dπ + 2 Σ_{k≥1} ∫ f P^k f dπ`, with exact `k`-step atom
/// transition probabilities. Partial sums are checked at lags `16, 32, 64, …`
/// and the series is accepted once the sums at lags `k/4`, `k/2`, `k - 1`
/// and `k` agree to relative `10⁻³`.
pub fn sigma_f(model: &ChainModel, f: &FSpec, k_max: usize) -> Result<SigmaF> {
    let q = model.q();
    let w: Vec<f64> = model.atoms.iter().map(|a| a.weight).collect();
    // Short horizons first; the outcome does not depend on the horizon.
    let mut cap = k_max.min(1024);
    loop {
        let pk = model.atom_transitions(cap).ok_or_else(|| {
            Error::Unsupported(format!("{} has no exact atom transitions; use sigma_f_mc", model.name))
        })?;
        let terms = pk.into_iter().map(|m| {
            (0..q)
                .map(|i| (0..q).map(|j| w[i] * f.values[i] * m[i][j] * f.values[j]).sum::<f64>())
                .sum::<f64>()
        });
        match settle(terms, f.l2(model), cap) {
            Err(Error::NotConverged { .. }) if cap < k_max => cap = (cap * 8).min(k_max),
            Err(Error::NotConverged { last_change, .. }) => {
                return Err(Error::NotConverged { k_max, last_change })
            }
            other => return other,
        }
    }
}

/// The series truncated at `k_max`, with `P^k(𝔞_i, 𝔞_j)` estimated from
/// `paths` simulated chains per atom. No convergence check is made: Monte
/// Carlo noise in the terms defeats the relative monitor of [`sigma_f`].
pub fn sigma_f_mc(model: &ChainModel, f: &FSpec, k_max: usize, paths: usize, rng: &mut Rng) -> Result<SigmaF> {
    let q = model.q();
    let seed: u64 = rng.random();
    // counts[i][k][j]
    let counts: Vec<Vec<Vec<f64>>> = (0..q)
        .map(|i| {
            let tot = (0..paths as u64)
                .into_par_iter()
                .fold(
                    || vec![vec![0u64; q]; k_max],
                    |mut c, p| {
                        let mut r = derive(seed, &[i as u64, p]);
                        let x0 = match model.kind {
                            Kind::GaussianWalk { cells } => model.atoms[i].state + r.random::<f64>() / cells as f64,
                            _ => model.atoms[i].state,
                        };
                        model.for_each_visit(x0, k_max as u64, &mut r, |k, a| c[k as usize - 1][a] += 1);
                        c
                    },
                )
                .reduce(
                    || vec![vec![0u64; q]; k_max],
                    |mut a, b| {
                        for (ra, rb) in a.iter_mut().zip(b) {
                            for (x, y) in ra.iter_mut().zip(rb) {
                                *x += y;
                            }
                        }
                        a
                    },
                );
            tot.into_iter()
                .map(|row| row.into_iter().map(|c| c as f64 / paths as f64).collect())
                .collect::<Vec<Vec<f64>>>()
        })
        .collect();
    let w: Vec<f64> = model.atoms.iter().map(|a| a.weight).collect();
    let terms = (0..k_max).map(|k| {
        (0..q)
            .map(|i| (0..q).map(|j| w[i] * f.values[i] * counts[i][k][j] * f.values[j]).sum::<f64>())
            .sum::<f64>()
    });
    let mut sums = vec![f.l2(model)];
    for c in terms {
        sums.push(sums[sums.len() - 1] + 2.0 * c);
    }
    Ok(SigmaF { sigma2: sums[k_max], k_used: k_max, partial_sums: sums })
}

/// Start of a path under `μ_n`, its entrance time and entrance state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntrancePoint {
    pub start: f64,
    pub tau: u64,
    pub state: f64,
}

/// Sampler for `μ_n`, the path measure conditioned on `τ_D ≤ n`.
#[derive(Clone)]
pub struct MuNSampler {
    model: ChainModel,
    n: u64,
    method: MuNMethod,
}

#[derive(Clone)]
enum MuNMethod {
    /// Cumulative weights `P(J > m)`, `m ≤ n + q - 1`.
    Table(Vec<f64>),
    Rejection { proposal: Proposal, bound: f64 },
}

impl MuNSampler {
    /// Exact sampler for the renewal chain.
    pub fn new(model: &ChainModel, n: u64) -> Result<Self> {
        match &model.kind {
            Kind::Renewal { tail, q } => {
                let top = n + *q as u64 - 1;
                let mut cum = Vec::with_capacity(top as usize + 1);
                let mut acc = 0.0;
                for m in 0..=top {
                    acc += tail.survival(m as f64);
                    cum.push(acc);
                }
                Ok(MuNSampler { model: model.clone(), n, method: MuNMethod::Table(cum) })
            }
            _ => Err(Error::Unsupported(format!(
                "{} needs a proposal for μ_n sampling",
                model.name
            ))),
        }
    }

    /// Rejection sampler: start `x` from the proposal, kept with probability
    /// `π(x) / (bound · q(x))`, then kept only if `τ_D ≤ n`. Fails with an
    /// efficiency error if a pilot run accepts less than `floor`.
    pub fn by_rejection(
        model: &ChainModel,
        n: u64,
        proposal: Proposal,
        bound: f64,
        floor: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let s = MuNSampler {
            model: model.clone(),
            n,
            method: MuNMethod::Rejection { proposal, bound },
        };
        let pilot = 2000;
        let acc = (0..pilot).filter(|_| s.try_once(rng).is_some()).count();
        let rate = acc as f64 / pilot as f64;
        if rate < floor {
            return Err(Error::Efficiency { rate, floor });
        }
        Ok(s)
    }

    fn try_once(&self, rng: &mut Rng) -> Option<EntrancePoint> {
        let MuNMethod::Rejection { proposal, bound } = &self.method else {
            return None;
        };
        let x = (proposal.sample)(rng);
        let qd = (proposal.density)(x);
        if qd <= 0.0 || rng.random::<f64>() * bound * qd > self.model.pi_density(x) {
            return None;
        }
        self.model
            .entrance(x, self.n, rng)
            .map(|(tau, state)| EntrancePoint { start: x, tau, state })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn model(&self) -> &ChainModel {
        &self.model
    }

    pub fn sample(&self, rng: &mut Rng) -> EntrancePoint {
        match &self.method {
            MuNMethod::Table(cum) => {
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let m = cum.partition_point(|&c| c <= u).min(cum.len() - 1) as f64;
                let q = self.model.q() as f64;
                let tau = (m - (q - 1.0)).max(0.0);
                EntrancePoint { start: m, tau: tau as u64, state: m - tau }
            }
            MuNMethod::Rejection { .. } => loop {
                if let Some(e) = self.try_once(rng) {
                    return e;
                }
            },
        }
    }

    /// `Ŝ_t(f) = Σ_{k=1}^t f(Z_k)` at the sorted `times` for a fresh
    /// `μ_n` path.
    pub fn partial_sums(&self, f: &FSpec, times: &[u64], rng: &mut Rng) -> (EntrancePoint, Vec<f64>) {
        let e = self.sample(rng);
        (e, self.partial_sums_from(&e, f, times, rng))
    }

    /// Continues a sampled entrance point to partial sums at `times`.
    pub fn partial_sums_from(&self, e: &EntrancePoint, f: &FSpec, times: &[u64], rng: &mut Rng) -> Vec<f64> {
        let first = if e.tau >= 1 { f.eval(&self.model, e.state) } else { 0.0 };
        let shifted: Vec<u64> = times.iter().map(|&t| t.saturating_sub(e.tau)).collect();
        let tail = self.model.partial_sums_at(e.state, f, &shifted, rng);
        times
            .iter()
            .zip(tail)
            .map(|(&t, s)| if t >= e.tau && e.tau >= 1 { first + s } else if t >= e.tau { s } else { 0.0 })
            .collect()
    }
}

/// A start state drawn from `μ_n` and its entrance time.
pub fn sample_mu_n_path(model: &ChainModel, n: u64, rng: &mut Rng) -> Result<EntrancePoint> {
    Ok(MuNSampler::new(model, n)?.sample(rng))
}
