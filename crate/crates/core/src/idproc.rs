//! The stationary symmetric infinitely divisible process
//! `X_k = ∫ f(x_k) dM(x)` over the path space of a chain, its normalization
//! `c_n`, and normalized partial-sum paths.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::chains::{sigma_f, wandering_rate, ChainModel, FSpec, MuNSampler};
use crate::error::{param, Error, Result};
use crate::limits::{sample_y, YParams};
use crate::mlfrac::SamplePath;
use crate::rng::{derive, Rng};
use crate::stable::{tail_constant, tail_power_sum, LevyTailSpec, SeriesBudget, TailKind};
use crate::stats::{ecf, ecf_stderr, integrate, ks_two_sample, theta_grid};

#[derive(Debug, Clone)]
pub struct IdProcessSpec {
    pub chain: ChainModel,
    pub f: FSpec,
    pub levy: LevyTailSpec,
    /// Window `n` of the normalization.
    pub n: u64,
    /// Horizon `L`; paths are produced on `grid ⊂ [0, L]`.
    pub horizon: f64,
    pub grid: Vec<f64>,
}

impl IdProcessSpec {
    pub fn new(
        chain: ChainModel,
        f: FSpec,
        levy: LevyTailSpec,
        n: u64,
        horizon: f64,
        grid: Vec<f64>,
    ) -> Result<Self> {
        if f.values.len() != chain.q() {
            return Err(param("f", "value count does not match the atoms of D"));
        }
        if n == 0 {
            return Err(param("n", "must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(param("horizon", format!("{horizon} must be positive")));
        }
        crate::mlfrac::validate_grid(&grid)?;
        if grid.last().is_some_and(|&t| t > horizon) {
            return Err(Error::Grid(format!("grid extends beyond the horizon {horizon}")));
        }
        levy.validate()?;
        Ok(IdProcessSpec { chain, f, levy, n, horizon, grid })
    }

    /// `⌈nL⌉`, the window whose path measure drives the series.
    pub fn window(&self) -> u64 {
        (self.n as f64 * self.horizon).ceil() as u64
    }
}

/// The factors of `c_n = C_α^{-1/α} a_n^{1/2} ρ^←(1/μ(τ_D ≤ n))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationReport {
    pub a_n: f64,
    pub mu_tau_n: f64,
    pub c_alpha: f64,
    pub rho_inv_value: f64,
    pub c_n: f64,
}

impl NormalizationReport {
    pub fn from_parts(a_n: f64, mu_tau_n: f64, levy: &LevyTailSpec) -> Result<Self> {
        if !(a_n > 0.0 && mu_tau_n > 0.0) {
            return Err(param("a_n", "a_n and the wandering rate must be positive"));
        }
        let alpha = levy.alpha();
        let c_alpha = tail_constant(alpha);
        let rho_inv_value = levy.inverse(1.0 / mu_tau_n);
        Ok(NormalizationReport {
            a_n,
            mu_tau_n,
            c_alpha,
            rho_inv_value,
            c_n: c_alpha.powf(-1.0 / alpha) * a_n.sqrt() * rho_inv_value,
        })
    }

    /// `ρ(c_n a_n^{-1/2}, ∞) μ(τ_D ≤ n) / C_α`, which tends to 1.
    pub fn consistency(&self, levy: &LevyTailSpec) -> f64 {
        levy.tail(self.c_n / self.a_n.sqrt()) * self.mu_tau_n / self.c_alpha
    }
}

/// `c_n` from the chain's exact `a_n` and wandering rate.
pub fn normalization(chain: &ChainModel, levy: &LevyTailSpec, n: u64) -> Result<NormalizationReport> {
    let a_n = chain
        .exact_an(n as usize)
        .ok_or_else(|| Error::Unsupported(format!("{} has no exact a_n", chain.name())))?;
    let mu = wandering_rate(chain, n)?;
    NormalizationReport::from_parts(a_n, mu, levy)
}

pub fn compute_cn(spec: &IdProcessSpec) -> Result<NormalizationReport> {
    normalization(&spec.chain, &spec.levy, spec.n)
}

/// `∫_{|x| ≤ 1} x² ρ(dx) = 4 ∫_0^1 x ρ(x, ∞) dx - 2 ρ(1, ∞)`.
pub fn small_jump_variance(levy: &LevyTailSpec) -> f64 {
    if levy.kind() == TailKind::PureStable {
        let a = levy.alpha();
        return 2.0 * a / (2.0 - a);
    }
    // In u = log x the integrand x² ρ(x, ∞) decays geometrically as u → -∞.
    let v = integrate(|u: f64| { let x = u.exp(); x * x * levy.tail(x) }, -60.0, 0.0, 240, 8);
    (4.0 * v - 2.0 * levy.tail(1.0)).max(0.0)
}

/// Normalized partial-sum sampler, prepared once per process.
///
/// For each path the series `Σ_j ε_j ρ^←(Γ_j / (2 μ(τ_D ≤ nL))) Ŝ_{nt}(f)(V_j)`
/// is evaluated with marks `V_j ~ μ_{nL}`. Pure-stable tails use `budget.j`
/// terms (and the Gaussian residual when requested). Other tails keep only
/// the jumps above 1, a finite series; the compensated small jumps are not
/// simulated and their second moment at `t = L` is reported instead.
#[derive(Clone)]
pub struct PartialSumSampler {
    spec: IdProcessSpec,
    budget: SeriesBudget,
    report: NormalizationReport,
    window_mass: f64,
    marks: MuNSampler,
    steps: Vec<u64>,
    /// Per grid point: indices into `steps` and the interpolation weight.
    interp: Vec<(usize, usize, f64)>,
    mark_second_moment: f64,
}

impl PartialSumSampler {
    pub fn new(spec: &IdProcessSpec, budget: SeriesBudget, rng: &mut Rng) -> Result<Self> {
        let report = compute_cn(spec)?;
        let window = spec.window();
        let window_mass = wandering_rate(&spec.chain, window)?;
        let marks = MuNSampler::new(&spec.chain, window)?;
        let mut steps: Vec<u64> = Vec::new();
        for &t in &spec.grid {
            let x = spec.n as f64 * t;
            steps.push(x.floor() as u64);
            steps.push((x.ceil() as u64).min(window));
        }
        steps.sort_unstable();
        steps.dedup();
        let idx = |k: u64| steps.binary_search(&k).unwrap();
        let interp = spec
            .grid
            .iter()
            .map(|&t| {
                let x = spec.n as f64 * t;
                let (k0, k1) = (x.floor() as u64, (x.ceil() as u64).min(window));
                (idx(k0), idx(k1), x - k0 as f64)
            })
            .collect();
        let seed: u64 = rng.random();
        let mut r = derive(seed, &[]);
        let pilot = 4000;
        let mark_second_moment = (0..pilot)
            .map(|_| {
                let (_, s) = marks.partial_sums(&spec.f, &[window], &mut r);
                s[0] * s[0]
            })
            .sum::<f64>()
            / pilot as f64;
        Ok(PartialSumSampler {
            spec: spec.clone(),
            budget,
            report,
            window_mass,
            marks,
            steps,
            interp,
            mark_second_moment,
        })
    }

    pub fn report(&self) -> &NormalizationReport {
        &self.report
    }

    pub fn spec(&self) -> &IdProcessSpec {
        &self.spec
    }

    /// Second moment at `t = L` of the normalized small-jump part that is
    /// not simulated (zero for pure-stable and Pareto-cutoff tails).
    pub fn small_jump_bias(&self) -> f64 {
        if self.spec.levy.kind() == TailKind::PureStable {
            return 0.0;
        }
        self.window_mass * self.mark_second_moment * small_jump_variance(&self.spec.levy)
            / self.report.c_n.powi(2)
    }

    /// Expected second moment at `t = L` of the normalized series terms
    /// beyond `budget.j` (pure-stable tails without residual).
    pub fn series_tail_second_moment(&self) -> f64 {
        if self.spec.levy.kind() != TailKind::PureStable || self.budget.residual {
            return 0.0;
        }
        let a = self.spec.levy.alpha();
        (2.0 * self.window_mass).powf(2.0 / a) * tail_power_sum(self.budget.j as f64, 2.0 / a)
            * self.mark_second_moment
            / self.report.c_n.powi(2)
    }

    /// `Σ_{k ≤ m} X_k` at the sorted integer steps `m` used by the grid,
    /// unnormalized, and whether a non-stable series hit the term budget.
    pub fn sample_raw(&self, rng: &mut Rng) -> (Vec<u64>, Vec<f64>, bool) {
        let seed: u64 = rng.random();
        let (mut ra, mut rs, mut rm, mut rg) =
            (derive(seed, &[0]), derive(seed, &[1]), derive(seed, &[2]), derive(seed, &[3]));
        let stable = self.spec.levy.kind() == TailKind::PureStable;
        let scale = 2.0 * self.window_mass;
        let mut sums = vec![0.0; self.steps.len()];
        let mut resid = vec![0.0; self.steps.len()];
        let mut arrival = 0.0;
        let mut used = 0usize;
        let mut complete = stable;
        for _ in 0..self.budget.j {
            let e: f64 = Exp1.sample(&mut ra);
            arrival += e;
            let jump = self.spec.levy.inverse(arrival / scale);
            if !stable && jump <= 1.0 {
                complete = true;
                break;
            }
            let sign = if rs.random::<bool>() { 1.0 } else { -1.0 };
            let (_, s) = self.marks.partial_sums(&self.spec.f, &self.steps, &mut rm);
            let z: f64 = if stable && self.budget.residual { StandardNormal.sample(&mut rg) } else { 0.0 };
            for ((acc, r), v) in sums.iter_mut().zip(resid.iter_mut()).zip(&s) {
                *acc += sign * jump * v;
                *r += z * v;
            }
            used += 1;
        }
        if stable && self.budget.residual && used > 0 {
            let a = self.spec.levy.alpha();
            let c = (scale.powf(2.0 / a) * tail_power_sum(arrival, 2.0 / a) / used as f64).sqrt();
            for (acc, r) in sums.iter_mut().zip(&resid) {
                *acc += c * r;
            }
        }
        (self.steps.clone(), sums, !complete)
    }

    /// The normalized path `c_n^{-1} Σ_{k ≤ nt} X_k` on the grid, linearly
    /// interpolated between integer steps.
    pub fn sample(&self, rng: &mut Rng) -> SamplePath {
        let (_, sums, truncated) = self.sample_raw(rng);
        let values = self
            .interp
            .iter()
            .map(|&(i0, i1, w)| (sums[i0] + w * (sums[i1] - sums[i0])) / self.report.c_n)
            .collect();
        let mut meta = format!("c_n^-1 S_nt, n = {}, {}", self.spec.n, self.spec.chain.name());
        if truncated {
            meta.push_str("; warning: series budget exhausted before the jumps fell below 1");
        }
        let tail = self.series_tail_second_moment();
        if tail > 1e-2 {
            meta.push_str(&format!("; warning: series tail second moment {tail:.3e}"));
        }
        let bias = self.small_jump_bias();
        if bias > 0.0 {
            meta.push_str(&format!("; small-jump second moment {bias:.3e}"));
        }
        SamplePath::new(self.spec.grid.clone(), values, meta)
    }
}

pub fn sample_partial_sum_path(spec: &IdProcessSpec, budget: SeriesBudget, rng: &mut Rng) -> Result<SamplePath> {
    Ok(PartialSumSampler::new(spec, budget, rng)?.sample(rng))
}

/// Comparison at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct FcltPoint {
    pub t: f64,
    /// Against `√Γ(β+1) σ_f Y_{α,β,2}(t)`.
    pub cf_literal: f64,
    pub ks_literal: f64,
    /// Against `2^{1/α} √Γ(β+1) σ_f Y_{α,β,2}(t)`, the limit of the
    /// series with arrivals scaled by `2 μ(τ_D ≤ n)`.
    pub cf_corrected: f64,
    pub ks_corrected: f64,
}

/// One row of the CF table of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct FcltCfRow {
    pub t: f64,
    pub theta: f64,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct FcltReport {
    pub sigma_f: f64,
    pub normalization: NormalizationReport,
    pub points: Vec<FcltPoint>,
    pub cf_table: Vec<FcltCfRow>,
    /// Largest small-jump second moment over the replicates' sampler.
    pub small_jump_bias: f64,
}

impl FcltReport {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "theta", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "stderr"])?;
        for r in &self.cf_table {
            out.write_record(
                [r.t, r.theta, r.lhs_re, r.lhs_im, r.rhs_re, r.rhs_im, r.stderr].map(|v| v.to_string()),
            )?;
        }
        out.flush()
    }
}

/// Comparison times of [`fclt_experiment`], with the origin.
pub const FCLT_TIMES: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

/// Ensembles of `c_n^{-1} Σ_{k ≤ nt} X_k` against the limit
/// `√Γ(β+1) σ_f Y_{α,β,2}(t)` at `t ∈ {0.25, 0.5, 1}`; the grid of `spec`
/// is replaced.
pub fn fclt_experiment(
    spec: &IdProcessSpec,
    replicates: usize,
    budget: SeriesBudget,
    rng: &mut Rng,
) -> Result<FcltReport> {
    if replicates < 1000 {
        return Err(param("replicates", format!("{replicates} < 1000")));
    }
    if spec.horizon < 1.0 {
        return Err(param("horizon", "the comparison needs L ≥ 1"));
    }
    let spec = &IdProcessSpec { grid: FCLT_TIMES.to_vec(), ..spec.clone() };
    let sf = sigma_f(&spec.chain, &spec.f, 1 << 22)?.sigma2.sqrt();
    let sampler = PartialSumSampler::new(spec, budget, rng)?;
    let alpha = spec.levy.alpha();
    let beta = spec.chain.beta();
    let yp = YParams::new(alpha, beta, 2.0)?;
    let seed: u64 = rng.random();
    let lhs: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| sampler.sample(&mut derive(seed, &[0, i])).values)
        .collect();
    let ybudget = budget.with_residual(true);
    let c = gamma(beta + 1.0).sqrt() * sf;
    let rhs: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let y = sample_y(&yp, &spec.grid, &ybudget, &mut derive(seed, &[1, i]))?;
            Ok(y.values.into_iter().map(|v| c * v).collect())
        })
        .collect::<Result<_>>()?;
    let thetas = theta_grid();
    let boost = 2f64.powf(1.0 / alpha);
    let mut points = Vec::new();
    let mut cf_table = Vec::new();
    for (k, &t) in spec.grid.iter().enumerate().filter(|(_, &t)| t > 0.0) {
        let a: Vec<f64> = lhs.iter().map(|v| v[k]).collect();
        let b: Vec<f64> = rhs.iter().map(|v| v[k]).collect();
        let b2: Vec<f64> = b.iter().map(|x| boost * x).collect();
        let (mut d1, mut d2) = (0.0_f64, 0.0_f64);
        for &th in &thetas {
            let (l, r, r2) = (ecf(&a, th), ecf(&b, th), ecf(&b2, th));
            d1 = d1.max(((l.0 - r.0).powi(2) + (l.1 - r.1).powi(2)).sqrt());
            d2 = d2.max(((l.0 - r2.0).powi(2) + (l.1 - r2.1).powi(2)).sqrt());
            cf_table.push(FcltCfRow {
                t,
                theta: th,
                lhs_re: l.0,
                lhs_im: l.1,
                rhs_re: r.0,
                rhs_im: r.1,
                stderr: (ecf_stderr(&a, th).powi(2) + ecf_stderr(&b, th).powi(2)).sqrt(),
            });
        }
        points.push(FcltPoint {
            t,
            cf_literal: d1,
            ks_literal: ks_two_sample(&a, &b),
            cf_corrected: d2,
            ks_corrected: ks_two_sample(&a, &b2),
        });
    }
    Ok(FcltReport {
        sigma_f: sf,
        normalization: *sampler.report(),
        points,
        cf_table,
        small_jump_bias: sampler.small_jump_bias(),
    })
}
