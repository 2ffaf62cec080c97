//! One function per experiment kind. Every random draw comes from
//! `derive(seed, tags)` with a fixed tag per component and replicate, so
//! results do not depend on the number of worker threads.

use std::f64::consts::PI;

use idsim::chains::{builtin_gaussian_walk, builtin_renewal_chain, estimate_an, renewal_chain, sigma_f, wandering_rate, ChainModel, FSpec, MuNSampler, RenewalTail};
use idsim::idproc::{fclt_experiment, normalization, IdProcessSpec};
use idsim::limits::{driver_abs_moment, hurst_estimate, sample_bm_ml, sample_entrance_limit, sample_y, YParams};
use idsim::mlfrac::{sample_mittag_leffler, sample_overshoot, sample_positive_stable, MLParams};
use idsim::momentbounds::{calibrate_cp, check_holdout, check_pos_bound, standard_pos_families, standard_sym_families, write_ratio_csv, BoundCheck, BoundTarget, PosLevySpec};
use idsim::rng::derive;
use idsim::stable::{sample_sas, LevyTailSpec, SeriesBudget};
use idsim::stats::{cf_discrepancy, ecdf, ecf, ks_one_sample, ks_two_sample, log_spaced, loglog_slope, mean_stderr, theta_grid};
use idsim::{Error, Result};
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use statrs::function::factorial::factorial;
use statrs::function::gamma::gamma;

use crate::plot::{Plot, Series};
use crate::report::Outcome;
use crate::schema::ExperimentConfig;

pub fn run_kind(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    match cfg.kind.name {
        "subordinator" => subordinator(cfg, seed),
        "chain-fclt" => chain_fclt(cfg, seed),
        "entrance-fclt" => entrance_fclt(cfg, seed),
        "sssi" => sssi(cfg, seed),
        "main-fclt" => main_fclt(cfg, seed),
        "moments" => moments(cfg, seed),
        other => unreachable!("unvalidated kind {other}"),
    }
}

fn par_samples<F>(n: u64, seed: u64, tag: &[u64], f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut idsim::rng::Rng) -> Result<f64> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut t = tag.to_vec();
            t.push(i);
            f(&mut derive(seed, &t))
        })
        .collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[k]
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// ECDF overlay of two samples between their pooled 0.5% and 99.5% quantiles.
fn ecdf_plot(name: &str, title: &str, a: (&str, &[f64]), b: (&str, &[f64])) -> Plot {
    let pooled = sorted(&[a.1, b.1].concat());
    let (lo, hi) = (quantile(&pooled, 0.005), quantile(&pooled, 0.995));
    let xs: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
    let (sa, sb) = (sorted(a.1), sorted(b.1));
    let curve = |s: &[f64]| xs.iter().map(|&x| (x, ecdf(s, x))).collect();
    Plot::new(name, title, "x", "empirical CDF")
        .with(Series::line(a.0, curve(&sa)))
        .with(Series::line(b.0, curve(&sb)))
}

fn cf_plot(name: &str, title: &str, a: (&str, &[f64]), b: (&str, &[f64])) -> Plot {
    let th = theta_grid();
    let curve = |s: &[f64]| th.iter().map(|&t| (t, ecf(s, t).0)).collect();
    Plot::new(name, title, "θ", "Re φ(θ)")
        .with(Series::line(a.0, curve(a.1)))
        .with(Series::line(b.0, curve(b.1)))
}

/// Deciles of both samples as rows, for inspection without the raw draws.
fn decile_rows(out: &mut Outcome, quantity: &str, label: &str, a: &[f64], b: &[f64]) {
    let (sa, sb) = (sorted(a), sorted(b));
    for k in 1..10 {
        let p = k as f64 / 10.0;
        out.row(quantity, label, Some(p), quantile(&sa, p), Some(quantile(&sb, p)), None);
    }
}

fn subordinator(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let n = cfg.int("samples");
    if cfg.enabled("moments") {
        let t = cfg.float("t");
        let mut emp = Vec::new();
        let grid: Vec<f64> = (0..=40).map(|i| 0.01 + 0.98 * i as f64 / 40.0).collect();
        let exact = grid.iter().map(|&b| (b, t.powf(b) / gamma(1.0 + b))).collect();
        for (k, &b) in cfg.floats("betas").iter().enumerate() {
            let p = MLParams::new(b)?;
            let xs = par_samples(n, seed, &[1, k as u64], |r| Ok(sample_mittag_leffler(p, &[0.0, t], r)?.values[1]))?;
            let (m, se) = mean_stderr(&xs);
            let target = t.powf(b) / gamma(1.0 + b);
            out.row("ml_mean", format!("beta={b}"), Some(b), m, Some(target), Some(se));
            out.check(format!("|mean / (t^β/Γ(1+β)) - 1| at β = {b}, t = {t}"), (m / target - 1.0).abs(), cfg.tol("mean_rel"));
            emp.push((b, m));
        }
        out.plots.push(
            Plot::new("ml_moments", "Mittag-Leffler mean", "β", "E M_β(t)")
                .with(Series::line("t^β / Γ(1+β)", exact))
                .with(Series::scatter("sample mean", emp)),
        );
    }
    if cfg.enabled("overshoot") {
        let (b, r, t) = (cfg.float("overshoot_beta"), cfg.float("overshoot_r"), cfg.float("overshoot_t"));
        let p = MLParams::new(b)?;
        let lhs = par_samples(n, seed, &[2], |g| {
            let v = sample_mittag_leffler(p, &[0.0, r, t + r], g)?.values;
            Ok(v[2] - v[1])
        })?;
        let rhs = par_samples(n, seed, &[3], |g| {
            let s = (t - sample_overshoot(b, r, g)?).max(0.0);
            Ok(if s > 0.0 { sample_mittag_leffler(p, &[0.0, s], g)?.values[1] } else { 0.0 })
        })?;
        let d = ks_two_sample(&lhs, &rhs);
        let label = format!("beta={b} r={r} t={t}");
        out.row("overshoot_ks", &label, None, d, None, None);
        decile_rows(&mut out, "overshoot_decile", &label, &lhs, &rhs);
        out.check(format!("KS(M(t+r) - M(r), M((t - δ_r)+)) at β = {b}, r = {r}, t = {t}"), d, cfg.tol("overshoot_ks"));
        out.plots.push(ecdf_plot("overshoot", "Strong Markov identity", ("M(t+r) - M(r)", &lhs), ("M((t-δ_r)+)", &rhs)));
    }
    Ok(out)
}

fn chain_fclt(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let beta = cfg.float("beta");
    if cfg.enabled("wandering") {
        let m = builtin_renewal_chain(beta, 1.0)?;
        let top = cfg.int("wandering_n");
        let target = gamma(1.0 + beta) * gamma(2.0 - beta);
        let table = m.exact_an_table(top as usize).expect("renewal chains have exact a_n");
        let mut pts = Vec::new();
        let ns = log_spaced(10.min(top as usize), top as usize, 13);
        for &n in &ns {
            let w = wandering_rate(&m, n as u64)?;
            let ratio = n as f64 / (table[n] * w);
            out.row("wandering_constant", format!("beta={beta}"), Some(n as f64), ratio, Some(target), None);
            pts.push((n as f64, ratio));
        }
        let last = pts.last().unwrap().1;
        out.check(format!("|n/(a_n μ(τ_D ≤ n)) / (Γ(1+β)Γ(2-β)) - 1| at n = {top}"), (last / target - 1.0).abs(), cfg.tol("wandering_rel"));
        let (lo, hi) = (pts[0].0, pts.last().unwrap().0);
        out.plots.push(
            Plot::new("wandering_constant", "Wandering-rate constant", "n", "n / (a_n μ(τ_D ≤ n))")
                .with(Series::scatter("exact renewal quantities", pts))
                .with(Series::line("Γ(1+β)Γ(2-β)", vec![(lo, target), (hi, target)])),
        );
        out.plots.last_mut().unwrap().logx = true;
    }
    if cfg.enabled("walk") {
        let g = builtin_gaussian_walk(1)?;
        let n = cfg.int("walk_n");
        let est = estimate_an(&g, n, cfg.int("walk_replicates") as usize, &mut derive(seed, &[10]))?;
        let rn = (n as f64).sqrt();
        let stated = 1.0 / (2.0 * PI).sqrt();
        let label = format!("n={n}");
        out.row("walk_an_over_sqrt_n", &label, Some(n as f64), est.mean / rn, Some(stated), Some(est.stderr / rn));
        if let Some(a) = est.exact {
            out.row("walk_exact_an_over_sqrt_n", &label, Some(n as f64), a / rn, None, None);
        }
        out.check(format!("|â_n/√n · √(2π) - 1| at n = {n}"), (est.mean / rn / stated - 1.0).abs(), cfg.tol("walk_rel"));
        out.info(format!("|â_n/√n · √(2π)/2 - 1| at n = {n} (limit 2/√(2π) for D = [0, 1])"), (est.mean / rn / (2.0 * stated) - 1.0).abs(), cfg.tol("walk_rel"));
    }
    if cfg.enabled("marginal") {
        let m = builtin_renewal_chain(beta, 1.0)?;
        let f = FSpec::balanced(&m, cfg.float("f_scale"))?;
        let n = cfg.int("n");
        let an = m.exact_an(n as usize).expect("renewal chains have exact a_n");
        let sf = sigma_f(&m, &f, 1 << 22)?.sigma2.sqrt();
        let nu = cfg.choice("start") == "nu";
        let lhs = par_samples(cfg.int("replicates"), seed, &[20], |r| {
            let x0 = if nu { m.sample_nu(r) } else { 0.0 };
            Ok(m.partial_sums_at(x0, &f, &[n], r)[0] / an.sqrt())
        })?;
        let rhs = par_samples(cfg.int("limit_samples"), seed, &[21], |r| Ok(sample_bm_ml(beta, sf, &[0.0, 1.0], r)?.values[1]))?;
        let d = ks_two_sample(&lhs, &rhs);
        let label = format!("beta={beta} n={n} start={}", cfg.choice("start"));
        out.row("sigma_f", &label, None, sf, None, None);
        out.row("marginal_ks", &label, Some(n as f64), d, None, None);
        decile_rows(&mut out, "marginal_decile", &label, &lhs, &rhs);
        out.check(format!("KS(S_n(f)/√a_n, √Γ(β+1) σ_f B(M_β(1))) at n = {n}"), d, cfg.tol("marginal_ks"));
        out.plots.push(ecdf_plot("marginal", "Chain partial sums against B(M_β(1))", ("S_n(f)/√a_n", &lhs), ("limit", &rhs)));
    }
    Ok(out)
}

fn entrance_fclt(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let beta = cfg.float("beta");
    let m = builtin_renewal_chain(beta, 1.0)?;
    let f = FSpec::balanced(&m, cfg.float("f_scale"))?;
    let n = cfg.int("n");
    let an = m.exact_an(n as usize).expect("renewal chains have exact a_n");
    let sf = sigma_f(&m, &f, 1 << 22)?.sigma2.sqrt();
    let mu = MuNSampler::new(&m, n)?;
    let pairs: Vec<(f64, f64)> = (0..cfg.int("replicates"))
        .into_par_iter()
        .map(|i| {
            let (e, s) = mu.partial_sums(&f, &[n], &mut derive(seed, &[1, i]));
            (e.tau as f64 / n as f64, s[0] / an.sqrt())
        })
        .collect();
    let (fr, lhs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let rhs = par_samples(cfg.int("limit_samples"), seed, &[2], |r| Ok(sample_entrance_limit(beta, sf, 1.0, &[0.0, 1.0], r)?.values[1]))?;
    let d1 = ks_one_sample(&fr, |x| x.clamp(0.0, 1.0).powf(1.0 - beta));
    let d2 = ks_two_sample(&lhs, &rhs);
    let label = format!("beta={beta} n={n}");
    out.row("sigma_f", &label, None, sf, None, None);
    out.row("fraction_ks", &label, Some(n as f64), d1, None, None);
    out.row("path_ks", &label, Some(n as f64), d2, None, None);
    let sfr = sorted(&fr);
    for k in 1..10 {
        let p = k as f64 / 10.0;
        out.row("fraction_decile", &label, Some(p), quantile(&sfr, p), Some(p.powf(1.0 / (1.0 - beta))), None);
    }
    decile_rows(&mut out, "path_decile", &label, &lhs, &rhs);
    out.check(format!("KS(τ_D/n, x^(1-β)) at n = {n}"), d1, cfg.tol("fraction_ks"));
    out.check(format!("KS(Ŝ_n(f)/√a_n, √Γ(β+1) σ_f B(M_β((1-T)+))) at n = {n}"), d2, cfg.tol("path_ks"));
    let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    out.plots.push(
        Plot::new("entrance_fraction", "Entrance fraction under μ_n", "x", "CDF")
            .with(Series::line("empirical", xs.iter().map(|&x| (x, ecdf(&sfr, x))).collect()))
            .with(Series::line("x^(1-β)", xs.iter().map(|&x| (x, x.powf(1.0 - beta))).collect())),
    );
    out.plots.push(ecdf_plot("entrance_path", "Shifted path marginal at t = 1", ("Ŝ_n(f)/√a_n", &lhs), ("limit", &rhs)));
    Ok(out)
}

fn y_paths(p: &YParams, grid: &[f64], terms: u64, reps: u64, seed: u64, tag: u64) -> Result<Vec<Vec<f64>>> {
    let b = SeriesBudget::new(terms as usize)?.with_residual(true);
    (0..reps)
        .into_par_iter()
        .map(|i| Ok(sample_y(p, grid, &b, &mut derive(seed, &[tag, i]))?.values))
        .collect()
}

fn column(paths: &[Vec<f64>], k: usize) -> Vec<f64> {
    paths.iter().map(|v| v[k]).collect()
}

/// `S_γ(1)`: standard normal for `γ = 2`, otherwise SαS with unit scale.
fn driver(g: f64, r: &mut idsim::rng::Rng) -> Result<f64> {
    if g == 2.0 {
        Ok(StandardNormal.sample(r))
    } else {
        sample_sas(g, 1.0, r)
    }
}

fn sssi(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let th = theta_grid();
    if cfg.enabled("sssi") {
        let grid = [0.0, 0.5, 1.0, 1.5, 2.0];
        for (k, (a, b, g)) in cfg.triples("triples").into_iter().enumerate() {
            let p = YParams::new(a, b, g)?;
            let h = p.hurst();
            let paths = y_paths(&p, &grid, cfg.int("terms"), cfg.int("replicates"), seed, 100 + k as u64)?;
            let label = format!("alpha={a} beta={b} gamma={g}");
            let y1 = column(&paths, 2);
            let y2 = column(&paths, 4);
            let scaled: Vec<f64> = y1.iter().map(|x| 2f64.powf(h) * x).collect();
            let d = cf_discrepancy(&y2, &scaled, &th);
            out.row("ss_cf", &label, Some(2.0), d, None, None);
            out.check(format!("CF discrepancy Y(2) vs 2^H Y(1), ({a}, {b}, {g})"), d, cfg.tol("ss_cf"));
            for s in [1usize, 2] {
                let inc: Vec<f64> = paths.iter().map(|v| v[s + 2] - v[s]).collect();
                let d = cf_discrepancy(&y1, &inc, &th);
                let shift = grid[s];
                out.row("si_cf", &label, Some(shift), d, None, None);
                out.check(format!("CF discrepancy Y({}) - Y({shift}) vs Y(1), ({a}, {b}, {g})", shift + 1.0), d, cfg.tol("si_cf"));
            }
            let q = a / 2.0;
            let cols: Vec<Vec<f64>> = (1..=4).map(|i| column(&paths, i)).collect();
            let hh = hurst_estimate(&grid[1..], &cols, q);
            out.row("hurst", &label, None, hh, Some(h), None);
            out.check(format!("|Ĥ - H| with H = β/γ + (1-β)/α, ({a}, {b}, {g})"), (hh - h).abs(), cfg.tol("hurst_abs"));
            let moments: Vec<(f64, f64)> = grid[1..]
                .iter()
                .zip(&cols)
                .map(|(&t, xs)| (t, xs.iter().map(|x| x.abs().powf(q)).sum::<f64>() / xs.len() as f64))
                .collect();
            let (t0, m0) = moments[1];
            let fit: Vec<(f64, f64)> = grid[1..].iter().map(|&t| (t, m0 * (t / t0).powf(q * h))).collect();
            out.plots.push(
                Plot::new(format!("hurst_{k}"), format!("E|Y(t)|^(α/2), {label}"), "t", "moment")
                    .loglog()
                    .with(Series::scatter("sample", moments))
                    .with(Series::line("slope αH/2", fit)),
            );
            out.plots.push(cf_plot(&format!("ss_cf_{k}"), &format!("Self-similarity, {label}"), ("Y(2)", &y2), ("2^H Y(1)", &scaled)));
        }
    }
    if cfg.enabled("boundary") {
        let reps = cfg.int("boundary_replicates");
        let refs = cfg.int("reference_samples");
        let terms = cfg.int("boundary_terms");
        // β = 1: W^{1/γ} S_γ(1) with W = c^{γ/α} S_{α/γ} positive stable,
        // c = E|S_γ(1)|^α.
        let (a, g) = (cfg.float("beta1_alpha"), cfg.float("beta1_gamma"));
        let p = YParams::new(a, 1.0, g)?;
        let y = column(&y_paths(&p, &[0.0, 1.0], terms, reps, seed, 200)?, 1);
        let c = driver_abs_moment(g, a);
        let direct = par_samples(refs, seed, &[201], |r| {
            let w = c.powf(g / a) * sample_positive_stable(a / g, r);
            Ok(w.powf(1.0 / g) * driver(g, r)?)
        })?;
        let d = ks_two_sample(&y, &direct);
        out.row("beta1_ks", format!("alpha={a} gamma={g}"), None, d, None, None);
        out.check(format!("KS(Y(1), W^(1/γ) S_γ(1)) at β = 1, α = {a}, γ = {g}"), d, cfg.tol("boundary_ks"));
        out.plots.push(ecdf_plot("boundary_beta1", "β = 1: sub-stable law", ("Y(1)", &y), ("W^(1/γ) S_γ(1)", &direct)));
        // β = 0: SαS with σ^α = E|S_γ(1)|^α E[E^{α/γ}], estimated by Monte Carlo.
        let (a, g) = (cfg.float("beta0_alpha"), cfg.float("beta0_gamma"));
        let p = YParams::new(a, 0.0, g)?;
        let y = column(&y_paths(&p, &[0.0, 1.0], terms, reps, seed, 300)?, 1);
        let m = par_samples(2 * refs, seed, &[301], |r| {
            let s = driver(g, r)?;
            let e: f64 = Exp1.sample(r);
            Ok(s.abs().powf(a) * e.powf(a / g))
        })?;
        let (ma, mse) = mean_stderr(&m);
        let scale = ma.powf(1.0 / a);
        let reference = par_samples(refs, seed, &[302], |r| sample_sas(a, scale, r))?;
        let d = ks_two_sample(&y, &reference);
        let label = format!("alpha={a} gamma={g}");
        out.row("beta0_scale", &label, None, scale, None, Some(mse / (a * ma) * scale));
        out.row("beta0_ks", &label, None, d, None, None);
        out.check(format!("KS(Y(1), SαS(σ)) at β = 0, α = {a}, γ = {g}"), d, cfg.tol("boundary_ks"));
        out.plots.push(ecdf_plot("boundary_beta0", "β = 0: SαS Lévy motion", ("Y(1)", &y), ("SαS(σ)", &reference)));
    }
    Ok(out)
}

fn fclt_chain(cfg: &ExperimentConfig) -> Result<ChainModel> {
    match cfg.choice("chain") {
        "log-inverse" => renewal_chain(RenewalTail::LogInverse, 2),
        _ => builtin_renewal_chain(cfg.float("beta"), 1.0),
    }
}

fn levy(cfg: &ExperimentConfig, alpha: f64) -> Result<LevyTailSpec> {
    match cfg.choice("levy") {
        "pareto_cutoff" => LevyTailSpec::pareto_cutoff(alpha),
        _ => LevyTailSpec::pure_stable(alpha),
    }
}

fn main_fclt(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let chain = fclt_chain(cfg)?;
    let beta = chain.beta();
    for (k, &alpha) in cfg.floats("alphas").iter().enumerate() {
        let l = levy(cfg, alpha)?;
        let label = format!("alpha={alpha} beta={beta}");
        if cfg.enabled("fclt") {
            let f = FSpec::balanced(&chain, cfg.float("f_scale"))?;
            let spec = IdProcessSpec::new(chain.clone(), f, l.clone(), cfg.int("n"), 1.0, vec![0.0, 1.0])?;
            let budget = SeriesBudget::new(cfg.int("terms") as usize)?.with_residual(true);
            let r = fclt_experiment(&spec, cfg.int("replicates") as usize, budget, &mut derive(seed, &[1, k as u64]))?;
            out.row("sigma_f", &label, None, r.sigma_f, None, None);
            out.row("c_n", &label, Some(cfg.int("n") as f64), r.normalization.c_n, None, None);
            out.row("small_jump_bias", &label, None, r.small_jump_bias, None, None);
            for p in &r.points {
                out.row("cf_literal", &label, Some(p.t), p.cf_literal, None, None);
                out.row("ks_literal", &label, Some(p.t), p.ks_literal, None, None);
                out.row("cf_scaled_limit", &label, Some(p.t), p.cf_corrected, None, None);
                out.row("ks_scaled_limit", &label, Some(p.t), p.ks_corrected, None, None);
            }
            let last = r.points.last().expect("fclt reports t = 1");
            out.check(format!("CF discrepancy c_n^-1 Σ X_k vs √Γ(β+1) σ_f Y(1), α = {alpha}"), last.cf_literal, cfg.tol("cf"));
            out.info(format!("CF discrepancy against 2^(1/α) √Γ(β+1) σ_f Y(1), α = {alpha}"), last.cf_corrected, cfg.tol("cf"));
            let mut buf = Vec::new();
            r.write_csv(&mut buf).expect("in-memory write");
            out.tables.push((format!("fclt_cf_alpha={alpha}.csv"), buf));
            let rows: Vec<_> = r.cf_table.iter().filter(|c| c.t == 1.0).collect();
            out.plots.push(
                Plot::new(format!("fclt_cf_{k}"), format!("CF overlay at t = 1, {label}"), "θ", "Re φ(θ)")
                    .with(Series::line("c_n^-1 Σ X_k", rows.iter().map(|c| (c.theta, c.lhs_re)).collect()))
                    .with(Series::line("√Γ(β+1) σ_f Y(1)", rows.iter().map(|c| (c.theta, c.rhs_re)).collect())),
            );
        }
        if cfg.enabled("cn") {
            if cfg.int("cn_min") >= cfg.int("cn_max") {
                return Err(Error::Parameter { name: "cn_min", reason: "must be below cn_max".into() });
            }
            let ns = log_spaced(cfg.int("cn_min") as usize, cfg.int("cn_max") as usize, 7);
            let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            let cs = ns.iter().map(|&n| Ok(normalization(&chain, &l, n as u64)?.c_n)).collect::<Result<Vec<f64>>>()?;
            for (&n, &c) in xs.iter().zip(&cs) {
                out.row("c_n", &label, Some(n), c, None, None);
            }
            let fit = loglog_slope(&xs, &cs);
            let target = beta / 2.0 + (1.0 - beta) / alpha;
            out.row("c_n_slope", &label, None, fit.slope, Some(target), None);
            out.check(format!("|slope of log c_n - (β/2 + (1-β)/α)|, α = {alpha}"), (fit.slope - target).abs(), cfg.tol("cn_slope"));
            let line: Vec<(f64, f64)> = xs.iter().map(|&n| (n, (fit.intercept + fit.slope * n.ln()).exp())).collect();
            out.plots.push(
                Plot::new(format!("cn_{k}"), format!("c_n, {label}"), "n", "c_n")
                    .loglog()
                    .with(Series::scatter("c_n", xs.iter().copied().zip(cs.iter().copied()).collect()))
                    .with(Series::line(format!("fit, slope {:.4}", fit.slope), line)),
            );
        }
    }
    Ok(out)
}

fn poisson_pmf(l: f64, k: u64) -> f64 {
    (-l).exp() * l.powi(k as i32) / factorial(k)
}

fn bound_rows(out: &mut Outcome, quantity: &str, checks: &[BoundCheck]) {
    for c in checks {
        out.row(quantity, &c.spec_id, Some(c.p), c.ratio, Some(c.rhs), Some(c.ratio_stderr));
    }
}

fn family<S: BoundTarget>(out: &mut Outcome, cfg: &ExperimentConfig, seed: u64, tag: u64, name: &str, p: f64, sets: (&[S], &[S])) -> Result<Vec<BoundCheck>> {
    let (cal, hold) = sets;
    let mc = cfg.int("mc_size") as usize;
    let c = calibrate_cp(cal, p, mc, &mut derive(seed, &[tag, 0]))?;
    let h = check_holdout(&c, hold, mc, &mut derive(seed, &[tag, 1]))?;
    bound_rows(out, &format!("{name}_calibration_ratio"), &c.checks);
    bound_rows(out, &format!("{name}_holdout_ratio"), &h.checks);
    out.row(&format!("{name}_calibrated_max"), "", Some(p), c.max_ratio, None, Some(c.max_stderr));
    let z = h.excess_z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.row(&format!("{name}_max_excess_z"), "", Some(p), z, None, None);
    out.check(format!("largest holdout excess over the calibrated {name} constant, in standard errors (p = {p})"), z, cfg.tol("holdout_z"));
    let pts = |cs: &[BoundCheck]| cs.iter().enumerate().map(|(i, c)| (i as f64, c.ratio)).collect();
    out.plots.push(
        Plot::new(format!("{name}_ratios"), format!("{name} bound ratios, p = {p}"), "family member", "ratio")
            .with(Series::scatter("calibration", pts(&c.checks)))
            .with(Series::scatter("holdout", pts(&h.checks)))
            .with(Series::line("calibrated max", vec![(0.0, c.max_ratio), (9.0, c.max_ratio)])),
    );
    Ok([c.checks, h.checks].concat())
}

fn moments(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let (pc, ph) = standard_pos_families();
    let mut all = family(&mut out, cfg, seed, 1, "positive", cfg.float("p_pos"), (&pc, &ph))?;
    let (sc, sh) = standard_sym_families();
    all.extend(family(&mut out, cfg, seed, 2, "symmetric", cfg.float("p_sym"), (&sc, &sh))?);
    let pois = PosLevySpec::new("poisson(1)", vec![(1.0, 1.0)], vec![])?;
    let p = cfg.float("p_pos");
    let r = check_pos_bound(&pois, p, cfg.int("poisson_samples") as usize, &mut derive(seed, &[3]))?;
    let exact: f64 = (1..120).map(|k| (k as f64).powf(p) * poisson_pmf(1.0, k)).sum();
    out.row("poisson_moment", "poisson(1)", Some(p), r.lhs, Some(exact), Some(r.lhs_stderr));
    out.check(format!("|E N^p / series - 1|, N ~ Poisson(1), p = {p}"), (r.lhs / exact - 1.0).abs(), cfg.tol("poisson_rel"));
    let mut buf = Vec::new();
    write_ratio_csv(&all, &mut buf).expect("in-memory write");
    out.tables.push(("ratios.csv".into(), buf));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_draws_are_thread_independent() {
        let a = par_samples(64, 9, &[4], |r| Ok(StandardNormal.sample(r))).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| par_samples(64, 9, &[4], |r| Ok(StandardNormal.sample(r))).unwrap());
        assert_eq!(a, b);
    }
}
