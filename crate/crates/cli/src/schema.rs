//! Experiment kinds, their typed fields and the validated configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::config::{parse_list, parse_value, ConfigError, Entry, RawConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ty {
    Int { min: u64 },
    Float { min: f64, max: f64 },
    FloatList { min: f64, max: f64 },
    Bool,
    Choice(&'static [&'static str]),
    ChoiceList(&'static [&'static str]),
    /// `a:b:c` triples separated by commas.
    Triples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub section: &'static str,
    pub key: &'static str,
    pub ty: Ty,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn f(section: &'static str, key: &'static str, ty: Ty, default: &'static str, doc: &'static str) -> Field {
    Field { section, key, ty, default, doc }
}

const P: &str = "params";
const T: &str = "tolerances";
const INF: f64 = f64::INFINITY;

#[derive(Debug)]
pub struct KindInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub verifies: &'static str,
    pub doc: &'static str,
    pub fields: &'static [Field],
}

pub static KINDS: [KindInfo; 6] = [
    KindInfo {
        name: "subordinator",
        summary: "Mittag-Leffler moments and the strong Markov overshoot identity",
        verifies: "E M_β(t) = t^β / Γ(1+β) for the Mittag-Leffler process (inverse β-stable subordinator), and the \
                   strong Markov identity M_β(t+r) - M_β(r) =d M_β((t - δ_r)_+) with δ_r the overshoot of level r.",
        doc: "Exact first-passage sampling of M_β on a grid; ensembles of M_β(t) and of the shifted increments.",
        fields: &[
            f(P, "checks", Ty::ChoiceList(&["moments", "overshoot"]), "moments, overshoot", "which comparisons to run"),
            f(P, "betas", Ty::FloatList { min: 0.0, max: 1.0 }, "0.3, 0.5, 0.8", "indices β for the moment check"),
            f(P, "t", Ty::Float { min: 0.0, max: INF }, "1", "time of the moment check"),
            f(P, "samples", Ty::Int { min: 1 }, "100000", "ensemble size per β"),
            f(P, "overshoot_beta", Ty::Float { min: 0.0, max: 1.0 }, "0.5", "β of the overshoot identity"),
            f(P, "overshoot_r", Ty::Float { min: 0.0, max: INF }, "1", "level r"),
            f(P, "overshoot_t", Ty::Float { min: 0.0, max: INF }, "1", "increment length t"),
            f(T, "mean_rel", Ty::Float { min: 0.0, max: INF }, "0.02", "relative error of E M_β(t)"),
            f(T, "overshoot_ks", Ty::Float { min: 0.0, max: 1.0 }, "0.02", "two-sample KS bound"),
        ],
    },
    KindInfo {
        name: "chain-fclt",
        summary: "occupation normalization and partial sums of β-regular chains",
        verifies: "For a β-regular chain and f on the atoms, S_n(f)/√a_n ⇒ √Γ(β+1) σ_f B(M_β(1)); the wandering-rate \
                   constant n / (a_n μ(τ_D ≤ n)) → Γ(1+β)Γ(2-β); the Gaussian-walk occupation â_n/√n against 1/√(2π).",
        doc: "Countdown renewal chain with P(J > m) = (1+m)^{-β} and D = {0, 1}, f balanced (f(1) = -π(0)f(0)/π(1)). \
              The walk check estimates a_n for the Gaussian random walk with D = [0, 1] by Monte Carlo.",
        fields: &[
            f(P, "checks", Ty::ChoiceList(&["wandering", "walk", "marginal"]), "wandering, walk, marginal", "which comparisons to run"),
            f(P, "beta", Ty::Float { min: 0.0, max: 1.0 }, "0.5", "tail index of the renewal chain"),
            f(P, "f_scale", Ty::Float { min: 0.0, max: INF }, "1", "f(0); f(1) balances it"),
            f(P, "n", Ty::Int { min: 1 }, "100000", "partial-sum length for the marginal check"),
            f(P, "replicates", Ty::Int { min: 1 }, "10000", "chain replicates"),
            f(P, "limit_samples", Ty::Int { min: 1 }, "100000", "samples of the limit law"),
            f(P, "start", Ty::Choice(&["atom", "nu"]), "atom", "initial law: atom 0, or π restricted to D"),
            f(P, "wandering_n", Ty::Int { min: 1 }, "1000000", "n for the wandering-rate constant"),
            f(P, "walk_n", Ty::Int { min: 1 }, "100000", "n for the Gaussian walk"),
            f(P, "walk_replicates", Ty::Int { min: 2 }, "1000", "walk replicates"),
            f(T, "wandering_rel", Ty::Float { min: 0.0, max: INF }, "0.1", "relative error bound"),
            f(T, "walk_rel", Ty::Float { min: 0.0, max: INF }, "0.1", "relative error bound against 1/√(2π)"),
            f(T, "marginal_ks", Ty::Float { min: 0.0, max: 1.0 }, "0.03", "two-sample KS bound"),
        ],
    },
    KindInfo {
        name: "entrance-fclt",
        summary: "entrance time and shifted partial sums under μ_n",
        verifies: "Under the normalized path measure μ_n restricted to {τ_D ≤ n}, the entrance fraction τ_D/n has CDF \
                   x^{1-β}, and Ŝ_n(f)/√a_n ⇒ √Γ(β+1) σ_f B(M_β((1-T)_+)) with T the limiting entrance time.",
        doc: "Marks from μ_n on the countdown renewal chain; limit samples from the shifted Brownian/Mittag-Leffler path.",
        fields: &[
            f(P, "beta", Ty::Float { min: 0.0, max: 1.0 }, "0.5", "tail index"),
            f(P, "f_scale", Ty::Float { min: 0.0, max: INF }, "1", "f(0)"),
            f(P, "n", Ty::Int { min: 1 }, "1000000", "window"),
            f(P, "replicates", Ty::Int { min: 1 }, "20000", "chain replicates"),
            f(P, "limit_samples", Ty::Int { min: 1 }, "100000", "limit samples"),
            f(T, "fraction_ks", Ty::Float { min: 0.0, max: 1.0 }, "0.02", "one-sample KS bound for τ_D/n"),
            f(T, "path_ks", Ty::Float { min: 0.0, max: 1.0 }, "0.03", "two-sample KS bound at t = 1"),
        ],
    },
    KindInfo {
        name: "sssi",
        summary: "self-similarity, stationary increments and boundary cases of Y",
        verifies: "Y_{α,β,γ} is H-self-similar with stationary increments, H = β/γ + (1-β)/α; at β = 1 it is the \
                   sub-stable W^{1/γ} S_γ(t), at β = 0 an SαS Lévy motion.",
        doc: "LePage series of Y with J terms plus the driver residual. Self-similarity compares Y(2) with 2^H Y(1); \
              stationarity compares Y(t+s) - Y(s) for s = 0.5, 1 with Y(1); H is regressed from E|Y(t)|^{α/2}.",
        fields: &[
            f(P, "checks", Ty::ChoiceList(&["sssi", "boundary"]), "sssi", "which comparisons to run"),
            f(P, "triples", Ty::Triples, "0.8:0.5:2, 1.2:0.5:1.6", "α:β:γ for the sssi checks"),
            f(P, "replicates", Ty::Int { min: 1 }, "20000", "paths per triple"),
            f(P, "terms", Ty::Int { min: 1 }, "200", "series terms J"),
            f(P, "beta1_alpha", Ty::Float { min: 0.0, max: 2.0 }, "1.2", "α of the β = 1 case"),
            f(P, "beta1_gamma", Ty::Float { min: 0.0, max: 2.0 }, "1.6", "γ of the β = 1 case"),
            f(P, "beta0_alpha", Ty::Float { min: 0.0, max: 2.0 }, "0.8", "α of the β = 0 case"),
            f(P, "beta0_gamma", Ty::Float { min: 0.0, max: 2.0 }, "2", "γ of the β = 0 case"),
            f(P, "boundary_replicates", Ty::Int { min: 1 }, "50000", "Y samples per boundary case"),
            f(P, "boundary_terms", Ty::Int { min: 1 }, "400", "series terms J for the boundary cases"),
            f(P, "reference_samples", Ty::Int { min: 1 }, "200000", "direct reference samples"),
            f(T, "ss_cf", Ty::Float { min: 0.0, max: 2.0 }, "0.03", "self-similarity CF discrepancy"),
            f(T, "si_cf", Ty::Float { min: 0.0, max: 2.0 }, "0.03", "stationary-increment CF discrepancy"),
            f(T, "hurst_abs", Ty::Float { min: 0.0, max: INF }, "0.05", "|Ĥ - H|"),
            f(T, "boundary_ks", Ty::Float { min: 0.0, max: 1.0 }, "0.02", "two-sample KS bound"),
        ],
    },
    KindInfo {
        name: "main-fclt",
        summary: "functional limit of the stationary ID process and its normalization c_n",
        verifies: "c_n^{-1} Σ_{k ≤ nt} X_k ⇒ √Γ(β+1) σ_f Y_{α,β,2}(t) for the stationary symmetric infinitely divisible \
                   process X_k = ∫ f(x_k) dM(x), with c_n = C_α^{-1/α} a_n^{1/2} ρ^←(1/μ(τ_D ≤ n)) ∈ RV_{β/2+(1-β)/α}.",
        doc: "c_n is built from the exact a_n, the exact wandering rate μ(τ_D ≤ n), C_α = (1-α)/(Γ(2-α) cos(πα/2)) and \
              the inverse tail ρ^←. Paths use the series Σ_j ε_j ρ^←(Γ_j/(2μ(τ_D ≤ n))) Ŝ_{nt}(f)(V_j) with marks V_j \
              from μ_n. The comparison is reported literally and with the factor 2^{1/α} on the limit.",
        fields: &[
            f(P, "checks", Ty::ChoiceList(&["fclt", "cn"]), "fclt, cn", "which comparisons to run"),
            f(P, "alphas", Ty::FloatList { min: 0.0, max: 2.0 }, "0.8, 1.5", "stability indices"),
            f(P, "beta", Ty::Float { min: 0.0, max: 1.0 }, "0.5", "tail index of the renewal chain"),
            f(P, "chain", Ty::Choice(&["renewal", "log-inverse"]), "renewal", "log-inverse is the β = 0 chain"),
            f(P, "levy", Ty::Choice(&["pure_stable", "pareto_cutoff"]), "pure_stable", "local Lévy tail"),
            f(P, "f_scale", Ty::Float { min: 0.0, max: INF }, "1", "f(0)"),
            f(P, "n", Ty::Int { min: 1 }, "100000", "window"),
            f(P, "replicates", Ty::Int { min: 1000 }, "10000", "paths on each side"),
            f(P, "terms", Ty::Int { min: 1 }, "200", "series terms J (both sides)"),
            f(P, "cn_min", Ty::Int { min: 1 }, "1000", "smallest n of the c_n fit"),
            f(P, "cn_max", Ty::Int { min: 2 }, "1000000", "largest n of the c_n fit"),
            f(T, "cf", Ty::Float { min: 0.0, max: 2.0 }, "0.05", "CF discrepancy at t = 1"),
            f(T, "cn_slope", Ty::Float { min: 0.0, max: INF }, "0.05", "|slope - (β/2 + (1-β)/α)|"),
        ],
    },
    KindInfo {
        name: "moments",
        summary: "moment bounds for positive and symmetric infinitely divisible laws",
        verifies: "E X^p ≤ c_p (∫ y^p dν₊ + (∫ y dν₊)^p) for positive infinitely divisible X, 1 < p < 2, and \
                   E|Y|^p ≤ c_p (∫ |y|^p dν + (∫ y² dν)^{p/2}) for symmetric Y, 2 < p < 4.",
        doc: "Compound-Poisson simulation on fixed calibration (10) and holdout (5) families; the calibrated constant \
              is the largest ratio, and a holdout exceeding it by more than the tolerance in standard errors fails. \
              Also writes ratios.csv.",
        fields: &[
            f(P, "p_pos", Ty::Float { min: 1.0, max: 2.0 }, "1.5", "moment for positive variables"),
            f(P, "p_sym", Ty::Float { min: 2.0, max: 4.0 }, "2.5", "moment for symmetric variables"),
            f(P, "mc_size", Ty::Int { min: 2 }, "200000", "draws per family member"),
            f(P, "poisson_samples", Ty::Int { min: 2 }, "1000000", "draws for the Poisson(1) oracle"),
            f(T, "holdout_z", Ty::Float { min: 0.0, max: INF }, "2", "allowed excess in standard errors"),
            f(T, "poisson_rel", Ty::Float { min: 0.0, max: INF }, "0.02", "relative error of E N^p, N ~ Poisson(1)"),
        ],
    },
];

static COMMON: [Field; 3] = [
    f("experiment", "seed", Ty::Int { min: 0 }, "1", "64-bit seed; every stream derives from it"),
    f("experiment", "out", Ty::Choice(&[]), "", "output directory (overridden by --out)"),
    f(T, "max_seconds", Ty::Float { min: 0.0, max: INF }, "inf", "wall-clock budget; exceeding it is an efficiency error"),
];

pub fn kind_info(name: &str) -> Option<&'static KindInfo> {
    KINDS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Floats(Vec<f64>),
    Bool(bool),
    Str(String),
    Strs(Vec<String>),
    Triples(Vec<(f64, f64, f64)>),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: &'static KindInfo,
    pub seed: u64,
    pub out: Option<PathBuf>,
    values: BTreeMap<(String, String), Value>,
}

fn convert(field: &Field, e: &Entry) -> Result<Value, ConfigError> {
    let (s, k) = (field.section, field.key);
    let range = |v: f64, min: f64, max: f64| -> Result<(), ConfigError> {
        if v.is_nan() || v < min || v > max {
            Err(ConfigError::at(e.line, format!("{s}.{k} = {v} is outside [{min}, {max}]")))
        } else {
            Ok(())
        }
    };
    Ok(match field.ty {
        Ty::Int { min } => {
            let v: f64 = parse_value(s, k, e)?;
            if v.fract() != 0.0 || v < 0.0 || v > u64::MAX as f64 {
                return Err(ConfigError::at(e.line, format!("{s}.{k} must be a nonnegative integer")));
            }
            let v = e.value.parse::<u64>().unwrap_or(v as u64);
            if v < min {
                return Err(ConfigError::at(e.line, format!("{s}.{k} = {v} must be at least {min}")));
            }
            Value::Int(v)
        }
        Ty::Float { min, max } => {
            let v: f64 = parse_value(s, k, e)?;
            range(v, min, max)?;
            Value::Float(v)
        }
        Ty::FloatList { min, max } => {
            let v: Vec<f64> = parse_list(s, k, e)?;
            if v.is_empty() {
                return Err(ConfigError::at(e.line, format!("{s}.{k} is empty")));
            }
            for &x in &v {
                range(x, min, max)?;
            }
            Value::Floats(v)
        }
        Ty::Bool => Value::Bool(parse_value(s, k, e)?),
        Ty::Choice(opts) => {
            if !opts.is_empty() && !opts.contains(&e.value.as_str()) {
                return Err(ConfigError::at(e.line, format!("{s}.{k}: `{}` is not one of {}", e.value, opts.join(", "))));
            }
            Value::Str(e.value.clone())
        }
        Ty::ChoiceList(opts) => {
            let v: Vec<String> = parse_list(s, k, e)?;
            if let Some(bad) = v.iter().find(|x| !opts.contains(&x.as_str())) {
                return Err(ConfigError::at(e.line, format!("{s}.{k}: `{bad}` is not one of {}", opts.join(", "))));
            }
            Value::Strs(v)
        }
        Ty::Triples => {
            let mut out = Vec::new();
            for part in e.value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let xs: Vec<f64> = part.split(':').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| {
                    ConfigError::at(e.line, format!("{s}.{k}: cannot parse `{part}` as a:b:c"))
                })?;
                if xs.len() != 3 {
                    return Err(ConfigError::at(e.line, format!("{s}.{k}: `{part}` needs three values")));
                }
                out.push((xs[0], xs[1], xs[2]));
            }
            if out.is_empty() {
                return Err(ConfigError::at(e.line, format!("{s}.{k} is empty")));
            }
            Value::Triples(out)
        }
    })
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let ke = raw
            .entry("experiment", "kind")
            .ok_or_else(|| ConfigError::general("missing [experiment] kind"))?;
        let kind = kind_info(&ke.value).ok_or_else(|| {
            let names: Vec<&str> = KINDS.iter().map(|k| k.name).collect();
            ConfigError::at(ke.line, format!("unknown kind `{}` (expected one of {})", ke.value, names.join(", ")))
        })?;
        let fields: Vec<&Field> = COMMON.iter().chain(kind.fields).collect();
        for (sec, entries) in &raw.sections {
            if !matches!(sec.as_str(), "experiment" | "params" | "tolerances") {
                let line = raw.section_lines.get(sec).copied().or_else(|| entries.values().map(|e| e.line).min());
                let msg = format!("unknown section [{sec}]");
                return Err(match line {
                    Some(l) => ConfigError::at(l, msg),
                    None => ConfigError::general(msg),
                });
            }
            for (k, e) in entries {
                if sec == "experiment" && k == "kind" {
                    continue;
                }
                if !fields.iter().any(|f| f.section == sec && f.key == k) {
                    return Err(ConfigError::at(e.line, format!("unknown key `{k}` in [{sec}] for kind {}", kind.name)));
                }
            }
        }
        let mut values = BTreeMap::new();
        for field in &fields {
            let e = match raw.entry(field.section, field.key) {
                Some(e) => e.clone(),
                None => Entry { value: field.default.to_string(), line: 0 },
            };
            if field.key == "out" {
                continue;
            }
            let v = convert(field, &e).map_err(|err| if e.line == 0 { ConfigError::general(err.message) } else { err })?;
            values.insert((field.section.to_string(), field.key.to_string()), v);
        }
        let seed = match values.get(&("experiment".into(), "seed".into())) {
            Some(Value::Int(s)) => *s,
            _ => unreachable!("seed is an integer field"),
        };
        let out = raw.entry("experiment", "out").map(|e| PathBuf::from(&e.value));
        Ok(ExperimentConfig { kind, seed, out, values })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    fn get(&self, section: &str, key: &str) -> &Value {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .unwrap_or_else(|| panic!("{section}.{key} is not a field of {}", self.kind.name))
    }

    pub fn int(&self, key: &str) -> u64 {
        match self.get(P, key) {
            Value::Int(v) => *v,
            v => panic!("{key} is {v:?}"),
        }
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.get(P, key) {
            Value::Float(v) => *v,
            v => panic!("{key} is {v:?}"),
        }
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        match self.get(P, key) {
            Value::Floats(v) => v.clone(),
            v => panic!("{key} is {v:?}"),
        }
    }

    pub fn choice(&self, key: &str) -> &str {
        match self.get(P, key) {
            Value::Str(v) => v,
            v => panic!("{key} is {v:?}"),
        }
    }

    pub fn enabled(&self, check: &str) -> bool {
        match self.get(P, "checks") {
            Value::Strs(v) => v.iter().any(|c| c == check),
            v => panic!("checks is {v:?}"),
        }
    }

    pub fn triples(&self, key: &str) -> Vec<(f64, f64, f64)> {
        match self.get(P, key) {
            Value::Triples(v) => v.clone(),
            v => panic!("{key} is {v:?}"),
        }
    }

    pub fn tol(&self, key: &str) -> f64 {
        match self.get(T, key) {
            Value::Float(v) => *v,
            v => panic!("{key} is {v:?}"),
        }
    }
}

/// Text for `describe <kind>`.
pub fn describe(kind: &KindInfo) -> String {
    let mut s = format!("{}\n\nVerifies: {}\n\n{}\n\nFields (section.key, default, meaning):\n", kind.name, kind.verifies, kind.doc);
    for field in COMMON.iter().chain(kind.fields) {
        let d = if field.default.is_empty() { "-" } else { field.default };
        s.push_str(&format!("  {}.{} = {}    {}\n", field.section, field.key, d, field.doc));
    }
    s
}
