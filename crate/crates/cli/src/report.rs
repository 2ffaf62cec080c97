//! Rows, checks and artifacts produced by one experiment run.

use std::io::{self, Write};

use crate::plot::Plot;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub label: String,
    pub x: Option<f64>,
    pub value: f64,
    pub reference: Option<f64>,
    pub stderr: Option<f64>,
}

/// A statistic compared against a declared tolerance; it passes when
/// `value < bound`. Informational checks never gate the exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub gating: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value < self.bound
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
    /// Extra CSV tables written next to `results.csv`.
    pub tables: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn row(&mut self, quantity: &str, label: impl Into<String>, x: Option<f64>, value: f64, reference: Option<f64>, stderr: Option<f64>) {
        self.rows.push(Row { quantity: quantity.into(), label: label.into(), x, value, reference, stderr });
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.checks.push(Check { name: name.into(), value, bound, gating: true });
    }

    pub fn info(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.checks.push(Check { name: name.into(), value, bound, gating: false });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(Check::passed)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["quantity", "label", "x", "value", "reference", "stderr"])?;
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([r.quantity.clone(), r.label.clone(), opt(r.x), num(r.value), opt(r.reference), opt(r.stderr)])?;
        }
        wr.flush()
    }

    pub fn summary(&self, kind: &str, seed: u64) -> String {
        let mut s = format!("kind: {kind}\nseed: {seed}\n");
        for c in &self.checks {
            let tag = match (c.gating, c.passed()) {
                (true, true) => "PASS",
                (true, false) => "FAIL",
                (false, _) => "INFO",
            };
            s.push_str(&format!("{tag} {}: {} (bound {})\n", c.name, num(c.value), num(c.bound)));
        }
        s.push_str(if self.passed() { "overall: PASS\n" } else { "overall: FAIL\n" });
        s
    }
}

/// Shortest round-trip decimal, switching to exponent notation for very
/// large or small magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut o = Outcome::default();
        o.row("ks", "beta=0.5, n=10", Some(0.5), 0.0125, None, Some(1e-6));
        o.check("ks", 0.0125, 0.03);
        o.info("other", 1.0, 0.5);
        let mut buf = Vec::new();
        o.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "quantity,label,x,value,reference,stderr\nks,\"beta=0.5, n=10\",0.5,0.0125,,1e-6\n");
        assert!(o.passed());
        let s = o.summary("sssi", 3);
        assert!(s.contains("PASS ks") && s.contains("INFO other") && s.ends_with("overall: PASS\n"));
    }

    #[test]
    fn number_format() {
        assert_eq!(num(1e20), "1e20");
        assert_eq!(num(0.25), "0.25");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(-3e-7), "-3e-7");
    }
}
