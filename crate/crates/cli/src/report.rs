use std::fmt::Write as _;
use std::path::Path;

use dino_core::dino::IterationRecord;

use crate::error::Result;
use crate::experiment::THEORY_TOLERANCE;
use crate::metrics::read_metrics;

/// Outcome of checking each iteration against its guaranteed decrease.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TheoryCheck {
    pub iterations: usize,
    pub gated: usize,
    pub passed: usize,
    /// `(t, f_after, largest f_after the bound allows)`.
    pub violations: Vec<(usize, f64, f64)>,
    /// Realized decrease divided by the guaranteed decrease.
    pub ratios: Vec<f64>,
}

pub fn check_records(records: &[IterationRecord]) -> TheoryCheck {
    let mut c = TheoryCheck {
        iterations: records.len(),
        ..Default::default()
    };
    for r in records {
        let Some(bound) = r.decrease_bound else {
            continue;
        };
        c.gated += 1;
        let limit = r.f_before - bound + THEORY_TOLERANCE * r.f_before.abs();
        if r.f_after <= limit {
            c.passed += 1;
        } else {
            c.violations.push((r.t, r.f_after, limit));
        }
        if bound > 0.0 {
            c.ratios.push(r.decrease() / bound);
        }
    }
    c
}

fn histogram(ratios: &[f64]) -> String {
    let edges = [
        f64::NEG_INFINITY,
        1.0,
        1e1,
        1e2,
        1e3,
        1e4,
        1e5,
        1e6,
        f64::INFINITY,
    ];
    let labels = [
        "<1", "1-10", "10-1e2", "1e2-1e3", "1e3-1e4", "1e4-1e5", "1e5-1e6", ">=1e6",
    ];
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        let n = ratios
            .iter()
            .filter(|&&r| r >= edges[i] && r < edges[i + 1])
            .count();
        if n > 0 {
            let _ = write!(out, " {label}:{n}");
        }
    }
    out
}

pub fn render(check: &TheoryCheck) -> String {
    if check.iterations == 0 {
        return "no iterations\n".to_string();
    }
    let mut s = String::new();
    let head = if check.violations.is_empty() {
        "PASS"
    } else {
        "FAIL"
    };
    let _ = writeln!(
        s,
        "{head}: {}/{} iterations",
        check.passed, check.iterations
    );
    let _ = writeln!(
        s,
        "gates passed: {}/{} iterations",
        check.gated, check.iterations
    );
    for (t, f, limit) in &check.violations {
        let _ = writeln!(
            s,
            "violation at iteration {t}: f_after = {f:.12e} exceeds {limit:.12e}"
        );
    }
    if !check.ratios.is_empty() {
        let mut r = check.ratios.clone();
        r.sort_by(f64::total_cmp);
        let _ = writeln!(
            s,
            "realized/guaranteed decrease: min {:.3e}, median {:.3e}, max {:.3e}",
            r[0],
            r[r.len() / 2],
            r[r.len() - 1]
        );
        let _ = writeln!(s, "histogram:{}", histogram(&r));
    }
    s
}

/// Human-readable check of a metrics file against the per-iteration
/// decrease guarantee.
pub fn theory_report(path: impl AsRef<Path>) -> Result<String> {
    let metrics = read_metrics(path)?;
    Ok(render(&check_records(&metrics.iterations)))
}
