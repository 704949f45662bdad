//! Invariant suites run by `mps-capacity verify`.
//!
//! Every check is aggregated over a parameter grid and block lengths: the
//! report keeps the worst observed value and where it occurred.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::capacity::{channel_check, closed_form_capacity, TWO_PATH_TOL};
use crate::channel::{controlled_phase_unitary, phase_gate, unitarity_residual, DensityMatrix, CPTP_TOL};
use crate::closed_form::{
    aklt_block_entropy, aklt_capacity, aklt_spectrum, classify_mg_products, compare_multisets, mg_capacity,
    mg_multiplicity_closed_form, mg_multiplicity_recurrence, mg_spectrum, table_discrepancies, ZERO_FLOOR,
};
use crate::diag::{enumerate_distribution, entropy_trace, shannon_entropy, SymbolString, DEFAULT_PRUNE_TOL};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mps::{
    aklt_ground_theta, solve_invariant_state, validate_model, ModelKind, MpsModel, DEFAULT_SOLVER_MAX_ITER,
    DEFAULT_SOLVER_TOL, MODEL_TOL,
};

pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const STATIONARITY_TOL: f64 = 1e-10;
pub const SPECTRUM_TOL: f64 = 1e-12;
/// Deepest block length used for marginal checks.
pub const STATIONARITY_MAX_N: usize = 8;
/// Deepest block length for the explicit channel construction.
pub const CHANNEL_MAX_N: usize = 4;
/// Deepest block length for brute-force product classification.
pub const CLASSIFY_MAX_N: usize = 12;
/// The multiplicity recurrence is always iterated this far.
pub const RECURRENCE_N_MAX: u32 = 20;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub location: String,
    pub samples: usize,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} (tol {:.1e}) at {} over {} sample(s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            if self.location.is_empty() { "-" } else { &self.location },
            self.samples
        )
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["check", "passed", "worst", "tolerance", "location", "samples"])?;
        for c in &self.checks {
            wtr.write_record([
                c.name.clone(),
                c.passed.to_string(),
                c.worst.to_string(),
                c.tolerance.to_string(),
                c.location.clone(),
                c.samples.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Collects named checks in first-seen order.
#[derive(Default)]
struct Suite {
    checks: Vec<Check>,
    index: BTreeMap<String, usize>,
}

impl Suite {
    /// Records a non-negative deviation; NaN counts as a failure.
    fn record(&mut self, name: &str, tol: f64, value: f64, location: impl FnOnce() -> String) {
        let i = *self.index.entry(name.to_string()).or_insert_with(|| {
            self.checks.push(Check {
                name: name.to_string(),
                passed: true,
                worst: 0.0,
                tolerance: tol,
                location: String::new(),
                samples: 0,
            });
            self.checks.len() - 1
        });
        let c = &mut self.checks[i];
        c.samples += 1;
        let v = if value.is_nan() { f64::INFINITY } else { value };
        if c.samples == 1 || v > c.worst {
            c.worst = v;
            c.location = location();
        }
        if !(value <= tol) {
            c.passed = false;
        }
    }

    /// Records a failed computation as an infinite deviation.
    fn record_err(&mut self, name: &str, tol: f64, err: &Error, location: String) {
        self.record(name, tol, f64::INFINITY, || format!("{location}: {err}"));
    }

    fn finish(self) -> VerifyReport {
        VerifyReport { checks: self.checks }
    }
}

fn param_label(m: &MpsModel) -> String {
    match (m.kind(), m.primary_param()) {
        (ModelKind::Aklt, Some(t)) => format!("theta={t:.6}"),
        (ModelKind::Mg, Some(g)) => format!("g={g:.6}"),
        _ => m.label().to_string(),
    }
}

fn map_diff(a: &BTreeMap<SymbolString, f64>, b: &BTreeMap<SymbolString, f64>) -> f64 {
    let mut worst = 0.0f64;
    for (k, &x) in a {
        worst = worst.max((x - b.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, &y) in b {
        if !a.contains_key(k) {
            worst = worst.max(y.abs());
        }
    }
    worst
}

fn model_checks(s: &mut Suite, m: &MpsModel, n_max: usize) {
    let kind = m.kind().to_string();
    let at = param_label(m);
    let name = |what: &str| format!("{kind}: {what}");

    match validate_model(m) {
        Ok(rep) => {
            for r in &rep.residuals {
                s.record(&name(r.name), MODEL_TOL, r.value, || at.clone());
            }
        }
        Err(e) => s.record_err(&name("validation"), MODEL_TOL, &e, at.clone()),
    }
    match solve_invariant_state(m.kraus(), DEFAULT_SOLVER_TOL, DEFAULT_SOLVER_MAX_ITER) {
        Ok(rho) => s.record(&name("solved invariant state"), 1e-10, rho.max_abs_diff(m.invariant_state()), || {
            at.clone()
        }),
        Err(e) => s.record_err(&name("solved invariant state"), 1e-10, &e, at.clone()),
    }

    let trace = match entropy_trace(m, n_max, DEFAULT_PRUNE_TOL) {
        Ok(t) => t,
        Err(e) => return s.record_err(&name("entropy trace"), 0.0, &e, at.clone()),
    };
    let log_d = (m.local_dim() as f64).log2();
    let closed = closed_form_capacity(m);

    let mut prev: Option<BTreeMap<SymbolString, f64>> = None;
    for n in 1..=n_max {
        let loc = || format!("{at} n={n}");
        let dist = match enumerate_distribution(m, n, DEFAULT_PRUNE_TOL) {
            Ok(d) => d,
            Err(e) => {
                s.record_err(&name("enumeration"), 0.0, &e, loc());
                continue;
            }
        };
        s.record(&name("normalization"), NORMALIZATION_TOL, (dist.total() - 1.0).abs(), loc);
        let rec = trace.records[n - 1];
        s.record(&name("single-pass entropy"), 1e-10, (rec.h_n - shannon_entropy(&dist)).abs(), loc);
        if n >= 2 {
            let prev_rate = trace.records[n - 2].rate_cond;
            s.record(&name("conditional entropy non-increasing"), 1e-10, (rec.rate_cond - prev_rate).max(0.0), loc);
        }
        s.record(&name("conditional below block average"), 1e-10, (rec.rate_cond - rec.rate_avg).max(0.0), loc);

        if n <= STATIONARITY_MAX_N {
            if let Some(p) = &prev {
                s.record(&name("stationarity (drop first)"), STATIONARITY_TOL, map_diff(&dist.marginal_drop_first(), p), loc);
                s.record(&name("stationarity (drop last)"), STATIONARITY_TOL, map_diff(&dist.marginal_drop_last(), p), loc);
            }
            match enumerate_distribution(m, n, 0.0) {
                Ok(full) => {
                    s.record(&name("pruned vs full probabilities"), 1e-12, map_diff(&full.as_map(), &dist.as_map()), loc);
                    s.record(
                        &name("pruned vs full entropy"),
                        1e-10,
                        (shannon_entropy(&full) - shannon_entropy(&dist)).abs(),
                        loc,
                    );
                    let spectrum = match (m.kind(), m.primary_param()) {
                        (ModelKind::Aklt, Some(t)) => Some(aklt_spectrum(n as u32, t)),
                        (ModelKind::Mg, Some(g)) if n >= 2 => Some(mg_spectrum(n as u32, g)),
                        _ => None,
                    };
                    match spectrum {
                        Some(Ok(fs)) => {
                            let cmp = compare_multisets(&fs.expanded(), &full.probabilities(), ZERO_FLOOR);
                            s.record(&name("closed-form spectrum vs enumeration"), SPECTRUM_TOL, cmp.max_abs_diff, loc);
                        }
                        Some(Err(e)) => s.record_err(&name("closed-form spectrum vs enumeration"), SPECTRUM_TOL, &e, loc()),
                        None => {}
                    }
                }
                Err(e) => s.record_err(&name("full enumeration"), 0.0, &e, loc()),
            }
            prev = Some(dist.as_map());
        }

        if let (ModelKind::Aklt, Some(t)) = (m.kind(), m.primary_param()) {
            let exact = aklt_block_entropy(n as u32, t);
            s.record(&name("exact block entropy"), 1e-10, (rec.h_n - exact).abs(), loc);
        }
        if let Some(c) = closed {
            let gap_avg = c - (log_d - rec.rate_avg);
            let gap_cond = c - (log_d - rec.rate_cond);
            s.record(&name("block-average gap within 1.5/n"), 0.0, (gap_avg - 1.5 / n as f64).max(0.0), loc);
            s.record(&name("estimators below closed form"), 1e-10, (-gap_cond).max(-gap_avg).max(0.0), loc);
        }

        if n <= CHANNEL_MAX_N {
            match channel_check(m, n, DEFAULT_PRUNE_TOL) {
                Ok(ch) => {
                    s.record(&name("channel trace preservation"), CPTP_TOL, ch.trace_preservation_residual, loc);
                    s.record(&name("two-path entropy agreement"), TWO_PATH_TOL, ch.path_difference(), loc);
                    s.record(&name("complementary output diagonal"), 1e-10, ch.complementary_offdiag, loc);
                    s.record(
                        &name("output entropy at maximally mixed input"),
                        1e-9,
                        (ch.output_entropy - n as f64 * log_d).abs(),
                        loc,
                    );
                }
                Err(e) => s.record_err(&name("channel construction"), 0.0, &e, loc()),
            }
        }
    }
}

fn static_checks(s: &mut Suite) {
    for d in 2..=5usize {
        let loc = || format!("d={d}");
        match controlled_phase_unitary(d) {
            Ok(u) => s.record("gates: controlled phase unitarity", 1e-12, unitarity_residual(&u), loc),
            Err(e) => s.record_err("gates: controlled phase unitarity", 1e-12, &e, loc()),
        }
        match (phase_gate(d, 1), phase_gate(d, d - 1)) {
            (Ok(a), Ok(b)) => s.record(
                "gates: Z(1) Z(d-1) = I",
                1e-14,
                (&a * &b).max_abs_diff(&ComplexMatrix::identity(d)),
                loc,
            ),
            (Err(e), _) | (_, Err(e)) => s.record_err("gates: Z(1) Z(d-1) = I", 1e-14, &e, loc()),
        }
        match DensityMatrix::maximally_mixed(d).entropy() {
            Ok(h) => s.record("entropy of maximally mixed state", 1e-12, (h - (d as f64).log2()).abs(), loc),
            Err(e) => s.record_err("entropy of maximally mixed state", 1e-12, &e, loc()),
        }
    }
    s.record("aklt: capacity at ground angle", 1e-12, (aklt_capacity(aklt_ground_theta()) - 2.0 / 3.0).abs(), || {
        "theta*".into()
    });
}

fn recurrence_checks(s: &mut Suite, n_max: usize) {
    match mg_multiplicity_recurrence(RECURRENCE_N_MAX) {
        Ok(run) => {
            for t in run.tables.iter().filter(|t| t.n >= 5) {
                let loc = || format!("n={}", t.n);
                match mg_multiplicity_closed_form(t.n) {
                    Ok(cf) => s.record(
                        "mg: recurrence matches closed-form multiplicities",
                        0.0,
                        table_discrepancies(&cf, t).len() as f64,
                        loc,
                    ),
                    Err(e) => s.record_err("mg: recurrence matches closed-form multiplicities", 0.0, &e, loc()),
                }
            }
        }
        Err(e) => s.record_err("mg: recurrence matches closed-form multiplicities", 0.0, &e, String::new()),
    }
    for n in 4..=n_max.min(CLASSIFY_MAX_N) as u32 {
        let loc = || format!("n={n}");
        match (classify_mg_products(n), mg_multiplicity_closed_form(n)) {
            (Ok(enumerated), Ok(cf)) => {
                s.record(
                    "mg: classified products match closed-form multiplicities",
                    0.0,
                    table_discrepancies(&cf, &enumerated).len() as f64,
                    loc,
                );
                let live = (1u64 << n) - cf.z;
                match enumerate_distribution(&crate::mps::mg_model(crate::closed_form::CLASSIFY_G).expect("valid g"), n as usize, 0.0) {
                    Ok(d) => {
                        let support = d.items.iter().filter(|i| i.probability > 0.0).count() as u64;
                        s.record("mg: live strings = 2^n - z_n", 0.0, support.abs_diff(live) as f64, loc);
                    }
                    Err(e) => s.record_err("mg: live strings = 2^n - z_n", 0.0, &e, loc()),
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                s.record_err("mg: classified products match closed-form multiplicities", 0.0, &e, loc())
            }
        }
    }
    match mg_capacity(0.5) {
        Ok(c) => s.record("mg: capacity at ground point", 1e-12, (c - 0.5).abs(), || "g=0.5".into()),
        Err(e) => s.record_err("mg: capacity at ground point", 1e-12, &e, "g=0.5".into()),
    }
}

/// Runs every suite over `models` up to block length `n_max`.
pub fn run_verification(models: &[MpsModel], n_max: usize) -> Result<VerifyReport> {
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    let mut s = Suite::default();
    static_checks(&mut s);
    for m in models {
        model_checks(&mut s, m, n_max);
    }
    if models.iter().any(|m| m.kind() == ModelKind::Mg) {
        recurrence_checks(&mut s, n_max);
    }
    Ok(s.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{aklt_model, mg_model};

    #[test]
    fn small_runs_pass() {
        let models = vec![
            aklt_model(aklt_ground_theta()).unwrap(),
            aklt_model(0.3).unwrap(),
            mg_model(0.5).unwrap(),
            mg_model(0.2).unwrap(),
        ];
        let rep = run_verification(&models, 5).unwrap();
        assert!(rep.passed(), "{rep}");
        assert!(rep.get("aklt: two-path entropy agreement").is_some());
        assert!(rep.get("mg: live strings = 2^n - z_n").is_some());
    }

    #[test]
    fn failure_is_named() {
        let mut s = Suite::default();
        s.record("a", 1.0, 0.5, || "x".into());
        s.record("b", 1.0, 2.0, || "y".into());
        s.record("b", 1.0, f64::NAN, || "z".into());
        let rep = s.finish();
        assert!(!rep.passed());
        let f = rep.first_failure().unwrap();
        assert_eq!(f.name, "b");
        assert_eq!(f.location, "z");
        assert_eq!(f.samples, 2);
    }
}
