//! Closed-form diagonal spectra and capacities for the AKLT and
//! Majumdar–Ghosh environments, plus the multiplicity bookkeeping for the MG
//! operator products `O₁…O_n O_n†…O₁†`.
//!
//! Spectra are returned family by family ([`FamilySpectrum`]) so that
//! analytically distinct families that happen to share a numeric value stay
//! separate; merge with [`FamilySpectrum::merged`] for display.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diag::{entropy_bits, Spectrum};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mps::mg_model;

/// Values at or below this are treated as zero when comparing multisets.
pub const ZERO_FLOOR: f64 = 1e-14;
/// Largest `n` accepted by the exact binomial routine.
pub const MAX_BINOMIAL_N: u32 = 64;

fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Binary entropy of `sin²θ` in bits.
pub fn h2(theta: f64) -> f64 {
    let s = theta.sin().powi(2);
    let c = theta.cos().powi(2);
    -xlog2x(s) - xlog2x(c)
}

/// `log₂3 - h₂(θ)` qubits per channel use.
pub fn aklt_capacity(theta: f64) -> f64 {
    3f64.log2() - h2(theta)
}

/// `1 + (g/2)log₂g + ((1-g)/2)log₂(1-g)` qubits per channel use.
pub fn mg_capacity(g: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&g) {
        return Err(Error::Domain(format!("g must lie in [0, 1), got {g}")));
    }
    Ok(1.0 + 0.5 * xlog2x(g) + 0.5 * xlog2x(1.0 - g))
}

/// Exact finite-`n` entropy of the AKLT diagonal, `n·h₂(θ) + 1 - sin²ⁿθ`.
///
/// Follows from summing the binomial families: the `p < n` families carry
/// total mass `1 - sin²ⁿθ` and each contributes one extra bit for the
/// factor 1/2.
pub fn aklt_block_entropy(n: u32, theta: f64) -> f64 {
    let s = theta.sin().powi(2);
    n as f64 * h2(theta) + 1.0 - s.powi(n as i32)
}

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u32, k: u32) -> u64 {
    assert!(n <= MAX_BINOMIAL_N, "binomial({n}, {k}) exceeds the n <= 64 guard");
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial fits in u64 for n <= 64")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub label: String,
    pub value: f64,
    pub multiplicity: u64,
}

/// A spectrum as a list of labelled families, possibly with repeated
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpectrum {
    pub n: u32,
    pub families: Vec<Family>,
}

impl FamilySpectrum {
    fn push(&mut self, label: String, value: f64, multiplicity: u64) {
        if value != 0.0 && multiplicity > 0 {
            self.families.push(Family {
                label,
                value,
                multiplicity,
            });
        }
    }

    /// Every value repeated by its multiplicity, sorted descending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.support_size() as usize);
        for f in &self.families {
            v.extend(std::iter::repeat_n(f.value, f.multiplicity as usize));
        }
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn support_size(&self) -> u64 {
        self.families.iter().map(|f| f.multiplicity).sum()
    }

    pub fn total(&self) -> f64 {
        self.families.iter().map(|f| f.value * f.multiplicity as f64).sum()
    }

    pub fn entropy(&self) -> f64 {
        self.families
            .iter()
            .map(|f| f.multiplicity as f64 * entropy_bits([f.value]))
            .sum()
    }

    pub fn merged(&self, group_tol: f64) -> Spectrum {
        Spectrum::from_values(self.expanded(), group_tol)
    }

    pub fn get(&self, label: &str) -> Option<&Family> {
        self.families.iter().find(|f| f.label == label)
    }

    /// Rows `family,value,multiplicity,source`.
    pub fn write_csv_rows<W: Write>(&self, wtr: &mut csv::Writer<W>, source: &str) -> Result<()> {
        for f in &self.families {
            wtr.write_record([
                f.label.as_str(),
                &f.value.to_string(),
                &f.multiplicity.to_string(),
                source,
            ])?;
        }
        Ok(())
    }
}

/// Diagonal spectrum of the AKLT local density matrix on `n` sites:
/// `λ_p = sin²ᵖθ cos²⁽ⁿ⁻ᵖ⁾θ / 2` with multiplicity `2·C(n, p)` for
/// `p < n`, and `λ_n = sin²ⁿθ` once.
pub fn aklt_spectrum(n: u32, theta: f64) -> Result<FamilySpectrum> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if n > MAX_BINOMIAL_N {
        return Err(Error::Domain(format!("n = {n} exceeds {MAX_BINOMIAL_N}")));
    }
    let s = theta.sin().powi(2);
    let c = theta.cos().powi(2);
    let mut out = FamilySpectrum { n, families: Vec::new() };
    for p in 0..n {
        let value = s.powi(p as i32) * c.powi((n - p) as i32) / 2.0;
        out.push(format!("lambda_{p}"), value, 2 * binomial(n, p));
    }
    out.push(format!("lambda_{n}"), s.powi(n as i32), 1);
    Ok(out)
}

/// Diagonal spectrum of the MG local density matrix on `n ≥ 2` sites.
pub fn mg_spectrum(n: u32, g: f64) -> Result<FamilySpectrum> {
    if n < 2 {
        return Err(Error::Domain(format!("the MG spectrum formula needs n >= 2, got {n}")));
    }
    if n > MAX_BINOMIAL_N {
        return Err(Error::Domain(format!("n = {n} exceeds {MAX_BINOMIAL_N}")));
    }
    if !(0.0..1.0).contains(&g) {
        return Err(Error::Domain(format!("g must lie in [0, 1), got {g}")));
    }
    let q = 1.0 - g;
    let pw = |x: f64, e: u32| x.powi(e as i32);
    let mut out = FamilySpectrum { n, families: Vec::new() };
    if n % 2 == 1 {
        let k = n.div_ceil(2);
        out.push("mu_0".into(), (pw(q, k) + pw(g, k)) / 2.0, 2);
        for i in 1..k {
            // 2·C(k, k-i) written as 2·C(k, i)
            out.push(format!("mu_{i}"), pw(q, i) * pw(g, k - i) / 2.0, 2 * binomial(k, i));
        }
    } else {
        let h = n / 2;
        out.push("gamma_0".into(), (pw(q, h) + pw(g, h + 1)) / 2.0, 1);
        for i in 1..h {
            out.push(format!("gamma1_{i}"), pw(g, i) * pw(q, h - i) / 2.0, binomial(h, i));
        }
        for i in 1..=h {
            out.push(format!("gamma2_{i}"), pw(g, h - i + 1) * pw(q, i) / 2.0, binomial(h + 1, i));
        }
        out.push(format!("gamma_{h}"), (pw(q, h + 1) + pw(g, h)) / 2.0, 1);
    }
    Ok(out)
}

/// Outcome of an element-wise comparison of two probability multisets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultisetComparison {
    pub len_left: usize,
    pub len_right: usize,
    pub max_abs_diff: f64,
}

impl MultisetComparison {
    pub fn matches(&self, tol: f64) -> bool {
        self.len_left == self.len_right && self.max_abs_diff <= tol
    }
}

/// Sorts both sides, drops entries `<= zero_floor`, and compares
/// position by position. Length mismatch yields `max_abs_diff = ∞`.
pub fn compare_multisets(left: &[f64], right: &[f64], zero_floor: f64) -> MultisetComparison {
    let prep = |v: &[f64]| {
        let mut v: Vec<f64> = v.iter().copied().filter(|&x| x > zero_floor).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let a = prep(left);
    let b = prep(right);
    let max_abs_diff = if a.len() == b.len() {
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    MultisetComparison {
        len_left: a.len(),
        len_right: b.len(),
        max_abs_diff,
    }
}

/// Counts of MG operator products `O₁…O_n O_n†…O₁†` by diagonal form.
///
/// Indexed families are stored from index 1: `c[0]` is `c_n(1)`. Their
/// ranges are `1..=⌊n/2⌋-1` for `c` and `g`, `1..=⌈n/2⌉-1` for `e`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicityTable {
    pub n: u32,
    pub z: u64,
    pub b: u64,
    pub c: Vec<u64>,
    pub d: u64,
    pub e: Vec<u64>,
    pub f: u64,
    pub g: Vec<u64>,
    pub h: u64,
    /// Products matching no family; always 0 for tables built from the MG
    /// operators.
    #[serde(default)]
    pub unclassified: u64,
}

impl MultiplicityTable {
    fn empty(n: u32) -> Self {
        let fl = (n / 2) as usize;
        let ce = n.div_ceil(2) as usize;
        MultiplicityTable {
            n,
            z: 0,
            b: 0,
            c: vec![0; fl.saturating_sub(1)],
            d: 0,
            e: vec![0; ce.saturating_sub(1)],
            f: 0,
            g: vec![0; fl.saturating_sub(1)],
            h: 0,
            unclassified: 0,
        }
    }

    /// `z + b + Σc + d + Σe + f + Σg + h` (plus anything unclassified).
    pub fn total(&self) -> u64 {
        self.z
            + self.b
            + self.c.iter().sum::<u64>()
            + self.d
            + self.e.iter().sum::<u64>()
            + self.f
            + self.g.iter().sum::<u64>()
            + self.h
            + self.unclassified
    }

    /// Every length-`n` string is accounted for.
    pub fn is_complete(&self) -> bool {
        self.total() == 1u64 << self.n
    }

    /// Number of products with a nonzero diagonal.
    pub fn live(&self) -> u64 {
        self.total() - self.z
    }

    /// `(name, value)` for every count, indexed families as `c(i)` etc.
    pub fn entries(&self) -> Vec<(String, u64)> {
        let mut out = vec![("z".to_string(), self.z), ("b".to_string(), self.b)];
        out.extend(self.c.iter().enumerate().map(|(i, &v)| (format!("c({})", i + 1), v)));
        out.push(("d".into(), self.d));
        out.extend(self.e.iter().enumerate().map(|(i, &v)| (format!("e({})", i + 1), v)));
        out.push(("f".into(), self.f));
        out.extend(self.g.iter().enumerate().map(|(i, &v)| (format!("g({})", i + 1), v)));
        out.push(("h".into(), self.h));
        out
    }

    /// Rows `n,family,count`.
    pub fn write_csv_rows<W: Write>(&self, wtr: &mut csv::Writer<W>) -> Result<()> {
        for (name, v) in self.entries() {
            wtr.write_record([self.n.to_string(), name, v.to_string()])?;
        }
        Ok(())
    }
}

impl fmt::Display for MultiplicityTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}:", self.n)?;
        for (name, v) in self.entries() {
            write!(f, " {name}={v}")?;
        }
        write!(f, " (total {})", self.total())
    }
}

/// The `n = 4` initial conditions exactly as printed alongside the
/// recurrence: `z=6, b=1, c(1)=2, d=1, e(1)=1, f=1, g(1)=2, h=1`.
/// They total 15, one short of `2⁴`.
pub fn printed_initial_table() -> MultiplicityTable {
    MultiplicityTable {
        n: 4,
        z: 6,
        b: 1,
        c: vec![2],
        d: 1,
        e: vec![1],
        f: 1,
        g: vec![2],
        h: 1,
        unclassified: 0,
    }
}

/// Closed-form counts for `n ≥ 4`.
pub fn mg_multiplicity_closed_form(n: u32) -> Result<MultiplicityTable> {
    if n < 4 {
        return Err(Error::Domain(format!("multiplicity tables start at n = 4, got {n}")));
    }
    if n >= MAX_BINOMIAL_N {
        return Err(Error::Domain(format!("n = {n} exceeds {}", MAX_BINOMIAL_N - 1)));
    }
    let fl = n / 2;
    let ce = n.div_ceil(2);
    let mut t = MultiplicityTable::empty(n);
    t.z = (1u64 << n) - (1u64 << (fl + 1)) - (1u64 << ce) + 2;
    t.b = 1;
    t.d = 1;
    t.f = 1;
    t.h = 1;
    for i in 1..fl {
        t.c[i as usize - 1] = binomial(fl, i);
        t.g[i as usize - 1] = binomial(fl, i);
    }
    for i in 1..ce {
        t.e[i as usize - 1] = binomial(ce, i);
    }
    Ok(t)
}

fn at(v: &[u64], i: u32) -> u64 {
    if i == 0 {
        return 0;
    }
    v.get(i as usize - 1).copied().unwrap_or(0)
}

/// One step `n → n+1` of the multiplicity recurrence.
pub fn mg_multiplicity_step(t: &MultiplicityTable) -> MultiplicityTable {
    let n = t.n;
    let fl = n / 2;
    let ce = n.div_ceil(2);
    let mut next = MultiplicityTable::empty(n + 1);
    let fl1 = n.div_ceil(2);
    let ce1 = (n + 1).div_ceil(2);

    next.z = 2 * t.z
        + t.b
        + (1..fl).map(|i| at(&t.c, i)).sum::<u64>()
        + (1..fl).map(|i| at(&t.g, i)).sum::<u64>()
        + t.h;
    next.b = t.d;
    for i in 1..fl1 {
        next.c[i as usize - 1] = at(&t.e, i);
    }
    next.d = t.f;
    let last = ce1 - 1;
    for i in 1..=last {
        let mut v = 0;
        if i == 1 {
            v += t.h + at(&t.c, 1);
        }
        if (2..=ce1.saturating_sub(2)).contains(&i) {
            v += at(&t.g, fl + 1 - i) + at(&t.c, i);
        }
        if i == last {
            v += at(&t.g, 1) + t.b;
        }
        next.e[i as usize - 1] = v;
    }
    next.f = t.d;
    for i in 1..fl1 {
        next.g[i as usize - 1] = at(&t.e, ce - i);
    }
    next.h = t.f;
    next
}

/// Iterates the recurrence from `initial` up to `n_max`; the result starts
/// with `initial` itself.
pub fn iterate_recurrence(initial: &MultiplicityTable, n_max: u32) -> Vec<MultiplicityTable> {
    let mut out = vec![initial.clone()];
    while out.last().expect("non-empty").n < n_max {
        let next = mg_multiplicity_step(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// Reference value of `g` used when classifying products numerically.
/// Any `g ∉ {0, 1/2}` separates every family.
pub const CLASSIFY_G: f64 = 0.3;
const CLASSIFY_REL_TOL: f64 = 1e-9;

/// Classifies all `2ⁿ` MG products `O₁…O_n O_n†…O₁†` by brute force.
/// Products are built from the innermost operator outwards, so a zero
/// product cuts its whole subtree (counted into `z`).
pub fn classify_mg_products(n: u32) -> Result<MultiplicityTable> {
    if n < 4 {
        return Err(Error::Domain(format!("multiplicity tables start at n = 4, got {n}")));
    }
    if n > 40 {
        return Err(Error::Resource(format!("classification at n = {n} is too large")));
    }
    let model = mg_model(CLASSIFY_G)?;
    let ops = model.kraus();
    let mut table = MultiplicityTable::empty(n);

    fn rec(ops: &[ComplexMatrix], p: &ComplexMatrix, remaining: u32, table: &mut MultiplicityTable) {
        if p.max_abs() == 0.0 {
            table.z += 1u64 << remaining;
            return;
        }
        if remaining == 0 {
            classify_one(p, table);
            return;
        }
        for a in ops {
            rec(ops, &a.sandwich(p), remaining - 1, table);
        }
    }

    rec(ops, &ComplexMatrix::identity(3), n, &mut table);
    Ok(table)
}

fn classify_one(p: &ComplexMatrix, t: &mut MultiplicityTable) {
    let g = CLASSIFY_G;
    let q = 1.0 - g;
    let n = t.n;
    let fl = (n / 2) as i32;
    let ce = n.div_ceil(2) as i32;
    let diag: Vec<f64> = p.diagonal().iter().map(|z| z.re).collect();
    let off = {
        let mut d = p.clone();
        for i in 0..3 {
            d[(i, i)] = num_complex::Complex64::new(0.0, 0.0);
        }
        d.max_abs()
    };
    let close = |x: f64, y: f64| (x - y).abs() <= CLASSIFY_REL_TOL * x.abs().max(y.abs()).max(1e-300);
    let is = |want: [f64; 3]| off == 0.0 && (0..3).all(|k| if want[k] == 0.0 { diag[k] == 0.0 } else { close(diag[k], want[k]) });

    if is([g.powi(fl), 0.0, 0.0]) {
        t.b += 1;
    } else if is([q.powi(fl), g.powi(ce), 0.0]) {
        t.d += 1;
    } else if is([0.0, q.powi(ce), g.powi(fl)]) {
        t.f += 1;
    } else if is([0.0, 0.0, q.powi(fl)]) {
        t.h += 1;
    } else if let Some(i) = (1..fl).find(|&i| is([g.powi(i) * q.powi(fl - i), 0.0, 0.0])) {
        t.c[i as usize - 1] += 1;
    } else if let Some(i) = (1..ce).find(|&i| is([0.0, g.powi(i) * q.powi(ce - i), 0.0])) {
        t.e[i as usize - 1] += 1;
    } else if let Some(i) = (1..fl).find(|&i| is([0.0, 0.0, g.powi(fl - i) * q.powi(i)])) {
        t.g[i as usize - 1] += 1;
    } else {
        t.unclassified += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub count: String,
    pub printed: u64,
    pub enumerated: u64,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: printed {} but enumeration finds {}",
            self.count, self.printed, self.enumerated
        )
    }
}

/// Recurrence run from reconciled `n = 4` initial conditions.
#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceRun {
    pub printed_initial: MultiplicityTable,
    pub enumerated_initial: MultiplicityTable,
    /// Counts where the printed table disagrees with enumeration.
    pub discrepancies: Vec<Discrepancy>,
    /// Tables for `n = 4..=n_max`, iterated from the enumerated `n = 4`
    /// table.
    pub tables: Vec<MultiplicityTable>,
}

impl RecurrenceRun {
    pub fn table(&self, n: u32) -> Option<&MultiplicityTable> {
        self.tables.iter().find(|t| t.n == n)
    }
}

/// Compares two tables of the same `n` count by count.
pub fn table_discrepancies(printed: &MultiplicityTable, enumerated: &MultiplicityTable) -> Vec<Discrepancy> {
    let a = printed.entries();
    let b = enumerated.entries();
    let mut out = Vec::new();
    for (name, v) in &b {
        let p = a.iter().find(|(k, _)| k == name).map(|(_, v)| *v).unwrap_or(0);
        if p != *v {
            out.push(Discrepancy {
                count: name.clone(),
                printed: p,
                enumerated: *v,
            });
        }
    }
    for (name, v) in &a {
        if !b.iter().any(|(k, _)| k == name) {
            out.push(Discrepancy {
                count: name.clone(),
                printed: *v,
                enumerated: 0,
            });
        }
    }
    out
}

/// Iterates the multiplicity recurrence up to `n_max`. The printed `n = 4`
/// initial conditions are checked against brute-force classification first;
/// enumeration wins and every disagreement is reported in the result.
pub fn mg_multiplicity_recurrence(n_max: u32) -> Result<RecurrenceRun> {
    if n_max < 4 {
        return Err(Error::Domain(format!("n_max must be at least 4, got {n_max}")));
    }
    if n_max >= MAX_BINOMIAL_N {
        return Err(Error::Domain(format!("n_max = {n_max} exceeds {}", MAX_BINOMIAL_N - 1)));
    }
    let printed = printed_initial_table();
    let enumerated = classify_mg_products(4)?;
    let discrepancies = table_discrepancies(&printed, &enumerated);
    let tables = iterate_recurrence(&enumerated, n_max);
    Ok(RecurrenceRun {
        printed_initial: printed,
        enumerated_initial: enumerated,
        discrepancies,
        tables,
    })
}
