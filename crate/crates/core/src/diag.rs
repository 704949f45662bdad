//! The classical process on the diagonal of an MPS local density matrix.
//!
//! `p(s₁…s_n) = Tr(A_{s_n}† … A_{s_1}† ρ A_{s_1} … A_{s_n})` is evaluated by
//! depth-first traversal of the `d`-ary string tree, carrying the partial
//! matrix down each branch. A branch whose partial matrix has every entry at
//! or below the pruning tolerance is cut; for AKLT and MG the cut matrices are
//! exactly zero (nilpotent products), so no probability mass is lost.
//!
//! The mass of a cut subtree equals the trace of the cut matrix (the transfer
//! map is trace preserving when `Σ A_i A_i† = I`), which is what
//! [`DiagDistribution::pruned_mass`] accumulates.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mps::MpsModel;

pub const DEFAULT_PRUNE_TOL: f64 = 1e-14;
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;
/// Negative roundoff down to this magnitude is clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-14;
/// Normalization slack on enumerated distributions.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// A string of 1-based site symbols.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolString(pub Vec<u8>);

impl SymbolString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    /// Parses the [`fmt::Display`] form back.
    pub fn parse(s: &str) -> Option<Self> {
        if s.contains('.') {
            s.split('.').map(|t| t.parse().ok()).collect::<Option<Vec<u8>>>().map(Self)
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as u8))
                .collect::<Option<Vec<u8>>>()
                .map(Self)
        }
    }
}

impl fmt::Display for SymbolString {
    /// Digits run together when every symbol is a single digit, otherwise
    /// they are dot separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let compact = self.0.iter().all(|&s| s < 10);
        for (i, s) in self.0.iter().enumerate() {
            if !compact && i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistItem {
    pub string: SymbolString,
    pub probability: f64,
}

/// Sparse joint distribution of `n` consecutive diagonal symbols. Items are
/// sorted lexicographically by string.
#[derive(Debug, Clone, Serialize)]
pub struct DiagDistribution {
    pub n: usize,
    pub local_dim: usize,
    pub prune_tol: f64,
    pub pruned_mass: f64,
    pub items: Vec<DistItem>,
}

impl DiagDistribution {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.items.iter().map(|i| i.probability).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.probability).collect()
    }

    pub fn get(&self, s: &[u8]) -> Option<f64> {
        self.items
            .binary_search_by(|it| it.string.0.as_slice().cmp(s))
            .ok()
            .map(|i| self.items[i].probability)
    }

    pub fn as_map(&self) -> BTreeMap<SymbolString, f64> {
        self.items.iter().map(|i| (i.string.clone(), i.probability)).collect()
    }

    /// Marginal over the first symbol: a distribution on strings of length
    /// `n - 1`.
    pub fn marginal_drop_first(&self) -> BTreeMap<SymbolString, f64> {
        let mut out = BTreeMap::new();
        for it in &self.items {
            *out.entry(SymbolString(it.string.0[1..].to_vec())).or_insert(0.0) += it.probability;
        }
        out
    }

    /// Marginal over the last symbol.
    pub fn marginal_drop_last(&self) -> BTreeMap<SymbolString, f64> {
        let mut out = BTreeMap::new();
        for it in &self.items {
            let k = it.string.len() - 1;
            *out.entry(SymbolString(it.string.0[..k].to_vec())).or_insert(0.0) += it.probability;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["string", "probability"])?;
        for it in &self.items {
            wtr.write_record([it.string.to_string(), it.probability.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_symbols(m: &MpsModel, s: &[u8]) -> Result<()> {
    let d = m.local_dim();
    if let Some(&bad) = s.iter().find(|&&x| x == 0 || x as usize > d) {
        return Err(Error::Domain(format!("symbol {bad} outside 1..={d}")));
    }
    Ok(())
}

fn clamp_probability(p: f64) -> f64 {
    if (-NEGATIVE_CLAMP..0.0).contains(&p) {
        0.0
    } else {
        p
    }
}

/// Probability of one symbol string (symbols are 1-based).
pub fn string_probability(m: &MpsModel, s: &[u8]) -> Result<f64> {
    check_symbols(m, s)?;
    let mut acc = m.invariant_state().clone();
    for &sym in s {
        acc = m.kraus()[sym as usize - 1].adjoint_sandwich(&acc);
    }
    let tr = acc.trace();
    debug_assert!(tr.im.abs() < 1e-12, "imaginary trace {tr}");
    Ok(clamp_probability(tr.re))
}

/// Depth-first walk over strings of length `1..=max_depth` whose first
/// symbol is `first`. `visit(depth, prefix, p)` is called at every surviving
/// node. Returns the trace mass of the cut subtrees.
fn walk_subtree<F>(m: &MpsModel, first: u8, max_depth: usize, prune_tol: f64, visit: &mut F) -> f64
where
    F: FnMut(usize, &[u8], f64),
{
    struct Walker<'a, F> {
        kraus: &'a [ComplexMatrix],
        adjoints: Vec<ComplexMatrix>,
        max_depth: usize,
        prune_tol: f64,
        prefix: Vec<u8>,
        pruned: f64,
        visit: &'a mut F,
    }

    impl<F: FnMut(usize, &[u8], f64)> Walker<'_, F> {
        fn descend(&mut self, partial: &ComplexMatrix, sym: u8) {
            let idx = sym as usize - 1;
            let next = &(&self.adjoints[idx] * partial) * &self.kraus[idx];
            let cut = if self.prune_tol > 0.0 {
                next.max_abs() <= self.prune_tol
            } else {
                false
            };
            if cut {
                self.pruned += next.trace().re.max(0.0);
                return;
            }
            self.prefix.push(sym);
            let depth = self.prefix.len();
            let p = clamp_probability(next.trace().re);
            (self.visit)(depth, &self.prefix, p);
            if depth < self.max_depth {
                for s in 1..=self.kraus.len() as u8 {
                    self.descend(&next, s);
                }
            }
            self.prefix.pop();
        }
    }

    let kraus = m.kraus();
    let mut w = Walker {
        kraus,
        adjoints: kraus.iter().map(ComplexMatrix::adjoint).collect(),
        max_depth,
        prune_tol,
        prefix: Vec::with_capacity(max_depth),
        pruned: 0.0,
        visit,
    };
    w.descend(m.invariant_state(), first);
    w.pruned
}

/// Enumerates every string of length `n` with probability above `prune_tol`.
/// `prune_tol = 0` disables branch cutting entirely (full `d^n` scan) and
/// keeps every strictly positive string.
///
/// First-symbol subtrees are explored in parallel and concatenated in symbol
/// order, so the output does not depend on the thread count.
pub fn enumerate_distribution(m: &MpsModel, n: usize, prune_tol: f64) -> Result<DiagDistribution> {
    if n == 0 {
        return Err(Error::Domain("string length must be at least 1".into()));
    }
    if !(prune_tol >= 0.0) {
        return Err(Error::Domain(format!("prune tolerance must be >= 0, got {prune_tol}")));
    }
    let d = m.local_dim();
    if d > u8::MAX as usize {
        return Err(Error::Resource(format!("local dimension {d} exceeds symbol range")));
    }
    let parts: Vec<(Vec<DistItem>, f64)> = (1..=d as u8)
        .into_par_iter()
        .map(|first| {
            let mut items = Vec::new();
            let mut dropped = 0.0;
            let pruned = walk_subtree(m, first, n, prune_tol, &mut |depth, prefix, p| {
                if depth == n {
                    if p > prune_tol {
                        items.push(DistItem {
                            string: SymbolString(prefix.to_vec()),
                            probability: p,
                        });
                    } else {
                        dropped += p.max(0.0);
                    }
                }
            });
            (items, pruned + dropped)
        })
        .collect();

    let mut items = Vec::new();
    let mut pruned_mass = 0.0;
    for (part, mass) in parts {
        items.extend(part);
        pruned_mass += mass;
    }
    Ok(DiagDistribution {
        n,
        local_dim: d,
        prune_tol,
        pruned_mass,
        items,
    })
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits of an arbitrary probability list; zeros are
/// skipped.
pub fn entropy_bits(probabilities: impl IntoIterator<Item = f64>) -> f64 {
    probabilities.into_iter().map(plogp).sum()
}

pub fn shannon_entropy(dist: &DiagDistribution) -> f64 {
    entropy_bits(dist.items.iter().map(|i| i.probability))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyRecord {
    pub n: usize,
    /// Joint entropy `H_n` in bits.
    pub h_n: f64,
    /// `H_n / n`.
    pub rate_avg: f64,
    /// `H_n - H_{n-1}` with `H_0 = 0`.
    pub rate_cond: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyTrace {
    pub records: Vec<EntropyRecord>,
    pub pruned_mass: f64,
}

impl EntropyTrace {
    pub fn at(&self, n: usize) -> Option<&EntropyRecord> {
        self.records.get(n.checked_sub(1)?)
    }

    pub fn last(&self) -> &EntropyRecord {
        self.records.last().expect("trace has at least one record")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["n", "H_n", "rate_avg", "rate_cond"])?;
        for r in &self.records {
            wtr.write_record([
                r.n.to_string(),
                r.h_n.to_string(),
                r.rate_avg.to_string(),
                r.rate_cond.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Joint entropies `H_1 … H_{n_max}` from a single traversal to depth
/// `n_max`: every tree node at depth `k` contributes to `H_k`.
pub fn entropy_trace(m: &MpsModel, n_max: usize, prune_tol: f64) -> Result<EntropyTrace> {
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    if !(prune_tol >= 0.0) {
        return Err(Error::Domain(format!("prune tolerance must be >= 0, got {prune_tol}")));
    }
    let d = m.local_dim();
    let parts: Vec<(Vec<f64>, f64)> = (1..=d as u8)
        .into_par_iter()
        .map(|first| {
            let mut h = vec![0.0; n_max];
            let pruned = walk_subtree(m, first, n_max, prune_tol, &mut |depth, _, p| {
                if p > prune_tol {
                    h[depth - 1] += plogp(p);
                }
            });
            (h, pruned)
        })
        .collect();

    let mut h = vec![0.0; n_max];
    let mut pruned_mass = 0.0;
    for (part, mass) in parts {
        for (acc, x) in h.iter_mut().zip(part) {
            *acc += x;
        }
        pruned_mass += mass;
    }

    let mut records = Vec::with_capacity(n_max);
    let mut prev = 0.0;
    for (i, &h_n) in h.iter().enumerate() {
        let n = i + 1;
        records.push(EntropyRecord {
            n,
            h_n,
            rate_avg: h_n / n as f64,
            rate_cond: h_n - prev,
        });
        prev = h_n;
    }
    Ok(EntropyTrace { records, pruned_mass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub value: f64,
    pub multiplicity: u64,
}

/// Distinct nonzero values with multiplicities, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub entries: Vec<SpectrumEntry>,
}

impl Spectrum {
    /// Groups values equal within relative tolerance `group_tol`. Values that
    /// are not strictly positive are ignored.
    pub fn from_values(values: impl IntoIterator<Item = f64>, group_tol: f64) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|&x| x > 0.0).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        let mut entries: Vec<SpectrumEntry> = Vec::new();
        for x in v {
            match entries.last_mut() {
                Some(e) if (e.value - x).abs() <= group_tol * e.value.abs().max(x.abs()) => {
                    e.multiplicity += 1;
                }
                _ => entries.push(SpectrumEntry {
                    value: x,
                    multiplicity: 1,
                }),
            }
        }
        Spectrum { entries }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.value * e.multiplicity as f64).sum()
    }

    pub fn support_size(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn entropy(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.multiplicity as f64 * plogp(e.value))
            .sum()
    }
}

pub fn spectrum_of(dist: &DiagDistribution, group_tol: f64) -> Spectrum {
    Spectrum::from_values(dist.items.iter().map(|i| i.probability), group_tol)
}
