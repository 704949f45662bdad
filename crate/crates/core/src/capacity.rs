//! Capacity estimates at finite block length.
//!
//! The capacity of the dephasing memory channel is `log₂ d` minus the entropy
//! rate of the environment's diagonal process. At block length `n` two
//! estimators are available: the block average `log₂ d - H_n / n` and the
//! conditional `log₂ d - (H_n - H_{n-1})`. Both approach the limit from
//! below. For short blocks the value is cross-checked by building the channel
//! explicitly and evaluating its coherent information at the maximally mixed
//! input.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, complementary_output, dephasing_channel, DensityMatrix};
use crate::closed_form::{aklt_capacity, mg_capacity};
use crate::diag::{enumerate_distribution, entropy_trace, shannon_entropy, DEFAULT_PRUNE_TOL};
use crate::error::{Error, Result};
use crate::mps::{ModelKind, MpsModel};

/// Largest block length for which [`capacity_estimate`] also builds the
/// channel.
pub const CHANNEL_CHECK_MAX_N: usize = 4;
/// Required agreement between the distribution and channel paths.
pub const TWO_PATH_TOL: f64 = 1e-9;
/// How symbols are turned into phase gates; written alongside channel output.
pub const PHASE_MAP: &str = "symbol i -> Z(i-1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Avg,
    Cond,
    Both,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Avg => "avg",
            Estimator::Cond => "cond",
            Estimator::Both => "both",
        })
    }
}

/// Closed-form capacity for the built-in families, `None` for custom models.
pub fn closed_form_capacity(m: &MpsModel) -> Option<f64> {
    let p = m.primary_param()?;
    match m.kind() {
        ModelKind::Aklt => Some(aklt_capacity(p)),
        ModelKind::Mg => mg_capacity(p).ok(),
        ModelKind::Custom => None,
    }
}

/// Result of building the `n`-use channel and comparing entropies.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelCheck {
    pub n: usize,
    pub kraus_count: usize,
    pub trace_preservation_residual: f64,
    /// Shannon entropy of the diagonal distribution.
    pub env_entropy: f64,
    /// Von Neumann entropy of the channel output at maximally mixed input.
    pub output_entropy: f64,
    /// Von Neumann entropy of the complementary output at the same input.
    pub complementary_entropy: f64,
    /// Largest off-diagonal magnitude of the complementary output.
    pub complementary_offdiag: f64,
    pub coherent_info_per_use: f64,
    pub phase_map: &'static str,
}

impl ChannelCheck {
    /// `|H_n - S(complementary output)|`.
    pub fn path_difference(&self) -> f64 {
        (self.env_entropy - self.complementary_entropy).abs()
    }

    pub fn paths_agree(&self) -> bool {
        self.path_difference() <= TWO_PATH_TOL
    }
}

/// Builds the `n`-use dephasing channel for `m` and evaluates both entropy
/// paths at the maximally mixed input.
pub fn channel_check(m: &MpsModel, n: usize, prune_tol: f64) -> Result<ChannelCheck> {
    let dist = enumerate_distribution(m, n, prune_tol)?;
    let ch = dephasing_channel(&dist)?;
    let rho = DensityMatrix::maximally_mixed(ch.in_dim());
    let out = apply_channel(&ch, &rho)?;
    let env = complementary_output(&ch, &rho)?;

    let env_m = env.matrix();
    let mut offdiag = 0.0f64;
    for j in 0..env_m.rows() {
        for k in 0..env_m.cols() {
            if j != k {
                offdiag = offdiag.max(env_m[(j, k)].norm());
            }
        }
    }
    let output_entropy = out.entropy()?;
    let complementary_entropy = env.entropy()?;
    Ok(ChannelCheck {
        n,
        kraus_count: ch.kraus_count(),
        trace_preservation_residual: ch.trace_preservation_residual(),
        env_entropy: shannon_entropy(&dist),
        output_entropy,
        complementary_entropy,
        complementary_offdiag: offdiag,
        coherent_info_per_use: (output_entropy - complementary_entropy) / n as f64,
        phase_map: PHASE_MAP,
    })
}

/// One model/parameter/block-length capacity entry.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityEntry {
    pub model: String,
    pub param: Option<f64>,
    pub n: usize,
    pub local_dim: usize,
    pub closed_form: Option<f64>,
    /// `log₂ d - H_n / n`.
    pub estimate_avg: f64,
    /// `log₂ d - (H_n - H_{n-1})`.
    pub estimate_cond: f64,
    pub pruned_mass: f64,
    pub channel: Option<ChannelCheck>,
}

impl CapacityEntry {
    pub fn estimate(&self, e: Estimator) -> f64 {
        match e {
            Estimator::Avg | Estimator::Both => self.estimate_avg,
            Estimator::Cond => self.estimate_cond,
        }
    }

    /// `closed_form - estimate`, non-negative up to rounding.
    pub fn gap(&self, e: Estimator) -> Option<f64> {
        self.closed_form.map(|c| c - self.estimate(e))
    }

    /// CSV rows for the requested estimator(s).
    pub fn rows(&self, e: Estimator) -> Vec<CapacityRow> {
        let which: &[Estimator] = match e {
            Estimator::Both => &[Estimator::Avg, Estimator::Cond],
            Estimator::Avg => &[Estimator::Avg],
            Estimator::Cond => &[Estimator::Cond],
        };
        which
            .iter()
            .map(|&est| CapacityRow {
                model: self.model.clone(),
                param: self.param,
                n: self.n,
                estimator: est,
                closed_form: self.closed_form,
                numeric: self.estimate(est),
                gap: self.gap(est),
            })
            .collect()
    }
}

/// A row of the capacity CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub model: String,
    pub param: Option<f64>,
    pub n: usize,
    pub estimator: Estimator,
    pub closed_form: Option<f64>,
    pub numeric: f64,
    pub gap: Option<f64>,
}

pub const CAPACITY_CSV_HEADER: [&str; 7] = ["model", "param", "n", "estimator", "closed_form", "numeric", "gap"];

pub fn write_capacity_csv<W: Write>(rows: &[CapacityRow], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(CAPACITY_CSV_HEADER)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Capacity entry at block length `n` with the default pruning tolerance.
pub fn capacity_estimate(m: &MpsModel, n: usize) -> Result<CapacityEntry> {
    capacity_estimate_with(m, n, DEFAULT_PRUNE_TOL)
}

pub fn capacity_estimate_with(m: &MpsModel, n: usize, prune_tol: f64) -> Result<CapacityEntry> {
    let trace = entropy_trace(m, n, prune_tol)?;
    let rec = trace.last();
    let log_d = (m.local_dim() as f64).log2();
    let channel = if n <= CHANNEL_CHECK_MAX_N {
        Some(channel_check(m, n, prune_tol)?)
    } else {
        None
    };
    Ok(CapacityEntry {
        model: m.kind().to_string(),
        param: m.primary_param(),
        n,
        local_dim: m.local_dim(),
        closed_form: closed_form_capacity(m),
        estimate_avg: log_d - rec.rate_avg,
        estimate_cond: log_d - rec.rate_cond,
        pruned_mass: trace.pruned_mass,
        channel,
    })
}

/// Entries for every block length `1..=n_max` from a single enumeration.
pub fn capacity_curve(m: &MpsModel, n_max: usize, prune_tol: f64) -> Result<Vec<CapacityEntry>> {
    let trace = entropy_trace(m, n_max, prune_tol)?;
    let log_d = (m.local_dim() as f64).log2();
    let closed = closed_form_capacity(m);
    Ok(trace
        .records
        .iter()
        .map(|rec| CapacityEntry {
            model: m.kind().to_string(),
            param: m.primary_param(),
            n: rec.n,
            local_dim: m.local_dim(),
            closed_form: closed,
            estimate_avg: log_d - rec.rate_avg,
            estimate_cond: log_d - rec.rate_cond,
            pruned_mass: trace.pruned_mass,
            channel: None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{aklt_ground_theta, aklt_model, mg_model};

    #[test]
    fn aklt_ground_short_block() {
        let e = capacity_estimate(&aklt_model(aklt_ground_theta()).unwrap(), 3).unwrap();
        let ch = e.channel.as_ref().unwrap();
        assert!(ch.paths_agree(), "diff {}", ch.path_difference());
        assert!((ch.coherent_info_per_use - e.estimate_avg).abs() < 1e-9);
        assert!((e.estimate_avg - 2.0 / 3.0).abs() < 0.4);
        assert!((e.closed_form.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mg_ground_four_uses() {
        let e = capacity_estimate(&mg_model(0.5).unwrap(), 4).unwrap();
        let ch = e.channel.as_ref().unwrap();
        assert!(ch.paths_agree());
        assert!(ch.complementary_offdiag < 1e-10);
        assert!(ch.trace_preservation_residual < 1e-10);
        assert!((ch.output_entropy - 4.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_single_site() {
        // at the ground angle the single-site marginal is uniform over 3 symbols
        let e = capacity_estimate(&aklt_model(aklt_ground_theta()).unwrap(), 1).unwrap();
        assert!(e.estimate_avg.abs() < 1e-12);
        assert!(e.estimate_cond.abs() < 1e-12);
        assert!(e.channel.unwrap().coherent_info_per_use.abs() < 1e-9);
    }

    #[test]
    fn estimators_sit_below_closed_form() {
        for g in [0.1, 0.5, 0.8] {
            for e in capacity_curve(&mg_model(g).unwrap(), 10, DEFAULT_PRUNE_TOL).unwrap() {
                assert!(e.gap(Estimator::Cond).unwrap() > -1e-12);
                assert!(e.gap(Estimator::Avg).unwrap() >= e.gap(Estimator::Cond).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn curve_matches_single_estimates() {
        let m = aklt_model(0.6).unwrap();
        let curve = capacity_curve(&m, 6, DEFAULT_PRUNE_TOL).unwrap();
        let single = capacity_estimate(&m, 6).unwrap();
        let last = curve.last().unwrap();
        assert_eq!(last.estimate_avg, single.estimate_avg);
        assert_eq!(last.estimate_cond, single.estimate_cond);
    }

    #[test]
    fn csv_rows() {
        let e = capacity_estimate(&mg_model(0.5).unwrap(), 2).unwrap();
        assert_eq!(e.rows(Estimator::Both).len(), 2);
        let mut buf = Vec::new();
        write_capacity_csv(&e.rows(Estimator::Cond), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "model,param,n,estimator,closed_form,numeric,gap");
        assert!(lines.next().unwrap().starts_with("mg,0.5,2,cond,0.5,"));
    }
}
