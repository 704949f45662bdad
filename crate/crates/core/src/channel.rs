//! Finite-`n` construction of the controlled-phase memory channel.
//!
//! With the environment in an MPS and each channel use coupled to its own
//! environment site by `Σ_k |k⟩⟨k| ⊗ Z(k)`, tracing out the environment
//! leaves the dephasing channel
//!
//! ```text
//! σ ↦ Σ_x p(x) Z^{x₁} ⊗ … ⊗ Z^{x_n} σ (Z^{x₁} ⊗ … ⊗ Z^{x_n})†
//! ```
//!
//! where `p` is the diagonal distribution. Symbol `i` (1-based) selects the
//! phase gate `Z(i - 1)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::diag::DiagDistribution;
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, MatrixJson};

/// Trace-preservation slack for Kraus channels.
pub const CPTP_TOL: f64 = 1e-10;
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-12;
pub const DENSITY_TRACE_TOL: f64 = 1e-12;
pub const DENSITY_EIGEN_FLOOR: f64 = -1e-10;
/// Eigenvalues below this are dropped from entropy sums.
pub const ENTROPY_EIGEN_CUTOFF: f64 = 1e-14;
/// Upper bound on `kraus_count * dim²` stored entries when building a
/// dephasing channel.
pub const MAX_CHANNEL_ENTRIES: usize = 1 << 24;

/// `Z(k) = Σ_j exp(2πi kj/d) |j⟩⟨j|`.
pub fn phase_gate(d: usize, k: usize) -> Result<ComplexMatrix> {
    if d == 0 {
        return Err(Error::Domain("phase gate dimension must be positive".into()));
    }
    if k >= d {
        return Err(Error::Domain(format!("phase index {k} outside 0..{d}")));
    }
    let diag: Vec<Complex64> = (0..d)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * ((k * j) % d) as f64 / d as f64))
        .collect();
    Ok(ComplexMatrix::from_diagonal(&diag))
}

/// `Σ_k |k⟩⟨k| ⊗ Z(k)`, control first.
pub fn controlled_phase_unitary(d: usize) -> Result<ComplexMatrix> {
    if d < 2 {
        return Err(Error::Domain(format!("controlled phase needs d >= 2, got {d}")));
    }
    let mut u = ComplexMatrix::zeros(d * d, d * d);
    for k in 0..d {
        let z = phase_gate(d, k)?;
        for j in 0..d {
            u[(k * d + j, k * d + j)] = z[(j, j)];
        }
    }
    Ok(u)
}

pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    (u * &u.adjoint()).max_abs_diff(&ComplexMatrix::identity(u.rows()))
}

#[derive(Debug, Clone)]
pub struct KrausChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Checks shapes and trace preservation (`Σ V†V = I` within
    /// [`CPTP_TOL`]).
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::Dimension("a channel needs at least one Kraus operator".into()))?;
        let (out_dim, in_dim) = (first.rows(), first.cols());
        if kraus.iter().any(|v| v.rows() != out_dim || v.cols() != in_dim) {
            return Err(Error::Dimension("Kraus operators must share one shape".into()));
        }
        let ch = KrausChannel { in_dim, out_dim, kraus };
        let r = ch.trace_preservation_residual();
        if r > CPTP_TOL {
            return Err(Error::InvalidModel(format!(
                "Kraus operators are not trace preserving (residual {r:.3e})"
            )));
        }
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel {
            in_dim: dim,
            out_dim: dim,
            kraus: vec![ComplexMatrix::identity(dim)],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn kraus_count(&self) -> usize {
        self.kraus.len()
    }

    /// `max |Σ V_k†V_k - I|`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let mut sum = ComplexMatrix::zeros(self.in_dim, self.in_dim);
        for v in &self.kraus {
            sum = &sum + &(&v.adjoint() * v);
        }
        sum.max_abs_diff(&ComplexMatrix::identity(self.in_dim))
    }
}

/// A validated density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let herm = matrix.hermiticity_residual();
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(Error::InvalidModel(format!("not Hermitian (residual {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > DENSITY_TRACE_TOL {
            return Err(Error::InvalidModel(format!("trace is {tr}, expected 1")));
        }
        let min = matrix.hermitian_eigenvalues()?[0];
        if min < DENSITY_EIGEN_FLOOR {
            return Err(Error::InvalidModel(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(DensityMatrix { matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if psi.is_empty() || norm == 0.0 {
            return Err(Error::Domain("state vector must be nonzero".into()));
        }
        let n = psi.len();
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = psi[i] * psi[j].conj() / (norm * norm);
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MatrixJson::from(&self.matrix))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: MatrixJson = serde_json::from_str(s)?;
        Self::new(j.try_into()?)
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> Result<f64> {
        von_neumann_entropy(&self.matrix)
    }
}

/// `-Σ λ log₂ λ` over the eigenvalues of a Hermitian matrix, ignoring
/// eigenvalues below [`ENTROPY_EIGEN_CUTOFF`].
pub fn von_neumann_entropy(rho: &ComplexMatrix) -> Result<f64> {
    let eig = rho.hermitian_eigenvalues()?;
    Ok(eig
        .into_iter()
        .filter(|&l| l > ENTROPY_EIGEN_CUTOFF)
        .map(|l| -l * l.log2())
        .sum())
}

/// Dephasing channel on `n = env.n` qudits: one Kraus operator
/// `√p(x) Z(x₁-1) ⊗ … ⊗ Z(x_n-1)` per string in the distribution.
pub fn dephasing_channel(env: &DiagDistribution) -> Result<KrausChannel> {
    let d = env.local_dim;
    let dim = d
        .checked_pow(env.n as u32)
        .ok_or_else(|| Error::Resource("channel dimension overflows".into()))?;
    let entries = dim.saturating_mul(dim).saturating_mul(env.len().max(1));
    if entries > MAX_CHANNEL_ENTRIES {
        return Err(Error::Resource(format!(
            "{} Kraus operators of size {dim}x{dim} exceed the {MAX_CHANNEL_ENTRIES}-entry limit",
            env.len()
        )));
    }
    let gates: Vec<ComplexMatrix> = (0..d).map(|k| phase_gate(d, k)).collect::<Result<_>>()?;

    let mut kraus = Vec::with_capacity(env.len());
    for item in &env.items {
        let mut op = ComplexMatrix::identity(1);
        for &sym in item.string.symbols() {
            op = op.kron(&gates[sym as usize - 1]);
        }
        kraus.push(op.scale_real(item.probability.sqrt()));
    }
    // normalization slack in the distribution carries straight into Σ V†V
    KrausChannel::new(kraus)
}

fn check_input(ch: &KrausChannel, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != ch.in_dim {
        return Err(Error::Dimension(format!(
            "channel expects a {}-dimensional input, got {}",
            ch.in_dim,
            rho.dim()
        )));
    }
    Ok(())
}

/// `Σ_k V_k ρ V_k†`.
pub fn apply_channel(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_input(ch, rho)?;
    let mut out = ComplexMatrix::zeros(ch.out_dim, ch.out_dim);
    for v in &ch.kraus {
        out = &out + &v.sandwich(rho.matrix());
    }
    DensityMatrix::new(out)
}

/// Environment output `[Tr(V_j ρ V_k†)]_{jk}`, a `K x K` density matrix.
pub fn complementary_output(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_input(ch, rho)?;
    let k = ch.kraus.len();
    // Tr(V_j ρ V_k†) = ⟨V_k, V_j ρ⟩_HS
    let left: Vec<ComplexMatrix> = ch.kraus.iter().map(|v| v * rho.matrix()).collect();
    let mut out = ComplexMatrix::zeros(k, k);
    for j in 0..k {
        for l in j..k {
            let v = ch.kraus[l].hs_inner(&left[j]);
            out[(j, l)] = v;
            out[(l, j)] = v.conj();
        }
    }
    DensityMatrix::new(out)
}

/// `S(Φ(ρ)) - S(Φ̃(ρ))` in bits.
pub fn coherent_information(ch: &KrausChannel, rho: &DensityMatrix) -> Result<f64> {
    let out = apply_channel(ch, rho)?.entropy()?;
    let env = complementary_output(ch, rho)?.entropy()?;
    Ok(out - env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::{enumerate_distribution, shannon_entropy, DistItem, SymbolString, DEFAULT_PRUNE_TOL};
    use crate::mps::mg_model;

    fn single(n: usize, d: usize, s: Vec<u8>) -> DiagDistribution {
        DiagDistribution {
            n,
            local_dim: d,
            prune_tol: 0.0,
            pruned_mass: 0.0,
            items: vec![DistItem {
                string: SymbolString(s),
                probability: 1.0,
            }],
        }
    }

    #[test]
    fn phase_gates() {
        let z = phase_gate(2, 1).unwrap();
        assert!(z.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[1.0, -1.0])) < 1e-15);
        assert_eq!(phase_gate(3, 0).unwrap(), ComplexMatrix::identity(3));
        let z1 = phase_gate(3, 1).unwrap();
        let w = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        assert!((z1[(1, 1)] - w).norm() < 1e-15);
        assert!((z1[(2, 2)] - w * w).norm() < 1e-15);
        let prod = &z1 * &phase_gate(3, 2).unwrap();
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-14);
        assert!(phase_gate(3, 3).is_err());
    }

    #[test]
    fn controlled_phase() {
        let u = controlled_phase_unitary(2).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 1.0, -1.0])) < 1e-15);
        for d in 2..=5 {
            let u = controlled_phase_unitary(d).unwrap();
            assert!(unitarity_residual(&u) < 1e-12);
        }
        let u3 = controlled_phase_unitary(3).unwrap();
        let z2 = phase_gate(3, 2).unwrap();
        for j in 0..3 {
            assert!((u3[(6 + j, 6 + j)] - z2[(j, j)]).norm() < 1e-15);
            assert!((u3[(j, j)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert!(controlled_phase_unitary(1).is_err());
    }

    #[test]
    fn unitary_channel_from_single_string() {
        let ch = dephasing_channel(&single(2, 2, vec![2, 1])).unwrap();
        assert_eq!(ch.kraus_count(), 1);
        let env = complementary_output(&ch, &DensityMatrix::maximally_mixed(4)).unwrap();
        assert_eq!(env.dim(), 1);
        assert!((env.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mg_dephasing_weights() {
        let dist = enumerate_distribution(&mg_model(0.5).unwrap(), 2, DEFAULT_PRUNE_TOL).unwrap();
        let ch = dephasing_channel(&dist).unwrap();
        assert_eq!(ch.kraus_count(), 4);
        assert!(ch.trace_preservation_residual() < 1e-12);
        let mut weights: Vec<f64> = ch.kraus().iter().map(|v| v[(0, 0)].norm()).collect();
        weights.sort_by(|a, b| b.total_cmp(a));
        let expect = [0.375f64.sqrt(), 0.375f64.sqrt(), 0.125f64.sqrt(), 0.125f64.sqrt()];
        for (w, e) in weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }

        let env = complementary_output(&ch, &DensityMatrix::maximally_mixed(4)).unwrap();
        let diag: Vec<f64> = env.matrix().diagonal().iter().map(|z| z.re).collect();
        for (x, it) in diag.iter().zip(&dist.items) {
            assert!((x - it.probability).abs() < 1e-15);
        }
        let mut off = env.matrix().clone();
        for i in 0..4 {
            off[(i, i)] = Complex64::new(0.0, 0.0);
        }
        assert!(off.max_abs() < 1e-10);
        let s = env.entropy().unwrap();
        assert!((s - shannon_entropy(&dist)).abs() < 1e-12);
        assert!((s - 1.811278124459133).abs() < 1e-12);
    }

    #[test]
    fn mg_channel_on_plus_states() {
        let dist = enumerate_distribution(&mg_model(0.5).unwrap(), 2, DEFAULT_PRUNE_TOL).unwrap();
        let ch = dephasing_channel(&dist).unwrap();
        let plus = [Complex64::new(0.5, 0.0); 4];
        let rho = DensityMatrix::pure(&plus).unwrap();
        let out = apply_channel(&ch, &rho).unwrap();
        assert!(out.matrix().hermiticity_residual() < 1e-12);
        assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
        // the |00⟩⟨11| coherence is weighted by E[(-1)^(x1+x2)]:
        // strings 11, 22 give +1 and 12, 21 give -1
        let expect = 0.25 * (0.125 + 0.125 - 0.375 - 0.375);
        assert!((out.matrix()[(0, 3)].re - expect).abs() < 1e-15);
    }

    #[test]
    fn identity_and_diagonal_inputs() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        let id = KrausChannel::identity(4);
        assert_eq!(apply_channel(&id, &rho).unwrap().matrix(), rho.matrix());

        let dist = enumerate_distribution(&mg_model(0.3).unwrap(), 2, DEFAULT_PRUNE_TOL).unwrap();
        let ch = dephasing_channel(&dist).unwrap();
        let out = apply_channel(&ch, &rho).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!((out.entropy().unwrap() - rho.entropy().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn uniform_env_fully_dephases_plus() {
        let items = (1..=2u8)
            .map(|s| DistItem {
                string: SymbolString(vec![s]),
                probability: 0.5,
            })
            .collect();
        let env = DiagDistribution {
            n: 1,
            local_dim: 2,
            prune_tol: 0.0,
            pruned_mass: 0.0,
            items,
        };
        let ch = dephasing_channel(&env).unwrap();
        let plus = DensityMatrix::pure(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]).unwrap();
        let out = apply_channel(&ch, &plus).unwrap();
        assert!(out.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn complementary_matches_transposed_display_form() {
        let dist = enumerate_distribution(&mg_model(0.3).unwrap(), 2, DEFAULT_PRUNE_TOL).unwrap();
        let ch = dephasing_channel(&dist).unwrap();
        let psi: Vec<Complex64> = (0..4).map(|i| Complex64::new(1.0 + i as f64, 0.5 * i as f64)).collect();
        let rho = DensityMatrix::pure(&psi).unwrap();
        let ours = complementary_output(&ch, &rho).unwrap();
        let k = ch.kraus_count();
        let mut display = ComplexMatrix::zeros(k, k);
        for j in 0..k {
            for l in 0..k {
                display[(j, l)] = (&(&ch.kraus()[j].adjoint() * rho.matrix()) * &ch.kraus()[l]).trace();
            }
        }
        // transposes of each other
        for j in 0..k {
            for l in 0..k {
                assert!((ours.matrix()[(j, l)] - display[(l, j)]).norm() < 1e-14);
            }
        }
        let a = ours.matrix().hermitian_eigenvalues().unwrap();
        let b = display.hermitian_eigenvalues().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_helper() {
        for d in [1, 2, 3, 8, 27] {
            let s = DensityMatrix::maximally_mixed(d).entropy().unwrap();
            assert!((s - (d as f64).log2()).abs() < 1e-12);
        }
        let pure = DensityMatrix::pure(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        assert!(pure.entropy().unwrap().abs() < 1e-12);
    }

    #[test]
    fn density_validation_and_json() {
        assert!(DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.5, 0.6])).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[1.5, -0.5])).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::from_real_rows(&[[0.5, 1.0], [0.0, 0.5]])).is_err());
        let rho = DensityMatrix::new(ComplexMatrix::from_real_rows(&[[0.75, 0.25], [0.25, 0.25]])).unwrap();
        let back = DensityMatrix::from_json(&rho.to_json().unwrap()).unwrap();
        assert_eq!(back.matrix(), rho.matrix());
    }

    #[test]
    fn dimension_errors() {
        let ch = KrausChannel::identity(2);
        assert!(matches!(
            apply_channel(&ch, &DensityMatrix::maximally_mixed(3)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            complementary_output(&ch, &DensityMatrix::maximally_mixed(3)),
            Err(Error::Dimension(_))
        ));
        assert!(KrausChannel::new(vec![ComplexMatrix::identity(2).scale_real(0.5)]).is_err());
    }

    #[test]
    fn oversized_channel_is_refused() {
        let dist = enumerate_distribution(&crate::mps::aklt_model(0.9).unwrap(), 7, DEFAULT_PRUNE_TOL).unwrap();
        assert!(matches!(dephasing_channel(&dist), Err(Error::Resource(_))));
    }
}
