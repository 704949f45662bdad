//! Purely generated matrix product states: the Kraus list `{A_i}`, the
//! invariant state `ρ`, and the two model families (AKLT, Majumdar–Ghosh)
//! together with custom models loaded from JSON.
//!
//! A model is valid when
//!
//! ```text
//! Σ_i A_i A_i† = I      and      Σ_i A_i† ρ A_i = ρ
//! ```
//!
//! and `ρ` is a density matrix. Both constructors below produce models whose
//! residuals sit at roundoff level.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{square_from_pairs, to_pairs, ComplexMatrix, EntryPairs};

/// Residual threshold for model validity.
pub const MODEL_TOL: f64 = 1e-12;
/// Completeness slack accepted by the invariant-state solver.
pub const SOLVER_COMPLETENESS_TOL: f64 = 1e-10;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;
pub const DEFAULT_SOLVER_MAX_ITER: usize = 10_000;

/// The AKLT ground point, `θ* = arccos(√(2/3))`, where `sin²θ* = 1/3`.
pub fn aklt_ground_theta() -> f64 {
    (2.0f64 / 3.0).sqrt().acos()
}

/// The Majumdar–Ghosh ground point.
pub const MG_GROUND_G: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Aklt,
    Mg,
    Custom,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Aklt => "aklt",
            ModelKind::Mg => "mg",
            ModelKind::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MpsModel {
    kind: ModelKind,
    local_dim: usize,
    bond_dim: usize,
    kraus: Vec<ComplexMatrix>,
    invariant_state: ComplexMatrix,
    label: String,
    params: BTreeMap<String, f64>,
}

impl MpsModel {
    /// Assembles a model after checking only that the shapes agree. Use
    /// [`MpsModel::new`] to also enforce the validity conditions.
    pub fn from_parts(
        kind: ModelKind,
        kraus: Vec<ComplexMatrix>,
        invariant_state: ComplexMatrix,
        label: impl Into<String>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::Dimension("a model needs at least one Kraus matrix".into()))?;
        let bond_dim = first.rows();
        for (i, a) in kraus.iter().enumerate() {
            if a.rows() != bond_dim || a.cols() != bond_dim {
                return Err(Error::Dimension(format!(
                    "Kraus matrix {} is {}x{}, expected {bond_dim}x{bond_dim}",
                    i + 1,
                    a.rows(),
                    a.cols()
                )));
            }
        }
        if invariant_state.rows() != bond_dim || invariant_state.cols() != bond_dim {
            return Err(Error::Dimension(format!(
                "invariant state is {}x{}, expected {bond_dim}x{bond_dim}",
                invariant_state.rows(),
                invariant_state.cols()
            )));
        }
        Ok(Self {
            kind,
            local_dim: kraus.len(),
            bond_dim,
            kraus,
            invariant_state,
            label: label.into(),
            params,
        })
    }

    /// Like [`MpsModel::from_parts`] but rejects models whose validation
    /// report does not pass.
    pub fn new(
        kind: ModelKind,
        kraus: Vec<ComplexMatrix>,
        invariant_state: ComplexMatrix,
        label: impl Into<String>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let m = Self::from_parts(kind, kraus, invariant_state, label, params)?;
        let report = validate_model(&m)?;
        if !report.passes() {
            return Err(Error::InvalidModel(report.to_string()));
        }
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Physical (local) dimension `d`, the number of Kraus matrices.
    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// Bond dimension `D`.
    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn invariant_state(&self) -> &ComplexMatrix {
        &self.invariant_state
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// The model's single named parameter (θ or g), if it has one.
    pub fn primary_param(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Aklt => self.params.get("theta").copied(),
            ModelKind::Mg => self.params.get("g").copied(),
            ModelKind::Custom => None,
        }
    }

    pub fn with_invariant_state(&self, rho: ComplexMatrix) -> Result<Self> {
        Self::from_parts(
            self.kind,
            self.kraus.clone(),
            rho,
            self.label.clone(),
            self.params.clone(),
        )
    }
}

/// Parametrized AKLT model, `d = 3`, `D = 2`:
/// `A₁ = -sinθ σ_z`, `A₂ = cosθ |e₁⟩⟨e₂|`, `A₃ = -cosθ |e₂⟩⟨e₁|`, `ρ = I/2`.
///
/// `A₃` is the negated transpose of `A₂` rather than `-A₂`; with that choice
/// `Σ A_i A_i† = I` holds for every θ.
pub fn aklt_model(theta: f64) -> Result<MpsModel> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be finite, got {theta}")));
    }
    let (s, c) = theta.sin_cos();
    let a1 = ComplexMatrix::from_real_rows(&[[-s, 0.0], [0.0, s]]);
    let a2 = ComplexMatrix::from_real_rows(&[[0.0, c], [0.0, 0.0]]);
    let a3 = ComplexMatrix::from_real_rows(&[[0.0, 0.0], [-c, 0.0]]);
    let rho = ComplexMatrix::identity(2).scale_real(0.5);
    let mut params = BTreeMap::new();
    params.insert("theta".to_string(), theta);
    MpsModel::from_parts(
        ModelKind::Aklt,
        vec![a1, a2, a3],
        rho,
        format!("aklt(theta={theta})"),
        params,
    )
}

/// Majumdar–Ghosh model, `d = 2`, `D = 3`, `g ∈ [0, 1)`, with invariant state
/// `diag((1-g)/2, 1/2, g/2)`.
pub fn mg_model(g: f64) -> Result<MpsModel> {
    if !(0.0..1.0).contains(&g) {
        return Err(Error::Domain(format!("g must lie in [0, 1), got {g}")));
    }
    let a1 = ComplexMatrix::from_real_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, -g.sqrt()], [0.0, 0.0, 0.0]]);
    let a2 = ComplexMatrix::from_real_rows(&[[0.0, 0.0, 0.0], [(1.0 - g).sqrt(), 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let rho = ComplexMatrix::from_real_diagonal(&[(1.0 - g) / 2.0, 0.5, g / 2.0]);
    let mut params = BTreeMap::new();
    params.insert("g".to_string(), g);
    MpsModel::from_parts(ModelKind::Mg, vec![a1, a2], rho, format!("mg(g={g})"), params)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub name: &'static str,
    pub value: f64,
}

/// Named residuals of the validity conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub residuals: Vec<Residual>,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.residuals.iter().all(|r| r.value < self.tolerance)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.value)
    }

    pub fn worst(&self) -> &Residual {
        self.residuals
            .iter()
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .expect("report always has residuals")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.residuals.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let mark = if r.value < self.tolerance { "ok" } else { "FAIL" };
            write!(f, "{}={:.3e} ({mark})", r.name, r.value)?;
        }
        Ok(())
    }
}

pub fn completeness_residual(kraus: &[ComplexMatrix]) -> f64 {
    let dim = kraus[0].rows();
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for a in kraus {
        sum = &sum + &(a * &a.adjoint());
    }
    sum.max_abs_diff(&ComplexMatrix::identity(dim))
}

/// `ρ ↦ Σ_i A_i† ρ A_i`.
pub fn transfer(kraus: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for a in kraus {
        out = &out + &a.adjoint_sandwich(rho);
    }
    out
}

pub fn invariance_residual(kraus: &[ComplexMatrix], rho: &ComplexMatrix) -> f64 {
    transfer(kraus, rho).max_abs_diff(rho)
}

/// Evaluates every validity condition of `m`. Structural problems (which
/// [`MpsModel::from_parts`] already rules out) surface as errors.
pub fn validate_model(m: &MpsModel) -> Result<ValidationReport> {
    let rho = m.invariant_state();
    let eig = rho.hermitian_eigenvalues()?;
    let min_eig = eig.first().copied().unwrap_or(0.0);
    let residuals = vec![
        Residual {
            name: "completeness",
            value: completeness_residual(m.kraus()),
        },
        Residual {
            name: "invariance",
            value: invariance_residual(m.kraus(), rho),
        },
        Residual {
            name: "hermiticity",
            value: rho.hermiticity_residual(),
        },
        Residual {
            name: "positivity",
            value: (-min_eig).max(0.0),
        },
        Residual {
            name: "trace",
            value: (rho.trace() - Complex64::new(1.0, 0.0)).norm(),
        },
    ];
    Ok(ValidationReport {
        residuals,
        tolerance: MODEL_TOL,
    })
}

/// Finds a trace-one fixed point of `ρ ↦ Σ A_i† ρ A_i` starting from `I/D`.
///
/// Iterates the averaged map `ρ ↦ (ρ + T(ρ))/2`, which shares its fixed
/// points with `T` but damps the period-2 orbits that the MG transfer map
/// exhibits. Uniqueness of the fixed point is not checked.
pub fn solve_invariant_state(kraus: &[ComplexMatrix], tol: f64, max_iter: usize) -> Result<ComplexMatrix> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::Dimension("no Kraus matrices given".into()))?;
    let dim = first.rows();
    if kraus.iter().any(|a| a.rows() != dim || a.cols() != dim) {
        return Err(Error::Dimension("Kraus matrices must share one square shape".into()));
    }
    let completeness = completeness_residual(kraus);
    if completeness > SOLVER_COMPLETENESS_TOL {
        return Err(Error::Domain(format!(
            "Kraus list is not complete (residual {completeness:.3e})"
        )));
    }

    let mut rho = ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64);
    let mut residual = invariance_residual(kraus, &rho);
    if residual < tol {
        return Ok(rho);
    }
    for _ in 0..max_iter {
        let mapped = transfer(kraus, &rho);
        let mut next = (&rho + &mapped).scale_real(0.5);
        let tr = next.trace().re;
        next = next.scale_real(1.0 / tr);
        rho = hermitian_part(&next);
        residual = invariance_residual(kraus, &rho);
        if residual < tol {
            return Ok(rho);
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + &m.adjoint()).scale_real(0.5)
}

/// JSON schema for custom models:
/// `{"d": int, "D": int, "kraus": [[[re, im], ...], ...], "rho": optional}`.
/// Each matrix is a flat row-major list of `D*D` entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub d: usize,
    #[serde(rename = "D")]
    pub bond_dim: usize,
    pub kraus: Vec<EntryPairs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<EntryPairs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ModelJson {
    pub fn from_model(m: &MpsModel) -> Self {
        ModelJson {
            d: m.local_dim(),
            bond_dim: m.bond_dim(),
            kraus: m.kraus().iter().map(to_pairs).collect(),
            rho: Some(to_pairs(m.invariant_state())),
            label: Some(m.label().to_string()),
        }
    }

    pub fn into_model(self) -> Result<MpsModel> {
        if self.kraus.len() != self.d {
            return Err(Error::Dimension(format!(
                "\"d\" is {} but {} Kraus matrices were given",
                self.d,
                self.kraus.len()
            )));
        }
        let kraus = self
            .kraus
            .iter()
            .map(|k| square_from_pairs(k, Some(self.bond_dim)))
            .collect::<Result<Vec<_>>>()?;
        let rho = match &self.rho {
            Some(r) => square_from_pairs(r, Some(self.bond_dim))?,
            None => solve_invariant_state(&kraus, DEFAULT_SOLVER_TOL, DEFAULT_SOLVER_MAX_ITER)?,
        };
        let label = self.label.unwrap_or_else(|| "custom".to_string());
        MpsModel::new(ModelKind::Custom, kraus, rho, label, BTreeMap::new())
    }
}

pub fn model_from_json_str(s: &str) -> Result<MpsModel> {
    serde_json::from_str::<ModelJson>(s)?.into_model()
}

pub fn load_model(path: &Path) -> Result<MpsModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json_str(&text)
}
