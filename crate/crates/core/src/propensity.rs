//! Propensity-score estimation with a linear-in-basis least-squares model.
//!
//! The estimator regresses the treatment indicator on basis terms in
//! `(z0, x)` — by default `(1, z0, x₁, …)`, which nests the true propensity
//! of every [`DgpSpec`](crate::dgp::DgpSpec). Least squares (not logistic) is
//! deliberate: the parametric-rate arguments for the downstream MTE estimator
//! attach to this estimator, whose in-sample max error shrinks at the `√n`
//! rate. Fitted values outside `(0, 1)` are clamped to
//! `[ε_p, 1 - ε_p]` rather than re-modeled.

use serde::{Deserialize, Serialize};

use crate::dgp::{Dataset, DgpSpec, EPS_P};
use crate::error::{Error, Result};
use crate::linalg;

/// One monomial basis term in `(z0, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Z0,
    /// Covariate coordinate `j ≥ 1` (coordinate 0 is the constant).
    X(usize),
}

/// An ordered list of basis terms with per-column scale factors.
///
/// Scales default to 1 and exist for conditioning experiments: fitting with
/// column `j` scaled by `c` divides coefficient `j` by `c` and leaves
/// predictions unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Basis {
    pub terms: Vec<Term>,
    pub scales: Vec<f64>,
}

impl Basis {
    pub fn new(terms: Vec<Term>) -> Self {
        let scales = vec![1.0; terms.len()];
        Basis { terms, scales }
    }

    /// The default basis `(1, z0, x₁, …, x_{dim-1})` for covariate dimension
    /// `dim` (including the constant coordinate).
    pub fn default_for_dim(dim: usize) -> Self {
        let mut terms = vec![Term::Intercept, Term::Z0];
        terms.extend((1..dim).map(Term::X));
        Basis::new(terms)
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != self.terms.len() {
            return Err(Error::Config(format!(
                "{} scales for {} basis terms",
                scales.len(),
                self.terms.len()
            )));
        }
        if scales.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::Config("basis scales must be finite and nonzero".into()));
        }
        self.scales = scales;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluate the basis row at `(z0, x)`.
    pub fn eval(&self, z0: f64, x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .zip(&self.scales)
            .map(|(t, s)| {
                s * match t {
                    Term::Intercept => 1.0,
                    Term::Z0 => z0,
                    Term::X(j) => x[*j],
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Coefficients taken from the data-generating process itself.
    Oracle,
    /// Coefficients estimated by least squares.
    Fitted,
}

/// A linear propensity model `ν̂(z) = γ̂' p(z)` with clamped predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityModel {
    pub basis: Basis,
    pub gamma_hat: Vec<f64>,
    /// Clamp margin: predictions are restricted to `[eps, 1 - eps]`.
    pub eps: f64,
    pub kind: ModelKind,
}

impl PropensityModel {
    /// The oracle model: the spec's own coefficients over the default basis.
    pub fn oracle(spec: &DgpSpec) -> Self {
        PropensityModel {
            basis: Basis::default_for_dim(spec.dim_x()),
            gamma_hat: spec.gamma.clone(),
            eps: EPS_P,
            kind: ModelKind::Oracle,
        }
    }

    /// Clamped prediction `ν̂(z) ∈ [ε_p, 1 - ε_p]`.
    pub fn predict(&self, z0: f64, x: &[f64]) -> f64 {
        let raw: f64 = self
            .basis
            .eval(z0, x)
            .iter()
            .zip(&self.gamma_hat)
            .map(|(p, g)| p * g)
            .sum();
        raw.clamp(self.eps, 1.0 - self.eps)
    }
}

/// Least-squares fit of an arbitrary response column on the basis; the
/// response is the treatment indicator in [`fit_linear`], or exact `ν(z_i)`
/// values when testing interpolation.
pub fn fit_with_response(dataset: &Dataset, response: &[f64], basis: Basis) -> Result<PropensityModel> {
    if response.len() != dataset.n() {
        return Err(Error::Data(format!(
            "response length {} does not match dataset size {}",
            response.len(),
            dataset.n()
        )));
    }
    let rows: Vec<Vec<f64>> = dataset
        .observations
        .iter()
        .map(|o| basis.eval(o.z0, &o.x))
        .collect();
    let ls = linalg::solve_normal_equations(&rows, response)?;
    Ok(PropensityModel {
        basis,
        gamma_hat: ls.coefficients,
        eps: EPS_P,
        kind: ModelKind::Fitted,
    })
}

/// Least squares of `D` on `p(Z)`.
pub fn fit_linear(dataset: &Dataset, basis: Basis) -> Result<PropensityModel> {
    let d = dataset.ds();
    fit_with_response(dataset, &d, basis)
}

/// The error statistic of the propensity estimate on a dataset with known
/// truth: `max_i |ν̂(Z_i) - ν(Z_i)|` and its square.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorStats {
    pub max_abs: f64,
    pub max_sq: f64,
}

pub fn propensity_error(model: &PropensityModel, dataset: &Dataset, spec: &DgpSpec) -> ErrorStats {
    let max_abs = dataset
        .observations
        .iter()
        .map(|o| (model.predict(o.z0, &o.x) - spec.nu(o.z0, &o.x)).abs())
        .fold(0.0, f64::max);
    ErrorStats {
        max_abs,
        max_sq: max_abs * max_abs,
    }
}
