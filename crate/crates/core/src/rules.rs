//! Statistical decision rules: plug-in, Bayes, and EWM (known-kernel and
//! hybrid variants).
//!
//! All four rules are thin layers over the same mechanism — score support
//! points, hand the scores to the exact class argmax:
//!
//! * `ewm_known`: per-observation scores `∫₀¹ MTE(u, xᵢ) du / n` from the
//!   true process (the infeasible benchmark rule);
//! * `ewm_hybrid`: the same with the estimated kernel from a fitted θ;
//! * `plugin_rule`: per-cell scores `P̂(cell)·kernel(x_cell)` for a cell
//!   distribution fitted or known; the `E[Y0]` term is dropped because it
//!   does not depend on `G`;
//! * `bayes_rule`: plug-in at the Gaussian-conjugate posterior mean of θ
//!   with the empirical cell distribution. The posterior-draw average of
//!   the welfare objective is linear in θ, so averaging draws and scoring
//!   at the mean give the same maximizer; the rule therefore needs no RNG
//!   and is exactly reproducible. `sample_posterior` exposes actual draws
//!   for tests of the posterior itself.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dgp::{true_integrated_mte, Dataset, DgpSpec};
use crate::error::{Error, Result};
use crate::estimator::{integrated_kernel, DesignRow, ThetaEstimate};
use crate::linalg::pairwise_sum;
use crate::policy::{argmax_over_class, DecisionSet, PolicyClass, Point};
use crate::seed::stream_rng;

/// One support cell with a probability weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellWeight {
    pub z0: f64,
    pub x: Vec<f64>,
    pub prob: f64,
}

/// A discrete distribution over the joint `(z0, x)` support — the `δ̂`
/// component of the plug-in and Bayes rules, always saturated (one weight
/// per observed cell), never parametric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellDistribution {
    pub cells: Vec<CellWeight>,
}

impl CellDistribution {
    /// The true cell probabilities of a process.
    pub fn from_spec(spec: &DgpSpec) -> Self {
        CellDistribution {
            cells: spec
                .cells()
                .into_iter()
                .map(|(z0, x, prob)| CellWeight { z0, x, prob })
                .collect(),
        }
    }

    /// Empirical cell frequencies of a sample.
    pub fn empirical(dataset: &Dataset) -> Result<Self> {
        if dataset.observations.is_empty() {
            return Err(Error::Data("empirical cell distribution of an empty dataset".into()));
        }
        let mut counts: BTreeMap<Point, usize> = BTreeMap::new();
        for obs in &dataset.observations {
            let mut key = Vec::with_capacity(obs.x.len() + 1);
            key.push(obs.z0);
            key.extend_from_slice(&obs.x);
            *counts.entry(Point(key)).or_insert(0) += 1;
        }
        let n = dataset.n() as f64;
        Ok(CellDistribution {
            cells: counts
                .into_iter()
                .map(|(p, c)| CellWeight {
                    z0: p.0[0],
                    x: p.0[1..].to_vec(),
                    prob: c as f64 / n,
                })
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Data("cell distribution over zero cells".into()));
        }
        for cw in &self.cells {
            if !(cw.prob >= 0.0) {
                return Err(Error::Data(format!(
                    "negative cell probability {} at (z0={}, x={:?})",
                    cw.prob, cw.z0, cw.x
                )));
            }
        }
        let total: f64 = pairwise_sum(&self.cells.iter().map(|c| c.prob).collect::<Vec<_>>());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "cell probabilities sum to {total:.12}, not 1"
            )));
        }
        Ok(())
    }
}

/// Gaussian-conjugate posterior configuration for θ.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorSpec {
    /// Prior mean of θ, one entry per design column.
    pub prior_mean: Vec<f64>,
    /// Prior standard deviation, shared across coordinates (independent
    /// Gaussian prior `θ_j ~ N(prior_mean_j, τ²)`).
    pub tau_prior: f64,
    /// Assumed response noise standard deviation.
    pub noise_sd: f64,
    /// Posterior draw count for `sample_posterior`; the decision rule itself
    /// is draw-free by linearity.
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_draws() -> usize {
    1000
}

impl PosteriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_prior > 0.0) {
            return Err(Error::Config(format!("tau_prior must be > 0, got {}", self.tau_prior)));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::Config(format!("noise_sd must be > 0, got {}", self.noise_sd)));
        }
        if self.draws == 0 {
            return Err(Error::Config("posterior draw count must be >= 1".into()));
        }
        Ok(())
    }
}

/// A solved Gaussian posterior: mean plus a square-root factor of the
/// covariance for sampling.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<f64>,
    /// Columns `q_j / √λ_j` of the precision eigendecomposition; the
    /// covariance square root used by `sample`.
    scale_cols: Vec<Vec<f64>>,
}

impl Posterior {
    /// One draw `θ = mean + Σ_j ξ_j·scale_cols[j]`, `ξ_j ~ N(0,1)`.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut theta = self.mean.clone();
        for col in &self.scale_cols {
            let xi: f64 = rng.sample(StandardNormal);
            for (t, c) in theta.iter_mut().zip(col) {
                *t += xi * c;
            }
        }
        theta
    }

    /// Marginal posterior standard deviation per coordinate.
    pub fn marginal_sd(&self) -> Vec<f64> {
        let p = self.mean.len();
        (0..p)
            .map(|j| self.scale_cols.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt())
            .collect()
    }
}

/// Conjugate update: posterior precision `Λ = I/τ² + Σᵢ𝒳ᵢ𝒳ᵢ'/σ²`, mean
/// `Λ⁻¹(μ₀/τ² + Σᵢ𝒳ᵢyᵢ/σ²)`.
pub fn fit_posterior(
    design: &[DesignRow],
    y: &[f64],
    spec: &PosteriorSpec,
) -> Result<Posterior> {
    spec.validate()?;
    if design.is_empty() {
        return Err(Error::Data("posterior update with no design rows".into()));
    }
    if design.len() != y.len() {
        return Err(Error::Data(format!(
            "{} design rows but {} responses",
            design.len(),
            y.len()
        )));
    }
    let p = design[0].values.len();
    if spec.prior_mean.len() != p {
        return Err(Error::Config(format!(
            "prior mean has length {} but the design has {p} columns",
            spec.prior_mean.len()
        )));
    }
    let tau2 = spec.tau_prior * spec.tau_prior;
    let sigma2 = spec.noise_sd * spec.noise_sd;

    let mut precision = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut terms = Vec::with_capacity(design.len());
    for i in 0..p {
        for j in i..p {
            terms.clear();
            terms.extend(design.iter().map(|r| r.values[i] * r.values[j]));
            let s = pairwise_sum(&terms) / sigma2;
            precision[(i, j)] = s;
            precision[(j, i)] = s;
        }
        precision[(i, i)] += 1.0 / tau2;
        terms.clear();
        terms.extend(design.iter().zip(y).map(|(r, yi)| r.values[i] * yi));
        rhs[i] = pairwise_sum(&terms) / sigma2 + spec.prior_mean[i] / tau2;
    }

    let trace = precision.trace();
    let eigen = precision.symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_eig > 1e-14 * trace) {
        return Err(Error::Numerical(format!(
            "posterior precision is singular (min eigenvalue {min_eig:e})"
        )));
    }

    // mean = Q diag(1/λ) Q' rhs.
    let qt_rhs = eigen.eigenvectors.transpose() * &rhs;
    let mut scaled = qt_rhs.clone();
    for j in 0..p {
        scaled[j] /= eigen.eigenvalues[j];
    }
    let mean = &eigen.eigenvectors * scaled;

    let scale_cols = (0..p)
        .map(|j| {
            let lam = eigen.eigenvalues[j];
            eigen.eigenvectors.column(j).iter().map(|q| q / lam.sqrt()).collect()
        })
        .collect();

    Ok(Posterior {
        mean: mean.iter().cloned().collect(),
        scale_cols,
    })
}

/// `spec.draws` posterior draws on a dedicated seeded stream.
pub fn sample_posterior(
    design: &[DesignRow],
    y: &[f64],
    spec: &PosteriorSpec,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let posterior = fit_posterior(design, y, spec)?;
    let mut rng = stream_rng(seed, &[]);
    Ok((0..spec.draws).map(|_| posterior.sample(&mut rng)).collect())
}

/// Score every observation and maximize over the class.
fn ewm_argmax(
    dataset: &Dataset,
    class: &PolicyClass,
    kernel: impl Fn(&[f64]) -> Result<f64>,
) -> Result<DecisionSet> {
    if dataset.observations.is_empty() {
        return Err(Error::Data("decision rule on an empty dataset".into()));
    }
    let n = dataset.n() as f64;
    let mut points = Vec::with_capacity(dataset.n());
    let mut scores = Vec::with_capacity(dataset.n());
    for obs in &dataset.observations {
        points.push(class.scope.project(obs.z0, &obs.x));
        scores.push(kernel(&obs.x)? / n);
    }
    Ok(argmax_over_class(class, &points, &scores)?.decision)
}

/// EWM with the true integrated MTE as kernel (infeasible benchmark).
pub fn ewm_known(dataset: &Dataset, spec: &DgpSpec, class: &PolicyClass) -> Result<DecisionSet> {
    ewm_argmax(dataset, class, |x| true_integrated_mte(spec, x))
}

/// EWM with the estimated kernel `x'(b̂₁ − β̂₀) + Σ α̂` from a fitted θ.
pub fn ewm_hybrid(
    dataset: &Dataset,
    theta: &ThetaEstimate,
    class: &PolicyClass,
) -> Result<DecisionSet> {
    if let Some(obs) = dataset.observations.first() {
        if obs.x.len() != theta.dim_x() {
            return Err(Error::Data(format!(
                "theta fitted for {} covariates but data has {}",
                theta.dim_x(),
                obs.x.len()
            )));
        }
    }
    ewm_argmax(dataset, class, |x| Ok(integrated_kernel(theta, x)))
}

/// Plug-in rule: argmax of `Σ_cells P̂(cell)·kernel(x_cell)·1{cell ∈ G}`.
pub fn plugin_rule(
    dist: &CellDistribution,
    theta: &ThetaEstimate,
    class: &PolicyClass,
) -> Result<DecisionSet> {
    dist.validate()?;
    let mut points = Vec::with_capacity(dist.cells.len());
    let mut scores = Vec::with_capacity(dist.cells.len());
    for cw in &dist.cells {
        if cw.x.len() != theta.dim_x() {
            return Err(Error::Data(format!(
                "theta fitted for {} covariates but cell has {}",
                theta.dim_x(),
                cw.x.len()
            )));
        }
        points.push(class.scope.project(cw.z0, &cw.x));
        scores.push(cw.prob * integrated_kernel(theta, &cw.x));
    }
    Ok(argmax_over_class(class, &points, &scores)?.decision)
}

/// Bayes rule: plug-in at the posterior mean of θ with the empirical cell
/// distribution.
pub fn bayes_rule(
    dataset: &Dataset,
    design: &[DesignRow],
    posterior_spec: &PosteriorSpec,
    class: &PolicyClass,
) -> Result<DecisionSet> {
    if design.len() != dataset.n() {
        return Err(Error::Data(format!(
            "{} design rows for {} observations",
            design.len(),
            dataset.n()
        )));
    }
    let posterior = fit_posterior(design, &dataset.ys(), posterior_spec)?;
    let dim_x = design[0].dim_x;
    let k = design[0].values.len() - 2 * dim_x + 1;
    let theta = ThetaEstimate::from_theta(&posterior.mean, dim_x, k)?;
    let dist = CellDistribution::empirical(dataset)?;
    plugin_rule(&dist, &theta, class)
}
