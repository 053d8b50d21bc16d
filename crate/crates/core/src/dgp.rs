//! Synthetic data from the threshold-crossing selection model.
//!
//! The structural law is
//!
//! ```text
//! D   = 1{ν(Z) - U ≥ 0},    U | Z ~ Uniform(0, 1)
//! Y_d = x'β_d + ρ_d (U - ½) + σ ε_d,    ε_d ~ N(0, 1) independent of (Z, U)
//! Y   = D Y1 + (1 - D) Y0
//! ```
//!
//! with `Z = (Z0, X)` for a discrete instrument `Z0` and discrete covariates
//! `X` (first coordinate a literal 1), and propensity `ν(z) = γ'(1, z0, x₁, …)`.
//! Endogeneity enters through the selection slopes `ρ_d`: potential outcomes
//! load linearly on the same latent `U` that drives treatment take-up, so
//!
//! ```text
//! MTE(u, x) = x'(β1 - β0) + (ρ1 - ρ0)(u - ½)
//! ```
//!
//! which is exactly a degree-2 member of the parametric family fitted by
//! [`crate::estimator`] (`α₂ = (ρ1 - ρ0)/2`). Discreteness keeps every
//! population quantity computable by exact enumeration ([`population_moments`]),
//! which is what the welfare-equivalence and regret oracles rely on.
//!
//! [`normalize_selection`] implements the reduction of a general continuous
//! selection latent `Ũ` with threshold `ν̃(z)` to this normalized form: with
//! `F` the conditional CDF of `Ũ`, the transformed latent `F(Ũ)` is uniform
//! and `1{ν̃(z) ≥ ũ} = 1{F(ν̃(z)) ≥ F(ũ)}` draw by draw.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quad;

/// Margin by which propensities must stay inside (0, 1); also the clamp
/// margin applied to estimated propensities.
pub const EPS_P: f64 = 1e-6;

/// A covariate support point with its probability mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportPoint {
    /// Covariate vector; coordinate 0 is the constant 1.
    pub x: Vec<f64>,
    pub prob: f64,
}

/// An instrument value with its probability mass (independent of X).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentMass {
    pub value: f64,
    pub prob: f64,
}

/// Full structural description of a data-generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub x_support: Vec<SupportPoint>,
    pub z0_support: Vec<InstrumentMass>,
    /// Propensity coefficients over the basis `(1, z0, x₁, …)`.
    pub gamma: Vec<f64>,
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub rho0: f64,
    pub rho1: f64,
    pub noise_sd: f64,
    /// Declared bound on `|∫₀¹ MTE(u, x) du|` over the support.
    pub m_bar: f64,
}

impl DgpSpec {
    /// Construct and validate in one step.
    pub fn new(
        x_support: Vec<SupportPoint>,
        z0_support: Vec<InstrumentMass>,
        gamma: Vec<f64>,
        beta0: Vec<f64>,
        beta1: Vec<f64>,
        rho0: f64,
        rho1: f64,
        noise_sd: f64,
        m_bar: f64,
    ) -> Result<Self> {
        let spec = DgpSpec {
            x_support,
            z0_support,
            gamma,
            beta0,
            beta1,
            rho0,
            rho1,
            noise_sd,
            m_bar,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The three-cell reference process used by the test suite and the
    /// bundled configurations: `x = (1, x₁)` with `x₁ ∈ {-1, 0, 1}`
    /// equiprobable, `z0 ∈ {0, 1}` equiprobable, `ν = 0.2 + 0.4 z0 + 0.1 x₁`,
    /// `β0 = (0, 0)`, `β1 = (0.3, 0.5)`, `ρ0 = 0.5`, `ρ1 = 1.5`, `σ = 0.5`.
    pub fn reference() -> Self {
        let third = 1.0 / 3.0;
        DgpSpec::new(
            vec![
                SupportPoint { x: vec![1.0, -1.0], prob: third },
                SupportPoint { x: vec![1.0, 0.0], prob: third },
                SupportPoint { x: vec![1.0, 1.0], prob: third },
            ],
            vec![
                InstrumentMass { value: 0.0, prob: 0.5 },
                InstrumentMass { value: 1.0, prob: 0.5 },
            ],
            vec![0.2, 0.4, 0.1],
            vec![0.0, 0.0],
            vec![0.3, 0.5],
            0.5,
            1.5,
            0.5,
            0.8,
        )
        .expect("reference spec is valid")
    }

    /// A copy of this spec with a different outcome-level vector `β1`
    /// (used to build regret-experiment families).
    pub fn with_beta1(&self, beta1: Vec<f64>) -> Result<Self> {
        let mut spec = self.clone();
        spec.beta1 = beta1;
        spec.validate()?;
        Ok(spec)
    }

    /// Check every construction invariant; lists the first violation found.
    pub fn validate(&self) -> Result<()> {
        if self.x_support.is_empty() {
            return Err(Error::Config("x_support is empty".into()));
        }
        if self.z0_support.is_empty() {
            return Err(Error::Config("z0_support is empty".into()));
        }
        let dim = self.x_support[0].x.len();
        if dim == 0 {
            return Err(Error::Config("covariate vectors are empty".into()));
        }
        for (i, pt) in self.x_support.iter().enumerate() {
            if pt.x.len() != dim {
                return Err(Error::Config(format!(
                    "x_support[{i}] has dimension {} but x_support[0] has {dim}",
                    pt.x.len()
                )));
            }
            if pt.x[0] != 1.0 {
                return Err(Error::Config(format!(
                    "x_support[{i}]: first coordinate must be exactly 1, got {}",
                    pt.x[0]
                )));
            }
            if !(pt.prob >= 0.0) {
                return Err(Error::Config(format!(
                    "x_support[{i}]: negative probability {}",
                    pt.prob
                )));
            }
        }
        for (i, m) in self.z0_support.iter().enumerate() {
            if !(m.prob >= 0.0) {
                return Err(Error::Config(format!(
                    "z0_support[{i}]: negative probability {}",
                    m.prob
                )));
            }
        }
        let px: f64 = self.x_support.iter().map(|p| p.prob).sum();
        if (px - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "x_support probabilities sum to {px:.15}, not 1"
            )));
        }
        let pz: f64 = self.z0_support.iter().map(|m| m.prob).sum();
        if (pz - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "z0_support probabilities sum to {pz:.15}, not 1"
            )));
        }
        if self.beta0.len() != dim || self.beta1.len() != dim {
            return Err(Error::Config(format!(
                "beta0/beta1 must have covariate dimension {dim}, got {}/{}",
                self.beta0.len(),
                self.beta1.len()
            )));
        }
        if self.gamma.len() != dim + 1 {
            return Err(Error::Config(format!(
                "gamma must have length {} for basis (1, z0, x1, ...), got {}",
                dim + 1,
                self.gamma.len()
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if !(self.m_bar >= 0.0) {
            return Err(Error::Config(format!("m_bar must be >= 0, got {}", self.m_bar)));
        }
        for m in &self.z0_support {
            for pt in &self.x_support {
                let nu = self.nu(m.value, &pt.x);
                if !(EPS_P..=1.0 - EPS_P).contains(&nu) {
                    return Err(Error::Config(format!(
                        "propensity out of [{EPS_P:e}, {:e}] at cell (z0={}, x={:?}): nu={nu}",
                        1.0 - EPS_P,
                        m.value,
                        pt.x
                    )));
                }
            }
        }
        for pt in &self.x_support {
            let imte = dot(&pt.x, &self.beta1) - dot(&pt.x, &self.beta0);
            if imte.abs() > self.m_bar + 1e-12 {
                return Err(Error::Config(format!(
                    "|x'(beta1-beta0)| = {} exceeds m_bar = {} at x={:?}",
                    imte.abs(),
                    self.m_bar,
                    pt.x
                )));
            }
        }
        Ok(())
    }

    pub fn dim_x(&self) -> usize {
        self.x_support[0].x.len()
    }

    /// True propensity `ν(z) = γ'(1, z0, x₁, …)`.
    pub fn nu(&self, z0: f64, x: &[f64]) -> f64 {
        let mut v = self.gamma[0] + self.gamma[1] * z0;
        for (g, xi) in self.gamma[2..].iter().zip(&x[1..]) {
            v += g * xi;
        }
        v
    }

    /// Joint support cells `(z0, x, probability)` under `Z0 ⫫ X`.
    pub fn cells(&self) -> Vec<(f64, Vec<f64>, f64)> {
        let mut out = Vec::with_capacity(self.z0_support.len() * self.x_support.len());
        for m in &self.z0_support {
            for pt in &self.x_support {
                out.push((m.value, pt.x.clone(), m.prob * pt.prob));
            }
        }
        out
    }

    /// Exact membership test of `x` in the covariate support.
    pub fn x_in_support(&self, x: &[f64]) -> bool {
        self.x_support.iter().any(|p| p.x == x)
    }

    /// Stable content digest (first 16 hex characters of SHA-256 over the
    /// canonical JSON encoding); identifies the spec in artifacts.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Largest `|∫₀¹ MTE(u, x) du|` over the covariate support.
    pub fn max_abs_integrated_mte(&self) -> f64 {
        self.x_support
            .iter()
            .map(|p| (dot(&p.x, &self.beta1) - dot(&p.x, &self.beta0)).abs())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Latent values kept alongside an observation when requested at simulation
/// time; used only by oracle checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latents {
    pub y0: f64,
    pub y1: f64,
    pub u: f64,
}

/// One observed row `(Y, D, Z0, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub d: bool,
    pub z0: f64,
    pub x: Vec<f64>,
    pub latents: Option<Latents>,
}

/// Where a dataset came from: the simulation seed and the spec digest
/// (empty when ingested from an external file without provenance).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub spec_digest: String,
}

/// An ordered sample of observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub latents_retained: bool,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.observations.len()
    }

    /// Outcome column.
    pub fn ys(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    /// Treatment column as 0/1 reals.
    pub fn ds(&self) -> Vec<f64> {
        self.observations
            .iter()
            .map(|o| if o.d { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Draw `n` i.i.d. observations from the structural law.
///
/// Deterministic given `(spec, n, seed)`. Per observation the draw order is
/// fixed as `(z0, x, u, ε0, ε1)`; both potential-outcome noises are drawn
/// whether or not latents are retained, so the observable columns do not
/// depend on `retain_latents`.
pub fn simulate(spec: &DgpSpec, n: usize, seed: u64, retain_latents: bool) -> Dataset {
    let mut rng = crate::seed::stream_rng(seed, &[]);
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let z0 = draw_mass(&mut rng, spec.z0_support.iter().map(|m| m.prob));
        let z0 = spec.z0_support[z0].value;
        let xi = draw_mass(&mut rng, spec.x_support.iter().map(|p| p.prob));
        let x = spec.x_support[xi].x.clone();
        let u: f64 = rng.random();
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let nu = spec.nu(z0, &x);
        let d = nu - u >= 0.0;
        let y0 = dot(&x, &spec.beta0) + spec.rho0 * (u - 0.5) + spec.noise_sd * e0;
        let y1 = dot(&x, &spec.beta1) + spec.rho1 * (u - 0.5) + spec.noise_sd * e1;
        let y = if d { y1 } else { y0 };
        observations.push(Observation {
            y,
            d,
            z0,
            x,
            latents: retain_latents.then_some(Latents { y0, y1, u }),
        });
    }
    Dataset {
        observations,
        latents_retained: retain_latents,
        provenance: Provenance {
            seed,
            spec_digest: spec.digest(),
        },
    }
}

/// Index drawn from a discrete mass function by inverse-CDF over a single
/// uniform; the last index absorbs any rounding slack.
fn draw_mass(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// `MTE(u, x) = x'(β1 - β0) + (ρ1 - ρ0)(u - ½)` for `x` in the support.
pub fn true_mte(spec: &DgpSpec, u: f64, x: &[f64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("u = {u} outside [0, 1]")));
    }
    if !spec.x_in_support(x) {
        return Err(Error::Domain(format!("x = {x:?} not in the spec support")));
    }
    Ok(dot(x, &spec.beta1) - dot(x, &spec.beta0) + (spec.rho1 - spec.rho0) * (u - 0.5))
}

/// `∫₀¹ MTE(u, x) du = x'(β1 - β0)`: the welfare operator kernel at `x`.
pub fn true_integrated_mte(spec: &DgpSpec, x: &[f64]) -> Result<f64> {
    if !spec.x_in_support(x) {
        return Err(Error::Domain(format!("x = {x:?} not in the spec support")));
    }
    Ok(dot(x, &spec.beta1) - dot(x, &spec.beta0))
}

/// Supported non-uniform selection-latent families.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatentFamily {
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// A selection model in raw form: `D = 1{ν̃(z) - Ũ ≥ 0}` with `Ũ` drawn from
/// `family` and a latent threshold `ν̃(z) = c₀ + c₁ z0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSelectionSpec {
    pub family: LatentFamily,
    /// Coefficients `(c₀)` or `(c₀, c₁)` of the latent threshold in `z0`.
    pub nu_tilde: Vec<f64>,
}

impl LatentSelectionSpec {
    pub fn new(family: LatentFamily, nu_tilde: Vec<f64>) -> Result<Self> {
        match family {
            LatentFamily::Exponential { rate } if !(rate > 0.0) => {
                return Err(Error::Config(format!("exponential rate must be > 0, got {rate}")))
            }
            LatentFamily::Normal { sd, .. } if !(sd > 0.0) => {
                return Err(Error::Config(format!("normal sd must be > 0, got {sd}")))
            }
            LatentFamily::Uniform { lo, hi } if !(hi > lo) => {
                return Err(Error::Config(format!(
                    "uniform support must have hi > lo, got [{lo}, {hi}]"
                )))
            }
            _ => {}
        }
        if nu_tilde.is_empty() || nu_tilde.len() > 2 {
            return Err(Error::Config(format!(
                "nu_tilde must have 1 or 2 coefficients, got {}",
                nu_tilde.len()
            )));
        }
        Ok(LatentSelectionSpec { family, nu_tilde })
    }

    fn nu_tilde_at(&self, z0: f64) -> f64 {
        self.nu_tilde[0] + self.nu_tilde.get(1).copied().unwrap_or(0.0) * z0
    }
}

/// The monotone map `ũ ↦ F_Ũ(ũ)` carrying a latent draw to its normalized
/// uniform counterpart.
#[derive(Debug, Clone, Copy)]
pub struct UMap {
    family: LatentFamily,
}

impl UMap {
    pub fn apply(&self, u_tilde: f64) -> f64 {
        match self.family {
            LatentFamily::Exponential { rate } => {
                if u_tilde <= 0.0 {
                    0.0
                } else {
                    // 1 - exp(-rate * u) via expm1 for monotone, precise tails.
                    -(-rate * u_tilde).exp_m1()
                }
            }
            LatentFamily::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("validated at construction").cdf(u_tilde)
            }
            LatentFamily::Uniform { lo, hi } => ((u_tilde - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }
}

/// Normalize a raw selection model at instrument value `z0`.
///
/// Returns `ν(z) = F_Ũ(ν̃(z))` and the transform `F_Ũ` itself. Because `F_Ũ`
/// is monotone, `1{ν̃(z) ≥ ũ} = 1{F(ν̃(z)) ≥ F(ũ)}` holds draw by draw, and
/// `F(Ũ)` is Uniform(0, 1) — the normalized model generates the same data.
pub fn normalize_selection(latent: &LatentSelectionSpec, z0: f64) -> Result<(f64, UMap)> {
    let map = UMap { family: latent.family };
    Ok((map.apply(latent.nu_tilde_at(z0)), map))
}

/// Closed-form moments of one joint support cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellMoments {
    pub z0: f64,
    pub x: Vec<f64>,
    pub prob: f64,
    pub nu: f64,
    /// Unconditional potential-outcome means `E[Y0 | cell]`, `E[Y1 | cell]`.
    pub e_y0: f64,
    pub e_y1: f64,
    /// Observed-outcome arm means `E[Y | D=1, cell]`, `E[Y | D=0, cell]`
    /// (truncated-uniform moments: `E[U | U ≤ ν] = ν/2`,
    /// `E[U | U > ν] = (1+ν)/2`).
    pub e_y_treated: f64,
    pub e_y_untreated: f64,
    /// Observed-outcome mean `E[Y | cell]`.
    pub e_y: f64,
}

/// Population moments by exact enumeration over the joint support, with all
/// `U`-integrals done analytically.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationMoments {
    pub e_y0: f64,
    pub e_y1: f64,
    pub e_y: f64,
    pub cells: Vec<CellMoments>,
}

pub fn population_moments(spec: &DgpSpec) -> PopulationMoments {
    let mut cells = Vec::new();
    let (mut e_y0, mut e_y1, mut e_y) = (0.0, 0.0, 0.0);
    for (z0, x, prob) in spec.cells() {
        let nu = spec.nu(z0, &x);
        let m0 = dot(&x, &spec.beta0);
        let m1 = dot(&x, &spec.beta1);
        // E[U - 1/2 | D=1] = ν/2 - 1/2 and E[U - 1/2 | D=0] = ν/2.
        let e_y_treated = m1 + spec.rho1 * (nu / 2.0 - 0.5);
        let e_y_untreated = m0 + spec.rho0 * (nu / 2.0);
        let e_y_cell = nu * e_y_treated + (1.0 - nu) * e_y_untreated;
        e_y0 += prob * m0;
        e_y1 += prob * m1;
        e_y += prob * e_y_cell;
        cells.push(CellMoments {
            z0,
            x,
            prob,
            nu,
            e_y0: m0,
            e_y1: m1,
            e_y_treated,
            e_y_untreated,
            e_y: e_y_cell,
        });
    }
    PopulationMoments { e_y0, e_y1, e_y, cells }
}

/// Population arm means `(E[Y | D=1, X=x], E[Y | D=0, X=x])` at a covariate
/// cell, mixing over the instrument. This is what the naive arm-difference
/// kernel estimates — and why it is biased under `ρ1 ≠ ρ0`.
pub fn naive_arm_means(spec: &DgpSpec, x: &[f64]) -> Result<(f64, f64)> {
    if !spec.x_in_support(x) {
        return Err(Error::Domain(format!("x = {x:?} not in the spec support")));
    }
    let (mut w1, mut s1, mut w0, mut s0) = (0.0, 0.0, 0.0, 0.0);
    for m in &spec.z0_support {
        let nu = spec.nu(m.value, x);
        let m1 = dot(x, &spec.beta1) + spec.rho1 * (nu / 2.0 - 0.5);
        let m0 = dot(x, &spec.beta0) + spec.rho0 * (nu / 2.0);
        w1 += m.prob * nu;
        s1 += m.prob * nu * m1;
        w0 += m.prob * (1.0 - nu);
        s0 += m.prob * (1.0 - nu) * m0;
    }
    Ok((s1 / w1, s0 / w0))
}

/// Verify `∫₀¹ true_mte du` against [`quad::integrate_unit`]; used by tests
/// and the validation command.
pub fn integrated_mte_quadrature(spec: &DgpSpec, x: &[f64]) -> Result<f64> {
    if !spec.x_in_support(x) {
        return Err(Error::Domain(format!("x = {x:?} not in the spec support")));
    }
    let dx = dot(x, &spec.beta1) - dot(x, &spec.beta0);
    let slope = spec.rho1 - spec.rho0;
    Ok(quad::integrate_unit(|u| dx + slope * (u - 0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_effect_spec() -> DgpSpec {
        let mut spec = DgpSpec::reference();
        spec.beta1 = spec.beta0.clone();
        spec.rho0 = 0.0;
        spec.rho1 = 0.0;
        spec.noise_sd = 0.0;
        spec.validate().unwrap();
        spec
    }

    #[test]
    fn empty_sample() {
        let ds = simulate(&DgpSpec::reference(), 0, 7, true);
        assert_eq!(ds.n(), 0);
        assert!(ds.latents_retained);
    }

    #[test]
    fn zero_effect_no_noise_collapses_outcomes() {
        let spec = zero_effect_spec();
        let ds = simulate(&spec, 500, 3, true);
        for obs in &ds.observations {
            let lat = obs.latents.unwrap();
            let xb = obs.x[0] * spec.beta0[0] + obs.x[1] * spec.beta0[1];
            assert_eq!(lat.y0, xb);
            assert_eq!(lat.y1, xb);
            assert_eq!(obs.y, xb);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = DgpSpec::reference();
        let a = simulate(&spec, 200, 11, true);
        let b = simulate(&spec, 200, 11, true);
        assert_eq!(a.observations, b.observations);
        let c = simulate(&spec, 200, 12, true);
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn observed_outcome_matches_latents_exactly() {
        let ds = simulate(&DgpSpec::reference(), 2000, 5, true);
        for obs in &ds.observations {
            let lat = obs.latents.unwrap();
            let expect = if obs.d { lat.y1 } else { lat.y0 };
            assert_eq!(obs.y, expect);
            assert!((0.0..=1.0).contains(&lat.u));
        }
    }

    #[test]
    fn latent_u_is_uniform_and_take_up_matches_mean_propensity() {
        // E[ν(Z)] = 0.4 for the reference spec by enumeration over the
        // six joint cells.
        let spec = DgpSpec::reference();
        let n = 100_000;
        let ds = simulate(&spec, n, 1, true);
        let us: Vec<f64> = ds.observations.iter().map(|o| o.latents.unwrap().u).collect();
        assert!(crate::linalg::ks_uniform(&us) <= 0.01);
        let mean_d = ds.ds().iter().sum::<f64>() / n as f64;
        let se = (0.4f64 * 0.6 / n as f64).sqrt();
        assert!((mean_d - 0.4).abs() <= 3.0 * se, "mean_d = {mean_d}");
    }

    #[test]
    fn per_cell_uniformity_and_selection_consistency() {
        let spec = DgpSpec::reference();
        let ds = simulate(&spec, 100_000, 2, true);
        let mut ok_cells = 0;
        let mut total_cells = 0;
        for (z0, x, _) in spec.cells() {
            let rows: Vec<&Observation> = ds
                .observations
                .iter()
                .filter(|o| o.z0 == z0 && o.x == x)
                .collect();
            let us: Vec<f64> = rows.iter().map(|o| o.latents.unwrap().u).collect();
            assert!(
                crate::linalg::ks_uniform(&us) <= 0.02,
                "cell (z0={z0}, x={x:?}) fails conditional uniformity"
            );
            let nu = spec.nu(z0, &x);
            let mean_d = rows.iter().filter(|o| o.d).count() as f64 / rows.len() as f64;
            let se = (nu * (1.0 - nu) / rows.len() as f64).sqrt();
            total_cells += 1;
            if (mean_d - nu).abs() <= 3.0 * se {
                ok_cells += 1;
            }
        }
        assert_eq!(total_cells, 6);
        assert!(ok_cells >= 5, "only {ok_cells}/6 cells within 3 standard errors");
    }

    #[test]
    fn mte_closed_forms() {
        let spec = DgpSpec::reference();
        let zero = zero_effect_spec();
        for u in [0.0, 0.25, 0.9] {
            for x1 in [-1.0, 0.0, 1.0] {
                assert_eq!(true_mte(&zero, u, &[1.0, x1]).unwrap(), 0.0);
            }
        }
        assert!((true_mte(&spec, 0.5, &[1.0, 0.0]).unwrap() - 0.3).abs() < 1e-15);
        // u = 0, x₁ = 1: 0.8 + 1.0 * (-0.5) = 0.3.
        assert!((true_mte(&spec, 0.0, &[1.0, 1.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!(true_mte(&spec, 1.5, &[1.0, 0.0]).is_err());
        assert!(true_mte(&spec, 0.5, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn integrated_mte_closed_forms_and_quadrature() {
        let spec = DgpSpec::reference();
        assert_eq!(true_integrated_mte(&zero_effect_spec(), &[1.0, 1.0]).unwrap(), 0.0);
        assert!((true_integrated_mte(&spec, &[1.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!((true_integrated_mte(&spec, &[1.0, -1.0]).unwrap() + 0.2).abs() < 1e-15);
        for pt in &spec.x_support {
            let closed = true_integrated_mte(&spec, &pt.x).unwrap();
            let quadr = integrated_mte_quadrature(&spec, &pt.x).unwrap();
            assert!((closed - quadr).abs() <= 1e-10);
        }
    }

    #[test]
    fn normalization_identity_and_closed_forms() {
        // Already-uniform latent: identity transform.
        let unif =
            LatentSelectionSpec::new(LatentFamily::Uniform { lo: 0.0, hi: 1.0 }, vec![0.3]).unwrap();
        let (nu, map) = normalize_selection(&unif, 0.0).unwrap();
        assert_eq!(nu, 0.3);
        assert_eq!(map.apply(0.77), 0.77);

        // Exponential(1) with constant threshold 1: ν = 1 - e⁻¹.
        let expo =
            LatentSelectionSpec::new(LatentFamily::Exponential { rate: 1.0 }, vec![1.0]).unwrap();
        let (nu, _) = normalize_selection(&expo, 0.0).unwrap();
        assert!((nu - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn normalization_preserves_treatment_and_uniformizes() {
        let latent =
            LatentSelectionSpec::new(LatentFamily::Normal { mean: 0.0, sd: 1.0 }, vec![0.5]).unwrap();
        let (nu, map) = normalize_selection(&latent, 0.0).unwrap();
        let mut rng = crate::seed::stream_rng(17, &[0]);
        let n = 100_000;
        let mut transformed = Vec::with_capacity(n);
        let nu_tilde = 0.5;
        for _ in 0..n {
            let u_tilde: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            let before = nu_tilde >= u_tilde;
            let after = nu >= map.apply(u_tilde);
            assert_eq!(before, after);
            transformed.push(map.apply(u_tilde));
        }
        assert!(crate::linalg::ks_uniform(&transformed) <= 0.01);
    }

    #[test]
    fn population_moments_closed_forms() {
        let mut all_zero = DgpSpec::reference();
        all_zero.beta0 = vec![0.0, 0.0];
        all_zero.beta1 = vec![0.0, 0.0];
        all_zero.rho0 = 0.0;
        all_zero.rho1 = 0.0;
        let m = population_moments(&all_zero);
        assert_eq!(m.e_y0, 0.0);
        assert_eq!(m.e_y1, 0.0);
        assert_eq!(m.e_y, 0.0);

        let m = population_moments(&DgpSpec::reference());
        assert!(m.e_y0.abs() < 1e-15);
        assert!((m.e_y1 - 0.3).abs() < 1e-15);
        assert_eq!(m.cells.len(), 6);
    }

    #[test]
    fn naive_arm_means_reference_values() {
        // At x₁ = 0: E[Y | D=1] = -0.075 and E[Y | D=0] = 1/12, so the naive
        // kernel sits at -0.158333..., far from the true kernel 0.3.
        let spec = DgpSpec::reference();
        let (t, c) = naive_arm_means(&spec, &[1.0, 0.0]).unwrap();
        assert!((t + 0.075).abs() < 1e-12);
        assert!((c - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn digest_is_stable_and_discriminating() {
        let a = DgpSpec::reference();
        assert_eq!(a.digest(), a.digest());
        let b = a.with_beta1(vec![0.6, 0.1]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut bad = DgpSpec::reference();
        bad.gamma = vec![1.1, 0.4, 0.1]; // ν > 1 - ε on some cell
        assert!(matches!(bad.validate(), Err(Error::Config(_))));

        let mut bad = DgpSpec::reference();
        bad.x_support[0].x[0] = 2.0;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));

        let mut bad = DgpSpec::reference();
        bad.x_support[0].prob = 0.5;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));

        let mut bad = DgpSpec::reference();
        bad.m_bar = 0.5; // |IMTE| reaches 0.8 at x₁ = 1
        assert!(matches!(bad.validate(), Err(Error::Config(_))));

        assert!(LatentSelectionSpec::new(LatentFamily::Exponential { rate: 0.0 }, vec![1.0]).is_err());
        assert!(LatentSelectionSpec::new(LatentFamily::Uniform { lo: 1.0, hi: 0.0 }, vec![1.0]).is_err());
    }
}
