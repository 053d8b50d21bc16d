//! Social welfare three ways, plus regret against the oracle action.
//!
//! `W(G) = E[1{Z∈G}·Y1 + 1{Z∉G}·Y0]` is evaluated
//!
//! * by definition (`brute_force_welfare`): enumerate the joint support and
//!   mix the treated/untreated arm means of each potential outcome with the
//!   selection weights — no use of the MTE representation at all;
//! * through the representation (`representation_welfare`):
//!   `E[Y0] + Σ_cells P(cell)·1{cell∈G}·∫₀¹ MTE(u, x) du`, with the
//!   integrated kernel in closed form;
//! * empirically (`empirical_welfare`): the sample average
//!   `n⁻¹ Σᵢ 1{zᵢ∈G}·kernel(xᵢ)` for a caller-supplied kernel. Empirical
//!   objectives drop `E[Y0]` — it does not depend on `G` and so cannot move
//!   the maximizer.
//!
//! The first two agree for every `G` (that equality is the representation
//! theorem on a finite support), and the test suite asserts it across
//! endogenous and non-endogenous specs. `oracle_best` maximizes population
//! welfare exactly over a policy class and anchors every regret number in
//! the crate.

use serde::{Deserialize, Serialize};

use crate::dgp::{population_moments, true_integrated_mte, Dataset, DgpSpec};
use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::policy::{argmax_over_class, contains_z, DecisionSet, PolicyClass};

/// Which evaluation path produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BruteForce,
    Representation,
    Empirical,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::BruteForce => "brute_force",
            Method::Representation => "representation",
            Method::Empirical => "empirical",
        })
    }
}

/// Welfare of one decision set next to the class optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WelfareReport {
    pub method: Method,
    pub w_of_g: f64,
    pub e_y0: f64,
    /// `W_𝒢 = sup_{G ∈ 𝒢} W(G)`.
    pub w_best: f64,
    /// `w_best − w_of_g`, clamped at 0 against float round-off.
    pub regret: f64,
}

/// `W(G)` by definition: enumerate the joint support and average the
/// selected potential outcome per cell.
///
/// The potential-outcome means are deliberately built from the observed-arm
/// decomposition `E[Y_d | cell] = ν·E[Y_d | D=1] + (1−ν)·E[Y_d | D=0]`
/// with truncated-uniform moments of `U`, not from the closed form `x'β_d`
/// that the representation path uses — so agreement between the two is a
/// real check, not an identity of code paths.
pub fn brute_force_welfare(spec: &DgpSpec, g: &DecisionSet) -> f64 {
    let moments = population_moments(spec);
    let terms: Vec<f64> = moments
        .cells
        .iter()
        .map(|cm| {
            let m1 = dot(&cm.x, &spec.beta1);
            let m0 = dot(&cm.x, &spec.beta0);
            // E[U − ½ | D=1] = ν/2 − ½ and E[U − ½ | D=0] = ν/2.
            let e_y1 = cm.nu * (m1 + spec.rho1 * (cm.nu / 2.0 - 0.5))
                + (1.0 - cm.nu) * (m1 + spec.rho1 * (cm.nu / 2.0));
            let e_y0 = cm.nu * (m0 + spec.rho0 * (cm.nu / 2.0 - 0.5))
                + (1.0 - cm.nu) * (m0 + spec.rho0 * (cm.nu / 2.0));
            let outcome = if contains_z(g, cm.z0, &cm.x) { e_y1 } else { e_y0 };
            cm.prob * outcome
        })
        .collect();
    pairwise_sum(&terms)
}

/// `W(G)` through the representation:
/// `E[Y0] + Σ_cells P(cell)·1{cell∈G}·x'(β1 − β0)`.
pub fn representation_welfare(spec: &DgpSpec, g: &DecisionSet) -> f64 {
    let moments = population_moments(spec);
    let terms: Vec<f64> = moments
        .cells
        .iter()
        .map(|cm| {
            if contains_z(g, cm.z0, &cm.x) {
                let kernel = true_integrated_mte(spec, &cm.x)
                    .expect("cell covariates are in the spec support");
                cm.prob * kernel
            } else {
                0.0
            }
        })
        .collect();
    moments.e_y0 + pairwise_sum(&terms)
}

/// Sample analogue `n⁻¹ Σᵢ 1{zᵢ∈G}·kernel(xᵢ)` (no `E[Y0]` term).
pub fn empirical_welfare(
    dataset: &Dataset,
    kernel: impl Fn(&[f64]) -> f64,
    g: &DecisionSet,
) -> Result<f64> {
    if dataset.observations.is_empty() {
        return Err(Error::Domain("empirical welfare of an empty dataset".into()));
    }
    let terms: Vec<f64> = dataset
        .observations
        .iter()
        .map(|obs| {
            if contains_z(g, obs.z0, &obs.x) {
                kernel(&obs.x)
            } else {
                0.0
            }
        })
        .collect();
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// The naive arm contrast `Ê[Y | D=1, X=x] − Ê[Y | D=0, X=x]`, which under
/// endogenous selection does *not* estimate the integrated MTE.
pub fn naive_kernel(dataset: &Dataset, x_cell: &[f64]) -> Result<f64> {
    naive_kernel_with_se(dataset, x_cell).map(|(est, _)| est)
}

/// Naive arm contrast with its Welch standard error
/// `√(s₁²/n₁ + s₀²/n₀)` — the yardstick the bias tests use.
pub fn naive_kernel_with_se(dataset: &Dataset, x_cell: &[f64]) -> Result<(f64, f64)> {
    let (mut y1, mut y0) = (Vec::new(), Vec::new());
    for obs in &dataset.observations {
        if obs.x == x_cell {
            if obs.d {
                y1.push(obs.y);
            } else {
                y0.push(obs.y);
            }
        }
    }
    for (arm, ys) in [(1u8, &y1), (0u8, &y0)] {
        if ys.is_empty() {
            return Err(Error::EmptyArm {
                cell: format!("{x_cell:?}"),
                arm,
            });
        }
    }
    let (m1, m0) = (mean(&y1), mean(&y0));
    let var = |ys: &[f64], m: f64| -> f64 {
        if ys.len() < 2 {
            return 0.0;
        }
        let sq: Vec<f64> = ys.iter().map(|y| (y - m) * (y - m)).collect();
        pairwise_sum(&sq) / (ys.len() - 1) as f64
    };
    let se = (var(&y1, m1) / y1.len() as f64 + var(&y0, m0) / y0.len() as f64).sqrt();
    Ok((m1 - m0, se))
}

/// Exact population maximizer over the class: `(G★, W_𝒢)`.
///
/// Scores each support cell by `P(cell)·∫₀¹ MTE(u, x) du`; the argmax of
/// their selected sum plus `E[Y0]` is exactly `sup_G W(G)`.
pub fn oracle_best(spec: &DgpSpec, class: &PolicyClass) -> Result<(DecisionSet, f64)> {
    let moments = population_moments(spec);
    let mut points = Vec::with_capacity(moments.cells.len());
    let mut scores = Vec::with_capacity(moments.cells.len());
    for cm in &moments.cells {
        points.push(class.scope.project(cm.z0, &cm.x));
        scores.push(
            cm.prob
                * true_integrated_mte(spec, &cm.x)
                    .expect("cell covariates are in the spec support"),
        );
    }
    let solved = argmax_over_class(class, &points, &scores)?;
    Ok((solved.decision, moments.e_y0 + solved.objective))
}

/// Population welfare report for a chosen `G` against its class optimum.
pub fn population_report(
    spec: &DgpSpec,
    g: &DecisionSet,
    class: &PolicyClass,
) -> Result<WelfareReport> {
    let moments = population_moments(spec);
    let w_of_g = representation_welfare(spec, g);
    let (_, w_best) = oracle_best(spec, class)?;
    let raw = w_best - w_of_g;
    if raw < -1e-12 {
        return Err(Error::Invariant(format!(
            "regret {raw:e} below -1e-12: W_best = {w_best} is not the class optimum"
        )));
    }
    Ok(WelfareReport {
        method: Method::Representation,
        w_of_g,
        e_y0: moments.e_y0,
        w_best,
        regret: raw.max(0.0),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec};
    use crate::policy::{ClassShape, DecisionShape, Point, Scope, ThresholdDir};
    use std::collections::BTreeSet;

    /// All 2³ covariate-cell subsets of a spec's x-support, as x-only sets.
    fn x_subsets(spec: &DgpSpec) -> Vec<DecisionSet> {
        let cells: Vec<Point> = spec.x_support.iter().map(|p| Point(p.x.clone())).collect();
        (0u32..1 << cells.len())
            .map(|mask| {
                let members: BTreeSet<Point> = cells
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, p)| p.clone())
                    .collect();
                DecisionSet {
                    scope: Scope::XOnly,
                    shape: DecisionShape::CellSet { members },
                }
            })
            .collect()
    }

    fn x_power_set(spec: &DgpSpec) -> PolicyClass {
        PolicyClass {
            scope: Scope::XOnly,
            shape: ClassShape::PowerSet {
                cells: spec.x_support.iter().map(|p| Point(p.x.clone())).collect(),
            },
        }
    }

    /// `G = {x₁ ∈ {0, 1}}` on the reference support.
    fn reference_optimum() -> DecisionSet {
        DecisionSet {
            scope: Scope::XOnly,
            shape: DecisionShape::CellSet {
                members: [Point(vec![1.0, 0.0]), Point(vec![1.0, 1.0])].into(),
            },
        }
    }

    fn zero_effect_spec() -> DgpSpec {
        let mut spec = DgpSpec::reference();
        spec.beta0 = vec![0.3, 0.5];
        spec.beta1 = vec![0.3, 0.5];
        spec.rho1 = spec.rho0;
        spec.validate().unwrap();
        spec
    }

    fn unconfounded_spec() -> DgpSpec {
        let mut spec = DgpSpec::reference();
        spec.rho0 = 0.0;
        spec.rho1 = 0.0;
        spec.validate().unwrap();
        spec
    }

    #[test]
    fn theorem1_equivalence_across_specs() {
        let specs = [
            DgpSpec::reference(),
            DgpSpec::reference().with_beta1(vec![0.6, 0.1]).unwrap(),
            zero_effect_spec(),
            unconfounded_spec(),
        ];
        for spec in &specs {
            for g in x_subsets(spec) {
                let brute = brute_force_welfare(spec, &g);
                let repr = representation_welfare(spec, &g);
                assert!(
                    (brute - repr).abs() <= 1e-12,
                    "brute {brute} vs representation {repr} on {g:?}"
                );
            }
        }
    }

    #[test]
    fn empty_and_full_sets_recover_marginal_means() {
        let spec = DgpSpec::reference();
        let subsets = x_subsets(&spec);
        let empty = &subsets[0];
        let full = subsets.last().unwrap();
        assert!(brute_force_welfare(&spec, empty).abs() <= 1e-15);
        assert!((brute_force_welfare(&spec, full) - 0.3).abs() <= 1e-12);
        assert!(representation_welfare(&spec, empty).abs() <= 1e-15);
        assert!((representation_welfare(&spec, full) - 0.3).abs() <= 1e-12);
    }

    #[test]
    fn zero_effect_spec_is_constant_in_g() {
        let spec = zero_effect_spec();
        let base = brute_force_welfare(&spec, &x_subsets(&spec)[0]);
        for g in x_subsets(&spec) {
            assert!((brute_force_welfare(&spec, &g) - base).abs() <= 1e-12);
        }
    }

    #[test]
    fn reference_optimum_value() {
        let spec = DgpSpec::reference();
        let g = reference_optimum();
        let w = representation_welfare(&spec, &g);
        assert!((w - 11.0 / 30.0).abs() <= 1e-12, "got {w}");
    }

    #[test]
    fn empirical_welfare_basics() {
        let spec = DgpSpec::reference();
        let data = simulate(&spec, 100, 5, false);
        let g = reference_optimum();
        assert_eq!(empirical_welfare(&data, |_| 0.0, &g).unwrap(), 0.0);
        let empty = &x_subsets(&spec)[0];
        let kernel = |x: &[f64]| true_integrated_mte(&spec, x).unwrap();
        assert_eq!(empirical_welfare(&data, kernel, empty).unwrap(), 0.0);

        let no_data = Dataset {
            observations: vec![],
            latents_retained: false,
            provenance: data.provenance.clone(),
        };
        assert!(matches!(
            empirical_welfare(&no_data, kernel, &g),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn empirical_welfare_concentrates_on_population_value() {
        let spec = DgpSpec::reference();
        let data = simulate(&spec, 100_000, 1, false);
        let g = reference_optimum();
        let kernel = |x: &[f64]| true_integrated_mte(&spec, x).unwrap();
        let est = empirical_welfare(&data, &kernel, &g).unwrap();

        // MC standard error of the averaged indicator·kernel terms.
        let terms: Vec<f64> = data
            .observations
            .iter()
            .map(|o| if contains_z(&g, o.z0, &o.x) { kernel(&o.x) } else { 0.0 })
            .collect();
        let m = mean(&terms);
        let var = terms.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / (terms.len() - 1) as f64;
        let se = (var / terms.len() as f64).sqrt();

        let target = 11.0 / 30.0; // representation value; E[Y0] = 0 here
        assert!(
            (est - target).abs() <= 3.0 * se,
            "est {est}, target {target}, se {se}"
        );
    }

    #[test]
    fn empirical_sup_deviation_small_with_high_probability() {
        // Worst case over the whole power-set class, 200 replications at
        // n = 10⁴: the sup-deviation from the population objective should
        // stay within 0.05 in at least 95% of replications.
        let spec = DgpSpec::reference();
        let kernel = |x: &[f64]| true_integrated_mte(&spec, x).unwrap();
        let subsets = x_subsets(&spec);
        let populations: Vec<f64> = subsets
            .iter()
            .map(|g| representation_welfare(&spec, g)) // e_y0 = 0 on S★
            .collect();
        let mut failures = 0;
        for rep in 0..200u64 {
            let data = simulate(&spec, 10_000, 9_000 + rep, false);
            let sup = subsets
                .iter()
                .zip(&populations)
                .map(|(g, pop)| (empirical_welfare(&data, &kernel, g).unwrap() - pop).abs())
                .fold(0.0, f64::max);
            if sup > 0.05 {
                failures += 1;
            }
        }
        assert!(failures <= 10, "{failures} of 200 replications exceeded 0.05");
    }

    #[test]
    fn naive_kernel_is_consistent_without_endogeneity() {
        let spec = unconfounded_spec();
        let data = simulate(&spec, 100_000, 2, false);
        for cell in [[1.0, -1.0], [1.0, 0.0], [1.0, 1.0]] {
            let (est, se) = naive_kernel_with_se(&data, &cell).unwrap();
            let truth = true_integrated_mte(&spec, &cell).unwrap();
            assert!(
                (est - truth).abs() <= 3.0 * se,
                "cell {cell:?}: est {est}, truth {truth}, se {se}"
            );
        }
    }

    #[test]
    fn naive_kernel_is_biased_under_endogeneity() {
        let spec = DgpSpec::reference();
        let data = simulate(&spec, 100_000, 3, false);
        let (est, se) = naive_kernel_with_se(&data, &[1.0, 0.0]).unwrap();

        // Far from the true integrated MTE…
        let truth = true_integrated_mte(&spec, &[1.0, 0.0]).unwrap();
        assert_eq!(truth, 0.3);
        assert!(
            (est - truth).abs() > 3.0 * se,
            "naive {est} unexpectedly close to {truth} (se {se})"
        );

        // …and close to the closed-form selection-biased contrast
        // E[Y|D=1] − E[Y|D=0] = −0.075 − 1/12.
        let biased = -0.075 - 1.0 / 12.0;
        assert!(
            (est - biased).abs() <= 3.0 * se,
            "naive {est} vs closed form {biased} (se {se})"
        );
    }

    #[test]
    fn naive_kernel_empty_arm_errors() {
        let spec = DgpSpec::reference();
        let mut data = simulate(&spec, 200, 4, false);
        // Remove every treated observation at x₁ = 0.
        data.observations.retain(|o| !(o.d && o.x == [1.0, 0.0]));
        match naive_kernel(&data, &[1.0, 0.0]) {
            Err(Error::EmptyArm { arm: 1, .. }) => {}
            other => panic!("expected EmptyArm for the treated arm, got {other:?}"),
        }
    }

    #[test]
    fn oracle_best_on_reference_power_set() {
        let spec = DgpSpec::reference();
        let (g_star, w_best) = oracle_best(&spec, &x_power_set(&spec)).unwrap();
        assert!((w_best - 11.0 / 30.0).abs() <= 1e-12);
        assert_eq!(g_star, reference_optimum());
    }

    #[test]
    fn oracle_best_zero_effect_is_empty() {
        let spec = zero_effect_spec();
        let class = x_power_set(&spec);
        let (g_star, w_best) = oracle_best(&spec, &class).unwrap();
        assert!((w_best - 0.3).abs() <= 1e-12); // E[Y0] = 0.3 for this spec
        assert_eq!(g_star, DecisionSet::empty(&class));
    }

    #[test]
    fn oracle_best_threshold_matches_power_set() {
        let spec = DgpSpec::reference();
        let threshold = PolicyClass {
            scope: Scope::XOnly,
            shape: ClassShape::Threshold {
                coord: 1,
                dir: ThresholdDir::Geq,
            },
        };
        let (g_thr, w_thr) = oracle_best(&spec, &threshold).unwrap();
        let (_, w_ps) = oracle_best(&spec, &x_power_set(&spec)).unwrap();
        assert!((w_thr - w_ps).abs() <= 1e-12);
        // Same member cells: x₁ ∈ {0, 1}.
        for p in spec.x_support.iter().map(|p| Point(p.x.clone())) {
            let want = p.0[1] >= 0.0;
            assert_eq!(crate::policy::contains(&g_thr, &p), want);
        }
    }

    #[test]
    fn oracle_dominates_every_enumerated_set() {
        for spec in [DgpSpec::reference(), unconfounded_spec()] {
            let (_, w_best) = oracle_best(&spec, &x_power_set(&spec)).unwrap();
            for g in x_subsets(&spec) {
                assert!(representation_welfare(&spec, &g) <= w_best + 1e-12);
            }
        }
    }

    #[test]
    fn population_report_regret_nonnegative() {
        let spec = DgpSpec::reference();
        let class = x_power_set(&spec);
        // Deliberately suboptimal action: treat only x₁ = −1.
        let g = DecisionSet {
            scope: Scope::XOnly,
            shape: DecisionShape::CellSet {
                members: [Point(vec![1.0, -1.0])].into(),
            },
        };
        let report = population_report(&spec, &g, &class).unwrap();
        // W(G) = (1/3)(−0.2); regret = 11/30 + 1/15.
        assert!((report.w_of_g + 0.2 / 3.0).abs() <= 1e-12);
        assert!((report.regret - (11.0 / 30.0 + 0.2 / 3.0)).abs() <= 1e-12);
        assert!(report.regret >= 0.0);
        assert_eq!(report.method, Method::Representation);

        // The optimum itself reports regret exactly zero after clamping.
        let report = population_report(&spec, &reference_optimum(), &class).unwrap();
        assert_eq!(report.regret, 0.0);
    }
}
