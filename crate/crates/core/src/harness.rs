//! Monte Carlo regret harness.
//!
//! Estimates worst-case expected regret `E[W_𝒢 − W(Ĝ)]` of a decision rule
//! over an explicit finite family of data-generating processes and a grid of
//! sample sizes, then fits the log-log convergence rate. The family max is a
//! computable stand-in for the theory's sup over all processes with a bounded
//! kernel; membership in the bounded class is validated, and the finite max is
//! a lower bound on that sup.
//!
//! Regret is evaluated exactly: the fitted decision set is priced by the
//! population kernel representation, never by a holdout sample, so
//! per-replication regret is nonnegative up to float rounding (a tolerance of
//! `1e-9` is clamped to zero; anything more negative aborts the run as an
//! invariant violation).
//!
//! Determinism: replication streams are derived from
//! `(master_seed, spec index, n index, replication index)`, replications are
//! collected in index order, and every reduction is fixed-order, so the output
//! is bit-identical across worker counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{simulate, DgpSpec};
use crate::error::{Error, Result};
use crate::estimator::{build_design, fit_theta};
use crate::linalg::{mean, sample_sd, simple_regression};
use crate::policy::{ClassShape, DecisionSet, PolicyClass, Point, Scope, ThresholdDir};
use crate::propensity::{fit_linear, Basis, PropensityModel};
use crate::rules::{bayes_rule, ewm_hybrid, ewm_known, plugin_rule, CellDistribution, PosteriorSpec};
use crate::seed::derive_seed;
use crate::welfare::{oracle_best, representation_welfare};

/// Decision rule under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    EwmKnown,
    EwmHybrid,
    Plugin,
    Bayes,
    /// Test hook: always returns the oracle set G★ (zero-regret benchmark).
    OracleInjected,
    /// Constant empty decision (treat nobody); upper benchmark.
    NeverTreat,
}

/// Propensity handling for the estimated-kernel rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityKind {
    Oracle,
    Fitted,
}

/// A policy class described independently of any concrete support, so one
/// experiment config can instantiate it against every family member.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassDescriptor {
    /// Power set of the spec's covariate support (x-only scope).
    PowerSetSupport,
    Threshold { coord: usize, dir: ThresholdDir },
    Interval { coord: usize },
    LinearScore { coords: Vec<usize> },
}

impl ClassDescriptor {
    pub fn instantiate(&self, spec: &DgpSpec) -> Result<PolicyClass> {
        let shape = match self {
            ClassDescriptor::PowerSetSupport => ClassShape::PowerSet {
                cells: spec.x_support.iter().map(|p| Point(p.x.clone())).collect(),
            },
            ClassDescriptor::Threshold { coord, dir } => ClassShape::Threshold {
                coord: *coord,
                dir: *dir,
            },
            ClassDescriptor::Interval { coord } => ClassShape::Interval { coord: *coord },
            ClassDescriptor::LinearScore { coords } => ClassShape::LinearScore {
                coords: coords.clone(),
            },
        };
        let class = PolicyClass {
            scope: Scope::XOnly,
            shape,
        };
        class.validate()?;
        Ok(class)
    }
}

/// Full description of one regret experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Finite family of processes playing the bounded-kernel class.
    pub dgp_family: Vec<DgpSpec>,
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub rule: RuleKind,
    #[serde(default = "default_propensity")]
    pub propensity: PropensityKind,
    /// Polynomial order K of the selection term in the outcome design.
    #[serde(default = "default_k")]
    pub k: usize,
    pub class: ClassDescriptor,
    pub master_seed: u64,
    /// Required when `rule` is `bayes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorSpec>,
}

fn default_propensity() -> PropensityKind {
    PropensityKind::Fitted
}

fn default_k() -> usize {
    2
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dgp_family.is_empty() {
            return Err(Error::Config("dgp_family must be nonempty".into()));
        }
        for (i, spec) in self.dgp_family.iter().enumerate() {
            spec.validate()
                .map_err(|e| Error::Config(format!("dgp_family[{i}]: {e}")))?;
            if spec.dim_x() != self.dgp_family[0].dim_x() {
                return Err(Error::Config(format!(
                    "dgp_family[{i}] has {} covariates but dgp_family[0] has {}",
                    spec.dim_x(),
                    self.dgp_family[0].dim_x()
                )));
            }
            if spec.max_abs_integrated_mte() > spec.m_bar + 1e-12 {
                return Err(Error::Config(format!(
                    "dgp_family[{i}] violates the kernel bound {}",
                    spec.m_bar
                )));
            }
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must be nonempty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "n_grid must be strictly increasing, got {:?}",
                self.n_grid
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Config(format!(
                "selection polynomial order K must be >= 2, got {}",
                self.k
            )));
        }
        match (self.rule, &self.posterior) {
            (RuleKind::Bayes, None) => {
                return Err(Error::Config("rule `bayes` requires a posterior block".into()))
            }
            (RuleKind::Bayes, Some(p)) => {
                p.validate()?;
                let width = 2 * self.dgp_family[0].dim_x() + self.k - 1;
                if p.prior_mean.len() != width {
                    return Err(Error::Config(format!(
                        "posterior prior_mean has length {} but the K={} design has {width} columns",
                        p.prior_mean.len(),
                        self.k
                    )));
                }
            }
            _ => {}
        }
        for spec in &self.dgp_family {
            self.class.instantiate(spec)?;
        }
        Ok(())
    }
}

/// Mean regret at one `(spec, n)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub n: usize,
    pub mean_regret: f64,
    pub std_error: f64,
    /// Replications excluded for estimation failure (≤ 5% of R by contract).
    pub failures: usize,
}

/// Regret curve of a single family member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecCurve {
    /// Config digest of the process, for joining output rows back to specs.
    pub spec_id: String,
    pub points: Vec<RegretPoint>,
}

/// Family-max regret at one sample size, with its √n scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCasePoint {
    pub n: usize,
    pub regret: f64,
    /// `√n · regret`; bounded in n when the √(v/n) rate holds.
    pub scaled: f64,
}

/// Fitted log-log convergence rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub std_error: f64,
    /// Grid points entering the fit after zero-regret exclusion.
    pub points_used: usize,
    pub excluded_zero: usize,
}

/// Complete harness output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub specs: Vec<SpecCurve>,
    pub worst_case: Vec<WorstCasePoint>,
    /// `None` when the rate is unfittable (fewer than three sample sizes with
    /// positive worst-case regret).
    pub rate: Option<RateFit>,
}

/// Everything fixed per family member across replications.
struct SpecContext {
    spec: DgpSpec,
    class: PolicyClass,
    g_star: DecisionSet,
    w_star: f64,
    oracle_propensity: PropensityModel,
}

fn one_replication(
    ctx: &SpecContext,
    config: &ExperimentConfig,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let data = simulate(&ctx.spec, n, seed, false);
    let decision = match config.rule {
        RuleKind::OracleInjected => ctx.g_star.clone(),
        RuleKind::NeverTreat => DecisionSet::empty(&ctx.class),
        RuleKind::EwmKnown => ewm_known(&data, &ctx.spec, &ctx.class)?,
        RuleKind::EwmHybrid | RuleKind::Plugin | RuleKind::Bayes => {
            let model = match config.propensity {
                PropensityKind::Oracle => ctx.oracle_propensity.clone(),
                PropensityKind::Fitted => {
                    fit_linear(&data, Basis::default_for_dim(ctx.spec.dim_x()))?
                }
            };
            let design = build_design(&data, &model, config.k)?;
            match config.rule {
                RuleKind::EwmHybrid => {
                    let theta = fit_theta(&design, &data.ys())?;
                    ewm_hybrid(&data, &theta, &ctx.class)?
                }
                RuleKind::Plugin => {
                    let theta = fit_theta(&design, &data.ys())?;
                    let dist = CellDistribution::empirical(&data)?;
                    plugin_rule(&dist, &theta, &ctx.class)?
                }
                RuleKind::Bayes => {
                    let posterior = config.posterior.as_ref().expect("validated");
                    bayes_rule(&data, &design, posterior, &ctx.class)?
                }
                _ => unreachable!(),
            }
        }
    };
    let raw = ctx.w_star - representation_welfare(&ctx.spec, &decision);
    if raw < -1e-9 {
        return Err(Error::Invariant(format!(
            "population regret {raw:e} below the oracle optimum"
        )));
    }
    Ok(raw.max(0.0))
}

/// Run the full experiment grid.
pub fn run(config: &ExperimentConfig) -> Result<RegretCurve> {
    config.validate()?;
    let contexts: Vec<SpecContext> = config
        .dgp_family
        .iter()
        .map(|spec| {
            let class = config.class.instantiate(spec)?;
            let (g_star, _) = oracle_best(spec, &class)?;
            // Price G★ through the same representation used for fitted
            // decisions so that an identical decision cancels exactly.
            let w_star = representation_welfare(spec, &g_star);
            Ok(SpecContext {
                spec: spec.clone(),
                class,
                g_star,
                w_star,
                oracle_propensity: PropensityModel::oracle(spec),
            })
        })
        .collect::<Result<_>>()?;

    let r = config.replications;
    let mut specs = Vec::with_capacity(contexts.len());
    for (si, ctx) in contexts.iter().enumerate() {
        let mut points = Vec::with_capacity(config.n_grid.len());
        for (ni, &n) in config.n_grid.iter().enumerate() {
            let outcomes: Vec<Result<f64>> = (0..r)
                .into_par_iter()
                .map(|rep| {
                    let seed =
                        derive_seed(config.master_seed, &[si as u64, ni as u64, rep as u64]);
                    one_replication(ctx, config, n, seed)
                })
                .collect();

            let mut regrets = Vec::with_capacity(r);
            let mut failures = 0usize;
            let mut first_failure = None;
            for outcome in outcomes {
                match outcome {
                    Ok(v) => regrets.push(v),
                    Err(e @ Error::Invariant(_)) => return Err(e),
                    Err(e) => {
                        failures += 1;
                        first_failure.get_or_insert(e);
                    }
                }
            }
            if failures * 20 > r {
                return Err(Error::Numerical(format!(
                    "{failures}/{r} replications failed at (spec {si}, n {n}); first: {}",
                    first_failure.expect("failures > 0")
                )));
            }
            let mean_regret = mean(&regrets);
            let std_error = sample_sd(&regrets) / (regrets.len() as f64).sqrt();
            points.push(RegretPoint {
                n,
                mean_regret,
                std_error,
                failures,
            });
        }
        specs.push(SpecCurve {
            spec_id: ctx.spec.digest(),
            points,
        });
    }

    let worst_case: Vec<WorstCasePoint> = config
        .n_grid
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let regret = specs
                .iter()
                .map(|s| s.points[ni].mean_regret)
                .fold(f64::NEG_INFINITY, f64::max);
            WorstCasePoint {
                n,
                regret,
                scaled: (n as f64).sqrt() * regret,
            }
        })
        .collect();

    let mut curve = RegretCurve {
        specs,
        worst_case,
        rate: None,
    };
    curve.rate = fit_rate(&curve).ok();
    Ok(curve)
}

/// Least-squares slope of `log(worst-case regret)` on `log n`. Zero-regret
/// entries carry no rate information on the log scale and are excluded; fewer
/// than three positive entries are not enough for a slope with a standard
/// error.
pub fn fit_rate(curve: &RegretCurve) -> Result<RateFit> {
    let positive: Vec<&WorstCasePoint> = curve
        .worst_case
        .iter()
        .filter(|p| p.regret > 0.0)
        .collect();
    let excluded_zero = curve.worst_case.len() - positive.len();
    if positive.len() < 3 {
        return Err(Error::Data(format!(
            "rate fit needs >= 3 sample sizes with positive worst-case regret, have {}",
            positive.len()
        )));
    }
    let log_n: Vec<f64> = positive.iter().map(|p| (p.n as f64).ln()).collect();
    let log_r: Vec<f64> = positive.iter().map(|p| p.regret.ln()).collect();
    let fit = simple_regression(&log_n, &log_r)?;
    Ok(RateFit {
        slope: fit.slope,
        std_error: fit.slope_stderr,
        points_used: positive.len(),
        excluded_zero,
    })
}

/// Implied estimates of the universal constant in the `2M̄√(v/n)` regret
/// bound: `regret_n / (2·M̄·√(v/n))` per grid point. The theory pins no level,
/// so the meaningful check is boundedness in `n`.
pub fn bound_ratio(curve: &RegretCurve, m_bar: f64, v: usize) -> Vec<f64> {
    curve
        .worst_case
        .iter()
        .map(|p| p.regret / (2.0 * m_bar * (v as f64 / p.n as f64).sqrt()))
        .collect()
}

/// The three-member reference family: the reference process plus two
/// kernel-boosted variants. Chosen so the fitted-pipeline noise still flips
/// cells at the small end of the usual n grid, which is what makes the
/// worst-case envelope decay at the √(v/n) rate instead of collapsing to an
/// exponential tail.
pub fn reference_family() -> Vec<DgpSpec> {
    let base = DgpSpec::reference();
    let boosted = base.with_beta1(vec![0.6, 0.1]).expect("within the kernel bound");
    let lopsided = base.with_beta1(vec![0.8, 0.0]).expect("within the kernel bound");
    vec![base, boosted, lopsided]
}
