//! The six command runners.
//!
//! Each takes a resolved [`Session`] (config + out dir + effective seed),
//! writes its artifacts under the output directory with fixed names, and
//! prints a short report. All numeric artifacts print values with 16
//! fractional digits (lossless); console reports round to the configured
//! precision.

use std::fs;
use std::path::PathBuf;

use serde_json::json;

use mte_welfare::dgp::{simulate, true_integrated_mte, Dataset, DgpSpec};
use mte_welfare::error::{Error, Result};
use mte_welfare::estimator::{build_design, diagnostics, fit_theta, normal_equation_residual};
use mte_welfare::harness::{self, ClassDescriptor, PropensityKind, RuleKind};
use mte_welfare::io;
use mte_welfare::policy::{DecisionSet, PolicyClass, Point};
use mte_welfare::propensity::{fit_linear, Basis, PropensityModel};
use mte_welfare::rules::{bayes_rule, ewm_hybrid, ewm_known, plugin_rule, CellDistribution};
use mte_welfare::welfare::{
    brute_force_welfare, empirical_welfare, oracle_best, representation_welfare,
};

use crate::config::RunConfig;

/// One resolved invocation: parsed config plus the command-line overrides.
pub struct Session {
    pub config: RunConfig,
    pub digest: String,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub precision: usize,
}

impl Session {
    pub fn new(
        config: RunConfig,
        digest: String,
        out: Option<PathBuf>,
        seed_flag: Option<u64>,
    ) -> Result<Self> {
        let out_dir = out
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out_dir).map_err(|e| {
            Error::Config(format!(
                "output directory {} is not writable: {e}",
                out_dir.display()
            ))
        })?;
        let seed = seed_flag.or(config.seed);
        let precision = config.precision.unwrap_or(6);
        Ok(Session {
            digest,
            out_dir,
            seed,
            precision,
            config,
        })
    }

    pub fn spec(&self) -> DgpSpec {
        self.config.spec.clone().unwrap_or_else(DgpSpec::reference)
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("missing `seed` (config key or --seed flag)".into()))
    }

    fn k(&self) -> usize {
        self.config.k.unwrap_or(2)
    }

    fn dataset(&self) -> Result<Dataset> {
        let path = self
            .config
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("missing `dataset` path in config".into()))?;
        io::read_dataset(path)
    }

    fn provenance_json(&self) -> serde_json::Value {
        json!({
            "tool": "mte-welfare",
            "version": env!("CARGO_PKG_VERSION"),
            "config": if self.digest.is_empty() { "none" } else { &self.digest },
            "seed": self.seed,
        })
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("serializable artifact");
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn simulate_cmd(s: &Session) -> Result<i32> {
    let spec = s.spec();
    let n = s
        .config
        .n
        .ok_or_else(|| Error::Config("simulate requires `n`".into()))?;
    if n == 0 {
        return Err(Error::Config("simulate requires `n` >= 1".into()));
    }
    let seed = s.require_seed()?;
    let dataset = simulate(&spec, n, seed, s.config.retain_latents);
    let path = s.out_dir.join("dataset.csv");
    io::write_dataset(&dataset, &path)?;
    println!(
        "simulate: wrote {} observations (spec {}, seed {seed}) to {}",
        n,
        spec.digest(),
        path.display()
    );
    Ok(0)
}

/// Fit the propensity model configured for the session against a dataset.
fn propensity_model(s: &Session, dataset: &Dataset) -> Result<PropensityModel> {
    let dim = dataset
        .observations
        .first()
        .map(|o| o.x.len())
        .ok_or_else(|| Error::Data("empty dataset".into()))?;
    match s.config.propensity.unwrap_or(PropensityKind::Fitted) {
        PropensityKind::Fitted => fit_linear(dataset, Basis::default_for_dim(dim)),
        PropensityKind::Oracle => {
            let spec = s
                .config
                .spec
                .clone()
                .ok_or_else(|| Error::Config("oracle propensity requires `spec`".into()))?;
            Ok(PropensityModel::oracle(&spec))
        }
    }
}

pub fn fit_cmd(s: &Session) -> Result<i32> {
    let dataset = s.dataset()?;
    let model = propensity_model(s, &dataset)?;
    let design = build_design(&dataset, &model, s.k())?;
    let theta = fit_theta(&design, &dataset.ys())?;
    let residual = normal_equation_residual(&design, &dataset.ys(), &theta);
    let bounds = s.config.diagnostic_bounds.unwrap_or_default();
    let report = diagnostics(&dataset, &design, &theta, bounds);

    let artifact = json!({
        "provenance": s.provenance_json(),
        "n": dataset.n(),
        "k": s.k(),
        "propensity": model,
        "theta": theta,
        "normal_equation_residual": residual,
        "diagnostics": report,
    });
    let path = s.write_json("fit.json", &artifact)?;

    let p = s.precision;
    println!("fit: n={} k={}", dataset.n(), s.k());
    println!("  beta0_hat       = {:.p$?}", theta.beta0_hat);
    println!("  beta1_hat block = {:.p$?}", theta.beta1_hat);
    println!("  alpha_hat       = {:.p$?}", theta.alpha_hat);
    println!("  normal-equation residual = {residual:.3e}");
    println!(
        "  gram min eigenvalue = {:.3e} (pass: {})",
        report.gram_min_eigenvalue, report.eigenvalue_pass
    );
    println!(
        "  theta norm {:.p$} (pass: {}), fourth moments pass: {}",
        report.theta_norm, report.theta_norm_pass, report.moments_pass
    );
    println!("  wrote {}", path.display());
    Ok(0)
}

/// Instantiate the configured class, preferring the spec's support and
/// falling back to the observed covariate support for cell-based classes.
fn resolve_class(
    descriptor: &ClassDescriptor,
    spec: Option<&DgpSpec>,
    dataset: Option<&Dataset>,
) -> Result<PolicyClass> {
    if let Some(spec) = spec {
        return descriptor.instantiate(spec);
    }
    match descriptor {
        ClassDescriptor::PowerSetSupport => {
            let dataset = dataset.ok_or_else(|| {
                Error::Config("power_set_support without `spec` needs a dataset".into())
            })?;
            let mut cells: Vec<Point> = dataset
                .observations
                .iter()
                .map(|o| Point(o.x.clone()))
                .collect();
            cells.sort_by(|a, b| a.cmp(b));
            cells.dedup_by(|a, b| a == b);
            let class = PolicyClass {
                scope: mte_welfare::policy::Scope::XOnly,
                shape: mte_welfare::policy::ClassShape::PowerSet { cells },
            };
            class.validate()?;
            Ok(class)
        }
        other => other.instantiate(&DgpSpec::reference()),
    }
}

pub fn choose_cmd(s: &Session) -> Result<i32> {
    let dataset = s.dataset()?;
    let rule = s
        .config
        .rule
        .ok_or_else(|| Error::Config("choose requires `rule`".into()))?;
    let descriptor = s
        .config
        .class
        .as_ref()
        .ok_or_else(|| Error::Config("choose requires `class`".into()))?;
    let class = resolve_class(descriptor, s.config.spec.as_ref(), Some(&dataset))?;

    let decision = match rule {
        RuleKind::NeverTreat => DecisionSet::empty(&class),
        RuleKind::OracleInjected | RuleKind::EwmKnown => {
            let spec = s
                .config
                .spec
                .clone()
                .ok_or_else(|| Error::Config(format!("rule `{rule:?}` requires `spec`")))?;
            if rule == RuleKind::OracleInjected {
                oracle_best(&spec, &class)?.0
            } else {
                ewm_known(&dataset, &spec, &class)?
            }
        }
        RuleKind::EwmHybrid | RuleKind::Plugin | RuleKind::Bayes => {
            let model = propensity_model(s, &dataset)?;
            let design = build_design(&dataset, &model, s.k())?;
            match rule {
                RuleKind::EwmHybrid => {
                    let theta = fit_theta(&design, &dataset.ys())?;
                    ewm_hybrid(&dataset, &theta, &class)?
                }
                RuleKind::Plugin => {
                    let theta = fit_theta(&design, &dataset.ys())?;
                    plugin_rule(&CellDistribution::empirical(&dataset)?, &theta, &class)?
                }
                RuleKind::Bayes => {
                    let posterior = s.config.posterior.as_ref().ok_or_else(|| {
                        Error::Config("rule `bayes` requires a `posterior` block".into())
                    })?;
                    bayes_rule(&dataset, &design, posterior, &class)?
                }
                _ => unreachable!(),
            }
        }
    };

    let artifact = json!({
        "provenance": s.provenance_json(),
        "rule": rule,
        "n": dataset.n(),
        "decision": decision,
    });
    let path = s.write_json("decision.json", &artifact)?;
    println!(
        "choose: rule {} on n={} -> {}",
        serde_json::to_string(&rule).expect("enum"),
        dataset.n(),
        serde_json::to_string(&decision).expect("decision serializes")
    );
    println!("  wrote {}", path.display());
    Ok(0)
}

pub fn welfare_cmd(s: &Session) -> Result<i32> {
    let spec = s.spec();
    let decision = s
        .config
        .decision
        .clone()
        .ok_or_else(|| Error::Config("welfare requires `decision`".into()))?;

    let brute = brute_force_welfare(&spec, &decision);
    let repr = representation_welfare(&spec, &decision);
    let diff = (brute - repr).abs();
    let moments = mte_welfare::dgp::population_moments(&spec);

    let mut rows: Vec<(String, f64)> = vec![
        ("e_y0".into(), moments.e_y0),
        ("brute_force".into(), brute),
        ("representation".into(), repr),
        ("abs_difference".into(), diff),
    ];

    if let Some(descriptor) = &s.config.class {
        let class = resolve_class(descriptor, Some(&spec), None)?;
        let (_, w_best) = oracle_best(&spec, &class)?;
        let report = mte_welfare::welfare::population_report(&spec, &decision, &class)?;
        rows.push(("w_best".into(), w_best));
        rows.push(("regret".into(), report.regret));
    }

    if s.config.dataset.is_some() {
        let dataset = s.dataset()?;
        let value = empirical_welfare(
            &dataset,
            |x| true_integrated_mte(&spec, x).unwrap_or(f64::NAN),
            &decision,
        )?;
        if !value.is_finite() {
            return Err(Error::Domain(
                "dataset contains covariates outside the spec support".into(),
            ));
        }
        rows.push(("empirical".into(), value));
    }

    let mut text = io::provenance_line(&s.digest, s.seed.unwrap_or(0));
    text.push('\n');
    text.push_str("metric,value\n");
    for (name, value) in &rows {
        text.push_str(&format!("{name},{value:.16e}\n"));
    }
    let path = s.out_dir.join("welfare.csv");
    fs::write(&path, &text).map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))?;

    let p = s.precision;
    println!("welfare (spec {}):", spec.digest());
    for (name, value) in &rows {
        println!("  {name:<16} {value:.p$}");
    }
    println!("  wrote {}", path.display());
    Ok(0)
}

pub fn regret_cmd(s: &Session) -> Result<i32> {
    let mut experiment = s
        .config
        .experiment
        .clone()
        .ok_or_else(|| Error::Config("regret requires an `experiment` block".into()))?;
    if let Some(seed) = s.seed {
        experiment.master_seed = seed;
    }
    let curve = harness::run(&experiment)?;
    let path = s.out_dir.join("regret.csv");
    io::write_regret_curve(&curve, &s.digest, experiment.master_seed, &path)?;

    let p = s.precision;
    println!(
        "regret: rule {} over {} specs, R={}",
        serde_json::to_string(&experiment.rule).expect("enum"),
        experiment.dgp_family.len(),
        experiment.replications
    );
    for wc in &curve.worst_case {
        println!(
            "  n={:<6} worst-case regret {:.p$}  sqrt(n)-scaled {:.p$}",
            wc.n, wc.regret, wc.scaled
        );
    }
    match &curve.rate {
        Some(rate) => println!(
            "  fitted log-log slope {:.3} (stderr {:.3}, {} points, {} zero excluded)",
            rate.slope, rate.std_error, rate.points_used, rate.excluded_zero
        ),
        None => println!("  rate unfittable: fewer than 3 sample sizes with positive regret"),
    }
    println!("  wrote {}", path.display());
    Ok(0)
}
