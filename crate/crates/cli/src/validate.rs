//! The `validate` command: a self-contained suite of identity and sanity
//! checks run against the configured spec (reference spec by default).
//!
//! Each check exercises one load-bearing piece of the library from the
//! outside — the welfare representation, the selection normalization, the
//! regression machinery, the endogeneity-bias contrast, the rule identities,
//! and the argmax solvers — and prints one PASS/FAIL line. Any failure makes
//! the command exit with the invariant-violation code.

use std::collections::BTreeSet;
use std::fs;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use mte_welfare::dgp::{
    normalize_selection, simulate, true_integrated_mte, DgpSpec, LatentFamily,
    LatentSelectionSpec,
};
use mte_welfare::error::{Error, Result};
use mte_welfare::estimator::{
    build_design, fit_theta, integrated_kernel, normal_equation_residual, population_theta,
    ThetaEstimate,
};
use mte_welfare::linalg::{ks_uniform, mean, sample_sd};
use mte_welfare::policy::{
    argmax_over_class, contains, reference, ClassShape, DecisionSet, DecisionShape, PolicyClass,
    Point, Scope, ThresholdDir,
};
use mte_welfare::propensity::{fit_linear, Basis, PropensityModel};
use mte_welfare::rules::{
    bayes_rule, ewm_hybrid, ewm_known, fit_posterior, plugin_rule, CellDistribution, PosteriorSpec,
};
use mte_welfare::seed::stream_rng;
use mte_welfare::welfare::{brute_force_welfare, naive_kernel, representation_welfare};
use mte_welfare::io;

use crate::commands::Session;

/// Base seed for the suite when the session does not provide one.
const VALIDATE_SEED: u64 = 0x7661_6c69;

pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Fail a check with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(Error::Invariant(format!($($arg)+)));
        }
    };
}

pub fn run_checks(spec: &DgpSpec, seed: u64) -> Vec<CheckOutcome> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Result<String>>)> = vec![
        ("theorem1_equivalence", Box::new({
            let spec = spec.clone();
            move || theorem1_equivalence(&spec)
        })),
        ("lemma1_normalization", Box::new(move || lemma1_normalization(seed))),
        ("ols_machinery", Box::new({
            let spec = spec.clone();
            move || ols_machinery(&spec, seed)
        })),
        ("endogeneity_bias", Box::new({
            let spec = spec.clone();
            move || endogeneity_bias(&spec, seed)
        })),
        ("rule_identities", Box::new({
            let spec = spec.clone();
            move || rule_identities(&spec, seed)
        })),
        ("solver_exactness", Box::new(move || solver_exactness(seed))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let start = std::time::Instant::now();
            let result = f();
            let elapsed = start.elapsed().as_secs_f64();
            match result {
                Ok(detail) => CheckOutcome {
                    name,
                    pass: true,
                    detail: format!("{detail} [{elapsed:.2}s]"),
                },
                Err(e) => CheckOutcome {
                    name,
                    pass: false,
                    detail: format!("{e} [{elapsed:.2}s]"),
                },
            }
        })
        .collect()
}

pub fn validate_cmd(s: &Session) -> Result<i32> {
    let spec = s.spec();
    let seed = s.seed.unwrap_or(VALIDATE_SEED);
    let outcomes = run_checks(&spec, seed);

    let mut report = io::provenance_line(&s.digest, seed);
    report.push('\n');
    for o in &outcomes {
        let line = format!(
            "{} {} — {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    let summary = format!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    println!("{summary}");
    report.push_str(&summary);
    report.push('\n');

    let path = s.out_dir.join("validate.txt");
    fs::write(&path, report)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))?;

    Ok(if failed == 0 { 0 } else { 4 })
}

/// Check 1: `W(G) = E[Y0] + Σ_cell P(cell)·1{cell ∈ G}·x'Δβ` agrees with the
/// brute-force double integral on every cell subset, for the configured spec
/// and two heterogeneity variants.
fn theorem1_equivalence(base: &DgpSpec) -> Result<String> {
    let mut flat = base.clone();
    flat.rho1 = flat.rho0;
    let mut steep = base.clone();
    steep.rho1 = steep.rho0 + 2.0;

    let mut worst = 0.0f64;
    let mut subsets = 0usize;
    for spec in [base, &flat, &steep] {
        spec.validate()?;
        let cells: Vec<Point> = spec.x_support.iter().map(|s| Point(s.x.clone())).collect();
        let m = cells.len();
        ensure!(m <= 16, "support too large for subset enumeration: {m}");
        for mask in 0u32..(1 << m) {
            let members: BTreeSet<Point> = cells
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| p.clone())
                .collect();
            let g = DecisionSet {
                scope: Scope::XOnly,
                shape: DecisionShape::CellSet { members },
            };
            let diff = (brute_force_welfare(spec, &g) - representation_welfare(spec, &g)).abs();
            worst = worst.max(diff);
            subsets += 1;
        }
    }
    ensure!(
        worst <= 1e-9,
        "representation mismatch: max |brute − representation| = {worst:.3e} over {subsets} subsets"
    );
    Ok(format!(
        "max |brute − representation| = {worst:.1e} over {subsets} subsets, 3 specs"
    ))
}

/// Check 2: normalizing a latent selection model preserves the selection
/// indicator draw by draw and maps the latent to an exact Uniform(0,1).
fn lemma1_normalization(seed: u64) -> Result<String> {
    const DRAWS: usize = 100_000;
    let models = [
        (LatentSelectionSpec::new(LatentFamily::Exponential { rate: 1.0 }, vec![1.0])?, "exp(1)"),
        (
            LatentSelectionSpec::new(LatentFamily::Normal { mean: 0.0, sd: 1.0 }, vec![0.5])?,
            "normal(0,1)",
        ),
    ];

    let mut worst_ks = 0.0f64;
    for (mi, (latent, label)) in models.iter().enumerate() {
        let (nu, map) = normalize_selection(latent, 0.0)?;
        ensure!(
            (0.0..=1.0).contains(&nu),
            "{label}: normalized propensity {nu} outside [0,1]"
        );
        let nu_tilde = latent.nu_tilde[0];
        let mut rng = stream_rng(seed, &[2, mi as u64]);
        let mut mapped = Vec::with_capacity(DRAWS);
        for i in 0..DRAWS {
            let u_tilde: f64 = match latent.family {
                LatentFamily::Exponential { rate } => {
                    Exp::new(rate).expect("validated").sample(&mut rng)
                }
                LatentFamily::Normal { mean, sd } => {
                    mean + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                }
                LatentFamily::Uniform { lo, hi } => rng.random_range(lo..hi),
            };
            let u = map.apply(u_tilde);
            ensure!(
                (nu_tilde >= u_tilde) == (nu >= u),
                "{label}: draw {i} flips the selection indicator (ũ = {u_tilde}, u = {u})"
            );
            mapped.push(u);
        }
        let ks = ks_uniform(&mapped);
        ensure!(ks <= 0.01, "{label}: KS distance {ks:.4} > 0.01 after normalization");
        worst_ks = worst_ks.max(ks);
    }
    Ok(format!(
        "indicator preserved on {DRAWS} draws × 2 families; max KS = {worst_ks:.4}"
    ))
}

/// Check 3: the sieve regression solves its normal equations, recovers a
/// planted coefficient vector exactly, and its error shrinks like √n.
fn ols_machinery(spec: &DgpSpec, seed: u64) -> Result<String> {
    let dim = spec.beta0.len();
    let theta_pop = population_theta(spec, 2)?;

    // (a) Normal equations on a fitted-propensity design.
    let dataset = simulate(spec, 2000, seed.wrapping_add(31), false);
    let model = fit_linear(&dataset, Basis::default_for_dim(dim))?;
    let design = build_design(&dataset, &model, 2)?;
    let theta = fit_theta(&design, &dataset.ys())?;
    let residual = normal_equation_residual(&design, &dataset.ys(), &theta);
    ensure!(residual <= 1e-8, "normal-equation residual {residual:.3e} > 1e-8");

    // (b) Noise-free recovery of a planted theta through the same design.
    let planted = theta_pop.theta();
    let y_exact: Vec<f64> = design
        .iter()
        .map(|row| row.values.iter().zip(&planted).map(|(v, t)| v * t).sum())
        .collect();
    let refit = fit_theta(&design, &y_exact)?;
    let worst = refit
        .theta()
        .iter()
        .zip(&planted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure!(worst <= 1e-8, "planted theta off by {worst:.3e} > 1e-8");

    // (c) Root-n rate: RMSE ratio between n and 4n near 1/2.
    let oracle = PropensityModel::oracle(spec);
    let pop = theta_pop.theta();
    let mut sq = [0.0f64; 2];
    const REPS: usize = 300;
    for rep in 0..REPS {
        for (ni, n) in [1000usize, 4000].into_iter().enumerate() {
            let data = simulate(spec, n, seed.wrapping_add(100 + (rep * 2 + ni) as u64), false);
            let des = build_design(&data, &oracle, 2)?;
            let est = fit_theta(&des, &data.ys())?;
            let err: f64 = est
                .theta()
                .iter()
                .zip(&pop)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sq[ni] += err;
        }
    }
    let rmse: Vec<f64> = sq.iter().map(|s| (s / REPS as f64).sqrt()).collect();
    let ratio = rmse[1] / rmse[0];
    ensure!(
        (0.4..=0.65).contains(&ratio),
        "RMSE(4000)/RMSE(1000) = {ratio:.3} outside [0.40, 0.65] (no √n decay)"
    );
    Ok(format!(
        "residual {residual:.1e}; planted recovery {worst:.1e}; RMSE ratio {ratio:.3}"
    ))
}

/// Check 4: on a middle support cell the naive arm contrast is biased (its
/// Monte Carlo mean sits several standard errors from the truth) while the
/// sieve kernel estimate is not.
fn endogeneity_bias(spec: &DgpSpec, seed: u64) -> Result<String> {
    const REPS: usize = 40;
    const N: usize = 100_000;
    let dim = spec.beta0.len();
    let cell = spec.x_support[spec.x_support.len() / 2].x.clone();
    let truth = true_integrated_mte(spec, &cell)?;

    let mut naive_vals = Vec::with_capacity(REPS);
    let mut kernel_vals = Vec::with_capacity(REPS);
    for rep in 0..REPS {
        let data = simulate(spec, N, seed.wrapping_add(4000 + rep as u64), false);
        naive_vals.push(naive_kernel(&data, &cell)?);
        let model = fit_linear(&data, Basis::default_for_dim(dim))?;
        let design = build_design(&data, &model, 2)?;
        let theta = fit_theta(&design, &data.ys())?;
        kernel_vals.push(integrated_kernel(&theta, &cell));
    }

    let reps = REPS as f64;
    let naive_mean = mean(&naive_vals);
    let naive_se = sample_sd(&naive_vals) / reps.sqrt();
    let kernel_mean = mean(&kernel_vals);
    let kernel_se = sample_sd(&kernel_vals) / reps.sqrt();

    let naive_gap = (naive_mean - truth).abs();
    let kernel_gap = (kernel_mean - truth).abs();
    ensure!(
        naive_gap > 3.0 * naive_se,
        "naive contrast not detectably biased: |{naive_mean:.4} − {truth:.4}| = {naive_gap:.4} ≤ 3·{naive_se:.4}"
    );
    ensure!(
        kernel_gap <= 3.0 * kernel_se,
        "kernel estimate biased: |{kernel_mean:.4} − {truth:.4}| = {kernel_gap:.4} > 3·{kernel_se:.4}"
    );
    Ok(format!(
        "cell {cell:?}: naive off by {naive_gap:.3} (se {naive_se:.4}), kernel off by {kernel_gap:.4} (se {kernel_se:.4})"
    ))
}

/// Check 5: the hybrid rule at the true theta reproduces the known-kernel
/// rule, and the Bayes rule equals the plug-in rule at the posterior mean.
fn rule_identities(spec: &DgpSpec, seed: u64) -> Result<String> {
    let dim = spec.beta0.len();
    let cells: Vec<Point> = spec.x_support.iter().map(|s| Point(s.x.clone())).collect();
    let class = PolicyClass {
        scope: Scope::XOnly,
        shape: ClassShape::PowerSet { cells },
    };
    class.validate()?;
    let theta_true = population_theta(spec, 2)?;

    const HYBRID_TRIALS: usize = 100;
    for t in 0..HYBRID_TRIALS {
        let data = simulate(spec, 500, seed.wrapping_add(5000 + t as u64), false);
        let hybrid = ewm_hybrid(&data, &theta_true, &class)?;
        let known = ewm_known(&data, spec, &class)?;
        ensure!(
            hybrid == known,
            "trial {t}: hybrid at the true theta differs from the known-kernel rule"
        );
    }

    const BAYES_TRIALS: usize = 50;
    let mut rng = stream_rng(seed, &[5]);
    for t in 0..BAYES_TRIALS {
        let data = simulate(spec, 400, seed.wrapping_add(6000 + t as u64), false);
        let model = fit_linear(&data, Basis::default_for_dim(dim))?;
        let design = build_design(&data, &model, 2)?;
        let pspec = PosteriorSpec {
            prior_mean: (0..2 * dim + 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
            tau_prior: [0.1, 1.0, 10.0][t % 3],
            noise_sd: 0.5,
            draws: 200,
        };
        let bayes = bayes_rule(&data, &design, &pspec, &class)?;
        let posterior = fit_posterior(&design, &data.ys(), &pspec)?;
        let at_mean = ThetaEstimate::from_theta(&posterior.mean, dim, 2)?;
        let plugin = plugin_rule(&CellDistribution::empirical(&data)?, &at_mean, &class)?;
        ensure!(
            bayes == plugin,
            "trial {t}: Bayes rule differs from plug-in at the posterior mean"
        );
    }
    Ok(format!(
        "hybrid ≡ known on {HYBRID_TRIALS} datasets; Bayes ≡ plug-in at posterior mean on {BAYES_TRIALS} fuzzed priors"
    ))
}

/// Check 6: the production argmax matches exhaustive reference solvers
/// exactly on random integer-grid instances with dyadic scores.
fn solver_exactness(seed: u64) -> Result<String> {
    const INSTANCES: usize = 200;
    let variants: [(&str, u64); 5] = [
        ("power_set", 0),
        ("threshold_geq", 1),
        ("threshold_leq", 2),
        ("interval", 3),
        ("linear_score", 4),
    ];

    for (label, vi) in variants {
        let mut rng = stream_rng(seed, &[6, vi]);
        for inst in 0..INSTANCES {
            let m = rng.random_range(1..=12usize);
            let mut points = Vec::with_capacity(m);
            let mut scores = Vec::with_capacity(m);
            for _ in 0..m {
                let p = vec![
                    rng.random_range(-3i32..=3) as f64,
                    rng.random_range(-3i32..=3) as f64,
                ];
                points.push(Point(p));
                scores.push(rng.random_range(-16i32..=16) as f64 / 8.0);
            }
            let coord = rng.random_range(0..2usize);

            let (shape, brute) = match label {
                "power_set" => {
                    let (cells, _) = reference::aggregate(&points, &scores);
                    (
                        ClassShape::PowerSet { cells },
                        reference::brute_power_set(&points, &scores),
                    )
                }
                "threshold_geq" => (
                    ClassShape::Threshold { coord, dir: ThresholdDir::Geq },
                    reference::brute_threshold(&points, &scores, coord, ThresholdDir::Geq),
                ),
                "threshold_leq" => (
                    ClassShape::Threshold { coord, dir: ThresholdDir::Leq },
                    reference::brute_threshold(&points, &scores, coord, ThresholdDir::Leq),
                ),
                "interval" => (
                    ClassShape::Interval { coord },
                    reference::brute_interval(&points, &scores, coord),
                ),
                "linear_score" => (
                    ClassShape::LinearScore { coords: vec![0, 1] },
                    reference::brute_linear(&points, &scores, &[0, 1]),
                ),
                _ => unreachable!(),
            };
            let class = PolicyClass { scope: Scope::XOnly, shape };
            let solved = argmax_over_class(&class, &points, &scores)?;
            ensure!(
                solved.objective == brute,
                "{label} instance {inst}: production objective {} ≠ reference {brute}",
                solved.objective
            );
            // Recompute the objective from the returned set: exact because the
            // dyadic scores make every partial sum representable.
            let (cells, cell_scores) = reference::aggregate(&points, &scores);
            let replay: f64 = cells
                .iter()
                .zip(&cell_scores)
                .filter(|(p, _)| contains(&solved.decision, p))
                .map(|(_, s)| s)
                .sum();
            ensure!(
                replay == solved.objective,
                "{label} instance {inst}: returned set scores {replay}, solver claimed {}",
                solved.objective
            );
        }
    }
    Ok(format!(
        "5 class variants × {INSTANCES} integer-grid instances match the reference solvers exactly"
    ))
}
