//! Policy classes and exact score-weighted set selection.
//!
//! Every decision rule in this crate reduces to the same optimization: given
//! support points `z_i` with real scores `s_i`, find the member `G` of a
//! structured class `𝒢` maximizing `Σ_i s_i·1{z_i ∈ G}`. The classes are
//! small-VC families over a discrete support — power set, one-sided
//! threshold, interval, and low-dimensional halfspaces — and each admits an
//! exact solver (no heuristics), which is what lets tests compare against
//! brute-force enumeration bit for bit.
//!
//! Determinism canon for ties: among maximizers, return the set with the
//! fewest members, then the lexicographically smallest description. Cells
//! scoring exactly zero are excluded (strict `> 0` rule), consistent with
//! that canon.
//!
//! Policies condition on covariates only (`Scope::XOnly`, the default) or on
//! the full `(z0, x)` vector (`Scope::FullZ`). Points are plain `f64`
//! vectors; `XOnly` points are the covariate vector itself (including the
//! leading constant), `FullZ` points are `(z0, x…)` — coordinate indices in
//! threshold/interval/linear-score classes refer to these layouts.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A support point with total (lexicographic `total_cmp`) ordering, so that
/// sets of points have canonical sorted representations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Point {}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                non_eq => return non_eq,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// What part of `z = (z0, x)` a policy may condition on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Covariate-only policies (the default): points are `x`.
    #[default]
    XOnly,
    /// Full-instrument policies: points are `(z0, x…)`.
    FullZ,
}

impl Scope {
    /// Project an observation's `(z0, x)` to this scope's point layout.
    pub fn project(&self, z0: f64, x: &[f64]) -> Point {
        match self {
            Scope::XOnly => Point(x.to_vec()),
            Scope::FullZ => {
                let mut v = Vec::with_capacity(x.len() + 1);
                v.push(z0);
                v.extend_from_slice(x);
                Point(v)
            }
        }
    }
}

/// Direction of a one-sided threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdDir {
    /// Treat `point[coord] ≥ cut`.
    Geq,
    /// Treat `point[coord] ≤ cut`.
    Leq,
}

/// The structural form of a policy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassShape {
    /// All subsets of an explicit list of cells. VC dimension = #cells.
    PowerSet { cells: Vec<Point> },
    /// One-sided thresholds on a coordinate. VC dimension 1.
    Threshold { coord: usize, dir: ThresholdDir },
    /// Closed intervals on a coordinate. VC dimension 2.
    Interval { coord: usize },
    /// Halfspaces `w₀ + Σ_j w_{j+1}·point[coords[j]] > 0` with an intercept.
    /// VC dimension = #coords + 1. Exact enumeration limits #coords to 3.
    LinearScore { coords: Vec<usize> },
}

/// A policy class: a scope plus a structural form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    #[serde(default)]
    pub scope: Scope,
    pub shape: ClassShape,
}

impl PolicyClass {
    pub fn validate(&self) -> Result<()> {
        match &self.shape {
            ClassShape::PowerSet { cells } => {
                if cells.is_empty() {
                    return Err(Error::Config("power-set class over zero cells".into()));
                }
                let unique: BTreeSet<&Point> = cells.iter().collect();
                if unique.len() != cells.len() {
                    return Err(Error::Config("power-set class lists a cell twice".into()));
                }
            }
            ClassShape::LinearScore { coords } => {
                if coords.is_empty() {
                    return Err(Error::Config("linear-score class needs >= 1 coordinate".into()));
                }
                if coords.len() > 3 {
                    return Err(Error::UnsupportedDimension { dim: coords.len() });
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// VC dimension of the class as represented.
pub fn vc_dimension(class: &PolicyClass) -> usize {
    match &class.shape {
        ClassShape::PowerSet { cells } => cells.len(),
        ClassShape::Threshold { .. } => 1,
        ClassShape::Interval { .. } => 2,
        ClassShape::LinearScore { coords } => coords.len() + 1,
    }
}

/// The concrete description of one decision set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionShape {
    /// Explicit cell membership (power-set classes).
    CellSet { members: BTreeSet<Point> },
    /// `{p : p[coord] ≥ cut}` (or `≤` for `Leq`); `None` is the empty set.
    Threshold {
        coord: usize,
        dir: ThresholdDir,
        cut: Option<f64>,
    },
    /// `{p : lo ≤ p[coord] ≤ hi}`; `None` is the empty set.
    Interval {
        coord: usize,
        bounds: Option<(f64, f64)>,
    },
    /// `{p : w₀ + Σ_j w_{j+1}·p[coords[j]] > 0}` (strict).
    Halfspace { coords: Vec<usize>, weights: Vec<f64> },
}

/// A decision set `G`: treat exactly the points it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSet {
    #[serde(default)]
    pub scope: Scope,
    pub shape: DecisionShape,
}

impl DecisionSet {
    /// The canonical empty set of a class.
    pub fn empty(class: &PolicyClass) -> Self {
        let shape = match &class.shape {
            ClassShape::PowerSet { .. } => DecisionShape::CellSet { members: BTreeSet::new() },
            ClassShape::Threshold { coord, dir } => DecisionShape::Threshold {
                coord: *coord,
                dir: *dir,
                cut: None,
            },
            ClassShape::Interval { coord } => DecisionShape::Interval {
                coord: *coord,
                bounds: None,
            },
            ClassShape::LinearScore { coords } => DecisionShape::Halfspace {
                coords: coords.clone(),
                weights: all_out(coords.len()),
            },
        };
        DecisionSet {
            scope: class.scope,
            shape,
        }
    }
}

/// Membership test `1{point ∈ G}`.
pub fn contains(g: &DecisionSet, point: &Point) -> bool {
    match &g.shape {
        DecisionShape::CellSet { members } => members.contains(point),
        DecisionShape::Threshold { coord, dir, cut } => match cut {
            None => false,
            Some(c) => match dir {
                ThresholdDir::Geq => point.0[*coord] >= *c,
                ThresholdDir::Leq => point.0[*coord] <= *c,
            },
        },
        DecisionShape::Interval { coord, bounds } => match bounds {
            None => false,
            Some((lo, hi)) => {
                let v = point.0[*coord];
                *lo <= v && v <= *hi
            }
        },
        DecisionShape::Halfspace { coords, weights } => {
            let mut s = weights[0];
            for (w, c) in weights[1..].iter().zip(coords) {
                s += w * point.0[*c];
            }
            s > 0.0
        }
    }
}

/// Membership of an observation `(z0, x)` after scope projection.
pub fn contains_z(g: &DecisionSet, z0: f64, x: &[f64]) -> bool {
    contains(g, &g.scope.project(z0, x))
}

/// A solved selection problem: the maximizing set and its objective value.
#[derive(Debug, Clone)]
pub struct ArgmaxResult {
    pub decision: DecisionSet,
    pub objective: f64,
}

/// Exact maximization of `Σ_i scores[i]·1{points[i] ∈ G}` over the class.
///
/// Scores of duplicate points are aggregated before optimization, so the
/// caller may pass one entry per observation.
pub fn argmax_over_class(
    class: &PolicyClass,
    points: &[Point],
    scores: &[f64],
) -> Result<ArgmaxResult> {
    if points.len() != scores.len() {
        return Err(Error::Data(format!(
            "{} points but {} scores",
            points.len(),
            scores.len()
        )));
    }
    class.validate()?;

    // Aggregate duplicate points. BTreeMap fixes a canonical point order for
    // everything downstream (summation order, tie-breaking).
    let mut agg: BTreeMap<Point, f64> = BTreeMap::new();
    for (p, s) in points.iter().zip(scores) {
        *agg.entry(p.clone()).or_insert(0.0) += s;
    }

    match &class.shape {
        ClassShape::PowerSet { cells } => solve_power_set(class, cells, &agg),
        ClassShape::Threshold { coord, dir } => Ok(solve_threshold(class, *coord, *dir, &agg)),
        ClassShape::Interval { coord } => Ok(solve_interval(class, *coord, &agg)),
        ClassShape::LinearScore { coords } => Ok(solve_linear_score(class, coords, &agg)),
    }
}

fn solve_power_set(
    class: &PolicyClass,
    cells: &[Point],
    agg: &BTreeMap<Point, f64>,
) -> Result<ArgmaxResult> {
    for p in agg.keys() {
        if !cells.contains(p) {
            return Err(Error::Domain(format!(
                "scored point {:?} is not a cell of the power-set class",
                p.0
            )));
        }
    }
    // Include exactly the cells with strictly positive aggregated score.
    let mut members = BTreeSet::new();
    let mut objective = 0.0;
    for (p, s) in agg {
        if *s > 0.0 {
            members.insert(p.clone());
            objective += s;
        }
    }
    Ok(ArgmaxResult {
        decision: DecisionSet {
            scope: class.scope,
            shape: DecisionShape::CellSet { members },
        },
        objective,
    })
}

/// Unique values of `coord` over the aggregated points (ascending), each with
/// its total score.
fn aggregate_by_coord(agg: &BTreeMap<Point, f64>, coord: usize) -> Vec<(f64, f64)> {
    let mut values: Vec<f64> = agg.keys().map(|p| p.0[coord]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
    let mut out: Vec<(f64, f64)> = values.iter().map(|v| (*v, 0.0)).collect();
    for (p, s) in agg {
        let idx = values
            .binary_search_by(|probe| probe.total_cmp(&p.0[coord]))
            .expect("value present");
        out[idx].1 += s;
    }
    out
}

fn solve_threshold(
    class: &PolicyClass,
    coord: usize,
    dir: ThresholdDir,
    agg: &BTreeMap<Point, f64>,
) -> ArgmaxResult {
    let value_scores = aggregate_by_coord(agg, coord);
    let m = value_scores.len();

    // Candidate cuts sit at attained values; distinct cuts select distinct
    // numbers of values, so (objective, member count) is already a total
    // tie-break. The empty set (cut = None) is the incumbent at objective 0.
    let mut best_obj = 0.0;
    let mut best_cut: Option<f64> = None;
    let mut best_count = 0usize;
    let mut consider = |obj: f64, cut: f64, count: usize| {
        if obj > best_obj || (obj == best_obj && count < best_count) {
            best_obj = obj;
            best_cut = Some(cut);
            best_count = count;
        }
    };
    match dir {
        ThresholdDir::Geq => {
            let mut suffix = 0.0;
            for i in (0..m).rev() {
                suffix += value_scores[i].1;
                consider(suffix, value_scores[i].0, m - i);
            }
        }
        ThresholdDir::Leq => {
            let mut prefix = 0.0;
            for (i, (v, s)) in value_scores.iter().enumerate() {
                prefix += s;
                consider(prefix, *v, i + 1);
            }
        }
    }
    ArgmaxResult {
        decision: DecisionSet {
            scope: class.scope,
            shape: DecisionShape::Threshold {
                coord,
                dir,
                cut: best_cut,
            },
        },
        objective: best_obj,
    }
}

fn solve_interval(class: &PolicyClass, coord: usize, agg: &BTreeMap<Point, f64>) -> ArgmaxResult {
    let value_scores = aggregate_by_coord(agg, coord);
    let m = value_scores.len();

    // All O(m²) contiguous runs over the sorted unique values, plus the
    // empty set (bounds = None) as the incumbent at objective 0.
    let mut best_obj = 0.0;
    let mut best: Option<(f64, f64)> = None;
    let mut best_count = 0usize;
    for i in 0..m {
        let mut run = 0.0;
        for j in i..m {
            run += value_scores[j].1;
            let count = j - i + 1;
            let lo = value_scores[i].0;
            let hi = value_scores[j].0;
            let better = run > best_obj
                || (run == best_obj
                    && (count < best_count
                        || (count == best_count
                            && best.is_some_and(|(blo, bhi)| {
                                lo.total_cmp(&blo).then(hi.total_cmp(&bhi)) == Ordering::Less
                            }))));
            if better {
                best_obj = run;
                best = Some((lo, hi));
                best_count = count;
            }
        }
    }
    ArgmaxResult {
        decision: DecisionSet {
            scope: class.scope,
            shape: DecisionShape::Interval { coord, bounds: best },
        },
        objective: best_obj,
    }
}

/// Determinant of a square matrix of size ≤ 3 given as rows.
fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("linear-score dimension is capped at 3"),
    }
}

/// Generalized cross product: the vector orthogonal to all `k` rows of a
/// `k × (k+1)` matrix, by cofactor expansion. `None` when the rows are
/// linearly dependent (the subset does not pin a hyperplane).
fn cross_nullspace(rows: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = rows.len();
    let mut v = vec![0.0; k + 1];
    let mut nonzero = false;
    for (j, vj) in v.iter_mut().enumerate() {
        let minor: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, x)| *x)
                    .collect()
            })
            .collect();
        let d = det(&minor);
        *vj = if j % 2 == 0 { d } else { -d };
        if *vj != 0.0 {
            nonzero = true;
        }
    }
    nonzero.then_some(v)
}

/// All index subsets of size exactly `k` from `0..n`, lexicographic order.
fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut Vec::new(), f);
}

fn all_out(d: usize) -> Vec<f64> {
    let mut w = vec![0.0; d + 1];
    w[0] = -1.0;
    w
}

fn all_in(d: usize) -> Vec<f64> {
    let mut w = vec![0.0; d + 1];
    w[0] = 1.0;
    w
}

fn margin(w: &[f64], q: &Point) -> f64 {
    let mut s = w[0];
    for (wi, qi) in w[1..].iter().zip(&q.0) {
        s += wi * qi;
    }
    s
}

/// A copy of `w` with the intercept raised by half the smallest strictly
/// negative margin's magnitude, so that boundary points (margin exactly 0)
/// fall strictly inside while strictly-outside points stay outside. This
/// closes the candidate family under boundary inclusion, which strict `>`
/// membership would otherwise forbid.
fn include_boundary(w: &[f64], qs: &[&Point]) -> Vec<f64> {
    let mut min_neg = f64::INFINITY;
    for q in qs {
        let m = margin(w, q);
        if m < 0.0 {
            min_neg = min_neg.min(-m);
        }
    }
    let bump = if min_neg.is_finite() { min_neg / 2.0 } else { 1.0 };
    let mut w2 = w.to_vec();
    w2[0] += bump;
    w2
}

/// Scale weights by a power of two so the largest magnitude lies in
/// `(0.5, 1]`. Power-of-two scaling is exact in binary floating point, so
/// membership (the sign of every margin) cannot change.
fn normalize_weights(w: &[f64]) -> Vec<f64> {
    let max = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if max == 0.0 || !max.is_finite() {
        return w.to_vec();
    }
    let scale = 2f64.powi(-max.log2().ceil() as i32);
    w.iter().map(|x| x * scale).collect()
}

/// Exact halfspace maximization by candidate enumeration.
///
/// Candidates: the all-in / all-out constants, plus — for every subset of
/// `k ≤ d` points and every choice of `d − k` coordinates to suppress (their
/// weights pinned to zero) — the unique hyperplane through the subset in the
/// surviving coordinates, in both orientations, each with a boundary-included
/// variant. Suppressed-coordinate candidates are what give axis-aligned cuts
/// through degenerate (collinear / coincident-coordinate) supports; for
/// points in general position the `k = d` subsets alone realize every
/// achievable inclusion pattern.
fn solve_linear_score(
    class: &PolicyClass,
    coords: &[usize],
    agg: &BTreeMap<Point, f64>,
) -> ArgmaxResult {
    let d = coords.len();
    // Project to the class coordinates; the projection can merge points, so
    // aggregate again.
    let mut proj: BTreeMap<Point, f64> = BTreeMap::new();
    for (p, s) in agg {
        let q = Point(coords.iter().map(|c| p.0[*c]).collect());
        *proj.entry(q).or_insert(0.0) += s;
    }
    let qs: Vec<&Point> = proj.keys().collect();
    let ss: Vec<f64> = proj.values().cloned().collect();
    let n = qs.len();

    let mut candidates: Vec<Vec<f64>> = vec![all_out(d), all_in(d)];
    for k in 1..=d.min(n) {
        for_each_combination(n, k, &mut |pts_idx| {
            for_each_combination(d, d - k, &mut |dropped| {
                let active: Vec<usize> = (0..d).filter(|c| !dropped.contains(c)).collect();
                let rows: Vec<Vec<f64>> = pts_idx
                    .iter()
                    .map(|&i| {
                        let mut r = Vec::with_capacity(k + 1);
                        r.push(1.0);
                        r.extend(active.iter().map(|&c| qs[i].0[c]));
                        r
                    })
                    .collect();
                if let Some(v) = cross_nullspace(&rows) {
                    let mut w = vec![0.0; d + 1];
                    w[0] = v[0];
                    for (slot, &c) in active.iter().enumerate() {
                        w[c + 1] = v[slot + 1];
                    }
                    for orient in [1.0, -1.0] {
                        let wo: Vec<f64> = w.iter().map(|x| x * orient).collect();
                        candidates.push(include_boundary(&wo, &qs));
                        candidates.push(wo);
                    }
                }
            });
        });
    }

    // Evaluate every candidate; tie-break by member count, then by the
    // membership pattern in canonical point order.
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for w in &candidates {
        let members: Vec<usize> = (0..n).filter(|&i| margin(w, qs[i]) > 0.0).collect();
        let obj: f64 = members.iter().map(|&i| ss[i]).sum();
        let better = match &best {
            None => true,
            Some((bobj, bmem, _)) => {
                obj > *bobj
                    || (obj == *bobj
                        && (members.len() < bmem.len()
                            || (members.len() == bmem.len() && members < *bmem)))
            }
        };
        if better {
            best = Some((obj, members, normalize_weights(w)));
        }
    }
    let (objective, _, weights) = best.expect("constant candidates always present");

    ArgmaxResult {
        decision: DecisionSet {
            scope: class.scope,
            shape: DecisionShape::Halfspace {
                coords: coords.to_vec(),
                weights,
            },
        },
        objective,
    }
}

pub mod reference {
    //! Exhaustive reference solvers for the class argmax, used by the fuzz
    //! tests and by the CLI validation suite to cross-check the production
    //! solvers on random instances.
    //!
    //! They are written from the class definitions directly — subset
    //! enumeration, all cuts, all bound pairs, and hand-written hyperplane
    //! formulas — sharing no code with the production solvers. Callers are
    //! expected to put points on a small integer grid with scores that are
    //! small dyadic rationals; every margin and partial sum is then exact in
    //! `f64` and objective comparisons can demand exact equality.

    use std::collections::BTreeMap;

    use super::{Point, ThresholdDir};

    /// Collapse duplicate points, summing their scores (the same aggregation
    /// the production argmax performs).
    pub fn aggregate(points: &[Point], scores: &[f64]) -> (Vec<Point>, Vec<f64>) {
        let mut agg: BTreeMap<Point, f64> = BTreeMap::new();
        for (p, s) in points.iter().zip(scores) {
            *agg.entry(p.clone()).or_insert(0.0) += s;
        }
        (agg.keys().cloned().collect(), agg.values().cloned().collect())
    }

    /// Best objective over all subsets of the unique points (bitmask scan).
    pub fn brute_power_set(points: &[Point], scores: &[f64]) -> f64 {
        let (cells, cell_scores) = aggregate(points, scores);
        let m = cells.len();
        assert!(m <= 20, "bitmask enumeration is for small instances");
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << m) {
            let obj: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| cell_scores[i]).sum();
            best = best.max(obj);
        }
        best
    }

    /// Best objective over all threshold cuts (every observed value plus the
    /// empty set).
    pub fn brute_threshold(
        points: &[Point],
        scores: &[f64],
        coord: usize,
        dir: ThresholdDir,
    ) -> f64 {
        let (uniq, uscores) = aggregate(points, scores);
        let mut best = 0.0f64; // empty set
        for cut_holder in &uniq {
            let cut = cut_holder.0[coord];
            let obj: f64 = uniq
                .iter()
                .zip(&uscores)
                .filter(|(p, _)| match dir {
                    ThresholdDir::Geq => p.0[coord] >= cut,
                    ThresholdDir::Leq => p.0[coord] <= cut,
                })
                .map(|(_, s)| s)
                .sum();
            best = best.max(obj);
        }
        best
    }

    /// Best objective over all closed intervals with observed endpoints.
    pub fn brute_interval(points: &[Point], scores: &[f64], coord: usize) -> f64 {
        let (uniq, uscores) = aggregate(points, scores);
        let mut best = 0.0f64; // empty set
        for lo_holder in &uniq {
            for hi_holder in &uniq {
                let (lo, hi) = (lo_holder.0[coord], hi_holder.0[coord]);
                if lo > hi {
                    continue;
                }
                let obj: f64 = uniq
                    .iter()
                    .zip(&uscores)
                    .filter(|(p, _)| lo <= p.0[coord] && p.0[coord] <= hi)
                    .map(|(_, s)| s)
                    .sum();
                best = best.max(obj);
            }
        }
        best
    }

    /// Independent rebuild of the halfspace candidate family for d ≤ 2 with
    /// hand-written hyperplane formulas (no cofactor machinery). Panics on
    /// d > 2; the reference is only written for the fuzzed dimensions.
    pub fn brute_linear(points: &[Point], scores: &[f64], coords: &[usize]) -> f64 {
        let (uniq, uscores) = aggregate(points, scores);
        let qs: Vec<Vec<f64>> = uniq
            .iter()
            .map(|p| coords.iter().map(|c| p.0[*c]).collect())
            .collect();
        let d = coords.len();
        let n = qs.len();

        let mut cands: Vec<Vec<f64>> = Vec::new();
        let mut w_out = vec![0.0; d + 1];
        w_out[0] = -1.0;
        let mut w_in = vec![0.0; d + 1];
        w_in[0] = 1.0;
        cands.push(w_out);
        cands.push(w_in);

        match d {
            1 => {
                for q in &qs {
                    // Line through a: w0 + w1·x = 0 with w = (−a, 1).
                    cands.push(vec![-q[0], 1.0]);
                    cands.push(vec![q[0], -1.0]);
                }
            }
            2 => {
                for i in 0..n {
                    let (a, b) = (qs[i][0], qs[i][1]);
                    // Axis-aligned lines through one point.
                    cands.push(vec![-a, 1.0, 0.0]);
                    cands.push(vec![a, -1.0, 0.0]);
                    cands.push(vec![-b, 0.0, 1.0]);
                    cands.push(vec![b, 0.0, -1.0]);
                    for q in qs.iter().skip(i + 1) {
                        // Line through two points: normal ⟂ (q − p).
                        let (tx, ty) = (q[0] - a, q[1] - b);
                        let (nx, ny) = (-ty, tx);
                        let w0 = -(nx * a + ny * b);
                        if nx != 0.0 || ny != 0.0 {
                            cands.push(vec![w0, nx, ny]);
                            cands.push(vec![-w0, -nx, -ny]);
                        }
                    }
                }
            }
            _ => panic!("reference solver written for d <= 2"),
        }

        // Boundary-included variant of every candidate.
        let mut with_bumps = cands.clone();
        for w in &cands {
            let mut min_neg = f64::INFINITY;
            for q in &qs {
                let m = w[0] + w[1..].iter().zip(q).map(|(wi, qi)| wi * qi).sum::<f64>();
                if m < 0.0 {
                    min_neg = min_neg.min(-m);
                }
            }
            let mut w2 = w.clone();
            w2[0] += if min_neg.is_finite() { min_neg / 2.0 } else { 1.0 };
            with_bumps.push(w2);
        }

        let mut best = f64::NEG_INFINITY;
        for w in &with_bumps {
            let obj: f64 = qs
                .iter()
                .zip(&uscores)
                .filter(|(q, _)| {
                    w[0] + w[1..].iter().zip(q.iter()).map(|(wi, qi)| wi * qi).sum::<f64>() > 0.0
                })
                .map(|(_, s)| s)
                .sum();
            best = best.max(obj);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::reference::{aggregate, brute_interval, brute_linear, brute_power_set, brute_threshold};
    use super::*;
    use proptest::prelude::*;

    fn pts(vals: &[f64]) -> Vec<Point> {
        vals.iter().map(|v| Point(vec![1.0, *v])).collect()
    }

    fn class(shape: ClassShape) -> PolicyClass {
        PolicyClass {
            scope: Scope::XOnly,
            shape,
        }
    }

    #[test]
    fn contains_basics() {
        let empty = DecisionSet {
            scope: Scope::XOnly,
            shape: DecisionShape::CellSet { members: BTreeSet::new() },
        };
        assert!(!contains(&empty, &Point(vec![1.0, 0.0])));

        let thr = DecisionSet {
            scope: Scope::XOnly,
            shape: DecisionShape::Threshold {
                coord: 1,
                dir: ThresholdDir::Geq,
                cut: Some(0.5),
            },
        };
        assert!(contains(&thr, &Point(vec![1.0, 1.0])));
        assert!(!contains(&thr, &Point(vec![1.0, 0.0])));

        let iv = DecisionSet {
            scope: Scope::XOnly,
            shape: DecisionShape::Interval {
                coord: 1,
                bounds: Some((-0.5, 0.5)),
            },
        };
        assert!(!contains(&iv, &Point(vec![1.0, 1.0])));
        assert!(contains(&iv, &Point(vec![1.0, 0.0])));
    }

    #[test]
    fn vc_dimensions() {
        assert_eq!(vc_dimension(&class(ClassShape::PowerSet { cells: pts(&[-1.0, 0.0, 1.0]) })), 3);
        assert_eq!(vc_dimension(&class(ClassShape::Threshold { coord: 1, dir: ThresholdDir::Geq })), 1);
        assert_eq!(vc_dimension(&class(ClassShape::Interval { coord: 1 })), 2);
        assert_eq!(vc_dimension(&class(ClassShape::LinearScore { coords: vec![0, 1] })), 3);
        // Halfspaces on a line: VC 2.
        assert_eq!(vc_dimension(&class(ClassShape::LinearScore { coords: vec![1] })), 2);
    }

    #[test]
    fn power_set_sign_rule() {
        let cells = pts(&[-1.0, 0.0, 1.0]);
        let c = class(ClassShape::PowerSet { cells: cells.clone() });
        let res = argmax_over_class(&c, &cells, &[-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(res.objective, 2.5);
        match &res.decision.shape {
            DecisionShape::CellSet { members } => {
                assert_eq!(members.len(), 2);
                assert!(members.contains(&Point(vec![1.0, 0.0])));
                assert!(members.contains(&Point(vec![1.0, 1.0])));
            }
            other => panic!("unexpected shape {other:?}"),
        }

        // All-negative scores: exclusion dominates, empty set at objective 0.
        let res = argmax_over_class(&c, &cells, &[-1.0, -0.5, -2.0]).unwrap();
        assert_eq!(res.objective, 0.0);
        match &res.decision.shape {
            DecisionShape::CellSet { members } => assert!(members.is_empty()),
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn power_set_rejects_foreign_points() {
        let cells = pts(&[-1.0, 1.0]);
        let c = class(ClassShape::PowerSet { cells });
        let err = argmax_over_class(&c, &pts(&[0.0]), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn interval_picks_middle_run() {
        let c = class(ClassShape::Interval { coord: 1 });
        let points = pts(&[0.0, 1.0, 2.0, 3.0]);
        let res = argmax_over_class(&c, &points, &[-1.0, 2.0, 3.0, -1.0]).unwrap();
        assert_eq!(res.objective, 5.0);
        match res.decision.shape {
            DecisionShape::Interval { bounds: Some((lo, hi)), .. } => {
                assert_eq!((lo, hi), (1.0, 2.0));
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn threshold_scan() {
        let c = class(ClassShape::Threshold { coord: 1, dir: ThresholdDir::Geq });
        let points = pts(&[-1.0, 0.0, 1.0]);
        let res = argmax_over_class(&c, &points, &[-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(res.objective, 2.5);
        match res.decision.shape {
            DecisionShape::Threshold { cut: Some(cut), .. } => assert_eq!(cut, 0.0),
            other => panic!("unexpected shape {other:?}"),
        }
        // All negative: empty set.
        let res = argmax_over_class(&c, &points, &[-1.0, -0.5, -2.0]).unwrap();
        assert_eq!(res.objective, 0.0);
        assert!(matches!(res.decision.shape, DecisionShape::Threshold { cut: None, .. }));
    }

    #[test]
    fn linear_score_separates_positives() {
        let c = class(ClassShape::LinearScore { coords: vec![1] });
        let points = pts(&[-1.0, 0.0, 1.0]);
        let res = argmax_over_class(&c, &points, &[-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(res.objective, 2.5);
        for (p, want) in points.iter().zip([false, true, true]) {
            assert_eq!(contains(&res.decision, p), want);
        }
    }

    #[test]
    fn linear_score_on_degenerate_grid() {
        // Full-z points on the {0,1} × {−1,0,1} grid; the right column
        // (x₁ = 1) is the unique optimum and needs an axis-aligned cut.
        let c = PolicyClass {
            scope: Scope::FullZ,
            shape: ClassShape::LinearScore { coords: vec![0, 2] },
        };
        let mut points = Vec::new();
        let mut scores = Vec::new();
        for z0 in [0.0, 1.0] {
            for x1 in [-1.0, 0.0, 1.0] {
                points.push(Point(vec![z0, 1.0, x1]));
                scores.push(if x1 == 1.0 { 1.0 } else { -1.0 });
            }
        }
        let res = argmax_over_class(&c, &points, &scores).unwrap();
        assert_eq!(res.objective, 2.0);
        for (p, s) in points.iter().zip(&scores) {
            assert_eq!(contains(&res.decision, p), *s > 0.0, "{:?}", p.0);
        }
    }

    #[test]
    fn unsupported_dimension_errors() {
        let c = class(ClassShape::LinearScore { coords: vec![0, 1, 2, 3] });
        let points = vec![Point(vec![0.0, 0.0, 0.0, 0.0])];
        match argmax_over_class(&c, &points, &[1.0]) {
            Err(Error::UnsupportedDimension { dim: 4 }) => {}
            other => panic!("expected UnsupportedDimension, got {other:?}"),
        }
    }

    #[test]
    fn empty_set_objective_never_negative() {
        let classes = [
            class(ClassShape::PowerSet { cells: pts(&[-1.0, 0.0, 1.0]) }),
            class(ClassShape::Threshold { coord: 1, dir: ThresholdDir::Leq }),
            class(ClassShape::Interval { coord: 1 }),
            class(ClassShape::LinearScore { coords: vec![1] }),
        ];
        let points = pts(&[-1.0, 0.0, 1.0]);
        for c in &classes {
            let res = argmax_over_class(c, &points, &[-3.0, -1.0, -0.2]).unwrap();
            assert!(res.objective >= 0.0, "{c:?}");
        }
    }

    #[test]
    fn positive_scaling_leaves_canonical_set_unchanged() {
        // Powers of two keep the scaling exact in floating point, so the
        // invariance holds bit for bit, not just approximately.
        let classes = [
            class(ClassShape::PowerSet { cells: pts(&[-1.0, 0.0, 1.0]) }),
            class(ClassShape::Threshold { coord: 1, dir: ThresholdDir::Geq }),
            class(ClassShape::Interval { coord: 1 }),
            class(ClassShape::LinearScore { coords: vec![1] }),
        ];
        let points = pts(&[-1.0, 0.0, 1.0]);
        let scores = [-1.0, 0.5, 2.0];
        for c in &classes {
            let base = argmax_over_class(c, &points, &scores).unwrap();
            for pow in [-3i32, 1, 4] {
                let k = 2f64.powi(pow);
                let scaled: Vec<f64> = scores.iter().map(|s| s * k).collect();
                let res = argmax_over_class(c, &points, &scaled).unwrap();
                for p in &points {
                    assert_eq!(contains(&base.decision, p), contains(&res.decision, p), "{c:?}");
                }
            }
        }
    }

    #[test]
    fn full_z_scope_projects_instrument() {
        let g = DecisionSet {
            scope: Scope::FullZ,
            shape: DecisionShape::Threshold {
                coord: 0,
                dir: ThresholdDir::Geq,
                cut: Some(1.0),
            },
        };
        assert!(contains_z(&g, 1.0, &[1.0, -1.0]));
        assert!(!contains_z(&g, 0.0, &[1.0, -1.0]));
    }

    #[test]
    fn decision_set_serde_round_trip() {
        let sets = [
            DecisionSet {
                scope: Scope::XOnly,
                shape: DecisionShape::CellSet {
                    members: [Point(vec![1.0, 0.0]), Point(vec![1.0, 1.0])].into(),
                },
            },
            DecisionSet {
                scope: Scope::FullZ,
                shape: DecisionShape::Halfspace {
                    coords: vec![0, 2],
                    weights: vec![-0.5, 1.0, 0.25],
                },
            },
        ];
        for g in &sets {
            let json = serde_json::to_string(g).unwrap();
            let back: DecisionSet = serde_json::from_str(&json).unwrap();
            assert_eq!(&back, g);
        }
    }

    // The fuzz comparison puts points on a small integer grid with scores
    // that are multiples of 1/8, so every margin, hyperplane coefficient,
    // and partial sum is exact in f64 and the comparisons below can demand
    // exact equality against the reference solvers.

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn argmax_matches_brute_force(
            raw in prop::collection::vec((-3i8..=3, -3i8..=3, -16i8..=16), 1..=12),
        ) {
            let points: Vec<Point> = raw
                .iter()
                .map(|(a, b, _)| Point(vec![*a as f64, *b as f64]))
                .collect();
            let scores: Vec<f64> = raw.iter().map(|(_, _, s)| *s as f64 / 8.0).collect();

            // Power set over the unique points.
            let (cells, _) = aggregate(&points, &scores);
            let c = class(ClassShape::PowerSet { cells });
            let got = argmax_over_class(&c, &points, &scores).unwrap().objective;
            // Brute force ranges over all subsets; the solver's strict-sign
            // rule attains the same maximum (zero-score cells don't move it).
            prop_assert_eq!(got, brute_power_set(&points, &scores).max(0.0));

            for dir in [ThresholdDir::Geq, ThresholdDir::Leq] {
                let c = class(ClassShape::Threshold { coord: 1, dir });
                let got = argmax_over_class(&c, &points, &scores).unwrap().objective;
                prop_assert_eq!(got, brute_threshold(&points, &scores, 1, dir));
            }

            let c = class(ClassShape::Interval { coord: 0 });
            let got = argmax_over_class(&c, &points, &scores).unwrap().objective;
            prop_assert_eq!(got, brute_interval(&points, &scores, 0));

            for coords in [vec![1], vec![0, 1]] {
                let c = class(ClassShape::LinearScore { coords: coords.clone() });
                let got = argmax_over_class(&c, &points, &scores).unwrap().objective;
                prop_assert_eq!(got, brute_linear(&points, &scores, &coords));
            }
        }
    }
}
