//! Per-stratum minimum-distance matching between treatment arms.
//!
//! Within a stratum the smaller arm is group A and the larger group B. The
//! one-to-one problem selects exactly `min(alpha, |A|, |B|)` disjoint pairs
//! minimizing total Euclidean distance on standardized covariates; it is a
//! k-cardinality assignment problem solved exactly with min-cost flow. When
//! `|A| < alpha` this keeps every A patient and assigns each a distinct B
//! partner. The relaxed variant lets B patients be reused.

mod balance;
pub mod flow;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};

pub use balance::{balance_cohort, BalancedCohort, BalancedRow, StratumMatch};
use flow::MinCostFlow;

/// Matching distances are rounded to multiples of this (2^-32). Sums of
/// grid values are exact in `f64`, so matchings of equal cost report
/// bit-identical objectives regardless of summation order.
pub const DISTANCE_RESOLUTION: f64 = 1.0 / 4_294_967_296.0;

fn to_units(d: f64) -> i64 {
    (d / DISTANCE_RESOLUTION).round() as i64
}

/// Largest group size accepted by [`brute_force_match`].
pub const BRUTE_FORCE_LIMIT: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingMode {
    OneToOne,
    Relaxed,
}

impl MatchingMode {
    pub fn parse(s: &str) -> Option<MatchingMode> {
        match s {
            "one-to-one" | "1-1" => Some(MatchingMode::OneToOne),
            "relaxed" => Some(MatchingMode::Relaxed),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MatchingMode::OneToOne => "one-to-one",
            MatchingMode::Relaxed => "relaxed",
        }
    }
}

/// Population mean and standard deviation of every covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// A zero standard deviation is replaced by 1, so a constant covariate maps to 0.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((v, m), s)| (v - m) / if *s > 0.0 { *s } else { 1.0 })
            .collect()
    }
}

/// Computes the standardization over every patient in `cohort` (both arms).
pub fn standardize(cohort: &Cohort) -> Result<Standardization> {
    let k = cohort.schema().len();
    let n = cohort.len();
    if n == 0 {
        return Err(Error::Precondition("cannot standardize an empty cohort".into()));
    }
    let x = cohort.design_matrix()?;
    let mut means = vec![0.0; k];
    for row in x.chunks_exact(k.max(1)).take(n) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; k];
    for row in x.chunks_exact(k.max(1)).take(n) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&means) {
            *s += (v - m).powi(2);
        }
    }
    let sds = var.into_iter().map(|s| (s / n as f64).sqrt()).collect();
    Ok(Standardization { means, sds })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// One stratum's matching instance on standardized feature rows.
#[derive(Clone, Debug)]
pub struct MatchingProblem {
    pub group_a: Vec<Vec<f64>>,
    pub group_b: Vec<Vec<f64>>,
    pub a_ids: Vec<String>,
    pub b_ids: Vec<String>,
    pub alpha: usize,
    /// Row-major `|A| x |B|` distances in units of [`DISTANCE_RESOLUTION`].
    distances: Vec<i64>,
}

impl MatchingProblem {
    pub fn new(
        group_a: Vec<Vec<f64>>,
        group_b: Vec<Vec<f64>>,
        a_ids: Vec<String>,
        b_ids: Vec<String>,
        alpha: usize,
    ) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::Precondition("alpha must be at least 1".into()));
        }
        if group_a.len() != a_ids.len() || group_b.len() != b_ids.len() {
            return Err(Error::Precondition("feature rows and ids differ in length".into()));
        }
        let dim = group_a.first().or(group_b.first()).map_or(0, Vec::len);
        if group_a.iter().chain(&group_b).any(|r| r.len() != dim) {
            return Err(Error::Precondition("feature rows have inconsistent dimension".into()));
        }
        let mut distances = Vec::with_capacity(group_a.len() * group_b.len());
        for a in &group_a {
            for b in &group_b {
                distances.push(to_units(euclidean(a, b)));
            }
        }
        Ok(MatchingProblem {
            group_a,
            group_b,
            a_ids,
            b_ids,
            alpha,
            distances,
        })
    }

    /// Convenience constructor with ids `a0..`, `b0..`.
    pub fn from_rows(group_a: Vec<Vec<f64>>, group_b: Vec<Vec<f64>>, alpha: usize) -> Result<Self> {
        let a_ids = (0..group_a.len()).map(|i| format!("a{i}")).collect();
        let b_ids = (0..group_b.len()).map(|j| format!("b{j}")).collect();
        Self::new(group_a, group_b, a_ids, b_ids, alpha)
    }

    pub fn n_a(&self) -> usize {
        self.group_a.len()
    }

    pub fn n_b(&self) -> usize {
        self.group_b.len()
    }

    #[inline]
    /// Distance rounded to the [`DISTANCE_RESOLUTION`] grid.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.units(a, b) as f64 * DISTANCE_RESOLUTION
    }

    fn units(&self, a: usize, b: usize) -> i64 {
        self.distances[a * self.n_b() + b]
    }

    /// Required cardinality in one-to-one mode.
    pub fn target_cardinality(&self) -> usize {
        self.alpha.min(self.n_a()).min(self.n_b())
    }

    fn result(&self, mut pairs: Vec<(usize, usize)>, mode: MatchingMode) -> MatchingResult {
        pairs.sort_unstable();
        let pairs: Vec<MatchedPair> = pairs
            .into_iter()
            .map(|(a, b)| MatchedPair {
                a,
                b,
                a_id: self.a_ids[a].clone(),
                b_id: self.b_ids[b].clone(),
                distance: self.distance(a, b),
            })
            .collect();
        let objective = objective_of(&pairs);
        let mut b_multiplicity = BTreeMap::new();
        if mode == MatchingMode::Relaxed {
            for p in &pairs {
                *b_multiplicity.entry(p.b_id.clone()).or_insert(0) += 1;
            }
        }
        MatchingResult {
            cardinality: pairs.len(),
            pairs,
            objective,
            mode,
            b_multiplicity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchedPair {
    /// Position in group A.
    pub a: usize,
    /// Position in group B.
    pub b: usize,
    pub a_id: String,
    pub b_id: String,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchingResult {
    /// Sorted by A position.
    pub pairs: Vec<MatchedPair>,
    pub objective: f64,
    pub cardinality: usize,
    pub mode: MatchingMode,
    /// Relaxed mode only: how often each B patient was used.
    pub b_multiplicity: BTreeMap<String, usize>,
}

/// Grid distances sum without rounding, so this is exact for any pair order.
fn objective_of(pairs: &[MatchedPair]) -> f64 {
    pairs.iter().map(|p| p.distance).sum()
}

/// Exact minimum-distance one-to-one matching of cardinality
/// `min(alpha, |A|, |B|)`.
pub fn solve_one_to_one(problem: &MatchingProblem) -> MatchingResult {
    let (na, nb) = (problem.n_a(), problem.n_b());
    let target = problem.target_cardinality();
    if target == 0 {
        if na == 0 {
            log::debug!("matching problem with empty group A contributes no pairs");
        }
        return problem.result(Vec::new(), MatchingMode::OneToOne);
    }
    let source = 0;
    let sink = na + nb + 1;
    let mut g = MinCostFlow::new(na + nb + 2);
    for a in 0..na {
        g.add_edge(source, 1 + a, 1, 0);
    }
    // Some optimum uses only edges from each A to its `target` nearest B
    // patients: any farther partner could be swapped for one of those, at
    // least one of which is free. Pruning keeps the graph at `na * target` edges.
    let mut cross = Vec::with_capacity(na * target);
    let mut row: Vec<(i64, usize)> = Vec::with_capacity(nb);
    for a in 0..na {
        row.clear();
        row.extend((0..nb).map(|b| (problem.units(a, b), b)));
        if target < nb {
            row.select_nth_unstable(target - 1);
            row.truncate(target);
        }
        row.sort_unstable();
        for &(d, b) in &row {
            cross.push((a, b, g.add_edge(1 + a, 1 + na + b, 1, d)));
        }
    }
    for b in 0..nb {
        g.add_edge(1 + na + b, sink, 1, 0);
    }
    let (flow, _) = g.run(source, sink, target as i64);
    debug_assert_eq!(flow as usize, target);
    let pairs = cross
        .into_iter()
        .filter(|(_, _, e)| g.flow_on(*e) == 1)
        .map(|(a, b, _)| (a, b))
        .collect();
    problem.result(pairs, MatchingMode::OneToOne)
}

/// Matching with B-side reuse: the `min(alpha, |A|)` A patients closest to
/// their nearest B neighbour are each paired with that neighbour.
pub fn solve_relaxed(problem: &MatchingProblem) -> MatchingResult {
    let (na, nb) = (problem.n_a(), problem.n_b());
    if na == 0 || nb == 0 {
        if na == 0 {
            log::debug!("matching problem with empty group A contributes no pairs");
        }
        return problem.result(Vec::new(), MatchingMode::Relaxed);
    }
    let mut nearest: Vec<(f64, usize, usize)> = (0..na)
        .map(|a| {
            let mut best = 0;
            for b in 1..nb {
                if problem.distance(a, b) < problem.distance(a, best) {
                    best = b;
                }
            }
            (problem.distance(a, best), a, best)
        })
        .collect();
    nearest.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let take = problem.alpha.min(na);
    let pairs = nearest.into_iter().take(take).map(|(_, a, b)| (a, b)).collect();
    problem.result(pairs, MatchingMode::Relaxed)
}

/// Exhaustive search over all subsets and injections; exact, for small instances.
pub fn brute_force_match(problem: &MatchingProblem) -> Result<MatchingResult> {
    let (na, nb) = (problem.n_a(), problem.n_b());
    if na > BRUTE_FORCE_LIMIT || nb > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard { a: na, b: nb });
    }
    let target = problem.target_cardinality();

    struct Search<'p> {
        p: &'p MatchingProblem,
        target: usize,
        current: Vec<(usize, usize)>,
        best: Option<(i64, Vec<(usize, usize)>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, a: usize, used_b: u32) {
            if self.current.len() == self.target {
                let obj: i64 = self.current.iter().map(|&(i, j)| self.p.units(i, j)).sum();
                let better = match &self.best {
                    None => true,
                    Some((bo, bp)) => obj < *bo || (obj == *bo && self.current < *bp),
                };
                if better {
                    self.best = Some((obj, self.current.clone()));
                }
                return;
            }
            if self.target - self.current.len() > self.p.n_a() - a {
                return;
            }
            for b in 0..self.p.n_b() {
                if used_b & (1 << b) == 0 {
                    self.current.push((a, b));
                    self.visit(a + 1, used_b | (1 << b));
                    self.current.pop();
                }
            }
            self.visit(a + 1, used_b);
        }
    }

    let mut s = Search {
        p: problem,
        target,
        current: Vec::new(),
        best: None,
    };
    s.visit(0, 0);
    let pairs = s.best.map(|(_, p)| p).unwrap_or_default();
    Ok(problem.result(pairs, MatchingMode::OneToOne))
}

pub fn solve(problem: &MatchingProblem, mode: MatchingMode) -> MatchingResult {
    match mode {
        MatchingMode::OneToOne => solve_one_to_one(problem),
        MatchingMode::Relaxed => solve_relaxed(problem),
    }
}

/// Writes `stratum,a_id,b_id,distance` rows.
pub fn write_matches<'a, W: Write>(
    writer: W,
    results: impl IntoIterator<Item = (usize, &'a MatchingResult)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stratum", "a_id", "b_id", "distance"])?;
    for (stratum, r) in results {
        for p in &r.pairs {
            w.write_record([
                stratum.to_string(),
                p.a_id.clone(),
                p.b_id.clone(),
                crate::cohort::format_real(p.distance),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(a: &[f64], b: &[f64], alpha: usize) -> MatchingProblem {
        MatchingProblem::from_rows(
            a.iter().map(|&v| vec![v]).collect(),
            b.iter().map(|&v| vec![v]).collect(),
            alpha,
        )
        .unwrap()
    }

    #[test]
    fn small_one_dimensional_instance() {
        let p = one_d(&[0.0, 1.0], &[0.1, 0.9, 5.0], 2);
        let r = solve_one_to_one(&p);
        let ids: Vec<_> = r.pairs.iter().map(|p| (p.a_id.as_str(), p.b_id.as_str())).collect();
        assert_eq!(ids, [("a0", "b0"), ("a1", "b1")]);
        assert!((r.objective - 0.2).abs() <= DISTANCE_RESOLUTION);
        assert_eq!(r.objective, brute_force_match(&p).unwrap().objective);
    }

    #[test]
    fn alpha_one_is_global_minimum() {
        let p = one_d(&[0.0, 3.0, 7.0], &[2.2, 6.5, 10.0], 1);
        let r = solve_one_to_one(&p);
        assert_eq!(r.cardinality, 1);
        assert_eq!((r.pairs[0].a, r.pairs[0].b), (2, 1));
    }

    #[test]
    fn identical_groups_match_at_zero_cost() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        let p = MatchingProblem::from_rows(rows.clone(), rows, 3).unwrap();
        assert_eq!(solve_one_to_one(&p).objective, 0.0);
    }

    #[test]
    fn cardinality_is_capped() {
        let p = one_d(&[0.0, 1.0], &[0.5], 5);
        assert_eq!(solve_one_to_one(&p).cardinality, 1);
        assert_eq!(brute_force_match(&p).unwrap().cardinality, 1);
        let single = one_d(&[4.0], &[1.0], 1);
        let r = brute_force_match(&single).unwrap();
        assert_eq!((r.pairs[0].a, r.pairs[0].b), (0, 0));
    }

    #[test]
    fn brute_force_guard() {
        let p = one_d(&[0.0; 8], &[0.0; 3], 2);
        assert!(matches!(brute_force_match(&p), Err(Error::SizeGuard { a: 8, b: 3 })));
    }

    #[test]
    fn relaxed_forced_reuse() {
        let p = one_d(&[0.0, 1.0, 2.0], &[0.5], 3);
        let r = solve_relaxed(&p);
        assert_eq!(r.cardinality, 3);
        assert_eq!(r.b_multiplicity.get("b0"), Some(&3));
    }

    #[test]
    fn relaxed_coincides_without_contested_neighbours() {
        let p = one_d(&[0.0, 10.0, 20.0], &[0.2, 10.1, 19.5, 40.0], 3);
        let r = solve_relaxed(&p);
        let o = solve_one_to_one(&p);
        assert_eq!(
            r.pairs.iter().map(|p| (p.a, p.b)).collect::<Vec<_>>(),
            o.pairs.iter().map(|p| (p.a, p.b)).collect::<Vec<_>>()
        );
        assert_eq!(r.objective, o.objective);
    }

    #[test]
    fn empty_a_gives_empty_result() {
        let p = one_d(&[], &[1.0, 2.0], 3);
        assert_eq!(solve_one_to_one(&p).cardinality, 0);
        assert_eq!(solve_relaxed(&p).cardinality, 0);
    }

    #[test]
    fn standardization_population_sd() {
        let s = Standardization {
            means: vec![1.0],
            sds: vec![1.0],
        };
        assert_eq!(s.apply(&[0.0]), vec![-1.0]);
        assert_eq!(s.apply(&[2.0]), vec![1.0]);
        let flat = Standardization {
            means: vec![3.0],
            sds: vec![0.0],
        };
        assert_eq!(flat.apply(&[3.0]), vec![0.0]);
    }
}
