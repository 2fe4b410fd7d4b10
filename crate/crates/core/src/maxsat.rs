//! Weighted partial MAX-SAT: instances, a stochastic local-search solver and
//! an exhaustive reference solver for small instances.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lit {
    pub var: usize,
    pub positive: bool,
}

impl Lit {
    pub fn pos(var: usize) -> Self {
        Lit { var, positive: true }
    }

    pub fn neg(var: usize) -> Self {
        Lit { var, positive: false }
    }

    #[inline]
    pub fn holds(&self, assignment: &[bool]) -> bool {
        assignment[self.var] == self.positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    Hard,
    Soft(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub lits: Vec<Lit>,
    pub weight: Weight,
}

impl Clause {
    pub fn hard(lits: Vec<Lit>) -> Self {
        Clause {
            lits,
            weight: Weight::Hard,
        }
    }

    pub fn soft(lits: Vec<Lit>, w: f64) -> Self {
        Clause {
            lits,
            weight: Weight::Soft(w),
        }
    }

    pub fn satisfied(&self, assignment: &[bool]) -> bool {
        self.lits.iter().any(|l| l.holds(assignment))
    }

    pub fn is_hard(&self) -> bool {
        matches!(self.weight, Weight::Hard)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MaxSatError {
    #[error("clause {0} is empty")]
    EmptyClause(usize),
    #[error("clause {clause} mentions variable {var} of {num_vars}")]
    BadVar { clause: usize, var: usize, num_vars: usize },
    #[error("clause {0} has a non-positive or non-finite weight")]
    BadWeight(usize),
    #[error("no assignment satisfies every hard clause; best attempt violates clauses {violated:?}")]
    Infeasible { violated: Vec<usize> },
    #[error("exhaustive search is limited to {max} variables, got {got}")]
    TooLarge { max: usize, got: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaxSatInstance {
    pub num_vars: usize,
    pub clauses: Vec<Clause>,
}

/// Assignment quality: hard violations first, then unsatisfied soft weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub hard_violated: usize,
    pub soft_penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Vec<bool>,
    pub soft_penalty: f64,
    /// Total weight of satisfied soft clauses.
    pub objective: f64,
}

impl MaxSatInstance {
    pub fn new(num_vars: usize) -> Self {
        MaxSatInstance {
            num_vars,
            clauses: Vec::new(),
        }
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn push(&mut self, c: Clause) {
        self.clauses.push(c);
    }

    pub fn validate(&self) -> Result<(), MaxSatError> {
        for (i, c) in self.clauses.iter().enumerate() {
            if c.lits.is_empty() {
                return Err(MaxSatError::EmptyClause(i));
            }
            if let Some(l) = c.lits.iter().find(|l| l.var >= self.num_vars) {
                return Err(MaxSatError::BadVar {
                    clause: i,
                    var: l.var,
                    num_vars: self.num_vars,
                });
            }
            if let Weight::Soft(w) = c.weight {
                if !(w.is_finite() && w > 0.0) {
                    return Err(MaxSatError::BadWeight(i));
                }
            }
        }
        Ok(())
    }

    pub fn total_soft(&self) -> f64 {
        self.clauses
            .iter()
            .map(|c| match c.weight {
                Weight::Soft(w) => w,
                Weight::Hard => 0.0,
            })
            .sum()
    }

    pub fn cost(&self, assignment: &[bool]) -> Cost {
        let mut cost = Cost {
            hard_violated: 0,
            soft_penalty: 0.0,
        };
        for c in &self.clauses {
            if !c.satisfied(assignment) {
                match c.weight {
                    Weight::Hard => cost.hard_violated += 1,
                    Weight::Soft(w) => cost.soft_penalty += w,
                }
            }
        }
        cost
    }

    pub fn violated_hard(&self, assignment: &[bool]) -> Vec<usize> {
        self.clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_hard() && !c.satisfied(assignment))
            .map(|(i, _)| i)
            .collect()
    }

    fn solution(&self, assignment: Vec<bool>) -> Solution {
        let soft_penalty = self.cost(&assignment).soft_penalty;
        Solution {
            objective: self.total_soft() - soft_penalty,
            soft_penalty,
            assignment,
        }
    }

    /// Optimal assignment by enumeration (ties go to the lexicographically
    /// smallest assignment with `false < true`, variable 0 most significant).
    pub fn solve_exhaustive(&self) -> Result<Solution, MaxSatError> {
        const MAX: usize = 24;
        self.validate()?;
        if self.num_vars > MAX {
            return Err(MaxSatError::TooLarge {
                max: MAX,
                got: self.num_vars,
            });
        }
        let n = self.num_vars;
        let mut best: Option<(f64, Vec<bool>)> = None;
        let mut fewest_hard = (usize::MAX, Vec::new());
        for mask in 0u64..(1u64 << n) {
            let a: Vec<bool> = (0..n).map(|v| mask >> (n - 1 - v) & 1 == 1).collect();
            let c = self.cost(&a);
            if c.hard_violated > 0 {
                if c.hard_violated < fewest_hard.0 {
                    fewest_hard = (c.hard_violated, a);
                }
                continue;
            }
            if best.as_ref().is_none_or(|(p, _)| c.soft_penalty < *p) {
                best = Some((c.soft_penalty, a));
            }
        }
        match best {
            Some((_, a)) => Ok(self.solution(a)),
            None => Err(MaxSatError::Infeasible {
                violated: self.violated_hard(&fewest_hard.1),
            }),
        }
    }

    /// Classic weighted CNF (`p wcnf`). Soft weights are scaled by `scale`
    /// and rounded up to positive integers; hard clauses carry `top`.
    pub fn to_wcnf(&self, scale: f64) -> String {
        let soft: Vec<u64> = self
            .clauses
            .iter()
            .map(|c| match c.weight {
                Weight::Soft(w) => ((w * scale).round() as u64).max(1),
                Weight::Hard => 0,
            })
            .collect();
        let top = soft.iter().sum::<u64>() + 1;
        let mut out = String::new();
        let _ = writeln!(out, "c soft weights scaled by {scale}");
        let _ = writeln!(out, "p wcnf {} {} {top}", self.num_vars, self.clauses.len());
        for (c, w) in self.clauses.iter().zip(soft) {
            let w = if c.is_hard() { top } else { w };
            let _ = write!(out, "{w}");
            for l in &c.lits {
                let v = l.var as i64 + 1;
                let _ = write!(out, " {}", if l.positive { v } else { -v });
            }
            out.push_str(" 0\n");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub restarts: usize,
    /// Flips per restart: `max(min_flips, flips_per_var * num_vars)`.
    pub min_flips: usize,
    pub flips_per_var: usize,
    /// Probability of taking the second-best variable when the best one was
    /// the most recently flipped in the clause.
    pub novelty: f64,
    /// Probability of flipping a random variable of the chosen clause.
    pub random_walk: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            restarts: 10,
            min_flips: 2_000,
            flips_per_var: 50,
            novelty: 0.2,
            random_walk: 0.05,
        }
    }
}

struct Search<'a> {
    inst: &'a MaxSatInstance,
    /// Clause literals without repeats; empty for tautologies.
    lits: Vec<Vec<Lit>>,
    weights: Vec<f64>,
    occurs: Vec<Vec<(usize, bool)>>,
    assign: Vec<bool>,
    true_count: Vec<u32>,
    unsat: Vec<usize>,
    unsat_pos: Vec<usize>,
    last_flip: Vec<u64>,
    cost: f64,
}

const NONE: usize = usize::MAX;

impl<'a> Search<'a> {
    fn new(inst: &'a MaxSatInstance) -> Self {
        let hard = 1.0 + inst.total_soft();
        let weights = inst
            .clauses
            .iter()
            .map(|c| match c.weight {
                Weight::Hard => hard,
                Weight::Soft(w) => w,
            })
            .collect();
        let lits: Vec<Vec<Lit>> = inst
            .clauses
            .iter()
            .map(|c| {
                let set: BTreeSet<Lit> = c.lits.iter().copied().collect();
                if set.iter().any(|l| set.contains(&Lit { var: l.var, positive: !l.positive })) {
                    Vec::new()
                } else {
                    set.into_iter().collect()
                }
            })
            .collect();
        let mut occurs = vec![Vec::new(); inst.num_vars];
        for (i, c) in lits.iter().enumerate() {
            for l in c {
                occurs[l.var].push((i, l.positive));
            }
        }
        Search {
            inst,
            lits,
            weights,
            occurs,
            assign: vec![false; inst.num_vars],
            true_count: vec![0; inst.clauses.len()],
            unsat: Vec::new(),
            unsat_pos: vec![NONE; inst.clauses.len()],
            last_flip: vec![0; inst.num_vars],
            cost: 0.0,
        }
    }

    fn reset(&mut self, assign: Vec<bool>) {
        self.assign = assign;
        self.unsat.clear();
        self.cost = 0.0;
        self.last_flip.iter_mut().for_each(|x| *x = 0);
        for i in 0..self.lits.len() {
            let c = &self.lits[i];
            let n = if c.is_empty() {
                1
            } else {
                c.iter().filter(|l| l.holds(&self.assign)).count() as u32
            };
            self.true_count[i] = n;
            self.unsat_pos[i] = NONE;
            if n == 0 {
                self.mark_unsat(i);
                self.cost += self.weights[i];
            }
        }
    }

    fn mark_unsat(&mut self, c: usize) {
        self.unsat_pos[c] = self.unsat.len();
        self.unsat.push(c);
    }

    fn mark_sat(&mut self, c: usize) {
        let p = self.unsat_pos[c];
        let last = *self.unsat.last().unwrap();
        self.unsat.swap_remove(p);
        if last != c {
            self.unsat_pos[last] = p;
        }
        self.unsat_pos[c] = NONE;
    }

    /// Change in cost if `v` were flipped.
    fn delta(&self, v: usize) -> f64 {
        let mut d = 0.0;
        for &(c, positive) in &self.occurs[v] {
            let currently_true = self.assign[v] == positive;
            if currently_true {
                if self.true_count[c] == 1 {
                    d += self.weights[c];
                }
            } else if self.true_count[c] == 0 {
                d -= self.weights[c];
            }
        }
        d
    }

    fn flip(&mut self, v: usize, step: u64) {
        let d = self.delta(v);
        self.assign[v] = !self.assign[v];
        self.last_flip[v] = step;
        for k in 0..self.occurs[v].len() {
            let (c, positive) = self.occurs[v][k];
            if self.assign[v] == positive {
                self.true_count[c] += 1;
                if self.true_count[c] == 1 {
                    self.mark_sat(c);
                }
            } else {
                self.true_count[c] -= 1;
                if self.true_count[c] == 0 {
                    self.mark_unsat(c);
                }
            }
        }
        self.cost += d;
    }

    /// Flips improving variables until none is left.
    fn descend(&mut self, step: &mut u64) {
        loop {
            let mut improved = false;
            for v in 0..self.inst.num_vars {
                if self.delta(v) < -1e-12 {
                    *step += 1;
                    self.flip(v, *step);
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
}

fn consider(best: &mut Option<(f64, Vec<bool>)>, s: &Search) {
    if best.as_ref().is_none_or(|(c, _)| s.cost < *c - 1e-9) {
        *best = Some((s.cost, s.assign.clone()));
    }
}

/// Weighted local search with novelty tie-breaking and restarts. The first
/// restart starts from all-false; later ones from random assignments.
/// Deterministic given `seed`.
pub fn solve(inst: &MaxSatInstance, config: &SolverConfig, seed: u64) -> Result<Solution, MaxSatError> {
    inst.validate()?;
    if inst.num_vars == 0 {
        return match inst.clauses.iter().position(|c| c.is_hard()) {
            Some(_) => Err(MaxSatError::Infeasible {
                violated: inst.violated_hard(&[]),
            }),
            None => Ok(inst.solution(Vec::new())),
        };
    }
    let mut rng = seed::rng(seed, 0x5a7);
    let mut s = Search::new(inst);
    let flips = config.min_flips.max(config.flips_per_var * inst.num_vars);
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut step = 0u64;
    for restart in 0..config.restarts.max(1) {
        let start: Vec<bool> = if restart == 0 {
            vec![false; inst.num_vars]
        } else {
            (0..inst.num_vars).map(|_| rng.random_bool(0.5)).collect()
        };
        s.reset(start);
        s.descend(&mut step);
        consider(&mut best, &s);
        for _ in 0..flips {
            if s.unsat.is_empty() {
                break;
            }
            let c = s.unsat[rng.random_range(0..s.unsat.len())];
            let lits = &s.lits[c];
            let v = if rng.random_bool(config.random_walk) {
                lits[rng.random_range(0..lits.len())].var
            } else {
                let mut first: Option<(f64, usize)> = None;
                let mut second: Option<(f64, usize)> = None;
                for l in lits {
                    let d = s.delta(l.var);
                    let better = |o: &Option<(f64, usize)>| {
                        o.is_none_or(|(bd, bv)| d < bd || (d == bd && s.last_flip[l.var] < s.last_flip[bv]))
                    };
                    if better(&first) {
                        second = first;
                        first = Some((d, l.var));
                    } else if better(&second) {
                        second = Some((d, l.var));
                    }
                }
                let (_, v1) = first.unwrap();
                let newest = lits.iter().map(|l| s.last_flip[l.var]).max().unwrap();
                match second {
                    Some((_, v2)) if s.last_flip[v1] == newest && newest > 0 && rng.random_bool(config.novelty) => v2,
                    _ => v1,
                }
            };
            step += 1;
            s.flip(v, step);
            if s.cost < best.as_ref().map_or(f64::INFINITY, |(c, _)| *c) - 1e-9 {
                s.descend(&mut step);
                consider(&mut best, &s);
            }
        }
        s.descend(&mut step);
        consider(&mut best, &s);
    }
    let (_, assignment) = best.expect("at least one restart");
    let violated = inst.violated_hard(&assignment);
    if !violated.is_empty() {
        return Err(MaxSatError::Infeasible { violated });
    }
    Ok(inst.solution(assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, max_vars: usize) -> MaxSatInstance {
        let n = rng.random_range(1..=max_vars);
        let mut inst = MaxSatInstance::new(n);
        let m = rng.random_range(n..=4 * n);
        for k in 0..m {
            let len = rng.random_range(1..=3.min(n));
            let mut lits: Vec<Lit> = Vec::new();
            while lits.len() < len {
                let v = rng.random_range(0..n);
                if lits.iter().all(|l| l.var != v) {
                    lits.push(Lit { var: v, positive: rng.random_bool(0.5) });
                }
            }
            // a few hard clauses, never enough to make most instances infeasible
            if k % 7 == 0 && len >= 2 {
                inst.push(Clause::hard(lits));
            } else {
                inst.push(Clause::soft(lits, rng.random_range(1..=10) as f64 / 2.0));
            }
        }
        inst
    }

    #[test]
    fn repeated_and_complementary_literals() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for k in 0..30 {
            let n = 6;
            let mut inst = MaxSatInstance::new(n);
            for _ in 0..18 {
                let lits: Vec<Lit> = (0..rng.random_range(1..=4))
                    .map(|_| Lit { var: rng.random_range(0..3), positive: rng.random_bool(0.5) })
                    .collect();
                inst.push(Clause::soft(lits, rng.random_range(1..=6) as f64));
            }
            inst.push(Clause::hard(vec![Lit::pos(4), Lit::pos(4), Lit::neg(5)]));
            let got = solve(&inst, &SolverConfig::default(), k).unwrap();
            let want = inst.solve_exhaustive().unwrap();
            assert!((got.objective - want.objective).abs() < 1e-9, "instance {k}");
        }
    }

    #[test]
    fn local_search_matches_exhaustive_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 50 {
            let inst = random_instance(&mut rng, 20);
            let exact = match inst.solve_exhaustive() {
                Ok(s) => s,
                Err(MaxSatError::Infeasible { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let got = solve(&inst, &SolverConfig::default(), checked as u64).unwrap();
            assert!(inst.violated_hard(&got.assignment).is_empty());
            assert!(
                (got.soft_penalty - exact.soft_penalty).abs() < 1e-9,
                "instance {checked}: {} vs {}",
                got.soft_penalty,
                exact.soft_penalty
            );
            checked += 1;
        }
    }

    #[test]
    fn hard_only_instance_has_zero_penalty() {
        let mut inst = MaxSatInstance::new(3);
        inst.push(Clause::hard(vec![Lit::pos(0), Lit::pos(1)]));
        inst.push(Clause::hard(vec![Lit::neg(0)]));
        inst.push(Clause::hard(vec![Lit::neg(1), Lit::pos(2)]));
        let s = solve(&inst, &SolverConfig::default(), 1).unwrap();
        assert_eq!(s.soft_penalty, 0.0);
        assert_eq!(s.assignment, vec![false, true, true]);
    }

    #[test]
    fn duplicated_clauses_double_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inst = random_instance(&mut rng, 10);
        inst.clauses.retain(|c| !c.is_hard());
        let a = inst.solve_exhaustive().unwrap();
        let mut twice = inst.clone();
        twice.clauses.extend(inst.clauses.clone());
        let b = twice.solve_exhaustive().unwrap();
        assert!((b.objective - 2.0 * a.objective).abs() < 1e-9);
        assert_eq!(b.assignment, a.assignment);
    }

    #[test]
    fn infeasible_reports_violations() {
        let mut inst = MaxSatInstance::new(1);
        inst.push(Clause::hard(vec![Lit::pos(0)]));
        inst.push(Clause::hard(vec![Lit::neg(0)]));
        assert!(matches!(
            solve(&inst, &SolverConfig::default(), 0),
            Err(MaxSatError::Infeasible { violated }) if violated.len() == 1
        ));
        assert!(matches!(inst.solve_exhaustive(), Err(MaxSatError::Infeasible { .. })));
    }

    #[test]
    fn validation() {
        let mut inst = MaxSatInstance::new(1);
        inst.push(Clause::soft(vec![Lit::pos(3)], 1.0));
        assert!(matches!(inst.validate(), Err(MaxSatError::BadVar { .. })));
        let mut inst = MaxSatInstance::new(1);
        inst.push(Clause::soft(vec![], 1.0));
        assert_eq!(inst.validate(), Err(MaxSatError::EmptyClause(0)));
        let mut inst = MaxSatInstance::new(1);
        inst.push(Clause::soft(vec![Lit::pos(0)], f64::NAN));
        assert_eq!(inst.validate(), Err(MaxSatError::BadWeight(0)));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = random_instance(&mut rng, 18);
        let a = solve(&inst, &SolverConfig::default(), 3);
        let b = solve(&inst, &SolverConfig::default(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn wcnf_format() {
        let mut inst = MaxSatInstance::new(2);
        inst.push(Clause::hard(vec![Lit::pos(0), Lit::neg(1)]));
        inst.push(Clause::soft(vec![Lit::pos(1)], 0.5));
        let text = inst.to_wcnf(10.0);
        assert!(text.contains("p wcnf 2 2 6\n"));
        assert!(text.contains("6 1 -2 0\n"));
        assert!(text.contains("5 2 0\n"));
    }
}
