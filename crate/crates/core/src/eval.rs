//! Evaluation metrics: error rate, redundancy rate and Rand index.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Domain, GroundAction, ModelError, Proposition, State};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("plan {plan}, step {step}: {source}")]
    Ungroundable {
        plan: usize,
        step: usize,
        source: ModelError,
    },
    #[error("clusterings cover {0} and {1} items")]
    LengthMismatch(usize, usize),
}

/// A test plan with the initial state and goal the metrics may use.
#[derive(Debug, Clone, Copy)]
pub struct PlanView<'a> {
    pub id: usize,
    pub plan: &'a [GroundAction],
    pub init: &'a State,
    pub goal: &'a BTreeSet<Proposition>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanBreakdown {
    pub id: usize,
    pub preconditions: usize,
    pub unestablished: usize,
    pub adds: usize,
    pub redundant: usize,
}

/// A ratio with its counts; a zero denominator yields 0 and `degenerate`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub numerator: u64,
    pub denominator: u64,
    pub degenerate: bool,
}

impl Rate {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            Rate {
                value: 0.0,
                numerator,
                denominator,
                degenerate: true,
            }
        } else {
            Rate {
                value: numerator as f64 / denominator as f64,
                numerator,
                denominator,
                degenerate: false,
            }
        }
    }
}

fn grounded(domain: &Domain, plan: &PlanView) -> Result<Vec<crate::model::GroundedEffects>, EvalError> {
    plan.plan
        .iter()
        .enumerate()
        .map(|(step, a)| {
            domain
                .action(&a.schema)
                .ok_or_else(|| ModelError::UnknownAction(a.schema.clone()))
                .and_then(|s| s.ground(&a.args))
                .map_err(|source| EvalError::Ungroundable {
                    plan: plan.id,
                    step,
                    source,
                })
        })
        .collect()
}

/// Per-plan counts for both rates.
pub fn breakdown(domain: &Domain, plan: &PlanView, goal_credit: bool) -> Result<PlanBreakdown, EvalError> {
    let g = grounded(domain, plan)?;
    let mut b = PlanBreakdown {
        id: plan.id,
        ..Default::default()
    };
    let mut added: BTreeSet<&Proposition> = BTreeSet::new();
    for e in &g {
        for p in &e.pre {
            b.preconditions += 1;
            if !plan.init.contains(p) && !added.contains(p) {
                b.unestablished += 1;
            }
        }
        added.extend(&e.add);
    }
    let mut needed_later: BTreeSet<&Proposition> = BTreeSet::new();
    for e in g.iter().rev() {
        for p in &e.add {
            b.adds += 1;
            let useful = needed_later.contains(p) || (goal_credit && plan.goal.contains(p));
            if !useful {
                b.redundant += 1;
            }
        }
        needed_later.extend(&e.pre);
    }
    Ok(b)
}

/// Share of preconditions not established by the initial state or an
/// earlier add effect.
pub fn error_rate(domain: &Domain, plans: &[PlanView]) -> Result<Rate, EvalError> {
    let mut num = 0;
    let mut den = 0;
    for p in plans {
        let b = breakdown(domain, p, true)?;
        num += b.unestablished as u64;
        den += b.preconditions as u64;
    }
    Ok(Rate::new(num, den))
}

/// Share of add effects used by no later precondition (nor by the goal when
/// `goal_credit` is set).
pub fn redundancy_rate(domain: &Domain, plans: &[PlanView], goal_credit: bool) -> Result<Rate, EvalError> {
    let mut num = 0;
    let mut den = 0;
    for p in plans {
        let b = breakdown(domain, p, goal_credit)?;
        num += b.redundant as u64;
        den += b.adds as u64;
    }
    Ok(Rate::new(num, den))
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair-counting agreement between two clusterings of the same items.
pub fn rand_index<A: Eq + Hash, B: Eq + Hash>(predicted: &[A], gold: &[B]) -> Result<Rate, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), gold.len()));
    }
    let mut a_ids: HashMap<&A, usize> = HashMap::new();
    let mut b_ids: HashMap<&B, usize> = HashMap::new();
    let mut a_sizes: Vec<u64> = Vec::new();
    let mut b_sizes: Vec<u64> = Vec::new();
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    for (a, b) in predicted.iter().zip(gold) {
        let na = a_ids.len();
        let i = *a_ids.entry(a).or_insert(na);
        let nb = b_ids.len();
        let j = *b_ids.entry(b).or_insert(nb);
        if i == a_sizes.len() {
            a_sizes.push(0);
        }
        if j == b_sizes.len() {
            b_sizes.push(0);
        }
        a_sizes[i] += 1;
        b_sizes[j] += 1;
        *joint.entry((i, j)).or_default() += 1;
    }
    let total = pairs(predicted.len() as u64);
    let both: u64 = joint.values().map(|&c| pairs(c)).sum();
    let same_a: u64 = a_sizes.iter().map(|&c| pairs(c)).sum();
    let same_b: u64 = b_sizes.iter().map(|&c| pairs(c)).sum();
    // together in both + apart in both
    let agree = both + (total + both - same_a - same_b);
    Ok(Rate::new(agree, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r_e: Rate,
    pub r_r: Rate,
    pub r_i: Rate,
    pub goal_credit: bool,
    pub per_plan: Vec<PlanBreakdown>,
}

impl MetricsReport {
    pub fn compute<A: Eq + Hash, B: Eq + Hash>(
        domain: &Domain,
        plans: &[PlanView],
        predicted: &[A],
        gold: &[B],
        goal_credit: bool,
    ) -> Result<Self, EvalError> {
        let per_plan = plans
            .iter()
            .map(|p| breakdown(domain, p, goal_credit))
            .collect::<Result<Vec<_>, _>>()?;
        let sum = |f: fn(&PlanBreakdown) -> usize| per_plan.iter().map(f).sum::<usize>() as u64;
        Ok(MetricsReport {
            r_e: Rate::new(sum(|b| b.unestablished), sum(|b| b.preconditions)),
            r_r: Rate::new(sum(|b| b.redundant), sum(|b| b.adds)),
            r_i: rand_index(predicted, gold)?,
            goal_credit,
            per_plan,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, name: &str, r: &Rate| {
            writeln!(
                f,
                "{name:<6} {:>8.4}   {:>7} / {:<7}{}",
                r.value,
                r.numerator,
                r.denominator,
                if r.degenerate { "  (degenerate)" } else { "" }
            )
        };
        writeln!(f, "metric    value      count")?;
        row(f, "R_e", &self.r_e)?;
        row(f, "R_r", &self.r_r)?;
        row(f, "R_i", &self.r_i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, bundled, CorpusConfig};
    use crate::model::{ActionSchema, LiftedAtom, ObjectRef, Param, TopicalProposition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_rand(a: &[u32], b: &[u32]) -> (u64, u64) {
        let mut agree = 0;
        let mut total = 0;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                total += 1;
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
        (agree, total)
    }

    #[test]
    fn five_item_example() {
        let p = ["x", "x", "x", "y", "y"];
        let g = [1, 1, 2, 2, 2];
        let r = rand_index(&p, &g).unwrap();
        assert_eq!((r.numerator, r.denominator), (6, 10));
        assert_eq!(r.value, 0.6);
        assert_eq!(naive_rand(&[0, 0, 0, 1, 1], &[1, 1, 2, 2, 2]), (6, 10));
    }

    #[test]
    fn rand_index_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.random_range(0..40);
            let k1 = rng.random_range(1..6);
            let k2 = rng.random_range(1..6);
            let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..k1)).collect();
            let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..k2)).collect();
            let r = rand_index(&a, &b).unwrap();
            assert_eq!((r.numerator, r.denominator), naive_rand(&a, &b));
            assert_eq!(rand_index(&b, &a).unwrap(), r);
            assert!((0.0..=1.0).contains(&r.value));
            assert_eq!(rand_index(&a, &a).unwrap().value, if n >= 2 { 1.0 } else { 0.0 });
        }
        assert!(matches!(rand_index(&[1], &[1, 2]), Err(EvalError::LengthMismatch(1, 2))));
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (Domain, Vec<GroundAction>, State, BTreeSet<Proposition>) {
        let preds = ["p", "q", "r"];
        let mut d = Domain::new("rnd");
        d.types.insert(crate::model::TypeName::new("T"));
        for p in preds {
            d.predicates.insert(TopicalProposition::new(p, &["T"]));
        }
        let atoms: Vec<LiftedAtom> = preds
            .iter()
            .flat_map(|p| (0..2).map(move |i| LiftedAtom::new(*p, vec![i])))
            .collect();
        for name in ["a", "b", "c"] {
            let mut s = ActionSchema::new(name, vec![Param::new("?x", "T"), Param::new("?y", "T")]);
            for at in &atoms {
                match rng.random_range(0..4) {
                    0 => {
                        s.pre.insert(at.clone());
                    }
                    1 => {
                        s.add.insert(at.clone());
                    }
                    2 => {
                        s.pre.insert(at.clone());
                        s.del.insert(at.clone());
                    }
                    _ => {}
                }
            }
            d.actions.push(s);
        }
        let objs: Vec<ObjectRef> = (0..3).map(|i| ObjectRef::new(format!("o{i}"), "T")).collect();
        let len = rng.random_range(0..8);
        let plan = (0..len)
            .map(|_| {
                let x = rng.random_range(0..3);
                let y = (x + rng.random_range(1..3)) % 3;
                GroundAction::new(["a", "b", "c"][rng.random_range(0..3)], vec![objs[x].clone(), objs[y].clone()])
            })
            .collect();
        let mut init = State::new();
        let mut goal = BTreeSet::new();
        for p in preds {
            for o in &objs {
                let prop = Proposition::new(p, vec![o.clone()]);
                if rng.random_bool(0.3) {
                    init.insert(prop.clone());
                }
                if rng.random_bool(0.2) {
                    goal.insert(prop);
                }
            }
        }
        (d, plan, init, goal)
    }

    /// Direct transcription of the definitions, one double loop per rate.
    fn naive_rates(d: &Domain, plan: &[GroundAction], init: &State, goal: &BTreeSet<Proposition>, credit: bool) -> (u64, u64, u64, u64) {
        let g: Vec<_> = plan.iter().map(|a| d.action(&a.schema).unwrap().ground(&a.args).unwrap()).collect();
        let (mut unest, mut pres, mut red, mut adds) = (0, 0, 0, 0);
        for i in 0..g.len() {
            for p in &g[i].pre {
                pres += 1;
                let mut ok = init.contains(p);
                for j in 0..i {
                    if g[j].add.contains(p) {
                        ok = true;
                    }
                }
                if !ok {
                    unest += 1;
                }
            }
            for p in &g[i].add {
                adds += 1;
                let mut used = credit && goal.contains(p);
                for j in i + 1..g.len() {
                    if g[j].pre.contains(p) {
                        used = true;
                    }
                }
                if !used {
                    red += 1;
                }
            }
        }
        (unest, pres, red, adds)
    }

    #[test]
    fn rates_match_naive_definitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for k in 0..50 {
            let (d, plan, init, goal) = random_case(&mut rng);
            let credit = k % 2 == 0;
            let view = PlanView {
                id: k,
                plan: &plan,
                init: &init,
                goal: &goal,
            };
            let (u, p, r, a) = naive_rates(&d, &plan, &init, &goal, credit);
            let e = error_rate(&d, &[view]).unwrap();
            let rr = redundancy_rate(&d, &[view], credit).unwrap();
            assert_eq!((e.numerator, e.denominator), (u, p));
            assert_eq!((rr.numerator, rr.denominator), (r, a));
        }
    }

    #[test]
    fn ground_truth_has_zero_error_on_generated_corpora() {
        for name in bundled::NAMES {
            let bundle = bundled::by_name(name).unwrap();
            let cfg = CorpusConfig {
                train: 10,
                test: 10,
                ..CorpusConfig::default()
            };
            let corpus = build_corpus(&bundle, 4, &cfg).unwrap();
            let states: Vec<Vec<State>> = corpus.records.iter().map(|r| r.gold_states()).collect();
            let goals: Vec<BTreeSet<Proposition>> = corpus.records.iter().map(|r| r.gold_goal()).collect();
            let views: Vec<PlanView> = corpus
                .records
                .iter()
                .zip(&states)
                .zip(&goals)
                .map(|((r, s), g)| PlanView {
                    id: r.id,
                    plan: &r.plan,
                    init: &s[0],
                    goal: g,
                })
                .collect();
            let e = error_rate(&bundle.domain, &views).unwrap();
            assert_eq!(e.numerator, 0, "{name}");
        }
    }

    #[test]
    fn empty_adds_are_degenerate() {
        let mut d = Domain::new("d");
        d.actions.push(ActionSchema::new("noop", vec![]));
        let plan = vec![GroundAction::new("noop", vec![])];
        let init = State::new();
        let goal = BTreeSet::new();
        let v = PlanView {
            id: 0,
            plan: &plan,
            init: &init,
            goal: &goal,
        };
        let r = redundancy_rate(&d, &[v], true).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn unknown_action_is_an_error() {
        let d = Domain::new("d");
        let plan = vec![GroundAction::new("fly", vec![])];
        let init = State::new();
        let goal = BTreeSet::new();
        let v = PlanView {
            id: 3,
            plan: &plan,
            init: &init,
            goal: &goal,
        };
        assert!(matches!(error_rate(&d, &[v]), Err(EvalError::Ungroundable { plan: 3, step: 0, .. })));
    }
}
