//! Learning one action model from one observed trace.
//!
//! Every candidate membership `(action, slot, topical proposition, binding)`
//! becomes a boolean variable. Observations, action-pair statistics, goals
//! and a sparsity prior become weighted clauses; STRIPS consistency becomes
//! hard clauses. The MAX-SAT optimum decodes into a domain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::initializer::PropositionRegistry;
use crate::maxsat::{self, Clause, Lit, MaxSatError, MaxSatInstance, SolverConfig};
use crate::model::{ActionHeader, ActionSchema, Domain, GroundAction, LiftedAtom, ModelError, Proposition, State, TypeName};

#[derive(Debug, Error)]
pub enum SatError {
    #[error("trace has {states} states for a plan of {actions} actions")]
    Misaligned { states: usize, actions: usize },
    #[error("action `{name}` has {params} parameters; at most {max} are supported")]
    TooManyParams { name: String, params: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] MaxSatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatConfig {
    /// Weight of one supporting observation.
    pub observation_weight: f64,
    /// Also add clauses against memberships an observation contradicts.
    pub negative_evidence: bool,
    /// Minimum share of adjacent positions for an action pair to count.
    pub pair_threshold: f64,
    pub goal_weight: f64,
    pub sparsity: f64,
    pub max_params: usize,
    pub solver: SolverConfig,
}

impl Default for SatConfig {
    fn default() -> Self {
        SatConfig {
            observation_weight: 1.0,
            negative_evidence: true,
            pair_threshold: 0.3,
            goal_weight: 2.0,
            sparsity: 0.1,
            max_params: 4,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Pre,
    Add,
    Del,
}

pub const SLOTS: [Slot; 3] = [Slot::Pre, Slot::Add, Slot::Del];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecisionVar {
    pub action: usize,
    pub slot: Slot,
    pub topical: usize,
    /// `binding[j]` is the action parameter filling topical position `j`.
    pub binding: Vec<usize>,
}

/// Injective, type-respecting maps from a signature into action parameters.
pub fn bindings(signature: &[TypeName], header: &ActionHeader) -> Vec<Vec<usize>> {
    fn go(sig: &[TypeName], header: &ActionHeader, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == sig.len() {
            out.push(cur.clone());
            return;
        }
        let ty = &sig[cur.len()];
        for (i, p) in header.params.iter().enumerate() {
            if &p.ty == ty && !cur.contains(&i) {
                cur.push(i);
                go(sig, header, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(signature, header, &mut Vec::new(), &mut out);
    out
}

/// Candidate `(topical, binding)` pairs for every action.
pub fn candidates(
    registry: &PropositionRegistry,
    headers: &[ActionHeader],
    max_params: usize,
) -> Result<Vec<Vec<(usize, Vec<usize>)>>, SatError> {
    headers
        .iter()
        .map(|h| {
            if h.params.len() > max_params {
                return Err(SatError::TooManyParams {
                    name: h.name.clone(),
                    params: h.params.len(),
                    max: max_params,
                });
            }
            Ok(registry
                .entries()
                .iter()
                .enumerate()
                .flat_map(|(t, e)| bindings(&e.signature, h).into_iter().map(move |b| (t, b)))
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Encoding {
    pub instance: MaxSatInstance,
    /// Decision variables occupy the first `vars.len()` instance variables;
    /// auxiliary ones follow.
    pub vars: Vec<DecisionVar>,
}

fn ground_var(registry: &PropositionRegistry, v: &DecisionVar, args: &[crate::model::ObjectRef]) -> Proposition {
    Proposition::new(
        registry.get(v.topical).predicate.clone(),
        v.binding.iter().map(|&i| args[i].clone()).collect(),
    )
}

fn resolve(headers: &[ActionHeader], a: &GroundAction) -> Result<usize, SatError> {
    let k = headers
        .iter()
        .position(|h| h.name == a.schema)
        .ok_or_else(|| ModelError::UnknownAction(a.schema.clone()))?;
    let h = &headers[k];
    if h.params.len() != a.args.len() {
        return Err(ModelError::Arity {
            schema: h.name.clone(),
            expected: h.params.len(),
            got: a.args.len(),
        }
        .into());
    }
    for (position, (p, o)) in h.params.iter().zip(&a.args).enumerate() {
        if p.ty != o.ty {
            return Err(ModelError::TypeMismatch {
                schema: h.name.clone(),
                position,
                object: o.name.clone(),
                expected: p.ty.clone(),
                got: o.ty.clone(),
            }
            .into());
        }
    }
    Ok(k)
}

pub fn encode_constraints(
    states: &[State],
    plan: &[GroundAction],
    goal: &BTreeSet<Proposition>,
    registry: &PropositionRegistry,
    headers: &[ActionHeader],
    config: &SatConfig,
) -> Result<Encoding, SatError> {
    if states.len() != plan.len() + 1 {
        return Err(SatError::Misaligned {
            states: states.len(),
            actions: plan.len(),
        });
    }
    let cands = candidates(registry, headers, config.max_params)?;
    let mut vars = Vec::new();
    // per action: for each candidate, the variable of each slot
    let mut slot_vars: Vec<Vec<[usize; 3]>> = Vec::with_capacity(headers.len());
    for (a, list) in cands.iter().enumerate() {
        let mut row = Vec::with_capacity(list.len());
        for (t, b) in list {
            let mut ids = [0; 3];
            for (k, slot) in SLOTS.iter().enumerate() {
                let v = DecisionVar {
                    action: a,
                    slot: *slot,
                    topical: *t,
                    binding: b.clone(),
                };
                ids[k] = vars.len();
                vars.push(v);
            }
            row.push(ids);
        }
        slot_vars.push(row);
    }
    let mut inst = MaxSatInstance::new(vars.len());

    // H1, H2
    for row in &slot_vars {
        for &[pre, add, del] in row {
            inst.push(Clause::hard(vec![Lit::neg(add), Lit::neg(pre)]));
            inst.push(Clause::hard(vec![Lit::neg(del), Lit::pos(pre)]));
        }
    }

    // I1-I3 with optional negative evidence, accumulated per variable
    let occ: Vec<usize> = plan.iter().map(|a| resolve(headers, a)).collect::<Result<_, _>>()?;
    let mut support = vec![0.0f64; vars.len()];
    let mut against = vec![0.0f64; vars.len()];
    let w = config.observation_weight;
    for (i, step) in plan.iter().enumerate() {
        let a = occ[i];
        for (c, ids) in slot_vars[a].iter().enumerate() {
            let p = ground_var(registry, &vars[ids[0]], &step.args);
            let before = states[i].contains(&p);
            let after = states[i + 1].contains(&p);
            let [pre, add, del] = slot_vars[a][c];
            if before {
                support[pre] += w;
            } else {
                against[pre] += w;
            }
            if !before && after {
                support[add] += w;
            } else if !after {
                against[add] += w;
            }
            if before && !after {
                support[del] += w;
            } else if after {
                against[del] += w;
            }
        }
    }
    for v in 0..vars.len() {
        if support[v] > 0.0 {
            inst.push(Clause::soft(vec![Lit::pos(v)], support[v]));
        }
        if config.negative_evidence && against[v] > 0.0 {
            inst.push(Clause::soft(vec![Lit::neg(v)], against[v]));
        }
    }

    // P1: frequent adjacent action pairs sharing objects
    if plan.len() >= 2 {
        let mut patterns: BTreeMap<(usize, usize, Vec<(usize, usize)>), usize> = BTreeMap::new();
        for i in 0..plan.len() - 1 {
            let (x, y) = (&plan[i], &plan[i + 1]);
            let mut shared = Vec::new();
            for (p, ox) in x.args.iter().enumerate() {
                for (q, oy) in y.args.iter().enumerate() {
                    if ox == oy {
                        shared.push((p, q));
                    }
                }
            }
            if !shared.is_empty() {
                *patterns.entry((occ[i], occ[i + 1], shared)).or_default() += 1;
            }
        }
        let positions = (plan.len() - 1) as f64;
        for ((a, b, shared), count) in patterns {
            let freq = count as f64 / positions;
            if freq < config.pair_threshold {
                continue;
            }
            let mut options = Vec::new();
            for (ca, (t, ba)) in cands[a].iter().enumerate() {
                if ba.is_empty() {
                    continue;
                }
                for (cb, (t2, bb)) in cands[b].iter().enumerate() {
                    if t2 == t && ba.iter().zip(bb).all(|(&p, &q)| shared.contains(&(p, q))) {
                        let y = inst.add_var();
                        inst.push(Clause::hard(vec![Lit::neg(y), Lit::pos(slot_vars[a][ca][1])]));
                        inst.push(Clause::hard(vec![Lit::neg(y), Lit::pos(slot_vars[b][cb][0])]));
                        options.push(Lit::pos(y));
                    }
                }
            }
            if !options.is_empty() {
                inst.push(Clause::soft(options, freq));
            }
        }
    }

    // G1: goals not initially true are added by some step
    for g in goal {
        if states[0].contains(g) {
            continue;
        }
        let mut lits = BTreeSet::new();
        for (i, step) in plan.iter().enumerate() {
            let a = occ[i];
            for ids in &slot_vars[a] {
                if ground_var(registry, &vars[ids[1]], &step.args) == *g {
                    lits.insert(Lit::pos(ids[1]));
                }
            }
        }
        if !lits.is_empty() {
            inst.push(Clause::soft(lits.into_iter().collect(), config.goal_weight));
        }
    }

    // N1: sparsity prior
    if config.sparsity > 0.0 {
        for v in 0..vars.len() {
            inst.push(Clause::soft(vec![Lit::neg(v)], config.sparsity));
        }
    }
    Ok(Encoding { instance: inst, vars })
}

/// Domain skeleton over `registry` and `headers`: all types and predicates
/// declared, actions with empty pre/add/del.
pub fn empty_domain(name: &str, registry: &PropositionRegistry, headers: &[ActionHeader]) -> Domain {
    let mut d = Domain::new(name);
    d.types = headers
        .iter()
        .flat_map(|h| h.params.iter().map(|p| p.ty.clone()))
        .chain(registry.entries().iter().flat_map(|e| e.signature.iter().cloned()))
        .collect();
    d.predicates = registry.entries().iter().cloned().collect();
    d.actions = headers.iter().map(ActionSchema::from_header).collect();
    d
}

pub fn decode(
    vars: &[DecisionVar],
    assignment: &[bool],
    registry: &PropositionRegistry,
    headers: &[ActionHeader],
    name: &str,
) -> Domain {
    let mut d = empty_domain(name, registry, headers);
    for (v, _) in vars.iter().zip(assignment).filter(|(_, on)| **on) {
        let atom = LiftedAtom::new(registry.get(v.topical).predicate.clone(), v.binding.clone());
        let schema = &mut d.actions[v.action];
        match v.slot {
            Slot::Pre => schema.pre.insert(atom),
            Slot::Add => schema.add.insert(atom),
            Slot::Del => schema.del.insert(atom),
        };
    }
    d
}

/// Encodes, solves and decodes one trace. Actions the plan never executes
/// are left out of the result.
#[allow(clippy::too_many_arguments)]
pub fn learn_one(
    states: &[State],
    plan: &[GroundAction],
    goal: &BTreeSet<Proposition>,
    registry: &PropositionRegistry,
    headers: &[ActionHeader],
    config: &SatConfig,
    seed: u64,
    name: &str,
) -> Result<Domain, SatError> {
    let enc = encode_constraints(states, plan, goal, registry, headers, config)?;
    let sol = maxsat::solve(&enc.instance, &config.solver, seed)?;
    let mut d = decode(&enc.vars, &sol.assignment, registry, headers, name);
    d.actions.retain(|a| plan.iter().any(|g| g.schema == a.name));
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, bundled, CorpusConfig};
    use crate::model::{simulate_plan, ObjectRef, Param, TopicalProposition};

    fn micro() -> (Vec<ActionHeader>, PropositionRegistry, Domain) {
        let registry = PropositionRegistry::from_entries([
            TopicalProposition::new("p", &["Item"]),
            TopicalProposition::new("q", &["Item"]),
        ]);
        let header = ActionHeader {
            name: "a".into(),
            params: vec![Param::new("?x", "Item")],
        };
        let mut truth = empty_domain("learned", &registry, std::slice::from_ref(&header));
        truth.actions[0] = ActionSchema::from_header(&header)
            .with_pre([LiftedAtom::new("p", vec![0])])
            .with_add([LiftedAtom::new("q", vec![0])])
            .with_del([LiftedAtom::new("p", vec![0])]);
        (vec![header], registry, truth)
    }

    fn micro_trace() -> (Vec<State>, Vec<GroundAction>) {
        let o = ObjectRef::new("o1", "Item");
        let s0: State = [Proposition::new("p", vec![o.clone()])].into_iter().collect();
        let s1: State = [Proposition::new("q", vec![o.clone()])].into_iter().collect();
        (vec![s0, s1], vec![GroundAction::new("a", vec![o])])
    }

    #[test]
    fn bindings_are_typed_and_injective() {
        let h = ActionHeader {
            name: "stack".into(),
            params: vec![Param::new("?x", "Block"), Param::new("?y", "Block"), Param::new("?r", "Robot")],
        };
        let sig = [TypeName::new("Block"), TypeName::new("Block")];
        assert_eq!(bindings(&sig, &h), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(bindings(&[TypeName::new("Robot")], &h), vec![vec![2]]);
        assert_eq!(bindings(&[], &h), vec![Vec::<usize>::new()]);
        assert!(bindings(&[TypeName::new("Robot"), TypeName::new("Robot")], &h).is_empty());
    }

    #[test]
    fn micro_domain_optimum_is_unique_truth() {
        let (headers, registry, truth) = micro();
        let (states, plan) = micro_trace();
        let enc = encode_constraints(&states, &plan, &BTreeSet::new(), &registry, &headers, &SatConfig::default()).unwrap();
        // brute force: the optimum is unique and decodes to the truth
        let n = enc.instance.num_vars;
        let mut best = f64::INFINITY;
        let mut argmins = Vec::new();
        for mask in 0u32..(1 << n) {
            let a: Vec<bool> = (0..n).map(|v| mask >> v & 1 == 1).collect();
            let c = enc.instance.cost(&a);
            if c.hard_violated > 0 {
                continue;
            }
            if c.soft_penalty < best - 1e-12 {
                best = c.soft_penalty;
                argmins = vec![a];
            } else if (c.soft_penalty - best).abs() < 1e-12 {
                argmins.push(a);
            }
        }
        assert_eq!(argmins.len(), 1);
        assert_eq!(decode(&enc.vars, &argmins[0], &registry, &headers, "learned"), truth);
        let learned = learn_one(&states, &plan, &BTreeSet::new(), &registry, &headers, &SatConfig::default(), 1, "learned").unwrap();
        assert_eq!(learned, truth);
    }

    #[test]
    fn empty_trace_gives_vacuous_domain() {
        let (headers, registry, _) = micro();
        let states = vec![State::new()];
        let enc = encode_constraints(&states, &[], &BTreeSet::new(), &registry, &headers, &SatConfig::default()).unwrap();
        assert!(enc.instance.clauses.iter().all(|c| c.is_hard() || c.lits.iter().all(|l| !l.positive)));
        let d = learn_one(&states, &[], &BTreeSet::new(), &registry, &headers, &SatConfig::default(), 0, "d").unwrap();
        assert!(d.actions.iter().all(|a| a.pre.is_empty() && a.add.is_empty() && a.del.is_empty()));
    }

    #[test]
    fn misaligned_trace_is_rejected() {
        let (headers, registry, _) = micro();
        let (states, plan) = micro_trace();
        let err = encode_constraints(&states[..1], &plan, &BTreeSet::new(), &registry, &headers, &SatConfig::default());
        assert!(matches!(err, Err(SatError::Misaligned { states: 1, actions: 1 })));
    }

    #[test]
    fn too_many_params_rejected() {
        let registry = PropositionRegistry::new();
        let h = ActionHeader {
            name: "big".into(),
            params: (0..5).map(|i| Param::new(format!("?p{i}"), "T")).collect(),
        };
        assert!(matches!(candidates(&registry, &[h], 4), Err(SatError::TooManyParams { .. })));
    }

    #[test]
    fn blocks_pick_up_from_one_clean_trace() {
        let bundle = bundled::blocks();
        let cfg = CorpusConfig {
            train: 30,
            test: 0,
            ..CorpusConfig::default()
        };
        let corpus = build_corpus(&bundle, 5, &cfg).unwrap();
        let registry = PropositionRegistry::from_entries(bundle.domain.predicates.iter().cloned());
        let headers = bundle.domain.headers();
        let rec = corpus
            .records
            .iter()
            .find(|r| r.plan.iter().any(|a| a.schema == "pick-up"))
            .expect("some plan picks up a block");
        let d = learn_one(&rec.gold_states(), &rec.plan, &rec.gold_goal(), &registry, &headers, &SatConfig::default(), 3, "learned").unwrap();
        let pick = d.action("pick-up").unwrap();
        assert!(pick.pre.contains(&LiftedAtom::new("on-table", vec![0])));
        assert!(pick.pre.contains(&LiftedAtom::new("hand-empty", vec![])));
        d.validate().unwrap();
        // learned effects reproduce the observed trace
        let sim = simulate_plan(&rec.gold_states()[0], &rec.plan, &d, false).unwrap();
        assert_eq!(sim, rec.gold_states());
    }

    #[test]
    fn identical_traces_give_identical_domains() {
        let (headers, registry, _) = micro();
        let (states, plan) = micro_trace();
        let cfg = SatConfig::default();
        let ds: Vec<Domain> = (0..4)
            .map(|_| learn_one(&states, &plan, &BTreeSet::new(), &registry, &headers, &cfg, 9, "d").unwrap())
            .collect();
        assert!(ds.windows(2).all(|w| w[0] == w[1]));
    }
}
