//! Greedy best-first forward search with the goal-count heuristic.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{ActionSchema, Domain, GroundAction, ObjectRef, Problem, Proposition, State};

use super::CorpusError;

/// All argument tuples for `schema` over `objects`, type-correct and with
/// pairwise distinct objects.
pub fn groundings(schema: &ActionSchema, objects: &[ObjectRef]) -> Vec<Vec<ObjectRef>> {
    let mut out = vec![Vec::new()];
    for p in &schema.params {
        let mut next = Vec::new();
        for partial in &out {
            for o in objects.iter().filter(|o| o.ty == p.ty) {
                if partial.contains(o) {
                    continue;
                }
                let mut ext: Vec<ObjectRef> = partial.clone();
                ext.push(o.clone());
                next.push(ext);
            }
        }
        out = next;
    }
    out
}

/// Every ground action of `domain` over `objects`, in a fixed order.
pub fn all_ground_actions(domain: &Domain, objects: &[ObjectRef]) -> Vec<GroundAction> {
    domain
        .actions
        .iter()
        .flat_map(|a| {
            groundings(a, objects)
                .into_iter()
                .map(move |args| GroundAction::new(a.name.clone(), args))
        })
        .collect()
}

/// Precomputed grounded pre/add/del for each ground action.
pub struct Successors {
    actions: Vec<(GroundAction, Vec<Proposition>, Vec<Proposition>, Vec<Proposition>)>,
}

impl Successors {
    pub fn new(domain: &Domain, objects: &[ObjectRef]) -> Self {
        let actions = all_ground_actions(domain, objects)
            .into_iter()
            .map(|ga| {
                let g = domain.action(&ga.schema).unwrap().ground(&ga.args).unwrap();
                let (pre, add, del) = (
                    g.pre.into_iter().collect(),
                    g.add.into_iter().collect(),
                    g.del.into_iter().collect(),
                );
                (ga, pre, add, del)
            })
            .collect();
        Successors { actions }
    }

    pub fn applicable<'a>(&'a self, state: &'a State) -> impl Iterator<Item = usize> + 'a {
        self.actions
            .iter()
            .enumerate()
            .filter(move |(_, (_, pre, _, _))| pre.iter().all(|p| state.contains(p)))
            .map(|(i, _)| i)
    }

    pub fn action(&self, i: usize) -> &GroundAction {
        &self.actions[i].0
    }

    pub fn successor(&self, state: &State, i: usize) -> State {
        let (_, _, add, del) = &self.actions[i];
        let mut next = state.clone();
        for d in del {
            next.remove(d);
        }
        next.extend(add.iter().cloned());
        next
    }
}

fn goal_count(state: &State, goal: &std::collections::BTreeSet<Proposition>) -> usize {
    goal.iter().filter(|g| !state.contains(g)).count()
}

/// Returns `(plan, trace)` where `trace[0]` is the initial state and
/// `trace[i + 1]` follows `plan[i]`. Ties on the heuristic are broken by a
/// random key drawn from `rng`.
pub fn solve(
    domain: &Domain,
    problem: &Problem,
    node_budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<GroundAction>, Vec<State>), CorpusError> {
    let succ = Successors::new(domain, &problem.objects);
    // node table: state, parent node, action index
    let mut nodes: Vec<(State, Option<(usize, usize)>)> = vec![(problem.init.clone(), None)];
    let mut seen: HashMap<State, usize> = HashMap::new();
    seen.insert(problem.init.clone(), 0);
    let mut open = BinaryHeap::new();
    open.push(Reverse((goal_count(&problem.init, &problem.goal), rng.random::<u64>(), 0usize)));
    let mut expanded = 0;
    while let Some(Reverse((h, _, id))) = open.pop() {
        if h == 0 {
            let mut plan = Vec::new();
            let mut trace = vec![nodes[id].0.clone()];
            let mut cur = id;
            while let Some((parent, a)) = nodes[cur].1 {
                plan.push(succ.action(a).clone());
                trace.push(nodes[parent].0.clone());
                cur = parent;
            }
            plan.reverse();
            trace.reverse();
            return Ok((plan, trace));
        }
        expanded += 1;
        if expanded > node_budget {
            break;
        }
        let state = nodes[id].0.clone();
        for a in succ.applicable(&state).collect::<Vec<_>>() {
            let next = succ.successor(&state, a);
            if seen.contains_key(&next) {
                continue;
            }
            let nid = nodes.len();
            seen.insert(next.clone(), nid);
            let h = goal_count(&next, &problem.goal);
            nodes.push((next, Some((id, a))));
            open.push(Reverse((h, rng.random::<u64>(), nid)));
        }
    }
    Err(CorpusError::SearchExhausted {
        problem: problem.name.clone(),
        expanded: expanded.min(node_budget),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bundled;
    use crate::model::simulate_plan;
    use rand::SeedableRng;

    fn b(n: usize) -> ObjectRef {
        ObjectRef::new(format!("Block{n}"), "Block")
    }

    #[test]
    fn goal_in_init_gives_empty_plan() {
        let d = bundled::blocks().domain;
        let init: State = [Proposition::new("on-table", vec![b(1)])].into_iter().collect();
        let p = Problem {
            name: "t".into(),
            objects: vec![b(1)],
            goal: init.clone(),
            init,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (plan, trace) = solve(&d, &p, 1000, &mut rng).unwrap();
        assert!(plan.is_empty());
        assert_eq!(trace, vec![p.init.clone()]);
    }

    #[test]
    fn two_step_stack() {
        let d = bundled::blocks().domain;
        let init: State = [
            Proposition::new("on-table", vec![b(1)]),
            Proposition::new("on-table", vec![b(2)]),
            Proposition::new("clear", vec![b(1)]),
            Proposition::new("clear", vec![b(2)]),
            Proposition::new("hand-empty", vec![]),
        ]
        .into_iter()
        .collect();
        let p = Problem {
            name: "t".into(),
            objects: vec![b(1), b(2)],
            init,
            goal: [Proposition::new("on", vec![b(1), b(2)])].into_iter().collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (plan, trace) = solve(&d, &p, 1000, &mut rng).unwrap();
        assert_eq!(
            plan,
            vec![
                GroundAction::new("pick-up", vec![b(1)]),
                GroundAction::new("put-down", vec![b(1), b(2)]),
            ]
        );
        assert_eq!(simulate_plan(&p.init, &plan, &d, true).unwrap(), trace);
    }

    #[test]
    fn unreachable_goal_exhausts() {
        let d = bundled::blocks().domain;
        let p = Problem {
            name: "t".into(),
            objects: vec![b(1)],
            init: State::new(),
            goal: [Proposition::new("holding", vec![b(1)])].into_iter().collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(solve(&d, &p, 100, &mut rng), Err(CorpusError::SearchExhausted { .. })));
    }

    #[test]
    fn groundings_are_distinct_and_typed() {
        let d = bundled::blocks().domain;
        let objs: Vec<_> = (1..=3).map(b).collect();
        let put = d.action("put-down").unwrap();
        let g = groundings(put, &objs);
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|a| a[0] != a[1]));
    }
}
