//! Merging per-trace domains into one.
//!
//! For every action and slot, the N learned domains give an N × L binary
//! membership matrix over candidate atoms. A rank-one fit `M ≈ 1 βᵀ` gives a
//! score per candidate; scores above `λ` become members.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::initializer::PropositionRegistry;
use crate::model::{ActionHeader, ActionSchema, Domain, LiftedAtom};
use crate::nn::Mat;
use crate::satlearn::{candidates, empty_domain, SatError, Slot, SLOTS};

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("no domains to merge")]
    Empty,
    #[error("domain {domain}, action `{action}`: atom `{atom}` is not a candidate over the registry")]
    RegistryMismatch { domain: usize, action: String, atom: String },
    #[error("fit diverged at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Candidates(#[from] SatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub absent: AbsentRows,
}

/// How a per-plan domain that lacks an action enters that action's matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsentRows {
    /// No row: only domains that learned the action vote on it.
    #[default]
    Skip,
    /// An all-zero row.
    Zeros,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            epochs: 25_000,
            lr: 1e-2,
            lambda: 0.5,
            absent: AbsentRows::Skip,
        }
    }
}

/// Membership matrices of one action; columns are candidate atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMatrices {
    pub action: String,
    pub columns: Vec<LiftedAtom>,
    pub pre: Mat,
    pub add: Mat,
    pub del: Mat,
}

impl ActionMatrices {
    pub fn slot(&self, s: Slot) -> &Mat {
        match s {
            Slot::Pre => &self.pre,
            Slot::Add => &self.add,
            Slot::Del => &self.del,
        }
    }
}

pub fn build_matrices(
    domains: &[Domain],
    registry: &PropositionRegistry,
    headers: &[ActionHeader],
    absent: AbsentRows,
) -> Result<Vec<ActionMatrices>, ConsensusError> {
    if domains.is_empty() {
        return Err(ConsensusError::Empty);
    }
    let cands = candidates(registry, headers, usize::MAX)?;
    let mut out = Vec::with_capacity(headers.len());
    for (h, list) in headers.iter().zip(&cands) {
        let rows: Vec<Option<&ActionSchema>> = domains
            .iter()
            .map(|d| d.action(&h.name))
            .filter(|a| absent == AbsentRows::Zeros || a.is_some())
            .collect();
        let n = rows.len();
        let columns: Vec<LiftedAtom> = list
            .iter()
            .map(|(t, b)| LiftedAtom::new(registry.get(*t).predicate.clone(), b.clone()))
            .collect();
        let col_of: std::collections::HashMap<&LiftedAtom, usize> = columns.iter().enumerate().map(|(j, c)| (c, j)).collect();
        let l = columns.len();
        let mut m = ActionMatrices {
            action: h.name.clone(),
            pre: Mat::zeros(n, l),
            add: Mat::zeros(n, l),
            del: Mat::zeros(n, l),
            columns: Vec::new(),
        };
        for (row, schema) in rows.iter().enumerate() {
            let Some(schema) = schema else {
                continue;
            };
            for (slot, set) in [(Slot::Pre, &schema.pre), (Slot::Add, &schema.add), (Slot::Del, &schema.del)] {
                for atom in set {
                    let j = *col_of.get(atom).ok_or_else(|| ConsensusError::RegistryMismatch {
                        domain: row,
                        action: h.name.clone(),
                        atom: schema.render_atom(atom),
                    })?;
                    let mat = match slot {
                        Slot::Pre => &mut m.pre,
                        Slot::Add => &mut m.add,
                        Slot::Del => &mut m.del,
                    };
                    mat.data[row * l + j] = 1.0;
                }
            }
        }
        m.columns = columns;
        out.push(m);
    }
    Ok(out)
}

/// Gradient descent on `(1/2N) ‖M − 1 βᵀ‖²_F` from `β = 0`; the result is
/// clamped to `[0, 1]`. The minimizer is the column mean of `M`.
pub fn fit(m: &Mat, epochs: usize, lr: f64) -> Result<Vec<f64>, ConsensusError> {
    let n = m.rows.max(1) as f64;
    let mut mean = vec![0.0; m.cols];
    for r in 0..m.rows {
        for (s, x) in mean.iter_mut().zip(m.row(r)) {
            *s += x;
        }
    }
    mean.iter_mut().for_each(|s| *s /= n);
    // ∂/∂β = β − colmean(M)
    let mut beta = vec![0.0; m.cols];
    for epoch in 0..epochs {
        for (b, c) in beta.iter_mut().zip(&mean) {
            *b -= lr * (*b - c);
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(ConsensusError::Diverged(epoch + 1));
        }
    }
    Ok(beta.into_iter().map(|b| b.clamp(0.0, 1.0)).collect())
}

/// Objective value of [`fit`] at `beta`.
pub fn fit_loss(m: &Mat, beta: &[f64]) -> f64 {
    let n = m.rows.max(1) as f64;
    (0..m.rows)
        .map(|r| m.row(r).iter().zip(beta).map(|(x, b)| (x - b) * (x - b)).sum::<f64>())
        .sum::<f64>()
        / (2.0 * n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScores {
    pub action: String,
    pub columns: Vec<LiftedAtom>,
    pub pre: Vec<f64>,
    pub add: Vec<f64>,
    pub del: Vec<f64>,
}

impl ActionScores {
    pub fn slot(&self, s: Slot) -> &[f64] {
        match s {
            Slot::Pre => &self.pre,
            Slot::Add => &self.add,
            Slot::Del => &self.del,
        }
    }
}

/// Members are the candidates scoring strictly above `lambda`. Repair keeps
/// the STRIPS invariants: an atom both added and required is dropped from
/// add; a deleted atom that is not required becomes required.
pub fn threshold_and_assemble(
    scores: &[ActionScores],
    lambda: f64,
    headers: &[ActionHeader],
    registry: &PropositionRegistry,
    name: &str,
) -> Domain {
    let mut d = empty_domain(name, registry, headers);
    for schema in &mut d.actions {
        let Some(s) = scores.iter().find(|s| s.action == schema.name) else {
            continue;
        };
        for slot in SLOTS {
            for (atom, &v) in s.columns.iter().zip(s.slot(slot)) {
                if v > lambda {
                    match slot {
                        Slot::Pre => schema.pre.insert(atom.clone()),
                        Slot::Add => schema.add.insert(atom.clone()),
                        Slot::Del => schema.del.insert(atom.clone()),
                    };
                }
            }
        }
        let pre = schema.pre.clone();
        schema.add.retain(|a| !pre.contains(a));
        let missing: Vec<LiftedAtom> = schema.del.difference(&schema.pre).cloned().collect();
        schema.pre.extend(missing);
    }
    d
}

pub fn score_matrices(matrices: &[ActionMatrices], config: &ConsensusConfig) -> Result<Vec<ActionScores>, ConsensusError> {
    matrices
        .iter()
        .map(|m| {
            Ok(ActionScores {
                action: m.action.clone(),
                columns: m.columns.clone(),
                pre: fit(&m.pre, config.epochs, config.lr)?,
                add: fit(&m.add, config.epochs, config.lr)?,
                del: fit(&m.del, config.epochs, config.lr)?,
            })
        })
        .collect()
}

/// The conclusive domain and the scores behind it.
pub fn conclusive(
    domains: &[Domain],
    registry: &PropositionRegistry,
    headers: &[ActionHeader],
    config: &ConsensusConfig,
    name: &str,
) -> Result<(Domain, Vec<ActionScores>), ConsensusError> {
    let matrices = build_matrices(domains, registry, headers, config.absent)?;
    let scores = score_matrices(&matrices, config)?;
    let d = threshold_and_assemble(&scores, config.lambda, headers, registry, name);
    Ok((d, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bundled;
    use crate::pddl::{emit_domain, parse_domain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blocks() -> (Domain, PropositionRegistry, Vec<ActionHeader>) {
        let d = bundled::blocks().domain;
        let reg = PropositionRegistry::from_entries(d.predicates.iter().cloned());
        let h = d.headers();
        (d, reg, h)
    }

    /// Re-expresses `d` in the skeleton produced from `reg` and `h`.
    fn normalized(d: &Domain, reg: &PropositionRegistry, h: &[ActionHeader]) -> Domain {
        let mut e = empty_domain(&d.name, reg, h);
        for a in &mut e.actions {
            let src = d.action(&a.name).unwrap();
            a.pre = src.pre.clone();
            a.add = src.add.clone();
            a.del = src.del.clone();
        }
        e
    }

    #[test]
    fn fit_matches_column_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (n, l) = (rng.random_range(1..=16), rng.random_range(1..=64));
            let mut m = Mat::zeros(n, l);
            m.data.iter_mut().for_each(|x| *x = if rng.random_bool(0.4) { 1.0 } else { 0.0 });
            let beta = fit(&m, 25_000, 1e-2).unwrap();
            for j in 0..l {
                let mean = (0..n).map(|r| m.get(r, j)).sum::<f64>() / n as f64;
                assert!((beta[j] - mean).abs() <= 1e-3);
            }
            // stationary point of the objective
            let eps = 1e-6;
            for j in 0..l.min(4) {
                let mut b2 = beta.clone();
                b2[j] += eps;
                assert!(fit_loss(&m, &b2) >= fit_loss(&m, &beta) - 1e-12);
            }
        }
    }

    #[test]
    fn identical_rows_fit_exactly() {
        let mut m = Mat::zeros(3, 4);
        for r in 0..3 {
            m.row_mut(r).copy_from_slice(&[1.0, 0.0, 1.0, 1.0]);
        }
        let b = fit(&m, 25_000, 1e-2).unwrap();
        for (x, y) in b.iter().zip([1.0, 0.0, 1.0, 1.0]) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_score_is_excluded() {
        let (_, reg, h) = blocks();
        let a = &h[0];
        let col = LiftedAtom::new("holding", vec![0]);
        let s = ActionScores {
            action: a.name.clone(),
            columns: vec![col.clone()],
            pre: vec![0.5],
            add: vec![0.5000001],
            del: vec![0.0],
        };
        let d = threshold_and_assemble(&[s], 0.5, &h, &reg, "d");
        let sch = d.action(&a.name).unwrap();
        assert!(sch.pre.is_empty());
        assert!(sch.add.contains(&col));
    }

    #[test]
    fn zero_scores_give_vacuous_schemas() {
        let (d, reg, h) = blocks();
        let ms = build_matrices(&[Domain::new("x")], &reg, &h, AbsentRows::Zeros).unwrap();
        let scores = score_matrices(&ms, &ConsensusConfig { epochs: 10, ..Default::default() }).unwrap();
        let out = threshold_and_assemble(&scores, 0.5, &h, &reg, &d.name);
        assert!(out.actions.iter().all(|a| a.pre.is_empty() && a.add.is_empty() && a.del.is_empty()));
    }

    #[test]
    fn missing_action_gives_zero_row() {
        let (d, reg, h) = blocks();
        let mut partial = d.clone();
        partial.actions.retain(|a| a.name != "pick-up");
        let ms = build_matrices(&[d.clone(), partial.clone()], &reg, &h, AbsentRows::Zeros).unwrap();
        let pick = ms.iter().find(|m| m.action == "pick-up").unwrap();
        assert!(pick.pre.row(1).iter().all(|&x| x == 0.0));
        assert!(pick.pre.row(0).iter().any(|&x| x == 1.0));
        let ms = build_matrices(&[partial, d.clone()], &reg, &h, AbsentRows::Skip).unwrap();
        let pick = ms.iter().find(|m| m.action == "pick-up").unwrap();
        assert_eq!(pick.pre.rows, 1);
        assert!(pick.pre.row(0).iter().any(|&x| x == 1.0));
        assert!(ms.iter().filter(|m| m.action != "pick-up").all(|m| m.pre.rows == 2));
    }

    #[test]
    fn action_seen_by_a_minority_keeps_its_schema() {
        let (d, reg, h) = blocks();
        let mut partial = d.clone();
        partial.actions.retain(|a| a.name != "pick-up");
        let domains = vec![d.clone(), partial.clone(), partial];
        let (skip, _) = conclusive(&domains, &reg, &h, &ConsensusConfig::default(), &d.name).unwrap();
        assert_eq!(skip, normalized(&d, &reg, &h));
        let zeros = ConsensusConfig {
            absent: AbsentRows::Zeros,
            ..Default::default()
        };
        let (merged, _) = conclusive(&domains, &reg, &h, &zeros, &d.name).unwrap();
        assert!(merged.action("pick-up").unwrap().pre.is_empty());
    }

    #[test]
    fn column_sums_count_memberships() {
        let (d, reg, h) = blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let domains: Vec<Domain> = (0..9).map(|_| corrupt(&d, &reg, &h, 0.3, &mut rng)).collect();
        let ms = build_matrices(&domains, &reg, &h, AbsentRows::Skip).unwrap();
        for m in &ms {
            for slot in SLOTS {
                for (j, col) in m.columns.iter().enumerate() {
                    let count = domains
                        .iter()
                        .filter(|dd| {
                            let a = dd.action(&m.action).unwrap();
                            match slot {
                                Slot::Pre => a.pre.contains(col),
                                Slot::Add => a.add.contains(col),
                                Slot::Del => a.del.contains(col),
                            }
                        })
                        .count();
                    let sum: f64 = (0..domains.len()).map(|r| m.slot(slot).get(r, j)).sum();
                    assert_eq!(sum as usize, count);
                }
            }
        }
    }

    /// Flips every candidate membership with probability `rate`.
    fn corrupt(d: &Domain, reg: &PropositionRegistry, h: &[ActionHeader], rate: f64, rng: &mut ChaCha8Rng) -> Domain {
        let cands = candidates(reg, h, 4).unwrap();
        let mut out = normalized(d, reg, h);
        for (a, list) in out.actions.iter_mut().zip(&cands) {
            for (t, b) in list {
                let atom = LiftedAtom::new(reg.get(*t).predicate.clone(), b.clone());
                for set in [&mut a.pre, &mut a.add, &mut a.del] {
                    if rng.random_bool(rate) && !set.remove(&atom) {
                        set.insert(atom.clone());
                    }
                }
            }
        }
        out
    }

    #[test]
    fn majority_vote_at_half() {
        let (d, reg, h) = blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let domains: Vec<Domain> = (0..7).map(|_| corrupt(&d, &reg, &h, 0.35, &mut rng)).collect();
        let ms = build_matrices(&domains, &reg, &h, AbsentRows::Skip).unwrap();
        let scores = score_matrices(&ms, &ConsensusConfig::default()).unwrap();
        for (m, s) in ms.iter().zip(&scores) {
            for slot in SLOTS {
                for j in 0..m.columns.len() {
                    let votes: usize = (0..7).filter(|&r| m.slot(slot).get(r, j) == 1.0).count();
                    assert_eq!(s.slot(slot)[j] > 0.5, votes * 2 > 7);
                }
            }
        }
    }

    #[test]
    fn corrupted_minority_is_outvoted() {
        let (d, reg, h) = blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clean = normalized(&d, &reg, &h);
        let mut domains = vec![clean.clone(); 7];
        for _ in 0..3 {
            domains.push(corrupt(&d, &reg, &h, 0.2, &mut rng));
        }
        let (merged, _) = conclusive(&domains, &reg, &h, &ConsensusConfig::default(), &d.name).unwrap();
        assert_eq!(merged, clean);
        let back = parse_domain(&emit_domain(&merged)).unwrap();
        assert_eq!(back, merged);
    }

    #[test]
    fn repair_restores_invariants() {
        let (_, reg, h) = blocks();
        let a = h.iter().find(|x| x.name == "pick-up").unwrap();
        let col = LiftedAtom::new("holding", vec![0]);
        let col2 = LiftedAtom::new("clear", vec![0]);
        let s = ActionScores {
            action: a.name.clone(),
            columns: vec![col.clone(), col2.clone()],
            pre: vec![0.9, 0.1],
            add: vec![0.9, 0.0],
            del: vec![0.0, 0.9],
        };
        let d = threshold_and_assemble(&[s], 0.5, &h, &reg, "d");
        let sch = d.action("pick-up").unwrap();
        assert!(sch.add.is_empty());
        assert!(sch.pre.contains(&col2));
        d.validate().unwrap();
    }

    #[test]
    fn mismatched_registry_is_reported() {
        let (d, _, h) = blocks();
        let small = PropositionRegistry::from_entries(d.predicates.iter().take(1).cloned());
        assert!(matches!(
            build_matrices(&[d.clone()], &small, &h, AbsentRows::Skip),
            Err(ConsensusError::RegistryMismatch { .. })
        ));
    }
}
