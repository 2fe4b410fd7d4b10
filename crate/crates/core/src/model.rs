//! STRIPS data model: typed objects, propositions, action schemas, domains,
//! grounding and state progression.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeName(pub String);

impl TypeName {
    pub fn new(name: impl Into<String>) -> Self {
        TypeName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A named object of a task. Names are case-sensitive and unique per task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeName,
}

impl ObjectRef {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        ObjectRef {
            name: name.into(),
            ty: TypeName(ty.into()),
        }
    }
}

/// Lifted atom `⟨predicate, ordered parameter types⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TopicalProposition {
    pub predicate: String,
    pub signature: Vec<TypeName>,
}

impl TopicalProposition {
    pub fn new(predicate: impl Into<String>, signature: &[&str]) -> Self {
        TopicalProposition {
            predicate: predicate.into(),
            signature: signature.iter().map(|t| TypeName::new(*t)).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.signature.len()
    }
}

impl fmt::Display for TopicalProposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for (i, t) in self.signature.iter().enumerate() {
            write!(f, " ?x{i} - {t}")?;
        }
        f.write_str(")")
    }
}

/// Ground atom `⟨predicate, ordered objects⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Proposition {
    pub predicate: String,
    pub params: Vec<ObjectRef>,
}

impl Proposition {
    pub fn new(predicate: impl Into<String>, params: Vec<ObjectRef>) -> Self {
        Proposition {
            predicate: predicate.into(),
            params,
        }
    }

    /// The typed lift of this atom.
    pub fn topical(&self) -> TopicalProposition {
        topical_of(self)
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for p in &self.params {
            write!(f, " {}", p.name)?;
        }
        f.write_str(")")
    }
}

pub fn topical_of(p: &Proposition) -> TopicalProposition {
    TopicalProposition {
        predicate: p.predicate.clone(),
        signature: p.params.iter().map(|o| o.ty.clone()).collect(),
    }
}

pub type State = BTreeSet<Proposition>;

/// Atom inside an action schema; `args` index into the schema's parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LiftedAtom {
    pub predicate: String,
    pub args: Vec<usize>,
}

impl LiftedAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<usize>) -> Self {
        LiftedAtom {
            predicate: predicate.into(),
            args,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeName,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Param {
            name: name.into(),
            ty: TypeName(ty.into()),
        }
    }
}

/// Action name plus typed parameter list, without pre/eff. This is all the
/// learner is told about each action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionHeader {
    pub name: String,
    pub params: Vec<Param>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<Param>,
    pub pre: BTreeSet<LiftedAtom>,
    pub add: BTreeSet<LiftedAtom>,
    pub del: BTreeSet<LiftedAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("action `{schema}`: expected {expected} arguments, got {got}")]
    Arity {
        schema: String,
        expected: usize,
        got: usize,
    },
    #[error("action `{schema}`: argument {position} `{object}` has type `{got}`, expected `{expected}`")]
    TypeMismatch {
        schema: String,
        position: usize,
        object: String,
        expected: TypeName,
        got: TypeName,
    },
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action `{action}` not applicable, missing preconditions: {missing}")]
    NotApplicable { action: String, missing: String },
    #[error("action `{action}`: {msg}")]
    InvalidSchema { action: String, msg: String },
    #[error("domain: {0}")]
    InvalidDomain(String),
}

impl ActionSchema {
    pub fn new(name: impl Into<String>, params: Vec<Param>) -> Self {
        ActionSchema {
            name: name.into(),
            params,
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
        }
    }

    pub fn header(&self) -> ActionHeader {
        ActionHeader {
            name: self.name.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_header(h: &ActionHeader) -> Self {
        ActionSchema::new(h.name.clone(), h.params.clone())
    }

    pub fn with_pre(mut self, atoms: impl IntoIterator<Item = LiftedAtom>) -> Self {
        self.pre.extend(atoms);
        self
    }

    pub fn with_add(mut self, atoms: impl IntoIterator<Item = LiftedAtom>) -> Self {
        self.add.extend(atoms);
        self
    }

    pub fn with_del(mut self, atoms: impl IntoIterator<Item = LiftedAtom>) -> Self {
        self.del.extend(atoms);
        self
    }

    /// Typed lift of a lifted atom under this schema's parameter types.
    pub fn topical_of_atom(&self, atom: &LiftedAtom) -> TopicalProposition {
        TopicalProposition {
            predicate: atom.predicate.clone(),
            signature: atom.args.iter().map(|&i| self.params[i].ty.clone()).collect(),
        }
    }

    /// Checks add ∩ pre = ∅, del ⊆ pre and that every atom argument is a
    /// valid parameter index.
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |msg: String| ModelError::InvalidSchema {
            action: self.name.clone(),
            msg,
        };
        for atom in self.pre.iter().chain(&self.add).chain(&self.del) {
            if let Some(&i) = atom.args.iter().find(|&&i| i >= self.params.len()) {
                return Err(bad(format!(
                    "atom `{}` references parameter {i} of {}",
                    atom.predicate,
                    self.params.len()
                )));
            }
        }
        if let Some(a) = self.add.intersection(&self.pre).next() {
            return Err(bad(format!("`{}` is both added and required", self.render_atom(a))));
        }
        if let Some(d) = self.del.difference(&self.pre).next() {
            return Err(bad(format!("deleted `{}` is not a precondition", self.render_atom(d))));
        }
        Ok(())
    }

    pub fn render_atom(&self, atom: &LiftedAtom) -> String {
        let mut s = format!("({}", atom.predicate);
        for &i in &atom.args {
            match self.params.get(i) {
                Some(p) => s.push_str(&format!(" {}", p.name)),
                None => s.push_str(&format!(" ?{i}")),
            }
        }
        s.push(')');
        s
    }

    pub fn ground(&self, args: &[ObjectRef]) -> Result<GroundedEffects, ModelError> {
        ground(self, args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundedEffects {
    pub pre: BTreeSet<Proposition>,
    pub add: BTreeSet<Proposition>,
    pub del: BTreeSet<Proposition>,
}

pub fn ground(schema: &ActionSchema, args: &[ObjectRef]) -> Result<GroundedEffects, ModelError> {
    if args.len() != schema.params.len() {
        return Err(ModelError::Arity {
            schema: schema.name.clone(),
            expected: schema.params.len(),
            got: args.len(),
        });
    }
    for (position, (param, arg)) in schema.params.iter().zip(args).enumerate() {
        if param.ty != arg.ty {
            return Err(ModelError::TypeMismatch {
                schema: schema.name.clone(),
                position,
                object: arg.name.clone(),
                expected: param.ty.clone(),
                got: arg.ty.clone(),
            });
        }
    }
    let inst = |set: &BTreeSet<LiftedAtom>| -> BTreeSet<Proposition> {
        set.iter()
            .map(|a| Proposition {
                predicate: a.predicate.clone(),
                params: a.args.iter().map(|&i| args[i].clone()).collect(),
            })
            .collect()
    };
    Ok(GroundedEffects {
        pre: inst(&schema.pre),
        add: inst(&schema.add),
        del: inst(&schema.del),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAction {
    #[serde(rename = "action")]
    pub schema: String,
    pub args: Vec<ObjectRef>,
}

impl GroundAction {
    pub fn new(schema: impl Into<String>, args: Vec<ObjectRef>) -> Self {
        GroundAction {
            schema: schema.into(),
            args,
        }
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.schema)?;
        for a in &self.args {
            write!(f, " {}", a.name)?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub types: BTreeSet<TypeName>,
    pub predicates: BTreeSet<TopicalProposition>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn new(name: impl Into<String>) -> Self {
        Domain {
            name: name.into(),
            types: BTreeSet::new(),
            predicates: BTreeSet::new(),
            actions: Vec::new(),
        }
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn headers(&self) -> Vec<ActionHeader> {
        self.actions.iter().map(ActionSchema::header).collect()
    }

    pub fn predicate_signatures(&self) -> BTreeMap<&str, &TopicalProposition> {
        self.predicates.iter().map(|p| (p.predicate.as_str(), p)).collect()
    }

    /// Full validation: unique action names, every referenced type and
    /// predicate declared, atom signatures agree with declarations, and every
    /// schema satisfies its STRIPS invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = BTreeSet::new();
        for a in &self.actions {
            if !names.insert(a.name.as_str()) {
                return Err(ModelError::InvalidDomain(format!("duplicate action `{}`", a.name)));
            }
        }
        let mut pred_names = BTreeSet::new();
        for p in &self.predicates {
            if !pred_names.insert(p.predicate.as_str()) {
                return Err(ModelError::InvalidDomain(format!(
                    "predicate `{}` declared twice",
                    p.predicate
                )));
            }
            for t in &p.signature {
                if !self.types.contains(t) {
                    return Err(ModelError::InvalidDomain(format!(
                        "predicate `{}` uses undeclared type `{t}`",
                        p.predicate
                    )));
                }
            }
        }
        let sigs = self.predicate_signatures();
        for a in &self.actions {
            a.check()?;
            for p in &a.params {
                if !self.types.contains(&p.ty) {
                    return Err(ModelError::InvalidDomain(format!(
                        "action `{}` uses undeclared type `{}`",
                        a.name, p.ty
                    )));
                }
            }
            for atom in a.pre.iter().chain(&a.add).chain(&a.del) {
                let lifted = a.topical_of_atom(atom);
                match sigs.get(atom.predicate.as_str()) {
                    Some(decl) if **decl == lifted => {}
                    Some(decl) => {
                        return Err(ModelError::InvalidDomain(format!(
                            "action `{}`: `{}` does not match declaration {decl}",
                            a.name,
                            a.render_atom(atom)
                        )))
                    }
                    None => {
                        return Err(ModelError::InvalidDomain(format!(
                            "action `{}` uses undeclared predicate `{}`",
                            a.name, atom.predicate
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// A planning problem: typed objects, initial state and goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub objects: Vec<ObjectRef>,
    pub init: State,
    pub goal: BTreeSet<Proposition>,
}

impl Problem {
    pub fn object(&self, name: &str) -> Option<&ObjectRef> {
        self.objects.iter().find(|o| o.name == name)
    }
}

/// STRIPS progression `(state \ del) ∪ add`. In strict mode the grounded
/// preconditions must hold; otherwise the action is force-applied.
pub fn apply(
    state: &State,
    action: &GroundAction,
    domain: &Domain,
    strict: bool,
) -> Result<State, ModelError> {
    let schema = domain
        .action(&action.schema)
        .ok_or_else(|| ModelError::UnknownAction(action.schema.clone()))?;
    let g = schema.ground(&action.args)?;
    if strict {
        let missing: Vec<String> = g.pre.difference(state).map(|p| p.to_string()).collect();
        if !missing.is_empty() {
            return Err(ModelError::NotApplicable {
                action: action.to_string(),
                missing: missing.join(" "),
            });
        }
    }
    let mut next: State = state.difference(&g.del).cloned().collect();
    next.extend(g.add);
    Ok(next)
}

/// Applies a whole plan, returning every visited state including the first.
pub fn simulate_plan(
    init: &State,
    plan: &[GroundAction],
    domain: &Domain,
    strict: bool,
) -> Result<Vec<State>, ModelError> {
    let mut trace = Vec::with_capacity(plan.len() + 1);
    trace.push(init.clone());
    for a in plan {
        let next = apply(trace.last().unwrap(), a, domain, strict)?;
        trace.push(next);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(n: usize) -> ObjectRef {
        ObjectRef::new(format!("Block{n}"), "Block")
    }

    fn pick_up() -> ActionSchema {
        ActionSchema::new("pick-up", vec![Param::new("?x", "Block")])
            .with_pre([
                LiftedAtom::new("on-table", vec![0]),
                LiftedAtom::new("hand-empty", vec![]),
            ])
            .with_add([LiftedAtom::new("holding", vec![0])])
            .with_del([
                LiftedAtom::new("on-table", vec![0]),
                LiftedAtom::new("hand-empty", vec![]),
            ])
    }

    fn toy_domain() -> Domain {
        let mut d = Domain::new("toy");
        d.types.insert(TypeName::new("Block"));
        d.predicates.insert(TopicalProposition::new("on-table", &["Block"]));
        d.predicates.insert(TopicalProposition::new("hand-empty", &[]));
        d.predicates.insert(TopicalProposition::new("holding", &["Block"]));
        d.actions.push(pick_up());
        d
    }

    #[test]
    fn grounding_pick_up() {
        let g = pick_up().ground(&[block(1)]).unwrap();
        let want: BTreeSet<_> = [
            Proposition::new("on-table", vec![block(1)]),
            Proposition::new("hand-empty", vec![]),
        ]
        .into_iter()
        .collect();
        assert_eq!(g.pre, want);
    }

    #[test]
    fn ground_zero_params_is_identity() {
        let s = ActionSchema::new("noop", vec![])
            .with_pre([LiftedAtom::new("hand-empty", vec![])])
            .with_del([LiftedAtom::new("hand-empty", vec![])]);
        let g = s.ground(&[]).unwrap();
        assert_eq!(g.pre.len(), 1);
        assert_eq!(g.del, g.pre);
        assert!(g.add.is_empty());
    }

    #[test]
    fn ground_errors_name_schema_and_position() {
        let e = pick_up().ground(&[]).unwrap_err();
        assert!(matches!(e, ModelError::Arity { expected: 1, got: 0, .. }));
        let e = pick_up().ground(&[ObjectRef::new("Robot0", "Robot")]).unwrap_err();
        match e {
            ModelError::TypeMismatch { schema, position, .. } => {
                assert_eq!(schema, "pick-up");
                assert_eq!(position, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn apply_pick_up() {
        let d = toy_domain();
        let s: State = [
            Proposition::new("on-table", vec![block(1)]),
            Proposition::new("hand-empty", vec![]),
        ]
        .into_iter()
        .collect();
        let next = apply(&s, &GroundAction::new("pick-up", vec![block(1)]), &d, true).unwrap();
        let want: State = [Proposition::new("holding", vec![block(1)])].into_iter().collect();
        assert_eq!(next, want);
    }

    #[test]
    fn strict_apply_reports_missing() {
        let d = toy_domain();
        let s: State = [Proposition::new("hand-empty", vec![])].into_iter().collect();
        let a = GroundAction::new("pick-up", vec![block(1)]);
        let err = apply(&s, &a, &d, true).unwrap_err();
        assert!(err.to_string().contains("(on-table Block1)"));
        let forced = apply(&s, &a, &d, false).unwrap();
        assert!(forced.contains(&Proposition::new("holding", vec![block(1)])));
        assert!(!forced.contains(&Proposition::new("hand-empty", vec![])));
    }

    #[test]
    fn empty_effects_leave_state_unchanged() {
        let mut d = toy_domain();
        d.actions.push(ActionSchema::new("wait", vec![Param::new("?x", "Block")]));
        let s: State = [Proposition::new("on-table", vec![block(3)])].into_iter().collect();
        let next = apply(&s, &GroundAction::new("wait", vec![block(3)]), &d, true).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn topical_lift() {
        let p = Proposition::new("on-table", vec![block(1)]);
        assert_eq!(topical_of(&p), TopicalProposition::new("on-table", &["Block"]));
        let z = Proposition::new("hand-empty", vec![]);
        assert!(topical_of(&z).signature.is_empty());
    }

    #[test]
    fn schema_invariants_checked() {
        assert!(pick_up().check().is_ok());
        let bad = pick_up().with_add([LiftedAtom::new("on-table", vec![0])]);
        assert!(bad.check().is_err());
        let bad = ActionSchema::new("x", vec![Param::new("?x", "Block")])
            .with_del([LiftedAtom::new("holding", vec![0])]);
        assert!(bad.check().is_err());
        assert!(toy_domain().validate().is_ok());
    }
}
