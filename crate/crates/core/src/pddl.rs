//! Reading and writing the STRIPS + `:typing` subset of PDDL.
//!
//! Emission is normalized: lowercase keywords, alphabetical types and
//! predicates, actions in declaration order, atoms inside a precondition or
//! effect in their set order. `parse_domain(&emit_domain(d)) == d` for every
//! valid domain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    ActionSchema, Domain, LiftedAtom, ModelError, ObjectRef, Param, Problem, Proposition,
    TopicalProposition, TypeName,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PddlError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unsupported PDDL feature `{feature}`")]
    Unsupported {
        line: usize,
        col: usize,
        feature: String,
    },
    #[error("invalid domain: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom { text: String, line: usize, col: usize },
    List { items: Vec<Sexp>, line: usize, col: usize },
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom { line, col, .. } | Sexp::List { line, col, .. } => (*line, *col),
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            Sexp::List { .. } => None,
        }
    }

    fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List { items, .. } => Some(items),
            Sexp::Atom { .. } => None,
        }
    }

    fn head(&self) -> Option<String> {
        self.list()
            .and_then(|l| l.first())
            .and_then(Sexp::atom)
            .map(str::to_ascii_lowercase)
    }
}

fn syntax(at: (usize, usize), msg: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        line: at.0,
        col: at.1,
        msg: msg.into(),
    }
}

fn unsupported(at: (usize, usize), feature: impl Into<String>) -> PddlError {
    PddlError::Unsupported {
        line: at.0,
        col: at.1,
        feature: feature.into(),
    }
}

fn read_sexp(text: &str) -> Result<Sexp, PddlError> {
    // (items, line, col) for each open list
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut done: Option<Sexp> = None;
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let push = |stack: &mut Vec<(Vec<Sexp>, usize, usize)>,
                    done: &mut Option<Sexp>,
                    s: Sexp|
     -> Result<(), PddlError> {
        match stack.last_mut() {
            Some((items, _, _)) => items.push(s),
            None if done.is_none() => *done = Some(s),
            None => return Err(syntax(s.pos(), "trailing content after top-level form")),
        }
        Ok(())
    };
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                chars.next();
                stack.push((Vec::new(), line, col));
                col += 1;
            }
            ')' => {
                chars.next();
                let (items, l, c0) = stack
                    .pop()
                    .ok_or_else(|| syntax((line, col), "unbalanced `)`"))?;
                col += 1;
                push(&mut stack, &mut done, Sexp::List { items, line: l, col: c0 })?;
            }
            _ => {
                let start = col;
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    col += 1;
                }
                push(&mut stack, &mut done, Sexp::Atom { text: s, line, col: start })?;
            }
        }
    }
    if let Some((_, l, c)) = stack.last() {
        return Err(syntax((*l, *c), "unclosed `(`"));
    }
    done.ok_or_else(|| syntax((line, col), "empty input"))
}

/// Parses `name name - type name - type ...`. Untyped trailing names are
/// rejected because the subset requires `:typing`.
fn typed_list(items: &[Sexp]) -> Result<Vec<(String, String, (usize, usize))>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, (usize, usize))> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let it = &items[i];
        let text = it
            .atom()
            .ok_or_else(|| syntax(it.pos(), "expected a name in typed list"))?;
        if text == "-" {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| syntax(it.pos(), "`-` without a type"))?;
            if ty.head().as_deref() == Some("either") {
                return Err(unsupported(ty.pos(), "either"));
            }
            let ty_name = ty
                .atom()
                .ok_or_else(|| syntax(ty.pos(), "expected a type name"))?;
            if pending.is_empty() {
                return Err(syntax(it.pos(), "type without names"));
            }
            for (name, pos) in pending.drain(..) {
                out.push((name, ty_name.to_string(), pos));
            }
            i += 2;
        } else {
            pending.push((text.to_string(), it.pos()));
            i += 1;
        }
    }
    if let Some((name, pos)) = pending.first() {
        return Err(syntax(*pos, format!("`{name}` has no type")));
    }
    Ok(out)
}

const UNSUPPORTED_HEADS: &[&str] = &[
    "or", "forall", "exists", "imply", "when", "increase", "decrease", "assign", "either",
    "scale-up", "scale-down", "preference",
];

/// True if `name` cannot be used as a predicate name.
pub fn is_reserved(name: &str) -> bool {
    name == "and"
        || name == "not"
        || name == "="
        || UNSUPPORTED_HEADS.contains(&name)
        || !name.starts_with(|c: char| c.is_ascii_alphabetic())
}

/// Flattens `(and a b ...)` or a single atom into atom lists.
fn conjunction(form: &Sexp, allow_not: bool) -> Result<Vec<(bool, &Sexp)>, PddlError> {
    let items = form
        .list()
        .ok_or_else(|| syntax(form.pos(), "expected a list"))?;
    match form.head().as_deref() {
        Some("and") => {
            let mut out = Vec::new();
            for it in &items[1..] {
                out.extend(conjunction(it, allow_not)?);
            }
            Ok(out)
        }
        Some("not") => {
            if !allow_not {
                return Err(unsupported(form.pos(), "negative-preconditions"));
            }
            let inner = items
                .get(1)
                .filter(|_| items.len() == 2)
                .ok_or_else(|| syntax(form.pos(), "`not` takes one atom"))?;
            if let Some(h) = inner.head() {
                if h == "and" || h == "not" || UNSUPPORTED_HEADS.contains(&h.as_str()) {
                    return Err(unsupported(inner.pos(), h));
                }
            }
            Ok(vec![(false, inner)])
        }
        Some(h) if UNSUPPORTED_HEADS.contains(&h) => Err(unsupported(form.pos(), h)),
        Some("=") => Err(unsupported(form.pos(), "equality")),
        Some(_) => Ok(vec![(true, form)]),
        None if items.is_empty() => Ok(vec![]),
        None => Err(syntax(form.pos(), "expected an atom")),
    }
}

fn atom_parts(form: &Sexp) -> Result<(String, Vec<(&str, (usize, usize))>), PddlError> {
    let items = form.list().ok_or_else(|| syntax(form.pos(), "expected atom"))?;
    let pred = items
        .first()
        .and_then(Sexp::atom)
        .ok_or_else(|| syntax(form.pos(), "atom without predicate"))?;
    let mut args = Vec::new();
    for it in &items[1..] {
        let a = it.atom().ok_or_else(|| syntax(it.pos(), "nested term"))?;
        args.push((a, it.pos()));
    }
    Ok((pred.to_string(), args))
}

fn check_define<'a>(root: &'a Sexp, kind: &str) -> Result<(String, &'a [Sexp]), PddlError> {
    let items = root.list().ok_or_else(|| syntax(root.pos(), "expected `(define ...)`"))?;
    if root.head().as_deref() != Some("define") {
        return Err(syntax(root.pos(), "expected `define`"));
    }
    let head = items
        .get(1)
        .ok_or_else(|| syntax(root.pos(), format!("missing `({kind} <name>)`")))?;
    if head.head().as_deref() != Some(kind) {
        return Err(syntax(head.pos(), format!("expected `({kind} <name>)`")));
    }
    let name = head
        .list()
        .and_then(|l| l.get(1))
        .and_then(Sexp::atom)
        .ok_or_else(|| syntax(head.pos(), format!("missing {kind} name")))?;
    Ok((name.to_string(), &items[2..]))
}

fn check_requirements(section: &Sexp) -> Result<(), PddlError> {
    for r in &section.list().unwrap()[1..] {
        let name = r.atom().ok_or_else(|| syntax(r.pos(), "bad requirement"))?;
        match name.to_ascii_lowercase().as_str() {
            ":strips" | ":typing" => {}
            other => return Err(unsupported(r.pos(), other.trim_start_matches(':'))),
        }
    }
    Ok(())
}

pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let root = read_sexp(text)?;
    let (name, sections) = check_define(&root, "domain")?;
    let mut domain = Domain::new(name);
    let mut pending_actions = Vec::new();
    for section in sections {
        let head = section
            .head()
            .ok_or_else(|| syntax(section.pos(), "expected a section"))?;
        let items = section.list().unwrap();
        match head.as_str() {
            ":requirements" => check_requirements(section)?,
            ":types" => {
                let mut i = 1;
                while i < items.len() {
                    let t = items[i]
                        .atom()
                        .ok_or_else(|| syntax(items[i].pos(), "bad type"))?;
                    if t == "-" {
                        let parent = items.get(i + 1).and_then(Sexp::atom);
                        match parent {
                            Some(p) if p.eq_ignore_ascii_case("object") => i += 2,
                            _ => return Err(unsupported(items[i].pos(), "type hierarchy")),
                        }
                        continue;
                    }
                    domain.types.insert(TypeName::new(t));
                    i += 1;
                }
            }
            ":predicates" => {
                for p in &items[1..] {
                    let pi = p.list().ok_or_else(|| syntax(p.pos(), "bad predicate"))?;
                    let pname = pi
                        .first()
                        .and_then(Sexp::atom)
                        .ok_or_else(|| syntax(p.pos(), "predicate without name"))?;
                    let sig = typed_list(&pi[1..])?
                        .into_iter()
                        .map(|(_, t, _)| TypeName(t))
                        .collect();
                    domain.predicates.insert(TopicalProposition {
                        predicate: pname.to_string(),
                        signature: sig,
                    });
                }
            }
            ":action" => pending_actions.push(section),
            ":constants" | ":functions" | ":derived" | ":durative-action" | ":constraints" => {
                return Err(unsupported(section.pos(), head.trim_start_matches(':')))
            }
            other => return Err(syntax(section.pos(), format!("unknown section `{other}`"))),
        }
    }
    for section in pending_actions {
        let a = parse_action(section)?;
        domain.actions.push(a);
    }
    domain.validate()?;
    Ok(domain)
}

fn parse_action(section: &Sexp) -> Result<ActionSchema, PddlError> {
    let items = section.list().unwrap();
    let name = items
        .get(1)
        .and_then(Sexp::atom)
        .ok_or_else(|| syntax(section.pos(), "action without name"))?;
    let mut params: Vec<Param> = Vec::new();
    let mut pre_form = None;
    let mut eff_form = None;
    let mut i = 2;
    while i < items.len() {
        let key = items[i]
            .atom()
            .ok_or_else(|| syntax(items[i].pos(), "expected an action keyword"))?
            .to_ascii_lowercase();
        let val = items
            .get(i + 1)
            .ok_or_else(|| syntax(items[i].pos(), format!("`{key}` without value")))?;
        match key.as_str() {
            ":parameters" => {
                let l = val.list().ok_or_else(|| syntax(val.pos(), "bad parameter list"))?;
                for (n, t, pos) in typed_list(l)? {
                    if !n.starts_with('?') {
                        return Err(syntax(pos, format!("parameter `{n}` must start with `?`")));
                    }
                    if params.iter().any(|p| p.name == n) {
                        return Err(syntax(pos, format!("duplicate parameter `{n}`")));
                    }
                    params.push(Param::new(n, t));
                }
            }
            ":precondition" => pre_form = Some(val),
            ":effect" => eff_form = Some(val),
            other => return Err(syntax(items[i].pos(), format!("unknown action keyword `{other}`"))),
        }
        i += 2;
    }
    let index: BTreeMap<&str, usize> = params
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), i))
        .collect();
    let lift = |form: &Sexp| -> Result<LiftedAtom, PddlError> {
        let (pred, args) = atom_parts(form)?;
        let mut idx = Vec::new();
        for (a, pos) in args {
            if !a.starts_with('?') {
                return Err(unsupported(pos, "constants"));
            }
            idx.push(
                *index
                    .get(a)
                    .ok_or_else(|| syntax(pos, format!("unknown parameter `{a}`")))?,
            );
        }
        Ok(LiftedAtom::new(pred, idx))
    };
    let mut schema = ActionSchema::new(name, params.clone());
    if let Some(f) = pre_form {
        for (_, atom) in conjunction(f, false)? {
            schema.pre.insert(lift(atom)?);
        }
    }
    if let Some(f) = eff_form {
        for (positive, atom) in conjunction(f, true)? {
            let a = lift(atom)?;
            if positive {
                schema.add.insert(a);
            } else {
                schema.del.insert(a);
            }
        }
    }
    Ok(schema)
}

fn write_atom(out: &mut String, schema: &ActionSchema, atom: &LiftedAtom) {
    out.push('(');
    out.push_str(&atom.predicate);
    for &i in &atom.args {
        out.push(' ');
        out.push_str(&schema.params[i].name);
    }
    out.push(')');
}

pub fn emit_domain(d: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", d.name);
    out.push_str("  (:requirements :strips :typing)\n");
    out.push_str("  (:types");
    for t in &d.types {
        let _ = write!(out, " {t}");
    }
    out.push_str(")\n");
    out.push_str("  (:predicates");
    for p in &d.predicates {
        out.push_str("\n    (");
        out.push_str(&p.predicate);
        for (i, t) in p.signature.iter().enumerate() {
            let _ = write!(out, " ?x{i} - {t}");
        }
        out.push(')');
    }
    out.push_str(")\n");
    for a in &d.actions {
        let _ = writeln!(out, "  (:action {}", a.name);
        out.push_str("    :parameters (");
        let params: Vec<String> = a.params.iter().map(|p| format!("{} - {}", p.name, p.ty)).collect();
        out.push_str(&params.join(" "));
        out.push_str(")\n    :precondition (and");
        for atom in &a.pre {
            out.push(' ');
            write_atom(&mut out, a, atom);
        }
        out.push_str(")\n    :effect (and");
        for atom in &a.add {
            out.push(' ');
            write_atom(&mut out, a, atom);
        }
        for atom in &a.del {
            out.push_str(" (not ");
            write_atom(&mut out, a, atom);
            out.push(')');
        }
        out.push_str("))\n");
    }
    out.push_str(")\n");
    out
}

pub fn emit_problem(p: &Problem, domain_name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", p.name);
    let _ = writeln!(out, "  (:domain {domain_name})");
    out.push_str("  (:objects");
    let mut by_type: BTreeMap<&TypeName, Vec<&str>> = BTreeMap::new();
    for o in &p.objects {
        by_type.entry(&o.ty).or_default().push(&o.name);
    }
    for (t, names) in by_type {
        let _ = write!(out, " {} - {t}", names.join(" "));
    }
    out.push_str(")\n  (:init");
    for prop in &p.init {
        let _ = write!(out, " {prop}");
    }
    out.push_str(")\n  (:goal (and");
    for prop in &p.goal {
        let _ = write!(out, " {prop}");
    }
    out.push_str("))\n)\n");
    out
}

pub fn parse_problem(text: &str) -> Result<(Problem, String), PddlError> {
    let root = read_sexp(text)?;
    let (name, sections) = check_define(&root, "problem")?;
    let mut domain_name = String::new();
    let mut objects: Vec<ObjectRef> = Vec::new();
    let mut init_forms = Vec::new();
    let mut goal_form = None;
    for section in sections {
        let head = section
            .head()
            .ok_or_else(|| syntax(section.pos(), "expected a section"))?;
        let items = section.list().unwrap();
        match head.as_str() {
            ":domain" => {
                domain_name = items
                    .get(1)
                    .and_then(Sexp::atom)
                    .ok_or_else(|| syntax(section.pos(), "missing domain name"))?
                    .to_string();
            }
            ":requirements" => check_requirements(section)?,
            ":objects" => {
                for (n, t, pos) in typed_list(&items[1..])? {
                    if objects.iter().any(|o| o.name == n) {
                        return Err(syntax(pos, format!("duplicate object `{n}`")));
                    }
                    objects.push(ObjectRef::new(n, t));
                }
            }
            ":init" => init_forms.extend(&items[1..]),
            ":goal" => goal_form = items.get(1),
            ":metric" | ":constraints" => {
                return Err(unsupported(section.pos(), head.trim_start_matches(':')))
            }
            other => return Err(syntax(section.pos(), format!("unknown section `{other}`"))),
        }
    }
    let table: BTreeMap<&str, &ObjectRef> = objects.iter().map(|o| (o.name.as_str(), o)).collect();
    let ground = |form: &Sexp| -> Result<Proposition, PddlError> {
        let (pred, args) = atom_parts(form)?;
        let mut params = Vec::new();
        for (a, pos) in args {
            let o = table
                .get(a)
                .ok_or_else(|| syntax(pos, format!("unknown object `{a}`")))?;
            params.push((*o).clone());
        }
        Ok(Proposition::new(pred, params))
    };
    let mut init = BTreeSet::new();
    for f in init_forms {
        for (positive, atom) in conjunction(f, false)? {
            debug_assert!(positive);
            init.insert(ground(atom)?);
        }
    }
    let mut goal = BTreeSet::new();
    if let Some(g) = goal_form {
        for (_, atom) in conjunction(g, false)? {
            goal.insert(ground(atom)?);
        }
    }
    Ok((
        Problem {
            name,
            objects,
            init,
            goal,
        },
        domain_name,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
; a comment
(define (domain toy)
  (:requirements :strips :typing)
  (:types Block)
  (:predicates (on-table ?x - Block) (hand-empty) (holding ?x - Block))
  (:action pick-up
    :parameters (?x - Block)
    :precondition (and (on-table ?x) (hand-empty))
    :effect (and (holding ?x) (not (on-table ?x)) (not (hand-empty)))))
"#;

    #[test]
    fn parses_small_domain() {
        let d = parse_domain(SMALL).unwrap();
        assert_eq!(d.predicates.len(), 3);
        assert_eq!(d.actions.len(), 1);
        assert_eq!(d.actions[0].pre.len(), 2);
        assert_eq!(d.actions[0].del.len(), 2);
        let again = parse_domain(&emit_domain(&d)).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn empty_action_list() {
        let mut d = Domain::new("empty");
        d.types.insert(TypeName::new("Thing"));
        let text = emit_domain(&d);
        assert!(!text.contains(":action"));
        assert_eq!(parse_domain(&text).unwrap(), d);
    }

    #[test]
    fn rejects_unsupported_features() {
        let text = SMALL.replace(":typing", ":typing :conditional-effects");
        match parse_domain(&text).unwrap_err() {
            PddlError::Unsupported { feature, .. } => assert_eq!(feature, "conditional-effects"),
            e => panic!("{e}"),
        }
        let text = SMALL.replace("(and (on-table ?x) (hand-empty))", "(or (on-table ?x) (hand-empty))");
        assert!(matches!(parse_domain(&text), Err(PddlError::Unsupported { .. })));
        let text = SMALL.replace("(and (on-table ?x) (hand-empty))", "(not (hand-empty))");
        match parse_domain(&text).unwrap_err() {
            PddlError::Unsupported { feature, .. } => assert_eq!(feature, "negative-preconditions"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_domain("(define (domain x)\n  (:types A)\n  (:predicates (p ?a)))").unwrap_err();
        match err {
            PddlError::Syntax { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let err = parse_domain("(define (domain x)\n  (:types A)").unwrap_err();
        assert!(matches!(err, PddlError::Syntax { line: 1, col: 1, .. }));
    }

    #[test]
    fn problem_round_trip() {
        let b1 = ObjectRef::new("Block1", "Block");
        let b2 = ObjectRef::new("Block2", "Block");
        let p = Problem {
            name: "p0".into(),
            objects: vec![b1.clone(), b2.clone()],
            init: [
                Proposition::new("on-table", vec![b1.clone()]),
                Proposition::new("hand-empty", vec![]),
            ]
            .into_iter()
            .collect(),
            goal: [Proposition::new("on", vec![b1, b2])].into_iter().collect(),
        };
        let (q, dn) = parse_problem(&emit_problem(&p, "blocks")).unwrap();
        assert_eq!(dn, "blocks");
        assert_eq!(q, p);
    }
}
