//! Synthetic corpus construction: random solvable problems, plans found by
//! forward search, and templated sentences for every visited state.

pub mod bundled;
pub mod planner;
pub mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{simulate_plan, GroundAction, ModelError, ObjectRef, Problem, Proposition, State};
use crate::seed;

pub use bundled::BundledDomain;
pub use render::SentenceTemplate;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("template for {topical}: {msg}")]
    Template { topical: String, msg: String },
    #[error("no template for {0}")]
    MissingTemplate(String),
    #[error("search for `{problem}` exhausted after {expanded} expansions")]
    SearchExhausted { problem: String, expanded: usize },
    #[error("record {id}: {msg}")]
    Record { id: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: usize,
    pub test: usize,
    pub min_walk: usize,
    pub max_walk: usize,
    pub node_budget: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train: 500,
            test: 100,
            min_walk: 2,
            max_walk: 10,
            node_budget: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One task: observation texts before/after every action, goal text and the
/// executed plan. Gold labels are carried for evaluation only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub id: usize,
    pub split: Split,
    pub objects: Vec<ObjectRef>,
    pub goal_text: Vec<String>,
    pub texts: Vec<Vec<String>>,
    pub plan: Vec<GroundAction>,
    pub gold: Vec<Vec<Proposition>>,
    pub goal_gold: Vec<Proposition>,
}

impl TaskRecord {
    pub fn initial_text(&self) -> &[String] {
        &self.texts[0]
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| CorpusError::Record { id: self.id, msg };
        if self.texts.len() != self.plan.len() + 1 {
            return Err(bad(format!(
                "{} texts for a plan of {} actions",
                self.texts.len(),
                self.plan.len()
            )));
        }
        if self.gold.len() != self.texts.len()
            || self.gold.iter().zip(&self.texts).any(|(g, t)| g.len() != t.len())
            || self.goal_gold.len() != self.goal_text.len()
        {
            return Err(bad("gold labels misaligned with sentences".into()));
        }
        let mut names = BTreeSet::new();
        if !self.objects.iter().all(|o| names.insert(&o.name)) {
            return Err(bad("duplicate object names".into()));
        }
        Ok(())
    }

    pub fn gold_states(&self) -> Vec<State> {
        self.gold.iter().map(|g| g.iter().cloned().collect()).collect()
    }

    pub fn gold_goal(&self) -> BTreeSet<Proposition> {
        self.goal_gold.iter().cloned().collect()
    }

    pub fn object_table(&self) -> BTreeMap<&str, &ObjectRef> {
        self.objects.iter().map(|o| (o.name.as_str(), o)).collect()
    }

    /// Every observation sentence with its (text, sentence) position.
    pub fn sentences(&self) -> impl Iterator<Item = (usize, usize, &str)> {
        self.texts
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.iter().enumerate().map(move |(j, s)| (i, j, s.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub domain: String,
    pub records: Vec<TaskRecord>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &TaskRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn train(&self) -> Vec<&TaskRecord> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&TaskRecord> {
        self.split(Split::Test).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for r in &self.records {
            let line = serde_json::to_string(&RecordLine::from(r)).expect("records serialize");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }

    pub fn read_jsonl<R: BufRead>(domain: &str, r: R) -> Result<Corpus, CorpusError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine =
                serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
            let rec = rec.resolve()?;
            rec.check()?;
            records.push(rec);
        }
        Ok(Corpus {
            domain: domain.to_string(),
            records,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PlanStep {
    action: String,
    args: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AtomLine {
    predicate: String,
    params: Vec<String>,
}

/// On-disk shape of one corpus line.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: usize,
    split: Split,
    objects: Vec<ObjectRef>,
    init_text: Vec<String>,
    goal_text: Vec<String>,
    texts: Vec<Vec<String>>,
    plan: Vec<PlanStep>,
    gold: Vec<Vec<AtomLine>>,
    goal_gold: Vec<AtomLine>,
}

impl From<&TaskRecord> for RecordLine {
    fn from(r: &TaskRecord) -> Self {
        let atom = |p: &Proposition| AtomLine {
            predicate: p.predicate.clone(),
            params: p.params.iter().map(|o| o.name.clone()).collect(),
        };
        RecordLine {
            id: r.id,
            split: r.split,
            objects: r.objects.clone(),
            init_text: r.texts[0].clone(),
            goal_text: r.goal_text.clone(),
            texts: r.texts.clone(),
            plan: r
                .plan
                .iter()
                .map(|a| PlanStep {
                    action: a.schema.clone(),
                    args: a.args.iter().map(|o| o.name.clone()).collect(),
                })
                .collect(),
            gold: r.gold.iter().map(|g| g.iter().map(atom).collect()).collect(),
            goal_gold: r.goal_gold.iter().map(atom).collect(),
        }
    }
}

impl RecordLine {
    fn resolve(self) -> Result<TaskRecord, CorpusError> {
        let id = self.id;
        let table: BTreeMap<String, ObjectRef> =
            self.objects.iter().map(|o| (o.name.clone(), o.clone())).collect();
        let obj = |n: &str| -> Result<ObjectRef, CorpusError> {
            table.get(n).cloned().ok_or_else(|| CorpusError::Record {
                id,
                msg: format!("unknown object `{n}`"),
            })
        };
        let atom = |a: &AtomLine| -> Result<Proposition, CorpusError> {
            Ok(Proposition::new(
                a.predicate.clone(),
                a.params.iter().map(|n| obj(n)).collect::<Result<_, _>>()?,
            ))
        };
        if self.texts.first() != Some(&self.init_text) {
            return Err(CorpusError::Record {
                id,
                msg: "init_text differs from texts[0]".into(),
            });
        }
        Ok(TaskRecord {
            id,
            split: self.split,
            plan: self
                .plan
                .iter()
                .map(|s| {
                    Ok(GroundAction::new(
                        s.action.clone(),
                        s.args.iter().map(|n| obj(n)).collect::<Result<_, _>>()?,
                    ))
                })
                .collect::<Result<_, CorpusError>>()?,
            gold: self
                .gold
                .iter()
                .map(|g| g.iter().map(atom).collect())
                .collect::<Result<_, _>>()?,
            goal_gold: self.goal_gold.iter().map(atom).collect::<Result<_, _>>()?,
            objects: self.objects,
            goal_text: self.goal_text,
            texts: self.texts,
        })
    }
}

/// Random solvable problems: a random walk of applicable actions from a
/// sampled initial state, with the goal read off the final state.
pub fn generate_problems(
    bundle: &BundledDomain,
    count: usize,
    seed: u64,
    config: &CorpusConfig,
) -> Vec<Problem> {
    (0..count)
        .map(|k| generate_problem(bundle, k, seed, config.min_walk, config.max_walk))
        .collect()
}

pub fn generate_problem(
    bundle: &BundledDomain,
    index: usize,
    seed: u64,
    min_walk: usize,
    max_walk: usize,
) -> Problem {
    let mut rng = seed::rng(seed, 2 * index as u64);
    let objects = bundle.objects();
    let init = (bundle.sample_init)(&objects, &mut rng);
    let succ = planner::Successors::new(&bundle.domain, &objects);
    let walk = rng.random_range(min_walk..=max_walk.max(min_walk));
    let mut state = init.clone();
    for _ in 0..walk {
        let options: Vec<usize> = succ.applicable(&state).collect();
        if options.is_empty() {
            break;
        }
        let a = options[rng.random_range(0..options.len())];
        state = succ.successor(&state, a);
    }
    let mut goal: BTreeSet<Proposition> = state
        .iter()
        .filter(|p| bundle.goal_predicates.contains(&p.predicate))
        .cloned()
        .collect();
    if goal.is_empty() {
        goal = state.difference(&init).cloned().collect();
    }
    if goal.is_empty() {
        goal = state.clone();
    }
    Problem {
        name: format!("{}-{index}", bundle.domain.name),
        objects,
        init,
        goal,
    }
}

pub fn build_corpus(bundle: &BundledDomain, seed: u64, config: &CorpusConfig) -> Result<Corpus, CorpusError> {
    for t in &bundle.templates {
        t.validate(1.0)?;
    }
    for p in &bundle.domain.predicates {
        if bundle.template_for(p).is_none() {
            return Err(CorpusError::MissingTemplate(p.to_string()));
        }
    }
    let total = config.train + config.test;
    let problems = generate_problems(bundle, total, seed, config);
    let mut records = Vec::with_capacity(total);
    for (id, problem) in problems.into_iter().enumerate() {
        let mut rng = seed::rng(seed, 2 * id as u64 + 1);
        let (plan, trace) = planner::solve(&bundle.domain, &problem, config.node_budget, &mut rng)?;
        let (texts, gold) = render::render(&trace, &bundle.templates, &mut rng)?;
        let (goal_text, goal_gold) = render::render_state(problem.goal.iter(), &bundle.templates, &mut rng)?;
        let rec = TaskRecord {
            id,
            split: if id < config.train { Split::Train } else { Split::Test },
            objects: problem.objects,
            goal_text,
            texts,
            plan,
            gold,
            goal_gold,
        };
        rec.check()?;
        records.push(rec);
    }
    Ok(Corpus {
        domain: bundle.domain.name.clone(),
        records,
    })
}

/// Replays every plan strictly from its gold initial state and checks that
/// the gold trace and the goal are reproduced.
pub fn validate_against_domain(corpus: &Corpus, domain: &crate::model::Domain) -> Result<(), CorpusError> {
    for r in &corpus.records {
        r.check()?;
        let gold = r.gold_states();
        let trace = simulate_plan(&gold[0], &r.plan, domain, true)?;
        if trace != gold {
            return Err(CorpusError::Record {
                id: r.id,
                msg: "simulated trace differs from gold states".into(),
            });
        }
        if !r.gold_goal().is_subset(trace.last().unwrap()) {
            return Err(CorpusError::Record {
                id: r.id,
                msg: "goal not reached".into(),
            });
        }
    }
    Ok(())
}
