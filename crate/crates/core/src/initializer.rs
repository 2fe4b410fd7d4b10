//! Sentence-to-proposition mapping.
//!
//! Each sentence gets a ranking over candidate predicate words. Its
//! parameters are the objects it names, in order of first mention. The
//! registry of topical propositions is grown by three rules:
//!
//! 1. a word that heads no registered entry starts a new entry;
//! 2. a word whose entry admits a type bijection with the parameters reuses
//!    it, reordering the parameters to the registered signature;
//! 3. otherwise the word is skipped in favour of the next one in the ranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, TaskRecord};
use crate::encoder::{standard_normal, EncoderModel};
use crate::model::{ObjectRef, Proposition, State, TopicalProposition, TypeName};
use crate::seed;
use crate::text::{mentioned_objects, tokenize, Encoded, Vocabulary};

#[derive(Debug, Error)]
pub enum InitError {
    #[error("registry: {0}")]
    Registry(String),
    #[error("extraction line {line}: {msg}")]
    Json { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The set Ψ of topical propositions discovered so far, with stable indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropositionRegistry {
    entries: Vec<TopicalProposition>,
    index: HashMap<TopicalProposition, usize>,
}

#[derive(Serialize, Deserialize)]
struct RegistryEntry {
    index: usize,
    predicate: String,
    signature: Vec<TypeName>,
}

impl PropositionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = TopicalProposition>) -> Self {
        let mut r = Self::new();
        for e in entries {
            r.register(e);
        }
        r
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TopicalProposition] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &TopicalProposition {
        &self.entries[i]
    }

    pub fn index_of(&self, t: &TopicalProposition) -> Option<usize> {
        self.index.get(t).copied()
    }

    /// Entries whose predicate is `word`.
    pub fn headed_by<'a>(&'a self, word: &'a str) -> impl Iterator<Item = (usize, &'a TopicalProposition)> + 'a {
        self.entries.iter().enumerate().filter(move |(_, e)| e.predicate == word)
    }

    /// Index of `t`, adding it if new.
    pub fn register(&mut self, t: TopicalProposition) -> usize {
        if let Some(i) = self.index_of(&t) {
            return i;
        }
        self.index.insert(t.clone(), self.entries.len());
        self.entries.push(t);
        self.entries.len() - 1
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<RegistryEntry> = self
            .entries
            .iter()
            .enumerate()
            .map(|(index, e)| RegistryEntry {
                index,
                predicate: e.predicate.clone(),
                signature: e.signature.clone(),
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("registry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InitError> {
        let rows: Vec<RegistryEntry> = serde_json::from_str(text).map_err(|e| InitError::Registry(e.to_string()))?;
        let mut r = Self::new();
        for (k, row) in rows.into_iter().enumerate() {
            if row.index != k {
                return Err(InitError::Registry(format!("entry {k} carries index {}", row.index)));
            }
            let t = TopicalProposition {
                predicate: row.predicate,
                signature: row.signature,
            };
            if r.register(t) != k {
                return Err(InitError::Registry(format!("duplicate entry at index {k}")));
            }
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<(), InitError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, InitError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Objects named verbatim in the sentence, in order of first mention.
pub fn extract_parameters(sentence: &str, objects: &BTreeMap<&str, &ObjectRef>) -> Vec<ObjectRef> {
    mentioned_objects(&tokenize(sentence, objects))
}

/// Reorders `theta` to match `signature` type by type. Parameters of the
/// same type keep their relative order. `None` without a type bijection.
pub fn type_bijection(signature: &[TypeName], theta: &[ObjectRef]) -> Option<Vec<ObjectRef>> {
    if signature.len() != theta.len() {
        return None;
    }
    let mut used = vec![false; theta.len()];
    let mut out = Vec::with_capacity(theta.len());
    for ty in signature {
        let k = (0..theta.len()).find(|&k| !used[k] && &theta[k].ty == ty)?;
        used[k] = true;
        out.push(theta[k].clone());
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    New,
    Reorder,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleOutcome {
    pub proposition: Proposition,
    pub rule: Rule,
    pub entry: usize,
    /// Words passed over because their entries did not fit the parameters.
    pub skipped: Vec<String>,
}

/// Predicate name for a vocabulary word; words that clash with PDDL syntax
/// get a `-w` suffix.
pub fn predicate_name(word: &str) -> String {
    if crate::pddl::is_reserved(word) {
        format!("{word}-w")
    } else {
        word.to_string()
    }
}

/// The vocabulary word a predicate name was built from.
pub fn head_word(predicate: &str) -> &str {
    predicate.split('-').next().unwrap_or(predicate)
}

/// Name used when every ranked word is blocked: the top word joined with the
/// sorted parameter types.
pub fn fallback_name(word: &str, theta: &[ObjectRef]) -> String {
    let mut types: Vec<String> = theta.iter().map(|o| o.ty.0.to_lowercase()).collect();
    types.sort();
    if types.is_empty() {
        format!("{word}-none")
    } else {
        format!("{word}-{}", types.join("-"))
    }
}

/// Walks `ranking` (best first) and applies the three rules. The registry
/// gains at most one entry.
pub fn apply_rule<'a>(
    registry: &mut PropositionRegistry,
    ranking: impl IntoIterator<Item = &'a str>,
    theta: &[ObjectRef],
) -> RuleOutcome {
    let mut skipped = Vec::new();
    let mut top: Option<&str> = None;
    for word in ranking {
        top.get_or_insert(word);
        let name = predicate_name(word);
        let mut heads_any = false;
        let mut hit = None;
        for (i, e) in registry.headed_by(&name) {
            heads_any = true;
            if let Some(params) = type_bijection(&e.signature, theta) {
                hit = Some((i, params));
                break;
            }
        }
        match (heads_any, hit) {
            (false, _) => {
                let p = Proposition::new(name, theta.to_vec());
                let entry = registry.register(p.topical());
                return RuleOutcome {
                    proposition: p,
                    rule: Rule::New,
                    entry,
                    skipped,
                };
            }
            (true, Some((entry, params))) => {
                return RuleOutcome {
                    proposition: Proposition::new(name, params),
                    rule: Rule::Reorder,
                    entry,
                    skipped,
                };
            }
            (true, None) => skipped.push(name),
        }
    }
    let name = fallback_name(&predicate_name(top.unwrap_or("prop")), theta);
    log::warn!("no applicable word for {} parameter(s); registering `{name}`", theta.len());
    let mut sorted = theta.to_vec();
    sorted.sort_by(|a, b| a.ty.cmp(&b.ty));
    let sig: Vec<TypeName> = sorted.iter().map(|o| o.ty.clone()).collect();
    let params = type_bijection(&sig, theta).expect("sorted types are a permutation");
    let p = Proposition::new(name, params);
    let entry = registry.register(p.topical());
    RuleOutcome {
        proposition: p,
        rule: Rule::Fallback,
        entry,
        skipped,
    }
}

/// Extracted states and goal of one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExtraction {
    pub id: usize,
    /// One proposition per sentence, aligned with the record's texts.
    pub assignments: Vec<Vec<Proposition>>,
    pub goal_assignments: Vec<Proposition>,
}

impl TaskExtraction {
    pub fn states(&self) -> Vec<State> {
        self.assignments.iter().map(|t| t.iter().cloned().collect()).collect()
    }

    pub fn goal(&self) -> BTreeSet<Proposition> {
        self.goal_assignments.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionResult {
    pub tasks: Vec<TaskExtraction>,
    pub registry: PropositionRegistry,
}

impl ExtractionResult {
    pub fn task(&self, id: usize) -> Option<&TaskExtraction> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Predicted topical label for every observation and goal sentence, in
    /// corpus order.
    pub fn labels(&self) -> Vec<TopicalProposition> {
        self.tasks
            .iter()
            .flat_map(|t| t.assignments.iter().flatten().chain(&t.goal_assignments))
            .map(Proposition::topical)
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), InitError> {
        for t in &self.tasks {
            let line = serde_json::to_string(t).expect("extraction serializes");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads tasks written by [`ExtractionResult::write_jsonl`] and pairs
    /// them with a registry.
    pub fn read_jsonl<R: BufRead>(r: R, registry: PropositionRegistry) -> Result<Self, InitError> {
        let mut tasks = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            tasks.push(serde_json::from_str(&line).map_err(|e| InitError::Json {
                line: k + 1,
                msg: e.to_string(),
            })?);
        }
        Ok(ExtractionResult { tasks, registry })
    }
}

/// Gold labels as an extraction (for oracle runs and tests).
pub fn gold_extraction(corpus: &Corpus) -> ExtractionResult {
    let mut registry = PropositionRegistry::new();
    let tasks = corpus
        .records
        .iter()
        .map(|r| {
            for p in r.gold.iter().flatten().chain(&r.goal_gold) {
                registry.register(p.topical());
            }
            TaskExtraction {
                id: r.id,
                assignments: r.gold.clone(),
                goal_assignments: r.goal_gold.clone(),
            }
        })
        .collect();
    ExtractionResult { tasks, registry }
}

/// Gold topical labels aligned with [`ExtractionResult::labels`].
pub fn gold_labels(corpus: &Corpus) -> Vec<TopicalProposition> {
    corpus
        .records
        .iter()
        .flat_map(|r| r.gold.iter().flatten().chain(&r.goal_gold))
        .map(Proposition::topical)
        .collect()
}

/// Runs the rules over every sentence of `records` in order (texts first,
/// then the goal text). `propose` gives, for an encoded sentence and its
/// mentioned objects, a ranking over `words` and the parameter order to use.
pub fn extract_with<F>(records: &[&TaskRecord], vocab: &Vocabulary, words: &[String], mut propose: F) -> ExtractionResult
where
    F: FnMut(&Encoded, Vec<ObjectRef>) -> (Vec<usize>, Vec<ObjectRef>),
{
    let mut registry = PropositionRegistry::new();
    let mut tasks = Vec::with_capacity(records.len());
    for r in records {
        let table = r.object_table();
        let mut one = |s: &str, registry: &mut PropositionRegistry| {
            let tokens = tokenize(s, &table);
            let enc = vocab.encode(&tokens);
            let (ranking, theta) = propose(&enc, mentioned_objects(&tokens));
            apply_rule(registry, ranking.iter().map(|&w| words[w].as_str()), &theta).proposition
        };
        let assignments = r
            .texts
            .iter()
            .map(|t| t.iter().map(|s| one(s, &mut registry)).collect())
            .collect();
        let goal_assignments = r.goal_text.iter().map(|s| one(s, &mut registry)).collect();
        tasks.push(TaskExtraction {
            id: r.id,
            assignments,
            goal_assignments,
        });
    }
    ExtractionResult { tasks, registry }
}

/// Noise for a sentence is a function of the seed and the sentence's ids,
/// so identical sentences always land on the same topic mixture.
pub fn sentence_noise(seed: u64, ids: &[usize], topics: usize) -> Vec<f64> {
    let bytes: Vec<u8> = ids.iter().flat_map(|&i| (i as u64).to_le_bytes()).collect();
    let mut rng = seed::rng(seed, seed::hash_bytes(&bytes));
    standard_normal(topics, &mut rng)
}

/// Initial traces: `P(w) = softmax(V Tᵀ z)` with `z` sampled from the
/// encoder's posterior for each sentence.
pub fn initialize_traces(records: &[&TaskRecord], encoder: &EncoderModel, seed: u64) -> ExtractionResult {
    let mut memo: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    let n_words = encoder.vocab.len();
    extract_with(records, &encoder.vocab, &encoder.vocab.words, |enc, theta| {
        let ranking = memo
            .entry(enc.ids.clone())
            .or_insert_with(|| {
                if enc.ids.is_empty() {
                    return (0..n_words).collect();
                }
                let h = encoder.encode(&enc.ids).expect("nonempty");
                let eps = sentence_noise(seed, &enc.ids, encoder.num_topics());
                let z = encoder.reparameterize_with(&h, &eps);
                encoder.topic_word_scores(&z).ranking
            })
            .clone();
        (ranking, theta)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, bundled, CorpusConfig};
    use proptest::prelude::*;

    fn b(n: &str) -> ObjectRef {
        ObjectRef::new(n, "Block")
    }

    #[test]
    fn parameters_from_example_sentence() {
        let b1 = b("Block1");
        let b2 = b("Block2");
        let table: BTreeMap<&str, &ObjectRef> = [("Block1", &b1), ("Block2", &b2)].into_iter().collect();
        assert_eq!(extract_parameters("Block1 is on table.", &table), vec![b1.clone()]);
        assert!(extract_parameters("The hand is empty.", &table).is_empty());
        assert_eq!(
            extract_parameters("Block2 sits on Block1, Block2 is stacked.", &table),
            vec![b2, b1]
        );
    }

    #[test]
    fn rule1_on_empty_registry() {
        let mut r = PropositionRegistry::new();
        let out = apply_rule(&mut r, ["on-table", "on"], &[b("Block1")]);
        assert_eq!(out.rule, Rule::New);
        assert_eq!(out.proposition, Proposition::new("on-table", vec![b("Block1")]));
        assert_eq!(r.entries(), &[TopicalProposition::new("on-table", &["Block"])]);
    }

    #[test]
    fn rule2_same_type_keeps_order() {
        let mut r = PropositionRegistry::from_entries([TopicalProposition::new("on", &["Block", "Block"])]);
        let out = apply_rule(&mut r, ["on"], &[b("Block2"), b("Block1")]);
        assert_eq!(out.rule, Rule::Reorder);
        assert_eq!(out.proposition, Proposition::new("on", vec![b("Block2"), b("Block1")]));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn rule2_reorders_mixed_types() {
        let mut r = PropositionRegistry::from_entries([TopicalProposition::new("in", &["Log", "Chest"])]);
        let chest = ObjectRef::new("Chest1", "Chest");
        let log = ObjectRef::new("Log1", "Log");
        let out = apply_rule(&mut r, ["in"], &[chest.clone(), log.clone()]);
        assert_eq!(out.proposition.params, vec![log, chest]);
    }

    #[test]
    fn rule3_cascade_matches_hand_trace() {
        // Ψ = {(on Block Block)}; Θ = (Robot0).
        // "on": heads an entry, no bijection -> skip.
        // "holds": heads nothing -> new entry (holds Robot).
        let mut r = PropositionRegistry::from_entries([TopicalProposition::new("on", &["Block", "Block"])]);
        let robot = ObjectRef::new("Robot0", "Robot");
        let out = apply_rule(&mut r, ["on", "holds", "table"], &[robot.clone()]);
        assert_eq!(out.rule, Rule::New);
        assert_eq!(out.skipped, vec!["on".to_string()]);
        assert_eq!(out.proposition, Proposition::new("holds", vec![robot]));
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn exhausted_ranking_falls_back() {
        let mut r = PropositionRegistry::from_entries([TopicalProposition::new("on", &["Block", "Block"])]);
        let out = apply_rule(&mut r, ["on"], &[b("Block1")]);
        assert_eq!(out.rule, Rule::Fallback);
        assert_eq!(out.proposition.predicate, "on-block");
        let again = apply_rule(&mut r, ["on"], &[b("Block3")]);
        assert_eq!(again.entry, out.entry);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn reserved_words_are_escaped() {
        let mut r = PropositionRegistry::new();
        let out = apply_rule(&mut r, ["and"], &[b("Block1")]);
        assert_eq!(out.proposition.predicate, "and-w");
        assert_eq!(head_word("and-w"), "and");
        assert_eq!(head_word("on-block"), "on");
        assert_eq!(apply_rule(&mut r, ["and"], &[b("Block2")]).entry, out.entry);
    }

    #[test]
    fn registry_json_round_trip() {
        let r = PropositionRegistry::from_entries([
            TopicalProposition::new("on", &["Block", "Block"]),
            TopicalProposition::new("hand-empty", &[]),
        ]);
        let back = PropositionRegistry::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.index_of(&TopicalProposition::new("hand-empty", &[])), Some(1));
    }

    fn blocks_corpus() -> Corpus {
        let cfg = CorpusConfig {
            train: 20,
            test: 5,
            ..CorpusConfig::default()
        };
        build_corpus(&bundled::blocks(), 3, &cfg).unwrap()
    }

    #[test]
    fn parameter_multisets_match_gold_on_corpus() {
        let c = blocks_corpus();
        for r in &c.records {
            let table = r.object_table();
            let sentences = r.texts.iter().flatten().chain(&r.goal_text);
            let golds = r.gold.iter().flatten().chain(&r.goal_gold);
            for (s, g) in sentences.zip(golds) {
                let mut got = extract_parameters(s, &table);
                let mut want = g.params.clone();
                got.sort();
                want.sort();
                assert_eq!(got, want, "{s}");
            }
        }
    }

    #[test]
    fn oracle_ranking_reproduces_gold() {
        let c = blocks_corpus();
        let vocab = Vocabulary::from_corpus(&c);
        let words: Vec<String> = bundled::blocks().domain.predicates.iter().map(|p| p.predicate.clone()).collect();
        let records: Vec<&TaskRecord> = c.records.iter().collect();
        let gold: Vec<&Proposition> = c
            .records
            .iter()
            .flat_map(|r| r.gold.iter().flatten().chain(&r.goal_gold))
            .collect();
        let mut k = 0;
        let res = extract_with(&records, &vocab, &words, |_, _| {
            let g = gold[k];
            k += 1;
            let top = words.iter().position(|w| *w == g.predicate).unwrap();
            let mut ranking = vec![top];
            ranking.extend((0..words.len()).filter(|&i| i != top));
            (ranking, g.params.clone())
        });
        for (t, r) in res.tasks.iter().zip(&c.records) {
            assert_eq!(t.assignments, r.gold);
            assert_eq!(t.goal_assignments, r.goal_gold);
            assert_eq!(t.states().len(), r.texts.len());
        }
        assert_eq!(res.labels(), gold_labels(&c));
    }

    #[test]
    fn extraction_jsonl_round_trip() {
        let c = blocks_corpus();
        let g = gold_extraction(&c);
        let mut buf = Vec::new();
        g.write_jsonl(&mut buf).unwrap();
        let back = ExtractionResult::read_jsonl(&buf[..], g.registry.clone()).unwrap();
        assert_eq!(back, g);
    }

    fn arb_theta() -> impl Strategy<Value = Vec<ObjectRef>> {
        prop::collection::vec((0..3usize, 0..4usize), 0..3).prop_map(|v| {
            let mut seen = BTreeSet::new();
            v.into_iter()
                .filter(|x| seen.insert(*x))
                .map(|(t, k)| ObjectRef::new(format!("O{t}x{k}"), ["A", "B", "C"][t]))
                .collect()
        })
    }

    fn arb_step() -> impl Strategy<Value = (Vec<usize>, Vec<ObjectRef>)> {
        (Just((0..5).collect::<Vec<usize>>()).prop_shuffle(), arb_theta())
    }

    const WORDS: [&str; 5] = ["w0", "w1", "w2", "w3", "w4"];

    proptest! {
        #[test]
        fn rule_properties(steps in prop::collection::vec(arb_step(), 1..40)) {
            let mut reg = PropositionRegistry::new();
            let mut again = PropositionRegistry::new();
            for (ranking, theta) in &steps {
                let before = reg.clone();
                let out = apply_rule(&mut reg, ranking.iter().map(|&i| WORDS[i]), theta);
                // registry only grows, by at most one entry
                prop_assert!(reg.len() <= before.len() + 1);
                prop_assert_eq!(&reg.entries()[..before.len()], before.entries());
                match out.rule {
                    Rule::New => prop_assert_eq!(reg.len(), before.len() + 1),
                    _ => {}
                }
                // emitted proposition always type-checks against its entry
                prop_assert_eq!(&out.proposition.topical(), reg.get(out.entry));
                // parameter multiset is preserved
                let mut a = out.proposition.params.clone();
                let mut b = theta.clone();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
                // skipped words head entries without a bijection
                for w in &out.skipped {
                    prop_assert!(before.headed_by(w).all(|(_, e)| type_bijection(&e.signature, theta).is_none()));
                }
                let replay = apply_rule(&mut again, ranking.iter().map(|&i| WORDS[i]), theta);
                prop_assert_eq!(replay, out);
            }
            prop_assert_eq!(reg, again);
        }
    }

    #[test]
    fn identical_sentences_get_identical_propositions() {
        let c = blocks_corpus();
        let vocab = Vocabulary::from_corpus(&c);
        let mut rng = seed::rng(1, 0);
        let enc = EncoderModel::new(
            vocab,
            &crate::encoder::EncoderConfig {
                embed_dim: 8,
                hidden_dim: 8,
                topics: 4,
                ..Default::default()
            },
            &mut rng,
        );
        let records: Vec<&TaskRecord> = c.records.iter().collect();
        let a = initialize_traces(&records, &enc, 11);
        let b = initialize_traces(&records, &enc, 11);
        assert_eq!(a, b);
        let mut seen: HashMap<(Vec<usize>, Vec<TypeName>), TopicalProposition> = HashMap::new();
        for (t, r) in a.tasks.iter().zip(&c.records) {
            let table = r.object_table();
            for (s, p) in r.texts.iter().flatten().zip(t.assignments.iter().flatten()) {
                let toks = tokenize(s, &table);
                let ids = enc.vocab.encode(&toks).ids;
                let mut types: Vec<TypeName> = mentioned_objects(&toks).into_iter().map(|o| o.ty).collect();
                types.sort();
                let prev = seen.entry((ids, types)).or_insert_with(|| p.topical());
                assert_eq!(*prev, p.topical());
            }
        }
    }
}
