//! The full learning loop.
//!
//! Train the sentence VAE, map sentences to propositions, learn one domain
//! per sampled plan and merge them. Then alternate between training the
//! proposition extractor on traces revised under the merged domain and
//! re-learning the domain from the new extraction.

use std::collections::BTreeSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{conclusive, ActionScores, ConsensusConfig, ConsensusError};
use crate::corpus::{Corpus, CorpusConfig, Split, TaskRecord};
use crate::encoder::{train_vae, EncoderConfig, EncoderError};
use crate::eval::{EvalError, MetricsReport, PlanView};
use crate::extractor::{build_dataset, train, ExtractorConfig, ExtractorError, ExtractorModel, Joint};
use crate::initializer::{gold_extraction, gold_labels, initialize_traces, ExtractionResult, PropositionRegistry};
use crate::model::{ActionHeader, Domain, Proposition, State};
use crate::pddl::emit_domain;
use crate::satlearn::{learn_one, SatConfig, SatError};
use crate::seed;
use crate::text::Vocabulary;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("corpus has no training tasks")]
    NoTrainingData,
    #[error("no per-plan domain could be learned: {0}")]
    NoDomain(String),
    #[error("cannot resume from {path}: {msg}")]
    Resume { path: PathBuf, msg: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Io(String),
}

fn io<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: usize,
    /// Learn once from the initial extraction and stop.
    pub skip_em: bool,
    /// Extract the initial traces with an untrained extractor.
    pub skip_initializer: bool,
    /// Cap on per-plan learners per iteration.
    pub plans_per_iteration: usize,
    /// Re-initialize the extractor before every iteration.
    pub reset_extractor: bool,
    /// Stop when an iteration reproduces the previous extraction.
    pub early_stop: bool,
    pub goal_credit: bool,
    /// Worker threads for per-plan learning.
    pub threads: usize,
    pub corpus: CorpusConfig,
    pub encoder: EncoderConfig,
    pub extractor: ExtractorConfig,
    pub sat: SatConfig,
    pub consensus: ConsensusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            iterations: 100,
            skip_em: false,
            skip_initializer: false,
            plans_per_iteration: 64,
            reset_extractor: false,
            early_stop: true,
            goal_credit: true,
            threads: 1,
            corpus: CorpusConfig::default(),
            encoder: EncoderConfig::default(),
            extractor: ExtractorConfig::default(),
            sat: SatConfig::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

/// Where the extraction of each stage comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtractionSource {
    #[default]
    Learned,
    /// Gold labels at every stage (oracle runs and tests).
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub metrics: MetricsReport,
    pub learned_plans: usize,
    pub failed_plans: usize,
    pub registry_size: usize,
    pub relabeled_order: usize,
    pub relabeled_predicate: usize,
    pub extractor_losses: Vec<f64>,
    pub changed_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub domain: Domain,
    pub history: Vec<IterationRecord>,
    pub vae_losses: Vec<f64>,
    pub stop_reason: String,
}

impl RunOutcome {
    pub fn final_metrics(&self) -> &MetricsReport {
        &self.history.last().expect("at least one iteration").metrics
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    iteration: usize,
    domain: Domain,
    history: Vec<IterationRecord>,
    vae_losses: Vec<f64>,
    plan_ids: Vec<usize>,
}

/// Learns one domain per sampled plan and merges them.
#[allow(clippy::too_many_arguments)]
pub fn learn_domain(
    records: &[&TaskRecord],
    extraction: &ExtractionResult,
    headers: &[ActionHeader],
    sat: &SatConfig,
    consensus: &ConsensusConfig,
    seed: u64,
    threads: usize,
    name: &str,
) -> Result<(Domain, Vec<ActionScores>, usize, usize), RunError> {
    let registry = &extraction.registry;
    let job = |r: &TaskRecord| -> Result<Domain, SatError> {
        let t = extraction.task(r.id).expect("extraction covers every record");
        learn_one(&t.states(), &r.plan, &t.goal(), registry, headers, sat, seed::derive(seed, r.id as u64), name)
    };
    let results: Vec<Result<Domain, SatError>> = if threads <= 1 || records.len() < 2 {
        records.iter().map(|r| job(r)).collect()
    } else {
        let chunk = records.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = records
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(|r| job(r)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    let mut domains = Vec::new();
    let mut last_err = String::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(d) => domains.push(d),
            Err(e) => {
                log::warn!("task {}: {e}", r.id);
                last_err = e.to_string();
            }
        }
    }
    let failed = records.len() - domains.len();
    if domains.is_empty() {
        return Err(RunError::NoDomain(last_err));
    }
    let (d, scores) = conclusive(&domains, registry, headers, consensus, name)?;
    Ok((d, scores, domains.len(), failed))
}

/// Metrics on the test split: error and redundancy rates from the extracted
/// initial states and goals, Rand index of sentence labels against gold.
pub fn evaluate(domain: &Domain, corpus: &Corpus, extraction: &ExtractionResult, goal_credit: bool) -> Result<MetricsReport, RunError> {
    let test: Vec<&TaskRecord> = corpus.split(Split::Test).collect();
    let states: Vec<(State, BTreeSet<Proposition>)> = test
        .iter()
        .map(|r| {
            let t = extraction.task(r.id).expect("extraction covers every record");
            (t.states().swap_remove(0), t.goal())
        })
        .collect();
    let views: Vec<PlanView> = test
        .iter()
        .zip(&states)
        .map(|(r, (s, g))| PlanView {
            id: r.id,
            plan: &r.plan,
            init: s,
            goal: g,
        })
        .collect();
    let test_ids: BTreeSet<usize> = test.iter().map(|r| r.id).collect();
    let test_only = ExtractionResult {
        tasks: extraction.tasks.iter().filter(|t| test_ids.contains(&t.id)).cloned().collect(),
        registry: PropositionRegistry::new(),
    };
    let test_corpus = Corpus {
        domain: corpus.domain.clone(),
        records: test.iter().map(|r| (*r).clone()).collect(),
    };
    Ok(MetricsReport::compute(
        domain,
        &views,
        &test_only.labels(),
        &gold_labels(&test_corpus),
        goal_credit,
    )?)
}

fn changed(a: &ExtractionResult, b: &ExtractionResult) -> usize {
    a.tasks
        .iter()
        .zip(&b.tasks)
        .map(|(x, y)| {
            x.assignments
                .iter()
                .flatten()
                .chain(&x.goal_assignments)
                .zip(y.assignments.iter().flatten().chain(&y.goal_assignments))
                .filter(|(p, q)| p != q)
                .count()
        })
        .sum()
}

struct RunDir {
    root: Option<PathBuf>,
}

impl RunDir {
    fn iter_dir(&self, k: usize) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(format!("iter_{k}")))
    }

    #[allow(clippy::too_many_arguments)]
    fn save_iteration(
        &self,
        k: usize,
        domain: &Domain,
        extraction: &ExtractionResult,
        scores: &[ActionScores],
        joint: &Joint,
        ck: &Checkpoint,
    ) -> Result<(), RunError> {
        let Some(dir) = self.iter_dir(k) else {
            return Ok(());
        };
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let p = dir.join("domain.pddl");
        fs::write(&p, emit_domain(domain)).map_err(io(&p))?;
        let p = dir.join("registry.json");
        extraction.registry.save(&p).map_err(io(&p))?;
        let p = dir.join("extraction.jsonl");
        let f = fs::File::create(&p).map_err(io(&p))?;
        extraction.write_jsonl(BufWriter::new(f)).map_err(io(&p))?;
        let p = dir.join("scores.json");
        fs::write(&p, serde_json::to_string_pretty(scores).expect("scores serialize")).map_err(io(&p))?;
        let p = dir.join("model.json");
        let model = serde_json::to_string(&(&joint.encoder, &joint.extractor)).expect("model serializes");
        fs::write(&p, model).map_err(io(&p))?;
        // written last: its presence marks a complete checkpoint
        let p = dir.join("state.json");
        let tmp = dir.join("state.json.tmp");
        fs::write(&tmp, serde_json::to_string(ck).expect("checkpoint serializes")).map_err(io(&tmp))?;
        fs::rename(&tmp, &p).map_err(io(&p))?;
        Ok(())
    }

    fn finish(&self, outcome: &RunOutcome, config: &RunConfig) -> Result<(), RunError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let dir = root.join("final");
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let p = dir.join("domain.pddl");
        fs::write(&p, emit_domain(&outcome.domain)).map_err(io(&p))?;
        let m = outcome.final_metrics();
        let doc = serde_json::json!({
            "R_e": m.r_e.value,
            "R_r": m.r_r.value,
            "R_i": m.r_i.value,
            "counts": {
                "preconditions": m.r_e.denominator,
                "unestablished": m.r_e.numerator,
                "adds": m.r_r.denominator,
                "redundant": m.r_r.numerator,
                "pairs": m.r_i.denominator,
                "agreeing_pairs": m.r_i.numerator,
            },
            "degenerate": {"R_e": m.r_e.degenerate, "R_r": m.r_r.degenerate, "R_i": m.r_i.degenerate},
            "goal_credit": m.goal_credit,
            "iterations_run": outcome.history.len() - 1,
            "stop_reason": outcome.stop_reason,
            "plans_per_iteration": config.plans_per_iteration,
            "history": outcome.history.iter().map(|h| serde_json::json!({
                "iteration": h.iteration,
                "R_e": h.metrics.r_e.value,
                "R_r": h.metrics.r_r.value,
                "R_i": h.metrics.r_i.value,
                "learned_plans": h.learned_plans,
                "failed_plans": h.failed_plans,
                "registry_size": h.registry_size,
                "relabeled_order": h.relabeled_order,
                "relabeled_predicate": h.relabeled_predicate,
                "changed_sentences": h.changed_sentences,
            })).collect::<Vec<_>>(),
            "config_echo": config,
        });
        let p = root.join("metrics.json");
        fs::write(&p, serde_json::to_string_pretty(&doc).expect("metrics serialize")).map_err(io(&p))?;
        Ok(())
    }
}

/// Sentences of the training split used to fit the VAE.
fn training_sentences(corpus: &Corpus, vocab: &Vocabulary) -> Vec<crate::text::Encoded> {
    corpus
        .split(Split::Train)
        .flat_map(|r| {
            let table = r.object_table();
            r.texts
                .iter()
                .flatten()
                .chain(&r.goal_text)
                .map(|s| vocab.encode_sentence(s, &table))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn sample_plans(corpus: &Corpus, config: &RunConfig) -> Vec<usize> {
    let mut ids: Vec<usize> = corpus.split(Split::Train).map(|r| r.id).collect();
    let mut rng = seed::rng(config.seed, 0x91a);
    ids.shuffle(&mut rng);
    ids.truncate(config.plans_per_iteration.max(1));
    ids
}

/// Runs the loop; with `out` set, every iteration is checkpointed there.
pub fn run(
    corpus: &Corpus,
    headers: &[ActionHeader],
    config: &RunConfig,
    out: Option<&Path>,
    source: ExtractionSource,
) -> Result<RunOutcome, RunError> {
    run_inner(corpus, headers, config, out, source, false)
}

/// Continues the run stored in `out` from its last complete checkpoint.
pub fn resume(
    corpus: &Corpus,
    headers: &[ActionHeader],
    config: &RunConfig,
    out: &Path,
    source: ExtractionSource,
) -> Result<RunOutcome, RunError> {
    run_inner(corpus, headers, config, Some(out), source, true)
}

fn latest_checkpoint(out: &Path) -> Option<usize> {
    let mut best = None;
    for e in fs::read_dir(out).ok()?.flatten() {
        let name = e.file_name();
        let Some(k) = name.to_str().and_then(|n| n.strip_prefix("iter_")).and_then(|n| n.parse::<usize>().ok()) else {
            continue;
        };
        if e.path().join("state.json").exists() && best.is_none_or(|b| k > b) {
            best = Some(k);
        }
    }
    best
}

fn load_checkpoint(dir: &Path) -> Result<(Checkpoint, Joint, ExtractionResult), RunError> {
    let bad = |msg: String| RunError::Resume {
        path: dir.to_path_buf(),
        msg,
    };
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(dir.join("state.json")).map_err(|e| bad(e.to_string()))?)
        .map_err(|e| bad(e.to_string()))?;
    let (mut encoder, extractor): (crate::encoder::EncoderModel, ExtractorModel) =
        serde_json::from_str(&fs::read_to_string(dir.join("model.json")).map_err(|e| bad(e.to_string()))?)
            .map_err(|e| bad(e.to_string()))?;
    encoder.vocab.reindex();
    let registry = PropositionRegistry::load(&dir.join("registry.json")).map_err(|e| bad(e.to_string()))?;
    let f = fs::File::open(dir.join("extraction.jsonl")).map_err(|e| bad(e.to_string()))?;
    let extraction = ExtractionResult::read_jsonl(std::io::BufReader::new(f), registry).map_err(|e| bad(e.to_string()))?;
    Ok((ck, Joint { encoder, extractor }, extraction))
}

fn run_inner(
    corpus: &Corpus,
    headers: &[ActionHeader],
    config: &RunConfig,
    out: Option<&Path>,
    source: ExtractionSource,
    resuming: bool,
) -> Result<RunOutcome, RunError> {
    let train_records: Vec<&TaskRecord> = corpus.split(Split::Train).collect();
    if train_records.is_empty() {
        return Err(RunError::NoTrainingData);
    }
    let all_records: Vec<&TaskRecord> = corpus.records.iter().collect();
    let dir = RunDir {
        root: out.map(Path::to_path_buf),
    };
    let name = format!("learned-{}", corpus.domain);
    let learn = |extraction: &ExtractionResult, k: usize, plan_ids: &[usize]| {
        let sampled: Vec<&TaskRecord> = plan_ids
            .iter()
            .map(|id| *train_records.iter().find(|r| r.id == *id).expect("sampled from train"))
            .collect();
        learn_domain(
            &sampled,
            extraction,
            headers,
            &config.sat,
            &config.consensus,
            seed::derive(config.seed, 1000 + k as u64),
            config.threads,
            &name,
        )
    };
    let extract = |joint: &Joint| -> ExtractionResult {
        match source {
            ExtractionSource::Gold => gold_extraction(corpus),
            ExtractionSource::Learned => joint.extract(&all_records),
        }
    };

    let (mut joint, mut extraction, mut ck, start) = match (resuming, out.and_then(latest_checkpoint)) {
        (true, Some(k)) => {
            let d = dir.iter_dir(k).expect("resume has a directory");
            let (ck, joint, extraction) = load_checkpoint(&d)?;
            log::info!("resuming after iteration {k}");
            (joint, extraction, ck, k + 1)
        }
        _ => {
            let vocab = Vocabulary::from_corpus(corpus);
            let sentences = training_sentences(corpus, &vocab);
            let (encoder, report) = train_vae(vocab, &sentences, &config.encoder, seed::derive(config.seed, 1))?;
            let extractor = ExtractorModel::new(&encoder, &config.extractor, seed::derive(config.seed, 2));
            let joint = Joint { encoder, extractor };
            let extraction = match source {
                ExtractionSource::Gold => gold_extraction(corpus),
                ExtractionSource::Learned if config.skip_initializer => joint.extract(&all_records),
                ExtractionSource::Learned => initialize_traces(&all_records, &joint.encoder, seed::derive(config.seed, 3)),
            };
            let plan_ids = sample_plans(corpus, config);
            let (domain, scores, learned, failed) = learn(&extraction, 0, &plan_ids)?;
            let metrics = evaluate(&domain, corpus, &extraction, config.goal_credit)?;
            log::info!("iteration 0: R_e {:.4} R_r {:.4} R_i {:.4}", metrics.r_e.value, metrics.r_r.value, metrics.r_i.value);
            let ck = Checkpoint {
                iteration: 0,
                history: vec![IterationRecord {
                    iteration: 0,
                    metrics,
                    learned_plans: learned,
                    failed_plans: failed,
                    registry_size: extraction.registry.len(),
                    relabeled_order: 0,
                    relabeled_predicate: 0,
                    extractor_losses: Vec::new(),
                    changed_sentences: 0,
                }],
                domain,
                vae_losses: report.epoch_losses,
                plan_ids,
            };
            dir.save_iteration(0, &ck.domain, &extraction, &scores, &joint, &ck)?;
            (joint, extraction, ck, 1)
        }
    };

    let mut stop_reason = if config.skip_em {
        "EM disabled".to_string()
    } else {
        format!("{} iterations completed", config.iterations)
    };
    if !config.skip_em {
        for k in start..=config.iterations {
            let dataset = build_dataset(&train_records, &extraction, &ck.domain, &joint.encoder.vocab)?;
            if config.reset_extractor {
                joint.extractor = ExtractorModel::new(&joint.encoder, &config.extractor, seed::derive(config.seed, 2));
            }
            let report = train(&mut joint, &dataset, &config.extractor, seed::derive(config.seed, 2000 + k as u64))?;
            let next = extract(&joint);
            let diff = changed(&extraction, &next);
            let (domain, scores, learned, failed) = match learn(&next, k, &ck.plan_ids) {
                Ok(x) => x,
                Err(RunError::NoDomain(msg)) => {
                    stop_reason = format!("no feasible domain at iteration {k}: {msg}");
                    log::warn!("{stop_reason}");
                    break;
                }
                Err(e) => return Err(e),
            };
            let metrics = evaluate(&domain, corpus, &next, config.goal_credit)?;
            log::info!(
                "iteration {k}: R_e {:.4} R_r {:.4} R_i {:.4} ({diff} sentences changed)",
                metrics.r_e.value,
                metrics.r_r.value,
                metrics.r_i.value
            );
            ck.history.push(IterationRecord {
                iteration: k,
                metrics,
                learned_plans: learned,
                failed_plans: failed,
                registry_size: next.registry.len(),
                relabeled_order: report.relabeled_order,
                relabeled_predicate: report.relabeled_predicate,
                extractor_losses: report.epoch_losses,
                changed_sentences: diff,
            });
            ck.iteration = k;
            ck.domain = domain;
            extraction = next;
            dir.save_iteration(k, &ck.domain, &extraction, &scores, &joint, &ck)?;
            if config.early_stop && diff == 0 {
                stop_reason = format!("extraction unchanged at iteration {k}");
                break;
            }
        }
    }
    let outcome = RunOutcome {
        domain: ck.domain,
        history: ck.history,
        vae_losses: ck.vae_losses,
        stop_reason,
    };
    dir.finish(&outcome, config)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, bundled};

    fn tiny() -> (Corpus, Vec<ActionHeader>, RunConfig) {
        let cfg = CorpusConfig {
            train: 12,
            test: 4,
            ..CorpusConfig::default()
        };
        let bundle = bundled::blocks();
        let corpus = build_corpus(&bundle, 21, &cfg).unwrap();
        let run = RunConfig {
            seed: 5,
            iterations: 2,
            plans_per_iteration: 6,
            encoder: EncoderConfig {
                embed_dim: 8,
                hidden_dim: 8,
                topics: 6,
                epochs: 1,
                ..Default::default()
            },
            extractor: ExtractorConfig {
                epochs: 1,
                seq_hidden: 4,
                ..Default::default()
            },
            consensus: ConsensusConfig {
                epochs: 2000,
                ..Default::default()
            },
            ..Default::default()
        };
        (corpus, bundle.domain.headers(), run)
    }

    #[test]
    fn gold_extraction_reaches_fixpoint() {
        let (corpus, headers, cfg) = tiny();
        let out = run(&corpus, &headers, &cfg, None, ExtractionSource::Gold).unwrap();
        assert_eq!(out.history.len(), 2);
        assert!(out.stop_reason.contains("unchanged at iteration 1"));
        assert_eq!(out.history[1].changed_sentences, 0);
        assert_eq!(out.history[0].metrics, out.history[1].metrics);
    }

    #[test]
    fn no_em_learns_once() {
        let (corpus, headers, mut cfg) = tiny();
        cfg.skip_em = true;
        cfg.iterations = 0;
        let out = run(&corpus, &headers, &cfg, None, ExtractionSource::Learned).unwrap();
        assert_eq!(out.history.len(), 1);
        out.domain.validate().unwrap();
    }

    #[test]
    fn resume_reproduces_the_run() {
        let (corpus, headers, cfg) = tiny();
        let full_dir = tempfile::tempdir().unwrap();
        let full = run(&corpus, &headers, &cfg, Some(full_dir.path()), ExtractionSource::Learned).unwrap();
        let part_dir = tempfile::tempdir().unwrap();
        let mut short = cfg.clone();
        short.iterations = 1;
        run(&corpus, &headers, &short, Some(part_dir.path()), ExtractionSource::Learned).unwrap();
        let resumed = resume(&corpus, &headers, &cfg, part_dir.path(), ExtractionSource::Learned).unwrap();
        assert_eq!(resumed.domain, full.domain);
        assert_eq!(resumed.history, full.history);
        for k in 0..full.history.len() {
            let a = fs::read(full_dir.path().join(format!("iter_{k}/domain.pddl"))).unwrap();
            let b = fs::read(part_dir.path().join(format!("iter_{k}/domain.pddl"))).unwrap();
            assert_eq!(a, b);
        }
        assert!(full_dir.path().join("metrics.json").exists());
        assert!(full_dir.path().join("final/domain.pddl").exists());
    }
}
