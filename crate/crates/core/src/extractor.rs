//! Neural proposition extractor and its training data.
//!
//! The predicate generator maps a sentence representation `h` into topic
//! space; word scores are `softmax(V Tᵀ δ_ρ(h))`. The parameter sequencer
//! is a GRU that reads the mentioned objects in sentence order and predicts
//! each one's position in the proposition.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TaskRecord;
use crate::encoder::{EncodeCache, EncoderModel};
use crate::initializer::{extract_with, head_word, ExtractionResult};
use crate::model::{simulate_plan, Domain, ModelError, ObjectRef, Proposition, State};
use crate::nn::{axpy, softmax, Gru, GruCache, Linear, Optimizer, OptimizerKind, Parameters};
use crate::seed;
use crate::text::{mentioned_objects, tokenize, Vocabulary};

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("extractor training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("task {0} has no extraction")]
    MissingTask(usize),
    #[error("line {line}: {msg}")]
    Json { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub max_arity: usize,
    pub seq_hidden: usize,
    pub fine_tune_encoder: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            epochs: 3,
            lr: 1e-4,
            batch_size: 32,
            optimizer: OptimizerKind::adam(),
            max_arity: 2,
            seq_hidden: 32,
            fine_tune_encoder: true,
        }
    }
}

/// Forward-simulates `plan` from `init` under `domain`, forcing every step.
pub fn simulate(domain: &Domain, init: &State, plan: &[crate::model::GroundAction]) -> Result<Vec<State>, ExtractorError> {
    Ok(simulate_plan(init, plan, domain, false)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relabel {
    Reorder,
    Predicate,
}

/// One training pair `⟨f, ρ, Θ⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub sentence: String,
    pub predicate: String,
    /// Target parameters in proposition order.
    pub params: Vec<ObjectRef>,
    /// For each mentioned object in sentence order, its position in `params`.
    pub index_seq: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabel: Option<Relabel>,
    #[serde(skip)]
    pub ids: Vec<usize>,
    #[serde(skip)]
    pub mentioned: Vec<ObjectRef>,
}

impl TrainingExample {
    pub fn new(sentence: &str, target: &Proposition, record: &TaskRecord, vocab: &Vocabulary, relabel: Option<Relabel>) -> Self {
        let table = record.object_table();
        let tokens = tokenize(sentence, &table);
        let mentioned = mentioned_objects(&tokens);
        let index_seq = mentioned
            .iter()
            .map(|o| target.params.iter().position(|p| p == o).unwrap_or(0))
            .collect();
        TrainingExample {
            sentence: sentence.to_string(),
            predicate: target.predicate.clone(),
            params: target.params.clone(),
            index_seq,
            relabel,
            ids: vocab.encode(&tokens).ids,
            mentioned,
        }
    }
}

pub fn write_dataset<W: Write>(examples: &[TrainingExample], mut w: W) -> Result<(), ExtractorError> {
    for e in examples {
        writeln!(w, "{}", serde_json::to_string(e).expect("example serializes"))?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<TrainingExample>, ExtractorError> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ExtractorError::Json {
            line: k + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn same_objects(a: &[ObjectRef], b: &[ObjectRef]) -> bool {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort();
    y.sort();
    x == y
}

/// Target for one observed sentence given the simulated state it should
/// describe. `described` holds what the other sentences of the same text
/// were mapped to; they are not available as relabel targets.
pub fn relabel(p: &Proposition, simulated: &State, described: &State) -> Option<(Proposition, Relabel)> {
    if simulated.contains(p) {
        return None;
    }
    let open: Vec<&Proposition> = simulated.iter().filter(|q| !described.contains(q)).collect();
    let reorder: Vec<&&Proposition> = open
        .iter()
        .filter(|q| q.predicate == p.predicate && q.params != p.params && same_objects(&q.params, &p.params))
        .collect();
    if let [q] = reorder[..] {
        return Some(((*q).clone(), Relabel::Reorder));
    }
    let rename: Vec<&&Proposition> = open
        .iter()
        .filter(|q| q.params == p.params && q.predicate != p.predicate)
        .collect();
    if let [q] = rename[..] {
        return Some(((*q).clone(), Relabel::Predicate));
    }
    None
}

/// Builds the training set from `records` and their extraction, revising
/// targets of observation sentences after the first text against traces
/// simulated under `domain`.
pub fn build_dataset(
    records: &[&TaskRecord],
    extraction: &ExtractionResult,
    domain: &Domain,
    vocab: &Vocabulary,
) -> Result<Vec<TrainingExample>, ExtractorError> {
    let by_id: HashMap<usize, &crate::initializer::TaskExtraction> = extraction.tasks.iter().map(|t| (t.id, t)).collect();
    let mut out = Vec::new();
    for r in records {
        let t = by_id.get(&r.id).ok_or(ExtractorError::MissingTask(r.id))?;
        let states = t.states();
        let sim = simulate(domain, &states[0], &r.plan)?;
        for (i, (text, props)) in r.texts.iter().zip(&t.assignments).enumerate() {
            for (s, p) in text.iter().zip(props) {
                let revised = if i == 0 { None } else { relabel(p, &sim[i], &states[i]) };
                out.push(match revised {
                    Some((q, case)) => TrainingExample::new(s, &q, r, vocab, Some(case)),
                    None => TrainingExample::new(s, p, r, vocab, None),
                });
            }
        }
        for (s, p) in r.goal_text.iter().zip(&t.goal_assignments) {
            out.push(TrainingExample::new(s, p, r, vocab, None));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorModel {
    pub rho_hidden: Linear,
    pub rho_out: Linear,
    pub seq: Gru,
    pub seq_head: Linear,
    pub max_arity: usize,
    pub n_types: usize,
}

impl Parameters for ExtractorModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.rho_hidden.tensors();
        v.extend(self.rho_out.tensors());
        v.extend(self.seq.tensors());
        v.extend(self.seq_head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.rho_hidden.tensors_mut();
        v.extend(self.rho_out.tensors_mut());
        v.extend(self.seq.tensors_mut());
        v.extend(self.seq_head.tensors_mut());
        v
    }
}

impl ExtractorModel {
    pub fn new(encoder: &EncoderModel, config: &ExtractorConfig, seed: u64) -> Self {
        let mut rng = seed::rng(seed, 0xe47);
        let hd = encoder.hidden_dim();
        let k = encoder.num_topics();
        let n_types = encoder.vocab.types.len();
        ExtractorModel {
            rho_hidden: Linear::new(hd, hd, &mut rng),
            rho_out: Linear::new(hd, k, &mut rng),
            seq: Gru::new(hd + n_types + config.max_arity, config.seq_hidden, &mut rng),
            seq_head: Linear::new(config.seq_hidden, config.max_arity, &mut rng),
            max_arity: config.max_arity,
            n_types,
        }
    }

    /// `δ_ρ(h)`: a point in topic space.
    pub fn predicate_point(&self, h: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = self.rho_hidden.forward(h).into_iter().map(f64::tanh).collect();
        self.rho_out.forward(&u)
    }

    fn seq_inputs(&self, h: &[f64], mentioned: &[ObjectRef], vocab: &Vocabulary) -> Vec<Vec<f64>> {
        mentioned
            .iter()
            .take(self.max_arity)
            .enumerate()
            .map(|(t, o)| {
                let mut x = h.to_vec();
                let mut ty = vec![0.0; self.n_types];
                if let Some(k) = vocab.type_id(&o.ty) {
                    ty[k] = 1.0;
                }
                x.extend(ty);
                let mut pos = vec![0.0; self.max_arity];
                pos[t] = 1.0;
                x.extend(pos);
                x
            })
            .collect()
    }

    /// Per-step index logits for the mentioned objects.
    pub fn index_logits(&self, h: &[f64], mentioned: &[ObjectRef], vocab: &Vocabulary) -> Vec<Vec<f64>> {
        if mentioned.is_empty() {
            return Vec::new();
        }
        let c = self.seq.forward(self.seq_inputs(h, mentioned, vocab), None);
        c.hs[1..].iter().map(|s| self.seq_head.forward(s)).collect()
    }
}

/// Places each object at its predicted index; objects whose index is out
/// of range or already taken fill the remaining positions in sentence order.
pub fn arrange(mentioned: &[ObjectRef], logits: &[Vec<f64>]) -> Vec<ObjectRef> {
    let n = mentioned.len();
    let mut slots: Vec<Option<ObjectRef>> = vec![None; n];
    let mut leftover = Vec::new();
    for (t, o) in mentioned.iter().enumerate() {
        let idx = logits.get(t).and_then(|l| {
            l.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
        });
        match idx {
            Some(i) if i < n && slots[i].is_none() => slots[i] = Some(o.clone()),
            _ => leftover.push(o.clone()),
        }
    }
    let mut rest = leftover.into_iter();
    slots.into_iter().map(|s| s.unwrap_or_else(|| rest.next().unwrap())).collect()
}

/// Encoder and extractor trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub encoder: EncoderModel,
    pub extractor: ExtractorModel,
}

impl Parameters for Joint {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.tensors();
        v.extend(self.extractor.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.extractor.tensors_mut());
        v
    }
}

struct Forward {
    enc: EncodeCache,
    u: Vec<f64>,
    o: Vec<f64>,
    probs: Vec<f64>,
    seq: Option<GruCache>,
    seq_probs: Vec<Vec<f64>>,
}

impl Joint {
    fn forward(&self, ex: &TrainingExample) -> Option<Forward> {
        let enc = self.encoder.encode_with_cache(&ex.ids).ok()?;
        let x = &self.extractor;
        let u: Vec<f64> = x.rho_hidden.forward(&enc.h).into_iter().map(f64::tanh).collect();
        let o = x.rho_out.forward(&u);
        let probs = softmax(&self.encoder.word_logits(&o));
        let (seq, seq_probs) = if ex.mentioned.is_empty() {
            (None, Vec::new())
        } else {
            let c = x.seq.forward(x.seq_inputs(&enc.h, &ex.mentioned, &self.encoder.vocab), None);
            let p = c.hs[1..].iter().map(|s| softmax(&x.seq_head.forward(s))).collect();
            (Some(c), p)
        };
        Some(Forward {
            enc,
            u,
            o,
            probs,
            seq,
            seq_probs,
        })
    }

    fn target_word(&self, ex: &TrainingExample) -> Option<usize> {
        self.encoder.vocab.word_id(head_word(&ex.predicate))
    }

    /// Cross-entropy of the predicate plus the index sequence.
    pub fn example_loss(&self, ex: &TrainingExample) -> f64 {
        let Some(f) = self.forward(ex) else {
            return 0.0;
        };
        let mut loss = 0.0;
        if let Some(w) = self.target_word(ex) {
            loss -= f.probs[w].ln();
        }
        for (p, &i) in f.seq_probs.iter().zip(&ex.index_seq) {
            loss -= p[i.min(p.len() - 1)].ln();
        }
        loss
    }

    /// Accumulates `weight ×` the example's gradient into `grad`; returns the
    /// example's loss.
    fn accumulate(&self, ex: &TrainingExample, weight: f64, grad: &mut Joint) -> f64 {
        let Some(f) = self.forward(ex) else {
            return 0.0;
        };
        let x = &self.extractor;
        let mut loss = 0.0;
        let mut dh = vec![0.0; f.enc.h.len()];
        if let Some(w) = self.target_word(ex) {
            loss -= f.probs[w].ln();
            let mut dlogits: Vec<f64> = f.probs.iter().map(|p| weight * p).collect();
            dlogits[w] -= weight;
            let do_ = self.encoder.word_logits_backward(&f.o, &dlogits, &mut grad.encoder);
            let mut du = vec![0.0; f.u.len()];
            x.rho_out.backward(&f.u, &do_, &mut grad.extractor.rho_out, &mut du);
            let da: Vec<f64> = du.iter().zip(&f.u).map(|(g, u)| g * (1.0 - u * u)).collect();
            x.rho_hidden.backward(&f.enc.h, &da, &mut grad.extractor.rho_hidden, &mut dh);
        }
        if let Some(c) = &f.seq {
            let mut dhs = Vec::with_capacity(f.seq_probs.len());
            for (t, (p, &i)) in f.seq_probs.iter().zip(&ex.index_seq).enumerate() {
                let i = i.min(p.len() - 1);
                loss -= p[i].ln();
                let mut dl: Vec<f64> = p.iter().map(|q| weight * q).collect();
                dl[i] -= weight;
                let mut ds = vec![0.0; x.seq.hidden];
                x.seq_head.backward(&c.hs[t + 1], &dl, &mut grad.extractor.seq_head, &mut ds);
                dhs.push(ds);
            }
            let (dxs, _) = x.seq.backward(c, &dhs, &mut grad.extractor.seq);
            let hd = dh.len();
            for dx in &dxs {
                axpy(1.0, &dx[..hd], &mut dh);
            }
        }
        self.encoder.backward_h(&f.enc, &dh, &mut grad.encoder);
        loss
    }

    /// Mean loss and gradient over a batch; identical examples share one
    /// forward/backward pass.
    pub fn batch_loss_and_grad(&self, batch: &[&TrainingExample], grad: &mut Joint) -> f64 {
        let mut groups: HashMap<(&[usize], &str, &[usize], Vec<&crate::model::TypeName>), (usize, usize)> = HashMap::new();
        for (k, ex) in batch.iter().enumerate() {
            let key = (
                &ex.ids[..],
                head_word(&ex.predicate),
                &ex.index_seq[..],
                ex.mentioned.iter().map(|o| &o.ty).collect(),
            );
            groups.entry(key).or_insert((k, 0)).1 += 1;
        }
        let n = batch.len() as f64;
        let mut total = 0.0;
        let mut reps: Vec<(usize, usize)> = groups.into_values().collect();
        reps.sort();
        for (k, count) in reps {
            let loss = self.accumulate(batch[k], count as f64 / n, grad);
            total += loss * count as f64;
        }
        total / n
    }

    pub fn batch_loss(&self, batch: &[&TrainingExample]) -> f64 {
        batch.iter().map(|e| self.example_loss(e)).sum::<f64>() / batch.len() as f64
    }

    /// Word ranking and arranged parameters for one sentence.
    pub fn propose(&self, ids: &[usize], mentioned: &[ObjectRef]) -> (Vec<usize>, Vec<ObjectRef>) {
        let Ok(h) = self.encoder.encode(ids) else {
            return ((0..self.encoder.vocab.len()).collect(), mentioned.to_vec());
        };
        let o = self.extractor.predicate_point(&h);
        let ranking = self.encoder.topic_word_scores(&o).ranking;
        let logits = self.extractor.index_logits(&h, mentioned, &self.encoder.vocab);
        (ranking, arrange(mentioned, &logits))
    }

    /// Re-extracts every record with a fresh registry.
    pub fn extract(&self, records: &[&TaskRecord]) -> ExtractionResult {
        let mut memo: HashMap<(Vec<usize>, Vec<crate::model::TypeName>), (Vec<usize>, Vec<usize>)> = HashMap::new();
        let vocab = &self.encoder.vocab;
        extract_with(records, vocab, &vocab.words, |enc, mentioned| {
            let types = mentioned.iter().map(|o| o.ty.clone()).collect();
            let (ranking, perm) = memo
                .entry((enc.ids.clone(), types))
                .or_insert_with(|| {
                    let (ranking, arranged) = self.propose(&enc.ids, &mentioned);
                    let perm = arranged.iter().map(|o| mentioned.iter().position(|m| m == o).unwrap()).collect();
                    (ranking, perm)
                })
                .clone();
            (ranking, perm.iter().map(|&i| mentioned[i].clone()).collect())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorReport {
    pub epoch_losses: Vec<f64>,
    pub examples: usize,
    pub relabeled_order: usize,
    pub relabeled_predicate: usize,
}

/// Trains `joint` on `examples`. The encoder is updated too unless the
/// config freezes it.
pub fn train(joint: &mut Joint, examples: &[TrainingExample], config: &ExtractorConfig, seed: u64) -> Result<ExtractorReport, ExtractorError> {
    if examples.is_empty() {
        return Err(ExtractorError::EmptyDataset);
    }
    let mut rng = seed::rng(seed, 0x7a1);
    let mut opt = Optimizer::new(config.optimizer, config.lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let mut grad = joint.zero_like();
            let loss = joint.batch_loss_and_grad(&batch, &mut grad);
            if !loss.is_finite() || !grad.all_finite() {
                return Err(ExtractorError::Diverged {
                    epoch: epoch + 1,
                    batch: bi,
                    loss,
                });
            }
            sum += loss * chunk.len() as f64;
            if config.fine_tune_encoder {
                opt.step(joint.tensors_mut(), grad.tensors());
            } else {
                opt.step(joint.extractor.tensors_mut(), grad.extractor.tensors());
            }
        }
        let mean = sum / examples.len() as f64;
        log::info!("extractor epoch {}: mean loss {mean:.5}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(ExtractorReport {
        epoch_losses,
        examples: examples.len(),
        relabeled_order: examples.iter().filter(|e| e.relabel == Some(Relabel::Reorder)).count(),
        relabeled_predicate: examples.iter().filter(|e| e.relabel == Some(Relabel::Predicate)).count(),
    })
}

/// Predicate names used in the observation assignments of an extraction.
pub fn distinct_predicates(extraction: &ExtractionResult) -> BTreeSet<String> {
    extraction
        .tasks
        .iter()
        .flat_map(|t| t.assignments.iter().flatten())
        .map(|p| p.predicate.clone())
        .collect()
}
