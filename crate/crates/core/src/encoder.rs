//! Sentence encoder and topic decoder.
//!
//! A sentence's token embeddings run through a GRU and an affine `tanh`
//! layer to give `h`. Two heads map `h` to a Gaussian over topic space. A
//! sample is softmax-normalized into a topic mixture `z`. The decoder
//! reconstructs the bag of words as `softmax_col(V Tᵀ) z`, where `V` holds
//! word embeddings and `T` topic embeddings in the same space.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{axpy, dot, softmax, softmax_backward, Gru, GruCache, Linear, Mat, Optimizer, OptimizerKind, Parameters};
use crate::seed;
use crate::text::{Encoded, Vocabulary};

pub const CHECKPOINT_FORMAT: &str = "textstrips-encoder/1";

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("no trainable sentences")]
    EmptyCorpus,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Word/topic embedding width.
    pub embed_dim: usize,
    /// Width of the sentence representation `h`.
    pub hidden_dim: usize,
    pub topics: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub init_scale: f64,
    pub recon_scale: ReconScale,
    /// Batches over which the KL gradient weight ramps from 0 to 1.
    pub kl_warmup: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 64,
            hidden_dim: 64,
            topics: 32,
            epochs: 3,
            lr: 3e-3,
            batch_size: 32,
            optimizer: OptimizerKind::adam(),
            init_scale: 0.5,
            recon_scale: ReconScale::Tokens,
            kl_warmup: 0,
        }
    }
}

impl EncoderConfig {
    /// Plain SGD at step 1e-2 with unit-scaled reconstruction.
    pub fn plain_sgd() -> Self {
        EncoderConfig {
            lr: 1e-2,
            optimizer: OptimizerKind::sgd(),
            recon_scale: ReconScale::Unit,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub vocab: Vocabulary,
    pub words: Mat,
    /// Type placeholders, then UNK.
    pub specials: Mat,
    pub topics: Mat,
    pub gru: Gru,
    pub fc: Linear,
    pub mu: Linear,
    pub logvar: Linear,
}

impl Parameters for EncoderModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![&self.words.data[..], &self.specials.data[..], &self.topics.data[..]];
        v.extend(self.gru.tensors());
        v.extend(self.fc.tensors());
        v.extend(self.mu.tensors());
        v.extend(self.logvar.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![
            &mut self.words.data[..],
            &mut self.specials.data[..],
            &mut self.topics.data[..],
        ];
        v.extend(self.gru.tensors_mut());
        v.extend(self.fc.tensors_mut());
        v.extend(self.mu.tensors_mut());
        v.extend(self.logvar.tensors_mut());
        v
    }
}

/// Forward intermediates needed to backpropagate from `h`.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    ids: Vec<usize>,
    gru: GruCache,
    pub h: Vec<f64>,
}

/// Word likelihoods and their descending ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct WordScores {
    pub probs: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl WordScores {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probs = softmax(logits);
        let mut ranking: Vec<usize> = (0..probs.len()).collect();
        // stable: equal scores keep index order
        ranking.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap_or(std::cmp::Ordering::Equal));
        WordScores { probs, ranking }
    }
}

/// How the reconstruction cross-entropy of one sentence is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconScale {
    /// By the sentence's vocabulary word count: the multinomial
    /// log-likelihood of its words.
    #[default]
    Tokens,
    /// Once per sentence.
    Unit,
}

impl ReconScale {
    pub fn factor(self, enc: &Encoded, vocab_len: usize) -> f64 {
        match self {
            ReconScale::Tokens => enc.ids.iter().filter(|&&i| i < vocab_len).count() as f64,
            ReconScale::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub recon: f64,
    pub kl: f64,
}

impl SampleLoss {
    pub fn total(&self) -> f64 {
        self.recon + self.kl
    }
}

/// Closed-form KL(N(μ, diag σ²) ‖ N(0, I)) with `logvar = ln σ²`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Cross-entropy `-Σ b log b̂` over words with positive target mass.
pub fn reconstruction_loss(bow: &[f64], recon: &[f64]) -> f64 {
    bow.iter()
        .zip(recon)
        .filter(|(b, _)| **b > 0.0)
        .map(|(b, r)| -b * r.ln())
        .sum()
}

impl EncoderModel {
    pub fn new(vocab: Vocabulary, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let (e, k, hd) = (config.embed_dim, config.topics, config.hidden_dim);
        let s = config.init_scale;
        let n_special = vocab.types.len() + 1;
        EncoderModel {
            words: Mat::uniform(vocab.len(), e, s, rng),
            specials: Mat::uniform(n_special, e, s, rng),
            topics: Mat::uniform(k, e, s, rng),
            gru: Gru::new(e, hd, rng),
            fc: Linear::new(hd, hd, rng),
            mu: Linear::new(hd, k, rng),
            logvar: Linear::new(hd, k, rng),
            vocab,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.topics.rows
    }

    pub fn hidden_dim(&self) -> usize {
        self.fc.b.len()
    }

    fn embedding(&self, id: usize) -> &[f64] {
        if id < self.words.rows {
            self.words.row(id)
        } else {
            self.specials.row(id - self.words.rows)
        }
    }

    pub fn encode_with_cache(&self, ids: &[usize]) -> Result<EncodeCache, EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let xs: Vec<Vec<f64>> = ids.iter().map(|&i| self.embedding(i).to_vec()).collect();
        let gru = self.gru.forward(xs, None);
        let h: Vec<f64> = self.fc.forward(gru.last()).into_iter().map(f64::tanh).collect();
        Ok(EncodeCache {
            ids: ids.to_vec(),
            gru,
            h,
        })
    }

    /// `h = E(f)` for a tokenized sentence.
    pub fn encode(&self, ids: &[usize]) -> Result<Vec<f64>, EncoderError> {
        Ok(self.encode_with_cache(ids)?.h)
    }

    /// Accumulates parameter gradients for `dL/dh` into `grad`.
    pub fn backward_h(&self, cache: &EncodeCache, dh: &[f64], grad: &mut EncoderModel) {
        let da: Vec<f64> = dh.iter().zip(&cache.h).map(|(g, h)| g * (1.0 - h * h)).collect();
        let mut dlast = vec![0.0; self.gru.hidden];
        self.fc.backward(cache.gru.last(), &da, &mut grad.fc, &mut dlast);
        let steps = cache.ids.len();
        let mut dhs = vec![vec![0.0; self.gru.hidden]; steps];
        dhs[steps - 1] = dlast;
        let (dxs, _) = self.gru.backward(&cache.gru, &dhs, &mut grad.gru);
        for (&id, dx) in cache.ids.iter().zip(&dxs) {
            if id < self.words.rows {
                axpy(1.0, dx, grad.words.row_mut(id));
            } else {
                axpy(1.0, dx, grad.specials.row_mut(id - self.words.rows));
            }
        }
    }

    /// `(μ, ln σ²)` for a hidden state.
    pub fn gaussian(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.mu.forward(h), self.logvar.forward(h))
    }

    /// `z = softmax(μ + σ ⊙ ε)` for a given noise vector.
    pub fn reparameterize_with(&self, h: &[f64], eps: &[f64]) -> Vec<f64> {
        let (mu, lv) = self.gaussian(h);
        let u: Vec<f64> = mu
            .iter()
            .zip(&lv)
            .zip(eps)
            .map(|((m, l), e)| m + (0.5 * l).exp() * e)
            .collect();
        softmax(&u)
    }

    pub fn reparameterize(&self, h: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let eps = standard_normal(self.num_topics(), rng);
        self.reparameterize_with(h, &eps)
    }

    /// Column-softmax of `V Tᵀ`: column `k` is topic `k`'s word distribution.
    pub fn topic_word_matrix(&self) -> Mat {
        let (nw, k) = (self.words.rows, self.topics.rows);
        let mut beta = Mat::zeros(nw, k);
        for t in 0..k {
            let col: Vec<f64> = (0..nw).map(|w| dot(self.words.row(w), self.topics.row(t))).collect();
            let p = softmax(&col);
            for w in 0..nw {
                beta.data[w * k + t] = p[w];
            }
        }
        beta
    }

    /// `b̂ = softmax_col(V Tᵀ) z`
    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.topic_word_matrix().matvec(z)
    }

    /// `P(w) = softmax(V Tᵀ x)` for a topic-space vector `x`.
    pub fn topic_word_scores(&self, x: &[f64]) -> WordScores {
        WordScores::from_logits(&self.word_logits(x))
    }

    pub fn word_logits(&self, x: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.words.cols];
        self.topics.matvec_t_add(x, &mut q);
        self.words.matvec(&q)
    }

    /// Backward through `logits = V (Tᵀ x)` given `dlogits`; returns `dx`.
    pub fn word_logits_backward(&self, x: &[f64], dlogits: &[f64], grad: &mut EncoderModel) -> Vec<f64> {
        let mut q = vec![0.0; self.words.cols];
        self.topics.matvec_t_add(x, &mut q);
        grad.words.outer_add(dlogits, &q);
        let mut dq = vec![0.0; self.words.cols];
        self.words.matvec_t_add(dlogits, &mut dq);
        grad.topics.outer_add(x, &dq);
        self.topics.matvec(&dq)
    }

    /// Loss of one sentence under fixed noise; also accumulates gradients
    /// (unscaled) into `grad` when given. `beta` must be this model's
    /// `topic_word_matrix()`; `dbeta` collects the decoder gradient so it can
    /// be pushed through the column softmax once per batch.
    fn sample_terms(
        &self,
        h: &[f64],
        bow: &[f64],
        eps: &[f64],
        beta: &Mat,
        recon_scale: f64,
        kl_weight: f64,
        back: Option<(&mut Mat, &mut Vec<f64>, &mut Vec<f64>)>,
    ) -> SampleLoss {
        let (mu, lv) = self.gaussian(h);
        let sd: Vec<f64> = lv.iter().map(|l| (0.5 * l).exp()).collect();
        let u: Vec<f64> = (0..mu.len()).map(|k| mu[k] + sd[k] * eps[k]).collect();
        let z = softmax(&u);
        let recon_bow = beta.matvec(&z);
        let loss = SampleLoss {
            recon: recon_scale * reconstruction_loss(bow, &recon_bow),
            kl: kl_standard_normal(&mu, &lv),
        };
        if let Some((dbeta, dmu, dlv)) = back {
            let dr: Vec<f64> = bow
                .iter()
                .zip(&recon_bow)
                .map(|(b, r)| if *b > 0.0 { -recon_scale * b / r } else { 0.0 })
                .collect();
            let mut dz = vec![0.0; z.len()];
            beta.matvec_t_add(&dr, &mut dz);
            dbeta.outer_add(&dr, &z);
            let du = softmax_backward(&z, &dz);
            for k in 0..mu.len() {
                dmu[k] += du[k] + kl_weight * mu[k];
                dlv[k] += du[k] * eps[k] * 0.5 * sd[k] + kl_weight * 0.5 * (lv[k].exp() - 1.0);
            }
        }
        loss
    }

    /// Mean loss and gradient over a batch with fixed noise (one noise
    /// vector per sentence). Sentences with identical ids share one encoder
    /// pass; the result equals processing them one by one.
    pub fn batch_loss_and_grad(&self, batch: &[(&Encoded, Vec<f64>)], scale: ReconScale, grad: &mut EncoderModel) -> f64 {
        self.weighted_loss_and_grad(batch, scale, 1.0, grad)
    }

    /// As [`Self::batch_loss_and_grad`] with the KL gradient scaled by
    /// `kl_weight`; the returned loss is unweighted.
    pub fn weighted_loss_and_grad(
        &self,
        batch: &[(&Encoded, Vec<f64>)],
        scale: ReconScale,
        kl_weight: f64,
        grad: &mut EncoderModel,
    ) -> f64 {
        let beta = self.topic_word_matrix();
        let mut dbeta = Mat::zeros(beta.rows, beta.cols);
        let k = self.num_topics();
        let mut total = 0.0;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by(|&a, &b| batch[a].0.ids.cmp(&batch[b].0.ids));
        let mut start = 0;
        while start < order.len() {
            let ids = &batch[order[start]].0.ids;
            let mut end = start + 1;
            while end < order.len() && &batch[order[end]].0.ids == ids {
                end += 1;
            }
            let cache = self.encode_with_cache(ids).expect("batch sentences are nonempty");
            let mut dmu = vec![0.0; k];
            let mut dlv = vec![0.0; k];
            for &i in &order[start..end] {
                let (enc, eps) = &batch[i];
                total += self
                    .sample_terms(
                        &cache.h,
                        &enc.bow,
                        eps,
                        &beta,
                        scale.factor(enc, self.vocab.len()),
                        kl_weight,
                        Some((&mut dbeta, &mut dmu, &mut dlv)),
                    )
                    .total();
            }
            let mut dh = vec![0.0; cache.h.len()];
            self.mu.backward(&cache.h, &dmu, &mut grad.mu, &mut dh);
            self.logvar.backward(&cache.h, &dlv, &mut grad.logvar, &mut dh);
            self.backward_h(&cache, &dh, grad);
            start = end;
        }
        // column softmax backward, then S = V Tᵀ
        let (nw, nk) = (beta.rows, beta.cols);
        for t in 0..nk {
            let col: Vec<f64> = (0..nw).map(|w| beta.get(w, t)).collect();
            let dcol: Vec<f64> = (0..nw).map(|w| dbeta.get(w, t)).collect();
            let ds = softmax_backward(&col, &dcol);
            for (w, &g) in ds.iter().enumerate() {
                if g != 0.0 {
                    axpy(g, self.topics.row(t), grad.words.row_mut(w));
                    axpy(g, self.words.row(w), grad.topics.row_mut(t));
                }
            }
        }
        let n = batch.len() as f64;
        grad.scale_all(1.0 / n);
        total / n
    }

    /// Mean loss over a batch with fixed noise, no gradients.
    pub fn batch_loss(&self, batch: &[(&Encoded, Vec<f64>)], scale: ReconScale) -> f64 {
        let beta = self.topic_word_matrix();
        let total: f64 = batch
            .iter()
            .map(|(enc, eps)| {
                let h = self.encode(&enc.ids).expect("nonempty");
                self.sample_terms(&h, &enc.bow, eps, &beta, scale.factor(enc, self.vocab.len()), 1.0, None)
                    .total()
            })
            .sum();
        total / batch.len() as f64
    }

    pub fn save(&self, config: &EncoderConfig, path: &Path) -> Result<(), EncoderError> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: config.clone(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&ck).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(EncoderModel, EncoderConfig), EncoderError> {
        let text = std::fs::read_to_string(path)?;
        let mut ck: Checkpoint = serde_json::from_str(&text).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(EncoderError::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        ck.model.vocab.reindex();
        Ok((ck.model, ck.config))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: EncoderConfig,
    model: EncoderModel,
}

pub fn standard_normal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub sentences: usize,
    pub skipped_empty: usize,
}

/// Trains the VAE on the given sentences (empty bags are skipped).
pub fn train_vae(
    vocab: Vocabulary,
    sentences: &[Encoded],
    config: &EncoderConfig,
    seed: u64,
) -> Result<(EncoderModel, TrainReport), EncoderError> {
    let usable: Vec<&Encoded> = sentences
        .iter()
        .filter(|e| !e.ids.is_empty() && e.bow.iter().any(|&x| x > 0.0))
        .collect();
    if usable.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    let mut init_rng = seed::rng(seed, 0);
    let mut model = EncoderModel::new(vocab, config, &mut init_rng);
    let mut rng = seed::rng(seed, 1);
    let mut opt = Optimizer::new(config.optimizer, config.lr);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<(&Encoded, Vec<f64>)> = chunk
                .iter()
                .map(|&i| (usable[i], standard_normal(model.num_topics(), &mut rng)))
                .collect();
            let mut grad = model.zero_like();
            let kl_weight = if config.kl_warmup == 0 {
                1.0
            } else {
                (step as f64 / config.kl_warmup as f64).min(1.0)
            };
            step += 1;
            let loss = model.weighted_loss_and_grad(&batch, config.recon_scale, kl_weight, &mut grad);
            if !loss.is_finite() || !grad.all_finite() {
                return Err(EncoderError::Diverged {
                    epoch: epoch + 1,
                    batch: bi,
                    loss,
                });
            }
            sum += loss * chunk.len() as f64;
            opt.step(model.tensors_mut(), grad.tensors());
        }
        let mean = sum / usable.len() as f64;
        log::info!("vae epoch {}: mean loss {mean:.5}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok((
        model,
        TrainReport {
            epoch_losses,
            sentences: usable.len(),
            skipped_empty: sentences.len() - usable.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TypeName;
    use crate::nn::gradcheck;
    use rand::SeedableRng;

    fn toy_vocab() -> Vocabulary {
        Vocabulary::new(["a", "b", "c", "d", "e"].map(String::from), [TypeName::new("Block")])
    }

    fn toy_config() -> EncoderConfig {
        EncoderConfig {
            embed_dim: 3,
            hidden_dim: 4,
            topics: 2,
            ..EncoderConfig::default()
        }
    }

    fn toy_model() -> EncoderModel {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        EncoderModel::new(toy_vocab(), &toy_config(), &mut rng)
    }

    #[test]
    fn kl_zero_at_standard_normal() {
        assert_eq!(kl_standard_normal(&[0.0; 8], &[0.0; 8]), 0.0);
        assert!(kl_standard_normal(&[0.3, -1.0], &[0.2, -0.5]) > 0.0);
    }

    #[test]
    fn encode_is_deterministic_and_fixed_width() {
        let m = toy_model();
        let a = m.encode(&[0, 5, 2]).unwrap();
        let b = m.encode(&[0, 5, 2]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(m.encode(&[1]).unwrap().len(), 4);
        assert!(matches!(m.encode(&[]), Err(EncoderError::EmptyInput)));
    }

    #[test]
    fn word_order_matters() {
        let m = toy_model();
        assert_ne!(m.encode(&[0, 1, 2]).unwrap(), m.encode(&[2, 1, 0]).unwrap());
    }

    #[test]
    fn degenerate_noise_gives_softmax_of_mean() {
        let m = toy_model();
        let h = m.encode(&[0, 1]).unwrap();
        let (mu, _) = m.gaussian(&h);
        let z = m.reparameterize_with(&h, &[0.0, 0.0]);
        assert_eq!(z, softmax(&mu));
    }

    #[test]
    fn decode_basis_and_uniform() {
        let m = toy_model();
        let beta = m.topic_word_matrix();
        let e0 = m.decode(&[1.0, 0.0]);
        for w in 0..5 {
            assert!((e0[w] - beta.get(w, 0)).abs() < 1e-15);
        }
        let u = m.decode(&[0.5, 0.5]);
        for w in 0..5 {
            assert!((u[w] - 0.5 * (beta.get(w, 0) + beta.get(w, 1))).abs() < 1e-15);
        }
    }

    #[test]
    fn scores_ranking_matches_argmax_and_shift() {
        let m = toy_model();
        let s = m.topic_word_scores(&[1.0, 0.0]);
        let logits = m.word_logits(&[1.0, 0.0]);
        let argmax = (0..5).max_by(|&a, &b| logits[a].partial_cmp(&logits[b]).unwrap()).unwrap();
        assert_eq!(s.ranking[0], argmax);
        let shifted: Vec<f64> = logits.iter().map(|x| x + 3.0).collect();
        assert_eq!(WordScores::from_logits(&shifted).ranking, s.ranking);
    }

    #[test]
    fn vae_gradients_match_finite_differences() {
        let m = toy_model();
        let v = toy_vocab();
        let s1 = v.encode(&[
            crate::text::RawToken::Word("a".into()),
            crate::text::RawToken::Word("c".into()),
            crate::text::RawToken::Word("c".into()),
        ]);
        let mut s2 = s1.clone();
        s2.ids = vec![5, 1, 4];
        s2.bow = vec![0.0, 0.5, 0.0, 0.0, 0.5];
        let eps1 = vec![0.3, -1.1];
        let eps2 = vec![-0.4, 0.8];
        let eps3 = vec![1.2, 0.1];
        let batch = vec![(&s1, eps1), (&s2, eps2), (&s1, eps3)];
        for scale in [ReconScale::Tokens, ReconScale::Unit] {
            let mut g = m.zero_like();
            m.batch_loss_and_grad(&batch, scale, &mut g);
            let worst = gradcheck::check(&m, &g, |p| p.batch_loss(&batch, scale), 1e-4, 1e-9).worst;
            assert!(worst < 1e-4);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = toy_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        m.save(&toy_config(), &path).unwrap();
        let (back, cfg) = EncoderModel::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(cfg, toy_config());
        assert_eq!(back.vocab.word_id("c"), Some(2));
    }
}
