//! Trains the sentence VAE on a generated corpus and prints the top words of
//! each topic.
//!
//! cargo run --example train_encoder -- blocks 42

use textstrips::corpus::{build_corpus, bundled, CorpusConfig};
use textstrips::encoder::{train_vae, EncoderConfig};
use textstrips::text::Vocabulary;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let domain = args.next().unwrap_or_else(|| "blocks".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    let bundle = bundled::by_name(&domain).ok_or_else(|| anyhow::anyhow!("unknown domain {domain}"))?;
    let corpus = build_corpus(&bundle, seed, &CorpusConfig::default())?;
    let vocab = Vocabulary::from_corpus(&corpus);
    let mut sentences = Vec::new();
    for r in corpus.train() {
        let table = r.object_table();
        for (_, _, s) in r.sentences() {
            sentences.push(vocab.encode_sentence(s, &table));
        }
    }
    println!("{} sentences, {} words", sentences.len(), vocab.len());
    let start = std::time::Instant::now();
    let (model, report) = train_vae(vocab, &sentences, &EncoderConfig::default(), seed)?;
    println!("trained in {:.1?}", start.elapsed());
    for (e, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {}: {l:.4}", e + 1);
    }
    for k in 0..model.num_topics().min(8) {
        let mut basis = vec![0.0; model.num_topics()];
        basis[k] = 1.0;
        let s = model.topic_word_scores(&basis);
        let top: Vec<&str> = s.ranking.iter().take(6).map(|&w| model.vocab.words[w].as_str()).collect();
        println!("topic {k}: {}", top.join(" "));
    }
    Ok(())
}
