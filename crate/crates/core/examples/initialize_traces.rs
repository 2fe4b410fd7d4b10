//! Trains the sentence VAE, labels every sentence with the initializer
//! rules, and compares the resulting clustering with the gold one.
//!
//! cargo run --release --example initialize_traces -- blocks 1

use std::collections::BTreeMap;

use textstrips::corpus::{build_corpus, bundled, CorpusConfig};
use textstrips::encoder::{train_vae, EncoderConfig};
use textstrips::eval::rand_index;
use textstrips::initializer::{gold_labels, initialize_traces};
use textstrips::text::Vocabulary;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let domain = args.next().unwrap_or_else(|| "blocks".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
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
    let (encoder, _) = train_vae(vocab, &sentences, &EncoderConfig::default(), seed)?;
    let records: Vec<_> = corpus.records.iter().collect();
    let extraction = initialize_traces(&records, &encoder, seed);
    println!("registry:");
    for t in extraction.registry.entries() {
        println!("  {t}");
    }
    let labels = extraction.labels();
    let gold = gold_labels(&corpus);
    let mut table: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (g, l) in gold.iter().zip(&labels) {
        *table.entry((g.to_string(), l.to_string())).or_default() += 1;
    }
    println!("\ngold -> assigned (sentences)");
    for ((g, l), n) in table {
        println!("  {g:<32} {l:<32} {n}");
    }
    println!("\nR_i {:.4}", rand_index(&labels, &gold)?.value);
    Ok(())
}
