//! One round of the learning loop by hand: initial traces, a domain learned
//! from them, a relabeled training set, extractor training, re-extraction.
//!
//! cargo run --release --example train_extractor -- blocks 1

use textstrips::consensus::ConsensusConfig;
use textstrips::corpus::{build_corpus, bundled, CorpusConfig};
use textstrips::emloop::learn_domain;
use textstrips::encoder::{train_vae, EncoderConfig};
use textstrips::eval::rand_index;
use textstrips::extractor::{build_dataset, train, ExtractorConfig, ExtractorModel, Joint};
use textstrips::initializer::{gold_labels, initialize_traces};
use textstrips::satlearn::SatConfig;
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
    let all: Vec<_> = corpus.records.iter().collect();
    let train_records = corpus.train();
    let gold = gold_labels(&corpus);
    let initial = initialize_traces(&all, &encoder, seed);
    println!("initial R_i {:.4}", rand_index(&initial.labels(), &gold)?.value);

    let plans = &train_records[..64.min(train_records.len())];
    let (domain, ..) = learn_domain(
        plans,
        &initial,
        &bundle.domain.headers(),
        &SatConfig::default(),
        &ConsensusConfig::default(),
        seed,
        1,
        "round-one",
    )?;
    let config = ExtractorConfig::default();
    let extractor = ExtractorModel::new(&encoder, &config, seed);
    let mut joint = Joint { encoder, extractor };
    let dataset = build_dataset(&train_records, &initial, &domain, &joint.encoder.vocab)?;
    let report = train(&mut joint, &dataset, &config, seed)?;
    println!(
        "{} examples, {} reordered, {} renamed; epoch losses {:?}",
        report.examples, report.relabeled_order, report.relabeled_predicate, report.epoch_losses
    );
    let next = joint.extract(&all);
    println!("re-extracted R_i {:.4}", rand_index(&next.labels(), &gold)?.value);
    Ok(())
}
