//! Learns action models from gold proposition labels: one MAX-SAT learner per
//! sampled plan, merged by consensus, then scored on the test split.
//!
//! cargo run --release --example learn_domain -- blocks 42 64

use textstrips::consensus::ConsensusConfig;
use textstrips::corpus::{build_corpus, bundled, CorpusConfig};
use textstrips::emloop::{evaluate, learn_domain};
use textstrips::initializer::gold_extraction;
use textstrips::pddl::emit_domain;
use textstrips::satlearn::SatConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let domain = args.next().unwrap_or_else(|| "blocks".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    let plans: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let bundle = bundled::by_name(&domain).ok_or_else(|| anyhow::anyhow!("unknown domain {domain}"))?;
    let corpus = build_corpus(&bundle, seed, &CorpusConfig::default())?;
    let extraction = gold_extraction(&corpus);
    let train = corpus.train();
    let sampled = &train[..plans.min(train.len())];
    let start = std::time::Instant::now();
    let (learned, _, ok, failed) = learn_domain(
        sampled,
        &extraction,
        &bundle.domain.headers(),
        &SatConfig::default(),
        &ConsensusConfig::default(),
        seed,
        1,
        &format!("learned-{domain}"),
    )?;
    println!("learned from {ok} plans ({failed} failed) in {:.1?}", start.elapsed());
    println!("{}", emit_domain(&learned));
    let m = evaluate(&learned, &corpus, &extraction, true)?;
    println!("{m}");
    Ok(())
}
