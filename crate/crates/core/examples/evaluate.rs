//! Scores the ground-truth domain on gold traces, then the same domain with
//! one add effect removed.
//!
//! cargo run --release --example evaluate -- blocks 5

use textstrips::corpus::{build_corpus, bundled, CorpusConfig};
use textstrips::emloop::evaluate;
use textstrips::initializer::gold_extraction;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let domain = args.next().unwrap_or_else(|| "blocks".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let bundle = bundled::by_name(&domain).ok_or_else(|| anyhow::anyhow!("unknown domain {domain}"))?;
    let corpus = build_corpus(&bundle, seed, &CorpusConfig::default())?;
    let gold = gold_extraction(&corpus);
    println!("ground truth\n{}", evaluate(&bundle.domain, &corpus, &gold, true)?);

    let mut damaged = bundle.domain.clone();
    let a = damaged
        .actions
        .iter_mut()
        .find(|a| !a.add.is_empty())
        .ok_or_else(|| anyhow::anyhow!("no action has add effects"))?;
    let dropped = a.add.iter().next().cloned().expect("non-empty");
    a.add.remove(&dropped);
    println!("{} without add effect {}{:?}", a.name, dropped.predicate, dropped.args);
    println!("{}", evaluate(&damaged, &corpus, &gold, true)?);
    Ok(())
}
