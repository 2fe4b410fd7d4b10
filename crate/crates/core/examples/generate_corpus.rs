//! Generates a corpus for a bundled domain and prints one task: its texts,
//! the plan found by forward search, and the gold label of every sentence.
//!
//! cargo run --release --example generate_corpus -- blocks 7 20 5

use textstrips::corpus::{build_corpus, bundled, CorpusConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let domain = args.next().unwrap_or_else(|| "blocks".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let train: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let test: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let bundle = bundled::by_name(&domain).ok_or_else(|| anyhow::anyhow!("unknown domain {domain}"))?;
    let config = CorpusConfig {
        train,
        test,
        ..Default::default()
    };
    let corpus = build_corpus(&bundle, seed, &config)?;
    let steps: usize = corpus.records.iter().map(|r| r.plan.len()).sum();
    println!("{} tasks, {steps} plan steps", corpus.records.len());
    let r = corpus.records.iter().max_by_key(|r| r.plan.len()).expect("non-empty corpus");
    println!("\ntask {} ({:?}), objects: {}", r.id, r.split, r.objects.iter().map(|o| o.name.as_str()).collect::<Vec<_>>().join(" "));
    for (i, text) in r.texts.iter().enumerate() {
        if i > 0 {
            println!("  >> {}", r.plan[i - 1]);
        }
        for (s, g) in text.iter().zip(&r.gold[i]) {
            println!("  {s:<45} {g}");
        }
    }
    println!("  goal:");
    for (s, g) in r.goal_text.iter().zip(&r.goal_gold) {
        println!("  {s:<45} {g}");
    }
    Ok(())
}
