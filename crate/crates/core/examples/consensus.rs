//! Merges noisy copies of a domain: seven correct copies and three with
//! random membership flips are fitted by the rank-one consensus and
//! thresholded back into one domain.
//!
//! cargo run --release --example consensus -- 0.2 3

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textstrips::consensus::{conclusive, ConsensusConfig};
use textstrips::corpus::bundled;
use textstrips::initializer::PropositionRegistry;
use textstrips::pddl::emit_domain;
use textstrips::satlearn::{candidates, Slot, SLOTS};
use textstrips::{Domain, LiftedAtom};

fn corrupt(d: &Domain, registry: &PropositionRegistry, rate: f64, rng: &mut ChaCha8Rng) -> anyhow::Result<Domain> {
    let mut d = d.clone();
    let headers = d.headers();
    let cands = candidates(registry, &headers, 4)?;
    for (schema, list) in d.actions.iter_mut().zip(&cands) {
        for (t, binding) in list {
            let atom = LiftedAtom::new(registry.get(*t).predicate.clone(), binding.clone());
            for slot in SLOTS {
                if !rng.random_bool(rate) {
                    continue;
                }
                let set = match slot {
                    Slot::Pre => &mut schema.pre,
                    Slot::Add => &mut schema.add,
                    Slot::Del => &mut schema.del,
                };
                if !set.remove(&atom) {
                    set.insert(atom.clone());
                }
            }
        }
    }
    Ok(d)
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let rate: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let truth = bundled::blocks().domain;
    let registry = PropositionRegistry::from_entries(truth.predicates.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut copies = vec![truth.clone(); 7];
    for _ in 0..3 {
        copies.push(corrupt(&truth, &registry, rate, &mut rng)?);
    }
    let (merged, scores) = conclusive(&copies, &registry, &truth.headers(), &ConsensusConfig::default(), &truth.name)?;
    for s in &scores {
        let shown: Vec<String> = s
            .columns
            .iter()
            .zip(s.slot(Slot::Pre))
            .filter(|(_, &v)| v > 0.0)
            .map(|(a, v)| format!("{}{:?}={v:.2}", a.predicate, a.args))
            .collect();
        println!("{:<10} pre scores: {}", s.action, shown.join(" "));
    }
    println!("\nmerged domain equals the original: {}", merged.actions == truth.actions);
    println!("{}", emit_domain(&merged));
    Ok(())
}
