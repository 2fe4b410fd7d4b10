//! Solves random weighted MAX-SAT instances with the local-search solver and
//! compares each answer with exhaustive enumeration.
//!
//! cargo run --release --example maxsat -- 12 1

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textstrips::maxsat::{solve, Clause, Lit, MaxSatInstance, SolverConfig};

fn random_instance(n: usize, rng: &mut ChaCha8Rng) -> MaxSatInstance {
    let mut inst = MaxSatInstance::new(n);
    for _ in 0..3 * n {
        let lits: Vec<Lit> = (0..rng.random_range(1..=3))
            .map(|_| {
                let v = rng.random_range(0..n);
                if rng.random_bool(0.5) {
                    Lit::pos(v)
                } else {
                    Lit::neg(v)
                }
            })
            .collect();
        if rng.random_bool(0.2) {
            inst.push(Clause::hard(lits));
        } else {
            inst.push(Clause::soft(lits, rng.random_range(0.1..3.0)));
        }
    }
    inst
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    println!("inst  clauses  local      exhaustive");
    for i in 0..10 {
        let inst = random_instance(n, &mut rng);
        let (local, exact) = match (solve(&inst, &SolverConfig::default(), seed + i), inst.solve_exhaustive()) {
            (Ok(a), Ok(b)) => (format!("{:.4}", a.objective), format!("{:.4}", b.objective)),
            (a, b) => (format!("{:?}", a.err()), format!("{:?}", b.err())),
        };
        println!("{i:>4}  {:>7}  {local:<9}  {exact}", inst.clauses.len());
    }
    Ok(())
}
