//! Emits a bundled domain and one generated problem as PDDL, parses both
//! back and checks they are unchanged.
//!
//! cargo run --example pddl_roundtrip -- minecraft

use textstrips::corpus::{bundled, generate_problem};
use textstrips::pddl::{emit_domain, emit_problem, parse_domain, parse_problem};

fn main() -> anyhow::Result<()> {
    let domain = std::env::args().nth(1).unwrap_or_else(|| "blocks".into());
    let bundle = bundled::by_name(&domain).ok_or_else(|| anyhow::anyhow!("unknown domain {domain}"))?;
    let text = emit_domain(&bundle.domain);
    print!("{text}");
    let back = parse_domain(&text)?;
    println!("\ndomain round trip: {}", back == bundle.domain);
    let problem = generate_problem(&bundle, 0, 11, 2, 10);
    let ptext = emit_problem(&problem, &bundle.domain.name);
    print!("\n{ptext}");
    let (pback, name) = parse_problem(&ptext)?;
    println!("\nproblem round trip: {} (domain {name})", pback == problem);
    Ok(())
}
