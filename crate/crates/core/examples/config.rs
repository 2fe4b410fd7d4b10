//! Resolves a run configuration from a file and command-line overrides and
//! prints it back with the origin of every key.
//!
//! cargo run --example config -- [path/to/run.toml]

use textstrips::config::{load_config, resolve};

const SAMPLE: &str = "seed = 3
iterations = 10

[consensus]
lambda = 0.6

[extractor.optimizer]
kind = \"sgd\"
momentum = 0.9
";

fn main() -> anyhow::Result<()> {
    let flags = vec![("corpus.train".to_string(), toml::Value::Integer(200))];
    let resolved = match std::env::args().nth(1) {
        Some(p) => load_config(Some(std::path::Path::new(&p)), &flags)?,
        None => resolve(Some(SAMPLE), &flags)?,
    };
    print!("{}", resolved.echo());
    let again = resolve(Some(&resolved.echo()), &[])?;
    println!("\nre-reading the echo gives the same configuration: {}", again.config == resolved.config);
    Ok(())
}
