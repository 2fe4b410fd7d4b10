//! Runs the full learning loop on a bundled domain and prints the metrics of
//! every iteration.
//!
//! cargo run --release --example run_em -- blocks 42 10 [out-dir] [--no-em] [--no-init] [--config=run.toml]

use std::path::PathBuf;

use textstrips::config::load_config;
use textstrips::corpus::{build_corpus, bundled};
use textstrips::emloop::{run, ExtractionSource, RunConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (flags, args): (Vec<String>, Vec<String>) = std::env::args().skip(1).partition(|a| a.starts_with("--"));
    let mut args = args.into_iter();
    let domain = args.next().unwrap_or_else(|| "blocks".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    let iterations: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let out = args.next().map(PathBuf::from);
    let bundle = bundled::by_name(&domain).ok_or_else(|| anyhow::anyhow!("unknown domain {domain}"))?;
    let file = flags.iter().find_map(|f| f.strip_prefix("--config=")).map(PathBuf::from);
    let overrides = vec![
        ("seed".to_string(), toml::Value::Integer(seed as i64)),
        ("iterations".to_string(), toml::Value::Integer(iterations as i64)),
        ("skip_em".to_string(), toml::Value::Boolean(flags.iter().any(|f| f == "--no-em"))),
        ("skip_initializer".to_string(), toml::Value::Boolean(flags.iter().any(|f| f == "--no-init"))),
    ];
    let resolved = load_config(file.as_deref(), &overrides)?;
    let config: RunConfig = resolved.config.clone();
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), resolved.echo())?;
    }
    let corpus = build_corpus(&bundle, seed, &config.corpus)?;
    let start = std::time::Instant::now();
    let outcome = run(&corpus, &bundle.domain.headers(), &config, out.as_deref(), ExtractionSource::Learned)?;
    println!("finished in {:.1?}: {}", start.elapsed(), outcome.stop_reason);
    println!("iter  R_e     R_r     R_i     changed");
    for h in &outcome.history {
        println!(
            "{:>4}  {:.4}  {:.4}  {:.4}  {}",
            h.iteration, h.metrics.r_e.value, h.metrics.r_r.value, h.metrics.r_i.value, h.changed_sentences
        );
    }
    Ok(())
}
