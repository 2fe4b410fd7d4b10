//! Command-line entry point: `gen`, `run`, `eval` and `inspect`.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when the command
//! itself fails. Output directories default to `$TEXTSTRIPS_OUT` (or
//! `runs/`) when `--out` is not given.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::config::load_config;
use crate::corpus::{build_corpus, bundled, Corpus};
use crate::emloop::{evaluate, resume, run, ExtractionSource, RunConfig};
use crate::initializer::{ExtractionResult, PropositionRegistry};
use crate::pddl::{emit_domain, parse_domain};

pub const OUT_ENV: &str = "TEXTSTRIPS_OUT";
const CORPUS_FILE: &str = "corpus.jsonl";
const MANIFEST_FILE: &str = "manifest.json";
const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(name = "textstrips", version, about = "Learn STRIPS action models from natural-language traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a corpus of tasks, plans and observation texts.
    Gen(CommonFlags),
    /// Run the learning loop and write a run directory.
    Run(RunFlags),
    /// Recompute the metrics of a run directory.
    Eval(EvalFlags),
    /// Pretty-print a run directory, domain, registry or metrics file.
    Inspect(InspectFlags),
}

#[derive(Debug, Args)]
struct CommonFlags {
    /// Bundled domain: blocks, minecraft or baking.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunFlags {
    #[command(flatten)]
    common: CommonFlags,
    #[arg(long)]
    iterations: Option<usize>,
    /// Learn once from the initial extraction.
    #[arg(long)]
    no_em: bool,
    /// Start from an untrained extractor instead of the initializer.
    #[arg(long)]
    no_init: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Use a corpus file written by `gen` instead of generating one.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Continue from the last checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct EvalFlags {
    /// Run directory.
    dir: PathBuf,
    /// Corpus file; defaults to the one stored in the run directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Iteration to score; defaults to the last one.
    #[arg(long)]
    iteration: Option<usize>,
    /// Credit add effects that reach the goal.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    goal_credit: bool,
}

#[derive(Debug, Args)]
struct InspectFlags {
    path: PathBuf,
}

/// Written next to every corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub domain: String,
    pub seed: u64,
    pub train: usize,
    pub test: usize,
    pub records: usize,
    pub corpus: String,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Manifest> {
        let p = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", p.display()))
    }
}

/// `$TEXTSTRIPS_OUT`, else `runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn overrides(common: &CommonFlags) -> Vec<(String, Value)> {
    let mut v = Vec::new();
    if let Some(s) = common.seed {
        v.push(("seed".to_string(), Value::Integer(s as i64)));
    }
    if let Some(n) = common.train {
        v.push(("corpus.train".to_string(), Value::Integer(n as i64)));
    }
    if let Some(n) = common.test {
        v.push(("corpus.test".to_string(), Value::Integer(n as i64)));
    }
    v
}

fn domain_name(flag: &Option<String>) -> anyhow::Result<String> {
    let name = flag.clone().unwrap_or_else(|| "blocks".to_string());
    if bundled::by_name(&name).is_none() {
        bail!("unknown domain `{name}` (expected one of {})", bundled::NAMES.join(", "));
    }
    Ok(name)
}

fn read_corpus(path: &Path, domain: &str) -> anyhow::Result<Corpus> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Corpus::read_jsonl(domain, BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_corpus(dir: &Path, corpus: &Corpus, seed: u64) -> anyhow::Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(CORPUS_FILE);
    fs::write(&p, corpus.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    let m = Manifest {
        domain: corpus.domain.clone(),
        seed,
        train: corpus.train().len(),
        test: corpus.test().len(),
        records: corpus.records.len(),
        corpus: CORPUS_FILE.to_string(),
    };
    m.save(dir)?;
    Ok(m)
}

fn gen(flags: CommonFlags) -> anyhow::Result<()> {
    let name = domain_name(&flags.domain)?;
    let bundle = bundled::by_name(&name).expect("checked");
    let config = load_config(flags.config.as_deref(), &overrides(&flags))?.config;
    let dir = flags
        .out
        .clone()
        .unwrap_or_else(|| output_root().join(format!("corpus-{name}-seed{}", config.seed)));
    let corpus = build_corpus(&bundle, config.seed, &config.corpus)?;
    let m = write_corpus(&dir, &corpus, config.seed)?;
    let p = dir.join("domain.pddl");
    fs::write(&p, emit_domain(&bundle.domain)).with_context(|| format!("writing {}", p.display()))?;
    println!("{} records ({} train, {} test) in {}", m.records, m.train, m.test, dir.display());
    Ok(())
}

fn run_cmd(flags: RunFlags) -> anyhow::Result<()> {
    let name = domain_name(&flags.common.domain)?;
    let bundle = bundled::by_name(&name).expect("checked");
    let mut ov = overrides(&flags.common);
    if let Some(n) = flags.iterations {
        ov.push(("iterations".to_string(), Value::Integer(n as i64)));
    }
    if flags.no_em {
        ov.push(("skip_em".to_string(), Value::Boolean(true)));
    }
    if flags.no_init {
        ov.push(("skip_initializer".to_string(), Value::Boolean(true)));
    }
    if let Some(n) = flags.threads {
        ov.push(("threads".to_string(), Value::Integer(n as i64)));
    }
    let resolved = load_config(flags.common.config.as_deref(), &ov)?;
    let config: &RunConfig = &resolved.config;
    let dir = flags.common.out.clone().unwrap_or_else(|| {
        let mut tag = format!("{name}-seed{}", config.seed);
        if config.skip_em {
            tag.push_str("-no-em");
        }
        if config.skip_initializer {
            tag.push_str("-no-init");
        }
        output_root().join(tag)
    });
    let corpus = match &flags.corpus {
        Some(p) => read_corpus(p, &name)?,
        None => build_corpus(&bundle, config.seed, &config.corpus)?,
    };
    write_corpus(&dir, &corpus, config.seed)?;
    let p = dir.join(CONFIG_FILE);
    fs::write(&p, resolved.echo()).with_context(|| format!("writing {}", p.display()))?;
    let headers = bundle.domain.headers();
    let outcome = if flags.resume {
        resume(&corpus, &headers, config, &dir, ExtractionSource::Learned)?
    } else {
        run(&corpus, &headers, config, Some(&dir), ExtractionSource::Learned)?
    };
    println!("{}", outcome.stop_reason);
    println!("iter  R_e     R_r     R_i     changed");
    for h in &outcome.history {
        println!(
            "{:>4}  {:.4}  {:.4}  {:.4}  {}",
            h.iteration, h.metrics.r_e.value, h.metrics.r_r.value, h.metrics.r_i.value, h.changed_sentences
        );
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

fn iteration_dirs(dir: &Path) -> anyhow::Result<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let e = e?;
        if let Some(k) = e.file_name().to_str().and_then(|n| n.strip_prefix("iter_")).and_then(|n| n.parse().ok()) {
            if e.path().join("extraction.jsonl").exists() {
                found.push((k, e.path()));
            }
        }
    }
    found.sort();
    Ok(found)
}

fn load_extraction(dir: &Path) -> anyhow::Result<ExtractionResult> {
    let registry = PropositionRegistry::load(&dir.join("registry.json"))?;
    let p = dir.join("extraction.jsonl");
    let f = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
    Ok(ExtractionResult::read_jsonl(BufReader::new(f), registry)?)
}

fn load_domain(path: &Path) -> anyhow::Result<crate::Domain> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_domain(&text).with_context(|| format!("parsing {}", path.display()))
}

fn eval_cmd(flags: EvalFlags) -> anyhow::Result<()> {
    let manifest = Manifest::load(&flags.dir)?;
    let corpus_path = flags.corpus.clone().unwrap_or_else(|| flags.dir.join(&manifest.corpus));
    let corpus = read_corpus(&corpus_path, &manifest.domain)?;
    let iters = iteration_dirs(&flags.dir)?;
    let (k, it) = match flags.iteration {
        Some(k) => iters
            .into_iter()
            .find(|(i, _)| *i == k)
            .ok_or_else(|| anyhow!("no iteration {k} in {}", flags.dir.display()))?,
        None => iters
            .into_iter()
            .last()
            .ok_or_else(|| anyhow!("no iterations in {}", flags.dir.display()))?,
    };
    let domain = load_domain(&it.join("domain.pddl"))?;
    let extraction = load_extraction(&it)?;
    let m = evaluate(&domain, &corpus, &extraction, flags.goal_credit)?;
    println!("iteration {k} of {}", flags.dir.display());
    print!("{m}");
    Ok(())
}

fn print_metrics(text: &str) -> anyhow::Result<()> {
    let doc: serde_json::Value = serde_json::from_str(text)?;
    let f = |v: &serde_json::Value| v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!("R_e {}  R_r {}  R_i {}", f(&doc["R_e"]), f(&doc["R_r"]), f(&doc["R_i"]));
    if let Some(reason) = doc["stop_reason"].as_str() {
        println!("stopped: {reason}");
    }
    if let Some(h) = doc["history"].as_array() {
        println!("iter  R_e     R_r     R_i     changed");
        for r in h {
            println!(
                "{:>4}  {}  {}  {}  {}",
                r["iteration"].as_u64().unwrap_or_default(),
                f(&r["R_e"]),
                f(&r["R_r"]),
                f(&r["R_i"]),
                r["changed_sentences"].as_u64().unwrap_or_default()
            );
        }
    }
    Ok(())
}

fn print_registry(path: &Path) -> anyhow::Result<()> {
    let reg = PropositionRegistry::load(path)?;
    println!("{} topical propositions", reg.len());
    for (i, t) in reg.entries().iter().enumerate() {
        println!("{i:>4}  {t}");
    }
    Ok(())
}

fn inspect_cmd(flags: InspectFlags) -> anyhow::Result<()> {
    let p = &flags.path;
    if p.is_dir() {
        if let Ok(m) = Manifest::load(p) {
            println!("{} corpus, seed {}: {} train, {} test", m.domain, m.seed, m.train, m.test);
        }
        let metrics = p.join("metrics.json");
        if metrics.exists() {
            print_metrics(&fs::read_to_string(&metrics)?)?;
        }
        if let Some((k, it)) = iteration_dirs(p)?.pop() {
            println!("\nregistry after iteration {k}:");
            print_registry(&it.join("registry.json"))?;
        }
        for d in [p.join("final/domain.pddl"), p.join("domain.pddl")] {
            if d.exists() {
                println!("\n{}", emit_domain(&load_domain(&d)?));
                break;
            }
        }
        return Ok(());
    }
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    match p.extension().and_then(|e| e.to_str()) {
        Some("pddl") => print!("{}", emit_domain(&load_domain(p)?)),
        Some("json") if name.starts_with("registry") => print_registry(p)?,
        Some("json") => print_metrics(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        _ => bail!("cannot inspect {}", p.display()),
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the command; returns the exit
/// status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match cli.command {
        Command::Gen(f) => gen(f),
        Command::Run(f) => run_cmd(f),
        Command::Eval(f) => eval_cmd(f),
        Command::Inspect(f) => inspect_cmd(f),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
