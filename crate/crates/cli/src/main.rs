use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use repro_audit::pipeline::{AuditOutcome, BackendKind, Pipeline, PipelineConfig, PipelineError, Stage, StageSummary};

#[derive(Parser)]
#[command(name = "repro-audit", version, about = "Audit code sharing and repository quality in a literature cohort")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    citations_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Script file for the scripted backend.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Restrict network access to these hosts (repeatable).
    #[arg(long = "allow-host", global = true)]
    allow_hosts: Vec<String>,
    #[arg(long, global = true)]
    min_articles_per_country: Option<usize>,
    #[arg(long, global = true)]
    min_articles_per_journal: Option<usize>,
    #[arg(long, global = true)]
    min_repos_per_journal: Option<usize>,
    /// Recompute evaluate and report outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Print the summary as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate citation lists and retrieve full texts.
    Ingest,
    /// Screen retrieved articles.
    Screen,
    /// Classify and canonicalize repository links.
    Resolve,
    /// Download repository snapshots.
    Fetch,
    /// Flatten snapshots into budgeted documents.
    Compile,
    /// Characterize compiled repositories.
    Assess,
    /// Score predictions against annotation files.
    Evaluate,
    /// Write cohort tables and the plot manifest.
    Report,
    /// Run every stage enabled in the configuration.
    Run,
    /// Resolve, fetch, compile and assess one repository URL.
    Audit { url: String },
    /// Check a configuration file and print it with defaults filled in.
    ValidateConfig,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "none" => Ok(BackendKind::None),
        "keyword" => Ok(BackendKind::Keyword),
        "scripted" => Ok(BackendKind::Scripted),
        "chat" => Ok(BackendKind::Chat),
        _ => Err(format!("unknown backend `{s}` (none, keyword, scripted, chat)")),
    }
}

fn load_config(g: &Global) -> anyhow::Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut c = PipelineConfig::from_toml_str(&text)?;
            c.rebase(path.parent().unwrap_or(std::path::Path::new(".")));
            c
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = &g.out_dir {
        c.out_dir = v.clone();
    }
    if let Some(v) = &g.cache_dir {
        c.cache_dir = v.clone();
    }
    if let Some(v) = &g.citations_dir {
        c.citations_dir = Some(v.clone());
    }
    if let Some(v) = g.workers {
        c.max_workers = v;
    }
    if let Some(v) = g.backend {
        c.backend.kind = v;
    }
    if let Some(v) = &g.script {
        c.backend.script = Some(v.clone());
    }
    if !g.allow_hosts.is_empty() {
        c.http.allowed_hosts = Some(g.allow_hosts.clone());
    }
    if let Some(v) = g.min_articles_per_country {
        c.thresholds.min_articles_per_country = v;
    }
    if let Some(v) = g.min_articles_per_journal {
        c.thresholds.min_articles_per_journal = v;
    }
    if let Some(v) = g.min_repos_per_journal {
        c.thresholds.min_repos_per_journal = v;
    }
    Ok(c)
}

fn print_summary(s: &StageSummary) {
    let stage = s.stage.map(Stage::as_str).unwrap_or("?");
    println!(
        "{stage}: processed={} skipped={} failed={} deferred={}",
        s.processed, s.skipped, s.failed, s.deferred
    );
    for (k, v) in &s.outcomes {
        println!("  {k}: {v}");
    }
    for n in &s.notes {
        println!("  note: {n}");
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let (Command::ValidateConfig, Some(path)) = (&cli.command, &cli.global.config) {
        repro_audit::pipeline::validate_config(path)?;
    }
    let config = load_config(&cli.global)?;
    if let Command::ValidateConfig = cli.command {
        config.validate()?;
        if cli.global.json {
            println!("{}", serde_json::to_string_pretty(&config)?);
        } else {
            print!("{}", config.to_toml_string());
        }
        return Ok(true);
    }
    let pipeline = Pipeline::new(config)?.with_force(cli.global.force);
    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Screen => Some(Stage::Screen),
        Command::Resolve => Some(Stage::Resolve),
        Command::Fetch => Some(Stage::Fetch),
        Command::Compile => Some(Stage::Compile),
        Command::Assess => Some(Stage::Assess),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::Report => Some(Stage::Report),
        Command::Run | Command::Audit { .. } | Command::ValidateConfig => None,
    };
    let summaries = match (&cli.command, stage) {
        (_, Some(st)) => vec![pipeline.run_stage(st)?],
        (Command::Run, None) => pipeline.run_all()?,
        (Command::Audit { url }, None) => {
            let report = pipeline.audit(url)?;
            if cli.global.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{url}: {:?}", report.outcome);
                if let Some(d) = &report.detail {
                    println!("  detail: {d}");
                }
                if let Some(a) = &report.assessment {
                    println!("{}", serde_json::to_string_pretty(a)?);
                }
            }
            return Ok(report.outcome == AuditOutcome::Complete);
        }
        _ => unreachable!("handled above"),
    };
    if cli.global.json {
        println!("{}", serde_json::to_string_pretty(&summaries)?);
    } else {
        summaries.iter().for_each(print_summary);
    }
    Ok(summaries.iter().all(|s| s.hard_failures() == 0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => tracing_subscriber::filter::LevelFilter::WARN,
        1 => tracing_subscriber::filter::LevelFilter::INFO,
        _ => tracing_subscriber::filter::LevelFilter::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let config_error = e
                .downcast_ref::<PipelineError>()
                .is_some_and(|p| matches!(p, PipelineError::Config(_)))
                || e.downcast_ref::<repro_audit::pipeline::ConfigError>().is_some();
            eprintln!("error: {e:#}");
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
