//! Command-line front end. Every stage reads one TOML config; flags and
//! `--set key=value` override its keys.
//!
//! Exit codes: 0 success, 1 validation or data error, 2 transport error,
//! 64 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use genderprobe::config::{parse_override, ExperimentConfig};
use genderprobe::experiments::{
    self, format_report, plan_elicitation, read_report, render_csvs, stage_profiles, stage_translate, write_report,
    ExperimentKind, Pipeline,
};
use genderprobe::fixtures::verify_fixtures;
use genderprobe::lexicon::load_lexicon;
use genderprobe::synthetic::{SyntheticCorpus, SyntheticPlan};
use genderprobe::{Error, Result};

#[derive(Parser)]
#[command(
    name = "genderprobe",
    version,
    about = "Probe grammatical-gender bias through elicited adjectives"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Comma-separated language codes.
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self
            .overrides
            .iter()
            .map(|o| parse_override(o))
            .collect::<Result<Vec<_>>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), seed.to_string()));
        }
        if let Some(n) = self.n_samples {
            overrides.push(("n_samples".into(), n.to_string()));
        }
        if let Some(langs) = &self.languages {
            let quoted: Vec<String> = langs.iter().map(|l| format!("{:?}", l.trim())).collect();
            overrides.push(("languages".into(), format!("[{}]", quoted.join(", "))));
        }
        if let Some(dir) = &self.out_dir {
            let abs = std::path::absolute(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
            overrides.push(("out_dir".into(), format!("{:?}", abs.display().to_string())));
        }
        ExperimentConfig::load_with_overrides(&self.config, &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalKind {
    Same,
    Transfer,
    Compare,
    Similarity,
}

impl From<EvalKind> for ExperimentKind {
    fn from(k: EvalKind) -> Self {
        match k {
            EvalKind::Same => ExperimentKind::SameLanguage,
            EvalKind::Transfer => ExperimentKind::Transfer,
            EvalKind::Compare => ExperimentKind::ModelComparison,
            EvalKind::Similarity => ExperimentKind::Similarity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate lexicons and print their gender counts.
    Ingest(ConfigArgs),
    /// Collect completions for every noun (resumes stored work).
    Elicit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the prompts and request count without contacting the backend.
        #[arg(long)]
        dry_run: bool,
    },
    /// Translate stored source profiles, filling the translation cache.
    Translate(ConfigArgs),
    /// Parse stored completions into frequency profiles.
    Profile(ConfigArgs),
    /// Run an evaluation and write its report.
    Eval {
        #[arg(value_enum)]
        kind: EvalKind,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic fixture tree from a plan.
    Synth {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render CSV tables from stored JSON reports.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for the CSVs; defaults to each report's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check a fixture tree for parse errors and broken cross-references.
    Verify {
        #[arg(long, default_value = "fixtures")]
        root: PathBuf,
    },
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => {
            let config = args.load()?;
            let dir = config
                .lexicon_dir
                .clone()
                .ok_or_else(|| Error::Config("ingest needs lexicon_dir".into()))?;
            for &language in &config.languages {
                let lexicon = load_lexicon(dir.join(format!("{language}.tsv")), language)?;
                let c = lexicon.counts();
                println!("{language} total={} masc={} fem={}", c.total, c.masculine, c.feminine);
                if lexicon.neuter_dropped() > 0 {
                    log::info!("{language}: dropped {} neuter rows", lexicon.neuter_dropped());
                }
            }
        }
        Command::Elicit { config, dry_run } => {
            let config = config.load()?;
            let pipeline = Pipeline::new(&config, &config.backend)?;
            let (plans, prompts) = plan_elicitation(&config, &pipeline)?;
            if dry_run {
                for prompt in &prompts {
                    println!("{prompt}\n");
                }
                for p in &plans {
                    println!(
                        "{} nouns={} stored={} planned_requests={}",
                        p.language, p.nouns, p.stored, p.pending
                    );
                }
                println!(
                    "total planned_requests={}",
                    plans.iter().map(|p| p.pending).sum::<usize>()
                );
                return Ok(());
            }
            for p in plans {
                let lexicon = pipeline.lexicon(p.language)?;
                pipeline.completions(&lexicon)?;
                println!(
                    "{} nouns={} reused={} fetched={} -> {}",
                    p.language,
                    p.nouns,
                    p.stored,
                    p.pending,
                    pipeline.transcript_path(p.language).display()
                );
            }
        }
        Command::Profile(args) => {
            let config = args.load()?;
            let pipeline = Pipeline::new(&config, &config.backend)?;
            for &language in &config.languages {
                println!("{language} -> {}", stage_profiles(&pipeline, language)?.display());
            }
        }
        Command::Translate(args) => {
            let config = args.load()?;
            let pipeline = Pipeline::new(&config, &config.backend)?;
            for &language in &config.languages {
                println!("{language} -> {}", stage_translate(&pipeline, language)?.display());
            }
        }
        Command::Eval { kind, config } => {
            let config = config.load()?;
            let report = experiments::run(kind.into(), &config)?;
            let path = write_report(&report, &config.out_dir)?;
            print!("{}", format_report(&report));
            println!("report: {}", path.display());
        }
        Command::Synth { plan, seed, out } => {
            let plan = SyntheticPlan::load(&plan)?;
            let corpus = SyntheticCorpus::generate(&plan, seed)?;
            for path in corpus.write(&out)? {
                println!("{}", path.display());
            }
        }
        Command::Report { reports, out_dir } => {
            for path in reports {
                let report = read_report(&path)?;
                let dir = out_dir
                    .clone()
                    .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
                print!("{}", format_report(&report));
                for written in render_csvs(&report, &dir)? {
                    println!("wrote {}", written.display());
                }
            }
        }
        Command::Verify { root } => {
            let report = verify_fixtures(&root);
            print!("{report}");
            if !report.is_ok() {
                return Err(Error::Validation(format!(
                    "{} fixture checks failed",
                    report.failures().count()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_transport() { 2 } else { 1 })
        }
    }
}
