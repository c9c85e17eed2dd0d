//! Compare two backends on the same languages: a strongly biased synthetic
//! model against an unbiased one.

use genderprobe::config::ExperimentConfig;
use genderprobe::experiments::{format_report, run_model_comparison};
use genderprobe::gateway::BackendSpec;
use genderprobe::synthetic::{LanguagePlan, SyntheticPlan};
use genderprobe::LanguageCode;

fn plan(bias: f64) -> SyntheticPlan {
    let languages = [LanguageCode::Es, LanguageCode::It, LanguageCode::Fr]
        .into_iter()
        .map(|code| LanguagePlan {
            n_nouns: 80,
            bias_strength: bias,
            ..LanguagePlan::new(code)
        })
        .collect();
    SyntheticPlan::new(languages)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let biased = dir.path().join("biased.toml");
    let neutral = dir.path().join("neutral.toml");
    std::fs::write(&biased, plan(1.0).to_toml()?)?;
    std::fs::write(&neutral, plan(0.0).to_toml()?)?;

    let mut config = ExperimentConfig::new(
        vec![LanguageCode::Es, LanguageCode::It, LanguageCode::Fr],
        BackendSpec::synthetic("biased", &biased, 5),
    );
    config
        .comparison_backends
        .push(BackendSpec::synthetic("neutral", &neutral, 5));
    config.n_samples = 10;
    config.min_support = 5;
    config.transcripts_dir = dir.path().join("transcripts");
    config.out_dir = dir.path().join("out");
    config.train.epochs = 60;

    print!("{}", format_report(&run_model_comparison(&config)?));
    Ok(())
}
