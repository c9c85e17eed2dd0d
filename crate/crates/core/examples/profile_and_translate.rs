//! Turn recorded completions into frequency profiles and translate them to
//! the English pivot with the offline dictionary.

use std::path::Path;

use genderprobe::config::ExperimentConfig;
use genderprobe::experiments::Pipeline;
use genderprobe::LanguageCode;

fn main() -> genderprobe::Result<()> {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/replay.toml");
    let config = ExperimentConfig::load(&config_path)?;
    let pipeline = Pipeline::new(&config, &config.backend)?;

    let lexicon = pipeline.lexicon(LanguageCode::Es)?;
    let (profiles, empty) = pipeline.recorded_profiles(&lexicon)?;
    println!("{} profiles, {empty} empty samples", profiles.len());

    let source = &profiles[0];
    println!("{} ({}):", source.noun.surface, source.noun.gender.as_str());
    for (adj, f) in source.entries.iter().take(6) {
        println!("  {adj:<24} f={f:.2}");
    }

    // Inflected synonyms collapse onto one pivot token; their frequencies add.
    let pivot = pipeline.translate(std::slice::from_ref(source))?;
    println!("after translation ({} -> {} adjectives):", source.len(), pivot[0].len());
    for (adj, f) in pivot[0].entries.iter().take(6) {
        println!("  {adj:<24} f={f:.2}");
    }
    Ok(())
}
