//! Elicit adjectives from the synthetic backend into a transcript store, then
//! run again to show that stored samples are reused.

use genderprobe::gateway::{elicit, render_prompt, transcript_file, PromptTemplate, TranscriptStore};
use genderprobe::synthetic::{LanguagePlan, SyntheticBackend, SyntheticCorpus, SyntheticPlan};
use genderprobe::LanguageCode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut es = LanguagePlan::new(LanguageCode::Es);
    es.n_nouns = 6;
    es.inflect = true;
    let corpus = SyntheticCorpus::generate(&SyntheticPlan::new(vec![es]), 1)?;
    let backend = SyntheticBackend::new(&corpus, "synthetic");

    let dir = tempfile::tempdir()?;
    let store = TranscriptStore::open(transcript_file(dir.path(), LanguageCode::Es, "synthetic"))?;
    let template = PromptTemplate::for_language(LanguageCode::Es);
    let lexicon = corpus.lexicon(LanguageCode::Es).expect("planned language");

    let noun = &lexicon.entries()[0];
    println!("prompt: {}", render_prompt(&template, noun)?);
    for c in elicit(&backend, &store, &template, noun, 5, 4)? {
        println!("  [{}] {} ({})", c.sample_index, c.raw_text, noun.gender.as_str());
    }

    let before = store.len();
    elicit(&backend, &store, &template, noun, 8, 4)?;
    println!(
        "store grew from {before} to {} records; the first 5 were reused",
        store.len()
    );
    Ok(())
}
