//! Load a lexicon, count its genders, drop animate nouns and split 90/10.

use std::path::Path;

use genderprobe::lexicon::{filter_animate, load_lexicon, split_lexicon};
use genderprobe::LanguageCode;

fn main() -> genderprobe::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");

    let bg = load_lexicon(fixtures.join("counts/bg.tsv"), LanguageCode::Bg)?;
    let c = bg.counts();
    println!("bg total={} masc={} fem={}", c.total, c.masculine, c.feminine);

    let es = load_lexicon(fixtures.join("synthetic/lexicons/es.tsv"), LanguageCode::Es)?;
    let inanimate = filter_animate(&es);
    println!(
        "es: {} nouns, {} after dropping animate ones",
        es.len(),
        inanimate.len()
    );

    let split = split_lexicon(&inanimate, 7)?;
    println!("split: {} train / {} test", split.train.len(), split.test.len());
    Ok(())
}
