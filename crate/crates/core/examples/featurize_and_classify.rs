//! Embed pivot profiles, train the classifier on a 90% split and score the
//! held-out nouns.

use std::path::Path;

use genderprobe::classify::{predict, train, Standardizer, TrainConfig};
use genderprobe::config::ExperimentConfig;
use genderprobe::embed::scale_frequency;
use genderprobe::experiments::Pipeline;
use genderprobe::lexicon::split_lexicon;
use genderprobe::metrics::classification_metrics;
use genderprobe::LanguageCode;

fn main() -> genderprobe::Result<()> {
    for f in [0.02, 0.2, 0.5, 0.98, 1.0] {
        println!("f={f:<5} f'={:.2}", scale_frequency(f)?);
    }

    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/replay.toml");
    let config = ExperimentConfig::load(&config_path)?;
    let pipeline = Pipeline::new(&config, &config.backend)?;
    let table = pipeline.embeddings()?;
    let data = pipeline.prepare(LanguageCode::It, Some(&table))?;

    let split = split_lexicon(&data.lexicon, 3)?;
    let (train_set, test_set): (Vec<_>, Vec<_>) = data
        .features
        .iter()
        .cloned()
        .partition(|f| split.train.contains(&f.noun));

    let scaler = Standardizer::fit_features(&train_set)?;
    let train_set: Vec<_> = train_set.iter().map(|f| scaler.transform_feature(f)).collect();
    let test_set: Vec<_> = test_set.iter().map(|f| scaler.transform_feature(f)).collect();

    let model = train(&train_set, &TrainConfig::default())?;
    println!(
        "loss {:.4} -> {:.4} over {} epochs",
        model.loss_curve[0],
        model.loss_curve.last().unwrap(),
        model.loss_curve.len()
    );

    let predictions = predict(&model.params, &test_set)?;
    let predicted: Vec<_> = predictions.iter().map(|p| p.predicted).collect();
    let truths: Vec<_> = test_set.iter().map(|f| f.noun.gender).collect();
    let m = classification_metrics(&predicted, &truths)?;
    println!(
        "held-out n={} accuracy={:.3} F1(fem)={:.3}",
        m.n, m.overall_accuracy, m.f1_feminine
    );
    Ok(())
}
