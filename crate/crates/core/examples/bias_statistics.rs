//! Masculine ratios per adjective and the cross-language similarity matrix.

use std::path::Path;

use genderprobe::config::ExperimentConfig;
use genderprobe::experiments::Pipeline;
use genderprobe::metrics::{gender_ratios, similarity_matrix};

fn main() -> genderprobe::Result<()> {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/replay.toml");
    let config = ExperimentConfig::load(&config_path)?;
    let pipeline = Pipeline::new(&config, &config.backend)?;

    let mut ratios = Vec::new();
    for data in pipeline.prepare_all(false)? {
        let r = gender_ratios(&data.profiles);
        let mut top: Vec<_> = r.values().filter(|g| g.support >= config.min_support).collect();
        top.sort_by(|a, b| b.r_m.total_cmp(&a.r_m));
        println!("{}: {} adjectives, most masculine:", data.language, r.len());
        for g in top.iter().take(3) {
            println!("  {:<20} r_m={:.2} support={}", g.adjective, g.r_m, g.support);
        }
        ratios.push((data.language, r));
    }

    let matrix = similarity_matrix(&ratios, config.min_support);
    for p in &matrix.languages {
        for q in &matrix.languages {
            let cell = matrix.get(*p, *q).expect("language in matrix");
            match cell.score {
                Some(s) => println!("S({p},{q}) = {s:.3} over {} adjectives", cell.shared_count),
                None => println!("S({p},{q}) undefined ({:?})", cell.status),
            }
        }
    }
    Ok(())
}
