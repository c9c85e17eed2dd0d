//! Train and test inside each language on the recorded fixtures.

use std::path::Path;

use genderprobe::config::ExperimentConfig;
use genderprobe::experiments::{format_report, run_same_language, write_report};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/replay.toml");
    let config = ExperimentConfig::load(&config_path)?;
    let report = run_same_language(&config)?;
    print!("{}", format_report(&report));

    let out = tempfile::tempdir()?;
    let path = write_report(&report, out.path())?;
    println!("wrote {}", path.file_name().unwrap().to_string_lossy());
    Ok(())
}
