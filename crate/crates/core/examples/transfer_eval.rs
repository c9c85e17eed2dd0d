//! Hold each language out, train on the rest and test on the unseen one.
//! German uses its own semantic map here, so it cannot transfer.

use std::path::Path;

use genderprobe::config::ExperimentConfig;
use genderprobe::experiments::{format_report, run_transfer};

fn main() -> genderprobe::Result<()> {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/replay.toml");
    let config = ExperimentConfig::load(&config_path)?;
    print!("{}", format_report(&run_transfer(&config)?));
    Ok(())
}
