//! Regenerates the small RGB-D fixture under `tests/fixtures/synthetic`.
//!
//! `cargo run --example gen_fixture [-- <out dir>]`

use std::path::PathBuf;

use mvdr::synthetic::{write_dataset, SyntheticSpec};

fn main() -> mvdr::Result<()> {
    let out = std::env::args_os().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic"),
        PathBuf::from,
    );
    let _ = std::fs::remove_dir_all(&out);
    let spec = SyntheticSpec {
        train_per_class: 12,
        test_per_class: 8,
        size: 16,
        seed: 7,
        ..SyntheticSpec::default()
    };
    let (train, test) = write_dataset(&out, &spec)?;
    println!("wrote {} and {}", train.display(), test.display());
    Ok(())
}
