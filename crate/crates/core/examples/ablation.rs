//! Depth ablation on a generated RGB-D dataset.
//!
//! `cargo run --release --example ablation -- [seed] [resolution]`

use std::time::Instant;

use mvdr::imageio::ViewKind;
use mvdr::pipeline::{self, PipelineConfig};
use mvdr::synthetic::{write_dataset, SyntheticSpec};

fn main() -> mvdr::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let resolution: usize = args.next().map_or(20, |s| s.parse().expect("resolution"));
    let dir = std::env::temp_dir().join(format!("mvdr-ablation-{seed}"));
    let _ = std::fs::remove_dir_all(&dir);
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let (train, test) = write_dataset(&dir, &spec)?;
    for views in [
        vec![ViewKind::R, ViewKind::G, ViewKind::B, ViewKind::Gray],
        ViewKind::ALL.to_vec(),
    ] {
        let started = Instant::now();
        let config = PipelineConfig {
            resolution,
            views: views.clone(),
            ..PipelineConfig::default()
        };
        let model = pipeline::train(&train, &config)?;
        let report = pipeline::evaluate(&model, &test)?;
        let names: Vec<&str> = views.iter().map(|v| v.name()).collect();
        println!(
            "{:<22} w = {:>3}  mean-class accuracy {:.4}  ({:.1?})",
            names.join(","),
            model.pca.retained,
            report.mean_class_accuracy,
            started.elapsed()
        );
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
