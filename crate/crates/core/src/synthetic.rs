//! Seeded synthetic RGB-D datasets.
//!
//! Class identity lives in the depth map: class `k` of `K` is a linear depth
//! ramp oriented at `k·π/K`. The colour image is drawn from a pool of
//! textures shared by every class, except that with probability
//! `class_texture_prob` a class-specific texture is used instead, so colour
//! carries only a weak class signal.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Side length of the generated square images.
    pub size: usize,
    pub seed: u64,
    pub shared_textures: usize,
    pub class_texture_prob: f64,
    pub pixel_noise: f64,
    pub depth_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            train_per_class: 60,
            test_per_class: 40,
            size: 20,
            seed: 1,
            shared_textures: 6,
            class_texture_prob: 0.15,
            pixel_noise: 0.08,
            depth_noise: 0.04,
        }
    }
}

/// Smooth random field: a handful of random plane waves.
#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<[[f64; 4]; 3]>, // per wave, per channel: amplitude, frequency, angle, phase
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..3)
            .map(|_| {
                std::array::from_fn(|_| {
                    [
                        rng.random_range(0.3..1.0),
                        rng.random_range(1.0..5.0),
                        rng.random_range(0.0..PI),
                        rng.random_range(0.0..2.0 * PI),
                    ]
                })
            })
            .collect();
        Self { waves }
    }

    /// Channel value in roughly `[0, 1]` at normalised coordinates `u, v`.
    fn sample(&self, channel: usize, u: f64, v: f64) -> f64 {
        let mut s = 0.0;
        let mut norm = 0.0;
        for w in &self.waves {
            let [amp, freq, angle, phase] = w[channel];
            s += amp * (freq * PI * (u * angle.cos() + v * angle.sin()) + phase).sin();
            norm += amp;
        }
        0.5 + 0.5 * s / norm
    }
}

fn write_error(path: &Path, e: image::ImageError) -> Error {
    Error::Data(format!("failed to write {}: {e}", path.display()))
}

fn class_name(k: usize) -> String {
    format!("class{k}")
}

/// Writes `root/train` and `root/test`, each with a `classes.txt`, one
/// directory per class, RGB PNGs and 16-bit `*.depth.png` maps.
pub fn write_dataset(root: &Path, spec: &SyntheticSpec) -> Result<(PathBuf, PathBuf)> {
    if spec.classes < 2 || spec.size < 8 {
        return Err(Error::Argument(format!(
            "synthetic dataset needs ≥ 2 classes and size ≥ 8 (got {} and {})",
            spec.classes, spec.size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared: Vec<Texture> = (0..spec.shared_textures.max(1))
        .map(|_| Texture::random(&mut rng))
        .collect();
    let own: Vec<Texture> = (0..spec.classes)
        .map(|_| Texture::random(&mut rng))
        .collect();
    let pixel =
        Normal::new(0.0, spec.pixel_noise.max(0.0)).map_err(|e| Error::Argument(e.to_string()))?;
    let depth_px =
        Normal::new(0.0, spec.depth_noise.max(0.0)).map_err(|e| Error::Argument(e.to_string()))?;

    let mut out = Vec::new();
    for (split, per_class) in [
        ("train", spec.train_per_class),
        ("test", spec.test_per_class),
    ] {
        let dir = root.join(split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest: String = (0..spec.classes).map(|k| class_name(k) + "\n").collect();
        let manifest_path = dir.join("classes.txt");
        fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

        for (k, own_texture) in own.iter().enumerate() {
            let class_dir = dir.join(class_name(k));
            fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
            let angle = k as f64 * PI / spec.classes as f64;
            for i in 0..per_class {
                let texture = if rng.random_bool(spec.class_texture_prob.clamp(0.0, 1.0)) {
                    own_texture
                } else {
                    &shared[rng.random_range(0..shared.len())]
                };
                let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.1..0.1));
                let offset = rng.random_range(-0.1..0.1);
                let slope = rng.random_range(0.3..0.45);
                let n = spec.size;
                let coord = |p: u32| (p as f64 + 0.5) / n as f64 * 2.0 - 1.0;

                let rgb = ImageBuffer::from_fn(n as u32, n as u32, |x, y| {
                    let (u, v) = (coord(x), coord(y));
                    Rgb(std::array::from_fn(|c| {
                        let val = texture.sample(c, u, v) + tint[c] + pixel.sample(&mut rng);
                        (val.clamp(0.0, 1.0) * 255.0).round() as u8
                    }))
                });
                let depth = ImageBuffer::from_fn(n as u32, n as u32, |x, y| {
                    let (u, v) = (coord(x), coord(y));
                    let ramp = u * angle.cos() + v * angle.sin();
                    let val = 0.5 + offset + slope * ramp + depth_px.sample(&mut rng);
                    Luma([(val.clamp(0.0, 1.0) * 65535.0).round() as u16])
                });

                let stem = format!("{:04}", i);
                let image_path = class_dir.join(format!("{stem}.png"));
                let depth_path = class_dir.join(format!("{stem}.depth.png"));
                rgb.save(&image_path)
                    .map_err(|e| write_error(&image_path, e))?;
                depth
                    .save(&depth_path)
                    .map_err(|e| write_error(&depth_path, e))?;
            }
        }
        out.push(dir);
    }
    let test = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, test))
}
