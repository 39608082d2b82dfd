//! Forward-only C/S convolutional feature extractor.
//!
//! Each stage is a convolution layer of `N` 3×3 kernels (valid,
//! stride 1, cross-correlation indexing) followed by a sigmoid and a
//! non-overlapping mean-pooling layer. Stages with several input maps use a
//! full connection table: each kernel is applied to every input map and the
//! pre-activations are summed. The last stage's maps are flattened.
//! Weights are seeded random projections, never trained.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{ImagePlane, ViewKind};

pub const KERNEL_SIZE: usize = 3;

/// `±sqrt(6 / (fan_in + fan_out))` with both fans equal to 9.
pub fn weight_bound() -> f64 {
    (6.0f64 / 18.0).sqrt()
}

/// 3×3 weights, row-major: `w[u * 3 + v]` multiplies `plane[i + u][j + v]`.
pub type Kernel = [f64; KERNEL_SIZE * KERNEL_SIZE];

/// Unbounded real-valued map; the working raster inside the network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "map data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

impl From<&ImagePlane> for FeatureMap {
    fn from(p: &ImagePlane) -> Self {
        FeatureMap {
            width: p.width(),
            height: p.height(),
            data: p.data().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    pub kernels: Vec<Kernel>,
    pub biases: Vec<f64>,
}

impl ConvLayerParams {
    pub fn new(kernels: Vec<Kernel>, biases: Vec<f64>) -> Result<Self> {
        if kernels.is_empty() || kernels.len() != biases.len() {
            return Err(Error::Config(format!(
                "layer has {} kernels and {} biases",
                kernels.len(),
                biases.len()
            )));
        }
        Ok(Self { kernels, biases })
    }

    pub fn maps(&self) -> usize {
        self.kernels.len()
    }
}

/// One C layer plus the S layer that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub conv: ConvLayerParams,
    pub pool: usize,
}

/// Shape of one stage before weights exist: `(feature maps, pool window)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShape {
    pub maps: usize,
    pub pool: usize,
}

/// The default five-layer net: input, C1, S1, C2, S2 with eight maps each.
pub const DEFAULT_STAGES: [StageShape; 2] = [
    StageShape { maps: 8, pool: 2 },
    StageShape { maps: 8, pool: 2 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub stages: Vec<Stage>,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(stages: Vec<Stage>, seed: u64) -> Result<Self> {
        let net = Self { stages, seed };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("network needs at least one stage".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.pool == 0 {
                return Err(Error::Config(format!("stage {i} has pooling window 0")));
            }
            if s.conv.kernels.is_empty() || s.conv.kernels.len() != s.conv.biases.len() {
                return Err(Error::Config(format!(
                    "stage {i}: {} kernels vs {} biases",
                    s.conv.kernels.len(),
                    s.conv.biases.len()
                )));
            }
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<StageShape> {
        self.stages
            .iter()
            .map(|s| StageShape {
                maps: s.conv.maps(),
                pool: s.pool,
            })
            .collect()
    }

    /// Traces a `width × height` input through every stage, returning the
    /// spatial size after each stage.
    pub fn trace(&self, width: usize, height: usize) -> Result<Vec<(usize, usize)>> {
        trace_shapes(&self.shapes(), width, height)
    }

    /// Length of the flattened output for a `width × height` input.
    pub fn output_len(&self, width: usize, height: usize) -> Result<usize> {
        let dims = self.trace(width, height)?;
        let (w, h) = *dims.last().expect("validated network has a stage");
        Ok(self.stages.last().unwrap().conv.maps() * w * h)
    }
}

pub fn trace_shapes(
    shapes: &[StageShape],
    mut width: usize,
    mut height: usize,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(shapes.len());
    for (i, s) in shapes.iter().enumerate() {
        if width < KERNEL_SIZE || height < KERNEL_SIZE {
            return Err(Error::Config(format!(
                "input exhausted before stage {i}: {width}x{height} is smaller than the 3x3 kernel"
            )));
        }
        if s.pool == 0 {
            return Err(Error::Config(format!("stage {i} has pooling window 0")));
        }
        width = (width - 2) / s.pool;
        height = (height - 2) / s.pool;
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "stage {i} pools its maps down to nothing (window {})",
                s.pool
            )));
        }
        out.push((width, height));
    }
    Ok(out)
}

/// Seeded uniform weights in `[-weight_bound(), +weight_bound()]`.
pub fn init_weights(seed: u64, shapes: &[StageShape]) -> Result<NetworkConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = weight_bound();
    let stages = shapes
        .iter()
        .map(|s| {
            let kernels = (0..s.maps)
                .map(|_| std::array::from_fn(|_| rng.random_range(-bound..=bound)))
                .collect();
            let biases = (0..s.maps)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Stage {
                conv: ConvLayerParams { kernels, biases },
                pool: s.pool,
            }
        })
        .collect();
    NetworkConfig::new(stages, seed)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_conv_input(plane: &FeatureMap) -> Result<()> {
    if plane.width < KERNEL_SIZE || plane.height < KERNEL_SIZE {
        return Err(Error::Shape(format!(
            "{}x{} plane is smaller than the 3x3 kernel",
            plane.width, plane.height
        )));
    }
    Ok(())
}

/// Accumulates the zero-bias valid response of `kernel` over `plane` into `out`.
fn accumulate_response(plane: &FeatureMap, kernel: &Kernel, out: &mut [f64]) {
    let ow = plane.width - 2;
    let oh = plane.height - 2;
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0;
            for u in 0..KERNEL_SIZE {
                let row = &plane.data[(i + u) * plane.width + j..][..KERNEL_SIZE];
                let w = &kernel[u * KERNEL_SIZE..][..KERNEL_SIZE];
                acc += row[0] * w[0] + row[1] * w[1] + row[2] * w[2];
            }
            out[i * ow + j] += acc;
        }
    }
}

/// Pre-activation `plane ∘ kernel + bias`; output is two pixels smaller on
/// each axis.
pub fn conv2d_valid(plane: &FeatureMap, kernel: &Kernel, bias: f64) -> Result<FeatureMap> {
    check_conv_input(plane)?;
    let (ow, oh) = (plane.width - 2, plane.height - 2);
    let mut data = vec![0.0; ow * oh];
    accumulate_response(plane, kernel, &mut data);
    data.iter_mut().for_each(|v| *v += bias);
    Ok(FeatureMap {
        width: ow,
        height: oh,
        data,
    })
}

/// Non-overlapping `k × k` mean pooling; ragged edges are dropped.
pub fn pool_mean(plane: &FeatureMap, k: usize) -> Result<FeatureMap> {
    if k == 0 {
        return Err(Error::Argument("pooling window must be at least 1".into()));
    }
    if k == 1 {
        return Ok(plane.clone());
    }
    let (ow, oh) = (plane.width / k, plane.height / k);
    let norm = (k * k) as f64;
    let mut data = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        for bx in 0..ow {
            let mut acc = 0.0;
            for y in by * k..(by + 1) * k {
                acc += plane.data[y * plane.width + bx * k..][..k]
                    .iter()
                    .sum::<f64>();
            }
            data.push(acc / norm);
        }
    }
    Ok(FeatureMap {
        width: ow,
        height: oh,
        data,
    })
}

/// Flattened network output for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub view: ViewKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Runs every stage, returning the surviving maps of the last one.
pub fn forward_maps(input: &FeatureMap, net: &NetworkConfig) -> Result<Vec<FeatureMap>> {
    net.validate()?;
    let mut maps = vec![input.clone()];
    for (idx, stage) in net.stages.iter().enumerate() {
        let (w, h) = (maps[0].width, maps[0].height);
        if w < KERNEL_SIZE || h < KERNEL_SIZE {
            return Err(Error::Config(format!(
                "input exhausted before stage {idx}: {w}x{h} is smaller than the 3x3 kernel"
            )));
        }
        let (ow, oh) = (w - 2, h - 2);
        let mut next = Vec::with_capacity(stage.conv.maps());
        for (kernel, &bias) in stage.conv.kernels.iter().zip(&stage.conv.biases) {
            let mut pre = vec![0.0; ow * oh];
            for m in &maps {
                accumulate_response(m, kernel, &mut pre);
            }
            let activated = FeatureMap {
                width: ow,
                height: oh,
                data: pre.into_iter().map(|v| sigmoid(v + bias)).collect(),
            };
            let pooled = pool_mean(&activated, stage.pool)?;
            if pooled.width == 0 || pooled.height == 0 {
                return Err(Error::Config(format!(
                    "stage {idx} pools its maps down to nothing (window {})",
                    stage.pool
                )));
            }
            next.push(pooled);
        }
        maps = next;
    }
    Ok(maps)
}

pub fn extract_features(
    view: &ImagePlane,
    kind: ViewKind,
    net: &NetworkConfig,
) -> Result<FeatureVector> {
    let maps = forward_maps(&FeatureMap::from(view), net)?;
    Ok(FeatureVector {
        view: kind,
        values: maps.into_iter().flat_map(|m| m.data).collect(),
    })
}
