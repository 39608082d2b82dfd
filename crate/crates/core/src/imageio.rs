//! Image decoding, resizing and decomposition into per-view planes.
//!
//! Every raster in the crate is an [`ImagePlane`]: one channel of
//! unit-interval intensities stored row-major. A decoded colour image is
//! split into R, G, B and BT.601 grayscale planes, optionally joined by a
//! precomputed depth map read from `<stem>.depth.png`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Single-channel raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "plane data has {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!(
                "plane intensity {v} outside the unit interval"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value at column `x`, row `y`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Decoded colour image: interleaved RGB triples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "rgb image has {} pixels, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if pixels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(
                "rgb intensity outside the unit interval".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    fn channel(&self, c: usize) -> ImagePlane {
        ImagePlane {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|p| p[c]).collect(),
        }
    }

    /// Bilinear resize applied channel by channel.
    pub fn resize(&self, width: usize, height: usize) -> Result<RgbImage> {
        let [r, g, b] = [0, 1, 2].map(|c| resize_bilinear(&self.channel(c), width, height));
        let (r, g, b) = (r?, g?, b?);
        let pixels = (0..width * height)
            .map(|i| [r.data[i], g.data[i], b.data[i]])
            .collect();
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }
}

/// The named views a sample can be rendered into, in splice order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViewKind {
    R,
    G,
    B,
    Gray,
    Depth,
}

impl ViewKind {
    pub const ALL: [ViewKind; 5] = [
        ViewKind::R,
        ViewKind::G,
        ViewKind::B,
        ViewKind::Gray,
        ViewKind::Depth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViewKind::R => "r",
            ViewKind::G => "g",
            ViewKind::B => "b",
            ViewKind::Gray => "gray",
            ViewKind::Depth => "depth",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ViewKind::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown view `{s}` (expected one of r, g, b, gray, depth)"
                ))
            })
    }
}

/// Parses a comma-separated view list, returning it in canonical splice
/// order with duplicates removed.
pub fn parse_views(list: &str) -> Result<Vec<ViewKind>> {
    let mut views = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(ViewKind::from_str)
        .collect::<Result<Vec<_>>>()?;
    views.sort();
    views.dedup();
    if views.is_empty() {
        return Err(Error::Argument("at least one view must be enabled".into()));
    }
    Ok(views)
}

/// All views of one sample; every present plane shares one size.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub r: ImagePlane,
    pub g: ImagePlane,
    pub b: ImagePlane,
    pub gray: ImagePlane,
    pub depth: Option<ImagePlane>,
}

impl ViewSet {
    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn view(&self, kind: ViewKind) -> Option<&ImagePlane> {
        match kind {
            ViewKind::R => Some(&self.r),
            ViewKind::G => Some(&self.g),
            ViewKind::B => Some(&self.b),
            ViewKind::Gray => Some(&self.gray),
            ViewKind::Depth => self.depth.as_ref(),
        }
    }

    /// Recombines the colour planes into an interleaved image.
    pub fn to_rgb(&self) -> RgbImage {
        let pixels = (0..self.r.data.len())
            .map(|i| [self.r.data[i], self.g.data[i], self.b.data[i]])
            .collect();
        RgbImage {
            width: self.r.width,
            height: self.r.height,
            pixels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub views: ViewSet,
    pub label: usize,
    pub source: PathBuf,
}

/// Samples in path order plus the class manifest they index into.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<LabeledSample>,
}

fn is_sixteen_bit(img: &DynamicImage) -> bool {
    !matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageRgb8(_)
            | DynamicImage::ImageRgba8(_)
    )
}

fn decode_dynamic(bytes: &[u8], path: &Path) -> Result<DynamicImage> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat {
        path: path.to_path_buf(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
        });
    }
    image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Decodes a PNG or JPEG payload into RGB triples scaled by 1/255, or by
/// 1/65535 for 16-bit sources. `path` is only used for error reporting.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let img = decode_dynamic(bytes, path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = if is_sixteen_bit(&img) {
        img.to_rgb16()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 65535.0))
            .collect()
    } else {
        img.to_rgb8()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 255.0))
            .collect()
    };
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

/// Decodes a depth map (8- or 16-bit grayscale) into a plane.
pub fn decode_depth(bytes: &[u8], path: &Path) -> Result<ImagePlane> {
    let img = decode_dynamic(bytes, path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = if is_sixteen_bit(&img) {
        img.to_luma16()
            .pixels()
            .map(|p| f64::from(p.0[0]) / 65535.0)
            .collect()
    } else {
        img.to_luma8()
            .pixels()
            .map(|p| f64::from(p.0[0]) / 255.0)
            .collect()
    };
    Ok(ImagePlane {
        width,
        height,
        data,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn decode_image_file(path: &Path) -> Result<RgbImage> {
    decode_image(&read_file(path)?, path)
}

pub fn decode_depth_file(path: &Path) -> Result<ImagePlane> {
    decode_depth(&read_file(path)?, path)
}

/// Splits an RGB image into its channel planes plus BT.601 grayscale.
pub fn split_views(rgb: &RgbImage, depth: Option<ImagePlane>) -> Result<ViewSet> {
    if let Some(d) = &depth {
        if d.dims() != (rgb.width, rgb.height) {
            return Err(Error::Shape(format!(
                "depth plane is {}x{} but the rgb image is {}x{}",
                d.width, d.height, rgb.width, rgb.height
            )));
        }
    }
    let gray = rgb
        .pixels
        .iter()
        .map(|&[r, g, b]| (LUMA_R * r + LUMA_G * g + LUMA_B * b).clamp(0.0, 1.0))
        .collect();
    Ok(ViewSet {
        r: rgb.channel(0),
        g: rgb.channel(1),
        b: rgb.channel(2),
        gray: ImagePlane {
            width: rgb.width,
            height: rgb.height,
            data: gray,
        },
        depth,
    })
}

/// Bilinear resampling with pixel centres at `(i + 0.5) / n`.
pub fn resize_bilinear(plane: &ImagePlane, width: usize, height: usize) -> Result<ImagePlane> {
    if width == 0 || height == 0 {
        return Err(Error::Argument(format!(
            "resize target {width}x{height} has a zero dimension"
        )));
    }
    if plane.width == 0 || plane.height == 0 {
        return Err(Error::Shape("cannot resize an empty plane".into()));
    }
    if plane.dims() == (width, height) {
        return Ok(plane.clone());
    }

    // (source index below, source index above, weight of the upper one)
    let taps = |dst: usize, src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, x - lo as f64)
            })
            .collect()
    };
    let xs = taps(width, plane.width);
    let ys = taps(height, plane.height);

    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = lerp(plane.get(x0, y0), plane.get(x1, y0), fx);
            let bottom = lerp(plane.get(x0, y1), plane.get(x1, y1), fx);
            data.push(lerp(top, bottom, fy).clamp(0.0, 1.0));
        }
    }
    Ok(ImagePlane {
        width,
        height,
        data,
    })
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Path of the optional depth map that accompanies `image`.
pub fn depth_path_for(image: &Path) -> PathBuf {
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image.with_file_name(format!("{stem}.depth.png"))
}

fn is_depth_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.to_ascii_lowercase().ends_with(".depth.png"))
}

fn is_image_file(path: &Path) -> bool {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) && !is_depth_file(path)
}

/// Reads `root/classes.txt`: one class name per line, blank lines ignored.
pub fn read_manifest(root: &Path) -> Result<Vec<String>> {
    let path = root.join("classes.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let classes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    if classes.is_empty() {
        return Err(Error::Dataset(format!(
            "{} lists no classes",
            path.display()
        )));
    }
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::Dataset(format!(
                "class `{c}` appears twice in {}",
                path.display()
            )));
        }
    }
    Ok(classes)
}

/// Loads one image (and its depth map, if given) at the working resolution.
pub fn load_views(image: &Path, depth: Option<&Path>, resolution: usize) -> Result<ViewSet> {
    let rgb = decode_image_file(image)?.resize(resolution, resolution)?;
    let depth = depth
        .map(|p| decode_depth_file(p).and_then(|d| resize_bilinear(&d, resolution, resolution)))
        .transpose()?;
    split_views(&rgb, depth)
}

/// Lists `(image path, label)` for every image under `root`, sorted by path.
pub fn list_dataset(root: &Path, classes: &[String]) -> Result<Vec<(PathBuf, usize)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if !classes.contains(&name) {
                return Err(Error::Dataset(format!(
                    "unknown class directory {} (not in classes.txt)",
                    entry.path().display()
                )));
            }
        }
    }

    let mut files = Vec::new();
    let mut empty = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Dataset(format!(
                "class directory {} named in classes.txt is missing",
                dir.display()
            )));
        }
        let before = files.len();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_file() && is_image_file(&path) {
                files.push((path, label));
            }
        }
        if files.len() == before {
            empty.push(class.clone());
        }
    }
    if !empty.is_empty() {
        return Err(Error::Dataset(format!(
            "class directories without images: {}",
            empty.join(", ")
        )));
    }
    files.sort();
    Ok(files)
}

/// Loads every sample under `root`, attaching depth maps that exist.
pub fn load_dataset(root: &Path, classes: &[String], resolution: usize) -> Result<Dataset> {
    use rayon::prelude::*;

    let files = list_dataset(root, classes)?;
    let samples = files
        .par_iter()
        .map(|(path, label)| {
            let depth = depth_path_for(path);
            let depth = depth.is_file().then_some(depth);
            Ok(LabeledSample {
                views: load_views(path, depth.as_deref(), resolution)?,
                label: *label,
                source: path.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        classes: classes.to_vec(),
        samples,
    })
}
