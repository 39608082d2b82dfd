//! Binary model container.
//!
//! ```text
//! magic      8 bytes  "MVDRMODL"
//! version    u32 LE
//! sections   4 × (u64 LE byte length, payload): config, net, pca, svm
//! crc        u32 LE   CRC-32 of the section bytes
//! ```
//!
//! The config section is UTF-8 `key=value` lines; the others are packed
//! little-endian integers and IEEE-754 doubles, so every scalar survives a
//! round trip bit for bit.

use std::fs;
use std::path::Path;

use crate::convnet::{ConvLayerParams, Kernel, NetworkConfig, Stage, StageShape};
use crate::error::{Error, Result};
use crate::imageio::parse_views;
use crate::pca::{EigenPair, PcaModel, Standardization};
use crate::svm::SvmModel;

use super::{PipelineConfig, TrainedModel};

pub const MAGIC: &[u8; 8] = b"MVDRMODL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Self {
            buf,
            pos: 0,
            section,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "{} section truncated at byte {}",
                    self.section, self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count, bounded by what the remaining bytes could possibly hold.
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let v = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if v.saturating_mul(elem_size.max(1) as u64) > remaining {
            return Err(Error::Integrity(format!(
                "{} section declares {v} elements but only {remaining} bytes remain",
                self.section
            )));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Integrity(format!("{} section holds invalid UTF-8", self.section)))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Integrity(format!(
                "{} section has {} trailing bytes",
                self.section,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn encode_config(c: &PipelineConfig) -> Vec<u8> {
    let views: Vec<&str> = c.views.iter().map(|v| v.name()).collect();
    let stages: Vec<String> = c
        .stages
        .iter()
        .map(|s| format!("{}x{}", s.maps, s.pool))
        .collect();
    let mut text = format!(
        "resolution={}\nviews={}\nstages={}\nseed={}\npca_threshold={}\nsvm_c={}\n",
        c.resolution,
        views.join(","),
        stages.join(","),
        c.seed,
        c.pca_threshold,
        c.svm_c
    );
    for class in &c.classes {
        text.push_str("class=");
        text.push_str(class);
        text.push('\n');
    }
    text.into_bytes()
}

fn decode_config(bytes: &[u8]) -> Result<PipelineConfig> {
    let bad = |msg: String| Error::Integrity(format!("config section: {msg}"));
    let text = std::str::from_utf8(bytes).map_err(|_| bad("invalid UTF-8".into()))?;
    let mut config = PipelineConfig {
        classes: Vec::new(),
        ..PipelineConfig::default()
    };
    let mut seen = Vec::new();
    for line in text.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed line `{line}`")))?;
        let num = |what: &str| bad(format!("bad {what} `{value}`"));
        match key {
            "resolution" => config.resolution = value.parse().map_err(|_| num(key))?,
            "views" => config.views = parse_views(value).map_err(|_| num(key))?,
            "stages" => {
                config.stages = value
                    .split(',')
                    .map(|s| {
                        let (maps, pool) = s.split_once('x')?;
                        Some(StageShape {
                            maps: maps.parse().ok()?,
                            pool: pool.parse().ok()?,
                        })
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| num(key))?
            }
            "seed" => config.seed = value.parse().map_err(|_| num(key))?,
            "pca_threshold" => config.pca_threshold = value.parse().map_err(|_| num(key))?,
            "svm_c" => config.svm_c = value.parse().map_err(|_| num(key))?,
            "class" => config.classes.push(value.to_owned()),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
        seen.push(key);
    }
    for key in [
        "resolution",
        "views",
        "stages",
        "seed",
        "pca_threshold",
        "svm_c",
    ] {
        if !seen.contains(&key) {
            return Err(bad(format!("missing key `{key}`")));
        }
    }
    Ok(config)
}

fn encode_net(net: &NetworkConfig) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(net.seed);
    w.len(net.stages.len());
    for s in &net.stages {
        w.len(s.conv.maps());
        w.len(s.pool);
        for k in &s.conv.kernels {
            w.f64s(k);
        }
        w.f64s(&s.conv.biases);
    }
    w.0
}

fn decode_net(bytes: &[u8]) -> Result<NetworkConfig> {
    let mut r = Reader::new(bytes, "net");
    let seed = r.u64()?;
    let count = r.len(16)?;
    let mut stages = Vec::with_capacity(count);
    for _ in 0..count {
        let maps = r.len(80)?;
        let pool = r.u64()? as usize;
        let kernels = (0..maps)
            .map(|_| -> Result<Kernel> { Ok(r.f64s(9)?.try_into().unwrap()) })
            .collect::<Result<Vec<_>>>()?;
        let biases = r.f64s(maps)?;
        stages.push(Stage {
            conv: ConvLayerParams { kernels, biases },
            pool,
        });
    }
    r.finish()?;
    NetworkConfig::new(stages, seed).map_err(|e| Error::Integrity(format!("net section: {e}")))
}

fn encode_pca(p: &PcaModel) -> Vec<u8> {
    let mut w = Writer::default();
    let s = &p.standardization;
    w.len(s.len());
    w.f64s(&s.means);
    w.f64s(&s.stds);
    s.zero_variance_mask.iter().for_each(|&m| w.u8(u8::from(m)));
    w.len(p.eigenpairs.len());
    for pair in &p.eigenpairs {
        w.f64(pair.value);
        w.f64s(&pair.vector);
    }
    w.len(p.retained);
    w.f64(p.threshold);
    w.0
}

fn decode_pca(bytes: &[u8]) -> Result<PcaModel> {
    let mut r = Reader::new(bytes, "pca");
    let n = r.len(17)?;
    let means = r.f64s(n)?;
    let stds = r.f64s(n)?;
    let zero_variance_mask = (0..n)
        .map(|_| match r.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Integrity(format!("pca section: mask byte {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = r.len(8 * (n + 1))?;
    let eigenpairs = (0..pairs)
        .map(|_| {
            Ok(EigenPair {
                value: r.f64()?,
                vector: r.f64s(n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let retained = r.u64()? as usize;
    let threshold = r.f64()?;
    r.finish()?;
    Ok(PcaModel {
        standardization: Standardization {
            means,
            stds,
            zero_variance_mask,
        },
        eigenpairs,
        retained,
        threshold,
    })
}

fn encode_svm(s: &SvmModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.len(s.classes.len());
    s.classes.iter().for_each(|c| w.str(c));
    w.len(s.width());
    for wv in &s.weights {
        w.f64s(wv);
    }
    w.f64s(&s.biases);
    w.f64(s.c);
    w.0
}

fn decode_svm(bytes: &[u8]) -> Result<SvmModel> {
    let mut r = Reader::new(bytes, "svm");
    let k = r.len(8)?;
    let classes = (0..k).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let d = r.len(0)?;
    let weights = (0..k).map(|_| r.f64s(d)).collect::<Result<Vec<_>>>()?;
    let biases = r.f64s(k)?;
    let c = r.f64()?;
    r.finish()?;
    Ok(SvmModel {
        classes,
        weights,
        biases,
        c,
    })
}

pub fn model_to_bytes(model: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&model.format_version.to_le_bytes());
    for section in [
        encode_config(&model.config),
        encode_net(&model.net),
        encode_pca(&model.pca),
        encode_svm(&model.svm),
    ] {
        out.extend_from_slice(&(section.len() as u64).to_le_bytes());
        out.extend_from_slice(&section);
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Integrity("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Integrity(
            "file truncated before the checksum".into(),
        ));
    }
    let (body, crc) = bytes[HEADER_LEN..].split_at(bytes.len() - HEADER_LEN - 4);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Integrity(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }

    let mut r = Reader::new(body, "container");
    let mut sections = Vec::with_capacity(4);
    for _ in 0..4 {
        let n = r.len(1)?;
        sections.push(r.take(n)?);
    }
    r.finish()?;

    let model = TrainedModel {
        config: decode_config(sections[0])?,
        net: decode_net(sections[1])?,
        pca: decode_pca(sections[2])?,
        svm: decode_svm(sections[3])?,
        format_version: version,
    };
    model
        .check_consistency()
        .map_err(|e| Error::Integrity(format!("inconsistent model: {e}")))?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
