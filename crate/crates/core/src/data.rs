//! PNG ingestion, dataset manifests, seeded splits and random crops.
//!
//! Manifest format (CSV with header, paths relative to the manifest's
//! directory unless absolute):
//!
//! ```text
//! image_id,rgb_path,depth_path[,split]
//! 0001,rgb/0001.png,depth/0001.png,train
//! ```
//!
//! Without a manifest, [`DatasetIndex::discover`] pairs `rgb/<stem>.png` with
//! `depth/<stem>.png` under a root directory. The default root comes from the
//! `DEPTHBENCH_DATA_DIR` environment variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::types::{DepthMap, RgbImage, DEFAULT_MAX_DEPTH};

pub const DATA_DIR_ENV: &str = "DEPTHBENCH_DATA_DIR";

/// Meters per raw 16-bit unit.
pub const DEFAULT_UNIT_SCALE: f64 = 0.001;

/// Minimum crop side used by [`R2CropConfig::default`].
pub const DEFAULT_MIN_CROP: usize = 64;

pub fn data_root_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn read_png(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let dims = |v: usize| u32::try_from(v).map_err(|_| Error::format(path, "dimension exceeds u32"));
    let mut encoder = png::Encoder::new(BufWriter::new(file), dims(width)?, dims(height)?);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let fail = |e: png::EncodingError| Error::format(path, e.to_string());
    let mut writer = encoder.write_header().map_err(fail)?;
    writer.write_image_data(data).map_err(fail)?;
    writer.finish().map_err(fail)
}

/// Decodes an 8-bit RGB PNG into `[0, 1]` values (`v / 255`).
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let (info, buf) = read_png(path)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!(
                "expected 8-bit RGB, found {:?} at {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let values = buf.iter().map(|&b| f32::from(b) / 255.0).collect();
    RgbImage::new(info.height as usize, info.width as usize, values)
}

/// Encodes an image as 8-bit RGB, rounding to the nearest level.
pub fn save_rgb(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = image
        .values()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_png(
        path.as_ref(),
        image.width(),
        image.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &data,
    )
}

fn check_scale(unit_scale: f64) -> Result<()> {
    if unit_scale.is_finite() && unit_scale > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("unit_scale must be positive, got {unit_scale}")))
    }
}

/// Decodes a 16-bit grayscale depth PNG. A pixel is valid when its raw
/// value is non-zero and `raw * unit_scale` is within the 50 m cap; invalid
/// pixels keep their decoded value.
pub fn load_depth16(path: impl AsRef<Path>, unit_scale: f64) -> Result<DepthMap> {
    check_scale(unit_scale)?;
    let path = path.as_ref();
    let (info, buf) = read_png(path)?;
    if info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            path,
            format!("depth PNG must be 16-bit, found {:?}", info.bit_depth),
        ));
    }
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(
            path,
            format!("depth PNG must be single-channel, found {:?}", info.color_type),
        ));
    }
    let raw = buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]));
    let (values, valid) = raw
        .map(|r| {
            let m = f64::from(r) * unit_scale;
            (m, r > 0 && m <= DEFAULT_MAX_DEPTH)
        })
        .unzip();
    DepthMap::new(info.height as usize, info.width as usize, values, valid)
}

/// Decodes a predicted depth PNG. Every non-zero pixel counts as a
/// prediction, including ones beyond the ground-truth cap; zero marks a
/// missing prediction.
pub fn load_prediction16(path: impl AsRef<Path>, unit_scale: f64) -> Result<DepthMap> {
    let depth = load_depth16(path, unit_scale)?;
    let valid = depth.values().iter().map(|&v| v > 0.0).collect();
    let (h, w) = (depth.height(), depth.width());
    Ok(DepthMap::from_parts_unchecked(h, w, depth.values().to_vec(), valid))
}

/// Raw 16-bit code for one pixel.
///
/// Positive values quantize to `round(v / unit_scale)` clamped to 65535.
/// Non-positive values and invalid pixels inside the depth cap become 0.
/// Invalid pixels beyond the cap keep their code, so every raw value read by
/// [`load_depth16`] is written back unchanged.
pub fn depth_to_raw(value: f64, valid: bool, unit_scale: f64) -> u16 {
    let keep = value > 0.0 && (valid || value > DEFAULT_MAX_DEPTH);
    if keep {
        (value / unit_scale).round().min(f64::from(u16::MAX)) as u16
    } else {
        0
    }
}

pub fn save_depth16(depth: &DepthMap, path: impl AsRef<Path>, unit_scale: f64) -> Result<()> {
    check_scale(unit_scale)?;
    let data: Vec<u8> = depth
        .values()
        .iter()
        .zip(depth.valid())
        .flat_map(|(&v, &ok)| depth_to_raw(v, ok, unit_scale).to_be_bytes())
        .collect();
    write_png(
        path.as_ref(),
        depth.width(),
        depth.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Loads every `*.png` in a directory as a depth map keyed by file stem,
/// using `load` (typically [`load_depth16`] or [`load_prediction16`]).
pub fn load_depth_dir<F>(dir: impl AsRef<Path>, unit_scale: f64, load: F) -> Result<BTreeMap<String, DepthMap>>
where
    F: Fn(&Path, f64) -> Result<DepthMap> + Sync,
{
    let files = png_stems(dir.as_ref())?;
    files
        .into_par_iter()
        .map(|(stem, path)| load(&path, unit_scale).map(|d| (stem, d)))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().collect())
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_owned(), path);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Random crops

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct R2CropConfig {
    pub min_height: usize,
    pub min_width: usize,
    /// `None` means the source height.
    pub max_height: Option<usize>,
    pub max_width: Option<usize>,
}

impl Default for R2CropConfig {
    fn default() -> Self {
        Self {
            min_height: DEFAULT_MIN_CROP,
            min_width: DEFAULT_MIN_CROP,
            max_height: None,
            max_width: None,
        }
    }
}

impl R2CropConfig {
    pub fn fixed(height: usize, width: usize) -> Self {
        Self {
            min_height: height,
            min_width: width,
            max_height: Some(height),
            max_width: Some(width),
        }
    }

    /// Resolved `(min_h, max_h, min_w, max_w)` for a source size.
    pub fn bounds(&self, source: (usize, usize)) -> Result<(usize, usize, usize, usize)> {
        let (sh, sw) = source;
        let max_h = self.max_height.unwrap_or(sh);
        let max_w = self.max_width.unwrap_or(sw);
        let ok = self.min_height >= 1
            && self.min_width >= 1
            && self.min_height <= max_h
            && self.min_width <= max_w
            && max_h <= sh
            && max_w <= sw;
        if !ok {
            return Err(Error::Config(format!(
                "infeasible crop: height {}..={max_h}, width {}..={max_w} in a {sh}x{sw} source",
                self.min_height, self.min_width
            )));
        }
        Ok((self.min_height, max_h, self.min_width, max_w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Draws a crop: height, then width, then top, then left, each uniform
/// over its feasible integer range.
pub fn r2_crop(rng: &mut SeedStream, source: (usize, usize), config: &R2CropConfig) -> Result<CropSpec> {
    let (min_h, max_h, min_w, max_w) = config.bounds(source)?;
    let height = rng.uniform_inclusive(min_h, max_h);
    let width = rng.uniform_inclusive(min_w, max_w);
    let top = rng.uniform_inclusive(0, source.0 - height);
    let left = rng.uniform_inclusive(0, source.1 - width);
    Ok(CropSpec {
        top,
        left,
        height,
        width,
    })
}

impl CropSpec {
    pub fn fits(&self, source: (usize, usize)) -> bool {
        self.height >= 1
            && self.width >= 1
            && self.top + self.height <= source.0
            && self.left + self.width <= source.1
    }

    fn check(&self, source: (usize, usize)) -> Result<()> {
        if self.fits(source) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "crop {self:?} does not fit a {}x{} image",
                source.0, source.1
            )))
        }
    }

    fn rows<'a, T: Copy>(&'a self, data: &'a [T], width: usize, channels: usize) -> impl Iterator<Item = T> + 'a {
        (self.top..self.top + self.height).flat_map(move |r| {
            let start = (r * width + self.left) * channels;
            data[start..start + self.width * channels].iter().copied()
        })
    }

    pub fn apply_depth(&self, depth: &DepthMap) -> Result<DepthMap> {
        self.check((depth.height(), depth.width()))?;
        let values = self.rows(depth.values(), depth.width(), 1).collect();
        let valid = self.rows(depth.valid(), depth.width(), 1).collect();
        Ok(DepthMap::from_parts_unchecked(self.height, self.width, values, valid))
    }

    pub fn apply_rgb(&self, image: &RgbImage) -> Result<RgbImage> {
        self.check((image.height(), image.width()))?;
        let values = self.rows(image.values(), image.width(), 3).collect();
        RgbImage::new(self.height, self.width, values)
    }
}

/// Crops an aligned RGB/depth pair with one spec.
pub fn crop_pair(rgb: &RgbImage, depth: &DepthMap, spec: &CropSpec) -> Result<(RgbImage, DepthMap)> {
    if (rgb.height(), rgb.width()) != (depth.height(), depth.width()) {
        return Err(Error::Shape(format!(
            "rgb is {}x{} but depth is {}x{}",
            rgb.height(),
            rgb.width(),
            depth.height(),
            depth.width()
        )));
    }
    Ok((spec.apply_rgb(rgb)?, spec.apply_depth(depth)?))
}

// ---------------------------------------------------------------------------
// Dataset index

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Unassigned,
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub image_id: String,
    pub rgb_path: PathBuf,
    pub depth_path: PathBuf,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    entries: Vec<DatasetEntry>,
}

impl DatasetIndex {
    /// Builds an index; ids must be unique.
    pub fn new(entries: Vec<DatasetEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate image_id `{}`", e.image_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == which)
    }

    /// Reads a CSV manifest and checks that every referenced file exists.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(BufReader::new(file));
        let mut entries = Vec::new();
        for row in reader.deserialize() {
            let mut e: DatasetEntry = row?;
            e.rgb_path = base.join(&e.rgb_path);
            e.depth_path = base.join(&e.depth_path);
            entries.push(e);
        }
        let index = Self::new(entries)?;
        index.check_files()?;
        Ok(index)
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Pairs `root/rgb/<stem>.png` with `root/depth/<stem>.png`.
    pub fn discover(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let rgb = png_stems(&root.join("rgb"))?;
        let depth = png_stems(&root.join("depth"))?;
        let unpaired: Vec<&str> = rgb
            .keys()
            .filter(|k| !depth.contains_key(*k))
            .chain(depth.keys().filter(|k| !rgb.contains_key(*k)))
            .map(String::as_str)
            .collect();
        if !unpaired.is_empty() {
            return Err(Error::Dataset(format!("unpaired ids: {}", unpaired.join(", "))));
        }
        let entries = rgb
            .into_iter()
            .map(|(id, rgb_path)| DatasetEntry {
                depth_path: depth[&id].clone(),
                image_id: id,
                rgb_path,
                split: Split::Unassigned,
            })
            .collect();
        Self::new(entries)
    }

    fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in [&e.rgb_path, &e.depth_path] {
                if !p.is_file() {
                    return Err(Error::Dataset(format!(
                        "image `{}` references missing file {}",
                        e.image_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Decodes every pair in parallel, checking that RGB and depth agree in
    /// size.
    pub fn load_all(&self, unit_scale: f64) -> Result<Vec<(String, RgbImage, DepthMap)>> {
        self.entries
            .par_iter()
            .map(|e| {
                let (rgb, depth) = load_pair(e, unit_scale)?;
                Ok((e.image_id.clone(), rgb, depth))
            })
            .collect()
    }
}

pub fn load_pair(entry: &DatasetEntry, unit_scale: f64) -> Result<(RgbImage, DepthMap)> {
    let rgb = load_rgb(&entry.rgb_path)?;
    let depth = load_depth16(&entry.depth_path, unit_scale)?;
    if (rgb.height(), rgb.width()) != (depth.height(), depth.width()) {
        return Err(Error::Dataset(format!(
            "image `{}`: rgb is {}x{} but depth is {}x{}",
            entry.image_id,
            rgb.height(),
            rgb.width(),
            depth.height(),
            depth.width()
        )));
    }
    Ok((rgb, depth))
}

/// Seeded shuffle of entry positions; the first `round(val_fraction * n)`
/// shuffled entries become validation, the rest training. Entry order is
/// preserved in the returned index.
pub fn split_dataset(index: &DatasetIndex, val_fraction: f64, seed: u64) -> Result<DatasetIndex> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction must be in [0, 1], got {val_fraction}"
        )));
    }
    let n = index.len();
    let mut order: Vec<usize> = (0..n).collect();
    SeedStream::new(seed).shuffle(&mut order);
    let n_val = (val_fraction * n as f64).round() as usize;
    let mut entries = index.entries.clone();
    for e in &mut entries {
        e.split = Split::Train;
    }
    for &i in &order[..n_val] {
        entries[i].split = Split::Val;
    }
    Ok(DatasetIndex { entries })
}
