//! Raster file I/O: RGB images, single-channel 8-bit label maps, and
//! channel-planar f32 probability maps with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, GrayImage, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap, ProbabilityMap};
use crate::taxonomy::ClassTaxonomy;

/// File extensions recognized as rasters, in lookup order.
pub const RASTER_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

fn open(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let rgb = open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(h as usize, w as usize, rgb.into_raw())
}

/// Reads a label raster; only single-channel 8-bit files are accepted.
pub fn read_label(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = open(path)?;
    if img.color() != ColorType::L8 {
        return Err(Error::Format(format!(
            "{}: label rasters must be single-channel 8-bit, found {:?}",
            path.display(),
            img.color()
        )));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    LabelMap::new(h as usize, w as usize, gray.into_raw())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, image.data.clone())
        .ok_or_else(|| Error::Shape("image buffer".into()))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_label(path: impl AsRef<Path>, label: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let buf = GrayImage::from_raw(label.width as u32, label.height as u32, label.data.clone())
        .ok_or_else(|| Error::Shape("label buffer".into()))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Finds `<dir>/<stem>.<ext>` for the first existing raster extension.
pub fn find_raster(dir: &Path, stem: &str) -> Option<PathBuf> {
    RASTER_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Sidecar describing a probability-map file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySidecar {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub layout: String,
    pub dtype: String,
    pub taxonomy: ClassTaxonomy,
}

pub const PROB_EXTENSION: &str = "f32";

/// Writes `<dir>/<id>.f32` (K planes of H×W little-endian f32) and `<dir>/<id>.json`.
pub fn write_probability_map(
    dir: impl AsRef<Path>,
    id: &str,
    map: &ProbabilityMap,
    taxonomy: &ClassTaxonomy,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes: Vec<u8> = map.to_planar().iter().flat_map(|v| v.to_le_bytes()).collect();
    let data_path = dir.join(format!("{id}.{PROB_EXTENSION}"));
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let sidecar = ProbabilitySidecar {
        height: map.height,
        width: map.width,
        channels: map.classes,
        layout: "planar".into(),
        dtype: "f32-le".into(),
        taxonomy: taxonomy.clone(),
    };
    write_json(dir.join(format!("{id}.json")), &sidecar)
}

pub fn read_probability_map(dir: impl AsRef<Path>, id: &str) -> Result<(ProbabilityMap, ClassTaxonomy)> {
    let dir = dir.as_ref();
    let sidecar: ProbabilitySidecar = read_json(dir.join(format!("{id}.json")))?;
    if sidecar.layout != "planar" || sidecar.dtype != "f32-le" {
        return Err(Error::Format(format!(
            "unsupported probability layout {}/{}",
            sidecar.layout, sidecar.dtype
        )));
    }
    let data_path = dir.join(format!("{id}.{PROB_EXTENSION}"));
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let planar: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let map = ProbabilityMap::from_planar(sidecar.height, sidecar.width, sidecar.channels, &planar)?;
    Ok((map, sidecar.taxonomy))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
