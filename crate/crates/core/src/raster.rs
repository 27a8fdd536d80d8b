//! In-memory rasters: RGB images, label maps, binary masks and probability maps.

use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;
use crate::IGNORE;

/// Row-major H×W×3 image of 8-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "image buffer of {} bytes for {height}×{width}×3",
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Image {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Row-major H×W map of class ids; 255 marks ignored pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "label buffer of {} values for {height}×{width}",
                data.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, id: u8) -> Self {
        LabelMap {
            height,
            width,
            data: vec![id; height * width],
        }
    }

    /// Builds a map from nested rows; panics on ragged input.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(height * width);
        for r in rows {
            assert_eq!(r.as_ref().len(), width, "ragged label rows");
            data.extend_from_slice(r.as_ref());
        }
        LabelMap {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, id: u8) {
        self.data[row * self.width + col] = id;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.width.max(1)).map(|r| r.to_vec()).collect()
    }

    /// First value that is neither a taxonomy id nor the ignore value.
    pub fn first_foreign(&self, taxonomy: &ClassTaxonomy) -> Option<u8> {
        self.data
            .iter()
            .copied()
            .find(|&v| v != IGNORE && !taxonomy.contains(v))
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        LabelMap {
            height,
            width,
            data,
        }
    }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    /// Builds a mask from rows of 0/1 values.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Self {
        let labels = LabelMap::from_rows(rows);
        Mask {
            height: labels.height,
            width: labels.width,
            data: labels.data.iter().map(|&v| v != 0).collect(),
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Mask {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.data
            .chunks(self.width.max(1))
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }
}

/// Per-pixel class posteriors, stored H×W×K (class index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub data: Vec<f32>,
}

/// Tolerance on the per-pixel sum of a probability map.
pub const SIMPLEX_TOLERANCE: f32 = 1e-5;

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * classes {
            return Err(Error::Shape(format!(
                "probability buffer of {} values for {height}×{width}×{classes}",
                data.len()
            )));
        }
        Ok(ProbabilityMap {
            height,
            width,
            classes,
            data,
        })
    }

    /// Builds a map from a channel-planar (K×H×W) buffer.
    pub fn from_planar(height: usize, width: usize, classes: usize, planar: &[f32]) -> Result<Self> {
        if planar.len() != height * width * classes {
            return Err(Error::Shape(format!(
                "planar buffer of {} values for {classes}×{height}×{width}",
                planar.len()
            )));
        }
        let hw = height * width;
        let mut data = vec![0.0; planar.len()];
        for k in 0..classes {
            for p in 0..hw {
                data[p * classes + k] = planar[k * hw + p];
            }
        }
        Ok(ProbabilityMap {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn to_planar(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut planar = vec![0.0; self.data.len()];
        for p in 0..hw {
            for k in 0..self.classes {
                planar[k * hw + p] = self.data[p * self.classes + k];
            }
        }
        planar
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width + col) * self.classes;
        &self.data[i..i + self.classes]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.classes)
    }

    /// Largest deviation of a per-pixel sum from 1, or `None` when an entry
    /// falls outside [0, 1].
    pub fn simplex_error(&self) -> Option<f32> {
        let mut worst = 0.0f32;
        for px in self.data.chunks(self.classes.max(1)) {
            if px.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return None;
            }
            let s: f32 = px.iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
        Some(worst)
    }

    pub fn satisfies_simplex(&self) -> bool {
        self.simplex_error().is_some_and(|e| e <= SIMPLEX_TOLERANCE)
    }

    /// Argmax per pixel; ties go to the lowest class index.
    pub fn argmax(&self) -> LabelMap {
        let data = self
            .data
            .chunks(self.classes.max(1))
            .map(|px| {
                let mut best = 0;
                for (k, &p) in px.iter().enumerate() {
                    if p > px[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        let mut data = Vec::with_capacity(height * width * self.classes);
        for r in top..top + height {
            let start = (r * self.width + left) * self.classes;
            data.extend_from_slice(&self.data[start..start + width * self.classes]);
        }
        ProbabilityMap {
            height,
            width,
            classes: self.classes,
            data,
        }
    }
}

/// One raster tile: image plus optional label map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub id: String,
    pub image: Image,
    pub label: Option<LabelMap>,
}

impl Tile {
    pub fn new(id: impl Into<String>, image: Image, label: Option<LabelMap>) -> Result<Self> {
        let id = id.into();
        if let Some(label) = &label {
            if label.dims() != image.dims() {
                return Err(Error::Shape(format!(
                    "tile `{id}`: image {:?} vs label {:?}",
                    image.dims(),
                    label.dims()
                )));
            }
        }
        Ok(Tile { id, image, label })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn require_label(&self) -> Result<&LabelMap> {
        self.label
            .as_ref()
            .ok_or_else(|| Error::MissingLabel(self.id.clone()))
    }

    /// Checks every label value against the taxonomy.
    pub fn validate_labels(&self, taxonomy: &ClassTaxonomy) -> Result<()> {
        if let Some(label) = &self.label {
            if let Some(value) = label.first_foreign(taxonomy) {
                return Err(Error::BadValue {
                    tile: self.id.clone(),
                    value,
                });
            }
        }
        Ok(())
    }
}
