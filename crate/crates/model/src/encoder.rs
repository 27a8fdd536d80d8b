//! Encoder interface, the reference convolutional pyramid, and the arch registry.

use candle_core::Tensor;
use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{Conv2d, Init, ParamStore};

/// Output strides of the four pyramid levels.
pub const STRIDES: [usize; 4] = [4, 8, 16, 32];

/// Four feature maps at strides 4/8/16/32, finest first, each `(N, C_l, H_l, W_l)`.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<Tensor>) -> Result<Self> {
        if levels.len() != 4 {
            return Err(Error::Shape(format!("pyramid has {} levels, expected 4", levels.len())));
        }
        let (n, _, mut h, mut w) = levels[0].dims4()?;
        for (l, t) in levels.iter().enumerate().skip(1) {
            let (nl, _, hl, wl) = t.dims4()?;
            if nl != n || hl * 2 != h || wl * 2 != w {
                return Err(Error::Shape(format!(
                    "level {l} is {hl}×{wl}, expected {}×{} (half of level {})",
                    h / 2,
                    w / 2,
                    l - 1
                )));
            }
            (h, w) = (hl, wl);
        }
        Ok(FeaturePyramid { levels })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.levels.iter().map(|t| t.dims()[1]).collect()
    }
}

/// A backbone producing a [`FeaturePyramid`] from a normalized `(N, 3, H, W)` batch.
pub trait Encoder: Send + Sync {
    fn forward(&self, x: &Tensor) -> Result<FeaturePyramid>;
    fn widths(&self) -> [usize; 4];
}

/// Plain strided-conv pyramid: a two-conv stem to stride 4, then one
/// downsampling conv and one refinement conv per further stage.
pub struct ReferenceEncoder {
    stages: Vec<[Conv2d; 2]>,
    widths: [usize; 4],
}

impl ReferenceEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, widths: [usize; 4]) -> Result<Self> {
        let mut stages = Vec::with_capacity(4);
        let mut c_in = 3;
        for (s, &c) in widths.iter().enumerate() {
            let second_stride = if s == 0 { 2 } else { 1 };
            let a = Conv2d::new(store, rng, &format!("stage{s}.0"), c_in, c, 3, 2, Init::Relu)?;
            let b = Conv2d::new(store, rng, &format!("stage{s}.1"), c, c, 3, second_stride, Init::Relu)?;
            stages.push([a, b]);
            c_in = c;
        }
        Ok(ReferenceEncoder { stages, widths })
    }
}

impl Encoder for ReferenceEncoder {
    fn forward(&self, x: &Tensor) -> Result<FeaturePyramid> {
        let mut levels = Vec::with_capacity(4);
        let mut h = x.clone();
        for [a, b] in &self.stages {
            h = a.forward(&h)?.relu()?;
            h = b.forward(&h)?.relu()?;
            levels.push(h.clone());
        }
        FeaturePyramid::new(levels)
    }

    fn widths(&self) -> [usize; 4] {
        self.widths
    }
}

/// Registered encoder architectures and their stage widths.
pub const ARCHS: &[(&str, [usize; 4])] = &[
    ("ref", [32, 64, 128, 256]),
    ("ref-small", [16, 32, 64, 128]),
    ("ref-tiny", [8, 16, 32, 64]),
    ("ref-wide-tiny", [12, 24, 48, 96]),
];

pub fn arch_widths(arch: &str) -> Result<[usize; 4]> {
    ARCHS
        .iter()
        .find(|(name, _)| *name == arch)
        .map(|(_, w)| *w)
        .ok_or_else(|| Error::UnknownArch(arch.to_string()))
}

pub fn is_registered(arch: &str) -> bool {
    arch_widths(arch).is_ok()
}

pub fn build_encoder<R: Rng + ?Sized>(arch: &str, store: &mut ParamStore, rng: &mut R) -> Result<Box<dyn Encoder>> {
    let widths = arch_widths(arch)?;
    Ok(Box::new(ReferenceEncoder::new(store, rng, widths)?))
}
