//! UperNetPlus: pyramid pooling on the coarsest level, FPN-style top-down
//! merging, and progressive 2× upsampling back to input resolution.

use candle_core::Tensor;
use rand::Rng;

use crate::encoder::FeaturePyramid;
use crate::error::{Error, Result};
use crate::params::{Conv2d, Init, ParamStore};
use crate::resample::{adaptive_avg_pool, resize_bilinear, upsample2x};

/// Pooling grid sizes of the pyramid pooling module.
pub const PPM_GRIDS: [usize; 4] = [1, 2, 3, 6];

pub struct UperNetPlus {
    ppm: Vec<Conv2d>,
    ppm_fuse: Conv2d,
    laterals: Vec<Conv2d>,
    smooth: Conv2d,
    refine: [Conv2d; 2],
    in_widths: [usize; 4],
    width: usize,
    embed_dim: usize,
}

impl UperNetPlus {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        in_widths: [usize; 4],
        width: usize,
        embed_dim: usize,
    ) -> Result<Self> {
        let top = in_widths[3];
        let ppm = PPM_GRIDS
            .iter()
            .map(|g| Conv2d::new(store, rng, &format!("ppm.{g}"), top, width, 1, 1, Init::Relu))
            .collect::<Result<Vec<_>>>()?;
        let ppm_fuse = Conv2d::new(store, rng, "ppm.fuse", top + PPM_GRIDS.len() * width, width, 3, 1, Init::Relu)?;
        let laterals = in_widths[..3]
            .iter()
            .enumerate()
            .map(|(l, &c)| Conv2d::new(store, rng, &format!("lateral{l}"), c, width, 1, 1, Init::Linear))
            .collect::<Result<Vec<_>>>()?;
        let smooth = Conv2d::new(store, rng, "smooth", width, width, 3, 1, Init::Relu)?;
        let refine = [
            Conv2d::new(store, rng, "up0", width, width, 3, 1, Init::Relu)?,
            Conv2d::new(store, rng, "up1", width, embed_dim, 3, 1, Init::Linear)?,
        ];
        Ok(UperNetPlus {
            ppm,
            ppm_fuse,
            laterals,
            smooth,
            refine,
            in_widths,
            width,
            embed_dim,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Decodes a pyramid into `(N, D, 4·H_0, 4·W_0)` features.
    pub fn forward(&self, pyramid: &FeaturePyramid) -> Result<Tensor> {
        let widths = pyramid.widths();
        if widths != self.in_widths {
            return Err(Error::Shape(format!(
                "pyramid widths {widths:?}, decoder expects {:?}",
                self.in_widths
            )));
        }
        let c4 = &pyramid.levels[3];
        let (_, _, h4, w4) = c4.dims4()?;
        let mut branches = vec![c4.clone()];
        for (conv, &g) in self.ppm.iter().zip(&PPM_GRIDS) {
            let pooled = conv.forward(&adaptive_avg_pool(c4, g)?)?.relu()?;
            branches.push(resize_bilinear(&pooled, h4, w4)?);
        }
        let mut top = self.ppm_fuse.forward(&Tensor::cat(&branches, 1)?)?.relu()?;

        for l in (0..3).rev() {
            let lateral = self.laterals[l].forward(&pyramid.levels[l])?;
            top = (upsample2x(&top)? + lateral)?;
        }
        let mut x = self.smooth.forward(&top)?.relu()?;
        x = self.refine[0].forward(&upsample2x(&x)?)?.relu()?;
        self.refine[1].forward(&upsample2x(&x)?)
    }
}
