//! Spatial resampling expressed as separable linear maps, so every resize is a
//! pair of matrix products and differentiates through ordinary matmul.

use candle_core::{Device, Tensor};

use crate::error::Result;

/// Row-stochastic `out × inp` matrix of adaptive average pooling bins
/// `[floor(i·inp/out), ceil((i+1)·inp/out))`.
pub fn adaptive_pool_matrix(inp: usize, out: usize) -> Vec<f32> {
    let mut m = vec![0.0f32; out * inp];
    for i in 0..out {
        let start = (i * inp) / out;
        let end = ((i + 1) * inp).div_ceil(out);
        let n = (end - start) as f32;
        for j in start..end {
            m[i * inp + j] = 1.0 / n;
        }
    }
    m
}

/// `out × inp` bilinear interpolation matrix with half-pixel centres
/// (`align_corners = false`).
pub fn bilinear_matrix(inp: usize, out: usize) -> Vec<f32> {
    let mut m = vec![0.0f32; out * inp];
    let scale = inp as f64 / out as f64;
    for i in 0..out {
        let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(inp - 1);
        let i1 = (i0 + 1).min(inp - 1);
        let frac = (src - i0 as f64) as f32;
        m[i * inp + i0] += 1.0 - frac;
        m[i * inp + i1] += frac;
    }
    m
}

/// Applies `rows` (out_h × in_h) and `cols` (out_w × in_w) to the two spatial
/// dims of an `(N, C, H, W)` tensor.
pub fn separable(x: &Tensor, rows: &[f32], out_h: usize, cols: &[f32], out_w: usize, device: &Device) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let dtype = x.dtype();
    let cols_t = Tensor::from_slice(cols, (out_w, w), device)?.to_dtype(dtype)?.t()?;
    let rows_t = Tensor::from_slice(rows, (out_h, h), device)?.to_dtype(dtype)?.t()?;
    // width: (N·C·H, W) @ (W, out_w)
    let y = x.reshape((n * c * h, w))?.matmul(&cols_t.contiguous()?)?;
    // height: (N·C·out_w, H) @ (H, out_h)
    let y = y
        .reshape((n * c, h, out_w))?
        .transpose(1, 2)?
        .contiguous()?
        .reshape((n * c * out_w, h))?
        .matmul(&rows_t.contiguous()?)?;
    let y = y.reshape((n * c, out_w, out_h))?.transpose(1, 2)?.contiguous()?;
    Ok(y.reshape((n, c, out_h, out_w))?)
}

pub fn adaptive_avg_pool(x: &Tensor, out: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    separable(x, &adaptive_pool_matrix(h, out), out, &adaptive_pool_matrix(w, out), out, x.device())
}

pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    separable(x, &bilinear_matrix(h, out_h), out_h, &bilinear_matrix(w, out_w), out_w, x.device())
}

pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    resize_bilinear(x, 2 * h, 2 * w)
}
