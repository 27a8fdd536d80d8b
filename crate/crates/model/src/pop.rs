//! Orthogonal-prototype classifier: cosine scoring, residual projection onto
//! the orthogonal complement of the base prototypes, and the orthogonality
//! penalty.
//!
//! Feature tensors are `(N, D, H, W)`; banks are `(K, D)` with row order
//! background, base ids, novel ids.

use candle_core::{DType, Tensor, D};
use segland_core::{LabelMap, ProbabilityMap};

use crate::error::{Error, Result};

/// Floor applied to vector norms before division.
pub const NORM_EPS: f64 = 1e-12;

/// Prototype rows shorter than this cannot span a basis direction.
pub const DEGENERATE_NORM: f64 = 1e-8;

fn check_dims(features: &Tensor, bank: &Tensor) -> Result<(usize, usize)> {
    let (_, d, _, _) = features.dims4()?;
    let (k, dp) = bank.dims2()?;
    if d != dp {
        return Err(Error::DimensionMismatch {
            features: d,
            prototypes: dp,
        });
    }
    Ok((k, d))
}

/// Divides every pixel vector by `max(‖f‖, NORM_EPS)`.
pub fn normalize_features(features: &Tensor) -> Result<Tensor> {
    let norm = features.sqr()?.sum_keepdim(1)?.sqrt()?.clamp(NORM_EPS, f64::INFINITY)?;
    Ok(features.broadcast_div(&norm)?)
}

fn normalize_row(row: &Tensor) -> Result<Tensor> {
    let norm = row.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?.clamp(NORM_EPS, f64::INFINITY)?;
    Ok(row.broadcast_div(&norm)?)
}

/// Scores normalized features against each row of `bank` separately, so a
/// class's logit never depends on which other rows are present.
fn score_rows(unit_features: &Tensor, bank: &Tensor, temperature: f64) -> Result<Vec<Tensor>> {
    let (k, d) = bank.dims2()?;
    (0..k)
        .map(|i| {
            let p = normalize_row(&bank.narrow(0, i, 1)?)?.reshape((1, d, 1, 1))?;
            Ok((unit_features.broadcast_mul(&p)?.sum_keepdim(1)? / temperature)?)
        })
        .collect()
}

/// Cosine similarity over temperature: `(N, D, H, W) × (K, D) → (N, K, H, W)`.
/// Zero feature or prototype vectors score 0.
pub fn score_classes(features: &Tensor, bank: &Tensor, temperature: f64) -> Result<Tensor> {
    check_dims(features, bank)?;
    let unit = normalize_features(features)?;
    Ok(Tensor::cat(&score_rows(&unit, bank, temperature)?, 1)?)
}

/// Orthonormal basis (row-major `r × D`, f64) of the span of `rows`, by
/// modified Gram–Schmidt. Rows that are linearly dependent on earlier ones
/// add no direction.
pub fn orthonormal_basis(rows: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (i, row) in rows.chunks(dim).enumerate() {
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 < DEGENERATE_NORM {
            return Err(Error::DegenerateBasis(i));
        }
        let mut v = row.to_vec();
        for q in &basis {
            let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Ok(basis.concat())
}

fn tensor_rows_f64(t: &Tensor) -> Result<(Vec<f64>, usize)> {
    let (_, d) = t.dims2()?;
    Ok((t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?, d))
}

/// Orthonormal basis of the base prototypes as a `(r, D)` tensor in `dtype`.
pub fn base_basis(base_prototypes: &Tensor, dtype: DType) -> Result<Tensor> {
    let (rows, d) = tensor_rows_f64(base_prototypes)?;
    let q = orthonormal_basis(&rows, d)?;
    let r = q.len() / d.max(1);
    Ok(Tensor::from_vec(q, (r, d), base_prototypes.device())?.to_dtype(dtype)?)
}

/// Removes the component of every pixel vector lying in the span of the base
/// prototypes: `r = f − Σ_b ⟨f, q_b⟩ q_b` with `q` orthonormalized.
pub fn project_residual(features: &Tensor, base_prototypes: &Tensor) -> Result<Tensor> {
    check_dims(features, base_prototypes)?;
    let q = base_basis(base_prototypes, features.dtype())?;
    project_onto_complement(features, &q)
}

/// [`project_residual`] with a precomputed orthonormal basis.
pub fn project_onto_complement(features: &Tensor, basis: &Tensor) -> Result<Tensor> {
    let (n, d, h, w) = features.dims4()?;
    if basis.dim(0)? == 0 {
        return Ok(features.clone());
    }
    let flat = features.reshape((n, d, h * w))?;
    let coef = basis.unsqueeze(0)?.broadcast_matmul(&flat)?; // (N, r, HW)
    let span = basis.t()?.unsqueeze(0)?.broadcast_matmul(&coef)?; // (N, D, HW)
    Ok((flat - span)?.reshape((n, d, h, w))?)
}

/// Sum of squared cosines over unordered pairs of rows.
pub fn orthogonality_loss(bank: &Tensor) -> Result<Tensor> {
    let (k, _) = bank.dims2()?;
    if k < 2 {
        return Err(Error::TooFewPrototypes(k));
    }
    let norms = bank.sqr()?.sum_keepdim(1)?.sqrt()?;
    let host = norms.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    if let Some(i) = host.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::Degenerate(i));
    }
    let unit = bank.broadcast_div(&norms)?;
    let gram = unit.matmul(&unit.t()?)?;
    let mask: Vec<f64> = (0..k * k).map(|i| if i % k > i / k { 1.0 } else { 0.0 }).collect();
    let mask = Tensor::from_vec(mask, (k, k), bank.device())?.to_dtype(bank.dtype())?;
    Ok((gram.sqr()? * mask)?.sum_all()?)
}

/// Phase-aware scoring. Background and base rows use [`score_classes`];
/// novel rows score the residual of the unit feature outside the base span,
/// `⟨P⊥ f̂, p̂_n⟩ / τ`, so they only respond to what the base classes do not
/// explain.
pub struct PopScorer {
    pub num_base: usize,
    pub temperature: f64,
    basis: Option<Tensor>,
}

impl PopScorer {
    /// `bank` holds `1 + num_base + novel` rows.
    pub fn new(bank: &Tensor, num_base: usize, temperature: f64) -> Result<Self> {
        let (k, _) = bank.dims2()?;
        if k < 1 + num_base {
            return Err(Error::Shape(format!("bank has {k} rows for {num_base} base classes")));
        }
        let basis = if k > 1 + num_base && num_base > 0 {
            Some(base_basis(&bank.narrow(0, 1, num_base)?, bank.dtype())?)
        } else {
            None
        };
        Ok(PopScorer {
            num_base,
            temperature,
            basis,
        })
    }

    /// Unit features and their residuals; both are constant for a frozen
    /// extractor, so callers may cache them.
    pub fn prepare(&self, features: &Tensor) -> Result<(Tensor, Tensor)> {
        let unit = normalize_features(features)?;
        let residual = match &self.basis {
            Some(q) => project_onto_complement(&unit, &q.to_dtype(unit.dtype())?)?,
            None => unit.clone(),
        };
        Ok((unit, residual))
    }

    pub fn logits_prepared(&self, unit: &Tensor, residual: &Tensor, bank: &Tensor) -> Result<Tensor> {
        check_dims(unit, bank)?;
        let (k, _) = bank.dims2()?;
        let known = 1 + self.num_base;
        let mut cols = score_rows(unit, &bank.narrow(0, 0, known)?, self.temperature)?;
        if k > known {
            cols.extend(score_rows(residual, &bank.narrow(0, known, k - known)?, self.temperature)?);
        }
        Ok(Tensor::cat(&cols, 1)?)
    }

    pub fn logits(&self, features: &Tensor, bank: &Tensor) -> Result<Tensor> {
        check_dims(features, bank)?;
        let (unit, residual) = self.prepare(features)?;
        self.logits_prepared(&unit, &residual, bank)
    }
}

/// Per-pixel softmax and argmax of `(N, K, H, W)` logits, one pair per image.
/// The argmax is taken over logits with ties going to the lowest class id.
pub fn predict(logits: &Tensor) -> Result<Vec<(ProbabilityMap, LabelMap)>> {
    let (n, k, h, w) = logits.dims4()?;
    let host = logits.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    let hw = h * w;
    let mut out = Vec::with_capacity(n);
    for img in host.chunks(k * hw) {
        let mut probs = vec![0.0f32; hw * k];
        let mut labels = vec![0u8; hw];
        let mut e = vec![0.0f64; k];
        for p in 0..hw {
            let mut best = 0;
            for c in 1..k {
                if img[c * hw + p] > img[best * hw + p] {
                    best = c;
                }
            }
            let m = img[best * hw + p];
            let mut z = 0.0;
            for c in 0..k {
                e[c] = (img[c * hw + p] - m).exp();
                z += e[c];
            }
            for c in 0..k {
                probs[p * k + c] = (e[c] / z) as f32;
            }
            labels[p] = best as u8;
        }
        out.push((ProbabilityMap::new(h, w, k, probs)?, LabelMap::new(h, w, labels)?));
    }
    Ok(out)
}
