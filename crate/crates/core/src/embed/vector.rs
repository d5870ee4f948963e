use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-9;

/// A finite embedding vector stored as 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateInput("empty embedding vector".into()));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite embedding component at {i}")));
        }
        Ok(EmbeddingVector(values))
    }

    /// Unit-norm copy of `values`.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        let v = EmbeddingVector::new(values)?;
        let n = v.norm();
        if n < ZERO_NORM {
            return Err(Error::ZeroNorm);
        }
        Ok(EmbeddingVector(v.0.iter().map(|x| (*x as f64 / n) as f32).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f32) -> Result<Self> {
        EmbeddingVector::new(self.0.iter().map(|x| x * c).collect())
    }
}

fn check_dims(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), actual: v.dim() });
    }
    Ok(())
}

/// Dot product in index order with f64 accumulation; symmetric by construction.
pub fn dot(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(u.0.iter().zip(&v.0).map(|(a, b)| (*a as f64) * (*b as f64)).sum())
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    let d = dot(u, v)?;
    let (nu, nv) = (u.norm(), v.norm());
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return Err(Error::ZeroNorm);
    }
    Ok(d / (nu * nv))
}

fn canonical(a: &EmbeddingVector, b: &EmbeddingVector) -> Ordering {
    a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Mean of the vectors, renormalized to unit length.
///
/// Inputs are summed in a canonical sorted order, so any permutation of the
/// same vectors gives a bitwise-identical result.
pub fn aggregate_avg(frames: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = frames.first().ok_or_else(|| Error::Precondition("no frame vectors to aggregate".into()))?;
    for v in frames {
        check_dims(first, v)?;
    }
    let mut sorted: Vec<&EmbeddingVector> = frames.iter().collect();
    sorted.sort_by(|a, b| canonical(a, b));
    let mut sum = vec![0.0f64; first.dim()];
    for v in sorted {
        for (s, x) in sum.iter_mut().zip(&v.0) {
            *s += *x as f64;
        }
    }
    let n = frames.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < ZERO_NORM {
        return Err(Error::ZeroNorm);
    }
    EmbeddingVector::new(mean.into_iter().map(|x| (x / norm) as f32).collect())
}
