//! Parametric scoring functions over search nodes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::NodeId;

/// Sparse feature vector `phi(v)`; indices are below the model dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn new(entries: Vec<(u32, f64)>, dim: usize) -> Result<Self> {
        for &(i, x) in &entries {
            if i as usize >= dim {
                return Err(Error::config(format!("feature index {i} out of range for dimension {dim}")));
            }
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("feature {i}")));
            }
        }
        Ok(FeatureVector { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, x)| x.abs()).sum()
    }

    /// Dense form of dimension `dim`; repeated indices accumulate.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, x) in &self.entries {
            out[i as usize] += x;
        }
        out
    }
}

/// Dense parameter vector `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParametersFile {
    dim: usize,
    values: Vec<f64>,
}

impl Parameters {
    pub fn zeros(dim: usize) -> Self {
        Parameters { values: vec![0.0; dim] }
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameters".into()));
        }
        Ok(Parameters { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Inner product with a sparse vector.
    pub fn dot(&self, phi: &FeatureVector) -> Result<f64> {
        let mut acc = 0.0;
        for &(i, x) in phi.entries() {
            let w = self
                .values
                .get(i as usize)
                .ok_or_else(|| Error::config(format!("feature index {i} out of range for dimension {}", self.dim())))?;
            acc += w * x;
        }
        Ok(acc)
    }

    fn dot_in_range(&self, phi: &FeatureVector) -> f64 {
        phi.entries().iter().map(|&(i, x)| self.values[i as usize] * x).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ParametersFile {
            dim: self.dim(),
            values: self.values.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParametersFile = serde_json::from_str(text)?;
        if file.dim != file.values.len() {
            return Err(Error::config(format!(
                "parameter header says {} but {} values follow",
                file.dim,
                file.values.len()
            )));
        }
        Self::from_vec(file.values)
    }

    /// Little-endian `u64` dimension followed by the `f64` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dim());
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header: [u8; 8] = bytes
            .get(..8)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| Error::config("parameter blob shorter than its header"))?;
        let dim = u64::from_le_bytes(header) as usize;
        let body = &bytes[8..];
        if body.len() != dim * 8 {
            return Err(Error::config(format!(
                "parameter blob holds {} bytes, expected {}",
                body.len(),
                dim * 8
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vec(values)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Task-supplied feature function `phi(v)`.
pub trait FeatureMap {
    fn dim(&self) -> usize;
    fn features(&self, v: NodeId) -> FeatureVector;
}

/// A scoring function `s(v, theta)` with its gradient in `theta`.
pub trait Scorer {
    fn score(&self, v: NodeId) -> f64;
    fn score_gradient(&self, v: NodeId) -> FeatureVector;
}

/// `s(v, theta) = theta . phi(v)`.
pub struct LinearScorer<'a, F: ?Sized> {
    params: &'a Parameters,
    features: &'a F,
}

impl<'a, F: FeatureMap + ?Sized> LinearScorer<'a, F> {
    pub fn new(params: &'a Parameters, features: &'a F) -> Result<Self> {
        if params.dim() != features.dim() {
            return Err(Error::config(format!(
                "parameter dimension {} does not match feature dimension {}",
                params.dim(),
                features.dim()
            )));
        }
        Ok(LinearScorer { params, features })
    }

    pub fn params(&self) -> &Parameters {
        self.params
    }
}

impl<F: FeatureMap + ?Sized> Scorer for LinearScorer<'_, F> {
    fn score(&self, v: NodeId) -> f64 {
        self.params.dot_in_range(&self.features.features(v))
    }

    fn score_gradient(&self, v: NodeId) -> FeatureVector {
        self.features.features(v)
    }
}
