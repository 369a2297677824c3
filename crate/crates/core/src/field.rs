//! Piecewise-constant cell fields.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// One value per cell.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(len: usize) -> Self {
        ScalarField(vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Self {
        ScalarField(vec![value; len])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        ScalarField(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for ScalarField {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(v: Vec<f64>) -> Self {
        ScalarField(v)
    }
}

/// `d` scalar components, stored component-major.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorField(pub Vec<ScalarField>);

impl VectorField {
    pub fn zeros(dim: usize, len: usize) -> Self {
        VectorField(vec![ScalarField::zeros(len); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn num_cells(&self) -> usize {
        self.0.first().map_or(0, |c| c.len())
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.0[i]
    }

    /// Values of all components at one cell.
    pub fn at(&self, cell: usize) -> Vec<f64> {
        self.0.iter().map(|c| c[cell]).collect()
    }

    /// Cellwise Euclidean norm.
    pub fn magnitude(&self) -> ScalarField {
        let n = self.num_cells();
        ScalarField(
            (0..n)
                .map(|c| self.0.iter().map(|comp| comp[c] * comp[c]).sum::<f64>().sqrt())
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(ScalarField::is_finite)
    }
}

impl Deref for VectorField {
    type Target = Vec<ScalarField>;
    fn deref(&self) -> &Vec<ScalarField> {
        &self.0
    }
}

impl DerefMut for VectorField {
    fn deref_mut(&mut self) -> &mut Vec<ScalarField> {
        &mut self.0
    }
}

/// Per-cell `d × d` tensor; component `(i, j)` lives at index `i * d + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    dim: usize,
    comps: Vec<ScalarField>,
}

impl TensorField {
    pub fn zeros(dim: usize, len: usize) -> Self {
        TensorField {
            dim,
            comps: vec![ScalarField::zeros(len); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[i * self.dim + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut ScalarField {
        &mut self.comps[i * self.dim + j]
    }

    pub fn trace(&self) -> ScalarField {
        let len = self.comps[0].len();
        let mut out = ScalarField::zeros(len);
        for i in 0..self.dim {
            for (o, v) in out.iter_mut().zip(self.get(i, i).iter()) {
                *o += v;
            }
        }
        out
    }
}
