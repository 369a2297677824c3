//! Uniform periodic mesh of the torus `[-1, 1]^d` and the discrete operators
//! built on face averages and jumps.
//!
//! Cells are indexed row-major (last axis fastest) with periodic wraparound.
//! Face `axis * num_cells + c` separates cell `c` ("in") from its `+axis`
//! neighbour ("out"); its unit normal is `+e_axis`.

use crate::error::{NsfError, Result};
use crate::field::{ScalarField, VectorField};

/// Length of the torus along each axis.
pub const DOMAIN_EXTENT: f64 = 2.0;

const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
    num_cells: usize,
    plus: Vec<Vec<usize>>,
    minus: Vec<Vec<usize>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

/// An interior face with its fixed orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub inner: usize,
    pub outer: usize,
}

/// Traces of a cell field on one face, relative to a chosen normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceTrace {
    pub r_in: f64,
    pub r_out: f64,
    pub axis: usize,
    /// `+1` when the normal is `+e_axis`, `-1` when it is `-e_axis`.
    pub orientation: f64,
}

impl FaceTrace {
    pub fn flipped(self) -> Self {
        FaceTrace {
            r_in: self.r_out,
            r_out: self.r_in,
            axis: self.axis,
            orientation: -self.orientation,
        }
    }

    pub fn average(&self) -> f64 {
        0.5 * (self.r_in + self.r_out)
    }

    pub fn jump(&self) -> f64 {
        self.r_out - self.r_in
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(NsfError::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 2 {
            return Err(NsfError::Config(format!("need at least 2 cells per axis, got {n}")));
        }
        let num_cells = n.pow(dim as u32);
        let mut plus = vec![vec![0; num_cells]; dim];
        let mut minus = vec![vec![0; num_cells]; dim];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            for c in 0..num_cells {
                let i = (c / stride) % n;
                let base = c - i * stride;
                plus[axis][c] = base + ((i + 1) % n) * stride;
                minus[axis][c] = base + ((i + n - 1) % n) * stride;
            }
        }
        Ok(Grid {
            dim,
            n,
            h: DOMAIN_EXTENT / n as f64,
            num_cells,
            plus,
            minus,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_faces(&self) -> usize {
        self.dim * self.num_cells
    }

    /// `|K| = h^d`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// `|σ| = h^(d-1)`.
    pub fn face_measure(&self) -> f64 {
        self.h.powi(self.dim as i32 - 1)
    }

    pub fn domain_measure(&self) -> f64 {
        DOMAIN_EXTENT.powi(self.dim as i32)
    }

    #[inline]
    pub fn neighbor_plus(&self, axis: usize, cell: usize) -> usize {
        self.plus[axis][cell]
    }

    #[inline]
    pub fn neighbor_minus(&self, axis: usize, cell: usize) -> usize {
        self.minus[axis][cell]
    }

    pub(crate) fn plus_table(&self, axis: usize) -> &[usize] {
        &self.plus[axis]
    }

    pub(crate) fn minus_table(&self, axis: usize) -> &[usize] {
        &self.minus[axis]
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rem = cell;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    /// Linear index of a (possibly out-of-range) multi-index, wrapped periodically.
    pub fn cell_index(&self, idx: &[isize]) -> usize {
        let n = self.n as isize;
        idx.iter()
            .fold(0usize, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .into_iter()
            .map(|i| -1.0 + (i as f64 + 0.5) * self.h)
            .collect()
    }

    pub fn face(&self, id: usize) -> Face {
        let axis = id / self.num_cells;
        let inner = id % self.num_cells;
        Face {
            axis,
            inner,
            outer: self.plus[axis][inner],
        }
    }

    pub fn faces(&self) -> impl Iterator<Item = Face> + '_ {
        (0..self.num_faces()).map(move |id| self.face(id))
    }

    /// Traces of `field` on `face` with respect to the face's stored normal `+e_axis`.
    pub fn trace(&self, field: &[f64], face: Face) -> FaceTrace {
        FaceTrace {
            r_in: field[face.inner],
            r_out: field[face.outer],
            axis: face.axis,
            orientation: 1.0,
        }
    }

    /// `⟨r⟩ = (r_in + r_out) / 2`.
    pub fn average(&self, field: &[f64], face: Face) -> f64 {
        self.trace(field, face).average()
    }

    /// `⟦r⟧ = r_out - r_in`.
    pub fn jump(&self, field: &[f64], face: Face) -> f64 {
        self.trace(field, face).jump()
    }

    pub fn check_scalar(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.num_cells {
            return Err(NsfError::GridMismatch(format!(
                "field has {} values, grid has {} cells",
                field.len(),
                self.num_cells
            )));
        }
        Ok(())
    }

    /// `(∇_h r)_K = Σ_{σ∈∂K} |σ|/|K| ⟨r⟩ n`, i.e. the central difference on the uniform mesh.
    pub fn gradient(&self, field: &[f64]) -> VectorField {
        let inv2h = 0.5 / self.h;
        VectorField(
            (0..self.dim)
                .map(|axis| {
                    let (p, m) = (&self.plus[axis], &self.minus[axis]);
                    ScalarField(
                        (0..self.num_cells)
                            .map(|c| (field[p[c]] - field[m[c]]) * inv2h)
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    /// `(div_h v)_K = Σ_{σ∈∂K} |σ|/|K| ⟨v⟩·n`.
    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        let inv2h = 0.5 / self.h;
        let mut out = ScalarField::zeros(self.num_cells);
        for axis in 0..self.dim {
            let comp = &v[axis];
            let (p, m) = (&self.plus[axis], &self.minus[axis]);
            for c in 0..self.num_cells {
                out[c] += (comp[p[c]] - comp[m[c]]) * inv2h;
            }
        }
        out
    }

    /// `Σ_K |K| v_K`.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.cell_measure() * field.iter().sum::<f64>()
    }

    /// Cell averages `Π_h v`, by a tensor 3-point Gauss rule in every cell.
    pub fn project<F>(&self, f: F) -> ScalarField
    where
        F: Fn(&[f64]) -> f64,
    {
        let npts = 3usize.pow(self.dim as u32);
        let half = 0.5 * self.h;
        let mut x = vec![0.0; self.dim];
        ScalarField(
            (0..self.num_cells)
                .map(|c| {
                    let center = self.cell_center(c);
                    let mut acc = 0.0;
                    for q in 0..npts {
                        let mut w = 1.0;
                        let mut rem = q;
                        for axis in 0..self.dim {
                            let k = rem % 3;
                            rem /= 3;
                            x[axis] = center[axis] + half * GAUSS3_NODES[k];
                            w *= 0.5 * GAUSS3_WEIGHTS[k];
                        }
                        acc += w * f(&x);
                    }
                    acc
                })
                .collect(),
        )
    }

    /// Samples `f` at cell centers (no averaging).
    pub fn sample_centers<F>(&self, f: F) -> ScalarField
    where
        F: Fn(&[f64]) -> f64,
    {
        ScalarField((0..self.num_cells).map(|c| f(&self.cell_center(c))).collect())
    }
}
