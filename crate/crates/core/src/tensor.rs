use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Real (χ_left, d, χ_right) site tensor, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        Tensor3 {
            dims: [left, phys, right],
            data: vec![0.0; left * phys * right],
        }
    }

    pub fn from_fn(left: usize, phys: usize, right: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(left, phys, right);
        for a in 0..left {
            for s in 0..phys {
                for b in 0..right {
                    t.data[(a * phys + s) * right + b] = f(a, s, b);
                }
            }
        }
        t
    }

    #[inline]
    pub fn left(&self) -> usize {
        self.dims[0]
    }
    #[inline]
    pub fn phys(&self) -> usize {
        self.dims[1]
    }
    #[inline]
    pub fn right(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> f64 {
        self.data[(a * self.dims[1] + s) * self.dims[2] + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, b: usize, v: f64) {
        let idx = (a * self.dims[1] + s) * self.dims[2] + b;
        self.data[idx] = v;
    }

    /// The χ_left × χ_right matrix at fixed physical index `s`.
    pub fn slice(&self, s: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.left(), self.right(), |a, b| self.get(a, s, b))
    }

    pub fn slices(&self) -> Vec<DMatrix<f64>> {
        (0..self.phys()).map(|s| self.slice(s)).collect()
    }

    pub fn from_slices(slices: &[DMatrix<f64>]) -> Self {
        let (l, r) = slices[0].shape();
        Self::from_fn(l, slices.len(), r, |a, s, b| slices[s][(a, b)])
    }

    /// (χ_left·d) × χ_right matricization with row index a·d + s.
    pub fn left_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left() * self.phys(), self.right(), &self.data)
    }

    pub fn from_left_matrix(m: &DMatrix<f64>, left: usize, phys: usize) -> Self {
        assert_eq!(m.nrows(), left * phys);
        Self::from_fn(left, phys, m.ncols(), |a, s, b| m[(a * phys + s, b)])
    }

    /// χ_left × (d·χ_right) matricization with column index s·χ_right + b.
    pub fn right_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left(), self.phys() * self.right(), &self.data)
    }

    pub fn from_right_matrix(m: &DMatrix<f64>, phys: usize, right: usize) -> Self {
        assert_eq!(m.ncols(), phys * right);
        Self::from_fn(m.nrows(), phys, right, |a, s, b| m[(a, s * right + b)])
    }

    /// Contracts the right bond with `m` (χ_right × k).
    pub fn mul_right(&self, m: &DMatrix<f64>) -> Tensor3 {
        let out = self.left_matrix() * m;
        Self::from_left_matrix(&out, self.left(), self.phys())
    }

    /// Contracts the left bond with `m` (k × χ_left).
    pub fn mul_left(&self, m: &DMatrix<f64>) -> Tensor3 {
        let out = m * self.right_matrix();
        Self::from_right_matrix(&out, self.phys(), self.right())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Row-major dense array with explicit dimensions, used for file formats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseArray {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        DenseArray {
            dims: vec![m.nrows(), m.ncols()],
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Option<DMatrix<f64>> {
        match self.dims.as_slice() {
            [r, c] if r * c == self.data.len() => Some(DMatrix::from_row_slice(*r, *c, &self.data)),
            _ => None,
        }
    }

    pub fn from_tensor(t: &Tensor3) -> Self {
        DenseArray {
            dims: t.dims.to_vec(),
            data: t.data.clone(),
        }
    }

    pub fn to_tensor(&self) -> Option<Tensor3> {
        match self.dims.as_slice() {
            [a, s, b] if a * s * b == self.data.len() => Some(Tensor3 {
                dims: [*a, *s, *b],
                data: self.data.clone(),
            }),
            _ => None,
        }
    }
}
