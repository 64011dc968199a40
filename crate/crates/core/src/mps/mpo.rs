use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Op2 = [[f64; 2]; 2];

pub const IDENTITY: Op2 = [[1.0, 0.0], [0.0, 1.0]];
pub const SIGMA_X: Op2 = [[0.0, 1.0], [1.0, 0.0]];
pub const SIGMA_Z: Op2 = [[1.0, 0.0], [0.0, -1.0]];

fn scaled(op: Op2, c: f64) -> Op2 {
    [[op[0][0] * c, op[0][1] * c], [op[1][0] * c, op[1][1] * c]]
}

/// One MPO site tensor W[a][s][s'][b] with d = 2.
#[derive(Clone, Debug, PartialEq)]
pub struct MpoTensor {
    pub wl: usize,
    pub wr: usize,
    pub data: Vec<f64>,
}

impl MpoTensor {
    pub fn zeros(wl: usize, wr: usize) -> Self {
        MpoTensor {
            wl,
            wr,
            data: vec![0.0; wl * wr * 4],
        }
    }

    #[inline]
    fn idx(&self, a: usize, s: usize, sp: usize, b: usize) -> usize {
        ((a * 2 + s) * 2 + sp) * self.wr + b
    }

    pub fn get(&self, a: usize, s: usize, sp: usize, b: usize) -> f64 {
        self.data[self.idx(a, s, sp, b)]
    }

    pub fn block(&self, a: usize, b: usize) -> Op2 {
        let mut op = [[0.0; 2]; 2];
        for (s, row) in op.iter_mut().enumerate() {
            for (sp, v) in row.iter_mut().enumerate() {
                *v = self.get(a, s, sp, b);
            }
        }
        op
    }

    pub fn set_block(&mut self, a: usize, b: usize, op: Op2) {
        for (s, row) in op.iter().enumerate() {
            for (sp, v) in row.iter().enumerate() {
                let i = self.idx(a, s, sp, b);
                self.data[i] = *v;
            }
        }
    }

    /// Nonzero operator blocks as (a, b, op).
    pub fn blocks(&self) -> Vec<(usize, usize, Op2)> {
        let mut out = Vec::new();
        for a in 0..self.wl {
            for b in 0..self.wr {
                let op = self.block(a, b);
                if op.iter().flatten().any(|v| *v != 0.0) {
                    out.push((a, b, op));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    pub tensors: Vec<MpoTensor>,
}

impl Mpo {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Contracts the MPO into a dense 2^F × 2^F matrix (site 0 is the most
    /// significant bit). Only sensible for small F.
    pub fn to_dense(&self) -> DMatrix<f64> {
        // rows: partial operator blocks indexed by the open right bond.
        let mut partial: Vec<DMatrix<f64>> = vec![DMatrix::from_element(1, 1, 1.0)];
        for t in &self.tensors {
            let dim = partial[0].nrows();
            let mut next = vec![DMatrix::zeros(dim * 2, dim * 2); t.wr];
            for (a, b, op) in t.blocks() {
                let p = &partial[a];
                for s in 0..2 {
                    for sp in 0..2 {
                        let c = op[s][sp];
                        if c == 0.0 {
                            continue;
                        }
                        for i in 0..dim {
                            for j in 0..dim {
                                next[b][(i * 2 + s, j * 2 + sp)] += c * p[(i, j)];
                            }
                        }
                    }
                }
            }
            partial = next;
        }
        partial.swap_remove(0)
    }
}

/// TFIM Hamiltonian H = Σ σᶻσᶻ − h Σ σˣ − h_z2 Π σˣ on an open chain.
///
/// Bond channel order is (done, σᶻ pending, start, σˣ string); the bulk
/// tensor without the string channel is lower triangular with bond dim 3.
/// The string channel only exists when `h_z2 > 0`.
pub fn build_tfim_mpo(sites: usize, h: f64, h_z2: f64) -> Result<Mpo> {
    if sites < 2 {
        return Err(Error::invalid(format!("TFIM MPO needs at least 2 sites, got {sites}")));
    }
    if !(h >= 0.0) || !(h_z2 >= 0.0) {
        return Err(Error::invalid("field strengths must be non-negative"));
    }
    let with_string = h_z2 > 0.0;
    let w = if with_string { 4 } else { 3 };

    let mut bulk = MpoTensor::zeros(w, w);
    bulk.set_block(0, 0, IDENTITY);
    bulk.set_block(1, 0, SIGMA_Z);
    bulk.set_block(2, 0, scaled(SIGMA_X, -h));
    bulk.set_block(2, 1, SIGMA_Z);
    bulk.set_block(2, 2, IDENTITY);
    if with_string {
        bulk.set_block(3, 3, SIGMA_X);
    }

    let mut first = MpoTensor::zeros(1, w);
    for b in 0..3 {
        first.set_block(0, b, bulk.block(2, b));
    }
    if with_string {
        first.set_block(0, 3, scaled(SIGMA_X, -h_z2));
    }

    let mut last = MpoTensor::zeros(w, 1);
    for a in 0..3 {
        last.set_block(a, 0, bulk.block(a, 0));
    }
    if with_string {
        last.set_block(3, 0, SIGMA_X);
    }

    let mut tensors = Vec::with_capacity(sites);
    tensors.push(first);
    for _ in 1..sites - 1 {
        tensors.push(bulk.clone());
    }
    tensors.push(last);
    Ok(Mpo { tensors })
}
