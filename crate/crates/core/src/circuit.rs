//! Parameterized CNOT + Ry circuits over real amplitudes.
//!
//! Qubit 0 is the most significant bit of a basis index.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Ry { q: usize, slot: usize },
    Cnot { c: usize, t: usize },
}

/// Unitary block a circuit implements inside the discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    R,
    G,
    D,
    C,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::R, Role::G, Role::D, Role::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::R => "R",
            Role::G => "G",
            Role::D => "D",
            Role::C => "C",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCircuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_achieved: Option<f64>,
}

/// Ry(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]].
pub fn ry(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (0.5 * theta).sin_cos();
    [[c, -s], [s, c]]
}

/// Applies a 2×2 matrix on `q` to the rows of `m`.
pub(crate) fn apply_1q_rows(m: &mut DMatrix<f64>, n: usize, q: usize, u: &[[f64; 2]; 2]) {
    let bit = 1usize << (n - 1 - q);
    let cols = m.ncols();
    for r0 in 0..(1usize << n) {
        if r0 & bit != 0 {
            continue;
        }
        let r1 = r0 | bit;
        for c in 0..cols {
            let (a, b) = (m[(r0, c)], m[(r1, c)]);
            m[(r0, c)] = u[0][0] * a + u[0][1] * b;
            m[(r1, c)] = u[1][0] * a + u[1][1] * b;
        }
    }
}

pub(crate) fn apply_cnot_rows(m: &mut DMatrix<f64>, n: usize, c: usize, t: usize) {
    let cb = 1usize << (n - 1 - c);
    let tb = 1usize << (n - 1 - t);
    for r in 0..(1usize << n) {
        if r & cb != 0 && r & tb == 0 {
            m.swap_rows(r, r | tb);
        }
    }
}

impl ParamCircuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>, params: Vec<f64>) -> Result<Self> {
        let c = ParamCircuit {
            n_qubits,
            gates,
            params,
            role: None,
            tol_achieved: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// One Ry per qubit, all angles zero.
    pub fn ry_layer(n_qubits: usize) -> Self {
        ParamCircuit {
            n_qubits,
            gates: (0..n_qubits).map(|q| Gate::Ry { q, slot: q }).collect(),
            params: vec![0.0; n_qubits],
            role: None,
            tol_achieved: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for g in &self.gates {
            match *g {
                Gate::Ry { q, slot } => {
                    if q >= self.n_qubits || slot >= self.params.len() {
                        return Err(Error::invalid(format!("bad Ry gate {g:?}")));
                    }
                    if std::mem::replace(&mut seen[slot], true) {
                        return Err(Error::invalid(format!("parameter slot {slot} used twice")));
                    }
                }
                Gate::Cnot { c, t } => {
                    if c >= self.n_qubits || t >= self.n_qubits || c == t {
                        return Err(Error::invalid(format!("bad CNOT gate {g:?}")));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("unused parameter slot"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count()
    }

    /// Applies the circuit with angles `theta` to the rows of `m` in place.
    pub fn apply_rows(&self, theta: &[f64], m: &mut DMatrix<f64>) {
        for g in &self.gates {
            match *g {
                Gate::Ry { q, slot } => apply_1q_rows(m, self.n_qubits, q, &ry(theta[slot])),
                Gate::Cnot { c, t } => apply_cnot_rows(m, self.n_qubits, c, t),
            }
        }
    }

    /// Appends CNOT(c, t) followed by fresh Ry rotations on both qubits.
    pub fn extended(&self, c: usize, t: usize) -> Self {
        let mut out = self.clone();
        let k = out.params.len();
        out.gates.push(Gate::Cnot { c, t });
        out.gates.push(Gate::Ry { q: c, slot: k });
        out.gates.push(Gate::Ry { q: t, slot: k + 1 });
        out.params.extend([0.0, 0.0]);
        out.tol_achieved = None;
        out
    }

    /// Circuit whose unitary is the transpose of this one: reversed gate
    /// order with negated angles.
    pub fn transposed(&self) -> Self {
        let mut out = self.clone();
        out.gates.reverse();
        out.params.iter_mut().for_each(|p| *p = -*p);
        out
    }

    /// Gradient of ⟨adj, U(θ)·x0⟩ with respect to θ.
    pub fn pullback(&self, theta: &[f64], x0: &DMatrix<f64>, adj: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n_qubits;
        let mut x = x0.clone();
        self.apply_rows(theta, &mut x);
        let mut y = adj.clone();
        let mut grad = vec![0.0; self.params.len()];
        // walk backwards keeping x = (gates ≤ j) x0 and y = (gates > j)ᵀ adj
        for g in self.gates.iter().rev() {
            match *g {
                Gate::Ry { q, slot } => {
                    let th = theta[slot];
                    // undo the gate on x: x_{j-1} = Ry(-θ) x_j
                    apply_1q_rows(&mut x, n, q, &ry(-th));
                    let mut dx = x.clone();
                    let (s, c) = (0.5 * th).sin_cos();
                    apply_1q_rows(&mut dx, n, q, &[[-0.5 * s, -0.5 * c], [0.5 * c, -0.5 * s]]);
                    grad[slot] = y.dot(&dx);
                    apply_1q_rows(&mut y, n, q, &ry(-th));
                }
                Gate::Cnot { c, t } => {
                    apply_cnot_rows(&mut x, n, c, t);
                    apply_cnot_rows(&mut y, n, c, t);
                }
            }
        }
        grad
    }
}

/// Dense 2^n × 2^n matrix of the circuit.
pub fn circuit_unitary(c: &ParamCircuit, theta: &[f64]) -> Result<DMatrix<f64>> {
    if theta.len() != c.params.len() {
        return Err(Error::invalid("parameter vector length does not match the circuit"));
    }
    let mut m = DMatrix::identity(c.dim(), c.dim());
    c.apply_rows(theta, &mut m);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use rand::Rng;

    fn kron_oracle(c: &ParamCircuit, theta: &[f64]) -> DMatrix<f64> {
        let n = c.n_qubits;
        let eye = DMatrix::<f64>::identity(2, 2);
        let mut u = DMatrix::identity(1 << n, 1 << n);
        for g in &c.gates {
            let full = match *g {
                Gate::Ry { q, slot } => {
                    let r = ry(theta[slot]);
                    let rm = DMatrix::from_row_slice(2, 2, &[r[0][0], r[0][1], r[1][0], r[1][1]]);
                    (0..n).fold(DMatrix::identity(1, 1), |acc, k| acc.kronecker(if k == q { &rm } else { &eye }))
                }
                Gate::Cnot { c: ctl, t } => {
                    let dim = 1 << n;
                    let mut m = DMatrix::zeros(dim, dim);
                    for col in 0..dim {
                        let bits: Vec<usize> = (0..n).map(|k| (col >> (n - 1 - k)) & 1).collect();
                        let mut out = bits.clone();
                        if bits[ctl] == 1 {
                            out[t] ^= 1;
                        }
                        let row = out.iter().fold(0, |a, b| a * 2 + b);
                        m[(row, col)] = 1.0;
                    }
                    m
                }
            };
            u = full * u;
        }
        u
    }

    fn random_circuit(n: usize, depth: usize, seed: u64) -> ParamCircuit {
        let mut rng = seeded_rng(seed, 0);
        let mut c = ParamCircuit::ry_layer(n);
        for _ in 0..depth {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            c = c.extended(a, b);
        }
        c.params = (0..c.params.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        c
    }

    #[test]
    fn examples() {
        let empty = ParamCircuit::new(2, vec![], vec![]).unwrap();
        assert_eq!(circuit_unitary(&empty, &[]).unwrap(), DMatrix::identity(4, 4));
        let one = ParamCircuit::new(1, vec![Gate::Ry { q: 0, slot: 0 }], vec![0.0]).unwrap();
        let u = circuit_unitary(&one, &[std::f64::consts::PI]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((u - want).abs().max() < 1e-15);
    }

    #[test]
    fn matches_kronecker_oracle() {
        for seed in 0..30 {
            let c = random_circuit(3, 6, seed);
            let u = circuit_unitary(&c, &c.params).unwrap();
            assert!((&u - kron_oracle(&c, &c.params)).abs().max() < 1e-13);
            assert!((u.transpose() * &u - DMatrix::identity(8, 8)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn transpose_circuit() {
        let c = random_circuit(3, 5, 4);
        let u = circuit_unitary(&c, &c.params).unwrap();
        let t = c.transposed();
        let ut = circuit_unitary(&t, &t.params).unwrap();
        assert!((u.transpose() - ut).abs().max() < 1e-13);
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let c = random_circuit(3, 4, 9);
        let mut rng = seeded_rng(1, 1);
        let x0 = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let adj = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let f = |th: &[f64]| {
            let mut x = x0.clone();
            c.apply_rows(th, &mut x);
            adj.dot(&x)
        };
        let g = c.pullback(&c.params, &x0, &adj);
        for k in 0..c.params.len() {
            let mut p = c.params.clone();
            p[k] += 1e-6;
            let fp = f(&p);
            p[k] -= 2e-6;
            let fm = f(&p);
            assert!((g[k] - (fp - fm) / 2e-6).abs() < 1e-8);
        }
    }

    #[test]
    fn validation() {
        assert!(ParamCircuit::new(2, vec![Gate::Cnot { c: 1, t: 1 }], vec![]).is_err());
        assert!(ParamCircuit::new(2, vec![Gate::Ry { q: 0, slot: 0 }, Gate::Ry { q: 1, slot: 0 }], vec![0.0]).is_err());
        assert!(ParamCircuit::new(2, vec![Gate::Ry { q: 2, slot: 0 }], vec![0.0]).is_err());
    }

    #[test]
    fn json_layout() {
        let c = ParamCircuit::new(2, vec![Gate::Ry { q: 0, slot: 0 }, Gate::Cnot { c: 0, t: 1 }], vec![0.5]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains(r#"{"ry":{"q":0,"slot":0}}"#), "{s}");
        assert!(s.contains(r#"{"cnot":{"c":0,"t":1}}"#), "{s}");
    }
}
