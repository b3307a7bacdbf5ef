//! Compiled Lindblad right-hand side.
//!
//! The generator is rewritten as
//! `dρ/dt = −i(H_nh ρ − ρ H_nh†) + Σ_k J_k ρ J_k†` with
//! `J_k = √rate_k · L_k` and `H_nh = H − (i/2) Σ_k J_k†J_k`, and every
//! operator is stored as a list of its non-zero entries. The engineered
//! jumps, ladder operators and exchange Hamiltonians of this crate have a
//! handful of non-zeros per row, so the products cost O(nnz·d) instead of
//! O(d³). States are column-major `d×d` blocks.

use crate::fock::{Matrix, C64, ZERO};

#[derive(Clone, Debug, Default)]
pub(crate) struct Triplets {
    entries: Vec<(usize, usize, C64)>,
}

impl Triplets {
    pub(crate) fn from_dense(m: &Matrix) -> Self {
        let mut entries = Vec::new();
        // row-major order keeps the accumulation order fixed
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != ZERO {
                    entries.push((r, c, v));
                }
            }
        }
        Self { entries }
    }

    pub(crate) fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Lindbladian prepared for repeated application.
#[derive(Clone, Debug)]
pub struct CompiledLindbladian {
    dim: usize,
    h_nh: Triplets,
    jumps: Vec<Triplets>,
}

impl CompiledLindbladian {
    /// `hamiltonian` and `jumps` (already scaled by `√rate`) are dense
    /// `d×d` matrices.
    pub(crate) fn new(hamiltonian: &Matrix, scaled_jumps: &[Matrix]) -> Self {
        let dim = hamiltonian.nrows();
        let mut h_nh = hamiltonian.clone();
        let half_i = C64::new(0.0, 0.5);
        let mut jumps = Vec::with_capacity(scaled_jumps.len());
        for j in scaled_jumps {
            h_nh -= (j.adjoint() * j) * half_i;
            jumps.push(Triplets::from_dense(j));
        }
        Self { dim, h_nh: Triplets::from_dense(&h_nh), jumps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn has_jumps(&self) -> bool {
        self.jumps.iter().any(|j| j.nnz() > 0)
    }

    pub(crate) fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// `out = L[ρ]` for one column-major block; `scratch` holds `d²` entries.
    pub(crate) fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim;
        out.fill(ZERO);
        let minus_i = C64::new(0.0, -1.0);
        let plus_i = C64::new(0.0, 1.0);
        for &(r, c, v) in &self.h_nh.entries {
            let w = minus_i * v;
            for j in 0..d {
                out[r + j * d] += w * rho[c + j * d];
            }
            let w = plus_i * v.conj();
            let (src, dst) = (c * d, r * d);
            for i in 0..d {
                out[dst + i] += w * rho[src + i];
            }
        }
        for jump in &self.jumps {
            scratch.fill(ZERO);
            for &(r, c, v) in &jump.entries {
                for j in 0..d {
                    scratch[r + j * d] += v * rho[c + j * d];
                }
            }
            for &(r, c, v) in &jump.entries {
                let w = v.conj();
                let (src, dst) = (c * d, r * d);
                for i in 0..d {
                    out[dst + i] += w * scratch[src + i];
                }
            }
        }
    }

    /// `out = −i H_nh ψ`, the no-jump drift of a state vector.
    pub(crate) fn drift(&self, psi: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        let minus_i = C64::new(0.0, -1.0);
        for &(r, c, v) in &self.h_nh.entries {
            out[r] += minus_i * v * psi[c];
        }
    }

    /// `out = J_k ψ`.
    pub(crate) fn apply_jump(&self, k: usize, psi: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        for &(r, c, v) in &self.jumps[k].entries {
            out[r] += v * psi[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, d: usize, density: f64) -> Matrix {
        Matrix::from_fn(d, d, |_, _| {
            if rng.random::<f64>() < density {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                ZERO
            }
        })
    }

    #[test]
    fn matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 6;
        let h0 = random(&mut rng, d, 0.5);
        let h = &h0 + h0.adjoint();
        let jumps = vec![random(&mut rng, d, 0.3), random(&mut rng, d, 0.3)];
        let rho = random(&mut rng, d, 1.0);
        let k = CompiledLindbladian::new(&h, &jumps);
        let mut out = vec![ZERO; d * d];
        let mut scratch = vec![ZERO; d * d];
        k.apply(rho.as_slice(), &mut out, &mut scratch);
        let i = C64::new(0.0, 1.0);
        let mut expected = (&h * &rho - &rho * &h) * (-i);
        for j in &jumps {
            let jd = j.adjoint();
            expected += j * &rho * &jd - (&jd * j * &rho + &rho * &jd * j) * C64::new(0.5, 0.0);
        }
        let got = Matrix::from_column_slice(d, d, &out);
        assert!((got - expected).camax() < 1e-12);
    }

    #[test]
    fn drift_is_non_hermitian_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 5;
        let h0 = random(&mut rng, d, 0.6);
        let h = &h0 + h0.adjoint();
        let j = random(&mut rng, d, 0.4);
        let k = CompiledLindbladian::new(&h, std::slice::from_ref(&j));
        let psi: Vec<C64> = (0..d).map(|n| C64::new(n as f64, 1.0)).collect();
        let mut out = vec![ZERO; d];
        k.drift(&psi, &mut out);
        let hnh = &h - (j.adjoint() * &j) * C64::new(0.0, 0.5);
        let v = nalgebra::DVector::from_column_slice(&psi);
        let expected = (hnh * v) * C64::new(0.0, -1.0);
        for n in 0..d {
            assert!((out[n] - expected[n]).norm() < 1e-12);
        }
    }
}
