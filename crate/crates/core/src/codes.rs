//! Bosonic codewords, engineered recovery operators, logical Paulis and
//! Knill–Laflamme diagnostics.
//!
//! Ansatz codes put `|0_L⟩` on the `|4n⟩` ladder and `|1_L⟩` on the
//! `|4n+2⟩` ladder with real coefficients. A `truncation` of `N` photons
//! means a mode of `N + 1` Fock levels.

use std::f64::consts::SQRT_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation, number, Ket, Matrix, Operator, SpaceSignature, C64, ONE, ZERO};

const COEFF_NORM_TOL: f64 = 1e-10;
const ORTHOGONALITY_TOL: f64 = 1e-10;
const DISTANCE_THRESHOLD: f64 = 1e-10;
const SQRT3_PHOTON_TOL: f64 = 1e-6;

/// Two orthonormal logical codewords in one bosonic mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodePair {
    zero_logical: Ket,
    one_logical: Ket,
}

impl CodePair {
    pub fn new(zero_logical: Ket, one_logical: Ket) -> Result<Self> {
        if zero_logical.space() != one_logical.space() {
            return Err(Error::DimensionMismatch {
                expected: zero_logical.space().factors().to_vec(),
                found: one_logical.space().factors().to_vec(),
            });
        }
        if zero_logical.space().factors().len() != 1 {
            return Err(Error::InvalidDimension("codewords must live in a single mode".into()));
        }
        zero_logical.ensure_normalized()?;
        one_logical.ensure_normalized()?;
        let overlap = zero_logical.inner(&one_logical)?.norm();
        if overlap > ORTHOGONALITY_TOL {
            return Err(Error::InvalidCoefficients(format!("codewords overlap by {overlap:e}")));
        }
        Ok(Self { zero_logical, one_logical })
    }

    pub fn zero_logical(&self) -> &Ket {
        &self.zero_logical
    }

    pub fn one_logical(&self) -> &Ket {
        &self.one_logical
    }

    pub fn codeword(&self, u: usize) -> &Ket {
        if u == 0 {
            &self.zero_logical
        } else {
            &self.one_logical
        }
    }

    pub fn space(&self) -> &SpaceSignature {
        self.zero_logical.space()
    }

    pub fn levels(&self) -> usize {
        self.space().dim()
    }

    /// Code-space average of `⟨a†a⟩`, i.e. `(n̄₀ + n̄₁)/2`.
    pub fn mean_photon_number(&self) -> f64 {
        0.5 * (self.zero_logical.expectation_number() + self.one_logical.expectation_number())
    }

    /// Highest Fock level with non-zero amplitude in either codeword.
    pub fn max_populated_level(&self) -> usize {
        (0..self.levels())
            .rev()
            .find(|&n| self.zero_logical.amplitude(n).norm() > 0.0 || self.one_logical.amplitude(n).norm() > 0.0)
            .unwrap_or(0)
    }

    /// True when a codeword has no photon content, so the error basis and
    /// the two-branch recovery operator are undefined.
    pub fn is_kl_degenerate(&self) -> bool {
        self.zero_logical.expectation_number() == 0.0 || self.one_logical.expectation_number() == 0.0
    }

    /// `cos(θ/2)|0_L⟩ + e^{iφ} sin(θ/2)|1_L⟩`.
    pub fn bloch_state(&self, theta: f64, phi: f64) -> Ket {
        let a = C64::new((theta / 2.0).cos(), 0.0);
        let b = C64::from_polar((theta / 2.0).sin(), phi);
        self.zero_logical.scale(a).try_add(&self.one_logical.scale(b)).expect("codewords share a space")
    }

    /// Same codewords re-embedded in a mode of `levels` Fock levels.
    pub fn with_levels(&self, levels: usize) -> Result<CodePair> {
        let resize = |k: &Ket| -> Result<Ket> {
            let mut v = vec![ZERO; levels];
            for n in 0..k.dim() {
                let a = k.amplitude(n);
                if n >= levels {
                    if a != ZERO {
                        return Err(Error::TruncationTooSmall { truncation: levels.saturating_sub(1), required: n });
                    }
                } else {
                    v[n] = a;
                }
            }
            Ket::new(SpaceSignature::mode(levels), nalgebra::DVector::from_vec(v))
        };
        CodePair::new(resize(&self.zero_logical)?, resize(&self.one_logical)?)
    }
}

fn ladder_ket(coeffs: &[f64], offset: usize, levels: usize) -> Ket {
    let mut v = vec![ZERO; levels];
    for (n, &c) in coeffs.iter().enumerate() {
        v[4 * n + offset] = C64::new(c, 0.0);
    }
    Ket::new(SpaceSignature::mode(levels), nalgebra::DVector::from_vec(v)).expect("length matches levels")
}

fn check_unit(name: &str, c: &[f64]) -> Result<()> {
    if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCoefficients(format!("{name} must be a non-empty finite vector")));
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > COEFF_NORM_TOL {
        return Err(Error::InvalidCoefficients(format!("{name} has norm {norm}, expected 1")));
    }
    Ok(())
}

/// Codewords `|0_L⟩ = Σ c0_n |4n⟩`, `|1_L⟩ = Σ c1_n |4n+2⟩` in a mode
/// holding up to `truncation` photons.
pub fn code_pair_from_coeffs(c0: &[f64], c1: &[f64], truncation: usize) -> Result<CodePair> {
    check_unit("c0", c0)?;
    check_unit("c1", c1)?;
    let highest = (4 * (c0.len() - 1)).max(4 * (c1.len() - 1) + 2);
    if highest > truncation {
        return Err(Error::TruncationTooSmall { truncation, required: highest });
    }
    let levels = truncation + 1;
    CodePair::new(ladder_ket(c0, 0, levels), ladder_ket(c1, 2, levels))
}

/// `|0_L⟩ = |4⟩`, `|1_L⟩ = |2⟩`.
pub fn rl_code(truncation: usize) -> Result<CodePair> {
    code_pair_from_coeffs(&[0.0, 1.0], &[1.0], truncation)
}

/// `|0_L⟩ = (|0⟩ + |4⟩)/√2`, `|1_L⟩ = |2⟩`.
pub fn binomial_code(truncation: usize) -> Result<CodePair> {
    code_pair_from_coeffs(&[1.0 / SQRT_2, 1.0 / SQRT_2], &[1.0], truncation)
}

/// Unprotected `|0⟩`, `|1⟩` encoding that defines break-even.
pub fn break_even_code(truncation: usize) -> Result<CodePair> {
    if truncation < 1 {
        return Err(Error::TruncationTooSmall { truncation, required: 1 });
    }
    let s = SpaceSignature::mode(truncation + 1);
    CodePair::new(Ket::basis(s.clone(), 0)?, Ket::basis(s, 1)?)
}

/// `|0_L⟩ = |m+2⟩`, `|1_L⟩ = |m⟩`; the truncation must be at least `m+5`.
pub fn shifted_fock_code(m: usize, truncation: usize) -> Result<CodePair> {
    if truncation < m + 5 {
        return Err(Error::TruncationTooSmall { truncation, required: m + 5 });
    }
    let s = SpaceSignature::mode(truncation + 1);
    CodePair::new(Ket::basis(s.clone(), m + 2)?, Ket::basis(s, m)?)
}

/// Normalized error states `a|u_L⟩/ξ_u` with `ξ_u = √⟨u_L|a†a|u_L⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBasis {
    pub zero_error: Ket,
    pub one_error: Ket,
    pub norms: [f64; 2],
}

pub fn error_basis(code: &CodePair) -> Result<ErrorBasis> {
    let a = annihilation(code.levels())?;
    let mut errs = Vec::with_capacity(2);
    let mut norms = [0.0; 2];
    for u in 0..2 {
        let ak = a.apply(code.codeword(u))?;
        let xi = ak.norm();
        if xi == 0.0 {
            return Err(Error::UndefinedErrorBasis { codeword: u });
        }
        norms[u] = xi;
        errs.push(ak.scale(C64::new(1.0 / xi, 0.0)));
    }
    let one_error = errs.pop().expect("two entries");
    let zero_error = errs.pop().expect("two entries");
    Ok(ErrorBasis { zero_error, one_error, norms })
}

fn trace_normalized(op: Operator) -> Operator {
    let tr = op.matrix().iter().map(|z| z.norm_sqr()).sum::<f64>();
    op.scale(C64::new(1.0 / tr.sqrt(), 0.0))
}

/// `L_o = |0_L⟩⟨0_er| + |1_L⟩⟨1_er|` scaled to `Tr[L†L] = 1`.
pub fn engineered_jump(code: &CodePair) -> Result<Operator> {
    let basis = error_basis(code)?;
    let l0 = Operator::outer(code.zero_logical(), &basis.zero_error)?;
    let l1 = Operator::outer(code.one_logical(), &basis.one_error)?;
    Ok(trace_normalized(l0.try_add(&l1)?))
}

/// Recovery operator for a shifted code: the engineered jump for `m ≥ 1`;
/// for `m = 0` only the `|2⟩` branch has an error state, giving `|2⟩⟨1|`.
pub fn shifted_recovery_jump(m: usize, truncation: usize) -> Result<Operator> {
    let code = shifted_fock_code(m, truncation)?;
    if m == 0 {
        return Operator::single_entry(code.space().clone(), 2, 1, ONE);
    }
    engineered_jump(&code)
}

/// `(√2|2⟩⟨1| + |4⟩⟨3|)/√3` for the `|2⟩`/`|4⟩` code.
pub fn naive_jump(truncation: usize) -> Result<Operator> {
    if truncation < 4 {
        return Err(Error::TruncationTooSmall { truncation, required: 4 });
    }
    let s = SpaceSignature::mode(truncation + 1);
    let mut m = Matrix::zeros(truncation + 1, truncation + 1);
    m[(2, 1)] = C64::new(SQRT_2, 0.0);
    m[(4, 3)] = ONE;
    Ok(trace_normalized(Operator::new(s, m)?))
}

/// `a₁ = (2 − √2)|1⟩⟨2|`; `a + a₁` has equal loss amplitude 2 on `|2⟩`
/// and `|4⟩`.
pub fn kl_compensator(truncation: usize) -> Result<Operator> {
    if truncation < 2 {
        return Err(Error::TruncationTooSmall { truncation, required: 2 });
    }
    Operator::single_entry(SpaceSignature::mode(truncation + 1), 1, 2, C64::new(2.0 - SQRT_2, 0.0))
}

/// Logical identity and Pauli operators on the code space.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalPaulis {
    pub identity: Operator,
    pub x: Operator,
    pub y: Operator,
    pub z: Operator,
}

impl LogicalPaulis {
    pub fn get(&self, j: usize) -> &Operator {
        match j {
            0 => &self.identity,
            1 => &self.x,
            2 => &self.y,
            _ => &self.z,
        }
    }
}

/// `σ0 = |0⟩⟨0|+|1⟩⟨1|`, `σx = |0⟩⟨1|+|1⟩⟨0|`, `σy = i(|0⟩⟨1|−|1⟩⟨0|)`,
/// `σz = |1⟩⟨1|−|0⟩⟨0|` in terms of the logical codewords.
pub fn logical_paulis(code: &CodePair) -> LogicalPaulis {
    let z = code.zero_logical();
    let o = code.one_logical();
    let op = |l: &Ket, r: &Ket| Operator::outer(l, r).expect("codewords share a space");
    let p00 = op(z, z);
    let p11 = op(o, o);
    let p01 = op(z, o);
    let p10 = op(o, z);
    let herm = |x: Operator| x.into_hermitian().expect("logical Paulis are Hermitian");
    LogicalPaulis {
        identity: herm(&p00 + &p11),
        x: herm(&p01 + &p10),
        y: herm((&p01 - &p10).scale(C64::new(0.0, 1.0))),
        z: herm(&p11 - &p00),
    }
}

/// Largest Fock offset `|d|` among entries `⟨n|op|n+d⟩` above 1e−10.
pub fn hamiltonian_distance(op: &Operator) -> Result<usize> {
    if op.space().factors().len() != 1 {
        return Err(Error::InvalidDimension("Hamiltonian distance is defined for single-mode operators".into()));
    }
    let d = op.dim();
    let mut best = 0;
    for r in 0..d {
        for c in 0..d {
            if op.get(r, c).norm() > DISTANCE_THRESHOLD {
                best = best.max(r.abs_diff(c));
            }
        }
    }
    Ok(best)
}

/// Knill–Laflamme matrices `⟨u_L|E_j†E_i|v_L⟩` and their violations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KLReport {
    /// `alpha[j][i][u][v] = ⟨u_L|E_j†E_i|v_L⟩`.
    pub alpha: Vec<Vec<[[C64; 2]; 2]>>,
    /// `max |⟨0_L|E_j†E_i|1_L⟩|` over all pairs (and the transposed entry).
    pub offdiag_violation: f64,
    /// `max |⟨0_L|E_j†E_i|0_L⟩ − ⟨1_L|E_j†E_i|1_L⟩|` over all pairs.
    pub diag_violation: f64,
}

pub fn kl_check(code: &CodePair, errors: &[Operator]) -> Result<KLReport> {
    let mut alpha = Vec::with_capacity(errors.len());
    let mut offdiag: f64 = 0.0;
    let mut diag: f64 = 0.0;
    let mut images = Vec::with_capacity(errors.len());
    for e in errors {
        images.push([e.apply(code.zero_logical())?, e.apply(code.one_logical())?]);
    }
    for ej in &images {
        let mut row = Vec::with_capacity(errors.len());
        for ei in &images {
            let mut block = [[ZERO; 2]; 2];
            for u in 0..2 {
                for v in 0..2 {
                    block[u][v] = ej[u].inner(&ei[v])?;
                }
            }
            offdiag = offdiag.max(block[0][1].norm()).max(block[1][0].norm());
            diag = diag.max((block[0][0] - block[1][1]).norm());
            row.push(block);
        }
        alpha.push(row);
    }
    Ok(KLReport { alpha, offdiag_violation: offdiag, diag_violation: diag })
}

/// [`kl_check`] with the error set `{I, a}`.
pub fn kl_check_default(code: &CodePair) -> Result<KLReport> {
    let id = Operator::identity(code.space().clone());
    kl_check(code, &[id, annihilation(code.levels())?])
}

/// Code coefficient file. Either ansatz coefficients (`c0`, `c1`) or raw
/// Fock amplitudes (`zero`, `one`) must be given. A code named `sqrt3` must
/// have mean photon number `√3 ± 1e−6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one: Option<Vec<f64>>,
    pub truncation: usize,
}

impl CodeFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_code(&self) -> Result<CodePair> {
        let code = match (&self.c0, &self.c1, &self.zero, &self.one) {
            (Some(c0), Some(c1), None, None) => code_pair_from_coeffs(c0, c1, self.truncation)?,
            (None, None, Some(z), Some(o)) => {
                let levels = self.truncation + 1;
                let build = |name: &str, amps: &[f64]| -> Result<Ket> {
                    if amps.len() > levels {
                        return Err(Error::TruncationTooSmall {
                            truncation: self.truncation,
                            required: amps.len() - 1,
                        });
                    }
                    check_unit(name, amps)?;
                    let mut v = amps.to_vec();
                    v.resize(levels, 0.0);
                    Ket::from_real(SpaceSignature::mode(levels), &v)
                };
                CodePair::new(build("zero", z)?, build("one", o)?)?
            }
            _ => return Err(Error::InvalidCoefficients("code file needs either c0 and c1 or zero and one".into())),
        };
        if self.name.as_deref().is_some_and(is_sqrt3_name) {
            let nbar = code.mean_photon_number();
            if (nbar - 3f64.sqrt()).abs() > SQRT3_PHOTON_TOL {
                return Err(Error::InvalidCoefficients(format!(
                    "sqrt3 code must have mean photon number √3, got {nbar}"
                )));
            }
        }
        Ok(code)
    }
}

fn is_sqrt3_name(name: &str) -> bool {
    matches!(name.to_ascii_lowercase().as_str(), "sqrt3" | "√3")
}

/// Photon-number operator of the code's mode.
pub fn number_operator(code: &CodePair) -> Result<Operator> {
    number(code.levels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{max_abs, projector};

    fn fock_op(levels: usize, entries: &[(usize, usize, f64)]) -> Matrix {
        let mut m = Matrix::zeros(levels, levels);
        for &(r, c, v) in entries {
            m[(r, c)] = C64::new(v, 0.0);
        }
        m
    }

    #[test]
    fn rl_code_from_coefficients() {
        let code = code_pair_from_coeffs(&[0.0, 1.0], &[1.0], 6).unwrap();
        assert_eq!(code.zero_logical(), &Ket::fock(7, 4).unwrap());
        assert_eq!(code.one_logical(), &Ket::fock(7, 2).unwrap());
        assert_eq!(code.mean_photon_number(), 3.0);
    }

    #[test]
    fn simple_and_binomial_codes() {
        let code = code_pair_from_coeffs(&[1.0], &[1.0], 4).unwrap();
        assert_eq!(code.zero_logical().inner(code.one_logical()).unwrap(), ZERO);
        let bin = binomial_code(6).unwrap();
        assert!((bin.zero_logical().expectation_number() - 2.0).abs() < 1e-15);
        assert!((bin.mean_photon_number() - 2.0).abs() < 1e-15);
        assert_eq!(break_even_code(3).unwrap().mean_photon_number(), 0.5);
    }

    #[test]
    fn coefficient_errors() {
        assert!(matches!(code_pair_from_coeffs(&[0.5, 0.5], &[1.0], 6), Err(Error::InvalidCoefficients(_))));
        assert!(matches!(
            code_pair_from_coeffs(&[0.0, 1.0], &[0.0, 1.0], 5),
            Err(Error::TruncationTooSmall { required: 6, .. })
        ));
    }

    #[test]
    fn rl_engineered_jump() {
        let code = rl_code(6).unwrap();
        let l = engineered_jump(&code).unwrap();
        let s = 1.0 / SQRT_2;
        let expected = fock_op(7, &[(4, 3, s), (2, 1, s)]);
        assert!(max_abs(&(l.matrix() - expected)) < 1e-15);
        let tr: f64 = (l.dagger().matrix() * l.matrix()).trace().re;
        assert!((tr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_codeword_has_no_error_basis() {
        let code = break_even_code(4).unwrap();
        assert!(matches!(engineered_jump(&code), Err(Error::UndefinedErrorBasis { codeword: 0 })));
        assert!(code.is_kl_degenerate());
    }

    #[test]
    fn binomial_recovery_is_information_preserving() {
        let code = binomial_code(6).unwrap();
        let l = engineered_jump(&code).unwrap();
        let basis = error_basis(&code).unwrap();
        let r0 = l.apply(&basis.zero_error).unwrap();
        let r1 = l.apply(&basis.one_error).unwrap();
        let k0 = code.zero_logical().inner(&r0).unwrap();
        let k1 = code.one_logical().inner(&r1).unwrap();
        assert!((k0 - k1).norm() < 1e-12);
        assert!((r0.norm() - k0.norm()).abs() < 1e-12);
        assert!(code.one_logical().inner(&r0).unwrap().norm() < 1e-10);
        assert!(code.zero_logical().inner(&r1).unwrap().norm() < 1e-10);
    }

    #[test]
    fn naive_jump_properties() {
        let l = naive_jump(6).unwrap();
        let ldl = l.dagger().matrix() * l.matrix();
        assert!((ldl.trace().re - 1.0).abs() < 1e-14);
        assert!((ldl[(1, 1)].re - 2.0 / 3.0).abs() < 1e-15);
        assert!((ldl[(3, 3)].re - 1.0 / 3.0).abs() < 1e-15);
        // a|θ,φ⟩ for the |2⟩/|4⟩ code is mapped back into the code space
        let (theta, phi) = (1.1f64, 0.7f64);
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let mut v = vec![ZERO; 7];
        v[1] = C64::new(SQRT_2 * c, 0.0);
        v[3] = C64::from_polar(2.0 * s, phi);
        let err = Ket::new(SpaceSignature::mode(7), nalgebra::DVector::from_vec(v)).unwrap();
        let out = l.apply(&err).unwrap().normalized().unwrap();
        let mut w = vec![ZERO; 7];
        w[2] = C64::new(c, 0.0);
        w[4] = C64::from_polar(s, phi);
        let target = Ket::new(SpaceSignature::mode(7), nalgebra::DVector::from_vec(w)).unwrap();
        assert!((target.inner(&out).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_codes() {
        let m2 = shifted_fock_code(2, 7).unwrap();
        assert_eq!(m2, rl_code(7).unwrap());
        let m0 = shifted_fock_code(0, 5).unwrap();
        assert!(m0.is_kl_degenerate());
        assert!(engineered_jump(&m0).is_err());
        let l = shifted_recovery_jump(0, 5).unwrap();
        assert_eq!(l.get(2, 1), ONE);
        assert!(matches!(shifted_fock_code(3, 7), Err(Error::TruncationTooSmall { .. })));
        for m in 1..=8 {
            let j = shifted_recovery_jump(m, m + 5).unwrap();
            assert_eq!(hamiltonian_distance(&j).unwrap(), 1, "m={m}");
        }
    }

    #[test]
    fn logical_pauli_algebra() {
        let code = rl_code(6).unwrap();
        let p = logical_paulis(&code);
        let expected_x = fock_op(7, &[(2, 4, 1.0), (4, 2, 1.0)]);
        assert!(max_abs(&(p.x.matrix() - expected_x)) < 1e-15);
        let z2 = &p.z * &p.z;
        assert!(max_abs(&(z2.matrix() - p.identity.matrix())) < 1e-15);
        let comm = p.x.commutator(&p.y).unwrap();
        let rhs = p.z.scale(C64::new(0.0, 2.0));
        assert!(max_abs(&(comm.matrix() - rhs.matrix())) < 1e-14);
        for c in [binomial_code(6).unwrap(), shifted_fock_code(3, 8).unwrap()] {
            let p = logical_paulis(&c);
            let comm = p.y.commutator(&p.z).unwrap();
            assert!(max_abs(&(comm.matrix() - p.x.scale(C64::new(0.0, 2.0)).matrix())) < 1e-14);
        }
    }

    #[test]
    fn distances() {
        let code = rl_code(6).unwrap();
        assert_eq!(hamiltonian_distance(&engineered_jump(&code).unwrap()).unwrap(), 1);
        let p = logical_paulis(&code);
        assert_eq!(hamiltonian_distance(&p.x).unwrap(), 2);
        assert_eq!(hamiltonian_distance(&p.y).unwrap(), 2);
        assert_eq!(hamiltonian_distance(&p.z).unwrap(), 0);
        assert_eq!(hamiltonian_distance(&number(6).unwrap()).unwrap(), 0);
    }

    #[test]
    fn kl_reports() {
        let rl = kl_check_default(&rl_code(6).unwrap()).unwrap();
        assert_eq!(rl.offdiag_violation, 0.0);
        assert!((rl.diag_violation - 2.0).abs() < 1e-14);
        let bin = kl_check_default(&binomial_code(6).unwrap()).unwrap();
        assert!(bin.diag_violation < 1e-14);
        let code = rl_code(6).unwrap();
        let comp = &annihilation(7).unwrap() + &kl_compensator(6).unwrap();
        let rep = kl_check(&code, &[comp]).unwrap();
        assert!(rep.diag_violation < 1e-14);
        assert!((rep.alpha[0][0][0][0].re - 4.0).abs() < 1e-14);
    }

    #[test]
    fn compensator_action() {
        let op = &annihilation(7).unwrap() + &kl_compensator(6).unwrap();
        let two = op.apply(&Ket::fock(7, 2).unwrap()).unwrap();
        assert!((two.amplitude(1).re - 2.0).abs() < 1e-15);
        let four = op.apply(&Ket::fock(7, 4).unwrap()).unwrap();
        assert!((four.amplitude(3).re - 2.0).abs() < 1e-15);
        assert!((four.norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn code_file_formats() {
        let f = CodeFile::from_json(r#"{"c0":[0,1],"c1":[1],"truncation":6}"#).unwrap();
        assert_eq!(f.to_code().unwrap(), rl_code(6).unwrap());
        let g = CodeFile::from_json(r#"{"zero":[1,0,0],"one":[0,1],"truncation":3}"#).unwrap();
        assert_eq!(g.to_code().unwrap(), break_even_code(3).unwrap());
        let bad = CodeFile::from_json(r#"{"name":"sqrt3","c0":[0,1],"c1":[1],"truncation":6}"#).unwrap();
        assert!(matches!(bad.to_code(), Err(Error::InvalidCoefficients(_))));
        // codewords with n̄₀ + n̄₁ = 2√3
        let p = (2.0 * 3f64.sqrt() - 3.0) / 2.0;
        let zero = vec![0.0, (1.0 - p).sqrt(), 0.0, p.sqrt()];
        let text = serde_json::json!({"name": "sqrt3", "zero": zero, "one": [0.0, 0.0, 1.0], "truncation": 6});
        let code = CodeFile::from_json(&text.to_string()).unwrap().to_code().unwrap();
        assert!((code.mean_photon_number() - 3f64.sqrt()).abs() < 1e-12);
        assert!(CodeFile::from_json(r#"{"c0":[1],"truncation":3}"#).unwrap().to_code().is_err());
    }

    #[test]
    fn bloch_state_is_normalized_superposition() {
        let code = rl_code(6).unwrap();
        let k = code.bloch_state(std::f64::consts::FRAC_PI_2, 0.3);
        assert!(k.is_normalized());
        let p = projector(&k).unwrap();
        assert!((p.get(4, 4).re - 0.5).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n > 1e-3).then(|| v.iter().map(|x| x / n).collect())
        }

        proptest! {
            #[test]
            fn ansatz_codes_orthogonal_and_kl_offdiag_free(
                a in proptest::collection::vec(-1.0f64..1.0, 1..3),
                b in proptest::collection::vec(-1.0f64..1.0, 1..3),
            ) {
                let (Some(c0), Some(c1)) = (unit(a), unit(b)) else { return Ok(()); };
                let code = code_pair_from_coeffs(&c0, &c1, 8).unwrap();
                prop_assert_eq!(code.zero_logical().inner(code.one_logical()).unwrap(), ZERO);
                prop_assert_eq!(kl_check_default(&code).unwrap().offdiag_violation, 0.0);
            }
        }
    }
}
