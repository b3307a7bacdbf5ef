//! Truncated Fock-space and qubit operator algebra.
//!
//! All operators are dense complex matrices. Basis ordering is fixed once for
//! the whole crate:
//!
//! * a bosonic mode truncated to `dim` levels uses the Fock basis
//!   `|0⟩, |1⟩, …, |dim−1⟩` in ascending order;
//! * a qubit uses index 0 = ground `|g⟩`, index 1 = excited `|e⟩`;
//! * composite spaces are Kronecker products in the order of the
//!   [`SpaceSignature`] factors, the last factor varying fastest.
//!
//! The creation operator annihilates the top Fock state of a truncated mode,
//! so any simulation must keep a couple of empty guard levels above the
//! highest populated level.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

const HERMITIAN_TOL: f64 = 1e-12;
const KET_NORM_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;

/// Ordered list of subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSignature {
    factors: Vec<usize>,
}

impl SpaceSignature {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|&d| d < 1) {
            return Err(Error::InvalidDimension(format!("space factors must be non-empty and ≥ 1, got {factors:?}")));
        }
        Ok(Self { factors })
    }

    /// A single bosonic mode holding `levels` Fock states.
    pub fn mode(levels: usize) -> Self {
        Self { factors: vec![levels.max(1)] }
    }

    pub fn qubit() -> Self {
        Self { factors: vec![2] }
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn concat(&self, other: &SpaceSignature) -> SpaceSignature {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        SpaceSignature { factors }
    }

    fn ensure_same(&self, other: &SpaceSignature) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch { expected: self.factors.clone(), found: other.factors.clone() });
        }
        Ok(())
    }
}

/// Dense operator on a truncated Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: SpaceSignature,
    data: Matrix,
    hermitian: bool,
}

impl Operator {
    pub fn new(space: SpaceSignature, data: Matrix) -> Result<Self> {
        let d = space.dim();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "operator matrix {}x{} does not match space dimension {d}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { space, data, hermitian: false })
    }

    pub fn zeros(space: SpaceSignature) -> Self {
        let d = space.dim();
        Self { space, data: Matrix::zeros(d, d), hermitian: true }
    }

    pub fn identity(space: SpaceSignature) -> Self {
        let d = space.dim();
        Self { space, data: Matrix::identity(d, d), hermitian: true }
    }

    /// Operator with a single non-zero entry `value·|row⟩⟨col|`.
    pub fn single_entry(space: SpaceSignature, row: usize, col: usize, value: C64) -> Result<Self> {
        let d = space.dim();
        if row >= d || col >= d {
            return Err(Error::InvalidDimension(format!("entry ({row},{col}) outside dimension {d}")));
        }
        let mut data = Matrix::zeros(d, d);
        data[(row, col)] = value;
        Self::new(space, data)
    }

    /// Diagonal operator with real entries.
    pub fn diagonal(space: SpaceSignature, diag: &[f64]) -> Result<Self> {
        let d = space.dim();
        if diag.len() != d {
            return Err(Error::InvalidDimension(format!("{} diagonal entries for dimension {d}", diag.len())));
        }
        let data = Matrix::from_fn(d, d, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO });
        Ok(Self { space, data, hermitian: true })
    }

    /// `|bra⟩⟨ket|`-style outer product `|left⟩⟨right|`.
    pub fn outer(left: &Ket, right: &Ket) -> Result<Self> {
        left.space.ensure_same(&right.space)?;
        let data = &left.data * right.data.adjoint();
        Self::new(left.space.clone(), data)
    }

    pub fn space(&self) -> &SpaceSignature {
        &self.space
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    /// Whether the operator carries the Hermitian flag.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Max-norm distance between the operator and its adjoint.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.data - self.data.adjoint()))
    }

    /// Sets the Hermitian flag after checking `‖A − A†‖_max ≤ 1e−12`.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!("operator is not Hermitian (defect {defect:e})")));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn dagger(&self) -> Operator {
        Operator { space: self.space.clone(), data: self.data.adjoint(), hermitian: self.hermitian }
    }

    pub fn scale(&self, factor: C64) -> Operator {
        let hermitian = self.hermitian && factor.im == 0.0;
        Operator { space: self.space.clone(), data: &self.data * factor, hermitian }
    }

    pub fn try_mul(&self, rhs: &Operator) -> Result<Operator> {
        self.space.ensure_same(&rhs.space)?;
        Operator::new(self.space.clone(), &self.data * &rhs.data)
    }

    pub fn try_add(&self, rhs: &Operator) -> Result<Operator> {
        self.space.ensure_same(&rhs.space)?;
        Ok(Operator {
            space: self.space.clone(),
            data: &self.data + &rhs.data,
            hermitian: self.hermitian && rhs.hermitian,
        })
    }

    pub fn try_sub(&self, rhs: &Operator) -> Result<Operator> {
        self.space.ensure_same(&rhs.space)?;
        Ok(Operator {
            space: self.space.clone(),
            data: &self.data - &rhs.data,
            hermitian: self.hermitian && rhs.hermitian,
        })
    }

    pub fn commutator(&self, rhs: &Operator) -> Result<Operator> {
        self.try_mul(rhs)?.try_sub(&rhs.try_mul(self)?)
    }

    /// Applies the operator to a ket; the result is generally unnormalized.
    pub fn apply(&self, ket: &Ket) -> Result<Ket> {
        self.space.ensure_same(&ket.space)?;
        Ok(Ket { space: ket.space.clone(), data: &self.data * &ket.data })
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        self.try_add(rhs).expect("operator spaces must match")
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        self.try_sub(rhs).expect("operator spaces must match")
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        self.try_mul(rhs).expect("operator spaces must match")
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

/// Pure state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ket {
    space: SpaceSignature,
    #[serde(with = "vector_serde")]
    data: Vector,
}

impl Ket {
    pub fn new(space: SpaceSignature, amplitudes: Vector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::InvalidDimension(format!(
                "{} amplitudes for space dimension {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        Ok(Self { space, data: amplitudes })
    }

    pub fn from_real(space: SpaceSignature, amplitudes: &[f64]) -> Result<Self> {
        let v = Vector::from_iterator(amplitudes.len(), amplitudes.iter().map(|&x| C64::new(x, 0.0)));
        Self::new(space, v)
    }

    /// Basis state `|index⟩` of the space.
    pub fn basis(space: SpaceSignature, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::TruncationTooSmall { truncation: d, required: index });
        }
        let mut data = Vector::zeros(d);
        data[index] = ONE;
        Ok(Self { space, data })
    }

    /// Fock state `|n⟩` of a single mode with `levels` levels.
    pub fn fock(levels: usize, n: usize) -> Result<Self> {
        Self::basis(SpaceSignature::mode(levels), n)
    }

    pub fn space(&self) -> &SpaceSignature {
        &self.space
    }

    pub fn amplitudes(&self) -> &Vector {
        &self.data
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.data[index]
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= KET_NORM_TOL
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        if !self.is_normalized() {
            return Err(Error::NotNormalized { norm: self.norm() });
        }
        Ok(())
    }

    pub fn normalized(&self) -> Result<Ket> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(Ket { space: self.space.clone(), data: &self.data / C64::new(n, 0.0) })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> Result<C64> {
        self.space.ensure_same(&other.space)?;
        Ok(self.data.dotc(&other.data))
    }

    pub fn scale(&self, factor: C64) -> Ket {
        Ket { space: self.space.clone(), data: &self.data * factor }
    }

    pub fn try_add(&self, other: &Ket) -> Result<Ket> {
        self.space.ensure_same(&other.space)?;
        Ok(Ket { space: self.space.clone(), data: &self.data + &other.data })
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket { space: self.space.concat(&other.space), data: self.data.kronecker(&other.data) }
    }

    pub fn expectation_number(&self) -> f64 {
        self.data.iter().enumerate().map(|(n, a)| n as f64 * a.norm_sqr()).sum()
    }
}

/// Mixed state with trace, Hermiticity and positivity invariants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    space: SpaceSignature,
    #[serde(with = "matrix_serde")]
    data: Matrix,
}

impl DensityMatrix {
    /// Validates trace = 1 ± 1e−8, Hermiticity to 1e−10 and
    /// minimum eigenvalue ≥ −1e−8.
    pub fn new(space: SpaceSignature, data: Matrix) -> Result<Self> {
        let rho = Self::new_unchecked(space, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Builds the state after checking only its shape.
    pub fn new_unchecked(space: SpaceSignature, data: Matrix) -> Result<Self> {
        let d = space.dim();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "density matrix {}x{} does not match space dimension {d}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { space, data })
    }

    pub fn from_ket(ket: &Ket) -> Result<Self> {
        ket.ensure_normalized()?;
        Ok(Self { space: ket.space.clone(), data: &ket.data * ket.data.adjoint() })
    }

    pub fn maximally_mixed(space: SpaceSignature) -> Self {
        let d = space.dim();
        Self { space, data: Matrix::identity(d, d) / C64::new(d as f64, 0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.data.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr}")));
        }
        let herm = max_abs(&(&self.data - self.data.adjoint()));
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!("Hermiticity defect {herm:e}")));
        }
        let min_ev = self.min_eigenvalue();
        if min_ev < -POSITIVITY_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    pub fn space(&self) -> &SpaceSignature {
        &self.space
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `⟨ψ|ρ|ψ⟩` for a ket in the same space.
    pub fn overlap(&self, ket: &Ket) -> Result<f64> {
        self.space.ensure_same(&ket.space)?;
        Ok((ket.data.adjoint() * &self.data * &ket.data)[(0, 0)].re)
    }

    /// Reduced state on the factors listed in `keep` (ascending factor
    /// indices).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let reduced = partial_trace_matrix(&self.space, &self.data, keep)?;
        let factors = keep.iter().map(|&k| self.space.factors[k]).collect();
        Ok(DensityMatrix { space: SpaceSignature::new(factors)?, data: reduced })
    }

    /// Projects onto the Hermitian part in place.
    pub fn hermitize(&mut self) {
        let adj = self.data.adjoint();
        self.data = (&self.data + adj) * C64::new(0.5, 0.0);
    }
}

/// Partial trace of a raw matrix over all factors not listed in `keep`.
pub fn partial_trace_matrix(space: &SpaceSignature, data: &Matrix, keep: &[usize]) -> Result<Matrix> {
    let factors = space.factors();
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= factors.len()) {
        return Err(Error::InvalidParameter(format!("partial trace keeps {keep:?} of {} factors", factors.len())));
    }
    let n = factors.len();
    let kept_dim: usize = keep.iter().map(|&k| factors[k]).product();
    let mut out = Matrix::zeros(kept_dim, kept_dim);
    let total = space.dim();
    let mut digits_r = vec![0usize; n];
    let mut digits_c = vec![0usize; n];
    for r in 0..total {
        decompose(r, factors, &mut digits_r);
        let (kr, tr) = split_index(&digits_r, factors, keep);
        for c in 0..total {
            decompose(c, factors, &mut digits_c);
            let (kc, tc) = split_index(&digits_c, factors, keep);
            if tr == tc {
                out[(kr, kc)] += data[(r, c)];
            }
        }
    }
    Ok(out)
}

fn decompose(mut index: usize, factors: &[usize], digits: &mut [usize]) {
    for k in (0..factors.len()).rev() {
        digits[k] = index % factors[k];
        index /= factors[k];
    }
}

fn split_index(digits: &[usize], factors: &[usize], keep: &[usize]) -> (usize, usize) {
    let mut kept = 0;
    let mut traced = 0;
    for (k, (&d, &f)) in digits.iter().zip(factors).enumerate() {
        if keep.contains(&k) {
            kept = kept * f + d;
        } else {
            traced = traced * f + d;
        }
    }
    (kept, traced)
}

pub(crate) fn max_abs(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Mode annihilation operator `a` on `dim` Fock levels.
pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("mode dimension must be ≥ 2, got {dim}")));
    }
    let mut data = Matrix::zeros(dim, dim);
    for n in 1..dim {
        data[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator::new(SpaceSignature::mode(dim), data)
}

/// Mode creation operator `a†`; annihilates the top truncated level.
pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.dagger())
}

/// Number operator `a†a`.
pub fn number(dim: usize) -> Result<Operator> {
    let diag: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("mode dimension must be ≥ 2, got {dim}")));
    }
    Operator::diagonal(SpaceSignature::mode(dim), &diag)
}

/// Qubit lowering operator `σ− = |g⟩⟨e|`.
pub fn qubit_lowering() -> Operator {
    Operator::single_entry(SpaceSignature::qubit(), 0, 1, ONE).expect("qubit is 2-dimensional")
}

/// Qubit raising operator `σ+ = |e⟩⟨g|`.
pub fn qubit_raising() -> Operator {
    qubit_lowering().dagger()
}

/// Kronecker product; the space signature concatenates the factor lists.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator { space: a.space.concat(&b.space), data: a.data.kronecker(&b.data), hermitian: a.hermitian && b.hermitian }
}

/// Left-to-right Kronecker product of several operators.
pub fn tensor_all(ops: &[&Operator]) -> Result<Operator> {
    let (first, rest) = ops.split_first().ok_or_else(|| Error::InvalidParameter("tensor of zero operators".into()))?;
    Ok(rest.iter().fold((*first).clone(), |acc, op| tensor(&acc, op)))
}

/// `|ψ⟩⟨ψ|` for a normalized ket.
pub fn projector(ket: &Ket) -> Result<Operator> {
    ket.ensure_normalized()?;
    let data = &ket.data * ket.data.adjoint();
    Ok(Operator { space: ket.space.clone(), data, hermitian: true })
}

/// `Tr(op·ρ)`.
pub fn expectation(op: &Operator, state: &DensityMatrix) -> Result<C64> {
    op.space.ensure_same(&state.space)?;
    let d = op.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += op.data[(i, k)] * state.data[(k, i)];
        }
    }
    Ok(acc)
}

/// Real part of `Tr(op·ρ)`; errors when a Hermitian-flagged observable gives
/// an imaginary part above 1e−10.
pub fn expectation_real(op: &Operator, state: &DensityMatrix) -> Result<f64> {
    let z = expectation(op, state)?;
    if op.is_hermitian() && z.im.abs() > 1e-10 {
        return Err(Error::InvalidDensity(format!("Hermitian observable has imaginary expectation {:e}", z.im)));
    }
    Ok(z.re)
}

mod matrix_serde {
    use super::{Matrix, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        dim: usize,
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Repr { dim: m.nrows(), re, im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.re.len() != r.dim * r.dim || r.im.len() != r.re.len() {
            return Err(serde::de::Error::custom("matrix entry count does not match dimension"));
        }
        Ok(Matrix::from_fn(r.dim, r.dim, |i, j| C64::new(r.re[i * r.dim + j], r.im[i * r.dim + j])))
    }
}

mod vector_serde {
    use super::{Vector, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        Repr { re: v.iter().map(|z| z.re).collect(), im: v.iter().map(|z| z.im).collect() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.re.len() != r.im.len() {
            return Err(serde::de::Error::custom("real and imaginary parts differ in length"));
        }
        Ok(Vector::from_iterator(r.re.len(), r.re.iter().zip(&r.im).map(|(&a, &b)| C64::new(a, b))))
    }
}
