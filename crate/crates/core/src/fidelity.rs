//! Fidelity metrics: pure-reference state fidelity, six-state and sphere
//! mean fidelities, closed-form baselines and the windowed
//! error-correctable fidelity.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codes::{logical_paulis, CodePair};
use crate::dynamics::format_float;
use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, Ket, Matrix, Operator, C64, ZERO};

const PURITY_TOL: f64 = 1e-8;
const CLIP_TOL: f64 = 1e-8;
const TRACE_PRESERVATION_TOL: f64 = 1e-6;
const CURVE_RANGE_TOL: f64 = 1e-9;
const CODE_SUPPORT_TOL: f64 = 1e-10;

/// Coherence decay rate `u = 3 − 2√2` of the `|2⟩`/`|4⟩` code in the
/// strong-recovery limit, in units of the loss rate.
pub const RL_DECAY_RATE: f64 = 3.0 - 2.0 * SQRT_2;
/// The same rate for the naive recovery operator.
pub const NAIVE_DECAY_RATE: f64 = 1.0 / 3.0;

/// Map from input to output density matrix at a fixed time.
pub trait Channel {
    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix>;
}

impl<F> Channel for F
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix>,
{
    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self(rho)
    }
}

/// Bloch-sphere angles of a logical state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochPoint {
    pub theta: f64,
    pub phi: f64,
}

impl BlochPoint {
    /// `θ ∈ [0, π]`; `φ` is wrapped into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("Bloch angles out of range: θ={theta}, φ={phi}")));
        }
        Ok(Self { theta, phi: phi.rem_euclid(2.0 * PI) })
    }
}

/// `Tr(ρ0 ρt)` for a pure reference `ρ0`, clipped to `[0, 1]`.
pub fn state_fidelity(rho0: &DensityMatrix, rho_t: &DensityMatrix) -> Result<f64> {
    let purity = rho0.purity();
    if (purity - 1.0).abs() > PURITY_TOL {
        return Err(Error::NotPure { purity });
    }
    if rho0.space() != rho_t.space() {
        return Err(Error::DimensionMismatch {
            expected: rho0.space().factors().to_vec(),
            found: rho_t.space().factors().to_vec(),
        });
    }
    let a = rho0.matrix();
    let b = rho_t.matrix();
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    clip_unit(acc.re)
}

fn clip_unit(x: f64) -> Result<f64> {
    if x < -CLIP_TOL || x > 1.0 + CLIP_TOL || !x.is_finite() {
        return Err(Error::InvalidDensity(format!("fidelity {x} outside [0, 1]")));
    }
    Ok(x.clamp(0.0, 1.0))
}

/// `ρ_{±j} = (σ0 ± σ_j)/2` for `j = x, y, z`, ordered `+x, −x, +y, −y, +z, −z`.
pub fn six_states(code: &CodePair) -> Result<Vec<DensityMatrix>> {
    let p = logical_paulis(code);
    let mut out = Vec::with_capacity(6);
    for j in 1..=3 {
        for sign in [1.0, -1.0] {
            let m = (p.identity.matrix() + p.get(j).matrix() * C64::new(sign, 0.0)) * C64::new(0.5, 0.0);
            out.push(DensityMatrix::new(code.space().clone(), m)?);
        }
    }
    Ok(out)
}

/// The six summands `Tr(ρ_j M[ρ_j])` of the mean fidelity.
pub fn six_observations<C: Channel + ?Sized>(channel: &C, code: &CodePair) -> Result<[f64; 6]> {
    let mut obs = [0.0; 6];
    for (k, rho) in six_states(code)?.iter().enumerate() {
        let out = channel.apply(rho)?;
        let tr = out.trace();
        if (tr.re - 1.0).abs() > TRACE_PRESERVATION_TOL || tr.im.abs() > TRACE_PRESERVATION_TOL {
            return Err(Error::NotTracePreserving { trace: tr.re });
        }
        obs[k] = state_fidelity(rho, &out)?;
    }
    Ok(obs)
}

/// Six-state average `(1/6) Σ_j Tr(ρ_j M[ρ_j])`.
pub fn mean_fidelity_six<C: Channel + ?Sized>(channel: &C, code: &CodePair) -> Result<f64> {
    Ok(six_observations(channel, code)?.iter().sum::<f64>() / 6.0)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Quadrature of `(1/4π)∮ F(θ,φ) dΩ` with Gauss–Legendre nodes in `cos θ`
/// and a uniform `φ` grid.
pub fn mean_fidelity_sphere<C: Channel + ?Sized>(
    channel: &C,
    code: &CodePair,
    n_theta: usize,
    n_phi: usize,
) -> Result<f64> {
    if n_theta < 16 || n_phi < 16 {
        return Err(Error::InvalidParameter(format!(
            "sphere quadrature needs at least 16×16 nodes, got {n_theta}×{n_phi}"
        )));
    }
    let (xs, ws) = gauss_legendre(n_theta);
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let theta = x.clamp(-1.0, 1.0).acos();
        let mut ring = 0.0;
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            let rho0 = DensityMatrix::from_ket(&code.bloch_state(theta, phi))?;
            ring += state_fidelity(&rho0, &channel.apply(&rho0)?)?;
        }
        total += w * ring * (2.0 * PI / n_phi as f64);
    }
    Ok(total / (4.0 * PI))
}

/// `F̄_be(t) = (e^{−γt} + 2e^{−γt/2} + 3)/6` for the `|0⟩,|1⟩` encoding.
pub fn break_even_mean_fidelity(gamma_t: f64) -> f64 {
    ((-gamma_t).exp() + 2.0 * (-gamma_t / 2.0).exp() + 3.0) / 6.0
}

/// `2/3 + e^{−u γt}/3`: mean fidelity when populations are frozen and the
/// coherence decays at rate `u`.
pub fn analytic_mean_fidelity(u: f64, gamma_t: f64) -> f64 {
    2.0 / 3.0 + (-u * gamma_t).exp() / 3.0
}

pub fn rl_analytic_mean_fidelity(gamma_t: f64) -> f64 {
    analytic_mean_fidelity(RL_DECAY_RATE, gamma_t)
}

/// `1 + 2 sin²(θ/2) cos²(θ/2) (e^{−uγt} − 1)`, independent of `φ`.
pub fn analytic_state_fidelity(u: f64, point: BlochPoint, gamma_t: f64) -> f64 {
    let s = (point.theta / 2.0).sin();
    let c = (point.theta / 2.0).cos();
    1.0 + 2.0 * s * s * c * c * ((-u * gamma_t).exp() - 1.0)
}

pub fn rl_analytic_state_fidelity(point: BlochPoint, gamma_t: f64) -> f64 {
    analytic_state_fidelity(RL_DECAY_RATE, point, gamma_t)
}

/// Forward sliding maximum `max_{t* ∈ [t, t+τ]} F(t*)` on the sample grid;
/// windows are truncated at the last sample. For `τ > 0` the largest
/// sampling interval must not exceed `τ/6`.
pub fn sliding_window_max(times: &[f64], values: &[f64], tau: f64) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return Err(Error::InvalidGrid(format!("{} times for {} values", times.len(), values.len())));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("window length must be ≥ 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(values.to_vec());
    }
    let max_dt = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_dt > tau / 6.0 * (1.0 + 1e-9) {
        return Err(Error::InvalidGrid(format!(
            "sampling interval {max_dt} too coarse for window {tau} (needs ≤ τ/6)"
        )));
    }
    let n = values.len();
    let mut out = vec![0.0; n];
    // monotone deque of candidate indices, scanning from the end
    let mut deque = std::collections::VecDeque::with_capacity(n);
    for i in (0..n).rev() {
        while let Some(&back) = deque.back() {
            if values[back] <= values[i] {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(i);
        // front: largest value, and the first index to leave the window
        while let Some(&front) = deque.front() {
            if times[front] > times[i] + tau * (1.0 + 1e-12) {
                deque.pop_front();
            } else {
                break;
            }
        }
        out[i] = values[*deque.front().expect("deque holds i")];
    }
    Ok(out)
}

/// Per-state fidelity series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSeries {
    pub point: BlochPoint,
    pub values: Vec<f64>,
}

/// Mean fidelity over time with optional extremes and per-state series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_state: Vec<StateSeries>,
}

impl FidelityCurve {
    pub fn new(times: Vec<f64>, mean: Vec<f64>) -> Result<Self> {
        let curve = Self { times, mean, min: None, max: None, per_state: Vec::new() };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        let lengths_ok = self.mean.len() == n
            && self.min.as_ref().is_none_or(|v| v.len() == n)
            && self.max.as_ref().is_none_or(|v| v.len() == n)
            && self.per_state.iter().all(|s| s.values.len() == n);
        if !lengths_ok {
            return Err(Error::InvalidGrid("fidelity series lengths differ from the time grid".into()));
        }
        let all = self
            .mean
            .iter()
            .chain(self.min.iter().flatten())
            .chain(self.max.iter().flatten())
            .chain(self.per_state.iter().flat_map(|s| s.values.iter()));
        for &v in all {
            if !(-CURVE_RANGE_TOL..=1.0 + CURVE_RANGE_TOL).contains(&v) {
                return Err(Error::InvalidDensity(format!("fidelity {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Value of the mean curve at the sample closest to `t`.
    pub fn mean_at(&self, t: f64) -> f64 {
        let idx = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.mean[idx]
    }

    /// CSV columns `t, F_mean[, F_min, F_max]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "F_mean"];
        let extremes = self.min.is_some() && self.max.is_some();
        if extremes {
            header.extend(["F_min", "F_max"]);
        }
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![format_float(self.times[i]), format_float(self.mean[i])];
            if let (Some(lo), Some(hi)) = (&self.min, &self.max) {
                row.push(format_float(lo[i]));
                row.push(format_float(hi[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Windowed maximum of every series in the curve.
pub fn coarse_grained(curve: &FidelityCurve, tau: f64) -> Result<FidelityCurve> {
    let t = &curve.times;
    let map = |v: &Vec<f64>| sliding_window_max(t, v, tau);
    Ok(FidelityCurve {
        times: t.clone(),
        mean: map(&curve.mean)?,
        min: curve.min.as_ref().map(map).transpose()?,
        max: curve.max.as_ref().map(map).transpose()?,
        per_state: curve
            .per_state
            .iter()
            .map(|s| Ok(StateSeries { point: s.point, values: map(&s.values)? }))
            .collect::<Result<_>>()?,
    })
}

/// Channel restricted to code-space inputs, stored as the images of the
/// four matrix units `|u_L⟩⟨v_L|`. Linearity gives the output for any
/// code-space state.
#[derive(Clone, Debug)]
pub struct LogicalChannel {
    code: CodePair,
    images: [[Matrix; 2]; 2],
    /// `tensor[u][v][x][y] = ⟨x_L| M[|u_L⟩⟨v_L|] |y_L⟩`
    tensor: [[[[C64; 2]; 2]; 2]; 2],
}

impl LogicalChannel {
    /// `images[u][v]` is the output operator for input `|u_L⟩⟨v_L|`.
    pub fn new(code: CodePair, images: [[Matrix; 2]; 2]) -> Result<Self> {
        let d = code.levels();
        if images.iter().flatten().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::InvalidDimension(format!("channel images must be {d}x{d}")));
        }
        let words = [code.zero_logical().amplitudes().clone(), code.one_logical().amplitudes().clone()];
        let mut tensor = [[[[ZERO; 2]; 2]; 2]; 2];
        for u in 0..2 {
            for v in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        tensor[u][v][x][y] = (words[x].adjoint() * &images[u][v] * &words[y])[(0, 0)];
                    }
                }
            }
        }
        Ok(Self { code, images, tensor })
    }

    /// The identity channel.
    pub fn identity(code: CodePair) -> Self {
        let z = code.zero_logical().clone();
        let o = code.one_logical().clone();
        let outer = |a: &Ket, b: &Ket| Operator::outer(a, b).expect("codewords share a space").into_matrix();
        let images = [[outer(&z, &z), outer(&z, &o)], [outer(&o, &z), outer(&o, &o)]];
        Self::new(code, images).expect("dimensions match")
    }

    pub fn code(&self) -> &CodePair {
        &self.code
    }

    pub fn images(&self) -> &[[Matrix; 2]; 2] {
        &self.images
    }

    /// Fidelity `⟨ψ|M[|ψ⟩⟨ψ|]|ψ⟩` for `|ψ⟩ = α|0_L⟩ + β|1_L⟩`.
    pub fn pure_fidelity(&self, alpha: C64, beta: C64) -> f64 {
        let c = [alpha, beta];
        let mut acc = ZERO;
        for u in 0..2 {
            for v in 0..2 {
                let w = c[u] * c[v].conj();
                for x in 0..2 {
                    for y in 0..2 {
                        acc += w * c[x].conj() * c[y] * self.tensor[u][v][x][y];
                    }
                }
            }
        }
        acc.re
    }

    pub fn bloch_fidelity(&self, point: BlochPoint) -> f64 {
        let alpha = C64::new((point.theta / 2.0).cos(), 0.0);
        let beta = C64::from_polar((point.theta / 2.0).sin(), point.phi);
        self.pure_fidelity(alpha, beta)
    }

    /// Six-state observations in the order of [`six_states`].
    pub fn observations(&self) -> [f64; 6] {
        let h = C64::new(1.0 / SQRT_2, 0.0);
        let ih = C64::new(0.0, 1.0 / SQRT_2);
        let one = C64::new(1.0, 0.0);
        // eigenstates of σx, σy, σz as defined by logical_paulis
        let states = [(h, h), (h, -h), (h, -ih), (h, ih), (ZERO, one), (one, ZERO)];
        let mut obs = [0.0; 6];
        for (k, (a, b)) in states.iter().enumerate() {
            obs[k] = self.pure_fidelity(*a, *b).clamp(0.0, 1.0);
        }
        obs
    }

    pub fn mean_fidelity(&self) -> f64 {
        self.observations().iter().sum::<f64>() / 6.0
    }
}

impl Channel for LogicalChannel {
    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.space() != self.code.space() {
            return Err(Error::DimensionMismatch {
                expected: self.code.space().factors().to_vec(),
                found: rho.space().factors().to_vec(),
            });
        }
        let words = [self.code.zero_logical().amplitudes(), self.code.one_logical().amplitudes()];
        let r = rho.matrix();
        let mut out = Matrix::zeros(r.nrows(), r.ncols());
        let mut residual = r.clone();
        for u in 0..2 {
            for v in 0..2 {
                let c = (words[u].adjoint() * r * words[v])[(0, 0)];
                out += &self.images[u][v] * c;
                residual -= words[u] * words[v].adjoint() * c;
            }
        }
        let leak = crate::fock::max_abs(&residual);
        if leak > CODE_SUPPORT_TOL {
            return Err(Error::InvalidDensity(format!("input has weight {leak:e} outside the code space")));
        }
        DensityMatrix::new_unchecked(rho.space().clone(), out)
    }
}

/// Sample of a Bloch-sphere fidelity map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochSample {
    pub point: BlochPoint,
    pub fidelity: f64,
}

/// Fidelity on a `n_theta × n_phi` grid with `θ` spanning `[0, π]`
/// inclusive and `φ` spanning `[0, 2π)`.
pub fn bloch_grid(channel: &LogicalChannel, n_theta: usize, n_phi: usize) -> Result<Vec<BlochSample>> {
    if n_theta < 2 || n_phi < 1 {
        return Err(Error::InvalidParameter(format!("Bloch grid {n_theta}×{n_phi} too small")));
    }
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = PI * i as f64 / (n_theta - 1) as f64;
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            let point = BlochPoint::new(theta, phi)?;
            out.push(BlochSample { point, fidelity: clip_unit(channel.bloch_fidelity(point))? });
        }
    }
    Ok(out)
}

/// CSV columns `theta, phi, F`.
pub fn write_bloch_csv<W: Write>(samples: &[BlochSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "phi", "F"])?;
    for s in samples {
        w.write_record([format_float(s.point.theta), format_float(s.point.phi), format_float(s.fidelity)])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean-fidelity curve from per-time logical channels, with minimum and
/// maximum over a 19×24 Bloch grid.
pub fn curve_from_channels(times: &[f64], channels: &[LogicalChannel]) -> Result<FidelityCurve> {
    if times.len() != channels.len() {
        return Err(Error::InvalidGrid(format!("{} times for {} channels", times.len(), channels.len())));
    }
    let mut mean = Vec::with_capacity(times.len());
    let mut lo = Vec::with_capacity(times.len());
    let mut hi = Vec::with_capacity(times.len());
    for ch in channels {
        mean.push(clip_unit(ch.mean_fidelity())?);
        let grid = bloch_grid(ch, 19, 24)?;
        lo.push(grid.iter().map(|s| s.fidelity).fold(f64::INFINITY, f64::min));
        hi.push(grid.iter().map(|s| s.fidelity).fold(f64::NEG_INFINITY, f64::max));
    }
    let curve = FidelityCurve { times: times.to_vec(), mean, min: Some(lo), max: Some(hi), per_state: Vec::new() };
    curve.validate()?;
    Ok(curve)
}

/// Channel given by Kraus operators, `ρ ↦ Σ K ρ K†`.
#[derive(Clone, Debug)]
pub struct KrausChannel {
    kraus: Vec<Operator>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<Operator>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::InvalidParameter("no Kraus operators".into()))?;
        if kraus.iter().any(|k| k.space() != first.space()) {
            return Err(Error::InvalidDimension("Kraus operators must share a space".into()));
        }
        Ok(Self { kraus })
    }

    /// `max |Σ K†K − I|`.
    pub fn trace_preservation_defect(&self) -> f64 {
        let d = self.kraus[0].dim();
        let mut s = Matrix::zeros(d, d);
        for k in &self.kraus {
            s += k.matrix().adjoint() * k.matrix();
        }
        crate::fock::max_abs(&(s - Matrix::identity(d, d)))
    }
}

impl Channel for KrausChannel {
    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let d = rho.dim();
        let mut out = Matrix::zeros(d, d);
        for k in &self.kraus {
            out += k.matrix() * rho.matrix() * k.matrix().adjoint();
        }
        DensityMatrix::new_unchecked(rho.space().clone(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{binomial_code, code_pair_from_coeffs, rl_code};
    use crate::fock::{Ket, SpaceSignature};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_channel(rho: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(rho.clone())
    }

    fn random_kraus(rng: &mut ChaCha8Rng, space: &SpaceSignature, rank: usize) -> KrausChannel {
        let d = space.dim();
        let g = Matrix::from_fn(rank * d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = g.qr().q();
        let kraus = (0..rank).map(|r| Operator::new(space.clone(), q.rows(r * d, d).into_owned()).unwrap()).collect();
        KrausChannel::new(kraus).unwrap()
    }

    #[test]
    fn state_fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r2 = DensityMatrix::from_ket(&Ket::fock(5, 2).unwrap()).unwrap();
        let r1 = DensityMatrix::from_ket(&Ket::fock(5, 1).unwrap()).unwrap();
        assert_eq!(state_fidelity(&r2, &r2).unwrap(), 1.0);
        assert_eq!(state_fidelity(&r2, &r1).unwrap(), 0.0);
        let v =
            nalgebra::DVector::from_fn(5, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let k = Ket::new(SpaceSignature::mode(5), v).unwrap().normalized().unwrap();
        let pure = DensityMatrix::from_ket(&k).unwrap();
        let mixed = DensityMatrix::maximally_mixed(SpaceSignature::mode(5));
        assert!((state_fidelity(&pure, &mixed).unwrap() - 0.2).abs() < 1e-14);
        assert!(matches!(state_fidelity(&mixed, &pure), Err(Error::NotPure { .. })));
    }

    #[test]
    fn six_state_examples() {
        let code = rl_code(6).unwrap();
        assert!((mean_fidelity_six(&identity_channel, &code).unwrap() - 1.0).abs() < 1e-14);
        let p = logical_paulis(&code);
        let half = p.identity.matrix() * C64::new(0.5, 0.0);
        let depol = |rho: &DensityMatrix| DensityMatrix::new(rho.space().clone(), half.clone());
        assert!((mean_fidelity_six(&depol, &code).unwrap() - 0.5).abs() < 1e-14);
        assert!((mean_fidelity_sphere(&depol, &code, 16, 16).unwrap() - 0.5).abs() < 1e-10);
        assert!((mean_fidelity_sphere(&identity_channel, &code, 16, 16).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn six_states_are_pauli_eigenstates() {
        let code = binomial_code(6).unwrap();
        let p = logical_paulis(&code);
        let states = six_states(&code).unwrap();
        for (k, rho) in states.iter().enumerate() {
            let j = k / 2 + 1;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let e = crate::fock::expectation_real(p.get(j), rho).unwrap();
            assert!((e - sign).abs() < 1e-14);
            assert!((rho.purity() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_loss_is_rejected() {
        let code = rl_code(6).unwrap();
        let lossy =
            |rho: &DensityMatrix| DensityMatrix::new_unchecked(rho.space().clone(), rho.matrix() * C64::new(0.9, 0.0));
        assert!(matches!(mean_fidelity_six(&lossy, &code), Err(Error::NotTracePreserving { .. })));
    }

    #[test]
    fn sphere_matches_six_for_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let a: f64 = rng.random_range(0.0..PI);
            let b: f64 = rng.random_range(0.0..PI);
            let code = code_pair_from_coeffs(&[a.cos(), a.sin()], &[b.cos(), b.sin()], 6).unwrap();
            let ch = random_kraus(&mut rng, code.space(), 3);
            assert!(ch.trace_preservation_defect() < 1e-12);
            let six = mean_fidelity_six(&ch, &code).unwrap();
            let sphere = mean_fidelity_sphere(&ch, &code, 32, 32).unwrap();
            assert!((six - sphere).abs() < 1e-6, "{six} vs {sphere}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let int = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((int(2) - 2.0 / 3.0).abs() < 1e-14);
        assert!((int(30) - 2.0 / 31.0).abs() < 1e-13);
        assert!(int(7).abs() < 1e-14);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(break_even_mean_fidelity(0.0), 1.0);
        assert!((break_even_mean_fidelity(0.6) - 0.838408).abs() < 5e-7);
        assert!((break_even_mean_fidelity(0.17) - 0.9468).abs() < 5e-5);
        assert_eq!(rl_analytic_mean_fidelity(0.0), 1.0);
        // the quoted 0.9905 uses u rounded to 0.17; the exact u gives 0.99042
        assert!((rl_analytic_mean_fidelity(0.17) - 0.9905).abs() < 1e-4);
        assert!((rl_analytic_mean_fidelity(0.6) - (2.0 / 3.0 + (-0.102944f64).exp() / 3.0)).abs() < 1e-6);
        assert!((rl_analytic_mean_fidelity(0.6) - 0.96739).abs() < 5e-6);
        let eq = BlochPoint::new(PI / 2.0, 0.0).unwrap();
        assert!((rl_analytic_state_fidelity(eq, 0.6) - 0.95109).abs() < 5e-6);
        assert_eq!(rl_analytic_state_fidelity(BlochPoint::new(0.0, 1.0).unwrap(), 0.6), 1.0);
        assert!((rl_analytic_state_fidelity(BlochPoint::new(PI, 0.0).unwrap(), 5.0) - 1.0).abs() < 1e-15);
        assert!((analytic_mean_fidelity(NAIVE_DECAY_RATE, 0.6) - 0.93958).abs() < 5e-6);
    }

    #[test]
    fn closed_form_orderings_on_grid() {
        let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.01).collect();
        for w in grid.windows(2) {
            assert!(break_even_mean_fidelity(w[1]) < break_even_mean_fidelity(w[0]));
            assert!(rl_analytic_mean_fidelity(w[1]) < rl_analytic_mean_fidelity(w[0]));
        }
        for &t in &grid {
            assert!(rl_analytic_mean_fidelity(t) > 2.0 / 3.0);
            assert!(rl_analytic_mean_fidelity(t) > break_even_mean_fidelity(t));
            let eq = rl_analytic_state_fidelity(BlochPoint::new(PI / 2.0, 0.0).unwrap(), t);
            for k in 0..=20 {
                let p = BlochPoint::new(PI * k as f64 / 20.0, 0.0).unwrap();
                assert!(rl_analytic_state_fidelity(p, t) >= eq - 1e-15);
            }
        }
    }

    #[test]
    fn sliding_max_examples() {
        let t: Vec<f64> = (0..13).map(|i| i as f64 * 0.1).collect();
        let v = vec![1.0, 0.2, 0.3, 0.9, 0.1, 0.0, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0, 0.05];
        assert_eq!(sliding_window_max(&t, &v, 0.0).unwrap(), v);
        // brute-force oracle
        for tau in [0.6, 0.7, 2.0] {
            let got = sliding_window_max(&t, &v, tau).unwrap();
            for i in 0..t.len() {
                let expected = (i..t.len())
                    .filter(|&j| t[j] <= t[i] + tau + 1e-12)
                    .map(|j| v[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(got[i], expected, "tau={tau} i={i}");
            }
        }
        let all = sliding_window_max(&t, &v, 2.0).unwrap();
        assert_eq!(all[0], 1.0);
        assert!(matches!(sliding_window_max(&t, &v, 0.3), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn coarse_graining_is_monotone_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.001).collect();
        let v: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let curve = FidelityCurve::new(t, v).unwrap();
        let mut prev = coarse_grained(&curve, 0.0).unwrap();
        for tau in [0.006, 0.012, 0.018, 0.05] {
            let next = coarse_grained(&curve, tau).unwrap();
            assert!(next.mean.iter().zip(&prev.mean).all(|(a, b)| a >= b));
            prev = next;
        }
    }

    #[test]
    fn logical_channel_identity_and_apply() {
        let code = rl_code(6).unwrap();
        let id = LogicalChannel::identity(code.clone());
        assert!((id.mean_fidelity() - 1.0).abs() < 1e-15);
        let obs = id.observations();
        let direct = six_observations(&identity_channel, &code).unwrap();
        for k in 0..6 {
            assert!((obs[k] - direct[k]).abs() < 1e-15);
        }
        let rho = DensityMatrix::from_ket(&code.bloch_state(1.0, 2.0)).unwrap();
        let out = id.apply(&rho).unwrap();
        assert!(crate::fock::max_abs(&(out.matrix() - rho.matrix())) < 1e-15);
        let outside = DensityMatrix::from_ket(&Ket::fock(7, 1).unwrap()).unwrap();
        assert!(id.apply(&outside).is_err());
    }

    #[test]
    fn logical_channel_observation_order_matches_six_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let code = binomial_code(6).unwrap();
        let ch = random_kraus(&mut rng, code.space(), 2);
        let z = code.zero_logical().clone();
        let o = code.one_logical().clone();
        let unit = |a: &Ket, b: &Ket| {
            let m = Operator::outer(a, b).unwrap().into_matrix();
            let rho = DensityMatrix::new_unchecked(code.space().clone(), m).unwrap();
            ch.apply(&rho).unwrap().into_matrix()
        };
        let images = [[unit(&z, &z), unit(&z, &o)], [unit(&o, &z), unit(&o, &o)]];
        let lc = LogicalChannel::new(code.clone(), images).unwrap();
        let a = lc.observations();
        let b = six_observations(&ch, &code).unwrap();
        for k in 0..6 {
            assert!((a[k] - b[k]).abs() < 1e-12, "k={k}");
        }
        let sphere = mean_fidelity_sphere(&lc, &code, 16, 16).unwrap();
        assert!((sphere - lc.mean_fidelity()).abs() < 1e-10);
    }

    #[test]
    fn curve_csv() {
        let c = FidelityCurve::new(vec![0.0, 0.5], vec![1.0, 0.75]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,F_mean\n0,1\n0.5,0.75\n");
        assert!(FidelityCurve::new(vec![0.0], vec![1.1]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn six_equals_sphere(seed in any::<u64>(), rank in 1usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a: f64 = rng.random_range(0.0..PI);
                let b: f64 = rng.random_range(0.0..PI);
                let code = code_pair_from_coeffs(&[a.cos(), a.sin()], &[b.cos(), b.sin()], 6).unwrap();
                let ch = random_kraus(&mut rng, code.space(), rank);
                let six = mean_fidelity_six(&ch, &code).unwrap();
                let sphere = mean_fidelity_sphere(&ch, &code, 16, 16).unwrap();
                prop_assert!((six - sphere).abs() < 1e-6);
            }
        }
    }
}
