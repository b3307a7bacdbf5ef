//! Reduced models of the mode after eliminating the lossy qubit.
//!
//! With strong qubit damping the mode alone obeys
//! `dρ/dt = (γa/2)D[a]ρ + (γa·λ/2)D[L]ρ`. [`effective_lambda`] returns the
//! conventional `λ = 8g²/(γa·γb)`; eliminating the qubit from
//! [`full_model`] as normalised here gives `4g²/(γa·γb)` instead. On the
//! first five Fock levels the populations `ρ11..ρ44` and the coherences
//! `ρ24`, `ρ13` form a closed linear system; `ρ00` follows from trace
//! conservation (`dρ00/dt = γa·ρ11` for every variant below). Times are
//! in units of `1/γa` throughout this module.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{engineered_jump, kl_compensator, naive_jump, rl_code, shifted_fock_code, shifted_recovery_jump};
use crate::dynamics::{lindblad_rhs, ode, NoiseChannel, OdeOptions};
use crate::error::{Error, Result};
use crate::fidelity::{break_even_mean_fidelity, BlochPoint, LogicalChannel};
use crate::fock::{annihilation, DensityMatrix, Matrix, Operator, C64, ZERO};
use crate::model::{effective_model_with_loss, full_model};

/// Below this `λ` the first-order expressions are outside their regime.
pub const ASYMPTOTIC_LAMBDA: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub lambda: f64,
    pub gamma_a: f64,
}

impl EffectiveParams {
    pub fn new(lambda: f64, gamma_a: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(gamma_a.is_finite() && gamma_a > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma_a must be positive, got {gamma_a}")));
        }
        Ok(Self { lambda, gamma_a })
    }

    /// `C = λ/8 = g²/(γa·γb)`.
    pub fn cooperativity(&self) -> f64 {
        self.lambda / 8.0
    }
}

/// `λ = 8g²/(γa·γb)`.
pub fn effective_lambda(g: f64, gamma_a: f64, gamma_b: f64) -> Result<EffectiveParams> {
    for (name, x) in [("g", g), ("gamma_a", gamma_a), ("gamma_b", gamma_b)] {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
        }
    }
    EffectiveParams::new(8.0 * g * g / (gamma_a * gamma_b), gamma_a)
}

/// `(γa/2)D[a]ρ + (γa·λ/2)D[L]ρ`.
pub fn effective_rhs(rho: &DensityMatrix, params: &EffectiveParams, recovery: &Operator) -> Result<Matrix> {
    let a = annihilation(rho.dim())?;
    let channel = NoiseChannel::new(vec![(a, params.gamma_a), (recovery.clone(), params.gamma_a * params.lambda)])?;
    lindblad_rhs(&Operator::zeros(rho.space().clone()), &channel, rho)
}

/// Recovery and loss pair of a reduced model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `L = (|4⟩⟨3| + |2⟩⟨1|)/√2`, loss `a`.
    Rl,
    /// `L = (√2|2⟩⟨1| + |4⟩⟨3|)/√3`, loss `a`.
    Naive,
    /// RL recovery with loss `a + (2−√2)|1⟩⟨2|`.
    KlModified,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Rl, Variant::Naive, Variant::KlModified];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rl => "rl",
            Variant::Naive => "naive",
            Variant::KlModified => "kl_modified",
        }
    }

    /// Recovery operator on `truncation + 1` levels.
    pub fn recovery(self, truncation: usize) -> Result<Operator> {
        match self {
            Variant::Rl | Variant::KlModified => engineered_jump(&rl_code(truncation)?),
            Variant::Naive => naive_jump(truncation),
        }
    }

    /// Photon-loss operator on `truncation + 1` levels.
    pub fn loss(self, truncation: usize) -> Result<Operator> {
        let a = annihilation(truncation + 1)?;
        match self {
            Variant::KlModified => a.try_add(&kl_compensator(truncation)?),
            _ => Ok(a),
        }
    }

    /// Coherence decay rate `u` of the `λ → ∞` limit.
    pub fn limit_decay_rate(self) -> f64 {
        let (_, coh) = first_order_table(self);
        -coh.rate0
    }

    fn coefficients(self) -> Coefficients {
        let s8 = 2.0 * 8f64.sqrt();
        match self {
            Variant::Rl => Coefficients { p4: 1.0, p2: 1.0, p24: 1.0, c2: 4.0, c1: 4.0, c24: 6.0, c13: s8 },
            Variant::Naive => Coefficients {
                p4: 2.0 / 3.0,
                p2: 4.0 / 3.0,
                p24: 2.0 * SQRT_2 / 3.0,
                c2: 4.0,
                c1: 4.0,
                c24: 6.0,
                c13: s8,
            },
            Variant::KlModified => Coefficients { p4: 1.0, p2: 1.0, p24: 1.0, c2: 8.0, c1: 8.0, c24: 8.0, c13: 8.0 },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(Variant::Rl),
            "naive" => Ok(Variant::Naive),
            "kl_modified" | "kl" => Ok(Variant::KlModified),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}' (rl, naive, kl_modified)"))),
        }
    }
}

/// Coefficients of the five-level equations, in units of `γa`:
///
/// ```text
/// 2ρ44' = −8ρ44 + p4·λρ33        2ρ24' = −c24·ρ24 + p24·λρ13
/// 2ρ33' = 8ρ44 − 6ρ33 − p4·λρ33  2ρ13' = c13·ρ24 − 4ρ13 − λρ13
/// 2ρ22' = 6ρ33 − c2·ρ22 + p2·λρ11
/// 2ρ11' = c1·ρ22 − 2ρ11 − p2·λρ11
/// ```
#[derive(Clone, Copy, Debug)]
struct Coefficients {
    p4: f64,
    p2: f64,
    p24: f64,
    c2: f64,
    c1: f64,
    c24: f64,
    c13: f64,
}

/// The tracked elements of a state on the first five Fock levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiveLevelState {
    /// `ρ00 … ρ44`.
    pub diag: [f64; 5],
    pub rho24: C64,
    pub rho13: C64,
}

impl FiveLevelState {
    pub fn zero() -> Self {
        Self { diag: [0.0; 5], rho24: ZERO, rho13: ZERO }
    }

    pub fn rho42(&self) -> C64 {
        self.rho24.conj()
    }

    pub fn rho31(&self) -> C64 {
        self.rho13.conj()
    }

    pub fn validate(&self) -> Result<()> {
        if self.diag.iter().any(|&p| !p.is_finite() || p < -1e-9) {
            return Err(Error::InvalidDensity(format!("negative population in {:?}", self.diag)));
        }
        let sum: f64 = self.diag.iter().sum();
        if sum > 1.0 + 1e-8 {
            return Err(Error::InvalidDensity(format!("populations sum to {sum}")));
        }
        Ok(())
    }

    /// Reads the tracked elements of a state with at least five levels.
    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        if rho.dim() < 5 {
            return Err(Error::InvalidDimension(format!("need at least 5 levels, got {}", rho.dim())));
        }
        let mut diag = [0.0; 5];
        for (n, p) in diag.iter_mut().enumerate() {
            *p = rho.get(n, n).re;
        }
        let s = Self { diag, rho24: rho.get(2, 4), rho13: rho.get(1, 3) };
        s.validate()?;
        Ok(s)
    }

    /// Pure code state `c2|2⟩ + c4|4⟩`.
    pub fn from_code_amplitudes(c2: C64, c4: C64) -> Result<Self> {
        let norm = c2.norm_sqr() + c4.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm: norm.sqrt() });
        }
        let mut s = Self::zero();
        s.diag[2] = c2.norm_sqr();
        s.diag[4] = c4.norm_sqr();
        s.rho24 = c2 * c4.conj();
        Ok(s)
    }

    /// 5×5 matrix holding the tracked elements; untracked coherences are 0.
    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(5, 5);
        for (n, &p) in self.diag.iter().enumerate() {
            m[(n, n)] = C64::new(p, 0.0);
        }
        m[(2, 4)] = self.rho24;
        m[(4, 2)] = self.rho42();
        m[(1, 3)] = self.rho13;
        m[(3, 1)] = self.rho31();
        m
    }

    /// `⟨ψ|ρ|ψ⟩` for `|ψ⟩ = c2|2⟩ + c4|4⟩`.
    pub fn code_overlap(&self, c2: C64, c4: C64) -> f64 {
        c2.norm_sqr() * self.diag[2] + c4.norm_sqr() * self.diag[4] + 2.0 * (c2.conj() * self.rho24 * c4).re
    }

    fn to_vec(self) -> [f64; 9] {
        let d = self.diag;
        [d[0], d[1], d[2], d[3], d[4], self.rho24.re, self.rho24.im, self.rho13.re, self.rho13.im]
    }

    fn from_vec(v: &[f64]) -> Self {
        Self { diag: [v[0], v[1], v[2], v[3], v[4]], rho24: C64::new(v[5], v[6]), rho13: C64::new(v[7], v[8]) }
    }
}

/// Time derivative of the tracked elements in units of `γa`.
pub fn five_level_rhs(state: &FiveLevelState, lambda: f64, variant: Variant) -> FiveLevelState {
    let c = variant.coefficients();
    let [_, r11, r22, r33, r44] = state.diag;
    let d44 = 0.5 * (-8.0 * r44 + c.p4 * lambda * r33);
    let d33 = 0.5 * (8.0 * r44 - 6.0 * r33 - c.p4 * lambda * r33);
    let d22 = 0.5 * (6.0 * r33 - c.c2 * r22 + c.p2 * lambda * r11);
    let d11 = 0.5 * (c.c1 * r22 - 2.0 * r11 - c.p2 * lambda * r11);
    let d00 = -(d11 + d22 + d33 + d44);
    let d24 = (state.rho24 * -c.c24 + state.rho13 * (c.p24 * lambda)) * 0.5;
    let d13 = (state.rho24 * c.c13 - state.rho13 * (4.0 + lambda)) * 0.5;
    FiveLevelState { diag: [d00, d11, d22, d33, d44], rho24: d24, rho13: d13 }
}

/// Numerical solution of the five-level equations on `times` (units of `1/γa`).
pub fn integrate_five_level(
    initial: &FiveLevelState,
    lambda: f64,
    variant: Variant,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<FiveLevelState>> {
    initial.validate()?;
    let mut out = Vec::with_capacity(times.len());
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let d = five_level_rhs(&FiveLevelState::from_vec(y), lambda, variant).to_vec();
        dy.copy_from_slice(&d);
    };
    ode::dopri5(
        f,
        &initial.to_vec(),
        times,
        opts,
        |_| {},
        |_, _, y| {
            out.push(FiveLevelState::from_vec(y));
            Ok(())
        },
    )?;
    Ok(out)
}

/// Slow mode of a linear block, to first order in `ε = 1/λ`:
/// rate `rate0 + rate1·ε` and projector `p0 + p1·ε` (row-major).
struct SlowMode<const N: usize> {
    rate0: f64,
    rate1: f64,
    p0: [[f64; N]; N],
    p1: [[f64; N]; N],
}

/// First-order slow modes of each variant: two for the populations
/// `(ρ44, ρ33, ρ22, ρ11)` and one for the coherences `(ρ24, ρ13)`. The
/// entries are the series of the exact eigenprojectors, whose fast
/// partners decay at rate `~λ/2` and are dropped.
fn first_order_table(variant: Variant) -> ([SlowMode<4>; 2], SlowMode<2>) {
    let r2 = SQRT_2;
    match variant {
        Variant::Rl => (
            [
                SlowMode {
                    rate0: 0.0,
                    rate1: -24.0,
                    p0: [[1.0, 1.0, 0.0, 0.0], [0.0; 4], [-1.2, -1.2, 0.0, 0.0], [0.0; 4]],
                    p1: [
                        [-8.0, -14.0, 0.0, 0.0],
                        [8.0, 8.0, 0.0, 0.0],
                        [72.0 / 25.0, 252.0 / 25.0, 0.0, 0.0],
                        [-24.0 / 5.0, -24.0 / 5.0, 0.0, 0.0],
                    ],
                },
                SlowMode {
                    rate0: 0.0,
                    rate1: -4.0,
                    p0: [[0.0; 4], [0.0; 4], [1.2, 1.2, 1.0, 1.0], [0.0; 4]],
                    p1: [
                        [0.0; 4],
                        [0.0; 4],
                        [-72.0 / 25.0, -102.0 / 25.0, -4.0, -6.0],
                        [24.0 / 5.0, 24.0 / 5.0, 4.0, 4.0],
                    ],
                },
            ],
            SlowMode {
                rate0: 2.0 * r2 - 3.0,
                rate1: 4.0 * (r2 - 4.0),
                p0: [[1.0, 1.0], [0.0, 0.0]],
                p1: [[-4.0 * r2, 2.0 - 8.0 * r2], [4.0 * r2, 4.0 * r2]],
            },
        ),
        Variant::Naive => (
            [
                SlowMode {
                    rate0: 0.0,
                    rate1: -36.0,
                    p0: [[1.0, 1.0, 0.0, 0.0], [0.0; 4], [-12.0 / 11.0, -12.0 / 11.0, 0.0, 0.0], [0.0; 4]],
                    p1: [
                        [-12.0, -21.0, 0.0, 0.0],
                        [12.0, 12.0, 0.0, 0.0],
                        [18.0 / 11.0, 126.0 / 11.0, 0.0, 0.0],
                        [-36.0 / 11.0, -36.0 / 11.0, 0.0, 0.0],
                    ],
                },
                SlowMode {
                    rate0: 0.0,
                    rate1: -3.0,
                    p0: [[0.0; 4], [0.0; 4], [12.0 / 11.0, 12.0 / 11.0, 1.0, 1.0], [0.0; 4]],
                    p1: [
                        [0.0; 4],
                        [0.0; 4],
                        [-18.0 / 11.0, -27.0 / 11.0, -3.0, -4.5],
                        [36.0 / 11.0, 36.0 / 11.0, 3.0, 3.0],
                    ],
                },
            ],
            SlowMode {
                rate0: -1.0 / 3.0,
                rate1: -80.0 / 9.0,
                p0: [[1.0, 2.0 * r2 / 3.0], [0.0, 0.0]],
                p1: [[-16.0 / 3.0, -52.0 * r2 / 9.0], [4.0 * r2, 16.0 / 3.0]],
            },
        ),
        Variant::KlModified => (
            [
                SlowMode {
                    rate0: 0.0,
                    rate1: -24.0,
                    p0: [[1.0, 1.0, 0.0, 0.0], [0.0; 4], [-1.5, -1.5, 0.0, 0.0], [0.0; 4]],
                    p1: [
                        [-8.0, -14.0, 0.0, 0.0],
                        [8.0, 8.0, 0.0, 0.0],
                        [9.0, 18.0, 0.0, 0.0],
                        [-12.0, -12.0, 0.0, 0.0],
                    ],
                },
                SlowMode {
                    rate0: 0.0,
                    rate1: -8.0,
                    p0: [[0.0; 4], [0.0; 4], [1.5, 1.5, 1.0, 1.0], [0.0; 4]],
                    p1: [[0.0; 4], [0.0; 4], [-9.0, -12.0, -8.0, -10.0], [12.0, 12.0, 8.0, 8.0]],
                },
            ],
            SlowMode { rate0: 0.0, rate1: -16.0, p0: [[1.0, 1.0], [0.0, 0.0]], p1: [[-8.0, -12.0], [8.0, 8.0]] },
        ),
    }
}

fn apply_mode<T, const N: usize>(mode: &SlowMode<N>, eps: f64, gamma_t: f64, x0: &[T; N]) -> [T; N]
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let decay = ((mode.rate0 + mode.rate1 * eps) * gamma_t).exp();
    let mut out = [T::default(); N];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, &x) in x0.iter().enumerate() {
            *o = *o + x * ((mode.p0[i][j] + mode.p1[i][j] * eps) * decay);
        }
    }
    out
}

/// First-order closed-form solution with a regime flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticElements {
    pub state: FiveLevelState,
    /// `false` when `λ < 100`, where the expansion is not controlled.
    pub asymptotic: bool,
}

/// Expansion to first order in `1/λ` and `γa·t/λ` of the five-level
/// solution. For the `rl` and `kl_modified` variants with a code-space
/// start these are the familiar expressions
/// `ρ44 = (1 − 8/λ)ρ44(0)e^{−24γa t/λ}`, `ρ33 = (8/λ)ρ44(0)e^{−24γa t/λ}`, …
pub fn analytic_elements(initial: &FiveLevelState, lambda: f64, gamma_t: f64, variant: Variant) -> AnalyticElements {
    let eps = 1.0 / lambda;
    let (pops, coh) = first_order_table(variant);
    let d = initial.diag;
    let x0 = [d[4], d[3], d[2], d[1]];
    let mut x = [0.0; 4];
    for mode in &pops {
        let part = apply_mode(mode, eps, gamma_t, &x0);
        for k in 0..4 {
            x[k] += part[k];
        }
    }
    let y = apply_mode(&coh, eps, gamma_t, &[initial.rho24, initial.rho13]);
    let total: f64 = d.iter().sum();
    let diag = [total - x.iter().sum::<f64>(), x[3], x[2], x[1], x[0]];
    AnalyticElements {
        state: FiveLevelState { diag, rho24: y[0], rho13: y[1] },
        asymptotic: lambda >= ASYMPTOTIC_LAMBDA,
    }
}

/// The `λ → ∞` state: code-space populations frozen, the `|2⟩⟨4|`
/// coherence damped by `e^{−u·γa t}`, everything else zero.
pub fn limit_density(initial: &DensityMatrix, gamma_t: f64, u: f64) -> Result<DensityMatrix> {
    if initial.dim() < 5 {
        return Err(Error::InvalidDimension(format!("need at least 5 levels, got {}", initial.dim())));
    }
    let d = initial.dim();
    for r in 0..d {
        for c in 0..d {
            let inside = matches!(r, 2 | 4) && matches!(c, 2 | 4);
            if !inside && initial.get(r, c).norm() > 1e-10 {
                return Err(Error::InvalidDensity(format!("support outside span{{|2⟩,|4⟩}} at ({r},{c})")));
            }
        }
    }
    let damp = (-u * gamma_t).exp();
    let mut m = Matrix::zeros(d, d);
    m[(2, 2)] = initial.get(2, 2);
    m[(4, 4)] = initial.get(4, 4);
    m[(2, 4)] = initial.get(2, 4) * damp;
    m[(4, 2)] = initial.get(4, 2) * damp;
    DensityMatrix::new(initial.space().clone(), m)
}

/// Photon-loss rate averaged over the Bloch sphere of the `|m⟩`/`|m+2⟩`
/// code: `(m+1)·γa`.
pub fn mean_jump_probability(m: usize, gamma_a: f64) -> f64 {
    (m as f64 + 1.0) * gamma_a
}

/// Mean fidelities of a variant's effective model at `γa·t` values.
pub fn effective_mean_fidelities(
    variant: Variant,
    lambda: f64,
    gamma_ts: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<LogicalChannel>> {
    let truncation = 6;
    let code = rl_code(truncation)?;
    let sys = effective_model_with_loss(&variant.recovery(truncation)?, &variant.loss(truncation)?, lambda, 1.0)?;
    sys.logical_channels(&code, gamma_ts, opts)
}

/// One row of the shifted-code sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedCodePoint {
    pub m: usize,
    pub mean_fidelity: f64,
    /// Minimum over `φ` of the state fidelity on the equator `θ = π/2`.
    pub equator_fidelity: f64,
    /// `false` when the equator fidelity is below the break-even mean.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedCodeSweep {
    pub points: Vec<ShiftedCodePoint>,
    pub break_even: f64,
}

impl ShiftedCodeSweep {
    /// Best valid `m`, if any.
    pub fn argmax(&self) -> Option<usize> {
        self.points.iter().filter(|p| p.valid).max_by(|a, b| a.mean_fidelity.total_cmp(&b.mean_fidelity)).map(|p| p.m)
    }
}

/// Full qubit-coupled simulation of the `|m+2⟩`/`|m⟩` codes with their
/// engineered recovery, evaluated at time `t`. Rates share one time unit.
pub fn shifted_code_sweep(
    ms: &[usize],
    g: f64,
    gamma_a: f64,
    gamma_b: f64,
    t: f64,
    opts: &OdeOptions,
) -> Result<ShiftedCodeSweep> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    let points = ms
        .par_iter()
        .map(|&m| {
            let truncation = m + 5;
            let code = shifted_fock_code(m, truncation)?;
            let recovery = shifted_recovery_jump(m, truncation)?;
            let sys = full_model(&recovery, g, gamma_a, gamma_b)?;
            let channels = sys.logical_channels(&code, &[0.0, t], opts)?;
            let ch = &channels[1];
            let equator = (0..48)
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / 48.0;
                    ch.bloch_fidelity(BlochPoint::new(std::f64::consts::FRAC_PI_2, phi).expect("valid point"))
                })
                .fold(f64::INFINITY, f64::min);
            Ok(ShiftedCodePoint { m, mean_fidelity: ch.mean_fidelity(), equator_fidelity: equator, valid: true })
        })
        .collect::<Result<Vec<_>>>()?;
    let break_even = break_even_mean_fidelity(gamma_a * t);
    let points =
        points.into_iter().map(|p| ShiftedCodePoint { valid: p.equator_fidelity >= break_even, ..p }).collect();
    Ok(ShiftedCodeSweep { points, break_even })
}
