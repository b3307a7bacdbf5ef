//! Three-component implementation model: encoding mode `a`, an ancilla
//! qubit and a lossy mode `c`, in the rotating frame where the control
//! fields reduce to two effective Hamiltonians.
//!
//! Time is in microseconds and frequencies in rad/μs internally; the JSON
//! config carries explicit unit tags.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codes::rl_code;
use crate::dynamics::{format_float, uniform_grid, NoiseChannel, OdeOptions};
use crate::error::{Error, Result};
use crate::fidelity::{FidelityCurve, LogicalChannel};
use crate::fock::{
    annihilation, partial_trace_matrix, qubit_lowering, qubit_raising, tensor_all, DensityMatrix, Ket, Operator,
    SpaceSignature, C64,
};
use crate::model::{full_model, OpenSystem};

/// Smallest mode-`a` truncation: the code reaches `|4⟩`, plus guard levels.
pub const MIN_MODE_A_LEVELS: usize = 7;
pub const MIN_MODE_C_LEVELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyUnit {
    #[serde(rename = "MHz*2pi")]
    MegahertzTimes2Pi,
    #[serde(rename = "kHz*2pi")]
    KilohertzTimes2Pi,
    #[serde(rename = "Hz*2pi")]
    HertzTimes2Pi,
    #[serde(rename = "rad/us")]
    RadPerMicrosecond,
}

/// A frequency or rate with its unit, e.g. `{"value": 0.05, "unit": "MHz*2pi"}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frequency {
    pub value: f64,
    pub unit: FrequencyUnit,
}

impl Frequency {
    pub fn mhz_2pi(value: f64) -> Self {
        Self { value, unit: FrequencyUnit::MegahertzTimes2Pi }
    }

    pub fn khz_2pi(value: f64) -> Self {
        Self { value, unit: FrequencyUnit::KilohertzTimes2Pi }
    }

    pub fn rad_per_us(&self) -> f64 {
        let two_pi = 2.0 * PI;
        match self.unit {
            FrequencyUnit::MegahertzTimes2Pi => two_pi * self.value,
            FrequencyUnit::KilohertzTimes2Pi => two_pi * self.value * 1e-3,
            FrequencyUnit::HertzTimes2Pi => two_pi * self.value * 1e-6,
            FrequencyUnit::RadPerMicrosecond => self.value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeUnit {
    #[serde(rename = "ms")]
    Millisecond,
    #[serde(rename = "us")]
    Microsecond,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Duration {
    pub value: f64,
    pub unit: TimeUnit,
}

impl Duration {
    pub fn ms(value: f64) -> Self {
        Self { value, unit: TimeUnit::Millisecond }
    }

    pub fn microseconds(&self) -> f64 {
        match self.unit {
            TimeUnit::Millisecond => self.value * 1e3,
            TimeUnit::Microsecond => self.value,
        }
    }
}

/// Which rotating-frame Hamiltonian drives the ancillas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardwareVariant {
    /// Qubit–`c` exchange only when mode `a` holds 2 or 4 photons.
    Heff0,
    /// Unconditional qubit–`c` exchange.
    Heff1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub alpha0: Frequency,
    pub alpha1: Frequency,
    pub gamma_a1: Frequency,
    pub gamma_b1: Frequency,
    pub gamma_c1: Frequency,
    pub mode_a_levels: usize,
    pub mode_c_levels: usize,
    pub t_final: Duration,
    /// Number of output samples including `t = 0`.
    pub samples: usize,
    pub variant: HardwareVariant,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            alpha0: Frequency::mhz_2pi(0.05),
            alpha1: Frequency::mhz_2pi(0.07),
            gamma_a1: Frequency::khz_2pi(0.2),
            gamma_b1: Frequency::khz_2pi(2.0),
            gamma_c1: Frequency::mhz_2pi(0.12),
            mode_a_levels: MIN_MODE_A_LEVELS,
            mode_c_levels: MIN_MODE_C_LEVELS,
            t_final: Duration::ms(3.0),
            samples: 61,
            variant: HardwareVariant::Heff0,
            rtol: 1e-7,
            atol: 1e-9,
        }
    }
}

/// Rates in rad/μs.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Rates {
    alpha0: f64,
    alpha1: f64,
    gamma_a1: f64,
    gamma_b1: f64,
    gamma_c1: f64,
}

impl HardwareConfig {
    fn rates(&self) -> Rates {
        Rates {
            alpha0: self.alpha0.rad_per_us(),
            alpha1: self.alpha1.rad_per_us(),
            gamma_a1: self.gamma_a1.rad_per_us(),
            gamma_b1: self.gamma_b1.rad_per_us(),
            gamma_c1: self.gamma_c1.rad_per_us(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_a_levels < MIN_MODE_A_LEVELS {
            return Err(Error::TruncationTooSmall { truncation: self.mode_a_levels, required: MIN_MODE_A_LEVELS });
        }
        if self.mode_c_levels < MIN_MODE_C_LEVELS {
            return Err(Error::TruncationTooSmall { truncation: self.mode_c_levels, required: MIN_MODE_C_LEVELS });
        }
        let r = self.rates();
        for (name, x) in [
            ("alpha0", r.alpha0),
            ("alpha1", r.alpha1),
            ("gamma_a1", r.gamma_a1),
            ("gamma_b1", r.gamma_b1),
            ("gamma_c1", r.gamma_c1),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {x}")));
            }
        }
        let t = self.t_final.microseconds();
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter(format!("t_final must be positive, got {t} us")));
        }
        if self.samples < 2 {
            return Err(Error::InvalidParameter("samples must be at least 2".into()));
        }
        Ok(())
    }

    /// Violations of `γ_c1 ≫ α1 ≥ α0`, the regime where the lossy mode
    /// can be eliminated. Read `≫` as at least a factor of 1.5.
    pub fn regime_warnings(&self) -> Vec<String> {
        let r = self.rates();
        let mut w = Vec::new();
        if r.alpha1 < r.alpha0 {
            w.push(format!("alpha1 ({}) is below alpha0 ({})", r.alpha1, r.alpha0));
        }
        if r.gamma_c1 < 1.5 * r.alpha1 {
            w.push(format!("gamma_c1 ({}) is not much larger than alpha1 ({})", r.gamma_c1, r.alpha1));
        }
        w
    }

    pub fn space(&self) -> SpaceSignature {
        SpaceSignature::mode(self.mode_a_levels)
            .concat(&SpaceSignature::qubit())
            .concat(&SpaceSignature::mode(self.mode_c_levels))
    }

    pub fn times_us(&self) -> Result<Vec<f64>> {
        uniform_grid(self.t_final.microseconds(), self.samples)
    }
}

/// `|2⟩⟨1| + |4⟩⟨3|` on `levels` Fock levels.
pub fn hardware_recovery(levels: usize) -> Result<Operator> {
    if levels < 5 {
        return Err(Error::TruncationTooSmall { truncation: levels.saturating_sub(1), required: 4 });
    }
    let space = SpaceSignature::mode(levels);
    let one = C64::new(1.0, 0.0);
    Operator::single_entry(space.clone(), 2, 1, one)?.try_add(&Operator::single_entry(space, 4, 3, one)?)
}

fn blue_sideband(cfg: &HardwareConfig, alpha0: f64) -> Result<Operator> {
    let l = hardware_recovery(cfg.mode_a_levels)?;
    let id_c = Operator::identity(SpaceSignature::mode(cfg.mode_c_levels));
    let up = tensor_all(&[&l, &qubit_raising(), &id_c])?;
    Ok(up.try_add(&up.dagger())?.scale(C64::new(alpha0, 0.0)))
}

/// `c†σ− + cσ+` on qubit ⊗ `c`.
fn qubit_c_exchange(c_levels: usize) -> Result<Operator> {
    let c = annihilation(c_levels)?;
    let x = crate::fock::tensor(&qubit_lowering(), &c.dagger());
    x.try_add(&x.dagger())
}

fn check(cfg: &HardwareConfig) -> Result<Rates> {
    cfg.validate()?;
    Ok(cfg.rates())
}

/// `α0(L_o σ+ + L_o† σ−) + Σ_{N=2,4} α1 |N⟩⟨N| (c†σ− + cσ+)`.
pub fn build_heff0(cfg: &HardwareConfig) -> Result<Operator> {
    let r = check(cfg)?;
    let mut diag = vec![0.0; cfg.mode_a_levels];
    diag[2] = 1.0;
    diag[4] = 1.0;
    let proj = Operator::diagonal(SpaceSignature::mode(cfg.mode_a_levels), &diag)?;
    let red = crate::fock::tensor(&proj, &qubit_c_exchange(cfg.mode_c_levels)?).scale(C64::new(r.alpha1, 0.0));
    blue_sideband(cfg, r.alpha0)?.try_add(&red)?.into_hermitian()
}

/// `α0(L_o σ+ + L_o† σ−) + α1 (c†σ− + cσ+)`.
pub fn build_heff1(cfg: &HardwareConfig) -> Result<Operator> {
    let r = check(cfg)?;
    let id_a = Operator::identity(SpaceSignature::mode(cfg.mode_a_levels));
    let red = crate::fock::tensor(&id_a, &qubit_c_exchange(cfg.mode_c_levels)?).scale(C64::new(r.alpha1, 0.0));
    blue_sideband(cfg, r.alpha0)?.try_add(&red)?.into_hermitian()
}

/// The three-component open system for `cfg.variant`, with dissipators
/// `(a, γa1)`, `(σ−, γb1)`, `(c, γc1)`.
pub fn hardware_system(cfg: &HardwareConfig) -> Result<OpenSystem> {
    let r = check(cfg)?;
    let h = match cfg.variant {
        HardwareVariant::Heff0 => build_heff0(cfg)?,
        HardwareVariant::Heff1 => build_heff1(cfg)?,
    };
    let id_a = Operator::identity(SpaceSignature::mode(cfg.mode_a_levels));
    let id_q = Operator::identity(SpaceSignature::qubit());
    let id_c = Operator::identity(SpaceSignature::mode(cfg.mode_c_levels));
    let a = annihilation(cfg.mode_a_levels)?;
    let c = annihilation(cfg.mode_c_levels)?;
    let mut noise = NoiseChannel::empty();
    for (op, rate) in [
        (tensor_all(&[&a, &id_q, &id_c])?, r.gamma_a1),
        (tensor_all(&[&id_a, &qubit_lowering(), &id_c])?, r.gamma_b1),
        (tensor_all(&[&id_a, &id_q, &c])?, r.gamma_c1),
    ] {
        if rate > 0.0 {
            noise.push(op, rate)?;
        }
    }
    OpenSystem::new(h, noise)
}

/// Mean-fidelity curve of the hardware model plus diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareRun {
    pub variant: HardwareVariant,
    pub times_ms: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    /// Largest `⟨c†c⟩` seen from either codeword.
    pub max_c_population: f64,
    /// Smallest eigenvalue of any reduced codeword state.
    pub min_reduced_eigenvalue: f64,
}

impl HardwareRun {
    pub fn curve(&self) -> Result<FidelityCurve> {
        FidelityCurve::new(self.times_ms.clone(), self.mean_fidelity.clone())
    }

    /// Mean fidelity at the sample nearest `t_ms`.
    pub fn fidelity_at_ms(&self, t_ms: f64) -> f64 {
        let i = self
            .times_ms
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t_ms).abs().total_cmp(&(b.1 - t_ms).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.mean_fidelity[i]
    }

    /// CSV columns `t_ms, F_mean`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_ms", "F_mean"])?;
        for (t, f) in self.times_ms.iter().zip(&self.mean_fidelity) {
            w.write_record([format_float(*t), format_float(*f)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evolves the RL code under the configured hardware model.
pub fn simulate_hardware(cfg: &HardwareConfig) -> Result<HardwareRun> {
    let sys = hardware_system(cfg)?;
    let code = rl_code(cfg.mode_a_levels - 1)?;
    let times = cfg.times_us()?;
    let opts = OdeOptions::with_tolerances(cfg.rtol, cfg.atol);
    let space = cfg.space();
    let n_c = {
        let n = crate::fock::number(cfg.mode_c_levels)?;
        let id_aq = Operator::identity(SpaceSignature::mode(cfg.mode_a_levels).concat(&SpaceSignature::qubit()));
        crate::fock::tensor(&id_aq, &n)
    };
    let mut max_c = 0.0_f64;
    let mut min_eig = f64::INFINITY;
    let channels = sys.logical_channels_observed(&code, &times, &opts, |_, _, mats| {
        for m in &mats[..2] {
            max_c = max_c.max((n_c.matrix() * m).trace().re);
            let reduced = partial_trace_matrix(&space, m, &[0])?;
            let rho = DensityMatrix::new_unchecked(SpaceSignature::mode(cfg.mode_a_levels), reduced)?;
            min_eig = min_eig.min(rho.min_eigenvalue());
        }
        Ok(())
    })?;
    Ok(HardwareRun {
        variant: cfg.variant,
        times_ms: times.iter().map(|t| t * 1e-3).collect(),
        mean_fidelity: channels.iter().map(LogicalChannel::mean_fidelity).collect(),
        max_c_population: max_c,
        min_reduced_eigenvalue: min_eig,
    })
}

/// Single-mode model the hardware reduces to after eliminating `c`:
/// coupling `g = α0`, qubit decay `γb = 4α1²/γc1`, recovery `L_o`.
pub fn eliminated_model_curve(cfg: &HardwareConfig) -> Result<Vec<f64>> {
    let r = check(cfg)?;
    if r.gamma_c1 <= 0.0 {
        return Err(Error::InvalidParameter("elimination needs gamma_c1 > 0".into()));
    }
    let gamma_b = 4.0 * r.alpha1 * r.alpha1 / r.gamma_c1;
    let sys = full_model(&hardware_recovery(cfg.mode_a_levels)?, r.alpha0, r.gamma_a1, gamma_b)?;
    let code = rl_code(cfg.mode_a_levels - 1)?;
    sys.mean_fidelities(&code, &cfg.times_us()?, &OdeOptions::with_tolerances(cfg.rtol, cfg.atol))
}

/// `|n, q, m⟩` index on the `a ⊗ qubit ⊗ c` space, `q = 1` excited.
pub fn basis_index(cfg: &HardwareConfig, n: usize, q: usize, m: usize) -> usize {
    (n * 2 + q) * cfg.mode_c_levels + m
}

/// `|n, q, m⟩` as a ket.
pub fn basis_ket(cfg: &HardwareConfig, n: usize, q: usize, m: usize) -> Result<Ket> {
    Ket::basis(cfg.space(), basis_index(cfg, n, q, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::break_even_mean_fidelity;
    use crate::model::photon_loss_model;

    fn el(h: &Operator, cfg: &HardwareConfig, bra: (usize, usize, usize), ket: (usize, usize, usize)) -> C64 {
        h.get(basis_index(cfg, bra.0, bra.1, bra.2), basis_index(cfg, ket.0, ket.1, ket.2))
    }

    #[test]
    fn heff0_matrix_elements() {
        let cfg = HardwareConfig::default();
        let h = build_heff0(&cfg).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        assert_eq!(h.dim(), 56);
        let a0 = cfg.alpha0.rad_per_us();
        let a1 = cfg.alpha1.rad_per_us();
        assert!((el(&h, &cfg, (2, 1, 0), (1, 0, 0)).re - a0).abs() < 1e-14);
        assert!((el(&h, &cfg, (4, 1, 0), (3, 0, 0)).re - a0).abs() < 1e-14);
        assert!((el(&h, &cfg, (4, 0, 1), (4, 1, 0)).re - a1).abs() < 1e-14);
        assert_eq!(el(&h, &cfg, (3, 0, 1), (3, 1, 0)), C64::new(0.0, 0.0));
    }

    #[test]
    fn heff1_differs_only_in_the_exchange_block() {
        let cfg = HardwareConfig::default();
        let h0 = build_heff0(&cfg).unwrap();
        let h1 = build_heff1(&cfg).unwrap();
        assert!(h1.hermiticity_defect() < 1e-12);
        let a1 = cfg.alpha1.rad_per_us();
        assert!((el(&h1, &cfg, (3, 0, 1), (3, 1, 0)).re - a1).abs() < 1e-14);
        let diff = h1.try_sub(&h0).unwrap();
        // expected: α1 Σ_{N≠2,4} |N⟩⟨N| ⊗ (c†σ− + cσ+)
        let mut diag = vec![1.0; cfg.mode_a_levels];
        diag[2] = 0.0;
        diag[4] = 0.0;
        let proj = Operator::diagonal(SpaceSignature::mode(cfg.mode_a_levels), &diag).unwrap();
        let expect = crate::fock::tensor(&proj, &qubit_c_exchange(cfg.mode_c_levels).unwrap()).scale(C64::new(a1, 0.0));
        assert!(diff.try_sub(&expect).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn small_truncations_rejected() {
        let cfg = HardwareConfig { mode_a_levels: 6, ..HardwareConfig::default() };
        assert!(matches!(build_heff0(&cfg), Err(Error::TruncationTooSmall { .. })));
        let cfg = HardwareConfig { mode_c_levels: 3, ..HardwareConfig::default() };
        assert!(build_heff1(&cfg).is_err());
    }

    #[test]
    fn units_convert_and_parse() {
        assert!((Frequency::mhz_2pi(1.0).rad_per_us() - 2.0 * PI).abs() < 1e-15);
        assert!((Frequency::khz_2pi(1000.0).rad_per_us() - 2.0 * PI).abs() < 1e-12);
        let cfg: HardwareConfig = serde_json::from_str(
            r#"{"alpha0": {"value": 50, "unit": "kHz*2pi"}, "t_final": {"value": 500, "unit": "us"}, "variant": "heff1"}"#,
        )
        .unwrap();
        assert!((cfg.alpha0.rad_per_us() - HardwareConfig::default().alpha0.rad_per_us()).abs() < 1e-15);
        assert_eq!(cfg.t_final.microseconds(), 500.0);
        assert_eq!(cfg.variant, HardwareVariant::Heff1);
        assert!(serde_json::from_str::<HardwareConfig>(r#"{"alpha0": {"value": 1, "unit": "GHz"}}"#).is_err());
    }

    #[test]
    fn regime_flags() {
        assert!(HardwareConfig::default().regime_warnings().is_empty());
        let cfg = HardwareConfig { gamma_c1: Frequency::mhz_2pi(0.05), ..HardwareConfig::default() };
        assert_eq!(cfg.regime_warnings().len(), 1);
    }

    #[test]
    fn decoupled_ancillas_give_bare_loss() {
        let cfg = HardwareConfig {
            alpha0: Frequency::mhz_2pi(0.0),
            alpha1: Frequency::mhz_2pi(0.0),
            t_final: Duration::ms(1.0),
            samples: 6,
            ..HardwareConfig::default()
        };
        let run = simulate_hardware(&cfg).unwrap();
        let code = rl_code(cfg.mode_a_levels - 1).unwrap();
        let bare = photon_loss_model(cfg.mode_a_levels, cfg.gamma_a1.rad_per_us())
            .unwrap()
            .mean_fidelities(&code, &cfg.times_us().unwrap(), &OdeOptions::default())
            .unwrap();
        for (x, y) in run.mean_fidelity.iter().zip(&bare) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        assert!(run.max_c_population < 1e-12);
    }

    #[test]
    fn short_run_beats_break_even() {
        let cfg = HardwareConfig { t_final: Duration::ms(1.0), samples: 3, ..HardwareConfig::default() };
        let run = simulate_hardware(&cfg).unwrap();
        let gt = cfg.gamma_a1.rad_per_us() * 1e3;
        assert!(run.fidelity_at_ms(1.0) > break_even_mean_fidelity(gt));
        assert!(run.min_reduced_eigenvalue > -1e-8);
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t_ms,F_mean\n0,"));
    }
}
