//! Open systems built from an encoding mode plus optional ancillas, and the
//! logical channels they induce on a code.
//!
//! The encoding mode is always factor 0. Ancillas start in their ground
//! state and are traced out before any fidelity is computed.

use crate::codes::CodePair;
use crate::dynamics::{ensemble_average, evolve_operators, AveragedCurve, NoiseChannel, OdeOptions};
use crate::error::{Error, Result};
use crate::fidelity::{curve_from_channels, FidelityCurve, LogicalChannel};
use crate::fock::{
    annihilation, number, partial_trace_matrix, qubit_lowering, qubit_raising, tensor, tensor_all, Ket, Matrix,
    Operator, SpaceSignature, C64, ONE,
};

/// Hamiltonian and dissipators on `mode ⊗ ancillas`.
#[derive(Clone, Debug)]
pub struct OpenSystem {
    hamiltonian: Operator,
    noise: NoiseChannel,
}

impl OpenSystem {
    pub fn new(hamiltonian: Operator, noise: NoiseChannel) -> Result<Self> {
        if let Some(space) = noise.space() {
            if space != hamiltonian.space() {
                return Err(Error::DimensionMismatch {
                    expected: hamiltonian.space().factors().to_vec(),
                    found: space.factors().to_vec(),
                });
            }
        }
        Ok(Self { hamiltonian, noise })
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn noise(&self) -> &NoiseChannel {
        &self.noise
    }

    pub fn space(&self) -> &SpaceSignature {
        self.hamiltonian.space()
    }

    pub fn mode_levels(&self) -> usize {
        self.space().factors()[0]
    }

    fn ancilla_dim(&self) -> usize {
        self.space().factors()[1..].iter().product()
    }

    /// `m ⊗ |0…0⟩⟨0…0|` on the full space.
    pub fn embed(&self, m: &Matrix) -> Matrix {
        let anc = self.ancilla_dim();
        let mut ground = Matrix::zeros(anc, anc);
        ground[(0, 0)] = ONE;
        m.kronecker(&ground)
    }

    /// Partial trace over every ancilla.
    pub fn reduce(&self, m: &Matrix) -> Result<Matrix> {
        if self.space().factors().len() == 1 {
            return Ok(m.clone());
        }
        partial_trace_matrix(self.space(), m, &[0])
    }

    fn check_code(&self, code: &CodePair) -> Result<()> {
        if code.levels() != self.mode_levels() {
            return Err(Error::DimensionMismatch { expected: vec![self.mode_levels()], found: vec![code.levels()] });
        }
        Ok(())
    }

    /// Logical channel at every grid time. Three batch evolutions suffice:
    /// the image of `|1_L⟩⟨0_L|` is the adjoint of that of `|0_L⟩⟨1_L|`.
    pub fn logical_channels(&self, code: &CodePair, t_grid: &[f64], opts: &OdeOptions) -> Result<Vec<LogicalChannel>> {
        self.logical_channels_observed(code, t_grid, opts, |_, _, _| Ok(()))
    }

    /// As [`Self::logical_channels`], also handing the unreduced images of
    /// `|0_L⟩⟨0_L|`, `|1_L⟩⟨1_L|`, `|0_L⟩⟨1_L|` to `observe` at each sample.
    pub fn logical_channels_observed<O>(
        &self,
        code: &CodePair,
        t_grid: &[f64],
        opts: &OdeOptions,
        mut observe: O,
    ) -> Result<Vec<LogicalChannel>>
    where
        O: FnMut(usize, f64, &[Matrix]) -> Result<()>,
    {
        self.check_code(code)?;
        let z = code.zero_logical().amplitudes();
        let o = code.one_logical().amplitudes();
        let inputs = [self.embed(&(z * z.adjoint())), self.embed(&(o * o.adjoint())), self.embed(&(z * o.adjoint()))];
        let mut out = Vec::with_capacity(t_grid.len());
        evolve_operators(&inputs, &[true, true, false], &self.hamiltonian, &self.noise, t_grid, opts, |k, t, mats| {
            observe(k, t, mats)?;
            let m00 = self.reduce(&mats[0])?;
            let m11 = self.reduce(&mats[1])?;
            let m01 = self.reduce(&mats[2])?;
            let m10 = m01.adjoint();
            out.push(LogicalChannel::new(code.clone(), [[m00, m01], [m10, m11]])?);
            Ok(())
        })?;
        Ok(out)
    }

    /// Six-state mean fidelity from quantum trajectories: `n` trajectories
    /// per Pauli eigenstate, one averaged curve per window in `taus` (see
    /// [`ensemble_average`]). State `j` uses master seed `seed + j`.
    pub fn trajectory_mean_fidelity(
        &self,
        code: &CodePair,
        t_grid: &[f64],
        opts: &OdeOptions,
        seed: u64,
        n: usize,
        taus: &[f64],
    ) -> Result<Vec<AveragedCurve>> {
        self.check_code(code)?;
        let anc = self.ancilla_dim();
        let half = std::f64::consts::FRAC_PI_2;
        let pi = std::f64::consts::PI;
        let points = [(half, 0.0), (half, pi), (half, half), (half, 3.0 * half), (0.0, 0.0), (pi, 0.0)];
        let mut acc: Vec<AveragedCurve> = Vec::new();
        for (j, &(theta, phi)) in points.iter().enumerate() {
            let psi = code.bloch_state(theta, phi);
            let amps = psi.amplitudes().clone();
            let mut full = vec![C64::new(0.0, 0.0); self.space().dim()];
            for (i, a) in amps.iter().enumerate() {
                full[i * anc] = *a;
            }
            let psi0 = Ket::new(self.space().clone(), nalgebra::DVector::from_vec(full))?;
            // ⟨ψ|Tr_anc|Ψ⟩⟨Ψ||ψ⟩ = Σ_k |Σ_i ψ_i* Ψ_{i,k}|²
            let fid = |k: &Ket| {
                let v = k.amplitudes();
                (0..anc)
                    .map(|r| amps.iter().enumerate().map(|(i, p)| p.conj() * v[i * anc + r]).sum::<C64>().norm_sqr())
                    .sum::<f64>()
            };
            let curves =
                ensemble_average(&psi0, &self.hamiltonian, &self.noise, t_grid, opts, seed + j as u64, n, taus, fid)?;
            if acc.is_empty() {
                acc = curves;
                for c in &mut acc {
                    c.stderr.iter_mut().for_each(|e| *e = *e * *e);
                }
            } else {
                for (a, c) in acc.iter_mut().zip(curves) {
                    for i in 0..a.mean.len() {
                        a.mean[i] += c.mean[i];
                        a.stderr[i] += c.stderr[i] * c.stderr[i];
                    }
                    a.samples += c.samples;
                }
            }
        }
        for a in &mut acc {
            a.mean.iter_mut().for_each(|m| *m /= 6.0);
            a.stderr.iter_mut().for_each(|e| *e = e.sqrt() / 6.0);
        }
        Ok(acc)
    }

    /// Mean, minimum and maximum fidelity of the code over `t_grid`.
    pub fn fidelity_curve(&self, code: &CodePair, t_grid: &[f64], opts: &OdeOptions) -> Result<FidelityCurve> {
        let channels = self.logical_channels(code, t_grid, opts)?;
        curve_from_channels(t_grid, &channels)
    }

    /// Mean fidelity only, skipping the Bloch-grid extremes.
    pub fn mean_fidelities(&self, code: &CodePair, t_grid: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
        Ok(self.logical_channels(code, t_grid, opts)?.iter().map(LogicalChannel::mean_fidelity).collect())
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// Encoding mode coupled to a lossy qubit:
/// `H = g(L⊗σ+ + L†⊗σ−)`, dissipators `(a⊗I, γa)` and `(I⊗σ−, γb)`.
pub fn full_model(recovery: &Operator, g: f64, gamma_a: f64, gamma_b: f64) -> Result<OpenSystem> {
    if recovery.space().factors().len() != 1 {
        return Err(Error::InvalidDimension("recovery must act on the mode alone".into()));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::InvalidParameter(format!("coupling must be non-negative, got {g}")));
    }
    positive("gamma_a", gamma_a)?;
    positive("gamma_b", gamma_b)?;
    let levels = recovery.dim();
    let a = annihilation(levels)?;
    let id_mode = Operator::identity(SpaceSignature::mode(levels));
    let id_q = Operator::identity(SpaceSignature::qubit());
    let up = tensor(recovery, &qubit_raising());
    let h = up.try_add(&up.dagger())?.scale(C64::new(g, 0.0));
    let noise = NoiseChannel::new(vec![(tensor(&a, &id_q), gamma_a), (tensor(&id_mode, &qubit_lowering()), gamma_b)])?;
    OpenSystem::new(h.into_hermitian()?, noise)
}

/// Single-mode model after eliminating the qubit:
/// dissipators `(a, γa)` and `(L, γa·λ)`, no Hamiltonian.
pub fn effective_model(recovery: &Operator, lambda: f64, gamma_a: f64) -> Result<OpenSystem> {
    effective_model_with_loss(recovery, &annihilation(recovery.dim())?, lambda, gamma_a)
}

/// As [`effective_model`] with a custom loss operator in place of `a`.
pub fn effective_model_with_loss(
    recovery: &Operator,
    loss: &Operator,
    lambda: f64,
    gamma_a: f64,
) -> Result<OpenSystem> {
    positive("gamma_a", gamma_a)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be non-negative, got {lambda}")));
    }
    let noise = NoiseChannel::new(vec![(loss.clone(), gamma_a), (recovery.clone(), gamma_a * lambda)])?;
    OpenSystem::new(Operator::zeros(recovery.space().clone()), noise)
}

/// Bare photon loss at rate `γa` on `levels` Fock levels.
pub fn photon_loss_model(levels: usize, gamma_a: f64) -> Result<OpenSystem> {
    positive("gamma_a", gamma_a)?;
    let noise = NoiseChannel::new(vec![(annihilation(levels)?, gamma_a)])?;
    OpenSystem::new(Operator::zeros(SpaceSignature::mode(levels)), noise)
}

/// `a†a` on the mode factor of `space`.
pub fn mode_number(space: &SpaceSignature) -> Result<Operator> {
    let levels = space.factors()[0];
    let mut ops = vec![number(levels)?];
    for &f in &space.factors()[1..] {
        ops.push(Operator::identity(SpaceSignature::mode(f)));
    }
    tensor_all(&ops.iter().collect::<Vec<_>>())
}
