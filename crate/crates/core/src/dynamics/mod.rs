//! Lindblad master-equation evolution and its quantum-trajectory
//! unraveling.
//!
//! Dissipators follow `D[x]ρ = 2xρx† − x†xρ − ρx†x` and a channel entry
//! `(L, γ)` contributes `(γ/2)·D[L]`, so `(a, γ)` alone drains `|1⟩` at
//! rate `γ`.

pub mod kernel;
pub mod mcwf;
pub mod ode;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{expectation_real, max_abs, DensityMatrix, Matrix, Operator, SpaceSignature, C64, ZERO};
pub use kernel::CompiledLindbladian;
pub use mcwf::{
    average_trajectories, ensemble_average, mcwf_trajectory, mcwf_trajectory_with, run_ensemble, trajectory_rng,
    AveragedCurve, JumpEvent, Trajectory,
};
pub use ode::{OdeOptions, OdeStats};

/// One dissipator: jump operator and its rate (1/time).
#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub op: Operator,
    pub rate: f64,
}

/// Set of dissipators sharing one Hilbert space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseChannel {
    jumps: Vec<Jump>,
}

impl NoiseChannel {
    pub fn new(jumps: Vec<(Operator, f64)>) -> Result<Self> {
        let mut channel = Self::default();
        for (op, rate) in jumps {
            channel.push(op, rate)?;
        }
        Ok(channel)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, op: Operator, rate: f64) -> Result<()> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("jump rate must be finite and ≥ 0, got {rate}")));
        }
        if let Some(first) = self.jumps.first() {
            if first.op.space() != op.space() {
                return Err(Error::DimensionMismatch {
                    expected: first.op.space().factors().to_vec(),
                    found: op.space().factors().to_vec(),
                });
            }
        }
        self.jumps.push(Jump { op, rate });
        Ok(())
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn space(&self) -> Option<&SpaceSignature> {
        self.jumps.first().map(|j| j.op.space())
    }

    fn check_space(&self, space: &SpaceSignature) -> Result<()> {
        match self.space() {
            Some(s) if s != space => {
                Err(Error::DimensionMismatch { expected: space.factors().to_vec(), found: s.factors().to_vec() })
            }
            _ => Ok(()),
        }
    }

    /// Jump operators multiplied by `√rate`; zero-rate entries are dropped.
    pub(crate) fn scaled_jumps(&self) -> Vec<Matrix> {
        self.jumps.iter().filter(|j| j.rate > 0.0).map(|j| j.op.matrix() * C64::new(j.rate.sqrt(), 0.0)).collect()
    }

    pub fn compile(&self, hamiltonian: &Operator) -> Result<CompiledLindbladian> {
        self.check_space(hamiltonian.space())?;
        Ok(CompiledLindbladian::new(hamiltonian.matrix(), &self.scaled_jumps()))
    }
}

/// `dρ/dt = −i[H,ρ] + Σ_k (γ_k/2) D[L_k]ρ`, by dense matrix products.
pub fn lindblad_rhs(h: &Operator, channel: &NoiseChannel, rho: &DensityMatrix) -> Result<Matrix> {
    if h.space() != rho.space() {
        return Err(Error::DimensionMismatch {
            expected: h.space().factors().to_vec(),
            found: rho.space().factors().to_vec(),
        });
    }
    channel.check_space(rho.space())?;
    let r = rho.matrix();
    let hm = h.matrix();
    let minus_i = C64::new(0.0, -1.0);
    let mut out = (hm * r - r * hm) * minus_i;
    for j in channel.jumps() {
        let l = j.op.matrix();
        let ld = l.adjoint();
        let ldl = &ld * l;
        let d = (l * r * &ld) * C64::new(2.0, 0.0) - &ldl * r - r * &ldl;
        out += d * C64::new(0.5 * j.rate, 0.0);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub stats: EvolutionStats,
}

impl EvolutionResult {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("evolution results hold at least one sample")
    }

    /// CSV with columns `t` and one column per named observable.
    pub fn write_csv<W: Write>(&self, out: W, observables: &[(&str, &Operator)]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(observables.iter().map(|(n, _)| n.to_string()));
        w.write_record(&header)?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            let mut row = vec![format_float(*t)];
            for (_, op) in observables {
                row.push(format_float(expectation_real(op, rho)?));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Shortest round-trip representation; keeps CSV output byte-stable.
pub fn format_float(x: f64) -> String {
    format!("{x}")
}

fn hermitize_block(block: &mut [C64], d: usize) {
    for i in 0..d {
        block[i + i * d].im = 0.0;
        for j in (i + 1)..d {
            let a = block[i + j * d];
            let b = block[j + i * d];
            let m = (a + b.conj()) * 0.5;
            block[i + j * d] = m;
            block[j + i * d] = m.conj();
        }
    }
}

/// Evolves several operators at once under the same generator.
///
/// `inputs` need not be states: the master equation is linear, so evolving
/// `|u⟩⟨v|` gives the channel's action on that matrix unit. Blocks flagged in
/// `hermitian` are symmetrized after every accepted step. `observe` receives
/// the grid index, time and evolved matrices.
pub fn evolve_operators<O>(
    inputs: &[Matrix],
    hermitian: &[bool],
    h: &Operator,
    channel: &NoiseChannel,
    t_grid: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<OdeStats>
where
    O: FnMut(usize, f64, &[Matrix]) -> Result<()>,
{
    let d = h.dim();
    if inputs.iter().any(|m| m.nrows() != d || m.ncols() != d) || hermitian.len() != inputs.len() {
        return Err(Error::InvalidDimension(format!("batch inputs must be {d}x{d} with one flag each")));
    }
    let kernel = channel.compile(h)?;
    let dd = d * d;
    let mut y0 = Vec::with_capacity(dd * inputs.len());
    for m in inputs {
        y0.extend_from_slice(m.as_slice());
    }
    let mut scratch = vec![ZERO; dd];
    let rhs = |_t: f64, y: &[C64], dy: &mut [C64]| {
        for (yb, db) in y.chunks_exact(dd).zip(dy.chunks_exact_mut(dd)) {
            kernel.apply(yb, db, &mut scratch);
        }
    };
    let project = |y: &mut [C64]| {
        for (block, &flag) in y.chunks_exact_mut(dd).zip(hermitian) {
            if flag {
                hermitize_block(block, d);
            }
        }
    };
    ode::dopri5(rhs, &y0, t_grid, opts, project, |idx, t, y| {
        let mats: Vec<Matrix> = y.chunks_exact(dd).map(|b| Matrix::from_column_slice(d, d, b)).collect();
        observe(idx, t, &mats)
    })
}

fn check_start(t_grid: &[f64]) -> Result<()> {
    ode::check_grid(t_grid)?;
    if t_grid[0] != 0.0 {
        return Err(Error::InvalidGrid(format!("time grid must start at 0, starts at {}", t_grid[0])));
    }
    Ok(())
}

/// Integrates the master equation with adaptive Dormand–Prince steps,
/// reporting a validated density matrix at every grid time.
pub fn evolve(
    rho0: &DensityMatrix,
    h: &Operator,
    channel: &NoiseChannel,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<EvolutionResult> {
    rho0.validate()?;
    check_start(t_grid)?;
    if h.space() != rho0.space() {
        return Err(Error::DimensionMismatch {
            expected: h.space().factors().to_vec(),
            found: rho0.space().factors().to_vec(),
        });
    }
    let mut states = Vec::with_capacity(t_grid.len());
    let mut stats = EvolutionStats { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let ode_stats =
        evolve_operators(std::slice::from_ref(rho0.matrix()), &[true], h, channel, t_grid, opts, |_, _, mats| {
            record_state(&mut states, &mut stats, rho0.space(), mats[0].clone())
        })?;
    stats.accepted_steps = ode_stats.accepted;
    stats.rejected_steps = ode_stats.rejected;
    stats.rhs_evals = ode_stats.rhs_evals;
    Ok(EvolutionResult { times: t_grid.to_vec(), states, stats })
}

fn record_state(
    states: &mut Vec<DensityMatrix>,
    stats: &mut EvolutionStats,
    space: &SpaceSignature,
    m: Matrix,
) -> Result<()> {
    let rho = DensityMatrix::new_unchecked(space.clone(), m)?;
    stats.max_trace_drift = stats.max_trace_drift.max((rho.trace() - C64::new(1.0, 0.0)).norm());
    stats.min_eigenvalue = stats.min_eigenvalue.min(rho.min_eigenvalue());
    rho.validate()?;
    states.push(rho);
    Ok(())
}

/// Fixed-step RK4 evolution; the independent cross-check of [`evolve`].
pub fn evolve_fixed_step(
    rho0: &DensityMatrix,
    h: &Operator,
    channel: &NoiseChannel,
    t_grid: &[f64],
    step: f64,
) -> Result<EvolutionResult> {
    rho0.validate()?;
    check_start(t_grid)?;
    let kernel = channel.compile(h)?;
    let d = h.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: h.space().factors().to_vec(),
            found: rho0.space().factors().to_vec(),
        });
    }
    let mut scratch = vec![ZERO; d * d];
    let mut states = Vec::with_capacity(t_grid.len());
    let mut stats = EvolutionStats { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let ode_stats = ode::rk4_fixed(
        |_, y: &[C64], dy: &mut [C64]| kernel.apply(y, dy, &mut scratch),
        rho0.matrix().as_slice(),
        t_grid,
        step,
        |_, _, y| {
            let mut m = Matrix::from_column_slice(d, d, y);
            hermitize_block(m.as_mut_slice(), d);
            record_state(&mut states, &mut stats, rho0.space(), m)
        },
    )?;
    stats.accepted_steps = ode_stats.accepted;
    stats.rhs_evals = ode_stats.rhs_evals;
    Ok(EvolutionResult { times: t_grid.to_vec(), states, stats })
}

/// Largest entrywise difference between two evolutions on the same grid.
pub fn max_state_difference(a: &EvolutionResult, b: &EvolutionResult) -> f64 {
    a.states.iter().zip(&b.states).map(|(x, y)| max_abs(&(x.matrix() - y.matrix()))).fold(0.0, f64::max)
}

/// Uniform grid `0, dt, …` up to and including `t_final`.
pub fn uniform_grid(t_final: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 || !(t_final > 0.0) {
        return Err(Error::InvalidGrid(format!("need ≥ 2 samples and a positive end time (got {samples}, {t_final})")));
    }
    let n = samples - 1;
    Ok((0..=n).map(|i| t_final * i as f64 / n as f64).collect())
}
