//! Monte-Carlo wavefunction unraveling of the master equation.
//!
//! Between jumps the unnormalized state follows `dψ/dt = −i H_nh ψ`. A jump
//! fires when `‖ψ‖²` falls to a uniform random threshold; the crossing time
//! is located by bisection and the channel is drawn with weights
//! `rate_k ‖L_k ψ‖²`. Each trajectory owns a ChaCha stream derived from
//! `(master seed, trajectory index)`, so ensembles are reproducible
//! regardless of thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::CompiledLindbladian;
use super::ode::{self, Dopri5, OdeOptions};
use super::{format_float, NoiseChannel};
use crate::error::{Error, Result};
use crate::fidelity::sliding_window_max;
use crate::fock::{Ket, Operator, Vector, C64, ZERO};

const THRESHOLD_RTOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    /// Index into the channel's jump list.
    pub channel: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub kets: Vec<Ket>,
    pub jump_events: Vec<JumpEvent>,
}

impl Trajectory {
    /// CSV with columns `t` and `⟨ψ|O|ψ⟩` per named observable.
    pub fn write_csv<W: Write>(&self, out: W, observables: &[(&str, &Operator)]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(observables.iter().map(|(n, _)| n.to_string()));
        w.write_record(&header)?;
        for (t, ket) in self.times.iter().zip(&self.kets) {
            let mut row = vec![format_float(*t)];
            for (_, op) in observables {
                let v = ket.inner(&op.apply(ket)?)?;
                row.push(format_float(v.re));
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

/// Pointwise ensemble mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

/// RNG for trajectory `index` of an ensemble seeded with `master`.
pub fn trajectory_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Single trajectory with default tolerances and a seed-derived RNG.
pub fn mcwf_trajectory(
    psi0: &Ket,
    h: &Operator,
    channel: &NoiseChannel,
    t_grid: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let kernel = channel.compile(h)?;
    let map = channel_index_map(channel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mcwf_trajectory_with(psi0, &kernel, &map, t_grid, &OdeOptions::default(), &mut rng)
}

pub(crate) fn channel_index_map(channel: &NoiseChannel) -> Vec<usize> {
    channel.jumps().iter().enumerate().filter(|(_, j)| j.rate > 0.0).map(|(i, _)| i).collect()
}

/// Single trajectory on a compiled generator. `channel_map[k]` names the
/// original channel index of compiled jump `k`.
pub fn mcwf_trajectory_with(
    psi0: &Ket,
    kernel: &CompiledLindbladian,
    channel_map: &[usize],
    t_grid: &[f64],
    opts: &OdeOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    psi0.ensure_normalized()?;
    ode::check_grid(t_grid)?;
    let d = kernel.dim();
    if psi0.dim() != d {
        return Err(Error::InvalidDimension(format!("ket of dimension {} for generator of dimension {d}", psi0.dim())));
    }
    let space = psi0.space().clone();
    let jumps_on = kernel.has_jumps();
    let mut f = |_t: f64, y: &[C64], dy: &mut [C64]| kernel.drift(y, dy);

    let mut psi: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let mut out = vec![ZERO; d];
    let mut probe = vec![ZERO; d];
    let mut jumped = vec![ZERO; d];
    let mut kets = Vec::with_capacity(t_grid.len());
    let mut events = Vec::new();
    let record = |psi: &[C64], kets: &mut Vec<Ket>| -> Result<()> {
        let n = norm_sqr(psi).sqrt();
        let v = Vector::from_iterator(d, psi.iter().map(|z| z / n));
        kets.push(Ket::new(space.clone(), v)?);
        Ok(())
    };

    let mut t = t_grid[0];
    record(&psi, &mut kets)?;
    let mut stepper = Dopri5::new(d);
    let mut threshold = draw_threshold(rng);
    if t_grid.len() > 1 {
        stepper.init(&mut f, t, &psi);
    }
    let span = t_grid[t_grid.len() - 1] - t_grid[0];
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let mut h = if t_grid.len() > 1 {
        opts.h0.unwrap_or_else(|| stepper.initial_step(&mut f, t, &psi, opts)).min(h_max)
    } else {
        0.0
    };
    let mut next = 1;
    let mut steps = 0usize;
    while next < t_grid.len() {
        let target = t_grid[next];
        let remaining = target - t;
        let landing = h >= remaining * (1.0 - 1e-12);
        let h_try = if landing { remaining } else { h };
        if h_try <= 1e-14 * t.abs().max(1.0) || steps >= opts.max_steps {
            return Err(Error::Stiffness { t });
        }
        steps += 1;
        let err = stepper.attempt(&mut f, t, &psi, h_try, &mut out, opts);
        if !(err.is_finite() && err <= 1.0) {
            stepper.reject();
            let fac = if err.is_finite() { Dopri5::<C64>::step_factor(err, false) } else { 0.2 };
            h = h_try * fac;
            continue;
        }
        let n2 = norm_sqr(&out);
        if jumps_on && n2 < threshold {
            // bisection on the step length for ‖ψ(t+τ)‖² = threshold
            let (mut lo, mut hi) = (0.0, h_try);
            probe.copy_from_slice(&out);
            for _ in 0..MAX_BISECTIONS {
                if hi - lo <= 1e-15 * t.abs().max(1.0) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                stepper.attempt(&mut f, t, &psi, mid, &mut jumped, opts);
                let n2m = norm_sqr(&jumped);
                if n2m < threshold {
                    hi = mid;
                    probe.copy_from_slice(&jumped);
                } else {
                    lo = mid;
                }
                if (n2m - threshold).abs() <= THRESHOLD_RTOL * threshold {
                    break;
                }
            }
            let t_jump = t + hi;
            let at_grid = landing && hi == h_try;
            let weights: Vec<f64> = (0..kernel.jump_count())
                .map(|k| {
                    kernel.apply_jump(k, &probe, &mut jumped);
                    norm_sqr(&jumped)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            t = if at_grid { target } else { t_jump };
            if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = k;
                        break;
                    }
                    u -= w;
                }
                kernel.apply_jump(pick, &probe, &mut jumped);
                let n = norm_sqr(&jumped).sqrt();
                for (p, j) in psi.iter_mut().zip(&jumped) {
                    *p = j / n;
                }
                events.push(JumpEvent { time: t, channel: channel_map.get(pick).copied().unwrap_or(pick) });
            } else {
                // norm lost without any jump weight: renormalize and continue
                let n = norm_sqr(&probe).sqrt();
                for (p, j) in psi.iter_mut().zip(&probe) {
                    *p = j / n;
                }
            }
            threshold = draw_threshold(rng);
            stepper.init(&mut f, t, &psi);
            if at_grid {
                record(&psi, &mut kets)?;
                next += 1;
            }
            continue;
        }
        stepper.accept();
        std::mem::swap(&mut psi, &mut out);
        t = if landing { target } else { t + h_try };
        if landing {
            record(&psi, &mut kets)?;
            next += 1;
        }
        let proposal = h_try * Dopri5::<C64>::step_factor(err, true);
        h = if landing && h_try < h { proposal.max(h) } else { proposal }.min(h_max);
    }
    Ok(Trajectory { times: t_grid.to_vec(), kets, jump_events: events })
}

/// `n` trajectories in parallel; trajectory `i` uses stream `i` of
/// `master_seed`.
pub fn run_ensemble(
    psi0: &Ket,
    h: &Operator,
    channel: &NoiseChannel,
    t_grid: &[f64],
    opts: &OdeOptions,
    master_seed: u64,
    n: usize,
) -> Result<Vec<Trajectory>> {
    let kernel = channel.compile(h)?;
    let map = channel_index_map(channel);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(master_seed, i as u64);
            mcwf_trajectory_with(psi0, &kernel, &map, t_grid, opts, &mut rng)
        })
        .collect()
}

/// Ensemble average of `extractor(ψ(t))` without storing trajectories.
/// For each window length in `taus` the per-trajectory series is first
/// replaced by its forward sliding maximum over `[t, t+τ]`, then averaged;
/// `τ = 0` gives the plain average. Returns one curve per entry of `taus`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_average<E>(
    psi0: &Ket,
    h: &Operator,
    channel: &NoiseChannel,
    t_grid: &[f64],
    opts: &OdeOptions,
    master_seed: u64,
    n: usize,
    taus: &[f64],
    extractor: E,
) -> Result<Vec<AveragedCurve>>
where
    E: Fn(&Ket) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let kernel = channel.compile(h)?;
    let map = channel_index_map(channel);
    let series: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(master_seed, i as u64);
            let traj = mcwf_trajectory_with(psi0, &kernel, &map, t_grid, opts, &mut rng)?;
            let raw: Vec<f64> = traj.kets.iter().map(&extractor).collect();
            taus.iter().map(|&tau| sliding_window_max(t_grid, &raw, tau)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..taus.len())
        .map(|k| {
            let curves: Vec<&[f64]> = series.iter().map(|s| s[k].as_slice()).collect();
            mean_and_stderr(t_grid, &curves)
        })
        .collect())
}

fn mean_and_stderr(times: &[f64], curves: &[&[f64]]) -> AveragedCurve {
    let n = curves.len();
    let m = times.len();
    let mut mean = vec![0.0; m];
    let mut stderr = vec![0.0; m];
    for i in 0..m {
        let mu = curves.iter().map(|c| c[i]).sum::<f64>() / n as f64;
        mean[i] = mu;
        if n > 1 {
            let var = curves.iter().map(|c| (c[i] - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            stderr[i] = (var / n as f64).sqrt();
        }
    }
    AveragedCurve { times: times.to_vec(), mean, stderr, samples: n }
}

/// Pointwise mean and standard error of `extractor` over stored
/// trajectories sharing one time grid.
pub fn average_trajectories<E>(trajectories: &[Trajectory], extractor: E) -> Result<AveragedCurve>
where
    E: Fn(&Ket) -> f64,
{
    let first = trajectories.first().ok_or(Error::EmptyEnsemble)?;
    if trajectories.iter().any(|t| t.times != first.times) {
        return Err(Error::InvalidGrid("trajectories do not share a time grid".into()));
    }
    let series: Vec<Vec<f64>> = trajectories.iter().map(|t| t.kets.iter().map(&extractor).collect()).collect();
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    Ok(mean_and_stderr(&first.times, &refs))
}
