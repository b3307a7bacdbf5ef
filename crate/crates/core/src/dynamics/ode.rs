//! Explicit Runge–Kutta integrators on flat state slices.
//!
//! [`Dopri5`] is the Dormand–Prince 5(4) pair with FSAL and an RMS error
//! norm; [`rk4_fixed`] is the classical fourth-order method used as an
//! independent cross-check.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::fock::C64;

/// Scalar field the integrators work over.
pub trait OdeScalar: Copy + Default + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn modulus(self) -> f64;
}

impl OdeScalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for C64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, h0: None, h_max: None, max_steps: 50_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive (rtol {}, atol {})",
                self.rtol, self.atol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl OdeStats {
    pub fn merge(&mut self, other: &OdeStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Dormand–Prince 5(4) stepper with reusable stage storage.
///
/// Usage: [`Dopri5::init`] at the start point, then repeated
/// [`Dopri5::attempt`] / [`Dopri5::accept`]. A rejected or exploratory
/// attempt leaves the stored start derivative intact, so several trial
/// step sizes can be tried from the same point.
pub struct Dopri5<T: OdeScalar> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    k5: Vec<T>,
    k6: Vec<T>,
    k7: Vec<T>,
    tmp: Vec<T>,
    pub stats: OdeStats,
}

impl<T: OdeScalar> Dopri5<T> {
    pub fn new(n: usize) -> Self {
        let z = vec![T::default(); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            k5: z.clone(),
            k6: z.clone(),
            k7: z.clone(),
            tmp: z,
            stats: OdeStats::default(),
        }
    }

    /// Evaluates and stores the derivative at the start point.
    pub fn init<F: FnMut(f64, &[T], &mut [T])>(&mut self, f: &mut F, t: f64, y: &[T]) {
        f(t, y, &mut self.k1);
        self.stats.rhs_evals += 1;
    }

    /// Derivative at the current start point.
    pub fn derivative(&self) -> &[T] {
        &self.k1
    }

    pub fn derivative_mut(&mut self) -> &mut [T] {
        &mut self.k1
    }

    /// Trial step of size `h` from `(t, y)`; writes the fifth-order solution
    /// to `out` and returns the scaled RMS error estimate.
    pub fn attempt<F: FnMut(f64, &[T], &mut [T])>(
        &mut self,
        f: &mut F,
        t: f64,
        y: &[T],
        h: f64,
        out: &mut [T],
        opts: &OdeOptions,
    ) -> f64 {
        let n = y.len();
        for i in 0..n {
            self.tmp[i] = y[i] + self.k1[i] * (h * A21);
        }
        f(t + C2 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + (self.k1[i] * A31 + self.k2[i] * A32) * h;
        }
        f(t + C3 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + (self.k1[i] * A41 + self.k2[i] * A42 + self.k3[i] * A43) * h;
        }
        f(t + C4 * h, &self.tmp, &mut self.k4);
        for i in 0..n {
            self.tmp[i] = y[i] + (self.k1[i] * A51 + self.k2[i] * A52 + self.k3[i] * A53 + self.k4[i] * A54) * h;
        }
        f(t + C5 * h, &self.tmp, &mut self.k5);
        for i in 0..n {
            self.tmp[i] = y[i]
                + (self.k1[i] * A61 + self.k2[i] * A62 + self.k3[i] * A63 + self.k4[i] * A64 + self.k5[i] * A65) * h;
        }
        f(t + h, &self.tmp, &mut self.k6);
        for i in 0..n {
            out[i] = y[i]
                + (self.k1[i] * A71 + self.k3[i] * A73 + self.k4[i] * A74 + self.k5[i] * A75 + self.k6[i] * A76) * h;
        }
        f(t + h, out, &mut self.k7);
        self.stats.rhs_evals += 6;

        let mut acc = 0.0;
        for i in 0..n {
            let e = (self.k1[i] * E1
                + self.k3[i] * E3
                + self.k4[i] * E4
                + self.k5[i] * E5
                + self.k6[i] * E6
                + self.k7[i] * E7)
                * h;
            let sc = opts.atol + opts.rtol * y[i].modulus().max(out[i].modulus());
            let r = e.modulus() / sc;
            acc += r * r;
        }
        (acc / n.max(1) as f64).sqrt()
    }

    /// Makes the end derivative of the last attempt the new start derivative.
    pub fn accept(&mut self) {
        std::mem::swap(&mut self.k1, &mut self.k7);
        self.stats.accepted += 1;
    }

    pub fn reject(&mut self) {
        self.stats.rejected += 1;
    }

    /// Step-size factor for the next attempt given an error estimate.
    pub fn step_factor(err: f64, accepted: bool) -> f64 {
        let fac = if err == 0.0 { FAC_MAX } else { SAFETY * err.powf(-0.2) };
        let hi = if accepted { FAC_MAX } else { 1.0 };
        fac.clamp(FAC_MIN, hi)
    }

    /// Initial step heuristic from the local derivative scale.
    pub fn initial_step<F: FnMut(f64, &[T], &mut [T])>(
        &mut self,
        f: &mut F,
        t: f64,
        y: &[T],
        opts: &OdeOptions,
    ) -> f64 {
        let n = y.len();
        let sc = |i: usize| opts.atol + opts.rtol * y[i].modulus();
        let rms = |v: &[T]| -> f64 {
            (v.iter().enumerate().map(|(i, x)| (x.modulus() / sc(i)).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
        };
        let d0 = rms(y);
        let d1 = rms(&self.k1);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..n {
            self.tmp[i] = y[i] + self.k1[i] * h0;
        }
        f(t + h0, &self.tmp, &mut self.k2);
        self.stats.rhs_evals += 1;
        let d2 = (0..n).map(|i| ((self.k2[i] + self.k1[i] * -1.0).modulus() / sc(i)).powi(2)).sum::<f64>();
        let d2 = (d2 / n.max(1) as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1)
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("time grid is empty".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("time grid contains non-finite values".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Adaptive Dormand–Prince integration reporting the state at every grid
/// point. `project` is applied to each accepted state and to its
/// derivative; it must be a linear projection that commutes with `f`
/// (Hermitization of a Lindblad state is the intended use).
pub fn dopri5<T, F, P, O>(
    mut f: F,
    y0: &[T],
    grid: &[f64],
    opts: &OdeOptions,
    mut project: P,
    mut observe: O,
) -> Result<OdeStats>
where
    T: OdeScalar,
    F: FnMut(f64, &[T], &mut [T]),
    P: FnMut(&mut [T]),
    O: FnMut(usize, f64, &[T]) -> Result<()>,
{
    check_grid(grid)?;
    opts.validate()?;
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut out = vec![T::default(); n];
    let mut stepper = Dopri5::new(n);
    let mut t = grid[0];
    observe(0, t, &y)?;
    if grid.len() == 1 {
        return Ok(stepper.stats);
    }
    stepper.init(&mut f, t, &y);
    let span = grid[grid.len() - 1] - grid[0];
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let mut h = opts.h0.unwrap_or_else(|| stepper.initial_step(&mut f, t, &y, opts)).min(h_max);
    let mut next = 1;
    let mut steps = 0usize;
    while next < grid.len() {
        let target = grid[next];
        let remaining = target - t;
        let landing = h >= remaining * (1.0 - 1e-12);
        let h_try = if landing { remaining } else { h };
        if h_try <= 1e-14 * t.abs().max(1.0) || steps >= opts.max_steps {
            return Err(Error::Stiffness { t });
        }
        steps += 1;
        let err = stepper.attempt(&mut f, t, &y, h_try, &mut out, opts);
        if err.is_finite() && err <= 1.0 {
            stepper.accept();
            std::mem::swap(&mut y, &mut out);
            project(&mut y);
            project(stepper.derivative_mut());
            t = if landing { target } else { t + h_try };
            if landing {
                observe(next, t, &y)?;
                next += 1;
            }
            let fac = Dopri5::<T>::step_factor(err, true);
            let proposal = h_try * fac;
            // a step shortened to land on the grid keeps the earlier proposal
            h = if landing && h_try < h { proposal.max(h) } else { proposal }.min(h_max);
        } else {
            stepper.reject();
            let fac = if err.is_finite() { Dopri5::<T>::step_factor(err, false) } else { FAC_MIN };
            h = h_try * fac;
        }
    }
    Ok(stepper.stats)
}

/// Classical fixed-step RK4; each grid interval is split into
/// `ceil(interval / h)` equal substeps.
pub fn rk4_fixed<T, F, O>(mut f: F, y0: &[T], grid: &[f64], h: f64, mut observe: O) -> Result<OdeStats>
where
    T: OdeScalar,
    F: FnMut(f64, &[T], &mut [T]),
    O: FnMut(usize, f64, &[T]) -> Result<()>,
{
    check_grid(grid)?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {h}")));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k1 = vec![T::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let mut stats = OdeStats::default();
    observe(0, grid[0], &y)?;
    for idx in 1..grid.len() {
        let (a, b) = (grid[idx - 1], grid[idx]);
        let m = ((b - a) / h).ceil().max(1.0) as usize;
        let dt = (b - a) / m as f64;
        for s in 0..m {
            let t = a + s as f64 * dt;
            f(t, &y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (0.5 * dt);
            }
            f(t + 0.5 * dt, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + k2[i] * (0.5 * dt);
            }
            f(t + 0.5 * dt, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + k3[i] * dt;
            }
            f(t + dt, &tmp, &mut k4);
            for i in 0..n {
                y[i] = y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
            }
            stats.rhs_evals += 4;
            stats.accepted += 1;
        }
        observe(idx, b, &y)?;
    }
    Ok(stats)
}
