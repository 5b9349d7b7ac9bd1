//! The odd theta function on the torus ℂ/{1, τ} and its logarithmic derivative.
//!
//! θ(z) = Σ_m exp(πiτ(m+½)² + 2πi(m+½)(z+½)).
//!
//! Arguments are first reduced into the fundamental cell, the series is summed
//! there, and the quasi-periodicity multipliers are reapplied exactly:
//!
//! θ(z + 1) = −θ(z),   θ(z + τ) = −exp(−πiτ − 2πiz) θ(z).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Dual, Scalar, C64};

const I: C64 = C64::new(0.0, 1.0);

/// The lattice modulus τ with Im τ > 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveModulus {
    tau: C64,
}

impl CurveModulus {
    pub fn new(tau: C64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(Error::InvalidModulus(tau));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }
}

/// Truncation and guard settings for the theta series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesControl {
    /// Absolute cutoff on the bound of the next series term.
    pub term_tolerance: f64,
    /// Maximum number of series terms summed.
    pub max_terms: usize,
    /// Evaluations of E closer than this to a lattice point are rejected.
    pub pole_guard: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { term_tolerance: 1e-16, max_terms: 64, pole_guard: 1e-8 }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.term_tolerance > 0.0) {
            return Err(Error::InvalidSeriesControl(format!(
                "term_tolerance must be positive, got {}",
                self.term_tolerance
            )));
        }
        if self.max_terms < 8 {
            return Err(Error::InvalidSeriesControl(format!("max_terms must be at least 8, got {}", self.max_terms)));
        }
        if !(self.pole_guard >= 0.0) {
            return Err(Error::InvalidSeriesControl("pole_guard must be non-negative".into()));
        }
        Ok(())
    }
}

/// `z = z0 + m + k·τ` with both lattice coordinates of `z0` in [−½, ½).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reduced {
    pub z0: C64,
    pub m: i64,
    pub k: i64,
}

pub fn reduce_mod_lattice(z: C64, curve: &CurveModulus) -> Reduced {
    let tau = curve.tau;
    let y = z.im / tau.im;
    let x = z.re - y * tau.re;
    let k = (y + 0.5).floor();
    let m = (x + 0.5).floor();
    Reduced { z0: z - m - tau * k, m: m as i64, k: k as i64 }
}

/// Distance from `z` to the nearest lattice point.
pub fn lattice_distance(z: C64, curve: &CurveModulus) -> f64 {
    let z0 = reduce_mod_lattice(z, curve).z0;
    let mut best = f64::INFINITY;
    for a in -1..=1 {
        for b in -1..=1 {
            let d = (z0 - a as f64 - curve.tau * b as f64).norm();
            best = best.min(d);
        }
    }
    best
}

/// Theta evaluator bound to one curve and one series control.
///
/// Caches θ′(0) and the linear Laurent coefficient of E at the origin.
#[derive(Clone, Copy, Debug)]
pub struct ThetaKernel {
    curve: CurveModulus,
    ctrl: SeriesControl,
    theta_prime_zero: C64,
    e_linear: C64,
}

impl ThetaKernel {
    pub fn new(curve: CurveModulus, ctrl: SeriesControl) -> Result<Self> {
        ctrl.validate()?;
        let mut kernel = Self { curve, ctrl, theta_prime_zero: C64::new(0.0, 0.0), e_linear: C64::new(0.0, 0.0) };
        let (d1, d3) = kernel.odd_derivatives_at_zero()?;
        kernel.theta_prime_zero = d1;
        // θ(z) = θ′(0) z + θ‴(0) z³/6 + …  ⇒  E(z) = 1/z + (θ‴(0)/3θ′(0)) z + O(z³)
        kernel.e_linear = d3 / (3.0 * d1);
        Ok(kernel)
    }

    pub fn with_tau(tau: C64) -> Result<Self> {
        Self::new(CurveModulus::new(tau)?, SeriesControl::default())
    }

    pub fn curve(&self) -> &CurveModulus {
        &self.curve
    }

    pub fn control(&self) -> &SeriesControl {
        &self.ctrl
    }

    pub fn tau(&self) -> C64 {
        self.curve.tau
    }

    pub fn theta_prime_zero(&self) -> C64 {
        self.theta_prime_zero
    }

    /// Coefficient `c` in E(z) = 1/z + c·z + O(z³).
    pub fn e_linear_coefficient(&self) -> C64 {
        self.e_linear
    }

    pub fn reduce(&self, z: C64) -> Reduced {
        reduce_mod_lattice(z, &self.curve)
    }

    pub fn lattice_distance(&self, z: C64) -> f64 {
        lattice_distance(z, &self.curve)
    }

    /// Number of ±(j+½) index pairs needed so the next term bound, including
    /// a cubic derivative weight, drops below the tolerance.
    fn pair_count(&self, z: C64) -> Result<usize> {
        let s = self.curve.tau.im;
        let mut pairs = 1usize;
        loop {
            let h = pairs as f64 + 0.5;
            let bound = (-PI * s * (h * h - h)).exp() * (1.0 + 2.0 * PI * h).powi(3);
            if bound < self.ctrl.term_tolerance {
                return Ok(pairs);
            }
            pairs += 1;
            if 2 * pairs > self.ctrl.max_terms {
                return Err(Error::SeriesNonConvergence { z, max_terms: self.ctrl.max_terms });
            }
        }
    }

    /// θ and θ′ by direct summation; `z0` is assumed reduced.
    fn series<T: Scalar>(&self, z0: T) -> Result<(T, T)> {
        let tau = self.curve.tau;
        let pairs = self.pair_count(z0.value())?;
        let mut th = T::zero();
        let mut dth = T::zero();
        for j in 0..pairs {
            for h in [j as f64 + 0.5, -(j as f64) - 0.5] {
                let phase = I * PI * tau * h * h + I * PI * h;
                let term = (z0.scale(2.0 * PI * I * h) + T::constant(phase)).exp();
                th += term;
                dth += term.scale(2.0 * PI * I * h);
            }
        }
        Ok((th, dth))
    }

    fn odd_derivatives_at_zero(&self) -> Result<(C64, C64)> {
        let tau = self.curve.tau;
        let pairs = self.pair_count(C64::new(0.0, 0.0))?;
        let mut d1 = C64::new(0.0, 0.0);
        let mut d3 = C64::new(0.0, 0.0);
        for j in 0..pairs {
            for h in [j as f64 + 0.5, -(j as f64) - 0.5] {
                let term = (I * PI * tau * h * h + I * PI * h).exp();
                let w = 2.0 * PI * I * h;
                d1 += w * term;
                d3 += w * w * w * term;
            }
        }
        Ok((d1, d3))
    }

    /// (θ(z), θ′(z)).
    pub fn theta_and_derivative<T: Scalar>(&self, z: T) -> Result<(T, T)> {
        let zv = z.value();
        if !zv.re.is_finite() || !zv.im.is_finite() {
            return Err(Error::SeriesNonConvergence { z: zv, max_terms: 0 });
        }
        let red = self.reduce(zv);
        let tau = self.curve.tau;
        let shift = C64::new(red.m as f64, 0.0) + tau * red.k as f64;
        let z0 = z - T::constant(shift);
        let (th0, dth0) = self.series(z0)?;
        if red.k == 0 {
            let sign = if red.m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            return Ok((th0.scale(sign.into()), dth0.scale(sign.into())));
        }
        let k = red.k as f64;
        let sign = if (red.m + red.k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let mult = (z0.scale(-2.0 * PI * I * k) + T::constant(-PI * I * tau * k * k)).exp().scale(sign.into());
        let th = mult * th0;
        let dth = mult * (dth0 - th0.scale(2.0 * PI * I * k));
        Ok((th, dth))
    }

    pub fn theta<T: Scalar>(&self, z: T) -> Result<T> {
        Ok(self.theta_and_derivative(z)?.0)
    }

    pub fn theta_prime<T: Scalar>(&self, z: T) -> Result<T> {
        Ok(self.theta_and_derivative(z)?.1)
    }

    /// Rejects arguments within the pole guard of a lattice point.
    pub fn check_pole(&self, z: C64) -> Result<()> {
        let d = self.lattice_distance(z);
        if d < self.ctrl.pole_guard || !d.is_finite() {
            return Err(Error::PoleProximity { z, distance: d, guard: self.ctrl.pole_guard });
        }
        Ok(())
    }

    /// E(z) = θ′(z)/θ(z).
    pub fn log_derivative<T: Scalar>(&self, z: T) -> Result<T> {
        let zv = z.value();
        self.check_pole(zv)?;
        let red = self.reduce(zv);
        let shift = C64::new(red.m as f64, 0.0) + self.curve.tau * red.k as f64;
        let z0 = z - T::constant(shift);
        let (th, dth) = self.series(z0)?;
        Ok(dth / th - T::constant(2.0 * PI * I * red.k as f64))
    }

    /// E′(z), via a dual-number pass through the same series.
    pub fn log_derivative_prime(&self, z: C64) -> Result<C64> {
        Ok(self.log_derivative(Dual::variable(z))?.du)
    }
}

/// θ(z) for the given curve and control.
pub fn theta(z: C64, curve: &CurveModulus, ctrl: &SeriesControl) -> Result<C64> {
    ThetaKernel::new(*curve, *ctrl)?.theta(z)
}

/// E(z) = θ′(z)/θ(z) for the given curve and control.
pub fn log_derivative_e(z: C64, curve: &CurveModulus, ctrl: &SeriesControl) -> Result<C64> {
    ThetaKernel::new(*curve, *ctrl)?.log_derivative(z)
}
