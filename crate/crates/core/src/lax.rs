//! The Krichever Lax differential L(z)dz on ℂ/{1, τ} in closed theta form,
//! and its local Laurent data at the marked points.
//!
//! L(z) = π · L̃(z) · A with A the α matrix, π = A⁻¹, L̃_ii = p_i and
//!
//! L̃_ij(z) = (α_i·β_j) θ(z−q_i) θ(z+q_i−q_j) θ(q_j) θ′(0)
//!           / (θ(z) θ(z−q_j) θ(q_j−q_i) θ(q_i)),   i ≠ j.
//!
//! The extra pole P sits at the lattice origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, Mat};
use crate::phase_space::{ExtendedPhasePoint, PointData};
use crate::quadrature::{laurent_coefficients, ContourControl};
use crate::scalar::{Scalar, C64};
use crate::theta::ThetaKernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaxEval {
    pub value: CMat,
}

/// Residue, constant and linear Laurent coefficients at a marked point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentData {
    pub residue: CMat,
    pub l0: CMat,
    pub l1: CMat,
}

/// Generic closed-form evaluation on raw coordinates.
pub fn lax_data<T: Scalar>(kernel: &ThetaKernel, d: &PointData<T>, z: T) -> Result<Mat<T>> {
    let n = d.n();
    let zv = z.value();
    kernel.check_pole(zv)?;
    for qa in &d.q {
        kernel.check_pole(zv - qa.value())?;
    }
    let tp0 = T::constant(kernel.theta_prime_zero());
    let theta_q: Vec<T> = d.q.iter().map(|&qa| kernel.theta(qa)).collect::<Result<_>>()?;
    let theta_z_minus_q: Vec<T> = d.q.iter().map(|&qa| kernel.theta(z - qa)).collect::<Result<_>>()?;
    let theta_z = kernel.theta(z)?;

    let mut lt = Mat::zeros(n, n);
    for i in 0..n {
        lt[(i, i)] = d.p[i];
        for j in 0..n {
            if i == j {
                continue;
            }
            let coupling = (0..n).fold(T::zero(), |acc, k| acc + d.alpha[(i, k)] * d.beta[(j, k)]);
            let num = theta_z_minus_q[i] * kernel.theta(z + d.q[i] - d.q[j])? * theta_q[j] * tp0;
            let den = theta_z * theta_z_minus_q[j] * kernel.theta(d.q[j] - d.q[i])? * theta_q[i];
            lt[(i, j)] = coupling * num / den;
        }
    }
    let pi = d.alpha.inverse()?;
    Ok(pi.matmul(&lt).matmul(&d.alpha))
}

pub fn lax(kernel: &ThetaKernel, x: &ExtendedPhasePoint, z: C64) -> Result<LaxEval> {
    Ok(LaxEval { value: lax_data(kernel, x.data(), z)? })
}

/// Poles of L: the origin followed by the marked points.
pub fn pole_set(x: &ExtendedPhasePoint) -> Vec<C64> {
    std::iter::once(C64::new(0.0, 0.0)).chain(x.q().iter().copied()).collect()
}

/// Minimal lattice distance between distinct poles of L.
pub fn min_pole_separation(kernel: &ThetaKernel, x: &ExtendedPhasePoint) -> f64 {
    let poles = pole_set(x);
    let mut best = f64::INFINITY;
    for a in 0..poles.len() {
        for b in a + 1..poles.len() {
            best = best.min(kernel.lattice_distance(poles[a] - poles[b]));
        }
    }
    best
}

/// One quarter of the minimal pole separation.
pub fn default_radius(kernel: &ThetaKernel, x: &ExtendedPhasePoint) -> f64 {
    0.25 * min_pole_separation(kernel, x)
}

/// Checks that a circle of `radius` around `center` isolates the pole at
/// `center` from every other listed pole.
pub(crate) fn check_radius(kernel: &ThetaKernel, center: C64, others: &[C64], radius: f64) -> Result<()> {
    let guard = kernel.control().pole_guard;
    if !(radius > guard) {
        return Err(Error::InfeasibleRadius { radius, reason: format!("below the pole guard {guard:e}") });
    }
    for &o in others {
        let d = kernel.lattice_distance(center - o);
        if !(radius < d - guard) {
            return Err(Error::InfeasibleRadius {
                radius,
                reason: format!("circle reaches another pole at distance {d:e}"),
            });
        }
    }
    Ok(())
}

fn flatten(m: &CMat) -> Vec<C64> {
    m.as_slice().to_vec()
}

pub(crate) fn unflatten(n: usize, v: &[C64]) -> CMat {
    CMat::from_fn(n, n, |i, j| v[i * n + j])
}

/// Residue, L⁰ and L¹ of L at q_a by contour quadrature.
pub fn laurent_at(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    a: usize,
    radius: Option<f64>,
    ctrl: &ContourControl,
) -> Result<LaurentData> {
    let n = x.n();
    if a >= n {
        return Err(Error::Dimension(format!("marked point index {a} out of range")));
    }
    let center = x.q()[a];
    let radius = radius.unwrap_or_else(|| default_radius(kernel, x));
    let others: Vec<C64> = pole_set(x).into_iter().enumerate().filter(|&(i, _)| i != a + 1).map(|(_, p)| p).collect();
    check_radius(kernel, center, &others, radius)?;
    let l = laurent_coefficients(|z| Ok(flatten(&lax(kernel, x, z)?.value)), center, radius, &[-1, 0, 1], ctrl)?;
    Ok(LaurentData {
        residue: unflatten(n, &l.coeffs[0]),
        l0: unflatten(n, &l.coeffs[1]),
        l1: unflatten(n, &l.coeffs[2]),
    })
}

/// Contour residue of L at the origin.
pub fn residue_at_origin(kernel: &ThetaKernel, x: &ExtendedPhasePoint, ctrl: &ContourControl) -> Result<CMat> {
    let radius = default_radius(kernel, x);
    check_radius(kernel, C64::new(0.0, 0.0), x.q(), radius)?;
    let l = laurent_coefficients(|z| Ok(flatten(&lax(kernel, x, z)?.value)), C64::new(0.0, 0.0), radius, &[-1], ctrl)?;
    Ok(unflatten(x.n(), &l.coeffs[0]))
}
