//! Laurent coefficients by trapezoidal quadrature on a circle.
//!
//! For f analytic on an annulus around the contour,
//! c_k ≈ (1/N) Σ_j f(c + r ω_j) (r ω_j)^(−k),  ω_j = exp(2πi j/N),
//! with geometric convergence in N. Node counts are doubled until two
//! successive estimates agree.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourControl {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    /// Accepted gap between successive estimates, relative to max |f| on the contour.
    pub rel_tol: f64,
}

impl Default for ContourControl {
    fn default() -> Self {
        Self { initial_nodes: 32, max_nodes: 4096, rel_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct Laurent {
    pub orders: Vec<i32>,
    /// `coeffs[o]` holds the vector coefficient of (z − center)^orders[o].
    pub coeffs: Vec<Vec<C64>>,
    pub nodes: usize,
    pub disagreement: f64,
}

impl Laurent {
    pub fn get(&self, order: i32) -> Option<&[C64]> {
        self.orders.iter().position(|&o| o == order).map(|i| self.coeffs[i].as_slice())
    }
}

/// Extracts the requested Laurent orders of a vector-valued `f` around `center`.
pub fn laurent_coefficients<F>(f: F, center: C64, radius: f64, orders: &[i32], ctrl: &ContourControl) -> Result<Laurent>
where
    F: Fn(C64) -> Result<Vec<C64>>,
{
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InfeasibleRadius { radius, reason: "radius must be positive and finite".into() });
    }
    let mut n = ctrl.initial_nodes.max(4);
    let mut samples = sample_circle(&f, center, radius, n, 0, 1)?;
    let mut prev = scaled_coefficients(&samples, n, orders);
    loop {
        let n2 = 2 * n;
        let odd = sample_circle(&f, center, radius, n2, 1, 2)?;
        let mut merged = Vec::with_capacity(n2);
        for (even, odd) in samples.into_iter().zip(odd) {
            merged.push(even);
            merged.push(odd);
        }
        samples = merged;
        let next = scaled_coefficients(&samples, n2, orders);
        let fmax = samples.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let gap = prev
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / fmax;
        if gap <= ctrl.rel_tol {
            let coeffs = next
                .into_iter()
                .zip(orders)
                .map(|(v, &k)| {
                    let s = radius.powi(-k);
                    v.into_iter().map(|z| z * s).collect()
                })
                .collect();
            return Ok(Laurent { orders: orders.to_vec(), coeffs, nodes: n2, disagreement: gap });
        }
        if n2 >= ctrl.max_nodes {
            return Err(Error::QuadratureNonConvergence { disagreement: gap });
        }
        prev = next;
        n = n2;
    }
}

/// Residue (order −1 coefficient) of a vector-valued `f`.
pub fn residue<F>(f: F, center: C64, radius: f64, ctrl: &ContourControl) -> Result<Vec<C64>>
where
    F: Fn(C64) -> Result<Vec<C64>>,
{
    Ok(laurent_coefficients(f, center, radius, &[-1], ctrl)?.coeffs.remove(0))
}

fn sample_circle<F>(f: &F, center: C64, radius: f64, n: usize, start: usize, stride: usize) -> Result<Vec<Vec<C64>>>
where
    F: Fn(C64) -> Result<Vec<C64>>,
{
    (start..n)
        .step_by(stride)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / n as f64;
            f(center + C64::from_polar(radius, theta))
        })
        .collect()
}

/// c_k r^k estimates; samples are at angles 2πj/n.
fn scaled_coefficients(samples: &[Vec<C64>], n: usize, orders: &[i32]) -> Vec<Vec<C64>> {
    let width = samples.first().map_or(0, Vec::len);
    orders
        .iter()
        .map(|&k| {
            let mut acc = vec![C64::new(0.0, 0.0); width];
            for (j, s) in samples.iter().enumerate() {
                let w = C64::from_polar(1.0, -2.0 * PI * (k as f64) * j as f64 / n as f64);
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v * w;
                }
            }
            acc.into_iter().map(|a| a / n as f64).collect()
        })
        .collect()
}
