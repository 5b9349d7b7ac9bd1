//! The scalar r-matrix r_jk(z, w) on the elliptic curve and the 4-index
//! r-matrix differential built from it.
//!
//! r_jk(z, w) = δ_jk (E(z−w) + E(w)) − Σ_a π_k^a α_a^j (E(z−q_a) + E(q_a)),
//!
//! where π is the inverse of the α matrix. The full tensor places r_jk on
//! e_ij ⊗ e_ki, i.e. component (i, j, k, l) equals δ_li r_jk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lax::{check_radius, unflatten};
use crate::linalg::{CMat, Mat, Tensor4};
use crate::phase_space::ExtendedPhasePoint;
use crate::quadrature::{laurent_coefficients, ContourControl};
use crate::scalar::{Scalar, C64};
use crate::theta::ThetaKernel;

/// Which index placement of the α–π term is used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexReading {
    /// π_k^a α_a^j on r_jk.
    #[default]
    Direct,
    /// The transposed placement π_j^a α_a^k.
    Transposed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RScalar {
    pub value: CMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RTensor {
    pub value: Tensor4,
}

/// Constant holomorphic differentials u_{aj}(w)dw = π_j^a dw.
#[derive(Clone, Debug, PartialEq)]
pub struct HoloBasis {
    pub pi: CMat,
}

impl HoloBasis {
    /// u_{ai}, independent of the evaluation point in genus one.
    pub fn u(&self, a: usize, i: usize) -> C64 {
        self.pi[(i, a)]
    }
}

pub fn holo_basis(alpha: &CMat, max_condition: f64) -> Result<HoloBasis> {
    let cond = alpha.condition_number();
    if !(cond <= max_condition) {
        return Err(Error::SingularMatrix { condition: cond });
    }
    Ok(HoloBasis { pi: alpha.inverse()? })
}

/// Generic evaluation on (q, α); p and β never enter.
pub fn r_scalar_data<T: Scalar>(
    kernel: &ThetaKernel,
    q: &[T],
    alpha: &Mat<T>,
    z: T,
    w: T,
    reading: IndexReading,
) -> Result<Mat<T>> {
    let n = q.len();
    let pi = alpha.inverse()?;
    let diag = kernel.log_derivative(z - w)? + kernel.log_derivative(w)?;
    let c: Vec<T> = q
        .iter()
        .map(|&qa| Ok(kernel.log_derivative(z - qa)? + kernel.log_derivative(qa)?))
        .collect::<Result<_>>()?;
    let mut r = Mat::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut v = if j == k { diag } else { T::zero() };
            for a in 0..n {
                let coef = match reading {
                    IndexReading::Direct => pi[(k, a)] * alpha[(a, j)],
                    IndexReading::Transposed => pi[(j, a)] * alpha[(a, k)],
                };
                v -= coef * c[a];
            }
            r[(j, k)] = v;
        }
    }
    Ok(r)
}

pub fn r_scalar(kernel: &ThetaKernel, x: &ExtendedPhasePoint, z: C64, w: C64) -> Result<RScalar> {
    r_scalar_with(kernel, x, z, w, IndexReading::Direct)
}

pub fn r_scalar_with(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    z: C64,
    w: C64,
    reading: IndexReading,
) -> Result<RScalar> {
    Ok(RScalar { value: r_scalar_data(kernel, x.q(), x.alpha(), z, w, reading)? })
}

/// Spreads a scalar r-matrix into the 4-index template δ_li r_jk.
pub fn tensor_from_scalar(r: &CMat) -> Tensor4 {
    let n = r.rows();
    Tensor4::from_fn(n, |i, j, k, l| if l == i { r[(j, k)] } else { C64::new(0.0, 0.0) })
}

pub fn r_tensor(kernel: &ThetaKernel, x: &ExtendedPhasePoint, z: C64, w: C64) -> Result<RTensor> {
    Ok(RTensor { value: tensor_from_scalar(&r_scalar(kernel, x, z, w)?.value) })
}

/// z-Laurent data of r(·, w) at q_a.
#[derive(Clone, Debug, PartialEq)]
pub struct RLaurent {
    pub res: CMat,
    pub r0: CMat,
    pub r1: CMat,
}

pub fn r_laurent_in_z(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    a: usize,
    w: C64,
    radius: f64,
    ctrl: &ContourControl,
) -> Result<RLaurent> {
    let n = x.n();
    if a >= n {
        return Err(Error::Dimension(format!("marked point index {a} out of range")));
    }
    let center = x.q()[a];
    let mut others: Vec<C64> = x.q().iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &q)| q).collect();
    others.push(w);
    check_radius(kernel, center, &others, radius)?;
    let l = laurent_coefficients(
        |z| Ok(r_scalar(kernel, x, z, w)?.value.as_slice().to_vec()),
        center,
        radius,
        &[-1, 0, 1],
        ctrl,
    )?;
    Ok(RLaurent { res: unflatten(n, &l.coeffs[0]), r0: unflatten(n, &l.coeffs[1]), r1: unflatten(n, &l.coeffs[2]) })
}
