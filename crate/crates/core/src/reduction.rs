//! Gauge compensator G(α) = det(A)^{−1/n} A, the dressed Lax matrix
//! l(z) = G L(z) G⁻¹, the Hitchin r-matrix r^H = r + {G₁, L₂(w)} and the
//! spin Calogero–Moser constraint Σ_a β_a ⊗ α_a + η = 0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lax::{lax_data, unflatten};
use crate::linalg::{CMat, Mat, Tensor4};
use crate::phase_space::{moment_map, Chart, ExtendedPhasePoint, PointData};
use crate::poisson::{bracket_matrix, d_tensor, jacobian, jacobian_checked, yb_rhs, BracketSign, BracketTensor, LaxAt, PhaseFn};
use crate::rmatrix::r_tensor;
use crate::scalar::{Scalar, C64};
use crate::theta::ThetaKernel;

/// Distance from the identity below which G(α) counts as the identity.
pub const SLICE_TOL: f64 = 1e-10;

/// Diagonal-minor gauge fixing; in the elliptic mode the minor uses every row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaugeSlice {
    pub indices: Vec<usize>,
}

impl GaugeSlice {
    pub fn elliptic(n: usize) -> Self {
        Self { indices: (0..n).collect() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in &self.indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Dimension(format!("gauge slice indices {:?} invalid for n = {n}", self.indices)));
            }
        }
        if self.indices.len() != n {
            return Err(Error::Dimension("elliptic gauge slice needs all n rows".into()));
        }
        Ok(())
    }
}

/// Orbit coordinates η of the spin degrees of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub eta: CMat,
}

impl OrbitPoint {
    pub fn new(eta: CMat) -> Result<Self> {
        let tr = eta.trace().norm();
        if !eta.is_square() || !(tr <= 1e-12 * eta.max_abs().max(1.0)) {
            return Err(Error::Dimension(format!("orbit matrix must be square and traceless (trace {tr:e})")));
        }
        Ok(Self { eta })
    }
}

fn minor<T: Scalar>(alpha: &Mat<T>, slice: &GaugeSlice) -> Mat<T> {
    let n = alpha.cols();
    Mat::from_fn(n, n, |r, c| alpha[(slice.indices[r], c)])
}

fn compensator_with_root<T: Scalar>(a: &Mat<T>, root_inv: T) -> Mat<T> {
    a.scale(root_inv)
}

/// G = det(A)^{−1/n} A on the principal branch; generic over dual numbers.
pub fn compensator_data<T: Scalar>(alpha: &Mat<T>, slice: &GaugeSlice) -> Result<Mat<T>> {
    let n = alpha.cols();
    slice.validate(n)?;
    let a = minor(alpha, slice);
    let det = a.determinant();
    if det.value().norm() == 0.0 {
        return Err(Error::SingularMatrix { condition: f64::INFINITY });
    }
    Ok(compensator_with_root(&a, det.powc(C64::new(-1.0 / n as f64, 0.0))))
}

pub fn compensator(alpha: &CMat, slice: &GaugeSlice) -> Result<CMat> {
    let cond = alpha.condition_number();
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::SingularMatrix { condition: cond });
    }
    compensator_data(alpha, slice)
}

/// Follows arg det(A) along a path so the n-th root stays continuous.
#[derive(Clone, Debug)]
pub struct BranchTracker {
    slice: GaugeSlice,
    /// Reject cut crossings instead of unwinding them.
    pub strict: bool,
    phase: Option<f64>,
    principal: f64,
    /// Number of cut crossings unwound so far.
    pub crossings: usize,
}

impl BranchTracker {
    pub fn new(slice: GaugeSlice, strict: bool) -> Self {
        Self { slice, strict, phase: None, principal: 0.0, crossings: 0 }
    }

    pub fn step(&mut self, alpha: &CMat) -> Result<CMat> {
        let n = alpha.cols();
        self.slice.validate(n)?;
        let a = minor(alpha, &self.slice);
        let det = a.determinant();
        if det.norm() == 0.0 {
            return Err(Error::SingularMatrix { condition: f64::INFINITY });
        }
        let principal = det.arg();
        let phase = match self.phase {
            None => principal,
            Some(prev) => {
                let turns = ((prev - principal) / (2.0 * PI)).round();
                let unwound = principal + 2.0 * PI * turns;
                if (principal - self.principal).abs() > PI {
                    if self.strict {
                        return Err(Error::BranchAmbiguity(format!(
                            "arg det(A) moved from {prev:.6} to principal value {principal:.6}"
                        )));
                    }
                    self.crossings += 1;
                }
                unwound
            }
        };
        self.phase = Some(phase);
        self.principal = principal;
        let root_inv = C64::from_polar(det.norm().powf(-1.0 / n as f64), -phase / n as f64);
        Ok(compensator_with_root(&a, root_inv))
    }
}

/// G(α) flattened row-major.
#[derive(Clone, Debug)]
pub struct CompensatorFn(pub GaugeSlice);

impl PhaseFn for CompensatorFn {
    fn eval<T: Scalar>(&self, _: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>> {
        Ok(compensator_data(&d.alpha, &self.0)?.as_slice().to_vec())
    }
}

/// l(z) = G L(z) G⁻¹ flattened row-major.
#[derive(Clone, Debug)]
pub struct DressedLax {
    pub z: C64,
    pub slice: GaugeSlice,
}

impl PhaseFn for DressedLax {
    fn eval<T: Scalar>(&self, kernel: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>> {
        let g = compensator_data(&d.alpha, &self.slice)?;
        let l = lax_data(kernel, d, T::constant(self.z))?;
        Ok(g.matmul(&l).matmul(&g.inverse()?).as_slice().to_vec())
    }
}

pub fn dressed_lax(kernel: &ThetaKernel, x: &ExtendedPhasePoint, z: C64, slice: &GaugeSlice) -> Result<CMat> {
    compensator(x.alpha(), slice)?;
    Ok(unflatten(x.n(), &DressedLax { z, slice: slice.clone() }.eval(kernel, x.data())?))
}

/// max |G(α) − 1|.
pub fn slice_deviation(x: &ExtendedPhasePoint, slice: &GaugeSlice) -> Result<f64> {
    Ok(compensator(x.alpha(), slice)?.max_abs_diff(&CMat::identity(x.n())))
}

fn require_slice(x: &ExtendedPhasePoint, slice: &GaugeSlice) -> Result<()> {
    let dev = slice_deviation(x, slice)?;
    if !(dev <= SLICE_TOL) {
        return Err(Error::OffSlice { deviation: dev });
    }
    Ok(())
}

/// {G_ij, L_kl(w)} as a 4-index tensor, in the diagonal chart.
pub fn compensator_lax_bracket(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    w: C64,
    slice: &GaugeSlice,
    sign: BracketSign,
) -> Result<Tensor4> {
    let chart = Chart::diagonal(x.n());
    let jg = jacobian(kernel, &CompensatorFn(slice.clone()), x, &chart)?;
    let jl = jacobian(kernel, &LaxAt(w), x, &chart)?;
    Ok(d_tensor(&jg, &jl, &chart, sign))
}

/// r^H(z, w) = r(z, w) + {G₁, L₂(w)} at a point of the gauge slice.
pub fn r_hitchin(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    z: C64,
    w: C64,
    slice: &GaugeSlice,
    sign: BracketSign,
) -> Result<Tensor4> {
    require_slice(x, slice)?;
    Ok(r_tensor(kernel, x, z, w)?.value.add(&compensator_lax_bracket(kernel, x, w, slice, sign)?))
}

/// {l_ij(z), l_kl(w)} against [r^H(z,w), l₁] − [r^H(w,z)₂₁, l₂] at a slice point.
pub fn dressed_bracket_tensor(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    z: C64,
    w: C64,
    slice: &GaugeSlice,
    sign: BracketSign,
) -> Result<BracketTensor> {
    require_slice(x, slice)?;
    let chart = Chart::diagonal(x.n());
    let n = x.n();
    let (jz, gz) = jacobian_checked(kernel, &DressedLax { z, slice: slice.clone() }, x, &chart)?;
    let (jw, gw) = jacobian_checked(kernel, &DressedLax { z: w, slice: slice.clone() }, x, &chart)?;
    let d = d_tensor(&jz, &jw, &chart, sign);
    let rzw = r_hitchin(kernel, x, z, w, slice, sign)?;
    let rwz = r_hitchin(kernel, x, w, z, slice, sign)?;
    let r = yb_rhs(&rzw, &rwz, &unflatten(n, &jz.value), &unflatten(n, &jw.value));
    Ok(BracketTensor { d, r, cross_check_gap: gz.max(gw) })
}

/// max |{G_ij, G_kl}|.
pub fn compensator_self_bracket(kernel: &ThetaKernel, x: &ExtendedPhasePoint, slice: &GaugeSlice, sign: BracketSign) -> Result<f64> {
    let chart = Chart::best_for(x);
    let jg = jacobian(kernel, &CompensatorFn(slice.clone()), x, &chart)?;
    Ok(bracket_matrix(&jg, &jg, &chart, sign).max_abs())
}

/// max |Σ_a β_a^i α_a^j + η_ij|.
pub fn spin_cm_residual(x: &ExtendedPhasePoint, orbit: &OrbitPoint) -> f64 {
    moment_map(x).t.add(&orbit.eta).max_abs()
}
