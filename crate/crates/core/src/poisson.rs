//! Canonical brackets on chart coordinates, derivatives of phase-space
//! functions, and the bracket tensor D_ijkl(z, w) = {L_ij(z), L_kl(w)} with
//! its r-matrix right-hand side R_ijkl(z, w).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lax::{check_radius, lax_data, pole_set, unflatten};
use crate::linalg::{CMat, Mat, Tensor4};
use crate::phase_space::{chart_coordinates, Chart, Coord, ExtendedPhasePoint, PointData};
use crate::quadrature::{laurent_coefficients, ContourControl};
use crate::rmatrix::{r_scalar_with, tensor_from_scalar, IndexReading};
use crate::scalar::{Dual, Scalar, C64};
use crate::theta::ThetaKernel;

/// Finite-difference step of the cross-check route.
pub const FD_STEP: f64 = 1e-5;
/// Relative gap between the two differentiation routes that is reported as an error.
pub const DISAGREEMENT_TOL: f64 = 1e-5;

/// A holomorphic function on the phase space with vector output.
pub trait PhaseFn {
    fn eval<T: Scalar>(&self, kernel: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>>;
}

/// Flattened L(z), row-major.
#[derive(Clone, Copy, Debug)]
pub struct LaxAt(pub C64);

impl PhaseFn for LaxAt {
    fn eval<T: Scalar>(&self, kernel: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>> {
        Ok(lax_data(kernel, d, T::constant(self.0))?.as_slice().to_vec())
    }
}

/// tr L(z)^k.
#[derive(Clone, Copy, Debug)]
pub struct TracePower {
    pub z: C64,
    pub k: u32,
}

pub(crate) fn trace_power<T: Scalar>(l: &Mat<T>, k: u32) -> T {
    let mut acc = l.clone();
    for _ in 1..k {
        acc = acc.matmul(l);
    }
    acc.trace()
}

impl PhaseFn for TracePower {
    fn eval<T: Scalar>(&self, kernel: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>> {
        Ok(vec![trace_power(&lax_data(kernel, d, T::constant(self.z))?, self.k)])
    }
}

/// The value of one raw coordinate.
#[derive(Clone, Copy, Debug)]
pub struct CoordFn(pub Coord);

impl PhaseFn for CoordFn {
    fn eval<T: Scalar>(&self, _: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>> {
        Ok(vec![match self.0 {
            Coord::Q(a) => d.q[a],
            Coord::P(a) => d.p[a],
            Coord::Alpha { a, mu } => d.alpha[(a, mu)],
            Coord::Beta { a, mu } => d.beta[(a, mu)],
        }])
    }
}

/// Sign of the α–β pairing; {q, p} = +1 in both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketSign {
    /// {α^μ, β^μ} = +1.
    #[default]
    Standard,
    /// {α^μ, β^μ} = −1.
    FlippedAlphaBeta,
}

/// The discrete choices under which the bracket identities are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    pub bracket_sign: BracketSign,
    pub r_index_reading: IndexReading,
}

/// Partials of a vector function with respect to every chart coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    pub coords: Vec<Coord>,
    pub value: Vec<C64>,
    /// `partials[c][i]` = ∂f_i/∂coords[c].
    pub partials: Vec<Vec<C64>>,
}

fn seeded(base: &[C64], idx: usize) -> Vec<Dual> {
    base.iter()
        .enumerate()
        .map(|(c, &v)| if c == idx { Dual::variable(v) } else { Dual::constant(v) })
        .collect()
}

/// Partial derivative of `f` along chart coordinate `idx` by dual numbers.
pub fn partial_at<F: PhaseFn>(kernel: &ThetaKernel, f: &F, chart: &Chart, base: &[C64], idx: usize) -> Result<Vec<C64>> {
    let out = f.eval(kernel, &chart.to_point_data(&seeded(base, idx)))?;
    Ok(out.into_iter().map(|d| d.du).collect())
}

/// Forward-mode Jacobian on the chart coordinates of `x`.
pub fn jacobian<F: PhaseFn>(kernel: &ThetaKernel, f: &F, x: &ExtendedPhasePoint, chart: &Chart) -> Result<Jacobian> {
    let base = chart_coordinates(x, chart)?;
    let value = f.eval(kernel, &chart.to_point_data(&base))?;
    let partials = (0..base.len()).map(|c| partial_at(kernel, f, chart, &base, c)).collect::<Result<_>>()?;
    Ok(Jacobian { coords: chart.coordinates(), value, partials })
}

/// Central differences with one Richardson step: (4 D(h/2) − D(h)) / 3.
pub fn jacobian_fd<F: PhaseFn>(kernel: &ThetaKernel, f: &F, x: &ExtendedPhasePoint, chart: &Chart) -> Result<Jacobian> {
    let base = chart_coordinates(x, chart)?;
    let eval = |c: usize, h: f64| -> Result<Vec<C64>> {
        let mut v = base.clone();
        v[c] += h;
        f.eval(kernel, &chart.to_point_data(&v))
    };
    let value = f.eval(kernel, &chart.to_point_data(&base))?;
    let mut partials = Vec::with_capacity(base.len());
    for c in 0..base.len() {
        let (h, h2) = (FD_STEP, 0.5 * FD_STEP);
        let (fp, fm) = (eval(c, h)?, eval(c, -h)?);
        let (gp, gm) = (eval(c, h2)?, eval(c, -h2)?);
        partials.push(
            (0..value.len())
                .map(|i| {
                    let d1 = (fp[i] - fm[i]) / (2.0 * h);
                    let d2 = (gp[i] - gm[i]) / (2.0 * h2);
                    (d2 * 4.0 - d1) / 3.0
                })
                .collect(),
        );
    }
    Ok(Jacobian { coords: chart.coordinates(), value, partials })
}

/// Largest per-coordinate relative gap max_i |a_i − b_i| / max(1, max_i |a_i|).
pub fn jacobian_gap(a: &Jacobian, b: &Jacobian) -> (f64, Option<Coord>) {
    let mut worst = (0.0, None);
    for (c, (pa, pb)) in a.partials.iter().zip(&b.partials).enumerate() {
        let scale = pa.iter().map(|v| v.norm()).fold(1.0, f64::max);
        let gap = pa.iter().zip(pb).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max) / scale;
        if gap > worst.0 {
            worst = (gap, Some(a.coords[c]));
        }
    }
    worst
}

/// Dual-number Jacobian, confirmed against finite differences.
pub fn jacobian_checked<F: PhaseFn>(
    kernel: &ThetaKernel,
    f: &F,
    x: &ExtendedPhasePoint,
    chart: &Chart,
) -> Result<(Jacobian, f64)> {
    let ad = jacobian(kernel, f, x, chart)?;
    let fd = jacobian_fd(kernel, f, x, chart)?;
    let (gap, coord) = jacobian_gap(&ad, &fd);
    if gap > DISAGREEMENT_TOL {
        return Err(Error::MethodDisagreement { coordinate: coord.map(|c| c.to_string()).unwrap_or_default(), gap });
    }
    Ok((ad, gap))
}

/// ∂L(z)/∂c for every chart coordinate c.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBundle {
    pub coords: Vec<Coord>,
    pub partials: Vec<CMat>,
    /// Relative gap to the finite-difference route.
    pub cross_check_gap: f64,
}

impl DerivativeBundle {
    pub fn partial(&self, c: Coord) -> Option<&CMat> {
        self.coords.iter().position(|&k| k == c).map(|i| &self.partials[i])
    }
}

pub fn differentiate(kernel: &ThetaKernel, x: &ExtendedPhasePoint, z: C64, chart: &Chart) -> Result<DerivativeBundle> {
    let n = x.n();
    let (j, gap) = jacobian_checked(kernel, &LaxAt(z), x, chart)?;
    Ok(DerivativeBundle {
        coords: j.coords,
        partials: j.partials.iter().map(|p| unflatten(n, p)).collect(),
        cross_check_gap: gap,
    })
}

/// {f_i, g_j} for all output pairs, from precomputed Jacobians.
pub fn bracket_matrix(jf: &Jacobian, jg: &Jacobian, chart: &Chart, sign: BracketSign) -> CMat {
    let n = chart.n();
    let mut out = CMat::zeros(jf.value.len(), jg.value.len());
    for (u, v) in chart.canonical_pairs() {
        let s = if u >= 2 * n && sign == BracketSign::FlippedAlphaBeta { -1.0 } else { 1.0 };
        let (fu, fv, gu, gv) = (&jf.partials[u], &jf.partials[v], &jg.partials[u], &jg.partials[v]);
        for i in 0..fu.len() {
            for j in 0..gu.len() {
                out[(i, j)] += (fu[i] * gv[j] - fv[i] * gu[j]) * s;
            }
        }
    }
    out
}

/// {f, g} for scalar functions.
pub fn bracket<F: PhaseFn, G: PhaseFn>(
    kernel: &ThetaKernel,
    f: &F,
    g: &G,
    x: &ExtendedPhasePoint,
    chart: &Chart,
    sign: BracketSign,
) -> Result<C64> {
    let (jf, jg) = (jacobian(kernel, f, x, chart)?, jacobian(kernel, g, x, chart)?);
    if jf.value.len() != 1 || jg.value.len() != 1 {
        return Err(Error::Dimension("scalar bracket needs scalar functions".into()));
    }
    Ok(bracket_matrix(&jf, &jg, chart, sign)[(0, 0)])
}

/// D and R at one probe pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketTensor {
    pub d: Tensor4,
    pub r: Tensor4,
    /// Relative gap between the two differentiation routes.
    pub cross_check_gap: f64,
}

impl BracketTensor {
    /// max|D − R| / max(1, max|D|).
    pub fn residual(&self) -> f64 {
        self.d.max_abs_diff(&self.r) / self.d.max_abs().max(1.0)
    }
}

/// D_ijkl = {L_ij(z), L_kl(w)}.
pub fn d_tensor(jz: &Jacobian, jw: &Jacobian, chart: &Chart, sign: BracketSign) -> Tensor4 {
    let n = chart.n();
    let b = bracket_matrix(jz, jw, chart, sign);
    Tensor4::from_fn(n, |i, j, k, l| b[(i * n + j, k * n + l)])
}

/// Right-hand side [r₁₂(z,w), L₁(z)] − [r₂₁(w,z), L₂(w)] in components:
///
/// Σ_m (r_imkl L_mj − L_im r_mjkl) − Σ_m (r'_kmij L'_ml − L'_km r'_mlij),
///
/// with r = r(z, w), L = L(z), r' = r(w, z), L' = L(w).
pub fn yb_rhs(rzw: &Tensor4, rwz: &Tensor4, lz: &CMat, lw: &CMat) -> Tensor4 {
    let n = lz.rows();
    Tensor4::from_fn(n, |i, j, k, l| {
        let mut s = C64::new(0.0, 0.0);
        for m in 0..n {
            s += rzw[(i, m, k, l)] * lz[(m, j)] - lz[(i, m)] * rzw[(m, j, k, l)];
            s -= rwz[(k, m, i, j)] * lw[(m, l)] - lw[(k, m)] * rwz[(m, l, i, j)];
        }
        s
    })
}

pub fn bracket_tensor(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    z: C64,
    w: C64,
    chart: &Chart,
    conv: Conventions,
) -> Result<BracketTensor> {
    if kernel.lattice_distance(z - w) < kernel.control().pole_guard {
        return Err(Error::PoleProximity { z: w, distance: kernel.lattice_distance(z - w), guard: kernel.control().pole_guard });
    }
    let (jz, gz) = jacobian_checked(kernel, &LaxAt(z), x, chart)?;
    let (jw, gw) = jacobian_checked(kernel, &LaxAt(w), x, chart)?;
    let n = x.n();
    let d = d_tensor(&jz, &jw, chart, conv.bracket_sign);
    let rzw = tensor_from_scalar(&r_scalar_with(kernel, x, z, w, conv.r_index_reading)?.value);
    let rwz = tensor_from_scalar(&r_scalar_with(kernel, x, w, z, conv.r_index_reading)?.value);
    let r = yb_rhs(&rzw, &rwz, &unflatten(n, &jz.value), &unflatten(n, &jw.value));
    Ok(BracketTensor { d, r, cross_check_gap: gz.max(gw) })
}

/// {tr L(z)^k, tr L(w)^k}.
pub fn involution_check(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    z: C64,
    w: C64,
    k: u32,
    chart: &Chart,
    sign: BracketSign,
) -> Result<C64> {
    bracket(kernel, &TracePower { z, k }, &TracePower { z: w, k }, x, chart, sign)
}

/// Conventions tried in order when the default fails.
pub const CONVENTION_ORDER: [Conventions; 4] = [
    Conventions { bracket_sign: BracketSign::Standard, r_index_reading: IndexReading::Direct },
    Conventions { bracket_sign: BracketSign::FlippedAlphaBeta, r_index_reading: IndexReading::Direct },
    Conventions { bracket_sign: BracketSign::Standard, r_index_reading: IndexReading::Transposed },
    Conventions { bracket_sign: BracketSign::FlippedAlphaBeta, r_index_reading: IndexReading::Transposed },
];

/// First convention in [`CONVENTION_ORDER`] whose worst residual over the
/// probes is within `tol`, with that residual; otherwise the default and its
/// residual.
pub fn select_conventions(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    probes: &[(C64, C64)],
    chart: &Chart,
    tol: f64,
) -> Result<(Conventions, f64)> {
    let mut first = None;
    for conv in CONVENTION_ORDER {
        let mut worst: f64 = 0.0;
        for &(z, w) in probes {
            worst = worst.max(bracket_tensor(kernel, x, z, w, chart, conv)?.residual());
        }
        if worst <= tol {
            return Ok((conv, worst));
        }
        first.get_or_insert((conv, worst));
    }
    Ok(first.expect("convention list is nonempty"))
}

/// ∂L(z)/∂c for one chart coordinate.
pub fn lax_partial(kernel: &ThetaKernel, chart: &Chart, base: &[C64], idx: usize, z: C64) -> Result<CMat> {
    Ok(unflatten(chart.n(), &partial_at(kernel, &LaxAt(z), chart, base, idx)?))
}

/// Laurent coefficients of ∂L/∂c at q_a, by quadrature of the differentiated integrand.
pub fn lax_partial_laurent(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    chart: &Chart,
    coord: Coord,
    a: usize,
    radius: f64,
    orders: &[i32],
    ctrl: &ContourControl,
) -> Result<Vec<CMat>> {
    let base = chart_coordinates(x, chart)?;
    let idx = chart
        .coordinates()
        .iter()
        .position(|&c| c == coord)
        .ok_or_else(|| Error::Unknown { kind: "chart coordinate", name: coord.to_string() })?;
    let center = x.q()[a];
    let others: Vec<C64> = pole_set(x).into_iter().enumerate().filter(|&(i, _)| i != a + 1).map(|(_, p)| p).collect();
    check_radius(kernel, center, &others, radius)?;
    let l = laurent_coefficients(
        |z| Ok(lax_partial(kernel, chart, &base, idx, z)?.as_slice().to_vec()),
        center,
        radius,
        orders,
        ctrl,
    )?;
    Ok(l.coeffs.iter().map(|c| unflatten(x.n(), c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{sample, SampleOptions};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn setup(n: usize, seed: u64) -> (ThetaKernel, ExtendedPhasePoint) {
        let k = ThetaKernel::with_tau(c(0.0, 1.0)).unwrap();
        let x = sample(*k.curve(), seed, n, SampleOptions::default()).unwrap();
        (k, x)
    }

    #[test]
    fn canonical_pairs_bracket_to_one() {
        let (k, x) = setup(2, 3);
        let chart = Chart::first(2);
        let s = BracketSign::Standard;
        for a in 0..2 {
            for b in 0..2 {
                let v = bracket(&k, &CoordFn(Coord::Q(a)), &CoordFn(Coord::P(b)), &x, &chart, s).unwrap();
                assert_eq!(v, c(if a == b { 1.0 } else { 0.0 }, 0.0));
            }
        }
        let ab = bracket(&k, &CoordFn(Coord::Alpha { a: 1, mu: 1 }), &CoordFn(Coord::Beta { a: 1, mu: 1 }), &x, &chart, s).unwrap();
        assert_eq!(ab, c(1.0, 0.0));
        let flipped =
            bracket(&k, &CoordFn(Coord::Alpha { a: 1, mu: 1 }), &CoordFn(Coord::Beta { a: 1, mu: 1 }), &x, &chart, BracketSign::FlippedAlphaBeta)
                .unwrap();
        assert_eq!(flipped, c(-1.0, 0.0));
    }

    #[test]
    fn bracket_is_antisymmetric() {
        let (k, x) = setup(2, 5);
        let chart = Chart::first(2);
        let f = TracePower { z: c(0.21, 0.3), k: 2 };
        let g = TracePower { z: c(-0.33, 0.12), k: 3 };
        let fg = bracket(&k, &f, &g, &x, &chart, BracketSign::Standard).unwrap();
        let gf = bracket(&k, &g, &f, &x, &chart, BracketSign::Standard).unwrap();
        assert!((fg + gf).norm() < 1e-12 * fg.norm().max(1.0));
    }

    #[test]
    fn dual_and_finite_difference_routes_agree() {
        let (k, x) = setup(3, 8);
        let (_, gap) = jacobian_checked(&k, &LaxAt(c(0.27, -0.18)), &x, &Chart::first(3)).unwrap();
        assert!(gap < 1e-6, "gap {gap:e}");
    }

    #[test]
    fn momentum_partial_is_rank_one() {
        let (k, x) = setup(2, 9);
        let chart = Chart::first(2);
        let bundle = differentiate(&k, &x, c(0.3, 0.2), &chart).unwrap();
        let d = chart.to_point_data(&chart_coordinates(&x, &chart).unwrap());
        let pi = d.alpha.inverse().unwrap();
        for a in 0..2 {
            let expect = CMat::from_fn(2, 2, |i, j| pi[(i, a)] * d.alpha[(a, j)]);
            assert!(bundle.partial(Coord::P(a)).unwrap().max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn yang_baxter_holds_for_n2() {
        let (k, x) = setup(2, 4);
        let t = bracket_tensor(&k, &x, c(0.21, 0.33), c(-0.37, 0.12), &Chart::first(2), Conventions::default()).unwrap();
        assert!(t.residual() < 1e-9, "residual {:e}", t.residual());
        let anti = bracket_tensor(&k, &x, c(-0.37, 0.12), c(0.21, 0.33), &Chart::first(2), Conventions::default()).unwrap();
        assert!(t.d.add(&anti.d.swap_pairs()).max_abs() < 1e-10 * t.d.max_abs().max(1.0));
    }

    #[test]
    fn rank_one_tensors_vanish() {
        let (k, x) = setup(1, 4);
        let t = bracket_tensor(&k, &x, c(0.21, 0.33), c(-0.37, 0.12), &Chart::first(1), Conventions::default()).unwrap();
        assert!(t.d.max_abs() == 0.0 && t.r.max_abs() < 1e-15);
        let v = involution_check(&k, &x, c(0.21, 0.33), c(-0.37, 0.12), 2, &Chart::first(1), BracketSign::Standard).unwrap();
        assert_eq!(v, c(0.0, 0.0));
    }

    #[test]
    fn wrong_conventions_fail() {
        let (k, x) = setup(2, 4);
        let (z, w) = (c(0.21, 0.33), c(-0.37, 0.12));
        for conv in &CONVENTION_ORDER[1..] {
            let t = bracket_tensor(&k, &x, z, w, &Chart::first(2), *conv).unwrap();
            assert!(t.residual() > 1e-3, "{conv:?} unexpectedly passes");
        }
        let (chosen, _) = select_conventions(&k, &x, &[(z, w)], &Chart::first(2), 1e-6).unwrap();
        assert_eq!(chosen, Conventions::default());
    }

    #[test]
    fn coincident_probes_rejected() {
        let (k, x) = setup(2, 4);
        let z = c(0.21, 0.33);
        assert!(matches!(
            bracket_tensor(&k, &x, z, z + 1.0, &Chart::first(2), Conventions::default()),
            Err(Error::PoleProximity { .. })
        ));
    }
}
