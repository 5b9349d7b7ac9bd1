//! Points of the unreduced phase space T*[Σ × ℙ(ℂⁿ)]ⁿ on the elliptic curve:
//! marked points `q`, their momenta `p`, Tyurin vectors `alpha` (row `a` is
//! α_a) and conjugate vectors `beta` (row `a` is β_a).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, Mat};
use crate::scalar::{Scalar, C64};
use crate::theta::{lattice_distance, CurveModulus};

/// Raw coordinates, generic so the same data can carry dual numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointData<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub alpha: Mat<T>,
    pub beta: Mat<T>,
}

impl<T: Scalar> PointData<T> {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn lift<U: Scalar>(&self, f: impl Fn(T) -> U + Copy) -> PointData<U> {
        PointData {
            q: self.q.iter().map(|&x| f(x)).collect(),
            p: self.p.iter().map(|&x| f(x)).collect(),
            alpha: self.alpha.map(f),
            beta: self.beta.map(f),
        }
    }
}

/// Thresholds that make "generic Tyurin data" checkable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genericity {
    /// Minimum lattice distance between distinct marked points.
    pub min_separation: f64,
    /// Upper bound on the 1-norm condition number of the α matrix.
    pub max_condition: f64,
    /// Per-point orthogonality tolerance, scaled by max(1, |α_a||β_a|).
    pub constraint_tol: f64,
}

impl Default for Genericity {
    fn default() -> Self {
        Self { min_separation: 1e-3, max_condition: 1e8, constraint_tol: 1e-12 }
    }
}

/// A validated phase-space point on a fixed curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPhasePoint {
    curve: CurveModulus,
    data: PointData<C64>,
}

/// T_ij = Σ_a β_a^i α_a^j.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    pub t: CMat,
}

fn bilinear<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

fn euclid(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl ExtendedPhasePoint {
    pub fn new(curve: CurveModulus, q: Vec<C64>, p: Vec<C64>, alpha: CMat, beta: CMat) -> Result<Self> {
        Self::with_genericity(curve, PointData { q, p, alpha, beta }, &Genericity::default())
    }

    pub fn with_genericity(curve: CurveModulus, data: PointData<C64>, gen: &Genericity) -> Result<Self> {
        let n = data.q.len();
        if n == 0 {
            return Err(Error::Dimension("phase-space point needs n >= 1".into()));
        }
        if data.p.len() != n
            || (data.alpha.rows(), data.alpha.cols()) != (n, n)
            || (data.beta.rows(), data.beta.cols()) != (n, n)
        {
            return Err(Error::Dimension(format!(
                "n = {n}: p has {} entries, alpha is {}x{}, beta is {}x{}",
                data.p.len(),
                data.alpha.rows(),
                data.alpha.cols(),
                data.beta.rows(),
                data.beta.cols()
            )));
        }
        for a in 0..n {
            let res = bilinear(data.beta.row(a), data.alpha.row(a)).norm();
            let scale = (euclid(data.alpha.row(a)) * euclid(data.beta.row(a))).max(1.0);
            if !(res <= gen.constraint_tol * scale) {
                return Err(Error::ConstraintViolation { a, residual: res });
            }
        }
        for a in 0..n {
            let d = lattice_distance(data.q[a], &curve);
            if !(d > gen.min_separation) {
                return Err(Error::PointAtOrigin { a, distance: d });
            }
            for b in a + 1..n {
                let sep = lattice_distance(data.q[a] - data.q[b], &curve);
                if !(sep > gen.min_separation) {
                    return Err(Error::CoincidentPoints { a, b, separation: sep });
                }
            }
        }
        let cond = data.alpha.condition_number();
        if !(cond <= gen.max_condition) {
            return Err(Error::SingularMatrix { condition: cond });
        }
        Ok(Self { curve, data })
    }

    pub fn curve(&self) -> &CurveModulus {
        &self.curve
    }

    pub fn n(&self) -> usize {
        self.data.q.len()
    }

    pub fn data(&self) -> &PointData<C64> {
        &self.data
    }

    pub fn q(&self) -> &[C64] {
        &self.data.q
    }

    pub fn p(&self) -> &[C64] {
        &self.data.p
    }

    pub fn alpha(&self) -> &CMat {
        &self.data.alpha
    }

    pub fn beta(&self) -> &CMat {
        &self.data.beta
    }

    /// max_a |Σ_i β_a^i α_a^i|.
    pub fn constraint_residual(&self) -> f64 {
        (0..self.n())
            .map(|a| bilinear(self.data.beta.row(a), self.data.alpha.row(a)).norm())
            .fold(0.0, f64::max)
    }

    /// Copy with replaced momenta; revalidated.
    pub fn with_momenta(&self, p: Vec<C64>) -> Result<Self> {
        let mut data = self.data.clone();
        data.p = p;
        Self::with_genericity(self.curve, data, &Genericity::default())
    }

    /// Copy with replaced conjugate vectors; revalidated.
    pub fn with_beta(&self, beta: CMat) -> Result<Self> {
        let mut data = self.data.clone();
        data.beta = beta;
        Self::with_genericity(self.curve, data, &Genericity::default())
    }
}

pub fn moment_map(x: &ExtendedPhasePoint) -> MomentMatrix {
    MomentMatrix { t: moment_of(&x.data) }
}

pub(crate) fn moment_of<T: Scalar>(d: &PointData<T>) -> Mat<T> {
    // T = Bᵀ A with B, A holding β_a, α_a as rows
    d.beta.transpose().matmul(&d.alpha)
}

/// α_a ↦ α_a G⁻¹, β_a ↦ G β_a.
pub fn gauge_act(x: &ExtendedPhasePoint, g: &CMat) -> Result<ExtendedPhasePoint> {
    let n = x.n();
    if (g.rows(), g.cols()) != (n, n) {
        return Err(Error::Dimension(format!("gauge element must be {n}x{n}")));
    }
    let det = g.determinant();
    if !((det - 1.0).norm() < 1e-10) {
        return Err(Error::NotUnimodular { det });
    }
    let ginv = g.inverse()?;
    let data = PointData {
        q: x.data.q.clone(),
        p: x.data.p.clone(),
        alpha: x.data.alpha.matmul(&ginv),
        beta: x.data.beta.matmul(&g.transpose()),
    };
    ExtendedPhasePoint::with_genericity(x.curve, data, &Genericity::default())
}

/// α_a ↦ λ α_a, β_a ↦ λ⁻¹ β_a for one index `a`.
pub fn rescale(x: &ExtendedPhasePoint, a: usize, lambda: C64) -> Result<ExtendedPhasePoint> {
    if lambda.norm() == 0.0 || !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(Error::ZeroRescale);
    }
    if a >= x.n() {
        return Err(Error::Dimension(format!("rescale index {a} out of range for n = {}", x.n())));
    }
    let mut data = x.data.clone();
    for v in data.alpha.row_mut(a) {
        *v *= lambda;
    }
    for v in data.beta.row_mut(a) {
        *v /= lambda;
    }
    ExtendedPhasePoint::with_genericity(x.curve, data, &Genericity::default())
}

/// Identifies one canonical coordinate of a chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coord {
    Q(usize),
    P(usize),
    Alpha { a: usize, mu: usize },
    Beta { a: usize, mu: usize },
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Coord::Q(a) => write!(f, "q[{a}]"),
            Coord::P(a) => write!(f, "p[{a}]"),
            Coord::Alpha { a, mu } => write!(f, "alpha[{a}][{mu}]"),
            Coord::Beta { a, mu } => write!(f, "beta[{a}][{mu}]"),
        }
    }
}

/// Affine chart on each ℙ^{n−1} factor: component `pivot[a]` of α_a is set to 1
/// and the matching component of β_a is eliminated through the orthogonality
/// constraint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chart {
    pub pivot: Vec<usize>,
}

impl Chart {
    /// Pivot 0 for every point (the first-component chart).
    pub fn first(n: usize) -> Self {
        Self { pivot: vec![0; n] }
    }

    /// Pivot a for point a; admissible on the gauge slice α = identity.
    pub fn diagonal(n: usize) -> Self {
        Self { pivot: (0..n).collect() }
    }

    /// Largest-magnitude component of each α_a.
    pub fn best_for(x: &ExtendedPhasePoint) -> Self {
        let pivot = (0..x.n())
            .map(|a| {
                let row = x.alpha().row(a);
                (0..row.len()).max_by(|&i, &j| row[i].norm().total_cmp(&row[j].norm())).unwrap_or(0)
            })
            .collect();
        Self { pivot }
    }

    pub fn n(&self) -> usize {
        self.pivot.len()
    }

    /// Coordinate layout: q, p, then α_a^μ (a-major), then β_a^μ, μ ≠ pivot[a].
    pub fn coordinates(&self) -> Vec<Coord> {
        let n = self.n();
        let mut out: Vec<Coord> = (0..n).map(Coord::Q).chain((0..n).map(Coord::P)).collect();
        for a in 0..n {
            out.extend((0..n).filter(|&mu| mu != self.pivot[a]).map(|mu| Coord::Alpha { a, mu }));
        }
        for a in 0..n {
            out.extend((0..n).filter(|&mu| mu != self.pivot[a]).map(|mu| Coord::Beta { a, mu }));
        }
        out
    }

    pub fn dimension(&self) -> usize {
        2 * self.n() * self.n()
    }

    /// Index pairs (position, conjugate momentum) into [`Chart::coordinates`].
    pub fn canonical_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let m = n * (n - 1);
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|a| (a, n + a)).collect();
        pairs.extend((0..m).map(|c| (2 * n + c, 2 * n + m + c)));
        pairs
    }

    fn check_admissible(&self, x: &ExtendedPhasePoint) -> Result<()> {
        if self.n() != x.n() || self.pivot.iter().any(|&p| p >= x.n()) {
            return Err(Error::Dimension("chart does not match point dimension".into()));
        }
        for a in 0..x.n() {
            let v = x.alpha()[(a, self.pivot[a])];
            let scale = euclid(x.alpha().row(a));
            if !(v.norm() > 1e-12 * scale) {
                return Err(Error::ChartPivot { a, pivot: self.pivot[a] });
            }
        }
        Ok(())
    }

    /// Rebuilds full coordinates from chart coordinates.
    pub fn to_point_data<T: Scalar>(&self, coords: &[T]) -> PointData<T> {
        let n = self.n();
        assert_eq!(coords.len(), self.dimension(), "chart coordinate vector has wrong length");
        let m = n - 1;
        let q = coords[..n].to_vec();
        let p = coords[n..2 * n].to_vec();
        let mut alpha = Mat::zeros(n, n);
        let mut beta = Mat::zeros(n, n);
        for a in 0..n {
            let piv = self.pivot[a];
            let mut elim = T::zero();
            alpha[(a, piv)] = T::one();
            for (slot, mu) in (0..n).filter(|&mu| mu != piv).enumerate() {
                let al = coords[2 * n + a * m + slot];
                let be = coords[2 * n + n * m + a * m + slot];
                alpha[(a, mu)] = al;
                beta[(a, mu)] = be;
                elim -= al * be;
            }
            beta[(a, piv)] = elim;
        }
        PointData { q, p, alpha, beta }
    }
}

/// Chart coordinates of `x`, after rescaling each α_a so that its pivot component is 1.
pub fn chart_coordinates(x: &ExtendedPhasePoint, chart: &Chart) -> Result<Vec<C64>> {
    chart.check_admissible(x)?;
    let n = x.n();
    let mut out = Vec::with_capacity(chart.dimension());
    out.extend_from_slice(x.q());
    out.extend_from_slice(x.p());
    let mut betas = Vec::with_capacity(n * (n - 1));
    for a in 0..n {
        let piv = chart.pivot[a];
        let lambda = x.alpha()[(a, piv)];
        for mu in (0..n).filter(|&mu| mu != piv) {
            out.push(x.alpha()[(a, mu)] / lambda);
            betas.push(x.beta()[(a, mu)] * lambda);
        }
    }
    out.extend(betas);
    Ok(out)
}

/// Inverse of [`chart_coordinates`] up to the rescaling equivalence.
pub fn from_chart(curve: CurveModulus, coords: &[C64], chart: &Chart) -> Result<ExtendedPhasePoint> {
    if coords.len() != chart.dimension() {
        return Err(Error::Dimension(format!(
            "expected {} chart coordinates, got {}",
            chart.dimension(),
            coords.len()
        )));
    }
    ExtendedPhasePoint::with_genericity(curve, chart.to_point_data(coords), &Genericity::default())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub on_moment_surface: bool,
    pub on_gauge_slice: bool,
}

/// Separation enforced between sampled marked points and from the origin.
pub const SAMPLE_SEPARATION: f64 = 0.2;

fn uniform_c(rng: &mut ChaCha8Rng, r: f64) -> C64 {
    C64::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// Deterministic well-conditioned sample for a seed.
pub fn sample(curve: CurveModulus, seed: u64, n: usize, opts: SampleOptions) -> Result<ExtendedPhasePoint> {
    if n == 0 {
        return Err(Error::InfeasibleSample("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = curve.tau();

    let mut q: Vec<C64> = Vec::with_capacity(n);
    let mut attempts = 0;
    while q.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::InfeasibleSample(format!("could not place {n} separated points")));
        }
        let (x, y) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let z = C64::new(x, 0.0) + tau * y;
        let sep = |w: C64| lattice_distance(z - w, &curve) >= SAMPLE_SEPARATION;
        if sep(C64::new(0.0, 0.0)) && q.iter().all(|&w| sep(w)) {
            q.push(z);
        }
    }

    let p: Vec<C64> = (0..n).map(|_| uniform_c(&mut rng, 0.5)).collect();

    let alpha = if opts.on_gauge_slice {
        CMat::identity(n)
    } else {
        loop {
            let a = CMat::from_fn(n, n, |i, j| {
                let base = if i == j || j == 0 { 1.0 } else { 0.0 };
                C64::new(base, 0.0) + uniform_c(&mut rng, 0.4)
            });
            if a.condition_number() < 50.0 {
                break a;
            }
        }
    };

    let beta = if opts.on_moment_surface {
        let basis = moment_surface_beta_basis(&alpha)?;
        let mut b = CMat::zeros(n, n);
        for v in &basis {
            let coef = uniform_c(&mut rng, 0.5);
            for a in 0..n {
                for i in 0..n {
                    b[(a, i)] += coef * v[a * n + i];
                }
            }
        }
        b
    } else {
        let mut b = CMat::zeros(n, n);
        for a in 0..n {
            let v: Vec<C64> = (0..n).map(|_| uniform_c(&mut rng, 0.5)).collect();
            let al = alpha.row(a);
            // remove the bilinear component along α_a using ᾱ_a
            let conj: Vec<C64> = al.iter().map(|z| z.conj()).collect();
            let c = bilinear(&v, al) / bilinear(&conj, al);
            for i in 0..n {
                b[(a, i)] = v[i] - c * conj[i];
            }
        }
        b
    };

    ExtendedPhasePoint::with_genericity(curve, PointData { q, p, alpha, beta }, &Genericity::default())
}

/// Basis of {β : β_a·α_a = 0 ∀a, Σ_a β_a ⊗ α_a = 0}, flattened a-major.
///
/// For invertible α the moment map alone forces β = 0, so the basis is empty.
pub fn moment_surface_beta_basis(alpha: &CMat) -> Result<Vec<Vec<C64>>> {
    let n = alpha.rows();
    let unknowns = n * n;
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for a in 0..n {
        let mut r = vec![C64::new(0.0, 0.0); unknowns];
        for i in 0..n {
            r[a * n + i] = alpha[(a, i)];
        }
        rows.push(r);
    }
    for i in 0..n {
        for j in 0..n {
            let mut r = vec![C64::new(0.0, 0.0); unknowns];
            for a in 0..n {
                r[a * n + i] = alpha[(a, j)];
            }
            rows.push(r);
        }
    }
    Ok(null_space(rows, unknowns, 1e-10))
}

/// Right null space by reduced row echelon form with a relative rank tolerance.
fn null_space(mut rows: Vec<Vec<C64>>, cols: usize, tol: f64) -> Vec<Vec<C64>> {
    let scale = rows.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows.len() {
            break;
        }
        let best = (r..rows.len()).max_by(|&i, &j| rows[i][c].norm().total_cmp(&rows[j][c].norm())).unwrap();
        if rows[best][c].norm() <= tol * scale {
            continue;
        }
        rows.swap(r, best);
        let piv = rows[r][c];
        for v in rows[r].iter_mut() {
            *v /= piv;
        }
        for i in 0..rows.len() {
            if i != r {
                let f = rows[i][c];
                if f.norm() != 0.0 {
                    for k in 0..cols {
                        let t = rows[r][k];
                        rows[i][k] -= f * t;
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![C64::new(0.0, 0.0); cols];
            v[f] = C64::new(1.0, 0.0);
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -rows[row][f];
            }
            v
        })
        .collect()
}
