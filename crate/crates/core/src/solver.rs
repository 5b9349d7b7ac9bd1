//! Meromorphic vector-valued differentials on the torus from singular parts
//! plus α-contraction conditions at the Tyurin points.
//!
//! A differential with prescribed simple and double poles is assembled as
//!
//! f(z) = Σ_p [ρ_p E(z−p) − σ_p E′(z−p)] + h,
//!
//! which is doubly periodic exactly when Σ_p ρ_p = 0. In genus one the
//! holomorphic differentials are the constants h, so the conditions
//! Σ_i α_a^i f_i|_{regular part at q_a} = b_a form an n×n system whose
//! matrix is the α matrix itself.

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::phase_space::ExtendedPhasePoint;
use crate::scalar::C64;
use crate::theta::ThetaKernel;

/// Poles closer than this (lattice distance) are treated as coincident.
const COINCIDENCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SingularPart {
    pub pole: C64,
    /// Coefficient of (z − pole)⁻¹.
    pub order1: Vec<C64>,
    /// Coefficient of (z − pole)⁻².
    pub order2: Vec<C64>,
}

impl SingularPart {
    pub fn simple(pole: C64, residue: Vec<C64>) -> Self {
        let n = residue.len();
        Self { pole, order1: residue, order2: vec![C64::new(0.0, 0.0); n] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KricheverProblem {
    pub sing: Vec<SingularPart>,
    pub alpha: CMat,
    pub q: Vec<C64>,
    pub b: Vec<C64>,
}

/// An assembled elliptic differential, evaluated pointwise.
#[derive(Clone, Debug)]
pub struct Differential {
    kernel: ThetaKernel,
    sing: Vec<SingularPart>,
    constant: Vec<C64>,
}

impl Differential {
    pub fn dim(&self) -> usize {
        self.constant.len()
    }

    pub fn constant_term(&self) -> &[C64] {
        &self.constant
    }

    pub fn eval(&self, z: C64) -> Result<Vec<C64>> {
        let mut out = self.constant.clone();
        for s in &self.sing {
            let e = self.kernel.log_derivative(z - s.pole)?;
            let de = if s.order2.iter().any(|c| c.norm() != 0.0) {
                self.kernel.log_derivative_prime(z - s.pole)?
            } else {
                C64::new(0.0, 0.0)
            };
            for (o, (r1, r2)) in out.iter_mut().zip(s.order1.iter().zip(&s.order2)) {
                *o += r1 * e - r2 * de;
            }
        }
        Ok(out)
    }

    /// Constant Laurent coefficient at `z0` (the value where f is regular).
    pub fn regular_part_at(&self, z0: C64) -> Result<Vec<C64>> {
        let mut out = self.constant.clone();
        for s in &self.sing {
            let d = z0 - s.pole;
            if self.kernel.lattice_distance(d) < COINCIDENCE {
                // E(ε + m + kτ) = 1/ε − 2πik + O(ε), −E′(ε) = 1/ε² − c₁ + O(ε²)
                let k = self.kernel.reduce(d).k as f64;
                let shift = C64::new(0.0, -2.0 * std::f64::consts::PI * k);
                let c1 = self.kernel.e_linear_coefficient();
                for (o, (r1, r2)) in out.iter_mut().zip(s.order1.iter().zip(&s.order2)) {
                    *o += r1 * shift - r2 * c1;
                }
            } else {
                let e = self.kernel.log_derivative(d)?;
                let de = self.kernel.log_derivative_prime(d)?;
                for (o, (r1, r2)) in out.iter_mut().zip(s.order1.iter().zip(&s.order2)) {
                    *o += r1 * e - r2 * de;
                }
            }
        }
        Ok(out)
    }
}

fn check_shapes(sing: &[SingularPart], dim: usize) -> Result<()> {
    for s in sing {
        if s.order1.len() != dim || s.order2.len() != dim {
            return Err(Error::Dimension(format!("singular part at {} has wrong length", s.pole)));
        }
    }
    Ok(())
}

/// Assembles f(z) = Σ_p [order1·E(z−p) − order2·E′(z−p)] + const_term.
pub fn build_differential(kernel: &ThetaKernel, sing: Vec<SingularPart>, const_term: Vec<C64>) -> Result<Differential> {
    let dim = const_term.len();
    check_shapes(&sing, dim)?;
    for i in 0..dim {
        let sum: C64 = sing.iter().map(|s| s.order1[i]).sum();
        let scale: f64 = sing.iter().map(|s| s.order1[i].norm()).sum::<f64>().max(1.0);
        if sum.norm() > 1e-12 * scale {
            return Err(Error::ResidueSum { sum: sum.norm() });
        }
    }
    Ok(Differential { kernel: *kernel, sing, constant: const_term })
}

/// Genus-one instance of M^{(A i)}_a = μ_A(γ_a) α_a^i with μ = {dw}.
pub fn m_matrix(alpha: &CMat, q: &[C64]) -> CMat {
    let basis_at = |_: C64| C64::new(1.0, 0.0);
    CMat::from_fn(alpha.rows(), alpha.cols(), |a, i| basis_at(q[a]) * alpha[(a, i)])
}

/// 1-norm condition number of M; infinite when singular.
pub fn m_condition(alpha: &CMat, q: &[C64]) -> f64 {
    m_matrix(alpha, q).condition_number()
}

pub fn solve_krichever(kernel: &ThetaKernel, prob: &KricheverProblem) -> Result<Differential> {
    let n = prob.alpha.cols();
    if prob.alpha.rows() != prob.q.len() || prob.b.len() != prob.q.len() || prob.alpha.rows() != n {
        return Err(Error::Dimension("Krichever problem needs n points, n x n alpha, n right-hand sides".into()));
    }
    for a in 0..prob.q.len() {
        if prob.alpha.row(a).iter().all(|v| v.norm() == 0.0) {
            return Err(Error::Dimension(format!("alpha_{a} is the zero vector")));
        }
        for b in a + 1..prob.q.len() {
            let sep = kernel.lattice_distance(prob.q[a] - prob.q[b]);
            if sep < COINCIDENCE {
                return Err(Error::CoincidentPoints { a, b, separation: sep });
            }
        }
    }
    let singular = build_differential(kernel, prob.sing.clone(), vec![C64::new(0.0, 0.0); n])?;
    let m = m_matrix(&prob.alpha, &prob.q);
    let cond = m.condition_number();
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::SingularMatrix { condition: cond });
    }
    let mut rhs = Vec::with_capacity(n);
    for (a, &qa) in prob.q.iter().enumerate() {
        let reg = singular.regular_part_at(qa)?;
        let contraction: C64 = (0..n).map(|i| prob.alpha[(a, i)] * reg[i]).sum();
        rhs.push(prob.b[a] - contraction);
    }
    let h = m.solve_vec(&rhs)?;
    Ok(Differential { constant: h, ..singular })
}

/// Problem whose solution is column `j` of the Lax differential: residues
/// β_a α_a^j at q_a, −T_{·j} at the origin, and α_a·L⁰ = p_a α_a^j.
pub fn lax_column_problem(x: &ExtendedPhasePoint, j: usize) -> KricheverProblem {
    let n = x.n();
    let (alpha, beta) = (x.alpha(), x.beta());
    let mut sing: Vec<SingularPart> = (0..n)
        .map(|a| SingularPart::simple(x.q()[a], (0..n).map(|i| beta[(a, i)] * alpha[(a, j)]).collect()))
        .collect();
    let origin: Vec<C64> = (0..n).map(|i| -(0..n).map(|a| beta[(a, i)] * alpha[(a, j)]).sum::<C64>()).collect();
    sing.push(SingularPart::simple(C64::new(0.0, 0.0), origin));
    KricheverProblem {
        sing,
        alpha: alpha.clone(),
        q: x.q().to_vec(),
        b: (0..n).map(|a| x.p()[a] * alpha[(a, j)]).collect(),
    }
}

/// Problem whose solution in w is row `j` of r(z0, w): residue +e_j at the
/// origin, −e_j at z0, and α_a as null vectors.
pub fn r_row_problem(x: &ExtendedPhasePoint, z0: C64, j: usize) -> KricheverProblem {
    let n = x.n();
    let unit = |s: f64| (0..n).map(|k| C64::new(if k == j { s } else { 0.0 }, 0.0)).collect::<Vec<_>>();
    KricheverProblem {
        sing: vec![SingularPart::simple(C64::new(0.0, 0.0), unit(1.0)), SingularPart::simple(z0, unit(-1.0))],
        alpha: x.alpha().clone(),
        q: x.q().to_vec(),
        b: vec![C64::new(0.0, 0.0); n],
    }
}
