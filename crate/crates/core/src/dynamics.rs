//! Hamiltonian flows of the spectral invariants H = (1/k) tr L(z0)^k in chart
//! coordinates, integrated along real time with an embedded Dormand–Prince
//! 5(4) pair. The field is autonomous, so stage times never enter.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lax::lax_data;
use crate::phase_space::{chart_coordinates, from_chart, moment_map, Chart, ExtendedPhasePoint, PointData};
use crate::poisson::{partial_at, trace_power, BracketSign, PhaseFn};
use crate::linalg::Mat;
use crate::scalar::{Dual, Scalar, C64};
use crate::theta::ThetaKernel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub z0: C64,
    pub k: u32,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Accepted plus rejected steps before giving up.
    pub max_steps: usize,
    /// Step size below which the flow is aborted.
    pub min_step: f64,
    pub sign: BracketSign,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            z0: C64::new(0.41, 0.13),
            k: 2,
            t_end: 1.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 200_000,
            min_step: 1e-12,
            sign: BracketSign::Standard,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("flow power k must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.min_step > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        if !self.t_end.is_finite() {
            return Err(Error::Config("t_end must be finite".into()));
        }
        Ok(())
    }
}

/// (1/k) tr L(z0)^k.
#[derive(Clone, Copy, Debug)]
pub struct Hamiltonian {
    pub z0: C64,
    pub k: u32,
}

impl PhaseFn for Hamiltonian {
    fn eval<T: Scalar>(&self, kernel: &ThetaKernel, d: &PointData<T>) -> Result<Vec<T>> {
        let l = lax_data(kernel, d, T::constant(self.z0))?;
        Ok(vec![trace_power(&l, self.k).scale(C64::new(1.0 / self.k as f64, 0.0))])
    }
}

/// H(x), evaluated at the frame representative.
pub fn hamiltonian(kernel: &ThetaKernel, x: &ExtendedPhasePoint, cfg: &FlowConfig) -> Result<C64> {
    let l = lax_data(kernel, &frame_representative(x.data()), cfg.z0)?;
    Ok(trace_power(&l, cfg.k) / cfg.k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub h: f64,
    /// |H(t) − H(0)|.
    pub energy_drift: f64,
    /// max_a |β_a·α_a|.
    pub constraint: f64,
    /// max |T(t) − T(0)|.
    pub moment_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub chart: Chart,
    pub times: Vec<f64>,
    pub states: Vec<ExtendedPhasePoint>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &ExtendedPhasePoint {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.energy_drift).fold(0.0, f64::max)
    }

    pub fn max_constraint(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.constraint).fold(0.0, f64::max)
    }

    pub fn max_moment_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.moment_drift).fold(0.0, f64::max)
    }
}

/// ẏ = {y, H} in the coordinates of `chart`, from canonical pairs.
fn canonical_field(kernel: &ThetaKernel, chart: &Chart, ham: &Hamiltonian, y: &[C64], sign: BracketSign) -> Result<Vec<C64>> {
    let n = chart.n();
    let grad: Vec<C64> = (0..y.len()).map(|c| Ok(partial_at(kernel, ham, chart, y, c)?[0])).collect::<Result<_>>()?;
    let mut out = vec![C64::new(0.0, 0.0); y.len()];
    for (u, v) in chart.canonical_pairs() {
        let s = if u >= 2 * n && sign == BracketSign::FlippedAlphaBeta { -1.0 } else { 1.0 };
        out[u] = grad[v] * s;
        out[v] = -grad[u] * s;
    }
    Ok(out)
}

/// Gauge representative with α = 1: (q, p, 1, β αᵀ).
pub fn frame_representative<T: Scalar>(d: &PointData<T>) -> PointData<T> {
    PointData {
        q: d.q.clone(),
        p: d.p.clone(),
        alpha: Mat::identity(d.n()),
        beta: d.beta.matmul(&d.alpha.transpose()),
    }
}

/// Chart coordinates of unnormalized data (α_a rescaled so its pivot is 1).
fn chart_coords_of<T: Scalar>(chart: &Chart, d: &PointData<T>) -> Vec<T> {
    let n = d.n();
    let mut out: Vec<T> = d.q.iter().chain(&d.p).copied().collect();
    let mut betas = Vec::with_capacity(n * (n - 1));
    for a in 0..n {
        let piv = chart.pivot[a];
        let lambda = d.alpha[(a, piv)];
        for mu in (0..n).filter(|&mu| mu != piv) {
            out.push(d.alpha[(a, mu)] / lambda);
            betas.push(d.beta[(a, mu)] * lambda);
        }
    }
    out.extend(betas);
    out
}

/// ẏ = {y, H} in chart coordinates.
///
/// The field is computed at the frame representative, where L stays of
/// moderate size, and carried back by the gauge element α, which H and the
/// bracket are invariant under.
fn vector_field(kernel: &ThetaKernel, chart: &Chart, ham: &Hamiltonian, y: &[C64], sign: BracketSign) -> Result<Vec<C64>> {
    let n = chart.n();
    let d = chart.to_point_data(y);
    let frame = d.alpha.clone();
    let frame_inv_t = frame.inverse()?.transpose();
    let diag = Chart::diagonal(n);
    let yr = chart_coords_of(&diag, &frame_representative(&d));
    let vr = canonical_field(kernel, &diag, ham, &yr, sign)?;
    let moving: Vec<Dual> = yr.iter().zip(&vr).map(|(&u, &v)| Dual::new(u, v)).collect();
    let r = diag.to_point_data(&moving);
    let back = PointData {
        alpha: r.alpha.matmul(&frame.map(Dual::constant)),
        beta: r.beta.matmul(&frame_inv_t.map(Dual::constant)),
        q: r.q,
        p: r.p,
    };
    Ok(chart_coords_of(chart, &back).into_iter().map(|v| v.du).collect())
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (equal to the last row of A).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

struct StepOutcome {
    y: Vec<C64>,
    err: f64,
}

fn dopri_step<F>(f: &F, y: &[C64], h: f64, cfg: &FlowConfig) -> Result<StepOutcome>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let mut k: Vec<Vec<C64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let ys: Vec<C64> = (0..y.len())
            .map(|i| y[i] + (0..s).map(|j| k[j][i] * (h * A[s][j])).sum::<C64>())
            .collect();
        k.push(f(&ys)?);
    }
    let y5: Vec<C64> = (0..y.len()).map(|i| y[i] + (0..7).map(|j| k[j][i] * (h * B5[j])).sum::<C64>()).collect();
    let mut err: f64 = 0.0;
    for i in 0..y.len() {
        let e = (0..7).map(|j| k[j][i] * (h * (B5[j] - B4[j]))).sum::<C64>().norm();
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(y5[i].norm());
        err = err.max(e / scale);
    }
    Ok(StepOutcome { y: y5, err })
}

fn diagnostics(
    kernel: &ThetaKernel,
    x: &ExtendedPhasePoint,
    cfg: &FlowConfig,
    t: f64,
    h: f64,
    h0: C64,
    t0: &crate::linalg::CMat,
) -> Result<StepDiagnostics> {
    Ok(StepDiagnostics {
        t,
        h,
        energy_drift: (hamiltonian(kernel, x, cfg)? - h0).norm(),
        constraint: x.constraint_residual(),
        moment_drift: moment_map(x).t.max_abs_diff(t0),
    })
}

/// Integrates ẋ = {x, H} from t = 0 to `cfg.t_end`.
pub fn evolve(kernel: &ThetaKernel, x0: &ExtendedPhasePoint, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let chart = Chart::best_for(x0);
    let ham = Hamiltonian { z0: cfg.z0, k: cfg.k };
    let f = |y: &[C64]| vector_field(kernel, &chart, &ham, y, cfg.sign);
    let curve = *x0.curve();

    let mut y = chart_coordinates(x0, &chart)?;
    let start = from_chart(curve, &y, &chart)?;
    let h0 = hamiltonian(kernel, &start, cfg)?;
    let t0 = moment_map(&start).t;
    let mut traj = Trajectory {
        chart: chart.clone(),
        times: vec![0.0],
        diagnostics: vec![diagnostics(kernel, &start, cfg, 0.0, 0.0, h0, &t0)?],
        states: vec![start],
        rejected_steps: 0,
    };
    if cfg.t_end == 0.0 {
        return Ok(traj);
    }

    let dir = cfg.t_end.signum();
    let span = cfg.t_end.abs();
    let mut t: f64 = 0.0;
    let mut h = (0.01 * span).min(0.05);
    let mut steps = 0;
    let abort = |traj: Trajectory, t: f64, reason: String| Error::FlowAborted { t, reason, partial: Box::new(traj) };

    while t < span {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(abort(traj, dir * t, format!("exceeded {} steps", cfg.max_steps)));
        }
        h = h.min(span - t);
        let outcome = dopri_step(&f, &y, dir * h, cfg);
        let (accept, factor, next) = match outcome {
            Ok(o) if o.err.is_finite() => {
                let factor = if o.err == 0.0 { 5.0 } else { (0.9 * o.err.powf(-0.2)).clamp(0.2, 5.0) };
                (o.err <= 1.0, factor, Some(o.y))
            }
            Ok(_) | Err(Error::PoleProximity { .. }) | Err(Error::SingularMatrix { .. }) => (false, 0.25, None),
            Err(e) => return Err(e),
        };
        if accept {
            let y_new = next.expect("accepted steps carry a state");
            let state = match from_chart(curve, &y_new, &chart) {
                Ok(s) => s,
                Err(e) => return Err(abort(traj, dir * t, format!("state failed validation: {e}"))),
            };
            t += h;
            y = y_new;
            traj.times.push(dir * t);
            traj.diagnostics.push(diagnostics(kernel, &state, cfg, dir * t, h, h0, &t0)?);
            traj.states.push(state);
            h *= factor.min(5.0);
        } else {
            traj.rejected_steps += 1;
            h *= factor.min(1.0);
        }
        if h < cfg.min_step && t < span {
            return Err(abort(traj, dir * t, format!("step size collapsed below {:e}", cfg.min_step)));
        }
    }
    Ok(traj)
}

/// Relative drift of tr L(w)^k along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDrift {
    pub w: C64,
    pub k: u32,
    pub initial: C64,
    /// max_t |I(t) − I(0)| / max(1, |I(0)|).
    pub max_drift: f64,
}

pub fn conservation_report(kernel: &ThetaKernel, traj: &Trajectory, probes: &[(C64, u32)]) -> Result<Vec<ProbeDrift>> {
    if traj.states.is_empty() {
        return Err(Error::Dimension("empty trajectory".into()));
    }
    probes
        .iter()
        .map(|&(w, k)| {
            let inv = |x: &ExtendedPhasePoint| -> Result<C64> { Ok(trace_power(&lax_data(kernel, &frame_representative(x.data()), w)?, k)) };
            let initial = inv(&traj.states[0])?;
            let mut drift: f64 = 0.0;
            for s in &traj.states {
                drift = drift.max((inv(s)? - initial).norm());
            }
            Ok(ProbeDrift { w, k, initial, max_drift: drift / initial.norm().max(1.0) })
        })
        .collect()
}

/// Distance between two states in the chart of `traj`.
pub fn chart_distance(chart: &Chart, a: &ExtendedPhasePoint, b: &ExtendedPhasePoint) -> Result<f64> {
    let (u, v) = (chart_coordinates(a, chart)?, chart_coordinates(b, chart)?);
    Ok(u.iter().zip(&v).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}

/// Header for [`write_csv`].
pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let mut push = |name: String| {
        h.push(format!("{name}_re"));
        h.push(format!("{name}_im"));
    };
    for a in 0..n {
        push(format!("q{a}"));
    }
    for a in 0..n {
        push(format!("p{a}"));
    }
    for a in 0..n {
        for i in 0..n {
            push(format!("alpha{a}_{i}"));
        }
    }
    for a in 0..n {
        for i in 0..n {
            push(format!("beta{a}_{i}"));
        }
    }
    h
}

/// One row per stored state: t, then re/im of q, p, α, β (row-major).
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.last().n();
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(csv_header(n)).map_err(csv_err)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![format!("{t:e}")];
        let values = s.q().iter().chain(s.p()).chain(s.alpha().as_slice()).chain(s.beta().as_slice());
        for v in values {
            row.push(format!("{:e}", v.re));
            row.push(format!("{:e}", v.im));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{gauge_act, rescale, sample, SampleOptions};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn kernel() -> ThetaKernel {
        ThetaKernel::with_tau(c(0.0, 1.0)).unwrap()
    }

    #[test]
    fn rank_one_energy_and_free_motion() {
        let k = kernel();
        let x = sample(*k.curve(), 2, 1, SampleOptions::default()).unwrap();
        let cfg = FlowConfig::default();
        assert!((hamiltonian(&k, &x, &cfg).unwrap() - x.p()[0] * x.p()[0] * 0.5).norm() < 1e-15);
        let traj = evolve(&k, &x, &cfg).unwrap();
        let end = traj.last();
        assert!((end.q()[0] - (x.q()[0] + x.p()[0])).norm() < 1e-12);
        assert_eq!(end.p()[0], x.p()[0]);
    }

    #[test]
    fn frame_field_matches_direct_field() {
        let k = kernel();
        for (seed, n) in [(1, 2), (4, 3), (9, 3)] {
            let x = sample(*k.curve(), seed, n, SampleOptions::default()).unwrap();
            for chart in [Chart::best_for(&x), Chart::first(n)] {
                let y = chart_coordinates(&x, &chart).unwrap();
                let ham = Hamiltonian { z0: C64::new(0.41, 0.13), k: 3 };
                for sign in [BracketSign::Standard, BracketSign::FlippedAlphaBeta] {
                    let direct = canonical_field(&k, &chart, &ham, &y, sign).unwrap();
                    let framed = vector_field(&k, &chart, &ham, &y, sign).unwrap();
                    let scale = direct.iter().map(|v| v.norm()).fold(1.0, f64::max);
                    let gap = direct.iter().zip(&framed).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                    assert!(gap <= 1e-10 * scale, "seed {seed}: {gap:e}");
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_gauge_and_rescale_invariant() {
        let k = kernel();
        let x = sample(*k.curve(), 3, 2, SampleOptions::default()).unwrap();
        let cfg = FlowConfig::default();
        let h = hamiltonian(&k, &x, &cfg).unwrap();
        let g = crate::linalg::CMat::from_rows(&[vec![c(1.0, 0.0), c(0.3, 0.2)], vec![c(0.0, 0.0), c(1.0, 0.0)]]).unwrap();
        assert!((hamiltonian(&k, &gauge_act(&x, &g).unwrap(), &cfg).unwrap() - h).norm() < 1e-12 * h.norm().max(1.0));
        assert!((hamiltonian(&k, &rescale(&x, 0, c(0.5, 2.0)).unwrap(), &cfg).unwrap() - h).norm() < 1e-12 * h.norm().max(1.0));
    }

    #[test]
    fn flow_conserves_invariants_and_reverses() {
        let k = kernel();
        let x = sample(*k.curve(), 5, 2, SampleOptions::default()).unwrap();
        let cfg = FlowConfig::default();
        let traj = evolve(&k, &x, &cfg).unwrap();
        assert!(traj.max_energy_drift() < 1e-9, "energy drift {:e}", traj.max_energy_drift());
        assert!(traj.max_constraint() < 1e-8);
        assert!(traj.max_moment_drift() < 1e-6);
        let probes = [(c(0.17, -0.29), 2), (c(-0.33, 0.21), 3)];
        for d in conservation_report(&k, &traj, &probes).unwrap() {
            assert!(d.max_drift < 1e-6, "{d:?}");
        }
        let back = evolve(&k, traj.last(), &FlowConfig { t_end: -1.0, ..cfg }).unwrap();
        assert!((back.times.last().unwrap() + 1.0).abs() < 1e-15);
        assert!(chart_distance(&traj.chart, back.last(), &x).unwrap() < 1e-7);
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let k = kernel();
        let x = sample(*k.curve(), 5, 2, SampleOptions::default()).unwrap();
        let traj = evolve(&k, &x, &FlowConfig { t_end: 0.1, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), traj.states.len() + 1);
        assert_eq!(lines[0].split(',').count(), 1 + 2 * (2 + 2 + 4 + 4));
    }

    #[test]
    fn invalid_config_rejected() {
        let k = kernel();
        let x = sample(*k.curve(), 5, 2, SampleOptions::default()).unwrap();
        assert!(matches!(evolve(&k, &x, &FlowConfig { rel_tol: 0.0, ..Default::default() }), Err(Error::Config(_))));
    }

    #[test]
    fn collapsing_step_aborts_with_partial_trajectory() {
        let k = kernel();
        let x = sample(*k.curve(), 5, 2, SampleOptions::default()).unwrap();
        let cfg = FlowConfig { max_steps: 3, ..Default::default() };
        match evolve(&k, &x, &cfg) {
            Err(Error::FlowAborted { partial, .. }) => assert!(!partial.states.is_empty()),
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
