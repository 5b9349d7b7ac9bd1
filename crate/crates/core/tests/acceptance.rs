//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.
//!
//! Besides the library's own checks, several criteria are cross-examined by
//! oracles that live only here: a q-series for E, trapezoidal contour
//! residues, and a finite-difference Poisson bracket in the unreduced
//! coordinates (q, p, α, β).

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use tyurin_rmatrix::config::SuiteConfig;
use tyurin_rmatrix::lax::lax_data;
use tyurin_rmatrix::linalg::CMat;
use tyurin_rmatrix::phase_space::{sample, Chart, ExtendedPhasePoint, PointData, SampleOptions};
use tyurin_rmatrix::poisson::{bracket_tensor, Conventions};
use tyurin_rmatrix::report::{validate_report_json, Report};
use tyurin_rmatrix::rmatrix::r_scalar;
use tyurin_rmatrix::suites::run_selected;
use tyurin_rmatrix::theta::ThetaKernel;
use tyurin_rmatrix::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

const TAUS: [(f64, f64); 3] = [(0.0, 1.0), (0.0, 2.0), (0.3, 1.1)];

struct Outcome {
    pass: bool,
    lines: Vec<String>,
    slowest: Duration,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, lines: Vec::new(), slowest: Duration::ZERO }
    }

    fn require(&mut self, ok: bool, what: String) {
        if !ok {
            self.pass = false;
            self.lines.push(what);
        }
    }

    fn timed(&mut self, d: Duration) {
        self.slowest = self.slowest.max(d);
    }
}

fn run(tau: C64, n: usize, seeds: Vec<u64>, suite: &str) -> (Report, Duration) {
    let cfg = SuiteConfig { tau, n, seeds, suites: vec![suite.to_string()], ..Default::default() };
    let start = Instant::now();
    let report = run_selected(&cfg, &[suite]).expect("suite runs");
    (report, start.elapsed())
}

/// Holds each listed check to the criterion's bound, independently of the configured tolerance.
fn bound(out: &mut Outcome, report: &Report, label: &str, ids: &[(&str, f64)]) {
    for &(id, tol) in ids {
        match report.records.iter().find(|r| r.check_id == id) {
            Some(r) => {
                let ok = r.max_residual.is_some_and(|v| v <= tol);
                out.require(ok, format!("{label}: {id} = {:?} (bound {tol:e}) {}", r.max_residual, r.note.clone().unwrap_or_default()));
            }
            None => out.require(false, format!("{label}: {id} missing from report")),
        }
    }
}

fn kernel(tau: C64) -> ThetaKernel {
    ThetaKernel::with_tau(tau).unwrap()
}

fn point(k: &ThetaKernel, seed: u64, n: usize) -> ExtendedPhasePoint {
    sample(*k.curve(), seed, n, SampleOptions::default()).unwrap()
}

/// E(z) = π cot πz + 4π Σ_m q^{2m} / (1 − q^{2m}) sin 2πmz,  q = e^{iπτ}.
fn e_series(z: C64, tau: C64) -> C64 {
    let q2 = (c(0.0, 2.0 * PI) * tau).exp();
    let mut s = PI * (PI * z).cos() / (PI * z).sin();
    let mut qm = q2;
    for m in 1..200 {
        let term = qm / (1.0 - qm) * (2.0 * PI * m as f64 * z).sin() * (4.0 * PI);
        s += term;
        if term.norm() < 1e-18 {
            break;
        }
        qm *= q2;
    }
    s
}

/// (1/2πi) ∮ f over |u − center| = radius, trapezoidal rule.
fn trapezoid_residue(f: impl Fn(C64) -> Vec<C64>, center: C64, radius: f64, nodes: usize) -> Vec<C64> {
    let mut acc: Vec<C64> = Vec::new();
    for j in 0..nodes {
        let e = (c(0.0, 2.0 * PI * j as f64 / nodes as f64)).exp();
        let v = f(center + e * radius);
        if acc.is_empty() {
            acc = vec![c(0.0, 0.0); v.len()];
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x * e * radius / nodes as f64;
        }
    }
    acc
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Flattened unreduced coordinates (q, p, α, β).
fn flatten(d: &PointData<C64>) -> Vec<C64> {
    d.q.iter().chain(&d.p).chain(d.alpha.as_slice()).chain(d.beta.as_slice()).copied().collect()
}

fn unflatten(n: usize, v: &[C64]) -> PointData<C64> {
    let m = n * n;
    PointData {
        q: v[..n].to_vec(),
        p: v[n..2 * n].to_vec(),
        alpha: CMat::from_fn(n, n, |i, j| v[2 * n + i * n + j]),
        beta: CMat::from_fn(n, n, |i, j| v[2 * n + m + i * n + j]),
    }
}

/// Central differences with one Richardson step in every unreduced coordinate.
fn fd_gradients(f: &dyn Fn(&PointData<C64>) -> Vec<C64>, base: &[C64], n: usize) -> Vec<Vec<C64>> {
    let h = 1e-3;
    (0..base.len())
        .map(|i| {
            let d = |h: f64| {
                let (mut up, mut dn) = (base.to_vec(), base.to_vec());
                up[i] += h;
                dn[i] -= h;
                let (fu, fd) = (f(&unflatten(n, &up)), f(&unflatten(n, &dn)));
                fu.iter().zip(&fd).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<C64>>()
            };
            let (d1, d2) = (d(h), d(0.5 * h));
            d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
        })
        .collect()
}

/// {F_s, G_t} = Σ_a (∂_q F ∂_p G − ∂_p F ∂_q G) + Σ_{a,μ} (∂_α F ∂_β G − ∂_β F ∂_α G).
fn unreduced_bracket(gf: &[Vec<C64>], gg: &[Vec<C64>], n: usize) -> Vec<Vec<C64>> {
    let (nf, ng) = (gf[0].len(), gg[0].len());
    let pairs: Vec<(usize, usize)> = (0..n).map(|a| (a, n + a)).chain((0..n * n).map(|m| (2 * n + m, 2 * n + n * n + m))).collect();
    (0..nf)
        .map(|s| {
            (0..ng)
                .map(|t| pairs.iter().map(|&(u, v)| gf[u][s] * gg[v][t] - gf[v][s] * gg[u][t]).sum())
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    for (re, im) in TAUS {
        let tau = c(re, im);
        let (report, t) = run(tau, 2, vec![1], "theta");
        out.timed(t);
        let label = format!("tau={tau}");
        bound(&mut out, &report, &label, &[("theta_quasi_periodicity", 1e-12), ("theta_oddness", 1e-12), ("e_shift", 1e-12)]);
        let k = kernel(tau);
        let mut worst: f64 = 0.0;
        for a in 0..10 {
            for b in 0..10 {
                let z = c(-0.45 + 0.1 * a as f64, 0.0) + tau * (-0.45 + 0.1 * b as f64);
                let e = k.log_derivative(z).unwrap();
                worst = worst.max((e - e_series(z, tau)).norm() / e.norm().max(1.0));
            }
        }
        out.require(worst <= 1e-12, format!("{label}: E against q-series {worst:e}"));
    }
    out.require(out.slowest < Duration::from_secs(1), format!("slowest theta run {:?}", out.slowest));
    out
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    for (re, im) in TAUS {
        for n in 1..=3 {
            let tau = c(re, im);
            let (report, t) = run(tau, n, vec![1, 2, 3], "lax");
            out.timed(t);
            bound(
                &mut out,
                &report,
                &format!("tau={tau} n={n}"),
                &[
                    ("lax_residue_outer_product", 1e-8),
                    ("eigen_left_eigenvector", 1e-8),
                    ("residue_sum_vanishes", 1e-9),
                    ("lax_double_periodicity", 1e-10),
                    ("lax_rescale_invariance", 1e-12),
                    ("lax_regular_at_p", 1e-9),
                ],
            );
            let k = kernel(tau);
            let x = point(&k, 1, n);
            for a in 0..n {
                let res = trapezoid_residue(|u| lax_data(&k, x.data(), u).unwrap().as_slice().to_vec(), x.q()[a], 0.05, 256);
                let expect: Vec<C64> = (0..n * n).map(|m| x.beta()[(a, m / n)] * x.alpha()[(a, m % n)]).collect();
                let gap = max_diff(&res, &expect);
                out.require(gap <= 1e-8, format!("tau={tau} n={n}: trapezoid residue at q_{a} off by {gap:e}"));
            }
        }
    }
    out.require(out.slowest < Duration::from_secs(5), format!("slowest lax run {:?}", out.slowest));
    out
}

fn criterion_3() -> Outcome {
    let mut out = Outcome::new();
    for (re, im) in TAUS {
        for n in 1..=3 {
            let tau = c(re, im);
            let (report, t) = run(tau, n, vec![1, 2, 3], "rmatrix");
            out.timed(t);
            bound(
                &mut out,
                &report,
                &format!("tau={tau} n={n}"),
                &[
                    ("nullvv_null_vectors", 1e-7),
                    ("vP0_vanishing_at_P", 1e-7),
                    ("r_w_residue_origin", 1e-7),
                    ("r_w_residue_diagonal", 1e-7),
                    ("kakprim_z_residue", 1e-7),
                    ("lemma4_null_vectors", 1e-7),
                    ("lemma4_w_poles", 1e-7),
                ],
            );
            let k = kernel(tau);
            let x = point(&k, 2, n);
            let z = c(0.21, 0.33);
            let eye: Vec<C64> = (0..n * n).map(|m| if m / n == m % n { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect();
            let f = |w: C64| r_scalar(&k, &x, z, w).unwrap().value.as_slice().to_vec();
            let at0 = max_diff(&trapezoid_residue(f, c(0.0, 0.0), 0.05, 256), &eye);
            let atz = max_diff(&trapezoid_residue(f, z, 0.05, 256), &eye.iter().map(|v| -v).collect::<Vec<_>>());
            out.require(at0.max(atz) <= 1e-7, format!("tau={tau} n={n}: trapezoid w-residues off by {:e}", at0.max(atz)));
        }
    }
    out.require(out.slowest < Duration::from_secs(10), format!("slowest rmatrix run {:?}", out.slowest));
    out
}

fn criterion_4() -> Outcome {
    let mut out = Outcome::new();
    for (re, im) in TAUS {
        for n in 1..=3 {
            let (report, t) = run(c(re, im), n, vec![1, 2, 3], "solver");
            out.timed(t);
            bound(&mut out, &report, &format!("tau={} n={n}", c(re, im)), &[("solver_lax_columns", 1e-9), ("solver_r_rows", 1e-9)]);
        }
    }
    out.require(out.slowest < Duration::from_secs(5), format!("slowest solver run {:?}", out.slowest));
    out
}

/// Yang-Baxter runs shared by criteria 5 to 7.
fn yang_baxter_reports() -> Vec<(String, Report, Duration)> {
    let mut v = Vec::new();
    for (re, im) in TAUS {
        for n in 2..=3 {
            let (report, t) = run(c(re, im), n, (1..=10).collect(), "yang_baxter");
            v.push((format!("tau={} n={n}", c(re, im)), report, t));
        }
    }
    v
}

fn criterion_5(reports: &[(String, Report, Duration)]) -> Outcome {
    let mut out = Outcome::new();
    for (label, report, t) in reports {
        out.timed(*t);
        out.require(report.conventions == Conventions::default(), format!("{label}: conventions {:?}", report.conventions));
        bound(&mut out, report, label, &[("yb_residual", 1e-6), ("yb_cross_chart", 1e-7)]);
    }
    // unreduced finite-difference bracket against the library's right-hand side
    for (re, im) in TAUS {
        let tau = c(re, im);
        let k = kernel(tau);
        for n in 2..=3 {
            let x = point(&k, 4, n);
            let base = flatten(x.data());
            for &(z, w) in SuiteConfig::default().probes.iter().take(2) {
                let lz = |d: &PointData<C64>| lax_data(&k, d, z).unwrap().as_slice().to_vec();
                let lw = |d: &PointData<C64>| lax_data(&k, d, w).unwrap().as_slice().to_vec();
                let b = unreduced_bracket(&fd_gradients(&lz, &base, n), &fd_gradients(&lw, &base, n), n);
                let bt = bracket_tensor(&k, &x, z, w, &Chart::first(n), Conventions::default()).unwrap();
                let mut scale: f64 = 1.0;
                let mut gap: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for kk in 0..n {
                            for l in 0..n {
                                let fd = b[i * n + j][kk * n + l];
                                scale = scale.max(fd.norm());
                                gap = gap.max((fd - bt.r[(i, j, kk, l)]).norm());
                            }
                        }
                    }
                }
                out.require(gap / scale <= 1e-6, format!("tau={tau} n={n}: unreduced FD bracket vs r-matrix side {:e}", gap / scale));
            }
        }
    }
    out.require(out.slowest < Duration::from_secs(60), format!("slowest Yang-Baxter run {:?}", out.slowest));
    out
}

fn criterion_6(reports: &[(String, Report, Duration)]) -> Outcome {
    let mut out = Outcome::new();
    for (label, report, _) in reports {
        bound(
            &mut out,
            report,
            label,
            &[("pakL_momentum_partial", 1e-9), ("pagaL_double_pole", 1e-7), ("pabeL_beta_residue", 1e-7), ("paalL_alpha_residue", 1e-7)],
        );
    }
    // ∂L/∂p_a = π^a ⊗ α_a by differences in p_a alone
    for (re, im) in TAUS {
        let k = kernel(c(re, im));
        for n in 1..=3 {
            let x = point(&k, 5, n);
            let pi = x.alpha().inverse().unwrap();
            let z = c(-0.18, -0.41);
            for a in 0..n {
                let at = |dp: f64| {
                    let mut d = x.data().clone();
                    d.p[a] += dp;
                    lax_data(&k, &d, z).unwrap()
                };
                let h = 1e-3;
                let fd = at(h).sub(&at(-h)).scale(c(0.5 / h, 0.0));
                let expect = CMat::from_fn(n, n, |i, j| pi[(i, a)] * x.alpha()[(a, j)]);
                let gap = fd.max_abs_diff(&expect) / expect.max_abs().max(1.0);
                out.require(gap <= 1e-9, format!("tau={} n={n}: momentum derivative gap {gap:e}", c(re, im)));
            }
        }
    }
    out
}

fn criterion_7(reports: &[(String, Report, Duration)]) -> Outcome {
    let mut out = Outcome::new();
    for (label, report, _) in reports {
        bound(&mut out, report, label, &[("involution_k2", 1e-6)]);
    }
    for (re, im) in TAUS {
        let k = kernel(c(re, im));
        for n in 2..=3 {
            let x = point(&k, 6, n);
            let base = flatten(x.data());
            for &(z, w) in &SuiteConfig::default().probes {
                let tr2 = |at: C64| {
                    move |d: &PointData<C64>| {
                        let l = lax_data(&k, d, at).unwrap();
                        vec![l.matmul(&l).trace()]
                    }
                };
                let (gf, gg) = (fd_gradients(&tr2(z), &base, n), fd_gradients(&tr2(w), &base, n));
                let value = unreduced_bracket(&gf, &gg, n)[0][0];
                let size: f64 = (0..n)
                    .map(|a| (a, n + a))
                    .chain((0..n * n).map(|m| (2 * n + m, 2 * n + n * n + m)))
                    .map(|(u, v)| (gf[u][0] * gg[v][0]).norm() + (gf[v][0] * gg[u][0]).norm())
                    .sum();
                let rel = value.norm() / size.max(1.0);
                out.require(rel <= 1e-6, format!("tau={} n={n}: unreduced FD involution {rel:e}", c(re, im)));
            }
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let mut out = Outcome::new();
    for (re, im) in TAUS {
        for n in 1..=3 {
            let (report, t) = run(c(re, im), n, vec![1, 2, 3], "reduction");
            out.timed(t);
            bound(
                &mut out,
                &report,
                &format!("tau={} n={n}", c(re, im)),
                &[
                    ("det_g_unimodular", 1e-12),
                    ("dressed_gauge_invariance", 1e-9),
                    ("dressed_yb_residual", 1e-5),
                    ("rh_independent_of_p_beta", 0.0),
                    ("spin_cm_identities", 0.0),
                ],
            );
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let mut out = Outcome::new();
    for (re, im) in TAUS {
        for n in 1..=3 {
            let (report, t) = run(c(re, im), n, vec![1, 2, 3], "dynamics");
            out.timed(t);
            bound(
                &mut out,
                &report,
                &format!("tau={} n={n}", c(re, im)),
                &[
                    ("energy_drift", 1e-9),
                    ("invariant_drift", 1e-6),
                    ("moment_drift", 1e-6),
                    ("constraint_drift", 1e-6),
                    ("time_reversal", 1e-7),
                ],
            );
        }
    }
    out.require(out.slowest < Duration::from_secs(60), format!("slowest dynamics run {:?}", out.slowest));
    out
}

fn criterion_10() -> Outcome {
    let mut out = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_tyurin")).args(["run", "--out"]).arg(&path).output().unwrap();
    out.timed(start.elapsed());
    out.require(status.status.code() == Some(0), format!("exit status {:?}", status.status.code()));
    match std::fs::read_to_string(&path).ok().and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok()) {
        Some(v) => {
            if let Err(e) = validate_report_json(&v) {
                out.require(false, format!("schema: {e}"));
            }
            let records = v["records"].as_array().map_or(0, |r| r.len());
            out.require(records > 0, "report has no records".into());
            out.require(v["pass"] == serde_json::Value::Bool(true), "report pass flag is false".into());
        }
        None => out.require(false, "report missing or not JSON".into()),
    }
    out.require(out.slowest < Duration::from_secs(180), format!("wall time {:?}", out.slowest));
    out
}

fn main() {
    let mut all = true;
    let mut report = |num: u32, name: &str, o: Outcome, elapsed: Duration| {
        all &= o.pass;
        println!("criterion {num:>2} {:<26} {}  ({:.2?})", name, if o.pass { "PASS" } else { "FAIL" }, elapsed);
        for l in o.lines {
            println!("    {l}");
        }
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let s = Instant::now();
        let o = f();
        (o, s.elapsed())
    };
    let (o, t) = timed(&criterion_1);
    report(1, "theta", o, t);
    let (o, t) = timed(&criterion_2);
    report(2, "lax structure", o, t);
    let (o, t) = timed(&criterion_3);
    report(3, "r-matrix structure", o, t);
    let (o, t) = timed(&criterion_4);
    report(4, "solver equivalence", o, t);
    let s = Instant::now();
    let yb = yang_baxter_reports();
    let shared = s.elapsed();
    let (o, t) = timed(&|| criterion_5(&yb));
    report(5, "Yang-Baxter", o, t + shared);
    let (o, t) = timed(&|| criterion_6(&yb));
    report(6, "derivative identities", o, t);
    let (o, t) = timed(&|| criterion_7(&yb));
    report(7, "involution", o, t);
    let (o, t) = timed(&criterion_8);
    report(8, "reduction", o, t);
    let (o, t) = timed(&criterion_9);
    report(9, "dynamics", o, t);
    let (o, t) = timed(&criterion_10);
    report(10, "end to end", o, t);
    if !all {
        std::process::exit(1);
    }
}
