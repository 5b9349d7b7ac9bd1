use proptest::prelude::*;

use tyurin_rmatrix::config::SuiteConfig;
use tyurin_rmatrix::dynamics::{hamiltonian, FlowConfig};
use tyurin_rmatrix::lax::lax;
use tyurin_rmatrix::linalg::CMat;
use tyurin_rmatrix::phase_space::{gauge_act, rescale, sample, Chart, ExtendedPhasePoint, SampleOptions};
use tyurin_rmatrix::poisson::{bracket, BracketSign, TracePower};
use tyurin_rmatrix::reduction::{dressed_lax, GaugeSlice};
use tyurin_rmatrix::rmatrix::r_scalar;
use tyurin_rmatrix::theta::ThetaKernel;
use tyurin_rmatrix::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn kernel() -> ThetaKernel {
    ThetaKernel::with_tau(c(0.1, 1.05)).unwrap()
}

fn point(seed: u64, n: usize) -> ExtendedPhasePoint {
    sample(*kernel().curve(), seed, n, SampleOptions::default()).unwrap()
}

/// Unimodular matrix I + ε M rescaled to det 1.
fn sl(n: usize, entries: &[(f64, f64)]) -> CMat {
    let g = CMat::from_fn(n, n, |i, j| {
        let (re, im) = entries[i * n + j];
        c(if i == j { 1.0 } else { 0.0 } + 0.3 * re, 0.3 * im)
    });
    g.scale(g.determinant().powc(c(-1.0 / n as f64, 0.0)))
}

/// Evaluation point with lattice distance ≥ 0.08 from every pole of L.
fn away(x: &ExtendedPhasePoint, z: C64) -> bool {
    let k = kernel();
    k.lattice_distance(z) > 0.08 && x.q().iter().all(|&q| k.lattice_distance(z - q) > 0.08)
}

fn unit() -> impl Strategy<Value = (f64, f64)> {
    (-1.0..1.0f64, -1.0..1.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn theta_quasi_periodic(x in -0.5..0.5f64, y in -0.5..0.5f64) {
        let k = kernel();
        let tau = k.tau();
        let z = c(x, 0.0) + tau * y;
        let t = k.theta(z).unwrap();
        let m = (c(0.0, -std::f64::consts::PI) * tau - c(0.0, 2.0 * std::f64::consts::PI) * z).exp();
        prop_assert!((k.theta(z + 1.0).unwrap() + t).norm() <= 1e-12 * t.norm().max(1.0));
        prop_assert!((k.theta(z + tau).unwrap() + m * t).norm() <= 1e-12 * (m * t).norm().max(1.0));
    }

    #[test]
    fn lax_gauge_equivariant(seed in 0u64..500, n in 1usize..=3, m in prop::collection::vec(unit(), 9), zr in unit()) {
        let x = point(seed, n);
        let z = c(zr.0 * 0.5, zr.1 * 0.5);
        prop_assume!(away(&x, z));
        let g = sl(n, &m);
        let k = kernel();
        let l = lax(&k, &x, z).unwrap().value;
        let moved = lax(&k, &gauge_act(&x, &g).unwrap(), z).unwrap().value;
        let expect = g.matmul(&l).matmul(&g.inverse().unwrap());
        prop_assert!(moved.max_abs_diff(&expect) <= 1e-9 * l.max_abs().max(1.0));
    }

    #[test]
    fn lax_and_r_rescale_invariant(seed in 0u64..500, n in 1usize..=3, lam in unit(), a in 0usize..3, zr in unit(), wr in unit()) {
        let x = point(seed, n);
        let a = a % n;
        let (z, w) = (c(zr.0 * 0.5, zr.1 * 0.5), c(wr.0 * 0.5, wr.1 * 0.5));
        prop_assume!(away(&x, z) && away(&x, w) && kernel().lattice_distance(z - w) > 0.08);
        let y = rescale(&x, a, c(1.5 + lam.0, lam.1)).unwrap();
        let k = kernel();
        let l = lax(&k, &x, z).unwrap().value;
        prop_assert!(lax(&k, &y, z).unwrap().value.max_abs_diff(&l) <= 1e-12 * l.max_abs().max(1.0));
        let r = r_scalar(&k, &x, z, w).unwrap().value;
        prop_assert!(r_scalar(&k, &y, z, w).unwrap().value.max_abs_diff(&r) <= 1e-11 * r.max_abs().max(1.0));
    }

    #[test]
    fn r_ignores_momenta_and_beta(seed in 0u64..500, n in 1usize..=3, dp in unit(), s in unit()) {
        let x = point(seed, n);
        let k = kernel();
        let (z, w) = (c(0.21, 0.33), c(-0.37, 0.12));
        prop_assume!(away(&x, z) && away(&x, w));
        let y = x
            .with_momenta(x.p().iter().map(|&p| p + c(dp.0, dp.1)).collect()).unwrap()
            .with_beta(x.beta().scale(c(1.0 + s.0, s.1))).unwrap();
        prop_assert_eq!(r_scalar(&k, &x, z, w).unwrap().value, r_scalar(&k, &y, z, w).unwrap().value);
    }

    #[test]
    fn dressed_lax_gauge_invariant(seed in 0u64..500, n in 1usize..=3, m in prop::collection::vec(unit(), 9)) {
        let x = point(seed, n);
        let z = c(0.43, -0.08);
        prop_assume!(away(&x, z));
        let k = kernel();
        let slice = GaugeSlice::elliptic(n);
        let a = dressed_lax(&k, &x, z, &slice).unwrap();
        let b = dressed_lax(&k, &gauge_act(&x, &sl(n, &m)).unwrap(), z, &slice).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-9 * a.max_abs().max(1.0));
    }

    #[test]
    fn hamiltonian_gauge_invariant(seed in 0u64..500, n in 1usize..=3, m in prop::collection::vec(unit(), 9)) {
        let x = point(seed, n);
        let cfg = FlowConfig { k: 3, ..Default::default() };
        prop_assume!(away(&x, cfg.z0));
        let k = kernel();
        let h = hamiltonian(&k, &x, &cfg).unwrap();
        let moved = hamiltonian(&k, &gauge_act(&x, &sl(n, &m)).unwrap(), &cfg).unwrap();
        prop_assert!((h - moved).norm() <= 1e-9 * h.norm().max(1.0));
    }

    #[test]
    fn bracket_antisymmetric(seed in 0u64..500, n in 1usize..=3, zr in unit(), wr in unit()) {
        let x = point(seed, n);
        let (z, w) = (c(zr.0 * 0.5, zr.1 * 0.5), c(wr.0 * 0.5, wr.1 * 0.5));
        prop_assume!(away(&x, z) && away(&x, w));
        let k = kernel();
        let chart = Chart::best_for(&x);
        let (f, g) = (TracePower { z, k: 2 }, TracePower { z: w, k: 3 });
        let fg = bracket(&k, &f, &g, &x, &chart, BracketSign::Standard).unwrap();
        let gf = bracket(&k, &g, &f, &x, &chart, BracketSign::Standard).unwrap();
        prop_assert!((fg + gf).norm() <= 1e-12 * fg.norm().max(1.0));
    }

    #[test]
    fn config_round_trips(n in 1usize..=8, seeds in prop::collection::vec(0u64..1000, 1..5), tol in 1e-14..1e-3f64, re in -1.0..1.0f64, im in 0.5..3.0f64) {
        let mut cfg = SuiteConfig { n, seeds, tau: c(re, im), ..Default::default() };
        cfg.set_tolerance(&format!("yang_baxter={tol:e}")).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        prop_assert_eq!(SuiteConfig::from_toml(&text).unwrap(), cfg);
    }
}
