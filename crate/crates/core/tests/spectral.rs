use std::f64::consts::PI;

use smalldev_core::smallball::{debruijn_constant, RateLaw, KAPPA_L2};
use smalldev_core::spectral::{
    derivative_kernel, eigen_rate_fit, kl_spectrum, l2_smallball, laplace_transform_l2, log_laplace, nystrom_eigen,
    EigenSpectrum,
};
use smalldev_core::{build_cov, covariance, CovMatrix, Grid, ProcessSpec};
use statrs::function::erf::erf;

fn grid(n: usize) -> Grid {
    Grid::new(n).unwrap()
}

fn ibm() -> ProcessSpec {
    ProcessSpec::integrated(ProcessSpec::BrownianMotion, 1)
}

fn bm_exact(k: usize) -> f64 {
    (PI * (k as f64 - 0.5)).powi(-2)
}

#[test]
fn brownian_eigenvalues() {
    let cov = build_cov(&ProcessSpec::BrownianMotion, grid(1024)).unwrap();
    let sp = nystrom_eigen(&cov, 20).unwrap();
    for (k, l) in sp.lambdas.iter().enumerate() {
        let want = bm_exact(k + 1);
        assert!((l / want - 1.0).abs() < 0.01, "k={}: {l} {want}", k + 1);
    }
}

#[test]
fn trace_matches_diagonal() {
    for spec in [ProcessSpec::BrownianMotion, ProcessSpec::FractionalBm { hurst: 0.3 }, ibm()] {
        let cov = build_cov(&spec, grid(200)).unwrap();
        let sp = nystrom_eigen(&cov, 200).unwrap();
        let sum: f64 = sp.lambdas.iter().sum();
        let diag = cov.trace() / 200.0;
        assert!((sum - diag).abs() < 1e-12 * diag, "{spec:?}: {sum} {diag}");
    }
}

#[test]
fn scaling_the_kernel_scales_the_spectrum() {
    let cov = build_cov(&ProcessSpec::FractionalBm { hurst: 0.7 }, grid(128)).unwrap();
    let scaled = CovMatrix { grid: cov.grid, data: cov.data.iter().map(|v| 3.5 * v).collect() };
    let a = nystrom_eigen(&cov, 10).unwrap();
    let b = nystrom_eigen(&scaled, 10).unwrap();
    for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
        assert!((3.5 * x - y).abs() < 1e-12 * y);
    }
}

#[test]
fn doubling_the_grid_changes_top_eigenvalues_little() {
    for spec in [ProcessSpec::BrownianMotion, ProcessSpec::FractionalBm { hurst: 0.7 }, ibm()] {
        let a = nystrom_eigen(&build_cov(&spec, grid(256)).unwrap(), 10).unwrap();
        let b = nystrom_eigen(&build_cov(&spec, grid(512)).unwrap(), 10).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            assert!((x / y - 1.0).abs() < 0.005, "{spec:?}: {x} {y}");
        }
    }
}

#[test]
fn eigen_decay_rates() {
    let synth = EigenSpectrum::from_values((1..=50).map(|k| (k as f64).powi(-3)).collect(), 0);
    let fit = eigen_rate_fit(&synth, 5, 40).unwrap();
    assert!((fit.slope + 3.0).abs() < 1e-9, "{fit:?}");
    assert!(eigen_rate_fit(&synth, 5, 6).is_err());

    let bm = nystrom_eigen(&build_cov(&ProcessSpec::BrownianMotion, grid(1024)).unwrap(), 40).unwrap();
    let s_bm = eigen_rate_fit(&bm, 5, 40).unwrap().slope;
    assert!((s_bm + 2.0).abs() < 0.05, "{s_bm}");

    let i = kl_spectrum(&ibm(), 1024, 64).unwrap();
    let s_i = eigen_rate_fit(&i, 5, 40).unwrap().slope;
    assert!((s_i + 4.0).abs() < 0.1, "{s_i}");

    let d = derivative_kernel(&ibm(), grid(512)).unwrap().spectrum(40).unwrap();
    let s_d = eigen_rate_fit(&d, 5, 40).unwrap().slope;
    assert!((s_d + 2.0).abs() < 0.1, "{s_d}");
    assert!((s_d - s_i - 2.0).abs() < 0.2);
}

#[test]
fn integrated_spectrum_agrees_with_doubled_resolution() {
    let a = kl_spectrum(&ibm(), 512, 40).unwrap();
    let b = kl_spectrum(&ibm(), 1024, 40).unwrap();
    let sa = eigen_rate_fit(&a, 5, 40).unwrap().slope;
    let sb = eigen_rate_fit(&b, 5, 40).unwrap().slope;
    assert!((sa - sb).abs() < 0.02, "{sa} {sb}");
}

#[test]
fn derivative_kernel_of_integrated_bm_is_min() {
    let g = grid(128);
    let dk = derivative_kernel(&ibm(), g).unwrap();
    let mid = |i: usize| (i as f64 + 0.5) / 128.0;
    for i in 0..128 {
        for j in 0..128 {
            assert!((dk.get(i, j) - mid(i).min(mid(j))).abs() < 1e-6, "{i} {j}");
        }
    }
}

#[test]
fn derivative_kernel_of_integrated_fbm() {
    let h = 0.7;
    let n = 256;
    let g = grid(n);
    let spec = ProcessSpec::integrated(ProcessSpec::FractionalBm { hurst: h }, 1);
    let dk = derivative_kernel(&spec, g).unwrap();
    let fbm = ProcessSpec::FractionalBm { hurst: h };
    let mid = |i: usize| (i as f64 + 0.5) / n as f64;
    let mut worst = 0.0f64;
    for i in (0..n).step_by(7) {
        for j in (0..n).step_by(5) {
            if i.abs_diff(j) < 2 {
                continue;
            }
            let want = covariance(&fbm, mid(i), mid(j)).unwrap();
            worst = worst.max((dk.get(i, j) - want).abs());
        }
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn derivative_kernel_needs_an_integrated_process() {
    assert!(derivative_kernel(&ProcessSpec::BrownianMotion, grid(16)).is_err());
}

#[test]
fn laplace_transform_of_brownian_spectrum() {
    let sp = kl_spectrum(&ProcessSpec::BrownianMotion, 1024, 64).unwrap();
    assert_eq!(laplace_transform_l2(&sp, 0.0), 1.0);
    let got = laplace_transform_l2(&sp, 3.0);
    assert!((got - 3f64.cosh().powf(-0.5)).abs() < 1e-6, "{got}");
}

#[test]
fn single_mode_small_ball() {
    let sp = EigenSpectrum::from_values(vec![1.0], 0);
    let got = l2_smallball(&sp, 0.1).unwrap();
    let want = -erf(0.1 / 2f64.sqrt()).ln();
    assert!((got / want - 1.0).abs() < 0.01, "{got} {want}");
}

#[test]
fn brownian_l2_constant() {
    let sp = kl_spectrum(&ProcessSpec::BrownianMotion, 1024, 64).unwrap();
    let eps: f64 = 0.01;
    let c = eps * eps * l2_smallball(&sp, eps).unwrap();
    assert!((c / KAPPA_L2 - 1.0).abs() < 0.05, "{c}");
}

#[test]
fn small_ball_is_monotone_and_unbounded() {
    for spec in [ProcessSpec::BrownianMotion, ibm(), ProcessSpec::FractionalBm { hurst: 0.3 }] {
        let sp = kl_spectrum(&spec, 1024, 64).unwrap();
        let eps: Vec<f64> = (0..40).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 39.0)).collect();
        let vals: Vec<f64> = eps.iter().map(|&e| l2_smallball(&sp, e).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{spec:?}: {vals:?}");
        let deep: Vec<f64> = [1e-6, 1e-8, 1e-10].iter().map(|&e| l2_smallball(&sp, e).unwrap()).collect();
        assert!(deep[0] > vals[0] && deep[1] > 10.0 * deep[0] && deep[2] > 10.0 * deep[1], "{spec:?}: {deep:?}");
    }
    assert!(l2_smallball(&EigenSpectrum::from_values(vec![1.0], 0), 0.0).is_err());
}

#[test]
fn laplace_and_small_ball_rates_are_linked() {
    // -log E exp(-λ²‖B‖²/2) ~ λ/2 goes with -log P(‖B‖ ≤ ε) ~ ε^-2/8
    let sp = kl_spectrum(&ProcessSpec::BrownianMotion, 1024, 64).unwrap();
    let k = debruijn_constant(&RateLaw::Direct { kappa: KAPPA_L2, tau: 0.5, theta: 0.0 });
    assert!((k - 0.5).abs() < 1e-12, "{k}");
    for lam in [200.0, 1000.0] {
        let r = log_laplace(&sp, lam) / lam;
        assert!((r / k - 1.0).abs() < 0.02, "{lam}: {r}");
    }
    let (e1, e2): (f64, f64) = (0.01, 0.02);
    let slope = (l2_smallball(&sp, e1).unwrap() / l2_smallball(&sp, e2).unwrap()).ln() / (e2 / e1).ln();
    assert!((slope - 2.0).abs() < 0.05, "{slope}");
}
