use orthostat::gauss_expect::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn spec() -> MomentSpec {
    MomentSpec::new()
}

#[test]
fn tanh_taylor_coefficients() {
    let m = ActivationModel::default();
    assert_eq!(m.taylor.len(), 21);
    let odd: Vec<i128> = m.taylor.iter().skip(1).step_by(2).copied().collect();
    assert_eq!(
        odd,
        [1, -2, 16, -272, 7936, -353792, 22368256, -1903757312, 209865342976, -29088885112832]
    );
    assert!(m.taylor.iter().step_by(2).all(|&c| c == 0));
}

#[test]
fn closed_form_derivatives_match_finite_differences() {
    let m = ActivationModel::default();
    let h = 1e-4;
    for &z in &[-2.5, -0.7, 0.0, 0.3, 1.1, 3.0] {
        for order in 1..=4 {
            let fd = (m.derivative(order - 1, z + h) - m.derivative(order - 1, z - h)) / (2.0 * h);
            assert!((fd - m.derivative(order, z)).abs() < 1e-6, "order {order} at {z}");
        }
        assert_eq!(m.sigma(z), z.tanh());
    }
}

#[test]
fn spec_validation() {
    assert!(spec().sigma(6).validate().is_ok());
    assert!(spec().sigma(4).d1(3).validate().is_err());
    assert!(spec().z(3).validate().is_err());
    assert!(spec().d2(1).is_odd());
    assert!(!spec().z(1).sigma(1).is_odd());
    assert!(spec().with(Factor::D3, 1).z(1).is_odd());
    assert!(!spec().with(Factor::D3, 1).z(2).is_odd());
    assert!(expect1(&spec().sigma(7), 0.5).is_err());
    assert!(expect1(&spec().sigma(2), 0.0).is_err());
    assert!(expect1(&spec().sigma(2), -1.0).is_err());
}

#[test]
fn small_kernel_limits() {
    let k = 1e-12;
    assert!((expect1(&spec().d1(2), k).unwrap() - 1.0).abs() < 1e-10);
    assert!((expect1(&spec().sigma(2), k).unwrap() / k - 1.0).abs() < 1e-9);
}

#[test]
fn sigma_squared_at_one_percent() {
    let v = expect1(&spec().sigma(2), 0.01).unwrap();
    assert!((v - 0.0098).abs() < 1e-5, "{v}");
}

/// `⟨tanh²⟩_K` from the series of tanh² = z² - 2/3 z⁴ + 17/45 z⁶ - 62/315 z⁸ + 1382/14175 z¹⁰
/// and `E[z^{2j}] = (2j-1)!! K^j`.
fn tanh_sq_series(k: f64) -> (f64, f64) {
    let coeffs = [1.0, -2.0 / 3.0, 17.0 / 45.0, -62.0 / 315.0, 1382.0 / 14175.0];
    let next = -21844.0 / 467775.0 * 10395.0 * k.powi(6);
    let mut dfact = 1.0;
    let mut sum = 0.0;
    for (j, c) in coeffs.iter().enumerate() {
        dfact *= (2 * j + 1) as f64;
        sum += c * dfact * k.powi(j as i32 + 1);
    }
    (sum, next.abs())
}

#[test]
fn wick_series_oracle_for_small_kernels() {
    for &k in &[0.001, 0.005, 0.01, 0.02, 0.05] {
        let (series, tail) = tanh_sq_series(k);
        let v = expect1(&spec().sigma(2), k).unwrap();
        assert!((v - series).abs() < 2.0 * tail + 1e-15, "K={k}: {v} vs {series}");
    }
}

#[test]
fn odd_integrands_vanish() {
    for s in [spec().sigma(1), spec().d2(1).d1(2), spec().z(1), spec().sigma(3).d1(2).z(2)] {
        assert_eq!(expect1(&s, 0.7).unwrap(), 0.0);
    }
}

#[test]
fn quadrature_order_doubling_is_stable() {
    let lo = GaussianExpectation::with_nodes(160);
    let hi = GaussianExpectation::with_nodes(320);
    assert_eq!(lo.order(), 160);
    let specs = [
        spec().sigma(2),
        spec().d1(2),
        spec().sigma(4),
        spec().z(2).d1(2),
        spec().sigma(1).d2(1),
        spec().d2(2),
        spec().sigma(6),
    ];
    for i in 0..=40 {
        let k = 1e-4 * 1e4f64.powf(i as f64 / 40.0);
        for s in &specs {
            let a = lo.expect1(s, k).unwrap();
            let b = hi.expect1(s, k).unwrap();
            assert!((a - b).abs() < 1e-10, "{s:?} at K={k}: {a} vs {b}");
        }
    }
}

#[test]
fn gaussian_moments_are_exact() {
    for &k in &[0.1, 1.0, 3.0] {
        assert!((expect1(&spec().z(2), k).unwrap() - k).abs() < 1e-12 * k);
        let ge = GaussianExpectation::shared();
        assert!((ge.expect_fn(k, |z| z.powi(4)) - 3.0 * k * k).abs() < 1e-11 * k * k);
    }
}

#[test]
fn kernel2_validation() {
    assert!(Kernel2::new(1.0, 1.0, 1.0).is_ok());
    assert!(Kernel2::new(1.0, 1.0, 1.01).is_err());
    assert!(Kernel2::new(0.0, 1.0, 0.0).is_err());
    let k = Kernel2::new(0.2, 0.5, 0.1).unwrap().transposed();
    assert_eq!((k.k11, k.k22, k.k12), (0.5, 0.2, 0.1));
}

#[test]
fn bivariate_independence_factorizes() {
    let k = Kernel2::new(0.3, 0.8, 0.0).unwrap();
    let a = spec().sigma(2);
    let b = spec().d1(2);
    let joint = expect2(&a, &b, &k).unwrap();
    let prod = expect1(&a, 0.3).unwrap() * expect1(&b, 0.8).unwrap();
    assert!((joint - prod).abs() < 1e-12);
}

#[test]
fn bivariate_perfect_correlation_reduces_to_single() {
    let k = Kernel2::new(0.4, 0.4, 0.4).unwrap();
    let joint = expect2(&spec().sigma(1), &spec().sigma(1), &k).unwrap();
    let single = expect1(&spec().sigma(2), 0.4).unwrap();
    assert!((joint - single).abs() < 1e-12);
    // Anticorrelated: σ is odd so the sign flips.
    let anti = Kernel2::new(0.4, 0.4, -0.4).unwrap();
    let joint = expect2(&spec().sigma(1), &spec().sigma(1), &anti).unwrap();
    assert!((joint + single).abs() < 1e-12);
    // Just off the rank-one threshold agrees with it.
    let near = Kernel2::new(0.4, 0.4, 0.4 * (1.0 - 1e-9)).unwrap();
    let joint = expect2(&spec().sigma(1), &spec().sigma(1), &near).unwrap();
    assert!((joint - single).abs() < 1e-6);
}

#[test]
fn bivariate_monte_carlo_oracle() {
    let (k11, k22, k12) = (0.2, 0.2, 0.1);
    let k = Kernel2::new(k11, k22, k12).unwrap();
    let quad = expect2(&spec().d1(1), &spec().d1(1), &k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let c = k12 / k11.sqrt();
    let r = ((k11 * k22 - k12 * k12) / k11).sqrt();
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let u: f64 = StandardNormal.sample(&mut rng);
        let v: f64 = StandardNormal.sample(&mut rng);
        let z1 = k11.sqrt() * u;
        let z2 = c * u + r * v;
        let x = (1.0 - z1.tanh().powi(2)) * (1.0 - z2.tanh().powi(2));
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - quad).abs() < 4.0 * se, "{mean} ± {se} vs {quad}");
}

#[test]
fn susceptibilities_satisfy_stein_identities() {
    for &k in &[0.01, 0.2, 1.0, 2.5] {
        for &cw in &[0.5, 1.0, 4.0] {
            let s = susceptibilities(k, cw).unwrap();
            let s1s1 = expect1(&spec().d1(2), k).unwrap();
            let ss2 = expect1(&spec().sigma(1).d2(1), k).unwrap();
            let s2s2 = expect1(&spec().d2(2), k).unwrap();
            let s1s3 = expect1(&spec().d1(1).d3(1), k).unwrap();
            // The default rule is pinned to 1e-10 on K <= 1 and degrades slowly beyond.
            let tol = if k <= 1.0 { 1e-10 } else { 1e-5 };
            assert!((s.chi_perp - cw * s1s1).abs() < 1e-12);
            assert!((s.chi_par - cw * (s1s1 + ss2)).abs() < tol * cw);
            assert!((s.h - cw / 2.0 * (s2s2 + s1s3)).abs() < tol * cw * (1.0 + 1.0 / k));
            assert!((s.g - expect1(&spec().sigma(2), k).unwrap()).abs() < 1e-15);
        }
    }
    let tiny = susceptibilities(1e-6, 1.0).unwrap();
    assert!((tiny.chi_par - 1.0).abs() < 1e-4);
    assert!((tiny.chi_perp - 1.0).abs() < 1e-4);
    assert!((tiny.h + 1.0).abs() < 1e-3);
    assert!(susceptibilities(0.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn bivariate_symmetric_under_transposition(
        k11 in 0.01f64..1.0, k22 in 0.01f64..1.0, rho in -0.99f64..0.99,
        pa in 0u8..3, pb in 0u8..3,
    ) {
        let k = Kernel2::new(k11, k22, rho * (k11 * k22).sqrt()).unwrap();
        let a = spec().sigma(pa).d1(1);
        let b = spec().d1(pb).sigma(1);
        let ab = expect2(&a, &b, &k).unwrap();
        let ba = expect2(&b, &a, &k.transposed()).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10 * (1.0 + ab.abs()));
    }

    #[test]
    fn even_powers_are_positive(k in 1e-4f64..5.0, p in 1u8..=3) {
        prop_assert!(expect1(&spec().sigma(2 * p), k).unwrap() > 0.0);
        prop_assert!(expect1(&spec().d1(2 * p), k).unwrap() > 0.0);
        let s = susceptibilities(k, 1.0).unwrap();
        prop_assert!(s.chi_par * s.chi_par < 1.0);
        prop_assert!(s.chi_perp <= 1.0);
    }

    #[test]
    fn covariance_of_sigmas_is_bounded(k in 0.01f64..3.0, rho in -1.0f64..1.0) {
        let kk = Kernel2::new(k, k, rho * k).unwrap();
        let c = expect2(&spec().sigma(1), &spec().sigma(1), &kk).unwrap();
        let g = expect1(&spec().sigma(2), k).unwrap();
        prop_assert!(c.abs() <= g * (1.0 + 1e-12));
        prop_assert!(c * rho >= -1e-15);
    }
}
