use paragroup::linalg::loglog_slope;
use paragroup::lp::*;
use paragroup::transform::{evaluate, sobolev_norm};
use paragroup::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn cutoff_shape() {
    assert_eq!(phi(0.0), 1.0);
    assert_eq!(phi(0.5), 1.0);
    assert_eq!(phi(-0.5), 1.0);
    assert_eq!(phi(1.0), 0.0);
    assert!(phi(0.75) > 0.0 && phi(0.75) < 1.0);
    assert!((phi(0.75) - 0.5).abs() < 1e-14);
    // psi = -lam phi' against a central difference
    for &x in &[0.55, 0.6, 0.7, 0.8, 0.95] {
        let h = 1e-6;
        let fd = -x * (phi(x + h) - phi(x - h)) / (2.0 * h);
        assert!((psi(x) - fd).abs() < 1e-6, "{x}");
    }
    assert_eq!(theta(0.2), 0.0);
    assert_eq!(theta(3.0), 0.0);
}

#[test]
fn continuous_partition_by_quadrature() {
    let cells = TCells::default();
    for &lam in &[0.0, 0.3, 0.9, 1.7, 5.0, 13.2, 40.0] {
        let s = phi(lam) + cells.integrate(4.0 * lam.max(1.0), |t| psi(lam / t));
        assert!((s - 1.0).abs() < 1e-8, "lam {lam}: {s}");
    }
}

#[test]
fn continuous_partition_converges_with_resolution() {
    let lam = 7.3;
    let err = |p| (phi(lam) + TCells::new(p).integrate(30.0, |t| psi(lam / t)) - 1.0).abs();
    assert!(err(32) <= err(4) + 1e-15);
    assert!(err(64) < 1e-10);
}

#[test]
fn cells_telescope() {
    let cells = TCells::default();
    for &lam in &[0.0, 0.6, 2.5, 30.0] {
        let k = cells.count(lam);
        let s: f64 = phi(lam) + (0..k).map(|i| cells.cell(i, lam)).sum::<f64>();
        assert!((s - 1.0).abs() < 1e-14);
    }
}

#[test]
fn dyadic_reconstruction_and_support() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let f = SpectralFn::random(RepLabel::new(12), 0, 12, &mut r);
    let mut acc = low_part(&f);
    for j in 0..6 {
        let b = dyadic_block(&f, j);
        for l in b.labels() {
            let lam = l.freq();
            if lam < 2f64.powi(j - 1) || lam > 2f64.powi(j + 1) {
                assert_eq!(paragroup::linalg::hs_norm(b.block(l)), 0.0);
            }
        }
        acc = acc.add(&b);
    }
    assert!(acc.max_abs_diff(&f) < 1e-12);
    let c = SpectralFn::random(RepLabel::new(3), 0, 0, &mut r);
    assert!(low_part(&c).max_abs_diff(&c) == 0.0);
    assert!((0..4).all(|j| dyadic_block(&c, j).plancherel_sq() == 0.0));
}

#[test]
fn partial_sum_limits() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let f = SpectralFn::random(RepLabel::new(8), 4, 8, &mut r);
    assert!(partial_sum(&f, 20.0).max_abs_diff(&f) == 0.0);
    assert!(partial_sum(&f, 1.0).plancherel_sq() == 0.0);
}

#[test]
fn bernstein_ratio_is_bounded() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let f = SpectralFn::random(RepLabel::new(40), 0, 40, &mut r);
    let s = 1.5;
    for j in 0..5 {
        let b = dyadic_block(&f, j);
        let ratio = sobolev_norm(&b, s) / (2f64.powi(j).powf(s) * sobolev_norm(&b, 0.0));
        assert!(ratio <= 2.3f64.powf(s) && ratio > 0.3f64.powf(s), "j {j}: {ratio}");
    }
}

#[test]
fn partial_sum_error_decay_rate() {
    // f(e) = sum (2l+1) <l>^(-r-2) > 0 dominates |f| everywhere, so the sup of
    // f - S_T f is attained at the identity.
    let r = 2.5;
    let top = 64;
    let mut f = SpectralFn::zeros(RepLabel::integer(top));
    for n in 0..=top {
        let l = RepLabel::integer(n);
        let c = (1.0 + l.casimir()).powf(-(r + 2.0) / 2.0);
        let p = l.pos(0);
        f.block_mut(l)[(p, p)] = C64::from(c);
    }
    let e = EulerPoint::new(0.0, 0.0, 0.0);
    let ts = [3.0, 4.0, 6.0, 8.0, 12.0];
    let errs: Vec<f64> = ts.iter().map(|&t| evaluate(&f.sub(&partial_sum(&f, t)), e).norm()).collect();
    let slope = loglog_slope(&ts, &errs);
    assert!((slope + r).abs() < 0.2 * r, "slope {slope}");
}

#[test]
fn zygmund_examples() {
    // fine enough in theta that the grid sup of T^n_00 is close to 1
    let g = EulerGrid::for_degree(48);
    let cells = TCells::default();
    let c = SpectralFn::single(RepLabel::new(8), RepLabel::new(0), CMat::from_element(1, 1, C64::from(-2.5)));
    assert!((zygmund_estimate(&c, 1.0, &g, cells) - 2.5).abs() < 1e-12);
    let mode = |n: u32| {
        let l = RepLabel::integer(n);
        let mut b = CMat::zeros(l.dim(), l.dim());
        b[(l.pos(0), l.pos(0))] = C64::from(1.0 / l.dim() as f64);
        SpectralFn::single(RepLabel::new(8), l, b)
    };
    let (z2, z4) = (zygmund_estimate(&mode(2), 1.0, &g, cells), zygmund_estimate(&mode(4), 1.0, &g, cells));
    assert!(z2.is_finite() && z4 > z2, "{z2} {z4}");
    assert!(z4 / z2 > 1.3 && z4 / z2 < 3.5, "{}", z4 / z2);
    let mut prev = 0.0;
    for &r in &[0.5, 1.0, 1.5, 2.0] {
        let z = zygmund_estimate(&mode(3), r, &g, cells);
        assert!(z >= prev);
        prev = z;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn prop_partition_of_unity(lam in 0.0f64..200.0) {
        let cells = TCells::default();
        let s: f64 = phi(lam) + (0..cells.count(lam)).map(|k| cells.cell(k, lam)).sum::<f64>();
        prop_assert!((s - 1.0).abs() < 1e-12);
        let d: f64 = phi(lam) + (0..12).map(|j| theta(lam / 2f64.powi(j))).sum::<f64>();
        prop_assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prop_cutoff_range(lam in -3.0f64..3.0) {
        prop_assert!((0.0..=1.0).contains(&phi(lam)));
        prop_assert!(psi(lam) >= 0.0);
        prop_assert!(phi(lam) == phi(-lam));
    }
}
