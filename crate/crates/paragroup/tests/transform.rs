use paragroup::repr::{hopf_project, laplace_multiplier, wigner_matrix, PiTag};
use paragroup::transform::{sh_phase, sobolev_norm, SH_PHASE_TABLE};
use paragroup::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

#[test]
fn constant_and_fundamental_entries() {
    let g = EulerGrid::for_degree(8);
    let one = g.sample(|_| C64::from(1.0));
    let f = g.forward(&one, RepLabel::new(4)).unwrap();
    assert!((f.blocks[0][(0, 0)] - 1.0).norm() < 1e-12);
    for t in 1..=4 {
        assert!(paragroup::linalg::hs_norm(&f.blocks[t]) < 1e-12);
    }
    let h = RepLabel::new(1);
    for n in 0..2 {
        for m in 0..2 {
            let v = g.sample(|x| wigner_matrix(h, x)[(n, m)]);
            let f = g.forward(&v, RepLabel::new(3)).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    let want = if a == m && b == n { 0.5 } else { 0.0 };
                    assert!((f.blocks[1][(a, b)] - want).norm() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn round_trip_and_plancherel() {
    let mut r = rng();
    let lm = RepLabel::new(12);
    let a = SpectralFn::random(lm, 0, 12, &mut r);
    let g = EulerGrid::for_degree(24);
    let vals = g.inverse(&a);
    let b = g.forward(&vals, lm).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-10);
    let l2: f64 = (0..g.len()).map(|i| vals[i].norm_sqr() * g.weight(i)).sum();
    assert!((l2 - a.plancherel_sq()).abs() < 1e-10 * l2);
    assert!((sobolev_norm(&a, 0.0).powi(2) - l2).abs() < 1e-10 * l2);
}

#[test]
fn identity_block_trace() {
    let g = EulerGrid::for_degree(2);
    let a = SpectralFn::single(RepLabel::new(1), RepLabel::new(1), CMat::identity(2, 2));
    let v = g.inverse(&a);
    for i in 0..g.len() {
        let x = g.point(i);
        let want = 4.0 * (x.theta / 2.0).cos() * ((x.phi + x.psi) / 2.0).cos();
        assert!((v[i] - want).norm() < 1e-12);
    }
}

#[test]
fn homomorphism_on_random_pairs() {
    let mut r = rng();
    for _ in 0..20 {
        let x = EulerPoint::new(r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..PI), r.gen_range(-2.0 * PI..2.0 * PI));
        let y = EulerPoint::new(r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..PI), r.gen_range(-2.0 * PI..2.0 * PI));
        let xy = EulerPoint::from_su2(x.to_su2().mul(y.to_su2()));
        for t in 0..=6 {
            let l = RepLabel::new(t);
            let d = wigner_matrix(l, xy) - wigner_matrix(l, x) * wigner_matrix(l, y);
            assert!(paragroup::linalg::hs_norm(&d) < 1e-10, "2l={t}");
        }
    }
}

#[test]
fn spherical_harmonic_phases_are_frozen() {
    // Condon-Shortley Y_1^m, Y_2^m written out by hand
    let y = |n: usize, m: i32, th: f64, ps: f64| -> C64 {
        let (c, s) = (th.cos(), th.sin());
        let e = C64::from_polar(1.0, m as f64 * ps);
        let v = match (n, m) {
            (1, 0) => (3.0 / (4.0 * PI)).sqrt() * c,
            (1, 1) => -(3.0 / (8.0 * PI)).sqrt() * s,
            (1, -1) => (3.0 / (8.0 * PI)).sqrt() * s,
            (2, 0) => (5.0 / (16.0 * PI)).sqrt() * (3.0 * c * c - 1.0),
            (2, 1) => -(15.0 / (8.0 * PI)).sqrt() * s * c,
            (2, -1) => (15.0 / (8.0 * PI)).sqrt() * s * c,
            (2, 2) | (2, -2) => (15.0 / (32.0 * PI)).sqrt() * s * s,
            _ => unreachable!(),
        };
        e * v
    };
    let g = HopfGrid::new(8, 16);
    for &(n, m, ph) in SH_PHASE_TABLE.iter() {
        let vals: Vec<C64> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                y(n as usize, m, x.theta, x.psi)
            })
            .collect();
        let f = g.analyze_c(&vals, 3);
        assert!((f.get(n as usize, m) - 1.0).norm() < 1e-12, "n={n} m={m}");
        assert!(f.coeffs.iter().map(|z| z.norm()).sum::<f64>() - 1.0 < 1e-10);
        assert!((sh_phase(m) - C64::new(ph[0], ph[1])).norm() < 1e-15);
        // lifted values on the full group are phi independent
        let s = SphFn::mode(3, n as usize, m);
        let lifted = s.lift();
        let eg = EulerGrid::for_degree(8);
        let vals = eg.inverse(&lifted);
        for i in (0..eg.len()).step_by(7) {
            let x = eg.point(i);
            assert!((vals[i] - y(n as usize, m, x.theta, x.psi)).norm() < 1e-12);
        }
    }
}

#[test]
fn lift_project_and_laplacian() {
    let mut r = rng();
    let mut s = SphFn::zeros(6);
    for c in s.coeffs.iter_mut() {
        *c = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    }
    let a = s.lift();
    let back = SphFn::project(&a, 1e-14).unwrap();
    assert!(back.max_abs_diff(&s) < 1e-14);
    let lap = a.scale_blocks(|l| laplace_multiplier(l));
    let p = SphFn::project(&lap, 1e-12).unwrap();
    assert!(p.max_abs_diff(&s.laplacian()) < 1e-12);
    let mut bad = a.clone();
    bad.blocks[2][(0, 0)] = C64::from(0.5);
    assert!(matches!(SphFn::project(&bad, 1e-8), Err(Error::NotInvariant { .. })));
}

#[test]
fn hopf_grid_matches_sphere_synthesis() {
    let mut r = rng();
    let mut s = SphFn::zeros(8);
    for c in s.coeffs.iter_mut() {
        *c = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    }
    let g = HopfGrid::for_degree(16);
    let v = g.synth_c(&s);
    let via = g.inverse(&s.lift());
    for i in 0..g.len() {
        assert!((v[i] - via[i]).norm() < 1e-11);
    }
    let spec = g.forward(&v, RepLabel::integer(8)).unwrap();
    let back = SphFn::project(&spec, 1e-11).unwrap();
    assert!(back.max_abs_diff(&s) < 1e-11);
    assert!(g.analyze_c(&v, 8).max_abs_diff(&s) < 1e-11);
}

#[test]
fn hopf_projection_ignores_phi() {
    let mut r = rng();
    assert_eq!(hopf_project(EulerPoint::new(0.3, 0.0, 1.0)), [0.0, 0.0, 1.0]);
    let p = hopf_project(EulerPoint::new(1.0, PI / 2.0, 0.0));
    assert!((p[0] - 1.0).abs() < 1e-15 && p[2].abs() < 1e-15);
    for _ in 0..10 {
        let (t, s) = (r.gen_range(0.0..PI), r.gen_range(0.0..2.0 * PI));
        let a = hopf_project(EulerPoint::new(r.gen_range(0.0..2.0 * PI), t, s));
        let b = hopf_project(EulerPoint::new(0.0, t, s));
        assert_eq!(a, b);
    }
}

#[test]
fn spectral_localization_of_products() {
    let mut r = rng();
    let g = EulerGrid::for_degree(16);
    for (p, q) in [(2u32, 3u32), (1, 4), (3, 3)] {
        let f = SpectralFn::single(RepLabel::new(8), RepLabel::new(p), CMat::from_fn(p as usize + 1, p as usize + 1, |_, _| C64::new(r.gen(), r.gen())));
        let h = SpectralFn::single(RepLabel::new(8), RepLabel::new(q), CMat::from_fn(q as usize + 1, q as usize + 1, |_, _| C64::new(r.gen(), r.gen())));
        let (a, b) = (g.inverse(&f), g.inverse(&h));
        let prod: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let s = g.forward(&prod, RepLabel::new(8)).unwrap();
        for t in 0..=8u32 {
            let inside = t >= p.abs_diff(q) && t <= p + q && (t + p + q) % 2 == 0;
            if !inside {
                assert!(paragroup::linalg::hs_norm(&s.blocks[t as usize]) < 1e-10);
            }
        }
    }
}

#[test]
fn pi_zero_multiplies_by_m() {
    // Pi_0 T^l_{nm} = m T^l_{nm} through left multiplication by sigma_0
    let l = RepLabel::new(2);
    let g = EulerGrid::for_degree(4);
    let v = g.sample(|x| wigner_matrix(l, x)[(1, 0)]);
    let f = g.forward(&v, l).unwrap();
    let s = paragroup::repr::sigma_mat(PiTag::Zero, l);
    let h = f.map_blocks(|k, b| if k == l { &s * b } else { b.clone() });
    let w = g.inverse(&h);
    for i in 0..g.len() {
        assert!((w[i] + v[i]).norm() < 1e-12);
    }
}

#[test]
fn json_round_trips() {
    let mut r = rng();
    let a = SpectralFn::random(RepLabel::new(5), 0, 5, &mut r);
    let b = SpectralFn::from_json(&a.to_json()).unwrap();
    assert_eq!(a, b);
    let s = SphFn::mode(4, 3, -2);
    assert_eq!(SphFn::from_json(&s.to_json()).unwrap(), s);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn round_trip_any_band(seed in any::<u64>(), twice in 0u32..=10) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let lm = RepLabel::new(twice);
            let a = SpectralFn::random(lm, 0, twice, &mut r);
            let g = EulerGrid::for_degree(2 * twice.max(1));
            let vals = g.inverse(&a);
            let b = g.forward(&vals, lm).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-10);
            let l2: f64 = (0..g.len()).map(|i| vals[i].norm_sqr() * g.weight(i)).sum();
            prop_assert!((l2 - a.plancherel_sq()).abs() <= 1e-10 * l2.max(1e-300));
        }

        #[test]
        fn wigner_unitary_and_multiplicative(
            a in 0.0..2.0 * PI, b in 0.0..PI, c in -2.0 * PI..2.0 * PI,
            d in 0.0..2.0 * PI, e in 0.0..PI, f in -2.0 * PI..2.0 * PI,
            twice in 0u32..=8,
        ) {
            let (x, y) = (EulerPoint::new(a, b, c), EulerPoint::new(d, e, f));
            let l = RepLabel::new(twice);
            let w = wigner_matrix(l, x);
            let id = CMat::identity(l.dim(), l.dim());
            prop_assert!(paragroup::linalg::hs_norm(&(w.adjoint() * &w - id)) < 1e-11);
            let xy = EulerPoint::from_su2(x.to_su2().mul(y.to_su2()));
            let dd = wigner_matrix(l, xy) - w * wigner_matrix(l, y);
            prop_assert!(paragroup::linalg::hs_norm(&dd) < 1e-10);
        }

        #[test]
        fn sphere_analysis_inverts_synthesis(seed in any::<u64>(), l in 0usize..=10) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut s = SphFn::zeros(l);
            for n in 0..=l {
                for m in -(n as i32)..=(n as i32) {
                    s.axpy(r.gen_range(-1.0..1.0), &SphFn::real_mode(l, n, m));
                }
            }
            let g = HopfGrid::padded(l);
            let back = g.analyze(&g.synth(&s), l);
            prop_assert!(back.max_abs_diff(&s) < 1e-11);
        }
    }
}
