use paragroup::dno::*;
use paragroup::linalg::{herm_eigenvalues, hermitian_part, hs_norm};
use paragroup::paradiff::ParaOptions;
use paragroup::repr::RepLabel;
use paragroup::{HopfGrid, SphFn, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn random_real(l_max: usize, lo: usize, amp: f64, seed: u64) -> SphFn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SphFn::zeros(l_max);
    for n in lo..=l_max {
        for m in -(n as i32)..=(n as i32) {
            s.axpy(amp * rng.gen_range(-1.0..1.0), &SphFn::real_mode(l_max, n, m));
        }
    }
    s
}

#[test]
fn oracle_flat_sphere_multiplier() {
    let o = TrefftzOracle::new(OracleConfig::default()).unwrap();
    let z = SphFn::zeros(8);
    for n in 0..=8 {
        for m in [-(n as i32), 0, n as i32] {
            let y = SphFn::real_mode(8, n, m);
            let d = o.dn(&z, &y, 8).unwrap();
            assert!(d.value.max_abs_diff(&y.scale(n as f64)) < 1e-8, "n = {n}, m = {m}");
            assert!(d.cond.unwrap() < 1.0 + 1e-8);
        }
    }
}

#[test]
fn oracle_constant_height() {
    let o = TrefftzOracle::new(OracleConfig::default()).unwrap();
    for c in [-0.2, 0.1, 0.3] {
        let z = SphFn::constant(6, c);
        for n in [1, 3, 6] {
            let y = SphFn::real_mode(6, n, 1);
            let d = o.dn(&z, &y, 6).unwrap();
            let want = y.scale(n as f64 / (1.0 + c));
            assert!(d.value.max_abs_diff(&want) < 1e-7, "c = {c}, n = {n}");
        }
    }
}

/// Point-source potential `1/|X - X0|` on an axisymmetric surface; the DN
/// value is computed from the ambient gradient and the meridian slope.
#[test]
fn oracle_point_source_axisymmetric() {
    let eps = 0.05;
    let k = (5.0 / (4.0 * PI)).sqrt();
    let zeta_of = |ct: f64| eps * k * 0.5 * (3.0 * ct * ct - 1.0);
    let dzeta_of = |ct: f64, st: f64| -eps * k * 3.0 * ct * st;
    let mut z = SphFn::zeros(2);
    z.set(2, 0, C64::from(eps));
    let o = TrefftzOracle::new(OracleConfig::default()).unwrap();
    let s = o.surface(&z).unwrap();
    let x0 = [0.4, -1.2, 2.7];
    let pts = o.grid.normals();
    let mut phi = Vec::new();
    let mut want = Vec::new();
    for p in &pts {
        let ct = p[2];
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let r = 1.0 + zeta_of(ct);
        let x = [r * p[0], r * p[1], r * p[2]];
        let d = [x[0] - x0[0], x[1] - x0[1], x[2] - x0[2]];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        phi.push(1.0 / dist);
        let grad = [-d[0] / dist.powi(3), -d[1] / dist.powi(3), -d[2] / dist.powi(3)];
        let az = p[1].atan2(p[0]);
        let e_theta = [ct * az.cos(), ct * az.sin(), -st];
        let dz = dzeta_of(ct, st);
        let radial: f64 = (0..3).map(|i| grad[i] * p[i]).sum();
        let tang: f64 = (0..3).map(|i| grad[i] * e_theta[i]).sum();
        want.push(radial - dz * tang / r);
    }
    let (got, ext) = o.dn_grid(&s, &phi, None).unwrap();
    assert!(ext.residual < 1e-8);
    let err = got.iter().zip(&want).fold(0.0_f64, |a, (g, w)| a.max((g - w).abs()));
    assert!(err < 1e-6, "err = {err:e}");
}

#[test]
fn oracle_cg_matches_svd() {
    let z = random_real(4, 1, 0.004, 3);
    let phi = random_real(6, 1, 0.3, 4);
    let svd = oracle_dn(&z, &phi, &OracleConfig::default()).unwrap();
    let cg = oracle_dn(
        &z,
        &phi,
        &OracleConfig {
            solver: OracleSolver::Cg,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(svd.value.max_abs_diff(&cg.value) < 1e-9);
}

#[test]
fn oracle_self_adjoint_with_weight() {
    let o = TrefftzOracle::new(OracleConfig::default()).unwrap();
    for seed in 0..3 {
        let z = random_real(3, 1, 0.015, 10 + seed);
        let f = random_real(4, 0, 0.5, 20 + seed);
        let g = random_real(4, 0, 0.5, 30 + seed);
        let s = o.surface(&z).unwrap();
        let (df, _) = o.dn_grid(&s, &o.grid.synth(&f), None).unwrap();
        let (dg, _) = o.dn_grid(&s, &o.grid.synth(&g), None).unwrap();
        let (fv, gv) = (o.grid.synth(&f), o.grid.synth(&g));
        let w: Vec<f64> = s.rho.iter().map(|r| r * r).collect();
        let lhs: Vec<f64> = (0..fv.len()).map(|i| df[i] * gv[i] * w[i]).collect();
        let rhs: Vec<f64> = (0..fv.len()).map(|i| fv[i] * dg[i] * w[i]).collect();
        let (a, b) = (o.grid.integrate_s2(&lhs), o.grid.integrate_s2(&rhs));
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn oracle_rejects_bad_surfaces() {
    let big = SphFn::constant(0, 0.6);
    assert!(matches!(oracle_dn(&big, &SphFn::zeros(2), &OracleConfig::default()), Err(paragroup::Error::Admissibility(_))));
    let z = SphFn::real_mode(2, 2, 0).scale(0.6);
    let cfg = OracleConfig {
        cond_limit: 1e3,
        ..Default::default()
    };
    assert!(matches!(oracle_dn(&z, &SphFn::mode(2, 1, 0), &cfg), Err(paragroup::Error::IllConditioned { .. })));
    let cfg = OracleConfig {
        n_max: 2,
        n_theta: 8,
        n_psi: 16,
        residual_tol: 1e-6,
        ..Default::default()
    };
    let z = SphFn::real_mode(3, 3, 1).scale(0.1);
    assert!(matches!(oracle_dn(&z, &SphFn::real_mode(3, 2, 0), &cfg), Err(paragroup::Error::Residual { .. })));
}

fn analytic() -> FactorizationConfig {
    FactorizationConfig {
        y_derivative: YDerivative::Analytic,
        ..Default::default()
    }
}

#[test]
fn flat_symbols() {
    let syms = build_factorization(&SphFn::zeros(0), 6, &analytic()).unwrap();
    for l in syms.lambda.labels() {
        let d = l.dim();
        let f = l.freq();
        for i in [0, 17, 100] {
            let id = paragroup::CMat::identity(d, d);
            let chk = |m: &paragroup::CMat, v: f64| hs_norm(&(m - &id * C64::from(v)));
            assert!(chk(syms.lambda.block(l, i), f - 0.5) < 1e-12, "l = {}", l.l());
            assert!(chk(syms.a1.block(l, i), -f) < 1e-12);
            assert!(chk(syms.cap_a1.block(l, i), f) < 1e-12);
            assert!(chk(syms.a0.block(l, i), -1.5) < 1e-12);
            assert!(chk(syms.cap_a0.block(l, i), -0.5) < 1e-12);
        }
    }
}

#[test]
fn flat_symbol_near_degree() {
    let syms = build_factorization(&SphFn::zeros(0), 12, &analytic()).unwrap();
    let mut worst: f64 = 0.0;
    for n in 2..=12u32 {
        let l = RepLabel::integer(n);
        let v = syms.lambda.block(l, 0)[(0, 0)].re;
        worst = worst.max((v - n as f64).abs() * n as f64);
    }
    // sqrt(n(n+1)) - 1/2 - n = -1/(8n) + O(n^-2)
    assert!(worst < 0.13, "{worst}");
}

#[test]
fn flat_layers_at_depth() {
    let grid = Arc::new(HopfGrid::new(6, 11));
    let s = SurfaceState::new(&SphFn::zeros(0), grid).unwrap();
    let (a1, cap_a1) = first_order_layer(&s, -0.3, 6).unwrap();
    for l in a1.labels() {
        let want = l.freq() / 0.7;
        assert!((a1.block(l, 3)[(0, 0)].re + want).abs() < 1e-12);
        assert!((cap_a1.block(l, 3)[(0, 0)].re - want).abs() < 1e-12);
    }
}

#[test]
fn chebyshev_matches_analytic() {
    let z = random_real(3, 1, 0.01, 5);
    let a = build_factorization(&z, 4, &analytic()).unwrap();
    let c = build_factorization(&z, 4, &FactorizationConfig::default()).unwrap();
    let d = a.lambda.max_abs_diff(&c.lambda).unwrap();
    assert!(d < 1e-6, "{d:e}");
}

#[test]
fn symbol_structure_on_small_surface() {
    let z = random_real(3, 1, 0.01, 6);
    let syms = build_factorization(&z, 5, &analytic()).unwrap();
    let b2 = syms.surface.beta2_symbol(10, true);
    for l in syms.lambda1.labels() {
        for i in (0..syms.surface.len()).step_by(37) {
            let b = b2.block(l, i);
            assert!(hs_norm(&(b + b.adjoint())) < 1e-12);
            let sq = b * b;
            assert!(herm_eigenvalues(&hermitian_part(&sq)).iter().all(|&e| e < 1e-12));
            let lam = syms.lambda1.block(l, i);
            assert!(hs_norm(&(lam - lam.adjoint())) < 1e-12);
            if l.twice_l >= 2 {
                let h = hermitian_part(syms.cap_a1.block(l, i));
                assert!(herm_eigenvalues(&h).iter().all(|&e| e > 0.0));
            }
        }
    }
}

#[test]
fn gate_rejects_large_slopes() {
    let z = SphFn::real_mode(4, 4, 2).scale(0.2);
    assert!(matches!(build_factorization(&z, 4, &analytic()), Err(paragroup::Error::Admissibility(_))));
    let cfg = FactorizationConfig {
        enforce_gate: false,
        ..analytic()
    };
    assert!(build_factorization(&z, 4, &cfg).is_ok());
}

#[test]
fn good_unknown_examples() {
    let grid = HopfGrid::padded(6);
    let opts = ParaOptions::default();
    let phi = SphFn::real_mode(6, 3, 1);
    let dz = phi.scale(3.0);
    let gu = good_unknown(&SphFn::zeros(6), &phi, &dz, &grid, 6, &opts);
    assert!(gu.u.max_abs_diff(&phi) < 1e-12);
    let bv = grid.synth(&dz);
    assert!(gu.b_frak.iter().zip(&bv).all(|(a, b)| (a - b).abs() < 1e-12));

    let c = 0.2;
    let z = SphFn::constant(6, c);
    let d = SphFn::real_mode(6, 3, 1).scale(3.0 / (1.0 + c));
    let gu = good_unknown(&z, &phi, &d, &grid, 6, &opts);
    let bv = grid.synth(&d);
    assert!(gu.b_frak.iter().zip(&bv).all(|(a, b)| (a - b).abs() < 1e-12));
    for j in 0..3 {
        let want = grid.synth(&phi.frame_derivative(j + 1));
        assert!(gu.v_frak[j].iter().zip(&want).all(|(a, b)| (a - b / (1.0 + c).powi(2)).abs() < 1e-12));
    }
}

#[test]
fn para_dn_flat() {
    let phi = SphFn::real_mode(6, 4, -2).add(&SphFn::real_mode(6, 2, 0).scale(0.5));
    let cfg = ParaDnConfig {
        factorization: analytic(),
        ..Default::default()
    };
    let p = paralinearized_dn(&SphFn::zeros(6), &phi, &cfg).unwrap();
    let want = phi.multiplier(|n| ((n * (n + 1)) as f64).sqrt() - 0.5);
    assert!(p.value.max_abs_diff(&want) < 1e-10);
    let r = p.remainder.unwrap();
    for n in 2..=6 {
        assert!(r.remainder.degree_norm(n) <= 0.13 / n as f64 * phi.degree_norm(n) + 1e-12);
    }
}

#[test]
fn fixed_point_b_is_consistent() {
    let z = SphFn::real_mode(6, 2, 0).scale(0.02);
    let phi = SphFn::real_mode(6, 3, 0);
    let base = ParaDnConfig {
        factorization: analytic(),
        ..Default::default()
    };
    let a = paralinearized_dn(&z, &phi, &base).unwrap();
    let b = paralinearized_dn(
        &z,
        &phi,
        &ParaDnConfig {
            b_source: BSource::FixedPoint(2),
            ..base.clone()
        },
    )
    .unwrap();
    let du = a.good.u.sub(&b.good.u).sobolev_norm(1.0);
    let rem = a.remainder.unwrap().remainder_hs;
    assert!(du < rem, "{du:e} vs {rem:e}");
}

#[test]
fn closed_form_x_derivatives_match_spectral() {
    let z = SphFn::real_mode(3, 2, 1).scale(0.02).add(&SphFn::real_mode(3, 3, -2).scale(0.01));
    let syms = build_factorization(&z, 4, &analytic()).unwrap();
    for (mu, tag) in paragroup::repr::PiTag::ALL.iter().enumerate() {
        let spec = syms.cap_a1.x_pi(*tag, syms.x_band).unwrap();
        let d = spec.max_abs_diff(&syms.pi_cap_a1[mu]).unwrap();
        assert!(d < 1e-6, "mu = {mu}: {d:e}");
    }
}

#[test]
fn order_zero_system_holds() {
    // a0 + A0 = -beta3/beta1, and Bartels-Stewart applied to
    // R = a1 A0 + a0 A1 recovers a0.
    let z = SphFn::real_mode(3, 2, 0).scale(0.03).add(&SphFn::real_mode(3, 1, 1).scale(0.02));
    let syms = build_factorization(&z, 3, &analytic()).unwrap();
    let s = &syms.surface;
    for l in syms.a0.labels().filter(|l| l.twice_l > 0) {
        for i in (0..s.len()).step_by(41) {
            let c = -s.beta3[i] / s.beta1[i];
            let sum = syms.a0.block(l, i) + syms.cap_a0.block(l, i);
            let id = paragroup::CMat::identity(l.dim(), l.dim());
            assert!(hs_norm(&(sum - &id * C64::from(c))) < 1e-12);
            let a1 = syms.a1.block(l, i);
            let cap = syms.cap_a1.block(l, i);
            let lhs = a1 * syms.cap_a0.block(l, i) + syms.a0.block(l, i) * cap;
            let bs = paragroup::linalg::sylvester(&(-a1), cap, &(&lhs - a1 * C64::from(c)), 1e-12).unwrap();
            assert!(hs_norm(&(bs - syms.a0.block(l, i))) < 1e-10);
        }
    }
}
