//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always show.
//! Arguments filter criteria by id, e.g. `cargo test --test acceptance -- 6 9`.
//! The process fails on any FAIL that is not listed in `KNOWN_FAILURES`.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use paragroup::diffops::{d_block, TaylorOps};
use paragroup::dno::{
    build_factorization, paralinearized_dn_with, FactorizationConfig, OracleConfig, ParaDnConfig, TrefftzOracle, YDerivative,
};
use paragroup::linalg::{hs_norm, loglog_slope};
use paragroup::paradiff::{AdmissibleCutoff, CutoffRule};
use paragroup::repr::{frame_symbol, sigma_mat, PiTag};
use paragroup::symcalc::{adjoint_symbol, compose, Symbol};
use paragroup::waves::{dispersion, dispersion_run, mean_curvature, WaveConfig, WaveSolver, WaveState};
use paragroup::{CMat, EulerGrid, Grid, GridFn, HopfGrid, RepLabel, SpectralFn, SphFn, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The curvature linearization as stated, `-(n-2)(n+1)`, has the wrong sign
/// convention for `r = 1 + zeta`; the geometric multiplier `(n-1)(n+2)` is
/// checked alongside and must hold.
const KNOWN_FAILURES: &[&str] = &["7"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn real_sph(l_max: usize, lo: usize, hi: usize, rng: &mut ChaCha8Rng) -> SphFn {
    let mut s = SphFn::zeros(l_max);
    for n in lo..=hi {
        for m in -(n as i32)..=(n as i32) {
            s.axpy(rng.gen_range(-1.0..1.0), &SphFn::real_mode(l_max, n, m));
        }
    }
    s
}

fn real_field(g: &dyn Grid, spec: &SpectralFn) -> Vec<f64> {
    g.inverse(spec).iter().map(|z| z.re).collect()
}

fn l2(g: &dyn Grid, v: &[C64]) -> f64 {
    GridFn::new(v.to_vec()).l2_sq(g).sqrt()
}

// 1
fn plancherel_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lm = RepLabel::integer(8);
    let g = EulerGrid::for_degree(2 * lm.twice_l);
    let mut worst_pl: f64 = 0.0;
    let mut worst_rt: f64 = 0.0;
    for _ in 0..3 {
        let a = SpectralFn::random(lm, 0, lm.twice_l, &mut rng);
        let v = g.inverse(&a);
        let b = g.forward(&v, lm).unwrap();
        let p = a.plancherel_sq();
        let e: f64 = (0..g.len()).map(|i| v[i].norm_sqr() * g.weight(i)).sum();
        worst_pl = worst_pl.max((e - p).abs() / p);
        worst_rt = worst_rt.max(a.max_abs_diff(&b));
    }
    outcome(
        worst_pl <= 1e-10 && worst_rt <= 1e-10,
        format!("plancherel defect {worst_pl:.2e}, round-trip defect {worst_rt:.2e} (tol 1e-10)"),
    )
}

// 2
fn representation_identities() -> Outcome {
    let (mut comm, mut cas, mut kron) = (0.0_f64, 0.0_f64, 0.0_f64);
    let sig: Vec<[CMat; 3]> = (0..=9).map(|t| PiTag::ALL.map(|tag| sigma_mat(tag, RepLabel::new(t)))).collect();
    for t in 0..=8 {
        let l = RepLabel::new(t);
        let s = |j| frame_symbol(j, l);
        for (i, j, k) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
            comm = comm.max(hs_norm(&(s(i) * s(j) - s(j) * s(i) - s(k))));
        }
        let c = s(1) * s(1) + s(2) * s(2) + s(3) * s(3);
        let id = CMat::identity(l.dim(), l.dim());
        cas = cas.max(hs_norm(&(c + &id * C64::from(l.l() * (l.l() + 1.0)))));
        for (mu, &tm) in PiTag::ALL.iter().enumerate() {
            for nu in 0..3 {
                let get = |k: u32| sig.get(k as usize).map(|b| &b[nu]);
                let want = if mu == nu { id.clone() } else { CMat::zeros(l.dim(), l.dim()) };
                kron = kron.max(hs_norm(&(d_block(tm, &get, l) - want)));
            }
        }
    }
    outcome(
        comm <= 1e-12 && cas <= 1e-12 && kron <= 1e-12,
        format!("commutators {comm:.1e}, Casimir {cas:.1e}, D_mu sigma_nu {kron:.1e} (tol 1e-12, l <= 4)"),
    )
}

// 3
fn spectral_localization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let g = HopfGrid::padded(12);
    let mut leak: f64 = 0.0;
    for p in 0..=6 {
        for q in 0..=6 {
            let fp = g.synth(&real_sph(6, p, p, &mut rng));
            let fq = g.synth(&real_sph(6, q, q, &mut rng));
            let prod: Vec<f64> = fp.iter().zip(&fq).map(|(a, b)| a * b).collect();
            let c = g.analyze(&prod, 12);
            for n in (0..p.abs_diff(q)).chain(p + q + 1..=12) {
                leak = leak.max(c.degree_norm(n));
            }
        }
    }
    outcome(leak <= 1e-10, format!("largest coefficient outside [|p-q|, p+q]: {leak:.2e} (tol 1e-10)"))
}

// 4
fn flat_and_constant_dn() -> Outcome {
    let o = TrefftzOracle::new(OracleConfig::default()).unwrap();
    let mut flat: f64 = 0.0;
    for n in 0..=8 {
        for m in -(n as i32)..=(n as i32) {
            let y = SphFn::real_mode(8, n, m);
            let d = o.dn(&SphFn::zeros(8), &y, 8).unwrap();
            flat = flat.max(d.value.max_abs_diff(&y.scale(n as f64)));
        }
    }
    let mut cst: f64 = 0.0;
    for c in [-0.2, 0.15, 0.3] {
        for n in 1..=8 {
            let y = SphFn::real_mode(8, n, (n as i32) / 2);
            let d = o.dn(&SphFn::constant(8, c), &y, 8).unwrap();
            cst = cst.max(d.value.max_abs_diff(&y.scale(n as f64 / (1.0 + c))));
        }
    }
    outcome(
        flat <= 1e-8 && cst <= 1e-7,
        format!("flat n <= 8: {flat:.2e} (tol 1e-8); constant height: {cst:.2e} (tol 1e-7)"),
    )
}

// 5
fn flat_dn_symbol() -> Outcome {
    let cfg = FactorizationConfig {
        y_derivative: YDerivative::Analytic,
        ..Default::default()
    };
    let syms = build_factorization(&SphFn::zeros(0), 12, &cfg).unwrap();
    let mut exact: f64 = 0.0;
    for l in syms.lambda.labels() {
        let want = CMat::identity(l.dim(), l.dim()) * C64::from(l.freq() - 0.5);
        for b in syms.lambda.label_blocks(l).unwrap() {
            exact = exact.max(hs_norm(&(b - &want)));
        }
    }
    let mut bound: f64 = 0.0;
    for n in 2..=12u32 {
        let l = RepLabel::integer(n);
        bound = bound.max((syms.lambda.block(l, 0)[(0, 0)].re - n as f64).abs() * n as f64);
    }
    outcome(
        exact <= 1e-12 && bound <= 0.125,
        format!("|lambda - (sqrt(l(l+1)) - 1/2)| = {exact:.1e}; max |lambda - l| l over 2..12 = {bound:.4} (bound 1/8)"),
    )
}

// 6
fn paralinearization_quality() -> Outcome {
    let l = 12;
    let mut cfg = ParaDnConfig::default();
    cfg.factorization.y_derivative = YDerivative::Analytic;
    let oracle = TrefftzOracle::new(cfg.oracle.clone()).unwrap();
    let y2 = SphFn::real_mode(l, 2, 0);
    let phi = SphFn::real_mode(l, 3, 0);
    let s = cfg.sobolev_s + 0.5;
    let run = |eps: f64| {
        let p = paralinearized_dn_with(&y2.scale(eps), &phi, &cfg, Some(&oracle)).unwrap();
        p.remainder.unwrap()
    };
    let r0 = run(0.0).remainder;
    let h = 1e-3;
    let d0 = run(h).remainder.sub(&run(-h).remainder).scale(0.5 / h);
    let eps = [0.01, 0.02, 0.04];
    let (mut quad, mut raw, mut ratio) = (Vec::new(), Vec::new(), 0.0);
    for (k, &e) in eps.iter().enumerate() {
        let rep = run(e);
        let q = rep.remainder.sub(&r0).sub(&d0.scale(e));
        quad.push(q.sobolev_norm(s));
        raw.push(rep.remainder_hs_half);
        if k == 0 {
            ratio = q.sobolev_norm(s) / rep.oracle_hs_half;
        }
    }
    let slope = loglog_slope(&eps, &quad);
    let raw_slope = loglog_slope(&eps, &raw);
    outcome(
        slope >= 1.8 && ratio <= 0.05,
        format!(
            "H^1.5 nonlinear remainder slope {slope:.3} (need >= 1.8), ratio at 0.01 = {ratio:.2e} (limit 0.05); \
             full remainder slope {raw_slope:.3}, norms {:.2e} {:.2e} {:.2e}",
            raw[0],
            raw[1],
            raw[2]
        ),
    )
}

// 7
fn curvature() -> Outcome {
    let mut cst: f64 = 0.0;
    for c in [-0.3, -0.1, 0.2, 0.5] {
        let h = mean_curvature(&SphFn::constant(4, c)).unwrap();
        cst = cst.max((h.get(0, 0).re / (4.0 * PI).sqrt() - 2.0 / (1.0 + c)).abs());
    }
    let e = 1e-5;
    let (mut stated, mut geometric) = (0.0_f64, 0.0_f64);
    for n in 0..=6usize {
        let y = SphFn::real_mode(6, n, 0);
        let hp = mean_curvature(&y.scale(e)).unwrap();
        let hm = mean_curvature(&y.scale(-e)).unwrap();
        let mult = (hp.get(n, 0).re - hm.get(n, 0).re) / (2.0 * e) / y.get(n, 0).re;
        let nf = n as f64;
        stated = stated.max((mult + (nf - 2.0) * (nf + 1.0)).abs());
        geometric = geometric.max((mult - (nf - 1.0) * (nf + 2.0)).abs());
    }
    outcome(
        cst <= 1e-8 && stated <= 1e-6,
        format!(
            "H(c) = 2/(1+c): {cst:.1e} (tol 1e-8); multiplier vs -(n-2)(n+1): {stated:.2e} (tol 1e-6); \
             vs (n-1)(n+2): {geometric:.2e}"
        ),
    )
}

fn geometric_multiplier_holds() -> bool {
    let e = 1e-5;
    (0..=6usize).all(|n| {
        let y = SphFn::real_mode(6, n, 0);
        let hp = mean_curvature(&y.scale(e)).unwrap();
        let hm = mean_curvature(&y.scale(-e)).unwrap();
        let mult = (hp.get(n, 0).re - hm.get(n, 0).re) / (2.0 * e) / y.get(n, 0).re;
        (mult - ((n as f64) - 1.0) * (n as f64 + 2.0)).abs() <= 1e-6
    })
}

// 8
fn dispersion_relation() -> Outcome {
    let solver = WaveSolver::new(WaveConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for n in [2, 3, 4] {
        let fit = dispersion_run(&solver, n, 1e-3, 0.02, 3, 60.0).unwrap();
        worst = worst.max(fit.rel_error);
        let periods = fit.t_end * dispersion(n) / (2.0 * PI);
        parts.push(format!("n={n}: omega {:.5} vs {:.5} ({periods:.1} periods)", fit.omega, fit.expected));
    }
    outcome(worst <= 0.02, format!("{}; worst rel error {worst:.2e} (limit 2%)", parts.join(", ")))
}

// 9
fn conservation() -> Outcome {
    let cfg = WaveConfig {
        l_max: 12,
        dt: 1e-3,
        ..Default::default()
    };
    let solver = WaveSolver::new(cfg).unwrap();
    let st = WaveState::new(SphFn::real_mode(12, 2, 0).scale(0.01), SphFn::zeros(12));
    let c0 = solver.conserved(&st).unwrap();
    let (mut vol, mut ham, mut mom) = (0.0_f64, 0.0_f64, 0.0_f64);
    solver
        .run(st, 0.5, 1e-3, 50, |s| {
            let c = solver.conserved(s)?;
            vol = vol.max((c.volume - c0.volume).abs() / c0.volume);
            ham = ham.max((c.hamiltonian - c0.hamiltonian).abs());
            mom = mom.max(c.momentum.iter().fold(0.0, |m, v| m.max(v.abs())));
            Ok(())
        })
        .unwrap();
    outcome(
        vol <= 1e-6 && ham <= 1e-4 && mom <= 1e-6,
        format!("volume {vol:.1e} (1e-6), Hamiltonian {ham:.1e} (1e-4), momentum {mom:.1e} (1e-6) over [0, 0.5]"),
    )
}

// 10

/// Residuals at a single label `2l = t` of the `r`-term composition and
/// adjoint expansions for `a = c1 <xi> Id`, `b = c2 Id`, relative to the
/// probe norm. Exact operators: `c1 <D> (c2 f)` and `<D> (c1 f)`.
fn expansion_residuals(t: u32, rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let small: Arc<dyn Grid> = Arc::new(EulerGrid::for_degree(8));
    let big: Arc<dyn Grid> = Arc::new(EulerGrid::for_degree(2 * t + 8));
    let band = RepLabel::new(2);
    let c1s = SpectralFn::random(band, 0, 2, rng);
    let c2s = SpectralFn::random(band, 0, 2, rng);
    let (c1, c2) = (real_field(&*small, &c1s), real_field(&*small, &c2s));
    let (c1b, c2b) = (real_field(&*big, &c1s), real_field(&*big, &c2s));
    let (lo, hi) = (t - 4, t + 4);
    let a = Symbol::from_fn(small.clone(), lo, hi, false, 1.0, |l, i| {
        CMat::identity(l.dim(), l.dim()) * C64::from(l.bracket() * c1[i])
    });
    let b = Symbol::from_fn(small.clone(), lo, hi, false, 0.0, |l, i| CMat::identity(l.dim(), l.dim()) * C64::from(c2[i]));
    let f = SpectralFn::random(RepLabel::new(t), t, t, rng);
    let fb = big.inverse(&f);
    let fnorm = f.plancherel_sq().sqrt();
    let bracket_of = |w: &[f64]| {
        let prod: Vec<C64> = fb.iter().zip(w).map(|(z, c)| z * c).collect();
        let s = big.forward(&prod, RepLabel::new(t + 2)).unwrap();
        big.inverse(&s.scale_blocks(|l| l.bracket()))
    };
    let exact_comp: Vec<C64> = bracket_of(&c2b).iter().zip(&c1b).map(|(z, c)| z * c).collect();
    let exact_adj = bracket_of(&c1b);
    let ops = TaylorOps::new(2);
    let xb = RepLabel::new(4);
    let resid = |s: Symbol, exact: &[C64]| {
        let s = s.restricted(t, t).unwrap().resample(big.clone(), xb).unwrap();
        let v = s.quantize(&f).unwrap();
        let d: Vec<C64> = exact.iter().zip(&v.values).map(|(x, y)| x - y).collect();
        l2(&*big, &d) / fnorm
    };
    let comp = [0, 1, 2].map(|r| resid(compose(&a, &b, &ops, r, xb).unwrap(), &exact_comp));
    let adj = [0, 1, 2].map(|r| resid(adjoint_symbol(&a, &ops, r, xb).unwrap(), &exact_adj));
    (comp, adj)
}

/// `|| a^chi1(., l) - a^chi2(., l) ||_{L^2_x}` for a scalar symbol whose
/// x-spectrum at `eta` has size `|eta|^{-rho - 1/2}`.
fn cutoff_difference(rho: f64, twice_l: &[u32], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let xb = RepLabel::new(64);
    let c = SpectralFn::random(xb, 0, xb.twice_l, rng).map_blocks(|eta, b| {
        let w = if eta.twice_l == 0 { 1.0 } else { eta.freq().powf(-rho - 0.5) };
        let norm = SpectralFn::single(xb, eta, b.clone()).plancherel_sq().sqrt();
        b * C64::from(w / norm)
    });
    let c1 = AdmissibleCutoff::new(0.2, CutoffRule::Direct).unwrap();
    let c2 = AdmissibleCutoff::new(0.4, CutoffRule::Direct).unwrap();
    twice_l
        .iter()
        .map(|&t| {
            let l = RepLabel::new(t);
            c.scale_blocks(|eta| c1.eval(eta.freq(), l.freq()) - c2.eval(eta.freq(), l.freq()))
                .plancherel_sq()
                .sqrt()
        })
        .collect()
}

fn expansion_orders() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let labels = [6u32, 8, 10, 12, 14, 16];
    let mut comp = [Vec::new(), Vec::new(), Vec::new()];
    let mut adj = [Vec::new(), Vec::new(), Vec::new()];
    for &t in &labels {
        let (c, a) = expansion_residuals(t, &mut rng);
        for r in 0..3 {
            comp[r].push(c[r]);
            adj[r].push(a[r]);
        }
    }
    let x: Vec<f64> = labels.iter().map(|&t| RepLabel::new(t).bracket()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for r in 0..3 {
        let want = -(r as f64);
        let sc = loglog_slope(&x, &comp[r]);
        let sa = loglog_slope(&x, &adj[r]);
        ok &= (sc - want).abs() <= 0.3 && (sa - want).abs() <= 0.3;
        parts.push(format!("r={r}: compose {sc:.2}, adjoint {sa:.2} (order {want})"));
    }
    let rho = 1.5;
    let cut_labels: Vec<u32> = (8..=16).map(|l| 2 * l).collect();
    let cd = cutoff_difference(rho, &cut_labels, &mut rng);
    let xc: Vec<f64> = cut_labels.iter().map(|&t| RepLabel::new(t).bracket()).collect();
    let s_cut = loglog_slope(&xc, &cd);
    ok &= (s_cut + rho).abs() <= 0.3;
    parts.push(format!("cutoff change {s_cut:.2} (order {})", -rho));
    outcome(ok, format!("fitted exponents: {}", parts.join("; ")))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("1", "Plancherel and round trip", plancherel_round_trip),
        ("2", "representation identities", representation_identities),
        ("3", "spectral localization of products", spectral_localization),
        ("4", "DN on round spheres", flat_and_constant_dn),
        ("5", "DN symbol at zero height", flat_dn_symbol),
        ("6", "paralinearization quality", paralinearization_quality),
        ("7", "mean curvature", curvature),
        ("8", "dispersion relation", dispersion_relation),
        ("9", "conservation", conservation),
        ("10", "calculus expansion orders", expansion_orders),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let secs = t0.elapsed().as_secs_f64();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2} ({name}, {secs:.1} s): {}", o.detail);
        if !o.pass {
            if KNOWN_FAILURES.contains(&id) {
                if id == "7" && !geometric_multiplier_holds() {
                    unexpected.push(id);
                }
                println!("     known failure, see README");
            } else {
                unexpected.push(id);
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
