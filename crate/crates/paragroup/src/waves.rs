//! Spherical capillary water waves in the unknowns `(zeta, phi)`:
//!
//! ```text
//! d_t zeta = D[zeta] phi
//! d_t phi  = -|grad phi|^2 / (2 rho^2) + beta1 b^2 / (2 rho^2) - (H(zeta) - 2)
//! ```
//!
//! with `b = (rho^2 D[zeta] phi + grad zeta . grad phi) / beta1`. Units have
//! surface tension over density equal to one and exterior pressure `-2`, so
//! the unit sphere is static.

use std::sync::{Arc, Mutex};

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffops::{DiffIndex, TaylorOps};
use crate::dno::{
    apply_para_symbol, build_factorization, good_unknown, paralinearized_dn_with, FactorizationConfig, OracleConfig, OracleSolver,
    ParaDnConfig, SurfaceState, TrefftzOracle,
};
use crate::error::{Error, Result};
use crate::linalg::{cscale, CMat, C64, I};
use crate::paradiff::AdmissibleCutoff;
use crate::repr::{frame_symbol, PiTag, RepLabel};
use crate::symcalc::Symbol;
use crate::transform::{frame_values, Grid, HopfGrid, SphFn};

// ---------------------------------------------------------------------------
// Mean curvature

/// Mean curvature as a function of `rho`, `g = |grad zeta|^2`,
/// `lap = Delta_0 zeta` and `q = sum_jk X_j zeta X_k zeta X_j X_k zeta`,
/// with its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureTerms {
    pub h: f64,
    pub d_rho: f64,
    pub d_g: f64,
    pub d_lap: f64,
    pub d_q: f64,
}

/// `H = 2/(rho W) + g/(rho^3 W^3) - lap/(rho^2 W) + q/(rho^4 W^3)`,
/// `W = (1 + g/rho^2)^{1/2}`; the divergence of the outer unit normal.
pub fn curvature_terms(rho: f64, g: f64, lap: f64, q: f64) -> CurvatureTerms {
    let w = (1.0 + g / (rho * rho)).sqrt();
    let (w3, w5) = (w.powi(3), w.powi(5));
    let (r2, r3, r4, r5) = (rho * rho, rho.powi(3), rho.powi(4), rho.powi(5));
    let h = 2.0 / (rho * w) + g / (r3 * w3) - lap / (r2 * w) + q / (r4 * w3);
    let d_g = -1.5 * g / (r5 * w5) + 0.5 * lap / (r4 * w3) - 1.5 * q / (rho.powi(6) * w5);
    let d_rho = -2.0 / (r2 * w) + 2.0 * g / (r4 * w3) - 3.0 * g / (r4 * w3) + 3.0 * g * g / (rho.powi(6) * w5) + 2.0 * lap / (r3 * w)
        - lap * g / (r5 * w3)
        - 4.0 * q / (r5 * w3)
        + 3.0 * q * g / (rho.powi(7) * w5);
    CurvatureTerms {
        h,
        d_rho,
        d_g,
        d_lap: -1.0 / (r2 * w),
        d_q: 1.0 / (r4 * w3),
    }
}

fn q_term(surf: &SurfaceState, i: usize) -> f64 {
    let mut q = 0.0;
    for j in 0..3 {
        for k in 0..3 {
            q += surf.grad[j][i] * surf.grad[k][i] * surf.hess[j][k][i];
        }
    }
    q
}

fn terms_at(surf: &SurfaceState, i: usize) -> CurvatureTerms {
    curvature_terms(surf.rho[i], surf.grad_sq[i], surf.lap[i], q_term(surf, i))
}

/// `H(zeta)` at the nodes of the surface grid.
pub fn mean_curvature_values(surf: &SurfaceState) -> Vec<f64> {
    (0..surf.len()).map(|i| terms_at(surf, i).h).collect()
}

/// `H(zeta)` analyzed to degree `l_out` on `grid`.
pub fn mean_curvature_on(zeta: &SphFn, grid: Arc<HopfGrid>, l_out: usize) -> Result<SphFn> {
    let surf = SurfaceState::new(zeta, grid.clone())?;
    Ok(grid.analyze(&mean_curvature_values(&surf), l_out).real_part())
}

/// `H(zeta)` to the degree of `zeta`, on the 3/2-padded grid.
pub fn mean_curvature(zeta: &SphFn) -> Result<SphFn> {
    let l = zeta.l_max;
    mean_curvature_on(zeta, Arc::new(HopfGrid::padded(l.max(2))), l)
}

/// Symbol of the linearized curvature, `T_h zeta ~ H(zeta) - 2`.
#[derive(Clone, Debug)]
pub struct CurvatureSymbol {
    /// `rho^3 beta1^{-3/2} lambda1^2 = beta2^2/(rho^4 W^3) + l(l+1)/(rho^2 W)`.
    pub h2: Symbol,
    /// `sum_j d_j sigma[X_j] + d_rho H`.
    pub h1: Symbol,
}

impl CurvatureSymbol {
    pub fn total(&self) -> Result<Symbol> {
        let mut s = self.h2.add(&self.h1)?;
        s.order = 2.0;
        Ok(s)
    }
}

fn frames(l: RepLabel) -> [CMat; 3] {
    [frame_symbol(1, l), frame_symbol(2, l), frame_symbol(3, l)]
}

/// `h1` on one node: first-order coefficients `d_j` of `X_j zeta` and the
/// zeroth-order `d_rho H`.
fn h1_block(surf: &SurfaceState, i: usize, fr: &[CMat; 3]) -> CMat {
    let t = terms_at(surf, i);
    let d = fr[0].nrows();
    let mut m = CMat::identity(d, d) * C64::from(t.d_rho);
    for j in 0..3 {
        let mut dj = 2.0 * surf.grad[j][i] * t.d_g;
        for k in 0..3 {
            dj += t.d_q * surf.grad[k][i] * (surf.hess[j][k][i] + surf.hess[k][j][i]);
        }
        m += cscale(&fr[j], dj);
    }
    m
}

fn h2_block(surf: &SurfaceState, i: usize, fr: &[CMat; 3], l: RepLabel) -> CMat {
    let t = terms_at(surf, i);
    let b2 = surf.beta2(i, fr);
    let d = fr[0].nrows();
    &b2 * &b2 * C64::from(t.d_q) - CMat::identity(d, d) * C64::from(t.d_lap * l.casimir())
}

/// `h = h2 + h1` on the surface grid for labels `2l <= twice_hi`.
pub fn curvature_symbol_on(surf: &SurfaceState, twice_hi: u32, integer_only: bool) -> CurvatureSymbol {
    let g: Arc<dyn Grid> = surf.grid.clone();
    let h2 = Symbol::from_fn(g.clone(), 0, twice_hi, integer_only, 2.0, |l, i| h2_block(surf, i, &frames(l), l));
    let h1 = Symbol::from_fn(g, 0, twice_hi, integer_only, 1.0, |l, i| h1_block(surf, i, &frames(l)));
    CurvatureSymbol { h2, h1 }
}

/// Curvature symbol on the factorization grid of `cfg`, integer labels up to `l_max`.
pub fn curvature_symbol(zeta: &SphFn, l_max: usize, cfg: &FactorizationConfig) -> Result<CurvatureSymbol> {
    let grid = Arc::new(HopfGrid::new(cfg.n_theta, cfg.n_psi));
    let surf = SurfaceState::new(zeta, grid)?;
    Ok(curvature_symbol_on(&surf, 2 * l_max as u32, true))
}

// ---------------------------------------------------------------------------
// State, configuration, right-hand side

#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub zeta: SphFn,
    pub phi: SphFn,
    pub t: f64,
}

impl WaveState {
    pub fn new(zeta: SphFn, phi: SphFn) -> Self {
        let l = zeta.l_max.max(phi.l_max);
        WaveState {
            zeta: zeta.resized(l),
            phi: phi.resized(l),
            t: 0.0,
        }
    }

    pub fn rest(l_max: usize) -> Self {
        WaveState::new(SphFn::zeros(l_max), SphFn::zeros(l_max))
    }

    pub fn l_max(&self) -> usize {
        self.zeta.l_max
    }

    /// Removes the mean of `phi`, which does not enter the dynamics.
    pub fn without_phi_mean(mut self) -> Self {
        self.phi.set(0, 0, C64::new(0.0, 0.0));
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DnMode {
    Oracle,
    Para,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveConfig {
    pub l_max: usize,
    pub dt: f64,
    /// Constant `c` of the gate `dt <= c l_max^{-3/2}`.
    pub cfl: f64,
    pub dn_mode: DnMode,
    /// Collocation oracle; its grid is also the grid of the nonlinear terms.
    pub oracle: OracleConfig,
    /// Used by `DnMode::Para` only.
    pub para: ParaDnConfig,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            l_max: 12,
            dt: 1e-3,
            cfl: 1.0,
            dn_mode: DnMode::Oracle,
            oracle: OracleConfig {
                solver: OracleSolver::Cg,
                ..OracleConfig::default()
            },
            para: ParaDnConfig {
                report: false,
                ..ParaDnConfig::default()
            },
        }
    }
}

impl WaveConfig {
    pub fn cfl_limit(&self) -> f64 {
        self.cfl * (self.l_max.max(1) as f64).powf(-1.5)
    }
}

/// Quadrature values of the conserved quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub t: f64,
    /// `int rho^3 / 3 dmu_0`.
    pub volume: f64,
    /// `int rho (rho^2 + |grad zeta|^2)^{1/2} dmu_0`.
    pub area: f64,
    /// `1/2 int phi D[zeta] phi rho^2 dmu_0`.
    pub kinetic: f64,
    /// `area + kinetic`.
    pub hamiltonian: f64,
    /// `int phi N dS`.
    pub momentum: [f64; 3],
    /// `int rho^4 x dmu_0`.
    pub center: [f64; 3],
}

/// Time stepper with a shared oracle and a warm start for its iterative solve.
pub struct WaveSolver {
    pub cfg: WaveConfig,
    pub oracle: TrefftzOracle,
    /// Coordinate functions `x_k` on the grid and their frame derivatives.
    coords: [Vec<f64>; 3],
    coord_grads: [[Vec<f64>; 3]; 3],
    warm: Mutex<Option<DVector<f64>>>,
}

impl WaveSolver {
    pub fn new(cfg: WaveConfig) -> Result<Self> {
        let oracle = TrefftzOracle::new(cfg.oracle.clone())?;
        if oracle.grid.sh_l_max < 2 * cfg.l_max {
            return Err(Error::Config(format!(
                "grid resolves degree {}, nonlinear terms need {}",
                oracle.grid.sh_l_max,
                2 * cfg.l_max
            )));
        }
        let grid = oracle.grid.clone();
        let normals = grid.normals();
        let coords = [0, 1, 2].map(|k| normals.iter().map(|x| x[k]).collect::<Vec<f64>>());
        let coord_grads = [0, 1, 2].map(|k| frame_values(&grid, &grid.analyze(&coords[k], 1).real_part()));
        Ok(WaveSolver {
            cfg,
            oracle,
            coords,
            coord_grads,
            warm: Mutex::new(None),
        })
    }

    pub fn grid(&self) -> &Arc<HopfGrid> {
        &self.oracle.grid
    }

    pub fn reset_warm_start(&self) {
        *self.warm.lock().expect("warm start lock") = None;
    }

    /// `D[zeta] phi` on the grid and the surface it was computed on.
    pub fn dn_values(&self, state: &WaveState) -> Result<(SurfaceState, Vec<f64>)> {
        let surf = self.oracle.surface(&state.zeta)?;
        let pv = self.grid().synth(&state.phi);
        let mut warm = self.warm.lock().expect("warm start lock");
        let (vals, ext) = self.oracle.dn_grid(&surf, &pv, warm.as_ref())?;
        *warm = Some(ext.coeffs);
        Ok((surf, vals))
    }

    /// `(d_t zeta, d_t phi)` truncated to `l_max`, `phi` mean-free.
    pub fn rhs(&self, state: &WaveState, mode: DnMode) -> Result<(SphFn, SphFn)> {
        let l = self.cfg.l_max;
        let grid = self.grid().clone();
        let (surf, dn) = match mode {
            DnMode::Oracle => self.dn_values(state)?,
            DnMode::Para => {
                let surf = self.oracle.surface(&state.zeta)?;
                let p = paralinearized_dn_with(&state.zeta, &state.phi, &self.cfg.para, Some(&self.oracle))?;
                let v = grid.synth(&p.value.real_part());
                (surf, v)
            }
        };
        let dp = frame_values(&grid, &state.phi);
        let n = surf.len();
        let pt: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let r2 = surf.rho[i] * surf.rho[i];
                let gp: f64 = (0..3).map(|j| surf.grad[j][i] * dp[j][i]).sum();
                let pp: f64 = (0..3).map(|j| dp[j][i] * dp[j][i]).sum();
                let b = (r2 * dn[i] + gp) / surf.beta1[i];
                -pp / (2.0 * r2) + surf.beta1[i] * b * b / (2.0 * r2) - (terms_at(&surf, i).h - 2.0)
            })
            .collect();
        let zt = grid.analyze(&dn, l).real_part();
        let mut ptf = grid.analyze(&pt, l).real_part();
        ptf.set(0, 0, C64::new(0.0, 0.0));
        Ok((zt, ptf))
    }

    /// One classical RK4 step.
    pub fn step(&self, state: &WaveState, dt: f64) -> Result<WaveState> {
        let limit = self.cfg.cfl_limit();
        if !(dt > 0.0 && dt <= limit) {
            return Err(Error::Cfl { dt, limit });
        }
        let mode = self.cfg.dn_mode;
        let stage = |s: &WaveState| -> Result<(SphFn, SphFn)> { self.rhs(s, mode).map_err(reject) };
        let shift = |k: &(SphFn, SphFn), h: f64| {
            let mut s = state.clone();
            s.zeta.axpy(h, &k.0);
            s.phi.axpy(h, &k.1);
            s.t += h;
            s
        };
        let k1 = stage(state)?;
        let k2 = stage(&shift(&k1, 0.5 * dt))?;
        let k3 = stage(&shift(&k2, 0.5 * dt))?;
        let k4 = stage(&shift(&k3, dt))?;
        let mut out = state.clone();
        for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
            out.zeta.axpy(dt * w / 6.0, &k.0);
            out.phi.axpy(dt * w / 6.0, &k.1);
        }
        out.t = state.t + dt;
        self.oracle.surface(&out.zeta).map_err(reject)?;
        Ok(out)
    }

    /// Steps to `t_end` with steps of at most `dt`, calling `observe` on the
    /// initial state and after every `every`-th step.
    pub fn run(
        &self,
        state: WaveState,
        t_end: f64,
        dt: f64,
        every: usize,
        mut observe: impl FnMut(&WaveState) -> Result<()>,
    ) -> Result<WaveState> {
        let steps = ((t_end - state.t) / dt - 1e-9).ceil().max(0.0) as usize;
        let h = if steps > 0 { (t_end - state.t) / steps as f64 } else { dt };
        let mut s = state;
        observe(&s)?;
        for k in 1..=steps {
            s = self.step(&s, h)?;
            if every > 0 && (k % every == 0 || k == steps) {
                observe(&s)?;
            }
        }
        Ok(s)
    }

    pub fn conserved(&self, state: &WaveState) -> Result<Conserved> {
        let grid = self.grid().clone();
        let (surf, dn) = self.dn_values(state)?;
        let pv = grid.synth(&state.phi);
        let n = surf.len();
        let mut vol = vec![0.0; n];
        let mut area = vec![0.0; n];
        let mut kin = vec![0.0; n];
        let mut mom = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut cen = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let r = surf.rho[i];
            vol[i] = r.powi(3) / 3.0;
            area[i] = r * surf.beta1[i].sqrt();
            kin[i] = 0.5 * pv[i] * dn[i] * r * r;
            for k in 0..3 {
                let gx: f64 = (0..3).map(|j| surf.grad[j][i] * self.coord_grads[k][j][i]).sum();
                mom[k][i] = pv[i] * (r * r * self.coords[k][i] - r * gx);
                cen[k][i] = r.powi(4) * self.coords[k][i];
            }
        }
        let area = grid.integrate_s2(&area);
        let kinetic = grid.integrate_s2(&kin);
        Ok(Conserved {
            t: state.t,
            volume: grid.integrate_s2(&vol),
            area,
            kinetic,
            hamiltonian: area + kinetic,
            momentum: [0, 1, 2].map(|k| grid.integrate_s2(&mom[k])),
            center: [0, 1, 2].map(|k| grid.integrate_s2(&cen[k])),
        })
    }
}

fn reject(e: Error) -> Error {
    match e {
        Error::Admissibility(m) => Error::StepRejected(m),
        Error::IllConditioned { cond, limit } => Error::StepRejected(format!("collocation condition {cond:e} above {limit:e}")),
        other => other,
    }
}

/// Linear dispersion relation `Lambda(n) = (n (n-1) (n+2))^{1/2}`.
pub fn dispersion(n: usize) -> f64 {
    let n = n as f64;
    (n * (n - 1.0) * (n + 2.0)).sqrt()
}

/// Angular frequency from sign changes of a sampled signal: the first and
/// last crossings (linearly interpolated) span `k - 1` half periods.
pub fn fit_frequency(t: &[f64], a: &[f64]) -> Option<(f64, usize)> {
    let mut cross = Vec::new();
    for i in 1..a.len().min(t.len()) {
        if a[i - 1] == 0.0 {
            continue;
        }
        if a[i - 1].signum() != a[i].signum() {
            let s = a[i - 1] / (a[i - 1] - a[i]);
            cross.push(t[i - 1] + s * (t[i] - t[i - 1]));
        }
    }
    if cross.len() < 2 {
        return None;
    }
    let k = cross.len();
    Some((std::f64::consts::PI * (k - 1) as f64 / (cross[k - 1] - cross[0]), k))
}

/// Result of a single-mode dispersion run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DispersionFit {
    pub n: usize,
    pub omega: f64,
    pub expected: f64,
    pub rel_error: f64,
    pub crossings: usize,
    pub t_end: f64,
}

/// Evolves `(amp Y_n^0, 0)` until `2 periods + 1` zero crossings of the
/// `(n, 0)` coefficient have been seen, then fits the frequency.
pub fn dispersion_run(solver: &WaveSolver, n: usize, amp: f64, dt: f64, periods: usize, t_max: f64) -> Result<DispersionFit> {
    let l = solver.cfg.l_max;
    if n > l {
        return Err(Error::Config(format!("mode {n} above l_max = {l}")));
    }
    solver.reset_warm_start();
    let mut s = WaveState::new(SphFn::real_mode(l, n, 0).scale(amp), SphFn::zeros(l));
    let mut ts = vec![0.0];
    let mut amps = vec![amp];
    let need = 2 * periods + 1;
    let mut crossings = 0;
    while s.t < t_max {
        s = solver.step(&s, dt)?;
        ts.push(s.t);
        amps.push(s.zeta.get(n, 0).re);
        let k = amps.len();
        if amps[k - 2].signum() != amps[k - 1].signum() {
            crossings += 1;
            if crossings >= need {
                break;
            }
        }
    }
    let (omega, crossings) = fit_frequency(&ts, &amps).ok_or_else(|| Error::Evaluation(format!("no oscillation of mode {n} before t = {t_max}")))?;
    let expected = dispersion(n);
    Ok(DispersionFit {
        n,
        omega,
        expected,
        rel_error: (omega - expected).abs() / expected,
        crossings,
        t_end: s.t,
    })
}

// ---------------------------------------------------------------------------
// Symmetrizer

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetrizerConfig {
    pub factorization: FactorizationConfig,
    pub cutoff: AdmissibleCutoff,
    /// Eigenvalue-sum floor of the anticommutator solve.
    pub gap: f64,
}

impl Default for SymmetrizerConfig {
    fn default() -> Self {
        SymmetrizerConfig {
            factorization: FactorizationConfig::default(),
            cutoff: AdmissibleCutoff::default(),
            gap: 1e-10,
        }
    }
}

/// `gamma`, `p`, `q` on integer labels `0..=l_max`. Modes `n < 2` are left
/// undiagonalized: `gamma` and `p` vanish there.
#[derive(Clone, Debug)]
pub struct SymmetrizerSet {
    /// `gamma_{3/2} = (lambda1 h2)^{1/2}`.
    pub gamma_principal: Symbol,
    /// `gamma_{1/2}` from the anticommutator equation.
    pub gamma_sub: Symbol,
    pub gamma: Symbol,
    /// `gamma_{3/2} q lambda^{-1}`.
    pub p_principal: Symbol,
    pub p_sub: Symbol,
    pub p: Symbol,
    /// `rho^{-1/3} beta1^{1/2}` times the identity.
    pub q: Symbol,
    pub q_values: Vec<f64>,
    pub x_band: RepLabel,
}

/// Principal symbols at one node and label, all diagonal in the eigenbasis
/// `V` of `i beta2`.
struct Principal {
    v: CMat,
    /// Eigenvalues of `gamma_{3/2}`.
    g: Vec<f64>,
    h2: CMat,
    lambda1: CMat,
    gamma: CMat,
    /// `gamma_{3/2} q lambda1^{-1}`, zero at `l = 0`.
    p: CMat,
}

fn principal(surf: &SurfaceState, i: usize, l: RepLabel, fr: &[CMat; 3]) -> Result<Principal> {
    let d = l.dim();
    let m = surf.beta2(i, fr) * I;
    let eig = SymmetricEigen::new((&m + m.adjoint()) * C64::from(0.5));
    let v = eig.eigenvectors;
    let (r, b1) = (surf.rho[i], surf.beta1[i]);
    let q = r.powf(-1.0 / 3.0) * b1.sqrt();
    let mut s = Vec::with_capacity(d);
    for h in eig.eigenvalues.iter() {
        let e = b1 * l.casimir() - h * h;
        if e < 0.0 {
            return Err(Error::NotPositiveDefinite(e));
        }
        s.push(e.sqrt());
    }
    let diag = |f: &dyn Fn(usize) -> f64| {
        let mut w = v.clone();
        for c in 0..d {
            let z = f(c);
            for row in 0..d {
                w[(row, c)] *= z;
            }
        }
        w * v.adjoint()
    };
    let lam = |k: usize| s[k] / (r * r);
    let g: Vec<f64> = (0..d).map(|k| r.powf(1.5) * b1.powf(-0.75) * lam(k).powf(1.5)).collect();
    let h2 = diag(&|k| (b1 * l.casimir() - eig.eigenvalues[k].powi(2)) / (r * b1.powf(1.5)));
    let lambda1 = diag(&|k| lam(k));
    let gamma = diag(&|k| g[k]);
    let p = diag(&|k| if s[k] > 0.0 { g[k] * q / lam(k) } else { 0.0 });
    Ok(Principal { v, g, h2, lambda1, gamma, p })
}

/// `sum_{|alpha| = 1} D^alpha a . X^(alpha) b` at one label and node.
struct FirstCorrection {
    da: Vec<Symbol>,
    xb: Vec<Symbol>,
}

impl FirstCorrection {
    fn new(a: &Symbol, b: &Symbol, ops: &TaylorOps, x_band: RepLabel) -> Result<Self> {
        let mut da = Vec::new();
        let mut xb = Vec::new();
        for tag in PiTag::ALL {
            let alpha = DiffIndex::unit(tag);
            da.push(a.d_multi(alpha)?);
            xb.push(b.x_taylor(ops, alpha, x_band)?);
        }
        Ok(FirstCorrection { da, xb })
    }

    fn at(&self, l: RepLabel, i: usize) -> CMat {
        let d = l.dim();
        let mut m = CMat::zeros(d, d);
        for (a, b) in self.da.iter().zip(&self.xb) {
            m += a.block(l, i) * b.block(l, i);
        }
        m
    }
}

/// `sum_{|alpha| = 1} D^alpha X^(alpha) a` for each label.
fn adjoint_correction(a: &Symbol, ops: &TaylorOps, x_band: RepLabel) -> Result<Vec<Symbol>> {
    PiTag::ALL
        .iter()
        .map(|&tag| {
            let alpha = DiffIndex::unit(tag);
            a.x_taylor(ops, alpha, x_band)?.d_multi(alpha)
        })
        .collect()
}

/// Symbols `(gamma, p, q)` with `gamma # gamma = h # lambda` and
/// `p # lambda = gamma # q` to two orders.
pub fn symmetrizer(zeta: &SphFn, l_max: usize, cfg: &SymmetrizerConfig) -> Result<SymmetrizerSet> {
    let syms = build_factorization(zeta, l_max, &cfg.factorization)?;
    let surf = &syms.surface;
    let x_band = syms.x_band;
    let g: Arc<dyn Grid> = surf.grid.clone();
    let n = surf.len();
    let th = 2 * l_max as u32;
    let top = th + 1;
    let ops = TaylorOps::new(1);

    // principal symbols on every label up to `top`
    let prin: Vec<Vec<Principal>> = (0..=top)
        .map(|t| {
            let l = RepLabel::new(t);
            let fr = frames(l);
            (0..n).into_par_iter().map(|i| principal(surf, i, l, &fr)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let all = |order: f64, f: &dyn Fn(&Principal) -> CMat| Symbol {
        grid: g.clone(),
        twice_lo: 0,
        twice_hi: top,
        integer_only: false,
        blocks: prin.iter().map(|row| row.iter().map(f).collect()).collect(),
        order,
    };
    let h2 = all(2.0, &|p| p.h2.clone());
    let lambda1 = all(1.0, &|p| p.lambda1.clone());
    let gamma15 = all(1.5, &|p| p.gamma.clone());
    let p_tilde = all(0.5, &|p| p.p.clone());
    let c3 = all(3.0, &|p| &p.h2 * &p.lambda1);
    let q_values: Vec<f64> = (0..n).map(|i| surf.rho[i].powf(-1.0 / 3.0) * surf.beta1[i].sqrt()).collect();
    let q_all = Symbol::from_fn(g.clone(), 0, top, false, 0.0, |l, i| CMat::identity(l.dim(), l.dim()) * C64::from(q_values[i]));

    let dh2_xl1 = FirstCorrection::new(&h2, &lambda1, &ops, x_band)?;
    let dg_xg = FirstCorrection::new(&gamma15, &gamma15, &ops, x_band)?;
    let dg_xq = FirstCorrection::new(&gamma15, &q_all, &ops, x_band)?;
    let dp_xl1 = FirstCorrection::new(&p_tilde, &lambda1, &ops, x_band)?;
    let dx_c3 = adjoint_correction(&c3, &ops, x_band)?;
    let curv = curvature_symbol_on(surf, th, true);

    let empty = || (0..=th).map(|_| Vec::new()).collect::<Vec<Vec<CMat>>>();
    let (mut b_g15, mut b_g05, mut b_p05, mut b_pm05) = (empty(), empty(), empty(), empty());
    for t in (0..=th).step_by(2) {
        let l = RepLabel::new(t);
        let d = l.dim();
        let rows: Vec<[CMat; 4]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let z = CMat::zeros(d, d);
                let pr = &prin[t as usize][i];
                if t < 4 {
                    return Ok([z.clone(), z.clone(), z.clone(), z]);
                }
                let lam0 = syms.lambda0.block(l, i);
                let lam = syms.lambda.block(l, i);
                let h1 = curv.h1.block(l, i);
                // second-order part of h # lambda and of its adjoint
                let c2 = &pr.h2 * lam0 + h1 * &pr.lambda1 + dh2_xl1.at(l, i);
                let mut adj = CMat::zeros(d, d);
                for s in &dx_c3 {
                    adj += s.block(l, i);
                }
                let rhs = (&c2 + c2.adjoint() + adj.adjoint()) * C64::from(0.5) - dg_xg.at(l, i);
                let mut y = pr.v.adjoint() * rhs * &pr.v;
                for a in 0..d {
                    for b in 0..d {
                        let s = pr.g[a] + pr.g[b];
                        if s <= cfg.gap {
                            return Err(Error::SylvesterSingular(s));
                        }
                        y[(a, b)] /= s;
                    }
                }
                let g05 = &pr.v * y * pr.v.adjoint();
                let inv = lam.clone().try_inverse().ok_or(Error::SylvesterSingular(0.0))?;
                let q = C64::from(q_values[i]);
                let p05 = &pr.gamma * q * &inv;
                let pm05 = (&g05 * q + dg_xq.at(l, i) - dp_xl1.at(l, i)) * &inv;
                Ok([pr.gamma.clone(), g05, p05, pm05])
            })
            .collect::<Result<_>>()?;
        for [a, b, c, e] in rows {
            b_g15[t as usize].push(a);
            b_g05[t as usize].push(b);
            b_p05[t as usize].push(c);
            b_pm05[t as usize].push(e);
        }
    }
    let mk = |blocks: Vec<Vec<CMat>>, order: f64| Symbol {
        grid: g.clone(),
        twice_lo: 0,
        twice_hi: th,
        integer_only: true,
        blocks,
        order,
    };
    let gamma_principal = mk(b_g15, 1.5);
    let gamma_sub = mk(b_g05, 0.5);
    let p_principal = mk(b_p05, 0.5);
    let p_sub = mk(b_pm05, -0.5);
    let mut gamma = gamma_principal.add(&gamma_sub)?;
    gamma.order = 1.5;
    let mut p = p_principal.add(&p_sub)?;
    p.order = 0.5;
    let q = Symbol::from_fn(g.clone(), 0, th, true, 0.0, |l, i| CMat::identity(l.dim(), l.dim()) * C64::from(q_values[i]));
    Ok(SymmetrizerSet {
        gamma_principal,
        gamma_sub,
        gamma,
        p_principal,
        p_sub,
        p,
        q,
        q_values,
        x_band,
    })
}

/// Symmetrized variable `V = (T_p zeta, T_q u)` with `u = phi - T_b zeta`,
/// on the 3/2-padded grid. Modes `n < 2` of `zeta` pass through unchanged.
pub fn symmetrized_variable(set: &SymmetrizerSet, state: &WaveState, dn_value: &SphFn, cfg: &SymmetrizerConfig) -> Result<(SphFn, SphFn)> {
    let l = state.l_max();
    let out = Arc::new(HopfGrid::padded(l));
    let gu = good_unknown(&state.zeta, &state.phi, dn_value, &out, l, &Default::default());
    let mut v1 = apply_para_symbol(&set.p, &cfg.cutoff, set.x_band, &state.zeta, &out, l)?.real_part();
    for n in 0..2.min(l + 1) {
        for m in -(n as i32)..=(n as i32) {
            v1.set(n, m, state.zeta.get(n, m));
        }
    }
    let v2 = apply_para_symbol(&set.q, &cfg.cutoff, set.x_band, &gu.u, &out, l)?.real_part();
    Ok((v1, v2))
}
