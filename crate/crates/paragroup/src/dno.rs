//! Dirichlet-Neumann operator of the star-shaped surface `r = 1 + zeta`.
//!
//! Two independent routes are provided. [`TrefftzOracle`] expands the
//! harmonic extension in interior harmonics `r^n Y_n^m` and collocates on
//! the surface; [`build_factorization`] computes the symbols of the
//! factorized elliptic problem, from which [`paralinearized_dn`] assembles
//! `T_lambda(phi - T_b zeta) - T_v . grad zeta`.
//!
//! Shell coordinates: `r = rho(x) + y` with `rho = 1 + zeta`, so `d/dy` is
//! the radial derivative and `y = 0` is the surface.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chebyshev, cscale, CMat, C64, I};
use crate::paradiff::{paraproduct_sph, AdmissibleCutoff, ParaOptions};
use crate::repr::{frame_symbol, PiTag, RepLabel};
use crate::symcalc::Symbol;
use crate::transform::{frame_values, Grid, HopfGrid, SphFn};

/// Grid values of the geometric quantities of a surface.
#[derive(Clone, Debug)]
pub struct SurfaceState {
    pub zeta: SphFn,
    pub grid: Arc<HopfGrid>,
    pub rho: Vec<f64>,
    /// `X_j zeta`, `j = 1, 2, 3`.
    pub grad: [Vec<f64>; 3],
    /// `|grad zeta|^2`.
    pub grad_sq: Vec<f64>,
    /// `Delta_0 zeta`.
    pub lap: Vec<f64>,
    /// `rho^2 + |grad zeta|^2`.
    pub beta1: Vec<f64>,
    /// `-Delta_0 zeta + 2 rho`.
    pub beta3: Vec<f64>,
    /// `hess[k][j] = X_k X_j zeta`.
    pub hess: [[Vec<f64>; 3]; 3],
}

impl SurfaceState {
    pub fn new(zeta: &SphFn, grid: Arc<HopfGrid>) -> Result<Self> {
        let z = grid.synth(zeta);
        let sup = HopfGrid::max_abs(&z);
        if !(sup < 0.5) {
            return Err(Error::Admissibility(format!("|zeta|_inf = {sup:.4} is not below 1/2")));
        }
        let grad = frame_values(&grid, zeta);
        let n = z.len();
        let grad_sq: Vec<f64> = (0..n).map(|i| grad.iter().map(|g| g[i] * g[i]).sum()).collect();
        let lap = grid.synth(&zeta.laplacian());
        let first: Vec<SphFn> = (1..=3).map(|j| zeta.frame_derivative(j)).collect();
        let hess = [0, 1, 2].map(|k| [0, 1, 2].map(|j| grid.synth(&first[j].frame_derivative(k + 1))));
        let rho: Vec<f64> = z.iter().map(|v| 1.0 + v).collect();
        let beta1: Vec<f64> = (0..n).map(|i| rho[i] * rho[i] + grad_sq[i]).collect();
        let beta3 = (0..n).map(|i| -lap[i] + 2.0 * rho[i]).collect();
        if beta1.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Admissibility("beta1 is not positive on the grid".into()));
        }
        Ok(SurfaceState {
            zeta: zeta.clone(),
            grid,
            rho,
            grad,
            grad_sq,
            lap,
            beta1,
            beta3,
            hess,
        })
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `sup |zeta| + sup |grad zeta|` on the grid.
    pub fn c1_norm(&self) -> f64 {
        let z = self.rho.iter().fold(0.0_f64, |a, r| a.max((r - 1.0).abs()));
        let g = self.grad_sq.iter().fold(0.0_f64, |a, v| a.max(v.sqrt()));
        z + g
    }

    /// `beta1` at depth `y`.
    pub fn beta1_at(&self, i: usize, y: f64) -> f64 {
        let r = self.rho[i] + y;
        r * r + self.grad_sq[i]
    }

    /// `beta2(x, l) = sum_j X_j zeta(x) sigma[X_j](l)`, skew-Hermitian.
    pub fn beta2(&self, i: usize, frames: &[CMat; 3]) -> CMat {
        let mut m = cscale(&frames[0], self.grad[0][i]);
        m += cscale(&frames[1], self.grad[1][i]);
        m += cscale(&frames[2], self.grad[2][i]);
        m
    }

    pub fn beta2_symbol(&self, twice_hi: u32, integer_only: bool) -> Symbol {
        let frames = FrameCache::new(twice_hi);
        Symbol::from_fn(self.grid.clone(), 0, twice_hi, integer_only, 1.0, |l, i| {
            self.beta2(i, frames.get(l))
        })
    }
}

struct FrameCache(Vec<[CMat; 3]>);

impl FrameCache {
    fn new(twice_hi: u32) -> Self {
        FrameCache(
            (0..=twice_hi)
                .map(|t| {
                    let l = RepLabel::new(t);
                    [frame_symbol(1, l), frame_symbol(2, l), frame_symbol(3, l)]
                })
                .collect(),
        )
    }

    fn get(&self, l: RepLabel) -> &[CMat; 3] {
        &self.0[l.twice_l as usize]
    }
}

// ---------------------------------------------------------------------------
// Trefftz oracle

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleSolver {
    /// Truncated-SVD least squares with a condition-number check.
    Svd,
    /// Conjugate gradients on the normal equations, warm-startable.
    Cg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_max: usize,
    pub n_theta: usize,
    pub n_psi: usize,
    pub cond_limit: f64,
    pub residual_tol: f64,
    pub solver: OracleSolver,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_max: 16,
            n_theta: 24,
            n_psi: 48,
            cond_limit: 1e12,
            residual_tol: 1e-6,
            solver: OracleSolver::Svd,
            cg_tol: 1e-14,
            cg_max_iter: 500,
        }
    }
}

/// Coefficients of `Phi = sum_k c_k r^{n_k} Y_k` over the real harmonics.
#[derive(Clone, Debug)]
pub struct HarmonicExtension {
    pub coeffs: DVector<f64>,
    /// Relative boundary residual in `L^2(dmu_0)`.
    pub residual: f64,
    /// Only computed by the SVD solver.
    pub cond: Option<f64>,
    pub iterations: usize,
}

/// Interior-harmonic collocation on a fixed Hopf grid.
pub struct TrefftzOracle {
    pub cfg: OracleConfig,
    pub grid: Arc<HopfGrid>,
    /// `(n, m)` of each real basis function.
    pub basis: Vec<(usize, i32)>,
    /// `y[(i, k)] = Y_k(x_i)`.
    y: DMatrix<f64>,
    /// `X_j Y_k(x_i)`.
    xy: [DMatrix<f64>; 3],
    sqrt_w: Vec<f64>,
}

impl TrefftzOracle {
    pub fn new(cfg: OracleConfig) -> Result<Self> {
        let grid = Arc::new(HopfGrid::new(cfg.n_theta, cfg.n_psi));
        if grid.sh_l_max < 2 * cfg.n_max {
            return Err(Error::Config(format!(
                "oracle grid {}x{} resolves degree {}, needs {} for n_max = {}",
                cfg.n_theta,
                cfg.n_psi,
                grid.sh_l_max,
                2 * cfg.n_max,
                cfg.n_max
            )));
        }
        let basis: Vec<(usize, i32)> = (0..=cfg.n_max)
            .flat_map(|n| (-(n as i32)..=(n as i32)).map(move |m| (n, m)))
            .collect();
        let cols: Vec<[Vec<f64>; 4]> = basis
            .par_iter()
            .map(|&(n, m)| {
                let f = SphFn::real_mode(n, n, m);
                let d = frame_values(&grid, &f);
                let [a, b, c] = d;
                [grid.synth(&f), a, b, c]
            })
            .collect();
        let nn = grid.len();
        let k = basis.len();
        let mk = |s: usize| DMatrix::from_fn(nn, k, |i, j| cols[j][s][i]);
        let sqrt_w = (0..nn)
            .map(|i| (grid.theta_weight[i / grid.n_psi] * 4.0 * std::f64::consts::PI / grid.n_psi as f64).sqrt())
            .collect();
        Ok(TrefftzOracle {
            y: mk(0),
            xy: [mk(1), mk(2), mk(3)],
            cfg,
            grid,
            basis,
            sqrt_w,
        })
    }

    pub fn surface(&self, zeta: &SphFn) -> Result<SurfaceState> {
        SurfaceState::new(zeta, self.grid.clone())
    }

    /// Weighted collocation matrix `sqrt(w_i) rho_i^{n_k} Y_k(x_i)`.
    pub fn collocation_matrix(&self, s: &SurfaceState) -> DMatrix<f64> {
        let pw = self.powers(s, 0);
        DMatrix::from_fn(self.y.nrows(), self.y.ncols(), |i, k| self.sqrt_w[i] * pw[(i, self.basis[k].0)] * self.y[(i, k)])
    }

    /// `rho_i^{n + shift}` for `n = 0..=n_max`.
    fn powers(&self, s: &SurfaceState, shift: i32) -> DMatrix<f64> {
        DMatrix::from_fn(s.len(), self.cfg.n_max + 1, |i, n| s.rho[i].powi(n as i32 + shift))
    }

    /// `(rho_max / rho_min)^n_max`, a lower bound for the condition number
    /// of the collocation system.
    pub fn conditioning_bound(&self, s: &SurfaceState) -> f64 {
        let lo = s.rho.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.rho.iter().cloned().fold(0.0, f64::max);
        (hi / lo).powi(self.cfg.n_max as i32)
    }

    /// Solves `Phi|_surface = phi` given boundary values on the grid.
    pub fn extend(&self, s: &SurfaceState, phi: &[f64], warm: Option<&DVector<f64>>) -> Result<HarmonicExtension> {
        let bound = self.conditioning_bound(s);
        if bound > self.cfg.cond_limit {
            return Err(Error::IllConditioned {
                cond: bound,
                limit: self.cfg.cond_limit,
            });
        }
        let a = self.collocation_matrix(s);
        let b = DVector::from_fn(phi.len(), |i, _| self.sqrt_w[i] * phi[i]);
        let (coeffs, cond, iterations) = match self.cfg.solver {
            OracleSolver::Svd => {
                let svd = a.clone().svd(true, true);
                let smax = svd.singular_values.max();
                let smin = svd.singular_values.min();
                let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
                if cond > self.cfg.cond_limit {
                    return Err(Error::IllConditioned {
                        cond,
                        limit: self.cfg.cond_limit,
                    });
                }
                let c = svd.solve(&b, smax / self.cfg.cond_limit).map_err(|e| Error::Evaluation(e.to_string()))?;
                (c, Some(cond), 0)
            }
            OracleSolver::Cg => {
                let (c, it) = cg_normal(&a, &b, warm, self.cfg.cg_tol, self.cfg.cg_max_iter);
                (c, None, it)
            }
        };
        let bn = b.norm();
        let residual = if bn > 0.0 { (&a * &coeffs - &b).norm() / bn } else { (&a * &coeffs).norm() };
        if !(residual <= self.cfg.residual_tol) {
            return Err(Error::Residual {
                residual,
                tol: self.cfg.residual_tol,
            });
        }
        Ok(HarmonicExtension {
            coeffs,
            residual,
            cond,
            iterations,
        })
    }

    /// `D[zeta] phi = d_r Phi - grad zeta . grad_x Phi / rho^2` at the nodes.
    pub fn dn_values(&self, s: &SurfaceState, ext: &HarmonicExtension) -> Vec<f64> {
        let c = &ext.coeffs;
        let pw = self.powers(s, -2);
        let nn = s.len();
        (0..nn)
            .into_par_iter()
            .map(|i| {
                let r = s.rho[i];
                let mut v = 0.0;
                for (k, &(n, _)) in self.basis.iter().enumerate() {
                    let p = pw[(i, n)];
                    let dot: f64 = (0..3).map(|j| s.grad[j][i] * self.xy[j][(i, k)]).sum();
                    v += c[k] * p * (n as f64 * r * self.y[(i, k)] - dot);
                }
                v
            })
            .collect()
    }

    /// Harmonic extension evaluated back on the surface.
    pub fn trace_values(&self, s: &SurfaceState, ext: &HarmonicExtension) -> Vec<f64> {
        let a = self.collocation_matrix(s);
        let v = a * &ext.coeffs;
        v.iter().zip(&self.sqrt_w).map(|(x, w)| x / w).collect()
    }

    /// DN values on the grid for boundary data given on the grid.
    pub fn dn_grid(&self, s: &SurfaceState, phi: &[f64], warm: Option<&DVector<f64>>) -> Result<(Vec<f64>, HarmonicExtension)> {
        let ext = self.extend(s, phi, warm)?;
        Ok((self.dn_values(s, &ext), ext))
    }

    pub fn dn(&self, zeta: &SphFn, phi: &SphFn, l_out: usize) -> Result<OracleDn> {
        let s = self.surface(zeta)?;
        let pv = self.grid.synth(phi);
        let (vals, ext) = self.dn_grid(&s, &pv, None)?;
        Ok(OracleDn {
            value: self.grid.analyze(&vals, l_out),
            values: vals,
            residual: ext.residual,
            cond: ext.cond,
        })
    }
}

#[derive(Clone, Debug)]
pub struct OracleDn {
    pub value: SphFn,
    /// Values on the oracle grid.
    pub values: Vec<f64>,
    pub residual: f64,
    pub cond: Option<f64>,
}

fn cg_normal(a: &DMatrix<f64>, b: &DVector<f64>, warm: Option<&DVector<f64>>, tol: f64, max_iter: usize) -> (DVector<f64>, usize) {
    let k = a.ncols();
    let mut x = match warm {
        Some(w) if w.len() == k => w.clone(),
        _ => DVector::zeros(k),
    };
    let atb = a.tr_mul(b);
    let scale = atb.norm().max(f64::MIN_POSITIVE);
    let mut r = &atb - a.tr_mul(&(a * &x));
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut it = 0;
    while it < max_iter && rr.sqrt() > tol * scale {
        let ap = a * &p;
        let q = a.tr_mul(&ap);
        let alpha = rr / p.dot(&q);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &q, 1.0);
        let rr_new = r.norm_squared();
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
        it += 1;
    }
    (x, it)
}

/// `D[zeta] phi` from the Trefftz oracle, truncated to degree
/// `max(zeta.l_max, phi.l_max)`.
pub fn oracle_dn(zeta: &SphFn, phi: &SphFn, cfg: &OracleConfig) -> Result<OracleDn> {
    let o = TrefftzOracle::new(cfg.clone())?;
    o.dn(zeta, phi, zeta.l_max.max(phi.l_max))
}

// ---------------------------------------------------------------------------
// Factorization symbols

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum YDerivative {
    /// Spectral differentiation on this many Chebyshev nodes in `[-1/2, 0]`.
    Chebyshev(usize),
    /// Closed form `d_y s = (rho + y) l(l+1) / s` on the eigenvalues of `S`.
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationConfig {
    pub n_theta: usize,
    pub n_psi: usize,
    /// x-band of the regularization applied by [`apply_para_symbol`].
    pub x_band: usize,
    pub y_derivative: YDerivative,
    pub c1_gate: f64,
    pub enforce_gate: bool,
    pub sylvester_gap: f64,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        FactorizationConfig {
            n_theta: 13,
            n_psi: 25,
            x_band: 12,
            y_derivative: YDerivative::Chebyshev(16),
            c1_gate: 0.1,
            enforce_gate: true,
            sylvester_gap: 1e-10,
        }
    }
}

/// Symbols at the surface `y = 0`. Use [`first_order_layer`] for other depths.
#[derive(Clone, Debug)]
pub struct DnSymbols {
    pub surface: SurfaceState,
    /// `S / rho^2` with `S = (beta2^2 + beta1 l(l+1))^{1/2}`; integer labels.
    pub lambda1: Symbol,
    /// `beta1 A0 / rho^2`.
    pub lambda0: Symbol,
    pub lambda: Symbol,
    /// `(beta2 - S) / beta1` on all labels up to `2 l_max + 1`.
    pub a1: Symbol,
    /// `(beta2 + S) / beta1`.
    pub cap_a1: Symbol,
    /// `Pi_+ A1, Pi_- A1, Pi_0 A1` from the closed-form x-derivatives.
    pub pi_cap_a1: [Symbol; 3],
    pub a0: Symbol,
    pub cap_a0: Symbol,
    pub x_band: RepLabel,
}

/// `i beta2(x, l) = V diag(h) V^*`. Every first-order symbol is a function
/// of `beta2` and `beta1`, so they share this basis.
struct Spectral {
    v: CMat,
    h: Vec<f64>,
}

impl Spectral {
    fn new(surf: &SurfaceState, i: usize, frames: &[CMat; 3]) -> Self {
        let d = frames[0].nrows();
        if d == 1 {
            return Spectral {
                v: CMat::identity(1, 1),
                h: vec![0.0],
            };
        }
        let m = surf.beta2(i, frames) * I;
        let m = (&m + m.adjoint()) * C64::from(0.5);
        let eig = SymmetricEigen::new(m);
        Spectral {
            v: eig.eigenvectors,
            h: eig.eigenvalues.iter().cloned().collect(),
        }
    }

    /// Eigenvalues of `S` at depth `y`: `(beta1(y) l(l+1) - h^2)^{1/2}`.
    fn s(&self, b1: f64, l: RepLabel) -> Result<Vec<f64>> {
        if l.twice_l == 0 {
            return Ok(vec![0.0]);
        }
        self.h
            .iter()
            .map(|h| {
                let e = b1 * l.casimir() - h * h;
                if e > 0.0 {
                    Ok(e.sqrt())
                } else {
                    Err(Error::NotPositiveDefinite(e))
                }
            })
            .collect()
    }

    fn from_diag(&self, d: impl Fn(usize) -> C64) -> CMat {
        let n = self.h.len();
        let mut m = self.v.clone();
        for c in 0..n {
            let z = d(c);
            for r in 0..n {
                m[(r, c)] *= z;
            }
        }
        m * self.v.adjoint()
    }

    fn to_basis(&self, m: &CMat) -> CMat {
        self.v.adjoint() * m * &self.v
    }

    fn from_basis(&self, m: &CMat) -> CMat {
        &self.v * m * self.v.adjoint()
    }

    /// Eigenvalues of `(beta2 -+ S) / beta1`.
    fn first_order(&self, s: &[f64], b1: f64, sign: f64) -> Vec<C64> {
        self.h.iter().zip(s).map(|(h, s)| C64::new(sign * s, -h) / b1).collect()
    }
}

/// `(a1, A1)` at depth `y` on every label `2l <= twice_hi`.
pub fn first_order_layer(surf: &SurfaceState, y: f64, twice_hi: u32) -> Result<(Symbol, Symbol)> {
    let frames = FrameCache::new(twice_hi);
    let g: Arc<dyn Grid> = surf.grid.clone();
    let mk = |sign: f64| {
        Symbol::try_from_fn(g.clone(), 0, twice_hi, false, 1.0, |l, i| {
            let sp = Spectral::new(surf, i, frames.get(l));
            let b1 = surf.beta1_at(i, y);
            let e = sp.first_order(&sp.s(b1, l)?, b1, sign);
            Ok(sp.from_diag(|k| e[k]))
        })
    };
    Ok((mk(-1.0)?, mk(1.0)?))
}

fn check_gate(surf: &SurfaceState, gate: f64, enforce: bool) -> Result<()> {
    let c1 = surf.c1_norm();
    if c1 > gate {
        if enforce {
            return Err(Error::Admissibility(format!("|zeta|_C1 = {c1:.4} exceeds the smallness gate {gate}")));
        }
        warn!("|zeta|_C1 = {c1:.4} exceeds the smallness gate {gate}; symbols may be inaccurate");
    }
    Ok(())
}

/// Per-node data at one integer label.
struct NodeBlocks {
    cap_a1: CMat,
    dy_cap_a1: CMat,
    pi_cap_a1: [CMat; 3],
    s: CMat,
    sp: Spectral,
    /// Eigenvalues of `a1` and `A1`.
    ea: Vec<C64>,
    ecap: Vec<C64>,
}

fn node_blocks(surf: &SurfaceState, i: usize, l: RepLabel, frames: &[CMat; 3], cheb: Option<&(Vec<f64>, DMatrix<f64>)>) -> Result<NodeBlocks> {
    let sp = Spectral::new(surf, i, frames);
    let b1 = surf.beta1[i];
    let r = surf.rho[i];
    let s = sp.s(b1, l)?;
    let ea = sp.first_order(&s, b1, -1.0);
    let ecap = sp.first_order(&s, b1, 1.0);
    let d = l.dim();
    let cap_a1 = sp.from_diag(|k| ecap[k]);
    let s_mat = sp.from_diag(|k| C64::from(s[k]));
    if l.twice_l == 0 {
        let z = CMat::zeros(1, 1);
        return Ok(NodeBlocks {
            cap_a1,
            dy_cap_a1: z.clone(),
            pi_cap_a1: [z.clone(), z.clone(), z],
            s: s_mat,
            sp,
            ea,
            ecap,
        });
    }
    let dy: Vec<C64> = match cheb {
        Some((nodes, dm)) => {
            let mut acc = vec![C64::new(0.0, 0.0); d];
            for (k, &y) in nodes.iter().enumerate() {
                let b1y = surf.beta1_at(i, y);
                let e = sp.first_order(&sp.s(b1y, l)?, b1y, 1.0);
                for (a, v) in acc.iter_mut().zip(e) {
                    *a += v * dm[(0, k)];
                }
            }
            acc
        }
        None => (0..d)
            .map(|k| C64::from(r * l.casimir() / s[k]) / b1 - ecap[k] * (2.0 * r / b1))
            .collect(),
    };
    let dy_cap_a1 = sp.from_diag(|k| dy[k]);

    // X_k A1 = (X_k beta2 + X_k S)/beta1 - A1 X_k beta1 / beta1,
    // with X_k S solving S X + X S = X_k (beta2^2 + beta1 l(l+1)).
    let b2 = surf.beta2(i, frames);
    let mut xa: Vec<CMat> = Vec::with_capacity(3);
    for k in 0..3 {
        let mut xb2 = CMat::zeros(d, d);
        for j in 0..3 {
            xb2 += cscale(&frames[j], surf.hess[k][j][i]);
        }
        let xb1 = 2.0 * r * surf.grad[k][i] + 2.0 * (0..3).map(|j| surf.grad[j][i] * surf.hess[k][j][i]).sum::<f64>();
        let xm = &xb2 * &b2 + &b2 * &xb2 + CMat::identity(d, d) * C64::from(xb1 * l.casimir());
        let mut t = sp.to_basis(&xm);
        for a in 0..d {
            for b in 0..d {
                t[(a, b)] /= s[a] + s[b];
            }
        }
        let xs = sp.from_basis(&t);
        xa.push((xb2 + xs) * C64::from(1.0 / b1) - &cap_a1 * C64::from(xb1 / b1));
    }
    // Pi_+ = i X1 - X2, Pi_- = i X1 + X2, Pi_0 = i X3
    let pi_cap_a1 = [&xa[0] * I - &xa[1], &xa[0] * I + &xa[1], &xa[2] * I];
    Ok(NodeBlocks {
        cap_a1,
        dy_cap_a1,
        pi_cap_a1,
        s: s_mat,
        sp,
        ea,
        ecap,
    })
}

/// Symbols of the factorization up to degree `l_max`.
pub fn build_factorization(zeta: &SphFn, l_max: usize, cfg: &FactorizationConfig) -> Result<DnSymbols> {
    let grid = Arc::new(HopfGrid::new(cfg.n_theta, cfg.n_psi));
    let x_band = RepLabel::integer(cfg.x_band as u32);
    if x_band > grid.max_label() {
        return Err(Error::GridTooCoarse {
            available: grid.max_label().twice_l,
            requested: x_band.twice_l,
        });
    }
    let surf = SurfaceState::new(zeta, grid.clone())?;
    check_gate(&surf, cfg.c1_gate, cfg.enforce_gate)?;
    let th = 2 * l_max as u32;
    let frames = FrameCache::new(th + 1);
    let g: Arc<dyn Grid> = grid.clone();
    let n = surf.len();

    let a1 = Symbol::try_from_fn(g.clone(), 0, th + 1, false, 1.0, |l, i| {
        let sp = Spectral::new(&surf, i, frames.get(l));
        let e = sp.first_order(&sp.s(surf.beta1[i], l)?, surf.beta1[i], -1.0);
        Ok(sp.from_diag(|k| e[k]))
    })?;
    let da: Vec<Symbol> = PiTag::ALL.iter().map(|&t| a1.difference(t)).collect::<Result<_>>()?;

    let cheb = match cfg.y_derivative {
        YDerivative::Chebyshev(m) => Some(chebyshev(m, -0.5, 0.0)),
        YDerivative::Analytic => None,
    };
    let empty = || (0..=th).map(|_| Vec::new()).collect::<Vec<Vec<CMat>>>();
    let (mut b_cap, mut b_pi, mut b_a0, mut b_cap_a0, mut b_l1, mut b_l0) =
        (empty(), [empty(), empty(), empty()], empty(), empty(), empty(), empty());
    for t in (0..=th).step_by(2) {
        let l = RepLabel::new(t);
        let rows: Vec<(NodeBlocks, CMat)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let nb = node_blocks(&surf, i, l, frames.get(l), cheb.as_ref())?;
                let c = -surf.beta3[i] / surf.beta1[i];
                let d = l.dim();
                let a0 = if t == 0 {
                    // a1 = A1 = 0 here; the closure a0 - A0 = -1/rho comes
                    // from the radial mode r^0 of the harmonic extension.
                    CMat::from_element(1, 1, C64::from(0.5 * (c - 1.0 / surf.rho[i])))
                } else {
                    // -a1 a0 + a0 A1 = R - c a1 with
                    // R = d_y A1 - sum_mu D_mu a1 . Pi_mu A1
                    let mut rhs = nb.dy_cap_a1.clone();
                    for (mu, dm) in da.iter().enumerate() {
                        rhs -= dm.block(l, i) * &nb.pi_cap_a1[mu];
                    }
                    let rhs = rhs - nb.sp.from_diag(|k| nb.ea[k] * c);
                    let mut y = nb.sp.to_basis(&rhs);
                    for a in 0..d {
                        for b in 0..d {
                            let gap = nb.ecap[b] - nb.ea[a];
                            if gap.norm() <= cfg.sylvester_gap {
                                return Err(Error::SylvesterSingular(gap.norm()));
                            }
                            y[(a, b)] /= gap;
                        }
                    }
                    nb.sp.from_basis(&y)
                };
                Ok((nb, a0))
            })
            .collect::<Result<_>>()?;
        let k = t as usize;
        for (i, (nb, a0)) in rows.into_iter().enumerate() {
            let d = l.dim();
            let c = -surf.beta3[i] / surf.beta1[i];
            let r2 = surf.rho[i] * surf.rho[i];
            let cap_a0 = CMat::identity(d, d) * C64::from(c) - &a0;
            b_l1[k].push(cscale(&nb.s, 1.0 / r2));
            b_l0[k].push(cscale(&cap_a0, surf.beta1[i] / r2));
            b_cap_a0[k].push(cap_a0);
            b_a0[k].push(a0);
            let [p0, p1, p2] = nb.pi_cap_a1;
            b_pi[0][k].push(p0);
            b_pi[1][k].push(p1);
            b_pi[2][k].push(p2);
            b_cap[k].push(nb.cap_a1);
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
    let lambda1 = mk(b_l1, 1.0);
    let lambda0 = mk(b_l0, 0.0);
    let mut lambda = lambda1.add(&lambda0)?;
    lambda.order = 1.0;
    let [p0, p1, p2] = b_pi;
    Ok(DnSymbols {
        surface: surf,
        lambda1,
        lambda0,
        lambda,
        a1,
        cap_a1: mk(b_cap, 1.0),
        pi_cap_a1: [mk(p0, 1.0), mk(p1, 1.0), mk(p2, 1.0)],
        a0: mk(b_a0, 0.0),
        cap_a0: mk(b_cap_a0, 0.0),
        x_band,
    })
}

/// `T_a u` for a symbol on a Hopf grid: the x-spectrum of `a` is cut by
/// `chi`, resampled on `out`, quantized against the lift of `u` and analyzed
/// back to degree `l_out`.
pub fn apply_para_symbol(
    a: &Symbol,
    chi: &AdmissibleCutoff,
    x_band: RepLabel,
    u: &SphFn,
    out: &Arc<HopfGrid>,
    l_out: usize,
) -> Result<SphFn> {
    let target: Arc<dyn Grid> = out.clone();
    let reg = a.map_x_spectrum(x_band, Some(target), |l, s| s.scale_blocks(|eta| chi.eval(eta.freq(), l.freq())))?;
    let vals = reg.quantize(&u.lift())?;
    Ok(out.analyze_c(&vals.values, l_out))
}

// ---------------------------------------------------------------------------
// Good unknown and the para-linearized DN

/// `b`, `v` and `u = phi - T_b zeta` on a Hopf grid.
#[derive(Clone, Debug)]
pub struct GoodUnknown {
    pub u: SphFn,
    /// Radial velocity `b` on the grid.
    pub b_frak: Vec<f64>,
    /// Frame components `v^j` of the tangential velocity.
    pub v_frak: [Vec<f64>; 3],
}

pub fn good_unknown(zeta: &SphFn, phi: &SphFn, dn_value: &SphFn, grid: &HopfGrid, l_out: usize, opts: &ParaOptions) -> GoodUnknown {
    let z = grid.synth(zeta);
    let dz = frame_values(grid, zeta);
    let dp = frame_values(grid, phi);
    let dn = grid.synth(dn_value);
    let n = z.len();
    let mut b = vec![0.0; n];
    let mut v = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let r2 = (1.0 + z[i]).powi(2);
        let g: f64 = (0..3).map(|j| dz[j][i] * dz[j][i]).sum();
        let gp: f64 = (0..3).map(|j| dz[j][i] * dp[j][i]).sum();
        b[i] = (dn[i] + gp / r2) / (1.0 + g / r2);
        for j in 0..3 {
            v[j][i] = (dp[j][i] - b[i] * dz[j][i]) / r2;
        }
    }
    let bs = grid.analyze(&b, l_out);
    let u = phi.resized(l_out).sub(&paraproduct_sph(&bs, zeta, grid, l_out, opts));
    GoodUnknown { u, b_frak: b, v_frak: v }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BSource {
    /// `b` from the Trefftz oracle.
    Oracle,
    /// `b` from this many fixed-point sweeps of the para-linearized DN.
    FixedPoint(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParaDnConfig {
    pub factorization: FactorizationConfig,
    pub oracle: OracleConfig,
    pub cutoff: AdmissibleCutoff,
    pub para: ParaOptions,
    pub b_source: BSource,
    /// Sobolev index `s` of the remainder report (norms in `H^s`, `H^{s+1/2}`).
    pub sobolev_s: f64,
    /// Compute the oracle remainder even when `b` comes from the fixed point.
    pub report: bool,
}

impl Default for ParaDnConfig {
    fn default() -> Self {
        ParaDnConfig {
            factorization: FactorizationConfig::default(),
            oracle: OracleConfig::default(),
            cutoff: AdmissibleCutoff::default(),
            para: ParaOptions::default(),
            b_source: BSource::Oracle,
            sobolev_s: 1.0,
            report: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RemainderReport {
    pub oracle: SphFn,
    pub remainder: SphFn,
    pub remainder_hs: f64,
    pub remainder_hs_half: f64,
    pub oracle_hs_half: f64,
    pub oracle_residual: f64,
}

#[derive(Clone, Debug)]
pub struct ParaDn {
    pub value: SphFn,
    pub good: GoodUnknown,
    pub remainder: Option<RemainderReport>,
}

/// Evaluates `T_lambda u - sum_j T_{v^j} X_j zeta` with the symbols of
/// `syms` and the good unknown `gu`, all on `out`.
pub fn para_dn_from_parts(
    syms: &DnSymbols,
    gu: &GoodUnknown,
    zeta: &SphFn,
    out: &Arc<HopfGrid>,
    l_out: usize,
    cfg: &ParaDnConfig,
) -> Result<SphFn> {
    let mut value = apply_para_symbol(&syms.lambda, &cfg.cutoff, syms.x_band, &gu.u, out, l_out)?;
    for j in 0..3 {
        let vj = out.analyze(&gu.v_frak[j], l_out);
        let xz = zeta.frame_derivative(j + 1).resized(l_out);
        value = value.sub(&paraproduct_sph(&vj, &xz, out, l_out, &cfg.para));
    }
    Ok(value)
}

pub fn paralinearized_dn(zeta: &SphFn, phi: &SphFn, cfg: &ParaDnConfig) -> Result<ParaDn> {
    paralinearized_dn_with(zeta, phi, cfg, None)
}

/// As [`paralinearized_dn`], reusing a prebuilt oracle (its own config then
/// overrides `cfg.oracle`).
pub fn paralinearized_dn_with(zeta: &SphFn, phi: &SphFn, cfg: &ParaDnConfig, oracle: Option<&TrefftzOracle>) -> Result<ParaDn> {
    let l_out = zeta.l_max.max(phi.l_max);
    let syms = build_factorization(zeta, l_out, &cfg.factorization)?;
    let out = Arc::new(HopfGrid::padded(l_out));
    let oracle = match (cfg.b_source, cfg.report, oracle) {
        (BSource::Oracle, _, Some(o)) | (_, true, Some(o)) => Some(o.dn(zeta, phi, l_out)?),
        (BSource::Oracle, _, None) | (_, true, None) => Some(oracle_dn(zeta, phi, &cfg.oracle)?),
        _ => None,
    };
    let (value, gu) = match cfg.b_source {
        BSource::Oracle => {
            let d = &oracle.as_ref().expect("oracle computed").value;
            let gu = good_unknown(zeta, phi, d, &out, l_out, &cfg.para);
            (para_dn_from_parts(&syms, &gu, zeta, &out, l_out, cfg)?, gu)
        }
        BSource::FixedPoint(iters) => {
            let mut d = apply_para_symbol(&syms.lambda, &cfg.cutoff, syms.x_band, &phi.resized(l_out), &out, l_out)?.real_part();
            let mut gu = good_unknown(zeta, phi, &d, &out, l_out, &cfg.para);
            for _ in 0..iters {
                d = para_dn_from_parts(&syms, &gu, zeta, &out, l_out, cfg)?.real_part();
                gu = good_unknown(zeta, phi, &d, &out, l_out, &cfg.para);
            }
            (para_dn_from_parts(&syms, &gu, zeta, &out, l_out, cfg)?, gu)
        }
    };
    let remainder = oracle.map(|o| {
        let rem = o.value.sub(&value);
        RemainderReport {
            remainder_hs: rem.sobolev_norm(cfg.sobolev_s),
            remainder_hs_half: rem.sobolev_norm(cfg.sobolev_s + 0.5),
            oracle_hs_half: o.value.sobolev_norm(cfg.sobolev_s + 0.5),
            oracle_residual: o.residual,
            oracle: o.value,
            remainder: rem,
        }
    });
    Ok(ParaDn {
        value,
        good: gu,
        remainder,
    })
}
