//! Admissible cutoffs, regularized symbols, para-products and Bony's
//! para-linearization.
//!
//! Every `t`-integral is discretized on the cells of [`TCells`]; a cell
//! contributes `phi(|xi|/t_{k+1}) - phi(|xi|/t_k)` in place of
//! `int psi_t(|xi|) dt/t`, so the discrete sums keep the partition of unity
//! exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::lp::{phi, TCells};
use crate::repr::RepLabel;
use crate::symcalc::Symbol;
use crate::transform::{sobolev_norm, Grid, GridFn, HopfGrid, SpectralFn, SphFn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffRule {
    /// `phi(2mu/delta) phi(lam) + sum_k phi(2mu/(delta t_k)) cell_k(lam)`,
    /// the cell discretization of `int phi_{delta t/2}(mu) psi_t(lam) dt/t`
    /// plus a low term so that `chi(0, lam) = 1`.
    Integral,
    /// `phi(mu / (delta <lam>))`.
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleCutoff {
    pub delta: f64,
    pub rule: CutoffRule,
    pub cells: TCells,
}

impl Default for AdmissibleCutoff {
    fn default() -> Self {
        AdmissibleCutoff {
            delta: 0.25,
            rule: CutoffRule::Integral,
            cells: TCells::default(),
        }
    }
}

impl AdmissibleCutoff {
    pub fn new(delta: f64, rule: CutoffRule) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Admissibility(format!("delta = {delta} outside (0, 1/2)")));
        }
        Ok(AdmissibleCutoff {
            delta,
            rule,
            cells: TCells::default(),
        })
    }

    /// `chi(mu, lam)` for `mu = |eta|`, `lam = |xi|`.
    pub fn eval(&self, mu: f64, lam: f64) -> f64 {
        let d = self.delta;
        match self.rule {
            CutoffRule::Direct => phi(mu / (d * (1.0 + lam * lam).sqrt())),
            CutoffRule::Integral => {
                let mut s = phi(2.0 * mu / d) * phi(lam);
                for k in self.cells.active(lam) {
                    let c = self.cells.cell(k, lam);
                    if c != 0.0 {
                        s += phi(2.0 * mu / (d * self.cells.t(k))) * c;
                    }
                }
                s
            }
        }
    }

    /// Largest `mu / <lam>` below which `chi = 1` is guaranteed by the rule.
    pub fn flat_ratio(&self) -> f64 {
        match self.rule {
            CutoffRule::Direct => self.delta / 2.0,
            // cell k is active only for lam < t_{k+1}, phi(2mu/(delta t_k)) = 1
            // needs mu <= delta t_k / 4, and lam >= <lam>/sqrt(2) once lam >= 1
            CutoffRule::Integral => {
                self.delta / (4.0 * std::f64::consts::SQRT_2 * 2f64.powf(1.0 / self.cells.per_octave as f64))
            }
        }
    }
}

/// `a^chi(x, l) = chi(|nabla_x|, |l|) a(x, l)`.
pub fn regularize(a: &Symbol, chi: &AdmissibleCutoff, x_band: RepLabel) -> Result<Symbol> {
    a.map_x_spectrum(x_band, None, |l, s| s.scale_blocks(|eta| chi.eval(eta.freq(), l.freq())))
}

/// Largest x-Fourier block norm of `a` at `|eta| >= delta <l>`, relative to
/// the largest block overall. Zero when the spectral condition holds.
pub fn spectral_condition_violation(a: &Symbol, delta: f64, x_band: RepLabel) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for l in a.labels() {
        let nodes = a.label_blocks(l)?;
        let d = l.dim();
        for e in 0..d * d {
            let vals: Vec<C64> = nodes.iter().map(|m| m[(e / d, e % d)]).collect();
            let s = a.grid.forward(&vals, x_band)?;
            for eta in s.labels() {
                let v = crate::linalg::hs_norm(s.block(eta));
                scale = scale.max(v);
                if eta.freq() >= delta * l.bracket() {
                    worst = worst.max(v);
                }
            }
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

/// `T^chi_a f = Op(a^chi) f`.
pub fn para_op(a: &Symbol, chi: &AdmissibleCutoff, f: &SpectralFn, x_band: RepLabel) -> Result<GridFn> {
    regularize(a, chi, x_band)?.quantize(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaOptions {
    /// Low-pass of the coefficient sits at `2^-gap t`.
    pub gap_log2: i32,
    pub cells: TCells,
}

impl Default for ParaOptions {
    fn default() -> Self {
        ParaOptions {
            gap_log2: 10,
            cells: TCells::default(),
        }
    }
}

impl ParaOptions {
    fn low(&self, k: usize, lam: f64) -> f64 {
        phi(lam / (2f64.powi(-self.gap_log2) * self.cells.t(k)))
    }

    /// Runs of consecutive cells whose coefficient low-pass agrees on the
    /// labels `a_labels` (so they can share one product on the grid).
    fn groups(&self, a_freqs: &[f64], lam_max: f64) -> Vec<std::ops::Range<usize>> {
        let mut out: Vec<std::ops::Range<usize>> = Vec::new();
        let key = |k: usize| -> Vec<f64> { a_freqs.iter().map(|&f| self.low(k, f)).collect() };
        let mut prev: Option<Vec<f64>> = None;
        for k in self.cells.active(lam_max) {
            let kk = key(k);
            match (&prev, out.last_mut()) {
                (Some(p), Some(r)) if *p == kk => r.end = k + 1,
                _ => out.push(k..k + 1),
            }
            prev = Some(kk);
        }
        out
    }
}

fn band_freqs(a: &SpectralFn) -> Vec<f64> {
    a.labels().map(|l| l.freq()).collect()
}

/// `T_a u = int_1^inf phi_{2^-gap t}(|nabla|) a . psi_t(|nabla|) u dt/t`.
pub fn paraproduct(a: &SpectralFn, u: &SpectralFn, grid: &dyn Grid, l_out: RepLabel, opts: &ParaOptions) -> Result<SpectralFn> {
    let freqs = band_freqs(a);
    let groups = opts.groups(&freqs, u.l_max.freq());
    let cells = opts.cells;
    let parts: Vec<Vec<C64>> = groups
        .par_iter()
        .map(|g| {
            let k0 = g.start;
            let al = a.scale_blocks(|l| opts.low(k0, l.freq()));
            let uh = u.scale_blocks(|l| phi(l.freq() / cells.t(g.end)) - phi(l.freq() / cells.t(g.start)));
            let (av, uv) = (grid.inverse(&al), grid.inverse(&uh));
            av.iter().zip(&uv).map(|(x, y)| x * y).collect()
        })
        .collect();
    let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
    for p in parts {
        for (s, v) in acc.iter_mut().zip(p) {
            *s += v;
        }
    }
    grid.forward(&acc, l_out)
}

/// [`paraproduct`] for functions on the sphere.
pub fn paraproduct_sph(a: &SphFn, u: &SphFn, grid: &HopfGrid, l_out: usize, opts: &ParaOptions) -> SphFn {
    let freqs: Vec<f64> = (0..=a.l_max).map(|n| RepLabel::integer(n as u32).freq()).collect();
    let groups = opts.groups(&freqs, RepLabel::integer(u.l_max as u32).freq());
    let cells = opts.cells;
    let fr = |n: usize| RepLabel::integer(n as u32).freq();
    let parts: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| {
            let al = a.multiplier(|n| opts.low(g.start, fr(n)));
            let uh = u.multiplier(|n| phi(fr(n) / cells.t(g.end)) - phi(fr(n) / cells.t(g.start)));
            let (av, uv) = (grid.synth(&al), grid.synth(&uh));
            av.iter().zip(&uv).map(|(x, y)| x * y).collect()
        })
        .collect();
    let mut acc = vec![0.0; grid.len()];
    for p in parts {
        for (s, v) in acc.iter_mut().zip(p) {
            *s += v;
        }
    }
    grid.analyze(&acc, l_out)
}

/// `a u = T_a u + T_u a + R(a, u) + phi(|nabla|)a . phi(|nabla|)u`.
#[derive(Clone, Debug)]
pub struct ParaDecomposition {
    pub product: SpectralFn,
    pub t_a_u: SpectralFn,
    pub t_u_a: SpectralFn,
    pub low: SpectralFn,
    pub remainder: SpectralFn,
}

pub fn para_decompose(a: &SpectralFn, u: &SpectralFn, grid: &dyn Grid, l_out: RepLabel, opts: &ParaOptions) -> Result<ParaDecomposition> {
    let mul = |x: &SpectralFn, y: &SpectralFn| -> Result<SpectralFn> {
        let (xv, yv) = (grid.inverse(x), grid.inverse(y));
        grid.forward(&xv.iter().zip(&yv).map(|(p, q)| p * q).collect::<Vec<_>>(), l_out)
    };
    let product = mul(a, u)?;
    let low = mul(&a.scale_blocks(|l| phi(l.freq())), &u.scale_blocks(|l| phi(l.freq())))?;
    let t_a_u = paraproduct(a, u, grid, l_out, opts)?;
    let t_u_a = paraproduct(u, a, grid, l_out, opts)?;
    let remainder = product.sub(&t_a_u).sub(&t_u_a).sub(&low);
    Ok(ParaDecomposition {
        product,
        t_a_u,
        t_u_a,
        low,
        remainder,
    })
}

/// A scalar function with its derivative.
pub struct Nonlinearity<'a> {
    pub f: &'a (dyn Fn(f64) -> f64 + Sync),
    pub df: &'a (dyn Fn(f64) -> f64 + Sync),
}

/// Discretized `l_u(x, l) = int F'(u_t(x)) psi_t(|l|) dt/t`: on cell `k` the
/// coefficient is the secant slope of `F` between `u_{t_k}` and `u_{t_{k+1}}`
/// (falling back to `F'` where they coincide), which makes
/// `F(u) = F(u_1) + Op(l_u) u` hold exactly on the grid.
#[derive(Clone, Debug)]
pub struct BonySymbol {
    pub cells: TCells,
    /// `slopes[k][node]`.
    pub slopes: Vec<Vec<f64>>,
}

impl BonySymbol {
    /// `Op(l_u) v = sum_k s_k(x) (cell_k(|nabla|) v)(x)`.
    pub fn apply(&self, v: &SpectralFn, grid: &dyn Grid) -> Vec<C64> {
        let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
        for (k, s) in self.slopes.iter().enumerate() {
            let vk = grid.inverse(&v.scale_blocks(|l| self.cells.cell(k, l.freq())));
            for ((a, x), c) in acc.iter_mut().zip(vk).zip(s) {
                *a += x * c;
            }
        }
        acc
    }

    /// The symbol `sum_k s_k(x) cell_k(|l|) Id` on labels `0..=twice_hi`.
    pub fn to_symbol(&self, grid: std::sync::Arc<dyn Grid>, twice_hi: u32, integer_only: bool) -> Symbol {
        Symbol::from_fn(grid, 0, twice_hi, integer_only, 0.0, |l, i| {
            let w: f64 = self.slopes.iter().enumerate().map(|(k, s)| s[i] * self.cells.cell(k, l.freq())).sum();
            CMat::identity(l.dim(), l.dim()) * C64::from(w)
        })
    }
}

#[derive(Clone, Debug)]
pub struct BonyReport {
    pub symbol: BonySymbol,
    /// `|F(u) - F(u_1) - Op(l_u) u|` on the grid (sup norm).
    pub identity_residual: f64,
    /// `F(u) - F(u_1) - T_{F'(u)} u`.
    pub remainder: SpectralFn,
    pub remainder_norm: f64,
}

fn real_values(v: &[C64]) -> Result<Vec<f64>> {
    let scale = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let im = v.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if im > 1e-8 * scale.max(1.0) {
        return Err(Error::Evaluation(format!("input is not real on the grid (|im| = {im:.3e})")));
    }
    Ok(v.iter().map(|z| z.re).collect())
}

fn eval_checked(f: &(dyn Fn(f64) -> f64 + Sync), xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            let y = f(x);
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::Evaluation(format!("nonlinearity is not finite at u = {x}")))
            }
        })
        .collect()
}

/// Bony para-linearization of `F(u)`, with the remainder measured in
/// `H^s` against `T_{F'(u)} u`.
pub fn bony_paralinearize(
    nl: &Nonlinearity<'_>,
    u: &SpectralFn,
    grid: &dyn Grid,
    l_out: RepLabel,
    s: f64,
    opts: &ParaOptions,
) -> Result<BonyReport> {
    let cells = opts.cells;
    let lam_max = u.l_max.freq();
    let kmax = cells.count(lam_max);
    let u_at = |t: f64| -> Result<Vec<f64>> { real_values(&grid.inverse(&u.scale_blocks(|l| phi(l.freq() / t)))) };
    let uvals = real_values(&grid.inverse(u))?;
    let fu = eval_checked(nl.f, &uvals)?;
    let mut prev = u_at(1.0)?;
    let mut fprev = eval_checked(nl.f, &prev)?;
    let fu1 = fprev.clone();
    let mut slopes = Vec::with_capacity(kmax);
    for k in 0..kmax {
        let next = u_at(cells.t(k + 1))?;
        let fnext = eval_checked(nl.f, &next)?;
        let sk = (0..grid.len())
            .map(|i| {
                let du = next[i] - prev[i];
                if du.abs() > 1e-12 * (1.0 + prev[i].abs()) {
                    Ok((fnext[i] - fprev[i]) / du)
                } else {
                    let v = (nl.df)(0.5 * (next[i] + prev[i]));
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Evaluation("derivative of the nonlinearity is not finite".into()))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        slopes.push(sk);
        prev = next;
        fprev = fnext;
    }
    let symbol = BonySymbol { cells, slopes };
    let op = symbol.apply(u, grid);
    let identity_residual = (0..grid.len())
        .map(|i| (C64::from(fu[i] - fu1[i]) - op[i]).norm())
        .fold(0.0, f64::max);
    let dfu = eval_checked(nl.df, &uvals)?;
    let dfu_hat = grid.forward(&dfu.iter().map(|&v| C64::from(v)).collect::<Vec<_>>(), l_out)?;
    let t = paraproduct(&dfu_hat, u, grid, l_out, opts)?;
    let diff: Vec<C64> = fu.iter().zip(&fu1).map(|(a, b)| C64::from(a - b)).collect();
    let remainder = grid.forward(&diff, l_out)?.sub(&t);
    let remainder_norm = sobolev_norm(&remainder, s);
    Ok(BonyReport {
        symbol,
        identity_residual,
        remainder,
        remainder_norm,
    })
}
