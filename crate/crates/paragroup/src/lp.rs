//! Littlewood-Paley cutoffs on the spectrum of `|nabla| = sqrt(-Delta)`.
//!
//! The base cutoff is `phi(lam) = g(2 - 2|lam|)` with the smooth step
//! `g(u) = h(u) / (h(u) + h(1-u))`, `h(u) = exp(-1/u)` for `u > 0`.
//! Continuous `t`-integrals are split into log-spaced cells
//! `[t_k, t_{k+1}]`, `t_k = 2^{k/P}`; the `psi`-integral over a cell is
//! `phi(lam/t_{k+1}) - phi(lam/t_k)` in closed form, so sums over cells
//! telescope exactly.

use serde::{Deserialize, Serialize};

use crate::linalg::gauss_legendre;
use crate::repr::RepLabel;
use crate::transform::{Grid, SpectralFn, SphFn};

fn h(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

fn dh(u: f64) -> f64 {
    if u > 0.0 {
        h(u) / (u * u)
    } else {
        0.0
    }
}

fn step(u: f64) -> f64 {
    if u >= 1.0 {
        return 1.0;
    }
    if u <= 0.0 {
        return 0.0;
    }
    let (a, b) = (h(u), h(1.0 - u));
    a / (a + b)
}

fn dstep(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let (a, b) = (h(u), h(1.0 - u));
    (dh(u) * b + a * dh(1.0 - u)) / ((a + b) * (a + b))
}

/// `phi`: 1 on `[-1/2, 1/2]`, 0 off `(-1, 1)`.
pub fn phi(lam: f64) -> f64 {
    step(2.0 - 2.0 * lam.abs())
}

pub fn dphi(lam: f64) -> f64 {
    -2.0 * lam.signum() * dstep(2.0 - 2.0 * lam.abs())
}

/// `psi(lam) = -lam phi'(lam)`.
pub fn psi(lam: f64) -> f64 {
    2.0 * lam.abs() * dstep(2.0 - 2.0 * lam.abs())
}

/// `theta = phi(./2) - phi`, supported in `1/2 <= |lam| <= 2`.
pub fn theta(lam: f64) -> f64 {
    phi(lam / 2.0) - phi(lam)
}

/// Log-spaced cells in `t >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TCells {
    pub per_octave: usize,
}

impl Default for TCells {
    fn default() -> Self {
        TCells { per_octave: 32 }
    }
}

impl TCells {
    pub fn new(per_octave: usize) -> Self {
        assert!(per_octave >= 1);
        TCells { per_octave }
    }

    pub fn t(&self, k: usize) -> f64 {
        2f64.powf(k as f64 / self.per_octave as f64)
    }

    /// `int_{t_k}^{t_{k+1}} psi(lam/t) dt/t`.
    pub fn cell(&self, k: usize, lam: f64) -> f64 {
        phi(lam / self.t(k + 1)) - phi(lam / self.t(k))
    }

    /// Number of cells after which every frequency `<= lam_max` is
    /// fully resolved (`phi(lam_max / t_K) = 1`).
    pub fn count(&self, lam_max: f64) -> usize {
        let mut k = 0;
        while self.t(k) < 2.0 * lam_max {
            k += 1;
        }
        k
    }

    /// Cells whose `psi` weight is nonzero somewhere on `[0, lam_max]`.
    pub fn active(&self, lam_max: f64) -> std::ops::Range<usize> {
        0..self.count(lam_max)
    }

    /// `int_1^{t_max} f(t) dt/t` by 5-point Gauss-Legendre in `log t` per cell.
    pub fn integrate(&self, t_max: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (x, w) = gauss_legendre(5);
        let mut s = 0.0;
        let mut k = 0;
        while self.t(k) < t_max {
            let (a, b) = (self.t(k).ln(), self.t(k + 1).min(t_max).ln());
            for (xi, wi) in x.iter().zip(&w) {
                let lt = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                s += 0.5 * (b - a) * wi * f(lt.exp());
            }
            k += 1;
        }
        s
    }
}

/// Scales block `l` by `m(|xi|)`.
pub fn apply_multiplier(f: &SpectralFn, m: impl Fn(f64) -> f64) -> SpectralFn {
    f.scale_blocks(|l| m(l.freq()))
}

pub fn sph_multiplier(f: &SphFn, m: impl Fn(f64) -> f64) -> SphFn {
    f.multiplier(|n| m(RepLabel::integer(n as u32).freq()))
}

/// `theta(|xi| / 2^j) f`.
pub fn dyadic_block(f: &SpectralFn, j: i32) -> SpectralFn {
    let s = 2f64.powi(j);
    apply_multiplier(f, |lam| theta(lam / s))
}

/// `phi(|xi|) f`, the low part complementing the dyadic blocks.
pub fn low_part(f: &SpectralFn) -> SpectralFn {
    apply_multiplier(f, phi)
}

/// `phi(|xi| / T) f`.
pub fn partial_sum(f: &SpectralFn, t: f64) -> SpectralFn {
    apply_multiplier(f, |lam| phi(lam / t))
}

pub fn partial_sum_sph(f: &SphFn, t: f64) -> SphFn {
    sph_multiplier(f, |lam| phi(lam / t))
}

fn grid_sup(grid: &dyn Grid, a: &SpectralFn) -> f64 {
    grid.inverse(a).iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `sup_t t^r |psi_t(|nabla|) f|_inf + |phi(|nabla|) f|_inf`, the sup taken
/// over the cell edges `t_k` up to twice the top frequency.
pub fn zygmund_estimate(f: &SpectralFn, r: f64, grid: &dyn Grid, cells: TCells) -> f64 {
    let top = f.l_max.freq();
    let mut best: f64 = 0.0;
    for k in 0..=cells.count(top) {
        let t = cells.t(k);
        let v = grid_sup(grid, &apply_multiplier(f, |lam| psi(lam / t)));
        best = best.max(t.powf(r) * v);
    }
    best + grid_sup(grid, &low_part(f))
}
