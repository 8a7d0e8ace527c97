//! Peter-Weyl transform on SU(2), Sobolev norms, and the Hopf lift between
//! functions on the sphere and T3-invariant functions on SU(2).
//!
//! Conventions: `f^(l) = int f(x) T^l(x)^* dx` (so `f^(l)[a][b]` pairs with
//! `conj(T^l_{ba})`) and `f(x) = sum_l (2l+1) Tr(f^(l) T^l(x))`, with the
//! normalized Haar measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, hs_norm, CMat, C64, I};
use crate::repr::{apply_phases, p_matrix, EulerPoint, RepLabel};

/// Per-l blocks `f^(l)`, indexed by `twice_l = 0..=l_max.twice_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFn {
    pub l_max: RepLabel,
    pub blocks: Vec<CMat>,
}

impl SpectralFn {
    pub fn zeros(l_max: RepLabel) -> Self {
        let blocks = (0..=l_max.twice_l)
            .map(|t| CMat::zeros(t as usize + 1, t as usize + 1))
            .collect();
        SpectralFn { l_max, blocks }
    }

    pub fn block(&self, l: RepLabel) -> &CMat {
        &self.blocks[l.twice_l as usize]
    }

    pub fn block_mut(&mut self, l: RepLabel) -> &mut CMat {
        &mut self.blocks[l.twice_l as usize]
    }

    pub fn labels(&self) -> impl Iterator<Item = RepLabel> {
        (0..=self.l_max.twice_l).map(RepLabel::new)
    }

    /// Single block `b` at label `l`, zeros elsewhere.
    pub fn single(l_max: RepLabel, l: RepLabel, b: CMat) -> Self {
        let mut s = SpectralFn::zeros(l_max);
        *s.block_mut(l) = b;
        s
    }

    /// Random entries in the unit square on the blocks with `twice_l` in
    /// `twice_lo..=twice_hi`.
    pub fn random<R: rand::Rng>(l_max: RepLabel, twice_lo: u32, twice_hi: u32, rng: &mut R) -> Self {
        let mut s = SpectralFn::zeros(l_max);
        for t in twice_lo..=twice_hi.min(l_max.twice_l) {
            let d = t as usize + 1;
            s.blocks[t as usize] =
                CMat::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        s
    }

    /// Copy truncated or zero-padded to a new top label.
    pub fn resized(&self, l_max: RepLabel) -> Self {
        let mut s = SpectralFn::zeros(l_max);
        for t in 0..=l_max.twice_l.min(self.l_max.twice_l) {
            s.blocks[t as usize] = self.blocks[t as usize].clone();
        }
        s
    }

    pub fn map_blocks(&self, f: impl Fn(RepLabel, &CMat) -> CMat) -> Self {
        SpectralFn {
            l_max: self.l_max,
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(t, b)| f(RepLabel::new(t as u32), b))
                .collect(),
        }
    }

    pub fn scale_blocks(&self, f: impl Fn(RepLabel) -> f64) -> Self {
        self.map_blocks(|l, b| b * C64::from(f(l)))
    }

    pub fn add(&self, o: &SpectralFn) -> Self {
        let top = self.l_max.max(o.l_max);
        let mut s = self.resized(top);
        for (t, b) in o.blocks.iter().enumerate() {
            s.blocks[t] += b;
        }
        s
    }

    pub fn sub(&self, o: &SpectralFn) -> Self {
        self.add(&o.scale(C64::from(-1.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_blocks(|_, b| b * c)
    }

    /// Squared Plancherel norm `sum (2l+1) |f^(l)|_HS^2`.
    pub fn plancherel_sq(&self) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(t, b)| (t as f64 + 1.0) * hs_norm(b).powi(2))
            .sum()
    }

    pub fn max_abs_diff(&self, o: &SpectralFn) -> f64 {
        let top = self.l_max.max(o.l_max);
        let (a, b) = (self.resized(top), o.resized(top));
        a.blocks
            .iter()
            .zip(&b.blocks)
            .map(|(x, y)| (x - y).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Highest label carrying an entry above `tol`.
    pub fn band(&self, tol: f64) -> Option<RepLabel> {
        (0..self.blocks.len())
            .rev()
            .find(|&t| self.blocks[t].iter().any(|z| z.norm() > tol))
            .map(|t| RepLabel::new(t as u32))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut blocks = BTreeMap::new();
        for (t, b) in self.blocks.iter().enumerate() {
            let mut flat = Vec::with_capacity(2 * b.len());
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    flat.push(b[(i, j)].re);
                    flat.push(b[(i, j)].im);
                }
            }
            blocks.insert(t.to_string(), flat);
        }
        serde_json::json!({ "twice_l_max": self.l_max.twice_l, "blocks": blocks })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            twice_l_max: u32,
            blocks: BTreeMap<String, Vec<f64>>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        let mut s = SpectralFn::zeros(RepLabel::new(raw.twice_l_max));
        for (k, flat) in raw.blocks {
            let t: u32 = k
                .parse()
                .map_err(|_| Error::Config(format!("bad block key {k}")))?;
            if t > raw.twice_l_max {
                return Err(Error::Shape(format!("block {t} above twice_l_max")));
            }
            let d = t as usize + 1;
            if flat.len() != 2 * d * d {
                return Err(Error::Shape(format!("block {t}: expected {} numbers", 2 * d * d)));
            }
            s.blocks[t as usize] = CMat::from_fn(d, d, |i, j| {
                let p = 2 * (i * d + j);
                C64::new(flat[p], flat[p + 1])
            });
        }
        Ok(s)
    }
}

/// Sobolev norm `(sum (2l+1) <l>^{2s} |f^(l)|_HS^2)^{1/2}`.
pub fn sobolev_norm(a: &SpectralFn, s: f64) -> f64 {
    a.labels()
        .map(|l| l.dim() as f64 * (1.0 + l.casimir()).powf(s) * hs_norm(a.block(l)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Evaluates `sum (2l+1) Tr(a(l) T^l(x))` at a single point.
pub fn evaluate(a: &SpectralFn, x: EulerPoint) -> C64 {
    a.labels()
        .filter(|l| a.block(*l).iter().any(|z| z.norm() > 0.0))
        .map(|l| {
            let t = crate::repr::wigner_matrix(l, x);
            (a.block(l) * t).trace() * l.dim() as f64
        })
        .sum()
}

/// A quadrature grid on SU(2) carrying Wigner tables.
pub trait Grid: Sync + Send {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn point(&self, idx: usize) -> EulerPoint;
    fn weight(&self, idx: usize) -> f64;
    /// Largest `2(l + l')` for which products of entries integrate exactly.
    fn twice_exact_degree(&self) -> u32;
    /// Whether this grid only resolves T3-invariant (phi-independent) data.
    fn t3_only(&self) -> bool;
    /// Short identifier recorded in serialized symbols.
    fn id(&self) -> String;
    fn forward(&self, values: &[C64], l_max: RepLabel) -> Result<SpectralFn>;
    fn inverse(&self, a: &SpectralFn) -> Vec<C64>;
    /// `Tr(m T^l(x_idx))`. On T3-only grids `m` must vanish off column 0.
    fn trace_with(&self, idx: usize, l: RepLabel, m: &CMat) -> C64;
    /// Largest `l_max` that `forward` accepts.
    fn max_label(&self) -> RepLabel {
        let t = self.twice_exact_degree() / 2;
        if self.t3_only() {
            RepLabel::new(t - t % 2)
        } else {
            RepLabel::new(t)
        }
    }
    fn integrate(&self, values: &[C64]) -> C64 {
        (0..self.len()).map(|i| values[i] * self.weight(i)).sum()
    }
}

fn p_tables(thetas: &[f64], twice_l_max: u32) -> Vec<Vec<CMat>> {
    thetas
        .par_iter()
        .map(|&th| (0..=twice_l_max).map(|t| p_matrix(RepLabel::new(t), th)).collect())
        .collect()
}

/// Gauss-Legendre in `cos theta` times uniform `phi` in [0, 2pi) and `psi`
/// in [-2pi, 2pi).
#[derive(Clone, Debug)]
pub struct EulerGrid {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_psi: usize,
    pub theta: Vec<f64>,
    pub theta_weight: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    ptab: Vec<Vec<CMat>>,
}

impl EulerGrid {
    pub fn new(n_theta: usize, n_phi: usize, n_psi: usize) -> Self {
        let (z, w) = gauss_legendre(n_theta);
        let theta: Vec<f64> = z.iter().map(|z| z.acos()).collect();
        let theta_weight = w.iter().map(|w| w / 2.0).collect();
        let phi = (0..n_phi).map(|j| 2.0 * PI * j as f64 / n_phi as f64).collect();
        let psi = (0..n_psi)
            .map(|k| -2.0 * PI + 4.0 * PI * k as f64 / n_psi as f64)
            .collect();
        let twice = Self::exact(n_theta, n_phi, n_psi) / 2;
        let ptab = p_tables(&theta, twice);
        EulerGrid {
            n_theta,
            n_phi,
            n_psi,
            theta,
            theta_weight,
            phi,
            psi,
            ptab,
        }
    }

    fn exact(n_theta: usize, n_phi: usize, n_psi: usize) -> u32 {
        let a = 2 * (2 * n_theta as i64 - 1);
        let b = 2 * (n_phi as i64 - 1);
        let c = n_psi as i64 - 1;
        a.min(b).min(c).max(0) as u32
    }

    /// Smallest grid integrating products of entries with `2(l+l') <= twice_degree`.
    pub fn for_degree(twice_degree: u32) -> Self {
        let d = twice_degree as usize;
        let n_theta = (d / 2 + 2) / 2;
        let n_phi = d / 2 + 1;
        let n_psi = d + 1;
        EulerGrid::new(n_theta.max(1), n_phi.max(1), n_psi.max(1))
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_phi + j) * self.n_psi + k
    }

    pub fn sample(&self, f: impl Fn(EulerPoint) -> C64 + Sync) -> Vec<C64> {
        (0..self.len()).into_par_iter().map(|i| f(self.point(i))).collect()
    }
}

impl Grid for EulerGrid {
    fn len(&self) -> usize {
        self.n_theta * self.n_phi * self.n_psi
    }

    fn point(&self, idx: usize) -> EulerPoint {
        let k = idx % self.n_psi;
        let j = (idx / self.n_psi) % self.n_phi;
        let i = idx / (self.n_psi * self.n_phi);
        EulerPoint {
            phi: self.phi[j],
            theta: self.theta[i],
            psi: self.psi[k],
        }
    }

    fn weight(&self, idx: usize) -> f64 {
        let i = idx / (self.n_psi * self.n_phi);
        self.theta_weight[i] / (self.n_phi * self.n_psi) as f64
    }

    fn twice_exact_degree(&self) -> u32 {
        Self::exact(self.n_theta, self.n_phi, self.n_psi)
    }

    fn t3_only(&self) -> bool {
        false
    }

    fn id(&self) -> String {
        format!("euler:{}x{}x{}", self.n_theta, self.n_phi, self.n_psi)
    }

    fn forward(&self, values: &[C64], l_max: RepLabel) -> Result<SpectralFn> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!("{} values for {} nodes", values.len(), self.len())));
        }
        let avail = self.max_label();
        if l_max > avail {
            return Err(Error::GridTooCoarse {
                available: avail.twice_l,
                requested: l_max.twice_l,
            });
        }
        let tl = l_max.twice_l as i32;
        let nm = (2 * tl + 1) as usize;
        let (np, ns) = (self.n_phi, self.n_psi);
        let epsi: Vec<Vec<C64>> = (0..nm)
            .map(|a| {
                let tm = a as i32 - tl;
                self.psi.iter().map(|&p| C64::from_polar(1.0, tm as f64 * p / 2.0)).collect()
            })
            .collect();
        let ephi: Vec<Vec<C64>> = (0..nm)
            .map(|a| {
                let tn = a as i32 - tl;
                self.phi.iter().map(|&p| C64::from_polar(1.0, tn as f64 * p / 2.0)).collect()
            })
            .collect();
        let partial: Vec<SpectralFn> = (0..self.n_theta)
            .into_par_iter()
            .map(|i| {
                // G[j][m] then H[n][m]
                let mut g = vec![C64::new(0.0, 0.0); np * nm];
                for j in 0..np {
                    let row = &values[self.idx(i, j, 0)..self.idx(i, j, 0) + ns];
                    for a in 0..nm {
                        let e = &epsi[a];
                        let s: C64 = row.iter().zip(e).map(|(f, e)| f * e).sum();
                        g[j * nm + a] = s / ns as f64;
                    }
                }
                let mut h = vec![C64::new(0.0, 0.0); nm * nm];
                for bn in 0..nm {
                    for am in 0..nm {
                        if (bn + am) % 2 != 0 {
                            continue;
                        }
                        let mut s = C64::new(0.0, 0.0);
                        for j in 0..np {
                            s += g[j * nm + am] * ephi[bn][j];
                        }
                        h[bn * nm + am] = s / np as f64;
                    }
                }
                let w = self.theta_weight[i];
                let mut out = SpectralFn::zeros(l_max);
                for t in 0..=l_max.twice_l {
                    let l = RepLabel::new(t);
                    let p = &self.ptab[i][t as usize];
                    let d = l.dim();
                    let off = (tl - t as i32) as usize;
                    let blk = &mut out.blocks[t as usize];
                    for a in 0..d {
                        for b in 0..d {
                            // f^[a][b] pairs with conj(T[b][a])
                            let hv = h[(off + 2 * b) * nm + off + 2 * a];
                            blk[(a, b)] = p[(b, a)].conj() * hv * w;
                        }
                    }
                }
                out
            })
            .collect();
        let mut acc = SpectralFn::zeros(l_max);
        for p in partial {
            for (a, b) in acc.blocks.iter_mut().zip(p.blocks) {
                *a += b;
            }
        }
        Ok(acc)
    }

    fn inverse(&self, a: &SpectralFn) -> Vec<C64> {
        let tl = a.l_max.twice_l as i32;
        let nm = (2 * tl + 1) as usize;
        let (np, ns) = (self.n_phi, self.n_psi);
        let avail = self.ptab[0].len() as u32;
        let live: Vec<u32> = (0..=a.l_max.twice_l)
            .filter(|&t| a.blocks[t as usize].iter().any(|z| z.norm() > 0.0))
            .collect();
        let needs_direct = live.iter().any(|&t| t >= avail);
        if needs_direct {
            return self.sample(|x| evaluate(a, x));
        }
        let out: Vec<Vec<C64>> = (0..self.n_theta)
            .into_par_iter()
            .map(|i| {
                let mut k = vec![C64::new(0.0, 0.0); nm * nm];
                for &t in &live {
                    let l = RepLabel::new(t);
                    let d = l.dim();
                    let off = (tl - t as i32) as usize;
                    let p = &self.ptab[i][t as usize];
                    let blk = &a.blocks[t as usize];
                    for m in 0..d {
                        for n in 0..d {
                            k[(off + 2 * n) * nm + off + 2 * m] += blk[(m, n)] * p[(n, m)] * d as f64;
                        }
                    }
                }
                let mut lrow = vec![C64::new(0.0, 0.0); np * nm];
                for j in 0..np {
                    for am in 0..nm {
                        let mut s = C64::new(0.0, 0.0);
                        for bn in 0..nm {
                            if (bn + am) % 2 != 0 {
                                continue;
                            }
                            let kv = k[bn * nm + am];
                            if kv.norm() == 0.0 {
                                continue;
                            }
                            let tn = bn as i32 - tl;
                            s += kv * C64::from_polar(1.0, -(tn as f64) * self.phi[j] / 2.0);
                        }
                        lrow[j * nm + am] = s;
                    }
                }
                let mut vals = vec![C64::new(0.0, 0.0); np * ns];
                for j in 0..np {
                    for kk in 0..ns {
                        let mut s = C64::new(0.0, 0.0);
                        for am in 0..nm {
                            let lv = lrow[j * nm + am];
                            if lv.norm() == 0.0 {
                                continue;
                            }
                            let tm = am as i32 - tl;
                            s += lv * C64::from_polar(1.0, -(tm as f64) * self.psi[kk] / 2.0);
                        }
                        vals[j * ns + kk] = s;
                    }
                }
                vals
            })
            .collect();
        out.into_iter().flatten().collect()
    }

    fn trace_with(&self, idx: usize, l: RepLabel, m: &CMat) -> C64 {
        let k = idx % self.n_psi;
        let i = idx / (self.n_psi * self.n_phi);
        let x = self.point(idx);
        let _ = k;
        let mut t = if (l.twice_l as usize) < self.ptab[i].len() {
            self.ptab[i][l.twice_l as usize].clone()
        } else {
            p_matrix(l, x.theta)
        };
        apply_phases(l, x, &mut t);
        (m * t).trace()
    }
}

/// The slice `phi = 0` of SU(2): Gauss-Legendre in `cos theta`, uniform
/// `psi` in [0, 2pi). Carries T3-invariant data, i.e. functions on the
/// sphere lifted through the Hopf map; only integer labels and column 0 of
/// the blocks are resolved.
#[derive(Clone, Debug)]
pub struct HopfGrid {
    pub n_theta: usize,
    pub n_psi: usize,
    pub theta: Vec<f64>,
    pub theta_weight: Vec<f64>,
    pub psi: Vec<f64>,
    ptab: Vec<Vec<CMat>>,
    /// `ytab[i][n][n + m] = Y_n^m(theta_i, 0)`.
    ytab: Vec<Vec<Vec<f64>>>,
    /// `roots[j] = exp(2 pi i j / n_psi)`.
    roots: Vec<C64>,
    pub sh_l_max: usize,
}

/// Phases relating `Y_n^m` to the lifted basis: `Y_n^m o hopf =
/// eps_{n,m} sqrt((2n+1)/4pi) T^n_{0,-m}`. Values measured by quadrature
/// against Condon-Shortley harmonics for `n = 1, 2` (see the regression test);
/// they follow `eps_{n,m} = i^m`.
pub const SH_PHASE_TABLE: [(u32, i32, [f64; 2]); 8] = [
    (1, -1, [0.0, -1.0]),
    (1, 0, [1.0, 0.0]),
    (1, 1, [0.0, 1.0]),
    (2, -2, [-1.0, 0.0]),
    (2, -1, [0.0, -1.0]),
    (2, 0, [1.0, 0.0]),
    (2, 1, [0.0, 1.0]),
    (2, 2, [-1.0, 0.0]),
];

pub fn sh_phase(m: i32) -> C64 {
    [C64::new(1.0, 0.0), I, C64::new(-1.0, 0.0), -I][m.rem_euclid(4) as usize]
}

impl HopfGrid {
    pub fn new(n_theta: usize, n_psi: usize) -> Self {
        let (z, w) = gauss_legendre(n_theta);
        let theta: Vec<f64> = z.iter().map(|z| z.acos()).collect();
        let theta_weight = w.iter().map(|w| w / 2.0).collect();
        let psi = (0..n_psi).map(|k| 2.0 * PI * k as f64 / n_psi as f64).collect();
        let exact = Self::exact(n_theta, n_psi);
        let sh_l_max = (exact / 2) as usize;
        let ptab = p_tables(&theta, 2 * sh_l_max as u32);
        let ytab = ptab
            .iter()
            .map(|row| {
                (0..=sh_l_max)
                    .map(|n| {
                        let p = &row[2 * n];
                        let c = ((2 * n + 1) as f64 / (4.0 * PI)).sqrt();
                        (0..=2 * n)
                            .map(|k| {
                                let m = k as i32 - n as i32;
                                // column -m of row 0
                                let v = sh_phase(m) * p[(n, (n as i32 - m) as usize)] * c;
                                v.re
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        HopfGrid {
            n_theta,
            n_psi,
            theta,
            theta_weight,
            psi,
            ptab,
            ytab,
            roots: (0..n_psi).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / n_psi as f64)).collect(),
            sh_l_max,
        }
    }

    /// `exp(i a psi_k)` for integer `a`.
    fn cis(&self, a: i64, k: usize) -> C64 {
        self.roots[(a * k as i64).rem_euclid(self.n_psi as i64) as usize]
    }

    fn exact(n_theta: usize, n_psi: usize) -> u32 {
        let a = 2 * (2 * n_theta as i64 - 1);
        let c = 2 * (n_psi as i64 - 1);
        a.min(c).max(0) as u32
    }

    /// Smallest grid integrating products of harmonics of total degree `degree`.
    pub fn for_degree(degree: usize) -> Self {
        HopfGrid::new(degree / 2 + 1, degree + 1)
    }

    /// Grid for band `l_max` padded by the 3/2 rule.
    pub fn padded(l_max: usize) -> Self {
        HopfGrid::for_degree(3 * l_max + 1)
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let x = self.point(i);
                f(x.theta, x.psi)
            })
            .collect()
    }

    /// Unit vectors of the nodes.
    pub fn normals(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| crate::repr::hopf_project(self.point(i))).collect()
    }

    /// Real values of a spherical-harmonic expansion on the grid.
    pub fn synth(&self, f: &SphFn) -> Vec<f64> {
        self.synth_c(f).into_iter().map(|z| z.re).collect()
    }

    pub fn synth_c(&self, f: &SphFn) -> Vec<C64> {
        let lm = f.l_max.min(self.sh_l_max);
        let nm = 2 * lm + 1;
        let rows: Vec<Vec<C64>> = (0..self.n_theta)
            .into_par_iter()
            .map(|i| {
                let mut k = vec![C64::new(0.0, 0.0); nm];
                for n in 0..=lm {
                    let yt = &self.ytab[i][n];
                    for (mi, y) in yt.iter().enumerate() {
                        let m = mi as i32 - n as i32;
                        k[(m + lm as i32) as usize] += f.get(n, m) * y;
                    }
                }
                (0..self.n_psi)
                    .map(|kk| {
                        let mut s = C64::new(0.0, 0.0);
                        for (mi, kv) in k.iter().enumerate() {
                            if kv.norm() > 0.0 {
                                let m = mi as i64 - lm as i64;
                                s += kv * self.cis(m, kk);
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        rows.into_iter().flatten().collect()
    }

    /// Spherical-harmonic coefficients by quadrature (`int f conj(Y) dmu_0`).
    pub fn analyze(&self, values: &[f64], l_max: usize) -> SphFn {
        let c: Vec<C64> = values.iter().map(|&v| C64::from(v)).collect();
        self.analyze_c(&c, l_max)
    }

    pub fn analyze_c(&self, values: &[C64], l_max: usize) -> SphFn {
        let lm = l_max.min(self.sh_l_max);
        let ns = self.n_psi;
        let parts: Vec<SphFn> = (0..self.n_theta)
            .into_par_iter()
            .map(|i| {
                let row = &values[i * ns..(i + 1) * ns];
                let mut out = SphFn::zeros(l_max);
                let w = self.theta_weight[i] * 4.0 * PI / ns as f64;
                for m in -(lm as i32)..=(lm as i32) {
                    let s: C64 = row.iter().enumerate().map(|(kk, f)| f * self.cis(-(m as i64), kk)).sum();
                    for n in m.unsigned_abs() as usize..=lm {
                        let y = self.ytab[i][n][(n as i32 + m) as usize];
                        *out.get_mut(n, m) += s * y * w;
                    }
                }
                out
            })
            .collect();
        let mut acc = SphFn::zeros(l_max);
        for p in parts {
            for (a, b) in acc.coeffs.iter_mut().zip(p.coeffs) {
                *a += b;
            }
        }
        acc
    }

    /// Integral against `dmu_0` (total mass `4 pi`).
    pub fn integrate_s2(&self, values: &[f64]) -> f64 {
        let ns = self.n_psi as f64;
        (0..self.len())
            .map(|i| values[i] * self.theta_weight[i / self.n_psi] * 4.0 * PI / ns)
            .sum()
    }

    pub fn max_abs(values: &[f64]) -> f64 {
        values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl Grid for HopfGrid {
    fn len(&self) -> usize {
        self.n_theta * self.n_psi
    }

    fn point(&self, idx: usize) -> EulerPoint {
        EulerPoint {
            phi: 0.0,
            theta: self.theta[idx / self.n_psi],
            psi: self.psi[idx % self.n_psi],
        }
    }

    fn weight(&self, idx: usize) -> f64 {
        self.theta_weight[idx / self.n_psi] / self.n_psi as f64
    }

    fn twice_exact_degree(&self) -> u32 {
        Self::exact(self.n_theta, self.n_psi)
    }

    fn t3_only(&self) -> bool {
        true
    }

    fn id(&self) -> String {
        format!("hopf:{}x{}", self.n_theta, self.n_psi)
    }

    fn forward(&self, values: &[C64], l_max: RepLabel) -> Result<SpectralFn> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!("{} values for {} nodes", values.len(), self.len())));
        }
        let avail = self.max_label();
        let lm = RepLabel::new(l_max.twice_l - l_max.twice_l % 2);
        if lm > avail {
            return Err(Error::GridTooCoarse {
                available: avail.twice_l,
                requested: l_max.twice_l,
            });
        }
        let top = (lm.twice_l / 2) as usize;
        let ns = self.n_psi;
        let parts: Vec<SpectralFn> = (0..self.n_theta)
            .into_par_iter()
            .map(|i| {
                let row = &values[i * ns..(i + 1) * ns];
                let mut out = SpectralFn::zeros(l_max);
                let w = self.theta_weight[i] / ns as f64;
                for a in -(top as i32)..=(top as i32) {
                    let s: C64 = row.iter().enumerate().map(|(kk, f)| f * self.cis(a as i64, kk)).sum();
                    for n in a.unsigned_abs() as usize..=top {
                        let p = &self.ptab[i][2 * n];
                        let col = (n as i32 + a) as usize;
                        out.blocks[2 * n][(col, n)] += p[(n, col)].conj() * s * w;
                    }
                }
                out
            })
            .collect();
        let mut acc = SpectralFn::zeros(l_max);
        for p in parts {
            for (a, b) in acc.blocks.iter_mut().zip(p.blocks) {
                *a += b;
            }
        }
        Ok(acc)
    }

    fn inverse(&self, a: &SpectralFn) -> Vec<C64> {
        let tl = a.l_max.twice_l as i32;
        let nm = (2 * tl + 1) as usize;
        let live: Vec<u32> = (0..=a.l_max.twice_l)
            .filter(|&t| a.blocks[t as usize].iter().any(|z| z.norm() > 0.0))
            .collect();
        if live.iter().any(|&t| t as usize >= self.ptab[0].len() || t % 2 == 1) {
            return (0..self.len()).map(|i| evaluate(a, self.point(i))).collect();
        }
        let rows: Vec<Vec<C64>> = (0..self.n_theta)
            .into_par_iter()
            .map(|i| {
                let mut k = vec![C64::new(0.0, 0.0); nm];
                for &t in &live {
                    let l = RepLabel::new(t);
                    let d = l.dim();
                    let off = (tl - t as i32) as usize;
                    let p = &self.ptab[i][t as usize];
                    let blk = &a.blocks[t as usize];
                    for m in 0..d {
                        let mut s = C64::new(0.0, 0.0);
                        for n in 0..d {
                            s += blk[(m, n)] * p[(n, m)];
                        }
                        k[off + 2 * m] += s * d as f64;
                    }
                }
                (0..self.n_psi)
                    .map(|kk| {
                        let mut s = C64::new(0.0, 0.0);
                        for (am, kv) in k.iter().enumerate() {
                            if kv.norm() > 0.0 {
                                let tm = am as i64 - tl as i64;
                                s += kv * self.cis(-tm / 2, kk);
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        rows.into_iter().flatten().collect()
    }

    fn trace_with(&self, idx: usize, l: RepLabel, m: &CMat) -> C64 {
        // only row 0 of T^l is needed when m lives in column 0
        let i = idx / self.n_psi;
        let psi = self.psi[idx % self.n_psi];
        let n = l.dim() / 2;
        let d = l.dim();
        let mut s = C64::new(0.0, 0.0);
        if (l.twice_l as usize) < self.ptab[i].len() {
            let p = &self.ptab[i][l.twice_l as usize];
            for a in 0..d {
                let tm = 2 * a as i32 - l.twice_l as i32;
                let e = if tm % 2 == 0 {
                    self.cis(-(tm / 2) as i64, idx % self.n_psi)
                } else {
                    C64::from_polar(1.0, -(tm as f64) * psi / 2.0)
                };
                s += m[(a, n)] * p[(n, a)] * e;
            }
        } else {
            let mut t = p_matrix(l, self.theta[i]);
            apply_phases(l, self.point(idx), &mut t);
            s = (m * t).trace();
        }
        s
    }
}

/// Function values on the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn {
    pub values: Vec<C64>,
}

impl GridFn {
    pub fn new(values: Vec<C64>) -> Self {
        GridFn { values }
    }

    pub fn l2_sq(&self, grid: &dyn Grid) -> f64 {
        (0..grid.len()).map(|i| self.values[i].norm_sqr() * grid.weight(i)).sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, grid: &dyn Grid, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["theta", "phi", "psi", "re", "im"])?;
        for (i, v) in self.values.iter().enumerate() {
            let x = grid.point(i);
            wr.write_record(&[
                format!("{:.17e}", x.theta),
                format!("{:.17e}", x.phi),
                format!("{:.17e}", x.psi),
                format!("{:.17e}", v.re),
                format!("{:.17e}", v.im),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn forward(f: &GridFn, grid: &dyn Grid, l_max: RepLabel) -> Result<SpectralFn> {
    grid.forward(&f.values, l_max)
}

pub fn inverse(a: &SpectralFn, grid: &dyn Grid) -> GridFn {
    GridFn::new(grid.inverse(a))
}

/// Right convolution `(f * g)(x) = int f(y) g(y^{-1} x) dy`, with `f` given
/// on the grid and `g` spectrally; evaluated at the grid nodes by quadrature.
pub fn convolve(f: &GridFn, g: &SpectralFn, grid: &EulerGrid) -> GridFn {
    let vals = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i).to_su2();
            (0..grid.len())
                .map(|j| {
                    let y = grid.point(j).to_su2();
                    let z = EulerPoint::from_su2(y.inv().mul(x));
                    f.values[j] * evaluate(g, z) * grid.weight(j)
                })
                .sum()
        })
        .collect();
    GridFn::new(vals)
}

/// Spherical-harmonic coefficients `c_{n,m}` (orthonormal Condon-Shortley
/// harmonics on the unit sphere with its standard measure).
#[derive(Clone, Debug, PartialEq)]
pub struct SphFn {
    pub l_max: usize,
    pub coeffs: Vec<C64>,
}

impl SphFn {
    pub fn zeros(l_max: usize) -> Self {
        SphFn {
            l_max,
            coeffs: vec![C64::new(0.0, 0.0); (l_max + 1) * (l_max + 1)],
        }
    }

    fn at(n: usize, m: i32) -> usize {
        n * n + (n as i32 + m) as usize
    }

    pub fn get(&self, n: usize, m: i32) -> C64 {
        if n > self.l_max || m.unsigned_abs() as usize > n {
            return C64::new(0.0, 0.0);
        }
        self.coeffs[Self::at(n, m)]
    }

    pub fn get_mut(&mut self, n: usize, m: i32) -> &mut C64 {
        &mut self.coeffs[Self::at(n, m)]
    }

    pub fn set(&mut self, n: usize, m: i32, v: C64) {
        self.coeffs[Self::at(n, m)] = v;
    }

    /// A single harmonic `Y_n^m`.
    pub fn mode(l_max: usize, n: usize, m: i32) -> Self {
        let mut s = SphFn::zeros(l_max);
        s.set(n, m, C64::new(1.0, 0.0));
        s
    }

    /// Real harmonic: `Y_n^0` for `m = 0`, `(Y_n^m + (-1)^m Y_n^{-m})/sqrt 2`
    /// for `m > 0` and the sine partner for `m < 0`.
    pub fn real_mode(l_max: usize, n: usize, m: i32) -> Self {
        let mut s = SphFn::zeros(l_max);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let sg = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        match m.cmp(&0) {
            std::cmp::Ordering::Equal => s.set(n, 0, C64::from(1.0)),
            std::cmp::Ordering::Greater => {
                s.set(n, m, C64::from(r));
                s.set(n, -m, C64::from(sg * r));
            }
            std::cmp::Ordering::Less => {
                let k = -m;
                let sk = if k % 2 == 0 { 1.0 } else { -1.0 };
                s.set(n, k, C64::new(0.0, -r));
                s.set(n, -k, C64::new(0.0, sk * r));
            }
        }
        s
    }

    pub fn constant(l_max: usize, c: f64) -> Self {
        let mut s = SphFn::zeros(l_max);
        s.set(0, 0, C64::from(c * (4.0 * PI).sqrt()));
        s
    }

    pub fn resized(&self, l_max: usize) -> Self {
        let mut s = SphFn::zeros(l_max);
        for n in 0..=l_max.min(self.l_max) {
            for m in -(n as i32)..=(n as i32) {
                s.set(n, m, self.get(n, m));
            }
        }
        s
    }

    pub fn add(&self, o: &SphFn) -> Self {
        let mut s = self.resized(self.l_max.max(o.l_max));
        for n in 0..=o.l_max {
            for m in -(n as i32)..=(n as i32) {
                *s.get_mut(n, m) += o.get(n, m);
            }
        }
        s
    }

    pub fn sub(&self, o: &SphFn) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        SphFn {
            l_max: self.l_max,
            coeffs: self.coeffs.iter().map(|z| z * c).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &SphFn) {
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += v * a;
        }
    }

    /// `sum_n <n>^{2s} sum_m |c_{nm}|^2` (the `L^2(dmu_0)` based norm).
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        (0..=self.l_max)
            .map(|n| {
                let w = (1.0 + (n * (n + 1)) as f64).powf(s);
                w * (-(n as i32)..=(n as i32)).map(|m| self.get(n, m).norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn degree_norm(&self, n: usize) -> f64 {
        (-(n as i32)..=(n as i32))
            .map(|m| self.get(n, m).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, o: &SphFn) -> f64 {
        let top = self.l_max.max(o.l_max);
        let (a, b) = (self.resized(top), o.resized(top));
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// Multiplies each degree by `f(n)`.
    pub fn multiplier(&self, f: impl Fn(usize) -> f64) -> Self {
        let mut s = self.clone();
        for n in 0..=self.l_max {
            let c = f(n);
            for m in -(n as i32)..=(n as i32) {
                *s.get_mut(n, m) *= c;
            }
        }
        s
    }

    /// Column-0 vector of the lifted block at degree `n`.
    pub fn lifted_vec(&self, n: usize) -> Vec<C64> {
        let c = 1.0 / (4.0 * PI * (2 * n + 1) as f64).sqrt();
        (0..=2 * n)
            .map(|a| {
                let m = n as i32 - a as i32;
                self.get(n, m) * sh_phase(m) * c
            })
            .collect()
    }

    fn set_from_lifted(&mut self, n: usize, v: &[C64]) {
        let c = (4.0 * PI * (2 * n + 1) as f64).sqrt();
        for (a, z) in v.iter().enumerate() {
            let m = n as i32 - a as i32;
            self.set(n, m, z * c * sh_phase(-m));
        }
    }

    /// Applies `sigma(n) v` to each lifted column, e.g. a left-invariant
    /// differential operator.
    pub fn apply_endo(&self, sigma: impl Fn(RepLabel) -> CMat) -> Self {
        let mut s = SphFn::zeros(self.l_max);
        for n in 0..=self.l_max {
            let v = nalgebra::DVector::from_vec(self.lifted_vec(n));
            let w = sigma(RepLabel::integer(n as u32)) * v;
            s.set_from_lifted(n, w.as_slice());
        }
        s
    }

    /// Derivative along the frame field `X_j` (`j` = 1, 2, 3).
    pub fn frame_derivative(&self, j: usize) -> Self {
        self.apply_endo(|l| crate::repr::frame_symbol(j, l))
    }

    pub fn laplacian(&self) -> Self {
        self.multiplier(|n| -((n * (n + 1)) as f64))
    }

    pub fn real_part(&self) -> Self {
        // symmetrize c_{n,-m} = (-1)^m conj(c_{n,m})
        let mut s = self.clone();
        for n in 0..=self.l_max {
            for m in -(n as i32)..=(n as i32) {
                let sg = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let v = (self.get(n, m) + self.get(n, -m).conj() * sg) * 0.5;
                s.set(n, m, v);
            }
        }
        s
    }

    /// Lift: column 0 of integer blocks.
    pub fn lift(&self) -> SpectralFn {
        let mut s = SpectralFn::zeros(RepLabel::integer(self.l_max as u32));
        for n in 0..=self.l_max {
            let v = self.lifted_vec(n);
            let b = &mut s.blocks[2 * n];
            for (a, z) in v.into_iter().enumerate() {
                b[(a, n)] = z;
            }
        }
        s
    }

    /// Inverse of [`SphFn::lift`]; rejects data that is not T3-invariant.
    pub fn project(a: &SpectralFn, tol: f64) -> Result<SphFn> {
        let l_max = (a.l_max.twice_l / 2) as usize;
        let mut s = SphFn::zeros(l_max);
        for (t, b) in a.blocks.iter().enumerate() {
            let d = t + 1;
            for i in 0..d {
                for j in 0..d {
                    let keep = t % 2 == 0 && j == t / 2;
                    if !keep && b[(i, j)].norm() > tol {
                        return Err(Error::NotInvariant {
                            twice_l: t as u32,
                            row: i,
                            col: j,
                            magnitude: b[(i, j)].norm(),
                        });
                    }
                }
            }
            if t % 2 == 0 {
                let n = t / 2;
                let v: Vec<C64> = (0..d).map(|i| b[(i, n)]).collect();
                s.set_from_lifted(n, &v);
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let coeffs: Vec<SphCoeff> = (0..=self.l_max)
            .flat_map(|n| (-(n as i32)..=(n as i32)).map(move |m| (n, m)))
            .filter(|&(n, m)| self.get(n, m).norm() > 0.0)
            .map(|(n, m)| SphCoeff {
                n,
                m,
                re: self.get(n, m).re,
                im: self.get(n, m).im,
            })
            .collect();
        serde_json::json!({ "l_max": self.l_max, "coeffs": coeffs })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            l_max: usize,
            #[serde(default)]
            coeffs: Vec<SphCoeff>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        let mut s = SphFn::zeros(raw.l_max);
        for c in raw.coeffs {
            if c.n > raw.l_max || c.m.unsigned_abs() as usize > c.n {
                return Err(Error::Shape(format!("coefficient ({}, {}) out of range", c.n, c.m)));
            }
            s.set(c.n, c.m, C64::new(c.re, c.im));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphCoeff {
    pub n: usize,
    pub m: i32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Dot product of surface gradients, `grad f . grad g = sum_j X_j f X_j g`.
pub fn grad_dot(grid: &HopfGrid, f: &SphFn, g: &SphFn) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for j in 1..=3 {
        let a = grid.synth(&f.frame_derivative(j));
        let b = grid.synth(&g.frame_derivative(j));
        for i in 0..out.len() {
            out[i] += a[i] * b[i];
        }
    }
    out
}

/// Frame components `X_j f` on the grid.
pub fn frame_values(grid: &HopfGrid, f: &SphFn) -> [Vec<f64>; 3] {
    [
        grid.synth(&f.frame_derivative(1)),
        grid.synth(&f.frame_derivative(2)),
        grid.synth(&f.frame_derivative(3)),
    ]
}
