//! Symbols `a(x, l)`: one matrix per representation label and grid node.
//!
//! The grid representation is canonical. Operations in `x` (derivatives,
//! cutoffs, resampling) go through the grid's Peter-Weyl transform entry by
//! entry, which is the x-spectral mirror materialized on demand.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::diffops::{d_block, DiffIndex, TaylorOps};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, CMat, C64};
use crate::repr::{frame_symbol, sigma_mat, wigner_matrix, PiTag, RepLabel};
use crate::transform::{Grid, GridFn, SpectralFn};

#[derive(Clone)]
pub struct Symbol {
    pub grid: Arc<dyn Grid>,
    pub twice_lo: u32,
    pub twice_hi: u32,
    /// Half-integer labels are not stored (enough for T3-invariant inputs).
    pub integer_only: bool,
    /// `blocks[t - twice_lo][node]`; empty for labels that are not stored.
    pub blocks: Vec<Vec<CMat>>,
    /// Declared order `m`, metadata only.
    pub order: f64,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("grid", &self.grid.id())
            .field("twice_lo", &self.twice_lo)
            .field("twice_hi", &self.twice_hi)
            .field("integer_only", &self.integer_only)
            .field("order", &self.order)
            .finish()
    }
}

fn stored(t: u32, integer_only: bool) -> bool {
    !integer_only || t % 2 == 0
}

impl Symbol {
    pub fn from_fn(
        grid: Arc<dyn Grid>,
        twice_lo: u32,
        twice_hi: u32,
        integer_only: bool,
        order: f64,
        f: impl Fn(RepLabel, usize) -> CMat + Sync,
    ) -> Symbol {
        Self::try_from_fn(grid, twice_lo, twice_hi, integer_only, order, |l, i| Ok(f(l, i)))
            .expect("infallible")
    }

    pub fn try_from_fn(
        grid: Arc<dyn Grid>,
        twice_lo: u32,
        twice_hi: u32,
        integer_only: bool,
        order: f64,
        f: impl Fn(RepLabel, usize) -> Result<CMat> + Sync,
    ) -> Result<Symbol> {
        let n = grid.len();
        let blocks = (twice_lo..=twice_hi)
            .map(|t| {
                if !stored(t, integer_only) {
                    return Ok(Vec::new());
                }
                let l = RepLabel::new(t);
                (0..n).into_par_iter().map(|i| f(l, i)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Symbol {
            grid,
            twice_lo,
            twice_hi,
            integer_only,
            blocks,
            order,
        })
    }

    /// x-independent symbol.
    pub fn multiplier(
        grid: Arc<dyn Grid>,
        twice_lo: u32,
        twice_hi: u32,
        integer_only: bool,
        order: f64,
        f: impl Fn(RepLabel) -> CMat,
    ) -> Symbol {
        let n = grid.len();
        let blocks = (twice_lo..=twice_hi)
            .map(|t| {
                if stored(t, integer_only) {
                    vec![f(RepLabel::new(t)); n]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Symbol {
            grid,
            twice_lo,
            twice_hi,
            integer_only,
            blocks,
            order,
        }
    }

    pub fn identity(grid: Arc<dyn Grid>, twice_lo: u32, twice_hi: u32, integer_only: bool) -> Symbol {
        Self::multiplier(grid, twice_lo, twice_hi, integer_only, 0.0, |l| CMat::identity(l.dim(), l.dim()))
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn has(&self, l: RepLabel) -> bool {
        l.twice_l >= self.twice_lo && l.twice_l <= self.twice_hi && !self.blocks[(l.twice_l - self.twice_lo) as usize].is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = RepLabel> + '_ {
        (self.twice_lo..=self.twice_hi).map(RepLabel::new).filter(|&l| self.has(l))
    }

    pub fn label_blocks(&self, l: RepLabel) -> Result<&[CMat]> {
        if !self.has(l) {
            return Err(Error::Margin {
                needed: l.twice_l,
                available: self.twice_hi,
            });
        }
        Ok(&self.blocks[(l.twice_l - self.twice_lo) as usize])
    }

    pub fn block(&self, l: RepLabel, node: usize) -> &CMat {
        &self.blocks[(l.twice_l - self.twice_lo) as usize][node]
    }

    fn with_blocks(&self, twice_lo: u32, twice_hi: u32, order: f64, blocks: Vec<Vec<CMat>>) -> Symbol {
        Symbol {
            grid: self.grid.clone(),
            twice_lo,
            twice_hi,
            integer_only: self.integer_only,
            blocks,
            order,
        }
    }

    pub fn map(&self, f: impl Fn(RepLabel, usize, &CMat) -> CMat + Sync) -> Symbol {
        let blocks = (self.twice_lo..=self.twice_hi)
            .map(|t| {
                let l = RepLabel::new(t);
                let b = &self.blocks[(t - self.twice_lo) as usize];
                b.par_iter().enumerate().map(|(i, m)| f(l, i, m)).collect()
            })
            .collect();
        self.with_blocks(self.twice_lo, self.twice_hi, self.order, blocks)
    }

    /// Restricts to the labels `twice_lo..=twice_hi`.
    pub fn restricted(&self, twice_lo: u32, twice_hi: u32) -> Result<Symbol> {
        if twice_lo < self.twice_lo || twice_hi > self.twice_hi {
            return Err(Error::Margin {
                needed: twice_hi,
                available: self.twice_hi,
            });
        }
        let blocks = (twice_lo..=twice_hi)
            .map(|t| self.blocks[(t - self.twice_lo) as usize].clone())
            .collect();
        Ok(self.with_blocks(twice_lo, twice_hi, self.order, blocks))
    }

    /// Pointwise combination over the common label range.
    pub fn zip_with(&self, o: &Symbol, order: f64, f: impl Fn(&CMat, &CMat) -> CMat + Sync) -> Result<Symbol> {
        if self.nodes() != o.nodes() || self.grid.id() != o.grid.id() {
            return Err(Error::Shape(format!("symbols on grids {} and {}", self.grid.id(), o.grid.id())));
        }
        let lo = self.twice_lo.max(o.twice_lo);
        let hi = self.twice_hi.min(o.twice_hi);
        if lo > hi {
            return Err(Error::Margin {
                needed: lo,
                available: hi,
            });
        }
        let blocks = (lo..=hi)
            .map(|t| {
                let l = RepLabel::new(t);
                if !(self.has(l) && o.has(l)) {
                    return Vec::new();
                }
                let (a, b) = (&self.blocks[(t - self.twice_lo) as usize], &o.blocks[(t - o.twice_lo) as usize]);
                a.par_iter().zip(b.par_iter()).map(|(x, y)| f(x, y)).collect()
            })
            .collect();
        let mut s = self.with_blocks(lo, hi, order, blocks);
        s.integer_only = self.integer_only || o.integer_only;
        Ok(s)
    }

    pub fn add(&self, o: &Symbol) -> Result<Symbol> {
        self.zip_with(o, self.order.max(o.order), |a, b| a + b)
    }

    pub fn sub(&self, o: &Symbol) -> Result<Symbol> {
        self.zip_with(o, self.order.max(o.order), |a, b| a - b)
    }

    /// Pointwise product `a(x,l) b(x,l)`.
    pub fn mul(&self, o: &Symbol) -> Result<Symbol> {
        self.zip_with(o, self.order + o.order, |a, b| a * b)
    }

    pub fn scale(&self, c: C64) -> Symbol {
        self.map(|_, _, m| m * c)
    }

    /// Pointwise adjoint `a(x,l)^*`.
    pub fn adjoint(&self) -> Symbol {
        self.map(|_, _, m| m.adjoint())
    }

    /// Multiplies every block by a scalar field on the grid.
    pub fn times_field(&self, c: &[f64]) -> Symbol {
        self.map(|_, i, m| m * C64::from(c[i]))
    }

    pub fn max_abs_diff(&self, o: &Symbol) -> Result<f64> {
        let d = self.sub(o)?;
        Ok(d.blocks
            .iter()
            .flatten()
            .flat_map(|m| m.iter())
            .fold(0.0, |a, z| a.max(z.norm())))
    }

    /// Runs `f` on the x-spectrum of every matrix entry, label by label:
    /// each entry is analyzed to `x_band`, `f(l, spectrum)` transforms it,
    /// and the result is synthesized back on `target`.
    pub fn map_x_spectrum(
        &self,
        x_band: RepLabel,
        target: Option<Arc<dyn Grid>>,
        f: impl Fn(RepLabel, &SpectralFn) -> SpectralFn + Sync,
    ) -> Result<Symbol> {
        let target = target.unwrap_or_else(|| self.grid.clone());
        let n_in = self.nodes();
        let n_out = target.len();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for t in self.twice_lo..=self.twice_hi {
            let l = RepLabel::new(t);
            if !self.has(l) {
                blocks.push(Vec::new());
                continue;
            }
            let src = &self.blocks[(t - self.twice_lo) as usize];
            let d = l.dim();
            let entries: Vec<Vec<C64>> = (0..d * d)
                .into_par_iter()
                .map(|e| {
                    let (r, c) = (e / d, e % d);
                    let vals: Vec<C64> = (0..n_in).map(|i| src[i][(r, c)]).collect();
                    let spec = self.grid.forward(&vals, x_band)?;
                    Ok(target.inverse(&f(l, &spec)))
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push((0..n_out).map(|i| CMat::from_fn(d, d, |r, c| entries[r * d + c][i])).collect());
        }
        Ok(Symbol {
            grid: target,
            twice_lo: self.twice_lo,
            twice_hi: self.twice_hi,
            integer_only: self.integer_only,
            blocks,
            order: self.order,
        })
    }

    /// Applies the left-invariant operator with symbol `op(eta)` to every
    /// entry in `x`.
    pub fn x_apply(&self, x_band: RepLabel, op: impl Fn(RepLabel) -> CMat + Sync) -> Result<Symbol> {
        self.map_x_spectrum(x_band, None, |_, s| s.map_blocks(|eta, b| op(eta) * b))
    }

    pub fn x_pi(&self, tag: PiTag, x_band: RepLabel) -> Result<Symbol> {
        self.x_apply(x_band, |eta| sigma_mat(tag, eta))
    }

    pub fn x_taylor(&self, ops: &TaylorOps, alpha: DiffIndex, x_band: RepLabel) -> Result<Symbol> {
        if alpha.order() == 0 {
            return Ok(self.clone());
        }
        self.x_apply(x_band, |eta| ops.symbol(alpha, eta))
    }

    /// Samples the symbol on another grid through its x-spectrum.
    pub fn resample(&self, target: Arc<dyn Grid>, x_band: RepLabel) -> Result<Symbol> {
        self.map_x_spectrum(x_band, Some(target), |_, s| s.clone())
    }

    /// `D_tag a` at every node. Labels without both neighbours are dropped,
    /// except `l = 0` whose lower neighbour has zero weight.
    pub fn difference(&self, tag: PiTag) -> Result<Symbol> {
        if self.integer_only {
            return Err(Error::Margin {
                needed: self.twice_lo + 1,
                available: self.twice_hi,
            });
        }
        let lo = if self.twice_lo == 0 { 0 } else { self.twice_lo + 1 };
        if self.twice_hi == 0 || lo > self.twice_hi - 1 {
            return Err(Error::Margin {
                needed: self.twice_hi + 1,
                available: self.twice_hi,
            });
        }
        let hi = self.twice_hi - 1;
        let n = self.nodes();
        let blocks = (lo..=hi)
            .map(|t| {
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let get = |k: u32| -> Option<&CMat> {
                            if k >= self.twice_lo && k <= self.twice_hi {
                                self.blocks[(k - self.twice_lo) as usize].get(i)
                            } else {
                                None
                            }
                        };
                        d_block(tag, &get, RepLabel::new(t))
                    })
                    .collect()
            })
            .collect();
        Ok(self.with_blocks(lo, hi, self.order - 1.0, blocks))
    }

    pub fn d_multi(&self, alpha: DiffIndex) -> Result<Symbol> {
        let mut s = self.clone();
        for tag in alpha.tags() {
            s = s.difference(tag)?;
        }
        Ok(s)
    }

    /// `Op(a) f` on the grid: `sum_l (2l+1) Tr(a(x,l) f^(l) T^l(x))`.
    pub fn quantize(&self, f: &SpectralFn) -> Result<GridFn> {
        let mut live = Vec::new();
        for l in f.labels() {
            let b = f.block(l);
            let cols: Vec<usize> = (0..b.ncols()).filter(|&c| b.column(c).iter().any(|z| z.norm() > 0.0)).collect();
            if cols.is_empty() {
                continue;
            }
            if !self.has(l) {
                return Err(Error::Margin {
                    needed: l.twice_l,
                    available: self.twice_hi,
                });
            }
            live.push((l, cols));
        }
        let vals = (0..self.nodes())
            .into_par_iter()
            .map(|i| {
                let mut s = C64::new(0.0, 0.0);
                for (l, cols) in &live {
                    let a = self.block(*l, i);
                    let b = f.block(*l);
                    let d = l.dim();
                    let mut m = CMat::zeros(d, d);
                    for &c in cols {
                        let v = a * b.column(c);
                        m.set_column(c, &v);
                    }
                    s += self.grid.trace_with(i, *l, &m) * d as f64;
                }
                s
            })
            .collect();
        Ok(GridFn::new(vals))
    }

    pub fn quantize_spectral(&self, f: &SpectralFn, l_out: RepLabel) -> Result<SpectralFn> {
        let g = self.quantize(f)?;
        self.grid.forward(&g.values, l_out)
    }

    /// `sup_{x,l} <l>^{|beta| - m - |alpha|} |X^alpha D^beta a|` over
    /// `|alpha| <= k`, `|beta| <= j`; `X^alpha` are ordered words in the real
    /// frame `X_1, X_2, X_3`.
    pub fn symbol_norm(&self, k: usize, j: usize, m: f64, x_band: RepLabel) -> Result<f64> {
        let mut best: f64 = 0.0;
        for beta in DiffIndex::up_to(j) {
            let db = self.d_multi(beta)?;
            for word in frame_words(k) {
                let mut s = db.clone();
                for &fj in &word {
                    s = s.x_apply(x_band, |eta| frame_symbol(fj, eta))?;
                }
                for l in s.labels() {
                    let w = l.bracket().powf(beta.order() as f64 - m - word.len() as f64);
                    for b in s.label_blocks(l)? {
                        best = best.max(w * op_norm(b));
                    }
                }
            }
        }
        Ok(best)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let blocks: std::collections::BTreeMap<String, Vec<Vec<f64>>> = self
            .labels()
            .map(|l| {
                let nodes = self.label_blocks(l).expect("stored label");
                let v = nodes
                    .iter()
                    .map(|m| {
                        let mut out = Vec::with_capacity(2 * m.len());
                        for r in 0..m.nrows() {
                            for c in 0..m.ncols() {
                                out.push(m[(r, c)].re);
                                out.push(m[(r, c)].im);
                            }
                        }
                        out
                    })
                    .collect();
                (l.twice_l.to_string(), v)
            })
            .collect();
        serde_json::json!({
            "order": self.order,
            "twice_lo": self.twice_lo,
            "twice_hi": self.twice_hi,
            "integer_only": self.integer_only,
            "grid": self.grid.id(),
            "nodes": self.nodes(),
            "blocks": blocks,
        })
    }

    pub fn from_json(v: &serde_json::Value, grid: Arc<dyn Grid>) -> Result<Symbol> {
        #[derive(Deserialize, Serialize)]
        struct Raw {
            order: f64,
            twice_lo: u32,
            twice_hi: u32,
            integer_only: bool,
            grid: String,
            nodes: usize,
            blocks: std::collections::BTreeMap<String, Vec<Vec<f64>>>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        if raw.grid != grid.id() || raw.nodes != grid.len() {
            return Err(Error::Shape(format!("symbol stored on {}, given {}", raw.grid, grid.id())));
        }
        let mut blocks = vec![Vec::new(); (raw.twice_hi - raw.twice_lo + 1) as usize];
        for (k, nodes) in raw.blocks {
            let t: u32 = k.parse().map_err(|_| Error::Shape(format!("bad label key {k}")))?;
            if t < raw.twice_lo || t > raw.twice_hi || nodes.len() != raw.nodes {
                return Err(Error::Shape(format!("label {t} out of range or wrong node count")));
            }
            let d = t as usize + 1;
            blocks[(t - raw.twice_lo) as usize] = nodes
                .iter()
                .map(|v| {
                    if v.len() != 2 * d * d {
                        return Err(Error::Shape(format!("block at 2l={t} has {} reals", v.len())));
                    }
                    Ok(CMat::from_fn(d, d, |r, c| C64::new(v[2 * (r * d + c)], v[2 * (r * d + c) + 1])))
                })
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(Symbol {
            grid,
            twice_lo: raw.twice_lo,
            twice_hi: raw.twice_hi,
            integer_only: raw.integer_only,
            blocks,
            order: raw.order,
        })
    }
}

/// Ordered words of length `<= k` in the frame indices 1, 2, 3.
fn frame_words(k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for w in &layer {
            for j in 1..=3 {
                let mut v: Vec<usize> = w.clone();
                v.push(j);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// `sigma[A](x,l) = T^l(x)^* (A T^l)(x)` with `A` applied to every matrix
/// entry `T^l_{kj}`; needs a grid that resolves all of SU(2).
pub fn symbol_of(
    grid: Arc<dyn Grid>,
    twice_lo: u32,
    twice_hi: u32,
    op: impl Fn(&SpectralFn) -> Result<Vec<C64>> + Sync,
) -> Result<Symbol> {
    if grid.t3_only() {
        return Err(Error::Shape("symbol extraction needs a full SU(2) grid".into()));
    }
    let n = grid.len();
    let mut blocks = Vec::new();
    for t in twice_lo..=twice_hi {
        let l = RepLabel::new(t);
        let d = l.dim();
        // images[k][j] = A T_{kj} on the grid; T_{kj} has f^(l)[j][k] = 1/(2l+1)
        let images: Vec<Vec<C64>> = (0..d * d)
            .into_par_iter()
            .map(|e| {
                let (k, j) = (e / d, e % d);
                let mut b = CMat::zeros(d, d);
                b[(j, k)] = C64::from(1.0 / d as f64);
                op(&SpectralFn::single(l, l, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let nodes = (0..n)
            .into_par_iter()
            .map(|i| {
                let tx = wigner_matrix(l, grid.point(i));
                let at = CMat::from_fn(d, d, |k, j| images[k * d + j][i]);
                tx.adjoint() * at
            })
            .collect();
        blocks.push(nodes);
    }
    Ok(Symbol {
        grid,
        twice_lo,
        twice_hi,
        integer_only: false,
        blocks,
        order: 0.0,
    })
}

/// `sum_{|alpha| <= r} D^alpha a . X^(alpha) b`.
pub fn compose(a: &Symbol, b: &Symbol, ops: &TaylorOps, r: usize, x_band: RepLabel) -> Result<Symbol> {
    if r > ops.order {
        return Err(Error::Config(format!("composition order {r} above Taylor order {}", ops.order)));
    }
    let mut acc: Option<Symbol> = None;
    for alpha in DiffIndex::up_to(r) {
        let da = a.d_multi(alpha)?;
        let xb = b.x_taylor(ops, alpha, x_band)?;
        let term = da.mul(&xb)?;
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term)?,
        });
    }
    let mut s = acc.expect("alpha = 0 is always present");
    s.order = a.order + b.order;
    Ok(s)
}

/// `sum_{|alpha| <= r} D^alpha X^(alpha) a^*`.
pub fn adjoint_symbol(a: &Symbol, ops: &TaylorOps, r: usize, x_band: RepLabel) -> Result<Symbol> {
    if r > ops.order {
        return Err(Error::Config(format!("adjoint order {r} above Taylor order {}", ops.order)));
    }
    let star = a.adjoint();
    let mut acc: Option<Symbol> = None;
    for alpha in DiffIndex::up_to(r) {
        let term = star.x_taylor(ops, alpha, x_band)?.d_multi(alpha)?;
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term)?,
        });
    }
    let mut s = acc.expect("alpha = 0 is always present");
    s.order = a.order;
    Ok(s)
}
