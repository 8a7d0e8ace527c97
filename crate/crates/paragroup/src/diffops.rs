//! Left-invariant fields `Pi_+, Pi_-, Pi_0`, the difference operators
//! `D_q f^ = (q f)^` for the tuple `q_+ = -conj(b)`, `q_- = b`,
//! `q_0 = a - conj(a)`, and Taylor operators `X^(alpha)` up to order 2.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, C64};
use crate::repr::{sigma_mat, EulerPoint, PiTag, RepLabel};
use crate::transform::{EulerGrid, Grid, SpectralFn};

/// `(Pi f)^(l) = sigma(l) f^(l)`.
pub fn apply_pi(tag: PiTag, a: &SpectralFn) -> SpectralFn {
    a.map_blocks(|l, b| sigma_mat(tag, l) * b)
}

/// Multi-index `(a, b, c)` for `Pi_+^a Pi_-^b Pi_0^c` or `q_+^a q_-^b q_0^c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiffIndex(pub [u8; 3]);

impl DiffIndex {
    pub fn order(self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn unit(tag: PiTag) -> Self {
        let mut a = [0; 3];
        a[tag_index(tag)] = 1;
        DiffIndex(a)
    }

    /// All indices with `|alpha| <= order`, graded then lexicographic.
    pub fn up_to(order: usize) -> Vec<DiffIndex> {
        let mut v = Vec::new();
        for k in 0..=order {
            for a in (0..=k).rev() {
                for b in (0..=k - a).rev() {
                    v.push(DiffIndex([a as u8, b as u8, (k - a - b) as u8]));
                }
            }
        }
        v
    }

    /// Tags in normal order, e.g. `[Plus, Plus, Zero]` for `(2, 0, 1)`.
    pub fn tags(self) -> Vec<PiTag> {
        let mut t = Vec::new();
        for (i, &k) in self.0.iter().enumerate() {
            for _ in 0..k {
                t.push(PiTag::ALL[i]);
            }
        }
        t
    }
}

fn tag_index(tag: PiTag) -> usize {
    match tag {
        PiTag::Plus => 0,
        PiTag::Minus => 1,
        PiTag::Zero => 2,
    }
}

/// Symbol of `Pi^gamma` in normal order.
pub fn pi_monomial(gamma: DiffIndex, l: RepLabel) -> CMat {
    let d = l.dim();
    let mut m = CMat::identity(d, d);
    for tag in gamma.tags() {
        m *= sigma_mat(tag, l);
    }
    m
}

/// `q_tag(x)`, read off the fundamental representation.
pub fn q_value(tag: PiTag, x: EulerPoint) -> C64 {
    let t = x.to_su2();
    match tag {
        PiTag::Plus => -t.b.conj(),
        PiTag::Minus => t.b,
        PiTag::Zero => t.a - t.a.conj(),
    }
}

pub fn q_power(beta: DiffIndex, x: EulerPoint) -> C64 {
    let mut v = C64::new(1.0, 0.0);
    for tag in beta.tags() {
        v *= q_value(tag, x);
    }
    v
}

/// Entries of `T^{1/2}(x) - Id`, the four-entry fundamental tuple.
pub fn fundamental_q(x: EulerPoint) -> [[C64; 2]; 2] {
    let m = x.to_su2().matrix();
    [
        [m[(0, 0)] - 1.0, m[(0, 1)]],
        [m[(1, 0)], m[(1, 1)] - 1.0],
    ]
}

fn entry(b: Option<&CMat>, l: RepLabel, twice_n: i32, twice_m: i32) -> C64 {
    let t = l.twice_l as i32;
    if twice_n.abs() > t || twice_m.abs() > t {
        return C64::new(0.0, 0.0);
    }
    match b {
        Some(b) => b[(l.pos(twice_n), l.pos(twice_m))],
        None => C64::new(0.0, 0.0),
    }
}

/// One block of `D_tag a` at label `l`. `get(twice_l)` returns the block of
/// `a` at that label, or `None` when it is absent (read as zero).
pub fn d_block<'a>(tag: PiTag, get: &dyn Fn(u32) -> Option<&'a CMat>, l: RepLabel) -> CMat {
    let d = l.dim();
    let lf = l.l();
    let t = l.twice_l;
    let lo_l = if t >= 1 { Some(RepLabel::new(t - 1)) } else { None };
    let hi_l = RepLabel::new(t + 1);
    let lo = lo_l.and_then(|k| get(k.twice_l));
    let hi = get(hi_l.twice_l);
    let w = 1.0 / (2.0 * lf + 1.0);
    let mut out = CMat::zeros(d, d);
    let rd = |b: Option<&CMat>, k: Option<RepLabel>, tn: i32, tm: i32| -> C64 {
        match k {
            Some(k) => entry(b, k, tn, tm),
            None => C64::new(0.0, 0.0),
        }
    };
    let sq = |v: f64| v.max(0.0).sqrt();
    for (i, tn) in l.twice_indices().enumerate() {
        let n = tn as f64 / 2.0;
        for (j, tm) in l.twice_indices().enumerate() {
            let m = tm as f64 / 2.0;
            let v = match tag {
                PiTag::Plus => {
                    rd(lo, lo_l, tn + 1, tm - 1) * sq((lf + m) * (lf - n))
                        - rd(hi, Some(hi_l), tn + 1, tm - 1) * sq((lf - m + 1.0) * (lf + n + 1.0))
                }
                PiTag::Minus => {
                    rd(lo, lo_l, tn - 1, tm + 1) * sq((lf - m) * (lf + n))
                        - rd(hi, Some(hi_l), tn - 1, tm + 1) * sq((lf + m + 1.0) * (lf - n + 1.0))
                }
                PiTag::Zero => {
                    rd(lo, lo_l, tn + 1, tm + 1) * sq((lf - m) * (lf - n))
                        + rd(hi, Some(hi_l), tn + 1, tm + 1) * sq((lf + m + 1.0) * (lf + n + 1.0))
                        - rd(lo, lo_l, tn - 1, tm - 1) * sq((lf + m) * (lf + n))
                        - rd(hi, Some(hi_l), tn - 1, tm - 1) * sq((lf - m + 1.0) * (lf - n + 1.0))
                }
            };
            out[(i, j)] = v * w;
        }
    }
    out
}

/// Result of differencing a spectral function. Blocks above
/// `exact_through` read the zero padding past the input's top label and are
/// only exact if the input really is band-limited there.
#[derive(Clone, Debug)]
pub struct Differenced {
    pub value: SpectralFn,
    pub exact_through: RepLabel,
}

/// `D_tag a`; output carries one extra half-degree so that band-limited
/// inputs are differenced exactly.
pub fn rt_difference(tag: PiTag, a: &SpectralFn) -> Differenced {
    let top = RepLabel::new(a.l_max.twice_l + 1);
    let get = |t: u32| a.blocks.get(t as usize);
    let blocks = (0..=top.twice_l)
        .into_par_iter()
        .map(|t| d_block(tag, &get, RepLabel::new(t)))
        .collect();
    Differenced {
        value: SpectralFn { l_max: top, blocks },
        exact_through: RepLabel::new(a.l_max.twice_l.saturating_sub(1)),
    }
}

/// `D^alpha a = D_+^a D_-^b D_0^c a` (the differences commute).
pub fn d_multi(alpha: DiffIndex, a: &SpectralFn) -> SpectralFn {
    let mut v = a.clone();
    for tag in alpha.tags() {
        v = rt_difference(tag, &v).value;
    }
    v
}

/// Taylor operators `X^(alpha) = sum_gamma coef[alpha][gamma] Pi^gamma`
/// over the normal-ordered monomials of degree `<= order`.
#[derive(Clone, Debug)]
pub struct TaylorOps {
    pub order: usize,
    pub indices: Vec<DiffIndex>,
    /// `moments[(gamma, beta)] = (Pi^gamma q^beta)(e)`.
    pub moments: DMatrix<f64>,
    pub coef: DMatrix<f64>,
}

impl TaylorOps {
    /// Builds the operators from the moment system. The expansion is
    /// `f(xy) ~ sum_alpha q^alpha(y^{-1}) X^(alpha) f(x)`; since
    /// `q(y^{-1}) = -q(y)` this makes `X^(alpha) q^beta(e) = (-1)^|alpha| delta`.
    pub fn new(order: usize) -> Self {
        assert!(order <= 2, "Taylor operators are implemented up to order 2");
        let indices = DiffIndex::up_to(order);
        let k = indices.len();
        let grid = EulerGrid::for_degree(2 * order as u32);
        let top = RepLabel::new(order as u32);
        let mut moments = DMatrix::<f64>::zeros(k, k);
        for (b, &beta) in indices.iter().enumerate() {
            let vals = grid.sample(|x| q_power(beta, x));
            let spec = grid.forward(&vals, top).expect("grid sized for the moment system");
            for (g, &gamma) in indices.iter().enumerate() {
                // (Pi^gamma f)(e) = sum_l (2l+1) Tr(sigma^gamma f^(l))
                let v: C64 = spec
                    .labels()
                    .map(|l| (pi_monomial(gamma, l) * spec.block(l)).trace() * l.dim() as f64)
                    .sum();
                debug_assert!(v.im.abs() < 1e-10);
                moments[(g, b)] = v.re;
            }
        }
        let inv = moments.clone().try_inverse().expect("moment system is nonsingular");
        let mut coef = inv;
        for (a, alpha) in indices.iter().enumerate() {
            if alpha.order() % 2 == 1 {
                coef.row_mut(a).neg_mut();
            }
        }
        TaylorOps {
            order,
            indices,
            moments,
            coef,
        }
    }

    pub fn position(&self, alpha: DiffIndex) -> usize {
        self.indices
            .iter()
            .position(|&a| a == alpha)
            .expect("multi-index within the Taylor order")
    }

    /// Symbol of `X^(alpha)` at label `l`.
    pub fn symbol(&self, alpha: DiffIndex, l: RepLabel) -> CMat {
        let a = self.position(alpha);
        let d = l.dim();
        let mut m = CMat::zeros(d, d);
        for (g, &gamma) in self.indices.iter().enumerate() {
            let c = self.coef[(a, g)];
            if c != 0.0 {
                m += pi_monomial(gamma, l) * C64::from(c);
            }
        }
        m
    }

    pub fn apply(&self, alpha: DiffIndex, f: &SpectralFn) -> SpectralFn {
        f.map_blocks(|l, b| self.symbol(alpha, l) * b)
    }

    /// Largest `|X^(alpha) q^beta(e) - (-1)^|alpha| delta|` over the table.
    pub fn moment_residual(&self) -> f64 {
        let prod = &self.coef * &self.moments;
        let mut r: f64 = 0.0;
        for (a, alpha) in self.indices.iter().enumerate() {
            for b in 0..self.indices.len() {
                let want = if a == b {
                    if alpha.order() % 2 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                } else {
                    0.0
                };
                r = r.max((prod[(a, b)] - want).abs());
            }
        }
        r
    }
}
