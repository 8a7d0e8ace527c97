//! Irreducible representations of SU(2) in Euler angles.
//!
//! Matrices `T^l(x)` are indexed `[n][m]` with `n, m` running over
//! `-l..=l`; row/column `k` of a `(2l+1)`-square matrix stores index
//! `n = k - l`. Everything is keyed on `twice_l` so half-integers stay exact.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepLabel {
    pub twice_l: u32,
}

impl RepLabel {
    pub const fn new(twice_l: u32) -> Self {
        RepLabel { twice_l }
    }

    pub const fn integer(l: u32) -> Self {
        RepLabel { twice_l: 2 * l }
    }

    pub fn l(self) -> f64 {
        self.twice_l as f64 / 2.0
    }

    pub fn dim(self) -> usize {
        self.twice_l as usize + 1
    }

    pub fn is_integer(self) -> bool {
        self.twice_l % 2 == 0
    }

    /// `l(l+1)`, the negated Laplace eigenvalue.
    pub fn casimir(self) -> f64 {
        let l = self.l();
        l * (l + 1.0)
    }

    /// `|xi| = sqrt(l(l+1))`.
    pub fn freq(self) -> f64 {
        self.casimir().sqrt()
    }

    /// `<xi> = sqrt(1 + l(l+1))`.
    pub fn bracket(self) -> f64 {
        (1.0 + self.casimir()).sqrt()
    }

    /// Doubled indices `2n` for `n = -l..=l`.
    pub fn twice_indices(self) -> impl Iterator<Item = i32> {
        let t = self.twice_l as i32;
        (0..=self.twice_l).map(move |k| 2 * k as i32 - t)
    }

    /// Matrix position of the doubled index `2n`.
    pub fn pos(self, twice_n: i32) -> usize {
        ((twice_n + self.twice_l as i32) / 2) as usize
    }

    pub fn check(self, twice_n: i32, twice_m: i32) -> Result<()> {
        let t = self.twice_l as i32;
        if twice_n.abs() > t || twice_m.abs() > t {
            return Err(Error::IndexOutOfRange {
                twice_l: self.twice_l,
                twice_n,
                twice_m,
            });
        }
        if (twice_n - t).rem_euclid(2) != 0 || (twice_m - t).rem_euclid(2) != 0 {
            return Err(Error::Parity {
                twice_l: self.twice_l,
                twice_n,
                twice_m,
            });
        }
        Ok(())
    }
}

/// Euler angles: `phi` in [0, 2pi), `theta` in [0, pi], `psi` in [-2pi, 2pi).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerPoint {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerPoint {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        EulerPoint { phi, theta, psi }.normalized()
    }

    pub fn identity() -> Self {
        EulerPoint {
            phi: 0.0,
            theta: 0.0,
            psi: 0.0,
        }
    }

    /// Brings the angles into their canonical ranges without changing the
    /// group element. `(phi, psi)` and `(phi + 2pi, psi + 2pi)` coincide.
    pub fn normalized(self) -> Self {
        let theta = self.theta.clamp(0.0, PI);
        let k = (self.phi / (2.0 * PI)).floor();
        let phi = self.phi - 2.0 * PI * k;
        let psi = (self.psi - 2.0 * PI * k + 2.0 * PI).rem_euclid(4.0 * PI) - 2.0 * PI;
        EulerPoint { phi, theta, psi }
    }

    /// `theta` at 0 or pi, where the chart degenerates.
    pub fn is_singular(self) -> bool {
        self.theta < 1e-12 || (PI - self.theta) < 1e-12
    }

    pub fn to_su2(self) -> Su2 {
        let (c, s) = ((self.theta / 2.0).cos(), (self.theta / 2.0).sin());
        Su2 {
            a: C64::from_polar(c, (self.phi + self.psi) / 2.0),
            b: I * C64::from_polar(s, (self.phi - self.psi) / 2.0),
        }
    }

    pub fn from_su2(x: Su2) -> Self {
        let (ra, rb) = (x.a.norm(), x.b.norm());
        let theta = 2.0 * rb.atan2(ra);
        let sum = if ra > 1e-14 { 2.0 * x.a.arg() } else { 0.0 };
        let diff = if rb > 1e-14 { 2.0 * (x.b * (-I)).arg() } else { 0.0 };
        let (sum, diff) = match (ra > 1e-14, rb > 1e-14) {
            (true, true) => (sum, diff),
            (true, false) => (sum, sum),
            (false, true) => (diff, diff),
            (false, false) => (0.0, 0.0),
        };
        EulerPoint {
            phi: (sum + diff) / 2.0,
            theta,
            psi: (sum - diff) / 2.0,
        }
        .normalized()
    }
}

/// Element `[[a, b], [-conj(b), conj(a)]]` of SU(2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2 {
    pub a: C64,
    pub b: C64,
}

impl Su2 {
    pub fn identity() -> Self {
        Su2 {
            a: C64::new(1.0, 0.0),
            b: C64::new(0.0, 0.0),
        }
    }

    pub fn mul(self, y: Su2) -> Su2 {
        Su2 {
            a: self.a * y.a - self.b * y.b.conj(),
            b: self.a * y.b + self.b * y.a.conj(),
        }
    }

    pub fn inv(self) -> Su2 {
        Su2 {
            a: self.a.conj(),
            b: -self.b,
        }
    }

    pub fn matrix(self) -> CMat {
        CMat::from_row_slice(2, 2, &[self.a, self.b, -self.b.conj(), self.a.conj()])
    }

    /// One-parameter subgroups: `omega_1` (index 1), `omega_2`, `omega_3`.
    pub fn omega(j: usize, t: f64) -> Su2 {
        let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
        match j {
            1 => Su2 {
                a: C64::new(c, 0.0),
                b: C64::new(0.0, s),
            },
            2 => Su2 {
                a: C64::new(c, 0.0),
                b: C64::new(-s, 0.0),
            },
            3 => Su2 {
                a: C64::from_polar(1.0, t / 2.0),
                b: C64::new(0.0, 0.0),
            },
            _ => panic!("omega index must be 1, 2 or 3"),
        }
    }

    /// Geodesic distance to the identity in the bi-invariant metric.
    pub fn dist_to_identity(self) -> f64 {
        2.0 * self.a.re.clamp(-1.0, 1.0).acos()
    }
}

/// Square matrix over `End(H_l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EndoMatrix {
    pub label: RepLabel,
    pub entries: CMat,
}

impl EndoMatrix {
    pub fn zeros(label: RepLabel) -> Self {
        EndoMatrix {
            label,
            entries: CMat::zeros(label.dim(), label.dim()),
        }
    }

    pub fn identity(label: RepLabel) -> Self {
        EndoMatrix {
            label,
            entries: CMat::identity(label.dim(), label.dim()),
        }
    }

    pub fn get(&self, twice_n: i32, twice_m: i32) -> C64 {
        self.entries[(self.label.pos(twice_n), self.label.pos(twice_m))]
    }
}

fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn jacobi(k: i64, a: f64, b: f64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
    for n in 2..=k {
        let n = n as f64;
        let c = 2.0 * n + a + b;
        let a1 = 2.0 * n * (n + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
        let a3 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * c;
        let p2 = (a2 * p1 - a3 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Real Wigner small-d entry `d^l_{n m}(theta)` from the Jacobi-polynomial
/// form; indices doubled.
pub fn small_d(twice_l: u32, twice_n: i32, twice_m: i32, theta: f64) -> f64 {
    let j2 = twice_l as i64;
    let (n2, m2) = (twice_n as i64, twice_m as i64);
    let cands = [(j2 + m2) / 2, (j2 - m2) / 2, (j2 + n2) / 2, (j2 - n2) / 2];
    let k = *cands.iter().min().unwrap();
    let (a, lam) = if k == cands[0] {
        ((n2 - m2) / 2, (n2 - m2) / 2)
    } else if k == cands[1] || k == cands[2] {
        ((m2 - n2) / 2, 0)
    } else {
        ((n2 - m2) / 2, (n2 - m2) / 2)
    };
    let b = j2 - 2 * k - a;
    let (s, c) = ((theta / 2.0).sin(), (theta / 2.0).cos());
    let sign = if lam.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let norm = (binomial(j2 - k, k + a) / binomial(k + b, b)).sqrt();
    sign * norm * s.powi(a as i32) * c.powi(b as i32) * jacobi(k, a as f64, b as f64, theta.cos())
}

/// `P^l_{nm}(cos theta) = i^{m-n} d^l_{nm}(theta)`.
pub fn p_entry(l: RepLabel, twice_n: i32, twice_m: i32, theta: f64) -> C64 {
    let q = ((twice_m - twice_n) / 2).rem_euclid(4);
    let ph = [C64::new(1.0, 0.0), I, C64::new(-1.0, 0.0), -I][q as usize];
    ph * small_d(l.twice_l, twice_n, twice_m, theta)
}

/// The full matrix `P^l(cos theta)`.
pub fn p_matrix(l: RepLabel, theta: f64) -> CMat {
    let d = l.dim();
    let t = l.twice_l as i32;
    CMat::from_fn(d, d, |i, j| p_entry(l, 2 * i as i32 - t, 2 * j as i32 - t, theta))
}

/// `T^l_{nm}(x) = e^{-i(n phi + m psi)} P^l_{nm}(cos theta)`.
pub fn wigner_entry(l: RepLabel, twice_n: i32, twice_m: i32, x: EulerPoint) -> Result<C64> {
    l.check(twice_n, twice_m)?;
    let ph = -(twice_n as f64 * x.phi + twice_m as f64 * x.psi) / 2.0;
    Ok(C64::from_polar(1.0, ph) * p_entry(l, twice_n, twice_m, x.theta))
}

pub fn wigner_matrix(l: RepLabel, x: EulerPoint) -> CMat {
    let mut m = p_matrix(l, x.theta);
    apply_phases(l, x, &mut m);
    m
}

pub(crate) fn apply_phases(l: RepLabel, x: EulerPoint, m: &mut CMat) {
    let t = l.twice_l as i32;
    let d = l.dim();
    for i in 0..d {
        let en = C64::from_polar(1.0, -((2 * i as i32 - t) as f64) * x.phi / 2.0);
        for j in 0..d {
            let em = C64::from_polar(1.0, -((2 * j as i32 - t) as f64) * x.psi / 2.0);
            m[(i, j)] *= en * em;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiTag {
    Plus,
    Minus,
    Zero,
}

impl PiTag {
    pub const ALL: [PiTag; 3] = [PiTag::Plus, PiTag::Minus, PiTag::Zero];
}

/// Symbols of `Pi_+`, `Pi_-`, `Pi_0`; `(Pi f)^ = sigma f^`.
pub fn sigma(op: PiTag, l: RepLabel) -> EndoMatrix {
    EndoMatrix {
        label: l,
        entries: sigma_mat(op, l),
    }
}

pub fn sigma_mat(op: PiTag, l: RepLabel) -> CMat {
    let d = l.dim();
    let lf = l.l();
    let mut m = CMat::zeros(d, d);
    for j in 0..d {
        let n = j as f64 - lf;
        match op {
            PiTag::Plus => {
                if j + 1 < d {
                    m[(j + 1, j)] = C64::from(-((lf - n) * (lf + n + 1.0)).sqrt());
                }
            }
            PiTag::Minus => {
                if j >= 1 {
                    m[(j - 1, j)] = C64::from(-((lf + n) * (lf - n + 1.0)).sqrt());
                }
            }
            PiTag::Zero => m[(j, j)] = C64::from(n),
        }
    }
    m
}

/// Symbols of the real frame `X_1, X_2, X_3` (`j` = 1, 2, 3):
/// `X_1 = -i(Pi_+ + Pi_-)/2`, `X_2 = (Pi_- - Pi_+)/2`, `X_3 = -i Pi_0`.
pub fn frame_symbol(j: usize, l: RepLabel) -> CMat {
    let p = sigma_mat(PiTag::Plus, l);
    let m = sigma_mat(PiTag::Minus, l);
    match j {
        1 => (p + m) * C64::new(0.0, -0.5),
        2 => (m - p) * C64::new(0.5, 0.0),
        3 => sigma_mat(PiTag::Zero, l) * (-I),
        _ => panic!("frame index must be 1, 2 or 3"),
    }
}

/// Eigenvalue of the Laplacian on `H_l`: `-l(l+1)`.
pub fn laplace_multiplier(l: RepLabel) -> f64 {
    -l.casimir()
}

/// Hopf projection to the unit sphere.
pub fn hopf_project(x: EulerPoint) -> [f64; 3] {
    let st = x.theta.sin();
    [st * x.psi.cos(), st * x.psi.sin(), x.theta.cos()]
}
