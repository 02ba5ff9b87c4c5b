//! Symbolic words, cylinder rectangles, approximate-square families, and
//! the exact scale bookkeeping tying vertical depth `k` to horizontal
//! depth `ell(k)`.

use serde::{Deserialize, Serialize};

use crate::carpet::{Carpet, UniformFibreCarpet};
use crate::rational::Rational;
use crate::{Error, Result};

/// A finite word of digit indices. The alphabet depends on context: carpet
/// digits for covers, row or column indices for approximate squares.
pub type Word = Vec<u8>;

/// Exact depth pairing: `ell` is the largest integer with `b^k <= a^ell`,
/// and `z = a^ell b^-k` lies in `[1, 1/a)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalePair {
    pub k: u64,
    pub ell: u64,
    pub z: Rational,
}

/// Largest `ell` with `b^k <= a^ell`, via exact power comparisons.
pub fn ell_of_k(a: &Rational, b: &Rational, k: u64) -> Result<ScalePair> {
    if !(a.is_proper_fraction() && b.is_proper_fraction() && a < b) {
        return Err(Error::Precondition(format!(
            "need 0 < a < b < 1, got a = {a}, b = {b}"
        )));
    }
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    let k32 = u32::try_from(k).map_err(|_| Error::Budget(format!("k = {k} too large")))?;
    let bk = b.pow(k32);
    let mut ell = 0u64;
    let mut a_pow = Rational::one();
    loop {
        let next = &a_pow * a;
        if bk <= next {
            ell += 1;
            a_pow = next;
        } else {
            break;
        }
    }
    let z = &a_pow * &bk.recip()?;
    debug_assert!(z >= Rational::one() && z < a.recip().unwrap());
    Ok(ScalePair { k, ell, z })
}

/// A symbolic rectangle: the word that produced it plus its exact geometry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderRect {
    pub word: Word,
    pub x0: Rational,
    pub width: Rational,
    pub y0: Rational,
    pub height: Rational,
}

impl CylinderRect {
    pub fn unit() -> Self {
        CylinderRect {
            word: Vec::new(),
            x0: Rational::zero(),
            width: Rational::one(),
            y0: Rational::zero(),
            height: Rational::one(),
        }
    }

    /// Exact containment of `other` in `self`.
    pub fn contains(&self, other: &CylinderRect) -> bool {
        self.x0 <= other.x0
            && &(&other.x0 + &other.width) <= &(&self.x0 + &self.width)
            && self.y0 <= other.y0
            && &(&other.y0 + &other.height) <= &(&self.y0 + &self.height)
    }

    pub fn contains_point(&self, x: &Rational, y: &Rational) -> bool {
        &self.x0 <= x
            && x <= &(&self.x0 + &self.width)
            && &self.y0 <= y
            && y <= &(&self.y0 + &self.height)
    }

    /// (x0, y0, x1, y1) as doubles for the projection/counting boundary.
    pub fn corners_f64(&self) -> [f64; 4] {
        let x0 = self.x0.to_f64();
        let y0 = self.y0.to_f64();
        [
            x0,
            y0,
            x0 + self.width.to_f64(),
            y0 + self.height.to_f64(),
        ]
    }
}

/// The family of approximate squares for one horizontal row-word `xi`:
/// every pair of a vertical word of length `k` and a cell-column word of
/// length `|xi|`. Rectangle sizes are exactly `a^{|xi|} x b^k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderFamily {
    pub k: u64,
    pub scale: ScalePair,
    pub xi: Word,
    /// True when built over row-words of length `ell(k) + 1`.
    pub tilde: bool,
    /// (vertical word sigma, column word sigma') per rectangle.
    pub pairs: Vec<(Word, Word)>,
    pub rects: Vec<CylinderRect>,
}

impl CylinderFamily {
    /// Realized range of `diam(proj(Q)) / b^k` over the family: the
    /// approximate-square aspect keeps it pinned between constants, and
    /// this reports the constants actually achieved at the given angle.
    pub fn projected_diameter_ratio(&self, theta: f64) -> (f64, f64) {
        let height = self.rects[0].height.to_f64();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (c, s) = (theta.cos().abs(), theta.sin().abs());
        for rect in &self.rects {
            let w = rect.width.to_f64();
            let h = rect.height.to_f64();
            let diam = c * w + s * h;
            let ratio = diam / height;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        (lo, hi)
    }
}

/// Horizontal interval of the composition `f_{xi, cols}` applied to [0,1]:
/// offset plus width `a^{|xi|}`.
pub fn horizontal_offset(carpet: &UniformFibreCarpet, xi: &[u8], cols: &[u8]) -> Rational {
    debug_assert_eq!(xi.len(), cols.len());
    let mut offset = Rational::zero();
    for t in (0..xi.len()).rev() {
        let c = &carpet.cell_offsets[xi[t] as usize][cols[t] as usize];
        offset = c + &(&carpet.a * &offset);
    }
    offset
}

/// Vertical interval offset of `g_sigma` applied to [0,1].
pub fn vertical_offset(carpet: &UniformFibreCarpet, sigma: &[u8]) -> Rational {
    let mut offset = Rational::zero();
    for t in (0..sigma.len()).rev() {
        let d = &carpet.row_offsets[sigma[t] as usize];
        offset = d + &(&carpet.b * &offset);
    }
    offset
}

/// Every word over `{0..alphabet-1}` of the given length, lexicographic.
pub fn all_words(alphabet: usize, len: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * alphabet);
        for w in &out {
            for s in 0..alphabet {
                let mut w2 = w.clone();
                w2.push(s as u8);
                next.push(w2);
            }
        }
        out = next;
    }
    out
}

pub const DEFAULT_FAMILY_BUDGET: u64 = 1 << 22;

/// Builds the approximate-square family for `xi`; `tilde` selects the
/// companion family over row-words one letter longer. Requires
/// `ell(k) >= 1` so the rectangles are genuine approximate squares.
pub fn approx_square_family(
    carpet: &UniformFibreCarpet,
    k: u64,
    xi: &[u8],
    tilde: bool,
    budget: u64,
) -> Result<CylinderFamily> {
    let report = crate::carpet::validate_uniform(carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    let scale = ell_of_k(&carpet.a, &carpet.b, k)?;
    if scale.ell == 0 {
        return Err(Error::Precondition(format!(
            "ell({k}) = 0: family rectangles would be full columns; increase k"
        )));
    }
    let want = scale.ell + if tilde { 1 } else { 0 };
    if xi.len() as u64 != want {
        return Err(Error::Precondition(format!(
            "row word has length {}, expected {want}",
            xi.len()
        )));
    }
    if xi.iter().any(|&s| s as usize >= carpet.m) {
        return Err(Error::Precondition("row word symbol out of range".into()));
    }
    let m = carpet.m as u64;
    let n = carpet.n as u64;
    let count = m
        .checked_pow(k as u32)
        .and_then(|v| v.checked_mul(n.pow(xi.len() as u32)))
        .filter(|&v| v <= budget)
        .ok_or_else(|| Error::Budget(format!("family size m^{k} n^{} over budget", xi.len())))?;

    let width = carpet.a.pow(xi.len() as u32);
    let height = carpet.b.pow(k as u32);
    let sigmas = all_words(carpet.m, k as usize);
    let cols = all_words(carpet.n, xi.len());
    let mut pairs = Vec::with_capacity(count as usize);
    let mut rects = Vec::with_capacity(count as usize);
    for sigma in &sigmas {
        let y0 = vertical_offset(carpet, sigma);
        for col in &cols {
            let x0 = horizontal_offset(carpet, xi, col);
            pairs.push((sigma.clone(), col.clone()));
            rects.push(CylinderRect {
                word: Vec::new(),
                x0: x0.clone(),
                width: width.clone(),
                y0: y0.clone(),
                height: height.clone(),
            });
        }
    }
    Ok(CylinderFamily {
        k,
        scale,
        xi: xi.to_vec(),
        tilde,
        pairs,
        rects,
    })
}

pub const DEFAULT_COVER_BUDGET: u64 = 50_000_000;

/// Adaptive cylinder cover: extend each word until both sides are at most
/// `delta` while the parent exceeded it. `delta` is converted exactly from
/// its binary representation, so the stopping rule is exact.
pub fn cylinder_cover(carpet: &Carpet, delta: f64, budget: u64) -> Result<Vec<CylinderRect>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Precondition(format!("delta = {delta} not in (0, 1]")));
    }
    let maps = carpet.as_maps()?;
    let delta_exact = Rational::from_f64(delta)?;
    let mut out = Vec::new();
    let mut count = 0u64;
    let root = CylinderRect::unit();
    cover_rec(&maps, &root, &delta_exact, budget, &mut count, &mut |r| {
        out.push(r)
    })?;
    Ok(out)
}

fn cover_rec(
    maps: &[crate::carpet::AffineMap],
    rect: &CylinderRect,
    delta: &Rational,
    budget: u64,
    count: &mut u64,
    emit: &mut impl FnMut(CylinderRect),
) -> Result<()> {
    let small = &rect.width <= delta && &rect.height <= delta;
    if small {
        *count += 1;
        if *count > budget {
            return Err(Error::Budget(format!(
                "cylinder cover exceeds the {budget}-cell budget"
            )));
        }
        emit(rect.clone());
        return Ok(());
    }
    for (d, m) in maps.iter().enumerate() {
        let child = CylinderRect {
            word: {
                let mut w = rect.word.clone();
                w.push(d as u8);
                w
            },
            x0: &rect.x0 + &(&rect.width * &m.x_offset),
            width: &rect.width * &m.x_scale,
            y0: &rect.y0 + &(&rect.height * &m.y_offset),
            height: &rect.height * &m.y_scale,
        };
        cover_rec(maps, &child, delta, budget, count, emit)?;
    }
    Ok(())
}

/// Cover leaf in double precision for the counting boundary.
#[derive(Clone, Copy, Debug)]
pub struct CoverLeaf {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Streams covers for a descending ladder of scales in one exact pass:
/// a leaf is emitted to rung `r` the first time both sides drop to
/// `deltas[r]`, and refinement continues until the finest rung.
pub fn visit_cover_ladder(
    carpet: &Carpet,
    deltas: &[f64],
    budget: u64,
    visit: &mut impl FnMut(usize, CoverLeaf),
) -> Result<()> {
    if deltas.is_empty() {
        return Ok(());
    }
    if deltas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Precondition("scale ladder must strictly decrease".into()));
    }
    let maps = carpet.as_maps()?;
    let exact: Vec<Rational> = deltas
        .iter()
        .map(|&d| {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Precondition(format!("delta = {d} not in (0, 1]")));
            }
            Rational::from_f64(d)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; deltas.len()];
    let root = CylinderRect::unit();
    ladder_rec(&maps, &root, &exact, 0, budget, &mut counts, visit)
}

fn ladder_rec(
    maps: &[crate::carpet::AffineMap],
    rect: &CylinderRect,
    deltas: &[Rational],
    mut rung: usize,
    budget: u64,
    counts: &mut [u64],
    visit: &mut impl FnMut(usize, CoverLeaf),
) -> Result<()> {
    while rung < deltas.len() && rect.width <= deltas[rung] && rect.height <= deltas[rung] {
        counts[rung] += 1;
        if counts[rung] > budget {
            return Err(Error::Budget(format!(
                "cover at scale {} exceeds the {budget}-cell budget",
                deltas[rung].to_f64()
            )));
        }
        let [x0, y0, x1, y1] = rect.corners_f64();
        visit(rung, CoverLeaf { x0, y0, x1, y1 });
        rung += 1;
    }
    if rung == deltas.len() {
        return Ok(());
    }
    for m in maps {
        let child = CylinderRect {
            word: Vec::new(),
            x0: &rect.x0 + &(&rect.width * &m.x_offset),
            width: &rect.width * &m.x_scale,
            y0: &rect.y0 + &(&rect.height * &m.y_offset),
            height: &rect.height * &m.y_scale,
        };
        ladder_rec(maps, &child, deltas, rung, budget, counts, visit)?;
    }
    Ok(())
}
