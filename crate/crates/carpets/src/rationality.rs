//! Exact rationality tests for log ratios and the irrational-type
//! classifiers.
//!
//! `log x / log y` is rational for rationals `x, y` exactly when their prime
//! exponent vectors are parallel, so every decision here reduces to integer
//! arithmetic on factorizations. No numeric continued-fraction heuristics.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::carpet::{BaranskiCarpet, Carpet, GLCarpet};
use crate::rational::Rational;
use crate::{Error, Result};

/// Signed prime factorization of a positive rational; no zero exponents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentVector(pub BTreeMap<u64, i64>);

impl ExponentVector {
    pub fn from_rational(x: &Rational) -> Result<Self> {
        if !x.is_positive() {
            return Err(Error::Precondition(format!(
                "exponent vector needs a positive rational, got {x}"
            )));
        }
        let mut exps = BTreeMap::new();
        for (p, e) in factor(x.numer().magnitude())? {
            *exps.entry(p).or_insert(0) += e as i64;
        }
        for (p, e) in factor(x.denom().magnitude())? {
            *exps.entry(p).or_insert(0) -= e as i64;
        }
        exps.retain(|_, e| *e != 0);
        Ok(ExponentVector(exps))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut exps = self.0.clone();
        for (&p, &e) in &other.0 {
            *exps.entry(p).or_insert(0) += e;
        }
        exps.retain(|_, e| *e != 0);
        ExponentVector(exps)
    }

    pub fn pow(&self, e: i64) -> Self {
        if e == 0 {
            return ExponentVector(BTreeMap::new());
        }
        ExponentVector(self.0.iter().map(|(&p, &x)| (p, x * e)).collect())
    }

    /// Represents 1.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// When `self = (p/q) · other` componentwise, returns `(p, q)` in lowest
    /// terms with `q > 0`; `None` if the vectors are not parallel. For
    /// vectors of rationals in `(0,1)` this is exactly rationality of
    /// `log x / log y`.
    pub fn parallel_ratio(&self, other: &Self) -> Option<(i64, u64)> {
        if self.is_empty() || other.is_empty() {
            // Vectors of rationals in (0,1) are never empty.
            return None;
        }
        if self.0.len() != other.0.len() {
            return None;
        }
        let (&p0, &u0) = self.0.iter().next().unwrap();
        let v0 = *other.0.get(&p0)?;
        // ratio = u0 / v0 reduced
        let g = gcd_i64(u0.unsigned_abs(), v0.unsigned_abs());
        let mut num = u0 / g as i64;
        let mut den = v0 / g as i64;
        if den < 0 {
            num = -num;
            den = -den;
        }
        for (&p, &u) in &self.0 {
            let v = *other.0.get(&p)?;
            // u / v == num / den  <=>  u * den == v * num
            if (u as i128) * (den as i128) != (v as i128) * (num as i128) {
                return None;
            }
        }
        Some((num, den as u64))
    }
}

fn gcd_i64(a: u64, b: u64) -> u64 {
    num_integer::gcd(a, b)
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    // Deterministic Miller-Rabin for u64.
    let d = (n - 1) >> (n - 1).trailing_zeros();
    let s = (n - 1).trailing_zeros();
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_mul(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, m);
        }
        base = mod_mul(base, base, m);
        exp >>= 1;
    }
    acc
}

const TRIAL_BOUND: u64 = 1 << 20;

/// Trial division with a deterministic primality check on the cofactor.
/// Carpet inputs are small rationals; composed scales (huge products of
/// small primes) reduce quickly under the big-integer strip phase.
fn factor(x: &BigUint) -> Result<Vec<(u64, u32)>> {
    if x.is_zero() {
        return Err(Error::Precondition("cannot factor zero".into()));
    }
    if x.is_one() {
        return Ok(Vec::new());
    }
    let mut out: Vec<(u64, u32)> = Vec::new();
    let mut n = x.clone();
    let mut d = 2u64;
    while d < TRIAL_BOUND {
        if n.to_u128().is_some() {
            break;
        }
        let big_d = BigUint::from(d);
        let mut e = 0u32;
        while (&n % &big_d).is_zero() {
            n /= &big_d;
            e += 1;
        }
        if e > 0 {
            out.push((d, e));
        }
        d = if d == 2 { 3 } else { d + 2 };
    }
    let mut small = n
        .to_u128()
        .ok_or_else(|| Error::Precondition(format!("value too large to factor: {x}")))?;
    while small > 1 && (d as u128) * (d as u128) <= small && d < TRIAL_BOUND {
        let mut e = 0u32;
        while small % d as u128 == 0 {
            small /= d as u128;
            e += 1;
        }
        if e > 0 {
            out.push((d, e));
        }
        d = if d == 2 { 3 } else { d + 2 };
    }
    if small > 1 {
        let rem = u64::try_from(small)
            .map_err(|_| Error::Precondition(format!("prime factor exceeds u64 in {x}")))?;
        if !is_prime_u64(rem) {
            return Err(Error::Precondition(format!(
                "cofactor {rem} of {x} is composite beyond the trial bound"
            )));
        }
        out.push((rem, 1));
    }
    out.sort_unstable();
    Ok(out)
}

/// Decides whether `log x / log y` is rational for `x, y` in `(0,1)`.
/// Returns `(p, q)` in lowest terms with `x^q = y^p`, or `None`.
pub fn log_ratio_rational(x: &Rational, y: &Rational) -> Result<Option<(i64, u64)>> {
    if !x.is_proper_fraction() || !y.is_proper_fraction() {
        return Err(Error::Precondition(format!(
            "log-ratio test needs inputs in (0,1), got {x} and {y}"
        )));
    }
    let vx = ExponentVector::from_rational(x)?;
    let vy = ExponentVector::from_rational(y)?;
    Ok(vx.parallel_ratio(&vy))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    IrrationalType1,
    IrrationalType2,
    Rational,
}

/// Classification verdict with re-verifiable witnesses. Indices are 1-based
/// as in the carpet spec files. For Gatzouras-Lalley carpets the witness
/// pair is (row, cell); for Barański carpets it is (column, row).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypeClassification {
    pub verdict: Verdict,
    /// Digit whose log-ratio is irrational. For type 2 on a
    /// Gatzouras-Lalley carpet the ratio is taken against `cross_row`;
    /// for type 2 on a Barański carpet this position lies outside D.
    pub irrational_pair: Option<(usize, usize)>,
    pub cross_row: Option<usize>,
    /// Two digits whose (rational) log-ratios differ; type 2 only.
    pub distinct_pair: Option<((usize, usize), (usize, usize))>,
}

impl TypeClassification {
    fn rational() -> Self {
        TypeClassification {
            verdict: Verdict::Rational,
            irrational_pair: None,
            cross_row: None,
            distinct_pair: None,
        }
    }

    pub fn is_irrational(&self) -> bool {
        self.verdict != Verdict::Rational
    }

    /// Re-checks every clause of the witness exactly.
    pub fn verify_gl(&self, carpet: &GLCarpet) -> bool {
        let ratio = |i: usize, j: usize, k: usize| {
            log_ratio_rational(&carpet.rows[i].cells[j].a, &carpet.rows[k].b)
        };
        match self.verdict {
            Verdict::IrrationalType1 => match self.irrational_pair {
                Some((i, j)) => matches!(ratio(i - 1, j - 1, i - 1), Ok(None)),
                None => false,
            },
            Verdict::IrrationalType2 => {
                let Some((i, j)) = self.irrational_pair else {
                    return false;
                };
                let Some(k) = self.cross_row else { return false };
                let Some(((i1, j1), (i2, j2))) = self.distinct_pair else {
                    return false;
                };
                if !matches!(ratio(i - 1, j - 1, k - 1), Ok(None)) {
                    return false;
                }
                match (ratio(i1 - 1, j1 - 1, i1 - 1), ratio(i2 - 1, j2 - 1, i2 - 1)) {
                    (Ok(Some(r1)), Ok(Some(r2))) => r1 != r2,
                    _ => false,
                }
            }
            Verdict::Rational => {
                self.irrational_pair.is_none() && self.distinct_pair.is_none()
            }
        }
    }

    pub fn verify_baranski(&self, carpet: &BaranskiCarpet) -> bool {
        let ratio =
            |i: usize, j: usize| log_ratio_rational(&carpet.col_widths[i], &carpet.row_heights[j]);
        let in_d = |i: usize, j: usize| carpet.digits.contains(&(i, j));
        match self.verdict {
            Verdict::IrrationalType1 => match self.irrational_pair {
                Some((i, j)) => {
                    in_d(i - 1, j - 1) && matches!(ratio(i - 1, j - 1), Ok(None))
                }
                None => false,
            },
            Verdict::IrrationalType2 => {
                let Some((i, j)) = self.irrational_pair else {
                    return false;
                };
                let Some(((i1, j1), (i2, j2))) = self.distinct_pair else {
                    return false;
                };
                if in_d(i - 1, j - 1) || !matches!(ratio(i - 1, j - 1), Ok(None)) {
                    return false;
                }
                if !in_d(i1 - 1, j1 - 1) || !in_d(i2 - 1, j2 - 1) {
                    return false;
                }
                match (ratio(i1 - 1, j1 - 1), ratio(i2 - 1, j2 - 1)) {
                    (Ok(Some(r1)), Ok(Some(r2))) => r1 != r2,
                    _ => false,
                }
            }
            Verdict::Rational => {
                self.irrational_pair.is_none() && self.distinct_pair.is_none()
            }
        }
    }
}

/// Type 1 when some `log a_ij / log b_i` is irrational; otherwise type 2
/// when some `log a_ij / log b_k` is irrational and the (all-rational)
/// diagonal ratios are not all equal.
pub fn classify_gl_type(carpet: &GLCarpet) -> Result<TypeClassification> {
    let mut diag: Vec<((usize, usize), (i64, u64))> = Vec::new();
    for (i, row) in carpet.rows.iter().enumerate() {
        for (j, cell) in row.cells.iter().enumerate() {
            match log_ratio_rational(&cell.a, &row.b)? {
                None => {
                    return Ok(TypeClassification {
                        verdict: Verdict::IrrationalType1,
                        irrational_pair: Some((i + 1, j + 1)),
                        cross_row: None,
                        distinct_pair: None,
                    })
                }
                Some(r) => diag.push(((i + 1, j + 1), r)),
            }
        }
    }
    let distinct = diag
        .iter()
        .find(|(_, r)| *r != diag[0].1)
        .map(|(ij, _)| (diag[0].0, *ij));
    if let Some(distinct_pair) = distinct {
        for (i, row) in carpet.rows.iter().enumerate() {
            for (j, cell) in row.cells.iter().enumerate() {
                for (k, other) in carpet.rows.iter().enumerate() {
                    if k == i {
                        continue;
                    }
                    if log_ratio_rational(&cell.a, &other.b)?.is_none() {
                        return Ok(TypeClassification {
                            verdict: Verdict::IrrationalType2,
                            irrational_pair: Some((i + 1, j + 1)),
                            cross_row: Some(k + 1),
                            distinct_pair: Some(distinct_pair),
                        });
                    }
                }
            }
        }
    }
    Ok(TypeClassification::rational())
}

/// Barański variant: type 1 quantifies over digits in D, type 2 over grid
/// positions outside D plus two digits with distinct ratios.
pub fn classify_baranski_type(carpet: &BaranskiCarpet) -> Result<TypeClassification> {
    let mut diag: Vec<((usize, usize), (i64, u64))> = Vec::new();
    for &(i, j) in &carpet.digits {
        match log_ratio_rational(&carpet.col_widths[i], &carpet.row_heights[j])? {
            None => {
                return Ok(TypeClassification {
                    verdict: Verdict::IrrationalType1,
                    irrational_pair: Some((i + 1, j + 1)),
                    cross_row: None,
                    distinct_pair: None,
                })
            }
            Some(r) => diag.push(((i + 1, j + 1), r)),
        }
    }
    let distinct = diag
        .iter()
        .find(|(_, r)| *r != diag[0].1)
        .map(|(ij, _)| (diag[0].0, *ij));
    if let Some(distinct_pair) = distinct {
        for i in 0..carpet.col_widths.len() {
            for j in 0..carpet.row_heights.len() {
                if carpet.digits.contains(&(i, j)) {
                    continue;
                }
                if log_ratio_rational(&carpet.col_widths[i], &carpet.row_heights[j])?.is_none() {
                    return Ok(TypeClassification {
                        verdict: Verdict::IrrationalType2,
                        irrational_pair: Some((i + 1, j + 1)),
                        cross_row: None,
                        distinct_pair: Some(distinct_pair),
                    });
                }
            }
        }
    }
    Ok(TypeClassification::rational())
}

pub fn classify(carpet: &Carpet) -> Result<TypeClassification> {
    match carpet {
        Carpet::GatzourasLalley(c) => classify_gl_type(c),
        Carpet::Baranski(c) => classify_baranski_type(c),
        Carpet::Uniform(c) => classify_gl_type(&c.to_gl()),
    }
}

/// Composition found by [`select_irrational_composition`]: raise the chosen
/// digit's scales to `power` and multiply into the base pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositionChoice {
    /// 1-based digit index pair of the original system; `None` when the
    /// base pair is already irrational (power 0).
    pub map_index: Option<(usize, usize)>,
    pub power: u8,
    /// The composed `(a, b)` scales.
    pub scales: (Rational, Rational),
}

/// Digit scale pairs of a carpet: ((row, cell) or (col, row), a, b), 1-based.
pub fn digit_scales(carpet: &Carpet) -> Vec<((usize, usize), Rational, Rational)> {
    match carpet {
        Carpet::GatzourasLalley(c) => c
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.cells
                    .iter()
                    .enumerate()
                    .map(move |(j, cell)| ((i + 1, j + 1), cell.a.clone(), row.b.clone()))
            })
            .collect(),
        Carpet::Baranski(c) => c
            .digits
            .iter()
            .map(|&(i, j)| {
                (
                    (i + 1, j + 1),
                    c.col_widths[i].clone(),
                    c.row_heights[j].clone(),
                )
            })
            .collect(),
        Carpet::Uniform(c) => digit_scales(&Carpet::GatzourasLalley(c.to_gl())),
    }
}

/// Finds a power `e` in {0,1,2} and a digit `S` of the original system such
/// that `log(base_a · a_S^e) / log(base_b · b_S^e)` is irrational; tries the
/// bare base first, then digits in index order with powers 1 and 2.
/// Existence is guaranteed for irrational-type carpets; failure reports a
/// violated precondition.
pub fn select_irrational_composition(
    base_a: &Rational,
    base_b: &Rational,
    carpet: &Carpet,
) -> Result<CompositionChoice> {
    let va = ExponentVector::from_rational(base_a)?;
    let vb = ExponentVector::from_rational(base_b)?;
    if va.parallel_ratio(&vb).is_none() {
        return Ok(CompositionChoice {
            map_index: None,
            power: 0,
            scales: (base_a.clone(), base_b.clone()),
        });
    }
    for (idx, a, b) in digit_scales(carpet) {
        let da = ExponentVector::from_rational(&a)?;
        let db = ExponentVector::from_rational(&b)?;
        for power in 1u8..=2 {
            let ca = va.mul(&da.pow(power as i64));
            let cb = vb.mul(&db.pow(power as i64));
            if ca.parallel_ratio(&cb).is_none() {
                let mut sa = base_a.clone();
                let mut sb = base_b.clone();
                for _ in 0..power {
                    sa = &sa * &a;
                    sb = &sb * &b;
                }
                return Ok(CompositionChoice {
                    map_index: Some(idx),
                    power,
                    scales: (sa, sb),
                });
            }
        }
    }
    Err(Error::Precondition(
        "no irrational composition exists; the carpet is not of irrational type".into(),
    ))
}
