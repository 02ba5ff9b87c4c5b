//! Inner approximation of a carpet by homogeneous uniform-fibre systems:
//! optimal digit weights, the count matrix `ceil(k q_ij)`, log-multinomial
//! cardinalities, composed scales, and the enumerated composed maps.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::carpet::{AffineMap, Carpet, GLCarpet, Row};
use crate::dimension::{gl_dimension_seeded, solve_t, DimensionReport, ProbVector};
use crate::rational::Rational;
use crate::rationality::{select_irrational_composition, CompositionChoice, ExponentVector};
use crate::{Error, Result};

/// Maximizing row weights with the derived per-digit weights
/// `q_ij = p_i a_ij^t / sum_l a_il^t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightPlan {
    pub p_star: ProbVector,
    pub t_star: f64,
    pub q: Vec<Vec<f64>>,
    pub dimension: f64,
}

pub fn optimal_weights(carpet: &GLCarpet) -> Result<WeightPlan> {
    optimal_weights_from(carpet, &gl_dimension_seeded(carpet, 0)?)
}

pub fn optimal_weights_from(carpet: &GLCarpet, report: &DimensionReport) -> Result<WeightPlan> {
    let p_star = report.maximizer.clone();
    let t_star = solve_t(&p_star, carpet)?;
    let mut q = Vec::with_capacity(carpet.rows.len());
    for (i, row) in carpet.rows.iter().enumerate() {
        let powers: Vec<f64> = row
            .cells
            .iter()
            .map(|c| (t_star * c.a.ln()).exp())
            .collect();
        let denom: f64 = powers.iter().sum();
        q.push(
            powers
                .iter()
                .map(|w| p_star.0[i] * w / denom)
                .collect::<Vec<f64>>(),
        );
    }
    let total: f64 = q.iter().flatten().sum();
    debug_assert!((total - 1.0).abs() < 1e-10, "weights sum to {total}");
    Ok(WeightPlan {
        p_star,
        t_star,
        q,
        dimension: report.value,
    })
}

/// Word-length, cardinality, and scale data of the depth-`k` subsystem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsystemPlan {
    pub k: u64,
    /// `counts[i][j] = ceil(k q_ij)`, with a 1e-9 downward nudge before the
    /// ceiling so exact integers do not round up from float noise.
    pub counts: Vec<Vec<u64>>,
    pub r_k: u64,
    pub log_gamma_k: f64,
    pub log_gamma_tilde_k: f64,
    pub a_prime: Rational,
    pub b_prime: Rational,
    pub dim_k: f64,
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|v| (v as f64).ln()).sum()
}

pub fn build_subsystem(carpet: &GLCarpet, k: u64) -> Result<SubsystemPlan> {
    build_subsystem_from(carpet, &optimal_weights(carpet)?, k)
}

pub fn build_subsystem_from(
    carpet: &GLCarpet,
    weights: &WeightPlan,
    k: u64,
) -> Result<SubsystemPlan> {
    if k == 0 {
        return Err(Error::Precondition("subsystem depth k must be >= 1".into()));
    }
    if k > (1u64 << 52) {
        return Err(Error::Budget(format!("k = {k} overflows exact count arithmetic")));
    }
    let mut counts: Vec<Vec<u64>> = Vec::with_capacity(carpet.rows.len());
    for row_q in &weights.q {
        counts.push(
            row_q
                .iter()
                .map(|&qij| (k as f64 * qij - 1e-9).ceil().max(0.0) as u64)
                .collect(),
        );
    }
    let r_k: u64 = counts.iter().flatten().sum();
    if r_k == 0 {
        return Err(Error::Precondition("all digit counts are zero".into()));
    }
    let mut log_gamma_k = ln_factorial(r_k);
    let mut log_gamma_tilde_k = ln_factorial(r_k);
    let mut ln_a_sum = 0.0;
    let mut ln_b_sum = 0.0;
    let mut a_prime = Rational::one();
    let mut b_prime = Rational::one();
    for (i, row) in carpet.rows.iter().enumerate() {
        let row_total: u64 = counts[i].iter().sum();
        log_gamma_tilde_k -= ln_factorial(row_total);
        for (j, cell) in row.cells.iter().enumerate() {
            let c = counts[i][j];
            if c == 0 {
                continue;
            }
            log_gamma_k -= ln_factorial(c);
            ln_a_sum += c as f64 * cell.a.ln();
            ln_b_sum += c as f64 * row.b.ln();
            let exp = u32::try_from(c)
                .map_err(|_| Error::Budget(format!("count {c} exceeds exponent range")))?;
            a_prime = &a_prime * &cell.a.pow(exp);
            b_prime = &b_prime * &row.b.pow(exp);
        }
    }
    let dim_k = log_gamma_tilde_k / -ln_b_sum + (log_gamma_k - log_gamma_tilde_k) / -ln_a_sum;
    Ok(SubsystemPlan {
        k,
        counts,
        r_k,
        log_gamma_k,
        log_gamma_tilde_k,
        a_prime,
        b_prime,
        dim_k,
    })
}

/// Exact `r! / prod counts!`.
pub fn exact_word_count(counts: &[Vec<u64>]) -> BigUint {
    let r: u64 = counts.iter().flatten().sum();
    let mut v = factorial(r);
    for &c in counts.iter().flatten() {
        v /= factorial(c);
    }
    v
}

/// Exact `r! / prod (row totals)!`.
pub fn exact_row_word_count(counts: &[Vec<u64>]) -> BigUint {
    let r: u64 = counts.iter().flatten().sum();
    let mut v = factorial(r);
    for row in counts {
        v /= factorial(row.iter().sum());
    }
    v
}

fn factorial(n: u64) -> BigUint {
    let mut acc = BigUint::one();
    for v in 2..=n {
        acc *= BigUint::from(v);
    }
    acc
}

/// Subsystem scales after composing with a digit power that certifies an
/// irrational log-ratio.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdjustedSubsystem {
    pub choice: CompositionChoice,
    pub a_adjusted: Rational,
    pub b_adjusted: Rational,
    /// Exponent vectors of the adjusted scales; non-parallel by
    /// construction, re-checkable via [`AdjustedSubsystem::verify`].
    pub certificate: (ExponentVector, ExponentVector),
    pub dim_adjusted: f64,
}

impl AdjustedSubsystem {
    pub fn verify(&self) -> bool {
        self.certificate.0.parallel_ratio(&self.certificate.1).is_none()
    }
}

pub fn irrationalize_subsystem(
    plan: &SubsystemPlan,
    carpet: &GLCarpet,
) -> Result<AdjustedSubsystem> {
    let carpet_enum = Carpet::GatzourasLalley(carpet.clone());
    let choice = select_irrational_composition(&plan.a_prime, &plan.b_prime, &carpet_enum)?;
    let (a_adjusted, b_adjusted) = choice.scales.clone();

    // Composing with a fixed map keeps the uniform row structure, so the
    // adjusted dimension follows from the same two-term formula with the
    // extra digit powers folded into the scale logs.
    let ln_a = a_adjusted.ln();
    let ln_b = b_adjusted.ln();
    let ln_rows = plan.log_gamma_tilde_k;
    let ln_cols = plan.log_gamma_k - plan.log_gamma_tilde_k;
    let dim_adjusted = ln_rows / -ln_b + ln_cols / -ln_a;

    let va = ExponentVector::from_vector_of(&a_adjusted, carpet)?;
    let vb = ExponentVector::from_vector_of(&b_adjusted, carpet)?;
    Ok(AdjustedSubsystem {
        choice,
        a_adjusted,
        b_adjusted,
        certificate: (va, vb),
        dim_adjusted,
    })
}

impl ExponentVector {
    /// Builds the exponent vector of a composed scale without factoring the
    /// (potentially huge) product: factor the carpet's base scales once and
    /// recover the exponent of each prime by exact division.
    fn from_vector_of(value: &Rational, carpet: &GLCarpet) -> Result<ExponentVector> {
        let mut primes = std::collections::BTreeSet::new();
        for row in &carpet.rows {
            for (p, _) in ExponentVector::from_rational(&row.b)?.0 {
                primes.insert(p);
            }
            for cell in &row.cells {
                for (p, _) in ExponentVector::from_rational(&cell.a)?.0 {
                    primes.insert(p);
                }
            }
        }
        let mut exps = std::collections::BTreeMap::new();
        for &p in &primes {
            let big = num_bigint::BigInt::from(p);
            let mut e = 0i64;
            let mut n = value.numer().clone();
            while (&n % &big) == 0.into() && n != 0.into() {
                n /= &big;
                e += 1;
            }
            let mut d = value.denom().clone();
            while (&d % &big) == 0.into() && d != 0.into() {
                d /= &big;
                e -= 1;
            }
            if e != 0 {
                exps.insert(p, e);
            }
        }
        Ok(ExponentVector(exps))
    }
}

/// All composed maps of the subsystem: one per arrangement of the count
/// multiset, composed left to right.
pub fn enumerate_subsystem_maps(
    plan: &SubsystemPlan,
    carpet: &GLCarpet,
    cap: u64,
) -> Result<Vec<AffineMap>> {
    let exact = exact_word_count(&plan.counts);
    let size = exact.to_u64().filter(|&s| s <= cap).ok_or_else(|| {
        Error::Budget(format!("subsystem has {exact} words, cap is {cap}"))
    })?;
    let maps = carpet.maps();
    let mut digit_of = Vec::new();
    for (i, row) in carpet.rows.iter().enumerate() {
        for j in 0..row.cells.len() {
            digit_of.push((i, j));
        }
    }
    let mut remaining: Vec<u64> = digit_of
        .iter()
        .map(|&(i, j)| plan.counts[i][j])
        .collect();
    let mut out = Vec::with_capacity(size as usize);
    let mut stack = vec![AffineMap::identity()];
    compose_rec(&maps, &mut remaining, &mut stack, plan.r_k, &mut out);
    debug_assert_eq!(out.len() as u64, size);
    Ok(out)
}

fn compose_rec(
    maps: &[AffineMap],
    remaining: &mut [u64],
    stack: &mut Vec<AffineMap>,
    depth_left: u64,
    out: &mut Vec<AffineMap>,
) {
    if depth_left == 0 {
        out.push(stack.last().unwrap().clone());
        return;
    }
    for d in 0..maps.len() {
        if remaining[d] == 0 {
            continue;
        }
        remaining[d] -= 1;
        stack.push(stack.last().unwrap().compose(&maps[d]));
        compose_rec(maps, remaining, stack, depth_left - 1, out);
        stack.pop();
        remaining[d] += 1;
    }
}

/// Groups composed maps back into a Gatzouras-Lalley carpet (rows keyed by
/// the exact vertical part). Used to feed subsystems back through the
/// dimension machinery and to emit them as carpet spec files.
pub fn subsystem_as_gl(maps: &[AffineMap]) -> Result<GLCarpet> {
    let mut rows: Vec<Row> = Vec::new();
    for m in maps {
        match rows
            .iter_mut()
            .find(|r| r.b == m.y_scale && r.d == m.y_offset)
        {
            Some(row) => row.cells.push(crate::carpet::Cell {
                a: m.x_scale.clone(),
                c: m.x_offset.clone(),
            }),
            None => rows.push(Row {
                b: m.y_scale.clone(),
                d: m.y_offset.clone(),
                cells: vec![crate::carpet::Cell {
                    a: m.x_scale.clone(),
                    c: m.x_offset.clone(),
                }],
            }),
        }
    }
    let mut carpet = GLCarpet { rows };
    carpet.canonicalize();
    let report = crate::carpet::validate_gl(&carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    Ok(carpet)
}
