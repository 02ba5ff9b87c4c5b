//! Independent oracles shared by the acceptance suite. Everything here is
//! deliberately implemented on a different path from the library code it
//! checks: closed forms, grid scans, and dynamic programming.

use carpets::carpet::{BaranskiCarpet, Carpet, GLCarpet, UniformFibreCarpet};
use carpets::rational::Rational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn r(s: &str) -> Rational {
    s.parse().unwrap()
}

/// Closed-form dimension of a grid carpet with `n` columns of width `1/n`
/// and `m` rows of height `1/m` (`m < n`): `log_m sum_j t_j^(log m/log n)`
/// where `t_j` counts the digits in row `j`.
pub fn mcmullen_dimension(n: usize, m: usize, digits: &[(usize, usize)]) -> f64 {
    let mut t = vec![0usize; m];
    for &(_, j) in digits {
        t[j] += 1;
    }
    let exponent = (m as f64).ln() / (n as f64).ln();
    let total: f64 = t
        .iter()
        .filter(|&&tj| tj > 0)
        .map(|&tj| (tj as f64).powf(exponent))
        .sum();
    total.ln() / (m as f64).ln()
}

pub fn bedford_mcmullen(n: usize, m: usize, digits: &[(usize, usize)]) -> BaranskiCarpet {
    BaranskiCarpet {
        col_widths: (0..n).map(|_| Rational::new(1, n as i64).unwrap()).collect(),
        row_heights: (0..m).map(|_| Rational::new(1, m as i64).unwrap()).collect(),
        digits: digits.to_vec(),
    }
}

/// Brute-force root of `sum_i p_i ln(sum_j a_ij^t) = 0`: a coarse linear
/// scan certifies a single sign change, a binary search over a million-point
/// grid brackets it, and plain bisection (no derivative information)
/// finishes. Shares no code with the solver under test.
pub fn sign_scan_t(p: &[f64], carpet: &GLCarpet) -> f64 {
    let ln_a: Vec<Vec<f64>> = carpet
        .rows
        .iter()
        .map(|row| row.cells.iter().map(|c| c.a.ln()).collect())
        .collect();
    let f = |t: f64| -> f64 {
        p.iter()
            .enumerate()
            .filter(|(_, &pi)| pi > 0.0)
            .map(|(i, &pi)| {
                pi * ln_a[i]
                    .iter()
                    .map(|&la| (t * la).exp())
                    .sum::<f64>()
                    .ln()
            })
            .sum()
    };
    let mut t_hi = 1.0f64;
    for (i, row) in ln_a.iter().enumerate() {
        if p[i] > 0.0 {
            let max_ln = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            t_hi = t_hi.max((row.len() as f64).ln() / -max_ln + 2.0);
        }
    }
    if f(0.0) <= 0.0 {
        return 0.0;
    }
    // One sign change over a coarse scan (monotonicity witness).
    let coarse = 1000;
    let mut changes = 0;
    let mut prev = f(0.0);
    for i in 1..=coarse {
        let cur = f(t_hi * i as f64 / coarse as f64);
        if (prev > 0.0) != (cur > 0.0) {
            changes += 1;
        }
        prev = cur;
    }
    assert_eq!(changes, 1, "expected exactly one sign change");
    // Million-point grid: binary search for the crossing index.
    let n = 1_000_000u64;
    let grid = |i: u64| t_hi * i as f64 / n as f64;
    let (mut lo, mut hi) = (0u64, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if f(grid(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mut a, mut b) = (grid(lo), grid(hi));
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if f(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Exact maximum-cardinality rho-separated subset size via dynamic
/// programming over intervals sorted by right endpoint.
pub fn dp_separated_optimum(intervals: &[(f64, f64)], rho: f64) -> usize {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&i, &j| intervals[i].1.partial_cmp(&intervals[j].1).unwrap());
    let mut best = vec![0usize; intervals.len()];
    let mut overall = 0;
    for (pos, &i) in order.iter().enumerate() {
        let mut take = 1;
        for (qpos, &jj) in order[..pos].iter().enumerate() {
            if intervals[jj].1 + rho <= intervals[i].0 {
                take = take.max(best[qpos] + 1);
            }
        }
        best[pos] = take;
        overall = overall.max(take);
    }
    overall
}

/// Full subset enumeration, feasible for small instances; validates the DP.
pub fn subset_separated_optimum(intervals: &[(f64, f64)], rho: f64) -> usize {
    let n = intervals.len();
    assert!(n <= 16);
    let mut best = 0;
    'mask: for mask in 0u32..(1 << n) {
        let chosen: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if chosen.len() <= best {
            continue;
        }
        for (a, &i) in chosen.iter().enumerate() {
            for &j in &chosen[a + 1..] {
                let gap = (intervals[j].0 - intervals[i].1).max(intervals[i].0 - intervals[j].1);
                if gap < rho {
                    continue 'mask;
                }
            }
        }
        best = chosen.len();
    }
    best
}

/// Deterministic random valid Barański carpets with |D| = 3.
pub fn random_baranski_carpets(count: usize, seed: u64) -> Vec<BaranskiCarpet> {
    let splits: Vec<Vec<Rational>> = vec![
        vec![r("1/2"), r("1/2")],
        vec![r("1/3"), r("2/3")],
        vec![r("1/4"), r("3/4")],
        vec![r("2/5"), r("3/5")],
        vec![r("1/3"), r("1/3"), r("1/3")],
        vec![r("1/2"), r("1/4"), r("1/4")],
        vec![r("1/2"), r("1/3"), r("1/6")],
        vec![r("1/4"), r("1/2"), r("1/4")],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let cols = splits[rng.gen_range(0..splits.len())].clone();
        let rows = splits[rng.gen_range(0..splits.len())].clone();
        let grid: Vec<(usize, usize)> = (0..cols.len())
            .flat_map(|i| (0..rows.len()).map(move |j| (i, j)))
            .collect();
        let mut digits = Vec::new();
        let mut pool = grid.clone();
        for _ in 0..3.min(pool.len()) {
            let idx = rng.gen_range(0..pool.len());
            digits.push(pool.swap_remove(idx));
        }
        digits.sort_unstable();
        let carpet = BaranskiCarpet {
            col_widths: cols,
            row_heights: rows,
            digits,
        };
        if carpets::carpet::validate_baranski(&carpet).is_valid() {
            out.push(carpet);
        }
    }
    out
}

/// Deterministic random valid Gatzouras-Lalley carpets with 2 or 3 rows.
pub fn random_gl_carpets(count: usize, seed: u64) -> Vec<GLCarpet> {
    use carpets::carpet::{Cell, Row};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let m = rng.gen_range(2..=3usize);
        let height = Rational::new(1, (m + rng.gen_range(0..2)) as i64 + 1).unwrap();
        let mut rows = Vec::new();
        for i in 0..m {
            let d = Rational::new(i as i64, m as i64).unwrap();
            let n_i = rng.gen_range(1..=3usize);
            let denom = rng.gen_range((n_i as i64 + 1).max(3)..=9);
            let a = Rational::new(1, denom * (m as i64 + 1)).unwrap();
            let cells = (0..n_i)
                .map(|jj| Cell {
                    a: a.clone(),
                    c: Rational::new(jj as i64, n_i as i64).unwrap(),
                })
                .collect();
            rows.push(Row {
                b: height.clone(),
                d,
                cells,
            });
        }
        let carpet = GLCarpet { rows };
        if carpets::carpet::validate_gl(&carpet).is_valid() {
            out.push(carpet);
        }
    }
    out
}

pub fn uniform_carpet(m: usize, n: usize) -> UniformFibreCarpet {
    let a = Rational::new(1, ((m + 1) * (n + 1)) as i64).unwrap();
    let b = Rational::new(1, (m + 1) as i64).unwrap();
    UniformFibreCarpet::standard(m, n, a, b).unwrap()
}

/// Product-of-Cantor-sets carpets used by the projection criteria.
pub fn quarter_quarter_product() -> Carpet {
    Carpet::Baranski(BaranskiCarpet {
        col_widths: vec![r("1/4"), r("1/2"), r("1/4")],
        row_heights: vec![r("1/4"), r("1/2"), r("1/4")],
        digits: vec![(0, 0), (0, 2), (2, 0), (2, 2)],
    })
}

pub fn quarter_third_product() -> Carpet {
    Carpet::Baranski(BaranskiCarpet {
        col_widths: vec![r("1/4"), r("1/2"), r("1/4")],
        row_heights: vec![r("1/3"), r("1/3"), r("1/3")],
        digits: vec![(0, 0), (0, 2), (2, 0), (2, 2)],
    })
}
