//! Hausdorff dimension of the carpet classes via their variational
//! formulas, plus the closed uniform-fibre form and a brute-force simplex
//! grid oracle for acceptance tests.
//!
//! The optimizers run multi-start Nelder-Mead in unconstrained softmax
//! coordinates followed by a numerical-gradient polish; the problems are
//! suprema over probability simplices, so the grid oracle bounds the risk
//! of a missed global maximum at desk scale.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::carpet::{BaranskiCarpet, Carpet, GLCarpet, UniformFibreCarpet};
use crate::{Error, Result};

pub const T_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(pub Vec<f64>);

impl ProbVector {
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Precondition("empty probability vector".into()));
        }
        if self.0.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Precondition(
                "probability vector has negative or non-finite entries".into(),
            ));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "probability vector sums to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn uniform(len: usize) -> Self {
        ProbVector(vec![1.0 / len as f64; len])
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OptimizerDiagnostics {
    pub starts: usize,
    pub iterations: u64,
    /// Gap between the best and worst start's final objective.
    pub spread: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionReport {
    pub value: f64,
    pub maximizer: ProbVector,
    pub t_of_p: Option<f64>,
    pub d_x: Option<f64>,
    pub d_y: Option<f64>,
    pub diagnostics: OptimizerDiagnostics,
}

/// Scales of a Gatzouras-Lalley carpet in log form: `ln_b[i]` and
/// `ln_a[i][j]`, precomputed once per optimization.
struct GlLogs {
    ln_b: Vec<f64>,
    ln_a: Vec<Vec<f64>>,
}

impl GlLogs {
    fn new(carpet: &GLCarpet) -> Self {
        GlLogs {
            ln_b: carpet.rows.iter().map(|r| r.b.ln()).collect(),
            ln_a: carpet
                .rows
                .iter()
                .map(|r| r.cells.iter().map(|c| c.a.ln()).collect())
                .collect(),
        }
    }
}

fn require_valid_gl(carpet: &GLCarpet) -> Result<()> {
    let report = crate::carpet::validate_gl(carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    Ok(())
}

/// Solves `sum_i p_i ln(sum_j a_ij^t) = 0` for the unique root `t >= 0`.
/// The left side strictly decreases in `t`, so a bracketing bisection with
/// Newton refinement converges; the final residual is at most 1e-12.
pub fn solve_t(p: &ProbVector, carpet: &GLCarpet) -> Result<f64> {
    require_valid_gl(carpet)?;
    p.validate()?;
    if p.0.len() != carpet.rows.len() {
        return Err(Error::Precondition(format!(
            "probability vector has {} entries for {} rows",
            p.0.len(),
            carpet.rows.len()
        )));
    }
    let logs = GlLogs::new(carpet);
    Ok(solve_t_inner(&p.0, &logs))
}

fn t_objective(t: f64, p: &[f64], logs: &GlLogs) -> (f64, f64) {
    let mut f = 0.0;
    let mut df = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        let mut dsum = 0.0;
        for &la in &logs.ln_a[i] {
            let term = (t * la).exp();
            sum += term;
            dsum += term * la;
        }
        f += pi * sum.ln();
        df += pi * dsum / sum;
    }
    (f, df)
}

fn solve_t_inner(p: &[f64], logs: &GlLogs) -> f64 {
    // Upper bracket forces every inner sum at or below max_j a_ij < 1.
    let mut hi = 1.0f64;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let n_i = logs.ln_a[i].len() as f64;
        let max_ln_a = logs.ln_a[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi = hi.max(n_i.ln() / -max_ln_a + 1.0);
    }
    let mut lo = 0.0f64;
    let (f_lo, _) = t_objective(lo, p, logs);
    if f_lo <= 0.0 {
        // Every active row has a single cell: the root is exactly 0.
        return 0.0;
    }
    debug_assert!(t_objective(hi, p, logs).0 < 0.0);
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = t_objective(t, p, logs);
        if f.abs() <= T_RESIDUAL_TOL {
            return t;
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // Newton step, falling back to bisection when it leaves the bracket.
        let newton = t - f / df;
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    t
}

fn gl_objective(p: &[f64], logs: &GlLogs) -> f64 {
    let mut entropy = 0.0;
    let mut denom = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            entropy += pi * pi.ln();
            denom += pi * logs.ln_b[i];
        }
    }
    let t = solve_t_inner(p, logs);
    entropy / denom + t
}

fn softmax(z: &[f64]) -> Vec<f64> {
    // First coordinate pinned to zero to remove the gauge freedom.
    let mut max = 0.0f64;
    for &v in z {
        max = max.max(v);
    }
    let mut p = Vec::with_capacity(z.len() + 1);
    let mut sum = (-max).exp();
    p.push((-max).exp());
    for &v in z {
        let e = (v - max).exp();
        p.push(e);
        sum += e;
    }
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// Multi-start Nelder-Mead maximization over the simplex in softmax
/// coordinates, with a central-difference gradient polish on the winner.
fn maximize_over_simplex<F>(dim: usize, seed: u64, f: F) -> (Vec<f64>, f64, OptimizerDiagnostics)
where
    F: Fn(&[f64]) -> f64,
{
    if dim == 1 {
        let p = vec![1.0];
        let v = f(&p);
        return (
            p,
            v,
            OptimizerDiagnostics {
                starts: 1,
                iterations: 0,
                spread: 0.0,
            },
        );
    }
    let d = dim - 1;
    let g = |z: &[f64]| f(&softmax(z));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    starts.push(vec![0.0; d]);
    for i in 0..dim {
        // Near-vertex starts: one coordinate dominant.
        let mut z = vec![-4.0; d];
        if i > 0 {
            z[i - 1] = 4.0;
        }
        starts.push(z);
    }
    while starts.len() < 16.max(dim + 2) {
        starts.push((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect());
    }

    let mut iterations = 0u64;
    let mut results: Vec<(f64, Vec<f64>)> = Vec::new();
    for start in &starts {
        let (z, v, iters) = nelder_mead_max(&g, start, 1e-13, 400 * d as u64);
        iterations += iters;
        results.push((v, z));
    }
    results.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let spread = results[0].0 - results[results.len() - 1].0;

    // Polish the winner: restart Nelder-Mead from it, then gradient ascent.
    let mut best_z = results[0].1.clone();
    let mut best_v = results[0].0;
    for _ in 0..3 {
        let (z, v, iters) = nelder_mead_max(&g, &best_z, 1e-14, 400 * d as u64);
        iterations += iters;
        if v > best_v {
            best_v = v;
            best_z = z;
        } else {
            break;
        }
    }
    let (z, v, iters) = gradient_polish(&g, &best_z, 300);
    iterations += iters;
    if v > best_v {
        best_v = v;
        best_z = z;
    }

    (
        softmax(&best_z),
        best_v,
        OptimizerDiagnostics {
            starts: starts.len(),
            iterations,
            spread,
        },
    )
}

fn nelder_mead_max<G>(g: &G, start: &[f64], ftol: f64, max_iter: u64) -> (Vec<f64>, f64, u64)
where
    G: Fn(&[f64]) -> f64,
{
    let d = start.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(d + 1);
    simplex.push((g(start), start.to_vec()));
    for i in 0..d {
        let mut x = start.to_vec();
        x[i] += 0.5;
        simplex.push((g(&x), x));
    }
    let mut iters = 0u64;
    while iters < max_iter {
        iters += 1;
        simplex.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        if simplex[0].0 - simplex[d].0 < ftol {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|c| simplex[..d].iter().map(|(_, x)| x[c]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].clone();
        let lerp = |t: f64| -> Vec<f64> {
            (0..d)
                .map(|c| centroid[c] + t * (centroid[c] - worst.1[c]))
                .collect()
        };
        let reflected = lerp(1.0);
        let fr = g(&reflected);
        if fr > simplex[0].0 {
            let expanded = lerp(2.0);
            let fe = g(&expanded);
            simplex[d] = if fe > fr {
                (fe, expanded)
            } else {
                (fr, reflected)
            };
        } else if fr > simplex[d - 1].0 {
            simplex[d] = (fr, reflected);
        } else {
            let contracted = if fr > worst.0 { lerp(0.5) } else { lerp(-0.5) };
            let fc = g(&contracted);
            if fc > worst.0.max(fr) {
                simplex[d] = (fc, contracted);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].1.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..d)
                        .map(|c| best[c] + 0.5 * (entry.1[c] - best[c]))
                        .collect();
                    *entry = (g(&x), x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let (v, x) = simplex.swap_remove(0);
    (x, v, iters)
}

fn gradient_polish<G>(g: &G, start: &[f64], max_iter: u64) -> (Vec<f64>, f64, u64)
where
    G: Fn(&[f64]) -> f64,
{
    let d = start.len();
    let mut x = start.to_vec();
    let mut fx = g(&x);
    let h = 1e-6;
    let mut iters = 0;
    for _ in 0..max_iter {
        iters += 1;
        let mut grad = vec![0.0; d];
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            grad[i] = (g(&xp) - g(&xm)) / (2.0 * h);
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let cand: Vec<f64> = (0..d).map(|i| x[i] + step * grad[i] / norm).collect();
            let fc = g(&cand);
            if fc > fx {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, fx, iters)
}

/// Maximizes entropy / (-sum p ln b) + t(p) over the row simplex.
pub fn gl_dimension_seeded(carpet: &GLCarpet, seed: u64) -> Result<DimensionReport> {
    require_valid_gl(carpet)?;
    let logs = GlLogs::new(carpet);
    let m = carpet.rows.len();
    let (p, value, diagnostics) = maximize_over_simplex(m, seed, |p| gl_objective(p, &logs));
    let t = solve_t_inner(&p, &logs);
    Ok(DimensionReport {
        value,
        maximizer: ProbVector(p),
        t_of_p: Some(t),
        d_x: None,
        d_y: None,
        diagnostics,
    })
}

pub fn gl_dimension(carpet: &GLCarpet) -> Result<DimensionReport> {
    gl_dimension_seeded(carpet, 0)
}

/// Objective value at a user-supplied row distribution; the reported
/// maximizer of [`gl_dimension`] re-evaluates to the reported value.
pub fn gl_objective_value(p: &ProbVector, carpet: &GLCarpet) -> Result<f64> {
    require_valid_gl(carpet)?;
    p.validate()?;
    if p.0.len() != carpet.rows.len() {
        return Err(Error::Precondition(format!(
            "probability vector has {} entries for {} rows",
            p.0.len(),
            carpet.rows.len()
        )));
    }
    let logs = GlLogs::new(carpet);
    Ok(gl_objective(&p.0, &logs))
}

struct BaranskiLogs {
    ln_a: Vec<f64>,
    ln_b: Vec<f64>,
    digits: Vec<(usize, usize)>,
    n: usize,
    m: usize,
}

impl BaranskiLogs {
    fn new(carpet: &BaranskiCarpet) -> Self {
        BaranskiLogs {
            ln_a: carpet.col_widths.iter().map(|v| v.ln()).collect(),
            ln_b: carpet.row_heights.iter().map(|v| v.ln()).collect(),
            digits: carpet.digits.clone(),
            n: carpet.col_widths.len(),
            m: carpet.row_heights.len(),
        }
    }
}

/// Both directional objective values at a digit distribution.
pub fn baranski_objective_values(
    p: &ProbVector,
    carpet: &BaranskiCarpet,
) -> Result<(f64, f64)> {
    let report = crate::carpet::validate_baranski(carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    p.validate()?;
    if p.0.len() != carpet.digits.len() {
        return Err(Error::Precondition(format!(
            "probability vector has {} entries for {} digits",
            p.0.len(),
            carpet.digits.len()
        )));
    }
    let logs = BaranskiLogs::new(carpet);
    Ok((
        baranski_objective(&p.0, &logs, true),
        baranski_objective(&p.0, &logs, false),
    ))
}

/// The two displayed objectives; `x_first` selects d_x, otherwise d_y.
fn baranski_objective(p: &[f64], logs: &BaranskiLogs, x_first: bool) -> f64 {
    let mut q = vec![0.0; logs.n];
    let mut r = vec![0.0; logs.m];
    for (idx, &(i, j)) in logs.digits.iter().enumerate() {
        q[i] += p[idx];
        r[j] += p[idx];
    }
    let ent = |w: &[f64], ln_s: &[f64]| -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                num += wi * wi.ln();
                den += wi * ln_s[i];
            }
        }
        (num, den)
    };
    let (qent, qden) = ent(&q, &logs.ln_a);
    let (rent, rden) = ent(&r, &logs.ln_b);
    let cond = |marginal: &[f64], pick: fn(&(usize, usize)) -> usize| -> f64 {
        let mut s = 0.0;
        for (idx, digit) in logs.digits.iter().enumerate() {
            let pi = p[idx];
            if pi > 0.0 {
                s += pi * (pi / marginal[pick(digit)]).ln();
            }
        }
        s
    };
    if x_first {
        qent / qden + cond(&q, |d| d.0) / rden
    } else {
        rent / rden + cond(&r, |d| d.1) / qden
    }
}

/// Computes d_x and d_y over the digit simplex and reports their maximum.
pub fn baranski_dimension_seeded(carpet: &BaranskiCarpet, seed: u64) -> Result<DimensionReport> {
    let report = crate::carpet::validate_baranski(carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    let logs = BaranskiLogs::new(carpet);
    let dim = carpet.digits.len();
    let (px, dx, diag_x) =
        maximize_over_simplex(dim, seed, |p| baranski_objective(p, &logs, true));
    let (py, dy, diag_y) =
        maximize_over_simplex(dim, seed ^ 0x9e3779b97f4a7c15, |p| {
            baranski_objective(p, &logs, false)
        });
    let (value, maximizer) = if dx >= dy {
        (dx, px)
    } else {
        (dy, py)
    };
    Ok(DimensionReport {
        value,
        maximizer: ProbVector(maximizer),
        t_of_p: None,
        d_x: Some(dx),
        d_y: Some(dy),
        diagnostics: OptimizerDiagnostics {
            starts: diag_x.starts + diag_y.starts,
            iterations: diag_x.iterations + diag_y.iterations,
            spread: diag_x.spread.max(diag_y.spread),
        },
    })
}

pub fn baranski_dimension(carpet: &BaranskiCarpet) -> Result<DimensionReport> {
    baranski_dimension_seeded(carpet, 0)
}

/// Closed form `ln m / -ln b + ln n / -ln a`.
pub fn uniform_fibre_dimension(carpet: &UniformFibreCarpet) -> Result<f64> {
    let report = crate::carpet::validate_uniform(carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    Ok((carpet.m as f64).ln() / -carpet.b.ln() + (carpet.n as f64).ln() / -carpet.a.ln())
}

pub fn dimension_seeded(carpet: &Carpet, seed: u64) -> Result<DimensionReport> {
    match carpet {
        Carpet::GatzourasLalley(c) => gl_dimension_seeded(c, seed),
        Carpet::Baranski(c) => baranski_dimension_seeded(c, seed),
        Carpet::Uniform(c) => gl_dimension_seeded(&c.to_gl(), seed),
    }
}

/// Exhaustive evaluation of the relevant objective on a simplex lattice of
/// step `1/resolution`; simplex dimension is capped at 6.
pub fn grid_oracle_dimension(carpet: &Carpet, resolution: usize) -> Result<f64> {
    let report = carpet.validate();
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    if resolution == 0 {
        return Err(Error::Precondition("resolution must be positive".into()));
    }
    match carpet {
        Carpet::GatzourasLalley(c) => {
            let logs = GlLogs::new(c);
            grid_max(c.rows.len(), resolution, |p| gl_objective(p, &logs))
        }
        Carpet::Uniform(c) => {
            let gl = c.to_gl();
            let logs = GlLogs::new(&gl);
            grid_max(gl.rows.len(), resolution, |p| gl_objective(p, &logs))
        }
        Carpet::Baranski(c) => {
            let logs = BaranskiLogs::new(c);
            grid_max(c.digits.len(), resolution, |p| {
                baranski_objective(p, &logs, true).max(baranski_objective(p, &logs, false))
            })
        }
    }
}

fn grid_max<F>(dim: usize, resolution: usize, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if dim > 6 {
        return Err(Error::Budget(format!(
            "simplex dimension {dim} exceeds the grid oracle cap of 6"
        )));
    }
    let mut p = vec![0.0; dim];
    let mut best = f64::NEG_INFINITY;
    enumerate_compositions(resolution, dim, &mut Vec::new(), &mut |counts| {
        for (i, &c) in counts.iter().enumerate() {
            p[i] = c as f64 / resolution as f64;
        }
        let v = f(&p);
        if v > best {
            best = v;
        }
    });
    Ok(best)
}

fn enumerate_compositions(
    total: usize,
    parts: usize,
    prefix: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if parts == 1 {
        prefix.push(total);
        f(prefix);
        prefix.pop();
        return;
    }
    for head in 0..=total {
        prefix.push(head);
        enumerate_compositions(total - head, parts - 1, prefix, f);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carpet::{Cell, Row};
    use crate::rational::Rational;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn uniform_2x2(a: &str, b: &str) -> UniformFibreCarpet {
        UniformFibreCarpet::standard(2, 2, r(a), r(b)).unwrap()
    }

    #[test]
    fn solve_t_single_row_two_quarter_cells() {
        let carpet = GLCarpet {
            rows: vec![Row {
                b: r("1/2"),
                d: r("0"),
                cells: vec![
                    Cell { a: r("1/4"), c: r("0") },
                    Cell { a: r("1/4"), c: r("1/2") },
                ],
            }],
        };
        let t = solve_t(&ProbVector(vec![1.0]), &carpet).unwrap();
        assert!((t - 0.5).abs() < 1e-12, "t = {t}");
    }

    #[test]
    fn solve_t_single_cell_rows_give_zero() {
        let carpet = GLCarpet {
            rows: vec![
                Row {
                    b: r("1/2"),
                    d: r("0"),
                    cells: vec![Cell { a: r("1/3"), c: r("0") }],
                },
                Row {
                    b: r("1/3"),
                    d: r("1/2"),
                    cells: vec![Cell { a: r("1/5"), c: r("0") }],
                },
            ],
        };
        let t = solve_t(&ProbVector(vec![0.5, 0.5]), &carpet).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn uniform_fibre_closed_form() {
        let c = uniform_2x2("1/4", "1/2");
        assert!((uniform_fibre_dimension(&c).unwrap() - 1.5).abs() < 1e-12);
        let c = uniform_2x2("1/3", "1/2");
        let expected = 1.0 + 2f64.ln() / 3f64.ln();
        assert!((uniform_fibre_dimension(&c).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn optimizer_matches_closed_form_on_uniform_fibres() {
        let c = uniform_2x2("1/4", "1/2");
        let report = gl_dimension(&c.to_gl()).unwrap();
        assert!(
            (report.value - 1.5).abs() < 1e-8,
            "optimizer value {}",
            report.value
        );
        // Symmetry: maximizer is the uniform vector.
        for &p in &report.maximizer.0 {
            assert!((p - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn single_row_reduces_to_similarity_dimension() {
        let carpet = GLCarpet {
            rows: vec![Row {
                b: r("1/2"),
                d: r("0"),
                cells: vec![
                    Cell { a: r("1/4"), c: r("0") },
                    Cell { a: r("1/4"), c: r("1/2") },
                ],
            }],
        };
        let report = gl_dimension(&carpet).unwrap();
        assert!((report.value - 0.5).abs() < 1e-10);
        assert_eq!(report.maximizer.0, vec![1.0]);
    }

    #[test]
    fn baranski_full_square_has_dimension_two() {
        let carpet = BaranskiCarpet {
            col_widths: vec![r("1/2"), r("1/2")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        };
        let report = baranski_dimension(&carpet).unwrap();
        assert!((report.value - 2.0).abs() < 1e-8, "value {}", report.value);
    }

    #[test]
    fn baranski_diagonal_is_self_similar() {
        let carpet = BaranskiCarpet {
            col_widths: vec![r("1/2"), r("1/2")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(0, 0), (1, 1)],
        };
        let report = baranski_dimension(&carpet).unwrap();
        assert!((report.value - 1.0).abs() < 1e-8, "value {}", report.value);
        let oracle = grid_oracle_dimension(&Carpet::Baranski(carpet), 400).unwrap();
        assert!(report.value + 1e-9 >= oracle);
        assert!((report.value - oracle).abs() < 1e-3);
    }

    #[test]
    fn grid_oracle_examples() {
        let c = Carpet::Uniform(uniform_2x2("1/4", "1/2"));
        let v = grid_oracle_dimension(&c, 1000).unwrap();
        assert!((v - 1.5).abs() < 1e-4, "grid value {v}");

        let single = Carpet::GatzourasLalley(GLCarpet {
            rows: vec![Row {
                b: r("1/2"),
                d: r("0"),
                cells: vec![Cell { a: r("1/4"), c: r("0") }],
            }],
        });
        assert_eq!(grid_oracle_dimension(&single, 10).unwrap(), 0.0);
    }

    #[test]
    fn maximizer_is_a_certificate() {
        // Reported value is at least the objective at any supplied p.
        let carpet = GLCarpet {
            rows: vec![
                Row {
                    b: r("1/2"),
                    d: r("0"),
                    cells: vec![
                        Cell { a: r("1/4"), c: r("0") },
                        Cell { a: r("1/4"), c: r("1/2") },
                    ],
                },
                Row {
                    b: r("1/3"),
                    d: r("1/2"),
                    cells: vec![Cell { a: r("1/9"), c: r("0") }],
                },
            ],
        };
        let report = gl_dimension(&carpet).unwrap();
        for p in [[0.5, 0.5], [0.9, 0.1], [0.2, 0.8], [1.0, 0.0]] {
            let value = gl_objective_value(&ProbVector(p.to_vec()), &carpet).unwrap();
            assert!(report.value + 1e-9 >= value);
        }
        // And the reported maximizer re-evaluates to the reported value.
        let again = gl_objective_value(&report.maximizer, &carpet).unwrap();
        assert!((again - report.value).abs() < 1e-10);
    }

    #[test]
    fn removing_a_cell_never_increases_dimension() {
        let full = GLCarpet {
            rows: vec![
                Row {
                    b: r("1/2"),
                    d: r("0"),
                    cells: vec![
                        Cell { a: r("1/4"), c: r("0") },
                        Cell { a: r("1/4"), c: r("1/2") },
                    ],
                },
                Row {
                    b: r("1/3"),
                    d: r("1/2"),
                    cells: vec![
                        Cell { a: r("1/9"), c: r("0") },
                        Cell { a: r("1/9"), c: r("1/2") },
                    ],
                },
            ],
        };
        let mut thinned = full.clone();
        thinned.rows[1].cells.pop();
        let v_full = gl_dimension(&full).unwrap().value;
        let v_thin = gl_dimension(&thinned).unwrap().value;
        assert!(v_thin <= v_full + 1e-6, "{v_thin} vs {v_full}");
    }
}
