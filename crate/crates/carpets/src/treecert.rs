//! Lower-bound certificates for projected carpets: the rotation-driven
//! level schedule, level alphabets, a rooted tree whose per-level
//! projections are verifiably separated, and the resulting dimension
//! bound.
//!
//! The construction follows a branching process driven by the irrational
//! rotation `x -> x + alpha mod 1` with `alpha = k log_a b - ell(k)`: level
//! `j` rectangles have exact size `a^{e_j} x b^{jk}`, and at good charts the
//! offspring of every node form a `b^k`-separated family in the skew chart
//! of that level, which scales to `b^{(j+1)k}` separation globally. The
//! certificate never relies on the goodness oracle: separation is
//! re-verified on the realized tree, so the reported bound is sound for
//! any oracle choice.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carpet::UniformFibreCarpet;
use crate::dimension::uniform_fibre_dimension;
use crate::rational::Rational;
use crate::rationality::log_ratio_rational;
use crate::separated::{density_l2_exact, max_separated_intervals};
use crate::symbolic::{all_words, ell_of_k, horizontal_offset, vertical_offset, Word};
use crate::{Error, Result};

/// Exact level schedule: `e[j-1] = e_j`, `s[j-1] = s(j)` where defined,
/// and the rotation orbit `orbit[j-1] = T^j(0)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationSchedule {
    pub k: u64,
    pub ell: u64,
    pub alpha: f64,
    pub e: Vec<u64>,
    pub s: Vec<u64>,
    pub orbit: Vec<f64>,
}

impl RotationSchedule {
    pub fn e_at(&self, j: u64) -> u64 {
        self.e[(j - 1) as usize]
    }

    pub fn s_at(&self, j: u64) -> u64 {
        self.s[(j - 1) as usize]
    }

    pub fn orbit_at(&self, j: u64) -> f64 {
        self.orbit[(j - 1) as usize]
    }
}

/// Computes `e_j` by the exact recurrence (`e_1 = ell(k)`, then step by
/// `ell(k)` exactly when `a^{e_{j-1}+ell(k)+1} < b^{jk}`), together with
/// `s(j)` and the rotation orbit. Rejects rational `log a / log b`.
pub fn rotation_schedule(
    a: &Rational,
    b: &Rational,
    k: u64,
    j_max: u64,
) -> Result<RotationSchedule> {
    if log_ratio_rational(a, b)?.is_some() {
        return Err(Error::Precondition(format!(
            "log({a})/log({b}) is rational; the rotation is periodic"
        )));
    }
    if k == 0 || j_max == 0 {
        return Err(Error::Precondition("k and j_max must be >= 1".into()));
    }
    let scale = ell_of_k(a, b, k)?;
    let ell = scale.ell;
    let log_ab = b.ln() / a.ln();
    let alpha = k as f64 * log_ab - ell as f64;

    let k32 = u32::try_from(k).map_err(|_| Error::Budget("k too large".into()))?;
    let b_k = b.pow(k32);
    let mut e = Vec::with_capacity(j_max as usize);
    let mut orbit = Vec::with_capacity(j_max as usize);
    e.push(ell);
    let mut b_jk = b_k.clone(); // b^{jk} for current j
    let mut a_ej = a.pow(u32::try_from(ell).unwrap()); // a^{e_j}
    orbit.push(k as f64 * log_ab - ell as f64);
    let a_step = a.pow(u32::try_from(ell).unwrap());
    for j in 2..=j_max {
        b_jk = &b_jk * &b_k;
        let prev = *e.last().unwrap();
        // a^{prev + ell + 1} < b^{jk}?
        let candidate = &(&a_ej * &a_step) * a;
        let (next, next_a) = if candidate < b_jk {
            (prev + ell, &a_ej * &a_step)
        } else {
            (prev + ell + 1, candidate)
        };
        e.push(next);
        a_ej = next_a;
        orbit.push((j * k) as f64 * log_ab - next as f64);

        // Closed-form cross-check: e_j is the largest power with
        // a^{e_j} >= b^{jk}.
        debug_assert!(a_ej >= b_jk && &a_ej * a < b_jk);
    }
    for (idx, &t) in orbit.iter().enumerate() {
        if !(-1e-9..1.0 + 1e-9).contains(&t) {
            return Err(Error::Precondition(format!(
                "orbit value T^{}(0) = {t} outside [0,1)",
                idx + 1
            )));
        }
    }

    // s(j): unique index with e_{s(j)-1} < jk <= e_{s(j)}.
    let mut s = Vec::new();
    let last_e = *e.last().unwrap();
    for j in 1..=j_max {
        let target = j * k;
        if target > last_e {
            break;
        }
        let pos = e.partition_point(|&v| v < target) as u64 + 1;
        debug_assert!(e[(pos - 1) as usize] >= target);
        debug_assert!(pos == 1 || e[(pos - 2) as usize] < target);
        s.push(pos);
    }

    // Exact bound checks on s(j): b^{s(j)} <= a^j and b^{k(s(j)-1)} > a^{jk+1}.
    for (idx, &sj) in s.iter().enumerate() {
        let j = (idx + 1) as u32;
        let lower_ok = b.pow(sj as u32) <= a.pow(j);
        let upper_ok = b.pow(k32 * (sj as u32 - 1)) > a.pow(j * k32 + 1);
        if !lower_ok || !upper_ok {
            return Err(Error::Precondition(format!(
                "s({j}) = {sj} violates its exact bounds"
            )));
        }
    }

    Ok(RotationSchedule {
        k,
        ell,
        alpha,
        e,
        s,
        orbit,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub horizon: u64,
    pub star_discrepancy: f64,
    /// Visit-frequency error against the length of the supplied interval.
    pub set_frequency_error: Option<f64>,
}

/// Star discrepancy of the orbit `{j alpha mod 1}` up to `horizon`, plus
/// an optional interval visit-frequency check.
pub fn equidistribution_check(
    alpha: f64,
    horizon: u64,
    set: Option<(f64, f64)>,
) -> Result<DiscrepancyReport> {
    if horizon < 100 {
        return Err(Error::Precondition("horizon must be at least 100".into()));
    }
    let n = horizon as usize;
    let mut points: Vec<f64> = (1..=horizon).map(|j| (j as f64 * alpha).fract()).collect();
    let set_frequency_error = set.map(|(lo, hi)| {
        let hits = points.iter().filter(|&&x| x > lo && x < hi).count();
        (hits as f64 / n as f64 - (hi - lo)).abs()
    });
    points.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut disc = 0.0f64;
    for (i, &x) in points.iter().enumerate() {
        let up = (i + 1) as f64 / n as f64 - x;
        let down = x - i as f64 / n as f64;
        disc = disc.max(up).max(down);
    }
    Ok(DiscrepancyReport {
        horizon,
        star_discrepancy: disc,
        set_frequency_error,
    })
}

/// Decides which level charts count as good and what the admissible
/// row-word alphabet is at a good chart.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum AngleOracle {
    /// Density-threshold calibration over the row-word families: the chart
    /// `t` is good when more than `1 - sqrt(epsilon)` of the row words keep
    /// their projected density below their own Markov threshold
    /// (chart-integral / epsilon); those words form the level alphabet.
    Empirical { charts: usize },
    /// Treat every chart as good with the full row alphabet. Separation is
    /// still verified on the realized tree, so bounds stay sound.
    AllGood,
    /// Treat every chart as bad: single-path tree, bound zero.
    AllBad,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildParams {
    pub k: u64,
    pub tau: f64,
    pub epsilon: f64,
    /// Number of branching steps past the root level `j0`.
    pub depth: u64,
    pub oracle: AngleOracle,
    /// Hard cap on nodes per level.
    pub node_cap: u64,
    /// Optional uniform cap on offspring per level, for comparable
    /// certificates across a `k`-ladder under one node budget.
    pub max_offspring: Option<u64>,
    /// Cap on enumerated candidate-family size per class.
    pub family_budget: u64,
    /// Thinning iterate override when the dimension is at least 1.
    pub iterate: Option<u32>,
    /// Skew-chart branch: certify the sign-flipped chart instead.
    pub tilde: bool,
}

impl BuildParams {
    pub fn new(k: u64, tau: f64, epsilon: f64, depth: u64) -> Self {
        BuildParams {
            k,
            tau,
            epsilon,
            depth,
            oracle: AngleOracle::Empirical { charts: 16 },
            node_cap: 1_000_000,
            max_offspring: None,
            family_budget: 1 << 21,
            iterate: None,
            tilde: false,
        }
    }
}

/// How a level alphabet was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphabetKind {
    /// Words admitted by the goodness oracle at this chart.
    Admitted,
    /// Admitted words extended by one extra letter (longer gap).
    AdmittedExtended,
    /// Every word of the gap length (bad chart).
    Full,
}

/// Admissible row words for one rotation step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelAlphabet {
    pub kind: AlphabetKind,
    pub words: Vec<Word>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeNode {
    pub sigma: Word,
    pub sigma_prime: Word,
    pub parent: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeLevel {
    pub j: u64,
    pub nodes: Vec<TreeNode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertTree {
    /// The effective (possibly thinned) uniform-fibre system the tree
    /// certifies; a subset system of the input carpet.
    pub carpet: UniformFibreCarpet,
    /// Iterate depth used by thinning; 0 when the carpet was already
    /// subcritical.
    pub iterate: u32,
    pub original_gamma: f64,
    pub gamma: f64,
    pub k: u64,
    pub tau: f64,
    pub tilde: bool,
    pub epsilon: f64,
    pub j0: u64,
    pub schedule: RotationSchedule,
    pub levels: Vec<TreeLevel>,
    /// Offspring count per branching level (length `levels - 1`).
    pub counts: Vec<u64>,
    /// Good-chart flag per branching level.
    pub good_flags: Vec<bool>,
    /// Level alphabets by index: admissible row words per rotation step.
    pub alphabets: BTreeMap<u64, LevelAlphabet>,
    /// Admissible vertical tails by level.
    pub thetas: BTreeMap<u64, Vec<Word>>,
    /// Diagnostics: levels whose tail-count bound fell short.
    pub theta_shortfalls: Vec<u64>,
}

/// Iterates the system `iterate` times and keeps a uniform block of rows
/// and cells maximizing the dimension strictly below one. Identity when
/// the carpet is already subcritical and no iterate is forced.
pub fn thin_to_subcritical(
    carpet: &UniformFibreCarpet,
    iterate: Option<u32>,
) -> Result<(UniformFibreCarpet, u32)> {
    let gamma = uniform_fibre_dimension(carpet)?;
    if gamma < 1.0 - 1e-9 && iterate.is_none() {
        return Ok((carpet.clone(), 0));
    }
    let r = iterate.unwrap_or(2).max(1);
    let row_words = all_words(carpet.m, r as usize);
    let col_words = all_words(carpet.n, r as usize);
    let a_r = carpet.a.pow(r);
    let b_r = carpet.b.pow(r);
    let max_m = row_words.len();
    let max_n = col_words.len();
    let ln_inv_a = -a_r.ln();
    let ln_inv_b = -b_r.ln();
    let mut best: Option<(f64, usize, usize)> = None;
    for m_e in 1..=max_m {
        for n_e in 1..=max_n {
            let g = (m_e as f64).ln() / ln_inv_b + (n_e as f64).ln() / ln_inv_a;
            if g < 1.0 - 1e-9 {
                let candidate = (g, m_e, n_e);
                if best.map_or(true, |b| candidate > (b.0, b.1, b.2)) {
                    best = Some(candidate);
                }
            }
        }
    }
    let (_, m_e, n_e) =
        best.ok_or_else(|| Error::Precondition("no subcritical block exists".into()))?;
    let rows: Vec<&Word> = row_words.iter().take(m_e).collect();
    let thinned = UniformFibreCarpet {
        a: a_r,
        b: b_r,
        m: m_e,
        n: n_e,
        row_offsets: rows.iter().map(|w| vertical_offset(carpet, w)).collect(),
        cell_offsets: rows
            .iter()
            .map(|w| {
                col_words
                    .iter()
                    .take(n_e)
                    .map(|c| horizontal_offset(carpet, w, c))
                    .collect()
            })
            .collect(),
    };
    let mut thinned = thinned;
    thinned.canonicalize();
    let report = crate::carpet::validate_uniform(&thinned);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    Ok((thinned, r))
}

/// Precomputed per-row-word family data for the empirical oracle: interval
/// endpoints are cross sums of the horizontal and vertical offsets.
struct XiFamily {
    x_offsets: Vec<f64>,
    y_offsets: Vec<f64>,
    width: f64,
    height: f64,
    threshold: f64,
}

impl XiFamily {
    fn intervals(&self, coef: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.x_offsets.len() * self.y_offsets.len());
        for &y in &self.y_offsets {
            for &x in &self.x_offsets {
                let a = coef * x;
                let b = coef * (x + self.width);
                let lo = a.min(b) + y;
                let hi = a.max(b) + y + self.height;
                out.push((lo, hi));
            }
        }
        out
    }

    fn density(&self, coef: f64) -> f64 {
        let intervals = self.intervals(coef);
        let mass = 1.0 / intervals.len() as f64;
        let masses = vec![mass; intervals.len()];
        density_l2_exact(&intervals, &masses)
    }
}

struct OracleState {
    xis: Vec<Word>,
    families: Vec<XiFamily>,
}

fn build_oracle_state(
    carpet: &UniformFibreCarpet,
    k: u64,
    ell: u64,
    tau: f64,
    epsilon: f64,
    charts: usize,
    tilde: bool,
    budget: u64,
) -> Result<OracleState> {
    let xis = all_words(carpet.m, ell as usize);
    (carpet.m as u64)
        .checked_pow(k as u32)
        .and_then(|v| v.checked_mul((carpet.n as u64).pow(ell as u32)))
        .filter(|&v| v <= budget)
        .ok_or_else(|| {
            Error::Budget(format!("oracle family size m^{k} n^{ell} over budget"))
        })?;
    let sigmas = all_words(carpet.m, k as usize);
    let cols = all_words(carpet.n, ell as usize);
    let ln_a = carpet.a.ln();
    let width = (ell as f64 * ln_a).exp();
    let height = (k as f64 * carpet.b.ln()).exp();
    let mut families: Vec<XiFamily> = xis
        .par_iter()
        .map(|xi| {
            let x_offsets: Vec<f64> = cols
                .iter()
                .map(|c| horizontal_offset(carpet, xi, c).to_f64())
                .collect();
            let y_offsets: Vec<f64> = sigmas
                .iter()
                .map(|s| vertical_offset(carpet, s).to_f64())
                .collect();
            XiFamily {
                x_offsets,
                y_offsets,
                width,
                height,
                threshold: f64::INFINITY,
            }
        })
        .collect();
    // Markov threshold per family from the chart integral over [tau, tau+1).
    let step = 1.0 / charts as f64;
    families.par_iter_mut().for_each(|family| {
        let mut integral = 0.0;
        for c in 0..charts {
            let t = tau + (c as f64 + 0.5) * step;
            let coef = chart_coefficient(ln_a, t, tilde);
            integral += family.density(coef) * step;
        }
        family.threshold = integral / epsilon;
    });
    Ok(OracleState { xis, families })
}

fn chart_coefficient(ln_a: f64, t: f64, tilde: bool) -> f64 {
    let c = (-t * ln_a).exp();
    if tilde {
        -c
    } else {
        c
    }
}

/// Builds the certificate tree. Levels run from the root level `j0`
/// (smallest `j` with `ell(k) < jk - e_j`) through `j0 + depth`; at good
/// charts every node branches into its maximal separated candidate family
/// truncated to a uniform per-level count, at bad charts each node gets a
/// single child.
pub fn build_tree(carpet: &UniformFibreCarpet, params: &BuildParams) -> Result<CertTree> {
    let report = crate::carpet::validate_uniform(carpet);
    if !report.is_valid() {
        return Err(Error::InvalidCarpet(report.summary()));
    }
    if log_ratio_rational(&carpet.a, &carpet.b)?.is_some() {
        return Err(Error::Precondition(
            "carpet scales have a rational log ratio; the rotation is periodic".into(),
        ));
    }
    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(Error::Precondition("epsilon must lie in (0,1)".into()));
    }
    let original_gamma = uniform_fibre_dimension(carpet)?;
    let (eff, iterate) = thin_to_subcritical(carpet, params.iterate)?;
    let gamma = uniform_fibre_dimension(&eff)?;
    let k = params.k;
    let scale = ell_of_k(&eff.a, &eff.b, k)?;
    let ell = scale.ell;
    if ell == 0 {
        return Err(Error::Precondition(format!(
            "ell({k}) = 0 for the effective scales; increase k"
        )));
    }

    // Schedule long enough to cover s(j0 + depth).
    let ratio = eff.a.ln() / eff.b.ln();
    let j_upper = params.depth + 8;
    let j_max = ((j_upper as f64 + 2.0) * ratio).ceil() as u64 + 4;
    let schedule = rotation_schedule(&eff.a, &eff.b, k, j_max)?;

    let j0 = (1..=j_upper)
        .find(|&j| j * k > schedule.e_at(j) + ell)
        .ok_or_else(|| Error::Precondition("no feasible root level".into()))?;
    let j_last = j0 + params.depth;
    if (j_last as usize) > schedule.s.len() {
        return Err(Error::Budget("schedule horizon too short".into()));
    }
    let s_last = schedule.s_at(j_last);

    // Level alphabets for indices j0 .. s(j_last) - 1.
    let oracle_state = match &params.oracle {
        AngleOracle::Empirical { charts } => Some(build_oracle_state(
            &eff,
            k,
            ell,
            params.tau,
            params.epsilon,
            (*charts).max(4),
            params.tilde,
            params.family_budget,
        )?),
        _ => None,
    };
    let m_e = eff.m;
    let full_cache: HashMap<u64, Vec<Word>> = HashMap::new();
    let mut full_cache = full_cache;
    let full_words = |len: u64, cache: &mut HashMap<u64, Vec<Word>>| -> Vec<Word> {
        cache
            .entry(len)
            .or_insert_with(|| all_words(m_e, len as usize))
            .clone()
    };
    let threshold_count = (1.0 - params.epsilon.sqrt()) * (m_e as f64).powi(ell as i32);
    let mut alphabets: BTreeMap<u64, LevelAlphabet> = BTreeMap::new();
    let mut alphabet_good: BTreeMap<u64, bool> = BTreeMap::new();
    for i in j0..s_last {
        let gap = schedule.e_at(i + 1) - schedule.e_at(i);
        debug_assert!(gap == ell || gap == ell + 1);
        let t = params.tau + schedule.orbit_at(i);
        let (good, base): (bool, Vec<Word>) = match &params.oracle {
            AngleOracle::AllGood => (true, full_words(ell, &mut full_cache)),
            AngleOracle::AllBad => (false, Vec::new()),
            AngleOracle::Empirical { .. } => {
                let state = oracle_state.as_ref().unwrap();
                let coef = chart_coefficient(eff.a.ln(), t, params.tilde);
                let selected: Vec<Word> = state
                    .xis
                    .iter()
                    .zip(&state.families)
                    .filter(|(_, fam)| fam.density(coef) < fam.threshold)
                    .map(|(xi, _)| xi.clone())
                    .collect();
                if selected.len() as f64 > threshold_count {
                    (true, selected)
                } else {
                    (false, Vec::new())
                }
            }
        };
        let alphabet = if !good {
            LevelAlphabet {
                kind: AlphabetKind::Full,
                words: full_words(gap, &mut full_cache),
            }
        } else if gap == ell {
            LevelAlphabet {
                kind: AlphabetKind::Admitted,
                words: base,
            }
        } else {
            // Adjoin one extra letter to every admitted word.
            let mut out = Vec::with_capacity(base.len() * m_e);
            for w in &base {
                for sym in 0..m_e {
                    let mut w2 = w.clone();
                    w2.push(sym as u8);
                    out.push(w2);
                }
            }
            LevelAlphabet {
                kind: AlphabetKind::AdmittedExtended,
                words: out,
            }
        };
        alphabets.insert(i, alphabet);
        alphabet_good.insert(i, good);
    }

    // Vertical tails Theta(j) for j0 <= j <= j_last, from the alphabet at
    // s(j) - 1: keep prefixes with more than half of all suffixes present.
    let mut thetas: BTreeMap<u64, Vec<Word>> = BTreeMap::new();
    let mut theta_suffixes: BTreeMap<u64, BTreeMap<Word, Vec<Word>>> = BTreeMap::new();
    let mut theta_shortfalls = Vec::new();
    for j in j0..=j_last {
        let sj = schedule.s_at(j);
        let source = alphabets
            .get(&(sj - 1))
            .map(|a| &a.words)
            .ok_or_else(|| Error::Precondition(format!("missing alphabet {}", sj - 1)))?;
        let prefix_len = (j * k - schedule.e_at(sj - 1)) as usize;
        let suffix_len = (schedule.e_at(sj) - j * k) as usize;
        let mut by_prefix: BTreeMap<Word, Vec<Word>> = BTreeMap::new();
        for w in source {
            debug_assert_eq!(w.len(), prefix_len + suffix_len);
            by_prefix
                .entry(w[..prefix_len].to_vec())
                .or_default()
                .push(w[prefix_len..].to_vec());
        }
        let needed = 0.5 * (m_e as f64).powi(suffix_len as i32);
        let mut tails: Vec<Word> = by_prefix
            .iter()
            .filter(|(_, suf)| suf.len() as f64 > needed)
            .map(|(p, _)| p.clone())
            .collect();
        tails.sort();
        // Tail-count bound: more than (1 - 2 sqrt(eps)) m^{prefix_len}
        // whenever the source alphabet met its own cardinality bound.
        let source_good = *alphabet_good.get(&(sj - 1)).unwrap_or(&false);
        let source_bound = (1.0 - params.epsilon.sqrt())
            * (m_e as f64).powi((prefix_len + suffix_len) as i32);
        let source_met = !source_good || source.len() as f64 > source_bound;
        let tail_bound = (1.0 - 2.0 * params.epsilon.sqrt()) * (m_e as f64).powi(prefix_len as i32);
        if source_met && tails.len() as f64 <= tail_bound {
            theta_shortfalls.push(j);
        }
        if tails.is_empty() {
            return Err(Error::Precondition(format!(
                "no admissible vertical tail at level {j} (oracle/level mismatch)"
            )));
        }
        by_prefix.retain(|p, _| tails.binary_search(p).is_ok());
        for suffixes in by_prefix.values_mut() {
            suffixes.sort();
        }
        thetas.insert(j, tails);
        theta_suffixes.insert(j, by_prefix);
    }

    // Root: zeros + admissible row words + an admissible tail.
    let e_j0 = schedule.e_at(j0);
    let s_j0 = schedule.s_at(j0);
    let mut sigma: Word = vec![0; e_j0 as usize];
    for i in j0..=s_j0 - 2 {
        let word = alphabets
            .get(&i)
            .and_then(|a| a.words.first())
            .ok_or_else(|| Error::Precondition(format!("empty alphabet at index {i}")))?;
        sigma.extend_from_slice(word);
    }
    let root_tail = thetas
        .get(&j0)
        .and_then(|t| t.first())
        .ok_or_else(|| Error::Precondition("empty tail set at the root".into()))?;
    sigma.extend_from_slice(root_tail);
    debug_assert_eq!(sigma.len() as u64, j0 * k);
    let sigma_prime: Word = vec![0; e_j0 as usize];
    let mut levels = vec![TreeLevel {
        j: j0,
        nodes: vec![TreeNode {
            sigma,
            sigma_prime,
            parent: usize::MAX,
        }],
    }];

    let ln_a_eff = eff.a.ln();
    let rho = (k as f64 * eff.b.ln()).exp();
    let n_e = eff.n;
    let mut counts = Vec::new();
    let mut good_flags = Vec::new();

    for j in j0..j_last {
        let level_idx = (j - j0) as usize;
        let good = *alphabet_good.get(&j).unwrap();
        let t = params.tau + schedule.orbit_at(j);
        let coef = chart_coefficient(ln_a_eff, t, params.tilde);
        let e_j = schedule.e_at(j) as usize;
        let e_j1 = schedule.e_at(j + 1) as usize;
        let gap = e_j1 - e_j;
        let sj = schedule.s_at(j);
        let sj1 = schedule.s_at(j + 1);
        let prefix_map = theta_suffixes.get(&j).unwrap();
        let tails_next = thetas.get(&(j + 1)).unwrap();
        let mids: Vec<&Vec<Word>> = (sj..=sj1 - 2)
            .map(|i| &alphabets.get(&i).expect("mid alphabet").words)
            .collect();
        if mids.iter().any(|m| m.is_empty()) || tails_next.is_empty() {
            return Err(Error::Precondition(format!(
                "empty candidate family at level {j} (oracle/level mismatch)"
            )));
        }
        let col_words = all_words(n_e, gap);

        // Intern suffix sets by content: nodes whose tails admit the same
        // continuations share candidate families and selections.
        let mut suffix_sets: Vec<&Vec<Word>> = Vec::new();
        let mut set_of_tail: BTreeMap<&Word, usize> = BTreeMap::new();
        for (tail, suffixes) in prefix_map {
            let idx = match suffix_sets.iter().position(|s| *s == suffixes) {
                Some(idx) => idx,
                None => {
                    suffix_sets.push(suffixes);
                    suffix_sets.len() - 1
                }
            };
            set_of_tail.insert(tail, idx);
        }

        // Candidate vertical continuations per suffix set: words of length
        // k assembled as suffix | mids... | next tail, lexicographic.
        let mut nus_per_set: Vec<Vec<Word>> = Vec::with_capacity(suffix_sets.len());
        for suffixes in &suffix_sets {
            let mut parts: Vec<&[Word]> = vec![suffixes.as_slice()];
            for m in &mids {
                parts.push(m.as_slice());
            }
            parts.push(tails_next.as_slice());
            let mut acc: Vec<Word> = vec![Vec::new()];
            for piece in &parts {
                let mut next = Vec::with_capacity(acc.len() * piece.len());
                for base in &acc {
                    for w in *piece {
                        let mut b2 = base.clone();
                        b2.extend_from_slice(w);
                        next.push(b2);
                    }
                }
                acc = next;
            }
            let total = acc.len() as u64 * col_words.len() as u64;
            if total > params.family_budget {
                return Err(Error::Budget(format!(
                    "candidate family of {total} at level {j} over budget"
                )));
            }
            for nu in &acc {
                debug_assert_eq!(nu.len() as u64, k);
            }
            nus_per_set.push(acc);
        }
        let y_offs_per_set: Vec<Vec<f64>> = nus_per_set
            .par_iter()
            .map(|nus| nus.iter().map(|nu| vertical_offset(&eff, nu).to_f64()).collect())
            .collect();

        let nodes = &levels[level_idx].nodes;
        let mut class_of = Vec::with_capacity(nodes.len());
        for node in nodes {
            let xi: Word = node.sigma[e_j..e_j1].to_vec();
            let tail: Word = node.sigma[(schedule.e_at(sj - 1) as usize)..(j * k) as usize].to_vec();
            let set_idx = *set_of_tail.get(&tail).ok_or_else(|| {
                Error::Precondition(format!("tail not admissible at level {j}"))
            })?;
            class_of.push((xi, set_idx));
        }
        let unique: Vec<(Word, usize)> = {
            let mut u = class_of.clone();
            u.sort();
            u.dedup();
            u
        };

        // Selection per class: maximal separated candidates (index labels),
        // in projected-position order; bad levels keep the first candidate.
        let width = (gap as f64 * ln_a_eff).exp();
        let selections: Vec<Vec<(u32, u32)>> = unique
            .par_iter()
            .map(|(xi, set_idx)| {
                let x_offsets: Vec<f64> = col_words
                    .iter()
                    .map(|c| horizontal_offset(&eff, xi, c).to_f64())
                    .collect();
                let y_offs = &y_offs_per_set[*set_idx];
                if !good {
                    return vec![(0u32, 0u32)];
                }
                let mut intervals = Vec::with_capacity(y_offs.len() * x_offsets.len());
                for &y in y_offs {
                    for &x in &x_offsets {
                        let a_end = coef * x;
                        let b_end = coef * (x + width);
                        intervals.push((a_end.min(b_end) + y, a_end.max(b_end) + y + rho));
                    }
                }
                let cols = x_offsets.len() as u32;
                max_separated_intervals(&intervals, rho)
                    .into_iter()
                    .map(|idx| ((idx as u32) / cols, (idx as u32) % cols))
                    .collect()
            })
            .collect();
        let mut selection_of: HashMap<&(Word, usize), &Vec<(u32, u32)>> = HashMap::new();
        for (class, sel) in unique.iter().zip(&selections) {
            if sel.is_empty() {
                return Err(Error::Precondition(format!(
                    "empty separated family at good level {j} (oracle/level mismatch)"
                )));
            }
            selection_of.insert(class, sel);
        }

        let class_min = selections.iter().map(|s| s.len() as u64).min().unwrap();
        let mut c_j = if good { class_min } else { 1 };
        if let Some(cap) = params.max_offspring {
            c_j = c_j.min(cap.max(1));
        }
        let cap_by_nodes = (params.node_cap / nodes.len() as u64).max(1);
        c_j = c_j.min(cap_by_nodes).max(1);

        let mut next_nodes = Vec::with_capacity(nodes.len() * c_j as usize);
        for (node_idx, node) in nodes.iter().enumerate() {
            let selection = selection_of[&class_of[node_idx]];
            let set_idx = class_of[node_idx].1;
            for &(nu_idx, col_idx) in selection.iter().take(c_j as usize) {
                let mut sigma = node.sigma.clone();
                sigma.extend_from_slice(&nus_per_set[set_idx][nu_idx as usize]);
                let mut sigma_prime = node.sigma_prime.clone();
                sigma_prime.extend_from_slice(&col_words[col_idx as usize]);
                next_nodes.push(TreeNode {
                    sigma,
                    sigma_prime,
                    parent: node_idx,
                });
            }
        }
        counts.push(c_j);
        good_flags.push(good);
        levels.push(TreeLevel {
            j: j + 1,
            nodes: next_nodes,
        });
    }

    let tree = CertTree {
        carpet: eff,
        iterate,
        original_gamma,
        gamma,
        k,
        tau: params.tau,
        tilde: params.tilde,
        epsilon: params.epsilon,
        j0,
        schedule,
        levels,
        counts,
        good_flags,
        alphabets,
        thetas,
        theta_shortfalls,
    };
    let verification = verify_tree(&tree);
    if !verification.ok() {
        return Err(Error::Precondition(format!(
            "constructed tree failed verification: {}",
            verification.summary()
        )));
    }
    Ok(tree)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeViolation {
    pub level: u64,
    pub property: char,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TreeVerification {
    pub violations: Vec<TreeViolation>,
}

impl TreeVerification {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("[{}@{}] {}", v.property, v.level, v.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn failed_properties(&self) -> Vec<char> {
        let mut props: Vec<char> = self.violations.iter().map(|v| v.property).collect();
        props.sort_unstable();
        props.dedup();
        props
    }

    fn push(&mut self, level: u64, property: char, detail: String) {
        self.violations.push(TreeViolation {
            level,
            property,
            detail,
        });
    }
}

/// Checks the five tree properties on the realized tree:
///
/// * A - children extend their parent's words (exact), which also gives
///   exact geometric nesting of the cylinder rectangles;
/// * B - word lengths match the schedule, so level-`j` rectangles have
///   exact size `a^{e_j} x b^{jk}`;
/// * C - row-word blocks lie in the level alphabets and the vertical tail
///   in the level tail set;
/// * D - siblings' skew-chart projections at the parent's chart are
///   `b^k`-separated (with nesting from A this scales to `b^{jk}`
///   separation of the whole level under the base chart);
/// * E - every node of a level has the same number of offspring, one at
///   bad levels.
pub fn verify_tree(tree: &CertTree) -> TreeVerification {
    let mut out = TreeVerification::default();
    let k = tree.k;
    let sched = &tree.schedule;
    let eff = &tree.carpet;
    let ln_a = eff.a.ln();
    let rho = (k as f64 * eff.b.ln()).exp();

    // Sorted copies for fast membership checks (no trust in stored order).
    let sorted_alphabets: BTreeMap<u64, Vec<Word>> = tree
        .alphabets
        .iter()
        .map(|(&i, alphabet)| {
            let mut w = alphabet.words.clone();
            w.sort();
            (i, w)
        })
        .collect();
    let sorted_thetas: BTreeMap<u64, Vec<Word>> = tree
        .thetas
        .iter()
        .map(|(&i, words)| {
            let mut w = words.clone();
            w.sort();
            (i, w)
        })
        .collect();

    for (idx, level) in tree.levels.iter().enumerate() {
        let j = level.j;
        let e_j = sched.e_at(j) as usize;
        let sj = sched.s_at(j);
        // B: lengths and symbol ranges; C: alphabet membership for complete
        // row blocks and the vertical tail. Per-node, in parallel.
        let node_violations: Vec<(char, String)> = level
            .nodes
            .par_iter()
            .flat_map_iter(|node| {
                let mut local = Vec::new();
                if node.sigma.len() as u64 != j * k || node.sigma_prime.len() != e_j {
                    local.push((
                        'B',
                        format!(
                            "node words have lengths {}/{}, expected {}/{}",
                            node.sigma.len(),
                            node.sigma_prime.len(),
                            j * k,
                            e_j
                        ),
                    ));
                    return local.into_iter();
                }
                if node.sigma.iter().any(|&s| s as usize >= eff.m)
                    || node.sigma_prime.iter().any(|&s| s as usize >= eff.n)
                {
                    local.push(('B', "symbol out of range".into()));
                }
                for i in j..=sj.saturating_sub(2) {
                    if i < j {
                        continue;
                    }
                    let (lo, hi) = (sched.e_at(i) as usize, sched.e_at(i + 1) as usize);
                    if let Some(alphabet) = sorted_alphabets.get(&i) {
                        if alphabet
                            .binary_search_by(|w| w.as_slice().cmp(&node.sigma[lo..hi]))
                            .is_err()
                        {
                            local.push(('C', format!("row block at index {i} not in alphabet")));
                        }
                    }
                }
                let tail_lo = sched.e_at(sj - 1) as usize;
                let tail = &node.sigma[tail_lo..(j * k) as usize];
                let tail_ok = sorted_thetas
                    .get(&j)
                    .map(|tails| tails.binary_search_by(|w| w.as_slice().cmp(tail)).is_ok())
                    .unwrap_or(false);
                if !tail_ok {
                    local.push(('C', "vertical tail not admissible".into()));
                }
                local.into_iter()
            })
            .collect();
        for (property, detail) in node_violations.into_iter().take(8) {
            out.push(j, property, detail);
        }
        if idx == 0 {
            continue;
        }
        let parents = &tree.levels[idx - 1].nodes;
        let jp = j - 1;
        let e_jp = sched.e_at(jp) as usize;
        let e_j_of_parent = sched.e_at(jp + 1) as usize;
        // A: prefix property.
        for node in &level.nodes {
            let Some(parent) = parents.get(node.parent) else {
                out.push(j, 'A', "dangling parent index".into());
                continue;
            };
            if !node.sigma.starts_with(&parent.sigma)
                || !node.sigma_prime.starts_with(&parent.sigma_prime)
            {
                out.push(j, 'A', "child does not extend its parent".into());
            }
        }
        // E: uniform offspring counts and the bad-level dichotomy.
        let expect = tree.counts[idx - 1];
        let mut per_parent = vec![0u64; parents.len()];
        for node in &level.nodes {
            if node.parent < per_parent.len() {
                per_parent[node.parent] += 1;
            }
        }
        if per_parent.iter().any(|&c| c != expect) {
            out.push(
                j,
                'E',
                format!("offspring counts {:?} differ from {expect}", per_parent),
            );
        }
        if !tree.good_flags[idx - 1] && expect != 1 {
            out.push(j, 'E', format!("bad level must have one child, has {expect}"));
        }
        // D: sibling separation at the parent chart; nesting (property A,
        // exact words) extends this to level-wide b^{jk} separation.
        let t = tree.tau + sched.orbit_at(jp);
        let coef = chart_coefficient(ln_a, t, tree.tilde);
        let gap = e_j_of_parent - e_jp;
        let width = (gap as f64 * ln_a).exp();
        // Offsets are exact rationals rounded once; identical word blocks
        // recur across nodes, so memoize per block.
        let mut x_memo: HashMap<(Word, Word), f64> = HashMap::new();
        let mut y_memo: HashMap<Word, f64> = HashMap::new();
        let mut by_parent: Vec<Vec<(f64, f64)>> = vec![Vec::new(); parents.len()];
        for node in &level.nodes {
            if node.parent >= parents.len() || node.sigma.len() as u64 != j * k {
                continue;
            }
            let xi = &node.sigma[e_jp..e_j_of_parent];
            let nu = &node.sigma[(jp * k) as usize..(j * k) as usize];
            let nu_prime = &node.sigma_prime[e_jp..e_j_of_parent];
            let x = *x_memo
                .entry((xi.to_vec(), nu_prime.to_vec()))
                .or_insert_with(|| horizontal_offset(eff, xi, nu_prime).to_f64());
            let y = *y_memo
                .entry(nu.to_vec())
                .or_insert_with(|| vertical_offset(eff, nu).to_f64());
            let a_end = coef * x;
            let b_end = coef * (x + width);
            by_parent[node.parent].push((a_end.min(b_end) + y, a_end.max(b_end) + y + rho));
        }
        let slack = rho * (1.0 - 1e-9);
        for (p_idx, mut group) in by_parent.into_iter().enumerate() {
            if group.len() < 2 {
                continue;
            }
            group.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for w in group.windows(2) {
                if w[1].0 - w[0].1 < slack {
                    out.push(
                        j,
                        'D',
                        format!(
                            "children of parent {p_idx} are {:.3e} apart, need {rho:.3e}",
                            w[1].0 - w[0].1
                        ),
                    );
                    break;
                }
            }
        }
    }
    out
}

/// Realized-count bound `sum_j ln C_j / ((J - j0) k ln(1/b))` with no
/// re-verification; use [`lower_bound`] unless a fresh verification of the
/// same tree is already in hand.
pub fn realized_bound(tree: &CertTree) -> f64 {
    let levels = tree.levels.len();
    if levels <= 1 {
        return 0.0;
    }
    let sum: f64 = tree.counts.iter().map(|&c| (c as f64).ln()).sum();
    let denom = (levels - 1) as f64 * tree.k as f64 * -tree.carpet.b.ln();
    sum / denom
}

/// Realized-count lower bound; rejects trees that fail verification.
pub fn lower_bound(tree: &CertTree) -> Result<f64> {
    let verification = verify_tree(tree);
    if !verification.ok() {
        return Err(Error::Precondition(format!(
            "unverified tree: {}",
            verification.summary()
        )));
    }
    Ok(realized_bound(tree))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn carpet_13_12() -> UniformFibreCarpet {
        UniformFibreCarpet::standard(2, 2, r("1/3"), r("1/2")).unwrap()
    }

    #[test]
    fn schedule_matches_worked_example() {
        // a = 1/3, b = 1/2, k = 10: alpha ~ 0.30929, e = (6, 12, 18, 25, ...).
        let s = rotation_schedule(&r("1/3"), &r("1/2"), 10, 8).unwrap();
        assert!((s.alpha - 0.30929).abs() < 1e-5);
        assert_eq!(&s.e[..4], &[6, 12, 18, 25]);
        assert_eq!(s.s_at(1), 2);
        assert_eq!(s.s_at(2), 4);
        // Orbit values in [0,1).
        for &t in &s.orbit {
            assert!((0.0..1.0).contains(&t));
        }
    }

    #[test]
    fn schedule_equals_closed_form() {
        let s = rotation_schedule(&r("1/3"), &r("1/2"), 5, 20).unwrap();
        let log_ab = (0.5f64).ln() / (1.0f64 / 3.0).ln();
        for (idx, &e) in s.e.iter().enumerate() {
            let j = (idx + 1) as u64;
            let closed = ((j * 5) as f64 * log_ab).floor() as u64;
            assert_eq!(e, closed, "j = {j}");
        }
    }

    #[test]
    fn rational_ratio_rejected() {
        assert!(rotation_schedule(&r("1/4"), &r("1/2"), 3, 5).is_err());
    }

    #[test]
    fn equidistribution_of_the_golden_like_orbit() {
        let alpha = 10.0 * (0.5f64).ln() / (1.0f64 / 3.0).ln() - 6.0;
        let report = equidistribution_check(alpha, 10_000, Some((0.2, 0.5))).unwrap();
        assert!(report.star_discrepancy < 0.02, "D* = {}", report.star_discrepancy);
        assert!(report.set_frequency_error.unwrap() < report.star_discrepancy + 1e-12);

        let degenerate = equidistribution_check(0.0, 1000, None).unwrap();
        assert!(degenerate.star_discrepancy > 0.9);
    }

    #[test]
    fn thinning_reaches_a_subcritical_block() {
        let carpet = carpet_13_12();
        let (eff, iterate) = thin_to_subcritical(&carpet, None).unwrap();
        assert_eq!(iterate, 2);
        let g = uniform_fibre_dimension(&eff).unwrap();
        assert!(g < 1.0, "gamma = {g}");
        // Best 2-iterate block for (1/3, 1/2) is 2 rows x 2 cells.
        assert_eq!((eff.m, eff.n), (2, 2));
        assert_eq!(eff.a, r("1/9"));
        assert_eq!(eff.b, r("1/4"));
    }

    #[test]
    fn single_level_tree_is_trivial() {
        let carpet = carpet_13_12();
        let mut params = BuildParams::new(5, 0.25, 0.04, 0);
        params.oracle = AngleOracle::AllGood;
        let tree = build_tree(&carpet, &params).unwrap();
        assert_eq!(tree.levels.len(), 1);
        assert_eq!(tree.levels[0].nodes.len(), 1);
        assert_eq!(lower_bound(&tree).unwrap(), 0.0);
    }

    #[test]
    fn all_bad_oracle_gives_single_path_and_zero_bound() {
        let carpet = carpet_13_12();
        let mut params = BuildParams::new(5, 0.25, 0.04, 3);
        params.oracle = AngleOracle::AllBad;
        let tree = build_tree(&carpet, &params).unwrap();
        assert!(tree.counts.iter().all(|&c| c == 1));
        for level in &tree.levels {
            assert_eq!(level.nodes.len(), 1);
        }
        assert_eq!(lower_bound(&tree).unwrap(), 0.0);
    }

    #[test]
    fn good_tree_builds_verifies_and_bounds() {
        let carpet = carpet_13_12();
        let mut params = BuildParams::new(5, 0.25, 0.04, 3);
        params.oracle = AngleOracle::AllGood;
        let tree = build_tree(&carpet, &params).unwrap();
        assert!(verify_tree(&tree).ok());
        assert!(tree.counts.iter().all(|&c| c >= 1));
        let bound = lower_bound(&tree).unwrap();
        assert!(bound > 0.0, "bound = {bound}");
        assert!(bound <= tree.gamma + 1e-9, "bound {bound} above gamma {}", tree.gamma);
        // Level sizes multiply by the counts.
        for (idx, w) in tree.levels.windows(2).enumerate() {
            assert_eq!(
                w[1].nodes.len() as u64,
                w[0].nodes.len() as u64 * tree.counts[idx]
            );
        }
    }

    #[test]
    fn injected_duplicate_fails_only_d() {
        let carpet = carpet_13_12();
        let mut params = BuildParams::new(5, 0.25, 0.04, 2);
        params.oracle = AngleOracle::AllGood;
        let mut tree = build_tree(&carpet, &params).unwrap();
        let last = tree.levels.len() - 1;
        let clone_of = tree.levels[last].nodes[0].clone();
        tree.levels[last].nodes[1] = clone_of;
        let verification = verify_tree(&tree);
        assert_eq!(verification.failed_properties(), vec!['D']);
        assert!(lower_bound(&tree).is_err());
    }

    #[test]
    fn injected_dropped_child_fails_e() {
        let carpet = carpet_13_12();
        let mut params = BuildParams::new(5, 0.25, 0.04, 2);
        params.oracle = AngleOracle::AllGood;
        let mut tree = build_tree(&carpet, &params).unwrap();
        let last = tree.levels.len() - 1;
        tree.levels[last].nodes.pop();
        let verification = verify_tree(&tree);
        assert!(verification.failed_properties().contains(&'E'));
    }

    #[test]
    fn empirical_oracle_small_run() {
        let carpet = carpet_13_12();
        let mut params = BuildParams::new(5, 0.25, 0.09, 2);
        params.oracle = AngleOracle::Empirical { charts: 8 };
        let tree = build_tree(&carpet, &params).unwrap();
        assert!(verify_tree(&tree).ok());
        let bound = lower_bound(&tree).unwrap();
        assert!(bound >= 0.0);
    }
}
