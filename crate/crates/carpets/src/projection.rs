//! Orthogonal and skew projections of carpets onto lines, box counting of
//! the projected sets, slope estimation, and angle sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carpet::Carpet;
use crate::rational::Rational;
use crate::symbolic::{self, CylinderRect};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionMode {
    /// `x cos(theta) + y sin(theta)`.
    Orthogonal,
    /// The skew chart `a^-tau x + y` (sign-flipped when `tilde` is set),
    /// affinely equivalent to the orthogonal projection at the matching
    /// angle.
    PiTau,
}

/// Angle/chart pair: `tau = ln(|tan theta|) / ln(a_ref)`, with `tilde`
/// marking angles past the vertical axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionParam {
    pub theta: f64,
    pub tau: f64,
    pub a_ref: Rational,
    pub tilde: bool,
}

impl ProjectionParam {
    pub fn from_theta(theta: f64, a_ref: Rational) -> Result<Self> {
        if !a_ref.is_proper_fraction() {
            return Err(Error::Precondition(format!(
                "chart scale must lie in (0,1), got {a_ref}"
            )));
        }
        if !(theta > 0.0 && theta < std::f64::consts::PI)
            || (theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12
        {
            return Err(Error::Precondition(format!(
                "theta = {theta} must avoid the principal directions 0, pi/2, pi"
            )));
        }
        let tilde = theta > std::f64::consts::FRAC_PI_2;
        let t = theta.tan();
        let tau = if tilde { (-t).ln() } else { t.ln() } / a_ref.ln();
        Ok(ProjectionParam {
            theta,
            tau,
            a_ref,
            tilde,
        })
    }

    pub fn from_tau(tau: f64, a_ref: Rational, tilde: bool) -> Result<Self> {
        if !a_ref.is_proper_fraction() {
            return Err(Error::Precondition(format!(
                "chart scale must lie in (0,1), got {a_ref}"
            )));
        }
        let tan = (tau * a_ref.ln()).exp();
        let theta = if tilde {
            std::f64::consts::PI - tan.atan()
        } else {
            tan.atan()
        };
        Ok(ProjectionParam {
            theta,
            tau,
            a_ref,
            tilde,
        })
    }

    /// Coefficient of `x` in the skew chart.
    pub fn skew_coefficient(&self) -> f64 {
        let c = (-self.tau * self.a_ref.ln()).exp();
        if self.tilde {
            -c
        } else {
            c
        }
    }
}

/// Projects the four corners; returns the interval `[min, max]`.
pub fn project_corners(c: [f64; 4], param: &ProjectionParam, mode: ProjectionMode) -> (f64, f64) {
    let [x0, y0, x1, y1] = c;
    let (cx, cy) = match mode {
        ProjectionMode::Orthogonal => (param.theta.cos(), param.theta.sin()),
        ProjectionMode::PiTau => (param.skew_coefficient(), 1.0),
    };
    let v = [
        cx * x0 + cy * y0,
        cx * x1 + cy * y0,
        cx * x0 + cy * y1,
        cx * x1 + cy * y1,
    ];
    let mut lo = v[0];
    let mut hi = v[0];
    for &t in &v[1..] {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    (lo, hi)
}

pub fn project_rect(
    rect: &CylinderRect,
    param: &ProjectionParam,
    mode: ProjectionMode,
) -> Result<(f64, f64)> {
    if mode == ProjectionMode::Orthogonal {
        let th = param.theta;
        if th <= 0.0
            || th >= std::f64::consts::PI
            || (th - std::f64::consts::FRAC_PI_2).abs() < 1e-12
        {
            return Err(Error::Precondition(format!(
                "orthogonal projection rejects principal direction theta = {th}"
            )));
        }
    }
    Ok(project_corners(rect.corners_f64(), param, mode))
}

/// Dense bit grid over the projection range.
struct CellGrid {
    lo: f64,
    delta: f64,
    bits: Vec<u64>,
    cells: usize,
}

impl CellGrid {
    fn new(lo: f64, hi: f64, delta: f64, budget: u64) -> Result<Self> {
        let cells = ((hi - lo) / delta).ceil() as usize + 2;
        if cells as u64 > budget {
            return Err(Error::Budget(format!(
                "{cells} grid cells at delta = {delta} exceed the budget"
            )));
        }
        Ok(CellGrid {
            lo,
            delta,
            bits: vec![0u64; cells / 64 + 1],
            cells,
        })
    }

    fn mark(&mut self, lo: f64, hi: f64) {
        let a = (((lo - self.lo) / self.delta).floor() as isize).max(0) as usize;
        let b = ((hi - self.lo) / self.delta).floor() as usize;
        for idx in a..=b.min(self.cells - 1) {
            self.bits[idx / 64] |= 1u64 << (idx % 64);
        }
    }

    fn count(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }
}

/// Projection range of the unit square, padded by one cell.
fn projection_range(param: &ProjectionParam, mode: ProjectionMode) -> (f64, f64) {
    let (lo, hi) = project_corners([0.0, 0.0, 1.0, 1.0], param, mode);
    (lo - 1e-9, hi + 1e-9)
}

pub const DEFAULT_CELL_BUDGET: u64 = 1 << 27;

/// Number of `delta`-cells on the projection line hit by the projected
/// cylinder cover at scale `delta`.
pub fn box_count_projection(
    carpet: &Carpet,
    param: &ProjectionParam,
    mode: ProjectionMode,
    delta: f64,
    cover_budget: u64,
    cell_budget: u64,
) -> Result<u64> {
    Ok(box_count_cells(carpet, param, mode, delta, cover_budget, cell_budget)?.1)
}

/// The marked cells themselves (in line order) together with their count.
pub fn box_count_cells(
    carpet: &Carpet,
    param: &ProjectionParam,
    mode: ProjectionMode,
    delta: f64,
    cover_budget: u64,
    cell_budget: u64,
) -> Result<(Vec<bool>, u64)> {
    let (lo, hi) = projection_range(param, mode);
    let mut grid = CellGrid::new(lo, hi, delta, cell_budget)?;
    symbolic::visit_cover_ladder(carpet, &[delta], cover_budget, &mut |_, leaf| {
        let (a, b) = project_corners([leaf.x0, leaf.y0, leaf.x1, leaf.y1], param, mode);
        grid.mark(a, b);
    })?;
    let count = grid.count();
    let cells = (0..grid.cells)
        .map(|idx| grid.bits[idx / 64] & (1u64 << (idx % 64)) != 0)
        .collect();
    Ok((cells, count))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Principal-direction path: 1-d cover count of the axis marginal.
pub fn box_count_axis(
    carpet: &Carpet,
    axis: Axis,
    delta: f64,
    cover_budget: u64,
    cell_budget: u64,
) -> Result<u64> {
    let mut grid = CellGrid::new(-1e-9, 1.0 + 1e-9, delta, cell_budget)?;
    symbolic::visit_cover_ladder(carpet, &[delta], cover_budget, &mut |_, leaf| {
        let (a, b) = match axis {
            Axis::X => (leaf.x0, leaf.x1),
            Axis::Y => (leaf.y0, leaf.y1),
        };
        grid.mark(a, b);
    })?;
    Ok(grid.count())
}

/// Log-log box-count data with the fitted slope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxCountCurve {
    pub scales: Vec<(f64, u64)>,
    pub slope: f64,
    pub per_octave: Vec<f64>,
    /// Number of coarsest scales excluded from the fit.
    pub drop_coarsest: usize,
}

fn fit_slope(scales: &[(f64, u64)], drop_coarsest: usize) -> f64 {
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .skip(drop_coarsest)
        .map(|&(d, n)| ((1.0 / d).ln(), (n as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Dyadic ladder of scales from `delta_max` down to `delta_min`.
pub fn dyadic_ladder(delta_min: f64, delta_max: f64) -> Result<Vec<f64>> {
    if !(delta_min > 0.0 && delta_min < delta_max && delta_max <= 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < delta_min < delta_max <= 1, got {delta_min}, {delta_max}"
        )));
    }
    let mut deltas = Vec::new();
    let mut d = delta_max;
    while d >= delta_min * (1.0 - 1e-12) {
        deltas.push(d);
        d /= 2.0;
    }
    if deltas.len() < 3 {
        return Err(Error::Precondition(format!(
            "only {} feasible scales between {delta_min} and {delta_max}; need at least 3",
            deltas.len()
        )));
    }
    Ok(deltas)
}

/// Box counts across a dyadic ladder with a least-squares slope; the two
/// coarsest scales are dropped from the fit by default.
pub fn estimate_projection_dimension(
    carpet: &Carpet,
    param: &ProjectionParam,
    mode: ProjectionMode,
    delta_min: f64,
    delta_max: f64,
    drop_coarsest: usize,
    cover_budget: u64,
    cell_budget: u64,
) -> Result<BoxCountCurve> {
    let deltas = dyadic_ladder(delta_min, delta_max)?;
    let (lo, hi) = projection_range(param, mode);
    let mut grids: Vec<CellGrid> = deltas
        .iter()
        .map(|&d| CellGrid::new(lo, hi, d, cell_budget))
        .collect::<Result<_>>()?;
    symbolic::visit_cover_ladder(carpet, &deltas, cover_budget, &mut |rung, leaf| {
        let (a, b) = project_corners([leaf.x0, leaf.y0, leaf.x1, leaf.y1], param, mode);
        grids[rung].mark(a, b);
    })?;
    let scales: Vec<(f64, u64)> = deltas
        .iter()
        .zip(&grids)
        .map(|(&d, g)| (d, g.count()))
        .collect();
    let per_octave: Vec<f64> = scales
        .windows(2)
        .map(|w| (w[1].1 as f64 / w[0].1 as f64).log2())
        .collect();
    let drop = drop_coarsest.min(scales.len().saturating_sub(3));
    Ok(BoxCountCurve {
        slope: fit_slope(&scales, drop),
        scales,
        per_octave,
        drop_coarsest: drop,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub tau: f64,
    pub slope: f64,
    pub n_finest: u64,
    pub delta_finest: f64,
}

/// `count` evenly spaced angles over `(margin, pi - margin)` minus a band
/// of the same margin around `pi/2`.
pub fn sweep_grid(count: usize, margin: f64) -> Vec<f64> {
    let half = std::f64::consts::FRAC_PI_2;
    let left = (margin, half - margin);
    let right = (half + margin, std::f64::consts::PI - margin);
    let left_len = (left.1 - left.0).max(0.0);
    let right_len = (right.1 - right.0).max(0.0);
    let total = left_len + right_len;
    (0..count)
        .map(|i| {
            let p = total * (i as f64 + 0.5) / count as f64;
            if p < left_len {
                left.0 + p
            } else {
                right.0 + (p - left_len)
            }
        })
        .collect()
}

/// Slope per angle over a shared dyadic ladder. The cover is generated
/// once; angles run in parallel with output ordered by input index.
pub fn sweep(
    carpet: &Carpet,
    thetas: &[f64],
    a_ref: &Rational,
    delta_min: f64,
    delta_max: f64,
    drop_coarsest: usize,
    cover_budget: u64,
    cell_budget: u64,
) -> Result<Vec<SweepRow>> {
    if thetas.is_empty() {
        return Ok(Vec::new());
    }
    let deltas = dyadic_ladder(delta_min, delta_max)?;
    let mut rungs: Vec<Vec<[f64; 4]>> = vec![Vec::new(); deltas.len()];
    symbolic::visit_cover_ladder(carpet, &deltas, cover_budget, &mut |rung, leaf| {
        rungs[rung].push([leaf.x0, leaf.y0, leaf.x1, leaf.y1]);
    })?;
    let params: Vec<ProjectionParam> = thetas
        .iter()
        .map(|&t| ProjectionParam::from_theta(t, a_ref.clone()))
        .collect::<Result<_>>()?;
    params
        .par_iter()
        .map(|param| {
            let (lo, hi) = projection_range(param, ProjectionMode::Orthogonal);
            let mut scales = Vec::with_capacity(deltas.len());
            for (rung, &d) in deltas.iter().enumerate() {
                let mut grid = CellGrid::new(lo, hi, d, cell_budget)?;
                for corners in &rungs[rung] {
                    let (a, b) = project_corners(*corners, param, ProjectionMode::Orthogonal);
                    grid.mark(a, b);
                }
                scales.push((d, grid.count()));
            }
            let drop = drop_coarsest.min(scales.len().saturating_sub(3));
            Ok(SweepRow {
                theta: param.theta,
                tau: param.tau,
                slope: fit_slope(&scales, drop),
                n_finest: scales.last().unwrap().1,
                delta_finest: *deltas.last().unwrap(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carpet::{BaranskiCarpet, UniformFibreCarpet};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn quarter_product() -> Carpet {
        // Product of two middle-half Cantor sets with ratio 1/4.
        Carpet::Baranski(BaranskiCarpet {
            col_widths: vec![r("1/4"), r("1/2"), r("1/4")],
            row_heights: vec![r("1/4"), r("1/2"), r("1/4")],
            digits: vec![(0, 0), (0, 2), (2, 0), (2, 2)],
        })
    }

    #[test]
    fn unit_square_projects_to_sqrt_two() {
        let param =
            ProjectionParam::from_theta(std::f64::consts::FRAC_PI_4, r("1/4")).unwrap();
        let rect = CylinderRect::unit();
        let (lo, hi) = project_rect(&rect, &param, ProjectionMode::Orthogonal).unwrap();
        assert!(lo.abs() < 1e-12);
        assert!((hi - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn skew_chart_linear_form() {
        // a_ref = 1/2, tau = 1: coefficient a^-tau = 2.
        let param = ProjectionParam::from_tau(1.0, r("1/2"), false).unwrap();
        assert!((param.skew_coefficient() - 2.0).abs() < 1e-12);
        let rect = CylinderRect {
            word: vec![],
            x0: r("0"),
            width: r("1/2"),
            y0: r("0"),
            height: r("1/3"),
        };
        let (lo, hi) = project_rect(&rect, &param, ProjectionMode::PiTau).unwrap();
        assert!(lo.abs() < 1e-12);
        assert!((hi - (2.0 * 0.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn corner_evaluation_matches_dense_sampling() {
        let param = ProjectionParam::from_theta(std::f64::consts::PI / 3.0, r("1/4")).unwrap();
        let rect = CylinderRect {
            word: vec![],
            x0: r("1/4"),
            width: r("1/4"),
            y0: r("0"),
            height: r("1/3"),
        };
        let (lo, hi) = project_rect(&rect, &param, ProjectionMode::Orthogonal).unwrap();
        let (mut slo, mut shi) = (f64::INFINITY, f64::NEG_INFINITY);
        let c = param.theta.cos();
        let s = param.theta.sin();
        for i in 0..=32 {
            for j in 0..=32 {
                let x = 0.25 + 0.25 * i as f64 / 32.0;
                let y = (1.0 / 3.0) * j as f64 / 32.0;
                let v = c * x + s * y;
                slo = slo.min(v);
                shi = shi.max(v);
            }
        }
        assert!((lo - slo).abs() < 1e-12 && (hi - shi).abs() < 1e-12);
    }

    #[test]
    fn principal_directions_rejected_in_orthogonal_mode() {
        assert!(ProjectionParam::from_theta(0.0, r("1/4")).is_err());
        assert!(ProjectionParam::from_theta(std::f64::consts::FRAC_PI_2, r("1/4")).is_err());
    }

    #[test]
    fn full_square_cell_count() {
        let c = Carpet::Baranski(BaranskiCarpet {
            col_widths: vec![r("1/2"), r("1/2")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        });
        let param =
            ProjectionParam::from_theta(std::f64::consts::FRAC_PI_4, r("1/2")).unwrap();
        let delta = 1.0 / 256.0;
        let n = box_count_projection(
            &c,
            &param,
            ProjectionMode::Orthogonal,
            delta,
            1 << 22,
            1 << 20,
        )
        .unwrap();
        let expected = (2f64.sqrt() / delta).ceil() as i64;
        assert!((n as i64 - expected).abs() <= 1, "n = {n}, expected ~{expected}");
    }

    #[test]
    fn product_carpet_diagonal_is_a_three_branch_sumset() {
        // At theta = pi/4 the projected count grows like 3^depth when
        // delta = 4^-depth.
        let c = quarter_product();
        let param =
            ProjectionParam::from_theta(std::f64::consts::FRAC_PI_4, r("1/4")).unwrap();
        for depth in [3u32, 4, 5] {
            let delta = 0.25f64.powi(depth as i32);
            let n = box_count_projection(
                &c,
                &param,
                ProjectionMode::Orthogonal,
                delta,
                1 << 24,
                1 << 24,
            )
            .unwrap();
            let ideal = 3f64.powi(depth as i32);
            let ratio = n as f64 / ideal;
            assert!(
                (0.5..=4.0).contains(&ratio),
                "depth {depth}: n = {n}, 3^depth = {ideal}"
            );
        }
    }

    #[test]
    fn monotone_in_delta_and_bounded() {
        let c = quarter_product();
        let param = ProjectionParam::from_theta(1.0, r("1/4")).unwrap();
        let mut last = 0;
        for pow in 2..9 {
            let delta = 0.5f64.powi(pow);
            let n = box_count_projection(
                &c,
                &param,
                ProjectionMode::Orthogonal,
                delta,
                1 << 24,
                1 << 24,
            )
            .unwrap();
            assert!(n >= last, "count dropped when delta halved");
            let (lo, hi) = projection_range(&param, ProjectionMode::Orthogonal);
            assert!(n as f64 <= (hi - lo) / delta + 2.0);
            last = n;
        }
    }

    #[test]
    fn slope_estimate_on_product_carpet() {
        let c = quarter_product();
        let param =
            ProjectionParam::from_theta(std::f64::consts::FRAC_PI_4, r("1/4")).unwrap();
        let curve = estimate_projection_dimension(
            &c,
            &param,
            ProjectionMode::Orthogonal,
            0.25f64.powi(6),
            0.25,
            2,
            1 << 24,
            1 << 24,
        )
        .unwrap();
        let expected = 3f64.ln() / 4f64.ln();
        assert!(
            (curve.slope - expected).abs() < 0.05,
            "slope {} vs {expected}",
            curve.slope
        );
        assert!(curve.slope <= 1.02);
    }

    #[test]
    fn orthogonal_and_skew_charts_agree_on_slope() {
        let c = quarter_product();
        let theta = 1.1;
        let param = ProjectionParam::from_theta(theta, r("1/4")).unwrap();
        let fine = 0.5f64.powi(10);
        let ortho = estimate_projection_dimension(
            &c,
            &param,
            ProjectionMode::Orthogonal,
            fine,
            0.25,
            2,
            1 << 24,
            1 << 24,
        )
        .unwrap();
        let skew = estimate_projection_dimension(
            &c,
            &param,
            ProjectionMode::PiTau,
            fine,
            0.25,
            2,
            1 << 24,
            1 << 24,
        )
        .unwrap();
        assert!(
            (ortho.slope - skew.slope).abs() < 0.02,
            "{} vs {}",
            ortho.slope,
            skew.slope
        );
    }

    #[test]
    fn axis_counts_reduce_to_marginals() {
        let c = quarter_product();
        // x-marginal is a ratio-1/4 two-branch Cantor set: N(4^-k) ~ 2^k.
        for depth in [3u32, 4, 5] {
            let delta = 0.25f64.powi(depth as i32);
            let n = box_count_axis(&c, Axis::X, delta, 1 << 24, 1 << 24).unwrap() as f64;
            let ideal = 2f64.powi(depth as i32);
            assert!((0.5..=3.0).contains(&(n / ideal)), "n = {n} vs {ideal}");
        }
    }

    #[test]
    fn empty_sweep_is_empty() {
        let c = quarter_product();
        let rows = sweep(&c, &[], &r("1/4"), 0.01, 0.25, 2, 1 << 20, 1 << 20).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn degenerate_single_map_carpet_counts_one_cell() {
        let c = Carpet::Uniform(UniformFibreCarpet {
            a: r("1/4"),
            b: r("1/2"),
            m: 1,
            n: 1,
            row_offsets: vec![r("0")],
            cell_offsets: vec![vec![r("0")]],
        });
        let param = ProjectionParam::from_theta(0.9, r("1/4")).unwrap();
        for pow in [4, 6, 8] {
            let delta = 0.5f64.powi(pow);
            let n = box_count_projection(
                &c,
                &param,
                ProjectionMode::Orthogonal,
                delta,
                1 << 22,
                1 << 22,
            )
            .unwrap();
            assert!(n <= 2, "single-point carpet marked {n} cells");
        }
    }
}
