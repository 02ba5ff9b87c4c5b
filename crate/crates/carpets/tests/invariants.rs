//! Cross-module invariants: subsystem subsets project no steeper than
//! their parent, approximate-square families meet their cardinality floor,
//! and angle-averaged projected densities track the Riesz energy.

use carpets::carpet::{Carpet, UniformFibreCarpet};
use carpets::projection::{
    estimate_projection_dimension, sweep_grid, ProjectionMode, ProjectionParam,
};
use carpets::rational::Rational;
use carpets::separated::{density_l2_exact, riesz_energy};
use carpets::subsystem::{build_subsystem, enumerate_subsystem_maps, subsystem_as_gl};
use carpets::symbolic::{approx_square_family, ell_of_k};

fn r(s: &str) -> Rational {
    s.parse().unwrap()
}

#[test]
fn subsystem_subsets_do_not_raise_projection_slopes() {
    let carpet = UniformFibreCarpet::standard(2, 2, r("1/3"), r("1/2")).unwrap();
    let gl = carpet.to_gl();
    let plan = build_subsystem(&gl, 1).unwrap();
    let maps = enumerate_subsystem_maps(&plan, &gl, 1000).unwrap();
    let subset = Carpet::GatzourasLalley(subsystem_as_gl(&maps).unwrap());
    let parent = Carpet::Uniform(carpet);
    for &theta in &[0.7, 1.1, 2.2] {
        let param = ProjectionParam::from_theta(theta, r("1/3")).unwrap();
        let fine = 0.5f64.powi(9);
        let slope = |c: &Carpet| {
            estimate_projection_dimension(
                c,
                &param,
                ProjectionMode::Orthogonal,
                fine,
                0.25,
                2,
                1 << 22,
                1 << 22,
            )
            .unwrap()
            .slope
        };
        let parent_slope = slope(&parent);
        let subset_slope = slope(&subset);
        assert!(
            subset_slope <= parent_slope + 0.02,
            "theta {theta}: subset slope {subset_slope:.4} above parent {parent_slope:.4}"
        );
    }
}

#[test]
fn family_cardinality_floor() {
    // |family| = m^k n^ell exceeds b^{-k gamma} / n.
    for (a, b, k) in [("1/3", "1/2", 4u64), ("1/16", "1/4", 5), ("1/5", "1/2", 6)] {
        let carpet = UniformFibreCarpet::standard(2, 2, r(a), r(b)).unwrap();
        let scale = ell_of_k(&carpet.a, &carpet.b, k).unwrap();
        if scale.ell == 0 {
            continue;
        }
        let family =
            approx_square_family(&carpet, k, &vec![0u8; scale.ell as usize], false, 1 << 22)
                .unwrap();
        let gamma = carpets::dimension::uniform_fibre_dimension(&carpet).unwrap();
        let floor = carpet.b.to_f64().powi(k as i32).powf(-gamma) / carpet.n as f64;
        assert!(
            family.rects.len() as f64 > floor,
            "family of {} under the floor {floor:.1} for a={a}, b={b}, k={k}",
            family.rects.len()
        );
    }
}

#[test]
fn product_carpet_dimension_splits_into_marginals() {
    // D = A x B with exactly separated marginal systems: the dimension is
    // the sum of the two line dimensions.
    let carpet = carpets::carpet::BaranskiCarpet {
        col_widths: vec![r("1/4"), r("1/2"), r("1/4")],
        row_heights: vec![r("1/3"), r("1/3"), r("1/3")],
        digits: vec![(0, 0), (0, 2), (2, 0), (2, 2)],
    };
    let expected = 2f64.ln() / 4f64.ln() + 2f64.ln() / 3f64.ln();
    let report = carpets::dimension::baranski_dimension(&carpet).unwrap();
    assert!(
        (report.value - expected).abs() <= 1e-4,
        "{} vs {expected}",
        report.value
    );
    let grid =
        carpets::dimension::grid_oracle_dimension(&Carpet::Baranski(carpet), 200).unwrap();
    assert!(report.value + 1e-9 >= grid);
    assert!((report.value - grid).abs() <= 2e-3);
}

#[test]
fn angle_averaged_density_tracks_riesz_energy() {
    // The angle integral of the squared projected density is controlled by
    // the Riesz 1-energy; the ratio stays of order one across families.
    let carpet = UniformFibreCarpet::standard(2, 2, r("1/16"), r("1/4")).unwrap();
    for k in [2u64, 3, 4] {
        let scale = ell_of_k(&carpet.a, &carpet.b, k).unwrap();
        let family =
            approx_square_family(&carpet, k, &vec![0u8; scale.ell as usize], false, 1 << 20)
                .unwrap();
        let energy = riesz_energy(&family.rects).unwrap();
        let grid = sweep_grid(90, 0.02);
        let masses = vec![1.0 / family.rects.len() as f64; family.rects.len()];
        let mean: f64 = grid
            .iter()
            .map(|&theta| {
                let param = ProjectionParam::from_theta(theta, carpet.a.clone()).unwrap();
                let intervals: Vec<(f64, f64)> = family
                    .rects
                    .iter()
                    .map(|rect| {
                        carpets::projection::project_rect(
                            rect,
                            &param,
                            ProjectionMode::Orthogonal,
                        )
                        .unwrap()
                    })
                    .collect();
                density_l2_exact(&intervals, &masses)
            })
            .sum::<f64>()
            / grid.len() as f64;
        let integral = mean * std::f64::consts::PI;
        let ratio = integral / energy;
        assert!(
            (0.1..=1.0).contains(&ratio),
            "k={k}: angle integral {integral:.4} vs energy {energy:.4} (ratio {ratio:.4})"
        );
    }
}
