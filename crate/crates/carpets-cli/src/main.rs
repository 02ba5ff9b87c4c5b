//! Command line front end: carpet validation, dimension reports, type
//! classification, subsystems, projected box counting, angle sweeps, the
//! separated-family harness, tree certificates, and SVG rendering.
//!
//! All randomness flows from `--seed`; identical invocations produce
//! byte-identical outputs. Data goes to stdout or `--out`; telemetry and
//! errors go to stderr (domain errors as one-line JSON, exit code 1).

mod svg;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use carpets::carpet::Carpet;
use carpets::dimension::{dimension_seeded, grid_oracle_dimension, uniform_fibre_dimension};
use carpets::projection::{
    box_count_cells, estimate_projection_dimension, sweep, sweep_grid, ProjectionMode,
    ProjectionParam,
};
use carpets::rational::Rational;
use carpets::rationality::classify;
use carpets::separated::per_xi_aggregate;
use carpets::subsystem::{
    build_subsystem_from, enumerate_subsystem_maps, irrationalize_subsystem, optimal_weights,
    subsystem_as_gl,
};
use carpets::treecert::{
    build_tree, equidistribution_check, lower_bound, realized_bound, verify_tree, AngleOracle,
    BuildParams, CertTree,
};

#[derive(Parser)]
#[command(name = "carpets", version, about = "Self-affine carpet computations")]
struct Cli {
    /// RNG seed for every randomized component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Output does not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Write primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cylinder-cover cell budget.
    #[arg(long, global = true, default_value_t = carpets::symbolic::DEFAULT_COVER_BUDGET)]
    cover_budget: u64,
    /// Projection-grid cell budget.
    #[arg(long, global = true, default_value_t = carpets::projection::DEFAULT_CELL_BUDGET)]
    cell_budget: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CarpetArg {
    /// Carpet spec file (JSON).
    #[arg(long)]
    carpet: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Orthogonal,
    PiTau,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Empirical,
    AllGood,
    AllBad,
}

#[derive(Subcommand)]
enum Command {
    /// Check every carpet invariant and report violations.
    Validate(CarpetArg),
    /// Dimension report via the variational formulas.
    Dim {
        #[command(flatten)]
        carpet: CarpetArg,
        /// Also evaluate the exhaustive simplex-grid oracle.
        #[arg(long)]
        oracle: bool,
        /// Grid oracle lattice resolution.
        #[arg(long, default_value_t = 400)]
        resolution: usize,
    },
    /// Irrational-type classification with witnesses.
    Classify(CarpetArg),
    /// Uniform-fibre inner subsystem at depth k.
    Subsystem {
        #[command(flatten)]
        carpet: CarpetArg,
        #[arg(long)]
        k: u64,
        /// Compose with a digit power to certify an irrational log-ratio.
        #[arg(long)]
        irrationalize: bool,
        /// Write the enumerated composed maps as a carpet spec file.
        #[arg(long)]
        emit_maps: Option<PathBuf>,
        /// Enumeration cap for --emit-maps.
        #[arg(long, default_value_t = 100_000)]
        cap: u64,
    },
    /// Box-count curve for one projection.
    Project {
        #[command(flatten)]
        carpet: CarpetArg,
        #[arg(long, conflicts_with = "tau")]
        theta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Use the sign-flipped skew chart with --tau.
        #[arg(long)]
        tilde: bool,
        #[arg(long, value_enum, default_value_t = ModeArg::Orthogonal)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.25)]
        delta_max: f64,
        #[arg(long, default_value_t = 1.0 / 4096.0)]
        delta_min: f64,
        #[arg(long, default_value_t = 2)]
        drop_coarsest: usize,
    },
    /// Slope-versus-angle table (CSV) over a shared scale ladder.
    Sweep {
        #[command(flatten)]
        carpet: CarpetArg,
        #[arg(long, default_value_t = 64)]
        angles: usize,
        /// Keep-out margin around the principal directions, radians.
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        #[arg(long, default_value_t = 0.25)]
        delta_max: f64,
        #[arg(long, default_value_t = 1.0 / 4096.0)]
        delta_min: f64,
        #[arg(long, default_value_t = 2)]
        drop_coarsest: usize,
        /// Also write a slope-versus-angle SVG plot.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Separated-family harness aggregated over row words.
    Separated {
        #[command(flatten)]
        carpet: CarpetArg,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 0.04)]
        epsilon: f64,
        #[arg(long, default_value_t = 720)]
        angles: usize,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        #[arg(long, default_value_t = 12)]
        trials: usize,
        /// Write the per-row-word fraction table here.
        #[arg(long)]
        out_xi: Option<PathBuf>,
    },
    /// Build (or verify) a separated-tree certificate and report its bound.
    Tree {
        #[command(flatten)]
        carpet: CarpetArg,
        #[arg(long, default_value_t = 5)]
        k: u64,
        #[arg(long, default_value_t = 0.25)]
        tau: f64,
        /// Branching levels past the root.
        #[arg(long, default_value_t = 3)]
        depth: u64,
        #[arg(long, default_value_t = 0.04)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = OracleArg::Empirical)]
        oracle: OracleArg,
        /// Chart samples per row word for the empirical oracle.
        #[arg(long, default_value_t = 16)]
        charts: usize,
        /// Uniform offspring cap per level.
        #[arg(long)]
        max_offspring: Option<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        node_cap: u64,
        /// Thinning iterate when the dimension is at least 1.
        #[arg(long)]
        iterate: Option<u32>,
        /// Certify the sign-flipped skew chart.
        #[arg(long)]
        tilde: bool,
        /// Write the full tree (levels, words, counts) here.
        #[arg(long)]
        emit: Option<PathBuf>,
        /// Verify a previously emitted tree instead of building one.
        #[arg(long, conflicts_with_all = ["k", "tau", "depth", "epsilon"])]
        verify: Option<PathBuf>,
        /// Orbit equidistribution horizon report.
        #[arg(long)]
        discrepancy_horizon: Option<u64>,
    },
    /// Render cylinders (and optionally a projected-cell strip) as SVG.
    Render {
        #[command(flatten)]
        carpet: CarpetArg,
        #[arg(long, conflicts_with = "delta")]
        depth: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        /// Add the projected-cell strip for this angle.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 200_000)]
        budget: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match err.downcast_ref::<carpets::Error>() {
                Some(carpets::Error::Parse(_)) => "parse",
                Some(carpets::Error::InvalidCarpet(_)) => "invalid-carpet",
                Some(carpets::Error::Precondition(_)) => "precondition",
                Some(carpets::Error::Budget(_)) => "budget",
                None => "io",
            };
            eprintln!("{}", json!({ "error": kind, "message": format!("{err}") }));
            ExitCode::from(1)
        }
    }
}

fn load_carpet(arg: &CarpetArg) -> anyhow::Result<Carpet> {
    let text = fs::read_to_string(&arg.carpet)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", arg.carpet.display()))?;
    Ok(Carpet::from_json(&text)?)
}

fn emit(cli: &Cli, payload: &str) -> anyhow::Result<()> {
    match &cli.out {
        Some(path) => fs::write(path, payload)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?,
        None => print!("{payload}"),
    }
    Ok(())
}

fn to_gl(carpet: &Carpet) -> anyhow::Result<carpets::carpet::GLCarpet> {
    Ok(match carpet {
        Carpet::GatzourasLalley(c) => c.clone(),
        Carpet::Uniform(c) => c.to_gl(),
        Carpet::Baranski(c) => c.to_gl(false).or_else(|_| c.to_gl(true))?,
    })
}

/// Baseline chart scale: the smallest horizontal contraction of the carpet.
fn chart_scale(carpet: &Carpet) -> anyhow::Result<Rational> {
    let maps = carpet.as_maps()?;
    maps.iter()
        .map(|m| m.x_scale.clone())
        .min_by(|a, b| a.cmp_rational(b))
        .ok_or_else(|| anyhow::anyhow!("carpet has no maps"))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Validate(arg) => {
            let carpet = load_carpet(arg)?;
            let report = carpet.validate();
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&report)?))
        }
        Command::Dim {
            carpet,
            oracle,
            resolution,
        } => {
            let carpet = load_carpet(carpet)?;
            let report = dimension_seeded(&carpet, cli.seed)?;
            let mut value = serde_json::to_value(&report)?;
            if let Carpet::Uniform(u) = &carpet {
                value["closed_form"] = json!(uniform_fibre_dimension(u)?);
            }
            if *oracle {
                value["grid_oracle"] = json!(grid_oracle_dimension(&carpet, *resolution)?);
                value["grid_resolution"] = json!(resolution);
            }
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&value)?))
        }
        Command::Classify(arg) => {
            let carpet = load_carpet(arg)?;
            let verdict = classify(&carpet)?;
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&verdict)?))
        }
        Command::Subsystem {
            carpet,
            k,
            irrationalize,
            emit_maps,
            cap,
        } => {
            let carpet = load_carpet(carpet)?;
            let gl = to_gl(&carpet)?;
            let weights = optimal_weights(&gl)?;
            let plan = build_subsystem_from(&gl, &weights, *k)?;
            let mut value = json!({ "weights": weights, "plan": plan });
            if *irrationalize {
                value["adjusted"] = serde_json::to_value(irrationalize_subsystem(&plan, &gl)?)?;
            }
            if let Some(path) = emit_maps {
                let maps = enumerate_subsystem_maps(&plan, &gl, *cap)?;
                let sub = Carpet::GatzourasLalley(subsystem_as_gl(&maps)?);
                fs::write(path, sub.to_json())?;
                value["emitted_maps"] = json!(maps.len());
            }
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&value)?))
        }
        Command::Project {
            carpet,
            theta,
            tau,
            tilde,
            mode,
            delta_max,
            delta_min,
            drop_coarsest,
        } => {
            let carpet = load_carpet(carpet)?;
            let a_ref = chart_scale(&carpet)?;
            // Principal directions reduce to 1-d marginal covers.
            if let Some(axis) = theta.and_then(|t| principal_axis(t)) {
                let value = principal_curve(
                    &carpet,
                    axis,
                    *delta_min,
                    *delta_max,
                    *drop_coarsest,
                    cli.cover_budget,
                    cli.cell_budget,
                )?;
                return emit(cli, &format!("{}\n", serde_json::to_string_pretty(&value)?));
            }
            let param = match (theta, tau) {
                (Some(t), None) => ProjectionParam::from_theta(*t, a_ref)?,
                (None, Some(t)) => ProjectionParam::from_tau(*t, a_ref, *tilde)?,
                _ => anyhow::bail!("exactly one of --theta or --tau is required"),
            };
            let mode = match mode {
                ModeArg::Orthogonal => ProjectionMode::Orthogonal,
                ModeArg::PiTau => ProjectionMode::PiTau,
            };
            let curve = estimate_projection_dimension(
                &carpet,
                &param,
                mode,
                *delta_min,
                *delta_max,
                *drop_coarsest,
                cli.cover_budget,
                cli.cell_budget,
            )?;
            let mut value = serde_json::to_value(&curve)?;
            value["theta"] = json!(param.theta);
            value["tau"] = json!(param.tau);
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&value)?))
        }
        Command::Sweep {
            carpet,
            angles,
            margin,
            delta_max,
            delta_min,
            drop_coarsest,
            plot,
        } => {
            let carpet = load_carpet(carpet)?;
            let a_ref = chart_scale(&carpet)?;
            let grid = sweep_grid(*angles, *margin);
            let rows = sweep(
                &carpet,
                &grid,
                &a_ref,
                *delta_min,
                *delta_max,
                *drop_coarsest,
                cli.cover_budget,
                cli.cell_budget,
            )?;
            let mut csv = String::from("theta,tau,slope,n_finest,delta_finest\n");
            for row in &rows {
                csv.push_str(&format!(
                    "{:.6},{:.6},{:.6},{},{:.6e}\n",
                    row.theta, row.tau, row.slope, row.n_finest, row.delta_finest
                ));
            }
            if let Some(path) = plot {
                let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.theta, r.slope)).collect();
                fs::write(path, svg::sweep_svg(&pts))?;
            }
            emit(cli, &csv)
        }
        Command::Separated {
            carpet,
            k,
            epsilon,
            angles,
            margin,
            trials,
            out_xi,
        } => {
            let carpet = load_carpet(carpet)?;
            let Carpet::Uniform(uniform) = &carpet else {
                anyhow::bail!("the separated harness needs a uniform-fibre carpet");
            };
            let grid = sweep_grid(*angles, *margin);
            let report = per_xi_aggregate(
                uniform,
                *k,
                *epsilon,
                &grid,
                *trials,
                cli.seed,
                carpets::symbolic::DEFAULT_FAMILY_BUDGET,
            )?;
            eprintln!(
                "{}",
                json!({
                    "k": report.k,
                    "ell": report.ell,
                    "delta_hat": report.delta_hat,
                    "complement_measure": report.complement_measure,
                })
            );
            let mut csv = String::from("theta,fraction,good,min_ratio\n");
            for (i, &theta) in report.theta_grid.iter().enumerate() {
                csv.push_str(&format!(
                    "{:.6},{:.6},{},{:.6}\n",
                    theta,
                    report.fractions[i],
                    u8::from(report.good_set[i]),
                    report.min_ratio[i]
                ));
            }
            if let Some(path) = out_xi {
                let mut xi_csv = String::from("xi,fraction\n");
                for (w, f) in report.xi_words.iter().zip(&report.xi_fractions) {
                    let word: String = w.iter().map(|d| d.to_string()).collect();
                    xi_csv.push_str(&format!("{word},{f:.6}\n"));
                }
                fs::write(path, xi_csv)?;
            }
            emit(cli, &csv)
        }
        Command::Tree {
            carpet,
            k,
            tau,
            depth,
            epsilon,
            oracle,
            charts,
            max_offspring,
            node_cap,
            iterate,
            tilde,
            emit: emit_path,
            verify,
            discrepancy_horizon,
        } => {
            if let Some(path) = verify {
                let text = fs::read_to_string(path)?;
                let tree: CertTree = serde_json::from_str(&text)
                    .map_err(|e| carpets::Error::Parse(format!("tree file: {e}")))?;
                let verification = verify_tree(&tree);
                let value = json!({
                    "ok": verification.ok(),
                    "violations": verification.violations,
                    "lower_bound": lower_bound(&tree).ok(),
                });
                return emit(cli, &format!("{}\n", serde_json::to_string_pretty(&value)?));
            }
            let carpet = load_carpet(carpet)?;
            let Carpet::Uniform(uniform) = &carpet else {
                anyhow::bail!("the tree certifier needs a uniform-fibre carpet");
            };
            let mut params = BuildParams::new(*k, *tau, *epsilon, *depth);
            params.oracle = match oracle {
                OracleArg::Empirical => AngleOracle::Empirical { charts: *charts },
                OracleArg::AllGood => AngleOracle::AllGood,
                OracleArg::AllBad => AngleOracle::AllBad,
            };
            params.max_offspring = *max_offspring;
            params.node_cap = *node_cap;
            params.iterate = *iterate;
            params.tilde = *tilde;
            // Construction already verified the tree; verify once more from
            // the serialized-facing structure and reuse it for the bound.
            let tree = build_tree(uniform, &params)?;
            let verification = verify_tree(&tree);
            if !verification.ok() {
                anyhow::bail!("tree failed verification: {}", verification.summary());
            }
            let bound = realized_bound(&tree);
            let mut value = json!({
                "k": tree.k,
                "tau": tree.tau,
                "tilde": tree.tilde,
                "epsilon": tree.epsilon,
                "j0": tree.j0,
                "iterate": tree.iterate,
                "original_gamma": tree.original_gamma,
                "gamma": tree.gamma,
                "alpha": tree.schedule.alpha,
                "ell": tree.schedule.ell,
                "e": tree.schedule.e,
                "counts": tree.counts,
                "good_flags": tree.good_flags,
                "level_sizes": tree.levels.iter().map(|l| l.nodes.len()).collect::<Vec<_>>(),
                "theta_shortfalls": tree.theta_shortfalls,
                "lower_bound": bound,
                "verification": { "ok": verification.ok(), "violations": verification.violations },
            });
            if let Some(horizon) = discrepancy_horizon {
                value["discrepancy"] =
                    serde_json::to_value(equidistribution_check(tree.schedule.alpha, *horizon, None)?)?;
            }
            if let Some(path) = emit_path {
                fs::write(path, serde_json::to_string(&tree)?)?;
            }
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&value)?))
        }
        Command::Render {
            carpet,
            depth,
            delta,
            theta,
            budget,
        } => {
            let carpet = load_carpet(carpet)?;
            let rects = match (depth, delta) {
                (Some(d), None) => depth_rects(&carpet, *d, *budget)?,
                (None, Some(d)) => {
                    let cover = carpets::symbolic::cylinder_cover(&carpet, *d, *budget)?;
                    cover
                        .iter()
                        .map(|r| {
                            let [x0, y0, x1, y1] = r.corners_f64();
                            svg::Rect { x0, y0, x1, y1 }
                        })
                        .collect()
                }
                _ => anyhow::bail!("exactly one of --depth or --delta is required"),
            };
            let strip = match theta {
                Some(t) => {
                    let cell_delta = delta.unwrap_or_else(|| {
                        depth
                            .map(|d| finest_side(&carpet).powi(d as i32))
                            .unwrap_or(1.0 / 256.0)
                    });
                    let param = ProjectionParam::from_theta(*t, chart_scale(&carpet)?)?;
                    let (cells, count) = box_count_cells(
                        &carpet,
                        &param,
                        ProjectionMode::Orthogonal,
                        cell_delta,
                        cli.cover_budget,
                        cli.cell_budget,
                    )?;
                    Some((cells, count))
                }
                None => None,
            };
            let payload = svg::carpet_svg(
                &rects,
                strip.as_ref().map(|(cells, count)| (cells.as_slice(), *count)),
            );
            emit(cli, &payload)
        }
    }
}

/// Maps angles at (or numerically indistinguishable from) the principal
/// directions to the marginal axis they project onto.
fn principal_axis(theta: f64) -> Option<carpets::projection::Axis> {
    use carpets::projection::Axis;
    let pi = std::f64::consts::PI;
    if theta.abs() < 1e-9 || (theta - pi).abs() < 1e-9 {
        // Projection onto the x-axis keeps the x-marginal.
        Some(Axis::X)
    } else if (theta - pi / 2.0).abs() < 1e-9 {
        Some(Axis::Y)
    } else {
        None
    }
}

fn principal_curve(
    carpet: &Carpet,
    axis: carpets::projection::Axis,
    delta_min: f64,
    delta_max: f64,
    drop_coarsest: usize,
    cover_budget: u64,
    cell_budget: u64,
) -> anyhow::Result<serde_json::Value> {
    let deltas = carpets::projection::dyadic_ladder(delta_min, delta_max)?;
    let mut scales = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        let n = carpets::projection::box_count_axis(carpet, axis, d, cover_budget, cell_budget)?;
        scales.push((d, n));
    }
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .skip(drop_coarsest.min(scales.len().saturating_sub(3)))
        .map(|&(d, n)| ((1.0 / d).ln(), (n as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(json!({
        "principal_axis": match axis {
            carpets::projection::Axis::X => "x",
            carpets::projection::Axis::Y => "y",
        },
        "scales": scales,
        "slope": slope,
    }))
}

fn finest_side(carpet: &Carpet) -> f64 {
    carpet
        .as_maps()
        .map(|maps| {
            maps.iter()
                .map(|m| m.x_scale.to_f64().min(m.y_scale.to_f64()))
                .fold(1.0, f64::min)
        })
        .unwrap_or(0.5)
}

fn depth_rects(carpet: &Carpet, depth: usize, budget: u64) -> anyhow::Result<Vec<svg::Rect>> {
    let maps = carpet.as_maps()?;
    let count = (maps.len() as u64)
        .checked_pow(depth as u32)
        .filter(|&c| c <= budget)
        .ok_or_else(|| carpets::Error::Budget(format!("{}^{depth} rectangles", maps.len())))?;
    let fmaps: Vec<[f64; 4]> = maps
        .iter()
        .map(|m| {
            [
                m.x_scale.to_f64(),
                m.x_offset.to_f64(),
                m.y_scale.to_f64(),
                m.y_offset.to_f64(),
            ]
        })
        .collect();
    let mut frontier = vec![[0.0f64, 0.0, 1.0, 1.0]]; // x0, y0, w, h
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * fmaps.len());
        for r in &frontier {
            for m in &fmaps {
                next.push([r[0] + r[2] * m[1], r[1] + r[3] * m[3], r[2] * m[0], r[3] * m[2]]);
            }
        }
        frontier = next;
    }
    debug_assert_eq!(frontier.len() as u64, count);
    Ok(frontier
        .into_iter()
        .map(|r| svg::Rect {
            x0: r[0],
            y0: r[1],
            x1: r[0] + r[2],
            y1: r[1] + r[3],
        })
        .collect())
}
