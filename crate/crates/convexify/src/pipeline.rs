//! End-to-end drivers: build the problem from a run configuration, generate
//! data, invert, sweep, scan. The command-line binary is a thin wrapper
//! around these functions, and the integration tests call them directly.

use crate::config::{grid_hash, Generator, Profile, RunConfig};
use crate::error::{ConvexifyError, Result};
use crate::field::{Field, TensorGrid};
use crate::forward::{
    add_noise, c_true_slice, evolve_two_sided, extract_traces, f_slice, fine_spatial_grid,
    CauchyTraces,
};
use crate::functional::{h4_inner, FunctionalContext};
use crate::geometry::{build_domain, weight_field, CarlemanParams, DomainGrid};
use crate::io::{
    write_crec_csv, write_grid_csv, write_history_csv, write_json_report, write_landscape_csv,
    write_sweep_csv, write_traces_csv, ArtifactMeta, SweepRow,
};
use crate::model::{
    oracle_eigenmode, oracle_separable, CoefficientSet, OracleSolution, TikhonovParams,
};
use crate::optimize::{
    build_boundary_lift, minimize_gradient_descent, random_start, MinimizeResult, OptimizerConfig,
};
use crate::recover::{error_metrics, recover_coefficient, ErrorMetrics};
use crate::transform::{derive_transformed_traces, Smoothing};
use crate::verify::{
    adversarial_nonconvexity, check_carleman_estimate, check_convexity, check_expansion_identity,
    check_gradient_consistency, check_volterra_inequality, scan_landscape,
};
use serde::Serialize;
use std::path::Path;

fn profile_value(profile: &Profile, coords: &[f64]) -> f64 {
    match profile {
        Profile::Const(v) => *v,
        Profile::Exp => coords[0].exp(),
        Profile::TwoPlusSin => 2.0 + coords[0].sin(),
        Profile::Cos {
            amplitude,
            frequency,
        } => amplitude * (frequency * coords[0]).cos(),
        Profile::Zero => 0.0,
    }
}

/// Everything derived from a configuration that the commands share: the
/// inversion grid, the fine generator grid, the closed-form solution, and the
/// coefficient set restricted to the inversion grid.
pub struct Problem {
    pub cfg: RunConfig,
    pub domain: DomainGrid,
    pub fine: TensorGrid,
    pub offsets: Vec<usize>,
    pub oracle: OracleSolution,
    /// Coefficients on the inversion spatial grid, with the ground truth and
    /// the initial data sliced off the fine grid.
    pub coeffs: CoefficientSet,
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    cfg.validate()?;
    let domain = build_domain(&cfg.grid_spec())?;
    // the generator box always extends past x1 = 0 so the normal derivative
    // trace uses a centered stencil, and — for the eigenmode generator — so
    // the slowest modes live on a wider interval
    let (fine, offsets) = fine_spatial_grid(&domain, true)?;
    let coeffs_fine = CoefficientSet::isotropic(&fine);
    let oracle = match cfg.generator {
        Generator::Separable => {
            let coeffs_fine = coeffs_fine.with_f(|c| profile_value(&cfg.f_profile, c));
            if coeffs_fine.f.iter().any(|&v| v <= 0.0) {
                return Err(ConvexifyError::Positivity(
                    "forward.f_profile must be positive on the generator box".into(),
                ));
            }
            oracle_separable(&coeffs_fine, cfg.mu)?
        }
        Generator::Eigenmode => {
            let coeffs_fine = coeffs_fine.with_c(|c| profile_value(&cfg.c_profile, c));
            let t_max = cfg
                .grid_spec()
                .box_ranges()
                .last()
                .map(|&(lo, hi)| lo.abs().max(hi.abs()))
                .unwrap_or(0.0);
            oracle_eigenmode(
                &coeffs_fine,
                cfg.num_modes,
                &cfg.gamma,
                cfg.exponent_cap,
                t_max,
            )?
        }
    };
    evolve_two_sided(&domain, &oracle, &fine)?;
    let spatial = domain.spatial_grid();
    let mut coeffs = CoefficientSet::isotropic(&spatial);
    coeffs.f = f_slice(&domain, &oracle, &fine, &offsets)?;
    coeffs.c_true = c_true_slice(&domain, &oracle, &fine, &offsets)?;
    let fmin = coeffs.f.iter().cloned().fold(f64::INFINITY, f64::min);
    coeffs.b_lower = 0.25 * fmin;
    Ok(Problem {
        cfg: cfg.clone(),
        domain,
        fine,
        offsets,
        oracle,
        coeffs,
    })
}

/// Exact traces from the closed-form solution, with the configured noise
/// applied on top.
pub fn generate_traces(problem: &Problem) -> Result<CauchyTraces> {
    let clean = extract_traces(
        &problem.domain,
        &problem.oracle,
        &problem.fine,
        &problem.offsets,
    )?;
    if problem.cfg.delta > 0.0 {
        add_noise(&clean, problem.cfg.delta, problem.cfg.seed)
    } else {
        Ok(clean)
    }
}

fn smoothing_of(cfg: &RunConfig) -> Smoothing {
    if cfg.smooth {
        Smoothing::SavGol {
            degree: cfg.degree,
            window: cfg.window,
        }
    } else {
        Smoothing::Off
    }
}

fn meta_of(cfg: &RunConfig) -> ArtifactMeta {
    ArtifactMeta {
        config_hash: cfg.config_hash(),
        grid_hash: grid_hash(&cfg.grid_spec()),
    }
}

/// Weighted cost context plus the pinned boundary lift, ready to minimize.
pub struct InversionSetup {
    pub ctx: FunctionalContext,
    pub w_bc: Field,
    pub radius: f64,
}

/// Builds the functional context at the given strength (or the configured
/// one) and resolves `tikhonov.R = 0` to ten times the lift's ball norm.
pub fn inversion_setup(
    problem: &Problem,
    traces: &CauchyTraces,
    lambda_override: Option<f64>,
) -> Result<InversionSetup> {
    let cfg = &problem.cfg;
    let transformed = derive_transformed_traces(traces, smoothing_of(cfg))?;
    let w_bc = build_boundary_lift(&problem.domain, &transformed)?;
    let carleman = CarlemanParams {
        lambda: lambda_override.unwrap_or(cfg.lambda),
        nu: cfg.nu,
        normalization: cfg.normalization,
    };
    let provisional = FunctionalContext::new(
        problem.domain.clone(),
        problem.coeffs.clone(),
        carleman.clone(),
        TikhonovParams {
            alpha: cfg.alpha,
            radius: 1.0,
        },
    )?;
    let lift_norm = h4_inner(&provisional, &w_bc, &w_bc).sqrt();
    let radius = if cfg.radius > 0.0 {
        cfg.radius
    } else {
        10.0 * lift_norm.max(1.0)
    };
    let ctx = FunctionalContext::new(
        problem.domain.clone(),
        problem.coeffs.clone(),
        carleman,
        TikhonovParams {
            alpha: cfg.alpha,
            radius,
        },
    )?;
    Ok(InversionSetup { ctx, w_bc, radius })
}

fn optimizer_config(cfg: &RunConfig) -> OptimizerConfig {
    OptimizerConfig {
        max_iters: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        initial_step: cfg.step0,
        max_backtracks: cfg.backtrack,
        precondition: cfg.precondition,
        ..OptimizerConfig::default()
    }
}

pub struct SingleRun {
    pub result: MinimizeResult,
    pub c_rec: Vec<f64>,
    pub metrics: ErrorMetrics,
}

/// One minimization from the given start (`None` = zero start), followed by
/// coefficient recovery and the error metrics against the sliced truth.
pub fn run_single(
    problem: &Problem,
    setup: &InversionSetup,
    start_seed: Option<u64>,
) -> Result<SingleRun> {
    let z0 = match start_seed {
        None => Field::zeros(&problem.domain.grid),
        Some(seed) => random_start(&setup.ctx, &setup.w_bc, seed)?,
    };
    let result = minimize_gradient_descent(
        &setup.ctx,
        &setup.w_bc,
        &z0,
        &optimizer_config(&problem.cfg),
    )?;
    let c_rec = recover_coefficient(&problem.domain, &problem.coeffs, &result.w)?;
    let metrics = error_metrics(&problem.domain, &c_rec, &problem.coeffs.c_true)?;
    Ok(SingleRun {
        result,
        c_rec,
        metrics,
    })
}

/// `forward`: dump the grid geometry and the (possibly noisy) traces.
pub fn cmd_forward(cfg: &RunConfig, out: &Path) -> Result<()> {
    let problem = build_problem(cfg)?;
    let traces = generate_traces(&problem)?;
    let meta = meta_of(cfg);
    let carleman = CarlemanParams {
        lambda: cfg.lambda,
        nu: cfg.nu,
        normalization: cfg.normalization,
    };
    let weight = weight_field(&problem.domain, &carleman)?;
    write_grid_csv(&out.join("grid.csv"), &problem.domain, &weight, &meta)?;
    write_traces_csv(&out.join("traces.csv"), &traces, &meta)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct StartSummary {
    /// `null` for the zero start, otherwise the random-start seed.
    pub start_seed: Option<u64>,
    pub final_j: f64,
    pub iters: usize,
    pub converged: bool,
    pub projected: bool,
    pub rel_l2: f64,
    pub rel_linf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvertReport {
    pub lambda: f64,
    pub alpha: f64,
    pub radius: f64,
    pub delta: f64,
    pub seed: u64,
    pub smoothing: bool,
    pub alpha_in_window: bool,
    pub starts: Vec<StartSummary>,
    /// Index into `starts` of the lowest final cost; its recovery is the one
    /// written to `c_rec.csv`.
    pub best: usize,
    pub best_rel_l2: f64,
    pub comparison_nodes: usize,
}

/// Minimizations from the zero start plus `restarts` random starts, in a
/// fixed seed order.
pub fn invert_all(
    problem: &Problem,
    setup: &InversionSetup,
    restarts: usize,
) -> Result<Vec<SingleRun>> {
    (0..=restarts)
        .map(|k| {
            let seed = (k > 0).then(|| problem.cfg.seed.wrapping_add(k as u64));
            run_single(problem, setup, seed)
        })
        .collect()
}

/// `invert`: minimize from the zero start plus the configured number of
/// random restarts, keep the lowest-cost minimizer, and write the history,
/// the recovered coefficient and a JSON report.
pub fn cmd_invert(cfg: &RunConfig, out: &Path) -> Result<InvertReport> {
    let problem = build_problem(cfg)?;
    let traces = generate_traces(&problem)?;
    let setup = inversion_setup(&problem, &traces, None)?;
    let meta = meta_of(cfg);

    let runs = invert_all(&problem, &setup, cfg.restarts)?;
    let starts: Vec<StartSummary> = runs
        .iter()
        .enumerate()
        .map(|(k, run)| StartSummary {
            start_seed: (k > 0).then(|| cfg.seed.wrapping_add(k as u64)),
            final_j: run.result.history.last().map(|r| r.j).unwrap_or(f64::NAN),
            iters: run.result.history.len(),
            converged: run.result.converged,
            projected: run.result.projected,
            rel_l2: run.metrics.l2,
            rel_linf: run.metrics.linf,
        })
        .collect();
    let best = (0..starts.len())
        .min_by(|&i, &j| starts[i].final_j.total_cmp(&starts[j].final_j))
        .unwrap_or(0);

    write_traces_csv(&out.join("traces.csv"), &traces, &meta)?;
    write_history_csv(&out.join("history.csv"), &runs[best].result.history, &meta)?;
    write_crec_csv(
        &out.join("c_rec.csv"),
        &problem.domain.spatial_grid(),
        &runs[best].c_rec,
        &problem.coeffs.c_true,
        &meta,
    )?;
    let report = InvertReport {
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        radius: setup.radius,
        delta: cfg.delta,
        seed: cfg.seed,
        smoothing: cfg.smooth,
        alpha_in_window: setup.ctx.alpha_in_window,
        starts,
        best,
        best_rel_l2: runs[best].metrics.l2,
        comparison_nodes: runs[best].metrics.nodes,
    };
    write_json_report(&out.join("report.json"), &report, &meta)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub lambda_scan: Vec<f64>,
    pub nu: f64,
    pub alpha: f64,
    pub expansion: crate::verify::ExpansionReport,
    pub gradient: crate::verify::GradientReport,
    pub convexity: crate::verify::ConvexityReport,
    pub adversarial: crate::verify::AdversarialReport,
    pub carleman: crate::verify::CarlemanReport,
    pub volterra: crate::verify::VolterraReport,
    pub pass: bool,
}

/// `verify`: run the structural checks (exact expansion, gradient
/// consistency, convexity scan, adversarial search at zero weight, weighted
/// energy ratios, memory-term ratios) and write one JSON report.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<VerifyReport> {
    let problem = build_problem(cfg)?;
    let traces = generate_traces(&problem)?;
    let setup = inversion_setup(&problem, &traces, None)?;
    let meta = meta_of(cfg);
    let domain = &problem.domain;
    let coeffs = &problem.coeffs;

    let expansion = check_expansion_identity(domain, coeffs, 20, cfg.seed)?;
    let gradient = check_gradient_consistency(&setup.ctx, 20, cfg.seed.wrapping_add(1))?;
    let convexity = check_convexity(
        domain,
        coeffs,
        &cfg.lambda_scan,
        cfg.nu,
        cfg.alpha,
        setup.radius,
        100,
        cfg.seed.wrapping_add(2),
    )?;
    let adversarial = adversarial_nonconvexity(domain, coeffs, cfg.seed.wrapping_add(3), 200)?;
    let carleman = check_carleman_estimate(
        domain,
        coeffs,
        &cfg.lambda_scan,
        cfg.nu,
        16,
        cfg.seed.wrapping_add(4),
    )?;
    let volterra =
        check_volterra_inequality(domain, &cfg.lambda_scan, cfg.nu, 20, cfg.seed.wrapping_add(5))?;

    let pass = expansion.pass
        && gradient.pass
        && convexity.pass
        && adversarial.found
        && carleman.pass
        && volterra.max_over_scan.is_finite();
    let report = VerifyReport {
        lambda_scan: cfg.lambda_scan.clone(),
        nu: cfg.nu,
        alpha: cfg.alpha,
        expansion,
        gradient,
        convexity,
        adversarial,
        carleman,
        volterra,
        pass,
    };
    write_json_report(&out.join("verify.json"), &report, &meta)?;
    Ok(report)
}

/// `sweep`: invert once per strength in the scan and tabulate the final cost
/// and recovery error.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let problem = build_problem(cfg)?;
    let traces = generate_traces(&problem)?;
    let meta = meta_of(cfg);
    let mut rows = Vec::new();
    for &lambda in &cfg.lambda_scan {
        let setup = inversion_setup(&problem, &traces, Some(lambda))?;
        let run = run_single(&problem, &setup, None)?;
        rows.push(SweepRow {
            lambda,
            final_j: run.result.history.last().map(|r| r.j).unwrap_or(f64::NAN),
            rel_l2_c: run.metrics.l2,
            iters: run.result.history.len(),
        });
    }
    write_sweep_csv(&out.join("sweep.csv"), &rows, &meta)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LandscapeReport {
    pub lambda_star: f64,
    pub directions: usize,
    pub flagged_lambda0: Vec<usize>,
    pub flagged_lambdastar: Vec<usize>,
}

/// `landscape`: one-dimensional cost slices through the boundary lift along
/// random directions, at zero weight and at the configured strength.
pub fn cmd_landscape(cfg: &RunConfig, out: &Path) -> Result<LandscapeReport> {
    let problem = build_problem(cfg)?;
    let traces = generate_traces(&problem)?;
    let setup0 = inversion_setup(&problem, &traces, Some(0.0))?;
    let setup_star = inversion_setup(&problem, &traces, None)?;
    let meta = meta_of(cfg);
    let directions = 8;
    let scan = scan_landscape(
        &setup0.ctx,
        &setup_star.ctx,
        &setup_star.w_bc,
        directions,
        21,
        cfg.seed,
    )?;
    write_landscape_csv(&out.join("landscape.csv"), &scan, &meta)?;
    let report = LandscapeReport {
        lambda_star: scan.lambda_star,
        directions,
        flagged_lambda0: scan.flagged_lambda0.clone(),
        flagged_lambdastar: scan.flagged_lambdastar.clone(),
    };
    write_json_report(&out.join("landscape.json"), &report, &meta)?;
    Ok(report)
}
