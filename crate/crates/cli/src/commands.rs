//! The four subcommands, each producing a [`Table`].

use std::f64::consts::PI;

use optospring::gauge_series::{audit_appendix_b, AuditReport, Fault, Finding};
use optospring::mode_mixing::{
    extrapolate_completeness, ladder_mixing_matrix, mixing_matrix, overlap_coefficient,
    overlap_coefficient_quadrature,
};
use optospring::operators::{
    build_delta_omega2, build_f, build_f_alternative, build_f_ladder, build_force_f, build_gamma0,
    build_gamma0_ladder, ladder_expansion_check, normal_order_split, vacuum_sum_f0, vacuum_sum_f1,
    QUADRATIC_PAD,
};
use optospring::spectra::{
    fit_loglog_slope, spectrum, sweep, ModelFlags, ParamGrid, SpectrumResult, SweepParameter,
};
use optospring::{hbar, FockSpace, MixingKind, MixingMatrix, ModeGrid, SystemParams};

use crate::config::RunConfig;
use crate::output::{Cell, Table};
use crate::CliError;

/// Panels of the overlap quadrature.
const QUADRATURE_PANELS: usize = 256;
const OVERLAP_TOLERANCE: f64 = 1e-8;
const COMPLETENESS_TOLERANCE: f64 = 1e-4;
const COMPLETENESS_CUTOFFS: [usize; 3] = [64, 128, 256];
const CONSTRUCTION_TOLERANCE: f64 = 1e-12;
const EXPANSION_TOLERANCE: f64 = 1e-6;

pub mod topics {
    pub const LADDER_EXPANSION: &str = "ladder-expansion-coefficients";
}

fn common_meta(table: &mut Table, command: &str, config: &RunConfig) {
    let s = &config.system;
    table.meta("command", command);
    table.meta("version", env!("CARGO_PKG_VERSION"));
    table.meta("config_hash", config.hash());
    table.meta("modes", s.modes);
    table.meta("per_mode_max", s.per_mode_max);
    table.meta("total_cap", s.total_cap);
    table.meta("mirror_max", s.mirror_max);
    table.meta("precision", config.output.precision);
}

/// `g_jk` for `j, k ≤ K` with quadrature and completeness residuals.
pub fn cmd_coefficients(config: &RunConfig) -> Result<Table, CliError> {
    let params = config.params()?;
    let grid = params.grid()?;
    let k_max = grid.cutoff();
    let mut table = Table::new(&[
        "j",
        "k",
        "g_jk",
        "g_jk_quadrature",
        "quadrature_residual",
        "completeness_lhs",
        "completeness_rhs",
        "completeness_residual",
    ]);
    for j in 1..=k_max {
        for k in 1..=k_max {
            let closed: f64 = overlap_coefficient(j, k)?;
            let quad = overlap_coefficient_quadrature(j, k, &grid, QUADRATURE_PANELS)?;
            let completeness = extrapolate_completeness(j, k, &grid, &COMPLETENESS_CUTOFFS)?;
            table.push(vec![
                j.into(),
                k.into(),
                closed.into(),
                quad.into(),
                (closed - quad).abs().into(),
                completeness.extrapolated_lhs.into(),
                completeness.rhs.into(),
                completeness.extrapolated_residual.into(),
            ]);
        }
    }
    common_meta(&mut table, "coefficients", config);
    table.meta("completeness_cutoffs", "64,128,256");
    Ok(table)
}

/// Every identity the command-line audit checks, in a fixed order.
pub fn full_audit(
    params: &SystemParams<f64>,
    fault: Option<Fault>,
) -> Result<AuditReport, optospring::Error> {
    let mut report = AuditReport::new();
    let grid = params.grid()?;
    mixing_identities(&mut report, &grid)?;
    construction_paths(&mut report, params, &grid)?;
    report.extend(audit_appendix_b(params, fault)?);
    Ok(report)
}

fn mixing_identities(
    report: &mut AuditReport,
    grid: &ModeGrid<f64>,
) -> Result<(), optospring::Error> {
    let k_max = grid.cutoff();
    let mut quad = 0.0f64;
    let mut antisym = 0.0f64;
    for j in 1..=k_max {
        for k in 1..=k_max {
            let g: f64 = overlap_coefficient(j, k)?;
            let h: f64 = overlap_coefficient(k, j)?;
            quad = quad
                .max((g - overlap_coefficient_quadrature(j, k, grid, QUADRATURE_PANELS)?).abs());
            antisym = antisym.max((g + h).abs());
        }
    }
    report.check(
        "mixing coefficients match their defining integral",
        quad,
        OVERLAP_TOLERANCE,
    );
    report.check("mixing coefficients are antisymmetric", antisym, 0.0);
    let mut completeness = 0.0f64;
    for j in 1..=k_max.min(3) {
        for k in 1..=k_max.min(3) {
            let e = extrapolate_completeness(j, k, grid, &COMPLETENESS_CUTOFFS)?;
            completeness = completeness.max(e.extrapolated_residual);
        }
    }
    report.check(
        "mixing coefficients satisfy completeness",
        completeness,
        COMPLETENESS_TOLERANCE,
    );
    Ok(())
}

fn construction_paths(
    report: &mut AuditReport,
    params: &SystemParams<f64>,
    grid: &ModeGrid<f64>,
) -> Result<(), optospring::Error> {
    let k_max = grid.cutoff();
    let tol = CONSTRUCTION_TOLERANCE;
    let space = FockSpace::new(params.field_layout(), QUADRATIC_PAD)?;
    let m0 = mixing_matrix(grid, 0)?;
    let m1 = mixing_matrix(grid, 1)?;
    let m2 = mixing_matrix(grid, 2)?;
    let l0 = MixingMatrix::identity(k_max, MixingKind::Ladder);
    let a1 = ladder_mixing_matrix(grid, 1)?;

    let f0 = build_f(0, &space, grid, &m0)?.operator;
    let f0_alt = build_f_alternative(0, &space, grid, &m1, &m2)?;
    let f0_ladder = build_f_ladder(0, &space, grid, &l0)?.operator;
    report.check(
        "F0 double sum equals its single-sum form",
        f0_alt.deviation,
        tol,
    );
    report.check(
        "F0 double sum equals its ladder form",
        f0.max_abs_diff(&f0_ladder)?,
        tol,
    );

    let f1 = build_f(1, &space, grid, &m1)?;
    let f1_alt = build_f_alternative(1, &space, grid, &m1, &m2)?;
    let f1_ladder = build_f_ladder(1, &space, grid, &a1)?.operator;
    report.check("F1 is Hermitian as constructed", f1.raw_asymmetry, tol);
    report.check(
        "F1 double sum equals its single-sum form",
        f1_alt.deviation,
        tol,
    );
    report.check(
        "F1 double sum equals its ladder form",
        f1.operator.max_abs_diff(&f1_ladder)?,
        tol,
    );

    let g_quad = build_gamma0(&space, grid, &m1)?;
    let g_ladder = build_gamma0_ladder(&space, grid)?;
    report.check(
        "Gamma0 quadrature form equals its ladder form",
        g_quad.max_abs_diff(&g_ladder)?,
        tol,
    );

    let split0 = normal_order_split(&f0)?;
    let split1 = normal_order_split(&f1.operator)?;
    report.check(
        "vacuum value of F0 is the zero-point sum",
        (split0.vacuum - vacuum_sum_f0(grid)).abs(),
        tol,
    );
    report.check(
        "vacuum value of F1 is the primed pair sum",
        (split1.vacuum - vacuum_sum_f1(grid)).abs(),
        tol,
    );

    let d = grid.cavity_length();
    let f = build_force_f(&space, grid)?;
    report.check(
        "force f is the normal-ordered F0 over d",
        f.scale(d).max_abs_diff(&split0.normal)?,
        tol,
    );
    let delta = build_delta_omega2(&space, grid, &a1, params)?;
    let scale = params.mass * d * d / 2.0;
    report.check(
        "optical-spring shift is the normal-ordered F1",
        delta.operator.scale(scale).max_abs_diff(&split1.normal)?,
        tol,
    );

    let xs: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.01 * d).collect();
    let expansion = ladder_expansion_check(&space, grid, &xs)?;
    report.check(
        "ladder operator expansion matches its Taylor coefficients",
        expansion.deviation_from_expected(),
        EXPANSION_TOLERANCE,
    );
    let [_, _, a2] = expansion.annihilation;
    let [_, b1, b2] = expansion.creation;
    report.push_finding(Finding::new(
        topics::LADDER_EXPANSION,
        "Expanding the ladder operators in the displacement gives x²/(8d²), −x/(2d) and x²/(4d²); \
         the printed expansion drops the powers of d.",
        &[
            ("fitted alpha2", a2),
            ("derived alpha2 = 1/(8d^2)", 1.0 / (8.0 * d * d)),
            ("printed alpha2", expansion.dimensionless_annihilation[2]),
            ("fitted beta1", b1),
            ("derived beta1 = -1/(2d)", -1.0 / (2.0 * d)),
            ("printed beta1", expansion.dimensionless_creation[1]),
            ("fitted beta2", b2),
            ("derived beta2 = 1/(4d^2)", 1.0 / (4.0 * d * d)),
            ("printed beta2", expansion.dimensionless_creation[2]),
        ],
    ));
    Ok(())
}

/// Runs [`full_audit`]; the flag is true when every assertion passed.
pub fn cmd_audit(config: &RunConfig, fault: Option<Fault>) -> Result<(Table, bool), CliError> {
    let params = config.params()?;
    let report = full_audit(&params, fault)?;
    let mut table = Table::new(&[
        "kind",
        "name",
        "label",
        "residual_grade0",
        "residual_grade1",
        "residual_grade2",
        "value",
        "tolerance",
        "asserted",
        "passed",
        "vacuous",
    ]);
    for e in &report.entries {
        let [g0, g1, g2] = e.grade_residuals;
        table.push(vec![
            "identity".into(),
            e.identity.clone().into(),
            Cell::Empty,
            g0.into(),
            g1.into(),
            g2.into(),
            Cell::Empty,
            e.tolerance.into(),
            e.asserted.into(),
            e.passed.into(),
            e.vacuous.into(),
        ]);
    }
    for f in &report.findings {
        for v in &f.values {
            table.push(vec![
                "finding".into(),
                f.topic.clone().into(),
                v.label.clone().into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                v.value.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
            ]);
        }
    }
    common_meta(&mut table, "audit", config);
    table.meta("fault", fault.map(Fault::name));
    table.meta("identities_passed", report.passed_count());
    table.meta("identities_failed", report.failures().count());
    table.meta("findings", report.findings.len());
    for f in &report.findings {
        table.meta(&format!("finding.{}", f.topic), f.description.clone());
    }
    Ok((table, report.passed()))
}

fn spectrum_meta(table: &mut Table, prefix: &str, r: &SpectrumResult<f64>) {
    let key = |s: &str| format!("{prefix}{s}");
    table.meta(&key("model"), r.flags.to_string());
    table.meta(&key("ground_energy"), r.ground_energy());
    table.meta(&key("mechanical_gap"), r.mechanical_gap);
    table.meta(&key("mirror_population"), r.mirror_population);
    for (k, n) in r.mode_populations.iter().enumerate() {
        table.meta(&key(&format!("mode_population_{}", k + 1)), *n);
    }
}

/// Spectrum of the configured model, compared with the same model with the
/// `F₁` correction toggled.
pub fn cmd_spectrum(config: &RunConfig) -> Result<Table, CliError> {
    let params = config.params()?;
    let result = spectrum(&params, config.model, &config.spectrum)?;
    let toggled_flags = config.model.with_f1(!config.model.f1);
    let toggled = spectrum(&params, toggled_flags, &config.spectrum)?;
    let mut table = Table::new(&["level", "energy", "excitation", "mirror_weight"]);
    let e0 = result.ground_energy();
    for (i, &e) in result.eigenvalues.iter().enumerate() {
        let weight = result.branch_weights.iter().find(|w| w.0 == i).map(|w| w.2);
        table.push(vec![i.into(), e.into(), (e - e0).into(), weight.into()]);
    }
    common_meta(&mut table, "spectrum", config);
    spectrum_meta(&mut table, "", &result);
    table.meta("lambda", result.lambda);
    table.meta("ratio_quad_f0", result.ratio_quad_f0);
    table.meta("ratio_quad_f1", result.ratio_quad_f1);
    table.meta("dimension", result.dimension);
    table.meta("solver", result.solver.name());
    table.meta("max_residual", result.max_residual);
    spectrum_meta(&mut table, "toggled_f1.", &toggled);
    let (with, without) = if config.model.f1 {
        (&result, &toggled)
    } else {
        (&toggled, &result)
    };
    table.meta(
        "f1_ground_energy_difference",
        with.ground_energy() - without.ground_energy(),
    );
    table.meta(
        "f1_gap_difference",
        with.mechanical_gap
            .zip(without.mechanical_gap)
            .map(|(a, b)| a - b),
    );
    Ok(table)
}

/// Evaluates the configured grid; the count is the number of rows that
/// succeeded.
pub fn cmd_sweep(config: &RunConfig) -> Result<(Table, usize), CliError> {
    if config.sweep.is_empty() {
        return Err(CliError::Config("sweep needs at least one axis".into()));
    }
    let params = config.params()?;
    let grid = ParamGrid::new(config.sweep.clone());
    let rows = sweep(&params, config.model, &grid, &config.spectrum)?;
    let mut columns: Vec<String> = vec!["index".into()];
    for (i, axis) in config.sweep.iter().enumerate() {
        let name = axis.parameter.name();
        let taken = config.sweep[..i]
            .iter()
            .any(|a| a.parameter == axis.parameter);
        columns.push(if taken {
            format!("{name}_{i}")
        } else {
            name.to_string()
        });
    }
    let fixed = [
        "status",
        "ground_energy",
        "ground_shift",
        "mechanical_gap",
        "gap_shift",
        "mirror_population",
    ];
    columns.extend(fixed.iter().map(|s| s.to_string()));
    columns.extend((1..=params.modes).map(|k| format!("mode_population_{k}")));
    columns.extend(
        [
            "lambda",
            "ratio_quad_f0",
            "ratio_quad_f1",
            "dimension",
            "solver",
            "max_residual",
            "error",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let mut table = Table {
        columns,
        ..Table::default()
    };
    let mut successes = 0;
    let mut fit = (Vec::new(), Vec::new(), Vec::new());
    for row in &rows {
        let mut cells: Vec<Cell> = vec![row.index.into()];
        cells.extend(row.coordinates.iter().map(|c| Cell::Float(c.1)));
        match (&row.outcome, &row.params) {
            (Ok(r), Some(p)) => {
                successes += 1;
                let free_ground = hbar::<f64>() * p.omega / 2.0;
                let gap_shift = r.mechanical_gap.map(|g| g - hbar::<f64>() * p.omega);
                if let (Some(l), Some(s)) = (r.lambda, gap_shift) {
                    fit.0.push(l);
                    fit.1.push(s);
                    fit.2.push(r.ground_energy() - free_ground);
                }
                cells.extend([
                    "ok".into(),
                    r.ground_energy().into(),
                    (r.ground_energy() - free_ground).into(),
                    r.mechanical_gap.into(),
                    gap_shift.into(),
                    r.mirror_population.into(),
                ]);
                cells.extend(r.mode_populations.iter().map(|&n| Cell::Float(n)));
                cells.extend([
                    r.lambda.into(),
                    r.ratio_quad_f0.into(),
                    r.ratio_quad_f1.into(),
                    r.dimension.into(),
                    r.solver.name().into(),
                    r.max_residual.into(),
                    Cell::Empty,
                ]);
            }
            (outcome, _) => {
                cells.push("error".into());
                cells.extend((0..fixed.len() - 1 + params.modes + 6).map(|_| Cell::Empty));
                let message = outcome
                    .as_ref()
                    .err()
                    .map(|e| e.to_string())
                    .unwrap_or_default();
                cells.push(message.into());
            }
        }
        table.push(cells);
    }
    common_meta(&mut table, "sweep", config);
    table.meta("model", config.model.to_string());
    table.meta("solver", config.spectrum.solver.kind.name());
    table.meta("solver_tolerance", config.spectrum.solver.tolerance);
    table.meta("solver_seed", config.spectrum.solver.seed as usize);
    table.meta("points", rows.len());
    table.meta("points_ok", successes);
    let lambda_only =
        config.sweep.len() == 1 && config.sweep[0].parameter == SweepParameter::Lambda;
    if lambda_only && fit.0.len() >= 2 {
        table.meta(
            "gap_shift_lambda_slope",
            fit_loglog_slope(&fit.0, &fit.1).ok(),
        );
        table.meta(
            "ground_shift_lambda_slope",
            fit_loglog_slope(&fit.0, &fit.2).ok(),
        );
    }
    Ok((table, successes))
}

/// `d = π`, `Ω = ω₁₀ = 1`, `ω_pl = K ω₁₀`, with the mass set by `λ`.
pub fn operating_point(
    modes: usize,
    per_mode_max: usize,
    lambda: f64,
) -> Result<SystemParams<f64>, optospring::Error> {
    SystemParams::new(1.0, 1.0, PI, modes, per_mode_max)?
        .with_omega_pl(modes as f64)
        .with_lambda(lambda)
}

/// Ground-energy difference between a model and the linear one.
pub fn ground_energy_effect(
    params: &SystemParams<f64>,
    flags: ModelFlags,
    options: &optospring::spectra::SpectrumOptions,
) -> Result<f64, optospring::Error> {
    let with = spectrum(params, flags, options)?;
    let base = spectrum(params, ModelFlags::LINEAR, options)?;
    Ok(with.ground_energy() - base.ground_energy())
}
