//! Homogenization experiments: solve with an oscillating coefficient sequence
//! `h_j` and compare every member against the problem with the weak-* limit.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, CoefficientSequence, SequenceFamily};
use crate::error::{invalid, Error, Result};
use crate::forms::{flux_pairing, Functional, FunctionalSpec, NonlocalOperator};
use crate::kernels::Kernel;
use crate::mesh::{build_mesh, DiscreteFunction};
use crate::quadrature::{assemble_quadrature, NonlocalQuadrature};
use crate::solver::{solve_from, SolveOptions, SolveReport};

/// Test function `G(x', x) = b(x; c, ρ) b(x'; c + offset, ρ)` with the
/// smooth bump `b(t; c, ρ) = exp(1 - 1 / (1 - ((t - c)/ρ)²))` on `|t - c| < ρ`.
///
/// The two factors are deliberately shifted: a symmetric `G` pairs to zero
/// against any antisymmetric flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPointBump {
    pub center: f64,
    pub offset: f64,
    pub radius: f64,
}

fn bump(t: f64, c: f64, rho: f64) -> f64 {
    let z = (t - c) / rho;
    let z2 = z * z;
    if z2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - z2)).exp()
    }
}

impl TwoPointBump {
    pub fn eval(&self, x_prime: f64, x: f64) -> f64 {
        bump(x, self.center, self.radius) * bump(x_prime, self.center + self.offset, self.radius)
    }

    /// Three bumps with disjoint supports in the middle of `omega`.
    pub fn defaults(omega: (f64, f64)) -> Vec<Self> {
        let (a, b) = omega;
        let len = b - a;
        [0.25, 0.45, 0.65]
            .iter()
            .map(|&c| Self {
                center: a + c * len,
                offset: 0.15 * len,
                radius: 0.08 * len,
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid(
                "experiment.test_functions.radius",
                "must be positive",
            ));
        }
        if !(self.center.is_finite() && self.offset.is_finite()) {
            return Err(invalid(
                "experiment.test_functions",
                "center and offset must be finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kernel: Kernel,
    pub omega: (f64, f64),
    pub n_cells: usize,
    pub gauss_order: usize,
    pub near_diag_levels: usize,
    pub p: f64,
    pub functional: FunctionalSpec,
    pub sequence: CoefficientSequence,
    pub indices: Vec<u32>,
    pub test_functions: Vec<TwoPointBump>,
    pub solver: SolveOptions,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p != self.kernel.p() {
            return Err(invalid("p", "must equal the kernel exponent"));
        }
        if self.indices.len() < 2 {
            return Err(invalid("sequence.indices", "need at least two indices"));
        }
        if self.indices[0] == 0 {
            return Err(invalid("sequence.indices", "indices start at 1"));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("sequence.indices", "must be strictly increasing"));
        }
        for g in &self.test_functions {
            g.validate()?;
        }
        self.solver.validate()
    }

    /// True for sequences that actually oscillate, where errors must decay.
    pub fn expects_trend(&self) -> bool {
        matches!(
            self.sequence,
            CoefficientSequence::BuiltIn(
                SequenceFamily::SeparableOscillation { .. } | SequenceFamily::Checkerboard { .. }
            )
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub j: u32,
    /// `‖u_j - u‖_{L^p(Ω)}`.
    pub lp_error: f64,
    /// `B_{h_j}(u_j - u, u_j - u)^{1/p}`.
    pub x0_error: f64,
    /// `|B_{h_j}(u_j, u_j) - B_h(u, u)|`.
    pub energy_gap: f64,
    /// `|m_j - m|`.
    pub min_gap: f64,
    /// `|⟨Ψ_{h_j}(u_j), G⟩ - ⟨Ψ_h(u), G⟩|` per test function.
    pub flux_gaps: Vec<f64>,
    /// `m_j = J_{h_j}(u_j)`.
    pub min_value: f64,
    /// `J_{h_j}(u)`, an upper bound for `m_j`.
    pub member_at_limit: f64,
    /// `J_h(u_j)`, an upper bound for `m`.
    pub limit_at_member: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_norm: f64,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub p: f64,
    pub test_functions: Vec<TwoPointBump>,
    pub nodes: Vec<f64>,
    /// Limit solution `u` at every node, collar included.
    pub limit_solution: Vec<f64>,
    /// `B_h(u, u)`.
    pub limit_energy: f64,
    /// `m = J_h(u)`.
    pub limit_min_value: f64,
    pub limit_solve: SolveReport,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn all_converged(&self) -> bool {
        self.limit_solve.converged && self.rows.iter().all(|r| r.converged)
    }

    /// Names of error columns whose last value is not strictly below the
    /// first one.
    pub fn trend_violations(&self) -> Vec<String> {
        let (Some(first), Some(last)) = (self.rows.first(), self.rows.last()) else {
            return Vec::new();
        };
        if self.rows.len() < 2 {
            return Vec::new();
        }
        let a = error_columns(first);
        let b = error_columns(last);
        a.into_iter()
            .zip(b)
            .filter(|((_, x), (_, y))| y.partial_cmp(x) != Some(std::cmp::Ordering::Less))
            .map(|((name, _), _)| name)
            .collect()
    }

    /// Rows where an evaluation of the wrong function fell below a minimum by
    /// more than `slack`.
    pub fn energy_order_violations(&self, slack: f64) -> Vec<u32> {
        self.rows
            .iter()
            .filter(|r| {
                r.min_value > r.member_at_limit + slack
                    || self.limit_min_value > r.limit_at_member + slack
            })
            .map(|r| r.j)
            .collect()
    }
}

/// Error columns of a row in table order.
pub fn error_columns(row: &ExperimentRow) -> Vec<(String, f64)> {
    let mut cols = vec![
        ("lp_error".to_string(), row.lp_error),
        ("x0_error".to_string(), row.x0_error),
        ("energy_gap".to_string(), row.energy_gap),
        ("min_gap".to_string(), row.min_gap),
    ];
    for (k, g) in row.flux_gaps.iter().enumerate() {
        cols.push((format!("flux_gap_{}", k + 1), *g));
    }
    cols
}

struct Limit {
    u: DiscreteFunction,
    energy: f64,
    min_value: f64,
    fluxes: Vec<f64>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mesh = build_mesh(spec.omega, spec.n_cells, &spec.kernel)?;
    let quad = assemble_quadrature(&mesh, &spec.kernel, spec.near_diag_levels, spec.gauss_order)?;
    let f = spec.functional.build(&mesh)?;
    let limit_field = spec.sequence.weak_star_limit()?;
    let members = spec
        .indices
        .iter()
        .map(|&j| spec.sequence.member(j))
        .collect::<Result<Vec<_>>>()?;

    let limit_op = NonlocalOperator::new(&quad, &limit_field)?;
    let zero = DiscreteFunction::zeros(&mesh);
    let (u, limit_solve) = solve_from(&limit_op, &f, &zero, &spec.solver)?;
    if !limit_solve.converged {
        return Err(Error::LimitSolve(format!(
            "residual {:e} after {} iterations",
            limit_solve.final_residual_norm, limit_solve.iterations
        )));
    }
    let limit_flux = limit_op.flux(&u)?;
    let limit = Limit {
        energy: limit_op.energy(&u)?,
        min_value: limit_solve.objective_value,
        fluxes: spec
            .test_functions
            .iter()
            .map(|g| flux_pairing(&quad, &limit_flux, |xp, x| g.eval(xp, x)))
            .collect::<Result<_>>()?,
        u,
    };

    let rows = spec
        .indices
        .par_iter()
        .zip(members.par_iter())
        .map(|(&j, h_j)| member_row(spec, &quad, &f, &limit_op, &limit, j, h_j))
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        p: spec.p,
        test_functions: spec.test_functions.clone(),
        nodes: mesh.nodes().to_vec(),
        limit_solution: limit.u.values().to_vec(),
        limit_energy: limit.energy,
        limit_min_value: limit.min_value,
        limit_solve,
        rows,
    })
}

fn member_row(
    spec: &ExperimentSpec,
    quad: &NonlocalQuadrature,
    f: &Functional,
    limit_op: &NonlocalOperator<'_>,
    limit: &Limit,
    j: u32,
    h_j: &CoefficientField,
) -> Result<ExperimentRow> {
    let clock = Instant::now();
    let mesh = quad.mesh();
    let op = NonlocalOperator::new(quad, h_j)?;
    let (u_j, rep) = solve_from(&op, f, &DiscreteFunction::zeros(mesh), &spec.solver)?;
    let err = u_j.sub(&limit.u)?;
    let flux = op.flux(&u_j)?;
    let flux_gaps = spec
        .test_functions
        .iter()
        .zip(&limit.fluxes)
        .map(|(g, lim)| Ok((flux_pairing(quad, &flux, |xp, x| g.eval(xp, x))? - lim).abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRow {
        j,
        lp_error: err.lp_norm(mesh, spec.p)?,
        x0_error: op.energy(&err)?.max(0.0).powf(1.0 / spec.p),
        energy_gap: (op.energy(&u_j)? - limit.energy).abs(),
        min_gap: (rep.objective_value - limit.min_value).abs(),
        flux_gaps,
        min_value: rep.objective_value,
        member_at_limit: op.objective(f, &limit.u)?,
        limit_at_member: limit_op.objective(f, &u_j)?,
        converged: rep.converged,
        iterations: rep.iterations,
        final_residual_norm: rep.final_residual_norm,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Header of the CSV table for `n_flux` test functions.
pub fn csv_header(n_flux: usize, include_wall_time: bool) -> Vec<String> {
    let mut h: Vec<String> = ["j", "lp_error", "x0_error", "energy_gap", "min_gap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n_flux).map(|k| format!("flux_gap_{k}")));
    if include_wall_time {
        h.push("wall_time".into());
    }
    h
}

/// One row per `j`. Wall time is optional since it differs between runs.
pub fn report_to_csv(report: &ExperimentReport, include_wall_time: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| -> Error { Error::Parse(e.to_string()) };
    let write = |w: &mut csv::Writer<Vec<u8>>| -> Result<()> {
        w.write_record(csv_header(report.test_functions.len(), include_wall_time))
            .map_err(io)?;
        for row in &report.rows {
            let mut rec = vec![row.j.to_string()];
            rec.extend(
                [row.lp_error, row.x0_error, row.energy_gap, row.min_gap]
                    .iter()
                    .chain(&row.flux_gaps)
                    .map(|v| format!("{v:.16e}")),
            );
            if include_wall_time {
                rec.push(format!("{:.16e}", row.wall_time));
            }
            w.write_record(&rec).map_err(io)?;
        }
        Ok(())
    };
    // writing into memory cannot fail
    write(&mut w).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("ascii csv")
}

/// A row read back from [`report_to_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub j: u32,
    pub lp_error: f64,
    pub x0_error: f64,
    pub energy_gap: f64,
    pub min_gap: f64,
    pub flux_gaps: Vec<f64>,
    pub wall_time: Option<f64>,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_wall = header.last().map(String::as_str) == Some("wall_time");
    let n_flux = header
        .len()
        .checked_sub(5 + usize::from(has_wall))
        .ok_or_else(|| Error::Parse(format!("unexpected header {header:?}")))?;
    if csv_header(n_flux, has_wall) != header {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let f: Vec<&str> = rec.iter().collect();
            Ok(CsvRow {
                j: f[0]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad index {:?}: {e}", f[0])))?,
                lp_error: num(f[1])?,
                x0_error: num(f[2])?,
                energy_gap: num(f[3])?,
                min_gap: num(f[4])?,
                flux_gaps: f[5..5 + n_flux]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Result<_>>()?,
                wall_time: if has_wall {
                    Some(num(f[f.len() - 1])?)
                } else {
                    None
                },
            })
        })
        .collect()
}

/// `(j, value)` pairs for one named error column.
pub fn metric_series(report: &ExperimentReport, column: &str) -> Vec<(u32, f64)> {
    report
        .rows
        .iter()
        .filter_map(|r| {
            error_columns(r)
                .into_iter()
                .find(|(name, _)| name == column)
                .map(|(_, v)| (r.j, v))
        })
        .collect()
}
