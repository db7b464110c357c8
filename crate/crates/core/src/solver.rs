//! Discrete Dirichlet problems: minimization of `J_h` over the discrete `X₀`
//! and the nonlocal Poincaré constant.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::forms::{Functional, NonlocalOperator};
use crate::mesh::{DiscreteFunction, Mesh};
use crate::numeric::{signed_pow, stable_sum, GaussRule};
use crate::quadrature::NonlocalQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Conjugate gradients when `p = 2`, descent otherwise.
    AutoLinear,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Max-norm of the residual over interior hats.
    pub tol: f64,
    pub max_iters: usize,
    pub method: SolveMethod,
    pub line_search: LineSearch,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            method: SolveMethod::AutoLinear,
            line_search: LineSearch::default(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid(
                "solver.tol",
                format!("need tol > 0, got {}", self.tol),
            ));
        }
        if self.max_iters == 0 {
            return Err(invalid("solver.max_iters", "need at least one iteration"));
        }
        let ls = self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(invalid("solver.line_search.shrink", "need 0 < shrink < 1"));
        }
        if !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
            return Err(invalid(
                "solver.line_search.sufficient_decrease",
                "need 0 < c < 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodUsed {
    ConjugateGradient,
    Descent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    /// `m = J_h(u)`.
    pub objective_value: f64,
    pub converged: bool,
    pub method: MethodUsed,
    /// Seconds. Not part of the serialized report.
    #[serde(skip)]
    pub wall_time: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    stable_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn check_p(quad: &NonlocalQuadrature, p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("need p > 1, got {p}")));
    }
    if p != quad.p() {
        return Err(invalid(
            "p",
            format!("p = {p} differs from the kernel exponent {}", quad.p()),
        ));
    }
    Ok(())
}

/// Solves `L_h u = f` in the discrete `X₀`, starting from zero.
pub fn solve(
    quad: &NonlocalQuadrature,
    h: &CoefficientField,
    f: &Functional,
    p: f64,
    opts: &SolveOptions,
) -> Result<(DiscreteFunction, SolveReport)> {
    check_p(quad, p)?;
    let op = NonlocalOperator::new(quad, h)?;
    solve_from(&op, f, &DiscreteFunction::zeros(quad.mesh()), opts)
}

/// Solves from a given constrained starting iterate.
pub fn solve_from(
    op: &NonlocalOperator<'_>,
    f: &Functional,
    start: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<(DiscreteFunction, SolveReport)> {
    opts.validate()?;
    start.check_constrained(op.mesh())?;
    let clock = Instant::now();
    let use_cg = opts.method == SolveMethod::AutoLinear && op.p() == 2.0;
    let (u, mut report) = if use_cg {
        conjugate_gradient(op, f, start, opts)?
    } else {
        descent(op, f, start, opts, |_, _| {})?
    };
    report.wall_time = clock.elapsed().as_secs_f64();
    Ok((u, report))
}

fn conjugate_gradient(
    op: &NonlocalOperator<'_>,
    f: &Functional,
    start: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<(DiscreteFunction, SolveReport)> {
    let mesh = op.mesh();
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let full = DiscreteFunction::from_interior(mesh, x)?;
        Ok(mesh.restrict_interior(&op.apply(&full)?))
    };
    let mut x = mesh.restrict_interior(start.values());
    let mut iterations = 0;
    // residual convention r = b - A x; the reported residual is A x - b
    let mut r: Vec<f64> = op.residual(f, start)?.iter().map(|g| -g).collect();
    let mut dir = r.clone();
    let mut rr = dot(&r, &r);
    let converged = max_norm(&r) <= opts.tol;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let ad = apply(&dir)?;
        let dad = dot(&dir, &ad);
        if dad <= 0.0 {
            break;
        }
        let alpha = rr / dad;
        for ((xi, di), (ri, adi)) in x.iter_mut().zip(&dir).zip(r.iter_mut().zip(&ad)) {
            *xi += alpha * di;
            *ri -= alpha * adi;
        }
        if max_norm(&r) <= opts.tol {
            // confirm against the true residual; restart if drifted
            let u = DiscreteFunction::from_interior(mesh, &x)?;
            r = op.residual(f, &u)?.iter().map(|g| -g).collect();
            if max_norm(&r) <= opts.tol {
                break;
            }
            dir.clone_from(&r);
            rr = dot(&r, &r);
            continue;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (di, ri) in dir.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
    }
    let u = DiscreteFunction::from_interior(mesh, &x)?;
    let res = op.residual(f, &u)?;
    let final_residual_norm = max_norm(&res);
    Ok((
        u.clone(),
        SolveReport {
            iterations,
            final_residual_norm,
            objective_value: op.objective(f, &u)?,
            converged: final_residual_norm <= opts.tol,
            method: MethodUsed::ConjugateGradient,
            wall_time: 0.0,
        },
    ))
}

/// Descent on `J_h` with Armijo backtracking. For `p >= 2` the direction is
/// the negative gradient with a Barzilai-Borwein initial step. For `p < 2`
/// the gradient is only Hölder continuous where `Δu` vanishes, which stalls
/// steepest descent; the direction is then preconditioned by the curvature
/// of `J_h` (a weighted graph Laplacian) with a unit initial step.
/// `observe(iteration, objective)` sees every accepted iterate, the start
/// included.
pub fn descent<O>(
    op: &NonlocalOperator<'_>,
    f: &Functional,
    start: &DiscreteFunction,
    opts: &SolveOptions,
    mut observe: O,
) -> Result<(DiscreteFunction, SolveReport)>
where
    O: FnMut(usize, f64),
{
    opts.validate()?;
    let mesh = op.mesh();
    let objective =
        |x: &[f64]| -> Result<f64> { op.objective(f, &DiscreteFunction::from_interior(mesh, x)?) };
    let gradient = |x: &[f64]| -> Result<Vec<f64>> {
        op.residual(f, &DiscreteFunction::from_interior(mesh, x)?)
    };

    let mut x = mesh.restrict_interior(start.values());
    let mut value = objective(&x)?;
    let mut grad = gradient(&x)?;
    observe(0, value);
    let mut step = 1.0 / max_norm(&grad).max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let c = opts.line_search.sufficient_decrease;
    let precondition = op.p() < 2.0;

    while max_norm(&grad) > opts.tol && iterations < opts.max_iters {
        let metric = if precondition {
            curvature_direction(op, &x, &grad)?
        } else {
            None
        };
        let (dir, mut t) = match metric {
            Some(d) => (d, 1.0),
            None => (grad.iter().map(|g| -g).collect(), step),
        };
        // -slope > 0 along dir
        let slope = dot(&grad, &dir);
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let trial_value = objective(&trial)?;
            let slack = 16.0 * f64::EPSILON * value.abs().max(trial_value.abs());
            if trial_value <= value {
                if trial_value <= value + c * t * slope + slack {
                    accepted = Some((trial, trial_value, None));
                    break;
                }
                // Decrease lost in rounding: by convexity along the ray, a
                // slope at the trial point that still points forward means
                // J did not increase.
                if value - trial_value <= slack {
                    let trial_grad = gradient(&trial)?;
                    if dot(&trial_grad, &dir) <= 0.0 {
                        accepted = Some((trial, trial_value, Some(trial_grad)));
                        break;
                    }
                }
            }
            t *= opts.line_search.shrink;
        }
        let Some((next, next_value, next_grad)) = accepted else {
            break;
        };
        iterations += 1;
        let next_grad = match next_grad {
            Some(g) => g,
            None => gradient(&next)?,
        };
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { 2.0 * t };
        x = next;
        value = next_value;
        grad = next_grad;
        observe(iterations, value);
    }

    let final_residual_norm = max_norm(&grad);
    Ok((
        DiscreteFunction::from_interior(mesh, &x)?,
        SolveReport {
            iterations,
            final_residual_norm,
            objective_value: value,
            converged: final_residual_norm <= opts.tol,
            method: MethodUsed::Descent,
            wall_time: 0.0,
        },
    ))
}

// -P⁻¹ g with P = Σ_q w_q h_q (p-1) max(|Δu|, τ)^{p-2} ∇Δ ∇Δᵀ on the interior
// nodes, τ a tiny fraction of the largest |Δu|. None at u = 0 (no scale yet)
// or if P is numerically singular.
fn curvature_direction(
    op: &NonlocalOperator<'_>,
    x: &[f64],
    grad: &[f64],
) -> Result<Option<Vec<f64>>> {
    let mesh = op.mesh();
    let u = DiscreteFunction::from_interior(mesh, x)?;
    let entries = op.quadrature().entries();
    let h = op.coefficients().values();
    let p = op.p();
    let diffs: Vec<f64> = entries.iter().map(|e| e.difference(&u)).collect();
    let largest = diffs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if largest == 0.0 {
        return Ok(None);
    }
    let floor = 1e-12 * largest;
    let mut slot = vec![usize::MAX; mesh.n_nodes()];
    for (k, &i) in mesh.interior_nodes().iter().enumerate() {
        slot[i] = k;
    }
    let n = x.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for ((q, e), d) in entries.iter().enumerate().zip(&diffs) {
        let a = e.weight * h[q] * (p - 1.0) * d.abs().max(floor).powf(p - 2.0);
        let (cp, cx) = (e.cell_prime as usize, e.cell as usize);
        let grads = [
            (cp, 1.0 - e.t_prime),
            (cp + 1, e.t_prime),
            (cx, -(1.0 - e.t)),
            (cx + 1, -e.t),
        ];
        for &(i, gi) in &grads {
            let si = slot[i];
            if si == usize::MAX {
                continue;
            }
            for &(j, gj) in &grads {
                let sj = slot[j];
                if sj != usize::MAX {
                    m[(si, sj)] += a * gi * gj;
                }
            }
        }
    }
    let Some(chol) = Cholesky::new(m) else {
        return Ok(None);
    };
    let rhs = nalgebra::DVector::from_iterator(n, grad.iter().map(|g| -g));
    let dir = chol.solve(&rhs);
    let dir: Vec<f64> = dir.iter().copied().collect();
    if dir.iter().all(|v| v.is_finite()) && dot(grad, &dir) < 0.0 {
        Ok(Some(dir))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    /// Estimate of `inf B(w, w) / ‖w‖_{L^p(Ω)}^p` over the discrete `X₀`.
    pub estimate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the Rayleigh-quotient gradient relative to the estimate.
    pub final_gradient_norm: f64,
    /// Smallest generalized eigenvalue of (stiffness, mass), for `p = 2`.
    pub eigenvalue: Option<f64>,
}

impl PoincareReport {
    pub fn relative_gap(&self) -> Option<f64> {
        self.eigenvalue
            .map(|ev| (self.estimate - ev).abs() / ev.abs())
    }
}

// ∫_Ω |w|^p and its gradient in the interior node values.
fn lp_mass(mesh: &Mesh, w: &DiscreteFunction, p: f64) -> (f64, Vec<f64>) {
    let rule = GaussRule::unit(4);
    let h = mesh.spacing();
    let mut grad_full = vec![0.0; mesh.n_nodes()];
    let mut terms = Vec::with_capacity(mesh.n_cells() * rule.order());
    for cell in mesh.omega_cells() {
        for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
            let v = w.eval_local(cell, *t);
            terms.push(h * wt * v.abs().powf(p));
            let g = p * h * wt * signed_pow(v, p);
            grad_full[cell] += g * (1.0 - t);
            grad_full[cell + 1] += g * t;
        }
    }
    (stable_sum(terms), mesh.restrict_interior(&grad_full))
}

/// Estimates the Poincaré constant by normalized descent on the Rayleigh
/// quotient, starting from the first sine mode plus a seeded perturbation.
/// For `p = 2` the smallest generalized eigenvalue is reported alongside.
pub fn poincare_estimate(
    quad: &NonlocalQuadrature,
    p: f64,
    opts: &SolveOptions,
    seed: u64,
) -> Result<PoincareReport> {
    check_p(quad, p)?;
    opts.validate()?;
    let mesh = quad.mesh();
    let unit = CoefficientField::constant(1.0)?;
    let op = NonlocalOperator::new(quad, &unit)?;
    let (a, b) = mesh.omega();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let quotient = |x: &[f64]| -> Result<(f64, Vec<f64>, f64)> {
        let w = DiscreteFunction::from_interior(mesh, x)?;
        let energy = op.energy(&w)?;
        let grad_energy: Vec<f64> = mesh
            .restrict_interior(&op.apply(&w)?)
            .into_iter()
            .map(|g| p * g)
            .collect();
        let (mass, grad_mass) = lp_mass(mesh, &w, p);
        let r = energy / mass;
        let grad: Vec<f64> = grad_energy
            .iter()
            .zip(&grad_mass)
            .map(|(ge, gm)| (ge - r * gm) / mass)
            .collect();
        Ok((r, grad, mass))
    };
    let normalize = |x: &mut Vec<f64>, mass: f64| {
        let s = mass.powf(-1.0 / p);
        x.iter_mut().for_each(|v| *v *= s);
    };

    let mut x: Vec<f64> = mesh
        .interior_nodes()
        .iter()
        .map(|&i| {
            let t = (mesh.nodes()[i] - a) / (b - a);
            (std::f64::consts::PI * t).sin() * (1.0 + 0.05 * rng.gen_range(-1.0..1.0))
        })
        .collect();
    let (_, _, mass) = quotient(&x)?;
    normalize(&mut x, mass);
    let (mut r, mut grad, _) = quotient(&x)?;
    let mut step = 1.0 / max_norm(&grad).max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let c = opts.line_search.sufficient_decrease;
    let scaled = |g: &[f64], r: f64| max_norm(g) / r.abs().max(f64::MIN_POSITIVE);

    while scaled(&grad, r) > opts.tol && iterations < opts.max_iters {
        let gg = dot(&grad, &grad);
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let mut trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - t * gi).collect();
            let (trial_r, _, trial_mass) = quotient(&trial)?;
            let slack = 16.0 * f64::EPSILON * r.abs();
            if trial_r <= r - c * t * gg + slack && trial_r <= r {
                normalize(&mut trial, trial_mass);
                accepted = Some(trial);
                break;
            }
            t *= opts.line_search.shrink;
        }
        let Some(next) = accepted else {
            break;
        };
        iterations += 1;
        let (next_r, next_grad, _) = quotient(&next)?;
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { 2.0 * t };
        x = next;
        r = next_r;
        grad = next_grad;
    }

    let final_gradient_norm = scaled(&grad, r);
    let eigenvalue = if p == 2.0 {
        Some(smallest_generalized_eigenvalue(&op)?)
    } else {
        None
    };
    Ok(PoincareReport {
        estimate: r,
        iterations,
        converged: final_gradient_norm <= opts.tol,
        final_gradient_norm,
        eigenvalue,
    })
}

/// Smallest eigenvalue of `K v = λ M v` with `K` the `p = 2` Galerkin matrix
/// and `M` the P1 mass matrix of `Ω`, both on the interior nodes.
fn smallest_generalized_eigenvalue(op: &NonlocalOperator<'_>) -> Result<f64> {
    let mesh = op.mesh();
    let n = mesh.interior_nodes().len();
    let mut stiffness = DMatrix::<f64>::zeros(n, n);
    for (j, &node) in mesh.interior_nodes().iter().enumerate() {
        let column = mesh.restrict_interior(&op.apply(&DiscreteFunction::hat(mesh, node))?);
        for (i, v) in column.into_iter().enumerate() {
            stiffness[(i, j)] = v;
        }
    }
    let stiffness = 0.5 * (&stiffness + stiffness.transpose());
    let h = mesh.spacing();
    let mass = DMatrix::<f64>::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * h / 3.0,
        1 => h / 6.0,
        _ => 0.0,
    });
    let chol = Cholesky::new(mass).ok_or_else(|| Error::Domain("mass matrix not SPD".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular mass factor".into()))?;
    let reduced = &l_inv * stiffness * l_inv.transpose();
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let eig = SymmetricEigen::new(reduced);
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}
