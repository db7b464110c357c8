//! The nonlocal calculus on a fixed pair quadrature.
//!
//! Every object here (energy, the coefficient form, the objective, the
//! residual, gradients, fluxes, divergences and pairings) is a reduction over
//! the same quadrature entries. Identities such as the flux/gradient duality
//! or the integration-by-parts formula therefore hold to rounding error.
//!
//! Pair fields store, at entry `q`, the value `ψ(x'_q, x_q)` with the first
//! argument being the primed point. The value `ψ(x_q, x'_q)` lives at the
//! mirrored entry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::mesh::{DiscreteFunction, Mesh};
use crate::numeric::{signed_pow, stable_sum, Accumulator};
use crate::quadrature::{NonlocalQuadrature, PairEntry};

const CHUNK: usize = 16_384;

// Deterministic parallel sum: fixed chunks, compensated within and across.
fn reduce<F>(quad: &NonlocalQuadrature, f: F) -> f64
where
    F: Fn(usize, &PairEntry) -> f64 + Sync,
{
    let entries = quad.entries();
    let partials: Vec<f64> = entries
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = Accumulator::new();
            for (k, e) in chunk.iter().enumerate() {
                acc.add(f(c * CHUNK + k, e));
            }
            acc.value()
        })
        .collect();
    stable_sum(partials)
}

// Deterministic parallel scatter into node vectors.
fn scatter<F>(quad: &NonlocalQuadrature, f: F) -> Vec<f64>
where
    F: Fn(usize, &PairEntry, &mut [f64]) + Sync,
{
    let n = quad.mesh().n_nodes();
    let entries = quad.entries();
    let partials: Vec<Vec<f64>> = entries
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut local = vec![0.0; n];
            for (k, e) in chunk.iter().enumerate() {
                f(c * CHUNK + k, e, &mut local);
            }
            local
        })
        .collect();
    let mut out = vec![0.0; n];
    for part in partials {
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out
}

// adds c * (φ_i(x') - φ_i(x)) for every node i
#[inline]
fn add_difference(e: &PairEntry, c: f64, out: &mut [f64]) {
    let cp = e.cell_prime as usize;
    let cx = e.cell as usize;
    out[cp] += c * (1.0 - e.t_prime);
    out[cp + 1] += c * e.t_prime;
    out[cx] -= c * (1.0 - e.t);
    out[cx + 1] -= c * e.t;
}

fn check_mesh(quad: &NonlocalQuadrature, u: &DiscreteFunction) -> Result<()> {
    if u.key() == quad.mesh().key() {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

/// Coefficient values `h(x'_q, x_q)` on every quadrature entry.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    values: Vec<f64>,
    h_min: f64,
    h_max: f64,
}

impl CoefficientTable {
    /// Evaluates `field` on the even entries and copies to their mirrors, so the
    /// table is exactly symmetric.
    pub fn new(quad: &NonlocalQuadrature, field: &CoefficientField) -> Result<Self> {
        let entries = quad.entries();
        let halves: Vec<f64> = entries
            .par_chunks(2)
            .map(|pair| field.eval(pair[0].x, pair[0].x_prime))
            .collect::<Result<_>>()?;
        let values = halves.iter().flat_map(|&v| [v, v]).collect();
        Ok(Self {
            values,
            h_min: field.h_min(),
            h_max: field.h_max(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn h_min(&self) -> f64 {
        self.h_min
    }
    pub fn h_max(&self) -> f64 {
        self.h_max
    }
}

/// A scalar per quadrature entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PairField {
    quad_id: u64,
    values: Vec<f64>,
    antisymmetric: bool,
}

impl PairField {
    /// Wraps raw entry values; `antisymmetric` is verified, not trusted.
    pub fn new(quad: &NonlocalQuadrature, values: Vec<f64>) -> Result<Self> {
        if values.len() != quad.len() {
            return Err(invalid(
                "values",
                format!("expected {} pair values, got {}", quad.len(), values.len()),
            ));
        }
        let antisymmetric = first_asymmetry(&values).is_none();
        Ok(Self {
            quad_id: quad.id(),
            values,
            antisymmetric,
        })
    }

    /// Antisymmetric field from values on the even entries.
    pub fn antisymmetric_from_half(quad: &NonlocalQuadrature, half: &[f64]) -> Result<Self> {
        if 2 * half.len() != quad.len() {
            return Err(invalid("values", "need one value per mirrored pair"));
        }
        Ok(Self {
            quad_id: quad.id(),
            values: half.iter().flat_map(|&v| [v, -v]).collect(),
            antisymmetric: true,
        })
    }

    pub fn zeros(quad: &NonlocalQuadrature) -> Self {
        Self {
            quad_id: quad.id(),
            values: vec![0.0; quad.len()],
            antisymmetric: true,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn is_antisymmetric(&self) -> bool {
        self.antisymmetric
    }

    fn check(&self, quad: &NonlocalQuadrature) -> Result<()> {
        if self.quad_id != quad.id() || self.values.len() != quad.len() {
            return Err(Error::PairFieldMismatch);
        }
        Ok(())
    }

    fn require_antisymmetric(&self) -> Result<()> {
        match first_asymmetry(&self.values) {
            None => Ok(()),
            Some(entry) => Err(Error::NotAntisymmetric { entry }),
        }
    }

    /// Writes `x, x_prime, value`.
    pub fn write_csv<W: std::io::Write>(
        &self,
        quad: &NonlocalQuadrature,
        mut out: W,
    ) -> Result<()> {
        self.check(quad)?;
        writeln!(out, "x,x_prime,value")?;
        for (e, v) in quad.entries().iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", e.x, e.x_prime, v)?;
        }
        Ok(())
    }
}

fn first_asymmetry(values: &[f64]) -> Option<usize> {
    values
        .chunks(2)
        .position(|pair| pair.len() != 2 || pair[0] != -pair[1])
        .map(|i| 2 * i)
}

/// Right-hand side `f ∈ X₀'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// Node values of a density `g`; `⟨f, v⟩ = ∫_Ω g v dx` by nodal quadrature.
    Density(Vec<f64>),
    /// One weight per interior node; `⟨f, v⟩ = Σ w_i v(x_i)`.
    NodeWeights(Vec<f64>),
}

impl Functional {
    pub fn constant_density(mesh: &Mesh, value: f64) -> Self {
        Self::Density(vec![value; mesh.n_nodes()])
    }

    pub fn zero(mesh: &Mesh) -> Self {
        Self::constant_density(mesh, 0.0)
    }

    /// `⟨f, φ_i⟩` for every node; zero on collar nodes.
    pub fn load_vector(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let mut load = vec![0.0; mesh.n_nodes()];
        match self {
            Self::Density(g) => {
                if g.len() != mesh.n_nodes() {
                    return Err(invalid("functional", "density needs one value per node"));
                }
                let h = mesh.spacing();
                for &i in mesh.interior_nodes() {
                    load[i] = h * g[i];
                }
            }
            Self::NodeWeights(w) => {
                if w.len() != mesh.interior_nodes().len() {
                    return Err(invalid("functional", "need one weight per interior node"));
                }
                for (&i, &wi) in mesh.interior_nodes().iter().zip(w) {
                    load[i] = wi;
                }
            }
        }
        Ok(load)
    }

    pub fn pair(&self, mesh: &Mesh, v: &DiscreteFunction) -> Result<f64> {
        if v.key() != mesh.key() {
            return Err(Error::MeshMismatch);
        }
        let load = self.load_vector(mesh)?;
        Ok(stable_sum(load.iter().zip(v.values()).map(|(a, b)| a * b)))
    }
}

/// Mesh-independent description of a right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// Constant density over `Ω`.
    Density { value: f64 },
    /// Explicit weights on the interior nodes, in order.
    NodeWeights { weights: Vec<f64> },
}

impl FunctionalSpec {
    pub fn build(&self, mesh: &Mesh) -> Result<Functional> {
        let f = match self {
            Self::Density { value } => {
                if !value.is_finite() {
                    return Err(invalid("functional.value", "must be finite"));
                }
                Functional::constant_density(mesh, *value)
            }
            Self::NodeWeights { weights } => {
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(invalid("functional.weights", "must be finite"));
                }
                Functional::NodeWeights(weights.clone())
            }
        };
        f.load_vector(mesh)?;
        Ok(f)
    }
}

/// `B(u, u) = Σ_q w_q |u(x'_q) - u(x_q)|^p`.
pub fn energy_b(quad: &NonlocalQuadrature, u: &DiscreteFunction) -> Result<f64> {
    check_mesh(quad, u)?;
    let p = quad.p();
    Ok(reduce(quad, |_, e| {
        e.weight * e.difference(u).abs().powf(p)
    }))
}

/// The nonlinear operator `L_h` on a fixed quadrature and coefficient.
#[derive(Debug, Clone)]
pub struct NonlocalOperator<'a> {
    quad: &'a NonlocalQuadrature,
    h: CoefficientTable,
}

impl<'a> NonlocalOperator<'a> {
    pub fn new(quad: &'a NonlocalQuadrature, field: &CoefficientField) -> Result<Self> {
        Ok(Self {
            quad,
            h: CoefficientTable::new(quad, field)?,
        })
    }

    pub fn quadrature(&self) -> &'a NonlocalQuadrature {
        self.quad
    }
    pub fn mesh(&self) -> &'a Mesh {
        self.quad.mesh()
    }
    pub fn p(&self) -> f64 {
        self.quad.p()
    }
    pub fn coefficients(&self) -> &CoefficientTable {
        &self.h
    }

    /// `B_h(u, v) = Σ_q w_q h_q |Δu|^{p-2} Δu Δv`.
    pub fn form(&self, u: &DiscreteFunction, v: &DiscreteFunction) -> Result<f64> {
        check_mesh(self.quad, u)?;
        check_mesh(self.quad, v)?;
        let p = self.p();
        let h = self.h.values();
        Ok(reduce(self.quad, |q, e| {
            e.weight * h[q] * signed_pow(e.difference(u), p) * e.difference(v)
        }))
    }

    /// `B_h(u, u)`.
    pub fn energy(&self, u: &DiscreteFunction) -> Result<f64> {
        check_mesh(self.quad, u)?;
        let p = self.p();
        let h = self.h.values();
        Ok(reduce(self.quad, |q, e| {
            e.weight * h[q] * e.difference(u).abs().powf(p)
        }))
    }

    /// `J_h(w) = B_h(w, w) / p - ⟨f, w⟩` for `w` in the discrete `X₀`.
    pub fn objective(&self, f: &Functional, w: &DiscreteFunction) -> Result<f64> {
        w.check_constrained(self.mesh())?;
        Ok(self.energy(w)? / self.p() - f.pair(self.mesh(), w)?)
    }

    /// `B_h(u, φ_i)` for every node `i`.
    pub fn apply(&self, u: &DiscreteFunction) -> Result<Vec<f64>> {
        check_mesh(self.quad, u)?;
        let p = self.p();
        let h = self.h.values();
        Ok(scatter(self.quad, |q, e, out| {
            let c = e.weight * h[q] * signed_pow(e.difference(u), p);
            add_difference(e, c, out);
        }))
    }

    /// Galerkin residual `B_h(u, φ_i) - ⟨f, φ_i⟩` over the interior nodes,
    /// which is also the gradient of `J_h` in the interior node values.
    pub fn residual(&self, f: &Functional, u: &DiscreteFunction) -> Result<Vec<f64>> {
        u.check_constrained(self.mesh())?;
        let applied = self.apply(u)?;
        let load = f.load_vector(self.mesh())?;
        Ok(self
            .mesh()
            .interior_nodes()
            .iter()
            .map(|&i| applied[i] - load[i])
            .collect())
    }

    /// Nonlocal flux `Ψ_h(x', x) = h k^{1/p'} |Δu|^{p-2} Δu / r^{p-1}`.
    pub fn flux(&self, u: &DiscreteFunction) -> Result<PairField> {
        check_mesh(self.quad, u)?;
        let p = self.p();
        let h = self.h.values();
        let entries = self.quad.entries();
        let half: Vec<f64> = entries
            .par_chunks(2)
            .enumerate()
            .map(|(m, pair)| {
                let e = &pair[0];
                h[2 * m] * e.flux_factor * signed_pow(e.difference(u), p)
            })
            .collect();
        PairField::antisymmetric_from_half(self.quad, &half)
    }

    /// Splits `⟨Ψ_{h_j}(u_j), G⟩` into the part driven by `u_j - u` and the
    /// part carrying `u` only. Here `self` is the operator with `h_j`.
    pub fn flux_decomposition<G>(
        &self,
        u_j: &DiscreteFunction,
        u: &DiscreteFunction,
        g: G,
    ) -> Result<FluxDecomposition>
    where
        G: Fn(f64, f64) -> f64 + Sync,
    {
        check_mesh(self.quad, u_j)?;
        check_mesh(self.quad, u)?;
        let p = self.p();
        let h = self.h.values();
        let first = reduce(self.quad, |q, e| {
            let diff = signed_pow(e.difference(u_j), p) - signed_pow(e.difference(u), p);
            e.geometry_weight * h[q] * e.flux_factor * diff * g(e.x_prime, e.x)
        });
        let second = reduce(self.quad, |q, e| {
            e.geometry_weight
                * h[q]
                * e.flux_factor
                * signed_pow(e.difference(u), p)
                * g(e.x_prime, e.x)
        });
        Ok(FluxDecomposition { first, second })
    }
}

/// `I = I₁ + I₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxDecomposition {
    pub first: f64,
    pub second: f64,
}

impl FluxDecomposition {
    pub fn total(&self) -> f64 {
        self.first + self.second
    }
}

pub fn form_bh(
    quad: &NonlocalQuadrature,
    h: &CoefficientField,
    u: &DiscreteFunction,
    v: &DiscreteFunction,
) -> Result<f64> {
    NonlocalOperator::new(quad, h)?.form(u, v)
}

pub fn objective_j(
    quad: &NonlocalQuadrature,
    h: &CoefficientField,
    f: &Functional,
    w: &DiscreteFunction,
) -> Result<f64> {
    NonlocalOperator::new(quad, h)?.objective(f, w)
}

pub fn residual(
    quad: &NonlocalQuadrature,
    h: &CoefficientField,
    f: &Functional,
    u: &DiscreteFunction,
) -> Result<Vec<f64>> {
    NonlocalOperator::new(quad, h)?.residual(f, u)
}

pub fn flux(
    quad: &NonlocalQuadrature,
    h: &CoefficientField,
    u: &DiscreteFunction,
) -> Result<PairField> {
    NonlocalOperator::new(quad, h)?.flux(u)
}

/// `D u(x', x) = k^{1/p}(r) (u(x') - u(x)) / r`.
pub fn nonlocal_gradient(quad: &NonlocalQuadrature, u: &DiscreteFunction) -> Result<PairField> {
    check_mesh(quad, u)?;
    let half: Vec<f64> = quad
        .entries()
        .par_chunks(2)
        .map(|pair| pair[0].gradient_factor * pair[0].difference(u))
        .collect();
    PairField::antisymmetric_from_half(quad, &half)
}

/// `Σ_q ŵ_q |D u|^p` with the geometry-only weights.
pub fn gradient_norm_pow(quad: &NonlocalQuadrature, du: &PairField) -> Result<f64> {
    du.check(quad)?;
    let p = quad.p();
    let v = du.values();
    Ok(reduce(quad, |q, e| e.geometry_weight * v[q].abs().powf(p)))
}

/// `Σ_q ŵ_q a_q b_q`.
pub fn pair_inner(quad: &NonlocalQuadrature, a: &PairField, b: &PairField) -> Result<f64> {
    a.check(quad)?;
    b.check(quad)?;
    let (va, vb) = (a.values(), b.values());
    Ok(reduce(quad, |q, e| e.geometry_weight * va[q] * vb[q]))
}

/// Nonlocal divergence tested against every nodal hat:
/// `∫ φ_i(x) ∫ k^{1/p} (ψ(x, x') - ψ(x', x)) / r dx' dx`.
pub fn nonlocal_divergence(quad: &NonlocalQuadrature, psi: &PairField) -> Result<Vec<f64>> {
    psi.check(quad)?;
    psi.require_antisymmetric()?;
    let v = psi.values();
    Ok(scatter(quad, |q, e, out| {
        let c = e.geometry_weight * e.gradient_factor * (v[NonlocalQuadrature::mirror(q)] - v[q]);
        let cell = e.cell as usize;
        out[cell] += c * (1.0 - e.t);
        out[cell + 1] += c * e.t;
    }))
}

/// The same divergence through `-2 ∫ k^{1/p} ψ(x', x) / r dx'`.
pub fn nonlocal_divergence_folded(quad: &NonlocalQuadrature, psi: &PairField) -> Result<Vec<f64>> {
    psi.check(quad)?;
    psi.require_antisymmetric()?;
    let v = psi.values();
    Ok(scatter(quad, |q, e, out| {
        let c = -2.0 * e.geometry_weight * e.gradient_factor * v[q];
        let cell = e.cell as usize;
        out[cell] += c * (1.0 - e.t);
        out[cell + 1] += c * e.t;
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartsGap {
    /// `∫ dψ v dx`.
    pub lhs: f64,
    /// `∬ ψ D v dx' dx`.
    pub rhs: f64,
    pub gap: f64,
}

impl PartsGap {
    pub fn relative(&self) -> f64 {
        self.gap / (self.lhs.abs() + 1.0)
    }
}

pub fn integration_by_parts_gap(
    quad: &NonlocalQuadrature,
    psi: &PairField,
    v: &DiscreteFunction,
) -> Result<PartsGap> {
    v.check_constrained(quad.mesh())?;
    let div = nonlocal_divergence(quad, psi)?;
    let lhs = stable_sum(div.iter().zip(v.values()).map(|(d, vi)| d * vi));
    let values = psi.values();
    let rhs = reduce(quad, |q, e| {
        e.geometry_weight * values[q] * e.gradient_factor * e.difference(v)
    });
    Ok(PartsGap {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// `∬ ψ(x', x) G(x', x) dx' dx` with the geometry weights. `g` takes
/// `(x', x)`.
pub fn flux_pairing<G>(quad: &NonlocalQuadrature, psi: &PairField, g: G) -> Result<f64>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    psi.check(quad)?;
    let values = psi.values();
    Ok(reduce(quad, |q, e| {
        e.geometry_weight * values[q] * g(e.x_prime, e.x)
    }))
}

/// Outcome of the scalar monotonicity sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub p: f64,
    pub samples: u64,
    /// Pairs with `Φ(a, b) < 0`.
    pub pairing_violations: u64,
    /// Pairs with `Φ(a, b) < 2^{2-p} |a - b|^p`; only checked for `p >= 2`.
    pub lower_bound_violations: Option<u64>,
    /// Smallest observed `Φ / ({|a| + |b|}^{p-2} |a - b|²)`.
    pub sandwich_lower: f64,
    /// Largest observed ratio.
    pub sandwich_upper: f64,
    pub min_pairing: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.pairing_violations == 0
            && self.lower_bound_violations.unwrap_or(0) == 0
            && self.sandwich_lower > 0.0
            && self.sandwich_upper.is_finite()
    }
}

/// `Φ(a, b) = (|a|^{p-2} a - |b|^{p-2} b)(a - b)`.
#[inline]
pub fn monotone_pairing(a: f64, b: f64, p: f64) -> f64 {
    (signed_pow(a, p) - signed_pow(b, p)) * (a - b)
}

pub fn monotonicity_check(p: f64, sample_count: u64) -> Result<CheckReport> {
    monotonicity_check_seeded(p, sample_count, 0x5eed)
}

/// Samples pairs uniformly in `[-10, 10]²`. Bounds that hold with equality
/// (for instance `a = -b`) are compared with a relative slack of `1e-12`.
pub fn monotonicity_check_seeded(p: f64, sample_count: u64, seed: u64) -> Result<CheckReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("monotonicity needs p > 1, got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairing_violations = 0;
    let mut lower_bound_violations = 0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut min_pairing = f64::INFINITY;
    let lower_const = 2f64.powf(2.0 - p);
    for _ in 0..sample_count {
        let a: f64 = rng.gen_range(-10.0..=10.0);
        let b: f64 = rng.gen_range(-10.0..=10.0);
        let phi = monotone_pairing(a, b, p);
        min_pairing = min_pairing.min(phi);
        if phi < 0.0 {
            pairing_violations += 1;
        }
        let d = (a - b).abs();
        if p >= 2.0 && phi < lower_const * d.powf(p) * (1.0 - 1e-12) {
            lower_bound_violations += 1;
        }
        if d > 0.0 {
            let ratio = phi / ((a.abs() + b.abs()).powf(p - 2.0) * d * d);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok(CheckReport {
        p,
        samples: sample_count,
        pairing_violations,
        lower_bound_violations: (p >= 2.0).then_some(lower_bound_violations),
        sandwich_lower: lo,
        sandwich_upper: hi,
        min_pairing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::quadrature::assemble_quadrature;

    fn setup(p: f64, n: usize, delta: f64) -> NonlocalQuadrature {
        let k = Kernel::fractional(p, 0.5, 1.0, delta).unwrap();
        let mesh = Mesh::new((0.0, 1.0), n, delta).unwrap();
        assemble_quadrature(&mesh, &k, 4, 3).unwrap()
    }

    fn random_constrained(mesh: &Mesh, rng: &mut ChaCha8Rng) -> DiscreteFunction {
        let vals: Vec<f64> = (0..mesh.interior_nodes().len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        DiscreteFunction::from_interior(mesh, &vals).unwrap()
    }

    #[test]
    fn energy_of_constants_vanishes() {
        let quad = setup(2.0, 8, 0.3);
        let zero = DiscreteFunction::zeros(quad.mesh());
        assert_eq!(energy_b(&quad, &zero).unwrap(), 0.0);
        let c = DiscreteFunction::interpolate(quad.mesh(), |_| 3.7);
        assert_eq!(energy_b(&quad, &c).unwrap(), 0.0);
    }

    #[test]
    fn mesh_mismatch_is_reported() {
        let quad = setup(2.0, 8, 0.3);
        let other = Mesh::new((0.0, 1.0), 10, 0.3).unwrap();
        let u = DiscreteFunction::zeros(&other);
        assert!(matches!(energy_b(&quad, &u), Err(Error::MeshMismatch)));
    }

    #[test]
    fn form_reduces_to_energy_and_vanishes_at_zero() {
        let quad = setup(3.0, 8, 0.3);
        let one = CoefficientField::constant(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_constrained(quad.mesh(), &mut rng);
        let v = random_constrained(quad.mesh(), &mut rng);
        let b = form_bh(&quad, &one, &u, &u).unwrap();
        assert!((b - energy_b(&quad, &u).unwrap()).abs() < 1e-13 * b);
        let zero = DiscreteFunction::zeros(quad.mesh());
        assert_eq!(form_bh(&quad, &one, &zero, &v).unwrap(), 0.0);
    }

    #[test]
    fn objective_sign_and_constraint() {
        let quad = setup(2.0, 8, 0.3);
        let one = CoefficientField::constant(1.0).unwrap();
        let f0 = Functional::zero(quad.mesh());
        let zero = DiscreteFunction::zeros(quad.mesh());
        assert_eq!(objective_j(&quad, &one, &f0, &zero).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_constrained(quad.mesh(), &mut rng);
        assert!(objective_j(&quad, &one, &f0, &w).unwrap() > 0.0);
        let bad = DiscreteFunction::interpolate(quad.mesh(), |_| 1.0);
        assert!(matches!(
            objective_j(&quad, &one, &f0, &bad),
            Err(Error::Constraint { .. })
        ));
    }

    #[test]
    fn residual_vanishes_for_zero_data() {
        let quad = setup(2.0, 8, 0.3);
        let one = CoefficientField::constant(1.0).unwrap();
        let r = residual(
            &quad,
            &one,
            &Functional::zero(quad.mesh()),
            &DiscreteFunction::zeros(quad.mesh()),
        )
        .unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_and_flux_are_antisymmetric() {
        let quad = setup(3.0, 8, 0.3);
        let field = CoefficientField::separable_oscillation(1.0, 0.5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_constrained(quad.mesh(), &mut rng);
        let du = nonlocal_gradient(&quad, &u).unwrap();
        let psi = flux(&quad, &field, &u).unwrap();
        for f in [&du, &psi] {
            assert!(f.is_antisymmetric());
            for q in (0..quad.len()).step_by(2) {
                assert_eq!(f.values()[q], -f.values()[q + 1]);
            }
        }
        let zero = DiscreteFunction::zeros(quad.mesh());
        assert!(nonlocal_gradient(&quad, &zero)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(flux(&quad, &field, &zero)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn flux_equals_gradient_for_p_two() {
        let quad = setup(2.0, 8, 0.3);
        let one = CoefficientField::constant(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_constrained(quad.mesh(), &mut rng);
        let du = nonlocal_gradient(&quad, &u).unwrap();
        let psi = flux(&quad, &one, &u).unwrap();
        for (a, b) in du.values().iter().zip(psi.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_norm_reproduces_energy() {
        for p in [1.5, 2.0, 3.0] {
            let quad = setup(p, 8, 0.3);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let u = random_constrained(quad.mesh(), &mut rng);
            let du = nonlocal_gradient(&quad, &u).unwrap();
            let lhs = gradient_norm_pow(&quad, &du).unwrap();
            let rhs = energy_b(&quad, &u).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * rhs, "p={p}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn divergence_forms_agree_and_reject_symmetric_fields() {
        let quad = setup(2.0, 8, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let half: Vec<f64> = (0..quad.len() / 2)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let psi = PairField::antisymmetric_from_half(&quad, &half).unwrap();
        let a = nonlocal_divergence(&quad, &psi).unwrap();
        let b = nonlocal_divergence_folded(&quad, &psi).unwrap();
        assert_eq!(a, b);
        let zero = PairField::zeros(&quad);
        assert!(nonlocal_divergence(&quad, &zero)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let sym = PairField::new(&quad, vec![1.0; quad.len()]).unwrap();
        assert!(!sym.is_antisymmetric());
        assert!(matches!(
            nonlocal_divergence(&quad, &sym),
            Err(Error::NotAntisymmetric { entry: 0 })
        ));
    }

    #[test]
    fn parts_gap_on_single_node_and_zero_field() {
        let quad = setup(2.0, 8, 0.3);
        let mesh = quad.mesh();
        let zero = PairField::zeros(&quad);
        let v = DiscreteFunction::hat(mesh, mesh.interior_nodes()[2]);
        let g = integration_by_parts_gap(&quad, &zero, &v).unwrap();
        assert_eq!((g.lhs, g.rhs, g.gap), (0.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let half: Vec<f64> = (0..quad.len() / 2)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let psi = PairField::antisymmetric_from_half(&quad, &half).unwrap();
        let div = nonlocal_divergence(&quad, &psi).unwrap();
        let g = integration_by_parts_gap(&quad, &psi, &v).unwrap();
        assert_eq!(g.lhs, div[mesh.interior_nodes()[2]]);
        assert!(g.relative() <= 1e-12);
    }

    #[test]
    fn pairing_with_zero_inputs() {
        let quad = setup(2.0, 8, 0.3);
        let zero = PairField::zeros(&quad);
        assert_eq!(flux_pairing(&quad, &zero, |_, _| 1.0).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_constrained(quad.mesh(), &mut rng);
        let du = nonlocal_gradient(&quad, &u).unwrap();
        assert_eq!(flux_pairing(&quad, &du, |_, _| 0.0).unwrap(), 0.0);
    }

    #[test]
    fn flux_decomposition_sums_to_pairing() {
        let quad = setup(3.0, 8, 0.3);
        let hj = CoefficientField::separable_oscillation(1.0, 0.5, 5).unwrap();
        let op = NonlocalOperator::new(&quad, &hj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let uj = random_constrained(quad.mesh(), &mut rng);
        let u = random_constrained(quad.mesh(), &mut rng);
        let g = |xp: f64, x: f64| (x * 3.0).sin() * (1.0 + xp);
        let dec = op.flux_decomposition(&uj, &u, g).unwrap();
        let direct = flux_pairing(&quad, &op.flux(&uj).unwrap(), g).unwrap();
        assert!((dec.total() - direct).abs() < 1e-12 * (direct.abs() + 1.0));
    }

    #[test]
    fn density_pairing_ignores_collar() {
        let mesh = Mesh::new((0.0, 1.0), 4, 0.25).unwrap();
        let f = Functional::constant_density(&mesh, 1.0);
        let collar_only = DiscreteFunction::hat(&mesh, mesh.collar_nodes()[0]);
        assert_eq!(f.pair(&mesh, &collar_only).unwrap(), 0.0);
        let w = Functional::NodeWeights(vec![1.0, 2.0, 3.0]);
        let v = DiscreteFunction::from_interior(&mesh, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(w.pair(&mesh, &v).unwrap(), 6.0);
    }

    #[test]
    fn monotone_pairing_examples() {
        assert_eq!(monotone_pairing(1.3, 1.3, 2.7), 0.0);
        assert_eq!(monotone_pairing(2.0, 1.0, 3.0), 3.0);
        assert!(monotone_pairing(2.0, 1.0, 3.0) >= 0.5);
        let rep = monotonicity_check(2.0, 10_000).unwrap();
        assert!((rep.sandwich_lower - 1.0).abs() < 1e-12);
        assert!((rep.sandwich_upper - 1.0).abs() < 1e-12);
        assert!(matches!(monotonicity_check(1.0, 10), Err(Error::Domain(_))));
    }
}
