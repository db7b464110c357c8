//! Uniform 1-D mesh of `Ω = (a, b)` extended by a collar of width at least the
//! kernel horizon, and piecewise-linear functions on it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::Kernel;
use crate::numeric::{Accumulator, GaussRule};

/// Identifies a mesh for compatibility checks between functions and
/// quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeshKey {
    n_nodes: usize,
    origin_bits: u64,
    spacing_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    a: f64,
    b: f64,
    n_cells: usize,
    collar_cells: usize,
    spacing: f64,
    nodes: Vec<f64>,
    interior_nodes: Vec<usize>,
    collar_nodes: Vec<usize>,
}

impl Mesh {
    /// Mesh of `(a, b)` with `n_cells` cells and `ceil(delta / spacing)` collar
    /// cells on each side.
    pub fn new(omega: (f64, f64), n_cells: usize, delta: f64) -> Result<Self> {
        let (a, b) = omega;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid("mesh.omega", format!("need a < b, got ({a}, {b})")));
        }
        if n_cells < 2 {
            return Err(invalid(
                "mesh.n_cells",
                format!("need at least 2 cells, got {n_cells}"),
            ));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(
                "kernel.delta",
                format!("need delta > 0, got {delta}"),
            ));
        }
        if delta > 10.0 * (b - a) {
            return Err(invalid(
                "kernel.delta",
                format!("horizon {delta} exceeds ten domain lengths; collar would dominate"),
            ));
        }
        let spacing = (b - a) / n_cells as f64;
        // guard against delta/spacing landing a rounding error above an integer
        let collar_cells = ((delta / spacing) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let total_cells = n_cells + 2 * collar_cells;
        let nodes: Vec<f64> = (0..=total_cells)
            .map(|i| a + (i as f64 - collar_cells as f64) * spacing)
            .collect();
        let interior_nodes: Vec<usize> = (collar_cells + 1..collar_cells + n_cells).collect();
        let collar_nodes: Vec<usize> = (0..=collar_cells)
            .chain(collar_cells + n_cells..=total_cells)
            .collect();
        Ok(Self {
            a,
            b,
            n_cells,
            collar_cells,
            spacing,
            nodes,
            interior_nodes,
            collar_nodes,
        })
    }

    pub fn omega(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn collar_cells(&self) -> usize {
        self.collar_cells
    }
    pub fn collar_width(&self) -> f64 {
        self.collar_cells as f64 * self.spacing
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    /// Cells of the whole meshed region, collar included.
    pub fn total_cells(&self) -> usize {
        self.nodes.len() - 1
    }
    /// Nodes strictly inside `Ω`.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }
    /// Nodes on `∂Ω` or outside `Ω`.
    pub fn collar_nodes(&self) -> &[usize] {
        &self.collar_nodes
    }
    pub fn is_interior(&self, node: usize) -> bool {
        node > self.collar_cells && node < self.collar_cells + self.n_cells
    }
    /// Cells inside `Ω`.
    pub fn omega_cells(&self) -> std::ops::Range<usize> {
        self.collar_cells..self.collar_cells + self.n_cells
    }

    pub fn key(&self) -> MeshKey {
        MeshKey {
            n_nodes: self.nodes.len(),
            origin_bits: self.nodes[0].to_bits(),
            spacing_bits: self.spacing.to_bits(),
        }
    }

    /// Scatters interior values into a full node vector with zero collar.
    pub fn expand_interior(&self, interior: &[f64]) -> Vec<f64> {
        assert_eq!(interior.len(), self.interior_nodes.len());
        let mut full = vec![0.0; self.n_nodes()];
        for (&node, &v) in self.interior_nodes.iter().zip(interior) {
            full[node] = v;
        }
        full
    }

    pub fn restrict_interior(&self, full: &[f64]) -> Vec<f64> {
        self.interior_nodes.iter().map(|&i| full[i]).collect()
    }
}

pub fn build_mesh(omega: (f64, f64), n_cells: usize, kernel: &Kernel) -> Result<Mesh> {
    Mesh::new(omega, n_cells, kernel.delta())
}

/// Node values of a continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    key: MeshKey,
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            key: mesh.key(),
            values: vec![0.0; mesh.n_nodes()],
        }
    }

    /// Arbitrary node values, collar included.
    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(invalid(
                "values",
                format!(
                    "expected {} node values, got {}",
                    mesh.n_nodes(),
                    values.len()
                ),
            ));
        }
        Ok(Self {
            key: mesh.key(),
            values,
        })
    }

    /// Node values of a member of the discrete `X₀`: zero on every collar node.
    pub fn constrained(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        let f = Self::from_values(mesh, values)?;
        f.check_constrained(mesh)?;
        Ok(f)
    }

    pub fn from_interior(mesh: &Mesh, interior: &[f64]) -> Result<Self> {
        if interior.len() != mesh.interior_nodes().len() {
            return Err(invalid(
                "values",
                format!(
                    "expected {} interior values, got {}",
                    mesh.interior_nodes().len(),
                    interior.len()
                ),
            ));
        }
        Ok(Self {
            key: mesh.key(),
            values: mesh.expand_interior(interior),
        })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(f64) -> f64>(mesh: &Mesh, f: F) -> Self {
        Self {
            key: mesh.key(),
            values: mesh.nodes().iter().map(|&x| f(x)).collect(),
        }
    }

    /// Hat function of `node`.
    pub fn hat(mesh: &Mesh, node: usize) -> Self {
        let mut f = Self::zeros(mesh);
        f.values[node] = 1.0;
        f
    }

    pub fn key(&self) -> MeshKey {
        self.key
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_constrained(&self, mesh: &Mesh) -> Result<()> {
        if self.key != mesh.key() {
            return Err(Error::MeshMismatch);
        }
        for &node in mesh.collar_nodes() {
            if self.values[node] != 0.0 {
                return Err(Error::Constraint {
                    node,
                    value: self.values[node],
                });
            }
        }
        Ok(())
    }

    pub fn is_constrained(&self, mesh: &Mesh) -> bool {
        self.check_constrained(mesh).is_ok()
    }

    /// Value in `cell` at local coordinate `t ∈ [0, 1]`.
    #[inline]
    pub fn eval_local(&self, cell: usize, t: f64) -> f64 {
        let u0 = self.values[cell];
        u0 + t * (self.values[cell + 1] - u0)
    }

    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        if self.key != other.key {
            return Err(Error::MeshMismatch);
        }
        Ok(Self {
            key: self.key,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            key: self.key,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `∫_Ω |u|^p dx` by a 4-point Gauss rule per cell of `Ω`.
    pub fn lp_norm_pow(&self, mesh: &Mesh, p: f64) -> Result<f64> {
        if self.key != mesh.key() {
            return Err(Error::MeshMismatch);
        }
        let rule = GaussRule::unit(4);
        let h = mesh.spacing();
        let mut acc = Accumulator::new();
        for cell in mesh.omega_cells() {
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                acc.add(h * w * self.eval_local(cell, *t).abs().powf(p));
            }
        }
        Ok(acc.value())
    }

    pub fn lp_norm(&self, mesh: &Mesh, p: f64) -> Result<f64> {
        Ok(self.lp_norm_pow(mesh, p)?.powf(1.0 / p))
    }
}
