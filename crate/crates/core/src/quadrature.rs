//! Pair quadrature for the double integrals over `ℝ × ℝ`.
//!
//! Each interacting cell pair `(I, J)` with `I <= J` is integrated over the
//! part of its square lying above the diagonal and inside the horizon, and
//! every point `(x, x')` is stored together with its mirror `(x', x)`: entry
//! `2m + 1` is the mirror of entry `2m`. A cell paired with itself is
//! integrated in `(x, x' - x)` coordinates, graded in the distance so that
//! the kernel singularity `r^{-α}` is absorbed by the Jacobian. Neighbouring
//! cells meet the diagonal in one corner, toward which their square is
//! refined dyadically. Squares cut by the horizon are clipped exactly and
//! integrated with collapsed Gauss rules on triangles.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::mesh::{DiscreteFunction, Mesh};
use crate::numeric::GaussRule;

pub const DEFAULT_GAUSS_ORDER: usize = 4;
pub const DEFAULT_NEAR_DIAG_LEVELS: usize = 6;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// One quadrature point of the pair rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEntry {
    pub x: f64,
    pub x_prime: f64,
    /// `|x' - x|`.
    pub r: f64,
    /// Geometry-only weight (area element of the rule).
    pub geometry_weight: f64,
    /// `geometry_weight * k(r) / r^p`.
    pub weight: f64,
    /// `k(r)^{1/p} / r`, the factor of the nonlocal gradient.
    pub gradient_factor: f64,
    /// `k(r)^{1/p'} / r^{p-1}`, the factor of the flux.
    pub flux_factor: f64,
    pub cell: u32,
    pub cell_prime: u32,
    /// Local coordinates of `x` in `cell` and of `x'` in `cell_prime`.
    pub t: f64,
    pub t_prime: f64,
}

impl PairEntry {
    #[inline]
    pub fn difference(&self, u: &DiscreteFunction) -> f64 {
        u.eval_local(self.cell_prime as usize, self.t_prime)
            - u.eval_local(self.cell as usize, self.t)
    }
}

#[derive(Debug, Clone)]
pub struct NonlocalQuadrature {
    id: u64,
    kernel: Kernel,
    mesh: Mesh,
    gauss_order: usize,
    near_diag_levels: usize,
    entries: Vec<PairEntry>,
}

impl NonlocalQuadrature {
    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    pub fn p(&self) -> f64 {
        self.kernel.p()
    }
    pub fn gauss_order(&self) -> usize {
        self.gauss_order
    }
    pub fn near_diag_levels(&self) -> usize {
        self.near_diag_levels
    }
    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the mirrored entry.
    #[inline]
    pub fn mirror(q: usize) -> usize {
        q ^ 1
    }

    /// Writes the `x, x_prime, weight` table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,x_prime,weight")?;
        for e in &self.entries {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", e.x, e.x_prime, e.weight)?;
        }
        Ok(())
    }
}

// A point in local coordinates: xi in cell I, eta in cell J, both in [0, 1].
#[derive(Debug, Clone, Copy)]
struct LocalPoint {
    xi: f64,
    eta: f64,
    weight: f64,
}

struct PairRule<'a> {
    gauss: &'a GaussRule,
    // cell offset J - I
    offset: f64,
    // horizon in units of the mesh spacing
    reach: f64,
    levels: usize,
    // r = s τ^grade on the diagonal cell
    grade: f64,
}

#[derive(Debug, Clone, Copy)]
struct Square {
    xi0: f64,
    xi1: f64,
    eta0: f64,
    eta1: f64,
}

impl PairRule<'_> {
    fn rho(&self, xi: f64, eta: f64) -> f64 {
        self.offset + eta - xi
    }

    // square whose corner (xi1, eta0) lies on the diagonal
    fn corner(&self, sq: Square, level: usize, out: &mut Vec<LocalPoint>) {
        if level == self.levels {
            self.separated(sq, out);
            return;
        }
        let mx = 0.5 * (sq.xi0 + sq.xi1);
        let my = 0.5 * (sq.eta0 + sq.eta1);
        self.corner(
            Square {
                xi0: mx,
                xi1: sq.xi1,
                eta0: sq.eta0,
                eta1: my,
            },
            level + 1,
            out,
        );
        for s in [
            Square {
                xi0: sq.xi0,
                xi1: mx,
                eta0: sq.eta0,
                eta1: my,
            },
            Square {
                xi0: sq.xi0,
                xi1: mx,
                eta0: my,
                eta1: sq.eta1,
            },
            Square {
                xi0: mx,
                xi1: sq.xi1,
                eta0: my,
                eta1: sq.eta1,
            },
        ] {
            self.separated(s, out);
        }
    }

    // upper half {a < xi < eta < b} of the diagonal square [a, b]²
    fn graded_triangle(&self, a: f64, b: f64, out: &mut Vec<LocalPoint>) {
        let s = b - a;
        let m = self.grade;
        for (t, wt) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
            let d = s * t.powf(m);
            let jac = s * m * t.powf(m - 1.0) * (s - d);
            for (sg, ws) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
                let xi = a + (s - d) * sg;
                out.push(LocalPoint {
                    xi,
                    eta: xi + d,
                    weight: jac * wt * ws,
                });
            }
        }
    }

    fn separated(&self, sq: Square, out: &mut Vec<LocalPoint>) {
        let rho_min = self.rho(sq.xi1, sq.eta0);
        let rho_max = self.rho(sq.xi0, sq.eta1);
        if rho_min >= self.reach {
            return;
        }
        if rho_max <= self.reach {
            let dx = sq.xi1 - sq.xi0;
            let dy = sq.eta1 - sq.eta0;
            for (tx, wx) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
                for (ty, wy) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
                    out.push(LocalPoint {
                        xi: sq.xi0 + dx * tx,
                        eta: sq.eta0 + dy * ty,
                        weight: dx * dy * wx * wy,
                    });
                }
            }
            return;
        }
        let polygon = self.clip(sq);
        for k in 1..polygon.len().saturating_sub(1) {
            self.triangle(polygon[0], polygon[k], polygon[k + 1], out);
        }
    }

    // Sutherland-Hodgman against rho <= reach
    fn clip(&self, sq: Square) -> Vec<(f64, f64)> {
        let corners = [
            (sq.xi0, sq.eta0),
            (sq.xi1, sq.eta0),
            (sq.xi1, sq.eta1),
            (sq.xi0, sq.eta1),
        ];
        let inside = |p: (f64, f64)| self.reach - self.rho(p.0, p.1);
        let mut out = Vec::with_capacity(5);
        for i in 0..4 {
            let cur = corners[i];
            let next = corners[(i + 1) % 4];
            let fc = inside(cur);
            let fn_ = inside(next);
            if fc >= 0.0 {
                out.push(cur);
            }
            if (fc >= 0.0) != (fn_ >= 0.0) {
                let s = fc / (fc - fn_);
                out.push((cur.0 + s * (next.0 - cur.0), cur.1 + s * (next.1 - cur.1)));
            }
        }
        out
    }

    // collapsed (Duffy) tensor rule on a triangle
    fn triangle(&self, v0: (f64, f64), v1: (f64, f64), v2: (f64, f64), out: &mut Vec<LocalPoint>) {
        let e1 = (v1.0 - v0.0, v1.1 - v0.1);
        let e2 = (v2.0 - v1.0, v2.1 - v1.1);
        let det = (e1.0 * e2.1 - e1.1 * e2.0).abs();
        if det <= 1e-300 {
            return;
        }
        for (a, wa) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
            for (b, wb) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
                out.push(LocalPoint {
                    xi: v0.0 + a * e1.0 + a * b * e2.0,
                    eta: v0.1 + a * e1.1 + a * b * e2.1,
                    weight: det * a * wa * wb,
                });
            }
        }
    }
}

/// Assembles the pair rule on `mesh` for `kernel`.
pub fn assemble_quadrature(
    mesh: &Mesh,
    kernel: &Kernel,
    near_diag_levels: usize,
    gauss_order: usize,
) -> Result<NonlocalQuadrature> {
    if gauss_order == 0 {
        return Err(invalid("quadrature.gauss_order", "must be positive"));
    }
    if near_diag_levels > 40 {
        return Err(invalid("quadrature.near_diag_levels", "at most 40 levels"));
    }
    if mesh.collar_width() < kernel.delta() * (1.0 - 1e-12) {
        return Err(invalid(
            "kernel.delta",
            "mesh collar is narrower than the kernel horizon",
        ));
    }
    let gauss = GaussRule::unit(gauss_order);
    let h = mesh.spacing();
    let reach = kernel.delta() / h;
    let total = mesh.total_cells();
    let max_offset = reach.ceil() as usize + 1;

    let pairs: Vec<(usize, usize)> = (0..total)
        .flat_map(|i| (i..total.min(i + max_offset + 1)).map(move |j| (i, j)))
        .filter(|&(i, j)| j == i || ((j - i - 1) as f64) < reach)
        .collect();

    let alpha = match kernel.family() {
        KernelFamily::TruncatedFractional => kernel.lower_bound_exponent(),
        KernelFamily::TruncatedConstant => 0.0,
    };
    let grade = 1.0 / (1.0 - alpha);
    let p = kernel.p();
    let p_conj = kernel.conjugate_p();
    let nodes = mesh.nodes();

    let per_pair: Vec<Vec<PairEntry>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let rule = PairRule {
                gauss: &gauss,
                offset: (j - i) as f64,
                reach,
                levels: near_diag_levels,
                grade,
            };
            let mut local = Vec::new();
            match j - i {
                0 => rule.graded_triangle(0.0, 1.0, &mut local),
                1 => rule.corner(
                    Square {
                        xi0: 0.0,
                        xi1: 1.0,
                        eta0: 0.0,
                        eta1: 1.0,
                    },
                    0,
                    &mut local,
                ),
                _ => rule.separated(
                    Square {
                        xi0: 0.0,
                        xi1: 1.0,
                        eta0: 0.0,
                        eta1: 1.0,
                    },
                    &mut local,
                ),
            }
            let mut entries = Vec::with_capacity(2 * local.len());
            for pt in local {
                let r = h * rule.rho(pt.xi, pt.eta);
                if !(r > 0.0 && r <= kernel.delta()) {
                    continue;
                }
                let k = kernel.value_at(r);
                let geometry_weight = h * h * pt.weight;
                let gradient_factor = k.powf(1.0 / p) / r;
                let flux_factor = k.powf(1.0 / p_conj) / r.powf(p - 1.0);
                let weight = geometry_weight * k / r.powf(p);
                let x = nodes[i] + h * pt.xi;
                let x_prime = nodes[j] + h * pt.eta;
                let forward = PairEntry {
                    x,
                    x_prime,
                    r,
                    geometry_weight,
                    weight,
                    gradient_factor,
                    flux_factor,
                    cell: i as u32,
                    cell_prime: j as u32,
                    t: pt.xi,
                    t_prime: pt.eta,
                };
                let backward = PairEntry {
                    x: x_prime,
                    x_prime: x,
                    cell: j as u32,
                    cell_prime: i as u32,
                    t: pt.eta,
                    t_prime: pt.xi,
                    ..forward
                };
                entries.push(forward);
                entries.push(backward);
            }
            entries
        })
        .collect();

    let entries: Vec<PairEntry> = per_pair.into_iter().flatten().collect();
    Ok(NonlocalQuadrature {
        id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        kernel: *kernel,
        mesh: mesh.clone(),
        gauss_order,
        near_diag_levels,
        entries,
    })
}
