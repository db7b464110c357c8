#![allow(dead_code)]

use nonlocal_plap::kernels::Kernel;
use nonlocal_plap::mesh::{build_mesh, DiscreteFunction, Mesh};
use nonlocal_plap::numeric::GaussRule;
use nonlocal_plap::quadrature::{assemble_quadrature, NonlocalQuadrature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn quad_for(kernel: Kernel, n_cells: usize, levels: usize, order: usize) -> NonlocalQuadrature {
    let mesh = build_mesh((0.0, 1.0), n_cells, &kernel).unwrap();
    assemble_quadrature(&mesh, &kernel, levels, order).unwrap()
}

pub fn flat(p: f64, delta: f64) -> Kernel {
    Kernel::constant(p, 0.5, 1.0, delta).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_constrained(mesh: &Mesh, rng: &mut ChaCha8Rng) -> DiscreteFunction {
    let vals: Vec<f64> = mesh
        .interior_nodes()
        .iter()
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    DiscreteFunction::from_interior(mesh, &vals).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `∬_{0 < |x' - x| <= δ} F(x', x) dx' dx` over `x` in `[lo, hi]`, for `F`
/// smooth away from the lines `x = b`, `x' = b` (b in `breaks`) and at most
/// mildly singular as `x' → x`. Composite Gauss-Legendre on every piece,
/// through a map that clusters nodes at both ends of the piece (the pieces
/// carry `s log s` terms at their endpoints).
pub fn pair_integral<F>(breaks: &[f64], lo: f64, hi: f64, delta: f64, order: usize, f: F) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let rule = GaussRule::unit(order);
    // t³(10 - 15t + 6t²) and its derivative
    let map = |t: f64| {
        (
            t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
            30.0 * t * t * (1.0 - t) * (1.0 - t),
        )
    };
    let mut xb: Vec<f64> = breaks
        .iter()
        .flat_map(|&b| [b, b - delta, b + delta])
        .chain([lo, hi])
        .filter(|&b| b >= lo && b <= hi)
        .collect();
    xb.sort_by(f64::total_cmp);
    xb.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut total = 0.0;
    for w in xb.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        for (tx, wx) in rule.nodes.iter().zip(&rule.weights) {
            let (sx, jx) = map(*tx);
            let x = x0 + sx * (x1 - x0);
            let inner = |sign: f64| {
                let mut rb: Vec<f64> = breaks
                    .iter()
                    .map(|&b| sign * (b - x))
                    .filter(|&r| r > 0.0 && r < delta)
                    .chain([0.0, delta])
                    .collect();
                rb.sort_by(f64::total_cmp);
                rb.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
                let mut s = 0.0;
                for rw in rb.windows(2) {
                    let (r0, r1) = (rw[0], rw[1]);
                    for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                        let (st, jt) = map(*t);
                        let xp = x + sign * (r0 + st * (r1 - r0));
                        if xp != x {
                            s += wt * jt * (r1 - r0) * f(xp, x);
                        }
                    }
                }
                s
            };
            total += wx * jx * (x1 - x0) * (inner(1.0) + inner(-1.0));
        }
    }
    total
}

/// Derivative-free minimization by a shrinking coordinate grid search.
pub fn grid_minimize<F>(f: F, start: &[f64], radius: f64, rounds: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = start.to_vec();
    let mut best = f(&x);
    let mut r = radius;
    for _ in 0..rounds {
        // golden-section line search along each coordinate, repeated
        for _ in 0..4 {
            for i in 0..x.len() {
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                let (mut a, mut b) = (x[i] - r, x[i] + r);
                let eval = |v: f64, x: &mut Vec<f64>| {
                    let old = x[i];
                    x[i] = v;
                    let y = f(x);
                    x[i] = old;
                    y
                };
                let mut c = b - phi * (b - a);
                let mut d = a + phi * (b - a);
                let (mut fc, mut fd) = (eval(c, &mut x), eval(d, &mut x));
                for _ in 0..80 {
                    if fc < fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - phi * (b - a);
                        fc = eval(c, &mut x);
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + phi * (b - a);
                        fd = eval(d, &mut x);
                    }
                }
                let v = 0.5 * (a + b);
                let y = eval(v, &mut x);
                if y < best {
                    best = y;
                    x[i] = v;
                }
            }
        }
        r *= 0.25;
    }
    x
}
