//! Small numerical building blocks shared by the assembly and the forms:
//! compensated summation, Gauss-Legendre rules and a double-exponential
//! integrator for one-dimensional integrals with endpoint singularities.

use std::f64::consts::{FRAC_PI_2, PI};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    compensation: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Accumulator::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `|a|^{p-2} a`, with the value at zero defined as zero for every `p > 1`.
#[inline]
pub fn signed_pow(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.signum() * a.abs().powf(p - 1.0)
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `order` point rule on the unit interval, computed by Newton iteration
    /// on the Legendre polynomial of that degree.
    pub fn unit(order: usize) -> Self {
        assert!(order >= 1, "Gauss order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (pn, dpn) = legendre(n, z);
                dp = dpn;
                let dz = pn / dpn;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dpn) = legendre(n, z);
            dp = if dpn != 0.0 { dpn } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let len = b - a;
        let mut acc = Accumulator::new();
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(a + len * t));
        }
        acc.value() * len
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

/// Tanh-sinh quadrature of `f` over `[a, b]`, halving the step until two
/// successive levels agree to `rel_tol`. `f` is never evaluated at the
/// endpoints, so integrable endpoint singularities are fine.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Integral {
    const MAX_LEVEL: usize = 12;
    const T_MAX: f64 = 6.5;

    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    // contribution of abscissa t (and -t); complement 1 - x computed without cancellation
    let pair = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let cosh_u = u.cosh();
        let one_minus_x = (-u).exp() / cosh_u;
        let w = FRAC_PI_2 * t.cosh() / (cosh_u * cosh_u);
        if !w.is_finite() || w == 0.0 || one_minus_x == 0.0 {
            return 0.0;
        }
        let d = half * one_minus_x;
        let right = b - d;
        let left = a + d;
        if t == 0.0 {
            w * f(center)
        } else {
            let mut s = 0.0;
            if right < b {
                s += w * f(right);
            }
            if left > a {
                s += w * f(left);
            }
            s
        }
    };

    let mut h = 1.0;
    let mut sum = Accumulator::new();
    let mut k = 0;
    loop {
        let t = k as f64 * h;
        if t > T_MAX {
            break;
        }
        sum.add(pair(t));
        k += 1;
    }
    let mut estimate = half * h * sum.value();
    let mut last_diff = f64::INFINITY;

    for _ in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > T_MAX {
                break;
            }
            sum.add(pair(t));
            k += 2;
        }
        let next = half * h * sum.value();
        last_diff = (next - estimate).abs();
        estimate = next;
        if !estimate.is_finite() {
            break;
        }
        if last_diff <= rel_tol * estimate.abs() {
            return Integral {
                value: estimate,
                error_estimate: last_diff,
                converged: true,
            };
        }
    }
    Integral {
        value: estimate,
        error_estimate: last_diff,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        for order in 1..=12 {
            let rule = GaussRule::unit(order);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let deg = 2 * order - 1;
            let got = rule.integrate(0.0, 2.0, |x| x.powi(deg as i32));
            let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!((got - exact).abs() < 1e-12 * exact, "order {order}");
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let r = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, 1e-10);
        assert!(r.converged);
        assert!((r.value - 2.0).abs() < 1e-9);
        let r = tanh_sinh(|x| x.exp(), 0.0, 1.0, 1e-12);
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat_n(1e-3, 1000));
        assert!((stable_sum(v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn signed_pow_is_odd() {
        assert_eq!(signed_pow(0.0, 1.5), 0.0);
        assert_eq!(signed_pow(-2.0, 3.0), -4.0);
        assert_eq!(signed_pow(3.0, 2.0), 3.0);
    }
}
