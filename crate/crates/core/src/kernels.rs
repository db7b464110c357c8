//! Radial interaction kernels with a finite horizon.
//!
//! The spatial dimension is fixed to one. A kernel carries the integrability
//! exponent `p`, the fractional order `s` and the lower-bound constant `c0`
//! that appear in the hypotheses it is validated against.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::tanh_sinh;

/// Spatial dimension of every kernel in this crate.
pub const DIM: usize = 1;

/// Relative tolerance of the adaptive integrals in [`validate_kernel`].
pub const VALIDATION_REL_TOL: f64 = 1e-8;

/// Threshold for the sampled lower-bound ratio.
pub const LOWER_BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `k(r) = c0 r^{-(N + (s-1)p)}` on `0 < r <= delta`.
    TruncatedFractional,
    /// `k(r) = c0` on `0 < r <= delta`.
    TruncatedConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    family: KernelFamily,
    p: f64,
    s: f64,
    c0: f64,
    delta: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, p: f64, s: f64, c0: f64, delta: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(invalid("p", format!("need 1 < p < inf, got {p}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid("s", format!("need 0 < s < 1, got {s}")));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(invalid("c0", format!("need c0 > 0, got {c0}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("need delta > 0, got {delta}")));
        }
        Ok(Self {
            family,
            p,
            s,
            c0,
            delta,
        })
    }

    pub fn fractional(p: f64, s: f64, c0: f64, delta: f64) -> Result<Self> {
        Self::new(KernelFamily::TruncatedFractional, p, s, c0, delta)
    }

    pub fn constant(p: f64, s: f64, c0: f64, delta: f64) -> Result<Self> {
        Self::new(KernelFamily::TruncatedConstant, p, s, c0, delta)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn dim(&self) -> usize {
        DIM
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn conjugate_p(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Exponent `N + (s - 1) p` of the lower bound `c0 / r^{N + (s-1)p}`.
    pub fn lower_bound_exponent(&self) -> f64 {
        DIM as f64 + (self.s - 1.0) * self.p
    }

    /// `k(r)` without the domain check; callers guarantee `r > 0`.
    #[inline]
    pub(crate) fn value_at(&self, r: f64) -> f64 {
        if r > self.delta {
            return 0.0;
        }
        match self.family {
            KernelFamily::TruncatedFractional => self.c0 * r.powf(-self.lower_bound_exponent()),
            KernelFamily::TruncatedConstant => self.c0,
        }
    }

    /// `k(r)`, zero beyond the horizon.
    pub fn eval(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.value_at(r))
    }

    /// The singular weight `k(r) / r^p` of the energy form.
    pub fn combined_weight(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.value_at(r) / r.powf(self.p))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "kernel radius must be positive, got {r}"
        )))
    }
}

pub fn eval_kernel(kernel: &Kernel, r: f64) -> Result<f64> {
    kernel.eval(r)
}

pub fn combined_weight(kernel: &Kernel, r: f64) -> Result<f64> {
    kernel.combined_weight(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralCheck {
    pub value: f64,
    pub error_estimate: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    /// Minimum of `k(r) r^{N+(s-1)p} / c0` over the sampled radii.
    pub min_ratio: f64,
    /// Radius at which the minimum was attained.
    pub argmin_radius: f64,
    pub pass: bool,
}

/// Numerical evidence for the kernel hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub epsilon: f64,
    pub samples: usize,
    /// `epsilon >= delta`: nothing meaningful can be checked.
    pub degenerate: bool,
    /// `∫_{|z| > epsilon} k(|z|) / |z|^p dz`.
    pub tail: IntegralCheck,
    pub lower_bound: LowerBoundCheck,
    /// `∫ k(|z|) dz`.
    pub l1: IntegralCheck,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        !self.degenerate && self.tail.finite && self.lower_bound.pass && self.l1.finite
    }

    /// Names of the failing checks.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.degenerate {
            out.push("degenerate_input");
            return out;
        }
        if !self.tail.finite {
            out.push("tail_integral");
        }
        if !self.lower_bound.pass {
            out.push("lower_bound");
        }
        if !self.l1.finite {
            out.push("l1_integrability");
        }
        out
    }
}

/// Checks the tail integrability, the pointwise lower bound (sampled on
/// `samples` log-spaced radii in `(0, delta]`) and the integrability of the
/// kernel itself.
pub fn validate_kernel(kernel: &Kernel, epsilon: f64, samples: usize) -> Result<ValidationReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(
            "epsilon",
            format!("need epsilon > 0, got {epsilon}"),
        ));
    }
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    let delta = kernel.delta();
    if epsilon >= delta {
        let vacuous = IntegralCheck {
            value: 0.0,
            error_estimate: 0.0,
            finite: true,
        };
        return Ok(ValidationReport {
            epsilon,
            samples,
            degenerate: true,
            tail: vacuous,
            lower_bound: LowerBoundCheck {
                min_ratio: f64::NAN,
                argmin_radius: f64::NAN,
                pass: false,
            },
            l1: vacuous,
        });
    }

    // |z| > epsilon in one dimension is two half-lines; k vanishes past delta.
    let half_lines = 2.0;
    let tail = tanh_sinh(
        |r| kernel.value_at(r) / r.powf(kernel.p()),
        epsilon,
        delta,
        VALIDATION_REL_TOL,
    );
    let l1 = tanh_sinh(|r| kernel.value_at(r), 0.0, delta, VALIDATION_REL_TOL);

    let exponent = kernel.lower_bound_exponent();
    let r_min = delta * 1e-8;
    let mut min_ratio = f64::INFINITY;
    let mut argmin_radius = delta;
    for i in 0..samples {
        let frac = if samples == 1 {
            1.0
        } else {
            i as f64 / (samples - 1) as f64
        };
        let r = r_min * (delta / r_min).powf(frac);
        let r = r.min(delta);
        let ratio = kernel.value_at(r) * r.powf(exponent) / kernel.c0();
        if ratio < min_ratio {
            min_ratio = ratio;
            argmin_radius = r;
        }
    }

    let to_check = |i: crate::numeric::Integral| IntegralCheck {
        value: half_lines * i.value,
        error_estimate: half_lines * i.error_estimate,
        finite: i.converged && i.value.is_finite(),
    };

    Ok(ValidationReport {
        epsilon,
        samples,
        degenerate: false,
        tail: to_check(tail),
        lower_bound: LowerBoundCheck {
            min_ratio,
            argmin_radius,
            pass: min_ratio >= 1.0 - LOWER_BOUND_SLACK,
        },
        l1: to_check(l1),
    })
}
