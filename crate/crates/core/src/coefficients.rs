//! Bounded symmetric two-point diffusion coefficients and the oscillating
//! sequences used in the homogenization experiments.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Pair values of a tabulated coefficient, keyed on the exact bit patterns of
/// the coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TabulatedPairs {
    values: HashMap<(u64, u64), f64>,
}

impl TabulatedPairs {
    /// Builds a symmetric table. A pair given in both orders is replaced by the
    /// average of the two values; a pair given once is mirrored.
    pub fn symmetrized<I: IntoIterator<Item = (f64, f64, f64)>>(rows: I) -> Self {
        let mut raw: HashMap<(u64, u64), f64> = HashMap::new();
        for (x, xp, v) in rows {
            raw.insert((x.to_bits(), xp.to_bits()), v);
        }
        let mut values = HashMap::with_capacity(raw.len() * 2);
        for (&(a, b), &v) in &raw {
            let sym = match raw.get(&(b, a)) {
                Some(&w) => 0.5 * (v + w),
                None => v,
            };
            values.insert((a, b), sym);
            values.insert((b, a), sym);
        }
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn get(&self, x: f64, x_prime: f64) -> Option<f64> {
        self.values.get(&(x.to_bits(), x_prime.to_bits())).copied()
    }

    fn range(&self) -> (f64, f64) {
        self.values
            .values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFamily {
    Constant {
        value: f64,
    },
    /// `alpha + beta sin(2 pi j x) sin(2 pi j x')`.
    SeparableOscillation {
        alpha: f64,
        beta: f64,
        freq: u32,
    },
    /// `lo` on cells where `floor(c x) + floor(c x')` is even, `hi` elsewhere.
    Checkerboard {
        lo: f64,
        hi: f64,
        cells_per_unit: u32,
    },
    TabulatedPairs(TabulatedPairs),
}

/// A member of the admissible coefficient class: symmetric and confined to
/// `[h_min, h_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    family: CoefficientFamily,
    h_min: f64,
    h_max: f64,
}

impl CoefficientField {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid(
                "coefficient.value",
                format!("need value > 0, got {value}"),
            ));
        }
        Ok(Self {
            family: CoefficientFamily::Constant { value },
            h_min: value,
            h_max: value,
        })
    }

    pub fn separable_oscillation(alpha: f64, beta: f64, freq: u32) -> Result<Self> {
        let h_min = alpha - beta.abs();
        if !(h_min > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(invalid(
                "coefficient.beta",
                format!("need alpha - |beta| > 0, got alpha={alpha}, beta={beta}"),
            ));
        }
        if freq == 0 {
            return Err(invalid("coefficient.freq", "frequency must be positive"));
        }
        Ok(Self {
            family: CoefficientFamily::SeparableOscillation { alpha, beta, freq },
            h_min,
            h_max: alpha + beta.abs(),
        })
    }

    pub fn checkerboard(lo: f64, hi: f64, cells_per_unit: u32) -> Result<Self> {
        if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(invalid(
                "coefficient.lo",
                "checkerboard values must be positive",
            ));
        }
        if cells_per_unit == 0 {
            return Err(invalid("coefficient.cells_per_unit", "must be positive"));
        }
        Ok(Self {
            family: CoefficientFamily::Checkerboard {
                lo,
                hi,
                cells_per_unit,
            },
            h_min: lo.min(hi),
            h_max: lo.max(hi),
        })
    }

    /// A tabulated field. The band is the range of the (symmetrized) values;
    /// every value must be positive.
    pub fn tabulated(table: TabulatedPairs) -> Result<Self> {
        if table.is_empty() {
            return Err(invalid("coefficient", "tabulated coefficient has no pairs"));
        }
        let (h_min, h_max) = table.range();
        if !(h_min > 0.0 && h_max.is_finite()) {
            return Err(invalid(
                "coefficient",
                "tabulated values must be positive and finite",
            ));
        }
        Ok(Self {
            family: CoefficientFamily::TabulatedPairs(table),
            h_min,
            h_max,
        })
    }

    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }
    pub fn h_min(&self) -> f64 {
        self.h_min
    }
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// `h(x', x)`, checked against the band.
    pub fn eval(&self, x: f64, x_prime: f64) -> Result<f64> {
        let value = match &self.family {
            CoefficientFamily::Constant { value } => *value,
            CoefficientFamily::SeparableOscillation { alpha, beta, freq } => {
                let w = 2.0 * PI * f64::from(*freq);
                alpha + beta * ((w * x).sin() * (w * x_prime).sin())
            }
            CoefficientFamily::Checkerboard {
                lo,
                hi,
                cells_per_unit,
            } => {
                let c = f64::from(*cells_per_unit);
                let parity = ((c * x).floor() as i64 + (c * x_prime).floor() as i64).rem_euclid(2);
                if parity == 0 {
                    *lo
                } else {
                    *hi
                }
            }
            CoefficientFamily::TabulatedPairs(table) => table
                .get(x, x_prime)
                .ok_or(Error::Interpolation { x, x_prime })?,
        };
        // the product of sines can exceed the nominal band by rounding
        let slack = 1e-12 * self.h_max;
        if value < self.h_min - slack || value > self.h_max + slack {
            return Err(Error::OutOfBand {
                value,
                x,
                x_prime,
                h_min: self.h_min,
                h_max: self.h_max,
            });
        }
        Ok(value)
    }
}

pub fn eval_coeff(field: &CoefficientField, x: f64, x_prime: f64) -> Result<f64> {
    field.eval(x, x_prime)
}

/// Parameters of a built-in coefficient family, without the sequence index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceFamily {
    Constant { value: f64 },
    SeparableOscillation { alpha: f64, beta: f64 },
    Checkerboard { lo: f64, hi: f64 },
}

/// A sequence `j -> h_j` together with its weak-* limit.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSequence {
    BuiltIn(SequenceFamily),
    /// Explicit members, indexed from 1. No analytic limit is available.
    Tabulated(Vec<CoefficientField>),
}

impl CoefficientSequence {
    pub fn built_in(family: SequenceFamily) -> Result<Self> {
        let seq = Self::BuiltIn(family);
        // validates the band once
        seq.member(1)?;
        Ok(seq)
    }

    /// The `j`-th member. Oscillating families use `j` as the frequency or the
    /// number of cells per unit length.
    pub fn member(&self, j: u32) -> Result<CoefficientField> {
        match self {
            Self::BuiltIn(SequenceFamily::Constant { value }) => CoefficientField::constant(*value),
            Self::BuiltIn(SequenceFamily::SeparableOscillation { alpha, beta }) => {
                CoefficientField::separable_oscillation(*alpha, *beta, j)
            }
            Self::BuiltIn(SequenceFamily::Checkerboard { lo, hi }) => {
                CoefficientField::checkerboard(*lo, *hi, j)
            }
            Self::Tabulated(members) => {
                let idx = (j as usize)
                    .checked_sub(1)
                    .filter(|&i| i < members.len())
                    .ok_or_else(|| {
                        invalid("sequence.indices", format!("no tabulated member {j}"))
                    })?;
                Ok(members[idx].clone())
            }
        }
    }

    pub fn weak_star_limit(&self) -> Result<CoefficientField> {
        match self {
            Self::BuiltIn(SequenceFamily::Constant { value }) => CoefficientField::constant(*value),
            Self::BuiltIn(SequenceFamily::SeparableOscillation { alpha, .. }) => {
                CoefficientField::constant(*alpha)
            }
            Self::BuiltIn(SequenceFamily::Checkerboard { lo, hi }) => {
                CoefficientField::constant(0.5 * (lo + hi))
            }
            Self::Tabulated(_) => Err(Error::Unsupported(
                "tabulated coefficient sequences have no analytic weak-* limit".into(),
            )),
        }
    }

    /// Band shared by every member and the limit.
    pub fn band(&self) -> Result<(f64, f64)> {
        let m = self.member(1)?;
        Ok((m.h_min(), m.h_max()))
    }
}

pub fn weak_star_limit(seq: &CoefficientSequence) -> Result<CoefficientField> {
    seq.weak_star_limit()
}
