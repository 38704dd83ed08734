//! Shared value types: coefficient matrices, problem instances, cubic
//! polynomials and the error taxonomy used across the crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when checking whether the terminal factor `h`
/// sits on the singular line `h = 1/sigma3`.
pub const TERMINAL_SINGULAR_RTOL: f64 = 1e-12;

/// Constant coefficients of a fully coupled linear FBSDE
///
/// ```text
///   dX = [b1 X + b2 Y + b3 Z] dt + [s1 X + s2 Y + s3 Z] dW
///  -dY = [f1 X + f2 Y + f3 Z] dt - Z dW
/// ```
///
/// The driver convention is the backward one: `f*` multiply the state in
/// `-dY`, so the generator matrix row for `Y` carries `-f*` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffMatrix {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl CoeffMatrix {
    pub fn new(f: [f64; 3], b: [f64; 3], s: [f64; 3]) -> Self {
        Self {
            f1: f[0],
            f2: f[1],
            f3: f[2],
            b1: b[0],
            b2: b[1],
            b3: b[2],
            s1: s[0],
            s2: s[1],
            s3: s[2],
        }
    }

    pub fn f(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }

    pub fn b(&self) -> [f64; 3] {
        [self.b1, self.b2, self.b3]
    }

    pub fn s(&self) -> [f64; 3] {
        [self.s1, self.s2, self.s3]
    }

    /// All nine entries in `(f, b, s)` order.
    pub fn entries(&self) -> [f64; 9] {
        [
            self.f1, self.f2, self.f3, self.b1, self.b2, self.b3, self.s1, self.s2, self.s3,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry, floored at 1; used to scale tolerances.
    pub fn scale(&self) -> f64 {
        self.entries().iter().fold(1.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A fully coupled linear FBSDE instance on `[0, T]` with terminal
/// condition `Y(T) = h * X(T)` and initial state `X(0) = x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFbsde {
    pub coeffs: CoeffMatrix,
    pub h: f64,
    pub x0: f64,
    pub t: f64,
}

impl LinearFbsde {
    pub fn new(coeffs: CoeffMatrix, h: f64, x0: f64, t: f64) -> Result<Self, ValidationError> {
        let inst = Self { coeffs, h, x0, t };
        inst.validate()?;
        Ok(inst)
    }

    /// Checks finiteness, a positive horizon and that the terminal factor
    /// does not sit on the singular line of the dominating function.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.coeffs.is_finite() {
            return Err(ValidationError::NonFinite { field: "coeffs" });
        }
        for (name, v) in [("h", self.h), ("x0", self.x0), ("t", self.t)] {
            if !v.is_finite() {
                return Err(ValidationError::NonFinite { field: name });
            }
        }
        if self.t <= 0.0 {
            return Err(ValidationError::NonPositiveHorizon { t: self.t });
        }
        if terminal_on_singular_line(self.coeffs.s3, self.h) {
            return Err(ValidationError::TerminalOnSingularLine {
                h: self.h,
                s3: self.coeffs.s3,
            });
        }
        Ok(())
    }
}

/// True when `h` equals `1/s3` up to [`TERMINAL_SINGULAR_RTOL`].
pub fn terminal_on_singular_line(s3: f64, h: f64) -> bool {
    if s3 == 0.0 {
        return false;
    }
    let sing = 1.0 / s3;
    (h - sing).abs() <= TERMINAL_SINGULAR_RTOL * f64::max(1.0, f64::max(h.abs(), sing.abs()))
}

/// Cubic polynomial `c3 y^3 + c2 y^2 + c1 y + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Cubic {
    pub fn new(c3: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Self { c3, c2, c1, c0 }
    }

    /// Horner evaluation.
    pub fn eval(&self, y: f64) -> f64 {
        ((self.c3 * y + self.c2) * y + self.c1) * y + self.c0
    }

    /// Derivative value at `y`.
    pub fn deriv(&self, y: f64) -> f64 {
        (3.0 * self.c3 * y + 2.0 * self.c2) * y + self.c1
    }

    pub fn coeffs(&self) -> [f64; 4] {
        [self.c3, self.c2, self.c1, self.c0]
    }

    /// Coefficient magnitude sum; the natural scale for residual tests.
    pub fn scale(&self) -> f64 {
        self.c3.abs() + self.c2.abs() + self.c1.abs() + self.c0.abs()
    }

    pub fn is_zero(&self) -> bool {
        self.c3 == 0.0 && self.c2 == 0.0 && self.c1 == 0.0 && self.c0 == 0.0
    }
}

/// Validation failures for problem instances.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("field `{field}` must be finite")]
    NonFinite { field: &'static str },
    #[error("horizon must be positive, got T = {t}")]
    NonPositiveHorizon { t: f64 },
    #[error("terminal factor h = {h} lies on the singular line 1/s3 (s3 = {s3})")]
    TerminalOnSingularLine { h: f64, s3: f64 },
}

/// Errors from evaluating the dominating function at a singular point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dominating function evaluated too close to its pole at y = {y}")]
    SingularEvaluation { y: f64 },
}

/// Errors from the real-root isolator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("all four cubic coefficients are zero; roots are undefined")]
    ZeroPolynomial,
}
