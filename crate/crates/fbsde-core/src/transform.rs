//! Linear state transformations.
//!
//! An invertible matrix `A = (m, 1; n c, c)` acting on `(X, Y)` carries a
//! linear FBSDE into another linear FBSDE with explicitly computable
//! coefficients. Choosing `n` as a real root of the mirror cubic `H`
//! removes the `X` dependence from the transformed driver (`f~1 = 0`),
//! which decouples the transformed system; if the transformed system also
//! passes the sign-condition admissibility check, solving it and mapping
//! back through `A^{-1}` solves the original.

use serde::{Deserialize, Serialize};

use crate::criteria::{check_sign_conditions, Verdict};
use crate::dominating::{h_poly, l_poly, real_roots};
use crate::types::{CoeffMatrix, Cubic, LinearFbsde};

/// Guard for the tilde denominator `a22 + a21 s3` and the terminal map
/// denominator `m + h`.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Relative non-degeneracy floor for `det A = c (m - n)`.
pub const DET_RTOL: f64 = 1e-10;
/// Candidate transforms whose `s~3` falls below this are rejected: the
/// admissibility check is vacuous at `s~3 = 0`.
pub const MIN_TILDE_S3: f64 = 1e-9;

/// Parameters of the transformation matrix `A = (m, 1; n c, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub m: f64,
    pub n: f64,
    pub c: f64,
}

impl TransformParams {
    pub fn new(m: f64, n: f64, c: f64) -> Self {
        Self { m, n, c }
    }

    pub fn a11(&self) -> f64 {
        self.m
    }
    pub fn a12(&self) -> f64 {
        1.0
    }
    pub fn a21(&self) -> f64 {
        self.n * self.c
    }
    pub fn a22(&self) -> f64 {
        self.c
    }

    /// `det A = c (m - n)`.
    pub fn det(&self) -> f64 {
        self.a11() * self.a22() - self.a12() * self.a21()
    }

    /// Common denominator `a22 + a21 s3 = c (1 + n s3)` of all nine
    /// transformed coefficients.
    pub fn denominator(&self, s3: f64) -> f64 {
        self.a22() + self.a21() * s3
    }

    pub fn validate(&self, s3: f64) -> Result<(), TransformError> {
        if !(self.m.is_finite() && self.n.is_finite() && self.c.is_finite()) {
            return Err(TransformError::Degenerate {
                detail: "non-finite parameter".to_string(),
            });
        }
        let det_floor = DET_RTOL * f64::max(1.0, f64::max(self.m.abs(), self.n.abs())) * self.c.abs();
        if self.det().abs() <= det_floor || self.c == 0.0 {
            return Err(TransformError::Degenerate {
                detail: format!("det A = {} is numerically zero", self.det()),
            });
        }
        let den = self.denominator(s3);
        if den.abs() <= DEGENERACY_TOL * f64::max(1.0, (self.a21() * s3).abs()) {
            return Err(TransformError::Degenerate {
                detail: format!("coefficient denominator a22 + a21*s3 = {den} is numerically zero"),
            });
        }
        Ok(())
    }
}

/// Errors from transform construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("degenerate transform: {detail}")]
    Degenerate { detail: String },
    #[error("terminal map degenerate: a11 + a12*h = {value} is numerically zero")]
    TerminalDegenerate { value: f64 },
    #[error("initial-condition closure degenerate: 1 - (a12/a22) u~(0) = {value}")]
    InitialDegenerate { value: f64 },
}

/// The nine transformed coefficients, by direct substitution.
pub fn tilde_coeffs(c: &CoeffMatrix, params: &TransformParams) -> Result<CoeffMatrix, TransformError> {
    params.validate(c.s3)?;
    let (a11, a12, a21, a22) = (params.a11(), params.a12(), params.a21(), params.a22());
    let (f1, f2, f3) = (c.f1, c.f2, c.f3);
    let (b1, b2, b3) = (c.b1, c.b2, c.b3);
    let (s1, s2, s3) = (c.s1, c.s2, c.s3);
    let det = params.det();
    let den = params.denominator(s3);

    let tb3 = (a11 * b3 - a12 * f3) / den;
    let ts3 = (a11 * s3 + a12) / den;
    let tf3 = (a22 * f3 - a21 * b3) / den;
    let tb1 = ((a11 * b3 - a12 * f3) * (a21 * a21 * s2 - a21 * a22 * s1)
        + den * (a22 * (a11 * b1 - a12 * f1) - a21 * (a11 * b2 - a12 * f2)))
        / (det * den);
    let tb2 = ((a11 * b3 - a12 * f3) * (a12 * a21 * s1 - a11 * a21 * s2)
        + den * (a11 * (a11 * b2 - a12 * f2) - a12 * (a11 * b1 - a12 * f1)))
        / (det * den);
    let ts1 = ((a11 * s3 + a12) * (a21 * a21 * s2 - a21 * a22 * s1)
        + den * (a11 * a22 * s1 - a11 * a21 * s2))
        / (det * den);
    let ts2 = ((a11 * s3 + a12) * (a12 * a21 * s1 - a11 * a21 * s2)
        + den * (a11 * a11 * s2 - a11 * a12 * s1))
        / (det * den);
    let tf1 = ((a21 * b3 - a22 * f3) * (a21 * a22 * s1 - a21 * a21 * s2)
        + den * (a21 * (a21 * b2 - a22 * f2) - a22 * (a21 * b1 - a22 * f1)))
        / (det * den);
    let tf2 = ((a21 * b3 - a22 * f3) * (a11 * a21 * s2 - a12 * a21 * s1)
        + den * (a12 * (a21 * b1 - a22 * f1) - a11 * (a21 * b2 - a22 * f2)))
        / (det * den);

    Ok(CoeffMatrix::new(
        [tf1, tf2, tf3],
        [tb1, tb2, tb3],
        [ts1, ts2, ts3],
    ))
}

/// Transformed terminal factor `h~ = (a21 + a22 h)/(a11 + a12 h)`.
pub fn tilde_terminal(h: f64, params: &TransformParams) -> Result<f64, TransformError> {
    let den = params.a11() + params.a12() * h;
    if den.abs() <= DEGENERACY_TOL * f64::max(1.0, h.abs()) {
        return Err(TransformError::TerminalDegenerate { value: den });
    }
    Ok((params.a21() + params.a22() * h) / den)
}

/// Numerator cubic of the transformed dominating function, built from
/// the transformed coefficients. This direct construction is the
/// authoritative one; see [`lambda0_closed_form`] for the cross-check on
/// the leading coefficient.
pub fn lambda_poly(c: &CoeffMatrix, params: &TransformParams) -> Result<Cubic, TransformError> {
    Ok(l_poly(&tilde_coeffs(c, params)?))
}

/// Leading coefficient of the transformed cubic in closed form,
/// `-(b~2 s~3 - b~3 s~2)`, for cross-checking [`lambda_poly`].
pub fn lambda0_closed_form(tilde: &CoeffMatrix) -> f64 {
    -(tilde.b2 * tilde.s3 - tilde.b3 * tilde.s2)
}

/// Admissibility of a transformed system: the same sign conditions as
/// the root-free well-posedness check, relabelled for the transformed
/// context.
pub fn check_prop42(tilde: &LinearFbsde) -> Verdict {
    check_sign_conditions(&tilde.coeffs, tilde.h, "Prop4.2")
}

/// One `(n, m, c)` triple examined during synthesis, with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub n: f64,
    pub m: f64,
    pub c: f64,
    pub outcome: String,
}

/// A fully assembled transformed system.
#[derive(Debug, Clone, Serialize)]
pub struct TransformedSystem {
    pub params: TransformParams,
    /// Transformed instance. Its `x0` is provisional (`alpha * x0`,
    /// valid when `Y~(0) = 0`); the closure through the decoupling field
    /// is applied by [`TransformedSystem::resolved_x0`].
    pub tilde: LinearFbsde,
    /// Coefficients of `Z~ = z1 X + z2 Y + z3 Z`.
    pub z_map: [f64; 3],
    /// Inverse of the transformation matrix, row-major.
    pub a_inv: [[f64; 2]; 2],
    /// `(alpha, beta)` with `X~(0) = alpha x + beta Y~(0)`.
    pub x0_relation: [f64; 2],
    /// Synthesis log; empty when the transform was built directly.
    pub candidates: Vec<Candidate>,
}

impl TransformedSystem {
    /// Builds the transformed system for explicit parameters.
    pub fn build(f: &LinearFbsde, params: TransformParams) -> Result<Self, TransformError> {
        let tc = tilde_coeffs(&f.coeffs, &params)?;
        let th = tilde_terminal(f.h, &params)?;
        let det = params.det();
        let alpha = det / params.a22();
        let beta = params.a12() / params.a22();
        let tilde = LinearFbsde::new(tc, th, alpha * f.x0, f.t).map_err(|e| {
            TransformError::Degenerate {
                detail: format!("transformed instance invalid: {e}"),
            }
        })?;
        let a_inv = [
            [params.a22() / det, -params.a12() / det],
            [-params.a21() / det, params.a11() / det],
        ];
        let z_map = [
            params.a21() * f.coeffs.s1,
            params.a21() * f.coeffs.s2,
            params.a21() * f.coeffs.s3 + params.a22(),
        ];
        Ok(Self {
            params,
            tilde,
            z_map,
            a_inv,
            x0_relation: [alpha, beta],
            candidates: Vec::new(),
        })
    }

    /// Resolves the transformed initial state through the decoupling
    /// relation `Y~(0) = u~(0) X~(0)`:
    /// `X~(0) = alpha x / (1 - beta u~(0))`.
    pub fn resolved_x0(&self, x0_original: f64, u0_tilde: f64) -> Result<f64, TransformError> {
        let den = 1.0 - self.x0_relation[1] * u0_tilde;
        if den.abs() <= DEGENERACY_TOL {
            return Err(TransformError::InitialDegenerate { value: den });
        }
        Ok(self.x0_relation[0] * x0_original / den)
    }

    /// Maps an original `(X, Y, Z)` triple forward.
    pub fn forward_triple(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let xt = p.a11() * x + p.a12() * y;
        let yt = p.a21() * x + p.a22() * y;
        let zt = self.z_map[0] * x + self.z_map[1] * y + self.z_map[2] * z;
        (xt, yt, zt)
    }

    /// Maps a transformed `(X~, Y~, Z~)` triple back to the original
    /// variables.
    pub fn invert_triple(&self, xt: f64, yt: f64, zt: f64) -> (f64, f64, f64) {
        let x = self.a_inv[0][0] * xt + self.a_inv[0][1] * yt;
        let y = self.a_inv[1][0] * xt + self.a_inv[1][1] * yt;
        let z = (zt - self.z_map[0] * x - self.z_map[1] * y) / self.z_map[2];
        (x, y, z)
    }
}

/// Options for transform synthesis.
#[derive(Debug, Clone)]
pub struct SynthesisOpts {
    /// Require `n` to be a root of the mirror cubic (decoupling). When
    /// false and the cubic is rootless, `n` is scanned over a grid too.
    pub prefer_decoupling: bool,
    pub m_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
}

impl Default for SynthesisOpts {
    fn default() -> Self {
        Self {
            prefer_decoupling: true,
            m_grid: (-50..=50).map(|i| i as f64 / 10.0).collect(),
            c_grid: vec![1.0],
        }
    }
}

/// Errors from transform synthesis.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("the mirror cubic has no real root, so no decoupling transform exists")]
    NoDecouplingRoot,
    #[error("no admissible transform found over {tried} candidate parameter triples")]
    NoTransformFound { tried: usize },
}

/// Searches for a transformed system that is decoupled (via a root `n`
/// of the mirror cubic) and admissible (sign conditions fire on the
/// transformed instance). Roots are tried in ascending magnitude,
/// negative first on ties; the first admissible candidate wins.
pub fn synthesize_transform(
    f: &LinearFbsde,
    opts: &SynthesisOpts,
) -> Result<TransformedSystem, SynthesisError> {
    let hp = h_poly(&f.coeffs);
    let mut roots = real_roots(&hp, 1e-12).unwrap_or_default();
    roots.sort_by(|a, b| {
        (a.abs(), *a > 0.0)
            .partial_cmp(&(b.abs(), *b > 0.0))
            .unwrap()
    });
    let n_candidates: Vec<f64> = if roots.is_empty() {
        if opts.prefer_decoupling {
            return Err(SynthesisError::NoDecouplingRoot);
        }
        opts.m_grid.clone()
    } else {
        roots
    };

    let mut candidates: Vec<Candidate> = Vec::new();
    for &n in &n_candidates {
        for &m in &opts.m_grid {
            if (m - n).abs() < 0.05 {
                continue;
            }
            for &c in &opts.c_grid {
                let params = TransformParams::new(m, n, c);
                let mut record = Candidate {
                    n,
                    m,
                    c,
                    outcome: String::new(),
                };
                match TransformedSystem::build(f, params) {
                    Err(e) => {
                        record.outcome = format!("rejected: {e}");
                        candidates.push(record);
                    }
                    Ok(mut ts) => {
                        if ts.tilde.coeffs.s3.abs() < MIN_TILDE_S3 {
                            record.outcome =
                                "rejected: transformed s3 vanishes, admissibility check vacuous"
                                    .to_string();
                            candidates.push(record);
                            continue;
                        }
                        let verdict = check_prop42(&ts.tilde);
                        if verdict.is_well_posed() {
                            record.outcome = format!(
                                "accepted: {}",
                                verdict.criterion.as_deref().unwrap_or("?")
                            );
                            candidates.push(record);
                            ts.candidates = candidates;
                            return Ok(ts);
                        }
                        record.outcome = "not admissible".to_string();
                        candidates.push(record);
                    }
                }
            }
        }
    }
    Err(SynthesisError::NoTransformFound {
        tried: candidates.len(),
    })
}
