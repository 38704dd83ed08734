//! Equivalent coefficient matrices.
//!
//! Two one-parameter families of coefficient changes — `B(p)` shifting
//! drift rows along the diffusion row, `C(q)` mixing the `Y`/`Z` columns
//! — leave the dominating function invariant, so either member of a
//! family is well-posed exactly when the original is. Their composition
//! `D(p, q)` and two single-row variants complete the toolbox. On top of
//! the generators sit grid searches for parameters that make the
//! symmetrized form definite, i.e. that repair a failed monotonicity
//! check without touching well-posedness.

use serde::Serialize;

use crate::criteria::{check_monotonicity, symmetrize, Sym3, Verdict};
use crate::types::CoeffMatrix;

/// Determinant magnitude at or below which a grid point is treated as a
/// boundary point and excluded (the sign conditions are strict).
pub const DET_BOUNDARY_TOL: f64 = 1e-9;

/// Which generator produced an equivalent matrix, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EquivKind {
    B { p: f64 },
    C { q: f64 },
    BVariant { p: f64 },
    CVariant { q: f64 },
    D { p: f64, q: f64 },
}

/// A coefficient matrix equivalent to some original, tagged with the
/// generator that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalentMatrix {
    pub kind: EquivKind,
    pub matrix: CoeffMatrix,
}

/// Drift-shift generator: moves `p` times the diffusion row into the
/// forward drift row and absorbs `p` into the `Z` slot of the driver.
pub fn equiv_b(c: &CoeffMatrix, p: f64) -> EquivalentMatrix {
    let mut m = *c;
    m.f3 -= p;
    m.b1 += c.s1 * p;
    m.b2 += c.s2 * p;
    m.b3 += c.s3 * p;
    EquivalentMatrix {
        kind: EquivKind::B { p },
        matrix: m,
    }
}

/// Column-mix generator: substitutes `Z + qY` for `Z` throughout.
pub fn equiv_c(c: &CoeffMatrix, q: f64) -> EquivalentMatrix {
    let mut m = *c;
    m.f2 += c.f3 * q;
    m.b2 += c.b3 * q;
    m.s1 -= q;
    m.s2 += c.s3 * q;
    EquivalentMatrix {
        kind: EquivKind::C { q },
        matrix: m,
    }
}

/// Variant of [`equiv_b`] that routes the `s1 p` shift into the driver's
/// `Y` slot instead of the forward drift's `X` slot.
pub fn equiv_b_variant(c: &CoeffMatrix, p: f64) -> EquivalentMatrix {
    let mut m = *c;
    m.f2 += c.s1 * p;
    m.f3 -= p;
    m.b2 += c.s2 * p;
    m.b3 += c.s3 * p;
    EquivalentMatrix {
        kind: EquivKind::BVariant { p },
        matrix: m,
    }
}

/// Variant of [`equiv_c`] that routes the `f3 q` mix into the forward
/// drift's `X` slot instead of the driver's `Y` slot.
pub fn equiv_c_variant(c: &CoeffMatrix, q: f64) -> EquivalentMatrix {
    let mut m = *c;
    m.b1 += c.f3 * q;
    m.b2 += c.b3 * q;
    m.s1 -= q;
    m.s2 += c.s3 * q;
    EquivalentMatrix {
        kind: EquivKind::CVariant { q },
        matrix: m,
    }
}

/// Composite generator: [`equiv_c`] applied after [`equiv_b`] with the
/// same parameters, entry for entry.
pub fn equiv_d(c: &CoeffMatrix, p: f64, q: f64) -> EquivalentMatrix {
    let b = equiv_b(c, p);
    let d = equiv_c(&b.matrix, q);
    EquivalentMatrix {
        kind: EquivKind::D { p, q },
        matrix: d.matrix,
    }
}

/// Symmetrized form of the `B(p)` image.
pub fn bhat(c: &CoeffMatrix, p: f64) -> Sym3 {
    symmetrize(&equiv_b(c, p).matrix)
}

/// Symmetrized form of the `C(q)` image.
pub fn chat(c: &CoeffMatrix, q: f64) -> Sym3 {
    symmetrize(&equiv_c(c, q).matrix)
}

/// One feasible grid point from a parameter search.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibleEntry {
    pub param: f64,
    pub det2: f64,
    pub det3: f64,
    pub verdict: Verdict,
}

/// Errors from the feasibility searches.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error(
        "neither sign gate holds (need h < 0 and f1 < 0, or h > 0 and f1 > 0); \
         h = {h}, f1 = {f1}"
    )]
    EmptyGate { h: f64, f1: f64 },
}

/// The two admissible sign configurations for a feasibility search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GateCase {
    /// `h < 0`, `f1 < 0`: look for a positive-definite symmetrized form,
    /// i.e. both leading determinants positive.
    NegativeSide,
    /// `h > 0`, `f1 > 0`: look for a negative-definite form, i.e.
    /// alternating minors — positive 2x2, negative 3x3.
    PositiveSide,
}

fn gate(c: &CoeffMatrix, h: f64) -> Result<GateCase, SearchError> {
    if h < 0.0 && c.f1 < 0.0 {
        Ok(GateCase::NegativeSide)
    } else if h > 0.0 && c.f1 > 0.0 {
        Ok(GateCase::PositiveSide)
    } else {
        Err(SearchError::EmptyGate { h, f1: c.f1 })
    }
}

fn search_grid(
    c: &CoeffMatrix,
    h: f64,
    range: (f64, f64),
    step: f64,
    image: impl Fn(&CoeffMatrix, f64) -> CoeffMatrix,
) -> Result<Vec<FeasibleEntry>, SearchError> {
    let case = gate(c, h)?;
    let (lo, hi) = range;
    let n = ((hi - lo) / step).round().max(0.0) as usize;
    let mut out = Vec::new();
    for i in 0..=n {
        let param = lo + i as f64 * step;
        let m = symmetrize(&image(c, param));
        let (_, det2, det3) = m.minors();
        if det2.abs() <= DET_BOUNDARY_TOL || det3.abs() <= DET_BOUNDARY_TOL {
            continue;
        }
        let pattern = match case {
            GateCase::NegativeSide => det2 > DET_BOUNDARY_TOL && det3 > DET_BOUNDARY_TOL,
            GateCase::PositiveSide => det2 > DET_BOUNDARY_TOL && det3 < -DET_BOUNDARY_TOL,
        };
        if !pattern {
            continue;
        }
        let verdict = check_monotonicity(&image(c, param), h);
        // The sign pattern is Sylvester's criterion for the definiteness
        // the verdict checks, so this filter only drops grid points
        // sitting inside the definiteness margin.
        if !verdict.is_well_posed() {
            continue;
        }
        out.push(FeasibleEntry {
            param,
            det2,
            det3,
            verdict,
        });
    }
    Ok(out)
}

/// Scans `p` over a uniform grid and returns every value for which the
/// symmetrized `B(p)` image satisfies the definiteness sign pattern of
/// the applicable gate case, paired with the monotonicity verdict on the
/// transformed matrix (always `WellPosed` for returned entries).
pub fn feasible_p(
    c: &CoeffMatrix,
    h: f64,
    range: (f64, f64),
    step: f64,
) -> Result<Vec<FeasibleEntry>, SearchError> {
    search_grid(c, h, range, step, |c, p| equiv_b(c, p).matrix)
}

/// Same search over the `C(q)` family.
pub fn feasible_q(
    c: &CoeffMatrix,
    h: f64,
    range: (f64, f64),
    step: f64,
) -> Result<Vec<FeasibleEntry>, SearchError> {
    search_grid(c, h, range, step, |c, q| equiv_c(c, q).matrix)
}
