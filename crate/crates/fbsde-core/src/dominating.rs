//! The scalar dominating function attached to a coefficient matrix, its
//! cubic numerator, real-root isolation and the terminal-value ODE whose
//! bounded solutions certify well-posedness.
//!
//! For a coefficient matrix the dominating function is the rational map
//! `F(y) = L(y) / (1 - s3 y)` where `L` is a cubic in the matrix entries.
//! The decoupling field `u` of the FBSDE solves the terminal-value problem
//! `u' = -F(u)` on `[0, T]` with `u(T) = h`; a trajectory that stays finite
//! and clear of the pole on the whole horizon certifies a uniformly
//! Lipschitz decoupling field and hence a well-posed instance.

use crate::types::{CoeffMatrix, Cubic, EvalError, RootError};

/// Relative guard for pole proximity inside the ODE integrator.
pub const POLE_GUARD_RTOL: f64 = 1e-8;
/// Relative guard for a single function evaluation.
pub const EVAL_GUARD_RTOL: f64 = 1e-12;
/// Magnitude at which a trajectory is declared to blow up.
pub const BLOWUP_LIMIT: f64 = 1e8;
/// Per-substep relative motion cap inside one output cell. Stiff boundary
/// layers (huge `|F|` right next to the pole) make a fixed Runge-Kutta
/// step leap across the pole; capping the motion per stage keeps the
/// integrator on the correct side.
const SUBSTEP_MOTION_CAP: f64 = 0.25;
/// Hard cap on substeps per output cell. Exceeding it means the slope
/// stays enormous along the whole cell, which only happens on a pole
/// approach, so the trajectory is classified as singular.
const SUBSTEP_MAX: usize = 1 << 16;

/// Cubic numerator `L(y)` of the dominating function.
pub fn l_poly(c: &CoeffMatrix) -> Cubic {
    Cubic::new(
        c.b3 * c.s2 - c.b2 * c.s3,
        c.b2 + c.s2 * c.f3 - c.s3 * c.f2 + c.s1 * c.b3 - c.s3 * c.b1,
        c.f2 + c.b1 + c.f3 * c.s1 - c.f1 * c.s3,
        c.f1,
    )
}

/// Cubic `H(y)` whose real roots, used as the `n` parameter of a state
/// transform, remove the `X` dependence from the transformed driver.
/// Structurally `H(y) = L(-y)`.
pub fn h_poly(c: &CoeffMatrix) -> Cubic {
    let l = l_poly(c);
    Cubic::new(-l.c3, l.c2, -l.c1, l.c0)
}

/// Dominating function `F(y) = L(y) / (1 - s3 y)` of a coefficient matrix.
#[derive(Debug, Clone, Copy)]
pub struct DominatingFn {
    pub coeffs: CoeffMatrix,
    pub l: Cubic,
    /// Pole location `1/s3`, absent when `s3 = 0`.
    pub singular_point: Option<f64>,
}

impl DominatingFn {
    pub fn new(coeffs: CoeffMatrix) -> Self {
        let l = l_poly(&coeffs);
        let singular_point = if coeffs.s3 == 0.0 {
            None
        } else {
            Some(1.0 / coeffs.s3)
        };
        Self {
            coeffs,
            l,
            singular_point,
        }
    }

    fn denominator(&self, y: f64) -> f64 {
        1.0 - self.coeffs.s3 * y
    }

    /// Evaluates `F(y)`, rejecting points within [`EVAL_GUARD_RTOL`]
    /// (relative) of the pole.
    pub fn eval(&self, y: f64) -> Result<f64, EvalError> {
        let den = self.denominator(y);
        if den.abs() <= EVAL_GUARD_RTOL * f64::max(1.0, (self.coeffs.s3 * y).abs()) {
            return Err(EvalError::SingularEvaluation { y });
        }
        Ok(self.l.eval(y) / den)
    }

    fn eval_guarded(&self, y: f64) -> Option<f64> {
        let den = self.denominator(y);
        if den.abs() <= POLE_GUARD_RTOL * f64::max(1.0, (self.coeffs.s3 * y).abs()) {
            return None;
        }
        Some(self.l.eval(y) / den)
    }
}

/// All real roots of a cubic (or degenerate lower-degree) polynomial,
/// ascending, deduplicated.
///
/// Strategy: deflate near-zero leading coefficients, split the Cauchy
/// bound interval at the critical points of the polynomial so every piece
/// is monotone, bisect sign changes, and pick up tangent (double) roots
/// at critical points where `|p|` is below `tol * scale`.
pub fn real_roots(p: &Cubic, tol: f64) -> Result<Vec<f64>, RootError> {
    let scale = p.scale();
    if scale == 0.0 {
        return Err(RootError::ZeroPolynomial);
    }
    // Deflation: drop leading coefficients that are zero relative to the
    // coefficient scale so the Cauchy bound stays meaningful.
    let mut coeffs: Vec<f64> = vec![p.c3, p.c2, p.c1, p.c0];
    while coeffs.len() > 1 && coeffs[0].abs() <= 1e-14 * scale {
        coeffs.remove(0);
    }
    let deg = coeffs.len() - 1;
    let eval = |y: f64| -> f64 { coeffs.iter().fold(0.0, |acc, c| acc * y + c) };
    match deg {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![-coeffs[1] / coeffs[0]]),
        _ => {}
    }
    // Cauchy bound: all real roots lie in [-r, r].
    let r = 1.0
        + coeffs[1..]
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs()))
            / coeffs[0].abs();
    // Critical points split the interval into monotone pieces.
    let mut crit: Vec<f64> = Vec::new();
    if deg == 2 {
        crit.push(-coeffs[1] / (2.0 * coeffs[0]));
    } else {
        let (a, b, c) = (3.0 * coeffs[0], 2.0 * coeffs[1], coeffs[2]);
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let mut t1 = (-b - sq) / (2.0 * a);
            let mut t2 = (-b + sq) / (2.0 * a);
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            crit.push(t1);
            crit.push(t2);
        }
    }
    let mut pts = vec![-r];
    pts.extend(crit.iter().copied().filter(|t| -r < *t && *t < r));
    pts.push(r);

    let mut roots: Vec<f64> = Vec::new();
    for w in pts.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (mut flo, fhi) = (eval(lo), eval(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo * fhi >= 0.0 {
            continue;
        }
        // Bisection to absolute resolution `tol`, then a few Newton
        // polish steps to push the residual toward machine precision.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = eval(mid);
            if fm == 0.0 || hi - lo <= tol {
                break;
            }
            if flo * fm < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        let mut root = 0.5 * (lo + hi);
        for _ in 0..3 {
            let d = p.deriv(root);
            if d == 0.0 {
                break;
            }
            let step = eval(root) / d;
            if !step.is_finite() {
                break;
            }
            let next = root - step;
            if next >= lo - tol && next <= hi + tol {
                root = next;
            } else {
                break;
            }
        }
        roots.push(root);
    }
    if eval(r) == 0.0 {
        roots.push(r);
    }
    // Tangent roots: a critical point where the polynomial vanishes to
    // tolerance is a double root without any sign change.
    for t in crit {
        if eval(t).abs() <= tol.max(1e-12) * scale {
            roots.push(t);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::new();
    for root in roots {
        if out
            .last()
            .map(|last| (root - last).abs() > 1e-9 * f64::max(1.0, root.abs()))
            .unwrap_or(true)
        {
            out.push(root);
        }
    }
    Ok(out)
}

/// Outcome of integrating the dominating ODE backward from `T`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum OdeStatus {
    /// The trajectory stayed finite and clear of the pole on `[0, T]`.
    Bounded,
    /// Pole proximity or a pole crossing was detected; payload is the
    /// forward time at which integration halted.
    Singular(f64),
    /// The trajectory magnitude exceeded [`BLOWUP_LIMIT`] at this time.
    BlowUp(f64),
}

impl OdeStatus {
    pub fn is_bounded(&self) -> bool {
        matches!(self, OdeStatus::Bounded)
    }
}

/// Trajectory of the dominating ODE on an ascending uniform grid.
///
/// `grid` and `values` cover the computed portion of `[0, T]`; for a
/// halted run that is `[t*, T]` where `t*` is the halt time recorded in
/// `status`. The terminal entry always equals `h` exactly.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OdeSolution {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub status: OdeStatus,
    pub dt: f64,
}

impl OdeSolution {
    /// Value at `t = 0`; only meaningful for bounded runs.
    pub fn initial_value(&self) -> f64 {
        self.values[0]
    }
}

/// Shared backward RK4 engine. `f` returns `None` near the pole;
/// `crossed` reports whether the pole separates two consecutive values.
fn integrate_backward(
    f: &dyn Fn(f64) -> Option<f64>,
    crossed: &dyn Fn(f64, f64) -> bool,
    h: f64,
    t_horizon: f64,
    dt: f64,
) -> OdeSolution {
    let n = (t_horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = t_horizon / n as f64;
    // Backward in forward time = forward in s = T - t, with slope +F.
    let mut v = h;
    let mut values = vec![h];
    let mut status = OdeStatus::Bounded;
    'outer: for k in 0..n {
        let cell_end_t = t_horizon - (k + 1) as f64 * dt;
        let mut remaining = dt;
        let mut substeps = 0usize;
        while remaining > 0.0 {
            let k1 = match f(v) {
                Some(val) => val,
                None => {
                    status = OdeStatus::Singular(cell_end_t.max(0.0));
                    break 'outer;
                }
            };
            // Stiffness limiter: bound the predicted motion of this step.
            let mut step = remaining;
            let cap = SUBSTEP_MOTION_CAP * f64::max(1.0, v.abs());
            if k1.abs() * step > cap {
                step = cap / k1.abs();
            }
            substeps += 1;
            if substeps > SUBSTEP_MAX {
                status = OdeStatus::Singular(cell_end_t.max(0.0));
                break 'outer;
            }
            let stage = |y: f64| f(y);
            let k2 = match stage(v + 0.5 * step * k1) {
                Some(val) => val,
                None => {
                    status = OdeStatus::Singular(cell_end_t.max(0.0));
                    break 'outer;
                }
            };
            let k3 = match stage(v + 0.5 * step * k2) {
                Some(val) => val,
                None => {
                    status = OdeStatus::Singular(cell_end_t.max(0.0));
                    break 'outer;
                }
            };
            let k4 = match stage(v + step * k3) {
                Some(val) => val,
                None => {
                    status = OdeStatus::Singular(cell_end_t.max(0.0));
                    break 'outer;
                }
            };
            let next = v + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !next.is_finite() || next.abs() > BLOWUP_LIMIT {
                status = OdeStatus::BlowUp(cell_end_t.max(0.0));
                break 'outer;
            }
            if crossed(v, next) {
                status = OdeStatus::Singular(cell_end_t.max(0.0));
                break 'outer;
            }
            v = next;
            remaining -= step;
        }
        values.push(v);
    }
    // `values` is ordered from t = T backwards; flip to ascending time.
    values.reverse();
    let computed = values.len();
    let first_t = t_horizon - (computed - 1) as f64 * dt;
    let grid: Vec<f64> = (0..computed)
        .map(|i| (first_t + i as f64 * dt).max(0.0))
        .collect();
    OdeSolution {
        grid,
        values,
        status,
        dt,
    }
}

/// Integrates the dominating ODE `u' = -F(u)`, `u(T) = h` backward on a
/// uniform grid of step at most `dt`.
pub fn integrate_dominating(f: &DominatingFn, h: f64, t_horizon: f64, dt: f64) -> OdeSolution {
    let s3 = f.coeffs.s3;
    let fun = move |y: f64| f.eval_guarded(y);
    let crossed = move |a: f64, b: f64| {
        let da = 1.0 - s3 * a;
        let db = 1.0 - s3 * b;
        da * db < 0.0
            || db.abs() <= POLE_GUARD_RTOL * f64::max(1.0, (s3 * b).abs())
    };
    integrate_backward(&fun, &crossed, h, t_horizon, dt)
}

/// Per-entry interval box for time-varying coefficients together with the
/// terminal factor range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffBounds {
    pub lo: CoeffMatrix,
    pub hi: CoeffMatrix,
    pub h_lo: f64,
    pub h_hi: f64,
}

/// Errors from envelope construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("interval bound {index} has lo > hi or a non-finite endpoint")]
    IntervalInvalid { index: usize },
}

impl CoeffBounds {
    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let lo = self.lo.entries();
        let hi = self.hi.entries();
        for i in 0..9 {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                return Err(EnvelopeError::IntervalInvalid { index: i });
            }
        }
        if !(self.h_lo.is_finite() && self.h_hi.is_finite() && self.h_lo <= self.h_hi) {
            return Err(EnvelopeError::IntervalInvalid { index: 9 });
        }
        Ok(())
    }

    /// The `2^9` corner matrices of the box. The dominating function is
    /// affine in eight entries and monotone in `s3` at fixed `y`, so its
    /// pointwise envelope over the box is attained at a corner.
    fn corners(&self) -> Vec<DominatingFn> {
        let lo = self.lo.entries();
        let hi = self.hi.entries();
        (0..(1usize << 9))
            .map(|mask| {
                let mut e = [0.0f64; 9];
                for (i, slot) in e.iter_mut().enumerate() {
                    *slot = if mask & (1 << i) != 0 { hi[i] } else { lo[i] };
                }
                DominatingFn::new(CoeffMatrix::new(
                    [e[0], e[1], e[2]],
                    [e[3], e[4], e[5]],
                    [e[6], e[7], e[8]],
                ))
            })
            .collect()
    }
}

/// Integrates the upper and lower dominating envelopes of a coefficient
/// box backward from `h_hi` (upper) and `h_lo` (lower). Both trajectories
/// bounded certifies the whole box.
pub fn integrate_dominating_envelope(
    bounds: &CoeffBounds,
    t_horizon: f64,
    dt: f64,
) -> Result<(OdeSolution, OdeSolution), EnvelopeError> {
    bounds.validate()?;
    let corners = bounds.corners();
    let (s3_lo, s3_hi) = (bounds.lo.s3, bounds.hi.s3);
    let envelope = |upper: bool| {
        let corners = corners.clone();
        move |y: f64| -> Option<f64> {
            // The pole sweeps the interval of 1/s3 values; reject any y
            // whose reciprocal the s3 interval contains.
            if y != 0.0 {
                let inv = 1.0 / y;
                if s3_lo <= inv && inv <= s3_hi {
                    return None;
                }
            }
            let mut best: Option<f64> = None;
            for c in &corners {
                let v = c.eval_guarded(y)?;
                best = Some(match best {
                    None => v,
                    Some(b) if upper => b.max(v),
                    Some(b) => b.min(v),
                });
            }
            best
        }
    };
    let crossed = move |a: f64, b: f64| {
        // Monotone in s3 at fixed value, so endpoint denominators witness
        // any crossing of the swept pole.
        for s3 in [s3_lo, s3_hi] {
            let da = 1.0 - s3 * a;
            let db = 1.0 - s3 * b;
            if da * db < 0.0 || db.abs() <= POLE_GUARD_RTOL * f64::max(1.0, (s3 * b).abs()) {
                return true;
            }
        }
        false
    };
    let upper = integrate_backward(&envelope(true), &crossed, bounds.h_hi, t_horizon, dt);
    let lower = integrate_backward(&envelope(false), &crossed, bounds.h_lo, t_horizon, dt);
    Ok((upper, lower))
}
