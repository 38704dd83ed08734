//! Monte Carlo solution of well-posed linear FBSDEs.
//!
//! With a bounded decoupling field `u` (from the dominating ODE) the
//! coupled system collapses to a scalar closed SDE for `X`: substituting
//! `Y = u X` and `Z = zeta X` with `zeta = u (s1 + s2 u)/(1 - s3 u)`
//! makes drift and diffusion multiplicative. Paths are simulated by
//! Euler–Maruyama; the backward equation is then verified a posteriori
//! through its integrated residual, which must shrink with the step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dominating::{integrate_dominating, DominatingFn, OdeSolution, OdeStatus};
use crate::types::LinearFbsde;

/// Path abort threshold on `|X|`.
pub const PATH_BLOWUP_LIMIT: f64 = 1e12;
/// Residual acceptance constant: mean residual must stay below
/// `RESIDUAL_C * sqrt(dt) * (1 + mean sup |X|)`.
pub const RESIDUAL_C: f64 = 5.0;
/// Required decay factor of the mean residual when the step is halved.
pub const RESIDUAL_DECAY_MIN: f64 = 1.2;

/// Errors from field construction and simulation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("dominating ODE not bounded on the horizon: {status:?}")]
    NotWellPosedNumerically { status: OdeStatus },
    #[error("field grid (dt = {field_dt}) does not match requested dt = {dt}")]
    GridMismatch { field_dt: f64, dt: f64 },
    #[error("decoupling field hits the diffusion pole at grid index {index}")]
    FieldSingular { index: usize },
}

/// The linear decoupling field `Y = u(t) X` and the induced martingale
/// ratio `Z = zeta(t) X`, tabulated on the simulation grid.
#[derive(Debug, Clone, Serialize)]
pub struct DecouplingField {
    pub ode: OdeSolution,
    pub z_ratio: Vec<f64>,
}

impl DecouplingField {
    pub fn u0(&self) -> f64 {
        self.ode.values[0]
    }
}

/// Integrates the dominating ODE at the simulation step and tabulates
/// the field; fails when the trajectory is not bounded.
pub fn build_field(f: &LinearFbsde, dt: f64) -> Result<DecouplingField, SolverError> {
    let dom = DominatingFn::new(f.coeffs);
    let ode = integrate_dominating(&dom, f.h, f.t, dt);
    if !ode.status.is_bounded() {
        return Err(SolverError::NotWellPosedNumerically { status: ode.status });
    }
    let s = f.coeffs;
    let mut z_ratio = Vec::with_capacity(ode.values.len());
    for (i, &u) in ode.values.iter().enumerate() {
        let den = 1.0 - s.s3 * u;
        if den == 0.0 || !den.is_finite() {
            return Err(SolverError::FieldSingular { index: i });
        }
        let z = u * (s.s1 + s.s2 * u) / den;
        if !z.is_finite() {
            return Err(SolverError::FieldSingular { index: i });
        }
        z_ratio.push(z);
    }
    Ok(DecouplingField { ode, z_ratio })
}

/// Per-path RNG: one ChaCha stream per path index so the ensemble is
/// independent of scheduling and thread count.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Absolute-value statistics of a per-path quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean_abs: f64,
    pub max_abs: f64,
}

/// One stored path of the solution triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathTriple {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// A time grid plus a set of stored paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub grid: Vec<f64>,
    pub paths: Vec<PathTriple>,
}

/// Summary of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// `|Y(T) - h X(T)|`; zero by construction since the field grid ends
    /// exactly at `h`.
    pub terminal_residual: Stats,
    /// `|Y(0) - Y(T) - sum f dt + sum Z dW|` per path.
    pub bsde_residual: Stats,
    pub x_terminal_mean: f64,
    pub x_terminal_var: f64,
    /// `Y(0) = u(0) x0`, deterministic.
    pub y0: f64,
    /// Mean over paths of `sup_t |X(t)|`; scales the residual bound.
    pub mean_sup_x: f64,
    pub aborted_paths: usize,
    /// First `store_limit` paths, for export and inversion.
    pub ensemble: PathEnsemble,
}

struct PathOutcome {
    terminal_res: f64,
    bsde_res: f64,
    sup_x: f64,
    x_terminal: f64,
    aborted: bool,
    stored: Option<PathTriple>,
}

fn run_path(
    f: &LinearFbsde,
    field: &DecouplingField,
    seed: u64,
    idx: usize,
    store: bool,
) -> PathOutcome {
    let u = &field.ode.values;
    let zr = &field.z_ratio;
    let n = u.len() - 1;
    let dt = field.ode.dt;
    let sqrt_dt = dt.sqrt();
    let c = f.coeffs;
    let mut rng = path_rng(seed, idx as u64);

    let mut x = f.x0;
    let y0 = u[0] * x;
    let mut sup_x = x.abs();
    let mut int_f = 0.0;
    let mut int_z_dw = 0.0;
    let mut stored = store.then(|| PathTriple {
        x: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n + 1),
    });
    if let Some(p) = stored.as_mut() {
        p.x.push(x);
        p.y.push(y0);
        p.z.push(zr[0] * x);
    }
    let mut aborted = false;
    for k in 0..n {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let dw = sqrt_dt * xi;
        let yk = u[k] * x;
        let zk = zr[k] * x;
        int_f += (c.f1 * x + c.f2 * yk + c.f3 * zk) * dt;
        int_z_dw += zk * dw;
        let mu = c.b1 + c.b2 * u[k] + c.b3 * zr[k];
        let sg = c.s1 + c.s2 * u[k] + c.s3 * zr[k];
        x *= 1.0 + mu * dt + sg * dw;
        if !x.is_finite() || x.abs() > PATH_BLOWUP_LIMIT {
            aborted = true;
            break;
        }
        sup_x = sup_x.max(x.abs());
        if let Some(p) = stored.as_mut() {
            p.x.push(x);
            p.y.push(u[k + 1] * x);
            p.z.push(zr[k + 1] * x);
        }
    }
    if aborted {
        return PathOutcome {
            terminal_res: 0.0,
            bsde_res: 0.0,
            sup_x,
            x_terminal: f64::NAN,
            aborted: true,
            stored: None,
        };
    }
    let y_terminal = u[n] * x;
    PathOutcome {
        terminal_res: (y_terminal - f.h * x).abs(),
        bsde_res: (y0 - y_terminal - int_f + int_z_dw).abs(),
        sup_x,
        x_terminal: x,
        aborted: false,
        stored,
    }
}

/// Simulates `n_paths` Euler–Maruyama paths of the closed system and
/// gathers residual statistics. Statistics are reduced in path-index
/// order, so identical inputs give identical results regardless of the
/// executing thread pool.
pub fn simulate(
    f: &LinearFbsde,
    field: &DecouplingField,
    n_paths: usize,
    dt: f64,
    seed: u64,
    store_limit: usize,
) -> Result<SimResult, SolverError> {
    if (field.ode.dt - dt).abs() > 1e-12 * f64::max(1.0, dt.abs()) {
        return Err(SolverError::GridMismatch {
            field_dt: field.ode.dt,
            dt,
        });
    }
    let outcomes: Vec<PathOutcome> = (0..n_paths)
        .into_par_iter()
        .map(|idx| run_path(f, field, seed, idx, idx < store_limit))
        .collect();

    let mut term = Stats {
        mean_abs: 0.0,
        max_abs: 0.0,
    };
    let mut bsde = Stats {
        mean_abs: 0.0,
        max_abs: 0.0,
    };
    let mut sum_x = 0.0;
    let mut sum_x2 = 0.0;
    let mut sum_sup = 0.0;
    let mut aborted = 0usize;
    let mut paths = Vec::new();
    for o in outcomes {
        if o.aborted {
            aborted += 1;
            continue;
        }
        term.mean_abs += o.terminal_res;
        term.max_abs = term.max_abs.max(o.terminal_res);
        bsde.mean_abs += o.bsde_res;
        bsde.max_abs = bsde.max_abs.max(o.bsde_res);
        sum_x += o.x_terminal;
        sum_x2 += o.x_terminal * o.x_terminal;
        sum_sup += o.sup_x;
        if let Some(p) = o.stored {
            paths.push(p);
        }
    }
    let live = (n_paths - aborted).max(1) as f64;
    term.mean_abs /= live;
    bsde.mean_abs /= live;
    let x_mean = sum_x / live;
    let x_var = (sum_x2 / live - x_mean * x_mean).max(0.0);
    Ok(SimResult {
        n_paths,
        dt: field.ode.dt,
        seed,
        terminal_residual: term,
        bsde_residual: bsde,
        x_terminal_mean: x_mean,
        x_terminal_var: x_var,
        y0: field.u0() * f.x0,
        mean_sup_x: sum_sup / live,
        aborted_paths: aborted,
        ensemble: PathEnsemble {
            grid: field.ode.grid.clone(),
            paths,
        },
    })
}

/// Residual verification across two step sizes (`fine.dt` should be
/// half of `coarse.dt`).
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub coarse_mean: f64,
    pub fine_mean: f64,
    pub coarse_bound: f64,
    pub fine_bound: f64,
    pub decay_ratio: f64,
    pub bounds_ok: bool,
    pub decay_ok: bool,
    pub terminal_ok: bool,
    pub pass: bool,
}

/// Checks that residual means sit under the `sqrt(dt)`-calibrated bound
/// at both step sizes and shrink by at least [`RESIDUAL_DECAY_MIN`] from
/// the coarse run to the fine one.
pub fn verify_bsde(coarse: &SimResult, fine: &SimResult) -> VerifyReport {
    let bound = |r: &SimResult| RESIDUAL_C * r.dt.sqrt() * (1.0 + r.mean_sup_x);
    let coarse_bound = bound(coarse);
    let fine_bound = bound(fine);
    let bounds_ok = coarse.bsde_residual.mean_abs <= coarse_bound
        && fine.bsde_residual.mean_abs <= fine_bound;
    let (decay_ratio, decay_ok) = if fine.bsde_residual.mean_abs == 0.0 {
        (f64::INFINITY, coarse.bsde_residual.mean_abs == 0.0)
    } else {
        let r = coarse.bsde_residual.mean_abs / fine.bsde_residual.mean_abs;
        (r, r >= RESIDUAL_DECAY_MIN)
    };
    let terminal_ok =
        coarse.terminal_residual.max_abs == 0.0 && fine.terminal_residual.max_abs == 0.0;
    VerifyReport {
        coarse_mean: coarse.bsde_residual.mean_abs,
        fine_mean: fine.bsde_residual.mean_abs,
        coarse_bound,
        fine_bound,
        decay_ratio,
        bounds_ok,
        decay_ok,
        terminal_ok,
        pass: bounds_ok && decay_ok && terminal_ok,
    }
}
