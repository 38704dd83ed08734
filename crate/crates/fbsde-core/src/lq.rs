//! Linear-quadratic stochastic control via the stochastic Hamiltonian
//! system.
//!
//! The maximum principle turns the scalar LQ problem
//! `dx = (Ax + Bu) dt + (Cx + Du) dW`, cost
//! `J = 1/2 E[ int (R x^2 + 2 S u x + N u^2) dt + Q x(T)^2 ]`,
//! into a fully coupled linear FBSDE for the state and adjoint pair,
//! with the candidate optimal control affine in `(x, y, z)`. This module
//! builds that system, runs the well-posedness chain on it, solves it
//! (directly or through a decoupling transform) and verifies first-order
//! stationarity of the recovered control by finite differences under
//! common random numbers.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    check_lemma38, check_monotonicity, check_thm39, Evidence, Relation, Verdict,
};
use crate::solver::{build_field, path_rng, simulate, DecouplingField, SimResult, SolverError};
use crate::transform::{
    check_prop42, synthesize_transform, SynthesisOpts, TransformError, TransformParams,
    TransformedSystem,
};
use crate::types::{CoeffMatrix, LinearFbsde};

/// Stationarity acceptance constant: the centered-difference derivative
/// must be at most `STATIONARITY_C * eps * max(1, |J0|)`.
pub const STATIONARITY_C: f64 = 10.0;

/// Scalar LQ problem data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqProblem {
    /// State drift coefficient.
    #[serde(rename = "A")]
    pub a: f64,
    /// Control drift coefficient.
    #[serde(rename = "B")]
    pub b: f64,
    /// State diffusion coefficient.
    #[serde(rename = "C")]
    pub c: f64,
    /// Control diffusion coefficient.
    #[serde(rename = "D")]
    pub d: f64,
    /// State cost weight.
    #[serde(rename = "R")]
    pub r: f64,
    /// Cross cost weight.
    #[serde(rename = "S")]
    pub s: f64,
    /// Control cost weight (must be nonzero).
    #[serde(rename = "N")]
    pub n: f64,
    /// Terminal cost weight.
    #[serde(rename = "Q")]
    pub q: f64,
    pub x0: f64,
    #[serde(rename = "T")]
    pub t: f64,
}

/// Errors from LQ operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LqError {
    #[error("control weight N must be nonzero")]
    NDegenerate,
    #[error("invalid LQ problem: {detail}")]
    InvalidProblem { detail: String },
    #[error("instance is not certified well-posed and no admissible transform was found: {detail}")]
    Unsolvable { detail: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

impl LqProblem {
    pub fn validate(&self) -> Result<(), LqError> {
        let vals = [
            self.a, self.b, self.c, self.d, self.r, self.s, self.n, self.q, self.x0, self.t,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(LqError::InvalidProblem {
                detail: "non-finite entry".to_string(),
            });
        }
        if self.n == 0.0 {
            return Err(LqError::NDegenerate);
        }
        if self.t <= 0.0 {
            return Err(LqError::InvalidProblem {
                detail: format!("horizon T = {} must be positive", self.t),
            });
        }
        Ok(())
    }

    /// Left-endpoint quadrature of the running cost plus exact terminal
    /// term, on states `x[0..=n]` and controls `u[0..n]`.
    pub fn cost(&self, x: &[f64], u: &[f64], dt: f64) -> f64 {
        let n = u.len();
        let mut run = 0.0;
        for k in 0..n {
            run += self.r * x[k] * x[k] + 2.0 * self.s * u[k] * x[k] + self.n * u[k] * u[k];
        }
        0.5 * run * dt + 0.5 * self.q * x[n] * x[n]
    }
}

/// The feedback coefficients of the candidate optimal control
/// `u = kx x + ky y + kz z` on the Hamiltonian triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalControlLaw {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
}

impl OptimalControlLaw {
    pub fn apply(&self, x: f64, y: f64, z: f64) -> f64 {
        self.kx * x + self.ky * y + self.kz * z
    }
}

/// The stochastic Hamiltonian system of the LQ problem as a linear
/// FBSDE: state `x`, adjoint pair `(y, z)`, terminal factor `Q`.
pub fn build_hamiltonian(lq: &LqProblem) -> Result<LinearFbsde, LqError> {
    lq.validate()?;
    let (a, b, c, d, r, s, n) = (lq.a, lq.b, lq.c, lq.d, lq.r, lq.s, lq.n);
    let coeffs = CoeffMatrix::new(
        [r - s * s / n, a - s * b / n, c - s * d / n],
        [a - b * s / n, -b * b / n, -b * d / n],
        [c - d * s / n, -d * b / n, -d * d / n],
    );
    LinearFbsde::new(coeffs, lq.q, lq.x0, lq.t).map_err(|e| LqError::InvalidProblem {
        detail: e.to_string(),
    })
}

/// The maximum-principle control law `(-S/N, -B/N, -D/N)`.
pub fn optimal_law(lq: &LqProblem) -> Result<OptimalControlLaw, LqError> {
    lq.validate()?;
    Ok(OptimalControlLaw {
        kx: -lq.s / lq.n,
        ky: -lq.b / lq.n,
        kz: -lq.d / lq.n,
    })
}

/// Direct definiteness criterion on the cost weights: positive control
/// weight with dominated cross term (case i), or the mirrored pattern
/// (case ii).
pub fn check_cor52(lq: &LqProblem) -> Result<Verdict, LqError> {
    if lq.n == 0.0 {
        return Err(LqError::NDegenerate);
    }
    let gap = lq.s * lq.s / lq.n - lq.r;
    if lq.n > 0.0 && gap < 0.0 {
        return Ok(Verdict::well_posed(
            "Cor5.2(i)",
            vec![
                Evidence::new("N", lq.n, Relation::Positive),
                Evidence::new("S^2/N - R", gap, Relation::Negative),
            ],
        ));
    }
    if lq.n < 0.0 && gap > 0.0 {
        return Ok(Verdict::well_posed(
            "Cor5.2(ii)",
            vec![
                Evidence::new("N", lq.n, Relation::Negative),
                Evidence::new("S^2/N - R", gap, Relation::Positive),
            ],
        ));
    }
    Ok(Verdict::not_decided(
        None,
        vec![
            Evidence::new("N", lq.n, Relation::Info),
            Evidence::new("S^2/N - R", gap, Relation::Info),
        ],
    ))
}

/// One stage of the verdict chain.
#[derive(Debug, Clone, Serialize)]
pub struct StageVerdict {
    pub stage: String,
    pub verdict: Verdict,
}

/// How the Hamiltonian system was solved.
#[derive(Debug, Clone, Serialize)]
pub enum SolveRoute {
    /// Solved in original coordinates.
    Direct { field: DecouplingField },
    /// Solved through a state transform and inverted back.
    Transformed {
        system: Box<TransformedSystem>,
        field: DecouplingField,
        x0_tilde: f64,
    },
}

/// One stored solution path in original coordinates, with the control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPath {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

/// Stored control ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ControlEnsemble {
    pub grid: Vec<f64>,
    pub paths: Vec<ControlPath>,
}

/// Options for [`solve_lq`].
#[derive(Debug, Clone)]
pub struct SolveOpts {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub store_paths: usize,
    /// Replace the constructed Hamiltonian system with an explicit one
    /// (used to reproduce externally printed instances).
    pub fbsde_override: Option<LinearFbsde>,
    /// Skip synthesis and force these transform parameters.
    pub force_transform: Option<TransformParams>,
    pub synthesis: SynthesisOpts,
}

impl Default for SolveOpts {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            seed: 7,
            store_paths: 10,
            fbsde_override: None,
            force_transform: None,
            synthesis: SynthesisOpts::default(),
        }
    }
}

/// Full output of the LQ pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct LqSolution {
    pub problem: LqProblem,
    pub law: OptimalControlLaw,
    pub hamiltonian: LinearFbsde,
    pub verdicts: Vec<StageVerdict>,
    pub route: SolveRoute,
    /// Simulation summary of the system actually simulated (original or
    /// transformed coordinates depending on the route).
    pub sim: SimResult,
    /// Stored paths mapped back to original coordinates, with controls.
    pub paths: ControlEnsemble,
}

fn push_stage(verdicts: &mut Vec<StageVerdict>, stage: &str, verdict: Verdict) -> bool {
    let fired = verdict.is_well_posed();
    verdicts.push(StageVerdict {
        stage: stage.to_string(),
        verdict,
    });
    fired
}

/// Runs the complete pipeline: Hamiltonian construction, the
/// well-posedness verdict chain, solution (direct or via transform) and
/// path reconstruction with the candidate optimal control.
pub fn solve_lq(lq: &LqProblem, opts: &SolveOpts) -> Result<LqSolution, LqError> {
    lq.validate()?;
    let law = optimal_law(lq)?;
    let ham = match &opts.fbsde_override {
        Some(f) => *f,
        None => build_hamiltonian(lq)?,
    };

    let mut verdicts = Vec::new();
    let mut decided = false;
    decided |= push_stage(
        &mut verdicts,
        "monotonicity",
        check_monotonicity(&ham.coeffs, ham.h),
    );
    decided |= push_stage(
        &mut verdicts,
        "root-criterion",
        check_lemma38(&ham.coeffs, ham.h),
    );
    decided |= push_stage(
        &mut verdicts,
        "sign-criterion",
        check_thm39(&ham.coeffs, ham.h),
    );
    decided |= push_stage(&mut verdicts, "cost-criterion", check_cor52(lq)?);

    let route = if let Some(params) = opts.force_transform {
        let ts = TransformedSystem::build(&ham, params)?;
        push_stage(
            &mut verdicts,
            "transform-admissibility",
            check_prop42(&ts.tilde),
        );
        SolveRoute::Transformed {
            field: build_field(&ts.tilde, opts.dt)?,
            x0_tilde: 0.0, // resolved below
            system: Box::new(ts),
        }
    } else if decided {
        SolveRoute::Direct {
            field: build_field(&ham, opts.dt)?,
        }
    } else {
        let ts = synthesize_transform(&ham, &opts.synthesis)
            .map_err(|e| LqError::Unsolvable {
                detail: e.to_string(),
            })?;
        push_stage(
            &mut verdicts,
            "transform-admissibility",
            check_prop42(&ts.tilde),
        );
        SolveRoute::Transformed {
            field: build_field(&ts.tilde, opts.dt)?,
            x0_tilde: 0.0,
            system: Box::new(ts),
        }
    };

    let (route, sim, paths) = match route {
        SolveRoute::Direct { field } => {
            let sim = simulate(&ham, &field, opts.n_paths, opts.dt, opts.seed, opts.store_paths)?;
            let grid = sim.ensemble.grid.clone();
            let paths = sim
                .ensemble
                .paths
                .iter()
                .map(|p| {
                    let u = (0..p.x.len())
                        .map(|k| law.apply(p.x[k], p.y[k], p.z[k]))
                        .collect();
                    ControlPath {
                        x: p.x.clone(),
                        y: p.y.clone(),
                        z: p.z.clone(),
                        u,
                    }
                })
                .collect();
            (
                SolveRoute::Direct { field },
                sim,
                ControlEnsemble { grid, paths },
            )
        }
        SolveRoute::Transformed { system, field, .. } => {
            let x0_tilde = system.resolved_x0(ham.x0, field.u0())?;
            let tilde = LinearFbsde {
                x0: x0_tilde,
                ..system.tilde
            };
            let sim = simulate(&tilde, &field, opts.n_paths, opts.dt, opts.seed, opts.store_paths)?;
            let grid = sim.ensemble.grid.clone();
            let paths = sim
                .ensemble
                .paths
                .iter()
                .map(|p| {
                    let len = p.x.len();
                    let mut cp = ControlPath {
                        x: Vec::with_capacity(len),
                        y: Vec::with_capacity(len),
                        z: Vec::with_capacity(len),
                        u: Vec::with_capacity(len),
                    };
                    for k in 0..len {
                        let (x, y, z) = system.invert_triple(p.x[k], p.y[k], p.z[k]);
                        cp.u.push(law.apply(x, y, z));
                        cp.x.push(x);
                        cp.y.push(y);
                        cp.z.push(z);
                    }
                    cp
                })
                .collect();
            (
                SolveRoute::Transformed {
                    system,
                    field,
                    x0_tilde,
                },
                sim,
                ControlEnsemble { grid, paths },
            )
        }
    };

    Ok(LqSolution {
        problem: *lq,
        law,
        hamiltonian: ham,
        verdicts,
        route,
        sim,
        paths,
    })
}

/// Deterministic perturbation directions for the stationarity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// `v(t) = 1`.
    Constant,
    /// `v(t) = t / T`.
    Ramp,
    /// `v(t) = +1` on the first half of the horizon, `-1` after.
    Square,
}

impl Direction {
    pub fn value(&self, t: f64, horizon: f64) -> f64 {
        match self {
            Direction::Constant => 1.0,
            Direction::Ramp => t / horizon,
            Direction::Square => {
                if t < 0.5 * horizon {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Direction::Constant => "constant",
            Direction::Ramp => "ramp",
            Direction::Square => "square",
        }
    }
}

/// Options for [`stationarity_check`].
#[derive(Debug, Clone)]
pub struct StationarityOpts {
    pub eps: Vec<f64>,
    pub directions: Vec<Direction>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for StationarityOpts {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2],
            directions: vec![Direction::Constant, Direction::Ramp, Direction::Square],
            n_paths: 10_000,
            dt: 1e-3,
            seed: 7,
        }
    }
}

/// One `(direction, eps)` record of the stationarity report.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityEntry {
    pub direction: &'static str,
    pub eps: f64,
    pub j_plus: f64,
    pub j_minus: f64,
    /// `|J(u + eps v) - J(u - eps v)|`.
    pub centered_diff: f64,
    /// `centered_diff / (2 eps)`.
    pub derivative: f64,
    /// `STATIONARITY_C * eps * max(1, |J0|)`.
    pub bound: f64,
    pub pass: bool,
}

/// Decay of the centered difference across consecutive `eps` levels of
/// one direction.
#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub direction: &'static str,
    pub eps_hi: f64,
    pub eps_lo: f64,
    pub ratio: f64,
}

/// Stationarity report.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub j0: f64,
    pub entries: Vec<StationarityEntry>,
    pub decay: Vec<DecayEntry>,
    pub pass: bool,
}

/// Verifies first-order stationarity of a control law along the solved
/// chain: for each path the Brownian increments are drawn once and
/// reused (common random numbers) across the unperturbed cost and every
/// `u = law(x, y, z) +/- eps v` variant; the centered difference of the
/// mean costs must vanish at first order in `eps`.
///
/// The law is a parameter so that deliberately corrupted laws can be
/// tested; pass `solution.law` for the nominal check.
pub fn stationarity_check(
    lq: &LqProblem,
    solution: &LqSolution,
    law: &OptimalControlLaw,
    opts: &StationarityOpts,
) -> Result<StationarityReport, LqError> {
    lq.validate()?;
    let ham = solution.hamiltonian;
    // Rebuild the closed-system tables at the requested step.
    enum Replay {
        Direct,
        Transformed(Box<TransformedSystem>),
    }
    let (field, replay, x_start) = match &solution.route {
        SolveRoute::Direct { .. } => {
            let field = build_field(&ham, opts.dt)?;
            (field, Replay::Direct, ham.x0)
        }
        SolveRoute::Transformed { system, .. } => {
            let field = build_field(&system.tilde, opts.dt)?;
            let x0_tilde = system.resolved_x0(ham.x0, field.u0())?;
            (field, Replay::Transformed(system.clone()), x0_tilde)
        }
    };
    let u = &field.ode.values;
    let zr = &field.z_ratio;
    let n = u.len() - 1;
    let dt = field.ode.dt;
    let sqrt_dt = dt.sqrt();
    let closed = match replay {
        Replay::Direct => &ham.coeffs,
        Replay::Transformed(ref ts) => &ts.tilde.coeffs,
    };
    let mu: Vec<f64> = (0..=n)
        .map(|k| closed.b1 + closed.b2 * u[k] + closed.b3 * zr[k])
        .collect();
    let sg: Vec<f64> = (0..=n)
        .map(|k| closed.s1 + closed.s2 * u[k] + closed.s3 * zr[k])
        .collect();
    // Direction values at left endpoints.
    let dir_vals: Vec<Vec<f64>> = opts
        .directions
        .iter()
        .map(|d| (0..n).map(|k| d.value(k as f64 * dt, lq.t)).collect())
        .collect();

    struct PathCosts {
        j0: f64,
        // [direction][eps] -> (j_plus, j_minus)
        pairs: Vec<Vec<(f64, f64)>>,
    }

    let costs: Vec<PathCosts> = (0..opts.n_paths)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(opts.seed, idx as u64);
            let dw: Vec<f64> = (0..n)
                .map(|_| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    sqrt_dt * xi
                })
                .collect();
            // Closed-system path and the law's control along it.
            let mut xv = Vec::with_capacity(n + 1);
            xv.push(x_start);
            for k in 0..n {
                let x = *xv.last().unwrap();
                xv.push(x * (1.0 + mu[k] * dt + sg[k] * dw[k]));
            }
            let mut ub = Vec::with_capacity(n);
            for k in 0..n {
                let (x, y, z) = match replay {
                    Replay::Direct => (xv[k], u[k] * xv[k], zr[k] * xv[k]),
                    Replay::Transformed(ref ts) => {
                        ts.invert_triple(xv[k], u[k] * xv[k], zr[k] * xv[k])
                    }
                };
                ub.push(law.apply(x, y, z));
            }
            // Controlled simulations under common increments.
            let controlled = |shift: &dyn Fn(usize) -> f64| -> f64 {
                let mut x = vec![0.0; n + 1];
                let mut us = vec![0.0; n];
                x[0] = lq.x0;
                for k in 0..n {
                    let uk = ub[k] + shift(k);
                    us[k] = uk;
                    x[k + 1] = x[k]
                        + (lq.a * x[k] + lq.b * uk) * dt
                        + (lq.c * x[k] + lq.d * uk) * dw[k];
                }
                lq.cost(&x, &us, dt)
            };
            let j0 = controlled(&|_| 0.0);
            let pairs = dir_vals
                .iter()
                .map(|v| {
                    opts.eps
                        .iter()
                        .map(|&e| {
                            let jp = controlled(&|k| e * v[k]);
                            let jm = controlled(&|k| -e * v[k]);
                            (jp, jm)
                        })
                        .collect()
                })
                .collect();
            PathCosts { j0, pairs }
        })
        .collect();

    // Deterministic reduction in path order.
    let np = opts.n_paths.max(1) as f64;
    let mut j0 = 0.0;
    let mut sums = vec![vec![(0.0, 0.0); opts.eps.len()]; opts.directions.len()];
    for pc in &costs {
        j0 += pc.j0;
        for (d, row) in pc.pairs.iter().enumerate() {
            for (e, (jp, jm)) in row.iter().enumerate() {
                sums[d][e].0 += jp;
                sums[d][e].1 += jm;
            }
        }
    }
    j0 /= np;

    let mut entries = Vec::new();
    let mut decay = Vec::new();
    for (d, direction) in opts.directions.iter().enumerate() {
        let mut diffs = Vec::new();
        for (e, &eps) in opts.eps.iter().enumerate() {
            let j_plus = sums[d][e].0 / np;
            let j_minus = sums[d][e].1 / np;
            let centered_diff = (j_plus - j_minus).abs();
            let derivative = centered_diff / (2.0 * eps);
            let bound = STATIONARITY_C * eps * f64::max(1.0, j0.abs());
            entries.push(StationarityEntry {
                direction: direction.name(),
                eps,
                j_plus,
                j_minus,
                centered_diff,
                derivative,
                bound,
                pass: derivative <= bound,
            });
            diffs.push((eps, centered_diff));
        }
        for w in diffs.windows(2) {
            let (eps_hi, d_hi) = w[0];
            let (eps_lo, d_lo) = w[1];
            decay.push(DecayEntry {
                direction: direction.name(),
                eps_hi,
                eps_lo,
                ratio: if d_lo == 0.0 { f64::INFINITY } else { d_hi / d_lo },
            });
        }
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(StationarityReport {
        j0,
        entries,
        decay,
        pass,
    })
}
