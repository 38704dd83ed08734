//! Analysis and solution of fully coupled scalar linear
//! forward-backward stochastic differential equations (FBSDEs).
//!
//! The system under study couples a forward state `X` and a backward
//! pair `(Y, Z)` through constant coefficients:
//!
//! ```text
//! dX = (b1 X + b2 Y + b3 Z) dt + (s1 X + s2 Y + s3 Z) dW
//! -dY = (f1 X + f2 Y + f3 Z) dt - Z dW,    Y(T) = h X(T).
//! ```
//!
//! The crate provides, in order of the pipeline:
//!
//! * [`types`]: coefficient matrices, problem data, cubic polynomials.
//! * [`dominating`]: the scalar Riccati-type dominating equation whose
//!   boundedness on the horizon characterizes well-posedness, plus an
//!   interval envelope variant.
//! * [`criteria`]: checkable sufficient/exhaustive conditions
//!   (monotonicity with quantitative certificates, root-location and
//!   sign-pattern tests) that return [`criteria::Verdict`]s with named
//!   evidence.
//! * [`equivalence`]: shear generators that preserve the dominating
//!   cubic, and feasibility searches for parameters that move an
//!   undecided instance into a certified class.
//! * [`transform`]: invertible mixing of `X` and `Y` that produces an
//!   equivalent system, ideally decoupled (`f1 = 0`), plus synthesis.
//! * [`solver`]: decoupling-field tabulation and Monte Carlo simulation
//!   with residual-based verification.
//! * [`lq`]: scalar linear-quadratic control through its stochastic
//!   Hamiltonian system, with a finite-difference stationarity check.
//! * [`config`]: strict JSON input documents.

pub mod config;
pub mod criteria;
pub mod dominating;
pub mod equivalence;
pub mod lq;
pub mod solver;
pub mod transform;
pub mod types;

pub use config::{load_config, parse_config, write_config, ConfigDocument, ConfigError, EnvelopeProblem};
pub use criteria::{
    certify_pair, check_lemma38, check_monotonicity, check_thm39, symmetrize, Decision, Evidence,
    Relation, Sym3, Verdict,
};
pub use dominating::{
    h_poly, integrate_dominating, integrate_dominating_envelope, l_poly, real_roots, CoeffBounds,
    DominatingFn, EnvelopeError, OdeSolution, OdeStatus,
};
pub use equivalence::{
    equiv_b, equiv_b_variant, equiv_c, equiv_c_variant, equiv_d, feasible_p, feasible_q,
    EquivKind, EquivalentMatrix, FeasibleEntry, SearchError,
};
pub use lq::{
    build_hamiltonian, check_cor52, optimal_law, solve_lq, stationarity_check, Direction, LqError,
    LqProblem, LqSolution, OptimalControlLaw, SolveOpts, SolveRoute, StationarityOpts,
    StationarityReport,
};
pub use solver::{
    build_field, path_rng, simulate, verify_bsde, DecouplingField, PathEnsemble, SimResult,
    SolverError, VerifyReport,
};
pub use transform::{
    check_prop42, lambda0_closed_form, lambda_poly, synthesize_transform, tilde_coeffs,
    tilde_terminal, SynthesisError, SynthesisOpts, TransformError, TransformParams,
    TransformedSystem,
};
pub use types::{CoeffMatrix, Cubic, EvalError, LinearFbsde, RootError, ValidationError};
