//! `fbsde`: analyze, transform and solve fully coupled scalar linear
//! FBSDEs, and run the associated LQ control pipeline.
//!
//! Exit codes: 0 success, 2 input error, 3 undecided / nothing found,
//! 4 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fbsde_core::*;

mod render;
use render::{fmt6, verdict_block};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_UNDECIDED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fbsde",
    version,
    about = "Well-posedness analysis, equivalence and decoupling transforms, and Monte Carlo \
             solving for fully coupled scalar linear FBSDEs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit the machine-readable JSON report (full precision).
    #[arg(long, global = true)]
    json: bool,
    /// RNG seed for path simulation.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Time step for ODE tabulation and path simulation.
    #[arg(long, global = true, default_value_t = 1e-3)]
    dt: f64,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 10_000)]
    paths: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SearchParam {
    P,
    Q,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the well-posedness verdict chain on a document.
    Analyze { config: PathBuf },
    /// Apply a shear generator, or search for feasible parameters.
    Equiv {
        config: PathBuf,
        /// Drift-shear parameter (applied alone or composed with --q).
        #[arg(long, allow_negative_numbers = true)]
        p: Option<f64>,
        /// Diffusion-shear parameter.
        #[arg(long, allow_negative_numbers = true)]
        q: Option<f64>,
        /// Search the feasible window of the given parameter over
        /// [-5, 5] with step 0.01 and emit it as CSV.
        #[arg(long, value_enum)]
        search: Option<SearchParam>,
    },
    /// Build a state transform, explicitly or by synthesis.
    Transform {
        config: PathBuf,
        #[arg(long, requires = "n", allow_negative_numbers = true)]
        m: Option<f64>,
        #[arg(long, requires = "m", allow_negative_numbers = true)]
        n: Option<f64>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        c: f64,
        /// Synthesize (m, n, c) from the mirror-cubic roots.
        #[arg(long, conflicts_with_all = ["m", "n"])]
        auto: bool,
    },
    /// Tabulate the decoupling field and simulate the triple.
    Solve {
        config: PathBuf,
        /// Allow solving through a synthesized transform when no
        /// criterion fires directly.
        #[arg(long)]
        auto: bool,
        /// Write stored paths as CSV (path_id,t,X,Y,Z) to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the decoupling-field ODE tabulation as CSV (t,u,status)
        /// to this file.
        #[arg(long)]
        ode_csv: Option<PathBuf>,
    },
    /// Run the LQ control pipeline on an LQ document.
    Lq {
        config: PathBuf,
        /// Replace the constructed Hamiltonian system with the
        /// published reference system and force its transform
        /// parameters (1, -0.658, 1).
        #[arg(long)]
        use_printed_fbsde: bool,
        /// Verify first-order stationarity of the recovered control by
        /// centered differences under common random numbers.
        #[arg(long)]
        check_stationarity: bool,
        /// Write stored paths as CSV (path_id,t,X,Y,Z,u) to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// A finished run: machine report, human rendering, exit code.
struct Report {
    machine: Value,
    human: String,
    code: u8,
}

/// Input-level failure (exit 2).
struct InputError(String);

fn input(e: impl std::fmt::Display) -> InputError {
    InputError(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let text = if cli.json {
                let mut s = serde_json::to_string_pretty(&report.machine)
                    .expect("report serializes");
                s.push('\n');
                s
            } else {
                report.human
            };
            match &cli.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_INPUT);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(report.code)
        }
        Err(InputError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: &Cli) -> Result<Report, InputError> {
    if !(cli.dt.is_finite() && cli.dt > 0.0) {
        return Err(InputError(format!("--dt must be positive, got {}", cli.dt)));
    }
    if cli.paths == 0 {
        return Err(InputError("--paths must be at least 1".to_string()));
    }
    match &cli.cmd {
        Cmd::Analyze { config } => cmd_analyze(cli, config),
        Cmd::Equiv {
            config,
            p,
            q,
            search,
        } => cmd_equiv(config, *p, *q, *search),
        Cmd::Transform {
            config,
            m,
            n,
            c,
            auto,
        } => cmd_transform(config, *m, *n, *c, *auto),
        Cmd::Solve {
            config,
            auto,
            csv,
            ode_csv,
        } => cmd_solve(cli, config, *auto, csv.as_deref(), ode_csv.as_deref()),
        Cmd::Lq {
            config,
            use_printed_fbsde,
            check_stationarity,
            csv,
        } => cmd_lq(cli, config, *use_printed_fbsde, *check_stationarity, csv.as_deref()),
    }
}

fn load(path: &Path) -> Result<ConfigDocument, InputError> {
    load_config(path).map_err(input)
}

fn require_fbsde(doc: ConfigDocument) -> Result<LinearFbsde, InputError> {
    match doc {
        ConfigDocument::Fbsde(f) => Ok(f),
        _ => Err(InputError(
            "this command requires a document of kind \"fbsde\"".to_string(),
        )),
    }
}

fn echo_fbsde(f: &LinearFbsde) -> Value {
    json!({
        "kind": "fbsde",
        "coeffs": { "f": f.coeffs.f(), "b": f.coeffs.b(), "sigma": f.coeffs.s() },
        "h": f.h, "x0": f.x0, "T": f.t,
    })
}

fn coeff_rows_human(out: &mut String, label: &str, m: &CoeffMatrix) {
    out.push_str(&format!(
        "  {label} f = ({}, {}, {})\n  {label} b = ({}, {}, {})\n  {label} sigma = ({}, {}, {})\n",
        fmt6(m.f1),
        fmt6(m.f2),
        fmt6(m.f3),
        fmt6(m.b1),
        fmt6(m.b2),
        fmt6(m.b3),
        fmt6(m.s1),
        fmt6(m.s2),
        fmt6(m.s3),
    ));
}

/// The full verdict chain on a coefficient matrix.
fn verdict_chain(c: &CoeffMatrix, h: f64) -> Vec<(&'static str, Verdict)> {
    vec![
        ("monotonicity", check_monotonicity(c, h)),
        ("root-criterion", check_lemma38(c, h)),
        ("sign-criterion", check_thm39(c, h)),
    ]
}

fn chain_json(chain: &[(&str, Verdict)]) -> Value {
    Value::Array(
        chain
            .iter()
            .map(|(stage, v)| json!({ "stage": stage, "verdict": v }))
            .collect(),
    )
}

fn chain_human(out: &mut String, chain: &[(&str, Verdict)]) {
    for (stage, v) in chain {
        verdict_block(out, stage, v);
    }
}

// ---------------------------------------------------------------- analyze

fn cmd_analyze(cli: &Cli, config: &Path) -> Result<Report, InputError> {
    match load(config)? {
        ConfigDocument::Fbsde(f) => {
            let chain = verdict_chain(&f.coeffs, f.h);
            let fired = chain.iter().any(|(_, v)| v.is_well_posed());
            let code = if fired { EXIT_OK } else { EXIT_UNDECIDED };
            let mut human = format!(
                "analyze {} (h = {}, T = {})\n",
                config.display(),
                fmt6(f.h),
                fmt6(f.t)
            );
            chain_human(&mut human, &chain);
            human.push_str(if fired {
                "result: well-posed\n"
            } else {
                "result: undecided\n"
            });
            Ok(Report {
                machine: json!({
                    "command": "analyze",
                    "input": echo_fbsde(&f),
                    "chain": chain_json(&chain),
                    "well_posed": fired,
                    "exit_code": code,
                }),
                human,
                code,
            })
        }
        ConfigDocument::Lq(lq) => {
            let ham = build_hamiltonian(&lq).map_err(input)?;
            let mut chain = verdict_chain(&ham.coeffs, ham.h);
            chain.push(("cost-criterion", check_cor52(&lq).map_err(input)?));
            let fired = chain.iter().any(|(_, v)| v.is_well_posed());
            let code = if fired { EXIT_OK } else { EXIT_UNDECIDED };
            let mut human = format!(
                "analyze {} (LQ document; Hamiltonian system h = {})\n",
                config.display(),
                fmt6(ham.h)
            );
            coeff_rows_human(&mut human, "ham", &ham.coeffs);
            chain_human(&mut human, &chain);
            human.push_str(if fired {
                "result: well-posed\n"
            } else {
                "result: undecided\n"
            });
            Ok(Report {
                machine: json!({
                    "command": "analyze",
                    "input": serde_json::to_value(lq).expect("serializable"),
                    "hamiltonian": echo_fbsde(&ham),
                    "chain": chain_json(&chain),
                    "well_posed": fired,
                    "exit_code": code,
                }),
                human,
                code,
            })
        }
        ConfigDocument::Envelope(env) => {
            let (upper, lower) =
                integrate_dominating_envelope(&env.bounds, env.t, cli.dt).map_err(input)?;
            let bounded = upper.status.is_bounded() && lower.status.is_bounded();
            let code = if bounded { EXIT_OK } else { EXIT_UNDECIDED };
            let mut human = format!(
                "analyze {} (envelope, T = {})\n",
                config.display(),
                fmt6(env.t)
            );
            for (name, sol) in [("upper", &upper), ("lower", &lower)] {
                human.push_str(&format!("  {name}: {:?}", sol.status));
                if sol.status.is_bounded() {
                    human.push_str(&format!(", value at t=0: {}", fmt6(sol.initial_value())));
                }
                human.push('\n');
            }
            human.push_str(if bounded {
                "result: envelope bounded on the horizon\n"
            } else {
                "result: envelope leaves the horizon\n"
            });
            Ok(Report {
                machine: json!({
                    "command": "analyze",
                    "envelope": {
                        "upper": { "status": &upper.status, "initial": upper.initial_value() },
                        "lower": { "status": &lower.status, "initial": lower.initial_value() },
                        "dt": cli.dt,
                    },
                    "bounded": bounded,
                    "exit_code": code,
                }),
                human,
                code,
            })
        }
    }
}

// ------------------------------------------------------------------ equiv

fn cmd_equiv(
    config: &Path,
    p: Option<f64>,
    q: Option<f64>,
    search: Option<SearchParam>,
) -> Result<Report, InputError> {
    let f = require_fbsde(load(config)?)?;
    if let Some(which) = search {
        return cmd_equiv_search(&f, which);
    }
    let image = match (p, q) {
        (Some(p), Some(q)) => equiv_d(&f.coeffs, p, q),
        (Some(p), None) => equiv_b(&f.coeffs, p),
        (None, Some(q)) => equiv_c(&f.coeffs, q),
        (None, None) => {
            return Err(InputError("equiv needs --p, --q or --search".to_string()))
        }
    };
    let chain = verdict_chain(&image.matrix, f.h);
    let mut human = format!("equiv {} {:?}\n", config.display(), image.kind);
    coeff_rows_human(&mut human, "image", &image.matrix);
    chain_human(&mut human, &chain);
    Ok(Report {
        machine: json!({
            "command": "equiv",
            "input": echo_fbsde(&f),
            "image": &image,
            "chain": chain_json(&chain),
            "exit_code": EXIT_OK,
        }),
        human,
        code: EXIT_OK,
    })
}

fn cmd_equiv_search(f: &LinearFbsde, which: SearchParam) -> Result<Report, InputError> {
    let (name, result) = match which {
        SearchParam::P => ("p", feasible_p(&f.coeffs, f.h, (-5.0, 5.0), 0.01)),
        SearchParam::Q => ("q", feasible_q(&f.coeffs, f.h, (-5.0, 5.0), 0.01)),
    };
    match result {
        Ok(entries) => {
            let mut csv = String::from("param,value,det2,det3,verdict\n");
            for e in &entries {
                csv.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    e.param,
                    e.det2,
                    e.det3,
                    e.verdict.criterion.as_deref().unwrap_or("-"),
                ));
            }
            let human = format!(
                "feasible {name} values over [-5, 5] (step 0.01): {} entries\n{csv}",
                entries.len()
            );
            Ok(Report {
                machine: json!({
                    "command": "equiv-search",
                    "parameter": name,
                    "entries": &entries,
                    "csv": csv,
                    "exit_code": EXIT_OK,
                }),
                human,
                code: EXIT_OK,
            })
        }
        Err(e @ SearchError::EmptyGate { .. }) => Ok(Report {
            machine: json!({
                "command": "equiv-search",
                "parameter": name,
                "error": e.to_string(),
                "exit_code": EXIT_UNDECIDED,
            }),
            human: format!("search failed: {e}\n"),
            code: EXIT_UNDECIDED,
        }),
    }
}

// -------------------------------------------------------------- transform

fn transform_report(f: &LinearFbsde, ts: &TransformedSystem) -> (Value, String) {
    let tilde = &ts.tilde;
    let verdict = check_prop42(tilde);
    let lambda = lambda_poly(&f.coeffs, &ts.params).ok();
    let lambda_leading_residual = lambda
        .as_ref()
        .map(|l| (l.c3 - lambda0_closed_form(&tilde.coeffs)).abs());
    let mut human = format!(
        "transform (m, n, c) = ({}, {}, {})\n",
        fmt6(ts.params.m),
        fmt6(ts.params.n),
        fmt6(ts.params.c)
    );
    coeff_rows_human(&mut human, "tilde", &tilde.coeffs);
    human.push_str(&format!("  tilde h = {}\n", fmt6(tilde.h)));
    human.push_str(&format!(
        "  inverse = ({}, {}; {}, {})\n",
        fmt6(ts.a_inv[0][0]),
        fmt6(ts.a_inv[0][1]),
        fmt6(ts.a_inv[1][0]),
        fmt6(ts.a_inv[1][1])
    ));
    if let Some(l) = &lambda {
        human.push_str(&format!(
            "  lambda = ({}, {}, {}, {})",
            fmt6(l.c3),
            fmt6(l.c2),
            fmt6(l.c1),
            fmt6(l.c0)
        ));
        if let Some(d) = lambda_leading_residual {
            human.push_str(&format!(
                "  [leading-coefficient cross-check residual {}]",
                fmt6(d)
            ));
        }
        human.push('\n');
    }
    verdict_block(&mut human, "admissibility", &verdict);
    if !ts.candidates.is_empty() {
        human.push_str(&format!(
            "  synthesis tried {} candidate(s)\n",
            ts.candidates.len()
        ));
    }
    let machine = json!({
        "command": "transform",
        "input": echo_fbsde(f),
        "system": ts,
        "admissibility": &verdict,
        "lambda": lambda.as_ref().map(|l| l.coeffs()),
        "lambda_leading_cross_check_residual": lambda_leading_residual,
        "exit_code": EXIT_OK,
    });
    (machine, human)
}

fn cmd_transform(
    config: &Path,
    m: Option<f64>,
    n: Option<f64>,
    c: f64,
    auto: bool,
) -> Result<Report, InputError> {
    let f = require_fbsde(load(config)?)?;
    let ts = if auto {
        match synthesize_transform(&f, &SynthesisOpts::default()) {
            Ok(ts) => ts,
            Err(e) => {
                return Ok(Report {
                    machine: json!({
                        "command": "transform",
                        "input": echo_fbsde(&f),
                        "error": e.to_string(),
                        "exit_code": EXIT_UNDECIDED,
                    }),
                    human: format!("no admissible transform: {e}\n"),
                    code: EXIT_UNDECIDED,
                })
            }
        }
    } else {
        let (Some(m), Some(n)) = (m, n) else {
            return Err(InputError(
                "transform needs --m and --n, or --auto".to_string(),
            ));
        };
        TransformedSystem::build(&f, TransformParams::new(m, n, c)).map_err(input)?
    };
    let (machine, human) = transform_report(&f, &ts);
    Ok(Report {
        machine,
        human,
        code: EXIT_OK,
    })
}

// ------------------------------------------------------------------ solve

type CsvRow = (Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<f64>>);

fn write_paths_csv(
    path: &std::path::Path,
    grid: &[f64],
    rows: &[CsvRow],
) -> Result<(), InputError> {
    let with_u = rows.iter().any(|r| r.3.is_some());
    let mut csv = String::from(if with_u {
        "path_id,t,X,Y,Z,u\n"
    } else {
        "path_id,t,X,Y,Z\n"
    });
    for (id, (x, y, z, u)) in rows.iter().enumerate() {
        for k in 0..x.len() {
            csv.push_str(&format!("{id},{},{},{},{}", grid[k], x[k], y[k], z[k]));
            if let Some(u) = u {
                csv.push(',');
                if k < u.len() {
                    csv.push_str(&format!("{}", u[k]));
                }
            }
            csv.push('\n');
        }
    }
    std::fs::write(path, csv).map_err(|e| InputError(format!("cannot write CSV: {e}")))
}

fn verify_human(out: &mut String, report: &VerifyReport) {
    out.push_str(&format!(
        "  residual means: coarse {} (bound {}), fine {} (bound {})\n",
        fmt6(report.coarse_mean),
        fmt6(report.coarse_bound),
        fmt6(report.fine_mean),
        fmt6(report.fine_bound)
    ));
    out.push_str(&format!(
        "  decay ratio {}, terminal exact: {}\n",
        fmt6(report.decay_ratio),
        report.terminal_ok
    ));
    out.push_str(&format!(
        "verification: {}\n",
        if report.pass { "pass" } else { "FAIL" }
    ));
}

fn write_ode_csv(path: &std::path::Path, ode: &OdeSolution) -> Result<(), InputError> {
    let status = match ode.status {
        OdeStatus::Bounded => "Bounded".to_string(),
        OdeStatus::Singular(t) => format!("Singular@{t}"),
        OdeStatus::BlowUp(t) => format!("BlowUp@{t}"),
    };
    let mut csv = String::from("t,u,status\n");
    for (t, u) in ode.grid.iter().zip(&ode.values) {
        csv.push_str(&format!("{t},{u},{status}\n"));
    }
    std::fs::write(path, csv).map_err(|e| InputError(format!("cannot write CSV: {e}")))
}

fn cmd_solve(
    cli: &Cli,
    config: &Path,
    auto: bool,
    csv: Option<&std::path::Path>,
    ode_csv: Option<&std::path::Path>,
) -> Result<Report, InputError> {
    let f = require_fbsde(load(config)?)?;
    let chain = verdict_chain(&f.coeffs, f.h);
    let fired = chain.iter().any(|(_, v)| v.is_well_posed());
    let store = 10.min(cli.paths);

    let undecided = |detail: String, human: String| Report {
        machine: json!({
            "command": "solve",
            "input": echo_fbsde(&f),
            "chain": chain_json(&chain),
            "error": detail,
            "exit_code": EXIT_UNDECIDED,
        }),
        human,
        code: EXIT_UNDECIDED,
    };

    // Choose the system actually simulated.
    let (system, ts) = if fired {
        (f, None)
    } else if auto {
        match synthesize_transform(&f, &SynthesisOpts::default()) {
            Ok(ts) => (ts.tilde, Some(ts)),
            Err(e) => {
                return Ok(undecided(
                    e.to_string(),
                    format!("not certified and no transform found: {e}\n"),
                ))
            }
        }
    } else {
        let mut human = format!("solve {}\n", config.display());
        chain_human(&mut human, &chain);
        human.push_str("no criterion fires; rerun with --auto to allow a transform\n");
        return Ok(undecided("undecided without --auto".to_string(), human));
    };

    // Tabulate, resolve the initial state if transformed, then simulate
    // at 2 dt and dt for the residual-decay verification.
    let mut sims = Vec::new();
    let mut fine_field = None;
    for step in [2.0 * cli.dt, cli.dt] {
        let field = match build_field(&system, step) {
            Ok(field) => field,
            Err(e) => {
                return Ok(undecided(
                    e.to_string(),
                    format!("field tabulation failed: {e}\n"),
                ))
            }
        };
        let sim_system = match &ts {
            Some(ts) => LinearFbsde {
                x0: ts.resolved_x0(f.x0, field.u0()).map_err(input)?,
                ..system
            },
            None => system,
        };
        let sim = match simulate(&sim_system, &field, cli.paths, step, cli.seed, store) {
            Ok(sim) => sim,
            Err(e) => {
                return Ok(undecided(
                    e.to_string(),
                    format!("simulation failed: {e}\n"),
                ))
            }
        };
        sims.push(sim);
        fine_field = Some(field);
    }
    if let Some(path) = ode_csv {
        let field = fine_field.as_ref().expect("loop ran");
        write_ode_csv(path, &field.ode)?;
    }
    let report = verify_bsde(&sims[0], &sims[1]);
    let code = if report.pass { EXIT_OK } else { EXIT_VERIFY };

    // Paths in original coordinates.
    let fine = &sims[1];
    let rows: Vec<CsvRow> = fine
        .ensemble
        .paths
        .iter()
        .map(|p| match &ts {
            None => (p.x.clone(), p.y.clone(), p.z.clone(), None),
            Some(ts) => {
                let mut x = Vec::with_capacity(p.x.len());
                let mut y = Vec::with_capacity(p.x.len());
                let mut z = Vec::with_capacity(p.x.len());
                for k in 0..p.x.len() {
                    let (xi, yi, zi) = ts.invert_triple(p.x[k], p.y[k], p.z[k]);
                    x.push(xi);
                    y.push(yi);
                    z.push(zi);
                }
                (x, y, z, None)
            }
        })
        .collect();
    if let Some(path) = csv {
        write_paths_csv(path, &fine.ensemble.grid, &rows)?;
    }
    // All paths start at the same deterministic state, so the first
    // inverted row carries Y(0) in original coordinates.
    let y0_original = match &ts {
        None => fine.y0,
        Some(_) => rows[0].1[0],
    };

    let mut human = format!("solve {}\n", config.display());
    chain_human(&mut human, &chain);
    if let Some(ts) = &ts {
        human.push_str(&format!(
            "route: transformed with (m, n, c) = ({}, {}, {})\n",
            fmt6(ts.params.m),
            fmt6(ts.params.n),
            fmt6(ts.params.c)
        ));
    } else {
        human.push_str("route: direct\n");
    }
    human.push_str(&format!(
        "simulated {} paths at dt = {} and {} (seed {})\n",
        cli.paths,
        fmt6(cli.dt),
        fmt6(2.0 * cli.dt),
        cli.seed
    ));
    if ts.is_some() {
        human.push_str(&format!(
            "  Y(0) estimate: {} (transformed coordinates: {})\n",
            fmt6(y0_original),
            fmt6(fine.y0)
        ));
    } else {
        human.push_str(&format!("  Y(0) estimate: {}\n", fmt6(fine.y0)));
    }
    verify_human(&mut human, &report);

    Ok(Report {
        machine: json!({
            "command": "solve",
            "input": echo_fbsde(&f),
            "chain": chain_json(&chain),
            "transform": &ts,
            "coarse": &sims[0],
            "fine": &sims[1],
            "y0_original": y0_original,
            "verify": &report,
            "exit_code": code,
        }),
        human,
        code,
    })
}

// --------------------------------------------------------------------- lq

fn lq_exit(e: &LqError) -> Option<u8> {
    match e {
        // Input-shaped failures surface as exit 2 through InputError.
        LqError::NDegenerate | LqError::InvalidProblem { .. } | LqError::Transform(_) => None,
        LqError::Unsolvable { .. } | LqError::Solver(_) => Some(EXIT_UNDECIDED),
    }
}

fn cmd_lq(
    cli: &Cli,
    config: &Path,
    use_printed: bool,
    check_stationarity_flag: bool,
    csv: Option<&std::path::Path>,
) -> Result<Report, InputError> {
    let ConfigDocument::Lq(lq) = load(config)? else {
        return Err(InputError(
            "lq requires a document of kind \"lq\"".to_string(),
        ));
    };
    let mut opts = SolveOpts {
        n_paths: cli.paths,
        dt: cli.dt,
        seed: cli.seed,
        store_paths: 10.min(cli.paths),
        ..SolveOpts::default()
    };
    if use_printed {
        opts.fbsde_override = Some(
            LinearFbsde::new(
                CoeffMatrix::new([5.0, 3.0, 5.0], [3.0, 1.0, -2.0], [5.0, 2.0, 4.0]),
                -4.0,
                lq.x0,
                lq.t,
            )
            .map_err(input)?,
        );
        opts.force_transform = Some(TransformParams::new(1.0, -0.658, 1.0));
    }
    let solution = match solve_lq(&lq, &opts) {
        Ok(s) => s,
        Err(e) => match lq_exit(&e) {
            None => return Err(input(e)),
            Some(code) => {
                return Ok(Report {
                    machine: json!({
                        "command": "lq",
                        "input": serde_json::to_value(lq).expect("serializable"),
                        "error": e.to_string(),
                        "exit_code": code,
                    }),
                    human: format!("lq pipeline stopped: {e}\n"),
                    code,
                })
            }
        },
    };

    let mut human = format!("lq {}\n", config.display());
    let law = solution.law;
    human.push_str(&format!(
        "optimal law: u = {} x + {} y + {} z\n",
        fmt6(law.kx),
        fmt6(law.ky),
        fmt6(law.kz)
    ));
    coeff_rows_human(&mut human, "ham", &solution.hamiltonian.coeffs);
    human.push_str(&format!("  ham h = {}\n", fmt6(solution.hamiltonian.h)));
    for sv in &solution.verdicts {
        verdict_block(&mut human, &sv.stage, &sv.verdict);
    }
    match &solution.route {
        SolveRoute::Direct { field } => {
            human.push_str(&format!(
                "route: direct; u(0) = {}, Y(0) = {}\n",
                fmt6(field.u0()),
                fmt6(solution.sim.y0)
            ));
        }
        SolveRoute::Transformed {
            system, x0_tilde, ..
        } => {
            human.push_str(&format!(
                "route: transformed (m, n, c) = ({}, {}, {}); transformed x0 = {}\n",
                fmt6(system.params.m),
                fmt6(system.params.n),
                fmt6(system.params.c),
                fmt6(*x0_tilde)
            ));
        }
    }
    human.push_str(&format!(
        "simulated {} paths at dt = {} (seed {}); terminal residual max {}\n",
        solution.sim.n_paths,
        fmt6(solution.sim.dt),
        solution.sim.seed,
        fmt6(solution.sim.terminal_residual.max_abs)
    ));

    let mut code = EXIT_OK;
    let stationarity = if check_stationarity_flag {
        let sopts = StationarityOpts {
            n_paths: cli.paths,
            dt: cli.dt,
            seed: cli.seed,
            ..StationarityOpts::default()
        };
        let report = stationarity_check(&lq, &solution, &law, &sopts).map_err(input)?;
        human.push_str(&format!("stationarity: J0 = {}\n", fmt6(report.j0)));
        for e in &report.entries {
            human.push_str(&format!(
                "  {} eps={}: derivative {} vs bound {} -> {}\n",
                e.direction,
                fmt6(e.eps),
                fmt6(e.derivative),
                fmt6(e.bound),
                if e.pass { "ok" } else { "FAIL" }
            ));
        }
        for d in &report.decay {
            human.push_str(&format!(
                "  {} decay {} -> {}: ratio {}\n",
                d.direction,
                fmt6(d.eps_hi),
                fmt6(d.eps_lo),
                fmt6(d.ratio)
            ));
        }
        if !report.pass {
            code = EXIT_VERIFY;
            human.push_str("stationarity: FAIL\n");
        } else {
            human.push_str("stationarity: pass\n");
        }
        Some(report)
    } else {
        None
    };

    if let Some(path) = csv {
        let rows: Vec<CsvRow> = solution
            .paths
            .paths
            .iter()
            .map(|p| (p.x.clone(), p.y.clone(), p.z.clone(), Some(p.u.clone())))
            .collect();
        write_paths_csv(path, &solution.paths.grid, &rows)?;
    }

    Ok(Report {
        machine: json!({
            "command": "lq",
            "input": serde_json::to_value(lq).expect("serializable"),
            "solution": &solution,
            "stationarity": &stationarity,
            "exit_code": code,
        }),
        human,
        code,
    })
}
