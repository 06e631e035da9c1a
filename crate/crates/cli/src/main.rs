use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hbvm::integrator::{energy_drift, integrate, SolverConfig, Stepper};
use hbvm::io::{to_json_string, trajectory_csv, write_atomic};
use hbvm::legendre::NodeFamily;
use hbvm::problems::{order_study, problem};
use hbvm::spectral::{a_stability_scan, isospectral_check, StabilityGrid};
use hbvm::tableau::{hbvm_tableau, HbvmSpec, TableauRecord};
use hbvm::verify::{sort_report, verify_record, verify_sweep, SweepConfig};
use hbvm::HbvmError;

#[derive(Parser)]
#[command(name = "hbvm", version, about = "Hamiltonian Boundary Value Methods")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Build the Butcher tableau of HBVM(k, s) and write it as JSON.
    Tableau {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the spectrum of the Butcher matrix with the Gauss one.
    Spectrum {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every structural check over a matrix of specs.
    Verify {
        #[arg(long, default_value_t = 4)]
        smax: usize,
        #[arg(long, default_value_t = 10)]
        kmax: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Seed for the random custom node sets.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also check a tableau read from this JSON file.
        #[arg(long)]
        tableau_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a catalog problem and write the trajectory as CSV.
    Integrate {
        #[arg(long)]
        problem: String,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Mode::Gamma)]
        mode: Mode,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the convergence order on a catalog problem.
    Order {
        #[arg(long)]
        problem: String,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0.2)]
        hmax: f64,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 6.4)]
        t_end: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the stability function on the imaginary axis and the left
    /// half-plane.
    Stability {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value = "gauss")]
    family: NodeFamily,
    /// Comma-separated abscissae for the custom family.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<f64>>,
}

impl SpecArgs {
    fn build(&self) -> hbvm::Result<HbvmSpec> {
        if self.nodes.is_some() && self.family != NodeFamily::Custom {
            return Err(HbvmError::InvalidSpec(
                "--nodes is only valid with --family custom".into(),
            ));
        }
        HbvmSpec::from_family(self.family, self.k, self.s, self.nodes.as_deref())
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Solver::FixedPoint)]
    solver: Solver,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let base = match self.solver {
            Solver::FixedPoint => SolverConfig::default(),
            Solver::Newton => SolverConfig::newton(),
        };
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ..base
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rk,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    FixedPoint,
    Newton,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<HbvmError> for Failure {
    fn from(e: HbvmError) -> Self {
        match e {
            HbvmError::InvalidIndex(_)
            | HbvmError::OutOfDomain { .. }
            | HbvmError::InvalidNodes(_)
            | HbvmError::InvalidSpec(_)
            | HbvmError::QuadratureTooWeak { .. }
            | HbvmError::Dimension(_)
            | HbvmError::Config(_)
            | HbvmError::UnknownProblem(_)
            | HbvmError::Json(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Human-readable summaries go to stdout when the artifact goes to a file and
/// to stderr when the artifact itself is on stdout.
struct Reporter {
    to_stdout: bool,
    color: bool,
}

impl Reporter {
    fn new(out: &Option<PathBuf>) -> Self {
        let to_stdout = out.is_some();
        let tty = if to_stdout {
            std::io::stdout().is_terminal()
        } else {
            std::io::stderr().is_terminal()
        };
        Self {
            to_stdout,
            color: tty && std::env::var_os("HBVM_NO_COLOR").is_none(),
        }
    }

    fn line(&self, text: &str) {
        if self.to_stdout {
            println!("{text}");
        } else {
            eprintln!("{text}");
        }
    }

    fn verdict(&self, passed: bool, text: &str) {
        let tag = match (passed, self.color) {
            (true, true) => "\x1b[32mPASS\x1b[0m",
            (false, true) => "\x1b[31mFAIL\x1b[0m",
            (true, false) => "PASS",
            (false, false) => "FAIL",
        };
        self.line(&format!("{tag} {text}"));
    }
}

fn check_out(out: &Option<PathBuf>) -> Result<(), Failure> {
    if let Some(path) = out {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        if dir.is_some_and(|d| !d.is_dir()) {
            return Err(Failure::Usage(format!(
                "output directory of {} does not exist",
                path.display()
            )));
        }
        if path.is_dir() {
            return Err(Failure::Usage(format!("{} is a directory", path.display())));
        }
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_atomic(path, contents).map_err(|e| Failure::Runtime(e.to_string())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read_record(path: &Path) -> Result<TableauRecord, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("invalid tableau file {}: {e}", path.display())))
}

fn run(verb: Verb) -> Result<bool, Failure> {
    match verb {
        Verb::Tableau { spec, out } => {
            check_out(&out)?;
            let spec = spec.build()?;
            let tab = hbvm_tableau(&spec)?;
            emit(
                &out,
                &to_json_string(&TableauRecord::from_spec(&spec, &tab))?,
            )?;
            Ok(true)
        }
        Verb::Spectrum { spec, tol, out } => {
            check_out(&out)?;
            check_tol(tol)?;
            let spec = spec.build()?;
            let report = isospectral_check(&spec, tol)?;
            emit(&out, &to_json_string(&report)?)?;
            Reporter::new(&out).verdict(
                report.passed,
                &format!(
                    "{spec}: {} zero eigenvalues, max match distance {:e}",
                    report.zero_count, report.max_match_distance
                ),
            );
            Ok(report.passed)
        }
        Verb::Verify {
            smax,
            kmax,
            tol,
            seed,
            tableau_file,
            out,
        } => {
            check_out(&out)?;
            let cfg = SweepConfig {
                smax,
                kmax,
                tol,
                seed,
            };
            cfg.validate()?;
            let injected = match &tableau_file {
                Some(path) => {
                    let rec = read_record(path)?;
                    Some(verify_record(&rec, tol, &path.display().to_string())?)
                }
                None => None,
            };
            let mut report = verify_sweep(&cfg)?;
            report.extend(injected);
            sort_report(&mut report);
            emit(&out, &to_json_string(&report)?)?;
            let rep = Reporter::new(&out);
            let failed: Vec<_> = report.iter().filter(|e| !e.passed).collect();
            for e in &failed {
                rep.verdict(
                    false,
                    &format!(
                        "k={} s={} {}: {}",
                        e.spec.k,
                        e.spec.s,
                        e.spec.family,
                        e.failures.join("; ")
                    ),
                );
            }
            rep.verdict(
                failed.is_empty(),
                &format!(
                    "{} of {} specs passed",
                    report.len() - failed.len(),
                    report.len()
                ),
            );
            Ok(failed.is_empty())
        }
        Verb::Integrate {
            problem: name,
            spec,
            h,
            steps,
            mode,
            solver,
            out,
        } => {
            check_out(&out)?;
            let prob = problem(&name)?;
            let spec = spec.build()?;
            let cfg = solver.config();
            cfg.validate()?;
            if !(h > 0.0 && h.is_finite()) || steps == 0 {
                return Err(Failure::Usage(
                    "--h must be positive and --steps at least 1".into(),
                ));
            }
            let stepper = match mode {
                Mode::Rk => Stepper::rk(&spec)?,
                Mode::Gamma => Stepper::gamma(&spec),
            };
            let traj = integrate(&stepper, &prob.system, &prob.default_y0, h, steps, &cfg)?;
            emit(&out, &trajectory_csv(&traj))?;
            let drift = energy_drift(&traj);
            let h0 = traj.energies[0];
            Reporter::new(&out).line(&format!(
                "{} {spec}, h = {h}, {steps} steps: relative energy drift max {:e}, final {:e}",
                prob.name,
                drift.relative(h0),
                if h0 == 0.0 {
                    drift.final_abs
                } else {
                    drift.final_abs / h0.abs()
                }
            ));
            Ok(true)
        }
        Verb::Order {
            problem: name,
            spec,
            hmax,
            levels,
            t_end,
            solver,
            out,
        } => {
            check_out(&out)?;
            let prob = problem(&name)?;
            let spec = spec.build()?;
            let cfg = solver.config();
            cfg.validate()?;
            let stepper = Stepper::gamma(&spec);
            let study = order_study(&prob, &stepper, hmax, levels, t_end, &cfg)?;
            emit(&out, &to_json_string(&study)?)?;
            let rep = Reporter::new(&out);
            rep.line(&format!("{} {spec}, t_end = {t_end}", prob.name));
            rep.line(&format!("{:>12} {:>12} {:>8}", "h", "error", "rate"));
            for (i, (h, e)) in study.h.iter().zip(&study.errors).enumerate() {
                let rate = if i == 0 {
                    String::from("-")
                } else {
                    format!("{:.3}", study.local_slopes[i - 1])
                };
                rep.line(&format!("{h:>12.4e} {e:>12.4e} {rate:>8}"));
            }
            rep.line(&format!(
                "slope {:.4} (fit over {} step sizes, expected {})",
                study.slope,
                study.fitted,
                2 * spec.s()
            ));
            Ok(true)
        }
        Verb::Stability { spec, tol, out } => {
            check_out(&out)?;
            check_tol(tol)?;
            let spec = spec.build()?;
            let tab = hbvm_tableau(&spec)?;
            let scan = a_stability_scan(&tab, &StabilityGrid::default());
            emit(&out, &to_json_string(&scan)?)?;
            let passed = scan.passed(tol);
            Reporter::new(&out).verdict(
                passed,
                &format!(
                    "{spec}: max ||R(iy)| - 1| = {:e}, max |R(z)| on Re z < 0 = {:.17}, {} poles",
                    scan.max_axis_deviation,
                    scan.max_left_modulus,
                    scan.poles.len()
                ),
            );
            Ok(passed)
        }
    }
}

fn check_tol(tol: f64) -> Result<(), Failure> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--tol must be positive, got {tol}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.verb) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
