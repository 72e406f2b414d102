use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use linkflow::admission::min_entry_period;
use linkflow::energy::{thresholds, REFERENCE_C_STAR};
use linkflow::sim::{
    admission_budget, calibrate_lambda, fmt_num, initial_fleet, rate_check, report_text,
    run_scenario, write_outputs, ScenarioConfig,
};
use linkflow::Error;

/// Lipschitz samples drawn by `verify-rate`.
const RATE_LIPSCHITZ_SAMPLES: usize = 200;

#[derive(Parser)]
#[command(name = "linkflow", version, about = "Simulate and certify UAS traffic on an airspace link")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv, monitors.csv and report.txt
    Run {
        scenario: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario duration, s
        #[arg(long)]
        duration: Option<f64>,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a scenario without simulating
    Check { scenario: PathBuf },
    /// Print the safety thresholds c1*, c2*, c3* and c*
    Thresholds { scenario: PathBuf },
    /// Calibrate the convergence factor on a no-entry run
    Lambda { scenario: PathBuf },
    /// Print the entry budget: m_max and the minimum entry period
    AdmitPlan { scenario: PathBuf },
    /// Check the O(1/t) convergence bound on a no-entry run
    VerifyRate { scenario: PathBuf },
}

enum Outcome {
    Pass,
    Fail,
}

fn load(path: &Path) -> Result<ScenarioConfig, Error> {
    let cfg = ScenarioConfig::from_path(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(path: &Path, out: &Path, duration: Option<f64>, seed: Option<u64>) -> Result<Outcome, Error> {
    let mut cfg = load(path)?;
    if let Some(d) = duration {
        cfg.duration = d;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_scenario(&cfg)?;
    write_outputs(&report, out)?;
    print!("{}", report_text(&report));
    println!("\noutputs written to {}", out.display());
    Ok(if report.verdicts.constraints_pass() {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn print_thresholds(cfg: &ScenarioConfig) {
    let th = thresholds(&cfg.link, &cfg.potentials);
    println!("c1* = {}  (psi(||d_min||_sigma))", fmt_num(th.c1));
    println!(
        "c1* reference = {}  (published; equals ln cosh 9, i.e. psi at sigma distance 1, and does not follow from d_min)",
        fmt_num(REFERENCE_C_STAR)
    );
    println!("c2* = {}  (speed envelope)", fmt_num(th.c2));
    println!("c3* = {}  (psi_b(d_b_min))", fmt_num(th.c3));
    println!("c*  = {}", fmt_num(th.c_star));
}

fn lambda(cfg: &ScenarioConfig) -> Result<Outcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fleet = initial_fleet(cfg, &mut rng)?;
    let est = calibrate_lambda(cfg, &fleet)?;
    println!("lambda_hat = {}  (attained at t = {})", fmt_num(est.lambda), fmt_num(est.t_at));
    println!("horizon = {} s", fmt_num(cfg.admission.calibration_horizon));
    println!(
        "budget lambda = {}  (x{} margin)",
        fmt_num(est.lambda * cfg.admission.lambda_margin),
        cfg.admission.lambda_margin
    );
    Ok(Outcome::Pass)
}

fn admit_plan(cfg: &ScenarioConfig) -> Result<Outcome, Error> {
    let Some(schedule) = &cfg.schedule else {
        println!("no entry schedule");
        return Ok(Outcome::Pass);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fleet = initial_fleet(cfg, &mut rng)?;
    let (budget, _) = admission_budget(cfg, &fleet)?.expect("schedule present");
    let m = schedule.group_size;
    let group = m as f64 * budget.kappa + (m * m.saturating_sub(1)) as f64 * budget.gamma;
    println!("c*            = {}", fmt_num(budget.c_star));
    println!("lambda        = {}", fmt_num(budget.lambda_hat));
    println!("period T      = {}", fmt_num(budget.period));
    println!("kappa         = {}", fmt_num(budget.kappa));
    println!("gamma         = {}", fmt_num(budget.gamma));
    println!("allowance     = {}  (c*(1 - lambda/T))", fmt_num(budget.entry_allowance()));
    println!("m_max         = {}", budget.m_max);
    println!("group energy  = {}  (M = {m})", fmt_num(group));
    match min_entry_period(budget.lambda_hat, budget.c_star, group) {
        Ok(p) => println!("min period    = {} s", fmt_num(p)),
        Err(e) => println!("min period    = none ({e})"),
    }
    Ok(if budget.m_max.admits(m) {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn verify_rate(cfg: &ScenarioConfig) -> Result<Outcome, Error> {
    let check = rate_check(cfg, RATE_LIPSCHITZ_SAMPLES)?;
    let (c, r) = (&check.certificate, &check.report);
    println!("lipschitz estimate = {}", fmt_num(check.lipschitz_estimate));
    println!("lipschitz used     = {}", fmt_num(c.lipschitz));
    println!("damping K          = {}", fmt_num(c.damping));
    println!("alpha, p, r        = {}, {}, {}", fmt_num(c.alpha), fmt_num(c.p), fmt_num(c.r));
    println!("rhs numerator      = {}", fmt_num(c.rhs_numerator));
    println!("samples            = {}", r.samples);
    println!("worst margin       = {}", fmt_num(r.worst_margin));
    println!("bound holds        = {}", r.holds);
    if let Some(t) = r.first_violation_t {
        println!("first violation t  = {}", fmt_num(t));
    }
    println!("lyapunov monotone  = {}  (max increase {})", r.lyapunov_monotone, fmt_num(r.max_lyapunov_increase));
    Ok(if r.holds { Outcome::Pass } else { Outcome::Fail })
}

fn dispatch(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            duration,
            seed,
        } => run(&scenario, &out, duration, seed),
        Command::Check { scenario } => {
            load(&scenario)?;
            println!("{}: ok", scenario.display());
            Ok(Outcome::Pass)
        }
        Command::Thresholds { scenario } => {
            print_thresholds(&load(&scenario)?);
            Ok(Outcome::Pass)
        }
        Command::Lambda { scenario } => lambda(&load(&scenario)?),
        Command::AdmitPlan { scenario } => admit_plan(&load(&scenario)?),
        Command::VerifyRate { scenario } => verify_rate(&load(&scenario)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(Error::ConfigInvalid(violations)) => {
            eprintln!("invalid configuration:");
            for v in violations {
                eprintln!("  {v}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
