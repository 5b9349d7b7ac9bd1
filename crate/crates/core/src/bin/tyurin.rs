use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tyurin_rmatrix::config::{parse_complex, SuiteConfig};
use tyurin_rmatrix::dynamics::{conservation_report, evolve, write_csv, Trajectory};
use tyurin_rmatrix::phase_space::{sample, SampleOptions};
use tyurin_rmatrix::report::Report;
use tyurin_rmatrix::suites::{explain, flow_config, run_selected, run_suites};
use tyurin_rmatrix::theta::ThetaKernel;
use tyurin_rmatrix::{Error, C64};

#[derive(Parser)]
#[command(name = "tyurin", version, about = "Certify the Lax differential and r-matrix identities numerically")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured suite and emit the JSON report.
    Run(Common),
    /// Run a single suite.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate the Hamiltonian flow from a sampled point.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        z0: Option<String>,
        #[arg(long)]
        k: Option<u32>,
        /// Comma-separated points w where tr L(w)^2 and tr L(w)^3 are tracked.
        #[arg(long, value_delimiter = ',')]
        probes: Vec<String>,
    },
    /// Print the sampled phase-space point for the seed.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        moment_surface: bool,
        #[arg(long)]
        gauge_slice: bool,
    },
    /// Describe a check: its identity, formula and tolerance.
    Explain { check_id: String },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tau: Option<String>,
    /// Replaces the configured seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override KEY=VAL; may be repeated.
    #[arg(long = "tolerance", value_name = "KEY=VAL")]
    tolerances: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn config(&self) -> Result<SuiteConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => SuiteConfig::load(p)?,
            None => SuiteConfig::default(),
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(t) = &self.tau {
            cfg.tau = parse_complex(t)?;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        for t in &self.tolerances {
            cfg.set_tolerance(t)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, text: &str) -> Result<(), Error> {
        match &self.out {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

enum Failure {
    Checks,
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Unknown { .. } | Error::InvalidModulus(_) => Failure::Usage(e),
            other => Failure::Runtime(other),
        }
    }
}

fn summarize(report: &Report) {
    for r in &report.records {
        let residual = r.max_residual.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
        eprintln!("{:<5} {:<12} {:<28} {:>10} <= {:.1e}", if r.pass { "PASS" } else { "FAIL" }, r.suite, r.check_id, residual, r.tolerance);
    }
}

fn finish_report(common: &Common, report: Report) -> Result<(), Failure> {
    summarize(&report);
    common.emit(&(report.to_json() + "\n"))?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn emit_trajectory(common: &Common, traj: &Trajectory, drift: &serde_json::Value) -> Result<(), Error> {
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(traj, &mut buf)?;
            common.emit(&String::from_utf8_lossy(&buf))
        }
        Format::Json => {
            let doc = serde_json::json!({
                "times": traj.times,
                "states": traj.states,
                "rejected_steps": traj.rejected_steps,
                "drift": drift,
            });
            common.emit(&(serde_json::to_string_pretty(&doc).expect("trajectory serializes") + "\n"))
        }
    }
}

fn run_evolve(common: &Common, t_end: Option<f64>, z0: Option<&str>, k: Option<u32>, probes: &[String]) -> Result<(), Failure> {
    let cfg = common.config()?;
    let mut fc = flow_config(&cfg, Default::default());
    if let Some(t) = t_end {
        fc.t_end = t;
    }
    if let Some(z) = z0 {
        fc.z0 = parse_complex(z)?;
    }
    if let Some(k) = k {
        fc.k = k;
    }
    fc.validate()?;
    let ws: Vec<C64> = if probes.is_empty() {
        cfg.flow_probes.clone()
    } else {
        probes.iter().map(|s| parse_complex(s)).collect::<Result<_, _>>()?
    };
    let kernel = ThetaKernel::with_tau(cfg.tau)?;
    let x = sample(*kernel.curve(), cfg.seeds[0], cfg.n, SampleOptions::default())?;
    let (traj, aborted) = match evolve(&kernel, &x, &fc) {
        Ok(t) => (t, None),
        Err(Error::FlowAborted { t, reason, partial }) => (*partial, Some(format!("flow aborted at t = {t}: {reason}"))),
        Err(e) => return Err(e.into()),
    };
    let tracked: Vec<(C64, u32)> = ws.iter().flat_map(|&w| [(w, 2), (w, 3)]).collect();
    let drifts = conservation_report(&kernel, &traj, &tracked)?;
    eprintln!("{:<24} {:>3} {:>12}", "w", "k", "max drift");
    for d in &drifts {
        eprintln!("{:<24} {:>3} {:>12.3e}", format!("{}", d.w), d.k, d.max_drift);
    }
    eprintln!("energy drift {:.3e}, constraint {:.3e}, moment drift {:.3e}", traj.max_energy_drift(), traj.max_constraint(), traj.max_moment_drift());
    let drift = serde_json::json!({
        "energy": traj.max_energy_drift(),
        "constraint": traj.max_constraint(),
        "moment": traj.max_moment_drift(),
        "invariants": drifts.iter().map(|d| serde_json::json!({"w": [d.w.re, d.w.im], "k": d.k, "max_drift": d.max_drift})).collect::<Vec<_>>(),
    });
    emit_trajectory(common, &traj, &drift)?;
    match aborted {
        Some(msg) => Err(Failure::Runtime(Error::Config(msg))),
        None => Ok(()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(common) => {
            let report = run_suites(&common.config()?)?;
            finish_report(&common, report)
        }
        Command::Verify { suite, common } => {
            let cfg = common.config()?;
            let report = run_selected(&cfg, &[suite.as_str()])?;
            finish_report(&common, report)
        }
        Command::Evolve { common, t_end, z0, k, probes } => run_evolve(&common, t_end, z0.as_deref(), k, &probes),
        Command::Sample { common, moment_surface, gauge_slice } => {
            let cfg = common.config()?;
            let x = sample(*ThetaKernel::with_tau(cfg.tau)?.curve(), cfg.seeds[0], cfg.n, SampleOptions { on_moment_surface: moment_surface, on_gauge_slice: gauge_slice })?;
            common.emit(&(serde_json::to_string_pretty(&x).expect("point serializes") + "\n"))?;
            Ok(())
        }
        Command::Explain { check_id } => {
            print!("{}", explain(&check_id)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
