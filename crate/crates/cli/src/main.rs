use anyhow::Context;
use clap::Parser;
use conclab_core::lab::{self, ExperimentSpec, Family, OutputFormat, Scenario, Status, Tamper};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Reproducible experiments on the half-space functional over the sphere.
///
/// Scenarios: cube-scan, subset, thm5, identities, third-moment, moments,
/// position, var. The report goes to stdout in --format; with --out PATH both
/// PATH.json and PATH.csv are written. Exit status is 0 iff every assertion passes.
#[derive(Debug, Parser)]
#[command(name = "conclab", version)]
struct Args {
    /// Scenario id.
    scenario: String,
    /// Dimensions, comma separated or repeated.
    #[arg(long = "n", value_delimiter = ',', num_args = 1..)]
    n: Vec<usize>,
    #[arg(long, default_value_t = lab::DEFAULT_SEED)]
    seed: u64,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Moment orders.
    #[arg(long = "p", value_delimiter = ',', num_args = 1..)]
    p: Vec<f64>,
    /// Base path for PATH.json and PATH.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Tolerance override (optimizer residual, or the scalar-Cov₁ filter for var).
    #[arg(long)]
    tol: Option<f64>,
    /// Measure CSV (`weight,x1,..,xn`) for third-moment, moments or var.
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Sampled families: gaussian, laplace, uniform-cube.
    #[arg(long = "family", value_delimiter = ',', num_args = 1..)]
    family: Vec<String>,
    /// Atom count for sampled measures.
    #[arg(long)]
    atoms: Option<usize>,
    /// Atoms per n² in thm5.
    #[arg(long)]
    atoms_factor: Option<f64>,
    /// Subset exponent: N = n^(2+delta).
    #[arg(long)]
    delta: Option<f64>,
    /// Number of seeds per configuration.
    #[arg(long)]
    seeds: Option<usize>,
    /// Multiply Ω_n by this factor in the identity suite.
    #[arg(long)]
    tamper_omega: Option<f64>,
    /// Use this ψ cubic coefficient in the identity suite.
    #[arg(long)]
    tamper_psi_cubic: Option<f64>,
    /// Suppress the per-assertion summary on stderr.
    #[arg(long, short)]
    quiet: bool,
}

fn spec_from(args: &Args) -> anyhow::Result<ExperimentSpec> {
    let scenario: Scenario = args.scenario.parse()?;
    let mut spec = ExperimentSpec::new(scenario);
    spec.dims = args.n.clone();
    spec.seed = args.seed;
    spec.samples = args.samples;
    spec.p_values = args.p.clone();
    spec.tol = args.tol;
    spec.atoms = args.atoms;
    spec.atoms_factor = args.atoms_factor;
    spec.delta = args.delta;
    spec.seeds = args.seeds;
    spec.families = args.family.iter().map(|f| f.parse::<Family>()).collect::<Result<_, _>>()?;
    spec.measure = args.measure.clone();
    spec.tamper = Tamper { omega_factor: args.tamper_omega, psi_cubic: args.tamper_psi_cubic };
    spec.threads = args.threads;
    spec.out = args.out.clone();
    spec.format = args.format.parse()?;
    Ok(spec)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let spec = spec_from(args)?;
    let report = lab::run(&spec)?;
    let mut out = std::io::stdout().lock();
    match spec.format {
        OutputFormat::Json => writeln!(out, "{}", report.to_json())?,
        OutputFormat::Csv => report.write_csv(&mut out)?,
    }
    out.flush()?;
    if let Some(path) = &spec.out {
        let (j, c) = lab::write_outputs(&report, path).with_context(|| format!("writing {}", path.display()))?;
        if !args.quiet {
            eprintln!("wrote {} and {}", j.display(), c.display());
        }
    }
    if !args.quiet {
        for a in &report.assertions {
            let tag = match a.status {
                Status::Pass => "PASS",
                Status::Warn => "WARN",
                Status::Fail => "FAIL",
            };
            eprintln!("{tag} {}: {}", a.name, a.detail);
        }
        eprintln!("{} in {:.2}s", if report.all_pass { "all assertions pass" } else { "assertions failed" }, report.wall_clock_seconds);
    }
    Ok(report.all_pass)
}
