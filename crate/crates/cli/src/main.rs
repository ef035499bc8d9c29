//! Command-line front end: family construction, verification suites,
//! projection tables, completeness reports, simulation and estimation.
//!
//! Exit codes: 0 success, 1 verification/runtime failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use steinpoly::basis::basis_for;
use steinpoly::completeness::{build_kernel, injectivity_report};
use steinpoly::estimator::{
    default_truncation, fit, ghat_grid, load_csv, synthesize, SynthSpec, ZLaw,
};
use steinpoly::family::CondFamily;
use steinpoly::poly::Poly;
use steinpoly::projection::{fit_mu_polynomial, projection_table};
use steinpoly::rational::from_f64;
use steinpoly::report;
use steinpoly::verification::verify_family;

#[derive(Parser)]
#[command(
    name = "steinpoly",
    version,
    about = "Orthogonal-polynomial eigenbases of Stein-Markov operators: \
             construction, verification, projections, completeness \
             certificates, simulation and IV estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the family's eigenbasis {(Q_j, lambda_j)} as JSON.
    Families {
        /// Family spec: a JSON file path or an inline JSON object.
        #[arg(long)]
        family: String,
        /// Basis truncation J.
        #[arg(long = "J", default_value_t = 10)]
        j: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the family's verification suite; exits 1 if any residual exceeds
    /// its tolerance.
    Verify {
        #[arg(long)]
        family: String,
        #[arg(long = "J", default_value_t = 10)]
        j: usize,
        /// Tolerance multiplier applied to every pinned threshold.
        #[arg(long, default_value_t = 1.0)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate projections P_j over a z grid (CSV) with fitted
    /// mu-polynomial coefficients (JSON).
    Project {
        #[arg(long)]
        family: String,
        #[arg(long = "J", default_value_t = 5)]
        j: usize,
        /// Grid as lo:hi:count, endpoints inclusive.
        #[arg(long = "z-grid")]
        z_grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the conditional-density kernel and report the finite-section
    /// injectivity certificate.
    Complete {
        #[arg(long)]
        family: String,
        #[arg(long = "z-grid")]
        z_grid: String,
        #[arg(long = "x-trunc", default_value_t = 21)]
        x_trunc: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic dataset Y = g(X) + eps with X | Z from the family.
    Simulate {
        #[arg(long)]
        family: String,
        /// Structural polynomial g as comma-separated coefficients
        /// (constant first).
        #[arg(long, default_value = "1,0.5,-0.3")]
        g: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long = "noise-sd", default_value_t = 0.5)]
        noise_sd: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the series estimator to a CSV dataset and dump the coefficients
    /// and the fitted structural function.
    Estimate {
        #[arg(long)]
        family: String,
        /// Input CSV with header y,x,z1...,z2...
        #[arg(long)]
        data: PathBuf,
        /// Series truncation; defaults to ceil(n^(1/4)) capped at 10.
        #[arg(long = "J")]
        j: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_family(arg: &str) -> Result<CondFamily, String> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| format!("cannot read family spec {arg}: {e}"))?
    };
    CondFamily::from_json(&text).map_err(|e| format!("invalid family spec: {e}"))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid must be lo:hi:count, got '{spec}'"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("grid lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("grid hi: {e}"))?;
    let count: usize = parts[2].parse().map_err(|e| format!("grid count: {e}"))?;
    if count < 1 || hi < lo {
        return Err(format!("degenerate grid '{spec}'"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

fn parse_poly(spec: &str) -> Result<Poly, String> {
    let coeffs = spec
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| format!("coefficient '{tok}': {e}"))
                .and_then(|v| from_f64(v).ok_or_else(|| format!("non-finite coefficient {v}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Poly::from_coeffs(coeffs))
}

fn write_artifact(dir: &PathBuf, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Families { family, j, out } => {
            let fam = parse_family(&family).map_err(Usage)?;
            let basis = basis_for(&fam, j)?;
            write_artifact(&out, "basis.json", &report::basis_json(&basis))?;
            println!("wrote {}", out.join("basis.json").display());
            Ok(0)
        }
        Command::Verify {
            family,
            j,
            tol,
            seed,
            out,
        } => {
            if tol <= 0.0 {
                return Err(Usage("tolerance must be positive".into()).into());
            }
            let fam = parse_family(&family).map_err(Usage)?;
            let rep = verify_family(&fam, j, tol, seed)?;
            let mut summary = String::from("[");
            for (i, c) in rep.checks.iter().enumerate() {
                if i > 0 {
                    summary.push(',');
                }
                summary.push_str(&format!(
                    "\n  {{\"family\": \"{}\", \"check\": \"{}\", \"max_residual\": {}, \"tolerance\": {}, \"pass\": {}}}",
                    rep.family,
                    c.name,
                    report::fmt_g17(c.max_residual),
                    report::fmt_g17(c.tolerance),
                    c.pass
                ));
            }
            summary.push_str("\n]\n");
            write_artifact(&out, "verify_summary.json", &summary)?;
            write_artifact(
                &out,
                "verify_residuals.json",
                &report::residual_report_json(&rep.family, &rep.details),
            )?;
            for c in &rep.checks {
                println!(
                    "{:28} {} (max residual {:.3e}, tolerance {:.3e})",
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.max_residual,
                    c.tolerance
                );
            }
            Ok(if rep.all_pass() { 0 } else { 1 })
        }
        Command::Project {
            family,
            j,
            z_grid,
            out,
        } => {
            let fam = parse_family(&family).map_err(Usage)?;
            let grid = parse_grid(&z_grid).map_err(Usage)?;
            let basis = basis_for(&fam, j)?;
            let table = projection_table(&fam, &basis, &grid)?;
            write_artifact(&out, "projections.csv", &report::projection_csv(&table))?;
            let mut fits = Vec::new();
            for jj in 0..=j {
                match fit_mu_polynomial(&table, jj) {
                    Ok(f) => fits.push((jj, f.coeffs, f.max_residual)),
                    Err(e) => eprintln!("mu fit at degree {jj} skipped: {e}"),
                }
            }
            write_artifact(&out, "mu_fits.json", &report::mu_fit_json(&fits))?;
            println!("wrote {}", out.join("projections.csv").display());
            Ok(0)
        }
        Command::Complete {
            family,
            z_grid,
            x_trunc,
            out,
        } => {
            let fam = parse_family(&family).map_err(Usage)?;
            let grid = parse_grid(&z_grid).map_err(Usage)?;
            let kernel = build_kernel(&fam, &grid, x_trunc)?;
            let rep = injectivity_report(&kernel);
            write_artifact(&out, "completeness.json", &report::injectivity_json(&rep))?;
            println!(
                "n = {}, min_sv = {:.6e}, max_sv = {:.6e}",
                rep.n, rep.min_sv, rep.max_sv
            );
            Ok(0)
        }
        Command::Simulate {
            family,
            g,
            n,
            seed,
            noise_sd,
            out,
        } => {
            let fam = parse_family(&family).map_err(Usage)?;
            let g_true = parse_poly(&g).map_err(Usage)?;
            let (lo, hi) = fam.z_domain();
            let data = synthesize(
                &fam,
                &SynthSpec {
                    g_true,
                    z_law: ZLaw::Uniform { lo, hi },
                    noise_sd,
                    n,
                    seed,
                    endogenous: 0.0,
                },
            )?;
            write_artifact(&out, "dataset.csv", &report::dataset_csv(&data))?;
            println!("wrote {} rows", data.len());
            Ok(0)
        }
        Command::Estimate {
            family,
            data,
            j,
            ridge,
            out,
        } => {
            let fam = parse_family(&family).map_err(Usage)?;
            let loaded = load_csv(&data, &fam)?;
            for (line, reason) in &loaded.rejected {
                eprintln!("rejected row {line}: {reason}");
            }
            let n = loaded.data.len();
            let j = j.unwrap_or_else(|| default_truncation(n));
            let basis = basis_for(&fam, j)?;
            let result = fit(&loaded.data, &fam, &basis, j, ridge)?;
            write_artifact(&out, "fit.json", &report::fit_json(&result))?;
            let grid = ghat_grid(&fam, 101);
            write_artifact(&out, "ghat.csv", &report::ghat_csv(&result, &grid))?;
            println!(
                "fitted J = {} on {} rows (condition {:.3e})",
                j, n, result.condition
            );
            Ok(0)
        }
    }
}

/// Usage-class error: maps to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("STEINPOLY_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            if err.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
