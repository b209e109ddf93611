use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wentzell::scenario::{
    batch, parse_range, preset_names, presets, resolve_target, run, spectrum_of, sweep, RunOptions, RunReport,
};
use wentzell::Error;

/// Simulate and certify damped wave equations with dynamic boundary
/// conditions under PI boundary control.
#[derive(Parser, Debug)]
#[command(name = "wentzell-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a config file or a built-in preset and write CSVs plus report.json.
    Run {
        /// Path to a TOML config, or a preset name such as `2b`.
        target: String,
        /// Compute the sandwich and decay constants of the Lyapunov functional.
        #[arg(long)]
        certify: bool,
        /// Check the resolvent solver and the monotonicity identity.
        #[arg(long)]
        resolvent_check: bool,
        /// Output directory (default: `output.dir`, else `$WENTZELL_OUT/<preset>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
    /// Certify the closed loop over a range of Lyapunov weights.
    Sweep {
        /// Config file or preset name.
        #[arg(default_value = "3b")]
        target: String,
        /// `start:end:count`, inclusive.
        #[arg(long)]
        ell: String,
    },
    /// Print the eigenvalues of the (closed-loop) discrete dynamics.
    Spectrum {
        /// Config file or preset name.
        target: String,
    },
    /// Run several configs concurrently, each into its own subdirectory.
    Batch {
        /// Config files or preset names (default: every preset).
        targets: Vec<String>,
        #[arg(long)]
        certify: bool,
        /// Parent directory for the runs (default: `$WENTZELL_OUT`, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::InvalidGrid(_) | Error::Variant { .. } => 2,
        Error::Divergence { .. } | Error::StepUndefined { .. } => 3,
        Error::Certification(_) => 4,
        _ => 1,
    }
}

fn summarize(r: &RunReport) {
    println!("  steps {} (dt = {:.3e}), t_final = {}", r.steps, r.dt, r.t_final);
    println!("  y(T) = {:.6}", r.y_final);
    if let Some(e) = r.y_error {
        println!("  |y(T) - v1_ref| = {e:.3e}");
    }
    if let Some(c) = r.conservation_residual {
        println!("  conservation residual = {c:.3e}");
    }
    println!("  energy drift = {:.3e}, slope = {:.3e}", r.energy_drift, r.energy_drift_slope);
    println!("  max step increase of V / V0 = {:.3e}", r.v_max_step_increase);
    if let Some(f) = &r.decay {
        println!("  Gamma decay: rho = {:.5}, M = {:.4}, r2 = {:.4}", f.rho, f.m, f.r_squared);
    }
    if let Some(f) = &r.sup_decay {
        println!("  sup deviation decay: rho = {:.5}, r2 = {:.4}", f.rho, f.r_squared);
    }
    if let Some(c) = &r.certification {
        println!("  certification: ell = {}, c = {:.4e}, C = {:.4e}, rho_formal = {:.4e}", c.ell, c.c, c.big_c, c.rho_formal);
    }
    if let Some(rc) = &r.resolvent_check {
        println!(
            "  resolvent: constant case {:.2e}, residual ratios {:?}, pairing min {:.3e}",
            rc.constant_case_error, rc.residual_ratios, rc.pairing_min
        );
    }
    if let Some(s) = &r.steady_check {
        println!("  steady profile error = {:.3e}, identity defect = {:.1e}", s.max_error, s.identity_defect);
    }
    for note in &r.notes {
        println!("  note: {note}");
    }
}

fn certification_failure(r: &RunReport) -> Option<Error> {
    let c = r.certification.as_ref()?;
    (!c.is_certified()).then(|| Error::Certification(format!("c = {:e}, rho_formal = {:e}", c.c, c.rho_formal)))
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { target, certify, resolvent_check, out } => {
            let cfg = resolve_target(&target)?;
            let dir = cfg.output_dir(out.as_deref());
            let opts = RunOptions { certify, resolvent_check, out_dir: Some(dir.clone()) };
            let outcome = run(&cfg, &opts)?;
            println!("{target} -> {}", dir.display());
            summarize(&outcome.report);
            if let Some(e) = certification_failure(&outcome.report) {
                return Err(e);
            }
        }
        Command::Presets => {
            println!("{:<6} {:<6} {:>7} {:>8} {:>8} {:>7} {:>6}", "name", "var", "q", "kp", "alpha2", "v1_ref", "T");
            for cfg in presets() {
                println!(
                    "{:<6} {:<6} {:>7} {:>8} {:>8} {:>7} {:>6}",
                    cfg.preset.as_deref().unwrap_or("-"),
                    cfg.variant.to_string(),
                    cfg.physical.q1,
                    cfg.control.kp,
                    cfg.control.alpha2,
                    cfg.control.v1_ref,
                    cfg.horizon(),
                );
            }
        }
        Command::Sweep { target, ell } => {
            let cfg = resolve_target(&target)?;
            let ells = parse_range(&ell)?;
            println!("{:>12} {:>14} {:>14} {:>14}", "ell", "c", "C", "rho_formal");
            for r in sweep(&cfg, &ells)? {
                println!("{:>12.6} {:>14.6e} {:>14.6e} {:>14.6e}", r.ell, r.c, r.big_c, r.rho_formal);
            }
        }
        Command::Spectrum { target } => {
            let cfg = resolve_target(&target)?;
            let ev = spectrum_of(&cfg)?;
            let max_re = ev.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            println!("# {} eigenvalues, max Re = {max_re:.6e}", ev.len());
            println!("re,im");
            for l in ev {
                println!("{:.16e},{:.16e}", l.re, l.im);
            }
        }
        Command::Batch { targets, certify, out } => {
            let names = if targets.is_empty() { preset_names() } else { targets };
            let configs = names
                .iter()
                .map(|t| resolve_target(t).map(|c| (batch_name(t), c)))
                .collect::<Result<Vec<_>, _>>()?;
            let base = out
                .or_else(|| std::env::var_os(wentzell::scenario::OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            let opts = RunOptions { certify, ..RunOptions::default() };
            let mut first_err = None;
            for (name, result) in batch(&configs, &base, &opts) {
                match result {
                    Ok(r) => {
                        println!("{name} -> {}", base.join(&name).display());
                        summarize(&r);
                        if let Some(e) = certification_failure(&r) {
                            first_err.get_or_insert(e);
                        }
                    }
                    Err(e) => {
                        eprintln!("{name}: {e}");
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn batch_name(target: &str) -> String {
    std::path::Path::new(target)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| target.to_string())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
