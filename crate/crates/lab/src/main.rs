//! `lab`: runs the numerical studies and writes CSV (and SVG) output.
//! Exits with status 2 when a study detects an invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hpbem::assembly::QuadratureOrders;
use hpbem::experiments::{
    run_h_sweep, run_memory_table, run_norm_equivalence_study, run_p_sweep, run_refel_study,
    sweep_chart, ExperimentConfig, Geometry, PrecondKind, RefinementMode,
};

#[derive(Parser)]
#[command(name = "lab", about = "hp boundary element preconditioning studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reference-element mass / stiffness conditioning.
    Refel {
        #[arg(long, default_value_t = 10)]
        pmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Degree sweep on a fixed mesh.
    SweepP(SweepArgs),
    /// Refinement sweep at fixed degree(s).
    SweepH(SweepArgs),
    /// Factor storage of exact vs. reference patch blocks.
    Memory(SweepArgs),
    /// Coefficient-norm equivalences on uniformly refined screens (large cases skipped).
    Norms(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// `screen:N` or `fichera`.
    #[arg(long, default_value = "screen:3")]
    geom: String,
    /// Degrees: `3`, `1..5` (inclusive) or `1,2,4`.
    #[arg(long)]
    p: Option<String>,
    /// Comma separated subset of none,diag,B,B2,B3.
    #[arg(long, default_value = "none,diag,B,B2,B3")]
    precond: String,
    /// Stabilization; defaults to 0 on screens and 0.2 on closed surfaces.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of refinement steps.
    #[arg(long)]
    levels: Option<usize>,
    /// `uniform`, `corner:THETA` or `file:PATH`.
    #[arg(long, default_value = "uniform")]
    mode: String,
    /// Extra Gauss points on every quadrature direction.
    #[arg(long, default_value_t = 0)]
    quad_extra: usize,
    /// Largest dimension solved by dense eigenvalue computations.
    #[arg(long)]
    dense_threshold: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV and SVG files (stdout only if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_degrees(s: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim_start_matches('=').trim().parse()?);
        if a > b {
            bail!("empty degree range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().with_context(|| format!("bad degree '{x}'")))
        .collect()
}

impl SweepArgs {
    fn config(&self, default_p: &str, default_levels: usize) -> Result<ExperimentConfig> {
        let geometry: Geometry = self.geom.parse()?;
        let mut c = ExperimentConfig::new(geometry);
        c.p_values = parse_degrees(self.p.as_deref().unwrap_or(default_p))?;
        c.preconditioners = self
            .precond
            .split(',')
            .map(|s| s.trim().parse::<PrecondKind>())
            .collect::<hpbem::Result<_>>()?;
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        c.levels = self.levels.unwrap_or(default_levels);
        c.mode = self.mode.parse::<RefinementMode>()?;
        c.quadrature = QuadratureOrders {
            extra: self.quad_extra,
        };
        if let Some(t) = self.dense_threshold {
            c.spectral.dense_threshold = t;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.output_dir = self.out.clone();
        c.validate()?;
        Ok(c)
    }
}

fn emit(out: Option<&PathBuf>, name: &str, csv: &str, svg: Option<String>) -> Result<()> {
    print!("{csv}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join(format!("{name}.csv")), csv)?;
        if let Some(svg) = svg {
            std::fs::write(dir.join(format!("{name}.svg")), svg)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Vec<String>> {
    Ok(match cli.command {
        Command::Refel { pmax, out } => {
            let r = run_refel_study(&(1..=pmax).collect::<Vec<_>>())?;
            emit(out.as_ref(), "refel", &r.csv(), None)?;
            r.violations
        }
        Command::SweepP(a) => {
            let c = a.config("1..5", 0)?;
            let r = run_p_sweep(&c)?;
            emit(c.output_dir.as_ref(), "sweep_p", &r.csv(), Some(sweep_chart(&r, false)))?;
            r.violations
        }
        Command::SweepH(a) => {
            let c = a.config("3", 3)?;
            let r = run_h_sweep(&c)?;
            emit(c.output_dir.as_ref(), "sweep_h", &r.csv(), Some(sweep_chart(&r, true)))?;
            r.violations
        }
        Command::Memory(a) => {
            let c = a.config("2..5", 2)?;
            let r = run_memory_table(&c)?;
            emit(c.output_dir.as_ref(), "memory", &r.csv(), None)?;
            r.violations
        }
        Command::Norms(a) => {
            let c = a.config("1..5", 3)?;
            let r = run_norm_equivalence_study(&c)?;
            emit(c.output_dir.as_ref(), "norms", &r.csv(), None)?;
            r.violations
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) if v.is_empty() => ExitCode::SUCCESS,
        Ok(v) => {
            for msg in v {
                eprintln!("invariant violated: {msg}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_lists() {
        assert_eq!(parse_degrees("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_degrees("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_degrees("3").unwrap(), vec![3]);
        assert_eq!(parse_degrees("1, 4").unwrap(), vec![1, 4]);
        assert!(parse_degrees("5..1").is_err());
    }

    #[test]
    fn cli_parses() {
        Cli::try_parse_from(["lab", "sweep-p", "--geom", "screen:4", "--p", "1..5", "--precond", "none,B3", "--alpha", "0.2"]).unwrap();
        Cli::try_parse_from(["lab", "sweep-h", "--levels", "3", "--mode", "corner:0.25", "--p", "3"]).unwrap();
        Cli::try_parse_from(["lab", "memory", "--geom", "fichera", "--p", "2..5"]).unwrap();
        Cli::try_parse_from(["lab", "norms", "--geom", "screen:2"]).unwrap();
        Cli::try_parse_from(["lab", "refel", "--pmax", "10"]).unwrap();
    }
}
