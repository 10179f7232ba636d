use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use wsmobility::runner::{emit_plot_data, run_command, ExitStatus, Figure};
use wsmobility::scenario::{load_scenario, Fidelity};
use wsmobility::sim::MetricsReport;

#[derive(Parser)]
#[command(name = "wsmob", version, about = "White-space mobility simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every problem found.
    Validate {
        scenario: PathBuf,
        /// Reject unknown keys.
        #[arg(long)]
        strict: bool,
    },
    /// Run a scenario for one or more seeds and write reports.
    Run {
        scenario: PathBuf,
        /// Single seed; defaults to the scenario's own seed.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Seed list such as `1,2,5` or a range such as `1..10` (inclusive).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
        /// Overrides the scenario's fidelity: analytic, sample or mixed.
        #[arg(long)]
        fidelity: Option<Fidelity>,
    },
    /// Turn JSON reports into tidy CSV for one figure family.
    Plot {
        #[arg(long)]
        figure: Figure,
        /// JSON reports written by `run`.
        reports: Vec<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Copy the bundled fixtures into a directory.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

const FIXTURES: &[(&str, &str)] = &[
    ("stations.txt", include_str!("../../core/fixtures/stations.txt")),
    ("hallway.scn", include_str!("../../core/fixtures/hallway.scn")),
    ("detroit.scn", include_str!("../../core/fixtures/detroit.scn")),
    ("detroit_uncompensated.scn", include_str!("../../core/fixtures/detroit_uncompensated.scn")),
    ("distance_300.scn", include_str!("../../core/fixtures/distance_300.scn")),
    ("distance_500.scn", include_str!("../../core/fixtures/distance_500.scn")),
    ("distance_700.scn", include_str!("../../core/fixtures/distance_700.scn")),
    ("distance_900.scn", include_str!("../../core/fixtures/distance_900.scn")),
    ("fidelity.scn", include_str!("../../core/fixtures/fidelity.scn")),
    ("energy.scn", include_str!("../../core/fixtures/energy.scn")),
    ("widths.scn", include_str!("../../core/fixtures/widths.scn")),
];

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed '{s}'")))
        .collect()
}

fn validate(path: &Path, strict: bool) -> ExitStatus {
    match load_scenario(path, strict) {
        Ok(sc) => {
            println!(
                "{}: ok ({} base stations, {} nodes)",
                path.display(),
                sc.base_stations.len(),
                sc.nodes.len()
            );
            ExitStatus::Success
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            for issue in e.issues() {
                eprintln!("  {issue}");
            }
            ExitStatus::Invalid
        }
    }
}

fn plot(figure: Figure, reports: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut loaded = Vec::new();
    for p in reports {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: MetricsReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        loaded.push(r);
    }
    let csv = emit_plot_data(&loaded, figure)?;
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn fixtures(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, text) in FIXTURES {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario, strict } => exit(validate(&scenario, strict)),
        Command::Run {
            scenario,
            seed,
            seeds,
            out,
            strict,
            fidelity,
        } => {
            let seeds = match (seed, seeds) {
                (Some(s), _) => vec![s],
                (None, Some(text)) => match parse_seeds(&text) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("--seeds: {e}");
                        return exit(ExitStatus::Invalid);
                    }
                },
                (None, None) => match load_scenario(&scenario, strict) {
                    Ok(sc) => vec![sc.seed],
                    Err(_) => return exit(validate(&scenario, strict)),
                },
            };
            match run_command(&scenario, &seeds, &out, strict, fidelity) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    exit(ExitStatus::Success)
                }
                Err(e) => {
                    eprintln!("{}: {e}", scenario.display());
                    if let wsmobility::runner::RunError::Scenario(se) = &e {
                        for issue in se.issues() {
                            eprintln!("  {issue}");
                        }
                    }
                    exit(e.status())
                }
            }
        }
        Command::Plot { figure, reports, out } => match plot(figure, &reports, out.as_deref()) {
            Ok(()) => exit(ExitStatus::Success),
            Err(e) => {
                eprintln!("{e:#}");
                exit(ExitStatus::Runtime)
            }
        },
        Command::Fixtures { out } => match fixtures(&out) {
            Ok(()) => exit(ExitStatus::Success),
            Err(e) => {
                eprintln!("{e:#}");
                exit(ExitStatus::Runtime)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
