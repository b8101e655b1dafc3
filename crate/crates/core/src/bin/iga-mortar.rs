use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iga_mortar::assembly::Strategy;
use iga_mortar::experiments::{parse_dual, run_study, table1, table1_cells, table1_csv, Quadrature, StudySettings};
use iga_mortar::multipatch::{Case, DualVariant};
use iga_mortar::Error;

#[derive(Parser)]
#[command(name = "iga-mortar", version, about = "Mortar-coupled isogeometric convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study of one configuration.
    Study(StudyArgs),
    /// Last-level convergence rates for degree 5 with slave integration.
    Table1 {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of levels (default 8).
        #[arg(long, default_value_t = 8)]
        levels: usize,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// M1, M2, M3 or MATCHING.
    #[arg(long, value_parser = parse_case)]
    case: Option<Case>,
    #[arg(long)]
    degree: Option<usize>,
    /// M0, M2, or an explicit dual degree such as P2.
    #[arg(long, value_parser = parse_dual_arg)]
    dual: Option<DualVariant>,
    /// exact, slave or nonsymmetric.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Interface rule order q (p + 1 + q Gauss points per element).
    #[arg(long, conflicts_with = "gauss_points")]
    quad_order: Option<usize>,
    /// Interface Gauss points per element.
    #[arg(long)]
    gauss_points: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    swap_roles: bool,
    /// CSV output path; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file with the same keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_case(s: &str) -> Result<Case, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dual_arg(s: &str) -> Result<DualVariant, String> {
    parse_dual(s).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn study(args: StudyArgs) -> Result<(), Error> {
    let file = match &args.config {
        Some(p) => StudySettings::from_file(p)?,
        None => StudySettings::default(),
    };
    let quadrature = match (args.quad_order, args.gauss_points) {
        (Some(q), _) => Some(Quadrature::Order(q)),
        (None, Some(n)) => Some(Quadrature::Points(n)),
        _ => None,
    };
    let flags = StudySettings {
        case: args.case,
        degree: args.degree,
        dual: args.dual,
        strategy: args.strategy,
        quadrature,
        levels: args.levels,
        swap_roles: args.swap_roles.then_some(true),
        out: args.out,
    };
    let config = file.merged(flags).into_config()?;
    let report = run_study(&config)?;
    for (k, v) in config.metadata() {
        eprintln!("# {k}={v}");
    }
    for row in &report.rows {
        if let Err(msg) = &row.outcome {
            eprintln!("# level {} failed: {msg}", row.level);
        }
    }
    match &config.out {
        Some(path) => report.write_csv(path),
        None => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Study(args) => study(args),
        Command::Table1 { out, levels } => match (out, levels) {
            (Some(path), 8) => table1(&path).map(|_| ()),
            (out, levels) => {
                let csv = table1_csv(&table1_cells(levels)?);
                match out {
                    Some(path) => Ok(std::fs::write(path, csv)?),
                    None => {
                        print!("{csv}");
                        Ok(())
                    }
                }
            }
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
