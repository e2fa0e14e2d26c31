//! Benchmark and scenario runner. Reports go to stdout (or `--out`);
//! failures print a one-line JSON error to stderr and exit nonzero.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ztuav_core::bench::{
    bench_phases, bench_primitives, report_sizes, BenchConfig, CostReport, SizeConstants,
};
use ztuav_core::sim::{run_named_scenario, run_scenario, AdversaryScript, Scenario, World};

#[derive(Parser)]
#[command(name = "ztuav", version, about = "UAV authentication cost and scenario reports")]
struct Cli {
    /// Iterations per measured primitive
    #[arg(long, default_value_t = 1000, global = true)]
    iterations: u32,

    /// Seed for every randomized component
    #[arg(long, default_value_t = 1, global = true)]
    seed: u64,

    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    /// Report sizes under the 128-byte-G1 reference constants only,
    /// instead of both reference and backend widths
    #[arg(long, global = true)]
    paper_constants: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Mean wall time of the six algebraic primitives
    Primitives,
    /// Operation counts and wall time per protocol phase and actor
    Phases,
    /// Message and storage byte accounting, including fleet growth
    Sizes,
    /// Run a scenario or adversary script from a JSON file
    Scenario { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => match &cli.out {
            None => {
                // a closed pipe on the consumer side is not an error
                let _ = writeln!(io::stdout(), "{text}");
                ExitCode::SUCCESS
            }
            Some(path) => match fs::write(path, text) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&format!("cannot write {}: {e}", path.display())),
            },
        },
        Err(msg) => fail(&msg),
    }
}

fn fail(msg: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": msg }));
    ExitCode::FAILURE
}

fn run(cli: &Cli) -> Result<String, String> {
    let cfg = BenchConfig {
        iterations: cli.iterations,
        seed: cli.seed,
        ..BenchConfig::default()
    };
    let report = match &cli.command {
        Command::Primitives => CostReport {
            primitives: bench_primitives(&cfg),
            ..CostReport::default()
        },
        Command::Phases => CostReport {
            phases: bench_phases(&cfg),
            ..CostReport::default()
        },
        Command::Sizes => CostReport {
            sizes: size_rows(cli.paper_constants),
            ..CostReport::default()
        },
        Command::Scenario { file } => return scenario_report(cli, file),
    };
    Ok(match cli.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    })
}

fn size_rows(paper_only: bool) -> Vec<ztuav_core::bench::SizeRow> {
    let pac_len = 32;
    let fleet = [1, 10, 100, 1000];
    let mut rows = report_sizes(&SizeConstants::paper_constants(), pac_len, &fleet);
    for row in &mut rows {
        row.item = format!("paper/{}", row.item);
    }
    if !paper_only {
        let mut backend = report_sizes(&SizeConstants::backend_constants(), pac_len, &fleet);
        for row in &mut backend {
            row.item = format!("backend/{}", row.item);
        }
        rows.extend(backend);
    }
    rows
}

/// A scenario file holds either a named step list or a bare adversary
/// script; the latter runs after one honest registration + authentication.
fn scenario_report(cli: &Cli, file: &PathBuf) -> Result<String, String> {
    let text = fs::read_to_string(file).map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let report = if let Ok(scenario) = serde_json::from_str::<Scenario>(&text) {
        run_named_scenario(&scenario, cli.seed).map_err(|e| e.to_string())?
    } else {
        let script = AdversaryScript::from_json(&text).map_err(|e| e.to_string())?;
        let mut world = World::new(cli.seed);
        run_scenario(&mut world, &script).map_err(|e| e.to_string())?
    };
    Ok(match cli.format {
        Format::Json => report.to_json(),
        Format::Csv => {
            let mut out = String::from("step,kind,outcome,rep_after\n");
            for e in &report.events {
                let rep = e.rep_after.map(|r| r.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},\"{}\",{}\n", e.step, e.kind, e.outcome, rep));
            }
            out
        }
    })
}
