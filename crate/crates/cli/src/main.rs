use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use polyflow::optimize::Mode;
use polyflow::pipeline::{Pipeline, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    GenerateData,
    Train,
    ExtractRegions,
    Simplify,
    Solve,
    Evaluate,
    Report,
    /// Every stage in order, solving both modes.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    P2,
    P3,
}

/// Learned-constraint scheduling pipeline for radial distribution networks.
#[derive(Debug, Parser)]
#[command(name = "polyflow", version)]
struct Cli {
    stage: Stage,
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Formulation for the solve stage; both when omitted.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, default_value = "artifacts")]
    out: PathBuf,
}

fn run(cli: Cli) -> polyflow::Result<()> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let pipeline = Pipeline::new(config, &cli.out)?;
    let modes = match cli.mode {
        Some(ModeArg::P2) => vec![Mode::P2],
        Some(ModeArg::P3) => vec![Mode::P3],
        None => vec![Mode::P2, Mode::P3],
    };
    match cli.stage {
        Stage::GenerateData => {
            let s = pipeline.generate_data()?;
            println!(
                "labeled {} samples ({} dropped, {:.1}% insecure)",
                s.labeled,
                s.dropped,
                100.0 * s.infeasible_fraction
            );
        }
        Stage::Train => {
            let s = pipeline.train()?;
            for (name, m) in [("vio", &s.vio), ("loss", &s.loss)] {
                println!(
                    "{name} {:?}: validation mse {:.3e} -> {:.3e} (epoch {})",
                    m.hidden, m.initial_validation_mse, m.best_validation_mse, m.best_epoch
                );
            }
        }
        Stage::ExtractRegions => {
            let s = pipeline.extract_regions()?;
            println!(
                "{} sampled regions, {} empty, {} retained",
                s.sampled_regions, s.dropped_infeasible, s.retained
            );
        }
        Stage::Simplify => {
            let s = pipeline.simplify()?;
            println!(
                "{} regions, mean rows {:.2} -> {:.2}",
                s.regions, s.mean_rows_before, s.mean_rows_after
            );
        }
        Stage::Solve => {
            for mode in modes {
                for r in pipeline.solve(mode)? {
                    println!(
                        "{mode} {}: {:?} objective {} nodes {}",
                        r.scenario,
                        r.status,
                        r.objective.map_or("-".into(), |v| format!("{v:.4}")),
                        r.node_count
                    );
                }
            }
        }
        Stage::Evaluate => {
            for (name, mode, a) in pipeline.evaluate()? {
                println!(
                    "{mode} {name}: cost {:.4} max voltage violation {:.5} p.u.",
                    a.total_cost, a.max_voltage_violation
                );
            }
        }
        Stage::Report => {
            let s = pipeline.report()?;
            println!("{} scenario rows written to {}", s.scenarios.len(), cli.out.display());
        }
        Stage::All => {
            let s = pipeline.run_all()?;
            println!("{} scenario rows written to {}", s.scenarios.len(), cli.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
