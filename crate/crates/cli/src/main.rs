use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use depthtok::{generate_scene, run_trace, Engine, EngineConfig, PatchLabel, Scenario, ScenarioSpec, Trace};

#[derive(Parser)]
#[command(
    name = "depthtok",
    version,
    about = "Depth-guided visual token compression over recorded traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace.
    Gen {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 50)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the engine over a trace and write a report.
    Run {
        #[arg(long)]
        trace: PathBuf,
        /// Config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Dump the primary-view merge map at one frame.
    Inspect {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        frame: u64,
        /// One line per original patch: `<patch> <retained row>`.
        #[arg(long)]
        dump_merge_map: PathBuf,
        /// Region labels as a binary PGM, protected patches white.
        #[arg(long)]
        labels_pgm: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare configs on one trace.
    Bench {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<EngineConfig> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Ok(EngineConfig::parse_text(&text).with_context(|| format!("in config {}", p.display()))?)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn gen(scenario: &str, frames: usize, seed: u64, out: &Path) -> anyhow::Result<()> {
    let scenario: Scenario = scenario.parse()?;
    let trace = generate_scene(&ScenarioSpec::preset(scenario, frames), seed)?;
    trace.write(out)?;
    println!("wrote {frames} frames of {scenario} to {}", out.display());
    Ok(())
}

fn run(trace: &Path, config: Option<&Path>, report: &Path) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let trace = Trace::read(trace)?;
    let rep = run_trace(&config, &trace)?;
    write(report, rep.to_text())?;
    let a = &rep.aggregate;
    println!(
        "frames {}  mean rho {:.4}  steady-state retained {}  predicted speedup {:.3}",
        a.frames, a.mean_rho, a.steady_state_retained, a.predicted_speedup
    );
    Ok(())
}

fn inspect(trace: &Path, frame: u64, map: &Path, pgm: Option<&Path>, config: Option<&Path>) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let trace = Trace::read(trace)?;
    if frame as usize >= trace.frames.len() {
        bail!(depthtok::Error::IndexOutOfRange {
            index: frame as usize,
            patches: trace.frames.len(),
        });
    }
    let mut engine = Engine::new(config, trace.layout())?;
    let mut last = None;
    for f in &trace.frames[..=frame as usize] {
        last = Some(engine.step(f)?);
    }
    let out = last.expect("at least one frame stepped");

    let mut text = String::new();
    for (patch, row) in out.primary.unmerge_map.iter().enumerate() {
        let _ = writeln!(text, "{patch} {row}");
    }
    write(map, text)?;

    if let Some(pgm) = pgm {
        let grid = trace.frames[0].cameras[0].grid;
        let pixels: Vec<u8> = match engine.partition() {
            None => vec![0; grid.patches()],
            Some(part) => {
                let k = part.regions.len().max(1);
                part.labels
                    .iter()
                    .map(|l| match l {
                        PatchLabel::Protected => 255,
                        PatchLabel::Region(r) => (40 + r * 160 / k) as u8,
                    })
                    .collect()
            }
        };
        let mut bytes = format!("P5\n{} {}\n255\n", grid.cols, grid.rows).into_bytes();
        bytes.extend_from_slice(&pixels);
        write(pgm, bytes)?;
    }
    println!(
        "frame {} ({}): primary {} of {} tokens",
        out.frame_index,
        out.phase.as_str(),
        out.primary.retained(),
        out.primary.patches()
    );
    Ok(())
}

fn bench(trace: &Path, configs: &[PathBuf]) -> anyhow::Result<()> {
    let trace = Trace::read(trace)?;
    println!(
        "{:<28} {:>9} {:>8} {:>9} {:>7} {:>8} {:>5}",
        "config", "mean_rho", "steady_R", "speedup", "reinit", "restore", "aux"
    );
    for path in configs {
        let report = run_trace(&load_config(Some(path))?, &trace)?;
        let a = &report.aggregate;
        let name = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        println!(
            "{:<28} {:>9.4} {:>8} {:>9.3} {:>7} {:>8} {:>5}",
            name,
            a.mean_rho,
            a.steady_state_retained,
            a.predicted_speedup,
            a.reinit_events,
            a.restore_events,
            a.aux_transitions
        );
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.downcast_ref::<std::io::Error>().is_some()
            || cause
                .downcast_ref::<depthtok::Error>()
                .is_some_and(depthtok::Error::is_io)
    });
    if io {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen {
            scenario,
            frames,
            seed,
            out,
        } => gen(scenario, *frames, *seed, out),
        Command::Run { trace, config, report } => run(trace, config.as_deref(), report),
        Command::Inspect {
            trace,
            frame,
            dump_merge_map,
            labels_pgm,
            config,
        } => inspect(trace, *frame, dump_merge_map, labels_pgm.as_deref(), config.as_deref()),
        Command::Bench { trace, configs } => bench(trace, configs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
