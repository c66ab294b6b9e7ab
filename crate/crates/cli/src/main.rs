//! `vpt`: forward passes, analytic cost reports, throughput benchmarks,
//! selection statistics, embedded selftests, and weight-file generation for
//! the token-pruning pose transformer.
//!
//! Exit codes: 0 success, 1 runtime or config error, 2 usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vpt_core::analysis::{
    bench_throughput, baseline_flops_report, schedule_flops, selection_stats, BenchOptions,
    BenchResult,
};
use vpt_core::io::config::{preset, RunConfig};
use vpt_core::io::sequence::{load_pose2d, save_sequence, SequenceData};
use vpt_core::io::weights::{load_weights, save_weights};
use vpt_core::model::{init_weights, parameter_count};
use vpt_core::pipeline::{seq2frame_forward, seq2seq_forward};
use vpt_core::prune::SelectionTrace;
use vpt_core::{Error, Mode, ModelWeights, Pose3DSequence, Recovery, Rng};

#[derive(Parser)]
#[command(
    name = "vpt",
    version,
    about = "Video pose transformer engine with temporal token pruning and recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the run configuration comes from: a config file or a named preset.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// Path to a run config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (mhformer, mixste, motionbert, motionagformer).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig, Error> {
        match (&self.config, &self.preset) {
            (Some(path), None) => RunConfig::load(path),
            (None, Some(name)) => preset(name),
            _ => unreachable!("clap group enforces exactly one"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline on a sequence file and write the 3D output.
    Forward {
        #[command(flatten)]
        source: ConfigSource,
        /// Input 2D sequence file (overrides the config's `input`).
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Output 3D sequence file (overrides the config's `output`).
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Also write the selection trace to this file.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Load weights from a file instead of seeding them.
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        /// Override the seed used for weight initialization.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the analytic cost report for a configuration.
    Flops {
        #[command(flatten)]
        source: ConfigSource,
        /// Machine-readable CSV output.
        #[arg(long)]
        csv: bool,
    },
    /// Measure forward throughput, baseline against pruned.
    Bench {
        #[command(flatten)]
        source: ConfigSource,
        /// Distinct input sequences per repetition.
        #[arg(long, default_value_t = 1)]
        sequences: usize,
        /// Untimed warmup passes.
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Timed repetitions.
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Dispatch sequences across worker threads.
        #[arg(long)]
        parallel: bool,
        /// Seed for weights and synthetic inputs.
        #[arg(long)]
        seed: Option<u64>,
        /// Machine-readable CSV output (one row per configuration).
        #[arg(long)]
        csv: bool,
    },
    /// Selection-frequency histogram over a directory of sequences.
    PruneStats {
        #[command(flatten)]
        source: ConfigSource,
        /// Directory of 2D sequence files.
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        /// Machine-readable CSV output.
        #[arg(long)]
        csv: bool,
        /// Override the seed used for weight initialization.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the embedded oracle suites.
    Selftest,
    /// Generate a seeded weight file for a configuration.
    InitWeights {
        #[command(flatten)]
        source: ConfigSource,
        /// Destination weight file.
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Forward {
            source,
            input,
            output,
            trace,
            weights,
            seed,
        } => cmd_forward(source, input, output, trace, weights, seed),
        Command::Flops { source, csv } => cmd_flops(source, csv),
        Command::Bench {
            source,
            sequences,
            warmup,
            repetitions,
            parallel,
            seed,
            csv,
        } => cmd_bench(source, sequences, warmup, repetitions, parallel, seed, csv),
        Command::PruneStats {
            source,
            dir,
            csv,
            seed,
        } => cmd_prune_stats(source, dir, csv, seed),
        Command::Selftest => {
            if selftest() {
                Ok(())
            } else {
                Err(Error::Internal("selftest suites failed".into()))
            }
        }
        Command::InitWeights {
            source,
            output,
            seed,
        } => cmd_init_weights(source, output, seed),
    }
}

fn selftest() -> bool {
    vpt_cli::selftest::run_all()
}

fn build_weights(
    cfg: &RunConfig,
    weights_path: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<ModelWeights, Error> {
    match weights_path {
        Some(path) => {
            let w = load_weights(path)?;
            if w.config != cfg.pipeline.model {
                return Err(Error::Config(format!(
                    "weight file {} does not match the configured model",
                    path.display()
                )));
            }
            if cfg.pipeline.recovery == Recovery::Tra && w.tra.is_none() {
                return Err(Error::Config(format!(
                    "recovery = tra but {} carries no recovery tensors",
                    path.display()
                )));
            }
            Ok(w)
        }
        None => {
            let seed = seed_flag.unwrap_or_else(|| cfg.effective_seed());
            let with_tra = cfg.pipeline.recovery == Recovery::Tra;
            init_weights(&cfg.pipeline.model, &mut Rng::new(seed), with_tra)
        }
    }
}

fn trace_text(trace: &SelectionTrace) -> String {
    let join = |xs: &[usize]| {
        xs.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = format!("frames {}\n", trace.total_frames);
    for (m, stage) in trace.stages.iter().enumerate() {
        let _ = writeln!(
            out,
            "stage {m} block {} kept {}",
            stage.block,
            join(&stage.kept_original)
        );
    }
    if let Some(kept) = trace.final_kept() {
        let _ = writeln!(out, "final {}", join(kept));
    }
    out
}

fn cmd_forward(
    source: ConfigSource,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    trace_path: Option<PathBuf>,
    weights_path: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), Error> {
    let cfg = source.load()?;
    let input_path = input
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::Config("no input file (pass --input or set it in the config)".into()))?;
    let output_path = output
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output file (pass --output or set it in the config)".into()))?;
    let seq = load_pose2d(&input_path)?;
    let model = &cfg.pipeline.model;
    if seq.joints() != model.joints {
        return Err(Error::Config(format!(
            "{} has {} joints, config expects {}",
            input_path.display(),
            seq.joints(),
            model.joints
        )));
    }
    let w = build_weights(&cfg, weights_path.as_deref(), seed)?;

    let (poses, trace) = match cfg.pipeline.mode {
        Mode::Seq2Seq => {
            if seq.frames() != model.frames {
                return Err(Error::Config(format!(
                    "{} has {} frames, config expects {}",
                    input_path.display(),
                    seq.frames(),
                    model.frames
                )));
            }
            seq2seq_forward(&seq, &cfg.pipeline, &w)?
        }
        Mode::Seq2Frame => {
            if seq.frames() < model.frames {
                return Err(Error::Config(format!(
                    "{} has {} frames, {} are needed per window",
                    input_path.display(),
                    seq.frames(),
                    model.frames
                )));
            }
            // Slide a window over longer inputs, one center pose per window.
            let windows = seq.frames() - model.frames + 1;
            let mut all = Pose3DSequence::zeros(windows, model.joints);
            let mut first_trace = None;
            for s in 0..windows {
                let idx: Vec<usize> = (s..s + model.frames).collect();
                let window = seq.gather_frames(&idx);
                let (pose, tr) = seq2frame_forward(&window, &cfg.pipeline, &w)?;
                for j in 0..model.joints {
                    all.set(s, j, pose.get(0, j));
                }
                if first_trace.is_none() {
                    first_trace = Some(tr);
                }
            }
            (all, first_trace.expect("windows >= 1"))
        }
    };

    save_sequence(&output_path, &SequenceData::Pose3D(poses.clone()))?;
    if let Some(tp) = &trace_path {
        std::fs::write(tp, trace_text(&trace))?;
    }
    println!(
        "wrote {} frames x {} joints to {}",
        poses.frames(),
        poses.joints(),
        output_path.display()
    );
    if let Some(tp) = trace_path {
        println!("trace: {}", tp.display());
    }
    Ok(())
}

fn cmd_flops(source: ConfigSource, csv: bool) -> Result<(), Error> {
    let cfg = source.load()?;
    let report = schedule_flops(&cfg.pipeline.model, &cfg.pipeline.schedule)?;
    if csv {
        print!("{}", report.to_csv());
    } else {
        let baseline = baseline_flops_report(&cfg.pipeline.model)?;
        println!(
            "pruned   total {:.4e} ({:.2} G)",
            report.total,
            report.total / 1e9
        );
        println!(
            "baseline total {:.4e} ({:.2} G)",
            baseline.total,
            baseline.total / 1e9
        );
        println!(
            "reduction ratio {:.4} ({:.1}%)",
            report.reduction_ratio,
            report.reduction_ratio * 100.0
        );
        println!();
        print!("{}", report.to_text());
    }
    Ok(())
}

fn bench_csv_row(label: &str, cfg: &RunConfig, opts: &BenchOptions, r: &BenchResult) -> String {
    let m = &cfg.pipeline.model;
    format!(
        "{label},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6}\n",
        cfg.pipeline.mode.name(),
        cfg.pipeline.schedule.strategy.name(),
        cfg.pipeline.recovery.name(),
        m.frames,
        m.joints,
        m.blocks,
        m.dim,
        m.heads,
        opts.sequences,
        opts.repetitions,
        opts.parallel,
        r.fps_mean,
        r.fps_std
    )
}

fn cmd_bench(
    source: ConfigSource,
    sequences: usize,
    warmup: usize,
    repetitions: usize,
    parallel: bool,
    seed: Option<u64>,
    csv: bool,
) -> Result<(), Error> {
    let cfg = source.load()?;
    let model = &cfg.pipeline.model;
    let seed = seed.unwrap_or_else(|| cfg.effective_seed());
    let with_tra = cfg.pipeline.recovery == Recovery::Tra;
    let w = init_weights(model, &mut Rng::new(seed), with_tra)?;
    let opts = BenchOptions {
        sequences,
        warmup,
        repetitions,
        parallel,
        seed,
    };
    let baseline = bench_throughput(None, model, &w, &opts)?;
    let pruned = bench_throughput(Some(&cfg.pipeline), model, &w, &opts)?;
    if csv {
        print!(
            "label,mode,strategy,recovery,frames,joints,blocks,dim,heads,sequences,repetitions,parallel,fps_mean,fps_std\n{}{}",
            bench_csv_row("baseline", &cfg, &opts, &baseline),
            bench_csv_row("pruned", &cfg, &opts, &pruned)
        );
    } else {
        let secs = |r: &BenchResult| {
            r.seconds_per_rep
                .iter()
                .map(|s| format!("{s:.2}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        println!(
            "baseline  {:>10.2} frames/s  (std {:.2}, reps [{}] s)",
            baseline.fps_mean,
            baseline.fps_std,
            secs(&baseline)
        );
        println!(
            "pruned    {:>10.2} frames/s  (std {:.2}, reps [{}] s)",
            pruned.fps_mean,
            pruned.fps_std,
            secs(&pruned)
        );
        println!("speedup   {:>10.2}x", pruned.fps_mean / baseline.fps_mean);
    }
    Ok(())
}

fn cmd_prune_stats(
    source: ConfigSource,
    dir: PathBuf,
    csv: bool,
    seed: Option<u64>,
) -> Result<(), Error> {
    let cfg = source.load()?;
    let model = &cfg.pipeline.model;
    let w = build_weights(&cfg, None, seed)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pseq") | Some("bin") | Some("txt") | Some("csv")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "{} contains no sequence files",
            dir.display()
        )));
    }
    let mut traces = Vec::with_capacity(paths.len());
    for path in &paths {
        let seq = load_pose2d(path)?;
        if seq.frames() != model.frames || seq.joints() != model.joints {
            return Err(Error::Config(format!(
                "{} is {}x{}, config expects {}x{}",
                path.display(),
                seq.frames(),
                seq.joints(),
                model.frames,
                model.joints
            )));
        }
        let trace = match cfg.pipeline.mode {
            Mode::Seq2Seq => seq2seq_forward(&seq, &cfg.pipeline, &w)?.1,
            Mode::Seq2Frame => seq2frame_forward(&seq, &cfg.pipeline, &w)?.1,
        };
        traces.push(trace);
    }
    let stats = selection_stats(&traces, model.frames)?;
    if csv {
        print!("{}", stats.to_csv());
    } else {
        print!("{}", stats.to_text());
    }
    Ok(())
}

fn cmd_init_weights(
    source: ConfigSource,
    output: PathBuf,
    seed: Option<u64>,
) -> Result<(), Error> {
    let cfg = source.load()?;
    let seed = seed.unwrap_or_else(|| cfg.effective_seed());
    let with_tra = cfg.pipeline.recovery == Recovery::Tra;
    let w = init_weights(&cfg.pipeline.model, &mut Rng::new(seed), with_tra)?;
    save_weights(&output, &w)?;
    println!(
        "wrote {} parameters (seed {seed}) to {}",
        parameter_count(&w),
        output.display()
    );
    Ok(())
}
