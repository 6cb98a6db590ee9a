//! Command-line entry point: training, inference, resumption, and the
//! report family (IQM curves, activity maps, heat maps, diversity).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diskill::envs::Environment;
use diskill::error::{Error, Result};
use diskill::report::{
    activity_csv, activity_map, context_grid, curriculum_heatmap, curve_svg, diversity_report,
    heatmap_csv, heatmap_svg,
};
use diskill::stats::{replicate_iqm, stratified_bootstrap_ci};
use diskill::trainer::{infer, resume, train, Checkpoint, LogTable, TrainConfig};

#[derive(Parser)]
#[command(name = "diskill", about = "Curriculum RL of diverse skills with a mixture-of-experts policy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on freshly sampled contexts.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        n_contexts: usize,
        /// Use the gating argmax and expert means instead of sampling.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-episode end-effector traces as CSV into this directory.
        #[arg(long)]
        dump_trajectories: Option<PathBuf>,
    },
    /// Continue a checkpointed run.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Raise the iteration budget beyond the one in the checkpoint.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Post-hoc analysis of logs and checkpoints.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Per-iteration IQM of a metric across seed logs, with a stratified
    /// bootstrap confidence interval.
    Iqm(IqmArgs),
    /// Count active experts (gating above threshold) on an evaluation grid.
    Activity {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of grid contexts.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-expert curriculum probability surfaces as CSV plus an SVG overlay.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 400)]
        grid: usize,
        #[arg(long, default_value = "heatmap")]
        out_dir: PathBuf,
    },
    /// Distinct successful modes per context under stochastic sampling.
    Diversity {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV file of contexts (one row per context); defaults to sampling
        /// from the environment distribution.
        #[arg(long)]
        contexts_file: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        n_contexts: usize,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_trajectories: Option<PathBuf>,
    },
}

#[derive(Args)]
struct IqmArgs {
    /// Log files; values containing '*' are expanded against their parent
    /// directory.
    #[arg(long, required = true, num_args = 1..)]
    logs: Vec<String>,
    #[arg(long, default_value = "mean_return")]
    metric: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n_boot: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a learning-curve SVG next to the CSV.
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let outcome = train(cfg)?;
            println!(
                "trained {} iterations; log: {}; checkpoint: {}",
                outcome.iterations,
                outcome.log_path.display(),
                outcome.checkpoint_path.display()
            );
        }
        Command::Infer { checkpoint, n_contexts, deterministic, seed, dump_trajectories } => {
            let records = infer(&checkpoint, n_contexts, deterministic, seed)?;
            println!("context,expert,return,success,final_distance");
            for r in &records {
                let ctx = r.context.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ");
                println!(
                    "{ctx},{},{:.4},{},{:.4}",
                    r.expert, r.result.episodic_return, r.result.success, r.result.final_distance
                );
            }
            if let Some(dir) = dump_trajectories {
                dump_traces(&dir, records.iter().map(|r| (&r.result.tip_trace, r.expert)))?;
                println!("trajectories written to {}", dir.display());
            }
        }
        Command::Resume { checkpoint, iterations } => {
            let outcome = resume(&checkpoint, iterations)?;
            println!(
                "run is at iteration {}; log: {}; checkpoint: {}",
                outcome.iterations,
                outcome.log_path.display(),
                outcome.checkpoint_path.display()
            );
        }
        Command::Report(report) => run_report(report)?,
    }
    Ok(())
}

fn run_report(cmd: ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Iqm(args) => report_iqm(args)?,
        ReportCommand::Activity { checkpoint, grid, threshold, out } => {
            let (policy, env) = load_policy_env(&checkpoint)?;
            let contexts = context_grid(env.as_ref(), grid)?;
            let map = activity_map(&policy, &contexts, threshold)?;
            let csv = activity_csv(&map);
            let multi = map.counts.iter().filter(|&&c| c >= 2).count();
            println!(
                "{} of {} grid contexts ({:.1}%) have at least 2 active experts (threshold {})",
                multi,
                map.counts.len(),
                100.0 * multi as f64 / map.counts.len() as f64,
                threshold
            );
            match out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
        ReportCommand::Heatmap { checkpoint, grid, out_dir } => {
            let (policy, env) = load_policy_env(&checkpoint)?;
            let contexts = context_grid(env.as_ref(), grid)?;
            let surfaces = curriculum_heatmap(&policy, &contexts)?;
            std::fs::create_dir_all(&out_dir)?;
            for (o, surface) in surfaces.iter().enumerate() {
                write_text(&out_dir.join(format!("expert_{o}.csv")), &heatmap_csv(&contexts, surface))?;
            }
            write_text(&out_dir.join("overlay.svg"), &heatmap_svg(&contexts, &surfaces))?;
            println!("heat maps for {} experts written to {}", surfaces.len(), out_dir.display());
        }
        ReportCommand::Diversity {
            checkpoint,
            contexts_file,
            n_contexts,
            samples,
            seed,
            out,
            dump_trajectories,
        } => {
            let (policy, env) = load_policy_env(&checkpoint)?;
            let contexts = match contexts_file {
                Some(path) => read_contexts(&path, env.context_dim())?,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    diskill::envs::sample_contexts(env.as_ref(), n_contexts, &mut rng)?
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let report = diversity_report(&policy, env.as_ref(), &contexts, samples, &mut rng)?;
            let csv = report.to_csv();
            let multi = report.per_context.iter().filter(|c| c.n_modes >= 2).count();
            println!(
                "{} of {} contexts show at least 2 successful modes",
                multi,
                report.per_context.len()
            );
            for (o, rate) in report.per_expert_success_rate().iter().enumerate() {
                println!("expert {o}: success rate {:.1}%", rate * 100.0);
            }
            match out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
            if let Some(dir) = dump_trajectories {
                dump_traces(&dir, report.samples.iter().map(|r| (&r.result.tip_trace, r.expert)))?;
                println!("trajectories written to {}", dir.display());
            }
        }
    }
    Ok(())
}

fn report_iqm(args: IqmArgs) -> Result<()> {
    let paths = expand_globs(&args.logs)?;
    if paths.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 seed logs, found {} (patterns: {:?})",
            paths.len(),
            args.logs
        )));
    }
    let mut runs: Vec<Vec<f64>> = Vec::with_capacity(paths.len());
    let mut iterations: Option<Vec<f64>> = None;
    for path in &paths {
        let table = LogTable::read(path)?;
        let iters = table.column("iteration")?;
        match &iterations {
            None => iterations = Some(iters),
            Some(grid) => {
                if *grid != iters {
                    return Err(Error::ShapeMismatch(format!(
                        "{} is on a different iteration grid",
                        path.display()
                    )));
                }
            }
        }
        runs.push(table.column(&args.metric)?);
    }
    let iterations = iterations.expect("at least one log");
    let mut point = Vec::with_capacity(iterations.len());
    for i in 0..iterations.len() {
        let column: Vec<f64> = runs.iter().map(|r| r[i]).collect();
        point.push(replicate_iqm(&column)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let ci = stratified_bootstrap_ci(&runs, args.n_boot, args.level, &mut rng)?;

    let mut csv = String::from("iteration,iqm,ci_lo,ci_hi\n");
    for (i, it) in iterations.iter().enumerate() {
        csv.push_str(&format!("{it},{},{},{}\n", point[i], ci[i].0, ci[i].1));
    }
    write_text(&args.out, &csv)?;
    println!(
        "IQM of '{}' over {} seeds written to {}",
        args.metric,
        runs.len(),
        args.out.display()
    );
    if let Some(svg_path) = args.svg {
        let lo: Vec<f64> = ci.iter().map(|c| c.0).collect();
        let hi: Vec<f64> = ci.iter().map(|c| c.1).collect();
        let title = format!("IQM of {} ({} seeds, {:.0}% CI)", args.metric, runs.len(), args.level * 100.0);
        write_text(&svg_path, &curve_svg(&iterations, &point, &lo, &hi, &title))?;
        println!("curve written to {}", svg_path.display());
    }
    Ok(())
}

fn load_policy_env(checkpoint: &Path) -> Result<(diskill::policy::MixturePolicy, Box<dyn Environment>)> {
    let ck = Checkpoint::load(checkpoint)?;
    let env = ck.config.env.build()?;
    Ok((ck.policy, env))
}

fn read_contexts(path: &Path, dim: usize) -> Result<Vec<Array1<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Skip a leading header row.
        if i == 0 && line.split(',').any(|t| t.trim().parse::<f64>().is_err()) {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad value '{t}'", i + 1))))
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "context row {} has {} values, environment expects {dim}",
                i + 1,
                row.len()
            )));
        }
        out.push(Array1::from_vec(row));
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("no contexts in file".into()));
    }
    Ok(out)
}

/// Expands '*' patterns against the parent directory; plain paths pass
/// through. Matches are sorted for determinism.
fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for pattern in patterns {
        if !pattern.contains('*') {
            out.push(PathBuf::from(pattern));
            continue;
        }
        let path = Path::new(pattern);
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let name_pattern = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidConfig(format!("bad glob '{pattern}'")))?;
        let mut matches = Vec::new();
        for entry in std::fs::read_dir(&dir)
            .map_err(|e| Error::InvalidConfig(format!("cannot list {}: {e}", dir.display())))?
        {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if wildcard_match(name_pattern, name) {
                matches.push(entry.path());
            }
        }
        matches.sort();
        out.extend(matches);
    }
    Ok(out)
}

fn wildcard_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let mut rest = name;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        match rest.find(part) {
            Some(pos) => {
                if i == 0 && pos != 0 {
                    return false;
                }
                rest = &rest[pos + part.len()..];
            }
            None => return false,
        }
    }
    if let Some(last) = parts.last() {
        if !last.is_empty() && !name.ends_with(last) {
            return false;
        }
    }
    true
}

fn dump_traces<'a>(
    dir: &Path,
    traces: impl Iterator<Item = (&'a Vec<[f64; 2]>, usize)>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, (trace, expert)) in traces.enumerate() {
        let mut csv = String::from("step,x,y\n");
        for (t, p) in trace.iter().enumerate() {
            csv.push_str(&format!("{t},{},{}\n", p[0], p[1]));
        }
        write_text(&dir.join(format!("episode_{i:04}_expert_{expert}.csv")), &csv)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
