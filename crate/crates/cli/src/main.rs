//! `amp`: file-staged front end for profiling, classification, rewriting,
//! execution, sweeps and benchmark emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use amp_core::bench::{accuracy, describe, AccuracyMetric, Benchmark, QuadLayout};
use amp_core::classify::{classify, ThresholdVector};
use amp_core::interp::{manifest, ExecInput, ExecOutput, Plan};
use amp_core::nir::{def_use_graph, parse_text, print_program, PrecisionAssignment, Program};
use amp_core::profiler::{profile, NumericalProfile, ProfileSink};
use amp_core::rewrite::{compute_ics, rewrite_with, InstructionChangeSet, RewriteOptions};
use amp_core::sweep::{cost_estimate, records_csv, train, CostModel, EvalOptions, Grid};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amp", version, about = "Profile-driven automated mixed precision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile a program at its declared precision.
    Profile {
        program: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "profile.json")]
        out: PathBuf,
        /// Also write the annotated def-use graph in DOT form.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Classify a profile under one threshold vector and derive its change set.
    Classify {
        program: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// `t1=..,t2=..`; omitted components keep their defaults.
        #[arg(long, default_value = "")]
        thresholds: String,
        #[arg(long, default_value = "ics.json")]
        out: PathBuf,
    },
    /// Apply a change set and print or write the mixed program.
    Rewrite {
        program: PathBuf,
        #[arg(long)]
        ics: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Truncate loop-carried values instead of widening their phis.
        #[arg(long)]
        no_widen_phis: bool,
    },
    /// Execute a program.
    Run {
        program: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Declared)]
        precision: Mode,
        /// Score the run against the same program at this precision.
        #[arg(long, value_enum)]
        against: Option<Mode>,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        vector_width: u32,
    },
    /// Sweep a threshold grid: CSV of per-vector records plus the equivalence report.
    Sweep {
        program: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Evaluate on another program instance (e.g. a larger LU) instead.
        #[arg(long, requires = "eval_input")]
        eval_program: Option<PathBuf>,
        #[arg(long)]
        eval_input: Option<PathBuf>,
        /// Grid file of `tK=v1,v2,...` lines.
        #[arg(long, conflicts_with = "preset")]
        grid: Option<PathBuf>,
        /// Values per component taken from the default grid.
        #[arg(long, value_parser = ["2", "3", "6"])]
        preset: Option<String>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[arg(long, default_value = "sweep.csv")]
        csv: PathBuf,
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        #[arg(long, default_value_t = 256)]
        vector_width: u32,
    },
    /// Write a benchmark program, its input manifest and the 3-value grid.
    Bench {
        #[arg(value_enum)]
        which: Which,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Layout::Newton)]
        layout: Layout,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Declared,
    F32,
    F64,
}

impl Mode {
    fn assignment(self) -> PrecisionAssignment {
        match self {
            Mode::Declared => PrecisionAssignment::declared(),
            Mode::F32 => PrecisionAssignment::UniformF32,
            Mode::F64 => PrecisionAssignment::UniformF64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Frobenius,
    Abs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Lu,
    Quad,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Newton,
    Stored,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_program(path: &Path) -> Result<Program> {
    parse_text(&read(path)?).with_context(|| format!("parse: {}", path.display()))
}

fn load_input(path: &Path) -> Result<ExecInput> {
    manifest::load(path).with_context(|| format!("input: {}", path.display()))
}

/// Scalar-returning programs are scored by absolute error, the rest by
/// Frobenius norm over their arrays.
fn pick_metric(m: Option<Metric>, p: &Program) -> AccuracyMetric {
    match m {
        Some(Metric::Frobenius) => AccuracyMetric::Frobenius,
        Some(Metric::Abs) => AccuracyMetric::AbsError,
        None if p.entry_function().is_some_and(|f| f.ret.is_some()) => AccuracyMetric::AbsError,
        None => AccuracyMetric::Frobenius,
    }
}

fn output_json(out: &ExecOutput) -> String {
    let mut s = serde_json::to_string_pretty(out).expect("output serialises");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Profile { program, input, out, dot } => {
            let p = load_program(&program)?;
            let (np, g, _) = profile(&p, &load_input(&input)?).context("profile")?;
            write(&out, &np.to_json())?;
            if let Some(d) = dot {
                write(&d, &g.to_dot())?;
            }
            println!("profiled {} instructions into {}", np.entries.len(), out.display());
        }
        Command::Classify { program, profile, thresholds, out } => {
            let p = load_program(&program)?;
            let np = NumericalProfile::from_json(&read(&profile)?).context("classify: profile document")?;
            if np.program_hash != amp_core::profiler::program_hash(&p) {
                bail!("classify: profile was recorded for a different program");
            }
            let t: ThresholdVector = thresholds.parse().context("classify: thresholds")?;
            let cl = classify(&np, &t);
            let ics = compute_ics(&cl, &def_use_graph(&p));
            write(&out, &ics.to_json())?;
            println!("{}", serde_json::to_string_pretty(&cl)?);
            println!("ics {} ({} instructions) -> {}", ics.hash(), ics.len(), out.display());
        }
        Command::Rewrite { program, ics, out, no_widen_phis } => {
            let p = load_program(&program)?;
            let ics = InstructionChangeSet::from_json(&read(&ics)?).context("rewrite: change set")?;
            let q = rewrite_with(&p, &ics, RewriteOptions { widen_phis: !no_widen_phis }).context("rewrite")?;
            let text = print_program(&q);
            match out {
                Some(o) => write(&o, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Run { program, input, precision, against, metric, out, vector_width } => {
            let p = load_program(&program)?;
            let input = load_input(&input)?;
            let plan = Plan::compile(&p, &precision.assignment()).context("run")?;
            let t0 = Instant::now();
            let o = plan.execute(&input, None).context("run")?;
            let plain = t0.elapsed();
            let mut np = NumericalProfile::empty(&p);
            let t1 = Instant::now();
            plan.execute(&input, Some(&mut ProfileSink::new(&mut np, &plan, Default::default())))
                .context("run: profiled")?;
            let profiled = t1.elapsed();

            if let Some(r) = o.ret {
                println!("ret {r:?}");
            }
            for (name, data) in &o.arrays {
                println!("array {name}: {} elements", data.len());
            }
            println!("steps {}", o.steps);
            println!("scalar cost {}", cost_estimate(&o.op_counts, CostModel::Scalar));
            println!(
                "vector cost {} (width {vector_width})",
                cost_estimate(&o.op_counts, CostModel::vector(vector_width))
            );
            if let Some(a) = against {
                let base = amp_core::interp::run(&p, &input, &a.assignment(), None).context("run: baseline")?;
                let m = pick_metric(metric, &p);
                println!("accuracy {:e} ({m:?})", accuracy(&o, &base, m).context("run: accuracy")?);
            }
            println!(
                "profiling overhead {:.1}x ({:.3?} profiled, {:.3?} plain)",
                profiled.as_secs_f64() / plain.as_secs_f64().max(1e-9),
                profiled,
                plain
            );
            if let Some(path) = out {
                write(&path, &output_json(&o))?;
            }
        }
        Command::Sweep {
            program,
            input,
            eval_program,
            eval_input,
            grid,
            preset,
            jobs,
            metric,
            csv,
            report,
            vector_width,
        } => {
            let p = load_program(&program)?;
            let train_input = load_input(&input)?;
            let grid = match (grid, preset.as_deref()) {
                (Some(path), _) => Grid::parse(&read(&path)?).context("sweep: grid")?,
                (None, Some("2")) => Grid::two(),
                (None, Some("3")) => Grid::three(),
                _ => Grid::default(),
            };
            let (eval_p, eval_in) = match (eval_program, eval_input) {
                (Some(ep), Some(ei)) => (load_program(&ep)?, load_input(&ei)?),
                (None, Some(ei)) => (p.clone(), load_input(&ei)?),
                _ => (p.clone(), train_input.clone()),
            };
            let t0 = Instant::now();
            let tr = train(&p, &train_input, &grid).context("sweep: training")?;
            let m = pick_metric(metric, &eval_p);
            let r =
                tr.evaluate(&eval_p, &eval_in, m, EvalOptions { jobs, vector_width }).context("sweep: evaluation")?;
            write(&csv, &records_csv(&r.records))?;
            write(&report, &r.report.to_json())?;
            println!(
                "{} vectors, {} change sets, {} results in {:.2?}",
                r.records.len(),
                r.variants.len(),
                r.report.r_sets.len(),
                t0.elapsed()
            );
            println!("single error {:e}", r.baselines.single_error);
            for s in &r.report.r_sets {
                println!(
                    "result {} |R|={} |R'|={} ics={} accuracy {:e}",
                    s.result_id,
                    s.size,
                    s.primes.len(),
                    s.ics_ids.len(),
                    s.accuracy
                );
            }
        }
        Command::Bench { which, n, seed, layout, out_dir } => {
            let b = match which {
                Which::Lu => Benchmark::lu(n.unwrap_or(100), seed)?,
                Which::Quad => Benchmark::quad(
                    n.unwrap_or(20),
                    match layout {
                        Layout::Newton => QuadLayout::Newton,
                        Layout::Stored => QuadLayout::StoredNodes,
                    },
                )?,
            };
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let prog = out_dir.join(format!("{}.nir", b.name));
            let man = out_dir.join(format!("{}.manifest", b.name));
            write(&prog, &print_program(&b.program))?;
            manifest::write(&man, &b.input, &b.program).context("bench: manifest")?;
            write(&out_dir.join("3x7.cfg"), &Grid::three().to_text())?;
            print!("{}", describe(&b));
            println!("wrote {} and {}", prog.display(), man.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use amp_core::profiler::AnnotatedDdfg;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn metric_follows_return_type() {
        let lu = Benchmark::lu(3, 1).unwrap();
        let q = Benchmark::quad(4, QuadLayout::Newton).unwrap();
        assert_eq!(pick_metric(None, &lu.program), AccuracyMetric::Frobenius);
        assert_eq!(pick_metric(None, &q.program), AccuracyMetric::AbsError);
        assert_eq!(pick_metric(Some(Metric::Frobenius), &q.program), AccuracyMetric::Frobenius);
    }

    #[test]
    fn ddfg_annotation_is_written() {
        let q = Benchmark::quad(4, QuadLayout::Newton).unwrap();
        let (np, _, _) = profile(&q.program, &q.input).unwrap();
        let dot = AnnotatedDdfg::new(&q.program, &np).to_dot();
        assert!(dot.starts_with("digraph"));
    }
}
