//! Command line front end: rewrite nonlinear branch conditions to linear
//! form, validate replacement maps, difference-test program pairs, and run
//! the bundled benchmark flow over a directory of programs.

mod document;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use drnla::interp::{diff_test, DiffMode, InputBox};
use drnla::lang::{find_nla_sites, normalize, parse, pretty, Program};
use drnla::refine::{refine_program, rewrite, KeepVars, RefineConfig, Status};
use drnla::validate::{
    export_smtlib, validate, ValidationMode, ValidationOutcome, ValidationScope,
};

use document::MapDocument;

#[derive(Parser)]
#[command(
    name = "drnla",
    version,
    about = "Rewrites nonlinear integer branch conditions into equivalent \
             Boolean combinations of linear constraints"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a linear replacement pair for every nonlinear condition
    /// site and write the rewritten program plus a replacement map.
    Rewrite {
        /// Program to rewrite.
        file: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Check a replacement map against its program over the scope box.
    Validate {
        /// Program the map refers to.
        file: PathBuf,
        /// Replacement map produced by `rewrite`.
        #[arg(value_name = "MAP")]
        map_file: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Run two programs on shared inputs and compare outcomes and final
    /// states.
    Difftest {
        /// Reference program.
        left: PathBuf,
        /// Candidate program; must declare the same inputs.
        right: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Rewrite and difference-test every `.imp` program in a directory and
    /// write a CSV report.
    Bench {
        /// Directory containing `.imp` programs.
        dir: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// RNG seed shared by sampling, probing and model enumeration.
    #[arg(long, default_value_t = drnla::refine::DEFAULT_SEED)]
    seed: u64,
    /// Cap on validation rounds per site before settling for partial.
    #[arg(long, default_value_t = drnla::refine::DEFAULT_MAX_ITERS)]
    max_iters: u32,
    /// Cap on error-family models drawn per counterexample.
    #[arg(long, default_value_t = drnla::refine::DEFAULT_MODELS_PER_CEX)]
    models: u32,
    /// Sampled runs per learning pass (and per random probe).
    #[arg(long, default_value_t = 100)]
    runs: u32,
    /// Input range LO:HI for snapshot sampling.
    #[arg(long, default_value = "-30:30", value_parser = parse_range)]
    sample_box: (i64, i64),
    /// Input range LO:HI that validation and difference testing cover.
    #[arg(long, default_value = "-50:50", value_parser = parse_range)]
    scope_box: (i64, i64),
    /// Iteration bound per loop execution during validation runs.
    #[arg(long, default_value_t = 200)]
    loop_bound: u64,
    /// How validation searches the scope.
    #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
    mode: Mode,
    /// Rewrite sites whose pair is only partial instead of keeping the
    /// original condition there.
    #[arg(long)]
    allow_partial: bool,
    /// Which variables expansion hulls may mention.
    #[arg(long, value_enum, default_value_t = KeepArg::Nla)]
    keep_vars: KeepArg,
    /// Output path (rewritten program for `rewrite`, CSV for `bench`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output path for the replacement map written by `rewrite`.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Every input valuation in the scope box.
    Exhaustive,
    /// Seeded uniform samples from the scope box.
    Random,
    /// No execution; emit SMT-LIB2 queries for an external solver.
    SmtExport,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum KeepArg {
    /// Only variables of the nonlinear condition itself.
    Nla,
    /// Every program variable.
    All,
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

impl CommonOpts {
    fn validation_mode(&self) -> ValidationMode {
        match self.mode {
            Mode::Exhaustive => ValidationMode::ExhaustiveBox,
            Mode::Random => ValidationMode::RandomProbe { runs: self.runs, seed: self.seed },
            Mode::SmtExport => ValidationMode::SmtExport,
        }
    }

    fn scope(&self, p: &Program) -> ValidationScope {
        let (lo, hi) = self.scope_box;
        ValidationScope {
            input_box: InputBox::uniform(&p.nondet_vars(), lo, hi),
            loop_bound: self.loop_bound,
            mode: self.validation_mode(),
        }
    }

    fn scope_text(&self) -> String {
        let (lo, hi) = self.scope_box;
        let mode = match self.mode {
            Mode::Exhaustive => "exhaustive".to_string(),
            Mode::Random => format!("random probe, {} runs", self.runs),
            Mode::SmtExport => "smt export".to_string(),
        };
        format!("inputs in [{lo}, {hi}], loop bound {}, {mode}", self.loop_bound)
    }

    fn refine_config(&self, p: &Program) -> Result<RefineConfig> {
        if self.mode == Mode::SmtExport {
            bail!("rewriting needs an executable validation mode; use --mode exhaustive or random");
        }
        let mut cfg = RefineConfig::for_program(p);
        cfg.max_iters = self.max_iters;
        cfg.models_per_cex = self.models;
        cfg.sample_runs = self.runs;
        cfg.sample_box = self.sample_box;
        cfg.scope = self.scope(p);
        cfg.seed = self.seed;
        cfg.keep_vars = match self.keep_vars {
            KeepArg::Nla => KeepVars::VarsOfNla,
            KeepArg::All => KeepVars::AllVars,
        };
        Ok(cfg)
    }

    fn diff_mode(&self) -> Result<DiffMode> {
        match self.mode {
            Mode::Exhaustive => Ok(DiffMode::Exhaustive),
            Mode::Random => Ok(DiffMode::Random { runs: self.runs, seed: self.seed }),
            Mode::SmtExport => bail!("difference testing executes programs; use --mode exhaustive or random"),
        }
    }
}

fn load_program(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let p = parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(normalize(&p))
}

/// `foo.imp` -> `foo{suffix}` next to the original.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Rewrite { file, opts } => cmd_rewrite(&file, &opts),
        Cmd::Validate { file, map_file, opts } => cmd_validate(&file, &map_file, &opts),
        Cmd::Difftest { left, right, opts } => cmd_difftest(&left, &right, &opts),
        Cmd::Bench { dir, opts } => cmd_bench(&dir, &opts),
    }
}

fn cmd_rewrite(file: &Path, opts: &CommonOpts) -> Result<u8> {
    let p = load_program(file)?;
    let cfg = opts.refine_config(&p)?;
    let results = refine_program(&p, &cfg)
        .map_err(|e| anyhow!("{}: {e}", file.display()))?;
    let rewritten = rewrite(&p, &results, opts.allow_partial)
        .map_err(|e| anyhow!("{}: {e}", file.display()))?;

    let source = file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let doc = MapDocument::build(&source, &p, &results, opts.seed, opts.scope_text());

    let out_path = opts.out.clone().unwrap_or_else(|| sibling(file, ".rewritten.imp"));
    let map_path = opts.map.clone().unwrap_or_else(|| sibling(file, ".map.json"));
    fs::write(&out_path, pretty(&rewritten))
        .with_context(|| format!("cannot write {}", out_path.display()))?;
    fs::write(&map_path, doc.to_json())
        .with_context(|| format!("cannot write {}", map_path.display()))?;

    if results.is_empty() {
        println!("no nonlinear condition sites");
    }
    for r in &results {
        println!(
            "L{}: {} after {} validation round(s) [{}]",
            r.loc.0,
            r.status,
            r.iterations,
            r.stage_string()
        );
        println!("  pos: {}", drnla::constraints::blia_text(&r.b_pos));
        println!("  neg: {}", drnla::constraints::blia_text(&r.b_neg));
    }
    println!("wrote {}", out_path.display());
    println!("wrote {}", map_path.display());

    let all_exact = results.iter().all(|r| r.status == Status::Exact);
    Ok(if all_exact { 0 } else { 1 })
}

fn cmd_validate(file: &Path, map: &Path, opts: &CommonOpts) -> Result<u8> {
    let p = load_program(file)?;
    let text = fs::read_to_string(map)
        .with_context(|| format!("cannot read {}", map.display()))?;
    let doc = MapDocument::from_json(&text)?;
    let m = doc.to_replacement_map(&p)?;

    if opts.mode == Mode::SmtExport {
        let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let queries = export_smtlib(&p, &m, &stem, opts.loop_bound)
            .map_err(|e| anyhow!("{}: {e}", file.display()))?;
        let dir = match &opts.out {
            Some(d) => d.clone(),
            None => file.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
        };
        for (name, smt) in &queries {
            let file_name = if name.ends_with(".smt2") {
                name.clone()
            } else {
                format!("{name}.smt2")
            };
            let path = dir.join(file_name);
            fs::write(&path, smt)
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        return Ok(0);
    }

    let scope = opts.scope(&p);
    match validate(&p, &m, &scope).map_err(|e| anyhow!("{}: {e}", file.display()))? {
        ValidationOutcome::Safe => {
            println!("Safe ({})", opts.scope_text());
            Ok(0)
        }
        ValidationOutcome::Counterexample(cex) => {
            println!("{} at L{}", cex.case, cex.loc.0);
            println!("  inputs: {}", state_text(&cex.inputs));
            Ok(1)
        }
    }
}

fn state_text(state: &drnla::interp::State) -> String {
    let mut out = String::new();
    for (i, (k, v)) in state.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{k} = {v}");
    }
    out
}

fn cmd_difftest(left: &Path, right: &Path, opts: &CommonOpts) -> Result<u8> {
    let l = load_program(left)?;
    let r = load_program(right)?;
    let mode = opts.diff_mode()?;
    let (lo, hi) = opts.scope_box;
    let input_box = InputBox::uniform(&l.nondet_vars(), lo, hi);
    let report = diff_test(&l, &r, mode, &input_box, opts.loop_bound)
        .map_err(|e| anyhow!("{e}"))?;
    println!("runs: {}", report.runs);
    println!("mismatches: {}", report.mismatches);
    println!("median step ratio: {:.3}", report.median_step_ratio);
    if let Some(first) = &report.first_mismatch {
        println!("first mismatch inputs: {}", state_text(first));
    }
    Ok(if report.mismatches == 0 { 0 } else { 1 })
}

struct BenchRow {
    name: String,
    result: String,
    iterations: String,
    stages: String,
    mismatches: String,
    ratio: String,
    time_s: String,
    note: String,
}

fn cmd_bench(dir: &Path, opts: &CommonOpts) -> Result<u8> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "imp"))
        .collect();
    files.sort();

    let mut rows = Vec::new();
    let mut all_clean = true;
    for file in &files {
        let name = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let started = Instant::now();
        let row = match bench_one(file, opts) {
            Ok((result, iterations, stages, mismatches, ratio)) => {
                if result != "exact" || mismatches != 0 {
                    all_clean = false;
                }
                BenchRow {
                    name,
                    result,
                    iterations,
                    stages,
                    mismatches: mismatches.to_string(),
                    ratio: format!("{ratio:.3}"),
                    time_s: format!("{:.2}", started.elapsed().as_secs_f64()),
                    note: String::new(),
                }
            }
            Err(e) => {
                all_clean = false;
                BenchRow {
                    name,
                    result: "error".to_string(),
                    iterations: "-".to_string(),
                    stages: "-".to_string(),
                    mismatches: "-".to_string(),
                    ratio: "-".to_string(),
                    time_s: format!("{:.2}", started.elapsed().as_secs_f64()),
                    note: format!("{e:#}"),
                }
            }
        };
        println!(
            "{:<14} {:<8} it {:<5} [{}] mismatches {} ratio {} {}s {}",
            row.name,
            row.result,
            row.iterations,
            row.stages,
            row.mismatches,
            row.ratio,
            row.time_s,
            row.note
        );
        rows.push(row);
    }

    let csv_path = opts.out.clone().unwrap_or_else(|| PathBuf::from("bench.csv"));
    let mut csv = String::from(
        "benchmark,result,iterations,stages,mismatches,median_step_ratio,time_s,note\n",
    );
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},\"{}\",{},{},{},\"{}\"",
            row.name,
            row.result,
            row.iterations,
            row.stages,
            row.mismatches,
            row.ratio,
            row.time_s,
            row.note.replace('"', "'")
        );
    }
    fs::write(&csv_path, csv)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    println!("wrote {}", csv_path.display());
    Ok(if all_clean { 0 } else { 1 })
}

/// Rewrite one program in memory and difference-test the result against the
/// original. Returns (result, iterations, stages, mismatches, ratio).
fn bench_one(file: &Path, opts: &CommonOpts) -> Result<(String, String, String, u64, f64)> {
    let p = load_program(file)?;
    let cfg = opts.refine_config(&p)?;
    let results = refine_program(&p, &cfg).map_err(|e| anyhow!("{e}"))?;
    let rewritten = rewrite(&p, &results, opts.allow_partial).map_err(|e| anyhow!("{e}"))?;

    let status = if results.iter().all(|r| r.status == Status::Exact) {
        "exact"
    } else {
        "partial"
    };
    let iterations = results
        .iter()
        .map(|r| r.iterations.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let stages = results
        .iter()
        .map(|r| r.stage_string())
        .collect::<Vec<_>>()
        .join(";");

    let (lo, hi) = opts.scope_box;
    let input_box = InputBox::uniform(&p.nondet_vars(), lo, hi);
    let report = diff_test(&p, &rewritten, opts.diff_mode()?, &input_box, opts.loop_bound)
        .map_err(|e| anyhow!("{e}"))?;
    if find_nla_sites(&p).is_empty() {
        return Ok(("exact".to_string(), "0".to_string(), String::new(), report.mismatches, report.median_step_ratio));
    }
    Ok((
        status.to_string(),
        iterations,
        stages,
        report.mismatches,
        report.median_step_ratio,
    ))
}
