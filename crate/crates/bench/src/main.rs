use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualpal::phase1::LinearSolverMode;
use dualpal::SolverConfig;
use dualpal_bench::error::io_err;
use dualpal_bench::profile::{curves_to_csv, sgm_table, time_matrix};
use dualpal_bench::records::{read_records, write_records, RecordFormat};
use dualpal_bench::{load_input, performance_profile, problem_name, BenchError, BenchRecord, Result};

#[derive(Parser)]
#[command(name = "dualpal", version, about = "Two-phase proximal ALM solver for convex QPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print or store its record.
    Solve {
        /// `qps:<file>` (or a bare path), `gen:qap:<file>`, `gen:biq:<file>`, `gen:portfolio:<k>`.
        #[arg(long)]
        input: String,
        #[command(flatten)]
        opts: SolveOpts,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Solve every instance in a directory and write records, profiles and SGMs.
    Bench {
        dir: PathBuf,
        /// Extra records (JSON lines or `.csv`) from other solvers.
        #[arg(long = "import")]
        imports: Vec<PathBuf>,
        /// Also run the first phase alone as a separate solver.
        #[arg(long)]
        with_phase1: bool,
        #[arg(long, default_value = "bench-out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Turn records into performance-profile curve data.
    Profile {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearSolver {
    Direct,
    Iterative,
}

#[derive(Args, Clone)]
struct SolveOpts {
    #[arg(long, default_value_t = 1e-4)]
    tol1: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol2: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter1: usize,
    #[arg(long, default_value_t = 500)]
    max_iter2: usize,
    /// Initial penalty parameter of the first phase.
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Dual step length of the first phase, in (0, 2).
    #[arg(long, default_value_t = 1.618)]
    tau: f64,
    #[arg(long)]
    phase1_only: bool,
    #[arg(long, value_enum)]
    linear_solver: Option<LinearSolver>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolveOpts {
    fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        cfg.phase1.tol = if self.phase1_only { self.tol2 } else { self.tol1 };
        cfg.phase1.max_iter = self.max_iter1;
        cfg.phase1.sigma = self.sigma0;
        cfg.phase1.tau = self.tau;
        cfg.phase2.tol = self.tol2;
        cfg.phase2.max_iter = self.max_iter2;
        cfg.phase2.kappa = self.kappa;
        cfg.phase1_only = self.phase1_only;
        match self.linear_solver {
            Some(LinearSolver::Direct) => cfg.phase1.linear_solver = LinearSolverMode::Direct,
            Some(LinearSolver::Iterative) => {
                cfg.phase1.linear_solver = LinearSolverMode::Iterative;
                cfg.phase2.ssn.path.dense_max = 0;
            }
            None => {}
        }
        cfg
    }

    fn solver_name(&self) -> &'static str {
        if self.phase1_only {
            "phase1"
        } else {
            "dualpal"
        }
    }
}

fn run_one(desc: &str, opts: &SolveOpts) -> Result<BenchRecord> {
    let inst = load_input(desc, opts.seed)?;
    let out = inst.solve(&opts.config())?;
    Ok(BenchRecord::from_solve(
        &problem_name(desc),
        opts.solver_name(),
        inst.dims(),
        &out,
    ))
}

fn write_to(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Input descriptor for a file in a bench directory, by extension.
fn descriptor(path: &Path) -> Option<String> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    let p = path.display();
    match ext.as_str() {
        "qps" | "mps" => Some(format!("qps:{p}")),
        "dat" => Some(format!("gen:qap:{p}")),
        "bq" | "biq" | "sparse" => Some(format!("gen:biq:{p}")),
        _ => None,
    }
}

fn bench(
    dir: &Path,
    imports: &[PathBuf],
    with_phase1: bool,
    out_dir: &Path,
    zeta: f64,
    opts: &SolveOpts,
) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| descriptor(p).is_some())
        .collect();
    files.sort();
    let mut runs = vec![opts.clone()];
    if with_phase1 {
        runs.push(SolveOpts {
            phase1_only: true,
            max_iter1: opts.max_iter1.max(10_000),
            ..opts.clone()
        });
    }
    let mut records = Vec::new();
    for f in &files {
        let desc = descriptor(f).expect("filtered");
        for o in &runs {
            match run_one(&desc, o) {
                Ok(r) => {
                    log::info!("{} {}: {} in {:.3}s", r.problem, r.solver, r.status, r.time_s);
                    records.push(r);
                }
                Err(e) => log::warn!("{}: {e}", f.display()),
            }
        }
    }
    for path in imports {
        records.extend(read_records(path)?);
    }
    if records.is_empty() {
        return Err(BenchError::Invalid(format!("no instances found in {}", dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_records(out_dir.join("records.jsonl"), &records, RecordFormat::Json)?;
    let (solvers, _, times) = time_matrix(&records);
    let curves = performance_profile(&solvers, &times)?;
    write_to(&out_dir.join("profile.csv"), &curves_to_csv(&curves))?;
    let mut sgm = String::from("solver,sgm_time_s,failures\n");
    for (s, t, fails) in sgm_table(&records, zeta) {
        sgm.push_str(&format!("{s},{t},{fails}\n"));
        println!("{s:>12}  sgm {t:10.4} s  failures {fails}");
    }
    write_to(&out_dir.join("sgm.csv"), &sgm)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            input,
            opts,
            out,
            format,
        } => {
            let rec = run_one(&input, &opts)?;
            let fmt = match format {
                Format::Json => RecordFormat::Json,
                Format::Csv => RecordFormat::Csv,
            };
            match out {
                Some(path) => write_records(path, &[rec], fmt),
                None => match fmt {
                    RecordFormat::Json => dualpal_bench::records::write_jsonl(std::io::stdout(), &[rec]),
                    RecordFormat::Csv => dualpal_bench::records::write_csv(std::io::stdout(), &[rec]),
                },
            }
        }
        Command::Bench {
            dir,
            imports,
            with_phase1,
            out_dir,
            zeta,
            opts,
        } => bench(&dir, &imports, with_phase1, &out_dir, zeta, &opts),
        Command::Profile { records, out } => {
            let mut all = Vec::new();
            for p in &records {
                all.extend(read_records(p)?);
            }
            let (solvers, _, times) = time_matrix(&all);
            let csv = curves_to_csv(&performance_profile(&solvers, &times)?);
            match out {
                Some(path) => write_to(&path, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
