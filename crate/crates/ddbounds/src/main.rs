use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddbounds::benchmarks::{cracked_problem, square_problem, CrackedGeometry, Problem};
use ddbounds::core::mesh::partition_regular;
use ddbounds::driver::{
    run_adaptive, run_estimate, run_global_benchmark, AdaptivePlan, InitialGuess, RunOptions, RunReport, StopPolicy,
};
use ddbounds::formats::{read_json, ApproachFile, MeshFile, PartitionFile, ProblemConfig};
use ddbounds::report::emit_reports;
use ddbounds::Error;

#[derive(Parser)]
#[command(name = "ddbounds", version, about = "Guaranteed error bounds for domain-decomposed linear elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// h-sweep on the square benchmark with sequential references.
    BenchSquare {
        #[command(flatten)]
        common: Common,
        /// Cells per side of each mesh.
        #[arg(long, value_delimiter = ',', default_values_t = [6, 12, 24, 48])]
        sizes: Vec<usize>,
    },
    /// Adaptive goal-oriented loop on the cracked-plate lookalike.
    BenchCracked {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        adaptive: AdaptiveArgs,
    },
    /// Adaptive goal-oriented loop on the square benchmark.
    Adaptive {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        adaptive: AdaptiveArgs,
        /// Cells per side of the initial mesh.
        #[arg(long, default_value_t = 12)]
        n: usize,
    },
    /// Solve and estimate a problem read from JSON files.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Element-to-subdomain map; a regular `--grid` partition otherwise.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Run the goal-oriented loop on the configured QoI to this precision.
        #[arg(long)]
        target_precision: Option<f64>,
        #[arg(long, default_value_t = 3)]
        max_cycles: usize,
        #[arg(long)]
        recycle: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    Tol,
    Envelope,
    Tenth,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum)]
    approach: Option<ApproachArg>,
    /// Subdomain grid, `NXxNY`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    patch_refine: Option<usize>,
    /// Relative solver tolerance for `--stop tol`.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value = "envelope")]
    stop: StopArg,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Estimate at every iteration.
    #[arg(long)]
    estimate_every: bool,
    /// Seed of a random interface start.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    guess_amplitude: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptiveArgs {
    #[arg(long, default_value_t = 0.05)]
    target_precision: f64,
    #[arg(long, default_value_t = 3)]
    max_cycles: usize,
    /// Augment each new solve with the projected previous directions.
    #[arg(long)]
    recycle: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    Bdd,
    Feti,
}

impl From<ApproachArg> for ApproachFile {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Bdd => ApproachFile::Bdd,
            ApproachArg::Feti => ApproachFile::Feti,
        }
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NXxNY, got '{s}'"))?;
    let nx = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let ny = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    if nx == 0 || ny == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((nx, ny))
}

impl Common {
    fn options(&self, config: Option<&ProblemConfig>) -> RunOptions {
        let defaults = RunOptions::default();
        let tol = self.tol.or(config.map(|c| c.solver.tolerance)).unwrap_or(1e-8);
        RunOptions {
            approach: self.approach.map(Into::into).or(config.map(|c| c.solver.approach)).unwrap_or(defaults.approach),
            stop: match self.stop {
                StopArg::Tol => StopPolicy::Tolerance(tol),
                StopArg::Envelope => StopPolicy::Envelope,
                StopArg::Tenth => StopPolicy::Tenth,
            },
            patch_refine: self.patch_refine.or(config.map(|c| c.patch_refine)).unwrap_or(defaults.patch_refine),
            max_iterations: self
                .max_iterations
                .or(config.map(|c| c.solver.max_iterations))
                .unwrap_or(defaults.max_iterations),
            estimate_every: self.estimate_every,
            initial_guess: self.seed.map(|seed| InitialGuess { seed, amplitude: self.guess_amplitude }),
        }
    }
}

fn finish(report: &RunReport, out: &Path) -> Result<i32, Error> {
    let written = emit_reports(report, out)?;
    for c in &report.cycles {
        let last = c.forward.last();
        println!(
            "cycle {}: {} dofs, {} subdomains, {} iterations ({}), theta {:.6e}, rho {:.6e}",
            c.cycle,
            c.n_dofs,
            c.n_subdomains,
            c.iterations,
            c.termination,
            last.map_or(f64::NAN, |r| r.theta),
            last.map_or(f64::NAN, |r| r.rho),
        );
        if let Some(g) = &c.goal {
            println!("  I in [{:.6e}, {:.6e}], precision {:.4}", g.iexm, g.iexp, g.precision);
        }
        for w in &c.warnings {
            eprintln!("warning: {w}");
        }
    }
    for r in &report.h_sweep {
        println!(
            "n {}: true {:.6e}, theta {:.6e}, rho {:.6e}, theta/seq {:.5}, rho/seq {:.5}",
            r.n,
            r.true_error,
            r.theta,
            r.rho,
            r.theta / r.theta_seq,
            r.rho / r.rho_seq
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(report.exit_code())
}

fn load_problem(mesh: &Path, config: &ProblemConfig, partition: Option<&Path>, grid: (usize, usize)) -> Result<Problem, Error> {
    let mesh = read_json::<MeshFile>(mesh)?.to_mesh()?;
    let partition = match partition {
        Some(p) => read_json::<PartitionFile>(p)?.to_partition(&mesh)?,
        None => partition_regular(&mesh, grid.0, grid.1)?,
    };
    Ok(Problem {
        name: "file".into(),
        material: config.material.to_material()?,
        loads: config.loads()?,
        qoi_region: config.qoi.as_ref().map(|q| q.region.clone()),
        exact: None,
        mesh,
        partition,
    })
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::BenchSquare { common, sizes } => {
            let report = run_global_benchmark(&sizes, common.grid.unwrap_or((3, 3)), &common.options(None))?;
            finish(&report, &common.out)
        }
        Command::BenchCracked { common, adaptive } => {
            let problem = cracked_problem(&CrackedGeometry::default(), common.grid.unwrap_or((4, 4)))?;
            let plan = AdaptivePlan::new(adaptive.target_precision, adaptive.max_cycles, adaptive.recycle)?;
            finish(&run_adaptive(&problem, &plan, &common.options(None))?, &common.out)
        }
        Command::Adaptive { common, adaptive, n } => {
            let problem = square_problem(n, common.grid.unwrap_or((3, 3)), 1.0)?;
            let plan = AdaptivePlan::new(adaptive.target_precision, adaptive.max_cycles, adaptive.recycle)?;
            finish(&run_adaptive(&problem, &plan, &common.options(None))?, &common.out)
        }
        Command::Estimate { common, mesh, config, partition, target_precision, max_cycles, recycle } => {
            let config: ProblemConfig = read_json(&config)?;
            let problem = load_problem(&mesh, &config, partition.as_deref(), common.grid.unwrap_or((2, 2)))?;
            let options = common.options(Some(&config));
            let report = match target_precision {
                Some(t) => run_adaptive(&problem, &AdaptivePlan::new(t, max_cycles, recycle)?, &options)?,
                None => run_estimate(&problem, &options)?,
            };
            finish(&report, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
