//! Command line front end: adaptive solve runs with CSV reporting,
//! verification suites, and mesh inspection.
//!
//! Exit codes: 0 on success, 2 when a verification check fails, 3 on
//! configuration errors (including flag parsing), 1 on unexpected runtime
//! failures.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use curlmg::adaptive::{run_adaptive, write_csv, AdaptiveConfig};
use curlmg::assembly::assemble;
use curlmg::error::Error;
use curlmg::mesh::{
    mesh_quality, read_ascii, similarity_classes, virtual_hierarchy, write_ascii, Mesh,
};
use curlmg::problems;
use curlmg::solver::{SolveMode, SolverConfig};
use curlmg::space::DofMap;
use curlmg::verify::{self, VerifyParams};

#[derive(Parser)]
#[command(
    name = "curlmg",
    version,
    about = "Adaptive edge-element solver with local multilevel preconditioning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive refinement loop and write the experiment table.
    Solve(SolveArgs),
    /// Run one verification suite, or all of them.
    Verify(VerifyArgs),
    /// Report statistics for a preset or an ASCII mesh file.
    MeshInfo(MeshInfoArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem preset; one of the registered names.
    #[arg(long, default_value = "lshape")]
    problem: String,
    /// Marking fraction of the maximum strategy.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Residual reduction target of the multilevel solve.
    #[arg(long, default_value_t = 1e-8)]
    mg_reduction: f64,
    /// Stop once the leaf count reaches this bound.
    #[arg(long, default_value_t = 100_000)]
    max_elems: usize,
    /// Smoothing sweeps on the way down the hierarchy.
    #[arg(long, default_value_t = 0)]
    pre: usize,
    /// Smoothing sweeps on the way up.
    #[arg(long, default_value_t = 1)]
    post: usize,
    /// Solver driver: "iteration" or "pcg".
    #[arg(long, default_value = "iteration")]
    mode: String,
    /// CSV output path.
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Seed for contraction estimates.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite to run; all suites when omitted.
    suite: Option<String>,
    /// Problem preset used by suites that run the adaptive loop.
    #[arg(long, default_value = "lshape")]
    problem: String,
    /// Hierarchy depth target for those suites.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct MeshInfoArgs {
    /// Problem preset to build.
    #[arg(long, conflicts_with = "mesh")]
    problem: Option<String>,
    /// ASCII mesh file to read instead of a preset.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Uniform refinement sweeps applied before reporting.
    #[arg(long, default_value_t = 0)]
    refine: usize,
    /// Write the resulting mesh in the ASCII format.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the assembled edge-element matrix in Matrix Market form.
    #[arg(long)]
    export_matrix: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; everything else is a usage
            // problem and maps to the configuration exit code.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(3);
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::MeshInfo(args) => cmd_mesh_info(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn parse_mode(s: &str) -> Result<SolveMode, Error> {
    match s.to_ascii_lowercase().as_str() {
        "iteration" => Ok(SolveMode::Iteration),
        "pcg" => Ok(SolveMode::Pcg),
        other => Err(Error::Config(format!(
            "unknown solve mode '{other}', expected 'iteration' or 'pcg'"
        ))),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Error> {
    let preset = problems::lookup(&args.problem).ok_or_else(|| {
        Error::Config(format!(
            "unknown problem preset '{}', available: {}",
            args.problem,
            problems::names().join(", ")
        ))
    })?;
    let cfg = AdaptiveConfig {
        theta: args.theta,
        solver: SolverConfig {
            reduction: args.mg_reduction,
            mode: parse_mode(&args.mode)?,
            pre: args.pre,
            post: args.post,
            ..SolverConfig::default()
        },
        max_elems: args.max_elems,
        seed: args.seed,
        ..AdaptiveConfig::default()
    };

    println!(
        "adaptive run: problem {}, theta {}, reduction {:.1e}, budget {} elements",
        preset.name(),
        args.theta,
        args.mg_reduction,
        args.max_elems
    );
    let rows = run_adaptive(preset.as_ref(), &cfg)?;
    println!("n_it,n_el,n_dofs,e_rel,eta_h,mg_iters,contraction,work_units");
    for r in &rows {
        let flag = if r.mg_converged { "" } else { "  # direct fallback" };
        println!(
            "{},{},{},{:.6e},{:.6e},{},{:.6e},{}{}",
            r.n_it, r.n_el, r.n_dofs, r.e_rel, r.eta_h, r.mg_iters, r.contraction, r.work_units,
            flag
        );
    }

    let file = File::create(&args.out)?;
    let mut w = BufWriter::new(file);
    write_csv(&rows, args.seed, &mut w)?;
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, Error> {
    let suites = match &args.suite {
        Some(name) => {
            let suite = verify::lookup(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown suite '{name}', available: {}",
                    verify::names().join(", ")
                ))
            })?;
            vec![suite]
        }
        None => verify::registry(),
    };
    let params = VerifyParams {
        seed: args.seed,
        problem: args.problem,
        levels: args.levels,
    };
    let mut total = 0usize;
    let mut failed = 0usize;
    for suite in suites {
        match suite.run(&params) {
            Ok(results) => {
                for r in results {
                    total += 1;
                    if r.passed {
                        println!("[PASS] {}/{}: {}", suite.name(), r.name, r.detail);
                    } else {
                        failed += 1;
                        println!("[FAIL] {}/{}: {}", suite.name(), r.name, r.detail);
                    }
                }
            }
            Err(e @ (Error::Config(_) | Error::Parse { .. })) => return Err(e),
            Err(e) => {
                total += 1;
                failed += 1;
                println!("[FAIL] {}: did not run: {e}", suite.name());
            }
        }
    }
    println!("{} checks, {} failed", total, failed);
    Ok(if failed == 0 { 0 } else { 2 })
}

fn cmd_mesh_info(args: MeshInfoArgs) -> Result<u8, Error> {
    let mut m: Mesh = match (&args.problem, &args.mesh) {
        (_, Some(path)) => {
            let file = File::open(path)?;
            read_ascii(&mut BufReader::new(file))?
        }
        (problem, None) => {
            let name = problem.as_deref().unwrap_or("lshape");
            let preset = problems::lookup(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown problem preset '{name}', available: {}",
                    problems::names().join(", ")
                ))
            })?;
            preset.build_mesh()
        }
    };
    for _ in 0..args.refine {
        m.refine_all()?;
    }

    println!("vertices:        {}", m.n_verts());
    println!("leaf elements:   {}", m.n_leaves());
    println!("max leaf level:  {}", m.max_leaf_level());
    let h = virtual_hierarchy(&m)?;
    println!("virtual levels:  {}", h.levels.len());
    println!("meshwidth decay: {:.4}", h.theta_hat);
    let vol = m.total_leaf_volume();
    println!(
        "volume:          {:.12} (initial {:.12})",
        vol,
        m.initial_volume()
    );
    let faces = m.boundary_faces();
    let dirichlet = faces.iter().filter(|(_, d)| *d).count();
    println!(
        "boundary faces:  {} ({} with essential conditions)",
        faces.len(),
        dirichlet
    );
    match m.check_conformity() {
        Ok(()) => println!("conformity:      ok"),
        Err(e) => println!("conformity:      VIOLATED: {e}"),
    }
    let q = mesh_quality(&m)?;
    println!(
        "meshwidth:       h in [{:.4e}, {:.4e}]",
        q.h_min, q.h_max
    );
    println!(
        "shape ratio:     in [{:.4}, {:.4}], {} similarity classes",
        q.min_ratio,
        q.max_ratio,
        similarity_classes(&m)?
    );
    let dm = DofMap::for_leaves(&m)?;
    println!(
        "dofs:            {} edge, {} nodal",
        dm.n_edge_dofs(),
        dm.n_vert_dofs()
    );

    if let Some(path) = &args.out {
        let mut w = BufWriter::new(File::create(path)?);
        write_ascii(&m, &mut w)?;
        w.flush()?;
        println!("wrote mesh to {}", path.display());
    }
    if let Some(path) = &args.export_matrix {
        let sys = assemble(&m, &dm, |_| curlmg::geometry::Vec3::ZERO, None)?;
        let mut w = BufWriter::new(File::create(path)?);
        sys.a.write_matrix_market(&mut w)?;
        w.flush()?;
        println!("wrote system matrix to {}", path.display());
    }
    Ok(0)
}
