//! Command-line front end: single runs, convergence sweeps, limit comparisons
//! and reference solutions. Exit codes: 0 success, 2 configuration error,
//! 3 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use apflow::cases::CaseSpec;
use apflow::config::{output_root, RunConfig};
use apflow::io::{write_json, write_records, write_reference_csv};
use apflow::reference::{run_reference, DEFAULT_CFL};
use apflow::runner::{compare_limit, provenance, run_case, sweep_eoc};
use apflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "apflow",
    version,
    about = "Asymptotic-preserving low Mach Euler solver",
    after_help = "Outputs go under $APFLOW_OUT (default ./apflow-out) unless --out is given.\nExit codes: 0 success, 2 configuration error, 3 solver failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and write snapshots, diagnostics and a manifest.
    Run(RunArgs),
    /// L1 errors and convergence orders against the stationary solution.
    SweepEoc(SweepArgs),
    /// Distance to the incompressible limit scheme and the decay of rho theta - 1.
    CompareLimit(LimitArgs),
    /// Explicit Rusanov reference solution of a 1D case.
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct Common {
    /// Case name, e.g. stationary-vortex.
    case: String,
    /// Flat TOML file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Time-step fraction, 0 < beta <= 1/2.
    #[arg(long)]
    beta: Option<f64>,
    /// Stabilisation parameter: "auto" or a positive number.
    #[arg(long, value_parser = parse_eta)]
    eta: Option<EtaArg>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory; defaults to a subdirectory of $APFLOW_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the manifest only.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', required = true)]
    eps_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
}

#[derive(Args)]
struct LimitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', required = true)]
    eps_list: Vec<f64>,
    /// Cells per axis.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct ReferenceArgs {
    /// Case name of a 1D case.
    case: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CFL)]
    cfl: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum EtaArg {
    Auto,
    Fixed(f64),
}

fn parse_eta(s: &str) -> std::result::Result<EtaArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(EtaArg::Auto);
    }
    s.parse::<f64>()
        .map(EtaArg::Fixed)
        .map_err(|_| format!("expected \"auto\" or a number, got {s:?}"))
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let mut cfg = base.merge(RunConfig {
            case: self.case.clone(),
            t_end: self.t_end,
            beta: self.beta,
            dt_max: self.dt_max,
            gamma: self.gamma,
            output_dir: self.out.clone(),
            eta: match self.eta {
                Some(EtaArg::Fixed(v)) => Some(v),
                _ => None,
            },
            ..RunConfig::default()
        });
        if let Some(EtaArg::Auto) = self.eta {
            cfg.eta = None;
        }
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct ToolManifest<'a, T: Serialize> {
    provenance: String,
    command: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

fn out_dir(cfg: &RunConfig, default_name: String) -> Result<PathBuf> {
    let dir = cfg.output_dir_or(&default_name);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join("_")
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    let counts: Vec<usize> = [args.nx, args.ny].into_iter().flatten().collect();
    if !counts.is_empty() {
        let case = CaseSpec::by_name(&cfg.case)?;
        let mut full = cfg.counts.clone().unwrap_or(case.default_counts.clone());
        if let Some(nx) = args.nx {
            full[0] = nx;
        }
        if let Some(ny) = args.ny {
            *full
                .get_mut(1)
                .ok_or_else(|| Error::Config(format!("{} has no y axis", case.name)))? = ny;
        }
        cfg.counts = Some(full);
    }
    cfg = cfg.merge(RunConfig {
        eps: args.eps,
        snapshot_times: args.snapshot_times,
        seed: args.seed,
        dry_run: args.dry_run,
        ..RunConfig::default()
    });
    let art = run_case(&cfg)?;
    println!("wrote {}", art.manifest.display());
    println!(
        "steps {}  max Newton iterations {}  min rho {:.6e}  min theta {:.6e}",
        art.stats.steps,
        art.stats.max_newton_iterations(),
        art.stats.min_rho,
        art.stats.min_theta
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let dir = out_dir(&cfg, format!("eoc-{}", cfg.case))?;
    let table = sweep_eoc(&cfg, &args.eps_list, &args.n_list, |row, _| {
        eprintln!(
            "eps {:e} n {:4}: rho {:.6e} u {:.6e} v {:.6e} theta {:.6e}",
            row.eps, row.n, row.err_rho, row.err_u, row.err_v, row.err_theta
        );
    })?;
    write_records(&dir.join("eoc.csv"), &table.rows)?;
    write_json(
        &dir.join("manifest.json"),
        &ToolManifest { provenance: provenance(), command: "sweep-eoc", config: &cfg, result: &table },
    )?;
    println!("wrote {}", dir.join("eoc.csv").display());
    Ok(())
}

fn limit(args: LimitArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    if let Some(n) = args.n {
        let case = CaseSpec::by_name(&cfg.case)?;
        cfg.counts = Some(vec![n; case.dim()]);
    }
    let dir = out_dir(&cfg, format!("limit-{}-eps{}", cfg.case, join_list(&args.eps_list)))?;
    let cmp = compare_limit(&cfg, &args.eps_list)?;
    write_records(&dir.join("limit.csv"), &cmp.rows)?;
    write_records(&dir.join("deviation_series.csv"), &cmp.series)?;
    #[derive(Serialize)]
    struct Decay {
        eps: Vec<f64>,
        sup_deviation: Vec<f64>,
        slope: Option<f64>,
    }
    let decay = Decay {
        eps: cmp.rows.iter().map(|r| r.eps).collect(),
        sup_deviation: cmp.rows.iter().map(|r| r.theta_total_deviation).collect(),
        slope: cmp.decay_slope(),
    };
    write_json(&dir.join("decay.json"), &decay)?;
    write_json(
        &dir.join("manifest.json"),
        &ToolManifest { provenance: provenance(), command: "compare-limit", config: &cfg, result: &cmp.rows },
    )?;
    for r in &cmp.rows {
        println!(
            "eps {:e}: rho {:.4e}  u {:.4e}  theta {:.4e}  |rho theta - 1| {:.4e}",
            r.eps, r.rho, r.u, r.theta, r.theta_total_deviation
        );
    }
    if let Some(s) = decay.slope {
        println!("decay slope {s:.4}");
    }
    Ok(())
}

fn reference(args: ReferenceArgs) -> Result<()> {
    let case = CaseSpec::by_name(&args.case)?;
    let eps = args.eps.unwrap_or_else(|| case.default_eps());
    let t_end = args.t_end.unwrap_or(case.t_end);
    let s = run_reference(&case, args.n, eps, t_end, args.cfl)?;
    let name = format!("reference-{}-eps{}-n{}", case.name, eps, args.n);
    let dir = args.out.clone().unwrap_or_else(|| output_root().join(name));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("reference.csv");
    write_reference_csv(&path, &s)?;
    #[derive(Serialize)]
    struct RefManifest<'a> {
        provenance: String,
        case: &'a str,
        n: usize,
        eps: f64,
        t_end: f64,
        cfl: f64,
        steps: usize,
    }
    write_json(
        &dir.join("manifest.json"),
        &RefManifest { provenance: provenance(), case: &case.name, n: args.n, eps, t_end, cfl: args.cfl, steps: s.steps },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::SweepEoc(a) => sweep(a),
        Command::CompareLimit(a) => limit(a),
        Command::Reference(a) => reference(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
