use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};

use pcd_cli::config::parse_config;
use pcd_cli::runner::{self, PlotMeta, TrajPoint};
use pcd_core::projection::{AdmmParams, VelocityChainProjection};

/// Projected coupled diffusion experiment harness.
#[derive(Parser)]
#[command(name = "pcd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment sweep.
    Run(RunArgs),
    /// Project one trajectory onto the velocity-chain constraint set.
    Project(ProjectArgs),
    /// Dissimilarity metrics between two trajectory files.
    Metrics(MetricsArgs),
    /// Re-render the plot of a finished run cell.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML configuration.
    config: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory from the configuration.
    #[arg(long)]
    output_dir: Option<String>,
    /// Overrides the worker thread count (0 = library default).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ProjectArgs {
    /// CSV with columns x,y. Without --start, the first row is the fixed
    /// start position and the remaining rows are projected.
    #[arg(long)]
    input: PathBuf,
    /// Velocity limit.
    #[arg(long)]
    vmax: f64,
    /// Physical step length.
    #[arg(long)]
    dt: f64,
    /// Start position "x,y"; defaults to the first row of the input.
    #[arg(long)]
    start: Option<String>,
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 10.0)]
    xi: f64,
    /// ADMM iteration cap.
    #[arg(long, default_value_t = 700)]
    max_iters: usize,
    /// ADMM residual tolerance.
    #[arg(long, default_value_t = 2e-5)]
    tolerance: f64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// First trajectory CSV (columns x,y).
    #[arg(long)]
    a: PathBuf,
    /// Second trajectory CSV (columns x,y).
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// A cell directory produced by `run` with plots enabled.
    cell: PathBuf,
    /// Output SVG path; defaults to plot.svg inside the cell.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Project(args) => project(args),
        Command::Metrics(args) => metrics(args),
        Command::Plot(args) => plot(args),
    }
}

/// Output root: PCD_OUTPUT_ROOT when set, the working directory otherwise.
fn output_root() -> PathBuf {
    std::env::var_os("PCD_OUTPUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn run(args: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(dir) = args.output_dir {
        config.run.output_dir = dir;
    }
    if let Some(threads) = args.threads {
        config.run.threads = threads;
    }
    let report = runner::execute(&config, &output_root())?;
    for cell in &report.cells {
        println!(
            "gamma {:>8}: rows {} su_rate {:.4} rs {:.4} cs {:.4} nonconverged {}/{} ({:.1}s)",
            cell.gamma,
            cell.rows,
            cell.success_rate,
            cell.means.get("rs").copied().unwrap_or(f64::NAN),
            cell.means.get("cs").copied().unwrap_or(f64::NAN),
            cell.nonconverged_projections,
            cell.projection_calls,
            cell.wall_clock_secs
        );
    }
    println!(
        "report: {}",
        output_root().join(&config.run.output_dir).join("report.json").display()
    );
    Ok(())
}

fn read_trajectory_csv(path: &Path) -> Result<Vec<[f64; 2]>> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            bail!("{}: line {} needs two comma-separated columns", path.display(), idx + 1);
        }
        match (parts[0].parse::<f64>(), parts[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => rows.push([x, y]),
            _ if idx == 0 => continue, // header row
            _ => bail!("{}: line {} is not numeric", path.display(), idx + 1),
        }
    }
    if rows.is_empty() {
        bail!("{}: no trajectory rows", path.display());
    }
    Ok(rows)
}

fn project(args: ProjectArgs) -> Result<()> {
    let mut rows = read_trajectory_csv(&args.input)?;
    let start = match &args.start {
        Some(text) => {
            let parts: Vec<&str> = text.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                bail!("--start expects \"x,y\"");
            }
            [parts[0].parse::<f64>()?, parts[1].parse::<f64>()?]
        }
        None => {
            if rows.len() < 2 {
                bail!("need at least a start row and one waypoint");
            }
            rows.remove(0)
        }
    };
    let op = VelocityChainProjection::new(
        start,
        args.vmax,
        args.dt,
        AdmmParams { xi: args.xi, max_iters: args.max_iters, tolerance: args.tolerance },
    )?;
    let mut flat = Array1::zeros(rows.len() * 2);
    for (h, p) in rows.iter().enumerate() {
        flat[2 * h] = p[0];
        flat[2 * h + 1] = p[1];
    }
    let out = op.project_flat(flat.view())?;
    if !out.converged {
        eprintln!("warning: projection hit the iteration cap before reaching tolerance");
    }
    let mut text = String::from("x,y\n");
    for h in 0..rows.len() {
        text.push_str(&format!("{},{}\n", out.point[2 * h], out.point[2 * h + 1]));
    }
    match args.output {
        Some(path) => runner::write_atomic(&path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let a = read_trajectory_csv(&args.a)?;
    let b = read_trajectory_csv(&args.b)?;
    let to_array = |rows: &[[f64; 2]]| {
        Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j])
    };
    let a = to_array(&a);
    let b = to_array(&b);
    let dtw = pcd_core::metrics::dtw(a.view(), b.view())?;
    let dfd = pcd_core::metrics::dfd(a.view(), b.view())?;
    println!("{}", serde_json::json!({ "dtw": dtw, "dfd": dfd }));
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let cell_json = fs::read_to_string(args.cell.join("cell.json"))
        .with_context(|| format!("reading {}", args.cell.join("cell.json").display()))?;
    let cell: runner::CellReport = serde_json::from_str(&cell_json)?;
    let meta: &PlotMeta = &cell.plot_meta;

    let traj_path = args.cell.join("trajectories.csv");
    let mut points: Vec<TrajPoint> = Vec::new();
    if traj_path.exists() {
        let mut reader = csv::Reader::from_path(&traj_path)?;
        for record in reader.deserialize() {
            points.push(record?);
        }
    }
    let svg = pcd_cli::plot::render(meta, &points, &[])?;
    let out = args.output.unwrap_or_else(|| args.cell.join("plot.svg"));
    runner::write_atomic(&out, svg.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
