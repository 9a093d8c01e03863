use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fastped::bench::{self, SweepSpec, DEFAULT_MEASURE, DEFAULT_WARMUP};
use fastped::scenario_io::{make_corridor, write_csv, RunRecord};
use fastped::world::{parse_scenario, Grid, Potential};
use fastped::SimParams;

#[derive(Parser)]
#[command(name = "fastped", version, about = "Two-phase pedestrian simulation benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time one configuration.
    Run(RunArgs),
    /// Time every (agents, v_max, cores) combination.
    Sweep(SweepArgs),
    /// Search the largest agent count simulated in real time.
    Realtime(RealtimeArgs),
    /// Measure density against speed on a periodic corridor.
    Fd(FdArgs),
    /// Turn a sweep CSV into speed factors relative to one core.
    Speedup(SpeedupArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    agents: usize,
    #[arg(long, default_value_t = 4)]
    vmax: u8,
    #[arg(long, default_value_t = 1)]
    cores: usize,
    #[arg(long, default_value_t = 396)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    cores: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    agents: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    vmax: Vec<u8>,
    #[arg(long, default_value_t = 396)]
    steps: u64,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RealtimeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 4)]
    vmax: u8,
    #[arg(long, default_value_t = 1)]
    cores: usize,
    #[arg(long, default_value_t = 396)]
    budget_steps: u64,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FdArgs {
    #[arg(long, default_value_t = 50.0)]
    length_m: f64,
    #[arg(long, default_value_t = 4.0)]
    width_m: f64,
    #[arg(long, default_value_t = 4)]
    vmax: u8,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,3,4,5")]
    densities: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: u64,
    #[arg(long, default_value_t = DEFAULT_MEASURE)]
    measure: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpeedupArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn load_scenario(path: &Path) -> Result<(String, Grid)> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let grid = parse_scenario(&text).with_context(|| format!("{}", path.display()))?;
    let name = path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    Ok((name, grid))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).with_context(|| format!("{}", path.display()))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_records(records: &[RunRecord], out: &Path) -> Result<()> {
    write_csv(records, out)?;
    for r in records {
        println!(
            "{} agents={} v_max={} cores={} steps={} wall={:.6}s plan={:.6}s move={:.6}s",
            r.scenario_name, r.agents_initial, r.v_max, r.cores, r.steps, r.wall_time_s, r.plan_time_s, r.move_time_s
        );
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let (name, grid) = load_scenario(&args.scenario)?;
    bench::require_exits(&grid)?;
    let params = SimParams::new(args.vmax, args.seed)?.with_steps(args.steps)?;
    let potential = Potential::from_grid(&grid);
    let m = bench::measure(&name, &grid, &potential, args.agents, &params, args.cores, args.reps)?;
    write_records(&[m.record], &args.out)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (name, grid) = load_scenario(&args.scenario)?;
    let spec = SweepSpec {
        cores_list: args.cores,
        agents_list: args.agents,
        vmax_list: args.vmax,
        steps: args.steps,
        repetitions: args.reps,
    };
    let records = bench::run_sweep(&spec, &name, &grid, args.seed)?;
    write_records(&records, &args.out)
}

fn realtime(args: RealtimeArgs) -> Result<()> {
    let (name, grid) = load_scenario(&args.scenario)?;
    let params = SimParams::new(args.vmax, args.seed)?
        .with_steps(args.budget_steps)?
        .with_dt(args.dt)?;
    let cap = bench::realtime_capacity(&name, &grid, &params, args.cores, args.reps)?;
    let mut w = csv_writer(&args.out)?;
    w.write_record([
        "scenario", "v_max", "cores", "steps", "budget_s", "capacity", "lo_agents", "lo_wall_time_s", "hi_agents",
        "hi_wall_time_s",
    ])?;
    let (hi_n, hi_t) = cap
        .upper
        .map_or((String::new(), String::new()), |(n, t)| (n.to_string(), format!("{t:.6}")));
    w.write_record([
        name,
        args.vmax.to_string(),
        args.cores.to_string(),
        args.budget_steps.to_string(),
        format!("{:.6}", cap.budget_s),
        cap.agents.to_string(),
        cap.lower.0.to_string(),
        format!("{:.6}", cap.lower.1),
        hi_n,
        hi_t,
    ])?;
    w.flush()?;
    match cap.upper {
        Some((n, t)) => println!(
            "real-time capacity {} agents (bracket {} agents {:.3}s .. {} agents {:.3}s, budget {:.3}s)",
            cap.agents, cap.lower.0, cap.lower.1, n, t, cap.budget_s
        ),
        None => println!(
            "scenario full at {} agents in {:.3}s, still within the {:.3}s budget",
            cap.agents, cap.lower.1, cap.budget_s
        ),
    }
    Ok(())
}

fn fd(args: FdArgs) -> Result<()> {
    let corridor = make_corridor(args.length_m, args.width_m)?;
    let params = SimParams::new(args.vmax, args.seed)?;
    let points = bench::fundamental_diagram(&corridor, &params, &args.densities, args.warmup, args.measure)?;
    let table = bench::compare_weidmann(&points);
    let mut w = csv_writer(&args.out)?;
    w.write_record(["density", "mean_speed", "flow", "reference_speed", "abs_error"])?;
    for (p, row) in points.iter().zip(&table) {
        w.write_record([
            format!("{:.6}", p.density),
            format!("{:.6}", p.mean_speed),
            format!("{:.6}", p.flow),
            format!("{:.6}", row.reference_speed),
            format!("{:.6}", row.abs_error),
        ])?;
        println!(
            "rho={:.3}/m2 v={:.3}m/s J={:.3}/m/s reference v={:.3}m/s",
            p.density, p.mean_speed, p.flow, row.reference_speed
        );
    }
    w.flush()?;
    Ok(())
}

fn speedup(args: SpeedupArgs) -> Result<()> {
    let records = fastped::scenario_io::read_csv(&args.input)?;
    let rows = bench::speed_factor(&records)?;
    let mut w = csv_writer(&args.out)?;
    w.write_record(["agents_initial", "v_max", "cores", "wall_time_s", "factor"])?;
    for r in &rows {
        w.write_record([
            r.agents_initial.to_string(),
            r.v_max.to_string(),
            r.cores.to_string(),
            format!("{:.6}", r.wall_time_s),
            format!("{:.3}", r.factor),
        ])?;
        println!("agents={} v_max={} cores={} factor={:.3}", r.agents_initial, r.v_max, r.cores, r.factor);
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Realtime(a) => realtime(a),
        Command::Fd(a) => fd(a),
        Command::Speedup(a) => speedup(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fastped: {e:#}");
            ExitCode::FAILURE
        }
    }
}
