//! `vertic` — verify vertical contracts, inspect interconnection graphs,
//! and run the platooning case study.
//!
//! Exit codes: 0 verdict true / success, 1 verdict false (or a simulated
//! guarantee violation), 2 input or validation error, 3 solver failure.
//! Set `RAYON_NUM_THREADS` to bound the LP solver's parallelism.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vertic::network::EdgeFilter;
use vertic::platoon::{
    build_platoon_with, check_trajectory_guarantees, kmh, simulate, write_csv, LeaderProfile,
    PlatoonParams,
};
use vertic::problem::ProblemFile;
use vertic::verification::{
    build_assumption_lps, build_guarantee_lps, build_two_system_feedback_lps, verify, Mode, Report,
    RhoValue, Target, VerificationProblem, VerifyError, VerifyOptions,
};

#[derive(Parser)]
#[command(
    name = "vertic",
    version,
    about = "LP-based verification of assume/guarantee contract compositions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the vertical contract described by a problem file.
    Verify(VerifyArgs),
    /// Generate the M-vehicle platoon and verify it or simulate it.
    Platoon(PlatoonArgs),
    /// Print interconnection diagnostics for a problem file.
    GraphInfo(GraphInfoArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Problem file (JSON).
    path: PathBuf,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a per-target summary table.
    #[arg(long)]
    summary: bool,
    /// Write every constructed LP as a plain-text listing to this file.
    #[arg(long)]
    dump_lps: Option<PathBuf>,
}

#[derive(Args)]
struct PlatoonArgs {
    /// Number of vehicles (leader plus followers).
    #[arg(long = "M")]
    vehicles: usize,
    /// Verify the vertical contract of the generated platoon.
    #[arg(long, conflicts_with = "simulate")]
    verify: bool,
    /// Run the closed-loop simulation instead.
    #[arg(long)]
    simulate: bool,
    /// Simulation length in steps.
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Simulation noise seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (report JSON or trajectory CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time step [s].
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Time headway [s].
    #[arg(long, default_value_t = 2.0)]
    headway: f64,
    /// Leader speed limit [km/h].
    #[arg(long, default_value_t = 110.0)]
    v_max_leader: f64,
    /// Follower speed limit [km/h].
    #[arg(long, default_value_t = 100.0)]
    v_max_follower: f64,
    /// Parasitic acceleration bound [m/s^2].
    #[arg(long, default_value_t = 0.3)]
    accel_bound: f64,
}

#[derive(Args)]
struct GraphInfoArgs {
    /// Problem file (JSON).
    path: PathBuf,
    /// Also count the distinct topological orderings (exponential; small
    /// graphs only).
    #[arg(long)]
    count_orders: bool,
    /// Node bound for --count-orders.
    #[arg(long, default_value_t = 12)]
    order_bound: usize,
}

/// Process failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    fn solver(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 3,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Platoon(args) => cmd_platoon(args),
        Command::GraphInfo(args) => cmd_graph_info(args),
    }
}

fn read_problem(path: &Path) -> Result<ProblemFile, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    ProblemFile::parse(&text).map_err(Failure::input)
}

fn classify_verify_error(e: VerifyError) -> Failure {
    match e {
        VerifyError::Solver(inner) => Failure::solver(inner),
        other => Failure::input(other),
    }
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn rho_display(v: RhoValue) -> String {
    match v {
        RhoValue::PosInf => "+inf".into(),
        RhoValue::NegInf => "-inf".into(),
        RhoValue::Finite(x) => format!("{x}"),
    }
}

fn target_display(problem: &VerificationProblem, t: Target) -> String {
    match t {
        Target::Omega => "omega".into(),
        Target::Node(i) => problem.network.node(i).name.clone(),
    }
}

fn print_summary(problem: &VerificationProblem, report: &Report) {
    println!(
        "{:<16} {:>22} {:>10} {:>12}",
        "target", "rho", "status", "time [ms]"
    );
    for r in &report.results {
        let status = match r.value {
            RhoValue::NegInf => "vacuous",
            RhoValue::PosInf => "unbounded",
            RhoValue::Finite(_) if r.value.passes(report.tolerance) => "pass",
            RhoValue::Finite(_) => "fail",
        };
        println!(
            "{:<16} {:>22} {:>10} {:>12.3}",
            target_display(problem, r.target),
            rho_display(r.value),
            status,
            r.solve_time.as_secs_f64() * 1e3,
        );
    }
    println!(
        "verdict: {}  ({} LP groups, {:.3} ms total)",
        report.verdict,
        report.lp_groups(),
        report.total_time.as_secs_f64() * 1e3
    );
}

fn dump_all_lps(problem: &VerificationProblem, path: &Path) -> Result<(), Failure> {
    let mut out = String::new();
    let mut dump_group = |name: &str, lps: &[vertic::verification::VerificationLp]| {
        for (i, lp) in lps.iter().enumerate() {
            out.push_str(&format!(
                "\\ group {name} lp {i} (block {} row {} time {})\n",
                lp.objective.block, lp.objective.row, lp.objective.time
            ));
            out.push_str(&lp.problem.dump());
            out.push('\n');
        }
    };
    match problem.options.mode {
        Mode::TwoSystemFeedback => {
            let m = problem.max_depth() + problem.options.horizon_extension;
            for (target, lps) in
                build_two_system_feedback_lps(problem, m).map_err(classify_verify_error)?
            {
                dump_group(&target_display(problem, target), &lps);
            }
        }
        _ => {
            for i in 0..problem.network.node_count() {
                let lps = build_assumption_lps(problem, i).map_err(classify_verify_error)?;
                dump_group(&target_display(problem, Target::Node(i)), &lps);
            }
            let lps = build_guarantee_lps(problem).map_err(classify_verify_error)?;
            dump_group("omega", &lps);
        }
    }
    fs::write(path, out)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn run_verification(
    problem: &VerificationProblem,
    out: &Option<PathBuf>,
    summary: bool,
) -> Result<u8, Failure> {
    let report = verify(problem).map_err(classify_verify_error)?;
    for w in &report.warnings {
        eprintln!("warning: {w:?}");
    }
    let json =
        serde_json::to_string_pretty(&report.to_json(&problem.network)).expect("report serializes");
    write_or_print(out, &json)?;
    if summary {
        print_summary(problem, &report);
    }
    Ok(if report.verdict { 0 } else { 1 })
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, Failure> {
    let file = read_problem(&args.path)?;
    let problem = file.into_problem().map_err(Failure::input)?;
    if let Some(path) = &args.dump_lps {
        dump_all_lps(&problem, path)?;
    }
    run_verification(&problem, &args.out, args.summary)
}

fn cmd_platoon(args: PlatoonArgs) -> Result<u8, Failure> {
    if !args.verify && !args.simulate {
        return Err(Failure::input("pass --verify or --simulate"));
    }
    let params = PlatoonParams {
        vehicles: args.vehicles,
        dt: args.dt,
        headway: args.headway,
        v_max_leader: kmh(args.v_max_leader),
        v_max_follower: kmh(args.v_max_follower),
        accel_bound: args.accel_bound,
    };
    params.validate().map_err(Failure::input)?;

    if args.verify {
        let problem =
            build_platoon_with(&params, VerifyOptions::default()).map_err(Failure::input)?;
        let report = verify(&problem).map_err(classify_verify_error)?;
        let json = serde_json::to_string_pretty(&report.to_json(&problem.network))
            .expect("report serializes");
        write_or_print(&args.out, &json)?;
        // One-line scalability statistics: problem size, LP counts, timing.
        let lp_count: usize = report.results.iter().map(|r| r.lp_count).sum();
        let vars: usize = report.results.iter().map(|r| r.total_vars).sum();
        let cons: usize = report.results.iter().map(|r| r.total_constraints).sum();
        eprintln!(
            "M={} |V|={} groups={} lps={} avg_vars={:.2} avg_constraints={:.2} total_ms={:.2} verdict={}",
            args.vehicles,
            problem.network.node_count(),
            report.lp_groups(),
            lp_count,
            vars as f64 / lp_count.max(1) as f64,
            cons as f64 / lp_count.max(1) as f64,
            report.total_time.as_secs_f64() * 1e3,
            report.verdict,
        );
        // Keep stdout clean when the report itself goes there.
        if args.out.is_some() {
            print_summary(&problem, &report);
        }
        Ok(if report.verdict { 0 } else { 1 })
    } else {
        let traj = simulate(&params, args.steps, args.seed, &LeaderProfile::scenario())
            .map_err(Failure::input)?;
        let mut csv = Vec::new();
        write_csv(&traj, &mut csv).map_err(|e| Failure::input(format!("csv: {e}")))?;
        match &args.out {
            Some(path) => fs::write(path, &csv)
                .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?,
            None => {
                std::io::stdout()
                    .write_all(&csv)
                    .map_err(|e| Failure::input(format!("stdout: {e}")))?;
            }
        }
        let check = check_trajectory_guarantees(&traj, &params);
        eprintln!(
            "simulated {} steps, seed {}, rng {}; infeasible-control flags: {}",
            traj.steps,
            traj.seed,
            traj.rng_algorithm,
            traj.infeasible_steps.len()
        );
        match &check.first_violation {
            None => {
                eprintln!("composite guarantees hold on every step");
                Ok(if traj.infeasible_steps.is_empty() {
                    0
                } else {
                    1
                })
            }
            Some(v) => {
                eprintln!(
                    "guarantee violated at step {} vehicle {} ({:?})",
                    v.step, v.vehicle, v.kind
                );
                Ok(1)
            }
        }
    }
}

fn cmd_graph_info(args: GraphInfoArgs) -> Result<u8, Failure> {
    let file = read_problem(&args.path)?;
    let net = file.build_network().map_err(Failure::input)?;
    let name = |i: usize| net.node(i).name.clone();

    match net.topological_order() {
        Ok(order) => {
            let names: Vec<String> = order.iter().map(|&i| name(i)).collect();
            println!("topological order: {}", names.join(" "));
        }
        Err(cycle) => {
            let edges: Vec<String> = cycle
                .edges
                .iter()
                .map(|&(s, d)| format!("{}->{}", name(s), name(d)))
                .collect();
            println!("cyclic graph; certificate: {}", edges.join(", "));
        }
    }

    println!("causality:");
    for ((src, dst), label) in net.causality().iter() {
        println!("  {} -> {}: {label:?}", name(*src), name(*dst));
    }

    println!("backward reachability:");
    for i in 0..net.node_count() {
        let br: Vec<String> = net
            .backward_reachable(i, EdgeFilter::All)
            .iter()
            .map(|&j| name(j))
            .collect();
        let br_nsc: Vec<String> = net
            .backward_reachable(i, EdgeFilter::NonStrictOnly)
            .iter()
            .map(|&j| name(j))
            .collect();
        println!(
            "  {}: BR={{{}}} BR_nsc={{{}}}",
            name(i),
            br.join(", "),
            br_nsc.join(", ")
        );
    }

    if args.count_orders {
        let count = net
            .count_topological_orders(args.order_bound)
            .map_err(Failure::input)?;
        println!("topological orderings: {count}");
    }

    let findings = net.check_assumptions();
    if findings.is_empty() {
        println!("structural checks: ok");
    } else {
        for f in &findings {
            println!("finding: {f:?}");
        }
    }
    Ok(0)
}
