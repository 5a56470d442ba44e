//! Command-line frontend: synthesize controllers, replay them in closed
//! loop, cross-check the solver against the brute-force oracle, and export
//! CSV slices of the artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stopover::abstraction::{compute_transitions, AbstractSystem};
use stopover::cost::Cost;
use stopover::io::{self, ControllerArtifact, Manifest};
use stopover::oracle::{check_instance, gadget, product_value, random_instance, InstanceLimits};
use stopover::scenario::Scenario;
use stopover::sim::{auto_step_budget, Disturbance, EpisodeReport, Simulator};
use stopover::solver::BackwardAdjacency;
use stopover::twophase::{self, naive_phase1, TwoPhaseError};

const VERSION_LINE: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (artifact format v1: abstraction SPVA, controller SPVC)"
);

#[derive(Parser)]
#[command(name = "stopover", version = VERSION_LINE, about = "Two-phase reach-avoid controller synthesis on sampled systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a controller for a scenario file.
    Synth(SynthArgs),
    /// Run closed-loop episodes of a synthesized controller.
    Sim(SimArgs),
    /// Cross-check the two-phase solver against the brute-force oracle.
    Selftest(SelftestArgs),
    /// Export a 2-D CSV slice of a controller artifact.
    Export(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory for controller.svc and manifest.json.
    #[arg(short, long)]
    out: PathBuf,
    /// Worker threads for the abstraction (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Cache directory for the transition relation, keyed by the
    /// dynamics+grid+inputs hash.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Also synthesize the zero-terminal baseline controller
    /// (controller_naive.svc).
    #[arg(long)]
    naive: bool,
}

#[derive(Args)]
struct SimArgs {
    /// Controller artifact (.svc).
    controller: PathBuf,
    /// Scenario file the controller was synthesized from.
    scenario: PathBuf,
    /// Output directory for episodes.csv and summary.json.
    #[arg(short, long)]
    out: PathBuf,
    /// Episode count (default: the scenario's).
    #[arg(long)]
    episodes: Option<u32>,
    /// Disturbance strategy: none, uniform, corners, or all.
    #[arg(long)]
    strategy: Option<String>,
    /// Base seed (default: the scenario's).
    #[arg(long)]
    seed: Option<u64>,
    /// Initial state, comma-separated (default: the scenario's).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    /// Step budget per episode (default: derived from the value bound).
    #[arg(long)]
    max_steps: Option<usize>,
    /// Write the first K trajectories as traj_<i>.csv.
    #[arg(long, default_value_t = 0)]
    dump_traj: usize,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random instances per corpus (plain and phase-coupled).
    #[arg(long, default_value_t = 500)]
    instances: u64,
    /// Base seed for the corpus.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Corrupt one solved value on purpose; the run must then fail with a
    /// counterexample (exercises the checker itself).
    #[arg(long)]
    corrupt: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Controller artifact (.svc).
    controller: PathBuf,
    /// What to slice: v1, v2, mu1, or mu2.
    #[arg(long)]
    kind: String,
    /// The two free axes, comma-separated (column axis first).
    #[arg(long, value_delimiter = ',')]
    axes: Vec<usize>,
    /// Pinned cell index per remaining axis, as axis=index pairs.
    #[arg(long, value_delimiter = ',')]
    fix: Vec<String>,
    /// Output CSV path.
    #[arg(short, long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Sim(args) => cmd_sim(&args),
        Command::Selftest(args) => cmd_selftest(&args),
        Command::Export(args) => cmd_export(&args).map(|()| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building the worker pool")?;
            Ok(pool.install(job))
        }
    }
}

fn obtain_abstraction(
    scenario: &Scenario,
    args: &SynthArgs,
) -> Result<(AbstractSystem, bool)> {
    let key = scenario.abstraction_key();
    let cache_path = args.cache.as_ref().map(|dir| {
        let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
        dir.join(format!("{hex}.sva"))
    });
    if let Some(path) = &cache_path {
        if path.exists() {
            let (abs, stored) = io::load_abstraction(path)
                .with_context(|| format!("loading cached abstraction {}", path.display()))?;
            if stored != key {
                bail!("cache file {} holds a different system", path.display());
            }
            return Ok((abs, true));
        }
    }
    let grid = scenario.build_grid()?;
    let sys = scenario.sampled_system()?;
    let inputs = scenario.input_points();
    let abs = in_pool(args.threads, || compute_transitions(&sys, &grid, &inputs))??;
    if let Some(path) = &cache_path {
        std::fs::create_dir_all(path.parent().unwrap())?;
        io::save_abstraction(path, &abs, &key)?;
    }
    Ok((abs, false))
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let t0 = Instant::now();
    let scenario = Scenario::load(&args.scenario)?;
    std::fs::create_dir_all(&args.out)?;
    let (abs, cached) = obtain_abstraction(&scenario, args)?;
    let grid = &abs.grid;
    let inputs = scenario.input_points();
    let model = scenario.cost_model()?;
    let running = model.abstracted(grid, &inputs);
    let rc = |x, y, u| running.eval(x, y, u);
    let (a1, a2) = scenario.task_masks(grid);
    let g0 = model.terminal;
    println!(
        "abstraction: {} cells, {} inputs, {} transitions, {} unsafe pairs{}",
        grid.cell_total(),
        inputs.len(),
        abs.transition_count(),
        abs.unsafe_pair_count(),
        if cached { " (cached)" } else { "" }
    );

    let sol = match twophase::synthesize(&abs, &a1, &a2, |_| g0, rc) {
        Ok(sol) => sol,
        Err(TwoPhaseError::NoSolution { coverage }) => {
            eprintln!(
                "no solution: {} of {} waypoint cells can win the goal phase",
                coverage.winning_cells, coverage.target_cells
            );
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };

    let x0_cell = grid.quantize(&scenario.sim.x0);
    let v1_at_x0 = sol.v1[x0_cell as usize];
    let artifact = ControllerArtifact {
        scenario_hash: scenario.hash(),
        grid: grid.clone(),
        input_count: inputs.len() as u32,
        naive: false,
        v1: sol.v1.clone(),
        v2: sol.v2.clone(),
        mu1: sol.mu1.clone(),
        mu2: sol.mu2.clone(),
        order1: sol.order1.clone(),
        order2: sol.order2.clone(),
        coverage: (sol.coverage.target_cells as u64, sol.coverage.winning_cells as u64),
    };
    io::save_controller(&args.out.join("controller.svc"), &artifact)?;

    if args.naive {
        let backward = BackwardAdjacency::build(&abs)?;
        let naive = naive_phase1(&abs, &backward, &a1, &sol.v2, rc)?;
        let naive_artifact = ControllerArtifact {
            naive: true,
            v1: naive.actual,
            mu1: naive.mu1,
            order1: naive.order1,
            ..artifact
        };
        io::save_controller(&args.out.join("controller_naive.svc"), &naive_artifact)?;
    }

    let synth_seconds = t0.elapsed().as_secs_f64();
    let manifest = Manifest {
        scenario: scenario.name.clone(),
        scenario_hash: scenario.hash_hex(),
        naive: args.naive,
        cells: grid.cell_total(),
        inputs: inputs.len() as u32,
        transitions: abs.transition_count(),
        unsafe_pairs: abs.unsafe_pair_count(),
        coverage_target: sol.coverage.target_cells as u64,
        coverage_winning: sol.coverage.winning_cells as u64,
        v1_finite: sol.v1.iter().filter(|c| c.is_finite()).count() as u64,
        v2_finite: sol.v2.iter().filter(|c| c.is_finite()).count() as u64,
        x0_cell,
        v1_at_x0: v1_at_x0.is_finite().then(|| v1_at_x0.value()),
        synth_seconds,
    };
    io::save_manifest(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "coverage: {} of {} waypoint cells; v1 finite on {} cells",
        sol.coverage.winning_cells, sol.coverage.target_cells, manifest.v1_finite
    );
    match manifest.v1_at_x0 {
        Some(v) => println!("guarantee at x0: {v}"),
        None => println!("warning: no finite guarantee at the scenario's x0"),
    }
    println!("synthesized in {synth_seconds:.1}s -> {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn episode_rows(reports: &[EpisodeReport], strategy: Disturbance, base_seed: u64) -> String {
    let mut text = String::new();
    for (k, e) in reports.iter().enumerate() {
        let traj_cost = if e.cost.is_finite() { format!("{}", e.cost.value()) } else { "inf".into() };
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            base_seed + k as u64,
            strategy.name(),
            e.states.len() - 1,
            traj_cost,
            e.bound.value(),
            e.finished,
            e.visited_a1,
            e.stopped_in_a2,
            e.phase_switch.map_or(String::from("-"), |s| s.to_string()),
            e.stop_step.map_or(String::from("-"), |s| s.to_string()),
            e.fault.as_ref().map_or(String::from("-"), |f| format!("{f}")),
        ));
    }
    text
}

fn dump_trajectories(dir: &Path, reports: &[EpisodeReport], count: usize) -> Result<()> {
    for (k, e) in reports.iter().take(count).enumerate() {
        let mut text = String::from("step,state,input\n");
        for (i, x) in e.states.iter().enumerate() {
            let coords: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
            let input = e
                .inputs
                .get(i)
                .map_or(String::from("-"), |u| u.to_string());
            text.push_str(&format!("{},{},{}\n", i, coords.join(" "), input));
        }
        std::fs::write(dir.join(format!("traj_{k}.csv")), text)?;
    }
    Ok(())
}

fn cmd_sim(args: &SimArgs) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.scenario)?;
    let artifact = io::load_controller(&args.controller)?;
    if artifact.scenario_hash != scenario.hash() {
        bail!(
            "controller {} was synthesized from a different scenario",
            args.controller.display()
        );
    }
    std::fs::create_dir_all(&args.out)?;

    let grid = &artifact.grid;
    let sys = scenario.sampled_system()?;
    let model = scenario.cost_model()?;
    let inputs = scenario.input_points();
    let a1 = scenario.a1_region();
    let a2 = scenario.a2_region();

    let x0 = args.x0.clone().unwrap_or_else(|| scenario.sim.x0.clone());
    if x0.len() != grid.dim() {
        bail!("x0 has {} coordinates, the grid {}", x0.len(), grid.dim());
    }
    let episodes = args.episodes.unwrap_or(scenario.sim.episodes);
    let base_seed = args.seed.unwrap_or(scenario.sim.seed);
    let strategy_name = args
        .strategy
        .clone()
        .unwrap_or_else(|| scenario.sim.strategy.clone());
    let strategies: Vec<Disturbance> = if strategy_name == "all" {
        vec![Disturbance::None, Disturbance::Uniform, Disturbance::Corners]
    } else {
        vec![Disturbance::parse(&strategy_name)
            .ok_or_else(|| anyhow!("unknown strategy {strategy_name:?}"))?]
    };

    let cell = grid.quantize(&x0);
    if cell == grid.out_cell() {
        bail!("x0 {:?} lies outside the grid", x0);
    }
    let bound = artifact.v1[cell as usize];
    if !bound.is_finite() {
        bail!("controller has no finite guarantee at cell {cell}; refusing to simulate");
    }
    let budget = args
        .max_steps
        .or((scenario.sim.max_steps > 0).then_some(scenario.sim.max_steps as usize))
        .unwrap_or_else(|| auto_step_budget(&model, bound));

    let sim = Simulator::new(&sys, grid, &model, &a1, &a2, &inputs);
    let t0 = Instant::now();
    let mut csv = String::from(
        "seed,strategy,steps,cost,bound,finished,visited_a1,stopped_in_a2,phase_switch,stop_step,fault\n",
    );
    let mut total = 0u64;
    let mut violations = 0u64;
    let mut worst = Cost::ZERO;
    for &strategy in &strategies {
        let reports = sim.run_batch(
            &x0,
            episodes,
            base_seed,
            strategy,
            budget,
            &artifact.mu1,
            &artifact.mu2,
            bound,
        );
        for e in &reports {
            total += 1;
            let ok = e.finished && e.visited_a1 && e.stopped_in_a2 && e.bound_ok();
            if !ok {
                violations += 1;
            }
            if e.cost.is_finite() && e.cost > worst {
                worst = e.cost;
            }
        }
        csv.push_str(&episode_rows(&reports, strategy, base_seed));
        if args.dump_traj > 0 {
            dump_trajectories(&args.out, &reports, args.dump_traj)?;
        }
    }
    std::fs::write(args.out.join("episodes.csv"), csv)?;

    let summary = serde_json::json!({
        "controller": args.controller.display().to_string(),
        "scenario": scenario.name,
        "x0": x0,
        "x0_cell": cell,
        "bound": bound.value(),
        "episodes": total,
        "violations": violations,
        "worst_cost": worst.value(),
        "step_budget": budget,
        "strategies": strategies.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "sim_seconds": t0.elapsed().as_secs_f64(),
    });
    std::fs::write(
        args.out.join("summary.json"),
        format!("{:#}\n", summary),
    )?;

    println!(
        "{total} episodes, worst cost {} against bound {}, {violations} violations",
        worst.value(),
        bound.value()
    );
    if violations > 0 {
        eprintln!("closed-loop guarantee violated; see episodes.csv");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(args: &SelftestArgs) -> Result<ExitCode> {
    let t0 = Instant::now();

    if args.corrupt {
        // Deliberately break one solved value and prove the comparison
        // catches it.
        let inst = gadget();
        let oracle = product_value(&inst)?;
        let sol = twophase::synthesize(&inst.sys, &inst.a1, &inst.a2, |x| inst.g0[x as usize], inst.running())?;
        let mut v1 = sol.v1;
        let broken = v1
            .iter()
            .position(|v| v.is_finite())
            .expect("gadget has finite values");
        v1[broken] = v1[broken] + Cost::new(0.5);
        for (x, v) in v1.iter().enumerate() {
            let want = oracle[inst.initial_pid(x as u32) as usize];
            if *v != want {
                eprintln!(
                    "corrupted value detected: state {x} has {:?}, oracle says {:?}",
                    v, want
                );
                return Ok(ExitCode::FAILURE);
            }
        }
        bail!("corruption was not detected; the checker is broken");
    }

    let report = check_instance(&gadget())?;
    if !(report.values_match && report.naive_never_better && report.naive_gap) {
        eprintln!("counterexample: the shipped 6-state gadget");
        return Ok(ExitCode::FAILURE);
    }
    println!("gadget: composed matches oracle, baseline strictly worse");

    let mut gaps = 0u64;
    for corpus in [false, true] {
        let limits = InstanceLimits { phase_coupled: corpus, ..InstanceLimits::default() };
        for k in 0..args.instances {
            let seed = args.seed + k;
            let inst = random_instance(seed, limits);
            let report = check_instance(&inst)?;
            if !report.values_match {
                eprintln!(
                    "counterexample: instance seed {seed} (phase_coupled {corpus}): composed value differs from the oracle"
                );
                return Ok(ExitCode::FAILURE);
            }
            if !report.naive_never_better {
                eprintln!(
                    "counterexample: instance seed {seed} (phase_coupled {corpus}): baseline beat the composed controller"
                );
                return Ok(ExitCode::FAILURE);
            }
            if corpus && report.naive_gap {
                gaps += 1;
            }
        }
    }
    if args.instances > 0 {
        let rate = 100.0 * gaps as f64 / args.instances as f64;
        println!(
            "{} plain and {} phase-coupled instances match the oracle; baseline strictly worse on {gaps} ({rate:.0}%)",
            args.instances, args.instances
        );
    } else {
        println!("no random instances requested");
    }
    println!("selftest passed in {:.1}s", t0.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let artifact = io::load_controller(&args.controller)?;
    let grid = &artifact.grid;
    if args.axes.len() != 2 {
        bail!("--axes needs exactly two axes");
    }
    let axes = (args.axes[0], args.axes[1]);
    let mut fixed = Vec::new();
    for pair in &args.fix {
        let (a, i) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--fix entries look like axis=index, got {pair:?}"))?;
        fixed.push((a.parse::<usize>()?, i.parse::<u32>()?));
    }
    match args.kind.as_str() {
        "v1" => io::write_value_slice(&args.out, grid, &artifact.v1, axes, &fixed)?,
        "v2" => io::write_value_slice(&args.out, grid, &artifact.v2, axes, &fixed)?,
        "mu1" => io::write_policy_slice(&args.out, grid, &artifact.mu1, axes, &fixed)?,
        "mu2" => io::write_policy_slice(&args.out, grid, &artifact.mu2, axes, &fixed)?,
        other => bail!("unknown kind {other:?}; expected v1, v2, mu1, or mu2"),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
