//! Manual probe for the desk scenario: run with
//! `cargo test -p stopover --test desk_probe -- --ignored --nocapture`.

use std::path::Path;
use std::time::Instant;
use stopover::abstraction::compute_transitions;
use stopover::scenario::Scenario;
use stopover::sim::{Disturbance, Simulator};
use stopover::solver::BackwardAdjacency;
use stopover::twophase::{compose_phase1, naive_phase1, solve_phase2};

fn vm_hwm_mb() -> f64 {
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches(" kB").trim().parse().unwrap();
            return kb / 1024.0;
        }
    }
    0.0
}

#[test]
#[ignore]
fn desk_probe() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/vehicle_desk.toml");
    let scenario = Scenario::load(Path::new(path)).unwrap();
    let grid = scenario.build_grid().unwrap();
    let sys = scenario.sampled_system().unwrap();
    let inputs = scenario.input_points();

    let t0 = Instant::now();
    let abs = compute_transitions(&sys, &grid, &inputs).unwrap();
    println!(
        "abstraction {:.1}s transitions {} unsafe {}",
        t0.elapsed().as_secs_f64(),
        abs.transition_count(),
        abs.unsafe_pair_count()
    );

    let model = scenario.cost_model().unwrap();
    let running = model.abstracted(&grid, &inputs);
    let (a1, a2) = scenario.task_masks(&grid);
    let g0 = model.terminal;
    let rc = |x, y, u| running.eval(x, y, u);

    let t = Instant::now();
    let backward = BackwardAdjacency::build(&abs).unwrap();
    println!("backward {:.1}s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let p2 = solve_phase2(&abs, &backward, &a2, |_| g0, rc).unwrap();
    let (p1, cov) = compose_phase1(&abs, &backward, &a1, &p2.values, rc).unwrap();
    println!("two-phase solve {:.1}s", t.elapsed().as_secs_f64());
    println!(
        "coverage {}/{}  v2 finite {}  v1 finite {}",
        cov.winning_cells,
        cov.target_cells,
        p2.values.iter().filter(|c| c.is_finite()).count(),
        p1.values.iter().filter(|c| c.is_finite()).count()
    );

    let t = Instant::now();
    let naive = naive_phase1(&abs, &backward, &a1, &p2.values, rc).unwrap();
    println!("naive solve {:.1}s", t.elapsed().as_secs_f64());
    println!("synthesis total {:.1}s  VmHWM {:.0} MB", t0.elapsed().as_secs_f64(), vm_hwm_mb());

    let x0 = scenario.sim.x0.clone();
    let cell = grid.quantize(&x0);
    println!("x0 {:?} cell {:?}", x0, grid.coords(cell));
    let v1x0 = p1.values[cell as usize];
    let nx0 = naive.actual[cell as usize];
    println!("v1(x0) {v1x0:?}  naive actual(x0) {nx0:?}");
    if v1x0.is_finite() && nx0.is_finite() {
        let gap = (nx0.value() - v1x0.value()) / nx0.value();
        println!("static gap {:.1}%", gap * 100.0);
    }

    // A few closed-loop episodes under each controller and strategy.
    let a1r = scenario.a1_region();
    let a2r = scenario.a2_region();
    let sim = Simulator::new(&sys, &grid, &model, &a1r, &a2r, &inputs);
    let budget = stopover::sim::auto_step_budget(&model, v1x0);
    println!("step budget {budget}");
    for strategy in [Disturbance::Uniform, Disturbance::Corners] {
        let t = Instant::now();
        let batch = sim.run_batch(&x0, 50, 99, strategy, budget, &p1.policy, &p2.policy, v1x0);
        let worst = batch.iter().map(|e| e.cost.value()).fold(0.0f64, f64::max);
        let all_ok = batch
            .iter()
            .all(|e| e.finished && e.visited_a1 && e.stopped_in_a2 && e.bound_ok());
        println!(
            "composed {} 50 eps {:.1}s worst {:.2} vs bound {:.2} ok {}",
            strategy.name(),
            t.elapsed().as_secs_f64(),
            worst,
            v1x0.value(),
            all_ok
        );
        let nbatch = sim.run_batch(&x0, 50, 99, strategy, budget, &naive.mu1, &p2.policy, nx0);
        let nworst = nbatch.iter().map(|e| e.cost.value()).fold(0.0f64, f64::max);
        let nok = nbatch
            .iter()
            .all(|e| e.finished && e.visited_a1 && e.stopped_in_a2 && e.bound_ok());
        println!(
            "naive    {} 50 eps worst {:.2} vs bound {:.2} ok {}  sim gap {:.1}%",
            strategy.name(),
            nworst,
            nx0.value(),
            nok,
            (nworst - worst) / nworst * 100.0
        );
    }
}
