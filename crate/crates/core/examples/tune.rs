// scratch harness for calibrating the statistical acceptance regimes
use faultscope_core::cluster::{iterate_localization, LocalizationOptions};
use faultscope_core::gammoid::Gammoid;
use faultscope_core::reconstruct::{solve, ReconstructionProblem};
use faultscope_core::simulate::{make_twin, InputShape, TwinConfig};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let shape = match std::env::args().nth(1).as_deref() {
        Some("pulse") => InputShape::Pulse,
        Some("smooth") => InputShape::SmoothRandom,
        _ => InputShape::Step,
    };
    let mode = std::env::args().nth(2).unwrap_or_else(|| "ex1".into());

    if mode == "ex1" {
        let t0 = Instant::now();
        let results: Vec<(bool, bool, f64)> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let exp = make_twin(&TwinConfig {
                    n: 30,
                    sensors: 10,
                    k: 1,
                    seed,
                    shape,
                    dt: 0.05,
                    horizon: 5.0,
                })
                .unwrap();
                let gam = Gammoid::new(
                    exp.graph.clone(),
                    exp.graph.nodes().collect(),
                    exp.system.sensors.clone(),
                )
                .unwrap();
                let spark_ok = gam.spark_exact(2).value() >= 3;
                let t = Instant::now();
                let prob = ReconstructionProblem::new(
                    exp.system.clone(),
                    exp.y_data.clone(),
                    exp.system.nodes(),
                    0.01,
                )
                .unwrap();
                let result = solve(&prob).unwrap();
                let norms = result.w_hat.channel_norms();
                let argmax = norms
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                let hit = result.w_hat.channels[argmax] == exp.meta.targets[0];
                (spark_ok, hit, t.elapsed().as_secs_f64())
            })
            .collect();
        let sparkable = results.iter().filter(|r| r.0).count();
        let hits = results.iter().filter(|r| r.0 && r.1).count();
        let misses_all = results.iter().filter(|r| !r.1).count();
        let tmax = results.iter().map(|r| r.2).fold(0.0_f64, f64::max);
        println!(
            "ex1 shape={shape:?}: sparkable {sparkable}/50, hits {hits}/{sparkable} ({:.0}%), total misses {misses_all}, max solve {tmax:.2}s, wall {:.1}s",
            100.0 * hits as f64 / sparkable.max(1) as f64,
            t0.elapsed().as_secs_f64()
        );
    } else {
        let t0 = Instant::now();
        let results: Vec<(bool, bool, usize)> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let exp = make_twin(&TwinConfig {
                    n: 30,
                    sensors: 5,
                    k: 1,
                    seed,
                    shape,
                    dt: 0.05,
                    horizon: 5.0,
                })
                .unwrap();
                let trace =
                    iterate_localization(&exp, 1, 5, &LocalizationOptions::default()).unwrap();
                let target = exp.meta.targets[0];
                let round1 = &trace.rounds[0];
                let top1 = round1
                    .scores
                    .first()
                    .map(|&(ci, _)| round1.clusters[ci].contains(&target))
                    .unwrap_or(false);
                let final_ok = trace.final_ground.contains(&target);
                (top1, final_ok, trace.rounds.len())
            })
            .collect();
        let top1 = results.iter().filter(|r| r.0).count();
        let final_ok = results.iter().filter(|r| r.1).count();
        let max_rounds = results.iter().map(|r| r.2).max().unwrap();
        println!(
            "ex3 shape={shape:?}: round-1 top cluster {top1}/50, final contains {final_ok}/50, max rounds {max_rounds}, wall {:.1}s",
            t0.elapsed().as_secs_f64()
        );
    }
}
