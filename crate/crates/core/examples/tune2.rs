// per-beta hit-rate diagnosis for the sparse recovery regime
use faultscope_core::gammoid::Gammoid;
use faultscope_core::reconstruct::{solve, ReconstructionProblem};
use faultscope_core::simulate::{make_twin, InputShape, TwinConfig};
use rayon::prelude::*;

fn main() {
    let shape = match std::env::args().nth(1).as_deref() {
        Some("pulse") => InputShape::Pulse,
        Some("smooth") => InputShape::SmoothRandom,
        _ => InputShape::Step,
    };
    let betas = [0.001, 0.003, 0.01, 0.03, 0.1, 0.3];
    let rows: Vec<(u64, bool, Vec<(bool, usize, bool)>)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let exp = make_twin(&TwinConfig {
                n: 30, sensors: 10, k: 1, seed, shape, dt: 0.05, horizon: 5.0,
            }).unwrap();
            let gam = Gammoid::new(
                exp.graph.clone(),
                exp.graph.nodes().collect(),
                exp.system.sensors.clone(),
            ).unwrap();
            let spark_ok = gam.spark_exact(2).value() >= 3;
            let per_beta: Vec<(bool, usize, bool)> = betas.iter().map(|&beta| {
                let prob = ReconstructionProblem::new(
                    exp.system.clone(), exp.y_data.clone(), exp.system.nodes(), beta,
                ).unwrap();
                let r = solve(&prob).unwrap();
                let norms = r.w_hat.channel_norms();
                let mut order: Vec<usize> = (0..norms.len()).collect();
                order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
                let target_col = r.w_hat.channel_index(exp.meta.targets[0]).unwrap();
                let rank = order.iter().position(|&c| c == target_col).unwrap();
                (rank == 0, r.support.len(), r.converged)
            }).collect();
            (seed, spark_ok, per_beta)
        })
        .collect();
    for (bi, beta) in betas.iter().enumerate() {
        let sparkable = rows.iter().filter(|r| r.1).count();
        let hits = rows.iter().filter(|r| r.1 && r.2[bi].0).count();
        let conv = rows.iter().filter(|r| r.1 && r.2[bi].2).count();
        let med_supp: Vec<usize> = {
            let mut s: Vec<usize> = rows.iter().filter(|r| r.1).map(|r| r.2[bi].1).collect();
            s.sort();
            s
        };
        println!(
            "beta {beta:>6}: hits {hits}/{sparkable}, converged {conv}, support median {} max {}",
            med_supp[med_supp.len() / 2], med_supp.last().unwrap()
        );
    }
}
