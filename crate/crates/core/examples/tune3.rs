// inspect individual missed instances
use faultscope_core::gammoid::Gammoid;
use faultscope_core::graph::NodeId;
use faultscope_core::reconstruct::{solve, ReconstructionProblem};
use faultscope_core::simulate::{make_twin, InputShape, TwinConfig};

fn fit_with_ground(exp: &faultscope_core::simulate::TwinExperiment, ground: Vec<NodeId>) -> f64 {
    let mut prob = ReconstructionProblem::new(
        exp.system.clone(), exp.y_data.clone(), ground, 1e-6,
    ).unwrap();
    prob.solver.max_iters = 20000;
    prob.solver.objective_tol = 1e-13;
    let r = solve(&prob).unwrap();
    r.fit_norm
}

fn main() {
    let mut misses = 0;
    for seed in 0..50u64 {
        let exp = make_twin(&TwinConfig {
            n: 30, sensors: 10, k: 1, seed, shape: InputShape::Step, dt: 0.05, horizon: 5.0,
        }).unwrap();
        let gam = Gammoid::new(
            exp.graph.clone(), exp.graph.nodes().collect(), exp.system.sensors.clone(),
        ).unwrap();
        if gam.spark_exact(2).value() < 3 { continue; }
        let prob = ReconstructionProblem::new(
            exp.system.clone(), exp.y_data.clone(), exp.system.nodes(), 0.01,
        ).unwrap();
        let r = solve(&prob).unwrap();
        let norms = r.w_hat.channel_norms();
        let mut order: Vec<usize> = (0..norms.len()).collect();
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
        let target = exp.meta.targets[0];
        let winner = r.w_hat.channels[order[0]];
        if winner == target { continue; }
        misses += 1;
        if misses > 6 { break; }
        let t_rank = order.iter().position(|&c| r.w_hat.channels[c] == target).unwrap();
        let y_norm = exp.y_data.pq_norm(2.0).unwrap();
        let fit_t = fit_with_ground(&exp, vec![target]);
        let fit_w = fit_with_ground(&exp, vec![winner]);
        let e_tw = exp.graph.has_edge(target.0, winner.0);
        let e_wt = exp.graph.has_edge(winner.0, target.0);
        let w_true_norm = exp.true_input.pq_norm(2.0).unwrap();
        println!(
            "seed {seed}: target {target} (rank {t_rank}, norm {:.3}), winner {winner} (norm {:.3}, wtrue {w_true_norm:.3}); fit restricted: target {:.2e}, winner {:.2e} (|y|={:.2}); edges t->w {e_tw}, w->t {e_wt}; sens_t={} sens_w={}",
            norms[order[t_rank]], norms[order[0]], fit_t, fit_w, y_norm,
            exp.system.sensors.contains(&target), exp.system.sensors.contains(&winner),
        );
    }
}
