// channel response-energy statistics and miss anatomy
use faultscope_core::gammoid::Gammoid;
use faultscope_core::graph::NodeId;
use faultscope_core::reconstruct::{solve, ReconstructionProblem};
use faultscope_core::simulate::*;
use nalgebra::DMatrix;

fn main() {
    for seed in 0..12u64 {
        let exp = make_twin(&TwinConfig {
            n: 30, sensors: 10, k: 1, seed, shape: InputShape::Step, dt: 0.05, horizon: 5.0,
        }).unwrap();
        let gam = Gammoid::new(
            exp.graph.clone(), exp.graph.nodes().collect(), exp.system.sensors.clone(),
        ).unwrap();
        if gam.spark_exact(2).value() < 3 { continue; }
        // response energy per channel: unit step injected at node i alone
        let rows = exp.system.steps() + 1;
        let energies: Vec<f64> = (0..30).map(|i| {
            let mut values = DMatrix::zeros(rows, 1);
            for k in 0..rows { if k as f64 * 0.05 >= 1.0 { values[(k,0)] = 1.0; } }
            let w = SignalBundle { channels: vec![NodeId(i)], dt: 0.05, values, p: 2.0 };
            let sys0 = LinearSystem::new(exp.system.a.clone(), exp.system.sensors.clone(),
                nalgebra::DVector::zeros(30), 5.0, 0.05).unwrap();
            let (_, y) = simulate(&sys0, &w).unwrap();
            y.pq_norm(2.0).unwrap()
        }).collect();
        let emax = energies.iter().cloned().fold(0.0f64, f64::max);
        let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let target = exp.meta.targets[0];
        let prob = ReconstructionProblem::new(
            exp.system.clone(), exp.y_data.clone(), exp.system.nodes(), 0.01,
        ).unwrap();
        let r = solve(&prob).unwrap();
        let norms = r.w_hat.channel_norms();
        let argmax = norms.iter().enumerate().max_by(|a,b| a.1.total_cmp(b.1)).unwrap().0;
        let winner = r.w_hat.channels[argmax];
        let penalty: f64 = norms.iter().sum();
        let alpha = spectral_abscissa(&exp.system.a);
        println!(
            "seed {seed}: {} e_target {:.2} e_winner {:.2} e-range [{:.2},{:.2}] | pen {penalty:.2} vs wtrue 3.0, fit {:.2e}, alpha(shifted) {alpha:.2}",
            if winner == target { "HIT " } else { "MISS" },
            energies[target.0], energies[winner.0], emin, emax, fit = r.fit_norm,
        );
    }
}
