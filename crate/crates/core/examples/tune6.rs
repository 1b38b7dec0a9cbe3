// generator-variant experiments: weight law x horizon
use faultscope_core::graph::NodeId;
use faultscope_core::reconstruct::{solve, ReconstructionProblem};
use faultscope_core::simulate::*;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn gen_a(n: usize, rng: &mut ChaCha8Rng, wlaw: &str) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for src in 0..n {
        let mut targets: Vec<usize> = Vec::new();
        while targets.len() < 2 {
            let dst = rng.random_range(0..n);
            if dst != src && !targets.contains(&dst) { targets.push(dst); }
        }
        for dst in targets {
            let mag: f64 = match wlaw {
                "unit" => 1.0,
                "narrow" => rng.random_range(0.7..=1.0),
                _ => rng.random_range(0.25..=1.0),
            };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            a[(dst, src)] = sign * mag;
        }
    }
    let margin: f64 = std::env::var("MARGIN").ok().and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let alpha = spectral_abscissa(&a);
    for i in 0..n { a[(i, i)] -= alpha + margin; }
    a
}

fn main() {
    let wlaw = std::env::args().nth(1).unwrap_or("spec".into());
    let horizon: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(5.0);
    let n = 30; let dt = 0.05;
    let stats: Vec<(bool, bool)> = (0..50u64).into_par_iter().map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gen_a(n, &mut rng, &wlaw);
        let mut si = rand::seq::index::sample(&mut rng, n, 10).into_vec(); si.sort();
        let sensors: Vec<NodeId> = si.into_iter().map(NodeId).collect();
        let target = NodeId(rng.random_range(0..n));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let sys = LinearSystem::new(a, sensors, x0, horizon, dt).unwrap();
        let rows = sys.steps() + 1;
        let mut values = DMatrix::zeros(rows, 1);
        for k in 0..rows { if k as f64 * dt >= 0.2 * horizon { values[(k, 0)] = std::env::var("AMP").ok().and_then(|s| s.parse().ok()).unwrap_or(1.5); } }
        let w = SignalBundle { channels: vec![target], dt, values, p: 2.0 };
        let (_, y) = simulate(&sys, &w).unwrap();
        let gam = faultscope_core::gammoid::Gammoid::new(
            sys.influence_graph(), sys.nodes(), sys.sensors.clone()).unwrap();
        let spark_ok = gam.spark_exact(2).value() >= 3;
        let mut prob = ReconstructionProblem::new(sys.clone(), y, sys.nodes(), 0.01).unwrap();
        if std::env::var("TIGHT").is_ok() {
            prob.solver.max_iters = 20000;
            prob.solver.grad_tol = 1e-8;
            prob.solver.objective_tol = 1e-11;
        }
        let r = solve(&prob).unwrap();
        let norms = r.w_hat.channel_norms();
        let am = norms.iter().enumerate().max_by(|x, z| x.1.total_cmp(z.1)).unwrap().0;
        (spark_ok, r.w_hat.channels[am] == target)
    }).collect();
    let sp = stats.iter().filter(|s| s.0).count();
    let hits = stats.iter().filter(|s| s.0 && s.1).count();
    println!("wlaw={wlaw} T={horizon}: sparkable {sp}/50 hits {hits}/{sp} ({:.0}%)",
        100.0 * hits as f64 / sp.max(1) as f64);
}
