//! Group-sparse reconstruction of unknown inputs from sensor data.
//!
//! Minimizes J[w] = 1/2 ||Phi(w) - y_data||_2^2 + beta ||w||_1 over input
//! signals supported on a ground set of candidate nodes, where ||w||_1 sums
//! per-channel function norms: the channels form the sparsity groups. The
//! problem is discretized on the simulation grid (one decision variable per
//! channel per grid point, discretize-then-optimize), the smooth term's
//! gradient is exact for the discretized dynamics via one forward and one
//! reverse pass of the same integrator stencil, and the nonsmooth term is
//! handled by its exact proximal map, a channel-wise block soft threshold.
//!
//! All inner products carry the trapezoid quadrature weights, so discrete
//! norms converge to the integral norms and beta keeps its meaning when the
//! grid is refined. In that weighted space the update is plain accelerated
//! proximal descent with step 1/L, L estimated by power iteration and
//! guarded by a doubling backtrack.

use crate::graph::NodeId;
use crate::simulate::{trapezoid_weights, LinearSystem, SignalBundle, SimulateError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("regularization constant beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("ground set is empty")]
    EmptyGroundSet,
    #[error("ground node {0} out of range for {1} states")]
    GroundOutOfRange(usize, usize),
    #[error("duplicate ground node {0}")]
    DuplicateGround(usize),
    #[error("data channels must equal the system sensors")]
    DataChannelMismatch,
    #[error("signal channel {0} is not in the ground set")]
    ChannelNotInGround(usize),
    #[error("clusters do not partition the ground set")]
    NotAPartition,
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

/// Step-size rule for the proximal descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// 1/L with L from power iteration on the normal operator.
    AutoLipschitz,
    /// fixed step length
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub objective_tol: f64,
    pub step: StepRule,
    pub restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            grad_tol: 1e-6,
            objective_tol: 1e-8,
            step: StepRule::AutoLipschitz,
            restart: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionProblem {
    pub system: LinearSystem,
    pub y_data: SignalBundle,
    pub ground_set: Vec<NodeId>,
    pub beta: f64,
    /// reporting-only misfit threshold; no constraint is enforced
    pub epsilon: Option<f64>,
    pub solver: SolverConfig,
}

impl ReconstructionProblem {
    pub fn new(
        system: LinearSystem,
        y_data: SignalBundle,
        ground_set: Vec<NodeId>,
        beta: f64,
    ) -> Result<Self, ReconstructError> {
        if !(beta > 0.0) {
            return Err(ReconstructError::BadBeta(beta));
        }
        if ground_set.is_empty() {
            return Err(ReconstructError::EmptyGroundSet);
        }
        let n = system.dim();
        let mut seen = std::collections::HashSet::new();
        for &g in &ground_set {
            if g.0 >= n {
                return Err(ReconstructError::GroundOutOfRange(g.0, n));
            }
            if !seen.insert(g.0) {
                return Err(ReconstructError::DuplicateGround(g.0));
            }
        }
        if y_data.channels != system.sensors {
            return Err(ReconstructError::DataChannelMismatch);
        }
        if y_data.rows() != system.steps() + 1 || (y_data.dt - system.dt).abs() > 1e-12 * system.dt
        {
            return Err(ReconstructError::Simulate(SimulateError::GridMismatch {
                expected: system.steps() + 1,
                dt: system.dt,
                got: y_data.rows(),
                got_dt: y_data.dt,
            }));
        }
        Ok(ReconstructionProblem {
            system,
            y_data,
            ground_set,
            beta,
            epsilon: None,
            solver: SolverConfig::default(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// best iterate, one channel per ground node
    pub w_hat: SignalBundle,
    /// running best objective, non-increasing by construction
    pub objective_trace: Vec<f64>,
    /// ||Phi(w_hat) - y_data||_2 at the best iterate
    pub fit_norm: f64,
    /// channels above the support floor, with their norms
    pub support: Vec<(NodeId, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

/// Discretized forward/adjoint machinery shared by the public operations.
struct Discretization {
    a: DMatrix<f64>,
    a_t: DMatrix<f64>,
    ground_idx: Vec<usize>,
    sensor_idx: Vec<usize>,
    steps: usize,
    dt: f64,
    tau: Vec<f64>,
}

impl Discretization {
    fn new(sys: &LinearSystem, ground: &[NodeId]) -> Self {
        let steps = sys.steps();
        Discretization {
            a: sys.a.clone(),
            a_t: sys.a.transpose(),
            ground_idx: ground.iter().map(|g| g.0).collect(),
            sensor_idx: sys.sensors.iter().map(|z| z.0).collect(),
            steps,
            dt: sys.dt,
            tau: trapezoid_weights(steps + 1, sys.dt),
        }
    }

    fn n(&self) -> usize {
        self.a.nrows()
    }

    /// RK4 forward pass with controls u ((steps + 1) x channels) scattered
    /// onto the ground nodes; returns the sensor outputs.
    fn forward(&self, x0: &DVector<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let p = self.sensor_idx.len();
        let mut outputs = DMatrix::zeros(self.steps + 1, p);
        let scatter = |k: usize| -> DVector<f64> {
            let mut w = DVector::zeros(n);
            for (c, &ix) in self.ground_idx.iter().enumerate() {
                w[ix] = u[(k, c)];
            }
            w
        };
        let mut x = x0.clone();
        for (j, &ix) in self.sensor_idx.iter().enumerate() {
            outputs[(0, j)] = x[ix];
        }
        let dt = self.dt;
        let mut w_lo = scatter(0);
        for k in 0..self.steps {
            let w_hi = scatter(k + 1);
            let w_mid = (&w_lo + &w_hi) * 0.5;
            let k1 = &self.a * &x + &w_lo;
            let k2 = &self.a * (&x + &k1 * (dt / 2.0)) + &w_mid;
            let k3 = &self.a * (&x + &k2 * (dt / 2.0)) + &w_mid;
            let k4 = &self.a * (&x + &k3 * dt) + &w_hi;
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            for (j, &ix) in self.sensor_idx.iter().enumerate() {
                outputs[(k + 1, j)] = x[ix];
            }
            w_lo = w_hi;
        }
        outputs
    }

    /// Quadrature-weighted squared misfit: 1/2 sum_k tau_k |R_k|^2.
    fn misfit_value(&self, r: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for k in 0..r.nrows() {
            let tk = self.tau[k];
            for j in 0..r.ncols() {
                acc += tk * r[(k, j)] * r[(k, j)];
            }
        }
        0.5 * acc
    }

    /// Exact reverse-mode gradient of the misfit through the RK4 stencil.
    /// `r` is the output misfit Phi(u) - target; the result is the raw
    /// coordinate gradient d misfit / d u[k][c].
    fn adjoint(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let c = self.ground_idx.len();
        let dt = self.dt;
        let mut grad = DMatrix::zeros(self.steps + 1, c);
        let cost_term = |k: usize| -> DVector<f64> {
            let mut g = DVector::zeros(n);
            for (j, &ix) in self.sensor_idx.iter().enumerate() {
                g[ix] = self.tau[k] * r[(k, j)];
            }
            g
        };
        let mut lambda = cost_term(self.steps);
        for k in (0..self.steps).rev() {
            let l4 = &lambda * (dt / 6.0);
            let l3 = &lambda * (dt / 3.0) + &self.a_t * &l4 * dt;
            let l2 = &lambda * (dt / 3.0) + &self.a_t * &l3 * (dt / 2.0);
            let l1 = &lambda * (dt / 6.0) + &self.a_t * &l2 * (dt / 2.0);
            let mid = (&l2 + &l3) * 0.5;
            for (ci, &ix) in self.ground_idx.iter().enumerate() {
                grad[(k, ci)] += l1[ix] + mid[ix];
                grad[(k + 1, ci)] += l4[ix] + mid[ix];
            }
            lambda = cost_term(k) + &lambda + &self.a_t * (l1 + l2 + l3 + l4);
        }
        grad
    }

    /// D-weighted inner product sum_k tau_k <a_k, b_k>.
    fn dot_d(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for k in 0..a.nrows() {
            let tk = self.tau[k];
            for j in 0..a.ncols() {
                acc += tk * a[(k, j)] * b[(k, j)];
            }
        }
        acc
    }

    fn norm_d(&self, a: &DMatrix<f64>) -> f64 {
        self.dot_d(a, a).sqrt()
    }

    fn channel_norm_d(&self, a: &DMatrix<f64>, col: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..a.nrows() {
            acc += self.tau[k] * a[(k, col)] * a[(k, col)];
        }
        acc.sqrt()
    }

    /// Divide rows by the quadrature weights: coordinate gradient ->
    /// gradient with respect to the weighted inner product.
    fn precondition(&self, g: &mut DMatrix<f64>) {
        for k in 0..g.nrows() {
            let inv = 1.0 / self.tau[k];
            for j in 0..g.ncols() {
                g[(k, j)] *= inv;
            }
        }
    }

    /// Channel-wise block soft threshold in the weighted norm.
    fn prox(&self, v: &DMatrix<f64>, shrink: f64) -> DMatrix<f64> {
        let mut out = v.clone();
        for c in 0..v.ncols() {
            let norm = self.channel_norm_d(v, c);
            let factor = if norm > shrink { 1.0 - shrink / norm } else { 0.0 };
            for k in 0..v.nrows() {
                out[(k, c)] *= factor;
            }
        }
        out
    }

    /// Largest eigenvalue of the preconditioned normal operator
    /// D^{-1} Phi^T M Phi by power iteration in the weighted space.
    fn lipschitz(&self) -> f64 {
        let rows = self.steps + 1;
        let cols = self.ground_idx.len();
        let zero_x0 = DVector::zeros(self.n());
        // deterministic quasi-random start
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut v = DMatrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        let norm = self.norm_d(&v);
        if norm == 0.0 {
            return 1.0;
        }
        v /= norm;
        let mut lambda = 0.0_f64;
        for _ in 0..300 {
            let outputs = self.forward(&zero_x0, &v);
            let mut z = self.adjoint(&outputs);
            self.precondition(&mut z);
            let next = self.dot_d(&v, &z).max(0.0);
            let zn = self.norm_d(&z);
            if zn == 0.0 {
                return next.max(1e-30);
            }
            v = z / zn;
            if (next - lambda).abs() <= 1e-6 * next.max(1e-30) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.max(1e-30)
    }
}

/// Objective split (J, fit, penalty): J = fit^2 / 2 + beta * penalty with
/// fit the 2-2 norm of the output misfit and penalty the 2-1 norm of w.
pub fn objective(
    prob: &ReconstructionProblem,
    w: &SignalBundle,
) -> Result<(f64, f64, f64), ReconstructError> {
    for &c in &w.channels {
        if !prob.ground_set.contains(&c) {
            return Err(ReconstructError::ChannelNotInGround(c.0));
        }
    }
    let (_, y) = crate::simulate::simulate(&prob.system, w)?;
    let diff = SignalBundle {
        channels: y.channels.clone(),
        dt: y.dt,
        values: &y.values - &prob.y_data.values,
        p: 2.0,
    };
    let fit = diff.pq_norm(2.0).expect("q = 2 is valid");
    let penalty = w.pq_norm(1.0).expect("q = 1 is valid");
    Ok((0.5 * fit * fit + prob.beta * penalty, fit, penalty))
}

/// Gradient of the smooth misfit term 1/2 ||Phi(w) - y_data||_2^2 with
/// respect to every control variable (all ground channels, all grid
/// points), as raw partial derivatives matching finite differences.
pub fn adjoint_gradient(
    prob: &ReconstructionProblem,
    w: &SignalBundle,
) -> Result<SignalBundle, ReconstructError> {
    let disc = Discretization::new(&prob.system, &prob.ground_set);
    let rows = disc.steps + 1;
    let mut u = DMatrix::zeros(rows, prob.ground_set.len());
    for (c, &node) in w.channels.iter().enumerate() {
        let col = prob
            .ground_set
            .iter()
            .position(|&g| g == node)
            .ok_or(ReconstructError::ChannelNotInGround(node.0))?;
        for k in 0..rows.min(w.rows()) {
            u[(k, col)] = w.values[(k, c)];
        }
    }
    let outputs = disc.forward(&prob.system.x0, &u);
    let r = outputs - &prob.y_data.values;
    let grad = disc.adjoint(&r);
    Ok(SignalBundle {
        channels: prob.ground_set.clone(),
        dt: prob.system.dt,
        values: grad,
        p: 2.0,
    })
}

/// Accelerated proximal descent on the discretized problem. Returns the
/// best iterate; failure to converge within `max_iters` is reported in the
/// result, not as an error.
pub fn solve(prob: &ReconstructionProblem) -> Result<ReconstructionResult, ReconstructError> {
    let disc = Discretization::new(&prob.system, &prob.ground_set);
    let rows = disc.steps + 1;
    let cols = prob.ground_set.len();
    let cfg = &prob.solver;

    // affine split: Phi(u) = y0 + Phi_0(u); work against the residual target
    let zero_u = DMatrix::zeros(rows, cols);
    let y0 = disc.forward(&prob.system.x0, &zero_u);
    let target = &prob.y_data.values - &y0;

    let mut lip = match cfg.step {
        StepRule::AutoLipschitz => disc.lipschitz() * 1.02,
        StepRule::Fixed(step) => 1.0 / step,
    };

    let zero_x0 = DVector::zeros(disc.n());
    let smooth = |u: &DMatrix<f64>| -> (f64, DMatrix<f64>) {
        let out = disc.forward(&zero_x0, u);
        let r = out - &target;
        (disc.misfit_value(&r), r)
    };
    let penalty_of = |u: &DMatrix<f64>| -> f64 {
        (0..cols).map(|c| disc.channel_norm_d(u, c)).sum::<f64>()
    };

    let mut u = zero_u.clone();
    let mut y = u.clone();
    let mut t = 1.0_f64;

    let (f0, _) = smooth(&u);
    let mut best_obj = f0;
    let mut best_u = u.clone();
    let mut trace = vec![best_obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut flat_count = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let (f_y, r_y) = smooth(&y);
        let mut grad = disc.adjoint(&r_y);
        disc.precondition(&mut grad);

        // proximal step with doubling backtrack on the majorization bound
        let mut u_next;
        let mut f_next;
        loop {
            let v = &y - &grad / lip;
            u_next = disc.prox(&v, prob.beta / lip);
            let (f, _) = smooth(&u_next);
            f_next = f;
            let delta = &u_next - &y;
            let bound = f_y + disc.dot_d(&grad, &delta) + 0.5 * lip * disc.norm_d(&delta).powi(2);
            if f_next <= bound + 1e-12 * bound.abs().max(1.0) {
                break;
            }
            lip *= 2.0;
        }
        let obj = f_next + prob.beta * penalty_of(&u_next);

        let improved = obj < best_obj;
        let prev_best = best_obj;
        if improved {
            best_obj = obj;
            best_u = u_next.clone();
        }
        trace.push(best_obj);

        // gradient-mapping stationarity in the weighted norm
        let step_norm = disc.norm_d(&(&u_next - &y)) * lip;
        if step_norm < cfg.grad_tol {
            converged = true;
            u = u_next;
            break;
        }

        // momentum with optional gradient restart
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let delta = &u_next - &u;
        let restart = cfg.restart && disc.dot_d(&(&y - &u_next), &delta) > 0.0;
        if restart {
            t = 1.0;
            y = u_next.clone();
        } else {
            t = t_next;
            y = &u_next + &delta * momentum;
        }
        u = u_next;

        // objective stall detection on the running best
        let rel_drop = (prev_best - best_obj) / prev_best.abs().max(1e-30);
        if rel_drop < cfg.objective_tol {
            flat_count += 1;
            if flat_count >= 5 {
                converged = true;
                break;
            }
        } else {
            flat_count = 0;
        }
    }
    let _ = u;

    let w_hat = SignalBundle {
        channels: prob.ground_set.clone(),
        dt: prob.system.dt,
        values: best_u,
        p: 2.0,
    };
    let (_, fit, _) = objective(prob, &w_hat)?;
    let support = w_hat.support();
    Ok(ReconstructionResult {
        w_hat,
        objective_trace: trace,
        fit_norm: fit,
        support,
        converged,
        iterations,
    })
}

/// Per-cluster sums of reconstructed channel norms, ranked descending
/// (ties broken by cluster position). `clusters` must partition the
/// problem's ground set.
pub fn cluster_score(
    result: &ReconstructionResult,
    clusters: &[Vec<NodeId>],
) -> Result<Vec<(usize, f64)>, ReconstructError> {
    let ground: std::collections::BTreeSet<usize> =
        result.w_hat.channels.iter().map(|c| c.0).collect();
    let mut covered = std::collections::BTreeSet::new();
    for cluster in clusters {
        for &node in cluster {
            if !ground.contains(&node.0) || !covered.insert(node.0) {
                return Err(ReconstructError::NotAPartition);
            }
        }
    }
    if covered != ground {
        return Err(ReconstructError::NotAPartition);
    }
    let norms = result.w_hat.channel_norms();
    let mut scores: Vec<(usize, f64)> = clusters
        .iter()
        .enumerate()
        .map(|(ci, cluster)| {
            let score = cluster
                .iter()
                .map(|node| {
                    let col = result
                        .w_hat
                        .channel_index(*node)
                        .expect("partition checked above");
                    norms[col]
                })
                .sum();
            (ci, score)
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{make_twin, simulate, InputShape, TwinConfig};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn twin(n: usize, sensors: usize, seed: u64) -> crate::simulate::TwinExperiment {
        make_twin(&TwinConfig {
            n,
            sensors,
            k: 1,
            seed,
            shape: InputShape::Pulse,
            dt: 0.05,
            horizon: 2.0,
        })
        .unwrap()
    }

    #[test]
    fn objective_splits_cleanly() {
        let exp = twin(5, 2, 3);
        let prob = ReconstructionProblem::new(
            exp.system.clone(),
            exp.y_data.clone(),
            exp.system.nodes(),
            0.01,
        )
        .unwrap();
        let zero = SignalBundle::zeros(prob.ground_set.clone(), 0.05, exp.y_data.rows());
        let (j, fit, penalty) = objective(&prob, &zero).unwrap();
        assert_eq!(penalty, 0.0);
        // with w = 0 the misfit is exactly the residual norm
        let r = crate::simulate::residual(&exp.y_data, &exp.system).unwrap();
        let rn = r.pq_norm(2.0).unwrap();
        assert_abs_diff_eq!(fit, rn, epsilon = 1e-10);
        assert_abs_diff_eq!(j, 0.5 * rn * rn, epsilon = 1e-10);

        // doubling beta doubles only the penalty term
        let mut prob2 = prob.clone();
        prob2.beta = 0.02;
        let w = SignalBundle {
            values: DMatrix::from_element(exp.y_data.rows(), prob.ground_set.len(), 0.3),
            ..zero
        };
        let (j1, f1, p1) = objective(&prob, &w).unwrap();
        let (j2, f2, p2) = objective(&prob2, &w).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(p1, p2);
        assert_abs_diff_eq!(j2 - j1, 0.01 * p1, epsilon = 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_zero_residual() {
        let exp = twin(4, 2, 9);
        let prob = ReconstructionProblem::new(
            exp.system.clone(),
            exp.y_data.clone(),
            exp.true_input.channels.clone(),
            0.01,
        )
        .unwrap();
        let grad = adjoint_gradient(&prob, &exp.true_input).unwrap();
        assert!(grad.values.abs().max() <= 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let exp = twin(5, 2, 21);
        let prob = ReconstructionProblem::new(
            exp.system.clone(),
            exp.y_data.clone(),
            exp.system.nodes(),
            0.01,
        )
        .unwrap();
        let rows = exp.y_data.rows();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let w = SignalBundle {
            channels: prob.ground_set.clone(),
            dt: prob.system.dt,
            values: DMatrix::from_fn(rows, prob.ground_set.len(), |_, _| {
                rng.random_range(-1.0..1.0)
            }),
            p: 2.0,
        };
        let grad = adjoint_gradient(&prob, &w).unwrap();

        let smooth = |w: &SignalBundle| -> f64 {
            let (_, fit, _) = objective(&prob, w).unwrap();
            0.5 * fit * fit
        };
        let h = 1e-5;
        let mut fd_scale = 0.0_f64;
        let mut max_abs = 0.0_f64;
        let mut worst = 0.0_f64;
        // spot-check a deterministic subset of coordinates
        for (k, c) in (0..rows).step_by(7).flat_map(|k| (0..5).map(move |c| (k, c))) {
            let mut wp = w.clone();
            wp.values[(k, c)] += h;
            let mut wm = w.clone();
            wm.values[(k, c)] -= h;
            let fd = (smooth(&wp) - smooth(&wm)) / (2.0 * h);
            fd_scale = fd_scale.max(fd.abs());
            let diff = (grad.values[(k, c)] - fd).abs();
            if diff > max_abs {
                max_abs = diff;
                worst = fd;
            }
        }
        let rel = max_abs / fd_scale.max(1e-12);
        assert!(rel <= 1e-5, "relative gradient error {rel} (fd {worst})");
    }

    #[test]
    fn gradient_is_linear_in_the_residual() {
        let exp = twin(4, 2, 13);
        let scaled = SignalBundle {
            values: &exp.y_data.values * 2.0,
            ..exp.y_data.clone()
        };
        // at w = 0, Phi(0) is the closed output y0 and the gradient is
        // Phi^T M (y0 - y_data); doubling the mismatch doubles it
        let mk = |y: SignalBundle| {
            ReconstructionProblem::new(exp.system.clone(), y, exp.system.nodes(), 0.01).unwrap()
        };
        let zero = SignalBundle::zeros(exp.system.nodes(), exp.y_data.dt, exp.y_data.rows());
        let g1 = adjoint_gradient(&mk(exp.y_data.clone()), &zero).unwrap();
        let g2 = adjoint_gradient(&mk(scaled), &zero).unwrap();
        // grad at fixed w is affine in y_data, so g(2y) - g(y) = g(y) - g(0)
        let y_zero = SignalBundle {
            values: DMatrix::zeros(exp.y_data.rows(), exp.y_data.channels.len()),
            ..exp.y_data.clone()
        };
        let g0 = adjoint_gradient(&mk(y_zero), &zero).unwrap();
        let lhs = &g2.values - &g1.values;
        let rhs = &g1.values - &g0.values;
        assert!((lhs - rhs).abs().max() <= 1e-9);
    }

    #[test]
    fn zero_residual_data_gives_zero_solution() {
        let exp = twin(5, 2, 31);
        let zero_in = SignalBundle::zeros(vec![], exp.y_data.dt, exp.y_data.rows());
        let (_, y0) = simulate(&exp.system, &zero_in).unwrap();
        let prob =
            ReconstructionProblem::new(exp.system.clone(), y0, exp.system.nodes(), 0.01).unwrap();
        let result = solve(&prob).unwrap();
        assert!(result.w_hat.values.abs().max() <= 1e-9);
        assert!(result.support.is_empty());
        assert!(result.objective_trace.last().unwrap() <= &1e-12);
    }

    #[test]
    fn objective_trace_is_non_increasing_and_beats_zero() {
        let exp = twin(6, 3, 41);
        let prob = ReconstructionProblem::new(
            exp.system.clone(),
            exp.y_data.clone(),
            exp.system.nodes(),
            0.01,
        )
        .unwrap();
        let result = solve(&prob).unwrap();
        for pair in result.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
        let zero = SignalBundle::zeros(prob.ground_set.clone(), 0.05, exp.y_data.rows());
        let (j_zero, _, _) = objective(&prob, &zero).unwrap();
        assert!(*result.objective_trace.last().unwrap() <= j_zero);
    }

    #[test]
    fn convexity_witness() {
        let exp = twin(4, 2, 51);
        let prob = ReconstructionProblem::new(
            exp.system.clone(),
            exp.y_data.clone(),
            exp.system.nodes(),
            0.05,
        )
        .unwrap();
        let rows = exp.y_data.rows();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut mk = |rng: &mut ChaCha8Rng| SignalBundle {
            channels: prob.ground_set.clone(),
            dt: prob.system.dt,
            values: DMatrix::from_fn(rows, prob.ground_set.len(), |_, _| {
                rng.random_range(-1.0..1.0)
            }),
            p: 2.0,
        };
        for _ in 0..10 {
            let w1 = mk(&mut rng);
            let w2 = mk(&mut rng);
            let lam: f64 = rng.random_range(0.01..0.99);
            let mix = SignalBundle {
                values: &w1.values * lam + &w2.values * (1.0 - lam),
                ..w1.clone()
            };
            let (j1, _, _) = objective(&prob, &w1).unwrap();
            let (j2, _, _) = objective(&prob, &w2).unwrap();
            let (jm, _, _) = objective(&prob, &mix).unwrap();
            assert!(jm <= lam * j1 + (1.0 - lam) * j2 + 1e-10);
        }
    }

    #[test]
    fn prox_satisfies_group_lasso_optimality() {
        let exp = twin(3, 1, 61);
        let disc = Discretization::new(&exp.system, &exp.system.nodes());
        let rows = disc.steps + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v = DMatrix::from_fn(rows, 3, |_, _| rng.random_range(-1.0..1.0));
            let shrink = rng.random_range(0.01..0.8);
            let u = disc.prox(&v, shrink);
            for c in 0..3 {
                let un = disc.channel_norm_d(&u, c);
                if un > 0.0 {
                    // v - u = shrink * u / ||u||
                    for k in 0..rows {
                        let lhs = v[(k, c)] - u[(k, c)];
                        let rhs = shrink * u[(k, c)] / un;
                        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
                    }
                } else {
                    // subgradient condition: ||v_c|| <= shrink
                    assert!(disc.channel_norm_d(&v, c) <= shrink + 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_integrator_recovers_pulse_as_beta_vanishes() {
        // xdot = w on a single fully measured state
        let sys = LinearSystem::new(
            DMatrix::zeros(1, 1),
            vec![NodeId(0)],
            nalgebra::DVector::zeros(1),
            2.0,
            0.01,
        )
        .unwrap();
        let rows = sys.steps() + 1;
        let mut values = DMatrix::zeros(rows, 1);
        for k in 0..rows {
            let t = k as f64 * 0.01;
            if (0.5..1.0).contains(&t) {
                values[(k, 0)] = 1.0;
            }
        }
        let w_true = SignalBundle {
            channels: vec![NodeId(0)],
            dt: 0.01,
            values,
            p: 2.0,
        };
        let (_, y) = simulate(&sys, &w_true).unwrap();

        // independent route: with full measurement the unregularized problem
        // inverts by differentiating the data
        let mut w_fd = vec![0.0; rows];
        for k in 1..rows - 1 {
            w_fd[k] = (y.values[(k + 1, 0)] - y.values[(k - 1, 0)]) / (2.0 * 0.01);
        }
        let mid = rows / 2;
        assert!((w_fd[mid] - w_true.values[(mid, 0)]).abs() <= 0.51);

        let mut best_rel = f64::INFINITY;
        for beta in [1e-3, 1e-4, 1e-5, 1e-6] {
            let mut prob =
                ReconstructionProblem::new(sys.clone(), y.clone(), vec![NodeId(0)], beta).unwrap();
            prob.solver.max_iters = 40_000;
            prob.solver.grad_tol = 1e-10;
            prob.solver.objective_tol = 1e-14;
            let result = solve(&prob).unwrap();
            let diff = SignalBundle {
                values: &result.w_hat.values - &w_true.values,
                ..w_true.clone()
            };
            let rel = diff.pq_norm(2.0).unwrap() / w_true.pq_norm(2.0).unwrap();
            best_rel = best_rel.min(rel);
        }
        assert!(best_rel <= 0.05, "best relative error {best_rel}");
    }

    #[test]
    fn cluster_scores_rank_and_validate() {
        let exp = twin(5, 2, 71);
        let prob = ReconstructionProblem::new(
            exp.system.clone(),
            exp.y_data.clone(),
            exp.system.nodes(),
            0.01,
        )
        .unwrap();
        let result = solve(&prob).unwrap();
        let nodes = exp.system.nodes();

        // singleton clusters score the channel norms themselves
        let singletons: Vec<Vec<NodeId>> = nodes.iter().map(|&n| vec![n]).collect();
        let ranked = cluster_score(&result, &singletons).unwrap();
        let norms = result.w_hat.channel_norms();
        for &(ci, score) in &ranked {
            assert_abs_diff_eq!(score, norms[ci], epsilon = 1e-12);
        }
        for pair in ranked.windows(2) {
            assert!(pair[0].1 >= pair[1].1);
        }

        // non-partitions are rejected
        let missing = vec![vec![NodeId(0)]];
        assert!(matches!(
            cluster_score(&result, &missing),
            Err(ReconstructError::NotAPartition)
        ));
        let doubled = vec![nodes.clone(), vec![NodeId(0)]];
        assert!(matches!(
            cluster_score(&result, &doubled),
            Err(ReconstructError::NotAPartition)
        ));
    }

    #[test]
    fn zero_reconstruction_scores_zero() {
        let exp = twin(4, 2, 81);
        let zero_in = SignalBundle::zeros(vec![], exp.y_data.dt, exp.y_data.rows());
        let (_, y0) = simulate(&exp.system, &zero_in).unwrap();
        let prob =
            ReconstructionProblem::new(exp.system.clone(), y0, exp.system.nodes(), 0.01).unwrap();
        let result = solve(&prob).unwrap();
        let clusters = vec![
            vec![NodeId(0), NodeId(1)],
            vec![NodeId(2), NodeId(3)],
        ];
        let ranked = cluster_score(&result, &clusters).unwrap();
        assert!(ranked.iter().all(|&(_, s)| s <= 1e-12));
    }
}
