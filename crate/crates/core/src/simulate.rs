//! Forward simulation of linear systems with injected inputs, residuals,
//! twin experiments and signal norms.
//!
//! Signals live on a uniform time grid. Per-channel function norms are
//! composite trapezoid approximations of the L^p integral norms, and the
//! p-q norm of a multichannel signal is the q-norm of the vector of channel
//! norms (q = 0 counts channels above a relative support floor).

use crate::graph::{InfluenceGraph, NodeId};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("state matrix must be square, got {rows}x{cols}")]
    NonSquareMatrix { rows: usize, cols: usize },
    #[error("initial state length {0} does not match state dimension {1}")]
    BadInitialState(usize, usize),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("horizon {horizon} is not a positive integer multiple of dt {dt}")]
    BadHorizon { horizon: f64, dt: f64 },
    #[error("sensor node {0} out of range for {1} states")]
    SensorOutOfRange(usize, usize),
    #[error("duplicate sensor node {0}")]
    DuplicateSensor(usize),
    #[error("signal channel {0} out of range for {1} states")]
    ChannelOutOfRange(usize, usize),
    #[error("duplicate signal channel {0}")]
    DuplicateChannel(usize),
    #[error("signal grid mismatch: expected {expected} samples at dt {dt}, got {got} at dt {got_dt}")]
    GridMismatch {
        expected: usize,
        dt: f64,
        got: usize,
        got_dt: f64,
    },
    #[error("signal channels do not match the sensor list")]
    ChannelMismatch,
    #[error("integration became non-finite at step {step} (t = {t})")]
    Unstable { step: usize, t: f64 },
    #[error("norm order q must be 0 or in [1, inf], got {0}")]
    BadNormOrder(f64),
    #[error("requested {requested} nodes from a system with {available}")]
    TooManyNodes { requested: usize, available: usize },
    #[error("csv error: {0}")]
    Csv(String),
}

/// Linear dynamic system `xdot = A x + w`, measured at the listed sensor
/// nodes (`y_k = x_{z_k}`), on the uniform grid of `horizon / dt` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub sensors: Vec<NodeId>,
    pub x0: DVector<f64>,
    pub horizon: f64,
    pub dt: f64,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        sensors: Vec<NodeId>,
        x0: DVector<f64>,
        horizon: f64,
        dt: f64,
    ) -> Result<Self, SimulateError> {
        if a.nrows() != a.ncols() {
            return Err(SimulateError::NonSquareMatrix {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if x0.len() != a.nrows() {
            return Err(SimulateError::BadInitialState(x0.len(), a.nrows()));
        }
        if !(dt > 0.0) {
            return Err(SimulateError::BadTimeStep(dt));
        }
        let steps = horizon / dt;
        if !(steps > 0.5) || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(SimulateError::BadHorizon { horizon, dt });
        }
        let mut seen = std::collections::HashSet::new();
        for &z in &sensors {
            if z.0 >= a.nrows() {
                return Err(SimulateError::SensorOutOfRange(z.0, a.nrows()));
            }
            if !seen.insert(z.0) {
                return Err(SimulateError::DuplicateSensor(z.0));
            }
        }
        Ok(LinearSystem {
            a,
            sensors,
            x0,
            horizon,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Number of integration steps K; the grid has K + 1 points.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        (0..self.dim()).map(NodeId).collect()
    }

    pub fn influence_graph(&self) -> InfluenceGraph {
        InfluenceGraph::from_state_matrix(&self.a).expect("state matrix is square")
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

/// Eigenvalues via Schur with a bounded iteration count; None when the QR
/// iteration fails to converge (it can stall on rare inputs, and the
/// unbounded variant would spin forever).
fn eigenvalues_bounded(a: &DMatrix<f64>) -> Option<Vec<num_complex::Complex<f64>>> {
    let max_niter = 200 * a.nrows().max(10);
    nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_niter)
        .map(|schur| schur.complex_eigenvalues().iter().cloned().collect())
}

/// Largest eigenvalue magnitude. Falls back to the tighter of the row-sum,
/// column-sum and Frobenius norm bounds if the eigensolver stalls; every
/// caller only needs an upper bound in that case.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if let Some(eigs) = eigenvalues_bounded(a) {
        return eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    }
    let row_sum = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let col_sum = (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    row_sum.min(col_sum).min(a.norm())
}

/// Largest real part of the eigenvalues (spectral abscissa). Falls back to
/// the Bendixson bound, the top eigenvalue of the symmetric part, if the
/// eigensolver stalls; the bound is from above, so a stability shift built
/// on it stays valid.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if let Some(eigs) = eigenvalues_bounded(a) {
        return eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Multichannel time series on a uniform grid starting at t = 0.
///
/// `values` has one row per grid point and one column per channel; `p` is
/// the order of the per-channel function norms (2 unless stated otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBundle {
    pub channels: Vec<NodeId>,
    pub dt: f64,
    pub values: DMatrix<f64>,
    pub p: f64,
}

/// Composite trapezoid quadrature weights on a uniform grid.
pub fn trapezoid_weights(len: usize, dt: f64) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![dt],
        _ => {
            let mut w = vec![dt; len];
            w[0] = dt / 2.0;
            w[len - 1] = dt / 2.0;
            w
        }
    }
}

impl SignalBundle {
    pub fn zeros(channels: Vec<NodeId>, dt: f64, rows: usize) -> Self {
        let cols = channels.len();
        SignalBundle {
            channels,
            dt,
            values: DMatrix::zeros(rows, cols),
            p: 2.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.rows()).map(|k| self.time(k)).collect()
    }

    pub fn channel_index(&self, node: NodeId) -> Option<usize> {
        self.channels.iter().position(|&c| c == node)
    }

    /// Trapezoid approximation of the L^p norm of one channel.
    pub fn channel_norm(&self, col: usize) -> f64 {
        let tau = trapezoid_weights(self.rows(), self.dt);
        let mut acc = 0.0;
        for k in 0..self.rows() {
            acc += tau[k] * self.values[(k, col)].abs().powf(self.p);
        }
        acc.powf(1.0 / self.p)
    }

    /// Vector of per-channel norms in channel order.
    pub fn channel_norms(&self) -> Vec<f64> {
        (0..self.channels.len())
            .map(|c| self.channel_norm(c))
            .collect()
    }

    /// Relative floor below which a channel counts as zero: 1e-6 times the
    /// largest channel norm.
    pub fn support_tol(&self) -> f64 {
        1e-6 * self
            .channel_norms()
            .into_iter()
            .fold(0.0_f64, f64::max)
    }

    /// Channels with norm above the support floor, with their norms.
    pub fn support(&self) -> Vec<(NodeId, f64)> {
        let norms = self.channel_norms();
        let tol = 1e-6 * norms.iter().cloned().fold(0.0_f64, f64::max);
        self.channels
            .iter()
            .zip(norms)
            .filter(|&(_, n)| n > tol)
            .map(|(&c, n)| (c, n))
            .collect()
    }

    /// q-norm over the vector of per-channel L^p norms. q = 0 counts the
    /// channels above the support floor; q = inf takes the maximum.
    pub fn pq_norm(&self, q: f64) -> Result<f64, SimulateError> {
        let norms = self.channel_norms();
        if q == 0.0 {
            let tol = 1e-6 * norms.iter().cloned().fold(0.0_f64, f64::max);
            return Ok(norms.iter().filter(|&&n| n > tol).count() as f64);
        }
        if q.is_infinite() && q > 0.0 {
            return Ok(norms.into_iter().fold(0.0_f64, f64::max));
        }
        if q < 1.0 || q.is_nan() {
            return Err(SimulateError::BadNormOrder(q));
        }
        Ok(norms.iter().map(|n| n.powf(q)).sum::<f64>().powf(1.0 / q))
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), SimulateError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.channels.iter().map(|c| c.to_string()));
        wtr.write_record(&header)
            .map_err(|e| SimulateError::Csv(e.to_string()))?;
        for k in 0..self.rows() {
            let mut record = vec![format!("{}", self.time(k))];
            for c in 0..self.channels.len() {
                record.push(format!("{}", self.values[(k, c)]));
            }
            wtr.write_record(&record)
                .map_err(|e| SimulateError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| SimulateError::Csv(e.to_string()))
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self, SimulateError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| SimulateError::Csv(e.to_string()))?
            .clone();
        if headers.is_empty() || headers.get(0) != Some("t") {
            return Err(SimulateError::Csv("expected first column 't'".into()));
        }
        let channels: Result<Vec<NodeId>, _> = headers
            .iter()
            .skip(1)
            .map(|h| h.trim().parse::<usize>().map(NodeId))
            .collect();
        let channels = channels.map_err(|e| SimulateError::Csv(e.to_string()))?;
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| SimulateError::Csv(e.to_string()))?;
            let mut iter = record.iter();
            let t: f64 = iter
                .next()
                .ok_or_else(|| SimulateError::Csv("empty record".into()))?
                .parse()
                .map_err(|e: std::num::ParseFloatError| SimulateError::Csv(e.to_string()))?;
            times.push(t);
            let row: Result<Vec<f64>, _> = iter.map(|cell| cell.parse::<f64>()).collect();
            rows.push(row.map_err(|e| SimulateError::Csv(e.to_string()))?);
        }
        if times.len() < 2 {
            return Err(SimulateError::Csv("need at least two grid points".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(SimulateError::Csv("grid is not increasing".into()));
        }
        for (k, &t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(SimulateError::Csv("grid is not uniform".into()));
            }
        }
        let ncols = channels.len();
        for row in &rows {
            if row.len() != ncols {
                return Err(SimulateError::Csv("ragged csv".into()));
            }
        }
        let values = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        Ok(SignalBundle {
            channels,
            dt,
            values,
            p: 2.0,
        })
    }
}

fn check_grid(sys: &LinearSystem, sig: &SignalBundle) -> Result<(), SimulateError> {
    let expected = sys.steps() + 1;
    if sig.rows() != expected || (sig.dt - sys.dt).abs() > 1e-12 * sys.dt {
        return Err(SimulateError::GridMismatch {
            expected,
            dt: sys.dt,
            got: sig.rows(),
            got_dt: sig.dt,
        });
    }
    Ok(())
}

/// Classical 4th-order fixed-step integration of `xdot = A x + w(t)` on the
/// system grid; the input is interpolated linearly for the half-step stage
/// evaluations. Channels missing from `w` are zero. Returns the full state
/// trajectory and its restriction to the sensors.
pub fn simulate(
    sys: &LinearSystem,
    w: &SignalBundle,
) -> Result<(SignalBundle, SignalBundle), SimulateError> {
    check_grid(sys, w)?;
    let n = sys.dim();
    let mut seen = std::collections::HashSet::new();
    for &c in &w.channels {
        if c.0 >= n {
            return Err(SimulateError::ChannelOutOfRange(c.0, n));
        }
        if !seen.insert(c.0) {
            return Err(SimulateError::DuplicateChannel(c.0));
        }
    }
    let k_steps = sys.steps();
    let mut states = DMatrix::zeros(k_steps + 1, n);
    let mut x = sys.x0.clone();
    for j in 0..n {
        states[(0, j)] = x[j];
    }

    // scatter w's channels into state-space vectors per grid point
    let w_at = |k: usize| -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for (c, &node) in w.channels.iter().enumerate() {
            v[node.0] = w.values[(k, c)];
        }
        v
    };

    let a = &sys.a;
    let dt = sys.dt;
    let mut w_lo = w_at(0);
    for k in 0..k_steps {
        let w_hi = w_at(k + 1);
        let w_mid = (&w_lo + &w_hi) * 0.5;
        let k1 = a * &x + &w_lo;
        let k2 = a * (&x + &k1 * (dt / 2.0)) + &w_mid;
        let k3 = a * (&x + &k2 * (dt / 2.0)) + &w_mid;
        let k4 = a * (&x + &k3 * dt) + &w_hi;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimulateError::Unstable {
                step: k + 1,
                t: (k + 1) as f64 * dt,
            });
        }
        for j in 0..n {
            states[(k + 1, j)] = x[j];
        }
        w_lo = w_hi;
    }

    let state_bundle = SignalBundle {
        channels: sys.nodes(),
        dt,
        values: states,
        p: 2.0,
    };
    let outputs = restrict_to_sensors(&state_bundle, &sys.sensors);
    Ok((state_bundle, outputs))
}

/// Restriction of a full-state bundle to the listed channels.
pub fn restrict_to_sensors(states: &SignalBundle, sensors: &[NodeId]) -> SignalBundle {
    let cols: Vec<usize> = sensors
        .iter()
        .map(|z| states.channel_index(*z).expect("sensor is a state node"))
        .collect();
    let values = DMatrix::from_fn(states.rows(), sensors.len(), |k, j| {
        states.values[(k, cols[j])]
    });
    SignalBundle {
        channels: sensors.to_vec(),
        dt: states.dt,
        values,
        p: states.p,
    }
}

/// Residual r = y_data - y0 where y0 is the closed-system (w = 0) output.
pub fn residual(y_data: &SignalBundle, sys: &LinearSystem) -> Result<SignalBundle, SimulateError> {
    check_grid(sys, y_data)?;
    if y_data.channels != sys.sensors {
        return Err(SimulateError::ChannelMismatch);
    }
    let zero = SignalBundle::zeros(Vec::new(), sys.dt, sys.steps() + 1);
    let (_, y0) = simulate(sys, &zero)?;
    Ok(SignalBundle {
        channels: y_data.channels.clone(),
        dt: y_data.dt,
        values: &y_data.values - &y0.values,
        p: y_data.p,
    })
}

/// Waveform injected at the target nodes of a twin experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputShape {
    /// zero until 0.2 T, then constant
    Step,
    /// constant on [0.2 T, 0.5 T), zero elsewhere
    Pulse,
    /// seeded low-order trigonometric mix
    SmoothRandom,
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InputShape::Step => "step",
            InputShape::Pulse => "pulse",
            InputShape::SmoothRandom => "smooth-random",
        };
        write!(f, "{s}")
    }
}

impl FromStr for InputShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step" => Ok(InputShape::Step),
            "pulse" => Ok(InputShape::Pulse),
            "smooth-random" => Ok(InputShape::SmoothRandom),
            other => Err(format!(
                "unknown input shape '{other}' (expected step, pulse or smooth-random)"
            )),
        }
    }
}

/// Generation parameters for [`make_twin`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub n: usize,
    pub sensors: usize,
    pub k: usize,
    pub shape: InputShape,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            n: 30,
            sensors: 10,
            k: 1,
            shape: InputShape::Step,
            seed: 0,
            dt: 0.05,
            horizon: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinMeta {
    pub seed: u64,
    pub k: usize,
    pub shape: InputShape,
    pub targets: Vec<NodeId>,
}

/// Simulated experiment with a known injected input playing the role of the
/// unknown fault: y_data = simulate(system, true_input) restricted to the
/// sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinExperiment {
    pub system: LinearSystem,
    pub graph: InfluenceGraph,
    pub true_input: SignalBundle,
    pub y_data: SignalBundle,
    pub meta: TwinMeta,
}

impl TwinExperiment {
    /// Recomputes the sensor data for a different sensor set by replaying
    /// the true input (the twin-experiment stand-in for taking new
    /// measurements).
    pub fn remeasure(&self, sensors: &[NodeId]) -> Result<SignalBundle, SimulateError> {
        let sys = LinearSystem::new(
            self.system.a.clone(),
            sensors.to_vec(),
            self.system.x0.clone(),
            self.system.horizon,
            self.system.dt,
        )?;
        let (_, y) = simulate(&sys, &self.true_input)?;
        Ok(y)
    }
}

/// Random 2-out digraph state matrix: every node drives two distinct other
/// nodes, with edge weights drawn uniformly from [-1, -0.25] or [0.25, 1],
/// shifted by -(alpha(A) + 0.1) I (alpha the spectral abscissa) so the
/// system is stable. The shift only changes the diagonal; the off-diagonal
/// influence structure is untouched.
///
/// The fixed out-degree (rather than an Erdos-Renyi coin per edge with the
/// same mean) keeps every node connected into the network; otherwise a
/// sizeable fraction of nodes has no outgoing edge at all and the gammoid
/// spark collapses to 1 in almost every instance. The shift uses the
/// abscissa rather than the spectral radius: it is the smallest diagonal
/// shift that stabilizes, and the milder damping keeps signals from deep
/// nodes energetically visible at the sensors.
pub fn random_state_matrix(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let out_degree = 2.min(n.saturating_sub(1));
    for src in 0..n {
        let mut targets = Vec::with_capacity(out_degree);
        while targets.len() < out_degree {
            let dst = rng.random_range(0..n);
            if dst != src && !targets.contains(&dst) {
                targets.push(dst);
            }
        }
        for dst in targets {
            let magnitude = rng.random_range(0.25..=1.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            a[(dst, src)] = sign * magnitude;
        }
    }
    let alpha = spectral_abscissa(&a);
    for i in 0..n {
        a[(i, i)] -= alpha + 0.1;
    }
    a
}

fn waveform(shape: InputShape, horizon: f64, rows: usize, dt: f64, rng: &mut impl Rng) -> Vec<f64> {
    const AMPLITUDE: f64 = 1.5;
    match shape {
        InputShape::Step => (0..rows)
            .map(|k| {
                if k as f64 * dt >= 0.2 * horizon {
                    AMPLITUDE
                } else {
                    0.0
                }
            })
            .collect(),
        InputShape::Pulse => (0..rows)
            .map(|k| {
                let t = k as f64 * dt;
                if (0.2 * horizon..0.5 * horizon).contains(&t) {
                    AMPLITUDE
                } else {
                    0.0
                }
            })
            .collect(),
        InputShape::SmoothRandom => {
            let coeffs: Vec<(f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.5..=1.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let total: f64 = coeffs.iter().map(|(c, _)| c).sum();
            (0..rows)
                .map(|k| {
                    let t = k as f64 * dt;
                    let mix: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(h, (c, phi))| {
                            c * (std::f64::consts::TAU * (h + 1) as f64 * t / horizon + phi).sin()
                        })
                        .sum();
                    AMPLITUDE * mix / total
                })
                .collect()
        }
    }
}

/// Generates a seeded twin experiment: random stable network, uniformly
/// sampled sensor and target nodes, injected waveform, simulated data.
/// Deterministic given the seed.
pub fn make_twin(cfg: &TwinConfig) -> Result<TwinExperiment, SimulateError> {
    if cfg.k > cfg.n {
        return Err(SimulateError::TooManyNodes {
            requested: cfg.k,
            available: cfg.n,
        });
    }
    if cfg.sensors > cfg.n {
        return Err(SimulateError::TooManyNodes {
            requested: cfg.sensors,
            available: cfg.n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = random_state_matrix(cfg.n, &mut rng);

    let mut sensor_ix = rand::seq::index::sample(&mut rng, cfg.n, cfg.sensors).into_vec();
    sensor_ix.sort_unstable();
    let sensors: Vec<NodeId> = sensor_ix.into_iter().map(NodeId).collect();

    let mut target_ix = rand::seq::index::sample(&mut rng, cfg.n, cfg.k).into_vec();
    target_ix.sort_unstable();
    let targets: Vec<NodeId> = target_ix.into_iter().map(NodeId).collect();

    let x0 = DVector::from_fn(cfg.n, |_, _| rng.random_range(-1.0..=1.0));
    let sys = LinearSystem::new(a, sensors, x0, cfg.horizon, cfg.dt)?;

    let rows = sys.steps() + 1;
    let mut values = DMatrix::zeros(rows, cfg.k);
    for (c, _) in targets.iter().enumerate() {
        let wave = waveform(cfg.shape, cfg.horizon, rows, cfg.dt, &mut rng);
        for (k, v) in wave.into_iter().enumerate() {
            values[(k, c)] = v;
        }
    }
    let true_input = SignalBundle {
        channels: targets.clone(),
        dt: cfg.dt,
        values,
        p: 2.0,
    };

    let (_, y_data) = simulate(&sys, &true_input)?;
    let graph = sys.influence_graph();
    Ok(TwinExperiment {
        system: sys,
        graph,
        true_input,
        y_data,
        meta: TwinMeta {
            seed: cfg.seed,
            k: cfg.k,
            shape: cfg.shape,
            targets,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_system(a: f64, x0: f64, horizon: f64, dt: f64) -> LinearSystem {
        LinearSystem::new(
            DMatrix::from_element(1, 1, a),
            vec![NodeId(0)],
            DVector::from_element(1, x0),
            horizon,
            dt,
        )
        .unwrap()
    }

    #[test]
    fn constant_state_with_zero_dynamics() {
        let sys = scalar_system(0.0, 3.5, 1.0, 0.1);
        let zero = SignalBundle::zeros(vec![], 0.1, 11);
        let (states, outputs) = simulate(&sys, &zero).unwrap();
        for k in 0..states.rows() {
            assert_eq!(states.values[(k, 0)], 3.5);
        }
        assert_eq!(outputs.channels, vec![NodeId(0)]);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let sys = scalar_system(-1.0, 1.0, 1.0, 1e-3);
        let zero = SignalBundle::zeros(vec![], 1e-3, sys.steps() + 1);
        let (states, _) = simulate(&sys, &zero).unwrap();
        let mut max_err = 0.0_f64;
        for k in 0..states.rows() {
            let t = k as f64 * 1e-3;
            max_err = max_err.max((states.values[(k, 0)] - (-t).exp()).abs());
        }
        assert!(max_err <= 1e-8, "max error {max_err}");
    }

    #[test]
    fn fourth_order_convergence() {
        let error_at = |dt: f64| {
            let sys = scalar_system(-1.0, 1.0, 1.0, dt);
            let zero = SignalBundle::zeros(vec![], dt, sys.steps() + 1);
            let (states, _) = simulate(&sys, &zero).unwrap();
            let k = states.rows() - 1;
            (states.values[(k, 0)] - (-1.0_f64).exp()).abs()
        };
        let order = (error_at(0.1) / error_at(0.05)).log2();
        assert!((3.5..=4.5).contains(&order), "observed order {order}");
    }

    #[test]
    fn superposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_state_matrix(4, &mut rng);
        let x0 = DVector::from_fn(4, |_, _| rng.random_range(-1.0..=1.0));
        let sys = LinearSystem::new(a.clone(), vec![NodeId(1)], x0, 1.0, 0.01).unwrap();
        let rows = sys.steps() + 1;
        let mk = |rng: &mut ChaCha8Rng| {
            let values = DMatrix::from_fn(rows, 2, |_, _| rng.random_range(-1.0..=1.0));
            SignalBundle {
                channels: vec![NodeId(0), NodeId(2)],
                dt: 0.01,
                values,
                p: 2.0,
            }
        };
        let w1 = mk(&mut rng);
        let w2 = mk(&mut rng);
        let sum = SignalBundle {
            values: &w1.values + &w2.values,
            ..w1.clone()
        };
        let sys0 = LinearSystem::new(a, vec![NodeId(1)], DVector::zeros(4), 1.0, 0.01).unwrap();
        let (sx, _) = simulate(&sys, &sum).unwrap();
        let (s1, _) = simulate(&sys, &w1).unwrap();
        let (s2, _) = simulate(&sys0, &w2).unwrap();
        let diff = (&sx.values - (&s1.values + &s2.values)).abs().max();
        assert!(diff <= 1e-10, "superposition violated by {diff}");
    }

    #[test]
    fn divergent_integration_reports_first_bad_step() {
        let sys = scalar_system(1e80, 1.0, 1.0, 0.1);
        let zero = SignalBundle::zeros(vec![], 0.1, 11);
        match simulate(&sys, &zero) {
            Err(SimulateError::Unstable { step, .. }) => assert!(step >= 1),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn residual_of_closed_data_is_zero() {
        let sys = scalar_system(-0.5, 1.0, 1.0, 0.01);
        let zero = SignalBundle::zeros(vec![], 0.01, sys.steps() + 1);
        let (_, y0) = simulate(&sys, &zero).unwrap();
        let r = residual(&y0, &sys).unwrap();
        assert!(r.values.abs().max() <= 1e-15);
    }

    #[test]
    fn residual_is_linear_in_the_injected_input() {
        let cfg = TwinConfig {
            n: 8,
            sensors: 3,
            k: 1,
            seed: 5,
            ..TwinConfig::default()
        };
        let exp = make_twin(&cfg).unwrap();
        let r1 = residual(&exp.y_data, &exp.system).unwrap();
        assert!(r1.pq_norm(2.0).unwrap() > 0.0);

        let double = SignalBundle {
            values: &exp.true_input.values * 2.0,
            ..exp.true_input.clone()
        };
        let (_, y2) = simulate(&exp.system, &double).unwrap();
        let r2 = residual(&y2, &exp.system).unwrap();
        let diff = (&r2.values - &r1.values * 2.0).abs().max();
        assert!(diff <= 1e-9, "residual not linear: {diff}");
    }

    #[test]
    fn pq_norm_basics() {
        let zero = SignalBundle::zeros(vec![NodeId(0), NodeId(1)], 0.1, 11);
        for q in [0.0, 1.0, 2.0, f64::INFINITY] {
            assert_eq!(zero.pq_norm(q).unwrap(), 0.0);
        }

        // constant 1 on [0, 1]: every channel norm is 1
        let ones = SignalBundle {
            channels: vec![NodeId(0)],
            dt: 0.1,
            values: DMatrix::from_element(11, 1, 1.0),
            p: 2.0,
        };
        assert_abs_diff_eq!(ones.pq_norm(1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ones.pq_norm(2.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(ones.pq_norm(0.0).unwrap(), 1.0);

        assert!(matches!(
            ones.pq_norm(0.5),
            Err(SimulateError::BadNormOrder(_))
        ));
    }

    #[test]
    fn quadrature_matches_analytic_sine_norm() {
        let dt = 1e-3;
        let rows = (std::f64::consts::TAU / dt).round() as usize + 1;
        let values = DMatrix::from_fn(rows, 1, |k, _| (k as f64 * dt).sin());
        let sig = SignalBundle {
            channels: vec![NodeId(0)],
            dt,
            values,
            p: 2.0,
        };
        let expected = std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(sig.channel_norm(0), expected, epsilon = 1e-6);
    }

    #[test]
    fn disjoint_support_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = 21;
        let mk = |channels: Vec<NodeId>, rng: &mut ChaCha8Rng| SignalBundle {
            values: DMatrix::from_fn(rows, channels.len(), |_, _| rng.random_range(-2.0..2.0)),
            channels,
            dt: 0.05,
            p: 2.0,
        };
        let u = mk(vec![NodeId(0), NodeId(1)], &mut rng);
        let v = mk(vec![NodeId(2)], &mut rng);
        let mut combined_values = DMatrix::zeros(rows, 3);
        combined_values.view_mut((0, 0), (rows, 2)).copy_from(&u.values);
        combined_values.view_mut((0, 2), (rows, 1)).copy_from(&v.values);
        let combined = SignalBundle {
            channels: vec![NodeId(0), NodeId(1), NodeId(2)],
            dt: 0.05,
            values: combined_values,
            p: 2.0,
        };
        for q in [1.0, 2.0, 3.0] {
            let lhs = combined.pq_norm(q).unwrap().powf(q);
            let rhs = u.pq_norm(q).unwrap().powf(q) + v.pq_norm(q).unwrap().powf(q);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn twin_is_deterministic_and_consistent() {
        let cfg = TwinConfig {
            n: 12,
            sensors: 4,
            k: 1,
            seed: 7,
            ..TwinConfig::default()
        };
        let a = make_twin(&cfg).unwrap();
        let b = make_twin(&cfg).unwrap();
        assert_eq!(a, b);

        // constructive invariant: data equals replayed truth on the sensors
        let (_, y) = simulate(&a.system, &a.true_input).unwrap();
        assert_eq!(y.values, a.y_data.values);
        assert_eq!(a.meta.targets, a.true_input.channels);
    }

    #[test]
    fn twin_rejects_oversized_requests() {
        let cfg = TwinConfig {
            n: 30,
            k: 31,
            ..TwinConfig::default()
        };
        assert!(matches!(
            make_twin(&cfg),
            Err(SimulateError::TooManyNodes { .. })
        ));
    }

    #[test]
    fn signal_csv_round_trip() {
        let cfg = TwinConfig {
            n: 5,
            sensors: 2,
            k: 1,
            seed: 1,
            ..TwinConfig::default()
        };
        let exp = make_twin(&cfg).unwrap();
        let mut buf = Vec::new();
        exp.y_data.to_csv(&mut buf).unwrap();
        let back = SignalBundle::from_csv(buf.as_slice()).unwrap();
        assert_eq!(back.channels, exp.y_data.channels);
        assert_eq!(back.values, exp.y_data.values);
        assert_abs_diff_eq!(back.dt, exp.y_data.dt, epsilon = 1e-12);
    }
}
