//! Localization and reconstruction of sparse unknown inputs (faults, model
//! errors, unmeasured disturbances) in linear dynamic networks.
//!
//! The toolbox is organized around a small number of ideas:
//!
//! * [`graph`] — weighted directed influence graphs, path weights,
//!   transposition and composition.
//! * [`gammoid`] — the independence structure of input node sets: a set of
//!   candidate input nodes is independent when it can be linked into the
//!   sensor set by node-disjoint directed paths. Rank, nullity, the exact
//!   spark and the k-sparse localizability test live here.
//! * [`lintransfer`] — Laplace-domain objects for linear systems: resolvent
//!   transfer entries, the input gramian, coherence functions and the cheap
//!   shortest-path coherence surrogate, plus the coherence-based spark lower
//!   bound.
//! * [`simulate`] — forward simulation with injected inputs, twin-experiment
//!   generation, residuals and the p-q norm machinery on multichannel
//!   signals.
//! * [`reconstruct`] — the group-sparse convex reconstruction of unknown
//!   inputs from output data via adjoint-gradient accelerated proximal
//!   descent.
//! * [`cluster`] — hierarchical clustering of indistinguishable input nodes,
//!   output clustering, sensor replacement planning, and the iterative
//!   localization loop combining all of the above.
//! * [`bundle`] — on-disk experiment bundles (JSON + CSV) shared with the
//!   command line tool.

pub mod bundle;
pub mod cluster;
pub mod gammoid;
pub mod graph;
pub mod lintransfer;
pub mod reconstruct;
pub mod simulate;

pub use gammoid::{Gammoid, RankReport, Spark};
pub use graph::{compose, Composition, InfluenceGraph, NodeId, PathFamily};
pub use lintransfer::{CoherenceKind, CoherenceMatrix, CoherenceReport};
pub use reconstruct::{ReconstructionProblem, ReconstructionResult, SolverConfig};
pub use simulate::{InputShape, LinearSystem, SignalBundle, TwinExperiment};
