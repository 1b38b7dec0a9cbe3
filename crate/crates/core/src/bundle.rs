//! On-disk experiment bundles shared with the command line tool.
//!
//! A bundle directory holds exactly five files:
//! `system.json`, `graph.json`, `w_true.csv`, `y_data.csv`, `meta.json`.

use crate::graph::InfluenceGraph;
use crate::simulate::{LinearSystem, SignalBundle, TwinExperiment, TwinMeta};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> BundleError {
    BundleError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> BundleError {
    BundleError::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct SystemJson {
    a: Vec<Vec<f64>>,
    sensors: Vec<usize>,
    x0: Vec<f64>,
    horizon: f64,
    dt: f64,
}

/// Serializes a system to the bundle JSON schema.
pub fn system_to_json(sys: &LinearSystem) -> String {
    let n = sys.dim();
    let doc = SystemJson {
        a: (0..n)
            .map(|i| (0..n).map(|j| sys.a[(i, j)]).collect())
            .collect(),
        sensors: sys.sensors.iter().map(|z| z.0).collect(),
        x0: sys.x0.iter().cloned().collect(),
        horizon: sys.horizon,
        dt: sys.dt,
    };
    serde_json::to_string_pretty(&doc).expect("system serializes")
}

pub fn system_from_json(text: &str) -> Result<LinearSystem, String> {
    let doc: SystemJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let n = doc.a.len();
    for row in &doc.a {
        if row.len() != n {
            return Err("state matrix is not square".into());
        }
    }
    let a = DMatrix::from_fn(n, n, |i, j| doc.a[i][j]);
    let x0 = DVector::from_vec(doc.x0);
    LinearSystem::new(
        a,
        doc.sensors.into_iter().map(crate::graph::NodeId).collect(),
        x0,
        doc.horizon,
        doc.dt,
    )
    .map_err(|e| e.to_string())
}

/// Writes the five bundle files into `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, exp: &TwinExperiment) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let system_path = dir.join("system.json");
    fs::write(&system_path, system_to_json(&exp.system)).map_err(|e| io_err(&system_path, e))?;

    let graph_path = dir.join("graph.json");
    let mut graph_buf = Vec::new();
    exp.graph
        .to_json(&mut graph_buf)
        .map_err(|e| parse_err(&graph_path, e))?;
    fs::write(&graph_path, graph_buf).map_err(|e| io_err(&graph_path, e))?;

    let w_path = dir.join("w_true.csv");
    let mut w_buf = Vec::new();
    exp.true_input
        .to_csv(&mut w_buf)
        .map_err(|e| parse_err(&w_path, e))?;
    fs::write(&w_path, w_buf).map_err(|e| io_err(&w_path, e))?;

    let y_path = dir.join("y_data.csv");
    let mut y_buf = Vec::new();
    exp.y_data
        .to_csv(&mut y_buf)
        .map_err(|e| parse_err(&y_path, e))?;
    fs::write(&y_path, y_buf).map_err(|e| io_err(&y_path, e))?;

    let meta_path = dir.join("meta.json");
    let meta = serde_json::to_string_pretty(&exp.meta).expect("meta serializes");
    fs::write(&meta_path, meta).map_err(|e| io_err(&meta_path, e))?;
    Ok(())
}

/// Reads a bundle directory back into a twin experiment.
pub fn read_bundle(dir: &Path) -> Result<TwinExperiment, BundleError> {
    let system_path = dir.join("system.json");
    let system_text = fs::read_to_string(&system_path).map_err(|e| io_err(&system_path, e))?;
    let system = system_from_json(&system_text).map_err(|e| parse_err(&system_path, e))?;

    let graph_path = dir.join("graph.json");
    let graph_bytes = fs::read(&graph_path).map_err(|e| io_err(&graph_path, e))?;
    let graph =
        InfluenceGraph::from_json(graph_bytes.as_slice()).map_err(|e| parse_err(&graph_path, e))?;

    let w_path = dir.join("w_true.csv");
    let w_bytes = fs::read(&w_path).map_err(|e| io_err(&w_path, e))?;
    let true_input =
        SignalBundle::from_csv(w_bytes.as_slice()).map_err(|e| parse_err(&w_path, e))?;

    let y_path = dir.join("y_data.csv");
    let y_bytes = fs::read(&y_path).map_err(|e| io_err(&y_path, e))?;
    let y_data = SignalBundle::from_csv(y_bytes.as_slice()).map_err(|e| parse_err(&y_path, e))?;

    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: TwinMeta =
        serde_json::from_str(&meta_text).map_err(|e| parse_err(&meta_path, e))?;

    Ok(TwinExperiment {
        system,
        graph,
        true_input,
        y_data,
        meta,
    })
}
