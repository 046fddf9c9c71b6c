//! File plumbing shared by the subcommands.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde_json::{json, Value};
use sonclust::{
    load_csv, rand_index, scale_unit_box, ClusterAssignment, CsvOrientation, Dataset, Error, PathRecord, WeightGraph,
};

use crate::{DataArgs, GraphArgs, SolverArgs};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: 2, message: format!("{}: {e}", path.display()) }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::NonFiniteValue { .. }
        | Error::Empty
        | Error::DimensionMismatch(_)
        | Error::InvalidLabels(_)
        | Error::Json(_) => 2,
        Error::InvalidArgument(_) | Error::UnsupportedNorm(_) | Error::AssumptionViolated { .. } => 1,
        Error::AtGamma { source, .. } => exit_code(source),
        _ => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

/// True when the first non-comment line is a header with a `label` field.
pub fn header_has_label(path: &Path) -> Result<bool, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Failure::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        return Ok(line.split(',').any(|f| f.trim().eq_ignore_ascii_case("label")));
    }
    Ok(false)
}

pub fn load_dataset(a: &DataArgs) -> Result<Dataset, Failure> {
    let orientation = if a.transpose { CsvOrientation::ColumnsArePoints } else { CsvOrientation::RowsArePoints };
    let has_labels = a.labels || (!a.transpose && header_has_label(&a.data)?);
    let data = load_csv(&a.data, has_labels, orientation)?;
    Ok(if a.scale { scale_unit_box(&data) } else { data })
}

/// Labels from the `label` column of a CSV, or its last column without a header.
pub fn load_labels(path: &Path) -> Result<Vec<usize>, Failure> {
    let data = load_csv(path, true, CsvOrientation::RowsArePoints)?;
    Ok(data.labels.expect("requested labels"))
}

/// Enough to rerun the command: data source and its descriptor, graph and solver settings.
pub fn provenance(data: &DataArgs, g: &GraphArgs, graph: &WeightGraph, solver: &SolverArgs) -> Value {
    // `generate` writes the descriptor next to the CSV.
    let descriptor = std::fs::read_to_string(data.data.with_extension("json"))
        .ok()
        .and_then(|s| serde_json::from_str::<Value>(&s).ok());
    let graph_source = match &g.graph {
        Some(p) => json!({ "edge_list": p.display().to_string() }),
        None => json!({ "knn": { "k": g.k, "phi": g.phi } }),
    };
    json!({
        "data": data.data.display().to_string(),
        "dataset": descriptor,
        "transpose": data.transpose,
        "scale": data.scale,
        "graph": {
            "source": graph_source,
            "within_cluster": g.within_cluster,
            "num_edges": graph.num_edges(),
        },
        "p": solver.p.to_string(),
        "tol": solver.tol,
        "solver": solver.solver_name(),
    })
}

pub fn write_text(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure::io(path, e))
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    let mut body = serde_json::to_string_pretty(v).map_err(Error::from)?;
    body.push('\n');
    write_text(path, &body)
}

/// Writes `assignment.csv`, `centroids.csv` and `report.json` into `dir` and
/// returns the report.
pub fn write_solution(dir: &Path, data: &Dataset, rec: &PathRecord, prov: &Value) -> Result<Value, Failure> {
    let assignment = ClusterAssignment::from_labels(&rec.x, &rec.labels);
    assignment.write_csv(dir.join("assignment.csv"))?;

    let d = assignment.centroids.rows();
    let mut csv = String::from("label");
    for k in 1..=d {
        let _ = write!(csv, ",x{k}");
    }
    csv.push('\n');
    for (c, col) in assignment.centroids.columns().enumerate() {
        let _ = write!(csv, "{}", c + 1);
        for v in col {
            let _ = write!(csv, ",{v:?}");
        }
        csv.push('\n');
    }
    write_text(&dir.join("centroids.csv"), &csv)?;

    let ri = match &data.labels {
        Some(truth) => Some(rand_index(&assignment.labels, truth)?),
        None => None,
    };
    let mut report = rec.report.to_json();
    report["K"] = json!(assignment.num_clusters);
    report["sizes"] = json!(assignment.sizes);
    if let Some(ri) = ri {
        report["rand_index"] = json!(ri);
    }
    report["provenance"] = prov.clone();
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}
