//! File formats: data and location CSV, result and truth JSON.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use smfpca::{
    load_mesh, unit_sphere_mesh, DataMatrix, Error, FemOperators, ObservationSet, SelectionTrace,
    SmFpcaResult, SurfaceLocation, TriangleMesh,
};

use crate::error::CliError;

/// A mesh file path, or `icosphere:N` for a generated unit sphere.
pub fn load_mesh_spec(spec: &str) -> Result<TriangleMesh, CliError> {
    if let Some(level) = spec.strip_prefix("icosphere:") {
        let level: u32 = level
            .parse()
            .map_err(|_| CliError::Input(format!("mesh '{spec}': bad subdivision count")))?;
        return Ok(unit_sphere_mesh(level)?);
    }
    Ok(load_mesh(spec)?)
}

/// Operators at the mesh vertices, or at points read from a location file.
pub fn operators(mesh: &TriangleMesh, locations: Option<&Path>) -> Result<FemOperators, CliError> {
    match locations {
        None => Ok(FemOperators::at_vertices(mesh)?),
        Some(path) => {
            let points = read_points(path)?;
            let locs = points.iter().map(|p| mesh.locate_point(p)).collect();
            Ok(FemOperators::assemble(mesh, locs)?)
        }
    }
}

pub enum DataInput {
    Complete(DataMatrix),
    Incomplete(ObservationSet),
}

fn data_error(path: &Path, row: usize, column: usize, message: impl Into<String>) -> CliError {
    Error::Data {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
    .into()
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

/// One row per function, one column per location. Empty cells are missing
/// values. A first row holding the column indices `0, 1, …` (or only
/// non-numeric labels) is a header.
pub fn read_data(path: &Path) -> Result<DataInput, CliError> {
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut width = None;
    for (r, record) in reader(path)?.records().enumerate() {
        let record = record.map_err(|e| data_error(path, r + 1, 0, e.to_string()))?;
        if r == 0 && is_header(&record) {
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(data_error(
                path,
                r + 1,
                record.len().min(expected) + 1,
                format!("expected {expected} columns, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if cell.is_empty() {
                    return Ok(None);
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(data_error(
                        path,
                        r + 1,
                        c + 1,
                        format!("not a finite number: '{cell}'"),
                    )),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_error(path, 1, 1, "no data rows"));
    }
    if rows.iter().flatten().all(Option::is_some) {
        let n = rows.len();
        let s = rows[0].len();
        let values = DMatrix::from_fn(n, s, |i, j| rows[i][j].expect("complete"));
        Ok(DataInput::Complete(DataMatrix::new(values)?))
    } else {
        if let Some(i) = rows.iter().position(|r| r.iter().all(Option::is_none)) {
            return Err(data_error(path, i + 1, 1, "row has no observed values"));
        }
        Ok(DataInput::Incomplete(ObservationSet::from_rows(&rows)?))
    }
}

fn is_header(record: &csv::StringRecord) -> bool {
    let indices = record
        .iter()
        .enumerate()
        .all(|(c, cell)| cell.parse::<usize>() == Ok(c));
    let labels = record
        .iter()
        .all(|cell| !cell.is_empty() && cell.parse::<f64>().is_err());
    indices || labels
}

/// Points as `x,y,z` rows, optional header.
pub fn read_points(path: &Path) -> Result<Vec<Vector3<f64>>, CliError> {
    let mut points = Vec::new();
    for (r, record) in reader(path)?.records().enumerate() {
        let record = record.map_err(|e| data_error(path, r + 1, 0, e.to_string()))?;
        if r == 0 && record.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != 3 {
            return Err(data_error(path, r + 1, 1, "expected x,y,z"));
        }
        let mut p = [0.0; 3];
        for (c, cell) in record.iter().enumerate() {
            p[c] = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    data_error(path, r + 1, c + 1, format!("not a finite number: '{cell}'"))
                })?;
        }
        points.push(Vector3::from(p));
    }
    Ok(points)
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// `n × s` data with a header of location indices.
pub fn write_data(path: &Path, x: &DataMatrix) -> Result<(), CliError> {
    let header: Vec<String> = (0..x.locations()).map(|j| j.to_string()).collect();
    let rows: Vec<Vec<String>> = x
        .values()
        .row_iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceDoc {
    pub method: String,
    pub lambda_grid: Vec<f64>,
    /// `null` where the score is undefined.
    pub scores: Vec<Option<f64>>,
    pub chosen: usize,
}

impl From<&SelectionTrace> for TraceDoc {
    fn from(t: &SelectionTrace) -> Self {
        Self {
            method: serde_json::to_value(t.method)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            lambda_grid: t.lambda_grid.clone(),
            scores: t
                .scores
                .iter()
                .map(|s| s.is_finite().then_some(*s))
                .collect(),
            chosen: t.chosen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComponentDoc {
    pub lambda: f64,
    pub function_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Unit-norm scores.
    pub scores: Vec<f64>,
    /// Loading values at the mesh vertices (the finite element coefficients).
    pub vertex_values: Vec<f64>,
    /// Loading values at the sampling locations.
    pub location_values: Vec<f64>,
    pub g: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub selection: Vec<TraceDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultDoc {
    pub samples: usize,
    pub vertex_count: usize,
    pub location_count: usize,
    /// Sampling locations as `[triangle, b0, b1, b2]`; absent for vertices.
    pub locations: Option<Vec<[f64; 4]>>,
    pub centered: bool,
    pub mean_field: Vec<f64>,
    pub total_variance: f64,
    pub adjusted_variance: Vec<f64>,
    pub cumulative_variance: Vec<f64>,
    pub components: Vec<ComponentDoc>,
}

impl ResultDoc {
    pub fn new(
        result: &SmFpcaResult,
        ops: &FemOperators,
        samples: usize,
        custom_locations: bool,
    ) -> Result<Self, CliError> {
        let components = result
            .components
            .iter()
            .zip(&result.selection_traces)
            .map(|(c, traces)| {
                Ok(ComponentDoc {
                    lambda: c.lambda,
                    function_norm: c.function_norm,
                    iterations: c.iterations,
                    converged: c.converged,
                    scores: c.scores.iter().copied().collect(),
                    vertex_values: c.f.iter().copied().collect(),
                    location_values: ops.evaluate(&c.f)?.iter().copied().collect(),
                    g: c.g.iter().copied().collect(),
                    objective_trace: c.objective_trace.clone(),
                    selection: traces.iter().map(TraceDoc::from).collect(),
                })
            })
            .collect::<Result<_, CliError>>()?;
        let locations = custom_locations.then(|| {
            ops.locations()
                .iter()
                .map(|l| {
                    let [a, b, c] = l.barycentric;
                    [l.triangle as f64, a, b, c]
                })
                .collect()
        });
        Ok(Self {
            samples,
            vertex_count: ops.vertex_count(),
            location_count: ops.location_count(),
            locations,
            centered: result.centered,
            mean_field: result.mean_field.iter().copied().collect(),
            total_variance: result.total_variance,
            adjusted_variance: result.adjusted_variance.clone(),
            cumulative_variance: result.cumulative_variance.clone(),
            components,
        })
    }

    /// Operators on the stored locations of `mesh`.
    pub fn operators(&self, mesh: &TriangleMesh) -> Result<FemOperators, CliError> {
        if mesh.vertex_count() != self.vertex_count {
            return Err(CliError::Input(format!(
                "result was fitted on {} vertices but the mesh has {}",
                self.vertex_count,
                mesh.vertex_count()
            )));
        }
        match &self.locations {
            None => Ok(FemOperators::at_vertices(mesh)?),
            Some(locs) => {
                let locs = locs
                    .iter()
                    .map(|&[t, a, b, c]| SurfaceLocation::new(t as usize, [a, b, c]))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(FemOperators::assemble(mesh, locs)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruthDoc {
    pub generator: String,
    pub seed: u64,
    pub noise_sigma: f64,
    pub vertex_count: usize,
    /// True component coefficients, one list per component.
    pub true_components: Vec<Vec<f64>>,
    /// One row per function.
    pub true_scores: Vec<Vec<f64>>,
    pub shifts: Option<Vec<[f64; 2]>>,
}

impl TruthDoc {
    pub fn components(&self) -> Vec<DVector<f64>> {
        self.true_components
            .iter()
            .map(|c| DVector::from_column_slice(c))
            .collect()
    }

    pub fn scores(&self) -> Result<DMatrix<f64>, CliError> {
        let n = self.true_scores.len();
        let l = self.true_components.len();
        if self.true_scores.iter().any(|r| r.len() != l) {
            return Err(CliError::Input(format!(
                "truth scores must have {l} columns per row"
            )));
        }
        Ok(DMatrix::from_fn(n, l, |i, j| self.true_scores[i][j]))
    }
}
