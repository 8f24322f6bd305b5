use std::path::PathBuf;

use clap::Args;
use smfpca::{
    default_lambda_grid, fit, fit_missing, FemOperators, FitOptions, Selection, SmFpcaResult,
};

use crate::config::Settings;
use crate::error::CliError;
use crate::io::{self, DataInput, ResultDoc};

pub const KEYS: &[&str] = &[
    "mesh",
    "data",
    "locations",
    "components",
    "selection",
    "folds",
    "lambda",
    "lambda_grid",
    "seed",
    "center",
    "max_iterations",
    "tolerance",
    "output",
];

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Mesh file (OFF) or `icosphere:N`
    #[arg(long)]
    pub mesh: Option<String>,
    /// Data CSV: one row per function, one column per location
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Optional CSV of x,y,z sampling points (default: mesh vertices)
    #[arg(long)]
    pub locations: Option<PathBuf>,
    #[arg(long)]
    pub components: Option<usize>,
    /// kfold, gcv or fixed
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Smoothing parameter for fixed selection
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated grid, or `auto`
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub center: Option<bool>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl FitArgs {
    pub fn apply(&self, s: &mut Settings) {
        s.flag("mesh", self.mesh.as_ref());
        s.flag("data", self.data.as_ref().map(|p| p.display()));
        s.flag("locations", self.locations.as_ref().map(|p| p.display()));
        s.flag("components", self.components);
        s.flag("selection", self.selection.as_ref());
        s.flag("folds", self.folds);
        s.flag("lambda", self.lambda);
        s.flag("lambda_grid", self.lambda_grid.as_ref());
        s.flag("seed", self.seed);
        s.flag("center", self.center);
        s.flag("max_iterations", self.max_iterations);
        s.flag("tolerance", self.tolerance);
        s.flag("output", self.output.as_ref().map(|p| p.display()));
    }
}

/// λ grid from a setting: `auto` or a comma-separated list.
pub fn lambda_grid(s: &mut Settings, ops: &FemOperators) -> Result<Vec<f64>, CliError> {
    let raw = s.string("lambda_grid", Some("auto"))?;
    if raw == "auto" {
        let grid = default_lambda_grid(ops);
        s.record(
            "lambda_grid_values",
            grid.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        Ok(grid)
    } else {
        s.list("lambda_grid", "auto")
    }
}

pub fn selection(s: &mut Settings) -> Result<Selection, CliError> {
    match s.string("selection", Some("kfold"))?.as_str() {
        "kfold" => Ok(Selection::KFold {
            folds: s.parse("folds", "5")?,
            seed: s.parse("seed", "0")?,
        }),
        "gcv" => Ok(Selection::Gcv),
        "fixed" => Ok(Selection::Fixed(s.required("lambda")?)),
        other => Err(CliError::Input(format!(
            "selection must be kfold, gcv or fixed, got '{other}'"
        ))),
    }
}

pub fn fit_options(s: &mut Settings) -> Result<FitOptions, CliError> {
    Ok(FitOptions {
        max_iterations: s.parse("max_iterations", "15")?,
        tolerance: s.parse("tolerance", "1e-6")?,
        center: s.parse("center", "true")?,
    })
}

pub fn run(mut s: Settings) -> Result<(), CliError> {
    let mesh = io::load_mesh_spec(&s.string("mesh", None)?)?;
    let locations = s.optional_path("locations");
    let ops = io::operators(&mesh, locations.as_deref())?;
    let data_path = s.path("data")?;
    let data = io::read_data(&data_path)?;
    let n_components: usize = s.parse("components", "3")?;
    let selection = selection(&mut s)?;
    let grid = match selection {
        Selection::Fixed(_) => Vec::new(),
        _ => lambda_grid(&mut s, &ops)?,
    };
    let opts = fit_options(&mut s)?;
    let output = s.path("output")?;

    let (samples, columns) = match &data {
        DataInput::Complete(x) => (x.samples(), x.locations()),
        DataInput::Incomplete(obs) => (obs.samples(), obs.pool_size()),
    };
    if columns != ops.location_count() {
        return Err(CliError::Input(format!(
            "{}: data has {columns} columns but there are {} sampling locations",
            data_path.display(),
            ops.location_count()
        )));
    }
    let result = match &data {
        DataInput::Complete(x) => fit(x, n_components, &grid, &selection, &ops, &opts)?,
        DataInput::Incomplete(obs) => {
            log::info!("data has missing cells; fitting the incomplete-data variant");
            fit_missing(obs, n_components, &grid, &selection, &ops, &opts)?
        }
    };

    io::create_dir(&output)?;
    let doc = ResultDoc::new(&result, &ops, samples, locations.is_some())?;
    io::write_json(&output.join("result.json"), &doc)?;
    write_tables(&output, &result, &doc)?;
    io::write_json(&output.join("manifest.json"), &s.manifest())?;
    log::info!(
        "fitted {} components; adjusted variance {:?}",
        result.components.len(),
        result.adjusted_variance
    );
    Ok(())
}

fn write_tables(
    dir: &std::path::Path,
    result: &SmFpcaResult,
    doc: &ResultDoc,
) -> Result<(), CliError> {
    let pcs: Vec<String> = (1..=result.components.len())
        .map(|l| format!("pc{l}"))
        .collect();

    let header: Vec<String> = ["function".to_string()]
        .into_iter()
        .chain(pcs.iter().cloned())
        .collect();
    let rows: Vec<Vec<String>> = (0..doc.samples)
        .map(|i| {
            std::iter::once(i.to_string())
                .chain(doc.components.iter().map(|c| c.scores[i].to_string()))
                .collect()
        })
        .collect();
    io::write_csv(&dir.join("scores.csv"), &header, &rows)?;

    let header: Vec<String> = ["vertex".to_string()].into_iter().chain(pcs).collect();
    let rows: Vec<Vec<String>> = (0..doc.vertex_count)
        .map(|k| {
            std::iter::once(k.to_string())
                .chain(
                    doc.components
                        .iter()
                        .map(|c| c.vertex_values[k].to_string()),
                )
                .collect()
        })
        .collect();
    io::write_csv(&dir.join("vertex_values.csv"), &header, &rows)?;

    let header: Vec<String> = ["component", "pass", "method", "lambda", "score", "chosen"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for (c, component) in doc.components.iter().enumerate() {
        for (p, trace) in component.selection.iter().enumerate() {
            for (l, lambda) in trace.lambda_grid.iter().enumerate() {
                rows.push(vec![
                    (c + 1).to_string(),
                    (p + 1).to_string(),
                    trace.method.clone(),
                    lambda.to_string(),
                    trace.scores[l].map_or_else(|| "inf".to_string(), |v| v.to_string()),
                    (l == trace.chosen).to_string(),
                ]);
            }
        }
    }
    io::write_csv(&dir.join("selection.csv"), &header, &rows)
}
