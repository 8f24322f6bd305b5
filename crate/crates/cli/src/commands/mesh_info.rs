use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use smfpca::solver::block_density;
use smfpca::{FemOperators, SaddleSymbolic};

use crate::config::Settings;
use crate::error::CliError;
use crate::io;

pub const KEYS: &[&str] = &["mesh", "output"];

#[derive(Debug, Args)]
pub struct MeshInfoArgs {
    /// Mesh file (OFF) or `icosphere:N`
    #[arg(long)]
    pub mesh: Option<String>,
    /// Optional directory for mesh_info.json and a manifest
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl MeshInfoArgs {
    pub fn apply(&self, s: &mut Settings) {
        s.flag("mesh", self.mesh.as_ref());
        s.flag("output", self.output.as_ref().map(|p| p.display()));
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct MeshInfo {
    vertices: usize,
    triangles: usize,
    edges: usize,
    euler_characteristic: i64,
    closed: bool,
    area: f64,
    bounding_diagonal: f64,
    /// Stored fraction of the `2K × 2K` system matrix at the vertices.
    block_density: f64,
    /// Off-diagonal 2×2 blocks in the factor after reordering.
    factor_blocks: usize,
}

pub fn run(mut s: Settings) -> Result<(), CliError> {
    let mesh = io::load_mesh_spec(&s.string("mesh", None)?)?;
    let output = s.optional_path("output");
    let ops = FemOperators::at_vertices(&mesh)?;
    let info = MeshInfo {
        vertices: mesh.vertex_count(),
        triangles: mesh.triangle_count(),
        edges: mesh.edge_count(),
        euler_characteristic: mesh.euler_characteristic(),
        closed: mesh.is_closed(),
        area: mesh.total_area(),
        bounding_diagonal: mesh.bounding_diagonal(),
        block_density: block_density(&ops, &ops.psi_t_psi())?,
        factor_blocks: SaddleSymbolic::for_mesh(&ops).factor_blocks(),
    };
    let text = serde_json::to_string_pretty(&info).expect("plain struct serializes");
    println!("{text}");
    if let Some(dir) = output {
        io::create_dir(&dir)?;
        io::write_json(&dir.join("mesh_info.json"), &info)?;
        io::write_json(&dir.join("manifest.json"), &s.manifest())?;
    }
    Ok(())
}
