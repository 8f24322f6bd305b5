use std::path::PathBuf;

use clap::Args;
use smfpca::synth::{generate_eigen_dataset, generate_misaligned_dataset, generate_sphere_dataset};
use smfpca::{FemOperators, SyntheticDataset, TriangleMesh};

use crate::config::Settings;
use crate::error::CliError;
use crate::io::{self, TruthDoc};

pub const KEYS: &[&str] = &[
    "generator",
    "mesh",
    "n",
    "sigmas",
    "noise",
    "eigen_indices",
    "shifts",
    "seed",
    "output",
];

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// eigen, sphere or misaligned
    #[arg(long)]
    pub generator: Option<String>,
    /// Mesh file (OFF) or `icosphere:N`
    #[arg(long)]
    pub mesh: Option<String>,
    /// Number of functions
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated score standard deviations
    #[arg(long)]
    pub sigmas: Option<String>,
    /// Noise standard deviation
    #[arg(long)]
    pub noise: Option<f64>,
    /// Comma-separated eigenfunction indices for the eigen generator (0 is the constant)
    #[arg(long)]
    pub eigen_indices: Option<String>,
    /// Comma-separated shift values for the misaligned generator
    #[arg(long)]
    pub shifts: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn apply(&self, s: &mut Settings) {
        s.flag("generator", self.generator.as_ref());
        s.flag("mesh", self.mesh.as_ref());
        s.flag("n", self.n);
        s.flag("sigmas", self.sigmas.as_ref());
        s.flag("noise", self.noise);
        s.flag("eigen_indices", self.eigen_indices.as_ref());
        s.flag("shifts", self.shifts.as_ref());
        s.flag("seed", self.seed);
        s.flag("output", self.output.as_ref().map(|p| p.display()));
    }
}

/// Generator choice with its parameters resolved from settings.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Eigen {
        indices: Vec<usize>,
        sigmas: Vec<f64>,
        noise: f64,
    },
    Sphere {
        sigmas: (f64, f64),
        noise: f64,
    },
    Misaligned {
        sigma: f64,
        shifts: Vec<f64>,
    },
}

impl Generator {
    pub fn from_settings(s: &mut Settings) -> Result<Self, CliError> {
        let name = s.string("generator", Some("eigen"))?;
        match name.as_str() {
            "eigen" => Ok(Generator::Eigen {
                indices: s.list("eigen_indices", "1,4,9")?,
                sigmas: s.list("sigmas", "5,3,1")?,
                noise: s.parse("noise", "0.1")?,
            }),
            "sphere" => {
                let sigmas: Vec<f64> = s.list("sigmas", "4,2")?;
                let [a, b] = sigmas[..] else {
                    return Err(CliError::Input(format!(
                        "sphere generator needs two sigmas, got {}",
                        sigmas.len()
                    )));
                };
                Ok(Generator::Sphere {
                    sigmas: (a, b),
                    noise: s.parse("noise", "0.1")?,
                })
            }
            "misaligned" => {
                let sigmas: Vec<f64> = s.list("sigmas", "4")?;
                let [sigma] = sigmas[..] else {
                    return Err(CliError::Input(format!(
                        "misaligned generator needs one sigma, got {}",
                        sigmas.len()
                    )));
                };
                let noise: f64 = s.parse("noise", "0")?;
                if noise != 0.0 {
                    return Err(CliError::Input(
                        "misaligned generator is noise-free; noise must be 0".into(),
                    ));
                }
                Ok(Generator::Misaligned {
                    sigma,
                    shifts: s.list("shifts", "0,0.4")?,
                })
            }
            other => Err(CliError::Input(format!(
                "generator must be eigen, sphere or misaligned, got '{other}'"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Generator::Eigen { .. } => "eigen",
            Generator::Sphere { .. } => "sphere",
            Generator::Misaligned { .. } => "misaligned",
        }
    }

    pub fn generate(
        &self,
        mesh: &TriangleMesh,
        ops: &FemOperators,
        n: usize,
        seed: u64,
    ) -> Result<SyntheticDataset, CliError> {
        Ok(match self {
            Generator::Eigen {
                indices,
                sigmas,
                noise,
            } => {
                if !mesh.is_closed() {
                    log::warn!("eigen generator on an open mesh uses Neumann eigenfunctions");
                }
                generate_eigen_dataset(ops, indices, sigmas, n, *noise, seed)?
            }
            Generator::Sphere { sigmas, noise } => {
                generate_sphere_dataset(mesh, ops, n, *sigmas, *noise, seed)?
            }
            Generator::Misaligned { sigma, shifts } => {
                generate_misaligned_dataset(mesh, ops, n, *sigma, shifts, seed)?
            }
        })
    }
}

pub fn truth_doc(generator: &str, d: &SyntheticDataset, vertex_count: usize) -> TruthDoc {
    TruthDoc {
        generator: generator.to_string(),
        seed: d.seed,
        noise_sigma: d.noise_sigma,
        vertex_count,
        true_components: d
            .true_components
            .iter()
            .map(|c| c.iter().copied().collect())
            .collect(),
        true_scores: d
            .true_scores
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        shifts: d
            .shifts
            .as_ref()
            .map(|v| v.iter().map(|&(t, p)| [t, p]).collect()),
    }
}

pub fn run(mut s: Settings) -> Result<(), CliError> {
    let mesh = io::load_mesh_spec(&s.string("mesh", Some("icosphere:3"))?)?;
    let generator = Generator::from_settings(&mut s)?;
    let n: usize = s.parse("n", "50")?;
    let seed: u64 = s.parse("seed", "0")?;
    let output = s.path("output")?;
    let ops = FemOperators::at_vertices(&mesh)?;
    let d = generator.generate(&mesh, &ops, n, seed)?;

    io::create_dir(&output)?;
    io::write_data(&output.join("data.csv"), &d.x)?;
    io::write_json(
        &output.join("truth.json"),
        &truth_doc(generator.name(), &d, mesh.vertex_count()),
    )?;
    io::write_json(&output.join("manifest.json"), &s.manifest())?;
    log::info!("wrote {n} functions on {} vertices", mesh.vertex_count());
    Ok(())
}
