use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use smfpca::metrics::{evaluate, Estimate};
use smfpca::{fit, mv_pca, EvaluationReport, FemOperators, FitOptions, Selection, TriangleMesh};

use super::fit::{fit_options, lambda_grid};
use super::simulate::Generator;
use crate::config::Settings;
use crate::error::CliError;
use crate::io::{self, ResultDoc, TruthDoc};

pub const KEYS: &[&str] = &[
    "mesh",
    "result",
    "truth",
    "output",
    "study",
    "replicates",
    "generator",
    "n",
    "sigmas",
    "noise",
    "eigen_indices",
    "shifts",
    "seed",
    "folds",
    "lambda_grid",
    "max_iterations",
    "tolerance",
    "center",
];

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Mesh file (OFF) or `icosphere:N`
    #[arg(long)]
    pub mesh: Option<String>,
    /// result.json written by `fit`
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// truth.json written by `simulate`
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run a replicate study comparing SM-FPCA with MV-PCA
    #[arg(long)]
    pub study: Option<bool>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub sigmas: Option<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub eigen_indices: Option<String>,
    #[arg(long)]
    pub shifts: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub center: Option<bool>,
}

impl EvaluateArgs {
    pub fn apply(&self, s: &mut Settings) {
        s.flag("mesh", self.mesh.as_ref());
        s.flag("result", self.result.as_ref().map(|p| p.display()));
        s.flag("truth", self.truth.as_ref().map(|p| p.display()));
        s.flag("output", self.output.as_ref().map(|p| p.display()));
        s.flag("study", self.study);
        s.flag("replicates", self.replicates);
        s.flag("generator", self.generator.as_ref());
        s.flag("n", self.n);
        s.flag("sigmas", self.sigmas.as_ref());
        s.flag("noise", self.noise);
        s.flag("eigen_indices", self.eigen_indices.as_ref());
        s.flag("shifts", self.shifts.as_ref());
        s.flag("seed", self.seed);
        s.flag("folds", self.folds);
        s.flag("lambda_grid", self.lambda_grid.as_ref());
        s.flag("max_iterations", self.max_iterations);
        s.flag("tolerance", self.tolerance);
        s.flag("center", self.center);
    }
}

pub fn run(mut s: Settings) -> Result<(), CliError> {
    if s.parse("study", "false")? {
        study(s)
    } else {
        single(s)
    }
}

fn single(mut s: Settings) -> Result<(), CliError> {
    let mesh = io::load_mesh_spec(&s.string("mesh", None)?)?;
    let result_path = s.path("result")?;
    let truth_path = s.path("truth")?;
    let output = s.path("output")?;
    let doc: ResultDoc = io::read_json(&result_path)?;
    let truth: TruthDoc = io::read_json(&truth_path)?;
    let ops = doc.operators(&mesh)?;
    if truth.vertex_count != doc.vertex_count {
        return Err(CliError::Input(format!(
            "{}: truth has {} vertices but the result has {}",
            truth_path.display(),
            truth.vertex_count,
            doc.vertex_count
        )));
    }
    if truth.true_scores.len() != doc.samples {
        return Err(CliError::Input(format!(
            "{}: truth has {} functions but the result has {}",
            truth_path.display(),
            truth.true_scores.len(),
            doc.samples
        )));
    }
    let estimate = estimate_from_doc(&doc, &result_path)?;
    let report = evaluate(&estimate, &truth.components(), &truth.scores()?, &ops)?;

    io::create_dir(&output)?;
    io::write_json(&output.join("report.json"), &report)?;
    write_report_csv(&output.join("evaluation.csv"), &report)?;
    io::write_json(&output.join("manifest.json"), &s.manifest())?;
    Ok(())
}

fn estimate_from_doc(doc: &ResultDoc, path: &Path) -> Result<Estimate, CliError> {
    let bad = |what: &str| CliError::Input(format!("{}: inconsistent {what}", path.display()));
    if doc.components.is_empty() {
        return Err(bad("component list (empty)"));
    }
    for c in &doc.components {
        if c.vertex_values.len() != doc.vertex_count || c.scores.len() != doc.samples {
            return Err(bad("component lengths"));
        }
    }
    if doc.mean_field.len() != doc.location_count {
        return Err(bad("mean field length"));
    }
    Ok(Estimate {
        loadings: doc
            .components
            .iter()
            .map(|c| DVector::from_column_slice(&c.vertex_values))
            .collect(),
        scores: doc
            .components
            .iter()
            .map(|c| DVector::from_column_slice(&c.scores) * c.function_norm)
            .collect(),
        mean_field: DVector::from_column_slice(&doc.mean_field),
        centered: doc.centered,
        cumulative_variance: doc.cumulative_variance.clone(),
        total_variance: doc.total_variance,
    })
}

fn write_report_csv(path: &Path, report: &EvaluationReport) -> Result<(), CliError> {
    let header = [
        "component",
        "pc_function_mse",
        "score_mse",
        "explained_variance",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = (0..report.pc_function_mse.len())
        .map(|l| {
            vec![
                (l + 1).to_string(),
                report.pc_function_mse[l].to_string(),
                report.score_mse[l].to_string(),
                report
                    .explained_variance_curve
                    .get(l)
                    .map_or_else(String::new, |v| v.to_string()),
            ]
        })
        .collect();
    io::write_csv(path, &header, &rows)
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
struct MethodSummary {
    median_principal_angle: f64,
    median_signal_mse: f64,
    median_pc_function_mse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
struct StudySummary {
    replicates: usize,
    generator: String,
    seeds: Vec<u64>,
    smfpca: MethodSummary,
    mvpca: MethodSummary,
    /// Fraction of replicates where SM-FPCA has the smaller principal angle.
    smfpca_angle_wins: f64,
    chosen_lambdas: Vec<Vec<f64>>,
}

struct Replicate {
    smfpca: EvaluationReport,
    mvpca: EvaluationReport,
    lambdas: Vec<f64>,
}

/// Seeds for each replicate, drawn from one stream seeded by `seed`.
pub fn replicate_seeds(seed: u64, replicates: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..replicates).map(|_| rng.next_u64()).collect()
}

fn study(mut s: Settings) -> Result<(), CliError> {
    let mesh = io::load_mesh_spec(&s.string("mesh", Some("icosphere:3"))?)?;
    if !s.is_set("generator") {
        s.flag("generator", Some("sphere"));
    }
    let generator = Generator::from_settings(&mut s)?;
    let replicates: usize = s.parse("replicates", "20")?;
    if replicates == 0 {
        return Err(CliError::Input("replicates must be positive".into()));
    }
    let n: usize = s.parse("n", "50")?;
    let seed: u64 = s.parse("seed", "0")?;
    let folds: usize = s.parse("folds", "5")?;
    let opts = fit_options(&mut s)?;
    let ops = FemOperators::at_vertices(&mesh)?;
    let grid = lambda_grid(&mut s, &ops)?;
    let output = s.path("output")?;

    let seeds = replicate_seeds(seed, replicates);
    let results: Vec<Replicate> = seeds
        .par_iter()
        .map(|&sub| replicate(&generator, &mesh, &ops, n, sub, folds, &grid, &opts))
        .collect::<Result<_, _>>()?;

    let m = results[0].smfpca.pc_function_mse.len();
    let header: Vec<String> = [
        "replicate",
        "seed",
        "method",
        "principal_angle",
        "signal_mse",
    ]
    .iter()
    .map(|h| h.to_string())
    .chain((1..=m).map(|l| format!("pc{l}_mse")))
    .collect();
    let mut rows = Vec::with_capacity(2 * replicates);
    for (r, rep) in results.iter().enumerate() {
        for (method, report) in [("smfpca", &rep.smfpca), ("mvpca", &rep.mvpca)] {
            let mut row = vec![
                r.to_string(),
                seeds[r].to_string(),
                method.to_string(),
                report.principal_angle.to_string(),
                report.signal_mse.to_string(),
            ];
            row.extend(report.pc_function_mse.iter().map(|v| v.to_string()));
            rows.push(row);
        }
    }

    let wins = results
        .iter()
        .filter(|r| r.smfpca.principal_angle < r.mvpca.principal_angle)
        .count();
    let summary = StudySummary {
        replicates,
        generator: generator.name().to_string(),
        seeds: seeds.clone(),
        smfpca: summarize(results.iter().map(|r| &r.smfpca)),
        mvpca: summarize(results.iter().map(|r| &r.mvpca)),
        smfpca_angle_wins: wins as f64 / replicates as f64,
        chosen_lambdas: results.iter().map(|r| r.lambdas.clone()).collect(),
    };

    io::create_dir(&output)?;
    io::write_csv(&output.join("replicates.csv"), &header, &rows)?;
    io::write_json(&output.join("study.json"), &summary)?;
    io::write_json(&output.join("manifest.json"), &s.manifest())?;
    log::info!(
        "median angle {:.4} (SM-FPCA) vs {:.4} (MV-PCA); SM-FPCA wins {wins}/{replicates}",
        summary.smfpca.median_principal_angle,
        summary.mvpca.median_principal_angle
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn replicate(
    generator: &Generator,
    mesh: &TriangleMesh,
    ops: &FemOperators,
    n: usize,
    seed: u64,
    folds: usize,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<Replicate, CliError> {
    let d = generator.generate(mesh, ops, n, seed)?;
    let l = d.true_components.len();
    let result = fit(&d.x, l, grid, &Selection::KFold { folds, seed }, ops, opts)?;
    let smfpca = evaluate(
        &Estimate::from_result(&result),
        &d.true_components,
        &d.true_scores,
        ops,
    )?;
    let mv = mv_pca(&d.x, l, ops)?;
    let mvpca = evaluate(
        &Estimate::from_mv_pca(&mv, &d.x, ops)?,
        &d.true_components,
        &d.true_scores,
        ops,
    )?;
    Ok(Replicate {
        smfpca,
        mvpca,
        lambdas: result.components.iter().map(|c| c.lambda).collect(),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn summarize<'a>(reports: impl Iterator<Item = &'a EvaluationReport> + Clone) -> MethodSummary {
    let m = reports
        .clone()
        .next()
        .map_or(0, |r| r.pc_function_mse.len());
    MethodSummary {
        median_principal_angle: median(reports.clone().map(|r| r.principal_angle).collect()),
        median_signal_mse: median(reports.clone().map(|r| r.signal_mse).collect()),
        median_pc_function_mse: (0..m)
            .map(|l| median(reports.clone().map(|r| r.pc_function_mse[l]).collect()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = replicate_seeds(7, 20);
        assert_eq!(a, replicate_seeds(7, 20));
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 20);
        assert_eq!(replicate_seeds(7, 5), a[..5]);
    }
}
