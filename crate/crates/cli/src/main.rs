//! `sonclust`: generate data, build graphs, solve single γ or γ paths,
//! compute recovery bounds and evaluate partitions.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or malformed input, 3 solver did
//! not converge or failed.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use sonclust::{
    generate, kmeans_lloyd, rand_index, recovery_bounds, CsvOrientation, Dataset, Error, NormKind, PathOptions,
    PathRecord, PathRunner, SolverKind, SyntheticKind, SyntheticSpec, WeightGraph,
};

use crate::io::{load_dataset, load_labels, provenance, write_json, write_solution, write_text, Failure};

#[derive(Parser)]
#[command(name = "sonclust", version, about = "Weighted sum-of-norms convex clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (CSV with labels) and a JSON descriptor.
    Generate(GenerateArgs),
    /// Build the weighted k-NN graph of a dataset and write it as an edge list.
    Graph(GraphCmdArgs),
    /// Solve one γ.
    Solve(SolveArgs),
    /// Solve a sequence of γ values, warm-starting each from the previous one.
    Path(PathArgs),
    /// Compute the recovery interval for the labeled partition of a dataset.
    Bounds(BoundsArgs),
    /// Rand index between two labelings, optionally against a k-means baseline.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    TwoHalfMoons,
    GaussianBlobs,
    UnbalancedGaussian,
    SemiSphericalShells,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    kind: Kind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise level of the half moons.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Blob centers as `x,y;x,y;…`.
    #[arg(long)]
    centers: Option<String>,
    /// Standard deviation of every blob.
    #[arg(long, default_value_t = 0.5)]
    std: f64,
    /// Blob sizes as `a,b,…`; the points are split evenly if omitted.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub(crate) struct DataArgs {
    /// Dataset CSV, one point per row. A header column named `label` holds
    /// ground-truth labels.
    #[arg(long)]
    pub data: PathBuf,
    /// The last column holds labels (for files without a header).
    #[arg(long)]
    pub labels: bool,
    /// Points are columns instead of rows; with --labels the last row holds labels.
    #[arg(long)]
    pub transpose: bool,
    /// Map every feature affinely onto [0, 1] before clustering.
    #[arg(long)]
    pub scale: bool,
}

#[derive(Args)]
pub(crate) struct GraphArgs {
    /// Neighbors per point.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Gaussian weight parameter: w_ij = exp(−φ‖a_i − a_j‖²).
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    /// Read the edge list (`i j w`, 1-based) instead of building a k-NN graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Add every within-cluster pair of the labeled partition.
    #[arg(long)]
    pub within_cluster: bool,
}

#[derive(Args)]
struct GraphCmdArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Ssnal,
    Admm,
}

#[derive(Args)]
pub(crate) struct SolverArgs {
    /// Norm of the fusion penalty: 1, 2 or inf.
    #[arg(long, default_value = "2", value_parser = parse_norm)]
    pub p: NormKind,
    /// Stop once every relative KKT residual is below this.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "ssnal")]
    solver: SolverArg,
}

impl SolverArgs {
    fn options(&self, warm_start: bool) -> PathOptions {
        let mut opts = PathOptions::default().with_tol(self.tol);
        opts.solver = match self.solver {
            SolverArg::Ssnal => SolverKind::Ssnal,
            SolverArg::Admm => SolverKind::Admm,
        };
        opts.warm_start = warm_start;
        opts
    }

    pub fn solver_name(&self) -> &'static str {
        match self.solver {
            SolverArg::Ssnal => "ssnal",
            SolverArg::Admm => "admm",
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    gamma: f64,
    /// Also write the per-iteration Newton trace.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// `start:step:stop` or a comma-separated increasing list.
    #[arg(long, value_parser = parse_gammas)]
    gammas: Gammas,
    /// Solve every γ from scratch.
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value = "2", value_parser = parse_norm)]
    p: NormKind,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels (`index,label` or any CSV with a `label` column).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth labels, in the same formats.
    #[arg(long)]
    truth: PathBuf,
    /// Also run k-means with this many clusters and report its Rand index.
    #[arg(long)]
    kmeans: Option<usize>,
    /// Points for k-means; defaults to the feature columns of --truth.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone)]
struct Gammas(Vec<f64>);

fn parse_norm(s: &str) -> Result<NormKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Drops the ulp noise that `start + i·step` picks up, so `0.2:0.2:1` prints as written.
fn tidy(x: f64) -> f64 {
    format!("{x:.12e}").parse().unwrap_or(x)
}

fn parse_gammas(s: &str) -> Result<Gammas, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number"));
    let values: Vec<f64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, step, stop] = parts[..] else {
            return Err("expected start:step:stop".into());
        };
        let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
        if !(step > 0.0) || !(stop >= start) {
            return Err("need step > 0 and stop >= start".into());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| tidy(start + i as f64 * step)).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err("every γ must be positive and finite".into());
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err("γ values must be strictly increasing".into());
    }
    Ok(Gammas(values))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Failure::usage(format!("{what}: {t:?} is not a number"))))
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("SONCLUST_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Path(a) => cmd_path(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("sonclust: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<u8, Failure> {
    let kind = match a.kind {
        Kind::TwoHalfMoons => SyntheticKind::TwoHalfMoons { noise: a.noise },
        Kind::UnbalancedGaussian => SyntheticKind::UnbalancedGaussian,
        Kind::SemiSphericalShells => SyntheticKind::semi_spherical_shells(),
        Kind::GaussianBlobs => {
            let spec = a.centers.as_deref().ok_or_else(|| Failure::usage("gaussian_blobs needs --centers"))?;
            let centers = spec.split(';').map(|c| parse_list(c, "--centers")).collect::<Result<Vec<_>, _>>()?;
            let sizes = match &a.sizes {
                Some(s) => s
                    .split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|_| Failure::usage(format!("--sizes: {t:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => Vec::new(),
            };
            SyntheticKind::GaussianBlobs { centers, std: a.std, sizes }
        }
    };
    let spec = SyntheticSpec { kind, n: a.n, seed: a.seed };
    let data = generate(&spec)?;
    data.write_csv(&a.out)?;
    let mut desc = serde_json::to_value(data.descriptor("synthetic", Some(a.seed))).map_err(Error::from)?;
    desc["spec"] = serde_json::to_value(&spec).map_err(Error::from)?;
    write_json(&a.out.with_extension("json"), &desc)?;
    Ok(0)
}

pub(crate) fn build_graph(data: &Dataset, g: &GraphArgs) -> Result<WeightGraph, Failure> {
    let graph = match &g.graph {
        Some(path) => WeightGraph::read_edge_list(path, data.len())?,
        None => WeightGraph::knn(data, g.k, g.phi)?,
    };
    if !g.within_cluster {
        return Ok(graph);
    }
    let labels = data.labels.as_ref().ok_or_else(|| Failure::usage("--within-cluster: labels required"))?;
    Ok(graph.with_within_cluster_edges(&data.points, labels, g.phi)?)
}

fn cmd_graph(a: GraphCmdArgs) -> Result<u8, Failure> {
    let data = load_dataset(&a.data)?;
    let graph = build_graph(&data, &a.graph)?;
    graph.write_edge_list(&a.out)?;
    println!("{}", serde_json::to_string_pretty(&graph.summary()).map_err(Error::from)?);
    Ok(0)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn cmd_solve(a: SolveArgs) -> Result<u8, Failure> {
    if !(a.gamma.is_finite() && a.gamma > 0.0) {
        return Err(Failure::usage("--gamma must be positive"));
    }
    let data = load_dataset(&a.data)?;
    let graph = build_graph(&data, &a.graph)?;
    create_dir(&a.out_dir)?;
    let opts = a.solver.options(false);
    let prov = provenance(&a.data, &a.graph, &graph, &a.solver);
    let mut runner = PathRunner::new(&data.points, &graph, a.solver.p, &opts);
    match runner.solve(a.gamma) {
        Ok(rec) => {
            let converged = rec.report.termination.converged();
            write_solution(&a.out_dir, &data, &rec, &prov)?;
            if a.trace {
                write_text(&a.out_dir.join("newton_trace.csv"), &rec.report.newton_trace_csv())?;
            }
            if converged {
                Ok(0)
            } else {
                eprintln!("sonclust: not converged ({:?})", rec.report.termination);
                Ok(3)
            }
        }
        Err(e) => {
            let report = json!({ "schema": "v1", "gamma": a.gamma, "error": e.to_string(), "provenance": prov });
            write_json(&a.out_dir.join("report.json"), &report)?;
            Err(Failure::from(e))
        }
    }
}

fn cmd_path(a: PathArgs) -> Result<u8, Failure> {
    let data = load_dataset(&a.data)?;
    let graph = build_graph(&data, &a.graph)?;
    create_dir(&a.out_dir)?;
    let warm = !a.no_warm_start;
    let opts = a.solver.options(warm);
    let gammas = &a.gammas.0;
    let results: Vec<Result<PathRecord, Error>> = if warm {
        let mut runner = PathRunner::new(&data.points, &graph, a.solver.p, &opts);
        gammas.iter().map(|&g| runner.solve(g)).collect()
    } else {
        // Independent solves; order is restored by the indexed collect.
        gammas.par_iter().map(|&g| PathRunner::new(&data.points, &graph, a.solver.p, &opts).solve(g)).collect()
    };

    let mut prov = provenance(&a.data, &a.graph, &graph, &a.solver);
    prov["warm_start"] = json!(warm);
    let truth = data.labels.as_deref();
    let mut plot =
        String::from(if truth.is_some() { "gamma,K,primal_obj,rand_index\n" } else { "gamma,K,primal_obj\n" });
    let mut timing = String::from("gamma,time_s,outer_iters,newton_iters,cg_iters\n");
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut all_converged = true;
    for (i, (&g, res)) in gammas.iter().zip(results).enumerate() {
        match res {
            Ok(rec) => {
                let dir = a.out_dir.join(format!("gamma_{i:03}"));
                create_dir(&dir)?;
                let mut v = write_solution(&dir, &data, &rec, &prov)?;
                all_converged &= rec.report.termination.converged();
                let obj = rec.report.residuals.primal_obj;
                plot.push_str(&format!("{g:?},{},{obj:?}", rec.num_clusters));
                if let Some(t) = truth {
                    plot.push_str(&format!(",{:?}", rand_index(&rec.labels, t)?));
                }
                plot.push('\n');
                let r = &rec.report;
                timing
                    .push_str(&format!("{g:?},{:.6},{},{},{}\n", r.time_s, r.outer_iters, r.newton_iters, r.cg_iters));
                v["dir"] = json!(dir.file_name().map(|f| f.to_string_lossy().into_owned()));
                v.as_object_mut().map(|o| o.remove("provenance"));
                records.push(v);
            }
            Err(e) => {
                eprintln!("sonclust: {e}");
                all_converged = false;
                failures.push(json!({ "gamma": g, "error": e.to_string() }));
            }
        }
    }
    write_text(&a.out_dir.join("plot.csv"), &plot)?;
    write_text(&a.out_dir.join("timing.csv"), &timing)?;
    let doc = json!({
        "schema": "v1",
        "gammas": gammas,
        "records": records,
        "failures": failures,
        "provenance": prov,
    });
    write_json(&a.out_dir.join("path.json"), &doc)?;
    Ok(if all_converged { 0 } else { 3 })
}

fn cmd_bounds(a: BoundsArgs) -> Result<u8, Failure> {
    let data = load_dataset(&a.data)?;
    let labels = data.labels.as_ref().ok_or_else(|| Failure::usage("bounds: labels required"))?;
    let graph = build_graph(&data, &a.graph)?;
    let bounds = recovery_bounds(&data.points, labels, &graph, a.p)?;
    let mut v = bounds.to_json();
    v["p"] = json!(a.p.to_string());
    v["num_edges"] = json!(graph.num_edges());
    match &a.out {
        Some(path) => write_json(path, &v)?,
        None => println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?),
    }
    Ok(0)
}

fn cmd_eval(a: EvalArgs) -> Result<u8, Failure> {
    if a.pred.is_none() && a.kmeans.is_none() {
        return Err(Failure::usage("eval needs --pred, --kmeans or both"));
    }
    let truth = load_labels(&a.truth)?;
    let mut out = json!({ "schema": "v1" });
    if let Some(pred) = &a.pred {
        out["rand_index"] = json!(rand_index(&load_labels(pred)?, &truth)?);
    }
    if let Some(k) = a.kmeans {
        let source = a.data.as_ref().unwrap_or(&a.truth);
        let points = sonclust::load_csv(source, io::header_has_label(source)?, CsvOrientation::RowsArePoints)?.points;
        let fit = kmeans_lloyd(&points, k, a.seed)?;
        out["kmeans"] = json!({ "K": k, "seed": a.seed, "rand_index": rand_index(&fit.labels, &truth)? });
    }
    println!("{}", serde_json::to_string_pretty(&out).map_err(Error::from)?);
    Ok(0)
}
