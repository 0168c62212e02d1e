use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use stgraph::dataio::{
    default_grid, quantile_normalize, read_matrix_csv, select_top_variance, write_edge_prob_matrix, write_histogram,
    write_matrix_csv, write_reverse_cdf, DataMatrix, TraceWriter,
};
use stgraph::dist::SufficientStats;
use stgraph::graphs::max_edges;
use stgraph::pdcomp::completion_residual;
use stgraph::sampler::{chain_rng, run_chain, EdgeAccumulator, Model, RunStats};
use stgraph::{CompletionAlgorithm, CompletionResult, CompletionSettings, Graph, SymMatrix};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::prior_check::{run_prior_check, PriorCheckReport, MAX_CHECK_NODES};

pub const PRIOR_CHECK_ALPHA: f64 = 0.001;

/// Data after variable selection and optional normalization.
#[derive(Clone, Debug)]
pub struct PreparedData {
    /// `None` when the config has no data path.
    pub data: Option<DataMatrix>,
    pub p: usize,
    pub names: Vec<String>,
    /// Sample variances of the selected columns before normalization.
    pub variances: Vec<f64>,
    /// Constant columns (0-based, after selection), written as zeros.
    pub degenerate: Vec<usize>,
}

impl PreparedData {
    pub fn stats(&self) -> SufficientStats {
        match &self.data {
            Some(d) => d.sufficient_stats(),
            None => SufficientStats::empty(self.p),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.as_ref().map_or(0, DataMatrix::rows)
    }
}

pub fn load_data(cfg: &RunConfig) -> CliResult<PreparedData> {
    let Some(path) = &cfg.data.path else {
        let p = cfg
            .data
            .variables
            .ok_or_else(|| CliError::config("data.variables", "required when data.path is absent"))?;
        if p < 2 {
            return Err(CliError::config("data.variables", format!("need at least 2 variables, got {p}")));
        }
        return Ok(PreparedData {
            data: None,
            p,
            names: (1..=p).map(|j| format!("V{j}")).collect(),
            variances: Vec::new(),
            degenerate: Vec::new(),
        });
    };
    let raw = read_matrix_csv(cfg.resolve(path))?;
    if raw.cols() < 2 {
        return Err(CliError::config("data.path", format!("need at least 2 columns, found {}", raw.cols())));
    }
    let k = cfg.data.variables.unwrap_or(raw.cols());
    let selected = select_top_variance(&raw, k).map_err(|e| CliError::config("data.variables", e))?;
    let variances = selected.column_variances();
    let (data, degenerate) = if cfg.data.normalize {
        quantile_normalize(&selected).map_err(|e| CliError::config("data.normalize", e))?
    } else {
        let constant = (0..selected.cols()).filter(|&j| variances[j] == 0.0).collect();
        (selected, constant)
    };
    Ok(PreparedData { p: data.cols(), names: data.names_or_default(), data: Some(data), variances, degenerate })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `normalized.csv` and `prepare_report.txt`; returns the report.
pub fn cmd_prepare(cfg: &RunConfig) -> CliResult<String> {
    if cfg.data.path.is_none() {
        return Err(CliError::config("data.path", "required for prepare"));
    }
    let prepared = load_data(cfg)?;
    let data = prepared.data.as_ref().expect("path given");
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_matrix_csv(data, dir.join("normalized.csv"))?;

    let mut report = String::new();
    writeln!(report, "rows = {}", data.rows()).unwrap();
    writeln!(report, "columns = {}", data.cols()).unwrap();
    writeln!(report, "normalized = {}", cfg.data.normalize).unwrap();
    for &c in &prepared.degenerate {
        let action = if cfg.data.normalize { "written as zeros" } else { "left unchanged" };
        writeln!(report, "warning: column {} is constant (degenerate), {action}", prepared.names[c]).unwrap();
    }
    writeln!(report, "\nrank,name,variance").unwrap();
    let mut order: Vec<usize> = (0..prepared.p).collect();
    order.sort_by(|&a, &b| prepared.variances[b].total_cmp(&prepared.variances[a]).then(a.cmp(&b)));
    for (rank, &c) in order.iter().enumerate() {
        writeln!(report, "{},{},{}", rank + 1, prepared.names[c], prepared.variances[c]).unwrap();
    }
    write_text(&dir.join("prepare_report.txt"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub chain_stats: Vec<RunStats>,
    pub merged: RunStats,
    pub samples: u64,
}

fn stats_lines(out: &mut String, prefix: &str, s: &RunStats) {
    writeln!(out, "{prefix}iterations = {}", s.iterations).unwrap();
    writeln!(out, "{prefix}accept_rate_graph = {}", s.accept_rate_graph()).unwrap();
    writeln!(out, "{prefix}accept_rate_sigma = {}", s.accept_rate_sigma()).unwrap();
    writeln!(out, "{prefix}graph_proposals = {}", s.graph_proposals).unwrap();
    writeln!(out, "{prefix}sigma_proposals = {}", s.sigma_proposals).unwrap();
    writeln!(out, "{prefix}completion_failures = {}", s.completion_failures).unwrap();
    writeln!(out, "{prefix}numeric_failures = {}", s.numeric_failures).unwrap();
    writeln!(out, "{prefix}max_audit_drift = {}", s.max_audit_drift).unwrap();
}

/// Runs all chains and writes the sample artifacts into the output directory.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunSummary> {
    let prepared = load_data(cfg)?;
    let p = prepared.p;
    let (graph_prior, theta) = cfg.graph_prior(p)?;
    let sigma_prior = cfg.sigma_prior(p)?;
    let sampler = cfg.sampler_config(p)?;
    let model = Model::new(prepared.stats(), sigma_prior, graph_prior)?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_text(&dir.join("resolved_config.toml"), &cfg.resolved_toml(p, prepared.rows(), theta)?)?;

    let chains = cfg.sampler.chains;
    let results: Vec<CliResult<(EdgeAccumulator, RunStats)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|i| {
                let (model, sampler, dir) = (&model, &sampler, &dir);
                scope.spawn(move || -> CliResult<(EdgeAccumulator, RunStats)> {
                    let mut trace = TraceWriter::create(dir.join(format!("chain_{i}_trace.csv")))?;
                    let mut acc = EdgeAccumulator::new(p, sampler.burn_in);
                    let mut rng = chain_rng(sampler.seed, i as u64);
                    let (_, stats) = run_chain(model, sampler, None, &mut rng, |rec| {
                        trace.push(rec)?;
                        acc.push(rec)
                    })?;
                    trace.finish()?;
                    Ok((acc, stats))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });

    let mut merged_acc = EdgeAccumulator::new(p, sampler.burn_in);
    let mut merged = RunStats::default();
    let mut chain_stats = Vec::with_capacity(chains);
    for r in results {
        let (acc, stats) = r?;
        merged_acc.merge(&acc)?;
        merged.merge(&stats);
        chain_stats.push(stats);
    }
    let probs = merged_acc.edge_probabilities()?;
    write_edge_prob_matrix(&probs, &prepared.names, dir.join("edge_probabilities.csv"))?;
    write_histogram(merged_acc.edge_count_histogram(), dir.join("edge_count_histogram.csv"))?;
    write_reverse_cdf(&probs, &default_grid(), dir.join("reverse_cdf.csv"))?;

    let mut text = String::new();
    writeln!(text, "chains = {chains}").unwrap();
    writeln!(text, "p = {p}").unwrap();
    writeln!(text, "m = {}", prepared.rows()).unwrap();
    writeln!(text, "retained_samples = {}", merged_acc.samples()).unwrap();
    writeln!(text, "mean_num_edges = {}", mean_count(merged_acc.edge_count_histogram())).unwrap();
    stats_lines(&mut text, "", &merged);
    for (i, s) in chain_stats.iter().enumerate() {
        stats_lines(&mut text, &format!("chain_{i}."), s);
    }
    write_text(&dir.join("run_stats.txt"), &text)?;
    Ok(RunSummary { output_dir: dir, chain_stats, merged, samples: merged_acc.samples() })
}

fn mean_count(hist: &[u64]) -> f64 {
    let n: u64 = hist.iter().sum();
    hist.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / n.max(1) as f64
}

/// Prior-recovery check on `data.variables` nodes; writes `prior_check.txt`.
/// `corrupt` drops the graph proposal ratio (negative control).
pub fn cmd_prior_check(cfg: &RunConfig, corrupt: bool) -> CliResult<PriorCheckReport> {
    let p = cfg.data.variables.ok_or_else(|| CliError::config("data.variables", "required for prior-check"))?;
    if !(2..=MAX_CHECK_NODES).contains(&p) {
        return Err(CliError::Core(stgraph::Error::TooLarge {
            what: "node count for prior check",
            value: p,
            limit: MAX_CHECK_NODES,
        }));
    }
    let (graph_prior, _) = cfg.graph_prior(p)?;
    let sigma_prior = cfg.sigma_prior(p)?;
    let mut sampler = cfg.sampler_config(p)?;
    sampler.drop_graph_proposal_ratio = corrupt;
    let report = run_prior_check(&graph_prior, sigma_prior, &sampler, PRIOR_CHECK_ALPHA)?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_text(&dir.join("prior_check.txt"), &report.to_string())?;
    Ok(report)
}

fn read_square(path: &Path) -> CliResult<SymMatrix> {
    let m = read_matrix_csv(path)?;
    if m.rows() != m.cols() {
        return Err(CliError::Config(format!("{}: expected a square matrix, found {}x{}", path.display(), m.rows(), m.cols())));
    }
    Ok(SymMatrix::from_row_major(m.rows(), m.values().to_vec())?)
}

/// Result of [`cmd_complete`]: the completion and `max |(Q⁻¹ − Σ)_ij|` on the pattern.
#[derive(Clone, Debug)]
pub struct CompleteOutcome {
    pub result: CompletionResult,
    pub pattern_residual: f64,
    pub report: String,
}

/// One-shot PD-completion of the matrix in `sigma_path` on the graph in
/// `graph_path`; `Q` goes to `out` as CSV.
pub fn cmd_complete(
    sigma_path: &Path,
    graph_path: &Path,
    algorithm: CompletionAlgorithm,
    settings: &CompletionSettings,
    out: &Path,
) -> CliResult<CompleteOutcome> {
    let sigma = read_square(sigma_path)?;
    let text = std::fs::read_to_string(graph_path).map_err(|e| CliError::io(graph_path, e))?;
    let graph = Graph::parse_edge_list(&text)?;
    if graph.p() != sigma.order() {
        return Err(CliError::Config(format!(
            "graph has {} nodes but the matrix has order {}",
            graph.p(),
            sigma.order()
        )));
    }
    let result = algorithm.complete(&sigma, &graph, settings, None)?;
    let pattern_residual = completion_residual(&result.q, &sigma, &graph)?;
    let p = sigma.order();
    let q = DataMatrix::new(p, p, result.q.as_slice().to_vec(), None)?;
    write_matrix_csv(&q, out)?;
    let mut report = String::new();
    writeln!(report, "algorithm = {}", algorithm.name()).unwrap();
    writeln!(report, "p = {p}").unwrap();
    writeln!(report, "edges = {} of {}", graph.num_edges(), max_edges(p)).unwrap();
    writeln!(report, "sweeps = {}", result.sweeps).unwrap();
    writeln!(report, "converged = {}", result.converged).unwrap();
    writeln!(report, "convergence_metric = {}", result.residual).unwrap();
    writeln!(report, "residual = {pattern_residual}").unwrap();
    Ok(CompleteOutcome { result, pattern_residual, report })
}
