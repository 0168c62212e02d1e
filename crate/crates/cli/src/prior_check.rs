//! Runs the chain without data and compares its graph marginals with the
//! exact prior values.
//!
//! With no likelihood the posterior equals the prior, so the per-edge
//! inclusion frequencies and the edge-count distribution must match the
//! prior exactly. Each comparison is a Hotelling `T²` test on 50 batch means,
//! a χ²-type test that accounts for autocorrelation in the chain. Edge-count
//! categories are merged until every group has prior mass at least
//! [`MIN_GROUP_PROB`]; the last group is dropped since group frequencies sum
//! to one.

use std::fmt;

use stgraph::diagnostics::{hotelling_batch_test, merge_categories, TestOutcome};
use stgraph::dist::{SigmaPrior, SufficientStats};
use stgraph::graphs::{enumerate_graphs, max_edges};
use stgraph::sampler::{chain_rng, run_chain, Model, RunStats, SamplerConfig};
use stgraph::tolerances::MCSE_BATCHES;
use stgraph::{Error, GraphPrior, Result};

pub const MIN_GROUP_PROB: f64 = 0.05;
pub const MAX_CHECK_NODES: usize = 6;

/// Exact per-pair inclusion probabilities and edge-count pmf.
pub fn exact_prior_values(prior: &GraphPrior, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let e_max = max_edges(p);
    if p > MAX_CHECK_NODES {
        return Err(Error::TooLarge { what: "node count for prior check", value: p, limit: MAX_CHECK_NODES });
    }
    if p > 5 {
        // beyond enumeration: the count pmf is closed-form and pairs are exchangeable
        let marginal = prior.edge_marginal(e_max);
        return Ok((vec![marginal; e_max], prior.count_pmf(e_max)));
    }
    let mut edges = vec![0.0; e_max];
    let mut counts = vec![0.0; e_max + 1];
    for g in enumerate_graphs(p)? {
        let w = prior.log_prior(&g).exp();
        counts[g.num_edges()] += w;
        for (k, present) in g.indicators().into_iter().enumerate() {
            if present {
                edges[k] += w;
            }
        }
    }
    Ok((edges, counts))
}

#[derive(Clone, Debug)]
pub struct PriorCheckReport {
    pub p: usize,
    pub prior: GraphPrior,
    pub alpha: f64,
    pub samples: u64,
    pub expected_edges: Vec<f64>,
    pub observed_edges: Vec<f64>,
    pub expected_counts: Vec<f64>,
    pub observed_counts: Vec<f64>,
    pub count_groups: Vec<Vec<usize>>,
    pub edge_test: TestOutcome,
    pub count_test: TestOutcome,
    pub stats: RunStats,
}

impl PriorCheckReport {
    pub fn edge_pass(&self) -> bool {
        self.edge_test.passes(self.alpha)
    }

    pub fn count_pass(&self) -> bool {
        self.count_test.passes(self.alpha)
    }

    pub fn passes(&self) -> bool {
        self.edge_pass() && self.count_pass()
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for PriorCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "prior = {:?}", self.prior)?;
        writeln!(f, "p = {}", self.p)?;
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "accept_rate_graph = {}", self.stats.accept_rate_graph())?;
        writeln!(f, "accept_rate_sigma = {}", self.stats.accept_rate_sigma())?;
        writeln!(f, "completion_failures = {}", self.stats.completion_failures)?;
        writeln!(f, "\nedge,expected,observed")?;
        let pairs = (0..self.p).flat_map(|i| (i + 1..self.p).map(move |j| (i, j)));
        for ((i, j), (e, o)) in pairs.zip(self.expected_edges.iter().zip(&self.observed_edges)) {
            writeln!(f, "{}-{},{e},{o}", i + 1, j + 1)?;
        }
        writeln!(
            f,
            "edge_marginals: T2 = {}, df = ({}, {}), p_value = {}, {}",
            self.edge_test.statistic,
            self.edge_test.df.0,
            self.edge_test.df.1,
            self.edge_test.p_value,
            verdict(self.edge_pass())
        )?;
        writeln!(f, "\nnum_edges,expected,observed")?;
        for (k, (e, o)) in self.expected_counts.iter().zip(&self.observed_counts).enumerate() {
            writeln!(f, "{k},{e},{o}")?;
        }
        let groups: Vec<String> = self
            .count_groups
            .iter()
            .map(|g| match (g.first(), g.last()) {
                (Some(a), Some(b)) if a != b => format!("{a}-{b}"),
                (Some(a), _) => a.to_string(),
                _ => String::new(),
            })
            .collect();
        writeln!(f, "count_groups = {}", groups.join(" "))?;
        writeln!(
            f,
            "edge_count_pmf: T2 = {}, df = ({}, {}), p_value = {}, {}",
            self.count_test.statistic,
            self.count_test.df.0,
            self.count_test.df.1,
            self.count_test.p_value,
            verdict(self.count_pass())
        )?;
        writeln!(f, "\nverdict = {}", verdict(self.passes()))
    }
}

/// Runs one chain (stream 0 of `config.seed`) with no data and tests its
/// graph marginals at level `alpha`.
pub fn run_prior_check(
    graph_prior: &GraphPrior,
    sigma_prior: SigmaPrior,
    config: &SamplerConfig,
    alpha: f64,
) -> Result<PriorCheckReport> {
    let p = sigma_prior.order();
    let (expected_edges, expected_counts) = exact_prior_values(graph_prior, p)?;
    let e_max = max_edges(p);
    let groups = merge_categories(&expected_counts, MIN_GROUP_PROB);
    let mut group_of = vec![0; e_max + 1];
    for (gi, g) in groups.iter().enumerate() {
        for &k in g {
            group_of[k] = gi;
        }
    }
    let tested_groups = groups.len().saturating_sub(1);
    let group_target: Vec<f64> =
        groups[..tested_groups].iter().map(|g| g.iter().map(|&k| expected_counts[k]).sum()).collect();

    config.validate(p)?;
    let retained = (config.burn_in..config.iterations).filter(|t| t % config.thin == 0).count() as u64;
    let batches = MCSE_BATCHES as u64;
    let batch_len = retained / batches;
    if batch_len == 0 {
        return Err(Error::NoSamples);
    }
    let mut edge_sums = vec![vec![0.0; e_max]; MCSE_BATCHES];
    let mut group_sums = vec![vec![0.0; tested_groups]; MCSE_BATCHES];
    let mut edge_total = vec![0u64; e_max];
    let mut count_total = vec![0u64; e_max + 1];
    let mut seen = 0u64;

    let model = Model::new(SufficientStats::empty(p), sigma_prior, graph_prior.clone())?;
    let mut rng = chain_rng(config.seed, 0);
    let (_, stats) = run_chain(&model, config, None, &mut rng, |rec| {
        if rec.iter < config.burn_in {
            return Ok(());
        }
        let batch = (seen / batch_len) as usize;
        seen += 1;
        let ind = rec.graph.indicators();
        for (k, &present) in ind.iter().enumerate() {
            if present {
                edge_total[k] += 1;
            }
        }
        count_total[rec.num_edges] += 1;
        if batch < MCSE_BATCHES {
            for (k, &present) in ind.iter().enumerate() {
                if present {
                    edge_sums[batch][k] += 1.0;
                }
            }
            let g = group_of[rec.num_edges];
            if g < tested_groups {
                group_sums[batch][g] += 1.0;
            }
        }
        Ok(())
    })?;

    let scale = 1.0 / batch_len as f64;
    let to_means = |sums: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        sums.into_iter().map(|v| v.into_iter().map(|x| x * scale).collect()).collect()
    };
    let edge_test = hotelling_batch_test(&to_means(edge_sums), &expected_edges)?;
    let count_test = hotelling_batch_test(&to_means(group_sums), &group_target)?;
    let n = seen as f64;
    Ok(PriorCheckReport {
        p,
        prior: graph_prior.clone(),
        alpha,
        samples: seen,
        expected_edges,
        observed_edges: edge_total.iter().map(|&c| c as f64 / n).collect(),
        expected_counts,
        observed_counts: count_total.iter().map(|&c| c as f64 / n).collect(),
        count_groups: groups,
        edge_test,
        count_test,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stgraph::dist::WishartParams;
    use stgraph::SymMatrix;

    #[test]
    fn exact_values_match_closed_forms() {
        for prior in [
            GraphPrior::Uniform,
            GraphPrior::DoubleUniform,
            GraphPrior::truncated_geometric(0.7).unwrap(),
            GraphPrior::bernoulli(0.3).unwrap(),
        ] {
            let (edges, counts) = exact_prior_values(&prior, 4).unwrap();
            let pmf = prior.count_pmf(6);
            for (a, b) in counts.iter().zip(&pmf) {
                assert!((a - b).abs() < 1e-12);
            }
            for e in edges {
                assert!((e - prior.edge_marginal(6)).abs() < 1e-12);
            }
        }
        let (_, counts) = exact_prior_values(&GraphPrior::DoubleUniform, 4).unwrap();
        assert!(counts.iter().all(|c| (c - 1.0 / 7.0).abs() < 1e-12));
        assert!(exact_prior_values(&GraphPrior::Uniform, 6).is_ok());
        assert!(matches!(exact_prior_values(&GraphPrior::Uniform, 7), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn short_check_runs() {
        let sigma = SigmaPrior::Wishart(WishartParams::new(3.0, SymMatrix::identity(3)).unwrap());
        let config = SamplerConfig {
            iterations: 20_000,
            burn_in: 1_000,
            block_size: 2,
            blocks_per_iter: 1,
            c: 0.3,
            seed: 5,
            ..SamplerConfig::default()
        };
        let report = run_prior_check(&GraphPrior::Uniform, sigma, &config, 0.001).unwrap();
        assert_eq!(report.samples, 19_000);
        assert!(report.passes(), "{report}");
        let text = report.to_string();
        assert!(text.contains("verdict = PASS"));
        assert!(text.contains("\n1-2,0.5"), "{text}");
    }
}
