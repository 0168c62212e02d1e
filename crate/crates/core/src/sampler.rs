//! Metropolis-Hastings chain on `(Σ, G)`.
//!
//! Each iteration makes one single-edge graph proposal at fixed `Σ`, then
//! `blocks_per_iter` proposals that redraw the Schur complement of a random
//! block of `Σ` at fixed off-block entries. The precision matrix of a state is
//! always `Q = PD_G(Σ)`, cached together with the likelihood and both prior
//! terms.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{gaussian_loglik, log_pdf_inv_wishart, sample_inv_wishart, InvWishartParams, SigmaPrior, SufficientStats};
use crate::error::{Error, Result};
use crate::graphs::{max_edges, pair_from_index, propose_graph, Graph, GraphPrior};
use crate::pdcomp::{completion_residual, CompletionAlgorithm, CompletionResult, CompletionSettings};
use crate::spd::{schur_parts, BlockSplit, SymMatrix};
use crate::tolerances::{AUDIT_INTERVAL, AUDIT_TOL};

/// Data and priors defining the target `π(Σ, G | x)`.
#[derive(Clone, Debug)]
pub struct Model {
    pub stats: SufficientStats,
    pub sigma_prior: SigmaPrior,
    pub graph_prior: GraphPrior,
}

impl Model {
    pub fn new(stats: SufficientStats, sigma_prior: SigmaPrior, graph_prior: GraphPrior) -> Result<Self> {
        if stats.order() != sigma_prior.order() {
            return Err(Error::DimensionMismatch { expected: sigma_prior.order(), found: stats.order() });
        }
        graph_prior.validate()?;
        Ok(Model { stats, sigma_prior, graph_prior })
    }

    pub fn order(&self) -> usize {
        self.stats.order()
    }
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub block_size: usize,
    pub blocks_per_iter: usize,
    /// Target ratio of proposal SD to current value for diagonal Schur entries.
    pub c: f64,
    pub seed: u64,
    pub completion: CompletionSettings,
    pub algorithm: CompletionAlgorithm,
    /// Negative control: drops the graph proposal ratio from the acceptance
    /// probability, which breaks detailed balance.
    #[doc(hidden)]
    pub drop_graph_proposal_ratio: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 1_000_000,
            burn_in: 100_000,
            thin: 1,
            block_size: 20,
            blocks_per_iter: 7,
            c: 1.0 / 35.0,
            seed: 0,
            completion: CompletionSettings::default(),
            algorithm: CompletionAlgorithm::Hastie,
            drop_graph_proposal_ratio: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.block_size < 2 || self.block_size > p {
            return Err(Error::BadBlockSize { size: self.block_size, order: p });
        }
        if self.blocks_per_iter == 0 {
            return Err(Error::InvalidParameter("blocks_per_iter must be at least 1".into()));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        self.completion.validate()
    }

    pub fn k(&self) -> f64 {
        proposal_k(self.c)
    }
}

/// `k = 2/c² + 2`, so that `IW(k+2, k·S)` has mean `S` and diagonal SD `c·S_ii`.
pub fn proposal_k(c: f64) -> f64 {
    2.0 / (c * c) + 2.0
}

/// Independent stream `chain` of the generator seeded by `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Current `(Σ, G)` with cached completion and log-density terms.
#[derive(Clone, Debug)]
pub struct ChainState {
    sigma: SymMatrix,
    graph: Graph,
    completion: CompletionResult,
    log_lik: f64,
    log_prior_sigma: f64,
    log_prior_graph: f64,
}

impl ChainState {
    pub fn new(
        model: &Model,
        sigma: SymMatrix,
        graph: Graph,
        algorithm: CompletionAlgorithm,
        settings: &CompletionSettings,
    ) -> Result<Self> {
        let completion = algorithm.complete(&sigma, &graph, settings, None)?.require_converged()?;
        let log_lik = gaussian_loglik(&model.stats, &completion.q)?;
        let log_prior_sigma = model.sigma_prior.log_pdf(&sigma)?;
        let log_prior_graph = model.graph_prior.log_prior(&graph);
        Ok(ChainState { sigma, graph, completion, log_lik, log_prior_sigma, log_prior_graph })
    }

    /// `Σ = I` and the empty graph.
    pub fn initial(model: &Model, config: &SamplerConfig) -> Result<Self> {
        let p = model.order();
        Self::new(model, SymMatrix::identity(p), Graph::empty(p), config.algorithm, &config.completion)
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// `Q = PD_G(Σ)`.
    pub fn q(&self) -> &SymMatrix {
        &self.completion.q
    }

    pub fn log_lik(&self) -> f64 {
        self.log_lik
    }

    pub fn log_prior_sigma(&self) -> f64 {
        self.log_prior_sigma
    }

    pub fn log_prior_graph(&self) -> f64 {
        self.log_prior_graph
    }

    /// Unnormalized log posterior `log π̃(Σ) + log π(G) + log L(x | Q)`.
    pub fn log_target(&self) -> f64 {
        self.log_prior_sigma + self.log_prior_graph + self.log_lik
    }

    /// Largest discrepancy between the cached terms and a recomputation, with
    /// the completion residual measured relative to the largest variance.
    pub fn audit(&self, model: &Model) -> Result<f64> {
        let ll = gaussian_loglik(&model.stats, self.q())?;
        let lps = model.sigma_prior.log_pdf(&self.sigma)?;
        let lpg = model.graph_prior.log_prior(&self.graph);
        let scale = self.sigma.diag().into_iter().fold(1.0, f64::max);
        let residual = completion_residual(self.q(), &self.sigma, &self.graph)? / scale;
        Ok([(ll - self.log_lik).abs(), (lps - self.log_prior_sigma).abs(), (lpg - self.log_prior_graph).abs(), residual]
            .into_iter()
            .fold(0.0, f64::max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// The proposal's PD-completion failed; treated as a rejection.
    CompletionFailed,
    /// The proposal was numerically outside the positive-definite cone; treated as a rejection.
    NumericFailure,
}

impl StepOutcome {
    pub fn accepted(self) -> bool {
        self == StepOutcome::Accepted
    }
}

/// Uniform random `size`-subset of `0..p`, sorted ascending.
pub fn select_random_block<R: Rng + ?Sized>(p: usize, size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if size < 2 || size > p {
        return Err(Error::BadBlockSize { size, order: p });
    }
    let mut block = sample_indices(rng, p, size).into_vec();
    block.sort_unstable();
    Ok(block)
}

fn metropolis<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha
}

fn is_numeric(e: &Error) -> bool {
    matches!(e, Error::NotPositiveDefinite { .. } | Error::NotConverged { .. })
}

/// Log acceptance ratio of moving the graph from `from` to `to` at fixed `Σ`,
/// given the log-likelihoods at both completions.
pub fn graph_log_accept_ratio(
    prior: &GraphPrior,
    from: &Graph,
    to: &Graph,
    log_lik_from: f64,
    log_lik_to: f64,
) -> Result<f64> {
    let log_q_fwd = crate::graphs::proposal_log_prob(from, to)?;
    let log_q_rev = crate::graphs::proposal_log_prob(to, from)?;
    Ok(prior.log_prior_ratio(to, from)? + log_lik_to - log_lik_from + log_q_rev - log_q_fwd)
}

/// One single-edge graph proposal at fixed `Σ`.
pub fn step_graph<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let prop = propose_graph(&state.graph, rng)?;
    let completion = match config.algorithm.complete(&state.sigma, &prop.graph, &config.completion, Some(&state.completion)) {
        Ok(c) if c.converged => c,
        Ok(_) => return Ok(StepOutcome::CompletionFailed),
        Err(e) if is_numeric(&e) => return Ok(StepOutcome::CompletionFailed),
        Err(e) => return Err(e),
    };
    let log_lik = match gaussian_loglik(&model.stats, &completion.q) {
        Ok(v) => v,
        Err(e) if is_numeric(&e) => return Ok(StepOutcome::NumericFailure),
        Err(e) => return Err(e),
    };
    let prior_ratio = model.graph_prior.log_prior_ratio(&prop.graph, &state.graph)?;
    let mut log_alpha = prior_ratio + log_lik - state.log_lik;
    if !config.drop_graph_proposal_ratio {
        log_alpha += prop.log_q_rev - prop.log_q_fwd;
    }
    if !metropolis(log_alpha, rng) {
        return Ok(StepOutcome::Rejected);
    }
    state.graph = prop.graph;
    state.completion = completion;
    state.log_lik = log_lik;
    state.log_prior_graph += prior_ratio;
    Ok(StepOutcome::Accepted)
}

/// `log q(S_to | S_from)` for the Schur-complement proposal `IW(k+2, k·S_from)`.
pub fn block_log_q(s_from: &SymMatrix, s_to: &SymMatrix, k: f64) -> Result<f64> {
    log_pdf_inv_wishart(s_to, &InvWishartParams::new(k + 2.0, s_from.scaled(k))?)
}

/// `log q(Σ_to | Σ_from)` for a block proposal on `block`. Only meaningful when
/// the two matrices agree outside the block.
pub fn sigma_block_log_q(from: &SymMatrix, to: &SymMatrix, block: &[usize], k: f64) -> Result<f64> {
    let split = BlockSplit::new(from.order(), block)?;
    let (s_from, _) = schur_parts(from, &split)?;
    let (s_to, _) = schur_parts(to, &split)?;
    block_log_q(&s_from, &s_to, k)
}

/// One proposal redrawing the Schur complement of `Σ` on `block`.
pub fn step_sigma_block<R: Rng + ?Sized>(
    state: &mut ChainState,
    block: &[usize],
    model: &Model,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let split = BlockSplit::new(state.sigma.order(), block)?;
    if split.block.len() < 2 {
        return Err(Error::BadBlockSize { size: split.block.len(), order: state.sigma.order() });
    }
    let k = config.k();
    let (s_b, c_b) = match schur_parts(&state.sigma, &split) {
        Ok(parts) => parts,
        Err(e) if is_numeric(&e) => return Ok(StepOutcome::NumericFailure),
        Err(e) => return Err(e),
    };
    let proposal = (|| {
        let fwd = InvWishartParams::new(k + 2.0, s_b.scaled(k))?;
        let s_new = sample_inv_wishart(&fwd, rng)?;
        let log_q_fwd = log_pdf_inv_wishart(&s_new, &fwd)?;
        let log_q_rev = block_log_q(&s_new, &s_b, k)?;
        let mut sigma = state.sigma.clone();
        for (a, &i) in split.block.iter().enumerate() {
            for (b, &j) in split.block.iter().enumerate().take(a + 1) {
                sigma.set(i, j, s_new.get(a, b) + c_b.get(a, b));
            }
        }
        let log_prior_sigma = model.sigma_prior.log_pdf(&sigma)?;
        Ok::<_, Error>((sigma, log_prior_sigma, log_q_rev - log_q_fwd))
    })();
    let (sigma, log_prior_sigma, log_q_diff) = match proposal {
        Ok(v) => v,
        Err(e) if is_numeric(&e) => return Ok(StepOutcome::NumericFailure),
        Err(e) => return Err(e),
    };
    let completion = match config.algorithm.complete(&sigma, &state.graph, &config.completion, Some(&state.completion)) {
        Ok(c) if c.converged => c,
        Ok(_) => return Ok(StepOutcome::CompletionFailed),
        Err(e) if is_numeric(&e) => return Ok(StepOutcome::CompletionFailed),
        Err(e) => return Err(e),
    };
    let log_lik = match gaussian_loglik(&model.stats, &completion.q) {
        Ok(v) => v,
        Err(e) if is_numeric(&e) => return Ok(StepOutcome::NumericFailure),
        Err(e) => return Err(e),
    };
    let log_alpha = log_prior_sigma - state.log_prior_sigma + log_lik - state.log_lik + log_q_diff;
    if !metropolis(log_alpha, rng) {
        return Ok(StepOutcome::Rejected);
    }
    state.sigma = sigma;
    state.completion = completion;
    state.log_lik = log_lik;
    state.log_prior_sigma = log_prior_sigma;
    Ok(StepOutcome::Accepted)
}

/// Snapshot of the chain after iteration `iter` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub iter: u64,
    pub graph: Graph,
    pub num_edges: usize,
    pub log_lik: f64,
    /// Graph proposal first, then one flag per block proposal.
    pub accept_flags: Vec<bool>,
}

impl SampleRecord {
    /// Edge indicators over the unordered pairs in lexicographic order.
    pub fn edges(&self) -> Vec<bool> {
        self.graph.indicators()
    }
}

/// Proposal counts; acceptance rates cover post-burn-in proposals only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub iterations: u64,
    pub graph_proposals: u64,
    pub graph_accepted: u64,
    pub sigma_proposals: u64,
    pub sigma_accepted: u64,
    /// Over all iterations, burn-in included.
    pub completion_failures: u64,
    pub numeric_failures: u64,
    pub max_audit_drift: f64,
}

impl RunStats {
    pub fn accept_rate_graph(&self) -> f64 {
        ratio(self.graph_accepted, self.graph_proposals)
    }

    pub fn accept_rate_sigma(&self) -> f64 {
        ratio(self.sigma_accepted, self.sigma_proposals)
    }

    pub fn merge(&mut self, other: &RunStats) {
        self.iterations += other.iterations;
        self.graph_proposals += other.graph_proposals;
        self.graph_accepted += other.graph_accepted;
        self.sigma_proposals += other.sigma_proposals;
        self.sigma_accepted += other.sigma_accepted;
        self.completion_failures += other.completion_failures;
        self.numeric_failures += other.numeric_failures;
        self.max_audit_drift = self.max_audit_drift.max(other.max_audit_drift);
    }

    fn record(&mut self, outcome: StepOutcome, graph: bool, post_burn_in: bool) {
        match outcome {
            StepOutcome::CompletionFailed => self.completion_failures += 1,
            StepOutcome::NumericFailure => self.numeric_failures += 1,
            _ => {}
        }
        if !post_burn_in {
            return;
        }
        let (proposals, accepted) = if graph {
            (&mut self.graph_proposals, &mut self.graph_accepted)
        } else {
            (&mut self.sigma_proposals, &mut self.sigma_accepted)
        };
        *proposals += 1;
        if outcome.accepted() {
            *accepted += 1;
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Runs one chain, passing every `thin`-th record (burn-in included) to `sink`.
/// Starts from `init`, or from `Σ = I` and the empty graph.
pub fn run_chain<R: Rng + ?Sized>(
    model: &Model,
    config: &SamplerConfig,
    init: Option<ChainState>,
    rng: &mut R,
    mut sink: impl FnMut(&SampleRecord) -> Result<()>,
) -> Result<(ChainState, RunStats)> {
    let p = model.order();
    config.validate(p)?;
    let mut state = match init {
        Some(s) => s,
        None => ChainState::initial(model, config)?,
    };
    let mut stats = RunStats::default();
    for t in 0..config.iterations {
        let post = t >= config.burn_in;
        let mut flags = Vec::with_capacity(1 + config.blocks_per_iter);
        let outcome = step_graph(&mut state, model, config, rng)?;
        stats.record(outcome, true, post);
        flags.push(outcome.accepted());
        for _ in 0..config.blocks_per_iter {
            let block = select_random_block(p, config.block_size, rng)?;
            let outcome = step_sigma_block(&mut state, &block, model, config, rng)?;
            stats.record(outcome, false, post);
            flags.push(outcome.accepted());
        }
        stats.iterations += 1;
        if (t + 1) % AUDIT_INTERVAL == 0 {
            let drift = state.audit(model)?;
            stats.max_audit_drift = stats.max_audit_drift.max(drift);
            if drift > AUDIT_TOL {
                return Err(Error::CacheDrift { iter: t, drift });
            }
        }
        if t % config.thin == 0 {
            sink(&SampleRecord {
                iter: t,
                num_edges: state.graph.num_edges(),
                graph: state.graph.clone(),
                log_lik: state.log_lik,
                accept_flags: flags,
            })?;
        }
    }
    Ok((state, stats))
}

/// [`run_chain`] collecting all records in memory.
pub fn collect_chain<R: Rng + ?Sized>(
    model: &Model,
    config: &SamplerConfig,
    init: Option<ChainState>,
    rng: &mut R,
) -> Result<(Vec<SampleRecord>, ChainState, RunStats)> {
    let mut records = Vec::new();
    let (state, stats) = run_chain(model, config, init, rng, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, state, stats))
}

/// Streaming edge-inclusion and edge-count tallies over post-burn-in records.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeAccumulator {
    p: usize,
    burn_in: u64,
    samples: u64,
    pair_counts: Vec<u64>,
    count_hist: Vec<u64>,
}

impl EdgeAccumulator {
    pub fn new(p: usize, burn_in: u64) -> Self {
        let e_max = max_edges(p);
        EdgeAccumulator { p, burn_in, samples: 0, pair_counts: vec![0; e_max], count_hist: vec![0; e_max + 1] }
    }

    pub fn push(&mut self, record: &SampleRecord) -> Result<()> {
        if record.graph.p() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: record.graph.p() });
        }
        if record.iter < self.burn_in {
            return Ok(());
        }
        self.samples += 1;
        self.count_hist[record.graph.num_edges()] += 1;
        for (w, &word) in record.graph.indicator_words().iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                self.pair_counts[w * 64 + b] += 1;
                bits &= bits - 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &EdgeAccumulator) -> Result<()> {
        if other.p != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: other.p });
        }
        self.samples += other.samples;
        self.pair_counts.iter_mut().zip(&other.pair_counts).for_each(|(a, b)| *a += b);
        self.count_hist.iter_mut().zip(&other.count_hist).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Number of retained samples with `k` edges, `k = 0..=E_max`.
    pub fn edge_count_histogram(&self) -> &[u64] {
        &self.count_hist
    }

    /// Inclusion counts per unordered pair, lexicographic order.
    pub fn pair_counts(&self) -> &[u64] {
        &self.pair_counts
    }

    /// Symmetric matrix of inclusion frequencies with a zero diagonal.
    pub fn edge_probabilities(&self) -> Result<SymMatrix> {
        if self.samples == 0 {
            return Err(Error::NoSamples);
        }
        let mut m = SymMatrix::zeros(self.p);
        for (k, &c) in self.pair_counts.iter().enumerate() {
            let (i, j) = pair_from_index(self.p, k);
            m.set(i, j, c as f64 / self.samples as f64);
        }
        Ok(m)
    }
}

/// Fraction of records with `iter >= burn_in` containing each edge.
pub fn estimate_edge_probabilities<'a>(
    records: impl IntoIterator<Item = &'a SampleRecord>,
    burn_in: u64,
) -> Result<SymMatrix> {
    let mut iter = records.into_iter().peekable();
    let p = iter.peek().ok_or(Error::NoSamples)?.graph.p();
    let mut acc = EdgeAccumulator::new(p, burn_in);
    for r in iter {
        acc.push(r)?;
    }
    acc.edge_probabilities()
}
