//! Run configuration: a TOML file with `[data]`, `[graph_prior]`,
//! `[sigma_prior]`, `[sampler]` and `[output]` sections, plus
//! `section.key=value` overrides from the command line.
//!
//! Relative paths are resolved against the directory of the config file, or
//! the working directory when no file is given.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stgraph::dist::{InvWishartParams, SigmaPrior, WishartParams};
use stgraph::graphs::{max_edges, theta_for_expected_edges};
use stgraph::sampler::{proposal_k, SamplerConfig};
use stgraph::{CompletionAlgorithm, CompletionSettings, GraphPrior, SymMatrix};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// CSV file, observations in rows. Without a path the run has no data
    /// (`m = 0`) and `variables` gives the dimension.
    pub path: Option<PathBuf>,
    /// Keep this many highest-variance columns.
    pub variables: Option<usize>,
    pub normalize: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GraphPriorSection {
    /// `uniform`, `double_uniform`, `trunc_geometric` or `bernoulli`.
    pub kind: String,
    pub theta: Option<f64>,
    pub expected_edges: Option<f64>,
    pub rho: Option<f64>,
}

impl Default for GraphPriorSection {
    fn default() -> Self {
        GraphPriorSection { kind: "uniform".into(), theta: None, expected_edges: None, rho: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaPriorSection {
    /// `wishart` or `inverse_wishart`.
    pub family: String,
    pub delta: f64,
    /// `D = d_scale · I`. Defaults to 50 when `d_file` is absent.
    pub d_scale: Option<f64>,
    /// Square CSV holding `D`.
    pub d_file: Option<PathBuf>,
}

impl Default for SigmaPriorSection {
    fn default() -> Self {
        SigmaPriorSection { family: "wishart".into(), delta: 1.0, d_scale: None, d_file: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub block_size: usize,
    pub blocks_per_iter: usize,
    pub c: f64,
    pub seed: u64,
    pub chains: usize,
    pub algorithm: String,
    pub completion_tol: f64,
    pub completion_max_sweeps: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        SamplerSection {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            block_size: s.block_size,
            blocks_per_iter: s.blocks_per_iter,
            c: s.c,
            seed: s.seed,
            chains: 1,
            algorithm: s.algorithm.name().into(),
            completion_tol: s.completion.tol,
            completion_max_sweeps: s.completion.max_sweeps,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("stgraph_out") }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub data: DataSection,
    pub graph_prior: GraphPriorSection,
    pub sigma_prior: SigmaPriorSection,
    pub sampler: SamplerSection,
    pub output: OutputSection,
    /// Directory that relative paths refer to.
    pub base_dir: PathBuf,
}

const SECTIONS: [&str; 5] = ["data", "graph_prior", "sigma_prior", "sampler", "output"];

fn section<T: for<'de> Deserialize<'de> + Default>(table: &toml::Table, name: &str) -> CliResult<T> {
    match table.get(name) {
        None => Ok(T::default()),
        Some(toml::Value::Table(t)) => {
            t.clone().try_into().map_err(|e: toml::de::Error| CliError::config(name, e.message().trim()))
        }
        Some(_) => Err(CliError::config(name, "expected a table")),
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `section.key=value` override.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not of the form section.key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} must be section.key")));
    }
    let sec = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match sec {
        toml::Value::Table(t) => {
            t.insert(parts[1].to_string(), parse_value(raw.trim()));
            Ok(())
        }
        _ => Err(CliError::config(parts[0], "expected a table")),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[String]) -> CliResult<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("invalid TOML: {}", e.message().trim())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(unknown) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(CliError::config(unknown, "unknown section"));
        }
        Ok(RunConfig {
            data: section(&table, "data")?,
            graph_prior: section(&table, "graph_prior")?,
            sigma_prior: section(&table, "sigma_prior")?,
            sampler: section(&table, "sampler")?,
            output: section(&table, "output")?,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Reads `path` (if any) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Self::from_toml_str(&text, &base, overrides)
            }
            None => Self::from_toml_str("", Path::new(""), overrides),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// The graph prior and, for the truncated geometric, the value of `θ` used.
    pub fn graph_prior(&self, p: usize) -> CliResult<(GraphPrior, Option<f64>)> {
        let g = &self.graph_prior;
        let field = |k: &str| format!("graph_prior.{k}");
        let reject = |name: &str, v: Option<f64>| match v {
            Some(_) => Err(CliError::config(&field(name), format!("not used by kind {:?}", g.kind))),
            None => Ok(()),
        };
        match g.kind.as_str() {
            "uniform" | "double_uniform" => {
                reject("theta", g.theta)?;
                reject("expected_edges", g.expected_edges)?;
                reject("rho", g.rho)?;
                Ok((if g.kind == "uniform" { GraphPrior::Uniform } else { GraphPrior::DoubleUniform }, None))
            }
            "trunc_geometric" => {
                reject("rho", g.rho)?;
                let theta = match (g.theta, g.expected_edges) {
                    (Some(t), None) => t,
                    (None, Some(e)) => theta_for_expected_edges(e, max_edges(p))
                        .map_err(|err| CliError::config(&field("expected_edges"), err))?,
                    _ => {
                        return Err(CliError::config(
                            &field("theta"),
                            "give exactly one of theta and expected_edges",
                        ))
                    }
                };
                let prior = GraphPrior::truncated_geometric(theta).map_err(|e| CliError::config(&field("theta"), e))?;
                Ok((prior, Some(theta)))
            }
            "bernoulli" => {
                reject("theta", g.theta)?;
                reject("expected_edges", g.expected_edges)?;
                let rho = g.rho.ok_or_else(|| CliError::config(&field("rho"), "required for kind \"bernoulli\""))?;
                Ok((GraphPrior::bernoulli(rho).map_err(|e| CliError::config(&field("rho"), e))?, None))
            }
            other => Err(CliError::config(
                &field("kind"),
                format!("unknown kind {other:?} (uniform, double_uniform, trunc_geometric, bernoulli)"),
            )),
        }
    }

    pub fn d_matrix(&self, p: usize) -> CliResult<SymMatrix> {
        let s = &self.sigma_prior;
        match (s.d_scale, &s.d_file) {
            (Some(_), Some(_)) => Err(CliError::config("sigma_prior.d_file", "give at most one of d_scale and d_file")),
            (_, Some(file)) => {
                let m = stgraph::dataio::read_matrix_csv(self.resolve(file))?;
                if m.rows() != p || m.cols() != p {
                    return Err(CliError::config(
                        "sigma_prior.d_file",
                        format!("expected a {p}x{p} matrix, found {}x{}", m.rows(), m.cols()),
                    ));
                }
                SymMatrix::from_row_major(p, m.values().to_vec()).map_err(|e| CliError::config("sigma_prior.d_file", e))
            }
            (scale, None) => {
                let c = scale.unwrap_or(50.0);
                if !(c > 0.0) || !c.is_finite() {
                    return Err(CliError::config("sigma_prior.d_scale", format!("must be positive, got {c}")));
                }
                Ok(SymMatrix::scaled_identity(p, c))
            }
        }
    }

    pub fn sigma_prior(&self, p: usize) -> CliResult<SigmaPrior> {
        let s = &self.sigma_prior;
        let d = self.d_matrix(p)?;
        let wrap = |e: stgraph::Error| match e {
            stgraph::Error::NotPositiveDefinite { .. } => CliError::config("sigma_prior.d_file", "D is not positive definite"),
            other => CliError::config("sigma_prior.delta", other),
        };
        match s.family.as_str() {
            "wishart" => Ok(SigmaPrior::Wishart(WishartParams::new(s.delta, d).map_err(wrap)?)),
            "inverse_wishart" => Ok(SigmaPrior::InverseWishart(InvWishartParams::new(s.delta, d).map_err(wrap)?)),
            other => Err(CliError::config("sigma_prior.family", format!("unknown family {other:?} (wishart, inverse_wishart)"))),
        }
    }

    /// Validated sampler settings for dimension `p`.
    pub fn sampler_config(&self, p: usize) -> CliResult<SamplerConfig> {
        let s = &self.sampler;
        let f = |k: &str| format!("sampler.{k}");
        if s.iterations == 0 {
            return Err(CliError::config(&f("iterations"), "must be at least 1"));
        }
        if s.burn_in >= s.iterations {
            return Err(CliError::config(
                &f("burn_in"),
                format!("must be smaller than sampler.iterations ({} >= {})", s.burn_in, s.iterations),
            ));
        }
        if s.thin == 0 {
            return Err(CliError::config(&f("thin"), "must be at least 1"));
        }
        if s.block_size < 2 || s.block_size > p {
            return Err(CliError::config(&f("block_size"), format!("must lie in [2, {p}], got {}", s.block_size)));
        }
        if s.blocks_per_iter == 0 {
            return Err(CliError::config(&f("blocks_per_iter"), "must be at least 1"));
        }
        if !(s.c > 0.0) || !s.c.is_finite() {
            return Err(CliError::config(&f("c"), format!("must be positive, got {}", s.c)));
        }
        if s.chains == 0 {
            return Err(CliError::config(&f("chains"), "must be at least 1"));
        }
        let algorithm: CompletionAlgorithm = s.algorithm.parse().map_err(|e| CliError::config(&f("algorithm"), e))?;
        let completion = CompletionSettings { tol: s.completion_tol, max_sweeps: s.completion_max_sweeps };
        completion.validate().map_err(|e| CliError::config(&f("completion_tol"), e))?;
        let cfg = SamplerConfig {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            block_size: s.block_size,
            blocks_per_iter: s.blocks_per_iter,
            c: s.c,
            seed: s.seed,
            completion,
            algorithm,
            drop_graph_proposal_ratio: false,
        };
        cfg.validate(p)?;
        Ok(cfg)
    }

    /// The configuration with every derived quantity filled in, as TOML.
    pub fn resolved_toml(&self, p: usize, m: usize, theta: Option<f64>) -> CliResult<String> {
        let mut graph_prior = self.graph_prior.clone();
        if let Some(t) = theta {
            // 10 significant digits
            graph_prior.theta = Some(format!("{t:.9e}").parse().expect("formatted float parses"));
        }
        let sigma_prior = SigmaPriorSection {
            d_scale: if self.sigma_prior.d_file.is_none() { Some(self.sigma_prior.d_scale.unwrap_or(50.0)) } else { None },
            ..self.sigma_prior.clone()
        };
        let resolved = Resolved {
            data: DataSection { path: self.data.path.as_ref().map(|p| self.resolve(p)), ..self.data.clone() },
            graph_prior,
            sigma_prior,
            sampler: self.sampler.clone(),
            output: OutputSection { dir: self.output_dir() },
            derived: Derived {
                p,
                m,
                max_edges: max_edges(p),
                k: proposal_k(self.sampler.c),
                chain_seeds: (0..self.sampler.chains).map(|i| format!("{}:{}", self.sampler.seed, i)).collect(),
            },
        };
        toml::to_string(&resolved).map_err(|e| CliError::Config(format!("cannot serialize resolved config: {e}")))
    }
}

#[derive(Serialize)]
struct Derived {
    p: usize,
    m: usize,
    max_edges: usize,
    /// Proposal concentration `2/c² + 2`.
    k: f64,
    /// Generator seed and stream index of each chain.
    chain_seeds: Vec<String>,
}

#[derive(Serialize)]
struct Resolved {
    data: DataSection,
    graph_prior: GraphPriorSection,
    sigma_prior: SigmaPriorSection,
    sampler: SamplerSection,
    output: OutputSection,
    derived: Derived,
}
