//! PD-completion: the map `PD_G` sending `Σ ∈ ℙ` to the unique `Q` with zeros
//! off the extended edge set and `(Q⁻¹)_ij = Σ_ij` on it.
//!
//! Two independent iterations compute the same fixed point:
//!
//! * **Hastie** (column-wise regressions on `W = Q⁻¹`). For each node `j` with
//!   neighbours `ne`, solve `W_{ne,ne} β = Σ_{ne,j}` and set
//!   `W_{−j,j} = W_{−j,ne} β`; `Q` is read off the final regressions.
//! * **IPS** (iterative proportional scaling on `Q`) over the clique cover
//!   made of all singletons and all edges. Each update forces
//!   `(Q⁻¹)_C = Σ_C`; `Q⁻¹` is carried along by low-rank updates.
//!
//! Both accept a warm start from an earlier completion of a nearby problem.

use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::spd::{inverse_spd, Cholesky, SymMatrix};
use crate::tolerances::{COMPLETION_MAX_SWEEPS, COMPLETION_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletionSettings {
    /// Max-abs stopping tolerance per sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CompletionSettings {
    fn default() -> Self {
        CompletionSettings { tol: COMPLETION_TOL, max_sweeps: COMPLETION_MAX_SWEEPS }
    }
}

impl CompletionSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("completion tol must be > 0, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("completion max_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    /// The completion, with exact zeros off the extended edge set.
    pub q: SymMatrix,
    /// Working approximation of `Q⁻¹` (reused for warm starts).
    pub w: SymMatrix,
    pub sweeps: usize,
    pub converged: bool,
    /// Convergence metric at exit: max-abs change of `W` over the last sweep
    /// (Hastie) or max-abs deviation `|(Q⁻¹)_ij − Σ_ij|` on the extended
    /// edge set (IPS).
    pub residual: f64,
}

impl CompletionResult {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { sweeps: self.sweeps, residual: self.residual })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CompletionAlgorithm {
    #[default]
    Hastie,
    Ips,
}

impl CompletionAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            CompletionAlgorithm::Hastie => "hastie",
            CompletionAlgorithm::Ips => "ips",
        }
    }

    /// Runs the algorithm, warm-started from `warm` when given. A warm start
    /// that breaks down (non-PD subproblem or no convergence) is retried cold.
    pub fn complete(
        &self,
        sigma: &SymMatrix,
        g: &Graph,
        settings: &CompletionSettings,
        warm: Option<&CompletionResult>,
    ) -> Result<CompletionResult> {
        if let Some(prev) = warm {
            let attempt = match self {
                CompletionAlgorithm::Hastie => pd_complete_hastie_from(sigma, g, settings, &prev.w),
                CompletionAlgorithm::Ips => pd_complete_ips_from(sigma, g, settings, &prev.q),
            };
            if let Ok(res) = attempt {
                if res.converged {
                    return Ok(res);
                }
            }
        }
        match self {
            CompletionAlgorithm::Hastie => pd_complete_hastie(sigma, g, settings),
            CompletionAlgorithm::Ips => pd_complete_ips(sigma, g, settings),
        }
    }
}

impl std::str::FromStr for CompletionAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hastie" => Ok(CompletionAlgorithm::Hastie),
            "ips" => Ok(CompletionAlgorithm::Ips),
            other => Err(Error::InvalidParameter(format!("unknown completion algorithm {other:?}"))),
        }
    }
}

fn check_inputs(sigma: &SymMatrix, g: &Graph, settings: &CompletionSettings) -> Result<()> {
    settings.validate()?;
    if sigma.order() != g.p() {
        return Err(Error::DimensionMismatch { expected: g.p(), found: sigma.order() });
    }
    Ok(())
}

pub fn pd_complete_hastie(sigma: &SymMatrix, g: &Graph, settings: &CompletionSettings) -> Result<CompletionResult> {
    check_inputs(sigma, g, settings)?;
    hastie(sigma, g, settings, sigma.clone())
}

/// Hastie iteration started from `init_w` instead of `Σ`. Only the
/// off-diagonal entries of `init_w` are used.
pub fn pd_complete_hastie_from(
    sigma: &SymMatrix,
    g: &Graph,
    settings: &CompletionSettings,
    init_w: &SymMatrix,
) -> Result<CompletionResult> {
    check_inputs(sigma, g, settings)?;
    if init_w.order() != sigma.order() {
        return Err(Error::DimensionMismatch { expected: sigma.order(), found: init_w.order() });
    }
    hastie(sigma, g, settings, init_w.clone())
}

/// `β` solving `W_{ne,ne} β = Σ_{ne,j}`.
fn regression(w: &SymMatrix, sigma: &SymMatrix, ne: &[usize], j: usize) -> Result<Vec<f64>> {
    let chol = Cholesky::new(&w.submatrix(ne))?;
    let mut beta: Vec<f64> = ne.iter().map(|&i| sigma.get(i, j)).collect();
    chol.solve_in_place(&mut beta);
    Ok(beta)
}

fn hastie(sigma: &SymMatrix, g: &Graph, settings: &CompletionSettings, mut w: SymMatrix) -> Result<CompletionResult> {
    let p = sigma.order();
    let nbrs: Vec<Vec<usize>> = (0..p).map(|j| g.neighbors(j)).collect();
    for j in 0..p {
        w.set(j, j, sigma.get(j, j));
    }

    let mut col = vec![0.0; p];
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        change = 0.0;
        for j in 0..p {
            let ne = &nbrs[j];
            col.iter_mut().for_each(|c| *c = 0.0);
            if !ne.is_empty() {
                let beta = regression(&w, sigma, ne, j)?;
                for (i, c) in col.iter_mut().enumerate() {
                    if i != j {
                        let row = w.row(i);
                        *c = ne.iter().zip(&beta).map(|(&k, b)| row[k] * b).sum();
                    }
                }
            }
            for (i, &c) in col.iter().enumerate() {
                if i != j {
                    change = change.max((c - w.get(i, j)).abs());
                    w.set(i, j, c);
                }
            }
        }
        if change <= settings.tol {
            converged = true;
            break;
        }
    }

    // Q from the regressions at the final W: q_jj = 1/(Σ_jj − W_{j,ne} β),
    // Q_{ne,j} = −β q_jj. Entries off the pattern are never written.
    let mut q = SymMatrix::zeros(p);
    let mut offdiag: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let ne = &nbrs[j];
        let (denom, beta) = if ne.is_empty() {
            (sigma.get(j, j), Vec::new())
        } else {
            let beta = regression(&w, sigma, ne, j)?;
            let fitted: f64 = ne.iter().zip(&beta).map(|(&k, b)| w.get(j, k) * b).sum();
            (sigma.get(j, j) - fitted, beta)
        };
        if !(denom > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: denom });
        }
        let qjj = 1.0 / denom;
        q.set(j, j, qjj);
        offdiag.push(beta.iter().map(|b| -b * qjj).collect());
    }
    for j in 0..p {
        for (a, &i) in nbrs[j].iter().enumerate() {
            if i < j {
                let b = nbrs[i].iter().position(|&k| k == j).expect("symmetric neighbour lists");
                q.set(i, j, 0.5 * (offdiag[j][a] + offdiag[i][b]));
            }
        }
    }
    Cholesky::new(&q)?;
    Ok(CompletionResult { q, w, sweeps, converged, residual: change })
}

pub fn pd_complete_ips(sigma: &SymMatrix, g: &Graph, settings: &CompletionSettings) -> Result<CompletionResult> {
    check_inputs(sigma, g, settings)?;
    let q0 = SymMatrix::from_diag(&sigma.diag().iter().map(|s| 1.0 / s).collect::<Vec<_>>());
    ips(sigma, g, settings, q0)
}

/// IPS started from `init_q`, which must lie in `ℙ(G)`.
pub fn pd_complete_ips_from(
    sigma: &SymMatrix,
    g: &Graph,
    settings: &CompletionSettings,
    init_q: &SymMatrix,
) -> Result<CompletionResult> {
    check_inputs(sigma, g, settings)?;
    if init_q.order() != sigma.order() {
        return Err(Error::DimensionMismatch { expected: sigma.order(), found: init_q.order() });
    }
    let p = init_q.order();
    for i in 0..p {
        for j in 0..i {
            if !g.has_edge(i, j) && init_q.get(i, j) != 0.0 {
                return Err(Error::NotInPG { row: i, col: j });
            }
        }
    }
    ips(sigma, g, settings, init_q.clone())
}

fn extended_residual(w: &SymMatrix, sigma: &SymMatrix, g: &Graph) -> f64 {
    let p = sigma.order();
    let mut r = 0.0f64;
    for i in 0..p {
        for j in 0..=i {
            if g.in_extended(i, j) {
                r = r.max((w.get(i, j) - sigma.get(i, j)).abs());
            }
        }
    }
    r
}

/// Inverse of a 1x1 or 2x2 symmetric block given as `[a, b, c]` = `[[a, b], [b, c]]`.
fn small_inverse(c: &[usize], m: &SymMatrix) -> Result<[f64; 3]> {
    match *c {
        [i] => {
            let a = m.get(i, i);
            if !(a > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: 0, value: a });
            }
            Ok([1.0 / a, 0.0, 0.0])
        }
        [i, j] => {
            let (a, b, d) = (m.get(i, i), m.get(i, j), m.get(j, j));
            let det = a * d - b * b;
            if !(a > 0.0 && det > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: 1, value: det });
            }
            Ok([d / det, -b / det, a / det])
        }
        _ => unreachable!("clique cover has only singletons and edges"),
    }
}

fn ips(sigma: &SymMatrix, g: &Graph, settings: &CompletionSettings, mut q: SymMatrix) -> Result<CompletionResult> {
    let p = sigma.order();
    let cover: Vec<Vec<usize>> = (0..p).map(|i| vec![i]).chain(g.edges().map(|(i, j)| vec![i, j])).collect();
    let sigma_inv: Vec<[f64; 3]> = cover.iter().map(|c| small_inverse(c, sigma)).collect::<Result<_>>()?;
    let mut w = inverse_spd(&q)?;

    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut u = vec![[0.0f64; 2]; p];
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        for (c, s_inv) in cover.iter().zip(&sigma_inv) {
            let w_inv = small_inverse(c, &w)?;
            // M = W_C⁻¹ (Σ_C − W_C) W_C⁻¹ = W_C⁻¹ Σ_C W_C⁻¹ − W_C⁻¹
            let m = match c[..] {
                [i] => {
                    let d = sigma.get(i, i) - w.get(i, i);
                    [w_inv[0] * d * w_inv[0], 0.0, 0.0]
                }
                [i, j] => {
                    let d = [sigma.get(i, i) - w.get(i, i), sigma.get(i, j) - w.get(i, j), sigma.get(j, j) - w.get(j, j)];
                    sandwich(&w_inv, &d)
                }
                _ => unreachable!(),
            };
            for (r, ur) in u.iter_mut().enumerate() {
                ur[0] = w.get(r, c[0]);
                ur[1] = if c.len() == 2 { w.get(r, c[1]) } else { 0.0 };
            }
            // W += U M Uᵀ
            for r in 0..p {
                let a = [u[r][0] * m[0] + u[r][1] * m[1], u[r][0] * m[1] + u[r][1] * m[2]];
                for s in 0..=r {
                    let delta = a[0] * u[s][0] + a[1] * u[s][1];
                    if delta != 0.0 {
                        w.set(r, s, w.get(r, s) + delta);
                    }
                }
            }
            // Q_C += Σ_C⁻¹ − W_C⁻¹
            match c[..] {
                [i] => q.set(i, i, q.get(i, i) + s_inv[0] - w_inv[0]),
                [i, j] => {
                    q.set(i, i, q.get(i, i) + s_inv[0] - w_inv[0]);
                    q.set(i, j, q.get(i, j) + s_inv[1] - w_inv[1]);
                    q.set(j, j, q.get(j, j) + s_inv[2] - w_inv[2]);
                }
                _ => unreachable!(),
            }
        }
        residual = extended_residual(&w, sigma, g);
        if residual <= settings.tol {
            // drop accumulated round-off from the low-rank updates before deciding
            w = inverse_spd(&q)?;
            residual = extended_residual(&w, sigma, g);
            if residual <= settings.tol {
                converged = true;
                break;
            }
        }
    }
    Cholesky::new(&q)?;
    Ok(CompletionResult { q, w, sweeps, converged, residual })
}

/// `A D A` for symmetric 2x2 `A`, `D` in `[a, b, c]` packing.
fn sandwich(a: &[f64; 3], d: &[f64; 3]) -> [f64; 3] {
    let ad = [a[0] * d[0] + a[1] * d[1], a[0] * d[1] + a[1] * d[2], a[1] * d[0] + a[2] * d[1], a[1] * d[1] + a[2] * d[2]];
    [
        ad[0] * a[0] + ad[1] * a[1],
        ad[0] * a[1] + ad[1] * a[2],
        ad[2] * a[1] + ad[3] * a[2],
    ]
}

/// Max over the extended edge set of `|(Q⁻¹)_ij − Σ_ij|`.
pub fn completion_residual(q: &SymMatrix, sigma: &SymMatrix, g: &Graph) -> Result<f64> {
    if q.order() != sigma.order() || q.order() != g.p() {
        return Err(Error::DimensionMismatch { expected: sigma.order(), found: q.order() });
    }
    let w = inverse_spd(q)?;
    Ok(extended_residual(&w, sigma, g))
}

/// True when every entry off the extended edge set is exactly zero.
pub fn respects_pattern(q: &SymMatrix, g: &Graph) -> bool {
    let p = q.order();
    (0..p).all(|i| (0..i).all(|j| g.has_edge(i, j) || q.get(i, j) == 0.0))
}
