//! Batch-means Monte-Carlo standard errors and the goodness-of-fit tests used
//! to check MCMC output against exact prior values.
//!
//! Chain output is autocorrelated, so the multinomial χ² test on raw counts
//! overstates precision. [`hotelling_batch_test`] instead compares batch means
//! to their target with the batch covariance, which is the χ²-type test that
//! remains valid for a Markov chain once batches are long compared to the
//! autocorrelation time.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::spd::{Cholesky, SymMatrix};
use crate::tolerances::MCSE_BATCHES;

/// Sample mean and its batch-means standard error over `batches` equal batches.
/// Trailing observations that do not fill a batch are dropped from the error.
pub fn batch_means_mcse(xs: &[f64], batches: usize) -> Result<(f64, f64)> {
    let means = batch_means(xs, batches)?;
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((mean, (var / batches as f64).sqrt()))
}

/// [`batch_means_mcse`] with the default batch count.
pub fn mcse(xs: &[f64]) -> Result<(f64, f64)> {
    batch_means_mcse(xs, MCSE_BATCHES)
}

pub fn batch_means(xs: &[f64], batches: usize) -> Result<Vec<f64>> {
    if batches < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 batches, got {batches}")));
    }
    let len = xs.len() / batches;
    if len == 0 {
        return Err(Error::NoSamples);
    }
    Ok(xs.chunks_exact(len).take(batches).map(|c| c.iter().sum::<f64>() / len as f64).collect())
}

/// Result of a goodness-of-fit test.
#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub statistic: f64,
    pub df: (f64, f64),
    pub p_value: f64,
}

impl TestOutcome {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Hotelling `T²` test of `H0: E[batch mean] = target`. `batch_means[b]` is
/// the `q`-vector mean of batch `b`; `T²·(b−q)/(q(b−1)) ~ F(q, b−q)` under H0.
/// A singular batch covariance (some combination never varies across batches)
/// gives `T² = ∞` and p-value 0 unless the means hit the target exactly.
pub fn hotelling_batch_test(batch_means: &[Vec<f64>], target: &[f64]) -> Result<TestOutcome> {
    let b = batch_means.len();
    let q = target.len();
    if q == 0 || b <= q + 1 {
        return Err(Error::InvalidParameter(format!("{b} batches too few for dimension {q}")));
    }
    if let Some(bad) = batch_means.iter().find(|m| m.len() != q) {
        return Err(Error::DimensionMismatch { expected: q, found: bad.len() });
    }
    let mean: Vec<f64> = (0..q).map(|j| batch_means.iter().map(|m| m[j]).sum::<f64>() / b as f64).collect();
    let cov = SymMatrix::from_fn(q, |i, j| {
        batch_means.iter().map(|m| (m[i] - mean[i]) * (m[j] - mean[j])).sum::<f64>() / (b - 1) as f64
    });
    let mut diff: Vec<f64> = mean.iter().zip(target).map(|(m, t)| m - t).collect();
    let (d1, d2) = (q as f64, (b - q) as f64);
    let chol = match Cholesky::new(&cov) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { .. }) => {
            let exact = diff.iter().all(|&d| d == 0.0);
            let (statistic, p_value) = if exact { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
            return Ok(TestOutcome { statistic, df: (d1, d2), p_value });
        }
        Err(e) => return Err(e),
    };
    let orig = diff.clone();
    chol.solve_in_place(&mut diff);
    let t2 = b as f64 * orig.iter().zip(&diff).map(|(a, c)| a * c).sum::<f64>();
    let f = t2 * d2 / (d1 * (b - 1) as f64);
    let dist = FisherSnedecor::new(d1, d2).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(TestOutcome { statistic: t2, df: (d1, d2), p_value: dist.sf(f) })
}

/// Groups categories so every group has total probability at least `min_prob`,
/// merging left to right and folding an underfull tail into the last group.
pub fn merge_categories(probs: &[f64], min_prob: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::new();
    let mut mass = 0.0;
    for (k, &pk) in probs.iter().enumerate() {
        current.push(k);
        mass += pk;
        if mass >= min_prob {
            groups.push(std::mem::take(&mut current));
            mass = 0.0;
        }
    }
    if !current.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(current),
            None => groups.push(current),
        }
    }
    groups
}

/// One-sample Kolmogorov-Smirnov statistic. Sorts `xs` in place.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample Kolmogorov-Smirnov statistic. Sorts both inputs in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of a KS statistic `d` at effective sample size `n_eff`
/// (`n` for one sample, `n m/(n+m)` for two), with the Stephens correction.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
