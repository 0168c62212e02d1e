//! Wishart-family distributions, the zero-mean Gaussian likelihood, and
//! sampling from a sparsifying-transform prior.
//!
//! Parametrization: `W_p(δ, D)` has density
//! `|S|^{(δ−2)/2} exp(−tr(S D)/2) / I_p(δ, D)` on `ℙ`. This is the textbook
//! Wishart with `n = δ + p − 1` degrees of freedom and scale matrix `D⁻¹`;
//! [`WishartParams::dof`] is the single place where that mapping happens.
//! `T ~ IW_p(δ, D)` means `T⁻¹ ~ W_p(δ, D)`, with the same `D`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::pdcomp::{pd_complete_hastie, CompletionSettings};
use crate::spd::{trace_product, Cholesky, SymMatrix};

/// `log Γ_p(a) = p(p−1)/4 · log π + Σ_{j=1}^{p} log Γ(a + (1−j)/2)`.
pub fn log_multigamma(p: usize, a: f64) -> Result<f64> {
    let pf = p as f64;
    if !(a > (pf - 1.0) / 2.0) {
        return Err(Error::Domain(format!("multivariate gamma needs a > {}, got {a}", (pf - 1.0) / 2.0)));
    }
    let mut acc = pf * (pf - 1.0) / 4.0 * PI.ln();
    for j in 1..=p {
        acc += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(acc)
}

/// Parameters `(δ, D)` of `W_p(δ, D)`. `D` is factorized once on construction.
#[derive(Clone, Debug)]
pub struct WishartParams {
    delta: f64,
    d: SymMatrix,
    d_chol: Cholesky,
    log_det_d: f64,
}

impl WishartParams {
    pub fn new(delta: f64, d: SymMatrix) -> Result<Self> {
        if !(delta >= 1.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("Wishart delta must be >= 1, got {delta}")));
        }
        let d_chol = Cholesky::new(&d)?;
        let log_det_d = d_chol.log_det();
        Ok(WishartParams { delta, d, d_chol, log_det_d })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn d(&self) -> &SymMatrix {
        &self.d
    }

    pub fn order(&self) -> usize {
        self.d.order()
    }

    /// Textbook degrees of freedom `n = δ + p − 1`.
    pub fn dof(&self) -> f64 {
        self.delta + self.order() as f64 - 1.0
    }

    pub fn log_det_d(&self) -> f64 {
        self.log_det_d
    }
}

/// `log I_p(δ, D) = (n p / 2) log 2 + log Γ_p(n/2) − (n/2) log|D|`.
pub fn log_wishart_norm(params: &WishartParams) -> f64 {
    let p = params.order();
    let n = params.dof();
    let lmg = log_multigamma(p, n / 2.0).expect("delta >= 1 keeps n/2 above (p-1)/2");
    n * p as f64 / 2.0 * std::f64::consts::LN_2 + lmg - n / 2.0 * params.log_det_d
}

/// Bartlett construction: with `D = U Uᵀ`, `M = U⁻ᵀ` satisfies `M Mᵀ = D⁻¹`;
/// `S = (M A)(M A)ᵀ` where `A` is lower triangular with `A_jj² ~ χ²_{n−j}`
/// (0-based `j`) and standard-normal entries below the diagonal.
pub fn sample_wishart<R: Rng + ?Sized>(params: &WishartParams, rng: &mut R) -> SymMatrix {
    let p = params.order();
    let n = params.dof();
    let mut a = vec![0.0; p * p];
    for j in 0..p {
        let shape = (n - j as f64) / 2.0;
        let chi2: f64 = Gamma::new(shape, 2.0).expect("positive shape").sample(rng);
        a[j * p + j] = chi2.sqrt();
        for i in (j + 1)..p {
            a[i * p + j] = rng.sample(StandardNormal);
        }
    }
    // M = (U⁻¹)ᵀ, upper triangular
    let u_inv = params.d_chol.inverse_factor();
    let mut b = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            // (M A)_ij = Σ_k M_ik A_kj, M_ik = U⁻¹_ki nonzero for k ≥ i, A_kj nonzero for k ≥ j
            let mut s = 0.0;
            for k in i.max(j)..p {
                s += u_inv[k * p + i] * a[k * p + j];
            }
            b[i * p + j] = s;
        }
    }
    SymMatrix::from_fn(p, |i, j| (0..p).map(|k| b[i * p + k] * b[j * p + k]).sum())
}

pub fn log_pdf_wishart(s: &SymMatrix, params: &WishartParams) -> Result<f64> {
    check_order(s, params)?;
    let ld = Cholesky::new(s)?.log_det();
    Ok((params.delta - 2.0) / 2.0 * ld - 0.5 * trace_product(s, &params.d)? - log_wishart_norm(params))
}

fn check_order(s: &SymMatrix, params: &WishartParams) -> Result<()> {
    if s.order() != params.order() {
        return Err(Error::DimensionMismatch { expected: params.order(), found: s.order() });
    }
    Ok(())
}

/// Parameters of `IW_p(δ, D)`.
#[derive(Clone, Debug)]
pub struct InvWishartParams(WishartParams);

impl InvWishartParams {
    pub fn new(delta: f64, d: SymMatrix) -> Result<Self> {
        WishartParams::new(delta, d).map(InvWishartParams)
    }

    pub fn delta(&self) -> f64 {
        self.0.delta
    }

    pub fn d(&self) -> &SymMatrix {
        &self.0.d
    }

    pub fn order(&self) -> usize {
        self.0.order()
    }

    /// The Wishart law of `T⁻¹`.
    pub fn wishart(&self) -> &WishartParams {
        &self.0
    }
}

/// Fails only if the Wishart draw is numerically singular.
pub fn sample_inv_wishart<R: Rng + ?Sized>(params: &InvWishartParams, rng: &mut R) -> Result<SymMatrix> {
    let s = sample_wishart(&params.0, rng);
    Ok(Cholesky::new(&s)?.inverse())
}

/// `−((δ+2p)/2) log|T| − tr(T⁻¹ D)/2 − log I_p(δ, D)`.
pub fn log_pdf_inv_wishart(t: &SymMatrix, params: &InvWishartParams) -> Result<f64> {
    check_order(t, &params.0)?;
    let chol = Cholesky::new(t)?;
    let p = t.order() as f64;
    let t_inv = chol.inverse();
    Ok(-(params.0.delta + 2.0 * p) / 2.0 * chol.log_det() - 0.5 * trace_product(&t_inv, &params.0.d)?
        - log_wishart_norm(&params.0))
}

/// `E[T] = D / (δ − 2)`, defined for `δ > 2`.
pub fn inv_wishart_mean(params: &InvWishartParams) -> Result<SymMatrix> {
    let delta = params.delta();
    if !(delta > 2.0) {
        return Err(Error::Domain(format!("inverse Wishart mean needs delta > 2, got {delta}")));
    }
    Ok(params.d().scaled(1.0 / (delta - 2.0)))
}

/// `SD[T_ii] = sqrt(2/(δ−4)) · D_ii/(δ−2)`, defined for `δ > 4`.
pub fn inv_wishart_diag_sd(params: &InvWishartParams) -> Result<Vec<f64>> {
    let delta = params.delta();
    if !(delta > 4.0) {
        return Err(Error::Domain(format!("inverse Wishart diagonal SD needs delta > 4, got {delta}")));
    }
    let f = (2.0 / (delta - 4.0)).sqrt() / (delta - 2.0);
    Ok(params.d().diag().iter().map(|d| f * d).collect())
}

/// Observation count and scatter matrix `xᵀx` of zero-mean data.
#[derive(Clone, Debug)]
pub struct SufficientStats {
    pub m: usize,
    pub sxx: SymMatrix,
}

impl SufficientStats {
    /// No data: the likelihood is identically one.
    pub fn empty(p: usize) -> Self {
        SufficientStats { m: 0, sxx: SymMatrix::zeros(p) }
    }

    /// From a row-major `m x p` buffer.
    pub fn from_rows(m: usize, p: usize, values: &[f64]) -> Result<Self> {
        if values.len() != m * p {
            return Err(Error::DimensionMismatch { expected: m * p, found: values.len() });
        }
        let mut sxx = SymMatrix::zeros(p);
        for i in 0..p {
            for j in 0..=i {
                let s: f64 = (0..m).map(|r| values[r * p + i] * values[r * p + j]).sum();
                sxx.set(i, j, s);
            }
        }
        Ok(SufficientStats { m, sxx })
    }

    pub fn order(&self) -> usize {
        self.sxx.order()
    }
}

/// `(m/2) log|Q| − tr(Q xᵀx)/2 − (m p/2) log 2π`.
pub fn gaussian_loglik(stats: &SufficientStats, q: &SymMatrix) -> Result<f64> {
    if q.order() != stats.order() {
        return Err(Error::DimensionMismatch { expected: stats.order(), found: q.order() });
    }
    let ld = Cholesky::new(q)?.log_det();
    if stats.m == 0 {
        return Ok(0.0);
    }
    let (m, p) = (stats.m as f64, q.order() as f64);
    Ok(m / 2.0 * ld - 0.5 * trace_product(q, &stats.sxx)? - m * p / 2.0 * (2.0 * PI).ln())
}

/// Unnormalized G-Wishart log density `((δ−2)/2) log|Q| − tr(Q D)/2`.
pub fn unnorm_log_gwishart(q: &SymMatrix, g: &Graph, delta: f64, d: &SymMatrix) -> Result<f64> {
    if q.order() != g.p() || d.order() != g.p() {
        return Err(Error::DimensionMismatch { expected: g.p(), found: q.order() });
    }
    for i in 0..g.p() {
        for j in 0..i {
            if !g.has_edge(i, j) && q.get(i, j) != 0.0 {
                return Err(Error::NotInPG { row: i, col: j });
            }
        }
    }
    let ld = Cholesky::new(q)?.log_det();
    Ok((delta - 2.0) / 2.0 * ld - 0.5 * trace_product(q, d)?)
}

/// Prior on the unconstrained `Σ`.
#[derive(Clone, Debug)]
pub enum SigmaPrior {
    Wishart(WishartParams),
    InverseWishart(InvWishartParams),
}

impl SigmaPrior {
    pub fn order(&self) -> usize {
        match self {
            SigmaPrior::Wishart(w) => w.order(),
            SigmaPrior::InverseWishart(iw) => iw.order(),
        }
    }

    pub fn log_pdf(&self, sigma: &SymMatrix) -> Result<f64> {
        match self {
            SigmaPrior::Wishart(w) => log_pdf_wishart(sigma, w),
            SigmaPrior::InverseWishart(iw) => log_pdf_inv_wishart(sigma, iw),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SymMatrix> {
        match self {
            SigmaPrior::Wishart(w) => Ok(sample_wishart(w, rng)),
            SigmaPrior::InverseWishart(iw) => sample_inv_wishart(iw, rng),
        }
    }
}

/// One draw of `Q = PD_G(Σ)` with `Σ ~ W(δ, D)`.
pub fn sample_st_prior<R: Rng + ?Sized>(
    g: &Graph,
    prior: &WishartParams,
    settings: &CompletionSettings,
    rng: &mut R,
) -> Result<SymMatrix> {
    let sigma = sample_wishart(prior, rng);
    Ok(pd_complete_hastie(&sigma, g, settings)?.require_converged()?.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, ContinuousCDF, ChiSquared, InverseGamma};

    fn w1(delta: f64, d: f64) -> WishartParams {
        WishartParams::new(delta, SymMatrix::from_diag(&[d])).unwrap()
    }

    fn iw1(delta: f64, d: f64) -> InvWishartParams {
        InvWishartParams::new(delta, SymMatrix::from_diag(&[d])).unwrap()
    }

    #[test]
    fn multigamma_examples() {
        assert!(log_multigamma(1, 1.0).unwrap().abs() < 1e-14);
        assert!((log_multigamma(1, 0.5).unwrap() - PI.sqrt().ln()).abs() < 1e-14);
        // ½ log π + log Γ(1.5) + log Γ(1), with Γ(1.5) = √π/2
        let expect = 0.5 * PI.ln() + (PI.sqrt() / 2.0).ln();
        assert!((log_multigamma(2, 1.5).unwrap() - expect).abs() < 1e-13);
        assert!((log_multigamma(2, 1.5).unwrap() - 0.451_582_705_289_454_8).abs() < 1e-12);
        assert!(matches!(log_multigamma(3, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn wishart_norm_examples() {
        // χ²_n normalizer: (n/2) log 2 + log Γ(n/2); n = 3 and n = 1 coincide
        let chi2_norm = |n: f64| n / 2.0 * std::f64::consts::LN_2 + ln_gamma(n / 2.0);
        assert!((log_wishart_norm(&w1(3.0, 1.0)) - chi2_norm(3.0)).abs() < 1e-13);
        assert!((log_wishart_norm(&w1(1.0, 1.0)) - chi2_norm(1.0)).abs() < 1e-13);
        assert!((log_wishart_norm(&w1(1.0, 1.0)) - 0.918_938_533_204_672_7).abs() < 1e-12);

        let p = 4;
        let delta = 2.5;
        let c = 7.0;
        let n = delta + p as f64 - 1.0;
        let base = WishartParams::new(delta, SymMatrix::identity(p)).unwrap();
        let scaled = WishartParams::new(delta, SymMatrix::scaled_identity(p, c)).unwrap();
        let shift = -(n * p as f64 / 2.0) * c.ln();
        assert!((log_wishart_norm(&scaled) - log_wishart_norm(&base) - shift).abs() < 1e-11);
    }

    #[test]
    fn wishart_log_pdf_matches_chi_square() {
        for (delta, x) in [(3.0, 1.0), (1.0, 1.0), (1.0, 0.3), (5.5, 4.2)] {
            let oracle = ChiSquared::new(delta).unwrap().ln_pdf(x);
            let got = log_pdf_wishart(&SymMatrix::from_diag(&[x]), &w1(delta, 1.0)).unwrap();
            assert!((got - oracle).abs() < 1e-12, "delta={delta} x={x}: {got} vs {oracle}");
        }
        let got = log_pdf_wishart(&SymMatrix::from_diag(&[1.0]), &w1(3.0, 1.0)).unwrap();
        assert!((got + 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn inv_wishart_log_pdf_matches_inverse_gamma() {
        // p = 1: T ~ InvGamma(δ/2, D/2)
        let got = log_pdf_inv_wishart(&SymMatrix::from_diag(&[1.0]), &iw1(6.0, 4.0)).unwrap();
        let oracle = 3.0 * 2f64.ln() - ln_gamma(3.0) - 2.0;
        assert!((got - oracle).abs() < 1e-12);
        assert!((got + 0.613_705_638_880_109_4).abs() < 1e-12);
        for (delta, d, t) in [(6.0, 4.0, 0.7), (1.0, 2.0, 3.0), (9.0, 0.5, 0.05)] {
            let ig = InverseGamma::new(delta / 2.0, d / 2.0).unwrap();
            let got = log_pdf_inv_wishart(&SymMatrix::from_diag(&[t]), &iw1(delta, d)).unwrap();
            assert!((got - ig.ln_pdf(t)).abs() < 1e-11);
        }
    }

    #[test]
    fn inv_wishart_jacobian_identity() {
        // log π_T(T) = log π_S(T⁻¹) + (p+1) log|T⁻¹|
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = SymMatrix::from_rows(&[[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 1.5]]).unwrap();
        let iw = InvWishartParams::new(4.5, d).unwrap();
        for _ in 0..10 {
            let t = sample_inv_wishart(&iw, &mut rng).unwrap();
            let s = Cholesky::new(&t).unwrap().inverse();
            let lhs = log_pdf_inv_wishart(&t, &iw).unwrap();
            let rhs = log_pdf_wishart(&s, iw.wishart()).unwrap() + 4.0 * Cholesky::new(&s).unwrap().log_det();
            assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn moments_and_thresholds() {
        let iw = InvWishartParams::new(6.0, SymMatrix::identity(3)).unwrap();
        assert!(inv_wishart_mean(&iw).unwrap().max_abs_diff(&SymMatrix::scaled_identity(3, 0.25)) < 1e-15);
        for sd in inv_wishart_diag_sd(&iw).unwrap() {
            assert!((sd - 0.25).abs() < 1e-15);
        }
        let iw3 = InvWishartParams::new(3.0, SymMatrix::identity(2)).unwrap();
        assert_eq!(inv_wishart_mean(&iw3).unwrap(), SymMatrix::identity(2));
        assert!(matches!(inv_wishart_diag_sd(&iw3), Err(Error::Domain(_))));
        let iw2 = InvWishartParams::new(2.0, SymMatrix::identity(2)).unwrap();
        assert!(inv_wishart_mean(&iw2).is_err());
    }

    #[test]
    fn proposal_parameters_are_centred() {
        // IW(k+2, k S) has mean S and diagonal SD fraction sqrt(2/(k−2)) = c
        let c: f64 = 1.0 / 35.0;
        let k = 2.0 / (c * c) + 2.0;
        assert!((k - 2452.0).abs() < 1e-9);
        let s = SymMatrix::from_rows(&[[1.3, 0.2], [0.2, 0.8]]).unwrap();
        let iw = InvWishartParams::new(k + 2.0, s.scaled(k)).unwrap();
        assert!(inv_wishart_mean(&iw).unwrap().max_abs_diff(&s) < 1e-12);
        for (sd, sii) in inv_wishart_diag_sd(&iw).unwrap().iter().zip(s.diag()) {
            assert!((sd / sii - c).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(WishartParams::new(0.5, SymMatrix::identity(2)).is_err());
        assert!(WishartParams::new(f64::NAN, SymMatrix::identity(2)).is_err());
        assert!(WishartParams::new(3.0, SymMatrix::zeros(2)).is_err());
        assert!(log_pdf_wishart(&SymMatrix::identity(3), &w1(3.0, 1.0)).is_err());
    }

    #[test]
    fn wishart_mean_monte_carlo() {
        // E[S] = n D⁻¹ = 5 I for p = 3, δ = 3
        let params = WishartParams::new(3.0, SymMatrix::identity(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut sum = SymMatrix::zeros(3);
        for _ in 0..draws {
            sum = sum.add(&sample_wishart(&params, &mut rng)).unwrap();
        }
        let mean = sum.scaled(1.0 / draws as f64);
        // Var(S_ii) = 2n, Var(S_ij) = n
        for i in 0..3 {
            for j in 0..3 {
                let (target, var) = if i == j { (5.0, 10.0) } else { (0.0, 5.0) };
                let se = (var / draws as f64).sqrt();
                assert!((mean.get(i, j) - target).abs() <= 4.0 * se, "({i},{j}) {}", mean.get(i, j));
            }
        }
    }

    #[test]
    fn wishart_scalar_is_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = 100_000;
        let below = (0..draws).filter(|_| sample_wishart(&w1(1.0, 1.0), &mut rng).get(0, 0) <= 1.0).count();
        let frac = below as f64 / draws as f64;
        let target = ChiSquared::new(1.0).unwrap().cdf(1.0);
        assert!((target - 0.6827).abs() < 1e-4);
        assert!((frac - target).abs() <= 4.0 * (target * (1.0 - target) / draws as f64).sqrt());
    }

    #[test]
    fn wishart_concentrates_for_large_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let delta = 1e4;
        let params = WishartParams::new(delta, SymMatrix::scaled_identity(3, delta)).unwrap();
        let s = sample_wishart(&params, &mut rng);
        assert!(s.max_abs_diff(&SymMatrix::identity(3)) < 0.05);
    }

    #[test]
    fn ks_against_chi_square_and_inverse_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 10_000;
        let ks_crit = 1.949 / (n as f64).sqrt(); // α = 0.001
        let mut xs: Vec<f64> = (0..n).map(|_| sample_wishart(&w1(2.5, 1.0), &mut rng).get(0, 0)).collect();
        let chi = ChiSquared::new(2.5).unwrap();
        assert!(ks_statistic(&mut xs, |x| chi.cdf(x)) < ks_crit);

        let mut ts: Vec<f64> = (0..n).map(|_| sample_inv_wishart(&iw1(6.0, 4.0), &mut rng).unwrap().get(0, 0)).collect();
        let ig = InverseGamma::new(3.0, 2.0).unwrap();
        assert!(ks_statistic(&mut ts, |x| ig.cdf(x)) < ks_crit);
        let mean = ts.iter().sum::<f64>() / n as f64;
        // InvGamma(3, 2): mean 1, variance 1
        assert!((mean - 1.0).abs() < 4.0 * (1.0 / n as f64).sqrt());
    }

    fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn gaussian_loglik_examples() {
        // one draw x = 2 from N(0, 4)
        let stats = SufficientStats::from_rows(1, 1, &[2.0]).unwrap();
        let ll = gaussian_loglik(&stats, &SymMatrix::from_diag(&[0.25])).unwrap();
        let oracle = -0.5 * (2.0 * PI * 4.0).ln() - 4.0 / 8.0;
        assert!((ll - oracle).abs() < 1e-13);
        assert!((ll + 2.112_085_713_764_618).abs() < 1e-12);

        let q = SymMatrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap();
        assert_eq!(gaussian_loglik(&SufficientStats::empty(2), &q).unwrap(), 0.0);

        // two observations with Σ x² = 2 under N(0, I₂): four standard-normal log densities
        let stats = SufficientStats::from_rows(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let ll = gaussian_loglik(&stats, &SymMatrix::identity(2)).unwrap();
        let phi = |x: f64| -0.5 * x * x - 0.5 * (2.0 * PI).ln();
        let oracle = phi(1.0) + phi(0.0) + phi(0.0) + phi(1.0);
        assert!((ll - oracle).abs() < 1e-13);
        assert!((ll + 4.675_754_132_818_691).abs() < 1e-12);
    }

    #[test]
    fn gwishart_reference_density() {
        let d = SymMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let q = SymMatrix::from_rows(&[[1.5, -0.4], [-0.4, 0.9]]).unwrap();
        let params = WishartParams::new(3.5, d.clone()).unwrap();
        let full = unnorm_log_gwishart(&q, &Graph::full(2), 3.5, &d).unwrap();
        let expect = log_pdf_wishart(&q, &params).unwrap() + log_wishart_norm(&params);
        assert!((full - expect).abs() < 1e-12);

        for g in crate::graphs::enumerate_graphs(3).unwrap() {
            let v = unnorm_log_gwishart(&SymMatrix::identity(3), &g, 4.0, &SymMatrix::identity(3)).unwrap();
            assert!((v + 1.5).abs() < 1e-15);
        }
        let v = unnorm_log_gwishart(&q, &Graph::full(2), 2.0, &d).unwrap();
        assert!((v + 0.5 * trace_product(&q, &d).unwrap()).abs() < 1e-15);
        assert!(matches!(
            unnorm_log_gwishart(&q, &Graph::empty(2), 3.0, &d),
            Err(Error::NotInPG { row: 1, col: 0 })
        ));
    }

    #[test]
    fn st_prior_special_graphs() {
        let params = WishartParams::new(3.0, SymMatrix::identity(3)).unwrap();
        let settings = CompletionSettings::default();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        let q = sample_st_prior(&Graph::full(3), &params, &settings, &mut a).unwrap();
        let sigma = sample_wishart(&params, &mut b);
        assert!(q.max_abs_diff(&Cholesky::new(&sigma).unwrap().inverse()) < 1e-8);

        let q = sample_st_prior(&Graph::empty(3), &params, &settings, &mut a).unwrap();
        let sigma = sample_wishart(&params, &mut b);
        let diag: Vec<f64> = sigma.diag().iter().map(|s| 1.0 / s).collect();
        assert!(q.max_abs_diff(&SymMatrix::from_diag(&diag)) < 1e-14);
    }

    #[test]
    fn st_prior_matches_wishart_marginals_on_pattern() {
        // (Q⁻¹)_ij = Σ_ij on the extended edge set, so those entries keep the
        // Wishart marginals: E Σ = n D⁻¹, Var Σ_ii = 2n, Var Σ_ij = n (D = I)
        let params = WishartParams::new(2.0, SymMatrix::identity(3)).unwrap();
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let settings = CompletionSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 10_000;
        let n = params.dof();
        let (mut s00, mut s01, mut s00sq) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let q = sample_st_prior(&g, &params, &settings, &mut rng).unwrap();
            let w = Cholesky::new(&q).unwrap().inverse();
            s00 += w.get(0, 0);
            s00sq += w.get(0, 0) * w.get(0, 0);
            s01 += w.get(0, 1);
        }
        let dn = draws as f64;
        assert!((s00 / dn - n).abs() <= 4.0 * (2.0 * n / dn).sqrt());
        assert!((s01 / dn).abs() <= 4.0 * (n / dn).sqrt());
        let var = s00sq / dn - (s00 / dn).powi(2);
        assert!((var - 2.0 * n).abs() < 0.1 * 2.0 * n);
    }

    /// Trapezoid rule on a uniform grid; integrands here decay smoothly at both ends.
    fn trapezoid(lo: f64, hi: f64, steps: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (hi - lo) / steps as f64;
        let inner: f64 = (1..steps).map(|i| f(lo + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(lo) + f(hi)))
    }

    #[test]
    fn scalar_densities_integrate_to_one() {
        // substitute s = e^y so the integrand e^{log f(e^y) + y} is smooth on ℝ
        for (delta, d) in [(1.0, 1.0), (3.0, 1.0), (6.0, 4.0), (2.5, 0.3)] {
            let w = w1(delta, d);
            let iw = iw1(delta, d);
            let wm = trapezoid(-60.0, 8.0, 40_000, |y| {
                (log_pdf_wishart(&SymMatrix::from_diag(&[y.exp()]), &w).unwrap() + y).exp()
            });
            let iwm = trapezoid(-8.0, 60.0, 40_000, |y| {
                (log_pdf_inv_wishart(&SymMatrix::from_diag(&[y.exp()]), &iw).unwrap() + y).exp()
            });
            assert!((wm - 1.0).abs() < 1e-6, "Wishart delta={delta} d={d}: {wm}");
            assert!((iwm - 1.0).abs() < 1e-6, "inverse Wishart delta={delta} d={d}: {iwm}");
        }
    }

    #[test]
    fn bivariate_densities_integrate_to_one() {
        // S = [[a, r√(ab)], [r√(ab), b]], a = e^u, b = e^v, r = tanh t;
        // dS = a b √(ab) sech²(t) du dv dt and |S| = a b (1 − r²)
        let (delta, d1, d2) = (4.0, 1.5, 0.7);
        let p = 2.0;
        let d = SymMatrix::from_diag(&[d1, d2]);
        let norm = log_wishart_norm(&WishartParams::new(delta, d).unwrap());
        let h = 0.1;
        let us: Vec<f64> = (0..=300).map(|i| -22.0 + i as f64 * h).collect();
        let ts: Vec<f64> = (0..=200).map(|i| -10.0 + i as f64 * h).collect();
        let (mut wsum, mut iwsum) = (0.0, 0.0);
        for &u in &us {
            for &v in &us {
                let (a, b) = (u.exp(), v.exp());
                for &t in &ts {
                    let sech2 = 1.0 / t.cosh().powi(2);
                    let det = a * b * sech2; // 1 − tanh² = sech²
                    let log_jac = 1.5 * (u + v) + sech2.ln();
                    let lw = (delta - 2.0) / 2.0 * det.ln() - 0.5 * (d1 * a + d2 * b) - norm;
                    let liw = -(delta + 2.0 * p) / 2.0 * det.ln() - 0.5 * (d1 * b + d2 * a) / det - norm;
                    wsum += (lw + log_jac).exp();
                    iwsum += (liw + log_jac).exp();
                }
            }
        }
        let cell = h * h * h;
        assert!((wsum * cell - 1.0).abs() < 1e-5, "Wishart mass {}", wsum * cell);
        assert!((iwsum * cell - 1.0).abs() < 1e-5, "inverse Wishart mass {}", iwsum * cell);
    }
}
