//! First-order covert rate, covert outage quantities and the non-asymptotic
//! achievability and converse bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::channels::{sample_fading, FadingModel};
use crate::covertness::{converse_power, power_ach, CovertParams};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::montecarlo::{self, BoundEstimate, Engine, MeanAccumulator};

/// Stream identifiers; one per independent batch kind.
pub mod streams {
    pub const KAPPA: u64 = 0x10;
    pub const OUTAGE: u64 = 0x11;
    pub const T_PRODUCT: u64 = 0x12;
    pub const S_SUM: u64 = 0x13;
    pub const S_SUM_RECHECK: u64 = 0x14;
    pub const BETA_PRODUCT: u64 = 0x15;
}

/// How the channel gain enters the K statistic.
///
/// `Power` sums the eigenvalues of `H_b^H H_b` (squared singular values), the
/// quantity that appears in the covert outage rate. `Amplitude` sums the
/// singular values themselves; the published first-order curves are reproduced
/// by this form (see the README).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainConvention {
    #[default]
    Power,
    Amplitude,
}

/// Eigenvalues of `H_b^H H_b` that can be nonzero, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub lambda_b: Vec<f64>,
}

impl EigenSample {
    pub fn new(lambda_b: Vec<f64>) -> Result<Self> {
        if lambda_b.is_empty() || lambda_b.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidInput("eigenvalues must be finite and nonnegative".into()));
        }
        Ok(Self { lambda_b })
    }

    /// From an `N_a x N_b` channel, via the smaller gram `h h^H`.
    pub fn from_channel(h: &ComplexMatrix) -> Result<Self> {
        linalg::check_finite(h)?;
        let gram = if h.nrows() <= h.ncols() { h * h.adjoint() } else { h.adjoint() * h };
        let ev = if gram.nrows() == 1 {
            vec![gram[(0, 0)].re]
        } else if gram.nrows() == 2 {
            eig_2x2(&gram).to_vec()
        } else {
            linalg::hermitian_eigenvalues(&gram)?
        };
        Ok(Self { lambda_b: ev.into_iter().map(|l| l.max(0.0)).collect() })
    }

    pub fn total(&self) -> f64 {
        self.lambda_b.iter().sum()
    }

    /// `sum_j log(1 + psi lambda_j)`.
    pub fn log_gain(&self, psi: f64) -> f64 {
        self.lambda_b.iter().map(|l| (psi * l).ln_1p()).sum()
    }
}

fn eig_2x2(g: &ComplexMatrix) -> [f64; 2] {
    let (a, d) = (g[(0, 0)].re, g[(1, 1)].re);
    let off = g[(0, 1)].norm_sqr();
    let mid = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + off).sqrt();
    [mid + disc, mid - disc]
}

fn k_from_eigen(e: &EigenSample, lambda0: f64, conv: GainConvention) -> f64 {
    let gain: f64 = match conv {
        GainConvention::Power => e.total(),
        GainConvention::Amplitude => e.lambda_b.iter().map(|l| l.sqrt()).sum(),
    };
    std::f64::consts::SQRT_2 * gain / (lambda0 * (e.lambda_b.len() as f64).sqrt())
}

/// `K = sqrt(2) ||h_b||_F^2 / (lambda0 sqrt(N_a))`.
pub fn k_statistic(h_b: &ComplexMatrix, lambda0: f64) -> Result<f64> {
    k_statistic_with(h_b, lambda0, GainConvention::Power)
}

pub fn k_statistic_with(h_b: &ComplexMatrix, lambda0: f64, conv: GainConvention) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(Error::InvalidInput(format!("lambda0 {lambda0} must be positive")));
    }
    linalg::check_finite(h_b)?;
    match conv {
        GainConvention::Power => {
            let fro = linalg::frobenius_norm(h_b);
            Ok(std::f64::consts::SQRT_2 * fro * fro / (lambda0 * (h_b.nrows() as f64).sqrt()))
        }
        GainConvention::Amplitude => Ok(k_from_eigen(&EigenSample::from_channel(h_b)?, lambda0, conv)),
    }
}

fn check_quantile_trials(trials: usize, level: f64) -> Result<()> {
    if (trials as f64) * level < 10.0 - 1e-9 {
        return Err(Error::InsufficientTrials { trials, what: format!("the {level}-quantile (need trials x level >= 10)") });
    }
    Ok(())
}

pub fn kappa_samples(
    model: &FadingModel,
    lambda0: f64,
    trials: usize,
    engine: &Engine,
    conv: GainConvention,
) -> Result<Vec<f64>> {
    model.validate()?;
    engine.try_map(streams::KAPPA, trials, |rng, _| k_statistic_with(&sample_fading(model, rng), lambda0, conv))
}

/// Left-continuous `epsilon`-quantile of the K statistic.
pub fn kappa_epsilon(
    model: &FadingModel,
    lambda0: f64,
    epsilon: f64,
    trials: usize,
    engine: &Engine,
    conv: GainConvention,
) -> Result<BoundEstimate> {
    check_quantile_trials(trials, epsilon)?;
    let ks = kappa_samples(model, lambda0, trials, engine, conv)?;
    montecarlo::quantile_estimate(&ks, epsilon, engine.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    FirstOrder,
    Ach,
    Con,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub n: usize,
    /// Nats per channel use.
    pub rate: f64,
    pub sqrt_n_rate: f64,
    pub kind: BoundKind,
    /// Monte-Carlo provenance; `value` equals `rate`.
    pub estimate: BoundEstimate,
}

impl BoundPoint {
    fn new(n: usize, rate: f64, ci: f64, kind: BoundKind, trials: usize, seed: u64) -> Self {
        Self {
            n,
            rate,
            sqrt_n_rate: (n as f64).sqrt() * rate,
            kind,
            estimate: BoundEstimate { value: rate, ci_half_width: ci, trials, seed },
        }
    }
}

/// `R_1 = kappa sqrt(delta / n)`.
pub fn first_order_rate(n: usize, epsilon: f64, delta: f64, kappa: &BoundEstimate) -> Result<BoundPoint> {
    if n == 0 || !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0) || !(kappa.value >= 0.0) {
        return Err(Error::InvalidInput("first-order rate needs positive n, delta, kappa and epsilon in (0, 1)".into()));
    }
    let scale = (delta / n as f64).sqrt();
    Ok(BoundPoint::new(
        n,
        kappa.value * scale,
        kappa.ci_half_width * scale,
        BoundKind::FirstOrder,
        kappa.trials,
        kappa.seed,
    ))
}

/// `log det(I + psi H_b^H H_b)` for independent fading draws.
pub fn outage_samples(model: &FadingModel, psi: f64, trials: usize, engine: &Engine) -> Result<Vec<f64>> {
    if !(psi >= 0.0) {
        return Err(Error::InvalidInput(format!("power {psi} must be nonnegative")));
    }
    model.validate()?;
    engine.try_map(streams::OUTAGE, trials, |rng, _| {
        Ok(EigenSample::from_channel(&sample_fading(model, rng))?.log_gain(psi))
    })
}

/// `Pr{ log det(I + psi H_b^H H_b) < r }`.
pub fn covert_outage_prob(model: &FadingModel, psi: f64, r: f64, trials: usize, engine: &Engine) -> Result<BoundEstimate> {
    let xs = outage_samples(model, psi, trials, engine)?;
    indicator_mean(xs.iter().map(|&x| x < r), engine.seed)
}

fn indicator_mean<I: Iterator<Item = bool>>(hits: I, seed: u64) -> Result<BoundEstimate> {
    let mut acc = MeanAccumulator::new();
    acc.extend(hits.map(|b| if b { 1.0 } else { 0.0 }));
    acc.estimate(seed)
}

/// `epsilon`-quantile of `log det(I + psi H_b^H H_b)`.
pub fn covert_outage_rate(
    model: &FadingModel,
    psi: f64,
    epsilon: f64,
    trials: usize,
    engine: &Engine,
) -> Result<BoundEstimate> {
    check_quantile_trials(trials, epsilon)?;
    let xs = outage_samples(model, psi, trials, engine)?;
    montecarlo::quantile_estimate(&xs, epsilon, engine.seed)
}

/// One draw of `prod_j T_j` built from `n` explicit noise entries per antenna.
pub fn sample_t_product<R: Rng + ?Sized>(n: usize, eigen: &EigenSample, rho: f64, psi: f64, rng: &mut R) -> f64 {
    assert!(n >= 2, "T product needs n >= 2");
    eigen
        .lambda_b
        .iter()
        .map(|&l| {
            let signal = (n as f64 * rho * psi * l).sqrt();
            let z1 = montecarlo::complex_normal(rng);
            let rest: f64 = (1..n).map(|_| montecarlo::complex_normal(rng).norm_sqr()).sum();
            rest / ((z1 + signal).norm_sqr() + rest)
        })
        .product()
}

/// Same law as [`sample_t_product`], with the `n - 1` noise energies drawn as
/// one Gamma(n - 1, 1) variate.
pub fn sample_t_product_fast<R: Rng + ?Sized>(n: usize, eigen: &EigenSample, rho: f64, psi: f64, rng: &mut R) -> f64 {
    assert!(n >= 2, "T product needs n >= 2");
    eigen
        .lambda_b
        .iter()
        .map(|&l| {
            let signal = (n as f64 * rho * psi * l).sqrt();
            let z1 = montecarlo::complex_normal(rng);
            let rest = montecarlo::gamma(rng, (n - 1) as f64);
            rest / ((z1 + signal).norm_sqr() + rest)
        })
        .product()
}

/// Achievability threshold: the `(1 - epsilon + tau)`-quantile of `prod_j T_j`
/// with fresh fading per trial and `psi = power_ach`.
pub fn ach_gamma(p: &CovertParams, model: &FadingModel, trials: usize, engine: &Engine) -> Result<BoundEstimate> {
    p.validate()?;
    let level = 1.0 - p.epsilon + p.tau;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidSlack(format!("quantile level 1 - epsilon + tau = {level} outside (0, 1)")));
    }
    check_quantile_trials(trials, 1.0 - level)?;
    let psi = power_ach(p);
    model.validate()?;
    let samples = engine.try_map(streams::T_PRODUCT, trials, |rng, _| {
        let e = EigenSample::from_channel(&sample_fading(model, rng))?;
        Ok(sample_t_product_fast(p.n, &e, p.rho, psi, rng))
    })?;
    montecarlo::quantile_estimate(&samples, level, engine.seed)
}

/// How `Pr{prod_j B_j <= gamma}` is bounded in the achievability rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BetaTail {
    /// Each `-log B_j` is a sum of exponentials with rates at least
    /// `n - N_a - N_b + 1`, so the product tail is dominated by an Erlang tail
    /// that is evaluated in closed form.
    #[default]
    ErlangDominance,
    /// Markov bound `n^(N_a N_b) gamma^(n - N_a - N_b)`.
    Markov,
    /// Direct Monte-Carlo estimate from Beta draws; only usable at small `n`.
    Sampled { draws: usize },
}

/// `ln Q(k, x)` for integer `k`: the log of the Erlang(k) upper tail.
pub fn ln_erlang_tail(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let terms: Vec<f64> = (0..k).map(|i| i as f64 * x.ln() - ln_gamma(i as f64 + 1.0)).collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    -x + top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Draws `prod_{j <= N_b} B_j` with `B_j ~ Beta(n - N_a - j + 1, N_a)`.
pub fn sample_beta_product<R: Rng + ?Sized>(n: usize, na: usize, nb: usize, rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    (1..=nb)
        .map(|j| {
            let a = (n - na - j + 1) as f64;
            rand_distr::Beta::new(a, na as f64).expect("positive beta shapes").sample(rng)
        })
        .product()
}

/// Log of an upper bound (or estimate, for `Sampled`) on `Pr{prod_j B_j <= gamma}`.
pub fn ln_beta_product_tail(
    n: usize,
    na: usize,
    nb: usize,
    gamma: f64,
    tail: BetaTail,
    engine: &Engine,
) -> Result<f64> {
    if n <= na + nb {
        return Err(Error::InvalidInput(format!("blocklength {n} must exceed N_a + N_b = {}", na + nb)));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("threshold {gamma} outside (0, 1)")));
    }
    let c = -gamma.ln();
    match tail {
        BetaTail::Markov => Ok((na * nb) as f64 * (n as f64).ln() - (n - na - nb) as f64 * c),
        BetaTail::ErlangDominance => Ok(ln_erlang_tail(na * nb, (n - na - nb + 1) as f64 * c)),
        BetaTail::Sampled { draws } => {
            let hits = engine
                .map(streams::BETA_PRODUCT, draws, |rng, _| sample_beta_product(n, na, nb, rng) <= gamma)
                .into_iter()
                .filter(|&h| h)
                .count();
            if hits == 0 {
                return Err(Error::Degenerate(format!("no Beta-product draw fell below {gamma:e} in {draws} draws")));
            }
            Ok((hits as f64 / draws as f64).ln())
        }
    }
}

fn ach_rate_at(p: &CovertParams, gamma: f64, tail: BetaTail, engine: &Engine) -> Result<f64> {
    let ln_tail = ln_beta_product_tail(p.n, p.dims.na, p.dims.nb, gamma, tail, engine)?;
    Ok(((p.tau.ln() - ln_tail) / p.n as f64).max(0.0))
}

/// `(1/n) log(tau / Pr{prod_j B_j <= gamma_n})`, clamped at zero.
pub fn ach_rate_bound(
    p: &CovertParams,
    model: &FadingModel,
    trials: usize,
    engine: &Engine,
    tail: BetaTail,
) -> Result<BoundPoint> {
    if p.n <= p.dims.na + p.dims.nb {
        return Err(Error::InvalidInput(format!("blocklength {} must exceed N_a + N_b", p.n)));
    }
    let g = ach_gamma(p, model, trials, engine)?;
    if g.value >= 1.0 {
        return Err(Error::Domain(format!("threshold {} is not below 1", g.value)));
    }
    let rate = ach_rate_at(p, g.value, tail, engine)?;
    let ci = if g.ci_half_width > 0.0 {
        let lo = (g.value - g.ci_half_width).max(f64::MIN_POSITIVE);
        let hi = (g.value + g.ci_half_width).min(1.0 - 1e-15);
        (ach_rate_at(p, lo, tail, engine)? - ach_rate_at(p, hi, tail, engine)?).abs() / 2.0
    } else {
        0.0
    };
    Ok(BoundPoint::new(p.n, rate, ci, BoundKind::Ach, trials, engine.seed))
}

/// One joint draw of `(L_n, S_n)` sharing the noise entries.
pub fn sample_ln_sn<R: Rng + ?Sized>(n: usize, eigen: &EigenSample, psi: f64, rng: &mut R) -> (f64, f64) {
    let (mut l_sum, mut s_sum) = (0.0, 0.0);
    for _ in 0..n {
        for &lam in &eigen.lambda_b {
            let a = lam * psi;
            let z = montecarlo::complex_normal(rng);
            let base = a.ln_1p() + 1.0;
            l_sum += base - (z * a.sqrt() - (1.0 + a).sqrt()).norm_sqr();
            s_sum += base - (z * a.sqrt() - 1.0).norm_sqr() / (1.0 + a);
        }
    }
    (l_sum, s_sum)
}

/// Draws `S_n` alone. Per antenna, `sum_i |sqrt(a) Z_i - 1|^2` is
/// `(a/2)` times a noncentral chi-square with `2n` degrees of freedom and
/// noncentrality `2n/a`, drawn as `n + N sqrt(2 n a) + (a/2)(N^2 + 2 G)` with
/// `N` standard normal and `G ~ Gamma(n - 1/2, 1)`.
pub fn sample_sn_fast<R: Rng + ?Sized>(n: usize, eigen: &EigenSample, psi: f64, rng: &mut R) -> f64 {
    let nf = n as f64;
    eigen
        .lambda_b
        .iter()
        .map(|&lam| {
            let a = lam * psi;
            if a == 0.0 {
                return 0.0;
            }
            let nrm = montecarlo::real_normal(rng);
            let g = montecarlo::gamma(rng, nf - 0.5);
            let q = nf + nrm * (2.0 * nf * a).sqrt() + 0.5 * a * (nrm * nrm + 2.0 * g);
            nf * a.ln_1p() + nf - q / (1.0 + a)
        })
        .sum()
}

/// Per-use mean and variance of the `S_n` summands:
/// `(sum_j log(1 + a_j), N_a - sum_j (1 + a_j)^-2)`.
pub fn sn_moments(eigen: &EigenSample, psi: f64) -> (f64, f64) {
    let mu = eigen.log_gain(psi);
    let var = eigen.lambda_b.iter().map(|&l| 1.0 - (1.0 + l * psi).powi(-2)).sum();
    (mu, var)
}

fn sn_over_n_samples(
    p: &CovertParams,
    model: &FadingModel,
    psi: f64,
    trials: usize,
    engine: &Engine,
    stream: u64,
) -> Result<Vec<f64>> {
    model.validate()?;
    let n = p.n;
    engine.try_map(stream, trials, |rng, _| {
        let e = EigenSample::from_channel(&sample_fading(model, rng))?;
        Ok(sample_sn_fast(n, &e, psi, rng) / n as f64)
    })
}

/// Converse threshold: the `(epsilon + slack)`-quantile of `S_n / n` at the
/// maximum-power level `(1 + 1/n) power_con`.
pub fn con_gamma(
    p: &CovertParams,
    model: &FadingModel,
    trials: usize,
    slack: f64,
    engine: &Engine,
) -> Result<BoundEstimate> {
    p.validate()?;
    let level = p.epsilon + slack;
    if !(slack > 0.0 && level < 1.0) {
        return Err(Error::InvalidSlack(format!("epsilon + slack = {level} with slack {slack}")));
    }
    check_quantile_trials(trials, level)?;
    let xs = sn_over_n_samples(p, model, converse_power(p), trials, engine, streams::S_SUM)?;
    montecarlo::quantile_estimate(&xs, level, engine.seed)
}

pub fn default_con_slack(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// `gamma_n - (1/n) log(Pr{S_n <= n gamma_n} - epsilon) + log(n + 1)/n`, the
/// probability re-estimated on an independent batch.
pub fn con_rate_bound(p: &CovertParams, model: &FadingModel, trials: usize, engine: &Engine) -> Result<BoundPoint> {
    con_rate_bound_with_slack(p, model, trials, default_con_slack(p.n), engine)
}

pub fn con_rate_bound_with_slack(
    p: &CovertParams,
    model: &FadingModel,
    trials: usize,
    slack: f64,
    engine: &Engine,
) -> Result<BoundPoint> {
    let g = con_gamma(p, model, trials, slack, engine)?;
    let xs = sn_over_n_samples(p, model, converse_power(p), trials, engine, streams::S_SUM_RECHECK)?;
    let prob = indicator_mean(xs.iter().map(|&x| x <= g.value), engine.seed)?;
    let rate = con_rate_from(p.n, p.epsilon, g.value, prob.value)?;
    let ci = g.ci_half_width + prob.ci_half_width / ((prob.value - p.epsilon) * p.n as f64);
    Ok(BoundPoint::new(p.n, rate, ci, BoundKind::Con, trials, engine.seed))
}

/// Converse rate from its threshold and the probability `Pr{S_n <= n gamma}`.
pub fn con_rate_from(n: usize, epsilon: f64, gamma: f64, prob: f64) -> Result<f64> {
    if prob <= epsilon {
        return Err(Error::SlackExhausted { probability: prob, epsilon });
    }
    let nf = n as f64;
    Ok((gamma - (prob - epsilon).ln() / nf + (nf + 1.0).ln() / nf).max(0.0))
}

/// Central finite difference of the outage CDF at its `epsilon`-quantile.
pub fn f_out_derivative_probe(
    model: &FadingModel,
    psi: f64,
    epsilon: f64,
    trials: usize,
    bandwidth: f64,
    engine: &Engine,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth {bandwidth} must be positive")));
    }
    check_quantile_trials(trials, epsilon)?;
    let mut xs = outage_samples(model, psi, trials, engine)?;
    xs.sort_by(|a, b| a.total_cmp(b));
    if xs.first() == xs.last() {
        return Err(Error::Degenerate("outage statistic has no spread; its CDF is a step".into()));
    }
    let ecdf = montecarlo::Ecdf::from_sorted(xs)?;
    let c = ecdf.quantile(epsilon)?;
    let d = (ecdf.eval(c + bandwidth) - ecdf.eval(c - bandwidth)) / (2.0 * bandwidth);
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Degenerate(format!("derivative estimate {d} at {c}")));
    }
    Ok(d)
}
