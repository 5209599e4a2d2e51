//! End-to-end link simulation: random truncated-Gaussian codebooks, angle
//! threshold and maximum-likelihood decoding, and the warden's
//! likelihood-ratio detector.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{self, sample_fading, ChannelMatrix, FadingModel};
use crate::covertness::{self, power_ach, CovertParams, ShellSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, Tolerances};
use crate::montecarlo::{self, BoundEstimate, Engine, Stream};

pub mod streams {
    pub const TRIAL: u64 = 0x20;
    pub const SHARED_CODEBOOK: u64 = 0x21;
    pub const DETECTION: u64 = 0x22;
}

/// Warden channel draws outside the uncertainty set are redrawn at most this
/// many times per trial.
pub const MAX_WARDEN_RESAMPLES: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct Codebook {
    pub codewords: Vec<ComplexMatrix>,
    pub shell: ShellSpec,
    /// Orthonormal bases of the codeword spans, cached for angle decoding.
    bases: Vec<ComplexMatrix>,
}

impl Codebook {
    pub fn from_codewords(codewords: Vec<ComplexMatrix>, shell: ShellSpec) -> Result<Self> {
        if codewords.is_empty() {
            return Err(Error::InvalidInput("a codebook needs at least one codeword".into()));
        }
        let shape = codewords[0].shape();
        if codewords.iter().any(|c| c.shape() != shape) {
            return Err(Error::DimensionMismatch("codewords differ in shape".into()));
        }
        let bases = codewords.iter().map(linalg::orthonormalize).collect::<Result<_>>()?;
        Ok(Self { codewords, shell, bases })
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// `(n, N_a)`.
    pub fn shape(&self) -> (usize, usize) {
        self.codewords[0].shape()
    }
}

/// `m` independent truncated-Gaussian codewords at power `power_ach(p)`.
pub fn build_codebook<R: Rng + ?Sized>(p: &CovertParams, m: usize, rng: &mut R) -> Result<Codebook> {
    build_codebook_at(p, power_ach(p), m, rng)
}

/// As [`build_codebook`] at an explicit power. At zero power every codeword
/// is the zero matrix; such a codebook supports only ML decoding.
pub fn build_codebook_at<R: Rng + ?Sized>(p: &CovertParams, psi: f64, m: usize, rng: &mut R) -> Result<Codebook> {
    if m == 0 {
        return Err(Error::InvalidInput("codebook size must be at least 1".into()));
    }
    if psi == 0.0 {
        let shell = ShellSpec::from_params(p)?;
        return Ok(Codebook { codewords: vec![DMatrix::zeros(p.n, p.dims.na); m], shell, bases: Vec::new() });
    }
    let shell = ShellSpec::new(p.n, p.rho, psi)?;
    let words = (0..m)
        .map(|_| covertness::sample_codeword_tg(&shell, p.n, p.dims.na, rng))
        .collect::<Result<Vec<_>>>()?;
    Codebook::from_codewords(words, shell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoded {
    Index(usize),
    Erasure,
}

/// Product of squared sines of the principal angles between the two spans.
pub fn decoder_statistic(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<f64> {
    linalg::subspace_sin_sq(x, y)
}

/// First codeword, in index order, whose span is within `gamma` of `span(y)`.
pub fn angle_decode(cb: &Codebook, y: &ComplexMatrix, gamma: f64) -> Result<Decoded> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("threshold {gamma} outside [0, 1]")));
    }
    if y.nrows() != cb.shape().0 {
        return Err(Error::DimensionMismatch(format!("observation has {} rows, codewords {}", y.nrows(), cb.shape().0)));
    }
    if cb.bases.len() != cb.codewords.len() {
        return Err(Error::DegenerateSpan { smallest: 0.0, limit: 0.0 });
    }
    let qy = linalg::orthonormalize(y)?;
    let tol = Tolerances::default();
    for (w, qx) in cb.bases.iter().enumerate() {
        if linalg::principal_angles_orthonormal(qx, &qy, &tol).sin_sq_product() <= gamma {
            return Ok(Decoded::Index(w));
        }
    }
    Ok(Decoded::Erasure)
}

/// `argmin_w ||y - X(w) h||_F`, ties to the smallest index.
pub fn ml_decode(cb: &Codebook, y: &ComplexMatrix, h: &ChannelMatrix) -> Result<usize> {
    let (n, na) = cb.shape();
    if h.nrows() != na || y.nrows() != n || y.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "observation {:?}, channel {:?}, codewords {:?}",
            y.shape(),
            h.shape(),
            (n, na)
        )));
    }
    let mut best = (0, f64::INFINITY);
    for (w, x) in cb.codewords.iter().enumerate() {
        let d = (y - x * h).norm_squared();
        if d < best.1 {
            best = (w, d);
        }
    }
    Ok(best.0)
}

/// Log-likelihood ratio of `n` rows i.i.d. CN(0, Sigma) against CN(0, I), with
/// `Sigma = rho psi h_w^H h_w + I`.
pub fn warden_llr(y_w: &ComplexMatrix, h_w: &ChannelMatrix, psi: f64, rho: f64) -> Result<f64> {
    if y_w.ncols() != h_w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "warden observation has {} columns, channel {}",
            y_w.ncols(),
            h_w.ncols()
        )));
    }
    if !(psi >= 0.0 && rho > 0.0) {
        return Err(Error::InvalidInput(format!("power {psi} and truncation {rho}")));
    }
    if psi == 0.0 {
        return Ok(0.0);
    }
    let nw = h_w.ncols();
    let sigma = h_w.adjoint() * h_w * Complex64::new(rho * psi, 0.0) + DMatrix::identity(nw, nw);
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("warden covariance is not positive definite".into()))?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    let weight = DMatrix::<Complex64>::identity(nw, nw) - chol.inverse();
    // rows r_i satisfy E[r_i^H r_i] = Sigma, so sum_i r_i W r_i^H = tr(W Y^H Y)
    let quad = (weight * (y_w.adjoint() * y_w)).trace().re;
    Ok(-(y_w.nrows() as f64) * logdet + quad)
}

/// Draws a warden channel inside the uncertainty set; returns it with the
/// number of rejected draws.
pub fn sample_warden_channel<R: Rng + ?Sized>(
    model: &FadingModel,
    lambda0: f64,
    rng: &mut R,
) -> Result<(ChannelMatrix, u64)> {
    for rejected in 0..=MAX_WARDEN_RESAMPLES {
        let h = sample_fading(model, rng);
        if channels::in_uncertainty_set(&h, lambda0)? {
            return Ok((h, rejected));
        }
    }
    Err(Error::SamplingStalled { proposals: MAX_WARDEN_RESAMPLES + 1 })
}

fn transmit_codeword<R: Rng + ?Sized>(shell: Option<&ShellSpec>, n: usize, na: usize, rng: &mut R) -> Result<ComplexMatrix> {
    match shell {
        Some(s) => covertness::sample_codeword_tg(s, n, na, rng),
        None => Ok(DMatrix::zeros(n, na)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// `min_t (alpha + beta)` over thresholds on the pooled LLR samples.
    pub error_sum: BoundEstimate,
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    /// Average Gaussian-surrogate divergence at the realized warden channels.
    pub mean_kl: f64,
    pub resamples: u64,
}

/// Smallest `alpha + beta` for the rule "declare transmission when LLR > t".
/// Returns `(alpha, beta, t)`; equal LLR values move together.
pub fn min_error_sum(noise_llr: &[f64], signal_llr: &[f64]) -> Result<(f64, f64, f64)> {
    if noise_llr.is_empty() || signal_llr.is_empty() {
        return Err(Error::InvalidInput("both hypotheses need samples".into()));
    }
    let mut pooled: Vec<(f64, bool)> = noise_llr
        .iter()
        .map(|&v| (v, false))
        .chain(signal_llr.iter().map(|&v| (v, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (n0, n1) = (noise_llr.len() as f64, signal_llr.len() as f64);
    let (mut below0, mut below1) = (0usize, 0usize);
    let mut best = (1.0, 0.0, f64::NEG_INFINITY);
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                below1 += 1;
            } else {
                below0 += 1;
            }
            i += 1;
        }
        let alpha = 1.0 - below0 as f64 / n0;
        let beta = below1 as f64 / n1;
        if alpha + beta < best.0 + best.1 {
            best = (alpha, beta, t);
        }
    }
    Ok(best)
}

/// Warden detection at `psi = power_ach(p)`.
pub fn detection_error_sum(p: &CovertParams, model_w: &FadingModel, trials: usize, engine: &Engine) -> Result<DetectionReport> {
    detection_error_sum_at(p, power_ach(p), model_w, trials, engine)
}

/// Simulates `trials` noise-only and `trials` transmitting blocks, each with a
/// fresh warden channel and a fresh truncated-Gaussian codeword at power `psi`.
pub fn detection_error_sum_at(
    p: &CovertParams,
    psi: f64,
    model_w: &FadingModel,
    trials: usize,
    engine: &Engine,
) -> Result<DetectionReport> {
    p.validate()?;
    if trials < 1000 {
        return Err(Error::InsufficientTrials { trials, what: "the warden error sum (need 1000)".into() });
    }
    if model_w.dims() != (p.dims.na, p.dims.nw) {
        return Err(Error::DimensionMismatch(format!("warden model {:?} vs dims {:?}", model_w.dims(), p.dims)));
    }
    let shell = if psi > 0.0 { Some(ShellSpec::new(p.n, p.rho, psi)?) } else { None };
    let rows = engine.try_map(streams::DETECTION, trials, |rng, _| {
        let (h_w, rejected) = sample_warden_channel(model_w, p.lambda0, rng)?;
        let noise = channels::sample_noise(p.n, p.dims.nw, rng);
        let x = transmit_codeword(shell.as_ref(), p.n, p.dims.na, rng)?;
        let y1 = channels::transmit(&x, &h_w, rng)?;
        let gram = h_w.adjoint() * &h_w * Complex64::new(p.rho * psi, 0.0);
        Ok((
            warden_llr(&noise, &h_w, psi, p.rho)?,
            warden_llr(&y1, &h_w, psi, p.rho)?,
            covertness::kl_output_vs_noise(&gram, p.n)?,
            rejected,
        ))
    })?;
    let l0: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let l1: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (alpha, beta, threshold) = min_error_sum(&l0, &l1)?;
    let nf = trials as f64;
    let se = (alpha * (1.0 - alpha) / nf + beta * (1.0 - beta) / nf).sqrt();
    Ok(DetectionReport {
        error_sum: BoundEstimate { value: alpha + beta, ci_half_width: 1.96 * se, trials, seed: engine.seed },
        alpha,
        beta,
        threshold,
        mean_kl: rows.iter().map(|r| r.2).sum::<f64>() / nf,
        resamples: rows.iter().map(|r| r.3).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Decoder {
    Angle { gamma: f64 },
    Ml,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub message: usize,
    pub decoded: Decoded,
    pub correct: bool,
    pub warden_llr: f64,
    pub sin_sq_true: f64,
    pub warden_resamples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub trials: usize,
    pub errors: usize,
    pub erasures: usize,
    /// Erasures count as errors.
    pub error_rate: BoundEstimate,
    pub warden_resamples: u64,
    pub reports: Vec<TrialReport>,
}

impl LinkReport {
    pub fn warden_llrs(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.warden_llr).collect()
    }

    pub fn sin_sq_true(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.sin_sq_true).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOptions {
    /// Draw one codebook for all trials instead of one per trial. Faster, but
    /// the error rate is then conditional on that codebook rather than an
    /// average over the random-coding ensemble.
    #[serde(default)]
    pub reuse_codebook: bool,
    /// Transmit power as a multiple of `power_ach`.
    #[serde(default = "unit")]
    pub power_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self { reuse_codebook: false, power_scale: 1.0 }
    }
}

/// Runs `trials` independent blocks with `m` messages.
#[allow(clippy::too_many_arguments)]
pub fn run_link_trials(
    p: &CovertParams,
    model_b: &FadingModel,
    model_w: &FadingModel,
    m: usize,
    decoder: Decoder,
    trials: usize,
    opts: LinkOptions,
    engine: &Engine,
) -> Result<LinkReport> {
    p.validate()?;
    if trials == 0 {
        return Err(Error::InsufficientTrials { trials, what: "a link error rate".into() });
    }
    if model_b.dims() != (p.dims.na, p.dims.nb) || model_w.dims() != (p.dims.na, p.dims.nw) {
        return Err(Error::DimensionMismatch(format!(
            "channel models {:?} / {:?} vs dims {:?}",
            model_b.dims(),
            model_w.dims(),
            p.dims
        )));
    }
    if let Decoder::Angle { gamma } = decoder {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!("threshold {gamma} outside [0, 1]")));
        }
    }
    if !(opts.power_scale >= 0.0 && opts.power_scale.is_finite()) {
        return Err(Error::InvalidInput(format!("power scale {} must be nonnegative", opts.power_scale)));
    }
    let psi = opts.power_scale * power_ach(p);
    let shared = if opts.reuse_codebook {
        Some(build_codebook_at(p, psi, m, &mut engine.stream(streams::SHARED_CODEBOOK, 0))?)
    } else {
        None
    };
    let reports = engine.try_map(streams::TRIAL, trials, |rng: &mut Stream, _| {
        let fresh;
        let cb = match &shared {
            Some(cb) => cb,
            None => {
                fresh = build_codebook_at(p, psi, m, rng)?;
                &fresh
            }
        };
        let message = rng.random_range(0..m);
        let x = &cb.codewords[message];
        let h_b = sample_fading(model_b, rng);
        let (h_w, warden_resamples) = sample_warden_channel(model_w, p.lambda0, rng)?;
        let y_b = channels::transmit(x, &h_b, rng)?;
        let y_w = channels::transmit(x, &h_w, rng)?;
        let decoded = match decoder {
            Decoder::Angle { gamma } => angle_decode(cb, &y_b, gamma)?,
            Decoder::Ml => Decoded::Index(ml_decode(cb, &y_b, &h_b)?),
        };
        Ok(TrialReport {
            message,
            decoded,
            correct: decoded == Decoded::Index(message),
            warden_llr: warden_llr(&y_w, &h_w, psi, p.rho)?,
            sin_sq_true: if psi > 0.0 { decoder_statistic(x, &y_b)? } else { 1.0 },
            warden_resamples,
        })
    })?;
    let errors = reports.iter().filter(|r| !r.correct).count();
    let erasures = reports.iter().filter(|r| r.decoded == Decoded::Erasure).count();
    let mut acc = montecarlo::MeanAccumulator::new();
    acc.extend(reports.iter().map(|r| if r.correct { 0.0 } else { 1.0 }));
    Ok(LinkReport {
        trials,
        errors,
        erasures,
        error_rate: acc.estimate(engine.seed)?,
        warden_resamples: reports.iter().map(|r| r.warden_resamples).sum(),
        reports,
    })
}
