//! Covert power budgets, the Gaussian-surrogate divergence at the warden and
//! the truncated complex-Gaussian codeword sampler.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::channels::{self, SystemDims};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};

/// Proposal budget per codeword column before the sampler gives up.
pub const MAX_PROPOSALS: u64 = 1_000_000;

/// Parameters shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertParams {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    pub nu_sq: f64,
    pub omega: f64,
    pub tau: f64,
    pub lambda0: f64,
    pub dims: SystemDims,
}

impl CovertParams {
    /// Defaults `rho = 1 - 1/n`, `nu^2 = omega = 1 + 1/n` and
    /// `tau = min(1/sqrt(n), epsilon/2)`.
    pub fn new(n: usize, epsilon: f64, delta: f64, lambda0: f64, dims: SystemDims) -> Result<Self> {
        let nf = n.max(1) as f64;
        let p = Self {
            n,
            epsilon,
            delta,
            rho: 1.0 - 1.0 / nf,
            nu_sq: 1.0 + 1.0 / nf,
            omega: 1.0 + 1.0 / nf,
            tau: default_tau(n, epsilon),
            lambda0,
            dims,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidInput(what));
        if self.n < 2 {
            return bad(format!("blocklength {} must be at least 2", self.n));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta {} must be positive", self.delta));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho {} outside (0, 1)", self.rho));
        }
        if !(self.nu_sq > 1.0 && self.nu_sq.is_finite()) {
            return bad(format!("nu^2 {} must exceed 1", self.nu_sq));
        }
        if !(self.omega > 1.0 && self.omega.is_finite()) {
            return bad(format!("omega {} must exceed 1", self.omega));
        }
        if !(self.tau > 0.0 && self.tau < self.epsilon) {
            return bad(format!("tau {} outside (0, epsilon)", self.tau));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad(format!("lambda0 {} must be positive", self.lambda0));
        }
        self.dims.validate()
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.epsilon, self.delta, self.lambda0, self.dims)
    }
}

/// `1/sqrt(n)` capped at `epsilon/2` so that `tau < epsilon` at short blocklengths.
pub fn default_tau(n: usize, epsilon: f64) -> f64 {
    (1.0 / (n.max(1) as f64).sqrt()).min(epsilon / 2.0)
}

/// Achievability power `sqrt(2 delta / (n rho^2 nu^2 N_a lambda0^2))`.
pub fn power_ach(p: &CovertParams) -> f64 {
    let na = p.dims.na as f64;
    (2.0 * p.delta / (p.n as f64 * p.rho * p.rho * p.nu_sq * na * p.lambda0 * p.lambda0)).sqrt()
}

/// Converse power `sqrt(2 delta omega / (n N_a lambda0^2))`.
pub fn power_con(p: &CovertParams) -> f64 {
    let na = p.dims.na as f64;
    (2.0 * p.delta * p.omega / (p.n as f64 * na * p.lambda0 * p.lambda0)).sqrt()
}

/// The maximum-power level `(1 + 1/n) power_con` used by the converse bound.
pub fn converse_power(p: &CovertParams) -> f64 {
    (1.0 + 1.0 / p.n as f64) * power_con(p)
}

/// Worst-case warden gram in the uncertainty set: every eigenvalue at `lambda0`.
pub fn worst_case_gram(lambda0: f64, na: usize) -> ComplexMatrix {
    linalg::identity(na).map(|z| z * lambda0)
}

/// `l - ln(1 + l)` without cancellation for small `l`.
pub fn log_excess(l: f64) -> f64 {
    if l.abs() < 0.01 {
        let mut term = l * l;
        let mut sum = 0.0;
        for k in 2..16 {
            sum += term / k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            term *= l;
        }
        sum
    } else {
        l - l.ln_1p()
    }
}

fn psd_eigenvalues(g: &ComplexMatrix) -> Result<Vec<f64>> {
    let ev = linalg::hermitian_eigenvalues(g)?;
    if let Some(&min) = ev.last() {
        if min < -linalg::Tolerances::default().psd_neg {
            return Err(Error::Domain(format!("gram matrix is not PSD (eigenvalue {min:e})")));
        }
    }
    Ok(ev.into_iter().map(|l| l.max(0.0)).collect())
}

/// `n (tr G - log det(G + I))`: divergence of `n` independent CN(0, G + I)
/// outputs from CN(0, I) noise.
pub fn kl_output_vs_noise(scaled_gram: &ComplexMatrix, n: usize) -> Result<f64> {
    let ev = psd_eigenvalues(scaled_gram)?;
    Ok(n as f64 * ev.iter().map(|&l| log_excess(l)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

/// Second-order bracket `tr(G^2)/(2 omega) < tr G - log det(G + I) < tr(G^2)/2`.
///
/// Valid when `tr(G^3)/tr(G^2) < 3 (omega - 1)/(2 omega)`; outside that regime
/// the call fails with [`Error::OutOfRegime`].
pub fn taylor_sandwich_check(scaled_gram: &ComplexMatrix, omega: f64) -> Result<Sandwich> {
    if !(omega > 1.0) {
        return Err(Error::InvalidInput(format!("omega {omega} must exceed 1")));
    }
    let ev = psd_eigenvalues(scaled_gram)?;
    let t2: f64 = ev.iter().map(|l| l * l).sum();
    let t3: f64 = ev.iter().map(|l| l * l * l).sum();
    let value: f64 = ev.iter().map(|&l| log_excess(l)).sum();
    if t2 == 0.0 {
        return Ok(Sandwich { lower: 0.0, value, upper: 0.0 });
    }
    let limit = 3.0 * (omega - 1.0) / (2.0 * omega);
    if t3 / t2 >= limit {
        return Err(Error::OutOfRegime(format!(
            "trace ratio {:.3e} is not below {limit:.3e}",
            t3 / t2
        )));
    }
    let s = Sandwich { lower: t2 / (2.0 * omega), value, upper: t2 / 2.0 };
    if !(s.lower < s.value && s.value < s.upper) {
        return Err(Error::Domain(format!("sandwich violated: {s:?}")));
    }
    Ok(s)
}

/// Pinsker lower bound `1 - sqrt(delta/2)` on the warden's total error.
pub fn pinsker_floor(delta: f64) -> f64 {
    (1.0 - (delta.max(0.0) / 2.0).sqrt()).max(0.0)
}

/// Probability that a CN(0, rho psi I_n) column lands in the shell
/// `[rho^2 n psi, n psi]`, via the regularized lower incomplete gamma function.
pub fn delta_n(n: usize, rho: f64) -> Result<f64> {
    if n == 0 || !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("delta_n needs n >= 1 and rho in (0, 1), got {n}, {rho}")));
    }
    let a = n as f64;
    Ok((gamma_lr(a, a / rho) - gamma_lr(a, a * rho)).max(0.0))
}

/// Per-column norm shell of the truncated Gaussian codebook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    pub inner_radius_sq: f64,
    pub outer_radius_sq: f64,
    pub column_variance: f64,
}

impl ShellSpec {
    pub fn new(n: usize, rho: f64, psi: f64) -> Result<Self> {
        let s = Self {
            inner_radius_sq: rho * rho * n as f64 * psi,
            outer_radius_sq: n as f64 * psi,
            column_variance: rho * psi,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_params(p: &CovertParams) -> Result<Self> {
        Self::new(p.n, p.rho, power_ach(p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_radius_sq > 0.0 && self.inner_radius_sq < self.outer_radius_sq && self.column_variance > 0.0) {
            return Err(Error::InvalidInput(format!("invalid shell {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, norm_sq: f64) -> bool {
        self.inner_radius_sq <= norm_sq && norm_sq <= self.outer_radius_sq
    }
}

/// Codeword plus the number of radius proposals spent on it.
#[derive(Debug, Clone)]
pub struct TgDraw {
    pub codeword: ComplexMatrix,
    pub proposals: u64,
}

/// Draws an `n x N_a` codeword whose columns are CN(0, rho psi I_n) conditioned
/// on the shell.
///
/// An isotropic Gaussian column factors into an independent uniform direction
/// and a squared norm distributed as `rho psi Gamma(n, 1)`, so rejection on the
/// norm alone yields the same conditional law as rejecting whole columns while
/// costing one scalar draw per proposal.
pub fn sample_codeword_tg<R: Rng + ?Sized>(shell: &ShellSpec, n: usize, na: usize, rng: &mut R) -> Result<ComplexMatrix> {
    Ok(sample_codeword_tg_counted(shell, n, na, rng)?.codeword)
}

pub fn sample_codeword_tg_counted<R: Rng + ?Sized>(
    shell: &ShellSpec,
    n: usize,
    na: usize,
    rng: &mut R,
) -> Result<TgDraw> {
    shell.validate()?;
    if n == 0 || na == 0 {
        return Err(Error::InvalidInput("codeword needs positive dimensions".into()));
    }
    let radius = rand_distr::Gamma::new(n as f64, shell.column_variance).expect("positive shape");
    let mut out = DMatrix::zeros(n, na);
    let mut total = 0;
    for j in 0..na {
        let dir = channels::sample_noise(n, 1, rng);
        let dir_norm = dir.norm();
        let mut proposals = 0;
        loop {
            if proposals >= MAX_PROPOSALS {
                return Err(Error::SamplingStalled { proposals });
            }
            proposals += 1;
            let r_sq: f64 = rand_distr::Distribution::sample(&radius, rng);
            if !shell.contains(r_sq) {
                continue;
            }
            let col = &dir * num_complex::Complex64::new(r_sq.sqrt() / dir_norm, 0.0);
            // guard the boundary against rounding in the rescale
            if shell.contains(col.norm_squared()) {
                out.set_column(j, &col.column(0));
                break;
            }
        }
        total += proposals;
    }
    Ok(TgDraw { codeword: out, proposals: total })
}

/// Expected `||column||^2` under the truncated law, from incomplete gamma
/// functions of the shell endpoints.
pub fn truncated_mean_norm_sq(shell: &ShellSpec, n: usize) -> f64 {
    let a = n as f64;
    let lo = shell.inner_radius_sq / shell.column_variance;
    let hi = shell.outer_radius_sq / shell.column_variance;
    let mass = gamma_lr(a, hi) - gamma_lr(a, lo);
    let first = gamma_lr(a + 1.0, hi) - gamma_lr(a + 1.0, lo);
    shell.column_variance * a * first / mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{mean_ci, Engine};

    fn params(n: usize) -> CovertParams {
        CovertParams::new(n, 0.01, 0.1, 1.0, SystemDims::square(2).unwrap()).unwrap()
    }

    #[test]
    fn power_levels_hand_values() {
        let p = params(1000);
        let (rho, nu2): (f64, f64) = (1.0 - 1e-3, 1.0 + 1e-3);
        let expected = (0.2 / (1000.0 * rho * rho * nu2 * 2.0)).sqrt();
        assert!((power_ach(&p) - expected).abs() < 1e-15);
        assert!((power_ach(&p) - 0.010).abs() < 1e-4);
        assert!((power_con(&p) - 0.010).abs() < 1e-4);
        // con/ach = sqrt(omega rho^2 nu^2) = 1 - 1/n^2 under the defaults
        assert!((power_con(&p) / power_ach(&p) - (1.0 - 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn power_scalings() {
        let p = params(1000);
        let q = CovertParams { delta: 0.4, ..p };
        assert!((power_ach(&q) / power_ach(&p) - 2.0).abs() < 1e-12);
        let big = CovertParams { n: 4000, ..p };
        assert!((power_ach(&big) / power_ach(&p) - 0.5).abs() < 1e-12);
        let l = CovertParams { lambda0: 2.0, omega: 1.0 + 1e-12, ..p };
        let base = CovertParams { omega: 1.0 + 1e-12, ..p };
        assert!((power_con(&l) / power_con(&base) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tau_default_is_admissible() {
        assert!((default_tau(100, 0.01) - 0.005).abs() < 1e-15);
        assert!((default_tau(1_000_000, 0.01) - 1e-3).abs() < 1e-15);
        let p = params(5000);
        assert!(p.tau < p.epsilon);
        assert!(CovertParams { tau: 0.02, ..p }.validate().is_err());
    }

    #[test]
    fn kl_scalar_and_numeric_integral() {
        let g = linalg::identity(1).map(|z| z * 0.01);
        let kl = kl_output_vs_noise(&g, 1000).unwrap();
        assert!((kl - 1000.0 * (0.01 - 1.01f64.ln())).abs() < 1e-12);
        assert!((kl - 0.0497).abs() < 1e-4);
        // KL(CN(0, s) || CN(0, 1)) per use by integrating over |y|^2 = t ~ Exp(1/s)
        let s: f64 = 1.01;
        let steps = 200_000;
        let upper = 60.0;
        let h = upper / steps as f64;
        let mut integral = 0.0;
        for i in 0..steps {
            let t = (i as f64 + 0.5) * h;
            let dens = (-t / s).exp() / s;
            let log_ratio = -s.ln() - t / s + t;
            integral += dens * log_ratio * h;
        }
        assert!((1000.0 * integral - kl).abs() < 1e-6);
        assert_eq!(kl_output_vs_noise(&ComplexMatrix::zeros(2, 2), 100).unwrap(), 0.0);
    }

    #[test]
    fn kl_worst_case_within_budget() {
        for n in [100, 1000, 10_000, 100_000] {
            let p = params(n);
            let g = worst_case_gram(p.lambda0, 2).map(|z| z * (p.rho * power_ach(&p)));
            let kl = kl_output_vs_noise(&g, n).unwrap();
            assert!(kl <= p.delta / p.nu_sq, "n={n}: {kl}");
        }
    }

    #[test]
    fn sandwich_cases() {
        let g = linalg::identity(2).map(|z| z * 1e-3);
        let s = taylor_sandwich_check(&g, 1.01).unwrap();
        assert!(s.lower < s.value && s.value < s.upper);
        let g = linalg::identity(1).map(|z| z * 0.05);
        assert!(taylor_sandwich_check(&g, 2.0).is_ok());
        let tiny = linalg::identity(2).map(|z| z * 1e-9);
        let s = taylor_sandwich_check(&tiny, 1.5).unwrap();
        assert!(s.upper < 1e-17);
        let big = linalg::identity(2).map(|z| z * 0.5);
        assert!(matches!(taylor_sandwich_check(&big, 1.01), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn pinsker_values() {
        assert_eq!(pinsker_floor(0.0), 1.0);
        assert_eq!(pinsker_floor(2.0), 0.0);
        assert!((pinsker_floor(0.1) - 0.776_393_202).abs() < 1e-8);
    }

    #[test]
    fn delta_n_values() {
        assert!(delta_n(2000, 0.9).unwrap() >= 0.99);
        let a = delta_n(500, 0.99).unwrap();
        let b = delta_n(500, 0.999).unwrap();
        let c = delta_n(500, 0.99999).unwrap();
        assert!(a > b && b > c && c < 1e-3);
        assert!(delta_n(10, 1.0).is_err());
    }

    #[test]
    fn acceptance_rate_matches_delta_n() {
        let (n, rho) = (200, 0.99);
        let shell = ShellSpec::new(n, rho, 0.01).unwrap();
        let draws = Engine::new(11, 1).map(0, 20_000, |rng, _| {
            sample_codeword_tg_counted(&shell, n, 1, rng).unwrap().proposals as f64
        });
        let proposals: f64 = draws.iter().sum();
        let rate = draws.len() as f64 / proposals;
        let dn = delta_n(n, rho).unwrap();
        // accepted count over a fixed proposal total is binomial
        let se = (dn * (1.0 - dn) / proposals).sqrt();
        assert!((rate - dn).abs() <= 3.0 * se, "rate {rate} vs {dn}");
        assert!(proposals >= 1e5);
    }

    #[test]
    fn codeword_columns_in_shell_and_truncated_mean() {
        let (n, rho) = (100, 0.9);
        let shell = ShellSpec::new(n, rho, 0.02).unwrap();
        let norms = Engine::new(12, 1).map(1, 10_000, |rng, _| {
            let x = sample_codeword_tg(&shell, n, 2, rng).unwrap();
            for j in 0..2 {
                assert!(shell.contains(x.column(j).norm_squared()));
            }
            x.column(0).norm_squared() / n as f64
        });
        let est = mean_ci(&norms).unwrap();
        let oracle = truncated_mean_norm_sq(&shell, n) / n as f64;
        assert!((est.value - oracle).abs() <= 3.0 * est.std_error(), "{} vs {oracle}", est.value);
    }

    #[test]
    fn codeword_determinism() {
        let shell = ShellSpec::new(50, 0.95, 0.05).unwrap();
        let e = Engine::new(3, 1);
        let a = sample_codeword_tg(&shell, 50, 2, &mut e.stream(0, 4)).unwrap();
        let b = sample_codeword_tg(&shell, 50, 2, &mut e.stream(0, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stalled_sampler_reports() {
        // the shell sits ~50 standard deviations above the proposal mass
        let shell = ShellSpec { inner_radius_sq: 150.0, outer_radius_sq: 151.0, column_variance: 1.0 };
        let r = sample_codeword_tg(&shell, 1, 1, &mut Engine::new(1, 1).stream(0, 0));
        assert!(matches!(r, Err(Error::SamplingStalled { .. })));
    }
}
