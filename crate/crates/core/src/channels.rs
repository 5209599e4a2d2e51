//! Fading laws, noise, the channel map `Y = XH + Z` and the warden's
//! uncertainty set.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::montecarlo::{self, Engine};

pub type ChannelMatrix = ComplexMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum FadingModel {
    Fixed { h: ChannelMatrix },
    Rayleigh { rows: usize, cols: usize },
    /// `sqrt(K/(K+1)) H_los + sqrt(1/(K+1)) H_nlos` with Rayleigh `H_nlos`.
    Rician { k: f64, los: ChannelMatrix },
    /// Entry modulus with Nakagami pdf (squared modulus Gamma(m, upsilon/m)),
    /// independent uniform phase.
    Nakagami { m: f64, upsilon: f64, rows: usize, cols: usize },
}

impl FadingModel {
    pub fn fixed(h: ChannelMatrix) -> Result<Self> {
        linalg::check_finite(&h)?;
        Ok(Self::Fixed { h })
    }

    pub fn rayleigh(rows: usize, cols: usize) -> Result<Self> {
        let m = Self::Rayleigh { rows, cols };
        m.validate()?;
        Ok(m)
    }

    pub fn rician(k: f64, los: ChannelMatrix) -> Result<Self> {
        let m = Self::Rician { k, los };
        m.validate()?;
        Ok(m)
    }

    /// Rician channel with an all-ones line-of-sight component.
    pub fn rician_ones(k: f64, rows: usize, cols: usize) -> Result<Self> {
        Self::rician(k, DMatrix::from_element(rows, cols, Complex64::new(1.0, 0.0)))
    }

    pub fn nakagami(m: f64, upsilon: f64, rows: usize, cols: usize) -> Result<Self> {
        let model = Self::Nakagami { m, upsilon, rows, cols };
        model.validate()?;
        Ok(model)
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Self::Fixed { h } => (h.nrows(), h.ncols()),
            Self::Rayleigh { rows, cols } | Self::Nakagami { rows, cols, .. } => (*rows, *cols),
            Self::Rician { los, .. } => (los.nrows(), los.ncols()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Fixed { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.dims();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("fading model needs positive dimensions".into()));
        }
        match self {
            Self::Fixed { h } => linalg::check_finite(h),
            Self::Rayleigh { .. } => Ok(()),
            Self::Rician { k, los } => {
                if !(k.is_finite() && *k >= 0.0) {
                    return Err(Error::InvalidInput(format!("Rician factor {k} must be finite and >= 0")));
                }
                linalg::check_finite(los)
            }
            Self::Nakagami { m, upsilon, .. } => {
                if !(m.is_finite() && *m >= 0.5) {
                    return Err(Error::InvalidInput(format!("Nakagami shape {m} must be >= 0.5")));
                }
                if !(upsilon.is_finite() && *upsilon > 0.0) {
                    return Err(Error::InvalidInput(format!("Nakagami spread {upsilon} must be > 0")));
                }
                Ok(())
            }
        }
    }
}

pub fn sample_fading<R: Rng + ?Sized>(model: &FadingModel, rng: &mut R) -> ChannelMatrix {
    match model {
        FadingModel::Fixed { h } => h.clone(),
        FadingModel::Rayleigh { rows, cols } => sample_noise(*rows, *cols, rng),
        FadingModel::Rician { k, los } => {
            let nlos = sample_noise(los.nrows(), los.ncols(), rng);
            let a = (k / (k + 1.0)).sqrt();
            let b = (1.0 / (k + 1.0)).sqrt();
            los.map(|z| z * a) + nlos.map(|z| z * b)
        }
        FadingModel::Nakagami { m, upsilon, rows, cols } => {
            // column-major fill order: entry (i, j) is drawn at position i + rows*j
            DMatrix::from_fn(*rows, *cols, |_, _| {
                let power = montecarlo::gamma(rng, *m) * upsilon / m;
                let phase = std::f64::consts::TAU * montecarlo::uniform_closed0(rng);
                Complex64::from_polar(power.sqrt(), phase)
            })
        }
    }
}

/// i.i.d. CN(0, 1) matrix, filled column by column.
pub fn sample_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    DMatrix::from_fn(rows, cols, |_, _| montecarlo::complex_normal(rng))
}

/// `x h + z` with fresh unit-variance noise `z`.
pub fn transmit<R: Rng + ?Sized>(x: &ComplexMatrix, h: &ChannelMatrix, rng: &mut R) -> Result<ComplexMatrix> {
    if x.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} columns but channel has {} rows",
            x.ncols(),
            h.nrows()
        )));
    }
    Ok(x * h + sample_noise(x.nrows(), h.ncols(), rng))
}

/// Inclusive check `||h_w||_2 <= sqrt(lambda0)`.
pub fn in_uncertainty_set(h_w: &ChannelMatrix, lambda0: f64) -> Result<bool> {
    Ok(linalg::spectral_norm(h_w)? <= lambda0.sqrt())
}

/// Antenna counts at the transmitter, the legitimate receiver and the warden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDims {
    pub na: usize,
    pub nb: usize,
    pub nw: usize,
}

impl SystemDims {
    pub fn new(na: usize, nb: usize, nw: usize) -> Result<Self> {
        let d = Self { na, nb, nw };
        d.validate()?;
        Ok(d)
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.na == 0 || self.nb == 0 || self.nw == 0 {
            return Err(Error::InvalidInput("antenna counts must be positive".into()));
        }
        if self.na > self.nb || self.na > self.nw {
            return Err(Error::InvalidInput(format!(
                "transmit antennas {} exceed a receiver's count ({}, {})",
                self.na, self.nb, self.nw
            )));
        }
        Ok(())
    }
}

/// Spectral norms of `trials` independent draws, in trial order.
pub fn spectral_norm_samples(model: &FadingModel, trials: usize, engine: &Engine, stream_id: u64) -> Result<Vec<f64>> {
    model.validate()?;
    engine.try_map(stream_id, trials, |rng, _| linalg::spectral_norm(&sample_fading(model, rng)))
}

/// The `(1 - tail)` left-continuous quantile of the spectral norm.
pub fn spectral_tail_threshold(
    model: &FadingModel,
    trials: usize,
    tail: f64,
    engine: &Engine,
    stream_id: u64,
) -> Result<f64> {
    check_tail(trials, tail)?;
    let norms = spectral_norm_samples(model, trials, engine, stream_id)?;
    montecarlo::quantile(&norms, 1.0 - tail)
}

pub fn check_tail(trials: usize, tail: f64) -> Result<()> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::InvalidInput(format!("tail probability {tail} outside (0, 1)")));
    }
    if (trials as f64) * tail < 1.0 - 1e-9 {
        return Err(Error::InsufficientTrials { trials, what: format!("a tail probability of {tail:e}") });
    }
    Ok(())
}
