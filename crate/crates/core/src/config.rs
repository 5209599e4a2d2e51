//! JSON experiment configurations. Unknown keys are rejected and every
//! config is validated before any sampling starts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{BetaTail, GainConvention};
use crate::channels::{FadingModel, SystemDims};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};

/// Dense matrix as nested rows; `im` defaults to zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.re.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("matrix rows must be nonempty and equally long".into()));
        }
        let re: Vec<f64> = self.re.iter().flatten().copied().collect();
        let im: Vec<f64> = match &self.im {
            Some(im) => {
                if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config("imaginary part has a different shape".into()));
                }
                im.iter().flatten().copied().collect()
            }
            None => vec![0.0; rows * cols],
        };
        linalg::from_parts(rows, cols, &re, &im).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosSpec {
    Ones,
    Identity,
    Dense(MatrixJson),
}

/// A fading family; the shape comes from the antenna counts of each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Rayleigh,
    Rician {
        k: f64,
        #[serde(default = "default_los")]
        los: LosSpec,
    },
    Nakagami {
        m: f64,
        upsilon: f64,
    },
    Fixed {
        h: MatrixJson,
    },
}

fn default_los() -> LosSpec {
    LosSpec::Ones
}

impl ModelSpec {
    pub fn build(&self, rows: usize, cols: usize) -> Result<FadingModel> {
        let model = match self {
            ModelSpec::Rayleigh => FadingModel::rayleigh(rows, cols),
            ModelSpec::Rician { k, los } => {
                let los = match los {
                    LosSpec::Ones => ComplexMatrix::from_element(rows, cols, num_complex::Complex64::new(1.0, 0.0)),
                    LosSpec::Identity => ComplexMatrix::identity(rows, cols),
                    LosSpec::Dense(m) => m.to_matrix()?,
                };
                FadingModel::rician(*k, los)
            }
            ModelSpec::Nakagami { m, upsilon } => FadingModel::nakagami(*m, *upsilon, rows, cols),
            ModelSpec::Fixed { h } => FadingModel::fixed(h.to_matrix()?),
        };
        let model = model.map_err(|e| Error::Config(e.to_string()))?;
        if model.dims() != (rows, cols) {
            return Err(Error::Config(format!("model is {:?} but {rows}x{cols} is required", model.dims())));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedModel {
    pub name: String,
    pub model: ModelSpec,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Config {
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub trials: usize,
    pub tail: f64,
    /// ECDF rows written per model.
    pub ecdf_points: usize,
    pub rows: usize,
    pub cols: usize,
    pub models: Vec<NamedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub convention: GainConvention,
    pub model: ModelSpec,
    pub n: Vec<usize>,
    /// Square systems `N_a = N_b = N_w`.
    pub antennas: Vec<usize>,
    pub lambda0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda0: f64,
    pub antennas: usize,
    #[serde(default)]
    pub convention: GainConvention,
    pub model: ModelSpec,
    pub n: Vec<usize>,
    #[serde(default)]
    pub ach_tail: BetaTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecoderSpec {
    /// `gamma: null` uses the achievability threshold estimated from
    /// `gamma_trials` draws.
    Angle {
        #[serde(default)]
        gamma: Option<f64>,
    },
    Ml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub trials: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda0: f64,
    pub dims: SystemDims,
    pub messages: usize,
    pub model_b: ModelSpec,
    pub model_w: ModelSpec,
    pub decoder: DecoderSpec,
    #[serde(default = "default_gamma_trials")]
    pub gamma_trials: usize,
    pub detection_trials: usize,
    #[serde(default)]
    pub reuse_codebook: bool,
    #[serde(default = "one")]
    pub power_scale: f64,
}

fn default_gamma_trials() -> usize {
    100_000
}

fn one() -> f64 {
    1.0
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return bad(format!("{name} = {v} must lie in (0, 1)"));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return bad(format!("{name} = {v} must be positive"));
    }
    Ok(())
}

fn check_common(workers: usize, trials: usize) -> Result<()> {
    if workers == 0 {
        return bad("workers must be at least 1");
    }
    if trials == 0 {
        return bad("trials must be at least 1");
    }
    Ok(())
}

/// Common knobs that the command line may override.
pub trait Experiment: for<'de> Deserialize<'de> + Serialize {
    fn validate(&self) -> Result<()>;
    fn seed_mut(&mut self) -> &mut u64;
    fn workers_mut(&mut self) -> &mut usize;
    fn trials_mut(&mut self) -> &mut usize;
}

macro_rules! knobs {
    () => {
        fn seed_mut(&mut self) -> &mut u64 {
            &mut self.seed
        }
        fn workers_mut(&mut self) -> &mut usize {
            &mut self.workers
        }
        fn trials_mut(&mut self) -> &mut usize {
            &mut self.trials
        }
    };
}

impl Experiment for Fig2Config {
    knobs!();

    fn validate(&self) -> Result<()> {
        check_common(self.workers, self.trials)?;
        check_probability("tail", self.tail)?;
        if (self.trials as f64) * self.tail < 1.0 - 1e-9 {
            return bad(format!("{} trials cannot resolve a tail of {:e}", self.trials, self.tail));
        }
        if self.ecdf_points < 2 {
            return bad("ecdf_points must be at least 2");
        }
        if self.models.is_empty() {
            return bad("no models given");
        }
        for m in &self.models {
            m.model.build(self.rows, self.cols)?;
        }
        Ok(())
    }
}

impl Experiment for RateConfig {
    knobs!();

    fn validate(&self) -> Result<()> {
        check_common(self.workers, self.trials)?;
        check_probability("epsilon", self.epsilon)?;
        check_positive("delta", self.delta)?;
        if (self.trials as f64) * self.epsilon < 10.0 {
            return bad(format!("{} trials cannot resolve the {}-quantile", self.trials, self.epsilon));
        }
        if self.n.is_empty() || self.antennas.is_empty() || self.lambda0.is_empty() {
            return bad("the n, antennas and lambda0 grids must be nonempty");
        }
        if self.n.contains(&0) || self.antennas.contains(&0) {
            return bad("grid entries must be positive");
        }
        for &l in &self.lambda0 {
            check_positive("lambda0", l)?;
        }
        for &a in &self.antennas {
            self.model.build(a, a)?;
        }
        Ok(())
    }
}

impl Experiment for BoundsConfig {
    knobs!();

    fn validate(&self) -> Result<()> {
        check_common(self.workers, self.trials)?;
        check_probability("epsilon", self.epsilon)?;
        check_positive("delta", self.delta)?;
        check_positive("lambda0", self.lambda0)?;
        if self.n.is_empty() {
            return bad("the n grid is empty");
        }
        if let Some(&n) = self.n.iter().find(|&&n| n <= 2 * self.antennas) {
            return bad(format!("blocklength {n} must exceed N_a + N_b = {}", 2 * self.antennas));
        }
        if (self.trials as f64) * self.epsilon < 10.0 {
            return bad(format!("{} trials cannot resolve the {}-quantile", self.trials, self.epsilon));
        }
        self.model.build(self.antennas, self.antennas)?;
        Ok(())
    }
}

impl Experiment for SimulateConfig {
    knobs!();

    fn validate(&self) -> Result<()> {
        check_common(self.workers, self.trials)?;
        check_probability("epsilon", self.epsilon)?;
        check_positive("delta", self.delta)?;
        check_positive("lambda0", self.lambda0)?;
        self.dims.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.n <= self.dims.na + self.dims.nb {
            return bad(format!("blocklength {} must exceed N_a + N_b", self.n));
        }
        if self.messages == 0 {
            return bad("messages must be at least 1");
        }
        if self.detection_trials < 1000 {
            return bad("detection_trials must be at least 1000");
        }
        if !(self.power_scale >= 0.0 && self.power_scale.is_finite()) {
            return bad("power_scale must be nonnegative");
        }
        match self.decoder {
            DecoderSpec::Angle { gamma: Some(g) } if !(0.0..=1.0).contains(&g) => {
                return bad(format!("gamma {g} outside [0, 1]"));
            }
            DecoderSpec::Angle { gamma: None } if (self.gamma_trials as f64) * self.epsilon < 10.0 => {
                return bad("gamma_trials too small for the threshold quantile");
            }
            DecoderSpec::Angle { .. } if self.power_scale == 0.0 => {
                return bad("angle decoding needs a positive power_scale");
            }
            _ => {}
        }
        self.model_b.build(self.dims.na, self.dims.nb)?;
        self.model_w.build(self.dims.na, self.dims.nw)?;
        Ok(())
    }
}

/// Parsed config with the SHA-256 of its source text.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse<T: Experiment>(text: &str) -> Result<Loaded<T>> {
    let config: T = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(Loaded { config, sha256: sha256_hex(text.as_bytes()) })
}

pub fn load<T: Experiment>(path: &Path) -> Result<Loaded<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = r#"{
        "seed": 1, "trials": 10, "n": 200, "epsilon": 0.01, "delta": 0.1, "lambda0": 1.0,
        "dims": {"na": 2, "nb": 2, "nw": 2}, "messages": 8,
        "model_b": {"kind": "rician", "k": 10}, "model_w": {"kind": "rayleigh"},
        "decoder": {"kind": "angle", "gamma": null}, "detection_trials": 1000
    }"#;

    #[test]
    fn parses_and_hashes() {
        let l: Loaded<SimulateConfig> = parse(SIM).unwrap();
        assert_eq!(l.config.workers, 1);
        assert_eq!(l.config.power_scale, 1.0);
        assert_eq!(l.config.decoder, DecoderSpec::Angle { gamma: None });
        assert_eq!(l.sha256.len(), 64);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn rejects_unknown_keys_everywhere() {
        let top = SIM.replacen("\"seed\": 1", "\"seed\": 1, \"sed\": 2", 1);
        assert!(matches!(parse::<SimulateConfig>(&top), Err(Error::Config(_))));
        let nested = SIM.replacen("\"k\": 10", "\"k\": 10, \"kk\": 1", 1);
        assert!(matches!(parse::<SimulateConfig>(&nested), Err(Error::Config(_))));
        let dims = SIM.replacen("\"nw\": 2", "\"nw\": 2, \"nx\": 2", 1);
        assert!(matches!(parse::<SimulateConfig>(&dims), Err(Error::Config(_))));
        let decoder = SIM.replacen("\"gamma\": null", "\"gamma\": null, \"g\": 0", 1);
        assert!(matches!(parse::<SimulateConfig>(&decoder), Err(Error::Config(_))));
    }

    #[test]
    fn validation_failures_are_config_errors() {
        let short = SIM.replacen("\"n\": 200", "\"n\": 4", 1);
        assert!(matches!(parse::<SimulateConfig>(&short), Err(Error::Config(_))));
        let bounds = r#"{"seed": 1, "trials": 1000, "epsilon": 0.01, "delta": 0.1, "lambda0": 1.0,
            "antennas": 2, "model": {"kind": "rayleigh"}, "n": []}"#;
        let err = parse::<BoundsConfig>(bounds).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
        let fig2 = r#"{"seed": 1, "trials": 1000, "tail": 1e-6, "ecdf_points": 10, "rows": 2, "cols": 2,
            "models": [{"name": "r", "model": {"kind": "rayleigh"}}]}"#;
        assert!(matches!(parse::<Fig2Config>(fig2), Err(Error::Config(_))));
    }

    #[test]
    fn model_specs_build() {
        let ones = ModelSpec::Rician { k: 10.0, los: LosSpec::Ones }.build(2, 3).unwrap();
        assert_eq!(ones.dims(), (2, 3));
        let fixed = ModelSpec::Fixed { h: MatrixJson { re: vec![vec![1.0, 0.0]], im: None } };
        assert!(fixed.build(1, 2).is_ok());
        assert!(matches!(fixed.build(2, 2), Err(Error::Config(_))));
        let ragged = MatrixJson { re: vec![vec![1.0, 0.0], vec![1.0]], im: None };
        assert!(ragged.to_matrix().is_err());
        let spec: ModelSpec = serde_json::from_str(r#"{"kind": "rician", "k": 3, "los": {"dense": {"re": [[1, 2]]}}}"#).unwrap();
        assert!(spec.build(1, 2).is_ok());
    }
}
