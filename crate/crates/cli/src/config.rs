//! Experiment configuration: one TOML file with a section per subcommand.
//! Every key has a default, so an empty file is valid for the subcommands
//! that do not need a seed.

use std::path::Path;

use levy_transport::continuum_limit::Profile;
use levy_transport::exact_solver::{ConvolutionRule, InitialData};
use levy_transport::CumulantSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub format: Format,
    pub driver: CumulantSpec,
    pub simulate: SimulateConfig,
    pub stationary: StationaryConfig,
    pub flights: FlightsConfig,
    pub continuum: ContinuumConfig,
    pub bessel: BesselConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            threads: 0,
            format: Format::Csv,
            driver: CumulantSpec::gaussian(1.0),
            simulate: SimulateConfig::default(),
            stationary: StationaryConfig::default(),
            flights: FlightsConfig::default(),
            continuum: ContinuumConfig::default(),
            bessel: BesselConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub nu: f64,
    /// Shells `N` of the Euler scheme.
    pub shells: usize,
    /// Shells written to the output, at most `shells`.
    pub report_shells: usize,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    pub init: InitialData,
    pub rule: ConvolutionRule,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            nu: 0.0,
            shells: 64,
            report_shells: 8,
            horizon: 10.0,
            dt: 1e-3,
            record_every: 100,
            init: InitialData::Zero,
            rule: ConvolutionRule::LeftPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub nu: f64,
    pub shells: Vec<u32>,
    pub lambdas: Vec<f64>,
    /// Stable indices for an existence sweep (unit scale); empty to skip.
    pub alphas: Vec<f64>,
    /// Monte Carlo replicas; 0 skips sampling.
    pub replicas: usize,
    pub dt: f64,
    /// Pull-back horizon; chosen from the tail bound when absent.
    pub horizon: Option<f64>,
    pub tolerance: f64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            nu: 0.0,
            shells: vec![1, 2, 3, 4, 5],
            lambdas: vec![0.5, 1.0, 2.0],
            alphas: Vec::new(),
            replicas: 10_000,
            dt: 0.05,
            horizon: None,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightsConfig {
    pub alphas: Vec<f64>,
    pub nu: f64,
    pub shell: u32,
    /// Cut-offs `r_base * 2^k`, `k = 0..r_count`.
    pub r_base: f64,
    pub r_count: usize,
}

impl Default for FlightsConfig {
    fn default() -> Self {
        Self { alphas: vec![0.4, 0.5, 0.6, 2.0 / 3.0, 0.8, 1.0, 1.5], nu: 0.0, shell: 1, r_base: 100.0, r_count: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumConfig {
    pub nu: f64,
    pub x: f64,
    pub hs: Vec<f64>,
    pub eps: f64,
    /// Mollifier half-width; `eps / 8` when absent.
    pub mollifier_width: Option<f64>,
    pub phi: Profile,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self { nu: 1.0, x: 2.0, hs: vec![1.0, 0.5, 0.25, 0.125], eps: 0.25, mollifier_width: None, phi: Profile::Zero }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BesselConfig {
    /// Orders `0..=nmax`.
    pub nmax: u32,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for BesselConfig {
    fn default() -> Self {
        Self { nmax: 5, x_min: 0.0, x_max: 20.0, points: 201 }
    }
}

/// A configuration problem, with the 1-based line of the offending key when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parsed configuration together with its source text.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    source: String,
}

impl Loaded {
    pub fn defaults() -> Self {
        Self { config: Config::default(), source: String::new() }
    }

    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(source, s.start)),
            key: None,
            message: e.message().trim().to_string(),
        })?;
        Ok(Self { config, source: source.to_string() })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Error for the dotted key `key`, located in the source when present.
    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: locate(&self.source, key), key: Some(key.to_string()), message: message.into() }
    }

    pub fn check(&self, ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(self.error(key, message()))
        }
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `a.b.c = ...`, found either under a `[a.b]` header or as a dotted
/// or inline key. Falls back to the innermost enclosing table header.
fn locate(source: &str, key: &str) -> Option<usize> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table: Vec<String> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            table = h.trim_matches(['[', ']']).split('.').map(|s| s.trim().to_string()).collect();
            let depth = table.len();
            if depth <= parts.len() && table.iter().zip(&parts).all(|(a, b)| a == b) && best.is_none_or(|b| depth > b.1) {
                best = Some((i + 1, depth));
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let mut full = table.clone();
        full.extend(lhs.trim().split('.').map(|s| s.trim().trim_matches('"').to_string()));
        let depth = full.len();
        if depth <= parts.len() && full.iter().zip(&parts).all(|(a, b)| a == b) && best.is_none_or(|b| depth > b.1) {
            best = Some((i + 1, depth));
        }
    }
    best.map(|b| b.0)
}

/// SHA-256 of the canonical JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_vec(value).expect("config serialises");
    hex::encode(Sha256::digest(&canonical))
}

pub fn defaults_toml() -> String {
    let header = format!(
        "# levy-transport {} configuration; every key is optional.\n\
         # Unset by default: seed (required by simulate and by stationary when replicas > 0),\n\
         # stationary.horizon (chosen from the tail bound), continuum.mollifier_width (eps / 8).\n\n",
        env!("CARGO_PKG_VERSION")
    );
    format!("{header}{}", toml::to_string(&Config::default()).expect("defaults serialise"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = defaults_toml();
        let parsed = Loaded::parse(&text).unwrap();
        assert_eq!(parsed.config, Config::default());
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Loaded::parse("").unwrap().config, Config::default());
    }

    #[test]
    fn driver_keys() {
        let text = "[driver]\nsigma = 0.0\n[driver.jump]\nkind = \"compound-poisson\"\nintensity = 2.0\nlaw = { kind = \"two-point\", size = 0.5 }\n";
        let cfg = Loaded::parse(text).unwrap().config;
        assert_eq!(
            cfg.driver,
            CumulantSpec::compound_poisson(2.0, levy_transport::JumpLaw::TwoPoint { size: 0.5 })
        );
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = Loaded::parse("seed = 1\n[driver]\nsigmaa = 1.0\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = Loaded::parse("[simulate]\n\ndt = \"x\"\n").unwrap_err();
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn keys_are_located() {
        let src = "seed = 3\n[driver]\nsigma = -1\n[driver.jump]\nkind = \"stable\"\nalpha = 3.0\n[stationary]\nnu = 1\n";
        assert_eq!(locate(src, "driver.sigma"), Some(3));
        assert_eq!(locate(src, "driver.jump.alpha"), Some(6));
        assert_eq!(locate(src, "stationary.nu"), Some(8));
        assert_eq!(locate(src, "stationary.dt"), Some(7));
        assert_eq!(locate(src, "seed"), Some(1));
        assert_eq!(locate("driver.sigma = 2\n", "driver.sigma"), Some(1));
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&Config::default());
        assert_eq!(a, config_hash(&Config::default()));
        let mut other = Config::default();
        other.seed = Some(1);
        assert_ne!(a, config_hash(&other));
    }
}
