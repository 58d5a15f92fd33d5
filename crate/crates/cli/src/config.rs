//! Strict JSON configs, one per command. Missing keys take defaults, unknown
//! keys are rejected.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use svnet::net_builder::Model;
use svnet::pricing::PayoffSpec;
use svnet::rough_vol::{RBergomiTheta, VarianceSource};
use svnet::sv_sim::{CchTheta, DomainBox, Policy, TEST_MODEL_CORR};

use crate::trainer::{Arch, TrainSettings};
use crate::CliError;

/// First 16 hex digits of the SHA-256 of `canonical`.
pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A parsed config with its canonical JSON (defaults filled in) and hash.
#[derive(Clone, Debug)]
pub struct Parsed<T> {
    pub config: T,
    pub canonical: String,
    pub hash: String,
}

pub fn parse<T: DeserializeOwned + Serialize>(text: &str) -> Result<Parsed<T>, CliError> {
    let config: T = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let canonical = serde_json::to_string(&config).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = config_hash(&canonical);
    Ok(Parsed { config, canonical, hash })
}

fn rbergomi_default() -> RBergomiTheta {
    RBergomiTheta {
        nu: 0.04,
        eta: 1.5,
        rho: -0.7,
        hurst: 0.1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeHybridConfig {
    pub seed: u64,
    pub horizon: f64,
    pub hurst: Vec<f64>,
    pub steps: Vec<usize>,
    pub samples: usize,
}

impl Default for ConvergeHybridConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: 1.0,
            hurst: vec![0.05, 0.1, 0.25, 0.4],
            steps: vec![4, 16, 64, 256, 1024],
            samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeEmConfig {
    pub seed: u64,
    pub x0: f64,
    pub v0: f64,
    pub horizon: f64,
    /// Correlation of the two drivers of the test model.
    pub corr: f64,
    pub steps: Vec<usize>,
    pub n_ref: usize,
    pub paths: usize,
    pub slope_range: (f64, f64),
}

impl Default for ConvergeEmConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            x0: 1.0,
            v0: 0.5,
            horizon: 1.0,
            corr: TEST_MODEL_CORR,
            steps: vec![16, 32, 64, 128, 256, 512],
            n_ref: 8192,
            paths: 20_000,
            slope_range: (0.8, 1.2),
        }
    }
}

/// Scalar per-asset CCH parameters, repeated over assets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetParams {
    pub a: f64,
    pub b: f64,
    pub nu: f64,
    pub rho_x: f64,
    pub rho_v: f64,
}

impl AssetParams {
    pub fn theta(&self, d: usize) -> CchTheta {
        CchTheta::uniform(d, self.a, self.b, self.nu, self.rho_x, self.rho_v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealizeCheckConfig {
    pub seed: u64,
    pub model: Model,
    pub seeds: usize,
    /// Asset counts; CCH only.
    pub dims: Vec<usize>,
    pub steps: Vec<usize>,
    pub copies: Vec<usize>,
    pub horizon: f64,
    pub eps: f64,
    pub eps_bar: f64,
    pub x0: f64,
    pub v0: f64,
    pub strikes: Vec<f64>,
    pub cch: AssetParams,
    pub rbergomi: RBergomiTheta,
    /// Truncation level `D` and driver clamp `R`; rough Bergomi only.
    pub trunc: f64,
    pub r_clamp: Option<f64>,
    pub tolerance: f64,
    /// Scales every last-layer weight of each pricing network by `1 + δ`
    /// before the comparison.
    pub perturb: Option<f64>,
}

impl Default for RealizeCheckConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model: Model::Cch,
            seeds: 20,
            dims: vec![1, 3],
            steps: vec![4, 16],
            copies: vec![1, 8],
            horizon: 1.0,
            eps: 0.1,
            eps_bar: 0.1,
            x0: 100.0,
            v0: 0.04,
            strikes: vec![60.0, 100.0, 140.0],
            cch: AssetParams {
                a: 1.5,
                b: 0.05,
                nu: 0.3,
                rho_x: 0.2,
                rho_v: -0.5,
            },
            rbergomi: rbergomi_default(),
            trunc: 2.0,
            r_clamp: Some(3.0),
            tolerance: 1e-9,
            perturb: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizeSweepConfig {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub eps_bars: Vec<f64>,
    /// `M` values of the affine-in-`M` check.
    pub copies: Vec<usize>,
    /// `M` used by the dimension and accuracy sweeps.
    pub sweep_copies: usize,
    /// `ε` used by the dimension and `M` sweeps.
    pub dim_eps: f64,
    pub steps: usize,
    pub horizon: f64,
    pub trunc: f64,
    pub r_clamp: Option<f64>,
}

impl Default for SizeSweepConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dims: vec![1, 2, 4, 8],
            eps_bars: vec![0.2, 0.1, 0.05],
            copies: vec![1, 2, 4, 8],
            sweep_copies: 2,
            dim_eps: 0.1,
            steps: 4,
            horizon: 1.0,
            trunc: 5.0,
            r_clamp: Some(3.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub d: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Monte Carlo paths per training label.
    pub label_paths: usize,
    /// Monte Carlo paths per test label; more paths lower the noise floor.
    pub test_label_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub archs: Vec<Arch>,
    pub optimizer: TrainSettings,
    pub gradcheck_pairs: usize,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
    /// Required relative drop of the above-floor test RMSE from the first
    /// to the last architecture.
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            d: 1,
            train_samples: 16_000,
            test_samples: 500,
            label_paths: 2000,
            test_label_paths: 20_000,
            steps: 16,
            horizon: 1.0,
            archs: vec![
                Arch { width: 4, hidden: 1 },
                Arch { width: 8, hidden: 2 },
                Arch { width: 32, hidden: 3 },
                Arch { width: 64, hidden: 4 },
            ],
            optimizer: TrainSettings {
                epochs: 100,
                ..TrainSettings::default()
            },
            gradcheck_pairs: 100,
            gradcheck_step: 1e-5,
            gradcheck_tolerance: 1e-6,
            min_improvement: 0.3,
        }
    }
}

/// Model block of the pricing commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Cch {
        theta: CchTheta,
        x0: Vec<f64>,
        v0: Vec<f64>,
        policy: Policy,
    },
    RBergomi {
        theta: RBergomiTheta,
        trunc: f64,
        x0: f64,
        source: VarianceSource,
        r_clamp: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub payoff: PayoffSpec,
    pub strikes: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    /// Compare with the characteristic-function price (one-asset CCH only).
    pub oracle: bool,
    /// Largest standard error accepted.
    pub max_se: Option<f64>,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model: ModelConfig::Cch {
                theta: CchTheta::uniform(1, 2.0, 0.04, 0.3, 0.0, -0.7),
                x0: vec![100.0],
                v0: vec![0.04],
                policy: Policy::FullTruncation,
            },
            payoff: PayoffSpec::Call,
            strikes: vec![100.0],
            horizon: 1.0,
            steps: 256,
            paths: 100_000,
            oracle: true,
            max_se: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSweepConfig {
    pub seed: u64,
    pub theta: RBergomiTheta,
    pub truncs: Vec<f64>,
    pub x0: f64,
    pub strike: f64,
    pub cap: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub source: VarianceSource,
}

impl Default for TruncationSweepConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            theta: rbergomi_default(),
            truncs: vec![2.0, 5.0, 20.0, 100.0],
            x0: 100.0,
            strike: 100.0,
            cap: 50.0,
            horizon: 1.0,
            steps: 64,
            paths: 20_000,
            source: VarianceSource::Hybrid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppedSweepConfig {
    pub seed: u64,
    pub theta: CchTheta,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub payoff: PayoffSpec,
    pub strike: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub base: DomainBox,
    pub scales: Vec<f64>,
}

impl Default for StoppedSweepConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            theta: CchTheta::uniform(1, 2.0, 0.04, 0.2, 0.0, -0.7),
            x0: vec![100.0],
            v0: vec![0.04],
            payoff: PayoffSpec::Call,
            strike: 100.0,
            horizon: 1.0,
            steps: 64,
            paths: 20_000,
            base: DomainBox {
                x: (90.0, 110.0),
                v: (0.03, 0.05),
            },
            scales: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}
