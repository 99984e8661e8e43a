//! JSON run configuration merged with command-line overrides.

use std::path::{Path, PathBuf};

use refertriage::econ::CaptureScenario;
use refertriage::embed::Provider;
use refertriage::eval::ClassifierChoice;
use refertriage::experiments::CvSettings;
use refertriage::model::{forest_grid, ClassifierSpec, Hyperparameters, ModelKind};
use refertriage::perturb::{NoiseKind, DEFAULT_LEVELS};
use refertriage::rng::derive;
use refertriage::synthetic::CorpusShape;
use refertriage::{BootstrapSpec, ResampleSpec, Schema, Strategy, Variant};
use serde::{Deserialize, Serialize};

use crate::args::{Command, Overrides};
use crate::CliError;

pub const ENDPOINT_ENV: &str = "REFERTRIAGE_EMBED_ENDPOINT";

/// Seed sub-streams; fixed so reports stay comparable across versions.
const FOLD_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 2;
const RESAMPLE_STREAM: u64 = 3;
const BOOTSTRAP_STREAM: u64 = 4;
const NOISE_STREAM: u64 = 5;

/// Config file contents; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub schema: Option<Schema>,
    pub embedding: Option<Provider>,
    pub variant: Option<Variant>,
    pub k_folds: Option<usize>,
    pub balance: Option<Vec<Strategy>>,
    pub k_neighbors: Option<usize>,
    pub balance_target: Option<f64>,
    pub model: Option<Vec<ModelKind>>,
    pub hyperparameters: Option<Hyperparameters>,
    pub grid: Option<bool>,
    pub inner_folds: Option<usize>,
    pub bootstrap_resamples: Option<usize>,
    pub bootstrap_alpha: Option<f64>,
    pub noise_kind: Option<Vec<NoiseKind>>,
    pub noise_level: Option<Vec<f64>>,
    pub threshold_grid_step: Option<f64>,
    pub coordinates: Option<PathBuf>,
    pub scenario: Option<CaptureScenario>,
    /// Observed `(capture, effective_rate)` rows; when present the model
    /// rate is fitted to them instead of taken from the scenario.
    pub model_rate_from: Option<Vec<(f64, f64)>>,
    pub n_baseline: Option<u64>,
    pub n_model: Option<u64>,
    pub synth: Option<CorpusShape>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseConfig {
    pub kinds: Vec<NoiseKind>,
    pub levels: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTest {
    pub n_baseline: u64,
    pub n_model: u64,
}

/// Fully resolved settings, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub schema: Schema,
    pub embedding: Provider,
    pub variant: Variant,
    pub cv: CvSettings,
    /// Strategies for balance-compare.
    pub balance_strategies: Vec<Strategy>,
    /// Families for model-compare.
    pub models: Vec<ModelKind>,
    pub model_seed: u64,
    pub noise: NoiseConfig,
    pub threshold_grid_step: f64,
    pub coordinates: Option<PathBuf>,
    pub scenario: CaptureScenario,
    pub model_rate_from: Option<Vec<(f64, f64)>>,
    pub rate_test: Option<RateTest>,
    pub synth: CorpusShape,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Exactly one value from a flag that accepts lists.
fn single<T: Copy>(values: &[T], flag: &str, command: Command) -> Result<T, CliError> {
    match values {
        [v] => Ok(*v),
        _ => Err(usage(format!(
            "{} takes a single --{flag} value",
            command.name()
        ))),
    }
}

impl RunConfig {
    pub fn resolve(
        command: Command,
        o: &Overrides,
        endpoint: Option<String>,
    ) -> Result<Self, CliError> {
        let f = match &o.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let seed = o
            .seed
            .or(f.seed)
            .ok_or_else(|| usage("a seed is required (--seed or `seed` in the config)"))?;
        let out = o
            .out
            .clone()
            .or(f.out)
            .ok_or_else(|| usage("an output directory is required (--out or `out`)"))?;
        let data = o.data.clone().or(f.data);
        let dictionary = o.dictionary.clone().or(f.dictionary);
        let variant = o.variant.or(f.variant).unwrap_or(Variant::Base);

        let embedding = match (&o.embeddings, endpoint, f.embedding) {
            (Some(path), _, _) => Provider::File { path: path.clone() },
            (None, _, Some(p @ Provider::File { .. })) => p,
            (None, Some(url), p) => Provider::Remote(match p {
                Some(Provider::Remote(cfg)) => refertriage::embed::RemoteConfig {
                    endpoint: url,
                    ..cfg
                },
                _ => refertriage::embed::RemoteConfig::new(url),
            }),
            (None, None, Some(p)) => p,
            (None, None, None) => Provider::default(),
        };

        let model_seed = derive(seed, &[MODEL_STREAM]);
        let strategies = o
            .balance
            .clone()
            .or(f.balance)
            .unwrap_or_else(|| match command {
                Command::BalanceCompare => vec![
                    Strategy::None,
                    Strategy::Smote,
                    Strategy::Adasyn,
                    Strategy::Undersample,
                ],
                _ => vec![Strategy::Smote],
            });
        let models = o
            .model
            .clone()
            .or(f.model)
            .unwrap_or_else(|| match command {
                Command::ModelCompare => ModelKind::ALL.to_vec(),
                _ => vec![ModelKind::RandomForest],
            });
        let compare_balance = command == Command::BalanceCompare;
        let compare_models = command == Command::ModelCompare;
        let strategy = if compare_balance {
            strategies[0]
        } else {
            single(&strategies, "balance", command)?
        };
        let kind = if compare_models {
            models[0]
        } else {
            single(&models, "model", command)?
        };

        let resample = ResampleSpec {
            strategy,
            k_neighbors: f.k_neighbors.unwrap_or(5),
            target: f.balance_target.unwrap_or(1.0),
            seed: derive(seed, &[RESAMPLE_STREAM]),
        };
        resample.validate().map_err(|e| usage(e.to_string()))?;

        let grid = o.grid || f.grid.unwrap_or(false);
        let classifier = if grid {
            if kind != ModelKind::RandomForest || compare_models {
                return Err(usage("--grid searches forest hyperparameters only"));
            }
            ClassifierChoice::Grid {
                grid: forest_grid(model_seed),
                inner_folds: f.inner_folds.unwrap_or(3),
            }
        } else {
            let hp = match f.hyperparameters {
                Some(h) if h.kind() == kind => h,
                Some(h) => {
                    return Err(usage(format!(
                        "hyperparameters are for {} but the model is {kind}",
                        h.kind()
                    )))
                }
                None => Hyperparameters::defaults(kind),
            };
            let spec = ClassifierSpec::new(hp, model_seed);
            spec.validate().map_err(|e| usage(e.to_string()))?;
            ClassifierChoice::Fixed { spec }
        };

        let k_folds = o.k_folds.or(f.k_folds).unwrap_or(5);
        if k_folds < 2 {
            return Err(usage("--k-folds must be at least 2"));
        }
        let bootstrap = BootstrapSpec {
            n_resamples: f.bootstrap_resamples.unwrap_or(1000),
            alpha: f.bootstrap_alpha.unwrap_or(0.05),
            seed: derive(seed, &[BOOTSTRAP_STREAM]),
        };
        if bootstrap.n_resamples == 0 || !(bootstrap.alpha > 0.0 && bootstrap.alpha < 1.0) {
            return Err(usage("bootstrap needs resamples >= 1 and alpha in (0, 1)"));
        }

        let default_levels = match command {
            Command::NoiseSweep => DEFAULT_LEVELS.to_vec(),
            _ => vec![0.0],
        };
        let noise = NoiseConfig {
            kinds: o
                .noise_kind
                .clone()
                .or(f.noise_kind)
                .unwrap_or_else(|| match command {
                    Command::NoiseSweep => NoiseKind::ALL.to_vec(),
                    _ => vec![NoiseKind::CharSub],
                }),
            levels: o
                .noise_level
                .clone()
                .or(f.noise_level)
                .unwrap_or(default_levels),
            seed: derive(seed, &[NOISE_STREAM]),
        };
        if let Some(l) = noise.levels.iter().find(|l| !(0.0..=0.5).contains(*l)) {
            return Err(usage(format!("noise level {l} outside [0, 0.5]")));
        }
        if command != Command::NoiseSweep && (noise.kinds.len() != 1 || noise.levels.len() != 1) {
            return Err(usage(format!(
                "{} takes a single --noise-kind and --noise-level",
                command.name()
            )));
        }

        let threshold_grid_step = o
            .threshold_grid_step
            .or(f.threshold_grid_step)
            .unwrap_or(0.01);
        refertriage::eval::threshold_grid(threshold_grid_step).map_err(|e| usage(e.to_string()))?;

        let rate_test = match (o.n_baseline.or(f.n_baseline), o.n_model.or(f.n_model)) {
            (Some(n_baseline), Some(n_model)) => Some(RateTest {
                n_baseline,
                n_model,
            }),
            (None, None) => None,
            _ => {
                return Err(usage(
                    "the rate comparison needs both --n-baseline and --n-model",
                ))
            }
        };

        Ok(RunConfig {
            seed,
            out,
            data,
            dictionary,
            schema: f.schema.unwrap_or_default(),
            embedding,
            variant,
            cv: CvSettings {
                k_folds,
                fold_seed: derive(seed, &[FOLD_STREAM]),
                classifier,
                resample,
                bootstrap,
            },
            balance_strategies: strategies,
            models,
            model_seed,
            noise,
            threshold_grid_step,
            coordinates: o.coordinates.clone().or(f.coordinates),
            scenario: f.scenario.unwrap_or_default(),
            model_rate_from: f.model_rate_from,
            rate_test,
            synth: f.synth.unwrap_or_default(),
        })
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| usage("a referral dataset is required (--data or `data`)"))
    }
}
