//! Experiment configuration: a TOML file with one section per concern,
//! validated into a resolved config with every default filled in.

use serde::Deserialize;
use srlfi::nn::{Activation, GeneratorNet, LatentSpec, OutputTransform};
use srlfi::scoring::{
    median_bandwidth, BaseRule, EnergyScoreParams, GridShape, KernelScoreParams, PatchLayout,
    ScoringRule,
};
use srlfi::simulators::Model;
use srlfi::training::{EarlyStopping, GANTrainConfig, SRTrainConfig};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Energy,
    Kernel,
    PatchedEnergy,
    PatchedKernel,
    Gan,
}

impl MethodKind {
    /// Accepts hyphenated or underscored spellings.
    pub fn parse(s: &str) -> Option<MethodKind> {
        match s.replace('-', "_").as_str() {
            "energy" => Some(MethodKind::Energy),
            "kernel" => Some(MethodKind::Kernel),
            "patched_energy" => Some(MethodKind::PatchedEnergy),
            "patched_kernel" => Some(MethodKind::PatchedKernel),
            "gan" => Some(MethodKind::Gan),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Energy => "energy",
            MethodKind::Kernel => "kernel",
            MethodKind::PatchedEnergy => "patched_energy",
            MethodKind::PatchedKernel => "patched_kernel",
            MethodKind::Gan => "gan",
        }
    }

    pub fn is_kernel(&self) -> bool {
        matches!(self, MethodKind::Kernel | MethodKind::PatchedKernel)
    }

    pub fn is_patched(&self) -> bool {
        matches!(self, MethodKind::PatchedEnergy | MethodKind::PatchedKernel)
    }
}

// ---- raw TOML shape ----

fn default_n_test() -> usize {
    200
}
fn default_n_post() -> usize {
    1000
}
fn default_m() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}
fn default_activation() -> String {
    "leaky_relu".into()
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    128
}
fn default_max_epochs() -> usize {
    200
}
fn default_validation_fraction() -> f64 {
    0.1
}
fn default_patience() -> usize {
    10
}
fn default_critic_steps() -> usize {
    1
}
fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    gan: RawGan,
    #[serde(default)]
    kernel: RawKernel,
    patch: Option<RawPatch>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    model: String,
    method: String,
    n_train: usize,
    #[serde(default = "default_n_test")]
    n_test: usize,
    #[serde(default = "default_n_post")]
    n_post: usize,
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    out_dir: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNetwork {
    hidden: Vec<usize>,
    activation: String,
    latent_dim: Option<usize>,
}

impl Default for RawNetwork {
    fn default() -> Self {
        RawNetwork {
            hidden: default_hidden(),
            activation: default_activation(),
            latent_dim: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTraining {
    learning_rate: f64,
    batch_size: usize,
    max_epochs: usize,
    validation_fraction: f64,
    /// 0 disables early stopping.
    patience: usize,
}

impl Default for RawTraining {
    fn default() -> Self {
        RawTraining {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            validation_fraction: default_validation_fraction(),
            patience: default_patience(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGan {
    generator_lr: Option<f64>,
    critic_lr: Option<f64>,
    critic_steps: usize,
    critic_hidden: Option<Vec<usize>>,
}

impl Default for RawGan {
    fn default() -> Self {
        RawGan {
            generator_lr: None,
            critic_lr: None,
            critic_steps: default_critic_steps(),
            critic_hidden: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawKernel {
    gamma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPatch {
    size: usize,
    step: usize,
    rows: Option<usize>,
    cols: Option<usize>,
    #[serde(default = "default_weight")]
    weight_full: f64,
    #[serde(default = "default_weight")]
    weight_patch: f64,
}

// ---- resolved config ----

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSettings {
    pub size: usize,
    pub step: usize,
    pub grid: GridShape,
    pub weight_full: f64,
    pub weight_patch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanSettings {
    pub generator_lr: f64,
    pub critic_lr: f64,
    pub critic_steps: usize,
    pub critic_hidden: Vec<usize>,
}

/// A fully validated experiment description. `raw` keeps the exact config
/// text for hashing and the manifest echo.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: Model,
    pub method: MethodKind,
    pub n_train: usize,
    pub n_test: usize,
    pub n_post: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub patience: Option<usize>,
    pub gan: GanSettings,
    pub kernel_gamma: Option<f64>,
    pub patch: Option<PatchSettings>,
    pub raw: String,
}

fn parse_activation(s: &str) -> Option<Activation> {
    match s {
        "relu" => Some(Activation::Relu),
        "leaky_relu" => Some(Activation::LeakyRelu),
        "tanh" => Some(Activation::Tanh),
        "sigmoid" => Some(Activation::Sigmoid),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let e = &raw.experiment;

        let model = Model::by_name(&e.model).map_err(|_| {
            invalid(
                "experiment.model",
                format!("unknown model '{}' (known: {})", e.model, Model::NAMES.join(", ")),
            )
        })?;
        let method = MethodKind::parse(&e.method).ok_or_else(|| {
            invalid(
                "experiment.method",
                format!(
                    "unknown method '{}' (known: energy, kernel, patched-energy, \
                     patched-kernel, gan)",
                    e.method
                ),
            )
        })?;

        if method.is_kernel() && raw.kernel.gamma.is_none() && e.n_train == 0 {
            return Err(invalid(
                "kernel.gamma",
                "required: no training data is available for the median heuristic",
            ));
        }
        if let Some(g) = raw.kernel.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(invalid("kernel.gamma", format!("must be positive, got {g}")));
            }
        }
        if e.n_train < 2 {
            return Err(invalid("experiment.n_train", "need at least 2 training pairs"));
        }
        if e.n_test < 2 {
            return Err(invalid("experiment.n_test", "need at least 2 test pairs"));
        }
        if e.n_post == 0 {
            return Err(invalid("experiment.n_post", "need at least one posterior draw"));
        }
        if e.m < 2 {
            return Err(invalid("experiment.m", "estimators need at least 2 samples per pair"));
        }
        if e.seeds.is_empty() {
            return Err(invalid("experiment.seeds", "need at least one seed"));
        }

        let activation = parse_activation(&raw.network.activation).ok_or_else(|| {
            invalid(
                "network.activation",
                format!(
                    "unknown activation '{}' (known: relu, leaky_relu, tanh, sigmoid)",
                    raw.network.activation
                ),
            )
        })?;
        if raw.network.hidden.is_empty() {
            return Err(invalid("network.hidden", "need at least one hidden layer"));
        }
        if raw.network.latent_dim == Some(0) {
            return Err(invalid("network.latent_dim", "must be at least 1"));
        }

        let t = &raw.training;
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return Err(invalid("training.learning_rate", "must be finite and non-negative"));
        }
        if t.batch_size == 0 {
            return Err(invalid("training.batch_size", "must be positive"));
        }
        if t.max_epochs == 0 {
            return Err(invalid("training.max_epochs", "must be positive"));
        }
        if !(0.0..1.0).contains(&t.validation_fraction) {
            return Err(invalid("training.validation_fraction", "must lie in [0, 1)"));
        }
        if t.patience > 0 && t.validation_fraction == 0.0 {
            return Err(invalid(
                "training.validation_fraction",
                "early stopping needs a validation split; set patience = 0 to disable",
            ));
        }
        if raw.gan.critic_steps == 0 {
            return Err(invalid("gan.critic_steps", "must be at least 1"));
        }

        let p = model.parameter_dim();
        let patch = match (&raw.patch, method.is_patched()) {
            (None, true) => {
                return Err(invalid("patch", "section required for patched methods"));
            }
            (Some(_), false) => {
                return Err(invalid("patch", "section only applies to patched methods"));
            }
            (Some(pc), true) => {
                let grid = match (pc.rows, pc.cols) {
                    (None, None) => GridShape::Line(p),
                    (Some(r), Some(c)) => GridShape::Plane { rows: r, cols: c },
                    _ => {
                        return Err(invalid(
                            "patch.rows",
                            "rows and cols must be given together",
                        ));
                    }
                };
                if grid.len() != p {
                    return Err(invalid(
                        "patch",
                        format!("grid covers {} cells but the parameter has {p}", grid.len()),
                    ));
                }
                let layout = PatchLayout {
                    grid,
                    patch_size: pc.size,
                    patch_step: pc.step,
                    w_full: pc.weight_full,
                    w_patch: pc.weight_patch,
                };
                layout
                    .validate()
                    .map_err(|err| invalid("patch", err.to_string()))?;
                Some(PatchSettings {
                    size: pc.size,
                    step: pc.step,
                    grid,
                    weight_full: pc.weight_full,
                    weight_patch: pc.weight_patch,
                })
            }
            (None, false) => None,
        };

        Ok(ExperimentConfig {
            latent_dim: raw.network.latent_dim.unwrap_or(p),
            model,
            method,
            n_train: e.n_train,
            n_test: e.n_test,
            n_post: e.n_post,
            m: e.m,
            seeds: e.seeds.clone(),
            out_dir: PathBuf::from(&e.out_dir),
            hidden: raw.network.hidden.clone(),
            activation,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            validation_fraction: t.validation_fraction,
            patience: (t.patience > 0).then_some(t.patience),
            gan: GanSettings {
                generator_lr: raw.gan.generator_lr.unwrap_or(t.learning_rate),
                critic_lr: raw.gan.critic_lr.unwrap_or(t.learning_rate),
                critic_steps: raw.gan.critic_steps,
                critic_hidden: raw.gan.critic_hidden.unwrap_or_else(|| raw.network.hidden.clone()),
            },
            kernel_gamma: raw.kernel.gamma,
            patch,
            raw: text.to_string(),
        })
    }

    /// The scoring rule for this method. Kernel methods without an explicit
    /// bandwidth estimate it from the given parameter rows (median
    /// heuristic over the first training batch).
    pub fn scoring_rule(&self, theta_rows: &[Vec<f64>]) -> Result<ScoringRule, ConfigError> {
        let kernel_params = |cfg: &Self| -> Result<KernelScoreParams, ConfigError> {
            let gamma = match cfg.kernel_gamma {
                Some(g) => g,
                None => {
                    let take = cfg.batch_size.min(theta_rows.len());
                    median_bandwidth(&theta_rows[..take]).map_err(|err| {
                        invalid("kernel.gamma", format!("median heuristic failed: {err}"))
                    })?
                }
            };
            Ok(KernelScoreParams { gamma })
        };
        let rule = match self.method {
            MethodKind::Energy => ScoringRule::Energy(EnergyScoreParams::default()),
            MethodKind::Kernel => ScoringRule::Kernel(kernel_params(self)?),
            MethodKind::PatchedEnergy => ScoringRule::Patched {
                base: BaseRule::Energy(EnergyScoreParams::default()),
                layout: self.patch_layout().expect("validated patched config"),
            },
            MethodKind::PatchedKernel => ScoringRule::Patched {
                base: BaseRule::Kernel(kernel_params(self)?),
                layout: self.patch_layout().expect("validated patched config"),
            },
            MethodKind::Gan => {
                return Err(invalid("experiment.method", "the gan method has no scoring rule"));
            }
        };
        Ok(rule)
    }

    fn patch_layout(&self) -> Option<PatchLayout> {
        self.patch.as_ref().map(|p| PatchLayout {
            grid: p.grid,
            patch_size: p.size,
            patch_step: p.step,
            w_full: p.weight_full,
            w_patch: p.weight_patch,
        })
    }

    pub fn sr_train_config(&self, rule: ScoringRule, seed: u64) -> SRTrainConfig {
        SRTrainConfig {
            rule,
            m: self.m,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            validation_fraction: self.validation_fraction,
            early_stopping: self.patience.map(|patience| EarlyStopping { patience }),
            seed,
        }
    }

    pub fn gan_train_config(&self, seed: u64) -> GANTrainConfig {
        GANTrainConfig {
            generator_lr: self.gan.generator_lr,
            critic_lr: self.gan.critic_lr,
            critic_steps: self.gan.critic_steps,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            validation_fraction: self.validation_fraction,
            early_stopping: self.patience.map(|patience| EarlyStopping { patience }),
            seed,
        }
    }

    /// Output transform matching the model's parameter support: bounded
    /// priors get a sigmoid box, unbounded ones the identity.
    pub fn output_transform(&self) -> OutputTransform {
        match self.model.parameter_bounds() {
            Some((lo, hi)) => OutputTransform::SigmoidBox { lo, hi },
            None => OutputTransform::Identity,
        }
    }

    pub fn build_generator(&self, init_seed: u64) -> Result<GeneratorNet, ConfigError> {
        GeneratorNet::init(
            LatentSpec::standard_normal(self.latent_dim),
            self.model.data_dim(),
            &self.hidden,
            self.activation,
            self.model.parameter_dim(),
            self.output_transform(),
            init_seed,
        )
        .map_err(|err| invalid("network", err.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[experiment]
model = "conjugate_gaussian"
method = "energy"
n_train = 100
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.method, MethodKind::Energy);
        assert_eq!(cfg.n_test, 200);
        assert_eq!(cfg.n_post, 1000);
        assert_eq!(cfg.m, 10);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.hidden, vec![128, 128, 128]);
        assert_eq!(cfg.activation, Activation::LeakyRelu);
        assert_eq!(cfg.latent_dim, 1);
        assert_eq!(cfg.patience, Some(10));
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert!(cfg.kernel_gamma.is_none());
        assert!(cfg.patch.is_none());
    }

    #[test]
    fn method_spellings_normalize() {
        assert_eq!(MethodKind::parse("patched-energy"), Some(MethodKind::PatchedEnergy));
        assert_eq!(MethodKind::parse("patched_energy"), Some(MethodKind::PatchedEnergy));
        assert_eq!(MethodKind::parse("GAN".to_lowercase().as_str()), Some(MethodKind::Gan));
        assert_eq!(MethodKind::parse("nope"), None);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("n_train = 100", "n_train = 100\nn_trian = 5");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("n_trian"), "{err}");
    }

    #[test]
    fn validation_errors_carry_field_paths() {
        let bad_method = MINIMAL.replace("\"energy\"", "\"boosting\"");
        let err = ExperimentConfig::from_toml(&bad_method).unwrap_err();
        assert!(err.to_string().starts_with("experiment.method"), "{err}");

        let bad_model = MINIMAL.replace("\"conjugate_gaussian\"", "\"mystery\"");
        let err = ExperimentConfig::from_toml(&bad_model).unwrap_err();
        assert!(err.to_string().starts_with("experiment.model"), "{err}");

        let bad_act = format!("{MINIMAL}\n[network]\nactivation = \"softplus\"\n");
        let err = ExperimentConfig::from_toml(&bad_act).unwrap_err();
        assert!(err.to_string().starts_with("network.activation"), "{err}");
    }

    #[test]
    fn kernel_without_gamma_and_without_data_is_rejected() {
        let text = MINIMAL
            .replace("\"energy\"", "\"kernel\"")
            .replace("n_train = 100", "n_train = 0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().starts_with("kernel.gamma"), "{err}");
    }

    #[test]
    fn kernel_gamma_resolution() {
        let with_gamma = format!(
            "{}\n[kernel]\ngamma = 2.5\n",
            MINIMAL.replace("\"energy\"", "\"kernel\"")
        );
        let cfg = ExperimentConfig::from_toml(&with_gamma).unwrap();
        match cfg.scoring_rule(&[]).unwrap() {
            ScoringRule::Kernel(KernelScoreParams { gamma }) => assert_eq!(gamma, 2.5),
            other => panic!("wrong rule {other:?}"),
        }

        let without = MINIMAL.replace("\"energy\"", "\"kernel\"");
        let cfg = ExperimentConfig::from_toml(&without).unwrap();
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        match cfg.scoring_rule(&rows).unwrap() {
            ScoringRule::Kernel(KernelScoreParams { gamma }) => assert!(gamma > 0.0),
            other => panic!("wrong rule {other:?}"),
        }
    }

    #[test]
    fn patched_methods_require_a_fitting_patch_section() {
        let no_patch = MINIMAL
            .replace("\"energy\"", "\"patched-energy\"")
            .replace("\"conjugate_gaussian\"", "\"grid_toy\"");
        let err = ExperimentConfig::from_toml(&no_patch).unwrap_err();
        assert!(err.to_string().starts_with("patch"), "{err}");

        let good = format!("{no_patch}\n[patch]\nsize = 10\nstep = 5\n");
        let cfg = ExperimentConfig::from_toml(&good).unwrap();
        let patch = cfg.patch.as_ref().unwrap();
        assert_eq!(patch.grid, GridShape::Line(40));
        match cfg.scoring_rule(&[]).unwrap() {
            ScoringRule::Patched { layout, .. } => assert_eq!(layout.patch_count(), 7),
            other => panic!("wrong rule {other:?}"),
        }

        let too_big = format!("{no_patch}\n[patch]\nsize = 50\nstep = 5\n");
        let err = ExperimentConfig::from_toml(&too_big).unwrap_err();
        assert!(err.to_string().starts_with("patch"), "{err}");

        let stray = format!("{MINIMAL}\n[patch]\nsize = 2\nstep = 1\n");
        let err = ExperimentConfig::from_toml(&stray).unwrap_err();
        assert!(err.to_string().starts_with("patch"), "{err}");
    }

    #[test]
    fn bounded_models_get_a_sigmoid_box_transform() {
        let tm = MINIMAL.replace("\"conjugate_gaussian\"", "\"two_moons\"");
        let cfg = ExperimentConfig::from_toml(&tm).unwrap();
        match cfg.output_transform() {
            OutputTransform::SigmoidBox { lo, hi } => {
                assert_eq!(lo, vec![-1.0, -1.0]);
                assert_eq!(hi, vec![1.0, 1.0]);
            }
            other => panic!("wrong transform {other:?}"),
        }
        let cg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cg.output_transform(), OutputTransform::Identity);
        let gen = cfg.build_generator(7).unwrap();
        assert_eq!(gen.parameter_dim(), 2);
        assert_eq!(gen.data_dim, 2);
    }

    #[test]
    fn gan_settings_inherit_the_training_rate() {
        let text = format!(
            "{}\n[training]\nlearning_rate = 5e-4\n[gan]\ncritic_steps = 3\n",
            MINIMAL.replace("\"energy\"", "\"gan\"")
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.gan.generator_lr, 5e-4);
        assert_eq!(cfg.gan.critic_lr, 5e-4);
        assert_eq!(cfg.gan.critic_steps, 3);
        assert_eq!(cfg.gan.critic_hidden, cfg.hidden);
        let gcfg = cfg.gan_train_config(9);
        assert_eq!(gcfg.seed, 9);
        assert_eq!(gcfg.critic_steps, 3);
    }
}
