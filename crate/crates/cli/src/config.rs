//! The run configuration: one TOML document, validated before any work.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use spikeconv::encode::LatencyParams;
use spikeconv::heads::{Cost, FcnParams, RatioMode, RstdpRates, WarmStart};
use spikeconv::layer::{ConvKernel, ConvLayer, InhibitionConfig, WeightInit};
use spikeconv::network::FeatureMode;
use spikeconv::rng::{self, streams};
use spikeconv::train::{ForgetPlan, NoiseDemoConfig, RstdpRunConfig, StopRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub encode: EncodeConfig,
    pub layers: Vec<LayerConfig>,
    pub monitor: MonitorConfig,
    pub features: FeaturesConfig,
    pub head: HeadConfig,
    pub rstdp: RstdpConfig,
    pub demo: DemoConfig,
    pub forget: ForgetConfig,
    pub reconstruct: ReconstructConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2,
            data: DataConfig::default(),
            encode: EncodeConfig::default(),
            layers: vec![LayerConfig::default()],
            monitor: MonitorConfig::default(),
            features: FeaturesConfig::default(),
            head: HeadConfig::default(),
            rstdp: RstdpConfig::default(),
            demo: DemoConfig::default(),
            forget: ForgetConfig::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// IDX files named as in the MNIST distribution.
    Mnist,
    /// N-MNIST recordings laid out as `Train/<digit>/*.bin` and `Test/<digit>/*.bin`.
    Nmnist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub format: DataFormat,
    pub dir: PathBuf,
    /// Training images loaded, from the start of the split; 0 loads all.
    pub train_limit: usize,
    /// Test images loaded; 0 loads all.
    pub test_limit: usize,
    /// Leading training images the convolution layers learn from.
    pub stdp_images: usize,
    /// Classes STDP sees; empty means all.
    pub stdp_classes: Vec<u8>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: DataFormat::Mnist,
            dir: PathBuf::from("data/mnist"),
            train_limit: 10_000,
            test_limit: 2_000,
            stdp_images: 2_000,
            stdp_classes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeConfig {
    /// DoG response an input neuron must exceed to spike.
    pub threshold: f64,
    pub bins: usize,
    pub silent_bins: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            threshold: 15.0,
            bins: 10,
            silent_bins: 2,
        }
    }
}

impl EncodeConfig {
    pub fn latency(&self) -> LatencyParams {
        LatencyParams {
            threshold: self.threshold,
            n_bins: self.bins,
            silent_bins: self.silent_bins,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    Fixed,
    ConvergenceBand,
    WeightDeltaJump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerConfig {
    pub maps: usize,
    pub kernel: usize,
    pub threshold: f64,
    pub radius: usize,
    pub lateral_inhibition: bool,
    pub competition: bool,
    pub pool_lateral_inhibition: bool,
    pub init_mean: f64,
    pub init_std: f64,
    /// Training presentations; the STDP images are cycled.
    pub images: usize,
    pub stop: StopKind,
}

impl Default for LayerConfig {
    fn default() -> Self {
        LayerConfig {
            maps: 30,
            kernel: 5,
            threshold: 19.0,
            radius: 5,
            lateral_inhibition: true,
            competition: true,
            pool_lateral_inhibition: false,
            init_mean: 0.9,
            init_std: 0.05,
            images: 20_000,
            stop: StopKind::Fixed,
        }
    }
}

impl LayerConfig {
    /// Defaults for a layer stacked on top of the first.
    pub fn deeper() -> Self {
        LayerConfig {
            threshold: 10.0,
            init_mean: 0.8,
            ..LayerConfig::default()
        }
    }

    pub fn inhibition(&self) -> InhibitionConfig {
        InhibitionConfig {
            threshold: self.threshold,
            competition_radius: self.radius,
            lateral_inhibition: self.lateral_inhibition,
            competition: self.competition,
            pool_lateral_inhibition: self.pool_lateral_inhibition,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        match self.stop {
            StopKind::Fixed => StopRule::FixedImages,
            StopKind::ConvergenceBand => StopRule::convergence_band(),
            StopKind::WeightDeltaJump => StopRule::weight_delta_jump(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub stride: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig { stride: 150 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    SpikeCount,
    GlobalMaxPotential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub mode: FeatureKind,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            mode: FeatureKind::SpikeCount,
        }
    }
}

impl FeaturesConfig {
    pub fn feature_mode(&self) -> FeatureMode {
        match self.mode {
            FeatureKind::SpikeCount => FeatureMode::SpikeCount,
            FeatureKind::GlobalMaxPotential => FeatureMode::GlobalMaxPotential,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Fcn,
    /// An FCN trained first, converted to R-STDP weights and fine-tuned.
    Rstdp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    CrossEntropy,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub cost: CostKind,
    pub eta0: f64,
    pub eta_decay: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            kind: HeadKind::Fcn,
            cost: CostKind::CrossEntropy,
            eta0: 0.1,
            eta_decay: 1.007,
            lambda: 0.1,
            batch_size: 10,
            epochs: 20,
        }
    }
}

impl HeadConfig {
    pub fn params(&self) -> FcnParams {
        FcnParams {
            cost: match self.cost {
                CostKind::CrossEntropy => Cost::CrossEntropy,
                CostKind::Quadratic => Cost::Quadratic,
            },
            eta0: self.eta0,
            eta_decay: self.eta_decay,
            lambda: self.lambda,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioKind {
    Batch,
    PerImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStartKind {
    Prefilled,
    Observed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RstdpConfig {
    pub mode: RatioKind,
    pub warm_start: WarmStartKind,
    pub window: usize,
    pub init_miss: f64,
    pub epochs: usize,
    pub p_drop: f64,
    pub reward_plus: f64,
    pub reward_minus: f64,
    pub punish_plus: f64,
    pub punish_minus: f64,
}

impl Default for RstdpConfig {
    fn default() -> Self {
        let rates = RstdpRates::default();
        RstdpConfig {
            mode: RatioKind::Batch,
            warm_start: WarmStartKind::Prefilled,
            window: 100,
            init_miss: 0.1,
            epochs: 1,
            p_drop: 0.0,
            reward_plus: rates.reward_plus,
            reward_minus: rates.reward_minus,
            punish_plus: rates.punish_plus,
            punish_minus: rates.punish_minus,
        }
    }
}

impl RstdpConfig {
    pub fn run_config(&self, seed: u64) -> RstdpRunConfig {
        RstdpRunConfig {
            mode: match self.mode {
                RatioKind::Batch => RatioMode::Batch,
                RatioKind::PerImage => RatioMode::PerImage,
            },
            warm_start: match self.warm_start {
                WarmStartKind::Prefilled => WarmStart::Prefilled,
                WarmStartKind::Observed => WarmStart::Observed,
            },
            window: self.window,
            init_miss: self.init_miss,
            epochs: self.epochs,
            rates: RstdpRates {
                reward_plus: self.reward_plus,
                reward_minus: self.reward_minus,
                punish_plus: self.punish_plus,
                punish_minus: self.punish_minus,
            },
            p_drop: self.p_drop,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    /// Runs use seeds `seed .. seed + runs`.
    pub runs: u64,
    pub n_afferents: usize,
    pub pattern_afferents: usize,
    pub pattern_len: usize,
    pub noise_rate: f64,
    pub threshold: f64,
    pub window: usize,
    pub duration: usize,
    pub pattern_rate: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub rate_period: usize,
    pub epoch_len: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        let d = NoiseDemoConfig::default();
        DemoConfig {
            runs: 5,
            n_afferents: d.n_afferents,
            pattern_afferents: d.pattern_afferents,
            pattern_len: d.pattern_len,
            noise_rate: d.noise_rate,
            threshold: d.threshold,
            window: d.window,
            duration: d.duration,
            pattern_rate: d.pattern_rate,
            init_mean: d.init_mean,
            init_std: d.init_std,
            a_plus: d.a_plus,
            a_minus: d.a_minus,
            rate_period: d.rate_period,
            epoch_len: d.epoch_len,
        }
    }
}

impl DemoConfig {
    pub fn noise_config(&self, seed: u64) -> NoiseDemoConfig {
        NoiseDemoConfig {
            n_afferents: self.n_afferents,
            pattern_afferents: self.pattern_afferents,
            pattern_len: self.pattern_len,
            noise_rate: self.noise_rate,
            threshold: self.threshold,
            window: self.window,
            duration: self.duration,
            pattern_rate: self.pattern_rate,
            init_mean: self.init_mean,
            init_std: self.init_std,
            a_plus: self.a_plus,
            a_minus: self.a_minus,
            rate_period: self.rate_period,
            epoch_len: self.epoch_len,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgetConfig {
    pub task_a: Vec<u8>,
    pub task_b: Vec<u8>,
    /// Training images per class; 0 keeps every loaded image.
    pub per_class: usize,
    pub fractions: Vec<f64>,
    pub epochs: usize,
    pub probe_stride: usize,
}

impl Default for ForgetConfig {
    fn default() -> Self {
        ForgetConfig {
            task_a: (0..5).collect(),
            task_b: (5..10).collect(),
            per_class: 500,
            fractions: spikeconv::train::REHEARSAL_FRACTIONS.to_vec(),
            epochs: 20,
            probe_stride: 250,
        }
    }
}

impl ForgetConfig {
    pub fn plan(&self, fraction: f64, fcn: FcnParams, seed: u64) -> ForgetPlan {
        ForgetPlan {
            task_a: self.task_a.clone(),
            task_b: self.task_b.clone(),
            per_class: (self.per_class > 0).then_some(self.per_class),
            rehearsal_fraction: fraction,
            epochs: self.epochs,
            probe_stride: self.probe_stride,
            fcn,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    /// Second-layer features rendered; capped at the layer's map count.
    pub l4_count: usize,
    pub montage_cols: usize,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            l4_count: 150,
            montage_cols: 10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::resolve(text, &[])
    }

    /// Parses a config or manifest document, applies `key.path=value`
    /// overrides on top, then validates. Missing keys take their defaults.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        if doc.contains_key("command") {
            let manifest = crate::manifest::Manifest::from_toml(text)?;
            doc = toml::Table::try_from(manifest.config)?;
        }
        let mut merged = toml::Table::try_from(RunConfig::default())?;
        merge(&mut merged, doc);
        fill_layer_defaults(&mut merged)?;
        let mut value = toml::Value::Table(merged);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value.try_into().context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::resolve(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encode;
        ensure!(e.bins > 0, "encode.bins must be positive");
        ensure!(e.threshold.is_finite(), "encode.threshold must be finite");
        ensure!(!self.layers.is_empty(), "at least one layer is required");
        for (i, l) in self.layers.iter().enumerate() {
            ensure!(l.maps > 0 && l.kernel > 0, "layers[{i}]: maps and kernel must be positive");
            ensure!(l.threshold.is_finite(), "layers[{i}].threshold must be finite");
            ensure!(
                (0.0..=1.0).contains(&l.init_mean) && l.init_std >= 0.0,
                "layers[{i}]: init_mean must lie in [0, 1] and init_std be non-negative"
            );
        }
        ensure!(self.monitor.stride > 0, "monitor.stride must be positive");
        ensure!(self.data.stdp_images > 0, "data.stdp_images must be positive");
        if self.data.train_limit > 0 {
            ensure!(
                self.data.stdp_images <= self.data.train_limit,
                "data.stdp_images exceeds data.train_limit"
            );
        }
        let h = &self.head;
        ensure!(h.eta0 > 0.0 && h.eta_decay > 0.0, "head learning rates must be positive");
        ensure!(h.lambda >= 0.0, "head.lambda must be non-negative");
        ensure!(h.batch_size > 0, "head.batch_size must be positive");
        let r = &self.rstdp;
        ensure!(r.window > 0, "rstdp.window must be positive");
        ensure!((0.0..=1.0).contains(&r.init_miss), "rstdp.init_miss must lie in [0, 1]");
        ensure!((0.0..1.0).contains(&r.p_drop), "rstdp.p_drop must lie in [0, 1)");
        self.demo.noise_config(self.seed).validate()?;
        ensure!(self.demo.runs > 0, "demo.runs must be positive");
        let f = &self.forget;
        ensure!(!f.task_a.is_empty() && !f.task_b.is_empty(), "forget tasks must be non-empty");
        ensure!(f.task_a.iter().chain(&f.task_b).all(|&c| c < 10), "forget classes must be digits");
        ensure!(!f.fractions.is_empty(), "forget.fractions must be non-empty");
        for &x in &f.fractions {
            if !(0.0..=1.0).contains(&x) {
                bail!("rehearsal fraction {x} outside [0, 1]");
            }
        }
        ensure!(self.reconstruct.montage_cols > 0, "reconstruct.montage_cols must be positive");
        Ok(())
    }

    /// Untrained layers, their weights drawn from the init stream.
    pub fn initial_layers(&self, input_channels: usize) -> Result<Vec<ConvLayer>> {
        let mut r = rng::stream(self.seed, streams::INIT);
        let mut channels = input_channels;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let init = WeightInit {
                mean: l.init_mean,
                std_dev: l.init_std,
            };
            let kernel = ConvKernel::random(l.maps, channels, l.kernel, init, &mut r)?;
            layers.push(ConvLayer::new(kernel, l.inhibition()));
            channels = l.maps;
        }
        Ok(layers)
    }
}

/// Overlays `src` on `dst`; tables merge key by key, anything else replaces.
fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

/// Completes each `[[layers]]` entry from the defaults for its depth.
fn fill_layer_defaults(cfg: &mut toml::Table) -> Result<()> {
    if let Some(toml::Value::Array(layers)) = cfg.get_mut("layers") {
        for (i, layer) in layers.iter_mut().enumerate() {
            let default = if i == 0 { LayerConfig::default() } else { LayerConfig::deeper() };
            let mut full = toml::Table::try_from(default)?;
            if let toml::Value::Table(given) = std::mem::replace(layer, toml::Value::Boolean(false)) {
                merge(&mut full, given);
                *layer = toml::Value::Table(full);
            } else {
                bail!("layers[{i}] must be a table");
            }
        }
    }
    Ok(())
}

/// Applies one `a.b.c=value` override. Numeric segments index arrays; the
/// value is read as TOML and falls back to a bare string.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let Some((path, raw)) = spec.split_once('=') else {
        bail!("override {spec:?} is not key=value");
    };
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut node = root;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(key.to_string(), value);
                    return Ok(());
                }
                t.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let i: usize = key.parse().with_context(|| format!("{path}: {key:?} is not an array index"))?;
                let len = a.len();
                let slot = a.get_mut(i).with_context(|| format!("{path}: index {i} out of {len}"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("{path}: {key:?} is not a table"),
        };
    }
    bail!("empty override key")
}
