//! Run configuration: TOML file, then `SSNET_*` environment variables, then
//! command-line flags, each layer overriding the one before.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use ssnet_core::data::{SchemaMapping, SplitConfig};
use ssnet_core::models::{ModelSpec, Variant, DEFAULT_CUTOFF, DEFAULT_INPUT};
use ssnet_core::synth::SynthConfig;
use ssnet_core::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synth,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub source: SourceKind,
    pub path: Option<PathBuf>,
    pub schema: SchemaMapping,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: SourceKind::Synth,
            path: None,
            schema: SchemaMapping::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub variant: Variant,
    pub hidden: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub kernel: Option<usize>,
    pub cutoff: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::SsGru,
            hidden: 16,
            lookback: 24,
            horizon: 1,
            kernel: None,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    pub variants: Vec<Variant>,
    pub horizons: Vec<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            horizons: vec![1, 2, 3, 6],
        }
    }
}

/// Everything a run needs. `seed` drives model initialization, batch order
/// and the synthetic generator alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub synth: SynthConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("ssnet-out"),
            seed: 0,
            checkpoint: None,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            synth: SynthConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Flags shared by every subcommand. Each can also come from the
/// environment as `SSNET_<NAME>`, e.g. `SSNET_HIDDEN=8`.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, env = "SSNET_CONFIG")]
    pub config: Option<PathBuf>,
    /// Input CSV; implies `--source csv`.
    #[arg(long, env = "SSNET_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, env = "SSNET_SOURCE")]
    pub source: Option<SourceKind>,
    /// Output directory.
    #[arg(long, env = "SSNET_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "SSNET_VARIANT")]
    pub variant: Option<Variant>,
    #[arg(long, env = "SSNET_HIDDEN")]
    pub hidden: Option<usize>,
    #[arg(long, env = "SSNET_LOOKBACK")]
    pub lookback: Option<usize>,
    #[arg(long, env = "SSNET_HORIZON")]
    pub horizon: Option<usize>,
    /// Moving-average kernel (odd) for d-* variants.
    #[arg(long, env = "SSNET_KERNEL")]
    pub kernel: Option<usize>,
    /// Fourier cutoff in (0, 1) for fd-* variants.
    #[arg(long, env = "SSNET_CUTOFF")]
    pub cutoff: Option<f64>,
    #[arg(long, env = "SSNET_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "SSNET_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,
    #[arg(long, env = "SSNET_PATIENCE")]
    pub patience: Option<usize>,
    #[arg(long, env = "SSNET_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "SSNET_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "SSNET_TEST_FRAC")]
    pub test_frac: Option<f64>,
    #[arg(long, env = "SSNET_VAL_FRAC")]
    pub val_frac: Option<f64>,
    /// Checkpoint to read (eval, predict).
    #[arg(long, env = "SSNET_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated forecast horizons for bench.
    #[arg(long, value_delimiter = ',', env = "SSNET_HORIZONS")]
    pub horizons: Option<Vec<usize>>,
    /// Hours to simulate (synth source).
    #[arg(long, env = "SSNET_LENGTH")]
    pub length: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File (if any) with the overrides applied.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(o);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if o.data.is_some() {
            self.data.path = o.data.clone();
            self.data.source = SourceKind::Csv;
        }
        set(&mut self.data.source, &o.source);
        set(&mut self.out, &o.out);
        set(&mut self.seed, &o.seed);
        if o.checkpoint.is_some() {
            self.checkpoint = o.checkpoint.clone();
        }
        set(&mut self.model.variant, &o.variant);
        set(&mut self.model.hidden, &o.hidden);
        set(&mut self.model.lookback, &o.lookback);
        set(&mut self.model.horizon, &o.horizon);
        if o.kernel.is_some() {
            self.model.kernel = o.kernel;
        }
        if o.cutoff.is_some() {
            self.model.cutoff = o.cutoff;
        }
        set(&mut self.train.max_epochs, &o.max_epochs);
        set(&mut self.train.patience, &o.patience);
        set(&mut self.train.batch_size, &o.batch_size);
        set(&mut self.train.lr, &o.lr);
        set(&mut self.split.test_fraction, &o.test_frac);
        set(&mut self.split.val_fraction, &o.val_frac);
        set(&mut self.bench.horizons, &o.horizons);
        set(&mut self.synth.length, &o.length);
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        // Record the effective kernel and cutoff so the echoed file is complete.
        let lookback = self.model.lookback;
        self.model.kernel = self
            .model
            .kernel
            .or_else(|| ModelSpec::new(Variant::DSsRnn, 1, lookback, 1, 0).kernel);
        self.model.cutoff = self.model.cutoff.or(Some(DEFAULT_CUTOFF));
    }

    /// Model spec for `variant` at `horizon`. A kernel or cutoff only applies
    /// to the family that uses it.
    pub fn spec_for(&self, variant: Variant, horizon: usize) -> ModelSpec {
        let m = &self.model;
        let mut spec = ModelSpec::new(variant, m.hidden, m.lookback, horizon, self.seed);
        spec.input = DEFAULT_INPUT;
        if spec.kernel.is_some() {
            spec.kernel = m.kernel.or(spec.kernel);
        }
        if spec.cutoff.is_some() {
            spec.cutoff = m.cutoff.or(spec.cutoff);
        }
        spec
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec_for(self.model.variant, self.model.horizon)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Writes the resolved configuration to `<out>/config.toml`.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join("config.toml");
        std::fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
