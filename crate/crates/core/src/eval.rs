//! Scoring, naive baselines and the benchmark grid.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{self, build_dataset, Normalizer, SchemaMapping, SplitConfig, TimeSeriesFrame, WindowSet, TARGET_FEATURE};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Model, ModelSpec, Variant};
use crate::synth::{self, SynthConfig};
use crate::train::{fit, loss_on, mse, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    /// On the normalized scale the model was trained on.
    pub mse: f64,
    /// Same error in ppm², when the set carries a normalizer.
    pub mse_ppm2: Option<f64>,
    pub count: usize,
}

/// Converts a normalized-scale MSE to ppm².
pub fn to_ppm2(mse: f64, normalizer: &Normalizer) -> f64 {
    mse * normalizer.target_range().powi(2)
}

/// Scores a checkpoint on a window set prepared with the same normalizer.
pub fn evaluate(checkpoint: &Checkpoint, set: &WindowSet) -> Result<Scores> {
    if checkpoint.normalizer != set.normalizer {
        return Err(Error::NormalizerMismatch);
    }
    let m = loss_on(&checkpoint.model, set)?;
    Ok(Scores {
        mse: m,
        mse_ppm2: set.normalizer.as_ref().map(|n| to_ppm2(m, n)),
        count: set.len(),
    })
}

/// Predicts the last observed CO₂ value of each window.
pub fn persistence_baseline(set: &WindowSet) -> Result<f64> {
    let preds: Vec<f64> = set
        .windows
        .iter()
        .map(|w| w.inputs.get(w.inputs.rows() - 1, TARGET_FEATURE))
        .collect();
    mse(&preds, &set.targets())
}

/// Predicts the CO₂ value `period` hours before the target hour.
pub fn seasonal_naive_baseline(set: &WindowSet, period: usize) -> Result<f64> {
    let (l, h) = (set.lookback, set.horizon);
    if period == 0 || l < period || h > period {
        return Err(Error::InvalidArgument(format!(
            "seasonal naive needs lookback >= period >= horizon, got lookback {l}, period {period}, horizon {h}"
        )));
    }
    // Target sits at row l - 1 + h of the window's span.
    let row = l - 1 + h - period;
    let preds: Vec<f64> = set.windows.iter().map(|w| w.inputs.get(row, TARGET_FEATURE)).collect();
    mse(&preds, &set.targets())
}

/// Where benchmark data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synth { name: String, config: SynthConfig },
    Csv { name: String, path: PathBuf, schema: SchemaMapping },
}

impl Source {
    pub fn name(&self) -> &str {
        match self {
            Source::Synth { name, .. } | Source::Csv { name, .. } => name,
        }
    }

    pub fn load(&self) -> Result<TimeSeriesFrame> {
        match self {
            Source::Synth { config, .. } => synth::simulate(config),
            Source::Csv { path, schema, .. } => Ok(data::load_frame(path, schema)?.frame),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub variants: Vec<Variant>,
    pub horizons: Vec<usize>,
    pub hidden: usize,
    pub lookback: usize,
    pub kernel: Option<usize>,
    pub cutoff: Option<f64>,
    pub seed: u64,
    pub seasonal_period: usize,
    pub train: TrainConfig,
    pub split: SplitConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            horizons: vec![1, 2, 3, 6],
            hidden: 16,
            lookback: 24,
            kernel: None,
            cutoff: None,
            seed: 0,
            seasonal_period: 24,
            train: TrainConfig::default(),
            split: SplitConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn spec_for(&self, variant: Variant, horizon: usize) -> ModelSpec {
        let mut spec = ModelSpec::new(variant, self.hidden, self.lookback, horizon, self.seed);
        if spec.kernel.is_some() {
            spec.kernel = self.kernel.or(spec.kernel);
        }
        if spec.cutoff.is_some() {
            spec.cutoff = self.cutoff.or(spec.cutoff);
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScores {
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_mse_ppm2: f64,
    pub epochs_run: usize,
    pub mean_epoch_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub source: String,
    pub variant: Variant,
    pub horizon: usize,
    pub outcome: std::result::Result<CellScores, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub source: String,
    pub name: &'static str,
    pub horizon: usize,
    pub outcome: std::result::Result<(f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sources: Vec<String>,
    pub variants: Vec<Variant>,
    pub horizons: Vec<usize>,
    pub cells: Vec<Cell>,
    pub baselines: Vec<BaselineRow>,
    pub params: Vec<(Variant, usize)>,
    /// Process peak resident set in KiB, if the platform reports it.
    pub peak_memory_kib: Option<u64>,
}

pub const BASELINE_NAMES: [&str; 2] = ["Persistence", "Seasonal naive"];

/// Peak resident memory of this process from `/proc/self/status`.
pub fn peak_memory_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Trains and scores every (source, horizon, variant) cell. Failures are
/// recorded in the report and the run carries on. `progress` receives one
/// line per finished cell.
pub fn benchmark(sources: &[Source], cfg: &BenchConfig, mut progress: impl FnMut(&str)) -> EvalReport {
    let mut report = EvalReport {
        sources: sources.iter().map(|s| s.name().to_string()).collect(),
        variants: cfg.variants.clone(),
        horizons: cfg.horizons.clone(),
        cells: Vec::new(),
        baselines: Vec::new(),
        params: cfg
            .variants
            .iter()
            .map(|&v| (v, Model::count_for(&cfg.spec_for(v, 1))))
            .collect(),
        peak_memory_kib: None,
    };
    for source in sources {
        let frame = source.load().map_err(|e| e.to_string());
        for &h in &cfg.horizons {
            let dataset = frame
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|f| build_dataset(f, cfg.lookback, h, &cfg.split).map_err(|e| e.to_string()));
            for (name, period) in [(BASELINE_NAMES[0], None), (BASELINE_NAMES[1], Some(cfg.seasonal_period))] {
                let outcome = dataset.as_ref().map_err(Clone::clone).and_then(|ds| {
                    let score = |set: &WindowSet| match period {
                        None => persistence_baseline(set),
                        Some(p) => seasonal_naive_baseline(set, p),
                    };
                    Ok((score(&ds.splits.train).map_err(|e| e.to_string())?, score(&ds.splits.test).map_err(|e| e.to_string())?))
                });
                report.baselines.push(BaselineRow {
                    source: source.name().to_string(),
                    name,
                    horizon: h,
                    outcome,
                });
            }
            for &variant in &cfg.variants {
                let outcome = dataset.as_ref().map_err(Clone::clone).and_then(|ds| {
                    let run = || -> Result<CellScores> {
                        let model = Model::build(cfg.spec_for(variant, h))?;
                        let out = fit(model, &ds.splits.train, &ds.splits.val, &cfg.train)?;
                        let test_mse = loss_on(&out.model, &ds.splits.test)?;
                        Ok(CellScores {
                            train_mse: loss_on(&out.model, &ds.splits.train)?,
                            test_mse,
                            test_mse_ppm2: to_ppm2(test_mse, &ds.normalizer),
                            epochs_run: out.history.epochs_run(),
                            mean_epoch_seconds: out.history.mean_epoch_seconds(),
                        })
                    };
                    run().map_err(|e| e.to_string())
                });
                progress(&match &outcome {
                    Ok(s) => format!(
                        "{} {variant} h={h}: test mse {:.6} after {} epochs",
                        source.name(),
                        s.test_mse,
                        s.epochs_run
                    ),
                    Err(e) => format!("{} {variant} h={h}: failed: {e}", source.name()),
                });
                report.cells.push(Cell {
                    source: source.name().to_string(),
                    variant,
                    horizon: h,
                    outcome,
                });
            }
        }
    }
    report.peak_memory_kib = peak_memory_kib();
    report
}

fn fmt_mse(x: f64) -> String {
    format!("{x:.6}")
}

impl EvalReport {
    pub fn cell(&self, source: &str, variant: Variant, horizon: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.source == source && c.variant == variant && c.horizon == horizon)
    }

    pub fn baseline(&self, source: &str, name: &str, horizon: usize) -> Option<&BaselineRow> {
        self.baselines
            .iter()
            .find(|b| b.source == source && b.name == name && b.horizon == horizon)
    }

    /// Train/test MSE grid, one table per source, horizons across.
    pub fn render_grid(&self) -> String {
        let mut out = String::new();
        for source in &self.sources {
            let _ = writeln!(out, "### {source}\n");
            out.push_str("| Model |");
            for h in &self.horizons {
                let _ = write!(out, " {h}h Train | {h}h Test |");
            }
            out.push_str("\n|---|");
            out.push_str(&"---|---|".repeat(self.horizons.len()));
            out.push('\n');
            for name in BASELINE_NAMES {
                let _ = write!(out, "| {name} |");
                for &h in &self.horizons {
                    match self.baseline(source, name, h).map(|b| &b.outcome) {
                        Some(Ok((tr, te))) => {
                            let _ = write!(out, " {} | {} |", fmt_mse(*tr), fmt_mse(*te));
                        }
                        Some(Err(e)) => {
                            let _ = write!(out, " failed: {e} | failed |");
                        }
                        None => out.push_str(" - | - |"),
                    }
                }
                out.push('\n');
            }
            for &v in &self.variants {
                let _ = write!(out, "| {v} |");
                for &h in &self.horizons {
                    match self.cell(source, v, h).map(|c| &c.outcome) {
                        Some(Ok(s)) => {
                            let _ = write!(out, " {} | {} |", fmt_mse(s.train_mse), fmt_mse(s.test_mse));
                        }
                        Some(Err(e)) => {
                            let _ = write!(out, " failed: {e} | failed |");
                        }
                        None => out.push_str(" - | - |"),
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Parameter counts, mean epoch time and peak memory per variant.
    pub fn render_complexity(&self) -> String {
        let memory = self
            .peak_memory_kib
            .map_or_else(|| "unavailable".to_string(), |k| format!("{:.1} MiB (process peak)", k as f64 / 1024.0));
        let mut out = String::from("| Model | Parameters | Mean epoch time (ms) | Peak memory |\n|---|---|---|---|\n");
        for &(v, params) in &self.params {
            let times: Vec<f64> = self
                .cells
                .iter()
                .filter(|c| c.variant == v)
                .filter_map(|c| c.outcome.as_ref().ok())
                .map(|s| s.mean_epoch_seconds)
                .collect();
            let ms = if times.is_empty() {
                "n/a".to_string()
            } else {
                format!("{:.1}", 1000.0 * times.iter().sum::<f64>() / times.len() as f64)
            };
            let _ = writeln!(out, "| {v} | {params} | {ms} | {memory} |");
        }
        out
    }

    /// One row per cell: source, model, horizon, train/test MSE, status.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("source\tmodel\thorizon\ttrain_mse\ttest_mse\ttest_mse_ppm2\tepochs\tstatus\n");
        for b in &self.baselines {
            match &b.outcome {
                Ok((tr, te)) => {
                    let _ = writeln!(out, "{}\t{}\t{}\t{tr}\t{te}\t\t\tok", b.source, b.name, b.horizon);
                }
                Err(e) => {
                    let _ = writeln!(out, "{}\t{}\t{}\t\t\t\t\tfailed: {e}", b.source, b.name, b.horizon);
                }
            }
        }
        for c in &self.cells {
            match &c.outcome {
                Ok(s) => {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\tok",
                        c.source, c.variant, c.horizon, s.train_mse, s.test_mse, s.test_mse_ppm2, s.epochs_run
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "{}\t{}\t{}\t\t\t\t\tfailed: {e}", c.source, c.variant, c.horizon);
                }
            }
        }
        out
    }
}
