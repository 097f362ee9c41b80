use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ssnet_core::data::{self, build_dataset, fill_gaps, parse_timestamp, TimeSeriesFrame, Window, FEATURES, TIMESTAMP_FORMAT};
use ssnet_core::eval::{self, BenchConfig, Source};
use ssnet_core::models::{Checkpoint, Model};
use ssnet_core::numerics::{Matrix, Rng};
use ssnet_core::synth::{self, steady_state};
use ssnet_core::train::{self, gradcheck as run_gradcheck, GradcheckOptions};
use ssnet_core::Error as CoreError;

use crate::config::{Overrides, RunConfig, SourceKind};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Bad flags or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Divergence or a failed gradient check.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
impl std::error::Error for NumericFailure {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return EXIT_USAGE;
        }
        if cause.is::<NumericFailure>() {
            return EXIT_NUMERIC;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Divergence { .. } => EXIT_NUMERIC,
                CoreError::InvalidArgument(_) | CoreError::Spec { .. } | CoreError::UnstableStep(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Resolves the configuration and records it before any work starts.
fn prepare(o: &Overrides) -> Result<RunConfig> {
    let cfg = RunConfig::resolve(o)?;
    cfg.write_resolved()?;
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<TimeSeriesFrame> {
    match cfg.data.source {
        SourceKind::Synth => Ok(synth::simulate(&cfg.synth)?),
        SourceKind::Csv => {
            let path = cfg
                .data
                .path
                .as_ref()
                .ok_or_else(|| usage("--source csv needs --data <file>"))?;
            let loaded = data::load_frame(path, &cfg.data.schema)?;
            if !loaded.ignored_columns.is_empty() {
                eprintln!("warning: ignoring extra columns: {}", loaded.ignored_columns.join(", "));
            }
            Ok(loaded.frame)
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn checkpoint_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.checkpoint
        .clone()
        .ok_or_else(|| usage("this command needs --checkpoint <file>"))
}

pub fn synth(o: &Overrides) -> Result<()> {
    let cfg = prepare(o)?;
    let frame = synth::simulate(&cfg.synth)?;
    let path = cfg.out.join("synth.csv");
    frame.write_csv(&path)?;
    println!(
        "wrote {} hours to {} (exchange rate {:.3} /h)",
        frame.len(),
        path.display(),
        cfg.synth.exchange_rate()
    );
    if let Some(c) = steady_state(&cfg.synth) {
        println!("steady state {c:.3} ppm");
    }
    Ok(())
}

pub fn train(o: &Overrides) -> Result<()> {
    let cfg = prepare(o)?;
    let frame = load_data(&cfg)?;
    let spec = cfg.spec();
    let ds = build_dataset(&frame, spec.lookback, spec.horizon, &cfg.split)?;
    write(&cfg.out.join("gaps.tsv"), &ds.gaps.to_text())?;
    let splits = &ds.splits;
    println!(
        "{}: {} parameters; {} train / {} val / {} test windows",
        spec.variant,
        Model::count_for(&spec),
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    let model = Model::build(spec)?;
    let outcome = train::fit(model, &splits.train, &splits.val, &cfg.train)?;
    let ckpt_path = cfg.out.join("model.ckpt");
    outcome.checkpoint.save(&ckpt_path)?;
    write(&cfg.out.join("history.tsv"), &outcome.history.to_tsv())?;
    write(&cfg.out.join("timing.tsv"), &outcome.history.timing_tsv())?;

    let test = eval::evaluate(&outcome.checkpoint, &splits.test)?;
    let h = &outcome.history;
    println!(
        "stopped after {} epochs ({}); best epoch {} with val mse {:.6}",
        h.epochs_run(),
        h.stop_reason.as_str(),
        h.best_epoch,
        h.best_val_loss
    );
    println!(
        "test mse {:.6} (normalized), {:.2} ppm^2; persistence {:.6}",
        test.mse,
        test.mse_ppm2.unwrap_or(f64::NAN),
        eval::persistence_baseline(&splits.test)?
    );
    println!("checkpoint {}", ckpt_path.display());
    Ok(())
}

pub fn eval(o: &Overrides) -> Result<()> {
    let cfg = prepare(o)?;
    let ckpt = Checkpoint::load(&checkpoint_path(&cfg)?)?;
    let frame = load_data(&cfg)?;
    let spec = ckpt.model.spec();
    let ds = build_dataset(&frame, spec.lookback, spec.horizon, &cfg.split)?;
    let mut tsv = String::from("split\twindows\tmse\tmse_ppm2\tpersistence_mse\n");
    for (name, set) in [("train", &ds.splits.train), ("val", &ds.splits.val), ("test", &ds.splits.test)] {
        let s = eval::evaluate(&ckpt, set)?;
        let p = eval::persistence_baseline(set)?;
        let ppm = s.mse_ppm2.unwrap_or(f64::NAN);
        println!("{name:>5}: mse {:.6}  ({ppm:.2} ppm^2)  persistence {p:.6}  [{} windows]", s.mse, s.count);
        tsv.push_str(&format!("{name}\t{}\t{}\t{ppm}\t{p}\n", s.count, s.mse));
    }
    write(&cfg.out.join("eval.tsv"), &tsv)?;
    Ok(())
}

pub fn predict(o: &Overrides, end: Option<&str>) -> Result<()> {
    let cfg = prepare(o)?;
    let ckpt = Checkpoint::load(&checkpoint_path(&cfg)?)?;
    let normalizer = ckpt
        .normalizer
        .as_ref()
        .ok_or_else(|| anyhow!("checkpoint carries no normalizer; cannot scale inputs"))?;
    let (frame, _) = fill_gaps(&load_data(&cfg)?, cfg.split.max_gap);
    let spec = ckpt.model.spec();
    let last = match end {
        None => frame.len().checked_sub(1).ok_or_else(|| anyhow!("data file has no rows"))?,
        Some(s) => {
            let ts = parse_timestamp(s).ok_or_else(|| usage(format!("cannot parse --end `{s}`")))?;
            frame
                .timestamps
                .iter()
                .position(|t| *t == ts)
                .ok_or_else(|| anyhow!("no row at {s}"))?
        }
    };
    let l = spec.lookback;
    if last + 1 < l {
        bail!(CoreError::Data(format!("need {l} hours of history before the forecast, found {}", last + 1)));
    }
    let first = last + 1 - l;
    if (first..=last).any(|i| !frame.valid[i]) {
        bail!(CoreError::Data("input window overlaps a gap in the data".into()));
    }
    let mut values = Vec::with_capacity(l * FEATURES.len());
    for r in first..=last {
        values.extend_from_slice(&frame.row(r));
    }
    let window = Window {
        start: first,
        inputs: Matrix::from_vec(l, FEATURES.len(), values)?,
        target: 0.0,
        target_index: last + spec.horizon,
    };
    let scaled = normalizer.transform_window(&window);
    let y = ckpt.model.predict(&scaled.inputs)?;
    let ppm = normalizer.invert_target(y);
    let target_time = frame.timestamps[last] + chrono::Duration::hours(spec.horizon as i64);
    let stamp = target_time.format(TIMESTAMP_FORMAT);
    println!("{stamp}\t{ppm:.3} ppm\t{y:.6} (normalized)");
    let mut tsv = format!("target_time\tco2_ppm\tnormalized\n{stamp}\t{ppm}\t{y}\n");
    if let Some(i) = frame.timestamps.iter().position(|t| *t == target_time).filter(|&i| frame.valid[i]) {
        println!("observed\t{:.3} ppm", frame.co2_in[i]);
        tsv.push_str(&format!("# observed\t{}\n", frame.co2_in[i]));
    }
    write(&cfg.out.join("prediction.tsv"), &tsv)?;
    Ok(())
}

pub fn gradcheck(o: &Overrides) -> Result<()> {
    let cfg = prepare(o)?;
    let spec = cfg.spec();
    let model = Model::build(spec.clone())?;
    let mut rng = Rng::new(cfg.seed ^ 0x9e37_79b9);
    let data = (0..spec.lookback * spec.input).map(|_| rng.next_f64()).collect();
    let window = Matrix::from_vec(spec.lookback, spec.input, data)?;
    let target = rng.next_f64();
    let report = run_gradcheck(&model, &window, target, GradcheckOptions::default())?;
    println!(
        "{} H={} L={} seed={}: {}",
        spec.variant,
        spec.hidden,
        spec.lookback,
        cfg.seed,
        report.summary()
    );
    println!("max masked relative error {:.3e}", report.max_rel_error);
    if !report.passed() {
        return Err(NumericFailure(format!(
            "gradient check failed (tolerance {:e})",
            report.tolerance
        ))
        .into());
    }
    Ok(())
}

pub fn bench(o: &Overrides) -> Result<()> {
    let cfg = prepare(o)?;
    let source = match cfg.data.source {
        SourceKind::Synth => Source::Synth {
            name: "synth".into(),
            config: cfg.synth.clone(),
        },
        SourceKind::Csv => {
            let path = cfg
                .data
                .path
                .clone()
                .ok_or_else(|| usage("--source csv needs --data <file>"))?;
            let name = path
                .file_stem()
                .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
            Source::Csv {
                name,
                path,
                schema: cfg.data.schema.clone(),
            }
        }
    };
    let bench_cfg = BenchConfig {
        variants: cfg.bench.variants.clone(),
        horizons: cfg.bench.horizons.clone(),
        hidden: cfg.model.hidden,
        lookback: cfg.model.lookback,
        kernel: cfg.model.kernel,
        cutoff: cfg.model.cutoff,
        seed: cfg.seed,
        train: cfg.train.clone(),
        split: cfg.split,
        ..BenchConfig::default()
    };
    let report = eval::benchmark(&[source], &bench_cfg, |line| eprintln!("{line}"));
    let grid = report.render_grid();
    let complexity = report.render_complexity();
    write(
        &cfg.out.join("grid.md"),
        &format!("## Train and test MSE (normalized)\n\n{grid}## Model size and cost\n\n{complexity}"),
    )?;
    write(&cfg.out.join("results.tsv"), &report.to_tsv())?;
    println!("{grid}{complexity}");
    let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see results.tsv", report.cells.len());
    }
    Ok(())
}
