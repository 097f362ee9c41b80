//! Self-describing plain-text checkpoints.
//!
//! Layout: a magic/version line, `key value` header lines, one `block` line
//! per parameter block followed by its values on a single line, an FNV-1a
//! checksum of everything above, and an `end` trailer. Floats are written in
//! shortest round-trip form so a reload is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, Variant};
use crate::data::Normalizer;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "1";
const MAGIC: &str = "ssnet-checkpoint";

/// How the stored parameters were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainMeta {
    fn default() -> Self {
        Self {
            epochs_run: 0,
            best_epoch: 0,
            best_val_loss: f64::NAN,
            seed: 0,
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 600,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub normalizer: Option<Normalizer>,
    pub meta: TrainMeta,
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn kv(lines: &mut std::str::Lines<'_>, key: &str) -> Result<String> {
    let line = lines
        .next()
        .ok_or_else(|| Error::CorruptCheckpoint(format!("missing `{key}`")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok(v.to_string()),
        _ => Err(Error::CorruptCheckpoint(format!("expected `{key}`, found `{line}`"))),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl Checkpoint {
    pub fn new(model: Model, normalizer: Option<Normalizer>, meta: TrainMeta) -> Self {
        Self {
            model,
            normalizer,
            meta,
        }
    }

    pub fn to_text(&self) -> String {
        let spec = self.model.spec();
        let m = &self.meta;
        let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
        let header: [(&str, String); 19] = [
            ("variant", spec.variant.key().to_string()),
            ("hidden", spec.hidden.to_string()),
            ("input", spec.input.to_string()),
            ("lookback", spec.lookback.to_string()),
            ("horizon", spec.horizon.to_string()),
            ("kernel", opt(&spec.kernel)),
            ("cutoff", opt(&spec.cutoff)),
            ("seed", spec.seed.to_string()),
            ("epochs_run", m.epochs_run.to_string()),
            ("best_epoch", m.best_epoch.to_string()),
            ("best_val_loss", m.best_val_loss.to_string()),
            ("train_seed", m.seed.to_string()),
            ("lr", m.lr.to_string()),
            ("batch_size", m.batch_size.to_string()),
            ("max_epochs", m.max_epochs.to_string()),
            ("patience", m.patience.to_string()),
            ("beta1", m.beta1.to_string()),
            ("beta2", m.beta2.to_string()),
            ("eps", m.eps.to_string()),
        ];
        for (k, v) in header {
            let _ = writeln!(out, "{k} {v}");
        }
        match &self.normalizer {
            None => out.push_str("normalizer none\n"),
            Some(n) => {
                let _ = writeln!(out, "normalizer {}", n.features.len());
                for (i, name) in n.features.iter().enumerate() {
                    let _ = writeln!(out, "feature {name} {} {}", n.min[i], n.max[i]);
                }
            }
        }
        let flat = self.model.flat_params();
        let mut offset = 0;
        for (name, r, c) in self.model.param_layout() {
            let _ = writeln!(out, "block {name} {r} {c}");
            let _ = writeln!(out, "{}", join(&flat[offset..offset + r * c]));
            offset += r * c;
        }
        let _ = writeln!(out, "checksum {:016x}", fnv1a(&out));
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let corrupt = |msg: String| Error::CorruptCheckpoint(msg);
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
        match first.split_once(' ') {
            Some((MAGIC, CHECKPOINT_VERSION)) => {}
            Some((MAGIC, v)) => {
                return Err(Error::CheckpointVersion(v.to_string()))
            }
            _ => return Err(corrupt("not a checkpoint file".into())),
        }

        // Integrity first: the checksum covers every byte before its own line.
        let sum_at = text
            .rfind("\nchecksum ")
            .ok_or_else(|| corrupt("missing checksum (truncated file?)".into()))?
            + 1;
        let tail: Vec<&str> = text[sum_at..].lines().collect();
        if tail.len() != 2 || tail[1] != "end" {
            return Err(corrupt("missing end trailer (truncated file?)".into()));
        }
        let stored = tail[0].trim_start_matches("checksum ");
        if stored != format!("{:016x}", fnv1a(&text[..sum_at])) {
            return Err(corrupt("checksum mismatch".into()));
        }

        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::CorruptCheckpoint(format!("bad value `{v}` for `{key}`")))
        }
        fn opt_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
            if v == "none" {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        }

        let variant: Variant = kv(&mut lines, "variant")?
            .parse()
            .map_err(|e: Error| corrupt(e.to_string()))?;
        let spec = ModelSpec {
            variant,
            hidden: num("hidden", &kv(&mut lines, "hidden")?)?,
            input: num("input", &kv(&mut lines, "input")?)?,
            lookback: num("lookback", &kv(&mut lines, "lookback")?)?,
            horizon: num("horizon", &kv(&mut lines, "horizon")?)?,
            kernel: opt_num("kernel", &kv(&mut lines, "kernel")?)?,
            cutoff: opt_num("cutoff", &kv(&mut lines, "cutoff")?)?,
            seed: num("seed", &kv(&mut lines, "seed")?)?,
        };
        let meta = TrainMeta {
            epochs_run: num("epochs_run", &kv(&mut lines, "epochs_run")?)?,
            best_epoch: num("best_epoch", &kv(&mut lines, "best_epoch")?)?,
            best_val_loss: num("best_val_loss", &kv(&mut lines, "best_val_loss")?)?,
            seed: num("train_seed", &kv(&mut lines, "train_seed")?)?,
            lr: num("lr", &kv(&mut lines, "lr")?)?,
            batch_size: num("batch_size", &kv(&mut lines, "batch_size")?)?,
            max_epochs: num("max_epochs", &kv(&mut lines, "max_epochs")?)?,
            patience: num("patience", &kv(&mut lines, "patience")?)?,
            beta1: num("beta1", &kv(&mut lines, "beta1")?)?,
            beta2: num("beta2", &kv(&mut lines, "beta2")?)?,
            eps: num("eps", &kv(&mut lines, "eps")?)?,
        };
        let normalizer = match kv(&mut lines, "normalizer")?.as_str() {
            "none" => None,
            count => {
                let count: usize = num("normalizer", count)?;
                let mut n = Normalizer {
                    features: Vec::with_capacity(count),
                    min: Vec::with_capacity(count),
                    max: Vec::with_capacity(count),
                };
                for _ in 0..count {
                    let row = kv(&mut lines, "feature")?;
                    let parts: Vec<&str> = row.split(' ').collect();
                    if parts.len() != 3 {
                        return Err(corrupt(format!("bad feature line `{row}`")));
                    }
                    n.features.push(parts[0].to_string());
                    n.min.push(num("feature min", parts[1])?);
                    n.max.push(num("feature max", parts[2])?);
                }
                Some(n)
            }
        };

        let mut model = Model::zeros(spec.clone()).map_err(|e| Error::CheckpointShape(e.to_string()))?;
        let mut flat = Vec::with_capacity(model.parameter_count());
        for (name, r, c) in model.param_layout() {
            let line = kv(&mut lines, "block")?;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(corrupt(format!("bad block line `{line}`")));
            }
            let (rr, cc): (usize, usize) = (num("rows", parts[1])?, num("cols", parts[2])?);
            if parts[0] != name || (rr, cc) != (r, c) {
                return Err(Error::CheckpointShape(format!(
                    "block `{} {rr}x{cc}` does not match `{name} {r}x{c}` required by the header",
                    parts[0]
                )));
            }
            let values = lines
                .next()
                .ok_or_else(|| corrupt(format!("missing values for `{name}`")))?;
            let before = flat.len();
            for v in values.split(' ').filter(|s| !s.is_empty()) {
                flat.push(num::<f64>(&name, v)?);
            }
            if flat.len() - before != r * c {
                return Err(Error::CheckpointShape(format!(
                    "block `{name}` holds {} values, expected {}",
                    flat.len() - before,
                    r * c
                )));
            }
        }
        match lines.next() {
            Some(l) if l.starts_with("checksum ") => {}
            Some(l) => return Err(Error::CheckpointShape(format!("unexpected extra line `{l}`"))),
            None => return Err(corrupt("missing checksum".into())),
        }
        model.set_flat_params(&flat)?;
        Ok(Self {
            model,
            normalizer,
            meta,
        })
    }

    /// Writes via a temporary file in the same directory and a rename, so a
    /// crash never leaves a half-written checkpoint at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let file_name = path
            .file_name()
            .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
        let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}
