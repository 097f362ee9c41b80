//! The six architectures, assembled from [`cells`](crate::cells) and
//! [`decomp`](crate::decomp).
//!
//! Plain variants run one cell over the window. Decomposition variants split
//! every input channel into a slow and a fast component, run an independent
//! cell on each, and sum the two linear readouts.

mod checkpoint;

pub use checkpoint::{Checkpoint, TrainMeta, CHECKPOINT_VERSION};

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::cells::{advance, backward_acc, cell_param_count, forward_unchecked, CellKind, CellParams, CellState, StepScratch};
use crate::decomp::{self, check_cutoff, check_kernel, SplitMethod};
use crate::error::{Error, Result};
use crate::numerics::{dot, glorot_init, Matrix, Rng};

/// Number of input channels in the standard feature schema.
pub const DEFAULT_INPUT: usize = 5;
pub const DEFAULT_KERNEL: usize = 25;
pub const DEFAULT_CUTOFF: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    SsRnn,
    SsGru,
    DSsRnn,
    DSsGru,
    FdSsRnn,
    FdSsGru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Plain,
    MovingAverage,
    Fourier,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::SsRnn,
        Variant::SsGru,
        Variant::DSsRnn,
        Variant::DSsGru,
        Variant::FdSsRnn,
        Variant::FdSsGru,
    ];

    /// Display name, e.g. `D-SS-GRU`.
    pub fn name(self) -> &'static str {
        match self {
            Variant::SsRnn => "SS-RNN",
            Variant::SsGru => "SS-GRU",
            Variant::DSsRnn => "D-SS-RNN",
            Variant::DSsGru => "D-SS-GRU",
            Variant::FdSsRnn => "FD-SS-RNN",
            Variant::FdSsGru => "FD-SS-GRU",
        }
    }

    /// Lower-case name used on the command line and in files.
    pub fn key(self) -> &'static str {
        match self {
            Variant::SsRnn => "ss-rnn",
            Variant::SsGru => "ss-gru",
            Variant::DSsRnn => "d-ss-rnn",
            Variant::DSsGru => "d-ss-gru",
            Variant::FdSsRnn => "fd-ss-rnn",
            Variant::FdSsGru => "fd-ss-gru",
        }
    }

    pub fn cell_kind(self) -> CellKind {
        match self {
            Variant::SsRnn | Variant::DSsRnn | Variant::FdSsRnn => CellKind::SsRnn,
            Variant::SsGru | Variant::DSsGru | Variant::FdSsGru => CellKind::SsGru,
        }
    }

    pub fn family(self) -> Family {
        match self {
            Variant::SsRnn | Variant::SsGru => Family::Plain,
            Variant::DSsRnn | Variant::DSsGru => Family::MovingAverage,
            Variant::FdSsRnn | Variant::FdSsGru => Family::Fourier,
        }
    }

    pub fn stream_count(self) -> usize {
        match self.family() {
            Family::Plain => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == lower)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant `{s}` (expected one of ss-rnn, ss-gru, d-ss-rnn, d-ss-gru, fd-ss-rnn, fd-ss-gru)"
                ))
            })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.key().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub hidden: usize,
    pub input: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub kernel: Option<usize>,
    pub cutoff: Option<f64>,
    pub seed: u64,
}

impl ModelSpec {
    /// Spec with the default kernel or cutoff filled in for the variant's family.
    /// The default kernel is capped at `2 * lookback - 1`.
    pub fn new(variant: Variant, hidden: usize, lookback: usize, horizon: usize, seed: u64) -> Self {
        let (kernel, cutoff) = match variant.family() {
            Family::Plain => (None, None),
            // Short windows get the widest kernel they can hold.
            Family::MovingAverage => (Some(DEFAULT_KERNEL.min((2 * lookback).max(2) - 1)), None),
            Family::Fourier => (None, Some(DEFAULT_CUTOFF)),
        };
        Self {
            variant,
            hidden,
            input: DEFAULT_INPUT,
            lookback,
            horizon,
            kernel,
            cutoff,
            seed,
        }
    }

    pub fn with_kernel(mut self, kernel: usize) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("hidden", self.hidden),
            ("input", self.input),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
        ] {
            if value == 0 {
                return Err(Error::Spec {
                    field,
                    reason: "must be at least 1".into(),
                });
            }
        }
        let family = self.variant.family();
        match (family, self.kernel) {
            (Family::MovingAverage, None) => {
                return Err(Error::Spec {
                    field: "kernel",
                    reason: format!("is required for {}", self.variant),
                })
            }
            (Family::MovingAverage, Some(k)) => {
                check_kernel(k, self.lookback).map_err(|e| Error::Spec {
                    field: "kernel",
                    reason: e.to_string(),
                })?;
            }
            (_, Some(_)) => {
                return Err(Error::Spec {
                    field: "kernel",
                    reason: format!("must not be set for {}", self.variant),
                })
            }
            _ => {}
        }
        match (family, self.cutoff) {
            (Family::Fourier, None) => {
                return Err(Error::Spec {
                    field: "cutoff",
                    reason: format!("is required for {}", self.variant),
                })
            }
            (Family::Fourier, Some(c)) => {
                check_cutoff(c).map_err(|e| Error::Spec {
                    field: "cutoff",
                    reason: e.to_string(),
                })?;
                if self.lookback < 2 {
                    return Err(Error::Spec {
                        field: "lookback",
                        reason: "must be at least 2 for Fourier variants".into(),
                    });
                }
            }
            (_, Some(_)) => {
                return Err(Error::Spec {
                    field: "cutoff",
                    reason: format!("must not be set for {}", self.variant),
                })
            }
            _ => {}
        }
        Ok(())
    }

    fn split_method(&self) -> Option<SplitMethod> {
        match self.variant.family() {
            Family::Plain => None,
            Family::MovingAverage => Some(SplitMethod::MovingAverage {
                kernel: self.kernel.expect("validated"),
            }),
            Family::Fourier => Some(SplitMethod::Fourier {
                cutoff: self.cutoff.expect("validated"),
            }),
        }
    }
}

static NEXT_REVISION: AtomicU64 = AtomicU64::new(1);

fn fresh_revision() -> u64 {
    NEXT_REVISION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    streams: Vec<CellParams>,
    readouts: Vec<Vec<f64>>,
    bias: f64,
    /// Changes whenever parameters may have changed; tapes record it.
    revision: u64,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.streams == other.streams
            && self.readouts == other.readouts
            && self.bias.to_bits() == other.bias.to_bits()
    }
}

/// Gradients shaped like a [`Model`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub streams: Vec<CellParams>,
    pub readouts: Vec<Vec<f64>>,
    pub bias: f64,
}

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> Self {
        let spec = &model.spec;
        Self {
            streams: (0..spec.variant.stream_count())
                .map(|_| CellParams::zeros(spec.variant.cell_kind(), spec.hidden, spec.input))
                .collect(),
            readouts: vec![vec![0.0; spec.hidden]; spec.variant.stream_count()],
            bias: 0.0,
        }
    }

    /// Flattened in the same order as [`Model::flat_params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.streams {
            for (_, b) in s.blocks() {
                out.extend_from_slice(b);
            }
        }
        for r in &self.readouts {
            out.extend_from_slice(r);
        }
        out.push(self.bias);
        out
    }
}

/// Per-stream input sequences (each `lookback × input`) after any decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    streams: Vec<Matrix>,
}

impl PreparedInput {
    pub fn streams(&self) -> &[Matrix] {
        &self.streams
    }
}

/// Everything [`Model::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    revision: u64,
    steps: Vec<Vec<CellState>>,
}

impl Tape {
    pub fn relu_preactivations(&self) -> Vec<f64> {
        self.steps
            .iter()
            .flatten()
            .flat_map(|s| s.relu_preactivations())
            .collect()
    }

    pub fn final_states(&self) -> Vec<&[f64]> {
        self.steps
            .iter()
            .map(|s| s.last().map_or(&[][..], |st| st.s.as_slice()))
            .collect()
    }
}

const STREAM_NAMES_PLAIN: [&str; 1] = ["main"];
const STREAM_NAMES_SPLIT: [&str; 2] = ["slow", "fast"];

impl Model {
    /// Builds a Glorot-initialized model from `spec.seed`. Equal specs give
    /// bit-identical models.
    pub fn build(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(spec.seed);
        let kind = spec.variant.cell_kind();
        let streams: Vec<CellParams> = (0..spec.variant.stream_count())
            .map(|_| CellParams::glorot(kind, spec.hidden, spec.input, &mut rng.fork()))
            .collect();
        let readouts = (0..spec.variant.stream_count())
            .map(|_| glorot_init(&mut rng.fork(), 1, spec.hidden).as_slice().to_vec())
            .collect();
        Ok(Self {
            spec,
            streams,
            readouts,
            bias: 0.0,
            revision: fresh_revision(),
        })
    }

    /// Same shapes as [`build`](Self::build) with every parameter zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let mut m = Self::build(spec)?;
        m.set_flat_params(&vec![0.0; m.parameter_count()])?;
        Ok(m)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn streams(&self) -> &[CellParams] {
        &self.streams
    }

    pub fn readouts(&self) -> &[Vec<f64>] {
        &self.readouts
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn stream_names(&self) -> &'static [&'static str] {
        if self.streams.len() == 1 {
            &STREAM_NAMES_PLAIN
        } else {
            &STREAM_NAMES_SPLIT
        }
    }

    /// Mutable access to cell parameters. Invalidates outstanding tapes.
    pub fn streams_mut(&mut self) -> &mut [CellParams] {
        self.revision = fresh_revision();
        &mut self.streams
    }

    pub fn readouts_mut(&mut self) -> &mut [Vec<f64>] {
        self.revision = fresh_revision();
        &mut self.readouts
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.revision = fresh_revision();
        self.bias = bias;
    }

    pub fn parameter_count(&self) -> usize {
        self.streams.iter().map(CellParams::param_count).sum::<usize>()
            + self.readouts.iter().map(Vec::len).sum::<usize>()
            + 1
    }

    /// Parameter count for a spec without building it.
    pub fn count_for(spec: &ModelSpec) -> usize {
        let n = spec.variant.stream_count();
        n * (cell_param_count(spec.variant.cell_kind(), spec.hidden, spec.input) + spec.hidden) + 1
    }

    /// `(name, rows, cols)` for every parameter block in flat order.
    pub fn param_layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (name, s) in self.stream_names().iter().zip(&self.streams) {
            for (block, r, c) in s.block_shapes() {
                out.push((format!("{name}.{block}"), r, c));
            }
        }
        for name in self.stream_names() {
            out.push((format!("{name}.w_out"), 1, self.spec.hidden));
        }
        out.push(("bias".to_string(), 1, 1));
        out
    }

    /// Human-readable name of flat coordinate `index`, e.g. `main.w_ss[1,2]`.
    pub fn coordinate_name(&self, index: usize) -> String {
        let mut offset = 0;
        for (name, r, c) in self.param_layout() {
            if index < offset + r * c {
                let local = index - offset;
                return if c == 1 {
                    format!("{name}[{local}]")
                } else {
                    format!("{name}[{},{}]", local / c, local % c)
                };
            }
            offset += r * c;
        }
        format!("<out of range {index}>")
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for s in &self.streams {
            for (_, b) in s.blocks() {
                out.extend_from_slice(b);
            }
        }
        for r in &self.readouts {
            out.extend_from_slice(r);
        }
        out.push(self.bias);
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::shape(
                format!("model with {} parameters", self.parameter_count()),
                format!("{} values", values.len()),
            ));
        }
        let mut rest = values;
        for s in &mut self.streams {
            for (_, b) in s.blocks_mut() {
                let (head, tail) = rest.split_at(b.len());
                b.copy_from_slice(head);
                rest = tail;
            }
        }
        for r in &mut self.readouts {
            let (head, tail) = rest.split_at(r.len());
            r.copy_from_slice(head);
            rest = tail;
        }
        self.bias = rest[0];
        self.revision = fresh_revision();
        Ok(())
    }

    /// Splits the window into per-stream sequences. The decomposition is a
    /// fixed linear map, so this can be computed once per window and reused.
    pub fn prepare(&self, window: &Matrix) -> Result<PreparedInput> {
        let (l, d) = (self.spec.lookback, self.spec.input);
        if window.shape() != (l, d) {
            return Err(Error::shape(
                format!("window {}x{}", window.rows(), window.cols()),
                format!("model expecting {l}x{d}"),
            ));
        }
        let Some(method) = self.spec.split_method() else {
            return Ok(PreparedInput {
                streams: vec![window.clone()],
            });
        };
        let mut slow = Matrix::zeros(l, d);
        let mut fast = Matrix::zeros(l, d);
        let mut column = vec![0.0; l];
        for c in 0..d {
            for (r, v) in column.iter_mut().enumerate() {
                *v = window.get(r, c);
            }
            let pair = decomp::split(&column, method)?;
            for r in 0..l {
                slow.set(r, c, pair.slow[r]);
                fast.set(r, c, pair.fast[r]);
            }
        }
        Ok(PreparedInput {
            streams: vec![slow, fast],
        })
    }

    pub fn forward(&self, window: &Matrix) -> Result<(f64, Tape)> {
        let prepared = self.prepare(window)?;
        self.forward_prepared(&prepared)
    }

    /// Prediction without the backward tape.
    pub fn predict(&self, window: &Matrix) -> Result<f64> {
        let input = self.prepare(window)?;
        let mut prediction = self.bias;
        let mut scratch = StepScratch::default();
        for ((params, seq), readout) in self.streams.iter().zip(&input.streams).zip(&self.readouts) {
            let mut s = vec![0.0; self.spec.hidden];
            for t in 0..self.spec.lookback {
                advance(params, &mut s, seq.row(t), &mut scratch);
            }
            prediction += dot(readout, &s);
        }
        Ok(prediction)
    }

    pub fn forward_prepared(&self, input: &PreparedInput) -> Result<(f64, Tape)> {
        if input.streams.len() != self.streams.len()
            || input
                .streams
                .iter()
                .any(|m| m.shape() != (self.spec.lookback, self.spec.input))
        {
            return Err(Error::shape(
                format!("{} streams of {}x{}", self.streams.len(), self.spec.lookback, self.spec.input),
                "prepared input".to_string(),
            ));
        }
        let mut prediction = self.bias;
        let mut steps = Vec::with_capacity(self.streams.len());
        for ((params, seq), readout) in self.streams.iter().zip(&input.streams).zip(&self.readouts) {
            let mut states: Vec<CellState> = Vec::with_capacity(self.spec.lookback);
            let zero = vec![0.0; self.spec.hidden];
            for t in 0..self.spec.lookback {
                let prev = states.last().map_or(zero.as_slice(), |s| s.s.as_slice());
                states.push(forward_unchecked(params, prev, seq.row(t)));
            }
            let last = states.last().map_or(zero.as_slice(), |s| s.s.as_slice());
            prediction += dot(readout, last);
            steps.push(states);
        }
        Ok((
            prediction,
            Tape {
                revision: self.revision,
                steps,
            },
        ))
    }

    pub fn backward(&self, tape: &Tape, d_prediction: f64) -> Result<ModelGrads> {
        let mut grads = ModelGrads::zeros_like(self);
        self.backward_acc(tape, d_prediction, &mut grads)?;
        Ok(grads)
    }

    /// Backpropagation through time, adding into `grads`.
    pub fn backward_acc(&self, tape: &Tape, d_prediction: f64, grads: &mut ModelGrads) -> Result<()> {
        if tape.revision != self.revision || tape.steps.len() != self.streams.len() {
            return Err(Error::StaleTape);
        }
        let h = self.spec.hidden;
        grads.bias += d_prediction;
        let zeros = vec![0.0; h];
        for (k, states) in tape.steps.iter().enumerate() {
            let params = &self.streams[k];
            let last = &states.last().ok_or(Error::StaleTape)?.s;
            for (g, &s) in grads.readouts[k].iter_mut().zip(last) {
                *g += d_prediction * s;
            }
            let mut d_next: Vec<f64> = self.readouts[k].iter().map(|w| w * d_prediction).collect();
            let mut d_prev = vec![0.0; h];
            for state in states.iter().rev() {
                d_prev.iter_mut().for_each(|x| *x = 0.0);
                backward_acc(params, state, &d_next, &zeros, &mut grads.streams[k], &mut d_prev, None)?;
                std::mem::swap(&mut d_next, &mut d_prev);
            }
        }
        Ok(())
    }
}
