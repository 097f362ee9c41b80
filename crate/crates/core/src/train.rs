//! Loss, optimizer, the mini-batch training loop and the finite-difference
//! gradient check.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Model, ModelGrads, PreparedInput, TrainMeta};
use crate::numerics::{Matrix, Rng};

/// Mean squared error.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            format!("{} predictions", pred.len()),
            format!("{} targets", target.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse of empty vectors".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 600,
            patience: 10,
            batch_size: 128,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what}")));
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("max_epochs, patience and batch_size must be at least 1");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(self.lr > 0.0 && self.eps > 0.0) {
            return bad("lr and eps must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            format!("{} parameters, {} moments", params.len(), state.m.len()),
            format!("{} gradients", grads.len()),
        ));
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Patience => "patience",
        }
    }
}

/// Patience bookkeeping. An epoch improves only if its loss beats the best
/// by at least [`EarlyStopping::MIN_DELTA`].
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_best: usize,
}

impl EarlyStopping {
    pub const MIN_DELTA: f64 = 1e-12;

    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records `loss` for 1-based `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss <= self.best - Self::MIN_DELTA {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    /// Per-epoch losses as tab-separated text. Wall time is left out so that
    /// reruns produce identical files; see [`timing_tsv`](Self::timing_tsv).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}", r.epoch, r.train_loss, r.val_loss);
        }
        let _ = writeln!(out, "# best_epoch\t{}", self.best_epoch);
        let _ = writeln!(out, "# best_val_loss\t{}", self.best_val_loss);
        let _ = writeln!(out, "# stop_reason\t{}", self.stop_reason.as_str());
        out
    }

    pub fn timing_tsv(&self) -> String {
        let mut out = String::from("epoch\tseconds\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{}\t{:.6}", r.epoch, r.seconds);
        }
        out
    }

    /// Mean epoch wall time excluding the first (warm-up) epoch. With a
    /// single epoch that one is used.
    pub fn mean_epoch_seconds(&self) -> f64 {
        let times: Vec<f64> = self.epochs.iter().map(|r| r.seconds).collect();
        let tail = if times.len() > 1 { &times[1..] } else { &times[..] };
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: Model,
    pub history: TrainHistory,
    pub checkpoint: Checkpoint,
}

fn prepare_all(model: &Model, set: &WindowSet) -> Result<Vec<PreparedInput>> {
    set.windows.iter().map(|w| model.prepare(&w.inputs)).collect()
}

fn predict_prepared(model: &Model, inputs: &[PreparedInput]) -> Result<Vec<f64>> {
    inputs.iter().map(|p| Ok(model.forward_prepared(p)?.0)).collect()
}

/// Normalized-scale MSE of `model` on `set`.
pub fn loss_on(model: &Model, set: &WindowSet) -> Result<f64> {
    let inputs = prepare_all(model, set)?;
    mse(&predict_prepared(model, &inputs)?, &set.targets())
}

/// Mini-batch Adam on squared error with early stopping on validation loss.
/// The returned model carries the best-validation parameters.
pub fn fit(model: Model, train: &WindowSet, val: &WindowSet, cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    let mut model = model;
    let train_inputs = prepare_all(&model, train)?;
    let val_inputs = prepare_all(&model, val)?;
    let train_targets = train.targets();
    let val_targets = val.targets();

    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut adam = AdamState::new(model.parameter_count());
    let mut params = model.flat_params();
    let mut best_params = params.clone();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut members = batch.to_vec();
            members.sort_unstable();
            let scale = 2.0 / members.len() as f64;
            let mut grads = ModelGrads::zeros_like(&model);
            for &i in &members {
                let (pred, tape) = model.forward_prepared(&train_inputs[i])?;
                let resid = pred - train_targets[i];
                loss_sum += resid * resid;
                model.backward_acc(&tape, scale * resid, &mut grads)?;
            }
            adam_step(&mut params, &grads.to_flat(), &mut adam, cfg)?;
            model.set_flat_params(&params)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = mse(&predict_prepared(&model, &val_inputs)?, &val_targets)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            let loss = if train_loss.is_finite() { val_loss } else { train_loss };
            return Err(Error::Divergence { epoch, loss });
        }
        if stopper.observe(epoch, val_loss) {
            best_params.clone_from(&params);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
        if stopper.should_stop() {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    model.set_flat_params(&best_params)?;
    let history = TrainHistory {
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        stop_reason,
        epochs,
    };
    let meta = TrainMeta {
        epochs_run: history.epochs_run(),
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
        seed: cfg.seed,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let checkpoint = Checkpoint::new(model.clone(), train.normalizer.clone(), meta);
    Ok(FitOutcome {
        model,
        history,
        checkpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    pub kink_guard: f64,
    pub tolerance: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            kink_guard: 1e-3,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Coordinate holding `max_rel_error`, e.g. `main.w_ss[0,1]`.
    pub worst: Option<String>,
    pub checked: usize,
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: max masked relative error {:.3e}{} ({} coordinates checked, {} skipped near ReLU kinks)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.worst.as_ref().map_or(String::new(), |w| format!(" at {w}")),
            self.checked,
            self.skipped
        )
    }
}

/// Floor on the relative-error denominator so exact zeros compare cleanly.
const REL_FLOOR: f64 = 1e-7;

fn half_squared_error(model: &Model, input: &PreparedInput, target: f64) -> Result<(f64, Vec<f64>)> {
    let (pred, tape) = model.forward_prepared(input)?;
    Ok((0.5 * (pred - target).powi(2), tape.relu_preactivations()))
}

/// Central-difference check of the analytic gradient of `½ (ŷ - y)²`.
pub fn gradcheck(model: &Model, window: &Matrix, target: f64, opts: GradcheckOptions) -> Result<GradcheckReport> {
    let (pred, tape) = model.forward(window)?;
    let analytic = model.backward(&tape, pred - target)?.to_flat();
    gradcheck_against(model, window, target, &analytic, opts)
}

/// As [`gradcheck`], comparing against a caller-supplied gradient.
pub fn gradcheck_against(
    model: &Model,
    window: &Matrix,
    target: f64,
    analytic: &[f64],
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let n = model.parameter_count();
    if analytic.len() != n {
        return Err(Error::shape(format!("{n} parameters"), format!("{} gradient entries", analytic.len())));
    }
    let input = model.prepare(window)?;
    let (_, base_pre) = half_squared_error(model, &input, target)?;
    let near_kink: Vec<usize> = (0..base_pre.len())
        .filter(|&i| base_pre[i].abs() < opts.kink_guard)
        .collect();

    let base = model.flat_params();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
        tolerance: opts.tolerance,
    };
    for i in 0..n {
        params[i] = base[i] + opts.step;
        probe.set_flat_params(&params)?;
        let (plus, pre_plus) = half_squared_error(&probe, &input, target)?;
        params[i] = base[i] - opts.step;
        probe.set_flat_params(&params)?;
        let (minus, pre_minus) = half_squared_error(&probe, &input, target)?;
        params[i] = base[i];

        // A coordinate that moves a near-kink pre-activation sees a
        // non-smooth loss; finite differences say nothing there.
        let touches_kink = near_kink
            .iter()
            .any(|&k| pre_plus[k] != base_pre[k] || pre_minus[k] != base_pre[k]);
        if touches_kink {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some(model.coordinate_name(i));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, Variant};
    use crate::data::{TimeSeriesFrame, Window};
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn window(l: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_vec(l, 5, (0..l * 5).map(|_| rng.next_f64()).collect()).unwrap()
    }

    fn spec(v: Variant, h: usize, l: usize, seed: u64) -> ModelSpec {
        let mut s = ModelSpec::new(v, h, l, 1, seed);
        if s.kernel.is_some() {
            s.kernel = Some(3);
        }
        s
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn mse_is_quadratic(r in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let zeros = vec![0.0; r.len()];
            let doubled: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
            let a = mse(&r, &zeros).unwrap();
            let b = mse(&doubled, &zeros).unwrap();
            prop_assert!((b - 4.0 * a).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        st.m = vec![0.5, 0.5];
        st.v = vec![0.25, 0.25];
        st.t = 3;
        let before_m = st.m.clone();
        adam_step(&mut p, &[0.0, 0.0], &mut st, &cfg).unwrap();
        // Moments decay; the parameter still moves by the remaining momentum.
        assert!(st.m.iter().zip(&before_m).all(|(a, b)| a.abs() < b.abs()));
        let mut fresh = vec![1.0, -2.0];
        adam_step(&mut fresh, &[0.0, 0.0], &mut AdamState::new(2), &cfg).unwrap();
        assert_eq!(fresh, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        // At t = 1, m̂ = g and v̂ = g², so the step is lr · g / (|g| + ε).
        let cfg = TrainConfig::default();
        let g = [0.3, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        adam_step(&mut p, &g, &mut AdamState::new(3), &cfg).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((pi - expected).abs() < 1e-15);
        }
        assert!(adam_step(&mut p, &g[..2], &mut AdamState::new(3), &cfg).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut rng = Rng::new(4);
            let mut p = vec![0.1; 8];
            let mut st = AdamState::new(8);
            for _ in 0..50 {
                let g: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
                adam_step(&mut p, &g, &mut st, &cfg).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn early_stopping_on_rising_loss() {
        let patience = 10;
        let mut es = EarlyStopping::new(patience);
        let mut stopped_at = None;
        for epoch in 1..=100 {
            es.observe(epoch, epoch as f64);
            if es.should_stop() {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(1 + patience));
        assert_eq!(es.best_epoch, 1);
    }

    #[test]
    fn early_stopping_needs_real_improvement() {
        let mut es = EarlyStopping::new(3);
        assert!(es.observe(1, 1.0));
        assert!(!es.observe(2, 1.0 - 1e-13));
        assert!(es.observe(3, 1.0 - 1e-11));
    }

    fn linear_frame(n: usize, seed: u64) -> TimeSeriesFrame {
        // AR(1)-style series with a daily input: learnable and non-constant.
        let mut rng = Rng::new(seed);
        let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let stamps: Vec<_> = (0..n).map(|i| start + chrono::Duration::hours(i as i64)).collect();
        let mut c = 500.0;
        let mut co2 = Vec::with_capacity(n);
        for i in 0..n {
            let drive = (i as f64 * std::f64::consts::TAU / 24.0).sin();
            c = 0.8 * c + 0.2 * (600.0 + 150.0 * drive) + 5.0 * rng.normal();
            co2.push(c);
        }
        let t_in: Vec<f64> = (0..n).map(|i| 21.0 + (i % 24) as f64 * 0.1).collect();
        let t_out: Vec<f64> = (0..n).map(|i| 10.0 + (i % 12) as f64 * 0.5).collect();
        TimeSeriesFrame::from_measurements(stamps, co2, t_in, t_out).unwrap()
    }

    fn toy_sets(l: usize) -> (WindowSet, WindowSet) {
        let frame = linear_frame(600, 1);
        let ds = crate::data::build_dataset(&frame, l, 1, &crate::data::SplitConfig::default()).unwrap();
        (ds.splits.train, ds.splits.val)
    }

    #[test]
    fn fit_learns_and_restores_best() {
        let (train, val) = toy_sets(6);
        let model = Model::build(ModelSpec::new(Variant::SsRnn, 4, 6, 1, 3)).unwrap();
        let before = loss_on(&model, &train).unwrap();
        let cfg = TrainConfig {
            max_epochs: 40,
            patience: 5,
            batch_size: 32,
            lr: 5e-3,
            ..TrainConfig::default()
        };
        let out = fit(model, &train, &val, &cfg).unwrap();
        assert!(loss_on(&out.model, &train).unwrap() < before);
        let best = out.history.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.history.best_val_loss, best);
        assert_eq!(loss_on(&out.model, &val).unwrap().to_bits(), best.to_bits());
        assert_eq!(out.checkpoint.meta.best_epoch, out.history.best_epoch);
        assert_eq!(out.checkpoint.normalizer, train.normalizer);
    }

    #[test]
    fn fit_is_deterministic() {
        let (train, val) = toy_sets(6);
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = || {
            let m = Model::build(ModelSpec::new(Variant::DSsGru, 3, 6, 1, 8).with_kernel(3)).unwrap();
            fit(m, &train, &val, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history.to_tsv(), b.history.to_tsv());
        assert_eq!(a.checkpoint.to_text(), b.checkpoint.to_text());
    }

    #[test]
    fn patience_equal_to_max_epochs_runs_out() {
        let (train, val) = toy_sets(4);
        let cfg = TrainConfig {
            max_epochs: 3,
            patience: 3,
            ..TrainConfig::default()
        };
        let m = Model::build(ModelSpec::new(Variant::SsGru, 2, 4, 1, 1)).unwrap();
        let out = fit(m, &train, &val, &cfg).unwrap();
        assert_eq!(out.history.stop_reason, StopReason::MaxEpochs);
        assert_eq!(out.history.epochs_run(), 3);
    }

    #[test]
    fn divergence_is_reported() {
        let (train, val) = toy_sets(4);
        let mut m = Model::build(ModelSpec::new(Variant::SsRnn, 2, 4, 1, 1)).unwrap();
        m.set_bias(f64::MAX);
        let err = fit(m, &train, &val, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err:?}");
    }

    #[test]
    fn fit_rejects_empty_sets() {
        let (train, val) = toy_sets(4);
        let empty = WindowSet {
            windows: Vec::<Window>::new(),
            ..val.clone()
        };
        let m = Model::build(ModelSpec::new(Variant::SsRnn, 2, 4, 1, 1)).unwrap();
        assert!(fit(m, &train, &empty, &TrainConfig::default()).is_err());
    }

    #[test]
    fn gradcheck_passes_for_every_variant() {
        for v in Variant::ALL {
            for seed in 0..4 {
                let m = Model::build(spec(v, 3, 6, seed)).unwrap();
                let r = gradcheck(&m, &window(6, seed + 100), 0.3, GradcheckOptions::default()).unwrap();
                assert!(r.passed(), "{v} seed {seed}: {}", r.summary());
                assert!(r.checked > 0);
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_caught_and_named() {
        // Pick a seed whose recurrent weights actually receive gradient.
        let (m, w, mut grads) = (0..50)
            .find_map(|seed| {
                let m = Model::build(spec(Variant::SsRnn, 3, 6, seed)).unwrap();
                let w = window(6, seed + 1);
                let (pred, tape) = m.forward(&w).unwrap();
                let g = m.backward(&tape, pred - 0.2).unwrap();
                let live = g.streams[0].w_ss.as_slice().iter().any(|x| x.abs() > 1e-4);
                live.then_some((m, w, g))
            })
            .expect("some seed has a live recurrent state");
        grads.streams[0].w_ss.as_mut_slice().iter_mut().for_each(|g| *g *= 1.1);
        let report = gradcheck_against(&m, &w, 0.2, &grads.to_flat(), GradcheckOptions::default()).unwrap();
        assert!(!report.passed(), "{}", report.summary());
        let worst = report.worst.unwrap();
        assert!(worst.starts_with("main.w_ss["), "{worst}");
    }

    #[test]
    fn near_kink_coordinates_are_skipped() {
        // Tiny cell weights hold every pre-activation within the guard of 0.
        let mut m = Model::build(spec(Variant::SsGru, 3, 4, 0)).unwrap();
        let cell_params: usize = m.streams().iter().map(|s| s.param_count()).sum();
        let mut flat = m.flat_params();
        flat[..cell_params].iter_mut().for_each(|p| *p *= 1e-6);
        m.set_flat_params(&flat).unwrap();
        let r = gradcheck(&m, &window(4, 1), 1.0, GradcheckOptions::default()).unwrap();
        assert!(r.skipped > 2 * r.checked, "{}", r.summary());
        assert_eq!(r.skipped + r.checked, m.parameter_count());
        assert!(r.summary().contains(&format!("{} skipped", r.skipped)));
    }
}
