//! State-space recurrent cells and their exact backward passes.
//!
//! Both cells first propose a state change from the previous state and the
//! current input, then form the next state from that change and the previous
//! state:
//!
//! ```text
//! SS-RNN:  dS  = relu(W_dSS·S + W_dSU·U + b_dS)
//!          S'  = relu(W_SdS·dS + W_SS·S + b_S)
//!
//! SS-GRU:  d~S = relu(W_dSS·S + W_dSU·U + b_dS)
//!          Γ   = sigmoid(W_uS·S + W_uU·U + b_u)
//!          dS  = Γ⊙d~S + (1-Γ)⊙S
//!          S'  = relu(W_SdS·dS + W_SS·S + b_S)
//! ```
//!
//! Weights are stored as `out × in` matrices and applied as `W·v`, which is the
//! transpose of the row-vector `v·W` notation with the same parameters.

use crate::error::{Error, Result};
use crate::numerics::{glorot_init, relu, sigmoid, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    SsRnn,
    SsGru,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_us: Matrix,
    pub w_uu: Matrix,
    pub b_u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub w_dss: Matrix,
    pub w_dsu: Matrix,
    pub b_ds: Vec<f64>,
    pub w_sds: Matrix,
    pub w_ss: Matrix,
    pub b_s: Vec<f64>,
    pub gate: Option<GateParams>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, hidden: usize, input: usize) -> Self {
        let gate = (kind == CellKind::SsGru).then(|| GateParams {
            w_us: Matrix::zeros(hidden, hidden),
            w_uu: Matrix::zeros(hidden, input),
            b_u: vec![0.0; hidden],
        });
        Self {
            w_dss: Matrix::zeros(hidden, hidden),
            w_dsu: Matrix::zeros(hidden, input),
            b_ds: vec![0.0; hidden],
            w_sds: Matrix::zeros(hidden, hidden),
            w_ss: Matrix::zeros(hidden, hidden),
            b_s: vec![0.0; hidden],
            gate,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(kind: CellKind, hidden: usize, input: usize, rng: &mut Rng) -> Self {
        let w_dss = glorot_init(rng, hidden, hidden);
        let w_dsu = glorot_init(rng, hidden, input);
        let w_sds = glorot_init(rng, hidden, hidden);
        let w_ss = glorot_init(rng, hidden, hidden);
        let gate = (kind == CellKind::SsGru).then(|| GateParams {
            w_us: glorot_init(rng, hidden, hidden),
            w_uu: glorot_init(rng, hidden, input),
            b_u: vec![0.0; hidden],
        });
        Self {
            w_dss,
            w_dsu,
            b_ds: vec![0.0; hidden],
            w_sds,
            w_ss,
            b_s: vec![0.0; hidden],
            gate,
        }
    }

    pub fn kind(&self) -> CellKind {
        if self.gate.is_some() {
            CellKind::SsGru
        } else {
            CellKind::SsRnn
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_s.len()
    }

    pub fn input(&self) -> usize {
        self.w_dsu.cols()
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Named parameter blocks in a fixed order (the flat/serialized layout).
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![
            ("w_dss", self.w_dss.as_slice()),
            ("w_dsu", self.w_dsu.as_slice()),
            ("b_ds", &self.b_ds),
            ("w_sds", self.w_sds.as_slice()),
            ("w_ss", self.w_ss.as_slice()),
            ("b_s", &self.b_s),
        ];
        if let Some(g) = &self.gate {
            out.push(("w_us", g.w_us.as_slice()));
            out.push(("w_uu", g.w_uu.as_slice()));
            out.push(("b_u", &g.b_u));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("w_dss", self.w_dss.as_mut_slice()),
            ("w_dsu", self.w_dsu.as_mut_slice()),
            ("b_ds", &mut self.b_ds),
            ("w_sds", self.w_sds.as_mut_slice()),
            ("w_ss", self.w_ss.as_mut_slice()),
            ("b_s", &mut self.b_s),
        ];
        if let Some(g) = &mut self.gate {
            out.push(("w_us", g.w_us.as_mut_slice()));
            out.push(("w_uu", g.w_uu.as_mut_slice()));
            out.push(("b_u", &mut g.b_u));
        }
        out
    }

    /// `(rows, cols)` of every block, in [`blocks`](Self::blocks) order.
    pub fn block_shapes(&self) -> Vec<(&'static str, usize, usize)> {
        let h = self.hidden();
        let d = self.input();
        let mut out = vec![
            ("w_dss", h, h),
            ("w_dsu", h, d),
            ("b_ds", h, 1),
            ("w_sds", h, h),
            ("w_ss", h, h),
            ("b_s", h, 1),
        ];
        if self.gate.is_some() {
            out.extend([("w_us", h, h), ("w_uu", h, d), ("b_u", h, 1)]);
        }
        out
    }

    fn check_inputs(&self, s: &[f64], u: &[f64]) -> Result<()> {
        if s.len() != self.hidden() {
            return Err(Error::shape(
                format!("cell with hidden size {}", self.hidden()),
                format!("state of length {}", s.len()),
            ));
        }
        if u.len() != self.input() {
            return Err(Error::shape(
                format!("cell with input size {}", self.input()),
                format!("input of length {}", u.len()),
            ));
        }
        Ok(())
    }
}

pub fn cell_param_count(kind: CellKind, hidden: usize, input: usize) -> usize {
    let (h, d) = (hidden, input);
    match kind {
        CellKind::SsRnn => 3 * h * h + h * d + 2 * h,
        CellKind::SsGru => 4 * h * h + 2 * h * d + 3 * h,
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub s_prev: Vec<f64>,
    pub u: Vec<f64>,
    /// Pre-activation of the proposed change.
    pub pre_change: Vec<f64>,
    /// relu(pre_change): dS for SS-RNN, d~S for SS-GRU.
    pub candidate: Vec<f64>,
    /// Γ for SS-GRU.
    pub gate: Option<Vec<f64>>,
    /// Pre-activation of the next state.
    pub pre_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
    pub cache: Option<StepCache>,
}

impl CellState {
    /// ReLU pre-activations of this step, used by the gradient checker's kink guard.
    pub fn relu_preactivations(&self) -> impl Iterator<Item = f64> + '_ {
        self.cache
            .iter()
            .flat_map(|c| c.pre_change.iter().chain(&c.pre_state).copied())
    }
}

pub fn ssrnn_step(p: &CellParams, s: &[f64], u: &[f64]) -> Result<CellState> {
    if p.gate.is_some() {
        return Err(Error::InvalidArgument(
            "ssrnn_step called with gated (SS-GRU) parameters".into(),
        ));
    }
    p.check_inputs(s, u)?;
    Ok(forward_unchecked(p, s, u))
}

pub fn ssgru_step(p: &CellParams, s: &[f64], u: &[f64]) -> Result<CellState> {
    if p.gate.is_none() {
        return Err(Error::InvalidArgument(
            "ssgru_step needs gate parameters".into(),
        ));
    }
    p.check_inputs(s, u)?;
    Ok(forward_unchecked(p, s, u))
}

/// One step of whichever cell `p` describes.
pub fn step(p: &CellParams, s: &[f64], u: &[f64]) -> Result<CellState> {
    p.check_inputs(s, u)?;
    Ok(forward_unchecked(p, s, u))
}

pub(crate) fn forward_unchecked(p: &CellParams, s: &[f64], u: &[f64]) -> CellState {
    let h = p.hidden();

    let mut pre_change = p.b_ds.clone();
    p.w_dss.matvec_acc(s, &mut pre_change);
    p.w_dsu.matvec_acc(u, &mut pre_change);
    let candidate: Vec<f64> = pre_change.iter().map(|&x| relu(x)).collect();

    let (ds, gate) = match &p.gate {
        None => (candidate.clone(), None),
        Some(g) => {
            let mut pre_gate = g.b_u.clone();
            g.w_us.matvec_acc(s, &mut pre_gate);
            g.w_uu.matvec_acc(u, &mut pre_gate);
            let gamma: Vec<f64> = pre_gate.iter().map(|&x| sigmoid(x)).collect();
            let ds = (0..h)
                .map(|i| gamma[i] * candidate[i] + (1.0 - gamma[i]) * s[i])
                .collect();
            (ds, Some(gamma))
        }
    };

    let mut pre_state = p.b_s.clone();
    p.w_sds.matvec_acc(&ds, &mut pre_state);
    p.w_ss.matvec_acc(s, &mut pre_state);
    let next: Vec<f64> = pre_state.iter().map(|&x| relu(x)).collect();

    CellState {
        s: next,
        ds,
        cache: Some(StepCache {
            s_prev: s.to_vec(),
            u: u.to_vec(),
            pre_change,
            candidate,
            gate,
            pre_state,
        }),
    }
}

/// Reusable buffers for [`advance`].
#[derive(Debug, Clone, Default)]
pub(crate) struct StepScratch {
    pre: Vec<f64>,
    gate: Vec<f64>,
    ds: Vec<f64>,
}

/// Same arithmetic as [`forward_unchecked`] without recording a cache:
/// overwrites `s` with the next state.
pub(crate) fn advance(p: &CellParams, s: &mut [f64], u: &[f64], scratch: &mut StepScratch) {
    let StepScratch { pre, gate, ds } = scratch;
    pre.clone_from(&p.b_ds);
    p.w_dss.matvec_acc(s, pre);
    p.w_dsu.matvec_acc(u, pre);
    ds.clear();
    ds.extend(pre.iter().map(|&x| relu(x)));
    if let Some(g) = &p.gate {
        gate.clone_from(&g.b_u);
        g.w_us.matvec_acc(s, gate);
        g.w_uu.matvec_acc(u, gate);
        for i in 0..ds.len() {
            let gamma = sigmoid(gate[i]);
            ds[i] = gamma * ds[i] + (1.0 - gamma) * s[i];
        }
    }
    pre.clone_from(&p.b_s);
    p.w_sds.matvec_acc(ds, pre);
    p.w_ss.matvec_acc(s, pre);
    for (si, &x) in s.iter_mut().zip(pre.iter()) {
        *si = relu(x);
    }
}

/// Gradients of one step: one entry per parameter plus the incoming state and input.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrads {
    pub params: CellParams,
    pub d_s_prev: Vec<f64>,
    pub d_u: Vec<f64>,
}

/// Backward pass of a single step given `∂L/∂S_{t+1}` and `∂L/∂dS_{t+1}`.
pub fn cell_backward(
    p: &CellParams,
    state: &CellState,
    d_s_next: &[f64],
    d_ds_next: &[f64],
) -> Result<CellGrads> {
    let mut grads = CellParams::zeros(p.kind(), p.hidden(), p.input());
    let mut d_s_prev = vec![0.0; p.hidden()];
    let mut d_u = vec![0.0; p.input()];
    backward_acc(p, state, d_s_next, d_ds_next, &mut grads, &mut d_s_prev, Some(&mut d_u))?;
    Ok(CellGrads {
        params: grads,
        d_s_prev,
        d_u,
    })
}

/// Accumulating form of [`cell_backward`]: adds parameter gradients into
/// `grads` and the state/input gradients into `d_s_prev` / `d_u`.
pub fn backward_acc(
    p: &CellParams,
    state: &CellState,
    d_s_next: &[f64],
    d_ds_next: &[f64],
    grads: &mut CellParams,
    d_s_prev: &mut [f64],
    mut d_u: Option<&mut [f64]>,
) -> Result<()> {
    let cache = state.cache.as_ref().ok_or(Error::StaleCache("no cache"))?;
    let h = p.hidden();
    if cache.gate.is_some() != p.gate.is_some() {
        return Err(Error::StaleCache("gate presence differs from parameters"));
    }
    if cache.s_prev.len() != h || cache.u.len() != p.input() || cache.pre_state.len() != h {
        return Err(Error::StaleCache("cache shapes differ from parameters"));
    }
    if d_s_next.len() != h || d_ds_next.len() != h || d_s_prev.len() != h {
        return Err(Error::shape(
            format!("hidden size {h}"),
            format!("upstream gradients of length {}/{}", d_s_next.len(), d_ds_next.len()),
        ));
    }
    if grads.kind() != p.kind() || grads.hidden() != h || grads.input() != p.input() {
        return Err(Error::shape("cell parameters", "gradient accumulator"));
    }

    let s = &cache.s_prev;
    let u = &cache.u;

    // Next-state ReLU; the subgradient at exactly 0 is taken as 0.
    let delta_state: Vec<f64> = d_s_next
        .iter()
        .zip(&cache.pre_state)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    grads.w_sds.add_outer(&delta_state, &state.ds);
    grads.w_ss.add_outer(&delta_state, s);
    add_assign(&mut grads.b_s, &delta_state);

    let mut d_ds = d_ds_next.to_vec();
    p.w_sds.matvec_t_acc(&delta_state, &mut d_ds);
    p.w_ss.matvec_t_acc(&delta_state, d_s_prev);

    let d_candidate: Vec<f64> = match (&p.gate, &cache.gate, &mut grads.gate) {
        (Some(gp), Some(gamma), Some(gg)) => {
            let mut delta_gate = vec![0.0; h];
            let mut d_cand = vec![0.0; h];
            for i in 0..h {
                let d_gamma = d_ds[i] * (cache.candidate[i] - s[i]);
                delta_gate[i] = d_gamma * gamma[i] * (1.0 - gamma[i]);
                d_cand[i] = d_ds[i] * gamma[i];
                d_s_prev[i] += d_ds[i] * (1.0 - gamma[i]);
            }
            gg.w_us.add_outer(&delta_gate, s);
            gg.w_uu.add_outer(&delta_gate, u);
            add_assign(&mut gg.b_u, &delta_gate);
            gp.w_us.matvec_t_acc(&delta_gate, d_s_prev);
            if let Some(d_u) = d_u.as_deref_mut() {
                gp.w_uu.matvec_t_acc(&delta_gate, d_u);
            }
            d_cand
        }
        (None, None, None) => d_ds,
        _ => return Err(Error::StaleCache("gate presence differs from accumulator")),
    };

    let delta_change: Vec<f64> = d_candidate
        .iter()
        .zip(&cache.pre_change)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    grads.w_dss.add_outer(&delta_change, s);
    grads.w_dsu.add_outer(&delta_change, u);
    add_assign(&mut grads.b_ds, &delta_change);
    p.w_dss.matvec_t_acc(&delta_change, d_s_prev);
    if let Some(d_u) = d_u {
        p.w_dsu.matvec_t_acc(&delta_change, d_u);
    }
    Ok(())
}

fn add_assign(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}
