//! Training: negative-free cosine alignment between the online network's
//! predictions and the target network's projections, symmetrized over the
//! two views, with an exponential moving average target.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Propagator, Tape, Var};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::FeatureMatrix;
use crate::model::{encoder_propagator, forward, BoundParams, Encoded, ModelConfig, NetworkParams, Role};
use crate::views::{augmentation_rng, feature_dropout_with, Structure};

/// Temperature of the softmax contrastive loss used when the moving-average
/// target is ablated.
pub const NEGATIVE_SAMPLING_TEMPERATURE: f64 = 0.5;

/// Component switches for the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Replace the moving-average target with in-batch negatives.
    pub no_slow: bool,
    /// Use the original adjacency in place of every semantic graph.
    pub no_semantic_graphs: bool,
    /// Use unmasked top-k feature similarity in place of semantic graphs.
    pub topk_only: bool,
    /// Drop the semantic alignment terms.
    pub no_semantic_loss: bool,
    /// Drop the holistic alignment term.
    pub no_holistic_loss: bool,
    /// Equal motif weights `1/T`.
    pub uniform_w: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub drop_rate: f64,
    /// Draw fresh feature masks every step; otherwise the step-0 masks are
    /// reused throughout.
    pub resample_augmentation: bool,
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub predictor_layers: usize,
    pub beta: f64,
    pub motif_weights: Vec<f64>,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 1.0,
            tau: 0.996,
            base_lr: 1e-3,
            warmup_steps: 100,
            total_steps: 1000,
            weight_decay: 1e-5,
            drop_rate: 0.3,
            resample_augmentation: true,
            hidden_dim: 512,
            gcn_layers: 1,
            predictor_layers: 2,
            beta: 1.0,
            motif_weights: vec![0.7, 0.1, 0.2],
            seed: 0,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Input(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Input("warmup_steps must not exceed total_steps".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Input("gamma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::Input("drop_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Motif weights after applying the `uniform_w` ablation.
    pub fn effective_motif_weights(&self, t: usize) -> Vec<f64> {
        if self.ablation.uniform_w {
            vec![1.0 / t as f64; t]
        } else {
            self.motif_weights.clone()
        }
    }

    pub fn model_config(&self, in_dim: usize, t: usize) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden_dim: self.hidden_dim,
            gcn_layers: self.gcn_layers,
            predictor_layers: self.predictor_layers,
            num_semantic: t,
            beta: self.beta,
            motif_weights: self.effective_motif_weights(t),
        }
    }

    /// Loss weights applied to the objective.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            semantic: if self.ablation.no_semantic_loss { 0.0 } else { self.gamma },
            holistic: if self.ablation.no_holistic_loss { 0.0 } else { 1.0 },
            combine: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub semantic: f64,
    pub holistic: f64,
    pub combine: f64,
}

impl LossWeights {
    pub fn joint(gamma: f64) -> Self {
        LossWeights { semantic: gamma, holistic: 1.0, combine: 1.0 }
    }
}

/// `−(1/N) Σ_v cos(p_v, q_v)`
pub fn cosine_pair_loss(tape: &mut Tape<'_>, p: Var, q: Var) -> Result<Var> {
    let pn = tape.row_l2_normalize(p)?;
    let qn = tape.row_l2_normalize(q)?;
    let d = tape.rowwise_dot(pn, qn)?;
    let m = tape.mean(d)?;
    tape.scale(m, -1.0)
}

/// Softmax contrastive loss: row `v` of `p` should pick row `v` of `q` among
/// all rows, by cosine similarity over the temperature.
pub fn negative_sampling_loss(tape: &mut Tape<'_>, p: Var, q: Var, temperature: f64) -> Result<Var> {
    let pn = tape.row_l2_normalize(p)?;
    let qn = tape.row_l2_normalize(q)?;
    let s = tape.matmul_t(pn, qn)?;
    let s = tape.scale(s, 1.0 / temperature)?;
    tape.softmax_xent_diag(s)
}

/// Individual terms of one joint loss, as tape handles.
#[derive(Debug, Clone)]
pub struct JointTerms {
    pub holistic: Var,
    pub combine: Var,
    pub semantic: Vec<Var>,
    pub total: Var,
}

/// `γ Σ_i L_i^semantic + L_holistic + L_combine` between the online
/// predictions `p` and target projections `q` (indices `0`, `1..=T`, `T+1`).
pub fn joint_loss(tape: &mut Tape<'_>, p: &[Var], q: &[Var], w: LossWeights) -> Result<JointTerms> {
    joint_with(tape, p, q, w, |t, a, b| cosine_pair_loss(t, a, b))
}

fn joint_with(
    tape: &mut Tape<'_>,
    p: &[Var],
    q: &[Var],
    w: LossWeights,
    mut pair: impl FnMut(&mut Tape<'_>, Var, Var) -> Result<Var>,
) -> Result<JointTerms> {
    if p.len() != q.len() || p.len() < 2 {
        return Err(Error::shape("joint_loss", format!("{} predictions, {} projections", p.len(), q.len())));
    }
    let last = p.len() - 1;
    let holistic = pair(tape, p[0], q[0])?;
    let combine = pair(tape, p[last], q[last])?;
    let semantic = (1..last).map(|i| pair(tape, p[i], q[i])).collect::<Result<Vec<_>>>()?;
    let mut total = tape.scale(holistic, w.holistic)?;
    let c = tape.scale(combine, w.combine)?;
    total = tape.add(total, c)?;
    for &s in &semantic {
        let s = tape.scale(s, w.semantic)?;
        total = tape.add(total, s)?;
    }
    Ok(JointTerms { holistic, combine, semantic, total })
}

/// `ξ ← τ ξ + (1 − τ) θ` over the tensors the two networks share.
pub fn ema_update(target: &mut NetworkParams, online: &NetworkParams, tau: f64) -> Result<()> {
    let src = online.tensors();
    let dst = target.tensors_mut();
    if dst.len() > src.len() {
        return Err(Error::shape("ema_update", format!("{} target tensors, {} online", dst.len(), src.len())));
    }
    for (x, t) in dst.into_iter().zip(src) {
        if x.shape() != t.shape() {
            return Err(Error::shape("ema_update", format!("{:?} vs {:?}", x.shape(), t.shape())));
        }
        for (xv, tv) in x.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *xv = tau * *xv + (1.0 - tau) * tv;
        }
    }
    Ok(())
}

/// Linear warmup to `base_lr` over `warmup` steps, then cosine decay to zero
/// at `total`.
pub fn lr_schedule(step: usize, base_lr: f64, warmup: usize, total: usize) -> f64 {
    if step <= warmup {
        if warmup == 0 {
            return base_lr;
        }
        step as f64 * base_lr / warmup as f64
    } else {
        let span = (total - warmup) as f64;
        let progress = ((step - warmup) as f64 / span).min(1.0);
        base_lr * (1.0 + (progress * std::f64::consts::PI).cos()) * 0.5
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(params: &NetworkParams, weight_decay: f64) -> Self {
        let zeros: Vec<Matrix> = params.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &[Matrix], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let it = p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m.as_mut_slice()).zip(v.as_mut_slice());
            for (((pv, &gv), mv), vv) in it {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let update = (*mv / bc1) / ((*vv / bc2).sqrt() + self.eps);
                *pv -= lr * (update + self.weight_decay * *pv);
            }
        }
    }
}

/// Normalized propagation operators of both views.
#[derive(Debug, Clone)]
pub struct ViewOperators {
    pub view1: Vec<Propagator>,
    pub view2: Vec<Propagator>,
}

impl ViewOperators {
    pub fn new(view1: &[Structure], view2: &[Structure]) -> Result<Self> {
        if view1.len() != view2.len() || view1.is_empty() {
            return Err(Error::shape("ViewOperators", "views must carry the same non-zero number of structures"));
        }
        Ok(ViewOperators {
            view1: view1.iter().map(encoder_propagator).collect(),
            view2: view2.iter().map(encoder_propagator).collect(),
        })
    }

    pub fn num_semantic(&self) -> usize {
        self.view1.len() - 1
    }
}

/// Values of every loss term for one step, summed over both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub holistic: f64,
    pub combine: f64,
    pub semantic: Vec<f64>,
    pub total: f64,
}

/// Result of building the symmetrized objective on a tape.
pub struct StepGraph {
    pub loss: Var,
    pub online: BoundParams,
    pub target: Option<BoundParams>,
    pub breakdown: LossBreakdown,
}

/// Records the full symmetrized objective on `tape`: the online network on
/// each view is aligned to the target network on the other view. Target
/// outputs are detached, so only online leaves receive gradients.
#[allow(clippy::too_many_arguments)]
pub fn symmetrized_objective<'a>(
    tape: &mut Tape<'a>,
    ops: &'a ViewOperators,
    x1: &Matrix,
    x2: &Matrix,
    online: &NetworkParams,
    target: &NetworkParams,
    cfg: &ModelConfig,
    weights: LossWeights,
    negative_sampling: bool,
) -> Result<StepGraph> {
    let ob = BoundParams::bind(tape, online, true);
    let f1 = tape.constant(x1.clone());
    let f2 = tape.constant(x2.clone());
    let on1 = forward(tape, &ops.view1, f1, &ob, 0, cfg)?;
    let on2 = forward(tape, &ops.view2, f2, &ob, 1, cfg)?;
    let preds = |e: &Encoded| e.p.clone().ok_or_else(|| Error::Contract("online network must carry a predictor".into()));

    let (a, b, target_bound) = if negative_sampling {
        let pair = |t: &mut Tape<'_>, p: Var, q: Var| negative_sampling_loss(t, p, q, NEGATIVE_SAMPLING_TEMPERATURE);
        let a = joint_with(tape, &preds(&on1)?, &on2.q, weights, pair)?;
        let b = joint_with(tape, &preds(&on2)?, &on1.q, weights, pair)?;
        (a, b, None)
    } else {
        let tb = BoundParams::bind(tape, target, true);
        let tg2 = forward(tape, &ops.view2, f2, &tb, 1, cfg)?;
        let tg1 = forward(tape, &ops.view1, f1, &tb, 0, cfg)?;
        let q2: Vec<Var> = tg2.q.iter().map(|&v| tape.detach(v)).collect();
        let q1: Vec<Var> = tg1.q.iter().map(|&v| tape.detach(v)).collect();
        let a = joint_loss(tape, &preds(&on1)?, &q2, weights)?;
        let b = joint_loss(tape, &preds(&on2)?, &q1, weights)?;
        (a, b, Some(tb))
    };
    let loss = tape.add(a.total, b.total)?;
    let breakdown = LossBreakdown {
        holistic: tape.scalar(a.holistic) + tape.scalar(b.holistic),
        combine: tape.scalar(a.combine) + tape.scalar(b.combine),
        semantic: a.semantic.iter().zip(&b.semantic).map(|(&x, &y)| tape.scalar(x) + tape.scalar(y)).collect(),
        total: tape.scalar(loss),
    };
    Ok(StepGraph { loss, online: ob, target: target_bound, breakdown })
}

/// Loss value and gradients with respect to every online tensor.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grads(
    ops: &ViewOperators,
    x1: &Matrix,
    x2: &Matrix,
    online: &NetworkParams,
    target: &NetworkParams,
    cfg: &ModelConfig,
    weights: LossWeights,
    negative_sampling: bool,
) -> Result<(LossBreakdown, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let sg = symmetrized_objective(&mut tape, ops, x1, x2, online, target, cfg, weights, negative_sampling)?;
    tape.backward(sg.loss)?;
    let grads = sg.online.leaves.iter().map(|&v| tape.grad(v)).collect();
    Ok((sg.breakdown, grads))
}

/// One row of the loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub trace: Vec<StepRecord>,
    /// Combined embeddings of the online network on view 1 with clean
    /// features.
    pub embeddings: Matrix,
}

/// Runs the full schedule. Structures are fixed; features are re-masked per
/// step with generators keyed by `(seed, step, view)`.
pub fn train(view1: &[Structure], view2: &[Structure], x: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let ops = ViewOperators::new(view1, view2)?;
    let t = ops.num_semantic();
    if ops.view1.iter().chain(&ops.view2).any(|p| p.n() != x.n()) {
        return Err(Error::shape("train", "structures and features disagree on node count"));
    }
    let mcfg = cfg.model_config(x.dim(), t);
    mcfg.validate()?;
    let mut online = NetworkParams::init(&mcfg, Role::Online, cfg.seed)?;
    let mut target = NetworkParams::init(&mcfg, Role::Target, cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
    let mut opt = AdamW::new(&online, cfg.weight_decay);
    let weights = cfg.loss_weights();
    let mut trace = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let key = if cfg.resample_augmentation { step as u64 } else { 0 };
        let x1 = feature_dropout_with(x, cfg.drop_rate, &mut augmentation_rng(cfg.seed, key, 0))?;
        let x2 = feature_dropout_with(x, cfg.drop_rate, &mut augmentation_rng(cfg.seed, key, 1))?;
        let (loss, grads) = loss_and_grads(&ops, x1.matrix(), x2.matrix(), &online, &target, &mcfg, weights, cfg.ablation.no_slow)?;
        if !loss.total.is_finite() {
            return Err(Error::Numeric { op: "symmetrized_loss" });
        }
        let lr = lr_schedule(step, cfg.base_lr, cfg.warmup_steps, cfg.total_steps);
        opt.step(&mut online, &grads, lr);
        if !cfg.ablation.no_slow {
            ema_update(&mut target, &online, cfg.tau)?;
        }
        log::debug!("step {step} lr {lr:.3e} loss {:.6}", loss.total);
        trace.push(StepRecord { step, lr, loss });
    }

    let embeddings = crate::model::embed(&ops.view1, x.matrix(), &online, 0, &mcfg)?;
    Ok(TrainOutput { online, target, trace, embeddings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_loss_cases() {
        let mut t = Tape::new();
        let p = t.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap());
        let l = cosine_pair_loss(&mut t, p, p).unwrap();
        assert!((t.scalar(l) + 1.0).abs() < 1e-12);
        let neg = t.scale(p, -1.0).unwrap();
        let l = cosine_pair_loss(&mut t, p, neg).unwrap();
        assert!((t.scalar(l) - 1.0).abs() < 1e-12);
        let a = t.constant(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let b = t.constant(Matrix::from_rows(&[vec![0.0, 2.0]]).unwrap());
        let l = cosine_pair_loss(&mut t, a, b).unwrap();
        assert_eq!(t.scalar(l), 0.0);
    }

    #[test]
    fn joint_loss_aligned_and_gamma_zero() {
        let mut t = Tape::new();
        let vs: Vec<Var> = (0..4).map(|i| t.constant(Matrix::filled(3, 2, i as f64 + 1.0))).collect();
        let j = joint_loss(&mut t, &vs, &vs, LossWeights::joint(0.5)).unwrap();
        // T = 2: −(γT + 2)
        assert!((t.scalar(j.total) + 3.0).abs() < 1e-12);
        let j0 = joint_loss(&mut t, &vs, &vs, LossWeights::joint(0.0)).unwrap();
        assert!((t.scalar(j0.total) - (t.scalar(j0.holistic) + t.scalar(j0.combine))).abs() < 1e-15);
    }

    #[test]
    fn joint_loss_two_node_hand_computation() {
        // T = 1, rows chosen so each cosine is easy: index 0 aligned (cos 1),
        // index 1 orthogonal (cos 0), index 2 cos = 1/√2 on both rows.
        let mut t = Tape::new();
        let p = vec![
            t.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()),
            t.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()),
            t.constant(Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap()),
        ];
        let q = vec![
            t.constant(Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap()),
            t.constant(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()),
            t.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap()),
        ];
        let j = joint_loss(&mut t, &p, &q, LossWeights::joint(2.0)).unwrap();
        let expect = -1.0 + 2.0 * 0.0 - 1.0 / 2f64.sqrt();
        assert!((t.scalar(j.total) - expect).abs() < 1e-12);
    }

    #[test]
    fn ema_cases() {
        let c = ModelConfig { in_dim: 2, hidden_dim: 2, gcn_layers: 1, predictor_layers: 1, num_semantic: 0, beta: 1.0, motif_weights: vec![] };
        let mut online = NetworkParams::init(&c, Role::Online, 1).unwrap();
        let mut target = NetworkParams::init(&c, Role::Target, 2).unwrap();
        let before = target.clone();
        ema_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, before);
        ema_update(&mut target, &online, 0.0).unwrap();
        for (a, b) in target.tensors().iter().zip(online.tensors()) {
            assert_eq!(*a, b);
        }
        for m in online.tensors_mut() {
            m.as_mut_slice().fill(0.0);
        }
        for m in target.tensors_mut() {
            m.as_mut_slice().fill(1.0);
        }
        ema_update(&mut target, &online, 0.99).unwrap();
        assert!(target.tensors().iter().all(|m| m.as_slice().iter().all(|&v| v == 0.99)));
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(0, 1e-3, 10, 100), 0.0);
        assert_eq!(lr_schedule(10, 1e-3, 10, 100), 1e-3);
        assert_eq!(lr_schedule(100, 1e-3, 10, 100), 0.0);
        assert!((lr_schedule(55, 1e-3, 10, 100) - 0.5e-3).abs() < 1e-15);
        assert_eq!(lr_schedule(0, 1e-3, 0, 10), 1e-3);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.tau = 1.5;
        assert!(c.validate().is_err());
        let c = TrainConfig { warmup_steps: 10, total_steps: 5, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        let c = TrainConfig { ablation: Ablation { uniform_w: true, ..Ablation::default() }, ..TrainConfig::default() };
        assert_eq!(c.effective_motif_weights(4), vec![0.25; 4]);
    }
}
