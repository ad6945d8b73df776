//! Semantic-wise graph encoder with projector and predictor heads.
//!
//! Each network keeps one GCN per (view, structure) pair. For structure
//! `i ∈ 0..=T` the encoder output is `Z_i`; `Z_{T+1} = Z_0 + β Σ w_i Z_i`
//! combines them. Every one of the `T+2` embeddings goes through its own
//! projector, and in the online network through its own predictor stack.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Propagator, Tape, Var};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::sym_normalized_adjacency;
use crate::views::Structure;

pub const PRELU_INIT: f64 = 0.25;
/// Format tag written into parameter snapshot manifests.
pub const PARAMS_FORMAT: &str = "fsgcl-params-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub predictor_layers: usize,
    /// Number of semantic graphs `T`.
    pub num_semantic: usize,
    pub beta: f64,
    /// `w_i`, one per semantic graph, shared by both views.
    pub motif_weights: Vec<f64>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.gcn_layers == 0 {
            return Err(Error::Input("input dim, hidden dim and GCN layer count must be positive".into()));
        }
        if self.motif_weights.len() != self.num_semantic {
            return Err(Error::Input(format!(
                "{} motif weights for {} semantic graphs",
                self.motif_weights.len(),
                self.num_semantic
            )));
        }
        Ok(())
    }

    pub fn num_embeddings(&self) -> usize {
        self.num_semantic + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Online,
    Target,
}

/// `prelu(x · weight + bias)`
#[derive(Debug, Clone, PartialEq)]
pub struct Perceptron {
    pub weight: Matrix,
    pub bias: Matrix,
    pub slope: Matrix,
}

impl Perceptron {
    fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Perceptron { weight: glorot(d_in, d_out, rng), bias: Matrix::zeros(1, d_out), slope: Matrix::filled(1, 1, PRELU_INIT) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoder {
    pub weights: Vec<Matrix>,
    pub slopes: Vec<Matrix>,
}

/// All trainable tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// `encoders[view][structure]`
    pub encoders: Vec<Vec<GcnEncoder>>,
    /// One per embedding index `0..=T+1`.
    pub projectors: Vec<Perceptron>,
    /// `predictor[index][layer]`, online network only.
    pub predictor: Option<Vec<Vec<Perceptron>>>,
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sizes agree")
}

impl NetworkParams {
    pub fn init(cfg: &ModelConfig, role: Role, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden_dim;
        let encoders = (0..2)
            .map(|_| {
                (0..=cfg.num_semantic)
                    .map(|_| {
                        let weights = (0..cfg.gcn_layers)
                            .map(|l| glorot(if l == 0 { cfg.in_dim } else { d }, d, &mut rng))
                            .collect();
                        GcnEncoder { weights, slopes: vec![Matrix::filled(1, 1, PRELU_INIT); cfg.gcn_layers] }
                    })
                    .collect()
            })
            .collect();
        let projectors = (0..cfg.num_embeddings()).map(|_| Perceptron::init(d, d, &mut rng)).collect();
        let predictor = match role {
            Role::Online => Some(
                (0..cfg.num_embeddings())
                    .map(|_| (0..cfg.predictor_layers).map(|_| Perceptron::init(d, d, &mut rng)).collect())
                    .collect(),
            ),
            Role::Target => None,
        };
        Ok(NetworkParams { encoders, projectors, predictor })
    }

    pub fn role(&self) -> Role {
        if self.predictor.is_some() {
            Role::Online
        } else {
            Role::Target
        }
    }

    /// Every tensor with a stable name, in a fixed order. Predictor tensors
    /// come last.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (m, view) in self.encoders.iter().enumerate() {
            for (i, enc) in view.iter().enumerate() {
                for (l, (w, s)) in enc.weights.iter().zip(&enc.slopes).enumerate() {
                    out.push((format!("encoder.view{m}.graph{i}.layer{l}.weight"), w));
                    out.push((format!("encoder.view{m}.graph{i}.layer{l}.slope"), s));
                }
            }
        }
        for (i, p) in self.projectors.iter().enumerate() {
            out.push((format!("projector.{i}.weight"), &p.weight));
            out.push((format!("projector.{i}.bias"), &p.bias));
            out.push((format!("projector.{i}.slope"), &p.slope));
        }
        if let Some(pred) = &self.predictor {
            for (i, layers) in pred.iter().enumerate() {
                for (l, p) in layers.iter().enumerate() {
                    out.push((format!("predictor.{i}.layer{l}.weight"), &p.weight));
                    out.push((format!("predictor.{i}.layer{l}.bias"), &p.bias));
                    out.push((format!("predictor.{i}.layer{l}.slope"), &p.slope));
                }
            }
        }
        out
    }

    /// Mutable tensors in the same order as [`NetworkParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for view in &mut self.encoders {
            for enc in view {
                for (w, s) in enc.weights.iter_mut().zip(enc.slopes.iter_mut()) {
                    out.push(w);
                    out.push(s);
                }
            }
        }
        for p in &mut self.projectors {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
            out.push(&mut p.slope);
        }
        if let Some(pred) = &mut self.predictor {
            for layers in pred {
                for p in layers {
                    out.push(&mut p.weight);
                    out.push(&mut p.bias);
                    out.push(&mut p.slope);
                }
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named().into_iter().map(|(_, m)| m).collect()
    }

    /// Number of tensors shared with a target network (everything except the
    /// predictor).
    pub fn shared_len(&self) -> usize {
        let pred = self.predictor.as_ref().map_or(0, |p| p.iter().map(|l| l.len() * 3).sum());
        self.named().len() - pred
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|m| m.rows() * m.cols()).sum()
    }

    /// Writes `<stem>.bin` (little-endian f64, tensors concatenated in
    /// [`NetworkParams::named`] order) and `<stem>.json` (names, shapes,
    /// offsets).
    pub fn save(&self, bin_path: &Path, manifest_path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.num_scalars() * 8);
        let mut entries = Vec::new();
        let mut offset = 0usize;
        for (name, m) in self.named() {
            entries.push(TensorEntry { name, rows: m.rows(), cols: m.cols(), offset });
            offset += m.rows() * m.cols();
            for v in m.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = SnapshotManifest { format: PARAMS_FORMAT.into(), role: format!("{:?}", self.role()).to_lowercase(), tensors: entries };
        fs::write(bin_path, bytes).map_err(|e| Error::io(bin_path, e))?;
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Input(e.to_string()))?;
        fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))
    }

    /// Restores tensor values into an already-shaped parameter set.
    pub fn load_into(&mut self, bin_path: &Path, manifest_path: &Path) -> Result<()> {
        let json = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: SnapshotManifest = serde_json::from_str(&json).map_err(|e| Error::Input(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != PARAMS_FORMAT {
            return Err(Error::Input(format!("unsupported snapshot format `{}`", manifest.format)));
        }
        let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
        let names: Vec<String> = self.named().into_iter().map(|(n, _)| n).collect();
        if names.len() != manifest.tensors.len() {
            return Err(Error::Input(format!("snapshot has {} tensors, model expects {}", manifest.tensors.len(), names.len())));
        }
        for ((entry, name), slot) in manifest.tensors.iter().zip(&names).zip(self.tensors_mut()) {
            if &entry.name != name || (entry.rows, entry.cols) != slot.shape() {
                return Err(Error::Input(format!("snapshot tensor `{}` does not match `{name}`", entry.name)));
            }
            let start = entry.offset * 8;
            let end = start + entry.rows * entry.cols * 8;
            let chunk = bytes.get(start..end).ok_or_else(|| Error::Input("snapshot binary is truncated".into()))?;
            for (v, b) in slot.as_mut_slice().iter_mut().zip(chunk.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().unwrap());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotManifest {
    format: String,
    role: String,
    tensors: Vec<TensorEntry>,
}

/// Normalized propagation operator `D̃_r^{-1/2} (S + I) D̃_c^{-1/2}` for one
/// encoder structure.
pub fn encoder_propagator(s: &Structure) -> Propagator {
    match s {
        Structure::Sparse(g) => Propagator::sparse(sym_normalized_adjacency(g, true)),
        Structure::Dense(u) => {
            let n = u.rows();
            let mut m = u.clone();
            for i in 0..n {
                m.set(i, i, m.get(i, i) + 1.0);
            }
            let inv_sqrt = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
            let dr: Vec<f64> = (0..n).map(|i| inv_sqrt(m.row(i).iter().sum())).collect();
            let mut dc = vec![0.0; n];
            for i in 0..n {
                for (c, v) in dc.iter_mut().zip(m.row(i)) {
                    *c += v;
                }
            }
            let dc: Vec<f64> = dc.into_iter().map(inv_sqrt).collect();
            for i in 0..n {
                for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                    *v *= dr[i] * dc[j];
                }
            }
            Propagator::Dense(m)
        }
    }
}

/// Network parameters placed on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    encoders: Vec<Vec<(Vec<Var>, Vec<Var>)>>,
    projectors: Vec<[Var; 3]>,
    predictor: Option<Vec<Vec<[Var; 3]>>>,
    /// Leaves in [`NetworkParams::named`] order.
    pub leaves: Vec<Var>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape<'_>, params: &NetworkParams, trainable: bool) -> Self {
        let mut leaves = Vec::new();
        let mut put = |tape: &mut Tape<'_>, m: &Matrix| {
            let v = if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) };
            leaves.push(v);
            v
        };
        let encoders = params
            .encoders
            .iter()
            .map(|view| {
                view.iter()
                    .map(|enc| {
                        let mut ws = Vec::new();
                        let mut ss = Vec::new();
                        for (w, s) in enc.weights.iter().zip(&enc.slopes) {
                            ws.push(put(tape, w));
                            ss.push(put(tape, s));
                        }
                        (ws, ss)
                    })
                    .collect()
            })
            .collect();
        let projectors = params.projectors.iter().map(|p| [put(tape, &p.weight), put(tape, &p.bias), put(tape, &p.slope)]).collect();
        let predictor = params.predictor.as_ref().map(|pred| {
            pred.iter()
                .map(|layers| layers.iter().map(|p| [put(tape, &p.weight), put(tape, &p.bias), put(tape, &p.slope)]).collect())
                .collect()
        });
        BoundParams { encoders, projectors, predictor, leaves }
    }
}

/// Stacked GCN propagation: `h ← prelu(P · h · W_l)` per layer.
pub fn gcn_encode<'a>(tape: &mut Tape<'a>, prop: &'a Propagator, x: Var, weights: &[Var], slopes: &[Var]) -> Result<Var> {
    if prop.n() != tape.value(x).rows() {
        return Err(Error::shape("gcn_encode", format!("structure over {} nodes, features have {} rows", prop.n(), tape.value(x).rows())));
    }
    let mut h = x;
    for (&w, &s) in weights.iter().zip(slopes) {
        let hw = tape.matmul(h, w)?;
        let agg = tape.spmm(prop, hw)?;
        h = tape.prelu(agg, s)?;
    }
    Ok(h)
}

/// `holistic + β Σ w_i semantics[i]`
pub fn combine(tape: &mut Tape<'_>, holistic: Var, semantics: &[Var], weights: &[f64], beta: f64) -> Result<Var> {
    if semantics.len() != weights.len() {
        return Err(Error::shape("combine", format!("{} embeddings, {} weights", semantics.len(), weights.len())));
    }
    let mut acc = holistic;
    for (&z, &w) in semantics.iter().zip(weights) {
        let term = tape.scale(z, beta * w)?;
        acc = tape.add(acc, term)?;
    }
    Ok(acc)
}

fn perceptron(tape: &mut Tape<'_>, x: Var, p: &[Var; 3]) -> Result<Var> {
    let h = tape.matmul(x, p[0])?;
    let h = tape.add_row_bias(h, p[1])?;
    tape.prelu(h, p[2])
}

/// Projection head for embedding index `i`.
pub fn project(tape: &mut Tape<'_>, z: Var, bound: &BoundParams, i: usize) -> Result<Var> {
    let p = bound.projectors.get(i).ok_or_else(|| Error::Contract(format!("no projector for index {i}")))?;
    perceptron(tape, z, p)
}

/// Predictor stack for embedding index `i`; online network only.
pub fn predict(tape: &mut Tape<'_>, q: Var, bound: &BoundParams, i: usize) -> Result<Var> {
    let pred = bound.predictor.as_ref().ok_or_else(|| Error::Contract("the target network has no predictor".into()))?;
    let layers = pred.get(i).ok_or_else(|| Error::Contract(format!("no predictor for index {i}")))?;
    let mut h = q;
    for p in layers {
        h = perceptron(tape, h, p)?;
    }
    Ok(h)
}

/// Tape handles of one forward pass. All vectors have `T+2` entries; index
/// `T+1` is the combined embedding.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub z: Vec<Var>,
    pub q: Vec<Var>,
    pub p: Option<Vec<Var>>,
}

/// Full forward of one network on one view. `view` selects the encoder set
/// (0 for the first view, 1 for the second); `props` holds the normalized
/// operators of that view's structures.
pub fn forward<'a>(
    tape: &mut Tape<'a>,
    props: &'a [Propagator],
    features: Var,
    bound: &BoundParams,
    view: usize,
    cfg: &ModelConfig,
) -> Result<Encoded> {
    if props.len() != cfg.num_semantic + 1 {
        return Err(Error::shape("forward", format!("{} structures for T = {}", props.len(), cfg.num_semantic)));
    }
    let encs = bound.encoders.get(view).ok_or_else(|| Error::Contract(format!("no encoders for view {view}")))?;
    let mut z = Vec::with_capacity(cfg.num_embeddings());
    for (prop, (ws, ss)) in props.iter().zip(encs) {
        z.push(gcn_encode(tape, prop, features, ws, ss)?);
    }
    let combined = combine(tape, z[0], &z[1..], &cfg.motif_weights, cfg.beta)?;
    z.push(combined);
    let q = z.iter().enumerate().map(|(i, &zi)| project(tape, zi, bound, i)).collect::<Result<Vec<_>>>()?;
    let p = match bound.predictor {
        Some(_) => Some(q.iter().enumerate().map(|(i, &qi)| predict(tape, qi, bound, i)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    Ok(Encoded { z, q, p })
}

/// Materialized forward results.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBundle {
    pub z: Vec<Matrix>,
    pub q: Vec<Matrix>,
    pub p: Option<Vec<Matrix>>,
}

/// Gradient-free forward; parameters enter as constants.
pub fn forward_values(props: &[Propagator], features: &Matrix, params: &NetworkParams, view: usize, cfg: &ModelConfig) -> Result<EncodedBundle> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, false);
    let x = tape.constant(features.clone());
    let enc = forward(&mut tape, props, x, &bound, view, cfg)?;
    let grab = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
    Ok(EncodedBundle { z: grab(&enc.z), q: grab(&enc.q), p: enc.p.as_deref().map(grab) })
}

/// Combined embedding `Z_{T+1}` of a network on one view.
pub fn embed(props: &[Propagator], features: &Matrix, params: &NetworkParams, view: usize, cfg: &ModelConfig) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, false);
    let x = tape.constant(features.clone());
    let encs = &bound.encoders[view];
    let mut z = Vec::new();
    for (prop, (ws, ss)) in props.iter().zip(encs) {
        z.push(gcn_encode(&mut tape, prop, x, ws, ss)?);
    }
    let c = combine(&mut tape, z[0], &z[1..], &cfg.motif_weights, cfg.beta)?;
    Ok(tape.value(c).clone())
}
