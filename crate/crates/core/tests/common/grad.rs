//! Finite-difference helpers and random model instances for gradient checks.

use fsgcl::model::{ModelConfig, NetworkParams, Role};
use fsgcl::trainer::{loss_and_grads, LossWeights, ViewOperators};
use fsgcl::views::Structure;
use fsgcl::{Matrix, SparseGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
/// Denominator floor of the relative error: gradients below it are held to
/// an absolute error of `FLOOR * TOL`, comfortably above rounding noise of a
/// difference quotient at this step.
pub const FLOOR: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

/// Central difference with one Richardson step, `(4 D(h/2) − D(h)) / 3`,
/// which cancels the `h²` term. The small step keeps probes from crossing
/// PReLU kinks that sit close to the evaluation point in tiny models.
pub fn richardson(f: impl Fn(f64) -> f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(STEP / 2.0) - d(STEP)) / 3.0
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub struct Instance {
    pub ops: ViewOperators,
    pub x1: Matrix,
    pub x2: Matrix,
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub cfg: ModelConfig,
    pub weights: LossWeights,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=10);
    let d = rng.gen_range(2..=8);
    let t = rng.gen_range(0..=2);
    let f = rng.gen_range(2..=6);
    let g = super::random_graph(n, 0.4, seed);
    let u = super::dense_ppr(&g, 0.2);
    // semantic graphs are asymmetric: random directed entries. Weights stay
    // positive; a non-positive degree would zero a row and put the loss on
    // the norm floor, where it is not differentiable at this step size.
    let semantic: Vec<SparseGraph> = (0..t)
        .map(|_| {
            let trip = (0..n * 2)
                .map(|_| (rng.gen_range(0..n) as u32, rng.gen_range(0..n) as u32, rng.gen_range(0.05..1.0)))
                .filter(|(a, b, _)| a != b)
                .collect();
            SparseGraph::from_triplets(n, trip).unwrap()
        })
        .collect();
    let mut v1 = vec![Structure::Sparse(g)];
    v1.extend(semantic.iter().cloned().map(Structure::Sparse));
    let mut v2 = vec![Structure::Dense(u)];
    v2.extend(semantic.into_iter().map(Structure::Sparse));
    let mut w: Vec<f64> = (0..t).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let cfg = ModelConfig {
        in_dim: f,
        hidden_dim: d,
        gcn_layers: rng.gen_range(1..=2),
        predictor_layers: rng.gen_range(1..=2),
        num_semantic: t,
        beta: rng.gen_range(0.5..1.5),
        motif_weights: w,
    };
    let online = NetworkParams::init(&cfg, Role::Online, seed).unwrap();
    let target = NetworkParams::init(&cfg, Role::Target, seed + 1000).unwrap();
    Instance {
        ops: ViewOperators::new(&v1, &v2).unwrap(),
        x1: random_matrix(n, f, &mut rng),
        x2: random_matrix(n, f, &mut rng),
        online,
        target,
        cfg,
        weights: LossWeights::joint(rng.gen_range(0.0..2.0)),
    }
}


/// Worst relative error between analytic and numeric gradients of the
/// symmetrized objective over every online parameter entry.
pub fn objective_gradient_error(inst: &Instance, negative_sampling: bool) -> f64 {
    let loss_at = |p: &NetworkParams| {
        loss_and_grads(&inst.ops, &inst.x1, &inst.x2, p, &inst.target, &inst.cfg, inst.weights, negative_sampling).unwrap().0.total
    };
    let (_, grads) =
        loss_and_grads(&inst.ops, &inst.x1, &inst.x2, &inst.online, &inst.target, &inst.cfg, inst.weights, negative_sampling).unwrap();
    assert_eq!(grads.len(), inst.online.tensors().len());
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        for e in 0..g.as_slice().len() {
            let fd = richardson(|h| {
                let mut moved = inst.online.clone();
                moved.tensors_mut()[k].as_mut_slice()[e] += h;
                loss_at(&moved)
            });
            worst = worst.max(rel_err(g.as_slice()[e], fd));
        }
    }
    worst
}
