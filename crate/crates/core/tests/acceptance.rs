//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Runs with its own harness so that every line is printed even when the
//! output of passing tests is captured.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::grad::{objective_gradient_error, random_instance, TOL as GRAD_TOL};
use common::{brute_force_cooccurrence, brute_force_instances, dense_ppr, random_graph};
use fsgcl::autodiff::Tape;
use fsgcl::model::{ModelConfig, NetworkParams, Role};
use fsgcl::motif::{cooccurrence, enumerate_instances, nonzero_mask, MotifPattern};
use fsgcl::pipeline::{
    cmd_ablate, cmd_eval, cmd_preprocess, cmd_synth, cmd_train, load_preprocessed, EvalInputs, EvalMode, PipelineConfig,
    EMBEDDINGS_FILE,
};
use fsgcl::trainer::{cosine_pair_loss, ema_update, joint_loss, lr_schedule, Ablation, LossWeights};
use fsgcl::views::ppr_diffusion;
use fsgcl::{Matrix, SparseGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PPR_TOL: f64 = 1e-8;
const COSINE_TOL: f64 = 1e-12;
const CASE_STUDY_SEEDS: [u64; 3] = [0, 1, 2];
const CASE_STUDY_DIM: usize = 16;
const CASE_STUDY_STEPS: usize = 500;
const CASE_STUDY_BUDGET_SECS: f64 = 900.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn motif_oracle() -> Verdict {
    let patterns = [MotifPattern::triangle(), MotifPattern::clique4(), MotifPattern::cycle4()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    let mut instances = 0;
    for trial in 0..50u64 {
        let n = rng.gen_range(4..=30);
        let p = [0.1, 0.3, 0.5][trial as usize % 3];
        let g = random_graph(n, p, 1000 + trial);
        for pat in &patterns {
            let oracle = brute_force_instances(&g, pat.node_count(), pat.edges());
            let got = enumerate_instances(&g, pat);
            instances += got.len();
            let tuples_ok = got.len() == oracle.len()
                && oracle.iter().enumerate().all(|(i, (t, pairs))| got.tuple(i) == t.as_slice() && &got.matched_pairs(i) == pairs);
            let counts_ok = cooccurrence(&got, &g).graph().to_dense() == brute_force_cooccurrence(n, &oracle);
            if !(tuples_ok && counts_ok) {
                mismatches.push(format!("graph {trial} {}", pat.name()));
            }
        }
    }
    verdict(mismatches.is_empty(), format!("50 graphs x 3 patterns, {instances} instances, mismatches {mismatches:?}"))
}

fn ppr_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let n = rng.gen_range(2..=200);
        let alpha = [0.1, 0.2, 0.5][trial as usize % 3];
        let g = random_graph(n, rng.gen_range(0.01..0.2), 2000 + trial);
        let u = ppr_diffusion(&g, alpha).expect("valid alpha");
        worst = worst.max(u.max_abs_diff(&dense_ppr(&g, alpha)));
    }
    verdict(worst < PPR_TOL, format!("20 graphs, max |error| {worst:.2e} (tolerance {PPR_TOL:.0e})"))
}

fn gradients() -> Verdict {
    let worst = (0..20).map(|s| objective_gradient_error(&random_instance(s), false)).fold(0.0, f64::max);
    verdict(worst < GRAD_TOL, format!("20 instances, worst relative error {worst:.2e} (tolerance {GRAD_TOL:.0e})"))
}

fn ema_and_schedule() -> Verdict {
    let cfg = ModelConfig { in_dim: 5, hidden_dim: 6, gcn_layers: 2, predictor_layers: 2, num_semantic: 3, beta: 1.0, motif_weights: vec![0.2, 0.3, 0.5] };
    let online = NetworkParams::init(&cfg, Role::Online, 7).unwrap();
    let mut target = NetworkParams::init(&cfg, Role::Target, 8).unwrap();
    let before = target.clone();
    let tau = 0.996;
    ema_update(&mut target, &online, tau).unwrap();
    let ema_exact = target
        .tensors()
        .iter()
        .zip(before.tensors())
        .zip(online.tensors())
        .all(|((t, b), o)| t.as_slice().iter().zip(b.as_slice()).zip(o.as_slice()).all(|((&t, &b), &o)| t == tau * b + (1.0 - tau) * o));
    let (base, warm, total) = (1e-3, 100, 1000);
    let ends = [lr_schedule(0, base, warm, total), lr_schedule(warm, base, warm, total), lr_schedule(total, base, warm, total)];
    let sched_exact = ends == [0.0, base, 0.0];
    verdict(ema_exact && sched_exact, format!("EMA bitwise {ema_exact}, schedule endpoints {ends:?}"))
}

fn loss_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_align: f64 = 0.0;
    let mut bound_violations = 0;
    for trial in 0..200 {
        let (n, d) = (rng.gen_range(1..20), rng.gen_range(1..10));
        // magnitudes from 1e-6 to 1e6
        let scale = 10f64.powi(rng.gen_range(-6..=6));
        let p = Matrix::from_vec(n, d, (0..n * d).map(|_| scale * rng.gen_range(0.01..1.0) * if rng.gen() { 1.0 } else { -1.0 }).collect()).unwrap();
        let mut tape = Tape::new();
        let pv = tape.constant(p);
        let l = cosine_pair_loss(&mut tape, pv, pv).unwrap();
        worst_align = worst_align.max((tape.scalar(l) + 1.0).abs());

        let t = trial % 4;
        let gamma = rng.gen_range(0.0..3.0);
        let mk = |rng: &mut ChaCha8Rng| Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let ps: Vec<_> = (0..t + 2).map(|_| tape.constant(mk(&mut rng))).collect();
        let qs: Vec<_> = (0..t + 2).map(|_| tape.constant(mk(&mut rng))).collect();
        let j = joint_loss(&mut tape, &ps, &qs, LossWeights::joint(gamma)).unwrap();
        let bound = gamma * t as f64 + 2.0;
        if tape.scalar(j.total).abs() > bound + 1e-12 {
            bound_violations += 1;
        }
    }
    verdict(
        worst_align <= COSINE_TOL && bound_violations == 0,
        format!("max |cos loss(p,p) + 1| {worst_align:.1e} (tolerance {COSINE_TOL:.0e}), joint-bound violations {bound_violations}/200"),
    )
}

fn run_dir(name: &str) -> tempfile::TempDir {
    tempfile::Builder::new().prefix(name).tempdir().expect("temporary directory")
}

fn synthetic_config(dir: &Path, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default().with_seed(seed);
    cfg.out_dir = dir.to_path_buf();
    cfg.train.hidden_dim = CASE_STUDY_DIM;
    cfg.eval.mode = EvalMode::Mlknn;
    cfg
}

fn semantic_invariants() -> Verdict {
    let mut checked = 0;
    let mut problems = Vec::new();
    let mut check = |cfg: &PipelineConfig, what: &str| {
        cmd_preprocess(cfg).expect("preprocess");
        let pre = load_preprocessed(cfg).expect("reload");
        for (pat, a) in cfg.patterns().unwrap().iter().zip(&pre.semantic) {
            let r = nonzero_mask(&cooccurrence(&enumerate_instances(&pre.graph, pat), &pre.graph));
            let rows_ok = (0..a.n()).all(|u| a.degree(u) <= cfg.semantic.k);
            let support_ok = a.entries().all(|(u, v, _)| r.has_edge(u, v));
            checked += 1;
            if !(rows_ok && support_ok) {
                problems.push(format!("{what}/{}", pat.name()));
            }
        }
    };
    for seed in CASE_STUDY_SEEDS {
        let dir = run_dir("sem");
        let cfg = synthetic_config(dir.path(), seed);
        cmd_synth(&cfg).expect("synth");
        check(&cfg, &format!("synthetic seed {seed}"));
    }
    // a dense random graph with K larger than most neighbourhoods
    let dir = run_dir("sem");
    let g = random_graph(80, 0.2, 6);
    write_dataset(dir.path(), &g, 4, 6);
    let mut cfg = synthetic_config(dir.path(), 6);
    cfg.semantic.k = 12;
    check(&cfg, "random graph");
    verdict(problems.is_empty(), format!("{checked} semantic graphs checked, violations {problems:?}"))
}

fn write_dataset(dir: &Path, g: &SparseGraph, d: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: String = g.undirected_edges().map(|(u, v, _)| format!("{u} {v}\n")).collect();
    std::fs::write(dir.join("graph.edges"), edges).unwrap();
    let feats: String = (0..g.n())
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0).to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(dir.join("features.csv"), feats).unwrap();
}

fn case_study() -> Verdict {
    let start = Instant::now();
    let mut full = Vec::new();
    let mut plain = Vec::new();
    for seed in CASE_STUDY_SEEDS {
        let dir = run_dir("case");
        let mut cfg = synthetic_config(dir.path(), seed);
        cfg.train.total_steps = CASE_STUDY_STEPS;
        cfg.train.warmup_steps = CASE_STUDY_STEPS / 10;
        cmd_synth(&cfg).expect("synth");
        for (ablation, sink) in [(Ablation::default(), &mut full), (Ablation { no_semantic_graphs: true, ..Ablation::default() }, &mut plain)] {
            cfg.train.ablation = ablation;
            cmd_train(&cfg).expect("train");
            sink.push(cmd_eval(&cfg, &EvalInputs::default()).expect("eval").mean);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let margin = mean(&full) - mean(&plain);
    let secs = start.elapsed().as_secs_f64();
    let per_seed: Vec<String> = full.iter().zip(&plain).map(|(a, b)| format!("{a:.4}/{b:.4}")).collect();
    verdict(
        margin > 0.0,
        format!(
            "off-diagonal exact match FSGCL {:.4} vs w/o A_SG {:.4}, margin {margin:+.4} (per seed {}), {secs:.0} s of {CASE_STUDY_BUDGET_SECS:.0} s budget",
            mean(&full),
            mean(&plain),
            per_seed.join(", ")
        ),
    )
}

fn determinism() -> Verdict {
    let run = || {
        let dir = run_dir("det");
        let mut cfg = synthetic_config(dir.path(), 11);
        cfg.train.total_steps = 40;
        cfg.train.warmup_steps = 4;
        cmd_synth(&cfg).expect("synth");
        cmd_train(&cfg).expect("train");
        std::fs::read(cfg.out(EMBEDDINGS_FILE)).expect("embeddings written")
    };
    let (a, b) = (run(), run());
    verdict(a == b, format!("two runs, {} bytes each, identical {}", a.len(), a == b))
}

fn ablation_harness() -> Verdict {
    let dir = run_dir("ablate");
    let mut cfg = synthetic_config(dir.path(), 3);
    cfg.train.total_steps = 20;
    cfg.train.warmup_steps = 2;
    cfg.eval.repeats = 1;
    cmd_synth(&cfg).expect("synth");
    match cmd_ablate(&cfg) {
        Ok(rows) => {
            let csv = std::fs::read_to_string(cfg.out("ablation.csv")).unwrap_or_default();
            let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
            verdict(rows.len() == 7 && csv.lines().count() == 8, format!("rows {names:?}"))
        }
        Err(e) => verdict(false, format!("failed: {e}")),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("motif enumeration and co-occurrence match brute force", motif_oracle),
        ("PPR diffusion matches the direct inverse", ppr_oracle),
        ("symmetrized-loss gradients match finite differences", gradients),
        ("EMA update and LR schedule are exact", ema_and_schedule),
        ("loss alignment value and joint-loss bounds", loss_bounds),
        ("semantic graphs respect top-K and the motif mask", semantic_invariants),
        ("synthetic case study: semantic graphs help overlapping nodes", case_study),
        ("identical config and seed give identical embeddings", determinism),
        ("ablation harness emits all seven rows", ablation_harness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {id}: {name} ({}; {:.1} s)", v.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
