//! End-to-end orchestration. Every stage reads its inputs from files and
//! writes its outputs plus a manifest into the run directory, so stages can
//! be run, rerun and tested independently.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::eval::{logistic_protocol, mean_std, mlknn_protocol, HeatmapScore, MLKNN_K};
use crate::graph::{
    load_edge_list, load_edge_list_with_mode, load_features, load_labels, write_matrix_csv, EdgeListMode,
    FeatureMatrix, LabelSet, SparseGraph,
};
use crate::motif::{cooccurrence, enumerate_instances, MotifPattern};
use crate::semantic::{build_semantic_graphs, topk_cosine_unmasked};
use crate::synth::{generate, SynthConfig};
use crate::trainer::{train, Ablation, TrainConfig, TrainOutput};
use crate::views::{augmentation_rng, edge_dropout, ppr_structure, Structure};

pub const GRAPH_FILE: &str = "graph.edges";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MOTIF_COUNTS_FILE: &str = "motif_counts.csv";
pub const PPR_FILE: &str = "ppr.bin";
pub const PPR_SPARSE_FILE: &str = "ppr.edges";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
const PPR_MAGIC: &[u8; 8] = b"FSGCLU01";

/// Where the dataset comes from. Unset paths fall back to the files that
/// `synth` writes into the run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// A motif by built-in name, or a named edge list over `nodes` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl MotifSpec {
    pub fn builtin(name: &str) -> Self {
        MotifSpec { name: name.into(), nodes: None, edges: None }
    }

    pub fn resolve(&self) -> Result<MotifPattern> {
        match (&self.edges, self.nodes) {
            (None, None) => MotifPattern::builtin(&self.name)
                .ok_or_else(|| Error::Input(format!("unknown built-in motif `{}`", self.name))),
            (Some(e), Some(m)) => MotifPattern::new(self.name.clone(), m, e.iter().map(|p| (p[0], p[1])).collect()),
            _ => Err(Error::Input(format!("motif `{}` needs both `nodes` and `edges`", self.name))),
        }
    }
}

fn default_motifs() -> Vec<MotifSpec> {
    ["triangle", "4-clique", "4-cycle"].iter().map(|n| MotifSpec::builtin(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemanticConfig {
    /// Neighbours kept per row of each semantic graph.
    pub k: usize,
    /// Also write every motif instance as CSV.
    pub dump_instances: bool,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig { k: 5, dump_instances: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewConfig {
    pub ppr_alpha: f64,
    /// Entries at or below this value are dropped from the diffusion of
    /// graphs too large for a dense solve.
    pub sparsify_threshold: f64,
    /// Drop semantic edges in the second view with the feature drop rate.
    pub perturb_semantic_edges: bool,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig { ppr_alpha: 0.2, sparsify_threshold: 1e-4, perturb_semantic_edges: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Logistic,
    Mlknn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub repeats: usize,
    pub k_nn: usize,
    /// Score heatmap cells by per-label recall instead of exact set match.
    pub label_recall: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { mode: EvalMode::Logistic, repeats: 5, k_nn: MLKNN_K, label_recall: false }
    }
}

impl EvalConfig {
    fn score(&self) -> HeatmapScore {
        if self.label_recall {
            HeatmapScore::LabelRecall
        } else {
            HeatmapScore::ExactSet
        }
    }
}

/// Complete run configuration. The top-level `seed` drives every random
/// choice; it overrides the seeds of the training and synthetic sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub motifs: Vec<MotifSpec>,
    pub semantic: SemanticConfig,
    pub views: ViewConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("run"),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            motifs: default_motifs(),
            semantic: SemanticConfig::default(),
            views: ViewConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("configuration always serializes").as_bytes())
    }

    pub fn patterns(&self) -> Result<Vec<MotifPattern>> {
        if self.motifs.is_empty() {
            return Err(Error::Input("at least one motif is required".into()));
        }
        self.motifs.iter().map(MotifSpec::resolve).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.patterns()?;
        self.train.validate()?;
        if self.semantic.k == 0 {
            return Err(Error::Input("semantic.k must be at least 1".into()));
        }
        if self.train.motif_weights.len() != self.motifs.len() {
            return Err(Error::Input(format!(
                "{} motif weights for {} motifs",
                self.train.motif_weights.len(),
                self.motifs.len()
            )));
        }
        if self.eval.repeats == 0 || self.eval.k_nn == 0 {
            return Err(Error::Input("eval.repeats and eval.k_nn must be positive".into()));
        }
        Ok(())
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    fn edges_path(&self) -> PathBuf {
        self.data.edges.clone().unwrap_or_else(|| self.out(GRAPH_FILE))
    }

    fn features_path(&self) -> PathBuf {
        self.data.features.clone().unwrap_or_else(|| self.out(FEATURES_FILE))
    }

    pub fn labels_path(&self) -> PathBuf {
        self.data.labels.clone().unwrap_or_else(|| self.out(LABELS_FILE))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Written next to the outputs of every command. Contains no timestamps, so
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new(command: &str, cfg: &PipelineConfig) -> Self {
        let versions = [
            ("fsgcl".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("params_format".to_string(), crate::model::PARAMS_FORMAT.to_string()),
        ];
        Manifest {
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            versions: versions.into_iter().collect(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_hash(path)?);
        Ok(())
    }

    fn output(&mut self, dir: &Path, file: &str) -> Result<()> {
        self.outputs.insert(file.to_string(), file_hash(&dir.join(file))?);
        Ok(())
    }

    pub fn path(dir: &Path, command: &str) -> PathBuf {
        dir.join(format!("manifest-{command}.json"))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = Self::path(dir, &self.command);
        let text = serde_json::to_string_pretty(self).expect("manifest always serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: &Path, command: &str) -> Result<Self> {
        let path = Self::path(dir, command);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), line: e.line(), msg: e.to_string() })
    }

    /// True when every recorded output still has its recorded hash.
    fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs.iter().all(|(f, h)| file_hash(&dir.join(f)).is_ok_and(|x| &x == h))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Graph and features of the configured dataset, with the node count taken
/// from the feature rows.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<(SparseGraph, FeatureMatrix)> {
    let x = load_features(&cfg.features_path())?;
    let g = load_edge_list(&cfg.edges_path(), x.n())?;
    Ok((g, x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthReport {
    pub nodes: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub inter_community_fraction: f64,
    pub community_sizes: Vec<usize>,
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthReport> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let s = generate(&cfg.synth)?;
    s.graph.write_edge_list(&cfg.out(GRAPH_FILE), EdgeListMode::Undirected)?;
    write_matrix_csv(&cfg.out(FEATURES_FILE), s.features.matrix())?;
    s.labels.write_csv(&cfg.out(LABELS_FILE))?;
    let mut m = Manifest::new("synth", cfg);
    for f in [GRAPH_FILE, FEATURES_FILE, LABELS_FILE] {
        m.output(dir, f)?;
    }
    m.write(dir)?;
    Ok(SynthReport {
        nodes: s.graph.n(),
        edges: s.graph.nnz() / 2,
        mean_degree: s.mean_degree(),
        inter_community_fraction: s.inter_community_fraction(),
        community_sizes: s.community_sizes,
    })
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn cooccurrence_file(name: &str) -> String {
    format!("cooccurrence_{}.edges", file_stem(name))
}

pub fn semantic_file(i: usize, name: &str) -> String {
    format!("semantic_{}_{}.edges", i + 1, file_stem(name))
}

/// Counts instances of each configured motif and writes the co-occurrence
/// matrices. Returns `(motif name, instance count)` in configuration order.
pub fn cmd_mine(cfg: &PipelineConfig) -> Result<Vec<(String, usize)>> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let patterns = cfg.patterns()?;
    // node count comes from the feature rows
    let (g, _) = load_dataset(cfg)?;
    let mut m = Manifest::new("mine", cfg);
    m.input(&cfg.edges_path())?;
    let mut counts = Vec::new();
    let mut report = String::from("motif,instances\n");
    for p in &patterns {
        let inst = enumerate_instances(&g, p);
        let o = cooccurrence(&inst, &g);
        let file = cooccurrence_file(p.name());
        o.graph().write_edge_list(&dir.join(&file), EdgeListMode::Undirected)?;
        m.output(dir, &file)?;
        if cfg.semantic.dump_instances {
            let file = format!("instances_{}.csv", file_stem(p.name()));
            let mut text = String::new();
            for (t, _) in inst.iter() {
                let row: Vec<String> = t.iter().map(u32::to_string).collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            write_text(&dir.join(&file), &text)?;
            m.output(dir, &file)?;
        }
        report.push_str(&format!("{},{}\n", p.name(), inst.len()));
        counts.push((p.name().to_string(), inst.len()));
    }
    write_text(&cfg.out(MOTIF_COUNTS_FILE), &report)?;
    m.output(dir, MOTIF_COUNTS_FILE)?;
    m.write(dir)?;
    Ok(counts)
}

/// Dense diffusion as `magic | n (u64 LE) | n·n f64 LE` in row-major order.
pub fn write_dense_binary(path: &Path, u: &Matrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 8 * u.as_slice().len());
    bytes.extend_from_slice(PPR_MAGIC);
    bytes.extend_from_slice(&(u.rows() as u64).to_le_bytes());
    for v in u.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dense_binary(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse { path: path.display().to_string(), line: 0, msg: msg.into() };
    if bytes.len() < 16 || &bytes[..8] != PPR_MAGIC {
        return Err(bad("missing diffusion header"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 16 + 8 * n * n {
        return Err(bad("truncated diffusion matrix"));
    }
    let data = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Matrix::from_vec(n, n, data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub motifs: Vec<String>,
    pub instance_counts: Vec<usize>,
    pub semantic_edges: Vec<usize>,
    /// True when outputs from an identical configuration were reused.
    pub reused: bool,
}

/// Builds the semantic graphs and the diffusion matrix. Skips work when the
/// previous run used the same configuration and inputs and its outputs are
/// intact.
pub fn cmd_preprocess(cfg: &PipelineConfig) -> Result<PreprocessReport> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let patterns = cfg.patterns()?;
    let mut m = Manifest::new("preprocess", cfg);
    m.input(&cfg.edges_path())?;
    m.input(&cfg.features_path())?;
    if let Ok(prev) = Manifest::read(dir, "preprocess") {
        if prev.config_hash == m.config_hash && prev.inputs == m.inputs && prev.outputs_intact(dir) {
            log::info!("preprocess outputs are up to date");
            let pre = load_preprocessed(cfg)?;
            return Ok(PreprocessReport {
                motifs: patterns.iter().map(|p| p.name().to_string()).collect(),
                instance_counts: Vec::new(),
                semantic_edges: pre.semantic.iter().map(SparseGraph::nnz).collect(),
                reused: true,
            });
        }
    }
    let (g, x) = load_dataset(cfg)?;
    let sg = build_semantic_graphs(&g, &x, &patterns, cfg.semantic.k)?;
    for (i, (a, name)) in sg.graphs.iter().zip(&sg.motif_names).enumerate() {
        let file = semantic_file(i, name);
        a.write_edge_list(&dir.join(&file), EdgeListMode::Directed)?;
        m.output(dir, &file)?;
    }
    match ppr_structure(&g, cfg.views.ppr_alpha, cfg.views.sparsify_threshold)? {
        Structure::Dense(u) => {
            write_dense_binary(&cfg.out(PPR_FILE), &u)?;
            m.output(dir, PPR_FILE)?;
        }
        Structure::Sparse(u) => {
            u.write_edge_list(&cfg.out(PPR_SPARSE_FILE), EdgeListMode::Directed)?;
            m.output(dir, PPR_SPARSE_FILE)?;
        }
    }
    m.write(dir)?;
    Ok(PreprocessReport {
        semantic_edges: sg.graphs.iter().map(SparseGraph::nnz).collect(),
        motifs: sg.motif_names,
        instance_counts: sg.instance_counts,
        reused: false,
    })
}

/// Everything training needs, as read back from the run directory.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub semantic: Vec<SparseGraph>,
    pub diffusion: Structure,
}

pub fn load_preprocessed(cfg: &PipelineConfig) -> Result<Preprocessed> {
    let (graph, features) = load_dataset(cfg)?;
    let n = graph.n();
    let semantic = cfg
        .patterns()?
        .iter()
        .enumerate()
        .map(|(i, p)| load_edge_list_with_mode(&cfg.out(&semantic_file(i, p.name())), n, EdgeListMode::Directed))
        .collect::<Result<Vec<_>>>()?;
    let dense = cfg.out(PPR_FILE);
    let diffusion = if dense.exists() {
        let u = read_dense_binary(&dense)?;
        if u.rows() != n {
            return Err(Error::shape("load_preprocessed", format!("diffusion over {} nodes, graph has {n}", u.rows())));
        }
        Structure::Dense(u)
    } else {
        Structure::Sparse(load_edge_list_with_mode(&cfg.out(PPR_SPARSE_FILE), n, EdgeListMode::Directed)?)
    };
    Ok(Preprocessed { graph, features, semantic, diffusion })
}

/// Structures of both views under the given ablation switches.
pub fn view_structures(pre: &Preprocessed, cfg: &PipelineConfig, ablation: Ablation) -> Result<(Vec<Structure>, Vec<Structure>)> {
    let t = pre.semantic.len();
    let semantic: Vec<SparseGraph> = if ablation.no_semantic_graphs {
        vec![pre.graph.clone(); t]
    } else if ablation.topk_only {
        vec![topk_cosine_unmasked(&pre.features, cfg.semantic.k)?; t]
    } else {
        pre.semantic.clone()
    };
    let mut v1 = vec![Structure::Sparse(pre.graph.clone())];
    v1.extend(semantic.iter().cloned().map(Structure::Sparse));
    let mut v2 = vec![pre.diffusion.clone()];
    if cfg.views.perturb_semantic_edges {
        let mut rng = augmentation_rng(cfg.seed, 0, 2);
        for s in &semantic {
            v2.push(Structure::Sparse(edge_dropout(s, cfg.train.drop_rate, &mut rng)?));
        }
    } else {
        v2.extend(semantic.into_iter().map(Structure::Sparse));
    }
    Ok((v1, v2))
}

fn trace_csv(out: &TrainOutput, motif_names: &[String]) -> String {
    let mut s = String::from("step,lr,holistic,combine");
    for name in motif_names {
        s.push_str(&format!(",semantic_{}", file_stem(name)));
    }
    s.push_str(",total\n");
    for r in &out.trace {
        s.push_str(&format!("{},{},{},{}", r.step, r.lr, r.loss.holistic, r.loss.combine));
        for v in &r.loss.semantic {
            s.push_str(&format!(",{v}"));
        }
        s.push_str(&format!(",{}\n", r.loss.total));
    }
    s
}

/// Trains on preprocessed inputs with the given ablation and writes the loss
/// trace, embeddings and both parameter snapshots into `dir`.
fn train_into(cfg: &PipelineConfig, pre: &Preprocessed, ablation: Ablation, dir: &Path, command: &str) -> Result<TrainOutput> {
    ensure_dir(dir)?;
    let (v1, v2) = view_structures(pre, cfg, ablation)?;
    let tcfg = TrainConfig { ablation, ..cfg.train.clone() };
    let out = train(&v1, &v2, &pre.features, &tcfg)?;
    let names: Vec<String> = cfg.motifs.iter().map(|m| m.name.clone()).collect();
    write_text(&dir.join(LOSS_TRACE_FILE), &trace_csv(&out, &names))?;
    write_matrix_csv(&dir.join(EMBEDDINGS_FILE), &out.embeddings)?;
    out.online.save(&dir.join("online.bin"), &dir.join("online.json"))?;
    out.target.save(&dir.join("target.bin"), &dir.join("target.json"))?;
    let mut m = Manifest::new(command, cfg);
    for f in [LOSS_TRACE_FILE, EMBEDDINGS_FILE, "online.bin", "online.json", "target.bin", "target.json"] {
        m.output(dir, f)?;
    }
    m.write(dir)?;
    Ok(out)
}

/// Runs `preprocess` first (a no-op when its outputs are current).
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    cmd_preprocess(cfg)?;
    let pre = load_preprocessed(cfg)?;
    train_into(cfg, &pre, cfg.train.ablation, &cfg.out_dir, "train")
}

/// Explicit file overrides for `eval`.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub embeddings: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub mode: Option<EvalMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    /// Mean and population standard deviation over the repeated splits:
    /// test accuracy for logistic regression, mean off-diagonal heatmap
    /// accuracy for ML-kNN.
    pub mean: f64,
    pub std: f64,
    /// ML-kNN only: mean diagonal heatmap accuracy.
    pub diagonal_mean: Option<f64>,
}

fn evaluate(cfg: &PipelineConfig, z: &Matrix, labels: &LabelSet, mode: EvalMode, dir: &Path, m: &mut Manifest) -> Result<EvalReport> {
    let reps = cfg.eval.repeats;
    match mode {
        EvalMode::Logistic => {
            if labels.is_multilabel() {
                log::warn!("multilabel targets: logistic regression uses each node's first label");
            }
            let y: Vec<usize> = labels.primary().into_iter().map(|l| l as usize).collect();
            let r = logistic_protocol(z, &y, reps, cfg.seed)?;
            let mut csv = String::from("split,strength,val_accuracy,test_accuracy\n");
            for (i, run) in r.runs.iter().enumerate() {
                csv.push_str(&format!("{i},{},{},{}\n", run.strength, run.val_accuracy, run.test_accuracy));
            }
            write_text(&dir.join("eval_logistic.csv"), &csv)?;
            m.output(dir, "eval_logistic.csv")?;
            Ok(EvalReport { mode, mean: r.mean, std: r.std, diagonal_mean: None })
        }
        EvalMode::Mlknn => {
            let (avg, runs) = mlknn_protocol(z, labels, reps, cfg.seed, cfg.eval.k_nn, cfg.eval.score())?;
            write_text(&dir.join("heatmap.csv"), &avg.to_csv())?;
            m.output(dir, "heatmap.csv")?;
            let off: Vec<f64> = runs.iter().filter_map(|h| h.mean_off_diagonal()).collect();
            if off.is_empty() {
                return Err(Error::Input("no test node carries two labels; the off-diagonal heatmap is empty".into()));
            }
            let (mean, std) = mean_std(off.iter().copied());
            Ok(EvalReport { mode, mean, std, diagonal_mean: avg.mean_diagonal() })
        }
    }
}

pub fn cmd_eval(cfg: &PipelineConfig, inputs: &EvalInputs) -> Result<EvalReport> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let zp = inputs.embeddings.clone().unwrap_or_else(|| cfg.out(EMBEDDINGS_FILE));
    let lp = inputs.labels.clone().unwrap_or_else(|| cfg.labels_path());
    let z = load_features(&zp)?.into_matrix();
    let labels = load_labels(&lp)?;
    let mut m = Manifest::new("eval", cfg);
    m.input(&zp)?;
    m.input(&lp)?;
    let report = evaluate(cfg, &z, &labels, inputs.mode.unwrap_or(cfg.eval.mode), dir, &mut m)?;
    write_text(&cfg.out("eval_summary.json"), &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"))?;
    m.output(dir, "eval_summary.json")?;
    m.write(dir)?;
    Ok(report)
}

/// The seven rows of the component ablation, full model first.
pub fn ablation_variants() -> Vec<(&'static str, Ablation)> {
    let none = Ablation::default();
    vec![
        ("FSGCL", none),
        ("w/o w_m", Ablation { uniform_w: true, ..none }),
        ("w/o slow", Ablation { no_slow: true, ..none }),
        ("w/o A_SG", Ablation { no_semantic_graphs: true, ..none }),
        ("w/o top-k A_SG", Ablation { topk_only: true, ..none }),
        ("w/o L_semantic", Ablation { no_semantic_loss: true, ..none }),
        ("w/o L_holistic", Ablation { no_holistic_loss: true, ..none }),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: EvalReport,
}

/// Trains and evaluates every ablation variant on the preprocessed dataset.
/// Each variant gets its own subdirectory; the summary goes to
/// `ablation.csv`.
pub fn cmd_ablate(cfg: &PipelineConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    cmd_preprocess(cfg)?;
    let pre = load_preprocessed(cfg)?;
    let labels = load_labels(&cfg.labels_path())?;
    let mut rows = Vec::new();
    let mut csv = String::from("variant,metric,mean,std\n");
    let metric = match cfg.eval.mode {
        EvalMode::Logistic => "logistic_accuracy",
        EvalMode::Mlknn => "mlknn_off_diagonal",
    };
    for (name, ab) in ablation_variants() {
        log::info!("ablation variant {name}");
        let dir = cfg.out_dir.join("ablation").join(file_stem(name));
        let out = train_into(cfg, &pre, ab, &dir, "train")?;
        let mut m = Manifest::new("eval", cfg);
        let report = evaluate(cfg, &out.embeddings, &labels, cfg.eval.mode, &dir, &mut m)?;
        m.write(&dir)?;
        csv.push_str(&format!("{name},{metric},{},{}\n", report.mean, report.std));
        rows.push(AblationRow { variant: name.to_string(), report });
    }
    write_text(&cfg.out(ABLATION_FILE), &csv)?;
    let mut m = Manifest::new("ablate", cfg);
    m.output(&cfg.out_dir, ABLATION_FILE)?;
    m.write(&cfg.out_dir)?;
    Ok(rows)
}
