//! Downstream evaluation on frozen embeddings: multinomial logistic
//! regression for node classification and ML-kNN with community-pair
//! accuracy heatmaps for overlapping labels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::LabelSet;

/// Default number of neighbours for ML-kNN.
pub const MLKNN_K: usize = 10;
/// Laplace smoothing used by ML-kNN.
pub const MLKNN_SMOOTHING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled 10/10/80 partition of `0..n`.
pub fn make_splits(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::Input(format!("a 10/10/80 split needs at least 10 nodes, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let a = n / 10;
    let test = idx.split_off(2 * a);
    let val = idx.split_off(a);
    Ok(Split { train: idx, val, test })
}

/// `2^-10, 2^-9, ..., 2^10`.
pub fn strength_grid() -> Vec<f64> {
    (-10..=10).map(|e| 2f64.powi(e)).collect()
}

/// Solver settings for the logistic classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegSolver {
    pub lr: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegSolver {
    fn default() -> Self {
        LogRegSolver { lr: 0.1, max_iter: 500, tol: 1e-6 }
    }
}

/// Fitted multinomial logistic regression on standardized inputs.
#[derive(Debug, Clone)]
pub struct LogReg {
    mean: Vec<f64>,
    scale: Vec<f64>,
    w: Matrix,
    b: Vec<f64>,
}

fn gather(z: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), z.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(z.row(i));
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

impl LogReg {
    /// Minimizes mean cross-entropy plus `‖W‖² / (2 C n)` by full-batch
    /// gradient descent. The bias is not penalized.
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, strength: f64, solver: LogRegSolver) -> Result<Self> {
        let (n, d) = x.shape();
        if n != y.len() || n == 0 {
            return Err(Error::shape("LogReg::fit", format!("{n} rows, {} labels", y.len())));
        }
        if y.iter().any(|&c| c >= classes) {
            return Err(Error::Input("label outside the class range".into()));
        }
        if y.iter().all(|&c| c == y[0]) {
            return Err(Error::Input("training split contains a single class".into()));
        }
        if strength <= 0.0 {
            return Err(Error::Input("regularization strength must be positive".into()));
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n as f64;
            }
        }
        for r in 0..n {
            for ((s, m), v) in scale.iter_mut().zip(&mean).zip(x.row(r)) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut model = LogReg { mean, scale, w: Matrix::zeros(d, classes), b: vec![0.0; classes] };
        let xs = model.standardize(x);
        let penalty = 1.0 / (strength * n as f64);
        for _ in 0..solver.max_iter {
            let mut p = xs.matmul(&model.w)?;
            for r in 0..n {
                let row = p.row_mut(r);
                for (v, b) in row.iter_mut().zip(&model.b) {
                    *v += b;
                }
                softmax_in_place(row);
                row[y[r]] -= 1.0;
                for v in row.iter_mut() {
                    *v /= n as f64;
                }
            }
            let mut gw = xs.t_matmul(&p)?;
            for (g, w) in gw.as_mut_slice().iter_mut().zip(model.w.as_slice()) {
                *g += penalty * w;
            }
            let mut gb = vec![0.0; classes];
            for r in 0..n {
                for (g, v) in gb.iter_mut().zip(p.row(r)) {
                    *g += v;
                }
            }
            let norm = (gw.as_slice().iter().chain(&gb).map(|g| g * g).sum::<f64>()).sqrt();
            if norm < solver.tol {
                break;
            }
            for (w, g) in model.w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *w -= solver.lr * g;
            }
            for (b, g) in model.b.iter_mut().zip(&gb) {
                *b -= solver.lr * g;
            }
        }
        Ok(model)
    }

    fn standardize(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    /// Arg-max class per row; ties go to the smaller class id.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let scores = self.standardize(x).matmul(&self.w)?;
        Ok((0..scores.rows())
            .map(|r| {
                let row = scores.row(r);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] + self.b[c] > row[best] + self.b[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticResult {
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub strength: f64,
}

/// Fits one model per strength on the training nodes, keeps the one with the
/// best validation accuracy (earliest in the grid on ties) and reports its
/// test accuracy.
pub fn logistic_eval(z: &Matrix, labels: &[usize], split: &Split, strengths: &[f64]) -> Result<LogisticResult> {
    if z.rows() != labels.len() {
        return Err(Error::shape("logistic_eval", format!("{} embeddings, {} labels", z.rows(), labels.len())));
    }
    if strengths.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(Error::Input("logistic_eval needs strengths and non-empty val/test splits".into()));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let pick = |idx: &[usize]| -> (Matrix, Vec<usize>) { (gather(z, idx), idx.iter().map(|&i| labels[i]).collect()) };
    let (xtr, ytr) = pick(&split.train);
    let (xva, yva) = pick(&split.val);
    let (xte, yte) = pick(&split.test);
    let fit_one = |&c: &f64| -> Result<(f64, LogReg)> {
        let m = LogReg::fit(&xtr, &ytr, classes, c, LogRegSolver::default())?;
        Ok((accuracy(&m.predict(&xva)?, &yva), m))
    };
    #[cfg(feature = "parallel")]
    let fits: Vec<Result<(f64, LogReg)>> = strengths.par_iter().map(fit_one).collect();
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<Result<(f64, LogReg)>> = strengths.iter().map(fit_one).collect();
    let mut best: Option<(usize, f64, LogReg)> = None;
    for (i, f) in fits.into_iter().enumerate() {
        let (acc, m) = f?;
        if best.as_ref().map_or(true, |b| acc > b.1) {
            best = Some((i, acc, m));
        }
    }
    let (i, val_accuracy, m) = best.expect("non-empty grid");
    Ok(LogisticResult { test_accuracy: accuracy(&m.predict(&xte)?, &yte), val_accuracy, strength: strengths[i] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatedAccuracy {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<LogisticResult>,
}

/// Logistic evaluation repeated over splits seeded `seed, seed+1, ...`;
/// `std` is the population standard deviation.
pub fn logistic_protocol(z: &Matrix, labels: &[usize], repeats: usize, seed: u64) -> Result<RepeatedAccuracy> {
    if repeats == 0 {
        return Err(Error::Input("at least one repeat is required".into()));
    }
    let grid = strength_grid();
    let runs = (0..repeats as u64)
        .map(|r| logistic_eval(z, labels, &make_splits(labels.len(), seed + r)?, &grid))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(runs.iter().map(|r| r.test_accuracy));
    Ok(RepeatedAccuracy { mean, std, runs })
}

pub fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Multilabel k-nearest-neighbour classifier with Bayesian posterior
/// thresholding per label.
#[derive(Debug, Clone)]
pub struct MlKnn {
    k: usize,
    x: Matrix,
    labels: Vec<Vec<u32>>,
    prior: Vec<f64>,
    /// `[label][c]`: likelihood of `c` labelled neighbours given the label
    /// is present / absent.
    like_pos: Vec<Vec<f64>>,
    like_neg: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest rows of `pool` to `q` by Euclidean distance,
/// ties broken by position, skipping `exclude`.
fn nearest(pool: &Matrix, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> =
        (0..pool.rows()).filter(|&i| Some(i) != exclude).map(|i| (sq_dist(pool.row(i), q), i)).collect();
    let k = k.min(d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
    }
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, i)| i).collect()
}

impl MlKnn {
    pub fn fit(x: Matrix, labels: Vec<Vec<u32>>, num_classes: usize, k: usize, s: f64) -> Result<Self> {
        let n = x.rows();
        if n != labels.len() || n < 2 {
            return Err(Error::shape("MlKnn::fit", format!("{n} rows, {} label sets", labels.len())));
        }
        if k == 0 {
            return Err(Error::Input("ML-kNN requires k >= 1".into()));
        }
        let mut count = vec![0usize; num_classes];
        for ls in &labels {
            for &l in ls {
                count[l as usize] += 1;
            }
        }
        let prior = count.iter().map(|&c| (s + c as f64) / (2.0 * s + n as f64)).collect();
        let kk = k.min(n - 1);
        let mut hist_pos = vec![vec![0usize; kk + 1]; num_classes];
        let mut hist_neg = vec![vec![0usize; kk + 1]; num_classes];
        for i in 0..n {
            let counts = label_counts(&labels, &nearest(&x, x.row(i), kk, Some(i)), num_classes);
            for l in 0..num_classes {
                if labels[i].contains(&(l as u32)) {
                    hist_pos[l][counts[l]] += 1;
                } else {
                    hist_neg[l][counts[l]] += 1;
                }
            }
        }
        let smooth = |h: &Vec<usize>| -> Vec<f64> {
            let total: usize = h.iter().sum();
            h.iter().map(|&c| (s + c as f64) / (s * (kk + 1) as f64 + total as f64)).collect()
        };
        Ok(MlKnn {
            k: kk,
            like_pos: hist_pos.iter().map(smooth).collect(),
            like_neg: hist_neg.iter().map(smooth).collect(),
            x,
            labels,
            prior,
        })
    }

    pub fn predict_one(&self, q: &[f64]) -> Vec<u32> {
        let counts = label_counts(&self.labels, &nearest(&self.x, q, self.k, None), self.prior.len());
        (0..self.prior.len())
            .filter(|&l| {
                let c = counts[l];
                self.prior[l] * self.like_pos[l][c] > (1.0 - self.prior[l]) * self.like_neg[l][c]
            })
            .map(|l| l as u32)
            .collect()
    }
}

fn label_counts(labels: &[Vec<u32>], idx: &[usize], num_classes: usize) -> Vec<usize> {
    let mut c = vec![0usize; num_classes];
    for &i in idx {
        for &l in &labels[i] {
            c[l as usize] += 1;
        }
    }
    c
}

/// Per community-pair accuracy; `None` where no test node carries that
/// exact label set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub cells: Vec<Vec<Option<f64>>>,
    pub support: Vec<Vec<usize>>,
}

impl Heatmap {
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    fn mean_of(&self, off_diagonal: bool) -> Option<f64> {
        let mut vals = Vec::new();
        for i in 0..self.size() {
            for j in 0..self.size() {
                if (i != j) == off_diagonal {
                    if let Some(v) = self.cells[i][j] {
                        vals.push(v);
                    }
                }
            }
        }
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Unweighted mean over populated off-diagonal cells.
    pub fn mean_off_diagonal(&self) -> Option<f64> {
        self.mean_of(true)
    }

    pub fn mean_diagonal(&self) -> Option<f64> {
        self.mean_of(false)
    }

    /// CSV with one row per community; absent cells are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.cells {
            let cells: Vec<String> = row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// How a test node counts as correctly classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatmapScore {
    /// The predicted label set equals the true one.
    #[default]
    ExactSet,
    /// Fraction of the node's true labels that were predicted.
    LabelRecall,
}

/// Fits ML-kNN on the training and validation nodes and scores every test
/// node into the cell of its true label set.
pub fn mlknn_eval(z: &Matrix, labels: &LabelSet, split: &Split, k_nn: usize, score: HeatmapScore) -> Result<Heatmap> {
    if z.rows() != labels.n() {
        return Err(Error::shape("mlknn_eval", format!("{} embeddings, {} label sets", z.rows(), labels.n())));
    }
    let fit_idx: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
    let model = MlKnn::fit(
        gather(z, &fit_idx),
        fit_idx.iter().map(|&i| labels.of(i).to_vec()).collect(),
        labels.num_classes(),
        k_nn,
        MLKNN_SMOOTHING,
    )?;
    let c = labels.num_classes();
    let mut sum = vec![vec![0.0; c]; c];
    let mut support = vec![vec![0usize; c]; c];
    for &i in &split.test {
        let truth = labels.of(i);
        let (a, b) = match *truth {
            [a] => (a as usize, a as usize),
            [a, b] => (a as usize, b as usize),
            _ => continue,
        };
        let pred = model.predict_one(z.row(i));
        let s = match score {
            HeatmapScore::ExactSet => f64::from(u8::from(pred == truth)),
            HeatmapScore::LabelRecall => truth.iter().filter(|l| pred.contains(l)).count() as f64 / truth.len() as f64,
        };
        sum[a][b] += s;
        support[a][b] += 1;
        if a != b {
            sum[b][a] += s;
            support[b][a] += 1;
        }
    }
    let cells = (0..c)
        .map(|i| (0..c).map(|j| (support[i][j] > 0).then(|| sum[i][j] / support[i][j] as f64)).collect())
        .collect();
    Ok(Heatmap { cells, support })
}

/// Heatmaps over `repeats` splits (seeded `seed, seed+1, ...`), averaged
/// cell by cell over the splits where the cell is populated.
pub fn mlknn_protocol(
    z: &Matrix,
    labels: &LabelSet,
    repeats: usize,
    seed: u64,
    k_nn: usize,
    score: HeatmapScore,
) -> Result<(Heatmap, Vec<Heatmap>)> {
    if repeats == 0 {
        return Err(Error::Input("at least one repeat is required".into()));
    }
    let runs = (0..repeats as u64)
        .map(|r| mlknn_eval(z, labels, &make_splits(labels.n(), seed + r)?, k_nn, score))
        .collect::<Result<Vec<_>>>()?;
    let c = labels.num_classes();
    let mut cells = vec![vec![None; c]; c];
    let mut support = vec![vec![0usize; c]; c];
    for i in 0..c {
        for j in 0..c {
            let vals: Vec<f64> = runs.iter().filter_map(|h| h.cells[i][j]).collect();
            support[i][j] = runs.iter().map(|h| h.support[i][j]).sum();
            if !vals.is_empty() {
                cells[i][j] = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
    }
    Ok((Heatmap { cells, support }, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let s = make_splits(10, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 1, 8));
        assert_eq!(make_splits(10, 3).unwrap(), s);
        assert!(make_splits(9, 0).is_err());
        let s = make_splits(137, 1).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..137).collect::<Vec<_>>());
    }

    #[test]
    fn grid_has_21_powers() {
        let g = strength_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 1.0 / 1024.0);
        assert_eq!(g[20], 1024.0);
    }

    #[test]
    fn single_class_train_is_rejected() {
        let x = Matrix::filled(3, 2, 1.0);
        assert!(LogReg::fit(&x, &[1, 1, 1], 2, 1.0, LogRegSolver::default()).is_err());
    }

    #[test]
    fn heatmap_means_skip_absent() {
        let h = Heatmap {
            cells: vec![vec![Some(1.0), Some(0.5)], vec![Some(0.5), None]],
            support: vec![vec![1, 2], vec![2, 0]],
        };
        assert_eq!(h.mean_off_diagonal(), Some(0.5));
        assert_eq!(h.mean_diagonal(), Some(1.0));
        assert_eq!(h.to_csv(), "1,0.5\n0.5,\n");
    }
}
