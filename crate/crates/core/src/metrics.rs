//! DICE overlap and PSNR.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::MultiChannelImage;

/// M x N region labels, dense in `1..=K`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
    k: usize,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyGrid { rows, cols });
        }
        if labels.len() != rows * cols {
            return Err(Error::BufferLength {
                rows,
                cols,
                len: labels.len(),
            });
        }
        if labels.contains(&0) {
            return Err(Error::InvalidLabels("labels start at 1".into()));
        }
        let k = *labels.iter().max().expect("non-empty") as usize;
        let mut used = vec![false; k];
        for &l in &labels {
            used[l as usize - 1] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidLabels(format!(
                "label {} unused but {k} labels present",
                missing + 1
            )));
        }
        Ok(Self { rows, cols, labels, k })
    }

    /// Renumbers arbitrary label values densely by first appearance in row-major order.
    pub fn from_values(rows: usize, cols: usize, values: &[u64]) -> Result<Self> {
        let mut ids: Vec<(u64, u32)> = Vec::new();
        let mut labels = Vec::with_capacity(values.len());
        for &v in values {
            let id = match ids.iter().find(|(val, _)| *val == v) {
                Some(&(_, id)) => id,
                None => {
                    let id = ids.len() as u32 + 1;
                    ids.push((v, id));
                    id
                }
            };
            labels.push(id);
        }
        Self::new(rows, cols, labels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.labels[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    /// Applies `perm[l - 1]` to every label; `perm` must be a permutation of `1..=K`.
    pub fn relabeled(&self, perm: &[u32]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::InvalidLabels(format!(
                "permutation of length {} for {} labels",
                perm.len(),
                self.k
            )));
        }
        Self::new(
            self.rows,
            self.cols,
            self.labels.iter().map(|&l| perm[l as usize - 1]).collect(),
        )
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l as usize - 1] += 1;
        }
        s
    }
}

/// Maximum-weight one-to-one assignment of rows to columns.
///
/// Returns `assignment[r] = Some(c)` for matched rows. When there are more
/// rows than columns the surplus rows stay unmatched.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        let m = Matrix::from_rows(weights.iter().cloned()).expect("rectangular weights");
        kuhn_munkres(&m).1.into_iter().map(Some).collect()
    } else {
        let m = Matrix::from_fn(cols, rows, |(c, r)| weights[r][c]);
        let mut out = vec![None; rows];
        for (c, r) in kuhn_munkres(&m).1.into_iter().enumerate() {
            out[r] = Some(c);
        }
        out
    }
}

/// Overlap counts `overlap[t][p] = |truth == t+1 and pred == p+1|`.
pub fn overlap_matrix(truth: &LabelMap, pred: &LabelMap) -> Result<Vec<Vec<usize>>> {
    if truth.shape() != pred.shape() {
        return Err(Error::DimensionMismatch {
            expected: truth.shape(),
            found: pred.shape(),
        });
    }
    let mut m = vec![vec![0usize; pred.k]; truth.k];
    for (&t, &p) in truth.labels.iter().zip(&pred.labels) {
        m[t as usize - 1][p as usize - 1] += 1;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    /// One value per truth label, in label order.
    pub per_label: Vec<f64>,
    /// Mean over truth labels.
    pub mean: f64,
    /// Mean over truth labels other than label 1, which synthetic scenes use
    /// for the background. Equals `mean` when there is a single label.
    pub foreground_mean: f64,
    /// Predicted label matched to each truth label.
    pub matching: Vec<Option<u32>>,
}

/// `2 |R ∩ R'| / (|R| + |R'|)` per truth label after maximum-overlap matching
/// of predicted labels. Unmatched truth labels score 0.
pub fn dice(truth: &LabelMap, pred: &LabelMap) -> Result<DiceReport> {
    let overlap = overlap_matrix(truth, pred)?;
    let (ts, ps) = (truth.sizes(), pred.sizes());
    // Overlap dominates; the per-pair DICE, quantized so that its sum over
    // any matching stays below one overlap unit, only breaks ties between
    // maximum-overlap matchings. This keeps the score symmetric.
    const TIE_UNIT: i64 = 1 << 20;
    let unit = (truth.k.max(pred.k) as i64 + 1) * TIE_UNIT;
    let weights: Vec<Vec<i64>> = overlap
        .iter()
        .enumerate()
        .map(|(t, row)| {
            row.iter()
                .enumerate()
                .map(|(p, &c)| {
                    let d = 2.0 * c as f64 / (ts[t] + ps[p]) as f64;
                    c as i64 * unit + (d * TIE_UNIT as f64).round() as i64
                })
                .collect()
        })
        .collect();
    let assignment = max_weight_assignment(&weights);
    let per_label: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(t, a)| match a {
            Some(p) => 2.0 * overlap[t][*p] as f64 / (ts[t] + ps[*p]) as f64,
            None => 0.0,
        })
        .collect();
    let average = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean = average(&per_label);
    let foreground_mean = if per_label.len() > 1 { average(&per_label[1..]) } else { mean };
    Ok(DiceReport {
        per_label,
        mean,
        foreground_mean,
        matching: assignment.iter().map(|a| a.map(|p| p as u32 + 1)).collect(),
    })
}

/// DICE of truth label `l` against predicted label `l`, without matching.
/// Labels absent from `pred` score 0.
pub fn dice_unmatched(truth: &LabelMap, pred: &LabelMap) -> Result<Vec<f64>> {
    let overlap = overlap_matrix(truth, pred)?;
    let (ts, ps) = (truth.sizes(), pred.sizes());
    Ok((0..truth.k)
        .map(|t| {
            if t < pred.k {
                2.0 * overlap[t][t] as f64 / (ts[t] + ps[t]) as f64
            } else {
                0.0
            }
        })
        .collect())
}

/// `10 log10(1 / MSE)` with the MSE pooled over all pixels and channels;
/// `+inf` when the images are identical.
pub fn psnr(f: &MultiChannelImage, f_tilde: &MultiChannelImage) -> Result<f64> {
    if f.num_channels() != f_tilde.num_channels() {
        return Err(Error::ChannelCount {
            expected: f.num_channels(),
            found: f_tilde.num_channels(),
        });
    }
    let mut sum = 0.0;
    for (a, b) in f.channels().iter().zip(f_tilde.channels()) {
        a.check_same_shape(b)?;
        sum += a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    let (m, n) = f.shape();
    let mse = sum / (m * n * f.num_channels()) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}
