//! CLS-attention token scoring, batch-level importance and select-and-merge.

use std::io::{self, Read, Write};

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::SystemParams;

/// Grid that importance values are snapped to. Keeps every prefix sum exact,
/// so first differences of the retention curve equal the ranked importances
/// bit for bit.
const IMPORTANCE_QUANTUM: f64 = 1.0 / (1u64 << 32) as f64;

/// Activations `B x (N+1) x D`; token 0 of every sample is CLS.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub values: Array3<f64>,
}

impl ActivationBatch {
    pub fn new(values: Array3<f64>) -> Result<Self, ModelError> {
        if values.shape()[1] < 2 {
            return Err(ModelError::Shape(
                "need a CLS token and at least one patch token".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("activation batch"));
        }
        Ok(Self { values })
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    /// Patch tokens per sample (CLS excluded).
    pub fn patches(&self) -> usize {
        self.values.shape()[1] - 1
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn check_params(&self, params: &SystemParams) -> Result<(), ModelError> {
        let want = [params.batch_size, params.num_patches + 1, params.embed_dim];
        if self.values.shape() != want {
            return Err(ModelError::Shape(format!(
                "batch shape {:?}, params expect {:?}",
                self.values.shape(),
                want
            )));
        }
        Ok(())
    }
}

/// CLS-to-patch attention, `B x N`; each row is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores {
    pub scores: Array2<f64>,
}

/// Rank-wise batch importance `alpha_bar` and its prefix sums `f(K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    alpha_bar: Vec<f64>,
    prefix: Vec<f64>,
}

impl ImportanceProfile {
    /// Build from an already ranked importance vector.
    pub fn from_ranked(alpha_bar: Vec<f64>) -> Result<Self, ModelError> {
        if alpha_bar.is_empty() {
            return Err(ModelError::Shape("empty importance vector".into()));
        }
        if alpha_bar.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(ModelError::NonFinite("importance vector"));
        }
        let alpha_bar: Vec<f64> = alpha_bar
            .into_iter()
            .map(|a| (a / IMPORTANCE_QUANTUM).round() * IMPORTANCE_QUANTUM)
            .collect();
        if alpha_bar.windows(2).any(|w| w[1] > w[0]) {
            return Err(ModelError::Shape(
                "importance vector is not non-increasing".into(),
            ));
        }
        let mut prefix = Vec::with_capacity(alpha_bar.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &a in &alpha_bar {
            acc += a;
            prefix.push(acc);
        }
        Ok(Self { alpha_bar, prefix })
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `prefix[k] = f(k)` for `k` in `0..=N`.
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }
}

/// Refined activations `B x (K+2) x D`: CLS, top-K tokens by score, merged token.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedBatch {
    pub values: Array3<f64>,
    /// Token-axis indices (into the input batch) of the kept tokens, per sample.
    pub selected: Vec<Vec<usize>>,
    /// False when nothing was discarded and the merged slot is the zero vector.
    pub merged_defined: bool,
}

/// Softmax of CLS-query / patch-key dot products, scaled by `1/sqrt(D)`.
pub fn cls_attention(
    batch: &ActivationBatch,
    wq: &Array2<f64>,
    wk: &Array2<f64>,
) -> Result<AttentionScores, ModelError> {
    let d = batch.dim();
    if wq.shape() != [d, d] || wk.shape() != [d, d] {
        return Err(ModelError::Shape(format!(
            "projections must be {d}x{d}, got {:?} and {:?}",
            wq.shape(),
            wk.shape()
        )));
    }
    let n = batch.patches();
    let scale = 1.0 / (d as f64).sqrt();
    let mut scores = Array2::<f64>::zeros((batch.batch(), n));
    for (sample, mut row) in batch.values.outer_iter().zip(scores.outer_iter_mut()) {
        let cls = sample.row(0);
        // q0 . (a_n Wk) = a_n . (Wk q0)
        let q0 = cls.dot(wq);
        let probe: Array1<f64> = wk.dot(&q0);
        let logits: Vec<f64> = (1..=n)
            .map(|t| sample.row(t).dot(&probe) * scale)
            .collect();
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(ModelError::NonFinite("attention logits"));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (dst, e) in row.iter_mut().zip(&exps) {
            *dst = e / z;
        }
    }
    Ok(AttentionScores { scores })
}

/// Sort each sample's scores in descending order and sum them rank-wise.
pub fn batch_importance(scores: &AttentionScores) -> ImportanceProfile {
    let n = scores.scores.ncols();
    let mut alpha_bar = vec![0.0; n];
    for row in scores.scores.outer_iter() {
        let mut sorted: Vec<f64> = row.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (acc, v) in alpha_bar.iter_mut().zip(&sorted) {
            *acc += v;
        }
    }
    ImportanceProfile::from_ranked(alpha_bar).expect("softmax rows are finite and ranked")
}

/// Semantic retention `f(K)` of the top-`k` ranked tokens.
pub fn cumulative_retention(profile: &ImportanceProfile, k: usize) -> Result<f64, ModelError> {
    profile
        .prefix
        .get(k)
        .copied()
        .ok_or(ModelError::OutOfRange {
            what: "token budget",
            value: k as f64,
            lo: 0.0,
            hi: profile.len() as f64,
        })
}

/// Indices `1..=N` ordered by descending score, lower index first on ties.
fn ranked_tokens(scores: ArrayView1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.into_iter().map(|i| i + 1).collect()
}

/// Keep the top-`k` tokens of every sample and fold the rest into one
/// attention-weighted merged token.
pub fn select_and_merge(
    batch: &ActivationBatch,
    scores: &AttentionScores,
    k: usize,
) -> Result<RefinedBatch, ModelError> {
    let n = batch.patches();
    if scores.scores.shape() != [batch.batch(), n] {
        return Err(ModelError::Shape(format!(
            "scores {:?} do not match batch {:?}",
            scores.scores.shape(),
            batch.values.shape()
        )));
    }
    if k == 0 || k > n {
        return Err(ModelError::OutOfRange {
            what: "token budget",
            value: k as f64,
            lo: 1.0,
            hi: n as f64,
        });
    }
    let d = batch.dim();
    let mut values = Array3::<f64>::zeros((batch.batch(), k + 2, d));
    let mut selected = Vec::with_capacity(batch.batch());
    for (b, sample) in batch.values.outer_iter().enumerate() {
        let row = scores.scores.row(b);
        let ranked = ranked_tokens(row);
        let mut out = values.index_axis_mut(Axis(0), b);
        out.row_mut(0).assign(&sample.row(0));
        for (slot, &t) in ranked[..k].iter().enumerate() {
            out.row_mut(slot + 1).assign(&sample.row(t));
        }
        let discarded = &ranked[k..];
        if !discarded.is_empty() {
            let mass: f64 = discarded.iter().map(|&t| row[t - 1]).sum();
            let mut merged = out.row_mut(k + 1);
            if mass > 0.0 {
                for &t in discarded {
                    merged.scaled_add(row[t - 1] / mass, &sample.row(t));
                }
            } else {
                // all discarded weights underflowed: plain average
                let w = 1.0 / discarded.len() as f64;
                for &t in discarded {
                    merged.scaled_add(w, &sample.row(t));
                }
            }
        }
        selected.push(ranked[..k].to_vec());
    }
    Ok(RefinedBatch {
        values,
        selected,
        merged_defined: k < n,
    })
}

/// Seeded standard-normal activations plus `1/sqrt(D)`-scaled query/key projections.
pub fn synth_activation_batch(
    seed: u64,
    params: &SystemParams,
) -> (ActivationBatch, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, t, d) = (params.batch_size, params.num_patches + 1, params.embed_dim);
    let values = Array3::from_shape_simple_fn((b, t, d), || StandardNormal.sample(&mut rng));
    let scale = 1.0 / (d as f64).sqrt();
    let mut proj = || {
        Array2::from_shape_simple_fn((d, d), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    };
    let wq = proj();
    let wk = proj();
    (ActivationBatch { values }, wq, wk)
}

/// Convenience: synthetic batch straight to its importance profile.
pub fn synth_importance(seed: u64, params: &SystemParams) -> ImportanceProfile {
    synth_importance_scaled(seed, params, 1.0)
}

/// As [`synth_importance`] with attention logits multiplied by `logit_scale`.
/// Small scales flatten the profile towards uniform.
pub fn synth_importance_scaled(seed: u64, params: &SystemParams, logit_scale: f64) -> ImportanceProfile {
    let (batch, wq, wk) = synth_activation_batch(seed, params);
    let wq = wq * logit_scale;
    let scores = cls_attention(&batch, &wq, &wk).expect("synthetic tensors are finite");
    batch_importance(&scores)
}

/// Write a tensor as a little-endian dump: three `u32` dims, then `f32` values.
pub fn write_tensor<W: Write>(mut w: W, values: &Array3<f64>) -> io::Result<()> {
    for &dim in values.shape() {
        let dim = u32::try_from(dim)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
        w.write_all(&dim.to_le_bytes())?;
    }
    for &v in values.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()
}

pub fn read_tensor<R: Read>(mut r: R) -> io::Result<Array3<f32>> {
    let mut dims = [0usize; 3];
    let mut buf = [0u8; 4];
    for d in &mut dims {
        r.read_exact(&mut buf)?;
        *d = u32::from_le_bytes(buf) as usize;
    }
    let len = dims[0] * dims[1] * dims[2];
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf));
    }
    Array3::from_shape_vec((dims[0], dims[1], dims[2]), data)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// View of the kept tokens of sample `b`, excluding CLS and the merged slot.
pub fn kept_tokens(refined: &RefinedBatch, b: usize) -> ndarray::ArrayView2<'_, f64> {
    let k = refined.values.shape()[1] - 2;
    refined.values.slice(s![b, 1..=k, ..])
}
