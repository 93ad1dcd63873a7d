//! Comparison methods: a PCA-based baseline (non-centred PCA over fully
//! flattened samples on both sides, fully connected network between the
//! coefficient vectors) and the separate-vs-overall singular-value decay
//! analysis.
//!
//! The baseline runs on the same optimizer, loss and metric implementations
//! as the spectral operator, so accuracy comparisons isolate the
//! architecture.

use std::time::Instant;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::metrics;
use crate::norm::Activation;
use crate::reduction::{energy_truncation, pod_singular_values, ReduceAxis, SnapshotTensor};
use crate::spectral::{normalize_signs, BasisKind, EigenBasis};
use crate::train::{AdamState, EpochRecord, step_lr};

/// Full singular-value spectrum of the per-sample flattened matrix
/// (overall space-time reduction), descending, length `n_samples`.
pub fn flatten_singular_values(data: &SnapshotTensor) -> Result<Vec<f64>> {
    let (vals, _) = flatten_eigen(data)?;
    Ok(vals)
}

fn flatten_eigen(data: &SnapshotTensor) -> Result<(Vec<f64>, Mat)> {
    let s = data.flattened_matrix(); // n x D
    let gram = s.mul_a_bt(&s); // n x n
    let (vals, mut vecs) = crate::linalg::sym_eigen(&gram)?;
    normalize_signs(&mut vecs);
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        vals[b].partial_cmp(&vals[a]).unwrap().then_with(|| {
            for i in 0..vecs.rows() {
                let cmp = vecs.at(i, a).partial_cmp(&vecs.at(i, b)).unwrap();
                if cmp != std::cmp::Ordering::Equal {
                    return cmp;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let mut singular = Vec::with_capacity(n);
    let mut ordered = Mat::zeros(n, n);
    for (col, &src) in idx.iter().enumerate() {
        singular.push(vals[src].max(0.0).sqrt());
        for i in 0..n {
            *ordered.at_mut(i, col) = vecs.at(i, src);
        }
    }
    Ok((singular, ordered))
}

/// Non-centred PCA basis over fully flattened per-sample vectors (space and
/// time jointly). Computed through the `n x n` sample Gram matrix; the basis
/// vectors are recovered as normalized combinations of the samples, so `k`
/// cannot exceed the numerical rank of the sample set.
pub fn pca_flatten_basis(data: &SnapshotTensor, k: usize) -> Result<EigenBasis> {
    let n = data.n_samples();
    let dim = data.sample_len();
    if k == 0 || k > dim || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} PCA modes from {n} samples of dimension {dim}"
        )));
    }
    let (singular, vecs) = flatten_eigen(data)?;
    let tol = singular[0] * 1e-12;
    if singular[k - 1] <= tol {
        return Err(Error::Numerical(format!(
            "sample set has numerical rank below {k} (sigma_{k} = {:.3e})",
            singular[k - 1]
        )));
    }
    let s = data.flattened_matrix();
    let mut basis_vecs = Mat::zeros(dim, k);
    for j in 0..k {
        // phi_j = S^T v_j / sigma_j
        for r in 0..n {
            let w = vecs.at(r, j) / singular[j];
            if w != 0.0 {
                let row = s.row(r);
                for i in 0..dim {
                    *basis_vecs.at_mut(i, j) += w * row[i];
                }
            }
        }
    }
    normalize_signs(&mut basis_vecs);
    EigenBasis::new(BasisKind::Pod, basis_vecs, singular[..k].to_vec(), vec![1.0; dim])
}

/// Separate (per-axis) versus overall (flattened) singular value decay and
/// the mode counts needed to reach 99% energy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvdDecayReport {
    pub separate: Vec<f64>,
    pub overall: Vec<f64>,
    pub k99_separate: usize,
    pub k99_overall: usize,
}

pub fn svd_decay_report(data: &SnapshotTensor, axis: ReduceAxis) -> Result<SvdDecayReport> {
    let separate = pod_singular_values(data, axis)?;
    let overall = flatten_singular_values(data)?;
    let k99_separate = energy_truncation(&separate, 0.99)?;
    let k99_overall = energy_truncation(&overall, 0.99)?;
    Ok(SvdDecayReport {
        separate,
        overall,
        k99_separate,
        k99_overall,
    })
}

/// Fully connected network: affine layers with a hidden activation.
#[derive(Clone, Debug)]
pub struct FcParams {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

impl FcParams {
    pub fn init(seed: u64, dims: &[usize], activation: Activation) -> Result<FcParams> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument("FC network needs at least two positive dims".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound);
            let mut w = Mat::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = dist.sample(&mut rng);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(FcParams {
            weights,
            biases,
            activation,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].cols()];
        for w in &self.weights {
            d.push(w.rows());
        }
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = b.clone();
            for (o, item) in next.iter_mut().enumerate() {
                *item += dot(w.row(o), &cur);
            }
            if l != last {
                for v in &mut next {
                    *v = self.activation.apply(*v);
                }
            }
            cur = next;
        }
        cur
    }

    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        // returns (pre-activations per layer, post-activation inputs per layer)
        let mut pres = Vec::with_capacity(self.weights.len());
        let mut ins = Vec::with_capacity(self.weights.len());
        let mut cur = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            ins.push(cur.clone());
            let mut pre = b.clone();
            for (o, item) in pre.iter_mut().enumerate() {
                *item += dot(w.row(o), &cur);
            }
            cur = if l != last {
                pre.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                pre.clone()
            };
            pres.push(pre);
        }
        ins.push(cur);
        (pres, ins)
    }
}

/// Mean relative-L2 loss over the indexed batch of coefficient pairs plus
/// its exact gradient.
pub fn fc_batch_loss_and_grads(
    params: &FcParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    idxs: &[usize],
) -> Result<(f64, FcParams)> {
    if idxs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = params.clone();
    for t in grads.tensors_mut() {
        for v in t {
            *v = 0.0;
        }
    }
    let inv_batch = 1.0 / idxs.len() as f64;
    let mut loss = 0.0;
    let last = params.weights.len() - 1;
    for &i in idxs {
        let (pres, ins) = params.forward_cached(&inputs[i]);
        let pred = ins.last().unwrap();
        let truth = &targets[i];
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch("FC target length mismatch".into()));
        }
        let mut res_sq = 0.0;
        let mut tru_sq = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            res_sq += (p - t) * (p - t);
            tru_sq += t * t;
        }
        if tru_sq == 0.0 {
            return Err(Error::Numerical(format!("target sample {i} has zero norm")));
        }
        let res_norm = res_sq.sqrt();
        let tru_norm = tru_sq.sqrt();
        loss += res_norm / tru_norm * inv_batch;
        if res_norm == 0.0 {
            continue;
        }
        let scale = inv_batch / (res_norm * tru_norm);
        let mut delta: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t) * scale).collect();
        for l in (0..params.weights.len()).rev() {
            if l != last {
                for (d, pre) in delta.iter_mut().zip(&pres[l]) {
                    *d *= params.activation.derivative(*pre);
                }
            }
            let input = &ins[l];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                if *d != 0.0 {
                    let row = grads.weights[l].row_mut(o);
                    for (q, x) in input.iter().enumerate() {
                        row[q] += d * x;
                    }
                }
            }
            if l > 0 {
                let mut next_delta = vec![0.0; input.len()];
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        let row = params.weights[l].row(o);
                        for (q, nd) in next_delta.iter_mut().enumerate() {
                            *nd += d * row[q];
                        }
                    }
                }
                delta = next_delta;
            }
        }
    }
    Ok((loss, grads))
}

#[derive(Serialize, Deserialize)]
struct FcCheckpointHeader {
    schema_version: u32,
    dims: Vec<usize>,
    activation: Activation,
    seed: u64,
    config_hash: String,
}

impl FcParams {
    pub fn save(&self, path: impl AsRef<std::path::Path>, seed: u64, config_hash: &str) -> Result<()> {
        let header = FcCheckpointHeader {
            schema_version: 1,
            dims: self.dims(),
            activation: self.activation,
            seed,
            config_hash: config_hash.to_string(),
        };
        let tensors = self.tensors();
        let mut names = Vec::new();
        for l in 0..self.weights.len() {
            names.push(format!("layer{l}_w"));
            names.push(format!("layer{l}_b"));
        }
        let blobs: Vec<(&str, &[f64])> = names
            .iter()
            .map(|n| n.as_str())
            .zip(tensors.iter().copied())
            .collect();
        crate::container::write_blob_file(path, &header, &blobs)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(FcParams, u64, String)> {
        let bytes = std::fs::read(path)?;
        FcParams::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(FcParams, u64, String)> {
        let (header, mut blobs): (FcCheckpointHeader, _) = crate::container::read_blob_bytes(bytes)?;
        if header.schema_version != 1 {
            return Err(Error::Container(format!(
                "unsupported FC checkpoint schema_version {}",
                header.schema_version
            )));
        }
        if header.dims.len() < 2 || header.dims.contains(&0) || header.dims.len() > 64 {
            return Err(Error::Container("bad FC checkpoint dims".into()));
        }
        // bound total size before allocating anything
        let mut total = 0usize;
        for win in header.dims.windows(2) {
            let layer = win[0]
                .checked_mul(win[1])
                .and_then(|w| w.checked_add(win[1]))
                .ok_or_else(|| Error::Container("FC checkpoint dims overflow".into()))?;
            total = total
                .checked_add(layer)
                .filter(|&t| (t as u64) * 8 <= 1 << 33)
                .ok_or_else(|| Error::Container("FC checkpoint is implausibly large".into()))?;
        }
        let mut fc = FcParams::init(0, &header.dims, header.activation)?;
        for (l, win) in header.dims.windows(2).enumerate() {
            let w = crate::container::take_blob(&mut blobs, &format!("layer{l}_w"), win[0] * win[1])?;
            fc.weights[l] = Mat::from_vec(win[1], win[0], w);
            fc.biases[l] = crate::container::take_blob(&mut blobs, &format!("layer{l}_b"), win[1])?;
        }
        if fc.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Container("FC checkpoint contains non-finite values".into()));
        }
        Ok((fc, header.seed, header.config_hash))
    }
}

/// Hyperparameters of the PCA baseline's fully connected approximator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FcConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_every")]
    pub step_lr_every: usize,
    #[serde(default = "default_gamma")]
    pub step_lr_gamma: f64,
    pub seed: u64,
    #[serde(default = "default_act")]
    pub activation: Activation,
}

fn default_every() -> usize {
    usize::MAX
}

fn default_gamma() -> f64 {
    1.0
}

fn default_act() -> Activation {
    Activation::Gelu
}

pub struct PcaNetArtifacts {
    pub fc: FcParams,
    pub in_basis: EigenBasis,
    pub out_basis: EigenBasis,
    pub log: Vec<EpochRecord>,
    pub wall_clock_s: f64,
}

impl PcaNetArtifacts {
    /// Decode predictions for a dataset's inputs back to field space.
    pub fn predict(&self, ds: &Dataset) -> Result<SnapshotTensor> {
        let n = ds.a.n_samples();
        let mut data = Vec::with_capacity(n * ds.u.sample_len());
        for i in 0..n {
            let coeff = project_flat(&self.in_basis, ds.a.sample(i));
            let pred_coeff = self.fc.forward(&coeff);
            let field = reconstruct_flat(&self.out_basis, &pred_coeff);
            data.extend_from_slice(&field);
        }
        SnapshotTensor::new(data, n, ds.u.n_x(), ds.u.n_t(), ds.u.channels(), ds.u.dt())
    }
}

fn project_flat(basis: &EigenBasis, sample: &[f64]) -> Vec<f64> {
    // unit weights: plain dot products with the basis columns
    let k = basis.k();
    let mut out = vec![0.0; k];
    for (i, &v) in sample.iter().enumerate() {
        if v != 0.0 {
            let row = basis.vectors.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o += v * row[j];
            }
        }
    }
    out
}

fn reconstruct_flat(basis: &EigenBasis, coeff: &[f64]) -> Vec<f64> {
    let dim = basis.n_points();
    let mut out = vec![0.0; dim];
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(basis.vectors.row(i), coeff);
    }
    out
}

/// Train the PCA baseline: PCA bases on the training split only, then the FC
/// network on coefficient pairs. Evaluation decodes through the output basis
/// and reports field-space metrics.
pub fn train_pca_net(
    train: &Dataset,
    test: &Dataset,
    k_in: usize,
    k_out: usize,
    cfg: &FcConfig,
) -> Result<PcaNetArtifacts> {
    if cfg.batch_size == 0 || !cfg.lr.is_finite() || cfg.lr <= 0.0 {
        return Err(Error::Config("FC config needs batch_size > 0 and lr > 0".into()));
    }
    let start = Instant::now();
    let in_basis = pca_flatten_basis(&train.a, k_in)?;
    let out_basis = pca_flatten_basis(&train.u, k_out)?;

    let inputs: Vec<Vec<f64>> = (0..train.a.n_samples())
        .map(|i| project_flat(&in_basis, train.a.sample(i)))
        .collect();
    let targets: Vec<Vec<f64>> = (0..train.u.n_samples())
        .map(|i| project_flat(&out_basis, train.u.sample(i)))
        .collect();
    let test_inputs: Vec<Vec<f64>> = (0..test.a.n_samples())
        .map(|i| project_flat(&in_basis, test.a.sample(i)))
        .collect();

    let mut dims = vec![k_in];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(k_out);
    let mut fc = FcParams::init(cfg.seed, &dims, cfg.activation)?;
    let mut state = AdamState::new_like(&fc.tensors());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x53_48_55_46_46_4c);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = step_lr(cfg.lr, cfg.step_lr_gamma, cfg.step_lr_every.min(1_000_000_000), epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = fc_batch_loss_and_grads(&fc, &inputs, &targets, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            let g = grads.tensors();
            let mut p = fc.tensors_mut();
            state.apply(&mut p, &g, lr);
        }
        epoch_loss /= inputs.len() as f64;

        // field-space test metrics, decoded through the output basis
        let mut pred_data = Vec::with_capacity(test.u.n_samples() * test.u.sample_len());
        for ti in &test_inputs {
            let c = fc.forward(ti);
            pred_data.extend_from_slice(&reconstruct_flat(&out_basis, &c));
        }
        let pred = SnapshotTensor::new(
            pred_data,
            test.u.n_samples(),
            test.u.n_x(),
            test.u.n_t(),
            test.u.channels(),
            test.u.dt(),
        )?;
        let e = metrics::e_l2(&pred, &test.u)?;
        let m = metrics::mme(&pred, &test.u)?;
        log.push(EpochRecord {
            epoch,
            lr,
            train_loss: epoch_loss,
            test_e_l2: e.mean,
            test_mme: m,
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
    }

    Ok(PcaNetArtifacts {
        fc,
        in_basis,
        out_basis,
        log,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}
