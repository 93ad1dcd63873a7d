//! Training pipelines for the four unequal-domain mapping kinds: exact
//! reverse-mode gradients through the fixed architecture (including the
//! decoding step when training against full fields), Adam with a step decay
//! schedule, and per-epoch logging.
//!
//! Increase-domain training follows the online/offline split: online computes
//! the loss on decoded spatio-temporal fields, offline on the weight
//! coefficients directly. Decrease-domain training encodes the inputs once up
//! front and maps weight fields to same-domain outputs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Mat};
use crate::metrics::{self, ZeroNormPolicy};
use crate::norm::{
    accumulate_vjp, forward_with_cache, init_params, Activation, NormParams, NormShape, SpectralContext,
};
use crate::reduction::{encode_unequal, ReduceAxis, SnapshotTensor};
use crate::spectral::EigenBasis;

/// The four unequal-domain mapping categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    /// a(x) -> u(x,t)
    IncreaseFromSpace,
    /// a(t) -> u(x,t)
    IncreaseFromTime,
    /// a(x,t) -> u(x)
    DecreaseToSpace,
    /// a(x,t) -> u(t)
    DecreaseToTime,
}

impl MappingKind {
    pub fn is_increase(self) -> bool {
        matches!(self, MappingKind::IncreaseFromSpace | MappingKind::IncreaseFromTime)
    }

    /// Axis removed from the spatio-temporal side by the encoder/decoder.
    pub fn reduction_axis(self) -> ReduceAxis {
        match self {
            MappingKind::IncreaseFromSpace | MappingKind::DecreaseToSpace => ReduceAxis::Time,
            MappingKind::IncreaseFromTime | MappingKind::DecreaseToTime => ReduceAxis::Space,
        }
    }

    /// Axis the same-domain approximator lives on.
    pub fn network_axis(self) -> ReduceAxis {
        match self.reduction_axis() {
            ReduceAxis::Time => ReduceAxis::Space,
            ReduceAxis::Space => ReduceAxis::Time,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reconstruction {
    Online,
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    /// Data-dependent POD basis computed on the training split.
    Pod,
    /// Domain-intrinsic basis: Laplacian eigenfunctions in space, Fourier in time.
    Intrinsic,
}

/// One training run's hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub step_lr_every: usize,
    pub step_lr_gamma: f64,
    #[serde(default = "default_reconstruction")]
    pub reconstruction: Reconstruction,
    pub truncated_modes: usize,
    pub lmodes: usize,
    pub width: usize,
    pub n_l: usize,
    #[serde(default = "default_basis_family")]
    pub basis_family: BasisFamily,
    pub seed: u64,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_d_proj")]
    pub d_proj: usize,
}

fn default_reconstruction() -> Reconstruction {
    Reconstruction::Online
}

fn default_basis_family() -> BasisFamily {
    BasisFamily::Pod
}

fn default_activation() -> Activation {
    Activation::Gelu
}

fn default_d_proj() -> usize {
    128
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.step_lr_every == 0
            || self.truncated_modes == 0
            || self.lmodes == 0
            || self.width == 0
            || self.n_l == 0
            || self.d_proj == 0
        {
            return Err(Error::Config("all structural hyperparameters must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.step_lr_gamma > 0.0 && self.step_lr_gamma <= 1.0) {
            return Err(Error::Config(format!(
                "step_lr_gamma must lie in (0,1], got {}",
                self.step_lr_gamma
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::container::sha256_hex(json.as_bytes())
    }
}

/// Effective learning rate at (zero-based) epoch `e`:
/// `lr * gamma^floor(e / every)`, exactly.
pub fn step_lr(base: f64, gamma: f64, every: usize, epoch: usize) -> f64 {
    base * gamma.powi((epoch / every) as i32)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates for a list of flat parameter tensors.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new_like(tensors: &[&[f64]]) -> AdamState {
        AdamState {
            m: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update with bias correction.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Convenience wrapper applying Adam to a whole parameter struct.
pub fn adam_step(params: &mut NormParams, grads: &NormParams, state: &mut AdamState, lr: f64) {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.apply(&mut p, &g, lr);
}

/// Mean relative L2 loss over a batch of equally shaped fields. Zero-norm
/// truth samples are a hard error here (training mode).
pub fn relative_l2_loss(pred: &[Mat], truth: &[Mat]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch("batch sizes differ or are empty".into()));
    }
    let len = pred[0].data().len();
    let mut p = Vec::with_capacity(pred.len() * len);
    let mut t = Vec::with_capacity(pred.len() * len);
    for (a, b) in pred.iter().zip(truth) {
        if a.data().len() != len || b.data().len() != len {
            return Err(Error::DimensionMismatch("field shapes differ within batch".into()));
        }
        p.extend_from_slice(a.data());
        t.extend_from_slice(b.data());
    }
    Ok(metrics::relative_l2(&p, &t, pred.len(), ZeroNormPolicy::Error)?.mean)
}

/// Decoding of network outputs (weight fields on the kept axis) back to
/// spatio-temporal fields, against a fixed reduction basis.
pub struct DecodeSpec<'a> {
    pub basis: &'a EigenBasis,
    pub c_u: usize,
    pub reduced: ReduceAxis,
}

impl<'a> DecodeSpec<'a> {
    fn n_ax(&self) -> usize {
        self.basis.n_points()
    }

    fn d(&self) -> usize {
        self.basis.k()
    }

    /// Decode `w` (n_dom x c_u*d, channel-major weight blocks) into the
    /// (x, t, ch) field layout.
    pub fn decode(&self, w: &Mat) -> Vec<f64> {
        let n_dom = w.rows();
        let (d, c, n_ax) = (self.d(), self.c_u, self.n_ax());
        let phi = &self.basis.vectors;
        let mut out = vec![0.0; n_dom * n_ax * c];
        for p in 0..n_dom {
            let wrow = w.row(p);
            for ax in 0..n_ax {
                let prow = phi.row(ax);
                for ch in 0..c {
                    let v = dot(&wrow[ch * d..(ch + 1) * d], prow);
                    let idx = match self.reduced {
                        ReduceAxis::Time => (p * n_ax + ax) * c + ch,
                        ReduceAxis::Space => (ax * n_dom + p) * c + ch,
                    };
                    out[idx] = v;
                }
            }
        }
        out
    }

    /// Adjoint of [`DecodeSpec::decode`]: pull a field-space gradient back to
    /// the weight-space layout.
    fn adjoint(&self, d_field: &[f64], n_dom: usize) -> Mat {
        let (d, c, n_ax) = (self.d(), self.c_u, self.n_ax());
        let phi = &self.basis.vectors;
        let mut grad = Mat::zeros(n_dom, c * d);
        for p in 0..n_dom {
            let grow = grad.row_mut(p);
            for ax in 0..n_ax {
                let prow = phi.row(ax);
                for ch in 0..c {
                    let idx = match self.reduced {
                        ReduceAxis::Time => (p * n_ax + ax) * c + ch,
                        ReduceAxis::Space => (ax * n_dom + p) * c + ch,
                    };
                    let g = d_field[idx];
                    if g != 0.0 {
                        axpy(g, prow, &mut grow[ch * d..(ch + 1) * d]);
                    }
                }
            }
        }
        grad
    }
}

/// Everything the differentiable part of a training step needs.
pub struct Pipeline<'a> {
    pub layer_ctx: SpectralContext,
    /// Present when the loss is computed on decoded fields (online increase).
    pub decode: Option<DecodeSpec<'a>>,
}

impl<'a> Pipeline<'a> {
    /// Prediction for one input in the target layout (field layout when
    /// decoding, nodal row-major otherwise).
    pub fn predict(&self, params: &NormParams, input: &Mat) -> Result<Vec<f64>> {
        let cache = forward_with_cache(params, input, &self.layer_ctx)?;
        Ok(match &self.decode {
            Some(spec) => spec.decode(&cache.out),
            None => cache.out.into_data(),
        })
    }
}

/// Mean loss over the indexed batch and its exact gradient with respect to
/// every parameter tensor.
pub fn batch_loss_and_grads(
    params: &NormParams,
    pipe: &Pipeline,
    inputs: &[Mat],
    targets: &[Vec<f64>],
    idxs: &[usize],
) -> Result<(f64, NormParams)> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch("inputs/targets length mismatch".into()));
    }
    if idxs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let inv_batch = 1.0 / idxs.len() as f64;
    for &i in idxs {
        let cache = forward_with_cache(params, &inputs[i], &pipe.layer_ctx)?;
        let pred = match &pipe.decode {
            Some(spec) => spec.decode(&cache.out),
            None => cache.out.data().to_vec(),
        };
        let truth = &targets[i];
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample {i}: prediction has {} values, target {}",
                pred.len(),
                truth.len()
            )));
        }
        let mut res_sq = 0.0;
        let mut tru_sq = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            let r = p - t;
            res_sq += r * r;
            tru_sq += t * t;
        }
        if tru_sq == 0.0 {
            return Err(Error::Numerical(format!("target sample {i} has zero norm")));
        }
        let res_norm = res_sq.sqrt();
        let tru_norm = tru_sq.sqrt();
        loss += res_norm / tru_norm * inv_batch;

        if res_norm > 0.0 {
            let scale = inv_batch / (res_norm * tru_norm);
            let mut d_pred = Vec::with_capacity(pred.len());
            for (p, t) in pred.iter().zip(truth) {
                d_pred.push((p - t) * scale);
            }
            let d_out = match &pipe.decode {
                Some(spec) => spec.adjoint(&d_pred, cache.out.rows()),
                None => Mat::from_vec(cache.out.rows(), cache.out.cols(), d_pred),
            };
            accumulate_vjp(params, &cache, &pipe.layer_ctx, &d_out, &mut grads);
        }
    }
    Ok((loss, grads))
}

/// One row of the training log CSV.
#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_e_l2: f64,
    pub test_mme: f64,
    pub wall_clock_s: f64,
}

pub fn log_to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,test_e_l2,test_mme,wall_clock_s\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.lr, r.train_loss, r.test_e_l2, r.test_mme, r.wall_clock_s
        ));
    }
    out
}

/// Result of one training run.
pub struct TrainArtifacts {
    pub params: NormParams,
    pub log: Vec<EpochRecord>,
    pub input_mean: Option<Vec<f64>>,
    pub input_std: Option<Vec<f64>>,
    pub wall_clock_s: f64,
}

/// Per-channel standardization statistics over a set of equally shaped inputs.
fn input_stats(inputs: &[Mat]) -> (Vec<f64>, Vec<f64>) {
    let c = inputs[0].cols();
    let mut mean = vec![0.0; c];
    let mut count = 0usize;
    for m in inputs {
        for i in 0..m.rows() {
            for (j, v) in m.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        count += m.rows();
    }
    for v in &mut mean {
        *v /= count as f64;
    }
    let mut var = vec![0.0; c];
    for m in inputs {
        for i in 0..m.rows() {
            for (j, v) in m.row(i).iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|&v| {
            let s = (v / count as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

pub fn standardize_inputs(inputs: &mut [Mat], mean: &[f64], std: &[f64]) {
    for m in inputs {
        for i in 0..m.rows() {
            for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                *v = (*v - mean[j]) / std[j];
            }
        }
    }
}

/// Network inputs for a dataset: the raw same-domain function for increase
/// mappings, the encoded weight field for decrease mappings.
pub fn build_network_inputs(ds: &Dataset, in_basis: Option<&EigenBasis>) -> Result<Vec<Mat>> {
    let kind = ds.header.mapping_kind;
    match kind {
        MappingKind::IncreaseFromSpace | MappingKind::IncreaseFromTime => {
            let n_dom = match kind.network_axis() {
                ReduceAxis::Space => ds.a.n_x(),
                ReduceAxis::Time => ds.a.n_t(),
            };
            let c = ds.a.channels();
            Ok((0..ds.a.n_samples())
                .map(|i| Mat::from_vec(n_dom, c, ds.a.sample(i).to_vec()))
                .collect())
        }
        MappingKind::DecreaseToSpace | MappingKind::DecreaseToTime => {
            let basis = in_basis.ok_or_else(|| {
                Error::InvalidArgument("decrease-domain mapping needs an input-side basis".into())
            })?;
            let wf = encode_unequal(&ds.a, basis, kind.reduction_axis())?;
            Ok((0..wf.n_samples()).map(|i| wf.sample_as_mat(i)).collect())
        }
    }
}

fn check_layer_basis(layer_basis: &EigenBasis, cfg: &TrainConfig, n_dom: usize) -> Result<()> {
    if layer_basis.k() != cfg.lmodes {
        return Err(Error::Config(format!(
            "layer basis has {} modes, config lmodes is {}",
            layer_basis.k(),
            cfg.lmodes
        )));
    }
    if layer_basis.n_points() != n_dom {
        return Err(Error::DimensionMismatch(format!(
            "layer basis lives on {} points, network domain has {n_dom}",
            layer_basis.n_points()
        )));
    }
    Ok(())
}

struct LoopSetup<'a> {
    pipe: Pipeline<'a>,
    inputs: Vec<Mat>,
    targets: Vec<Vec<f64>>,
    test_inputs: Vec<Mat>,
    params: NormParams,
    input_mean: Option<Vec<f64>>,
    input_std: Option<Vec<f64>>,
}

fn run_epochs(
    mut setup: LoopSetup,
    cfg: &TrainConfig,
    test_truth: &SnapshotTensor,
    decode_for_eval: Option<&DecodeSpec>,
    eval_extent: (usize, usize, usize),
) -> Result<TrainArtifacts> {
    let start = Instant::now();
    let n = setup.inputs.len();
    let mut state = AdamState::new_like(&setup.params.tensors());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x53_48_55_46_46_4c);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let lr = step_lr(cfg.lr, cfg.step_lr_gamma, cfg.step_lr_every, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) =
                batch_loss_and_grads(&setup.params, &setup.pipe, &setup.inputs, &setup.targets, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            adam_step(&mut setup.params, &grads, &mut state, lr);
        }
        epoch_loss /= n as f64;

        let pred = predict_tensor(
            &setup.params,
            &setup.pipe,
            &setup.test_inputs,
            decode_for_eval,
            eval_extent,
            test_truth.dt(),
        )
        .map_err(|e| Error::Numerical(format!("epoch {epoch}: {e}")))?;
        let e = metrics::e_l2(&pred, test_truth)?;
        let m = metrics::mme(&pred, test_truth)?;
        log.push(EpochRecord {
            epoch,
            lr,
            train_loss: epoch_loss,
            test_e_l2: e.mean,
            test_mme: m,
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainArtifacts {
        params: setup.params,
        log,
        input_mean: setup.input_mean,
        input_std: setup.input_std,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn predict_tensor(
    params: &NormParams,
    pipe: &Pipeline,
    inputs: &[Mat],
    decode_for_eval: Option<&DecodeSpec>,
    (n_x, n_t, c_u): (usize, usize, usize),
    dt: f64,
) -> Result<SnapshotTensor> {
    let n = inputs.len();
    let mut data = Vec::with_capacity(n * n_x * n_t * c_u);
    for input in inputs {
        let cache = forward_with_cache(params, input, &pipe.layer_ctx)?;
        let flat = match (&pipe.decode, decode_for_eval) {
            (Some(spec), _) => spec.decode(&cache.out),
            (None, Some(spec)) => spec.decode(&cache.out),
            (None, None) => cache.out.into_data(),
        };
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite prediction".into()));
        }
        data.extend_from_slice(&flat);
    }
    SnapshotTensor::new(data, n, n_x, n_t, c_u, dt)
}

/// Train the operator for an increase-domain mapping.
///
/// `out_basis` is the reduction basis on the output's extra axis (POD from
/// the training outputs, or intrinsic); `layer_basis` is the same-domain
/// basis used inside the kernel-integral layers.
pub fn train_increase(
    train: &Dataset,
    test: &Dataset,
    out_basis: &EigenBasis,
    layer_basis: &EigenBasis,
    cfg: &TrainConfig,
) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let kind = train.header.mapping_kind;
    if !kind.is_increase() {
        return Err(Error::Config(format!("train_increase called on {kind:?} dataset")));
    }
    if test.header.mapping_kind != kind {
        return Err(Error::Config("train/test mapping kinds differ".into()));
    }
    if out_basis.k() != cfg.truncated_modes {
        return Err(Error::Config(format!(
            "output basis has {} modes, config truncated_modes is {}",
            out_basis.k(),
            cfg.truncated_modes
        )));
    }
    let reduce = kind.reduction_axis();
    if out_basis.n_points() != train.u.axis_len(reduce) {
        return Err(Error::DimensionMismatch(
            "output basis does not match the reduced axis of u".into(),
        ));
    }

    let mut inputs = build_network_inputs(train, None)?;
    let test_inputs_raw = build_network_inputs(test, None)?;
    let n_dom = inputs[0].rows();
    check_layer_basis(layer_basis, cfg, n_dom)?;

    let (input_mean, input_std) = if cfg.normalize {
        let (m, s) = input_stats(&inputs);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let mut test_inputs = test_inputs_raw;
    if let (Some(m), Some(s)) = (&input_mean, &input_std) {
        standardize_inputs(&mut inputs, m, s);
        standardize_inputs(&mut test_inputs, m, s);
    }

    let c_u = train.u.channels();
    let c_in = train.a.channels();
    let c_out = cfg.truncated_modes * c_u;
    let shape = NormShape {
        c_in,
        c_out,
        d_w: cfg.width,
        d_proj: cfg.d_proj,
        n_l: cfg.n_l,
        d_m: cfg.lmodes,
    };
    let params = init_params(cfg.seed, shape, cfg.activation)?;

    let decode = DecodeSpec {
        basis: out_basis,
        c_u,
        reduced: reduce,
    };
    let targets: Vec<Vec<f64>> = match cfg.reconstruction {
        Reconstruction::Online => (0..train.u.n_samples())
            .map(|i| train.u.sample(i).to_vec())
            .collect(),
        Reconstruction::Offline => {
            let wf = encode_unequal(&train.u, out_basis, reduce)?;
            (0..wf.n_samples()).map(|i| wf.sample_as_mat(i).into_data()).collect()
        }
    };

    let pipe = Pipeline {
        layer_ctx: SpectralContext::new(layer_basis),
        decode: match cfg.reconstruction {
            Reconstruction::Online => Some(decode),
            Reconstruction::Offline => None,
        },
    };
    // evaluation always decodes to field space so online and offline runs
    // report comparable test metrics
    let eval_decode = DecodeSpec {
        basis: out_basis,
        c_u,
        reduced: reduce,
    };
    let eval_extent = (test.u.n_x(), test.u.n_t(), c_u);

    let setup = LoopSetup {
        pipe,
        inputs,
        targets,
        test_inputs,
        params,
        input_mean,
        input_std,
    };
    run_epochs(setup, cfg, &test.u, Some(&eval_decode), eval_extent)
}

/// Train the operator for a decrease-domain mapping. Inputs are encoded once
/// through `in_basis`; the network maps the weight field to the output.
pub fn train_decrease(
    train: &Dataset,
    test: &Dataset,
    in_basis: &EigenBasis,
    layer_basis: &EigenBasis,
    cfg: &TrainConfig,
) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let kind = train.header.mapping_kind;
    if kind.is_increase() {
        return Err(Error::Config(format!("train_decrease called on {kind:?} dataset")));
    }
    if test.header.mapping_kind != kind {
        return Err(Error::Config("train/test mapping kinds differ".into()));
    }
    if in_basis.k() != cfg.truncated_modes {
        return Err(Error::Config(format!(
            "input basis has {} modes, config truncated_modes is {}",
            in_basis.k(),
            cfg.truncated_modes
        )));
    }
    let reduce = kind.reduction_axis();
    if in_basis.n_points() != train.a.axis_len(reduce) {
        return Err(Error::DimensionMismatch(
            "input basis does not match the reduced axis of a".into(),
        ));
    }

    let mut inputs = build_network_inputs(train, Some(in_basis))?;
    let mut test_inputs = build_network_inputs(test, Some(in_basis))?;
    let n_dom = inputs[0].rows();
    check_layer_basis(layer_basis, cfg, n_dom)?;

    let (input_mean, input_std) = if cfg.normalize {
        let (m, s) = input_stats(&inputs);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    if let (Some(m), Some(s)) = (&input_mean, &input_std) {
        standardize_inputs(&mut inputs, m, s);
        standardize_inputs(&mut test_inputs, m, s);
    }

    let c_in = train.a.channels() * cfg.truncated_modes;
    let c_out = train.u.channels();
    let shape = NormShape {
        c_in,
        c_out,
        d_w: cfg.width,
        d_proj: cfg.d_proj,
        n_l: cfg.n_l,
        d_m: cfg.lmodes,
    };
    let params = init_params(cfg.seed, shape, cfg.activation)?;

    let targets: Vec<Vec<f64>> = (0..train.u.n_samples())
        .map(|i| train.u.sample(i).to_vec())
        .collect();

    let pipe = Pipeline {
        layer_ctx: SpectralContext::new(layer_basis),
        decode: None,
    };
    let eval_extent = (test.u.n_x(), test.u.n_t(), c_out);

    let setup = LoopSetup {
        pipe,
        inputs,
        targets,
        test_inputs,
        params,
        input_mean,
        input_std,
    };
    run_epochs(setup, cfg, &test.u, None, eval_extent)
}

/// Reduction and layer bases for one training run.
///
/// The reduction basis lives on the extra axis of the spatio-temporal side
/// (outputs for increase mappings, inputs for decrease mappings): POD from
/// the training split, or the intrinsic family (Fourier in time, Laplacian
/// eigenfunctions in space). The layer basis always lives on the network's
/// domain and is always intrinsic.
pub fn prepare_bases(
    train: &Dataset,
    cfg: &TrainConfig,
    mesh: Option<&crate::mesh::TriMesh>,
) -> Result<(EigenBasis, EigenBasis)> {
    let kind = train.header.mapping_kind;
    let reduce = kind.reduction_axis();
    let st_side = if kind.is_increase() { &train.u } else { &train.a };
    let period = train.header.dt * train.header.n_t as f64;

    let mesh_ops = || -> Result<(crate::mesh::SparseSymMatrix, Vec<f64>)> {
        let mesh = mesh.ok_or_else(|| {
            Error::Config("a mesh is required to build spatial Laplacian bases".into())
        })?;
        if mesh.n_vertices() != train.header.n_x {
            return Err(Error::Config(format!(
                "mesh has {} vertices, dataset has n_x = {}",
                mesh.n_vertices(),
                train.header.n_x
            )));
        }
        Ok(crate::mesh::assemble_operators(mesh))
    };

    let reduction_basis = match cfg.basis_family {
        BasisFamily::Pod => crate::reduction::compute_pod_basis(st_side, reduce, cfg.truncated_modes)?,
        BasisFamily::Intrinsic => match reduce {
            ReduceAxis::Time => crate::spectral::fourier_time_basis_with_period(
                train.header.n_t,
                cfg.truncated_modes,
                period,
            )?,
            ReduceAxis::Space => {
                let (l, m) = mesh_ops()?;
                crate::spectral::compute_lbo_basis(&l, &m, cfg.truncated_modes)?
            }
        },
    };

    let layer_basis = match kind.network_axis() {
        ReduceAxis::Space => {
            let (l, m) = mesh_ops()?;
            crate::spectral::compute_lbo_basis(&l, &m, cfg.lmodes)?
        }
        ReduceAxis::Time => {
            crate::spectral::fourier_time_basis_with_period(train.header.n_t, cfg.lmodes, period)?
        }
    };

    Ok((reduction_basis, layer_basis))
}

/// Predictions of a trained model over a dataset's inputs, as a tensor with
/// the output-side shape. For increase mappings predictions are decoded to
/// full fields; for decrease mappings the network output is the prediction.
pub fn predict_dataset(
    params: &NormParams,
    ds: &Dataset,
    reduction_basis: &EigenBasis,
    layer_basis: &EigenBasis,
    input_mean: Option<&[f64]>,
    input_std: Option<&[f64]>,
) -> Result<SnapshotTensor> {
    let kind = ds.header.mapping_kind;
    let mut inputs = if kind.is_increase() {
        build_network_inputs(ds, None)?
    } else {
        build_network_inputs(ds, Some(reduction_basis))?
    };
    if let (Some(m), Some(s)) = (input_mean, input_std) {
        standardize_inputs(&mut inputs, m, s);
    }
    let pipe = Pipeline {
        layer_ctx: SpectralContext::new(layer_basis),
        decode: None,
    };
    let eval_decode = if kind.is_increase() {
        Some(DecodeSpec {
            basis: reduction_basis,
            c_u: ds.u.channels(),
            reduced: kind.reduction_axis(),
        })
    } else {
        None
    };
    predict_tensor(
        params,
        &pipe,
        &inputs,
        eval_decode.as_ref(),
        (ds.u.n_x(), ds.u.n_t(), ds.u.channels()),
        ds.u.dt(),
    )
}
