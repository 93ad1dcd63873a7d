//! The same-domain spectral neural operator: a pointwise lifting layer, a
//! stack of kernel-integral layers, and a two-layer pointwise projection.
//!
//! Each kernel-integral layer updates a nodal field `v` as
//! `sigma(W v + b + spectral_conv(v))`, where the spectral convolution
//! projects `v` onto the first `d_m` Laplacian (or Fourier) eigenfunctions,
//! mixes channels with one learnable matrix per mode, and reconstructs.
//! Parameter shapes depend only on channel widths and the mode count, never
//! on how finely the domain is sampled.

use serde::{Deserialize, Serialize};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::container;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::spectral::EigenBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    /// tanh-form GELU; the derivative below is the exact derivative of this
    /// expression, which keeps finite-difference gradient checks tight.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        self.apply_with_aux(x).0
    }

    /// Value plus the inner tanh, which the backward pass reuses so the
    /// derivative costs no second tanh evaluation.
    #[inline]
    pub fn apply_with_aux(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Gelu => {
                let t = (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
                (0.5 * x * (1.0 + t), t)
            }
            Activation::Relu => (x.max(0.0), 0.0),
            Activation::Identity => (x, 0.0),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        let (_, aux) = self.apply_with_aux(x);
        self.derivative_from_aux(x, aux)
    }

    #[inline]
    pub fn derivative_from_aux(self, x: f64, aux: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = aux;
                let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
const GELU_CUBIC: f64 = 0.044715;

/// One kernel-integral layer: pointwise affine plus per-mode channel mixing.
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub w: Mat,         // d_w x d_w
    pub b: Vec<f64>,    // d_w
    pub k: Vec<Mat>,    // d_m matrices, each d_w x d_w
}

/// All learnable parameters of one network.
#[derive(Clone, Debug)]
pub struct NormParams {
    pub c_in: usize,
    pub c_out: usize,
    pub d_w: usize,
    pub d_proj: usize,
    pub d_m: usize,
    pub activation: Activation,
    pub lift_w: Mat,     // d_w x c_in
    pub lift_b: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub proj1_w: Mat,    // d_proj x d_w
    pub proj1_b: Vec<f64>,
    pub proj2_w: Mat,    // c_out x d_proj
    pub proj2_b: Vec<f64>,
}

/// Network shape descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormShape {
    pub c_in: usize,
    pub c_out: usize,
    pub d_w: usize,
    pub d_proj: usize,
    pub n_l: usize,
    pub d_m: usize,
}

/// Exact learnable-parameter count for a shape. Depends only on channel
/// widths, layer count and mode count; never on grid resolution.
pub fn parameter_count_for(s: NormShape) -> usize {
    s.d_w * s.c_in
        + s.d_w
        + s.n_l * (s.d_w * s.d_w + s.d_w + s.d_m * s.d_w * s.d_w)
        + s.d_proj * s.d_w
        + s.d_proj
        + s.c_out * s.d_proj
        + s.c_out
}

/// Overflow-checked variant used when the shape comes from untrusted input.
fn checked_parameter_count(s: NormShape) -> Option<usize> {
    let sq = s.d_w.checked_mul(s.d_w)?;
    let per_layer = sq.checked_add(s.d_w)?.checked_add(s.d_m.checked_mul(sq)?)?;
    s.d_w
        .checked_mul(s.c_in)?
        .checked_add(s.d_w)?
        .checked_add(s.n_l.checked_mul(per_layer)?)?
        .checked_add(s.d_proj.checked_mul(s.d_w)?)?
        .checked_add(s.d_proj)?
        .checked_add(s.c_out.checked_mul(s.d_proj)?)?
        .checked_add(s.c_out)
}

/// Deterministic parameter initialization.
///
/// Affine weights are uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), spectral
/// mixing entries are normal with variance 1/(d_w * d_m), biases start at
/// zero. The same seed always produces bit-identical parameters.
pub fn init_params(seed: u64, shape: NormShape, activation: Activation) -> Result<NormParams> {
    let NormShape {
        c_in,
        c_out,
        d_w,
        d_proj,
        n_l,
        d_m,
    } = shape;
    if c_in == 0 || c_out == 0 || d_w == 0 || d_proj == 0 || d_m == 0 {
        return Err(Error::InvalidArgument("network dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn uniform_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Mat {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new(-bound, bound);
        let mut m = Mat::zeros(rows, cols);
        for v in m.data_mut() {
            *v = dist.sample(rng);
        }
        m
    }

    let lift_w = uniform_mat(&mut rng, d_w, c_in, c_in);
    let mut layers = Vec::with_capacity(n_l);
    let k_std = 1.0 / ((d_w * d_m) as f64).sqrt();
    for _ in 0..n_l {
        let w = uniform_mat(&mut rng, d_w, d_w, d_w);
        let mut k = Vec::with_capacity(d_m);
        for _ in 0..d_m {
            let mut km = Mat::zeros(d_w, d_w);
            for v in km.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = k_std * z;
            }
            k.push(km);
        }
        layers.push(LayerParams {
            w,
            b: vec![0.0; d_w],
            k,
        });
    }
    let proj1_w = uniform_mat(&mut rng, d_proj, d_w, d_w);
    let proj2_w = uniform_mat(&mut rng, c_out, d_proj, d_proj);

    Ok(NormParams {
        c_in,
        c_out,
        d_w,
        d_proj,
        d_m,
        activation,
        lift_w,
        lift_b: vec![0.0; d_w],
        layers,
        proj1_w,
        proj1_b: vec![0.0; d_proj],
        proj2_w,
        proj2_b: vec![0.0; c_out],
    })
}

impl NormParams {
    pub fn shape(&self) -> NormShape {
        NormShape {
            c_in: self.c_in,
            c_out: self.c_out,
            d_w: self.d_w,
            d_proj: self.d_proj,
            n_l: self.layers.len(),
            d_m: self.d_m,
        }
    }

    /// Same shapes, all tensors zero. Used for gradients and moments.
    pub fn zeros_like(&self) -> NormParams {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            for v in t {
                *v = 0.0;
            }
        }
        z
    }

    /// All parameter tensors as flat slices in the fixed checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.lift_w.data(), &self.lift_b];
        for layer in &self.layers {
            out.push(layer.w.data());
            out.push(&layer.b);
            for km in &layer.k {
                out.push(km.data());
            }
        }
        out.push(self.proj1_w.data());
        out.push(&self.proj1_b);
        out.push(self.proj2_w.data());
        out.push(&self.proj2_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.lift_w.data_mut(), &mut self.lift_b];
        for layer in &mut self.layers {
            out.push(layer.w.data_mut());
            out.push(&mut layer.b);
            for km in &mut layer.k {
                out.push(km.data_mut());
            }
        }
        out.push(self.proj1_w.data_mut());
        out.push(&mut self.proj1_b);
        out.push(self.proj2_w.data_mut());
        out.push(&mut self.proj2_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        let total: usize = self.tensors().iter().map(|t| t.len()).sum();
        debug_assert_eq!(total, parameter_count_for(self.shape()));
        total
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Truncated basis prepared for spectral convolutions: the raw basis columns
/// and the weight-scaled columns used for projection.
pub struct SpectralContext {
    pub phi: Mat,   // n x d_m
    pub phi_w: Mat, // n x d_m, rows scaled by quadrature weights
}

impl SpectralContext {
    pub fn new(basis: &EigenBasis) -> Self {
        let phi = basis.vectors.clone();
        let mut phi_w = phi.clone();
        for i in 0..phi_w.rows() {
            let w = basis.weights[i];
            for v in phi_w.row_mut(i) {
                *v *= w;
            }
        }
        SpectralContext { phi, phi_w }
    }

    pub fn n_points(&self) -> usize {
        self.phi.rows()
    }

    pub fn d_m(&self) -> usize {
        self.phi.cols()
    }
}

/// Spectral kernel integral operator on a nodal field with `d_w` channels:
/// project onto `d_m` modes, mix channels per mode, reconstruct.
pub fn spectral_conv(v: &Mat, k_mats: &[Mat], basis: &EigenBasis) -> Result<Mat> {
    let ctx = SpectralContext::new(basis);
    if k_mats.len() != ctx.d_m() {
        return Err(Error::DimensionMismatch(format!(
            "{} mixing matrices for {} modes",
            k_mats.len(),
            ctx.d_m()
        )));
    }
    if v.rows() != ctx.n_points() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} points, basis has {}",
            v.rows(),
            ctx.n_points()
        )));
    }
    let (out, _beta) = spectral_conv_ctx(v, k_mats, &ctx);
    Ok(out)
}

fn spectral_conv_ctx(v: &Mat, k_mats: &[Mat], ctx: &SpectralContext) -> (Mat, Mat) {
    let beta = ctx.phi_w.mul_at_b(v); // d_m x d_w
    let mut mixed = Mat::zeros(beta.rows(), beta.cols());
    for (m, km) in k_mats.iter().enumerate() {
        let src = beta.row(m);
        let dst = mixed.row_mut(m);
        for (p, item) in dst.iter_mut().enumerate() {
            *item = crate::linalg::dot(km.row(p), src);
        }
    }
    (ctx.phi.mul(&mixed), beta)
}

fn add_bias(m: &mut Mat, b: &[f64]) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        for (j, item) in row.iter_mut().enumerate() {
            *item += b[j];
        }
    }
}

fn apply_activation(m: &Mat, act: Activation) -> (Mat, Mat) {
    let mut out = m.clone();
    let mut aux = Mat::zeros(m.rows(), m.cols());
    for (v, a) in out.data_mut().iter_mut().zip(aux.data_mut()) {
        let (y, t) = act.apply_with_aux(*v);
        *v = y;
        *a = t;
    }
    (out, aux)
}

/// Intermediate state of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    pub input: Mat,
    pub v: Vec<Mat>,       // v[0] after lifting, v[l] after layer l
    pub s: Vec<Mat>,       // per-layer pre-activation
    pub s_aux: Vec<Mat>,   // per-layer activation auxiliaries (inner tanh)
    pub beta: Vec<Mat>,    // per-layer spectral coefficients of v[l-1]
    pub z: Mat,            // projection hidden pre-activation
    pub z_aux: Mat,
    pub h: Mat,            // projection hidden post-activation
    pub out: Mat,
}

/// Evaluate the operator on one sample (`n x c_in` nodal values).
pub fn forward(params: &NormParams, input: &Mat, ctx: &SpectralContext) -> Result<Mat> {
    Ok(forward_with_cache(params, input, ctx)?.out)
}

pub fn forward_with_cache(params: &NormParams, input: &Mat, ctx: &SpectralContext) -> Result<ForwardCache> {
    if input.cols() != params.c_in {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, network expects {}",
            input.cols(),
            params.c_in
        )));
    }
    if ctx.d_m() != params.d_m {
        return Err(Error::DimensionMismatch(format!(
            "basis context has {} modes, network expects {}",
            ctx.d_m(),
            params.d_m
        )));
    }
    if input.rows() != ctx.n_points() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} points, basis has {}",
            input.rows(),
            ctx.n_points()
        )));
    }
    let act = params.activation;

    let mut v0 = input.mul(&params.lift_w.transpose());
    add_bias(&mut v0, &params.lift_b);

    let mut v = vec![v0];
    let mut s_list = Vec::with_capacity(params.layers.len());
    let mut aux_list = Vec::with_capacity(params.layers.len());
    let mut beta_list = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let prev = v.last().unwrap();
        let mut s = prev.mul(&layer.w.transpose());
        add_bias(&mut s, &layer.b);
        let (conv, beta) = spectral_conv_ctx(prev, &layer.k, ctx);
        s.add_assign(&conv);
        let (post, aux) = apply_activation(&s, act);
        v.push(post);
        s_list.push(s);
        aux_list.push(aux);
        beta_list.push(beta);
    }

    let last = v.last().unwrap();
    let mut z = last.mul(&params.proj1_w.transpose());
    add_bias(&mut z, &params.proj1_b);
    let (h, z_aux) = apply_activation(&z, act);
    let mut out = h.mul(&params.proj2_w.transpose());
    add_bias(&mut out, &params.proj2_b);

    Ok(ForwardCache {
        input: input.clone(),
        v,
        s: s_list,
        s_aux: aux_list,
        beta: beta_list,
        z,
        z_aux,
        h,
        out,
    })
}

fn column_sums(m: &Mat) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            s[j] += v;
        }
    }
    s
}

fn activation_backward(upstream: &Mat, pre: &Mat, aux: &Mat, act: Activation) -> Mat {
    let mut out = upstream.clone();
    for ((o, p), t) in out.data_mut().iter_mut().zip(pre.data()).zip(aux.data()) {
        *o *= act.derivative_from_aux(*p, *t);
    }
    out
}

/// Vector-Jacobian product of the network: accumulate into `grads` the
/// gradient of `sum(d_out .* forward(input))` with respect to every
/// parameter tensor.
pub fn accumulate_vjp(
    params: &NormParams,
    cache: &ForwardCache,
    ctx: &SpectralContext,
    d_out: &Mat,
    grads: &mut NormParams,
) {
    let act = params.activation;

    // projection head
    grads.proj2_w.add_assign(&d_out.mul_at_b(&cache.h));
    axpy_vec(&mut grads.proj2_b, &column_sums(d_out));
    let d_h = d_out.mul(&params.proj2_w);
    let d_z = activation_backward(&d_h, &cache.z, &cache.z_aux, act);
    let v_last = cache.v.last().unwrap();
    grads.proj1_w.add_assign(&d_z.mul_at_b(v_last));
    axpy_vec(&mut grads.proj1_b, &column_sums(&d_z));
    let mut d_v = d_z.mul(&params.proj1_w);

    // kernel-integral layers in reverse
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let d_s = activation_backward(&d_v, &cache.s[l], &cache.s_aux[l], act);
        let prev = &cache.v[l];
        let beta = &cache.beta[l];

        axpy_vec(&mut grads.layers[l].b, &column_sums(&d_s));
        grads.layers[l].w.add_assign(&d_s.mul_at_b(prev));

        // spectral path
        let d_mixed = ctx.phi.mul_at_b(&d_s); // d_m x d_w
        let d_m = params.d_m;
        let d_w = params.d_w;
        let mut d_beta = Mat::zeros(d_m, d_w);
        for m in 0..d_m {
            let km = &layer.k[m];
            let gm = d_mixed.row(m);
            let bm = beta.row(m);
            let gk = grads.layers[l].k[m].data_mut();
            for p in 0..d_w {
                let g = gm[p];
                if g != 0.0 {
                    for q in 0..d_w {
                        gk[p * d_w + q] += g * bm[q];
                    }
                }
            }
            let db = d_beta.row_mut(m);
            for p in 0..d_w {
                let g = gm[p];
                crate::linalg::axpy(g, km.row(p), db);
            }
        }

        let mut d_prev = d_s.mul(&layer.w);
        d_prev.add_assign(&ctx.phi_w.mul(&d_beta));
        d_v = d_prev;
    }

    // lifting layer
    grads.lift_w.add_assign(&d_v.mul_at_b(&cache.input));
    axpy_vec(&mut grads.lift_b, &column_sums(&d_v));
}

fn axpy_vec(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    schema_version: u32,
    shape: NormShape,
    activation: Activation,
    seed: u64,
    config_hash: String,
    #[serde(default)]
    input_mean: Option<Vec<f64>>,
    #[serde(default)]
    input_std: Option<Vec<f64>>,
}

/// Trained model artifact: parameters plus optional input standardization.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: NormParams,
    pub seed: u64,
    pub config_hash: String,
    pub input_mean: Option<Vec<f64>>,
    pub input_std: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let header = CheckpointHeader {
            schema_version: 1,
            shape: self.params.shape(),
            activation: self.params.activation,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            input_mean: self.input_mean.clone(),
            input_std: self.input_std.clone(),
        };
        let names = tensor_names(&self.params.shape());
        let tensors = self.params.tensors();
        let blobs: Vec<(&str, &[f64])> = names
            .iter()
            .map(|n| n.as_str())
            .zip(tensors.iter().copied())
            .collect();
        container::write_blob_file(path, &header, &blobs)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        Checkpoint::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let (header, mut blobs): (CheckpointHeader, _) = container::read_blob_bytes(bytes)?;
        if header.schema_version != 1 {
            return Err(Error::Container(format!(
                "unsupported checkpoint schema_version {}",
                header.schema_version
            )));
        }
        let s = header.shape;
        if s.c_in == 0 || s.c_out == 0 || s.d_w == 0 || s.d_proj == 0 || s.d_m == 0 {
            return Err(Error::Container("checkpoint shape has zero dimension".into()));
        }
        // bound the shape before any allocation; a hostile header must not
        // be able to trigger huge parameter buffers
        let count = checked_parameter_count(s)
            .ok_or_else(|| Error::Container("checkpoint shape is implausibly large".into()))?;
        if count as u64 * 8 > 1 << 33 {
            return Err(Error::Container("checkpoint shape is implausibly large".into()));
        }
        let mut params = init_params(0, s, header.activation)?;
        let names = tensor_names(&s);
        {
            let tensors = params.tensors_mut();
            if names.len() != tensors.len() {
                return Err(Error::Container("tensor name/shape mismatch".into()));
            }
            for (name, t) in names.iter().zip(tensors) {
                let data = container::take_blob(&mut blobs, name, t.len())?;
                t.copy_from_slice(&data);
            }
        }
        if !params.all_finite() {
            return Err(Error::Container("checkpoint contains non-finite parameters".into()));
        }
        if let Some(m) = &header.input_mean {
            if m.len() != s.c_in || !m.iter().all(|v| v.is_finite()) {
                return Err(Error::Container("bad input_mean in checkpoint".into()));
            }
        }
        if let Some(sd) = &header.input_std {
            if sd.len() != s.c_in || !sd.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(Error::Container("bad input_std in checkpoint".into()));
            }
        }
        Ok(Checkpoint {
            params,
            seed: header.seed,
            config_hash: header.config_hash,
            input_mean: header.input_mean,
            input_std: header.input_std,
        })
    }
}

fn tensor_names(shape: &NormShape) -> Vec<String> {
    let mut names = vec!["lift_w".to_string(), "lift_b".to_string()];
    for l in 0..shape.n_l {
        names.push(format!("layer{l}_w"));
        names.push(format!("layer{l}_b"));
        for m in 0..shape.d_m {
            names.push(format!("layer{l}_k{m}"));
        }
    }
    names.push("proj1_w".into());
    names.push("proj1_b".into());
    names.push("proj2_w".into());
    names.push("proj2_b".into());
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fourier_time_basis;

    fn small_shape() -> NormShape {
        NormShape {
            c_in: 2,
            c_out: 3,
            d_w: 4,
            d_proj: 5,
            n_l: 2,
            d_m: 3,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(42, small_shape(), Activation::Gelu).unwrap();
        let b = init_params(42, small_shape(), Activation::Gelu).unwrap();
        for (ta, tb) in a.tensors().iter().zip(b.tensors().iter()) {
            assert_eq!(ta, tb);
        }
        let c = init_params(43, small_shape(), Activation::Gelu).unwrap();
        let differs = a
            .tensors()
            .iter()
            .zip(c.tensors().iter())
            .any(|(ta, tc)| ta != tc);
        assert!(differs);
    }

    #[test]
    fn parameter_count_formula() {
        // degenerate shape: everything 1, no layers
        let tiny = NormShape {
            c_in: 1,
            c_out: 1,
            d_w: 1,
            d_proj: 1,
            n_l: 0,
            d_m: 1,
        };
        assert_eq!(parameter_count_for(tiny), 6);

        // direct evaluation of the count formula:
        // 16*1+16 + 4*(256+16+32*256) + 128*16+128 + 1*128+1 = 36193
        let s = NormShape {
            c_in: 1,
            c_out: 1,
            d_w: 16,
            d_proj: 128,
            n_l: 4,
            d_m: 32,
        };
        assert_eq!(parameter_count_for(s), 36_193);
        let p = init_params(0, s, Activation::Gelu).unwrap();
        assert_eq!(p.parameter_count(), 36_193);

        // count is independent of how many samples or grid points exist
        assert_eq!(parameter_count_for(s), parameter_count_for(s));
    }

    #[test]
    fn zero_k_gives_zero_conv_and_identity_truncates() {
        let basis = fourier_time_basis(10, 3).unwrap();
        let v = Mat::from_fn(10, 4, |i, j| ((i * 4 + j) as f64 * 0.31).sin());
        let zeros: Vec<Mat> = (0..3).map(|_| Mat::zeros(4, 4)).collect();
        let out = spectral_conv(&v, &zeros, &basis).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));

        let eyes: Vec<Mat> = (0..3).map(|_| Mat::identity(4)).collect();
        let out = spectral_conv(&v, &eyes, &basis).unwrap();
        // identity mixing equals rank-d_m spectral truncation
        let coeffs = basis.project(&v).unwrap();
        let trunc = basis.reconstruct(&coeffs).unwrap();
        for (a, b) in out.data().iter().zip(trunc.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        // and applying it twice changes nothing more (idempotent)
        let out2 = spectral_conv(&out, &eyes, &basis).unwrap();
        for (a, b) in out2.data().iter().zip(out.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn spectral_conv_matches_dense_oracle() {
        let basis = fourier_time_basis(5, 3).unwrap();
        let d_w = 2;
        let v = Mat::from_fn(5, d_w, |i, j| ((i * 2 + j) as f64 * 0.7 - 1.0).cos());
        let k: Vec<Mat> = (0..3)
            .map(|m| Mat::from_fn(d_w, d_w, |p, q| ((m * 4 + p * 2 + q) as f64 * 0.43).sin()))
            .collect();
        let out = spectral_conv(&v, &k, &basis).unwrap();

        // independently coded dense pipeline: explicit loops only
        let n = 5;
        let d_m = 3;
        let mut beta = vec![vec![0.0; d_w]; d_m];
        for m in 0..d_m {
            for ch in 0..d_w {
                let mut s = 0.0;
                for p in 0..n {
                    s += basis.weights[p] * basis.vectors.at(p, m) * v.at(p, ch);
                }
                beta[m][ch] = s;
            }
        }
        let mut mixed = vec![vec![0.0; d_w]; d_m];
        for m in 0..d_m {
            for p in 0..d_w {
                let mut s = 0.0;
                for q in 0..d_w {
                    s += k[m].at(p, q) * beta[m][q];
                }
                mixed[m][p] = s;
            }
        }
        for p in 0..n {
            for ch in 0..d_w {
                let mut s = 0.0;
                for m in 0..d_m {
                    s += basis.vectors.at(p, m) * mixed[m][ch];
                }
                assert!((out.at(p, ch) - s).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn spectral_conv_is_linear() {
        let basis = fourier_time_basis(7, 4).unwrap();
        let d_w = 3;
        let k: Vec<Mat> = (0..4)
            .map(|m| Mat::from_fn(d_w, d_w, |p, q| ((m + p + 2 * q) as f64 * 0.29).sin()))
            .collect();
        let v1 = Mat::from_fn(7, d_w, |i, j| ((i + j) as f64 * 0.17).cos());
        let v2 = Mat::from_fn(7, d_w, |i, j| ((2 * i + j) as f64 * 0.53).sin());
        let mut sum = v1.clone();
        sum.add_assign(&v2);
        let lhs = spectral_conv(&sum, &k, &basis).unwrap();
        let mut rhs = spectral_conv(&v1, &k, &basis).unwrap();
        rhs.add_assign(&spectral_conv(&v2, &k, &basis).unwrap());
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn spectral_conv_is_linear_in_the_kernel() {
        let basis = fourier_time_basis(7, 3).unwrap();
        let d_w = 2;
        let v = Mat::from_fn(7, d_w, |i, j| ((i + 2 * j) as f64 * 0.61).sin());
        let mk = |off: usize| -> Vec<Mat> {
            (0..3)
                .map(|m| Mat::from_fn(d_w, d_w, |p, q| ((off + m * 4 + p * 2 + q) as f64 * 0.37).cos()))
                .collect()
        };
        let k1 = mk(0);
        let k2 = mk(9);
        let ksum: Vec<Mat> = k1
            .iter()
            .zip(&k2)
            .map(|(a, b)| {
                let mut s = a.clone();
                s.add_assign(b);
                s
            })
            .collect();
        let lhs = spectral_conv(&v, &ksum, &basis).unwrap();
        let mut rhs = spectral_conv(&v, &k1, &basis).unwrap();
        rhs.add_assign(&spectral_conv(&v, &k2, &basis).unwrap());
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn forward_zero_params_zero_output() {
        let basis = fourier_time_basis(6, 3).unwrap();
        let ctx = SpectralContext::new(&basis);
        for act in [Activation::Gelu, Activation::Relu, Activation::Identity] {
            let params = init_params(
                1,
                NormShape {
                    c_in: 2,
                    c_out: 2,
                    d_w: 4,
                    d_proj: 4,
                    n_l: 2,
                    d_m: 3,
                },
                act,
            )
            .unwrap()
            .zeros_like();
            let input = Mat::from_fn(6, 2, |i, j| (i + j) as f64);
            let out = forward(&params, &input, &ctx).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_identity_configuration() {
        let basis = fourier_time_basis(6, 3).unwrap();
        let ctx = SpectralContext::new(&basis);
        let c = 2;
        let mut params = init_params(
            0,
            NormShape {
                c_in: c,
                c_out: c,
                d_w: c,
                d_proj: c,
                n_l: 2,
                d_m: 3,
            },
            Activation::Identity,
        )
        .unwrap()
        .zeros_like();
        params.lift_w = Mat::identity(c);
        for layer in &mut params.layers {
            layer.w = Mat::identity(c);
        }
        params.proj1_w = Mat::identity(c);
        params.proj2_w = Mat::identity(c);
        let input = Mat::from_fn(6, c, |i, j| (i as f64 * 0.4 - j as f64).sin());
        let out = forward(&params, &input, &ctx).unwrap();
        for (a, b) in out.data().iter().zip(input.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_matches_dense_oracle() {
        // full stack on 7 nodes against an explicit-loop reimplementation
        let basis = fourier_time_basis(7, 4).unwrap();
        let ctx = SpectralContext::new(&basis);
        let shape = NormShape {
            c_in: 2,
            c_out: 1,
            d_w: 3,
            d_proj: 4,
            n_l: 2,
            d_m: 4,
        };
        let params = init_params(9, shape, Activation::Gelu).unwrap();
        let input = Mat::from_fn(7, 2, |i, j| ((i * 2 + j) as f64 * 0.39 - 0.8).sin());
        let out = forward(&params, &input, &ctx).unwrap();

        let gelu = |x: f64| {
            let s = (2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x);
            0.5 * x * (1.0 + s.tanh())
        };
        let n = 7;
        // lift
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|p| {
                (0..shape.d_w)
                    .map(|o| {
                        let mut s = params.lift_b[o];
                        for i in 0..shape.c_in {
                            s += params.lift_w.at(o, i) * input.at(p, i);
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        for layer in &params.layers {
            let mut beta = vec![vec![0.0; shape.d_w]; shape.d_m];
            for m in 0..shape.d_m {
                for ch in 0..shape.d_w {
                    let mut s = 0.0;
                    for p in 0..n {
                        s += basis.weights[p] * basis.vectors.at(p, m) * v[p][ch];
                    }
                    beta[m][ch] = s;
                }
            }
            let mut next = vec![vec![0.0; shape.d_w]; n];
            for p in 0..n {
                for o in 0..shape.d_w {
                    let mut s = layer.b[o];
                    for i in 0..shape.d_w {
                        s += layer.w.at(o, i) * v[p][i];
                    }
                    for m in 0..shape.d_m {
                        let mut mix = 0.0;
                        for q in 0..shape.d_w {
                            mix += layer.k[m].at(o, q) * beta[m][q];
                        }
                        s += basis.vectors.at(p, m) * mix;
                    }
                    next[p][o] = gelu(s);
                }
            }
            v = next;
        }
        for p in 0..n {
            let mut h = vec![0.0; shape.d_proj];
            for (o, item) in h.iter_mut().enumerate() {
                let mut s = params.proj1_b[o];
                for i in 0..shape.d_w {
                    s += params.proj1_w.at(o, i) * v[p][i];
                }
                *item = gelu(s);
            }
            for o in 0..shape.c_out {
                let mut s = params.proj2_b[o];
                for (i, hi) in h.iter().enumerate() {
                    s += params.proj2_w.at(o, i) * hi;
                }
                assert!(
                    (out.at(p, o) - s).abs() <= 1e-9,
                    "node {p} channel {o}: {} vs oracle {s}",
                    out.at(p, o)
                );
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let basis = fourier_time_basis(9, 4).unwrap();
        let ctx = SpectralContext::new(&basis);
        let shape = NormShape {
            c_in: 1,
            c_out: 2,
            d_w: 4,
            d_proj: 6,
            n_l: 3,
            d_m: 4,
        };
        let params = init_params(5, shape, Activation::Gelu).unwrap();
        let input = Mat::from_fn(9, 1, |i, _| (i as f64).cos());
        let a = forward(&params, &input, &ctx).unwrap();
        let b = forward(&params, &input, &ctx).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let params = init_params(17, small_shape(), Activation::Gelu).unwrap();
        let ckpt = Checkpoint {
            params,
            seed: 17,
            config_hash: "abc".into(),
            input_mean: Some(vec![0.5, -0.5]),
            input_std: Some(vec![1.0, 2.0]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.seed, 17);
        assert_eq!(back.config_hash, "abc");
        assert_eq!(back.input_mean, ckpt.input_mean);
        for (a, b) in back.params.tensors().iter().zip(ckpt.params.tensors().iter()) {
            assert_eq!(a, b);
        }
    }
}
