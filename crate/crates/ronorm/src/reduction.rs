//! Data-dependent POD bases, energy-based truncation, and the unequal-domain
//! encoder/decoder that trades the extra spatial or temporal factor of a
//! spatio-temporal tensor for a vector of basis coefficients per point.
//!
//! Encoding reduces along one axis: with temporal reduction every spatial
//! point's time trajectory becomes `d` coefficients (a spatial weight field),
//! and vice versa for spatial reduction. Decoding is the exact inverse on the
//! span of the basis.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::spectral::{normalize_signs, BasisKind, EigenBasis};

/// Sampled function dataset: `n` samples by `n_x` spatial nodes by `n_t`
/// time steps by `c` channels, row-major in that order. Spatial-only or
/// temporal-only functions use a degenerate axis of length 1.
#[derive(Clone, Debug)]
pub struct SnapshotTensor {
    data: Vec<f64>,
    n: usize,
    n_x: usize,
    n_t: usize,
    c: usize,
    dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceAxis {
    Time,
    Space,
}

impl SnapshotTensor {
    pub fn new(data: Vec<f64>, n: usize, n_x: usize, n_t: usize, c: usize, dt: f64) -> Result<Self> {
        if n == 0 || n_x == 0 || n_t == 0 || c == 0 {
            return Err(Error::InvalidArgument("tensor extents must be positive".into()));
        }
        let len = n
            .checked_mul(n_x)
            .and_then(|v| v.checked_mul(n_t))
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::InvalidArgument("tensor extent overflow".into()))?;
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "tensor data has {} values, dims imply {len}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("tensor contains non-finite entries".into()));
        }
        Ok(SnapshotTensor { data, n, n_x, n_t, c, dt })
    }

    pub fn zeros(n: usize, n_x: usize, n_t: usize, c: usize, dt: f64) -> Self {
        SnapshotTensor::new(vec![0.0; n * n_x * n_t * c], n, n_x, n_t, c, dt).expect("valid dims")
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, i: usize, x: usize, t: usize, ch: usize) -> f64 {
        self.data[((i * self.n_x + x) * self.n_t + t) * self.c + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, x: usize, t: usize, ch: usize) -> &mut f64 {
        &mut self.data[((i * self.n_x + x) * self.n_t + t) * self.c + ch]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.n_x * self.n_t * self.c;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_len(&self) -> usize {
        self.n_x * self.n_t * self.c
    }

    /// One sample rearranged with the reduced axis as rows:
    /// `n_axis x (n_other * c)`, column index `other * c + ch`.
    fn sample_axis_matrix(&self, i: usize, axis: ReduceAxis) -> Mat {
        match axis {
            ReduceAxis::Time => Mat::from_fn(self.n_t, self.n_x * self.c, |t, col| {
                self.at(i, col / self.c, t, col % self.c)
            }),
            ReduceAxis::Space => Mat::from_fn(self.n_x, self.n_t * self.c, |x, col| {
                self.at(i, x, col / self.c, col % self.c)
            }),
        }
    }

    pub fn axis_len(&self, axis: ReduceAxis) -> usize {
        match axis {
            ReduceAxis::Time => self.n_t,
            ReduceAxis::Space => self.n_x,
        }
    }

    /// All trajectories along `axis` stacked as rows of a
    /// `(n * n_other * c) x n_axis` matrix.
    pub fn stacked_matrix(&self, axis: ReduceAxis) -> Mat {
        let n_axis = self.axis_len(axis);
        let n_other = match axis {
            ReduceAxis::Time => self.n_x,
            ReduceAxis::Space => self.n_t,
        };
        let rows = self.n * n_other * self.c;
        let mut s = Mat::zeros(rows, n_axis);
        let mut r = 0;
        for i in 0..self.n {
            for other in 0..n_other {
                for ch in 0..self.c {
                    let row = s.row_mut(r);
                    for (ax, item) in row.iter_mut().enumerate() {
                        *item = match axis {
                            ReduceAxis::Time => self.at(i, other, ax, ch),
                            ReduceAxis::Space => self.at(i, ax, other, ch),
                        };
                    }
                    r += 1;
                }
            }
        }
        s
    }

    /// Per-sample fully flattened matrix (`n x sample_len`), used by overall
    /// (space-time joint) reduction.
    pub fn flattened_matrix(&self) -> Mat {
        Mat::from_fn(self.n, self.sample_len(), |i, j| self.sample(i)[j])
    }
}

/// Weight field produced by the unequal-domain encoder: for every sample and
/// every point along the kept axis, `d` coefficients per channel
/// (channel-major: weight index `ch * d + k`).
#[derive(Clone, Debug)]
pub struct WeightField {
    data: Vec<f64>,
    n: usize,
    n_pts: usize,
    d: usize,
    c: usize,
    reduced_axis: ReduceAxis,
    basis_ref: String,
    dt: f64,
}

impl WeightField {
    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_pts(&self) -> usize {
        self.n_pts
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn reduced_axis(&self) -> ReduceAxis {
        self.reduced_axis
    }

    pub fn basis_ref(&self) -> &str {
        &self.basis_ref
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, i: usize, p: usize, ch: usize, k: usize) -> f64 {
        self.data[((i * self.n_pts + p) * self.c + ch) * self.d + k]
    }

    /// One sample as an `n_pts x (c * d)` nodal matrix.
    pub fn sample_as_mat(&self, i: usize) -> Mat {
        let width = self.c * self.d;
        Mat::from_fn(self.n_pts, width, |p, j| {
            self.data[(i * self.n_pts + p) * width + j]
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = WeightFieldHeader {
            schema_version: 1,
            n: self.n,
            n_pts: self.n_pts,
            d: self.d,
            c: self.c,
            reduced_axis: self.reduced_axis,
            basis_ref: self.basis_ref.clone(),
            dt: self.dt,
        };
        container::write_blob_file(path, &header, &[("data", &self.data)])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<WeightField> {
        let bytes = std::fs::read(path)?;
        WeightField::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WeightField> {
        let (header, mut blobs): (WeightFieldHeader, _) = container::read_blob_bytes(bytes)?;
        if header.schema_version != 1 {
            return Err(Error::Container(format!(
                "unsupported weight-field schema_version {}",
                header.schema_version
            )));
        }
        let len = header
            .n
            .checked_mul(header.n_pts)
            .and_then(|v| v.checked_mul(header.d))
            .and_then(|v| v.checked_mul(header.c))
            .ok_or_else(|| Error::Container("weight field extent overflow".into()))?;
        let data = container::take_blob(&mut blobs, "data", len)?;
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Container("weight field contains non-finite entries".into()));
        }
        Ok(WeightField {
            data,
            n: header.n,
            n_pts: header.n_pts,
            d: header.d,
            c: header.c,
            reduced_axis: header.reduced_axis,
            basis_ref: header.basis_ref,
            dt: header.dt,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct WeightFieldHeader {
    schema_version: u32,
    n: usize,
    n_pts: usize,
    d: usize,
    c: usize,
    reduced_axis: ReduceAxis,
    basis_ref: String,
    dt: f64,
}

/// Full singular-value spectrum of the snapshot collection along `axis`,
/// computed from the small-side Gram matrix. Descending, length `n_axis`.
pub fn pod_singular_values(snapshots: &SnapshotTensor, axis: ReduceAxis) -> Result<Vec<f64>> {
    let (vals, _) = pod_eigen(snapshots, axis)?;
    Ok(vals)
}

fn pod_eigen(snapshots: &SnapshotTensor, axis: ReduceAxis) -> Result<(Vec<f64>, Mat)> {
    let s = snapshots.stacked_matrix(axis);
    let rows = s.rows() as f64;
    // non-centred covariance over all trajectories
    let mut c = s.mul_at_b(&s);
    c.scale(1.0 / rows);
    let (vals, mut vecs) = crate::linalg::sym_eigen(&c)?;
    normalize_signs(&mut vecs);
    // descending eigenvalues; ties resolved by column comparison
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| {
        vals[b]
            .partial_cmp(&vals[a])
            .unwrap()
            .then_with(|| {
                for i in 0..vecs.rows() {
                    let cmp = vecs.at(i, a).partial_cmp(&vecs.at(i, b)).unwrap();
                    if cmp != std::cmp::Ordering::Equal {
                        return cmp;
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    let n_axis = vals.len();
    let mut singular = Vec::with_capacity(n_axis);
    let mut ordered = Mat::zeros(n_axis, n_axis);
    for (col, &src) in idx.iter().enumerate() {
        singular.push((vals[src].max(0.0) * rows).sqrt());
        for i in 0..n_axis {
            *ordered.at_mut(i, col) = vecs.at(i, src);
        }
    }
    Ok((singular, ordered))
}

/// Top-k POD basis along the reduced axis, orthonormal under unit weights.
///
/// The Gram matrix of the trajectories (size `n_axis x n_axis`) is
/// eigendecomposed instead of the much larger stacked snapshot matrix; the
/// spectra are identical. Values are the singular values of the stacked
/// matrix, descending. No mean is removed (non-centred).
pub fn compute_pod_basis(snapshots: &SnapshotTensor, axis: ReduceAxis, k: usize) -> Result<EigenBasis> {
    let n_axis = snapshots.axis_len(axis);
    if k == 0 || k > n_axis {
        return Err(Error::InvalidArgument(format!(
            "requested {k} POD modes along an axis of length {n_axis}"
        )));
    }
    let (singular, vecs) = pod_eigen(snapshots, axis)?;
    let vectors = Mat::from_fn(n_axis, k, |i, j| vecs.at(i, j));
    EigenBasis::new(
        BasisKind::Pod,
        vectors,
        singular[..k].to_vec(),
        vec![1.0; n_axis],
    )
}

/// Smallest `d` whose leading singular values capture at least `threshold`
/// of the total squared energy.
pub fn energy_truncation(values: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0,1), got {threshold}"
        )));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty singular value list".into()));
    }
    for w in values.windows(2) {
        if w[0] < w[1] {
            return Err(Error::InvalidArgument("singular values must be descending".into()));
        }
    }
    if values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("singular values must be nonnegative".into()));
    }
    let total: f64 = values.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("all singular values are zero".into()));
    }
    let mut cum = 0.0;
    for (i, v) in values.iter().enumerate() {
        cum += v * v;
        if cum / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(values.len())
}

/// Unequal-domain encoder: project every trajectory along the reduced axis
/// onto the basis, channel-wise, yielding a weight field on the kept axis.
pub fn encode_unequal(snapshots: &SnapshotTensor, basis: &EigenBasis, axis: ReduceAxis) -> Result<WeightField> {
    let n_axis = snapshots.axis_len(axis);
    if basis.n_points() != n_axis {
        return Err(Error::DimensionMismatch(format!(
            "basis lives on {} points but the reduced axis has {n_axis}",
            basis.n_points()
        )));
    }
    let (n, c, d) = (snapshots.n_samples(), snapshots.channels(), basis.k());
    let n_pts = match axis {
        ReduceAxis::Time => snapshots.n_x(),
        ReduceAxis::Space => snapshots.n_t(),
    };
    let mut data = vec![0.0; n * n_pts * c * d];
    for i in 0..n {
        let traj = snapshots.sample_axis_matrix(i, axis);
        let coeffs = basis.project(&traj)?; // d x (n_pts * c)
        for p in 0..n_pts {
            for ch in 0..c {
                for k in 0..d {
                    data[((i * n_pts + p) * c + ch) * d + k] = coeffs.at(k, p * c + ch);
                }
            }
        }
    }
    Ok(WeightField {
        data,
        n,
        n_pts,
        d,
        c,
        reduced_axis: axis,
        basis_ref: basis.fingerprint(),
        dt: snapshots.dt(),
    })
}

/// Unequal-domain decoder: rebuild each trajectory as the weighted sum of
/// basis functions. Exact inverse of [`encode_unequal`] on the basis span.
pub fn decode_unequal(weights: &WeightField, basis: &EigenBasis) -> Result<SnapshotTensor> {
    if weights.d != basis.k() {
        return Err(Error::DimensionMismatch(format!(
            "weight field has d={} but basis has {} columns",
            weights.d,
            basis.k()
        )));
    }
    if weights.basis_ref != basis.fingerprint() {
        return Err(Error::InvalidArgument(
            "weight field was encoded with a different basis (inner products must not be mixed)".into(),
        ));
    }
    let n_axis = basis.n_points();
    let (n, n_pts, c, d) = (weights.n, weights.n_pts, weights.c, weights.d);
    let (n_x, n_t) = match weights.reduced_axis {
        ReduceAxis::Time => (n_pts, n_axis),
        ReduceAxis::Space => (n_axis, n_pts),
    };
    let mut out = SnapshotTensor::zeros(n, n_x, n_t, c, weights.dt);
    for i in 0..n {
        // coefficients arranged d x (n_pts * c) to reconstruct all
        // trajectories of the sample in one product
        let coeffs = Mat::from_fn(d, n_pts * c, |k, col| weights.at(i, col / c, col % c, k));
        let fields = basis.reconstruct(&coeffs)?; // n_axis x (n_pts * c)
        for p in 0..n_pts {
            for ch in 0..c {
                for ax in 0..n_axis {
                    let v = fields.at(ax, p * c + ch);
                    match weights.reduced_axis {
                        ReduceAxis::Time => *out.at_mut(i, p, ax, ch) = v,
                        ReduceAxis::Space => *out.at_mut(i, ax, p, ch) = v,
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fourier_time_basis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(seed: u64, n: usize, n_x: usize, n_t: usize, c: usize) -> SnapshotTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * n_x * n_t * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SnapshotTensor::new(data, n, n_x, n_t, c, 0.1).unwrap()
    }

    /// One-sided Jacobi SVD, used as an independent oracle for the
    /// Gram-matrix POD route. Returns singular values descending.
    fn jacobi_svd_values(a: &Mat) -> Vec<f64> {
        let (rows, cols) = a.shape();
        let mut m = a.clone();
        for _sweep in 0..60 {
            let mut off = 0.0_f64;
            for p in 0..cols {
                for q in p + 1..cols {
                    let mut app = 0.0;
                    let mut aqq = 0.0;
                    let mut apq = 0.0;
                    for i in 0..rows {
                        app += m.at(i, p) * m.at(i, p);
                        aqq += m.at(i, q) * m.at(i, q);
                        apq += m.at(i, p) * m.at(i, q);
                    }
                    off = off.max(apq.abs());
                    if apq.abs() <= 1e-15 * (app * aqq).sqrt().max(1e-300) {
                        continue;
                    }
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let cth = 1.0 / (1.0 + t * t).sqrt();
                    let sth = cth * t;
                    for i in 0..rows {
                        let vp = m.at(i, p);
                        let vq = m.at(i, q);
                        *m.at_mut(i, p) = cth * vp - sth * vq;
                        *m.at_mut(i, q) = sth * vp + cth * vq;
                    }
                }
            }
            if off <= 1e-14 {
                break;
            }
        }
        let mut sv: Vec<f64> = (0..cols)
            .map(|j| (0..rows).map(|i| m.at(i, j).powi(2)).sum::<f64>().sqrt())
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    #[test]
    fn pod_matches_dense_svd_oracle() {
        let snap = random_tensor(7, 4, 5, 6, 1);
        let basis = compute_pod_basis(&snap, ReduceAxis::Time, 6).unwrap();
        let stacked = snap.stacked_matrix(ReduceAxis::Time);
        assert_eq!(stacked.shape(), (20, 6));
        let oracle = jacobi_svd_values(&stacked);
        for (k, sv) in oracle.iter().enumerate() {
            assert!(
                (basis.values[k] - sv).abs() <= 1e-9,
                "sigma_{k}: {} vs oracle {}",
                basis.values[k],
                sv
            );
        }
    }

    #[test]
    fn pod_rank_one_data() {
        // every trajectory is a multiple of one fixed direction
        let n_t = 6;
        let v: Vec<f64> = (0..n_t).map(|t| 0.5 + (t as f64 * 0.8).cos()).collect();
        let mut data = Vec::new();
        for i in 0..3 {
            for x in 0..4 {
                let scale = (i + 1) as f64 * 0.3 - x as f64 * 0.1;
                for t in 0..n_t {
                    data.push(scale * v[t]);
                }
            }
        }
        let snap = SnapshotTensor::new(data, 3, 4, n_t, 1, 1.0).unwrap();
        let basis = compute_pod_basis(&snap, ReduceAxis::Time, n_t).unwrap();
        assert!(basis.values[0] > 1e-6);
        for k in 1..n_t {
            // eigenvalues of the Gram matrix carry O(eps) noise, which the
            // square root turns into O(1e-8) singular-value noise
            assert!(basis.values[k] <= 1e-7 * basis.values[0], "sigma_{k} = {}", basis.values[k]);
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for t in 0..n_t {
            // sign convention: first significant entry positive, and v[0] > 0
            assert!((basis.vectors.at(t, 0) - v[t] / norm).abs() <= 1e-9);
        }
    }

    #[test]
    fn pod_is_non_centred() {
        // constant-in-time data keeps the constant direction as mode 1
        let snap = SnapshotTensor::new(
            (0..2 * 3 * 5).map(|i| ((i / 5) as f64) * 0.7 + 1.0).collect(),
            2,
            3,
            5,
            1,
            1.0,
        )
        .unwrap();
        let basis = compute_pod_basis(&snap, ReduceAxis::Time, 1).unwrap();
        let expect = 1.0 / (5.0_f64).sqrt();
        for t in 0..5 {
            assert!((basis.vectors.at(t, 0) - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn pod_energy_identity() {
        let snap = random_tensor(11, 3, 4, 7, 2);
        let sv = pod_singular_values(&snap, ReduceAxis::Space).unwrap();
        let energy: f64 = sv.iter().map(|v| v * v).sum();
        let frob_sq: f64 = snap.data().iter().map(|v| v * v).sum();
        assert!((energy - frob_sq).abs() <= 1e-8 * frob_sq);
    }

    #[test]
    fn energy_truncation_examples() {
        assert_eq!(energy_truncation(&[1.0, 0.0, 0.0], 0.99).unwrap(), 1);
        assert!(energy_truncation(&[3.0, 4.0], 0.99).is_err());
        // cumulative squared-energy fractions for (10, 3, 1, 0.1):
        // 0.90901, 0.99082, 0.99991, 1.0
        assert_eq!(energy_truncation(&[10.0, 3.0, 1.0, 0.1], 0.99).unwrap(), 2);
        assert_eq!(energy_truncation(&[10.0, 3.0, 1.0, 0.1], 0.999).unwrap(), 3);
        assert!(energy_truncation(&[0.0, 0.0], 0.5).is_err());
        assert!(energy_truncation(&[1.0], 1.5).is_err());
    }

    #[test]
    fn encode_basis_trajectories_gives_unit_weights() {
        let basis = fourier_time_basis(8, 3).unwrap();
        // every trajectory equals phi_1
        let mut data = Vec::new();
        for _i in 0..2 {
            for _x in 0..3 {
                for t in 0..8 {
                    data.push(basis.vectors.at(t, 0));
                }
            }
        }
        let snap = SnapshotTensor::new(data, 2, 3, 8, 1, 1.0).unwrap();
        let wf = encode_unequal(&snap, &basis, ReduceAxis::Time).unwrap();
        for i in 0..2 {
            for p in 0..3 {
                assert!((wf.at(i, p, 0, 0) - 1.0).abs() <= 1e-12);
                assert!(wf.at(i, p, 0, 1).abs() <= 1e-12);
                assert!(wf.at(i, p, 0, 2).abs() <= 1e-12);
            }
        }

        let zero = SnapshotTensor::zeros(2, 3, 8, 1, 1.0);
        let wz = encode_unequal(&zero, &basis, ReduceAxis::Time).unwrap();
        assert!(wz.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_fourier_roundtrip() {
        let snap = random_tensor(3, 2, 3, 8, 1);
        let basis = fourier_time_basis(8, 8).unwrap();
        let wf = encode_unequal(&snap, &basis, ReduceAxis::Time).unwrap();
        let back = decode_unequal(&wf, &basis).unwrap();
        for (a, b) in snap.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn encode_after_decode_is_identity_on_weights() {
        let snap = random_tensor(5, 3, 4, 6, 2);
        let basis = compute_pod_basis(&snap, ReduceAxis::Space, 3).unwrap();
        let wf = encode_unequal(&snap, &basis, ReduceAxis::Space).unwrap();
        let field = decode_unequal(&wf, &basis).unwrap();
        let wf2 = encode_unequal(&field, &basis, ReduceAxis::Space).unwrap();
        for (a, b) in wf.data().iter().zip(wf2.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn decode_refuses_mismatched_basis() {
        let snap = random_tensor(2, 2, 3, 8, 1);
        let basis = fourier_time_basis(8, 4).unwrap();
        let wf = encode_unequal(&snap, &basis, ReduceAxis::Time).unwrap();
        let other = compute_pod_basis(&snap, ReduceAxis::Time, 4).unwrap();
        assert!(decode_unequal(&wf, &other).is_err());
    }

    #[test]
    fn pod_beats_fourier_on_training_snapshots() {
        // best-approximation property of POD at fixed d
        let mut data = Vec::new();
        for i in 0..4 {
            for x in 0..5 {
                for t in 0..12 {
                    let s = t as f64 / 12.0;
                    data.push(
                        (1.0 + 0.2 * i as f64) * (-3.0 * s).exp() * (x as f64 * 0.4).cos()
                            + 0.05 * (i as f64 + x as f64 * s),
                    );
                }
            }
        }
        let snap = SnapshotTensor::new(data, 4, 5, 12, 1, 1.0).unwrap();
        let d = 2;
        let pod = compute_pod_basis(&snap, ReduceAxis::Time, d).unwrap();
        let fourier = fourier_time_basis(12, d).unwrap();
        let err = |basis: &EigenBasis| -> f64 {
            let wf = encode_unequal(&snap, basis, ReduceAxis::Time).unwrap();
            let back = decode_unequal(&wf, basis).unwrap();
            snap.data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        assert!(err(&pod) <= err(&fourier) + 1e-12);
    }

    #[test]
    fn weight_field_file_roundtrip() {
        let snap = random_tensor(4, 2, 3, 6, 1);
        let basis = fourier_time_basis(6, 4).unwrap();
        let wf = encode_unequal(&snap, &basis, ReduceAxis::Time).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wf.bin");
        wf.save(&path).unwrap();
        let back = WeightField::load(&path).unwrap();
        assert_eq!(back.data(), wf.data());
        assert_eq!(back.basis_ref(), wf.basis_ref());
        // decodes identically after the roundtrip
        let dec = decode_unequal(&back, &basis).unwrap();
        let dec0 = decode_unequal(&wf, &basis).unwrap();
        assert_eq!(dec.data(), dec0.data());
    }
}
