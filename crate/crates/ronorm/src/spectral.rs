//! Spectral bases: Laplacian eigenfunctions on a mesh, real Fourier bases on
//! a uniform time axis, and weighted projection/reconstruction between nodal
//! fields and spectral coefficients.
//!
//! Every basis is orthonormal under its own quadrature weights: lumped mass
//! for mesh bases, `1/n_t` for time bases, plain unit weights for POD bases.
//! A basis also carries a fingerprint so encoders and decoders can refuse to
//! mix inner products from different bases.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Mat};
use crate::mesh::SparseSymMatrix;

const SIGN_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Lbo,
    Fourier,
    Pod,
}

/// Ordered orthonormal basis sampled on a discrete domain.
///
/// `vectors` is `n_points x k` with one basis function per column. `values`
/// holds eigenvalues (ascending, for `lbo`/`fourier`) or singular values
/// (descending, for `pod`). `weights` are the quadrature weights of the
/// inner product the columns are orthonormal under.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub kind: BasisKind,
    pub vectors: Mat,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EigenBasis {
    pub fn new(kind: BasisKind, vectors: Mat, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != vectors.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} basis columns",
                values.len(),
                vectors.cols()
            )));
        }
        if weights.len() != vectors.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} basis rows",
                weights.len(),
                vectors.rows()
            )));
        }
        if !vectors.data().iter().all(|v| v.is_finite())
            || !values.iter().all(|v| v.is_finite())
            || !weights.iter().all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(Error::InvalidArgument(
                "basis entries must be finite and weights positive".into(),
            ));
        }
        let sorted = match kind {
            BasisKind::Pod => values.windows(2).all(|w| w[0] >= w[1]),
            _ => values.windows(2).all(|w| w[0] <= w[1]),
        };
        if !sorted {
            return Err(Error::InvalidArgument("basis values are not sorted".into()));
        }
        Ok(EigenBasis {
            kind,
            vectors,
            values,
            weights,
        })
    }

    pub fn n_points(&self) -> usize {
        self.vectors.rows()
    }

    pub fn k(&self) -> usize {
        self.vectors.cols()
    }

    /// Coefficients of `field` (n_points x c) in this basis: one coefficient
    /// row per basis function, computed with the basis inner product.
    pub fn project(&self, field: &Mat) -> Result<Mat> {
        if field.rows() != self.n_points() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} points, basis has {}",
                field.rows(),
                self.n_points()
            )));
        }
        let mut weighted = field.clone();
        for i in 0..weighted.rows() {
            let w = self.weights[i];
            for v in weighted.row_mut(i) {
                *v *= w;
            }
        }
        Ok(self.vectors.mul_at_b(&weighted))
    }

    /// Sum of basis functions scaled by coefficient rows (k x c) back to a
    /// nodal field (n_points x c).
    pub fn reconstruct(&self, coeffs: &Mat) -> Result<Mat> {
        if coeffs.rows() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficient rows for basis of size {}",
                coeffs.rows(),
                self.k()
            )));
        }
        Ok(self.vectors.mul(coeffs))
    }

    /// Weighted inner product of two nodal vectors.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n_points());
        assert_eq!(g.len(), self.n_points());
        let mut s = 0.0;
        for i in 0..f.len() {
            s += self.weights[i] * f[i] * g[i];
        }
        s
    }

    pub fn weighted_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Keep the first `k` basis functions.
    pub fn truncate(&self, k: usize) -> Result<EigenBasis> {
        if k > self.k() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate basis of size {} to {k}",
                self.k()
            )));
        }
        let vectors = Mat::from_fn(self.n_points(), k, |i, j| self.vectors.at(i, j));
        EigenBasis::new(self.kind, vectors, self.values[..k].to_vec(), self.weights.clone())
    }

    /// Max deviation of the weighted Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.project(&self.vectors).expect("self projection");
        let mut err = 0.0_f64;
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram.at(i, j) - expect).abs());
            }
        }
        err
    }

    /// Identifier tying derived artifacts to this exact basis.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(16 + 8 * (self.vectors.data().len() + self.values.len() + self.weights.len()));
        bytes.extend_from_slice(match self.kind {
            BasisKind::Lbo => b"lbo",
            BasisKind::Fourier => b"fou",
            BasisKind::Pod => b"pod",
        });
        bytes.extend_from_slice(&(self.n_points() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.k() as u64).to_le_bytes());
        for v in self.vectors.data().iter().chain(&self.values).chain(&self.weights) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        container::sha256_hex(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>, source_checksum: &str) -> Result<()> {
        let header = BasisCacheHeader {
            schema_version: 1,
            kind: self.kind,
            k: self.k(),
            n_points: self.n_points(),
            checksum: source_checksum.to_string(),
        };
        container::write_blob_file(
            path,
            &header,
            &[
                ("vectors", self.vectors.data()),
                ("values", &self.values),
                ("weights", &self.weights),
            ],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(EigenBasis, String)> {
        let bytes = std::fs::read(path)?;
        EigenBasis::from_bytes(&bytes)
    }

    /// Parse a basis cache file from raw bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<(EigenBasis, String)> {
        let (header, mut blobs): (BasisCacheHeader, _) = container::read_blob_bytes(bytes)?;
        if header.schema_version != 1 {
            return Err(Error::Container(format!(
                "unsupported basis schema_version {}",
                header.schema_version
            )));
        }
        let nk = header
            .n_points
            .checked_mul(header.k)
            .ok_or_else(|| Error::Container("basis extent overflow".into()))?;
        let vectors = container::take_blob(&mut blobs, "vectors", nk)?;
        let values = container::take_blob(&mut blobs, "values", header.k)?;
        let weights = container::take_blob(&mut blobs, "weights", header.n_points)?;
        let basis = EigenBasis::new(
            header.kind,
            Mat::from_vec(header.n_points, header.k, vectors),
            values,
            weights,
        )?;
        Ok((basis, header.checksum))
    }
}

#[derive(Serialize, Deserialize)]
struct BasisCacheHeader {
    schema_version: u32,
    kind: BasisKind,
    k: usize,
    n_points: usize,
    checksum: String,
}

/// Flip column signs so the first entry with |entry| > 1e-10 is positive.
/// Makes eigendecompositions bit-deterministic across runs.
pub(crate) fn normalize_signs(vectors: &mut Mat) {
    for j in 0..vectors.cols() {
        let mut flip = false;
        for i in 0..vectors.rows() {
            let v = vectors.at(i, j);
            if v.abs() > SIGN_EPS {
                flip = v < 0.0;
                break;
            }
        }
        if flip {
            for i in 0..vectors.rows() {
                *vectors.at_mut(i, j) = -vectors.at(i, j);
            }
        }
    }
}

/// Order columns by eigenvalue; exact ties fall back to lexicographic
/// comparison of the sign-normalized columns so repeated eigenvalues still
/// come out in a reproducible order.
fn deterministic_order(values: &[f64], vectors: &Mat) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap()
            .then_with(|| {
                for i in 0..vectors.rows() {
                    let cmp = vectors.at(i, a).partial_cmp(&vectors.at(i, b)).unwrap();
                    if cmp != std::cmp::Ordering::Equal {
                        return cmp;
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    idx
}

/// Smallest-k eigenpairs of `L phi = lambda M phi` with diagonal mass `M`.
///
/// The generalized problem is reduced to a standard symmetric one by the
/// scaling `B = M^{-1/2} L M^{-1/2}`, densely decomposed, and scaled back so
/// the returned columns are orthonormal under the lumped-mass inner product.
pub fn compute_lbo_basis(stiffness: &SparseSymMatrix, lumped_mass: &[f64], k: usize) -> Result<EigenBasis> {
    let n = stiffness.n();
    if lumped_mass.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mass vector has {} entries for stiffness of size {n}",
            lumped_mass.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs from an {n}-point domain"
        )));
    }
    if !lumped_mass.iter().all(|&m| m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument("lumped mass must be positive".into()));
    }

    let inv_sqrt_m: Vec<f64> = lumped_mass.iter().map(|&m| 1.0 / m.sqrt()).collect();
    let mut b = Mat::zeros(n, n);
    for &(r, c, v) in stiffness.entries() {
        let scaled = v * inv_sqrt_m[r] * inv_sqrt_m[c];
        *b.at_mut(r, c) += scaled;
        if r != c {
            *b.at_mut(c, r) += scaled;
        }
    }

    let (vals, vecs) = sym_eigen(&b)?;
    let scale = vals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));

    // back-scale eigenvectors and normalize representation
    let mut phi = Mat::from_fn(n, n, |i, j| vecs.at(i, j) * inv_sqrt_m[i]);
    normalize_signs(&mut phi);
    let order = deterministic_order(&vals, &phi);

    let mut out_vecs = Mat::zeros(n, k);
    let mut out_vals = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        for i in 0..n {
            *out_vecs.at_mut(i, col) = phi.at(i, src);
        }
        // eigenvalues of -Laplacian are nonnegative; clamp roundoff noise
        let v = vals[src];
        if v < -1e-8 * scale {
            return Err(Error::Numerical(format!(
                "stiffness matrix is not positive semidefinite (eigenvalue {v:.3e})"
            )));
        }
        out_vals.push(v.max(0.0));
    }

    EigenBasis::new(BasisKind::Lbo, out_vecs, out_vals, lumped_mass.to_vec())
}

/// Real orthonormal Fourier family on `n_t` uniform samples of `[0, T]`,
/// with unit period. See [`fourier_time_basis_with_period`].
pub fn fourier_time_basis(n_t: usize, k: usize) -> Result<EigenBasis> {
    fourier_time_basis_with_period(n_t, k, 1.0)
}

/// Real orthonormal Fourier family on `n_t` uniform samples of `[0, T]`.
///
/// Column order: constant, then cos/sin pairs of increasing frequency
/// (the Nyquist cosine stands alone when `n_t` is even). Columns are
/// orthonormal under the uniform weights `1/n_t`; stored values are the
/// squared continuum frequencies `(2 pi j / T)^2` in ascending order.
pub fn fourier_time_basis_with_period(n_t: usize, k: usize, period: f64) -> Result<EigenBasis> {
    if n_t == 0 || k == 0 || k > n_t {
        return Err(Error::InvalidArgument(format!(
            "requested {k} fourier columns on {n_t} samples"
        )));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    let n = n_t;
    let mut vectors = Mat::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    let mut col = 0;
    // constant mode
    for i in 0..n {
        *vectors.at_mut(i, col) = 1.0;
    }
    values.push(0.0);
    col += 1;

    let mut freq = 1usize;
    while col < k {
        let omega_sq = {
            let w = 2.0 * std::f64::consts::PI * freq as f64 / period;
            w * w
        };
        let nyquist = n.is_multiple_of(2) && freq == n / 2;
        // cosine column
        let amp = if nyquist { 1.0 } else { std::f64::consts::SQRT_2 };
        for i in 0..n {
            let arg = 2.0 * std::f64::consts::PI * (freq * i) as f64 / n as f64;
            *vectors.at_mut(i, col) = amp * arg.cos();
        }
        values.push(omega_sq);
        col += 1;
        if col >= k {
            break;
        }
        if !nyquist {
            for i in 0..n {
                let arg = 2.0 * std::f64::consts::PI * (freq * i) as f64 / n as f64;
                *vectors.at_mut(i, col) = std::f64::consts::SQRT_2 * arg.sin();
            }
            values.push(omega_sq);
            col += 1;
        }
        freq += 1;
    }

    let weights = vec![1.0 / n as f64; n];
    normalize_signs(&mut vectors);
    EigenBasis::new(BasisKind::Fourier, vectors, values, weights)
}
