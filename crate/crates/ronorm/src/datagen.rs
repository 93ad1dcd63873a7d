//! Desk-scale labelled datasets for all four mapping kinds: Gaussian random
//! fields sampled in a spectral basis, an implicit-Euler heat solver and a
//! leapfrog wave solver on the assembled mesh operators, and the five
//! dataset cases built from them.
//!
//! Generation is a pure function of the seed: per-sample seeds are derived
//! from the dataset seed and the sample index, so regenerating a dataset
//! reproduces it bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container::{Channels, Dataset, DatasetHeader, MeshProvenance};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::mesh::{assemble_operators, SparseSymMatrix, TriMesh};
use crate::reduction::SnapshotTensor;
use crate::spectral::{compute_lbo_basis, fourier_time_basis_with_period, BasisKind, EigenBasis};
use crate::train::MappingKind;

/// Gaussian random field sampled in a spectral basis: coefficients are
/// independent normals with variance `(lambda_k + tau^2)^(-alpha)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GrfSpec {
    pub alpha: f64,
    pub tau: f64,
    pub n_modes: usize,
    pub seed: u64,
}

impl GrfSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.tau.is_finite() && self.tau > 0.0) || self.n_modes == 0 {
            return Err(Error::InvalidArgument(
                "GRF needs alpha > 0, tau > 0 and at least one mode".into(),
            ));
        }
        Ok(())
    }

    pub fn mode_std(&self, lambda: f64) -> f64 {
        (lambda + self.tau * self.tau).powf(-self.alpha / 2.0)
    }
}

/// Spectral GRF coefficients for one draw.
pub fn sample_grf_coeffs(basis: &EigenBasis, spec: &GrfSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if !matches!(basis.kind, BasisKind::Lbo | BasisKind::Fourier) {
        return Err(Error::InvalidArgument("GRF sampling needs an intrinsic basis".into()));
    }
    if spec.n_modes > basis.k() {
        return Err(Error::InvalidArgument(format!(
            "GRF requests {} modes but the basis has {}",
            spec.n_modes,
            basis.k()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coeffs = Vec::with_capacity(spec.n_modes);
    for k in 0..spec.n_modes {
        let z: f64 = StandardNormal.sample(&mut rng);
        coeffs.push(spec.mode_std(basis.values[k]) * z);
    }
    Ok(coeffs)
}

/// Nodal field from given coefficients (test hook; zero coefficients give
/// the zero field).
pub fn grf_field_from_coeffs(basis: &EigenBasis, coeffs: &[f64]) -> Result<Vec<f64>> {
    let k = coeffs.len();
    if k > basis.k() {
        return Err(Error::DimensionMismatch("more coefficients than basis columns".into()));
    }
    let truncated = basis.truncate(k)?;
    let c = Mat::from_vec(k, 1, coeffs.to_vec());
    Ok(truncated.reconstruct(&c)?.into_data())
}

/// Draw one Gaussian random field on the basis domain.
pub fn sample_grf(basis: &EigenBasis, spec: &GrfSpec) -> Result<Vec<f64>> {
    let coeffs = sample_grf_coeffs(basis, spec)?;
    grf_field_from_coeffs(basis, &coeffs)
}

/// Time discretization and the scalar PDE coefficient (diffusivity for heat,
/// squared wave speed for the wave equation).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PdeRun {
    pub dt: f64,
    pub n_t: usize,
    pub coefficient: f64,
}

impl PdeRun {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 || self.n_t == 0 || !self.coefficient.is_finite() || self.coefficient <= 0.0 {
            return Err(Error::InvalidArgument(
                "PDE run needs dt > 0, n_t >= 1 and a positive coefficient".into(),
            ));
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_t as f64
    }
}

/// Implicit-Euler heat stepper with the factorization of `(M + dt k L)`
/// computed once and reused across samples and steps.
pub struct HeatSolver {
    chol: Cholesky,
    mass: Vec<f64>,
    dt: f64,
}

impl HeatSolver {
    pub fn new(stiffness: &SparseSymMatrix, mass: &[f64], diffusivity: f64, dt: f64) -> Result<Self> {
        if dt <= 0.0 || diffusivity <= 0.0 || !dt.is_finite() || !diffusivity.is_finite() {
            return Err(Error::InvalidArgument("heat solver needs dt > 0 and diffusivity > 0".into()));
        }
        let n = stiffness.n();
        if mass.len() != n {
            return Err(Error::DimensionMismatch("mass/stiffness size mismatch".into()));
        }
        let mut a = stiffness.to_dense();
        a.scale(dt * diffusivity);
        for i in 0..n {
            *a.at_mut(i, i) += mass[i];
        }
        let chol = Cholesky::factor(&a)?;
        Ok(HeatSolver {
            chol,
            mass: mass.to_vec(),
            dt,
        })
    }

    /// March `n_t` implicit-Euler steps; returns the states after t = 0 as
    /// columns of an `n_x x n_t` matrix.
    pub fn march(&self, initial: &[f64], source: Option<&Mat>, n_t: usize) -> Result<Mat> {
        let n = self.mass.len();
        if initial.len() != n {
            return Err(Error::DimensionMismatch("initial state size mismatch".into()));
        }
        if let Some(s) = source {
            if s.rows() != n || s.cols() < n_t {
                return Err(Error::DimensionMismatch(format!(
                    "source is {}x{}, need {n}x{n_t}",
                    s.rows(),
                    s.cols()
                )));
            }
        }
        let mut traj = Mat::zeros(n, n_t);
        let mut state = initial.to_vec();
        let mut rhs = vec![0.0; n];
        for step in 0..n_t {
            for i in 0..n {
                rhs[i] = self.mass[i] * state[i];
                if let Some(s) = source {
                    rhs[i] += self.dt * self.mass[i] * s.at(i, step);
                }
            }
            state = self.chol.solve(&rhs);
            for i in 0..n {
                *traj.at_mut(i, step) = state[i];
            }
        }
        Ok(traj)
    }
}

/// Transient heat equation `M dT/dt = -k L T + M s` via implicit Euler.
pub fn solve_heat(
    stiffness: &SparseSymMatrix,
    mass: &[f64],
    initial: &[f64],
    source: Option<&Mat>,
    run: &PdeRun,
) -> Result<Mat> {
    run.validate()?;
    let solver = HeatSolver::new(stiffness, mass, run.coefficient, run.dt)?;
    solver.march(initial, source, run.n_t)
}

/// Largest generalized eigenvalue of `L v = lambda M v`, estimated by power
/// iteration with a fixed deterministic start vector.
pub fn max_generalized_eigenvalue(stiffness: &SparseSymMatrix, mass: &[f64]) -> f64 {
    let n = stiffness.n();
    let mut v: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sin() + 1.5).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut w = stiffness.matvec(&v);
        for i in 0..n {
            w[i] /= mass[i];
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in &mut w {
            *x /= norm;
        }
        v = w;
        // Rayleigh quotient in the mass inner product
        let lv = stiffness.matvec(&v);
        let num: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().zip(mass).map(|(a, m)| a * a * m).sum();
        lambda = num / den;
    }
    lambda
}

/// Wave equation `d2u/dt2 = -c^2 M^{-1} L u + s` via central-difference
/// leapfrog with zero (or given) initial conditions. The source, when
/// present, is a time signal injected at one node. Returns the states after
/// t = 0 as columns.
pub fn solve_wave(
    stiffness: &SparseSymMatrix,
    mass: &[f64],
    source: Option<(usize, &[f64])>,
    initial: Option<(&[f64], &[f64])>,
    run: &PdeRun,
) -> Result<Mat> {
    run.validate()?;
    let n = stiffness.n();
    if mass.len() != n {
        return Err(Error::DimensionMismatch("mass/stiffness size mismatch".into()));
    }
    let c_sq = run.coefficient;
    let lambda_max = max_generalized_eigenvalue(stiffness, mass);
    if lambda_max > 0.0 {
        let dt_limit = 2.0 / (c_sq * lambda_max).sqrt();
        if run.dt >= dt_limit {
            return Err(Error::InvalidArgument(format!(
                "dt = {} violates the leapfrog stability bound {dt_limit:.6e}",
                run.dt
            )));
        }
    }
    if let Some((node, signal)) = source {
        if node >= n {
            return Err(Error::InvalidArgument(format!("source node {node} out of range")));
        }
        if signal.len() < run.n_t {
            return Err(Error::DimensionMismatch(format!(
                "source signal has {} samples, need {}",
                signal.len(),
                run.n_t
            )));
        }
    }

    let accel = |u: &[f64], step: usize| -> Vec<f64> {
        let mut a = stiffness.matvec(u);
        for i in 0..n {
            a[i] *= -c_sq / mass[i];
        }
        if let Some((node, signal)) = source {
            a[node] += signal[step];
        }
        a
    };

    let (u0, v0): (Vec<f64>, Vec<f64>) = match initial {
        Some((d, v)) => {
            if d.len() != n || v.len() != n {
                return Err(Error::DimensionMismatch("initial condition size mismatch".into()));
            }
            (d.to_vec(), v.to_vec())
        }
        None => (vec![0.0; n], vec![0.0; n]),
    };

    let dt = run.dt;
    let mut traj = Mat::zeros(n, run.n_t);
    let a0 = accel(&u0, 0);
    let mut prev = u0.clone();
    let mut curr: Vec<f64> = (0..n)
        .map(|i| u0[i] + dt * v0[i] + 0.5 * dt * dt * a0[i])
        .collect();
    for i in 0..n {
        *traj.at_mut(i, 0) = curr[i];
    }
    for step in 1..run.n_t {
        let a = accel(&curr, step);
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = 2.0 * curr[i] - prev[i] + dt * dt * a[i];
        }
        prev = curr;
        curr = next;
        for i in 0..n {
            *traj.at_mut(i, step) = curr[i];
        }
    }
    Ok(traj)
}

/// Dataset cases. Each pins one mapping kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataCase {
    /// GRF initial condition -> full heat trajectory, a(x) -> u(x,t).
    HeatIc,
    /// Disk-source layout -> heated trajectory, a(x) -> u(x,t).
    HeatLayout,
    /// Source time signal -> wave deflection trajectory, a(t) -> u(x,t).
    WaveForward,
    /// Wave deflection trajectory -> source time signal, a(x,t) -> u(t).
    WaveInverse,
    /// Heat trajectory -> later temperature field, a(x,t) -> u(x).
    HeatToFinal,
}

impl DataCase {
    pub fn mapping_kind(self) -> MappingKind {
        match self {
            DataCase::HeatIc | DataCase::HeatLayout => MappingKind::IncreaseFromSpace,
            DataCase::WaveForward => MappingKind::IncreaseFromTime,
            DataCase::WaveInverse => MappingKind::DecreaseToTime,
            DataCase::HeatToFinal => MappingKind::DecreaseToSpace,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataCase::HeatIc => "heat_ic",
            DataCase::HeatLayout => "heat_layout",
            DataCase::WaveForward => "wave_forward",
            DataCase::WaveInverse => "wave_inverse",
            DataCase::HeatToFinal => "heat_to_final",
        }
    }
}

/// Disk-shaped heat sources for the layout case.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub n_sources: usize,
    pub radius: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec {
            n_sources: 6,
            radius: 0.08,
        }
    }
}

/// Full generation recipe for one dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenSpec {
    pub case: DataCase,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub run: PdeRun,
    pub grf: GrfSpec,
    #[serde(default)]
    pub layout: LayoutSpec,
}

fn sample_seed(base: u64, index: usize) -> u64 {
    base ^ ((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Rejection-sample non-overlapping disk centers inside the mesh bounding
/// box; a center must cover at least one mesh node.
fn layout_field(mesh: &TriMesh, layout: &LayoutSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = mesh.n_vertices();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in mesh.vertices() {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(layout.n_sources);
    let mut attempts = 0;
    while centers.len() < layout.n_sources {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidArgument(
                "could not place non-overlapping heat sources; domain too small".into(),
            ));
        }
        let c = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        let clear = centers.iter().all(|o| {
            let d2 = (o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2);
            d2 >= (2.0 * layout.radius).powi(2)
        });
        if !clear {
            continue;
        }
        let covers = mesh.vertices().iter().any(|v| {
            (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2) <= layout.radius.powi(2)
        });
        if covers {
            centers.push(c);
        }
    }
    let mut field = vec![0.0; n];
    for (i, v) in mesh.vertices().iter().enumerate() {
        for c in &centers {
            if (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2) <= layout.radius.powi(2) {
                field[i] = 1.0;
                break;
            }
        }
    }
    Ok(field)
}

/// Fixed heating-power signal shared by every layout sample.
fn layout_power_signal(run: &PdeRun) -> Vec<f64> {
    let period = run.total_time();
    (0..run.n_t)
        .map(|s| {
            let t = s as f64 * run.dt;
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * t / period).sin()
        })
        .collect()
}

struct CaseBuffers {
    a: Vec<f64>,
    u: Vec<f64>,
}

/// Generate the train and test splits for one case. The generated pairs are
/// self-consistent: feeding a stored input through the same solver
/// reproduces the stored output.
pub fn build_dataset(mesh: &TriMesh, spec: &GenSpec) -> Result<(Dataset, Dataset)> {
    spec.run.validate()?;
    spec.grf.validate()?;
    if spec.n_train == 0 || spec.n_test == 0 {
        return Err(Error::InvalidArgument("need at least one train and one test sample".into()));
    }
    let (stiffness, mass) = assemble_operators(mesh);
    let n_x = mesh.n_vertices();
    let n_t = spec.run.n_t;
    let kind = spec.case.mapping_kind();

    // shared per-case machinery, built once
    let lbo_basis = match spec.case {
        DataCase::HeatIc | DataCase::HeatToFinal => {
            Some(compute_lbo_basis(&stiffness, &mass, spec.grf.n_modes)?)
        }
        _ => None,
    };
    let fourier_basis = match spec.case {
        DataCase::WaveForward | DataCase::WaveInverse => Some(fourier_time_basis_with_period(
            n_t,
            spec.grf.n_modes.min(n_t),
            spec.run.total_time(),
        )?),
        _ => None,
    };
    let heat_solver = match spec.case {
        DataCase::HeatIc | DataCase::HeatLayout | DataCase::HeatToFinal => Some(HeatSolver::new(
            &stiffness,
            &mass,
            spec.run.coefficient,
            spec.run.dt,
        )?),
        _ => None,
    };
    let power_signal = layout_power_signal(&spec.run);
    let source_node = mesh.central_vertex();

    let total = spec.n_train + spec.n_test;
    let mut all = Vec::with_capacity(total);
    for idx in 0..total {
        let seed = sample_seed(spec.seed, idx);
        let bufs = generate_sample(
            mesh,
            spec,
            &stiffness,
            &mass,
            lbo_basis.as_ref(),
            fourier_basis.as_ref(),
            heat_solver.as_ref(),
            &power_signal,
            source_node,
            seed,
        )?;
        all.push(bufs);
    }

    let make_split = |samples: &[CaseBuffers], offset: usize, count: usize| -> Result<Dataset> {
        let (a_len, u_len) = (samples[0].a.len(), samples[0].u.len());
        let mut a_data = Vec::with_capacity(count * a_len);
        let mut u_data = Vec::with_capacity(count * u_len);
        for s in &samples[offset..offset + count] {
            a_data.extend_from_slice(&s.a);
            u_data.extend_from_slice(&s.u);
        }
        let header = DatasetHeader {
            schema_version: 1,
            mapping_kind: kind,
            case: spec.case.name().to_string(),
            n_samples: count,
            n_x,
            n_t,
            channels: Channels { a: 1, u: 1 },
            dt: spec.run.dt,
            mesh: MeshProvenance {
                n_vertices: mesh.n_vertices(),
                n_triangles: mesh.n_triangles(),
                checksum: mesh.checksum(),
            },
            grf: Some(serde_json::to_value(spec.grf)?),
            seed: spec.seed,
            provenance: Some(serde_json::to_value(spec)?),
        };
        let (ax, at) = header.a_extent();
        let (ux, ut) = header.u_extent();
        Ok(Dataset {
            a: SnapshotTensor::new(a_data, count, ax, at, 1, spec.run.dt)?,
            u: SnapshotTensor::new(u_data, count, ux, ut, 1, spec.run.dt)?,
            header,
        })
    };

    let train = make_split(&all, 0, spec.n_train)?;
    let test = make_split(&all, spec.n_train, spec.n_test)?;
    Ok((train, test))
}

#[allow(clippy::too_many_arguments)]
fn generate_sample(
    mesh: &TriMesh,
    spec: &GenSpec,
    stiffness: &SparseSymMatrix,
    mass: &[f64],
    lbo_basis: Option<&EigenBasis>,
    fourier_basis: Option<&EigenBasis>,
    heat_solver: Option<&HeatSolver>,
    power_signal: &[f64],
    source_node: usize,
    seed: u64,
) -> Result<CaseBuffers> {
    let n_t = spec.run.n_t;
    match spec.case {
        DataCase::HeatIc => {
            let grf = GrfSpec { seed, ..spec.grf };
            let ic = sample_grf(lbo_basis.unwrap(), &grf)?;
            let traj = heat_solver.unwrap().march(&ic, None, n_t)?;
            Ok(CaseBuffers {
                a: ic,
                u: row_major_xt(&traj),
            })
        }
        DataCase::HeatToFinal => {
            let grf = GrfSpec { seed, ..spec.grf };
            let ic = sample_grf(lbo_basis.unwrap(), &grf)?;
            // march twice as far; the input window is the first half and the
            // target is the temperature field at the final step
            let traj = heat_solver.unwrap().march(&ic, None, 2 * n_t)?;
            let mut a = Vec::with_capacity(mesh.n_vertices() * n_t);
            for x in 0..mesh.n_vertices() {
                for t in 0..n_t {
                    a.push(traj.at(x, t));
                }
            }
            let u = traj.column(2 * n_t - 1);
            Ok(CaseBuffers { a, u })
        }
        DataCase::HeatLayout => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let field = layout_field(mesh, &spec.layout, &mut rng)?;
            let n = mesh.n_vertices();
            let source = Mat::from_fn(n, n_t, |i, s| field[i] * power_signal[s]);
            let zero_ic = vec![0.0; n];
            let traj = heat_solver.unwrap().march(&zero_ic, Some(&source), n_t)?;
            Ok(CaseBuffers {
                a: field,
                u: row_major_xt(&traj),
            })
        }
        DataCase::WaveForward | DataCase::WaveInverse => {
            let grf = GrfSpec { seed, ..spec.grf };
            let signal = sample_grf(fourier_basis.unwrap(), &grf)?;
            let traj = solve_wave(stiffness, mass, Some((source_node, &signal)), None, &spec.run)?;
            let field = row_major_xt(&traj);
            Ok(match spec.case {
                DataCase::WaveForward => CaseBuffers { a: signal, u: field },
                _ => CaseBuffers {
                    a: field,
                    u: signal,
                },
            })
        }
    }
}

/// Column-per-step trajectory to (x, t) row-major sample layout.
fn row_major_xt(traj: &Mat) -> Vec<f64> {
    let (n, n_t) = traj.shape();
    let mut out = Vec::with_capacity(n * n_t);
    for x in 0..n {
        out.extend_from_slice(traj.row(x));
    }
    // rows of traj are already (x, t)
    debug_assert_eq!(out.len(), n * n_t);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_ops() -> (TriMesh, SparseSymMatrix, Vec<f64>) {
        let mesh = TriMesh::unit_square_grid(4);
        let (l, m) = assemble_operators(&mesh);
        (mesh, l, m)
    }

    #[test]
    fn grf_zero_coeffs_give_zero_field() {
        let (_, l, m) = square_ops();
        let basis = compute_lbo_basis(&l, &m, 5).unwrap();
        let field = grf_field_from_coeffs(&basis, &[0.0; 5]).unwrap();
        assert!(field.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grf_coefficient_variance_matches_closed_form() {
        let (_, l, m) = square_ops();
        let basis = compute_lbo_basis(&l, &m, 4).unwrap();
        let spec = GrfSpec {
            alpha: 2.0,
            tau: 1.5,
            n_modes: 4,
            seed: 0,
        };
        let draws = 10_000;
        let mut sums = [0.0; 4];
        let mut sq_sums = [0.0; 4];
        for i in 0..draws {
            let coeffs = sample_grf_coeffs(&basis, &GrfSpec { seed: i as u64, ..spec }).unwrap();
            for k in 0..4 {
                sums[k] += coeffs[k];
                sq_sums[k] += coeffs[k] * coeffs[k];
            }
        }
        for k in 0..4 {
            let mean = sums[k] / draws as f64;
            let var = sq_sums[k] / draws as f64 - mean * mean;
            let expect = spec.mode_std(basis.values[k]).powi(2);
            let rel = (var - expect).abs() / expect;
            assert!(rel <= 0.05, "mode {k}: sample var {var:.4e} vs {expect:.4e} (rel {rel:.3})");
        }
    }

    #[test]
    fn larger_alpha_concentrates_energy_in_low_modes() {
        let (_, l, m) = square_ops();
        let basis = compute_lbo_basis(&l, &m, 10).unwrap();
        let frac = |alpha: f64| -> f64 {
            let mut acc = 0.0;
            for i in 0..100 {
                let spec = GrfSpec {
                    alpha,
                    tau: 1.0,
                    n_modes: 10,
                    seed: 1000 + i,
                };
                let c = sample_grf_coeffs(&basis, &spec).unwrap();
                let total: f64 = c.iter().map(|x| x * x).sum();
                let high: f64 = c[3..].iter().map(|x| x * x).sum();
                acc += high / total;
            }
            acc / 100.0
        };
        assert!(frac(3.0) < frac(1.0));
    }

    #[test]
    fn heat_constant_field_is_equilibrium() {
        let (_, l, m) = square_ops();
        let run = PdeRun {
            dt: 0.05,
            n_t: 20,
            coefficient: 0.1,
        };
        let initial = vec![2.5; l.n()];
        let traj = solve_heat(&l, &m, &initial, None, &run).unwrap();
        for t in 0..run.n_t {
            for x in 0..l.n() {
                assert!((traj.at(x, t) - 2.5).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn heat_conserves_mass_weighted_mean() {
        let (_, l, m) = square_ops();
        let run = PdeRun {
            dt: 0.08,
            n_t: 30,
            coefficient: 0.2,
        };
        let initial: Vec<f64> = (0..l.n()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let traj = solve_heat(&l, &m, &initial, None, &run).unwrap();
        let mean0: f64 = initial.iter().zip(&m).map(|(t, mi)| t * mi).sum();
        for step in 0..run.n_t {
            let mean: f64 = (0..l.n()).map(|x| traj.at(x, step) * m[x]).sum();
            assert!((mean - mean0).abs() <= 1e-8, "step {step}: {mean} vs {mean0}");
        }
    }

    #[test]
    fn heat_eigenmode_decays_at_exact_implicit_rate() {
        let (_, l, m) = square_ops();
        let basis = compute_lbo_basis(&l, &m, 4).unwrap();
        let k = 2;
        let lambda = basis.values[k];
        let phi = basis.vectors.column(k);
        let run = PdeRun {
            dt: 0.05,
            n_t: 15,
            coefficient: 0.3,
        };
        let traj = solve_heat(&l, &m, &phi, None, &run).unwrap();
        let factor = 1.0 / (1.0 + run.dt * run.coefficient * lambda);
        let mut expect = 1.0;
        for step in 0..run.n_t {
            expect *= factor;
            for x in 0..l.n() {
                assert!(
                    (traj.at(x, step) - expect * phi[x]).abs() <= 1e-8,
                    "step {step} node {x}"
                );
            }
        }
    }

    #[test]
    fn heat_is_stable_at_large_dt() {
        let (_, l, m) = square_ops();
        let run = PdeRun {
            dt: 50.0,
            n_t: 10,
            coefficient: 1.0,
        };
        let initial: Vec<f64> = (0..l.n()).map(|i| (i as f64 * 0.37).sin()).collect();
        let traj = solve_heat(&l, &m, &initial, None, &run).unwrap();
        let max0 = initial.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        for t in 0..run.n_t {
            for x in 0..l.n() {
                assert!(traj.at(x, t).abs() <= max0 + 1e-12);
            }
        }
    }

    #[test]
    fn wave_zero_source_stays_zero() {
        let (_, l, m) = square_ops();
        let run = PdeRun {
            dt: 0.01,
            n_t: 50,
            coefficient: 0.1,
        };
        let traj = solve_wave(&l, &m, None, None, &run).unwrap();
        assert!(traj.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wave_rejects_unstable_dt() {
        let (_, l, m) = square_ops();
        let lambda = max_generalized_eigenvalue(&l, &m);
        let c_sq = 0.1;
        let dt_bad = 2.0 / (c_sq * lambda).sqrt() * 1.01;
        let run = PdeRun {
            dt: dt_bad,
            n_t: 10,
            coefficient: c_sq,
        };
        assert!(solve_wave(&l, &m, None, None, &run).is_err());
    }

    #[test]
    fn leapfrog_energy_drift_below_one_percent() {
        let (_, l, m) = square_ops();
        let basis = compute_lbo_basis(&l, &m, 4).unwrap();
        let phi = basis.vectors.column(3);
        let c_sq = 0.1;
        let lambda = max_generalized_eigenvalue(&l, &m);
        let dt = 0.2 / (c_sq * lambda).sqrt(); // well inside the bound
        let run = PdeRun {
            dt,
            n_t: 500,
            coefficient: c_sq,
        };
        let zeros = vec![0.0; l.n()];
        let traj = solve_wave(&l, &m, None, Some((&phi, &zeros)), &run).unwrap();

        let energy = |ua: &[f64], ub: &[f64]| -> f64 {
            // E = 1/2 (||(u1-u0)/dt||_M^2 + c^2 u_half' L u_half)
            let n = ua.len();
            let mut kin = 0.0;
            let mut half = vec![0.0; n];
            for i in 0..n {
                let v = (ub[i] - ua[i]) / dt;
                kin += m[i] * v * v;
                half[i] = 0.5 * (ua[i] + ub[i]);
            }
            let lh = l.matvec(&half);
            let pot: f64 = half.iter().zip(&lh).map(|(a, b)| a * b).sum();
            0.5 * (kin + c_sq * pot)
        };

        let first = energy(&phi, &traj.column(0));
        let mut min_e = first;
        let mut max_e = first;
        for step in 0..run.n_t - 1 {
            let e = energy(&traj.column(step), &traj.column(step + 1));
            min_e = min_e.min(e);
            max_e = max_e.max(e);
        }
        let drift = (max_e - min_e) / first;
        assert!(drift < 0.01, "energy drift {drift:.4}");
    }

    #[test]
    fn wave_is_linear_in_the_source() {
        let (mesh, l, m) = square_ops();
        let run = PdeRun {
            dt: 0.02,
            n_t: 40,
            coefficient: 0.1,
        };
        let node = mesh.central_vertex();
        let s1: Vec<f64> = (0..run.n_t).map(|i| (i as f64 * 0.3).sin()).collect();
        let s2: Vec<f64> = (0..run.n_t).map(|i| (i as f64 * 0.11).cos() - 0.4).collect();
        let sum: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let t1 = solve_wave(&l, &m, Some((node, &s1)), None, &run).unwrap();
        let t2 = solve_wave(&l, &m, Some((node, &s2)), None, &run).unwrap();
        let ts = solve_wave(&l, &m, Some((node, &sum)), None, &run).unwrap();
        for (idx, v) in ts.data().iter().enumerate() {
            let lin = t1.data()[idx] + t2.data()[idx];
            assert!((v - lin).abs() <= 1e-9);
        }
    }

    #[test]
    fn wave_halving_dt_quarters_the_error() {
        let (_, l, m) = square_ops();
        let basis = compute_lbo_basis(&l, &m, 4).unwrap();
        let phi = basis.vectors.column(2);
        let c_sq = 0.1;
        let lambda = max_generalized_eigenvalue(&l, &m);
        let dt = 0.4 / (c_sq * lambda).sqrt();
        let zeros = vec![0.0; l.n()];
        let solve_at = |steps_scale: usize| -> Vec<f64> {
            let run = PdeRun {
                dt: dt / steps_scale as f64,
                n_t: 64 * steps_scale,
                coefficient: c_sq,
            };
            let traj = solve_wave(&l, &m, None, Some((&phi, &zeros)), &run).unwrap();
            traj.column(run.n_t - 1)
        };
        let reference = solve_at(8);
        let err = |u: &[f64]| -> f64 {
            u.iter()
                .zip(&reference)
                .fold(0.0_f64, |a, (x, r)| a.max((x - r).abs()))
        };
        let e1 = err(&solve_at(1));
        let e2 = err(&solve_at(2));
        let ratio = e1 / e2;
        assert!((3.0..=5.0).contains(&ratio), "convergence ratio {ratio:.3}");
    }

    fn quick_spec(case: DataCase) -> GenSpec {
        GenSpec {
            case,
            n_train: 2,
            n_test: 1,
            seed: 5,
            run: PdeRun {
                dt: 0.02,
                n_t: 8,
                coefficient: 0.1,
            },
            grf: GrfSpec {
                alpha: 3.0,
                tau: 3.0,
                n_modes: 6,
                seed: 0,
            },
            layout: LayoutSpec {
                n_sources: 3,
                radius: 0.12,
            },
        }
    }

    #[test]
    fn build_dataset_shapes_and_determinism() {
        let mesh = TriMesh::unit_square_grid(4);
        for case in [
            DataCase::HeatIc,
            DataCase::HeatLayout,
            DataCase::WaveForward,
            DataCase::WaveInverse,
            DataCase::HeatToFinal,
        ] {
            let spec = quick_spec(case);
            let (train, test) = build_dataset(&mesh, &spec).unwrap();
            assert_eq!(train.header.n_samples, 2);
            assert_eq!(test.header.n_samples, 1);
            assert_eq!(train.header.mapping_kind, case.mapping_kind());
            let (ax, at) = train.header.a_extent();
            assert_eq!(train.a.n_x(), ax);
            assert_eq!(train.a.n_t(), at);

            let (train2, _) = build_dataset(&mesh, &spec).unwrap();
            assert_eq!(train.a.data(), train2.a.data());
            assert_eq!(train.u.data(), train2.u.data());
        }
    }

    #[test]
    fn heat_ic_smoke_on_minimal_mesh() {
        let mesh = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
            2,
        )
        .unwrap();
        let spec = GenSpec {
            grf: GrfSpec {
                alpha: 3.0,
                tau: 3.0,
                n_modes: 3,
                seed: 0,
            },
            ..quick_spec(DataCase::HeatIc)
        };
        let (train, test) = build_dataset(&mesh, &spec).unwrap();
        assert_eq!(train.header.n_samples, 2);
        assert_eq!(test.header.n_samples, 1);
        assert_eq!(train.header.n_x, 3);
        assert_eq!(train.header.n_t, spec.run.n_t);
        let dir = tempfile::tempdir().unwrap();
        train.save(dir.path().join("train")).unwrap();
        let back = Dataset::load(dir.path().join("train")).unwrap();
        assert_eq!(back.a.data(), train.a.data());
    }

    #[test]
    fn wave_inverse_regenerates_from_stored_source() {
        let mesh = TriMesh::unit_square_grid(4);
        let spec = quick_spec(DataCase::WaveInverse);
        let (train, _) = build_dataset(&mesh, &spec).unwrap();
        let (l, m) = assemble_operators(&mesh);
        let node = mesh.central_vertex();
        for i in 0..train.header.n_samples {
            // stored target is the source signal; re-solving must reproduce
            // the stored deflection trajectory
            let signal: Vec<f64> = (0..spec.run.n_t).map(|t| train.u.at(i, 0, t, 0)).collect();
            let traj = solve_wave(&l, &m, Some((node, &signal)), None, &spec.run).unwrap();
            for x in 0..mesh.n_vertices() {
                for t in 0..spec.run.n_t {
                    assert!((traj.at(x, t) - train.a.at(i, x, t, 0)).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn layout_sources_do_not_overlap() {
        let mesh = TriMesh::unit_square_grid(6);
        let layout = LayoutSpec {
            n_sources: 4,
            radius: 0.1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let field = layout_field(&mesh, &layout, &mut rng).unwrap();
        assert!(field.iter().any(|&v| v > 0.0));
        assert!(field.iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
