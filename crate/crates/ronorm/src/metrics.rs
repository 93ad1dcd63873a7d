//! Evaluation metrics and statistical reports: mean relative L2 error,
//! mean maximum error, pointwise-error histograms and per-sample max-error
//! distributions.
//!
//! The relative-L2 implementation here is the single source of truth; the
//! training loss and every baseline reuse it, so method comparisons cannot
//! drift apart on metric definitions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::SnapshotTensor;

/// What to do when a truth sample has zero norm: training treats it as a
/// hard error, evaluation skips the sample and reports how many were skipped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroNormPolicy {
    Error,
    Skip,
}

#[derive(Clone, Copy, Debug)]
pub struct RelL2 {
    pub mean: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Mean over samples of ||pred - truth||_2 / ||truth||_2, with samples laid
/// out contiguously in `pred` and `truth`.
pub fn relative_l2(pred: &[f64], truth: &[f64], n_samples: usize, policy: ZeroNormPolicy) -> Result<RelL2> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} values, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if n_samples == 0 || !pred.len().is_multiple_of(n_samples) {
        return Err(Error::DimensionMismatch(format!(
            "{} values do not split into {n_samples} samples",
            pred.len()
        )));
    }
    let len = pred.len() / n_samples;
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for s in 0..n_samples {
        let p = &pred[s * len..(s + 1) * len];
        let t = &truth[s * len..(s + 1) * len];
        let mut res_sq = 0.0;
        let mut tru_sq = 0.0;
        for i in 0..len {
            let r = p[i] - t[i];
            res_sq += r * r;
            tru_sq += t[i] * t[i];
        }
        if tru_sq == 0.0 {
            match policy {
                ZeroNormPolicy::Error => {
                    return Err(Error::Numerical(format!("truth sample {s} has zero norm")))
                }
                ZeroNormPolicy::Skip => {
                    skipped += 1;
                    continue;
                }
            }
        }
        sum += (res_sq / tru_sq).sqrt();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numerical("every truth sample has zero norm".into()));
    }
    Ok(RelL2 {
        mean: sum / used as f64,
        used,
        skipped,
    })
}

fn check_same_shape(pred: &SnapshotTensor, truth: &SnapshotTensor) -> Result<()> {
    if pred.n_samples() != truth.n_samples()
        || pred.n_x() != truth.n_x()
        || pred.n_t() != truth.n_t()
        || pred.channels() != truth.channels()
    {
        return Err(Error::DimensionMismatch("prediction/truth tensor shapes differ".into()));
    }
    Ok(())
}

/// Mean relative L2 error over test samples (zero-norm samples are skipped).
pub fn e_l2(pred: &SnapshotTensor, truth: &SnapshotTensor) -> Result<RelL2> {
    check_same_shape(pred, truth)?;
    relative_l2(pred.data(), truth.data(), pred.n_samples(), ZeroNormPolicy::Skip)
}

/// Mean over samples of the maximum absolute pointwise error.
pub fn mme(pred: &SnapshotTensor, truth: &SnapshotTensor) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let maxima = per_sample_max_errors(pred, truth)?;
    Ok(maxima.iter().sum::<f64>() / maxima.len() as f64)
}

fn per_sample_max_errors(pred: &SnapshotTensor, truth: &SnapshotTensor) -> Result<Vec<f64>> {
    check_same_shape(pred, truth)?;
    let mut out = Vec::with_capacity(pred.n_samples());
    for s in 0..pred.n_samples() {
        let p = pred.sample(s);
        let t = truth.sample(s);
        let m = p
            .iter()
            .zip(t)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        out.push(m);
    }
    Ok(out)
}

/// Sorted per-sample maximum absolute errors, smallest first.
pub fn max_error_distribution(pred: &SnapshotTensor, truth: &SnapshotTensor) -> Result<Vec<f64>> {
    let mut maxima = per_sample_max_errors(pred, truth)?;
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(maxima)
}

/// Selection of random spatio-temporal probe points for error statistics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub n_time_pts: usize,
    pub n_space_pts: usize,
    pub seed: u64,
    pub n_bins: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_points: usize,
    pub fraction_below_threshold: f64,
    pub threshold: f64,
}

/// Absolute-error histogram over seeded random (time x space) probe indices,
/// shared across all test samples and channels.
pub fn error_histogram(pred: &SnapshotTensor, truth: &SnapshotTensor, spec: &HistogramSpec) -> Result<ErrorHistogram> {
    check_same_shape(pred, truth)?;
    if spec.n_time_pts == 0 || spec.n_space_pts == 0 || spec.n_bins == 0 {
        return Err(Error::InvalidArgument("empty histogram selection".into()));
    }
    if spec.n_time_pts > pred.n_t() || spec.n_space_pts > pred.n_x() {
        return Err(Error::InvalidArgument(format!(
            "requested {}x{} probe points on a {}x{} grid",
            spec.n_space_pts,
            spec.n_time_pts,
            pred.n_x(),
            pred.n_t()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let space_idx = rand::seq::index::sample(&mut rng, pred.n_x(), spec.n_space_pts).into_vec();
    let time_idx = rand::seq::index::sample(&mut rng, pred.n_t(), spec.n_time_pts).into_vec();

    let mut errors = Vec::with_capacity(pred.n_samples() * spec.n_space_pts * spec.n_time_pts * pred.channels());
    for s in 0..pred.n_samples() {
        for &x in &space_idx {
            for &t in &time_idx {
                for ch in 0..pred.channels() {
                    errors.push((pred.at(s, x, t, ch) - truth.at(s, x, t, ch)).abs());
                }
            }
        }
    }
    let max_err = errors.iter().fold(0.0_f64, |m, &e| m.max(e));
    let hi = if max_err > 0.0 { max_err } else { 1.0 };
    let mut edges = Vec::with_capacity(spec.n_bins + 1);
    for b in 0..=spec.n_bins {
        edges.push(hi * b as f64 / spec.n_bins as f64);
    }
    let mut counts = vec![0u64; spec.n_bins];
    let mut below = 0usize;
    for &e in &errors {
        let mut bin = ((e / hi) * spec.n_bins as f64).floor() as usize;
        if bin >= spec.n_bins {
            bin = spec.n_bins - 1;
        }
        counts[bin] += 1;
        if e < spec.threshold {
            below += 1;
        }
    }
    Ok(ErrorHistogram {
        bin_edges: edges,
        counts,
        total_points: errors.len(),
        fraction_below_threshold: below as f64 / errors.len() as f64,
        threshold: spec.threshold,
    })
}

/// Evaluation summary for one trained model on one test split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub e_l2_mean: f64,
    pub e_l2_std: Option<f64>,
    pub mme_mean: f64,
    pub mme_std: Option<f64>,
    pub per_sample_max_errors: Vec<f64>,
    pub histogram: Option<ErrorHistogram>,
    pub skipped_samples: usize,
    pub wall_clock_s: f64,
    pub parameter_count: usize,
    pub config_hash: String,
}

impl EvalReport {
    pub fn single(
        pred: &SnapshotTensor,
        truth: &SnapshotTensor,
        histogram_spec: Option<&HistogramSpec>,
        wall_clock_s: f64,
        parameter_count: usize,
        config_hash: &str,
    ) -> Result<EvalReport> {
        let rel = e_l2(pred, truth)?;
        let mme_v = mme(pred, truth)?;
        let maxima = max_error_distribution(pred, truth)?;
        let histogram = match histogram_spec {
            Some(spec) => Some(error_histogram(pred, truth, spec)?),
            None => None,
        };
        Ok(EvalReport {
            e_l2_mean: rel.mean,
            e_l2_std: None,
            mme_mean: mme_v,
            mme_std: None,
            per_sample_max_errors: maxima,
            histogram,
            skipped_samples: rel.skipped,
            wall_clock_s,
            parameter_count,
            config_hash: config_hash.to_string(),
        })
    }

    /// Aggregate repeat runs: mean and population standard deviation of the
    /// scalar metrics, per-sample lists concatenated.
    pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
        if reports.is_empty() {
            return Err(Error::InvalidArgument("no reports to aggregate".into()));
        }
        let mean_std = |xs: Vec<f64>| -> (f64, f64) {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (e_mean, e_std) = mean_std(reports.iter().map(|r| r.e_l2_mean).collect());
        let (m_mean, m_std) = mean_std(reports.iter().map(|r| r.mme_mean).collect());
        let mut maxima = Vec::new();
        for r in reports {
            maxima.extend_from_slice(&r.per_sample_max_errors);
        }
        maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EvalReport {
            e_l2_mean: e_mean,
            e_l2_std: Some(e_std),
            mme_mean: m_mean,
            mme_std: Some(m_std),
            per_sample_max_errors: maxima,
            histogram: None,
            skipped_samples: reports.iter().map(|r| r.skipped_samples).sum(),
            wall_clock_s: reports.iter().map(|r| r.wall_clock_s).sum(),
            parameter_count: reports[0].parameter_count,
            config_hash: reports[0].config_hash.clone(),
        })
    }

    /// "mean (std)" formatting used in the comparison tables.
    pub fn format_mean_std(mean: f64, std: Option<f64>) -> String {
        match std {
            Some(s) => format!("{mean:.6} ({s:.6})"),
            None => format!("{mean:.6}"),
        }
    }
}
