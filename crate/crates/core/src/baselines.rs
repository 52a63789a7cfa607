//! Tikhonov reconstruction, error metrics and pointwise posterior summaries.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::render;
use crate::inference::{compress, MeasurementModel};
use crate::linalg::col_to_vec;
use crate::spectral::{synthesize, SpectralField};

pub const DEFAULT_TIKHONOV_LAMBDA: f64 = 5e-2;

/// Smallest `|R_ii| / max |R_jj|` accepted for an unregularized solve.
const RANK_TOLERANCE: f64 = 1e-13;

/// Minimizer of `|E^{-1/2}(y - H x)|^2 + lambda |x|^2` over real coordinates.
pub fn tikhonov_solve(mm: &MeasurementModel, lambda: f64) -> Result<SpectralField> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = mm.basis().len();
    // Same minimizer as the full system: the residual orthogonal to range(H) is constant.
    let (hw, yw) = {
        let (hw, yw, _) = mm.whitened()?;
        compress(&hw, &yw)
    };
    let m = hw.nrows();

    let reg = lambda.sqrt();
    let rows = if lambda > 0.0 { m + p } else { m };
    if rows < p {
        return Err(Error::Singular {
            what: "unregularized least squares".into(),
            condition: f64::INFINITY,
        });
    }
    let a = Mat::from_fn(rows, p, |i, j| {
        if i < m {
            hw[(i, j)]
        } else if i - m == j {
            reg
        } else {
            0.0
        }
    });
    let b = Mat::from_fn(rows, 1, |i, _| if i < m { yw[i] } else { 0.0 });
    let qr = a.qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let smallest = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smallest > RANK_TOLERANCE * largest) {
        return Err(Error::Singular {
            what: "Tikhonov system".into(),
            condition: largest / smallest,
        });
    }
    let x = qr.solve_lstsq(&b);
    SpectralField::from_real_coords(mm.basis(), &col_to_vec(x.as_ref()))
}

fn check_same(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("grids of {} and {} points", a.len(), b.len())));
    }
    Ok(())
}

/// Euclidean norm of the pointwise difference, `sqrt(G * MSE)`.
pub fn l2_error(recon: &[f64], truth: &[f64]) -> Result<f64> {
    check_same(recon, truth)?;
    Ok(recon.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

pub fn mse(recon: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(l2_error(recon, truth)?.powi(2) / truth.len() as f64)
}

/// `10 log10(peak^2 / MSE)` with `peak = max - min` of the truth; `+inf` for a perfect match.
pub fn psnr(recon: &[f64], truth: &[f64]) -> Result<f64> {
    let mse = mse(recon, truth)?;
    let (lo, hi) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * ((hi - lo).powi(2) / mse).log10())
}

/// Values of a field on the evaluation grid: nodes `j/size` in 1-D, pixel
/// centres of a `size x size` image in 2-D.
pub fn field_values(field: &SpectralField, size: usize) -> Result<Vec<f64>> {
    match field.spec().dim() {
        1 => Ok(synthesize(field, size)?.into_samples()),
        2 => Ok(render(field, size)?.pixels().to_vec()),
        d => Err(Error::InvalidParameter(format!("no evaluation grid for d = {d}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub method: String,
    pub l2_error: f64,
    /// `None` stands for an exact match.
    pub psnr: Option<f64>,
    pub mse: f64,
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl ReconstructionReport {
    pub fn new(method: &str, recon: &[f64], truth: &[f64]) -> Result<Self> {
        let psnr = psnr(recon, truth)?;
        Ok(Self {
            method: method.to_string(),
            l2_error: l2_error(recon, truth)?,
            psnr: psnr.is_finite().then_some(psnr),
            mse: mse(recon, truth)?,
            grid_points: truth.len(),
            runtime_seconds: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

const LOWER_QUANTILE: f64 = 0.025;
const UPPER_QUANTILE: f64 = 0.975;

/// Linear interpolation between order statistics of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise mean and central 95% interval of gridded samples.
pub fn posterior_summaries(samples: &[Vec<f64>]) -> Result<PosteriorSummary> {
    let points = samples.first().ok_or(Error::EmptyChain)?.len();
    summarize_streamed(samples.len(), points, usize::MAX, |i| Ok(samples[i].clone()))
}

/// Same summary when samples are produced on demand: pixels are processed in
/// blocks of at most `block_values / count` points, re-producing every sample
/// per block so memory stays bounded.
pub fn summarize_streamed(
    count: usize,
    points: usize,
    block_values: usize,
    mut produce: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<PosteriorSummary> {
    if count == 0 {
        return Err(Error::EmptyChain);
    }
    let block = (block_values / count).clamp(1, points.max(1));
    let mut out = PosteriorSummary {
        mean: vec![0.0; points],
        lower: vec![0.0; points],
        upper: vec![0.0; points],
    };
    let mut start = 0;
    while start < points {
        let end = (start + block).min(points);
        let mut columns = vec![Vec::with_capacity(count); end - start];
        for i in 0..count {
            let values = produce(i)?;
            if values.len() != points {
                return Err(Error::DimensionMismatch(format!(
                    "sample {i} has {} points, expected {points}",
                    values.len()
                )));
            }
            for (col, v) in columns.iter_mut().zip(&values[start..end]) {
                col.push(*v);
            }
        }
        for (offset, col) in columns.iter_mut().enumerate() {
            let j = start + offset;
            out.mean[j] = col.iter().sum::<f64>() / count as f64;
            col.sort_by(f64::total_cmp);
            out.lower[j] = quantile(col, LOWER_QUANTILE);
            out.upper[j] = quantile(col, UPPER_QUANTILE);
        }
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{col_from_slice, mat_vec};
    use crate::spectral::BasisSpec;
    use faer::linalg::solvers::{DenseSolveCore, Solve};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_model(m: usize, n: usize, seed: u64) -> MeasurementModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = BasisSpec::new(1, n).unwrap();
        let h = Mat::from_fn(m, basis.len(), |_, _| rng.random_range(-1.0..1.0));
        let y = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        MeasurementModel::iid(basis, h, 0.3, y).unwrap()
    }

    #[test]
    fn tikhonov_matches_normal_equations() {
        let mm = random_model(6, 3, 1);
        let lambda = 0.7;
        let x = tikhonov_solve(&mm, lambda).unwrap().to_real_coords();
        let e_inv = mm.noise_cov().partial_piv_lu().inverse();
        let mut a = mm.h().transpose() * &e_inv * mm.h();
        for i in 0..7 {
            a[(i, i)] += lambda;
        }
        let rhs = mat_vec((mm.h().transpose() * &e_inv).as_ref(), mm.y());
        let oracle = a.partial_piv_lu().solve(col_from_slice(&rhs));
        for i in 0..7 {
            assert!((x[i] - oracle[(i, 0)]).abs() < 1e-8);
        }
    }

    #[test]
    fn tikhonov_limits() {
        let mm = random_model(5, 2, 2);
        let y_norm = mm.y().iter().map(|v| v * v).sum::<f64>().sqrt();
        let shrunk = tikhonov_solve(&mm, 1e12).unwrap();
        assert!(shrunk.norm_sqr().sqrt() < 1e-6 * y_norm);
        let exact = tikhonov_solve(&mm, 0.0).unwrap().to_real_coords();
        let inv = mm.h().partial_piv_lu().inverse();
        let oracle = mat_vec(inv.as_ref(), mm.y());
        for (a, b) in exact.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(matches!(tikhonov_solve(&random_model(3, 2, 3), 0.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn tikhonov_norm_shrinks_with_lambda() {
        let mm = random_model(4, 3, 4);
        let norms: Vec<f64> = [1e-3, 1e-2, 0.1, 1.0, 10.0]
            .iter()
            .map(|&l| tikhonov_solve(&mm, l).unwrap().norm_sqr())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn metric_examples() {
        let truth: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        assert_eq!(l2_error(&truth, &truth).unwrap(), 0.0);
        assert_eq!(psnr(&truth, &truth).unwrap(), f64::INFINITY);
        let shifted: Vec<f64> = truth.iter().map(|v| v + 0.25).collect();
        assert!((l2_error(&shifted, &truth).unwrap() - 0.25 * 4.0).abs() < 1e-14);
        assert!((psnr(&shifted, &truth).unwrap() - 10.0 * 16f64.log10()).abs() < 1e-12);
        assert!(l2_error(&truth[..3], &truth).is_err());
        // A mean squared error of 0.004255 on 256 points is an L2 error of 1.0437.
        let g = 256;
        let recon = vec![0.004255f64.sqrt(); g];
        assert!((l2_error(&recon, &vec![0.0; g]).unwrap() - 1.0437).abs() < 1e-4);
    }

    #[test]
    fn summary_examples() {
        let same = vec![vec![1.0, 2.0]; 5];
        let s = posterior_summaries(&same).unwrap();
        assert_eq!(s.lower, s.upper);
        assert_eq!(s.mean, vec![1.0, 2.0]);
        let two = posterior_summaries(&[vec![0.0, 4.0], vec![2.0, 6.0]]).unwrap();
        assert_eq!(two.mean, vec![1.0, 5.0]);
        assert!(matches!(posterior_summaries(&[]), Err(Error::EmptyChain)));
    }

    #[test]
    fn interval_covers_fresh_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![1.0 + rng.sample::<f64, _>(StandardNormal); 3])
            .collect();
        let s = summarize_streamed(samples.len(), 3, 10_000, |i| Ok(samples[i].clone())).unwrap();
        let inside = (0..10_000)
            .filter(|_| {
                let v = 1.0 + rng.sample::<f64, _>(StandardNormal);
                v >= s.lower[0] && v <= s.upper[0]
            })
            .count() as f64
            / 10_000.0;
        assert!((0.94..=0.96).contains(&inside), "{inside}");
        assert_eq!(s, posterior_summaries(&samples).unwrap());
    }
}
