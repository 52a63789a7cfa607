//! Fourier basis on the unit torus.
//!
//! Basis functions are `phi_l(x) = exp(i 2pi k(l).x)` where the multi-index
//! `k(l)` ranges over `[-n, n]^d`. The linear index `l` runs over `[-N, N]`
//! with `N = ((2n+1)^d - 1) / 2`; position `l + N` in a coefficient vector
//! holds `k(l)`, the first axis varying slowest.
//!
//! Real fields have Hermitian-symmetric coefficients, so only `N + 1`
//! complex values are free. Those are exposed to the samplers through the
//! *real coordinates*
//!
//! ```text
//! x[0]      = Re c(0)
//! x[2l - 1] = sqrt(2) Re c(l)      l = 1..=N
//! x[2l]     = sqrt(2) Im c(l)
//! ```
//!
//! which is an isometry (`sum |c|^2 = |x|^2`) and maps real white noise on
//! the torus to a standard normal vector.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angular frequency constant of the basis, chosen so that every basis
/// function is 1-periodic on the unit box.
pub const ANGULAR_FREQUENCY: f64 = 2.0 * PI;

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Multi-index with unused trailing components set to zero.
pub type MultiIndex = [i64; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpec {
    dim: usize,
    n: usize,
}

impl BasisSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidBasis(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-axis frequency bound.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of frequencies per axis, `2n + 1`.
    pub fn axis_len(&self) -> usize {
        2 * self.n + 1
    }

    /// Total number of coefficients, `2N + 1`.
    pub fn len(&self) -> usize {
        self.axis_len().pow(self.dim as u32)
    }

    /// Linear index bound `N`.
    pub fn half(&self) -> usize {
        (self.len() - 1) / 2
    }

    /// Basis with doubled per-axis band, wide enough to hold every
    /// difference `k(l) - k(m)`.
    pub fn extended(&self) -> BasisSpec {
        BasisSpec {
            dim: self.dim,
            n: 2 * self.n,
        }
    }

    /// Smallest grid (points per axis) that resolves this band without aliasing.
    pub fn min_grid(&self) -> usize {
        self.axis_len()
    }

    /// Decodes the multi-index stored at vector position `pos`.
    pub fn multi_index_at(&self, pos: usize) -> MultiIndex {
        let base = self.axis_len();
        let mut k = [0i64; MAX_DIM];
        let mut rest = pos;
        for axis in (0..self.dim).rev() {
            k[axis] = (rest % base) as i64 - self.n as i64;
            rest /= base;
        }
        k
    }

    /// Vector position of multi-index `k`, if every component is within the band.
    pub fn position_of(&self, k: &[i64]) -> Option<usize> {
        let n = self.n as i64;
        let base = self.axis_len();
        let mut pos = 0usize;
        for &c in k.iter().take(self.dim) {
            if c < -n || c > n {
                return None;
            }
            pos = pos * base + (c + n) as usize;
        }
        Some(pos)
    }

    fn check_index(&self, l: i64) -> Result<usize> {
        let bound = self.half() as i64;
        if l < -bound || l > bound {
            return Err(Error::IndexOutOfRange { index: l, bound });
        }
        Ok((l + bound) as usize)
    }
}

/// Bijection between linear indices and frequency multi-indices.
#[derive(Debug, Clone)]
pub struct MultiIndexTable {
    spec: BasisSpec,
    columns: Vec<MultiIndex>,
}

impl MultiIndexTable {
    /// Builds the table column by column in Kronecker order.
    pub fn new(spec: BasisSpec) -> Self {
        let columns = (0..spec.len()).map(|pos| spec.multi_index_at(pos)).collect();
        Self { spec, columns }
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Multi-index `k(l)` for `l` in `[-N, N]`.
    pub fn k(&self, l: i64) -> Result<&[i64]> {
        let pos = self.spec.check_index(l)?;
        Ok(&self.columns[pos][..self.spec.dim])
    }

    /// Multi-index at vector position `pos` (that is, `l = pos - N`).
    pub fn k_at(&self, pos: usize) -> &[i64] {
        &self.columns[pos][..self.spec.dim]
    }

    /// Linear index of `k`, if it lies in the band.
    pub fn index_of(&self, k: &[i64]) -> Option<i64> {
        self.spec
            .position_of(k)
            .map(|pos| pos as i64 - self.spec.half() as i64)
    }

    /// `l + m` when `k(l) + k(m)` stays inside the band, `None` otherwise.
    pub fn index_add(&self, l: i64, m: i64) -> Result<Option<i64>> {
        let kl = self.k(l)?;
        let km = self.k(m)?;
        let mut sum = [0i64; MAX_DIM];
        for axis in 0..self.spec.dim {
            sum[axis] = kl[axis] + km[axis];
        }
        Ok(self.index_of(&sum[..self.spec.dim]))
    }

    /// Eigenvalue of `-Laplacian` for `phi_l`: `c_d^2 |k(l)|^2`.
    pub fn eigenvalue(&self, l: i64) -> Result<f64> {
        let k = self.k(l)?;
        Ok(eigenvalue_of(k))
    }

    /// All eigenvalues, ordered by vector position.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|pos| eigenvalue_of(self.k_at(pos))).collect()
    }
}

fn eigenvalue_of(k: &[i64]) -> f64 {
    let sq: i64 = k.iter().map(|c| c * c).sum();
    ANGULAR_FREQUENCY * ANGULAR_FREQUENCY * sq as f64
}

/// Hermitian-symmetric Fourier coefficients of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: BasisSpec,
    coeffs: Vec<Complex64>,
}

const HERMITIAN_TOL: f64 = 1e-9;

impl SpectralField {
    /// Wraps a full coefficient vector ordered by `l = -N..=N`.
    ///
    /// Small rounding defects are symmetrized away; anything larger than a
    /// relative `1e-9` is rejected.
    pub fn new(spec: BasisSpec, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                spec.len(),
                coeffs.len()
            )));
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(1.0f64, f64::max);
        let defect = hermitian_defect(&coeffs);
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::NonHermitian { defect });
        }
        symmetrize(&mut coeffs);
        Ok(Self { spec, coeffs })
    }

    pub fn zeros(spec: BasisSpec) -> Self {
        Self {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    /// Constant field `value`.
    pub fn constant(spec: BasisSpec, value: f64) -> Self {
        let mut field = Self::zeros(spec);
        let mid = spec.half();
        field.coeffs[mid] = Complex64::new(value, 0.0);
        field
    }

    /// Builds a field from its real coordinates (see module docs).
    pub fn from_real_coords(spec: BasisSpec, x: &[f64]) -> Result<Self> {
        if x.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} real coordinates, got {}",
                spec.len(),
                x.len()
            )));
        }
        Ok(Self {
            spec,
            coeffs: coeffs_from_real(x),
        })
    }

    pub fn to_real_coords(&self) -> Vec<f64> {
        real_from_coeffs(&self.coeffs)
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    /// All coefficients ordered by `l = -N..=N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, l: i64) -> Result<Complex64> {
        let pos = self.spec.check_index(l)?;
        Ok(self.coeffs[pos])
    }

    /// Coefficient of multi-index `k`, zero outside the band.
    pub fn coeff_at(&self, k: &[i64]) -> Complex64 {
        self.spec
            .position_of(k)
            .map(|pos| self.coeffs[pos])
            .unwrap_or_default()
    }

    /// `sum_l |c(l)|^2`, the squared L2 norm of the field on the torus.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Pointwise evaluation `sum_l c(l) phi_l(x)`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (pos, c) in self.coeffs.iter().enumerate() {
            let k = self.spec.multi_index_at(pos);
            let phase: f64 = (0..self.spec.dim)
                .map(|a| ANGULAR_FREQUENCY * k[a] as f64 * x[a])
                .sum();
            acc += c.re * phase.cos() - c.im * phase.sin();
        }
        acc
    }

    /// Projects onto (or zero-pads into) another band of the same dimension.
    pub fn resample(&self, target: BasisSpec) -> Result<SpectralField> {
        if target.dim() != self.spec.dim() {
            return Err(Error::DimensionMismatch(
                "cannot resample across dimensions".into(),
            ));
        }
        let coeffs = (0..target.len())
            .map(|pos| self.coeff_at(&target.multi_index_at(pos)))
            .collect();
        Ok(Self {
            spec: target,
            coeffs,
        })
    }

    pub(crate) fn from_coeffs_unchecked(spec: BasisSpec, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), spec.len());
        Self { spec, coeffs }
    }
}

fn hermitian_defect(coeffs: &[Complex64]) -> f64 {
    let len = coeffs.len();
    (0..len)
        .map(|pos| (coeffs[pos] - coeffs[len - 1 - pos].conj()).norm())
        .fold(0.0, f64::max)
}

fn symmetrize(coeffs: &mut [Complex64]) {
    let len = coeffs.len();
    let mid = len / 2;
    for pos in 0..mid {
        let avg = (coeffs[len - 1 - pos] + coeffs[pos].conj()) * 0.5;
        coeffs[len - 1 - pos] = avg;
        coeffs[pos] = avg.conj();
    }
    coeffs[mid].im = 0.0;
}

/// Real coordinates of a Hermitian coefficient vector.
pub fn real_from_coeffs(coeffs: &[Complex64]) -> Vec<f64> {
    let mid = coeffs.len() / 2;
    let mut x = vec![0.0; coeffs.len()];
    x[0] = coeffs[mid].re;
    for l in 1..=mid {
        let c = coeffs[mid + l];
        x[2 * l - 1] = SQRT_2 * c.re;
        x[2 * l] = SQRT_2 * c.im;
    }
    x
}

/// Hermitian coefficient vector from real coordinates.
pub fn coeffs_from_real(x: &[f64]) -> Vec<Complex64> {
    let mid = x.len() / 2;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); x.len()];
    coeffs[mid] = Complex64::new(x[0], 0.0);
    for l in 1..=mid {
        let c = Complex64::new(x[2 * l - 1], x[2 * l]) / SQRT_2;
        coeffs[mid + l] = c;
        coeffs[mid - l] = c.conj();
    }
    coeffs
}

/// Real samples on a regular grid of `size` points per axis.
///
/// Node `j` along an axis sits at `x = j / size`; samples are stored with
/// the first axis varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dim: usize,
    size: usize,
    samples: Vec<f64>,
}

impl GridField {
    pub fn new(dim: usize, size: usize, samples: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || size == 0 {
            return Err(Error::DimensionMismatch(format!(
                "invalid grid {size}^{dim}"
            )));
        }
        if samples.len() != size.pow(dim as u32) {
            return Err(Error::DimensionMismatch(format!(
                "grid {size}^{dim} needs {} samples, got {}",
                size.pow(dim as u32),
                samples.len()
            )));
        }
        Ok(Self { dim, size, samples })
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(dim: usize, size: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let total = size.pow(dim as u32);
        let mut x = vec![0.0; dim];
        let samples = (0..total)
            .map(|idx| {
                let mut rest = idx;
                for axis in (0..dim).rev() {
                    x[axis] = (rest % size) as f64 / size as f64;
                    rest /= size;
                }
                f(&x)
            })
            .collect();
        Self::new(dim, size, samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn same_shape(&self, other: &GridField) -> bool {
        self.dim == other.dim && self.size == other.size
    }
}

/// Cached FFT plans for one grid size.
#[derive(Clone)]
pub struct GridTransform {
    dim: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridTransform")
            .field("dim", &self.dim)
            .field("size", &self.size)
            .finish()
    }
}

impl GridTransform {
    pub fn new(dim: usize, size: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || size == 0 {
            return Err(Error::DimensionMismatch(format!(
                "invalid grid {size}^{dim}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            dim,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn check_band(&self, spec: BasisSpec) -> Result<()> {
        if spec.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "basis dimension {} vs grid dimension {}",
                spec.dim(),
                self.dim
            )));
        }
        if self.size < spec.min_grid() {
            return Err(Error::GridTooSmall {
                grid: self.size,
                band: spec.n(),
                required: spec.min_grid(),
            });
        }
        Ok(())
    }

    fn wrapped_offset(&self, k: &MultiIndex) -> usize {
        let g = self.size as i64;
        (0..self.dim).fold(0usize, |acc, a| {
            acc * self.size + k[a].rem_euclid(g) as usize
        })
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let g = self.size;
        let mut line = vec![Complex64::new(0.0, 0.0); g];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = g.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                for chunk in buf.chunks_exact_mut(g) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            let block = stride * g;
            for outer in (0..buf.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = buf[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        buf[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Evaluates a field at every grid node.
    pub fn synthesize(&self, field: &SpectralField) -> Result<GridField> {
        let spec = field.spec();
        self.check_band(spec)?;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size.pow(self.dim as u32)];
        for (pos, c) in field.coeffs().iter().enumerate() {
            let k = spec.multi_index_at(pos);
            buf[self.wrapped_offset(&k)] += *c;
        }
        self.transform(&mut buf, &self.inverse);
        GridField::new(self.dim, self.size, buf.into_iter().map(|c| c.re).collect())
    }

    /// Fourier coefficients of grid samples, truncated to the band of `spec`.
    pub fn analyze(&self, grid: &GridField, spec: BasisSpec) -> Result<SpectralField> {
        self.check_band(spec)?;
        if grid.dim() != self.dim || grid.size() != self.size {
            return Err(Error::DimensionMismatch(
                "grid does not match transform".into(),
            ));
        }
        let mut buf: Vec<Complex64> = grid
            .samples()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.transform(&mut buf, &self.forward);
        let scale = 1.0 / buf.len() as f64;
        let mut coeffs: Vec<Complex64> = (0..spec.len())
            .map(|pos| buf[self.wrapped_offset(&spec.multi_index_at(pos))] * scale)
            .collect();
        symmetrize(&mut coeffs);
        Ok(SpectralField::from_coeffs_unchecked(spec, coeffs))
    }
}

/// Samples `field` on a grid of `size` points per axis.
pub fn synthesize(field: &SpectralField, size: usize) -> Result<GridField> {
    GridTransform::new(field.spec().dim(), size)?.synthesize(field)
}

/// Band-limited Fourier coefficients of `grid`.
pub fn analyze(grid: &GridField, spec: BasisSpec) -> Result<SpectralField> {
    GridTransform::new(grid.dim(), grid.size())?.analyze(grid, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(spec: BasisSpec, rng: &mut impl Rng) -> SpectralField {
        let x: Vec<f64> = (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        SpectralField::from_real_coords(spec, &x).unwrap()
    }

    #[test]
    fn k1_matches_kronecker_layout() {
        let table = MultiIndexTable::new(BasisSpec::new(2, 1).unwrap());
        let cols: Vec<Vec<i64>> = (0..9).map(|p| table.k_at(p).to_vec()).collect();
        let expected = [
            [-1, -1],
            [-1, 0],
            [-1, 1],
            [0, -1],
            [0, 0],
            [0, 1],
            [1, -1],
            [1, 0],
            [1, 1],
        ];
        for (c, e) in cols.iter().zip(expected.iter()) {
            assert_eq!(c.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn one_dimensional_table_is_z_n() {
        let table = MultiIndexTable::new(BasisSpec::new(1, 2).unwrap());
        let cols: Vec<i64> = (0..5).map(|p| table.k_at(p)[0]).collect();
        assert_eq!(cols, vec![-2, -1, 0, 1, 2]);
    }

    #[test]
    fn three_dimensional_center_is_zero() {
        let table = MultiIndexTable::new(BasisSpec::new(3, 1).unwrap());
        assert_eq!(table.len(), 27);
        assert_eq!(table.k(0).unwrap(), &[0, 0, 0]);
    }

    #[test]
    fn invalid_dimension_rejected() {
        assert!(BasisSpec::new(0, 3).is_err());
        assert!(BasisSpec::new(4, 3).is_err());
    }

    #[test]
    fn index_addition_examples() {
        let table = MultiIndexTable::new(BasisSpec::new(2, 1).unwrap());
        assert_eq!(table.index_add(1, 2).unwrap(), Some(3));
        assert_eq!(table.index_add(1, 1).unwrap(), None);
        for l in -4..=4 {
            assert_eq!(table.index_add(l, 0).unwrap(), Some(l));
        }
        assert!(table.index_add(5, 0).is_err());
    }

    #[test]
    fn index_addition_is_linear_exhaustively() {
        for dim in 1..=3 {
            for n in 0..=3 {
                let spec = BasisSpec::new(dim, n).unwrap();
                let table = MultiIndexTable::new(spec);
                let bound = spec.half() as i64;
                for l in -bound..=bound {
                    let kl = table.k(l).unwrap().to_vec();
                    let neg: Vec<i64> = kl.iter().map(|c| -c).collect();
                    assert_eq!(table.k(-l).unwrap(), neg.as_slice());
                    for m in -bound..=bound {
                        if let Some(s) = table.index_add(l, m).unwrap() {
                            assert_eq!(s, l + m);
                            let km = table.k(m).unwrap();
                            let ks = table.k(s).unwrap();
                            for a in 0..dim {
                                assert_eq!(ks[a], kl[a] + km[a]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn eigenvalue_examples() {
        let t1 = MultiIndexTable::new(BasisSpec::new(1, 2).unwrap());
        assert_eq!(t1.eigenvalue(0).unwrap(), 0.0);
        let two_pi_sq = ANGULAR_FREQUENCY * ANGULAR_FREQUENCY;
        assert!((t1.eigenvalue(1).unwrap() - two_pi_sq).abs() < 1e-12);
        assert_eq!(t1.eigenvalue(-2).unwrap(), t1.eigenvalue(2).unwrap());
        let t2 = MultiIndexTable::new(BasisSpec::new(2, 1).unwrap());
        let l = t2.index_of(&[1, 1]).unwrap();
        assert!((t2.eigenvalue(l).unwrap() - 2.0 * two_pi_sq).abs() < 1e-12);
        assert!(t2.eigenvalue(9).is_err());
    }

    #[test]
    fn constant_field_synthesizes_to_constant_grid() {
        let spec = BasisSpec::new(2, 3).unwrap();
        let grid = synthesize(&SpectralField::constant(spec, 2.5), 8).unwrap();
        assert!(grid.samples().iter().all(|&v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn single_mode_matches_pointwise_evaluation() {
        let spec = BasisSpec::new(1, 3).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); spec.len()];
        let c = Complex64::new(0.3, -0.7);
        coeffs[spec.half() + 1] = c;
        coeffs[spec.half() - 1] = c.conj();
        let field = SpectralField::new(spec, coeffs).unwrap();
        let g = 11;
        let grid = synthesize(&field, g).unwrap();
        for (j, &v) in grid.samples().iter().enumerate() {
            let x = j as f64 / g as f64;
            let z = Complex64::new(0.0, ANGULAR_FREQUENCY * x).exp();
            let direct = (c * z + c.conj() * z.conj()).re;
            assert!((v - direct).abs() < 1e-13, "node {j}");
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (dim, n, g) in [(1, 7, 15), (1, 5, 32), (2, 3, 9), (2, 4, 16), (3, 2, 6)] {
            let spec = BasisSpec::new(dim, n).unwrap();
            let field = random_field(spec, &mut rng);
            let grid = synthesize(&field, g).unwrap();
            let back = analyze(&grid, spec).unwrap();
            let err: f64 = field
                .coeffs()
                .iter()
                .zip(back.coeffs())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-12 * field.norm_sqr().sqrt());
            let mean_sq: f64 =
                grid.samples().iter().map(|v| v * v).sum::<f64>() / grid.samples().len() as f64;
            assert!((mean_sq - field.norm_sqr()).abs() <= 1e-10 * field.norm_sqr());
        }
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let spec = BasisSpec::new(1, 4).unwrap();
        let err = synthesize(&SpectralField::zeros(spec), 8).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { required: 9, .. }));
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let spec = BasisSpec::new(1, 1).unwrap();
        let coeffs = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5, 0.0),
        ];
        assert!(matches!(
            SpectralField::new(spec, coeffs),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn real_coordinates_are_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = BasisSpec::new(2, 2).unwrap();
        let field = random_field(spec, &mut rng);
        let x = field.to_real_coords();
        let norm_x: f64 = x.iter().map(|v| v * v).sum();
        assert!((norm_x - field.norm_sqr()).abs() < 1e-12);
        let back = SpectralField::from_real_coords(spec, &x).unwrap();
        assert_eq!(back, field);
    }
}
