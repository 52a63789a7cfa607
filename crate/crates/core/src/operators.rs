//! Galerkin matrices of one layer: the multiplication operator `M_N(f)`
//! and the square root of the precision operator
//!
//! ```text
//! L(u) = ( M_N(kappa(u)^{d/2}) + M_N(kappa(u)^{-nu}) diag(lambda) ) / sqrt(beta)
//! ```
//!
//! with `kappa(u) = exp(u)` and `nu = 2 - d/2`.

use std::f64::consts::{PI, SQRT_2};

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::checked_lu_complex;
use crate::spectral::{BasisSpec, GridField, GridTransform, MultiIndexTable, SpectralField};

/// Smoothness `nu = 2 - d/2` for the fixed exponent `alpha = 2`.
pub fn smoothness(dim: usize) -> f64 {
    2.0 - dim as f64 / 2.0
}

/// Matérn scale `beta = sigma^2 2^d pi^{d/2} Gamma(alpha) / Gamma(nu)` at `alpha = 2`.
pub fn matern_beta(dim: usize, sigma: f64) -> f64 {
    // Gamma(2) = 1; Gamma(nu) for nu = 3/2, 1, 1/2.
    let gamma_nu = match dim {
        1 => PI.sqrt() / 2.0,
        2 => 1.0,
        _ => PI.sqrt(),
    };
    sigma * sigma * 2f64.powi(dim as i32) * PI.powf(dim as f64 / 2.0) / gamma_nu
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    beta: f64,
}

impl LayerParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { beta })
    }

    /// Scale from the Matérn marginal standard deviation.
    pub fn from_sigma(dim: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        Self::new(matern_beta(dim, sigma))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Default fine-grid size for pointwise nonlinearities: the smallest power
/// of two with at least `4n + 1` points.
pub fn default_fine_grid(n: usize) -> usize {
    (4 * n + 1).next_power_of_two().max(8)
}

/// Dense matrix of multiplication by `f` on the span of `table`.
///
/// Entry `(l, m)` is `f^(k(l) - k(m))`, or zero when the difference leaves
/// the band stored in `f`.
pub fn multiplication_matrix(f: &SpectralField, table: &MultiIndexTable) -> Result<Mat<Complex64>> {
    let lookup = DifferenceLookup::new(f, table)?;
    let len = table.len();
    Ok(Mat::from_fn(len, len, |i, j| lookup.diff(i, j)))
}

/// Real-coordinate form of [`multiplication_matrix`].
pub fn multiplication_matrix_real(f: &SpectralField, table: &MultiIndexTable) -> Result<Mat<f64>> {
    let lookup = DifferenceLookup::new(f, table)?;
    let mid = table.len() / 2;
    Ok(real_operator(mid, |l, m| lookup.diff(l, m)))
}

/// Resolves `f^(k(l) - k(m))` by vector position.
struct DifferenceLookup<'a> {
    coeffs: &'a [Complex64],
    offsets: Vec<i64>,
    ks: Vec<[i64; 3]>,
    f_spec: BasisSpec,
    centre: i64,
    always_inside: bool,
}

impl<'a> DifferenceLookup<'a> {
    fn new(f: &'a SpectralField, table: &MultiIndexTable) -> Result<Self> {
        let f_spec = f.spec();
        let spec = table.spec();
        if f_spec.dim() != spec.dim() {
            return Err(Error::DimensionMismatch(format!(
                "field dimension {} vs basis dimension {}",
                f_spec.dim(),
                spec.dim()
            )));
        }
        let base = f_spec.axis_len() as i64;
        let mut ks = Vec::with_capacity(table.len());
        let offsets = (0..table.len())
            .map(|pos| {
                let k = spec.multi_index_at(pos);
                ks.push(k);
                (0..spec.dim()).fold(0i64, |acc, a| acc * base + k[a])
            })
            .collect();
        Ok(Self {
            coeffs: f.coeffs(),
            offsets,
            ks,
            f_spec,
            centre: f_spec.half() as i64,
            always_inside: f_spec.n() >= 2 * spec.n(),
        })
    }

    #[inline]
    fn diff(&self, l: usize, m: usize) -> Complex64 {
        if self.always_inside {
            return self.coeffs[(self.centre + self.offsets[l] - self.offsets[m]) as usize];
        }
        let (kl, km) = (&self.ks[l], &self.ks[m]);
        let bound = self.f_spec.n() as i64;
        for a in 0..self.f_spec.dim() {
            if (kl[a] - km[a]).abs() > bound {
                return Complex64::new(0.0, 0.0);
            }
        }
        self.coeffs[(self.centre + self.offsets[l] - self.offsets[m]) as usize]
    }
}

/// Converts a Hermitian-compatible complex operator, given entrywise by
/// vector position, into its action on real coordinates.
///
/// `entry(i, j)` must satisfy `entry(2N - i, 2N - j) = conj(entry(i, j))`.
pub(crate) fn real_operator(mid: usize, entry: impl Fn(usize, usize) -> Complex64) -> Mat<f64> {
    let dim = 2 * mid + 1;
    let mut out = Mat::<f64>::zeros(dim, dim);
    let inv_sqrt2 = 1.0 / SQRT_2;
    out[(0, 0)] = entry(mid, mid).re;
    for m in 1..=mid {
        let plus = entry(mid, mid + m);
        let minus = entry(mid, mid - m);
        out[(0, 2 * m - 1)] = (plus + minus).re * inv_sqrt2;
        out[(0, 2 * m)] = -(plus - minus).im * inv_sqrt2;
    }
    for l in 1..=mid {
        let a = entry(mid + l, mid);
        out[(2 * l - 1, 0)] = SQRT_2 * a.re;
        out[(2 * l, 0)] = SQRT_2 * a.im;
    }
    // Column-major fill.
    for m in 1..=mid {
        for l in 1..=mid {
            let plus = entry(mid + l, mid + m);
            let minus = entry(mid + l, mid - m);
            let s = plus + minus;
            let d = plus - minus;
            out[(2 * l - 1, 2 * m - 1)] = s.re;
            out[(2 * l, 2 * m - 1)] = s.im;
            out[(2 * l - 1, 2 * m)] = -d.im;
            out[(2 * l, 2 * m)] = d.re;
        }
    }
    out
}

/// Square root of the precision operator of one layer, in complex
/// Fourier coordinates.
#[derive(Debug, Clone)]
pub struct PrecisionSqrtMatrix {
    spec: BasisSpec,
    entries: Mat<Complex64>,
}

impl PrecisionSqrtMatrix {
    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn entries(&self) -> &Mat<Complex64> {
        &self.entries
    }

    /// `L v`.
    pub fn apply(&self, v: &SpectralField) -> Result<SpectralField> {
        if v.spec() != self.spec {
            return Err(Error::DimensionMismatch("field basis differs from operator".into()));
        }
        let x = Mat::from_fn(self.spec.len(), 1, |i, _| v.coeffs()[i]);
        let y = &self.entries * &x;
        let coeffs = (0..self.spec.len()).map(|i| y[(i, 0)]).collect();
        SpectralField::new(self.spec, coeffs)
    }

    /// Solves `L v = w`.
    pub fn solve(&self, w: &SpectralField) -> Result<SpectralField> {
        if w.spec() != self.spec {
            return Err(Error::DimensionMismatch("field basis differs from operator".into()));
        }
        let lu = checked_lu_complex(self.entries.as_ref(), "L(u) v = w")?;
        let rhs = Mat::from_fn(self.spec.len(), 1, |i, _| w.coeffs()[i]);
        let v = lu.solve(rhs);
        let coeffs = (0..self.spec.len()).map(|i| v[(i, 0)]).collect();
        SpectralField::new(self.spec, coeffs)
    }

    /// Action on real coordinates.
    pub fn to_real(&self) -> Mat<f64> {
        real_operator(self.spec.half(), |i, j| self.entries[(i, j)])
    }
}

/// Assembles layer operators for one basis, caching the index table, the
/// Laplacian spectrum and the fine-grid FFT plans.
#[derive(Debug, Clone)]
pub struct LayerAssembler {
    spec: BasisSpec,
    table: MultiIndexTable,
    eigenvalues: Vec<f64>,
    transform: GridTransform,
}

impl LayerAssembler {
    pub fn new(spec: BasisSpec, fine_grid: Option<usize>) -> Result<Self> {
        let size = fine_grid.unwrap_or_else(|| default_fine_grid(spec.n()));
        let required = spec.extended().min_grid();
        if size < required {
            return Err(Error::GridTooSmall {
                grid: size,
                band: spec.extended().n(),
                required,
            });
        }
        let table = MultiIndexTable::new(spec);
        Ok(Self {
            spec,
            eigenvalues: table.eigenvalues(),
            table,
            transform: GridTransform::new(spec.dim(), size)?,
        })
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn table(&self) -> &MultiIndexTable {
        &self.table
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn fine_grid(&self) -> usize {
        self.transform.size()
    }

    /// Coefficients of `exp(gamma u)` on the extended band `[-2n, 2n]^d`.
    pub fn kappa_power(&self, u: &SpectralField, gamma: f64) -> Result<SpectralField> {
        let grid = self.transform.synthesize(u)?;
        self.exp_coeffs(&grid, gamma)
    }

    fn exp_coeffs(&self, grid: &GridField, gamma: f64) -> Result<SpectralField> {
        let samples = grid.samples().iter().map(|&v| (gamma * v).exp()).collect();
        let powered = GridField::new(grid.dim(), grid.size(), samples)?;
        self.transform.analyze(&powered, self.spec.extended())
    }

    /// Coefficients of `kappa^{d/2}` and `kappa^{-nu}` from one synthesis.
    fn kappa_pair(&self, u_prev: &SpectralField) -> Result<(SpectralField, SpectralField)> {
        self.check(u_prev)?;
        let dim = self.spec.dim();
        let grid = self.transform.synthesize(u_prev)?;
        let a = self.exp_coeffs(&grid, dim as f64 / 2.0)?;
        let b = self.exp_coeffs(&grid, -smoothness(dim))?;
        Ok((a, b))
    }

    fn check(&self, u: &SpectralField) -> Result<()> {
        if u.spec() != self.spec {
            return Err(Error::DimensionMismatch(format!(
                "conditioning field has basis {:?}, expected {:?}",
                u.spec(),
                self.spec
            )));
        }
        Ok(())
    }

    /// Complex-coordinate `L(u_prev)`.
    pub fn build(&self, u_prev: &SpectralField, params: LayerParams) -> Result<PrecisionSqrtMatrix> {
        let (a, b) = self.kappa_pair(u_prev)?;
        let la = DifferenceLookup::new(&a, &self.table)?;
        let lb = DifferenceLookup::new(&b, &self.table)?;
        let scale = 1.0 / params.beta().sqrt();
        let len = self.spec.len();
        let lambda = &self.eigenvalues;
        let entries = Mat::from_fn(len, len, |i, j| {
            (la.diff(i, j) + lb.diff(i, j) * lambda[j]) * scale
        });
        Ok(PrecisionSqrtMatrix {
            spec: self.spec,
            entries,
        })
    }

    /// Real-coordinate `L(u_prev)`, assembled without the complex intermediate.
    pub fn build_real(&self, u_prev: &SpectralField, params: LayerParams) -> Result<Mat<f64>> {
        let (a, b) = self.kappa_pair(u_prev)?;
        let la = DifferenceLookup::new(&a, &self.table)?;
        let lb = DifferenceLookup::new(&b, &self.table)?;
        let scale = 1.0 / params.beta().sqrt();
        let lambda = &self.eigenvalues;
        Ok(real_operator(self.spec.half(), |i, j| {
            (la.diff(i, j) + lb.diff(i, j) * lambda[j]) * scale
        }))
    }

    /// Diagonal of `L` in real coordinates for a constant conditioning
    /// field `level`: `(e^{level d/2} + e^{-level nu} lambda_l) / sqrt(beta)`.
    pub fn constant_diagonal(&self, level: f64, params: LayerParams) -> Vec<f64> {
        let dim = self.spec.dim();
        let a = (level * dim as f64 / 2.0).exp();
        let b = (-level * smoothness(dim)).exp();
        let scale = 1.0 / params.beta().sqrt();
        let mid = self.spec.half();
        let mut diag = vec![0.0; self.spec.len()];
        diag[0] = a * scale;
        for l in 1..=mid {
            let v = (a + b * self.eigenvalues[mid + l]) * scale;
            diag[2 * l - 1] = v;
            diag[2 * l] = v;
        }
        diag
    }
}

/// Coefficients of `exp(gamma u)` on the extended band, from a fine grid of
/// `fine_grid` points per axis (defaults to [`default_fine_grid`]).
pub fn kappa_power_coeffs(u: &SpectralField, gamma: f64, fine_grid: Option<usize>) -> Result<SpectralField> {
    LayerAssembler::new(u.spec(), fine_grid)?.kappa_power(u, gamma)
}

/// `L(u_prev)` in complex Fourier coordinates.
pub fn build_l(u_prev: &SpectralField, params: LayerParams, fine_grid: Option<usize>) -> Result<PrecisionSqrtMatrix> {
    LayerAssembler::new(u_prev.spec(), fine_grid)?.build(u_prev, params)
}

/// Solves `L v = w`.
pub fn solve_l(l: &PrecisionSqrtMatrix, w: &SpectralField) -> Result<SpectralField> {
    l.solve(w)
}

/// If every non-constant coefficient vanishes, the constant value.
pub(crate) fn constant_level(real_coords: &[f64]) -> Option<f64> {
    real_coords[1..]
        .iter()
        .all(|&v| v == 0.0)
        .then_some(real_coords[0])
}
