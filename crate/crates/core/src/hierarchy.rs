//! The layer chain `L(u_{j-1}) u_j = w_j`, `j = 0..=J`, and its
//! non-centred parametrization by white noise.
//!
//! Layer `-1` is the constant `ln(kappa0)`, so the top layer `u_0` is a
//! stationary Matérn field. Each deeper layer uses `kappa = exp(u_{j-1})`
//! as its inverse length-scale.

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::operators::{constant_level, LayerAssembler, LayerParams};
use crate::rng::{stream, Stream};
use crate::spectral::{BasisSpec, SpectralField};

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    basis: BasisSpec,
    layers: Vec<LayerParams>,
    kappa0: f64,
    fine_grid: Option<usize>,
}

impl HierarchyConfig {
    /// `layers` holds the parameters of `u_0 ..= u_J`.
    pub fn new(
        basis: BasisSpec,
        layers: Vec<LayerParams>,
        kappa0: f64,
        fine_grid: Option<usize>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("at least one layer is required".into()));
        }
        if !(kappa0 > 0.0 && kappa0.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa0 must be > 0, got {kappa0}")));
        }
        Ok(Self {
            basis,
            layers,
            kappa0,
            fine_grid,
        })
    }

    /// `J + 1` layers with identical parameters.
    pub fn uniform(basis: BasisSpec, hyper_layers: usize, params: LayerParams, kappa0: f64) -> Result<Self> {
        Self::new(basis, vec![params; hyper_layers + 1], kappa0, None)
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    /// Number of hyperprior layers `J`.
    pub fn hyper_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, j: usize) -> LayerParams {
        self.layers[j]
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn fine_grid(&self) -> Option<usize> {
        self.fine_grid
    }
}

/// White-noise coefficients `w_0 .. w_{k-1}` for some prefix of the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseStack {
    layers: Vec<SpectralField>,
}

impl WhiteNoiseStack {
    pub fn new(layers: Vec<SpectralField>) -> Result<Self> {
        if let Some(first) = layers.first() {
            if layers.iter().any(|w| w.spec() != first.spec()) {
                return Err(Error::DimensionMismatch("noise layers differ in basis".into()));
            }
        }
        Ok(Self { layers })
    }

    /// Splits a concatenated real-coordinate vector into layers.
    pub fn from_real_coords(spec: BasisSpec, coords: &[f64]) -> Result<Self> {
        let p = spec.len();
        if coords.len() % p != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not split into layers of {p}",
                coords.len()
            )));
        }
        let layers = coords
            .chunks_exact(p)
            .map(|c| SpectralField::from_real_coords(spec, c))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Standard draw: each real coordinate is `N(0, 1)`.
    pub fn draw(spec: BasisSpec, count: usize, rng: &mut impl Rng) -> Self {
        let coords: Vec<f64> = (0..count * spec.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self::from_real_coords(spec, &coords).expect("length is a multiple of the layer size")
    }

    pub fn zeros(spec: BasisSpec, count: usize) -> Self {
        Self {
            layers: vec![SpectralField::zeros(spec); count],
        }
    }

    pub fn layers(&self) -> &[SpectralField] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn to_real_coords(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|w| w.to_real_coords()).collect()
    }
}

/// Field coefficients `u_0 .. u_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack {
    layers: Vec<SpectralField>,
}

impl FieldStack {
    pub fn layers(&self) -> &[SpectralField] {
        &self.layers
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.layers.last()
    }

    pub fn into_layers(self) -> Vec<SpectralField> {
        self.layers
    }
}

/// A hierarchy with its operator assembler prepared once.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    cfg: HierarchyConfig,
    assembler: LayerAssembler,
}

impl Hierarchy {
    pub fn new(cfg: HierarchyConfig) -> Result<Self> {
        let assembler = LayerAssembler::new(cfg.basis(), cfg.fine_grid())?;
        Ok(Self { cfg, assembler })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.cfg
    }

    pub fn assembler(&self) -> &LayerAssembler {
        &self.assembler
    }

    pub fn basis(&self) -> BasisSpec {
        self.cfg.basis()
    }

    /// Real-coordinate `L` of layer `j` given the layer above.
    ///
    /// `u_prev = None` stands for the constant layer `ln(kappa0)`.
    pub fn layer_matrix(&self, j: usize, u_prev: Option<&[f64]>) -> Result<LayerMatrix> {
        let params = self.cfg.layer(j);
        let level = match u_prev {
            None => Some(self.cfg.kappa0().ln()),
            Some(u) => constant_level(u),
        };
        match level {
            Some(level) => Ok(LayerMatrix::Diagonal(
                self.assembler.constant_diagonal(level, params),
            )),
            None => {
                let field = SpectralField::from_real_coords(self.basis(), u_prev.unwrap())?;
                Ok(LayerMatrix::Dense(self.assembler.build_real(&field, params)?))
            }
        }
    }

    /// Solves `L(u_prev) u = w` for layer `j` in real coordinates.
    pub fn solve_layer(&self, j: usize, u_prev: Option<&[f64]>, w: &[f64]) -> Result<Vec<f64>> {
        self.layer_matrix(j, u_prev)?.solve(w)
    }

    /// Applies the layer chain to the first `w.len() / p` noise layers,
    /// returning every field in real coordinates.
    pub fn transform_coords(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        let p = self.basis().len();
        if w.len() % p != 0 || w.len() / p > self.cfg.layer_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} noise coordinates for {} layers of size {p}",
                w.len(),
                self.cfg.layer_count()
            )));
        }
        let mut fields: Vec<Vec<f64>> = Vec::with_capacity(w.len() / p);
        for (j, wj) in w.chunks_exact(p).enumerate() {
            let u = self.solve_layer(j, fields.last().map(|v| v.as_slice()), wj)?;
            fields.push(u);
        }
        Ok(fields)
    }

    /// `u = U(w)`, layer by layer.
    pub fn transform(&self, w: &WhiteNoiseStack) -> Result<FieldStack> {
        if w.layers().iter().any(|l| l.spec() != self.basis()) {
            return Err(Error::DimensionMismatch("noise basis differs from hierarchy".into()));
        }
        let coords = self.transform_coords(&w.to_real_coords())?;
        let layers = coords
            .iter()
            .map(|c| SpectralField::from_real_coords(self.basis(), c))
            .collect::<Result<_>>()?;
        Ok(FieldStack { layers })
    }

    /// One draw of all `J + 1` layers from the prior.
    pub fn sample_prior(&self, rng: &mut impl Rng) -> Result<FieldStack> {
        let w = WhiteNoiseStack::draw(self.basis(), self.cfg.layer_count(), rng);
        self.transform(&w)
    }
}

/// Real-coordinate layer operator; diagonal when the conditioning layer is constant.
#[derive(Debug, Clone)]
pub enum LayerMatrix {
    Diagonal(Vec<f64>),
    Dense(Mat<f64>),
}

impl LayerMatrix {
    pub fn solve(&self, w: &[f64]) -> Result<Vec<f64>> {
        match self {
            LayerMatrix::Diagonal(d) => Ok(w.iter().zip(d).map(|(a, b)| a / b).collect()),
            LayerMatrix::Dense(m) => lu_solve(m.as_ref(), w, "layer operator"),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            LayerMatrix::Diagonal(d) => Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 }),
            LayerMatrix::Dense(m) => m.clone(),
        }
    }
}

/// `u = U(w)` for a one-off configuration.
pub fn transform_u(w: &WhiteNoiseStack, cfg: &HierarchyConfig) -> Result<FieldStack> {
    Hierarchy::new(cfg.clone())?.transform(w)
}

/// Prior draw reproducible from `seed`.
pub fn sample_prior(cfg: &HierarchyConfig, seed: u64) -> Result<FieldStack> {
    let mut rng = stream(seed, Stream::Prior, 0);
    Hierarchy::new(cfg.clone())?.sample_prior(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_l, smoothness};
    use crate::spectral::MultiIndexTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(dim: usize, n: usize, hyper: usize) -> HierarchyConfig {
        HierarchyConfig::uniform(
            BasisSpec::new(dim, n).unwrap(),
            hyper,
            LayerParams::new(1.0).unwrap(),
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_gives_zero_fields() {
        let cfg = config(1, 6, 2);
        let u = transform_u(&WhiteNoiseStack::zeros(cfg.basis(), 3), &cfg).unwrap();
        assert!(u.layers().iter().all(|f| f.norm_sqr() == 0.0));
    }

    #[test]
    fn top_layer_is_diagonal_solve() {
        let cfg = config(1, 5, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WhiteNoiseStack::draw(cfg.basis(), 1, &mut rng);
        let u = transform_u(&w, &cfg).unwrap();
        let table = MultiIndexTable::new(cfg.basis());
        let k0: f64 = cfg.kappa0();
        for pos in 0..cfg.basis().len() {
            let lambda = table.eigenvalues()[pos];
            let expected =
                w.layers()[0].coeffs()[pos] / (k0.powf(0.5) + k0.powf(-smoothness(1)) * lambda);
            assert!((u.layers()[0].coeffs()[pos] - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn residual_of_every_layer_is_small() {
        let cfg = config(2, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = WhiteNoiseStack::draw(cfg.basis(), 3, &mut rng);
        let u = transform_u(&w, &cfg).unwrap();
        let mut prev = SpectralField::constant(cfg.basis(), cfg.kappa0().ln());
        for (j, uj) in u.layers().iter().enumerate() {
            let l = build_l(&prev, cfg.layer(j), None).unwrap();
            let lu = l.apply(uj).unwrap();
            let wj = &w.layers()[j];
            let resid: f64 = lu
                .coeffs()
                .iter()
                .zip(wj.coeffs())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-9 * wj.norm_sqr().sqrt(), "layer {j}: {resid}");
            prev = uj.clone();
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = config(1, 8, 1);
        assert_eq!(sample_prior(&cfg, 42).unwrap(), sample_prior(&cfg, 42).unwrap());
        assert_ne!(sample_prior(&cfg, 42).unwrap(), sample_prior(&cfg, 43).unwrap());
    }

    #[test]
    fn prior_mean_is_zero() {
        let cfg = config(1, 4, 1);
        let h = Hierarchy::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 10_000;
        let p = cfg.basis().len();
        let mut sum = vec![0.0; p];
        let mut sum_sq = vec![0.0; p];
        for _ in 0..draws {
            let u = h.sample_prior(&mut rng).unwrap();
            for (i, v) in u.last().unwrap().to_real_coords().iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        for i in 0..p {
            let mean = sum[i] / draws as f64;
            let sd = (sum_sq[i] / draws as f64 - mean * mean).sqrt();
            assert!(mean.abs() <= 4.0 * sd / (draws as f64).sqrt(), "coordinate {i}");
        }
    }

    #[test]
    fn stationary_prior_variance_matches_spectral_density() {
        let beta = 1.7;
        let cfg = HierarchyConfig::uniform(BasisSpec::new(1, 8).unwrap(), 0, LayerParams::new(beta).unwrap(), 3.0)
            .unwrap();
        let h = Hierarchy::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = cfg.basis().len();
        let draws = 100_000;
        let mut sum_sq = vec![0.0; p];
        for _ in 0..draws {
            let w = WhiteNoiseStack::draw(cfg.basis(), 1, &mut rng).to_real_coords();
            for (s, v) in sum_sq.iter_mut().zip(&h.transform_coords(&w).unwrap()[0]) {
                *s += v * v;
            }
        }
        let table = MultiIndexTable::new(cfg.basis());
        let nu = smoothness(1);
        for (i, s) in sum_sq.iter().enumerate() {
            // Coordinate 2l-1 and 2l both carry mode l.
            let l = (i + 1) / 2;
            let lambda = table.eigenvalues()[table.len() / 2 + l];
            let expected = beta * 3.0f64.powf(2.0 * nu) / (9.0 + lambda).powi(2);
            let got = s / draws as f64;
            assert!((got / expected - 1.0).abs() < 0.05, "coordinate {i}: {got} vs {expected}");
        }
    }

    #[test]
    fn layer_matrices_round_trip_the_noise() {
        let cfg = config(1, 6, 2);
        let h = Hierarchy::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = WhiteNoiseStack::draw(cfg.basis(), 3, &mut rng).to_real_coords();
        let u = h.transform_coords(&w).unwrap();
        let p = cfg.basis().len();
        for j in 0..3 {
            let prev = if j == 0 { None } else { Some(u[j - 1].as_slice()) };
            let l = h.layer_matrix(j, prev).unwrap().to_dense();
            let back = crate::linalg::mat_vec(l.as_ref(), &u[j]);
            for (a, b) in back.iter().zip(&w[j * p..(j + 1) * p]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
