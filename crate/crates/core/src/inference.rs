//! Posterior sampling: data misfit, the marginal potential of the hyper-layers,
//! pCN moves on their white noise and the exact Gaussian draw of the last layer.
//!
//! Everything works in real coordinates. `H` maps the `p` real coordinates of
//! `u_J` to `m` measurements and the prior of every layer is `L u = w` with
//! `w ~ N(0, I_p)`.

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, HierarchyConfig, LayerMatrix, WhiteNoiseStack};
use crate::linalg::{
    checked_lu, cholesky, cholesky_lower_in_place, col_from_slice, col_to_vec, gram_lower, llt_log_det, lower_solve_in_place, mat_vec,
    norm_sqr, qr_r_in_place,
};
use crate::rng::{stream, Stream};
use crate::spectral::{BasisSpec, SpectralField};

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Covariance `E` of the measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseCovariance {
    /// `sd^2 I`, stored without the `m x m` matrix.
    Iid(f64),
    Dense(Mat<f64>),
}

/// `y = H u_J + e` with `e ~ N(0, E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    basis: BasisSpec,
    h: Mat<f64>,
    noise: NoiseCovariance,
    y: Vec<f64>,
}

impl MeasurementModel {
    pub fn new(basis: BasisSpec, h: Mat<f64>, noise_cov: Mat<f64>, y: Vec<f64>) -> Result<Self> {
        let m = y.len();
        Self::check_shapes(basis, &h, m)?;
        if noise_cov.nrows() != m || noise_cov.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "noise covariance is {}x{}, expected {m}x{m}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        for i in 0..m {
            for j in 0..i {
                let (a, b) = (noise_cov[(i, j)], noise_cov[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOLERANCE * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidParameter("noise covariance is not symmetric".into()));
                }
            }
        }
        cholesky(noise_cov.as_ref(), "noise covariance")?;
        Ok(Self {
            basis,
            h,
            noise: NoiseCovariance::Dense(noise_cov),
            y,
        })
    }

    /// Independent noise with standard deviation `sd` on every measurement.
    pub fn iid(basis: BasisSpec, h: Mat<f64>, sd: f64, y: Vec<f64>) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sd must be > 0, got {sd}")));
        }
        Self::check_shapes(basis, &h, y.len())?;
        Ok(Self {
            basis,
            h,
            noise: NoiseCovariance::Iid(sd),
            y,
        })
    }

    fn check_shapes(basis: BasisSpec, h: &Mat<f64>, m: usize) -> Result<()> {
        if h.ncols() != basis.len() || h.nrows() != m {
            return Err(Error::DimensionMismatch(format!(
                "H is {}x{}, expected {m}x{}",
                h.nrows(),
                h.ncols(),
                basis.len()
            )));
        }
        Ok(())
    }

    pub fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }

    /// `E` as a dense matrix.
    pub fn noise_cov(&self) -> Mat<f64> {
        match &self.noise {
            NoiseCovariance::Iid(sd) => {
                let m = self.y.len();
                Mat::from_fn(m, m, |i, j| if i == j { sd * sd } else { 0.0 })
            }
            NoiseCovariance::Dense(e) => e.clone(),
        }
    }

    /// `(C^{-1} H, C^{-1} y, log det E)` for the Cholesky factor `C` of `E`.
    pub(crate) fn whitened(&self) -> Result<(Mat<f64>, Vec<f64>, f64)> {
        match &self.noise {
            NoiseCovariance::Iid(sd) => {
                let inv = 1.0 / sd;
                let hw = &self.h * inv;
                let yw = self.y.iter().map(|v| v * inv).collect();
                Ok((hw, yw, 2.0 * self.y.len() as f64 * sd.ln()))
            }
            NoiseCovariance::Dense(e) => {
                let llt = cholesky(e.as_ref(), "noise covariance")?;
                let mut hw = self.h.clone();
                lower_solve_in_place(llt.L(), &mut hw);
                let mut yw = col_from_slice(&self.y);
                lower_solve_in_place(llt.L(), &mut yw);
                Ok((hw, col_to_vec(yw.as_ref()), llt_log_det(&llt)))
            }
        }
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn h(&self) -> &Mat<f64> {
        &self.h
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Same operator and noise, different observations.
    pub fn with_observations(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations, expected {}",
                y.len(),
                self.y.len()
            )));
        }
        Ok(Self { y, ..self.clone() })
    }
}

/// The measurement model premultiplied by the inverse Cholesky factor of `E`.
#[derive(Debug, Clone)]
pub struct WhitenedModel {
    hw: Mat<f64>,
    yw: Vec<f64>,
    log_det_noise: f64,
    gram: Mat<f64>,
    projected: Vec<f64>,
    compressed_h: Mat<f64>,
    compressed_y: Vec<f64>,
}

impl WhitenedModel {
    pub fn new(mm: &MeasurementModel) -> Result<Self> {
        let (hw, yw, log_det_noise) = mm.whitened()?;
        let gram = gram_lower(hw.as_ref());
        let projected = mat_vec(hw.transpose(), &yw);
        let (compressed_h, compressed_y) = compress(&hw, &yw);
        Ok(Self {
            log_det_noise,
            hw,
            yw,
            gram,
            projected,
            compressed_h,
            compressed_y,
        })
    }

    pub fn measurements(&self) -> usize {
        self.hw.nrows()
    }

    pub fn coefficients(&self) -> usize {
        self.hw.ncols()
    }

    pub fn log_det_noise(&self) -> f64 {
        self.log_det_noise
    }

    /// `Phi(u) = |E^{-1/2}(y - H u)|^2 / 2`.
    pub fn misfit(&self, u: &[f64]) -> f64 {
        let hu = mat_vec(self.hw.as_ref(), u);
        0.5 * self.yw.iter().zip(&hu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    /// `|y|_Q^2 / 2 + log det Q / 2` with `Q = H L^{-1} L^{-T} H^T + E`, factoring
    /// the `m x m` covariance.
    pub fn marginal_covariance_route(&self, l: &LayerMatrix) -> Result<f64> {
        let m = self.measurements();
        let ht = self.hw.transpose().to_owned();
        let bt = match l {
            LayerMatrix::Diagonal(d) => Mat::from_fn(ht.nrows(), m, |i, j| ht[(i, j)] / d[i]),
            LayerMatrix::Dense(l) => checked_lu(l.as_ref(), "layer operator")?.solve_transpose(&ht),
        };
        let mut q = gram_lower(bt.as_ref());
        for i in 0..m {
            q[(i, i)] += 1.0;
        }
        let llt = cholesky(q.as_ref(), "marginal covariance")?;
        let mut z = col_from_slice(&self.yw);
        lower_solve_in_place(llt.L(), &mut z);
        let quad = norm_sqr(&col_to_vec(z.as_ref()));
        Ok(0.5 * quad + 0.5 * (self.log_det_noise + llt_log_det(&llt)))
    }

    /// Same value through the `p x p` posterior precision `L^T L + H^T E^{-1} H`.
    pub fn marginal_precision_route(&self, l: &LayerMatrix) -> Result<f64> {
        // Lower triangles only; the strict upper parts stay zero.
        let (mut precision, log_det_prior) = match l {
            LayerMatrix::Diagonal(d) => {
                let p = d.len();
                let a = Mat::from_fn(p, p, |i, j| if i == j { d[i] * d[i] } else { 0.0 });
                (a, d.iter().map(|v| 2.0 * v.abs().ln()).sum::<f64>())
            }
            LayerMatrix::Dense(l) => {
                let mut prior = gram_lower(l.as_ref());
                let posterior = &prior + &self.gram;
                let log_det = cholesky_lower_in_place(prior.as_mut(), "prior precision")?;
                (posterior, log_det)
            }
        };
        if let LayerMatrix::Diagonal(_) = l {
            precision += &self.gram;
        }
        let log_det_posterior = cholesky_lower_in_place(precision.as_mut(), "posterior precision")?;
        let mut z = col_from_slice(&self.projected);
        lower_solve_in_place(precision.as_ref(), &mut z);
        let quad = norm_sqr(&self.yw) - norm_sqr(&col_to_vec(z.as_ref()));
        Ok(0.5 * quad + 0.5 * (self.log_det_noise + log_det_posterior - log_det_prior))
    }

    /// Draws `u_J | u_{J-1}, y` as the least-squares solution of the stacked,
    /// randomly perturbed system `[E^{-1/2} H; L] x = [E^{-1/2} y; 0] + v`.
    pub fn draw_last_layer(&self, l: &LayerMatrix, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let r = self.compressed_h.nrows();
        let p = self.coefficients();
        let l = l.to_dense();
        let stacked = Mat::from_fn(r + p, p, |i, j| {
            if i < r {
                self.compressed_h[(i, j)]
            } else {
                l[(i - r, j)]
            }
        });
        let mut noise: Vec<f64> = (0..r + p).map(|_| rng.sample(StandardNormal)).collect();
        for (v, c) in noise.iter_mut().zip(&self.compressed_y) {
            *v += c;
        }
        let rhs = col_from_slice(&noise);
        let x = stacked.qr().solve_lstsq(&rhs);
        let x = col_to_vec(x.as_ref());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                what: "stacked last-layer system".into(),
                condition: f64::INFINITY,
            });
        }
        Ok(x)
    }
}

/// Thin QR of `[H | y]`: the leading block of `R` and the top of its last column.
pub(crate) fn compress(h: &Mat<f64>, y: &[f64]) -> (Mat<f64>, Vec<f64>) {
    let (m, p) = (h.nrows(), h.ncols());
    if m <= p {
        return (h.clone(), y.to_vec());
    }
    let augmented = Mat::from_fn(m, p + 1, |i, j| if j < p { h[(i, j)] } else { y[i] });
    let r = qr_r_in_place(augmented);
    (
        Mat::from_fn(p, p, |i, j| r[(i, j)]),
        (0..p).map(|i| r[(i, p)]).collect(),
    )
}

/// How the marginal potential factors its Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalRoute {
    /// Covariance when `m <= p`, precision otherwise.
    #[default]
    Auto,
    Covariance,
    Precision,
}

/// Hierarchy plus whitened measurements: everything a chain needs.
#[derive(Debug, Clone)]
pub struct Posterior {
    hierarchy: Hierarchy,
    model: WhitenedModel,
    route: MarginalRoute,
}

impl Posterior {
    pub fn new(cfg: HierarchyConfig, mm: &MeasurementModel) -> Result<Self> {
        if cfg.basis() != mm.basis() {
            return Err(Error::DimensionMismatch("measurement basis differs from hierarchy".into()));
        }
        Ok(Self {
            hierarchy: Hierarchy::new(cfg)?,
            model: WhitenedModel::new(mm)?,
            route: MarginalRoute::Auto,
        })
    }

    pub fn with_route(mut self, route: MarginalRoute) -> Self {
        self.route = route;
        self
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn model(&self) -> &WhitenedModel {
        &self.model
    }

    /// Length of the sampled noise vector `wbar = (w_0, .., w_{J-1})`.
    pub fn free_dim(&self) -> usize {
        self.hierarchy.config().hyper_layers() * self.hierarchy.basis().len()
    }

    fn check_wbar(&self, wbar: &[f64]) -> Result<()> {
        if wbar.len() != self.free_dim() {
            return Err(Error::DimensionMismatch(format!(
                "wbar has {} coordinates, expected {}",
                wbar.len(),
                self.free_dim()
            )));
        }
        Ok(())
    }

    /// Operator of the last layer given the hyper-layer noise.
    pub fn last_layer_operator(&self, wbar: &[f64]) -> Result<LayerMatrix> {
        self.check_wbar(wbar)?;
        let fields = self.hierarchy.transform_coords(wbar)?;
        let j = self.hierarchy.config().hyper_layers();
        self.hierarchy.layer_matrix(j, fields.last().map(|u| u.as_slice()))
    }

    /// Marginal potential `Psi(wbar)`.
    pub fn psi(&self, wbar: &[f64]) -> Result<f64> {
        let l = self.last_layer_operator(wbar)?;
        let covariance = match self.route {
            MarginalRoute::Auto => self.model.measurements() <= self.model.coefficients(),
            MarginalRoute::Covariance => true,
            MarginalRoute::Precision => false,
        };
        if covariance {
            self.model.marginal_covariance_route(&l)
        } else {
            self.model.marginal_precision_route(&l)
        }
    }

    /// One draw of `u_J` given the hyper-layer noise.
    pub fn draw_last_layer(&self, wbar: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
        let l = self.last_layer_operator(wbar)?;
        self.model.draw_last_layer(&l, rng)
    }
}

/// `Phi(u_J, y)`.
pub fn potential_phi(u: &SpectralField, mm: &MeasurementModel) -> Result<f64> {
    if u.spec() != mm.basis() {
        return Err(Error::DimensionMismatch("field basis differs from measurement basis".into()));
    }
    Ok(WhitenedModel::new(mm)?.misfit(&u.to_real_coords()))
}

/// `Psi(wbar)` for a one-off configuration; requires `J >= 1`.
pub fn marginal_potential_psi(wbar: &WhiteNoiseStack, mm: &MeasurementModel, cfg: &HierarchyConfig) -> Result<f64> {
    if cfg.hyper_layers() == 0 {
        return Err(Error::InvalidParameter("marginal potential needs at least one hyper-layer".into()));
    }
    Posterior::new(cfg.clone(), mm)?.psi(&wbar.to_real_coords())
}

/// `u_J | u_{J-1}, y`; `u_prev = None` means the constant top conditioning.
pub fn sample_last_layer(
    u_prev: Option<&SpectralField>,
    mm: &MeasurementModel,
    cfg: &HierarchyConfig,
    rng: &mut impl Rng,
) -> Result<SpectralField> {
    let hierarchy = Hierarchy::new(cfg.clone())?;
    let coords = u_prev.map(|u| u.to_real_coords());
    let l = hierarchy.layer_matrix(cfg.hyper_layers(), coords.as_deref())?;
    let x = WhitenedModel::new(mm)?.draw_last_layer(&l, rng)?;
    SpectralField::from_real_coords(cfg.basis(), &x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcnParams {
    pub step: f64,
    pub target_low: f64,
    pub target_high: f64,
    pub adapt: bool,
    pub epoch: u64,
}

impl Default for PcnParams {
    fn default() -> Self {
        Self {
            step: 0.1,
            target_low: 0.25,
            target_high: 0.5,
            adapt: true,
            epoch: 100,
        }
    }
}

impl PcnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidParameter(format!("pCN step must be in (0, 1], got {}", self.step)));
        }
        if !(0.0 <= self.target_low && self.target_low <= self.target_high && self.target_high <= 1.0) {
            return Err(Error::InvalidParameter("acceptance window must satisfy 0 <= low <= high <= 1".into()));
        }
        if self.epoch == 0 {
            return Err(Error::InvalidParameter("adaptation epoch must be positive".into()));
        }
        Ok(())
    }
}

const ADAPT_FACTOR: f64 = 1.5;
const MIN_STEP: f64 = 1e-6;

/// Moves the step size toward the acceptance window after an epoch.
pub fn adapt_step_size(acceptance: f64, params: &PcnParams) -> PcnParams {
    let step = if acceptance > params.target_high {
        params.step * ADAPT_FACTOR
    } else if acceptance < params.target_low {
        params.step / ADAPT_FACTOR
    } else {
        params.step
    };
    PcnParams {
        step: step.clamp(MIN_STEP, 1.0),
        ..*params
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    wbar: Vec<f64>,
    potential: f64,
    accepted: u64,
    proposed: u64,
}

impl ChainState {
    pub fn new(wbar: Vec<f64>, potential: f64) -> Self {
        Self {
            wbar,
            potential,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn wbar(&self) -> &[f64] {
        &self.wbar
    }

    pub fn potential(&self) -> f64 {
        self.potential
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One pCN move targeting `exp(-potential)` relative to `N(0, I)`.
pub fn pcn_step<F>(state: &mut ChainState, potential: F, step: f64, rng: &mut impl Rng) -> Result<bool>
where
    F: FnOnce(&[f64]) -> Result<f64>,
{
    let keep = (1.0 - step * step).max(0.0).sqrt();
    let proposal: Vec<f64> = state
        .wbar
        .iter()
        .map(|w| keep * w + step * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let omega: f64 = rng.random();
    let candidate = potential(&proposal)?;
    state.proposed += 1;
    let accept = state.potential - candidate > omega.ln();
    if accept {
        state.wbar = proposal;
        state.potential = candidate;
        state.accepted += 1;
    }
    Ok(accept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwgSettings {
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub pcn: PcnParams,
}

impl MwgSettings {
    /// Burn-in of 10% and thinning 100.
    pub fn new(iterations: u64) -> Self {
        Self {
            iterations,
            burn_in: iterations / 10,
            thinning: 100,
            pcn: PcnParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pcn.validate()?;
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be positive".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::InvalidParameter("burn-in exceeds iterations".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// A retained draw: the hyper-layer noise and `u_J`, both in real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub iteration: u64,
    pub wbar: Vec<f64>,
    pub last: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainEvent<'a> {
    Sample(&'a PosteriorSample),
    Epoch {
        iteration: u64,
        acceptance: f64,
        step: f64,
        burn_in: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub state: ChainState,
    pub step: f64,
    /// Acceptance after burn-in; `None` when no move was proposed there.
    pub acceptance: Option<f64>,
    pub samples: u64,
    pub mean: Vec<f64>,
}

/// Metropolis-within-Gibbs: pCN on `wbar` under `Psi`, exact draws of `u_J`
/// at retained iterations. Starts from `wbar = 0`.
pub fn run_mwg<F>(post: &Posterior, settings: &MwgSettings, seed: u64, chain: u32, mut observe: F) -> Result<ChainReport>
where
    F: FnMut(ChainEvent<'_>) -> Result<()>,
{
    settings.validate()?;
    let mut proposals = stream(seed, Stream::Proposal, chain);
    let mut draws = stream(seed, Stream::LastLayer, chain);
    let free = post.free_dim();
    let wbar = vec![0.0; free];
    let mut state = ChainState::new(wbar.clone(), if free > 0 { post.psi(&wbar)? } else { 0.0 });
    let mut params = settings.pcn;
    let mut mean = vec![0.0; post.hierarchy().basis().len()];
    let mut samples = 0u64;
    let (mut epoch_accepted, mut epoch_proposed) = (0u64, 0u64);
    let (mut kept_accepted, mut kept_proposed) = (0u64, 0u64);

    for iteration in 1..=settings.iterations {
        let in_burn_in = iteration <= settings.burn_in;
        if free > 0 {
            let accepted = pcn_step(&mut state, |w| post.psi(w), params.step, &mut proposals)?;
            epoch_proposed += 1;
            epoch_accepted += accepted as u64;
            if !in_burn_in {
                kept_proposed += 1;
                kept_accepted += accepted as u64;
            }
            if iteration % params.epoch == 0 || iteration == settings.burn_in {
                let acceptance = epoch_accepted as f64 / epoch_proposed as f64;
                observe(ChainEvent::Epoch {
                    iteration,
                    acceptance,
                    step: params.step,
                    burn_in: in_burn_in,
                })?;
                if in_burn_in && params.adapt {
                    params = adapt_step_size(acceptance, &params);
                }
                epoch_accepted = 0;
                epoch_proposed = 0;
            }
        }
        if !in_burn_in && (iteration - settings.burn_in) % settings.thinning == 0 {
            let last = post.draw_last_layer(state.wbar(), &mut draws)?;
            samples += 1;
            let weight = 1.0 / samples as f64;
            for (m, v) in mean.iter_mut().zip(&last) {
                *m += (v - *m) * weight;
            }
            let sample = PosteriorSample {
                iteration,
                wbar: state.wbar().to_vec(),
                last,
            };
            observe(ChainEvent::Sample(&sample))?;
        }
    }

    Ok(ChainReport {
        state,
        step: params.step,
        acceptance: (kept_proposed > 0).then(|| kept_accepted as f64 / kept_proposed as f64),
        samples,
        mean,
    })
}

/// Runs a chain and keeps every retained sample in memory.
pub fn collect_mwg(
    post: &Posterior,
    settings: &MwgSettings,
    seed: u64,
    chain: u32,
) -> Result<(Vec<PosteriorSample>, ChainReport)> {
    let mut kept = Vec::with_capacity(settings.retained() as usize);
    let report = run_mwg(post, settings, seed, chain, |event| {
        if let ChainEvent::Sample(s) = event {
            kept.push(s.clone());
        }
        Ok(())
    })?;
    Ok((kept, report))
}
