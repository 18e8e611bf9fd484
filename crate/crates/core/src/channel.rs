//! Channel synthesis: steering vectors, specular part, DMC covariance, noise
//! and sampled realizations `h = s + d + w`.
//!
//! Vectorized channels use a single index convention everywhere:
//! `idx = (n * L_T + l_t) * L_R + l_r`, i.e. frequency-major, then Tx
//! element, then Rx element, matching `a_F ⊗ a_T ⊗ a_R`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scenario::{
    compute_path_gains, derive_geometry, ArrayConfig, PathGains, PathGeometry, Scenario, SubBand,
    SPEED_OF_LIGHT,
};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub(crate) const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteeringDomain {
    Frequency,
    TxSpace,
    RxSpace,
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub values: CVector,
    pub domain: SteeringDomain,
}

/// `exp(-j * step * l)` for `l = 0..len`.
fn phase_ramp(len: usize, step: f64) -> CVector {
    CVector::from_iterator(len, (0..len).map(|l| Complex64::from_polar(1.0, -step * l as f64)))
}

pub(crate) fn freq_response(tau: f64, sb: &SubBand) -> CVector {
    phase_ramp(sb.n, sb.omega_delta() * tau)
}

pub(crate) fn tx_response(phi: f64, sb: &SubBand, arrays: &ArrayConfig) -> CVector {
    phase_ramp(arrays.l_t, sb.omega() * arrays.d_t / SPEED_OF_LIGHT * phi.sin())
}

pub(crate) fn rx_response(theta: f64, sb: &SubBand, arrays: &ArrayConfig) -> CVector {
    phase_ramp(arrays.l_r, sb.omega() * arrays.d_r / SPEED_OF_LIGHT * theta.sin())
}

/// Kronecker product of three vectors in `a ⊗ b ⊗ c` order.
pub fn kron3(a: &CVector, b: &CVector, c: &CVector) -> CVector {
    let (lb, lc) = (b.len(), c.len());
    let mut out = CVector::zeros(a.len() * lb * lc);
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            let ab = ai * bj;
            let base = (i * lb + j) * lc;
            for (l, cl) in c.iter().enumerate() {
                out[base + l] = ab * cl;
            }
        }
    }
    out
}

pub fn steering_freq(tau: f64, sb: &SubBand) -> SteeringVector {
    SteeringVector { values: freq_response(tau, sb), domain: SteeringDomain::Frequency }
}

pub fn steering_tx(phi: f64, sb: &SubBand, arrays: &ArrayConfig) -> SteeringVector {
    SteeringVector { values: tx_response(phi, sb, arrays), domain: SteeringDomain::TxSpace }
}

pub fn steering_rx(theta: f64, sb: &SubBand, arrays: &ArrayConfig) -> SteeringVector {
    SteeringVector { values: rx_response(theta, sb, arrays), domain: SteeringDomain::RxSpace }
}

pub fn steering_total(
    tau: f64,
    phi: f64,
    theta: f64,
    sb: &SubBand,
    arrays: &ArrayConfig,
) -> SteeringVector {
    SteeringVector {
        values: kron3(
            &freq_response(tau, sb),
            &tx_response(phi, sb, arrays),
            &rx_response(theta, sb, arrays),
        ),
        domain: SteeringDomain::Total,
    }
}

/// Specular part of one band: `sum_k g_k a(tau_k, phi_k, theta_k)`.
pub fn synth_sc(
    geometry: &[PathGeometry],
    gains: &[Complex64],
    sb: &SubBand,
    arrays: &ArrayConfig,
) -> CVector {
    let mut s = CVector::zeros(sb.n * arrays.spatial_len());
    for (p, g) in geometry.iter().zip(gains) {
        if *g == Complex64::new(0.0, 0.0) {
            continue;
        }
        s.axpy(*g, &steering_total(p.tau, p.phi, p.theta, sb, arrays).values, Complex64::new(1.0, 0.0));
    }
    s
}

/// Converts the normalized decay rate into an absolute one (1/s).
pub fn beta_from_tilde(beta_tilde: f64, sb: &SubBand) -> f64 {
    beta_tilde * (sb.n as f64 - 1.0) * sb.omega_delta()
}

/// Exponential DMC power-delay profile with half-power onset at `tau1`.
pub fn dmc_pdp(tau: f64, tau1: f64, alpha_lin: f64, beta: f64, g1_abs2: f64) -> f64 {
    let peak = alpha_lin * g1_abs2;
    if tau < tau1 {
        0.0
    } else if tau == tau1 {
        peak / 2.0
    } else {
        peak * (-beta * (tau - tau1)).exp()
    }
}

/// Frequency-domain DMC covariance of one band.
#[derive(Debug, Clone, PartialEq)]
pub struct DmcCovariance {
    /// First column of the Toeplitz matrix.
    pub r_first_col: CVector,
    pub r: CMatrix,
}

/// Hermitian Toeplitz matrix from its first column.
pub fn hermitian_toeplitz(col: &CVector) -> CMatrix {
    let n = col.len();
    CMatrix::from_fn(n, n, |i, j| if i >= j { col[i - j] } else { col[j - i].conj() })
}

pub fn dmc_freq_cov(
    sb: &SubBand,
    alpha_lin: f64,
    beta_tilde: f64,
    g1_abs2: f64,
    tau1: f64,
) -> Result<DmcCovariance> {
    if !(beta_tilde > 0.0) {
        return Err(Error::Parameter(format!("beta_tilde must be positive, got {beta_tilde}")));
    }
    if !(alpha_lin >= 0.0) {
        return Err(Error::Parameter(format!("alpha must be non-negative, got {alpha_lin}")));
    }
    let n = sb.n;
    let scale = alpha_lin * g1_abs2 / n as f64;
    let col = CVector::from_iterator(
        n,
        (0..n).map(|i| {
            let num = Complex64::from_polar(scale, -(i as f64) * sb.omega_delta() * tau1);
            num / Complex64::new(beta_tilde, 2.0 * std::f64::consts::PI * i as f64 / n as f64)
        }),
    );
    let r = hermitian_toeplitz(&col);
    Ok(DmcCovariance { r_first_col: col, r })
}

impl DmcCovariance {
    /// A factor `S` with `S S^H = R`, from the Hermitian eigendecomposition
    /// with round-off negative eigenvalues clipped to zero. `R` is typically
    /// numerically rank deficient, where a Cholesky factor is unusable for
    /// sampling. Returns `None` for an all-zero covariance.
    pub fn sqrt_factor(&self) -> Result<Option<CMatrix>> {
        let n = self.r.nrows();
        let trace: f64 = (0..n).map(|i| self.r[(i, i)].re).sum();
        if trace == 0.0 {
            return Ok(None);
        }
        if !trace.is_finite() {
            return Err(Error::Covariance("non-finite DMC covariance".into()));
        }
        let eig = self.r.clone().symmetric_eigen();
        let floor = -1e-9 * trace;
        if let Some(bad) = eig.eigenvalues.iter().find(|&&e| e < floor) {
            return Err(Error::Covariance(format!("DMC covariance is indefinite (eigenvalue {bad:e})")));
        }
        let mut factor = eig.eigenvectors;
        for (mut col, &e) in factor.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= Complex64::new(e.max(0.0).sqrt(), 0.0);
        }
        Ok(Some(factor))
    }
}

/// White noise level per sub-band.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub sigma2: Vec<f64>,
}

impl NoiseModel {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self { sigma2: (0..scenario.num_bands()).map(|m| scenario.noise_variance(m)).collect() }
    }
}

/// `M_m = (R_F + sigma^2 I) ⊗ I_{L_T L_R}`, stored by its frequency factor
/// and that factor's Cholesky decomposition.
#[derive(Debug, Clone)]
pub struct BandCovariance {
    freq: CMatrix,
    chol: CMatrix,
    spatial: usize,
}

pub fn full_band_cov(dmc: &DmcCovariance, sigma2: f64, arrays: &ArrayConfig) -> Result<BandCovariance> {
    let n = dmc.r.nrows();
    let mut freq = dmc.r.clone();
    for i in 0..n {
        freq[(i, i)] += sigma2;
    }
    let chol = freq
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Covariance("band covariance is not positive definite".into()))?
        .l();
    Ok(BandCovariance { freq, chol, spatial: arrays.spatial_len() })
}

/// Views a stacked band vector as an `N x (L_T L_R)` matrix.
fn as_freq_matrix(v: &CVector, spatial: usize) -> CMatrix {
    CMatrix::from_row_slice(v.len() / spatial, spatial, v.as_slice())
}

fn flatten_freq_matrix(m: &CMatrix) -> CVector {
    CVector::from_iterator(m.len(), m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()))
}

impl BandCovariance {
    /// `R_F + sigma^2 I`.
    pub fn freq_factor(&self) -> &CMatrix {
        &self.freq
    }

    /// Lower Cholesky factor `L` of `R_F + sigma^2 I`.
    pub fn cholesky_factor(&self) -> &CMatrix {
        &self.chol
    }

    pub fn spatial_len(&self) -> usize {
        self.spatial
    }

    pub fn dim(&self) -> usize {
        self.freq.nrows() * self.spatial
    }

    /// `(L^{-1} ⊗ I) h`.
    pub fn whiten(&self, h: &CVector) -> CVector {
        let x = as_freq_matrix(h, self.spatial);
        let y = self.chol.solve_lower_triangular(&x).expect("Cholesky factor has a positive diagonal");
        flatten_freq_matrix(&y)
    }

    /// `(L ⊗ I) y`, the inverse of [`whiten`](Self::whiten).
    pub fn unwhiten(&self, y: &CVector) -> CVector {
        flatten_freq_matrix(&(&self.chol * as_freq_matrix(y, self.spatial)))
    }

    /// Whitens every column of a stacked-band matrix.
    pub fn whiten_columns(&self, d: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(d.nrows(), d.ncols());
        for (j, col) in d.column_iter().enumerate() {
            out.set_column(j, &self.whiten(&col.into_owned()));
        }
        out
    }

    /// `(L^{-H} ⊗ I) y`.
    pub fn apply_inverse_adjoint_factor(&self, y: &CVector) -> CVector {
        let x = as_freq_matrix(y, self.spatial);
        let u = self
            .chol
            .ad_solve_lower_triangular(&x)
            .expect("Cholesky factor has a positive diagonal");
        flatten_freq_matrix(&u)
    }

    /// `(R_F + sigma^2 I)^{-1}`.
    pub fn freq_inverse(&self) -> CMatrix {
        let n = self.freq.nrows();
        let linv = self
            .chol
            .solve_lower_triangular(&CMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        linv.adjoint() * linv
    }

    /// Explicit `(R_F + sigma^2 I) ⊗ I`; only for small diagnostics.
    pub fn dense(&self) -> CMatrix {
        let n = self.freq.nrows();
        let s = self.spatial;
        CMatrix::from_fn(n * s, n * s, |i, j| {
            if i % s == j % s {
                self.freq[(i / s, j / s)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Everything needed to synthesize and process one sub-band.
#[derive(Debug, Clone)]
pub struct BandModel {
    pub index: usize,
    pub sb: SubBand,
    pub arrays: ArrayConfig,
    pub dmc: DmcCovariance,
    pub sigma2: f64,
    pub cov: BandCovariance,
    dmc_sqrt: Option<CMatrix>,
}

impl BandModel {
    pub fn new(
        index: usize,
        sb: SubBand,
        arrays: ArrayConfig,
        dmc: DmcCovariance,
        sigma2: f64,
    ) -> Result<Self> {
        let cov = full_band_cov(&dmc, sigma2, &arrays)?;
        let dmc_sqrt = dmc.sqrt_factor()?;
        Ok(Self { index, sb, arrays, dmc, sigma2, cov, dmc_sqrt })
    }

    pub fn dim(&self) -> usize {
        self.sb.n * self.arrays.spatial_len()
    }

    /// Draws `d_m ~ CN(0, R_m)`.
    pub fn sample_dmc<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        match &self.dmc_sqrt {
            None => CVector::zeros(self.dim()),
            Some(l) => {
                let z = standard_complex_normal(rng, self.dim());
                flatten_freq_matrix(&(l * as_freq_matrix(&z, self.arrays.spatial_len())))
            }
        }
    }

    /// Draws `w_m ~ CN(0, sigma^2 I)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        standard_complex_normal(rng, self.dim()) * Complex64::new(self.sigma2.sqrt(), 0.0)
    }
}

/// `CN(0, 1)` entries: each real and imaginary part has variance 1/2.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_iterator(
        len,
        (0..len).map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        }),
    )
}

/// Geometry, gains and per-band covariance models for a scenario.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub geometry: Vec<PathGeometry>,
    pub gains: PathGains,
    pub bands: Vec<BandModel>,
}

impl ChannelModel {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let geometry = derive_geometry(scenario)?;
        let gains = compute_path_gains(&geometry, scenario)?;
        let noise = NoiseModel::from_scenario(scenario);
        let alpha = scenario.alpha_lin();
        let tau1 = geometry[0].tau;
        let bands = scenario
            .subbands
            .iter()
            .enumerate()
            .map(|(m, sb)| {
                let g1 = gains.g[(0, m)].norm_sqr();
                let dmc = dmc_freq_cov(sb, alpha, scenario.beta_tilde[m], g1, tau1)?;
                BandModel::new(m, *sb, scenario.arrays, dmc, noise.sigma2[m])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { geometry, gains, bands })
    }

    pub fn specular(&self) -> Vec<CVector> {
        self.bands
            .iter()
            .map(|b| synth_sc(&self.geometry, &self.gains.band(b.index), &b.sb, &b.arrays))
            .collect()
    }

    pub fn sample(&self, seed: u64) -> ChannelRealization {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, false)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, keep_components: bool) -> ChannelRealization {
        sample_channel_with(&self.specular(), &self.bands, rng, keep_components)
    }
}

/// One multi-band realization. Components are kept only on request.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: Vec<CVector>,
    pub s: Vec<CVector>,
    pub d: Option<Vec<CVector>>,
    pub w: Option<Vec<CVector>>,
}

/// Reproducible realization from an explicit seed.
pub fn sample_channel(s: &[CVector], bands: &[BandModel], seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_channel_with(s, bands, &mut rng, true)
}

pub fn sample_channel_with<R: Rng + ?Sized>(
    s: &[CVector],
    bands: &[BandModel],
    rng: &mut R,
    keep_components: bool,
) -> ChannelRealization {
    let mut h = Vec::with_capacity(bands.len());
    let mut ds = Vec::new();
    let mut ws = Vec::new();
    for (sm, band) in s.iter().zip(bands) {
        let d = band.sample_dmc(rng);
        let w = band.sample_noise(rng);
        h.push(sm + &d + &w);
        if keep_components {
            ds.push(d);
            ws.push(w);
        }
    }
    ChannelRealization {
        h,
        s: s.to_vec(),
        d: keep_components.then_some(ds),
        w: keep_components.then_some(ws),
    }
}

/// Dumps a realization as CSV with columns `band,n,l_t,l_r,re,im`.
pub fn write_realization_csv<W: Write>(
    out: W,
    realization: &ChannelRealization,
    arrays: &ArrayConfig,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["band", "n", "l_t", "l_r", "re", "im"])?;
    let s = arrays.spatial_len();
    for (m, hm) in realization.h.iter().enumerate() {
        for (idx, v) in hm.iter().enumerate() {
            let n = idx / s;
            let lt = (idx % s) / arrays.l_r;
            let lr = idx % arrays.l_r;
            w.write_record([
                m.to_string(),
                n.to_string(),
                lt.to_string(),
                lr.to_string(),
                format!("{:e}", v.re),
                format!("{:e}", v.im),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
