//! Scene description and its translation into per-path geometry and gains.
//!
//! Positions live in a planar world frame (meters). Each ULA has a broadside
//! direction given as a world-frame heading in radians; departure and arrival
//! angles are measured from that broadside and folded into `[-pi/2, pi/2]`,
//! which keeps `sin` (and hence the array response) unchanged.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// World-frame heading of the vector pointing from `self` to `other`.
    pub fn heading_to(&self, other: &Position2D) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// One OFDM sub-band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubBand {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Subcarrier spacing, Hz.
    pub f_delta: f64,
    /// Number of subcarriers.
    pub n: usize,
}

impl SubBand {
    pub fn new(f_c: f64, f_delta: f64, n: usize) -> Result<Self> {
        let sb = Self { f_c, f_delta, n };
        sb.validate()?;
        Ok(sb)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::Parameter(format!("carrier must be positive, got {}", self.f_c)));
        }
        if !(self.f_delta > 0.0 && self.f_delta.is_finite()) {
            return Err(Error::Parameter(format!(
                "subcarrier spacing must be positive, got {}",
                self.f_delta
            )));
        }
        if self.n < 2 {
            return Err(Error::Parameter(format!("need at least 2 subcarriers, got {}", self.n)));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f_c
    }

    pub fn omega_delta(&self) -> f64 {
        2.0 * PI * self.f_delta
    }

    pub fn bandwidth(&self) -> f64 {
        self.n as f64 * self.f_delta
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Unambiguous delay window `1 / f_delta`.
    pub fn delay_window(&self) -> f64 {
        1.0 / self.f_delta
    }

    /// Delay resolution bin `1 / BW`.
    pub fn delay_bin(&self) -> f64 {
        1.0 / self.bandwidth()
    }
}

/// Transmit and receive ULA configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub l_t: usize,
    pub l_r: usize,
    /// Tx element spacing, m.
    pub d_t: f64,
    /// Rx element spacing, m.
    pub d_r: f64,
    /// World-frame heading of the Tx broadside, rad.
    #[serde(default = "default_boresight")]
    pub boresight_t: f64,
    /// World-frame heading of the Rx broadside, rad.
    #[serde(default = "default_boresight")]
    pub boresight_r: f64,
}

fn default_boresight() -> f64 {
    PI / 2.0
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { l_t: 2, l_r: 2, d_t: 0.02, d_r: 0.02, boresight_t: PI / 2.0, boresight_r: PI / 2.0 }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_t == 0 || self.l_r == 0 {
            return Err(Error::Parameter("arrays need at least one element".into()));
        }
        if !(self.d_t > 0.0 && self.d_r > 0.0) {
            return Err(Error::Parameter("element spacing must be positive".into()));
        }
        Ok(())
    }

    /// Number of spatial channels `L_T * L_R`.
    pub fn spatial_len(&self) -> usize {
        self.l_t * self.l_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub x: f64,
    pub y: f64,
    /// Radar cross section, m^2.
    #[serde(default = "default_rcs")]
    pub rcs: f64,
}

fn default_rcs() -> f64 {
    1.0
}

impl Scatterer {
    pub fn position(&self) -> Position2D {
        Position2D::new(self.x, self.y)
    }
}

/// Full description of one experiment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub tx: Position2D,
    pub rx: Position2D,
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
    pub subbands: Vec<SubBand>,
    #[serde(default)]
    pub arrays: ArrayConfig,
    /// Transmit power spectral density, dBm/Hz.
    pub p_t_dbm_hz: f64,
    /// Thermal noise spectral density, dBm/Hz.
    pub n0_dbm_hz: f64,
    /// Receiver noise figure, dB.
    pub nf_db: f64,
    /// DMC peak power relative to the LoS power, dB.
    pub alpha_db: f64,
    /// Normalized DMC decay rate per sub-band.
    pub beta_tilde: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    /// Table-I style two-band setup with the Tx at (8.99, 0), the Rx at the
    /// origin and one scatterer at (3, 1.8). The arrays face each other so
    /// the LoS arrives at broadside.
    pub fn table1() -> Self {
        Self {
            tx: Position2D::new(8.99, 0.0),
            rx: Position2D::new(0.0, 0.0),
            scatterers: vec![Scatterer { x: 3.0, y: 1.8, rcs: 1.0 }],
            subbands: vec![
                SubBand { f_c: 8.75e9, f_delta: 1.0e6, n: 128 },
                SubBand { f_c: 21.7e9, f_delta: 1.0e6, n: 128 },
            ],
            arrays: ArrayConfig { boresight_t: PI, boresight_r: 0.0, ..ArrayConfig::default() },
            p_t_dbm_hz: -30.0,
            n0_dbm_hz: -174.0,
            nf_db: 7.0,
            alpha_db: -30.0,
            beta_tilde: vec![0.5, 1.5],
            seed: 0,
        }
    }

    pub fn num_bands(&self) -> usize {
        self.subbands.len()
    }

    pub fn alpha_lin(&self) -> f64 {
        db_to_lin(self.alpha_db)
    }

    /// Per-subcarrier transmit power on band `m`, mW.
    pub fn tx_power_per_subcarrier(&self, m: usize) -> f64 {
        db_to_lin(self.p_t_dbm_hz) * self.subbands[m].f_delta
    }

    /// Per-subcarrier noise variance on band `m`, mW.
    pub fn noise_variance(&self, m: usize) -> f64 {
        db_to_lin(self.nf_db) * db_to_lin(self.n0_dbm_hz) * self.subbands[m].f_delta
    }

    pub fn validate(&self) -> Result<()> {
        if self.subbands.is_empty() {
            return Err(Error::Config("at least one sub-band is required".into()));
        }
        if self.subbands.len() != self.beta_tilde.len() {
            return Err(Error::Config(format!(
                "{} sub-bands but {} decay rates",
                self.subbands.len(),
                self.beta_tilde.len()
            )));
        }
        for sb in &self.subbands {
            sb.validate()?;
        }
        self.arrays.validate()?;
        for (i, s) in self.scatterers.iter().enumerate() {
            if !(s.rcs > 0.0) {
                return Err(Error::Config(format!("scatterer {i}: rcs must be positive")));
            }
        }
        for (m, b) in self.beta_tilde.iter().enumerate() {
            if !(*b > 0.0) {
                return Err(Error::Parameter(format!("beta_tilde[{m}] must be positive, got {b}")));
            }
        }
        let finite = [self.tx.x, self.tx.y, self.rx.x, self.rx.y, self.p_t_dbm_hz, self.n0_dbm_hz]
            .iter()
            .chain([self.nf_db].iter())
            .all(|v| v.is_finite());
        // -inf dB switches the DMC off
        let finite = finite && !self.alpha_db.is_nan() && self.alpha_db != f64::INFINITY;
        if !finite {
            return Err(Error::Config("non-finite scenario value".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(ConfigFile::from_toml_str(s)?.scenario)
    }
}

/// Knobs of the estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// ESNR acceptance threshold, dB.
    pub eps_esnr_db: f64,
    /// Minimum margin between best and second-best variant cost.
    pub eps_prom: f64,
    /// Maximum accepted matching cost.
    pub c_max: f64,
    /// Maximum number of paths per band.
    pub k_max: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { eps_esnr_db: 6.0, eps_prom: 0.2, c_max: 0.75, k_max: 2 }
    }
}

/// On-disk configuration: a `[scenario]` table and an optional
/// `[thresholds]` table. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Scenario,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ConfigFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Geometric parameters of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathGeometry {
    /// Total propagation delay, s.
    pub tau: f64,
    /// Departure angle w.r.t. the Tx broadside, rad.
    pub phi: f64,
    /// Arrival angle w.r.t. the Rx broadside, rad.
    pub theta: f64,
    /// Tx to scatterer delay, s.
    pub tau_d: f64,
    /// Scatterer to Rx delay, s.
    pub tau_a: f64,
    pub is_los: bool,
}

/// Complex path gains, `K x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains {
    pub g: DMatrix<Complex64>,
}

impl PathGains {
    pub fn num_paths(&self) -> usize {
        self.g.nrows()
    }

    pub fn num_bands(&self) -> usize {
        self.g.ncols()
    }

    /// Gains of band `m` as a vector over paths.
    pub fn band(&self, m: usize) -> Vec<Complex64> {
        self.g.column(m).iter().copied().collect()
    }
}

/// Folds an angle relative to broadside into `[-pi/2, pi/2]` preserving `sin`.
pub fn fold_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w > PI / 2.0 {
        w = PI - w;
    } else if w < -PI / 2.0 {
        w = -PI - w;
    }
    w
}

const COINCIDENCE_TOL: f64 = 1e-9;

pub fn derive_geometry(scenario: &Scenario) -> Result<Vec<PathGeometry>> {
    let (tx, rx) = (scenario.tx, scenario.rx);
    let direct = tx.distance(&rx);
    if direct <= COINCIDENCE_TOL {
        return Err(Error::DegenerateGeometry("tx and rx coincide".into()));
    }
    let arrays = &scenario.arrays;
    let mut out = Vec::with_capacity(1 + scenario.scatterers.len());
    let tau1 = direct / SPEED_OF_LIGHT;
    out.push(PathGeometry {
        tau: tau1,
        phi: fold_angle(tx.heading_to(&rx) - arrays.boresight_t),
        theta: fold_angle(rx.heading_to(&tx) - arrays.boresight_r),
        tau_d: tau1,
        tau_a: 0.0,
        is_los: true,
    });
    for (i, s) in scenario.scatterers.iter().enumerate() {
        let p = s.position();
        let (d1, d2) = (tx.distance(&p), p.distance(&rx));
        if d1 <= COINCIDENCE_TOL || d2 <= COINCIDENCE_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "scatterer {i} coincides with an array"
            )));
        }
        let (tau_d, tau_a) = (d1 / SPEED_OF_LIGHT, d2 / SPEED_OF_LIGHT);
        out.push(PathGeometry {
            tau: tau_d + tau_a,
            phi: fold_angle(tx.heading_to(&p) - arrays.boresight_t),
            theta: fold_angle(rx.heading_to(&p) - arrays.boresight_r),
            tau_d,
            tau_a,
            is_los: false,
        });
    }
    Ok(out)
}

/// Friis gain for the LoS path and bistatic radar gain for scatterer paths,
/// unit antenna gains, phase `-omega_m * tau_k`.
pub fn compute_path_gains(geometry: &[PathGeometry], scenario: &Scenario) -> Result<PathGains> {
    let k = geometry.len();
    let m_count = scenario.num_bands();
    let mut g = DMatrix::zeros(k, m_count);
    let rcs_of = |idx: usize| scenario.scatterers.get(idx.wrapping_sub(1)).map_or(1.0, |s| s.rcs);
    for (m, sb) in scenario.subbands.iter().enumerate() {
        let amp_tx = scenario.tx_power_per_subcarrier(m).sqrt();
        let lambda = sb.wavelength();
        for (kk, path) in geometry.iter().enumerate() {
            let amp = if path.is_los {
                if path.tau <= 0.0 {
                    return Err(Error::DegenerateGeometry("zero LoS delay".into()));
                }
                amp_tx * lambda / (4.0 * PI * SPEED_OF_LIGHT * path.tau)
            } else {
                if path.tau_d <= 0.0 || path.tau_a <= 0.0 {
                    return Err(Error::DegenerateGeometry(format!("zero leg delay on path {kk}")));
                }
                let rcs = rcs_of(kk);
                amp_tx * (rcs / (4.0 * PI)).sqrt() * lambda
                    / (4.0 * PI * (SPEED_OF_LIGHT * path.tau_d) * (SPEED_OF_LIGHT * path.tau_a))
            };
            g[(kk, m)] = Complex64::from_polar(amp, -sb.omega() * path.tau);
        }
    }
    Ok(PathGains { g })
}
