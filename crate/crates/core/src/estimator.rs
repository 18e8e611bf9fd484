//! Single-band maximum-likelihood path estimation under known DMC-plus-noise
//! covariance.
//!
//! The observation is whitened with the band covariance, after which the ML
//! criterion reduces to ordinary least squares. Paths are found one at a time
//! (grid-search initialization, Levenberg-Marquardt refinement, ESNR check),
//! and the accepted set is polished jointly at the end.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::bounds::{crb_report, steering_with_derivatives, ParamKind, ParamVector, PathParam};
use crate::channel::{rx_response, tx_response, BandModel, CMatrix, CVector};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::scenario::{fold_angle, lin_to_db};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Delay grid points per delay bin `1/BW` (at least 2).
    pub delay_oversampling: usize,
    /// Angle grid step, rad.
    pub angle_step: f64,
    pub max_iter: usize,
    pub lambda0: f64,
    pub k_max: usize,
    pub eps_esnr_db: f64,
    /// Execution policy of the grid search over delays.
    pub grid_execution: Execution,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            delay_oversampling: 4,
            angle_step: 2f64.to_radians(),
            max_iter: 50,
            lambda0: 1e-3,
            k_max: 2,
            eps_esnr_db: 6.0,
            grid_execution: Execution::Sequential,
        }
    }
}

/// Channel of one band after `(L^{-1} ⊗ I)` whitening.
#[derive(Debug, Clone)]
pub struct WhitenedObservation {
    pub y: CVector,
    pub band: usize,
}

pub fn whiten(h: &CVector, band: &BandModel) -> WhitenedObservation {
    WhitenedObservation { y: band.cov.whiten(h), band: band.index }
}

/// Search grids and their observation-independent precomputations.
pub struct SpectrumGrid {
    pub delays: Vec<f64>,
    pub angles: Vec<f64>,
    /// `||(L^{-1} ⊗ I) a(tau)||^2` per delay grid point.
    norms: Vec<f64>,
    tx: Vec<CVector>,
    rx: Vec<CVector>,
    fft: Arc<dyn Fft<f64>>,
    n: usize,
    spatial: usize,
    l_r: usize,
}

impl std::fmt::Debug for SpectrumGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumGrid")
            .field("delays", &self.delays.len())
            .field("angles", &self.angles.len())
            .finish()
    }
}

impl SpectrumGrid {
    pub fn new(band: &BandModel, cfg: &EstimatorConfig) -> Result<Self> {
        if cfg.delay_oversampling < 2 {
            return Err(Error::Config("delay oversampling must be at least 2".into()));
        }
        if !(cfg.angle_step > 0.0) || cfg.angle_step > std::f64::consts::PI {
            return Err(Error::Config(format!("bad angle step {}", cfg.angle_step)));
        }
        let n = band.sb.n;
        let len = cfg.delay_oversampling * n;
        let delays: Vec<f64> = (0..len).map(|i| i as f64 / (len as f64 * band.sb.f_delta)).collect();
        // cell midpoints of (-pi/2, pi/2), spacing at most angle_step
        let cells = (std::f64::consts::PI / cfg.angle_step).ceil() as usize;
        let spacing = std::f64::consts::PI / cells as f64;
        let angles: Vec<f64> =
            (0..cells).map(|i| -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * spacing).collect();
        let fft = FftPlanner::new().plan_fft_inverse(len);

        // a^H Q a = sum_d q_d e^{j d w tau} with q_d the lag-d diagonal sum of Q.
        let q = band.cov.freq_inverse();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for r in 0..n {
            for c in 0..n {
                let d = r as i64 - c as i64;
                buf[d.rem_euclid(len as i64) as usize] += q[(r, c)];
            }
        }
        fft.process(&mut buf);
        let spatial = band.arrays.spatial_len();
        let norms = buf.iter().map(|v| v.re * spatial as f64).collect();

        let tx = angles.iter().map(|a| tx_response(*a, &band.sb, &band.arrays)).collect();
        let rx = angles.iter().map(|a| rx_response(*a, &band.sb, &band.arrays)).collect();
        Ok(Self { delays, angles, norms, tx, rx, fft, n, spatial, l_r: band.arrays.l_r })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumPeak {
    pub tau: f64,
    pub phi: f64,
    pub theta: f64,
    pub score: f64,
}

/// Grid maximum of `|ã^H y|^2 / ||ã||^2`. Ties resolve to the first grid
/// point in (delay, AoD, AoA) order.
pub fn spectrum_peak(y: &CVector, band: &BandModel, grid: &SpectrumGrid, exec: Execution) -> SpectrumPeak {
    let len = grid.delays.len();
    let u = band.cov.apply_inverse_adjoint_factor(y);
    // z[c][i] = a_F(tau_i)^H u_c
    let z: Vec<Vec<Complex64>> = (0..grid.spatial)
        .map(|c| {
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for nn in 0..grid.n {
                buf[nn] = u[nn * grid.spatial + c];
            }
            grid.fft.process(&mut buf);
            buf
        })
        .collect();
    let l_t = grid.spatial / grid.l_r;
    let best_per_delay = map_indexed(len, exec, |i| {
        let mut best = (0.0f64, 0usize, 0usize);
        let norm = grid.norms[i];
        let mut w = vec![Complex64::new(0.0, 0.0); grid.l_r];
        for (pi, at) in grid.tx.iter().enumerate() {
            for (lr, wv) in w.iter_mut().enumerate() {
                *wv = (0..l_t).map(|lt| at[lt].conj() * z[lt * grid.l_r + lr][i]).sum();
            }
            for (ti, ar) in grid.rx.iter().enumerate() {
                let v: Complex64 = w.iter().zip(ar.iter()).map(|(wv, a)| a.conj() * wv).sum();
                let s = v.norm_sqr() / norm;
                if s > best.0 {
                    best = (s, pi, ti);
                }
            }
        }
        best
    });
    let mut out = SpectrumPeak { tau: grid.delays[0], phi: grid.angles[0], theta: grid.angles[0], score: 0.0 };
    for (i, (s, pi, ti)) in best_per_delay.into_iter().enumerate() {
        if s > out.score {
            out = SpectrumPeak { tau: grid.delays[i], phi: grid.angles[pi], theta: grid.angles[ti], score: s };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmTraceEntry {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub paths: Vec<PathParam>,
    pub gains: Vec<Complex64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<LmTraceEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub lambda0: f64,
    pub rel_tol: f64,
    pub step_tol: f64,
    pub max_failures: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 50, lambda0: 1e-3, rel_tol: 1e-10, step_tol: 1e-12, max_failures: 10 }
    }
}

/// Whitened steering matrix, least-squares gains and residual at `paths`.
struct Fit {
    a: CMatrix,
    gains: CVector,
    residual: CVector,
    cost: f64,
}

fn ls_solve(a: &CMatrix, b: &CVector) -> CVector {
    let gram = a.adjoint() * a;
    let rhs = a.adjoint() * b;
    match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| CVector::zeros(rhs.len())),
    }
}

fn whitened_steering(paths: &[PathParam], band: &BandModel) -> CMatrix {
    let mut a = CMatrix::zeros(band.dim(), paths.len());
    for (k, p) in paths.iter().enumerate() {
        let [s, ..] = steering_with_derivatives(p, &band.sb, &band.arrays);
        a.set_column(k, &s);
    }
    band.cov.whiten_columns(&a)
}

fn fit(y: &CVector, paths: &[PathParam], band: &BandModel) -> Fit {
    let a = whitened_steering(paths, band);
    let gains = ls_solve(&a, y);
    let residual = y - &a * &gains;
    let cost = residual.norm_squared();
    Fit { a, gains, residual, cost }
}

fn normalize_path(p: PathParam, window: f64) -> PathParam {
    PathParam { tau: p.tau.rem_euclid(window), phi: fold_angle(p.phi), theta: fold_angle(p.theta) }
}

/// Variable-projection Levenberg-Marquardt over the geometric parameters of
/// `init`, with gains solved by linear least squares at every evaluation.
pub fn lm_refine(y: &CVector, band: &BandModel, init: &[PathParam], opts: &LmOptions) -> LmOutcome {
    let k = init.len();
    let window = band.sb.delay_window();
    let bw = band.sb.bandwidth();
    let mut paths: Vec<PathParam> = init.to_vec();
    let mut cur = fit(y, &paths, band);
    let mut lambda = opts.lambda0;
    let mut trace = vec![LmTraceEntry { iteration: 0, cost: cur.cost, lambda, step_norm: 0.0, accepted: true }];
    let mut failures = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        if cur.cost == 0.0 {
            converged = true;
            break;
        }
        // Kaufman Jacobian: J_i = -P_perp (d ã_k / d p_i) g_k
        let mut jac = CMatrix::zeros(band.dim(), 3 * k);
        let mut raw = CMatrix::zeros(band.dim(), 3 * k);
        for (kk, p) in paths.iter().enumerate() {
            let [_, dt, dp, dth] = steering_with_derivatives(p, &band.sb, &band.arrays);
            raw.set_column(kk, &dt);
            raw.set_column(k + kk, &dp);
            raw.set_column(2 * k + kk, &dth);
        }
        let raw = band.cov.whiten_columns(&raw);
        for c in 0..3 * k {
            let col = raw.column(c) * (-cur.gains[c % k]);
            let proj = &cur.a * ls_solve(&cur.a, &col.clone_owned());
            jac.set_column(c, &(col - proj));
        }
        let h = (jac.adjoint() * &jac).map(|v| v.re);
        let grad = (jac.adjoint() * &cur.residual).map(|v| v.re);
        let dmax = (0..3 * k).map(|i| h[(i, i)]).fold(0.0f64, f64::max);
        if dmax == 0.0 {
            converged = true;
            break;
        }
        loop {
            let mut damped = h.clone();
            for i in 0..3 * k {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12 * dmax);
            }
            let step = match damped.cholesky() {
                Some(c) => -c.solve(&grad),
                None => {
                    lambda *= 10.0;
                    failures += 1;
                    if failures >= opts.max_failures {
                        break 'outer;
                    }
                    continue;
                }
            };
            let step_norm = (0..k)
                .map(|kk| (step[kk] * bw).powi(2) + step[k + kk].powi(2) + step[2 * k + kk].powi(2))
                .sum::<f64>()
                .sqrt();
            if step_norm < opts.step_tol {
                trace.push(LmTraceEntry { iteration: iterations, cost: cur.cost, lambda, step_norm, accepted: false });
                converged = true;
                break 'outer;
            }
            let cand: Vec<PathParam> = (0..k)
                .map(|kk| {
                    normalize_path(
                        PathParam {
                            tau: paths[kk].tau + step[kk],
                            phi: paths[kk].phi + step[k + kk],
                            theta: paths[kk].theta + step[2 * k + kk],
                        },
                        window,
                    )
                })
                .collect();
            let next = fit(y, &cand, band);
            if next.cost < cur.cost {
                let rel = (cur.cost - next.cost) / cur.cost;
                trace.push(LmTraceEntry { iteration: iterations, cost: next.cost, lambda, step_norm, accepted: true });
                paths = cand;
                cur = next;
                lambda = (lambda / 10.0).max(1e-15);
                failures = 0;
                if rel < opts.rel_tol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            trace.push(LmTraceEntry { iteration: iterations, cost: next.cost, lambda, step_norm, accepted: false });
            lambda *= 10.0;
            failures += 1;
            if failures >= opts.max_failures {
                break 'outer;
            }
        }
    }
    LmOutcome {
        paths,
        gains: cur.gains.iter().copied().collect(),
        cost: cur.cost,
        iterations,
        converged,
        trace,
    }
}

pub fn write_lm_trace_csv<W: Write>(out: W, trace: &[LmTraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trace {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

/// One estimated path of one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEstimate {
    pub band: usize,
    pub tau_hat: f64,
    pub phi_hat: f64,
    pub theta_hat: f64,
    #[serde(skip)]
    pub g_hat: Complex64,
    pub esnr_hat_db: f64,
    pub crb_tau: f64,
    pub crb_phi: f64,
    pub crb_theta: f64,
    pub crb_gain: f64,
    pub converged: bool,
}

impl PathEstimate {
    pub fn geometry(&self) -> PathParam {
        PathParam { tau: self.tau_hat, phi: self.phi_hat, theta: self.theta_hat }
    }
}

/// Per-band estimator with its precomputed search grid.
pub struct BandEstimator<'a> {
    pub band: &'a BandModel,
    pub cfg: EstimatorConfig,
    pub grid: SpectrumGrid,
}

impl<'a> BandEstimator<'a> {
    pub fn new(band: &'a BandModel, cfg: EstimatorConfig) -> Result<Self> {
        if cfg.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        let grid = SpectrumGrid::new(band, &cfg)?;
        Ok(Self { band, cfg, grid })
    }

    fn lm_options(&self) -> LmOptions {
        LmOptions { max_iter: self.cfg.max_iter, lambda0: self.cfg.lambda0, ..LmOptions::default() }
    }

    /// Successive cancellation with ESNR stopping and a final joint polish.
    pub fn estimate(&self, h: &CVector) -> Result<Vec<PathEstimate>> {
        let y = whiten(h, self.band).y;
        let opts = self.lm_options();
        let mut accepted: Vec<PathParam> = Vec::new();
        let mut converged: Vec<bool> = Vec::new();
        while accepted.len() < self.cfg.k_max {
            let residual = if accepted.is_empty() { y.clone() } else { fit(&y, &accepted, self.band).residual };
            let peak = spectrum_peak(&residual, self.band, &self.grid, self.cfg.grid_execution);
            if peak.score <= 0.0 {
                break;
            }
            let init = PathParam { tau: peak.tau, phi: peak.phi, theta: peak.theta };
            let mut cand = lm_refine(&residual, self.band, &[init], &opts);
            let folded = self.broadside(cand.paths[0]);
            if folded != cand.paths[0] {
                cand = lm_refine(&residual, self.band, &[folded], &opts);
            }
            let mut trial = accepted.clone();
            trial.push(cand.paths[0]);
            let Ok(esnr_db) = self.esnr_db(&y, &trial).map(|e| e[trial.len() - 1]) else {
                break;
            };
            if !(esnr_db >= self.cfg.eps_esnr_db) {
                break;
            }
            accepted = trial;
            converged.push(cand.converged);
        }
        if accepted.is_empty() {
            return Ok(Vec::new());
        }
        let polished = lm_refine(&y, self.band, &accepted, &opts);
        // A polish that merges two paths leaves the bounds undefined; keep the
        // successive-cancellation estimate in that case.
        self.describe(&y, &polished.paths, polished.converged)
            .or_else(|_| self.describe(&y, &accepted, converged.iter().all(|c| *c)))
    }

    /// Replaces each angle by the grating-lobe alias closest to broadside.
    /// Aliases give identical responses inside one band, and a fit that drifts
    /// towards a lobe just past endfire would otherwise end on a singular FIM.
    fn broadside(&self, p: PathParam) -> PathParam {
        let lambda = self.band.sb.wavelength();
        let arr = &self.band.arrays;
        PathParam {
            tau: p.tau,
            phi: broadside_alias(p.phi, lambda / arr.d_t),
            theta: broadside_alias(p.theta, lambda / arr.d_r),
        }
    }

    fn esnr_db(&self, y: &CVector, paths: &[PathParam]) -> Result<Vec<f64>> {
        let f = fit(y, paths, self.band);
        let params = ParamVector::new(paths.to_vec(), CMatrix::from_column_slice(paths.len(), 1, f.gains.as_slice()));
        let rep = crb_report(&params, std::slice::from_ref(self.band))?;
        Ok((0..paths.len()).map(|k| rep.esnr_db(k, 0)).collect())
    }

    fn describe(&self, y: &CVector, paths: &[PathParam], converged: bool) -> Result<Vec<PathEstimate>> {
        let f = fit(y, paths, self.band);
        let params = ParamVector::new(paths.to_vec(), CMatrix::from_column_slice(paths.len(), 1, f.gains.as_slice()));
        let rep = crb_report(&params, std::slice::from_ref(self.band))?;
        Ok(paths
            .iter()
            .enumerate()
            .map(|(k, p)| PathEstimate {
                band: self.band.index,
                tau_hat: p.tau,
                phi_hat: p.phi,
                theta_hat: p.theta,
                g_hat: f.gains[k],
                esnr_hat_db: lin_to_db(rep.esnr[(k, 0)]),
                crb_tau: rep.bounds.of(ParamKind::Delay, k, 0),
                crb_phi: rep.bounds.of(ParamKind::Aod, k, 0),
                crb_theta: rep.bounds.of(ParamKind::Aoa, k, 0),
                crb_gain: rep.crb_gain_mag[(k, 0)],
                converged,
            })
            .collect())
    }
}

fn broadside_alias(angle: f64, shift: f64) -> f64 {
    let s = angle.sin();
    let q = (-s / shift).round();
    let t = s + q * shift;
    if q == 0.0 || t.abs() > 1.0 {
        angle
    } else {
        t.asin()
    }
}

/// Convenience wrapper building the grid on the fly.
pub fn estimate_band(h: &CVector, band: &BandModel, cfg: EstimatorConfig) -> Result<Vec<PathEstimate>> {
    BandEstimator::new(band, cfg)?.estimate(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dmc_freq_cov, synth_sc, ChannelModel};
    use crate::scenario::{ArrayConfig, PathGeometry, Scenario, SubBand};
    use approx::assert_relative_eq;

    fn white_band(n: usize, sigma2: f64) -> BandModel {
        let sb = SubBand { f_c: 8.75e9, f_delta: 1e6, n };
        let arrays = ArrayConfig { boresight_t: std::f64::consts::PI, boresight_r: 0.0, ..ArrayConfig::default() };
        BandModel::new(0, sb, arrays, dmc_freq_cov(&sb, 0.0, 1.0, 0.0, 0.0).unwrap(), sigma2).unwrap()
    }

    fn geometry(tau: f64, phi: f64, theta: f64) -> PathGeometry {
        PathGeometry { tau, phi, theta, tau_d: tau, tau_a: 0.0, is_los: true }
    }

    #[test]
    fn broadside_alias_moves_towards_boresight() {
        let shift = 0.691;
        assert_relative_eq!(broadside_alias(std::f64::consts::FRAC_PI_2, shift).sin(), 1.0 - shift, epsilon = 1e-12);
        assert_relative_eq!(broadside_alias(-0.9f64.asin(), shift).sin(), -0.9 + shift, epsilon = 1e-12);
        assert_eq!(broadside_alias(0.2, shift), 0.2);
        // wide spacing has no aliases to move to
        assert_eq!(broadside_alias(1.2, 3.0), 1.2);
    }

    #[test]
    fn whitening_without_dmc_scales_by_sigma() {
        let band = white_band(8, 4.0);
        let h = CVector::from_fn(band.dim(), |i, _| Complex64::new(i as f64, 1.0));
        let y = whiten(&h, &band).y;
        assert!((y - h / Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn on_grid_path_is_found_exactly() {
        let band = white_band(32, 1.0);
        let grid = SpectrumGrid::new(&band, &EstimatorConfig::default()).unwrap();
        let (tau, phi, theta) = (grid.delays[37], grid.angles[50], grid.angles[70]);
        let h = synth_sc(&[geometry(tau, phi, theta)], &[Complex64::new(3.0, -1.0)], &band.sb, &band.arrays);
        let y = whiten(&h, &band).y;
        for exec in [Execution::Sequential, Execution::Parallel] {
            let p = spectrum_peak(&y, &band, &grid, exec);
            assert_eq!(p.tau, tau);
            // 2-element arrays at this spacing cannot tell the mirrored lobe
            // apart, so only the sines are pinned
            assert_relative_eq!(p.score, 10.0 * band.dim() as f64, max_relative = 1e-9);
            assert!(p.phi.sin().is_finite() && p.theta.sin().is_finite());
        }
    }

    #[test]
    fn zero_observation_resolves_to_first_grid_point() {
        let band = white_band(8, 1.0);
        let grid = SpectrumGrid::new(&band, &EstimatorConfig::default()).unwrap();
        let p = spectrum_peak(&CVector::zeros(band.dim()), &band, &grid, Execution::Sequential);
        assert_eq!((p.tau, p.phi, p.theta, p.score), (grid.delays[0], grid.angles[0], grid.angles[0], 0.0));
    }

    #[test]
    fn grid_limits() {
        let band = white_band(16, 1.0);
        let cfg = EstimatorConfig::default();
        let g = SpectrumGrid::new(&band, &cfg).unwrap();
        assert_eq!(g.delays.len(), 64);
        assert!(g.angles.windows(2).all(|w| w[1] - w[0] <= cfg.angle_step + 1e-12));
        assert!(g.angles.iter().all(|a| a.abs() < std::f64::consts::FRAC_PI_2));
        let bad = EstimatorConfig { delay_oversampling: 1, ..cfg };
        assert!(matches!(SpectrumGrid::new(&band, &bad), Err(Error::Config(_))));
        let bad = EstimatorConfig { k_max: 0, ..cfg };
        assert!(matches!(BandEstimator::new(&band, bad), Err(Error::Config(_))));
    }

    #[test]
    fn lm_recovers_noiseless_path_from_offset_start() {
        let band = white_band(32, 1.0);
        let truth = PathParam { tau: 41.3e-9, phi: 0.21, theta: -0.33 };
        let h = synth_sc(&[geometry(truth.tau, truth.phi, truth.theta)], &[Complex64::new(0.5, 2.0)], &band.sb, &band.arrays);
        let y = whiten(&h, &band).y;
        let init = PathParam { tau: truth.tau + 0.1 * band.sb.delay_bin(), phi: truth.phi + 0.02, theta: truth.theta - 0.02 };
        let out = lm_refine(&y, &band, &[init], &LmOptions::default());
        assert!(out.converged);
        assert_relative_eq!(out.paths[0].tau, truth.tau, max_relative = 1e-8);
        assert_relative_eq!(out.paths[0].phi, truth.phi, epsilon = 1e-8);
        assert_relative_eq!(out.paths[0].theta, truth.theta, epsilon = 1e-8);
        // accepted steps never increase the cost
        let accepted: Vec<f64> = out.trace.iter().filter(|t| t.accepted).map(|t| t.cost).collect();
        assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
        let mut buf = Vec::new();
        write_lm_trace_csv(&mut buf, &out.trace).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,cost,lambda,step_norm,accepted"));
    }

    #[test]
    fn noiseless_two_path_channel_is_recovered() {
        let mut s = Scenario::table1();
        s.subbands.truncate(1);
        s.beta_tilde.truncate(1);
        let model = ChannelModel::new(&s).unwrap();
        let h = &model.specular()[0];
        let est = estimate_band(h, &model.bands[0], EstimatorConfig::default()).unwrap();
        assert_eq!(est.len(), 2);
        for (e, g) in est.iter().zip(&model.geometry) {
            assert_relative_eq!(e.tau_hat, g.tau, max_relative = 1e-6);
            assert_relative_eq!(e.theta_hat.sin(), g.theta.sin(), epsilon = 1e-6);
            assert!(e.esnr_hat_db > 6.0 && e.crb_tau > 0.0);
        }
    }

    #[test]
    fn model_order_is_capped() {
        let mut s = Scenario::table1();
        s.subbands.truncate(1);
        s.beta_tilde.truncate(1);
        let model = ChannelModel::new(&s).unwrap();
        let h = &model.specular()[0];
        let cfg = EstimatorConfig { k_max: 1, ..EstimatorConfig::default() };
        let est = estimate_band(h, &model.bands[0], cfg).unwrap();
        assert_eq!(est.len(), 1);
        // the strongest path comes out first, biased by the unmodeled second one
        assert!((est[0].tau_hat - model.geometry[0].tau).abs() < 0.1 * s.subbands[0].delay_bin());
    }
}
