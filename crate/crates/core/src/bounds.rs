//! Fisher information, Cramér-Rao bounds and estimation SNR (ESNR) for the
//! specular mean observed in DMC-plus-noise.
//!
//! Parameter ordering (single source of truth, see [`ParamLayout`]):
//! `[tau_1..tau_K, phi_1..phi_K, theta_1..theta_K, Re g (band-major), Im g (band-major)]`
//! where band-major means `g_{1,1}, .., g_{K,1}, g_{1,2}, ..`.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{freq_response, kron3, rx_response, tx_response, BandModel, CMatrix, CVector, J};
use crate::error::{Error, Result};
use crate::scenario::{lin_to_db, ArrayConfig, PathGeometry, SubBand, SPEED_OF_LIGHT};

/// Condition number (of the equilibrated FIM) above which bounds are refused.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Delay,
    Aod,
    Aoa,
    GainRe,
    GainIm,
}

impl ParamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamKind::Delay => "delay",
            ParamKind::Aod => "aod",
            ParamKind::Aoa => "aoa",
            ParamKind::GainRe => "gain_re",
            ParamKind::GainIm => "gain_im",
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self, ParamKind::Delay | ParamKind::Aod | ParamKind::Aoa)
    }
}

/// Flat indexing of `K` paths observed over `M` bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub paths: usize,
    pub bands: usize,
}

impl ParamLayout {
    pub fn new(paths: usize, bands: usize) -> Self {
        Self { paths, bands }
    }

    pub fn dim(&self) -> usize {
        3 * self.paths + 2 * self.paths * self.bands
    }

    /// Flat index of `(kind, path, band)`; `band` is ignored for geometric kinds.
    pub fn index(&self, kind: ParamKind, path: usize, band: usize) -> usize {
        let k = self.paths;
        match kind {
            ParamKind::Delay => path,
            ParamKind::Aod => k + path,
            ParamKind::Aoa => 2 * k + path,
            ParamKind::GainRe => 3 * k + band * k + path,
            ParamKind::GainIm => 3 * k + k * self.bands + band * k + path,
        }
    }

    /// Inverse of [`index`](Self::index).
    pub fn locate(&self, idx: usize) -> (ParamKind, usize, Option<usize>) {
        let k = self.paths;
        let km = k * self.bands;
        match idx {
            i if i < k => (ParamKind::Delay, i, None),
            i if i < 2 * k => (ParamKind::Aod, i - k, None),
            i if i < 3 * k => (ParamKind::Aoa, i - 2 * k, None),
            i if i < 3 * k + km => (ParamKind::GainRe, (i - 3 * k) % k, Some((i - 3 * k) / k)),
            i => (ParamKind::GainIm, (i - 3 * k - km) % k, Some((i - 3 * k - km) / k)),
        }
    }

    pub fn name(&self, idx: usize) -> String {
        match self.locate(idx) {
            (kind, k, None) => format!("{}[{k}]", kind.as_str()),
            (kind, k, Some(m)) => format!("{}[{k},{m}]", kind.as_str()),
        }
    }
}

/// Geometric parameters of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathParam {
    pub tau: f64,
    pub phi: f64,
    pub theta: f64,
}

impl From<&PathGeometry> for PathParam {
    fn from(p: &PathGeometry) -> Self {
        Self { tau: p.tau, phi: p.phi, theta: p.theta }
    }
}

/// Full parameter set: shared geometry plus free per-band complex gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub paths: Vec<PathParam>,
    /// `K x M` gains; column `i` belongs to the `i`-th band handed to [`fim`].
    pub gains: CMatrix,
}

impl ParamVector {
    pub fn new(paths: Vec<PathParam>, gains: CMatrix) -> Self {
        assert_eq!(paths.len(), gains.nrows(), "one gain row per path");
        Self { paths, gains }
    }

    pub fn from_geometry(geometry: &[PathGeometry], gains: &CMatrix) -> Self {
        Self::new(geometry.iter().map(PathParam::from).collect(), gains.clone())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.paths.len(), self.gains.ncols())
    }

    /// Restriction to one band's gain column.
    pub fn single_band(&self, m: usize) -> ParamVector {
        ParamVector::new(self.paths.clone(), self.gains.columns(m, 1).into_owned())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let lay = self.layout();
        let mut v = vec![0.0; lay.dim()];
        for (k, p) in self.paths.iter().enumerate() {
            v[lay.index(ParamKind::Delay, k, 0)] = p.tau;
            v[lay.index(ParamKind::Aod, k, 0)] = p.phi;
            v[lay.index(ParamKind::Aoa, k, 0)] = p.theta;
            for m in 0..lay.bands {
                v[lay.index(ParamKind::GainRe, k, m)] = self.gains[(k, m)].re;
                v[lay.index(ParamKind::GainIm, k, m)] = self.gains[(k, m)].im;
            }
        }
        v
    }

    pub fn from_flat(layout: ParamLayout, v: &[f64]) -> ParamVector {
        let paths = (0..layout.paths)
            .map(|k| PathParam {
                tau: v[layout.index(ParamKind::Delay, k, 0)],
                phi: v[layout.index(ParamKind::Aod, k, 0)],
                theta: v[layout.index(ParamKind::Aoa, k, 0)],
            })
            .collect();
        let gains = CMatrix::from_fn(layout.paths, layout.bands, |k, m| {
            Complex64::new(v[layout.index(ParamKind::GainRe, k, m)], v[layout.index(ParamKind::GainIm, k, m)])
        });
        ParamVector::new(paths, gains)
    }
}

/// Mean of one band, `s_m(params)`, for parameter column `band_col`.
pub fn mean_band(params: &ParamVector, band_col: usize, sb: &SubBand, arrays: &ArrayConfig) -> CVector {
    let mut s = CVector::zeros(sb.n * arrays.spatial_len());
    for (k, p) in params.paths.iter().enumerate() {
        let a = kron3(&freq_response(p.tau, sb), &tx_response(p.phi, sb, arrays), &rx_response(p.theta, sb, arrays));
        s.axpy(params.gains[(k, band_col)], &a, Complex64::new(1.0, 0.0));
    }
    s
}

/// Derivatives of the three steering factors of one path.
struct SteeringParts {
    f: CVector,
    t: CVector,
    r: CVector,
    df: CVector,
    dt: CVector,
    dr: CVector,
}

fn steering_parts(p: &PathParam, sb: &SubBand, arrays: &ArrayConfig) -> SteeringParts {
    let f = freq_response(p.tau, sb);
    let t = tx_response(p.phi, sb, arrays);
    let r = rx_response(p.theta, sb, arrays);
    let wd = sb.omega_delta();
    let df = CVector::from_iterator(f.len(), f.iter().enumerate().map(|(n, v)| v * (-J * (n as f64 * wd))));
    let ct = sb.omega() * arrays.d_t / SPEED_OF_LIGHT * p.phi.cos();
    let dt = CVector::from_iterator(t.len(), t.iter().enumerate().map(|(l, v)| v * (-J * (ct * l as f64))));
    let cr = sb.omega() * arrays.d_r / SPEED_OF_LIGHT * p.theta.cos();
    let dr = CVector::from_iterator(r.len(), r.iter().enumerate().map(|(l, v)| v * (-J * (cr * l as f64))));
    SteeringParts { f, t, r, df, dt, dr }
}

/// Columns of the band-`m` Jacobian that can be nonzero: `3K` geometric
/// columns followed by `K` Re-gain and `K` Im-gain columns of this band.
fn jacobian_band_compact(params: &ParamVector, band_col: usize, sb: &SubBand, arrays: &ArrayConfig) -> CMatrix {
    let k = params.paths.len();
    let rows = sb.n * arrays.spatial_len();
    let mut d = CMatrix::zeros(rows, 5 * k);
    for (kk, p) in params.paths.iter().enumerate() {
        let g = params.gains[(kk, band_col)];
        let [a, d_tau, d_phi, d_theta] = steering_with_derivatives(p, sb, arrays);
        d.set_column(kk, &(d_tau * g));
        d.set_column(k + kk, &(d_phi * g));
        d.set_column(2 * k + kk, &(d_theta * g));
        d.set_column(4 * k + kk, &(&a * J));
        d.set_column(3 * k + kk, &a);
    }
    d
}

/// Total steering vector of one path and its derivatives with respect to
/// delay, AoD and AoA, in that order.
pub fn steering_with_derivatives(p: &PathParam, sb: &SubBand, arrays: &ArrayConfig) -> [CVector; 4] {
    let parts = steering_parts(p, sb, arrays);
    [
        kron3(&parts.f, &parts.t, &parts.r),
        kron3(&parts.df, &parts.t, &parts.r),
        kron3(&parts.f, &parts.dt, &parts.r),
        kron3(&parts.f, &parts.t, &parts.dr),
    ]
}

/// Maps a compact column index to the global flat index.
fn compact_to_global(layout: &ParamLayout, band_col: usize, c: usize) -> usize {
    let k = layout.paths;
    match c / k {
        0..=2 => c,
        3 => layout.index(ParamKind::GainRe, c - 3 * k, band_col),
        _ => layout.index(ParamKind::GainIm, c - 4 * k, band_col),
    }
}

/// Full Jacobian `D_m` of band column `band_col` with all `3K + 2KM` columns.
pub fn jacobian_band(params: &ParamVector, band_col: usize, sb: &SubBand, arrays: &ArrayConfig) -> CMatrix {
    let layout = params.layout();
    let compact = jacobian_band_compact(params, band_col, sb, arrays);
    let mut d = CMatrix::zeros(compact.nrows(), layout.dim());
    for c in 0..compact.ncols() {
        d.set_column(compact_to_global(&layout, band_col, c), &compact.column(c));
    }
    d
}

#[derive(Debug, Clone)]
pub struct FisherInfo {
    pub layout: ParamLayout,
    pub f: DMatrix<f64>,
    pub per_band: Vec<DMatrix<f64>>,
    /// Natural unit of each parameter, used to judge conditioning
    /// independently of SI magnitudes.
    pub units: Vec<f64>,
}

/// Delays in units of `1/(B g_k)`, angles in `1/g_k` radians and gains as is,
/// with `B` the widest bandwidth and `g_k` the RMS gain of path `k`.
fn natural_units(params: &ParamVector, bands: &[BandModel]) -> Vec<f64> {
    let layout = params.layout();
    let bw = bands.iter().map(|b| b.sb.bandwidth()).fold(0.0, f64::max);
    let mut units = vec![1.0; layout.dim()];
    for k in 0..layout.paths {
        let rms = (params.gains.row(k).iter().map(|g| g.norm_sqr()).sum::<f64>() / layout.bands.max(1) as f64).sqrt();
        let g = if rms > 0.0 { rms } else { 1.0 };
        let b = if bw > 0.0 { bw } else { 1.0 };
        units[layout.index(ParamKind::Delay, k, 0)] = 1.0 / (b * g);
        units[layout.index(ParamKind::Aod, k, 0)] = 1.0 / g;
        units[layout.index(ParamKind::Aoa, k, 0)] = 1.0 / g;
    }
    units
}

/// `F = sum_m 2 Re(D_m^H M_m^{-1} D_m)`, with `M_m^{-1}` applied through the
/// Kronecker-structured whitener. `bands[i]` pairs with gain column `i`.
pub fn fim(params: &ParamVector, bands: &[BandModel]) -> Result<FisherInfo> {
    let layout = params.layout();
    if layout.bands != bands.len() {
        return Err(Error::Parameter(format!(
            "{} gain columns for {} bands",
            layout.bands,
            bands.len()
        )));
    }
    let dim = layout.dim();
    let mut total = DMatrix::<f64>::zeros(dim, dim);
    let mut per_band = Vec::with_capacity(bands.len());
    for (col, band) in bands.iter().enumerate() {
        let compact = jacobian_band_compact(params, col, &band.sb, &band.arrays);
        let w = band.cov.whiten_columns(&compact);
        let gram = w.adjoint() * &w;
        let mut fm = DMatrix::<f64>::zeros(dim, dim);
        for a in 0..gram.nrows() {
            let ga = compact_to_global(&layout, col, a);
            for b in 0..gram.ncols() {
                fm[(ga, compact_to_global(&layout, col, b))] = 2.0 * gram[(a, b)].re;
            }
        }
        symmetrize(&mut fm);
        total += &fm;
        per_band.push(fm);
    }
    symmetrize(&mut total);
    let units = natural_units(params, bands);
    Ok(FisherInfo { layout, f: total, per_band, units })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Inverse FIM and per-parameter bounds.
#[derive(Debug, Clone)]
pub struct CrbBounds {
    pub layout: ParamLayout,
    pub inverse: DMatrix<f64>,
    pub crb: Vec<f64>,
    /// Condition number of the FIM expressed in natural units.
    pub condition: f64,
}

impl CrbBounds {
    pub fn of(&self, kind: ParamKind, path: usize, band: usize) -> f64 {
        self.crb[self.layout.index(kind, path, band)]
    }
}

pub fn crb(fisher: &FisherInfo) -> Result<CrbBounds> {
    let layout = fisher.layout;
    let f = &fisher.f;
    let n = f.nrows();
    let diag: Vec<f64> = (0..n).map(|i| f[(i, i)]).collect();
    let dead: Vec<String> = (0..n).filter(|&i| !(diag[i] > 0.0)).map(|i| layout.name(i)).collect();
    if !dead.is_empty() {
        return Err(Error::IllConditioned { condition: f64::INFINITY, params: dead });
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let fs = DMatrix::from_fn(n, n, |i, j| f[(i, j)] * scale[i] * scale[j]);
    let fu = DMatrix::from_fn(n, n, |i, j| f[(i, j)] * fisher.units[i] * fisher.units[j]);
    let eig = fu.symmetric_eigen();
    let (mut lo, mut hi, mut lo_idx) = (f64::INFINITY, 0.0f64, 0);
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        if e < lo {
            lo = e;
            lo_idx = i;
        }
        hi = hi.max(e);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        let v = eig.eigenvectors.column(lo_idx);
        let mut involved: Vec<(usize, f64)> = v.iter().enumerate().map(|(i, x)| (i, x.abs())).collect();
        involved.sort_by(|a, b| b.1.total_cmp(&a.1));
        let params = involved.iter().take_while(|(_, x)| *x > 0.2).map(|(i, _)| layout.name(*i)).collect();
        return Err(Error::IllConditioned { condition, params });
    }
    let inv_s = fs
        .cholesky()
        .ok_or_else(|| Error::IllConditioned { condition, params: vec!["<factorization>".into()] })?
        .inverse();
    let inverse = DMatrix::from_fn(n, n, |i, j| inv_s[(i, j)] * scale[i] * scale[j]);
    let tol = 1e-10 * inverse.norm();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = inverse[(i, i)];
        if v >= 0.0 {
            out.push(v);
        } else if v >= -tol {
            out.push(0.0);
        } else {
            return Err(Error::NegativeCrb(layout.name(i)));
        }
    }
    Ok(CrbBounds { layout, inverse, crb: out, condition })
}

/// Bound on `|g_{k,m}|` from the `(Re g, Im g)` block: `u^T C u`, `u = g/|g|`.
pub fn crb_gain_magnitude(bounds: &CrbBounds, params: &ParamVector, k: usize, m: usize) -> Result<f64> {
    let g = params.gains[(k, m)];
    let mag = g.norm();
    if mag == 0.0 {
        return Err(Error::UndefinedTransform { path: k, band: m });
    }
    let lay = bounds.layout;
    let (ir, ii) = (lay.index(ParamKind::GainRe, k, m), lay.index(ParamKind::GainIm, k, m));
    let c = &bounds.inverse;
    let (ur, ui) = (g.re / mag, g.im / mag);
    Ok(ur * ur * c[(ir, ir)] + 2.0 * ur * ui * c[(ir, ii)] + ui * ui * c[(ii, ii)])
}

/// Everything the bounds module reports for one parameter set.
#[derive(Debug, Clone)]
pub struct CrbReport {
    pub bounds: CrbBounds,
    /// `K x M` variance bounds of `|g_{k,m}|`.
    pub crb_gain_mag: DMatrix<f64>,
    /// `K x M` linear ESNR.
    pub esnr: DMatrix<f64>,
    /// Global band index of each gain column, for labeling.
    pub band_labels: Vec<usize>,
}

impl CrbReport {
    pub fn esnr_db(&self, k: usize, m: usize) -> f64 {
        lin_to_db(self.esnr[(k, m)])
    }

    pub fn sqrt_crb(&self, kind: ParamKind, path: usize, band: usize) -> f64 {
        self.bounds.of(kind, path, band).sqrt()
    }

    /// CSV rows `param_kind,path,band,crb,sqrt_crb,esnr_db`. Geometric rows
    /// use `band = joint` when more than one band contributes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["param_kind", "path", "band", "crb", "sqrt_crb", "esnr_db"])?;
        let lay = self.bounds.layout;
        let geo_band = if self.band_labels.len() == 1 { self.band_labels[0].to_string() } else { "joint".to_string() };
        for kind in [ParamKind::Delay, ParamKind::Aod, ParamKind::Aoa] {
            for k in 0..lay.paths {
                let v = self.bounds.of(kind, k, 0);
                w.write_record([kind.as_str().to_string(), k.to_string(), geo_band.clone(), fmt(v), fmt(v.sqrt()), String::new()])?;
            }
        }
        for (m, label) in self.band_labels.iter().enumerate() {
            for k in 0..lay.paths {
                for kind in [ParamKind::GainRe, ParamKind::GainIm] {
                    let v = self.bounds.of(kind, k, m);
                    w.write_record([kind.as_str().to_string(), k.to_string(), label.to_string(), fmt(v), fmt(v.sqrt()), String::new()])?;
                }
                let v = self.crb_gain_mag[(k, m)];
                w.write_record([
                    "gain_mag".to_string(),
                    k.to_string(),
                    label.to_string(),
                    fmt(v),
                    fmt(v.sqrt()),
                    fmt(self.esnr_db(k, m)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub fn crb_report(params: &ParamVector, bands: &[BandModel]) -> Result<CrbReport> {
    let fisher = fim(params, bands)?;
    let bounds = crb(&fisher)?;
    let lay = bounds.layout;
    let mut gm = DMatrix::zeros(lay.paths, lay.bands);
    let mut esnr = DMatrix::zeros(lay.paths, lay.bands);
    for m in 0..lay.bands {
        for k in 0..lay.paths {
            let v = crb_gain_magnitude(&bounds, params, k, m)?;
            gm[(k, m)] = v;
            esnr[(k, m)] = params.gains[(k, m)].norm_sqr() / v;
        }
    }
    Ok(CrbReport { bounds, crb_gain_mag: gm, esnr, band_labels: bands.iter().map(|b| b.index).collect() })
}

/// `mu_{k,m} = |g_{k,m}|^2 / CRB_{|g_{k,m}|}`, linear.
pub fn esnr(params: &ParamVector, bands: &[BandModel]) -> Result<DMatrix<f64>> {
    Ok(crb_report(params, bands)?.esnr)
}
