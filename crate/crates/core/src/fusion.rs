//! Cross-band fusion of single-band path estimates.
//!
//! Bands are visited in ascending carrier order. Every new estimate is
//! expanded into its grating-lobe alias set, matched against the current
//! path groups with the Hungarian algorithm on a normalized distance, and
//! either joins a group (resolving aliases on the way) or opens a new one.
//! Unambiguous groups carry an inverse-CRB weighted combination of their
//! members.

use log::debug;
use serde::Serialize;

use crate::channel::{BandModel, CVector};
use crate::error::{Error, Result};
use crate::estimator::{BandEstimator, PathEstimate};
use crate::scenario::{ArrayConfig, SubBand, Thresholds};

/// Grating-lobe variants of one estimate. Element 0 is the estimate itself;
/// the rest follow in ascending `(sin phi, sin theta)` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AliasSet {
    pub base: PathEstimate,
    pub alias_angles: Vec<(f64, f64)>,
    pub band: usize,
}

impl AliasSet {
    pub fn is_singleton(&self) -> bool {
        self.alias_angles.len() == 1
    }

    pub fn variants(&self) -> Vec<[f64; 3]> {
        self.alias_angles.iter().map(|&(p, t)| [self.base.tau_hat, p, t]).collect()
    }
}

/// All `asin(sin x + q * shift)` with `|sin| <= 1`, ascending in `sin`.
fn shifted_angles(angle: f64, shift: f64) -> Vec<f64> {
    let s = angle.sin();
    let lo = ((-1.0 - s) / shift).ceil() as i64;
    let hi = ((1.0 - s) / shift).floor() as i64;
    (lo..=hi)
        .map(|q| if q == 0 { angle } else { (s + q as f64 * shift).clamp(-1.0, 1.0).asin() })
        .collect()
}

pub fn enumerate_aliases(est: &PathEstimate, sb: &SubBand, arrays: &ArrayConfig) -> AliasSet {
    let lambda = sb.wavelength();
    let phis = shifted_angles(est.phi_hat, lambda / arrays.d_t);
    let thetas = shifted_angles(est.theta_hat, lambda / arrays.d_r);
    let mut alias_angles = vec![(est.phi_hat, est.theta_hat)];
    for &p in &phis {
        for &t in &thetas {
            if p != est.phi_hat || t != est.theta_hat {
                alias_angles.push((p, t));
            }
        }
    }
    AliasSet { base: *est, alias_angles, band: est.band }
}

/// Parameters of the normalization map `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig {
    pub tau_max: f64,
}

impl NormConfig {
    /// `tau_max = 1 / f_delta` of the band with the widest bandwidth.
    pub fn from_bands(bands: &[SubBand]) -> Self {
        let widest = bands
            .iter()
            .max_by(|a, b| a.bandwidth().total_cmp(&b.bandwidth()))
            .expect("at least one band");
        Self { tau_max: widest.delay_window() }
    }
}

/// `T(tau, phi, theta) = [tau / tau_max, (sin phi + 1)/2, (sin theta + 1)/2]`.
pub fn normalize_t(x: [f64; 3], cfg: &NormConfig) -> Result<[f64; 3]> {
    if !(cfg.tau_max > 0.0) {
        return Err(Error::Config("tau_max must be positive".into()));
    }
    if !(0.0..=cfg.tau_max).contains(&x[0]) {
        return Err(Error::Range(format!("delay {} outside [0, {}]", x[0], cfg.tau_max)));
    }
    Ok([x[0] / cfg.tau_max, (x[1].sin() + 1.0) / 2.0, (x[2].sin() + 1.0) / 2.0])
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Best and second-best cost over all variant pairs of one (group, candidate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchCost {
    pub cost: f64,
    pub second_best: f64,
    /// Minimizing (group variant, candidate variant) indices.
    pub best_pair: (usize, usize),
}

pub fn match_cost(group_variants: &[[f64; 3]], cand_variants: &[[f64; 3]], cfg: &NormConfig) -> Result<MatchCost> {
    let gn: Vec<[f64; 3]> = group_variants.iter().map(|x| normalize_t(*x, cfg)).collect::<Result<_>>()?;
    let cn: Vec<[f64; 3]> = cand_variants.iter().map(|x| normalize_t(*x, cfg)).collect::<Result<_>>()?;
    let mut best = MatchCost { cost: f64::INFINITY, second_best: f64::INFINITY, best_pair: (0, 0) };
    for (r, g) in gn.iter().enumerate() {
        for (c, x) in cn.iter().enumerate() {
            let d = distance(g, x);
            if d < best.cost {
                best.second_best = best.cost;
                best.cost = d;
                best.best_pair = (r, c);
            } else if d < best.second_best {
                best.second_best = d;
            }
        }
    }
    Ok(best)
}

/// Minimum-cost one-to-one assignment of rows to columns (rectangular
/// allowed). Returns `(row, col)` pairs sorted by row.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };
    // Shortest augmenting path with potentials, 1-based with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0 && p[j] <= rows && j <= cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedMatch {
    pub group: usize,
    pub candidate: usize,
    pub cost: MatchCost,
}

/// Splits an assignment into accepted and rejected pairs:
/// accept iff `cost < c_max` and `second_best - cost >= eps_prom`.
pub fn accept_matches(
    assignment: &[(usize, usize)],
    costs: &[Vec<MatchCost>],
    c_max: f64,
    eps_prom: f64,
) -> (Vec<AcceptedMatch>, Vec<(usize, usize)>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for &(p, i) in assignment {
        let c = costs[p][i];
        if c.cost < c_max && c.second_best - c.cost >= eps_prom {
            accepted.push(AcceptedMatch { group: p, candidate: i, cost: c });
        } else {
            rejected.push((p, i));
        }
    }
    (accepted, rejected)
}

/// A band's contribution to a path group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMember {
    pub band: usize,
    pub aliases: AliasSet,
    /// Alias variant chosen for this member once the group is unambiguous.
    pub resolved: Option<usize>,
}

impl GroupMember {
    pub fn estimate(&self) -> &PathEstimate {
        &self.aliases.base
    }

    /// Resolved `(tau, phi, theta)` with CRBs carried over to the chosen
    /// variant (`var(phi') = var(phi) cos^2 phi / cos^2 phi'`).
    pub fn resolved_params(&self) -> Option<([f64; 3], [f64; 3])> {
        let r = self.resolved?;
        let e = self.estimate();
        let (p, t) = self.aliases.alias_angles[r];
        let ratio = |base: f64, var: f64| (base.cos() / var.cos()).powi(2);
        Some((
            [e.tau_hat, p, t],
            [e.crb_tau, e.crb_phi * ratio(e.phi_hat, p), e.crb_theta * ratio(e.theta_hat, t)],
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FusedParams {
    pub tau: f64,
    pub phi: f64,
    pub theta: f64,
    pub var_tau: f64,
    pub var_phi: f64,
    pub var_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathGroup {
    pub id: usize,
    pub members: Vec<GroupMember>,
    pub fused: Option<FusedParams>,
    pub ambiguous: bool,
}

impl PathGroup {
    pub fn bands(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.band).collect()
    }

    /// Variants used as the group side of the matching cost.
    fn representative(&self) -> Vec<[f64; 3]> {
        match &self.fused {
            Some(f) if !self.ambiguous => vec![[f.tau, f.phi, f.theta]],
            _ => self.members.last().expect("groups are never empty").aliases.variants(),
        }
    }
}

/// Inverse-CRB weights over the detected (ESNR-passing) members.
pub fn fusion_weights(crbs: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = crbs.iter().map(|c| 1.0 / c).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|w| w / total).collect()
}

/// Inverse-CRB weighted combination of the resolved members passing the
/// ESNR gate, done per geometric parameter.
pub fn fuse_weighted(group: &PathGroup, eps_esnr_db: f64) -> Result<FusedParams> {
    let detected: Vec<([f64; 3], [f64; 3])> = group
        .members
        .iter()
        .filter(|m| m.estimate().esnr_hat_db >= eps_esnr_db)
        .filter_map(|m| m.resolved_params())
        .collect();
    if detected.is_empty() {
        return Err(Error::Parameter(format!("group {} has no detected resolved member", group.id)));
    }
    let mut out = [0.0; 3];
    let mut var = [0.0; 3];
    for i in 0..3 {
        let crbs: Vec<f64> = detected.iter().map(|(_, c)| c[i]).collect();
        let w = fusion_weights(&crbs);
        out[i] = detected.iter().zip(&w).map(|((x, _), w)| w * x[i]).sum();
        let min = crbs.iter().copied().fold(f64::INFINITY, f64::min);
        var[i] = (1.0 / crbs.iter().map(|c| 1.0 / c).sum::<f64>()).min(min);
    }
    Ok(FusedParams { tau: out[0], phi: out[1], theta: out[2], var_tau: var[0], var_phi: var[1], var_theta: var[2] })
}

/// Record of one unambiguous per-band estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecordEntry {
    pub group_id: usize,
    pub band: usize,
    pub tau: f64,
    pub phi: f64,
    pub theta: f64,
}

/// The three running containers: unambiguous groups, ambiguous groups and
/// the append-only record of unambiguous per-band estimates.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FusionState {
    pub e_u: Vec<PathGroup>,
    pub e_a: Vec<PathGroup>,
    pub r_u: Vec<RecordEntry>,
    next_id: usize,
}

impl FusionState {
    fn record(&mut self, group_id: usize, member: &GroupMember) {
        if let Some(([tau, phi, theta], _)) = member.resolved_params() {
            self.r_u.push(RecordEntry { group_id, band: member.band, tau, phi, theta });
        }
    }

    fn open_group(&mut self, aliases: AliasSet, eps_esnr_db: f64) {
        let id = self.next_id;
        self.next_id += 1;
        let singleton = aliases.is_singleton();
        let member = GroupMember { band: aliases.band, aliases, resolved: singleton.then_some(0) };
        let mut group = PathGroup { id, members: vec![member], fused: None, ambiguous: !singleton };
        if singleton {
            self.record(id, &group.members[0]);
            group.fused = fuse_weighted(&group, eps_esnr_db).ok();
            self.e_u.push(group);
        } else {
            self.e_a.push(group);
        }
    }

    /// Final unambiguous fused paths.
    pub fn fused_paths(&self) -> Vec<FusedPath> {
        self.e_u
            .iter()
            .filter_map(|g| g.fused.map(|f| FusedPath { group_id: g.id, params: f, bands: g.bands() }))
            .collect()
    }

    /// Processes one band's (already gated) estimates.
    pub fn update(
        &mut self,
        aliases: Vec<AliasSet>,
        thresholds: &Thresholds,
        norm: &NormConfig,
    ) -> Result<()> {
        let groups = self.e_u.len() + self.e_a.len();
        if groups == 0 || aliases.is_empty() {
            for a in aliases {
                self.open_group(a, thresholds.eps_esnr_db);
            }
            return Ok(());
        }
        let reps: Vec<Vec<[f64; 3]>> = self.e_u.iter().chain(&self.e_a).map(|g| g.representative()).collect();
        let costs: Vec<Vec<MatchCost>> = reps
            .iter()
            .map(|r| aliases.iter().map(|a| match_cost(r, &a.variants(), norm)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let matrix: Vec<Vec<f64>> = costs.iter().map(|row| row.iter().map(|c| c.cost).collect()).collect();
        let assignment = hungarian_assign(&matrix);
        let (accepted, rejected) = accept_matches(&assignment, &costs, thresholds.c_max, thresholds.eps_prom);
        for (p, i) in &rejected {
            debug!("match group-slot {p} / candidate {i} rejected: {:?}", costs[*p][*i]);
        }

        let n_u = self.e_u.len();
        let mut matched = vec![false; aliases.len()];
        let mut promote: Vec<usize> = Vec::new();
        for m in &accepted {
            matched[m.candidate] = true;
            let (rg, rc) = m.cost.best_pair;
            let member = GroupMember {
                band: aliases[m.candidate].band,
                aliases: aliases[m.candidate].clone(),
                resolved: Some(rc),
            };
            if m.group < n_u {
                let id = self.e_u[m.group].id;
                self.record(id, &member);
                let g = &mut self.e_u[m.group];
                g.members.push(member);
                g.fused = fuse_weighted(g, thresholds.eps_esnr_db).ok();
            } else {
                let slot = m.group - n_u;
                let g = &mut self.e_a[slot];
                for old in &mut g.members {
                    old.resolved = Some(rg);
                }
                g.members.push(member);
                g.ambiguous = false;
                promote.push(slot);
            }
        }
        promote.sort_unstable_by(|a, b| b.cmp(a));
        for slot in promote {
            let mut g = self.e_a.remove(slot);
            for mem in &g.members {
                self.record(g.id, mem);
            }
            g.fused = fuse_weighted(&g, thresholds.eps_esnr_db).ok();
            self.e_u.push(g);
        }
        for (i, a) in aliases.into_iter().enumerate() {
            if !matched[i] {
                self.open_group(a, thresholds.eps_esnr_db);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedPath {
    pub group_id: usize,
    pub params: FusedParams,
    pub bands: Vec<usize>,
}

/// Result of running the multi-band pipeline on one realization.
#[derive(Debug, Clone)]
pub struct MultibandOutput {
    pub state: FusionState,
    pub fused: Vec<FusedPath>,
    /// Per-band estimates in the scenario's band order.
    pub per_band: Vec<Vec<PathEstimate>>,
}

/// Fuses already computed per-band estimates. `per_band[i]` belongs to
/// `bands[i]`.
pub fn fuse_estimates(
    per_band: &[Vec<PathEstimate>],
    bands: &[BandModel],
    thresholds: &Thresholds,
) -> Result<FusionState> {
    let norm = NormConfig::from_bands(&bands.iter().map(|b| b.sb).collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..bands.len()).collect();
    order.sort_by(|a, b| bands[*a].sb.f_c.total_cmp(&bands[*b].sb.f_c));
    let mut state = FusionState::default();
    for m in order {
        let band = &bands[m];
        let aliases: Vec<AliasSet> = per_band[m]
            .iter()
            .filter(|e| {
                let keep = e.esnr_hat_db >= thresholds.eps_esnr_db;
                if !keep {
                    debug!("band {}: dropping path at {:.3e} s, ESNR {:.2} dB", band.index, e.tau_hat, e.esnr_hat_db);
                }
                keep
            })
            .map(|e| enumerate_aliases(e, &band.sb, &band.arrays))
            .collect();
        state.update(aliases, thresholds, &norm)?;
    }
    Ok(state)
}

/// Estimates every band and fuses the results. `estimators[i]` processes `h[i]`.
pub fn run_multiband(h: &[CVector], estimators: &[BandEstimator<'_>], thresholds: &Thresholds) -> Result<MultibandOutput> {
    let per_band = h
        .iter()
        .zip(estimators)
        .map(|(hm, est)| est.estimate(hm))
        .collect::<Result<Vec<_>>>()?;
    let bands: Vec<BandModel> = estimators.iter().map(|e| e.band.clone()).collect();
    let state = fuse_estimates(&per_band, &bands, thresholds)?;
    let fused = state.fused_paths();
    Ok(MultibandOutput { state, fused, per_band })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn est(band: usize, tau: f64, phi: f64, theta: f64, crb: [f64; 3], esnr_db: f64) -> PathEstimate {
        PathEstimate {
            band,
            tau_hat: tau,
            phi_hat: phi,
            theta_hat: theta,
            g_hat: Complex64::new(1.0, 0.0),
            esnr_hat_db: esnr_db,
            crb_tau: crb[0],
            crb_phi: crb[1],
            crb_theta: crb[2],
            crb_gain: 1e-3,
            converged: true,
        }
    }

    fn band(f_c: f64) -> SubBand {
        SubBand { f_c, f_delta: 1e6, n: 128 }
    }

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let rows = cost.len();
            let cols = cost[0].len();
            if row == rows {
                *best = best.min(acc);
                return;
            }
            // rows beyond the column count may stay unassigned
            let free_rows = rows - row;
            let free_cols = used.iter().filter(|u| !**u).count();
            if free_rows > free_cols {
                rec(cost, row + 1, used, acc, best);
            }
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
        best
    }

    fn total(cost: &[Vec<f64>], a: &[(usize, usize)]) -> f64 {
        a.iter().map(|&(i, j)| cost[i][j]).sum()
    }

    #[test]
    fn no_aliases_at_lower_band_broadside() {
        let set = enumerate_aliases(&est(0, 1e-8, 0.0, 0.0, [1.0; 3], 20.0), &band(8.75e9), &ArrayConfig::default());
        assert!(set.is_singleton());
        assert_eq!(set.alias_angles, vec![(0.0, 0.0)]);
    }

    #[test]
    fn upper_band_broadside_aliases() {
        let arrays = ArrayConfig { l_t: 1, ..ArrayConfig::default() };
        let sb = band(21.7e9);
        let set = enumerate_aliases(&est(0, 1e-8, 0.0, 0.0, [1.0; 3], 20.0), &sb, &arrays);
        let shift = sb.wavelength() / 0.02;
        assert_relative_eq!(shift, 0.6907, epsilon = 1e-4);
        let thetas: Vec<f64> = set.alias_angles.iter().filter(|(p, _)| *p == 0.0).map(|(_, t)| *t).collect();
        assert_eq!(thetas.len(), 3);
        assert_eq!(thetas[0], 0.0);
        assert_relative_eq!(thetas[1].to_degrees(), -43.69, epsilon = 0.01);
        assert_relative_eq!(thetas[2].to_degrees(), 43.69, epsilon = 0.01);
        // 3 AoD variants times 3 AoA variants
        assert_eq!(set.alias_angles.len(), 9);
    }

    #[test]
    fn alias_order_is_ascending_after_base() {
        let sb = band(21.7e9);
        let set = enumerate_aliases(&est(0, 1e-8, 0.4, -0.2, [1.0; 3], 20.0), &sb, &ArrayConfig::default());
        assert_eq!(set.alias_angles[0], (0.4, -0.2));
        let rest: Vec<(f64, f64)> = set.alias_angles[1..].iter().map(|(p, t)| (p.sin(), t.sin())).collect();
        assert!(rest.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn alias_variants_satisfy_shift_condition(phi in -1.5f64..1.5, theta in -1.5f64..1.5, f in 5e9f64..40e9) {
            let sb = band(f);
            let arrays = ArrayConfig::default();
            let set = enumerate_aliases(&est(0, 1e-8, phi, theta, [1.0; 3], 20.0), &sb, &arrays);
            let shift = sb.wavelength() / arrays.d_t;
            for (p, t) in &set.alias_angles {
                let qp = (p.sin() - phi.sin()) / shift;
                let qt = (t.sin() - theta.sin()) / shift;
                prop_assert!((qp - qp.round()).abs() < 1e-9);
                prop_assert!((qt - qt.round()).abs() < 1e-9);
            }
            // count matches the number of admissible shifts
            let count = |s: f64| (((1.0 - s) / shift).floor() - ((-1.0 - s) / shift).ceil() + 1.0) as usize;
            prop_assert_eq!(set.alias_angles.len(), count(phi.sin()) * count(theta.sin()));
        }

        #[test]
        fn nyquist_spacing_never_aliases(phi in -1.57f64..1.57, theta in -1.57f64..1.57, f in 1e9f64..40e9) {
            let sb = band(f);
            let half = sb.wavelength() / 2.0;
            let arrays = ArrayConfig { d_t: half, d_r: half * 0.7, ..ArrayConfig::default() };
            let set = enumerate_aliases(&est(0, 1e-8, phi, theta, [1.0; 3], 20.0), &sb, &arrays);
            prop_assert!(set.is_singleton());
        }
    }

    #[test]
    fn normalization_endpoints() {
        let cfg = NormConfig { tau_max: 1e-6 };
        assert_eq!(normalize_t([0.0, 0.0, 0.0], &cfg).unwrap(), [0.0, 0.5, 0.5]);
        let e = normalize_t([1e-6, std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2], &cfg).unwrap();
        assert_relative_eq!(e[0], 1.0);
        assert_relative_eq!(e[1], 1.0);
        assert_relative_eq!(e[2], 0.0);
        assert!(matches!(normalize_t([-1e-9, 0.0, 0.0], &cfg), Err(Error::Range(_))));
        assert!(matches!(normalize_t([2e-6, 0.0, 0.0], &cfg), Err(Error::Range(_))));
        assert!(matches!(normalize_t([0.0, 0.0, 0.0], &NormConfig { tau_max: 0.0 }), Err(Error::Config(_))));
    }

    #[test]
    fn match_cost_identity_and_singletons() {
        let cfg = NormConfig { tau_max: 1e-6 };
        let x = [3e-8, 0.2, -0.3];
        assert_eq!(match_cost(&[x], &[x], &cfg).unwrap().cost, 0.0);
        let y = [5e-8, -0.1, 0.4];
        let c = match_cost(&[x], &[y], &cfg).unwrap();
        let (a, b) = (normalize_t(x, &cfg).unwrap(), normalize_t(y, &cfg).unwrap());
        assert_relative_eq!(c.cost, distance(&a, &b));
        assert_eq!(c.second_best, f64::INFINITY);
    }

    #[test]
    fn match_cost_two_by_three_brute_force() {
        let cfg = NormConfig { tau_max: 1e-6 };
        let g = [[3e-8, 0.2, -0.3], [3e-8, -0.9, -0.3]];
        let c = [[3.1e-8, 0.7, 0.1], [3.1e-8, -0.88, -0.31], [3.1e-8, 0.25, -0.29]];
        let mut all: Vec<(f64, (usize, usize))> = Vec::new();
        for (r, gv) in g.iter().enumerate() {
            for (s, cv) in c.iter().enumerate() {
                let (a, b) = (normalize_t(*gv, &cfg).unwrap(), normalize_t(*cv, &cfg).unwrap());
                let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                all.push((d, (r, s)));
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let got = match_cost(&g, &c, &cfg).unwrap();
        assert_eq!(got.cost, all[0].0);
        assert_eq!(got.best_pair, all[0].1);
        assert_eq!(got.second_best, all[1].0);
    }

    #[test]
    fn hungarian_small_examples() {
        let a = vec![vec![0.0, 9.0], vec![9.0, 0.0]];
        assert_eq!(hungarian_assign(&a), vec![(0, 0), (1, 1)]);
        let b = vec![vec![4.0, 1.0], vec![2.0, 8.0]];
        let r = hungarian_assign(&b);
        assert_eq!(r, vec![(0, 1), (1, 0)]);
        assert_eq!(total(&b, &r), 3.0);
        assert!(hungarian_assign(&[]).is_empty());
    }

    #[test]
    fn hungarian_five_by_five_matches_permutations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        assert_relative_eq!(total(&m, &hungarian_assign(&m)), brute_force_min(&m), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn hungarian_is_optimal(rows in 1usize..=6, cols in 1usize..=6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let a = hungarian_assign(&m);
            prop_assert_eq!(a.len(), rows.min(cols));
            let mut seen_r = vec![false; rows];
            let mut seen_c = vec![false; cols];
            for &(i, j) in &a {
                prop_assert!(!seen_r[i] && !seen_c[j]);
                seen_r[i] = true;
                seen_c[j] = true;
            }
            prop_assert!((total(&m, &a) - brute_force_min(&m)).abs() < 1e-9);
        }
    }

    #[test]
    fn acceptance_thresholds() {
        let mc = |cost: f64, second: f64| MatchCost { cost, second_best: second, best_pair: (0, 0) };
        let costs = vec![vec![mc(0.3, 0.6), mc(0.3, 0.4), mc(0.8, 5.0)]];
        let (acc, rej) = accept_matches(&[(0, 0)], &costs, 0.75, 0.2);
        assert_eq!(acc.len(), 1);
        assert!(rej.is_empty());
        let (acc, rej) = accept_matches(&[(0, 1)], &costs, 0.75, 0.2);
        assert!(acc.is_empty());
        assert_eq!(rej, vec![(0, 1)]);
        let (acc, _) = accept_matches(&[(0, 2)], &costs, 0.75, 0.2);
        assert!(acc.is_empty());
    }

    fn resolved_group(members: Vec<PathEstimate>) -> PathGroup {
        let arrays = ArrayConfig::default();
        PathGroup {
            id: 0,
            members: members
                .into_iter()
                .map(|e| GroupMember { band: e.band, aliases: enumerate_aliases(&e, &band(8.75e9), &arrays), resolved: Some(0) })
                .collect(),
            fused: None,
            ambiguous: false,
        }
    }

    #[test]
    fn weights_follow_inverse_crb() {
        assert_eq!(fusion_weights(&[2.0, 2.0]), vec![0.5, 0.5]);
        let w = fusion_weights(&[1.0, 4.0]);
        assert_relative_eq!(w[0], 0.8);
        assert_relative_eq!(w[1], 0.2);
        let g = resolved_group(vec![est(0, 1e-8, 0.1, 0.2, [1.0; 3], 20.0), est(1, 3e-8, 0.3, 0.0, [1.0; 3], 20.0)]);
        let f = fuse_weighted(&g, 6.0).unwrap();
        assert_relative_eq!(f.tau, 2e-8);
        assert_relative_eq!(f.phi, 0.2);
        assert_relative_eq!(f.var_tau, 0.5);
    }

    #[test]
    fn gated_members_do_not_contribute() {
        let g = resolved_group(vec![est(0, 1e-8, 0.1, 0.2, [1.0; 3], 20.0), est(1, 3e-8, 0.3, 0.0, [1.0; 3], 3.0)]);
        let f = fuse_weighted(&g, 6.0).unwrap();
        assert_eq!(f.tau, 1e-8);
        assert!(matches!(fuse_weighted(&g, 30.0), Err(Error::Parameter(_))));
    }

    proptest! {
        #[test]
        fn fused_variance_below_every_member(crbs in proptest::collection::vec(1e-6f64..1e3, 1..6)) {
            let w = fusion_weights(&crbs);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let members: Vec<PathEstimate> = crbs.iter().enumerate().map(|(m, c)| est(m, 1e-8, 0.1, 0.1, [*c; 3], 20.0)).collect();
            let f = fuse_weighted(&resolved_group(members), 6.0).unwrap();
            let min = crbs.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(f.var_tau <= min);
            prop_assert!(f.var_phi <= min);
        }
    }

    #[test]
    fn delta_method_rescales_angle_bound() {
        let e = est(1, 1e-8, 0.0, 0.0, [1.0, 1.0, 1.0], 20.0);
        let aliases = enumerate_aliases(&e, &band(21.7e9), &ArrayConfig::default());
        let r = aliases.alias_angles.iter().position(|&(p, t)| p == 0.0 && t != 0.0).unwrap();
        let m = GroupMember { band: 1, aliases: aliases.clone(), resolved: Some(r) };
        let (x, c) = m.resolved_params().unwrap();
        assert_relative_eq!(c[2], 1.0 / x[2].cos().powi(2), max_relative = 1e-12);
        assert_eq!(c[1], 1.0);
    }

    fn model_bands(bands: &[(f64, f64)]) -> Vec<BandModel> {
        let arrays = ArrayConfig::default();
        bands
            .iter()
            .enumerate()
            .map(|(i, (f, beta))| {
                let sb = band(*f);
                let dmc = crate::channel::dmc_freq_cov(&sb, 0.0, *beta, 1.0, 1e-8).unwrap();
                BandModel::new(i, sb, arrays, dmc, 1.0).unwrap()
            })
            .collect()
    }

    fn assert_consistent(state: &FusionState) {
        for g in &state.e_u {
            assert!(state.e_a.iter().all(|a| a.id != g.id));
            assert!(!g.members.is_empty());
            assert!(!g.ambiguous);
            let mut bands = g.bands();
            bands.sort_unstable();
            bands.dedup();
            assert_eq!(bands.len(), g.members.len());
        }
        for g in &state.e_a {
            assert!(g.fused.is_none());
        }
    }

    #[test]
    fn single_band_fusion_is_identity() {
        let bands = model_bands(&[(8.75e9, 0.5)]);
        let per_band = vec![vec![est(0, 3e-8, 0.0, 0.0, [1e-22, 1e-6, 1e-6], 30.0), est(0, 3.25e-8, -0.29, 0.54, [1e-21, 1e-5, 1e-5], 20.0)]];
        let state = fuse_estimates(&per_band, &bands, &Thresholds::default()).unwrap();
        let fused = state.fused_paths();
        assert_eq!(fused.len(), 2);
        for (f, e) in fused.iter().zip(&per_band[0]) {
            assert_eq!((f.params.tau, f.params.phi, f.params.theta), (e.tau_hat, e.phi_hat, e.theta_hat));
        }
        assert_eq!(state.r_u.len(), 2);
    }

    #[test]
    fn two_bands_two_paths_form_two_groups() {
        let bands = model_bands(&[(8.75e9, 0.5), (10.0e9, 0.5)]);
        let a = vec![est(0, 3.00e-8, 0.10, 0.00, [1e-22, 1e-6, 1e-6], 30.0), est(0, 8.0e-8, -0.30, 0.40, [1e-22, 1e-6, 1e-6], 25.0)];
        let b = vec![est(1, 8.02e-8, -0.31, 0.41, [3e-22, 3e-6, 3e-6], 25.0), est(1, 3.02e-8, 0.12, 0.01, [3e-22, 3e-6, 3e-6], 30.0)];
        let state = fuse_estimates(&[a.clone(), b.clone()], &bands, &Thresholds::default()).unwrap();
        assert_consistent(&state);
        assert_eq!(state.e_u.len(), 2);
        assert!(state.e_a.is_empty());
        assert_eq!(state.r_u.len(), 4);
        let fused = state.fused_paths();
        for f in &fused {
            assert_eq!(f.bands, vec![0, 1]);
        }
        let near = |t: f64| fused.iter().find(|f| (f.params.tau - t).abs() < 1e-9).unwrap().params;
        let p = near(3e-8);
        assert!(p.tau > 3.00e-8 && p.tau < 3.02e-8);
        assert_relative_eq!(p.tau, 0.75 * 3.00e-8 + 0.25 * 3.02e-8, max_relative = 1e-12);
        assert!(p.phi > 0.10 && p.phi < 0.12);
    }

    #[test]
    fn upper_band_aliases_resolve_against_lower_band() {
        let bands = model_bands(&[(8.75e9, 0.5), (21.7e9, 0.5)]);
        let theta = 30f64.to_radians();
        let lower = vec![est(0, 3e-8, 0.0, theta, [1e-22, 1e-6, 1e-6], 30.0)];
        // the upper band reports an aliased AoA
        let shift = bands[1].sb.wavelength() / 0.02;
        let aliased = (theta.sin() - shift).asin();
        let upper = vec![est(1, 3e-8, 0.0, aliased, [1e-22, 1e-6, 1e-6], 30.0)];
        let state = fuse_estimates(&[lower, upper], &bands, &Thresholds::default()).unwrap();
        assert_consistent(&state);
        let fused = state.fused_paths();
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].bands, vec![0, 1]);
        assert_relative_eq!(fused[0].params.theta, theta, epsilon = 1e-9);
    }

    #[test]
    fn ambiguous_first_band_waits_in_e_a_until_resolved() {
        // processed first because of its lower carrier; aliased at this spacing
        let bands = model_bands(&[(30.0e9, 0.5), (8.75e9, 0.5)]);
        let theta = 0.2f64;
        let shift = bands[0].sb.wavelength() / 0.02;
        let high = [est(0, 3e-8, 0.0, (theta.sin() + shift).asin(), [1e-22, 1e-6, 1e-6], 30.0)];
        let low = [est(1, 3e-8, 0.0, theta, [1e-22, 1e-6, 1e-6], 30.0)];
        let mut state = FusionState::default();
        let norm = NormConfig::from_bands(&[bands[0].sb, bands[1].sb]);
        let th = Thresholds::default();
        let al = |e: &PathEstimate, b: &BandModel| enumerate_aliases(e, &b.sb, &b.arrays);
        state.update(vec![al(&high[0], &bands[0])], &th, &norm).unwrap();
        assert_eq!(state.e_a.len(), 1);
        assert!(state.e_u.is_empty());
        assert!(state.r_u.is_empty());
        state.update(vec![al(&low[0], &bands[1])], &th, &norm).unwrap();
        assert_consistent(&state);
        assert!(state.e_a.is_empty());
        assert_eq!(state.e_u.len(), 1);
        assert_eq!(state.r_u.len(), 2);
        assert_relative_eq!(state.fused_paths()[0].params.theta, theta, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn lowering_threshold_keeps_detected_bands(eps_hi in 0.0f64..30.0, drop in 0.0f64..20.0, esnrs in proptest::collection::vec(-5.0f64..40.0, 2)) {
            let bands = model_bands(&[(8.75e9, 0.5), (10.0e9, 0.5)]);
            let per_band: Vec<Vec<PathEstimate>> = esnrs
                .iter()
                .enumerate()
                .map(|(m, s)| vec![est(m, 3e-8 + m as f64 * 1e-11, 0.1, 0.1, [1e-22, 1e-6, 1e-6], *s)])
                .collect();
            let detected = |eps: f64| {
                let th = Thresholds { eps_esnr_db: eps, ..Thresholds::default() };
                let state = fuse_estimates(&per_band, &bands, &th).unwrap();
                let mut b: Vec<usize> = state.fused_paths().iter().flat_map(|f| f.bands.clone()).collect();
                b.sort_unstable();
                b
            };
            let hi = detected(eps_hi);
            let lo = detected(eps_hi - drop);
            prop_assert!(hi.iter().all(|b| lo.contains(b)));
        }
    }
}
