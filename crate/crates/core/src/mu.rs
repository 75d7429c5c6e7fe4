//! Multi-user downlink: zero-forcing baseline and over-the-air beamforming
//! through the active RIS.
//!
//! The reflection design works on the lifted variable `Z = z z^H`. For user
//! `k` with antenna block `H_k` and RIS row `g_k`,
//! `z^H (A_i o B_k) z = ||g_k Psi H_i||^2`, where `A_i = H_i H_i^H`,
//! `B_k[m, n] = g_{k,m} conj(g_{k,n})` and `Psi = diag(z)^H`.

use nalgebra::SVD;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, identity, quad_form, re_inner};
use crate::model::{
    db_to_linear, linear_to_db, CMat, CVec, ChannelSet, Link, ReflectionVector, SystemConfig,
};
use crate::sdp::{
    gaussian_randomization, hermitian_eig, solve_feasibility, CandidateEvaluator, Constraint,
    RoundingOutcome, SdpSolution, SdpStatus,
};

/// Condition number above which `F` counts as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative constraint violation a rounded candidate may carry and still
/// count as meeting its SINR targets.
pub const ROUNDING_FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    /// `T_x x K` precoding matrix.
    pub w: CMat,
    pub zeta: f64,
}

/// Zero-forcing precoder `W = sqrt(zeta) F^H (F F^H)^{-1}` with
/// `Tr(W W^H) = p_total`.
pub fn zf_precoder(f: &CMat, p_total: f64) -> Result<ZfPrecoder> {
    let (k, tx) = f.shape();
    if k == 0 || k > tx {
        return Err(Error::DimensionMismatch(format!(
            "zero forcing needs 1 <= K <= T_x, got K={k}, T_x={tx}"
        )));
    }
    if !(p_total > 0.0) || !p_total.is_finite() {
        return Err(Error::InvalidInput(format!("transmit power must be positive, got {p_total}")));
    }
    let svd = SVD::new(f.clone(), true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    if !(s_min > 0.0) || s_max / s_min > MAX_CONDITION {
        return Err(Error::SingularChannel(format!(
            "direct channel condition number {:.3e} exceeds {MAX_CONDITION:.0e}",
            s_max / s_min
        )));
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^H");
    // F = U S V^H  =>  F^+ = V S^{-1} U^H
    let mut v = v_t.adjoint();
    for (j, &sj) in s.iter().enumerate() {
        v.column_mut(j).iter_mut().for_each(|c| *c /= sj);
    }
    let pinv = v * u.adjoint();
    let zeta = p_total / s.iter().map(|x| 1.0 / (x * x)).sum::<f64>();
    Ok(ZfPrecoder {
        w: pinv * Complex64::from(zeta.sqrt()),
        zeta,
    })
}

/// Per-user SINR `|f_k w_k|^2 / (sum_{i != k} |f_k w_i|^2 + sigma_s2)`.
pub fn zf_sinr(f: &CMat, precoder: &ZfPrecoder, sigma_s2: f64) -> Result<Vec<f64>> {
    let w = &precoder.w;
    if f.ncols() != w.nrows() || f.nrows() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "F is {:?} but W is {:?}",
            f.shape(),
            w.shape()
        )));
    }
    let gains = f * w;
    Ok((0..f.nrows())
        .map(|k| {
            let row = gains.row(k);
            let signal = row[k].norm_sqr();
            let interference = row.iter().map(|c| c.norm_sqr()).sum::<f64>() - signal;
            signal / (interference.max(0.0) + sigma_s2)
        })
        .collect())
}

/// Lifted SINR data for one channel realization.
#[derive(Debug, Clone)]
pub struct MuSdrMatrices {
    /// `Q_k = A_k o B_k`, the desired-signal matrix of user `k`.
    pub q_k: Vec<CMat>,
    /// `q_cross[k][i] = A_i o B_k`; the diagonal repeats `q_k`.
    pub q_cross: Vec<Vec<CMat>>,
    /// RIS amplifier noise `sigma_v^2 I o B_k = sigma_v^2 diag(|g_k|^2)`.
    pub q_m: Vec<CMat>,
    /// Upper bound on `Tr(Z) = ||z||^2`.
    pub trace_cap: f64,
    /// Per-user transmit power `P_BS / K`.
    pub p_k: f64,
    pub sigma_s2: f64,
}

impl MuSdrMatrices {
    pub fn users(&self) -> usize {
        self.q_k.len()
    }

    /// Total interference matrix `sum_{i != k} Q_i` seen by user `k`.
    pub fn interference(&self, k: usize) -> CMat {
        let n = self.q_k[k].nrows();
        self.q_cross[k]
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .fold(CMat::zeros(n, n), |acc, (_, q)| acc + q)
    }

    /// SINRs of the lifted point `Z`; for `Z = z z^H` these are the SINRs of `z`.
    pub fn sinr(&self, z: &CMat) -> Vec<f64> {
        (0..self.users())
            .map(|k| {
                let signal = self.p_k * re_inner(&self.q_k[k], z);
                let interference = self.p_k * re_inner(&self.interference(k), z);
                let noise = re_inner(&self.q_m[k], z);
                signal / (interference + noise + self.sigma_s2)
            })
            .collect()
    }
}

/// Reflection-power budget `p_a / (p_bs Tr(H H^H) + sigma2)` on `||z||^2`.
pub fn power_budget(h: &CMat, p_bs: f64, sigma2: f64, p_a: f64) -> Result<f64> {
    if !(p_a > 0.0) {
        return Err(Error::InvalidInput(format!("reflection power must be positive, got {p_a}")));
    }
    let denom = p_bs * h.norm_squared() + sigma2;
    if !(denom > 0.0) {
        return Err(Error::InvalidInput("budget denominator is zero".into()));
    }
    Ok(p_a / denom)
}

fn column_block(h: &CMat, k: usize, width: usize) -> CMat {
    h.columns(k * width, width).into_owned()
}

pub fn build_mu_sdr(channels: &ChannelSet, config: &SystemConfig) -> Result<MuSdrMatrices> {
    channels.check(config, Link::Downlink)?;
    let k_users = config.users;
    if !config.tx_antennas.is_multiple_of(k_users) {
        return Err(Error::DimensionMismatch(format!(
            "K={k_users} does not divide T_x={}",
            config.tx_antennas
        )));
    }
    let width = config.antennas_per_user();
    let a: Vec<CMat> = (0..k_users)
        .map(|i| {
            let hi = column_block(&channels.h, i, width);
            &hi * hi.adjoint()
        })
        .collect();
    let mut q_cross = Vec::with_capacity(k_users);
    let mut q_m = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let g = channels.g_row(k);
        let b = &g * g.adjoint();
        q_cross.push(a.iter().map(|ai| hermitize(&ai.component_mul(&b))).collect::<Vec<_>>());
        q_m.push(CMat::from_diagonal(
            &g.map(|c| Complex64::from(config.sigma_v2 * c.norm_sqr())),
        ));
    }
    let q_k = (0..k_users).map(|k| q_cross[k][k].clone()).collect();
    let trace_cap = power_budget(&channels.h, config.p_bs, config.budget_sigma2(), config.p_a)?;
    Ok(MuSdrMatrices {
        q_k,
        q_cross,
        q_m,
        trace_cap,
        p_k: config.p_bs / k_users as f64,
        sigma_s2: config.sigma_s2,
    })
}

/// SINR of every user for reflection vector `z`, evaluated directly from the
/// received signal model with the RIS noise taken in expectation.
pub fn sinr_mu(channels: &ChannelSet, z: &ReflectionVector, config: &SystemConfig) -> Result<Vec<f64>> {
    channels.check(config, Link::Downlink)?;
    if z.len() != config.n_ris {
        return Err(Error::DimensionMismatch(format!(
            "reflection vector has length {}, expected N={}",
            z.len(),
            config.n_ris
        )));
    }
    let psi = z.psi();
    let width = config.antennas_per_user();
    let p_k = config.p_bs / config.users as f64;
    let mut out = Vec::with_capacity(config.users);
    for k in 0..config.users {
        let g = channels.g_row(k);
        // g_k Psi, then times H
        let g_psi = g.component_mul(&psi);
        let row = g_psi.transpose() * &channels.h;
        let mut signal = 0.0;
        let mut interference = 0.0;
        for (j, c) in row.iter().enumerate() {
            if j / width == k {
                signal += c.norm_sqr();
            } else {
                interference += c.norm_sqr();
            }
        }
        let ris_noise = config.sigma_v2 * g_psi.norm_squared();
        out.push(p_k * signal / (p_k * interference + ris_noise + config.sigma_s2));
    }
    Ok(out)
}

/// `sum_k log2(1 + gamma_k)` in bits/s/Hz.
pub fn sum_rate(sinrs: &[f64]) -> Result<f64> {
    if let Some(bad) = sinrs.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::InvalidInput(format!("SINR must be nonnegative, got {bad}")));
    }
    Ok(sinrs.iter().map(|g| g.ln_1p() / std::f64::consts::LN_2).sum())
}

/// SINR constraints in the normalized variable `Zn = Z / trace_cap`, plus
/// `Tr(Zn) <= 1`.
fn sinr_constraints(mats: &MuSdrMatrices, gammas: &[f64]) -> Vec<Constraint> {
    let n = mats.q_k[0].nrows();
    let cap = Complex64::from(mats.trace_cap);
    let mut rows: Vec<Constraint> = (0..mats.users())
        .map(|k| {
            let g = Complex64::from(gammas[k]);
            let p = Complex64::from(mats.p_k);
            let a = (&mats.q_k[k] * p - (mats.interference(k) * p + &mats.q_m[k]) * g) * cap;
            Constraint::geq(a, gammas[k] * mats.sigma_s2)
        })
        .collect();
    rows.push(Constraint::leq(identity(n), 1.0));
    rows
}

/// Rounding criterion: worst ratio of achieved to target SINR.
struct TargetEvaluator<'a> {
    mats: &'a MuSdrMatrices,
    interference: Vec<CMat>,
    gammas: &'a [f64],
}

impl<'a> TargetEvaluator<'a> {
    fn new(mats: &'a MuSdrMatrices, gammas: &'a [f64]) -> Self {
        let interference = (0..mats.users()).map(|k| mats.interference(k)).collect();
        Self { mats, interference, gammas }
    }

    fn sinrs(&self, z: &CVec) -> Vec<f64> {
        let m = self.mats;
        (0..m.users())
            .map(|k| {
                let signal = m.p_k * quad_form(&m.q_k[k], z);
                let rest = m.p_k * quad_form(&self.interference[k], z) + quad_form(&m.q_m[k], z);
                signal / (rest + m.sigma_s2)
            })
            .collect()
    }
}

impl CandidateEvaluator for TargetEvaluator<'_> {
    fn score(&self, z: &CVec) -> f64 {
        let sinrs = self.sinrs(z);
        let with_targets = self.gammas.iter().any(|&g| g > 0.0);
        sinrs
            .iter()
            .zip(self.gammas)
            .filter(|(_, &g)| !with_targets || g > 0.0)
            .map(|(s, &g)| if with_targets { s / g } else { *s })
            .fold(f64::INFINITY, f64::min)
    }

    fn violation(&self, z: &CVec) -> f64 {
        self.sinrs(z)
            .iter()
            .zip(self.gammas)
            .filter(|(_, &g)| g > 0.0)
            .map(|(s, &g)| (1.0 - s / g).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Relaxed feasibility check for SINR targets. The returned `Z` is in
/// physical units, `Tr(Z) <= trace_cap`.
pub fn relaxed_feasibility(mats: &MuSdrMatrices, gammas: &[f64]) -> Result<SdpSolution> {
    if gammas.len() != mats.users() {
        return Err(Error::DimensionMismatch(format!(
            "{} SINR targets for {} users",
            gammas.len(),
            mats.users()
        )));
    }
    if let Some(bad) = gammas.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput(format!("SINR target must be finite and nonnegative, got {bad}")));
    }
    let mut sol = solve_feasibility(&sinr_constraints(mats, gammas))?;
    sol.z *= Complex64::from(mats.trace_cap);
    Ok(sol)
}

fn round<R: Rng + ?Sized>(
    mats: &MuSdrMatrices,
    z_mat: &CMat,
    gammas: &[f64],
    config: &SystemConfig,
    rng: &mut R,
) -> Result<RoundingOutcome> {
    let evaluator = TargetEvaluator::new(mats, gammas);
    if config.single_draw {
        let (u, lambda) = hermitian_eig(&hermitize(z_mat))?;
        let mut z: CVec = u.column(0).into_owned();
        let norm = z.norm_squared();
        if !(lambda[0] > 0.0) || !(norm > 0.0) {
            return Err(Error::Numerical("relaxed matrix is numerically zero".into()));
        }
        z *= Complex64::from((mats.trace_cap / norm).sqrt());
        let violation = evaluator.violation(&z);
        return Ok(RoundingOutcome {
            score: evaluator.score(&z),
            violation,
            feasible: violation <= ROUNDING_FEASIBILITY_TOL,
            z,
            candidates: 1,
        });
    }
    gaussian_randomization(
        z_mat,
        mats.trace_cap,
        &evaluator,
        config.sdr_candidates,
        ROUNDING_FEASIBILITY_TOL,
        rng,
    )
}

/// Designs `z` for the SINR targets `gamma_targets`: relaxed feasibility
/// followed by rounding. Infeasible targets give [`Error::Infeasible`].
pub fn optimize_reflection_mu<R: Rng + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    gamma_targets: &[f64],
    rng: &mut R,
) -> Result<(ReflectionVector, SdpSolution)> {
    let mats = build_mu_sdr(channels, config)?;
    let relaxed = relaxed_feasibility(&mats, gamma_targets)?;
    if relaxed.status == SdpStatus::Infeasible {
        return Err(Error::Infeasible(
            relaxed
                .infeasibility_reason
                .clone()
                .unwrap_or_else(|| "SINR targets cannot be met".into()),
        ));
    }
    let rounded = round(&mats, &relaxed.z, gamma_targets, config, rng)?;
    Ok((ReflectionVector::new(rounded.z), relaxed))
}

#[derive(Debug, Clone)]
pub struct MaxMinOutcome {
    /// Largest common SINR target (linear) the relaxation supports.
    pub gamma_star: f64,
    pub z: ReflectionVector,
    /// Relaxed solution at `gamma_star`.
    pub relaxed: SdpSolution,
    /// SINRs of the rounded `z`.
    pub sinrs: Vec<f64>,
    /// SINRs of the relaxed `Z`.
    pub relaxed_sinrs: Vec<f64>,
    /// Smallest common target known to be infeasible for the relaxation,
    /// or the interference-free bound; no rounded `z` can give every user
    /// more than this.
    pub gamma_upper: f64,
    pub bisection_steps: usize,
}

/// Common-target bisection in dB over `[gamma_lo, gamma_hi]`, then one
/// rounding of the relaxed solution at the largest feasible target.
pub fn max_min_sinr<R: Rng + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<MaxMinOutcome> {
    let bis = config.bisection;
    if !(bis.gamma_hi_db > bis.gamma_lo_db) || !(bis.tol_db > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bisection needs gamma_lo < gamma_hi and tol > 0, got [{}, {}] dB, tol {}",
            bis.gamma_lo_db, bis.gamma_hi_db, bis.tol_db
        )));
    }
    let mats = build_mu_sdr(channels, config)?;
    let k = mats.users();
    let test = |gamma_db: f64| -> Result<Option<SdpSolution>> {
        let sol = relaxed_feasibility(&mats, &vec![db_to_linear(gamma_db); k])?;
        Ok(match sol.status {
            SdpStatus::Infeasible => None,
            _ => Some(sol),
        })
    };

    let mut lo = bis.gamma_lo_db;
    let mut best = test(lo)?.ok_or_else(|| {
        Error::Infeasible(format!("lower bisection target {lo} dB is already infeasible"))
    })?;
    // No user can beat its interference-free, noise-only bound.
    let bound = (0..k)
        .map(|i| {
            let top = hermitian_eig(&mats.q_k[i]).map(|(_, l)| l[0]).unwrap_or(0.0);
            mats.p_k * mats.trace_cap * top / mats.sigma_s2
        })
        .fold(f64::INFINITY, f64::min);
    let mut upper_db = linear_to_db(bound);
    let mut hi = bis.gamma_hi_db.min(upper_db + bis.tol_db);
    let mut steps = 1;
    if hi <= lo {
        hi = lo;
    } else {
        steps += 1;
        match test(hi)? {
            Some(sol) => {
                lo = hi;
                best = sol;
            }
            None => upper_db = upper_db.min(hi),
        }
    }
    while hi - lo > bis.tol_db && steps < bis.max_iter {
        let mid = 0.5 * (lo + hi);
        steps += 1;
        match test(mid)? {
            Some(sol) => {
                lo = mid;
                best = sol;
            }
            None => {
                hi = mid;
                upper_db = upper_db.min(mid);
            }
        }
    }
    let gamma_star = db_to_linear(lo);
    let gammas = vec![gamma_star; k];
    let rounded = round(&mats, &best.z, &gammas, config, rng)?;
    let z = ReflectionVector::new(rounded.z);
    let sinrs = sinr_mu(channels, &z, config)?;
    let relaxed_sinrs = mats.sinr(&best.z);
    Ok(MaxMinOutcome {
        gamma_star,
        z,
        relaxed: best,
        sinrs,
        relaxed_sinrs,
        gamma_upper: db_to_linear(upper_db.max(lo)),
        bisection_steps: steps,
    })
}
