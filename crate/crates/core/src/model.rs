//! System configuration, stochastic channels, unit conversions and M-PSK.
//!
//! Every power held by [`SystemConfig`] is linear (watts). Conversion from
//! dBm happens once, where a configuration is assembled; nothing below this
//! module works in decibels except the reference path loss `c0_db`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_watts: f64) -> f64 {
    10.0 * p_watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Distance-dependent attenuation `C0 * d^-beta`, with `C0` given in dB.
pub fn path_loss(c0_db: f64, d: f64, beta: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidInput(format!(
            "path-loss distance must be positive and finite, got {d}"
        )));
    }
    Ok(db_to_linear(c0_db) * d.powf(-beta))
}

/// Bisection knobs for the common SINR target, all in dB except `max_iter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub gamma_lo_db: f64,
    pub gamma_hi_db: f64,
    pub max_iter: usize,
    pub tol_db: f64,
}

impl Default for Bisection {
    fn default() -> Self {
        Self {
            gamma_lo_db: -30.0,
            gamma_hi_db: 60.0,
            max_iter: 40,
            tol_db: 0.01,
        }
    }
}

/// Which noise variance enters the reflection-power budget denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetNoise {
    /// Receiver (static) noise, as the budget is usually printed.
    #[default]
    Static,
    /// Amplifier noise of the active elements.
    Amplifier,
}

/// Which receiver population the RIS serves: `K` single-antenna users on the
/// downlink, or the `R_x` antennas of one receive-IM receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Downlink,
    ReceiveIm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_ris: usize,
    pub tx_antennas: usize,
    pub users: usize,
    pub rx_antennas: usize,
    pub mod_order: usize,
    /// Total power `P_T = P_BS + P_A` in watts. For the direct-link
    /// baselines this is the transmitter power.
    pub p_total: f64,
    /// Transmitter power `P_BS` in watts.
    pub p_bs: f64,
    /// Reflection power budget `P_A` of the active RIS in watts.
    pub p_a: f64,
    pub c0_db: f64,
    pub beta_t: f64,
    pub beta_k: f64,
    pub beta_d: f64,
    pub d_t: f64,
    pub d_k: f64,
    pub d_d: f64,
    /// Static receiver noise variance in watts.
    pub sigma_s2: f64,
    /// Active-element amplifier noise variance in watts.
    pub sigma_v2: f64,
    pub trials: usize,
    pub seed: u64,
    pub sdr_candidates: usize,
    /// Draw exactly one randomization candidate, without best-of-G selection.
    pub single_draw: bool,
    pub delta_r: f64,
    pub bisection: Bisection,
    pub budget_noise: BudgetNoise,
    /// Frames transmitted per channel realization in BER experiments.
    pub frames_per_channel: usize,
}

impl Default for SystemConfig {
    /// Geometry and noise of the reference simulation setup: 16 elements,
    /// two users on two transmit antennas, QPSK, `P_BS = 0 dBm`,
    /// `P_A = 10 dBm`.
    fn default() -> Self {
        let p_bs = dbm_to_watts(0.0);
        let p_a = dbm_to_watts(10.0);
        Self {
            n_ris: 16,
            tx_antennas: 2,
            users: 2,
            rx_antennas: 2,
            mod_order: 4,
            p_total: p_bs + p_a,
            p_bs,
            p_a,
            c0_db: -30.0,
            beta_t: 2.2,
            beta_k: 2.8,
            beta_d: 3.5,
            d_t: 20.0,
            d_k: 30.0,
            d_d: 50.0,
            sigma_s2: dbm_to_watts(-90.0),
            sigma_v2: dbm_to_watts(-90.0),
            trials: 100,
            seed: 1,
            sdr_candidates: 200,
            single_draw: false,
            delta_r: 100.0,
            bisection: Bisection::default(),
            budget_noise: BudgetNoise::Static,
            frames_per_channel: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("n_ris", self.n_ris),
            ("tx_antennas", self.tx_antennas),
            ("users", self.users),
            ("rx_antennas", self.rx_antennas),
            ("mod_order", self.mod_order),
            ("trials", self.trials),
            ("sdr_candidates", self.sdr_candidates),
            ("frames_per_channel", self.frames_per_channel),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        if self.users > 0 && !self.tx_antennas.is_multiple_of(self.users) {
            problems.push(format!(
                "users ({}) must divide tx_antennas ({})",
                self.users, self.tx_antennas
            ));
        }
        if !self.mod_order.is_power_of_two() {
            problems.push(format!("mod_order {} is not a power of two", self.mod_order));
        }
        if !self.rx_antennas.is_power_of_two() {
            problems.push(format!(
                "rx_antennas {} is not a power of two",
                self.rx_antennas
            ));
        }
        for (name, v) in [("p_bs", self.p_bs), ("p_a", self.p_a)] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be a positive finite power, got {v} W"));
            }
        }
        for (name, v) in [("sigma_s2", self.sigma_s2), ("sigma_v2", self.sigma_v2)] {
            if !(v >= 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("d_t", self.d_t), ("d_k", self.d_k), ("d_d", self.d_d)] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.delta_r > 1.0) {
            problems.push(format!("delta_r must exceed 1, got {}", self.delta_r));
        }
        let b = &self.bisection;
        if !(b.gamma_hi_db > b.gamma_lo_db) {
            problems.push(format!(
                "bisection upper bound {} dB must exceed lower bound {} dB",
                b.gamma_hi_db, b.gamma_lo_db
            ));
        }
        if !(b.tol_db > 0.0) || b.max_iter == 0 {
            problems.push("bisection needs tol_db > 0 and max_iter >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    /// Transmit antennas allocated to each user, `T_x / K`.
    pub fn antennas_per_user(&self) -> usize {
        self.tx_antennas / self.users
    }

    pub fn receivers(&self, link: Link) -> usize {
        match link {
            Link::Downlink => self.users,
            Link::ReceiveIm => self.rx_antennas,
        }
    }

    /// Noise variance used in the reflection-power budget.
    pub fn budget_sigma2(&self) -> f64 {
        match self.budget_noise {
            BudgetNoise::Static => self.sigma_s2,
            BudgetNoise::Amplifier => self.sigma_v2,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.mod_order.trailing_zeros() as usize
    }
}

/// Channel matrices of one realization, path loss included.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Transmitter to RIS, `N x T_x`.
    pub h: CMat,
    /// RIS to receivers (users or receive antennas), one row per receiver.
    pub g: CMat,
    /// Direct transmitter to receivers, `receivers x T_x`; baselines only.
    pub f: CMat,
}

impl ChannelSet {
    pub fn n_ris(&self) -> usize {
        self.h.nrows()
    }

    pub fn tx_antennas(&self) -> usize {
        self.h.ncols()
    }

    pub fn receivers(&self) -> usize {
        self.g.nrows()
    }

    /// Row `k` of `g` as a plain vector of length `N`.
    pub fn g_row(&self, k: usize) -> CVec {
        self.g.row(k).transpose()
    }

    pub fn check(&self, config: &SystemConfig, link: Link) -> Result<()> {
        let n = config.n_ris;
        let tx = config.tx_antennas;
        let rx = config.receivers(link);
        let ok = self.h.shape() == (n, tx) && self.g.shape() == (rx, n) && self.f.shape() == (rx, tx);
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "channels h {:?}, g {:?}, f {:?} do not match N={n}, T_x={tx}, receivers={rx}",
                self.h.shape(),
                self.g.shape(),
                self.f.shape()
            )));
        }
        let finite = |m: &CMat| m.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !(finite(&self.h) && finite(&self.g) && finite(&self.f)) {
            return Err(Error::InvalidInput("channel contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// Active-RIS reflection coefficients `z`, with `Psi = diag(z)^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionVector {
    pub z: CVec,
}

impl ReflectionVector {
    pub fn new(z: CVec) -> Self {
        Self { z }
    }

    pub fn zeros(n: usize) -> Self {
        Self { z: CVec::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.z.norm_squared()
    }

    /// Element amplitudes `alpha_n`.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.z.iter().map(|c| c.norm()).collect()
    }

    /// Diagonal of the reflection matrix, `psi_n = conj(z_n)`.
    pub fn psi(&self) -> CVec {
        self.z.map(|c| c.conj())
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        let rot = Complex64::from_polar(1.0, theta);
        Self { z: self.z.map(|c| c * rot) }
    }
}

/// One circularly-symmetric `CN(0, 1)` draw.
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// i.i.d. Rayleigh matrix, entries `CN(0, 1)`, filled column by column.
pub fn sample_rayleigh<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = sample_cn(rng);
        }
    }
    m
}

/// Draws `H`, `G` and `F` (in that order) and applies the path losses.
pub fn generate_channels<R: Rng + ?Sized>(
    config: &SystemConfig,
    link: Link,
    rng: &mut R,
) -> Result<ChannelSet> {
    let n = config.n_ris;
    let tx = config.tx_antennas;
    let rx = config.receivers(link);
    if n == 0 || tx == 0 || rx == 0 {
        return Err(Error::InvalidConfig("channel dimensions must be positive".into()));
    }
    let l_t = path_loss(config.c0_db, config.d_t, config.beta_t)?;
    let l_k = path_loss(config.c0_db, config.d_k, config.beta_k)?;
    let l_d = path_loss(config.c0_db, config.d_d, config.beta_d)?;

    let h = sample_rayleigh(n, tx, rng) * Complex64::from(l_t.sqrt());
    let g = sample_rayleigh(rx, n, rng) * Complex64::from(l_k.sqrt());
    let f = sample_rayleigh(rx, tx, rng) * Complex64::from(l_d.sqrt());
    Ok(ChannelSet { h, g, f })
}

#[cfg(test)]
fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

fn check_order(m: usize) -> Result<()> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "modulation order {m} must be a power of two >= 2"
        )));
    }
    Ok(())
}

/// Phase position of a Gray-labelled symbol: the point at position `p`
/// carries the label `gray(p)`, so circle neighbours differ in one bit.
fn psk_point(index: usize, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * gray_inverse(index) as f64 / m as f64)
}

/// Gray-labelled M-PSK symbol for `index`, on the unit circle.
pub fn psk_modulate(index: usize, m: usize) -> Result<Complex64> {
    check_order(m)?;
    if index >= m {
        return Err(Error::InvalidInput(format!(
            "symbol index {index} out of range for M={m}"
        )));
    }
    Ok(psk_point(index, m))
}

/// Hard decision: the index whose point maximizes `Re(y conj(point))`, ties
/// to the smaller index. `y = 0` therefore decides index 0.
pub fn psk_demodulate(y: Complex64, m: usize) -> Result<usize> {
    check_order(m)?;
    let mut best = 0usize;
    let mut best_metric = f64::NEG_INFINITY;
    for index in 0..m {
        let point = psk_point(index, m);
        let metric = (y * point.conj()).re;
        if metric > best_metric {
            best_metric = metric;
            best = index;
        }
    }
    Ok(best)
}

/// The full constellation in index order.
pub fn psk_constellation(m: usize) -> Result<Vec<Complex64>> {
    (0..m).map(|i| psk_modulate(i, m)).collect()
}

/// Independent per-trial random stream. The seed is a hash of
/// `(master, trial, lane)`, so the stream a trial sees does not depend on
/// which worker runs it or in what order.
pub fn substream(master: u64, trial: u64, lane: u64) -> ChaCha8Rng {
    let mut state = master
        ^ splitmix64(trial.wrapping_add(0x5851_f42d_4c95_7f2d))
        ^ splitmix64(lane.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(1));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lanes used to split one trial's randomness by purpose.
pub mod lanes {
    pub const CHANNEL: u64 = 0;
    pub const ROUNDING: u64 = 1;
    pub const DATA: u64 = 2;
    pub const NOISE: u64 = 3;
}
