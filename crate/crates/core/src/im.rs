//! Receive index modulation through the active RIS.
//!
//! Each frame carries `log2(R_x)` spatial bits choosing the receive antenna
//! `r` that the RIS focuses on, and `T_x log2(M)` bits on the PSK vector `x`
//! sent from the transmit antennas. The RIS switches to the reflection
//! vector `z_r`, optimized so antenna `r` sees far more power than the
//! others. This module holds the codebook design, signal synthesis, the
//! joint ML and greedy detectors and the BER accounting, together with the
//! zero-forcing receive spatial modulation (RSM) baseline.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{identity, quad_form};
use crate::model::{
    generate_channels, lanes, psk_demodulate, psk_modulate, sample_cn, substream, CMat, CVec,
    ChannelSet, Link, ReflectionVector, SystemConfig,
};
use crate::mu::{power_budget, zf_precoder};
use crate::sdp::{gaussian_randomization, solve_sdp, CandidateEvaluator, Constraint, SdpProblem};

/// Largest hypothesis count a detector will enumerate.
pub const MAX_HYPOTHESES: u64 = 1 << 20;

/// Times `delta_r` is halved when an antenna's dominance target fails.
pub const DELTA_HALVINGS: usize = 5;

/// Relative dominance shortfall tolerated for a rounded reflection vector.
pub const DOMINANCE_TOL: f64 = 1e-6;

/// `T_x log2(M) + log2(R_x)` bits per channel use.
pub fn im_spectral_efficiency(t_x: usize, m: usize, r_x: usize) -> Result<usize> {
    for (name, v) in [("M", m), ("R_x", r_x)] {
        if v == 0 || !v.is_power_of_two() {
            return Err(Error::InvalidInput(format!("{name}={v} is not a power of two")));
        }
    }
    Ok(t_x * m.trailing_zeros() as usize + r_x.trailing_zeros() as usize)
}

/// Frame dimensions: transmit antennas, PSK order and receive antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImLayout {
    pub t_x: usize,
    pub m: usize,
    pub r_x: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImFrame {
    /// Target receive antenna.
    pub r: usize,
    /// PSK symbol index per transmit antenna.
    pub symbols: Vec<usize>,
    /// Transmit vector with `||x||^2 = 1`.
    pub x: CVec,
}

impl ImLayout {
    pub fn new(t_x: usize, m: usize, r_x: usize) -> Result<Self> {
        if t_x == 0 {
            return Err(Error::InvalidInput("T_x must be at least 1".into()));
        }
        im_spectral_efficiency(t_x, m, r_x)?;
        Ok(Self { t_x, m, r_x })
    }

    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        Self::new(config.tx_antennas, config.mod_order, config.rx_antennas)
    }

    pub fn spatial_bits(&self) -> usize {
        self.r_x.trailing_zeros() as usize
    }

    pub fn symbol_bits(&self) -> usize {
        self.m.trailing_zeros() as usize
    }

    pub fn bits(&self) -> usize {
        self.spatial_bits() + self.t_x * self.symbol_bits()
    }

    /// Number of symbol vectors, `M^{T_x}`, or `None` on overflow.
    pub fn vector_count(&self) -> Option<u64> {
        (self.m as u64).checked_pow(self.t_x as u32)
    }

    /// The transmit vector for symbol indices `symbols`.
    pub fn vector(&self, symbols: &[usize]) -> Result<CVec> {
        let scale = 1.0 / (self.t_x as f64).sqrt();
        let mut x = CVec::zeros(self.t_x);
        for (xi, &s) in x.iter_mut().zip(symbols) {
            *xi = psk_modulate(s, self.m)? * scale;
        }
        Ok(x)
    }

    /// Symbol indices of the `index`-th vector in lexicographic order, the
    /// first antenna most significant.
    pub fn symbols_of(&self, mut index: u64) -> Vec<usize> {
        let mut out = vec![0; self.t_x];
        for slot in out.iter_mut().rev() {
            *slot = (index % self.m as u64) as usize;
            index /= self.m as u64;
        }
        out
    }

    /// Spatial bits select `r` (natural binary, MSB first); each following
    /// group of `log2(M)` bits is one Gray-labelled PSK symbol.
    pub fn map_bits(&self, bits: &[u8]) -> Result<ImFrame> {
        if bits.len() != self.bits() {
            return Err(Error::InvalidInput(format!(
                "frame needs {} bits, got {}",
                self.bits(),
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::InvalidInput(format!("bit value {b} is not 0 or 1")));
        }
        let to_int = |chunk: &[u8]| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let (spatial, rest) = bits.split_at(self.spatial_bits());
        let r = to_int(spatial);
        let symbols: Vec<usize> = if self.symbol_bits() == 0 {
            vec![0; self.t_x]
        } else {
            rest.chunks(self.symbol_bits()).map(to_int).collect()
        };
        let x = self.vector(&symbols)?;
        Ok(ImFrame { r, symbols, x })
    }

    /// Inverse of [`ImLayout::map_bits`]; `x` is hard-decided per antenna.
    pub fn unmap_frame(&self, r: usize, x: &CVec) -> Result<Vec<u8>> {
        if r >= self.r_x || x.len() != self.t_x {
            return Err(Error::InvalidInput(format!(
                "antenna {r} or vector length {} outside layout {self:?}",
                x.len()
            )));
        }
        let mut symbols = Vec::with_capacity(self.t_x);
        for xi in x.iter() {
            symbols.push(psk_demodulate(*xi, self.m)?);
        }
        Ok(self.bits_of(r, &symbols))
    }

    pub fn bits_of(&self, r: usize, symbols: &[usize]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(self.bits());
        push_bits(&mut bits, r, self.spatial_bits());
        for &s in symbols {
            push_bits(&mut bits, s, self.symbol_bits());
        }
        bits
    }
}

fn push_bits(out: &mut Vec<u8>, value: usize, width: usize) {
    for i in (0..width).rev() {
        out.push(((value >> i) & 1) as u8);
    }
}

/// Reflection vectors, one per receive antenna.
#[derive(Debug, Clone)]
pub struct ImCodebook {
    pub reflections: Vec<ReflectionVector>,
    /// Dominance factor finally used for each antenna.
    pub delta_r: Vec<f64>,
    /// Whether the rounded vector met its dominance constraint.
    pub dominant: Vec<bool>,
    pub trace_cap: f64,
}

/// `Delta_r = Theta_r Theta_r^H` with `Theta_r = diag(g_r) H`, so that
/// `z^H Delta_r z = ||g_r Psi H||^2`.
pub fn antenna_gain_matrix(channels: &ChannelSet, r: usize) -> CMat {
    let g = channels.g_row(r);
    let mut theta = channels.h.clone();
    for (n, gn) in g.iter().enumerate() {
        theta.row_mut(n).iter_mut().for_each(|c| *c *= gn);
    }
    let d = &theta * theta.adjoint();
    crate::linalg::hermitize(&d)
}

struct Dominance<'a> {
    target: &'a CMat,
    others: CMat,
    delta: f64,
}

impl CandidateEvaluator for Dominance<'_> {
    fn score(&self, z: &CVec) -> f64 {
        quad_form(self.target, z)
    }

    fn violation(&self, z: &CVec) -> f64 {
        let wanted = self.delta * quad_form(&self.others, z);
        if wanted <= 0.0 {
            return 0.0;
        }
        (1.0 - quad_form(self.target, z) / wanted).max(0.0)
    }
}

/// Solves, for every receive antenna `r`, `max Tr(Delta_r Z)` subject to
/// `Tr(Delta_r Z) >= delta_r sum_{i != r} Tr(Delta_i Z)` and the trace cap,
/// then rounds by Gaussian randomization. When no rounded candidate meets
/// the dominance target, `delta_r` is halved and the antenna re-solved, up
/// to [`DELTA_HALVINGS`] times; after that the least-violating candidate is
/// kept and flagged. A relaxation with no nonzero solution is an error.
pub fn build_im_codebook<R: Rng + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<ImCodebook> {
    channels.check(config, Link::ReceiveIm)?;
    if !(config.delta_r > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta_r must exceed 1, got {}",
            config.delta_r
        )));
    }
    let n = config.n_ris;
    let r_x = config.rx_antennas;
    let trace_cap = power_budget(&channels.h, config.p_bs, config.budget_sigma2(), config.p_a)?;
    let deltas: Vec<CMat> = (0..r_x).map(|r| antenna_gain_matrix(channels, r)).collect();
    let total = deltas.iter().fold(CMat::zeros(n, n), |acc, d| acc + d);

    let mut codebook = ImCodebook {
        reflections: Vec::with_capacity(r_x),
        delta_r: Vec::with_capacity(r_x),
        dominant: Vec::with_capacity(r_x),
        trace_cap,
    };
    for (r, target) in deltas.iter().enumerate() {
        let others = &total - target;
        let mut delta = config.delta_r;
        let mut attempt = 0;
        loop {
            let mut constraints = vec![Constraint::leq(identity(n), 1.0)];
            if r_x > 1 {
                constraints.push(Constraint::geq(
                    target - &others * Complex64::from(delta),
                    0.0,
                ));
            }
            let problem = SdpProblem::new(target.clone(), constraints)?;
            let sol = solve_sdp(&problem)?;
            let scale = target.norm();
            let usable = sol.is_optimal() && sol.objective_value > 1e-9 * scale;
            let last = attempt == DELTA_HALVINGS;
            if !usable {
                if last {
                    return Err(Error::AntennaInfeasible {
                        antenna: r,
                        attempts: attempt + 1,
                    });
                }
            } else {
                let evaluator = Dominance {
                    target,
                    others: others.clone(),
                    delta,
                };
                let z_mat = &sol.z * Complex64::from(trace_cap);
                let rounded = gaussian_randomization(
                    &z_mat,
                    trace_cap,
                    &evaluator,
                    config.sdr_candidates,
                    DOMINANCE_TOL,
                    rng,
                )?;
                if rounded.feasible || last {
                    codebook.reflections.push(ReflectionVector::new(rounded.z));
                    codebook.delta_r.push(delta);
                    codebook.dominant.push(rounded.feasible);
                    break;
                }
            }
            delta *= 0.5;
            attempt += 1;
        }
    }
    Ok(codebook)
}

/// Noiseless responses of one channel realization: for each target antenna
/// `r`, the matrix `E_r = G Psi_r H` (`R_x x T_x`) and `G Psi_r` for the RIS
/// noise.
#[derive(Debug, Clone)]
pub struct ImResponse {
    pub effective: Vec<CMat>,
    pub ris_gain: Vec<CMat>,
    pub p_bs: f64,
}

impl ImResponse {
    pub fn new(channels: &ChannelSet, codebook: &ImCodebook, p_bs: f64) -> Result<Self> {
        let r_x = channels.receivers();
        if codebook.reflections.len() != r_x {
            return Err(Error::DimensionMismatch(format!(
                "codebook has {} entries for {r_x} receive antennas",
                codebook.reflections.len()
            )));
        }
        let mut effective = Vec::with_capacity(r_x);
        let mut ris_gain = Vec::with_capacity(r_x);
        for z in &codebook.reflections {
            if z.len() != channels.n_ris() {
                return Err(Error::DimensionMismatch(format!(
                    "reflection length {} for N={}",
                    z.len(),
                    channels.n_ris()
                )));
            }
            let mut g_psi = channels.g.clone();
            for (n, psi) in z.psi().iter().enumerate() {
                g_psi.column_mut(n).iter_mut().for_each(|c| *c *= psi);
            }
            effective.push(&g_psi * &channels.h);
            ris_gain.push(g_psi);
        }
        Ok(Self { effective, ris_gain, p_bs })
    }

    pub fn receivers(&self) -> usize {
        self.effective.len()
    }

    /// `y = sqrt(P_BS) G Psi_r H x + G Psi_r v + n` with `v ~ CN(0, sigma_v2 I)`
    /// and `n ~ CN(0, sigma_s2 I)`; `v` is drawn before `n`.
    pub fn receive<R: Rng + ?Sized>(
        &self,
        frame: &ImFrame,
        sigma_v2: f64,
        sigma_s2: f64,
        rng: &mut R,
    ) -> Result<CVec> {
        if frame.r >= self.receivers() || frame.x.len() != self.effective[0].ncols() {
            return Err(Error::DimensionMismatch("frame does not fit the channel".into()));
        }
        let gain = &self.ris_gain[frame.r];
        let v = CVec::from_fn(gain.ncols(), |_, _| sample_cn(rng) * sigma_v2.sqrt());
        let noise = CVec::from_fn(gain.nrows(), |_, _| sample_cn(rng) * sigma_s2.sqrt());
        Ok(&self.effective[frame.r] * &frame.x * Complex64::from(self.p_bs.sqrt()) + gain * v + noise)
    }
}

pub fn received_signal_im<R: Rng + ?Sized>(
    channels: &ChannelSet,
    codebook: &ImCodebook,
    frame: &ImFrame,
    rng: &mut R,
    p_bs: f64,
    sigma_v2: f64,
    sigma_s2: f64,
) -> Result<CVec> {
    ImResponse::new(channels, codebook, p_bs)?.receive(frame, sigma_v2, sigma_s2, rng)
}

/// Work done by one detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorCounters {
    /// `(r, x)` or `x` hypotheses whose metric was evaluated.
    pub hypotheses: u64,
    /// Per-antenna residual terms summed across all hypotheses.
    pub antenna_terms: u64,
    /// Received magnitudes `|y_j|` examined for the antenna decision.
    pub magnitudes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub r: usize,
    pub symbols: Vec<usize>,
    pub counters: DetectorCounters,
}

/// Exhaustive detector tables for one realization: every `sqrt(P_BS) E_r x`.
#[derive(Debug, Clone)]
pub struct Detector {
    layout: ImLayout,
    /// `predictions[r][v]` is the noiseless `R_x` vector for antenna `r`
    /// and symbol vector `v`.
    predictions: Vec<Vec<CVec>>,
}

impl Detector {
    pub fn new(layout: ImLayout, response: &ImResponse) -> Result<Self> {
        let vectors = layout.vector_count().unwrap_or(u64::MAX);
        let count = vectors.saturating_mul(layout.r_x as u64);
        if count > MAX_HYPOTHESES {
            return Err(Error::TooManyHypotheses { count, limit: MAX_HYPOTHESES });
        }
        if response.receivers() != layout.r_x {
            return Err(Error::DimensionMismatch("response and layout disagree on R_x".into()));
        }
        let xs = (0..vectors)
            .map(|v| layout.vector(&layout.symbols_of(v)))
            .collect::<Result<Vec<_>>>()?;
        let amp = Complex64::from(response.p_bs.sqrt());
        let predictions = response
            .effective
            .iter()
            .map(|e| xs.iter().map(|x| e * x * amp).collect())
            .collect();
        Ok(Self { layout, predictions })
    }

    pub fn layout(&self) -> ImLayout {
        self.layout
    }

    /// Joint ML: `argmin_{r, x} sum_j |y_j - sqrt(P_BS) g_j Psi_r H x|^2`,
    /// ties to the smallest `r`, then the smallest vector index.
    pub fn ml(&self, y: &CVec) -> Detection {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        let mut counters = DetectorCounters::default();
        for (r, table) in self.predictions.iter().enumerate() {
            for (v, pred) in table.iter().enumerate() {
                let metric = (y - pred).norm_squared();
                counters.hypotheses += 1;
                counters.antenna_terms += y.len() as u64;
                if metric < best.0 {
                    best = (metric, r, v);
                }
            }
        }
        Detection {
            r: best.1,
            symbols: self.layout.symbols_of(best.2 as u64),
            counters,
        }
    }

    /// Greedy: `r = argmax_j |y_j|` (ties to the smallest `j`), then
    /// `x = argmin_x |y_r - sqrt(P_BS) g_r Psi_r H x|^2`.
    pub fn greedy(&self, y: &CVec) -> Detection {
        let mut counters = DetectorCounters::default();
        let mut r = 0;
        let mut peak = f64::NEG_INFINITY;
        for (j, yj) in y.iter().enumerate() {
            counters.magnitudes += 1;
            if yj.norm_sqr() > peak {
                peak = yj.norm_sqr();
                r = j;
            }
        }
        let mut best = (f64::INFINITY, 0usize);
        for (v, pred) in self.predictions[r].iter().enumerate() {
            let metric = (y[r] - pred[r]).norm_sqr();
            counters.hypotheses += 1;
            counters.antenna_terms += 1;
            if metric < best.0 {
                best = (metric, v);
            }
        }
        Detection {
            r,
            symbols: self.layout.symbols_of(best.1 as u64),
            counters,
        }
    }
}

pub fn ml_detect(
    y: &CVec,
    channels: &ChannelSet,
    codebook: &ImCodebook,
    layout: ImLayout,
    p_bs: f64,
) -> Result<Detection> {
    let response = ImResponse::new(channels, codebook, p_bs)?;
    Ok(Detector::new(layout, &response)?.ml(y))
}

pub fn greedy_detect(
    y: &CVec,
    channels: &ChannelSet,
    codebook: &ImCodebook,
    layout: ImLayout,
    p_bs: f64,
) -> Result<Detection> {
    let response = ImResponse::new(channels, codebook, p_bs)?;
    Ok(Detector::new(layout, &response)?.greedy(y))
}

/// Bit-error tallies of one block of frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BerCounts {
    pub frames: u64,
    pub bits: u64,
    pub errors_ml: u64,
    pub errors_greedy: u64,
}

impl BerCounts {
    pub fn merge(&mut self, other: &BerCounts) {
        self.frames += other.frames;
        self.bits += other.bits;
        self.errors_ml += other.errors_ml;
        self.errors_greedy += other.errors_greedy;
    }
}

fn random_bits<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<u8> {
    (0..count).map(|_| rng.random_range(0..2u8)).collect()
}

fn bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// Number of channel blocks needed for `config.trials` frames.
pub fn block_count(config: &SystemConfig) -> usize {
    config.trials.div_ceil(config.frames_per_channel)
}

fn frames_in_block(config: &SystemConfig, block: usize) -> usize {
    let start = block * config.frames_per_channel;
    config.frames_per_channel.min(config.trials.saturating_sub(start))
}

/// One channel block of the receive-IM link: fresh channels and codebook,
/// then `frames_per_channel` frames detected by both detectors on the same
/// received signal. Randomness comes from the substreams of `block`.
pub fn ber_block_im(config: &SystemConfig, block: usize) -> Result<BerCounts> {
    let layout = ImLayout::from_config(config)?;
    let trial = block as u64;
    let channels = generate_channels(
        config,
        Link::ReceiveIm,
        &mut substream(config.seed, trial, lanes::CHANNEL),
    )?;
    let codebook = build_im_codebook(
        &channels,
        config,
        &mut substream(config.seed, trial, lanes::ROUNDING),
    )?;
    let response = ImResponse::new(&channels, &codebook, config.p_bs)?;
    let detector = Detector::new(layout, &response)?;
    let mut data = substream(config.seed, trial, lanes::DATA);
    let mut noise = substream(config.seed, trial, lanes::NOISE);
    let mut counts = BerCounts::default();
    for _ in 0..frames_in_block(config, block) {
        let bits = random_bits(layout.bits(), &mut data);
        let frame = layout.map_bits(&bits)?;
        let y = response.receive(&frame, config.sigma_v2, config.sigma_s2, &mut noise)?;
        let ml = detector.ml(&y);
        let greedy = detector.greedy(&y);
        counts.frames += 1;
        counts.bits += bits.len() as u64;
        counts.errors_ml += bit_errors(&bits, &layout.bits_of(ml.r, &ml.symbols));
        counts.errors_greedy += bit_errors(&bits, &layout.bits_of(greedy.r, &greedy.symbols));
    }
    Ok(counts)
}

/// PSK order of the RSM baseline at the same spectral efficiency as the IM
/// layout: one symbol carries all `T_x log2(M)` non-spatial bits.
pub fn rsm_order(layout: ImLayout) -> Result<usize> {
    let bits = layout.t_x * layout.symbol_bits();
    if bits >= usize::BITS as usize || (1u64 << bits) > MAX_HYPOTHESES {
        return Err(Error::TooManyHypotheses {
            count: 1u64.checked_shl(bits as u32).unwrap_or(u64::MAX),
            limit: MAX_HYPOTHESES,
        });
    }
    Ok(1 << bits)
}

/// One channel block of ZF-precoded receive spatial modulation: the
/// transmitter steers one PSK symbol of order [`rsm_order`] to antenna `r`
/// through `W = sqrt(zeta) F^H (F F^H)^{-1}`, with `zeta` set so the average
/// transmit power over `r` equals `P_T`. Detection is joint ML over `(r, s)`.
/// Only the ML counters are filled; `errors_greedy` mirrors them.
pub fn ber_block_rsm(config: &SystemConfig, block: usize) -> Result<BerCounts> {
    let layout = ImLayout::from_config(config)?;
    let order = rsm_order(layout)?;
    let trial = block as u64;
    let channels = generate_channels(
        config,
        Link::ReceiveIm,
        &mut substream(config.seed, trial, lanes::CHANNEL),
    )?;
    let r_x = config.rx_antennas;
    let precoder = zf_precoder(&channels.f, config.p_total * r_x as f64)?;
    let gains = &channels.f * &precoder.w;
    let points = (0..order).map(|s| psk_modulate(s, order)).collect::<Result<Vec<_>>>()?;
    let sym_bits = order.trailing_zeros() as usize;
    let mut data = substream(config.seed, trial, lanes::DATA);
    let mut noise = substream(config.seed, trial, lanes::NOISE);
    let mut counts = BerCounts::default();
    for _ in 0..frames_in_block(config, block) {
        let bits = random_bits(layout.spatial_bits() + sym_bits, &mut data);
        let to_int = |chunk: &[u8]| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let (spatial, rest) = bits.split_at(layout.spatial_bits());
        let (r, s) = (to_int(spatial), to_int(rest));
        let y = CVec::from_fn(r_x, |j, _| {
            gains[(j, r)] * points[s] + sample_cn(&mut noise) * config.sigma_s2.sqrt()
        });
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for rr in 0..r_x {
            for (ss, p) in points.iter().enumerate() {
                let metric = (0..r_x).map(|j| (y[j] - gains[(j, rr)] * p).norm_sqr()).sum::<f64>();
                if metric < best.0 {
                    best = (metric, rr, ss);
                }
            }
        }
        let mut decided = Vec::with_capacity(bits.len());
        push_bits(&mut decided, best.1, layout.spatial_bits());
        push_bits(&mut decided, best.2, sym_bits);
        let errors = bit_errors(&bits, &decided);
        counts.frames += 1;
        counts.bits += bits.len() as u64;
        counts.errors_ml += errors;
        counts.errors_greedy += errors;
    }
    Ok(counts)
}

/// Sequential receive-IM BER run over all blocks of `config`.
pub fn ber_experiment(config: &SystemConfig) -> Result<BerCounts> {
    config.validate()?;
    let mut total = BerCounts::default();
    for block in 0..block_count(config) {
        total.merge(&ber_block_im(config, block)?);
    }
    Ok(total)
}

/// Sequential RSM BER run over all blocks of `config`.
pub fn ber_experiment_rsm(config: &SystemConfig) -> Result<BerCounts> {
    config.validate()?;
    let mut total = BerCounts::default();
    for block in 0..block_count(config) {
        total.merge(&ber_block_rsm(config, block)?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dbm_to_watts, sample_rayleigh};
    use crate::sdp::hermitian_eig;

    fn im_config(n: usize, t_x: usize, r_x: usize, m: usize) -> SystemConfig {
        SystemConfig {
            n_ris: n,
            tx_antennas: t_x,
            users: 1,
            rx_antennas: r_x,
            mod_order: m,
            sdr_candidates: 100,
            ..SystemConfig::default()
        }
    }

    fn realization(cfg: &SystemConfig, trial: u64) -> (ChannelSet, ImCodebook) {
        let ch = generate_channels(cfg, Link::ReceiveIm, &mut substream(cfg.seed, trial, lanes::CHANNEL)).unwrap();
        let cb = build_im_codebook(&ch, cfg, &mut substream(cfg.seed, trial, lanes::ROUNDING)).unwrap();
        (ch, cb)
    }

    #[test]
    fn spectral_efficiency_values() {
        assert_eq!(im_spectral_efficiency(2, 2, 2).unwrap(), 3);
        assert_eq!(im_spectral_efficiency(4, 2, 4).unwrap(), 6);
        assert_eq!(im_spectral_efficiency(1, 2, 1).unwrap(), 1);
        assert!(im_spectral_efficiency(2, 3, 2).is_err());
        assert!(im_spectral_efficiency(2, 2, 3).is_err());
    }

    #[test]
    fn mapping_examples() {
        let layout = ImLayout::new(2, 2, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let f = layout.map_bits(&[0, 0, 0]).unwrap();
        assert_eq!(f.r, 0);
        assert!((f.x[0] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((f.x[1] - Complex64::new(s, 0.0)).norm() < 1e-15);
        let f = layout.map_bits(&[1, 0, 1]).unwrap();
        assert_eq!(f.r, 1);
        assert!((f.x[0] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((f.x[1] - Complex64::new(-s, 0.0)).norm() < 1e-15);
        assert!(layout.map_bits(&[1, 0]).is_err());
        assert!(layout.map_bits(&[1, 0, 2]).is_err());
    }

    #[test]
    fn exhaustive_roundtrip() {
        for (t_x, m, r_x) in [(1, 2, 1), (2, 2, 2), (4, 2, 4), (2, 4, 4), (3, 4, 2), (2, 8, 4), (1, 16, 8), (5, 2, 2)] {
            let layout = ImLayout::new(t_x, m, r_x).unwrap();
            let eta = layout.bits();
            assert!(eta <= 10);
            for pattern in 0..(1usize << eta) {
                let mut bits = Vec::new();
                push_bits(&mut bits, pattern, eta);
                let frame = layout.map_bits(&bits).unwrap();
                assert!((frame.x.norm_squared() - 1.0).abs() < 1e-12);
                assert_eq!(layout.unmap_frame(frame.r, &frame.x).unwrap(), bits);
            }
        }
    }

    #[test]
    fn single_antenna_codebook_is_top_eigenvector() {
        let cfg = im_config(8, 2, 1, 2);
        let (ch, cb) = realization(&cfg, 0);
        let d = antenna_gain_matrix(&ch, 0);
        let (u, _) = hermitian_eig(&d).unwrap();
        let z = &cb.reflections[0].z;
        let overlap = (u.column(0).adjoint() * z)[(0, 0)].norm() / z.norm();
        assert!((overlap - 1.0).abs() < 1e-6, "overlap {overlap}");
        assert!((z.norm_squared() - cb.trace_cap).abs() <= 1e-12 * cb.trace_cap);
    }

    #[test]
    fn gain_matrix_matches_direct_product() {
        let cfg = im_config(6, 3, 2, 2);
        let ch = generate_channels(&cfg, Link::ReceiveIm, &mut substream(4, 0, 0)).unwrap();
        let z = sample_rayleigh(6, 1, &mut substream(4, 0, 9)).column(0).into_owned();
        let psi = CMat::from_diagonal(&z.map(|c| c.conj()));
        for r in 0..2 {
            let direct = (ch.g.rows(r, 1) * &psi * &ch.h).norm_squared();
            let lifted = quad_form(&antenna_gain_matrix(&ch, r), &z);
            assert!((direct - lifted).abs() <= 1e-9 * direct);
        }
    }

    #[test]
    fn dominance_holds_on_most_draws() {
        let cfg = im_config(16, 2, 2, 2);
        let mut dominant = 0;
        let mut total = 0;
        for trial in 0..200 {
            let (ch, cb) = realization(&cfg, trial);
            for (r, z) in cb.reflections.iter().enumerate() {
                assert!((z.norm_sqr() - cb.trace_cap).abs() <= 1e-12 * cb.trace_cap);
                let own = quad_form(&antenna_gain_matrix(&ch, r), &z.z);
                let others_ok = (0..2)
                    .filter(|&i| i != r)
                    .all(|i| own >= quad_form(&antenna_gain_matrix(&ch, i), &z.z));
                total += 1;
                if others_ok {
                    dominant += 1;
                }
            }
        }
        assert!(dominant as f64 >= 0.95 * total as f64, "{dominant}/{total}");
    }

    #[test]
    fn noiseless_signal_and_recovery() {
        let cfg = im_config(16, 2, 2, 2);
        let layout = ImLayout::from_config(&cfg).unwrap();
        let (ch, cb) = realization(&cfg, 3);
        let response = ImResponse::new(&ch, &cb, cfg.p_bs).unwrap();
        let detector = Detector::new(layout, &response).unwrap();
        let mut rng = substream(1, 1, 1);
        for pattern in 0..8 {
            let mut bits = Vec::new();
            push_bits(&mut bits, pattern, 3);
            let frame = layout.map_bits(&bits).unwrap();
            let y = response.receive(&frame, 0.0, 0.0, &mut rng).unwrap();
            let psi = CMat::from_diagonal(&cb.reflections[frame.r].psi());
            let expect = &ch.g * psi * &ch.h * &frame.x * Complex64::from(cfg.p_bs.sqrt());
            assert!((&y - expect).norm() <= 1e-12 * y.norm());
            let ml = detector.ml(&y);
            assert_eq!((ml.r, ml.symbols.clone()), (frame.r, frame.symbols.clone()));
            assert_eq!(ml.counters.hypotheses, 8);
            assert_eq!(ml.counters.antenna_terms, 16);
            let greedy = detector.greedy(&y);
            assert_eq!((greedy.r, greedy.symbols.clone()), (frame.r, frame.symbols.clone()));
            assert_eq!(greedy.counters.hypotheses, 4);
            assert_eq!(greedy.counters.magnitudes, 2);
            // common phase on the codebook leaves both decisions unchanged
            let rotated = ImCodebook {
                reflections: cb.reflections.iter().map(|z| z.with_phase(0.7)).collect(),
                ..cb.clone()
            };
            let rot_resp = ImResponse::new(&ch, &rotated, cfg.p_bs).unwrap();
            let y_rot = rot_resp.receive(&frame, 0.0, 0.0, &mut rng).unwrap();
            let rot_det = Detector::new(layout, &rot_resp).unwrap();
            assert_eq!(rot_det.ml(&y_rot).symbols, ml.symbols);
            assert_eq!(rot_det.greedy(&y_rot).r, greedy.r);
        }
    }

    #[test]
    fn pure_noise_variance() {
        let cfg = im_config(8, 2, 2, 2);
        let (ch, cb) = realization(&cfg, 0);
        let response = ImResponse::new(&ch, &cb, cfg.p_bs).unwrap();
        let frame = ImFrame { r: 1, symbols: vec![0, 0], x: CVec::zeros(2) };
        let (sv, ss) = (dbm_to_watts(-90.0), dbm_to_watts(-95.0));
        let mut rng = substream(2, 0, lanes::NOISE);
        let draws = 100_000;
        let mut power = [0.0; 2];
        for _ in 0..draws {
            let y = response.receive(&frame, sv, ss, &mut rng).unwrap();
            for (p, yj) in power.iter_mut().zip(y.iter()) {
                *p += yj.norm_sqr();
            }
        }
        for (j, total) in power.iter().enumerate() {
            let expect = sv * response.ris_gain[1].row(j).norm_squared() + ss;
            let got = total / draws as f64;
            assert!((got / expect - 1.0).abs() < 0.03, "antenna {j}: {got} vs {expect}");
        }
        let a = response.receive(&frame, sv, ss, &mut substream(5, 5, 5)).unwrap();
        let b = response.receive(&frame, sv, ss, &mut substream(5, 5, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_antenna_ml_is_vector_search() {
        let cfg = im_config(8, 2, 1, 4);
        let layout = ImLayout::from_config(&cfg).unwrap();
        let (ch, cb) = realization(&cfg, 1);
        let response = ImResponse::new(&ch, &cb, cfg.p_bs).unwrap();
        let detector = Detector::new(layout, &response).unwrap();
        let mut rng = substream(8, 0, 0);
        let e = &response.effective[0];
        for _ in 0..50 {
            let y = CVec::from_fn(1, |_, _| sample_cn(&mut rng)) * Complex64::from(e.norm() * cfg.p_bs.sqrt());
            let mut best = (f64::INFINITY, vec![]);
            for a in 0..4 {
                for b in 0..4 {
                    let x = layout.vector(&[a, b]).unwrap();
                    let metric = (y[0] - (e * x)[0] * cfg.p_bs.sqrt()).norm_sqr();
                    if metric < best.0 {
                        best = (metric, vec![a, b]);
                    }
                }
            }
            assert_eq!(detector.ml(&y).symbols, best.1);
        }
    }

    #[test]
    fn degenerate_inputs_follow_conventions() {
        let cfg = im_config(8, 2, 2, 2);
        let layout = ImLayout::from_config(&cfg).unwrap();
        let (ch, cb) = realization(&cfg, 2);
        let response = ImResponse::new(&ch, &cb, cfg.p_bs).unwrap();
        let detector = Detector::new(layout, &response).unwrap();
        let ml = detector.ml(&CVec::zeros(2));
        let mut best = (f64::INFINITY, 0, 0);
        for r in 0..2 {
            for v in 0..4u64 {
                let x = layout.vector(&layout.symbols_of(v)).unwrap();
                let norm = (&response.effective[r] * x).norm_squared();
                if norm < best.0 {
                    best = (norm, r, v as usize);
                }
            }
        }
        assert_eq!((ml.r, ml.symbols), (best.1, layout.symbols_of(best.2 as u64)));
        let tie = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        assert_eq!(detector.greedy(&tie).r, 0);
    }

    #[test]
    fn hypothesis_guard() {
        let cfg = im_config(4, 21, 1, 2);
        let layout = ImLayout::from_config(&cfg).unwrap();
        let response = ImResponse {
            effective: vec![CMat::zeros(1, 21)],
            ris_gain: vec![CMat::zeros(1, 4)],
            p_bs: 1.0,
        };
        assert!(matches!(
            Detector::new(layout, &response),
            Err(Error::TooManyHypotheses { .. })
        ));
    }

    #[test]
    fn noiseless_ml_is_exact() {
        let cfg = SystemConfig {
            sigma_s2: dbm_to_watts(-200.0),
            sigma_v2: dbm_to_watts(-200.0),
            trials: 200,
            frames_per_channel: 20,
            ..im_config(16, 2, 2, 2)
        };
        let counts = ber_experiment(&cfg).unwrap();
        assert_eq!(counts.frames, 200);
        assert_eq!(counts.errors_ml, 0);
        // Dominance holds on the summed gain over all transmit directions, so
        // for an unlucky symbol vector the target antenna can still be weaker
        // than another one. The greedy detector then misses the index even
        // without noise, but only rarely.
        assert!(counts.errors_greedy * 20 < counts.bits, "{counts:?}");
        assert_eq!(ber_experiment_rsm(&cfg).unwrap().errors_ml, 0);
    }

    #[test]
    fn vanishing_power_gives_coin_flips() {
        let cfg = SystemConfig {
            sigma_s2: 1e3,
            trials: 2000,
            frames_per_channel: 200,
            ..im_config(8, 2, 2, 2)
        };
        let counts = ber_experiment(&cfg).unwrap();
        let ber = counts.errors_ml as f64 / counts.bits as f64;
        let se = (0.25 / counts.bits as f64).sqrt();
        assert!((ber - 0.5).abs() <= 3.0 * se, "ber {ber}");
    }

    #[test]
    fn rsm_order_matches_rate() {
        assert_eq!(rsm_order(ImLayout::new(2, 2, 2).unwrap()).unwrap(), 4);
        assert_eq!(rsm_order(ImLayout::new(4, 2, 4).unwrap()).unwrap(), 16);
    }
}
