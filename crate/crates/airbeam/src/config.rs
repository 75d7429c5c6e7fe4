//! Flat `key = value` experiment files.
//!
//! Every line is blank, a `#` comment, or `section.name = value`. Keys are
//! fixed; anything unknown or repeated is rejected, and all problems found in
//! one file are reported together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use airbeam_core::model::{dbm_to_watts, Bisection, BudgetNoise, SystemConfig};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SumrateZf,
    SumrateOta,
    BerIm,
    BerRsm,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::SumrateZf,
        ExperimentKind::SumrateOta,
        ExperimentKind::BerIm,
        ExperimentKind::BerRsm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SumrateZf => "sumrate-zf",
            ExperimentKind::SumrateOta => "sumrate-ota",
            ExperimentKind::BerIm => "ber-im",
            ExperimentKind::BerRsm => "ber-rsm",
        }
    }

    pub fn is_ber(self) -> bool {
        matches!(self, ExperimentKind::BerIm | ExperimentKind::BerRsm)
    }

    /// Whether the RIS sits in the signal path, so `P_T` is split between
    /// transmitter and reflection power.
    pub fn uses_ris(self) -> bool {
        matches!(self, ExperimentKind::SumrateOta | ExperimentKind::BerIm)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    PTotalDbm,
    PADbm,
    NRis,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PTotalDbm => "p_total_dbm",
            SweepVariable::PADbm => "p_a_dbm",
            SweepVariable::NRis => "n_ris",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SweepVariable::PTotalDbm, SweepVariable::PADbm, SweepVariable::NRis]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown sweep variable `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Which of the three power keys the file set explicitly. The sweep decides
/// which one is derived from the other two.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerKeys {
    pub p_total_dbm: Option<f64>,
    pub p_bs_dbm: Option<f64>,
    pub p_a_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sweep: Sweep,
    /// System parameters shared by all sweep points. Its power fields hold
    /// the resolved static powers; [`ExperimentSpec::point_config`] applies
    /// the sweep value on top.
    pub base: SystemConfig,
    pub powers: PowerKeys,
}

pub const DEFAULT_P_BS_DBM: f64 = 0.0;
pub const DEFAULT_P_A_DBM: f64 = 10.0;

const KEYS: &[&str] = &[
    "experiment.kind",
    "sweep.variable",
    "sweep.values",
    "system.n_ris",
    "system.tx_antennas",
    "system.users",
    "system.rx_antennas",
    "system.mod_order",
    "power.p_total_dbm",
    "power.p_bs_dbm",
    "power.p_a_dbm",
    "channel.c0_db",
    "channel.beta_t",
    "channel.beta_k",
    "channel.beta_d",
    "channel.d_t",
    "channel.d_k",
    "channel.d_d",
    "noise.sigma_s_dbm",
    "noise.sigma_v_dbm",
    "noise.budget",
    "mc.trials",
    "mc.seed",
    "mc.frames_per_channel",
    "sdr.candidates",
    "sdr.delta_r",
    "sdr.single_draw",
    "bisect.gamma_lo_db",
    "bisect.gamma_hi_db",
    "bisect.max_iter",
    "bisect.tol_db",
];

/// Parses the raw document into a key map, rejecting malformed lines and
/// duplicates.
fn parse_document(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut map = BTreeMap::new();
    let mut problems = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {line_no}: expected `key = value`"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            problems.push(format!("line {line_no}: empty key"));
            continue;
        }
        if !KEYS.contains(&key) {
            problems.push(format!("line {line_no}: unknown key `{key}`"));
            continue;
        }
        if let Some((first, _)) = map.get(key) {
            problems.push(format!(
                "line {line_no}: duplicate key `{key}` (first set on line {first})"
            ));
            continue;
        }
        map.insert(key.to_string(), (line_no, value.to_string()));
    }
    if problems.is_empty() {
        Ok(map)
    } else {
        Err(ConfigError::Parse(problems))
    }
}

/// Typed access to the key map that records every failure instead of
/// stopping at the first one.
struct Reader {
    map: BTreeMap<String, (usize, String)>,
    problems: Vec<String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let (line, value) = self.map.get(key)?;
        match value.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems
                    .push(format!("line {line}: `{key}` has invalid value `{value}`: {e}"));
                None
            }
        }
    }

    fn get_f64(&mut self, key: &str) -> Option<f64> {
        let v = self.get::<f64>(key)?;
        if v.is_finite() {
            Some(v)
        } else {
            let line = self.map[key].0;
            self.problems.push(format!("line {line}: `{key}` must be finite"));
            None
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        self.get(key).unwrap_or(default)
    }

    fn or_f64(&mut self, key: &str, default: f64) -> f64 {
        self.get_f64(key).unwrap_or(default)
    }

    fn require<T: FromStr>(&mut self, key: &str, why: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        if self.raw(key).is_none() {
            self.problems.push(format!("missing key `{key}`{why}"));
            return None;
        }
        self.get(key)
    }

    fn values(&mut self, key: &str) -> Option<Vec<f64>> {
        let Some((line, text)) = self.raw(key).cloned() else {
            self.problems.push(format!("missing key `{key}`"));
            return None;
        };
        let items: Vec<&str> = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            self.problems.push(format!("line {line}: `{key}` is empty"));
            return None;
        }
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    self.problems
                        .push(format!("line {line}: `{key}` entry `{item}` is not a finite number"));
                    return None;
                }
            }
        }
        if out.windows(2).any(|w| w[1] <= w[0]) {
            self.problems
                .push(format!("line {line}: `{key}` must be strictly increasing"));
            return None;
        }
        Some(out)
    }
}

struct NoiseChoice(BudgetNoise);

impl FromStr for NoiseChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(NoiseChoice(BudgetNoise::Static)),
            "amplifier" => Ok(NoiseChoice(BudgetNoise::Amplifier)),
            _ => Err("expected `static` or `amplifier`".to_string()),
        }
    }
}

/// Parses and validates an experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut r = Reader {
        map: parse_document(text)?,
        problems: Vec::new(),
    };
    let kind: Option<ExperimentKind> = r.require("experiment.kind", "");
    let variable: Option<SweepVariable> = r.require("sweep.variable", "");
    let values = r.values("sweep.values");

    let defaults = SystemConfig::default();
    let why_users = " (sum-rate experiments need the user count)";
    let why_rx = " (BER experiments need the receive antenna count)";
    let users = match kind {
        Some(k) if !k.is_ber() => r.require("system.users", why_users).unwrap_or(0),
        _ => r.or("system.users", 1),
    };
    let rx_antennas = match kind {
        Some(k) if k.is_ber() => r.require("system.rx_antennas", why_rx).unwrap_or(0),
        _ => r.or("system.rx_antennas", defaults.rx_antennas),
    };
    let powers = PowerKeys {
        p_total_dbm: r.get_f64("power.p_total_dbm"),
        p_bs_dbm: r.get_f64("power.p_bs_dbm"),
        p_a_dbm: r.get_f64("power.p_a_dbm"),
    };
    let bisection = Bisection {
        gamma_lo_db: r.or_f64("bisect.gamma_lo_db", defaults.bisection.gamma_lo_db),
        gamma_hi_db: r.or_f64("bisect.gamma_hi_db", defaults.bisection.gamma_hi_db),
        max_iter: r.or("bisect.max_iter", defaults.bisection.max_iter),
        tol_db: r.or_f64("bisect.tol_db", defaults.bisection.tol_db),
    };
    let mut base = SystemConfig {
        n_ris: r.or("system.n_ris", defaults.n_ris),
        tx_antennas: r.or("system.tx_antennas", defaults.tx_antennas),
        users,
        rx_antennas,
        mod_order: r.or("system.mod_order", defaults.mod_order),
        c0_db: r.or_f64("channel.c0_db", defaults.c0_db),
        beta_t: r.or_f64("channel.beta_t", defaults.beta_t),
        beta_k: r.or_f64("channel.beta_k", defaults.beta_k),
        beta_d: r.or_f64("channel.beta_d", defaults.beta_d),
        d_t: r.or_f64("channel.d_t", defaults.d_t),
        d_k: r.or_f64("channel.d_k", defaults.d_k),
        d_d: r.or_f64("channel.d_d", defaults.d_d),
        sigma_s2: dbm_to_watts(r.or_f64("noise.sigma_s_dbm", -90.0)),
        sigma_v2: dbm_to_watts(r.or_f64("noise.sigma_v_dbm", -90.0)),
        budget_noise: r
            .get::<NoiseChoice>("noise.budget")
            .map_or(defaults.budget_noise, |n| n.0),
        trials: r.or("mc.trials", defaults.trials),
        seed: r.or("mc.seed", defaults.seed),
        frames_per_channel: r.or("mc.frames_per_channel", defaults.frames_per_channel),
        sdr_candidates: r.or("sdr.candidates", defaults.sdr_candidates),
        delta_r: r.or_f64("sdr.delta_r", defaults.delta_r),
        single_draw: r.or("sdr.single_draw", defaults.single_draw),
        bisection,
        ..defaults
    };

    let (Some(kind), Some(variable), Some(values)) = (kind, variable, values) else {
        return Err(ConfigError::Invalid(r.problems));
    };
    let sweep = Sweep { variable, values };
    if let Err(e) = resolve_static_powers(&mut base, &powers, kind, variable) {
        r.problems.push(e);
    }
    if variable == SweepVariable::NRis {
        if let Some(bad) = sweep.values.iter().find(|v| !(**v >= 1.0 && v.fract() == 0.0)) {
            r.problems
                .push(format!("sweep over n_ris needs positive integers, got {bad}"));
        }
    }
    if !r.problems.is_empty() {
        return Err(ConfigError::Invalid(r.problems));
    }
    let spec = ExperimentSpec {
        kind,
        sweep,
        base,
        powers,
    };
    let mut problems: Vec<String> = Vec::new();
    let mut seen = Vec::new();
    for &value in &spec.sweep.values {
        if let Err(e) = spec.point_config(value) {
            if !seen.contains(&e) {
                problems.push(format!("sweep value {value}: {e}"));
                seen.push(e);
            }
        }
    }
    if problems.is_empty() {
        Ok(spec)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

/// Reads and parses an experiment file.
pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// `P_T = P_BS + P_A` in watts; returns `P_T - other`, or an error when the
/// remainder is not a positive power.
fn remainder(total: f64, other: f64, what: &str) -> Result<f64, String> {
    let rest = total - other;
    if rest > 0.0 && rest > 1e-12 * total {
        Ok(rest)
    } else {
        Err(format!(
            "total power leaves no positive {what} ({total:.6e} W total, {other:.6e} W elsewhere)"
        ))
    }
}

fn resolve_static_powers(
    base: &mut SystemConfig,
    keys: &PowerKeys,
    kind: ExperimentKind,
    variable: SweepVariable,
) -> Result<(), String> {
    let w = |v: Option<f64>| v.map(dbm_to_watts);
    let (pt, pbs, pa) = (w(keys.p_total_dbm), w(keys.p_bs_dbm), w(keys.p_a_dbm));
    let swept = match variable {
        SweepVariable::PTotalDbm => keys.p_total_dbm.map(|_| "power.p_total_dbm"),
        SweepVariable::PADbm => keys.p_a_dbm.map(|_| "power.p_a_dbm"),
        SweepVariable::NRis => None,
    };
    if let Some(key) = swept {
        return Err(format!("`{key}` is the sweep variable and cannot also be fixed"));
    }
    let (p_bs, p_a) = match variable {
        SweepVariable::PTotalDbm => {
            if pbs.is_some() && pa.is_some() && kind.uses_ris() {
                return Err(
                    "sweeping p_total_dbm splits the total between transmitter and RIS; set at most one of power.p_bs_dbm and power.p_a_dbm"
                        .to_string(),
                );
            }
            (
                pbs.unwrap_or(dbm_to_watts(DEFAULT_P_BS_DBM)),
                pa.unwrap_or(dbm_to_watts(DEFAULT_P_A_DBM)),
            )
        }
        SweepVariable::PADbm => {
            if pt.is_some() && pbs.is_some() {
                return Err(
                    "sweeping p_a_dbm with a fixed power.p_total_dbm derives the transmitter power; drop power.p_bs_dbm"
                        .to_string(),
                );
            }
            (pbs.unwrap_or(dbm_to_watts(DEFAULT_P_BS_DBM)), dbm_to_watts(DEFAULT_P_A_DBM))
        }
        SweepVariable::NRis => match (pt, pbs, pa) {
            (Some(t), Some(b), Some(a)) => {
                if ((b + a) - t).abs() > 1e-6 * t {
                    return Err(format!(
                        "power.p_total_dbm must equal p_bs + p_a in watts ({t:.6e} W vs {:.6e} W)",
                        a + b
                    ));
                }
                (b, a)
            }
            (Some(t), Some(b), None) => (b, remainder(t, b, "RIS power")?),
            (Some(t), None, Some(a)) => (remainder(t, a, "transmitter power")?, a),
            (Some(t), None, None) => {
                let b = dbm_to_watts(DEFAULT_P_BS_DBM);
                (b, remainder(t, b, "RIS power")?)
            }
            (None, b, a) => (
                b.unwrap_or(dbm_to_watts(DEFAULT_P_BS_DBM)),
                a.unwrap_or(dbm_to_watts(DEFAULT_P_A_DBM)),
            ),
        },
    };
    base.p_bs = p_bs;
    base.p_a = p_a;
    base.p_total = pt.unwrap_or(p_bs + p_a);
    Ok(())
}

impl ExperimentSpec {
    /// The system configuration at one sweep point.
    ///
    /// Sweeping `p_total_dbm` gives the direct-link baselines the whole total,
    /// while the RIS schemes hand whatever the fixed transmitter power leaves
    /// to the reflection budget (or the reverse, when only `p_a_dbm` is
    /// fixed). Sweeping `p_a_dbm` under a fixed total shrinks the transmitter
    /// power accordingly.
    pub fn point_config(&self, value: f64) -> Result<SystemConfig, String> {
        let mut cfg = self.base.clone();
        let keys = &self.powers;
        match self.sweep.variable {
            SweepVariable::PTotalDbm => {
                let total = dbm_to_watts(value);
                cfg.p_total = total;
                if self.kind.uses_ris() {
                    if let (Some(a), None) = (keys.p_a_dbm, keys.p_bs_dbm) {
                        cfg.p_a = dbm_to_watts(a);
                        cfg.p_bs = remainder(total, cfg.p_a, "transmitter power")?;
                    } else {
                        cfg.p_a = remainder(total, cfg.p_bs, "RIS power")?;
                    }
                }
            }
            SweepVariable::PADbm => {
                cfg.p_a = dbm_to_watts(value);
                match keys.p_total_dbm {
                    Some(t) => {
                        cfg.p_total = dbm_to_watts(t);
                        cfg.p_bs = remainder(cfg.p_total, cfg.p_a, "transmitter power")?;
                    }
                    None => cfg.p_total = cfg.p_bs + cfg.p_a,
                }
            }
            SweepVariable::NRis => cfg.n_ris = value as usize,
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
