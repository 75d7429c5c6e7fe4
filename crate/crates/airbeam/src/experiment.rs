use std::fmt;
use std::time::Instant;

use airbeam_core::im::{ber_block_im, ber_block_rsm, block_count, BerCounts};
use airbeam_core::model::{generate_channels, lanes, substream, Link, SystemConfig};
use airbeam_core::mu::{max_min_sinr, sum_rate, zf_precoder, zf_sinr};
use airbeam_core::stats::{mean_interval, wilson_interval, Interval};
use rayon::prelude::*;

use crate::config::{ExperimentKind, ExperimentSpec};
use crate::error::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SumRate,
    /// BER of the detector the experiment is about: greedy for receive IM,
    /// joint ML for the RSM baseline.
    Ber,
    /// Joint-ML BER of receive IM on the same frames as the greedy row.
    BerMl,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::SumRate => "sum_rate_bps_hz",
            Metric::Ber => "ber",
            Metric::BerMl => "ber_ml",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep_value: f64,
    pub k: usize,
    pub n: usize,
    pub t_x: usize,
    pub r_x: usize,
    pub m: usize,
    pub metric: Metric,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Channel draws for sum-rate rows, frames for BER rows.
    pub trials: usize,
    pub seed: u64,
}

/// What one finished sweep point reports to the progress log.
#[derive(Debug, Clone)]
pub struct PointReport<'a> {
    pub kind: ExperimentKind,
    pub index: usize,
    pub points: usize,
    pub sweep_value: f64,
    pub rows: &'a [ResultRow],
    pub seconds: f64,
}

impl fmt::Display for PointReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "point={}/{} experiment={} sweep_value={}",
            self.index + 1,
            self.points,
            self.kind,
            self.sweep_value
        )?;
        for row in self.rows {
            write!(f, " {}={:.6e}", row.metric, row.value)?;
        }
        write!(f, " elapsed_s={:.2}", self.seconds)
    }
}

/// Runs every sweep point of `spec` on a pool of `workers` threads.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<Vec<ResultRow>, RunError> {
    run_experiment_with(spec, workers, |_| {})
}

/// [`run_experiment`] with a callback after each sweep point.
///
/// Every trial draws from its own substreams keyed by the trial index, and
/// results are gathered in index order, so the output does not depend on the
/// worker count. The same trial index sees the same channel draw at every
/// sweep point.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    workers: usize,
    mut on_point: impl FnMut(&PointReport<'_>),
) -> Result<Vec<ResultRow>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let mut rows = Vec::new();
    let points = spec.sweep.values.len();
    for (index, &value) in spec.sweep.values.iter().enumerate() {
        let started = Instant::now();
        let cfg = spec.point_config(value).map_err(|message| RunError::Point {
            sweep_value: value,
            message,
        })?;
        let point_rows = pool.install(|| run_point(spec.kind, &cfg, value))?;
        on_point(&PointReport {
            kind: spec.kind,
            index,
            points,
            sweep_value: value,
            rows: &point_rows,
            seconds: started.elapsed().as_secs_f64(),
        });
        rows.extend(point_rows);
    }
    Ok(rows)
}

fn run_point(kind: ExperimentKind, cfg: &SystemConfig, value: f64) -> Result<Vec<ResultRow>, RunError> {
    let row = |metric, interval: Interval, trials| ResultRow {
        experiment: kind.name().to_string(),
        sweep_value: value,
        k: cfg.users,
        n: cfg.n_ris,
        t_x: cfg.tx_antennas,
        r_x: cfg.rx_antennas,
        m: cfg.mod_order,
        metric,
        value: interval.estimate,
        ci_low: interval.low,
        ci_high: interval.high,
        trials,
        seed: cfg.seed,
    };
    let trial_error = |trial, source| RunError::Trial {
        sweep_value: value,
        trial,
        source,
    };
    if kind.is_ber() {
        let blocks = (0..block_count(cfg))
            .into_par_iter()
            .map(|b| {
                let counts = match kind {
                    ExperimentKind::BerIm => ber_block_im(cfg, b),
                    _ => ber_block_rsm(cfg, b),
                };
                counts.map_err(|e| trial_error(b * cfg.frames_per_channel, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut total = BerCounts::default();
        for b in &blocks {
            total.merge(b);
        }
        let frames = total.frames as usize;
        let mut out = vec![row(Metric::Ber, wilson_interval(total.errors_greedy, total.bits), frames)];
        if kind == ExperimentKind::BerIm {
            out.push(row(Metric::BerMl, wilson_interval(total.errors_ml, total.bits), frames));
        }
        return Ok(out);
    }
    let rates = (0..cfg.trials)
        .into_par_iter()
        .map(|t| sumrate_trial(kind, cfg, t).map_err(|e| trial_error(t, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut interval = mean_interval(&rates);
    interval.low = interval.low.max(0.0);
    Ok(vec![row(Metric::SumRate, interval, rates.len())])
}

/// One channel draw of a sum-rate experiment.
pub fn sumrate_trial(
    kind: ExperimentKind,
    cfg: &SystemConfig,
    trial: usize,
) -> airbeam_core::Result<f64> {
    let trial = trial as u64;
    let channels = generate_channels(cfg, Link::Downlink, &mut substream(cfg.seed, trial, lanes::CHANNEL))?;
    let sinrs = match kind {
        ExperimentKind::SumrateZf => {
            let precoder = zf_precoder(&channels.f, cfg.p_total)?;
            zf_sinr(&channels.f, &precoder, cfg.sigma_s2)?
        }
        _ => {
            max_min_sinr(&channels, cfg, &mut substream(cfg.seed, trial, lanes::ROUNDING))?.sinrs
        }
    };
    sum_rate(&sinrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn spec(kind: &str, extra: &str) -> ExperimentSpec {
        let text = format!(
            "experiment.kind = {kind}\nsweep.variable = p_total_dbm\nsweep.values = 5, 15\n\
             system.users = 2\nsystem.rx_antennas = 2\nsystem.mod_order = 2\nmc.trials = 6\n{extra}"
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn rows_carry_point_metadata() {
        let s = spec("sumrate-zf", "mc.seed = 9\n");
        let rows = run_experiment(&s, 2).unwrap();
        assert_eq!(rows.len(), 2);
        for (row, v) in rows.iter().zip([5.0, 15.0]) {
            assert_eq!(row.sweep_value, v);
            assert_eq!((row.k, row.n, row.t_x, row.r_x, row.m), (2, 16, 2, 2, 2));
            assert_eq!(row.metric, Metric::SumRate);
            assert_eq!((row.trials, row.seed), (6, 9));
            assert!(row.ci_low <= row.value && row.value <= row.ci_high);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = spec("sumrate-ota", "");
        let a = run_experiment(&s, 1).unwrap();
        let b = run_experiment(&s, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ber_rows_come_in_pairs() {
        let s = spec("ber-im", "mc.frames_per_channel = 2\n");
        let rows = run_experiment(&s, 2).unwrap();
        let metrics: Vec<_> = rows.iter().map(|r| r.metric).collect();
        assert_eq!(metrics, [Metric::Ber, Metric::BerMl, Metric::Ber, Metric::BerMl]);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.value));
            assert!(r.ci_low <= r.value && r.value <= r.ci_high);
            assert_eq!(r.trials, 6);
        }
        let rsm = run_experiment(&spec("ber-rsm", ""), 1).unwrap();
        assert_eq!(rsm.len(), 2);
    }

    #[test]
    fn progress_reports_every_point() {
        let s = spec("sumrate-zf", "");
        let mut seen = Vec::new();
        run_experiment_with(&s, 1, |p| seen.push(p.to_string())).unwrap();
        assert_eq!(seen.len(), 2);
        assert!(seen[0].starts_with("point=1/2 experiment=sumrate-zf sweep_value=5 sum_rate_bps_hz="));
    }

    #[test]
    fn pipeline_errors_name_the_trial() {
        let mut s = spec("sumrate-zf", "");
        // a huge exponent underflows the direct channel to zero
        s.base.beta_d = 1e6;
        let err = run_experiment(&s, 1).unwrap_err().to_string();
        assert!(err.starts_with("sweep value 5, trial 0:"), "{err}");
    }
}
