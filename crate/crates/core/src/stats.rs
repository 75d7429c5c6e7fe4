//! Confidence intervals for Monte Carlo estimates.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> Interval {
    if trials == 0 {
        return Interval { estimate: 0.0, low: 0.0, high: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval {
        estimate: p,
        low: (center - half).max(0.0).min(p),
        high: (center + half).min(1.0).max(p),
    }
}

/// Mean with a normal-approximation 95% interval.
pub fn mean_interval(samples: &[f64]) -> Interval {
    let n = samples.len();
    if n == 0 {
        return Interval { estimate: f64::NAN, low: f64::NAN, high: f64::NAN };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Interval { estimate: mean, low: mean, high: mean };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = Z95 * (var / n as f64).sqrt();
    Interval { estimate: mean, low: mean - half, high: mean + half }
}

/// Standard error of a proportion estimate.
pub fn proportion_std_error(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_estimate() {
        let i = wilson_interval(0, 100);
        assert_eq!(i.estimate, 0.0);
        assert_eq!(i.low, 0.0);
        assert!(i.high > 0.0 && i.high < 0.05);
        let i = wilson_interval(50, 100);
        assert!(i.low < 0.5 && i.high > 0.5);
        // reference value for 50/100 from the closed form
        assert!((i.high - 0.596_168_5).abs() < 1e-6);
        let i = wilson_interval(100, 100);
        assert_eq!(i.high, 1.0);
    }

    #[test]
    fn mean_interval_width() {
        let i = mean_interval(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(i.estimate, 2.5);
        let half = Z95 * (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((i.high - 2.5 - half).abs() < 1e-12);
    }
}
