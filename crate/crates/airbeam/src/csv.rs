use std::fmt::Write as _;
use std::path::Path;

use crate::error::OutputError;
use crate::experiment::ResultRow;

pub const HEADER: &str = "experiment,sweep_value,k,n,t_x,r_x,m,metric,value,ci_low,ci_high,trials,seed";

/// Formats `v` with ten significant digits, in the style of C's `%.10g`:
/// positional notation for moderate exponents, scientific otherwise, with
/// trailing zeros dropped.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// The full CSV document for `rows`, header included.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            format_float(r.sweep_value),
            r.k,
            r.n,
            r.t_x,
            r.r_x,
            r.m,
            r.metric,
            format_float(r.value),
            format_float(r.ci_low),
            format_float(r.ci_high),
            r.trials,
            r.seed
        );
    }
    out
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), OutputError> {
    std::fs::write(path, render_csv(rows)).map_err(|source| OutputError {
        path: path.to_path_buf(),
        source,
    })
}
