//! Gaussian randomization: recovering a vector from a relaxed `Z`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{sample_cn, CMat, CVec};

use super::hermitian_eig;

/// Scores and checks rounding candidates.
pub trait CandidateEvaluator {
    /// Higher is better.
    fn score(&self, z: &CVec) -> f64;

    /// Nonnegative, relative amount by which `z` misses the constraints.
    fn violation(&self, z: &CVec) -> f64;
}

#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    pub z: CVec,
    pub score: f64,
    pub violation: f64,
    /// False when no candidate met the feasibility tolerance and the least
    /// violating one was returned instead.
    pub feasible: bool,
    pub candidates: usize,
}

/// Draws `num_candidates` vectors `U Sigma^{1/2} e` with `e ~ CN(0, I)`,
/// rescales each to `||z||^2 = power_budget`, and keeps the best feasible
/// one (first wins on ties). With no feasible candidate the least violating
/// one is returned and flagged.
pub fn gaussian_randomization<E, R>(
    z_mat: &CMat,
    power_budget: f64,
    evaluator: &E,
    num_candidates: usize,
    feasibility_tol: f64,
    rng: &mut R,
) -> Result<RoundingOutcome>
where
    E: CandidateEvaluator + ?Sized,
    R: Rng + ?Sized,
{
    if num_candidates == 0 {
        return Err(Error::InvalidInput("need at least one randomization candidate".into()));
    }
    if !(power_budget > 0.0) || !power_budget.is_finite() {
        return Err(Error::InvalidInput(format!(
            "power budget must be positive, got {power_budget}"
        )));
    }
    let (u, lambda) = hermitian_eig(z_mat)?;
    if !(lambda[0] > 0.0) {
        return Err(Error::InvalidInput("relaxed matrix is numerically zero".into()));
    }
    let n = z_mat.nrows();
    // U Sigma^{1/2}; eigenvalues at roundoff level relative to the largest
    // are treated as zero so a rank-one Z yields exactly its own direction.
    let floor = lambda[0] * f64::EPSILON * n as f64;
    let mut factor = u;
    for j in 0..n {
        let l = if lambda[j] > floor { lambda[j] } else { 0.0 };
        let s = Complex64::from(l.sqrt());
        factor.column_mut(j).iter_mut().for_each(|c| *c *= s);
    }

    let mut best_feasible: Option<(CVec, f64, f64)> = None;
    let mut least_violating: Option<(CVec, f64, f64)> = None;
    for _ in 0..num_candidates {
        let e = CVec::from_fn(n, |_, _| sample_cn(rng));
        let mut z = &factor * e;
        let norm_sqr = z.norm_squared();
        if !(norm_sqr > 0.0) {
            continue;
        }
        z *= Complex64::from((power_budget / norm_sqr).sqrt());
        let score = evaluator.score(&z);
        let viol = evaluator.violation(&z);
        if viol <= feasibility_tol {
            if best_feasible.as_ref().is_none_or(|(_, s, _)| score > *s) {
                best_feasible = Some((z, score, viol));
            }
        } else if least_violating.as_ref().is_none_or(|(_, _, v)| viol < *v) {
            least_violating = Some((z, score, viol));
        }
    }
    let (z, score, violation, feasible) = match (best_feasible, least_violating) {
        (Some((z, s, v)), _) => (z, s, v, true),
        (None, Some((z, s, v))) => (z, s, v, false),
        (None, None) => {
            return Err(Error::Numerical("every randomization candidate was zero".into()))
        }
    };
    Ok(RoundingOutcome {
        z,
        score,
        violation,
        feasible,
        candidates: num_candidates,
    })
}
