//! Dense complex-Hermitian semidefinite programming.
//!
//! [`solve_sdp`] maximizes `Tr(C Z)` over `Z >= 0` subject to trace
//! inequalities `Tr(A_i Z) {>=, <=} b_i`. [`solve_feasibility`] finds the
//! max-slack point of a constraint set. Both reduce to the interior-point
//! method in [`ipm`], with one slack per inequality carried in a
//! nonnegative-orthant block next to the matrix block.

mod eig;
mod ipm;
mod rounding;

use nalgebra::DVector;
use num_complex::Complex64;

pub use eig::hermitian_eig;
pub use ipm::IterationRecord;
pub use rounding::{gaussian_randomization, CandidateEvaluator, RoundingOutcome};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, hermitize, re_inner};
use crate::model::CMat;
use ipm::{ConeProgram, ConeRow, IpmSettings, IpmStatus};

/// Largest matrix order the dense solver accepts.
pub const MAX_ORDER: usize = 128;

/// Relative asymmetry `||A - A^H||_F / ||A||_F` tolerated on input.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Max-slack threshold at or above which a constraint set counts as feasible.
pub const FEASIBILITY_SLACK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Geq,
    Leq,
}

/// `Tr(a Z) {>=, <=} bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub a: CMat,
    pub sense: Sense,
    pub bound: f64,
}

impl Constraint {
    pub fn geq(a: CMat, bound: f64) -> Self {
        Self { a, sense: Sense::Geq, bound }
    }

    pub fn leq(a: CMat, bound: f64) -> Self {
        Self { a, sense: Sense::Leq, bound }
    }

    /// Signed slack at `z`: nonnegative exactly when the constraint holds.
    pub fn slack(&self, z: &CMat) -> f64 {
        let value = re_inner(&self.a, z);
        match self.sense {
            Sense::Geq => value - self.bound,
            Sense::Leq => self.bound - value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    objective: CMat,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    /// Validates dimensions and Hermitian symmetry, then symmetrizes every
    /// matrix. Pass a zero objective for a pure feasibility problem.
    pub fn new(objective: CMat, constraints: Vec<Constraint>) -> Result<Self> {
        let n = objective.nrows();
        if n == 0 || objective.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "objective must be square and non-empty, got {:?}",
                objective.shape()
            )));
        }
        if n > MAX_ORDER {
            return Err(Error::InvalidInput(format!(
                "matrix order {n} exceeds the dense solver limit {MAX_ORDER}"
            )));
        }
        check_hermitian(&objective)?;
        let mut sym = Vec::with_capacity(constraints.len());
        for (i, c) in constraints.into_iter().enumerate() {
            if c.a.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "constraint {i} has shape {:?}, expected ({n}, {n})",
                    c.a.shape()
                )));
            }
            if !c.bound.is_finite() {
                return Err(Error::InvalidInput(format!("constraint {i} has a non-finite bound")));
            }
            check_hermitian(&c.a)?;
            sym.push(Constraint { a: hermitize(&c.a), ..c });
        }
        Ok(Self {
            objective: hermitize(&objective),
            constraints: sym,
        })
    }

    pub fn order(&self) -> usize {
        self.objective.nrows()
    }

    pub fn objective(&self) -> &CMat {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }
}

fn check_hermitian(a: &CMat) -> Result<()> {
    if a.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let asym = asymmetry(a);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub z: CMat,
    pub status: SdpStatus,
    /// `Tr(C Z)` for [`solve_sdp`]; the max-slack value `t` for
    /// [`solve_feasibility`].
    pub objective_value: f64,
    /// `max_i violation_i / (1 + |b_i|)` over the caller's constraints.
    pub max_constraint_violation: f64,
    /// Primal-dual objective gap, in objective units.
    pub duality_gap: f64,
    pub iterations: usize,
    pub infeasibility_reason: Option<String>,
    pub trace: Vec<IterationRecord>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Rows scaled by `max(||A_i||_F, |b_i|)`; rows with `A_i = 0, b_i = 0` are
/// dropped since they hold trivially.
struct NormalizedRow {
    a: CMat,
    bound: f64,
    sense: Sense,
}

fn normalize(constraints: &[Constraint]) -> Vec<NormalizedRow> {
    constraints
        .iter()
        .filter_map(|c| {
            let scale = c.a.norm().max(c.bound.abs());
            if scale == 0.0 {
                return None;
            }
            Some(NormalizedRow {
                a: &c.a * Complex64::from(1.0 / scale),
                bound: c.bound / scale,
                sense: c.sense,
            })
        })
        .collect()
}

fn violation(constraints: &[Constraint], z: &CMat) -> f64 {
    constraints
        .iter()
        .map(|c| (-c.slack(z)).max(0.0) / (1.0 + c.bound.abs()))
        .fold(0.0, f64::max)
}

/// Maximizes `Tr(C Z)` subject to the problem's constraints and `Z >= 0`.
pub fn solve_sdp(problem: &SdpProblem) -> Result<SdpSolution> {
    let n = problem.order();
    let rows = normalize(&problem.constraints);
    let p = rows.len();
    let c_scale = problem.objective.norm();
    let c_herm = if c_scale > 0.0 {
        &problem.objective * Complex64::from(-1.0 / c_scale)
    } else {
        CMat::zeros(n, n)
    };
    let mut cone_rows = Vec::with_capacity(p);
    let mut b = DVector::zeros(p);
    for (i, r) in rows.iter().enumerate() {
        let mut lin = DVector::zeros(p);
        lin[i] = match r.sense {
            Sense::Leq => 1.0,
            Sense::Geq => -1.0,
        };
        cone_rows.push(ConeRow { herm: r.a.clone(), lin });
        b[i] = r.bound;
    }
    let program = ConeProgram {
        n,
        p,
        c_herm,
        c_lin: DVector::zeros(p),
        rows: cone_rows,
        b,
    };
    let out = program.solve(&IpmSettings::default())?;
    let unit = if c_scale > 0.0 { c_scale } else { 1.0 };
    let trace = out
        .trace
        .iter()
        .map(|r| IterationRecord {
            // back to the maximization form in caller units
            primal_objective: -r.primal_objective * unit,
            dual_objective: -r.dual_objective * unit,
            residual_slack: r.residual_slack * unit,
            complementarity: r.complementarity * unit,
            ..*r
        })
        .collect();
    match out.status {
        IpmStatus::PrimalInfeasible => Ok(SdpSolution {
            z: CMat::zeros(n, n),
            status: SdpStatus::Infeasible,
            objective_value: f64::NEG_INFINITY,
            max_constraint_violation: f64::INFINITY,
            duality_gap: f64::INFINITY,
            iterations: out.iterations,
            infeasibility_reason: Some(format!(
                "constraints admit no PSD solution: {}",
                out.certificate.unwrap_or_default()
            )),
            trace,
        }),
        IpmStatus::DualInfeasible => Err(Error::Unbounded),
        IpmStatus::Optimal | IpmStatus::MaxIterations => {
            let z = out.x_herm;
            let objective_value = re_inner(&problem.objective, &z);
            Ok(SdpSolution {
                max_constraint_violation: violation(&problem.constraints, &z),
                duality_gap: (out.primal_objective - out.dual_objective).abs() * unit,
                status: if out.status == IpmStatus::Optimal {
                    SdpStatus::Optimal
                } else {
                    SdpStatus::MaxIterations
                },
                z,
                objective_value,
                iterations: out.iterations,
                infeasibility_reason: None,
                trace,
            })
        }
    }
}

/// Max-slack feasibility: maximizes `t` with every constraint holding with
/// normalized slack at least `t`. Feasible (status optimal) iff
/// `t >= -1e-8`; otherwise the least-violating point is returned with status
/// infeasible. Slacks are measured after scaling each row by
/// `max(||A_i||_F, |b_i|)`, and `t` is capped at 1.
pub fn solve_feasibility(constraints: &[Constraint]) -> Result<SdpSolution> {
    let first = constraints
        .first()
        .ok_or_else(|| Error::InvalidInput("feasibility problem needs at least one constraint".into()))?;
    let n = first.a.nrows();
    // Validation and symmetrization.
    let problem = SdpProblem::new(CMat::zeros(n, n), constraints.to_vec())?;
    let rows = normalize(&problem.constraints);
    if rows.is_empty() {
        return Err(Error::InvalidInput("all constraints are trivial".into()));
    }
    let m = rows.len();
    // t = t0 + u with u >= 0, where t0 is the slack of Z = 0.
    let t0 = rows
        .iter()
        .map(|r| match r.sense {
            Sense::Geq => -r.bound,
            Sense::Leq => r.bound,
        })
        .fold(f64::INFINITY, f64::min);
    let t_cap = 1.0f64.max(t0);
    // Orthant layout: [row slacks (m), u, cap slack].
    let p = m + 2;
    let u_idx = m;
    let cap_idx = m + 1;
    let mut cone_rows = Vec::with_capacity(m + 1);
    let mut b = DVector::zeros(m + 1);
    for (i, r) in rows.iter().enumerate() {
        let mut lin = DVector::zeros(p);
        match r.sense {
            // Tr(A Z) - s - u = b + t0
            Sense::Geq => {
                lin[i] = -1.0;
                lin[u_idx] = -1.0;
                b[i] = r.bound + t0;
            }
            // Tr(A Z) + s + u = b - t0
            Sense::Leq => {
                lin[i] = 1.0;
                lin[u_idx] = 1.0;
                b[i] = r.bound - t0;
            }
        }
        cone_rows.push(ConeRow { herm: r.a.clone(), lin });
    }
    let mut lin = DVector::zeros(p);
    lin[u_idx] = 1.0;
    lin[cap_idx] = 1.0;
    cone_rows.push(ConeRow { herm: CMat::zeros(n, n), lin });
    b[m] = t_cap - t0;

    let mut c_lin = DVector::zeros(p);
    c_lin[u_idx] = -1.0;
    let program = ConeProgram {
        n,
        p,
        c_herm: CMat::zeros(n, n),
        c_lin,
        rows: cone_rows,
        b,
    };
    let out = program.solve(&IpmSettings::default())?;
    match out.status {
        IpmStatus::Optimal | IpmStatus::MaxIterations => {
            let z = out.x_herm;
            let t = t0 + out.x_lin[u_idx];
            let status = if out.status == IpmStatus::MaxIterations {
                SdpStatus::MaxIterations
            } else if t >= -FEASIBILITY_SLACK_TOL {
                SdpStatus::Optimal
            } else {
                SdpStatus::Infeasible
            };
            let infeasibility_reason = (status == SdpStatus::Infeasible)
                .then(|| format!("maximum normalized slack is {t:.3e} < 0"));
            Ok(SdpSolution {
                max_constraint_violation: violation(&problem.constraints, &z),
                duality_gap: (out.primal_objective - out.dual_objective).abs(),
                z,
                status,
                objective_value: t,
                iterations: out.iterations,
                infeasibility_reason,
                trace: out.trace,
            })
        }
        // The slack problem always has Z = 0, u = 0 as a feasible point and
        // is bounded by the cap; reaching here means numerical breakdown.
        IpmStatus::PrimalInfeasible | IpmStatus::DualInfeasible => Err(Error::Numerical(
            "max-slack problem reported infeasible or unbounded".into(),
        )),
    }
}
