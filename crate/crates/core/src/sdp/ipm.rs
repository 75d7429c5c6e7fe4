//! Homogeneous self-dual primal-dual interior-point method on the product of
//! one Hermitian PSD cone and a nonnegative orthant.
//!
//! Standard form (minimization):
//!
//! ```text
//!   min <c, x>   s.t.  A x = b,  x = (X, x_l),  X in H^n_+,  x_l >= 0
//!   max b^T y    s.t.  A^* y + s = c
//! ```
//!
//! The embedding adds `tau` and `kappa` so infeasibility shows up as
//! `tau -> 0` with a certificate in `y` (primal) or `x` (dual). Directions use
//! Nesterov-Todd scaling with a Mehrotra predictor-corrector. The scaling is
//! rebuilt every iteration from Cholesky factors: with `X = Lx Lx^H`,
//! `S = Ls Ls^H` and `Ls^H Lx = U diag(lambda) V^H`, the matrix
//! `R = Lx V diag(lambda)^{-1/2}` satisfies `R^H S R = R^{-1} X R^{-H} = diag(lambda)`.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, re_inner};
use crate::model::CMat;

/// One linear equality row: `<herm, X> + lin . x_l = b_i`.
#[derive(Debug, Clone)]
pub(crate) struct ConeRow {
    pub herm: CMat,
    pub lin: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    pub n: usize,
    pub p: usize,
    pub c_herm: CMat,
    pub c_lin: DVector<f64>,
    pub rows: Vec<ConeRow>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
}

/// Per-iteration diagnostics, in the normalized (`/ tau`) variables of the
/// minimization form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `|y . r_p| + |<x, r_d>|` bound on how far the objective gap may dip
    /// below the complementarity `<x, s>` while iterates are infeasible.
    pub residual_slack: f64,
    pub complementarity: f64,
    pub tau: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    pub status: IpmStatus,
    pub x_herm: CMat,
    pub x_lin: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub certificate: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub relaxed_tol: f64,
    pub infeasibility_tol: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iter: 120,
            tol: 1e-9,
            relaxed_tol: 1e-7,
            infeasibility_tol: 1e-8,
        }
    }
}

/// An element of the cone's ambient space.
#[derive(Debug, Clone)]
struct Point {
    h: CMat,
    l: DVector<f64>,
}

impl Point {
    fn inner(&self, other: &Point) -> f64 {
        re_inner(&self.h, &other.h) + self.l.dot(&other.l)
    }

    fn axpy(&mut self, alpha: f64, other: &Point) {
        let a = Complex64::from(alpha);
        self.h.zip_apply(&other.h, |s, o| *s += a * o);
        self.l.axpy(alpha, &other.l, 1.0);
    }

    fn scaled(&self, alpha: f64) -> Point {
        Point {
            h: &self.h * Complex64::from(alpha),
            l: &self.l * alpha,
        }
    }

    fn norm(&self) -> f64 {
        (self.h.norm_squared() + self.l.norm_squared()).sqrt()
    }
}

struct Scaling {
    r: CMat,
    r_adj: CMat,
    r_inv: CMat,
    r_inv_adj: CMat,
    lambda: DVector<f64>,
    /// `sqrt(x_l / s_l)`.
    wl: DVector<f64>,
    /// `sqrt(x_l s_l)`.
    lambda_l: DVector<f64>,
}

impl Scaling {
    fn new(x: &Point, s: &Point) -> Option<Scaling> {
        let n = x.h.nrows();
        let lx = Cholesky::new(hermitize(&x.h))?.l();
        let ls = Cholesky::new(hermitize(&s.h))?.l();
        let prod = ls.adjoint() * &lx;
        let svd = SVD::new(prod, false, true);
        let v_t = svd.v_t?;
        let lambda = svd.singular_values;
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        let v = v_t.adjoint();
        let inv_sqrt = DMatrix::from_diagonal(&lambda.map(|l| Complex64::from(1.0 / l.sqrt())));
        let sqrt = DMatrix::from_diagonal(&lambda.map(|l| Complex64::from(l.sqrt())));
        let r = &lx * &v * inv_sqrt;
        let lx_inv = lx.solve_lower_triangular(&CMat::identity(n, n))?;
        let r_inv = sqrt * v_t * lx_inv;
        let wl = x.l.zip_map(&s.l, |a, b| (a / b).sqrt());
        let lambda_l = x.l.zip_map(&s.l, |a, b| (a * b).sqrt());
        Some(Scaling {
            r_adj: r.adjoint(),
            r_inv_adj: r_inv.adjoint(),
            r,
            r_inv,
            lambda,
            wl,
            lambda_l,
        })
    }

    /// `W x W` with `W = R R^H` on the matrix block, `w^2 x` on the orthant.
    fn apply_w(&self, p: &Point) -> Point {
        let inner = &self.r_adj * &p.h * &self.r;
        Point {
            h: hermitize(&(&self.r * inner * &self.r_adj)),
            l: p.l.zip_map(&self.wl, |v, w| v * w * w),
        }
    }

    fn scaled_x(&self, dx: &Point) -> Point {
        Point {
            h: hermitize(&(&self.r_inv * &dx.h * &self.r_inv_adj)),
            l: dx.l.zip_map(&self.wl, |v, w| v / w),
        }
    }

    fn scaled_s(&self, ds: &Point) -> Point {
        Point {
            h: hermitize(&(&self.r_adj * &ds.h * &self.r)),
            l: ds.l.zip_map(&self.wl, |v, w| v * w),
        }
    }

    /// Maps a scaled complementarity right-hand side `rc` to `D q`, where
    /// `lambda o q = rc` and `D q = R q R^H` (resp. `w q`).
    fn unscale_complementarity(&self, rc: &Point) -> Point {
        let n = self.lambda.len();
        let q = CMat::from_fn(n, n, |i, j| rc.h[(i, j)] * (2.0 / (self.lambda[i] + self.lambda[j])));
        Point {
            h: hermitize(&(&self.r * q * &self.r_adj)),
            l: DVector::from_fn(rc.l.len(), |i, _| rc.l[i] / self.lambda_l[i] * self.wl[i]),
        }
    }

    fn lambda_squared(&self) -> Point {
        Point {
            h: DMatrix::from_diagonal(&self.lambda.map(|l| Complex64::from(l * l))),
            l: self.lambda_l.map(|l| l * l),
        }
    }

    /// Largest step keeping `lambda + alpha * d` in the cone, for `d` in
    /// scaled coordinates.
    fn max_step(&self, d: &Point) -> f64 {
        let n = self.lambda.len();
        let m = CMat::from_fn(n, n, |i, j| {
            d.h[(i, j)] / (self.lambda[i] * self.lambda[j]).sqrt()
        });
        let mut alpha = f64::INFINITY;
        let min_eig = hermitize(&m)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < 0.0 {
            alpha = alpha.min(-1.0 / min_eig);
        }
        for (dv, lv) in d.l.iter().zip(self.lambda_l.iter()) {
            if *dv < 0.0 {
                alpha = alpha.min(-lv / dv);
            }
        }
        alpha
    }
}

/// Jordan product `(a b + b a) / 2` on the matrix block, elementwise on the orthant.
fn jordan(a: &Point, b: &Point) -> Point {
    Point {
        h: hermitize(&(&a.h * &b.h)),
        l: a.l.component_mul(&b.l),
    }
}

struct Direction {
    dx: Point,
    dy: DVector<f64>,
    ds: Point,
    dtau: f64,
    dkappa: f64,
}

impl ConeProgram {
    fn apply_a(&self, x: &Point) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| re_inner(&r.herm, &x.h) + r.lin.dot(&x.l)),
        )
    }

    fn apply_at(&self, y: &DVector<f64>) -> Point {
        let mut h = CMat::zeros(self.n, self.n);
        let mut l = DVector::zeros(self.p);
        for (row, &yi) in self.rows.iter().zip(y.iter()) {
            let c = Complex64::from(yi);
            h.zip_apply(&row.herm, |acc, a| *acc += c * a);
            l.axpy(yi, &row.lin, 1.0);
        }
        Point { h, l }
    }

    fn c(&self) -> Point {
        Point {
            h: self.c_herm.clone(),
            l: self.c_lin.clone(),
        }
    }

    fn identity_point(&self) -> Point {
        Point {
            h: CMat::identity(self.n, self.n),
            l: DVector::from_element(self.p, 1.0),
        }
    }

    /// Schur complement `M_ij = <A_i, W A_j W>`.
    fn schur(&self, scaling: &Scaling) -> DMatrix<f64> {
        let m = self.rows.len();
        let scaled: Vec<CMat> = self
            .rows
            .iter()
            .map(|r| &scaling.r_adj * &r.herm * &scaling.r)
            .collect();
        let wl2 = scaling.wl.map(|w| w * w);
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let lin: f64 = (0..self.p)
                    .map(|k| self.rows[i].lin[k] * self.rows[j].lin[k] * wl2[k])
                    .sum();
                let v = re_inner(&scaled[i], &scaled[j]) + lin;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub(crate) fn solve(&self, settings: &IpmSettings) -> Result<IpmOutcome> {
        let m = self.rows.len();
        let nu = (self.n + self.p) as f64;
        let c = self.c();
        let b = &self.b;
        let b_norm = b.norm();
        let c_norm = c.norm();

        let mut x = self.identity_point();
        let mut s = self.identity_point();
        let mut y = DVector::<f64>::zeros(m);
        let mut tau = 1.0f64;
        let mut kappa = 1.0f64;
        let mut trace = Vec::new();
        let mut best_relaxed: Option<(Point, f64, f64, f64, usize)> = None;
        let mut small_steps = 0usize;

        for iter in 0..settings.max_iter {
            let ax = self.apply_a(&x);
            let aty = self.apply_at(&y);
            let r_p = b * tau - &ax;
            let mut r_d = c.scaled(tau);
            r_d.axpy(-1.0, &aty);
            r_d.axpy(-1.0, &s);
            let cx = c.inner(&x);
            let by = b.dot(&y);
            let r_g = kappa + cx - by;

            let pobj = cx / tau;
            let dobj = by / tau;
            let pres = r_p.norm() / tau / (1.0 + b_norm);
            let dres = r_d.norm() / tau / (1.0 + c_norm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().min(dobj.abs()));
            let xs = x.inner(&s);
            trace.push(IterationRecord {
                primal_objective: pobj,
                dual_objective: dobj,
                primal_residual: pres,
                dual_residual: dres,
                residual_slack: (y.dot(&r_p).abs() + x.inner(&r_d).abs()) / (tau * tau),
                complementarity: xs / (tau * tau),
                tau,
                kappa,
            });

            if pres <= settings.tol && dres <= settings.tol && gap <= settings.tol {
                return Ok(self.finish(IpmStatus::Optimal, &x, tau, pobj, dobj, iter, trace, None));
            }
            if pres <= settings.relaxed_tol && dres <= settings.relaxed_tol && gap <= settings.relaxed_tol {
                best_relaxed = Some((x.clone(), tau, pobj, dobj, iter));
            }
            if by > 0.0 {
                let mut ray = aty.clone();
                ray.axpy(1.0, &s);
                let ratio = ray.norm() / by;
                if ratio <= settings.infeasibility_tol && tau < kappa {
                    let cert = format!(
                        "dual ray with b^T y = {by:.3e} and ||A^* y + s|| = {:.3e}",
                        ray.norm()
                    );
                    return Ok(self.finish(
                        IpmStatus::PrimalInfeasible,
                        &x,
                        tau,
                        pobj,
                        dobj,
                        iter,
                        trace,
                        Some(cert),
                    ));
                }
            }
            if cx < 0.0 {
                let ratio = ax.norm() / (-cx);
                if ratio <= settings.infeasibility_tol && tau < kappa {
                    return Ok(self.finish(
                        IpmStatus::DualInfeasible,
                        &x,
                        tau,
                        pobj,
                        dobj,
                        iter,
                        trace,
                        Some(format!("primal ray with <c, x> = {cx:.3e}")),
                    ));
                }
            }

            let scaling = match Scaling::new(&x, &s) {
                Some(sc) => sc,
                None => break,
            };
            let schur = self.schur(&scaling);
            let factor = factor_schur(schur)?;
            let mu = (xs + tau * kappa) / (nu + 1.0);

            // Quantities shared by both Newton solves.
            let w_rd = scaling.apply_w(&r_d);
            let a_wrd = self.apply_a(&w_rd);
            let w_c = scaling.apply_w(&c);
            let dy2 = factor.solve(&(self.apply_a(&w_c) + b));
            let mut dx2 = scaling.apply_w(&self.apply_at(&dy2));
            dx2.axpy(-1.0, &w_c);
            let denom_base = b.dot(&dy2) - c.inner(&dx2);

            let newton = |eta: f64, rc: &Point, r_tau: f64| -> Direction {
                let dq = scaling.unscale_complementarity(rc);
                let rhs1 = &r_p * eta - self.apply_a(&dq) + &a_wrd * eta;
                let dy1 = factor.solve(&rhs1);
                let mut dx1 = dq;
                dx1.axpy(-eta, &w_rd);
                dx1.axpy(1.0, &scaling.apply_w(&self.apply_at(&dy1)));
                let dtau = (eta * r_g + r_tau / tau - b.dot(&dy1) + c.inner(&dx1))
                    / (denom_base + kappa / tau);
                let dy = dy1 + &dy2 * dtau;
                let mut dx = dx1;
                dx.axpy(dtau, &dx2);
                let mut ds = r_d.scaled(eta);
                ds.axpy(-1.0, &self.apply_at(&dy));
                ds.axpy(dtau, &c);
                let dkappa = (r_tau - kappa * dtau) / tau;
                Direction { dx, dy, ds, dtau, dkappa }
            };

            let step_to_boundary = |d: &Direction, xs_hat: &Point, ss_hat: &Point| -> f64 {
                let mut alpha = scaling.max_step(xs_hat).min(scaling.max_step(ss_hat));
                if d.dtau < 0.0 {
                    alpha = alpha.min(-tau / d.dtau);
                }
                if d.dkappa < 0.0 {
                    alpha = alpha.min(-kappa / d.dkappa);
                }
                alpha
            };

            // Predictor.
            let lam2 = scaling.lambda_squared();
            let rc_aff = lam2.scaled(-1.0);
            let aff = newton(1.0, &rc_aff, -tau * kappa);
            let xa = scaling.scaled_x(&aff.dx);
            let sa = scaling.scaled_s(&aff.ds);
            let alpha_aff = step_to_boundary(&aff, &xa, &sa).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // Corrector.
            let mut rc = lam2.scaled(-1.0);
            rc.axpy(-1.0, &jordan(&xa, &sa));
            for i in 0..self.n {
                rc.h[(i, i)] += Complex64::from(sigma * mu);
            }
            rc.l.add_scalar_mut(sigma * mu);
            let r_tau = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
            let dir = newton(1.0 - sigma, &rc, r_tau);
            let xh = scaling.scaled_x(&dir.dx);
            let sh = scaling.scaled_s(&dir.ds);
            let alpha = (0.99 * step_to_boundary(&dir, &xh, &sh)).min(1.0);
            if !alpha.is_finite() {
                break;
            }

            x.axpy(alpha, &dir.dx);
            s.axpy(alpha, &dir.ds);
            y.axpy(alpha, &dir.dy, 1.0);
            tau += alpha * dir.dtau;
            kappa += alpha * dir.dkappa;
            x.h = hermitize(&x.h);
            s.h = hermitize(&s.h);

            if alpha < 1e-9 {
                small_steps += 1;
                if small_steps >= 3 {
                    break;
                }
            } else {
                small_steps = 0;
            }
        }

        let iterations = trace.len();
        if let Some((bx, btau, pobj, dobj, iter)) = best_relaxed {
            return Ok(self.finish(IpmStatus::Optimal, &bx, btau, pobj, dobj, iter, trace, None));
        }
        let pobj = c.inner(&x) / tau;
        let dobj = b.dot(&y) / tau;
        Ok(self.finish(
            IpmStatus::MaxIterations,
            &x,
            tau,
            pobj,
            dobj,
            iterations,
            trace,
            None,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        status: IpmStatus,
        x: &Point,
        tau: f64,
        pobj: f64,
        dobj: f64,
        iterations: usize,
        trace: Vec<IterationRecord>,
        certificate: Option<String>,
    ) -> IpmOutcome {
        let (x_herm, x_lin) = match status {
            // Certificates live in the unnormalized variables.
            IpmStatus::PrimalInfeasible | IpmStatus::DualInfeasible => {
                (hermitize(&x.h), x.l.clone())
            }
            _ => (hermitize(&(&x.h * Complex64::from(1.0 / tau))), &x.l / tau),
        };
        IpmOutcome {
            status,
            x_herm,
            x_lin,
            primal_objective: pobj,
            dual_objective: dobj,
            iterations,
            trace,
            certificate,
        }
    }
}

struct SchurFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl SchurFactor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

fn factor_schur(mut m: DMatrix<f64>) -> Result<SchurFactor> {
    let scale = m.diagonal().iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    for attempt in 0..6 {
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(SchurFactor { chol });
        }
        let reg = scale * 1e-14 * 100f64.powi(attempt);
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
    }
    Err(Error::Numerical("Schur complement is not positive definite".into()))
}
