//! SOR for the per-step linear system and projected SOR for the range-bounded
//! linear complementarity problem
//!
//! ```text
//! (A u)_I = b_I  where w_I < u_I < v_I
//! (A u)_I >= b_I where u_I = w_I
//! (A u)_I <= b_I where u_I = v_I
//! ```
//!
//! Both iterations sweep rows in lexicographic order, updating in place, and
//! share one update routine; PSOR only adds the clamp `min(max(u_hat, w), v)`.
//! With bounds that never bind the two are bit-identical.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembler::PentaSystem;
use crate::error::{Error, Result};

/// Magnitude standing in for an absent bound.
pub const UNBOUNDED: f64 = 1e9;

/// Penalty slope applied to bound violations in [`complementarity_residual`].
pub const BOUND_VIOLATION_PENALTY: f64 = 1e6;

/// Square system accessed row by row.
pub trait RowSystem {
    fn dim(&self) -> usize;
    fn diagonal(&self, row: usize) -> f64;
    fn rhs(&self, row: usize) -> f64;
    /// `sum_{J != row} a_{row,J} x_J`, summed in a fixed order.
    fn off_diagonal_dot(&self, row: usize, x: &[f64]) -> f64;
    /// `a_{row,row-1}`, zero for the first row.
    fn sub_diagonal(&self, row: usize) -> f64;
    /// [`RowSystem::off_diagonal_dot`] without the `a_{row,row-1}` term.
    fn dot_without_sub_diagonal(&self, row: usize, x: &[f64]) -> f64;

    fn residual(&self, row: usize, x: &[f64]) -> f64 {
        self.diagonal(row) * x[row] + self.off_diagonal_dot(row, x) - self.rhs(row)
    }
}

impl RowSystem for PentaSystem {
    fn dim(&self) -> usize {
        PentaSystem::dim(self)
    }

    #[inline]
    fn diagonal(&self, row: usize) -> f64 {
        self.rows()[row].center
    }

    #[inline]
    fn rhs(&self, row: usize) -> f64 {
        PentaSystem::rhs(self)[row]
    }

    #[inline]
    fn off_diagonal_dot(&self, row: usize, x: &[f64]) -> f64 {
        PentaSystem::off_diagonal_dot(self, row, x)
    }

    #[inline]
    fn sub_diagonal(&self, row: usize) -> f64 {
        if row > 0 {
            self.rows()[row].west
        } else {
            0.0
        }
    }

    #[inline]
    fn dot_without_sub_diagonal(&self, row: usize, x: &[f64]) -> f64 {
        PentaSystem::dot_without_west(self, row, x)
    }
}

/// Small dense system, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DenseSystem {
    pub fn new(rows: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("dense system must be {n}x{n}")));
        }
        Ok(Self { n, a: rows.concat(), b })
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.a[row * self.n + col]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.a)
    }
}

impl RowSystem for DenseSystem {
    fn dim(&self) -> usize {
        self.n
    }

    fn diagonal(&self, row: usize) -> f64 {
        self.entry(row, row)
    }

    fn rhs(&self, row: usize) -> f64 {
        self.b[row]
    }

    fn off_diagonal_dot(&self, row: usize, x: &[f64]) -> f64 {
        let r = &self.a[row * self.n..(row + 1) * self.n];
        r.iter()
            .zip(x)
            .enumerate()
            .filter(|&(col, _)| col != row)
            .map(|(_, (a, x))| a * x)
            .sum()
    }

    fn sub_diagonal(&self, row: usize) -> f64 {
        if row > 0 {
            self.entry(row, row - 1)
        } else {
            0.0
        }
    }

    fn dot_without_sub_diagonal(&self, row: usize, x: &[f64]) -> f64 {
        let r = &self.a[row * self.n..(row + 1) * self.n];
        r.iter()
            .zip(x)
            .enumerate()
            .filter(|&(col, _)| col != row && col + 1 != row)
            .map(|(_, (a, x))| a * x)
            .sum()
    }
}

/// Lower and upper obstacles per unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape("bound vectors differ in length".into()));
        }
        for (k, (w, v)) in lower.iter().zip(&upper).enumerate() {
            if !(w < v) || !w.is_finite() || !v.is_finite() {
                return Err(Error::Param(format!("bounds at {k} need finite w < v, got [{w}, {v}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![-UNBOUNDED; n], upper: vec![UNBOUNDED; n] }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn project(&self, k: usize, x: f64) -> f64 {
        x.clamp(self.lower[k], self.upper[k])
    }

    fn touch_tolerance(&self, k: usize) -> f64 {
        1e-12 * (1.0 + self.lower[k].abs() + self.upper[k].abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub omega: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { omega: 1.2, tol: 1e-9, max_sweeps: 2000 }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::Param(format!("omega must lie in (0, 2), got {}", self.omega)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Param(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Param("max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub sweeps: usize,
    /// Infinity norm of the change made by the last sweep.
    pub sweep_difference: f64,
    /// `|A u - b|_inf` over unknowns strictly between their bounds.
    pub linear_residual: f64,
    pub complementarity_residual: f64,
    pub converged: bool,
}

/// In-place relaxation sweeps over a row system, optionally projected.
pub struct Relaxation<'a, S: RowSystem> {
    sys: &'a S,
    bounds: Option<&'a Bounds>,
    omega: f64,
    /// `omega / a_ii` per row.
    scale: Vec<f64>,
    /// `omega * a_{i,i-1} / a_ii` per row.
    scaled_sub: Vec<f64>,
    u: Vec<f64>,
}

impl<'a, S: RowSystem> Relaxation<'a, S> {
    /// SOR iteration from `u0`.
    pub fn sor(sys: &'a S, u0: &[f64], omega: f64) -> Result<Self> {
        Self::build(sys, None, u0, omega)
    }

    /// PSOR iteration; `u0` is clamped into the bounds first.
    pub fn projected(sys: &'a S, bounds: &'a Bounds, u0: &[f64], omega: f64) -> Result<Self> {
        if bounds.len() != sys.dim() {
            return Err(Error::Shape(format!("{} bounds for {} unknowns", bounds.len(), sys.dim())));
        }
        Self::build(sys, Some(bounds), u0, omega)
    }

    fn build(sys: &'a S, bounds: Option<&'a Bounds>, u0: &[f64], omega: f64) -> Result<Self> {
        if u0.len() != sys.dim() {
            return Err(Error::Shape(format!("initial guess has {} entries, system {}", u0.len(), sys.dim())));
        }
        if let Some(row) = (0..sys.dim()).find(|&r| !(sys.diagonal(r) > 0.0)) {
            return Err(Error::Solver(format!("diagonal entry {} at row {row} is not positive", sys.diagonal(row))));
        }
        let mut u = u0.to_vec();
        if let Some(b) = bounds {
            for (k, x) in u.iter_mut().enumerate() {
                *x = b.project(k, *x);
            }
        }
        let scale: Vec<f64> = (0..sys.dim()).map(|r| omega / sys.diagonal(r)).collect();
        let scaled_sub = scale.iter().enumerate().map(|(r, s)| s * sys.sub_diagonal(r)).collect();
        Ok(Self { sys, bounds, omega, scale, scaled_sub, u })
    }

    /// One lexicographic sweep; returns the infinity norm of the change.
    ///
    /// The freshly updated `u[row - 1]` enters last so the rest of the row
    /// update stays off the sweep's serial dependency chain.
    pub fn sweep(&mut self) -> f64 {
        let keep = 1.0 - self.omega;
        let mut diff: f64 = 0.0;
        let mut prev = 0.0;
        for row in 0..self.sys.dim() {
            let old = self.u[row];
            let rest = self.sys.rhs(row) - self.sys.dot_without_sub_diagonal(row, &self.u);
            let base = keep * old + self.scale[row] * rest;
            let mut new = base - self.scaled_sub[row] * prev;
            if let Some(b) = self.bounds {
                new = b.project(row, new);
            }
            self.u[row] = new;
            prev = new;
            diff = diff.max((new - old).abs());
        }
        diff
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    /// Sweeps until the sweep difference drops below `tol` and the
    /// complementarity residual is at most `tol` as well, or `max_sweeps` runs out.
    fn run(mut self, p: &SolverParams) -> Result<(Vec<f64>, SolveReport)> {
        p.validate()?;
        let unbounded;
        let bounds = match self.bounds {
            Some(b) => b,
            None => {
                unbounded = Bounds::unbounded(self.u.len());
                &unbounded
            }
        };
        let mut sweeps = 0;
        let mut diff = f64::INFINITY;
        let mut converged = false;
        while sweeps < p.max_sweeps {
            diff = self.sweep();
            sweeps += 1;
            if !diff.is_finite() {
                let k = self.u.iter().position(|x| !x.is_finite()).unwrap_or(0);
                return Err(Error::NonFinite(k));
            }
            if diff < p.tol && complementarity_residual(self.sys, bounds, &self.u) <= p.tol {
                converged = true;
                break;
            }
        }
        let report = SolveReport {
            sweeps,
            sweep_difference: diff,
            linear_residual: linear_residual(self.sys, bounds, &self.u),
            complementarity_residual: complementarity_residual(self.sys, bounds, &self.u),
            converged,
        };
        Ok((self.u, report))
    }
}

pub fn sor_solve<S: RowSystem>(sys: &S, u0: &[f64], p: &SolverParams) -> Result<(Vec<f64>, SolveReport)> {
    p.validate()?;
    Relaxation::sor(sys, u0, p.omega)?.run(p)
}

pub fn psor_solve<S: RowSystem>(
    sys: &S,
    bounds: &Bounds,
    u0: &[f64],
    p: &SolverParams,
) -> Result<(Vec<f64>, SolveReport)> {
    p.validate()?;
    Relaxation::projected(sys, bounds, u0, p.omega)?.run(p)
}

fn linear_residual<S: RowSystem>(sys: &S, bounds: &Bounds, u: &[f64]) -> f64 {
    (0..sys.dim())
        .filter(|&k| {
            let t = bounds.touch_tolerance(k);
            u[k] > bounds.lower[k] + t && u[k] < bounds.upper[k] - t
        })
        .map(|k| sys.residual(k, u).abs())
        .fold(0.0, f64::max)
}

/// Largest violation of the complementarity conditions. Values outside the
/// bounds are charged `BOUND_VIOLATION_PENALTY` per unit of violation.
pub fn complementarity_residual<S: RowSystem>(sys: &S, bounds: &Bounds, u: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..sys.dim() {
        let (w, v) = (bounds.lower[k], bounds.upper[k]);
        let t = bounds.touch_tolerance(k);
        let x = u[k];
        let violation = (w - x).max(x - v);
        let r = if violation > t {
            BOUND_VIOLATION_PENALTY * violation
        } else {
            let res = sys.residual(k, u);
            if (x - w).abs() <= t {
                (-res).max(0.0)
            } else if (x - v).abs() <= t {
                res.max(0.0)
            } else {
                res.abs()
            }
        };
        worst = worst.max(r);
    }
    worst
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Activity {
    Free,
    AtLower,
    AtUpper,
}

/// Brute-force LCP solution by enumerating every assignment of unknowns to
/// {free, at lower bound, at upper bound}. Exponential; meant for `n <= 20`
/// and validation only.
pub fn dense_lcp_oracle(sys: &DenseSystem, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = sys.dim();
    if w.len() != n || v.len() != n {
        return Err(Error::Shape("bounds do not match the system".into()));
    }
    if n > 20 {
        return Err(Error::Param(format!("oracle limited to 20 unknowns, got {n}")));
    }
    let a = sys.matrix();
    let scale = 1.0 + a.amax() + sys.b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale;
    let choices = [Activity::Free, Activity::AtLower, Activity::AtUpper];
    'assignments: for assignment in (0..n).map(|_| choices).multi_cartesian_product() {
        let mut x = vec![0.0; n];
        let free: Vec<usize> = (0..n).filter(|&k| assignment[k] == Activity::Free).collect();
        for k in 0..n {
            match assignment[k] {
                Activity::AtLower => x[k] = w[k],
                Activity::AtUpper => x[k] = v[k],
                Activity::Free => {}
            }
        }
        if !free.is_empty() {
            let m = free.len();
            let reduced = DMatrix::from_fn(m, m, |r, c| a[(free[r], free[c])]);
            let rhs = DVector::from_fn(m, |r, _| {
                let row = free[r];
                sys.b[row]
                    - (0..n)
                        .filter(|&c| assignment[c] != Activity::Free)
                        .map(|c| a[(row, c)] * x[c])
                        .sum::<f64>()
            });
            let Some(sol) = reduced.lu().solve(&rhs) else { continue };
            for (r, &k) in free.iter().enumerate() {
                let val = sol[r];
                if !val.is_finite() || val < w[k] - tol || val > v[k] + tol {
                    continue 'assignments;
                }
                x[k] = val;
            }
        }
        for (k, activity) in assignment.iter().enumerate() {
            let res = sys.residual(k, &x);
            let ok = match activity {
                Activity::Free => res.abs() <= tol,
                Activity::AtLower => res >= -tol,
                Activity::AtUpper => res <= tol,
            };
            if !ok {
                continue 'assignments;
            }
        }
        return Ok(x);
    }
    Err(Error::OracleFailure)
}
