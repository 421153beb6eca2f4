//! Small dense two-phase simplex solver for bounded-variable linear programs.
//!
//! Sized for the estimator's problems (a handful of variables and rows).
//! Variables are rescaled by the magnitude of their bounds and rows by their
//! largest coefficient before pivoting; fixed variables are substituted out.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Constraint {
    pub label: &'static str,
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimize `objective · x` subject to `lower <= x <= upper` and the constraints.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            lower,
            upper,
            constraints: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        label: &'static str,
        coefficients: Vec<f64>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            label,
            coefficients,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Value of the objective at `x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any bound or constraint at `x`, relative to the row scale.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((lo, hi), v) in self.lower.iter().zip(&self.upper).zip(x) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for c in &self.constraints {
            let lhs = dot(&c.coefficients, x);
            let scale = c
                .coefficients
                .iter()
                .zip(x)
                .map(|(a, v)| (a * v).abs())
                .sum::<f64>()
                + c.rhs.abs();
            let scale = scale.max(f64::MIN_POSITIVE);
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        worst
    }

    /// Indices of constraints that hold with equality at `x` (within `tol` relative).
    pub fn active_set(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let lhs = dot(&c.coefficients, x);
                (lhs - c.rhs).abs() <= tol * (c.rhs.abs() + lhs.abs()).max(f64::MIN_POSITIVE)
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.num_vars();
        if self.lower.len() != n
            || self.upper.len() != n
            || self.constraints.iter().any(|c| c.coefficients.len() != n)
        {
            return Err(Error::Config("linear program dimensions disagree".into()));
        }
        let infeasible = || LpSolution {
            status: LpStatus::Infeasible,
            x: vec![f64::NAN; n],
            objective: f64::NAN,
        };
        for j in 0..n {
            if !(self.lower[j].is_finite() && self.upper[j].is_finite()) {
                return Err(Error::Config(
                    "linear program variables must have finite bounds".into(),
                ));
            }
            if self.lower[j] > self.upper[j] {
                return Ok(infeasible());
            }
        }

        // Free columns: variables whose bounds differ; everything else is fixed.
        let scale: Vec<f64> = (0..n)
            .map(|j| {
                self.lower[j]
                    .abs()
                    .max(self.upper[j].abs())
                    .max(f64::MIN_POSITIVE)
            })
            .collect();
        let free: Vec<usize> = (0..n)
            .filter(|&j| self.upper[j] - self.lower[j] > 1e-15 * scale[j])
            .collect();
        let width: Vec<f64> = free
            .iter()
            .map(|&j| (self.upper[j] - self.lower[j]) / scale[j])
            .collect();
        let nf = free.len();

        // Rows over shifted, scaled free variables s in [0, width].
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        for c in &self.constraints {
            let base: f64 = (0..n).map(|j| c.coefficients[j] * self.lower[j]).sum();
            let magnitude: f64 = (0..n)
                .map(|j| (c.coefficients[j] * self.lower[j]).abs())
                .sum::<f64>()
                + c.rhs.abs();
            let mut coef: Vec<f64> = free.iter().map(|&j| c.coefficients[j] * scale[j]).collect();
            let mut rhs = c.rhs - base;
            let norm = coef.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if norm <= 1e-300 {
                let tol = FEAS_TOL * magnitude.max(f64::MIN_POSITIVE);
                let ok = match c.relation {
                    Relation::Le => rhs >= -tol,
                    Relation::Ge => rhs <= tol,
                    Relation::Eq => rhs.abs() <= tol,
                };
                if !ok {
                    return Ok(infeasible());
                }
                continue;
            }
            coef.iter_mut().for_each(|a| *a /= norm);
            rhs /= norm;
            rows.push((coef, c.relation, rhs));
        }
        for (k, &w) in width.iter().enumerate() {
            let mut coef = vec![0.0; nf];
            coef[k] = 1.0;
            rows.push((coef, Relation::Le, w));
        }

        let cost: Vec<f64> = free.iter().map(|&j| self.objective[j] * scale[j]).collect();
        let Some(s) = Tableau::solve(rows, &cost)? else {
            return Ok(infeasible());
        };

        let mut x = self.lower.clone();
        for (k, &j) in free.iter().enumerate() {
            x[j] = (self.lower[j] + s[k] * scale[j]).clamp(self.lower[j], self.upper[j]);
        }
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: self.evaluate(&x),
            x,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense tableau for `min c·s`, `s >= 0`, rows in `{<=, >=, =}` form.
struct Tableau {
    /// `m` rows of `cols + 1` entries; the last entry is the right-hand side.
    data: Vec<f64>,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    /// Returns `None` when infeasible. Problems here are always bounded
    /// because every structural variable carries an upper-bound row.
    fn solve(rows: Vec<(Vec<f64>, Relation, f64)>, cost: &[f64]) -> Result<Option<Vec<f64>>> {
        let n = cost.len();
        let m = rows.len();
        let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let mut art_rows = Vec::new();
        // Normalize rhs >= 0.
        let rows: Vec<(Vec<f64>, Relation, f64)> = rows
            .into_iter()
            .map(|(mut a, rel, b)| {
                if b < 0.0 {
                    a.iter_mut().for_each(|v| *v = -*v);
                    let rel = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (a, rel, -b)
                } else {
                    (a, rel, b)
                }
            })
            .collect();
        for (i, r) in rows.iter().enumerate() {
            if r.1 != Relation::Le {
                art_rows.push(i);
            }
        }
        let art_start = n + slack_count;
        let cols = art_start + art_rows.len();
        let width = cols + 1;
        let mut t = Tableau {
            data: vec![0.0; m * width],
            m,
            cols,
            basis: vec![0; m],
        };
        let mut slack = n;
        let mut art = art_start;
        for (i, (a, rel, b)) in rows.iter().enumerate() {
            let row = &mut t.data[i * width..(i + 1) * width];
            row[..n].copy_from_slice(a);
            row[cols] = *b;
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    t.basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
            }
        }
        let rhs_scale = 1.0 + rows.iter().fold(0.0f64, |acc, r| acc.max(r.2));

        if !art_rows.is_empty() {
            let mut phase1 = vec![0.0; cols];
            phase1[art_start..].iter_mut().for_each(|c| *c = 1.0);
            t.optimize(&phase1, cols)?;
            let infeasibility: f64 = (0..m)
                .filter(|&r| t.basis[r] >= art_start)
                .map(|r| t.rhs(r))
                .sum();
            if infeasibility > FEAS_TOL * rhs_scale {
                return Ok(None);
            }
            // Drive remaining (zero-valued) artificials out of the basis.
            for r in 0..m {
                if t.basis[r] >= art_start {
                    if let Some(c) = (0..art_start).find(|&c| t.at(r, c).abs() > PIVOT_TOL) {
                        t.pivot(r, c);
                    }
                }
            }
        }

        let mut phase2 = vec![0.0; cols];
        phase2[..n].copy_from_slice(cost);
        // Artificials may not re-enter.
        t.optimize(&phase2, art_start)?;

        let mut s = vec![0.0; n];
        for r in 0..m {
            if t.basis[r] < n {
                s[t.basis[r]] = t.rhs(r).max(0.0);
            }
        }
        Ok(Some(s))
    }

    /// Primal simplex on the current basis; columns `>= allowed` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        let mut reduced = vec![0.0; self.cols];
        for pivots in 0..MAX_PIVOTS {
            // reduced_j = c_j - c_B B^{-1} A_j; the tableau already stores B^{-1} A.
            reduced[..self.cols].copy_from_slice(&cost[..self.cols]);
            for r in 0..self.m {
                let cb = cost[self.basis[r]];
                if cb != 0.0 {
                    for (c, red) in reduced.iter_mut().enumerate() {
                        *red -= cb * self.at(r, c);
                    }
                }
            }
            // Dantzig pricing, switching to Bland's rule to escape cycling.
            let bland = pivots > 50;
            let mut entering = None;
            let mut best = -1e-12;
            for (c, &red) in reduced.iter().enumerate().take(allowed) {
                if red < best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = red;
                }
            }
            let Some(col) = entering else { return Ok(()) };

            let mut leaving = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.m {
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    let better = ratio < best_ratio - 1e-15
                        || (ratio <= best_ratio + 1e-15
                            && leaving.is_some_and(|l: usize| self.basis[r] < self.basis[l]));
                    if leaving.is_none() || better {
                        best_ratio = ratio;
                        leaving = Some(r);
                    }
                }
            }
            let Some(row) = leaving else {
                return Err(Error::Numeric("linear program is unbounded"));
            };
            self.pivot(row, col);
        }
        Err(Error::Numeric("simplex pivot limit exceeded"))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.cols + 1;
        let p = self.at(row, col);
        for v in &mut self.data[row * width..(row + 1) * width] {
            *v /= p;
        }
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..width {
                let delta = factor * self.data[row * width + c];
                self.data[r * width + c] -= delta;
            }
            self.data[r * width + col] = 0.0;
        }
        self.basis[row] = col;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0], vec![0.0, 0.0], vec![100.0, 100.0]);
        lp.push("a", vec![1.0, 0.0], Relation::Le, 4.0);
        lp.push("b", vec![0.0, 2.0], Relation::Le, 12.0);
        lp.push("c", vec![3.0, 2.0], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.objective + 36.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y + 3z st x + y + z = 1, y >= 0.2, bounds [0, 1]
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0], vec![0.0; 3], vec![1.0; 3]);
        lp.push("sum", vec![1.0, 1.0, 1.0], Relation::Eq, 1.0);
        lp.push("y", vec![0.0, 1.0, 0.0], Relation::Ge, 0.2);
        let s = lp.solve().unwrap();
        assert!((s.objective - 1.2).abs() < 1e-12);
        assert!(lp.violation(&s.x) < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2]);
        lp.push("too big", vec![1.0, 1.0], Relation::Ge, 3.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn fixed_variables_are_substituted() {
        let mut lp = LinearProgram::new(vec![1.0, -1.0], vec![0.3, 0.0], vec![0.3, 1.0]);
        lp.push("link", vec![1.0, 1.0], Relation::Eq, 0.8);
        let s = lp.solve().unwrap();
        assert!((s.x[1] - 0.5).abs() < 1e-12);
        let mut all_fixed = LinearProgram::new(vec![1.0], vec![0.25], vec![0.25]);
        all_fixed.push("eq", vec![2.0], Relation::Eq, 0.5);
        assert_eq!(all_fixed.solve().unwrap().objective, 0.25);
        all_fixed.constraints[0].rhs = 0.6;
        assert_eq!(all_fixed.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn tiny_magnitudes_are_handled() {
        // Yields of order 1e-7 with count-scale coefficients.
        let mut lp = LinearProgram::new(vec![1.0, 1.0], vec![1e-7, 2e-7], vec![3e-7, 5e-7]);
        lp.push("joint", vec![1e9, 1e9], Relation::Ge, 500.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 5e-7).abs() < 1e-18);
        assert!(lp.violation(&s.x) < 1e-12);
    }
}
