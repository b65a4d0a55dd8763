//! Dense-tableau bounded primal simplex.
//!
//! Variables are shifted to `[0, upper - lower]` and kept nonbasic at either
//! bound, so finite upper bounds never become rows. Phase one minimizes the sum
//! of artificials; phase two the real objective. Pricing is Dantzig (largest
//! reduced cost) for the first `dantzig_pivots` pivots and Bland's rule
//! afterwards, which rules out cycling. Nothing here is randomized, so equal
//! programs always produce equal solutions.

use crate::{LinearProgram, LpSolution, LpStatus, Relation, SolveOptions};

const PIVOT_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

/// Number of tableau cells the dense solver would allocate for `lp`.
pub fn tableau_cells(lp: &LinearProgram) -> usize {
    let m = lp.num_constraints();
    let slacks = lp
        .constraints()
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();
    m * (lp.num_vars() + slacks + m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`, always equal to `B^-1 A`.
    a: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    /// Reduced costs for the active phase.
    d: Vec<f64>,
    /// Upper bound of each shifted column; `INFINITY` when unbounded.
    upper: Vec<f64>,
    basis: Vec<usize>,
    /// Position in `basis`, or `None` for nonbasic columns.
    basic_row: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    /// Columns that may never enter (artificials after phase one).
    blocked: Vec<bool>,
    pivots: usize,
    scratch: Vec<f64>,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.cols..(i + 1) * self.cols]
    }

    fn value(&self, j: usize) -> f64 {
        match self.basic_row[j] {
            Some(i) => self.beta[i],
            None if self.at_upper[j] => self.upper[j],
            None => 0.0,
        }
    }

    fn load_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * self.cols..(i + 1) * self.cols];
                for (d, &a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for i in 0..self.rows {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn choose_entering(&self, pricing: Pricing, tol: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.cols {
            if self.basic_row[j].is_some() || self.blocked[j] || self.upper[j] <= 0.0 {
                continue;
            }
            let dir = if self.at_upper[j] {
                if self.d[j] > tol {
                    -1.0
                } else {
                    continue;
                }
            } else if self.d[j] < -tol {
                1.0
            } else {
                continue;
            };
            match pricing {
                Pricing::Bland => return Some((j, dir)),
                Pricing::Dantzig => {
                    let score = self.d[j].abs();
                    if score > best_score {
                        best_score = score;
                        best = Some((j, dir));
                    }
                }
            }
        }
        best
    }

    /// Ratio test for moving column `j` in direction `dir`. Returns the step
    /// length and the leaving row (`None` for a bound flip of `j` itself).
    fn ratio_test(&self, j: usize, dir: f64, pricing: Pricing) -> Option<(f64, Option<(usize, bool)>)> {
        let mut step = self.upper[j];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_alpha = 0.0f64;
        for i in 0..self.rows {
            let alpha = dir * self.a[i * self.cols + j];
            let (ratio, to_upper) = if alpha > PIVOT_TOL {
                ((self.beta[i].max(0.0)) / alpha, false)
            } else if alpha < -PIVOT_TOL {
                let ub = self.upper[self.basis[i]];
                if !ub.is_finite() {
                    continue;
                }
                (((ub - self.beta[i]).max(0.0)) / -alpha, true)
            } else {
                continue;
            };
            let take = if ratio < step - TIE_TOL {
                true
            } else if ratio <= step + TIE_TOL {
                match leave {
                    // Prefer a real pivot over a bound flip on ties.
                    None => true,
                    Some((r, _)) => match pricing {
                        Pricing::Bland => self.basis[i] < self.basis[r],
                        Pricing::Dantzig => alpha.abs() > leave_alpha,
                    },
                }
            } else {
                false
            };
            if take {
                step = step.min(ratio);
                leave = Some((i, to_upper));
                leave_alpha = alpha.abs();
            }
        }
        if step.is_infinite() {
            None
        } else {
            Some((step, leave))
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let pivot = self.a[r * cols + j];
        {
            let row = &mut self.a[r * cols..(r + 1) * cols];
            for x in row.iter_mut() {
                *x /= pivot;
            }
            row[j] = 1.0;
        }
        self.scratch.clear();
        self.scratch.extend_from_slice(&self.a[r * cols..(r + 1) * cols]);
        // Only the pivot row's nonzeros matter for the elimination.
        let nz: Vec<usize> = self
            .scratch
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, _)| k)
            .collect();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * cols..(i + 1) * cols];
            for &k in &nz {
                row[k] -= f * self.scratch[k];
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for &k in &nz {
                self.d[k] -= f * self.scratch[k];
            }
            self.d[j] = 0.0;
        }
        let old = self.basis[r];
        self.basic_row[old] = None;
        self.basis[r] = j;
        self.basic_row[j] = Some(r);
        self.pivots += 1;
    }

    fn step(&mut self, pricing: Pricing, rc_tol: f64) -> Step {
        let Some((j, dir)) = self.choose_entering(pricing, rc_tol) else {
            return Step::Optimal;
        };
        let Some((t, leave)) = self.ratio_test(j, dir, pricing) else {
            return Step::Unbounded;
        };
        let cols = self.cols;
        for i in 0..self.rows {
            let alpha = self.a[i * cols + j];
            if alpha != 0.0 {
                self.beta[i] -= dir * t * alpha;
            }
        }
        let entering_value = if self.at_upper[j] { self.upper[j] - t } else { t };
        match leave {
            None => {
                self.at_upper[j] = !self.at_upper[j];
                self.pivots += 1;
            }
            Some((r, to_upper)) => {
                let old = self.basis[r];
                self.at_upper[old] = to_upper;
                self.pivot(r, j);
                self.beta[r] = entering_value;
                self.at_upper[j] = false;
            }
        }
        Step::Moved
    }

    fn run(&mut self, options: &SolveOptions) -> LpStatus {
        loop {
            if self.pivots >= options.max_pivots {
                return LpStatus::IterationLimit;
            }
            let pricing = if self.pivots < options.dantzig_pivots {
                Pricing::Dantzig
            } else {
                Pricing::Bland
            };
            match self.step(pricing, options.reduced_cost_tol) {
                Step::Optimal => return LpStatus::Optimal,
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Moved => {}
            }
        }
    }
}

/// Solves the continuous relaxation of `lp` (integrality flags are ignored).
pub fn solve(lp: &LinearProgram, options: &SolveOptions) -> LpSolution {
    let n = lp.num_vars();
    let m = lp.num_constraints();
    let vars = lp.variables();

    // Slack columns for inequality rows, then at most one artificial per row.
    let mut slack_of = vec![None; m];
    let mut cols = n;
    for (i, c) in lp.constraints().iter().enumerate() {
        if c.relation != Relation::Eq {
            slack_of[i] = Some(cols);
            cols += 1;
        }
    }
    let mut rhs = vec![0.0; m];
    let mut sign = vec![1.0; m];
    for (i, c) in lp.constraints().iter().enumerate() {
        let shifted: f64 = c.coeffs.iter().map(|&(v, a)| a * vars[v.0].lower).sum();
        rhs[i] = c.rhs - shifted;
        if rhs[i] < 0.0 {
            sign[i] = -1.0;
            rhs[i] = -rhs[i];
        }
    }
    let mut artificial_of = vec![None; m];
    for (i, c) in lp.constraints().iter().enumerate() {
        let slack_coeff = match c.relation {
            Relation::Le => sign[i],
            Relation::Ge => -sign[i],
            Relation::Eq => 0.0,
        };
        if slack_coeff != 1.0 {
            artificial_of[i] = Some(cols);
            cols += 1;
        }
    }

    let mut a = vec![0.0; m * cols];
    for (i, c) in lp.constraints().iter().enumerate() {
        let row = &mut a[i * cols..(i + 1) * cols];
        for &(v, coeff) in &c.coeffs {
            row[v.0] += sign[i] * coeff;
        }
        if let Some(s) = slack_of[i] {
            row[s] = match c.relation {
                Relation::Le => sign[i],
                _ => -sign[i],
            };
        }
        if let Some(art) = artificial_of[i] {
            row[art] = 1.0;
        }
    }
    let mut upper = vec![f64::INFINITY; cols];
    for (j, v) in vars.iter().enumerate() {
        upper[j] = v.upper.map_or(f64::INFINITY, |u| u - v.lower);
    }
    let mut basis = Vec::with_capacity(m);
    let mut basic_row = vec![None; cols];
    for i in 0..m {
        let b = artificial_of[i].or(slack_of[i]).expect("row without basic column");
        basis.push(b);
        basic_row[b] = Some(i);
    }

    let mut t = Tableau {
        rows: m,
        cols,
        a,
        beta: rhs,
        d: vec![0.0; cols],
        upper,
        basis,
        basic_row,
        at_upper: vec![false; cols],
        blocked: vec![false; cols],
        pivots: 0,
        scratch: Vec::with_capacity(cols),
    };

    let has_artificials = artificial_of.iter().any(Option::is_some);
    if has_artificials {
        let mut phase1 = vec![0.0; cols];
        for art in artificial_of.iter().flatten() {
            phase1[*art] = 1.0;
        }
        t.load_costs(&phase1);
        let status = t.run(options);
        if status == LpStatus::IterationLimit {
            return failed(n, LpStatus::IterationLimit, t.pivots);
        }
        let infeasibility: f64 = artificial_of.iter().flatten().map(|&c| t.value(c)).sum();
        let scale = 1.0 + t.beta.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
        if infeasibility > options.feasibility_tol * scale.min(1e3) {
            return failed(n, LpStatus::Infeasible, t.pivots);
        }
        for art in artificial_of.iter().flatten() {
            t.blocked[*art] = true;
            t.upper[*art] = 0.0;
        }
        // Drive degenerate artificials out of the basis where possible.
        for r in 0..m {
            let b = t.basis[r];
            if !t.blocked[b] {
                continue;
            }
            let candidate = (0..cols)
                .filter(|&k| t.basic_row[k].is_none() && !t.blocked[k])
                .max_by(|&x, &y| {
                    let ax = t.row(r)[x].abs();
                    let ay = t.row(r)[y].abs();
                    ax.partial_cmp(&ay).unwrap().then(y.cmp(&x))
                });
            if let Some(k) = candidate.filter(|&k| t.row(r)[k].abs() > PIVOT_TOL) {
                let value = t.value(k);
                t.at_upper[b] = false;
                t.pivot(r, k);
                t.beta[r] = value;
                t.at_upper[k] = false;
            } else {
                t.beta[r] = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(lp.objective());
    t.load_costs(&cost);
    let status = t.run(options);
    if status != LpStatus::Optimal {
        return failed(n, status, t.pivots);
    }

    let values: Vec<f64> = (0..n)
        .map(|j| {
            let v = &vars[j];
            let mut x = v.lower + t.value(j);
            if x < v.lower {
                x = v.lower;
            }
            if let Some(u) = v.upper {
                x = x.min(u);
            }
            x
        })
        .collect();
    LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&values),
        values,
        pivots: t.pivots,
    }
}

fn failed(n: usize, status: LpStatus, pivots: usize) -> LpSolution {
    LpSolution {
        status,
        values: vec![0.0; n],
        objective: f64::NAN,
        pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{solve, LinearProgram, Relation};

    #[test]
    fn single_lower_bound_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_continuous("x", 1.0).unwrap();
        lp.add_constraint("c", vec![(x, 1.0)], Relation::Ge, 3.0).unwrap();
        let sol = solve(&lp, true).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value(x) - 3.0).abs() < 1e-9);
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_inequality() {
        let mut lp = LinearProgram::new();
        let x = lp.add_continuous("x", 1.0).unwrap();
        let y = lp.add_continuous("y", 1.0).unwrap();
        lp.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Relation::Ge, 2.0)
            .unwrap();
        lp.add_constraint("eq", vec![(x, 1.0), (y, -1.0)], Relation::Eq, 0.0)
            .unwrap();
        let sol = solve(&lp, true).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value(x) - 1.0).abs() < 1e-9);
        assert!((sol.value(y) - 1.0).abs() < 1e-9);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, Some(1.0), false, 1.0).unwrap();
        lp.add_constraint("c", vec![(x, 1.0)], Relation::Ge, 2.0).unwrap();
        assert_eq!(solve(&lp, true).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_continuous("x", -1.0).unwrap();
        let y = lp.add_continuous("y", 0.0).unwrap();
        lp.add_constraint("c", vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0)
            .unwrap();
        assert_eq!(solve(&lp, true).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn upper_bounds_without_rows() {
        // max x + 2y with x, y <= 1 and x + y <= 1.5
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, Some(1.0), false, -1.0).unwrap();
        let y = lp.add_var("y", 0.0, Some(1.0), false, -2.0).unwrap();
        lp.add_constraint("c", vec![(x, 1.0), (y, 1.0)], Relation::Le, 1.5)
            .unwrap();
        let sol = solve(&lp, true).unwrap();
        assert!((sol.value(y) - 1.0).abs() < 1e-9);
        assert!((sol.value(x) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn nonzero_lower_bounds_are_shifted() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 2.0, Some(5.0), false, 1.0).unwrap();
        let y = lp.add_var("y", 1.0, None, false, 3.0).unwrap();
        lp.add_constraint("c", vec![(x, 1.0), (y, 1.0)], Relation::Ge, 6.0)
            .unwrap();
        let sol = solve(&lp, true).unwrap();
        assert!((sol.value(x) - 5.0).abs() < 1e-9);
        assert!((sol.value(y) - 1.0).abs() < 1e-9);
        assert!((sol.objective - 8.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_continuous("x", 1.0).unwrap();
        let y = lp.add_continuous("y", 2.0).unwrap();
        lp.add_constraint("a", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 4.0)
            .unwrap();
        lp.add_constraint("b", vec![(x, 2.0), (y, 2.0)], Relation::Eq, 8.0)
            .unwrap();
        let sol = solve(&lp, true).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut lp = LinearProgram::new();
        let x = lp.add_continuous("x", 1.0).unwrap();
        let y = lp.add_continuous("y", 1.0).unwrap();
        lp.add_constraint("a", vec![(x, 1.0), (y, 2.0)], Relation::Ge, 4.0)
            .unwrap();
        lp.add_constraint("b", vec![(x, 3.0), (y, 1.0)], Relation::Ge, 6.0)
            .unwrap();
        let options = SolveOptions {
            max_pivots: 1,
            ..SolveOptions::default()
        };
        let sol = crate::solve_with(&lp, &options).unwrap();
        assert_eq!(sol.status, LpStatus::IterationLimit);
    }

    #[test]
    fn integer_flags_require_relaxation() {
        let mut lp = LinearProgram::new();
        lp.add_var("b", 0.0, Some(1.0), true, 1.0).unwrap();
        assert_eq!(solve(&lp, false), Err(crate::LpError::IntegralityUnsupported));
        assert!(solve(&lp, true).unwrap().is_optimal());
    }
}
