use std::collections::BTreeMap;
use std::num::NonZeroU32;

use highs::{ColProblem, HighsModelStatus, Sense};

use crate::{LinearProgram, LpError, LpSolution, LpStatus, Relation, SolveOptions};

/// Solves the relaxation with the HiGHS dual simplex, single-threaded.
pub(crate) fn solve(lp: &LinearProgram, options: &SolveOptions) -> Result<LpSolution, LpError> {
    let mut problem = ColProblem::new();
    let rows: Vec<_> = lp
        .constraints()
        .iter()
        .map(|c| match c.relation {
            Relation::Le => problem.add_row(..=c.rhs),
            Relation::Eq => problem.add_row(c.rhs..=c.rhs),
            Relation::Ge => problem.add_row(c.rhs..),
        })
        .collect();
    // Column-major view with repeated entries merged.
    let mut columns: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); lp.num_vars()];
    for (r, c) in lp.constraints().iter().enumerate() {
        for &(v, a) in &c.coeffs {
            *columns[v.0].entry(r).or_insert(0.0) += a;
        }
    }
    for ((v, &cost), column) in lp.variables().iter().zip(lp.objective()).zip(&columns) {
        let factors: Vec<_> = column
            .iter()
            .filter(|(_, a)| **a != 0.0)
            .map(|(&r, &a)| (rows[r], a))
            .collect();
        match v.upper {
            Some(u) => problem.add_column(cost, v.lower..=u, factors),
            None => problem.add_column(cost, v.lower.., factors),
        }
    }
    let mut model = problem.optimise(Sense::Minimise);
    model.make_quiet();
    model.set_threads(NonZeroU32::MIN);
    model.set_option("primal_feasibility_tolerance", options.feasibility_tol.min(1e-7));
    model.set_option("dual_feasibility_tolerance", options.reduced_cost_tol.max(1e-10));
    model.set_option("simplex_iteration_limit", options.max_pivots.min(i32::MAX as usize) as i32);
    let solved = model
        .try_solve()
        .map_err(|s| LpError::Backend(format!("{s:?}")))?;
    let n = lp.num_vars();
    let failed = |status| LpSolution {
        status,
        values: vec![0.0; n],
        objective: f64::NAN,
        pivots: 0,
    };
    let pivots = solved.simplex_iteration_count().max(0) as usize;
    match solved.status() {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {
            let raw = solved.get_solution();
            let values: Vec<f64> = lp
                .variables()
                .iter()
                .zip(raw.columns())
                .map(|(v, &x)| {
                    let x = x.max(v.lower);
                    v.upper.map_or(x, |u| x.min(u))
                })
                .collect();
            let values = if values.len() == n { values } else { vec![0.0; n] };
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: lp.objective_value(&values),
                values,
                pivots,
            })
        }
        HighsModelStatus::Infeasible => Ok(failed(LpStatus::Infeasible)),
        HighsModelStatus::Unbounded => Ok(failed(LpStatus::Unbounded)),
        // Non-negative costs over non-negative variables bound the objective.
        HighsModelStatus::UnboundedOrInfeasible if lp.objective().iter().all(|&c| c >= 0.0) => {
            Ok(failed(LpStatus::Infeasible))
        }
        HighsModelStatus::UnboundedOrInfeasible => Ok(failed(LpStatus::Unbounded)),
        HighsModelStatus::ReachedIterationLimit => Ok(failed(LpStatus::IterationLimit)),
        other => Err(LpError::Backend(format!("solver stopped with {other:?}"))),
    }
}
