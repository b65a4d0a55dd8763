//! Linear programs in a small, explicit representation.
//!
//! A [`LinearProgram`] is always a minimization over non-negative, optionally
//! upper-bounded variables. Programs are solved either by the built-in dense
//! bounded primal simplex ([`simplex`]) or, for programs too large for a dense
//! tableau, by the HiGHS sparse simplex. Integrality flags are carried
//! through to MPS export but are never enforced by the solvers here; callers
//! that need integral values round the relaxation themselves.

pub mod mps;
pub mod simplex;
mod sparse;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub use mps::{emit_mps, emit_mps_with, parse_mps, MpsDocument, MpsOptions};

/// Feasibility tolerance used for constraint and bound checks.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Reduced-cost tolerance for optimality.
pub const REDUCED_COST_TOL: f64 = 1e-9;

/// Errors raised while building, solving or exporting a program.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("constraint `{constraint}` references undeclared variable index {index}")]
    UnknownVariable { constraint: String, index: usize },
    #[error("variable `{name}` has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
    #[error("program has integer variables; only relaxations are supported")]
    IntegralityUnsupported,
    #[error("identifier `{0}` exceeds the 8-character MPS field width")]
    NameTooLong(String),
    #[error("MPS parse error on line {line}: {message}")]
    MpsParse { line: usize, message: String },
    #[error("backend failure: {0}")]
    Backend(String),
}

/// Index of a variable inside its [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    /// `None` means unbounded above.
    pub upper: Option<f64>,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimization program `min c·x` subject to sparse rows and variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<f64>,
    names: HashSet<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable with bounds `[lower, upper]` and objective coefficient `cost`.
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: Option<f64>,
        integer: bool,
        cost: f64,
    ) -> Result<VarId, LpError> {
        let name = name.into();
        let upper_ok = upper.is_none_or(|u| u.is_finite() && u >= lower);
        if !lower.is_finite() || lower < 0.0 || !upper_ok {
            return Err(LpError::InvalidBounds {
                name,
                lower,
                upper: upper.unwrap_or(f64::INFINITY),
            });
        }
        if !cost.is_finite() {
            return Err(LpError::NonFinite(name));
        }
        if !self.names.insert(name.clone()) {
            return Err(LpError::DuplicateVariable(name));
        }
        self.variables.push(Variable {
            name,
            lower,
            upper,
            integer,
        });
        self.objective.push(cost);
        Ok(VarId(self.variables.len() - 1))
    }

    /// Non-negative continuous variable with no upper bound.
    pub fn add_continuous(&mut self, name: impl Into<String>, cost: f64) -> Result<VarId, LpError> {
        self.add_var(name, 0.0, None, false, cost)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize, LpError> {
        let name = name.into();
        if !rhs.is_finite() || coeffs.iter().any(|(_, a)| !a.is_finite()) {
            return Err(LpError::NonFinite(name));
        }
        if let Some(&(v, _)) = coeffs.iter().find(|(v, _)| v.0 >= self.variables.len()) {
            return Err(LpError::UnknownVariable {
                constraint: name,
                index: v.0,
            });
        }
        self.constraints.push(Constraint {
            name,
            coeffs,
            relation,
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.objective[var.0] = cost;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: Option<f64>) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn has_integer_vars(&self) -> bool {
        self.variables.iter().any(|v| v.integer)
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Largest bound or row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self.variables.iter().zip(values).map(|(v, &x)| {
            let below = (v.lower - x).max(0.0);
            let above = v.upper.map_or(0.0, |u| (x - u).max(0.0));
            below.max(above)
        });
        let rows = self.constraints.iter().map(|c| c.violation(values));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Checks the structural invariants (bounds, references, finiteness).
    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.variables {
            let upper_ok = v.upper.is_none_or(|u| u.is_finite() && u >= v.lower);
            if !v.lower.is_finite() || v.lower < 0.0 || !upper_ok {
                return Err(LpError::InvalidBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper.unwrap_or(f64::INFINITY),
                });
            }
        }
        for c in &self.constraints {
            if let Some(&(v, _)) = c.coeffs.iter().find(|(v, _)| v.0 >= self.variables.len()) {
                return Err(LpError::UnknownVariable {
                    constraint: c.name.clone(),
                    index: v.0,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; meaningful only when `status` is optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Built-in dense bounded simplex.
    #[default]
    Dense,
    /// HiGHS dual simplex for large sparse programs.
    Sparse,
    /// Dense when the tableau would stay under [`SolveOptions::dense_cell_limit`] cells.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub relax_integrality: bool,
    pub backend: Backend,
    pub max_pivots: usize,
    /// Number of Dantzig pivots before switching to Bland's rule.
    pub dantzig_pivots: usize,
    pub feasibility_tol: f64,
    pub reduced_cost_tol: f64,
    pub dense_cell_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            relax_integrality: true,
            backend: Backend::Dense,
            max_pivots: 1_000_000,
            dantzig_pivots: 10_000,
            feasibility_tol: FEASIBILITY_TOL,
            reduced_cost_tol: REDUCED_COST_TOL,
            dense_cell_limit: 4_000_000,
        }
    }
}

/// Solves `lp` with the built-in dense simplex and default tolerances.
pub fn solve(lp: &LinearProgram, relax_integrality: bool) -> Result<LpSolution, LpError> {
    solve_with(
        lp,
        &SolveOptions {
            relax_integrality,
            ..SolveOptions::default()
        },
    )
}

pub fn solve_with(lp: &LinearProgram, options: &SolveOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    if !options.relax_integrality && lp.has_integer_vars() {
        return Err(LpError::IntegralityUnsupported);
    }
    let backend = match options.backend {
        Backend::Auto => {
            if simplex::tableau_cells(lp) <= options.dense_cell_limit {
                Backend::Dense
            } else {
                Backend::Sparse
            }
        }
        other => other,
    };
    match backend {
        Backend::Sparse => sparse::solve(lp, options),
        _ => Ok(simplex::solve(lp, options)),
    }
}
