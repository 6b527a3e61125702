//! Linear programming: problem description, solution type and a revised
//! primal simplex solver that reports both primal and dual solutions.
//!
//! Every LP in the crate (MOT bounds, corridor feasibility, quote repair)
//! goes through [`solve`]. The solver is deterministic: an identical
//! [`LinearProgram`] always produces the same pivot sequence.

mod lu;
mod mps;
mod simplex;

pub use mps::write_mps;
pub use simplex::{solve, solve_with};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Optimization direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Min,
    Max,
}

impl Sense {
    /// `+1` for minimization, `-1` for maximization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }

    pub fn flip(self) -> Sense {
        match self {
            Sense::Min => Sense::Max,
            Sense::Max => Sense::Min,
        }
    }
}

impl std::str::FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "min" | "minimize" | "lower" => Ok(Sense::Min),
            "max" | "maximize" | "upper" => Ok(Sense::Max),
            other => Err(format!("unknown sense '{other}', expected min or max")),
        }
    }
}

/// Relation of a constraint row to its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

/// One nonzero of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// `opt cᵀx  s.t.  A x (≤|=|≥) b,  l ≤ x ≤ u`.
///
/// Variables default to `[0, ∞)`. Duplicate triplets are summed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub costs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
    pub triplets: Vec<Triplet>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            ..Default::default()
        }
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Adds a variable with bounds `[0, ∞)` and returns its index.
    pub fn add_var(&mut self, cost: f64) -> usize {
        self.costs.push(cost);
        self.lower.push(0.0);
        self.upper.push(None);
        self.costs.len() - 1
    }

    /// Adds a variable with explicit bounds. `lower` may be `-∞`.
    pub fn add_bounded_var(&mut self, cost: f64, lower: f64, upper: Option<f64>) -> usize {
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.costs.len() - 1
    }

    /// Adds an empty row and returns its index; fill it with [`Self::set`].
    pub fn add_row(&mut self, relation: Relation, rhs: f64) -> usize {
        self.relations.push(relation);
        self.rhs.push(rhs);
        self.rhs.len() - 1
    }

    /// Adds a row from `(column, coefficient)` pairs.
    pub fn add_constraint(
        &mut self,
        coeffs: impl IntoIterator<Item = (usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        let row = self.add_row(relation, rhs);
        for (col, value) in coeffs {
            self.set(row, col, value);
        }
        row
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.triplets.push(Triplet { row, col, value });
        }
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Dimension and finiteness checks.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.costs.len();
        let m = self.rhs.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed(format!(
                "bound vectors have lengths {}/{} for {n} variables",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.relations.len() != m {
            return Err(LpError::Malformed(format!(
                "{} relations for {m} rows",
                self.relations.len()
            )));
        }
        if let Some(j) = self.costs.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!("cost of variable {j} is not finite")));
        }
        if let Some(i) = self.rhs.iter().position(|b| !b.is_finite()) {
            return Err(LpError::Malformed(format!("rhs of row {i} is not finite")));
        }
        for (j, (&l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || l == f64::INFINITY {
                return Err(LpError::Malformed(format!("bad lower bound on variable {j}")));
            }
            if let Some(u) = *u {
                if !u.is_finite() || u < l {
                    return Err(LpError::Malformed(format!("bad upper bound on variable {j}")));
                }
            }
        }
        for t in &self.triplets {
            if t.row >= m || t.col >= n {
                return Err(LpError::Malformed(format!(
                    "triplet ({}, {}) outside {m}x{n}",
                    t.row, t.col
                )));
            }
            if !t.value.is_finite() {
                return Err(LpError::Malformed(format!(
                    "coefficient at ({}, {}) is not finite",
                    t.row, t.col
                )));
            }
        }
        Ok(())
    }

    /// `A x` evaluated row by row.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for t in &self.triplets {
            act[t.row] += t.value * x[t.col];
        }
        act
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Post-solve residuals, all measured against the original (unscaled) data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest violation of a row or a variable bound.
    pub primal: f64,
    /// Largest sign violation of a reduced cost or row multiplier.
    pub dual: f64,
    /// Largest `|x_j d_j|` or `|y_i s_i|` product.
    pub complementarity: f64,
    /// `|cᵀx − dual objective|`.
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One multiplier per row, in the sign convention of the problem's own
    /// sense: for `Min`, `≥` rows carry `y ≥ 0`; for `Max`, `≤` rows carry
    /// `y ≥ 0`. Reduced costs are `c − Aᵀy`.
    pub dual: Vec<f64>,
    pub dual_objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Pivot selection for the entering variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PricingRule {
    /// Lowest-index improving column, lowest-index leaving row. Never cycles.
    Bland,
    /// Most negative reduced cost over rotating sections of columns. A streak
    /// of degenerate pivots triggers a small right-hand-side perturbation,
    /// removed again at the optimum; Bland's rule takes over if degeneracy
    /// persists.
    Dantzig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
    pub pricing: PricingRule,
    /// Degenerate pivots in a row before Bland's rule takes over.
    pub degenerate_streak: usize,
    /// Upper bound on the number of rows (the basis inverse is dense).
    pub max_rows: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-9,
            gap_tol: 1e-8,
            max_iterations: 2_000_000,
            pricing: PricingRule::Dantzig,
            degenerate_streak: 64,
            max_rows: 8_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("problem too large: {rows} rows exceed the dense-basis limit of {limit}")]
    TooLarge { rows: usize, limit: usize },
    #[error(
        "simplex stalled after {iterations} iterations (phase {phase}, objective {objective:e}, \
         {degenerate} degenerate pivots)"
    )]
    Stalled {
        iterations: usize,
        phase: u8,
        objective: f64,
        degenerate: usize,
    },
    #[error(
        "solution failed certification: primal residual {primal:e}, dual residual {dual:e}, \
         duality gap {gap:e}"
    )]
    Uncertified { primal: f64, dual: f64, gap: f64 },
}
