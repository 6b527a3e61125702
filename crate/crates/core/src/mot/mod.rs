//! Discrete martingale optimal transport.
//!
//! For marginals μ₁ ⪯ … ⪯ μₙ on finite grids the bound
//! `inf / sup E_Q[c]` over martingale couplings `Q` is a linear program in
//! the probabilities `q(k₁, …, kₙ)`. Tuples are indexed row-major, the last
//! coordinate running fastest.

mod payoff;

pub use payoff::{Payoff, REGISTRY};

use serde::Serialize;

use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation, Residuals, Sense, SolverOptions};
use crate::measures::{DiscreteMeasure, CONVEX_ORDER_TOL};
use crate::{Error, Result};

/// Version of the JSON layout written by [`MotSolution::to_json`].
pub const SCHEMA_VERSION: u32 = 1;

/// Probabilities below this are omitted from exported couplings.
const COUPLING_CUTOFF: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct MotProblem {
    marginals: Vec<DiscreteMeasure>,
    payoff: Payoff,
    sense: Sense,
}

impl MotProblem {
    /// Checks arity and that consecutive marginals increase in convex order.
    pub fn new(marginals: Vec<DiscreteMeasure>, payoff: Payoff, sense: Sense) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument("no marginals".into()));
        }
        if payoff.arity() != marginals.len() {
            return Err(Error::InvalidArgument(format!(
                "payoff '{}' takes {} dates but {} marginals were given",
                payoff.name(),
                payoff.arity(),
                marginals.len()
            )));
        }
        for i in 1..marginals.len() {
            let scale = marginals[i - 1..=i]
                .iter()
                .flat_map(|m| m.atoms())
                .fold(1.0f64, |a, x| a.max(x.abs()));
            if !marginals[i - 1].convex_order_leq(&marginals[i], CONVEX_ORDER_TOL * scale) {
                return Err(Error::ConvexOrder {
                    first: i,
                    second: i + 1,
                });
            }
        }
        Ok(MotProblem {
            marginals,
            payoff,
            sense,
        })
    }

    /// The sub-problem on the dates `keep` (zero-based, increasing).
    pub fn restrict(&self, keep: &[usize]) -> Result<MotProblem> {
        let marginals = keep.iter().map(|&i| self.marginals[i].clone()).collect();
        MotProblem::new(marginals, self.payoff.restrict(keep)?, self.sense)
    }

    pub fn with_sense(&self, sense: Sense) -> MotProblem {
        MotProblem {
            sense,
            ..self.clone()
        }
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.marginals.iter().map(|m| m.len()).collect()
    }

    pub fn num_tuples(&self) -> usize {
        self.marginals.iter().map(|m| m.len()).product()
    }

    /// Atom values of a tuple of atom indices.
    pub fn point(&self, k: &[usize]) -> Vec<f64> {
        k.iter().zip(&self.marginals).map(|(&k, m)| m.atoms()[k]).collect()
    }

    /// Largest absolute atom, at least 1; tolerances scale with it.
    pub fn scale(&self) -> f64 {
        self.marginals
            .iter()
            .flat_map(|m| m.atoms())
            .fold(1.0f64, |a, x| a.max(x.abs()))
    }
}

/// Row layout of the LP built by [`build_lp`].
#[derive(Debug, Clone)]
pub struct RowLayout {
    /// `marginal_rows[i][k]` is the row fixing the weight of atom `k` of μᵢ,
    /// or `None` for the dropped redundant row.
    pub marginal_rows: Vec<Vec<Option<usize>>>,
    /// First row of the martingale block for step `j` (`x_{j+1} − x_j`); the
    /// block has one row per history `(k₁, …, k_j)` in row-major order.
    pub martingale_start: Vec<usize>,
}

/// Assembles the LP whose optimum is the discrete MOT value.
///
/// Columns are tuples in row-major order. Block 1 keeps all marginal rows;
/// later blocks drop their last row, which is implied by the others.
pub fn build_lp(p: &MotProblem) -> (LinearProgram, RowLayout) {
    let sizes = p.sizes();
    let n = sizes.len();
    let mut lp = LinearProgram::new(p.sense);

    let mut marginal_rows = Vec::with_capacity(n);
    for (i, m) in p.marginals.iter().enumerate() {
        let rows: Vec<Option<usize>> = m
            .weights()
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                if i > 0 && k + 1 == m.len() {
                    None
                } else {
                    Some(lp.add_row(Relation::Eq, w))
                }
            })
            .collect();
        marginal_rows.push(rows);
    }
    let mut martingale_start = Vec::with_capacity(n.saturating_sub(1));
    let mut histories = 1usize;
    for j in 0..n.saturating_sub(1) {
        histories *= sizes[j];
        martingale_start.push(lp.num_rows());
        for _ in 0..histories {
            lp.add_row(Relation::Eq, 0.0);
        }
    }

    let total = p.num_tuples();
    lp.costs.reserve(total);
    lp.triplets.reserve(total * (2 * n).saturating_sub(1));
    let atoms: Vec<&[f64]> = p.marginals.iter().map(|m| m.atoms()).collect();
    let mut k = vec![0usize; n];
    let mut x: Vec<f64> = atoms.iter().map(|a| a[0]).collect();
    for _ in 0..total {
        let col = lp.add_var(p.payoff.eval(&x));
        for i in 0..n {
            if let Some(row) = marginal_rows[i][k[i]] {
                lp.set(row, col, 1.0);
            }
        }
        let mut history = 0usize;
        for j in 0..n.saturating_sub(1) {
            history = history * sizes[j] + k[j];
            lp.set(martingale_start[j] + history, col, x[j + 1] - x[j]);
        }
        // Row-major increment.
        for i in (0..n).rev() {
            k[i] += 1;
            if k[i] < sizes[i] {
                x[i] = atoms[i][k[i]];
                break;
            }
            k[i] = 0;
            x[i] = atoms[i][0];
        }
    }
    (
        lp,
        RowLayout {
            marginal_rows,
            martingale_start,
        },
    )
}

/// Sparse coupling over atom-index tuples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    pub sizes: Vec<usize>,
    /// `(tuple, probability)` in row-major tuple order.
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl Coupling {
    /// Marginalizes onto the dates `coords` (zero-based, increasing).
    pub fn project(&self, coords: &[usize]) -> Coupling {
        let mut acc: std::collections::BTreeMap<Vec<usize>, f64> = Default::default();
        for (k, p) in &self.entries {
            let key: Vec<usize> = coords.iter().map(|&c| k[c]).collect();
            *acc.entry(key).or_insert(0.0) += p;
        }
        Coupling {
            sizes: coords.iter().map(|&c| self.sizes[c]).collect(),
            entries: acc.into_iter().collect(),
        }
    }

    /// Weight per atom of date `i`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.sizes[i]];
        for (k, p) in &self.entries {
            w[k[i]] += p;
        }
        w
    }

    pub fn support(&self) -> Vec<Vec<usize>> {
        self.entries.iter().map(|e| e.0.clone()).collect()
    }
}

/// Semi-static certificate from the LP duals.
///
/// For a lower bound `Σᵢ uᵢ(xᵢ) + Σⱼ Δⱼ(x₁..xⱼ)(xⱼ₊₁ − xⱼ) ≤ c(x)` on the
/// grid; for an upper bound the inequality is reversed. `delta[j]` is indexed
/// by the history `(k₁, …, k_{j+1})` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate {
    pub sense: Sense,
    pub u: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

impl DualCertificate {
    /// `Σᵢ E_{μᵢ}[uᵢ]`.
    pub fn value(&self, marginals: &[DiscreteMeasure]) -> f64 {
        self.u
            .iter()
            .zip(marginals)
            .map(|(u, m)| u.iter().zip(m.weights()).map(|(a, w)| a * w).sum::<f64>())
            .sum()
    }

    /// Payoff of the strategy along the atom-index path `k`.
    pub fn strategy_payoff(&self, marginals: &[DiscreteMeasure], k: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut history = 0usize;
        for (i, &ki) in k.iter().enumerate() {
            total += self.u[i][ki];
            if i + 1 < k.len() {
                history = history * marginals[i].len() + ki;
                let dx = marginals[i + 1].atoms()[k[i + 1]] - marginals[i].atoms()[ki];
                total += self.delta[i][history] * dx;
            }
        }
        total
    }

    /// Largest amount by which the hedging inequality fails on the grid
    /// (zero when it holds everywhere).
    pub fn max_violation(&self, p: &MotProblem) -> f64 {
        let sizes = p.sizes();
        let mut worst = 0.0f64;
        for_each_tuple(&sizes, |k| {
            let c = p.payoff.eval(&p.point(k));
            let h = self.strategy_payoff(&p.marginals, k);
            let v = match self.sense {
                Sense::Min => h - c,
                Sense::Max => c - h,
            };
            worst = worst.max(v);
        });
        worst
    }
}

/// Calls `f` on every atom-index tuple in row-major order.
pub fn for_each_tuple(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let n = sizes.len();
    let mut k = vec![0usize; n];
    loop {
        f(&k);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            k[i] += 1;
            if k[i] < sizes[i] {
                break;
            }
            k[i] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpDiagnostics {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub iterations: usize,
    pub residuals: Residuals,
}

/// Post-solve checks of a [`MotSolution`] against its problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionChecks {
    /// Largest `|coupling marginal − μᵢ weight|`.
    pub marginal_residual: f64,
    /// Largest `|E_Q[(x_{j+1} − x_j) 1{history}]|`.
    pub martingale_residual: f64,
    /// `|objective − Σ q c|`.
    pub objective_residual: f64,
    /// `|objective − certificate value|`.
    pub duality_gap: f64,
    /// Largest failure of the hedging inequality on the grid.
    pub hedge_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MotSolution {
    pub sense: Sense,
    pub objective: f64,
    pub coupling: Coupling,
    pub dual: DualCertificate,
    pub diagnostics: LpDiagnostics,
}

#[derive(Serialize)]
struct MotSolutionJson<'a> {
    schema_version: u32,
    payoff: &'a str,
    #[serde(flatten)]
    solution: &'a MotSolution,
}

impl MotSolution {
    /// JSON document: objective, nonzero coupling entries as
    /// `[[k1, k2, ...], p]`, the certificate and solver diagnostics.
    pub fn to_json(&self, payoff: &str) -> serde_json::Value {
        serde_json::to_value(MotSolutionJson {
            schema_version: SCHEMA_VERSION,
            payoff,
            solution: self,
        })
        .expect("solution serializes")
    }

    pub fn check(&self, p: &MotProblem) -> SolutionChecks {
        let n = p.marginals.len();
        let mut marginal_residual = 0.0f64;
        for (i, m) in p.marginals.iter().enumerate() {
            for (a, b) in self.coupling.marginal(i).iter().zip(m.weights()) {
                marginal_residual = marginal_residual.max((a - b).abs());
            }
        }
        let mut martingale_residual = 0.0f64;
        for j in 0..n.saturating_sub(1) {
            let mut acc: std::collections::HashMap<&[usize], f64> = Default::default();
            for (k, q) in &self.coupling.entries {
                let dx = p.marginals[j + 1].atoms()[k[j + 1]] - p.marginals[j].atoms()[k[j]];
                *acc.entry(&k[..=j]).or_insert(0.0) += q * dx;
            }
            martingale_residual = acc.values().fold(martingale_residual, |a, v| a.max(v.abs()));
        }
        let direct: f64 = self
            .coupling
            .entries
            .iter()
            .map(|(k, q)| q * p.payoff.eval(&p.point(k)))
            .sum();
        SolutionChecks {
            marginal_residual,
            martingale_residual,
            objective_residual: (self.objective - direct).abs(),
            duality_gap: (self.objective - self.dual.value(&p.marginals)).abs(),
            hedge_violation: self.dual.max_violation(p),
        }
    }
}

pub fn solve_mot(p: &MotProblem) -> Result<MotSolution> {
    solve_mot_with(p, &SolverOptions::default())
}

pub fn solve_mot_with(p: &MotProblem, opts: &SolverOptions) -> Result<MotSolution> {
    let (lp, layout) = build_lp(p);
    let sol = lp::solve_with(&lp, opts)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        // Bounded payoff on a finite grid with a nonempty polytope.
        LpStatus::Unbounded => {
            return Err(Error::Lp(LpError::Malformed("MOT program reported unbounded".into())))
        }
    }

    let sizes = p.sizes();
    let mut entries = Vec::new();
    let mut col = 0usize;
    for_each_tuple(&sizes, |k| {
        let q = sol.primal[col];
        if q > COUPLING_CUTOFF {
            entries.push((k.to_vec(), q));
        }
        col += 1;
    });

    let u = layout
        .marginal_rows
        .iter()
        .map(|rows| rows.iter().map(|r| r.map_or(0.0, |r| sol.dual[r])).collect())
        .collect();
    let mut delta = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut histories = 1usize;
    for (j, &start) in layout.martingale_start.iter().enumerate() {
        histories *= sizes[j];
        delta.push(sol.dual[start..start + histories].to_vec());
    }

    Ok(MotSolution {
        sense: p.sense,
        objective: sol.objective,
        coupling: Coupling { sizes, entries },
        dual: DualCertificate {
            sense: p.sense,
            u,
            delta,
        },
        diagnostics: LpDiagnostics {
            rows: lp.num_rows(),
            columns: lp.num_vars(),
            nonzeros: lp.nnz(),
            iterations: sol.iterations,
            residuals: sol.residuals,
        },
    })
}
