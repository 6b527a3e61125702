//! Two-phase revised primal simplex with a sparse LU basis factorization.
//!
//! The problem is brought to `min c̃ᵀx̃, Ã x̃ = b̃ ≥ 0, x̃ ≥ 0` with rows and
//! columns equilibrated to unit max-abs. One artificial column per row that
//! lacks a usable slack forms the starting basis. After phase 1 any
//! artificial still basic sits in a redundant row and is treated as a
//! variable fixed at zero. Long runs of degenerate pivots are broken by a
//! small perturbation of the right-hand side that is removed, with a few
//! dual simplex pivots, once the perturbed problem is optimal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lu::Factor;
use super::{
    LinearProgram, LpError, LpSolution, LpStatus, PricingRule, Relation, Residuals, Sense,
    SolverOptions,
};

const PIVOT_TOL: f64 = 1e-7;
const DEGENERATE_STEP: f64 = 1e-12;
const NONBASIC: usize = usize::MAX;
const RESIDUAL_CHECK_EVERY: usize = 128;
const MAX_ETAS: usize = 200;
/// Relative size of the anti-degeneracy right-hand-side perturbation.
const PERTURBATION: f64 = 1e-7;
const MAX_PERTURBATIONS: usize = 8;
/// Phase 1 stops once the artificials sum to no more than this.
const PHASE1_DONE: f64 = 1e-13;

/// Solves `lp` with default options and the given tolerances.
pub fn solve(lp: &LinearProgram, feas_tol: f64, gap_tol: f64) -> Result<LpSolution, LpError> {
    let opts = SolverOptions {
        feas_tol,
        gap_tol,
        ..SolverOptions::default()
    };
    solve_with(lp, &opts)
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let sf = StandardForm::build(lp);
    if sf.m > opts.max_rows {
        return Err(LpError::TooLarge {
            rows: sf.m,
            limit: opts.max_rows,
        });
    }
    let mut engine = Engine::new(&sf, opts);
    let status = engine.run()?;
    if status != LpStatus::Optimal {
        return Ok(LpSolution {
            status,
            objective: match status {
                LpStatus::Infeasible => f64::NAN,
                _ => match lp.sense {
                    Sense::Min => f64::NEG_INFINITY,
                    Sense::Max => f64::INFINITY,
                },
            },
            primal: Vec::new(),
            dual: Vec::new(),
            dual_objective: f64::NAN,
            iterations: engine.iterations,
            residuals: Residuals::default(),
        });
    }
    let (x_std, y_std) = engine.extract();
    let solution = sf.recover(lp, &x_std, &y_std, engine.iterations);
    certify(lp, &solution, opts)?;
    Ok(solution)
}

fn certify(lp: &LinearProgram, sol: &LpSolution, opts: &SolverOptions) -> Result<(), LpError> {
    let b_scale = 1.0 + lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let c_scale = 1.0 + lp.costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let r = &sol.residuals;
    let primal_ok = r.primal <= opts.feas_tol * b_scale;
    let dual_ok = r.dual <= 1e-7 * c_scale;
    let gap_ok = r.duality_gap <= opts.gap_tol * (1.0 + sol.objective.abs());
    if primal_ok && dual_ok && gap_ok {
        Ok(())
    } else {
        Err(LpError::Uncertified {
            primal: r.primal,
            dual: r.dual,
            gap: r.duality_gap,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + x̃[col]`
    Shift { col: usize, offset: f64 },
    /// `x = upper − x̃[col]`
    Mirror { col: usize, upper: f64 },
    /// `x = x̃[pos] − x̃[neg]`
    Split { pos: usize, neg: usize },
}

/// Equality-form problem with scaling factors and the maps back to the
/// user's variables and rows.
struct StandardForm {
    m: usize,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    /// Column usable as the initial basic variable of each row, if any.
    unit_col: Vec<Option<usize>>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    negated: Vec<bool>,
    var_map: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> StandardForm {
        let sign = lp.sense.sign();
        let m0 = lp.num_rows();
        let mut var_map = Vec::with_capacity(lp.num_vars());
        let mut cost: Vec<f64> = Vec::new();
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..lp.num_vars() {
            let c = sign * lp.costs[j];
            let l = lp.lower[j];
            let u = lp.upper[j];
            if l.is_finite() {
                let col = cost.len();
                cost.push(c);
                if let Some(u) = u {
                    bound_rows.push((col, u - l));
                }
                var_map.push(VarMap::Shift { col, offset: l });
            } else if let Some(u) = u {
                let col = cost.len();
                cost.push(-c);
                var_map.push(VarMap::Mirror { col, upper: u });
            } else {
                let pos = cost.len();
                cost.push(c);
                cost.push(-c);
                var_map.push(VarMap::Split { pos, neg: pos + 1 });
            }
        }

        let m = m0 + bound_rows.len();
        let mut rhs = lp.rhs.clone();
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(lp.nnz() + 2 * m);
        for t in &lp.triplets {
            match var_map[t.col] {
                VarMap::Shift { col, offset } => {
                    entries.push((t.row, col, t.value));
                    rhs[t.row] -= t.value * offset;
                }
                VarMap::Mirror { col, upper } => {
                    entries.push((t.row, col, -t.value));
                    rhs[t.row] -= t.value * upper;
                }
                VarMap::Split { pos, neg } => {
                    entries.push((t.row, pos, t.value));
                    entries.push((t.row, neg, -t.value));
                }
            }
        }
        let mut slack_of_row: Vec<Option<(usize, f64)>> = vec![None; m];
        for (i, rel) in lp.relations.iter().enumerate() {
            let coef = match rel {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            let col = cost.len();
            cost.push(0.0);
            entries.push((i, col, coef));
            slack_of_row[i] = Some((col, coef));
        }
        for (k, &(col, cap)) in bound_rows.iter().enumerate() {
            let row = m0 + k;
            rhs.push(cap);
            entries.push((row, col, 1.0));
            let s = cost.len();
            cost.push(0.0);
            entries.push((row, s, 1.0));
            slack_of_row[row] = Some((s, 1.0));
        }
        let n = cost.len();

        let mut negated = vec![false; m];
        for i in 0..m {
            if rhs[i] < 0.0 {
                negated[i] = true;
                rhs[i] = -rhs[i];
            }
        }
        for e in entries.iter_mut() {
            if negated[e.0] {
                e.2 = -e.2;
            }
        }
        let unit_col: Vec<Option<usize>> = (0..m)
            .map(|i| match slack_of_row[i] {
                Some((col, coef)) if (coef > 0.0) != negated[i] => Some(col),
                _ => None,
            })
            .collect();

        // CSC with duplicates summed.
        entries.sort_by_key(|e| (e.1, e.0));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
            } else {
                row_idx.push(r);
                vals.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }

        // Equilibrate rows, then columns, to unit max-abs.
        let mut row_max = vec![0.0f64; m];
        for (k, &r) in row_idx.iter().enumerate() {
            row_max[r] = row_max[r].max(vals[k].abs());
        }
        let row_scale: Vec<f64> = row_max
            .iter()
            .map(|&a| if a > 0.0 { 1.0 / a } else { 1.0 })
            .collect();
        for (k, &r) in row_idx.iter().enumerate() {
            vals[k] *= row_scale[r];
        }
        let mut col_scale = vec![1.0; n];
        for j in 0..n {
            let a = vals[col_ptr[j]..col_ptr[j + 1]]
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            if a > 0.0 {
                col_scale[j] = 1.0 / a;
                for v in &mut vals[col_ptr[j]..col_ptr[j + 1]] {
                    *v /= a;
                }
            }
        }
        for j in 0..n {
            cost[j] *= col_scale[j];
        }
        for i in 0..m {
            rhs[i] *= row_scale[i];
        }

        StandardForm {
            m,
            n,
            col_ptr,
            row_idx,
            vals,
            cost,
            rhs,
            unit_col,
            row_scale,
            col_scale,
            negated,
            var_map,
        }
    }

    /// Maps the scaled standard-form solution back onto `lp` and measures
    /// residuals there.
    fn recover(&self, lp: &LinearProgram, xs: &[f64], ys: &[f64], iterations: usize) -> LpSolution {
        let sign = lp.sense.sign();
        let x_std: Vec<f64> = (0..self.n).map(|j| xs[j] * self.col_scale[j]).collect();
        let primal: Vec<f64> = self
            .var_map
            .iter()
            .map(|vm| match *vm {
                VarMap::Shift { col, offset } => offset + x_std[col],
                VarMap::Mirror { col, upper } => upper - x_std[col],
                VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
            })
            .collect();
        let m0 = lp.num_rows();
        let dual: Vec<f64> = (0..m0)
            .map(|i| {
                let y = ys[i] * self.row_scale[i];
                let y = if self.negated[i] { -y } else { y };
                // Multipliers of the internal minimization of sign·c.
                sign * y
            })
            .collect();

        let objective = lp.objective_value(&primal);
        let act = lp.row_activity(&primal);
        let mut aty = vec![0.0; lp.num_vars()];
        for t in &lp.triplets {
            aty[t.col] += t.value * dual[t.row];
        }

        let mut res = Residuals::default();
        let mut dual_objective: f64 = lp.rhs.iter().zip(&dual).map(|(b, y)| b * y).sum();
        for i in 0..m0 {
            let slack = act[i] - lp.rhs[i];
            let viol = match lp.relations[i] {
                Relation::Le => slack.max(0.0),
                Relation::Ge => (-slack).max(0.0),
                Relation::Eq => slack.abs(),
            };
            res.primal = res.primal.max(viol);
            // Internal-min sign of the multiplier: ≤ rows need y ≤ 0, ≥ rows y ≥ 0.
            let y_min = sign * dual[i];
            let dual_viol = match lp.relations[i] {
                Relation::Le => y_min.max(0.0),
                Relation::Ge => (-y_min).max(0.0),
                Relation::Eq => 0.0,
            };
            res.dual = res.dual.max(dual_viol);
            res.complementarity = res.complementarity.max((dual[i] * slack).abs());
        }
        for j in 0..lp.num_vars() {
            let x = primal[j];
            let l = lp.lower[j];
            let u = lp.upper[j];
            if l.is_finite() {
                res.primal = res.primal.max((l - x).max(0.0));
            }
            if let Some(u) = u {
                res.primal = res.primal.max((x - u).max(0.0));
            }
            let d = lp.costs[j] - aty[j];
            let d_min = sign * d;
            if d_min >= 0.0 {
                if l.is_finite() {
                    dual_objective += l * d;
                    res.complementarity = res.complementarity.max(((x - l) * d).abs());
                } else {
                    res.dual = res.dual.max(d.abs());
                }
            } else if let Some(u) = u {
                dual_objective += u * d;
                res.complementarity = res.complementarity.max(((u - x) * d).abs());
            } else {
                res.dual = res.dual.max(d.abs());
            }
        }
        res.duality_gap = (objective - dual_objective).abs();

        LpSolution {
            status: LpStatus::Optimal,
            objective,
            primal,
            dual,
            dual_objective,
            iterations,
            residuals: res,
        }
    }
}

struct Engine<'a> {
    sf: &'a StandardForm,
    opts: &'a SolverOptions,
    m: usize,
    n: usize,
    basis: Vec<usize>,
    position: Vec<usize>,
    factor: Factor,
    xb: Vec<f64>,
    y: Vec<f64>,
    cost: Vec<f64>,
    phase: u8,
    iterations: usize,
    degenerate: usize,
    streak: usize,
    bland: bool,
    /// Right-hand-side shift of the current perturbation, or empty.
    shift: Vec<f64>,
    perturbations: usize,
    pivots_since_refactor: usize,
    opt_tol: f64,
    /// Start of the next partial-pricing section.
    cursor: std::cell::Cell<usize>,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl<'a> Engine<'a> {
    fn new(sf: &'a StandardForm, opts: &'a SolverOptions) -> Engine<'a> {
        let m = sf.m;
        let n = sf.n;
        let mut basis = Vec::with_capacity(m);
        let mut position = vec![NONBASIC; n + m];
        for i in 0..m {
            let col = sf.unit_col[i].unwrap_or(n + i);
            position[col] = i;
            basis.push(col);
        }
        let identity = (0..m).map(|i| vec![(i, 1.0)]).collect();
        let factor = Factor::new(m, identity).expect("identity is nonsingular");
        let max_cost = sf.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        Engine {
            sf,
            opts,
            m,
            n,
            basis,
            position,
            factor,
            xb: sf.rhs.clone(),
            y: vec![0.0; m],
            cost: vec![0.0; n + m],
            phase: 1,
            iterations: 0,
            degenerate: 0,
            streak: 0,
            bland: opts.pricing == PricingRule::Bland,
            shift: Vec::new(),
            perturbations: 0,
            pivots_since_refactor: 0,
            opt_tol: 1e-9 * max_cost.max(1.0),
            cursor: std::cell::Cell::new(0),
        }
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.n
    }

    fn run(&mut self) -> Result<LpStatus, LpError> {
        let needs_phase1 = self.basis.iter().any(|&c| self.is_artificial(c));
        if needs_phase1 {
            self.phase = 1;
            for j in 0..self.n + self.m {
                self.cost[j] = if j >= self.n { 1.0 } else { 0.0 };
            }
            let saved = self.opt_tol;
            self.opt_tol = 1e-9;
            self.optimize()?;
            self.opt_tol = saved;
            let infeasibility: f64 = (0..self.m)
                .filter(|&i| self.is_artificial(self.basis[i]))
                .map(|i| self.xb[i].max(0.0))
                .sum();
            let b_scale = 1.0 + self.sf.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeasibility > self.opts.feas_tol * b_scale {
                return Ok(LpStatus::Infeasible);
            }
        }
        self.phase = 2;
        for j in 0..self.n + self.m {
            self.cost[j] = if j < self.n { self.sf.cost[j] } else { 0.0 };
        }
        self.optimize()
    }

    fn optimize(&mut self) -> Result<LpStatus, LpError> {
        self.recompute_dual();
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::Stalled {
                    iterations: self.iterations,
                    phase: self.phase,
                    objective: self.current_objective(),
                    degenerate: self.degenerate,
                });
            }
            if self.phase == 1
                && self.shift.is_empty()
                && self.pivots_since_refactor > 0
                && self.artificial_sum() <= PHASE1_DONE
            {
                self.refactor()?;
                if self.artificial_sum() <= PHASE1_DONE {
                    return Ok(LpStatus::Optimal);
                }
            }
            match self.step() {
                Step::Pivoted => {
                    if self.factor.num_etas() >= MAX_ETAS
                        || (self.pivots_since_refactor.is_multiple_of(RESIDUAL_CHECK_EVERY)
                            && self.basis_residual() > 1e-9)
                    {
                        self.refactor()?;
                    }
                }
                Step::Optimal => {
                    if !self.shift.is_empty() {
                        self.unperturb()?;
                        continue;
                    }
                    // Confirm on a fresh factorization before declaring victory.
                    if self.pivots_since_refactor > 0 {
                        self.refactor()?;
                        continue;
                    }
                    return Ok(LpStatus::Optimal);
                }
                Step::Unbounded => {
                    if !self.shift.is_empty() {
                        self.shift.clear();
                        self.refactor()?;
                        continue;
                    }
                    if self.pivots_since_refactor > 0 {
                        self.refactor()?;
                        continue;
                    }
                    return Ok(LpStatus::Unbounded);
                }
            }
        }
    }

    /// Lifts every basic variable by a small pseudo-random amount, which is
    /// the same as shifting the right-hand side by `B ε`.
    fn perturb(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.perturbations as u64);
        self.perturbations += 1;
        let mut shift = vec![0.0; self.m];
        for i in 0..self.m {
            let col = self.basis[i];
            if self.phase == 2 && self.is_artificial(col) {
                continue;
            }
            let eps = PERTURBATION * (1.0 + self.xb[i].abs()) * rng.gen_range(1.0..2.0);
            self.xb[i] += eps;
            self.for_col(col, |row, v| shift[row] += v * eps);
        }
        self.shift = shift;
    }

    /// Drops the perturbation and restores primal feasibility with dual
    /// simplex pivots. The basis stays dual feasible throughout.
    fn unperturb(&mut self) -> Result<(), LpError> {
        self.shift.clear();
        self.refactor()?;
        let fixed = |e: &Self, i: usize| e.phase == 2 && e.is_artificial(e.basis[i]);
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::Stalled {
                    iterations: self.iterations,
                    phase: self.phase,
                    objective: self.current_objective(),
                    degenerate: self.degenerate,
                });
            }
            let tol = self.opts.feas_tol;
            let leaving = (0..self.m)
                .map(|i| {
                    let x = self.xb[i];
                    let violation = if fixed(self, i) { x.abs() } else { -x };
                    (i, violation)
                })
                .filter(|&(_, v)| v > tol)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((r, _)) = leaving else {
                return Ok(());
            };
            let sign = self.xb[r].signum();
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            self.factor.btran(&mut rho);
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.n {
                if self.position[j] != NONBASIC {
                    continue;
                }
                let mut a = 0.0;
                self.for_col(j, |row, v| a += rho[row] * v);
                if a * sign <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.reduced_cost(j).max(0.0) / a.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba),
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = best else {
                return Err(LpError::Uncertified {
                    primal: self.xb[r].abs(),
                    dual: 0.0,
                    gap: f64::NAN,
                });
            };
            let alpha = self.ftran(q);
            let theta = self.xb[r] / alpha[r];
            self.pivot(r, q, &alpha, theta);
            self.iterations += 1;
            self.pivots_since_refactor += 1;
            if self.factor.num_etas() >= MAX_ETAS {
                self.refactor()?;
            }
        }
    }

    fn artificial_sum(&self) -> f64 {
        (0..self.m)
            .filter(|&i| self.is_artificial(self.basis[i]))
            .map(|i| self.xb[i].abs())
            .sum()
    }

    fn current_objective(&self) -> f64 {
        (0..self.m).map(|i| self.cost[self.basis[i]] * self.xb[i]).sum()
    }

    fn step(&mut self) -> Step {
        let Some((q, _)) = self.price() else {
            return Step::Optimal;
        };
        let alpha = self.ftran(q);
        let Some((r, theta)) = self.ratio_test(&alpha) else {
            return Step::Unbounded;
        };
        self.pivot(r, q, &alpha, theta);
        self.iterations += 1;
        self.pivots_since_refactor += 1;
        if theta <= DEGENERATE_STEP {
            self.degenerate += 1;
            self.streak += 1;
            if self.opts.pricing == PricingRule::Dantzig && self.streak >= self.opts.degenerate_streak {
                if self.shift.is_empty() && self.perturbations < MAX_PERTURBATIONS {
                    self.perturb();
                } else {
                    self.bland = true;
                }
                self.streak = 0;
            }
        } else {
            self.streak = 0;
            self.bland = self.opts.pricing == PricingRule::Bland;
        }
        Step::Pivoted
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let sf = self.sf;
        let mut d = self.cost[j];
        for k in sf.col_ptr[j]..sf.col_ptr[j + 1] {
            d -= self.y[sf.row_idx[k]] * sf.vals[k];
        }
        d
    }

    /// Entering column and its reduced cost.
    fn price(&self) -> Option<(usize, f64)> {
        let tol = self.opt_tol;
        if self.bland {
            return (0..self.n)
                .filter(|&j| self.position[j] == NONBASIC)
                .map(|j| (j, self.reduced_cost(j)))
                .find(|&(_, d)| d < -tol);
        }
        // Partial pricing: scan sections in rotation and stop at the first
        // one that holds an improving column.
        let n = self.n;
        let section = (n / 8).max(4 * self.m).max(256).min(n);
        let mut start = self.cursor.get() % n.max(1);
        let mut scanned = 0;
        let mut best: Option<(usize, f64)> = None;
        while scanned < n {
            let end = (start + section).min(n);
            for j in start..end {
                if self.position[j] != NONBASIC {
                    continue;
                }
                let d = self.reduced_cost(j);
                if d < -tol && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            scanned += end - start;
            start = if end == n { 0 } else { end };
            if best.is_some() {
                break;
            }
        }
        self.cursor.set(start);
        best
    }

    /// `B⁻¹ a_q`.
    fn ftran(&self, q: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; self.m];
        self.for_col(q, |row, v| alpha[row] += v);
        self.factor.ftran(&mut alpha);
        alpha
    }

    fn ratio_test(&self, alpha: &[f64]) -> Option<(usize, f64)> {
        // Artificials left in the basis after phase 1 are fixed at zero and
        // block any step that would move them.
        let fixed = |i: usize| self.phase == 2 && self.is_artificial(self.basis[i]);
        if self.bland {
            let mut best: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                let ratio = if fixed(i) {
                    if a.abs() <= PIVOT_TOL {
                        continue;
                    }
                    0.0
                } else if a > PIVOT_TOL {
                    // Degenerate rows tie exactly, so rounding noise in x_B
                    // cannot break the smallest-index rule.
                    if self.xb[i] <= self.opts.feas_tol {
                        0.0
                    } else {
                        self.xb[i] / a
                    }
                } else {
                    continue;
                };
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * br.max(1.0);
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            return best;
        }

        // Harris two-pass test: bound the step with a small feasibility
        // relaxation, then take the largest pivot inside that bound.
        let delta = self.opts.feas_tol;
        let mut theta_max = f64::INFINITY;
        for (i, &a) in alpha.iter().enumerate() {
            if fixed(i) {
                if a.abs() > PIVOT_TOL {
                    theta_max = 0.0;
                }
            } else if a > PIVOT_TOL {
                theta_max = theta_max.min((self.xb[i].max(0.0) + delta) / a);
            }
        }
        if theta_max == f64::INFINITY {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            let (ratio, weight) = if fixed(i) {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                (0.0, a.abs())
            } else if a > PIVOT_TOL {
                (self.xb[i].max(0.0) / a, a)
            } else {
                continue;
            };
            if ratio > theta_max {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, _, bw)) => weight > bw || weight == bw && self.basis[i] < self.basis[bi],
            };
            if better {
                best = Some((i, ratio, weight));
            }
        }
        best.map(|(i, ratio, _)| (i, ratio))
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], theta: f64) {
        let m = self.m;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[r] = theta;

        let leaving = self.basis[r];
        self.position[leaving] = NONBASIC;
        self.basis[r] = q;
        self.position[q] = r;
        self.factor.update(r, alpha);
        self.recompute_dual();
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j >= self.n {
            f(j - self.n, 1.0);
        } else {
            let sf = self.sf;
            for k in sf.col_ptr[j]..sf.col_ptr[j + 1] {
                f(sf.row_idx[k], sf.vals[k]);
            }
        }
    }

    /// `‖b̃ − B x_B‖∞`.
    fn basis_residual(&self) -> f64 {
        let mut r = self.sf.rhs.clone();
        for (x, s) in r.iter_mut().zip(&self.shift) {
            *x += s;
        }
        for i in 0..self.m {
            let x = self.xb[i];
            self.for_col(self.basis[i], |row, v| r[row] -= v * x);
        }
        r.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Refactors the basis from scratch, then recomputes `x_B` and `y`.
    fn refactor(&mut self) -> Result<(), LpError> {
        let cols = self
            .basis
            .iter()
            .map(|&col| {
                let mut c = Vec::new();
                self.for_col(col, |row, v| c.push((row, v)));
                c
            })
            .collect();
        self.factor = Factor::new(self.m, cols).map_err(|_| LpError::Uncertified {
            primal: f64::NAN,
            dual: f64::NAN,
            gap: f64::NAN,
        })?;
        self.recompute_primal();
        self.recompute_dual();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn recompute_primal(&mut self) {
        let mut xb = self.sf.rhs.clone();
        for (x, s) in xb.iter_mut().zip(&self.shift) {
            *x += s;
        }
        self.factor.ftran(&mut xb);
        self.xb = xb;
    }

    fn recompute_dual(&mut self) {
        let mut y: Vec<f64> = self.basis.iter().map(|&c| self.cost[c]).collect();
        self.factor.btran(&mut y);
        self.y = y;
    }

    /// Scaled standard-form primal (structural and slack columns) and duals.
    fn extract(&self) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; self.n];
        for (i, &col) in self.basis.iter().enumerate() {
            if col < self.n {
                x[col] = self.xb[i].max(0.0);
            }
        }
        (x, self.y.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(pricing: PricingRule) -> SolverOptions {
        SolverOptions {
            pricing,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn single_lower_bound_row() {
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var(1.0);
        lp.add_constraint([(x, 1.0)], Relation::Ge, 3.0);
        let sol = solve(&lp, 1e-9, 1e-8).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-12);
        assert!((sol.primal[0] - 3.0).abs() < 1e-12);
        assert!((sol.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maximize_sum_under_budget() {
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var(1.0);
        let y = lp.add_var(1.0);
        lp.add_constraint([(x, 1.0), (y, 1.0)], Relation::Le, 1.0);
        let sol = solve(&lp, 1e-9, 1e-8).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var(1.0);
        lp.add_constraint([(x, 1.0)], Relation::Le, -1.0);
        assert_eq!(solve(&lp, 1e-9, 1e-8).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var(1.0);
        let y = lp.add_var(0.0);
        lp.add_constraint([(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&lp, 1e-9, 1e-8).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_boxed_variables() {
        // min x - y, x free with x >= -2 via row, y in [1, 4]
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_bounded_var(1.0, f64::NEG_INFINITY, None);
        let y = lp.add_bounded_var(-1.0, 1.0, Some(4.0));
        lp.add_constraint([(x, 1.0)], Relation::Ge, -2.0);
        lp.add_constraint([(x, 1.0), (y, 1.0)], Relation::Le, 10.0);
        let sol = solve(&lp, 1e-9, 1e-8).unwrap();
        assert!((sol.objective + 6.0).abs() < 1e-10, "{}", sol.objective);
        assert!((sol.primal[x] + 2.0).abs() < 1e-10);
        assert!((sol.primal[y] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn redundant_equalities_keep_zero_artificials() {
        // x + y = 1 written twice plus 2x + 2y = 2.
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var(2.0);
        let y = lp.add_var(1.0);
        for k in [1.0, 1.0, 2.0] {
            lp.add_constraint([(x, k), (y, k)], Relation::Eq, k);
        }
        let sol = solve(&lp, 1e-9, 1e-8).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!(sol.residuals.duality_gap < 1e-10);
    }

    #[test]
    fn pricing_rules_agree_on_a_degenerate_assignment() {
        // 4x4 assignment problem: highly degenerate.
        let cost = [
            [4.0, 1.0, 3.0, 2.0],
            [2.0, 0.0, 5.0, 3.0],
            [3.0, 2.0, 2.0, 1.0],
            [1.0, 3.0, 4.0, 2.0],
        ];
        let mut lp = LinearProgram::new(Sense::Min);
        let mut v = [[0usize; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                v[i][j] = lp.add_var(cost[i][j]);
            }
        }
        for i in 0..4 {
            lp.add_constraint((0..4).map(|j| (v[i][j], 1.0)), Relation::Eq, 1.0);
            lp.add_constraint((0..4).map(|j| (v[j][i], 1.0)), Relation::Eq, 1.0);
        }
        let a = solve_with(&lp, &opts(PricingRule::Bland)).unwrap();
        let b = solve_with(&lp, &opts(PricingRule::Dantzig)).unwrap();
        // Brute force over the 24 permutations.
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        permute(&mut perm, 0, &mut |p| {
            best = best.min((0..4).map(|i| cost[i][p[i]]).sum());
        });
        assert!((a.objective - best).abs() < 1e-10);
        assert!((b.objective - best).abs() < 1e-10);
    }

    fn permute(p: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn identical_input_gives_identical_output() {
        let mut lp = LinearProgram::new(Sense::Max);
        let vars: Vec<usize> = (0..6).map(|j| lp.add_var(1.0 + (j % 3) as f64)).collect();
        lp.add_constraint(vars.iter().map(|&v| (v, 1.0)), Relation::Le, 4.0);
        lp.add_constraint(vars.iter().step_by(2).map(|&v| (v, 2.0)), Relation::Le, 3.0);
        lp.add_constraint(vars.iter().skip(1).map(|&v| (v, 1.0)), Relation::Ge, 1.0);
        let a = solve(&lp, 1e-9, 1e-8).unwrap();
        let b = solve(&lp, 1e-9, 1e-8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_malformed_input() {
        let mut lp = LinearProgram::new(Sense::Min);
        lp.add_var(f64::NAN);
        assert!(matches!(solve(&lp, 1e-9, 1e-8), Err(LpError::Malformed(_))));
    }
}
