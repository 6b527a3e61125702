//! How much an intermediate marginal tightens a price bound, and the
//! constructions for which it does not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::hedging::{gap_h, SemiStaticStrategy};
use crate::lp::{self, LinearProgram, LpStatus, Relation, Sense};
use crate::measures::{convex_interpolate, Corridor, DiscreteMeasure};
use crate::mot::{build_lp, for_each_tuple, solve_mot, MotProblem, MotSolution, Payoff};
use crate::{Error, Result};

/// Tolerance on "no improvement", relative to `1 + |bound|`.
pub const NO_IMPROVEMENT_TOL: f64 = 1e-7;

/// Change of one bound when the intermediate marginal is added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Improvement {
    /// Tightening in price units (nonnegative up to rounding).
    pub absolute: f64,
    /// `absolute / |two-date bound|`; `None` when that bound is zero.
    pub relative: Option<f64>,
}

impl Improvement {
    fn new(absolute: f64, base: f64) -> Self {
        Improvement {
            absolute,
            relative: (base != 0.0).then(|| absolute / base.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    pub payoff: String,
    pub lower_13: f64,
    pub lower_123: f64,
    pub upper_123: f64,
    pub upper_13: f64,
    pub lower_improvement: Improvement,
    pub upper_improvement: Improvement,
}

impl ImprovementReport {
    /// `lower_13 ≤ lower_123 ≤ upper_123 ≤ upper_13` within `tol`.
    pub fn is_sandwiched(&self, tol: f64) -> bool {
        self.lower_13 <= self.lower_123 + tol
            && self.lower_123 <= self.upper_123 + tol
            && self.upper_123 <= self.upper_13 + tol
    }
}

/// The four optimal solutions behind an [`ImprovementReport`].
#[derive(Debug, Clone)]
pub struct ImprovementRun {
    pub problem: MotProblem,
    pub lower_13: MotSolution,
    pub lower_123: MotSolution,
    pub upper_123: MotSolution,
    pub upper_13: MotSolution,
}

impl ImprovementRun {
    pub fn report(&self) -> ImprovementReport {
        let (l13, l123) = (self.lower_13.objective, self.lower_123.objective);
        let (u123, u13) = (self.upper_123.objective, self.upper_13.objective);
        ImprovementReport {
            payoff: self.problem.payoff().name().to_string(),
            lower_13: l13,
            lower_123: l123,
            upper_123: u123,
            upper_13: u13,
            lower_improvement: Improvement::new(l123 - l13, l13),
            upper_improvement: Improvement::new(u13 - u123, u13),
        }
    }
}

fn three_dates(marginals: &[DiscreteMeasure; 3], payoff: &Payoff, sense: Sense) -> Result<MotProblem> {
    if payoff.arity() != 3 || payoff.deps().contains(&1) {
        return Err(Error::InvalidArgument(format!(
            "payoff '{}' must read only dates 1 and 3 of 3",
            payoff.name()
        )));
    }
    MotProblem::new(marginals.to_vec(), payoff.clone(), sense)
}

/// Lower and upper bounds with and without the intermediate marginal.
pub fn improvement_run(marginals: &[DiscreteMeasure; 3], payoff: &Payoff) -> Result<ImprovementRun> {
    let p = three_dates(marginals, payoff, Sense::Min)?;
    let outer = p.restrict(&[0, 2])?;
    let jobs = [
        (outer.clone(), Sense::Min),
        (p.clone(), Sense::Min),
        (p.clone(), Sense::Max),
        (outer, Sense::Max),
    ];
    let mut sols = jobs
        .par_iter()
        .map(|(q, s)| solve_mot(&q.with_sense(*s)))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || sols.next().expect("four solutions");
    Ok(ImprovementRun {
        problem: p,
        lower_13: next(),
        lower_123: next(),
        upper_123: next(),
        upper_13: next(),
    })
}

pub fn improvement_report(marginals: &[DiscreteMeasure; 3], payoff: &Payoff) -> Result<ImprovementReport> {
    Ok(improvement_run(marginals, payoff)?.report())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    /// Add dates 2, 3, …, n−1.
    Left,
    /// Add dates n−1, n−2, …, 2.
    Right,
}

impl std::str::FromStr for SweepOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(SweepOrder::Left),
            "right" => Ok(SweepOrder::Right),
            other => Err(format!("unknown order '{other}', expected left or right")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepStep {
    /// Included dates, 1-based and increasing.
    pub included: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub order: SweepOrder,
    pub steps: Vec<SweepStep>,
}

impl SweepResult {
    /// Lower bounds never fall and upper bounds never rise along the sweep.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.steps
            .windows(2)
            .all(|w| w[1].lower >= w[0].lower - tol && w[1].upper <= w[0].upper + tol)
    }
}

/// Bounds for the nested date sets `{1, n}`, then one interior date added
/// at a time in `order`. The payoff must read only the first and last date.
pub fn inclusion_sweep(marginals: &[DiscreteMeasure], payoff: &Payoff, order: SweepOrder) -> Result<SweepResult> {
    let n = marginals.len();
    if n < 2 || payoff.arity() != n || payoff.deps().iter().any(|&d| d != 0 && d != n - 1) {
        return Err(Error::InvalidArgument(
            "sweep needs at least two dates and a payoff of the first and last date".into(),
        ));
    }
    let full = MotProblem::new(marginals.to_vec(), payoff.clone(), Sense::Min)?;
    let interior: Vec<usize> = match order {
        SweepOrder::Left => (1..n - 1).collect(),
        SweepOrder::Right => (1..n - 1).rev().collect(),
    };
    let sets: Vec<Vec<usize>> = (0..=interior.len())
        .map(|k| {
            let mut s: Vec<usize> = interior[..k].to_vec();
            s.push(0);
            s.push(n - 1);
            s.sort_unstable();
            s
        })
        .collect();
    let steps = sets
        .par_iter()
        .map(|keep| {
            let p = full.restrict(keep)?;
            let lower = solve_mot(&p)?.objective;
            let upper = solve_mot(&p.with_sense(Sense::Max))?.objective;
            Ok(SweepStep {
                included: keep.iter().map(|i| i + 1).collect(),
                lower,
                upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { order, steps })
}

/// Whether some martingale coupling of `(μ₁, μ₂)` keeps `x₂` inside
/// `[T_d(x₁), T_u(x₁)]` for every `x₁`.
pub fn corridor_feasible(
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    corridor: &Corridor,
    feas_tol: f64,
) -> Result<bool> {
    if corridor.t_d.len() != mu1.len() || corridor.t_u.len() != mu1.len() {
        return Err(Error::InvalidArgument("corridor does not match the atoms of the first marginal".into()));
    }
    let mut lp = LinearProgram::new(Sense::Min);
    let rows1: Vec<usize> = mu1.weights().iter().map(|&w| lp.add_row(Relation::Eq, w)).collect();
    let rows2: Vec<usize> = mu2.weights().iter().map(|&w| lp.add_row(Relation::Eq, w)).collect();
    let mart: Vec<usize> = (0..mu1.len()).map(|_| lp.add_row(Relation::Eq, 0.0)).collect();
    for (a, &x1) in mu1.atoms().iter().enumerate() {
        let slack = 1e-12 * (1.0 + x1.abs());
        let (lo, hi) = (corridor.t_d[a] - slack, corridor.t_u[a] + slack);
        for (b, &x2) in mu2.atoms().iter().enumerate() {
            if x2 < lo || x2 > hi {
                continue;
            }
            let col = lp.add_var(0.0);
            lp.set(rows1[a], col, 1.0);
            lp.set(rows2[b], col, 1.0);
            lp.set(mart[a], col, x2 - x1);
        }
    }
    let sol = lp::solve(&lp, feas_tol, 1e-8)?;
    Ok(sol.status == LpStatus::Optimal)
}

/// Corridor of a two-date coupling in which every `x₁` reaches at most two
/// values; `None` otherwise.
pub fn extract_two_map(sol: &MotSolution, mu1: &DiscreteMeasure, mu3: &DiscreteMeasure) -> Option<Corridor> {
    if sol.coupling.sizes.len() != 2 {
        return None;
    }
    let mut reach: Vec<Vec<usize>> = vec![Vec::new(); mu1.len()];
    for (k, _) in &sol.coupling.entries {
        reach[k[0]].push(k[1]);
    }
    let mut t_d = Vec::with_capacity(mu1.len());
    let mut t_u = Vec::with_capacity(mu1.len());
    for (a, targets) in reach.iter().enumerate() {
        let x1 = mu1.atoms()[a];
        match targets.as_slice() {
            [] => {
                t_d.push(x1);
                t_u.push(x1);
            }
            [b] => {
                t_d.push(mu3.atoms()[*b].min(x1));
                t_u.push(mu3.atoms()[*b].max(x1));
            }
            [b, c] => {
                t_d.push(mu3.atoms()[*b].min(x1));
                t_u.push(mu3.atoms()[*c].max(x1));
            }
            _ => return None,
        }
    }
    Some(Corridor { t_d, t_u })
}

/// A two-date instance whose unique optimal lower-bound coupling is the
/// two-map coupling of `corridor`: `μ₃` is the interpolation at `t = 1` and
/// `c(x₁, x₃) = min(|x₃ − T_u(x₁)|, |x₃ − T_d(x₁)|)` (minimum 0). The payoff
/// is returned on three dates, reading the first and last.
pub fn two_map_instance(mu1: &DiscreteMeasure, corridor: &Corridor) -> Result<(DiscreteMeasure, Payoff)> {
    let mu3 = convex_interpolate(mu1, corridor, 1.0)?;
    let atoms = mu1.atoms().to_vec();
    let (t_d, t_u) = (corridor.t_d.clone(), corridor.t_u.clone());
    let payoff = Payoff::first_last("two-map distance", 3, move |x1, x3| {
        let k = atoms.partition_point(|&a| a < x1 - 1e-12 * (1.0 + x1.abs()));
        if k >= atoms.len() {
            return f64::NAN;
        }
        (x3 - t_u[k]).abs().min((x3 - t_d[k]).abs())
    })?;
    Ok((mu3, payoff))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessCheck {
    pub unique: bool,
    /// Support of the unperturbed optimizer as atom-index tuples.
    pub support: Vec<Vec<usize>>,
    pub objective: f64,
}

/// Heuristic uniqueness test: re-solves with the cost perturbed by
/// `ξ·(1 + max|c|)·r`, `r` uniform on `[−1, 1]` per tuple, for `draws`
/// seeded draws, and reports whether every optimizer has the same support.
pub fn optimizer_is_unique(p: &MotProblem, xi: f64, draws: usize, seed: u64) -> Result<UniquenessCheck> {
    let (lp, _) = build_lp(p);
    let base = support_of(&lp, p)?;
    let scale = 1.0 + lp.costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unique = true;
    for _ in 0..draws {
        let mut perturbed = lp.clone();
        for c in perturbed.costs.iter_mut() {
            *c += xi * scale * rng.gen_range(-1.0..=1.0);
        }
        if support_of(&perturbed, p)?.0 != base.0 {
            unique = false;
        }
    }
    Ok(UniquenessCheck {
        unique,
        support: base.0,
        objective: base.1,
    })
}

fn support_of(lp: &LinearProgram, p: &MotProblem) -> Result<(Vec<Vec<usize>>, f64)> {
    let sol = lp::solve(lp, 1e-9, 1e-8)?;
    if !sol.is_optimal() {
        return Err(Error::Infeasible);
    }
    let mut support = Vec::new();
    let mut col = 0usize;
    for_each_tuple(&p.sizes(), |k| {
        if sol.primal[col] > 1e-10 {
            support.push(k.to_vec());
        }
        col += 1;
    });
    Ok((support, sol.objective))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Mixture,
    ConvexInterpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoImprovementRow {
    pub construction: Construction,
    pub t: f64,
    pub bound_13: f64,
    pub bound_123: f64,
    /// `|bound_123 − bound_13|`.
    pub delta: f64,
}

/// For each `t`, inserts `μ₂ = (1 − t)μ₁ + tμ₃` and, when a corridor is
/// given, `μ₂ = convex_interpolate(μ₁, corridor, t)`, and reports how far the
/// bound moves. With a corridor, `mu3` should be its interpolation at `t = 1`.
pub fn no_improvement_suite(
    mu1: &DiscreteMeasure,
    mu3: &DiscreteMeasure,
    payoff: &Payoff,
    sense: Sense,
    t_grid: &[f64],
    corridor: Option<&Corridor>,
) -> Result<Vec<NoImprovementRow>> {
    let outer = MotProblem::new(vec![mu1.clone(), mu3.clone()], payoff.restrict(&[0, 2])?, sense)?;
    let bound_13 = solve_mot(&outer)?.objective;
    let mut cases = Vec::new();
    for &t in t_grid {
        cases.push((Construction::Mixture, t));
        if corridor.is_some() {
            cases.push((Construction::ConvexInterpolation, t));
        }
    }
    cases
        .par_iter()
        .map(|&(construction, t)| {
            let mu2 = match construction {
                Construction::Mixture => mu1.mixture(mu3, t)?,
                Construction::ConvexInterpolation => {
                    convex_interpolate(mu1, corridor.expect("corridor present"), t)?
                }
            };
            let bound_123 = bound_with(mu1, &mu2, mu3, payoff, sense)?;
            Ok(NoImprovementRow {
                construction,
                t,
                bound_13,
                bound_123,
                delta: (bound_123 - bound_13).abs(),
            })
        })
        .collect()
}

fn bound_with(
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    mu3: &DiscreteMeasure,
    payoff: &Payoff,
    sense: Sense,
) -> Result<f64> {
    let p = three_dates(&[mu1.clone(), mu2.clone(), mu3.clone()], payoff, sense)?;
    Ok(solve_mot(&p)?.objective)
}

/// Whether `(1 − λ)·muA + λ·muB` still leaves the bound unchanged, given
/// that `muA` and `muB` do.
pub fn convexity_of_i_check(
    mu1: &DiscreteMeasure,
    mu3: &DiscreteMeasure,
    payoff: &Payoff,
    sense: Sense,
    mu_a: &DiscreteMeasure,
    mu_b: &DiscreteMeasure,
    lambda: f64,
) -> Result<bool> {
    let outer = MotProblem::new(vec![mu1.clone(), mu3.clone()], payoff.restrict(&[0, 2])?, sense)?;
    let bound_13 = solve_mot(&outer)?.objective;
    let mu2 = mu_a.mixture(mu_b, lambda)?;
    let bound_123 = bound_with(mu1, &mu2, mu3, payoff, sense)?;
    Ok((bound_123 - bound_13).abs() <= NO_IMPROVEMENT_TOL * (1.0 + bound_13.abs()))
}

/// The tightening `P₁₂₃ − P₁₃` of a lower bound rebuilt from the two
/// optimal certificates: with `(u₁, u₂, u₃, Δ₁, Δ₂)` optimal on three dates,
/// `(v₁, v₃, Δ)` optimal on dates 1 and 3, and `H` the gap function of
/// `(u₁, u₃, Δ₁, Δ₂)`,
///
/// `P₁₂₃ − P₁₃ = E_{μ₂}[H] + E_{μ₁}[u₁ − v₁] + E_{μ₃}[u₃ − v₃]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeOfImprovement {
    /// Difference of the two LP optima.
    pub lp_difference: f64,
    /// The right-hand side above.
    pub certificate_difference: f64,
    pub expected_h: f64,
    pub expected_u2: f64,
    /// Smallest `H − u₂` on the intermediate grid.
    pub min_h_minus_u2: f64,
}

/// Evaluates [`DegreeOfImprovement`] for a lower (`Min`) or upper (`Max`)
/// bound; upper bounds are handled as lower bounds of `−c`.
pub fn degree_of_improvement(
    marginals: &[DiscreteMeasure; 3],
    payoff: &Payoff,
    sense: Sense,
) -> Result<DegreeOfImprovement> {
    let p = three_dates(marginals, payoff, sense)?;
    let outer = p.restrict(&[0, 2])?;
    let (s3, s2) = rayon::join(|| solve_mot(&p), || solve_mot(&outer));
    let (s3, s2) = (s3?, s2?);
    let [mu1, mu2, mu3] = marginals;
    let sign = sense.sign();
    let strat3 = SemiStaticStrategy::from_three_date_certificate(&s3.dual, [mu1, mu2, mu3], true)?.scaled(sign);
    let c = match sense {
        Sense::Min => payoff.clone(),
        Sense::Max => payoff.negated(),
    };
    let h = gap_h(&strat3, &c, mu1.atoms(), mu2.atoms(), mu3.atoms())?;
    let expected_h = h.expectation(mu2)?;
    let u2 = &s3.dual.u[1];
    let expected_u2 = sign * mu2.weights().iter().zip(u2).map(|(w, u)| w * u).sum::<f64>();
    let min_h_minus_u2 = h
        .values
        .iter()
        .zip(u2)
        .map(|(h, u)| h - sign * u)
        .fold(f64::INFINITY, f64::min);
    let diff = |u: &[f64], v: &[f64], m: &DiscreteMeasure| -> f64 {
        m.weights().iter().zip(u.iter().zip(v)).map(|(w, (a, b))| w * (a - b)).sum()
    };
    let certificate_difference =
        sign * expected_h + diff(&s3.dual.u[0], &s2.dual.u[0], mu1) + diff(&s3.dual.u[2], &s2.dual.u[1], mu3);
    Ok(DegreeOfImprovement {
        lp_difference: s3.objective - s2.objective,
        certificate_difference,
        expected_h,
        expected_u2,
        min_h_minus_u2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::sample_surface;
    use crate::measures::{binomial_marginal, ContinuousLawSpec};

    fn sample() -> [DiscreteMeasure; 3] {
        let m = sample_surface().implied_marginals().unwrap();
        [m[0].clone(), m[1].clone(), m[2].clone()]
    }

    #[test]
    fn linear_payoff_has_no_spread() {
        let r = improvement_report(&sample(), &Payoff::from_spec("forward", 3).unwrap()).unwrap();
        for v in [r.lower_13, r.lower_123, r.upper_123, r.upper_13] {
            assert!(v.abs() < 1e-9, "{r:?}");
        }
        assert!(r.lower_improvement.absolute.abs() < 1e-9);
    }

    #[test]
    fn straddle_report() {
        let r = improvement_report(&sample(), &Payoff::from_spec("straddle", 3).unwrap()).unwrap();
        assert!(r.is_sandwiched(1e-7));
        assert!((r.lower_improvement.relative.unwrap() - 0.1243).abs() < 5e-4);
        assert!(r.upper_improvement.absolute.abs() < 1e-7);
    }

    #[test]
    fn binomial_sweep_meets() {
        let ms: Vec<_> = (1..=6).map(|k| binomial_marginal(100.0, k)).collect();
        let payoff = Payoff::from_spec("forward-call", 6).unwrap();
        let left = inclusion_sweep(&ms, &payoff, SweepOrder::Left).unwrap();
        let last = left.steps.last().unwrap();
        assert!((last.upper - last.lower).abs() < 1e-7);
        assert!((last.lower - 0.9375).abs() < 1e-7);
        assert!(left.is_monotone(1e-7));
    }

    #[test]
    fn corridor_forcing_identity() {
        let pm1 = DiscreteMeasure::uniform_on(&[-1.0, 1.0]).unwrap();
        let id = Corridor::from_fns(&pm1, |x| x, |x| x);
        assert!(corridor_feasible(&pm1, &pm1, &id, 1e-9).unwrap());
        let wide = DiscreteMeasure::uniform_on(&[-2.0, 2.0]).unwrap();
        assert!(!corridor_feasible(&pm1, &wide, &id, 1e-9).unwrap());
    }

    #[test]
    fn two_map_instance_has_unique_zero_optimum() {
        let mu1 = ContinuousLawSpec::uniform(-1.0, 1.0).unwrap().quantize(6).unwrap();
        let c = Corridor::from_fns(&mu1, |x| -0.5 * x - 1.5, |x| 1.5 * x + 0.5);
        let (mu3, payoff) = two_map_instance(&mu1, &c).unwrap();
        let p = MotProblem::new(vec![mu1.clone(), mu3.clone()], payoff.restrict(&[0, 2]).unwrap(), Sense::Min)
            .unwrap();
        let u = optimizer_is_unique(&p, 1e-7, 3, 0).unwrap();
        assert!(u.unique);
        assert!(u.objective.abs() < 1e-9);
        let sol = solve_mot(&p).unwrap();
        let got = extract_two_map(&sol, &mu1, &mu3).unwrap();
        for k in 0..mu1.len() {
            assert!((got.t_d[k] - c.t_d[k]).abs() < 1e-12 && (got.t_u[k] - c.t_u[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_of_improvement_matches() {
        let payoff = Payoff::from_spec("straddle", 3).unwrap();
        for sense in [Sense::Min, Sense::Max] {
            let d = degree_of_improvement(&sample(), &payoff, sense).unwrap();
            assert!((d.lp_difference - d.certificate_difference).abs() < 1e-6 * 100.0, "{d:?}");
            assert!(d.min_h_minus_u2 >= -1e-7, "{d:?}");
            assert!(d.expected_u2 <= d.expected_h + 1e-7, "{d:?}");
        }
    }
}
