//! Semi-static strategies over three dates and the hedging gap
//!
//! ```text
//! H(x₂) = min over (x₁, x₃) of
//!         c(x₁, x₃) − u₁(x₁) − u₃(x₃) − Δ₁(x₁)(x₂ − x₁) − Δ₂(x₁, x₂)(x₃ − x₂)
//! ```
//!
//! The minimum is taken over the supplied atom grids only. On a grid H can
//! be larger than the same expression minimized over the whole real plane,
//! so a grid check does not certify the continuum inequality.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::measures::DiscreteMeasure;
use crate::mot::{DualCertificate, Payoff};
use crate::{Error, Result};

pub type Leg = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Trade = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Tolerance for indicator sets and atom lookups.
pub const ATOM_TOL: f64 = 1e-12;

/// Static legs `u₁, u₃` (and optionally `u₂`) plus positions `Δ₁(x₁)` held
/// over `[t₁, t₂]` and `Δ₂(x₁, x₂)` over `[t₂, t₃]`.
#[derive(Clone)]
pub struct SemiStaticStrategy {
    pub u1: Leg,
    pub u3: Leg,
    pub delta1: Leg,
    pub delta2: Trade,
    pub u2: Option<Leg>,
}

impl std::fmt::Debug for SemiStaticStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemiStaticStrategy")
            .field("has_u2", &self.u2.is_some())
            .finish_non_exhaustive()
    }
}

fn leg(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Leg {
    Arc::new(f)
}

fn trade(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Trade {
    Arc::new(f)
}

/// Piecewise-undefined lookup of tabulated values at atoms; NaN off the grid.
fn tabulated(atoms: &[f64], values: &[f64]) -> Leg {
    let atoms = atoms.to_vec();
    let values = values.to_vec();
    leg(move |x| match find_atom(&atoms, x) {
        Some(k) => values[k],
        None => f64::NAN,
    })
}

fn find_atom(atoms: &[f64], x: f64) -> Option<usize> {
    let k = atoms.partition_point(|&a| a < x - ATOM_TOL * (1.0 + x.abs()));
    (k < atoms.len() && (atoms[k] - x).abs() <= ATOM_TOL * (1.0 + x.abs())).then_some(k)
}

impl SemiStaticStrategy {
    pub fn zero() -> Self {
        SemiStaticStrategy {
            u1: leg(|_| 0.0),
            u3: leg(|_| 0.0),
            delta1: leg(|_| 0.0),
            delta2: trade(|_, _| 0.0),
            u2: None,
        }
    }

    pub fn with_u2(mut self, u2: Leg) -> Self {
        self.u2 = Some(u2);
        self
    }

    /// Payoff `u₁ + u₂ + u₃ + Δ₁(x₂ − x₁) + Δ₂(x₃ − x₂)` along one path.
    pub fn payoff(&self, x1: f64, x2: f64, x3: f64) -> f64 {
        (self.u1)(x1)
            + self.u2.as_ref().map_or(0.0, |u| u(x2))
            + (self.u3)(x3)
            + (self.delta1)(x1) * (x2 - x1)
            + (self.delta2)(x1, x2) * (x3 - x2)
    }

    /// `Σ E_{μᵢ}[uᵢ]`, skipping `u₂` when absent.
    pub fn value(&self, mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, mu3: &DiscreteMeasure) -> f64 {
        mu1.expectation(|x| (self.u1)(x))
            + self.u2.as_ref().map_or(0.0, |u| mu2.expectation(|x| u(x)))
            + mu3.expectation(|x| (self.u3)(x))
    }

    /// `λ·self + (1 − λ)·other`, leg by leg.
    pub fn combine(&self, other: &SemiStaticStrategy, lambda: f64) -> SemiStaticStrategy {
        let (a, b) = (self.clone(), other.clone());
        let mix1 = |f: Leg, g: Leg| leg(move |x| lambda * f(x) + (1.0 - lambda) * g(x));
        let u2 = match (a.u2.clone(), b.u2.clone()) {
            (None, None) => None,
            (f, g) => Some(mix1(
                f.unwrap_or_else(|| leg(|_| 0.0)),
                g.unwrap_or_else(|| leg(|_| 0.0)),
            )),
        };
        let (d2a, d2b) = (a.delta2.clone(), b.delta2.clone());
        SemiStaticStrategy {
            u1: mix1(a.u1, b.u1),
            u3: mix1(a.u3, b.u3),
            delta1: mix1(a.delta1, b.delta1),
            delta2: trade(move |x1, x2| lambda * d2a(x1, x2) + (1.0 - lambda) * d2b(x1, x2)),
            u2,
        }
    }

    /// Scales every leg by `factor`.
    pub fn scaled(&self, factor: f64) -> SemiStaticStrategy {
        self.combine(&SemiStaticStrategy::zero(), factor)
    }

    /// Strategy from a two-date certificate on `(μ₁, μ₃)`, holding the same
    /// position through the intermediate date: `Δ₂(x₁, x₂) := Δ₁(x₁)`.
    pub fn from_two_date_certificate(
        cert: &DualCertificate,
        mu1: &DiscreteMeasure,
        mu3: &DiscreteMeasure,
    ) -> Result<SemiStaticStrategy> {
        if cert.u.len() != 2 || cert.delta.len() != 1 {
            return Err(Error::InvalidArgument("expected a two-date certificate".into()));
        }
        let delta1 = tabulated(mu1.atoms(), &cert.delta[0]);
        let d = delta1.clone();
        Ok(SemiStaticStrategy {
            u1: tabulated(mu1.atoms(), &cert.u[0]),
            u3: tabulated(mu3.atoms(), &cert.u[1]),
            delta1,
            delta2: trade(move |x1, _| d(x1)),
            u2: None,
        })
    }

    /// Strategy from a three-date certificate; `u₂` is kept unless
    /// `drop_u2` is set.
    pub fn from_three_date_certificate(
        cert: &DualCertificate,
        marginals: [&DiscreteMeasure; 3],
        drop_u2: bool,
    ) -> Result<SemiStaticStrategy> {
        if cert.u.len() != 3 || cert.delta.len() != 2 {
            return Err(Error::InvalidArgument("expected a three-date certificate".into()));
        }
        let [mu1, mu2, mu3] = marginals;
        let atoms1 = mu1.atoms().to_vec();
        let atoms2 = mu2.atoms().to_vec();
        let table = cert.delta[1].clone();
        let n2 = atoms2.len();
        let delta2 = trade(move |x1, x2| match (find_atom(&atoms1, x1), find_atom(&atoms2, x2)) {
            (Some(a), Some(b)) => table[a * n2 + b],
            _ => f64::NAN,
        });
        Ok(SemiStaticStrategy {
            u1: tabulated(mu1.atoms(), &cert.u[0]),
            u3: tabulated(mu3.atoms(), &cert.u[2]),
            delta1: tabulated(mu1.atoms(), &cert.delta[0]),
            delta2,
            u2: (!drop_u2).then(|| tabulated(mu2.atoms(), &cert.u[1])),
        })
    }
}

/// Values of H on the intermediate grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GapFunction {
    pub fn expectation(&self, mu2: &DiscreteMeasure) -> Result<f64> {
        mu2.iter()
            .map(|(x, w)| match find_atom(&self.grid, x) {
                Some(k) => Ok(w * self.values[k]),
                None => Err(Error::Domain(x)),
            })
            .sum()
    }

    /// `x2,H` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x2,H\n");
        for (x, h) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{h}");
        }
        out
    }

    /// As a strategy leg, looked up at the grid points.
    pub fn as_leg(&self) -> Leg {
        tabulated(&self.grid, &self.values)
    }
}

fn eval_c(payoff: &Payoff, x1: f64, x2: f64, x3: f64) -> f64 {
    match payoff.arity() {
        2 => payoff.eval(&[x1, x3]),
        _ => payoff.eval(&[x1, x2, x3]),
    }
}

/// Evaluates H exactly over the grids. `payoff` has two dates `(x₁, x₃)` or
/// three. Fails if the strategy is undefined (NaN or infinite) on the grid.
pub fn gap_h(
    strategy: &SemiStaticStrategy,
    payoff: &Payoff,
    grid1: &[f64],
    grid2: &[f64],
    grid3: &[f64],
) -> Result<GapFunction> {
    if grid1.is_empty() || grid2.is_empty() || grid3.is_empty() {
        return Err(Error::InvalidArgument("gap function needs non-empty grids".into()));
    }
    if !(2..=3).contains(&payoff.arity()) {
        return Err(Error::InvalidArgument(format!(
            "gap function needs a payoff on 2 or 3 dates, got {}",
            payoff.arity()
        )));
    }
    let u1 = grid1.iter().map(|&x| (strategy.u1)(x)).collect::<Vec<_>>();
    let d1 = grid1.iter().map(|&x| (strategy.delta1)(x)).collect::<Vec<_>>();
    let u3 = grid3.iter().map(|&x| (strategy.u3)(x)).collect::<Vec<_>>();
    for (grid, vals) in [(grid1, &u1), (grid1, &d1), (grid3, &u3)] {
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(grid[k]));
        }
    }
    let values = grid2
        .par_iter()
        .map(|&x2| {
            let mut best = f64::INFINITY;
            for (a, &x1) in grid1.iter().enumerate() {
                let d2 = (strategy.delta2)(x1, x2);
                if !d2.is_finite() {
                    return Err(Error::Domain(x2));
                }
                let base = u1[a] + d1[a] * (x2 - x1);
                for (b, &x3) in grid3.iter().enumerate() {
                    let v = eval_c(payoff, x1, x2, x3) - base - u3[b] - d2 * (x3 - x2);
                    best = best.min(v);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapFunction {
        grid: grid2.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubhedgeReport {
    /// `min(H − u₂) ≥ −tol` on the intermediate grid.
    pub ok: bool,
    /// `max(0, −min(H − u₂))`.
    pub worst_violation: f64,
    /// `Σ E_{μᵢ}[uᵢ]`.
    pub value: f64,
    pub gap: GapFunction,
}

/// Checks `u₁ + u₂ + u₃ + Δ₁(x₂ − x₁) + Δ₂(x₃ − x₂) ≤ c` on the atom grids of
/// the three marginals.
pub fn verify_subhedge(
    strategy: &SemiStaticStrategy,
    payoff: &Payoff,
    marginals: [&DiscreteMeasure; 3],
    tol: f64,
) -> Result<SubhedgeReport> {
    let [mu1, mu2, mu3] = marginals;
    let gap = gap_h(strategy, payoff, mu1.atoms(), mu2.atoms(), mu3.atoms())?;
    let mut worst = f64::INFINITY;
    for (&x2, &h) in gap.grid.iter().zip(&gap.values) {
        let u2 = strategy.u2.as_ref().map_or(0.0, |u| u(x2));
        if !u2.is_finite() {
            return Err(Error::Domain(x2));
        }
        worst = worst.min(h - u2);
    }
    Ok(SubhedgeReport {
        ok: worst >= -tol,
        worst_violation: (-worst).max(0.0),
        value: strategy.value(mu1, mu2, mu3),
        gap,
    })
}

/// Closed-form two-date sub-hedge of the forward-start straddle `|x₃ − x₁|`
/// for `x₁ ~ U[−1, 1]`, `x₃ ~ U[−2, 2]`.
///
/// For `x > 1` the position uses `−θ(q⁻¹(x))`, the reading that matches the
/// other two branches. The outer branches are taken on open sets so the
/// middle formula holds on the closed interval `[−1, 1]`.
pub mod hobson {
    use super::*;

    fn check(x: f64) -> Result<f64> {
        if (-2.0..=2.0).contains(&x) {
            Ok(x)
        } else {
            Err(Error::Domain(x))
        }
    }

    pub fn alpha(x: f64) -> Result<f64> {
        let x = check(x)?;
        let s3 = 3f64.sqrt();
        Ok(2.0 * x / s3 * (x / 2.0).asin() + (2.0 - (4.0 - x * x).sqrt()) / s3)
    }

    pub fn theta(x: f64) -> Result<f64> {
        let x = check(x)?;
        Ok(2.0 / 3f64.sqrt() * (x / 2.0).asin())
    }

    pub fn p(x: f64) -> Result<f64> {
        let x = check(x)?;
        Ok((-(3.0 * (4.0 - x * x)).sqrt() - x) / 2.0)
    }

    pub fn q(x: f64) -> Result<f64> {
        let x = check(x)?;
        Ok(((3.0 * (4.0 - x * x)).sqrt() - x) / 2.0)
    }

    pub fn p_inv(x: f64) -> Result<f64> {
        let x = check(x)?;
        Ok((-x - (3.0 * (4.0 - x * x)).sqrt()) / 2.0)
    }

    pub fn q_inv(x: f64) -> Result<f64> {
        let x = check(x)?;
        Ok((-x + (3.0 * (4.0 - x * x)).sqrt()) / 2.0)
    }

    pub fn u3(x: f64) -> Result<f64> {
        if x < -1.0 {
            let y = p_inv(x)?;
            Ok(alpha(y)? + (y - x) * (1.0 - theta(y)?))
        } else if x > 1.0 {
            let y = q_inv(x)?;
            Ok(alpha(y)? + (y - x) * (-1.0 - theta(y)?))
        } else {
            alpha(x)
        }
    }

    pub fn u1(x: f64) -> Result<f64> {
        Ok(-u3(x)?)
    }

    pub fn delta1(x: f64) -> Result<f64> {
        if x < -1.0 {
            Ok(-theta(p_inv(x)?)?)
        } else if x > 1.0 {
            Ok(-theta(q_inv(x)?)?)
        } else {
            Ok(-theta(x)?)
        }
    }
}

/// The closed-form two-date straddle strategy with `Δ₂(x₁, x₂) := Δ₁(x₁)`.
/// Legs evaluate to NaN outside `[−2, 2]`, which [`gap_h`] reports as a
/// domain error.
pub fn hobson_strategy() -> SemiStaticStrategy {
    let nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
    SemiStaticStrategy {
        u1: leg(move |x| nan(hobson::u1(x))),
        u3: leg(move |x| nan(hobson::u3(x))),
        delta1: leg(move |x| nan(hobson::delta1(x))),
        delta2: trade(move |x1, _| nan(hobson::delta1(x1))),
        u2: None,
    }
}

fn in_unit(x: f64) -> bool {
    (-1.0 - ATOM_TOL..=1.0 + ATOM_TOL).contains(&x)
}

fn in_interval(x: f64, lo: f64, hi: f64) -> bool {
    (lo - ATOM_TOL..=hi + ATOM_TOL).contains(&x)
}

/// Three-date sub-hedge of `|x₃ − x₁|` with value `E[1 − x₁²] = 2/3` for
/// `x₁ ~ U[−1, 1]`, `x₂ ~ U{−1, 1}`:
/// `u₁ = 1 − x₁²`, `u₂ = (−1 − |x₂|)·1{x₂ ∉ {±1}}`, `u₃ = 0`,
/// `Δ₁ = −x₁·1{|x₁| ≤ 1}`, `Δ₂ = (1{x₂ = 1} − 1{x₂ = −1})·1{|x₁| ≤ 1}`.
pub fn straddle_strategy() -> SemiStaticStrategy {
    let near = |x: f64, y: f64| (x - y).abs() <= ATOM_TOL;
    SemiStaticStrategy {
        u1: leg(|x| 1.0 - x * x),
        u3: leg(|_| 0.0),
        delta1: leg(|x| if in_unit(x) { -x } else { 0.0 }),
        delta2: trade(move |x1, x2| {
            if !in_unit(x1) {
                0.0
            } else if near(x2, 1.0) {
                1.0
            } else if near(x2, -1.0) {
                -1.0
            } else {
                0.0
            }
        }),
        u2: Some(leg(move |x| {
            if near(x, 1.0) || near(x, -1.0) {
                0.0
            } else {
                -1.0 - x.abs()
            }
        })),
    }
}

/// The ε-relaxed straddle strategy: `u₁ = 1 − ε − x₁²` and the ±1 tests of
/// [`straddle_strategy`] widened to `A₁ = [−1, −1 + ε]`, `A₂ = [1 − ε, 1]`.
///
/// The inequality holds for intermediate values within `ε/2` of ±1 but can
/// fail by up to about `ε/2` elsewhere in `A₁ ∪ A₂`.
pub fn straddle_epsilon_strategy(eps: f64) -> Result<SemiStaticStrategy> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {eps} outside (0, 1)")));
    }
    let a1 = move |x: f64| in_interval(x, -1.0, -1.0 + eps);
    let a2 = move |x: f64| in_interval(x, 1.0 - eps, 1.0);
    Ok(SemiStaticStrategy {
        u1: leg(move |x| 1.0 - eps - x * x),
        u3: leg(|_| 0.0),
        delta1: leg(|x| if in_unit(x) { -x } else { 0.0 }),
        delta2: trade(move |x1, x2| {
            if !in_unit(x1) {
                0.0
            } else if a2(x2) {
                1.0
            } else if a1(x2) {
                -1.0
            } else {
                0.0
            }
        }),
        u2: Some(leg(move |x| if a1(x) || a2(x) { 0.0 } else { -1.0 - x.abs() })),
    })
}
