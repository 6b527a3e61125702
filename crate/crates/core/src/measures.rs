//! Finite probability measures on the real line.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative distance below which two atoms are treated as one point.
pub const MERGE_TOL: f64 = 1e-9;
/// Weights below this are dropped and the rest renormalized.
pub const PRUNE_TOL: f64 = 1e-14;
/// Default absolute tolerance on call prices for convex-order checks.
pub const CONVEX_ORDER_TOL: f64 = 1e-9;

/// A probability measure with finitely many atoms.
///
/// Atoms are strictly increasing and every weight is positive; the weights
/// sum to one up to rounding. The JSON form is
/// `{"atoms":[...],"weights":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(raw.atoms, raw.weights)
    }
}

fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= MERGE_TOL * (1.0 + a.abs().max(b.abs()))
}

impl DiscreteMeasure {
    /// Builds a measure from strictly increasing atoms and weights summing to
    /// one (within `1e-9`). Zero weights are pruned and the rest renormalized.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("measure has no atoms".into()));
        }
        if let Some(x) = atoms.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("atom {x} is not finite")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!("weight {w} is negative or not finite")));
        }
        if let Some(k) = atoms.windows(2).position(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument(format!(
                "atoms not strictly increasing at index {}",
                k + 1
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Self::from_pairs(atoms.into_iter().zip(weights))
    }

    /// Builds a measure from arbitrary `(atom, weight)` pairs: sorts, merges
    /// nearby atoms at their weighted mean, prunes negligible weights and
    /// renormalizes to total mass one.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().filter(|p| p.1 > 0.0).collect();
        if pairs.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite atom or weight".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        // Each group is anchored at its first atom so merging cannot chain.
        let mut anchor = f64::NAN;
        for (x, w) in pairs {
            match merged.last_mut() {
                Some(last) if same_point(anchor, x) => {
                    let tw = last.1 + w;
                    last.0 = (last.0 * last.1 + x * w) / tw;
                    last.1 = tw;
                }
                _ => {
                    anchor = x;
                    merged.push((x, w));
                }
            }
        }
        let total: f64 = merged.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("measure has zero total mass".into()));
        }
        merged.retain(|p| p.1 / total >= PRUNE_TOL);
        let total: f64 = merged.iter().map(|p| p.1).sum();
        let (atoms, weights) = merged.into_iter().map(|(x, w)| (x, w / total)).unzip();
        Ok(DiscreteMeasure { atoms, weights })
    }

    pub fn dirac(x: f64) -> Self {
        DiscreteMeasure {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    /// Equal weights on the given points.
    pub fn uniform_on(points: &[f64]) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        Self::from_pairs(points.iter().map(|&x| (x, w)))
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    pub fn call_price(&self, strike: f64) -> f64 {
        self.expectation(|x| (x - strike).max(0.0))
    }

    /// `self ⪯ other` in convex order, checked through equal means and call
    /// prices at every atom of either measure.
    pub fn convex_order_leq(&self, other: &DiscreteMeasure, tol: f64) -> bool {
        if (self.mean() - other.mean()).abs() > tol {
            return false;
        }
        self.atoms
            .iter()
            .chain(&other.atoms)
            .all(|&k| self.call_price(k) <= other.call_price(k) + tol)
    }

    /// `(1 − t)·self + t·other`.
    pub fn mixture(&self, other: &DiscreteMeasure, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("mixture weight {t} outside [0, 1]")));
        }
        Self::from_pairs(
            self.iter()
                .map(|(x, w)| (x, (1.0 - t) * w))
                .chain(other.iter().map(|(x, w)| (x, t * w))),
        )
    }
}

/// The binomial law after `steps` symmetric ±1 moves from `s0`.
pub fn binomial_marginal(s0: f64, steps: u32) -> DiscreteMeasure {
    let k = steps as usize;
    let mut coeffs = vec![1.0f64];
    for _ in 0..k {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (j, c) in coeffs.iter().enumerate() {
            next[j] += 0.5 * c;
            next[j + 1] += 0.5 * c;
        }
        coeffs = next;
    }
    let atoms = (0..=k).map(|j| s0 - k as f64 + 2.0 * j as f64).collect();
    DiscreteMeasure {
        atoms,
        weights: coeffs,
    }
}

/// Continuous reference laws that can be quantized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContinuousLawSpec {
    Uniform { a: f64, b: f64 },
    /// Mass ½ at each of two points.
    TwoPoint { lo: f64, hi: f64 },
}

impl ContinuousLawSpec {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && a < b {
            Ok(ContinuousLawSpec::Uniform { a, b })
        } else {
            Err(Error::InvalidArgument(format!("uniform law needs a < b, got [{a}, {b}]")))
        }
    }

    pub fn two_point(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(ContinuousLawSpec::TwoPoint { lo, hi })
        } else {
            Err(Error::InvalidArgument(format!("two-point law needs lo < hi, got {lo}, {hi}")))
        }
    }

    /// Exact `E[(X − K)⁺]`.
    pub fn call_price(&self, strike: f64) -> f64 {
        match *self {
            ContinuousLawSpec::Uniform { a, b } => {
                if strike <= a {
                    0.5 * (a + b) - strike
                } else if strike >= b {
                    0.0
                } else {
                    (b - strike).powi(2) / (2.0 * (b - a))
                }
            }
            ContinuousLawSpec::TwoPoint { lo, hi } => {
                0.5 * ((lo - strike).max(0.0) + (hi - strike).max(0.0))
            }
        }
    }

    /// Conditional-mean quantization: `n` equiprobable cells, each
    /// represented by its mean. A two-point law is returned as is.
    pub fn quantize(&self, n_atoms: usize) -> Result<DiscreteMeasure> {
        if n_atoms == 0 {
            return Err(Error::InvalidArgument("quantization needs at least one atom".into()));
        }
        match *self {
            ContinuousLawSpec::Uniform { a, b } => {
                let h = (b - a) / n_atoms as f64;
                let w = 1.0 / n_atoms as f64;
                Ok(DiscreteMeasure {
                    atoms: (0..n_atoms).map(|i| a + h * (i as f64 + 0.5)).collect(),
                    weights: vec![w; n_atoms],
                })
            }
            ContinuousLawSpec::TwoPoint { lo, hi } => Ok(DiscreteMeasure {
                atoms: vec![lo, hi],
                weights: vec![0.5, 0.5],
            }),
        }
    }
}

/// Lower and upper maps `T_d ≤ id ≤ T_u`, tabulated on the atoms of a
/// reference measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub t_d: Vec<f64>,
    pub t_u: Vec<f64>,
}

impl Corridor {
    pub fn from_fns(mu: &DiscreteMeasure, t_d: impl Fn(f64) -> f64, t_u: impl Fn(f64) -> f64) -> Self {
        Corridor {
            t_d: mu.atoms().iter().map(|&x| t_d(x)).collect(),
            t_u: mu.atoms().iter().map(|&x| t_u(x)).collect(),
        }
    }

    fn check(&self, mu: &DiscreteMeasure) -> Result<()> {
        if self.t_d.len() != mu.len() || self.t_u.len() != mu.len() {
            return Err(Error::InvalidArgument(format!(
                "corridor has {}/{} entries for {} atoms",
                self.t_d.len(),
                self.t_u.len(),
                mu.len()
            )));
        }
        for (k, &x) in mu.atoms().iter().enumerate() {
            let (d, u) = (self.t_d[k], self.t_u[k]);
            let slack = MERGE_TOL * (1.0 + x.abs());
            if !(d <= x + slack && x <= u + slack) {
                return Err(Error::InvalidArgument(format!(
                    "corridor violated at atom {x}: T_d = {d}, T_u = {u}"
                )));
            }
        }
        Ok(())
    }

    /// Probability of the upper branch at atom `k`.
    pub fn up_probability(&self, mu: &DiscreteMeasure, k: usize) -> f64 {
        let (d, u) = (self.t_d[k], self.t_u[k]);
        if u > d {
            ((mu.atoms()[k] - d) / (u - d)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Martingale convex interpolation: each atom `x` of `mu1` moves to
/// `(1 − t)x + t·T_u(x)` with the up-probability and to `(1 − t)x + t·T_d(x)`
/// otherwise. Atoms with a degenerate corridor stay put.
pub fn convex_interpolate(mu1: &DiscreteMeasure, corridor: &Corridor, t: f64) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("interpolation time {t} outside [0, 1]")));
    }
    corridor.check(mu1)?;
    let mut pairs = Vec::with_capacity(2 * mu1.len());
    for (k, (x, w)) in mu1.iter().enumerate() {
        let (d, u) = (corridor.t_d[k], corridor.t_u[k]);
        if u > d {
            let q = corridor.up_probability(mu1, k);
            pairs.push(((1.0 - t) * x + t * u, w * q));
            pairs.push(((1.0 - t) * x + t * d, w * (1.0 - q)));
        } else {
            pairs.push((x, w));
        }
    }
    DiscreteMeasure::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn pm1() -> DiscreteMeasure {
        DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn means() {
        assert!(close(pm1().mean(), 0.0));
        assert!(close(DiscreteMeasure::dirac(100.0).mean(), 100.0));
    }

    #[test]
    fn call_prices() {
        assert!(close(pm1().call_price(0.0), 0.5));
        let m = DiscreteMeasure::new(vec![1.0, 2.0, 4.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(close(m.call_price(0.5), m.mean() - 0.5));
        assert!(close(m.call_price(4.0), 0.0));
    }

    #[test]
    fn convex_order() {
        let wide = DiscreteMeasure::new(vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert!(pm1().convex_order_leq(&pm1(), CONVEX_ORDER_TOL));
        assert!(pm1().convex_order_leq(&wide, CONVEX_ORDER_TOL));
        assert!(!wide.convex_order_leq(&pm1(), CONVEX_ORDER_TOL));
        let shifted = DiscreteMeasure::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert!(!pm1().convex_order_leq(&shifted, CONVEX_ORDER_TOL));
    }

    #[test]
    fn quantization() {
        let q = ContinuousLawSpec::uniform(-1.0, 1.0).unwrap().quantize(2).unwrap();
        assert_eq!(q.atoms(), &[-0.5, 0.5]);
        assert_eq!(q.weights(), &[0.5, 0.5]);
        let q = ContinuousLawSpec::uniform(-2.0, 2.0).unwrap().quantize(4).unwrap();
        assert_eq!(q.atoms(), &[-1.5, -0.5, 0.5, 1.5]);
        let q = ContinuousLawSpec::two_point(-1.0, 1.0).unwrap().quantize(17).unwrap();
        assert_eq!(q, pm1());
        assert!(ContinuousLawSpec::uniform(-1.0, 1.0).unwrap().quantize(0).is_err());
        assert!(ContinuousLawSpec::uniform(1.0, 1.0).is_err());
        assert!(ContinuousLawSpec::two_point(2.0, 1.0).is_err());
    }

    #[test]
    fn binomial() {
        assert_eq!(binomial_marginal(100.0, 0), DiscreteMeasure::dirac(100.0));
        let b1 = binomial_marginal(100.0, 1);
        assert_eq!(b1.atoms(), &[99.0, 101.0]);
        assert_eq!(b1.weights(), &[0.5, 0.5]);
        let b2 = binomial_marginal(100.0, 2);
        assert_eq!(b2.atoms(), &[98.0, 100.0, 102.0]);
        assert_eq!(b2.weights(), &[0.25, 0.5, 0.25]);
        assert!(close(binomial_marginal(100.0, 6).mean(), 100.0));
    }

    #[test]
    fn interpolation() {
        let d0 = DiscreteMeasure::dirac(0.0);
        let c = Corridor {
            t_d: vec![-1.0],
            t_u: vec![1.0],
        };
        let half = convex_interpolate(&d0, &c, 0.5).unwrap();
        assert_eq!(half.atoms(), &[-0.5, 0.5]);
        assert_eq!(half.weights(), &[0.5, 0.5]);
        assert_eq!(convex_interpolate(&d0, &c, 0.0).unwrap(), d0);
        assert_eq!(convex_interpolate(&d0, &c, 1.0).unwrap(), pm1());
        let bad = Corridor {
            t_d: vec![0.5],
            t_u: vec![1.0],
        };
        assert!(convex_interpolate(&d0, &bad, 0.5).is_err());
    }

    #[test]
    fn mixtures() {
        let d0 = DiscreteMeasure::dirac(0.0);
        let m = d0.mixture(&pm1(), 0.5).unwrap();
        assert_eq!(m.atoms(), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.weights(), &[0.25, 0.5, 0.25]);
        assert_eq!(d0.mixture(&pm1(), 0.0).unwrap(), d0);
        assert_eq!(d0.mixture(&pm1(), 1.0).unwrap(), pm1());
    }

    #[test]
    fn normalization() {
        let m = DiscreteMeasure::from_pairs([(1.0, 0.25), (1.0 + 1e-12, 0.25), (3.0, 0.5), (5.0, 1e-16)])
            .unwrap();
        assert_eq!(m.len(), 2);
        assert!(close(m.weights()[0], 0.5));
        assert!(DiscreteMeasure::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![0.9]).is_err());
        let json: DiscreteMeasure = serde_json::from_str(r#"{"atoms":[-1,1],"weights":[0.5,0.5]}"#).unwrap();
        assert_eq!(json, pm1());
        assert!(serde_json::from_str::<DiscreteMeasure>(r#"{"atoms":[1,-1],"weights":[0.5,0.5]}"#).is_err());
    }
}
