//! Call quote surfaces: static no-arbitrage validation, ℓ¹-minimal repair
//! and the implied discrete marginals.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::lp::{self, LinearProgram, Relation, Sense};
use crate::measures::DiscreteMeasure;
use crate::{Error, Result};

/// Default validation tolerance in price units.
pub const VALIDATION_TOL: f64 = 1e-8;

/// Call prices at one maturity. Strikes start at 0, where the price is the
/// spot, and end at a strike with price 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityQuotes {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
}

/// A quote added during CSV ingestion rather than read from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedQuote {
    pub maturity: f64,
    pub strike: f64,
    pub price: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallQuoteSurface {
    pub spot: f64,
    pub slices: Vec<MaturityQuotes>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synthesized: Vec<SynthesizedQuote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// First strike is not 0.
    FirstStrike,
    /// Strikes not strictly increasing, or maturities not increasing.
    Ordering,
    /// Price at strike 0 differs from the spot.
    SpotPrice,
    /// Price at the last strike is not 0.
    TerminalPrice,
    /// Price increases with the strike.
    Monotonicity,
    /// Price lies above the chord through its neighbours.
    Convexity,
    /// Price at a shared strike decreases with maturity.
    Calendar,
}

/// One failed inequality. Indices are 1-based as in quote tables:
/// `maturity` counts slices and `strike` counts from 0 at the zero strike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub maturity: usize,
    pub strike: usize,
    /// Amount by which the inequality fails, in price units.
    pub amount: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} at maturity {} strike index {} (off by {:.3e})",
            self.kind, self.maturity, self.strike, self.amount
        )
    }
}

/// Coefficients `(index, weight)` of `λ·Π_{j−1} + (1 − λ)·Π_{j+1} − Π_j`.
fn chord(strikes: &[f64], j: usize) -> [(usize, f64); 3] {
    let lambda = (strikes[j + 1] - strikes[j]) / (strikes[j + 1] - strikes[j - 1]);
    [(j - 1, lambda), (j + 1, 1.0 - lambda), (j, -1.0)]
}

/// Pairs of `(j, j')` with equal strikes in two sorted strike grids.
fn shared_strikes(a: &[f64], b: &[f64]) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

impl CallQuoteSurface {
    pub fn new(spot: f64, slices: Vec<MaturityQuotes>) -> Result<Self> {
        let s = CallQuoteSurface {
            spot,
            slices,
            synthesized: Vec::new(),
        };
        s.check_shape()?;
        Ok(s)
    }

    fn check_shape(&self) -> Result<()> {
        if !self.spot.is_finite() {
            return Err(Error::InvalidArgument("spot is not finite".into()));
        }
        if self.slices.is_empty() {
            return Err(Error::InvalidArgument("surface has no maturities".into()));
        }
        for (i, s) in self.slices.iter().enumerate() {
            if s.strikes.is_empty() || s.strikes.len() != s.prices.len() {
                return Err(Error::InvalidArgument(format!(
                    "maturity {}: {} strikes and {} prices",
                    i + 1,
                    s.strikes.len(),
                    s.prices.len()
                )));
            }
            if s.strikes.iter().chain(&s.prices).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("maturity {}: non-finite quote", i + 1)));
            }
        }
        Ok(())
    }

    fn strike_grid_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, s) in self.slices.iter().enumerate() {
            if s.strikes[0] != 0.0 {
                out.push(Violation {
                    kind: ViolationKind::FirstStrike,
                    maturity: i + 1,
                    strike: 0,
                    amount: s.strikes[0].abs(),
                });
            }
            for j in 1..s.strikes.len() {
                if s.strikes[j] <= s.strikes[j - 1] {
                    out.push(Violation {
                        kind: ViolationKind::Ordering,
                        maturity: i + 1,
                        strike: j,
                        amount: s.strikes[j - 1] - s.strikes[j],
                    });
                }
            }
            if i > 0 && s.maturity <= self.slices[i - 1].maturity {
                out.push(Violation {
                    kind: ViolationKind::Ordering,
                    maturity: i + 1,
                    strike: 0,
                    amount: self.slices[i - 1].maturity - s.maturity,
                });
            }
        }
        out
    }

    /// Lists every failed no-arbitrage inequality; empty means valid.
    pub fn validate(&self, tol: f64) -> Result<Vec<Violation>> {
        self.check_shape()?;
        let mut out = self.strike_grid_violations();
        if !out.is_empty() {
            return Ok(out);
        }
        let mut push = |kind, maturity, strike, amount: f64| {
            if amount > tol {
                out.push(Violation {
                    kind,
                    maturity,
                    strike,
                    amount,
                });
            }
        };
        for (i, s) in self.slices.iter().enumerate() {
            let p = &s.prices;
            let m = p.len() - 1;
            push(ViolationKind::SpotPrice, i + 1, 0, (p[0] - self.spot).abs());
            push(ViolationKind::TerminalPrice, i + 1, m, p[m].abs());
            for j in 1..=m {
                push(ViolationKind::Monotonicity, i + 1, j, p[j] - p[j - 1]);
            }
            // Left of strike 0 the price continues as spot − K.
            if m >= 1 {
                push(ViolationKind::Convexity, i + 1, 0, self.spot - s.strikes[1] - p[1]);
            }
            for j in 1..m {
                let gap: f64 = chord(&s.strikes, j).iter().map(|&(k, c)| c * p[k]).sum();
                push(ViolationKind::Convexity, i + 1, j, -gap);
            }
        }
        for i in 1..self.slices.len() {
            let (a, b) = (&self.slices[i - 1], &self.slices[i]);
            for (ja, jb) in shared_strikes(&a.strikes, &b.strikes) {
                push(ViolationKind::Calendar, i + 1, jb, a.prices[ja] - b.prices[jb]);
            }
        }
        Ok(out)
    }

    /// Smallest `Σ|Π' − Π|` change that makes the surface valid.
    ///
    /// The spot and strikes are kept; only prices move.
    pub fn repair_l1(&self) -> Result<RepairReport> {
        self.check_shape()?;
        let grid = self.strike_grid_violations();
        if !grid.is_empty() {
            return Err(Error::Validation(grid.iter().map(|v| v.to_string()).collect()));
        }

        let mut lp = LinearProgram::new(Sense::Min);
        // Columns 2q and 2q+1 are the up and down moves of quote q.
        let offsets: Vec<usize> = self
            .slices
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.prices.len();
                Some(o)
            })
            .collect();
        let total: usize = self.slices.iter().map(|s| s.prices.len()).sum();
        for _ in 0..total {
            lp.add_var(1.0);
            lp.add_var(1.0);
        }
        // Σ c·Π' (rel) rhs, written on the deltas.
        let row = |lp: &mut LinearProgram, terms: &[(usize, f64)], rel: Relation, rhs: f64| {
            let base: f64 = terms.iter().map(|&(q, c)| c * self.price_at(&offsets, q)).sum();
            let r = lp.add_row(rel, rhs - base);
            for &(q, c) in terms {
                lp.set(r, 2 * q, c);
                lp.set(r, 2 * q + 1, -c);
            }
        };
        for (i, s) in self.slices.iter().enumerate() {
            let o = offsets[i];
            let m = s.prices.len() - 1;
            row(&mut lp, &[(o, 1.0)], Relation::Eq, self.spot);
            row(&mut lp, &[(o + m, 1.0)], Relation::Eq, 0.0);
            for j in 1..=m {
                row(&mut lp, &[(o + j - 1, 1.0), (o + j, -1.0)], Relation::Ge, 0.0);
            }
            if m >= 1 {
                row(&mut lp, &[(o + 1, 1.0)], Relation::Ge, self.spot - s.strikes[1]);
            }
            for j in 1..m {
                let terms: Vec<(usize, f64)> = chord(&s.strikes, j).iter().map(|&(k, c)| (o + k, c)).collect();
                row(&mut lp, &terms, Relation::Ge, 0.0);
            }
        }
        for i in 1..self.slices.len() {
            let (a, b) = (&self.slices[i - 1], &self.slices[i]);
            for (ja, jb) in shared_strikes(&a.strikes, &b.strikes) {
                row(
                    &mut lp,
                    &[(offsets[i] + jb, 1.0), (offsets[i - 1] + ja, -1.0)],
                    Relation::Ge,
                    0.0,
                );
            }
        }

        let sol = lp::solve(&lp, 1e-9, 1e-8)?;
        if !sol.is_optimal() {
            return Err(Error::Infeasible);
        }
        let mut repaired = self.clone();
        let mut deltas = Vec::new();
        for (i, s) in repaired.slices.iter_mut().enumerate() {
            for j in 0..s.prices.len() {
                let q = offsets[i] + j;
                let d = sol.primal[2 * q] - sol.primal[2 * q + 1];
                if d.abs() > 1e-12 {
                    let original = s.prices[j];
                    s.prices[j] += d;
                    deltas.push(QuoteDelta {
                        maturity: i + 1,
                        strike: s.strikes[j],
                        original,
                        repaired: s.prices[j],
                    });
                }
            }
        }
        let l1_cost = deltas.iter().map(|d| (d.repaired - d.original).abs()).sum();
        Ok(RepairReport {
            original: self.clone(),
            repaired,
            l1_cost,
            deltas,
        })
    }

    fn price_at(&self, offsets: &[usize], q: usize) -> f64 {
        let i = offsets.partition_point(|&o| o <= q) - 1;
        self.slices[i].prices[q - offsets[i]]
    }

    /// Discrete marginals consistent with every quote. Fails with the list
    /// of violations when the surface is not valid at [`VALIDATION_TOL`].
    pub fn implied_marginals(&self) -> Result<Vec<DiscreteMeasure>> {
        let violations = self.validate(VALIDATION_TOL)?;
        if !violations.is_empty() {
            return Err(Error::Validation(violations.iter().map(|v| v.to_string()).collect()));
        }
        self.slices
            .iter()
            .map(|s| {
                let w = implied_weights(&s.strikes, &s.prices);
                DiscreteMeasure::from_pairs(s.strikes.iter().copied().zip(w))
            })
            .collect()
    }

    /// Parses a `maturity,strike,mid` CSV.
    ///
    /// A missing strike-0 quote is synthesized from the spot, and a slice
    /// whose last price is positive gets a zero-price strike where the last
    /// slope reaches zero (twice the last strike if that slope is not
    /// negative). Both are listed in `synthesized`. The spot is `spot` when
    /// given, else the strike-0 quote of the earliest maturity that has one.
    pub fn from_csv(reader: impl Read, spot: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Parse(format!("missing column '{name}' (expected maturity,strike,mid)")))
        };
        let (cm, ck, cp) = (col("maturity")?, col("strike")?, col("mid")?);
        let mut by_maturity: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        let mut maturity_of: BTreeMap<u64, f64> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |c: usize, what: &str| -> Result<f64> {
                rec.get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("row {}: bad {what}", line + 2)))
            };
            let t = field(cm, "maturity")?;
            let k = field(ck, "strike")?;
            let p = field(cp, "mid")?;
            if t <= 0.0 || k < 0.0 {
                return Err(Error::Parse(format!("row {}: maturity must be > 0 and strike ≥ 0", line + 2)));
            }
            // Positive floats order like their bit patterns.
            by_maturity.entry(t.to_bits()).or_default().push((k, p));
            maturity_of.insert(t.to_bits(), t);
        }
        if by_maturity.is_empty() {
            return Err(Error::Parse("no quotes in input".into()));
        }
        let spot = match spot {
            Some(s) => s,
            None => by_maturity
                .values()
                .find_map(|q| q.iter().find(|(k, _)| *k == 0.0).map(|&(_, p)| p))
                .ok_or_else(|| Error::Parse("no strike-0 quote and no spot given".into()))?,
        };

        let mut slices = Vec::new();
        let mut synthesized = Vec::new();
        for (bits, mut quotes) in by_maturity {
            let maturity = maturity_of[&bits];
            quotes.sort_by(|a, b| a.0.total_cmp(&b.0));
            if quotes.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Parse(format!("duplicate strike at maturity {maturity}")));
            }
            if quotes[0].0 != 0.0 {
                quotes.insert(0, (0.0, spot));
                synthesized.push(SynthesizedQuote {
                    maturity,
                    strike: 0.0,
                    price: spot,
                    reason: "strike 0 priced at spot".into(),
                });
            }
            let &(k_last, p_last) = quotes.last().expect("non-empty");
            if p_last > 0.0 {
                let k_zero = if quotes.len() >= 2 {
                    let (k0, p0) = quotes[quotes.len() - 2];
                    let slope = (p_last - p0) / (k_last - k0);
                    if slope < 0.0 {
                        k_last - p_last / slope
                    } else {
                        2.0 * k_last.max(1.0)
                    }
                } else {
                    2.0 * k_last.max(1.0)
                };
                quotes.push((k_zero, 0.0));
                synthesized.push(SynthesizedQuote {
                    maturity,
                    strike: k_zero,
                    price: 0.0,
                    reason: "terminal zero-price strike appended".into(),
                });
            }
            let (strikes, prices) = quotes.into_iter().unzip();
            slices.push(MaturityQuotes {
                maturity,
                strikes,
                prices,
            });
        }
        let mut s = CallQuoteSurface::new(spot, slices)?;
        s.synthesized = synthesized;
        Ok(s)
    }

    /// Writes the surface as `maturity,strike,mid` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("maturity,strike,mid\n");
        for s in &self.slices {
            for (k, p) in s.strikes.iter().zip(&s.prices) {
                out.push_str(&format!("{},{},{}\n", s.maturity, k, p));
            }
        }
        out
    }
}

/// Weight at each strike: the jump in the price slope, with slope −1 left of
/// the first strike and 0 right of the last.
pub fn implied_weights(strikes: &[f64], prices: &[f64]) -> Vec<f64> {
    let m = strikes.len();
    let slope = |j: usize| (prices[j + 1] - prices[j]) / (strikes[j + 1] - strikes[j]);
    (0..m)
        .map(|j| {
            let right = if j + 1 < m { slope(j) } else { 0.0 };
            let left = if j > 0 { slope(j - 1) } else { -1.0 };
            right - left
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteDelta {
    pub maturity: usize,
    pub strike: f64,
    pub original: f64,
    pub repaired: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub original: CallQuoteSurface,
    pub repaired: CallQuoteSurface,
    pub l1_cost: f64,
    /// Quotes that moved, in surface order.
    pub deltas: Vec<QuoteDelta>,
}

/// Three-maturity synthetic surface on strikes 0, 50, 80, 100, 120, 200, 250
/// with spot 100, used by the bundled reproductions.
pub fn sample_surface() -> CallQuoteSurface {
    let strikes = vec![0.0, 50.0, 80.0, 100.0, 120.0, 200.0, 250.0];
    let prices = [
        vec![100.0, 50.0, 23.0, 6.0, 3.0, 0.2, 0.0],
        vec![100.0, 53.0, 24.8, 6.0, 5.2, 2.0, 0.0],
        vec![100.0, 57.0, 34.0, 20.0, 8.0, 2.0, 0.0],
    ];
    let slices = prices
        .into_iter()
        .enumerate()
        .map(|(i, prices)| MaturityQuotes {
            maturity: (i + 1) as f64,
            strikes: strikes.clone(),
            prices,
        })
        .collect();
    CallQuoteSurface::new(100.0, slices).expect("sample surface is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_surface_is_valid() {
        assert!(sample_surface().validate(VALIDATION_TOL).unwrap().is_empty());
    }

    #[test]
    fn raised_quote_breaks_monotonicity() {
        let mut s = sample_surface();
        s.slices[0].prices[2] = 60.0;
        let v = s.validate(VALIDATION_TOL).unwrap();
        assert!(v
            .iter()
            .any(|v| v.kind == ViolationKind::Monotonicity && v.maturity == 1 && v.strike == 2));
    }

    #[test]
    fn two_strike_surface() {
        let flat = |k: f64| {
            CallQuoteSurface::new(
                100.0,
                vec![MaturityQuotes {
                    maturity: 1.0,
                    strikes: vec![0.0, k],
                    prices: vec![100.0, 0.0],
                }],
            )
            .unwrap()
        };
        assert!(flat(100.0).validate(VALIDATION_TOL).unwrap().is_empty());
        assert!(flat(150.0).validate(VALIDATION_TOL).unwrap().is_empty());
        assert!(!flat(50.0).validate(VALIDATION_TOL).unwrap().is_empty());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let bad = CallQuoteSurface::new(
            100.0,
            vec![MaturityQuotes {
                maturity: 1.0,
                strikes: vec![0.0, 100.0],
                prices: vec![100.0],
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn implied_weights_of_first_slice() {
        let s = sample_surface();
        let w = implied_weights(&s.slices[0].strikes, &s.slices[0].prices);
        assert!(w[0].abs() < 1e-15);
        assert!((w[1] - 0.1).abs() < 1e-12);
        let mus = s.implied_marginals().unwrap();
        for (mu, slice) in mus.iter().zip(&s.slices) {
            assert!((mu.mean() - 100.0).abs() < 1e-9);
            for (k, p) in slice.strikes.iter().zip(&slice.prices) {
                assert!((mu.call_price(*k) - p).abs() < 1e-9);
            }
        }
        assert_eq!(mus[1].atoms(), &[0.0, 100.0, 250.0]);
    }

    #[test]
    fn valid_surface_needs_no_repair() {
        let r = sample_surface().repair_l1().unwrap();
        assert_eq!(r.l1_cost, 0.0);
        assert_eq!(r.repaired, sample_surface());
    }

    #[test]
    fn calendar_breach_is_repaired_at_one_quote() {
        // Reference optimum from an independent LP solve: move only the
        // second-maturity quote at strike 100, back up to 6.
        let mut s = sample_surface();
        s.slices[1].prices[3] = 5.9;
        assert!(!s.validate(VALIDATION_TOL).unwrap().is_empty());
        let r = s.repair_l1().unwrap();
        assert!((r.l1_cost - 0.1).abs() < 1e-9);
        assert_eq!(r.deltas.len(), 1);
        assert_eq!((r.deltas[0].maturity, r.deltas[0].strike), (2, 100.0));
        assert!((r.deltas[0].repaired - 6.0).abs() < 1e-9);
        assert!(r.repaired.repair_l1().unwrap().l1_cost < 1e-9);
    }

    #[test]
    fn single_high_quote_is_pulled_down() {
        let s = CallQuoteSurface::new(
            100.0,
            vec![MaturityQuotes {
                maturity: 1.0,
                strikes: vec![0.0, 50.0, 100.0, 150.0],
                prices: vec![100.0, 70.0, 20.0, 0.0],
            }],
        )
        .unwrap();
        let r = s.repair_l1().unwrap();
        assert_eq!(r.deltas.len(), 1);
        assert_eq!(r.deltas[0].strike, 50.0);
        assert!((r.deltas[0].repaired - 60.0).abs() < 1e-9);
        assert!((r.l1_cost - 10.0).abs() < 1e-9);
        assert!(r.repaired.validate(VALIDATION_TOL).unwrap().is_empty());
    }

    #[test]
    fn csv_ingestion_synthesizes_boundary_quotes() {
        let text = "maturity,strike,mid\n0.5,80,25\n0.5,100,10\n0.5,120,2\n";
        let s = CallQuoteSurface::from_csv(text.as_bytes(), Some(100.0)).unwrap();
        let sl = &s.slices[0];
        assert_eq!(sl.strikes[0], 0.0);
        assert_eq!(sl.prices[0], 100.0);
        assert_eq!(*sl.prices.last().unwrap(), 0.0);
        assert!((sl.strikes.last().unwrap() - 125.0).abs() < 1e-12);
        assert_eq!(s.synthesized.len(), 2);
        assert!(CallQuoteSurface::from_csv("".as_bytes(), None).is_err());
        assert!(CallQuoteSurface::from_csv("maturity,strike,mid\n1,x,3\n".as_bytes(), Some(1.0)).is_err());
        let round = CallQuoteSurface::from_csv(sample_surface().to_csv().as_bytes(), None).unwrap();
        assert_eq!(round, sample_surface());
    }
}
