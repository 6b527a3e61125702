use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A payoff `c(x₁, …, xₙ)` that reads only the coordinates in `deps`.
///
/// The evaluator receives the dependent coordinates in the order of `deps`,
/// not the full tuple. This makes [`Payoff::restrict`] a pure relabelling.
#[derive(Clone)]
pub struct Payoff {
    name: String,
    arity: usize,
    deps: Vec<usize>,
    eval: Eval,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("deps", &self.deps)
            .finish()
    }
}

/// Names accepted by [`Payoff::from_spec`].
pub const REGISTRY: &[&str] = &[
    "straddle",
    "asian",
    "spence-mirrlees",
    "forward-call",
    "forward",
    "terminal",
    "product",
];

impl Payoff {
    /// `deps` are zero-based, strictly increasing and below `arity`.
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        deps: Vec<usize>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if deps.windows(2).any(|w| w[0] >= w[1]) || deps.iter().any(|&d| d >= arity) {
            return Err(Error::InvalidArgument(format!(
                "dependency set {deps:?} is not an increasing subset of 0..{arity}"
            )));
        }
        Ok(Payoff {
            name: name.into(),
            arity,
            deps,
            eval: Arc::new(eval),
        })
    }

    /// A payoff reading every coordinate.
    pub fn from_fn(
        name: impl Into<String>,
        arity: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Payoff {
            name: name.into(),
            arity,
            deps: (0..arity).collect(),
            eval: Arc::new(eval),
        }
    }

    /// Two-date payoff `f(x_first, x_last)` on `arity ≥ 2` dates.
    pub fn first_last(
        name: impl Into<String>,
        arity: usize,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if arity < 2 {
            return Err(Error::InvalidArgument(format!(
                "a two-date payoff needs at least 2 dates, got {arity}"
            )));
        }
        Payoff::new(name, arity, vec![0, arity - 1], move |v| f(v[0], v[1]))
    }

    /// Parses `NAME[:param=v]` (or `NAME:v`) from the built-in registry.
    ///
    /// All built-ins read the first and last dates, except `terminal`, which
    /// reads the last only.
    pub fn from_spec(spec: &str, arity: usize) -> Result<Self> {
        let (name, param) = match spec.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (spec.trim(), None),
        };
        let strike = |default: Option<f64>| -> Result<f64> {
            match param {
                None => default.ok_or_else(|| {
                    Error::InvalidArgument(format!("payoff '{name}' needs a strike, e.g. {name}:strike=100"))
                }),
                Some(p) => {
                    let v = p.strip_prefix("strike=").or_else(|| p.strip_prefix("k=")).unwrap_or(p);
                    v.parse::<f64>()
                        .ok()
                        .filter(|k| k.is_finite())
                        .ok_or_else(|| Error::InvalidArgument(format!("bad payoff parameter '{p}'")))
                }
            }
        };
        let no_param = || -> Result<()> {
            match param {
                None => Ok(()),
                Some(p) => Err(Error::InvalidArgument(format!("payoff '{name}' takes no parameter, got '{p}'"))),
            }
        };
        let full = spec.trim().to_string();
        match name.to_ascii_lowercase().as_str() {
            "straddle" => {
                no_param()?;
                Payoff::first_last(full, arity, |a, b| (b - a).abs())
            }
            "asian" => {
                let k = strike(None)?;
                Payoff::first_last(full, arity, move |a, b| (0.5 * (a + b) - k).max(0.0))
            }
            "spence-mirrlees" | "leftcurtain" | "left-curtain" => {
                no_param()?;
                Payoff::first_last(full, arity, |a, b| a * (b - a).powi(2))
            }
            "forward-call" => {
                let k = strike(Some(0.0))?;
                Payoff::first_last(full, arity, move |a, b| (b - a - k).max(0.0))
            }
            "forward" => {
                no_param()?;
                Payoff::first_last(full, arity, |a, b| b - a)
            }
            "product" => {
                no_param()?;
                Payoff::first_last(full, arity, |a, b| a * b)
            }
            "terminal" => {
                no_param()?;
                if arity == 0 {
                    return Err(Error::InvalidArgument("payoff needs at least one date".into()));
                }
                Payoff::new(full, arity, vec![arity - 1], |v| v[0])
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown payoff '{other}'; known: {}",
                REGISTRY.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn deps(&self) -> &[usize] {
        &self.deps
    }

    /// Evaluates at a full tuple of `arity` coordinates.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arity);
        let mut buf = [0.0f64; 8];
        if self.deps.len() <= buf.len() {
            for (slot, &d) in buf.iter_mut().zip(&self.deps) {
                *slot = x[d];
            }
            (self.eval)(&buf[..self.deps.len()])
        } else {
            let v: Vec<f64> = self.deps.iter().map(|&d| x[d]).collect();
            (self.eval)(&v)
        }
    }

    /// Evaluates from the dependent coordinates alone, in `deps` order.
    pub fn eval_deps(&self, v: &[f64]) -> f64 {
        (self.eval)(v)
    }

    /// The same payoff viewed on the dates `keep` (zero-based, increasing).
    /// Fails when a dependency is dropped.
    pub fn restrict(&self, keep: &[usize]) -> Result<Payoff> {
        let deps = self
            .deps
            .iter()
            .map(|d| {
                keep.iter().position(|k| k == d).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "payoff '{}' reads date {} which is not among {keep:?}",
                        self.name,
                        d + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let eval = Arc::clone(&self.eval);
        Payoff::new(self.name.clone(), keep.len(), deps, move |v| eval(v))
    }

    /// `−c`, with the same dependencies.
    pub fn negated(&self) -> Payoff {
        let eval = Arc::clone(&self.eval);
        Payoff {
            name: format!("-{}", self.name),
            arity: self.arity,
            deps: self.deps.clone(),
            eval: Arc::new(move |v| -eval(v)),
        }
    }

    /// `self + scale · g` where `g` reads every coordinate.
    pub fn perturbed(&self, scale: f64, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Payoff {
        let base = self.clone();
        Payoff::from_fn(format!("{}+perturbation", self.name), self.arity, move |x| {
            base.eval(x) + scale * g(x)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_payoffs() {
        let s = Payoff::from_spec("straddle", 3).unwrap();
        assert_eq!(s.deps(), &[0, 2]);
        assert_eq!(s.eval(&[1.0, 50.0, 4.0]), 3.0);
        let a = Payoff::from_spec("asian:strike=100", 3).unwrap();
        assert_eq!(a.eval(&[90.0, 0.0, 130.0]), 10.0);
        assert_eq!(Payoff::from_spec("asian:70", 2).unwrap().eval(&[60.0, 60.0]), 0.0);
        let sm = Payoff::from_spec("spence-mirrlees", 3).unwrap();
        assert_eq!(sm.eval(&[2.0, 0.0, 5.0]), 18.0);
        assert_eq!(Payoff::from_spec("terminal", 3).unwrap().deps(), &[2]);
        assert_eq!(Payoff::from_spec("forward-call", 6).unwrap().eval(&[100.0, 0., 0., 0., 0., 103.0]), 3.0);
        assert!(Payoff::from_spec("asian", 3).is_err());
        assert!(Payoff::from_spec("straddle:1", 3).is_err());
        assert!(Payoff::from_spec("nope", 3).is_err());
        for name in REGISTRY {
            let spec = if *name == "asian" { "asian:1".to_string() } else { name.to_string() };
            assert!(Payoff::from_spec(&spec, 3).is_ok(), "{name}");
        }
    }

    #[test]
    fn restriction_relabels_dates() {
        let s = Payoff::from_spec("straddle", 3).unwrap();
        let r = s.restrict(&[0, 2]).unwrap();
        assert_eq!(r.arity(), 2);
        assert_eq!(r.deps(), &[0, 1]);
        assert_eq!(r.eval(&[1.0, 4.0]), 3.0);
        assert!(s.restrict(&[0, 1]).is_err());
    }
}
