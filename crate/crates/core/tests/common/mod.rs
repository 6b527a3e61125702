//! Exact rational reference solvers and random instances whose data are
//! exactly representable in `f64` (integer atoms, dyadic weights).

#![allow(dead_code)]

use mot_core::lp::Sense;
use mot_core::mot::{MotProblem, Payoff};
use mot_core::DiscreteMeasure;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Q = BigRational;

fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, Copy)]
pub enum PayoffKind {
    Straddle,
    ForwardCall(i64),
    Curtain,
    /// `Σ a_ij x_i x_j + Σ b_i x_i` over all dates.
    Quadratic([[i64; 3]; 3], [i64; 3]),
}

impl PayoffKind {
    pub fn eval(&self, x: &[i64]) -> i64 {
        let (first, last) = (x[0], x[x.len() - 1]);
        match *self {
            PayoffKind::Straddle => (last - first).abs(),
            PayoffKind::ForwardCall(k) => (last - first - k).max(0),
            PayoffKind::Curtain => first * (last - first).pow(2),
            PayoffKind::Quadratic(a, b) => {
                let mut v = 0;
                for i in 0..x.len() {
                    v += b[i] * x[i];
                    for j in i..x.len() {
                        v += a[i][j] * x[i] * x[j];
                    }
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub atoms: Vec<Vec<i64>>,
    pub weights: Vec<Vec<Q>>,
    pub payoff: PayoffKind,
    pub sense: Sense,
}

impl Instance {
    pub fn marginals(&self) -> Vec<DiscreteMeasure> {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| {
                DiscreteMeasure::new(
                    a.iter().map(|&x| x as f64).collect(),
                    w.iter().map(|v| v.to_f64().unwrap()).collect(),
                )
                .unwrap()
            })
            .collect()
    }

    pub fn problem(&self) -> MotProblem {
        let kind = self.payoff;
        let payoff = Payoff::from_fn("oracle", self.atoms.len(), move |x| {
            let ints: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
            kind.eval(&ints) as f64
        });
        MotProblem::new(self.marginals(), payoff, self.sense).unwrap()
    }

    /// Dense equality system `A x = b` of the transport polytope, one
    /// column per atom tuple (row-major), and the cost vector.
    pub fn system(&self) -> (Vec<Vec<Q>>, Vec<Q>, Vec<Q>) {
        let sizes: Vec<usize> = self.atoms.iter().map(Vec::len).collect();
        let all = tuples(&sizes);
        let mut rows: Vec<Vec<Q>> = Vec::new();
        let mut rhs = Vec::new();
        for (i, w) in self.weights.iter().enumerate() {
            for (a, wa) in w.iter().enumerate() {
                rows.push(all.iter().map(|k| if k[i] == a { Q::one() } else { Q::zero() }).collect());
                rhs.push(wa.clone());
            }
        }
        for j in 0..sizes.len().saturating_sub(1) {
            for prefix in tuples(&sizes[..=j]) {
                rows.push(
                    all
                        .iter()
                        .map(|k| {
                            if k[..=j] == prefix[..] {
                                q(self.atoms[j + 1][k[j + 1]] - self.atoms[j][k[j]])
                            } else {
                                Q::zero()
                            }
                        })
                        .collect(),
                );
                rhs.push(Q::zero());
            }
        }
        let cost = all
            .iter()
            .map(|k| {
                let x: Vec<i64> = k.iter().enumerate().map(|(i, &a)| self.atoms[i][a]).collect();
                q(self.payoff.eval(&x))
            })
            .collect();
        (rows, rhs, cost)
    }
}

fn tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|k| {
                (0..s).map(move |a| {
                    let mut k = k.clone();
                    k.push(a);
                    k
                })
            })
            .collect();
    }
    out
}

/// Positive integer composition of `total` into `parts` parts.
fn composition(rng: &mut impl Rng, total: i64, parts: usize) -> Vec<i64> {
    let mut cuts: Vec<i64> = (1..total).collect();
    cuts.shuffle(rng);
    let mut cuts = cuts[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut prev = 0;
    let mut out = Vec::with_capacity(parts);
    for c in cuts.into_iter().chain([total]) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Next marginal of a martingale: every atom moves to itself or splits over
/// a bracket `a < x < b` of `next` with `b − a` a power of two, so weights
/// stay dyadic.
fn spread(rng: &mut impl Rng, atoms: &[i64], weights: &[Q], next: &[i64]) -> Option<Vec<Q>> {
    let mut out = vec![Q::zero(); next.len()];
    for (&x, w) in atoms.iter().zip(weights) {
        let mut moves: Vec<(usize, usize)> = Vec::new();
        if let Some(i) = next.iter().position(|&y| y == x) {
            moves.push((i, i));
        }
        for (i, &a) in next.iter().enumerate() {
            for (j, &b) in next.iter().enumerate() {
                let gap = b - a;
                if a < x && x < b && gap > 0 && gap & (gap - 1) == 0 {
                    moves.push((i, j));
                }
            }
        }
        if moves.is_empty() {
            return None;
        }
        let picks: Vec<(usize, usize)> = if moves.len() > 1 && rng.gen_bool(0.5) {
            moves.choose_multiple(rng, 2).copied().collect()
        } else {
            vec![*moves.choose(rng).unwrap()]
        };
        let share = w / q(picks.len() as i64);
        for (i, j) in picks {
            if i == j {
                out[i] += &share;
            } else {
                let (a, b) = (next[i], next[j]);
                out[i] += &share * q(b - x) / q(b - a);
                out[j] += &share * q(x - a) / q(b - a);
            }
        }
    }
    Some(out)
}

/// Random instance with `dates` marginals of at most three integer atoms.
pub fn random_instance(rng: &mut impl Rng, dates: usize) -> Instance {
    'retry: loop {
        let k = rng.gen_range(1..=3);
        let mut pool: Vec<i64> = (-2..=2).collect();
        pool.shuffle(rng);
        let mut atoms = vec![{
            let mut a = pool[..k].to_vec();
            a.sort_unstable();
            a
        }];
        let total = if k == 3 { 8 } else { [4, 8][rng.gen_range(0..2)] };
        let mut weights = vec![composition(rng, total, k).into_iter().map(|c| q(c) / q(total)).collect::<Vec<_>>()];
        for level in 1..dates {
            let r = 2i64 << level;
            let mut found = None;
            for _ in 0..200 {
                let k = rng.gen_range(1..=3);
                let mut pool: Vec<i64> = (-r..=r).collect();
                pool.shuffle(rng);
                let mut next = pool[..k].to_vec();
                next.sort_unstable();
                if let Some(w) = spread(rng, &atoms[level - 1], &weights[level - 1], &next) {
                    found = Some((next, w));
                    break;
                }
            }
            let Some((next, w)) = found else { continue 'retry };
            let (next, w): (Vec<i64>, Vec<Q>) = next.into_iter().zip(w).filter(|(_, w)| !w.is_zero()).unzip();
            atoms.push(next);
            weights.push(w);
        }
        let payoff = match rng.gen_range(0..4) {
            0 => PayoffKind::Straddle,
            1 => PayoffKind::ForwardCall(rng.gen_range(-1..=2)),
            2 => PayoffKind::Curtain,
            _ => {
                let mut a = [[0i64; 3]; 3];
                let mut b = [0i64; 3];
                for i in 0..3 {
                    b[i] = rng.gen_range(-3..=3);
                    for j in i..3 {
                        a[i][j] = rng.gen_range(-3..=3);
                    }
                }
                PayoffKind::Quadratic(a, b)
            }
        };
        let sense = if rng.gen_bool(0.5) { Sense::Min } else { Sense::Max };
        return Instance {
            atoms,
            weights,
            payoff,
            sense,
        };
    }
}

/// Keeps a maximal set of linearly independent rows.
fn independent_rows(rows: &[Vec<Q>], rhs: &[Q]) -> (Vec<Vec<Q>>, Vec<Q>) {
    let mut basis: Vec<(Vec<Q>, usize)> = Vec::new();
    let mut keep = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let mut v = row.clone();
        for (b, p) in &basis {
            if !v[*p].is_zero() {
                let f = &v[*p] / &b[*p];
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= &f * y;
                }
            }
        }
        if let Some(p) = v.iter().position(|x| !x.is_zero()) {
            basis.push((v, p));
            keep.push(r);
        }
    }
    (keep.iter().map(|&r| rows[r].clone()).collect(), keep.iter().map(|&r| rhs[r].clone()).collect())
}

/// Solves the square system `m x = b`; `None` if singular.
fn solve_square(mut m: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).find(|&r| !m[r][c].is_zero())?;
        m.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c && !m[r][c].is_zero() {
                let f = &m[r][c] / &m[c][c];
                for k in c..n {
                    let t = &f * &m[c][k];
                    m[r][k] -= t;
                }
                let t = &f * &b[c];
                b[r] -= t;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &m[i][i]).collect())
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Optimum over all basic feasible solutions, or `None` when there are more
/// than `cap` candidate bases.
pub fn vertex_enumeration(inst: &Instance, cap: u128) -> Option<Q> {
    let (rows, rhs, cost) = inst.system();
    let (rows, rhs) = independent_rows(&rows, &rhs);
    let (m, n) = (rows.len(), cost.len());
    if binomial(n, m) > cap {
        return None;
    }
    let mut best: Option<Q> = None;
    let mut cols: Vec<usize> = (0..m).collect();
    loop {
        let sq: Vec<Vec<Q>> = rows.iter().map(|r| cols.iter().map(|&c| r[c].clone()).collect()).collect();
        if let Some(x) = solve_square(sq, rhs.clone()) {
            if x.iter().all(|v| !v.is_negative()) {
                let v: Q = cols.iter().zip(&x).map(|(&c, xv)| &cost[c] * xv).sum();
                let better = match (&best, inst.sense) {
                    (None, _) => true,
                    (Some(b), Sense::Min) => v < *b,
                    (Some(b), Sense::Max) => v > *b,
                };
                if better {
                    best = Some(v);
                }
            }
        }
        let Some(i) = (0..m).rev().find(|&i| cols[i] < n - m + i) else { break };
        cols[i] += 1;
        for j in i + 1..m {
            cols[j] = cols[j - 1] + 1;
        }
    }
    best
}

/// Two-phase dense-tableau simplex with Bland's rule in exact arithmetic.
pub fn exact_simplex(inst: &Instance) -> Option<Q> {
    let (rows, rhs, cost) = inst.system();
    let (m, n) = (rows.len(), cost.len());
    let sign = match inst.sense {
        Sense::Min => q(1),
        Sense::Max => q(-1),
    };
    // Columns: n structurals, m artificials, then the right-hand side.
    let width = n + m + 1;
    let mut t: Vec<Vec<Q>> = rows
        .iter()
        .zip(&rhs)
        .enumerate()
        .map(|(i, (r, b))| {
            let flip = if b.is_negative() { q(-1) } else { q(1) };
            let mut row: Vec<Q> = r.iter().map(|v| v * &flip).collect();
            row.extend((0..m).map(|j| if i == j { Q::one() } else { Q::zero() }));
            row.push(b * &flip);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    let run = |t: &mut Vec<Vec<Q>>, basis: &mut Vec<usize>, c: &[Q], allowed: usize| loop {
        let reduced = |j: usize| -> Q {
            let mut d = c[j].clone();
            for (i, &b) in basis.iter().enumerate() {
                d -= &c[b] * &t[i][j];
            }
            d
        };
        let Some(e) = (0..allowed).find(|&j| !basis.contains(&j) && reduced(j).is_negative()) else {
            return;
        };
        let mut leave: Option<(usize, Q)> = None;
        for i in 0..t.len() {
            if t[i][e].is_positive() {
                let ratio = &t[i][width - 1] / &t[i][e];
                let better = match &leave {
                    None => true,
                    Some((l, r)) => ratio < *r || (ratio == *r && basis[i] < basis[*l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("bounded polytope");
        pivot(t, r, e);
        basis[r] = e;
    };

    let phase1: Vec<Q> = (0..n + m).map(|j| if j < n { Q::zero() } else { Q::one() }).collect();
    run(&mut t, &mut basis, &phase1, n + m);
    if t.iter().zip(&basis).any(|(row, &b)| b >= n && !row[width - 1].is_zero()) {
        return None;
    }
    let mut r = 0;
    while r < t.len() {
        if basis[r] >= n {
            match (0..n).find(|&j| !t[r][j].is_zero()) {
                Some(e) => {
                    pivot(&mut t, r, e);
                    basis[r] = e;
                }
                None => {
                    t.remove(r);
                    basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    let phase2: Vec<Q> = (0..n + m).map(|j| if j < n { &cost[j] * &sign } else { Q::zero() }).collect();
    run(&mut t, &mut basis, &phase2, n);
    Some(basis.iter().enumerate().map(|(i, &b)| &cost[b] * &t[i][width - 1]).sum())
}

fn pivot(t: &mut [Vec<Q>], r: usize, e: usize) {
    let p = t[r][e].clone();
    for v in t[r].iter_mut() {
        *v /= &p;
    }
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r && !row[e].is_zero() {
            let f = row[e].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x -= &f * y;
            }
        }
    }
}
