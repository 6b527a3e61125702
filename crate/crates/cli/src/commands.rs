use std::fmt::Write as _;
use std::path::Path;

use mot_core::analysis::{improvement_report, inclusion_sweep, SweepOrder};
use mot_core::hedging::{gap_h, SemiStaticStrategy};
use mot_core::lp::Sense;
use mot_core::market_data::{CallQuoteSurface, VALIDATION_TOL};
use mot_core::mot::{solve_mot, MotProblem, MotSolution, Payoff};
use mot_core::{DiscreteMeasure, Error};
use serde_json::json;

use crate::failure::{self, Failure, PARSE, VALIDATION};
use crate::{BoundArgs, Global, ImproveArgs, MarginalInput, QuoteArgs, SweepArgs};

/// Validates `surface`, repairs it when asked, and returns its marginals.
/// Writes `repair_report.json` when the repair ran and `violations.json`
/// when validation fails without it.
fn surface_marginals(g: &Global, surface: CallQuoteSurface, repair: bool) -> Result<Vec<DiscreteMeasure>, Failure> {
    let tol = g.tol.unwrap_or(VALIDATION_TOL);
    let violations = surface.validate(tol)?;
    let surface = if repair {
        let report = surface.repair_l1()?;
        eprintln!(
            "repair: {} violation(s), {} quote(s) moved, l1 cost {}",
            violations.len(),
            report.deltas.len(),
            report.l1_cost
        );
        failure::write_json(&g.out, "repair_report.json", &report)?;
        report.repaired
    } else if !violations.is_empty() {
        for v in &violations {
            eprintln!("  {v}");
        }
        failure::write_json(&g.out, "violations.json", &violations)?;
        return Err(Failure::new(
            VALIDATION,
            format!("{} no-arbitrage violation(s); rerun with --repair", violations.len()),
        ));
    } else {
        surface
    };
    Ok(surface.implied_marginals()?)
}

fn read_surface(path: &Path, spot: Option<f64>) -> Result<CallQuoteSurface, Failure> {
    let bytes = failure::read(path)?;
    Ok(CallQuoteSurface::from_csv(&bytes[..], spot)?)
}

pub fn marginals(g: &Global, a: &QuoteArgs) -> Result<(), Failure> {
    let surface = read_surface(&a.input, a.spot)?;
    for s in &surface.synthesized {
        eprintln!("note: maturity {}: {} (strike {})", s.maturity, s.reason, s.strike);
    }
    let maturities: Vec<f64> = surface.slices.iter().map(|s| s.maturity).collect();
    let ms = surface_marginals(g, surface, a.repair)?;
    failure::write_json(&g.out, "marginals.json", &ms)?;
    for (t, m) in maturities.iter().zip(&ms) {
        println!("maturity {t}: {} atoms, mean {:.6}", m.len(), m.mean());
    }
    Ok(())
}

/// All marginals of the input and the 0-based indices selected by
/// `--marginals`.
fn load(g: &Global, input: &MarginalInput) -> Result<(Vec<DiscreteMeasure>, Vec<usize>), Failure> {
    let is_csv = input
        .input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let all = if is_csv {
        let surface = read_surface(&input.input, input.spot)?;
        surface_marginals(g, surface, input.repair)?
    } else {
        let bytes = failure::read(&input.input)?;
        serde_json::from_slice::<Vec<DiscreteMeasure>>(&bytes)
            .map_err(|e| Failure::new(PARSE, format!("{}: {e}", input.input.display())))?
    };
    if all.is_empty() {
        return Err(Failure::new(PARSE, format!("{}: no marginals", input.input.display())));
    }
    let picked = match &input.marginals {
        None => (0..all.len()).collect(),
        Some(dates) => {
            let ok = dates.windows(2).all(|w| w[0] < w[1]) && dates.iter().all(|&d| (1..=all.len()).contains(&d));
            if !ok {
                return Err(Failure::new(
                    VALIDATION,
                    format!("--marginals must be increasing dates within 1..={}", all.len()),
                ));
            }
            dates.iter().map(|d| d - 1).collect()
        }
    };
    Ok((all, picked))
}

fn dates_label(picked: &[usize]) -> String {
    picked.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// H for the solved strategy over the intermediate grid: the middle date of
/// a three-date problem, or the first unused date between the two dates of
/// a two-date problem.
fn gap_csv(
    sol: &MotSolution,
    payoff: &Payoff,
    all: &[DiscreteMeasure],
    picked: &[usize],
) -> Result<Option<String>, Error> {
    let c = match sol.sense {
        Sense::Min => payoff.clone(),
        Sense::Max => payoff.negated(),
    };
    let sign = sol.sense.sign();
    let (strategy, mu1, mu2, mu3) = match picked {
        [i, j, k] => {
            let ms = [&all[*i], &all[*j], &all[*k]];
            let s = SemiStaticStrategy::from_three_date_certificate(&sol.dual, ms, true)?;
            (s, ms[0], ms[1], ms[2])
        }
        [i, k] if k - i >= 2 => {
            let s = SemiStaticStrategy::from_two_date_certificate(&sol.dual, &all[*i], &all[*k])?;
            (s, &all[*i], &all[i + 1], &all[*k])
        }
        _ => return Ok(None),
    };
    let h = gap_h(&strategy.scaled(sign), &c, mu1.atoms(), mu2.atoms(), mu3.atoms())?;
    Ok(Some(h.to_csv()))
}

pub fn bound(g: &Global, a: &BoundArgs) -> Result<(), Failure> {
    let (all, picked) = load(g, &a.input)?;
    let ms: Vec<DiscreteMeasure> = picked.iter().map(|&i| all[i].clone()).collect();
    let payoff = Payoff::from_spec(&a.payoff, ms.len())?;
    let sense = Sense::from(a.sense);
    let p = MotProblem::new(ms, payoff.clone(), sense)?;
    let sol = solve_mot(&p)?;
    let checks = sol.check(&p);

    let mut doc = sol.to_json(payoff.name());
    doc["dates"] = json!(picked.iter().map(|i| i + 1).collect::<Vec<_>>());
    doc["checks"] = json!(checks);
    failure::write_json(&g.out, "bound.json", &doc)?;
    match gap_csv(&sol, &payoff, &all, &picked)? {
        Some(csv) => failure::write(&g.out, "gap.csv", csv)?,
        None => eprintln!("note: no intermediate date, gap.csv not written"),
    }
    println!(
        "{} bound of {} on dates {}: {:.2} ({})",
        match sense {
            Sense::Min => "lower",
            Sense::Max => "upper",
        },
        payoff.name(),
        dates_label(&picked),
        sol.objective,
        sol.objective
    );
    println!(
        "duality gap {:.1e}, hedge violation {:.1e}, {} iterations",
        checks.duality_gap, checks.hedge_violation, sol.diagnostics.iterations
    );
    Ok(())
}

pub fn improve(g: &Global, a: &ImproveArgs) -> Result<(), Failure> {
    let (all, picked) = load(g, &a.input)?;
    let [i, j, k] = picked[..] else {
        return Err(Failure::new(
            VALIDATION,
            format!("improve needs exactly three dates, got {}", picked.len()),
        ));
    };
    let ms = [all[i].clone(), all[j].clone(), all[k].clone()];
    let mut rows = Vec::new();
    for spec in &a.payoff {
        let payoff = Payoff::from_spec(spec, 3)?;
        rows.push(improvement_report(&ms, &payoff)?);
    }
    failure::write_json(&g.out, "improvement.json", &rows)?;

    let mut csv = String::from("payoff,lower_13,lower_123,upper_123,upper_13,lower_abs,lower_rel,upper_abs,upper_rel\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.payoff,
            r.lower_13,
            r.lower_123,
            r.upper_123,
            r.upper_13,
            r.lower_improvement.absolute,
            opt(r.lower_improvement.relative),
            r.upper_improvement.absolute,
            opt(r.upper_improvement.relative)
        );
    }
    failure::write(&g.out, "improvement.csv", csv)?;

    let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
    println!(
        "{:<20} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}",
        "payoff", "low 1,3", "low 1,2,3", "up 1,2,3", "up 1,3", "low imp", "up imp"
    );
    for r in &rows {
        println!(
            "{:<20} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>8} {:>8}",
            r.payoff,
            r.lower_13,
            r.lower_123,
            r.upper_123,
            r.upper_13,
            pct(r.lower_improvement.relative),
            pct(r.upper_improvement.relative)
        );
    }
    Ok(())
}

pub fn sweep(g: &Global, a: &SweepArgs) -> Result<(), Failure> {
    let (all, picked) = load(g, &a.input)?;
    let ms: Vec<DiscreteMeasure> = picked.iter().map(|&i| all[i].clone()).collect();
    let payoff = Payoff::from_spec(&a.payoff, ms.len())?;
    let order = SweepOrder::from(a.order);
    let result = inclusion_sweep(&ms, &payoff, order)?;
    write_sweep(&g.out, &result, &picked)?;
    for s in &result.steps {
        println!(
            "dates {:<16} lower {:>12.6} upper {:>12.6}",
            dates_label(&s.included.iter().map(|&d| picked[d - 1]).collect::<Vec<_>>()),
            s.lower,
            s.upper
        );
    }
    Ok(())
}

/// Writes `sweep_<order>.json` and `.csv`, with dates relabelled to the
/// input's 1-based numbering.
pub fn write_sweep(out: &Path, result: &mot_core::analysis::SweepResult, picked: &[usize]) -> Result<(), Failure> {
    let name = match result.order {
        SweepOrder::Left => "left",
        SweepOrder::Right => "right",
    };
    let mut relabelled = result.clone();
    for s in &mut relabelled.steps {
        for d in &mut s.included {
            *d = picked[*d - 1] + 1;
        }
    }
    failure::write_json(out, &format!("sweep_{name}.json"), &relabelled)?;
    let mut csv = String::from("step,dates,lower,upper\n");
    for (i, s) in relabelled.steps.iter().enumerate() {
        let dates = s.included.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(csv, "{i},{dates},{},{}", s.lower, s.upper);
    }
    failure::write(out, &format!("sweep_{name}.csv"), csv)
}
