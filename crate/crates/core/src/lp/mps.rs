use std::fmt::Write as _;

use super::{LinearProgram, Relation, Sense};

/// Renders `lp` in free-format MPS for inspection with an external solver.
///
/// Rows are named `R<i>`, columns `C<j>`. A maximization problem is written
/// with an `OBJSENSE MAX` section.
pub fn write_mps(lp: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {name}");
    if lp.sense == Sense::Max {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n N OBJ\n");
    for (i, rel) in lp.relations.iter().enumerate() {
        let tag = match rel {
            Relation::Le => 'L',
            Relation::Eq => 'E',
            Relation::Ge => 'G',
        };
        let _ = writeln!(out, " {tag} R{i}");
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for t in &lp.triplets {
        by_col[t.col].push((t.row, t.value));
    }
    out.push_str("COLUMNS\n");
    for (j, entries) in by_col.iter_mut().enumerate() {
        entries.sort_by_key(|e| e.0);
        if lp.costs[j] != 0.0 {
            let _ = writeln!(out, "    C{j} OBJ {:?}", lp.costs[j]);
        }
        for &(i, v) in entries.iter() {
            let _ = writeln!(out, "    C{j} R{i} {v:?}");
        }
        if lp.costs[j] == 0.0 && entries.is_empty() {
            let _ = writeln!(out, "    C{j} OBJ 0.0");
        }
    }
    out.push_str("RHS\n");
    for (i, &b) in lp.rhs.iter().enumerate() {
        if b != 0.0 {
            let _ = writeln!(out, "    RHS R{i} {b:?}");
        }
    }
    out.push_str("BOUNDS\n");
    for j in 0..lp.num_vars() {
        let l = lp.lower[j];
        match (l, lp.upper[j]) {
            (l, None) if l == 0.0 => {}
            (l, None) if l == f64::NEG_INFINITY => {
                let _ = writeln!(out, " FR BND C{j}");
            }
            (l, None) => {
                let _ = writeln!(out, " LO BND C{j} {l:?}");
            }
            (l, Some(u)) if l == u => {
                let _ = writeln!(out, " FX BND C{j} {u:?}");
            }
            (l, Some(u)) => {
                if l == f64::NEG_INFINITY {
                    let _ = writeln!(out, " MI BND C{j}");
                } else if l != 0.0 {
                    let _ = writeln!(out, " LO BND C{j} {l:?}");
                }
                let _ = writeln!(out, " UP BND C{j} {u:?}");
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program_layout() {
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var(1.0);
        let y = lp.add_bounded_var(2.0, f64::NEG_INFINITY, Some(3.0));
        lp.add_constraint([(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        let text = write_mps(&lp, "demo");
        assert!(text.starts_with("NAME demo\nOBJSENSE\n    MAX\nROWS\n N OBJ\n L R0\n"));
        assert!(text.contains("    C1 R0 1.0\n"));
        assert!(text.contains(" MI BND C1\n UP BND C1 3.0\n"));
        assert!(text.ends_with("ENDATA\n"));
    }
}
