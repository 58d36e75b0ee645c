//! LP-format and weighted DIMACS exporters for external solvers.

use crate::csp::{BoolConstraint, ConstraintProgram, Literal};

use super::SolverError;

fn fmt_coeff(c: f64) -> String {
    if c == c.round() {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

fn join_terms(terms: &[(u32, f64)]) -> String {
    let mut out = String::new();
    for (i, (var, coeff)) in terms.iter().enumerate() {
        let mag = coeff.abs();
        let body = if mag == 1.0 { format!("x{var}") } else { format!("{} x{var}", fmt_coeff(mag)) };
        if i == 0 {
            if *coeff < 0.0 {
                out.push('-');
            }
            out.push_str(&body);
        } else {
            out.push_str(if *coeff < 0.0 { " - " } else { " + " });
            out.push_str(&body);
        }
    }
    out
}

/// Standard LP-format text: minimize the objective subject to the program's
/// rows, all variables binary (Bounds 0..1 plus Generals). Double-bounded
/// rows split into two lines; equal bounds become an equality. Variables are
/// named `x0..xN` deterministically.
pub fn export_lp(prog: &ConstraintProgram) -> String {
    let mut out = String::from("Minimize\n obj: ");
    let obj_terms: Vec<(u32, f64)> = (0..prog.num_vars() as u32)
        .filter(|v| prog.weight(*v) != 0.0)
        .map(|v| (v, prog.weight(v)))
        .collect();
    out.push_str(&join_terms(&obj_terms));
    out.push_str("\nSubject To\n");
    for (i, row) in prog.rows().iter().enumerate() {
        let terms: Vec<(u32, f64)> = row.terms.iter().map(|(v, c)| (*v, *c as f64)).collect();
        if terms.is_empty() {
            // degenerate row (all coefficients cancelled); nothing to emit
            continue;
        }
        let body = join_terms(&terms);
        match (row.lb, row.ub) {
            (Some(lb), Some(ub)) if lb == ub => {
                out.push_str(&format!(" c{i}: {body} = {lb}\n"));
            }
            (Some(lb), Some(ub)) => {
                out.push_str(&format!(" c{i}a: {body} >= {lb}\n"));
                out.push_str(&format!(" c{i}b: {body} <= {ub}\n"));
            }
            (Some(lb), None) => {
                out.push_str(&format!(" c{i}: {body} >= {lb}\n"));
            }
            (None, Some(ub)) => {
                out.push_str(&format!(" c{i}: {body} <= {ub}\n"));
            }
            (None, None) => {}
        }
    }
    if prog.num_vars() > 0 {
        out.push_str("Bounds\n");
        for v in 0..prog.num_vars() {
            out.push_str(&format!(" 0 <= x{v} <= 1\n"));
        }
        out.push_str("Generals\n ");
        let names: Vec<String> = (0..prog.num_vars()).map(|v| format!("x{v}")).collect();
        out.push_str(&names.join(" "));
        out.push('\n');
    }
    out.push_str("End");
    out
}

fn dimacs(lit: Literal) -> i32 {
    let v = lit.var as i32 + 1;
    if lit.positive {
        v
    } else {
        -v
    }
}

fn integer_weight(w: f64) -> Result<u64, SolverError> {
    if w > 0.0 && w.fract() == 0.0 && w <= u64::MAX as f64 {
        Ok(w as u64)
    } else {
        Err(SolverError::UnsupportedConstruct(format!(
            "WCNF export requires positive integer soft weights, got {w}"
        )))
    }
}

/// Sequential-counter clauses enforcing "at most k of xs" (DIMACS literals).
fn at_most(xs: &[i32], k: usize, new_var: &mut impl FnMut() -> i32) -> Vec<Vec<i32>> {
    let n = xs.len();
    let mut clauses = Vec::new();
    if k >= n {
        return clauses;
    }
    if k == 0 {
        for &x in xs {
            clauses.push(vec![-x]);
        }
        return clauses;
    }
    // registers s[i][j]: at least j+1 of the first i+1 inputs are true
    let s: Vec<Vec<i32>> = (0..n - 1).map(|_| (0..k).map(|_| new_var()).collect()).collect();
    clauses.push(vec![-xs[0], s[0][0]]);
    for j in 1..k {
        clauses.push(vec![-s[0][j]]);
    }
    for i in 1..n - 1 {
        clauses.push(vec![-xs[i], s[i][0]]);
        clauses.push(vec![-s[i - 1][0], s[i][0]]);
        for j in 1..k {
            clauses.push(vec![-xs[i], -s[i - 1][j - 1], s[i][j]]);
            clauses.push(vec![-s[i - 1][j], s[i][j]]);
        }
        clauses.push(vec![-xs[i], -s[i - 1][k - 1]]);
    }
    clauses.push(vec![-xs[n - 1], -s[n - 2][k - 1]]);
    clauses
}

/// Weighted DIMACS from the program's mid-level Boolean view.
///
/// Implication-disjunctions become clauses, conjunctions their biconditional
/// clauses, and counts are lowered with a sequential-counter encoding. Soft
/// constraints cost their weight via unit soft clauses (single literals) or a
/// relaxation literal disabling the counter. Hard clauses carry the top
/// weight `1 + sum of soft weights`.
pub fn export_wcnf(prog: &ConstraintProgram) -> Result<String, SolverError> {
    if prog.has_raw_rows() {
        return Err(SolverError::UnsupportedConstruct(
            "program was built with raw MILP rows and has no Boolean view".to_string(),
        ));
    }
    let mut var_count = prog.num_vars() as i32;
    let mut hard: Vec<Vec<i32>> = Vec::new();
    let mut soft: Vec<(u64, Vec<i32>)> = Vec::new();

    for constraint in prog.bool_view() {
        match constraint {
            BoolConstraint::Conj { out, lits } => {
                let k = dimacs(Literal::pos(*out));
                let mut reverse = vec![k];
                for l in lits {
                    hard.push(vec![-k, dimacs(*l)]);
                    reverse.push(-dimacs(*l));
                }
                hard.push(reverse);
            }
            BoolConstraint::ImpliesDisj { cond, disj, weight } => {
                let mut clause = vec![-dimacs(*cond)];
                clause.extend(disj.iter().map(|l| dimacs(*l)));
                match weight {
                    None => hard.push(clause),
                    Some(w) => soft.push((integer_weight(*w)?, clause)),
                }
            }
            BoolConstraint::Count { lits, lo, hi, weight } => {
                let xs: Vec<i32> = lits.iter().map(|l| dimacs(*l)).collect();
                let neg_xs: Vec<i32> = xs.iter().map(|x| -x).collect();
                let n = xs.len();
                let mut new_var = || {
                    var_count += 1;
                    var_count
                };
                let mut clauses = at_most(&xs, *hi, &mut new_var);
                if *lo > 0 {
                    clauses.extend(at_most(&neg_xs, n - lo, &mut new_var));
                }
                match weight {
                    None => hard.extend(clauses),
                    Some(w) => {
                        let w = integer_weight(*w)?;
                        if n == 1 && !clauses.is_empty() {
                            // unit soft clause: the literal itself (or its
                            // negation when the count pins it false)
                            let unit = if *lo == 1 { xs[0] } else { -xs[0] };
                            soft.push((w, vec![unit]));
                        } else if !clauses.is_empty() {
                            let relax = new_var();
                            for mut clause in clauses {
                                clause.push(relax);
                                hard.push(clause);
                            }
                            soft.push((w, vec![-relax]));
                        }
                    }
                }
            }
        }
    }

    let top: u64 = 1 + soft.iter().map(|(w, _)| *w).sum::<u64>();
    let mut out = format!("p wcnf {} {} {}\n", var_count, hard.len() + soft.len(), top);
    for clause in &hard {
        let lits: Vec<String> = clause.iter().map(|l| l.to_string()).collect();
        out.push_str(&format!("{top} {} 0\n", lits.join(" ")));
    }
    for (w, clause) in &soft {
        let lits: Vec<String> = clause.iter().map(|l| l.to_string()).collect();
        out.push_str(&format!("{w} {} 0\n", lits.join(" ")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::Row;

    #[test]
    fn empty_program_skeleton() {
        let prog = ConstraintProgram::new();
        assert_eq!(export_lp(&prog), "Minimize\n obj: \nSubject To\nEnd");
    }

    #[test]
    fn worked_example_row() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let j = prog.make_var();
        prog.add_row(Row { terms: vec![(i, 1), (j, -1)], lb: None, ub: Some(0) });
        let lp = export_lp(&prog);
        assert!(lp.contains("x0 - x1 <= 0"), "{lp}");
        assert!(lp.contains("Bounds\n 0 <= x0 <= 1\n 0 <= x1 <= 1"));
        assert!(lp.contains("Generals\n x0 x1"));
        assert!(lp.ends_with("End"));
    }

    #[test]
    fn double_bounds_split_and_equality() {
        let mut prog = ConstraintProgram::new();
        let a = prog.make_var();
        let b = prog.make_var();
        prog.set_weight(b, 2.5);
        prog.add_row(Row { terms: vec![(a, 1), (b, 1)], lb: Some(0), ub: Some(1) });
        prog.add_row(Row { terms: vec![(a, 2)], lb: Some(2), ub: Some(2) });
        let lp = export_lp(&prog);
        assert!(lp.contains(" c0a: x0 + x1 >= 0\n"));
        assert!(lp.contains(" c0b: x0 + x1 <= 1\n"));
        assert!(lp.contains(" c1: 2 x0 = 2\n"));
        assert!(lp.contains(" obj: 2.5 x1\n"));
    }

    #[test]
    fn wcnf_single_hard_clause() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let j = prog.make_var();
        // not i -> not j is the clause (i or not j)
        prog.cnstr_implies_disj(Literal::neg(i), &[Literal::neg(j)], None).unwrap();
        let wcnf = export_wcnf(&prog).unwrap();
        assert!(wcnf.starts_with("p wcnf 2 1 1\n"), "{wcnf}");
        assert!(wcnf.contains("1 1 -2 0\n"), "{wcnf}");
    }

    #[test]
    fn wcnf_soft_unit() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        prog.cnstr_count(&[Literal::pos(i)], 1, 1, Some(5.0)).unwrap();
        let wcnf = export_wcnf(&prog).unwrap();
        assert!(wcnf.contains("\n5 1 0\n"), "{wcnf}");
        // top = 1 + 5
        assert!(wcnf.starts_with("p wcnf 2 1 6\n"), "{wcnf}");
    }

    #[test]
    fn wcnf_rejects_raw_rows_and_fractional_weights() {
        let mut prog = ConstraintProgram::new();
        let v = prog.make_var();
        prog.add_row(Row { terms: vec![(v, 1)], lb: None, ub: Some(0) });
        assert!(matches!(export_wcnf(&prog), Err(SolverError::UnsupportedConstruct(_))));

        let mut prog = ConstraintProgram::new();
        let v = prog.make_var();
        prog.cnstr_count(&[Literal::pos(v)], 1, 1, Some(0.5)).unwrap();
        assert!(matches!(export_wcnf(&prog), Err(SolverError::UnsupportedConstruct(_))));
    }
}
