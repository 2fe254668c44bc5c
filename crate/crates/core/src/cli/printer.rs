//! Canonical text form of a document. Printing a parsed document and parsing
//! the result again yields the same canonical text.

use std::fmt::Write;

use super::ast::*;

pub fn print_document(doc: &Document) -> String {
    let mut out = String::new();
    for d in &doc.decls {
        out.push_str(&print_decl(d));
        out.push('\n');
    }
    let _ = writeln!(out, "{} {}", doc.objective.sense, print_expr(&doc.objective.expr));
    out.push_str("subject to\n");
    for c in &doc.constraints {
        let _ = writeln!(out, "  {}", print_constraint(c));
    }
    let ids = |v: &[(String, _)]| v.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ");
    let _ = write!(out, "partition [{}] [{}]", ids(&doc.partition.x), ids(&doc.partition.y));
    if doc.partition.relax {
        out.push_str(" relax");
    }
    out.push('\n');
    out
}

fn print_decl(d: &Decl) -> String {
    let shape = match d.cols {
        Some(c) => format!("({}, {c})", d.rows),
        None => format!("({})", d.rows),
    };
    let attr = |a: Attr| match a {
        Attr::None => "",
        Attr::Nonneg => " nonneg",
        Attr::Nonpos => " nonpos",
    };
    match &d.kind {
        DeclKind::Var { attr: a } => format!("var {}{shape}{}", d.name, attr(*a)),
        DeclKind::Param { attr: a, data, .. } => {
            format!("param {}{shape}{} = {}", d.name, attr(*a), print_data(data))
        }
    }
}

fn print_data(data: &Data) -> String {
    match data {
        Data::Csv(path) => format!("@csv(\"{path}\")"),
        Data::Literal(rows) if rows.len() == 1 && rows[0].len() == 1 => number(rows[0][0]),
        Data::Literal(rows) => {
            let rows: Vec<String> = rows
                .iter()
                .map(|r| r.iter().map(|&v| number(v)).collect::<Vec<_>>().join(", "))
                .collect();
            format!("[{}]", rows.join("; "))
        }
    }
}

fn print_constraint(c: &ConstraintClause) -> String {
    match c {
        ConstraintClause::Compare { op, lhs, rhs, .. } => {
            format!("{} {} {}", print_expr(lhs), op.symbol(), print_expr(rhs))
        }
        ConstraintClause::Soc { t, x, .. } => format!("soc({}, {})", print_expr(t), print_expr(x)),
    }
}

/// Shortest text that reads back to the same value.
pub(crate) fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

const UNARY: u8 = 3;

fn precedence(a: &Ast) -> u8 {
    match &a.kind {
        AstKind::Binary(op, ..) => op.precedence(),
        AstKind::Neg(_) => UNARY,
        // A negative literal prints with a leading minus.
        AstKind::Number(v) if *v < 0.0 => UNARY,
        _ => UNARY + 1,
    }
}

pub fn print_expr(a: &Ast) -> String {
    match &a.kind {
        AstKind::Number(v) => number(*v),
        AstKind::Ident(name) => name.clone(),
        AstKind::Neg(inner) => format!("-{}", wrap(inner, precedence(inner) < UNARY)),
        AstKind::Binary(op, l, r) => {
            let p = op.precedence();
            format!(
                "{} {} {}",
                wrap(l, precedence(l) < p),
                op.symbol(),
                wrap(r, precedence(r) <= p)
            )
        }
        AstKind::Call { name, args, axis } => {
            let mut parts: Vec<String> = args.iter().map(print_expr).collect();
            if let Some(k) = axis {
                parts.push(format!("axis={k}"));
            }
            format!("{name}({})", parts.join(", "))
        }
    }
}

fn wrap(a: &Ast, parens: bool) -> String {
    if parens {
        format!("({})", print_expr(a))
    } else {
        print_expr(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::parser::parse_problem;

    fn canon(src: &str) -> String {
        print_document(&parse_problem(src).unwrap())
    }

    #[test]
    fn minimal_parentheses() {
        let src = "var x(1)\nvar y(1)\nminimize ((x + y)) * (x - (y - x)) + (x * y) - -(x + 1)\npartition [x] [y]";
        let out = canon(src);
        assert!(
            out.contains("minimize (x + y) * (x - (y - x)) + x * y - -(x + 1)\n"),
            "{out}"
        );
        assert_eq!(canon(&out), out);
    }

    #[test]
    fn full_document() {
        let src = r#"
            param c(2, 2) nonneg = [1, 2.5; 0.001, 4]  # data
            param s(1) = 3
            var x(2) nonneg; var y(2, 2)
            maximize sum(y, axis=0) @ x
            x <= 1; soc(1, y @ x) ; x == x
            partition [x] [y] relax
        "#;
        let out = canon(src);
        let expected = "param c(2, 2) nonneg = [1, 2.5; 0.001, 4]\nparam s(1) = 3\nvar x(2) nonneg\nvar y(2, 2)\n\
                        maximize sum(y, axis=0) @ x\nsubject to\n  x <= 1\n  soc(1, y @ x)\n  x == x\n\
                        partition [x] [y] relax\n";
        assert_eq!(out, expected);
        assert_eq!(canon(&out), out);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 3.0, 0.1, 1e-9, 1e20, 123456.789, 2.5e-300] {
            let s = number(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
    }
}
