//! JSON output with a fixed key order and 17 significant digits per float, so
//! that equal runs produce byte-identical files.

use std::fmt::Write;

use crate::problem::SolveReport;
use crate::verify::DbcpVerdict;

use super::build::Built;

/// A JSON value whose objects keep insertion order.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(u64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj<K: Into<String>>(fields: impl IntoIterator<Item = (K, Json)>) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn opt_num(v: Option<f64>) -> Json {
        v.map_or(Json::Null, Json::Num)
    }

    pub fn str(s: impl Into<String>) -> Json {
        Json::Str(s.into())
    }

    fn is_scalar(&self) -> bool {
        !matches!(self, Json::Arr(_) | Json::Obj(_))
    }

    /// Two-space indented text; arrays of scalars stay on one line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, depth: usize) {
        let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Json::Num(v) if v.is_finite() => {
                let _ = write!(out, "{v:.16e}");
            }
            Json::Num(_) => out.push_str("null"),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
            Json::Arr(items) if items.is_empty() => out.push_str("[]"),
            Json::Arr(items) if items.iter().all(Json::is_scalar) => {
                out.push('[');
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    it.write(out, depth);
                }
                out.push(']');
            }
            Json::Arr(items) => {
                out.push_str("[\n");
                for (i, it) in items.iter().enumerate() {
                    pad(out, depth + 1);
                    it.write(out, depth + 1);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(out, depth);
                out.push(']');
            }
            Json::Obj(fields) if fields.is_empty() => out.push_str("{}"),
            Json::Obj(fields) => {
                out.push_str("{\n");
                for (i, (k, v)) in fields.iter().enumerate() {
                    pad(out, depth + 1);
                    Json::Str(k.clone()).write(out, depth + 1);
                    out.push_str(": ");
                    v.write(out, depth + 1);
                    out.push_str(if i + 1 < fields.len() { ",\n" } else { "\n" });
                }
                pad(out, depth);
                out.push('}');
            }
        }
    }
}

fn nums(v: &[f64]) -> Json {
    Json::Arr(v.iter().map(|&x| Json::Num(x)).collect())
}

/// The solve report. Variables appear in declaration order, each as an array
/// of rows; variables that the problem never uses are left out.
pub fn solve_report(built: &Built, report: &SolveReport) -> Json {
    let records = report
        .records
        .iter()
        .map(|r| {
            Json::obj([
                ("index", Json::Int(r.index as u64)),
                ("half", Json::str(r.half.to_string())),
                ("subproblem_objective", Json::Num(r.subproblem_objective)),
                ("total_slack", Json::opt_num(r.total_slack)),
                ("solver_status", Json::str(r.solver_status.to_string())),
                ("cone_iterations", Json::Int(r.cone_iterations as u64)),
            ])
        })
        .collect();
    let init = match &report.init {
        Some(i) => Json::obj([
            ("found", Json::Bool(i.found)),
            ("half_steps", Json::Int(i.half_steps as u64)),
            ("total_slack", Json::Num(i.total_slack)),
        ]),
        None => Json::Null,
    };
    let values = built
        .variables
        .iter()
        .filter_map(|(name, e)| {
            let id = e.as_variable()?.id;
            let m = report.values.get(&id)?;
            let rows = (0..m.nrows())
                .map(|i| nums(&m.row(i).iter().copied().collect::<Vec<_>>()))
                .collect();
            Some((name.clone(), Json::Arr(rows)))
        })
        .collect();
    let subproblems = report.records.len() as u64;
    Json::obj([
        ("status", Json::str(report.status.to_string())),
        ("objective", Json::Num(report.objective)),
        ("iterations", Json::Int(report.iterations as u64)),
        ("final_gap", Json::opt_num(report.final_gap)),
        ("total_slack", Json::opt_num(report.total_slack)),
        ("init", init),
        ("message", report.message.as_ref().map_or(Json::Null, Json::str)),
        ("objective_history", nums(&report.objective_history)),
        ("slack_history", nums(&report.slack_history)),
        ("records", Json::Arr(records)),
        ("values", Json::Obj(values)),
        (
            "timing",
            Json::obj([
                ("subproblems", Json::Int(subproblems)),
                ("cone_iterations", Json::Int(report.cone_iterations as u64)),
            ]),
        ),
    ])
}

/// The `--check-only` verdict, with each diagnostic's source span.
pub fn verdict_report(built: &Built, verdict: &DbcpVerdict) -> Json {
    let diagnostics = verdict
        .diagnostics
        .iter()
        .map(|d| {
            let span = built.locate(&d.location);
            Json::obj([
                ("rule", Json::str(d.rule.to_string())),
                ("location", Json::str(d.location.clone())),
                ("line", Json::Int(span.line as u64)),
                ("column", Json::Int(span.column as u64)),
                ("length", Json::Int(span.length as u64)),
                ("message", Json::str(d.message.clone())),
            ])
        })
        .collect();
    let names = |ids: &std::collections::BTreeSet<_>| {
        Json::Arr(
            built
                .variables
                .iter()
                .filter(|(_, e)| e.as_variable().is_some_and(|v| ids.contains(&v.id)))
                .map(|(n, _)| Json::str(n.clone()))
                .collect(),
        )
    };
    let part = built.problem.partition();
    Json::obj([
        ("dbcp", Json::Bool(verdict.compliant)),
        ("block_x", names(&part.block_x)),
        ("block_y", names(&part.block_y)),
        ("free", names(&part.free)),
        ("diagnostics", Json::Arr(diagnostics)),
    ])
}
