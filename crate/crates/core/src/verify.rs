//! Disciplined biconvex programming checks.
//!
//! A problem is compliant when every product of two nonconstant expressions is
//! an admissible biconvex product, the variable interaction graph has no cycle,
//! every interaction edge runs between the two partition blocks, and fixing
//! either block leaves a DCP-convex problem.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::conesolver::Cone;
use crate::expr::{Curvature, Expr, NodeKind, Sign, VarId};
use crate::problem::{BiconvexProblem, Constraint, ConstraintKind, Sense};

/// The two variable blocks. Variables in neither block are free and stay
/// active in both subproblems.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub block_x: BTreeSet<VarId>,
    pub block_y: BTreeSet<VarId>,
    pub free: BTreeSet<VarId>,
}

impl Partition {
    pub fn block(&self, which: Block) -> &BTreeSet<VarId> {
        match which {
            Block::X => &self.block_x,
            Block::Y => &self.block_y,
        }
    }
}

/// One of the two partition blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    X,
    Y,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::X => "x",
            Block::Y => "y",
        })
    }
}

impl Block {
    pub fn other(self) -> Block {
        match self {
            Block::X => Block::Y,
            Block::Y => Block::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProductClass {
    Biaffine,
    Biconvex,
    Biconcave,
    Rejected,
}

/// Classify the product of two nonconstant operands.
pub fn classify_product(lc: Curvature, ls: Sign, rc: Curvature, rs: Sign) -> ProductClass {
    if lc.is_affine() && rc.is_affine() {
        return ProductClass::Biaffine;
    }
    let one_way = |ac: Curvature, as_: Sign, bc: Curvature, bs: Sign| -> ProductClass {
        let affine = ac.is_affine();
        if (affine && as_.is_nonneg() && bc.is_convex())
            || (affine && as_.is_nonpos() && bc.is_concave())
            || (ac.is_convex() && as_.is_nonneg() && bc.is_convex() && bs.is_nonneg())
            || (ac.is_concave() && as_.is_nonpos() && bc.is_concave() && bs.is_nonpos())
        {
            ProductClass::Biconvex
        } else if (affine && as_.is_nonneg() && bc.is_concave())
            || (affine && as_.is_nonpos() && bc.is_convex())
            || (ac.is_convex() && as_.is_nonneg() && bc.is_concave() && bs.is_nonpos())
        {
            ProductClass::Biconcave
        } else {
            ProductClass::Rejected
        }
    };
    match one_way(lc, ls, rc, rs) {
        ProductClass::Rejected => one_way(rc, rs, lc, ls),
        class => class,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub a: VarId,
    pub b: VarId,
    /// Paths of the product nodes that induced this edge.
    pub paths: Vec<String>,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.a == self.b
    }
}

/// Variables as nodes; an edge joins two variables that appear on opposite
/// sides of a product of nonconstant expressions.
#[derive(Debug, Clone, Default)]
pub struct InteractionGraph {
    pub nodes: BTreeSet<VarId>,
    pub edges: Vec<Edge>,
}

impl InteractionGraph {
    pub fn has_edge(&self, a: VarId, b: VarId) -> bool {
        let key = ordered(a, b);
        self.edges.iter().any(|e| (e.a, e.b) == key)
    }

    /// A cycle as a closed walk of variables, if one exists. A self-loop is a
    /// cycle of length one.
    pub fn find_cycle(&self) -> Option<Vec<VarId>> {
        if let Some(e) = self.edges.iter().find(|e| e.is_self_loop()) {
            return Some(vec![e.a, e.a]);
        }
        let mut parent: BTreeMap<VarId, VarId> = self.nodes.iter().map(|&v| (v, v)).collect();
        fn find(parent: &mut BTreeMap<VarId, VarId>, v: VarId) -> VarId {
            let p = parent[&v];
            if p == v {
                return v;
            }
            let root = find(parent, p);
            parent.insert(v, root);
            root
        }
        let mut forest: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra == rb {
                let mut walk = tree_path(&forest, e.b, e.a);
                walk.push(e.b);
                return Some(walk);
            }
            parent.insert(ra, rb);
            forest.entry(e.a).or_default().push(e.b);
            forest.entry(e.b).or_default().push(e.a);
        }
        None
    }
}

fn ordered(a: VarId, b: VarId) -> (VarId, VarId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Path from `from` to `to` in a forest, inclusive of both ends.
fn tree_path(forest: &BTreeMap<VarId, Vec<VarId>>, from: VarId, to: VarId) -> Vec<VarId> {
    let mut prev: BTreeMap<VarId, VarId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, from);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in forest.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            if let std::collections::btree_map::Entry::Vacant(slot) = prev.entry(w) {
                slot.insert(v);
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        path.push(cur);
    }
    path.reverse();
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    ProductRule,
    InteractionCycle,
    PartitionCrossing,
    FreeVariableProduct,
    DcpObjective,
    DcpConstraint,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::ProductRule => "product-rule",
            Rule::InteractionCycle => "interaction-cycle",
            Rule::PartitionCrossing => "partition-crossing",
            Rule::FreeVariableProduct => "free-variable-product",
            Rule::DcpObjective => "dcp-objective",
            Rule::DcpConstraint => "dcp-constraint",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Node path such as `objective.0.1` or `constraint.2.0`.
    pub location: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.location, self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DbcpVerdict {
    pub compliant: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Roots of a problem with their path prefixes.
fn roots<'a>(objective: &'a Expr, constraints: &'a [Constraint]) -> Vec<(String, &'a Expr)> {
    let mut out = vec![("objective".to_string(), objective)];
    out.extend(
        constraints
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("constraint.{i}"), &c.left)),
    );
    out
}

/// Visit each distinct node once, passing the path of its first occurrence.
fn walk(root: &Expr, prefix: &str, seen: &mut BTreeSet<u64>, f: &mut dyn FnMut(&Expr, &str)) {
    let mut stack = vec![(root.clone(), prefix.to_string())];
    while let Some((e, path)) = stack.pop() {
        if !seen.insert(e.id()) {
            continue;
        }
        f(&e, &path);
        for (i, a) in e.args().iter().enumerate().rev() {
            stack.push((a.clone(), format!("{path}.{i}")));
        }
    }
}

/// Product nodes whose two operands are both nonconstant.
fn bilinear_products(objective: &Expr, constraints: &[Constraint]) -> Vec<(String, Expr)> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (prefix, root) in roots(objective, constraints) {
        walk(root, &prefix, &mut seen, &mut |e, path| {
            if let NodeKind::Atom(atom, args) = e.kind() {
                if atom.is_product() && !args[0].is_constant() && !args[1].is_constant() {
                    out.push((path.to_string(), e.clone()));
                }
            }
        });
    }
    out
}

pub(crate) fn build_graph(objective: &Expr, constraints: &[Constraint]) -> InteractionGraph {
    let mut nodes = BTreeSet::new();
    for (_, root) in roots(objective, constraints) {
        nodes.extend(root.variables().iter().copied());
    }
    let mut edges: BTreeMap<(VarId, VarId), Vec<String>> = BTreeMap::new();
    for (path, e) in bilinear_products(objective, constraints) {
        let (l, r) = (&e.args()[0], &e.args()[1]);
        for &a in l.variables() {
            for &b in r.variables() {
                let paths = edges.entry(ordered(a, b)).or_default();
                if !paths.contains(&path) {
                    paths.push(path.clone());
                }
            }
        }
    }
    InteractionGraph {
        nodes,
        edges: edges.into_iter().map(|((a, b), paths)| Edge { a, b, paths }).collect(),
    }
}

/// The variable interaction graph of a problem.
pub fn interaction_graph(p: &BiconvexProblem) -> InteractionGraph {
    build_graph(p.objective(), p.constraints())
}

/// Check a problem against the DBCP rules.
pub fn is_dbcp(p: &BiconvexProblem) -> DbcpVerdict {
    let names: BTreeMap<VarId, String> = p.variables().map(|v| (v.id, v.name.to_string())).collect();
    verify_parts(p.sense(), p.objective(), p.constraints(), p.partition(), &names)
}

pub(crate) fn verify_parts(
    sense: Sense,
    objective: &Expr,
    constraints: &[Constraint],
    partition: &Partition,
    names: &BTreeMap<VarId, String>,
) -> DbcpVerdict {
    let name = |v: &VarId| names.get(v).cloned().unwrap_or_else(|| v.to_string());
    let mut diagnostics = Vec::new();

    for (path, e) in bilinear_products(objective, constraints) {
        let (l, r) = (&e.args()[0], &e.args()[1]);
        let class = classify_product(l.curvature(), l.sign(), r.curvature(), r.sign());
        if class == ProductClass::Rejected {
            diagnostics.push(Diagnostic {
                location: path,
                rule: Rule::ProductRule,
                message: format!(
                    "product of {} {} and {} {} operands is not an admissible biconvex product",
                    l.curvature(),
                    l.sign(),
                    r.curvature(),
                    r.sign()
                ),
            });
        }
    }

    let graph = build_graph(objective, constraints);
    if let Some(cycle) = graph.find_cycle() {
        let walk: Vec<String> = cycle.iter().map(&name).collect();
        let start = cycle[0];
        let location = graph
            .edges
            .iter()
            .find(|e| e.a == start || e.b == start)
            .map(|e| e.paths[0].clone())
            .unwrap_or_else(|| "objective".into());
        let message = if cycle.len() == 2 && cycle[0] == cycle[1] {
            format!(
                "variable `{}` appears on both sides of a product (cycle {})",
                walk[0],
                walk.join(" - ")
            )
        } else {
            format!("variable interaction cycle {}", walk.join(" - "))
        };
        diagnostics.push(Diagnostic {
            location,
            rule: Rule::InteractionCycle,
            message,
        });
    }

    for e in &graph.edges {
        if e.is_self_loop() {
            continue;
        }
        let free: Vec<&VarId> = [&e.a, &e.b]
            .into_iter()
            .filter(|v| partition.free.contains(v))
            .collect();
        if !free.is_empty() {
            for v in free {
                diagnostics.push(Diagnostic {
                    location: e.paths[0].clone(),
                    rule: Rule::FreeVariableProduct,
                    message: format!(
                        "variable `{}` is in neither partition block but appears in a product with `{}`",
                        name(v),
                        name(if *v == e.a { &e.b } else { &e.a })
                    ),
                });
            }
            continue;
        }
        let crosses = (partition.block_x.contains(&e.a) && partition.block_y.contains(&e.b))
            || (partition.block_y.contains(&e.a) && partition.block_x.contains(&e.b));
        if !crosses {
            diagnostics.push(Diagnostic {
                location: e.paths[0].clone(),
                rule: Rule::PartitionCrossing,
                message: format!(
                    "`{}` and `{}` interact but are in the same partition block",
                    name(&e.a),
                    name(&e.b)
                ),
            });
        }
    }

    // Per-block convexity is only informative once the structure is sound; a
    // structural failure is the more specific diagnosis.
    if diagnostics.is_empty() {
        for block in [Block::Y, Block::X] {
            let fixed = partition.block(block);
            let active = block.other();
            diagnostics.extend(check_fixed(sense, objective, constraints, fixed, active));
        }
    }

    DbcpVerdict {
        compliant: diagnostics.is_empty(),
        diagnostics,
    }
}

fn check_fixed(
    sense: Sense,
    objective: &Expr,
    constraints: &[Constraint],
    fixed: &BTreeSet<VarId>,
    active: Block,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let block = match active {
        Block::X => "x",
        Block::Y => "y",
    };
    let curv = objective.curvature_with(fixed);
    let ok = match sense {
        Sense::Minimize => curv.is_convex(),
        Sense::Maximize => curv.is_concave(),
    };
    if !ok {
        out.push(Diagnostic {
            location: "objective".into(),
            rule: Rule::DcpObjective,
            message: format!(
                "objective is {curv} in block {block} with the other block fixed; {} requires {}",
                sense,
                if sense == Sense::Minimize { "convex" } else { "concave" }
            ),
        });
    }
    for (i, c) in constraints.iter().enumerate() {
        let curv = c.left.curvature_with(fixed);
        let (ok, need) = match c.kind {
            ConstraintKind::Cone(Cone::Nonneg(_)) => (curv.is_convex(), "convex"),
            ConstraintKind::Cone(_) | ConstraintKind::Equality => (curv.is_affine(), "affine"),
        };
        if !ok {
            out.push(Diagnostic {
                location: format!("constraint.{i}"),
                rule: Rule::DcpConstraint,
                message: format!("{} left side is {curv} in block {block}; requires {need}", c.kind),
            });
        }
    }
    out
}
