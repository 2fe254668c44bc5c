mod common;

use std::collections::BTreeSet;

use biconvex::expr::{Curvature, Expr, Sign};
use biconvex::problem::{new_problem, Sense};
use biconvex::verify::{classify_product, interaction_graph, is_dbcp, Rule};
use common::random_instance;
use proptest::prelude::*;

const CURVATURES: [Curvature; 5] = [
    Curvature::Constant,
    Curvature::Affine,
    Curvature::Convex,
    Curvature::Concave,
    Curvature::Unknown,
];
const SIGNS: [Sign; 4] = [Sign::Zero, Sign::Nonneg, Sign::Nonpos, Sign::Unknown];

#[test]
fn classify_product_is_symmetric() {
    for lc in CURVATURES {
        for ls in SIGNS {
            for rc in CURVATURES {
                for rs in SIGNS {
                    assert_eq!(classify_product(lc, ls, rc, rs), classify_product(rc, rs, lc, ls));
                }
            }
        }
    }
}

#[test]
fn self_product_is_diagnosed() {
    let x = Expr::variable("x", (1, 1), false).unwrap();
    let y = Expr::variable("y", (1, 1), false).unwrap();
    let obj = x.multiply(&x).unwrap().add(&x.multiply(&y).unwrap()).unwrap();
    let p = new_problem(
        Sense::Minimize,
        obj,
        std::slice::from_ref(&x),
        std::slice::from_ref(&y),
        vec![],
        false,
    )
    .unwrap();
    let verdict = is_dbcp(&p);
    assert!(!verdict.compliant);
    assert!(verdict.diagnostics.iter().any(|d| d.location == "objective.0"));
    let graph = interaction_graph(&p);
    assert!(graph.edges.iter().any(|e| e.is_self_loop()));
}

#[test]
fn three_cycle_is_reported_as_cycle() {
    let v: Vec<Expr> = ["x", "y", "z"]
        .iter()
        .map(|n| Expr::variable(n, (1, 1), false).unwrap())
        .collect();
    let obj = v[0]
        .multiply(&v[1])
        .unwrap()
        .add(&v[1].multiply(&v[2]).unwrap())
        .unwrap()
        .add(&v[2].multiply(&v[0]).unwrap())
        .unwrap();
    let p = new_problem(
        Sense::Minimize,
        obj,
        &[v[0].clone()],
        &[v[1].clone(), v[2].clone()],
        vec![],
        false,
    )
    .unwrap();
    let verdict = is_dbcp(&p);
    assert!(verdict.diagnostics.iter().any(|d| d.rule == Rule::InteractionCycle));
    assert_eq!(interaction_graph(&p).find_cycle().map(|c| c.len()), Some(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn compliance_implies_convex_subproblems(seed in any::<u64>(), wild in any::<bool>()) {
        let inst = random_instance(seed, wild);
        let verdict = is_dbcp(&inst.problem);
        prop_assert_eq!(&verdict, inst.problem.verdict());
        if verdict.compliant {
            for fixed in [&inst.x, &inst.y] {
                let ids: BTreeSet<_> = [fixed.as_variable().unwrap().id].into();
                let c = inst.problem.objective().curvature_with(&ids);
                prop_assert!(c.is_convex(), "{} with {} fixed is {:?}", inst.problem.objective(), fixed, c);
            }
        } else {
            prop_assert!(!verdict.diagnostics.is_empty());
        }
    }

    #[test]
    fn tame_generator_is_always_compliant(seed in any::<u64>()) {
        let inst = random_instance(seed, false);
        prop_assert!(inst.problem.is_dbcp(), "{:?}", inst.problem.verdict());
    }
}
