mod common;

use biconvex::problem::{initialize_missing, new_problem, SolveOptions};
use common::random_instance;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn initialization_is_a_function_of_seed(seed in any::<u64>(), other in any::<u64>()) {
        let inst = random_instance(seed, true);
        let a = initialize_missing(&inst.problem, other);
        prop_assert_eq!(&a, &initialize_missing(&inst.problem, other));
        prop_assert_eq!(&a, &initialize_missing(&inst.problem.clone(), other));
        for v in inst.problem.variables() {
            if v.nonneg {
                prop_assert!(a[&v.id].iter().all(|e| *e >= 0.0));
            }
        }
    }

    #[test]
    fn construction_is_side_effect_free(seed in any::<u64>()) {
        let inst = random_instance(seed, true);
        let p = &inst.problem;
        let again = new_problem(
            p.sense(),
            p.objective().clone(),
            std::slice::from_ref(&inst.x),
            std::slice::from_ref(&inst.y),
            p.constraints().to_vec(),
            false,
        )
        .unwrap();
        prop_assert_eq!(again.verdict(), p.verdict());
        prop_assert_eq!(again.partition(), p.partition());
    }
}

#[test]
fn user_values_take_precedence() {
    let mut inst = random_instance(9, false);
    let n = inst.x.shape().rows;
    inst.problem
        .set_initial(&inst.x, DMatrix::from_element(n, 1, 0.5))
        .unwrap();
    let a = initialize_missing(&inst.problem, 1);
    assert_eq!(a[&inst.x.as_variable().unwrap().id], DMatrix::from_element(n, 1, 0.5));
    assert!(inst.problem.set_initial(&inst.x, DMatrix::zeros(n + 1, 1)).is_err());
}

#[test]
fn option_validation() {
    assert!(SolveOptions::default().validate().is_ok());
    for bad in [
        SolveOptions {
            lbd: -1.0,
            ..SolveOptions::default()
        },
        SolveOptions {
            nu: 0.0,
            ..SolveOptions::default()
        },
        SolveOptions {
            gap_tolerance: f64::NAN,
            ..SolveOptions::default()
        },
        SolveOptions {
            max_iters: 0,
            ..SolveOptions::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
}
