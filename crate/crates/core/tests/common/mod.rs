//! Random small biconvex problems shared by the property tests.

#![allow(dead_code)]

use biconvex::expr::Expr;
use biconvex::problem::{new_problem, BiconvexProblem, Constraint, Sense};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub problem: BiconvexProblem,
    pub x: Expr,
    pub y: Expr,
}

fn constant(rng: &mut ChaCha8Rng, n: usize) -> Expr {
    Expr::constant(DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0))).unwrap()
}

/// One objective term over `x` and `y`. `wild` terms may break compliance.
fn term(rng: &mut ChaCha8Rng, x: &Expr, y: &Expr, wild: bool) -> Expr {
    let n = x.shape().rows;
    let pick = if wild {
        rng.random_range(0..11)
    } else {
        rng.random_range(0..8)
    };
    let c = rng.random_range(0.2..2.0);
    match pick {
        0 => x
            .multiply(y)
            .unwrap()
            .sum()
            .scale(if rng.random_bool(0.5) { c } else { -c }),
        1 => x.sub(&constant(rng, n)).unwrap().sum_squares().scale(c),
        2 => y.sub(&constant(rng, n)).unwrap().sum_squares().scale(c),
        3 => x.multiply(y).unwrap().sub(&constant(rng, n)).unwrap().sum_squares(),
        4 => y.norm1().scale(c),
        5 => x.norm2().scale(c),
        6 => x.maximum(&constant(rng, n)).unwrap().sum(),
        7 => x.sum().multiply(&y.sum()).unwrap().scale(c),
        8 => x.multiply(x).unwrap().sum(),
        9 => x.square().sum().scale(-c),
        _ => y.abs().multiply(&x.abs()).unwrap().sum(),
    }
}

/// A minimization over `x, y` in the box `[-2, 2]` with two to four terms.
pub fn random_instance(seed: u64, wild: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let x = Expr::variable("x", (n, 1), false).unwrap();
    let y = Expr::variable("y", (n, 1), rng.random_bool(0.3)).unwrap();
    let mut objective = term(&mut rng, &x, &y, wild);
    for _ in 0..rng.random_range(1..=3) {
        objective = objective.add(&term(&mut rng, &x, &y, wild)).unwrap();
    }
    let two = Expr::scalar(2.0);
    let constraints = vec![
        Constraint::leq(&x, &two).unwrap(),
        Constraint::geq(&x, &two.neg()).unwrap(),
        Constraint::leq(&y, &two).unwrap(),
        Constraint::geq(&y, &two.neg()).unwrap(),
    ];
    let problem = new_problem(
        Sense::Minimize,
        objective,
        std::slice::from_ref(&x),
        std::slice::from_ref(&y),
        constraints,
        false,
    )
    .unwrap();
    Instance { problem, x, y }
}
