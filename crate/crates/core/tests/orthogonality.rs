mod common;

use common::DiscreteProblem;
use udebias::covshift::Method;

const EPS: f64 = 1e-3;

#[test]
fn debiased_functional_is_first_order_insensitive() {
    let problem = DiscreteProblem::standard();
    for f_atom in 0..problem.atoms.len() {
        for g_atom in [0, 4, 11] {
            let d = problem.derivative(Method::Debiased, f_atom, g_atom, EPS);
            assert!(d.abs() < 5e-3, "atoms ({f_atom}, {g_atom}): derivative {d}");
        }
    }
}

#[test]
fn plugin_derivative_matches_first_order_term() {
    let problem = DiscreteProblem::standard();
    let mut largest: f64 = 0.0;
    for f_atom in 0..problem.atoms.len() {
        for g_atom in [1, 5, 9] {
            let d = problem.derivative(Method::Plugin, f_atom, g_atom, EPS);
            let expected = problem.plugin_derivative(f_atom, g_atom);
            assert!((d - expected).abs() < 5e-3, "atoms ({f_atom}, {g_atom}): {d} vs {expected}");
            largest = largest.max(d.abs());
        }
    }
    assert!(largest > 0.05, "fixture too flat: max |derivative| {largest}");
}
