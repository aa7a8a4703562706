mod common;

use common::oracle::random_milp;
use mesbench_milp::{read_lp, solve_lp, solve_milp, verify, write_lp, MilpLimits, RowSense, Status};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_text_round_trips(seed in any::<u64>()) {
        let p = random_milp(seed);
        let text = write_lp(&p);
        let q = read_lp(&text).unwrap();
        prop_assert_eq!(&p.base.c, &q.base.c);
        prop_assert_eq!(&p.base.rows, &q.base.rows);
        prop_assert_eq!(&p.base.bounds, &q.base.bounds);
        prop_assert_eq!(&p.int_vars, &q.int_vars);
        prop_assert_eq!(text, write_lp(&q));
    }

    #[test]
    fn optimal_points_pass_the_verifier(seed in any::<u64>()) {
        let p = random_milp(seed);
        let s = solve_milp(&p, &MilpLimits::default()).unwrap();
        if s.status == Status::Optimal {
            prop_assert!(verify::check(&p, &s.x, 1e-6).is_ok());
            prop_assert!((p.base.objective_of(&s.x) - s.objective).abs() <= 1e-7);
        }
    }

    #[test]
    fn relaxation_bounds_the_integer_optimum(seed in any::<u64>()) {
        let p = random_milp(seed);
        let relax = solve_lp(&p.base).unwrap();
        let int = solve_milp(&p, &MilpLimits::default()).unwrap();
        if int.status == Status::Optimal {
            prop_assert_eq!(relax.status, Status::Optimal);
            prop_assert!(relax.objective <= int.objective + 1e-7);
        }
        if relax.status == Status::Infeasible {
            prop_assert_eq!(int.status, Status::Infeasible);
        }
    }

    #[test]
    fn redundant_row_leaves_optimum_unchanged(seed in any::<u64>(), scale in 1.0f64..4.0) {
        let p = random_milp(seed);
        let base = solve_milp(&p, &MilpLimits::default()).unwrap();
        prop_assume!(base.status == Status::Optimal);
        let mut q = p.clone();
        let first = q.base.rows[0].clone();
        let coefs: Vec<_> = first.coefs.iter().map(|&(j, a)| (j, a * scale)).collect();
        q.base.add_row(coefs, first.sense, first.rhs * scale);
        let again = solve_milp(&q, &MilpLimits::default()).unwrap();
        prop_assert_eq!(again.status, Status::Optimal);
        prop_assert!((again.objective - base.objective).abs() <= 1e-6);
    }

    #[test]
    fn objective_scaling_scales_the_optimum(seed in any::<u64>(), k in 0.1f64..10.0) {
        let p = random_milp(seed);
        let base = solve_milp(&p, &MilpLimits::default()).unwrap();
        prop_assume!(base.status == Status::Optimal);
        let mut q = p.clone();
        for c in q.base.c.iter_mut() {
            *c *= k;
        }
        let scaled = solve_milp(&q, &MilpLimits::default()).unwrap();
        prop_assert!((scaled.objective - k * base.objective).abs() <= 1e-6 * (1.0 + scaled.objective.abs()));
    }
}

#[test]
fn unused_sense_variants_are_covered() {
    // every sense appears somewhere in the seeded suite
    let mut seen = [false; 3];
    for seed in 0..200 {
        for r in &random_milp(seed).base.rows {
            seen[match r.sense {
                RowSense::Le => 0,
                RowSense::Eq => 1,
                RowSense::Ge => 2,
            }] = true;
        }
    }
    assert_eq!(seen, [true; 3]);
}
