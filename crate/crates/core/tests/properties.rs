use proptest::prelude::*;

use bddmp::algebra::{energy_from_scratch, CostAlgebra, MinSum};
use bddmp::bdd::{BddBuilder, Fixation};
use bddmp::dual::{Averaging, DualState};
use bddmp::model::{decompose, parse_lp, write_lp, LinearConstraint, Relation};
use bddmp::testkit::{
    brute_force_solve, generate, CellTrackingParams, GeneratorSpec, GraphMatchingParams, MrfParams, RandomIlpParams,
    TomographyParams, Topology,
};

fn relation() -> impl Strategy<Value = Relation> {
    prop_oneof![Just(Relation::Le), Just(Relation::Ge), Just(Relation::Eq)]
}

prop_compose! {
    fn constraint()(n in 1usize..10)
        (coefs in prop::collection::vec(prop_oneof![-3i64..=-1, 1i64..=3], n),
         relation in relation(),
         rhs in -12i64..=12,
         order in Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
        -> (LinearConstraint, Vec<usize>)
    {
        let terms = coefs.into_iter().enumerate().collect();
        (LinearConstraint::new("c", terms, relation, rhs), order)
    }
}

fn satisfying_count(c: &LinearConstraint, n: usize) -> usize {
    (0u32..1 << n)
        .filter(|mask| {
            let x: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
            c.is_satisfied(&x)
        })
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bdd_solutions_satisfy_and_count((c, order) in constraint()) {
        let bdd = BddBuilder::new(&order).build(&c).unwrap();
        let sols = bdd.enumerate_solutions().unwrap();
        prop_assert_eq!(sols.len(), satisfying_count(&c, order.len()));
        for s in &sols {
            let mut x = vec![false; order.len()];
            for (l, &v) in bdd.support().iter().enumerate() {
                x[v] = s[l];
            }
            prop_assert!(c.is_satisfied(&x));
        }
    }

    #[test]
    fn fixations_roll_back_exactly((c, order) in constraint(), fixes in prop::collection::vec((0usize..10, any::<bool>()), 1..6)) {
        let mut bdd = BddBuilder::new(&order).build(&c).unwrap();
        let pristine = bdd.clone();
        let cp = bdd.checkpoint();
        let n = order.len();
        for &(v, b) in &fixes {
            let v = v % n;
            let before = bdd.enumerate_solutions().unwrap();
            let level = bdd.level_of(v).unwrap();
            let outcome = bdd.fix_variable(v, b).unwrap();
            let after = bdd.enumerate_solutions().unwrap();
            let want: Vec<Vec<bool>> = before.into_iter().filter(|s| s[level] == b).collect();
            prop_assert_eq!(outcome == Fixation::Feasible, !want.is_empty());
            if outcome == Fixation::Feasible {
                prop_assert_eq!(after, want);
            } else {
                break;
            }
        }
        bdd.rollback(cp).unwrap();
        prop_assert!(bdd.same_state(&pristine));
    }

    #[test]
    fn dual_bound_is_monotone_and_sound(seed in 0u64..10_000, vars in 2usize..12, cons in 1usize..5, srmp in any::<bool>()) {
        let params = RandomIlpParams { vars, cons, density: 0.7, planted: true };
        let inst = generate(&GeneratorSpec::RandomIlp(params), seed).unwrap();
        let order: Vec<usize> = (0..vars).collect();
        let builder = BddBuilder::new(&order);
        let bdds = inst.constraints.iter().map(|c| builder.build(c).unwrap()).collect();
        let averaging = if srmp { Averaging::Srmp } else { Averaging::Uniform };
        let mut s = DualState::new(decompose(&inst, &order), bdds, &inst.objective, CostAlgebra::MinSum, averaging);
        let mut last = s.lower_bound();
        for k in 0..6 {
            let lb = if k % 2 == 0 { s.forward_pass() } else { s.backward_pass() };
            prop_assert!(lb >= last - 1e-9, "{} -> {}", last, lb);
            let fresh: f64 = s.bdds().iter().zip(s.lambdas()).map(|(b, l)| energy_from_scratch(b, l, &MinSum)).sum();
            prop_assert!((fresh - lb).abs() <= 1e-9);
            last = lb;
        }
        let d = decompose(&inst, &order);
        let free: f64 = d.free_vars().map(|i| inst.objective[i].min(0.0)).sum();
        let opt = brute_force_solve(&inst).unwrap().optimum.unwrap();
        prop_assert!(last + free <= opt + 1e-6);
    }
}

#[test]
fn generated_instances_round_trip() {
    let specs = [
        GeneratorSpec::RandomIlp(RandomIlpParams::default()),
        GeneratorSpec::Mrf(MrfParams {
            topology: Topology::Grid { rows: 2, cols: 3 },
            labels: 3,
        }),
        GeneratorSpec::GraphMatching(GraphMatchingParams {
            left: 3,
            right: 3,
            density: 0.5,
        }),
        GeneratorSpec::CellTracking(CellTrackingParams::default()),
        GeneratorSpec::Tomography(TomographyParams {
            rows: 2,
            cols: 2,
            max_label: 2,
        }),
    ];
    for spec in &specs {
        for seed in 0..3 {
            let inst = generate(spec, seed).unwrap();
            let text = write_lp(&inst);
            let back = parse_lp(&text).unwrap();
            assert_eq!(back, inst, "{spec:?} seed {seed}");
            assert_eq!(write_lp(&back), text);
            assert_eq!(generate(spec, seed).unwrap(), inst);
        }
    }
}
