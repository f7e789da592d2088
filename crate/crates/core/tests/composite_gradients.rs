use ccgan_autograd::gradcheck::GRADCHECK_TOLERANCE;
use ccgan_core::gradcheck::composite_checks;

#[test]
fn composites_match_finite_differences() {
    for outcome in composite_checks().run_all(GRADCHECK_TOLERANCE) {
        println!("{} {:?}", outcome.name, outcome.max_rel_error);
        assert!(outcome.passed, "{} {:?}", outcome.name, outcome.max_rel_error);
    }
}
