mod common;

use common::{check_random, Tally};

#[test]
fn random_programs_are_never_refuted() {
    let mut tally = Tally::default();
    for seed in 1000..1040 {
        check_random(seed, 12, false, &mut tally);
    }
    assert!(tally.refuted.is_empty(), "{}", tally.refuted.join("\n\n"));
    assert!(tally.confirmed > tally.inconclusive);
}

#[test]
fn random_callers_are_never_refuted() {
    let mut tally = Tally::default();
    for seed in 0..40 {
        check_random(seed, 12, true, &mut tally);
    }
    assert!(tally.refuted.is_empty(), "{}", tally.refuted.join("\n\n"));
    assert!(tally.confirmed > 0);
}
