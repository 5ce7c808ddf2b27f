mod common;

use common::binomial_interval;

#[test]
fn binomial_interval_matches_known_values() {
    let (lo, hi) = binomial_interval(10_000, 0.15, 0.9999);
    // cross-checked against an lgamma-based pmf outside the crate
    assert_eq!((lo, hi), (1363, 1641));
    // symmetric for p = 0.5
    let (lo, hi) = binomial_interval(1000, 0.5, 0.9999);
    assert_eq!(lo + hi, 1000);
}

#[test]
fn binomial_interval_is_tight() {
    let (lo, hi) = binomial_interval(20, 0.5, 0.5);
    // P(X <= 7) = 0.1316 may go, P(X <= 8) = 0.2517 may not; [9, 11] holds only 0.4966
    assert_eq!((lo, hi), (8, 12));
}
