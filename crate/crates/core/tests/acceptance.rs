//! One test per acceptance criterion. Each prints a PASS/FAIL line; the
//! benchmark criteria share a single matrix run.

use std::sync::OnceLock;

use netlab::acceptance::{self, CheckOutcome, Suite};
use netlab::scenario::DEFAULT_SEED;

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| Suite::new(DEFAULT_SEED))
}

fn report(outcome: CheckOutcome) {
    println!("{outcome}");
    assert!(outcome.pass, "{outcome}");
}

#[test]
fn protocol_ordering() {
    report(suite().protocol_ordering());
}

#[test]
fn loss_sensitivity() {
    report(suite().loss_sensitivity());
}

#[test]
fn zero_rtt() {
    report(acceptance::zero_rtt());
}

#[test]
fn rtt_scaling() {
    report(suite().rtt_scaling());
}

#[test]
fn bandwidth_floor() {
    report(suite().bandwidth_floor());
}

#[test]
fn bandwidth_plateau() {
    report(suite().bandwidth_plateau());
}

#[test]
fn link_units() {
    report(acceptance::link_units());
}

#[test]
fn rto_oracle() {
    report(acceptance::rto_oracle());
}

#[test]
fn fec_oracle() {
    report(acceptance::fec_oracle());
}

#[test]
fn determinism() {
    report(suite().determinism());
}
