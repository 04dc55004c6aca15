//! Runs the recorded malformed-proposal fixtures: each raw text must either
//! correct to an exact canonical operator block or be rejected for the
//! recorded reason.

use craftplan::env::{Env, EnvConfig};
use craftplan::proposer::{correct_definition, RejectReason};
use craftplan::symbolic::check_against_vocabulary;
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    name: String,
    raw: String,
    expect: Expectation,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum Expectation {
    Corrected(String),
    Rejected(String),
}

fn reason_tag(reason: &RejectReason) -> &'static str {
    match reason {
        RejectReason::Unparseable { .. } => "unparseable",
        RejectReason::BadName { .. } => "bad-name",
        RejectReason::EmptyEffect => "empty-effect",
        RejectReason::ContradictoryEffect { .. } => "contradictory-effect",
    }
}

fn load_fixtures() -> Vec<Fixture> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/malformed_proposals.json"
    );
    let text = std::fs::read_to_string(path).expect("fixture file exists");
    serde_json::from_str(&text).expect("fixture file is valid")
}

#[test]
fn every_recorded_proposal_corrects_or_rejects_as_expected() {
    let env = Env::new(EnvConfig::desk());
    let vocab = env.vocabulary();
    let fixtures = load_fixtures();
    assert_eq!(fixtures.len(), 30, "fixture suite size is fixed");

    let mut corrected = 0usize;
    let mut rejected = 0usize;
    for fixture in &fixtures {
        match (&fixture.expect, correct_definition(&fixture.raw, vocab)) {
            (Expectation::Corrected(want), Ok(op)) => {
                assert_eq!(
                    op.to_string(),
                    *want,
                    "fixture `{}` corrected to unexpected text",
                    fixture.name
                );
                check_against_vocabulary(vocab, &op)
                    .unwrap_or_else(|e| panic!("fixture `{}` fails validation: {e}", fixture.name));
                corrected += 1;
            }
            (Expectation::Rejected(want), Err(reason)) => {
                assert_eq!(
                    reason_tag(&reason),
                    want.as_str(),
                    "fixture `{}` rejected for the wrong reason",
                    fixture.name
                );
                rejected += 1;
            }
            (Expectation::Corrected(_), Err(reason)) => {
                panic!("fixture `{}` unexpectedly rejected: {reason}", fixture.name)
            }
            (Expectation::Rejected(_), Ok(op)) => {
                panic!("fixture `{}` unexpectedly accepted:\n{op}", fixture.name)
            }
        }
    }
    assert_eq!(corrected, 20);
    assert_eq!(rejected, 10);
}
