use selinf::document::{load_system, DocumentError, SystemDocument, EPS_PROB};
use selinf::fixtures::{self, NAMES};
use selinf::model::ValidationError;

#[test]
fn every_fixture_round_trips() {
    for (name, _) in NAMES {
        let f = fixtures::fixture(name).unwrap();
        let text = f.document().to_json();
        let (system, correlations) = load_system(&text).unwrap();
        assert_eq!(system.factors(), f.system.factors(), "{name}");
        assert_eq!(system.variables(), f.system.variables(), "{name}");
        assert_eq!(system.treatments(), f.system.treatments(), "{name}");
        for (a, b) in system.distributions().iter().zip(f.system.distributions()) {
            // shortest decimal text reproduces each double exactly
            assert_eq!(a.probs(), b.probs(), "{name}");
            if b.exact().is_some() {
                assert_eq!(a.exact(), b.exact(), "{name}");
            }
        }
        assert_eq!(correlations, f.correlations, "{name}");
        assert!(SystemDocument::from_json(&text).unwrap().validate(EPS_PROB).is_empty());
    }
}

#[test]
fn probability_strings_are_kept_verbatim() {
    let text = fixtures::fixture("example10").unwrap().document().to_json();
    assert!(
        text.contains(r#""p": "0.14""#) || text.contains(r#""p": "7/50""#),
        "{text}"
    );
    let doc = SystemDocument::from_json(&text).unwrap();
    assert_eq!(SystemDocument::from_json(&doc.to_json()).unwrap(), doc);
}

const TWO_LEVEL: &str = r#"{
  "format_version": "1",
  "factors": [{"name": "alpha", "levels": ["1", "2"]}],
  "variables": [{"name": "A", "outcomes": ["lo", "hi"]}],
  "treatments": [{"alpha": "1"}, {"alpha": "2"}],
  "distributions": [
    [{"outcome": ["lo"], "p": 0.25}, {"outcome": ["hi"], "p": "3/4"}],
    [{"outcome": ["hi"], "p": "1"}]
  ]
}"#;

#[test]
fn unlisted_cells_are_zero() {
    let (sys, _) = load_system(TWO_LEVEL).unwrap();
    assert_eq!(sys.distribution(0).probs(), &[0.25, 0.75]);
    assert_eq!(sys.distribution(1).probs(), &[0.0, 1.0]);
}

#[test]
fn errors_are_reported() {
    assert!(matches!(load_system("{"), Err(DocumentError::Json(_))));
    let v2 = TWO_LEVEL.replace(r#""format_version": "1""#, r#""format_version": "2""#);
    assert!(matches!(load_system(&v2), Err(DocumentError::Version(_))));
    let short = TWO_LEVEL.replace(r#""p": "1""#, r#""p": "0.9""#);
    let errors = SystemDocument::from_json(&short).unwrap().validate(EPS_PROB);
    assert!(
        errors
            .iter()
            .any(|e| matches!(e, ValidationError::NotNormalized { .. })),
        "{errors:?}"
    );
    assert!(load_system(&short).is_err());
    let dup = TWO_LEVEL.replace(
        r#"{"outcome": ["hi"], "p": "1"}"#,
        r#"{"outcome": ["hi"], "p": ".5"}, {"outcome": ["hi"], "p": ".5"}"#,
    );
    let errors = SystemDocument::from_json(&dup).unwrap().validate(EPS_PROB);
    assert!(errors
        .iter()
        .any(|e| matches!(e, ValidationError::DuplicateCell { .. })));
    let bad = TWO_LEVEL.replace(r#""p": "3/4""#, r#""p": "three quarters""#);
    let errors = SystemDocument::from_json(&bad).unwrap().validate(EPS_PROB);
    assert!(errors
        .iter()
        .any(|e| matches!(e, ValidationError::BadProbability { .. })));
    let extra = TWO_LEVEL.replace(r#""format_version": "1","#, r#""format_version": "1", "colour": 3,"#);
    assert!(matches!(load_system(&extra), Err(DocumentError::Json(_))));
}

#[test]
fn diagrams_are_rearranged() {
    let text = r#"{
      "format_version": "1",
      "factors": [{"name": "alpha", "levels": ["1", "2"]}, {"name": "beta", "levels": ["1", "2"]}],
      "variables": [{"name": "A", "outcomes": ["0", "1"]}],
      "diagram": {"A": ["alpha", "beta"]},
      "treatments": [{"alpha": "1", "beta": "1"}, {"alpha": "1", "beta": "2"}, {"alpha": "2", "beta": "1"}, {"alpha": "2", "beta": "2"}],
      "distributions": [
        [{"outcome": ["0"], "p": ".5"}, {"outcome": ["1"], "p": ".5"}],
        [{"outcome": ["0"], "p": ".1"}, {"outcome": ["1"], "p": ".9"}],
        [{"outcome": ["0"], "p": "1"}],
        [{"outcome": ["1"], "p": "1"}]
      ]
    }"#;
    let (sys, _) = load_system(text).unwrap();
    assert_eq!(sys.factors().len(), 1);
    assert_eq!(sys.factors()[0].levels.len(), 4);
    assert_eq!(sys.num_treatments(), 4);
}
