use proptest::prelude::*;
use querysift::corpus::{self, extract_first_sentence, prepare_bootstrap, ProvenanceEntry, Record, Stage};
use querysift::rules::Ruleset;

fn record() -> impl Strategy<Value = Record> {
    (
        "[a-z0-9]{1,8}",
        any::<String>(),
        any::<String>(),
        prop::option::of(0.0f64..100.0),
        prop::collection::vec(("[a-z_]{1,10}", any::<String>()), 0..3),
        any::<bool>(),
    )
        .prop_map(|(id, comment, code, score, extra, prov)| {
            let mut r = Record::new(id, comment, code);
            r.score = score;
            for (k, v) in extra {
                r.extra.insert(format!("x_{k}"), serde_json::Value::String(v));
            }
            if prov {
                r.provenance.push(ProvenanceEntry::transformed(
                    Stage::Rule,
                    Some("html_tags"),
                    "<p>a b c</p>",
                    "a b c",
                ));
                r.provenance.push(ProvenanceEntry::retained(Stage::Rule));
            }
            r
        })
}

proptest! {
    #[test]
    fn jsonl_round_trip(records in prop::collection::vec(record(), 0..6)) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<Record> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
        let mut buf = Vec::new();
        corpus::write_jsonl_to(&records, &mut buf).unwrap();
        let back: Vec<Record> = corpus::JsonlReader::new(&buf[..]).collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn first_sentence_is_idempotent(s in any::<String>()) {
        let once = extract_first_sentence(&s);
        prop_assert_eq!(extract_first_sentence(&once), once);
    }

    #[test]
    fn first_sentence_idempotent_on_prose(s in "[A-Za-z .!?\n\t]{0,60}") {
        let once = extract_first_sentence(&s);
        prop_assert_eq!(extract_first_sentence(&once), once);
    }

    #[test]
    fn bootstrap_outputs_are_declarative(titles in prop::collection::vec("(?i:how to)?[ a-z?(){}@<>/.]{0,30}\\??", 0..10)) {
        let (queries, stats) = prepare_bootstrap(&titles, &Ruleset::bootstrap_default());
        prop_assert_eq!(stats.total, titles.len());
        prop_assert_eq!(stats.retained, queries.len());
        for q in &queries {
            prop_assert!(!q.to_lowercase().starts_with("how to"), "{:?}", q);
            prop_assert!(!q.ends_with('?'), "{:?}", q);
            prop_assert_eq!(q.trim(), q.as_str());
        }
    }
}
