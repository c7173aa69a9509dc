mod common;

use std::io::Write;

use common::{dicaprio_record, synthetic_dataset, DICAPRIO_QUESTION};
use proptest::prelude::*;
use scr::datasets::{
    load_dataset, save_dataset, to_statement, Dataset, DatasetFormat, Dimension, EvalRecord,
    ProbeKind,
};
use scr::Error;

fn file(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    std::fs::File::create(&path)
        .unwrap()
        .write_all(body.as_bytes())
        .unwrap();
    (dir, path)
}

#[test]
fn canonical_two_records() {
    let (_d, path) = file(
        "two.jsonl",
        concat!(
            r#"{"edit_question":"Who wrote X?","edit_target":"A","probes":[]}"#,
            "\n\n",
            r#"{"edit_question":"The capital of Y is","edit_target":"B","probes":[{"kind":"rephrase","question":"Y's capital city is","target":"B"}]}"#,
            "\n"
        ),
    );
    let ds = load_dataset(&path, DatasetFormat::Canonical).unwrap();
    assert_eq!(ds.name, "two");
    assert_eq!(ds.len(), 2);
    assert_eq!(
        ds.records.iter().map(|r| r.index).collect::<Vec<_>>(),
        [0, 1]
    );
    assert_eq!(ds.records[1].probes[0].kind, ProbeKind::Rephrase);
}

#[test]
fn canonical_example_record() {
    let ds = Dataset {
        name: "cf".into(),
        records: vec![dicaprio_record()],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cf.jsonl");
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path, DatasetFormat::Canonical).unwrap();
    let r = &back.records[0];
    assert_eq!(r.edit_question, DICAPRIO_QUESTION);
    assert_eq!(r.edit_target, "Syria");
    assert_eq!(r.probes.len(), 5);
}

#[test]
fn counterfact_adapter_example_record() {
    let (_d, path) = file(
        "wiki_counterfact.json",
        r#"[{
            "subject": "Leonardo DiCaprio",
            "prompt": "The name of the country of citizenship of Leonardo DiCaprio is",
            "target_new": "Syria",
            "ground_truth": "United States of America",
            "rephrase_prompt": "Leonardo DiCaprio's country of citizenship is known as",
            "locality": {
                "Relation_Specificity": [
                    {"prompt": "The name of the mother of Leonardo DiCaprio is", "ground_truth": ["Irmelin DiCaprio", "Irmelin Indenbirken"]}
                ],
                "Forgetfulness": [
                    {"prompt": "The name of the country of citizenship of Leonardo DiCaprio, which is not Syria, is", "ground_truth": [["America"]]}
                ]
            },
            "portability": {
                "Subject_Aliasing": [
                    {"prompt": "The name of the country of citizenship of Di Caprio is", "ground_truth": ["USA"]}
                ],
                "reasoning": [
                    {"prompt": "The name of the currency in the country of citizenship of Leonardo DiCaprio is", "ground_truth": [["Syrian pound", "SYP"]]}
                ]
            }
        }]"#,
    );
    let ds = load_dataset(&path, DatasetFormat::Counterfact).unwrap();
    let r = &ds.records[0];
    let expected = dicaprio_record();
    assert_eq!(r.edit_question, expected.edit_question);
    assert_eq!(r.edit_target, expected.edit_target);
    let mut got = r.probes.clone();
    let mut want = expected.probes.clone();
    got.sort_by_key(|p| p.kind);
    want.sort_by_key(|p| p.kind);
    assert_eq!(got, want);
    assert_eq!(r.probes_of(Dimension::Locality).count(), 2);
    assert_eq!(r.probes_of(Dimension::Portability).count(), 2);
}

#[test]
fn zsre_adapter_row() {
    let (_d, path) = file(
        "zsre.json",
        r#"[{
            "subject": "Epaspidoceras",
            "src": "Which family does Epaspidoceras belong to?",
            "pred": "Noctuidae",
            "rephrase": "What family are Epaspidoceras?",
            "alt": "Noctuidae",
            "answers": ["Aspidoceratidae"],
            "loc": "nq question: the taxon rank of epaspidoceras is",
            "loc_ans": "genus",
            "portability": {
                "Reasoning": {"prompt": ["What is the common name for the family Epaspidoceras belongs to?"], "ground_truth": ["Owlet moths"]}
            }
        }]"#,
    );
    let ds = load_dataset(&path, DatasetFormat::Zsre).unwrap();
    let r = &ds.records[0];
    assert_eq!(
        r.edit_question,
        "Which family does Epaspidoceras belong to?"
    );
    assert_eq!(r.edit_target, "Noctuidae");
    assert_eq!(
        to_statement(r),
        "Question: Which family does Epaspidoceras belong to? Answer: Noctuidae"
    );
    let kinds: Vec<ProbeKind> = r.probes.iter().map(|p| p.kind).collect();
    assert!(kinds.contains(&ProbeKind::Rephrase));
    assert!(kinds.contains(&ProbeKind::PortabilityReasoning));
    let loc = r.probes_of(Dimension::Locality).next().unwrap();
    assert_eq!(loc.target, "genus");
    assert!(!kinds.contains(&ProbeKind::LocalityForgetfulness));
}

#[test]
fn rome_counterfact_layout() {
    let (_d, path) = file(
        "counterfact.json",
        r#"[{
            "case_id": 0,
            "requested_rewrite": {
                "prompt": "The mother tongue of {} is",
                "subject": "Danielle Darrieux",
                "target_new": {"str": "English", "id": "Q1860"},
                "target_true": {"str": "French", "id": "Q150"}
            },
            "paraphrase_prompts": ["Danielle Darrieux spoke the language"],
            "neighborhood_prompts": ["The mother tongue of Jean Gabin is", "Michel Rocard is a native speaker of"]
        }]"#,
    );
    let r = &load_dataset(&path, DatasetFormat::Counterfact)
        .unwrap()
        .records[0];
    assert_eq!(r.edit_question, "The mother tongue of Danielle Darrieux is");
    assert_eq!(r.edit_target, "English");
    assert_eq!(r.probes.len(), 3);
    assert!(r
        .probes_of(Dimension::Locality)
        .all(|p| p.target == "French"));
}

#[test]
fn missing_target_names_the_field() {
    let (_d, path) = file(
        "bad.jsonl",
        concat!(
            r#"{"edit_question":"a","edit_target":"b"}"#,
            "\n",
            r#"{"edit_question":"The capital of Y is","probes":[]}"#,
            "\n"
        ),
    );
    match load_dataset(&path, DatasetFormat::Canonical).unwrap_err() {
        Error::Record { index, field, .. } => {
            assert_eq!(index, 1);
            assert_eq!(field.as_deref(), Some("edit_target"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn adapter_rejections() {
    let (_d, path) = file("z.jsonl", r#"{"src":"Q?","rephrase":"R?"}"#);
    let err = load_dataset(&path, DatasetFormat::Zsre).unwrap_err();
    assert!(err.to_string().contains("target_new"), "{err}");

    let (_d, path) = file(
        "z.jsonl",
        r#"{"src":"Q?","alt":"A","portability":{"Teleportation":[{"prompt":"p","ground_truth":"g"}]}}"#,
    );
    assert!(matches!(
        load_dataset(&path, DatasetFormat::Zsre),
        Err(Error::Record { .. })
    ));

    let (_d, path) = file("e.jsonl", r#"{"edit_question":"  ","edit_target":"b"}"#);
    assert!(load_dataset(&path, DatasetFormat::Canonical).is_err());

    let (_d, path) = file("p.jsonl", "{not json}\n");
    assert!(matches!(
        load_dataset(&path, DatasetFormat::Canonical),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn synthetic_round_trip() {
    let ds = synthetic_dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.jsonl");
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path, DatasetFormat::Canonical).unwrap(), ds);
}

fn records() -> impl Strategy<Value = EvalRecord> {
    ("\\PC{1,40}", prop::bool::ANY, "\\PC{1,20}").prop_map(|(q, question_mark, t)| EvalRecord {
        index: 0,
        edit_question: if question_mark { format!("{q}?") } else { q },
        edit_target: t,
        probes: vec![],
    })
}

proptest! {
    #[test]
    fn statement_contains_target(r in records()) {
        let s = to_statement(&r);
        prop_assert!(s.contains(&r.edit_target));
        prop_assert!(s.contains(&r.edit_question));
    }

    #[test]
    fn canonical_round_trip(rs in prop::collection::vec(records(), 1..8)) {
        let rs: Vec<EvalRecord> = rs
            .into_iter()
            .enumerate()
            .filter(|(_, r)| !r.edit_question.trim().is_empty() && !r.edit_target.trim().is_empty())
            .map(|(_, r)| r)
            .collect();
        prop_assume!(!rs.is_empty());
        let records = rs.into_iter().enumerate().map(|(i, r)| EvalRecord { index: i, ..r }).collect();
        let ds = Dataset { name: "rt".into(), records };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        save_dataset(&ds, &path).unwrap();
        prop_assert_eq!(load_dataset(&path, DatasetFormat::Canonical).unwrap(), ds);
    }
}
