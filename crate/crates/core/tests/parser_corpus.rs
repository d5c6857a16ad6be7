use std::path::{Path, PathBuf};

use gvl_core::parser::{parse_predictions, ResponseStatus};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    expected_first: u32,
    expected_count: usize,
    status: String,
    values: Option<Vec<f64>>,
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parser_corpus")
}

#[test]
fn corpus_classifies_as_expected() {
    let mut cases: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    cases.sort();
    assert!(cases.len() >= 30, "corpus has {} cases", cases.len());

    let mut failures = Vec::new();
    for txt in &cases {
        let raw = std::fs::read_to_string(txt).unwrap();
        let exp: Expected = serde_json::from_str(
            &std::fs::read_to_string(txt.with_extension("expected.json")).unwrap(),
        )
        .unwrap();
        let got = parse_predictions(&raw, exp.expected_first, exp.expected_count);
        let status = got.status.to_string();
        let values = got.values_in_presentation_order().ok();
        if status != exp.status || values != exp.values {
            failures.push(format!(
                "{}: expected {} {:?}, got {} {:?}",
                txt.file_name().unwrap().to_string_lossy(),
                exp.status,
                exp.values,
                status,
                values
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn corpus_covers_every_status() {
    let mut seen = std::collections::BTreeSet::new();
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.to_string_lossy().ends_with(".expected.json") {
            let exp: Expected =
                serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
            seen.insert(exp.status);
        }
    }
    let all: std::collections::BTreeSet<String> = [ResponseStatus::Ok, ResponseStatus::Mismatch, ResponseStatus::Empty]
        .iter()
        .map(ToString::to_string)
        .collect();
    assert_eq!(seen, all);
}
