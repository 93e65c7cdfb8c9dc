//! Test-case corpus: 8 desktop scenarios, 3 asset combinations each.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

pub const BUNDLED_CORPUS: &str = include_str!("../assets/corpus.json");

#[derive(Clone, Debug)]
pub struct CorpusScenario {
    pub key: String,
    pub scene: String,
    pub info: String,
    pub cases: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct RawScenario {
    scene: String,
    info: String,
    // the corpus format spells this field both ways
    #[serde(alias = "cases")]
    case: Vec<Vec<String>>,
}

pub fn parse_corpus(text: &str, origin: &str) -> Result<Vec<CorpusScenario>> {
    let raw: BTreeMap<String, RawScenario> =
        serde_json::from_str(text).with_context(|| format!("corpus schema error in {origin}"))?;
    let mut scenarios = Vec::new();
    for (key, scenario) in raw {
        if scenario.case.is_empty() {
            bail!("corpus schema error in {origin}: scenario '{key}' has no cases");
        }
        for (idx, case) in scenario.case.iter().enumerate() {
            if case.is_empty() {
                bail!("corpus schema error in {origin}: '{key}' case {idx} is empty");
            }
        }
        scenarios.push(CorpusScenario {
            key,
            scene: scenario.scene,
            info: scenario.info,
            cases: scenario.case,
        });
    }
    Ok(scenarios)
}

pub fn load_corpus(path: Option<&Path>) -> Result<Vec<CorpusScenario>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read corpus {}", p.display()))?;
            parse_corpus(&text, &p.display().to_string())
        }
        None => parse_corpus(BUNDLED_CORPUS, "bundled corpus"),
    }
}

pub fn find_scenario<'c>(
    corpus: &'c [CorpusScenario],
    key: &str,
) -> Result<&'c CorpusScenario> {
    corpus
        .iter()
        .find(|s| s.key == key)
        .with_context(|| {
            let known: Vec<&str> = corpus.iter().map(|s| s.key.as_str()).collect();
            format!("unknown scenario key '{key}'; known keys: {}", known.join(", "))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpus_shape() {
        let corpus = load_corpus(None).unwrap();
        assert_eq!(corpus.len(), 8);
        assert!(corpus.iter().all(|s| s.cases.len() == 3));

        let bar = find_scenario(&corpus, "Bar_Table").unwrap();
        let third = &bar.cases[2];
        assert_eq!(third.len(), 8);
        for wine in ["wine-0", "wine-1", "wine-2"] {
            assert!(third.contains(&wine.to_string()));
        }
    }

    #[test]
    fn cases_alias_is_accepted() {
        let text = r#"{"K": {"scene": "S", "info": "I", "cases": [["a"]]}}"#;
        let corpus = parse_corpus(text, "inline").unwrap();
        assert_eq!(corpus[0].cases, vec![vec!["a".to_string()]]);
    }

    #[test]
    fn malformed_corpus_is_a_schema_error() {
        assert!(parse_corpus("{ not json", "inline").is_err());
        let empty_case = r#"{"K": {"scene": "S", "info": "I", "case": [[]]}}"#;
        assert!(parse_corpus(empty_case, "inline").is_err());
    }

    #[test]
    fn unknown_key_lists_known_ones() {
        let corpus = load_corpus(None).unwrap();
        let err = find_scenario(&corpus, "Nope").unwrap_err().to_string();
        assert!(err.contains("Nope") && err.contains("Dining_Table"));
    }
}
