//! Deterministic fixture backend loaded from a JSON Lines file.
//!
//! One object per line: `{"q": "...", "answers": [{"a": "x", "s": 0.5}]}`.
//! Keys are matched on the normalized form of the question; duplicate keys
//! in a file are a parse error.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, QaBackend};
use crate::comptree::{normalize, Answer, AnswerSet, AnswerValue, ScoredAnswer};

#[derive(Serialize, Deserialize)]
struct FixtureLine {
    q: String,
    answers: Vec<FixtureAnswer>,
}

#[derive(Serialize, Deserialize)]
struct FixtureAnswer {
    a: serde_json::Value,
    s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    entries: BTreeMap<String, (String, AnswerSet)>,
}

impl FixtureBackend {
    pub fn new() -> Self {
        FixtureBackend::default()
    }

    /// Register a question with its answer set. Fails on a duplicate
    /// normalized key.
    pub fn add(&mut self, question: &str, answers: AnswerSet) -> Result<(), BackendError> {
        let key = normalize(question);
        if self.entries.contains_key(&key) {
            return Err(BackendError::Parse {
                line: 0,
                message: format!("duplicate fixture key {question:?}"),
            });
        }
        self.entries.insert(key, (question.to_string(), answers));
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let mut backend = FixtureBackend::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: FixtureLine =
                serde_json::from_str(line).map_err(|e| BackendError::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            let key = normalize(&parsed.q);
            if backend.entries.contains_key(&key) {
                return Err(BackendError::Parse {
                    line: idx + 1,
                    message: format!("duplicate fixture key {:?}", parsed.q),
                });
            }
            let mut set = AnswerSet::new();
            for fa in parsed.answers {
                let answer = match &fa.a {
                    serde_json::Value::Number(n) => Answer::number(n.as_f64().ok_or_else(|| {
                        BackendError::Parse {
                            line: idx + 1,
                            message: "non-finite answer number".to_string(),
                        }
                    })?),
                    serde_json::Value::String(s) => Answer::text(s.clone()),
                    other => {
                        return Err(BackendError::Parse {
                            line: idx + 1,
                            message: format!("answer must be string or number, got {other}"),
                        })
                    }
                };
                set.insert(ScoredAnswer::new(answer, fa.s));
            }
            backend.entries.insert(key, (parsed.q, set));
        }
        Ok(backend)
    }

    /// Canonical JSON Lines rendering of the fixture contents.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (question, set) in self.entries.values() {
            let line = FixtureLine {
                q: question.clone(),
                answers: set
                    .iter()
                    .map(|sa| FixtureAnswer {
                        a: match &sa.answer.value {
                            AnswerValue::Text(s) => serde_json::Value::String(s.clone()),
                            AnswerValue::Number(n) => serde_json::json!(n),
                        },
                        s: sa.score,
                    })
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&line).unwrap());
            out.push('\n');
        }
        out
    }
}

impl QaBackend for FixtureBackend {
    fn name(&self) -> &str {
        "fixture"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn answer(&self, question: &str) -> Result<AnswerSet, BackendError> {
        Ok(self
            .entries
            .get(&normalize(question))
            .map(|(_, set)| set.clone())
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_answer() {
        let backend = FixtureBackend::parse(
            r#"{"q": "capital of France", "answers": [{"a": "Paris", "s": 0.9}]}
{"q": "year founded", "answers": [{"a": 1850, "s": 0.5}]}"#,
        )
        .unwrap();
        let set = backend.answer("Capital of France?").unwrap();
        assert_eq!(set.get("paris").unwrap().score, 0.9);
        let set = backend.answer("year founded").unwrap();
        assert!(set.contains("1850"));
        assert!(backend.answer("unmapped").unwrap().is_empty());
    }

    #[test]
    fn duplicate_keys_rejected_with_line() {
        let err = FixtureBackend::parse(
            r#"{"q": "a b", "answers": []}
{"q": "A  B!", "answers": []}"#,
        )
        .unwrap_err();
        match err {
            BackendError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_answers_empty() {
        let backend = FixtureBackend::parse("").unwrap();
        assert!(backend.answer("anything").unwrap().is_empty());
    }

    #[test]
    fn dump_round_trips() {
        let text = r#"{"q":"capital of France","answers":[{"a":"Paris","s":0.9}]}
{"q":"sizes","answers":[{"a":900.0,"s":0.5},{"a":2000.0,"s":0.4}]}
"#;
        let backend = FixtureBackend::parse(text).unwrap();
        let dumped = backend.dump();
        let reloaded = FixtureBackend::parse(&dumped).unwrap();
        assert_eq!(dumped, reloaded.dump());
        assert_eq!(
            backend.answer("sizes").unwrap(),
            reloaded.answer("sizes").unwrap()
        );
    }
}
