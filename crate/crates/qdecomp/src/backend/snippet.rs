//! Snippet-service backend: HTTP retrieval with an on-disk response cache
//! and a naive answer extractor over the returned snippets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, QaBackend};
use crate::comptree::{normalize, Answer, AnswerSet, ScoredAnswer};

const MAX_SNIPPETS: usize = 100;
const MAX_NGRAM: usize = 4;
const TOP_ANSWERS: usize = 20;

/// One retrieved web snippet. Ranks are 1-based and unique in a list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub title: String,
    pub text: String,
    pub rank: usize,
}

#[derive(Serialize, Deserialize)]
struct SnippetResponse {
    snippets: Vec<Snippet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnippetServiceConfig {
    /// Base URL of the service; the question is passed as query param `q`.
    pub endpoint: String,
    /// Optional API key, sent as the `x-api-key` header.
    pub api_key: Option<String>,
    pub cache_dir: PathBuf,
}

/// HTTP client with a never-expiring cache, one file per question keyed by
/// the hex digest of the normalized question.
pub struct SnippetClient {
    config: SnippetServiceConfig,
    // serializes cache writes
    write_lock: Mutex<()>,
}

impl SnippetClient {
    pub fn new(config: SnippetServiceConfig) -> Self {
        SnippetClient {
            config,
            write_lock: Mutex::new(()),
        }
    }

    fn cache_path(&self, question: &str) -> PathBuf {
        let digest = Sha256::digest(normalize(question).as_bytes());
        self.config.cache_dir.join(hex::encode(digest))
    }

    /// Fetch snippets for a question, going to the network only on a cache
    /// miss. Responses are truncated to 100 snippets before caching.
    pub fn fetch_snippets(&self, question: &str) -> Result<Vec<Snippet>, BackendError> {
        let path = self.cache_path(question);
        if path.exists() {
            let text = fs::read_to_string(&path)?;
            let response: SnippetResponse = serde_json::from_str(&text)
                .map_err(|e| BackendError::Transport(format!("corrupt cache entry: {e}")))?;
            return Ok(response.snippets);
        }

        let url = format!(
            "{}?q={}",
            self.config.endpoint,
            url_encode(question.trim())
        );
        let mut request = ureq::get(&url);
        if let Some(key) = &self.config.api_key {
            request = request.set("x-api-key", key);
        }
        let response = match request.call() {
            Ok(r) => r,
            Err(ureq::Error::Status(429, _)) => {
                return Err(BackendError::Quota(format!("429 for {question:?}")))
            }
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let body = response
            .into_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let mut parsed: SnippetResponse = serde_json::from_str(&body)
            .map_err(|e| BackendError::Transport(format!("malformed payload: {e}")))?;
        parsed.snippets.truncate(MAX_SNIPPETS);

        let _guard = self.write_lock.lock().unwrap();
        fs::create_dir_all(&self.config.cache_dir)?;
        fs::write(&path, serde_json::to_string(&parsed).unwrap())?;
        Ok(parsed.snippets)
    }
}

fn url_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

/// Extract candidate answers from snippets: capitalized n-grams (n <= 4)
/// and numbers, excluding question tokens. Each occurrence contributes
/// 1/rank to the candidate's score; the top 20 candidates are kept.
pub fn extract_answers(snippets: &[Snippet], question: &str) -> AnswerSet {
    let question_tokens: BTreeSet<String> = question
        .split_whitespace()
        .map(normalize)
        .filter(|t| !t.is_empty())
        .collect();

    // normalized form -> (surface, score)
    let mut scores: BTreeMap<String, (String, f64)> = BTreeMap::new();
    let mut credit = |surface: String, rank: usize| {
        let key = normalize(&surface);
        if key.is_empty() {
            return;
        }
        let entry = scores.entry(key).or_insert((surface, 0.0));
        entry.1 += 1.0 / rank as f64;
    };

    for snippet in snippets {
        let tokens: Vec<&str> = snippet.text.split_whitespace().collect();
        let usable: Vec<bool> = tokens
            .iter()
            .map(|t| !question_tokens.contains(&normalize(t)))
            .collect();
        for (idx, token) in tokens.iter().enumerate() {
            if !usable[idx] {
                continue;
            }
            if is_number(token) {
                credit(trim_punct(token).to_string(), snippet.rank);
                continue;
            }
            if !is_capitalized(token) {
                continue;
            }
            // start of capitalized runs only, to avoid double-starting inside
            if idx > 0 && usable[idx - 1] && is_capitalized(tokens[idx - 1]) {
                continue;
            }
            let mut end = idx;
            while end + 1 < tokens.len()
                && usable[end + 1]
                && is_capitalized(tokens[end + 1])
                && end + 1 - idx < MAX_NGRAM
            {
                end += 1;
            }
            for stop in idx..=end {
                let surface = tokens[idx..=stop]
                    .iter()
                    .map(|t| trim_punct(t))
                    .collect::<Vec<_>>()
                    .join(" ");
                credit(surface, snippet.rank);
            }
        }
    }

    let mut ranked: Vec<(String, (String, f64))> = scores.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1 .1
            .partial_cmp(&a.1 .1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked
        .into_iter()
        .take(TOP_ANSWERS)
        .map(|(_, (surface, score))| {
            let answer = match surface.parse::<f64>() {
                Ok(n) if n.is_finite() => Answer::number(n),
                _ => Answer::text(surface),
            };
            ScoredAnswer::new(answer, score)
        })
        .collect()
}

fn trim_punct(t: &str) -> &str {
    t.trim_matches(|c: char| c.is_ascii_punctuation())
}

fn is_capitalized(t: &str) -> bool {
    trim_punct(t)
        .chars()
        .next()
        .map(|c| c.is_uppercase())
        .unwrap_or(false)
}

fn is_number(t: &str) -> bool {
    let t = trim_punct(t);
    !t.is_empty() && t.parse::<f64>().is_ok()
}

/// `QaBackend` over the snippet service: fetch, then extract.
pub struct SnippetBackend {
    client: SnippetClient,
}

impl SnippetBackend {
    pub fn new(config: SnippetServiceConfig) -> Self {
        SnippetBackend {
            client: SnippetClient::new(config),
        }
    }
}

impl QaBackend for SnippetBackend {
    fn name(&self) -> &str {
        "snippet-service"
    }

    fn deterministic(&self) -> bool {
        // deterministic given a warm cache, not across cache clears
        false
    }

    fn answer(&self, question: &str) -> Result<AnswerSet, BackendError> {
        let snippets = self.client.fetch_snippets(question)?;
        Ok(extract_answers(&snippets, question))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snip(rank: usize, text: &str) -> Snippet {
        Snippet {
            title: format!("t{rank}"),
            text: text.to_string(),
            rank,
        }
    }

    #[test]
    fn question_words_are_excluded() {
        let set = extract_answers(
            &[snip(1, "Capital Of France")],
            "capital of France",
        );
        assert!(set.is_empty());
    }

    #[test]
    fn reciprocal_rank_scores_sum() {
        let set = extract_answers(
            &[snip(1, "born in Cardiff today"), snip(2, "lived near Cardiff")],
            "where was he born",
        );
        assert_eq!(set.get("cardiff").unwrap().score, 1.5);
    }

    #[test]
    fn numbers_are_candidates() {
        let set = extract_answers(&[snip(1, "founded in 1850 by settlers")], "when was it founded");
        let sa = set.get("1850").unwrap();
        assert_eq!(sa.score, 1.0);
        assert_eq!(sa.answer.surface(), "1850");
    }

    #[test]
    fn capitalized_ngrams_up_to_four() {
        let set = extract_answers(&[snip(1, "meet Ken Follett there")], "who wrote it");
        assert!(set.contains("ken"));
        assert!(set.contains("ken follett"));
        assert!(!set.contains("meet ken"));
    }

    #[test]
    fn order_stable_under_permutation() {
        let a = vec![snip(1, "saw Paris lights"), snip(2, "old Paris and Lyon")];
        let b = vec![snip(2, "old Paris and Lyon"), snip(1, "saw Paris lights")];
        assert_eq!(extract_answers(&a, "q"), extract_answers(&b, "q"));
    }
}
