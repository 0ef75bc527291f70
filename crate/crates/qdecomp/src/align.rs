//! Token alignment between machine-generated (MG) and natural-language (NL)
//! questions, and recovery of NL split points from known MG split points.
//!
//! A similarity matrix has one row per NL token and one column per MG
//! token. The split searches are exhaustive over all candidate NL split
//! points, scoring each candidate by the sum over rows of the best match
//! inside the row's assigned MG segment.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::{DecompositionProgram, TokenizedQuestion};

/// Default cosine-similarity threshold below which embedding matches count
/// as zero.
pub const DEFAULT_THRESHOLD: f64 = 0.4;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("empty question")]
    EmptyQuestion,
    #[error("invalid split {0}")]
    InvalidSplit(String),
    #[error("embedding file line {line}: {message}")]
    BadEmbeddingLine { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Fixed-dimension word vectors; lookup of an absent token yields `None`.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    pub dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Self {
        EmbeddingStore {
            dimension,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dimension, "embedding dimension mismatch");
        self.table.insert(token.to_lowercase(), vector);
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.table.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Load a text embedding file: one token per line,
    /// `token v1 v2 ... vD`, space-separated decimals.
    pub fn load(path: &Path) -> Result<Self, AlignError> {
        let text = fs::read_to_string(path)?;
        let mut store: Option<EmbeddingStore> = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap();
            let vector: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| AlignError::BadEmbeddingLine {
                        line: idx + 1,
                        message: format!("bad number {p:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if vector.is_empty() {
                return Err(AlignError::BadEmbeddingLine {
                    line: idx + 1,
                    message: "no vector components".to_string(),
                });
            }
            let store = store.get_or_insert_with(|| EmbeddingStore::new(vector.len()));
            if vector.len() != store.dimension {
                return Err(AlignError::BadEmbeddingLine {
                    line: idx + 1,
                    message: format!(
                        "dimension {} != {}",
                        vector.len(),
                        store.dimension
                    ),
                });
            }
            store.insert(token, vector);
        }
        Ok(store.unwrap_or_else(|| EmbeddingStore::new(0)))
    }
}

/// Lemmatize a token: lower-case, strip possessive `'s`, map irregulars
/// from a bundled exception table, then strip suffixes (`ies`->`y`, `es`,
/// `s`, `ing`, `ed`) with a minimum stem length of 3, iterated to a fixed
/// point so the function is idempotent.
pub fn lemma(token: &str) -> String {
    const EXCEPTIONS: &[(&str, &str)] = &[
        ("wrote", "write"),
        ("written", "write"),
        ("was", "be"),
        ("were", "be"),
        ("is", "be"),
        ("are", "be"),
        ("been", "be"),
        ("movies", "movie"),
        ("won", "win"),
        ("did", "do"),
        ("does", "do"),
        ("has", "have"),
        ("had", "have"),
        ("began", "begin"),
        ("went", "go"),
        ("made", "make"),
        ("found", "find"),
        ("held", "hold"),
        ("people", "person"),
        ("children", "child"),
        ("men", "man"),
        ("women", "woman"),
    ];
    let mut current = token.to_lowercase();
    loop {
        let mut next = current.clone();
        if let Some(stripped) = next.strip_suffix("'s") {
            next = stripped.to_string();
        } else if let Some(mapped) = EXCEPTIONS.iter().find(|(k, _)| *k == next) {
            next = mapped.1.to_string();
        } else if let Some(stem) = next.strip_suffix("ies").filter(|s| s.len() >= 3) {
            next = format!("{stem}y");
        } else if let Some(stem) = next.strip_suffix("es").filter(|s| s.len() >= 3) {
            next = stem.to_string();
        } else if let Some(stem) = next.strip_suffix("ing").filter(|s| s.len() >= 3) {
            next = stem.to_string();
        } else if let Some(stem) = next.strip_suffix("ed").filter(|s| s.len() >= 3) {
            next = stem.to_string();
        } else if let Some(stem) = next.strip_suffix('s').filter(|s| s.len() >= 3) {
            next = stem.to_string();
        }
        if next == current {
            return current;
        }
        current = next;
    }
}

fn is_punct_token(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_punctuation())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Token similarity: 1 on a lemma match, else cosine similarity when both
/// embeddings exist and the cosine clears the threshold, else 0.
/// Punctuation tokens are similar to nothing.
pub fn similarity(a: &str, b: &str, store: &EmbeddingStore, threshold: f64) -> f64 {
    if is_punct_token(a) || is_punct_token(b) {
        return 0.0;
    }
    if lemma(a) == lemma(b) {
        return 1.0;
    }
    match (store.get(a), store.get(b)) {
        (Some(va), Some(vb)) => {
            let cos = cosine(va, vb);
            if cos >= threshold {
                cos.min(1.0)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// NL x MG token-similarity grid. Row `i` is NL token `i`, column `j` is MG
/// token `j`.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub m: usize,
    cells: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_cells(n: usize, m: usize, cells: Vec<f64>) -> Self {
        assert_eq!(cells.len(), n * m);
        SimilarityMatrix { n, m, cells }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.m + j]
    }

    /// Best match for NL row `i` within MG columns `cols` (empty range
    /// scores 0).
    fn row_max(&self, i: usize, cols: std::ops::Range<usize>) -> f64 {
        cols.map(|j| self.get(i, j)).fold(0.0, f64::max)
    }
}

pub fn build_matrix(
    nl: &TokenizedQuestion,
    mg: &TokenizedQuestion,
    store: &EmbeddingStore,
    threshold: f64,
) -> Result<SimilarityMatrix, AlignError> {
    if nl.is_empty() || mg.is_empty() {
        return Err(AlignError::EmptyQuestion);
    }
    let mut cells = Vec::with_capacity(nl.len() * mg.len());
    for nl_tok in &nl.tokens {
        for mg_tok in &mg.tokens {
            cells.push(similarity(nl_tok, mg_tok, store, threshold));
        }
    }
    Ok(SimilarityMatrix::from_cells(nl.len(), mg.len(), cells))
}

/// Result of the conjunction split search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjSplit {
    pub p: usize,
    pub reordered: bool,
    pub score: f64,
}

/// Find the NL split point for a conjunction with known MG split `r`.
///
/// Scores every candidate `p` under the monotone objective (prefix rows
/// match the MG prefix, suffix rows the MG suffix) and under the swapped
/// objective that assumes the conjuncts were re-ordered; returns the argmax
/// of the better objective. `reordered` is set only when the swapped
/// objective wins strictly. Ties break to the lowest `p`.
pub fn conj_split(a: &SimilarityMatrix, r: usize) -> Result<ConjSplit, AlignError> {
    if r == 0 || r >= a.m {
        return Err(AlignError::InvalidSplit(format!(
            "r={r} outside (0, {})",
            a.m
        )));
    }
    let score_at = |p: usize, swapped: bool| -> f64 {
        let (prefix_cols, suffix_cols) = if swapped {
            (r..a.m, 0..r)
        } else {
            (0..r, r..a.m)
        };
        let mut total = 0.0;
        for i in 0..p {
            total += a.row_max(i, prefix_cols.clone());
        }
        for i in p..a.n {
            total += a.row_max(i, suffix_cols.clone());
        }
        total
    };
    let best = |swapped: bool| -> (usize, f64) {
        (0..=a.n)
            .map(|p| (p, score_at(p, swapped)))
            .fold((0, f64::NEG_INFINITY), |acc, (p, s)| {
                if s > acc.1 {
                    (p, s)
                } else {
                    acc
                }
            })
    };
    let (p1, s1) = best(false);
    let (p2, s2) = best(true);
    if s2 > s1 {
        Ok(ConjSplit {
            p: p2,
            reordered: true,
            score: s2,
        })
    } else {
        Ok(ConjSplit {
            p: p1,
            reordered: false,
            score: s1,
        })
    }
}

/// Find the NL span `(p1, p2)` for a composition with known MG span
/// `(r1, r2)` by exhaustive search over all ordered pairs. Ties break to
/// the lexicographically lowest pair.
pub fn comp_split(
    a: &SimilarityMatrix,
    r1: usize,
    r2: usize,
) -> Result<(usize, usize), AlignError> {
    if r1 >= r2 || r2 > a.m {
        return Err(AlignError::InvalidSplit(format!(
            "(r1,r2)=({r1},{r2}) invalid for m={}",
            a.m
        )));
    }
    let mut best = (0, 0);
    let mut best_score = f64::NEG_INFINITY;
    for p1 in 0..=a.n {
        for p2 in p1..=a.n {
            let mut score = 0.0;
            for i in 0..p1 {
                score += a.row_max(i, 0..r1);
            }
            for i in p1..p2 {
                score += a.row_max(i, r1..r2);
            }
            for i in p2..a.n {
                score += a.row_max(i, r2..a.m);
            }
            if score > best_score {
                best_score = score;
                best = (p1, p2);
            }
        }
    }
    Ok(best)
}

/// Pick the NL prefix token to copy into the second conjunct: the prefix
/// row best aligned into the MG suffix segment `r..m`, or `None` when no
/// alignment clears the threshold. Ties break to the lowest index.
pub fn copy_index(a: &SimilarityMatrix, p: usize, r: usize, threshold: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..p.min(a.n) {
        let score = a.row_max(i, r..a.m);
        let better = match best {
            Some((_, s)) => score > s,
            None => true,
        };
        if better {
            best = Some((i, score));
        }
    }
    best.filter(|(_, s)| *s >= threshold).map(|(i, _)| i)
}

/// Which compositional operation a generated record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompType {
    Comp,
    Conj,
    Super,
    Compar,
}

impl CompType {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompType::Comp => "comp",
            CompType::Conj => "conj",
            CompType::Super => "super",
            CompType::Compar => "compar",
        }
    }
}

/// Known MG split points carried by a generated record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MgSplits {
    Conj { r: usize },
    Comp { r1: usize, r2: usize },
}

/// A record as produced by the dataset generator, as far as supervision is
/// concerned.
#[derive(Debug, Clone)]
pub struct AlignableRecord {
    pub nl: TokenizedQuestion,
    pub mg: TokenizedQuestion,
    pub comp_type: CompType,
    pub mg_splits: MgSplits,
}

/// A noisy training label recovered by alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupervisionExample {
    pub nl: TokenizedQuestion,
    pub label: DecompositionProgram,
    pub comp_type: CompType,
    pub mg_splits: MgSplits,
    pub reordered: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SupervisionStats {
    pub emitted: usize,
    pub dropped_short: usize,
    pub dropped_degenerate: usize,
}

impl SupervisionStats {
    pub fn dropped(&self) -> usize {
        self.dropped_short + self.dropped_degenerate
    }
}

/// Generate noisy supervision labels for a batch of MG/NL record pairs.
/// Records with fewer than 3 NL tokens or degenerate recovered splits
/// (an empty segment) are dropped and counted, not raised.
pub fn make_supervision(
    records: &[AlignableRecord],
    store: &EmbeddingStore,
    threshold: f64,
) -> (Vec<SupervisionExample>, SupervisionStats) {
    let mut out = Vec::new();
    let mut stats = SupervisionStats::default();
    for record in records {
        if record.nl.len() < 3 {
            stats.dropped_short += 1;
            continue;
        }
        let a = match build_matrix(&record.nl, &record.mg, store, threshold) {
            Ok(a) => a,
            Err(_) => {
                stats.dropped_degenerate += 1;
                continue;
            }
        };
        let label = match record.mg_splits {
            MgSplits::Conj { r } => {
                let Ok(split) = conj_split(&a, r) else {
                    stats.dropped_degenerate += 1;
                    continue;
                };
                if split.p == 0 || split.p >= record.nl.len() {
                    stats.dropped_degenerate += 1;
                    continue;
                }
                let copy = copy_index(&a, split.p, r, threshold);
                let label = DecompositionProgram::Conj { i: split.p, copy };
                if label.validate(record.nl.len()).is_err() {
                    stats.dropped_degenerate += 1;
                    continue;
                }
                SupervisionExample {
                    nl: record.nl.clone(),
                    label,
                    comp_type: record.comp_type,
                    mg_splits: record.mg_splits,
                    reordered: split.reordered,
                }
            }
            MgSplits::Comp { r1, r2 } => {
                let Ok((p1, p2)) = comp_split(&a, r1, r2) else {
                    stats.dropped_degenerate += 1;
                    continue;
                };
                if p1 == p2 {
                    stats.dropped_degenerate += 1;
                    continue;
                }
                // inclusive-span conversion: the inner question is p1..p2-1
                let label = DecompositionProgram::Comp { i: p1, j: p2 - 1 };
                if label.validate(record.nl.len()).is_err() {
                    stats.dropped_degenerate += 1;
                    continue;
                }
                SupervisionExample {
                    nl: record.nl.clone(),
                    label,
                    comp_type: record.comp_type,
                    mg_splits: record.mg_splits,
                    reordered: false,
                }
            }
        };
        stats.emitted += 1;
        out.push(label);
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::tokenize;

    fn identity(n: usize) -> SimilarityMatrix {
        let mut cells = vec![0.0; n * n];
        for i in 0..n {
            cells[i * n + i] = 1.0;
        }
        SimilarityMatrix::from_cells(n, n, cells)
    }

    #[test]
    fn lemma_rules() {
        assert_eq!(lemma("Movies"), "movie");
        assert_eq!(lemma("cities"), "city");
        assert_eq!(lemma("wrote"), "write");
        assert_eq!(lemma("Shakespeare's"), "shakespeare");
        assert_eq!(lemma("directed"), "direct");
        assert_eq!(lemma("hosting"), "host");
    }

    #[test]
    fn lemma_is_idempotent() {
        for t in ["Movies", "cities", "wrote", "horses", "was", "running's"] {
            let once = lemma(t);
            assert_eq!(lemma(&once), once, "not idempotent for {t:?}");
        }
    }

    #[test]
    fn lemma_keeps_short_stems() {
        // stripping would leave fewer than 3 chars
        assert_eq!(lemma("as"), "as");
        assert_eq!(lemma("ed"), "ed");
    }

    #[test]
    fn similarity_lemma_branch_wins() {
        let store = EmbeddingStore::new(2);
        assert_eq!(similarity("film", "Films", &store, 0.4), 1.0);
        // identical rare token absent from the store still matches itself
        assert_eq!(similarity("zyzzyva", "zyzzyva", &store, 0.4), 1.0);
    }

    #[test]
    fn similarity_cosine_branch_and_threshold() {
        let mut store = EmbeddingStore::new(2);
        store.insert("left", vec![1.0, 0.0]);
        store.insert("up", vec![0.0, 1.0]);
        store.insert("leftish", vec![0.8, 0.2]);
        assert_eq!(similarity("left", "up", &store, 0.4), 0.0);
        let s = similarity("left", "leftish", &store, 0.4);
        assert!(s > 0.9 && s <= 1.0);
        // missing embedding falls to the zero branch
        assert_eq!(similarity("left", "unknown", &store, 0.4), 0.0);
    }

    #[test]
    fn similarity_is_symmetric_and_punct_is_zero() {
        let mut store = EmbeddingStore::new(2);
        store.insert("a", vec![1.0, 0.5]);
        store.insert("b", vec![0.9, 0.6]);
        assert_eq!(
            similarity("a", "b", &store, 0.4),
            similarity("b", "a", &store, 0.4)
        );
        assert_eq!(similarity("?", "?", &store, 0.4), 0.0);
    }

    #[test]
    fn matrix_diagonal_for_equal_questions() {
        let store = EmbeddingStore::new(2);
        let q = tokenize("what film featured her").unwrap();
        let a = build_matrix(&q, &q, &store, 0.4).unwrap();
        for i in 0..a.n {
            assert_eq!(a.get(i, i), 1.0);
        }
    }

    #[test]
    fn matrix_zero_for_disjoint_vocab() {
        let store = EmbeddingStore::new(2);
        let nl = tokenize("alpha beta").unwrap();
        let mg = tokenize("gamma delta").unwrap();
        let a = build_matrix(&nl, &mg, &store, 0.4).unwrap();
        for i in 0..a.n {
            for j in 0..a.m {
                assert_eq!(a.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn conj_split_identity() {
        let a = identity(4);
        let split = conj_split(&a, 2).unwrap();
        assert_eq!(split.p, 2);
        assert!(!split.reordered);
        assert_eq!(split.score, 4.0);
    }

    #[test]
    fn conj_split_antidiagonal_reordered() {
        let mut cells = vec![0.0; 16];
        for i in 0..4 {
            cells[i * 4 + (3 - i)] = 1.0;
        }
        let a = SimilarityMatrix::from_cells(4, 4, cells);
        let split = conj_split(&a, 2).unwrap();
        assert_eq!(split.p, 2);
        assert!(split.reordered);
        assert_eq!(split.score, 4.0);
    }

    #[test]
    fn conj_split_zero_matrix_ties_low() {
        let a = SimilarityMatrix::from_cells(3, 4, vec![0.0; 12]);
        let split = conj_split(&a, 2).unwrap();
        assert_eq!(split.p, 0);
        assert_eq!(split.score, 0.0);
        assert!(!split.reordered);
    }

    #[test]
    fn conj_split_rejects_bad_r() {
        let a = identity(4);
        assert!(conj_split(&a, 0).is_err());
        assert!(conj_split(&a, 4).is_err());
    }

    #[test]
    fn comp_split_identity() {
        let a = identity(6);
        assert_eq!(comp_split(&a, 2, 5).unwrap(), (2, 5));
    }

    #[test]
    fn comp_split_zero_matrix_ties_low() {
        let a = SimilarityMatrix::from_cells(4, 6, vec![0.0; 24]);
        assert_eq!(comp_split(&a, 2, 4).unwrap(), (0, 0));
    }

    #[test]
    fn comp_split_shifted_block() {
        // NL middle segment shifted by one against the identity
        let n = 6;
        let mut cells = vec![0.0; n * n];
        // prefix rows 0..1 align to cols 0..2
        cells[0] = 1.0;
        cells[n + 1] = 1.0;
        // middle rows 2..4 align to cols 2..4 (MG segment r1=2..r2=4)
        cells[2 * n + 2] = 1.0;
        cells[3 * n + 3] = 1.0;
        // suffix rows 4..6 align to cols 4..6
        cells[4 * n + 4] = 1.0;
        cells[5 * n + 5] = 1.0;
        let a = SimilarityMatrix::from_cells(n, n, cells);
        assert_eq!(comp_split(&a, 2, 4).unwrap(), (2, 4));
    }

    #[test]
    fn copy_index_picks_aligned_prefix_token() {
        // NL row 1 ("film") aligns into the MG suffix
        let mut cells = vec![0.0; 4 * 6];
        cells[6 + 4] = 1.0; // row 1, col 4; suffix starts at r=3
        let a = SimilarityMatrix::from_cells(4, 6, cells);
        assert_eq!(copy_index(&a, 3, 3, 0.4), Some(1));
    }

    #[test]
    fn copy_index_zero_matrix_is_none() {
        let a = SimilarityMatrix::from_cells(4, 6, vec![0.0; 24]);
        assert_eq!(copy_index(&a, 3, 3, 0.4), None);
    }

    #[test]
    fn copy_index_tie_breaks_low() {
        let mut cells = vec![0.0; 4 * 6];
        cells[4] = 0.9; // row 0
        cells[6 + 4] = 0.9; // row 1
        let a = SimilarityMatrix::from_cells(4, 6, cells);
        assert_eq!(copy_index(&a, 3, 3, 0.4), Some(0));
    }

    #[test]
    fn supervision_identity_recovers_mg_splits() {
        let store = EmbeddingStore::new(2);
        let text = "what film featured Taylor Swift and was directed by Deborah Aquila";
        let q = tokenize(text).unwrap();
        let records = vec![AlignableRecord {
            nl: q.clone(),
            mg: q,
            comp_type: CompType::Conj,
            mg_splits: MgSplits::Conj { r: 5 },
        }];
        let (examples, stats) = make_supervision(&records, &store, 0.4);
        assert_eq!(stats.emitted, 1);
        assert_eq!(stats.dropped(), 0);
        match examples[0].label {
            DecompositionProgram::Conj { i, .. } => assert_eq!(i, 5),
            other => panic!("unexpected label {other:?}"),
        }
        assert!(!examples[0].reordered);
    }

    #[test]
    fn supervision_comp_inclusive_conversion() {
        let store = EmbeddingStore::new(2);
        let text = "where is the birthplace of that writer behind Standup Shakespeare";
        let q = tokenize(text).unwrap();
        let records = vec![AlignableRecord {
            nl: q.clone(),
            mg: q,
            comp_type: CompType::Comp,
            mg_splits: MgSplits::Comp { r1: 5, r2: 10 },
        }];
        let (examples, stats) = make_supervision(&records, &store, 0.4);
        assert_eq!(stats.emitted, 1);
        assert_eq!(
            examples[0].label,
            DecompositionProgram::Comp { i: 5, j: 9 }
        );
    }

    #[test]
    fn supervision_counts_drops() {
        let store = EmbeddingStore::new(2);
        let short = tokenize("too short").unwrap();
        let long = tokenize("alpha beta gamma delta").unwrap();
        let mg = tokenize("zeta eta theta iota").unwrap();
        let records = vec![
            AlignableRecord {
                nl: short.clone(),
                mg: mg.clone(),
                comp_type: CompType::Conj,
                mg_splits: MgSplits::Conj { r: 2 },
            },
            // disjoint vocab: zero matrix -> p = 0 -> degenerate
            AlignableRecord {
                nl: long,
                mg,
                comp_type: CompType::Conj,
                mg_splits: MgSplits::Conj { r: 2 },
            },
        ];
        let (examples, stats) = make_supervision(&records, &store, 0.4);
        assert!(examples.is_empty());
        assert_eq!(stats.dropped_short, 1);
        assert_eq!(stats.dropped_degenerate, 1);
    }

    #[test]
    fn split_scores_invariant_under_zero_padding() {
        let a = identity(4);
        let split = conj_split(&a, 2).unwrap();
        let mut padded_cells = vec![0.0; 6 * 6];
        for i in 0..4 {
            padded_cells[i * 6 + i] = 1.0;
        }
        // extra all-zero NL rows and MG columns beyond the active ranges
        let padded = SimilarityMatrix::from_cells(6, 6, padded_cells);
        let padded_split = conj_split(&padded, 2).unwrap();
        assert_eq!(split.score, padded_split.score);
        assert_eq!(split.p, padded_split.p);
    }
}
