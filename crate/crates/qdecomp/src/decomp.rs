//! Decomposition programs over question tokens, their compilation into
//! computation trees, the rule-based when/during splitter, and
//! confidence-based strategy selection.
//!
//! Indexing is 0-based with inclusive spans throughout. The wire form of a
//! program is `SimpQA`, `Comp i j`, or `Conj i j` (with `j = -1` when no
//! token is copied).

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comptree::{ComputationNode, ScoredAnswer};
use crate::AnswerSet;

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("empty text")]
    EmptyText,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("unparsable program {0:?}")]
    BadWireForm(String),
    #[error("both answer sets are empty")]
    BothEmpty,
}

/// A question split into whitespace tokens with punctuation detached. Each
/// token's span indexes the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedQuestion {
    pub text: String,
    pub tokens: Vec<String>,
    pub offsets: Vec<Range<usize>>,
}

impl TokenizedQuestion {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined slice of tokens, inclusive bounds.
    pub fn span_text(&self, from: usize, to: usize) -> String {
        self.tokens[from..=to].join(" ")
    }
}

/// Split on whitespace and detach sentence-final and comma punctuation
/// (`. , ? !`) into their own tokens. Case is preserved; offsets map every
/// token back to the original text.
pub fn tokenize(text: &str) -> Result<TokenizedQuestion, DecompError> {
    if text.trim().is_empty() {
        return Err(DecompError::EmptyText);
    }
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut word_start = None;
    let push = |start: usize, end: usize, tokens: &mut Vec<String>, offsets: &mut Vec<Range<usize>>| {
        let mut piece = &text[start..end];
        let mut trailing = Vec::new();
        while let Some(last) = piece.chars().last() {
            if matches!(last, '.' | ',' | '?' | '!') && piece.chars().count() > 1 {
                let cut = piece.len() - last.len_utf8();
                trailing.push((start + cut, start + piece.len()));
                piece = &text[start..start + cut];
            } else {
                break;
            }
        }
        if !piece.is_empty() {
            tokens.push(piece.to_string());
            offsets.push(start..start + piece.len());
        }
        for (s, e) in trailing.into_iter().rev() {
            tokens.push(text[s..e].to_string());
            offsets.push(s..e);
        }
    };
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(start) = word_start.take() {
                push(start, idx, &mut tokens, &mut offsets);
            }
        } else if word_start.is_none() {
            word_start = Some(idx);
        }
    }
    if let Some(start) = word_start {
        push(start, text.len(), &mut tokens, &mut offsets);
    }
    Ok(TokenizedQuestion {
        text: text.to_string(),
        tokens,
        offsets,
    })
}

/// The decoded representation `z`: answer directly, compose over a span, or
/// conjoin at a split point with an optional copied token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecompositionProgram {
    SimpQa,
    /// Span `i..=j` becomes the inner question; the rest, with `VAR` in the
    /// gap, becomes the outer template.
    Comp { i: usize, j: usize },
    /// Split before token `i`; `copy` is a prefix token index prepended to
    /// the second conjunct, or `None` when nothing needs to be copied.
    Conj { i: usize, copy: Option<usize> },
}

impl DecompositionProgram {
    pub fn op_name(&self) -> &'static str {
        match self {
            DecompositionProgram::SimpQa => "SimpQA",
            DecompositionProgram::Comp { .. } => "Comp",
            DecompositionProgram::Conj { .. } => "Conj",
        }
    }

    pub fn validate(&self, question_len: usize) -> Result<(), DecompError> {
        match *self {
            DecompositionProgram::SimpQa => Ok(()),
            DecompositionProgram::Comp { i, j } => {
                if i <= j && j < question_len {
                    Ok(())
                } else {
                    Err(DecompError::InvalidProgram(format!(
                        "Comp {i} {j} invalid for question of {question_len} tokens"
                    )))
                }
            }
            DecompositionProgram::Conj { i, copy } => {
                if i == 0 || i >= question_len {
                    return Err(DecompError::InvalidProgram(format!(
                        "Conj split {i} invalid for question of {question_len} tokens"
                    )));
                }
                if let Some(j) = copy {
                    if j >= i {
                        return Err(DecompError::InvalidProgram(format!(
                            "Conj copy index {j} must precede split {i}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn parse_wire(s: &str) -> Result<Self, DecompError> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let bad = || DecompError::BadWireForm(s.to_string());
        match parts.as_slice() {
            ["SimpQA"] => Ok(DecompositionProgram::SimpQa),
            ["Comp", i, j] => Ok(DecompositionProgram::Comp {
                i: i.parse().map_err(|_| bad())?,
                j: j.parse().map_err(|_| bad())?,
            }),
            ["Conj", i, j] => {
                let i = i.parse().map_err(|_| bad())?;
                let j: i64 = j.parse().map_err(|_| bad())?;
                let copy = if j == -1 {
                    None
                } else if j >= 0 {
                    Some(j as usize)
                } else {
                    return Err(bad());
                };
                Ok(DecompositionProgram::Conj { i, copy })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for DecompositionProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DecompositionProgram::SimpQa => write!(f, "SimpQA"),
            DecompositionProgram::Comp { i, j } => write!(f, "Comp {i} {j}"),
            DecompositionProgram::Conj { i, copy } => {
                write!(f, "Conj {i} {}", copy.map(|j| j as i64).unwrap_or(-1))
            }
        }
    }
}

/// Compile a program into its computation tree over the question tokens.
pub fn compile(
    program: &DecompositionProgram,
    q: &TokenizedQuestion,
) -> Result<ComputationNode, DecompError> {
    program.validate(q.len())?;
    Ok(match *program {
        DecompositionProgram::SimpQa => {
            ComputationNode::simpqa(ComputationNode::leaf(q.tokens.join(" ")))
        }
        DecompositionProgram::Comp { i, j } => {
            let mut outer: Vec<&str> = q.tokens[..i].iter().map(String::as_str).collect();
            outer.push(crate::comptree::VAR_TOKEN);
            outer.extend(q.tokens[j + 1..].iter().map(String::as_str));
            let inner = q.span_text(i, j);
            ComputationNode::comp(
                ComputationNode::leaf(outer.join(" ")),
                ComputationNode::simpqa(ComputationNode::leaf(inner)),
            )
        }
        DecompositionProgram::Conj { i, copy } => {
            let first = q.span_text(0, i - 1);
            let rest = q.span_text(i, q.len() - 1);
            let second = match copy {
                Some(j) => format!("{} {rest}", q.tokens[j]),
                None => rest,
            };
            ComputationNode::conj(
                ComputationNode::simpqa(ComputationNode::leaf(first)),
                ComputationNode::simpqa(ComputationNode::leaf(second)),
            )
        }
    })
}

/// Split at the first "when" or "during" token (case-insensitive), sending
/// the suffix to the inner question. Degenerate positions (first or last
/// token) fall back to `SimpQA`.
pub fn rule_based_split(q: &TokenizedQuestion) -> DecompositionProgram {
    let trigger = q
        .tokens
        .iter()
        .position(|t| matches!(t.to_lowercase().as_str(), "when" | "during"));
    match trigger {
        Some(i) if i > 0 && i < q.len() - 1 => DecompositionProgram::Comp { i, j: q.len() - 1 },
        _ => DecompositionProgram::SimpQa,
    }
}

/// Which answering strategy produced the selected answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Decomposed,
    Plain,
}

/// Return the single highest-scoring answer across the decomposed and
/// whole-question result sets. Ties prefer the decomposed strategy, then
/// the lexicographically smaller normalized form.
pub fn select_strategy(
    decomposed: &AnswerSet,
    plain: &AnswerSet,
) -> Result<(ScoredAnswer, Strategy), DecompError> {
    let best_d = decomposed.top();
    let best_p = plain.top();
    match (best_d, best_p) {
        (None, None) => Err(DecompError::BothEmpty),
        (Some(d), None) => Ok((d.clone(), Strategy::Decomposed)),
        (None, Some(p)) => Ok((p.clone(), Strategy::Plain)),
        (Some(d), Some(p)) => {
            if p.score > d.score {
                Ok((p.clone(), Strategy::Plain))
            } else {
                Ok((d.clone(), Strategy::Decomposed))
            }
        }
    }
}
