//! Computation trees and their evaluation.
//!
//! A tree has string leaves and function-tagged inner nodes. Evaluating a
//! tree bottom-up against a QA backend yields an [`AnswerSet`], the
//! denotation of the tree: a leaf denotes the singleton set containing its
//! own string, `SimpQA` delegates to the backend, `Comp` substitutes each
//! inner answer into a `VAR` template and unions the results, `Conj`
//! intersects two sets, and `Add` sums two singleton numeric sets.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, QaBackend};

/// Literal variable token substituted by the `Comp` operator.
pub const VAR_TOKEN: &str = "VAR";

/// Maximum fractional digits kept when rendering numbers canonically.
const NUMBER_PRECISION: usize = 6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("backend failed on {question:?}: {source}")]
    Backend {
        question: String,
        source: BackendError,
    },
    #[error("empty question")]
    EmptyQuestion,
    #[error("Comp template must contain exactly one VAR token, found {0}")]
    BadVarCount(usize),
    #[error("Add requires numeric answers, got {0:?}")]
    NonNumeric(String),
    #[error("Add requires singleton sets, got {0} members")]
    NonSingleton(usize),
}

/// An answer value: free text or an exact number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Number(f64),
    Text(String),
}

/// A single answer with its canonical comparison form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub value: AnswerValue,
    normalized: String,
}

impl Answer {
    pub fn text(s: impl Into<String>) -> Self {
        let s = s.into();
        let normalized = normalize(&s);
        Answer {
            value: AnswerValue::Text(s),
            normalized,
        }
    }

    pub fn number(n: f64) -> Self {
        let normalized = render_number(n);
        Answer {
            value: AnswerValue::Number(n),
            normalized,
        }
    }

    /// Lower-cased, whitespace-collapsed, punctuation-stripped form used as
    /// the set-membership key. Numbers render to a canonical decimal string.
    pub fn normalized_form(&self) -> &str {
        &self.normalized
    }

    /// Surface string as substituted into `Comp` templates.
    pub fn surface(&self) -> String {
        match &self.value {
            AnswerValue::Text(s) => s.clone(),
            AnswerValue::Number(n) => render_number(*n),
        }
    }
}

/// Normalize a string for answer comparison: lower-case, collapse internal
/// whitespace, strip leading/trailing punctuation. Numeric strings render to
/// the canonical decimal form so that "7" and 7.0 compare equal.
pub fn normalize(s: &str) -> String {
    let collapsed = s
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    if let Ok(n) = collapsed.parse::<f64>() {
        if n.is_finite() {
            return render_number(n);
        }
    }
    collapsed
}

/// Canonical decimal rendering with up to six fractional digits and no
/// trailing zeros.
pub fn render_number(n: f64) -> String {
    let s = format!("{:.*}", NUMBER_PRECISION, n);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// An answer together with a backend confidence score (higher is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub answer: Answer,
    pub score: f64,
}

impl ScoredAnswer {
    pub fn new(answer: Answer, score: f64) -> Self {
        ScoredAnswer { answer, score }
    }
}

/// A finite set of scored answers keyed by normalized form. Merging a
/// duplicate keeps the maximum score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    members: BTreeMap<String, ScoredAnswer>,
}

impl AnswerSet {
    pub fn new() -> Self {
        AnswerSet::default()
    }

    pub fn singleton(answer: Answer, score: f64) -> Self {
        let mut set = AnswerSet::new();
        set.insert(ScoredAnswer::new(answer, score));
        set
    }

    /// Insert, keeping the max score on a normalized-form collision.
    pub fn insert(&mut self, sa: ScoredAnswer) {
        let key = sa.answer.normalized_form().to_string();
        match self.members.get_mut(&key) {
            Some(existing) => {
                if sa.score > existing.score {
                    *existing = sa;
                }
            }
            None => {
                self.members.insert(key, sa);
            }
        }
    }

    pub fn union(&self, other: &AnswerSet) -> AnswerSet {
        let mut out = self.clone();
        for sa in other.iter() {
            out.insert(sa.clone());
        }
        out
    }

    /// Intersection by normalized form; each kept answer's score is the max
    /// of its two sides.
    pub fn intersect(&self, other: &AnswerSet) -> AnswerSet {
        let mut out = AnswerSet::new();
        for (key, sa) in &self.members {
            if let Some(other_sa) = other.members.get(key) {
                let mut kept = if other_sa.score > sa.score {
                    other_sa.clone()
                } else {
                    sa.clone()
                };
                kept.score = sa.score.max(other_sa.score);
                out.insert(kept);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScoredAnswer> {
        self.members.values()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.members.contains_key(normalized)
    }

    pub fn get(&self, normalized: &str) -> Option<&ScoredAnswer> {
        self.members.get(normalized)
    }

    /// Highest-scoring member; ties break to the lexicographically smallest
    /// normalized form.
    pub fn top(&self) -> Option<&ScoredAnswer> {
        self.members
            .values()
            .max_by(|a, b| match a.score.partial_cmp(&b.score).unwrap() {
                std::cmp::Ordering::Equal => b
                    .answer
                    .normalized_form()
                    .cmp(a.answer.normalized_form()),
                ord => ord,
            })
    }
}

impl FromIterator<ScoredAnswer> for AnswerSet {
    fn from_iter<I: IntoIterator<Item = ScoredAnswer>>(iter: I) -> Self {
        let mut set = AnswerSet::new();
        for sa in iter {
            set.insert(sa);
        }
        set
    }
}

/// Function tags for inner nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuncTag {
    SimpQa,
    Comp,
    Conj,
    Add,
}

impl fmt::Display for FuncTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuncTag::SimpQa => write!(f, "SimpQA"),
            FuncTag::Comp => write!(f, "Comp"),
            FuncTag::Conj => write!(f, "Conj"),
            FuncTag::Add => write!(f, "Add"),
        }
    }
}

/// A computation tree: string leaves, function-tagged inner nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComputationNode {
    Leaf(String),
    Func(FuncTag, Vec<ComputationNode>),
}

impl ComputationNode {
    pub fn leaf(s: impl Into<String>) -> Self {
        ComputationNode::Leaf(s.into())
    }

    pub fn simpqa(child: ComputationNode) -> Self {
        ComputationNode::Func(FuncTag::SimpQa, vec![child])
    }

    pub fn comp(template: ComputationNode, inner: ComputationNode) -> Self {
        ComputationNode::Func(FuncTag::Comp, vec![template, inner])
    }

    pub fn conj(left: ComputationNode, right: ComputationNode) -> Self {
        ComputationNode::Func(FuncTag::Conj, vec![left, right])
    }

    /// Check arity invariants for this node and all descendants.
    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            ComputationNode::Leaf(_) => Ok(()),
            ComputationNode::Func(tag, children) => {
                let expected = match tag {
                    FuncTag::SimpQa => 1,
                    FuncTag::Comp | FuncTag::Conj | FuncTag::Add => 2,
                };
                if children.len() != expected {
                    return Err(EvalError::InvalidTree(format!(
                        "{tag} expects {expected} children, got {}",
                        children.len()
                    )));
                }
                for c in children {
                    c.validate()?;
                }
                Ok(())
            }
        }
    }
}

fn count_var(template: &str) -> usize {
    template
        .split_whitespace()
        .filter(|t| *t == VAR_TOKEN)
        .count()
}

/// `SimpQA`: delegate a simple question to the backend.
pub fn op_simpqa(question: &str, backend: &dyn QaBackend) -> Result<AnswerSet, EvalError> {
    if normalize(question).is_empty() {
        return Err(EvalError::EmptyQuestion);
    }
    backend.answer(question).map_err(|source| EvalError::Backend {
        question: question.to_string(),
        source,
    })
}

/// `Comp`: substitute each inner answer for `VAR` and union the `SimpQA`
/// results; duplicate answers keep the max score.
pub fn op_comp(
    template: &str,
    inner: &AnswerSet,
    backend: &dyn QaBackend,
) -> Result<AnswerSet, EvalError> {
    let vars = count_var(template);
    if vars != 1 {
        return Err(EvalError::BadVarCount(vars));
    }
    let mut out = AnswerSet::new();
    for sa in inner.iter() {
        let substituted = substitute_var(template, &sa.answer.surface());
        let answers = op_simpqa(&substituted, backend)?;
        out = out.union(&answers);
    }
    Ok(out)
}

fn substitute_var(template: &str, value: &str) -> String {
    template
        .split_whitespace()
        .map(|t| if t == VAR_TOKEN { value } else { t })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `Conj`: set intersection; kept answers score the max of their two sides.
pub fn op_conj(left: &AnswerSet, right: &AnswerSet) -> AnswerSet {
    left.intersect(right)
}

/// `Add`: sum of two singleton numeric sets; score is the min of the two.
pub fn op_add(left: &AnswerSet, right: &AnswerSet) -> Result<AnswerSet, EvalError> {
    let one = |set: &AnswerSet| -> Result<(f64, f64), EvalError> {
        if set.len() != 1 {
            return Err(EvalError::NonSingleton(set.len()));
        }
        let sa = set.iter().next().unwrap();
        let n = match &sa.answer.value {
            AnswerValue::Number(n) => *n,
            AnswerValue::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| EvalError::NonNumeric(s.clone()))?,
        };
        Ok((n, sa.score))
    };
    let (a, sa) = one(left)?;
    let (b, sb) = one(right)?;
    Ok(AnswerSet::singleton(Answer::number(a + b), sa.min(sb)))
}

/// Evaluate a tree bottom-up to its denotation.
///
/// A leaf denotes the singleton set of its own string with score 0. The
/// first child of a `Comp` node must denote a single string containing
/// exactly one `VAR` token.
pub fn evaluate(tree: &ComputationNode, backend: &dyn QaBackend) -> Result<AnswerSet, EvalError> {
    tree.validate()?;
    eval_inner(tree, backend)
}

fn eval_inner(tree: &ComputationNode, backend: &dyn QaBackend) -> Result<AnswerSet, EvalError> {
    match tree {
        ComputationNode::Leaf(s) => Ok(AnswerSet::singleton(Answer::text(s.clone()), 0.0)),
        ComputationNode::Func(tag, children) => match tag {
            FuncTag::SimpQa => {
                let arg = eval_inner(&children[0], backend)?;
                let question = single_string(&arg)?;
                op_simpqa(&question, backend)
            }
            FuncTag::Comp => {
                let template = single_string(&eval_inner(&children[0], backend)?)?;
                let inner = eval_inner(&children[1], backend)?;
                op_comp(&template, &inner, backend)
            }
            FuncTag::Conj => {
                let left = resolve_operand(&children[0], backend)?;
                let right = resolve_operand(&children[1], backend)?;
                Ok(op_conj(&left, &right))
            }
            FuncTag::Add => {
                let left = eval_inner(&children[0], backend)?;
                let right = eval_inner(&children[1], backend)?;
                op_add(&left, &right)
            }
        },
    }
}

/// Conj accepts strings as syntactic sugar: a bare leaf operand is resolved
/// through `SimpQA` before intersecting.
fn resolve_operand(
    node: &ComputationNode,
    backend: &dyn QaBackend,
) -> Result<AnswerSet, EvalError> {
    match node {
        ComputationNode::Leaf(s) => op_simpqa(s, backend),
        _ => eval_inner(node, backend),
    }
}

fn single_string(set: &AnswerSet) -> Result<String, EvalError> {
    if set.len() != 1 {
        return Err(EvalError::InvalidTree(format!(
            "expected a single-string denotation, got {} members",
            set.len()
        )));
    }
    Ok(set.iter().next().unwrap().answer.surface())
}
