//! Synthetic dataset generation: an in-memory triple store, a
//! conjunctive-query executor (ORDER BY ... LIMIT 1, FILTER), four
//! query-complication rules, machine-generated question rendering from
//! predicate templates, and a quota-driven sampler with optional noising.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{CompType, MgSplits};
use crate::comptree::{render_number, Answer, AnswerSet, ScoredAnswer};
use crate::decomp::tokenize;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("order/filter variable {0} is never bound by a pattern")]
    UnboundOrderVariable(String),
    #[error("no template for predicate {0}")]
    MissingTemplate(String),
}

/// The object position of a triple: an entity/string symbol or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Object {
    Number(f64),
    Symbol(String),
}

impl Object {
    /// Human-readable form used when rendering templates.
    pub fn surface(&self) -> String {
        match self {
            Object::Number(n) => render_number(*n),
            Object::Symbol(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Object,
}

/// Immutable in-memory triple store. Entity and predicate names are
/// plain strings; a `#cvt` suffix in the KB file marks event nodes.
#[derive(Debug, Default)]
pub struct Kb {
    pub triples: Vec<Triple>,
    cvt: BTreeSet<String>,
    by_pred: HashMap<String, Vec<usize>>,
}

impl Kb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, subject: &str, predicate: &str, object: Object) {
        let (subject, s_cvt) = strip_cvt(subject);
        if s_cvt {
            self.cvt.insert(subject.to_string());
        }
        let object = match object {
            Object::Symbol(s) => {
                let (name, o_cvt) = strip_cvt(&s);
                if o_cvt {
                    self.cvt.insert(name.to_string());
                }
                Object::Symbol(name.to_string())
            }
            n => n,
        };
        let idx = self.triples.len();
        self.triples.push(Triple {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object,
        });
        self.by_pred
            .entry(predicate.to_string())
            .or_default()
            .push(idx);
    }

    pub fn is_cvt(&self, entity: &str) -> bool {
        self.cvt.contains(entity)
    }

    pub fn triples_with_pred(&self, predicate: &str) -> impl Iterator<Item = &Triple> {
        self.by_pred
            .get(predicate)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    /// Parse the line-based KB format: `subj <TAB> pred <TAB> obj`, blank
    /// lines and `#`-prefixed comment lines ignored. Numeric objects are
    /// unquoted numbers; a `#cvt` suffix marks CVT entities.
    pub fn parse(text: &str) -> Result<Kb, KbError> {
        let mut kb = Kb::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(KbError::Parse {
                    line: lineno + 1,
                    message: format!("expected 3 tab-separated fields, got {}", parts.len()),
                });
            }
            let object = match parts[2].parse::<f64>() {
                Ok(n) if n.is_finite() => Object::Number(n),
                _ => Object::Symbol(parts[2].to_string()),
            };
            kb.add(parts[0], parts[1], object);
        }
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Kb, KbError> {
        Kb::parse(&std::fs::read_to_string(path)?)
    }
}

fn strip_cvt(name: &str) -> (&str, bool) {
    match name.strip_suffix("#cvt") {
        Some(base) => (base, true),
        None => (name, false),
    }
}

/// A subject or object slot in a query pattern: names starting with `?`
/// are variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatTerm {
    Number(f64),
    Sym(String),
}

impl PatTerm {
    pub fn var(name: &str) -> Self {
        PatTerm::Sym(name.to_string())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            PatTerm::Sym(s) if s.starts_with('?') => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub subject: PatTerm,
    pub predicate: String,
    pub object: PatTerm,
}

impl Pattern {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: PatTerm) -> Self {
        Pattern {
            subject: PatTerm::Sym(subject.into()),
            predicate: predicate.into(),
            object,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderDir {
    Desc,
    Asc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderBy {
    pub var: String,
    pub dir: OrderDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Lt,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub var: String,
    pub op: CmpOp,
    pub value: f64,
}

/// A conjunction of triple patterns with optional ORDER BY ... LIMIT 1
/// and a single numeric FILTER, both applied after pattern matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjunctiveQuery {
    pub patterns: Vec<Pattern>,
    pub answer_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderBy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Filter>,
}

impl ConjunctiveQuery {
    pub fn new(answer_var: &str, patterns: Vec<Pattern>) -> Self {
        ConjunctiveQuery {
            patterns,
            answer_var: answer_var.to_string(),
            order: None,
            filter: None,
        }
    }

    fn pattern_vars(p: &Pattern) -> Vec<&str> {
        p.subject
            .as_var()
            .into_iter()
            .chain(p.object.as_var())
            .collect()
    }

    /// The answer variable must occur in a pattern and every variable must
    /// be connected to it through chains of patterns sharing a variable.
    pub fn validate(&self) -> Result<(), KbError> {
        if !self.answer_var.starts_with('?') {
            return Err(KbError::InvalidQuery(format!(
                "answer variable {} must start with ?",
                self.answer_var
            )));
        }
        if self.patterns.is_empty() {
            return Err(KbError::InvalidQuery("no patterns".to_string()));
        }
        let mut reached: BTreeSet<&str> = BTreeSet::new();
        reached.insert(&self.answer_var);
        loop {
            let before = reached.len();
            for p in &self.patterns {
                let vars = Self::pattern_vars(p);
                if vars.iter().any(|v| reached.contains(v)) {
                    reached.extend(vars);
                }
            }
            if reached.len() == before {
                break;
            }
        }
        if !self
            .patterns
            .iter()
            .any(|p| Self::pattern_vars(p).contains(&self.answer_var.as_str()))
        {
            return Err(KbError::InvalidQuery(format!(
                "answer variable {} does not occur in any pattern",
                self.answer_var
            )));
        }
        for p in &self.patterns {
            for v in Self::pattern_vars(p) {
                if !reached.contains(v) {
                    return Err(KbError::InvalidQuery(format!(
                        "variable {v} is not connected to {}",
                        self.answer_var
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A value bound to a query variable during matching.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub enum BoundValue {
    Sym(String),
    Num(f64),
}

impl BoundValue {
    fn to_answer(&self) -> Answer {
        match self {
            BoundValue::Sym(s) => Answer::text(s.clone()),
            BoundValue::Num(n) => Answer::number(*n),
        }
    }
}

type Binding = BTreeMap<String, BoundValue>;

fn unify(term: &PatTerm, value: &BoundValue, binding: &mut Binding) -> bool {
    match (term, value) {
        (PatTerm::Number(a), BoundValue::Num(b)) => a == b,
        (PatTerm::Sym(s), v) => {
            if s.starts_with('?') {
                match binding.get(s) {
                    Some(bound) => bound == v,
                    None => {
                        binding.insert(s.clone(), v.clone());
                        true
                    }
                }
            } else {
                matches!(v, BoundValue::Sym(name) if name == s)
            }
        }
        _ => false,
    }
}

/// All complete bindings satisfying the patterns, filter, and order
/// modifier (ORDER BY keeps the bindings achieving the extreme value).
pub fn execute_bindings(query: &ConjunctiveQuery, kb: &Kb) -> Result<Vec<Binding>, KbError> {
    query.validate()?;
    let mut solutions: Vec<Binding> = vec![Binding::new()];
    for pattern in &query.patterns {
        let mut next = Vec::new();
        for binding in &solutions {
            for triple in kb.triples_with_pred(&pattern.predicate) {
                let mut candidate = binding.clone();
                let subj = BoundValue::Sym(triple.subject.clone());
                let obj = match &triple.object {
                    Object::Number(n) => BoundValue::Num(*n),
                    Object::Symbol(s) => BoundValue::Sym(s.clone()),
                };
                if unify(&pattern.subject, &subj, &mut candidate)
                    && unify(&pattern.object, &obj, &mut candidate)
                {
                    next.push(candidate);
                }
            }
        }
        solutions = next;
        if solutions.is_empty() {
            break;
        }
    }
    if let Some(filter) = &query.filter {
        let mut kept = Vec::new();
        for binding in solutions {
            let Some(BoundValue::Num(n)) = binding.get(&filter.var) else {
                return Err(KbError::UnboundOrderVariable(filter.var.clone()));
            };
            let keep = match filter.op {
                CmpOp::Lt => *n < filter.value,
                CmpOp::Gt => *n > filter.value,
            };
            if keep {
                kept.push(binding);
            }
        }
        solutions = kept;
    }
    if let Some(order) = &query.order {
        if solutions.is_empty() {
            return Ok(solutions);
        }
        let mut keyed = Vec::new();
        for binding in solutions {
            let Some(BoundValue::Num(n)) = binding.get(&order.var) else {
                return Err(KbError::UnboundOrderVariable(order.var.clone()));
            };
            keyed.push((*n, binding));
        }
        let extreme = keyed
            .iter()
            .map(|(n, _)| *n)
            .fold(f64::NAN, |acc, n| match order.dir {
                OrderDir::Desc => f64::max(acc, n),
                OrderDir::Asc => f64::min(acc, n),
            });
        solutions = keyed
            .into_iter()
            .filter(|(n, _)| *n == extreme)
            .map(|(_, b)| b)
            .collect();
    }
    Ok(solutions)
}

/// Distinct answer-variable values, in first-seen order.
pub fn answer_values(query: &ConjunctiveQuery, kb: &Kb) -> Result<Vec<BoundValue>, KbError> {
    let mut out: Vec<BoundValue> = Vec::new();
    for binding in execute_bindings(query, kb)? {
        let value = binding
            .get(&query.answer_var)
            .cloned()
            .ok_or_else(|| KbError::UnboundOrderVariable(query.answer_var.clone()))?;
        if !out.contains(&value) {
            out.push(value);
        }
    }
    Ok(out)
}

/// Execute a query; every answer scores 1.
pub fn execute(query: &ConjunctiveQuery, kb: &Kb) -> Result<AnswerSet, KbError> {
    let mut set = AnswerSet::new();
    for value in answer_values(query, kb)? {
        set.insert(ScoredAnswer::new(value.to_answer(), 1.0));
    }
    Ok(set)
}

/// A seed question paired with its query; entity mentions map entity
/// names to byte spans in the question text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedExample {
    pub question: String,
    pub query: ConjunctiveQuery,
    #[serde(default)]
    pub mentions: BTreeMap<String, (usize, usize)>,
}

/// Rendering data for one predicate (or `pred1/pred2` CVT pair): a phrase
/// with exactly one OBJ slot plus the glue used to coordinate it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateTemplate {
    pub predicate: String,
    pub text: String,
    pub glue: String,
}

impl PredicateTemplate {
    pub fn render(&self, obj_surface: &str) -> String {
        self.text.replacen("OBJ", obj_surface, 1)
    }
}

#[derive(Debug, Default)]
pub struct TemplateTable {
    map: BTreeMap<String, PredicateTemplate>,
}

impl TemplateTable {
    pub fn get(&self, predicate: &str) -> Option<&PredicateTemplate> {
        self.map.get(predicate)
    }

    /// Parse the `pred <TAB> template-with-OBJ <TAB> glue` format.
    pub fn parse(text: &str) -> Result<TemplateTable, KbError> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(KbError::Parse {
                    line: lineno + 1,
                    message: format!("expected 3 tab-separated fields, got {}", parts.len()),
                });
            }
            if parts[1].matches("OBJ").count() != 1 {
                return Err(KbError::Parse {
                    line: lineno + 1,
                    message: "template must contain exactly one OBJ slot".to_string(),
                });
            }
            map.insert(
                parts[0].to_string(),
                PredicateTemplate {
                    predicate: parts[0].to_string(),
                    text: parts[1].to_string(),
                    glue: parts[2].to_string(),
                },
            );
        }
        Ok(TemplateTable { map })
    }

    pub fn load(path: &Path) -> Result<TemplateTable, KbError> {
        TemplateTable::parse(&std::fs::read_to_string(path)?)
    }
}

/// One generated dataset record. `question` is the NL question (the MG
/// question after optional noising); `mg_splits` are token indices into
/// the MG question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub question: String,
    pub mg_question: String,
    pub query: ConjunctiveQuery,
    pub answers: Vec<Answer>,
    pub comp_type: CompType,
    pub mg_splits: MgSplits,
}

/// True iff the normalized answer appears as a contiguous token
/// subsequence of the normalized MG question tokens.
fn leaks_answer(mg_tokens: &[String], answer: &Answer) -> bool {
    let needle: Vec<String> = answer
        .normalized_form()
        .split_whitespace()
        .map(str::to_string)
        .collect();
    if needle.is_empty() {
        return false;
    }
    let hay: Vec<String> = mg_tokens
        .iter()
        .map(|t| crate::comptree::normalize(t))
        .collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

fn any_leak(mg_question: &str, answers: &[Answer]) -> bool {
    let Ok(toks) = tokenize(mg_question) else {
        return true;
    };
    answers.iter().any(|a| leaks_answer(&toks.tokens, a))
}

/// An appendable restriction pattern: either a direct `(?x, pred, obj)`
/// pattern or a CVT pair `(?x, pred1, ?c), (?c, pred2, obj)`.
#[derive(Debug, Clone, PartialEq)]
enum Restriction {
    Direct { pred: String, obj: Object },
    Cvt { pred1: String, pred2: String, obj: Object },
}

impl Restriction {
    fn template_key(&self) -> String {
        match self {
            Restriction::Direct { pred, .. } => pred.clone(),
            Restriction::Cvt { pred1, pred2, .. } => format!("{pred1}/{pred2}"),
        }
    }

    fn obj(&self) -> &Object {
        match self {
            Restriction::Direct { obj, .. } | Restriction::Cvt { obj, .. } => obj,
        }
    }

    /// Entities satisfying the restriction.
    fn denotation(&self, kb: &Kb) -> BTreeSet<String> {
        match self {
            Restriction::Direct { pred, obj } => kb
                .triples_with_pred(pred)
                .filter(|t| &t.object == obj)
                .map(|t| t.subject.clone())
                .collect(),
            Restriction::Cvt { pred1, pred2, obj } => {
                let events: BTreeSet<&str> = kb
                    .triples_with_pred(pred2)
                    .filter(|t| &t.object == obj)
                    .map(|t| t.subject.as_str())
                    .filter(|s| kb.is_cvt(s))
                    .collect();
                kb.triples_with_pred(pred1)
                    .filter(|t| match &t.object {
                        Object::Symbol(s) => events.contains(s.as_str()),
                        Object::Number(_) => false,
                    })
                    .map(|t| t.subject.clone())
                    .collect()
            }
        }
    }

    fn patterns(&self, var: &str, cvt_var: &str) -> Vec<Pattern> {
        let obj_term = match self.obj() {
            Object::Number(n) => PatTerm::Number(*n),
            Object::Symbol(s) => PatTerm::Sym(s.clone()),
        };
        match self {
            Restriction::Direct { pred, .. } => {
                vec![Pattern::new(var, pred.clone(), obj_term)]
            }
            Restriction::Cvt { pred1, pred2, .. } => vec![
                Pattern::new(var, pred1.clone(), PatTerm::var(cvt_var)),
                Pattern::new(cvt_var, pred2.clone(), obj_term),
            ],
        }
    }
}

/// Enumerate every restriction (with an available template) in a fixed
/// deterministic order.
fn all_restrictions(kb: &Kb, templates: &TemplateTable) -> Vec<Restriction> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in &kb.triples {
        if kb.is_cvt(&t.subject) {
            continue;
        }
        match &t.object {
            Object::Symbol(s) if kb.is_cvt(s) => {
                for t2 in &kb.triples {
                    if t2.subject != *s {
                        continue;
                    }
                    let r = Restriction::Cvt {
                        pred1: t.predicate.clone(),
                        pred2: t2.predicate.clone(),
                        obj: t2.object.clone(),
                    };
                    if templates.get(&r.template_key()).is_some()
                        && seen.insert(format!("{r:?}"))
                    {
                        out.push(r);
                    }
                }
            }
            _ => {
                let r = Restriction::Direct {
                    pred: t.predicate.clone(),
                    obj: t.object.clone(),
                };
                if templates.get(&r.template_key()).is_some() && seen.insert(format!("{r:?}")) {
                    out.push(r);
                }
            }
        }
    }
    out
}

fn entity_answers(values: &[BoundValue]) -> Option<BTreeSet<String>> {
    values
        .iter()
        .map(|v| match v {
            BoundValue::Sym(s) => Some(s.clone()),
            BoundValue::Num(_) => None,
        })
        .collect()
}

fn fresh_var(query: &ConjunctiveQuery, base: &str) -> String {
    let used: BTreeSet<&str> = query
        .patterns
        .iter()
        .flat_map(ConjunctiveQuery::pattern_vars)
        .collect();
    if !used.contains(base) {
        return base.to_string();
    }
    (2..)
        .map(|k| format!("{base}{k}"))
        .find(|v| !used.contains(v.as_str()))
        .expect("unbounded search")
}

fn append_clause(seed_question: &str, glue: &str, phrase: &str) -> (String, usize) {
    let seed_tokens = tokenize(seed_question).map(|t| t.len()).unwrap_or(0);
    let mg = format!("{seed_question} {glue} {phrase}");
    (mg, seed_tokens)
}

fn finish_record(
    mg_question: String,
    query: ConjunctiveQuery,
    answers: Vec<Answer>,
    comp_type: CompType,
    mg_splits: MgSplits,
) -> Option<DatasetRecord> {
    if any_leak(&mg_question, &answers) {
        return None;
    }
    Some(DatasetRecord {
        question: mg_question.clone(),
        mg_question,
        query,
        answers,
        comp_type,
        mg_splits,
    })
}

/// Conjunction rule: append a restriction whose denotation cuts the seed
/// denotation to a nonempty strict subset.
pub fn gen_conj(
    seed: &SeedExample,
    kb: &Kb,
    templates: &TemplateTable,
    rng: &mut impl Rng,
) -> Result<Option<DatasetRecord>, KbError> {
    let values = answer_values(&seed.query, kb)?;
    if values.len() < 2 {
        return Ok(None);
    }
    let Some(denotation) = entity_answers(&values) else {
        return Ok(None);
    };
    let mut candidates = Vec::new();
    for r in all_restrictions(kb, templates) {
        let restricted: BTreeSet<String> =
            denotation.intersection(&r.denotation(kb)).cloned().collect();
        if restricted.is_empty() || restricted.len() == denotation.len() {
            continue;
        }
        candidates.push((r, restricted));
    }
    let Some((restriction, restricted)) = candidates.choose(rng).cloned() else {
        return Ok(None);
    };
    let template = templates
        .get(&restriction.template_key())
        .ok_or_else(|| KbError::MissingTemplate(restriction.template_key()))?;
    let mut query = seed.query.clone();
    let cvt_var = fresh_var(&query, "?c");
    query
        .patterns
        .extend(restriction.patterns(&query.answer_var.clone(), &cvt_var));
    let phrase = template.render(&restriction.obj().surface());
    let (mg_question, r) = append_clause(&seed.question, &template.glue, &phrase);
    let answers = restricted.into_iter().map(Answer::text).collect();
    Ok(finish_record(
        mg_question,
        query,
        answers,
        CompType::Conj,
        MgSplits::Conj { r },
    ))
}

/// Per-entity numeric values for a predicate, or None if some entity in
/// the denotation lacks the predicate or has several values.
fn common_numeric_values(
    denotation: &BTreeSet<String>,
    pred: &str,
    kb: &Kb,
) -> Option<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for entity in denotation {
        let values: Vec<f64> = kb
            .triples_with_pred(pred)
            .filter(|t| &t.subject == entity)
            .filter_map(|t| match t.object {
                Object::Number(n) => Some(n),
                _ => None,
            })
            .collect();
        if values.len() != 1 {
            return None;
        }
        out.insert(entity.clone(), values[0]);
    }
    Some(out)
}

fn numeric_predicates(kb: &Kb) -> Vec<String> {
    let mut preds: BTreeSet<String> = BTreeSet::new();
    for t in &kb.triples {
        if matches!(t.object, Object::Number(_)) {
            preds.insert(t.predicate.clone());
        }
    }
    preds.into_iter().collect()
}

/// Superlative rule: order the denotation by a numeric predicate common
/// to all members and keep the unique extreme.
pub fn gen_superlative(
    seed: &SeedExample,
    kb: &Kb,
    templates: &TemplateTable,
    rng: &mut impl Rng,
) -> Result<Option<DatasetRecord>, KbError> {
    let values = answer_values(&seed.query, kb)?;
    if values.len() < 2 {
        return Ok(None);
    }
    let Some(denotation) = entity_answers(&values) else {
        return Ok(None);
    };
    let mut candidates = Vec::new();
    for pred in numeric_predicates(kb) {
        if templates.get(&pred).is_none() {
            continue;
        }
        let Some(by_entity) = common_numeric_values(&denotation, &pred, kb) else {
            continue;
        };
        for dir in [OrderDir::Desc, OrderDir::Asc] {
            let extreme = by_entity
                .values()
                .fold(f64::NAN, |acc, &n| match dir {
                    OrderDir::Desc => f64::max(acc, n),
                    OrderDir::Asc => f64::min(acc, n),
                });
            let winners: Vec<&String> = by_entity
                .iter()
                .filter(|(_, &n)| n == extreme)
                .map(|(e, _)| e)
                .collect();
            // ties make the LIMIT 1 denotation ambiguous — skip
            if winners.len() == 1 {
                candidates.push((pred.clone(), dir, winners[0].clone()));
            }
        }
    }
    let Some((pred, dir, winner)) = candidates.choose(rng).cloned() else {
        return Ok(None);
    };
    let template = templates.get(&pred).expect("filtered above");
    let mut query = seed.query.clone();
    let num_var = fresh_var(&query, "?n");
    query.patterns.push(Pattern::new(
        query.answer_var.clone(),
        pred,
        PatTerm::var(&num_var),
    ));
    query.order = Some(OrderBy {
        var: num_var,
        dir,
    });
    let obj_phrase = match dir {
        OrderDir::Desc => "the largest amount",
        OrderDir::Asc => "the smallest amount",
    };
    let phrase = template.render(obj_phrase);
    let (mg_question, r) = append_clause(&seed.question, &template.glue, &phrase);
    Ok(finish_record(
        mg_question,
        query,
        vec![Answer::text(winner)],
        CompType::Super,
        MgSplits::Conj { r },
    ))
}

/// Comparative rule: filter the denotation by a numeric predicate with a
/// threshold drawn from the gap midpoints, guaranteeing a nonempty strict
/// subset.
pub fn gen_comparative(
    seed: &SeedExample,
    kb: &Kb,
    templates: &TemplateTable,
    rng: &mut impl Rng,
) -> Result<Option<DatasetRecord>, KbError> {
    let values = answer_values(&seed.query, kb)?;
    if values.len() < 2 {
        return Ok(None);
    }
    let Some(denotation) = entity_answers(&values) else {
        return Ok(None);
    };
    let mut candidates = Vec::new();
    for pred in numeric_predicates(kb) {
        if templates.get(&pred).is_none() {
            continue;
        }
        let Some(by_entity) = common_numeric_values(&denotation, &pred, kb) else {
            continue;
        };
        let mut distinct: Vec<f64> = by_entity.values().cloned().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for gap in distinct.windows(2) {
            let midpoint = (gap[0] + gap[1]) / 2.0;
            for op in [CmpOp::Lt, CmpOp::Gt] {
                candidates.push((pred.clone(), op, midpoint));
            }
        }
    }
    let Some((pred, op, threshold)) = candidates.choose(rng).cloned() else {
        return Ok(None);
    };
    let by_entity = common_numeric_values(&denotation, &pred, kb).expect("filtered above");
    let survivors: Vec<Answer> = by_entity
        .iter()
        .filter(|(_, &n)| match op {
            CmpOp::Lt => n < threshold,
            CmpOp::Gt => n > threshold,
        })
        .map(|(e, _)| Answer::text(e.clone()))
        .collect();
    let template = templates.get(&pred).expect("filtered above");
    let mut query = seed.query.clone();
    let num_var = fresh_var(&query, "?n");
    query.patterns.push(Pattern::new(
        query.answer_var.clone(),
        pred.clone(),
        PatTerm::var(&num_var),
    ));
    query.filter = Some(Filter {
        var: num_var,
        op,
        value: threshold,
    });
    let obj_phrase = match op {
        CmpOp::Lt => format!("less than {}", render_number(threshold)),
        CmpOp::Gt => format!("more than {}", render_number(threshold)),
    };
    let phrase = template.render(&obj_phrase);
    let (mg_question, r) = append_clause(&seed.question, &template.glue, &phrase);
    Ok(finish_record(
        mg_question,
        query,
        survivors,
        CompType::Compar,
        MgSplits::Conj { r },
    ))
}

/// Composition rule: replace a mentioned entity `e` with a variable and
/// add a pattern whose denotation is exactly `{e}`. The new query's
/// denotation equals the seed's.
pub fn gen_composition(
    seed: &SeedExample,
    kb: &Kb,
    templates: &TemplateTable,
    rng: &mut impl Rng,
) -> Result<Option<DatasetRecord>, KbError> {
    let answers: Vec<Answer> = answer_values(&seed.query, kb)?
        .iter()
        .map(BoundValue::to_answer)
        .collect();
    if answers.is_empty() {
        return Ok(None);
    }
    let mut candidates = Vec::new();
    for (entity, &(start, end)) in &seed.mentions {
        if seed.question.get(start..end) != Some(entity.as_str()) {
            continue;
        }
        for r in all_restrictions(kb, templates) {
            let denotation = r.denotation(kb);
            // the inner question must denote exactly {entity}, or the
            // substitution would be ambiguous
            if denotation.len() == 1 && denotation.contains(entity) {
                candidates.push((entity.clone(), start, end, r));
            }
        }
    }
    let Some((entity, start, end, restriction)) = candidates.choose(rng).cloned() else {
        return Ok(None);
    };
    let template = templates
        .get(&restriction.template_key())
        .ok_or_else(|| KbError::MissingTemplate(restriction.template_key()))?;
    let phrase = template.render(&restriction.obj().surface());
    let mg_question = format!(
        "{}{}{}",
        &seed.question[..start],
        phrase,
        &seed.question[end..]
    );
    let r1 = match tokenize(seed.question[..start].trim()) {
        Ok(t) => t.len(),
        Err(_) => 0,
    };
    let inserted = tokenize(&phrase).map_err(|_| KbError::MissingTemplate(phrase.clone()))?;
    let r2 = r1 + inserted.len();
    // split bookkeeping must reconstruct the inserted phrase exactly
    let mg_tokens = match tokenize(&mg_question) {
        Ok(t) => t,
        Err(_) => return Ok(None),
    };
    if r2 > mg_tokens.len() || mg_tokens.tokens[r1..r2] != inserted.tokens[..] {
        return Ok(None);
    }
    // rewrite the query: entity -> fresh variable, plus the inner pattern
    let mut query = seed.query.clone();
    let inner_var = fresh_var(&query, "?y");
    let cvt_var = fresh_var(&query, "?c");
    for p in &mut query.patterns {
        let rewrite = |t: &mut PatTerm| {
            if let PatTerm::Sym(s) = t {
                if s == &entity {
                    *t = PatTerm::var(&inner_var);
                }
            }
        };
        rewrite(&mut p.subject);
        rewrite(&mut p.object);
    }
    query
        .patterns
        .extend(restriction.patterns(&inner_var, &cvt_var));
    Ok(finish_record(
        mg_question,
        query,
        answers,
        CompType::Comp,
        MgSplits::Comp { r1, r2 },
    ))
}

/// Synonym table for the noising tool; pairs are bidirectional.
#[derive(Debug, Default, Clone)]
pub struct SynonymTable {
    map: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    /// Parse lines of `word <whitespace> word` pairs.
    pub fn parse(text: &str) -> Result<SynonymTable, KbError> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(KbError::Parse {
                    line: lineno + 1,
                    message: format!("expected 2 fields, got {}", parts.len()),
                });
            }
            let (a, b) = (parts[0].to_lowercase(), parts[1].to_lowercase());
            map.entry(a.clone()).or_default().push(b.clone());
            map.entry(b).or_default().push(a);
        }
        Ok(SynonymTable { map })
    }

    pub fn load(path: &Path) -> Result<SynonymTable, KbError> {
        SynonymTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.map.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseConfig {
    /// Per-token probability of substituting a listed synonym.
    pub synonym_prob: f64,
    /// Per-question probability of rotating the token sequence at a
    /// random split point (segment swap).
    pub swap_prob: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            synonym_prob: 0.0,
            swap_prob: 0.0,
        }
    }
}

/// Perturb an MG question into a synthetic NL question.
pub fn noise_question(
    mg_question: &str,
    synonyms: &SynonymTable,
    config: &NoiseConfig,
    rng: &mut impl Rng,
) -> String {
    let Ok(tq) = tokenize(mg_question) else {
        return mg_question.to_string();
    };
    let mut tokens = tq.tokens;
    for token in &mut tokens {
        if config.synonym_prob > 0.0 && rng.gen::<f64>() < config.synonym_prob {
            if let Some(subs) = synonyms.get(token) {
                if let Some(sub) = subs.choose(rng) {
                    *token = sub.clone();
                }
            }
        }
    }
    if config.swap_prob > 0.0 && tokens.len() >= 2 && rng.gen::<f64>() < config.swap_prob {
        let k = rng.gen_range(1..tokens.len());
        tokens.rotate_left(k);
    }
    tokens.join(" ")
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Total number of records to emit.
    pub count: usize,
    /// Type mix as (comp, conj, super, compar) percentages.
    pub mix: (usize, usize, usize, usize),
    pub noise: NoiseConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            count: 100,
            mix: (45, 45, 5, 5),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenStats {
    pub emitted: BTreeMap<&'static str, usize>,
    pub attempts: usize,
}

/// Generate a dataset honoring the type-mix quotas. Deterministic for a
/// fixed (kb, seeds, templates, rng).
pub fn generate_dataset(
    kb: &Kb,
    seeds: &[SeedExample],
    templates: &TemplateTable,
    synonyms: &SynonymTable,
    config: &GenConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<DatasetRecord>, GenStats), KbError> {
    let (pc, pj, ps, pr) = config.mix;
    let total_pct = pc + pj + ps + pr;
    let quota = |pct: usize| config.count * pct / total_pct.max(1);
    let mut targets = vec![
        (CompType::Comp, quota(pc)),
        (CompType::Conj, quota(pj)),
        (CompType::Super, quota(ps)),
        (CompType::Compar, quota(pr)),
    ];
    // rounding remainder goes to the first type
    let assigned: usize = targets.iter().map(|(_, n)| n).sum();
    targets[0].1 += config.count - assigned;

    let mut out = Vec::new();
    let mut stats = GenStats::default();
    for (comp_type, target) in targets {
        let mut emitted = 0;
        let mut budget = target.saturating_mul(50) + 50;
        while emitted < target && budget > 0 {
            budget -= 1;
            stats.attempts += 1;
            let Some(seed) = seeds.choose(rng) else { break };
            let record = match comp_type {
                CompType::Comp => gen_composition(seed, kb, templates, rng)?,
                CompType::Conj => gen_conj(seed, kb, templates, rng)?,
                CompType::Super => gen_superlative(seed, kb, templates, rng)?,
                CompType::Compar => gen_comparative(seed, kb, templates, rng)?,
            };
            let Some(mut record) = record else { continue };
            record.question = noise_question(&record.mg_question, synonyms, &config.noise, rng);
            out.push(record);
            emitted += 1;
        }
        *stats.emitted.entry(comp_type.as_str()).or_default() += emitted;
    }
    Ok((out, stats))
}

/// Canonical JSON Lines serialization of a dataset.
pub fn dataset_to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(r).expect("dataset record serializes")
        );
    }
    out
}

pub fn dataset_from_jsonl(text: &str) -> Result<Vec<DatasetRecord>, KbError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| KbError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Load seeds from a JSON Lines file.
pub fn seeds_from_jsonl(text: &str) -> Result<Vec<SeedExample>, KbError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| KbError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
