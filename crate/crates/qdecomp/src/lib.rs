//! Answering complex questions by decomposing them into simple sub-questions.
//!
//! The pipeline: a complex question is decoded into a short program
//! (`SimpQA`, `Comp i j`, or `Conj i j`), the program is compiled into a
//! computation tree whose leaves are simple questions, the tree is evaluated
//! against a pluggable QA backend, and the decomposed answer competes with
//! the whole-question answer by backend confidence.
//!
//! Supporting machinery: a synthetic dataset generator over an in-memory
//! triple store, alignment-based noisy supervision for training, a pointer
//! network decomposer with a hand-rolled reverse-mode tape, and an
//! evaluation harness.

pub mod align;
pub mod backend;
pub mod comptree;
pub mod decomp;
pub mod eval;
pub mod kbgen;
pub mod pipeline;
pub mod ptrnet;

pub use backend::QaBackend;
pub use comptree::{Answer, AnswerSet, ComputationNode, ScoredAnswer};
pub use decomp::{DecompositionProgram, TokenizedQuestion};
