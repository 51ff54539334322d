//! Schema-driven synthesis of task-oriented dialogue turns with
//! dialogue-state annotations, plus an in-context-learning harness that
//! scores dialogue state tracking by joint goal accuracy.
//!
//! The generation pipeline runs in four stages:
//!
//! 1. [`structure_synth`] samples a coherent system/user intent pair from the
//!    abstract dialogue model in [`dialogue_model`], an accumulated history
//!    state, the acts of both sides, and the resulting turn state.
//! 2. [`template_engine`] renders every act through a domain-agnostic
//!    template, so each annotated value appears verbatim in the utterance.
//! 3. [`llm_refiner`] optionally rewrites the template utterances with an
//!    LLM backend (mock, scripted replay or a remote chat-completion API).
//! 4. [`corpus_composer`] mixes flow categories per domain and persists the
//!    result as line-delimited JSON with a manifest header.
//!
//! [`icl_evaluator`] consumes such corpora as exemplar pools.

pub mod corpus_composer;
pub mod dialogue_model;
pub mod icl_evaluator;
pub mod llm_refiner;
pub mod schema;
pub mod seed;
pub mod state;
pub mod structure_synth;
pub mod template_engine;

pub use dialogue_model::{FlowCategory, Intent, Side, SystemIntent, UserIntent};
pub use schema::{Schema, SlotValue};
pub use state::{DialogueState, SlotKey, TurnDelta};

/// Version string written into every manifest.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
