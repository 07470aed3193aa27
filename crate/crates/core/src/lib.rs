//! Typed, verifier-gated knowledge-base policies.
//!
//! A policy is stored as a [`KnowledgeBase`]: typed entries partitioned into
//! the source layer `S0` and the editable layers `L0`..`L7`. The only way to
//! change a KB is a [`KbDiff`] applied by [`apply_diff`]; candidates are kept
//! only when the verifier gate accepts them ([`accept`]). Accepted KBs are
//! deployed through the deterministic [`Executor`], which records a
//! [`DecisionTrace`] for every emitted action.
//!
//! The crate also ships a seed-generated household text environment
//! ([`env`]) used for banks, gates, ablations and the cold-start replay.

#![forbid(unsafe_code)]

pub mod ablate;
pub mod cond;
pub mod diff;
pub mod edit;
pub mod env;
pub mod exec;
pub mod fixtures;
pub mod fuzz;
pub mod hash;
pub mod ident;
pub mod kb;
pub mod layer;
pub mod ledger;
pub mod value;
pub mod verify;

pub use ablate::{ablate_layer, AblationRow, UnknownVariant};
pub use cond::{Comparator, ConditionExpr, Literal};
pub use diff::{
    admission_matrix, apply_diff, parse_diff, validate_diff, ApplyAudit, AuditOutcome, KbDiff, Op,
    Rejection, RejectionKind, SchemaError,
};
pub use edit::{
    audit_run, editor_calls, record_budget, run_loop, summarize, BudgetTable, Editor, EditorError,
    EditorRequest, EvidenceSummary, ExternalEditor, LoopConfig, NullEditor, Proposal, RunManifest,
    ScriptedEditor,
};
pub use env::{
    generate_bank, household_contract, Family, HouseholdEnv, InterfaceContract, TaskBank, TaskSpec,
};
pub use exec::{
    run_episode, DecisionTrace, Environment, Executor, GroundedState, Observation, Role,
    TrajectoryRecord,
};
pub use fuzz::{fuzz_apply, FuzzConfig, FuzzEditor, FuzzReport};
pub use hash::sha256_hex;
pub use kb::{
    canonical_serialize, parse_kb, resolve_path, resolve_references, type_check_entry,
    type_check_kb, CheckResult, Diagnostic, EntryContent, KbEntry, KnowledgeBase, NodeLocation,
    ParseError, PathError, ReferenceReport,
};
pub use layer::LayerId;
pub use ledger::{verify_chain, Ledger, LedgerError};
pub use value::Value;
pub use verify::{
    accept, evaluate_bank, smoke_apply, smoke_execute, BankMetrics, GateDecision, HealthVector,
    Verdict,
};
