//! Learning STRIPS action models from natural-language observation traces.
//!
//! The pipeline maps each observation sentence to a proposition with a
//! variational topic model, learns one candidate domain per plan with a
//! weighted MAX-SAT encoding, reconciles the candidates by a rank-one
//! consensus fit, and alternates extractor retraining with relearning.

pub mod cli;
pub mod config;
pub mod consensus;
pub mod corpus;
pub mod emloop;
pub mod encoder;
pub mod eval;
pub mod extractor;
pub mod initializer;
pub mod maxsat;
pub mod nn;
pub mod model;
pub mod satlearn;
pub mod pddl;
pub mod seed;
pub mod text;

pub use model::{
    apply, ground, topical_of, ActionHeader, ActionSchema, Domain, GroundAction, LiftedAtom,
    ObjectRef, Param, Problem, Proposition, State, TopicalProposition, TypeName,
};
