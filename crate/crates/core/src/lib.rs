//! Collaborative IBIS dialogue mapping.
//!
//! A live transcript is cut into turns ([`segmenter`]), each turn is
//! classified and annotated by a language model ([`pipeline`]), and the
//! resulting nodes land in a shared map ([`engine`]) that several users edit
//! at once through a session server ([`session`]).

pub mod canonical;
pub mod engine;
pub mod pipeline;
pub mod segmenter;
pub mod types;
pub mod session;
pub mod transcript;
pub mod config;
pub mod server;
pub mod cli;
