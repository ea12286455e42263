//! Approximate realization of stationary processes by hidden Markov models of
//! assigned size.
//!
//! The target process enters through its pseudo-Hankel matrix `H_nn`, whose
//! entries are the probabilities of all length-`2n` strings split into a
//! length-`n` prefix and suffix. A two-step constrained NMF in I-divergence
//! first factors `H ~ Pi Gamma` at rank `N` ([`nmf::step1_factorize`]) and
//! then extracts the parameter matrices `M(y)` from one of the factors
//! ([`nmf::step2_gamma`] or [`nmf::step2_pi`]). [`pipeline::reduce`] runs the
//! whole chain; [`experiments`] batches it over seeds.

pub mod error;
pub mod examples;
pub mod experiments;
pub mod hankel;
pub mod hmm;
pub mod io;
pub mod lex;
pub mod nmf;
pub mod pipeline;

pub use error::{Error, Result};
pub use hmm::{model_from_ab, stationary_vector, string_probability, AbSpec, HmmModel};
