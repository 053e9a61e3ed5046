//! Taxonomy-grounded crosswalk analysis of policy document pairs.
//!
//! The pipeline extracts activity items from each document, maps them onto a
//! shared aspect taxonomy, asks one or more language models for per-aspect
//! summaries, diffs and 0–5 similarity scores, validates every structured
//! response, and computes cross-model stability and human-agreement
//! statistics over the resulting score tensor.

pub mod analytics;
pub mod corpus;
pub mod crosswalk;
pub mod diagnostics;
pub mod extraction;
pub mod gateway;
pub mod prompt;
pub mod reporting;
pub mod synthetic;
pub mod taxonomy;
