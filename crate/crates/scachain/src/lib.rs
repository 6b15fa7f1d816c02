//! Batch pipeline that turns cellular-protocol specification text into
//! structured state-condition-action (SCA) nodes, links the nodes into
//! function chains, sweeps every chain node against a security-property ×
//! attack-action matrix, and synthesizes vulnerability test cases.
//!
//! Stage map:
//!
//! - [`corpus`]: sanitation, clause segmentation, cross-reference detection
//! - [`sca`]: the SCA node model, canonicalization, extraction backends
//! - [`backends`]: inference-service client, response cache, judge interfaces
//! - [`chains`]: connection strategies, candidate scoping, chain assembly
//! - [`oracle`]: the security-property sweep
//! - [`vulntester`]: test-case synthesis from recorded violations
//! - [`metrics`]: completeness, field-accuracy, and ROUGE reports
//! - [`pipeline`]: artifact-to-artifact orchestration behind the CLI
//!
//! Everything downstream of extraction is deterministic given a frozen
//! response cache: re-running any stage with identical inputs reproduces its
//! artifacts byte for byte, independent of worker count.

pub mod backends;
pub mod chains;
pub mod config;
pub mod corpus;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod sca;
pub mod store;
pub mod vulntester;
