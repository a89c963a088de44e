//! Discovery workbench engine: data model, knowledge base, solvers, triage,
//! candidate generation and risk assessment.

pub mod filter;
pub mod generator;
pub mod id;
pub mod ingest;
pub mod kara;
pub mod model;
pub mod optim;
pub mod sme;
pub mod store;
pub mod triage;
pub mod workbench;
