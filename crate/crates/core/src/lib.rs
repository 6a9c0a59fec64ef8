//! Hierarchical placement delivery arrays: constructions and verifiers,
//! execution of the induced two-layer coded caching schemes over prime
//! fields (with or without one-time-pad security and demand privacy),
//! session simulation with exact load measurement, exhaustive
//! mutual-information audits at desk scale, and closed-form performance
//! analysis with baseline comparisons.

pub mod analysis;
pub mod cli;
pub mod field;
pub mod hpda;
pub mod pda;
pub mod scheme;
pub mod sim;
