//! Host-side companion to `tierledger-core`: the on-disk log directory, the
//! scenario runner behind `tierledger run`, and a random workload generator
//! for stress and replay testing.

pub mod logdir;
pub mod scenario;
pub mod workload;
