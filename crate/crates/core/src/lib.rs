//! Oracle-guided soft shielding for chess move selection.

pub mod chess;
pub mod eval;
pub mod ingest;
pub mod oracle;
pub mod learning;
pub mod models;
pub mod selection;
