//! Rewrite-driven optimizer for map/zip/reduce array programs over strided views.

pub mod ast;
pub mod cli;
pub mod enumerate;
pub mod exec;
pub mod layout;
pub mod lower;
pub mod rewrite;
