//! Execution: reference interpretation, naive oracles, the loop-nest VM, the
//! cache simulator and wall-clock timing.

mod cache;
mod data;
mod element;
mod eval;
mod oracle;
mod vm;

pub use cache::{array_bases, simulate, simulate_nest, Cache, CacheConfig, CacheError, CacheStats, Counts, SimError, ARRAY_ALIGN};
pub use data::{checksum, random_inputs, seed_from_env};
pub use element::{fill, Element, DEFAULT_SEED};
pub use eval::{evaluate, EvalError, Inputs};
pub use oracle::{oracle_dot, oracle_matmul, oracle_matvec};
pub use vm::{compile, run, time_variant, trace_accesses, Access, ExecError, Executable, Program};
