//! Test support: seeded random generators for schemas, rules and facts, and
//! a brute-force closure oracle that shares no code with the engine's
//! matcher.

pub mod gen;
pub mod oracle;

pub use gen::{Instance, InstanceConfig};
