//! Support library of the `vpt` binary: reference oracles and the embedded
//! selftest suites. The acceptance tests reuse these.

pub mod oracle;
pub mod selftest;
