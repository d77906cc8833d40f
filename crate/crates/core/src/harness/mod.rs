//! Verification and benchmarking infrastructure shared by the CLI and the
//! test suites.

pub mod generate;
pub mod io;
pub mod agd;
pub mod newton;
pub mod derivcheck;
pub mod propcheck;
pub mod bench;
