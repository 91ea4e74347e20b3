//! Library side of the `kpflow` experiment runner.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod table;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
