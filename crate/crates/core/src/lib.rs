pub mod grammar;
pub mod harness;
pub mod metrics;
pub mod text;
