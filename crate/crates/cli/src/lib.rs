pub mod bundle;
pub mod commands;
pub mod error;
pub mod quat;
