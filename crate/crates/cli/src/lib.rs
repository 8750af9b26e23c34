pub mod client;
pub mod config;
pub mod pipeline;
pub mod service;
pub mod commands;
