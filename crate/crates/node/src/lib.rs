pub mod acs;
pub mod app;
pub mod auth;
pub mod broker;
pub mod client;
pub mod ncap;
pub mod service;
pub mod transport;
