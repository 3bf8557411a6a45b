//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod clinical;
pub mod filters;
pub mod hlq;
pub mod metrics;
pub mod texture;
