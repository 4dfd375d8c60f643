//! Core of the AI IQ evaluation harness: test scales and their definition
//! language, the General / Service / Value IQ scoring engine, evaluation
//! sessions, system-under-test adapters, reference ranking data and
//! reports.

pub mod adapters;
pub mod bundled;
pub mod dsl;
pub mod error;
mod fsutil;
pub mod scale;
pub mod reference;
pub mod report;
pub mod scoring;
pub mod session;
pub mod subject;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod time;
pub mod workspace;

pub use error::{Error, ErrorCode, Result};
