//! Reference oracles and fixtures for the `topic-compose` test suites.
//!
//! Everything here is deliberately naive (exhaustive enumeration, grid search,
//! vertex enumeration) and shares no code with the library under test.

pub mod fixtures;
pub mod oracle;
