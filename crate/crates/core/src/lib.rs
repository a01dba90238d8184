//! Firmware digital twin construction and security analysis.

pub mod binscan;
pub mod digest;
pub mod extractor;
pub mod model;
pub mod pipeline;
pub mod sca;
pub mod verifier;
pub mod version;
pub mod vuln;
