//! Problem generation, file formats, reports and the invariant suite.

pub mod generate;
pub mod io;
pub mod report;
pub mod verify;
