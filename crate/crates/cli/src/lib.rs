//! Model files, pipeline orchestration and report rendering for the
//! `antifield` command-line tool.

pub mod model_file;
pub mod pipeline;
pub mod report;
