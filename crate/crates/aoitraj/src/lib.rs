//! File formats, pipeline commands and the command-line front end.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;
pub mod pipeline;
