//! Command-line pipelines around `modal_sos`: simulate modal data, update a
//! shear-frame model, run seeded multistart comparisons and regenerate the
//! built-in reference cases.

pub mod commands;
pub mod input;
pub mod output;
pub mod reproduce;
