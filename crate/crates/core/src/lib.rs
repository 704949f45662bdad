#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons deliberately reject NaN

pub mod diag;
pub mod error;
pub mod matrix;
pub mod mps;
pub mod plot;
pub mod verify;
pub mod capacity;
pub mod channel;
pub mod cli;
pub mod closed_form;
