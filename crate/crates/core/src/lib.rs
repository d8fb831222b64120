// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod ids;
pub mod model;
pub mod time;
pub mod vim;
pub mod rf;
pub mod monitor;
pub mod queue;
pub mod planner;
pub mod engine;
pub mod scenario;
pub mod control;
pub mod sim;
pub mod api;
