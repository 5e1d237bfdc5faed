// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod graph;
pub mod costs;
pub mod dynamics;
pub mod schedulers;
pub mod certificates;
pub mod exec;
pub mod diagnostics;
pub mod scenario;
pub mod sweep;
