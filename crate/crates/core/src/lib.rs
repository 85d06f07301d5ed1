// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod control;
pub mod dynamics;
pub mod gait;
pub mod kinematics;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sim;
pub mod spatial;
