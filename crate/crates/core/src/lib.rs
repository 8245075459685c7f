#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod calib;
pub mod geom;
pub mod imusim;
pub mod session;
pub mod task;
pub mod teleop;
