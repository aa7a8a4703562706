pub mod bench;
pub mod data;
pub mod model;
pub mod mpc;
pub mod plant;
pub mod rl;
