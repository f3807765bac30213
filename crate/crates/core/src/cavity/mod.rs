pub mod core;
pub mod global;
pub mod histogram;
pub mod local;
pub mod population;
