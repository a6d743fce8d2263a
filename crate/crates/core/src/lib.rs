pub mod process;
pub mod flow;
pub mod data;
pub mod model;
pub mod tasks;
pub mod checkpoint;
pub mod config;
pub mod image;
pub mod selftest;
