#![allow(dead_code)]

pub mod lifecycle;
pub mod scenario;
pub mod world;
