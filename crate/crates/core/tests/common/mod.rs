#![allow(dead_code)]

pub mod solar_oracle;
pub mod synthetic;
